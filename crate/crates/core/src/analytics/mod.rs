pub mod bounds;
pub mod empirical;
pub mod exact;
pub mod oracle;
pub mod printed;
pub mod tuples;

fn main() {
    std::process::exit(cellfree::experiments::cli::cli_main(std::env::args_os()));
}

//! Sums over tuples of pairwise-distinct indices.
//!
//! `Σ_{m_1,…,m_r distinct} Π_i f_i(m_i)` is evaluated in O(M·B_r) through
//! Möbius inversion on the partition lattice instead of O(M^r) loops.

/// All set partitions of `{0, …, r−1}`.
pub fn set_partitions(r: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut current: Vec<Vec<usize>> = Vec::new();
    fn rec(i: usize, r: usize, current: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == r {
            out.push(current.clone());
            return;
        }
        for b in 0..current.len() {
            current[b].push(i);
            rec(i + 1, r, current, out);
            current[b].pop();
        }
        current.push(vec![i]);
        rec(i + 1, r, current, out);
        current.pop();
    }
    rec(0, r, &mut current, &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// `Σ_{distinct m_1..m_r} Π_i f[i][m_i]`; all rows of `f` have length M.
pub fn distinct_sum(f: &[&[f64]]) -> f64 {
    let r = f.len();
    if r == 0 {
        return 1.0;
    }
    let m = f[0].len();
    set_partitions(r)
        .iter()
        .map(|p| {
            let weight: f64 = p
                .iter()
                .map(|b| if (b.len() - 1) % 2 == 0 { 1.0 } else { -1.0 } * factorial(b.len() - 1))
                .product();
            let prod: f64 = p.iter().map(|b| (0..m).map(|j| b.iter().map(|&i| f[i][j]).product::<f64>()).sum::<f64>()).product();
            weight * prod
        })
        .sum()
}

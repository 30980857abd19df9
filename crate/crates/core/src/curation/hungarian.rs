//! Maximum-weight bipartite assignment (Hungarian method with potentials).

/// Assigns each row at most one column and each column at most one row so
/// that the total weight is maximal. Returns the column chosen for every row;
/// when there are more rows than columns some rows get `None`.
///
/// All rows must have the same length. Weights must be finite.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| weights[i][j]).collect()).collect();
        let mut out = vec![None; rows];
        for (j, i) in max_weight_assignment(&t).into_iter().enumerate() {
            if let Some(i) = i {
                out[i] = Some(j);
            }
        }
        return out;
    }

    // rows ≤ cols: minimise -w with 1-based potentials
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total(w: &[Vec<f64>], a: &[Option<usize>]) -> f64 {
        a.iter().enumerate().filter_map(|(i, j)| j.map(|j| w[i][j])).sum()
    }

    /// Best total over all partial injections rows → cols.
    fn brute(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == w.len() {
            return 0.0;
        }
        let mut best = brute(w, row + 1, used);
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(w[row][j] + brute(w, row + 1, used));
                used[j] = false;
            }
        }
        best
    }

    #[test]
    fn picks_the_anti_diagonal() {
        let w = vec![vec![1.0, 5.0], vec![4.0, 1.0]];
        assert_eq!(max_weight_assignment(&w), vec![Some(1), Some(0)]);
    }

    #[test]
    fn empty_inputs() {
        assert!(max_weight_assignment(&[]).is_empty());
        assert_eq!(max_weight_assignment(&[vec![], vec![]]), vec![None, None]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
            let a = max_weight_assignment(&w);
            let mut seen = std::collections::BTreeSet::new();
            for j in a.iter().flatten() {
                prop_assert!(seen.insert(*j));
            }
            prop_assert_eq!(a.iter().flatten().count(), rows.min(cols));
            let best = brute(&w, 0, &mut vec![false; cols]);
            prop_assert!((total(&w, &a) - best).abs() < 1e-12);
        }
    }
}

//! Dense linear assignment (Hungarian method with potentials, `O(M³)`).

/// Minimum-cost perfect matching for a row-major `m × m` cost matrix.
/// Returns `(assignment, total)` where row `i` is matched to column
/// `assignment[i]`.
pub fn solve_assignment(cost: &[f64], m: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), m * m, "cost matrix must be square");
    if m == 0 {
        return (Vec::new(), 0.0);
    }
    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut min_to = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for row in 1..=m {
        owner[0] = row;
        let mut col0 = 0;
        min_to.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = col0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    col1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; m];
    for j in 1..=m {
        assignment[owner[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
    (assignment, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(cost: &[f64], m: usize) -> f64 {
        fn go(cost: &[f64], m: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == m {
                *best = best.min(acc);
                return;
            }
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    go(cost, m, row + 1, used, acc + cost[row * m + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        go(cost, m, 0, &mut vec![false; m], 0.0, &mut best);
        best
    }

    #[test]
    fn small_matrix() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let (a, total) = solve_assignment(&cost, 3);
        assert_eq!(total, 5.0);
        let mut seen = a.clone();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    proptest! {
        #[test]
        fn matches_enumeration(m in 1usize..7, seed in proptest::collection::vec(0.0f64..10.0, 36)) {
            let cost: Vec<f64> = seed[..m * m].to_vec();
            let (_, total) = solve_assignment(&cost, m);
            prop_assert!((total - brute_force(&cost, m)).abs() < 1e-10);
        }
    }
}

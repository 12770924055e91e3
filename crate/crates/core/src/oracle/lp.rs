//! Dense phase-one simplex deciding feasibility of `{v ≥ 0 : A·v ≤ b}`.
//!
//! Small and self-contained on purpose: the stability-region instances stay
//! under a few dozen variables and rows, and keeping the routine local keeps
//! the oracle independent of the code it checks. Rows with a negative
//! right-hand side get an artificial variable; the artificial mass is driven
//! to zero with Bland's rule, so the iteration cannot cycle.

const TOL: f64 = 1e-9;

pub(crate) fn feasible(rows: &[Vec<f64>], rhs: &[f64]) -> bool {
    let m = rows.len();
    if m == 0 {
        return true;
    }
    let nv = rows[0].len();
    debug_assert!(rows.iter().all(|r| r.len() == nv));
    debug_assert_eq!(rhs.len(), m);

    let negated: Vec<bool> = rhs.iter().map(|&b| b < 0.0).collect();
    let n_art = negated.iter().filter(|&&x| x).count();
    if n_art == 0 {
        return true; // v = 0 satisfies every row
    }

    // Columns: nv structural vars, m slacks, n_art artificials, rhs.
    let n_cols = nv + m + n_art + 1;
    let rhs_col = n_cols - 1;
    let mut t = vec![vec![0.0; n_cols]; m];
    let mut basis = vec![0usize; m];
    let mut next_art = nv + m;
    for i in 0..m {
        let sign = if negated[i] { -1.0 } else { 1.0 };
        for j in 0..nv {
            t[i][j] = sign * rows[i][j];
        }
        t[i][nv + i] = sign;
        t[i][rhs_col] = sign * rhs[i];
        if negated[i] {
            t[i][next_art] = 1.0;
            basis[i] = next_art;
            next_art += 1;
        } else {
            basis[i] = nv + i;
        }
    }

    // Minimize the artificial mass: the reduced-cost row is the sum of the
    // rows holding an artificial, tracked over structural and slack columns.
    let mut obj = vec![0.0; n_cols];
    for i in 0..m {
        if negated[i] {
            for j in 0..n_cols {
                obj[j] += t[i][j];
            }
        }
    }

    // Artificials never re-enter; only the first nv + m columns are eligible.
    let eligible = nv + m;
    let max_pivots = 200 * (m + nv + 2);
    for _ in 0..max_pivots {
        if obj[rhs_col] <= TOL {
            return true;
        }
        // Bland: smallest eligible column with a positive reduced cost.
        let Some(enter) = (0..eligible).find(|&j| obj[j] > TOL) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            if t[i][enter] > TOL {
                let ratio = t[i][rhs_col] / t[i][enter];
                let better = match leave {
                    None => true,
                    Some(li) => {
                        ratio < best_ratio - TOL
                            || (ratio < best_ratio + TOL && basis[i] < basis[li])
                    }
                };
                if better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(li) = leave else {
            break; // unbounded direction cannot reduce the artificial mass
        };

        let pivot = t[li][enter];
        for value in &mut t[li] {
            *value /= pivot;
        }
        let pivot_row = t[li].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != li {
                let factor = row[enter];
                if factor != 0.0 {
                    for (value, &p) in row.iter_mut().zip(&pivot_row) {
                        *value -= factor * p;
                    }
                }
            }
        }
        let factor = obj[enter];
        if factor != 0.0 {
            for (value, &p) in obj.iter_mut().zip(&pivot_row) {
                *value -= factor * p;
            }
        }
        basis[li] = enter;
    }
    obj[rhs_col] <= 1e-7 * (1.0 + rhs.iter().map(|b| b.abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_systems() {
        assert!(feasible(&[], &[]));
        // v1 <= 5 with v >= 0: origin works.
        assert!(feasible(&[vec![1.0]], &[5.0]));
        // -v1 <= -3  (v1 >= 3), v1 <= 5.
        assert!(feasible(&[vec![-1.0], vec![1.0]], &[-3.0, 5.0]));
        // v1 >= 3 and v1 <= 2: empty.
        assert!(!feasible(&[vec![-1.0], vec![1.0]], &[-3.0, 2.0]));
    }

    #[test]
    fn two_variable_systems() {
        // v1 + v2 >= 1, v1 <= 0.4, v2 <= 0.7: feasible.
        assert!(feasible(
            &[vec![-1.0, -1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            &[-1.0, 0.4, 0.7]
        ));
        // v1 + v2 >= 1.2 with the same caps: infeasible.
        assert!(!feasible(
            &[vec![-1.0, -1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            &[-1.2, 0.4, 0.7]
        ));
    }

    #[test]
    fn boundary_equalities_are_feasible() {
        // v1 >= 1 and v1 <= 1: the single point v1 = 1.
        assert!(feasible(&[vec![-1.0], vec![1.0]], &[-1.0, 1.0]));
    }

    #[test]
    fn unreachable_demand_row() {
        // 0·v >= 2: no variable can help.
        assert!(!feasible(&[vec![0.0, 0.0]], &[-2.0]));
    }

    #[test]
    fn coupled_shares() {
        // x <= 2a, y <= 3b, a + b <= 1, x >= 1, y >= 1.5  -> a>=0.5, b>=0.5 works.
        let rows = vec![
            vec![1.0, 0.0, -2.0, 0.0],
            vec![0.0, 1.0, 0.0, -3.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![-1.0, 0.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0, 0.0],
        ];
        assert!(feasible(&rows, &[0.0, 0.0, 1.0, -1.0, -1.5]));
        // Demand y >= 2 pushes b beyond its share: 1/2 + 2/3 > 1.
        assert!(!feasible(&rows, &[0.0, 0.0, 1.0, -1.0, -2.0]));
    }

    #[test]
    fn random_systems_with_a_planted_witness_are_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..500 {
            let nv = 1 + rng.random_range(0..6);
            let m = 1 + rng.random_range(0..10);
            // Plant a non-negative witness and give every row enough slack
            // to hold at it; the system must be reported feasible.
            let witness: Vec<f64> = (0..nv).map(|_| rng.random::<f64>() * 5.0).collect();
            let mut rows = Vec::with_capacity(m);
            let mut rhs = Vec::with_capacity(m);
            for _ in 0..m {
                let row: Vec<f64> = (0..nv).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                let lhs: f64 = row.iter().zip(&witness).map(|(a, v)| a * v).sum();
                rhs.push(lhs + rng.random::<f64>() * 3.0);
                rows.push(row);
            }
            assert!(
                feasible(&rows, &rhs),
                "witness {witness:?} rows {rows:?} rhs {rhs:?}"
            );
        }
    }

    #[test]
    fn random_systems_with_contradictory_rows_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..500 {
            let nv = 1 + rng.random_range(0..6);
            let m = rng.random_range(0..8);
            // a·v <= b_low and a·v >= b_high with b_high > b_low is empty for
            // any v; extra random rows can only restrict further.
            let a: Vec<f64> = (0..nv).map(|_| rng.random::<f64>() * 3.0).collect();
            let b_low = rng.random::<f64>() * 2.0;
            let b_high = b_low + 0.5 + rng.random::<f64>() * 2.0;
            let mut rows = vec![a.clone(), a.iter().map(|v| -v).collect()];
            let mut rhs = vec![b_low, -b_high];
            for _ in 0..m {
                let row: Vec<f64> = (0..nv).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                rows.push(row);
                rhs.push(rng.random::<f64>() * 4.0 - 1.0);
            }
            assert!(!feasible(&rows, &rhs), "rows {rows:?} rhs {rhs:?}");
        }
    }

    #[test]
    fn feasibility_is_monotone_in_the_right_hand_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..300 {
            let nv = 1 + rng.random_range(0..4);
            let m = 2 + rng.random_range(0..6);
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..nv).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect();
            let rhs: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            if feasible(&rows, &rhs) {
                let relaxed: Vec<f64> = rhs.iter().map(|b| b + rng.random::<f64>()).collect();
                assert!(feasible(&rows, &relaxed));
            } else {
                let tightened: Vec<f64> = rhs.iter().map(|b| b - rng.random::<f64>()).collect();
                assert!(!feasible(&rows, &tightened));
            }
        }
    }
}

//! Exact unregularized transport via the transportation simplex.
//!
//! The basis is kept as a spanning tree over the `n + m` row/column nodes
//! (exactly `n + m - 1` basic cells, degenerate zeros included). Each pivot
//! prices the non-basic cells with the tree potentials and pushes flow around
//! the unique cycle closed by the entering cell.

use std::collections::VecDeque;

use ndarray::Array2;

use super::{Categorical, CostMatrix, Coupling, OtError};

/// Largest `n_s * n_t` accepted by [`exact_ot_lp`].
pub const LP_MAX_ENTRIES: usize = 10_000;

/// Consecutive zero-length pivots before switching to first-improving pricing.
const DEGENERATE_RUN: usize = 64;

/// Globally optimal plan for the unregularized transport problem.
pub fn exact_ot_lp(mu: &Categorical, nu: &Categorical, cost: &CostMatrix) -> Result<Coupling, OtError> {
    let (n, m) = (mu.len(), nu.len());
    if cost.rows() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: cost.rows() });
    }
    if cost.cols() != m {
        return Err(OtError::DimensionMismatch { expected: m, got: cost.cols() });
    }
    if n * m > LP_MAX_ENTRIES {
        return Err(OtError::TooLarge { entries: n * m, cap: LP_MAX_ENTRIES });
    }

    let rows: Vec<usize> = mu.support(0.0);
    let cols: Vec<usize> = nu.support(0.0);
    let a: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
    let mut b: Vec<f64> = cols.iter().map(|&j| nu.weights()[j]).collect();
    // Balance the two totals exactly; they agree to within WEIGHT_SUM_TOL already.
    let scale = a.iter().sum::<f64>() / b.iter().sum::<f64>();
    b.iter_mut().for_each(|x| *x *= scale);

    let sub = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| cost.get(rows[i], cols[j]));
    let flow = transport_simplex(&a, &b, &sub)?;

    let mut plan = Array2::zeros((n, m));
    for (si, &i) in rows.iter().enumerate() {
        for (sj, &j) in cols.iter().enumerate() {
            plan[[i, j]] = flow[[si, sj]];
        }
    }
    Ok(Coupling::from_plan(plan, cost))
}

/// Optimal cost for strictly positive, balanced marginals.
pub(crate) fn lp_cost(a: &[f64], b: &[f64], c: &Array2<f64>) -> Result<f64, OtError> {
    let flow = transport_simplex(a, b, c)?;
    Ok(flow.iter().zip(c.iter()).map(|(f, x)| f * x).sum())
}

fn transport_simplex(a: &[f64], b: &[f64], c: &Array2<f64>) -> Result<Array2<f64>, OtError> {
    let (n, m) = c.dim();
    let mut flow = Array2::zeros((n, m));
    if n == 1 || m == 1 {
        for i in 0..n {
            for j in 0..m {
                flow[[i, j]] = if n == 1 { b[j] } else { a[i] };
            }
        }
        return Ok(flow);
    }

    let mut basis = northwest_corner(a, b, &mut flow);
    let mut is_basic = Array2::from_elem((n, m), false);
    for &(i, j) in &basis {
        is_basic[[i, j]] = true;
    }

    let cmax = c.iter().copied().fold(0.0, f64::max);
    let tol = 1e-11 * (1.0 + cmax);
    let max_pivots = 20 * n * m + 1000;
    let mut degenerate_run = 0usize;
    let nodes = n + m;
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
    let mut pot = vec![0.0; nodes];
    let mut seen = vec![false; nodes];
    let mut parent: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); nodes];
    let mut queue = VecDeque::with_capacity(nodes);

    for _ in 0..max_pivots {
        // Tree adjacency: row i is node i, column j is node n + j.
        adj.iter_mut().for_each(Vec::clear);
        for (k, &(i, j)) in basis.iter().enumerate() {
            adj[i].push((n + j, k));
            adj[n + j].push((i, k));
        }

        // Potentials u_i + v_j = c_ij on basic cells.
        seen.iter_mut().for_each(|s| *s = false);
        pot[0] = 0.0;
        seen[0] = true;
        queue.clear();
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    let (i, j) = basis[k];
                    pot[next] = c[[i, j]] - pot[node];
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }

        // Pricing.
        let bland = degenerate_run >= DEGENERATE_RUN;
        let mut entering = None;
        let mut best = -tol;
        'price: for i in 0..n {
            for j in 0..m {
                if is_basic[[i, j]] {
                    continue;
                }
                let reduced = c[[i, j]] - pot[i] - pot[n + j];
                if reduced < best {
                    entering = Some((i, j));
                    if bland {
                        break 'price;
                    }
                    best = reduced;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok(flow);
        };

        // Tree path from row ei to column ej closes the cycle.
        seen.iter_mut().for_each(|s| *s = false);
        seen[ei] = true;
        queue.clear();
        queue.push_back(ei);
        let target = n + ej;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = (node, k);
                    queue.push_back(next);
                }
            }
        }
        // Walk back from the column end; signs alternate starting with "-".
        let mut cycle: Vec<(usize, bool)> = Vec::new();
        let mut node = target;
        let mut minus = true;
        while node != ei {
            let (prev, k) = parent[node];
            cycle.push((k, minus));
            minus = !minus;
            node = prev;
        }

        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for &(k, minus) in &cycle {
            if minus {
                let (i, j) = basis[k];
                if flow[[i, j]] < theta {
                    theta = flow[[i, j]];
                    leaving = k;
                }
            }
        }
        let theta = theta.max(0.0);
        flow[[ei, ej]] += theta;
        for &(k, minus) in &cycle {
            let (i, j) = basis[k];
            if minus {
                flow[[i, j]] = (flow[[i, j]] - theta).max(0.0);
            } else {
                flow[[i, j]] += theta;
            }
        }
        let (li, lj) = basis[leaving];
        flow[[li, lj]] = 0.0;
        is_basic[[li, lj]] = false;
        is_basic[[ei, ej]] = true;
        basis[leaving] = (ei, ej);

        degenerate_run = if theta <= 0.0 { degenerate_run + 1 } else { 0 };
    }
    Err(OtError::LpStalled(max_pivots))
}

/// Initial basic feasible solution; always yields `n + m - 1` cells forming a
/// staircase spanning tree.
fn northwest_corner(a: &[f64], b: &[f64], flow: &mut Array2<f64>) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut basis = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let x = supply[i].min(demand[j]).max(0.0);
        flow[[i, j]] = x;
        supply[i] -= x;
        demand[j] -= x;
        basis.push((i, j));
        if i == n - 1 && j == m - 1 {
            break;
        }
        if i == n - 1 {
            j += 1;
        } else if j == m - 1 || supply[i] <= demand[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    // Leftover rounding mass lands on the last cell.
    let rest: f64 = supply.iter().sum::<f64>().max(0.0);
    flow[[n - 1, m - 1]] += rest;
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(w: &[f64]) -> Categorical {
        Categorical::new(w.to_vec()).unwrap()
    }

    fn line_cost(src: &[f64], tgt: &[f64]) -> CostMatrix {
        CostMatrix::from_rows(
            &src.iter()
                .map(|x| tgt.iter().map(|y| (x - y).abs()).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn dirac_pair() {
        let c = CostMatrix::from_rows(&[vec![7.0]]).unwrap();
        let out = exact_ot_lp(&cat(&[1.0]), &cat(&[1.0]), &c).unwrap();
        assert_eq!(out.cost(), 7.0);
    }

    #[test]
    fn identity_coupling_is_optimal() {
        let c = line_cost(&[0.0, 1.0], &[0.0, 1.0]);
        let out = exact_ot_lp(&cat(&[0.5, 0.5]), &cat(&[0.5, 0.5]), &c).unwrap();
        assert_eq!(out.cost(), 0.0);
        assert_eq!(out.plan()[[0, 0]], 0.5);
        assert_eq!(out.plan()[[1, 1]], 0.5);
        assert_eq!(out.plan()[[0, 1]], 0.0);
    }

    #[test]
    fn two_points_to_one() {
        let c = line_cost(&[0.0, 1.0], &[2.0]);
        let out = exact_ot_lp(&cat(&[0.5, 0.5]), &cat(&[1.0]), &c).unwrap();
        assert!((out.cost() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn anti_diagonal_costs_need_pivots() {
        // Northwest corner starts on the expensive diagonal.
        let c = CostMatrix::from_rows(&[
            vec![5.0, 1.0, 5.0],
            vec![5.0, 5.0, 1.0],
            vec![1.0, 5.0, 5.0],
        ])
        .unwrap();
        let w = cat(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let out = exact_ot_lp(&w, &w, &c).unwrap();
        assert!((out.cost() - 1.0).abs() < 1e-12);
        assert!(out.marginal_error(w.weights(), w.weights()) < 1e-12);
    }

    #[test]
    fn zero_mass_bins_stay_zero() {
        let c = line_cost(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]);
        let out = exact_ot_lp(&cat(&[0.5, 0.0, 0.5]), &cat(&[0.0, 1.0, 0.0]), &c).unwrap();
        assert!((out.cost() - 1.0).abs() < 1e-12);
        assert_eq!(out.plan().row(1).sum(), 0.0);
        assert_eq!(out.plan().column(0).sum(), 0.0);
    }

    #[test]
    fn rejects_oversized_instances() {
        let n = 101;
        let w = Categorical::uniform(n).unwrap();
        let c = CostMatrix::new(Array2::zeros((n, n))).unwrap();
        assert!(matches!(exact_ot_lp(&w, &w, &c), Err(OtError::TooLarge { .. })));
    }
}

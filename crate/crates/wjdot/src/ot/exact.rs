//! Exact solver: the transportation simplex (MODI method).
//!
//! The basis is a spanning tree of the bipartite row/column graph with
//! exactly `rows + cols - 1` cells. Iterations follow the textbook recipe:
//! dual potentials from the tree, most-negative reduced cost enters, the
//! unique tree cycle determines the leaving cell. Degenerate pivot streaks
//! switch entering/leaving selection to Bland's rule (smallest index), which
//! rules out cycling. Final flows are recomputed from the tree by leaf
//! elimination so marginal error does not accumulate across pivots.

use ndarray::{Array1, Array2};

use super::{center_duals, reduce_problem, Coupling, CostMatrix, OtSolution};
use crate::{Error, Result};

/// Solves the transportation problem exactly.
///
/// `a` and `b` must be probability vectors matching the cost shape.
/// Zero-mass rows/columns are removed before solving and restored as zero
/// plan entries (with zero potentials). The returned plan satisfies the
/// marginals within 1e-10 and has no negative reduced cost; `value` is
/// `<plan, C>`.
pub fn solve_exact(cost: &CostMatrix, a: &Array1<f64>, b: &Array1<f64>) -> Result<OtSolution> {
    let reduced = reduce_problem(cost, a, b)?;
    let solved = transportation_simplex(&reduced.cost, &reduced.a, &reduced.b)?;
    let (mut phi, mut psi) = (solved.u, solved.v);
    center_duals(&mut phi, &mut psi, &reduced.b);
    let (plan, duals) = reduced.restore(solved.plan, phi, psi);
    let value = (&plan * &cost.entries).sum();
    Ok(OtSolution {
        coupling: Coupling { plan, value },
        duals,
        regularized_value: None,
        converged: true,
        iterations: solved.pivots,
    })
}

struct SimplexSolution {
    plan: Array2<f64>,
    u: Array1<f64>,
    v: Array1<f64>,
    pivots: usize,
}

/// One basic cell: a (row, column) pair carrying flow.
#[derive(Debug, Clone, Copy)]
struct BasicCell {
    row: usize,
    col: usize,
    flow: f64,
}

fn transportation_simplex(cost: &Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) -> Result<SimplexSolution> {
    let (rows, cols) = cost.dim();
    let mut basis = northwest_corner(a, b);
    debug_assert_eq!(basis.len(), rows + cols - 1);
    let mut in_basis = Array2::from_elem((rows, cols), false);
    for cell in &basis {
        in_basis[[cell.row, cell.col]] = true;
    }

    // Optimality tolerance scaled to the cost magnitude.
    let scale = cost.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    let tol = 1e-12 * (1.0 + scale);
    let max_pivots = 1000 + 200 * (rows + cols) * (rows + cols);
    let mut bland = false;
    let mut degenerate_streak = 0usize;
    let mut pivots = 0usize;
    let (mut u, mut v);

    loop {
        let adjacency = build_adjacency(&basis, rows, cols);
        (u, v) = tree_duals(cost, &basis, &adjacency, rows, cols);

        let entering = if bland {
            first_negative(cost, &u, &v, &in_basis, tol)
        } else {
            most_negative(cost, &u, &v, &in_basis, tol)
        };
        let Some((er, ec)) = entering else { break };

        if pivots >= max_pivots {
            let residual = cost[[er, ec]] - u[er] - v[ec];
            return Err(Error::IterationBudget {
                solver: "transportation simplex",
                iterations: pivots,
                residual,
            });
        }
        pivots += 1;

        // The tree path from row `er` to column `ec` closes a unique cycle
        // with the entering cell. Flows alternate -theta/+theta along it,
        // starting with - on the edge incident to `er`.
        let path = tree_path(&basis, &adjacency, rows, er, ec);
        let mut leaving: Option<(usize, f64)> = None;
        for (step, &cell_idx) in path.iter().enumerate() {
            if step % 2 != 0 {
                continue; // +theta edge; never leaves
            }
            let cell = basis[cell_idx];
            let better = match leaving {
                None => true,
                Some((best_idx, best_flow)) => {
                    cell.flow < best_flow - 1e-15
                        || ((cell.flow - best_flow).abs() <= 1e-15
                            && (cell.row, cell.col) < (basis[best_idx].row, basis[best_idx].col))
                }
            };
            if better {
                leaving = Some((cell_idx, cell.flow));
            }
        }
        let (leaving_idx, theta) = leaving.expect("cycle always has a -theta edge");

        if theta <= 1e-15 {
            degenerate_streak += 1;
            if degenerate_streak > 2 * (rows + cols) {
                bland = true;
            }
        } else {
            degenerate_streak = 0;
        }

        for (step, &cell_idx) in path.iter().enumerate() {
            if step % 2 == 0 {
                basis[cell_idx].flow = (basis[cell_idx].flow - theta).max(0.0);
            } else {
                basis[cell_idx].flow += theta;
            }
        }
        let leaving_cell = basis[leaving_idx];
        in_basis[[leaving_cell.row, leaving_cell.col]] = false;
        in_basis[[er, ec]] = true;
        basis[leaving_idx] = BasicCell { row: er, col: ec, flow: theta };
    }

    // Recompute flows exactly from the final tree.
    let adjacency = build_adjacency(&basis, rows, cols);
    leaf_elimination_flows(&mut basis, &adjacency, a, b, rows, cols)?;
    let mut plan = Array2::zeros((rows, cols));
    for cell in &basis {
        plan[[cell.row, cell.col]] = cell.flow;
    }
    Ok(SimplexSolution { plan, u, v, pivots })
}

/// Initial basis from the northwest-corner rule: a staircase path, hence a
/// spanning tree, with exactly `rows + cols - 1` cells.
fn northwest_corner(a: &Array1<f64>, b: &Array1<f64>) -> Vec<BasicCell> {
    let (rows, cols) = (a.len(), b.len());
    let mut ra = a.to_vec();
    let mut rb = b.to_vec();
    let mut cells = Vec::with_capacity(rows + cols - 1);
    let (mut t, mut i) = (0, 0);
    loop {
        let flow = ra[t].min(rb[i]);
        cells.push(BasicCell { row: t, col: i, flow });
        ra[t] -= flow;
        rb[i] -= flow;
        if t == rows - 1 && i == cols - 1 {
            break;
        }
        if t + 1 < rows && (i + 1 == cols || ra[t] <= rb[i]) {
            t += 1;
        } else {
            i += 1;
        }
    }
    cells
}

/// Node indices: rows are `0..rows`, column c is `rows + c`. Returns, per
/// node, the indices into `basis` of its incident basic cells.
fn build_adjacency(basis: &[BasicCell], rows: usize, cols: usize) -> Vec<Vec<usize>> {
    let mut adjacency = vec![Vec::new(); rows + cols];
    for (idx, cell) in basis.iter().enumerate() {
        adjacency[cell.row].push(idx);
        adjacency[rows + cell.col].push(idx);
    }
    adjacency
}

/// Dual potentials from `u_row + v_col = C[row][col]` on basic cells,
/// rooted at `u[0] = 0` and propagated over the spanning tree.
fn tree_duals(
    cost: &Array2<f64>,
    basis: &[BasicCell],
    adjacency: &[Vec<usize>],
    rows: usize,
    cols: usize,
) -> (Array1<f64>, Array1<f64>) {
    let mut u = Array1::zeros(rows);
    let mut v = Array1::zeros(cols);
    let mut known = vec![false; rows + cols];
    known[0] = true;
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        for &cell_idx in &adjacency[node] {
            let cell = basis[cell_idx];
            let (row_node, col_node) = (cell.row, rows + cell.col);
            let other = if node == row_node { col_node } else { row_node };
            if known[other] {
                continue;
            }
            if other == col_node {
                v[cell.col] = cost[[cell.row, cell.col]] - u[cell.row];
            } else {
                u[cell.row] = cost[[cell.row, cell.col]] - v[cell.col];
            }
            known[other] = true;
            stack.push(other);
        }
    }
    (u, v)
}

fn most_negative(
    cost: &Array2<f64>,
    u: &Array1<f64>,
    v: &Array1<f64>,
    in_basis: &Array2<bool>,
    tol: f64,
) -> Option<(usize, usize)> {
    let mut best: Option<((usize, usize), f64)> = None;
    for t in 0..cost.nrows() {
        for i in 0..cost.ncols() {
            if in_basis[[t, i]] {
                continue;
            }
            let reduced = cost[[t, i]] - u[t] - v[i];
            if reduced < -tol && best.map_or(true, |(_, r)| reduced < r) {
                best = Some(((t, i), reduced));
            }
        }
    }
    best.map(|(cell, _)| cell)
}

fn first_negative(
    cost: &Array2<f64>,
    u: &Array1<f64>,
    v: &Array1<f64>,
    in_basis: &Array2<bool>,
    tol: f64,
) -> Option<(usize, usize)> {
    for t in 0..cost.nrows() {
        for i in 0..cost.ncols() {
            if !in_basis[[t, i]] && cost[[t, i]] - u[t] - v[i] < -tol {
                return Some((t, i));
            }
        }
    }
    None
}

/// Basic-cell indices along the unique tree path from row `er` to column
/// `ec`, in traversal order (first edge incident to `er`).
fn tree_path(
    basis: &[BasicCell],
    adjacency: &[Vec<usize>],
    rows: usize,
    er: usize,
    ec: usize,
) -> Vec<usize> {
    let n_nodes = adjacency.len();
    let target = rows + ec;
    let mut parent_edge: Vec<Option<usize>> = vec![None; n_nodes];
    let mut visited = vec![false; n_nodes];
    visited[er] = true;
    let mut queue = std::collections::VecDeque::from([er]);
    'search: while let Some(node) = queue.pop_front() {
        for &cell_idx in &adjacency[node] {
            let cell = basis[cell_idx];
            let other = if node == cell.row { rows + cell.col } else { cell.row };
            if visited[other] {
                continue;
            }
            visited[other] = true;
            parent_edge[other] = Some(cell_idx);
            if other == target {
                break 'search;
            }
            queue.push_back(other);
        }
    }
    let mut path = Vec::new();
    let mut node = target;
    while node != er {
        let cell_idx = parent_edge[node].expect("spanning tree connects all nodes");
        path.push(cell_idx);
        let cell = basis[cell_idx];
        node = if node == cell.row { rows + cell.col } else { cell.row };
    }
    path.reverse();
    path
}

/// Recomputes basic flows exactly from the marginals: repeatedly resolve a
/// leaf node (degree one in the tree), whose single cell must carry the
/// node's whole remaining mass.
fn leaf_elimination_flows(
    basis: &mut [BasicCell],
    adjacency: &[Vec<usize>],
    a: &Array1<f64>,
    b: &Array1<f64>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    let n_nodes = rows + cols;
    let mut degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut remaining: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let mut done = vec![false; basis.len()];
    let mut leaves: Vec<usize> = (0..n_nodes).filter(|&n| degree[n] == 1).collect();
    let mut resolved = 0;
    while let Some(node) = leaves.pop() {
        let Some(&cell_idx) = adjacency[node].iter().find(|&&c| !done[c]) else {
            continue;
        };
        let cell = basis[cell_idx];
        let flow = remaining[node];
        if flow < -1e-9 {
            return Err(Error::invalid(
                "transportation simplex",
                format!("negative basic flow {flow} during flow recovery"),
            ));
        }
        basis[cell_idx].flow = flow.max(0.0);
        done[cell_idx] = true;
        resolved += 1;
        let other = if node == cell.row { rows + cell.col } else { cell.row };
        remaining[node] = 0.0;
        remaining[other] -= flow;
        degree[node] -= 1;
        degree[other] -= 1;
        if degree[other] == 1 {
            leaves.push(other);
        }
    }
    if resolved != basis.len() {
        return Err(Error::invalid(
            "transportation simplex",
            "basis is not a spanning tree",
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::test_support::{cost_only, max_marginal_violation, permutation_minimum};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize) -> Array1<f64> {
        Array1::from_elem(n, 1.0 / n as f64)
    }

    fn random_cost(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>())
    }

    #[test]
    fn single_row_plan_is_the_column_masses() {
        let cost = cost_only(array![[1.0, 2.0, 3.0]]);
        let a = array![1.0];
        let b = array![0.2, 0.3, 0.5];
        let sol = solve_exact(&cost, &a, &b).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(sol.coupling.plan[[0, i]], b[i], epsilon = 1e-15);
        }
        assert_abs_diff_eq!(sol.coupling.value, 0.2 + 0.6 + 1.5, epsilon = 1e-12);
    }

    #[test]
    fn matches_permutation_oracle_on_seed_7() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let entries = random_cost(&mut rng, 4, 4);
        let oracle = permutation_minimum(&entries);
        let cost = cost_only(entries);
        let sol = solve_exact(&cost, &uniform(4), &uniform(4)).unwrap();
        assert_abs_diff_eq!(sol.coupling.value, oracle, epsilon = 1e-9);
        assert!(max_marginal_violation(&sol.coupling.plan, &uniform(4), &uniform(4)) <= 1e-10);
    }

    #[test]
    fn constant_cost_gives_constant_value() {
        let cost = cost_only(Array2::from_elem((3, 4), 2.5));
        let a = array![0.1, 0.4, 0.5];
        let b = array![0.25, 0.25, 0.3, 0.2];
        let sol = solve_exact(&cost, &a, &b).unwrap();
        assert_abs_diff_eq!(sol.coupling.value, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn identity_cost_finds_zero() {
        let cost = cost_only(array![[0.0, 1.0], [1.0, 0.0]]);
        let sol = solve_exact(&cost, &uniform(2), &uniform(2)).unwrap();
        assert_abs_diff_eq!(sol.coupling.value, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.coupling.plan[[0, 0]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.coupling.plan[[1, 1]], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_marginals_do_not_cycle() {
        // Equal partial sums force zero-flow basic cells in the initial basis.
        let entries = array![
            [1.0, 2.0, 3.0, 4.0],
            [4.0, 3.0, 2.0, 1.0],
            [2.0, 4.0, 1.0, 3.0],
            [3.0, 1.0, 4.0, 2.0],
        ];
        let oracle = permutation_minimum(&entries);
        let cost = cost_only(entries);
        let sol = solve_exact(&cost, &uniform(4), &uniform(4)).unwrap();
        assert_abs_diff_eq!(sol.coupling.value, oracle, epsilon = 1e-9);
    }

    #[test]
    fn zero_mass_columns_are_restored_as_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let entries = random_cost(&mut rng, 3, 5);
        let cost = cost_only(entries.clone());
        let a = uniform(3);
        let b = array![0.4, 0.0, 0.3, 0.0, 0.3];
        let sol = solve_exact(&cost, &a, &b).unwrap();
        assert_eq!(sol.coupling.plan.column(1).sum(), 0.0);
        assert_eq!(sol.coupling.plan.column(3).sum(), 0.0);
        assert_eq!(sol.duals.psi[1], 0.0);
        assert!(max_marginal_violation(&sol.coupling.plan, &a, &b) <= 1e-10);

        // Same optimum as solving the three-column sub-problem directly.
        let reduced_cost = cost_only(
            Array2::from_shape_fn((3, 3), |(t, i)| entries[[t, [0usize, 2, 4][i]]]),
        );
        let reduced = solve_exact(&reduced_cost, &a, &array![0.4, 0.3, 0.3]).unwrap();
        assert_abs_diff_eq!(sol.coupling.value, reduced.coupling.value, epsilon = 1e-12);
    }

    #[test]
    fn duals_are_feasible_and_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let entries = random_cost(&mut rng, 5, 7);
        let a = Array1::from_shape_fn(5, |_| rng.gen_range(0.1..1.0));
        let a = &a / a.sum();
        let b = Array1::from_shape_fn(7, |_| rng.gen_range(0.1..1.0));
        let b = &b / b.sum();
        let cost = cost_only(entries.clone());
        let sol = solve_exact(&cost, &a, &b).unwrap();
        for t in 0..5 {
            for i in 0..7 {
                let slack = entries[[t, i]] - sol.duals.phi[t] - sol.duals.psi[i];
                assert!(slack >= -1e-9, "dual infeasible at ({t},{i}): {slack}");
                if sol.coupling.plan[[t, i]] > 1e-12 {
                    assert!(slack.abs() <= 1e-9, "slack {slack} on a basic cell");
                }
            }
        }
        let dual_value: f64 = sol.duals.phi.dot(&a) + sol.duals.psi.dot(&b);
        assert_abs_diff_eq!(dual_value, sol.coupling.value, epsilon = 1e-9);
        let centered: f64 = sol.duals.psi.dot(&b);
        assert_abs_diff_eq!(centered, 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn oracle_equivalence_on_uniform_instances(
            seed in 0u64..1000,
            n in 3usize..=5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let entries = random_cost(&mut rng, n, n);
            let oracle = permutation_minimum(&entries);
            let cost = cost_only(entries);
            let sol = solve_exact(&cost, &uniform(n), &uniform(n)).unwrap();
            prop_assert!((sol.coupling.value - oracle).abs() < 1e-9);
            prop_assert!(max_marginal_violation(&sol.coupling.plan, &uniform(n), &uniform(n)) <= 1e-10);
            prop_assert!(sol.coupling.plan.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn rectangular_instances_are_feasible_and_dual_tight(
            seed in 0u64..1000,
            rows in 2usize..=6,
            cols in 2usize..=6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let entries = random_cost(&mut rng, rows, cols);
            let a = Array1::from_shape_fn(rows, |_| rng.gen_range(0.05..1.0));
            let a = &a / a.sum();
            let b = Array1::from_shape_fn(cols, |_| rng.gen_range(0.05..1.0));
            let b = &b / b.sum();
            let cost = cost_only(entries);
            let sol = solve_exact(&cost, &a, &b).unwrap();
            prop_assert!(max_marginal_violation(&sol.coupling.plan, &a, &b) <= 1e-10);
            let dual_value: f64 = sol.duals.phi.dot(&a) + sol.duals.psi.dot(&b);
            prop_assert!((dual_value - sol.coupling.value).abs() < 1e-9);
        }
    }
}

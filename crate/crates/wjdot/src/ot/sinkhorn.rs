//! Entropic solver: log-domain Sinkhorn iterations.
//!
//! Solves `min <plan, C> + eps * sum(plan * (ln plan - 1))` subject to the
//! marginal constraints. The plan is parameterized by dual potentials,
//! `plan[t][i] = exp((phi_t + psi_i - C[t][i]) / eps)`, and the updates are
//! exact coordinate maximizations of the dual, evaluated with log-sum-exp so
//! small `eps` does not overflow.

use ndarray::{Array1, Array2};

use super::{center_duals, reduce_problem, Coupling, CostMatrix, DualPotentials, OtSolution};
use crate::{Error, Result};

/// Solves the entropy-regularized transportation problem from zero
/// potentials. See [`solve_sinkhorn_from`] for warm starts.
pub fn solve_sinkhorn(
    cost: &CostMatrix,
    a: &Array1<f64>,
    b: &Array1<f64>,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<OtSolution> {
    solve_sinkhorn_from(cost, a, b, epsilon, tol, max_iter, None)
}

/// Solves the entropy-regularized transportation problem, optionally warm
/// starting from previously computed potentials (full-length, as returned in
/// [`DualPotentials`]).
///
/// Stops when the max marginal violation drops below `tol`. Exhausting
/// `max_iter` is not an error: the solution is returned with `converged`
/// cleared so callers can decide how to react.
pub fn solve_sinkhorn_from(
    cost: &CostMatrix,
    a: &Array1<f64>,
    b: &Array1<f64>,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
    warm_start: Option<&DualPotentials>,
) -> Result<OtSolution> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("sinkhorn", "epsilon must be positive and finite"));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::invalid("sinkhorn", "tolerance and iteration budget must be positive"));
    }
    let reduced = reduce_problem(cost, a, b)?;
    let (rows, cols) = reduced.cost.dim();

    let mut phi = Array1::zeros(rows);
    let mut psi = Array1::zeros(cols);
    if let Some(start) = warm_start {
        if start.phi.len() != a.len() || start.psi.len() != b.len() {
            return Err(Error::Dimension {
                context: "sinkhorn warm start",
                expected: a.len() + b.len(),
                actual: start.phi.len() + start.psi.len(),
            });
        }
        for (r, &t) in reduced.kept_rows.iter().enumerate() {
            phi[r] = start.phi[t];
        }
        for (c, &i) in reduced.kept_cols.iter().enumerate() {
            psi[c] = start.psi[i];
        }
    }

    let log_a = reduced.a.mapv(f64::ln);
    let log_b = reduced.b.mapv(f64::ln);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=max_iter {
        iterations = iter;
        // phi_t = eps * (ln a_t - LSE_i((psi_i - C_ti) / eps))
        for t in 0..rows {
            let lse = log_sum_exp((0..cols).map(|i| (psi[i] - reduced.cost[[t, i]]) / epsilon));
            phi[t] = epsilon * (log_a[t] - lse);
        }
        // psi_i = eps * (ln b_i - LSE_t((phi_t - C_ti) / eps))
        for i in 0..cols {
            let lse = log_sum_exp((0..rows).map(|t| (phi[t] - reduced.cost[[t, i]]) / epsilon));
            psi[i] = epsilon * (log_b[i] - lse);
        }
        // Column sums are exact right after the psi update; only rows can be
        // violated.
        let mut violation = 0.0f64;
        for t in 0..rows {
            let row_sum: f64 = (0..cols)
                .map(|i| ((phi[t] + psi[i] - reduced.cost[[t, i]]) / epsilon).exp())
                .sum();
            violation = violation.max((row_sum - reduced.a[t]).abs());
        }
        if violation < tol {
            converged = true;
            break;
        }
    }

    let plan = Array2::from_shape_fn((rows, cols), |(t, i)| {
        ((phi[t] + psi[i] - reduced.cost[[t, i]]) / epsilon).exp()
    });
    // With plan = exp((phi + psi - C)/eps), the regularized objective
    // telescopes to sum_t phi_t r_t + sum_i psi_i c_i - eps * mass, where
    // r, c are the plan's actual row/column sums.
    let row_sums: Array1<f64> = plan.rows().into_iter().map(|r| r.sum()).collect();
    let col_sums: Array1<f64> = plan.columns().into_iter().map(|c| c.sum()).collect();
    let mass: f64 = row_sums.sum();
    let regularized = phi.dot(&row_sums) + psi.dot(&col_sums) - epsilon * mass;
    if !regularized.is_finite() {
        return Err(Error::NonFinite("sinkhorn objective"));
    }

    center_duals(&mut phi, &mut psi, &reduced.b);
    let (full_plan, duals) = reduced.restore(plan, phi, psi);
    let value = (&full_plan * &cost.entries).sum();
    Ok(OtSolution {
        coupling: Coupling { plan: full_plan, value },
        duals,
        regularized_value: Some(regularized),
        converged,
        iterations,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::test_support::{cost_only, max_marginal_violation};
    use crate::ot::solve_exact;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize) -> Array1<f64> {
        Array1::from_elem(n, 1.0 / n as f64)
    }

    #[test]
    fn small_epsilon_recovers_the_exact_plan() {
        let cost = cost_only(array![[0.0, 1.0], [1.0, 0.0]]);
        let sol = solve_sinkhorn(&cost, &uniform(2), &uniform(2), 0.01, 1e-9, 10_000).unwrap();
        assert!(sol.converged);
        let expected = array![[0.5, 0.0], [0.0, 0.5]];
        for (got, want) in sol.coupling.plan.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        assert!(sol.coupling.value < 1e-2);
    }

    #[test]
    fn large_epsilon_approaches_the_independent_coupling() {
        // The entropic optimum at finite epsilon keeps a residual tilt of
        // 0.5/(1 + e^(-1/eps)) - 0.25 toward the cheap diagonal: exactly
        // 1.25e-3 at eps = 100, shrinking like 1/(4 eps).
        let cost = cost_only(array![[0.0, 1.0], [1.0, 0.0]]);
        let a = uniform(2);
        let b = uniform(2);
        for (eps, tol) in [(100.0, 1.3e-3), (1000.0, 1e-3)] {
            let sol = solve_sinkhorn(&cost, &a, &b, eps, 1e-10, 10_000).unwrap();
            for t in 0..2 {
                for i in 0..2 {
                    assert!(
                        (sol.coupling.plan[[t, i]] - a[t] * b[i]).abs() < tol,
                        "eps={eps}"
                    );
                }
            }
        }
    }

    #[test]
    fn single_point_problem() {
        let cost = cost_only(array![[3.7]]);
        let sol = solve_sinkhorn(&cost, &array![1.0], &array![1.0], 0.5, 1e-9, 100).unwrap();
        assert_abs_diff_eq!(sol.coupling.plan[[0, 0]], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.coupling.value, 3.7, epsilon = 1e-9);
    }

    #[test]
    fn potentials_reproduce_the_plan_through_the_gibbs_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let entries = ndarray::Array2::from_shape_fn((4, 6), |_| rng.gen::<f64>());
        let cost = cost_only(entries.clone());
        let a = uniform(4);
        let b = uniform(6);
        let eps = 0.1;
        let sol = solve_sinkhorn(&cost, &a, &b, eps, 1e-8, 10_000).unwrap();
        assert!(sol.converged);
        for t in 0..4 {
            for i in 0..6 {
                let gibbs = ((sol.duals.phi[t] + sol.duals.psi[i] - entries[[t, i]]) / eps).exp();
                let plan = sol.coupling.plan[[t, i]];
                assert!((gibbs - plan).abs() <= 1e-6 * plan.max(1e-300), "({t},{i})");
            }
        }
        assert!(max_marginal_violation(&sol.coupling.plan, &a, &b) < 1e-6);
        assert_abs_diff_eq!(sol.duals.psi.dot(&b), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn transport_cost_decreases_toward_the_exact_value_as_epsilon_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let entries = ndarray::Array2::from_shape_fn((5, 6), |_| rng.gen::<f64>() * 2.0);
        let cost = cost_only(entries);
        let a = uniform(5);
        let b = uniform(6);
        let exact = solve_exact(&cost, &a, &b).unwrap().coupling.value;
        let mut previous = f64::INFINITY;
        for eps in [1.0, 0.1, 0.01] {
            let sol = solve_sinkhorn(&cost, &a, &b, eps, 1e-8, 200_000).unwrap();
            assert!(sol.converged, "eps={eps}");
            assert!(
                sol.coupling.value <= previous + 1e-6,
                "eps={eps}: {} > {previous}",
                sol.coupling.value
            );
            assert!(sol.coupling.value >= exact - 1e-6, "eps={eps}");
            previous = sol.coupling.value;
        }
        assert!((previous - exact).abs() < 1e-3, "{previous} vs exact {exact}");
    }

    #[test]
    fn exhausted_budget_is_flagged_not_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let entries = ndarray::Array2::from_shape_fn((4, 5), |_| rng.gen::<f64>());
        let cost = cost_only(entries);
        // An unreachable tolerance guarantees the budget is the binding stop.
        let sol = solve_sinkhorn(&cost, &uniform(4), &uniform(5), 0.05, 1e-300, 3).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
    }

    #[test]
    fn warm_start_resumes_where_the_cold_solve_ended() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let entries = ndarray::Array2::from_shape_fn((6, 5), |_| rng.gen::<f64>());
        let cost = cost_only(entries);
        let a = uniform(6);
        let b = uniform(5);
        let cold = solve_sinkhorn(&cost, &a, &b, 0.05, 1e-9, 50_000).unwrap();
        assert!(cold.converged);
        let warm =
            solve_sinkhorn_from(&cost, &a, &b, 0.05, 1e-9, 50_000, Some(&cold.duals)).unwrap();
        assert!(warm.converged);
        assert!(warm.iterations <= 2, "took {} iterations", warm.iterations);
        assert_abs_diff_eq!(
            warm.regularized_value.unwrap(),
            cold.regularized_value.unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn resolving_at_the_same_inputs_never_increases_the_objective() {
        // The previous plan stays feasible when nothing changed, so a fresh
        // solve can only match or improve the regularized objective, up to
        // the marginal residual both solutions are allowed to carry.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..5 {
            let entries = ndarray::Array2::from_shape_fn((5, 7), |_| rng.gen::<f64>() * 3.0);
            let cost = cost_only(entries);
            let a = uniform(5);
            let b = uniform(7);
            let first = solve_sinkhorn(&cost, &a, &b, 0.1, 1e-10, 50_000).unwrap();
            let again =
                solve_sinkhorn_from(&cost, &a, &b, 0.1, 1e-10, 50_000, Some(&first.duals))
                    .unwrap();
            assert!(
                again.regularized_value.unwrap() <= first.regularized_value.unwrap() + 1e-8
            );
        }
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        let cost = cost_only(array![[0.0]]);
        assert!(solve_sinkhorn(&cost, &array![1.0], &array![1.0], 0.0, 1e-6, 10).is_err());
        assert!(solve_sinkhorn(&cost, &array![1.0], &array![1.0], -1.0, 1e-6, 10).is_err());
    }

    #[test]
    fn zero_mass_columns_keep_zero_plan_and_potentials() {
        let cost = cost_only(array![[0.0, 1.0, 2.0], [1.0, 0.0, 2.0]]);
        let b = array![0.5, 0.5, 0.0];
        let sol = solve_sinkhorn(&cost, &uniform(2), &b, 0.1, 1e-8, 10_000).unwrap();
        assert_eq!(sol.coupling.plan.column(2).sum(), 0.0);
        assert_eq!(sol.duals.psi[2], 0.0);
        assert!(sol.coupling.plan[[0, 0]] > 0.0 && sol.coupling.plan[[0, 1]] > 0.0);
    }
}

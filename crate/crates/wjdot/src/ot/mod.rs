//! Discrete optimal transport between a target joint distribution and a
//! weighted mixture of source joint distributions.
//!
//! The ground cost on joint samples is separable:
//! `beta_g * ||g - g'||^2 + beta_y * L(y_hat, y')` with `L` either
//! cross-entropy (floored so costs stay finite) or squared Euclidean
//! distance on the label simplex. Two solvers are provided: an exact
//! transportation simplex ([`solve_exact`]) used for evaluation and as a
//! test oracle, and a log-stabilized Sinkhorn iteration ([`solve_sinkhorn`])
//! whose dual potentials drive the adaptation loop.

mod exact;
mod sinkhorn;

pub use exact::solve_exact;
pub use sinkhorn::{solve_sinkhorn, solve_sinkhorn_from};

use ndarray::{Array1, Array2};

use crate::domain::{mixture_masses, JointSample, PooledSamples, SimplexWeights, SourceDomain};
use crate::{Error, Result};

/// Floor applied inside logarithms so cross-entropy costs stay finite.
pub const CE_FLOOR: f64 = 1e-12;
/// Default entropic regularization strength (meant for z-scored embeddings).
pub const DEFAULT_EPSILON: f64 = 0.05;
/// Default Sinkhorn stopping tolerance on the max marginal violation.
pub const DEFAULT_SINKHORN_TOL: f64 = 1e-6;
/// Default Sinkhorn iteration budget.
pub const DEFAULT_SINKHORN_MAX_ITER: usize = 10_000;

/// Loss comparing a predicted label vector against a reference label vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LabelCost {
    /// `-sum_k y[k] * ln(max(y_hat[k], CE_FLOOR))`
    CrossEntropy,
    /// `||y_hat - y||^2`
    SquaredL2,
}

/// Weights of the two terms of the separable joint ground cost.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostParams {
    /// Weight of the squared-distance term between embeddings.
    pub beta_g: f64,
    /// Weight of the label-loss term.
    pub beta_y: f64,
    pub label_cost: LabelCost,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            beta_g: 1.0,
            beta_y: 1.0,
            label_cost: LabelCost::CrossEntropy,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !self.beta_g.is_finite() || !self.beta_y.is_finite() {
            return Err(Error::NonFinite("cost params"));
        }
        if self.beta_g < 0.0 || self.beta_y < 0.0 {
            return Err(Error::invalid("cost params", "term weights must be nonnegative"));
        }
        if self.beta_g + self.beta_y == 0.0 {
            return Err(Error::invalid("cost params", "at least one term weight must be positive"));
        }
        Ok(())
    }
}

/// Label loss `L(y_hat, y)` per [`LabelCost`].
pub fn label_loss(kind: LabelCost, predicted: &Array1<f64>, reference: &Array1<f64>) -> f64 {
    match kind {
        LabelCost::CrossEntropy => reference
            .iter()
            .zip(predicted)
            .filter(|(&r, _)| r != 0.0)
            .map(|(&r, &p)| -r * p.max(CE_FLOOR).ln())
            .sum(),
        LabelCost::SquaredL2 => predicted
            .iter()
            .zip(reference)
            .map(|(&p, &r)| (p - r) * (p - r))
            .sum(),
    }
}

/// Ground-cost matrix between target joint samples (rows) and pooled source
/// joint samples (columns), with provenance for both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub entries: Array2<f64>,
    /// Row r holds the cost row of target sample `row_provenance[r]`.
    pub row_provenance: Vec<usize>,
    /// Column c holds sample `col_provenance[c] = (source index, sample index)`.
    pub col_provenance: Vec<(usize, usize)>,
}

impl CostMatrix {
    pub fn n_target(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_source(&self) -> usize {
        self.entries.ncols()
    }
}

/// Builds the joint ground-cost matrix
/// `C[t][i] = beta_g * ||g_t - g_i||^2 + beta_y * L(y_hat_t, y_i)`.
pub fn joint_cost_matrix(
    target: &[JointSample],
    pooled_sources: &PooledSamples,
    params: &CostParams,
) -> Result<CostMatrix> {
    params.validate()?;
    if target.is_empty() || pooled_sources.is_empty() {
        return Err(Error::invalid("cost matrix", "both sample sets must be nonempty"));
    }
    let d = target[0].features.len();
    let k = target[0].label.len();
    for s in target.iter().chain(&pooled_sources.samples) {
        if s.features.len() != d {
            return Err(Error::Dimension {
                context: "cost matrix embeddings",
                expected: d,
                actual: s.features.len(),
            });
        }
        if s.label.len() != k {
            return Err(Error::Dimension {
                context: "cost matrix labels",
                expected: k,
                actual: s.label.len(),
            });
        }
        if !s.features.iter().chain(s.label.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("cost matrix inputs"));
        }
    }
    let n_t = target.len();
    let n_s = pooled_sources.len();
    let mut entries = Array2::zeros((n_t, n_s));
    // Rows are independent of one another, so this loop could be split
    // across workers without changing any entry.
    for (t, ts) in target.iter().enumerate() {
        for (i, ss) in pooled_sources.samples.iter().enumerate() {
            let mut sq = 0.0;
            for (a, b) in ts.features.iter().zip(&ss.features) {
                sq += (a - b) * (a - b);
            }
            entries[[t, i]] =
                params.beta_g * sq + params.beta_y * label_loss(params.label_cost, &ts.label, &ss.label);
        }
    }
    Ok(CostMatrix {
        entries,
        row_provenance: (0..n_t).collect(),
        col_provenance: pooled_sources.provenance.clone(),
    })
}

/// A transport plan with prescribed marginals and its transported cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub plan: Array2<f64>,
    /// `<plan, C>`.
    pub value: f64,
}

/// Kantorovich dual potentials, one per target sample (`phi`) and one per
/// pooled source sample (`psi`), normalized so that `sum_i psi_i * b_i = 0`.
/// Under this gauge `psi` is the sensitivity of the transport value to the
/// source-side masses, which is what the mixture-weight gradient consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub phi: Array1<f64>,
    pub psi: Array1<f64>,
}

/// Which solver evaluates the transport problem.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum SolveMode {
    Exact,
    Entropic { epsilon: f64 },
}

impl Default for SolveMode {
    fn default() -> Self {
        SolveMode::Entropic { epsilon: DEFAULT_EPSILON }
    }
}

/// Output of either solver.
#[derive(Debug, Clone, PartialEq)]
pub struct OtSolution {
    pub coupling: Coupling,
    pub duals: DualPotentials,
    /// Entropy-regularized objective `<plan, C> + eps * sum(plan * (ln plan - 1))`;
    /// `None` for the exact solver.
    pub regularized_value: Option<f64>,
    /// Whether the solver met its stopping tolerance. Always true for the
    /// exact solver; a Sinkhorn run that exhausts its iteration budget is
    /// returned with this flag cleared rather than silently accepted.
    pub converged: bool,
    pub iterations: usize,
}

impl OtSolution {
    /// The objective value in the mode that produced this solution: the
    /// regularized objective for entropic solves, `<plan, C>` for exact ones.
    pub fn objective_value(&self) -> f64 {
        self.regularized_value.unwrap_or(self.coupling.value)
    }
}

/// Checks marginals and dimensions shared by both solvers.
fn validate_problem(cost: &CostMatrix, a: &Array1<f64>, b: &Array1<f64>) -> Result<()> {
    if a.len() != cost.n_target() {
        return Err(Error::Dimension {
            context: "target masses",
            expected: cost.n_target(),
            actual: a.len(),
        });
    }
    if b.len() != cost.n_source() {
        return Err(Error::Dimension {
            context: "source masses",
            expected: cost.n_source(),
            actual: b.len(),
        });
    }
    if !cost.entries.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }
    for (name, m) in [("target masses", a), ("source masses", b)] {
        if !m.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::invalid(name, "masses must be finite and nonnegative"));
        }
        let sum = m.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Mass {
                context: if name.starts_with("target") { "target masses" } else { "source masses" },
                sum,
            });
        }
    }
    Ok(())
}

/// The strictly positive sub-problem left after removing zero-mass rows and
/// columns, with enough bookkeeping to reinsert them afterwards.
struct ReducedProblem {
    cost: Array2<f64>,
    a: Array1<f64>,
    b: Array1<f64>,
    kept_rows: Vec<usize>,
    kept_cols: Vec<usize>,
    n_rows: usize,
    n_cols: usize,
}

fn reduce_problem(cost: &CostMatrix, a: &Array1<f64>, b: &Array1<f64>) -> Result<ReducedProblem> {
    validate_problem(cost, a, b)?;
    let kept_rows: Vec<usize> = (0..a.len()).filter(|&t| a[t] > 0.0).collect();
    let kept_cols: Vec<usize> = (0..b.len()).filter(|&i| b[i] > 0.0).collect();
    if kept_rows.is_empty() || kept_cols.is_empty() {
        return Err(Error::invalid("transport problem", "all masses are zero on one side"));
    }
    let mut reduced = Array2::zeros((kept_rows.len(), kept_cols.len()));
    for (r, &t) in kept_rows.iter().enumerate() {
        for (c, &i) in kept_cols.iter().enumerate() {
            reduced[[r, c]] = cost.entries[[t, i]];
        }
    }
    Ok(ReducedProblem {
        cost: reduced,
        a: kept_rows.iter().map(|&t| a[t]).collect(),
        b: kept_cols.iter().map(|&i| b[i]).collect(),
        kept_rows,
        kept_cols,
        n_rows: a.len(),
        n_cols: b.len(),
    })
}

impl ReducedProblem {
    /// Scatters a reduced plan and reduced duals back to full size. Dropped
    /// rows/columns get zero plan entries and zero potentials.
    fn restore(&self, plan: Array2<f64>, phi: Array1<f64>, psi: Array1<f64>) -> (Array2<f64>, DualPotentials) {
        let mut full_plan = Array2::zeros((self.n_rows, self.n_cols));
        let mut full_phi = Array1::zeros(self.n_rows);
        let mut full_psi = Array1::zeros(self.n_cols);
        for (r, &t) in self.kept_rows.iter().enumerate() {
            full_phi[t] = phi[r];
            for (c, &i) in self.kept_cols.iter().enumerate() {
                full_plan[[t, i]] = plan[[r, c]];
            }
        }
        for (c, &i) in self.kept_cols.iter().enumerate() {
            full_psi[i] = psi[c];
        }
        (full_plan, DualPotentials { phi: full_phi, psi: full_psi })
    }
}

/// Shifts the dual gauge so `sum_i psi_i * b_i = 0` without changing
/// `phi_t + psi_i` anywhere.
fn center_duals(phi: &mut Array1<f64>, psi: &mut Array1<f64>, b: &Array1<f64>) {
    let shift = psi.iter().zip(b).map(|(&p, &m)| p * m).sum::<f64>();
    psi.mapv_inplace(|p| p - shift);
    phi.mapv_inplace(|p| p + shift);
}

/// Evaluates the Wasserstein objective between the target proxy joint
/// distribution (uniform masses over `target_embeddings`, labels from
/// `classify`) and the `alpha`-weighted source mixture.
pub fn wasserstein<F>(
    target_embeddings: &[Array1<f64>],
    sources: &[SourceDomain],
    alpha: &SimplexWeights,
    classify: F,
    params: &CostParams,
    mode: SolveMode,
) -> Result<OtSolution>
where
    F: Fn(&Array1<f64>) -> Array1<f64>,
{
    if target_embeddings.is_empty() {
        return Err(Error::invalid("wasserstein", "no target samples"));
    }
    let target: Vec<JointSample> = target_embeddings
        .iter()
        .map(|e| JointSample::new(e.clone(), classify(e)))
        .collect::<Result<_>>()?;
    let pooled = PooledSamples::from_sources(sources);
    let cost = joint_cost_matrix(&target, &pooled, params)?;
    let a = Array1::from_elem(target.len(), 1.0 / target.len() as f64);
    let b = mixture_masses(sources, alpha)?.masses;
    match mode {
        SolveMode::Exact => solve_exact(&cost, &a, &b),
        SolveMode::Entropic { epsilon } => solve_sinkhorn(
            &cost,
            &a,
            &b,
            epsilon,
            DEFAULT_SINKHORN_TOL,
            DEFAULT_SINKHORN_MAX_ITER,
        ),
    }
}

//! Alternating minimization over the target classifier `f` and the source
//! mixture weights `alpha`.
//!
//! Each epoch (1) holds the latest coupling fixed and takes a few Adam steps
//! on `f` against the coupling-weighted label loss, (2) re-solves the
//! transport problem, (3) moves `alpha` along the dual-potential gradient
//! with a multiplicative (mirror-descent) step, backtracking until the
//! objective does not increase. The extractor `g` stays frozen throughout;
//! target labels are never touched.
//!
//! Embeddings are optionally z-scored (statistics from the pooled source
//! embeddings) before any transport happens; the classifier is mapped into
//! and out of the standardized coordinates exactly, so callers only ever see
//! parameters in raw embedding space.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::domain::{
    mixture_masses, Group, JointSample, PooledSamples, SimplexWeights, SourceDomain, TargetDomain,
};
use crate::nn::{
    softmax_backward, softmax_rows, AdamParams, AdamState, MlpExtractor, SoftmaxClassifier,
};
use crate::ot::{
    joint_cost_matrix, label_loss, solve_exact, solve_sinkhorn_from, CostMatrix, CostParams,
    DualPotentials, LabelCost, OtSolution, SolveMode, CE_FLOOR, DEFAULT_SINKHORN_MAX_ITER,
    DEFAULT_SINKHORN_TOL,
};
use crate::{Error, Result};

/// Slack when deciding whether a candidate `alpha` step or a re-solve
/// "did not increase" the objective.
pub const MONOTONICITY_SLACK: f64 = 1e-8;
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub cost: CostParams,
    pub mode: SolveMode,
    /// Outer block-coordinate epochs (at least 1).
    pub epochs: usize,
    /// Adam steps on the classifier per epoch; 0 freezes `f`.
    pub f_steps: usize,
    /// Initial mirror-descent step size; halved on backtracking.
    pub alpha_step: f64,
    /// Stop when the relative objective change between epochs drops below
    /// this.
    pub objective_tol: f64,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
    pub adam: AdamParams,
    /// z-score embeddings with pooled-source statistics before transport.
    pub standardize: bool,
    /// Weights below this are snapped to exact zero (and the rest
    /// renormalized) after each mirror step. Near-zero weights carry
    /// negligible mass but force the entropic solver to resolve columns far
    /// below its tolerance; exact zeros are simply dropped. 0 disables.
    pub alpha_floor: f64,
    /// Recorded for provenance; the loop itself draws no random numbers.
    pub seed: u64,
    pub record_trajectory: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            cost: CostParams::default(),
            mode: SolveMode::default(),
            epochs: 100,
            f_steps: 5,
            alpha_step: 1.0,
            objective_tol: 1e-6,
            sinkhorn_tol: DEFAULT_SINKHORN_TOL,
            sinkhorn_max_iter: DEFAULT_SINKHORN_MAX_ITER,
            adam: AdamParams::default(),
            standardize: true,
            alpha_floor: 1e-9,
            seed: 0,
            record_trajectory: true,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid("adapt config", "need at least one epoch"));
        }
        if !(self.alpha_step >= 0.0 && self.alpha_step.is_finite()) {
            return Err(Error::invalid("adapt config", "alpha step must be finite and nonnegative"));
        }
        if !(self.objective_tol > 0.0) {
            return Err(Error::invalid("adapt config", "objective tolerance must be positive"));
        }
        if !(self.sinkhorn_tol > 0.0) || self.sinkhorn_max_iter == 0 {
            return Err(Error::invalid("adapt config", "sinkhorn settings must be positive"));
        }
        if !(self.alpha_floor >= 0.0 && self.alpha_floor < 1.0) {
            return Err(Error::invalid("adapt config", "alpha floor must lie in [0, 1)"));
        }
        if let SolveMode::Entropic { epsilon } = self.mode {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::invalid("adapt config", "epsilon must be positive"));
            }
        }
        Ok(())
    }
}

/// Identity of one source, carried so a weight vector stays interpretable
/// on its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub id: String,
    pub group: Group,
}

/// Per-epoch objective diagnostics, in the order the blocks run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochTrace {
    /// Objective entering the epoch, at the carried coupling.
    pub objective_start: f64,
    /// Objective of the carried (now stale) plan under the post-`f`-step
    /// cost; re-solving must not exceed this.
    pub stale_plan_objective: f64,
    /// Objective after the `f` steps and the re-solve.
    pub objective_after_f: f64,
    /// Objective at the end of the epoch, after the `alpha` update.
    pub objective_end: f64,
    /// Step size actually accepted for `alpha` (0 if every halving failed
    /// or the step was skipped).
    pub alpha_step_used: f64,
    /// Whether every transport solve up to and including this epoch met its
    /// tolerance.
    pub solves_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptResult {
    /// Adapted classifier in raw embedding coordinates.
    pub classifier: SoftmaxClassifier,
    pub alpha: SimplexWeights,
    /// id/group per weight entry, in `alpha` order.
    pub sources: Vec<SourceRef>,
    /// End-of-epoch objective values.
    pub objective_trace: Vec<f64>,
    pub epoch_trace: Vec<EpochTrace>,
    /// `alpha` after each epoch's update; empty unless recording was on.
    pub alpha_trajectory: Vec<SimplexWeights>,
    /// True when the relative objective change dropped below tolerance
    /// before the epoch budget ran out.
    pub converged: bool,
    pub converged_epoch: Option<usize>,
    /// False if any entropic solve exhausted its iteration budget.
    pub solver_converged: bool,
}

/// Gradient of the transport value with respect to `alpha`: the chain rule
/// through `b_i = alpha_j / N_j` turns the source-side potentials into
/// per-source means, `grad_j = (1/N_j) * sum_{i in source j} psi_i`.
pub fn alpha_gradient(duals: &DualPotentials, sources: &[SourceDomain]) -> Result<Vec<f64>> {
    let total: usize = sources.iter().map(SourceDomain::len).sum();
    if duals.psi.len() != total {
        return Err(Error::Dimension {
            context: "alpha gradient potentials",
            expected: total,
            actual: duals.psi.len(),
        });
    }
    let mut grad = Vec::with_capacity(sources.len());
    let mut offset = 0;
    for source in sources {
        let block = duals.psi.slice(ndarray::s![offset..offset + source.len()]);
        grad.push(block.sum() / source.len() as f64);
        offset += source.len();
    }
    Ok(grad)
}

/// Multiplicative simplex update `alpha'_j ∝ alpha_j * exp(-step * grad_j)`.
/// The largest exponent is subtracted before exponentiation, so arbitrarily
/// large gradients cannot overflow; entries that are exactly zero stay zero.
pub fn mirror_step(alpha: &SimplexWeights, gradient: &[f64], step: f64) -> Result<SimplexWeights> {
    if gradient.len() != alpha.len() {
        return Err(Error::Dimension {
            context: "mirror step",
            expected: alpha.len(),
            actual: gradient.len(),
        });
    }
    if !gradient.iter().all(|g| g.is_finite()) || !step.is_finite() {
        return Err(Error::NonFinite("mirror step"));
    }
    let log_weights: Vec<f64> = alpha
        .as_slice()
        .iter()
        .zip(gradient)
        .map(|(&a, &g)| a.ln() - step * g)
        .collect();
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    SimplexWeights::new(weights.into_iter().map(|w| w / sum).collect())
}

/// Snaps entries below `floor` to exact zero and renormalizes. The largest
/// entry is at least `1/J`, so something always survives.
fn prune_weights(alpha: SimplexWeights, floor: f64) -> Result<SimplexWeights> {
    if floor <= 0.0 || alpha.as_slice().iter().all(|&w| w == 0.0 || w >= floor) {
        return Ok(alpha);
    }
    let kept: Vec<f64> = alpha
        .as_slice()
        .iter()
        .map(|&w| if w < floor { 0.0 } else { w })
        .collect();
    let sum: f64 = kept.iter().sum();
    SimplexWeights::new(kept.into_iter().map(|w| w / sum).collect())
}

/// Everything embedded, standardized, and pooled once up front.
struct Prepared {
    /// Standardized target embeddings as rows.
    target_matrix: Array2<f64>,
    target_embeddings: Vec<Array1<f64>>,
    /// Sources with standardized embeddings as features.
    embedded_sources: Vec<SourceDomain>,
    pooled: PooledSamples,
    /// One-hot class index per pooled source sample.
    pooled_classes: Vec<usize>,
    /// Pooled one-hot labels as rows.
    pooled_labels: Array2<f64>,
    a: Array1<f64>,
    mean: Array1<f64>,
    scale: Array1<f64>,
    sources_ref: Vec<SourceRef>,
}

fn prepare(
    sources: &[SourceDomain],
    target: &TargetDomain,
    extractor: &MlpExtractor,
    f0: &SoftmaxClassifier,
    standardize: bool,
) -> Result<Prepared> {
    if sources.is_empty() {
        return Err(Error::invalid("adapt", "no source domains"));
    }
    if target.adaptation_inputs.is_empty() {
        return Err(Error::invalid("adapt", "target has no adaptation inputs"));
    }
    let classes = sources[0]
        .label_dim()
        .ok_or_else(|| Error::invalid("adapt", "empty source domain"))?;
    if f0.classes() != classes {
        return Err(Error::Dimension {
            context: "classifier classes",
            expected: classes,
            actual: f0.classes(),
        });
    }
    if f0.embedding_dim() != extractor.embedding_dim() {
        return Err(Error::Dimension {
            context: "classifier embedding input",
            expected: extractor.embedding_dim(),
            actual: f0.embedding_dim(),
        });
    }

    let embed_set = |inputs: &[Array1<f64>]| -> Result<Vec<Array1<f64>>> {
        crate::nn::extract_embeddings(extractor, inputs)
    };
    let mut source_embeddings: Vec<Vec<Array1<f64>>> = Vec::with_capacity(sources.len());
    for source in sources {
        if source.is_empty() {
            return Err(Error::invalid(
                "adapt",
                format!("source '{}' has no samples", source.id),
            ));
        }
        let inputs: Vec<Array1<f64>> = source.samples.iter().map(|s| s.features.clone()).collect();
        source_embeddings.push(embed_set(&inputs)?);
    }
    let target_embeddings = embed_set(&target.adaptation_inputs)?;

    // z-scoring statistics from the pooled source embeddings only; the
    // target is mapped with the same affine transform.
    let d = extractor.embedding_dim();
    let (mean, scale) = if standardize {
        let total: usize = source_embeddings.iter().map(Vec::len).sum();
        let mut mean = Array1::zeros(d);
        for e in source_embeddings.iter().flatten() {
            mean += e;
        }
        mean /= total as f64;
        let mut var = Array1::zeros(d);
        for e in source_embeddings.iter().flatten() {
            let diff = e - &mean;
            var += &(&diff * &diff);
        }
        var /= total as f64;
        (mean, var.mapv(|v| v.sqrt().max(1e-8)))
    } else {
        (Array1::zeros(d), Array1::ones(d))
    };
    let z = |e: &Array1<f64>| (e - &mean) / &scale;

    let mut embedded_sources = Vec::with_capacity(sources.len());
    for (source, embeddings) in sources.iter().zip(&source_embeddings) {
        let samples = source
            .samples
            .iter()
            .zip(embeddings)
            .map(|(s, e)| JointSample::new(z(e), s.label.clone()))
            .collect::<Result<Vec<_>>>()?;
        embedded_sources.push(SourceDomain {
            id: source.id.clone(),
            samples,
            group: source.group,
        });
    }
    let target_embeddings: Vec<Array1<f64>> = target_embeddings.iter().map(z).collect();
    let mut target_matrix = Array2::zeros((target_embeddings.len(), d));
    for (mut row, e) in target_matrix.rows_mut().into_iter().zip(&target_embeddings) {
        row.assign(e);
    }

    let pooled = PooledSamples::from_sources(&embedded_sources);
    let pooled_classes: Vec<usize> = pooled
        .samples
        .iter()
        .map(|s| {
            s.one_hot_class()
                .ok_or_else(|| Error::invalid("adapt", "source labels must be one-hot"))
        })
        .collect::<Result<_>>()?;
    let mut pooled_labels = Array2::zeros((pooled.len(), classes));
    for (mut row, s) in pooled_labels.rows_mut().into_iter().zip(&pooled.samples) {
        row.assign(&s.label);
    }
    let a = Array1::from_elem(target_embeddings.len(), 1.0 / target_embeddings.len() as f64);
    let sources_ref = sources
        .iter()
        .map(|s| SourceRef { id: s.id.clone(), group: s.group })
        .collect();
    Ok(Prepared {
        target_matrix,
        target_embeddings,
        embedded_sources,
        pooled,
        pooled_classes,
        pooled_labels,
        a,
        mean,
        scale,
        sources_ref,
    })
}

/// `f` re-expressed on standardized embeddings: `W~ = W diag(scale)`,
/// `b~ = b + W mean`, so that `W~ z + b~ = W e + b` exactly.
fn to_standardized(f: &SoftmaxClassifier, mean: &Array1<f64>, scale: &Array1<f64>) -> SoftmaxClassifier {
    let weights = &f.weights * &scale.view().insert_axis(Axis(0));
    let bias = &f.bias + &f.weights.dot(mean);
    SoftmaxClassifier { weights, bias }
}

/// Inverse of [`to_standardized`].
fn from_standardized(f: &SoftmaxClassifier, mean: &Array1<f64>, scale: &Array1<f64>) -> SoftmaxClassifier {
    let weights = &f.weights / &scale.view().insert_axis(Axis(0));
    let bias = &f.bias - &weights.dot(mean);
    SoftmaxClassifier { weights, bias }
}

impl Prepared {
    fn target_predictions(&self, f: &SoftmaxClassifier) -> Array2<f64> {
        softmax_rows(&f.logits_batch(&self.target_matrix))
    }

    fn cost_matrix(&self, predictions: &Array2<f64>, params: &CostParams) -> Result<CostMatrix> {
        let target: Vec<JointSample> = self
            .target_embeddings
            .iter()
            .zip(predictions.rows())
            .map(|(e, p)| JointSample::new(e.clone(), p.to_owned()))
            .collect::<Result<_>>()?;
        joint_cost_matrix(&target, &self.pooled, params)
    }

    fn solve(
        &self,
        cost: &CostMatrix,
        alpha: &SimplexWeights,
        warm: Option<&DualPotentials>,
        cfg: &AdaptConfig,
    ) -> Result<OtSolution> {
        let b = mixture_masses(&self.embedded_sources, alpha)?.masses;
        let sol = match cfg.mode {
            SolveMode::Exact => solve_exact(cost, &self.a, &b)?,
            SolveMode::Entropic { epsilon } => solve_sinkhorn_from(
                cost,
                &self.a,
                &b,
                epsilon,
                cfg.sinkhorn_tol,
                cfg.sinkhorn_max_iter,
                warm,
            )?,
        };
        if !sol.objective_value().is_finite() {
            return Err(Error::NonFinite("adaptation objective"));
        }
        Ok(sol)
    }

    /// Objective of a (possibly stale) plan under a given cost matrix: the
    /// transported cost, plus the plan's entropy term in entropic mode.
    fn plan_objective(&self, plan: &Array2<f64>, cost: &CostMatrix, mode: SolveMode) -> f64 {
        let transport = (plan * &cost.entries).sum();
        match mode {
            SolveMode::Exact => transport,
            SolveMode::Entropic { epsilon } => {
                let entropy: f64 = plan
                    .iter()
                    .filter(|&&g| g > 0.0)
                    .map(|&g| g * (g.ln() - 1.0))
                    .sum();
                transport + epsilon * entropy
            }
        }
    }

    /// Gradient of `sum_{t,i} plan[t][i] * beta_y * L(f(g_t), y_i)` w.r.t.
    /// the logits, one row per target sample.
    fn label_loss_dlogits(
        &self,
        predictions: &Array2<f64>,
        plan: &Array2<f64>,
        params: &CostParams,
    ) -> Array2<f64> {
        let (n_t, k) = predictions.dim();
        match params.label_cost {
            LabelCost::CrossEntropy => {
                // For one pair, d/dlogits = plan * (p - y) while the floored
                // probability is active, else 0; summed over i this is
                // mass * p - label_mass, restricted to active pairs.
                let mut d_logits = Array2::zeros((n_t, k));
                for t in 0..n_t {
                    let p = predictions.row(t);
                    let mut mass = 0.0;
                    let mut label_mass = Array1::<f64>::zeros(k);
                    for (i, &class) in self.pooled_classes.iter().enumerate() {
                        let g = plan[[t, i]];
                        if g > 0.0 && p[class] >= CE_FLOOR {
                            mass += g;
                            label_mass[class] += g;
                        }
                    }
                    for c in 0..k {
                        d_logits[[t, c]] = params.beta_y * (mass * p[c] - label_mass[c]);
                    }
                }
                d_logits
            }
            LabelCost::SquaredL2 => {
                // d/dp of sum_i plan * ||p - y_i||^2 = 2 (rowmass * p - q).
                let row_mass = plan.sum_axis(Axis(1));
                let q = plan.dot(&self.pooled_labels);
                let mut d_probs = Array2::zeros((n_t, k));
                for t in 0..n_t {
                    for c in 0..k {
                        d_probs[[t, c]] =
                            2.0 * params.beta_y * (row_mass[t] * predictions[[t, c]] - q[[t, c]]);
                    }
                }
                softmax_backward(predictions, &d_probs)
            }
        }
    }
}

/// Solves the transport problem at fixed classifier and weights, through
/// the same embedding/standardization pipeline `adapt` uses. The returned
/// plan has one row per target sample and one column per pooled source
/// sample (sources in order, samples in order within each source).
pub fn solve_coupling(
    sources: &[SourceDomain],
    target: &TargetDomain,
    extractor: &MlpExtractor,
    classifier: &SoftmaxClassifier,
    alpha: &SimplexWeights,
    cfg: &AdaptConfig,
) -> Result<OtSolution> {
    cfg.validate()?;
    let prepared = prepare(sources, target, extractor, classifier, cfg.standardize)?;
    let f = to_standardized(classifier, &prepared.mean, &prepared.scale);
    let predictions = prepared.target_predictions(&f);
    let cost = prepared.cost_matrix(&predictions, &cfg.cost)?;
    prepared.solve(&cost, alpha, None, cfg)
}

/// Evaluates the adaptation objective at fixed classifier and weights,
/// through the same embedding/standardization pipeline `adapt` uses.
pub fn objective(
    sources: &[SourceDomain],
    target: &TargetDomain,
    extractor: &MlpExtractor,
    classifier: &SoftmaxClassifier,
    alpha: &SimplexWeights,
    cfg: &AdaptConfig,
) -> Result<f64> {
    solve_coupling(sources, target, extractor, classifier, alpha, cfg)
        .map(|sol| sol.objective_value())
}

/// The classifier block as a standalone function: the plan-weighted label
/// loss and its gradient with respect to the raw classifier parameters,
/// holding the transport plan fixed. The plan's columns must follow the
/// pooled source ordering of [`solve_coupling`]. Returns
/// `(loss, d_weights, d_bias)`.
pub fn classifier_objective_and_gradient(
    sources: &[SourceDomain],
    target: &TargetDomain,
    extractor: &MlpExtractor,
    classifier: &SoftmaxClassifier,
    plan: &Array2<f64>,
    cfg: &AdaptConfig,
) -> Result<(f64, Array2<f64>, Array1<f64>)> {
    cfg.validate()?;
    let prepared = prepare(sources, target, extractor, classifier, cfg.standardize)?;
    let (n_t, n_s) = (prepared.target_matrix.nrows(), prepared.pooled.len());
    if plan.dim() != (n_t, n_s) {
        return Err(Error::Dimension {
            context: "classifier gradient plan",
            expected: n_t * n_s,
            actual: plan.len(),
        });
    }
    let f = to_standardized(classifier, &prepared.mean, &prepared.scale);
    let predictions = prepared.target_predictions(&f);

    let mut loss = 0.0;
    for t in 0..n_t {
        let p = predictions.row(t).to_owned();
        for (i, sample) in prepared.pooled.samples.iter().enumerate() {
            let g = plan[[t, i]];
            if g > 0.0 {
                loss += g * cfg.cost.beta_y * label_loss(cfg.cost.label_cost, &p, &sample.label);
            }
        }
    }

    let d_logits = prepared.label_loss_dlogits(&predictions, plan, &cfg.cost);
    let (dw, db, _) = f.backward(&prepared.target_matrix, &d_logits);
    // Chain rule through the standardization re-parameterization
    // `W~ = W diag(scale)`, `b~ = b + W mean`:
    // dL/dW[k][j] = scale[j] dL/dW~[k][j] + mean[j] dL/db~[k], dL/db = dL/db~.
    let mut dw_raw = &dw * &prepared.scale.view().insert_axis(Axis(0));
    for (mut row, &dbk) in dw_raw.rows_mut().into_iter().zip(db.iter()) {
        row.scaled_add(dbk, &prepared.mean);
    }
    Ok((loss, dw_raw, db))
}

/// Runs the alternating minimization. `extractor` stays frozen; `f0` is the
/// warm start for the adapted classifier; `alpha` starts uniform.
pub fn adapt(
    sources: &[SourceDomain],
    target: &TargetDomain,
    extractor: &MlpExtractor,
    f0: &SoftmaxClassifier,
    cfg: &AdaptConfig,
) -> Result<AdaptResult> {
    cfg.validate()?;
    let prepared = prepare(sources, target, extractor, f0, cfg.standardize)?;
    let j = sources.len();
    let mut alpha = SimplexWeights::uniform(j);
    let mut f = to_standardized(f0, &prepared.mean, &prepared.scale);
    let mut adam_w = AdamState::new(f.weights.raw_dim());
    let mut adam_b = AdamState::new(f.bias.raw_dim());
    let mut f_touched = false;

    let mut predictions = prepared.target_predictions(&f);
    let mut cost = prepared.cost_matrix(&predictions, &cfg.cost)?;
    let mut sol = prepared.solve(&cost, &alpha, None, cfg)?;
    let mut solver_converged = sol.converged;

    let mut objective_trace = Vec::with_capacity(cfg.epochs);
    let mut epoch_trace = Vec::with_capacity(cfg.epochs);
    let mut alpha_trajectory = Vec::new();
    let mut previous_end = sol.objective_value();
    let mut converged = false;
    let mut converged_epoch = None;

    for epoch in 1..=cfg.epochs {
        let objective_start = sol.objective_value();

        // Block 1: classifier steps against the fixed coupling.
        if cfg.f_steps > 0 {
            for _ in 0..cfg.f_steps {
                let d_logits =
                    prepared.label_loss_dlogits(&predictions, &sol.coupling.plan, &cfg.cost);
                let (dw, db, _) = f.backward(&prepared.target_matrix, &d_logits);
                adam_w.update(&cfg.adam, &mut f.weights, &dw);
                adam_b.update(&cfg.adam, &mut f.bias, &db);
                predictions = prepared.target_predictions(&f);
            }
            f_touched = true;
            cost = prepared.cost_matrix(&predictions, &cfg.cost)?;
        }
        let stale_plan_objective = prepared.plan_objective(&sol.coupling.plan, &cost, cfg.mode);

        // Block 2: re-solve the coupling at the updated classifier.
        if cfg.f_steps > 0 {
            sol = prepared.solve(&cost, &alpha, Some(&sol.duals), cfg)?;
            solver_converged &= sol.converged;
        }
        let objective_after_f = sol.objective_value();

        // Block 3: mirror-descent step on alpha with backtracking.
        let mut alpha_step_used = 0.0;
        if j > 1 && cfg.alpha_step > 0.0 {
            let gradient = alpha_gradient(&sol.duals, &prepared.embedded_sources)?;
            let mut step = cfg.alpha_step;
            for _ in 0..=MAX_HALVINGS {
                let candidate =
                    prune_weights(mirror_step(&alpha, &gradient, step)?, cfg.alpha_floor)?;
                let moved = candidate
                    .as_slice()
                    .iter()
                    .zip(alpha.as_slice())
                    .map(|(c, a)| (c - a).abs())
                    .fold(0.0f64, f64::max);
                if moved < 1e-15 {
                    // Halving further cannot produce a different candidate.
                    break;
                }
                let candidate_sol = prepared.solve(&cost, &candidate, Some(&sol.duals), cfg)?;
                if candidate_sol.objective_value() <= objective_after_f + MONOTONICITY_SLACK {
                    solver_converged &= candidate_sol.converged;
                    alpha = candidate;
                    sol = candidate_sol;
                    alpha_step_used = step;
                    break;
                }
                step /= 2.0;
            }
        }
        let objective_end = sol.objective_value();

        objective_trace.push(objective_end);
        epoch_trace.push(EpochTrace {
            objective_start,
            stale_plan_objective,
            objective_after_f,
            objective_end,
            alpha_step_used,
            solves_converged: solver_converged,
        });
        if cfg.record_trajectory {
            alpha_trajectory.push(alpha.clone());
        }

        let denom = previous_end.abs().max(1e-12);
        if (objective_end - previous_end).abs() / denom < cfg.objective_tol {
            converged = true;
            converged_epoch = Some(epoch);
            break;
        }
        previous_end = objective_end;
    }

    let classifier = if f_touched {
        from_standardized(&f, &prepared.mean, &prepared.scale)
    } else {
        f0.clone()
    };
    Ok(AdaptResult {
        classifier,
        alpha,
        sources: prepared.sources_ref,
        objective_trace,
        epoch_trace,
        alpha_trajectory,
        converged,
        converged_epoch,
        solver_converged,
    })
}

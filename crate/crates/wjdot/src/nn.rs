//! Minimal differentiable models: a tanh MLP feature extractor, a softmax
//! classifier head, reverse-mode gradients written out by hand, and the
//! speaker-independent training loop (sum over sources of per-source mean
//! cross-entropy, minibatch Adam, early stopping on a held-out split).

use ndarray::{Array1, Array2, Axis, Dimension};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{validate_domain, JointSample, SourceDomain};
use crate::ot::CE_FLOOR;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Softmax and cross-entropy primitives
// ---------------------------------------------------------------------------

/// Row-wise softmax with the usual max-subtraction for overflow safety.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out = logits.mapv(|v| (v - max).exp());
    let sum = out.sum();
    out.mapv_inplace(|v| v / sum);
    out
}

/// Pulls a gradient w.r.t. softmax outputs back to the logits:
/// `d_logits = p * (d_probs - <d_probs, p>)` per row.
pub fn softmax_backward(probs: &Array2<f64>, d_probs: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    for ((mut o, p), dp) in out
        .rows_mut()
        .into_iter()
        .zip(probs.rows())
        .zip(d_probs.rows())
    {
        let dot = p.dot(&dp);
        for k in 0..p.len() {
            o[k] = p[k] * (dp[k] - dot);
        }
    }
    out
}

/// Cross-entropy `-sum_k target[k] * ln(max(pred[k], 1e-12))` between a
/// predicted probability vector and a (usually one-hot) reference.
pub fn cross_entropy(pred: &Array1<f64>, target: &Array1<f64>) -> f64 {
    target
        .iter()
        .zip(pred)
        .filter(|(&t, _)| t != 0.0)
        .map(|(&t, &p)| -t * p.max(CE_FLOOR).ln())
        .sum()
}

// ---------------------------------------------------------------------------
// Layers and models
// ---------------------------------------------------------------------------

/// One affine layer, `out = x W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out_dim x in_dim`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn xavier(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights =
            Array2::from_shape_fn((out_dim, in_dim), |_| rng.gen_range(-bound..=bound));
        Dense { weights, bias: Array1::zeros(out_dim) }
    }

    fn affine(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

/// Feed-forward feature extractor; every layer, including the embedding
/// layer, is followed by tanh, so embeddings live in (-1, 1)^d.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpExtractor {
    pub layers: Vec<Dense>,
}

impl MlpExtractor {
    /// Xavier-uniform weights (`|w| <= sqrt(6/(fan_in+fan_out))`), zero
    /// biases; bit-identical for equal `dims` and `seed`. `dims` is the full
    /// chain `[d_in, hidden..., d_embed]`.
    pub fn xavier(dims: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::xavier_from_rng(dims, &mut rng)
    }

    fn xavier_from_rng(dims: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("extractor dims", "need at least input and output sizes"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("extractor dims", "all layer sizes must be positive"));
        }
        let layers = dims
            .windows(2)
            .map(|w| Dense::xavier(w[0], w[1], rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    /// Full layer-size chain `[d_in, hidden..., d_embed]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weights.nrows()));
        dims
    }

    /// All activations: `trace[0]` is the input batch, `trace[l]` the
    /// post-tanh output of layer `l`; the last entry is the embedding batch.
    pub fn forward_trace(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.clone());
        for layer in &self.layers {
            let next = layer.affine(trace.last().unwrap()).mapv(f64::tanh);
            trace.push(next);
        }
        trace
    }

    pub fn embed_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_trace(x).pop().unwrap()
    }

    pub fn embed(&self, x: &Array1<f64>) -> Array1<f64> {
        let batch = x.view().insert_axis(Axis(0)).to_owned();
        self.embed_batch(&batch).row(0).to_owned()
    }

    /// Backpropagates `d_embed` (gradient w.r.t. the embedding batch)
    /// through the tanh layers, returning per-layer (weight, bias) grads.
    pub fn backward(&self, trace: &[Array2<f64>], d_embed: &Array2<f64>) -> Vec<(Array2<f64>, Array1<f64>)> {
        let n_layers = self.layers.len();
        let mut grads = Vec::with_capacity(n_layers);
        let mut d_act = d_embed.clone();
        for k in (0..n_layers).rev() {
            let out = &trace[k + 1];
            let delta = &d_act * &out.mapv(|a| 1.0 - a * a);
            let dw = delta.t().dot(&trace[k]);
            let db = delta.sum_axis(Axis(0));
            if k > 0 {
                d_act = delta.dot(&self.layers[k].weights);
            }
            grads.push((dw, db));
        }
        grads.reverse();
        grads
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            flat.extend(layer.weights.iter());
            flat.extend(layer.bias.iter());
        }
        flat
    }

    pub fn from_params(dims: &[usize], flat: &[f64]) -> Result<Self> {
        let mut model = Self::xavier(dims, 0)?;
        let expected: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if flat.len() != expected {
            return Err(Error::Dimension {
                context: "extractor parameters",
                expected,
                actual: flat.len(),
            });
        }
        let mut cursor = flat.iter().copied();
        for layer in &mut model.layers {
            for w in layer.weights.iter_mut() {
                *w = cursor.next().unwrap();
            }
            for b in layer.bias.iter_mut() {
                *b = cursor.next().unwrap();
            }
        }
        Ok(model)
    }
}

/// Affine map plus softmax from embedding space onto the label simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    /// `K x d_embed`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl SoftmaxClassifier {
    pub fn xavier(embed_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::xavier_from_rng(embed_dim, classes, &mut rng)
    }

    fn xavier_from_rng(embed_dim: usize, classes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if embed_dim == 0 || classes == 0 {
            return Err(Error::invalid("classifier dims", "dimensions must be positive"));
        }
        let dense = Dense::xavier(embed_dim, classes, rng);
        Ok(Self { weights: dense.weights, bias: dense.bias })
    }

    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits_batch(&self, embeddings: &Array2<f64>) -> Array2<f64> {
        embeddings.dot(&self.weights.t()) + &self.bias
    }

    pub fn probabilities_batch(&self, embeddings: &Array2<f64>) -> Array2<f64> {
        softmax_rows(&self.logits_batch(embeddings))
    }

    pub fn probabilities(&self, embedding: &Array1<f64>) -> Array1<f64> {
        softmax(&(self.weights.dot(embedding) + &self.bias))
    }

    /// Gradients of a scalar loss given `d_logits`: returns
    /// `(dW, db, d_embeddings)`.
    pub fn backward(
        &self,
        embeddings: &Array2<f64>,
        d_logits: &Array2<f64>,
    ) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
        let dw = d_logits.t().dot(embeddings);
        let db = d_logits.sum_axis(Axis(0));
        let d_embed = d_logits.dot(&self.weights);
        (dw, db, d_embed)
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.weights.iter().chain(self.bias.iter()).copied().collect()
    }

    pub fn from_params(embed_dim: usize, classes: usize, flat: &[f64]) -> Result<Self> {
        let expected = embed_dim * classes + classes;
        if flat.len() != expected {
            return Err(Error::Dimension {
                context: "classifier parameters",
                expected,
                actual: flat.len(),
            });
        }
        let weights = Array2::from_shape_vec((classes, embed_dim), flat[..classes * embed_dim].to_vec())
            .expect("shape checked above");
        let bias = Array1::from_vec(flat[classes * embed_dim..].to_vec());
        Ok(Self { weights, bias })
    }
}

/// One input through extractor and classifier.
pub fn forward(
    extractor: &MlpExtractor,
    classifier: &SoftmaxClassifier,
    x: &Array1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if x.len() != extractor.input_dim() {
        return Err(Error::Dimension {
            context: "forward input",
            expected: extractor.input_dim(),
            actual: x.len(),
        });
    }
    let embedding = extractor.embed(x);
    let probs = classifier.probabilities(&embedding);
    Ok((embedding, probs))
}

/// Embeds a list of input vectors with a frozen extractor.
pub fn extract_embeddings(extractor: &MlpExtractor, inputs: &[Array1<f64>]) -> Result<Vec<Array1<f64>>> {
    let d = extractor.input_dim();
    if let Some(bad) = inputs.iter().find(|x| x.len() != d) {
        return Err(Error::Dimension {
            context: "embedding input",
            expected: d,
            actual: bad.len(),
        });
    }
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let mut batch = Array2::zeros((inputs.len(), d));
    for (mut row, x) in batch.rows_mut().into_iter().zip(inputs) {
        row.assign(x);
    }
    let embedded = extractor.embed_batch(&batch);
    Ok(embedded.rows().into_iter().map(|r| r.to_owned()).collect())
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Adam hyperparameters: momentum 0.9, second-moment decay 0.999,
/// epsilon 1e-8, learning rate 0.001.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { learning_rate: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-parameter-array Adam accumulators.
#[derive(Debug, Clone)]
pub struct AdamState<D: Dimension> {
    m: ndarray::Array<f64, D>,
    v: ndarray::Array<f64, D>,
    step: u64,
}

impl<D: Dimension> AdamState<D> {
    pub fn new(shape: D) -> Self {
        Self {
            m: ndarray::Array::zeros(shape.clone()),
            v: ndarray::Array::zeros(shape),
            step: 0,
        }
    }

    pub fn update(
        &mut self,
        hp: &AdamParams,
        param: &mut ndarray::Array<f64, D>,
        grad: &ndarray::Array<f64, D>,
    ) {
        self.step += 1;
        let bc1 = 1.0 - hp.beta1.powi(self.step as i32);
        let bc2 = 1.0 - hp.beta2.powi(self.step as i32);
        ndarray::Zip::from(param)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
                *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
            });
    }
}

// ---------------------------------------------------------------------------
// Speaker-independent training
// ---------------------------------------------------------------------------

/// Extractor and classifier trained jointly on pooled source data.
#[derive(Debug, Clone, PartialEq)]
pub struct SiModel {
    pub extractor: MlpExtractor,
    pub classifier: SoftmaxClassifier,
}

impl SiModel {
    pub fn xavier(dims: &NetDims, input_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chain = vec![input_dim];
        chain.extend(&dims.hidden);
        chain.push(dims.embedding);
        let extractor = MlpExtractor::xavier_from_rng(&chain, &mut rng)?;
        let classifier = SoftmaxClassifier::xavier_from_rng(dims.embedding, classes, &mut rng)?;
        Ok(Self { extractor, classifier })
    }

    pub fn predict(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        forward(&self.extractor, &self.classifier, x).map(|(_, p)| p)
    }

    pub fn predict_class(&self, x: &Array1<f64>) -> Result<usize> {
        let probs = self.predict(x)?;
        Ok(argmax(&probs))
    }
}

pub fn argmax(v: &Array1<f64>) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Network shape: hidden layer sizes and embedding dimension.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NetDims {
    pub hidden: Vec<usize>,
    pub embedding: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        Self { hidden: vec![64, 64], embedding: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    /// Samples per class per source held out for validation; 0 disables
    /// early stopping.
    pub holdout_per_class: usize,
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            seed: 0,
            patience: 15,
            holdout_per_class: 1,
            adam: AdamParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Full-pass training objective after each epoch.
    pub train_loss: Vec<f64>,
    /// Validation objective; index 0 is the untrained model, index e the
    /// model after epoch e. Empty when validation is disabled.
    pub val_loss: Vec<f64>,
    /// Index into `val_loss` of the restored parameters (0 = initialization).
    pub best_epoch: usize,
}

/// Labeled design matrices with per-sample objective weights.
struct WeightedSet {
    x: Array2<f64>,
    y: Array2<f64>,
    /// Sample i of source j carries 1/N_j, so the weighted sum is the sum
    /// over sources of per-source mean losses.
    weights: Vec<f64>,
}

impl WeightedSet {
    fn from_rows(rows: &[(&JointSample, f64)], d_in: usize, classes: usize) -> Self {
        let mut x = Array2::zeros((rows.len(), d_in));
        let mut y = Array2::zeros((rows.len(), classes));
        let mut weights = Vec::with_capacity(rows.len());
        for (r, (sample, w)) in rows.iter().enumerate() {
            x.row_mut(r).assign(&sample.features);
            y.row_mut(r).assign(&sample.label);
            weights.push(*w);
        }
        Self { x, y, weights }
    }

    fn len(&self) -> usize {
        self.weights.len()
    }
}

/// Weighted cross-entropy objective and its gradient w.r.t. the logits.
/// Pairs whose floored probability saturates contribute a constant loss and
/// therefore a zero gradient row.
fn weighted_ce_and_dlogits(probs: &Array2<f64>, y: &Array2<f64>, weights: &[f64]) -> (f64, Array2<f64>) {
    let mut loss = 0.0;
    let mut d_logits = Array2::zeros(probs.raw_dim());
    for (r, &w) in weights.iter().enumerate() {
        let p = probs.row(r);
        let t = y.row(r);
        let class = argmax(&t.to_owned());
        loss += w * -(p[class].max(CE_FLOOR).ln());
        if p[class] >= CE_FLOOR {
            for k in 0..p.len() {
                d_logits[[r, k]] = w * (p[k] - t[k]);
            }
        }
    }
    (loss, d_logits)
}

fn objective(model: &SiModel, set: &WeightedSet) -> f64 {
    let embeddings = model.extractor.embed_batch(&set.x);
    let probs = model.classifier.probabilities_batch(&embeddings);
    weighted_ce_and_dlogits(&probs, &set.y, &set.weights).0
}

struct SiOptimizer {
    extractor: Vec<(AdamState<ndarray::Ix2>, AdamState<ndarray::Ix1>)>,
    classifier_w: AdamState<ndarray::Ix2>,
    classifier_b: AdamState<ndarray::Ix1>,
}

impl SiOptimizer {
    fn new(model: &SiModel) -> Self {
        Self {
            extractor: model
                .extractor
                .layers
                .iter()
                .map(|l| {
                    (
                        AdamState::new(l.weights.raw_dim()),
                        AdamState::new(l.bias.raw_dim()),
                    )
                })
                .collect(),
            classifier_w: AdamState::new(model.classifier.weights.raw_dim()),
            classifier_b: AdamState::new(model.classifier.bias.raw_dim()),
        }
    }
}

/// Trains extractor and classifier on the sum over sources of per-source
/// mean cross-entropy. Minibatches are scaled to keep the estimator of that
/// objective unbiased. Returns the parameters of the best validation epoch.
pub fn train_si(
    sources: &[SourceDomain],
    dims: &NetDims,
    cfg: &TrainConfig,
) -> Result<(SiModel, TrainHistory)> {
    if sources.is_empty() {
        return Err(Error::invalid("si training", "no source domains"));
    }
    for source in sources {
        let report = validate_domain(source);
        if !report.is_ok() {
            return Err(Error::invalid(
                "si training",
                format!("source '{}': {}", source.id, report.violations.join("; ")),
            ));
        }
    }
    let d_in = sources[0].feature_dim().unwrap();
    let classes = sources[0].label_dim().unwrap();
    for source in sources {
        if source.feature_dim() != Some(d_in) || source.label_dim() != Some(classes) {
            return Err(Error::invalid(
                "si training",
                format!("source '{}' disagrees on dimensions", source.id),
            ));
        }
    }
    let mut present = std::collections::BTreeSet::new();
    for source in sources {
        for sample in &source.samples {
            present.insert(sample.one_hot_class().expect("validated one-hot"));
        }
    }
    if present.len() < 2 {
        return Err(Error::invalid("si training", "need at least two distinct classes"));
    }

    // Hold out up to `holdout_per_class` samples per class per source,
    // never emptying a class on the training side.
    let mut train_rows: Vec<(&JointSample, f64)> = Vec::new();
    let mut val_rows: Vec<(&JointSample, f64)> = Vec::new();
    for source in sources {
        let mut per_class: std::collections::BTreeMap<usize, Vec<&JointSample>> = Default::default();
        for sample in &source.samples {
            per_class
                .entry(sample.one_hot_class().expect("validated one-hot"))
                .or_default()
                .push(sample);
        }
        let mut train: Vec<&JointSample> = Vec::new();
        let mut val: Vec<&JointSample> = Vec::new();
        for (_, samples) in per_class {
            let held = cfg.holdout_per_class.min(samples.len().saturating_sub(1));
            val.extend(&samples[..held]);
            train.extend(&samples[held..]);
        }
        let train_w = 1.0 / train.len() as f64;
        train_rows.extend(train.into_iter().map(|s| (s, train_w)));
        if !val.is_empty() {
            let val_w = 1.0 / val.len() as f64;
            val_rows.extend(val.into_iter().map(|s| (s, val_w)));
        }
    }
    let train_set = WeightedSet::from_rows(&train_rows, d_in, classes);
    let val_set = (cfg.holdout_per_class > 0 && !val_rows.is_empty())
        .then(|| WeightedSet::from_rows(&val_rows, d_in, classes));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chain = vec![d_in];
    chain.extend(&dims.hidden);
    chain.push(dims.embedding);
    let mut model = SiModel {
        extractor: MlpExtractor::xavier_from_rng(&chain, &mut rng)?,
        classifier: SoftmaxClassifier::xavier_from_rng(dims.embedding, classes, &mut rng)?,
    };
    let mut optimizer = SiOptimizer::new(&model);

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    if let Some(val) = &val_set {
        let v0 = objective(&model, val);
        history.val_loss.push(v0);
        best_val = v0;
    }

    let n_train = train_set.len();
    let mut indices: Vec<usize> = (0..n_train).collect();
    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(cfg.batch_size.max(1)) {
            let scale = n_train as f64 / batch.len() as f64;
            let rows: Vec<(&JointSample, f64)> = batch
                .iter()
                .map(|&i| (train_rows[i].0, scale * train_rows[i].1))
                .collect();
            let set = WeightedSet::from_rows(&rows, d_in, classes);
            let trace = model.extractor.forward_trace(&set.x);
            let embeddings = trace.last().unwrap();
            let probs = model.classifier.probabilities_batch(embeddings);
            let (loss, d_logits) = weighted_ce_and_dlogits(&probs, &set.y, &set.weights);
            if !loss.is_finite() {
                return Err(Error::NonFinite("si training loss"));
            }
            let (dw, db, d_embed) = model.classifier.backward(embeddings, &d_logits);
            let extractor_grads = model.extractor.backward(&trace, &d_embed);
            optimizer
                .classifier_w
                .update(&cfg.adam, &mut model.classifier.weights, &dw);
            optimizer
                .classifier_b
                .update(&cfg.adam, &mut model.classifier.bias, &db);
            for (layer, ((gw, gb), (sw, sb))) in model
                .extractor
                .layers
                .iter_mut()
                .zip(extractor_grads.iter().zip(optimizer.extractor.iter_mut()))
            {
                sw.update(&cfg.adam, &mut layer.weights, gw);
                sb.update(&cfg.adam, &mut layer.bias, gb);
            }
        }
        history.train_loss.push(objective(&model, &train_set));
        if let Some(val) = &val_set {
            let v = objective(&model, val);
            history.val_loss.push(v);
            if v < best_val {
                best_val = v;
                best = model.clone();
                history.best_epoch = epoch;
            } else if epoch - history.best_epoch >= cfg.patience {
                break;
            }
        } else {
            best = model.clone();
            history.best_epoch = epoch;
        }
    }
    Ok((best, history))
}

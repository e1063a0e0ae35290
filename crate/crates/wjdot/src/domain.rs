//! Shared data types: joint samples, source/target domains, simplex weights
//! and the pooled mixture masses they induce.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance for "sums to one" checks on label vectors and weights.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// One point of a joint distribution: a feature vector paired with a label
/// probability vector. Source reference labels are one-hot; target-side
/// predictions are soft. Both live in the same type so the joint transport
/// cost can compare them uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    pub features: Array1<f64>,
    pub label: Array1<f64>,
}

impl JointSample {
    /// Builds a sample, checking that the label is a probability vector.
    pub fn new(features: Array1<f64>, label: Array1<f64>) -> Result<Self> {
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("joint sample features"));
        }
        if !label.iter().all(|v| v.is_finite() && (-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(v)) {
            return Err(Error::invalid("joint sample", "label entries must lie in [0, 1]"));
        }
        let sum: f64 = label.sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(
                "joint sample",
                format!("label mass sums to {sum}, expected 1"),
            ));
        }
        Ok(Self { features, label })
    }

    /// One-hot labeled sample with `classes` label entries.
    pub fn one_hot(features: Array1<f64>, class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::invalid(
                "joint sample",
                format!("class index {class} out of range for {classes} classes"),
            ));
        }
        let mut label = Array1::zeros(classes);
        label[class] = 1.0;
        Self::new(features, label)
    }

    /// Index of the label's single 1 entry, or None for soft labels.
    pub fn one_hot_class(&self) -> Option<usize> {
        let mut hot = None;
        for (k, &v) in self.label.iter().enumerate() {
            if (v - 1.0).abs() <= SIMPLEX_TOL {
                if hot.is_some() {
                    return None;
                }
                hot = Some(k);
            } else if v.abs() > SIMPLEX_TOL {
                return None;
            }
        }
        hot
    }
}

/// Binary group tag attached to each source domain. The two groups are
/// deliberately generic; downstream scoring sums weight mass per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::A => "a",
            Group::B => "b",
        }
    }

    pub fn parse(s: &str) -> Option<Group> {
        match s {
            "a" | "A" => Some(Group::A),
            "b" | "B" => Some(Group::B),
            _ => None,
        }
    }
}

/// Labeled empirical distribution of one source domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDomain {
    pub id: String,
    pub samples: Vec<JointSample>,
    pub group: Group,
}

impl SourceDomain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Feature dimension, taken from the first sample.
    pub fn feature_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }

    /// Label dimension (number of classes), taken from the first sample.
    pub fn label_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.label.len())
    }
}

/// Unlabeled adaptation inputs for one target domain, plus an optional
/// held-out labeled test set used for evaluation only. The adaptation loop
/// never reads the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDomain {
    pub id: String,
    pub adaptation_inputs: Vec<Array1<f64>>,
    pub test_samples: Option<Vec<JointSample>>,
}

/// A weight vector on the probability simplex, one entry per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    /// Validates entries in [0, 1] summing to one.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("simplex weights", "empty weight vector"));
        }
        if !weights
            .iter()
            .all(|w| w.is_finite() && (-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(w))
        {
            return Err(Error::invalid("simplex weights", "entries must lie in [0, 1]"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Mass {
                context: "simplex weights",
                sum,
            });
        }
        Ok(Self(weights))
    }

    /// Uniform weights 1/n.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform weights need at least one entry");
        Self(vec![1.0 / n as f64; n])
    }

    /// All mass on a single entry.
    pub fn one_hot(index: usize, n: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::invalid(
                "simplex weights",
                format!("index {index} out of range for {n} entries"),
            ));
        }
        let mut w = vec![0.0; n];
        w[index] = 1.0;
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.clone()
    }
}

impl std::ops::Index<usize> for SimplexWeights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Pooled per-sample masses realizing the weighted source mixture: sample i
/// of source j carries mass `alpha[j] / N_j` (each source is uniform over its
/// own samples).
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureMasses {
    pub masses: Array1<f64>,
}

/// Report-style validation of a source domain. Collects violations instead
/// of failing on the first.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a source domain against its invariants: nonempty, one-hot labels,
/// consistent feature and label dimensions, finite values.
pub fn validate_domain(domain: &SourceDomain) -> ValidationReport {
    let mut violations = Vec::new();
    if domain.samples.is_empty() {
        violations.push(format!("domain '{}' is empty", domain.id));
        return ValidationReport { violations };
    }
    let feature_dim = domain.samples[0].features.len();
    let label_dim = domain.samples[0].label.len();
    for (i, sample) in domain.samples.iter().enumerate() {
        if sample.features.len() != feature_dim {
            violations.push(format!(
                "sample {i}: feature dimension {} differs from {feature_dim}",
                sample.features.len()
            ));
        }
        if sample.label.len() != label_dim {
            violations.push(format!(
                "sample {i}: label dimension {} differs from {label_dim}",
                sample.label.len()
            ));
        }
        if !sample.features.iter().all(|v| v.is_finite()) {
            violations.push(format!("sample {i}: non-finite feature value"));
        }
        if sample.one_hot_class().is_none() {
            violations.push(format!("sample {i}: label not one-hot"));
        }
    }
    ValidationReport { violations }
}

/// Pooled mass vector of the mixture `sum_j alpha_j * p_j` where each source
/// distribution is uniform over its own samples. The block for source j sums
/// to `alpha[j]`.
pub fn mixture_masses(sources: &[SourceDomain], alpha: &SimplexWeights) -> Result<MixtureMasses> {
    if sources.len() != alpha.len() {
        return Err(Error::Dimension {
            context: "mixture masses",
            expected: sources.len(),
            actual: alpha.len(),
        });
    }
    let mut masses = Vec::new();
    for (source, &weight) in sources.iter().zip(alpha.as_slice()) {
        if source.is_empty() {
            return Err(Error::invalid(
                "mixture masses",
                format!("source '{}' has no samples", source.id),
            ));
        }
        let per_sample = weight / source.len() as f64;
        masses.extend(std::iter::repeat(per_sample).take(source.len()));
    }
    Ok(MixtureMasses {
        masses: Array1::from_vec(masses),
    })
}

/// Source samples flattened in block order, each tagged with its
/// (source index, within-source index) origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSamples {
    pub samples: Vec<JointSample>,
    pub provenance: Vec<(usize, usize)>,
}

impl PooledSamples {
    pub fn from_sources(sources: &[SourceDomain]) -> Self {
        let mut samples = Vec::new();
        let mut provenance = Vec::new();
        for (j, source) in sources.iter().enumerate() {
            for (i, sample) in source.samples.iter().enumerate() {
                samples.push(sample.clone());
                provenance.push((j, i));
            }
        }
        Self { samples, provenance }
    }

    /// Wraps a flat sample list as a single pseudo-source.
    pub fn flat(samples: Vec<JointSample>) -> Self {
        let provenance = (0..samples.len()).map(|i| (0, i)).collect();
        Self { samples, provenance }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn one_hot_domain(id: &str, n: usize, dim: usize, classes: usize) -> SourceDomain {
        let samples = (0..n)
            .map(|i| {
                JointSample::one_hot(Array1::from_elem(dim, i as f64), i % classes, classes)
                    .unwrap()
            })
            .collect();
        SourceDomain {
            id: id.to_string(),
            samples,
            group: Group::A,
        }
    }

    #[test]
    fn validate_accepts_well_formed_domain() {
        let domain = one_hot_domain("s0", 3, 2, 2);
        assert!(validate_domain(&domain).is_ok());
    }

    #[test]
    fn validate_flags_soft_label() {
        let mut domain = one_hot_domain("s0", 2, 2, 2);
        domain.samples[1].label = array![0.5, 0.5];
        let report = validate_domain(&domain);
        assert!(!report.is_ok());
        assert!(report.violations.iter().any(|v| v.contains("not one-hot")));
    }

    #[test]
    fn validate_flags_empty_domain() {
        let domain = SourceDomain {
            id: "empty".into(),
            samples: vec![],
            group: Group::B,
        };
        let report = validate_domain(&domain);
        assert!(report.violations.iter().any(|v| v.contains("empty")));
    }

    #[test]
    fn validate_flags_dimension_mismatch() {
        let mut domain = one_hot_domain("s0", 2, 3, 2);
        domain.samples[1].features = array![1.0];
        let report = validate_domain(&domain);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("feature dimension")));
    }

    #[test]
    fn mixture_single_source_is_uniform() {
        let sources = vec![one_hot_domain("s0", 4, 1, 2)];
        let masses = mixture_masses(&sources, &SimplexWeights::uniform(1)).unwrap();
        assert_eq!(masses.masses.to_vec(), vec![0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn mixture_one_hot_alpha_zeroes_other_block() {
        let sources = vec![one_hot_domain("s0", 2, 1, 2), one_hot_domain("s1", 2, 1, 2)];
        let alpha = SimplexWeights::one_hot(0, 2).unwrap();
        let masses = mixture_masses(&sources, &alpha).unwrap();
        assert_eq!(masses.masses.to_vec(), vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn mixture_divides_alpha_by_source_size() {
        let sources = vec![one_hot_domain("s0", 1, 1, 2), one_hot_domain("s1", 3, 1, 2)];
        let alpha = SimplexWeights::new(vec![0.4, 0.6]).unwrap();
        let masses = mixture_masses(&sources, &alpha).unwrap();
        let expected = [0.4, 0.2, 0.2, 0.2];
        for (got, want) in masses.masses.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_rejects_length_mismatch() {
        let sources = vec![one_hot_domain("s0", 2, 1, 2)];
        let alpha = SimplexWeights::uniform(2);
        assert!(matches!(
            mixture_masses(&sources, &alpha),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn block_sums_match_alpha() {
        let sources = vec![
            one_hot_domain("s0", 3, 1, 2),
            one_hot_domain("s1", 5, 1, 2),
            one_hot_domain("s2", 2, 1, 2),
        ];
        let alpha = SimplexWeights::new(vec![0.2, 0.5, 0.3]).unwrap();
        let masses = mixture_masses(&sources, &alpha).unwrap();
        let mut offset = 0;
        for (j, source) in sources.iter().enumerate() {
            let block: f64 = masses.masses.slice(ndarray::s![offset..offset + source.len()]).sum();
            assert!((block - alpha[j]).abs() <= 1e-12, "block {j}: {block}");
            offset += source.len();
        }
    }

    #[test]
    fn one_hot_class_detects_soft_labels() {
        let soft = JointSample::new(array![0.0], array![0.5, 0.5]).unwrap();
        assert_eq!(soft.one_hot_class(), None);
        let hard = JointSample::one_hot(array![0.0], 1, 3).unwrap();
        assert_eq!(hard.one_hot_class(), Some(1));
    }

    proptest! {
        #[test]
        fn mixture_is_probability_vector(
            raw in prop::collection::vec(0.01f64..1.0, 2..6),
            sizes in prop::collection::vec(1usize..7, 2..6),
        ) {
            let j = raw.len().min(sizes.len());
            let total: f64 = raw[..j].iter().sum();
            let alpha = SimplexWeights::new(raw[..j].iter().map(|w| w / total).collect())?;
            let sources: Vec<_> = sizes[..j]
                .iter()
                .enumerate()
                .map(|(idx, &n)| one_hot_domain(&format!("s{idx}"), n, 1, 2))
                .collect();
            let masses = mixture_masses(&sources, &alpha).unwrap();
            prop_assert!(masses.masses.iter().all(|&m| m >= 0.0));
            prop_assert!((masses.masses.sum() - 1.0).abs() < SIMPLEX_TOL);
        }

        #[test]
        fn mixture_is_linear_in_alpha(
            raw1 in prop::collection::vec(0.01f64..1.0, 3),
            raw2 in prop::collection::vec(0.01f64..1.0, 3),
            c in 0.0f64..=1.0,
        ) {
            let normalize = |raw: &[f64]| {
                let total: f64 = raw.iter().sum();
                SimplexWeights::new(raw.iter().map(|w| w / total).collect()).unwrap()
            };
            let a1 = normalize(&raw1);
            let a2 = normalize(&raw2);
            let blend = SimplexWeights::new(
                a1.as_slice()
                    .iter()
                    .zip(a2.as_slice())
                    .map(|(x, y)| c * x + (1.0 - c) * y)
                    .collect(),
            )
            .unwrap();
            let sources = vec![
                one_hot_domain("s0", 2, 1, 2),
                one_hot_domain("s1", 3, 1, 2),
                one_hot_domain("s2", 1, 1, 2),
            ];
            let m1 = mixture_masses(&sources, &a1).unwrap();
            let m2 = mixture_masses(&sources, &a2).unwrap();
            let mb = mixture_masses(&sources, &blend).unwrap();
            for i in 0..mb.masses.len() {
                prop_assert!((mb.masses[i] - (c * m1.masses[i] + (1.0 - c) * m2.masses[i])).abs() < 1e-12);
            }
        }
    }
}

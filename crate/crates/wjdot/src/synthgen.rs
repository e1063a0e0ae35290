//! Seeded synthetic multi-source benchmarks with planted group structure.
//!
//! Every source draws class-conditional Gaussian clouds around shared base
//! class means, displaced by a per-group centroid offset and a per-source
//! individual offset. Targets are sampled from a convex blend of the source
//! generators (a clone is a one-hot blend), optionally shifted away from all
//! sources, which plants a known ground-truth weight vector and group for
//! every claim the adaptation pipeline makes.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{Group, JointSample, SimplexWeights, SourceDomain, TargetDomain};
use crate::{Error, Result};

/// How a target's samples are drawn from the source generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetRecipe {
    /// Re-draw from exactly one source's generator.
    CloneOf { source: usize },
    /// Mixture of the source generators with the given simplex weights.
    Blend { weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: String,
    pub recipe: TargetRecipe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    /// Base class means are drawn uniformly from `[-class_spread, class_spread]`.
    pub class_spread: f64,
    /// Standard deviation of every class-conditional cloud.
    pub noise_sigma: f64,
    /// Magnitude of each source's individual offset, in units of `noise_sigma`.
    pub within_group_shift: f64,
    /// Distance between the two group centroids, in units of `noise_sigma`.
    pub cross_group_shift: f64,
    /// Group tag per source; the length fixes the number of sources.
    pub groups: Vec<Group>,
    pub targets: Vec<TargetSpec>,
    /// Unlabeled adaptation samples per class for each target.
    pub target_adapt_per_class: usize,
    /// Labeled held-out test samples per class for each target.
    pub target_test_per_class: usize,
    /// Extra displacement of every target away from the sources, in units
    /// of `noise_sigma`.
    pub target_shift: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.groups.is_empty() || self.input_dim == 0 {
            return Err(Error::invalid(
                "scenario spec",
                "need at least one class, one source, and one input dimension",
            ));
        }
        if self.samples_per_class == 0 {
            return Err(Error::invalid("scenario spec", "sources need samples"));
        }
        if self.target_adapt_per_class == 0 {
            return Err(Error::invalid("scenario spec", "targets need adaptation samples"));
        }
        for v in [
            self.class_spread,
            self.noise_sigma,
            self.within_group_shift,
            self.cross_group_shift,
            self.target_shift,
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid("scenario spec", "scales must be finite and >= 0"));
            }
        }
        for target in &self.targets {
            match &target.recipe {
                TargetRecipe::CloneOf { source } => {
                    if *source >= self.groups.len() {
                        return Err(Error::invalid(
                            "scenario spec",
                            format!("target '{}' clones missing source {source}", target.id),
                        ));
                    }
                }
                TargetRecipe::Blend { weights } => {
                    if weights.len() != self.groups.len() {
                        return Err(Error::invalid(
                            "scenario spec",
                            format!("target '{}' blend has wrong length", target.id),
                        ));
                    }
                    SimplexWeights::new(weights.clone())?;
                }
            }
        }
        Ok(())
    }

    /// The recipe as blend weights (a clone is a one-hot blend).
    fn blend_weights(&self, recipe: &TargetRecipe) -> Result<SimplexWeights> {
        match recipe {
            TargetRecipe::CloneOf { source } => SimplexWeights::one_hot(*source, self.groups.len()),
            TargetRecipe::Blend { weights } => SimplexWeights::new(weights.clone()),
        }
    }
}

/// A generated target with the planted facts it should be judged against.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTarget {
    pub domain: TargetDomain,
    /// Group holding the majority of the planted blend mass.
    pub true_group: Group,
    /// The blend weights the generator actually used.
    pub ground_truth: SimplexWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    pub sources: Vec<SourceDomain>,
    pub targets: Vec<GeneratedTarget>,
}

fn unit_direction(dim: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let v = Array1::from_shape_fn(dim, |_| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    });
    let norm = v.dot(&v).sqrt();
    if norm < 1e-12 {
        let mut e = Array1::zeros(dim);
        e[0] = 1.0;
        e
    } else {
        v / norm
    }
}

fn pick_source(weights: &SimplexWeights, u: f64) -> usize {
    let mut acc = 0.0;
    for (j, &w) in weights.as_slice().iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    weights.len() - 1
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<GeneratedScenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.input_dim;
    let sigma = spec.noise_sigma;
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE))
        .map_err(|_| Error::invalid("scenario spec", "invalid noise sigma"))?;

    let base_means: Vec<Array1<f64>> = (0..spec.classes)
        .map(|_| Array1::from_shape_fn(d, |_| rng.gen_range(-spec.class_spread..=spec.class_spread)))
        .collect();

    // Two group centroids sit `cross_group_shift * sigma` apart along one
    // random axis; each source adds its own offset of fixed magnitude.
    let axis = unit_direction(d, &mut rng);
    let half = 0.5 * spec.cross_group_shift * sigma;
    let group_offset = move |group: Group| match group {
        Group::A => -half,
        Group::B => half,
    };
    let source_offsets: Vec<Array1<f64>> = spec
        .groups
        .iter()
        .map(|&g| {
            let own = unit_direction(d, &mut rng) * (spec.within_group_shift * sigma);
            &axis * group_offset(g) + own
        })
        .collect();

    // Per-source class means; the generator every sample draws from.
    let source_means: Vec<Vec<Array1<f64>>> = source_offsets
        .iter()
        .map(|off| base_means.iter().map(|m| m + off).collect())
        .collect();

    let mut sources = Vec::with_capacity(spec.groups.len());
    for (j, &group) in spec.groups.iter().enumerate() {
        let mut samples = Vec::with_capacity(spec.classes * spec.samples_per_class);
        for (k, mean) in source_means[j].iter().enumerate() {
            for _ in 0..spec.samples_per_class {
                let x = mean + &Array1::from_shape_fn(d, |_| noise.sample(&mut rng));
                samples.push(JointSample::one_hot(x, k, spec.classes)?);
            }
        }
        sources.push(SourceDomain { id: format!("s{j}"), samples, group });
    }

    let mut targets = Vec::with_capacity(spec.targets.len());
    for target_spec in &spec.targets {
        let weights = spec.blend_weights(&target_spec.recipe)?;
        let shift = unit_direction(d, &mut rng) * (spec.target_shift * sigma);
        let draw = |class: usize, rng: &mut ChaCha8Rng| {
            let u: f64 = rng.gen();
            let j = pick_source(&weights, u);
            let mean = &source_means[j][class] + &shift;
            mean + &Array1::from_shape_fn(d, |_| noise.sample(rng))
        };
        let mut adaptation_inputs = Vec::with_capacity(spec.classes * spec.target_adapt_per_class);
        for class in 0..spec.classes {
            for _ in 0..spec.target_adapt_per_class {
                adaptation_inputs.push(draw(class, &mut rng));
            }
        }
        let mut test_samples = Vec::with_capacity(spec.classes * spec.target_test_per_class);
        for class in 0..spec.classes {
            for _ in 0..spec.target_test_per_class {
                test_samples.push(JointSample::one_hot(draw(class, &mut rng), class, spec.classes)?);
            }
        }
        let mass_b: f64 = weights
            .as_slice()
            .iter()
            .zip(&spec.groups)
            .filter(|(_, g)| **g == Group::B)
            .map(|(w, _)| w)
            .sum();
        let true_group = if mass_b > 0.5 { Group::B } else { Group::A };
        targets.push(GeneratedTarget {
            domain: TargetDomain {
                id: target_spec.id.clone(),
                adaptation_inputs,
                test_samples: if spec.target_test_per_class > 0 {
                    Some(test_samples)
                } else {
                    None
                },
            },
            true_group,
            ground_truth: weights,
        });
    }
    Ok(GeneratedScenario { sources, targets })
}

/// Named scenarios the acceptance checks and the CLI refer to.
pub fn scenario_catalog() -> Vec<(&'static str, ScenarioSpec)> {
    let planted_clone = ScenarioSpec {
        classes: 10,
        samples_per_class: 4,
        input_dim: 6,
        class_spread: 1.0,
        noise_sigma: 0.15,
        within_group_shift: 1.5,
        cross_group_shift: 6.0,
        groups: vec![Group::A, Group::A, Group::A, Group::B, Group::B],
        targets: vec![TargetSpec {
            id: "t-clone".into(),
            recipe: TargetRecipe::CloneOf { source: 2 },
        }],
        target_adapt_per_class: 3,
        target_test_per_class: 2,
        target_shift: 0.0,
        seed: 0,
    };
    let two_group_detect = ScenarioSpec {
        classes: 5,
        samples_per_class: 4,
        input_dim: 6,
        class_spread: 1.0,
        noise_sigma: 0.15,
        within_group_shift: 1.5,
        cross_group_shift: 6.0,
        groups: vec![
            Group::A,
            Group::A,
            Group::A,
            Group::A,
            Group::A,
            Group::B,
            Group::B,
            Group::B,
            Group::B,
            Group::B,
        ],
        targets: (0..10)
            .map(|j| TargetSpec {
                id: format!("t{j}"),
                recipe: TargetRecipe::CloneOf { source: j },
            })
            .collect(),
        target_adapt_per_class: 4,
        target_test_per_class: 2,
        target_shift: 0.0,
        seed: 0,
    };
    let covariate_shift = ScenarioSpec {
        classes: 5,
        samples_per_class: 6,
        input_dim: 6,
        class_spread: 1.0,
        noise_sigma: 0.2,
        within_group_shift: 1.5,
        cross_group_shift: 6.0,
        groups: vec![Group::A, Group::A, Group::B, Group::B],
        targets: vec![TargetSpec {
            id: "t-shifted".into(),
            recipe: TargetRecipe::CloneOf { source: 0 },
        }],
        target_adapt_per_class: 5,
        target_test_per_class: 5,
        target_shift: 2.5,
        seed: 0,
    };
    vec![
        ("planted-clone", planted_clone),
        ("two-group-detect", two_group_detect),
        ("covariate-shift", covariate_shift),
    ]
}

/// Looks a scenario up by its catalog name.
pub fn scenario_by_name(name: &str) -> Result<ScenarioSpec> {
    scenario_catalog()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, spec)| spec)
        .ok_or_else(|| Error::Config(format!("unknown scenario '{name}'")))
}

//! End-to-end experiment runner: assemble source/target tasks, train the
//! speaker-independent model, adapt each target, score it, and write the
//! report plus per-target weight trajectories.
//!
//! Data comes from one of two places:
//! - a named synthetic scenario (regenerated fresh for every evaluation
//!   seed), where every generated target is adapted against all sources; or
//! - dataset files. Files holding unlabeled targets are adapted against all
//!   labeled sources; when only labeled sources are given, each one in turn
//!   is held out as the target (its samples split into adaptation inputs and
//!   a labeled test set) and the remaining sources train the model.

use std::collections::HashMap;
use std::fs;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adaptation::{adapt, AdaptResult};
use crate::domain::{Group, JointSample, SourceDomain, TargetDomain};
use crate::io::{
    export_trajectory, load_dataset, save_report, Dataset, ExperimentConfig, Report, SourceWeight,
    TargetFailure, TargetRecord,
};
use crate::nn::{train_si, SiModel};
use crate::scoring::{command_error_rate, detect_group, group_scores};
use crate::synthgen::{generate_scenario, scenario_by_name};
use crate::{Error, Result};

/// Fraction of a held-out source's per-class samples kept for adaptation;
/// the rest (at least one per class) become the labeled test set.
const HOLD_OUT_ADAPT_FRACTION: f64 = 0.8;

/// One target evaluation: which source (if any) is excluded because the
/// target was carved out of it.
#[derive(Debug, Clone)]
pub struct PlannedTarget {
    pub target: TargetDomain,
    pub true_group: Option<Group>,
    /// Index of the source this target was held out from, if any; that
    /// source must not train or adapt the model judging it.
    pub excluded_source: Option<usize>,
}

impl PlannedTarget {
    /// The sources this target is adapted against.
    pub fn active_sources(&self, all: &[SourceDomain]) -> Vec<SourceDomain> {
        all.iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != self.excluded_source)
            .map(|(_, s)| s.clone())
            .collect()
    }
}

/// All the work one evaluation seed entails.
#[derive(Debug, Clone)]
pub struct EvaluationPlan {
    pub sources: Vec<SourceDomain>,
    pub tasks: Vec<PlannedTarget>,
}

/// Runs the configured experiment: every seed in the seed list gets a full
/// evaluation, and all results land in one report. Per-target errors become
/// failure entries and the run continues; configuration and output errors
/// abort. Writes `report.json` and one trajectory CSV per successful target
/// into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::io(config.output_dir.display().to_string(), e))?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &seed in &config.seeds {
        let plan = plan_evaluation(config, seed)?;
        // The model depends only on which source is excluded, so targets
        // sharing a source set share one training run.
        let mut models: HashMap<Option<usize>, SiModel> = HashMap::new();
        for task in &plan.tasks {
            match evaluate_target(config, seed, &plan.sources, task, &mut models) {
                Ok((record, result)) => {
                    if !result.alpha_trajectory.is_empty() {
                        let name = format!(
                            "trajectory-seed{seed}-{}.csv",
                            sanitize_id(&record.target_id)
                        );
                        export_trajectory(&result, &config.output_dir.join(name))?;
                    }
                    records.push(record);
                }
                Err(e) => failures.push(TargetFailure {
                    target_id: format!("{} (seed {seed})", task.target.id),
                    message: e.to_string(),
                }),
            }
        }
    }

    let mut report = Report::new(config.seeds.clone(), records, failures);
    report.generated_at_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs());
    save_report(&report, &config.output_dir.join("report.json"))?;
    Ok(report)
}

/// Turns the configured data description into concrete source domains and
/// target tasks for one evaluation seed.
pub fn plan_evaluation(config: &ExperimentConfig, seed: u64) -> Result<EvaluationPlan> {
    config.validate()?;
    if let Some(name) = &config.scenario {
        let mut spec = scenario_by_name(name)?;
        spec.seed = seed;
        let scenario = generate_scenario(&spec)?;
        let tasks = scenario
            .targets
            .into_iter()
            .map(|t| PlannedTarget {
                target: t.domain,
                true_group: Some(t.true_group),
                excluded_source: None,
            })
            .collect();
        return Ok(EvaluationPlan { sources: scenario.sources, tasks });
    }

    let mut sources = Vec::new();
    let mut explicit = Vec::new();
    for path in &config.dataset_paths {
        match load_dataset(path)? {
            Dataset::Source(s) => sources.push(s),
            Dataset::Target { domain, true_group } => explicit.push((domain, true_group)),
        }
    }
    let tasks: Vec<PlannedTarget> = if explicit.is_empty() {
        if sources.len() < 2 {
            return Err(Error::Config(
                "leave-one-out needs at least two labeled source files".into(),
            ));
        }
        (0..sources.len())
            .map(|j| {
                let target = hold_out_target(&sources[j], seed, j as u64)?;
                Ok(PlannedTarget {
                    target,
                    true_group: Some(sources[j].group),
                    excluded_source: Some(j),
                })
            })
            .collect::<Result<_>>()?
    } else {
        if sources.is_empty() {
            return Err(Error::Config(
                "target files need at least one labeled source file".into(),
            ));
        }
        explicit
            .into_iter()
            .map(|(domain, true_group)| PlannedTarget {
                target: domain,
                true_group,
                excluded_source: None,
            })
            .collect()
    };
    Ok(EvaluationPlan { sources, tasks })
}

/// Splits a labeled domain into unlabeled adaptation inputs and a labeled
/// test set, class by class, keeping at least one test sample per class.
fn hold_out_target(held: &SourceDomain, seed: u64, index: u64) -> Result<TargetDomain> {
    let classes = held
        .label_dim()
        .ok_or_else(|| Error::invalid("hold-out split", "held-out domain is empty"))?;
    let mut by_class: Vec<Vec<&JointSample>> = vec![Vec::new(); classes];
    for sample in &held.samples {
        let class = sample.one_hot_class().ok_or_else(|| {
            Error::invalid("hold-out split", "held-out labels must be one-hot")
        })?;
        by_class[class].push(sample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index),
    );
    let mut adaptation_inputs = Vec::new();
    let mut test_samples = Vec::new();
    for (class, mut samples) in by_class.into_iter().enumerate() {
        if samples.len() < 2 {
            return Err(Error::invalid(
                "hold-out split",
                format!(
                    "class {class} of '{}' has {} sample(s); need at least 2 to split",
                    held.id,
                    samples.len()
                ),
            ));
        }
        samples.shuffle(&mut rng);
        let n_adapt = ((samples.len() as f64 * HOLD_OUT_ADAPT_FRACTION).round() as usize)
            .clamp(1, samples.len() - 1);
        for (k, sample) in samples.into_iter().enumerate() {
            if k < n_adapt {
                adaptation_inputs.push(sample.features.clone());
            } else {
                test_samples.push(sample.clone());
            }
        }
    }
    Ok(TargetDomain {
        id: held.id.clone(),
        adaptation_inputs,
        test_samples: Some(test_samples),
    })
}

fn evaluate_target(
    config: &ExperimentConfig,
    seed: u64,
    sources: &[SourceDomain],
    task: &PlannedTarget,
    models: &mut HashMap<Option<usize>, SiModel>,
) -> Result<(TargetRecord, AdaptResult)> {
    let active = task.active_sources(sources);

    let model = match models.get(&task.excluded_source) {
        Some(model) => model.clone(),
        None => {
            let mut train_cfg = config.train.clone();
            train_cfg.seed = train_cfg.seed.wrapping_add(seed);
            let (model, _) = train_si(&active, &config.net, &train_cfg)?;
            models.insert(task.excluded_source, model.clone());
            model
        }
    };

    let test = task.target.test_samples.as_ref().ok_or_else(|| {
        Error::invalid("evaluation", "target carries no labeled test samples")
    })?;
    let si_cer = error_rate_on(&model, test)?;

    let result = adapt(&active, &task.target, &model.extractor, &model.classifier, &config.adapt)?;
    let adapted = SiModel {
        extractor: model.extractor.clone(),
        classifier: result.classifier.clone(),
    };
    let adapted_cer = error_rate_on(&adapted, test)?;

    let groups: Vec<Group> = active.iter().map(|s| s.group).collect();
    let scores = group_scores(&result.alpha, &groups)?;
    let alpha = result
        .sources
        .iter()
        .zip(result.alpha.as_slice())
        .map(|(s, &weight)| SourceWeight {
            source_id: s.id.clone(),
            group: s.group,
            weight,
        })
        .collect();

    let record = TargetRecord {
        target_id: task.target.id.clone(),
        seed,
        si_cer,
        adapted_cer,
        alpha,
        hs: scores.hs,
        ds: scores.ds,
        detected_group: detect_group(scores),
        true_group: task.true_group,
        converged: result.converged,
        convergence_epoch: result.converged_epoch,
    };
    Ok((record, result))
}

fn error_rate_on(model: &SiModel, test: &[JointSample]) -> Result<f64> {
    let mut predictions = Vec::with_capacity(test.len());
    let mut references = Vec::with_capacity(test.len());
    for sample in test {
        let class = sample.one_hot_class().ok_or_else(|| {
            Error::invalid("evaluation", "test labels must be one-hot")
        })?;
        references.push(class);
        predictions.push(model.predict_class(&sample.features)?);
    }
    command_error_rate(&predictions, &references)
}

fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::AdaptConfig;
    use crate::io::load_report;
    use crate::nn::{NetDims, TrainConfig};
    use crate::synthgen::{ScenarioSpec, TargetRecipe, TargetSpec};
    use std::path::PathBuf;
    use tempfile::tempdir;

    // Structural tests only need the pipeline to run, not to run well, so
    // shrink every budget that drives runtime.
    fn small_settings(config: &mut ExperimentConfig) {
        config.net = NetDims { hidden: vec![12], embedding: 6 };
        config.train = TrainConfig { epochs: 25, ..TrainConfig::default() };
        config.adapt = AdaptConfig {
            epochs: 3,
            f_steps: 2,
            sinkhorn_tol: 1e-4,
            sinkhorn_max_iter: 2_000,
            ..AdaptConfig::default()
        };
    }

    fn tiny_spec(seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            classes: 3,
            samples_per_class: 8,
            input_dim: 3,
            class_spread: 1.5,
            noise_sigma: 0.15,
            within_group_shift: 1.0,
            cross_group_shift: 5.0,
            groups: vec![Group::A, Group::B],
            targets: vec![TargetSpec {
                id: "t0".into(),
                recipe: TargetRecipe::CloneOf { source: 1 },
            }],
            target_adapt_per_class: 4,
            target_test_per_class: 2,
            target_shift: 0.0,
            seed,
        }
    }

    #[test]
    fn scenario_runs_produce_a_complete_report() {
        let dir = tempdir().unwrap();
        let mut config = ExperimentConfig {
            scenario: Some("planted-clone".into()),
            dataset_paths: vec![],
            net: NetDims::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            seeds: vec![0],
            output_dir: dir.path().join("out"),
        };
        small_settings(&mut config);

        let report = run_experiment(&config).unwrap();
        assert_eq!(report.failures, vec![]);
        assert_eq!(report.records.len(), 1);
        let record = &report.records[0];
        assert_eq!(record.target_id, "t-clone");
        assert_eq!(record.seed, 0);
        let mass: f64 = record.alpha.iter().map(|w| w.weight).sum();
        assert!((mass - 1.0).abs() <= 1e-9);
        assert!(record.si_cer.is_finite() && record.adapted_cer.is_finite());
        assert_eq!(record.true_group, Some(Group::A));

        assert!(config.output_dir.join("report.json").exists());
        assert!(config.output_dir.join("trajectory-seed0-t-clone.csv").exists());
        assert_eq!(load_report(&config.output_dir.join("report.json")).unwrap(), report);
    }

    #[test]
    fn reruns_with_the_same_seed_are_identical_modulo_timestamp() {
        let dir = tempdir().unwrap();
        let mut config = ExperimentConfig {
            scenario: Some("planted-clone".into()),
            dataset_paths: vec![],
            net: NetDims::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            seeds: vec![3],
            output_dir: dir.path().join("a"),
        };
        small_settings(&mut config);
        let first = run_experiment(&config).unwrap();
        let first_csv = fs::read(config.output_dir.join("trajectory-seed3-t-clone.csv")).unwrap();

        config.output_dir = dir.path().join("b");
        let second = run_experiment(&config).unwrap();
        let second_csv = fs::read(config.output_dir.join("trajectory-seed3-t-clone.csv")).unwrap();

        assert_eq!(first.without_timestamp(), second.without_timestamp());
        assert_eq!(
            serde_json::to_string(&first.without_timestamp()).unwrap(),
            serde_json::to_string(&second.without_timestamp()).unwrap()
        );
        assert_eq!(first_csv, second_csv);
    }

    #[test]
    fn different_seeds_draw_different_data() {
        let dir = tempdir().unwrap();
        let mut config = ExperimentConfig {
            scenario: Some("planted-clone".into()),
            dataset_paths: vec![],
            net: NetDims::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            seeds: vec![0, 1],
            output_dir: dir.path().join("out"),
        };
        small_settings(&mut config);
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.records.len(), 2);
        assert_eq!(report.records[0].seed, 0);
        assert_eq!(report.records[1].seed, 1);
        // Same target recipe, different draw: the weight vectors differ.
        let a: Vec<f64> = report.records[0].alpha.iter().map(|w| w.weight).collect();
        let b: Vec<f64> = report.records[1].alpha.iter().map(|w| w.weight).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn unknown_scenarios_are_config_errors() {
        let dir = tempdir().unwrap();
        let config = ExperimentConfig {
            scenario: Some("no-such-scenario".into()),
            dataset_paths: vec![],
            net: NetDims::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            seeds: vec![0],
            output_dir: dir.path().join("out"),
        };
        let err = run_experiment(&config).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn source_files_run_leave_one_out() {
        let dir = tempdir().unwrap();
        let scenario = generate_scenario(&tiny_spec(11)).unwrap();
        let mut paths = Vec::new();
        for source in &scenario.sources {
            let path = dir.path().join(format!("{}.txt", source.id));
            crate::io::save_dataset(&Dataset::Source(source.clone()), &path).unwrap();
            paths.push(path);
        }

        let mut config = ExperimentConfig {
            scenario: None,
            dataset_paths: paths,
            net: NetDims::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            seeds: vec![0],
            output_dir: dir.path().join("out"),
        };
        small_settings(&mut config);
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.failures, vec![]);
        assert_eq!(report.records.len(), 2);
        let ids: Vec<&str> = report.records.iter().map(|r| r.target_id.as_str()).collect();
        assert_eq!(ids, vec!["s0", "s1"]);
        // Each held-out speaker keeps its own group tag as ground truth, and
        // its weight vector covers only the remaining source.
        assert_eq!(report.records[0].true_group, Some(Group::A));
        assert_eq!(report.records[1].true_group, Some(Group::B));
        for record in &report.records {
            assert_eq!(record.alpha.len(), 1);
            assert!((record.alpha[0].weight - 1.0).abs() <= 1e-9);
            assert_ne!(record.alpha[0].source_id, record.target_id);
        }
    }

    #[test]
    fn explicit_target_files_skip_the_leave_one_out_loop() {
        let dir = tempdir().unwrap();
        let scenario = generate_scenario(&tiny_spec(5)).unwrap();
        let mut paths = Vec::new();
        for source in &scenario.sources {
            let path = dir.path().join(format!("{}.txt", source.id));
            crate::io::save_dataset(&Dataset::Source(source.clone()), &path).unwrap();
            paths.push(path);
        }
        let target = &scenario.targets[0];
        let target_path = dir.path().join("target.txt");
        crate::io::save_dataset(
            &Dataset::Target {
                domain: target.domain.clone(),
                true_group: Some(target.true_group),
            },
            &target_path,
        )
        .unwrap();
        paths.push(target_path);

        let mut config = ExperimentConfig {
            scenario: None,
            dataset_paths: paths,
            net: NetDims::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            seeds: vec![0],
            output_dir: dir.path().join("out"),
        };
        small_settings(&mut config);
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.failures, vec![]);
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].target_id, "t0");
        assert_eq!(report.records[0].alpha.len(), 2);
    }

    #[test]
    fn targets_without_test_samples_become_failure_entries() {
        let dir = tempdir().unwrap();
        let scenario = generate_scenario(&tiny_spec(7)).unwrap();
        let mut paths = Vec::new();
        for source in &scenario.sources {
            let path = dir.path().join(format!("{}.txt", source.id));
            crate::io::save_dataset(&Dataset::Source(source.clone()), &path).unwrap();
            paths.push(path);
        }
        let mut bare = scenario.targets[0].domain.clone();
        bare.test_samples = None;
        let target_path = dir.path().join("target.txt");
        crate::io::save_dataset(
            &Dataset::Target { domain: bare, true_group: None },
            &target_path,
        )
        .unwrap();
        paths.push(target_path);

        let mut config = ExperimentConfig {
            scenario: None,
            dataset_paths: paths,
            net: NetDims::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            seeds: vec![0],
            output_dir: dir.path().join("out"),
        };
        small_settings(&mut config);
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.records, vec![]);
        assert_eq!(report.failures.len(), 1);
        assert!(report.failures[0].message.contains("test samples"));
        assert_eq!(report.aggregates.average_si_cer, None);
    }

    #[test]
    fn lone_source_files_cannot_run_leave_one_out() {
        let dir = tempdir().unwrap();
        let scenario = generate_scenario(&tiny_spec(1)).unwrap();
        let path = dir.path().join("only.txt");
        crate::io::save_dataset(&Dataset::Source(scenario.sources[0].clone()), &path).unwrap();
        let config = ExperimentConfig {
            scenario: None,
            dataset_paths: vec![path],
            net: NetDims::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            seeds: vec![0],
            output_dir: dir.path().join("out"),
        };
        assert!(run_experiment(&config).unwrap_err().is_config());
    }

    #[test]
    fn hold_out_splits_cover_every_class_and_stay_disjoint() {
        let scenario = generate_scenario(&tiny_spec(2)).unwrap();
        let held = &scenario.sources[0];
        let target = hold_out_target(held, 9, 0).unwrap();
        let test = target.test_samples.as_ref().unwrap();
        assert_eq!(target.adaptation_inputs.len() + test.len(), held.len());

        let mut per_class = vec![0usize; 3];
        for sample in test {
            per_class[sample.one_hot_class().unwrap()] += 1;
        }
        assert!(per_class.iter().all(|&n| n >= 1));

        // 8 samples per class at an 80/20 split: 6 or 7 go to adaptation.
        for count in &per_class {
            assert!(*count <= 2);
        }

        // No feature vector appears on both sides.
        for sample in test {
            assert!(!target
                .adaptation_inputs
                .iter()
                .any(|inp| inp == &sample.features));
        }
    }

    #[test]
    fn hold_out_needs_two_samples_per_class() {
        let scenario = generate_scenario(&ScenarioSpec {
            samples_per_class: 1,
            ..tiny_spec(0)
        })
        .unwrap();
        let err = hold_out_target(&scenario.sources[0], 0, 0).unwrap_err();
        assert!(err.to_string().contains("at least 2"));
    }

    #[test]
    fn config_validation_runs_before_any_output_is_written() {
        let dir = tempdir().unwrap();
        let out: PathBuf = dir.path().join("untouched");
        let config = ExperimentConfig {
            scenario: None,
            dataset_paths: vec![],
            net: NetDims::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            seeds: vec![0],
            output_dir: out.clone(),
        };
        assert!(run_experiment(&config).unwrap_err().is_config());
        assert!(!out.exists());
    }
}

//! Experiment CLI: generate benchmark data, train the speaker-independent
//! model, adapt targets, and run the full leave-one-out evaluation.
//!
//! Exit codes: 0 on success, 1 for configuration/input errors, 2 for
//! runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use wjdot::adaptation::adapt;
use wjdot::ot::SolveMode;
use wjdot::experiment::{plan_evaluation, run_experiment, EvaluationPlan, PlannedTarget};
use wjdot::io::{
    export_trajectory, load_model, save_dataset, save_model, Dataset, ExperimentConfig,
};
use wjdot::nn::{train_si, SiModel};
use wjdot::scoring::{detect_group, group_scores};
use wjdot::synthgen::{generate_scenario, scenario_by_name};

#[derive(Parser)]
#[command(name = "wjdot", version, about = "Multi-source domain adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Exact,
    Entropic,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured scenario and write its dataset files.
    Gen {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Evaluation seed; defaults to the first seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the speaker-independent model on all sources and save it.
    TrainSi {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path; defaults to `<output_dir>/model.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adapt every configured target once and print the recovered weights.
    Adapt {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Transport solver override.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Reuse a saved model instead of training one per source set.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Full evaluation over all seeds: report JSON plus trajectory CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the configured seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Adapt the first configured target and export its weight trajectory.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Trajectory CSV path; defaults to `<output_dir>/trace-<target>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are configuration errors; --help and --version
            // land here too and exit cleanly.
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config_error = err
                .chain()
                .filter_map(|cause| cause.downcast_ref::<wjdot::Error>())
                .any(|e| e.is_config());
            ExitCode::from(if config_error { 1 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Gen { config, seed, out } => cmd_gen(&config, seed, out),
        Command::TrainSi { config, seed, out } => cmd_train_si(&config, seed, out),
        Command::Adapt { config, seed, mode, model } => cmd_adapt(&config, seed, mode, model),
        Command::Run { config, seed, out, mode } => cmd_run(&config, seed, out, mode),
        Command::Trace { config, seed, out, mode, model } => {
            cmd_trace(&config, seed, out, mode, model)
        }
    }
}

/// Loads the configuration; any failure here counts as a configuration error.
fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    ExperimentConfig::load(path)
        .map_err(|e| wjdot::Error::Config(format!("{}: {e}", path.display())).into())
}

fn effective_seed(config: &ExperimentConfig, seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| config.seeds[0])
}

fn apply_mode(config: &mut ExperimentConfig, mode: Option<Mode>) {
    if let Some(mode) = mode {
        config.adapt.mode = match mode {
            Mode::Exact => SolveMode::Exact,
            Mode::Entropic => SolveMode::Entropic {
                epsilon: default_epsilon(&config.adapt.mode),
            },
        };
    }
}

fn default_epsilon(current: &SolveMode) -> f64 {
    match current {
        SolveMode::Entropic { epsilon } => *epsilon,
        SolveMode::Exact => match SolveMode::default() {
            SolveMode::Entropic { epsilon } => epsilon,
            SolveMode::Exact => 0.05,
        },
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn cmd_gen(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let config = load_config(config_path)?;
    let name = config.scenario.clone().ok_or_else(|| {
        wjdot::Error::Config("`gen` needs a configuration with a scenario name".into())
    })?;
    let seed = effective_seed(&config, seed);
    let out = out.unwrap_or_else(|| config.output_dir.clone());
    ensure_dir(&out)?;

    let mut spec = scenario_by_name(&name)?;
    spec.seed = seed;
    let scenario = generate_scenario(&spec)?;
    for source in &scenario.sources {
        let path = out.join(format!("{}.txt", source.id));
        save_dataset(&Dataset::Source(source.clone()), &path)?;
        println!("wrote source {} -> {}", source.id, path.display());
    }
    for target in &scenario.targets {
        let path = out.join(format!("{}.txt", target.domain.id));
        save_dataset(
            &Dataset::Target {
                domain: target.domain.clone(),
                true_group: Some(target.true_group),
            },
            &path,
        )?;
        println!("wrote target {} -> {}", target.domain.id, path.display());
    }
    Ok(())
}

fn cmd_train_si(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let config = load_config(config_path)?;
    let seed = effective_seed(&config, seed);
    let plan = plan_evaluation(&config, seed)?;

    let mut train_cfg = config.train.clone();
    train_cfg.seed = train_cfg.seed.wrapping_add(seed);
    let (model, history) = train_si(&plan.sources, &config.net, &train_cfg)?;

    let path = out.unwrap_or_else(|| config.output_dir.join("model.json"));
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    save_model(&model, &path)?;
    let samples: usize = plan.sources.iter().map(|s| s.len()).sum();
    println!(
        "trained on {} sources ({} samples), best epoch {}; saved {}",
        plan.sources.len(),
        samples,
        history.best_epoch,
        path.display()
    );
    Ok(())
}

/// Trains a model for the task's source set, or reuses a checkpoint.
fn model_for_task(
    config: &ExperimentConfig,
    seed: u64,
    plan: &EvaluationPlan,
    task: &PlannedTarget,
    checkpoint: &Option<SiModel>,
) -> anyhow::Result<SiModel> {
    if let Some(model) = checkpoint {
        return Ok(model.clone());
    }
    let mut train_cfg = config.train.clone();
    train_cfg.seed = train_cfg.seed.wrapping_add(seed);
    let (model, _) = train_si(&task.active_sources(&plan.sources), &config.net, &train_cfg)?;
    Ok(model)
}

fn cmd_adapt(
    config_path: &Path,
    seed: Option<u64>,
    mode: Option<Mode>,
    model_path: Option<PathBuf>,
) -> anyhow::Result<()> {
    let mut config = load_config(config_path)?;
    apply_mode(&mut config, mode);
    let seed = effective_seed(&config, seed);
    let plan = plan_evaluation(&config, seed)?;
    let checkpoint = model_path.as_deref().map(load_model).transpose()?;

    for task in &plan.tasks {
        let model = model_for_task(&config, seed, &plan, task, &checkpoint)?;
        let active = task.active_sources(&plan.sources);
        let result = adapt(&active, &task.target, &model.extractor, &model.classifier, &config.adapt)?;
        let scores = group_scores(
            &result.alpha,
            &active.iter().map(|s| s.group).collect::<Vec<_>>(),
        )?;
        let weights = result
            .sources
            .iter()
            .zip(result.alpha.as_slice())
            .map(|(s, w)| format!("{}={w:.4}", s.id))
            .collect::<Vec<_>>()
            .join(" ");
        println!(
            "target {}: {} | hs={:.4} ds={:.4} detected={} converged={}",
            task.target.id,
            weights,
            scores.hs,
            scores.ds,
            detect_group(scores).as_str(),
            result.converged,
        );
    }
    Ok(())
}

fn cmd_run(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    mode: Option<Mode>,
) -> anyhow::Result<()> {
    let mut config = load_config(config_path)?;
    apply_mode(&mut config, mode);
    if let Some(seed) = seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = out {
        config.output_dir = out;
    }

    let report = run_experiment(&config)?;
    for record in &report.records {
        println!(
            "seed {} target {}: cer {:.2} -> {:.2} | hs={:.4} ds={:.4} detected={}",
            record.seed,
            record.target_id,
            record.si_cer,
            record.adapted_cer,
            record.hs,
            record.ds,
            record.detected_group.as_str(),
        );
    }
    for failure in &report.failures {
        eprintln!("failed target {}: {}", failure.target_id, failure.message);
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.2}"));
    println!(
        "{} targets, {} failures | average cer {} -> {} | detection accuracy {}",
        report.records.len(),
        report.failures.len(),
        fmt(report.aggregates.average_si_cer),
        fmt(report.aggregates.average_adapted_cer),
        fmt(report.aggregates.detection_accuracy),
    );
    println!("report: {}", config.output_dir.join("report.json").display());
    Ok(())
}

fn cmd_trace(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    mode: Option<Mode>,
    model_path: Option<PathBuf>,
) -> anyhow::Result<()> {
    let mut config = load_config(config_path)?;
    apply_mode(&mut config, mode);
    config.adapt.record_trajectory = true;
    let seed = effective_seed(&config, seed);
    let plan = plan_evaluation(&config, seed)?;
    let task = plan
        .tasks
        .first()
        .ok_or_else(|| wjdot::Error::Config("no targets to trace".into()))?;
    let checkpoint = model_path.as_deref().map(load_model).transpose()?;

    let model = model_for_task(&config, seed, &plan, task, &checkpoint)?;
    let active = task.active_sources(&plan.sources);
    let result = adapt(&active, &task.target, &model.extractor, &model.classifier, &config.adapt)?;

    let path = out.unwrap_or_else(|| config.output_dir.join(format!("trace-{}.csv", task.target.id)));
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    export_trajectory(&result, &path)?;
    println!(
        "wrote trajectory for target {} ({} epochs x {} sources) -> {}",
        task.target.id,
        result.alpha_trajectory.len(),
        result.sources.len(),
        path.display()
    );
    Ok(())
}

//! Command-line surface. Every subcommand reads an optional run config, writes its outputs
//! under `--out`, and prints one `key=value` summary line to stdout.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{config_err, Error, Result};
use crate::evaluation::{
    evaluate, loss_landscape, noise_probe, regenerate_truth, timescale_sweep, timing_bench, LandscapeSpec,
};
use crate::io::{
    opt, read_checkpoint, read_dataset, write_checkpoint, write_dataset, Checkpoint, CsvTable, LogDigest,
    RunConfig,
};
use crate::labels::compute_derivative_labels;
use crate::pde_data::{generate_dataset, Trajectory};
use crate::surrogate::{ArchConfig, Model};
use crate::training::{train, Objective, Sample, Surrogate, TrainConfig, TrainingData};

#[derive(Debug, Parser)]
#[command(name = "pde-surrogate", version, about = "Neural PDE surrogates: state vs derivative prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run config (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a trajectory dataset.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Write a copy of a dataset with derivative labels attached.
    Labels {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train a surrogate on the training split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Overrides `train.objective` (`state` or `derivative`).
        #[arg(long)]
        objective: Option<String>,
    },
    /// Dump one predicted trajectory next to the truth.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Index of the sample within the dataset.
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Metrics of one or more checkpoints over the validation split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
    },
    /// Rollout error over a grid of timesteps and integrators.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Derivative-prediction checkpoint; required when the sweep includes that objective.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Validation loss on a plane of filter-normalized parameter directions.
    Landscape {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Serial rollout timing per integrator.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
    },
    /// Label sensitivity to Gaussian state noise.
    NoiseProbe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Labels { .. } => "labels",
            Command::Train { .. } => "train",
            Command::Rollout { .. } => "rollout",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Landscape { .. } => "landscape",
            Command::Bench { .. } => "bench",
            Command::NoiseProbe { .. } => "noise-probe",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Generate { common }
            | Command::Labels { common, .. }
            | Command::Train { common, .. }
            | Command::Rollout { common, .. }
            | Command::Eval { common, .. }
            | Command::Sweep { common, .. }
            | Command::Landscape { common, .. }
            | Command::Bench { common, .. }
            | Command::NoiseProbe { common, .. } => common,
        }
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the exit status:
/// 0 on success, 2 for usage errors, 1 for every other failure.
pub fn run_command<I, A>(argv: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            if code != 0 {
                println!("status=error category=usage");
            }
            return code;
        }
    };
    let name = cli.command.name();
    match run(&cli.command) {
        Ok(fields) => {
            let mut line = format!("{name} status=ok");
            for (k, v) in fields {
                line.push_str(&format!(" {k}={v}"));
            }
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            println!("{name} status=error category={}", e.category());
            match e {
                Error::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}

type Summary = Vec<(&'static str, String)>;

fn load_config(common: &Common) -> Result<RunConfig> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = common.seed.unwrap_or(cfg.seed);
    let cfg = cfg.with_seed(seed);
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<&Path> {
    std::fs::create_dir_all(&common.out)?;
    Ok(&common.out)
}

fn load_split(dataset: &Path, cfg: &RunConfig) -> Result<TrainingData> {
    let contents = read_dataset(dataset)?;
    TrainingData::split(contents.trajectories, contents.labels, cfg.n_val)
}

/// Validation samples with labels present, computed under `scheme` when missing.
fn labelled(samples: &[Sample], scheme: crate::labels::LabelScheme) -> Result<Vec<Sample>> {
    samples
        .iter()
        .map(|s| {
            Ok(Sample {
                traj: s.traj.clone(),
                labels: match &s.labels {
                    Some(l) => Some(l.clone()),
                    None => Some(compute_derivative_labels(&s.traj, scheme)?),
                },
            })
        })
        .collect()
}

fn label_of(path: &Path) -> String {
    path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
}

fn model_arch(cfg: &RunConfig, n_x: usize) -> Result<ArchConfig> {
    if cfg.arch.n_x != n_x {
        return Err(config_err(format!(
            "config grid has {} nodes, dataset has {n_x}",
            cfg.arch.n_x
        )));
    }
    Ok(cfg.arch)
}

fn train_checkpoint(cfg: &RunConfig, train_cfg: &TrainConfig, data: &TrainingData) -> Result<(Checkpoint, Vec<crate::training::EpochLog>)> {
    let n_x = data.train.first().map_or(0, |s| s.traj.n_x());
    let model = Model::<f64>::init(model_arch(cfg, n_x)?, cfg.seed)?;
    let outcome = train(train_cfg, data, model)?;
    let ck = Checkpoint {
        surrogate: outcome.surrogate,
        train_config: *train_cfg,
        log: LogDigest::from_log(&outcome.log),
    };
    Ok((ck, outcome.log))
}

fn run(cmd: &Command) -> Result<Summary> {
    let common = cmd.common();
    let cfg = load_config(common)?;
    let out = out_dir(common)?;
    match cmd {
        Command::Generate { .. } => {
            let path = out.join("dataset.npdt");
            generate_dataset(&cfg.dataset_spec(), &path)?;
            Ok(vec![
                ("samples", cfg.n_samples.to_string()),
                ("bytes", std::fs::metadata(&path)?.len().to_string()),
                ("path", path.display().to_string()),
            ])
        }
        Command::Labels { dataset, .. } => {
            let path = out.join("dataset_labeled.npdt");
            if same_file(dataset, &path) {
                return Err(Error::Usage("labels would overwrite its input; choose another --out".into()));
            }
            let contents = read_dataset(dataset)?;
            let scheme = cfg.train.label_scheme;
            let labels = contents
                .trajectories
                .iter()
                .map(|t| compute_derivative_labels(t, scheme))
                .collect::<Result<Vec<_>>>()?;
            write_dataset(&path, &contents.trajectories, Some(&labels))?;
            Ok(vec![
                ("samples", contents.trajectories.len().to_string()),
                ("scheme", scheme.name().into()),
                ("path", path.display().to_string()),
            ])
        }
        Command::Train { dataset, objective, .. } => {
            let mut train_cfg = cfg.train;
            if let Some(o) = objective {
                train_cfg.objective =
                    Objective::parse(o).ok_or_else(|| Error::Usage(format!("unknown objective `{o}`")))?;
            }
            let data = load_split(dataset, &cfg)?;
            let (ck, log) = train_checkpoint(&cfg, &train_cfg, &data)?;
            let name = train_cfg.objective.name();
            let path = out.join(format!("model_{name}.npck"));
            write_checkpoint(&path, &ck)?;
            let mut table = CsvTable::new(&["epoch", "train_loss", "val_loss", "wall_seconds"]);
            for e in &log {
                table.push(vec![
                    e.epoch.to_string(),
                    e.train_loss.to_string(),
                    e.val_loss.to_string(),
                    e.wall_seconds.to_string(),
                ])?;
            }
            table.write(&out.join(format!("train_log_{name}.csv")))?;
            Ok(vec![
                ("objective", name.into()),
                ("epochs", ck.log.epochs.to_string()),
                ("final_train_loss", ck.log.final_train_loss.to_string()),
                ("final_val_loss", ck.log.final_val_loss.to_string()),
                ("path", path.display().to_string()),
            ])
        }
        Command::Rollout {
            dataset,
            checkpoint,
            sample,
            ..
        } => {
            let contents = read_dataset(dataset)?;
            let traj = contents
                .trajectories
                .get(*sample)
                .ok_or_else(|| Error::Usage(format!("sample {sample} out of range")))?;
            let ck = read_checkpoint(checkpoint)?;
            let s = Sample {
                traj: traj.clone(),
                labels: None,
            };
            let kind = cfg.rollout_integrator;
            let dt = traj.uniform_dt()?;
            let r = ck.surrogate.rollout(
                traj.frame(0),
                traj.coefficient,
                crate::integrators::RolloutOptions::new(dt, traj.n_t() - 1),
                kind,
            )?;
            let mut table = CsvTable::new(&["step", "t", "node", "x", "pred", "truth"]);
            for (k, row) in r.frames.iter_rows().enumerate() {
                for (m, v) in row.iter().enumerate() {
                    table.push(vec![
                        k.to_string(),
                        r.times[k].to_string(),
                        m.to_string(),
                        traj.grid.x(m).to_string(),
                        v.to_string(),
                        traj.frame(k)[m].to_string(),
                    ])?;
                }
            }
            let path = out.join("rollout.csv");
            table.write(&path)?;
            let rec = evaluate(&label_of(checkpoint), &ck.surrogate, &labelled(&[s], ck.train_config.label_scheme)?, kind)?;
            Ok(vec![
                ("sample", sample.to_string()),
                ("integrator", opt(rec.integrator.map(|k| k.name()))),
                ("rollout_error", rec.rollout_error.to_string()),
                ("diverged_at", opt(r.diverged_at)),
                ("path", path.display().to_string()),
            ])
        }
        Command::Eval {
            dataset, checkpoint, ..
        } => {
            let data = load_split(dataset, &cfg)?;
            let mut metrics = CsvTable::new(&[
                "label",
                "objective",
                "integrator",
                "rollout_error",
                "correlation_time",
                "next_step_error",
                "derivative_error",
                "diverged",
            ]);
            let mut curves = CsvTable::new(&["label", "integrator", "frame", "error"]);
            for path in checkpoint {
                let ck = read_checkpoint(path)?;
                let label = label_of(path);
                let val = labelled(&data.val, ck.train_config.label_scheme)?;
                let kinds = match ck.surrogate.meta.objective {
                    Objective::State => vec![crate::integrators::IntegratorKind::ForwardEuler],
                    Objective::Derivative => cfg.eval_integrators.clone(),
                };
                for kind in kinds {
                    let rec = evaluate(&label, &ck.surrogate, &val, kind)?;
                    let integrator = opt(rec.integrator.map(|k| k.name()));
                    metrics.push(vec![
                        rec.label.clone(),
                        rec.objective.name().into(),
                        integrator.clone(),
                        rec.rollout_error.to_string(),
                        rec.correlation_time.to_string(),
                        rec.next_step_error.to_string(),
                        opt(rec.derivative_error),
                        rec.diverged.to_string(),
                    ])?;
                    for (i, e) in rec.error_curve.iter().enumerate() {
                        curves.push(vec![label.clone(), integrator.clone(), (i + 1).to_string(), e.to_string()])?;
                    }
                }
            }
            let path = out.join("metrics.csv");
            metrics.write(&path)?;
            curves.write(&out.join("error_curves.csv"))?;
            Ok(vec![("rows", metrics.len().to_string()), ("path", path.display().to_string())])
        }
        Command::Sweep {
            dataset, checkpoint, ..
        } => {
            let data = load_split(dataset, &cfg)?;
            let derivative = checkpoint.as_deref().map(read_checkpoint).transpose()?;
            let mut state_models = Vec::new();
            if cfg.sweep.objectives.contains(&Objective::State) {
                let native_dt = data.val.first().ok_or_else(|| config_err("empty validation split"))?.traj.uniform_dt()?;
                for &dt in &cfg.sweep.dts {
                    let steps = cfg.sweep.steps(dt, native_dt)?;
                    let train_split = data
                        .train
                        .iter()
                        .map(|s| {
                            let u = regenerate_truth(&s.traj, dt, steps)?;
                            let times = (0..=steps).map(|k| s.traj.times[0] + k as f64 * dt).collect();
                            Ok(Sample {
                                traj: Trajectory::new(s.traj.grid, times, u, s.traj.equation, s.traj.coefficient, s.traj.seed)?,
                                labels: None,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let regenerated = TrainingData {
                        train: train_split,
                        val: Vec::new(),
                    };
                    let train_cfg = TrainConfig {
                        objective: Objective::State,
                        temporal_stride: 1,
                        ..cfg.train
                    };
                    state_models.push(train_checkpoint(&cfg, &train_cfg, &regenerated)?.0.surrogate);
                }
            }
            let state_refs: Vec<&Surrogate<f64>> = state_models.iter().collect();
            let rows = timescale_sweep(&cfg.sweep, &data.val, derivative.as_ref().map(|c| &c.surrogate), &state_refs)?;
            let mut table = CsvTable::new(&["dt", "steps", "objective", "integrator", "rollout_error", "cfl", "diverged"]);
            for r in &rows {
                table.push(vec![
                    r.dt.to_string(),
                    r.steps.to_string(),
                    r.objective.name().into(),
                    opt(r.integrator.map(|k| k.name())),
                    r.rollout_error.to_string(),
                    opt(r.cfl),
                    r.diverged.to_string(),
                ])?;
            }
            let path = out.join("sweep.csv");
            table.write(&path)?;
            Ok(vec![("rows", rows.len().to_string()), ("path", path.display().to_string())])
        }
        Command::Landscape {
            dataset, checkpoint, ..
        } => {
            let data = load_split(dataset, &cfg)?;
            let ck = read_checkpoint(checkpoint)?;
            let l = &cfg.landscape;
            let spec = LandscapeSpec::square(
                l.points,
                l.extent,
                cfg.seed.wrapping_mul(2).wrapping_add(1),
                cfg.seed.wrapping_mul(2).wrapping_add(2),
                l.integrator,
            )?;
            let n = l.samples.min(data.val.len());
            let grid = loss_landscape(&ck.surrogate, &data.val[..n], &spec)?;
            let mut table = CsvTable::new(&["a", "b", "loss"]);
            for (i, a) in grid.coords.iter().enumerate() {
                for (j, b) in grid.coords.iter().enumerate() {
                    table.push(vec![a.to_string(), b.to_string(), grid.values[i][j].to_string()])?;
                }
            }
            let path = out.join("landscape.csv");
            table.write(&path)?;
            Ok(vec![
                ("points", l.points.to_string()),
                ("center_is_minimum", opt(grid.center_is_minimum())),
                ("path", path.display().to_string()),
            ])
        }
        Command::Bench {
            dataset, checkpoint, ..
        } => {
            let data = load_split(dataset, &cfg)?;
            let cks = checkpoint
                .iter()
                .map(|p| Ok((label_of(p), read_checkpoint(p)?)))
                .collect::<Result<Vec<_>>>()?;
            let models: Vec<(&str, &Surrogate<f64>)> = cks.iter().map(|(l, c)| (l.as_str(), &c.surrogate)).collect();
            let n = cfg.bench.samples.min(data.val.len());
            let rows = timing_bench(&models, &data.val[..n], &cfg.eval_integrators, cfg.bench.repeats)?;
            let mut table = CsvTable::new(&[
                "label",
                "integrator",
                "steps",
                "evaluations",
                "seconds_per_rollout",
                "rollout_error",
            ]);
            for r in &rows {
                table.push(vec![
                    r.label.clone(),
                    opt(r.integrator.map(|k| k.name())),
                    r.steps.to_string(),
                    r.evaluations.to_string(),
                    r.seconds_per_rollout.to_string(),
                    r.rollout_error.to_string(),
                ])?;
            }
            let path = out.join("bench.csv");
            table.write(&path)?;
            Ok(vec![("rows", rows.len().to_string()), ("path", path.display().to_string())])
        }
        Command::NoiseProbe { dataset, .. } => {
            let contents = read_dataset(dataset)?;
            let traj = contents
                .trajectories
                .get(cfg.noise.sample)
                .ok_or_else(|| config_err(format!("noise.sample {} out of range", cfg.noise.sample)))?;
            let scheme = cfg.train.label_scheme;
            let p = noise_probe(traj, cfg.noise.variance, scheme, cfg.seed)?;
            let mut table = CsvTable::new(&[
                "variance",
                "scheme",
                "state_relative",
                "label_relative",
                "amplification",
                "label_noise_rms",
                "predicted_label_noise_rms",
            ]);
            table.push(vec![
                p.variance.to_string(),
                scheme.name().into(),
                p.state_relative.to_string(),
                p.label_relative.to_string(),
                p.amplification().to_string(),
                p.label_noise_rms.to_string(),
                p.predicted_label_noise_rms.to_string(),
            ])?;
            let path = out.join("noise_probe.csv");
            table.write(&path)?;
            Ok(vec![
                ("amplification", p.amplification().to_string()),
                ("gain_ratio", p.gain_ratio().to_string()),
                ("path", path.display().to_string()),
            ])
        }
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use log::info;
use mbes_core::dataset::split_train_val;
use mbes_core::io::{load_survey, save_survey};
use mbes_core::metrics::{evaluate_surveys, write_patch_csv};
use mbes_core::pipeline::{baseline_survey, denoise_survey, detect_survey};
use mbes_core::scorenet::{load_checkpoint, save_checkpoint, train};
use mbes_core::sweep::{sweep_baselines, write_sweep_csv};
use mbes_core::synth::generate_survey;
use mbes_core::{prepare_split, Preset, ScoreModelParams, Survey};
use serde::Serialize;

use crate::config::*;
use crate::{Cli, Command, Failure, GlobalArgs};

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

/// Settings shared by every subcommand.
struct RunContext {
    file: ConfigFile,
    seed: u64,
    deterministic: bool,
    threads: Option<usize>,
}

impl RunContext {
    fn new(g: &GlobalArgs) -> Result<Self, Failure> {
        let file = match &g.config {
            Some(p) => ConfigFile::load(p).usage()?,
            None => ConfigFile::default(),
        };
        let env_seed = match std::env::var("MBES_SEED") {
            Ok(s) => Some(s.trim().parse::<u64>().map_err(|e| anyhow!("MBES_SEED={s:?}: {e}")).usage()?),
            Err(_) => None,
        };
        validate_sections(&file).usage()?;
        let seed = g.seed.or(file.seed).or(env_seed).unwrap_or(0);
        let deterministic = g.deterministic || file.deterministic.unwrap_or(false);
        let threads = g.threads.or(file.threads);
        Ok(Self { file, seed, deterministic, threads })
    }

    fn snapshot<T: Serialize>(&self, out: &Path, command: &str, settings: &T) -> Result<()> {
        let path = write_snapshot(out, command, self.seed, self.deterministic, self.threads, settings)?;
        info!("effective configuration written to {}", path.display());
        Ok(())
    }
}

/// Reject unknown keys in every table, not only the one the command reads.
fn validate_sections(f: &ConfigFile) -> Result<()> {
    let desk = Preset::desk();
    overlay(&GenerateSettings::from_preset(&desk, Split::Train), f.generate.as_ref(), "generate")?;
    overlay(&TrainSettings::from_preset(&desk), f.train.as_ref(), "train")?;
    overlay(&DetectSettings::default(), f.detect.as_ref(), "detect")?;
    overlay(&DenoiseSettings::default(), f.denoise.as_ref(), "denoise")?;
    overlay(&BaselineSettings::default(), f.baseline.as_ref(), "baseline")?;
    overlay(&EvalSettings::default(), f.eval.as_ref(), "eval")?;
    overlay(&SweepSettings::default(), f.sweep.as_ref(), "sweep")?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = RunContext::new(&cli.global)?;
    if let Some(n) = ctx.threads {
        if n == 0 {
            return Err(Failure::Usage(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(anyhow::Error::from)?;
    }
    if ctx.deterministic {
        // Every parallel reduction already combines results in a fixed order.
        info!("deterministic mode");
    }
    match cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Detect(a) => infer(&ctx, a, false),
        Command::Denoise(a) => infer(&ctx, a, true),
        Command::Baseline(a) => baseline(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
    }
}

fn preset(name: &str, seed: u64) -> Result<Preset, Failure> {
    Ok(Preset::by_name(name).usage()?.with_seed(seed))
}

fn table_str(table: Option<&serde_json::Value>, key: &str) -> Option<String> {
    table?.get(key)?.as_str().map(str::to_owned)
}

fn load(path: &Path) -> Result<(Survey, Option<f64>)> {
    load_survey(path).with_context(|| format!("reading {}", path.display()))
}

fn generate(ctx: &RunContext, a: crate::GenerateArgs) -> Result<(), Failure> {
    let table = ctx.file.generate.as_ref();
    let name = a.preset.clone().or_else(|| table_str(table, "preset")).unwrap_or_else(|| "desk".into());
    let split = match (a.split, table_str(table, "split")) {
        (Some(s), _) => s,
        (None, Some(s)) => <Split as clap::ValueEnum>::from_str(&s, false).map_err(|e| anyhow!(e)).usage()?,
        (None, None) => Split::Train,
    };
    let base = GenerateSettings::from_preset(&preset(&name, ctx.seed)?, split);
    let mut settings = overlay(&base, table, "generate").usage()?;
    settings.preset = name;
    settings.split = split;
    if a.preset.is_some() || a.split.is_some() {
        // Flags pick a different preset or split; re-seed the survey from it.
        let flagged = GenerateSettings::from_preset(&preset(&settings.preset, ctx.seed)?, split);
        settings.terrain.seed = flagged.terrain.seed;
        settings.noise.seed = flagged.noise.seed;
    }
    let survey = generate_survey(&settings.survey()).context("generating survey")?;
    save_survey(&a.out, &survey, None).with_context(|| format!("writing {}", a.out.display()))?;
    info!("{} pings x {} beams written to {}", survey.pings, survey.beams, a.out.display());
    ctx.snapshot(&a.out, "generate", &settings)?;
    Ok(())
}

fn train_cmd(ctx: &RunContext, a: crate::TrainArgs) -> Result<(), Failure> {
    let table = ctx.file.train.as_ref();
    let name = a.preset.clone().or_else(|| table_str(table, "preset")).unwrap_or_else(|| "desk".into());
    let mut s = overlay(&TrainSettings::from_preset(&preset(&name, ctx.seed)?), table, "train").usage()?;
    s.preset = name;
    s.schedule.seed = ctx.seed;
    if let Some(v) = a.val_fraction {
        s.val_fraction = v;
    }
    if let Some(v) = a.steps {
        s.schedule.total_steps = v;
    }
    if let Some(v) = a.batch {
        s.schedule.batch_size = v;
    }
    if let Some(v) = a.lr {
        s.schedule.lr = v;
    }
    s.validate().usage()?;

    let (survey, _) = load(&a.data)?;
    let split = prepare_split(&survey, None).context("preparing patches")?;
    let (train_p, val_p) = split_train_val(&split.normalized, s.val_fraction);
    info!(
        "{} training and {} validation patches, z scale {:.4} m",
        train_p.len(),
        val_p.len(),
        split.z_scale
    );
    let init = ScoreModelParams::init(&s.model, ctx.seed).context("initializing model")?;
    info!("{} parameters", init.num_parameters());
    let outcome = train(&train_p, &val_p, init, &s.schedule, split.z_scale).context("training")?;
    save_checkpoint(&a.out, &outcome.params).with_context(|| format!("writing {}", a.out.display()))?;
    let history = sibling(&a.out, ".history.json");
    write_json(&history, &outcome.history)?;
    info!("checkpoint from step {} written to {}", outcome.params.meta.step, a.out.display());
    ctx.snapshot(&a.out, "train", &s)?;
    Ok(())
}

fn infer(ctx: &RunContext, a: crate::InferArgs, denoise: bool) -> Result<(), Failure> {
    let params = load_checkpoint(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let (survey, z_scale) = load(&a.data)?;
    if denoise {
        let mut s = overlay(&DenoiseSettings::default(), ctx.file.denoise.as_ref(), "denoise").usage()?;
        if let Some(v) = a.variant {
            s.variant = v;
        }
        if let Some(v) = a.ensemble_k {
            s.ensemble_k = v;
        }
        if let Some(v) = a.iqr_mult {
            s.iqr_multiplier = v;
        }
        if let Some(v) = a.alpha0 {
            s.alpha0 = v;
        }
        if let Some(v) = a.gamma {
            s.gamma = v;
        }
        if let Some(v) = a.steps {
            s.steps = v;
        }
        s.detect().validate().usage()?;
        s.denoise().validate().usage()?;
        let out = denoise_survey(&survey, z_scale, &params, s.variant, &s.detect(), &s.denoise())?;
        save_survey(&a.out, &out, z_scale).with_context(|| format!("writing {}", a.out.display()))?;
        ctx.snapshot(&a.out, "denoise", &s)?;
    } else {
        if a.variant.is_some() || a.alpha0.is_some() || a.gamma.is_some() || a.steps.is_some() {
            return Err(Failure::Usage(anyhow!("detect takes no --variant, --alpha0, --gamma or --steps")));
        }
        let mut s = overlay(&DetectSettings::default(), ctx.file.detect.as_ref(), "detect").usage()?;
        if let Some(v) = a.ensemble_k {
            s.ensemble_k = v;
        }
        if let Some(v) = a.iqr_mult {
            s.iqr_multiplier = v;
        }
        s.detect().validate().usage()?;
        let out = detect_survey(&survey, z_scale, &params, &s.detect())?;
        save_survey(&a.out, &out, z_scale).with_context(|| format!("writing {}", a.out.display()))?;
        ctx.snapshot(&a.out, "detect", &s)?;
    }
    info!("written {}", a.out.display());
    Ok(())
}

fn baseline(ctx: &RunContext, a: crate::BaselineArgs) -> Result<(), Failure> {
    let mut s = overlay(&BaselineSettings::default(), ctx.file.baseline.as_ref(), "baseline").usage()?;
    if let Some(v) = a.method {
        s.method = v;
    }
    if let Some(v) = a.interp {
        s.interp = v;
    }
    if let Some(v) = a.nb_neighbors {
        s.nb_neighbors = v;
    }
    if let Some(v) = a.std_ratio {
        s.std_ratio = v;
    }
    if let Some(v) = a.radius {
        s.radius = v;
    }
    if let Some(v) = a.min_neighbors {
        s.min_neighbors = v;
    }
    if let Some(v) = a.kriging_neighbors {
        s.kriging_neighbors = v;
    }
    let (survey, z_scale) = load(&a.data)?;
    let out = baseline_survey(&survey, z_scale, &s.method(), s.interp, &s.kriging())?;
    save_survey(&a.out, &out, z_scale).with_context(|| format!("writing {}", a.out.display()))?;
    info!("{} written to {}", s.method().label(), a.out.display());
    ctx.snapshot(&a.out, "baseline", &s)?;
    Ok(())
}

fn eval(ctx: &RunContext, a: crate::EvalArgs) -> Result<(), Failure> {
    let s = overlay(&EvalSettings::default(), ctx.file.eval.as_ref(), "eval").usage()?;
    let (pred, _) = load(&a.pred)?;
    let (gt, _) = load(&a.gt)?;
    let report = evaluate_surveys(&pred, &gt, s.pings_per_patch).context("evaluating")?;
    write_json(&a.report, &report)?;
    let csv = sibling(&a.report, ".csv");
    write_patch_csv(BufWriter::new(create(&csv)?), &report.denoise)?;
    if let Some(c) = &report.classification {
        info!("F1 {:.4}, precision {:.4}, recall {:.4}", c.f1, c.precision, c.recall);
    }
    info!("MAE_z {:.5} m, RMSE_z {:.5} m", report.denoise.mae_z, report.denoise.rmse_z);
    ctx.snapshot(&a.report, "eval", &s)?;
    Ok(())
}

fn sweep(ctx: &RunContext, a: crate::SweepArgs) -> Result<(), Failure> {
    let s = overlay(&SweepSettings::default(), ctx.file.sweep.as_ref(), "sweep").usage()?;
    let grid = s.grid();
    if grid.is_empty() {
        return Err(Failure::Usage(anyhow!("empty sweep grid")));
    }
    let (survey, z_scale) = load(&a.data)?;
    let split = prepare_split(&survey, z_scale).context("preparing patches")?;
    let rows = sweep_baselines(&split.normalized, &grid).context("sweeping")?;
    write_json(&a.report, &rows)?;
    write_sweep_csv(BufWriter::new(create(&sibling(&a.report, ".csv"))?), &rows)?;
    info!("best: {} (F1 {:.4})", rows[0].label, rows[0].report.f1);
    ctx.snapshot(&a.report, "sweep", &s)?;
    Ok(())
}

/// `path` with its extension replaced by `suffix` (which includes the dot).
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    let mut name = stem;
    name.push(suffix);
    path.with_file_name(name)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

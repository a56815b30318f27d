//! The four workflows behind the `aqua` subcommands.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aqua_core::metrics::{iqm_score, uciqe, UciqeCoefficients};
use aqua_core::network::{load_params, save_params};
use aqua_core::synthgen::generate;
use aqua_core::trainer::{restore_with_model, train_supervised, train_unsupervised, Phase, TrainSample};
use aqua_core::ModelParams;

use crate::config::RunConfig;
use crate::io::{read_rgb_png, read_transmission_png, write_rgb_png, write_transmission_png};
use crate::manifest::{read_manifest, write_manifest, ManifestRecord};

pub const CHECKPOINT_FILE: &str = "model.aqrs";
pub const LOSS_FILE: &str = "loss.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const REPORT_HEADER: &str = "file,q_c,q_a,q_bi,q_g,iqm,uciqe_in,uciqe_out";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Generate a synthetic corpus into `out` and return the number of samples.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<usize> {
    ensure_dir(out)?;
    let spec = cfg.scene_spec()?;
    let s = &cfg.synth;
    let samples = generate(&spec, s.count, s.height, s.width)?;
    let mut records = Vec::with_capacity(samples.len());
    for (k, sample) in samples.iter().enumerate() {
        let id = format!("{k:04}");
        let rec = ManifestRecord {
            degraded: format!("{id}_degraded.png"),
            clean: Some(format!("{id}_clean.png")),
            transmission: Some(format!("{id}_t.png")),
            background: Some(sample.background.rgb),
            beta: Some(spec.beta.beta),
            seed: Some(sample.seed),
            id,
        };
        write_rgb_png(&sample.degraded, &out.join(&rec.degraded))?;
        write_rgb_png(&sample.clean, &out.join(rec.clean.as_deref().expect("set above")))?;
        write_transmission_png(
            sample.truth_transmission(),
            &out.join(rec.transmission.as_deref().expect("set above")),
        )?;
        records.push(rec);
    }
    write_manifest(out, &records)?;
    Ok(records.len())
}

/// Load the corpus in `dir`. Reference maps are read only when `with_truth`.
pub fn load_corpus(dir: &Path, with_truth: bool) -> Result<Vec<TrainSample>> {
    let records = read_manifest(dir)?;
    if records.is_empty() {
        bail!("corpus {} has no samples", dir.display());
    }
    records
        .iter()
        .map(|rec| {
            let degraded = read_rgb_png(&dir.join(&rec.degraded))?;
            let truth = match (&rec.transmission, with_truth) {
                (Some(t), true) => Some(read_transmission_png(&dir.join(t))?),
                (None, true) => bail!("sample `{}` has no reference transmission map", rec.id),
                (_, false) => None,
            };
            TrainSample::new(degraded, truth).with_context(|| format!("sample `{}`", rec.id))
        })
        .collect()
}

/// Outcome of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    /// Per-epoch loss as written to the CSV.
    pub losses: Vec<f64>,
}

/// Run the configured phase on `corpus`, starting from `checkpoint` when
/// given and a seeded initialization otherwise.
pub fn cmd_train(cfg: &RunConfig, corpus: &Path, checkpoint: Option<&Path>, out: &Path) -> Result<TrainOutcome> {
    let phase = cfg.train.phase;
    let data = load_corpus(corpus, phase == Phase::Supervised)?;
    let model = match checkpoint {
        Some(path) => load_params(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?,
        None => ModelParams::init(cfg.train.seed),
    };
    let (model, losses) = match phase {
        Phase::Supervised => train_supervised(model, &data, &cfg.train)?,
        Phase::Unsupervised => {
            let (model, scores) = train_unsupervised(model, &data, &cfg.train)?;
            (model, scores.into_iter().map(|s| 1.0 - s).collect())
        }
    };
    ensure_dir(out)?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    save_params(&model, &checkpoint)?;
    let mut csv = String::from("epoch,loss\n");
    for (k, loss) in losses.iter().enumerate() {
        writeln!(csv, "{},{loss:.9}", k + 1).expect("writing to a String");
    }
    let loss_csv = out.join(LOSS_FILE);
    fs::write(&loss_csv, csv).with_context(|| format!("cannot write {}", loss_csv.display()))?;
    Ok(TrainOutcome {
        checkpoint,
        loss_csv,
        losses,
    })
}

/// Restore every input with the checkpoint; writes `<stem>_restored.png` and
/// `<stem>_t.png` per input and returns the restored paths in input order.
pub fn cmd_restore(cfg: &RunConfig, checkpoint: &Path, inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let params = load_params(checkpoint).with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    let mut seen = BTreeSet::new();
    let stems = inputs
        .iter()
        .map(|input| {
            let stem = input
                .file_stem()
                .with_context(|| format!("no file name in {}", input.display()))?
                .to_string_lossy()
                .into_owned();
            if !seen.insert(stem.clone()) {
                bail!("two inputs share the file stem `{stem}`");
            }
            Ok(stem)
        })
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(out)?;
    let mut written = Vec::with_capacity(inputs.len());
    for (input, stem) in inputs.iter().zip(&stems) {
        let img = read_rgb_png(input)?;
        let (restored, t) = restore_with_model(&params, &img, &cfg.train)
            .with_context(|| format!("cannot restore {}", input.display()))?;
        let path = out.join(format!("{stem}_restored.png"));
        write_rgb_png(&restored, &path)?;
        write_transmission_png(&t, &out.join(format!("{stem}_t.png")))?;
        written.push(path);
    }
    Ok(written)
}

/// Rows written by [`cmd_eval`] and the pairs that were skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalOutcome {
    pub report: PathBuf,
    pub rows: usize,
    pub skipped: Vec<(PathBuf, PathBuf)>,
}

fn eval_row(cfg: &RunConfig, original: &Path, restored: &Path) -> Result<String> {
    let i = read_rgb_png(original)?;
    let j = read_rgb_png(restored)?;
    let (report, iqm) = iqm_score(&i, &j, &cfg.train.iqm_weights)?;
    let name = restored
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| restored.display().to_string());
    Ok(format!(
        "{name},{:.6},{:.6},{:.6},{:.6},{iqm:.6},{:.6},{:.6}",
        report.q_c,
        report.q_a,
        report.q_bi,
        report.q_g,
        uciqe(&i, &UciqeCoefficients::default()),
        report.uciqe,
    ))
}

/// Score each (original, restored) pair into `out/report.csv`. Pairs that
/// cannot be scored are skipped with a warning; it is an error if none can.
pub fn cmd_eval(cfg: &RunConfig, pairs: &[(PathBuf, PathBuf)], out: &Path) -> Result<EvalOutcome> {
    let mut csv = format!("{REPORT_HEADER}\n");
    let mut outcome = EvalOutcome::default();
    for (original, restored) in pairs {
        match eval_row(cfg, original, restored) {
            Ok(row) => {
                csv.push_str(&row);
                csv.push('\n');
                outcome.rows += 1;
            }
            Err(err) => {
                log::warn!("skipping {} / {}: {err:#}", original.display(), restored.display());
                outcome.skipped.push((original.clone(), restored.clone()));
            }
        }
    }
    if outcome.rows == 0 {
        bail!("none of the {} pairs could be evaluated", pairs.len());
    }
    ensure_dir(out)?;
    outcome.report = out.join(REPORT_FILE);
    fs::write(&outcome.report, csv).with_context(|| format!("cannot write {}", outcome.report.display()))?;
    Ok(outcome)
}

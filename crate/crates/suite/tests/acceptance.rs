//! Acceptance suite. Every criterion runs at its fixed tolerance and prints
//! one PASS/FAIL line; the process exits nonzero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use aqua::config::RunConfig;
use aqua::io::read_rgb_png;
use aqua::manifest::read_manifest;
use aqua::{cmd_eval, cmd_restore, cmd_synth, cmd_train};
use aqua_core::metrics::smooth::{smooth_iqm, IqmReference};
use aqua_core::metrics::{
    acutance_gain, border_integrity, contrast_gain, gray_world, iqm_score, uciqe, UciqeCoefficients,
};
use aqua_core::network::{forward, ModelParams};
use aqua_core::physics::{degrade, estimate_background, restore};
use aqua_core::trainer::{
    mse_transmission_loss, supervised_loss_and_grad, unsupervised_loss_and_grad, Phase, TrainConfig,
};
use aqua_core::{BackgroundLight, Image, IqmWeights, TransmissionMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(h, w, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// First (image, init) draw whose outputs all sit strictly inside (0, 1), so
/// no output is clamped and every parameter can influence the loss.
fn interior_draw(
    rng: &mut ChaCha8Rng,
    mut image: impl FnMut(&mut ChaCha8Rng) -> Image,
) -> Result<(Image, ModelParams, usize)> {
    for draw in 1..=100 {
        let img = image(rng);
        let params = ModelParams::init(rng.gen());
        let (t, _) = forward(&img, &params)?;
        if t.data().iter().all(|&v| v > 1e-3 && v < 1.0 - 1e-3) {
            return Ok((img, params, draw));
        }
    }
    anyhow::bail!("no unclamped initialization in 100 draws")
}

// ---------------------------------------------------------------------------
// 1. gradient correctness

fn gradient_supervised() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let (img, params, draw) = interior_draw(&mut rng, |r| random_image(16, 16, r))?;
    let truth = TransmissionMap::new(16, 16, (0..256).map(|_| rng.gen()).collect())?;
    let (_, grad) = supervised_loss_and_grad(&params, &img, &truth)?;
    let loss_at = |q: &ModelParams| -> Result<f64> { Ok(mse_transmission_loss(&forward(&img, q)?.0, &truth)?.0) };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for k in 0..params.num_params() {
        let base = params.get(k);
        probe.set(k, base + h);
        let plus = loss_at(&probe)?;
        probe.set(k, base - h);
        let minus = loss_at(&probe)?;
        probe.set(k, base);
        worst = worst.max(rel_err(grad.get(k), (plus - minus) / (2.0 * h)));
    }
    let secs = start.elapsed();
    Ok(verdict(
        worst < 1e-4 && secs < Duration::from_secs(120),
        format!(
            "supervised MSE, all {} parameters, max rel err {worst:.2e} (< 1e-4), unclamped init at draw {draw}, {:.1} s",
            params.num_params(),
            secs.as_secs_f64()
        ),
    ))
}

fn gradient_full_chain() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA2);
    let (img, params, draw) = interior_draw(&mut rng, |r| {
        Image::from_fn(16, 16, |_, _| [0; 3].map(|_| r.gen_range(0.05..0.95))).expect("valid size")
    })?;
    let config = TrainConfig::for_phase(Phase::Unsupervised);
    let reference = IqmReference::new(&img, 0.1, 5)?;
    let (_, grad) = unsupervised_loss_and_grad(&params, &img, &reference, &config)?;

    // loss recomposed from the public stages
    let loss_at = |q: &ModelParams| -> Result<f64> {
        let (t, _) = forward(&img, q)?;
        let b = estimate_background(&img, &t, config.background_quantile)?;
        let j = restore(&img, &t, &b, config.epsilon_t)?;
        let (_, score, _) = smooth_iqm(&reference, &j, &config.iqm_weights, config.soft_edge_steepness)?;
        Ok(1.0 - score)
    };
    let ranges = [(0, 1216), (1216, 6576), (6576, params.num_params())];
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    let mut count = 0;
    for (lo, hi) in ranges {
        for _ in 0..8 {
            let k = rng.gen_range(lo..hi);
            let mut q = params.clone();
            q.set(k, params.get(k) + h);
            let plus = loss_at(&q)?;
            q.set(k, params.get(k) - h);
            let minus = loss_at(&q)?;
            let fd = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_err(grad.get(k), fd));
            nonzero += usize::from(grad.get(k) != 0.0);
            count += 1;
        }
    }
    let secs = start.elapsed();
    Ok(verdict(
        worst < 1e-3 && count >= 20 && nonzero > 0 && secs < Duration::from_secs(120),
        format!(
            "L_IQM through restore and network, {count} parameters over conv1/conv2/conv3 ({nonzero} nonzero), max rel err {worst:.2e} (< 1e-3), unclamped init at draw {draw}, {:.1} s",
            secs.as_secs_f64()
        ),
    ))
}

// ---------------------------------------------------------------------------
// 2. physics round trip

fn physics_round_trip() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (h, w) = (rng.gen_range(1..24), rng.gen_range(1..24));
        let j = random_image(h, w, &mut rng);
        let t = TransmissionMap::new(h, w, (0..h * w).map(|_| rng.gen_range(0.1..=1.0)).collect())?;
        let b = BackgroundLight::new(rng.gen(), rng.gen(), rng.gen())?;
        let back = restore(&degrade(&j, &t, &b)?, &t, &b, 0.1)?;
        for (x, y) in back.data().iter().zip(j.data()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(verdict(worst < 1e-6, format!("100 random triples, max error {worst:.2e} (< 1e-6)")))
}

// ---------------------------------------------------------------------------
// 3. metric oracles: plain scalar loops over the formulas

mod oracle {
    use aqua_core::Image;

    pub fn gray(img: &Image) -> Vec<f64> {
        img.data()
            .chunks(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    fn mirror(i: isize, n: usize) -> usize {
        let n = n as isize;
        let j = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
        j as usize
    }

    fn at(g: &[f64], h: usize, w: usize, y: isize, x: isize) -> f64 {
        g[mirror(y, h) * w + mirror(x, w)]
    }

    pub fn window_var(g: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut vals = Vec::with_capacity(25);
                for dy in -2..=2 {
                    for dx in -2..=2 {
                        vals.push(at(g, h, w, y + dy, x + dx));
                    }
                }
                let mean = vals.iter().sum::<f64>() / 25.0;
                out.push(vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 25.0);
            }
        }
        out
    }

    pub fn contrast_gain(i: &Image, j: &Image) -> f64 {
        let (h, w) = i.dims();
        let vi = window_var(&gray(i), h, w);
        let vj = window_var(&gray(j), h, w);
        vj.iter().zip(&vi).map(|(a, b)| a - b).sum::<f64>() / (h * w) as f64
    }

    pub fn sobel(g: &[f64], h: usize, w: usize) -> Vec<f64> {
        const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut gx, mut gy) = (0.0, 0.0);
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        let v = at(g, h, w, y + dy, x + dx);
                        let (a, b) = ((dy + 1) as usize, (dx + 1) as usize);
                        gx += KX[a][b] * v;
                        gy += KX[b][a] * v;
                    }
                }
                out.push((gx * gx + gy * gy).sqrt());
            }
        }
        out
    }

    pub fn acutance_gain(i: &Image, j: &Image) -> f64 {
        let (h, w) = i.dims();
        let mean = |img: &Image| sobel(&gray(img), h, w).iter().sum::<f64>() / (h * w) as f64;
        mean(j) - mean(i)
    }

    fn edges(img: &Image, threshold: f64) -> Vec<bool> {
        let (h, w) = img.dims();
        let mag = sobel(&gray(img), h, w);
        let max = mag.iter().cloned().fold(0.0, f64::max);
        mag.iter().map(|m| max > 0.0 && m / max > threshold).collect()
    }

    pub fn border_integrity(i: &Image, j: &Image, threshold: f64, radius: usize) -> f64 {
        let (h, w) = i.dims();
        let ei = edges(i, threshold);
        let ej = edges(j, threshold);
        let (mut num, mut den) = (0usize, 0usize);
        for y in 0..h {
            for x in 0..w {
                let ys = y.saturating_sub(radius)..=(y + radius).min(h - 1);
                let dilated = ys.into_iter().any(|yy| {
                    (x.saturating_sub(radius)..=(x + radius).min(w - 1)).any(|xx| ei[yy * w + xx])
                });
                if dilated {
                    den += 1;
                    num += usize::from(ej[y * w + x]);
                }
            }
        }
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn gray_world(j: &Image) -> f64 {
        let n = j.data().len() as f64;
        1.0 - 2.0 / n * j.data().iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>()
    }

    fn lab(p: &[f64]) -> [f64; 3] {
        let lin = |v: f64| if v <= 0.04045 { v / 12.92 } else { ((v + 0.055) / 1.055).powf(2.4) };
        let (r, g, b) = (lin(p[0]), lin(p[1]), lin(p[2]));
        let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
        let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
        let d = 6.0 / 29.0;
        let f = |t: f64| if t > d * d * d { t.cbrt() } else { t / (3.0 * d * d) + 4.0 / 29.0 };
        let (fx, fy, fz) = (f(x / 0.95047), f(y / 1.0), f(z / 1.08883));
        [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
    }

    fn percentile(sorted: &[f64], p: f64) -> f64 {
        let pos = p / 100.0 * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }

    pub fn uciqe(img: &Image) -> f64 {
        let labs: Vec<[f64; 3]> = img.data().chunks(3).map(lab).collect();
        let n = labs.len() as f64;
        let chroma: Vec<f64> = labs.iter().map(|l| (l[1] * l[1] + l[2] * l[2]).sqrt()).collect();
        let mean_c = chroma.iter().sum::<f64>() / n;
        let sigma_c = (chroma.iter().map(|c| (c - mean_c).powi(2)).sum::<f64>() / n).sqrt();
        let mut lum: Vec<f64> = labs.iter().map(|l| l[0]).collect();
        lum.sort_by(f64::total_cmp);
        let con_l = percentile(&lum, 99.0) - percentile(&lum, 1.0);
        let mu_s = img
            .data()
            .chunks(3)
            .map(|p| {
                let max = p[0].max(p[1]).max(p[2]);
                let min = p[0].min(p[1]).min(p[2]);
                if max == 0.0 {
                    0.0
                } else {
                    (max - min) / max
                }
            })
            .sum::<f64>()
            / n;
        0.4680 * sigma_c + 0.2745 * con_l + 0.2576 * mu_s
    }
}

fn metric_oracles() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    let coeffs = UciqeCoefficients::default();
    let mut worst = [0.0f64; 5];
    for _ in 0..20 {
        let i = random_image(16, 16, &mut rng);
        let j = random_image(16, 16, &mut rng);
        let errs = [
            (contrast_gain(&i, &j)? - oracle::contrast_gain(&i, &j)).abs(),
            (acutance_gain(&i, &j)? - oracle::acutance_gain(&i, &j)).abs(),
            (border_integrity(&i, &j, 0.1, 5)? - oracle::border_integrity(&i, &j, 0.1, 5)).abs(),
            (gray_world(&j) - oracle::gray_world(&j)).abs(),
            (uciqe(&j, &coeffs) - oracle::uciqe(&j)).abs(),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    let pass = worst[..4].iter().all(|&e| e < 1e-9) && worst[4] < 1e-6;
    Ok(verdict(
        pass,
        format!(
            "20 random 16x16 pairs; max |diff| q_C {:.1e}, q_A {:.1e}, q_BI {:.1e}, q_G {:.1e} (< 1e-9), UCIQE {:.1e} (< 1e-6)",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    ))
}

// ---------------------------------------------------------------------------
// 4. anchors

fn anchors() -> Result<Verdict> {
    let mid = Image::filled(16, 16, [0.5; 3])?;
    let gw = gray_world(&mid);
    let coeffs = UciqeCoefficients::default();
    let grays = [0.0, 0.2, 0.5, 0.73, 1.0];
    let uciqe_zero = grays
        .iter()
        .map(|&v| Image::filled(16, 16, [v; 3]).map(|img| uciqe(&img, &coeffs)))
        .collect::<aqua_core::Result<Vec<f64>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xD0);
    let mut gains_zero = true;
    for _ in 0..10 {
        let i = random_image(16, 16, &mut rng);
        let (report, _) = iqm_score(&i, &i, &IqmWeights::default())?;
        gains_zero &= report.q_c == 0.0 && report.q_a == 0.0;
    }
    let pass = gw == 1.0 && uciqe_zero.iter().all(|&u| u == 0.0) && gains_zero;
    Ok(verdict(
        pass,
        format!(
            "gray_world(mid-gray) = {gw}; UCIQE of uniform grays = {uciqe_zero:?}; IQM(i, i) has q_C = q_A = 0: {gains_zero}"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 5-8. training pipeline through the command layer

const SUPERVISED_CORPUS_SEED: u64 = 1000;
const UNSUPERVISED_CORPUS_SEED: u64 = 5000;
const HELD_OUT_SEED: u64 = 9000;
const MODEL_SEED: u64 = 7;

struct PipelineRun {
    root: PathBuf,
    supervised_losses: Vec<f64>,
    supervised_time: Duration,
    unsupervised_scores: Vec<f64>,
    unsupervised_time: Duration,
    uciqe_degraded: f64,
    uciqe_restored: f64,
    border_gain: f64,
}

fn corpus_config(seed: u64, count: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.train.seed = seed;
    cfg.synth.count = count;
    cfg.synth.height = 32;
    cfg.synth.width = 32;
    cfg
}

fn run_pipeline(root: &Path) -> Result<PipelineRun> {
    fs::create_dir_all(root)?;
    cmd_synth(&corpus_config(SUPERVISED_CORPUS_SEED, 50), &root.join("corpus_supervised"))?;
    cmd_synth(&corpus_config(UNSUPERVISED_CORPUS_SEED, 20), &root.join("corpus_unsupervised"))?;
    let held_out = root.join("corpus_held_out");
    cmd_synth(&corpus_config(HELD_OUT_SEED, 10), &held_out)?;

    let sup = RunConfig {
        train: TrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            seed: MODEL_SEED,
            ..TrainConfig::for_phase(Phase::Supervised)
        },
        ..RunConfig::default()
    };
    let start = Instant::now();
    let sup_out = cmd_train(&sup, &root.join("corpus_supervised"), None, &root.join("supervised"))?;
    let supervised_time = start.elapsed();

    let unsup = RunConfig {
        train: TrainConfig {
            epochs: 100,
            seed: MODEL_SEED,
            ..TrainConfig::for_phase(Phase::Unsupervised)
        },
        ..RunConfig::default()
    };
    let start = Instant::now();
    let unsup_out = cmd_train(
        &unsup,
        &root.join("corpus_unsupervised"),
        Some(&sup_out.checkpoint),
        &root.join("unsupervised"),
    )?;
    let unsupervised_time = start.elapsed();

    let degraded: Vec<PathBuf> = read_manifest(&held_out)?
        .iter()
        .map(|r| held_out.join(&r.degraded))
        .collect();
    let restored = cmd_restore(&unsup, &unsup_out.checkpoint, &degraded, &root.join("restored"))?;
    let pairs: Vec<(PathBuf, PathBuf)> = degraded.iter().cloned().zip(restored.iter().cloned()).collect();
    let report = cmd_eval(&unsup, &pairs, &root.join("eval"))?;
    ensure!(report.rows == pairs.len(), "every held-out pair must evaluate");

    let coeffs = UciqeCoefficients::default();
    let (mut uciqe_degraded, mut uciqe_restored, mut border_gain) = (0.0, 0.0, 0.0);
    for (d, r) in &pairs {
        let i = read_rgb_png(d)?;
        let j = read_rgb_png(r)?;
        uciqe_degraded += uciqe(&i, &coeffs);
        uciqe_restored += uciqe(&j, &coeffs);
        border_gain += border_integrity(&i, &j, 0.1, 5)? - border_integrity(&i, &i, 0.1, 5)?;
    }
    let n = pairs.len() as f64;
    Ok(PipelineRun {
        root: root.to_path_buf(),
        supervised_losses: sup_out.losses,
        supervised_time,
        unsupervised_scores: unsup_out.losses.iter().map(|l| 1.0 - l).collect(),
        unsupervised_time,
        uciqe_degraded: uciqe_degraded / n,
        uciqe_restored: uciqe_restored / n,
        border_gain: border_gain / n,
    })
}

fn supervised_efficacy(run: &PipelineRun) -> Result<Verdict> {
    let first = run.supervised_losses[0];
    let last = *run.supervised_losses.last().context("empty curve")?;
    Ok(verdict(
        last < 0.5 * first && run.supervised_time < Duration::from_secs(600),
        format!(
            "50 samples 32x32, 200 epochs: MSE {first:.5} -> {last:.5} (ratio {:.3} < 0.5), {:.0} s",
            last / first,
            run.supervised_time.as_secs_f64()
        ),
    ))
}

fn unsupervised_efficacy(run: &PipelineRun) -> Result<Verdict> {
    let first = run.unsupervised_scores[0];
    let last = *run.unsupervised_scores.last().context("empty curve")?;
    let pass = last > first
        && run.uciqe_restored > run.uciqe_degraded
        && run.unsupervised_time < Duration::from_secs(900);
    Ok(verdict(
        pass,
        format!(
            "20 images, 100 epochs: smooth IQM {first:.5} -> {last:.5}; held-out mean UCIQE degraded {:.4}, restored {:.4}; {:.0} s",
            run.uciqe_degraded,
            run.uciqe_restored,
            run.unsupervised_time.as_secs_f64()
        ),
    ))
}

fn edge_conservation(run: &PipelineRun) -> Result<Verdict> {
    Ok(verdict(
        run.border_gain >= 0.0,
        format!(
            "held-out mean of q_BI(I, J) - q_BI(I, I) = {:+.5} (>= 0)",
            run.border_gain
        ),
    ))
}

fn files_under(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root)?.to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn determinism(first: &PipelineRun, scratch: &Path) -> Result<Verdict> {
    let second = run_pipeline(&scratch.join("second"))?;
    let a = files_under(&first.root)?;
    let b = files_under(&second.root)?;
    ensure!(a == b, "the two runs wrote different file sets");
    let differing: Vec<String> = a
        .iter()
        .filter(|rel| fs::read(first.root.join(rel)).ok() != fs::read(second.root.join(rel)).ok())
        .map(|rel| rel.display().to_string())
        .collect();
    let checkpoints = a.iter().filter(|p| p.extension().is_some_and(|e| e == "aqrs")).count();
    let csvs = a.iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
    let pngs = a.iter().filter(|p| p.extension().is_some_and(|e| e == "png")).count();
    Ok(verdict(
        differing.is_empty() && first.supervised_losses == second.supervised_losses,
        if differing.is_empty() {
            format!("rerun with the same seeds: {checkpoints} checkpoints, {csvs} CSVs, {pngs} images all byte-identical")
        } else {
            format!("files differ between runs: {differing:?}")
        },
    ))
}

// ---------------------------------------------------------------------------

fn report(failures: &mut Vec<&'static str>, name: &'static str, outcome: Result<Verdict>) {
    let (pass, detail) = match outcome {
        Ok(v) => (v.pass, v.detail),
        Err(e) => (false, format!("error: {e:#}")),
    };
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    if !pass {
        failures.push(name);
    }
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let mut failures = Vec::new();
    println!("acceptance criteria");
    report(&mut failures, "1a gradient check (supervised)", gradient_supervised());
    report(&mut failures, "1b gradient check (full chain)", gradient_full_chain());
    report(&mut failures, "2  physics round trip", physics_round_trip());
    report(&mut failures, "3  metric oracles", metric_oracles());
    report(&mut failures, "4  trivial anchors", anchors());
    match run_pipeline(&scratch.path().join("first")) {
        Ok(run) => {
            report(&mut failures, "5  supervised efficacy", supervised_efficacy(&run));
            report(&mut failures, "6  unsupervised efficacy", unsupervised_efficacy(&run));
            report(&mut failures, "7  edge conservation", edge_conservation(&run));
            report(&mut failures, "8  determinism", determinism(&run, scratch.path()));
        }
        Err(e) => {
            for name in ["5  supervised efficacy", "6  unsupervised efficacy", "7  edge conservation", "8  determinism"] {
                report(&mut failures, name, Err(anyhow::anyhow!("pipeline failed: {e:#}")));
            }
        }
    }
    if failures.is_empty() {
        println!("all acceptance criteria passed");
    } else {
        println!("{} criteria failed: {}", failures.len(), failures.join(", "));
        std::process::exit(1);
    }
}

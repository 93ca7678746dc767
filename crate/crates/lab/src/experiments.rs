//! Experiment pipelines. Each returns a typed result and writes its files
//! into the run context as it goes, so a failure leaves finished parts on disk.

use std::path::PathBuf;

use molrg_core::analytic::{monte_carlo_weights, ApproxDenoiser, OptimalDenoiser, expected_weights_for};
use molrg_core::dae::{init_params_blocks, subspace_distance, train, DaeParams, SubspaceReport, TrainLog, TrainOptions};
use molrg_core::denoiser::Denoiser;
use molrg_core::linalg::orthonormalize;
use molrg_core::metrics::{
    snr_closed_form_for, snr_curve, snr_empirical, snr_pca_batch, tradeoff_curve, unimodality_index, CurveMeta,
    CurvePoint, Estimator, SnrCurve, SnrOptions, TradeoffCurve, UnimodalityIndex, DEFAULT_PROMINENCE,
};
use molrg_core::molrg::{gen_bases, labels, sample_dataset, well_separated_config, BasisSet, MolrgConfig, Sample};
use molrg_core::probe::{
    ensemble_predict, eval_probe, extract_features, label_noise, train_probe, FeatureBatch, FeatureLift, FeatureModel,
    Noising, ProbeModel, ProbeOptions,
};
use molrg_core::rng::{derive_seed, gaussian_matrix, rng};
use molrg_core::schedule::NoiseSchedule;
use serde::Serialize;

use crate::error::{LabError, LabResult};
use crate::io::{self, fmt_f64, CheckpointHeader, EnsembleRow, ProbePoint};
use crate::spec::{ExperimentName, ExperimentSpec};

// Independent random streams derived from each repetition seed.
const BASES: u64 = 1;
const TRAIN_DATA: u64 = 2;
const INIT: u64 = 3;
const TRAIN: u64 = 4;
const TEST_DATA: u64 = 5;
const FEATURE_NOISE: u64 = 6;
const SNR_NOISE: u64 = 7;
const PROBE: u64 = 8;
const LABELS: u64 = 9;
const PROJECTION: u64 = 10;

/// Where a run writes, and what it has written so far.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub out: PathBuf,
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl Ctx {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into(), files: Vec::new(), notes: Vec::new() }
    }

    /// Path of a new output file, recorded for `meta.json`.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(PathBuf::from(name));
        self.out.join(name)
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

fn bases_for(config: &MolrgConfig, seed: u64) -> LabResult<BasisSet> {
    Ok(gen_bases(config, derive_seed(seed, BASES))?)
}

fn test_sets(spec: &ExperimentSpec, config: &MolrgConfig, bases: &BasisSet, seed: u64) -> LabResult<Vec<Vec<Sample>>> {
    (0..spec.test_sets)
        .map(|i| Ok(sample_dataset(config, bases, spec.test_samples, derive_seed(derive_seed(seed, TEST_DATA), i as u64))?))
        .collect()
}

/// Train a structured DAE with the experiment's training options and save its checkpoint and log.
#[allow(clippy::too_many_arguments)]
fn train_model(
    ctx: &mut Ctx,
    tag: &str,
    config: &MolrgConfig,
    bases: &BasisSet,
    data: &[Sample],
    schedule: &NoiseSchedule,
    opts: &TrainOptions,
    seed: u64,
) -> LabResult<(DaeParams, TrainLog)> {
    let init = init_params_blocks(config.n, &config.dims, config.delta, derive_seed(seed, INIT))?;
    let opts = TrainOptions { seed: derive_seed(seed, TRAIN), ..*opts };
    let (params, log) = train(&init, data, schedule, &opts, Some(bases))?;
    io::write_train_log(&ctx.file(&format!("train_log_{tag}_seed{seed}.csv")), &log)?;
    let header = CheckpointHeader {
        rows: params.u.nrows(),
        cols: params.u.ncols(),
        block_dims: params.block_dims.clone(),
        delta: params.delta,
        config: config.clone(),
        epoch: opts.epochs,
        seed,
        train: opts,
    };
    io::write_checkpoint(&ctx.file(&format!("model_{tag}_seed{seed}.ckpt")), &params, &header)?;
    Ok((params, log))
}

/// Mean empirical SNR over several evaluation sets, with common noise per level.
fn mean_snr_curve(
    model: &dyn Denoiser,
    sets: &[Vec<Sample>],
    bases: &BasisSet,
    sigmas: &[f64],
    seed: u64,
    estimator: Estimator,
    meta: CurveMeta,
) -> LabResult<SnrCurve> {
    let mut points: Vec<CurvePoint> = sigmas.iter().map(|&sigma| CurvePoint { sigma, value: 0.0, saturated: false }).collect();
    for (i, set) in sets.iter().enumerate() {
        let opts = SnrOptions { seed: derive_seed(derive_seed(seed, SNR_NOISE), i as u64), ..Default::default() };
        let c = snr_curve(model, set, bases, sigmas, &opts, estimator, meta.clone())?;
        for (p, q) in points.iter_mut().zip(&c.points) {
            p.value += q.value / sets.len() as f64;
            p.saturated |= q.saturated;
        }
    }
    Ok(SnrCurve::new(points, estimator, meta)?)
}

/// Linear-probe accuracy at every level: train on noisy training features,
/// average test accuracy over the evaluation sets.
fn probe_sweep(
    model: &FeatureModel<'_>,
    train: &[Sample],
    train_labels: Option<&[usize]>,
    sets: &[Vec<Sample>],
    sigmas: &[f64],
    opts: &ProbeOptions,
    seed: u64,
    kind: &str,
) -> LabResult<Vec<ProbePoint>> {
    let mut out = Vec::with_capacity(sigmas.len());
    for (j, &sigma) in sigmas.iter().enumerate() {
        let level_seed = derive_seed(derive_seed(seed, FEATURE_NOISE), j as u64);
        let mut ft = extract_features(model, train, sigma, Noising::Noisy, level_seed)?;
        if let Some(l) = train_labels {
            ft.labels = l.to_vec();
        }
        let probe = train_probe(&ft, &ProbeOptions { seed: derive_seed(seed, PROBE), ..*opts })?;
        let acc_train = eval_probe(&probe, &ft)?;
        let mut acc_test = 0.0;
        for (i, set) in sets.iter().enumerate() {
            let fe = extract_features(model, set, sigma, Noising::Noisy, derive_seed(level_seed, 1 + i as u64))?;
            acc_test += eval_probe(&probe, &fe)? / sets.len() as f64;
        }
        out.push(ProbePoint { sigma, acc_train, acc_test, probe_kind: kind.to_string(), seed });
    }
    Ok(out)
}

fn lift_kind(lift: FeatureLift) -> &'static str {
    match lift {
        FeatureLift::Identity => "linear",
        FeatureLift::Square => "linear-energy",
        FeatureLift::IdentityAndSquare => "linear-quadratic",
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// ---------------------------------------------------------------- fig3

#[derive(Debug, Clone, Serialize)]
pub struct Fig3Seed {
    pub seed: u64,
    pub sigmas: Vec<f64>,
    pub probe: Vec<ProbePoint>,
    pub probe_energy: Vec<ProbePoint>,
    pub snr: SnrCurve,
    pub snr_pca: SnrCurve,
    pub subspace: SubspaceReport,
    pub probe_peak: UnimodalityIndex,
    pub snr_peak: UnimodalityIndex,
}

/// Probe accuracy and representation SNR of a trained DAE across noise levels.
pub fn fig3(spec: &ExperimentSpec, ctx: &mut Ctx) -> LabResult<Vec<Fig3Seed>> {
    let sigmas = spec.eval_sigmas()?;
    let schedule = spec.training_schedule()?;
    let cfg = &spec.config;
    let mut out = Vec::new();
    for &seed in &spec.seeds {
        let bases = bases_for(cfg, seed)?;
        let data = sample_dataset(cfg, &bases, spec.samples, derive_seed(seed, TRAIN_DATA))?;
        let (params, _) = train_model(ctx, "dae", cfg, &bases, &data, &schedule, &spec.train, seed)?;
        let subspace = subspace_distance(&params, &bases)?;
        let sets = test_sets(spec, cfg, &bases, seed)?;
        let fm = FeatureModel::Dae(&params);
        let probe = probe_sweep(&fm, &data, None, &sets, &sigmas, &spec.probe, seed, lift_kind(spec.probe.lift))?;
        let energy_opts = ProbeOptions { lift: FeatureLift::Square, ..spec.probe };
        let probe_energy = if spec.probe.lift == FeatureLift::Square {
            probe.clone()
        } else {
            probe_sweep(&fm, &data, None, &sets, &sigmas, &energy_opts, seed, lift_kind(FeatureLift::Square))?
        };
        let mut all = probe.clone();
        all.extend(probe_energy.iter().cloned());
        io::write_probe_curve(&ctx.file(&format!("probe_seed{seed}.csv")), &all)?;

        let meta = CurveMeta::for_config(cfg, seed, spec.test_samples * spec.test_sets);
        let snr = mean_snr_curve(&params, &sets, &bases, &sigmas, seed, Estimator::EmpiricalDae, meta.clone())?;
        let mut pca_points = Vec::with_capacity(sigmas.len());
        for (j, &sigma) in sigmas.iter().enumerate() {
            let f = extract_features(&fm, &sets[0], sigma, Noising::Noisy, derive_seed(derive_seed(seed, SNR_NOISE), j as u64))?;
            let e = snr_pca_batch(&f, spec.pca_rank)?;
            pca_points.push(CurvePoint { sigma, value: e.value, saturated: e.saturated });
        }
        let snr_pca = SnrCurve::new(pca_points, Estimator::Pca, meta)?;
        io::write_curves(&ctx.file(&format!("snr_seed{seed}.csv")), &[&snr, &snr_pca])?;

        let accs: Vec<f64> = probe.iter().map(|p| p.acc_test).collect();
        let probe_peak = unimodality_index(&accs, DEFAULT_PROMINENCE)?;
        let snr_peak = unimodality_index(&snr.values(), DEFAULT_PROMINENCE)?;
        ctx.note(format!(
            "seed {seed}: mean matched angle {:.2} deg; probe peak index {} (prominence {:.3}); SNR peak index {} (prominence {:.3})",
            subspace.mean_angle_deg, probe_peak.peak_index, probe_peak.prominence, snr_peak.peak_index, snr_peak.prominence
        ));
        out.push(Fig3Seed { seed, sigmas: sigmas.clone(), probe, probe_energy, snr, snr_pca, subspace, probe_peak, snr_peak });
    }
    Ok(out)
}

// ---------------------------------------------------------------- fig4

#[derive(Debug, Clone, Serialize)]
pub struct WeightRow {
    pub sigma: f64,
    pub w_plus_closed_form: f64,
    pub w_plus_softmax_of_mean: f64,
    pub w_plus_mean_of_softmax: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig4Result {
    pub tradeoff: TradeoffCurve,
    pub snr: SnrCurve,
    pub weights: Vec<WeightRow>,
}

/// Denoising rate against class confidence rate, plus Monte Carlo checks of
/// the expected softmax weight under both averaging conventions.
pub fn fig4(spec: &ExperimentSpec, ctx: &mut Ctx) -> LabResult<Fig4Result> {
    let cfg = &spec.config;
    let d = cfg.common_dim().ok_or(molrg_core::Error::InvalidForUnequalDims)?;
    let sigmas = spec.eval_sigmas()?;
    let tradeoff = tradeoff_curve(&sigmas, cfg.delta, d, cfg.k())?;
    io::write_tradeoff(&ctx.file("tradeoff.csv"), &tradeoff)?;
    let seed = spec.seeds[0];
    let values = sigmas.iter().map(|&s| snr_closed_form_for(cfg, s)).collect::<Result<Vec<_>, _>>()?;
    let snr = SnrCurve::from_values(&sigmas, &values, Estimator::ClosedForm, CurveMeta::for_config(cfg, seed, 0))?;
    io::write_curves(&ctx.file("snr_closed_form.csv"), &[&snr])?;

    let bases = bases_for(cfg, seed)?;
    let mut weights = Vec::new();
    for (j, &sigma) in sigmas.iter().enumerate() {
        let mc = monte_carlo_weights(cfg, &bases, sigma, spec.samples, derive_seed(derive_seed(seed, SNR_NOISE), j as u64))?;
        weights.push(WeightRow {
            sigma,
            w_plus_closed_form: expected_weights_for(cfg, sigma)?.w_plus,
            w_plus_softmax_of_mean: mc.softmax_of_mean.w_plus,
            w_plus_mean_of_softmax: mc.mean_of_softmax.w_plus,
        });
    }
    let rows: Vec<Vec<String>> = weights
        .iter()
        .map(|w| {
            vec![
                fmt_f64(w.sigma),
                fmt_f64(w.w_plus_closed_form),
                fmt_f64(w.w_plus_softmax_of_mean),
                fmt_f64(w.w_plus_mean_of_softmax),
            ]
        })
        .collect();
    io::write_table(
        &ctx.file("weights.csv"),
        &["sigma", "w_plus_closed_form", "w_plus_softmax_of_mean", "w_plus_mean_of_softmax"],
        &rows,
    )?;
    Ok(Fig4Result { tradeoff, snr, weights })
}

// ---------------------------------------------------------------- fig11

#[derive(Debug, Clone, Serialize)]
pub struct Fig11Panel {
    pub name: String,
    pub config: MolrgConfig,
    pub closed_form: SnrCurve,
    pub exact: SnrCurve,
    pub approx: SnrCurve,
}

impl Fig11Panel {
    /// Largest relative deviation of `curve` from the closed form.
    pub fn max_rel_error(&self, curve: &SnrCurve) -> f64 {
        self.closed_form
            .values()
            .iter()
            .zip(curve.values())
            .map(|(c, e)| (e - c).abs() / c.abs())
            .fold(0.0, f64::max)
    }
}

/// Panel configurations: the base setting, then one parameter varied at a time.
pub fn fig11_panels(base: &MolrgConfig) -> Vec<(String, MolrgConfig)> {
    let d = base.dims[0];
    let with = |k: usize, d: usize, delta: f64| MolrgConfig::uniform(base.n, k, d, delta);
    let mut panels = vec![("base".to_string(), with(base.k(), d, base.delta))];
    for k in [4, 6, 8] {
        panels.push((format!("K{k}"), with(k, d, base.delta)));
    }
    for dd in [2, 8] {
        panels.push((format!("d{dd}"), with(base.k(), dd, base.delta)));
    }
    for delta in [0.1, 0.5] {
        panels.push((format!("delta{delta}"), with(base.k(), d, delta)));
    }
    panels
}

/// Closed-form SNR against empirical SNR of the exact and approximate posteriors.
pub fn fig11(spec: &ExperimentSpec, ctx: &mut Ctx) -> LabResult<Vec<Fig11Panel>> {
    if spec.config.common_dim().is_none() {
        return Err(LabError::InvalidSpec("fig11-grid needs equal subspace dimensions".into()));
    }
    let sigmas = spec.eval_sigmas()?;
    let seed = spec.seeds[0];
    let mut panels = Vec::new();
    let mut summary = Vec::new();
    for (name, cfg) in fig11_panels(&spec.config) {
        let bases = bases_for(&cfg, seed)?;
        let data = sample_dataset(&cfg, &bases, spec.samples, derive_seed(seed, TEST_DATA))?;
        let meta = CurveMeta::for_config(&cfg, seed, spec.samples);
        let values = sigmas.iter().map(|&s| snr_closed_form_for(&cfg, s)).collect::<Result<Vec<_>, _>>()?;
        let closed_form = SnrCurve::from_values(&sigmas, &values, Estimator::ClosedForm, meta.clone())?;
        let opts = SnrOptions { seed: derive_seed(seed, SNR_NOISE), ..Default::default() };
        let exact = snr_curve(&OptimalDenoiser { config: &cfg, bases: &bases }, &data, &bases, &sigmas, &opts, Estimator::EmpiricalExact, meta.clone())?;
        let approx = snr_curve(&ApproxDenoiser { config: &cfg, bases: &bases }, &data, &bases, &sigmas, &opts, Estimator::EmpiricalApprox, meta)?;
        io::write_curves(&ctx.file(&format!("fig11_{name}.csv")), &[&closed_form, &exact, &approx])?;
        let panel = Fig11Panel { name, config: cfg, closed_form, exact, approx };
        summary.push(vec![
            panel.name.clone(),
            fmt_f64(panel.max_rel_error(&panel.exact)),
            fmt_f64(panel.max_rel_error(&panel.approx)),
        ]);
        panels.push(panel);
    }
    io::write_table(&ctx.file("fig11_summary.csv"), &["panel", "max_rel_err_exact", "max_rel_err_approx"], &summary)?;
    Ok(panels)
}

// ---------------------------------------------------------------- fig12

#[derive(Debug, Clone, Serialize)]
pub struct ScatterPoint {
    pub sigma: f64,
    pub snr: f64,
    pub label: usize,
    pub x: f64,
    pub y: f64,
}

/// Posterior means projected onto the first basis column of each of the three
/// classes, then onto a random plane inside that 3-dim span.
pub fn dump_posterior_projection(
    model: &dyn Denoiser,
    dataset: &[Sample],
    sigmas: &[f64],
    bases: &BasisSet,
    seed: u64,
) -> LabResult<Vec<ScatterPoint>> {
    if bases.k() != 3 {
        return Err(LabError::WrongClassCount(bases.k()));
    }
    let firsts: Vec<_> = bases.u.iter().map(|u| u.column(0).into_owned()).collect();
    let plane = orthonormalize(&gaussian_matrix(3, 2, &mut rng(derive_seed(seed, PROJECTION))));
    let mut out = Vec::new();
    for (j, &sigma) in sigmas.iter().enumerate() {
        let level_seed = derive_seed(derive_seed(seed, FEATURE_NOISE), j as u64);
        let snr = snr_empirical(model, dataset, bases, sigma, &SnrOptions { seed: level_seed, ..Default::default() })?.value;
        let map = model.at_level(sigma)?;
        let mut r = rng(level_seed);
        for s in dataset {
            let x = molrg_core::molrg::add_noise_with(&s.x0, sigma, &mut r);
            let xh = map(&x, s.label);
            let c = nalgebra::Vector3::new(firsts[0].dot(&xh), firsts[1].dot(&xh), firsts[2].dot(&xh));
            out.push(ScatterPoint {
                sigma,
                snr,
                label: s.label,
                x: plane.column(0).dot(&c),
                y: plane.column(1).dot(&c),
            });
        }
    }
    Ok(out)
}

pub fn fig12(spec: &ExperimentSpec, ctx: &mut Ctx) -> LabResult<Vec<ScatterPoint>> {
    let cfg = &spec.config;
    if cfg.k() != 3 {
        return Err(LabError::WrongClassCount(cfg.k()));
    }
    let seed = spec.seeds[0];
    let bases = bases_for(cfg, seed)?;
    let data = sample_dataset(cfg, &bases, spec.samples, derive_seed(seed, TEST_DATA))?;
    let points = dump_posterior_projection(&OptimalDenoiser { config: cfg, bases: &bases }, &data, &spec.eval_sigmas()?, &bases, seed)?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![fmt_f64(p.sigma), fmt_f64(p.snr), p.label.to_string(), fmt_f64(p.x), fmt_f64(p.y)])
        .collect();
    io::write_table(&ctx.file("posterior_projection.csv"), &["sigma", "snr", "label", "x", "y"], &rows)?;
    Ok(points)
}

// ---------------------------------------------------------------- tables 4-6

/// One table row: a statistic per noise level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    /// Setting, e.g. "non-overlap" or "overlap".
    pub setting: String,
    /// "trained" (learned dictionary) or "truth" (dictionary fixed at the true bases).
    pub model: String,
    /// "all" or a class index.
    pub class: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SnrTable {
    pub sigmas: Vec<f64>,
    pub rows: Vec<TableRow>,
}

impl SnrTable {
    pub fn row(&self, setting: &str, model: &str, class: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.setting == setting && r.model == model && r.class == class)
    }

    fn write(&self, path: &std::path::Path) -> LabResult<()> {
        let mut header = vec!["setting".to_string(), "model".into(), "class".into(), "statistic".into()];
        header.extend(self.sigmas.iter().map(|s| format!("sigma={}", fmt_f64(*s))));
        let mut rows = Vec::new();
        for r in &self.rows {
            for (stat, v) in [("mean", &r.mean), ("std", &r.std)] {
                let mut row = vec![r.setting.clone(), r.model.clone(), r.class.clone(), stat.to_string()];
                row.extend(v.iter().map(|x| fmt_f64(*x)));
                rows.push(row);
            }
        }
        io::write_table(path, &header, &rows)
    }
}

/// SNR per level for trained and true-basis DAEs over all seeds, per class and overall.
fn snr_rows(spec: &ExperimentSpec, setting: &str, cfg: &MolrgConfig, ctx: &mut Ctx) -> LabResult<Vec<TableRow>> {
    let sigmas = spec.eval_sigmas()?;
    let schedule = spec.training_schedule()?;
    let k = cfg.k();
    // estimates[model][seed][level] = (overall, per-class)
    let mut estimates: [Vec<Vec<(f64, Vec<f64>)>>; 2] = [Vec::new(), Vec::new()];
    for &seed in &spec.seeds {
        let bases = bases_for(cfg, seed)?;
        let data = sample_dataset(cfg, &bases, spec.samples, derive_seed(seed, TRAIN_DATA))?;
        let (trained, _) = train_model(ctx, setting, cfg, &bases, &data, &schedule, &spec.train, seed)?;
        let report = subspace_distance(&trained, &bases)?;
        ctx.note(format!("{setting} seed {seed}: mean matched angle {:.2} deg", report.mean_angle_deg));
        let truth = DaeParams::from_bases(&bases, cfg.delta);
        let sets = test_sets(spec, cfg, &bases, seed)?;
        for (m, model) in [&trained, &truth].into_iter().enumerate() {
            let mut per_level = Vec::with_capacity(sigmas.len());
            for &sigma in &sigmas {
                let mut overall = 0.0;
                let mut per_class = vec![0.0; k];
                for (i, set) in sets.iter().enumerate() {
                    let opts = SnrOptions { seed: derive_seed(derive_seed(seed, SNR_NOISE), i as u64), ..Default::default() };
                    let e = snr_empirical(model, set, &bases, sigma, &opts)?;
                    overall += e.value / sets.len() as f64;
                    for (a, b) in per_class.iter_mut().zip(&e.per_class) {
                        *a += b / sets.len() as f64;
                    }
                }
                per_level.push((overall, per_class));
            }
            let values: Vec<f64> = per_level.iter().map(|p| p.0).collect();
            let curve = SnrCurve::from_values(&sigmas, &values, Estimator::EmpiricalDae, CurveMeta::for_config(cfg, seed, spec.test_samples))?;
            let model_name = ["trained", "truth"][m];
            io::write_curves(&ctx.file(&format!("snr_{setting}_{model_name}_seed{seed}.csv")), &[&curve])?;
            estimates[m].push(per_level);
        }
    }
    let mut rows = Vec::new();
    for (m, model_name) in ["trained", "truth"].into_iter().enumerate() {
        let classes = std::iter::once(None).chain((0..k).map(Some));
        for class in classes {
            let (mut mean, mut std) = (Vec::new(), Vec::new());
            for j in 0..sigmas.len() {
                let vals: Vec<f64> = estimates[m]
                    .iter()
                    .map(|seed_rows| match class {
                        None => seed_rows[j].0,
                        Some(c) => seed_rows[j].1[c],
                    })
                    .collect();
                let (a, b) = mean_std(&vals);
                mean.push(a);
                std.push(b);
            }
            rows.push(TableRow {
                setting: setting.to_string(),
                model: model_name.to_string(),
                class: class.map_or("all".to_string(), |c| c.to_string()),
                mean,
                std,
            });
        }
    }
    Ok(rows)
}

/// Non-overlapping against overlapping class subspaces.
pub fn table4(spec: &ExperimentSpec, ctx: &mut Ctx) -> LabResult<SnrTable> {
    let overlap = spec.config.clone();
    let separate = MolrgConfig { overlap_angle: 90.0, ..overlap.clone() };
    let mut rows = snr_rows(spec, "non-overlap", &separate, ctx)?;
    rows.extend(snr_rows(spec, "overlap", &overlap, ctx)?);
    let table = SnrTable { sigmas: spec.eval_sigmas()?, rows };
    table.write(&ctx.file("table4.csv"))?;
    Ok(table)
}

/// Per-class SNR for one configuration (unequal ranks or unequal mixing).
pub fn per_class_table(spec: &ExperimentSpec, ctx: &mut Ctx, file: &str) -> LabResult<SnrTable> {
    let rows = snr_rows(spec, "default", &spec.config, ctx)?;
    let table = SnrTable { sigmas: spec.eval_sigmas()?, rows };
    table.write(&ctx.file(file))?;
    Ok(table)
}

// ---------------------------------------------------------------- table7

#[derive(Debug, Clone, Serialize)]
pub struct Table7Result {
    pub config: MolrgConfig,
    pub probe: Vec<ProbePoint>,
    pub snr: SnrCurve,
    pub probe_peak: UnimodalityIndex,
    pub snr_peak: UnimodalityIndex,
}

impl Table7Result {
    pub fn accuracies(&self) -> Vec<f64> {
        self.probe.iter().map(|p| p.acc_test).collect()
    }
}

/// Well-separated class means: posterior features and SNR across levels.
pub fn table7(spec: &ExperimentSpec, ctx: &mut Ctx) -> LabResult<Table7Result> {
    let seed = spec.seeds[0];
    let sigmas = spec.eval_sigmas()?;
    let bases = bases_for(&spec.config, seed)?;
    let cfg = well_separated_config(&spec.config, &bases, spec.separation)?;
    let data = sample_dataset(&cfg, &bases, spec.samples, derive_seed(seed, TRAIN_DATA))?;
    let sets = test_sets(spec, &cfg, &bases, seed)?;
    let fm = FeatureModel::Optimal { config: &cfg, bases: &bases };
    let probe = probe_sweep(&fm, &data, None, &sets, &sigmas, &spec.probe, seed, lift_kind(spec.probe.lift))?;
    io::write_probe_curve(&ctx.file("probe.csv"), &probe)?;
    let meta = CurveMeta::for_config(&cfg, seed, spec.test_samples * spec.test_sets);
    let snr = mean_snr_curve(&OptimalDenoiser { config: &cfg, bases: &bases }, &sets, &bases, &sigmas, seed, Estimator::EmpiricalExact, meta)?;
    io::write_curves(&ctx.file("snr.csv"), &[&snr])?;
    let accs: Vec<f64> = probe.iter().map(|p| p.acc_test).collect();
    let probe_peak = unimodality_index(&accs, DEFAULT_PROMINENCE)?;
    let snr_peak = unimodality_index(&snr.values(), DEFAULT_PROMINENCE)?;
    Ok(Table7Result { config: cfg, probe, snr, probe_peak, snr_peak })
}

// ---------------------------------------------------------------- clean-input-snr

#[derive(Debug, Clone, Serialize)]
pub struct CleanInputResult {
    pub noisy: SnrCurve,
    pub clean: SnrCurve,
}

/// SNR of the true-basis DAE on noisy inputs against clean inputs with the
/// same level-σ coefficients.
pub fn clean_input(spec: &ExperimentSpec, ctx: &mut Ctx) -> LabResult<CleanInputResult> {
    let cfg = &spec.config;
    let seed = spec.seeds[0];
    let sigmas = spec.eval_sigmas()?;
    let bases = bases_for(cfg, seed)?;
    let data = sample_dataset(cfg, &bases, spec.samples, derive_seed(seed, TEST_DATA))?;
    let model = DaeParams::from_bases(&bases, cfg.delta);
    let meta = CurveMeta::for_config(cfg, seed, spec.samples);
    let opts = SnrOptions { seed: derive_seed(seed, SNR_NOISE), ..Default::default() };
    let noisy = snr_curve(&model, &data, &bases, &sigmas, &opts, Estimator::EmpiricalDae, meta.clone())?;
    let clean = snr_curve(&model, &data, &bases, &sigmas, &SnrOptions { clean_input: true, ..opts }, Estimator::CleanInput, meta)?;
    io::write_curves(&ctx.file("snr.csv"), &[&noisy, &clean])?;
    Ok(CleanInputResult { noisy, clean })
}

// ---------------------------------------------------------------- weight-sharing

#[derive(Debug, Clone, Serialize)]
pub struct SharingRow {
    pub sigma: f64,
    pub seed: u64,
    pub acc_shared: f64,
    pub acc_per_level: f64,
    /// Level whose σ is furthest from this one on the log scale.
    pub far_sigma: f64,
    pub acc_shared_far: f64,
    /// The model trained only at `sigma`, probed at `far_sigma`.
    pub acc_per_level_far: f64,
}

impl SharingRow {
    pub fn gap(&self) -> f64 {
        self.acc_shared - self.acc_per_level
    }
}

/// Largest accuracy change between adjacent levels.
pub fn max_adjacent_change(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

fn probe_accuracy(model: &DaeParams, train: &[Sample], test: &[Sample], sigma: f64, opts: &ProbeOptions, seed: u64) -> LabResult<f64> {
    let fm = FeatureModel::Dae(model);
    let ft = extract_features(&fm, train, sigma, Noising::Noisy, derive_seed(seed, 1))?;
    let probe = train_probe(&ft, &ProbeOptions { seed: derive_seed(seed, PROBE), ..*opts })?;
    let fe = extract_features(&fm, test, sigma, Noising::Noisy, derive_seed(seed, 2))?;
    Ok(eval_probe(&probe, &fe)?)
}

/// One DAE shared across all levels against one DAE per level, with the same
/// total number of epochs in each condition.
pub fn weight_sharing(spec: &ExperimentSpec, ctx: &mut Ctx) -> LabResult<Vec<SharingRow>> {
    let cfg = &spec.config;
    let sigmas = spec.eval_sigmas()?;
    let levels = sigmas.len();
    let shared_schedule = NoiseSchedule::explicit(&sigmas, None)?;
    let per_level_opts = TrainOptions { epochs: (spec.train.epochs / levels).max(1), ..spec.train };
    if spec.train.epochs % levels != 0 {
        ctx.note(format!(
            "{} epochs do not split evenly over {levels} levels; per-level models get {} each",
            spec.train.epochs, per_level_opts.epochs
        ));
    }
    let far = |j: usize| {
        let l = sigmas[j].ln();
        (0..levels).max_by(|&a, &b| (sigmas[a].ln() - l).abs().total_cmp(&(sigmas[b].ln() - l).abs())).expect("levels")
    };
    let mut out = Vec::new();
    for &seed in &spec.seeds {
        let bases = bases_for(cfg, seed)?;
        let data = sample_dataset(cfg, &bases, spec.samples, derive_seed(seed, TRAIN_DATA))?;
        let test = sample_dataset(cfg, &bases, spec.test_samples, derive_seed(seed, TEST_DATA))?;
        let (shared, _) = train_model(ctx, "shared", cfg, &bases, &data, &shared_schedule, &spec.train, seed)?;
        let mut per_level = Vec::with_capacity(levels);
        for (j, &sigma) in sigmas.iter().enumerate() {
            let schedule = NoiseSchedule::explicit(&[sigma], None)?;
            let (m, _) = train_model(ctx, &format!("level{j}"), cfg, &bases, &data, &schedule, &per_level_opts, seed)?;
            per_level.push(m);
        }
        let level_seed = |j: usize| derive_seed(derive_seed(seed, FEATURE_NOISE), j as u64);
        let mut shared_acc = Vec::with_capacity(levels);
        for (j, &sigma) in sigmas.iter().enumerate() {
            shared_acc.push(probe_accuracy(&shared, &data, &test, sigma, &spec.probe, level_seed(j))?);
        }
        for (j, &sigma) in sigmas.iter().enumerate() {
            let f = far(j);
            out.push(SharingRow {
                sigma,
                seed,
                acc_shared: shared_acc[j],
                acc_per_level: probe_accuracy(&per_level[j], &data, &test, sigma, &spec.probe, level_seed(j))?,
                far_sigma: sigmas[f],
                acc_shared_far: shared_acc[f],
                acc_per_level_far: probe_accuracy(&per_level[j], &data, &test, sigmas[f], &spec.probe, level_seed(f))?,
            });
        }
        write_sharing(ctx, &out)?;
    }
    Ok(out)
}

fn write_sharing(ctx: &mut Ctx, rows: &[SharingRow]) -> LabResult<()> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.sigma),
                r.seed.to_string(),
                fmt_f64(r.acc_shared),
                fmt_f64(r.acc_per_level),
                fmt_f64(r.gap()),
                fmt_f64(r.far_sigma),
                fmt_f64(r.acc_shared_far),
                fmt_f64(r.acc_per_level_far),
            ]
        })
        .collect();
    let path = ctx.out.join("weight_sharing.csv");
    if !ctx.files.iter().any(|f| f == std::path::Path::new("weight_sharing.csv")) {
        ctx.files.push("weight_sharing.csv".into());
    }
    io::write_table(
        &path,
        &["sigma", "seed", "acc_shared", "acc_per_level", "gap", "far_sigma", "acc_shared_far", "acc_per_level_far"],
        &table,
    )
}

// ---------------------------------------------------------------- ensemble-noise

/// Probes trained on noisy labels at each level, alone and soft-voted over a
/// window of neighbouring levels.
pub fn ensemble_noise(spec: &ExperimentSpec, ctx: &mut Ctx) -> LabResult<Vec<EnsembleRow>> {
    let cfg = &spec.config;
    let sigmas = spec.eval_sigmas()?;
    let schedule = spec.training_schedule()?;
    let mut out = Vec::new();
    for &seed in &spec.seeds {
        let bases = bases_for(cfg, seed)?;
        let data = sample_dataset(cfg, &bases, spec.samples, derive_seed(seed, TRAIN_DATA))?;
        let test = sample_dataset(cfg, &bases, spec.test_samples, derive_seed(seed, TEST_DATA))?;
        let (params, _) = train_model(ctx, "dae", cfg, &bases, &data, &schedule, &spec.train, seed)?;
        let noisy_labels = label_noise(&labels(&data), spec.label_noise, cfg.k(), derive_seed(seed, LABELS))?;
        let fm = FeatureModel::Dae(&params);
        let mut probes: Vec<ProbeModel> = Vec::with_capacity(sigmas.len());
        let mut test_features: Vec<FeatureBatch> = Vec::with_capacity(sigmas.len());
        let mut single = Vec::with_capacity(sigmas.len());
        for (j, &sigma) in sigmas.iter().enumerate() {
            // Independent noise draws at every level, for training and test alike.
            let level_seed = derive_seed(derive_seed(seed, FEATURE_NOISE), j as u64);
            let mut ft = extract_features(&fm, &data, sigma, Noising::Noisy, derive_seed(level_seed, 0))?;
            ft.labels = noisy_labels.clone();
            let probe = train_probe(&ft, &ProbeOptions { seed: derive_seed(seed, PROBE), ..spec.probe })?;
            let fe = extract_features(&fm, &test, sigma, Noising::Noisy, derive_seed(level_seed, 1))?;
            single.push(eval_probe(&probe, &fe)?);
            probes.push(probe);
            test_features.push(fe);
        }
        let r = spec.ensemble_radius;
        for c in 0..sigmas.len() {
            let (lo, hi) = (c.saturating_sub(r), (c + r).min(sigmas.len() - 1));
            let acc_ensemble = ensemble_predict(&probes[lo..=hi], &test_features[lo..=hi])?;
            let acc_single_best = single[lo..=hi].iter().copied().fold(0.0, f64::max);
            out.push(EnsembleRow { center_sigma: sigmas[c], acc_single_best, acc_ensemble, label_noise: spec.label_noise });
        }
        io::write_ensemble(&ctx.file(&format!("ensemble_seed{seed}.csv")), &out[out.len() - sigmas.len()..])?;
    }
    Ok(out)
}

/// Run the named pipeline, writing into `ctx`.
pub fn dispatch(spec: &ExperimentSpec, ctx: &mut Ctx) -> LabResult<()> {
    match spec.name {
        ExperimentName::Fig3 => fig3(spec, ctx).map(drop),
        ExperimentName::Fig4 => fig4(spec, ctx).map(drop),
        ExperimentName::Fig11Grid => fig11(spec, ctx).map(drop),
        ExperimentName::Fig12Dump => fig12(spec, ctx).map(drop),
        ExperimentName::Table4 => table4(spec, ctx).map(drop),
        ExperimentName::Table5 => per_class_table(spec, ctx, "table5.csv").map(drop),
        ExperimentName::Table6 => per_class_table(spec, ctx, "table6.csv").map(drop),
        ExperimentName::Table7 => table7(spec, ctx).map(drop),
        ExperimentName::CleanInputSnr => clean_input(spec, ctx).map(drop),
        ExperimentName::WeightSharing => weight_sharing(spec, ctx).map(drop),
        ExperimentName::EnsembleNoise => ensemble_noise(spec, ctx).map(drop),
    }
}

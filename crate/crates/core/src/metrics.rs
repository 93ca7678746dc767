//! Representation quality: empirical and closed-form SNR, PCA-based SNR of
//! arbitrary features, the denoising-rate/confidence trade-off and a
//! unimodality index for curves over the noise grid.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::analytic::expected_weights;
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::linalg::{argmax, top_right_singular_vectors};
use crate::molrg::{add_noise_with, BasisSet, MolrgConfig, Sample};
use crate::par::{map_indices, CHUNK};
use crate::probe::FeatureBatch;
use crate::rng::{derive_seed, rng};
use crate::schedule::{check_delta, check_sigma};

/// Value reported when a residual energy is zero.
pub const SNR_CAP: f64 = 1e6;

/// Default relative prominence for [`unimodality_index`].
pub const DEFAULT_PROMINENCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Per-class ratio of expected energies, then the mean over classes.
    #[default]
    RatioThenAverage,
    /// Mean over classes of each energy, then one ratio.
    AverageThenRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    EmpiricalExact,
    EmpiricalApprox,
    EmpiricalDae,
    CleanInput,
    ClosedForm,
    Pca,
    ProbeAccuracy,
}

impl Estimator {
    pub fn tag(self) -> &'static str {
        match self {
            Estimator::EmpiricalExact => "empirical-exact",
            Estimator::EmpiricalApprox => "empirical-approx",
            Estimator::EmpiricalDae => "empirical-dae",
            Estimator::CleanInput => "clean-input",
            Estimator::ClosedForm => "closed-form",
            Estimator::Pca => "pca",
            Estimator::ProbeAccuracy => "probe-accuracy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrOptions {
    /// Noise draws per sample.
    pub mc_draws: usize,
    pub seed: u64,
    pub aggregation: Aggregation,
    /// Feed `x0` instead of `x0 + σε` while keeping level-σ coefficients.
    pub clean_input: bool,
}

impl Default for SnrOptions {
    fn default() -> Self {
        Self { mc_draws: 1, seed: 0, aggregation: Aggregation::RatioThenAverage, clean_input: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub value: f64,
    /// Some residual energy was zero and the value was capped at [`SNR_CAP`].
    pub saturated: bool,
    /// Per-class ratio of expected in-subspace to residual energy.
    pub per_class: Vec<f64>,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den > 0.0 {
        let r = num / den;
        if r > SNR_CAP {
            (SNR_CAP, true)
        } else {
            (r, false)
        }
    } else if num > 0.0 {
        (SNR_CAP, true)
    } else {
        // Nothing reconstructed at all.
        (0.0, false)
    }
}

/// Combine per-class mean energies `(in-subspace, residual)`.
fn aggregate(energies: &[(f64, f64)], aggregation: Aggregation) -> SnrEstimate {
    let per: Vec<(f64, bool)> = energies.iter().map(|&(n, d)| ratio(n, d)).collect();
    let per_class: Vec<f64> = per.iter().map(|p| p.0).collect();
    let k = energies.len() as f64;
    let (value, saturated) = match aggregation {
        Aggregation::RatioThenAverage => (per_class.iter().sum::<f64>() / k, per.iter().any(|p| p.1)),
        Aggregation::AverageThenRatio => {
            let num = energies.iter().map(|e| e.0).sum::<f64>() / k;
            let den = energies.iter().map(|e| e.1).sum::<f64>() / k;
            ratio(num, den)
        }
    };
    SnrEstimate { value, saturated, per_class }
}

/// Empirical SNR of a denoiser at level `sigma`: for class k, the expected
/// energy of `U_kU_kᵀx̂` over the expected energy of `x̂ − U_kU_kᵀx̂`, with
/// both expectations over class-k samples and noise draws.
pub fn snr_empirical(
    model: &dyn Denoiser,
    dataset: &[Sample],
    bases: &BasisSet,
    sigma: f64,
    opts: &SnrOptions,
) -> Result<SnrEstimate> {
    check_sigma(sigma)?;
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if opts.mc_draws == 0 {
        return Err(Error::InvalidConfig("mc_draws must be at least 1".into()));
    }
    let k = bases.k();
    if let Some(s) = dataset.iter().find(|s| s.label >= k || s.x0.len() != bases.n()) {
        return Err(Error::ShapeMismatch(format!("sample with label {} does not match the bases", s.label)));
    }
    let map = model.at_level(sigma)?;
    let chunks = dataset.len().div_ceil(CHUNK);
    let partial = map_indices(chunks, |c| {
        let mut r = rng(derive_seed(opts.seed, c as u64));
        let mut acc = vec![(0.0, 0.0, 0usize); k];
        for s in &dataset[c * CHUNK..((c + 1) * CHUNK).min(dataset.len())] {
            for _ in 0..opts.mc_draws {
                let x = if opts.clean_input { s.x0.clone() } else { add_noise_with(&s.x0, sigma, &mut r) };
                let x_hat = map(&x, s.label);
                let inside = (bases.u[s.label].transpose() * &x_hat).norm_squared();
                let total = x_hat.norm_squared();
                let a = &mut acc[s.label];
                a.0 += inside;
                a.1 += (total - inside).max(0.0);
                a.2 += 1;
            }
        }
        acc
    });
    let mut sums = vec![(0.0, 0.0, 0usize); k];
    for part in partial {
        for (s, p) in sums.iter_mut().zip(part) {
            s.0 += p.0;
            s.1 += p.1;
            s.2 += p.2;
        }
    }
    if let Some(missing) = sums.iter().position(|s| s.2 == 0) {
        return Err(Error::ClassMissing(missing));
    }
    let energies: Vec<(f64, f64)> = sums.iter().map(|s| (s.0 / s.2 as f64, s.1 / s.2 as f64)).collect();
    Ok(aggregate(&energies, opts.aggregation))
}

/// SNR of the denoiser applied to clean inputs with level-σ coefficients.
pub fn snr_clean_input(
    model: &dyn Denoiser,
    dataset: &[Sample],
    bases: &BasisSet,
    sigma: f64,
    seed: u64,
) -> Result<SnrEstimate> {
    snr_empirical(model, dataset, bases, sigma, &SnrOptions { seed, clean_input: true, ..Default::default() })
}

fn check_closed_form(sigma: f64, delta: f64, d: usize, k: usize) -> Result<()> {
    check_sigma(sigma)?;
    check_delta(delta)?;
    if d == 0 || k < 2 {
        return Err(Error::InvalidConfig("closed-form SNR needs d >= 1 and K >= 2".into()));
    }
    Ok(())
}

/// Class confidence rate `h(w, δ) = (1 − δ²) w + δ²`.
pub fn confidence_rate(w: f64, delta: f64) -> f64 {
    (1.0 - delta * delta) * w + delta * delta
}

/// Closed-form SNR for equal dimensions and uniform mixing:
/// `(1+σ²)/((K−1)(δ²+σ²)) · ((1 + r h(ŵ⁺)) / (1 + r h(ŵ⁻)))²` with `r = σ²/δ²`.
pub fn snr_closed_form(sigma: f64, delta: f64, d: usize, k: usize) -> Result<f64> {
    check_closed_form(sigma, delta, d, k)?;
    let ew = expected_weights(sigma, delta, d, k)?;
    let (s2, d2) = (sigma * sigma, delta * delta);
    // Ordered so that δ = 1 gives exactly 1/(K−1).
    let c = (1.0 + s2) / (d2 + s2) / (k - 1) as f64;
    let rate = s2 / d2;
    let q = (1.0 + rate * confidence_rate(ew.w_plus, delta)) / (1.0 + rate * confidence_rate(ew.w_minus, delta));
    Ok(c * q * q)
}

/// [`snr_closed_form`] for a configuration; rejects unequal dimensions and
/// non-uniform mixing.
pub fn snr_closed_form_for(config: &MolrgConfig, sigma: f64) -> Result<f64> {
    let d = crate::analytic::symmetric_dim(config)?;
    snr_closed_form(sigma, config.delta, d, config.k())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrComponents {
    /// Expected energy in the true class subspace.
    pub correct: f64,
    /// Expected energy in each other class subspace.
    pub other: f64,
    pub total: f64,
}

/// Expected energies of the approximate posterior per class subspace.
pub fn snr_components(sigma: f64, delta: f64, d: usize, k: usize) -> Result<SnrComponents> {
    check_closed_form(sigma, delta, d, k)?;
    let ew = expected_weights(sigma, delta, d, k)?;
    let (s2, d2) = (sigma * sigma, delta * delta);
    let km1 = (k - 1) as f64;
    let df = d as f64;
    let a = ew.w_plus / (1.0 + s2) + km1 * d2 * ew.w_minus / (d2 + s2);
    let b = ew.w_minus / (1.0 + s2) + d2 * (ew.w_plus + (k as f64 - 2.0) * ew.w_minus) / (d2 + s2);
    let correct = a * a * (1.0 + s2) * df;
    let other = b * b * (d2 + s2) * df;
    Ok(SnrComponents { correct, other, total: correct + km1 * other })
}

/// PCA-based SNR of one feature batch. Features are scaled to unit norm, the
/// global mean is removed, and each class gets the top-`rank` right singular
/// vectors of its own rows as its subspace.
pub fn snr_pca_batch(batch: &FeatureBatch, rank: usize) -> Result<SnrEstimate> {
    let dim = batch.dim();
    if rank == 0 || rank > dim {
        return Err(Error::RankTooLarge { rank, available: dim });
    }
    let mut h = batch.h.clone();
    for mut row in h.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let mean: DVector<f64> = h.row_mean().transpose();
    for mut row in h.row_iter_mut() {
        row -= mean.transpose();
    }
    let k = batch.class_count();
    let mut energies = Vec::with_capacity(k);
    for c in 0..k {
        let rows: Vec<usize> = (0..batch.len()).filter(|&i| batch.labels[i] == c).collect();
        if rows.is_empty() {
            return Err(Error::ClassMissing(c));
        }
        if rows.len() < rank {
            return Err(Error::RankTooLarge { rank, available: rows.len() });
        }
        let class_rows = h.select_rows(&rows);
        let v = top_right_singular_vectors(&class_rows, rank);
        let inside = (&class_rows * v).norm_squared();
        let total = class_rows.norm_squared();
        let count = rows.len() as f64;
        energies.push((inside / count, (total - inside).max(0.0) / count));
    }
    Ok(aggregate(&energies, Aggregation::RatioThenAverage))
}

/// [`snr_pca_batch`] at every level; batches must be ordered by increasing σ.
pub fn snr_pca(batches: &[FeatureBatch], rank: usize, meta: CurveMeta) -> Result<SnrCurve> {
    let mut points = Vec::with_capacity(batches.len());
    for b in batches {
        let est = snr_pca_batch(b, rank)?;
        points.push(CurvePoint { sigma: b.sigma, value: est.value, saturated: est.saturated });
    }
    SnrCurve::new(points, Estimator::Pca, meta)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveMeta {
    pub n: usize,
    pub dims: Vec<usize>,
    pub delta: f64,
    pub seed: u64,
    pub samples: usize,
}

impl CurveMeta {
    pub fn for_config(config: &MolrgConfig, seed: u64, samples: usize) -> Self {
        Self { n: config.n, dims: config.dims.clone(), delta: config.delta, seed, samples }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sigma: f64,
    pub value: f64,
    pub saturated: bool,
}

/// A metric over an increasing noise grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrCurve {
    pub points: Vec<CurvePoint>,
    pub estimator: Estimator,
    pub meta: CurveMeta,
}

impl SnrCurve {
    pub fn new(points: Vec<CurvePoint>, estimator: Estimator, meta: CurveMeta) -> Result<Self> {
        if points.windows(2).any(|w| w[1].sigma <= w[0].sigma) {
            return Err(Error::NotSorted);
        }
        if points.iter().any(|p| !(p.value >= 0.0)) {
            return Err(Error::InvalidConfig("curve values must be non-negative".into()));
        }
        Ok(Self { points, estimator, meta })
    }

    pub fn from_values(sigmas: &[f64], values: &[f64], estimator: Estimator, meta: CurveMeta) -> Result<Self> {
        if sigmas.len() != values.len() {
            return Err(Error::LengthMismatch { what: "values", got: values.len(), expected: sigmas.len() });
        }
        let points = sigmas.iter().zip(values).map(|(&sigma, &value)| CurvePoint { sigma, value, saturated: false }).collect();
        Self::new(points, estimator, meta)
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sigma).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

/// Empirical SNR of `model` at every level of `sigmas`. Every level reuses
/// the same noise draws (common random numbers), so the curve's shape is not
/// blurred by independent Monte Carlo error at each point.
pub fn snr_curve(
    model: &dyn Denoiser,
    dataset: &[Sample],
    bases: &BasisSet,
    sigmas: &[f64],
    opts: &SnrOptions,
    estimator: Estimator,
    meta: CurveMeta,
) -> Result<SnrCurve> {
    let mut points = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let est = snr_empirical(model, dataset, bases, sigma, opts)?;
        points.push(CurvePoint { sigma, value: est.value, saturated: est.saturated });
    }
    SnrCurve::new(points, estimator, meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub sigma: f64,
    /// σ²/δ².
    pub denoise_rate: f64,
    pub h_plus: f64,
    pub h_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub points: Vec<TradeoffPoint>,
}

/// Denoising rate and class confidence rates over a grid.
pub fn tradeoff_curve(sigmas: &[f64], delta: f64, d: usize, k: usize) -> Result<TradeoffCurve> {
    let mut points = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        check_closed_form(sigma, delta, d, k)?;
        let ew = expected_weights(sigma, delta, d, k)?;
        points.push(TradeoffPoint {
            sigma,
            denoise_rate: sigma * sigma / (delta * delta),
            h_plus: confidence_rate(ew.w_plus, delta),
            h_minus: confidence_rate(ew.w_minus, delta),
        });
    }
    Ok(TradeoffCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnimodalityIndex {
    pub peak_index: usize,
    pub interior_peak: bool,
    /// `(peak − max(endpoints)) / peak`.
    pub prominence: f64,
    pub threshold: f64,
}

/// Locate the peak of a curve and decide whether it is a clear interior peak:
/// not at either end and above both endpoints by `threshold` relative to the peak.
pub fn unimodality_index(values: &[f64], threshold: f64) -> Result<UnimodalityIndex> {
    if values.len() < 3 {
        return Err(Error::CurveTooShort(values.len()));
    }
    let peak_index = argmax(values);
    let peak = values[peak_index];
    let ends = values[0].max(values[values.len() - 1]);
    let prominence = (peak - ends) / peak.max(f64::MIN_POSITIVE);
    let interior = peak_index != 0 && peak_index != values.len() - 1;
    Ok(UnimodalityIndex { peak_index, interior_peak: interior && prominence >= threshold, prominence, threshold })
}

//! Exact density, score and posterior of the noisy mixture, plus the
//! expected-weight approximation used by the closed-form SNR.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::denoiser::{Denoiser, LevelMap};
use crate::error::{Error, Result};
use crate::linalg::{hstack, log_sum_exp, softmax};
use crate::molrg::{add_noise_with, sample_dataset, BasisSet, MolrgConfig};
use crate::rng::{derive_seed, rng};
use crate::schedule::{check_delta, check_sigma, coefficients, DiffusionCoefficients};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogitVector {
    pub g: Vec<f64>,
    pub w: Vec<f64>,
}

impl LogitVector {
    pub fn from_logits(g: Vec<f64>) -> Self {
        let w = softmax(&g);
        Self { g, w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedWeights {
    pub w_plus: f64,
    pub w_minus: f64,
    pub logit_gap: f64,
}

impl ExpectedWeights {
    /// Two-value softmax with one logit ahead of K-1 tied logits by `gap`.
    pub fn from_gap(gap: f64, k: usize) -> Self {
        let km1 = (k - 1) as f64;
        // Divide through by e^gap when it is large to avoid overflow.
        let (w_plus, w_minus) = if gap > 0.0 {
            let t = (-gap).exp();
            (1.0 / (1.0 + km1 * t), t / (1.0 + km1 * t))
        } else {
            let e = gap.exp();
            (e / (km1 + e), 1.0 / (km1 + e))
        };
        Self { w_plus, w_minus, logit_gap: gap }
    }

    /// Weight vector with `w_plus` on `label`.
    pub fn weights_for(&self, label: usize, k: usize) -> Vec<f64> {
        (0..k).map(|l| if l == label { self.w_plus } else { self.w_minus }).collect()
    }
}

/// One mixture component at a fixed noise level, stored through its thin
/// covariance factor `B = [U_k, delta * Ũ_k]`.
struct Component {
    mean: Option<DVector<f64>>,
    factor: DMatrix<f64>,
    inner: Cholesky<f64, Dyn>,
    /// log pi_k - (n log 2 pi + log det Sigma_k) / 2
    log_norm: f64,
}

/// Exact Gaussian-mixture law of `x_t` at one noise level.
pub struct NoisyMixture {
    sigma2: f64,
    comps: Vec<Component>,
}

impl NoisyMixture {
    pub fn new(config: &MolrgConfig, bases: &BasisSet, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        config.validate()?;
        let n = config.n;
        let sigma2 = sigma * sigma;
        let mut comps = Vec::with_capacity(config.k());
        for k in 0..config.k() {
            let scaled = &bases.u_tilde[k] * config.delta;
            let factor = hstack(&[&bases.u[k], &scaled], n);
            let m = factor.ncols();
            let mut inner = factor.transpose() * &factor;
            for i in 0..m {
                inner[(i, i)] += sigma2;
            }
            let inner = Cholesky::new(inner)
                .ok_or_else(|| Error::InvalidConfig("component covariance is not positive definite".into()))?;
            let log_det_inner: f64 = 2.0 * inner.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let log_det = (n - m) as f64 * sigma2.ln() + log_det_inner;
            let log_norm = config.mixing[k].ln() - 0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
            comps.push(Component { mean: config.mean(k), factor, inner, log_norm });
        }
        Ok(Self { sigma2, comps })
    }

    /// Per component: log(pi_k N_k(x)) and the component posterior offset `B c`.
    fn terms(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<(DVector<f64>, DVector<f64>)>) {
        let mut logs = Vec::with_capacity(self.comps.len());
        let mut parts = Vec::with_capacity(self.comps.len());
        for c in &self.comps {
            let y = match &c.mean {
                Some(mu) => x - mu,
                None => x.clone(),
            };
            let z = c.factor.transpose() * &y;
            let sol = c.inner.solve(&z);
            let quad = (y.norm_squared() - z.dot(&sol)) / self.sigma2;
            logs.push(c.log_norm - 0.5 * quad);
            parts.push((y, &c.factor * sol));
        }
        (logs, parts)
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        log_sum_exp(&self.terms(x).0)
    }

    pub fn responsibilities(&self, x: &DVector<f64>) -> Vec<f64> {
        softmax(&self.terms(x).0)
    }

    pub fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        let (logs, parts) = self.terms(x);
        let r = softmax(&logs);
        let mut out = DVector::zeros(x.len());
        for (rk, (y, proj)) in r.iter().zip(parts) {
            out -= (y - proj) * (*rk / self.sigma2);
        }
        out
    }

    /// E[x0 | x_t] by Bayes' rule over components.
    pub fn posterior_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        let (logs, parts) = self.terms(x);
        let r = softmax(&logs);
        let mut out = DVector::zeros(x.len());
        for ((rk, c), (_, proj)) in r.iter().zip(&self.comps).zip(parts) {
            let mut m = proj;
            if let Some(mu) = &c.mean {
                m += mu;
            }
            out += m * *rk;
        }
        out
    }
}

pub fn log_density(x: &DVector<f64>, sigma: f64, config: &MolrgConfig, bases: &BasisSet) -> Result<f64> {
    check_input(x, config)?;
    Ok(NoisyMixture::new(config, bases, sigma)?.log_density(x))
}

pub fn score(x: &DVector<f64>, sigma: f64, config: &MolrgConfig, bases: &BasisSet) -> Result<DVector<f64>> {
    check_input(x, config)?;
    Ok(NoisyMixture::new(config, bases, sigma)?.score(x))
}

fn check_input(x: &DVector<f64>, config: &MolrgConfig) -> Result<()> {
    if x.len() != config.n {
        return Err(Error::ShapeMismatch(format!("input has length {}, expected {}", x.len(), config.n)));
    }
    Ok(())
}

/// Energies ‖U_lᵀx‖² and ‖Ũ_lᵀx‖² for every class.
fn energies(x: &DVector<f64>, bases: &BasisSet) -> (Vec<f64>, Vec<f64>) {
    let own: Vec<f64> = bases.u.iter().map(|u| (u.transpose() * x).norm_squared()).collect();
    let other = bases.u_tilde.iter().map(|u| (u.transpose() * x).norm_squared()).collect();
    (own, other)
}

fn scaled_logits(own: &[f64], other: &[f64], c: &DiffusionCoefficients) -> Vec<f64> {
    own.iter().zip(other).map(|(e, t)| c.phi * e + c.psi * t).collect()
}

/// Logits g_l = (ζ/2σ²)‖U_lᵀx‖² + (ξ/2σ²)‖Ũ_lᵀx‖² and their softmax.
pub fn logits_star(x: &DVector<f64>, sigma: f64, config: &MolrgConfig, bases: &BasisSet) -> Result<LogitVector> {
    check_input(x, config)?;
    let c = coefficients(sigma, config.delta)?;
    let (own, other) = energies(x, bases);
    Ok(LogitVector::from_logits(scaled_logits(&own, &other, &c)))
}

/// Class-dependent log-prior and log-determinant offsets. They are equal
/// across classes for equal dimensions and uniform mixing.
fn logit_offsets(config: &MolrgConfig, bases: &BasisSet, c: &DiffusionCoefficients) -> Vec<f64> {
    let s2 = c.sigma * c.sigma;
    let d2 = config.delta * config.delta;
    (0..config.k())
        .map(|k| {
            let d = bases.u[k].ncols() as f64;
            let big = bases.u_tilde[k].ncols() as f64;
            config.mixing[k].ln() - 0.5 * (d * (1.0 + s2).ln() + big * (d2 + s2).ln())
        })
        .collect()
}

/// Whether the projector forms of the posterior apply: orthogonal bases and zero means.
fn projector_form_applies(config: &MolrgConfig, bases: &BasisSet) -> bool {
    bases.orthogonal && config.is_orthogonal() && !config.has_means()
}

/// Σ_l w_l (ζ U_lU_lᵀ + ξ Ũ_lŨ_lᵀ) x.
fn mixture_form(x: &DVector<f64>, w: &[f64], c: &DiffusionCoefficients, bases: &BasisSet) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    for (l, wl) in w.iter().enumerate() {
        let p = bases.u[l].transpose() * x;
        out.gemv(wl * c.zeta, &bases.u[l], &p, 1.0);
        if bases.u_tilde[l].ncols() > 0 {
            let q = bases.u_tilde[l].transpose() * x;
            out.gemv(wl * c.xi, &bases.u_tilde[l], &q, 1.0);
        }
    }
    out
}

/// Σ_l β_l U_lU_lᵀ x with β_l = ξ + (ζ − ξ) w_l.
fn beta_form(x: &DVector<f64>, w: &[f64], c: &DiffusionCoefficients, bases: &BasisSet) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    for (l, wl) in w.iter().enumerate() {
        let p = bases.u[l].transpose() * x;
        out.gemv(c.xi + (c.zeta - c.xi) * wl, &bases.u[l], &p, 1.0);
    }
    out
}

fn exact_weights(x: &DVector<f64>, config: &MolrgConfig, bases: &BasisSet, c: &DiffusionCoefficients) -> Vec<f64> {
    let (own, other) = energies(x, bases);
    let g: Vec<f64> = scaled_logits(&own, &other, c)
        .iter()
        .zip(logit_offsets(config, bases, c))
        .map(|(g, o)| g + o)
        .collect();
    softmax(&g)
}

/// Optimal denoiser E[x0 | x_t]. For orthogonal zero-mean mixtures this is the
/// mixture-of-projectors form; otherwise it falls back to Bayes' rule over
/// the full component covariances.
pub fn posterior_exact(x: &DVector<f64>, sigma: f64, config: &MolrgConfig, bases: &BasisSet) -> Result<DVector<f64>> {
    check_input(x, config)?;
    if !projector_form_applies(config, bases) {
        return Ok(NoisyMixture::new(config, bases, sigma)?.posterior_mean(x));
    }
    let c = coefficients(sigma, config.delta)?;
    let w = exact_weights(x, config, bases, &c);
    Ok(mixture_form(x, &w, &c, bases))
}

/// The β-weighted single-projector rewriting of the optimal denoiser.
pub fn posterior_beta_form(x: &DVector<f64>, sigma: f64, config: &MolrgConfig, bases: &BasisSet) -> Result<DVector<f64>> {
    check_input(x, config)?;
    if !projector_form_applies(config, bases) {
        return Err(Error::InvalidConfig("β-form requires orthogonal, zero-mean classes".into()));
    }
    let c = coefficients(sigma, config.delta)?;
    let w = exact_weights(x, config, bases, &c);
    Ok(beta_form(x, &w, &c, bases))
}

fn check_closed_form_args(sigma: f64, delta: f64, d: usize, k: usize) -> Result<()> {
    check_sigma(sigma)?;
    check_delta(delta)?;
    if d == 0 || k < 2 {
        return Err(Error::InvalidConfig("closed forms need d >= 1 and K >= 2".into()));
    }
    Ok(())
}

/// Expected logit gap E[g_k] − E[g_l] for a class-k input:
/// (1 − δ²)² d / (2 (1 + σ²)(δ² + σ²)).
pub fn expected_logit_gap(sigma: f64, delta: f64, d: usize, k: usize) -> Result<f64> {
    check_closed_form_args(sigma, delta, d, k)?;
    let s2 = sigma * sigma;
    let d2 = delta * delta;
    Ok((1.0 - d2).powi(2) * d as f64 / (2.0 * (1.0 + s2) * (d2 + s2)))
}

/// Softmax of the expected logits: weight on the true class and on each other class.
pub fn expected_weights(sigma: f64, delta: f64, d: usize, k: usize) -> Result<ExpectedWeights> {
    Ok(ExpectedWeights::from_gap(expected_logit_gap(sigma, delta, d, k)?, k))
}

/// [`expected_weights`] for a configuration; rejects unequal dimensions or non-uniform mixing.
pub fn expected_weights_for(config: &MolrgConfig, sigma: f64) -> Result<ExpectedWeights> {
    let d = symmetric_dim(config)?;
    expected_weights(sigma, config.delta, d, config.k())
}

pub(crate) fn symmetric_dim(config: &MolrgConfig) -> Result<usize> {
    config.validate()?;
    match config.common_dim() {
        Some(d) if config.is_symmetric() => Ok(d),
        _ => Err(Error::InvalidForUnequalDims),
    }
}

/// Posterior with the data-dependent softmax replaced by its expected value.
/// `label` is the class of the sample that produced `x`, so this is an
/// analysis device rather than a usable denoiser.
pub fn posterior_approx(
    x: &DVector<f64>,
    label: usize,
    sigma: f64,
    config: &MolrgConfig,
    bases: &BasisSet,
) -> Result<DVector<f64>> {
    check_input(x, config)?;
    if label >= config.k() {
        return Err(Error::InvalidConfig(format!("label {label} out of range")));
    }
    let ew = expected_weights_for(config, sigma)?;
    let c = coefficients(sigma, config.delta)?;
    Ok(mixture_form(x, &ew.weights_for(label, config.k()), &c, bases))
}

/// The optimal denoiser as a [`Denoiser`], using the β-form fast path when it applies.
pub struct OptimalDenoiser<'a> {
    pub config: &'a MolrgConfig,
    pub bases: &'a BasisSet,
}

impl Denoiser for OptimalDenoiser<'_> {
    fn at_level(&self, sigma: f64) -> Result<LevelMap<'_>> {
        let c = coefficients(sigma, self.config.delta)?;
        if projector_form_applies(self.config, self.bases) {
            let (config, bases) = (self.config, self.bases);
            Ok(Box::new(move |x, _| {
                let w = exact_weights(x, config, bases, &c);
                beta_form(x, &w, &c, bases)
            }))
        } else {
            let mix = NoisyMixture::new(self.config, self.bases, sigma)?;
            Ok(Box::new(move |x, _| mix.posterior_mean(x)))
        }
    }
}

/// [`posterior_approx`] as a [`Denoiser`].
pub struct ApproxDenoiser<'a> {
    pub config: &'a MolrgConfig,
    pub bases: &'a BasisSet,
}

impl Denoiser for ApproxDenoiser<'_> {
    fn at_level(&self, sigma: f64) -> Result<LevelMap<'_>> {
        let ew = expected_weights_for(self.config, sigma)?;
        let c = coefficients(sigma, self.config.delta)?;
        let (k, bases) = (self.config.k(), self.bases);
        let fast = projector_form_applies(self.config, self.bases);
        Ok(Box::new(move |x, label| {
            let w = ew.weights_for(label, k);
            if fast {
                beta_form(x, &w, &c, bases)
            } else {
                mixture_form(x, &w, &c, bases)
            }
        }))
    }
}

/// Monte Carlo estimates of the expected weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloWeights {
    /// Softmax of the averaged logits (the closed form's definition).
    pub softmax_of_mean: ExpectedWeights,
    /// Average of the per-sample softmax weights.
    pub mean_of_softmax: ExpectedWeights,
    pub samples: usize,
}

/// Estimate both expected-weight definitions from `count` noisy samples.
pub fn monte_carlo_weights(
    config: &MolrgConfig,
    bases: &BasisSet,
    sigma: f64,
    count: usize,
    seed: u64,
) -> Result<MonteCarloWeights> {
    symmetric_dim(config)?;
    let c = coefficients(sigma, config.delta)?;
    let k = config.k();
    let data = sample_dataset(config, bases, count, derive_seed(seed, 0))?;
    let mut r = rng(derive_seed(seed, 1));
    let (mut gap_sum, mut wp, mut wm) = (0.0, 0.0, 0.0);
    for s in &data {
        let x = add_noise_with(&s.x0, sigma, &mut r);
        let (own, other) = energies(&x, bases);
        let g = scaled_logits(&own, &other, &c);
        let w = softmax(&g);
        let others: f64 = (0..k).filter(|&l| l != s.label).map(|l| g[l]).sum::<f64>() / (k - 1) as f64;
        gap_sum += g[s.label] - others;
        wp += w[s.label];
        wm += (1.0 - w[s.label]) / (k - 1) as f64;
    }
    let nf = count as f64;
    Ok(MonteCarloWeights {
        softmax_of_mean: ExpectedWeights::from_gap(gap_sum / nf, k),
        mean_of_softmax: ExpectedWeights { w_plus: wp / nf, w_minus: wm / nf, logit_gap: gap_sum / nf },
        samples: count,
    })
}

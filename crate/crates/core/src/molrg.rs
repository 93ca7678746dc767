//! Mixture of low-rank Gaussians: configuration, subspace bases and sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hstack, orthonormalize};
use crate::rng::{derive_seed, gaussian_matrix, gaussian_vector, rng, Rng};
use crate::schedule::{check_delta, check_sigma};

const SAMPLE_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolrgConfig {
    pub n: usize,
    pub dims: Vec<usize>,
    pub delta: f64,
    pub mixing: Vec<f64>,
    /// Principal angle in degrees between the two class subspaces; 90 means orthogonal.
    #[serde(default = "default_angle")]
    pub overlap_angle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
}

fn default_angle() -> f64 {
    90.0
}

impl MolrgConfig {
    /// K classes of dimension `d` with uniform mixing and orthogonal subspaces.
    pub fn uniform(n: usize, k: usize, d: usize, delta: f64) -> Self {
        Self {
            n,
            dims: vec![d; k],
            delta,
            mixing: vec![1.0 / k as f64; k],
            overlap_angle: 90.0,
            means: None,
        }
    }

    pub fn k(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn is_orthogonal(&self) -> bool {
        self.overlap_angle == 90.0
    }

    pub fn has_means(&self) -> bool {
        self.means
            .as_ref()
            .is_some_and(|m| m.iter().any(|v| v.iter().any(|x| *x != 0.0)))
    }

    /// Equal dimensions and uniform mixing.
    pub fn is_symmetric(&self) -> bool {
        let k = self.k() as f64;
        self.dims.windows(2).all(|w| w[0] == w[1])
            && self.mixing.iter().all(|p| (p - 1.0 / k).abs() < 1e-12)
    }

    /// The common subspace dimension, if all classes share one.
    pub fn common_dim(&self) -> Option<usize> {
        let d = *self.dims.first()?;
        self.dims.iter().all(|&x| x == d).then_some(d)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.n == 0 || k == 0 {
            return Err(Error::InvalidConfig("need n >= 1 and at least one class".into()));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidConfig("subspace dimensions must be positive".into()));
        }
        check_delta(self.delta)?;
        if self.mixing.len() != k {
            return Err(Error::LengthMismatch { what: "mixing", got: self.mixing.len(), expected: k });
        }
        if self.mixing.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidConfig("mixing weights must be non-negative".into()));
        }
        let total: f64 = self.mixing.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("mixing weights sum to {total}, not 1")));
        }
        if !(self.overlap_angle > 0.0 && self.overlap_angle <= 90.0) {
            return Err(Error::InvalidConfig("overlap angle must lie in (0, 90] degrees".into()));
        }
        if !self.is_orthogonal() && (k != 2 || self.dims[0] != self.dims[1]) {
            return Err(Error::OverlapUnsupported);
        }
        if self.total_dim() > self.n {
            return Err(Error::DimensionOverflow { needed: self.total_dim(), available: self.n });
        }
        if let Some(means) = &self.means {
            if means.len() != k {
                return Err(Error::LengthMismatch { what: "means", got: means.len(), expected: k });
            }
            if let Some(bad) = means.iter().find(|m| m.len() != self.n) {
                return Err(Error::LengthMismatch { what: "mean vector", got: bad.len(), expected: self.n });
            }
        }
        Ok(())
    }

    pub fn mean(&self, k: usize) -> Option<DVector<f64>> {
        self.means
            .as_ref()
            .map(|m| DVector::from_column_slice(&m[k]))
            .filter(|v| v.iter().any(|x| *x != 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub u: Vec<DMatrix<f64>>,
    pub u_tilde: Vec<DMatrix<f64>>,
    pub u_perp: DMatrix<f64>,
    /// True when the class subspaces are mutually orthogonal and each
    /// `u_tilde[k]` is the concatenation of the other blocks.
    pub orthogonal: bool,
}

impl BasisSet {
    pub fn n(&self) -> usize {
        self.u_perp.nrows()
    }

    pub fn k(&self) -> usize {
        self.u.len()
    }

    /// Orthogonal bases built from consecutive standard basis vectors.
    pub fn axis_aligned(config: &MolrgConfig) -> Result<Self> {
        config.validate()?;
        if !config.is_orthogonal() {
            return Err(Error::OverlapUnsupported);
        }
        Ok(Self::from_orthogonal_frame(&DMatrix::identity(config.n, config.n), &config.dims))
    }

    /// Partition the leading columns of an n×n orthogonal frame into class blocks.
    fn from_orthogonal_frame(frame: &DMatrix<f64>, dims: &[usize]) -> Self {
        let n = frame.nrows();
        let mut u = Vec::with_capacity(dims.len());
        let mut at = 0;
        for &d in dims {
            u.push(frame.columns(at, d).into_owned());
            at += d;
        }
        let u_perp = frame.columns(at, n - at).into_owned();
        let u_tilde = (0..dims.len())
            .map(|k| {
                let others: Vec<&DMatrix<f64>> =
                    u.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, m)| m).collect();
                hstack(&others, n)
            })
            .collect();
        Self { u, u_tilde, u_perp, orthogonal: true }
    }

    /// Rotate every basis by the same orthogonal map `q`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Self {
        Self {
            u: self.u.iter().map(|m| q * m).collect(),
            u_tilde: self.u_tilde.iter().map(|m| q * m).collect(),
            u_perp: q * &self.u_perp,
            orthogonal: self.orthogonal,
        }
    }

    /// All class blocks side by side (n × Σd).
    pub fn stacked(&self) -> DMatrix<f64> {
        let blocks: Vec<&DMatrix<f64>> = self.u.iter().collect();
        hstack(&blocks, self.n())
    }
}

pub fn gen_bases(config: &MolrgConfig, seed: u64) -> Result<BasisSet> {
    config.validate()?;
    let n = config.n;
    let mut r = rng(seed);
    let frame = orthonormalize(&gaussian_matrix(n, n, &mut r));
    if config.is_orthogonal() {
        return Ok(BasisSet::from_orthogonal_frame(&frame, &config.dims));
    }
    // Two classes whose paired directions are rotated apart by theta.
    let d = config.dims[0];
    let theta = config.overlap_angle.to_radians();
    let u1 = frame.columns(0, d).into_owned();
    let u2 = &u1 * theta.cos() + frame.columns(d, d) * theta.sin();
    let u_perp = frame.columns(2 * d, n - 2 * d).into_owned();
    Ok(BasisSet {
        u_tilde: vec![u2.clone(), u1.clone()],
        u: vec![u1, u2],
        u_perp,
        orthogonal: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Latents {
    pub a: DVector<f64>,
    pub e: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x0: DVector<f64>,
    pub label: usize,
    pub latents: Option<Latents>,
}

fn draw_class(mixing: &[f64], r: &mut Rng) -> usize {
    let u: f64 = r.gen();
    let mut acc = 0.0;
    for (k, p) in mixing.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding can leave u just above the final cumulative sum.
    mixing.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn draw_sample(config: &MolrgConfig, bases: &BasisSet, means: &[Option<DVector<f64>>], r: &mut Rng) -> Sample {
    let k = draw_class(&config.mixing, r);
    let a = gaussian_vector(bases.u[k].ncols(), r);
    let e = gaussian_vector(bases.u_tilde[k].ncols(), r);
    let mut x0 = &bases.u[k] * &a;
    if e.len() > 0 {
        x0.gemv(config.delta, &bases.u_tilde[k], &e, 1.0);
    }
    if let Some(mu) = &means[k] {
        x0 += mu;
    }
    Sample { x0, label: k, latents: Some(Latents { a, e }) }
}

/// Draw `count` labelled samples. Chunks of the index range use seeds derived
/// from `(seed, chunk)`, so the result does not depend on the thread count.
pub fn sample_dataset(config: &MolrgConfig, bases: &BasisSet, count: usize, seed: u64) -> Result<Vec<Sample>> {
    config.validate()?;
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    if bases.k() != config.k() || bases.n() != config.n {
        return Err(Error::ShapeMismatch("bases do not match the configuration".into()));
    }
    let means: Vec<Option<DVector<f64>>> = (0..config.k()).map(|k| config.mean(k)).collect();
    let chunks = count.div_ceil(SAMPLE_CHUNK);
    let make_chunk = |c: usize| {
        let mut r = rng(derive_seed(seed, c as u64));
        let len = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
        (0..len).map(|_| draw_sample(config, bases, &means, &mut r)).collect::<Vec<_>>()
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<Sample>> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(make_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<Sample>> = (0..chunks).map(make_chunk).collect();
    Ok(parts.into_iter().flatten().collect())
}

pub fn add_noise(x0: &DVector<f64>, sigma: f64, seed: u64) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    let mut r = rng(seed);
    Ok(add_noise_with(x0, sigma, &mut r))
}

pub fn add_noise_with(x0: &DVector<f64>, sigma: f64, r: &mut Rng) -> DVector<f64> {
    x0 + gaussian_vector(x0.len(), r) * sigma
}

/// Copy of `base` whose class means are `separation` times distinct columns of
/// the noise space `bases.u_perp`, so the means are mutually orthonormal
/// directions outside every class subspace.
pub fn well_separated_config(base: &MolrgConfig, bases: &BasisSet, separation: f64) -> Result<MolrgConfig> {
    base.validate()?;
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidConfig("separation must be non-negative".into()));
    }
    if separation == 0.0 {
        return Ok(base.clone());
    }
    let k = base.k();
    if bases.u_perp.ncols() < k {
        return Err(Error::DimensionOverflow { needed: base.total_dim() + k, available: base.n });
    }
    let means = (0..k)
        .map(|c| bases.u_perp.column(c).iter().map(|v| v * separation).collect())
        .collect();
    Ok(MolrgConfig { means: Some(means), ..base.clone() })
}

pub fn labels(samples: &[Sample]) -> Vec<usize> {
    samples.iter().map(|s| s.label).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormality_error, principal_cosines};

    #[test]
    fn axis_aligned_two_lines() {
        let cfg = MolrgConfig::uniform(2, 2, 1, 0.2);
        let b = BasisSet::axis_aligned(&cfg).unwrap();
        assert_eq!(b.u[0], DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(b.u[1], DMatrix::from_column_slice(2, 1, &[0.0, 1.0]));
        assert_eq!(b.u_tilde[0], b.u[1]);
        assert_eq!(b.u_tilde[1], b.u[0]);
        assert_eq!(b.u_perp.ncols(), 0);
    }

    #[test]
    fn random_bases_are_orthonormal() {
        let cfg = MolrgConfig::uniform(50, 3, 5, 0.2);
        let b = gen_bases(&cfg, 11).unwrap();
        for k in 0..3 {
            assert!(orthonormality_error(&b.u[k]) < 1e-10);
            assert!(orthonormality_error(&b.u_tilde[k]) < 1e-10);
            assert!((b.u_perp.transpose() * &b.u[k]).amax() < 1e-10);
            let mut others = DMatrix::zeros(50, 50);
            for j in (0..3).filter(|&j| j != k) {
                others += &b.u[j] * b.u[j].transpose();
                assert!((b.u[k].transpose() * &b.u[j]).amax() < 1e-10);
            }
            let tilde = &b.u_tilde[k] * b.u_tilde[k].transpose();
            assert!((tilde - others).norm() < 1e-8);
        }
        assert_eq!(b.u_perp.ncols(), 35);
        assert_eq!(gen_bases(&cfg, 11).unwrap(), b);
    }

    #[test]
    fn overlap_has_requested_angles() {
        let mut cfg = MolrgConfig::uniform(50, 2, 5, 0.2);
        cfg.overlap_angle = 30.0;
        let b = gen_bases(&cfg, 4).unwrap();
        let cos = principal_cosines(&b.u[0], &b.u[1]);
        for c in cos {
            assert!((c.acos().to_degrees() - 30.0).abs() < 0.01);
        }
        assert!(orthonormality_error(&b.u[1]) < 1e-10);
        assert!((b.u_perp.transpose() * &b.u[1]).amax() < 1e-10);
    }

    #[test]
    fn config_errors() {
        let mut cfg = MolrgConfig::uniform(10, 3, 5, 0.2);
        assert!(matches!(gen_bases(&cfg, 0), Err(Error::DimensionOverflow { .. })));
        cfg = MolrgConfig::uniform(50, 3, 5, 0.2);
        cfg.overlap_angle = 30.0;
        assert_eq!(gen_bases(&cfg, 0), Err(Error::OverlapUnsupported));
        cfg = MolrgConfig::uniform(50, 2, 5, 0.0);
        assert_eq!(cfg.validate(), Err(Error::NonPositiveDelta(0.0)));
        cfg = MolrgConfig::uniform(50, 2, 5, 0.2);
        cfg.mixing = vec![0.7, 0.2];
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn samples_stay_in_class_span() {
        let cfg = MolrgConfig::uniform(20, 3, 2, 0.3);
        let b = gen_bases(&cfg, 1).unwrap();
        let data = sample_dataset(&cfg, &b, 1000, 2).unwrap();
        assert_eq!(data.len(), 1000);
        for s in &data {
            assert!((b.u_perp.transpose() * &s.x0).norm() < 1e-10);
            let lat = s.latents.as_ref().unwrap();
            let rebuilt = &b.u[s.label] * &lat.a + &b.u_tilde[s.label] * &lat.e * 0.3;
            assert!((rebuilt - &s.x0).norm() < 1e-12);
        }
    }

    #[test]
    fn tiny_delta_keeps_sample_in_class_subspace() {
        let cfg = MolrgConfig::uniform(12, 2, 3, 1e-12);
        let b = gen_bases(&cfg, 5).unwrap();
        for s in sample_dataset(&cfg, &b, 50, 6).unwrap() {
            let inside = &b.u[s.label] * (b.u[s.label].transpose() * &s.x0);
            assert!((inside - &s.x0).norm() < 1e-10);
        }
    }

    #[test]
    fn add_noise_is_seeded() {
        let x = DVector::from_element(5, 1.0);
        assert_eq!(add_noise(&x, 0.1, 3).unwrap(), add_noise(&x, 0.1, 3).unwrap());
        assert_ne!(add_noise(&x, 0.1, 3).unwrap(), add_noise(&x, 0.1, 4).unwrap());
        assert_eq!(add_noise(&x, 0.0, 3), Err(Error::NonPositiveSigma(0.0)));
    }

    #[test]
    fn well_separated_means() {
        let cfg = MolrgConfig::uniform(50, 3, 5, 0.2);
        let b = gen_bases(&cfg, 9).unwrap();
        assert_eq!(well_separated_config(&cfg, &b, 0.0).unwrap(), cfg);
        let sep = well_separated_config(&cfg, &b, 10.0).unwrap();
        let m: Vec<DVector<f64>> = (0..3).map(|k| sep.mean(k).unwrap()).collect();
        for i in 0..3 {
            assert!((m[i].norm() - 10.0).abs() < 1e-10);
            for u in &b.u {
                assert!((u.transpose() * &m[i]).norm() < 1e-9);
            }
            for j in 0..i {
                assert!(((&m[i] - &m[j]).norm() - 10.0 * 2f64.sqrt()).abs() < 1e-9);
            }
        }
    }
}

//! Noise grids and the scalar coefficients derived from a noise level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible noise level.
pub const MIN_SIGMA: f64 = 1e-4;

/// Nine-level grid used for most SNR tables.
pub const STANDARD_GRID: [f64; 9] = [0.002, 0.008, 0.023, 0.060, 0.140, 0.296, 0.585, 1.088, 1.923];

/// Twelve-level grid used for the well-separated experiment.
pub const SEPARATED_GRID: [f64; 12] = [
    0.030, 0.053, 0.098, 0.189, 0.282, 0.379, 0.480, 0.588, 0.704, 0.830, 0.989, 1.492,
];

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_nan() || sigma < MIN_SIGMA {
        return Err(Error::NonPositiveSigma(sigma));
    }
    Ok(())
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::NonPositiveDelta(delta));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    ExplicitGrid,
    DdpmLinearBeta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
    weights: Vec<f64>,
    kind: ScheduleKind,
}

impl NoiseSchedule {
    pub fn explicit(sigmas: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::LengthMismatch { what: "sigmas", got: 0, expected: 1 });
        }
        for &s in sigmas {
            check_sigma(s)?;
        }
        if sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::NotSorted);
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != sigmas.len() {
                    return Err(Error::LengthMismatch {
                        what: "weights",
                        got: w.len(),
                        expected: sigmas.len(),
                    });
                }
                if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidConfig("loss weights must be positive".into()));
                }
                w.to_vec()
            }
            None => vec![1.0; sigmas.len()],
        };
        Ok(Self { sigmas: sigmas.to_vec(), weights, kind: ScheduleKind::ExplicitGrid })
    }

    /// Linear-beta DDPM schedule mapped to the variance-exploding convention,
    /// `sigma_t = sqrt((1 - abar_t) / abar_t)`, for t = 1..=steps.
    pub fn ddpm(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 || !(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0) {
            return Err(Error::InvalidBetaRange);
        }
        let mut log_abar = 0.0;
        let mut sigmas = Vec::with_capacity(steps);
        for i in 0..steps {
            let beta = if steps == 1 {
                beta_min
            } else {
                beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
            };
            log_abar += (-beta).ln_1p();
            // (1 - abar) / abar = exp(-log abar) - 1
            sigmas.push((-log_abar).exp_m1().sqrt());
        }
        for &s in &sigmas {
            check_sigma(s)?;
        }
        Ok(Self { weights: vec![1.0; steps], sigmas, kind: ScheduleKind::DdpmLinearBeta })
    }

    pub fn standard() -> Self {
        Self::explicit(&STANDARD_GRID, None).expect("static grid is valid")
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    /// Noise level at a 1-based DDPM timestep.
    pub fn sigma_at_timestep(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.sigmas.len() {
            return Err(Error::InvalidConfig(format!(
                "timestep {t} outside 1..={}",
                self.sigmas.len()
            )));
        }
        Ok(self.sigmas[t - 1])
    }

    /// Explicit schedule holding the levels at the given 1-based timesteps.
    pub fn at_timesteps(&self, timesteps: &[usize]) -> Result<Self> {
        let sigmas = timesteps
            .iter()
            .map(|&t| self.sigma_at_timestep(t))
            .collect::<Result<Vec<_>>>()?;
        let weights: Vec<f64> = timesteps.iter().map(|&t| self.weights[t - 1]).collect();
        Self::explicit(&sigmas, Some(&weights))
    }
}

/// JSON form of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleDescriptor {
    Explicit {
        sigmas: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Ddpm {
        #[serde(rename = "T")]
        steps: usize,
        beta_min: f64,
        beta_max: f64,
    },
}

impl ScheduleDescriptor {
    pub fn build(&self) -> Result<NoiseSchedule> {
        match self {
            Self::Explicit { sigmas, weights } => NoiseSchedule::explicit(sigmas, weights.as_deref()),
            Self::Ddpm { steps, beta_min, beta_max } => NoiseSchedule::ddpm(*steps, *beta_min, *beta_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionCoefficients {
    pub sigma: f64,
    pub zeta: f64,
    pub xi: f64,
    pub phi: f64,
    pub psi: f64,
    pub gamma: f64,
}

pub fn coefficients(sigma: f64, delta: f64) -> Result<DiffusionCoefficients> {
    check_sigma(sigma)?;
    check_delta(delta)?;
    let s2 = sigma * sigma;
    let d2 = delta * delta;
    let zeta = 1.0 / (1.0 + s2);
    let xi = d2 / (d2 + s2);
    Ok(DiffusionCoefficients {
        sigma,
        zeta,
        xi,
        phi: zeta / (2.0 * s2),
        psi: xi / (2.0 * s2),
        gamma: sigma,
    })
}

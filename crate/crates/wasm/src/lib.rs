//! WebAssembly bindings for a small interactive demo. The plain-Rust
//! functions in [`demo`] do the work; the `#[wasm_bindgen]` wrappers only
//! convert errors into JS exceptions.

use wasm_bindgen::prelude::*;

pub mod demo {
    use molrg_core::analytic::posterior_exact;
    use molrg_core::metrics::{snr_closed_form, tradeoff_curve};
    use molrg_core::molrg::{add_noise, gen_bases, sample_dataset, MolrgConfig};
    use molrg_core::rng::derive_seed;

    /// Closed-form SNR at each σ (equal dimensions, uniform mixing).
    pub fn snr_curve(sigmas: &[f64], delta: f64, d: usize, k: usize) -> Result<Vec<f64>, String> {
        sigmas.iter().map(|&s| snr_closed_form(s, delta, d, k).map_err(|e| e.to_string())).collect()
    }

    /// Flattened `[σ²/δ², h⁺, h⁻]` triples, one per σ.
    pub fn tradeoff(sigmas: &[f64], delta: f64, d: usize, k: usize) -> Result<Vec<f64>, String> {
        let curve = tradeoff_curve(sigmas, delta, d, k).map_err(|e| e.to_string())?;
        Ok(curve.points.iter().flat_map(|p| [p.denoise_rate, p.h_plus, p.h_minus]).collect())
    }

    /// Posterior means of noisy three-class samples, flattened as `[x, y, label]`.
    ///
    /// Each mean is read off on the first basis column of every class and
    /// the resulting 3-vector is drawn in the plane orthogonal to (1,1,1),
    /// so each class gets its own direction 120° apart.
    pub fn posterior_scatter(n: usize, d: usize, delta: f64, sigma: f64, count: usize, seed: u64) -> Result<Vec<f64>, String> {
        let cfg = MolrgConfig::uniform(n, 3, d, delta);
        let err = |e: molrg_core::Error| e.to_string();
        let bases = gen_bases(&cfg, derive_seed(seed, 1)).map_err(err)?;
        let data = sample_dataset(&cfg, &bases, count, derive_seed(seed, 2)).map_err(err)?;
        let noise_seed = derive_seed(seed, 7);
        let (ex, ey) = ([1.0, -0.5, -0.5], [0.0, 0.75f64.sqrt(), -(0.75f64.sqrt())]);
        let mut out = Vec::with_capacity(3 * count);
        for (i, s) in data.iter().enumerate() {
            let x = add_noise(&s.x0, sigma, derive_seed(noise_seed, i as u64)).map_err(err)?;
            let xh = posterior_exact(&x, sigma, &cfg, &bases).map_err(err)?;
            let c: Vec<f64> = bases.u.iter().map(|u| u.column(0).dot(&xh)).collect();
            out.push((0..3).map(|j| ex[j] * c[j]).sum());
            out.push((0..3).map(|j| ey[j] * c[j]).sum());
            out.push(s.label as f64);
        }
        Ok(out)
    }
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn snr_curve(sigmas: &[f64], delta: f64, d: usize, k: usize) -> Result<Vec<f64>, JsError> {
    js(demo::snr_curve(sigmas, delta, d, k))
}

#[wasm_bindgen]
pub fn tradeoff(sigmas: &[f64], delta: f64, d: usize, k: usize) -> Result<Vec<f64>, JsError> {
    js(demo::tradeoff(sigmas, delta, d, k))
}

#[wasm_bindgen]
pub fn posterior_scatter(n: usize, d: usize, delta: f64, sigma: f64, count: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    js(demo::posterior_scatter(n, d, delta, sigma, count, seed))
}

/// The nine-level grid used for training and evaluation.
#[wasm_bindgen]
pub fn standard_grid() -> Vec<f64> {
    molrg_core::schedule::STANDARD_GRID.to_vec()
}

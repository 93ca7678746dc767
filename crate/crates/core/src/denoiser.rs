use nalgebra::DVector;

use crate::error::Result;

/// A denoiser specialised to one noise level. The second argument is the
/// source class of the input; only label-aware analysis devices read it.
pub type LevelMap<'a> = Box<dyn Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync + 'a>;

pub trait Denoiser: Sync {
    fn at_level(&self, sigma: f64) -> Result<LevelMap<'_>>;
}

/// Maps every input to zero.
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn at_level(&self, sigma: f64) -> Result<LevelMap<'_>> {
        crate::schedule::check_sigma(sigma)?;
        Ok(Box::new(|x: &DVector<f64>, _| DVector::zeros(x.len())))
    }
}

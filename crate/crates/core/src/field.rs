use crate::error::{Error, Result};

/// Anything mapping `(x, t)` to a velocity. States are row-major batches of
/// `dim()`-vectors sharing one time.
pub trait VelocityField: Sync {
    fn dim(&self) -> usize;

    fn eval_batch(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()>;

    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        check_batch(self.dim(), x)?;
        let mut out = vec![0.0; x.len()];
        self.eval_batch(x, t, &mut out)?;
        Ok(out)
    }
}

pub(crate) fn check_batch(dim: usize, x: &[f64]) -> Result<usize> {
    if dim == 0 || !x.len().is_multiple_of(dim) {
        return Err(Error::shape(
            "state batch (length modulo dim)",
            dim,
            x.len(),
        ));
    }
    Ok(x.len() / dim)
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval_batch(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        (**self).eval_batch(x, t, out)
    }
}

/// `v(x, t) = k` everywhere.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub velocity: Vec<f64>,
}

impl VelocityField for ConstantField {
    fn dim(&self) -> usize {
        self.velocity.len()
    }

    fn eval_batch(&self, _x: &[f64], _t: f64, out: &mut [f64]) -> Result<()> {
        for row in out.chunks_mut(self.velocity.len()) {
            row.copy_from_slice(&self.velocity);
        }
        Ok(())
    }
}

/// Wraps a closure `f(x_row, t, out_row)` applied row by row.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_batch(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        for (xr, or) in x.chunks(self.dim).zip(out.chunks_mut(self.dim)) {
            (self.f)(xr, t, or);
        }
        Ok(())
    }
}

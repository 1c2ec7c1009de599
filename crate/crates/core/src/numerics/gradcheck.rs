use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares `analytic` against central differences of `f` at `x`.
///
/// Step per coordinate is `1e-6 · max(1, |x_i|)`; the relative error of a
/// coordinate is `|a − n| / max(|a|, |n|, 1e-8)`. Returns the maximum over
/// coordinates.
pub fn finite_diff_check<F>(mut f: F, x: &Tensor, analytic: &Tensor) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    x.expect_same_shape(analytic)?;
    let mut probe = x.clone();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let xi = x.data()[i];
        let h = 1e-6 * xi.abs().max(1.0);
        probe.data_mut()[i] = xi + h;
        let plus = eval(&mut f, &probe)?;
        probe.data_mut()[i] = xi - h;
        let minus = eval(&mut f, &probe)?;
        probe.data_mut()[i] = xi;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn eval<F: FnMut(&Tensor) -> Result<f64>>(f: &mut F, x: &Tensor) -> Result<f64> {
    let value = f(x)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "objective returned {value} during finite differencing"
        )));
    }
    Ok(value)
}

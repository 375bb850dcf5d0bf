//! Central finite-difference validation of analytic gradients.

use crate::DiffError;

/// Default perturbation for [`finite_difference_check`].
pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Scale floor for the relative-error denominator: below this magnitude the
/// comparison is effectively absolute, which keeps finite-difference noise on
/// near-zero gradients from masquerading as large relative errors.
const REL_FLOOR: f64 = 1e-3;

/// Compare analytic gradients against central finite differences.
///
/// `loss_fn` evaluates the scalar objective at a parameter setting and
/// `grad_fn` returns the analytic gradient arrays (same jagged shape as
/// `params`). For every coordinate the numeric estimate is
/// `(f(x + eps) - f(x - eps)) / (2 eps)`; the reported value is the maximum
/// of `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)` over all
/// coordinates.
pub fn finite_difference_check<L, G>(
    params: &[Vec<f64>],
    loss_fn: L,
    grad_fn: G,
    eps: f64,
) -> Result<f64, DiffError>
where
    L: Fn(&[Vec<f64>]) -> Result<f64, DiffError>,
    G: Fn(&[Vec<f64>]) -> Result<Vec<Vec<f64>>, DiffError>,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(DiffError::InvalidArgument(format!(
            "finite-difference epsilon must be positive, got {eps}"
        )));
    }
    let analytic = grad_fn(params)?;
    if analytic.len() != params.len()
        || analytic
            .iter()
            .zip(params)
            .any(|(a, p)| a.len() != p.len())
    {
        return Err(DiffError::InvalidArgument(
            "gradient arrays do not match parameter arrays".into(),
        ));
    }

    let mut work: Vec<Vec<f64>> = params.to_vec();
    let mut max_rel: f64 = 0.0;
    for pi in 0..params.len() {
        for ci in 0..params[pi].len() {
            let orig = work[pi][ci];
            work[pi][ci] = orig + eps;
            let f_plus = loss_fn(&work)?;
            work[pi][ci] = orig - eps;
            let f_minus = loss_fn(&work)?;
            work[pi][ci] = orig;
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic[pi][ci];
            let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_rel = max_rel.max((a - numeric).abs() / denom);
        }
    }
    Ok(max_rel)
}

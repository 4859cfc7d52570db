//! Adaptive Simpson quadrature for vector-valued integrands.
//!
//! Error is controlled in the max-norm across components, so one pass
//! integrates a whole field of pointwise integrands with a shared budget.
//! Discontinuities in derivative (e.g. indicator-set crossings inside
//! square-function integrands) are handled by refinement alone; the
//! integrand stays bounded, so the estimate converges.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub values: Vec<f64>,
    pub est_error: f64,
    pub evaluations: usize,
}

struct State<'a, F> {
    f: &'a mut F,
    evaluations: usize,
    est_error: f64,
}

/// Integrate a vector-valued `f` over `[a, b]` to absolute max-norm
/// tolerance `tol`.
pub fn adaptive_simpson_vec<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult>
where
    F: FnMut(f64) -> Vec<f64>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol = {tol} must be > 0")));
    }
    if !(b >= a) {
        return Err(Error::InvalidParameter(format!("bad interval [{a}, {b}]")));
    }
    let fa = f(a);
    let dim = fa.len();
    if b == a {
        return Ok(QuadResult {
            values: vec![0.0; dim],
            est_error: 0.0,
            evaluations: 1,
        });
    }
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let whole = simpson(a, b, &fa, &fm, &fb);
    let mut state = State {
        f: &mut f,
        evaluations: 3,
        est_error: 0.0,
    };
    let mut values = vec![0.0; dim];
    refine(&mut state, a, b, &fa, &fm, &fb, &whole, tol, 48, &mut values)?;
    let est_error = state.est_error;
    if est_error > tol {
        return Err(Error::NumericalFailure(format!(
            "quadrature did not converge: est_error {est_error:.3e} > tol {tol:.3e} \
             after {} evaluations",
            state.evaluations
        )));
    }
    Ok(QuadResult {
        values,
        est_error,
        evaluations: state.evaluations,
    })
}

fn simpson(a: f64, b: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    let h = (b - a) / 6.0;
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((x, y), z)| h * (x + 4.0 * y + z))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(
    state: &mut State<F>,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: &[f64],
    tol: f64,
    depth: usize,
    acc: &mut [f64],
) -> Result<()>
where
    F: FnMut(f64) -> Vec<f64>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = (state.f)(lm);
    let frm = (state.f)(rm);
    state.evaluations += 2;
    let left = simpson(a, m, fa, &flm, fm);
    let right = simpson(m, b, fm, &frm, fb);
    let err = left
        .iter()
        .zip(&right)
        .zip(whole)
        .fold(0.0f64, |e, ((l, r), w)| e.max((l + r - w).abs()))
        / 15.0;
    if depth == 0 || err <= 0.5 * tol {
        // Richardson extrapolation of the two-panel estimate.
        for (i, a_i) in acc.iter_mut().enumerate() {
            let s2 = left[i] + right[i];
            *a_i += s2 + (s2 - whole[i]) / 15.0;
        }
        state.est_error += err;
        return Ok(());
    }
    refine(state, a, m, fa, &flm, fm, &left, 0.5 * tol, depth - 1, acc)?;
    refine(state, m, b, fm, &frm, fb, &right, 0.5 * tol, depth - 1, acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_cubics() {
        let r = adaptive_simpson_vec(|t| vec![t * t * t - t], 0.0, 2.0, 1e-12).unwrap();
        assert!((r.values[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_decay_vector() {
        let r = adaptive_simpson_vec(|t| vec![(-t).exp(), 2.0 * (-2.0 * t).exp()], 0.0, 30.0, 1e-10)
            .unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-9);
        assert!((r.values[1] - 1.0).abs() < 1e-9);
        assert!(r.est_error <= 1e-10);
    }

    #[test]
    fn kink_is_handled_by_refinement() {
        let r = adaptive_simpson_vec(|t| vec![(t - 0.3137).abs()], 0.0, 1.0, 1e-10).unwrap();
        let exact = 0.5 * (0.3137f64.powi(2) + (1.0 - 0.3137f64).powi(2));
        assert!((r.values[0] - exact).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(adaptive_simpson_vec(|_| vec![0.0], 0.0, 1.0, 0.0).is_err());
        assert!(adaptive_simpson_vec(|_| vec![0.0], 1.0, 0.0, 1e-6).is_err());
    }
}

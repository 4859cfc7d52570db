//! Carre du champ, gradient moduli and the pseudo-gradient.
//!
//! Three gradient moduli live here. With `J_ij = J(i,j) m_j`:
//!
//! ```text
//! |grad f|^2(i)        = 1/2 sum_j (f_i - f_j)^2 J_ij
//! |tgrad f|_*^2(i)     = sum_{j: f_i >= f_j} (f_i - f_j)^2 J_ij
//! |tgrad f|^2(i)       = sum_{j: |f_i| >= |f_j|} (f_i - f_j)^2 J_ij
//! ```
//!
//! Ties are included, exactly as the defining ">=". The pseudo-gradient is
//! `Gamma_p(f) = p f Lf - |f|^{2-p} L(|f|^p)`; for nonnegative fields it has
//! the explicit form `p(p-1) sum_{j: f_j != f_i} (f_i - f_j)^2 I(f_i,f_j;p) J_ij`
//! with the interpolation integral `I` evaluated in closed form.
//!
//! Zero-value conventions, recorded once: `0^0 := 1` inside `I`, and
//! `|0|^{2-p} := 0` for `p < 2` in the definitional pseudo-gradient.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::semigroup::generator_apply;
use crate::space::Space;

/// Which gradient-type quantity a [`GradientField`] holds.
///
/// `CarreDuChamp` and `GammaP` are quadratic quantities; the three gradient
/// kinds are (unsquared) moduli.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    CarreDuChamp,
    Nabla,
    TildeNablaStar,
    TildeNabla,
    GammaP,
}

/// A pointwise gradient-type quantity on a space.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    values: Vec<f64>,
    kind: GradientKind,
}

impl GradientField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> GradientKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Index<usize> for GradientField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Carre du champ `Gamma(f)(i) = 1/2 sum_j (f_i - f_j)^2 J(i,j) m_j`.
pub fn carre_du_champ(space: &Space, f: &Field) -> Result<GradientField> {
    f.check_on(space)?;
    Ok(GradientField {
        values: carre_du_champ_raw(space, f.values()),
        kind: GradientKind::CarreDuChamp,
    })
}

pub(crate) fn carre_du_champ_raw(space: &Space, fv: &[f64]) -> Vec<f64> {
    let n = space.n();
    let m = space.measure();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            let d = fv[i] - fv[j];
            acc += d * d * space.kernel()[(i, j)] * m[j];
        }
        out[i] = 0.5 * acc;
    }
    out
}

/// Gradient modulus `|grad f| = sqrt(Gamma(f))`.
pub fn nabla(space: &Space, f: &Field) -> Result<GradientField> {
    let g = carre_du_champ(space, f)?;
    Ok(GradientField {
        values: g.values.iter().map(|v| v.sqrt()).collect(),
        kind: GradientKind::Nabla,
    })
}

/// One-sided modified gradient, restricted to targets with `f_j <= f_i`.
pub fn tilde_nabla_star(space: &Space, f: &Field) -> Result<GradientField> {
    f.check_on(space)?;
    Ok(GradientField {
        values: one_sided_sq(space, f.values(), |fi, fj| fi >= fj)
            .into_iter()
            .map(f64::sqrt)
            .collect(),
        kind: GradientKind::TildeNablaStar,
    })
}

/// Modified gradient, restricted to targets with `|f_j| <= |f_i|`; the
/// sign-symmetric variant (`|tgrad(-f)| = |tgrad f|`).
pub fn tilde_nabla(space: &Space, f: &Field) -> Result<GradientField> {
    f.check_on(space)?;
    Ok(GradientField {
        values: tilde_nabla_sq_raw(space, f.values())
            .into_iter()
            .map(f64::sqrt)
            .collect(),
        kind: GradientKind::TildeNabla,
    })
}

pub(crate) fn tilde_nabla_sq_raw(space: &Space, fv: &[f64]) -> Vec<f64> {
    one_sided_sq(space, fv, |fi, fj| fi.abs() >= fj.abs())
}

fn one_sided_sq(space: &Space, fv: &[f64], include: impl Fn(f64, f64) -> bool) -> Vec<f64> {
    let n = space.n();
    let m = space.measure();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            if include(fv[i], fv[j]) {
                let d = fv[i] - fv[j];
                acc += d * d * space.kernel()[(i, j)] * m[j];
            }
        }
        out[i] = acc;
    }
    out
}

/// The interpolation integral
/// `I(a,b;p) = int_0^1 (1-u) a^{2-p} / ((1-u)a + ub)^{2-p} du`
/// with the convention `0^0 := 1`.
///
/// Evaluated by the closed antiderivative of `(b-v) v^{p-2}` after the
/// substitution `v = (1-u)a + ub`; a power series around `a = b` replaces
/// the closed form where cancellation would lose precision.
pub fn i_integral(a: f64, b: f64, p: f64) -> Result<f64> {
    if !(a >= 0.0) || !(b >= 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "i_integral needs a, b >= 0, got a = {a}, b = {b}"
        )));
    }
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (1,2]")));
    }
    if a == b {
        return Ok(0.5);
    }
    if a == 0.0 {
        // a^{2-p} = 0 for p < 2; exponent 0 with 0^0 := 1 gives 1/2 at p = 2.
        return Ok(if p == 2.0 { 0.5 } else { 0.0 });
    }
    if b == 0.0 {
        // Integrand reduces to (1-u)^{p-1}.
        return Ok(1.0 / p);
    }
    let delta = (b - a) / a;
    if delta.abs() <= 0.5 {
        // I = sum_m binom(p-2, m) delta^m / ((m+1)(m+2)).
        let mut term = 1.0;
        let mut sum = 0.5;
        for m in 0..200 {
            term *= (p - 2.0 - m as f64) / (m as f64 + 1.0) * delta;
            let contrib = term / ((m as f64 + 2.0) * (m as f64 + 3.0));
            sum += contrib;
            if contrib.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        Ok(sum)
    } else {
        let num = b * (b.powf(p - 1.0) - a.powf(p - 1.0)) / (p - 1.0)
            - (b.powf(p) - a.powf(p)) / p;
        Ok(a.powf(2.0 - p) / ((b - a) * (b - a)) * num)
    }
}

fn check_p_range(p: f64) -> Result<()> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (1,2]")));
    }
    Ok(())
}

/// Pseudo-gradient by its definition:
/// `Gamma_p(f)(i) = p f_i (Lf)_i - |f_i|^{2-p} (L|f|^p)_i`.
pub fn gamma_p_definitional(space: &Space, f: &Field, p: f64) -> Result<GradientField> {
    check_p_range(p)?;
    f.check_on(space)?;
    let lf = generator_apply(space, f)?;
    let fp = f.map(|v| v.abs().powf(p));
    let lfp = generator_apply(space, &fp)?;
    let values = f
        .values()
        .iter()
        .zip(lf.values())
        .zip(lfp.values())
        .map(|((&fi, &lfi), &lfpi)| p * fi * lfi - pow_two_minus_p(fi, p) * lfpi)
        .collect();
    Ok(GradientField {
        values,
        kind: GradientKind::GammaP,
    })
}

/// `|x|^{2-p}` with `|0|^{2-p} := 0` for `p < 2` and `|x|^0 = 1` at `p = 2`.
fn pow_two_minus_p(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else if x == 0.0 {
        0.0
    } else {
        x.abs().powf(2.0 - p)
    }
}

/// Pseudo-gradient by the explicit formula, valid for nonnegative fields:
/// `Gamma_p(f)(i) = p(p-1) sum_{j: f_j != f_i} (f_i-f_j)^2 I(f_i,f_j;p) J(i,j) m_j`.
pub fn gamma_p_explicit(space: &Space, f: &Field, p: f64) -> Result<GradientField> {
    check_p_range(p)?;
    f.check_on(space)?;
    if let Some(v) = f.values().iter().find(|v| **v < 0.0) {
        return Err(Error::PreconditionViolation(format!(
            "explicit pseudo-gradient requires f >= 0, found entry {v}"
        )));
    }
    let n = space.n();
    let m = space.measure();
    let fv = f.values();
    let mut values = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            if fv[j] == fv[i] {
                continue;
            }
            let d = fv[i] - fv[j];
            acc += d * d * i_integral(fv[i], fv[j], p)? * space.kernel()[(i, j)] * m[j];
        }
        values[i] = p * (p - 1.0) * acc;
    }
    Ok(GradientField {
        values,
        kind: GradientKind::GammaP,
    })
}

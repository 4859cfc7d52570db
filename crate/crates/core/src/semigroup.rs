//! Generator, spectral decomposition, heat and Poisson semigroups.
//!
//! The generator acts as `Lf(i) = sum_j (f_i - f_j) J(i,j) m_j` and is
//! self-adjoint in the measure-weighted inner product. One dense symmetric
//! eigendecomposition per space yields everything downstream: `P_t = e^{-tL}`,
//! `e^{-t sqrt(L)}`, the transition density `p_t(x,y)` and the closed-form
//! time integrals used by the square functions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::space::Space;

/// Eigenvalues and measure-orthonormal eigenvectors of the generator.
///
/// `basis` holds the eigenvectors as columns, orthonormal in
/// `<f,g> = sum_i m_i f_i g_i`; eigenvalues are sorted nondecreasing and
/// eigenvalues indistinguishable from zero are clamped to exactly zero.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    basis: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvector `k` as a field.
    pub fn eigenvector(&self, k: usize) -> Field {
        Field::new(self.basis.column(k).iter().copied().collect())
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Largest eigenvalue.
    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Smallest nonzero eigenvalue, if any.
    pub fn lambda_gap(&self) -> Option<f64> {
        self.eigenvalues.iter().copied().find(|&l| l > 0.0)
    }

    /// Coefficients `c_k = <f, phi_k>` in the weighted inner product.
    pub fn project(&self, space: &Space, f: &Field) -> Vec<f64> {
        let m = space.measure();
        let weighted = DVector::from_iterator(
            f.len(),
            f.values().iter().zip(m).map(|(v, mi)| v * mi),
        );
        (self.basis.transpose() * weighted).iter().copied().collect()
    }

    /// Rebuild a field from coefficients.
    pub fn synthesize(&self, coeffs: &[f64]) -> Field {
        let c = DVector::from_column_slice(coeffs);
        Field::new((&self.basis * c).iter().copied().collect())
    }

    /// `P_t` applied to spectral coefficients, returning a field.
    pub fn heat_from_coeffs(&self, coeffs: &[f64], t: f64) -> Field {
        let damped: Vec<f64> = coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| c * (-l * t).exp())
            .collect();
        self.synthesize(&damped)
    }

    /// `e^{-t sqrt(L)}` applied to spectral coefficients.
    pub fn poisson_from_coeffs(&self, coeffs: &[f64], t: f64) -> Field {
        let damped: Vec<f64> = coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| c * (-t * l.sqrt()).exp())
            .collect();
        self.synthesize(&damped)
    }

    /// Projection onto the kernel of `L` (the zero modes).
    pub fn project_zero_modes(&self, space: &Space, f: &Field) -> Field {
        let coeffs = self.project(space, f);
        let kept: Vec<f64> = coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| if *l == 0.0 { *c } else { 0.0 })
            .collect();
        self.synthesize(&kept)
    }
}

/// Dense matrix of the generator in the standard basis:
/// `L[i][j] = delta_ij q_i - J(i,j) m_j`.
pub fn generator_matrix(space: &Space) -> DMatrix<f64> {
    let n = space.n();
    let m = space.measure();
    let q = space.rates();
    DMatrix::from_fn(n, n, |i, j| {
        let off = -space.kernel()[(i, j)] * m[j];
        if i == j {
            q[i] + off
        } else {
            off
        }
    })
}

/// Apply the generator: `(Lf)_i = sum_j (f_i - f_j) J(i,j) m_j`.
pub fn generator_apply(space: &Space, f: &Field) -> Result<Field> {
    f.check_on(space)?;
    let n = space.n();
    let m = space.measure();
    let fv = f.values();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += (fv[i] - fv[j]) * space.kernel()[(i, j)] * m[j];
        }
        out[i] = acc;
    }
    Ok(Field::new(out))
}

/// Eigendecompose the generator, self-adjoint under the weighted inner
/// product, via the similarity `S = D^{1/2} L D^{-1/2}` with `D = diag(m)`.
pub fn decompose(space: &Space) -> Result<SpectralDecomposition> {
    let n = space.n();
    let m = space.measure();
    let q = space.rates();
    let sqrt_m: Vec<f64> = m.iter().map(|v| v.sqrt()).collect();
    // S[i][j] = delta_ij q_i - J(i,j) sqrt(m_i m_j), exactly symmetric.
    let sym = DMatrix::from_fn(n, n, |i, j| {
        let off = -space.kernel()[(i, j)] * sqrt_m[i] * sqrt_m[j];
        if i == j {
            q[i] + off
        } else {
            off
        }
    });
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let scale = eigenvalues
        .iter()
        .fold(1.0f64, |acc, &l| acc.max(l.abs()));
    for l in &mut eigenvalues {
        if l.abs() <= 1e-11 * scale {
            *l = 0.0;
        }
        if *l < -1e-9 * scale {
            return Err(Error::NumericalFailure(format!(
                "negative eigenvalue {l} (scale {scale})"
            )));
        }
        *l = l.max(0.0);
    }

    let mut basis = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            basis[(i, col)] = eig.eigenvectors[(i, k)] / sqrt_m[i];
        }
    }
    let decomp = SpectralDecomposition { eigenvalues, basis };

    // Orthonormality and eigen-residual diagnostics.
    let mut max_ortho: f64 = 0.0;
    for k in 0..n {
        for l in k..n {
            let dot: f64 = (0..n)
                .map(|i| m[i] * decomp.basis[(i, k)] * decomp.basis[(i, l)])
                .sum();
            let target = if k == l { 1.0 } else { 0.0 };
            max_ortho = max_ortho.max((dot - target).abs());
        }
    }
    if max_ortho > 1e-10 {
        return Err(Error::NumericalFailure(format!(
            "eigenvectors lost orthonormality: max deviation {max_ortho:.3e}"
        )));
    }
    let lmat = generator_matrix(space);
    let mut max_resid: f64 = 0.0;
    for k in 0..n {
        let phi = decomp.basis.column(k);
        let resid = &lmat * phi - decomp.eigenvalues[k] * phi;
        max_resid = max_resid.max(resid.amax());
    }
    if max_resid > 1e-8 * scale.max(1.0) {
        return Err(Error::NumericalFailure(format!(
            "eigen-residual {max_resid:.3e} exceeds tolerance at scale {scale:.3e}"
        )));
    }
    Ok(decomp)
}

/// Heat semigroup `P_t f`.
pub fn heat(space: &Space, decomp: &SpectralDecomposition, f: &Field, t: f64) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be >= 0")));
    }
    f.check_on(space)?;
    Ok(decomp.heat_from_coeffs(&decomp.project(space, f), t))
}

/// Poisson semigroup `e^{-t sqrt(L)} f`.
pub fn poisson(space: &Space, decomp: &SpectralDecomposition, f: &Field, t: f64) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be >= 0")));
    }
    f.check_on(space)?;
    Ok(decomp.poisson_from_coeffs(&decomp.project(space, f), t))
}

/// Transition density `p_t(i,j) = sum_k e^{-lambda_k t} phi_k(i) phi_k(j)`.
///
/// The jump probability from `i` to `j` over time `t` is `p_t(i,j) m_j`.
pub fn heat_kernel(
    _space: &Space,
    decomp: &SpectralDecomposition,
    t: f64,
) -> Result<DMatrix<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be > 0")));
    }
    let n = decomp.n();
    let damped = DMatrix::from_fn(n, n, |i, k| {
        decomp.basis[(i, k)] * (-decomp.eigenvalues[k] * t).exp()
    });
    Ok(&damped * decomp.basis.transpose())
}

/// Semigroup maximal function `f*(i) = sup_{t>0} |P_t f(i)|`, approximated
/// on a log-spaced time grid bracketed by the endpoint limits `|f|` (t -> 0)
/// and the zero-mode projection (t -> infinity).
pub fn maximal_function(
    space: &Space,
    decomp: &SpectralDecomposition,
    f: &Field,
    grid_size: usize,
) -> Result<Field> {
    if grid_size < 16 {
        return Err(Error::InvalidParameter(format!(
            "grid_size = {grid_size} must be >= 16"
        )));
    }
    f.check_on(space)?;
    let coeffs = decomp.project(space, f);
    let mut best: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    for (b, p0) in best
        .iter_mut()
        .zip(decomp.project_zero_modes(space, f).values())
    {
        *b = b.max(p0.abs());
    }
    if let Some(gap) = decomp.lambda_gap() {
        let t_min = 1e-3 / decomp.lambda_max();
        let t_max = 20.0 / gap;
        let ratio = (t_max / t_min).ln();
        for g in 0..grid_size {
            let t = t_min * (ratio * g as f64 / (grid_size - 1) as f64).exp();
            let u = decomp.heat_from_coeffs(&coeffs, t);
            for (b, v) in best.iter_mut().zip(u.values()) {
                *b = b.max(v.abs());
            }
        }
    }
    Ok(Field::new(best))
}

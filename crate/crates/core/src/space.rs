//! Finite metric measure spaces carrying a symmetric jump kernel.
//!
//! A [`Space`] holds the quadruple (points, metric, measure, kernel): an
//! `n x n` distance matrix, strictly positive point weights `m_i`, and a
//! symmetric jump density `J(i,j)` with zero diagonal. The jump measure out
//! of `i` assigns mass `J(i,j) * m_j` to the point `j`, and the energy form
//! is
//!
//! ```text
//! D(f,g) = 1/2 * sum_{i != j} (f_i - f_j)(g_i - g_j) J(i,j) m_i m_j
//! ```
//!
//! Kernels are built from one triangle and mirrored, so symmetry holds to
//! the last bit and tests may assert exact equality.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;

/// Symmetrization convention for variable-order kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderConvention {
    /// Exponent `max(s_i, s_j)`.
    Max,
    /// Exponent `(s_i + s_j) / 2`.
    Mean,
}

/// A finite metric measure space with a symmetric jump kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    n: usize,
    coords: Option<Vec<f64>>,
    dist: DMatrix<f64>,
    measure: Vec<f64>,
    kernel: DMatrix<f64>,
}

/// On-disk form of a [`Space`]; matrices as row-major nested lists.
#[derive(Serialize, Deserialize)]
struct SpaceDoc {
    n: usize,
    coords: Option<Vec<f64>>,
    dist: Vec<Vec<f64>>,
    measure: Vec<f64>,
    kernel: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidSpace(format!("matrix is not {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl Space {
    /// Assemble a space from raw parts, validating every invariant.
    pub fn new(
        coords: Option<Vec<f64>>,
        dist: DMatrix<f64>,
        measure: Vec<f64>,
        kernel: DMatrix<f64>,
    ) -> Result<Self> {
        let n = measure.len();
        let space = Space {
            n,
            coords,
            dist,
            measure,
            kernel,
        };
        space.validate()?;
        Ok(space)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidSpace("empty space".into()));
        }
        if self.dist.nrows() != n || self.dist.ncols() != n {
            return Err(Error::InvalidSpace("dist must be n x n".into()));
        }
        if self.kernel.nrows() != n || self.kernel.ncols() != n {
            return Err(Error::InvalidSpace("kernel must be n x n".into()));
        }
        if let Some(c) = &self.coords {
            if c.len() != n {
                return Err(Error::InvalidSpace("coords length mismatch".into()));
            }
        }
        for (i, &m) in self.measure.iter().enumerate() {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::InvalidSpace(format!(
                    "measure[{i}] = {m} is not strictly positive"
                )));
            }
        }
        for i in 0..n {
            if self.dist[(i, i)] != 0.0 {
                return Err(Error::InvalidSpace(format!("dist[{i},{i}] != 0")));
            }
            if self.kernel[(i, i)] != 0.0 {
                return Err(Error::InvalidSpace(format!("kernel[{i},{i}] != 0")));
            }
            for j in 0..n {
                let d = self.dist[(i, j)];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidSpace(format!("dist[{i},{j}] = {d}")));
                }
                if i != j && d == 0.0 {
                    return Err(Error::InvalidSpace(format!(
                        "dist[{i},{j}] = 0 off the diagonal"
                    )));
                }
                if self.dist[(i, j)] != self.dist[(j, i)] {
                    return Err(Error::InvalidSpace(format!("dist[{i},{j}] != dist[{j},{i}]")));
                }
                let k = self.kernel[(i, j)];
                if !k.is_finite() || k < 0.0 {
                    return Err(Error::InvalidSpace(format!("kernel[{i},{j}] = {k}")));
                }
                if k != self.kernel[(j, i)] {
                    return Err(Error::InvalidSpace(format!(
                        "kernel[{i},{j}] != kernel[{j},{i}]"
                    )));
                }
            }
        }
        // Triangle inequality, exhaustively; n is desk-scale.
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let lhs = self.dist[(i, j)];
                    let rhs = self.dist[(i, k)] + self.dist[(k, j)];
                    if lhs > rhs + 1e-12 * rhs.max(1.0) {
                        return Err(Error::InvalidSpace(format!(
                            "triangle inequality fails on ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coords(&self) -> Option<&[f64]> {
        self.coords.as_deref()
    }

    pub fn dist(&self) -> &DMatrix<f64> {
        &self.dist
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// Total mass of the measure.
    pub fn total_mass(&self) -> f64 {
        self.measure.iter().sum()
    }

    /// Total jump rate out of point `i`: `q_i = sum_j J(i,j) m_j`.
    pub fn rate(&self, i: usize) -> f64 {
        (0..self.n)
            .map(|j| self.kernel[(i, j)] * self.measure[j])
            .sum()
    }

    /// All jump rates.
    pub fn rates(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.rate(i)).collect()
    }

    /// Weighted inner product `<f,g> = sum_i m_i f_i g_i`.
    pub fn inner(&self, f: &Field, g: &Field) -> f64 {
        f.values()
            .iter()
            .zip(g.values())
            .zip(&self.measure)
            .map(|((a, b), m)| m * a * b)
            .sum()
    }

    /// The Dirichlet form `D(f,g)`.
    pub fn dirichlet_form(&self, f: &Field, g: &Field) -> f64 {
        let fv = f.values();
        let gv = g.values();
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i == j {
                    continue;
                }
                acc += (fv[i] - fv[j])
                    * (gv[i] - gv[j])
                    * self.kernel[(i, j)]
                    * self.measure[i]
                    * self.measure[j];
            }
        }
        0.5 * acc
    }

    /// Energy `D(f,f)`.
    pub fn energy(&self, f: &Field) -> f64 {
        self.dirichlet_form(f, f)
    }

    /// Replace the kernel, revalidating. Used by the truncation family.
    pub fn with_kernel(&self, kernel: DMatrix<f64>) -> Result<Self> {
        Space::new(
            self.coords.clone(),
            self.dist.clone(),
            self.measure.clone(),
            kernel,
        )
    }

    /// Serialize to the canonical JSON document.
    pub fn to_json(&self) -> Result<String> {
        let doc = SpaceDoc {
            n: self.n,
            coords: self.coords.clone(),
            dist: rows(&self.dist),
            measure: self.measure.clone(),
            kernel: rows(&self.kernel),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Load from the canonical JSON document, re-validating all invariants.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SpaceDoc = serde_json::from_str(s)?;
        let dist = from_rows(&doc.dist, doc.n)?;
        let kernel = from_rows(&doc.kernel, doc.n)?;
        if doc.measure.len() != doc.n {
            return Err(Error::InvalidSpace("measure length mismatch".into()));
        }
        Space::new(doc.coords, dist, doc.measure, kernel)
    }
}

/// Mirror the strict upper triangle onto the lower one and zero the diagonal.
fn mirror_upper(mut k: DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    for i in 0..n {
        k[(i, i)] = 0.0;
        for j in (i + 1)..n {
            let v = k[(i, j)];
            k[(j, i)] = v;
        }
    }
    k
}

/// Canonical two-point fixture: unit weights, unit distance, rate `beta`.
pub fn build_two_state(beta: f64) -> Result<Space> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be > 0")));
    }
    let dist = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let kernel = mirror_upper(DMatrix::from_row_slice(2, 2, &[0.0, beta, 0.0, 0.0]));
    Space::new(Some(vec![0.0, 1.0]), dist, vec![1.0, 1.0], kernel)
}

/// Arc-length distance between grid points `i` and `j` on the unit circle.
fn torus_dist(i: usize, j: usize, n: usize) -> f64 {
    let k = (i as isize - j as isize).unsigned_abs();
    let k = k.min(n - k);
    k as f64 / n as f64
}

fn torus_geometry(n: usize) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let coords = (0..n).map(|i| i as f64 / n as f64).collect();
    let dist = DMatrix::from_fn(n, n, |i, j| torus_dist(i, j, n));
    let measure = vec![1.0 / n as f64; n];
    (coords, dist, measure)
}

/// Grid instance of a symmetric stable-type kernel on the unit circle:
/// `J(i,j) = d(i,j)^(-1-alpha)` with `m_i = 1/n`.
pub fn build_torus_stable(n: usize, alpha: f64) -> Result<Space> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n} must be >= 2")));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} outside (0,2)"
        )));
    }
    let (coords, dist, measure) = torus_geometry(n);
    let mut kernel = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            kernel[(i, j)] = dist[(i, j)].powf(-1.0 - alpha);
        }
    }
    Space::new(Some(coords), dist, measure, mirror_upper(kernel))
}

/// Variable-order stable-like kernel on the torus grid:
/// `J(i,j) = d(i,j)^(-1-e(i,j))` with the symmetric exponent `e(i,j)`
/// given by the chosen convention.
pub fn build_variable_order(n: usize, s: &[f64], convention: OrderConvention) -> Result<Space> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n} must be >= 2")));
    }
    if s.len() != n {
        return Err(Error::InvalidParameter(format!(
            "order function has {} values, expected {n}",
            s.len()
        )));
    }
    for (i, &si) in s.iter().enumerate() {
        if !(si > 0.0 && si < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "s[{i}] = {si} outside (0,2)"
            )));
        }
    }
    let (coords, dist, measure) = torus_geometry(n);
    let mut kernel = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let e = match convention {
                OrderConvention::Max => s[i].max(s[j]),
                OrderConvention::Mean => 0.5 * (s[i] + s[j]),
            };
            kernel[(i, j)] = dist[(i, j)].powf(-1.0 - e);
        }
    }
    Space::new(Some(coords), dist, measure, mirror_upper(kernel))
}

/// Random symmetric kernel on a line embedding; reproducible from `seed`.
pub fn build_random_kernel(n: usize, density: f64, seed: u64) -> Result<Space> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n} must be >= 2")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "density = {density} outside (0,1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let dist = DMatrix::from_fn(n, n, |i, j| (coords[i] - coords[j]).abs());
    let measure = vec![1.0 / n as f64; n];
    let mut kernel = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let keep = density >= 1.0 || rng.gen::<f64>() < density;
            if keep {
                kernel[(i, j)] = 0.1 + 0.9 * rng.gen::<f64>();
            }
        }
    }
    Space::new(Some(coords), dist, measure, mirror_upper(kernel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;

    #[test]
    fn two_state_rates_and_energy() {
        let s = build_two_state(1.0).unwrap();
        assert_eq!(s.rates(), vec![1.0, 1.0]);
        let s2 = build_two_state(0.5).unwrap();
        let f = Field::new(vec![1.0, -1.0]);
        assert!((s2.energy(&f) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn two_state_rejects_nonpositive_beta() {
        assert!(matches!(
            build_two_state(0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(build_two_state(-1.0).is_err());
    }

    #[test]
    fn two_state_kernel_symmetric_exactly() {
        let s = build_two_state(1.0).unwrap();
        assert_eq!(s.kernel()[(0, 1)], s.kernel()[(1, 0)]);
    }

    #[test]
    fn torus_stable_values() {
        let s = build_torus_stable(4, 1.0).unwrap();
        assert_eq!(s.dist()[(0, 2)], 0.5);
        assert!((s.kernel()[(0, 2)] - 4.0).abs() < 1e-14);
        assert_eq!(s.kernel()[(0, 1)], s.kernel()[(1, 0)]);
    }

    #[test]
    fn torus_rates_translation_invariant() {
        let s = build_torus_stable(8, 0.5).unwrap();
        let q = s.rates();
        for i in 1..8 {
            assert!((q[i] - q[0]).abs() < 1e-12 * q[0]);
        }
    }

    #[test]
    fn torus_rejects_bad_alpha() {
        assert!(build_torus_stable(8, 0.0).is_err());
        assert!(build_torus_stable(8, 2.0).is_err());
        assert!(build_torus_stable(1, 1.0).is_err());
    }

    #[test]
    fn variable_order_constant_matches_stable() {
        let a = build_torus_stable(8, 0.7).unwrap();
        let b = build_variable_order(8, &[0.7; 8], OrderConvention::Max).unwrap();
        assert_eq!(a.kernel(), b.kernel());
        let c = build_variable_order(8, &[0.7; 8], OrderConvention::Mean).unwrap();
        assert_eq!(a.kernel(), c.kernel());
    }

    #[test]
    fn variable_order_max_convention_value() {
        let s = build_variable_order(4, &[0.5, 0.5, 1.5, 1.5], OrderConvention::Max).unwrap();
        // e(0,2) = 1.5, d = 0.5 -> 0.5^(-2.5)
        assert!((s.kernel()[(0, 2)] - 0.5f64.powf(-2.5)).abs() < 1e-12);
        assert!((s.kernel()[(0, 2)] - 5.65685).abs() < 1e-4);
    }

    #[test]
    fn variable_order_rejects_out_of_range() {
        assert!(build_variable_order(4, &[0.5, 2.5, 0.5, 0.5], OrderConvention::Max).is_err());
    }

    #[test]
    fn random_kernel_deterministic_and_symmetric() {
        let a = build_random_kernel(20, 0.3, 7).unwrap();
        let b = build_random_kernel(20, 0.3, 7).unwrap();
        assert_eq!(a, b);
        for i in 0..20 {
            assert_eq!(a.kernel()[(i, i)], 0.0);
            for j in 0..20 {
                assert_eq!(a.kernel()[(i, j)], a.kernel()[(j, i)]);
            }
        }
    }

    #[test]
    fn random_kernel_full_density_is_complete() {
        let s = build_random_kernel(10, 1.0, 3).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                if i != j {
                    assert!(s.kernel()[(i, j)] > 0.0);
                }
            }
        }
    }

    #[test]
    fn energy_nonnegative_and_zero_on_constants() {
        let s = build_random_kernel(12, 0.5, 11).unwrap();
        let c = Field::constant(12, 3.7);
        assert_eq!(s.energy(&c), 0.0);
        let f = Field::new((0..12).map(|i| (i as f64).sin()).collect());
        assert!(s.energy(&f) >= 0.0);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let s = build_torus_stable(6, 1.2).unwrap();
        let doc = s.to_json().unwrap();
        let back = Space::from_json(&doc).unwrap();
        assert_eq!(s, back);

        // Corrupt symmetry: loader must reject.
        let mut bad: serde_json::Value = serde_json::from_str(&doc).unwrap();
        bad["kernel"][0][1] = serde_json::json!(123.0);
        assert!(Space::from_json(&bad.to_string()).is_err());

        // Nonzero diagonal: loader must reject.
        let mut bad2: serde_json::Value = serde_json::from_str(&doc).unwrap();
        bad2["kernel"][2][2] = serde_json::json!(1.0);
        assert!(Space::from_json(&bad2.to_string()).is_err());
    }
}

//! Truncated-kernel approximating families and their convergence behaviour.
//!
//! Truncation keeps the long jumps and removes the short ones:
//! `kernel_r(i,j) = J(i,j) * 1{d(i,j) > r}`. As the radius decreases the
//! kernels increase entrywise, the forms increase monotonically, and the
//! truncated semigroups converge strongly to the full one. Below the
//! minimum pairwise distance the truncation is the identity, so the finite
//! sweep ends exactly at the base space.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::harness::lp_norm;
use crate::semigroup::{decompose, heat};
use crate::space::{build_torus_stable, Space};

/// A decreasing sweep of truncation radii with the truncated spaces.
#[derive(Debug, Clone)]
pub struct TruncationFamily {
    base: Space,
    radii: Vec<f64>,
    members: Vec<Space>,
}

impl TruncationFamily {
    pub fn base(&self) -> &Space {
        &self.base
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn members(&self) -> &[Space] {
        &self.members
    }
}

/// Truncate the kernel of `space` at each radius in `radii`.
pub fn build_truncation(space: &Space, radii: &[f64]) -> Result<TruncationFamily> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("empty radius list".into()));
    }
    for w in radii.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidParameter(format!(
                "radii must be strictly decreasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if !(radii[radii.len() - 1] > 0.0) {
        return Err(Error::InvalidParameter("radii must be positive".into()));
    }
    let n = space.n();
    let members = radii
        .iter()
        .map(|&r| {
            let kernel = DMatrix::from_fn(n, n, |i, j| {
                if space.dist()[(i, j)] > r {
                    space.kernel()[(i, j)]
                } else {
                    0.0
                }
            });
            space.with_kernel(kernel)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruncationFamily {
        base: space.clone(),
        radii: radii.to_vec(),
        members,
    })
}

/// Energy of `f` in each truncated form, paired with its radius. The
/// sequence is nondecreasing as the radius shrinks and ends at `D(f,f)`
/// once the radius drops below the minimum pairwise distance.
pub fn form_convergence(family: &TruncationFamily, f: &Field) -> Result<Vec<(f64, f64)>> {
    f.check_on(&family.base)?;
    Ok(family
        .radii
        .iter()
        .zip(&family.members)
        .map(|(&r, member)| (r, member.energy(f)))
        .collect())
}

/// `|P_t^{(r)} f - P_t f|_2` per radius; one eigendecomposition per member.
pub fn semigroup_convergence(
    family: &TruncationFamily,
    f: &Field,
    t: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be > 0")));
    }
    f.check_on(&family.base)?;
    let base_decomp = decompose(&family.base)?;
    let reference = heat(&family.base, &base_decomp, f, t)?;
    family
        .radii
        .iter()
        .zip(&family.members)
        .map(|(&r, member)| {
            let d = decompose(member)?;
            let u = heat(member, &d, f, t)?;
            Ok((r, lp_norm(&family.base, &u.sub(&reference), 2.0)?))
        })
        .collect()
}

/// One level of the joint refinement/truncation sweep.
#[derive(Debug, Clone, Serialize)]
pub struct RefineRow {
    pub n: usize,
    pub radius: f64,
    pub error: f64,
}

/// Joint grid refinement and truncation on the stable torus family: at
/// each level `n`, compare the truncated and untruncated semigroups at
/// `t = 1` on a fixed smooth profile sampled on that grid. Trend data
/// only; nothing is asserted here.
pub fn refine_and_truncate(
    n_list: &[usize],
    alpha: f64,
    r_of_n: impl Fn(usize) -> f64,
) -> Result<Vec<RefineRow>> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("n_list must be increasing".into()));
    }
    let t = 1.0;
    n_list
        .iter()
        .map(|&n| {
            let space = build_torus_stable(n, alpha)?;
            let radius = r_of_n(n);
            let spacing = 1.0 / n as f64;
            if radius < spacing {
                return Err(Error::InvalidParameter(format!(
                    "r_of_n({n}) = {radius} below grid spacing {spacing}"
                )));
            }
            let profile = Field::new(
                (0..n)
                    .map(|i| (std::f64::consts::TAU * i as f64 / n as f64).sin())
                    .collect(),
            );
            let family = build_truncation(&space, &[radius])?;
            let errors = semigroup_convergence(&family, &profile, t)?;
            Ok(RefineRow {
                n,
                radius,
                error: errors[0].1,
            })
        })
        .collect()
}

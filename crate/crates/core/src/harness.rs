//! Lp norms, random-field families, empirical operator-constant
//! estimation and the inequality suite.
//!
//! The estimated constants are maxima of observed ratios — lower bounds on
//! the operator norms, labeled as such and never claimed as the norms.
//! Every report is a deterministic function of (config, seed): trials use
//! per-index generator streams and reductions run in trial order, so
//! results are bit-stable across thread counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::gradients::{
    carre_du_champ, gamma_p_definitional, nabla, tilde_nabla, tilde_nabla_star,
};
use crate::mosco::{build_truncation, form_convergence};
use crate::semigroup::{decompose, maximal_function, SpectralDecomposition};
use crate::space::{
    build_random_kernel, build_torus_stable, build_two_state, build_variable_order,
    OrderConvention, Space,
};
use crate::squarefn::{decay_profile, g_function, g_tilde, h_nabla, h_p, h_tilde};

pub const SCHEMA_VERSION: u32 = 1;

/// Weighted Lp norm `(sum_i m_i |f_i|^p)^{1/p}`; `max_i |f_i|` at p = inf.
pub fn lp_norm(space: &Space, f: &Field, p: f64) -> Result<f64> {
    f.check_on(space)?;
    if p.is_infinite() && p > 0.0 {
        return Ok(f.max_abs());
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must be >= 1")));
    }
    let total: f64 = f
        .values()
        .iter()
        .zip(space.measure())
        .map(|(v, m)| m * v.abs().powf(p))
        .sum();
    Ok(total.powf(1.0 / p))
}

/// Random-field families used by the estimation and inequality harnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFamily {
    /// Iid standard normals.
    Gaussian,
    /// A few random `+-1` spikes, zeros elsewhere.
    Spikes,
    /// Random combination of the lowest nonconstant eigenmodes.
    LowMode,
    /// Exponentials of gaussians; strictly positive.
    NonnegExp,
    /// Gaussian recentred to zero mean against the measure.
    SignedMix,
}

pub const ALL_FAMILIES: [FieldFamily; 5] = [
    FieldFamily::Gaussian,
    FieldFamily::Spikes,
    FieldFamily::LowMode,
    FieldFamily::NonnegExp,
    FieldFamily::SignedMix,
];

/// Draw one field; deterministic in `(seed, index)`.
pub fn sample_field(
    space: &Space,
    decomp: &SpectralDecomposition,
    family: FieldFamily,
    seed: u64,
    index: u64,
) -> Field {
    let n = space.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let gaussians = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    match family {
        FieldFamily::Gaussian => Field::new(gaussians(&mut rng)),
        FieldFamily::Spikes => {
            let k = (n / 10).max(1);
            let mut values = vec![0.0; n];
            let mut placed = 0;
            while placed < k {
                let i = rng.gen_range(0..n);
                if values[i] == 0.0 {
                    values[i] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    placed += 1;
                }
            }
            Field::new(values)
        }
        FieldFamily::LowMode => {
            let modes = 3.min(n.saturating_sub(1)).max(1);
            let mut values = vec![0.0; n];
            for k in 1..=modes {
                let c: f64 = rng.sample(StandardNormal);
                let phi = decomp.eigenvector(k);
                for (v, e) in values.iter_mut().zip(phi.values()) {
                    *v += c * e;
                }
            }
            Field::new(values)
        }
        FieldFamily::NonnegExp => Field::new(gaussians(&mut rng).into_iter().map(f64::exp).collect()),
        FieldFamily::SignedMix => {
            let g = gaussians(&mut rng);
            let m = space.measure();
            let mean = g.iter().zip(m).map(|(v, w)| v * w).sum::<f64>() / space.total_mass();
            Field::new(g.into_iter().map(|v| v - mean).collect())
        }
    }
}

/// Declarative space builder, the JSON form of the fixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum SpaceSpec {
    TwoState {
        beta: f64,
    },
    Torus {
        n: usize,
        alpha: f64,
    },
    VariableOrder {
        n: usize,
        orders: Vec<f64>,
        #[serde(default = "default_convention")]
        convention: OrderConvention,
    },
    RandomKernel {
        n: usize,
        density: f64,
        seed: u64,
    },
}

fn default_convention() -> OrderConvention {
    OrderConvention::Max
}

impl SpaceSpec {
    pub fn build(&self) -> Result<Space> {
        match self {
            SpaceSpec::TwoState { beta } => build_two_state(*beta),
            SpaceSpec::Torus { n, alpha } => build_torus_stable(*n, *alpha),
            SpaceSpec::VariableOrder {
                n,
                orders,
                convention,
            } => build_variable_order(*n, orders, *convention),
            SpaceSpec::RandomKernel { n, density, seed } => {
                build_random_kernel(*n, *density, *seed)
            }
        }
    }

    /// The same spec at a different size, for stability sweeps.
    fn with_n(&self, n: usize) -> Result<SpaceSpec> {
        match self {
            SpaceSpec::Torus { alpha, .. } => Ok(SpaceSpec::Torus { n, alpha: *alpha }),
            SpaceSpec::RandomKernel { density, seed, .. } => Ok(SpaceSpec::RandomKernel {
                n,
                density: *density,
                seed: *seed,
            }),
            _ => Err(Error::Config(
                "size sweeps need a size-parameterized builder (torus or random kernel)".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute tolerance handed to time quadratures (on squared values).
    pub quadrature: f64,
    /// Allowed negative slack for analytically exact inequalities.
    pub slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            quadrature: 1e-6,
            slack: 1e-9,
        }
    }
}

/// One estimation or suite run, as read from a JSON config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialConfig {
    pub space: SpaceSpec,
    pub field_families: Vec<FieldFamily>,
    pub p_values: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Optional coordinate-perturbation hill-climbing budget.
    #[serde(default)]
    pub refine_steps: usize,
    /// Optional extra sizes for the stability sweep.
    #[serde(default)]
    pub sweep_n: Vec<usize>,
    /// Operators to estimate (used by the estimate command).
    #[serde(default)]
    pub operators: Vec<OperatorKind>,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be >= 1".into()));
        }
        if self.field_families.is_empty() {
            return Err(Error::Config("field_families must be nonempty".into()));
        }
        if self.p_values.iter().any(|&p| !(p > 1.0) || !p.is_finite()) {
            return Err(Error::Config("p_values must lie in (1, inf)".into()));
        }
        if !(self.tolerances.quadrature > 0.0 && self.tolerances.slack > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.refine_steps > 500 {
            return Err(Error::Config("refine_steps capped at 500".into()));
        }
        Ok(())
    }
}

/// Operators whose Lp constants the harness estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    HNabla,
    HTilde,
    HP,
    GTilde,
    G,
    Maximal,
    Decay,
}

/// Whether `(operator, p)` sits inside the range the bounds are stated for.
pub fn in_theorem_range(op: OperatorKind, p: f64) -> bool {
    match op {
        OperatorKind::HTilde | OperatorKind::HP | OperatorKind::GTilde | OperatorKind::Decay => {
            p > 1.0 && p <= 2.0
        }
        OperatorKind::HNabla | OperatorKind::G => p >= 2.0,
        OperatorKind::Maximal => p > 1.0,
    }
}

/// Apply an operator, returning the pointwise (unsquared) modulus field.
pub fn apply_operator(
    space: &Space,
    decomp: &SpectralDecomposition,
    op: OperatorKind,
    f: &Field,
    p: f64,
    quad_tol: f64,
) -> Result<Field> {
    match op {
        OperatorKind::HNabla => Ok(h_nabla(space, decomp, f)?.as_field()),
        OperatorKind::HTilde => Ok(h_tilde(space, decomp, f, quad_tol)?.as_field()),
        OperatorKind::HP => Ok(h_p(space, decomp, f, p, quad_tol)?.as_field()),
        OperatorKind::GTilde => Ok(g_tilde(space, decomp, f, quad_tol)?.as_field()),
        OperatorKind::G => Ok(g_function(space, decomp, f, f64::INFINITY, quad_tol)?.as_field()),
        OperatorKind::Maximal => maximal_function(space, decomp, f, 64),
        OperatorKind::Decay => Err(Error::InvalidParameter(
            "decay is a profile, not a pointwise operator".into(),
        )),
    }
}

/// The ratio `|Op f|_p / |f|_p`; for the decay profile, the sup of the
/// normalized profile over the standard 40-point log grid.
pub fn operator_ratio(
    space: &Space,
    decomp: &SpectralDecomposition,
    op: OperatorKind,
    f: &Field,
    p: f64,
    quad_tol: f64,
) -> Result<f64> {
    let denom = lp_norm(space, f, p)?;
    if denom == 0.0 {
        return Err(Error::PreconditionViolation("zero-norm field".into()));
    }
    if op == OperatorKind::Decay {
        let grid = log_grid(1e-3, 50.0, 40);
        let profile = decay_profile(space, decomp, f, p, &grid)?;
        return Ok(profile
            .iter()
            .fold(0.0f64, |m, pt| m.max(pt.gamma_ratio).max(pt.tilde_ratio)));
    }
    let image = apply_operator(space, decomp, op, f, p, quad_tol)?;
    Ok(lp_norm(space, &image, p)? / denom)
}

/// Logarithmically spaced grid including both endpoints.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln();
    (0..count)
        .map(|g| lo * (ratio * g as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyBreakdown {
    pub family: FieldFamily,
    pub max_ratio: f64,
    pub argmax_trial: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub n: usize,
    pub constant: f64,
}

/// Empirical constant for one `(operator, p)`: the max observed ratio.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantReport {
    pub schema_version: u32,
    pub operator: OperatorKind,
    pub p: f64,
    /// Max observed ratio — a lower bound on the operator norm.
    pub empirical_constant: f64,
    pub label: &'static str,
    pub outside_theorem_range: bool,
    pub families: Vec<FamilyBreakdown>,
    /// Successive improvements found by hill climbing, if enabled.
    pub refinement: Vec<f64>,
    /// Constants at other sizes, when the config sweeps `n`.
    pub sweep: Vec<SweepEntry>,
    pub n_trials: usize,
    pub seed: u64,
}

/// Max ratio over one family on one space, with the maximizing field.
fn family_max(
    space: &Space,
    decomp: &SpectralDecomposition,
    op: OperatorKind,
    family: FieldFamily,
    p: f64,
    config: &TrialConfig,
) -> Result<(f64, u64, Field)> {
    let results: Vec<Result<(f64, u64, Field)>> = (0..config.n_trials as u64)
        .into_par_iter()
        .map(|index| {
            // Degenerate draws are resampled at shifted indices, never
            // divided by.
            let mut idx = index;
            for _ in 0..32 {
                let f = sample_field(space, decomp, family, config.seed, idx);
                match operator_ratio(space, decomp, op, &f, p, config.tolerances.quadrature) {
                    Ok(r) => return Ok((r, index, f)),
                    Err(Error::PreconditionViolation(_)) => {
                        idx += config.n_trials as u64;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(Error::NumericalFailure(
                "resampling failed to produce a nonzero field".into(),
            ))
        })
        .collect();
    let mut best: Option<(f64, u64, Field)> = None;
    for r in results {
        let (ratio, index, f) = r?;
        if best.as_ref().map_or(true, |(b, _, _)| ratio > *b) {
            best = Some((ratio, index, f));
        }
    }
    Ok(best.expect("n_trials >= 1"))
}

/// Estimate the empirical Lp constant of `operator` for every `p` in the
/// config, including the optional hill-climbing refinement and size sweep.
pub fn estimate_constant(
    config: &TrialConfig,
    operator: OperatorKind,
) -> Result<Vec<ConstantReport>> {
    config.validate()?;
    let space = config.space.build()?;
    let decomp = decompose(&space)?;
    config
        .p_values
        .iter()
        .map(|&p| {
            let mut families = Vec::new();
            let mut best: Option<(f64, Field)> = None;
            for &family in &config.field_families {
                let (max_ratio, argmax_trial, f) =
                    family_max(&space, &decomp, operator, family, p, config)?;
                if best.as_ref().map_or(true, |(b, _)| max_ratio > *b) {
                    best = Some((max_ratio, f));
                }
                families.push(FamilyBreakdown {
                    family,
                    max_ratio,
                    argmax_trial,
                });
            }
            let (mut constant, mut champion) = best.expect("families nonempty");

            let mut refinement = Vec::new();
            if config.refine_steps > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(u64::MAX);
                for _ in 0..config.refine_steps {
                    let i = rng.gen_range(0..space.n());
                    let step: f64 = rng.sample(StandardNormal);
                    let mut candidate = champion.clone();
                    candidate.values_mut()[i] += 0.1 * champion.max_abs().max(1.0) * step;
                    if let Ok(r) = operator_ratio(
                        &space,
                        &decomp,
                        operator,
                        &candidate,
                        p,
                        config.tolerances.quadrature,
                    ) {
                        if r > constant {
                            constant = r;
                            champion = candidate;
                            refinement.push(r);
                        }
                    }
                }
            }

            let sweep = config
                .sweep_n
                .iter()
                .map(|&n| {
                    let spec = config.space.with_n(n)?;
                    let s = spec.build()?;
                    let d = decompose(&s)?;
                    let mut sweep_max = 0.0f64;
                    for &family in &config.field_families {
                        let (r, _, _) = family_max(&s, &d, operator, family, p, config)?;
                        sweep_max = sweep_max.max(r);
                    }
                    Ok(SweepEntry {
                        n,
                        constant: sweep_max,
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            Ok(ConstantReport {
                schema_version: SCHEMA_VERSION,
                operator,
                p,
                empirical_constant: constant,
                label: "max observed ratio",
                outside_theorem_range: !in_theorem_range(operator, p),
                families,
                refinement,
                sweep,
                n_trials: config.n_trials,
                seed: config.seed,
            })
        })
        .collect()
}

/// One entrywise inequality violation.
#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    pub inequality: String,
    pub family: FieldFamily,
    pub seed: u64,
    pub trial: u64,
    pub point: usize,
    /// Normalized slack `(rhs - lhs) / max(1, |lhs|, |rhs|)`.
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub n_fields: usize,
    pub checks: usize,
    /// Most negative normalized slack seen anywhere (positive means
    /// comfortable).
    pub worst_slack: f64,
    pub failures: Vec<FailureRecord>,
    pub pass: bool,
    pub seed: u64,
}

struct CheckAccumulator<'a> {
    family: FieldFamily,
    trial: u64,
    seed: u64,
    checks: usize,
    worst: f64,
    failures: &'a mut Vec<FailureRecord>,
}

impl CheckAccumulator<'_> {
    /// Record `lhs <= rhs + allowed` pointwise; slack is `rhs - lhs`.
    /// The allowance is relative to the magnitude of the compared values
    /// (floored at 1), so steep kernels do not turn double-precision
    /// residue on O(1e6) entries into spurious violations.
    fn entrywise(&mut self, name: &str, lhs: &[f64], rhs: &[f64], allowed: f64) {
        self.checks += 1;
        for (point, (&l, &r)) in lhs.iter().zip(rhs).enumerate() {
            let slack = r - l;
            let scale = l.abs().max(r.abs()).max(1.0);
            self.worst = self.worst.min(slack / scale);
            if slack < -allowed * scale {
                self.failures.push(FailureRecord {
                    inequality: name.to_string(),
                    family: self.family,
                    seed: self.seed,
                    trial: self.trial,
                    point,
                    slack: slack / scale,
                });
            }
        }
    }
}

/// Run every entrywise inequality from the gradient, square-function and
/// truncation layers over the configured families and p-grid. Failures
/// are data, not errors.
pub fn run_inequality_suite(config: &TrialConfig) -> Result<SuiteReport> {
    config.validate()?;
    let space = config.space.build()?;
    let decomp = decompose(&space)?;
    let p_grid: Vec<f64> = config
        .p_values
        .iter()
        .copied()
        .filter(|&p| p > 1.0 && p <= 2.0)
        .collect();
    let quad_tol = config.tolerances.quadrature;
    let slack_tol = config.tolerances.slack;

    let tasks: Vec<(FieldFamily, u64)> = config
        .field_families
        .iter()
        .flat_map(|&family| (0..config.n_trials as u64).map(move |t| (family, t)))
        .collect();

    let per_field: Vec<Result<(usize, f64, Vec<FailureRecord>)>> = tasks
        .par_iter()
        .map(|&(family, trial)| {
            let f = sample_field(&space, &decomp, family, config.seed, trial);
            let mut failures = Vec::new();
            let mut acc = CheckAccumulator {
                family,
                trial,
                seed: config.seed,
                checks: 0,
                worst: f64::INFINITY,
                failures: &mut failures,
            };

            let grad = nabla(&space, &f)?;
            let grad_sq: Vec<f64> = grad.values().iter().map(|v| v * v).collect();
            let star = tilde_nabla_star(&space, &f)?;
            let star_sq: Vec<f64> = star.values().iter().map(|v| v * v).collect();
            acc.entrywise(
                "one_sided_sq_le_2_gradient_sq",
                &star_sq,
                &grad_sq.iter().map(|v| 2.0 * v).collect::<Vec<_>>(),
                slack_tol,
            );

            let tilde = tilde_nabla(&space, &f)?;
            let tilde_sq: Vec<f64> = tilde.values().iter().map(|v| v * v).collect();
            let plus = tilde_nabla_star(&space, &f.positive_part())?;
            let minus = tilde_nabla_star(&space, &f.negative_part())?;
            let dom: Vec<f64> = plus
                .values()
                .iter()
                .zip(minus.values())
                .map(|(a, b)| 4.0 * (a * a + b * b))
                .collect();
            acc.entrywise("sign_split_domination", &tilde_sq, &dom, slack_tol);

            // Nonnegative-field pseudo-gradient bounds, on |f| when the
            // family is signed.
            let nonneg = if matches!(family, FieldFamily::NonnegExp) {
                f.clone()
            } else {
                f.abs()
            };
            let nonneg_grad = carre_du_champ(&space, &nonneg)?;
            for &p in &p_grid {
                let gp_pos = gamma_p_definitional(&space, &nonneg, p)?;
                let upper: Vec<f64> = nonneg_grad
                    .values()
                    .iter()
                    .map(|v| 2.0 * (p - 1.0) * v)
                    .collect();
                acc.entrywise("pseudo_gradient_upper", gp_pos.values(), &upper, slack_tol);
                let gamma2 = gamma_p_definitional(&space, &nonneg, 2.0)?;
                let upper2: Vec<f64> = gamma2.values().iter().map(|v| (p - 1.0) * v).collect();
                acc.entrywise(
                    "pseudo_gradient_le_gamma2",
                    gp_pos.values(),
                    &upper2,
                    slack_tol,
                );

                // Signed lower bound: p(p-1)/2 |tgrad f|^2 <= Gamma_p(f).
                let gp = gamma_p_definitional(&space, &f, p)?;
                let lower: Vec<f64> = tilde_sq
                    .iter()
                    .map(|v| 0.5 * p * (p - 1.0) * v)
                    .collect();
                acc.entrywise("pseudo_gradient_lower", &lower, gp.values(), slack_tol);
                acc.entrywise(
                    "pseudo_gradient_nonnegative",
                    &vec![0.0; space.n()],
                    gp.values(),
                    slack_tol,
                );
            }

            // Quadrature-based square-function dominations; the allowed
            // slack is the certified quadrature error of both sides. The
            // Poisson-vs-heat domination relies on subadditivity of the
            // modified gradient, which holds for nonnegative fields only,
            // so it runs on the nonnegative variant.
            let ht = h_tilde(&space, &decomp, &nonneg, quad_tol)?;
            let gt = g_tilde(&space, &decomp, &nonneg, quad_tol)?;
            let quad_slack = ht.report().est_error
                + ht.report().tail_bound
                + gt.report().est_error
                + gt.report().tail_bound;
            let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
            acc.entrywise(
                "poisson_le_heat_square_function",
                &sq(gt.values()),
                &sq(ht.values()),
                quad_slack,
            );

            let hn = h_nabla(&space, &decomp, &f)?;
            let g = g_function(&space, &decomp, &f, f64::INFINITY, quad_tol)?;
            acc.entrywise(
                "h_nabla_le_g",
                &sq(hn.values()),
                &sq(g.values()),
                g.report().est_error + g.report().tail_bound,
            );

            // Truncated forms grow as the radius shrinks.
            let diameter = space.dist().amax();
            let family_t = build_truncation(
                &space,
                &[0.75 * diameter, 0.5 * diameter, 0.25 * diameter],
            )?;
            let seq = form_convergence(&family_t, &f)?;
            for w in seq.windows(2) {
                acc.entrywise(
                    "truncation_form_monotone",
                    &[w[0].1],
                    &[w[1].1],
                    slack_tol,
                );
            }

            let checks = acc.checks;
            let worst = acc.worst;
            Ok((checks, worst, failures))
        })
        .collect();

    let mut checks = 0;
    let mut worst_slack = f64::INFINITY;
    let mut failures = Vec::new();
    for r in per_field {
        let (c, w, mut fs) = r?;
        checks += c;
        worst_slack = worst_slack.min(w);
        failures.append(&mut fs);
    }
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION,
        n_fields: tasks.len(),
        checks,
        worst_slack,
        failures,
        pass: true,
        seed: config.seed,
    }
    .finish())
}

impl SuiteReport {
    fn finish(mut self) -> Self {
        self.pass = self.failures.is_empty();
        self
    }
}

//! Named residuals for the structure equations of a Lagrangian immersion and
//! for the Laplacian formula of `|ĥ|²`.
//!
//! Residuals are relative: an absolute discrepancy `d` between two sides of
//! magnitude about `s` is reported as `d / (1 + s)`. Each residual carries the
//! rung of the tolerance ladder that matches how its inputs were obtained.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chart::{ChartPoint, SourceModel, SPHERE_DOMAIN_RADIUS};
use crate::error::{Error, Result};
use crate::geometry::{
    geometry_state_with, grad_t_fd, scalar_laplacian, Depth, GeometryOptions, GeometryState,
};
use crate::immersion::Immersion;
use crate::tensor::{
    contraction_identity_suite, curvature_sums, curvature_sums_closed_form, li_li_check,
    norm_identity_residual, random_orthogonal, random_symmetric, random_tracefree, random_vector,
    simons_bound_steps, CubicSymTensor, DenseTensor, Rank4, SimonsAlgebra, VectorField1,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rung {
    /// Pure algebra on given tensors.
    Algebraic,
    /// Quantities read off exact jets.
    JetExact,
    /// One finite-difference layer.
    OnceFd,
    /// Two finite-difference layers.
    TwiceFd,
}

impl Rung {
    pub fn tolerance(self) -> f64 {
        match self {
            Rung::Algebraic => 1e-10,
            Rung::JetExact => 1e-9,
            Rung::OnceFd => 1e-6,
            Rung::TwiceFd => 1e-4,
        }
    }

    /// One step down the ladder, used when the jets themselves are finite differences.
    pub fn looser(self) -> Rung {
        match self {
            Rung::Algebraic | Rung::JetExact => Rung::OnceFd,
            Rung::OnceFd | Rung::TwiceFd => Rung::TwiceFd,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `value` is a relative residual; passes when `value <= tolerance`.
    Equality,
    /// `value` is the shortfall `max(0, -margin)` of a one-sided bound.
    LowerBound,
}

/// One residual at one point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residual {
    pub name: &'static str,
    pub kind: CheckKind,
    pub value: f64,
    pub rung: Rung,
}

impl Residual {
    fn eq(name: &'static str, value: f64, rung: Rung) -> Residual {
        Residual {
            name,
            kind: CheckKind::Equality,
            value,
            rung,
        }
    }

    fn bound(name: &'static str, margin: f64, rung: Rung) -> Residual {
        Residual {
            name,
            kind: CheckKind::LowerBound,
            value: (-margin).max(0.0),
            rung,
        }
    }
}

fn rel(diff: f64, magnitude: f64) -> f64 {
    diff.abs() / (1.0 + magnitude.abs())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn require<'a, T>(x: &'a Option<T>, what: &'static str) -> Result<&'a T> {
    x.as_ref().ok_or(Error::MissingDerivatives(what))
}

/// Tri-symmetry of `h`, Codazzi symmetry of `∇h`, symmetry of `∇H`, the two
/// expressions for `T`, `H = tr h / n` and the norm identity for `ĥ`.
pub fn check_structural(state: &GeometryState) -> Result<Vec<Residual>> {
    let grad_h = require(&state.grad_h, "Codazzi check needs first derivatives of h")?;
    let t = require(&state.t, "T needs first derivatives of h")?;
    let d = &state.diagnostics;
    let h_scale = max_abs(state.h.as_slice());
    let g_scale = max_abs(grad_h.as_slice());
    let n = state.n() as f64;
    let norm_scale = state.h.norm2() + 3.0 * n * n / (n + 2.0) * state.mean_curvature.norm2();
    Ok(vec![
        Residual::eq("tri_symmetry", rel(d.tri_symmetry, h_scale), Rung::JetExact),
        Residual::eq("mean_curvature_trace", rel(d.trace_consistency, h_scale), Rung::JetExact),
        Residual::eq("codazzi", rel(grad_h.max_full_asymmetry(), g_scale), Rung::JetExact),
        Residual::eq(
            "mean_curvature_gradient_symmetry",
            rel(d.mean_curvature_symmetry.unwrap_or(0.0), g_scale),
            Rung::JetExact,
        ),
        Residual::eq(
            "t_two_expressions",
            rel(d.t_consistency.unwrap_or(0.0), g_scale),
            Rung::JetExact,
        ),
        Residual::eq("t_trace_free", rel(t.trace(), g_scale), Rung::JetExact),
        Residual::eq(
            "norm_identity",
            rel(norm_identity_residual(&state.h, &state.hhat, &state.mean_curvature), norm_scale),
            Rung::Algebraic,
        ),
    ])
}

/// Christoffel curvature and normal-connection curvature against the
/// right-hand side of the Gauss equation.
pub fn check_gauss_ricci(state: &GeometryState) -> Result<Vec<Residual>> {
    let intrinsic = require(&state.intrinsic_curvature, "intrinsic curvature needs third-order jets")?;
    let normal = require(&state.normal_curvature, "normal curvature needs third-order jets")?;
    let scale = max_abs(state.curvature.as_slice());
    Ok(vec![
        Residual::eq(
            "gauss_two_methods",
            rel(state.curvature.max_abs_diff(intrinsic), scale),
            Rung::JetExact,
        ),
        Residual::eq(
            "ricci_normal_curvature",
            rel(state.curvature.max_abs_diff(normal), scale),
            Rung::JetExact,
        ),
    ])
}

/// Commutator of second covariant derivatives of `h` against the curvature
/// terms, with both curvatures taken from the Gauss right-hand side.
pub fn check_ricci_identity(state: &GeometryState) -> Result<Residual> {
    let g2 = require(&state.grad2_h, "the Ricci identity needs second derivatives of h")?;
    let n = state.n();
    let (h, r) = (&state.h, &state.curvature);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    for p in 0..n {
                        let lhs = g2.get(&[m, i, j, l, p]) - g2.get(&[m, i, j, p, l]);
                        let mut rhs = 0.0;
                        for k in 0..n {
                            rhs += h.get(m, k, j) * r.get(k, i, l, p)
                                + h.get(m, i, k) * r.get(k, j, l, p)
                                + h.get(k, i, j) * r.get(l, p, k, m);
                        }
                        worst = worst.max((lhs - rhs).abs());
                        scale = scale.max(lhs.abs()).max(rhs.abs());
                    }
                }
            }
        }
    }
    Ok(Residual::eq("ricci_identity", rel(worst, scale), Rung::JetExact))
}

/// Both sides of the formula for `Σ ĥ^m_{ij} ĥ^m_{ij,kk}` in terms of
/// `⟨ĥ, ∇T⟩` and curvature contractions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoughLaplacianSides {
    pub lhs: f64,
    pub hhat_grad_t: f64,
    pub curvature_part: f64,
    pub rhs: f64,
}

pub fn rough_laplacian_contraction(state: &GeometryState) -> Result<RoughLaplacianSides> {
    let g2 = require(&state.grad2_hhat, "needs second derivatives of h")?;
    let grad_t = require(&state.grad_t, "needs second derivatives of h")?;
    let n = state.n();
    let (hh, r) = (&state.hhat, &state.curvature);
    let mut lhs = 0.0;
    let mut curvature_part = 0.0;
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let a = hh.get(m, i, j);
                for k in 0..n {
                    lhs += a * g2.get(&[m, i, j, k, k]);
                    for l in 0..n {
                        curvature_part += a
                            * (hh.get(m, l, k) * r.get(l, i, j, k)
                                + hh.get(m, i, l) * r.get(l, k, j, k)
                                + hh.get(l, i, k) * r.get(j, k, l, m));
                    }
                }
            }
        }
    }
    let hhat_grad_t = hhat_dot_grad_t(hh, grad_t);
    let rhs = (n as f64 + 2.0) * hhat_grad_t + curvature_part;
    Ok(RoughLaplacianSides {
        lhs,
        hhat_grad_t,
        curvature_part,
        rhs,
    })
}

pub fn check_rough_laplacian(state: &GeometryState) -> Result<Residual> {
    let s = rough_laplacian_contraction(state)?;
    Ok(Residual::eq(
        "rough_laplacian_contraction",
        rel(s.lhs - s.rhs, s.lhs.abs().max(s.rhs.abs())),
        Rung::JetExact,
    ))
}

/// `Σ ĥ^m_{ij} T_{ij,m}`.
fn hhat_dot_grad_t(hhat: &CubicSymTensor, grad_t: &DenseTensor) -> f64 {
    let n = hhat.n();
    let mut s = 0.0;
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                s += hhat.get(m, i, j) * grad_t.get(&[i, j, m]);
            }
        }
    }
    s
}

/// The terms of `½Δ|ĥ|² = (n+2)⟨ĥ,∇T⟩ + |∇ĥ|² + curvature terms`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimonsTerms {
    pub n: usize,
    /// `½Δ|ĥ|²` by finite differences.
    pub lhs: f64,
    pub hhat_grad_t: f64,
    /// The same contraction with `∇T` read from fourth-order jets.
    pub hhat_grad_t_jet: Option<f64>,
    pub grad_hhat_norm2: f64,
    pub algebra: SimonsAlgebra,
    pub curvature_terms: f64,
    pub rhs: f64,
    pub relative_residual: f64,
}

impl SimonsTerms {
    /// Relative residual when the commutator term is read as `+Σ N(C)`.
    pub fn alternative_residual(&self) -> f64 {
        let rhs = self.rhs - self.algebra.commutator_trace + self.algebra.commutator_norm;
        rel(self.lhs - rhs, self.lhs)
    }

    /// `½Δ|ĥ|²` minus the lower bound with `-(n+3)/2 |ĥ|⁴`.
    pub fn inequality_margin(&self) -> f64 {
        let bound = (self.n as f64 + 2.0) * self.hhat_grad_t
            + self.grad_hhat_norm2
            + self.algebra.lower_bound(self.n);
        self.lhs - bound
    }

    /// Curvature terms minus their lower bound, at the same `(ĥ, H)`.
    pub fn algebraic_margin(&self) -> f64 {
        self.curvature_terms - self.algebra.lower_bound(self.n)
    }
}

/// Evaluates both sides of the Laplacian formula for `|ĥ|²` at `p`.
///
/// The left side is a finite-difference Laplacian of `|ĥ|²` in the chart of
/// `p`, and `∇T` comes from finite differences of the frame components of `T`.
pub fn check_simons_identity(imm: &Immersion, p: &ChartPoint) -> Result<SimonsTerms> {
    let p = imm.source().canonicalize(p)?;
    let opts = GeometryOptions {
        gauge: None,
        keep_chart: true,
    };
    let depth = if imm.is_black_box() {
        Depth::WithDerivatives
    } else {
        Depth::WithSecondDerivatives
    };
    let state = geometry_state_with(imm, &p, depth, &opts)?;
    let n = state.n();
    let lhs = 0.5
        * scalar_laplacian(imm, &p, |q| {
            Ok(geometry_state_with(imm, q, Depth::Pointwise, &opts)?.hhat_norm2())
        })?;
    let grad_t = grad_t_fd(imm, &p, None)?;
    let hhat_grad_t = hhat_dot_grad_t(&state.hhat, &grad_t);
    let hhat_grad_t_jet = state.grad_t.as_ref().map(|g| hhat_dot_grad_t(&state.hhat, g));
    let grad_hhat_norm2 = require(&state.grad_hhat, "needs first derivatives")?.norm2();
    let algebra = SimonsAlgebra::new(&state.hhat, &state.mean_curvature, state.c_amb);
    let curvature_terms = algebra.curvature_terms(n);
    let rhs = (n as f64 + 2.0) * hhat_grad_t + grad_hhat_norm2 + curvature_terms;
    Ok(SimonsTerms {
        n,
        lhs,
        hhat_grad_t,
        hhat_grad_t_jet,
        grad_hhat_norm2,
        algebra,
        curvature_terms,
        rhs,
        relative_residual: rel(lhs - rhs, lhs),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimonsInequality {
    pub margin: f64,
    pub algebraic_margin: f64,
    /// Each step of the algebraic chain as `(name, left, right)`.
    pub steps: Vec<(&'static str, f64, f64)>,
}

pub fn check_simons_inequality(imm: &Immersion, p: &ChartPoint) -> Result<SimonsInequality> {
    let terms = check_simons_identity(imm, p)?;
    let state = geometry_state_with(imm, &imm.source().canonicalize(p)?, Depth::Pointwise, &GeometryOptions::default())?;
    let steps = simons_bound_steps(&state.hhat, &state.mean_curvature, state.c_amb)?;
    Ok(SimonsInequality {
        margin: terms.inequality_margin(),
        algebraic_margin: terms.algebraic_margin(),
        steps,
    })
}

/// Scalars that must not depend on the frame gauge or the chart.
pub fn invariant_scalars(state: &GeometryState) -> Vec<(&'static str, f64)> {
    let mut out = vec![
        ("h_norm2", state.h.norm2()),
        ("hhat_norm2", state.hhat.norm2()),
        ("mean_curvature_norm2", state.mean_curvature.norm2()),
        ("scalar_curvature", state.scalar_curvature()),
    ];
    if let Some(g) = &state.grad_h {
        out.push(("grad_h_norm2", g.norm2()));
    }
    if let Some(g) = &state.grad_hhat {
        out.push(("grad_hhat_norm2", g.norm2()));
    }
    if let Some(t) = &state.t {
        out.push(("t_norm2", t.norm2()));
    }
    out
}

fn scalar_deviation(a: &GeometryState, b: &GeometryState) -> f64 {
    invariant_scalars(a)
        .iter()
        .zip(invariant_scalars(b))
        .fold(0.0f64, |acc, ((_, x), (_, y))| acc.max(rel(x - y, x.abs().max(y.abs()))))
}

/// Re-evaluates at `p` under the orthogonal gauge `q` and, where `p` lies in
/// the overlap of two sphere charts, in the other chart.
pub fn check_invariance(imm: &Immersion, p: &ChartPoint, q: &[f64], depth: Depth) -> Result<Vec<Residual>> {
    let p = imm.source().canonicalize(p)?;
    let fixed = GeometryOptions {
        gauge: None,
        keep_chart: true,
    };
    let base = geometry_state_with(imm, &p, depth, &fixed)?;
    let gauged = geometry_state_with(
        imm,
        &p,
        depth,
        &GeometryOptions {
            gauge: Some(q.to_vec()),
            keep_chart: true,
        },
    )?;
    let rung = if imm.is_black_box() {
        Rung::JetExact.looser()
    } else {
        Rung::JetExact
    };
    let mut out = vec![Residual::eq("gauge_invariance", scalar_deviation(&base, &gauged), rung)];
    if let SourceModel::Sphere(_) = imm.source() {
        if p.norm() > 1.0 / SPHERE_DOMAIN_RADIUS {
            let other = imm.source().transition(&p, 1 - p.chart)?;
            let moved = geometry_state_with(imm, &other, depth, &fixed)?;
            // finite-difference jets carry different truncation errors in each chart
            let rung = if imm.is_black_box() { Rung::TwiceFd } else { rung };
            out.push(Residual::eq("chart_invariance", scalar_deviation(&base, &moved), rung));
        }
    }
    Ok(out)
}

/// Options for [`run_identity_suite`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub samples: usize,
    pub seed: u64,
    /// Multiplies every tolerance.
    pub tol_scale: f64,
    /// Number of leading sample points at which the finite-difference
    /// Laplacian checks run.
    pub simons_points: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            samples: 20,
            seed: 0,
            tol_scale: 1.0,
            simons_points: 5,
        }
    }
}

/// Worst residual of one named check over all evaluated points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub rung: Rung,
    pub max_residual: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub immersion: String,
    pub params: serde_json::Value,
    pub ambient: &'static str,
    pub seed: u64,
    pub tol_scale: f64,
    pub points: Vec<ChartPoint>,
    pub checks: Vec<CheckResult>,
    pub commutator_convention: ConventionNote,
    pub passed: bool,
}

/// Which reading of the squared-commutator term balances the Laplacian
/// formula at the sampled points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConventionNote {
    /// Always `"trace_of_square"`: `Σ tr(C²)` with `C = A_i A_j - A_j A_i`.
    pub used: &'static str,
    /// Worst relative residual with the convention used.
    pub residual_used: f64,
    /// Worst relative residual with `+Σ N(C)` instead.
    pub residual_alternative: f64,
}

/// Every check, in report order.
pub const CHECK_NAMES: [&str; 17] = [
    "tri_symmetry",
    "mean_curvature_trace",
    "codazzi",
    "mean_curvature_gradient_symmetry",
    "t_two_expressions",
    "t_trace_free",
    "norm_identity",
    "gauss_two_methods",
    "ricci_normal_curvature",
    "ricci_identity",
    "rough_laplacian_contraction",
    "maslov_closedness",
    "horizontality",
    "gauge_invariance",
    "chart_invariance",
    "simons_identity",
    "simons_inequality",
];

fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn residuals_at(imm: &Immersion, p: &ChartPoint, index: usize, opts: &SuiteOptions) -> Result<Vec<Residual>> {
    let black_box = imm.is_black_box();
    let depth = if black_box {
        Depth::WithDerivatives
    } else {
        Depth::WithSecondDerivatives
    };
    let state = geometry_state_with(imm, p, depth, &GeometryOptions::default())?;
    let mut out = check_structural(&state)?;
    out.extend(check_gauss_ricci(&state)?);
    if !black_box {
        out.push(check_ricci_identity(&state)?);
        out.push(check_rough_laplacian(&state)?);
    }
    let closed = state.diagnostics.maslov_closedness.unwrap_or(0.0);
    out.push(Residual::eq(
        "maslov_closedness",
        rel(closed, state.mean_curvature.norm2().sqrt()),
        Rung::JetExact,
    ));
    if let Some(hz) = state.diagnostics.horizontality {
        out.push(Residual::eq("horizontality", hz, Rung::JetExact));
    }
    if black_box {
        for r in &mut out {
            r.rung = r.rung.looser();
        }
    }
    let mut rng = point_rng(opts.seed, index);
    let q = random_orthogonal(imm.dim(), &mut rng);
    out.extend(check_invariance(imm, p, &q, Depth::WithDerivatives)?);
    if index < opts.simons_points && !black_box {
        let s = check_simons_identity(imm, p)?;
        out.push(Residual::eq("simons_identity", s.relative_residual, Rung::TwiceFd));
        out.push(Residual::bound("simons_inequality", s.inequality_margin(), Rung::TwiceFd));
        out.push(Residual::eq("simons_alternative_convention", s.alternative_residual(), Rung::TwiceFd));
    }
    Ok(out)
}

/// Runs every pointwise check at `opts.samples` seeded random points.
pub fn run_identity_suite(imm: &Immersion, opts: &SuiteOptions) -> Result<IdentityReport> {
    if !(opts.tol_scale > 0.0) {
        return Err(Error::InvalidParameter("tolerance scale must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let points = imm.sample_points(opts.samples, &mut rng);
    let per_point: Vec<Vec<Residual>> = points
        .par_iter()
        .enumerate()
        .map(|(k, p)| residuals_at(imm, p, k, opts))
        .collect::<Result<_>>()?;
    let checks = CHECK_NAMES
        .iter()
        .map(|&name| {
            let hits: Vec<&Residual> = per_point.iter().flatten().filter(|r| r.name == name).collect();
            let kind = hits.first().map_or(CheckKind::Equality, |r| r.kind);
            let rung = hits.iter().map(|r| r.rung).max().unwrap_or(Rung::JetExact);
            let max_residual = hits.iter().fold(0.0f64, |a, r| a.max(r.value));
            let tolerance = rung.tolerance() * opts.tol_scale;
            CheckResult {
                name: name.to_string(),
                kind,
                rung,
                max_residual,
                tolerance,
                samples: hits.len(),
                passed: max_residual <= tolerance,
            }
        })
        .collect::<Vec<_>>();
    let passed = checks.iter().all(|c| c.passed);
    let worst = |name: &str| {
        per_point
            .iter()
            .flatten()
            .filter(|r| r.name == name)
            .fold(0.0f64, |a, r| a.max(r.value))
    };
    let commutator_convention = ConventionNote {
        used: "trace_of_square",
        residual_used: worst("simons_identity"),
        residual_alternative: worst("simons_alternative_convention"),
    };
    Ok(IdentityReport {
        immersion: imm.name().to_string(),
        params: imm.describe(),
        ambient: imm.ambient().tag(),
        seed: opts.seed,
        tol_scale: opts.tol_scale,
        points,
        checks,
        commutator_convention,
        passed,
    })
}

/// Random `(ĥ, H)` pair number `trial` of the stream `seed`.
pub fn random_pair(n: usize, seed: u64, trial: usize) -> (CubicSymTensor, VectorField1) {
    let mut rng = point_rng(seed, trial);
    let hhat = random_tracefree(n, &mut rng);
    let h = random_vector(n, &mut rng);
    (hhat, h)
}

/// Largest residual of the norm identity `|ĥ|² = |h|² - 3n²/(n+2)|H|²`
/// over random `h`.
pub fn norm_identity_random(n: usize, trials: usize, seed: u64) -> Result<f64> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = point_rng(seed, t);
            let h = crate::tensor::random_cubic(n, &mut rng);
            let hv = h.trace().scaled(1.0 / n as f64);
            let hhat = crate::tensor::tracefree_part(&h, &hv)?;
            Ok(rel(norm_identity_residual(&h, &hhat, &hv), h.norm2()))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Worst residual per auxiliary contraction identity over random pairs.
pub fn contraction_identities_random(n: usize, trials: usize, seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let per: Vec<Vec<(&'static str, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (hhat, h) = random_pair(n, seed, t);
            let list = contraction_identity_suite(&hhat, &h)?;
            Ok(list
                .iter()
                .map(|c| (c.name, rel(c.residual(), c.lhs.abs().max(c.rhs.abs()))))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut worst: Vec<(&'static str, f64)> = per[0].iter().map(|(k, _)| (*k, 0.0)).collect();
    for row in &per {
        for (w, (_, v)) in worst.iter_mut().zip(row) {
            w.1 = w.1.max(*v);
        }
    }
    Ok(worst)
}

/// Brute-force curvature sums against their closed forms, worst relative residual.
pub fn curvature_sums_random(n: usize, trials: usize, seed: u64, c: f64) -> Result<f64> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let (hhat, h) = random_pair(n, seed, t);
            let full = hhat.add(&crate::tensor::c_tensor(&h));
            let r = crate::tensor::gauss_curvature(&full, c);
            let brute = curvature_sums(&hhat, &r);
            let closed = curvature_sums_closed_form(&hhat, &h, c);
            let alg = SimonsAlgebra::new(&hhat, &h, c);
            let total = alg.curvature_terms(n);
            let d1 = rel(brute[0] - closed[0], brute[0]);
            let d2 = rel(brute[1] - closed[1], brute[1]);
            let d3 = rel(brute[0] + brute[1] + brute[2] - total, total);
            Ok(d1.max(d2).max(d3))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Smallest `curvature terms - lower bound` over random pairs, together with
/// the smallest margin of each step of the chain, relative to `1 + |ĥ|⁴`.
pub fn simons_bound_random(n: usize, trials: usize, seed: u64, c: f64) -> Result<f64> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let (hhat, h) = random_pair(n, seed, t);
            let alg = SimonsAlgebra::new(&hhat, &h, c);
            let scale = 1.0 + alg.hhat_norm2 * (alg.hhat_norm2 + alg.h_norm2 + c.abs());
            let mut margin = (alg.curvature_terms(n) - alg.lower_bound(n)) / scale;
            for (_, left, right) in simons_bound_steps(&hhat, &h, c)? {
                margin = margin.min((left - right) / scale);
            }
            Ok(margin)
        })
        .try_reduce(|| f64::INFINITY, |a, b| Ok(a.min(b)))
}

/// Largest `LHS - (3/2)S²` of the matrix inequality over random tuples of
/// symmetric matrices with `2 <= n, m <= max_dim`.
pub fn li_li_random(trials: usize, seed: u64, max_dim: usize) -> Result<f64> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = point_rng(seed, t);
            let n = 2 + t % (max_dim - 1);
            let m = 2 + (t / (max_dim - 1)) % (max_dim - 1);
            let bs: Vec<Vec<f64>> = (0..m).map(|_| random_symmetric(n, &mut rng)).collect();
            let (lhs, rhs) = li_li_check(&bs, n)?;
            Ok(lhs - rhs)
        })
        .try_reduce(|| f64::NEG_INFINITY, |a, b| Ok(a.max(b)))
}

/// `h` and `∇h` of a state, rotated into a gauged frame; for tests of
/// equivariance.
pub fn rotate_grad(g: &Rank4, q: &[f64]) -> Rank4 {
    let n = g.n();
    let mut out = Rank4::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                for l in 0..n {
                                    s += q[a * n + i] * q[b * n + j] * q[c * n + k] * q[d * n + l] * g.get(i, j, k, l);
                                }
                            }
                        }
                    }
                    out.set(a, b, c, d, s);
                }
            }
        }
    }
    out
}

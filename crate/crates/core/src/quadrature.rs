//! Integration over the compact source manifolds and the energy functionals
//! built from `h`, `ĥ` and `H`.
//!
//! Rules carry weights in chart-coordinate measure, so `Σ w_k f(p_k) √det g(p_k)`
//! integrates `f` against the induced volume. Sums use pairwise reduction over
//! node-ordered values, which keeps results identical across thread counts.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::chart::{ChartPoint, SourceModel};
use crate::error::{Error, Result};
use crate::geometry::{geometry_state, metric_at, Depth, GeometryState, FD_STEP};
use crate::immersion::Immersion;

/// Default number of Gauss–Legendre nodes per spherical angle.
pub const DEFAULT_SPHERE_DEGREE: usize = 30;
/// Default number of trapezoid nodes per torus angle.
pub const DEFAULT_TORUS_DEGREE: usize = 32;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    let Some(degree) = NonZeroUsize::new(count) else {
        return (Vec::new(), Vec::new());
    };
    let mut pairs = GaussLegendre::new(degree).as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `Vol(S^n) = 2π^{(n+1)/2} / Γ((n+1)/2)`.
pub fn sphere_volume(n: usize) -> f64 {
    let h = (n as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "dim", rename_all = "snake_case")]
pub enum RuleDomain {
    /// Tensor Gauss–Legendre in hyperspherical angles.
    Sphere(usize),
    /// Tensor trapezoid rule in the periodic angles.
    Torus(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureRule {
    pub domain: RuleDomain,
    pub nodes: Vec<ChartPoint>,
    /// Chart-coordinate measure.
    pub weights: Vec<f64>,
    /// Nodes per axis.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The rule matching the source of `imm`, with `degree` nodes per axis
    /// (`None` for the default).
    pub fn for_immersion(imm: &Immersion, degree: Option<usize>) -> Result<QuadratureRule> {
        match imm.source() {
            SourceModel::Sphere(n) => sphere_rule(n, degree.unwrap_or(DEFAULT_SPHERE_DEGREE)),
            SourceModel::Torus(n) => Ok(torus_rule(n, degree.unwrap_or(DEFAULT_TORUS_DEGREE))),
            SourceModel::Euclidean(_) => Err(Error::InvalidParameter(
                "quadrature needs a compact source".into(),
            )),
        }
    }

    /// `Σ w_k f(p_k)` for a density `f` given in chart coordinates.
    pub fn apply<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&ChartPoint) -> Result<f64> + Sync,
    {
        let vals: Vec<f64> = self
            .nodes
            .par_iter()
            .zip(&self.weights)
            .map(|(p, w)| Ok(w * f(p)?))
            .collect::<Result<_>>()?;
        Ok(pairwise_sum(&vals))
    }
}

/// Recursive pairwise summation in index order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Trapezoid rule on `[-π, π)^n` with `degree` nodes per axis.
pub fn torus_rule(n: usize, degree: usize) -> QuadratureRule {
    let h = 2.0 * PI / degree as f64;
    let total = degree.pow(n as u32);
    let mut nodes = Vec::with_capacity(total);
    for k in 0..total {
        let mut rest = k;
        let coords = (0..n)
            .map(|_| {
                let i = rest % degree;
                rest /= degree;
                -PI + (i as f64 + 0.5) * h
            })
            .collect();
        nodes.push(ChartPoint::new(0, coords));
    }
    QuadratureRule {
        domain: RuleDomain::Torus(n),
        nodes,
        weights: vec![h.powi(n as i32); total],
        degree,
    }
}

/// Gauss–Legendre in the angles `θ_1..θ_{n-1} ∈ [0, π]`, `φ ∈ [0, 2π]` of
/// `x = (cos θ_1, sin θ_1 cos θ_2, …, sin θ_1⋯sin θ_{n-1} sin φ)`. Nodes are
/// mapped into the chart that keeps `|u| <= 1`; weights are the angular
/// weights times `dΩ/du` of the round metric.
pub fn sphere_rule(n: usize, degree: usize) -> Result<QuadratureRule> {
    if n == 0 || degree == 0 {
        return Err(Error::InvalidParameter("sphere rule needs n >= 1 and degree >= 1".into()));
    }
    let (gx, gw) = gauss_legendre(degree);
    let source = SourceModel::Sphere(n);
    let total = degree.pow(n as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for k in 0..total {
        let mut rest = k;
        let mut angles = Vec::with_capacity(n);
        let mut w = 1.0;
        for axis in 0..n {
            let i = rest % degree;
            rest /= degree;
            let span = if axis + 1 == n { 2.0 * PI } else { PI };
            angles.push(0.5 * span * (gx[i] + 1.0));
            w *= 0.5 * span * gw[i];
        }
        let mut x = Vec::with_capacity(n + 1);
        let mut sin_prod = 1.0;
        let mut density = 1.0;
        for (axis, a) in angles.iter().enumerate() {
            if axis + 1 < n {
                x.push(sin_prod * a.cos());
                density *= a.sin().powi((n - 1 - axis) as i32);
                sin_prod *= a.sin();
            } else {
                x.push(sin_prod * a.cos());
                x.push(sin_prod * a.sin());
            }
        }
        let p = source.chart_point_of(&x)?;
        let r2 = p.norm().powi(2);
        let round = (2.0 / (1.0 + r2)).powi(n as i32);
        nodes.push(p);
        weights.push(w * density / round);
    }
    Ok(QuadratureRule {
        domain: RuleDomain::Sphere(n),
        nodes,
        weights,
        degree,
    })
}

fn check_rule(imm: &Immersion, rule: &QuadratureRule) -> Result<()> {
    let ok = match (imm.source(), rule.domain) {
        (SourceModel::Sphere(a), RuleDomain::Sphere(b)) | (SourceModel::Torus(a), RuleDomain::Torus(b)) => a == b,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter("rule domain does not match the immersion source".into()))
    }
}

/// `∫ f dμ ≈ Σ w_k f(p_k) √det g(p_k)`.
pub fn integrate<F>(imm: &Immersion, f: F, rule: &QuadratureRule) -> Result<f64>
where
    F: Fn(&ChartPoint) -> Result<f64> + Sync,
{
    check_rule(imm, rule)?;
    rule.apply(|p| Ok(f(p)? * metric_at(imm, p)?.sqrt_det_g))
}

/// `∫ F(state) dμ` for several functionals `F` of the pointwise state at once.
pub fn integrate_state<F>(imm: &Immersion, rule: &QuadratureRule, f: F) -> Result<Vec<f64>>
where
    F: Fn(&GeometryState) -> Vec<f64> + Sync,
{
    check_rule(imm, rule)?;
    let rows: Vec<Vec<f64>> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(p, w)| {
            let st = geometry_state(imm, p, Depth::Pointwise)?;
            let dens = w * st.metric.sqrt_det_g;
            Ok(f(&st).into_iter().map(|v| v * dens).collect())
        })
        .collect::<Result<_>>()?;
    let width = rows.first().map_or(0, Vec::len);
    Ok((0..width)
        .map(|k| pairwise_sum(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub immersion: String,
    pub params: serde_json::Value,
    pub n: usize,
    /// `∫ |ĥ|^n dμ`
    pub hhat_n: f64,
    /// `∫ |ĥ|² dμ`
    pub hhat_2: f64,
    /// `∫ |h|² dμ`
    pub h_2: f64,
    /// `∫ |H|² dμ`
    pub mean_2: f64,
    pub volume: f64,
    /// `lim R^{-2} ∫_{M_R} |h|² dμ`; zero for compact sources.
    pub growth_limit: f64,
    pub growth_note: &'static str,
    pub degree: usize,
    pub nodes: usize,
}

impl EnergyReport {
    /// `(name, value)` for every functional, in a fixed order.
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("hhat_n", self.hhat_n),
            ("hhat_2", self.hhat_2),
            ("h_2", self.h_2),
            ("mean_2", self.mean_2),
            ("volume", self.volume),
            ("growth_limit", self.growth_limit),
        ]
    }

    /// One CSV row per functional: `name,value,degree,nodes`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,value,degree,nodes\n");
        for (k, v) in self.entries() {
            s.push_str(&format!("{k},{v:e},{},{}\n", self.degree, self.nodes));
        }
        s
    }
}

pub fn energy_report(imm: &Immersion, rule: &QuadratureRule) -> Result<EnergyReport> {
    let n = imm.dim();
    let nf = n as i32;
    let sums = integrate_state(imm, rule, |st| {
        let hh = st.hhat.norm2();
        vec![
            hh.sqrt().powi(nf),
            hh,
            st.h.norm2(),
            st.mean_curvature.norm2(),
            1.0,
        ]
    })?;
    Ok(EnergyReport {
        immersion: imm.name().to_string(),
        params: imm.describe(),
        n,
        hhat_n: sums[0],
        hhat_2: sums[1],
        h_2: sums[2],
        mean_2: sums[3],
        volume: sums[4],
        growth_limit: 0.0,
        growth_note: "compact source: M_R = M for large R",
        degree: rule.degree,
        nodes: rule.len(),
    })
}

/// `R^{-2} ∫_{M_R} |h|² dμ` over the part of a Euclidean-source immersion
/// whose ambient image lies in the ball of radius `radius`, by tensor
/// Gauss–Legendre on the chart cube `[-radius, radius]^n`.
pub fn growth_quotient(imm: &Immersion, radius: f64, degree: usize) -> Result<f64> {
    let n = match imm.source() {
        SourceModel::Euclidean(n) => n,
        _ => return Err(Error::InvalidParameter("growth quotient needs a Euclidean source".into())),
    };
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("radius must be positive".into()));
    }
    let (gx, gw) = gauss_legendre(degree);
    let total = degree.pow(n as u32);
    let vals: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|k| {
            let mut rest = k;
            let mut w = 1.0;
            let coords: Vec<f64> = (0..n)
                .map(|_| {
                    let i = rest % degree;
                    rest /= degree;
                    w *= radius * gw[i];
                    radius * gx[i]
                })
                .collect();
            let p = ChartPoint::new(0, coords);
            let x = imm.eval(&p)?;
            if x.iter().map(|v| v * v).sum::<f64>() >= radius * radius {
                return Ok(0.0);
            }
            let st = geometry_state(imm, &p, Depth::Pointwise)?;
            Ok(w * st.h.norm2() * st.metric.sqrt_det_g)
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&vals) / (radius * radius))
}

/// Both sides of the Michael–Simon inequality without its constant, and the
/// squared-gradient variant for `n >= 3`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MichaelSimon {
    /// `(∫ v^{n/(n-1)})^{(n-1)/n}`
    pub lhs: f64,
    /// `∫ |∇v| + v|H|`
    pub rhs_without_c: f64,
    /// `(∫ v^{2n/(n-2)})^{(n-2)/n}` and `∫ |∇v|² + v²|H|²`.
    pub squared: Option<(f64, f64)>,
}

impl MichaelSimon {
    pub fn ratio(&self) -> f64 {
        self.rhs_without_c / self.lhs
    }
}

/// Evaluates the Michael–Simon functionals for a test function `v`, with
/// `∇v` from central differences (one Richardson step) in chart coordinates.
pub fn michael_simon_ratio<F>(imm: &Immersion, v: F, rule: &QuadratureRule) -> Result<MichaelSimon>
where
    F: Fn(&ChartPoint) -> Result<f64> + Sync,
{
    check_rule(imm, rule)?;
    let n = imm.dim();
    let nf = n as f64;
    let h = FD_STEP;
    let rows: Vec<[f64; 4]> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(p, w)| {
            let val = v(p)?;
            if val < 0.0 {
                return Err(Error::NegativeTestFunction { value: val });
            }
            let st = geometry_state(imm, p, Depth::Pointwise)?;
            let mut d = vec![0.0; n];
            for (a, da) in d.iter_mut().enumerate() {
                let c = |s: f64| -> Result<f64> { Ok((v(&p.shifted(a, s))? - v(&p.shifted(a, -s))?) / (2.0 * s)) };
                *da = (4.0 * c(h / 2.0)? - c(h)?) / 3.0;
            }
            let mut grad2 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    grad2 += st.metric.g_inv[a][b] * d[a] * d[b];
                }
            }
            let hn = st.mean_curvature.norm2().sqrt();
            let dens = w * st.metric.sqrt_det_g;
            let sob = if n >= 3 {
                val.powf(2.0 * nf / (nf - 2.0))
            } else {
                0.0
            };
            Ok([
                dens * val.powf(nf / (nf - 1.0)),
                dens * (grad2.sqrt() + val * hn),
                dens * sob,
                dens * (grad2 + val * val * hn * hn),
            ])
        })
        .collect::<Result<_>>()?;
    let col = |k: usize| pairwise_sum(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
    let squared = (n >= 3).then(|| (col(2).powf((nf - 2.0) / nf), col(3)));
    Ok(MichaelSimon {
        lhs: col(0).powf((nf - 1.0) / nf),
        rhs_without_c: col(1),
        squared,
    })
}

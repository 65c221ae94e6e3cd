//! Pointwise geometry of a Lagrangian immersion.
//!
//! Everything is computed in jet arithmetic from one [`ImmersionJet`]: the
//! Gram–Schmidt frame `e_i` of the coordinate frame `∂_a φ`, the normal frame
//! `J e_i`, the second fundamental form `h^m_{ij} = ⟨∂_a ∂_b φ, J e_m⟩ E_i^a E_j^b`
//! (where `e_i = E_i^a ∂_a φ`), the connection forms
//! `θ_{il}(e_k) = ⟨D_{e_k} e_i, e_l⟩`, and the covariant derivatives of `h`.
//! Because the frame is algebraic in the jet, derivatives of frame quantities
//! are exact up to rounding.
//!
//! `CP^n` immersions are first lifted horizontally to the unit sphere of
//! `C^{n+1}`; the flat computation then yields the Fubini–Study quantities
//! with `c = 1`.
//!
//! [`ImmersionJet`]: crate::immersion::ImmersionJet

use serde::{Deserialize, Serialize};

use crate::chart::{ChartPoint, SPHERE_DOMAIN_RADIUS};
use crate::cpn::horizontal_lift;
use crate::error::{Error, Result};
use crate::immersion::{apply_j_jets, eval_jet, Ambient, Immersion};
use crate::jet::{dot, Jet};
use crate::tensor::{
    c_tensor, gauss_curvature, CubicSymTensor, DenseTensor, Rank4, SymTraceFree2, VectorField1,
};

/// Largest accepted `|⟨e_i, J e_j⟩|`.
pub const LAGRANGIAN_TOL: f64 = 1e-6;
/// Largest accepted deviation of `h` from full symmetry (relative).
pub const TRI_SYMMETRY_TOL: f64 = 1e-9;
/// Same check for finite-difference jets of black-box immersions.
pub const TRI_SYMMETRY_TOL_FD: f64 = 1e-6;
/// Central-difference step, in chart units.
pub const FD_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Depth {
    /// Metric, frame, `h`, `H`, `ĥ`.
    Pointwise,
    /// Adds `∇h`, `∇ĥ`, `∇H`, `T` and the two derivative-based curvature routes.
    WithDerivatives,
    /// Adds `∇²h`, `∇²ĥ` and `∇T`.
    WithSecondDerivatives,
}

impl Depth {
    pub fn jet_order(self) -> usize {
        match self {
            Depth::Pointwise => 2,
            Depth::WithDerivatives => 3,
            Depth::WithSecondDerivatives => 4,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GeometryOptions {
    /// Constant orthogonal matrix `Q` (row-major) applied to the
    /// Gram–Schmidt frame: `e'_i = Σ_j Q_ij e_j`.
    pub gauge: Option<Vec<f64>>,
    /// Evaluate in the chart of the given point even when `|u| > 2`.
    pub keep_chart: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricData {
    pub g: Vec<Vec<f64>>,
    pub g_inv: Vec<Vec<f64>>,
    /// `Γ^k_{ij}` at `[k][i][j]`.
    pub christoffel: DenseTensor,
    pub sqrt_det_g: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdaptedFrame {
    /// Orthonormal tangent vectors in ambient coordinates.
    pub e: Vec<Vec<f64>>,
    /// `J e_i`.
    pub je: Vec<Vec<f64>>,
    /// `Q` relating `e` to the Gram–Schmidt frame.
    pub frame_gauge: Vec<Vec<f64>>,
    /// `E_i^a` with `e_i = Σ_a E_i^a ∂_a φ`.
    pub coefficients: Vec<Vec<f64>>,
}

/// Self-consistency residuals measured while building a state.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub lagrangian: f64,
    pub orthonormality: f64,
    pub tri_symmetry: f64,
    pub trace_consistency: f64,
    pub codazzi: Option<f64>,
    pub mean_curvature_symmetry: Option<f64>,
    pub t_consistency: Option<f64>,
    pub maslov_closedness: Option<f64>,
    /// `max |⟨∂_a w, i w⟩|` over all jet coefficients of the horizontal lift.
    pub horizontality: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StateTolerances {
    pub lagrangian: f64,
    pub tri_symmetry: f64,
}

/// All pointwise quantities at one chart point, in the adapted frame.
#[derive(Clone, Debug, Serialize)]
pub struct GeometryState {
    pub immersion: String,
    pub params: serde_json::Value,
    pub ambient: &'static str,
    pub c_amb: f64,
    pub point: ChartPoint,
    pub depth: Depth,
    pub metric: MetricData,
    pub frame: AdaptedFrame,
    pub h: CubicSymTensor,
    pub mean_curvature: VectorField1,
    pub hhat: CubicSymTensor,
    /// `θ_{il}(e_k)` at `[i][l][k]`; also the normal connection.
    pub connection: DenseTensor,
    /// `R_{ijkl}` from the Gauss equation.
    pub curvature: Rank4,
    /// `h^m_{ij,k}` at `[m][i][j][k]`.
    pub grad_h: Option<Rank4>,
    pub grad_hhat: Option<Rank4>,
    /// `H^m_{,k}` at `[m][k]`.
    pub grad_mean_curvature: Option<Vec<Vec<f64>>>,
    pub t: Option<SymTraceFree2>,
    /// `R_{ijkl}` from the Christoffel symbols of the induced metric.
    pub intrinsic_curvature: Option<Rank4>,
    /// `R_{ijk*l*}` from the curvature of the normal connection forms.
    pub normal_curvature: Option<Rank4>,
    /// `h^m_{ij,kp}` at `[m][i][j][k][p]`.
    pub grad2_h: Option<DenseTensor>,
    pub grad2_hhat: Option<DenseTensor>,
    /// `T_{ij,p}` at `[i][j][p]`.
    pub grad_t: Option<DenseTensor>,
    pub diagnostics: Diagnostics,
    pub tolerances: StateTolerances,
}

impl GeometryState {
    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn hhat_norm2(&self) -> f64 {
        self.hhat.norm2()
    }

    pub fn grad_hhat_norm2(&self) -> Option<f64> {
        self.grad_hhat.as_ref().map(Rank4::norm2)
    }

    /// `Σ_{ij} R_{ijij}` from the Gauss equation.
    pub fn scalar_curvature(&self) -> f64 {
        let n = self.n();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.curvature.get(i, j, i, j);
            }
        }
        s
    }
}

/// The geometry of `imm` at `p`, evaluated in the default gauge.
pub fn geometry_state(imm: &Immersion, p: &ChartPoint, depth: Depth) -> Result<GeometryState> {
    geometry_state_with(imm, p, depth, &GeometryOptions::default())
}

pub fn geometry_state_with(
    imm: &Immersion,
    p: &ChartPoint,
    depth: Depth,
    opts: &GeometryOptions,
) -> Result<GeometryState> {
    let point = if opts.keep_chart {
        imm.source().check(p)?;
        p.clone()
    } else {
        imm.source().canonicalize(p)?
    };
    let n = imm.dim();
    if let Some(q) = &opts.gauge {
        check_orthogonal(q, n)?;
    }
    let jet = eval_jet(imm, &point, depth.jet_order())?;
    let (phi, horizontality) = match imm.ambient() {
        Ambient::ComplexEuclidean(_) => (jet.components().to_vec(), None),
        Ambient::HomogeneousSphere(_) => {
            let lift = horizontal_lift(&jet)?;
            (lift.components, Some(lift.horizontality))
        }
    };
    let tri_tol = if imm.is_black_box() {
        TRI_SYMMETRY_TOL_FD
    } else {
        TRI_SYMMETRY_TOL
    };
    let c_amb = imm.ambient().c();
    let mut state = build_state(n, &phi, c_amb, opts.gauge.as_deref(), depth, tri_tol)?;
    state.immersion = imm.name().to_string();
    state.params = imm.describe();
    state.ambient = imm.ambient().tag();
    state.point = point;
    state.diagnostics.horizontality = horizontality;
    Ok(state)
}

fn check_orthogonal(q: &[f64], n: usize) -> Result<()> {
    if q.len() != n * n {
        return Err(Error::InvalidParameter("gauge matrix has wrong size".into()));
    }
    for i in 0..n {
        for j in 0..n {
            let d: f64 = (0..n).map(|k| q[i * n + k] * q[j * n + k]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            if (d - target).abs() > 1e-12 {
                return Err(Error::InvalidParameter("gauge matrix is not orthogonal".into()));
            }
        }
    }
    Ok(())
}

fn values(v: &[Jet]) -> Vec<f64> {
    v.iter().map(Jet::value).collect()
}

fn dot_values(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_a coef[a] ∂_a f`.
fn frame_derivative(coef: &[Jet], f: &Jet) -> Jet {
    let mut acc = &coef[0] * &f.partial(0);
    for (a, c) in coef.iter().enumerate().skip(1) {
        acc.add_product(c, &f.partial(a));
    }
    acc
}

/// Inverse of a symmetric positive-definite matrix of jets.
fn invert_jets(m: &[Vec<Jet>]) -> Result<Vec<Vec<Jet>>> {
    let n = m.len();
    let mut a: Vec<Vec<Jet>> = m.to_vec();
    let order = a[0][0].order();
    let space = a[0][0].space();
    let mut inv: Vec<Vec<Jet>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Jet::constant(space, order, if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();
    for col in 0..n {
        if !(a[col][col].value().abs() > 1e-300) {
            return Err(Error::DegenerateMetric(a[col][col].value()));
        }
        let piv = a[col][col].recip();
        for j in 0..n {
            a[col][j] = &a[col][j] * &piv;
            inv[col][j] = &inv[col][j] * &piv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col].clone();
            for j in 0..n {
                let t = &f * &a[col][j];
                a[r][j] -= &t;
                let t = &f * &inv[col][j];
                inv[r][j] -= &t;
            }
        }
    }
    Ok(inv)
}

fn determinant(mut a: Vec<f64>, n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .expect("nonempty");
        if a[piv * n + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
        }
    }
    det
}

/// Metric jets `g_ab` and Christoffel jets `Γ^d_{bc}` (one order lower).
struct MetricJets {
    g: Vec<Vec<Jet>>,
    gamma: Vec<Vec<Vec<Jet>>>,
}

fn metric_jets(dphi: &[Vec<Jet>]) -> Result<MetricJets> {
    let n = dphi.len();
    let mut g: Vec<Vec<Jet>> = vec![Vec::with_capacity(n); n];
    for a in 0..n {
        for b in 0..n {
            let v = if b < a { g[b][a].clone() } else { dot(&dphi[a], &dphi[b]) };
            g[a].push(v);
        }
    }
    let ginv = invert_jets(&g)?;
    let dg: Vec<Vec<Vec<Jet>>> = (0..n)
        .map(|c| (0..n).map(|a| (0..n).map(|b| g[a][b].partial(c)).collect()).collect())
        .collect();
    let mut gamma = vec![vec![Vec::with_capacity(n); n]; n];
    for d in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut acc: Option<Jet> = None;
                for e in 0..n {
                    let bracket = &(&dg[b][e][c] + &dg[c][e][b]) - &dg[e][b][c];
                    let term = &ginv[d][e] * &bracket;
                    acc = Some(match acc {
                        None => term,
                        Some(mut s) => {
                            s += &term;
                            s
                        }
                    });
                }
                gamma[d][b].push(acc.expect("n >= 1").scale(0.5));
            }
        }
    }
    Ok(MetricJets { g, gamma })
}

fn metric_data(mj: &MetricJets) -> Result<MetricData> {
    let n = mj.g.len();
    let g: Vec<Vec<f64>> = mj.g.iter().map(|r| values(r)).collect();
    let flat: Vec<f64> = g.iter().flatten().copied().collect();
    let det = determinant(flat.clone(), n);
    if !(det > 0.0) {
        return Err(Error::DegenerateMetric(det));
    }
    let g_inv = invert_values(&flat, n);
    let mut christoffel = DenseTensor::zeros(n, 3);
    for d in 0..n {
        for b in 0..n {
            for c in 0..n {
                christoffel.set(&[d, b, c], mj.gamma[d][b][c].value());
            }
        }
    }
    Ok(MetricData {
        g,
        g_inv,
        christoffel,
        sqrt_det_g: det.sqrt(),
    })
}

fn invert_values(a: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))
            .expect("nonempty");
        for k in 0..n {
            m.swap(piv * n + k, col * n + k);
            inv.swap(piv * n + k, col * n + k);
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                for k in 0..n {
                    m[r * n + k] -= f * m[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
    }
    (0..n).map(|i| inv[i * n..(i + 1) * n].to_vec()).collect()
}

/// Metric of `imm` at `p` in the chart of `p`; needs no Lagrangian condition.
pub fn metric_at(imm: &Immersion, p: &ChartPoint) -> Result<MetricData> {
    let jet = eval_jet(imm, p, 2)?;
    let phi = match imm.ambient() {
        Ambient::ComplexEuclidean(_) => jet.components().to_vec(),
        Ambient::HomogeneousSphere(_) => horizontal_lift(&jet)?.components,
    };
    let n = imm.dim();
    let dphi: Vec<Vec<Jet>> = (0..n)
        .map(|a| phi.iter().map(|c| c.partial(a)).collect())
        .collect();
    metric_data(&metric_jets(&dphi)?)
}

fn build_state(
    n: usize,
    phi: &[Jet],
    c_amb: f64,
    gauge: Option<&[f64]>,
    depth: Depth,
    tri_tol: f64,
) -> Result<GeometryState> {
    let k = phi[0].order();
    let space = phi[0].space();
    let nf = n as f64;
    let dphi: Vec<Vec<Jet>> = (0..n)
        .map(|a| phi.iter().map(|c| c.partial(a)).collect())
        .collect();

    let mj = metric_jets(&dphi)?;
    let metric = metric_data(&mj)?;
    let g_scale = (0..n).fold(0.0f64, |s, a| s.max(metric.g[a][a]));

    // Gram–Schmidt in fixed index order, tracking e_i = Σ_a E_i^a ∂_a φ
    let mut e: Vec<Vec<Jet>> = Vec::with_capacity(n);
    let mut coef: Vec<Vec<Jet>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = dphi[i].clone();
        let mut c: Vec<Jet> = (0..n)
            .map(|a| Jet::constant(space, k - 1, if a == i { 1.0 } else { 0.0 }))
            .collect();
        for j in 0..i {
            let d = dot(&v, &e[j]);
            for (vc, ec) in v.iter_mut().zip(&e[j]) {
                *vc -= &(&d * ec);
            }
            for (ca, cj) in c.iter_mut().zip(&coef[j]) {
                *ca -= &(&d * cj);
            }
        }
        let norm2 = dot(&v, &v);
        if !(norm2.value() > 1e-10 * g_scale) {
            return Err(Error::DegenerateMetric(norm2.value()));
        }
        let inv = norm2.sqrt().recip();
        e.push(v.iter().map(|x| x * &inv).collect());
        coef.push(c.iter().map(|x| x * &inv).collect());
    }
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    if let Some(g) = gauge {
        q.copy_from_slice(g);
        let mix = |v: &[Vec<Jet>]| -> Vec<Vec<Jet>> {
            (0..n)
                .map(|i| {
                    (0..v[0].len())
                        .map(|c| {
                            let mut acc = v[0][c].scale(q[i * n]);
                            for j in 1..n {
                                acc += &v[j][c].scale(q[i * n + j]);
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        };
        e = mix(&e);
        coef = mix(&coef);
    }
    let je: Vec<Vec<Jet>> = e.iter().map(|v| apply_j_jets(v)).collect();

    let ev: Vec<Vec<f64>> = e.iter().map(|v| values(v)).collect();
    let jev: Vec<Vec<f64>> = je.iter().map(|v| values(v)).collect();
    let mut lagrangian: f64 = 0.0;
    let mut orthonormality: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            lagrangian = lagrangian.max(dot_values(&ev[i], &jev[j]).abs());
            let target = if i == j { 1.0 } else { 0.0 };
            orthonormality = orthonormality.max((dot_values(&ev[i], &ev[j]) - target).abs());
        }
    }
    if lagrangian > LAGRANGIAN_TOL {
        return Err(Error::NotLagrangian(lagrangian));
    }

    // second fundamental form, as jets of order k - 2
    let d2: Vec<Vec<Vec<Jet>>> = (0..n)
        .map(|a| (0..n).map(|b| dphi[a].iter().map(|c| c.partial(b)).collect()).collect())
        .collect();
    let idx3 = |m: usize, i: usize, j: usize| (m * n + i) * n + j;
    let mut p_ab: Vec<Option<Jet>> = vec![None; n * n * n];
    for m in 0..n {
        for a in 0..n {
            for b in a..n {
                let v = dot(&d2[a][b], &je[m]);
                p_ab[idx3(m, b, a)] = Some(v.clone());
                p_ab[idx3(m, a, b)] = Some(v);
            }
        }
    }
    let p_ab: Vec<Jet> = p_ab.into_iter().map(|x| x.expect("filled")).collect();
    let mut x_ib: Vec<Jet> = Vec::with_capacity(n * n * n);
    for m in 0..n {
        for i in 0..n {
            for b in 0..n {
                let mut acc = &coef[i][0] * &p_ab[idx3(m, 0, b)];
                for a in 1..n {
                    acc.add_product(&coef[i][a], &p_ab[idx3(m, a, b)]);
                }
                x_ib.push(acc);
            }
        }
    }
    let mut h_raw: Vec<Option<Jet>> = vec![None; n * n * n];
    for m in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = &coef[j][0] * &x_ib[idx3(m, i, 0)];
                for b in 1..n {
                    acc.add_product(&coef[j][b], &x_ib[idx3(m, i, b)]);
                }
                h_raw[idx3(m, j, i)] = Some(acc.clone());
                h_raw[idx3(m, i, j)] = Some(acc);
            }
        }
    }
    let h_raw: Vec<Jet> = h_raw.into_iter().map(|x| x.expect("filled")).collect();
    let h_raw_vals: Vec<f64> = values(&h_raw);
    let h_check = CubicSymTensor::new(n, h_raw_vals.clone(), f64::INFINITY)?;
    let tri_symmetry = h_check.max_asymmetry();
    let h_scale = h_raw_vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if tri_symmetry > tri_tol * h_scale {
        return Err(Error::NotTriSymmetric(tri_symmetry));
    }
    let mut hs: Vec<Jet> = Vec::with_capacity(n * n * n);
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let s = &(&h_raw[idx3(m, i, j)] + &h_raw[idx3(i, j, m)]) + &h_raw[idx3(j, m, i)];
                hs.push(s.scale(1.0 / 3.0));
            }
        }
    }
    let h = CubicSymTensor::symmetrized(n, &values(&hs));
    let h_mean_jets: Vec<Jet> = (0..n)
        .map(|m| {
            let mut acc = hs[idx3(m, 0, 0)].clone();
            for i in 1..n {
                acc += &hs[idx3(m, i, i)];
            }
            acc.scale(1.0 / nf)
        })
        .collect();
    let mean_curvature = VectorField1::new(values(&h_mean_jets));
    let trace_consistency = {
        let tr = h.trace();
        (0..n).fold(0.0f64, |a, m| a.max((tr[m] / nf - mean_curvature[m]).abs()))
    };
    let hhat = h.sub(&c_tensor(&mean_curvature));
    let curvature = gauss_curvature(&h, c_amb);

    // connection forms: W[a][i][l] = ⟨∂_a e_i, e_l⟩, θ_il(k) = Σ_a E_k^a W[a][i][l]
    let de: Vec<Vec<Vec<Jet>>> = (0..n)
        .map(|a| e.iter().map(|v| v.iter().map(|c| c.partial(a)).collect()).collect())
        .collect();
    let w: Vec<Vec<Vec<Jet>>> = (0..n)
        .map(|a| (0..n).map(|i| (0..n).map(|l| dot(&de[a][i], &e[l])).collect()).collect())
        .collect();
    let theta: Vec<Jet> = {
        let mut out = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for l in 0..n {
                for kk in 0..n {
                    let mut acc = &coef[kk][0] * &w[0][i][l];
                    for a in 1..n {
                        acc.add_product(&coef[kk][a], &w[a][i][l]);
                    }
                    out.push(acc);
                }
            }
        }
        out
    };
    let th = |i: usize, l: usize, kk: usize| &theta[idx3(i, l, kk)];
    let mut connection = DenseTensor::zeros(n, 3);
    for i in 0..n {
        for l in 0..n {
            for kk in 0..n {
                connection.set(&[i, l, kk], th(i, l, kk).value());
            }
        }
    }

    let mut state = GeometryState {
        immersion: String::new(),
        params: serde_json::Value::Null,
        ambient: "",
        c_amb,
        point: ChartPoint::new(0, Vec::new()),
        depth,
        metric,
        frame: AdaptedFrame {
            e: ev,
            je: jev,
            frame_gauge: (0..n).map(|i| q[i * n..(i + 1) * n].to_vec()).collect(),
            coefficients: coef.iter().map(|r| values(r)).collect(),
        },
        h,
        mean_curvature,
        hhat,
        connection,
        curvature,
        grad_h: None,
        grad_hhat: None,
        grad_mean_curvature: None,
        t: None,
        intrinsic_curvature: None,
        normal_curvature: None,
        grad2_h: None,
        grad2_hhat: None,
        grad_t: None,
        diagnostics: Diagnostics {
            lagrangian,
            orthonormality,
            tri_symmetry,
            trace_consistency,
            codazzi: None,
            mean_curvature_symmetry: None,
            t_consistency: None,
            maslov_closedness: None,
            horizontality: None,
        },
        tolerances: StateTolerances {
            lagrangian: LAGRANGIAN_TOL,
            tri_symmetry: tri_tol,
        },
    };
    if k < 3 {
        return Ok(state);
    }

    // ∇h as jets of order k - 3
    let low = k - 3;
    let hs_low: Vec<Jet> = hs.iter().map(|j| j.truncate(low)).collect();
    let theta_low: Vec<Jet> = theta.iter().map(|j| j.truncate(low)).collect();
    let thl = |i: usize, l: usize, kk: usize| &theta_low[idx3(i, l, kk)];
    let idx4 = |m: usize, i: usize, j: usize, kk: usize| ((m * n + i) * n + j) * n + kk;
    let mut grad: Vec<Jet> = Vec::with_capacity(n * n * n * n);
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let mut acc = frame_derivative(&coef[kk], &hs[idx3(m, i, j)]);
                    for l in 0..n {
                        let mut corr = thl(i, l, kk) * &hs_low[idx3(m, l, j)];
                        corr.add_product(thl(j, l, kk), &hs_low[idx3(m, i, l)]);
                        corr.add_product(thl(m, l, kk), &hs_low[idx3(l, i, j)]);
                        acc -= &corr;
                    }
                    grad.push(acc);
                }
            }
        }
    }
    let grad_h = Rank4::from_vec(n, values(&grad));
    let kf = nf / (nf + 2.0);
    let mut dh = vec![vec![0.0; n]; n];
    for m in 0..n {
        for kk in 0..n {
            dh[m][kk] = (0..n).map(|i| grad_h.get(m, i, i, kk)).sum::<f64>() / nf;
        }
    }
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut grad_hhat = Rank4::zeros(n);
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let c = kf * (dh[m][kk] * delta(i, j) + dh[i][kk] * delta(j, m) + dh[j][kk] * delta(i, m));
                    grad_hhat.set(m, i, j, kk, grad_h.get(m, i, j, kk) - c);
                }
            }
        }
    }
    let div: f64 = (0..n).map(|m| dh[m][m]).sum();
    let mut t = vec![0.0; n * n];
    let mut t_consistency: f64 = 0.0;
    let mut mean_sym: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            t[i * n + j] = (nf * dh[i][j] - div * delta(i, j)) / (nf + 2.0);
            let alt: f64 = (0..n).map(|m| grad_hhat.get(m, i, j, m)).sum::<f64>() / nf;
            t_consistency = t_consistency.max((t[i * n + j] - alt).abs());
            mean_sym = mean_sym.max((dh[i][j] - dh[j][i]).abs());
        }
    }
    state.diagnostics.codazzi = Some(grad_h.max_full_asymmetry());
    state.diagnostics.mean_curvature_symmetry = Some(mean_sym);
    state.diagnostics.t_consistency = Some(t_consistency);
    state.t = Some(SymTraceFree2::unchecked(n, t));

    // Christoffel route to R_{ijkl} = g(R(e_i, e_j) e_l, e_k)
    let gam = |d: usize, b: usize, c: usize| mj.gamma[d][b][c].value();
    let dgam = |a: usize, d: usize, b: usize, c: usize| mj.gamma[d][b][c].derivative(&[a]);
    let mut r_low = vec![0.0; n * n * n * n];
    {
        let mut r_up = vec![0.0; n * n * n * n]; // R^d_{cab} at [d][c][a][b]
        for d in 0..n {
            for c in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let mut v = dgam(a, d, b, c) - dgam(b, d, a, c);
                        for f in 0..n {
                            v += gam(d, a, f) * gam(f, b, c) - gam(d, b, f) * gam(f, a, c);
                        }
                        r_up[idx4(d, c, a, b)] = v;
                    }
                }
            }
        }
        for f in 0..n {
            for c in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        r_low[idx4(f, c, a, b)] =
                            (0..n).map(|d| state.metric.g[f][d] * r_up[idx4(d, c, a, b)]).sum();
                    }
                }
            }
        }
    }
    let cv = &state.frame.coefficients;
    // R_{ijkl} = Σ E_i^a E_j^b E_l^c E_k^f R_{fcab}
    let intrinsic = frame_convert(n, cv, |i, j, kk, l| {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for f in 0..n {
                        s += cv[i][a] * cv[j][b] * cv[l][c] * cv[kk][f] * r_low[idx4(f, c, a, b)];
                    }
                }
            }
        }
        s
    });
    state.intrinsic_curvature = Some(intrinsic);

    // normal connection ω_{ml}(∂_a) = ⟨∂_a J e_m, J e_l⟩ and its curvature
    let wn: Vec<Vec<Vec<Jet>>> = (0..n)
        .map(|a| {
            let dje: Vec<Vec<Jet>> = je.iter().map(|v| v.iter().map(|c| c.partial(a)).collect()).collect();
            (0..n).map(|m| (0..n).map(|l| dot(&dje[m], &je[l])).collect()).collect()
        })
        .collect();
    let w = wn;
    let mut rn = vec![0.0; n * n * n * n]; // [a][b][m][k]
    for a in 0..n {
        for b in 0..n {
            for m in 0..n {
                for kk in 0..n {
                    let mut v = w[b][m][kk].derivative(&[a]) - w[a][m][kk].derivative(&[b]);
                    for l in 0..n {
                        v += w[b][m][l].value() * w[a][l][kk].value()
                            - w[a][m][l].value() * w[b][l][kk].value();
                    }
                    rn[idx4(a, b, m, kk)] = v;
                }
            }
        }
    }
    let normal = frame_convert(n, cv, |i, j, kk, l| {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += cv[i][a] * cv[j][b] * rn[idx4(a, b, l, kk)];
            }
        }
        s
    });
    state.normal_curvature = Some(normal);

    // Maslov form pulled back: α_a = ⟨J H, ∂_a φ⟩ = -Σ_m H^m ⟨e_m, ∂_a φ⟩
    let alpha: Vec<Jet> = (0..n)
        .map(|a| {
            let mut acc = -(&h_mean_jets[0] * &dot(&e[0], &dphi[a]));
            for m in 1..n {
                acc -= &(&h_mean_jets[m] * &dot(&e[m], &dphi[a]));
            }
            acc
        })
        .collect();
    let mut closed: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            closed = closed.max((alpha[b].derivative(&[a]) - alpha[a].derivative(&[b])).abs());
        }
    }
    state.diagnostics.maslov_closedness = Some(closed);
    state.grad_h = Some(grad_h);
    state.grad_hhat = Some(grad_hhat);
    state.grad_mean_curvature = Some(dh);

    if k < 4 {
        return Ok(state);
    }

    // ∇²h at the point: h^m_{ij,kp} = D_p h^m_{ij,k} - connection terms on i, j, k, m
    let th0 = |i: usize, l: usize, kk: usize| theta[idx3(i, l, kk)].value();
    let gv = |m: usize, i: usize, j: usize, kk: usize| grad[idx4(m, i, j, kk)].value();
    let mut g2 = DenseTensor::zeros(n, 5);
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let gj = &grad[idx4(m, i, j, kk)];
                    for p in 0..n {
                        let mut v: f64 = (0..n).map(|a| cv[p][a] * gj.derivative(&[a])).sum();
                        for l in 0..n {
                            v -= th0(i, l, p) * gv(m, l, j, kk)
                                + th0(j, l, p) * gv(m, i, l, kk)
                                + th0(kk, l, p) * gv(m, i, j, l)
                                + th0(m, l, p) * gv(l, i, j, kk);
                        }
                        g2.set(&[m, i, j, kk, p], v);
                    }
                }
            }
        }
    }
    let mut ddh = DenseTensor::zeros(n, 3); // H^m_{,kp}
    for m in 0..n {
        for kk in 0..n {
            for p in 0..n {
                let v: f64 = (0..n).map(|i| g2.get(&[m, i, i, kk, p])).sum::<f64>() / nf;
                ddh.set(&[m, kk, p], v);
            }
        }
    }
    let mut g2hat = g2.clone();
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    for p in 0..n {
                        let c = kf
                            * (ddh.get(&[m, kk, p]) * delta(i, j)
                                + ddh.get(&[i, kk, p]) * delta(j, m)
                                + ddh.get(&[j, kk, p]) * delta(i, m));
                        g2hat.set(&[m, i, j, kk, p], g2.get(&[m, i, j, kk, p]) - c);
                    }
                }
            }
        }
    }
    let mut grad_t = DenseTensor::zeros(n, 3);
    for i in 0..n {
        for j in 0..n {
            for p in 0..n {
                let div_p: f64 = (0..n).map(|m| ddh.get(&[m, m, p])).sum();
                let v = (nf * ddh.get(&[i, j, p]) - div_p * delta(i, j)) / (nf + 2.0);
                grad_t.set(&[i, j, p], v);
            }
        }
    }
    state.grad2_h = Some(g2);
    state.grad2_hhat = Some(g2hat);
    state.grad_t = Some(grad_t);
    Ok(state)
}

fn frame_convert<F>(n: usize, _coef: &[Vec<f64>], f: F) -> Rank4
where
    F: Fn(usize, usize, usize, usize) -> f64,
{
    let mut r = Rank4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for kk in 0..n {
                for l in 0..n {
                    r.set(i, j, kk, l, f(i, j, kk, l));
                }
            }
        }
    }
    r
}

/// `T_{ij} = (n H^i_{,j} - Σ_m H^m_{,m} δ_ij) / (n+2)`.
pub fn maslov_tensor(state: &GeometryState) -> Result<SymTraceFree2> {
    state
        .t
        .clone()
        .ok_or(Error::MissingDerivatives("the tensor T needs first derivatives of h"))
}

/// `R_{ijkl}` via the Christoffel symbols of the induced metric.
pub fn intrinsic_curvature(imm: &Immersion, p: &ChartPoint) -> Result<Rank4> {
    let st = geometry_state(imm, p, Depth::WithDerivatives)?;
    Ok(st.intrinsic_curvature.expect("computed at this depth"))
}

/// `α_i = ⟨J H, e_i⟩`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaslovForm {
    pub alpha: Vec<f64>,
}

impl MaslovForm {
    pub fn norm2(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum()
    }
}

pub fn maslov_one_form(state: &GeometryState) -> MaslovForm {
    // J H = Σ_m H^m J(J e_m) = -Σ_m H^m e_m
    MaslovForm {
        alpha: state.mean_curvature.as_slice().iter().map(|h| -h).collect(),
    }
}

/// `max_{a,b} |∂_a α_b - ∂_b α_a|` for the pulled-back Maslov form.
pub fn closedness_residual(imm: &Immersion, p: &ChartPoint) -> Result<f64> {
    let st = geometry_state(imm, p, Depth::WithDerivatives)?;
    Ok(st.diagnostics.maslov_closedness.expect("computed at this depth"))
}

fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

fn check_neighbourhood(imm: &Immersion, p: &ChartPoint, reach: f64) -> Result<()> {
    imm.source().check(p)?;
    if let crate::chart::SourceModel::Sphere(_) = imm.source() {
        if p.norm() + reach >= SPHERE_DOMAIN_RADIUS {
            return Err(Error::OutOfDomain {
                chart: p.chart,
                coords: p.coords.clone(),
            });
        }
    }
    Ok(())
}

/// `Δf = g^{ab}(∂_a∂_b f - Γ^c_{ab} ∂_c f)` at `p`, with chart derivatives of
/// `f` from central differences (step [`FD_STEP`], one Richardson step).
/// `f` is always called with points in the chart of `p`.
pub fn scalar_laplacian<F>(imm: &Immersion, p: &ChartPoint, f: F) -> Result<f64>
where
    F: Fn(&ChartPoint) -> Result<f64>,
{
    let n = imm.dim();
    let h = FD_STEP;
    check_neighbourhood(imm, p, 2.0 * h)?;
    let metric = metric_at(imm, p)?;
    let f0 = f(p)?;
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![vec![0.0; n]; n];
    for a in 0..n {
        let at = |s: f64| f(&p.shifted(a, s));
        let (c1, c2) = {
            let (plus, minus) = (at(h)?, at(-h)?);
            ((plus - minus) / (2.0 * h), (plus - 2.0 * f0 + minus) / (h * h))
        };
        let hf = h / 2.0;
        let (f1, f2) = {
            let (plus, minus) = (at(hf)?, at(-hf)?);
            ((plus - minus) / (2.0 * hf), (plus - 2.0 * f0 + minus) / (hf * hf))
        };
        d1[a] = richardson(c1, f1);
        d2[a][a] = richardson(c2, f2);
    }
    for a in 0..n {
        for b in a + 1..n {
            let mixed = |s: f64| -> Result<f64> {
                let q = |sa: f64, sb: f64| f(&p.shifted(a, sa).shifted(b, sb));
                Ok((q(s, s)? - q(s, -s)? - q(-s, s)? + q(-s, -s)?) / (4.0 * s * s))
            };
            let v = richardson(mixed(h)?, mixed(h / 2.0)?);
            d2[a][b] = v;
            d2[b][a] = v;
        }
    }
    let mut lap = 0.0;
    for a in 0..n {
        for b in 0..n {
            let mut hess = d2[a][b];
            for c in 0..n {
                hess -= metric.christoffel.get(&[c, a, b]) * d1[c];
            }
            lap += metric.g_inv[a][b] * hess;
        }
    }
    Ok(lap)
}

/// `T_{ij,m}` from central differences of the frame components of `T` at
/// neighbouring points of the same chart, plus connection terms.
pub fn grad_t_fd(imm: &Immersion, p: &ChartPoint, gauge: Option<&[f64]>) -> Result<DenseTensor> {
    let n = imm.dim();
    let h = FD_STEP;
    check_neighbourhood(imm, p, h)?;
    let opts = GeometryOptions {
        gauge: gauge.map(<[f64]>::to_vec),
        keep_chart: true,
    };
    let t_at = |q: &ChartPoint| -> Result<SymTraceFree2> {
        let st = geometry_state_with(imm, q, Depth::WithDerivatives, &opts)?;
        maslov_tensor(&st)
    };
    let base = geometry_state_with(imm, p, Depth::WithDerivatives, &opts)?;
    let t0 = maslov_tensor(&base)?;
    let mut dt = vec![vec![0.0; n * n]; n]; // [a][i*n+j]
    for (a, row) in dt.iter_mut().enumerate() {
        let diff = |s: f64| -> Result<Vec<f64>> {
            let plus = t_at(&p.shifted(a, s))?;
            let minus = t_at(&p.shifted(a, -s))?;
            Ok(plus
                .as_slice()
                .iter()
                .zip(minus.as_slice())
                .map(|(x, y)| (x - y) / (2.0 * s))
                .collect())
        };
        let coarse = diff(h)?;
        let fine = diff(h / 2.0)?;
        for (k, v) in row.iter_mut().enumerate() {
            *v = richardson(coarse[k], fine[k]);
        }
    }
    let cv = &base.frame.coefficients;
    let th = &base.connection;
    let mut out = DenseTensor::zeros(n, 3);
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                let mut v: f64 = (0..n).map(|a| cv[m][a] * dt[a][i * n + j]).sum();
                for l in 0..n {
                    v -= th.get(&[i, l, m]) * t0.get(l, j) + th.get(&[j, l, m]) * t0.get(i, l);
                }
                out.set(&[i, j, m], v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::{make_lagrangian_plane, make_product_torus, make_whitney_cn};

    #[test]
    fn plane_is_flat_and_totally_geodesic() {
        let imm = make_lagrangian_plane(3).unwrap();
        let st = geometry_state(&imm, &ChartPoint::new(0, vec![0.3, -1.0, 0.5]), Depth::WithSecondDerivatives)
            .unwrap();
        assert_eq!(st.h.norm2(), 0.0);
        assert_eq!(st.hhat.norm2(), 0.0);
        assert_eq!(st.t.as_ref().unwrap().norm2(), 0.0);
        assert_eq!(st.curvature.norm2(), 0.0);
        assert_eq!(st.intrinsic_curvature.as_ref().unwrap().norm2(), 0.0);
    }

    #[test]
    fn torus_matches_closed_form() {
        let radii = [1.0, 2.0, 0.5];
        let imm = make_product_torus(&radii).unwrap();
        let st = geometry_state(&imm, &ChartPoint::new(0, vec![0.4, 2.0, -1.0]), Depth::WithDerivatives)
            .unwrap();
        let expect_h2: f64 = radii.iter().map(|r| 1.0 / (r * r)).sum();
        assert!((st.h.norm2() - expect_h2).abs() < 1e-12);
        assert!((st.mean_curvature.norm2() - expect_h2 / 9.0).abs() < 1e-12);
        for j in 0..3 {
            assert!((st.h.get(j, j, j) - 1.0 / radii[j]).abs() < 1e-12);
        }
        assert!(st.grad_h.as_ref().unwrap().norm2() < 1e-20);
        assert!(st.t.as_ref().unwrap().norm2() < 1e-20);
        assert!(st.intrinsic_curvature.as_ref().unwrap().norm2() < 1e-20);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { radii[i] * radii[i] } else { 0.0 };
                assert!((st.metric.g[i][j] - target).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn whitney_sphere_has_vanishing_hhat() {
        let imm = make_whitney_cn(1.0, &[[0.0, 0.0]; 3], 3).unwrap();
        let st = geometry_state(&imm, &ChartPoint::new(0, vec![0.3, -0.2, 0.7]), Depth::WithDerivatives)
            .unwrap();
        assert!(st.hhat.norm2().sqrt() < 1e-12);
        assert!(st.t.as_ref().unwrap().norm2().sqrt() < 1e-10);
        assert!(st.h.norm2() > 0.1);
        let gauss = &st.curvature;
        let intrinsic = st.intrinsic_curvature.as_ref().unwrap();
        assert!(gauss.max_abs_diff(intrinsic) < 1e-9);
        assert!(gauss.max_abs_diff(st.normal_curvature.as_ref().unwrap()) < 1e-9);
    }
}

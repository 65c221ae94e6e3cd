//! Parametrized immersions of model manifolds into `C^n` or, through
//! homogeneous coordinates, into `CP^n`.
//!
//! Complex ambient vectors are stored as interleaved reals
//! `(Re z_1, Im z_1, Re z_2, ...)`. The complex structure acts on each pair as
//! `(a, b) ↦ (-b, a)`; see [`apply_j`].
//!
//! Every built-in family is written once, against [`Jet`] arithmetic, so the
//! same code produces point values and derivative jets of any order.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chart::{stereo_to_sphere_jets, ChartPoint, SourceModel};
use crate::error::{Error, Result};
use crate::jet::{Jet, JetSpace};

pub const MAX_JET_ORDER: usize = 4;

/// Target of an immersion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ambient {
    /// `C^n` with the flat metric.
    ComplexEuclidean(usize),
    /// Unit sphere of `C^{n+1}` standing in for `CP^n`; the payload is `n + 1`.
    HomogeneousSphere(usize),
}

impl Ambient {
    pub fn complex_dim(&self) -> usize {
        match *self {
            Ambient::ComplexEuclidean(m) | Ambient::HomogeneousSphere(m) => m,
        }
    }

    pub fn real_dim(&self) -> usize {
        2 * self.complex_dim()
    }

    /// Ambient holomorphic curvature parameter `c` (sectional curvature `4c`).
    pub fn c(&self) -> f64 {
        match self {
            Ambient::ComplexEuclidean(_) => 0.0,
            Ambient::HomogeneousSphere(_) => 1.0,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Ambient::ComplexEuclidean(_) => "Cn",
            Ambient::HomogeneousSphere(_) => "CPn",
        }
    }
}

/// Applies the complex structure to an interleaved real vector.
pub fn apply_j(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for k in 0..v.len() / 2 {
        out[2 * k] = -v[2 * k + 1];
        out[2 * k + 1] = v[2 * k];
    }
    out
}

pub(crate) fn apply_j_jets(v: &[Jet]) -> Vec<Jet> {
    let mut out = Vec::with_capacity(v.len());
    for k in 0..v.len() / 2 {
        out.push(-&v[2 * k + 1]);
        out.push(v[2 * k].clone());
    }
    out
}

/// Plain-text description of a built-in family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImmersionSpec {
    WhitneyCn {
        n: usize,
        r: f64,
        /// Translation `A ∈ C^n` as `[re, im]` pairs; zero when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<[f64; 2]>>,
    },
    ProductTorus {
        radii: Vec<f64>,
    },
    Plane {
        n: usize,
        /// Feeds chart coordinate `k` into `Im z_1`, which breaks the
        /// Lagrangian condition. Only useful as a failure fixture.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        complexify: Option<usize>,
    },
    PerturbedWhitney {
        n: usize,
        r: f64,
        eps: f64,
        #[serde(default = "default_mode")]
        mode: u32,
    },
    WhitneyCpn {
        n: usize,
        theta: f64,
    },
    Rpn {
        n: usize,
    },
}

fn default_mode() -> u32 {
    1
}

impl ImmersionSpec {
    pub fn build(&self) -> Result<Immersion> {
        match self {
            ImmersionSpec::WhitneyCn { n, r, center } => {
                let a = center.clone().unwrap_or_else(|| vec![[0.0, 0.0]; *n]);
                make_whitney_cn(*r, &a, *n)
            }
            ImmersionSpec::ProductTorus { radii } => make_product_torus(radii),
            ImmersionSpec::Plane { n, complexify } => match complexify {
                None => make_lagrangian_plane(*n),
                Some(k) => make_complexified_plane(*n, *k),
            },
            ImmersionSpec::PerturbedWhitney { n, r, eps, mode } => {
                make_perturbed_whitney(*n, *r, *eps, *mode)
            }
            ImmersionSpec::WhitneyCpn { n, theta } => make_whitney_cpn(*theta, *n),
            ImmersionSpec::Rpn { n } => make_rpn(*n),
        }
    }
}

/// User-supplied immersion evaluated point by point; its jets come from
/// finite differences.
#[derive(Clone)]
pub struct BlackBox {
    pub map: Arc<dyn Fn(&ChartPoint) -> Vec<f64> + Send + Sync>,
    /// Finite-difference step in chart units.
    pub step: f64,
}

impl fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBox").field("step", &self.step).finish()
    }
}

#[derive(Clone, Debug)]
enum Family {
    WhitneyCn { r: f64, center: Vec<[f64; 2]> },
    Torus { radii: Vec<f64> },
    Plane { complexify: Option<usize> },
    Perturbed { r: f64, eps: f64, mode: u32 },
    WhitneyCpn { theta: f64 },
    Rpn,
    BlackBox(BlackBox),
}

/// Rigid motions, dilations and projective gauge changes applied after the
/// family formula.
#[derive(Clone, Debug)]
struct Motion {
    scale: f64,
    /// Row-major complex matrix as `[re, im]` pairs.
    unitary: Option<Vec<[f64; 2]>>,
    shift: Option<Vec<[f64; 2]>>,
    phase_twist: f64,
}

impl Default for Motion {
    fn default() -> Self {
        Motion {
            scale: 1.0,
            unitary: None,
            shift: None,
            phase_twist: 0.0,
        }
    }
}

/// A parametrized Lagrangian (or test) immersion.
#[derive(Clone, Debug)]
pub struct Immersion {
    name: String,
    source: SourceModel,
    ambient: Ambient,
    family: Family,
    motion: Motion,
    spec: Option<ImmersionSpec>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn dim_at_least(n: usize, min: usize) -> Result<()> {
    if n < min || n > 8 {
        Err(Error::InvalidParameter(format!(
            "dimension must be in {min}..=8, got {n}"
        )))
    } else {
        Ok(())
    }
}

/// Whitney sphere `φ_{r,A}: S^n → C^n`,
/// `z_j = r x_j (1 + i x_{n+1}) / (1 + x_{n+1}²) + A_j`.
pub fn make_whitney_cn(r: f64, center: &[[f64; 2]], n: usize) -> Result<Immersion> {
    dim_at_least(n, 2)?;
    positive("r", r)?;
    if center.len() != n {
        return Err(Error::InvalidParameter(format!(
            "center has {} entries, expected {n}",
            center.len()
        )));
    }
    let c = center.to_vec();
    Ok(Immersion {
        name: "whitney_cn".into(),
        source: SourceModel::Sphere(n),
        ambient: Ambient::ComplexEuclidean(n),
        family: Family::WhitneyCn {
            r,
            center: c.clone(),
        },
        motion: Motion::default(),
        spec: Some(ImmersionSpec::WhitneyCn {
            n,
            r,
            center: Some(c),
        }),
    })
}

/// `(t_1..t_n) ↦ (r_1 e^{i t_1}, ..., r_n e^{i t_n})`.
pub fn make_product_torus(radii: &[f64]) -> Result<Immersion> {
    dim_at_least(radii.len(), 1)?;
    for &r in radii {
        positive("radius", r)?;
    }
    Ok(Immersion {
        name: "product_torus".into(),
        source: SourceModel::Torus(radii.len()),
        ambient: Ambient::ComplexEuclidean(radii.len()),
        family: Family::Torus {
            radii: radii.to_vec(),
        },
        motion: Motion::default(),
        spec: Some(ImmersionSpec::ProductTorus {
            radii: radii.to_vec(),
        }),
    })
}

/// The real subspace `R^n ⊂ C^n`.
pub fn make_lagrangian_plane(n: usize) -> Result<Immersion> {
    dim_at_least(n, 1)?;
    Ok(Immersion {
        name: "plane".into(),
        source: SourceModel::Euclidean(n),
        ambient: Ambient::ComplexEuclidean(n),
        family: Family::Plane { complexify: None },
        motion: Motion::default(),
        spec: Some(ImmersionSpec::Plane {
            n,
            complexify: None,
        }),
    })
}

/// A plane with `Im z_1 = x_k`; not Lagrangian for `k != 0`.
pub fn make_complexified_plane(n: usize, k: usize) -> Result<Immersion> {
    dim_at_least(n, 2)?;
    if k >= n {
        return Err(Error::InvalidParameter(format!(
            "complexify index {k} out of range for n = {n}"
        )));
    }
    Ok(Immersion {
        name: "plane".into(),
        source: SourceModel::Euclidean(n),
        ambient: Ambient::ComplexEuclidean(n),
        family: Family::Plane {
            complexify: Some(k),
        },
        motion: Motion::default(),
        spec: Some(ImmersionSpec::Plane {
            n,
            complexify: Some(k),
        }),
    })
}

/// Whitney sphere `φ_{r,0}` followed by two Hamiltonian shears of amplitude
/// `eps`: `(a, b) ↦ (a, b + eps ∇F(a))` then `(a, b) ↦ (a + eps ∇G(b), b)`.
/// Both shears are symplectic, so the result is exactly Lagrangian; `eps = 0`
/// is the Whitney sphere itself.
pub fn make_perturbed_whitney(n: usize, r: f64, eps: f64, mode: u32) -> Result<Immersion> {
    dim_at_least(n, 2)?;
    positive("r", r)?;
    if !(eps.abs() < 0.1 * r) {
        return Err(Error::InvalidParameter(format!(
            "|eps| must be below 0.1 r, got eps = {eps}"
        )));
    }
    if mode == 0 {
        return Err(Error::InvalidParameter("mode must be >= 1".into()));
    }
    Ok(Immersion {
        name: "perturbed_whitney".into(),
        source: SourceModel::Sphere(n),
        ambient: Ambient::ComplexEuclidean(n),
        family: Family::Perturbed { r, eps, mode },
        motion: Motion::default(),
        spec: Some(ImmersionSpec::PerturbedWhitney { n, r, eps, mode }),
    })
}

/// Whitney sphere `φ_θ: S^n → CP^n` in homogeneous coordinates, normalised to
/// unit Hermitian norm.
pub fn make_whitney_cpn(theta: f64, n: usize) -> Result<Immersion> {
    dim_at_least(n, 2)?;
    positive("theta", theta)?;
    Ok(Immersion {
        name: "whitney_cpn".into(),
        source: SourceModel::Sphere(n),
        ambient: Ambient::HomogeneousSphere(n + 1),
        family: Family::WhitneyCpn { theta },
        motion: Motion::default(),
        spec: Some(ImmersionSpec::WhitneyCpn { n, theta }),
    })
}

/// Totally geodesic `RP^n ⊂ CP^n`, `x ↦ [x]`.
pub fn make_rpn(n: usize) -> Result<Immersion> {
    dim_at_least(n, 1)?;
    Ok(Immersion {
        name: "rpn".into(),
        source: SourceModel::Sphere(n),
        ambient: Ambient::HomogeneousSphere(n + 1),
        family: Family::Rpn,
        motion: Motion::default(),
        spec: Some(ImmersionSpec::Rpn { n }),
    })
}

/// Wraps a point-evaluation closure. Jets are produced by central finite
/// differences with one Richardson extrapolation.
pub fn make_black_box(
    name: &str,
    source: SourceModel,
    ambient: Ambient,
    map: Arc<dyn Fn(&ChartPoint) -> Vec<f64> + Send + Sync>,
) -> Immersion {
    Immersion {
        name: name.to_string(),
        source,
        ambient,
        family: Family::BlackBox(BlackBox { map, step: 1e-3 }),
        motion: Motion::default(),
        spec: None,
    }
}

impl Immersion {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> SourceModel {
        self.source
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn spec(&self) -> Option<&ImmersionSpec> {
        self.spec.as_ref()
    }

    pub fn is_black_box(&self) -> bool {
        matches!(self.family, Family::BlackBox(_))
    }

    /// JSON description: family parameters plus any applied motion.
    pub fn describe(&self) -> serde_json::Value {
        let mut v = match &self.spec {
            Some(s) => serde_json::to_value(s).expect("spec serializes"),
            None => serde_json::json!({ "family": self.name }),
        };
        let m = &self.motion;
        if let Some(obj) = v.as_object_mut() {
            if m.scale != 1.0 {
                obj.insert("dilation".into(), m.scale.into());
            }
            if m.unitary.is_some() || m.shift.is_some() {
                obj.insert("rigid_motion".into(), true.into());
            }
            if m.phase_twist != 0.0 {
                obj.insert("phase_twist".into(), m.phase_twist.into());
            }
        }
        v
    }

    /// The same immersion followed by `z ↦ λ z` (C^n only).
    pub fn dilated(mut self, lambda: f64) -> Result<Immersion> {
        positive("dilation", lambda)?;
        if let Ambient::HomogeneousSphere(_) = self.ambient {
            return Err(Error::WrongAmbient("dilation needs a C^n target"));
        }
        self.motion.scale *= lambda;
        Ok(self)
    }

    /// The same immersion followed by `z ↦ U z + b`; `U` unitary, given
    /// row-major as `[re, im]` pairs. Translations need a `C^n` target.
    pub fn moved(mut self, unitary: Vec<[f64; 2]>, shift: Option<Vec<[f64; 2]>>) -> Result<Immersion> {
        let m = self.ambient.complex_dim();
        if unitary.len() != m * m {
            return Err(Error::InvalidParameter("unitary has wrong size".into()));
        }
        check_unitary(&unitary, m)?;
        if shift.is_some() {
            if let Ambient::HomogeneousSphere(_) = self.ambient {
                return Err(Error::WrongAmbient("translations need a C^n target"));
            }
        }
        if let Some(b) = &shift {
            if b.len() != m {
                return Err(Error::InvalidParameter("shift has wrong length".into()));
            }
        }
        if self.motion.unitary.is_some() || self.motion.shift.is_some() {
            return Err(Error::InvalidParameter("motion already applied".into()));
        }
        self.motion.unitary = Some(unitary);
        self.motion.shift = shift;
        Ok(self)
    }

    /// Multiplies the homogeneous representative by the unit-modulus factor
    /// `exp(i κ (x_1 + x_2 x_{n+1}))`. Same projective immersion.
    pub fn phase_twisted(mut self, kappa: f64) -> Result<Immersion> {
        if !matches!(self.ambient, Ambient::HomogeneousSphere(_)) {
            return Err(Error::WrongAmbient("phase twist needs a CP^n target"));
        }
        if !matches!(self.source, SourceModel::Sphere(_)) || self.is_black_box() {
            return Err(Error::InvalidParameter(
                "phase twist needs a built-in sphere family".into(),
            ));
        }
        self.motion.phase_twist += kappa;
        Ok(self)
    }

    /// Point in the model manifold: embedded sphere coordinates or chart
    /// coordinates.
    pub fn source_point(&self, p: &ChartPoint) -> Result<Vec<f64>> {
        self.source.embed(p)
    }

    /// Ambient coordinates at `p`.
    pub fn eval(&self, p: &ChartPoint) -> Result<Vec<f64>> {
        Ok(eval_jet(self, p, 0)?.values())
    }

    /// `count` random points, each in its canonical chart.
    pub fn sample_points<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<ChartPoint> {
        (0..count).map(|_| self.random_point(rng)).collect()
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> ChartPoint {
        match self.source {
            SourceModel::Sphere(n) => loop {
                let x: Vec<f64> = (0..=n).map(|_| rng.sample(StandardNormal)).collect();
                let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-3 {
                    return self.source.chart_point_of(&x).expect("sphere point");
                }
            },
            SourceModel::Torus(n) => ChartPoint::new(
                0,
                (0..n)
                    .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                    .collect(),
            ),
            SourceModel::Euclidean(n) => {
                ChartPoint::new(0, (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            }
        }
    }

    /// Evaluates the family formula on chart-coordinate jets.
    fn eval_jets(&self, chart: u8, u: &[Jet]) -> Vec<Jet> {
        let n = self.dim();
        let src: Vec<Jet> = match self.source {
            SourceModel::Sphere(_) => stereo_to_sphere_jets(chart, u),
            _ => u.to_vec(),
        };
        let zero = || Jet::constant(u[0].space(), u[0].order(), 0.0);
        let mut z: Vec<Jet> = match &self.family {
            Family::WhitneyCn { r, center } => {
                let (re, im) = whitney_parts(&src, *r);
                let mut out = Vec::with_capacity(2 * n);
                for j in 0..n {
                    out.push(&re[j] + center[j][0]);
                    out.push(&im[j] + center[j][1]);
                }
                out
            }
            Family::Torus { radii } => {
                let mut out = Vec::with_capacity(2 * n);
                for (t, r) in src.iter().zip(radii) {
                    out.push(t.cos() * *r);
                    out.push(t.sin() * *r);
                }
                out
            }
            Family::Plane { complexify } => {
                let mut out = Vec::with_capacity(2 * n);
                for x in &src {
                    out.push(x.clone());
                    out.push(zero());
                }
                if let Some(k) = complexify {
                    out[1] = src[*k].clone();
                }
                out
            }
            Family::Perturbed { r, eps, mode } => {
                let (mut a, mut b) = whitney_parts(&src, *r);
                let m = *mode as f64;
                let grad_f = shear_f_gradient(&a, m);
                for (bj, gj) in b.iter_mut().zip(&grad_f) {
                    *bj += &gj.scale(*eps);
                }
                let grad_g = shear_g_gradient(&b, m);
                for (aj, gj) in a.iter_mut().zip(&grad_g) {
                    *aj += &gj.scale(*eps);
                }
                a.into_iter().zip(b).flat_map(|(x, y)| [x, y]).collect()
            }
            Family::WhitneyCpn { theta } => whitney_cpn_jets(&src, *theta),
            Family::Rpn => src.iter().flat_map(|x| [x.clone(), zero()]).collect(),
            Family::BlackBox(_) => unreachable!("black boxes are not jet-evaluable"),
        };
        self.apply_motion(&src, &mut z);
        z
    }

    fn apply_motion(&self, src: &[Jet], z: &mut Vec<Jet>) {
        let m = &self.motion;
        let dim = z.len() / 2;
        if m.phase_twist != 0.0 {
            let n = self.dim();
            let f = &src[0] + &(&src[1.min(n - 1)] * &src[n]);
            let arg = f.scale(m.phase_twist);
            let (c, s) = (arg.cos(), arg.sin());
            for k in 0..dim {
                let (re, im) = cmul(&z[2 * k], &z[2 * k + 1], &c, &s);
                z[2 * k] = re;
                z[2 * k + 1] = im;
            }
        }
        if let Some(u) = &m.unitary {
            let old = z.clone();
            for row in 0..dim {
                let mut re = old[0].scale(0.0);
                let mut im = old[0].scale(0.0);
                for col in 0..dim {
                    let [ur, ui] = u[row * dim + col];
                    re += &(&old[2 * col] * ur - &old[2 * col + 1] * ui);
                    im += &(&old[2 * col] * ui + &old[2 * col + 1] * ur);
                }
                z[2 * row] = re;
                z[2 * row + 1] = im;
            }
        }
        if m.scale != 1.0 {
            for c in z.iter_mut() {
                *c = c.scale(m.scale);
            }
        }
        if let Some(b) = &m.shift {
            for k in 0..dim {
                z[2 * k] = &z[2 * k] + b[k][0];
                z[2 * k + 1] = &z[2 * k + 1] + b[k][1];
            }
        }
    }
}

fn check_unitary(u: &[[f64; 2]], m: usize) -> Result<()> {
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            // (U U^*)_{ij}
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..m {
                let [a, b] = u[i * m + k];
                let [c, d] = u[j * m + k];
                re += a * c + b * d;
                im += b * c - a * d;
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((re - target).abs()).max(im.abs());
        }
    }
    if worst > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "matrix is not unitary (deviation {worst:e})"
        )));
    }
    Ok(())
}

fn cmul(a: &Jet, b: &Jet, c: &Jet, d: &Jet) -> (Jet, Jet) {
    (a * c - b * d, a * d + b * c)
}

/// Real and imaginary parts of the Whitney formula with `A = 0`.
fn whitney_parts(x: &[Jet], r: f64) -> (Vec<Jet>, Vec<Jet>) {
    let n = x.len() - 1;
    let last = &x[n];
    let d = (last.square() + 1.0).recip().scale(r);
    let re: Vec<Jet> = x[..n].iter().map(|xj| xj * &d).collect();
    let im: Vec<Jet> = re.iter().map(|rj| rj * last).collect();
    (re, im)
}

/// `∇F` for `F(a) = sin(m a_0 + 0.3) cos(a_{n-1} - 0.2) / m + Σ_j a_j² a_{j+1} / (2 (j+1))`
/// (indices mod n).
fn shear_f_gradient(a: &[Jet], m: f64) -> Vec<Jet> {
    let n = a.len();
    let s = (a[0].scale(m) + 0.3).sin();
    let c = (a[0].scale(m) + 0.3).cos();
    let tail = a[n - 1].clone() - 0.2;
    let (st, ct) = (tail.sin(), tail.cos());
    (0..n)
        .map(|k| {
            let next = (k + 1) % n;
            let prev = (k + n - 1) % n;
            let mut g = (&a[k] * &a[next]).scale(1.0 / (k as f64 + 1.0));
            g += &a[prev].square().scale(0.5 / (prev as f64 + 1.0));
            if k == 0 {
                g += &(&c * &ct);
            }
            if k == n - 1 {
                g -= &(&s * &st).scale(1.0 / m);
            }
            g
        })
        .collect()
}

/// `∇G` for `G(b) = cos(m b_{n-1} + 0.1) / m + Σ_j b_j³ / (3 (j + 2))`.
fn shear_g_gradient(b: &[Jet], m: f64) -> Vec<Jet> {
    let n = b.len();
    (0..n)
        .map(|k| {
            let mut g = b[k].square().scale(1.0 / (k as f64 + 2.0));
            if k == n - 1 {
                g -= &(b[k].scale(m) + 0.1).sin();
            }
            g
        })
        .collect()
}

/// `[(x_1..x_n) / (ch θ + i sh θ x_{n+1}), (sh θ ch θ (1 + x_{n+1}²) + i x_{n+1}) / (ch² θ + sh² θ x_{n+1}²)]`,
/// normalised to unit norm.
fn whitney_cpn_jets(x: &[Jet], theta: f64) -> Vec<Jet> {
    let n = x.len() - 1;
    let (ch, sh) = (theta.cosh(), theta.sinh());
    let last = &x[n];
    let last2 = last.square();
    let inv_d = (last2.scale(sh * sh) + ch * ch).recip();
    // 1 / (ch + i sh x) = (ch - i sh x) / D
    let w_re = inv_d.scale(ch);
    let w_im = -(last * &inv_d).scale(sh);
    let mut z = Vec::with_capacity(2 * n + 2);
    for xj in &x[..n] {
        z.push(xj * &w_re);
        z.push(xj * &w_im);
    }
    z.push((last2 + 1.0).scale(sh * ch) * &inv_d);
    z.push(last * &inv_d);
    normalize(&mut z);
    z
}

fn normalize(z: &mut [Jet]) {
    let mut n2 = z[0].square();
    for c in &z[1..] {
        n2 += &c.square();
    }
    let inv = n2.sqrt().recip();
    for c in z.iter_mut() {
        *c = &*c * &inv;
    }
}

/// All partial derivatives of an immersion up to `order` at one chart point.
#[derive(Clone, Debug)]
pub struct ImmersionJet {
    pub point: ChartPoint,
    pub order: usize,
    components: Vec<Jet>,
}

impl ImmersionJet {
    pub fn space(&self) -> &'static JetSpace {
        self.components[0].space()
    }

    /// Ambient coordinates at the point (the order-0 partial).
    pub fn values(&self) -> Vec<f64> {
        self.components.iter().map(Jet::value).collect()
    }

    /// `∂^α φ`, with `α` given as a list of variable indices.
    pub fn partial(&self, vars: &[usize]) -> Vec<f64> {
        self.components.iter().map(|c| c.derivative(vars)).collect()
    }

    /// Every `(α, ∂^α φ)` with `|α| <= order`, in graded order.
    pub fn partials(&self) -> Vec<(Vec<u8>, Vec<f64>)> {
        let space = self.space();
        (0..space.count(self.order))
            .map(|k| {
                let f = space.factorial(k);
                (
                    space.exponent(k).to_vec(),
                    self.components.iter().map(|c| c.coeffs()[k] * f).collect(),
                )
            })
            .collect()
    }

    /// Ambient coordinates as Taylor jets in the chart displacement.
    pub fn components(&self) -> &[Jet] {
        &self.components
    }
}

/// Derivative jet of `imm` at `p` up to `order` (0..=4).
///
/// Built-in families are differentiated exactly by jet arithmetic; black-box
/// immersions fall back to central differences.
pub fn eval_jet(imm: &Immersion, p: &ChartPoint, order: usize) -> Result<ImmersionJet> {
    if order > MAX_JET_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    imm.source.check(p)?;
    let n = imm.dim();
    let space = JetSpace::get(n, order);
    let components = match &imm.family {
        Family::BlackBox(bb) => {
            let mut comps = finite_difference_jet(bb, p, order, space, imm.ambient.real_dim());
            imm.apply_motion(&[], &mut comps);
            comps
        }
        _ => {
            let u: Vec<Jet> = p
                .coords
                .iter()
                .enumerate()
                .map(|(a, &v)| Jet::variable(space, order, a, v))
                .collect();
            imm.eval_jets(p.chart, &u)
        }
    };
    Ok(ImmersionJet {
        point: p.clone(),
        order,
        components,
    })
}

/// Central difference stencils (offsets in units of the step) for derivative
/// orders 0..=4, all second-order accurate.
fn stencil(k: u8) -> &'static [(i32, f64)] {
    match k {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => unreachable!("order checked by caller"),
    }
}

fn stencil_partial(bb: &BlackBox, p: &ChartPoint, exp: &[u8], step: f64, dim: usize) -> Vec<f64> {
    let n = exp.len();
    let mut out = vec![0.0; dim];
    let mut idx = vec![0usize; n];
    loop {
        let mut weight = 1.0;
        let mut q = p.clone();
        for a in 0..n {
            let (off, w) = stencil(exp[a])[idx[a]];
            weight *= w;
            q.coords[a] += off as f64 * step;
        }
        let f = (bb.map)(&q);
        for (o, v) in out.iter_mut().zip(&f) {
            *o += weight * v;
        }
        // odometer over stencil entries
        let mut a = 0;
        loop {
            if a == n {
                let deg: i32 = exp.iter().map(|&e| e as i32).sum();
                let scale = step.powi(deg);
                return out.into_iter().map(|v| v / scale).collect();
            }
            idx[a] += 1;
            if idx[a] < stencil(exp[a]).len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

fn finite_difference_jet(
    bb: &BlackBox,
    p: &ChartPoint,
    order: usize,
    space: &'static JetSpace,
    dim: usize,
) -> Vec<Jet> {
    let count = space.count(order);
    let mut coeffs = vec![vec![0.0; count]; dim];
    for k in 0..count {
        let exp = space.exponent(k);
        let coarse = stencil_partial(bb, p, exp, bb.step, dim);
        let fine = stencil_partial(bb, p, exp, bb.step / 2.0, dim);
        let fact = space.factorial(k);
        for c in 0..dim {
            let richardson = (4.0 * fine[c] - coarse[c]) / 3.0;
            coeffs[c][k] = richardson / fact;
        }
    }
    coeffs
        .into_iter()
        .map(|c| Jet::from_coeffs(space, order, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn whitney_north_pole_maps_to_center() {
        let w = make_whitney_cn(1.0, &[[0.0, 0.0]; 2], 2).unwrap();
        // chart 1 origin is the north pole x = (0, 0, 1)
        let z = w.eval(&ChartPoint::new(1, vec![0.0, 0.0])).unwrap();
        assert!(close(&z, &[0.0; 4], 1e-15));
    }

    #[test]
    fn whitney_equator_reduces_to_r_x() {
        let w = make_whitney_cn(1.0, &[[0.0, 0.0]; 2], 2).unwrap();
        let p = w.source().chart_point_of(&[1.0, 0.0, 0.0]).unwrap();
        let z = w.eval(&p).unwrap();
        assert!(close(&z, &[1.0, 0.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn whitney_matches_direct_formula_with_center() {
        let center = [[1.0, 0.0], [0.0, 0.0]];
        let w = make_whitney_cn(2.0, &center, 2).unwrap();
        let p = w.source().chart_point_of(&[1.0, 0.0, 0.0]).unwrap();
        assert!(close(&w.eval(&p).unwrap(), &[3.0, 0.0, 0.0, 0.0], 1e-15));

        // generic point against the formula applied to embedded coordinates
        let p = ChartPoint::new(0, vec![0.3, -0.7]);
        let x = w.source_point(&p).unwrap();
        let d = 1.0 + x[2] * x[2];
        let expect = [
            2.0 * x[0] / d + 1.0,
            2.0 * x[0] * x[2] / d,
            2.0 * x[1] / d,
            2.0 * x[1] * x[2] / d,
        ];
        assert!(close(&w.eval(&p).unwrap(), &expect, 1e-14));
    }

    #[test]
    fn torus_values_and_second_derivative() {
        let t = make_product_torus(&[1.0, 1.0]).unwrap();
        assert!(close(
            &t.eval(&ChartPoint::new(0, vec![0.0, 0.0])).unwrap(),
            &[1.0, 0.0, 1.0, 0.0],
            1e-15
        ));
        let t12 = make_product_torus(&[1.0, 2.0]).unwrap();
        assert!(close(
            &t12.eval(&ChartPoint::new(0, vec![FRAC_PI_2, 0.0])).unwrap(),
            &[0.0, 1.0, 2.0, 0.0],
            1e-15
        ));
        let jet = eval_jet(&t, &ChartPoint::new(0, vec![0.0, 0.0]), 2).unwrap();
        assert!((jet.partial(&[0, 0])[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn plane_second_partials_vanish() {
        let p = make_lagrangian_plane(3).unwrap();
        let jet = eval_jet(&p, &ChartPoint::new(0, vec![0.2, 1.0, -0.5]), 2).unwrap();
        for (exp, v) in jet.partials() {
            if exp.iter().map(|&e| e as usize).sum::<usize>() == 2 {
                assert!(v.iter().all(|&c| c == 0.0));
            }
        }
    }

    #[test]
    fn perturbation_zero_is_whitney() {
        let w = make_whitney_cn(1.0, &[[0.0, 0.0]; 3], 3).unwrap();
        let pw = make_perturbed_whitney(3, 1.0, 0.0, 1).unwrap();
        let p = ChartPoint::new(1, vec![0.4, -0.2, 0.9]);
        let a = eval_jet(&w, &p, 3).unwrap();
        let b = eval_jet(&pw, &p, 3).unwrap();
        for ((_, x), (_, y)) in a.partials().iter().zip(b.partials().iter()) {
            assert!(close(x, y, 1e-12));
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(make_whitney_cn(0.0, &[[0.0, 0.0]; 2], 2).is_err());
        assert!(make_whitney_cn(1.0, &[[0.0, 0.0]; 3], 2).is_err());
        assert!(make_product_torus(&[1.0, -1.0]).is_err());
        assert!(make_perturbed_whitney(2, 1.0, 0.2, 1).is_err());
        assert!(make_whitney_cpn(0.0, 2).is_err());
        let w = make_whitney_cn(1.0, &[[0.0, 0.0]; 2], 2).unwrap();
        assert!(matches!(
            eval_jet(&w, &ChartPoint::new(0, vec![0.0, 0.0]), 5),
            Err(Error::UnsupportedOrder(5))
        ));
        assert!(matches!(
            eval_jet(&w, &ChartPoint::new(0, vec![4.5, 0.0]), 1),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn whitney_cpn_equator_point() {
        let theta = 1.0f64;
        let w = make_whitney_cpn(theta, 2).unwrap();
        let p = w.source().chart_point_of(&[1.0, 0.0, 0.0]).unwrap();
        let z = w.eval(&p).unwrap();
        let (ch, sh) = (theta.cosh(), theta.sinh());
        let raw = [1.0 / ch, 0.0, 0.0, 0.0, sh * ch / (ch * ch), 0.0];
        let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expect: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        assert!(close(&z, &expect, 1e-15));
    }

    #[test]
    fn whitney_cpn_antipodes_are_projectively_distinct() {
        let w = make_whitney_cpn(1.0, 2).unwrap();
        let p = w.source().chart_point_of(&[0.6, 0.8, 0.0]).unwrap();
        let q = w.source().chart_point_of(&[-0.6, -0.8, 0.0]).unwrap();
        let (a, b) = (w.eval(&p).unwrap(), w.eval(&q).unwrap());
        // |<a, b>| = 1 iff same projective point
        let (mut re, mut im) = (0.0, 0.0);
        for k in 0..3 {
            re += a[2 * k] * b[2 * k] + a[2 * k + 1] * b[2 * k + 1];
            im += a[2 * k + 1] * b[2 * k] - a[2 * k] * b[2 * k + 1];
        }
        assert!((re * re + im * im).sqrt() < 0.999);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ImmersionSpec::PerturbedWhitney {
            n: 2,
            r: 1.0,
            eps: 0.05,
            mode: 1,
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: ImmersionSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
        let torus: ImmersionSpec =
            serde_json::from_str(r#"{"family":"product_torus","radii":[1,2]}"#).unwrap();
        assert_eq!(torus.build().unwrap().dim(), 2);
    }
}

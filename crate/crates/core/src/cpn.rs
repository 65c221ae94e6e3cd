//! Horizontal lifts into the unit sphere `S^{2n+1} ⊂ C^{n+1}`.
//!
//! A map into `CP^n` is given by homogeneous coordinates `z`. After
//! normalising, the lift `w = e^{iψ} z/|z|` is horizontal (`⟨∂_a w, i w⟩ = 0`)
//! when `dψ = -⟨∂ z, i z⟩`. That form is closed exactly when the immersion is
//! Lagrangian, and `ψ` is then its radial potential. A horizontal lift of a
//! Lagrangian immersion is Lagrangian in `C^{n+1}` restricted to the sphere, and
//! its second fundamental form along `J e_i` is the Fubini–Study one.

use serde::Serialize;

use crate::chart::ChartPoint;
use crate::error::{Error, Result};
use crate::geometry::{geometry_state, Depth, GeometryState};
use crate::immersion::{apply_j_jets, Ambient, Immersion, ImmersionJet};
use crate::jet::{dot, radial_potential, Jet};

/// Coordinates below this modulus are skipped when fixing the phase.
const PHASE_PIVOT_MIN: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct HorizontalJet {
    /// `w` as interleaved real jets.
    pub components: Vec<Jet>,
    /// Largest jet coefficient of `⟨∂_a w, i w⟩`.
    pub horizontality: f64,
}

pub fn horizontal_lift(jet: &ImmersionJet) -> Result<HorizontalJet> {
    let raw = jet.components();
    let m = raw.len() / 2;
    let n = jet.space().nvars();
    let norm2 = dot(raw, raw);
    if !(norm2.value() > 0.0) {
        return Err(Error::Numeric("homogeneous coordinates vanish".into()));
    }
    let inv = norm2.sqrt().recip();
    let z: Vec<Jet> = raw.iter().map(|c| c * &inv).collect();

    // constant phase making the first non-negligible coordinate real-positive
    let pivot = (0..m)
        .find(|&k| z[2 * k].value().hypot(z[2 * k + 1].value()) > PHASE_PIVOT_MIN)
        .ok_or_else(|| Error::Numeric("homogeneous coordinates vanish".into()))?;
    let (a, b) = (z[2 * pivot].value(), z[2 * pivot + 1].value());
    let r = a.hypot(b);
    let z = rotate(&z, &Jet::constant(jet.space(), jet.order, a / r), &Jet::constant(jet.space(), jet.order, -b / r));

    let jz = apply_j_jets(&z);
    let vertical: Vec<Jet> = (0..n)
        .map(|a| {
            let dz: Vec<Jet> = z.iter().map(|c| c.partial(a)).collect();
            -dot(&dz, &jz)
        })
        .collect();
    let psi = radial_potential(&vertical);
    let w = rotate(&z, &psi.cos(), &psi.sin());

    let jw = apply_j_jets(&w);
    let mut horizontality: f64 = 0.0;
    for a in 0..n {
        let dw: Vec<Jet> = w.iter().map(|c| c.partial(a)).collect();
        let v = dot(&dw, &jw);
        horizontality = v.coeffs().iter().fold(horizontality, |acc, c| acc.max(c.abs()));
    }
    Ok(HorizontalJet {
        components: w,
        horizontality,
    })
}

/// `z · (c + i s)` on interleaved components.
fn rotate(z: &[Jet], c: &Jet, s: &Jet) -> Vec<Jet> {
    let mut out = Vec::with_capacity(z.len());
    for k in 0..z.len() / 2 {
        let (x, y) = (&z[2 * k], &z[2 * k + 1]);
        out.push(&(x * c) - &(y * s));
        out.push(&(x * s) + &(y * c));
    }
    out
}

/// [`geometry_state`] restricted to immersions into `CP^n`.
pub fn cpn_geometry_state(imm: &Immersion, p: &ChartPoint, depth: Depth) -> Result<GeometryState> {
    match imm.ambient() {
        Ambient::HomogeneousSphere(_) => geometry_state(imm, p, depth),
        Ambient::ComplexEuclidean(_) => Err(Error::WrongAmbient("expected an immersion into CP^n")),
    }
}

/// A point of `CP^n` in normalised homogeneous coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneousPoint {
    pub coords: Vec<[f64; 2]>,
}

impl HomogeneousPoint {
    pub fn new(z: &[f64]) -> Result<HomogeneousPoint> {
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if z.len() % 2 != 0 || !(norm > 0.0) {
            return Err(Error::InvalidParameter("homogeneous coordinates must be nonzero pairs".into()));
        }
        Ok(HomogeneousPoint {
            coords: z.chunks(2).map(|c| [c[0] / norm, c[1] / norm]).collect(),
        })
    }

    /// Fubini–Study distance (holomorphic sectional curvature 4).
    pub fn distance(&self, other: &HomogeneousPoint) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (a, b) in self.coords.iter().zip(&other.coords) {
            re += a[0] * b[0] + a[1] * b[1];
            im += a[0] * b[1] - a[1] * b[0];
        }
        re.hypot(im).min(1.0).acos()
    }
}

//! Chart atlases for the model source manifolds.
//!
//! * `S^n`: two stereographic charts. Chart 0 projects from the north pole
//!   `+e_{n+1}` (its origin is the south pole), chart 1 projects from the
//!   south pole. The transition map is the inversion `u ↦ u / |u|²`.
//! * `T^n`: one periodic angle chart.
//! * `R^n`: the identity chart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Stereographic charts accept `|u| < SPHERE_DOMAIN_RADIUS`.
pub const SPHERE_DOMAIN_RADIUS: f64 = 4.0;

/// Points with `|u|` above this are moved to the opposite chart before
/// evaluation, so every evaluation happens with `|u| <= 2`.
pub const SPHERE_CANONICAL_RADIUS: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "snake_case")]
pub enum SourceModel {
    Sphere(usize),
    Torus(usize),
    Euclidean(usize),
}

impl SourceModel {
    pub fn dim(&self) -> usize {
        match *self {
            SourceModel::Sphere(n) | SourceModel::Torus(n) | SourceModel::Euclidean(n) => n,
        }
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self, SourceModel::Euclidean(_))
    }

    pub fn chart_count(&self) -> u8 {
        match self {
            SourceModel::Sphere(_) => 2,
            _ => 1,
        }
    }

    /// Checks that `p` is a valid point of this atlas.
    pub fn check(&self, p: &ChartPoint) -> Result<()> {
        let out = || Error::OutOfDomain {
            chart: p.chart,
            coords: p.coords.clone(),
        };
        if p.coords.len() != self.dim() || p.chart >= self.chart_count() {
            return Err(out());
        }
        if p.coords.iter().any(|c| !c.is_finite()) {
            return Err(out());
        }
        if let SourceModel::Sphere(_) = self {
            if p.norm() >= SPHERE_DOMAIN_RADIUS {
                return Err(out());
            }
        }
        Ok(())
    }

    /// Maps `p` to an equivalent point in `target`.
    ///
    /// For the sphere the point must lie in the overlap of both chart
    /// domains, `1/4 < |u| < 4`. The torus transition reduces angles into
    /// `[-π, π)`, which is how periodicity shows up in a single chart.
    pub fn transition(&self, p: &ChartPoint, target: u8) -> Result<ChartPoint> {
        self.check(p)?;
        if target >= self.chart_count() {
            return Err(Error::InvalidParameter(format!("no chart {target}")));
        }
        match self {
            SourceModel::Sphere(_) => {
                if target == p.chart {
                    return Ok(p.clone());
                }
                let r2: f64 = p.coords.iter().map(|c| c * c).sum();
                let r = r2.sqrt();
                if r <= 1.0 / SPHERE_DOMAIN_RADIUS {
                    return Err(Error::NotInOverlap {
                        from: p.chart,
                        to: target,
                        coords: p.coords.clone(),
                    });
                }
                Ok(ChartPoint::new(
                    target,
                    p.coords.iter().map(|c| c / r2).collect(),
                ))
            }
            SourceModel::Torus(_) => Ok(ChartPoint::new(
                0,
                p.coords
                    .iter()
                    .map(|t| (t + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI)
                    .collect(),
            )),
            SourceModel::Euclidean(_) => Ok(p.clone()),
        }
    }

    /// Moves sphere points with `|u| > 2` to the opposite chart.
    pub fn canonicalize(&self, p: &ChartPoint) -> Result<ChartPoint> {
        self.check(p)?;
        match self {
            SourceModel::Sphere(_) if p.norm() > SPHERE_CANONICAL_RADIUS => {
                self.transition(p, 1 - p.chart)
            }
            _ => Ok(p.clone()),
        }
    }

    /// Embedded coordinates of a chart point: `x ∈ S^n ⊂ R^{n+1}` for the
    /// sphere, the chart coordinates otherwise.
    pub fn embed(&self, p: &ChartPoint) -> Result<Vec<f64>> {
        self.check(p)?;
        Ok(match self {
            SourceModel::Sphere(_) => stereo_to_sphere(p.chart, &p.coords),
            _ => p.coords.clone(),
        })
    }

    /// Chart point (canonical chart) for an embedded sphere point, or for
    /// plain coordinates on the torus and plane.
    pub fn chart_point_of(&self, x: &[f64]) -> Result<ChartPoint> {
        match self {
            SourceModel::Sphere(n) => {
                if x.len() != n + 1 {
                    return Err(Error::InvalidParameter(format!(
                        "expected {} embedded coordinates",
                        n + 1
                    )));
                }
                let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let last = x[*n] / norm;
                // the chart whose projection pole is farther away
                let (chart, denom) = if last <= 0.0 {
                    (0u8, 1.0 - last)
                } else {
                    (1u8, 1.0 + last)
                };
                Ok(ChartPoint::new(
                    chart,
                    x[..*n].iter().map(|v| v / norm / denom).collect(),
                ))
            }
            _ => {
                let p = ChartPoint::new(0, x.to_vec());
                self.check(&p)?;
                Ok(p)
            }
        }
    }
}

/// Inverse stereographic projection for chart `chart` (0: from `+e_{n+1}`).
pub fn stereo_to_sphere(chart: u8, u: &[f64]) -> Vec<f64> {
    let r2: f64 = u.iter().map(|c| c * c).sum();
    let d = 1.0 + r2;
    let mut x: Vec<f64> = u.iter().map(|c| 2.0 * c / d).collect();
    let last = if chart == 0 { (r2 - 1.0) / d } else { (1.0 - r2) / d };
    x.push(last);
    x
}

/// Inverse stereographic projection on jets.
pub fn stereo_to_sphere_jets(chart: u8, u: &[Jet]) -> Vec<Jet> {
    let mut r2 = u[0].square();
    for c in &u[1..] {
        r2 += &c.square();
    }
    let inv = (&r2 + 1.0).recip();
    let mut x: Vec<Jet> = u.iter().map(|c| &(c * &inv) * 2.0).collect();
    let last = if chart == 0 {
        (r2.clone() - 1.0) * &inv
    } else {
        (-r2 + 1.0) * &inv
    };
    x.push(last);
    x
}

/// A point given in one chart of a source atlas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: u8,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(chart: u8, coords: Vec<f64>) -> ChartPoint {
        ChartPoint { chart, coords }
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Same chart, coordinates displaced by `step` along `axis`.
    pub fn shifted(&self, axis: usize, step: f64) -> ChartPoint {
        let mut q = self.clone();
        q.coords[axis] += step;
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stereographic_transition_is_inversion() {
        let s2 = SourceModel::Sphere(2);
        let p = ChartPoint::new(0, vec![0.5, 0.0]);
        let q = s2.transition(&p, 1).unwrap();
        assert_eq!(q.chart, 1);
        assert!((q.coords[0] - 2.0).abs() < 1e-15);
        assert_eq!(q.coords[1], 0.0);
        let x = s2.embed(&p).unwrap();
        let y = s2.embed(&q).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn transition_round_trip_is_identity() {
        let s3 = SourceModel::Sphere(3);
        let p = ChartPoint::new(1, vec![0.7, -1.1, 0.3]);
        let back = s3.transition(&s3.transition(&p, 0).unwrap(), 1).unwrap();
        for (a, b) in p.coords.iter().zip(&back.coords) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transition_outside_overlap_fails() {
        let s2 = SourceModel::Sphere(2);
        let p = ChartPoint::new(0, vec![0.1, 0.0]);
        assert!(matches!(
            s2.transition(&p, 1),
            Err(Error::NotInOverlap { .. })
        ));
        let far = ChartPoint::new(0, vec![5.0, 0.0]);
        assert!(matches!(s2.check(&far), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn torus_transition_wraps_angles() {
        let t2 = SourceModel::Torus(2);
        let p = ChartPoint::new(0, vec![0.4 + std::f64::consts::TAU, -0.2]);
        let q = t2.transition(&p, 0).unwrap();
        assert!((q.coords[0] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn chart_point_of_stays_in_unit_ball() {
        let s2 = SourceModel::Sphere(2);
        for x in [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.3, -0.4, 0.5]] {
            let p = s2.chart_point_of(&x).unwrap();
            assert!(p.norm() <= 1.0 + 1e-15);
            let y = s2.embed(&p).unwrap();
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (a, b) in x.iter().zip(&y) {
                assert!((a / nx - b).abs() < 1e-14);
            }
        }
    }
}

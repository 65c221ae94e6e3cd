//! Small dense tensors in an orthonormal frame, with the symmetry classes of
//! Lagrangian geometry and the algebraic identities built on them.
//!
//! Index conventions: a [`CubicSymTensor`] stores `a^m_{ij}` at `[m][i][j]`,
//! where `m` labels the normal direction `J e_m`. Everything is an explicit
//! loop; `n` never exceeds 8.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::ser::{Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 8;

fn scale_of(data: &[f64]) -> f64 {
    data.iter().fold(1.0f64, |a, v| a.max(v.abs()))
}

/// Fully symmetric rank-3 array (houses `h`, `ĥ` and the `c`-tensor).
#[derive(Clone, Debug, PartialEq)]
pub struct CubicSymTensor {
    n: usize,
    data: Vec<f64>,
}

impl CubicSymTensor {
    pub fn zeros(n: usize) -> Self {
        CubicSymTensor {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    /// Accepts `data` (row-major `[m][i][j]`) if it is symmetric under all
    /// index permutations to `tol` relative to its largest entry.
    pub fn new(n: usize, data: Vec<f64>, tol: f64) -> Result<Self> {
        if data.len() != n * n * n || n == 0 || n > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "rank-3 array of length {} does not match n = {n}",
                data.len()
            )));
        }
        let t = CubicSymTensor { n, data };
        let dev = t.max_asymmetry();
        if dev > tol * scale_of(&t.data) {
            return Err(Error::NotTriSymmetric(dev));
        }
        Ok(t)
    }

    /// Average over the six index permutations.
    pub fn symmetrized(n: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), n * n * n);
        let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
        let mut out = vec![0.0; n * n * n];
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    out[idx(m, i, j)] = (data[idx(m, i, j)]
                        + data[idx(m, j, i)]
                        + data[idx(i, m, j)]
                        + data[idx(i, j, m)]
                        + data[idx(j, m, i)]
                        + data[idx(j, i, m)])
                        / 6.0;
                }
            }
        }
        CubicSymTensor { n, data: out }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, m: usize, i: usize, j: usize) -> f64 {
        self.data[(m * self.n + i) * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest `|a_σ - a|` over index permutations `σ`.
    pub fn max_asymmetry(&self) -> f64 {
        max_permutation_deviation(self.n, &self.data)
    }

    /// `Σ_i a^m_{ii}` for each `m`.
    pub fn trace(&self) -> VectorField1 {
        let n = self.n;
        VectorField1::new((0..n).map(|m| (0..n).map(|i| self.get(m, i, i)).sum()).collect())
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Components in the frame `e'_a = Σ_b q[a][b] e_b` (`q` row-major, orthogonal).
    pub fn rotated(&self, q: &[f64]) -> Self {
        let n = self.n;
        CubicSymTensor {
            n,
            data: rotate3(n, &self.data, q),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        CubicSymTensor {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        CubicSymTensor {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        CubicSymTensor {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// The matrix `A_m = (a^m_{ij})`, row-major.
    pub fn slice(&self, m: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.data[m * nn..(m + 1) * nn]
    }
}

fn max_permutation_deviation(n: usize, data: &[f64]) -> f64 {
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut worst: f64 = 0.0;
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let v = data[idx(m, i, j)];
                for w in [
                    data[idx(m, j, i)],
                    data[idx(i, m, j)],
                    data[idx(i, j, m)],
                    data[idx(j, m, i)],
                    data[idx(j, i, m)],
                ] {
                    worst = worst.max((v - w).abs());
                }
            }
        }
    }
    worst
}

fn rotate3(n: usize, a: &[f64], q: &[f64]) -> Vec<f64> {
    // one index at a time: O(n^4)
    let mut cur = a.to_vec();
    for slot in 0..3 {
        let mut next = vec![0.0; n * n * n];
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let mut s = 0.0;
                    for b in 0..n {
                        let src = match slot {
                            0 => (b * n + y) * n + z,
                            1 => (x * n + b) * n + z,
                            _ => (x * n + y) * n + b,
                        };
                        let row = [x, y, z][slot];
                        s += q[row * n + b] * cur[src];
                    }
                    next[(x * n + y) * n + z] = s;
                }
            }
        }
        cur = next;
    }
    cur
}

impl Serialize for CubicSymTensor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        nested(self.n, 3, &self.data).serialize(s)
    }
}

/// Nested JSON arrays for a rank-`rank` array with all extents `n`.
pub(crate) fn nested(n: usize, rank: usize, data: &[f64]) -> serde_json::Value {
    if rank == 0 {
        return serde_json::json!(data[0]);
    }
    let stride = data.len() / n;
    serde_json::Value::Array(
        (0..n)
            .map(|k| nested(n, rank - 1, &data[k * stride..(k + 1) * stride]))
            .collect(),
    )
}

/// Components `H^k` of a normal vector field in the frame `J e_k`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct VectorField1 {
    comps: Vec<f64>,
}

impl VectorField1 {
    pub fn new(comps: Vec<f64>) -> Self {
        VectorField1 { comps }
    }

    pub fn zeros(n: usize) -> Self {
        VectorField1 { comps: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.comps.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.comps
    }

    pub fn norm2(&self) -> f64 {
        self.comps.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        VectorField1::new(self.comps.iter().map(|v| v * s).collect())
    }

    pub fn rotated(&self, q: &[f64]) -> Self {
        let n = self.n();
        VectorField1::new(
            (0..n)
                .map(|a| (0..n).map(|b| q[a * n + b] * self.comps[b]).sum())
                .collect(),
        )
    }
}

impl std::ops::Index<usize> for VectorField1 {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.comps[k]
    }
}

/// Symmetric trace-free 2-tensor (houses `T`).
#[derive(Clone, Debug, PartialEq)]
pub struct SymTraceFree2 {
    n: usize,
    data: Vec<f64>,
}

impl SymTraceFree2 {
    pub fn zeros(n: usize) -> Self {
        SymTraceFree2 {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Checks symmetry and vanishing trace to `tol` relative to the largest entry.
    pub fn new(n: usize, data: Vec<f64>, tol: f64) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidParameter("matrix has wrong size".into()));
        }
        let t = SymTraceFree2 { n, data };
        let scale = scale_of(&t.data);
        let asym = t.max_asymmetry();
        if asym > tol * scale {
            return Err(Error::NotSymmetric(asym));
        }
        if t.trace().abs() > tol * scale {
            return Err(Error::InconsistentTrace(t.trace().abs()));
        }
        Ok(t)
    }

    /// Stores `data` as is; the caller reports its deviation separately.
    pub fn unchecked(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        SymTraceFree2 { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

impl Serialize for SymTraceFree2 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        nested(self.n, 2, &self.data).serialize(s)
    }
}

/// Dense rank-4 array with all extents `n`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Rank4 {
    n: usize,
    data: Vec<f64>,
}

impl Rank4 {
    pub fn zeros(n: usize) -> Self {
        Rank4 {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n * n * n);
        Rank4 { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.data[((a * self.n + b) * self.n + c) * self.n + d]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, d: usize, v: f64) {
        let n = self.n;
        self.data[((a * n + b) * n + c) * n + d] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Rank4) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    /// Largest deviation from symmetry under every permutation of the four
    /// indices (used for the Codazzi check on `h^m_{ij,k}`).
    pub fn max_full_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = self.get(a, b, c, d);
                        // transpositions generate S_4
                        for w in [self.get(b, a, c, d), self.get(a, c, b, d), self.get(a, b, d, c)] {
                            worst = worst.max((v - w).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

impl Serialize for Rank4 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        nested(self.n, 4, &self.data).serialize(s)
    }
}

/// Dense array of arbitrary rank with all extents `n`, row-major. Used for
/// tensors without a symmetry class (connection forms, `∇T`, `∇²h`).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    n: usize,
    rank: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(n: usize, rank: usize) -> Self {
        DenseTensor {
            n,
            rank,
            data: vec![0.0; n.pow(rank as u32)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    #[inline]
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }
}

impl Serialize for DenseTensor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        nested(self.n, self.rank, &self.data).serialize(s)
    }
}

#[inline]
fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// `c^m_{ij} = n/(n+2) (H^m δ_ij + H^i δ_jm + H^j δ_im)`.
pub fn c_tensor(h_vec: &VectorField1) -> CubicSymTensor {
    let n = h_vec.n();
    let k = n as f64 / (n as f64 + 2.0);
    let mut data = vec![0.0; n * n * n];
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                data[(m * n + i) * n + j] = k
                    * (h_vec[m] * delta(i, j) + h_vec[i] * delta(j, m) + h_vec[j] * delta(i, m));
            }
        }
    }
    CubicSymTensor { n, data }
}

/// `ĥ = h - c(H)`, after checking that `H` is the trace of `h` over `n`.
pub fn tracefree_part(h: &CubicSymTensor, h_vec: &VectorField1) -> Result<CubicSymTensor> {
    let n = h.n();
    if h_vec.n() != n {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    let tr = h.trace();
    let scale = scale_of(h.as_slice()).max(scale_of(h_vec.as_slice()));
    let dev = (0..n).fold(0.0f64, |a, m| a.max((tr[m] / n as f64 - h_vec[m]).abs()));
    if dev > 1e-10 * scale {
        return Err(Error::InconsistentTrace(dev));
    }
    Ok(h.sub(&c_tensor(h_vec)))
}

/// `| |ĥ|² - |h|² + 3n²/(n+2) |H|² |`.
pub fn norm_identity_residual(h: &CubicSymTensor, hhat: &CubicSymTensor, h_vec: &VectorField1) -> f64 {
    let n = h.n() as f64;
    (hhat.norm2() - h.norm2() + 3.0 * n * n / (n + 2.0) * h_vec.norm2()).abs()
}

/// One auxiliary contraction identity: brute-force left side and closed-form right side.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ContractionResidual {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

impl ContractionResidual {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

fn require_tracefree(hhat: &CubicSymTensor, h_vec: &VectorField1) -> Result<()> {
    if h_vec.n() != hhat.n() {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    let scale = scale_of(hhat.as_slice());
    let asym = hhat.max_asymmetry();
    if asym > 1e-12 * scale {
        return Err(Error::NotTriSymmetric(asym));
    }
    let tr = hhat.trace();
    let dev = tr.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if dev > 1e-12 * scale * hhat.n() as f64 {
        return Err(Error::InconsistentTrace(dev));
    }
    Ok(())
}

/// Scalar contractions of `(ĥ, H)` that recur in the curvature terms.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Contractions {
    pub hhat_norm2: f64,
    pub h_norm2: f64,
    /// `Σ ĥ^m_{jk} ĥ^m_{kl} ĥ^t_{lj} H^t`
    pub cubic: f64,
    /// `Σ ĥ^m_{ij} ĥ^m_{jk} H^i H^k`
    pub quadratic: f64,
}

pub fn contractions(hhat: &CubicSymTensor, h_vec: &VectorField1) -> Contractions {
    let n = hhat.n();
    let mut cubic = 0.0;
    let mut quadratic = 0.0;
    // M_{ij} = Σ_t ĥ^t_{ij} H^t
    let m = weighted_slice(hhat, h_vec);
    for a in 0..n {
        for j in 0..n {
            for k in 0..n {
                let ajk = hhat.get(a, j, k);
                for l in 0..n {
                    cubic += ajk * hhat.get(a, k, l) * m[l * n + j];
                }
            }
        }
    }
    for a in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    quadratic += hhat.get(a, i, j) * hhat.get(a, j, k) * h_vec[i] * h_vec[k];
                }
            }
        }
    }
    Contractions {
        hhat_norm2: hhat.norm2(),
        h_norm2: h_vec.norm2(),
        cubic,
        quadratic,
    }
}

/// `M_{ij} = Σ_l ĥ^l_{ij} H^l`, row-major.
pub fn weighted_slice(hhat: &CubicSymTensor, h_vec: &VectorField1) -> Vec<f64> {
    let n = hhat.n();
    let mut m = vec![0.0; n * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] += hhat.get(l, i, j) * h_vec[l];
            }
        }
    }
    m
}

/// Six-index sum `Σ x^m_{ij} y^m_{kl} z^t_{p q} w^t_{r s}` where the last two
/// index pairs are picked from `(i, j, k, l)` by `pick`.
fn six_index<F>(x: &CubicSymTensor, y: &CubicSymTensor, z: &CubicSymTensor, w: &CubicSymTensor, pick: F) -> f64
where
    F: Fn([usize; 4]) -> ([usize; 2], [usize; 2]),
{
    let n = x.n();
    let mut total = 0.0;
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let xm = x.get(m, i, j);
                if xm == 0.0 {
                    continue;
                }
                for k in 0..n {
                    for l in 0..n {
                        let ym = y.get(m, k, l);
                        if ym == 0.0 {
                            continue;
                        }
                        let ([p, q], [r, s]) = pick([i, j, k, l]);
                        let mut inner = 0.0;
                        for t in 0..n {
                            inner += z.get(t, p, q) * w.get(t, r, s);
                        }
                        total += xm * ym * inner;
                    }
                }
            }
        }
    }
    total
}

/// The ten auxiliary contraction identities used to reduce the curvature
/// sums to closed form, each evaluated by brute-force summation.
///
/// With `c = c(H)` and `Q = Σ ĥ^m_{ij} ĥ^m_{jk} H^i H^k`:
///
/// | name | left side | right side |
/// |---|---|---|
/// | `hhhc_lj_ik` | `Σ ĥ^m_{ij} ĥ^m_{kl} ĥ^t_{lj} c^t_{ik}` | `3n/(n+2) Σ ĥĥĥH` |
/// | `hhch_lj_ik` | `Σ ĥ^m_{ij} ĥ^m_{kl} c^t_{lj} ĥ^t_{ik}` | `3n/(n+2) Σ ĥĥĥH` |
/// | `hhhc_lk_ij` | `Σ ĥ^m_{ij} ĥ^m_{kl} ĥ^t_{lk} c^t_{ij}` | `2n/(n+2) Σ ĥĥĥH` |
/// | `hhch_lk_ij` | `Σ ĥ^m_{ij} ĥ^m_{kl} c^t_{lk} ĥ^t_{ij}` | `2n/(n+2) Σ ĥĥĥH` |
/// | `hhcc_lj_ik` | `Σ ĥ^m_{ij} ĥ^m_{kl} c^t_{lj} c^t_{ik}` | `n²/(n+2)² (|ĥ|²|H|² + 6Q)` |
/// | `hhcc_lk_ij` | `Σ ĥ^m_{ij} ĥ^m_{kl} c^t_{lk} c^t_{ij}` | `4n²/(n+2)² Q` |
/// | `n_hhcH` | `n Σ ĥ^m_{ij} ĥ^m_{li} c^t_{lj} H^t` | `n²/(n+2) (|ĥ|²|H|² + 2Q)` |
/// | `hhhc_lk_kj` | `Σ ĥ^m_{ij} ĥ^m_{li} ĥ^t_{lk} c^t_{kj}` | `2n/(n+2) Σ ĥĥĥH` |
/// | `hhhc_kj_lk` | `Σ ĥ^m_{ij} ĥ^m_{li} ĥ^t_{kj} c^t_{lk}` | `2n/(n+2) Σ ĥĥĥH` |
/// | `hhcc_lk_kj` | `Σ ĥ^m_{ij} ĥ^m_{li} c^t_{lk} c^t_{kj}` | `n²/(n+2)² (2|ĥ|²|H|² + (n+6)Q)` |
pub fn contraction_identity_suite(hhat: &CubicSymTensor, h_vec: &VectorField1) -> Result<Vec<ContractionResidual>> {
    require_tracefree(hhat, h_vec)?;
    let n = hhat.n();
    let nf = n as f64;
    let k = nf / (nf + 2.0);
    let k2 = k * k;
    let c = c_tensor(h_vec);
    let s = contractions(hhat, h_vec);
    let (cub, q, base) = (s.cubic, s.quadratic, s.hhat_norm2 * s.h_norm2);

    // the "II" family pairs ĥ^m_{ij} with ĥ^m_{li}: reuse six_index with
    // y = ĥ and (k, l) standing for (l, i)
    let lj_ik = |[i, j, k, l]: [usize; 4]| ([l, j], [i, k]);
    let lk_ij = |[i, j, k, l]: [usize; 4]| ([l, k], [i, j]);

    let two = |x: &CubicSymTensor, y: &CubicSymTensor, z: &CubicSymTensor, w: &CubicSymTensor, pick: fn(usize, usize, usize, usize) -> ([usize; 2], [usize; 2])| {
        // Σ x^m_{ij} y^m_{li} z^t w^t over i, j, l, k, m, t
        let mut total = 0.0;
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let xm = x.get(m, i, j);
                    for l in 0..n {
                        let ym = y.get(m, l, i);
                        let prod = xm * ym;
                        if prod == 0.0 {
                            continue;
                        }
                        for kk in 0..n {
                            let ([p, q2], [r, s2]) = pick(i, j, kk, l);
                            for t in 0..n {
                                total += prod * z.get(t, p, q2) * w.get(t, r, s2);
                            }
                        }
                    }
                }
            }
        }
        total
    };

    let mut out = Vec::with_capacity(10);
    out.push(ContractionResidual {
        name: "hhhc_lj_ik",
        lhs: six_index(hhat, hhat, hhat, &c, lj_ik),
        rhs: 3.0 * k * cub,
    });
    out.push(ContractionResidual {
        name: "hhch_lj_ik",
        lhs: six_index(hhat, hhat, &c, hhat, lj_ik),
        rhs: 3.0 * k * cub,
    });
    out.push(ContractionResidual {
        name: "hhhc_lk_ij",
        lhs: six_index(hhat, hhat, hhat, &c, lk_ij),
        rhs: 2.0 * k * cub,
    });
    out.push(ContractionResidual {
        name: "hhch_lk_ij",
        lhs: six_index(hhat, hhat, &c, hhat, lk_ij),
        rhs: 2.0 * k * cub,
    });
    out.push(ContractionResidual {
        name: "hhcc_lj_ik",
        lhs: six_index(hhat, hhat, &c, &c, lj_ik),
        rhs: k2 * base + 6.0 * k2 * q,
    });
    out.push(ContractionResidual {
        name: "hhcc_lk_ij",
        lhs: six_index(hhat, hhat, &c, &c, lk_ij),
        rhs: 4.0 * k2 * q,
    });

    let mut n_hhc_h = 0.0;
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let prod = hhat.get(m, i, j) * hhat.get(m, l, i);
                    for t in 0..n {
                        n_hhc_h += prod * c.get(t, l, j) * h_vec[t];
                    }
                }
            }
        }
    }
    out.push(ContractionResidual {
        name: "n_hhcH",
        lhs: nf * n_hhc_h,
        rhs: nf * k * base + 2.0 * nf * k * q,
    });

    // cubic with the (ij)(li)(lj) pattern equals `cub` by tri-symmetry, but
    // it is recomputed here so the identity is checked independently
    let mut cub2 = 0.0;
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let prod = hhat.get(m, i, j) * hhat.get(m, l, i);
                    for t in 0..n {
                        cub2 += prod * hhat.get(t, l, j) * h_vec[t];
                    }
                }
            }
        }
    }
    out.push(ContractionResidual {
        name: "hhhc_lk_kj",
        lhs: two(hhat, hhat, hhat, &c, |_, j, k, l| ([l, k], [k, j])),
        rhs: 2.0 * k * cub2,
    });
    out.push(ContractionResidual {
        name: "hhhc_kj_lk",
        lhs: two(hhat, hhat, hhat, &c, |_, j, k, l| ([k, j], [l, k])),
        rhs: 2.0 * k * cub2,
    });
    out.push(ContractionResidual {
        name: "hhcc_lk_kj",
        lhs: two(hhat, hhat, &c, &c, |_, j, k, l| ([l, k], [k, j])),
        rhs: 2.0 * k2 * base + (nf + 6.0) * k2 * q,
    });
    Ok(out)
}

/// `N(A) = tr(AᵀA)` for a row-major square matrix.
fn frob2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn matmul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// Sides of the Li–Li matrix inequality for symmetric `B_1..B_m`:
/// `Σ N(B_a B_b - B_b B_a) + Σ S_ab²` and `(3/2) S²`.
pub fn li_li_check(bs: &[Vec<f64>], n: usize) -> Result<(f64, f64)> {
    if bs.len() < 2 {
        return Err(Error::InvalidParameter("need at least two matrices".into()));
    }
    for b in bs {
        if b.len() != n * n {
            return Err(Error::InvalidParameter("matrix has wrong size".into()));
        }
        let asym = SymTraceFree2::unchecked(n, b.clone()).max_asymmetry();
        if asym > 1e-12 * scale_of(b) {
            return Err(Error::NotSymmetric(asym));
        }
    }
    let mut lhs = 0.0;
    let mut total = 0.0;
    for ba in bs {
        total += frob2(ba);
        for bb in bs {
            let ab = matmul(n, ba, bb);
            let ba_ = matmul(n, bb, ba);
            let comm: Vec<f64> = ab.iter().zip(&ba_).map(|(x, y)| x - y).collect();
            let s_ab: f64 = ba.iter().zip(bb).map(|(x, y)| x * y).sum();
            lhs += frob2(&comm) + s_ab * s_ab;
        }
    }
    Ok((lhs, 1.5 * total * total))
}

/// Eigen-data of `M_{ij} = Σ_l ĥ^l_{ij} H^l` and the slice norms of `ĥ` in
/// its eigenframe.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SpectralSummary {
    /// Ascending eigenvalues of `M`.
    pub lambdas: Vec<f64>,
    /// `S_i = Σ_{j,l} (ĥ^i_{jl})²` in the eigenframe, in the order of `lambdas`.
    pub s_istar: Vec<f64>,
    pub s_h: f64,
}

pub fn spectral_summary(hhat: &CubicSymTensor, h_vec: &VectorField1) -> Result<SpectralSummary> {
    let asym = hhat.max_asymmetry();
    if asym > 1e-9 * scale_of(hhat.as_slice()) {
        return Err(Error::NotTriSymmetric(asym));
    }
    let n = hhat.n();
    let m = weighted_slice(hhat, h_vec);
    let (lambdas, vecs) = symmetric_eigen(n, &m)?;
    // rows of q are eigenvectors
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for a in 0..n {
            q[i * n + a] = vecs[a * n + i];
        }
    }
    let rot = hhat.rotated(&q);
    let s_istar = (0..n).map(|i| frob2(rot.slice(i))).collect();
    let s_h = lambdas.iter().map(|l| l * l).sum();
    Ok(SpectralSummary {
        lambdas,
        s_istar,
        s_h,
    })
}

/// Symmetric eigen-decomposition. Returns ascending eigenvalues and the
/// row-major matrix whose columns are the eigenvectors.
pub fn symmetric_eigen(n: usize, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != n * n || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigen-decomposition needs a finite square matrix".into()));
    }
    let eig = DMatrix::from_row_slice(n, n, a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + col] = eig.eigenvectors[(k, src)];
        }
    }
    Ok((vals, vecs))
}

/// `R_{ijkl} = c (δ_ik δ_jl - δ_il δ_jk) + Σ_m (h^m_{ik} h^m_{jl} - h^m_{il} h^m_{jk})`.
pub fn gauss_curvature(h: &CubicSymTensor, c: f64) -> Rank4 {
    let n = h.n();
    let mut r = Rank4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = c * (delta(i, k) * delta(j, l) - delta(i, l) * delta(j, k));
                    for m in 0..n {
                        v += h.get(m, i, k) * h.get(m, j, l) - h.get(m, i, l) * h.get(m, j, k);
                    }
                    r.set(i, j, k, l, v);
                }
            }
        }
    }
    r
}

/// The curvature sums `I = Σ ĥ^m_{ij} ĥ^m_{lk} R_{lijk}`,
/// `II = Σ ĥ^m_{ij} ĥ^m_{il} R_{lkjk}`, `III = Σ ĥ^m_{ij} ĥ^l_{ik} R_{lmjk}`.
pub fn curvature_sums(hhat: &CubicSymTensor, r: &Rank4) -> [f64; 3] {
    let n = hhat.n();
    let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let a = hhat.get(m, i, j);
                if a == 0.0 {
                    continue;
                }
                for k in 0..n {
                    for l in 0..n {
                        s1 += a * hhat.get(m, l, k) * r.get(l, i, j, k);
                        s2 += a * hhat.get(m, i, l) * r.get(l, k, j, k);
                        s3 += a * hhat.get(l, i, k) * r.get(l, m, j, k);
                    }
                }
            }
        }
    }
    [s1, s2, s3]
}

/// Closed forms of `I` and `II` in terms of `(ĥ, H, c)`.
pub fn curvature_sums_closed_form(hhat: &CubicSymTensor, h_vec: &VectorField1, c: f64) -> [f64; 2] {
    let n = hhat.n();
    let nf = n as f64;
    let k = nf / (nf + 2.0);
    let s = contractions(hhat, h_vec);
    let base = s.hhat_norm2 * s.h_norm2;
    let mut quart1 = 0.0;
    let mut quart2 = 0.0;
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let a = hhat.get(m, i, j);
                for kk in 0..n {
                    for l in 0..n {
                        let b = hhat.get(m, kk, l);
                        let d = hhat.get(m, l, i);
                        for t in 0..n {
                            quart1 += a
                                * b
                                * (hhat.get(t, l, j) * hhat.get(t, i, kk)
                                    - hhat.get(t, l, kk) * hhat.get(t, i, j));
                            quart2 += a * d * hhat.get(t, l, kk) * hhat.get(t, kk, j);
                        }
                    }
                }
            }
        }
    }
    let i_cf = c * s.hhat_norm2 + k * k * base + 2.0 * k * s.cubic + quart1 + 2.0 * k * k * s.quadratic;
    let ii_cf = (nf - 1.0) * c * s.hhat_norm2
        + nf * k * k * base
        + (nf - 2.0) * k * s.cubic
        + (nf - 2.0) * k * k * s.quadratic
        - quart2;
    [i_cf, ii_cf]
}

/// Every algebraic term on the right of the Laplacian formula for `|ĥ|²`
/// other than the gradient terms.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SimonsAlgebra {
    pub c: f64,
    pub hhat_norm2: f64,
    pub h_norm2: f64,
    /// `Σ_{ij} tr((A_i A_j - A_j A_i)²)` with `A_i = (ĥ^i_{jk})`; never positive.
    pub commutator_trace: f64,
    /// `Σ_{ij} N(A_i A_j - A_j A_i)`, the Frobenius form of the same commutators.
    pub commutator_norm: f64,
    /// `Σ_{ij} (tr A_i A_j)²`
    pub trace_square: f64,
    /// `Σ ĥ^m_{ji} ĥ^m_{jt} ĥ^l_{ti} H^l`
    pub cubic: f64,
    /// `Σ ĥ^m_{ij} ĥ^m_{jk} H^i H^k`
    pub quadratic: f64,
}

impl SimonsAlgebra {
    pub fn new(hhat: &CubicSymTensor, h_vec: &VectorField1, c: f64) -> Self {
        let n = hhat.n();
        let mut commutator_trace = 0.0;
        let mut commutator_norm = 0.0;
        let mut trace_square = 0.0;
        for i in 0..n {
            let ai = hhat.slice(i);
            for j in 0..n {
                let aj = hhat.slice(j);
                let ab = matmul(n, ai, aj);
                let ba = matmul(n, aj, ai);
                let comm: Vec<f64> = ab.iter().zip(&ba).map(|(x, y)| x - y).collect();
                let sq = matmul(n, &comm, &comm);
                commutator_trace += (0..n).map(|k| sq[k * n + k]).sum::<f64>();
                commutator_norm += frob2(&comm);
                let tr: f64 = (0..n).map(|k| ab[k * n + k]).sum();
                trace_square += tr * tr;
            }
        }
        // cubic: Σ ĥ^m_{ji} ĥ^m_{jt} M_{ti}
        let mm = weighted_slice(hhat, h_vec);
        let mut cubic = 0.0;
        for m in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let a = hhat.get(m, j, i);
                    for t in 0..n {
                        cubic += a * hhat.get(m, j, t) * mm[t * n + i];
                    }
                }
            }
        }
        let s = contractions(hhat, h_vec);
        SimonsAlgebra {
            c,
            hhat_norm2: s.hhat_norm2,
            h_norm2: s.h_norm2,
            commutator_trace,
            commutator_norm,
            trace_square,
            cubic,
            quadratic: s.quadratic,
        }
    }

    /// `(n+1)c|ĥ|² + n²/(n+2)|ĥ|²|H|² + Σ tr(C²) - Σ(tr A_iA_j)² + n·cubic + n²/(n+2)·quadratic`.
    pub fn curvature_terms(&self, n: usize) -> f64 {
        let nf = n as f64;
        let k = nf * nf / (nf + 2.0);
        (nf + 1.0) * self.c * self.hhat_norm2
            + k * self.hhat_norm2 * self.h_norm2
            + self.commutator_trace
            - self.trace_square
            + nf * self.cubic
            + k * self.quadratic
    }

    /// `(n+1)c|ĥ|² + n²/(n+2)|ĥ|²|H|² - (n+3)/2 |ĥ|⁴`.
    pub fn lower_bound(&self, n: usize) -> f64 {
        let nf = n as f64;
        (nf + 1.0) * self.c * self.hhat_norm2 + nf * nf / (nf + 2.0) * self.hhat_norm2 * self.h_norm2
            - (nf + 3.0) / 2.0 * self.hhat_norm2 * self.hhat_norm2
    }
}

/// Each step of the lower-bound chain for the curvature terms, as
/// `(name, left, right)` with `left >= right` expected.
pub fn simons_bound_steps(hhat: &CubicSymTensor, h_vec: &VectorField1, c: f64) -> Result<Vec<(&'static str, f64, f64)>> {
    let n = hhat.n();
    let nf = n as f64;
    let alg = SimonsAlgebra::new(hhat, h_vec, c);
    let spec = spectral_summary(hhat, h_vec)?;
    let k = nf * nf / (nf + 2.0);
    let base = (nf + 1.0) * c * alg.hhat_norm2 + k * alg.hhat_norm2 * alg.h_norm2;
    let q4 = alg.hhat_norm2 * alg.hhat_norm2;
    let lam_s: f64 = spec.lambdas.iter().zip(&spec.s_istar).map(|(l, s)| l * s).sum();
    let plus_sq: f64 = spec
        .lambdas
        .iter()
        .zip(&spec.s_istar)
        .map(|(l, s)| (l + s) * (l + s))
        .sum();
    let s_sq: f64 = spec.s_istar.iter().map(|s| s * s).sum();

    let terms = alg.curvature_terms(n);
    let step1 = base - 1.5 * q4 + nf * lam_s + k * spec.s_h;
    let step2 = base - 1.5 * q4 + nf / 2.0 * plus_sq - nf / 2.0 * s_sq;
    let step3 = alg.lower_bound(n);
    Ok(vec![
        ("matrix_inequality", terms, step1),
        ("completed_square", step1, step2),
        ("slice_norm_sum", step2, step3),
    ])
}

/// The unasserted intermediate bound written with `(|H| λ_i + S_i)²`,
/// returned as `(left, right)` for diagnostics.
pub fn scaled_square_diagnostic(hhat: &CubicSymTensor, h_vec: &VectorField1, c: f64) -> Result<(f64, f64)> {
    let n = hhat.n();
    let nf = n as f64;
    let alg = SimonsAlgebra::new(hhat, h_vec, c);
    let spec = spectral_summary(hhat, h_vec)?;
    let hn = alg.h_norm2.sqrt();
    let sq: f64 = spec
        .lambdas
        .iter()
        .zip(&spec.s_istar)
        .map(|(l, s)| (hn * l + s) * (hn * l + s))
        .sum();
    Ok((alg.curvature_terms(n), alg.lower_bound(n) + nf / 2.0 * sq))
}

pub fn random_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> VectorField1 {
    VectorField1::new((0..n).map(|_| rng.sample(StandardNormal)).collect())
}

/// Tri-symmetrized i.i.d. standard normals.
pub fn random_cubic<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CubicSymTensor {
    let raw: Vec<f64> = (0..n * n * n).map(|_| rng.sample(StandardNormal)).collect();
    CubicSymTensor::symmetrized(n, &raw)
}

/// [`random_cubic`] with its trace projected out through [`c_tensor`].
pub fn random_tracefree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CubicSymTensor {
    let a = random_cubic(n, rng);
    let tr = a.trace().scaled(1.0 / n as f64);
    a.sub(&c_tensor(&tr))
}

pub fn random_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = rng.sample(StandardNormal);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    m
}

/// Gram–Schmidt on a Gaussian matrix; rows are orthonormal.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut q: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let d: f64 = (0..n).map(|k| q[i * n + k] * q[j * n + k]).sum();
                for k in 0..n {
                    q[i * n + k] -= d * q[j * n + k];
                }
            }
            let norm: f64 = (0..n).map(|k| q[i * n + k].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-6 {
                ok = false;
                break;
            }
            for k in 0..n {
                q[i * n + k] /= norm;
            }
        }
        if ok {
            return q;
        }
    }
}

//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] is a polynomial in `nvars` small displacements `δ_1..δ_n`,
//! truncated at total degree `order`. Arithmetic on jets is arithmetic on
//! Taylor expansions, so evaluating a smooth map on variable jets yields all
//! of its partial derivatives up to the truncation order, exactly up to
//! floating point rounding.
//!
//! Monomials are stored in graded order: every monomial of degree `d` comes
//! before every monomial of degree `d + 1`. A jet of order `k` therefore only
//! stores the leading `count(k)` coefficients, and truncating a jet is a
//! slice operation.
//!
//! ```
//! use whitney::jet::{Jet, JetSpace};
//!
//! let space = JetSpace::get(2, 3);
//! let x = Jet::variable(space, 3, 0, 0.5);
//! let y = Jet::variable(space, 3, 1, -1.0);
//! let f = &(&x * &x) * &y + x.sin();
//! // ∂f/∂x = 2xy + cos x
//! assert!((f.derivative(&[0]) - (2.0 * 0.5 * -1.0 + 0.5f64.cos())).abs() < 1e-15);
//! // ∂³f/∂x²∂y = 2
//! assert!((f.derivative(&[0, 0, 1]) - 2.0).abs() < 1e-15);
//! ```

use std::collections::HashMap;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::{Mutex, OnceLock};

/// Multi-index bookkeeping shared by every jet with the same number of
/// variables and maximal order.
#[derive(Debug)]
pub struct JetSpace {
    nvars: usize,
    max_order: usize,
    exponents: Vec<Vec<u8>>,
    degree: Vec<usize>,
    /// `count[d]` = number of monomials of degree `<= d`.
    count: Vec<usize>,
    /// `(i, j, k)` with `exp[i] + exp[j] = exp[k]`, sorted by degree of `k`.
    mul: Vec<(u32, u32, u32)>,
    /// `mul_end[d]` = number of product entries whose result has degree `<= d`.
    mul_end: Vec<usize>,
    /// `raise[k * nvars + a]` = index of `exp[k] + e_a`, or `u32::MAX`.
    raise: Vec<u32>,
    index: HashMap<Vec<u8>, usize>,
}

static SPACES: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> = OnceLock::new();

impl JetSpace {
    /// Returns the shared space for `nvars` variables up to `max_order`.
    ///
    /// Spaces are built once and live for the rest of the process; there are
    /// only a handful of distinct `(nvars, max_order)` pairs in practice.
    pub fn get(nvars: usize, max_order: usize) -> &'static JetSpace {
        let cache = SPACES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        *guard
            .entry((nvars, max_order))
            .or_insert_with(|| Box::leak(Box::new(JetSpace::build(nvars, max_order))))
    }

    fn build(nvars: usize, max_order: usize) -> JetSpace {
        let mut exponents: Vec<Vec<u8>> = Vec::new();
        let mut count = Vec::with_capacity(max_order + 1);
        for d in 0..=max_order {
            let mut cur = vec![0u8; nvars];
            compositions(d, 0, &mut cur, &mut exponents);
            count.push(exponents.len());
        }
        let degree: Vec<usize> = exponents
            .iter()
            .map(|e| e.iter().map(|&x| x as usize).sum())
            .collect();
        let index: HashMap<Vec<u8>, usize> = exponents
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();

        let mut mul = Vec::new();
        for (i, ei) in exponents.iter().enumerate() {
            for (j, ej) in exponents.iter().enumerate() {
                if degree[i] + degree[j] > max_order {
                    continue;
                }
                let sum: Vec<u8> = ei.iter().zip(ej).map(|(a, b)| a + b).collect();
                let k = index[&sum];
                mul.push((i as u32, j as u32, k as u32));
            }
        }
        mul.sort_by_key(|&(_, _, k)| degree[k as usize]);
        let mul_end = (0..=max_order)
            .map(|d| mul.partition_point(|&(_, _, k)| degree[k as usize] <= d))
            .collect();

        let mut raise = vec![u32::MAX; exponents.len() * nvars];
        for (k, e) in exponents.iter().enumerate() {
            if degree[k] == max_order {
                continue;
            }
            for a in 0..nvars {
                let mut up = e.clone();
                up[a] += 1;
                raise[k * nvars + a] = index[&up] as u32;
            }
        }

        JetSpace {
            nvars,
            max_order,
            exponents,
            degree,
            count,
            mul,
            mul_end,
            raise,
            index,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of monomials of total degree `<= order`.
    pub fn count(&self, order: usize) -> usize {
        self.count[order]
    }

    pub fn exponent(&self, k: usize) -> &[u8] {
        &self.exponents[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.degree[k]
    }

    /// Index of the monomial with the given exponent vector.
    pub fn index_of(&self, exponent: &[u8]) -> Option<usize> {
        self.index.get(exponent).copied()
    }

    /// Index of the monomial `∂^α` where `α` is given as a list of variable
    /// indices (with repetition), e.g. `[0, 0, 1]` for `∂²/∂u_0² ∂/∂u_1`.
    pub fn index_of_list(&self, vars: &[usize]) -> Option<usize> {
        let mut e = vec![0u8; self.nvars];
        for &a in vars {
            if a >= self.nvars {
                return None;
            }
            e[a] += 1;
        }
        self.index_of(&e)
    }

    /// `α!` for the monomial at index `k`.
    pub fn factorial(&self, k: usize) -> f64 {
        self.exponents[k]
            .iter()
            .map(|&e| (1..=e as u64).product::<u64>() as f64)
            .product()
    }
}

fn compositions(rest: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    let n = cur.len();
    if n == 0 {
        if rest == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = rest as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for e in (0..=rest).rev() {
        cur[pos] = e as u8;
        compositions(rest - e, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// A truncated Taylor polynomial about a base point.
#[derive(Clone, Debug)]
pub struct Jet {
    space: &'static JetSpace,
    order: usize,
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn constant(space: &'static JetSpace, order: usize, value: f64) -> Jet {
        assert!(order <= space.max_order, "jet order exceeds space");
        let mut coeffs = vec![0.0; space.count(order)];
        coeffs[0] = value;
        Jet {
            space,
            order,
            coeffs,
        }
    }

    /// The coordinate function `u_var` expanded about `value`.
    pub fn variable(space: &'static JetSpace, order: usize, var: usize, value: f64) -> Jet {
        let mut j = Jet::constant(space, order, value);
        if order >= 1 {
            j.coeffs[1 + var] = 1.0;
        }
        j
    }

    pub fn from_coeffs(space: &'static JetSpace, order: usize, coeffs: Vec<f64>) -> Jet {
        assert_eq!(coeffs.len(), space.count(order));
        Jet {
            space,
            order,
            coeffs,
        }
    }

    pub fn space(&self) -> &'static JetSpace {
        self.space
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Value at the base point.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Partial derivative at the base point; `vars` lists the differentiation
    /// variables with repetition. Returns 0 beyond the truncation order.
    pub fn derivative(&self, vars: &[usize]) -> f64 {
        if vars.len() > self.order {
            return 0.0;
        }
        match self.space.index_of_list(vars) {
            Some(k) => self.coeffs[k] * self.space.factorial(k),
            None => 0.0,
        }
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order);
        Jet {
            space: self.space,
            order,
            coeffs: self.coeffs[..self.space.count(order)].to_vec(),
        }
    }

    /// `∂/∂u_var` as a jet of one lower order.
    pub fn partial(&self, var: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let space = self.space;
        let order = self.order - 1;
        let n = space.nvars;
        let coeffs = (0..space.count(order))
            .map(|k| {
                let up = space.raise[k * n + var] as usize;
                (space.exponents[k][var] as f64 + 1.0) * self.coeffs[up]
            })
            .collect();
        Jet {
            space,
            order,
            coeffs,
        }
    }

    /// Evaluates `Σ_k taylor[k] (self - self(0))^k`, i.e. the composition of
    /// a univariate function (given by its normalised Taylor coefficients at
    /// `self.value()`) with this jet.
    pub fn compose(&self, taylor: &[f64]) -> Jet {
        debug_assert!(taylor.len() > self.order);
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let mut acc = Jet::constant(self.space, self.order, taylor[self.order]);
        for k in (0..self.order).rev() {
            acc = &acc * &delta;
            acc.coeffs[0] += taylor[k];
        }
        acc
    }

    pub fn recip(&self) -> Jet {
        let x = self.value();
        let mut t = Vec::with_capacity(self.order + 1);
        let mut p = 1.0 / x;
        for _ in 0..=self.order {
            t.push(p);
            p *= -1.0 / x;
        }
        self.compose(&t)
    }

    pub fn sqrt(&self) -> Jet {
        let x = self.value();
        // binom(1/2, k) x^(1/2 - k)
        let mut t = Vec::with_capacity(self.order + 1);
        let mut coef = 1.0;
        let mut pw = x.sqrt();
        for k in 0..=self.order {
            t.push(coef * pw);
            coef *= (0.5 - k as f64) / (k as f64 + 1.0);
            pw /= x;
        }
        self.compose(&t)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose(&cyclic_taylor([s, c, -s, -c], self.order))
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose(&cyclic_taylor([c, -s, -c, s], self.order))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&cyclic_taylor([e, e, e, e], self.order))
    }

    pub fn square(&self) -> Jet {
        self * self
    }

    pub fn powi(&self, k: u32) -> Jet {
        let mut acc = Jet::constant(self.space, self.order, 1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            space: self.space,
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self += a * b`, truncated to the common order.
    pub fn add_product(&mut self, a: &Jet, b: &Jet) {
        let order = self.order.min(a.order).min(b.order);
        if order < self.order {
            self.coeffs.truncate(self.space.count(order));
            self.order = order;
        }
        for &(i, j, k) in &self.space.mul[..self.space.mul_end[order]] {
            self.coeffs[k as usize] += a.coeffs[i as usize] * b.coeffs[j as usize];
        }
    }
}

fn cyclic_taylor(derivs: [f64; 4], order: usize) -> Vec<f64> {
    let mut fact = 1.0;
    (0..=order)
        .map(|k| {
            if k > 0 {
                fact *= k as f64;
            }
            derivs[k % 4] / fact
        })
        .collect()
}

fn zip_with(a: &Jet, b: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
    debug_assert!(std::ptr::eq(a.space, b.space), "jets from different spaces");
    let order = a.order.min(b.order);
    let len = a.space.count(order);
    Jet {
        space: a.space,
        order,
        coeffs: (0..len).map(|k| f(a.coeffs[k], b.coeffs[k])).collect(),
    }
}

impl Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        zip_with(self, rhs, |a, b| a + b)
    }
}

impl Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        zip_with(self, rhs, |a, b| a - b)
    }
}

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let mut out = Jet::constant(self.space, order, 0.0);
        out.add_product(self, rhs);
        out
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

macro_rules! owned_binops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet { (&self).$m(&rhs) }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet { (&self).$m(rhs) }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet { self.$m(&rhs) }
        }
    )*};
}
owned_binops!(Add add, Sub sub, Mul mul);

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += rhs;
        out
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.coeffs[0] -= rhs;
        self
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        let order = self.order.min(rhs.order);
        if order < self.order {
            self.coeffs.truncate(self.space.count(order));
            self.order = order;
        }
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        let order = self.order.min(rhs.order);
        if order < self.order {
            self.coeffs.truncate(self.space.count(order));
            self.order = order;
        }
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }
}

/// Euclidean inner product of two ambient vectors of jets.
pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    let order = a
        .iter()
        .chain(b)
        .map(Jet::order)
        .min()
        .expect("empty vectors");
    let mut acc = Jet::constant(a[0].space, order, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc.add_product(x, y);
    }
    acc
}

/// The potential `ψ` with `ψ(0) = 0` and `∂_a ψ = α_a`, obtained by radial
/// integration of the truncated polynomials. Exact when `α` is closed; the
/// result has one order more than the inputs.
pub fn radial_potential(alpha: &[Jet]) -> Jet {
    let space = alpha[0].space;
    let order = alpha.iter().map(Jet::order).min().expect("empty form") + 1;
    assert!(order <= space.max_order, "potential exceeds the jet space");
    let n = space.nvars;
    let mut coeffs = vec![0.0; space.count(order)];
    for (a, form) in alpha.iter().enumerate() {
        for k in 0..space.count(order - 1) {
            let up = space.raise[k * n + a] as usize;
            coeffs[up] += form.coeffs[k] / (space.degree[k] as f64 + 1.0);
        }
    }
    Jet {
        space,
        order,
        coeffs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts_are_binomial() {
        let s = JetSpace::get(3, 4);
        // C(3 + d, d)
        assert_eq!(s.count(0), 1);
        assert_eq!(s.count(1), 4);
        assert_eq!(s.count(2), 10);
        assert_eq!(s.count(4), 35);
        for k in 0..s.count(4) {
            assert_eq!(s.index_of(s.exponent(k)), Some(k));
        }
    }

    #[test]
    fn product_rule_matches_hand_expansion() {
        let s = JetSpace::get(2, 4);
        let x = Jet::variable(s, 4, 0, 2.0);
        let y = Jet::variable(s, 4, 1, 3.0);
        // f = x^2 y^2
        let f = &x.square() * &y.square();
        assert_eq!(f.value(), 36.0);
        assert_eq!(f.derivative(&[0]), 2.0 * 2.0 * 9.0);
        assert_eq!(f.derivative(&[0, 1]), 4.0 * 2.0 * 3.0);
        assert_eq!(f.derivative(&[0, 0, 1, 1]), 4.0);
        assert_eq!(f.derivative(&[1, 0, 1, 0]), 4.0);
    }

    #[test]
    fn univariate_functions_match_closed_forms() {
        let s = JetSpace::get(1, 4);
        let x0 = 0.7;
        let x = Jet::variable(s, 4, 0, x0);
        let r = x.recip();
        // d^k/dx^k 1/x = (-1)^k k! / x^(k+1)
        for k in 0..=4usize {
            let vars = vec![0; k];
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            let expect = (-1f64).powi(k as i32) * fact / x0.powi(k as i32 + 1);
            assert!((r.derivative(&vars) - expect).abs() < 1e-11 * expect.abs().max(1.0));
        }
        let q = x.sqrt();
        assert!((q.derivative(&[0]) - 0.5 / x0.sqrt()).abs() < 1e-14);
        assert!((q.derivative(&[0, 0]) + 0.25 * x0.powf(-1.5)).abs() < 1e-13);
        let c = x.cos();
        assert!((c.derivative(&[0, 0, 0]) - x0.sin()).abs() < 1e-14);
        let e = x.exp();
        assert!((e.derivative(&[0, 0, 0, 0]) - x0.exp()).abs() < 1e-13);
    }

    #[test]
    fn partial_lowers_order_and_commutes() {
        let s = JetSpace::get(2, 4);
        let x = Jet::variable(s, 4, 0, 0.3);
        let y = Jet::variable(s, 4, 1, -0.4);
        let f = (&x * &y).sin() + (&x + &y).exp();
        let fxy = f.partial(0).partial(1);
        let fyx = f.partial(1).partial(0);
        assert_eq!(fxy.order(), 2);
        for (a, b) in fxy.coeffs().iter().zip(fyx.coeffs()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((fxy.value() - f.derivative(&[0, 1])).abs() < 1e-14);
        assert!((fxy.derivative(&[0, 1]) - f.derivative(&[0, 0, 1, 1])).abs() < 1e-13);
    }

    #[test]
    fn mixed_order_arithmetic_truncates() {
        let s = JetSpace::get(2, 3);
        let x = Jet::variable(s, 3, 0, 1.0);
        let y = Jet::variable(s, 1, 1, 1.0);
        assert_eq!((&x * &y).order(), 1);
        assert_eq!((&x + &y).order(), 1);
    }

    #[test]
    fn radial_potential_recovers_exact_differential() {
        let space = JetSpace::get(2, 4);
        let x = Jet::variable(space, 4, 0, 0.3);
        let y = Jet::variable(space, 4, 1, -0.2);
        let f = &(&x * &y).sin() + &x.square();
        let df = [f.partial(0), f.partial(1)];
        let psi = radial_potential(&df);
        assert_eq!(psi.order(), 4);
        assert_eq!(psi.value(), 0.0);
        for k in 1..space.count(4) {
            assert!((psi.coeffs()[k] - f.coeffs()[k]).abs() < 1e-14);
        }
    }
}

//! Truncated multivariate polynomials ("jets") in `x¹…x^m` of total degree
//! at most `N`, and square matrices of them.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

/// Monomial basis of degree `≤ N` in `m` variables with a product table.
#[derive(Debug)]
pub struct JetSpace {
    m: usize,
    degree: usize,
    monomials: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    products: Vec<(u32, u32, u32)>,
}

impl JetSpace {
    /// Build the space for `m` variables truncated at `degree`.
    pub fn new(m: usize, degree: usize) -> Arc<Self> {
        let mut monomials = Vec::new();
        for d in 0..=degree {
            let mut cur = vec![0u8; m];
            enumerate(m, d, 0, &mut cur, &mut monomials);
        }
        let index: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        let deg = |e: &Vec<u8>| e.iter().map(|&v| v as usize).sum::<usize>();
        let mut products = Vec::new();
        for (a, ea) in monomials.iter().enumerate() {
            for (b, eb) in monomials.iter().enumerate() {
                if deg(ea) + deg(eb) > degree {
                    continue;
                }
                let sum: Vec<u8> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                products.push((a as u32, b as u32, index[&sum] as u32));
            }
        }
        Arc::new(Self {
            m,
            degree,
            monomials,
            index,
            products,
        })
    }

    /// Number of variables.
    pub fn vars(&self) -> usize {
        self.m
    }

    /// Truncation degree `N`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of retained monomials.
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    /// True when the basis is empty (never for a constructed space).
    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// Exponent vector of monomial `i`.
    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.monomials[i]
    }

    /// Total degree of monomial `i`.
    pub fn monomial_degree(&self, i: usize) -> usize {
        self.monomials[i].iter().map(|&v| v as usize).sum()
    }

    /// Index of the monomial `x^{v_1} x^{v_2} …` given by 0-based variable labels.
    pub fn index_of_vars(&self, vars: &[usize]) -> Option<usize> {
        let mut e = vec![0u8; self.m];
        for &v in vars {
            e[v] += 1;
        }
        self.index.get(&e).copied()
    }
}

fn enumerate(m: usize, d: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos == m - 1 {
        cur[pos] = d as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=d).rev() {
        cur[pos] = k as u8;
        enumerate(m, d - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// A truncated polynomial.
#[derive(Debug, Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
}

impl Jet {
    /// Zero jet.
    pub fn zero(space: &Arc<JetSpace>) -> Self {
        Self {
            space: Arc::clone(space),
            coeffs: vec![0.0; space.len()],
        }
    }

    /// Constant jet.
    pub fn constant(space: &Arc<JetSpace>, c: f64) -> Self {
        let mut j = Self::zero(space);
        j.coeffs[0] = c;
        j
    }

    /// The coordinate function `x^i` (0-based).
    pub fn var(space: &Arc<JetSpace>, i: usize) -> Self {
        let mut j = Self::zero(space);
        if let Some(k) = space.index_of_vars(&[i]) {
            j.coeffs[k] = 1.0;
        }
        j
    }

    /// Underlying monomial space.
    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    /// Coefficient vector in the basis order of the space.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Add `c` to the coefficient of the monomial named by `vars`.
    /// Monomials beyond the truncation degree are dropped.
    pub fn add_term(&mut self, vars: &[usize], c: f64) {
        if let Some(k) = self.space.index_of_vars(vars) {
            self.coeffs[k] += c;
        }
    }

    /// Coefficient of the monomial named by `vars`.
    pub fn coeff(&self, vars: &[usize]) -> f64 {
        self.space
            .index_of_vars(vars)
            .map(|k| self.coeffs[k])
            .unwrap_or(0.0)
    }

    /// Homogeneous part of degree `d`.
    pub fn degree_part(&self, d: usize) -> Self {
        let mut out = Self::zero(&self.space);
        for (k, c) in self.coeffs.iter().enumerate() {
            if self.space.monomial_degree(k) == d {
                out.coeffs[k] = *c;
            }
        }
        out
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Multiply by a scalar.
    pub fn scale(&self, s: f64) -> Self {
        Self {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Evaluate at a point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let mut t = *c;
            for (xi, &e) in x.iter().zip(self.space.exponents(k)) {
                t *= xi.powi(e as i32);
            }
            acc += t;
        }
        acc
    }

    /// Multiplicative inverse of a jet with nonzero constant term.
    pub fn recip(&self) -> Option<Self> {
        let c0 = self.coeffs[0];
        if c0 == 0.0 {
            return None;
        }
        let mut u = self.scale(1.0 / c0);
        u.coeffs[0] = 0.0;
        let neg_u = -&u;
        let mut term = Jet::constant(&self.space, 1.0);
        let mut acc = term.clone();
        for _ in 0..self.space.degree() {
            term = &term * &neg_u;
            acc = &acc + &term;
        }
        Some(acc.scale(1.0 / c0))
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.coeffs == other.coeffs
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        Jet {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        Jet {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<'a> Neg for &'a Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let mut out = vec![0.0; self.coeffs.len()];
        for &(a, b, c) in &self.space.products {
            let x = self.coeffs[a as usize];
            if x == 0.0 {
                continue;
            }
            out[c as usize] += x * rhs.coeffs[b as usize];
        }
        Jet {
            space: Arc::clone(&self.space),
            coeffs: out,
        }
    }
}

/// Square matrix of jets, row-major.
#[derive(Debug, Clone)]
pub struct JetMatrix {
    n: usize,
    entries: Vec<Jet>,
}

impl JetMatrix {
    /// Zero matrix.
    pub fn zeros(space: &Arc<JetSpace>, n: usize) -> Self {
        Self {
            n,
            entries: vec![Jet::zero(space); n * n],
        }
    }

    /// Identity matrix.
    pub fn identity(space: &Arc<JetSpace>, n: usize) -> Self {
        let mut out = Self::zeros(space, n);
        for i in 0..n {
            out.entries[i * n + i] = Jet::constant(space, 1.0);
        }
        out
    }

    /// Size `n`.
    pub fn size(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> &Jet {
        &self.entries[i * self.n + j]
    }

    /// Mutable entry `(i, j)`.
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut Jet {
        &mut self.entries[i * self.n + j]
    }

    /// Matrix product.
    pub fn mul(&self, rhs: &Self) -> Self {
        let n = self.n;
        let space = Arc::clone(self.entries[0].space());
        let mut out = Self::zeros(&space, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = Jet::zero(&space);
                for k in 0..n {
                    acc = &acc + &(self.get(i, k) * rhs.get(k, j));
                }
                out.entries[i * n + j] = acc;
            }
        }
        out
    }

    /// Entrywise difference.
    pub fn sub(&self, rhs: &Self) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a - b).collect(),
        }
    }

    /// Largest coefficient modulus over all entries.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, j| a.max(j.max_abs()))
    }

    /// Largest `|a_ij − a_ji|` coefficient.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).max_abs());
            }
        }
        worst
    }

    /// Trace.
    pub fn trace(&self) -> Jet {
        let space = Arc::clone(self.entries[0].space());
        let mut acc = Jet::zero(&space);
        for i in 0..self.n {
            acc = &acc + self.get(i, i);
        }
        acc
    }

    /// Determinant by Gaussian elimination in the jet ring.
    ///
    /// Pivots must have nonzero constant terms, which holds for perturbations
    /// of the identity.
    pub fn det(&self) -> Option<Jet> {
        let n = self.n;
        let mut a = self.entries.clone();
        let space = Arc::clone(a[0].space());
        let mut det = Jet::constant(&space, 1.0);
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| {
                    a[p * n + col].coeffs[0]
                        .abs()
                        .total_cmp(&a[q * n + col].coeffs[0].abs())
                })
                .unwrap();
            if a[piv * n + col].coeffs[0] == 0.0 {
                return None;
            }
            if piv != col {
                for k in 0..n {
                    a.swap(piv * n + k, col * n + k);
                }
                det = -&det;
            }
            let p = a[col * n + col].clone();
            det = &det * &p;
            let inv = p.recip()?;
            for row in (col + 1)..n {
                let f = &a[row * n + col] * &inv;
                for k in col..n {
                    let t = &f * &a[col * n + k];
                    a[row * n + k] = &a[row * n + k] - &t;
                }
            }
        }
        Some(det)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        let s = JetSpace::new(4, 4);
        assert_eq!(s.len(), 70);
        let s = JetSpace::new(6, 4);
        assert_eq!(s.len(), 210);
    }

    #[test]
    fn truncation_drops_high_degree() {
        let s = JetSpace::new(2, 2);
        let x = Jet::var(&s, 0);
        let y = Jet::var(&s, 1);
        let xy = &x * &y;
        assert_eq!(xy.coeff(&[0, 1]), 1.0);
        let cubic = &xy * &x;
        assert_eq!(cubic.max_abs(), 0.0);
    }

    #[test]
    fn reciprocal_of_one_plus_x() {
        let s = JetSpace::new(1, 4);
        let one = Jet::constant(&s, 1.0);
        let x = Jet::var(&s, 0);
        let r = (&one + &x).recip().unwrap();
        for k in 0..=4usize {
            let vars = vec![0; k];
            let expect = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(r.coeff(&vars), expect);
        }
        assert!(Jet::zero(&s).recip().is_none());
    }

    #[test]
    fn determinant_of_two_by_two() {
        let s = JetSpace::new(2, 4);
        let x = Jet::var(&s, 0);
        let y = Jet::var(&s, 1);
        let one = Jet::constant(&s, 1.0);
        let mut a = JetMatrix::identity(&s, 2);
        *a.get_mut(0, 0) = &one + &(&x * &x);
        *a.get_mut(0, 1) = &x * &y;
        *a.get_mut(1, 0) = &x * &y;
        *a.get_mut(1, 1) = &one + &(&y * &y);
        let d = a.det().unwrap();
        let direct = &(a.get(0, 0) * a.get(1, 1)) - &(a.get(0, 1) * a.get(1, 0));
        assert!((&d - &direct).max_abs() < 1e-15);
    }

    #[test]
    fn eval_matches_coefficients() {
        let s = JetSpace::new(3, 3);
        let mut j = Jet::zero(&s);
        j.add_term(&[0, 1], 2.0);
        j.add_term(&[2, 2, 2], -1.0);
        j.add_term(&[], 0.5);
        let v = j.eval(&[1.5, -2.0, 0.5]);
        assert!((v - (0.5 + 2.0 * 1.5 * -2.0 - 0.125)).abs() < 1e-15);
    }
}

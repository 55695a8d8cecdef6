//! Radial integrals, sphere quadrature, moment tables and the ε-asymptotic
//! audits of the transplanted test spinor: residual norms (A-terms), energy
//! pieces (J-terms) and the Rayleigh quotient.
//!
//! All audits work in normal coordinates on the ball `|x| ≤ 2δ` with the flat
//! measure `dx`. Integrands are written in the scaled radius `s = |x|/ε` and a
//! direction `ω`, so every spinor that occurs is a real combination of a fixed
//! set of fourteen direction-dependent spinors.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::clifford::{build_rep, CliffordRep, SparseGammas, Spinor, C64};
use crate::curvature::{
    b_coefficients, j6_leading, make_cnc_jets_with_first, random_weyl, theta_lambda_coeffs, CurvatureJets, MomentTable,
    RiemannTensor, ThetaCoeffs,
};
use crate::error::{Error, Result};
use crate::spinor_fields::{critical_exponent, cutoff, cutoff_derivative, find_psi0, Psi0Result, QuarticCoeffs};
use crate::util::{gauss_legendre, linear_fit};

// ---------------------------------------------------------------------------
// One-dimensional quadrature

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WK[7] * fc;
    let mut g = GK_WG[3] * fc;
    for i in 0..7 {
        let d = h * GK_X[i];
        let s = f(c - d) + f(c + d);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> f64 {
    let (val, err) = whole;
    if err <= tol || depth == 0 || (b - a).abs() < 1e-15 * (a.abs() + b.abs()) {
        return val;
    }
    let c = 0.5 * (a + b);
    let left = gk15(f, a, c);
    let right = gk15(f, c, b);
    adapt(f, a, c, left, 0.5 * tol, depth - 1) + adapt(f, c, b, right, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod (7/15) integral of `f` over `[a, b]` to relative tolerance `rel`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let first = gk15(&f, a, b);
    let mut probe = 0.0;
    for k in 0..8 {
        let lo = a + (b - a) * k as f64 / 8.0;
        probe += gk15(&f, lo, lo + (b - a) / 8.0).0.abs();
    }
    let tol = rel * probe.max(first.0.abs()).max(f64::MIN_POSITIVE);
    adapt(&f, a, b, first, tol, 60)
}

/// Integral of `f` over `[a, ∞)` through the map `x = a + t/(1−t)`.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, a: f64, rel: f64) -> f64 {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t;
        f(a + t / u) / (u * u)
    };
    integrate(g, 0.0, 1.0, rel)
}

/// Integral over `[a, b]` where `b` may be `+∞`.
fn integrate_range(f: impl Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    if b.is_infinite() {
        integrate_to_infinity(f, a, rel)
    } else {
        integrate(f, a, b, rel)
    }
}

/// `I(m, R) = ∫₀^R r^{m−1}/(1+r²)^m dr`, with `R = ∞` allowed.
pub fn radial_i(m: usize, upper: f64) -> Result<f64> {
    if m < 1 {
        return Err(Error::InvalidDimension { got: m, reason: "radial integral needs m >= 1" });
    }
    if !(upper >= 0.0) {
        return Err(Error::InvalidParameter("upper limit must be nonnegative".into()));
    }
    let mf = m as f64;
    let f = |r: f64| r.powf(mf - 1.0) / (1.0 + r * r).powf(mf);
    let split = upper.min(1.0);
    let head = integrate(f, 0.0, split, 1e-13);
    Ok(head + if upper > 1.0 { integrate_range(f, 1.0, upper, 1e-13) } else { 0.0 })
}

/// Volume `ω_k` of the unit sphere `S^k ⊂ ℝ^{k+1}`.
pub fn sphere_volume(k: usize) -> f64 {
    let a = (k as f64 + 1.0) / 2.0;
    2.0 * PI.powf(a) / gamma(a)
}

/// Relative error of `ω_m = 2^m ω_{m−1} I(m, ∞)`.
pub fn volume_identity_residual(m: usize) -> Result<f64> {
    let lhs = sphere_volume(m);
    let rhs = 2f64.powi(m as i32) * sphere_volume(m - 1) * radial_i(m, f64::INFINITY)?;
    Ok((lhs - rhs).abs() / lhs)
}

// ---------------------------------------------------------------------------
// Sphere quadrature

fn gegenbauer_rule(n: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf * (kf + 2.0 * a) / ((2.0 * kf + 2.0 * a + 1.0) * (2.0 * kf + 2.0 * a - 1.0));
        j[(k, k - 1)] = b.sqrt();
        j[(k - 1, k)] = b.sqrt();
    }
    let mu0 = PI.sqrt() * gamma(a + 1.0) / gamma(a + 1.5);
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    pairs.into_iter().unzip()
}

/// Product rule on `S^{m−1}`: Gauss–Gegenbauer in each polar angle and an
/// equispaced azimuth, exact for polynomials of degree `≤ min(2·polar − 1, azimuth − 1)`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    m: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereRule {
    /// Build with `polar` nodes per polar angle and `azimuth` nodes in the last angle.
    pub fn new(m: usize, polar: usize, azimuth: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidDimension { got: m, reason: "sphere rule needs m >= 2" });
        }
        if polar == 0 || azimuth == 0 {
            return Err(Error::InvalidParameter("node counts must be positive".into()));
        }
        let rules: Vec<(Vec<f64>, Vec<f64>)> = (1..=m - 2)
            .map(|k| gegenbauer_rule(polar, (m - k - 2) as f64 / 2.0))
            .collect();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let count = polar.pow((m - 2) as u32);
        let mut digits = vec![0usize; m - 2];
        for c in 0..count {
            let mut rem = c;
            for d in digits.iter_mut() {
                *d = rem % polar;
                rem /= polar;
            }
            for q in 0..azimuth {
                let phi = 2.0 * PI * (q as f64 + 0.5) / azimuth as f64;
                let mut w = 2.0 * PI / azimuth as f64;
                let mut rad = 1.0;
                for (k, &d) in digits.iter().enumerate() {
                    let t = rules[k].0[d];
                    w *= rules[k].1[d];
                    nodes.push(rad * t);
                    rad *= (1.0 - t * t).max(0.0).sqrt();
                }
                nodes.push(rad * phi.cos());
                nodes.push(rad * phi.sin());
                weights.push(w);
            }
        }
        Ok(Self { m, nodes, weights })
    }

    /// Default rule used by the audits: five polar and ten azimuthal nodes (degree 9).
    pub fn standard(m: usize) -> Result<Self> {
        Self::new(m, 5, 10)
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// Whether the rule is empty.
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Node `i`.
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.m..(i + 1) * self.m]
    }

    /// Weight `i`.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// `∫_{S^{m−1}} f dω`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.node(i))).sum()
    }
}

/// Moments `M_αβkl = ∫_{|x|≤ρ} x^αx^βx^kx^l (1+|x|²)^{−m} dx`; requires
/// `m ≥ 5` when `ρ = ∞`.
pub fn moment_table(m: usize, rho: f64) -> Result<MomentTable> {
    if m < 2 {
        return Err(Error::InvalidDimension { got: m, reason: "moment table needs m >= 2" });
    }
    if rho.is_infinite() && m <= 4 {
        return Err(Error::InvalidParameter(format!("moments diverge on all of R^{m}; use a finite radius")));
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter("radius must be nonnegative".into()));
    }
    let rule = SphereRule::standard(m)?;
    let a4 = rule.integrate(|w| w[0].powi(4));
    let a22 = rule.integrate(|w| w[0] * w[0] * w[1] * w[1]);
    let mf = m as f64;
    let f = |r: f64| r.powf(mf + 3.0) / (1.0 + r * r).powf(mf);
    let rad = integrate(f, 0.0, rho.min(1.0), 1e-13) + if rho > 1.0 { integrate_range(f, 1.0, rho, 1e-13) } else { 0.0 };
    Ok(MomentTable { m, rho, m4: a4 * rad, m22: a22 * rad })
}

// ---------------------------------------------------------------------------
// Order fits

/// Least-squares slope of `log value` against `log ε`.
#[derive(Debug, Clone, Serialize)]
pub struct OrderFit {
    /// Grid, strictly decreasing.
    pub eps: Vec<f64>,
    /// Sampled values.
    pub values: Vec<f64>,
    /// Fitted exponent.
    pub slope: f64,
    /// Fitted `log` prefactor.
    pub intercept: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

/// Fit `value ≈ C ε^slope`.
pub fn order_fit(eps: &[f64], values: &[f64]) -> Result<OrderFit> {
    if eps.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: eps.len(), got: values.len() });
    }
    if eps.len() < 4 {
        return Err(Error::InvalidParameter("order fit needs at least 4 points".into()));
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Degenerate("order fit needs positive finite samples".into()));
    }
    let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (slope, intercept, residual) = linear_fit(&lx, &ly);
    Ok(OrderFit { eps: eps.to_vec(), values: values.to_vec(), slope, intercept, residual })
}

/// `n` geometric points from `hi` down to `lo`.
pub fn eps_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(Error::InvalidParameter("grid needs 0 < lo < hi and n >= 2".into()));
    }
    Ok((0..n).map(|k| hi * (lo / hi).powf(k as f64 / (n - 1) as f64)).collect())
}

// ---------------------------------------------------------------------------
// Homogeneous polynomials in the direction ω

#[derive(Debug, Clone)]
struct Monomials {
    m: usize,
    parent: Vec<Vec<usize>>,
    last: Vec<Vec<usize>>,
    index: Vec<HashMap<Vec<usize>, usize>>,
}

impl Monomials {
    fn new(m: usize, max_deg: usize) -> Self {
        let mut parent = vec![vec![0usize]];
        let mut last = vec![vec![0usize]];
        let mut index = vec![HashMap::from([(Vec::new(), 0usize)])];
        let mut tuples: Vec<Vec<usize>> = vec![Vec::new()];
        for _d in 1..=max_deg {
            let mut next = Vec::new();
            let (mut par, mut las, mut idx) = (Vec::new(), Vec::new(), HashMap::new());
            for (pi, t) in tuples.iter().enumerate() {
                let from = t.last().copied().unwrap_or(0);
                for v in from..m {
                    let mut u = t.clone();
                    u.push(v);
                    idx.insert(u.clone(), next.len());
                    par.push(pi);
                    las.push(v);
                    next.push(u);
                }
            }
            parent.push(par);
            last.push(las);
            index.push(idx);
            tuples = next;
        }
        Self { m, parent, last, index }
    }

    fn count(&self, d: usize) -> usize {
        self.parent[d].len()
    }

    fn index_of(&self, vars: &[usize]) -> usize {
        let mut v = vars.to_vec();
        v.sort_unstable();
        self.index[v.len()][&v]
    }

    fn values(&self, w: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![1.0]];
        for d in 1..self.parent.len() {
            let prev = &out[d - 1];
            let cur: Vec<f64> = (0..self.count(d)).map(|i| prev[self.parent[d][i]] * w[self.last[d][i]]).collect();
            out.push(cur);
        }
        debug_assert_eq!(w.len(), self.m);
        out
    }
}

/// Homogeneous polynomial with coefficients in `ℂ^width` (spinor-valued) or
/// `ℝ^width` stored as real parts.
#[derive(Debug, Clone)]
struct CPoly {
    deg: usize,
    width: usize,
    c: Vec<C64>,
}

impl CPoly {
    fn new(mono: &Monomials, deg: usize, width: usize) -> Self {
        Self { deg, width, c: vec![C64::new(0.0, 0.0); mono.count(deg) * width] }
    }

    fn add(&mut self, mono: &Monomials, vars: &[usize], s: &[C64], scale: f64) {
        let k = mono.index_of(vars);
        for (p, v) in s.iter().enumerate() {
            self.c[k * self.width + p] += v * scale;
        }
    }

    fn eval(&self, vals: &[Vec<f64>]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.width];
        for (k, &x) in vals[self.deg].iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &self.c[k * self.width..(k + 1) * self.width];
            for (o, c) in out.iter_mut().zip(row) {
                *o += c * x;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct RPoly {
    deg: usize,
    width: usize,
    c: Vec<f64>,
}

impl RPoly {
    fn new(mono: &Monomials, deg: usize, width: usize) -> Self {
        Self { deg, width, c: vec![0.0; mono.count(deg) * width] }
    }

    fn add(&mut self, mono: &Monomials, vars: &[usize], slot: usize, v: f64) {
        let k = mono.index_of(vars);
        self.c[k * self.width + slot] += v;
    }

    fn eval(&self, vals: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        for (k, &x) in vals[self.deg].iter().enumerate() {
            let row = &self.c[k * self.width..(k + 1) * self.width];
            for (o, c) in out.iter_mut().zip(row) {
                *o += c * x;
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Audit inputs

/// Curvature data for the audits.
#[derive(Debug, Clone)]
pub struct AuditSetup {
    /// Dimension.
    pub m: usize,
    /// Curvature tensor at the centre.
    pub r: RiemannTensor,
    /// Derivative jets.
    pub jets: CurvatureJets,
    /// Cutoff radius.
    pub delta: f64,
}

impl AuditSetup {
    /// Weyl-projected random tensor with conformal-normal-coordinate jets
    /// (nonzero first jets).
    pub fn cnc(m: usize, seed: u64, delta: f64) -> Result<Self> {
        if m < 4 {
            return Err(Error::InvalidDimension { got: m, reason: "audits need m >= 4" });
        }
        let r = random_weyl(m, seed)?;
        let jets = make_cnc_jets_with_first(&r, seed)?;
        Ok(Self { m, r, jets, delta })
    }

    /// Weyl-projected tensor with unconstrained random derivative jets, so
    /// `tr b₃` and `Λ` carry generic first-jet contributions.
    pub fn generic(m: usize, seed: u64, delta: f64) -> Result<Self> {
        if m < 4 {
            return Err(Error::InvalidDimension { got: m, reason: "audits need m >= 4" });
        }
        let r = random_weyl(m, seed)?;
        let jets = CurvatureJets::random(m, seed ^ 0x5151);
        Ok(Self { m, r, jets, delta })
    }

    /// Flat data.
    pub fn flat(m: usize, delta: f64) -> Self {
        Self { m, r: RiemannTensor::zero(m), jets: CurvatureJets::zero(m), delta }
    }

    fn validate_shape(&self) -> Result<()> {
        if self.m < 4 {
            return Err(Error::InvalidDimension { got: self.m, reason: "audits need m >= 4" });
        }
        if self.r.dim() != self.m || self.jets.dim() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: self.r.dim() });
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter("delta must be positive".into()));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if !self.r.is_ricci_flat(1e-12) {
            return Err(Error::Precondition("audit curvature must be Ricci-flat".into()));
        }
        if self.jets.cyclic_ricci_d1_residual() > 1e-10 * (1.0 + self.r.max_abs()) {
            return Err(Error::Precondition("first jets violate the cyclic Ricci condition".into()));
        }
        Ok(())
    }
}

/// Coefficients `A_ijkl = Σ_α (A_ijkααl + A_ijkαlα + A_ijklαα)` of the ε⁴ part of
/// `Re∫ (Θ·ψ_ε, ψ_ε)`, up to a common positive factor.
pub fn theta_quartic_coeffs(theta: &ThetaCoeffs) -> QuarticCoeffs {
    let m = theta.m;
    let mut q = QuarticCoeffs::zero(m);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                if i == j || j == k || i == k {
                    continue;
                }
                for l in 0..m {
                    let s: f64 = (0..m)
                        .map(|a| theta.get(i, j, k, a, a, l) + theta.get(i, j, k, a, l, a) + theta.get(i, j, k, l, a, a))
                        .sum();
                    q.set(i, j, k, l, s);
                }
            }
        }
    }
    q
}

/// `Ψ₀` cancelling the Θ contribution for this curvature.
pub fn audit_psi0(setup: &AuditSetup) -> Result<Psi0Result> {
    let rep = build_rep(setup.m)?;
    let (theta, _) = theta_lambda_coeffs(&setup.r, &setup.jets);
    find_psi0(&rep, &theta_quartic_coeffs(&theta))
}

/// A fixed spinor in general position (does not cancel anything).
pub fn generic_psi0(m: usize) -> Spinor {
    let n = 1usize << (m / 2);
    let s = Spinor::from_fn(n, |p, _| C64::new((0.3 + p as f64).sin(), (1.7 * p as f64 + 0.2).cos()));
    &s / C64::new(s.norm(), 0.0)
}

// Basis slots of the per-direction spinor family.
const W0: usize = 0;
const W1: usize = 1;
const TH0: usize = 2;
const TH1: usize = 3;
const L10: usize = 4;
const L11: usize = 5;
const L20: usize = 6;
const L21: usize = 7;
const BETA: usize = 8; // BETA + 2(n−2) + {0,1}, n = 2..4
const NB: usize = 14;

type Coef = [f64; NB];

/// Direction-dependent polynomial data.
struct Fields {
    sg: SparseGammas,
    mono: Monomials,
    psi0: Vec<C64>,
    theta_w0: CPoly,
    theta_w1: CPoly,
    lam1: RPoly,
    lam2: RPoly,
    bvec: [RPoly; 3],
    btr: [RPoly; 3],
}

/// Values at one direction.
struct Node {
    omega: Vec<f64>,
    v: Vec<Vec<C64>>,
    gram: [[f64; NB]; NB],
    tr: [f64; 3],
    lam1: Vec<f64>,
    lam2: Vec<f64>,
    bw: [Vec<f64>; 3],
}

impl Fields {
    fn new(setup: &AuditSetup, rep: &CliffordRep, psi0: &Spinor) -> Self {
        let m = setup.m;
        let n = rep.spinor_dim();
        let sg = SparseGammas::new(rep);
        let mono = Monomials::new(m, 5);
        let psi0v: Vec<C64> = psi0.iter().copied().collect();
        let (theta, lam) = theta_lambda_coeffs(&setup.r, &setup.jets);
        let (b, _) = b_coefficients(&setup.r, &setup.jets);

        let mut theta_w0 = CPoly::new(&mono, 3, n);
        let mut theta_w1 = CPoly::new(&mono, 4, n);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    if i == j || j == k || i == k {
                        continue;
                    }
                    let gk = sg.apply(k, &psi0v);
                    let gjk = sg.apply(j, &gk);
                    let w = sg.apply(i, &gjk);
                    let wq: Vec<Vec<C64>> = (0..m)
                        .map(|q| {
                            let t = sg.apply(q, &psi0v);
                            let t = sg.apply(k, &t);
                            let t = sg.apply(j, &t);
                            sg.apply(i, &t)
                        })
                        .collect();
                    for a in 0..m {
                        for bb in 0..m {
                            for g in 0..m {
                                let c = theta.get(i, j, k, a, bb, g);
                                if c == 0.0 {
                                    continue;
                                }
                                theta_w0.add(&mono, &[a, bb, g], &w, c);
                                for (q, s) in wq.iter().enumerate() {
                                    theta_w1.add(&mono, &[a, bb, g, q], s, c);
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut lam1 = RPoly::new(&mono, 1, m);
        let mut lam2 = RPoly::new(&mono, 2, m);
        for k in 0..m {
            for a in 0..m {
                lam1.add(&mono, &[a], k, lam.lambda1[k * m + a]);
                for bb in 0..m {
                    lam2.add(&mono, &[a, bb], k, lam.lambda2[(k * m + a) * m + bb]);
                }
            }
        }
        let mut bvec = [RPoly::new(&mono, 3, m), RPoly::new(&mono, 4, m), RPoly::new(&mono, 5, m)];
        let mut btr = [RPoly::new(&mono, 2, 1), RPoly::new(&mono, 3, 1), RPoly::new(&mono, 4, 1)];
        let idx = |i: usize, j: usize, a: usize, bb: usize| ((i * m + j) * m + a) * m + bb;
        for i in 0..m {
            for j in 0..m {
                for a in 0..m {
                    for bb in 0..m {
                        let nn = idx(i, j, a, bb);
                        bvec[0].add(&mono, &[a, bb, j], i, b.b2[nn]);
                        if i == j {
                            btr[0].add(&mono, &[a, bb], 0, b.b2[nn]);
                        }
                        for k in 0..m {
                            let v3 = b.b3[nn * m + k];
                            bvec[1].add(&mono, &[a, bb, k, j], i, v3);
                            if i == j {
                                btr[1].add(&mono, &[a, bb, k], 0, v3);
                            }
                            for l in 0..m {
                                let v4 = b.b4[(nn * m + k) * m + l];
                                bvec[2].add(&mono, &[a, bb, k, l, j], i, v4);
                                if i == j {
                                    btr[2].add(&mono, &[a, bb, k, l], 0, v4);
                                }
                            }
                        }
                    }
                }
            }
        }
        Self { sg, mono, psi0: psi0v, theta_w0, theta_w1, lam1, lam2, bvec, btr }
    }

    fn node(&self, omega: &[f64]) -> Node {
        let vals = self.mono.values(omega);
        let w0 = self.psi0.clone();
        let w1 = self.sg.vec_mul(omega, &w0);
        let lam1 = self.lam1.eval(&vals);
        let lam2 = self.lam2.eval(&vals);
        let bw = [self.bvec[0].eval(&vals), self.bvec[1].eval(&vals), self.bvec[2].eval(&vals)];
        let tr = [self.btr[0].eval(&vals)[0], self.btr[1].eval(&vals)[0], self.btr[2].eval(&vals)[0]];
        let mut v = vec![Vec::new(); NB];
        v[TH0] = self.theta_w0.eval(&vals);
        v[TH1] = self.theta_w1.eval(&vals);
        v[L10] = self.sg.vec_mul(&lam1, &w0);
        v[L11] = self.sg.vec_mul(&lam1, &w1);
        v[L20] = self.sg.vec_mul(&lam2, &w0);
        v[L21] = self.sg.vec_mul(&lam2, &w1);
        for n in 0..3 {
            v[BETA + 2 * n] = self.sg.vec_mul(&bw[n], &w0);
            v[BETA + 2 * n + 1] = self.sg.vec_mul(&bw[n], &w1);
        }
        v[W0] = w0;
        v[W1] = w1;
        let mut gram = [[0.0; NB]; NB];
        for a in 0..NB {
            for b in a..NB {
                let g: f64 = v[a].iter().zip(&v[b]).map(|(x, y)| (x.conj() * y).re).sum();
                gram[a][b] = g;
                gram[b][a] = g;
            }
        }
        Node { omega: omega.to_vec(), v, gram, tr, lam1, lam2, bw }
    }
}

fn quad(g: &[[f64; NB]; NB], c: &Coef) -> f64 {
    let nz: Vec<usize> = (0..NB).filter(|&i| c[i] != 0.0).collect();
    let mut s = 0.0;
    for (ia, &a) in nz.iter().enumerate() {
        s += g[a][a] * c[a] * c[a];
        for &b in &nz[ia + 1..] {
            s += 2.0 * g[a][b] * c[a] * c[b];
        }
    }
    s.max(0.0)
}

fn bilinear(g: &[[f64; NB]; NB], c: &Coef, d: &Coef) -> f64 {
    let mut s = 0.0;
    for a in 0..NB {
        if c[a] == 0.0 {
            continue;
        }
        for b in 0..NB {
            if d[b] != 0.0 {
                s += g[a][b] * c[a] * d[b];
            }
        }
    }
    s
}

/// Composite Gauss–Legendre nodes in `s` on `[0, 2δ/ε]` with breakpoints at
/// `1`, geometric panels up to `δ/ε`, and four panels across the cutoff shell.
fn radial_nodes(eps: f64, delta: f64, per_panel: usize) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(per_panel);
    let inner = delta / eps;
    let mut cuts = vec![0.0];
    let mut c = inner.min(1.0);
    cuts.push(c);
    while c < inner {
        c = (c * 2.0).min(inner);
        cuts.push(c);
    }
    for k in 1..=4 {
        cuts.push(inner * (1.0 + k as f64 / 4.0));
    }
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        for (x, wt) in gx.iter().zip(&gw) {
            out.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * wt));
        }
    }
    out
}

/// Scalar radial factors at `(ε, s)`.
#[derive(Debug, Clone, Copy)]
struct Radial {
    s: f64,
    r: f64,
    eta: f64,
    deta: f64,
    p_amp: f64,
    g1: f64,
    g2: f64,
    a0: f64,
}

impl Radial {
    fn new(m: usize, eps: f64, delta: f64, s: f64) -> Self {
        let mf = m as f64;
        let c = mf.powf((mf - 1.0) / 2.0);
        let q = 1.0 + s * s;
        let r = eps * s;
        let p_amp = eps.powf(-(mf - 1.0) / 2.0) * c * q.powf(-mf / 2.0);
        let g2 = eps.powf(-(mf + 1.0) / 2.0) * c * q.powf(-mf / 2.0);
        let g1 = g2 * mf * s / q;
        Self { s, r, eta: cutoff(r, delta), deta: cutoff_derivative(r, delta), p_amp, g1, g2, a0: mf / (eps * q) * p_amp }
    }
}

/// Coefficient vectors of `a₀ = Dψ_ε` and the six residual terms at a point.
fn terms(node: &Node, rd: &Radial, two_star: f64) -> (Coef, [Coef; 6]) {
    let (s, r, eta, deta, p) = (rd.s, rd.r, rd.eta, rd.deta, rd.p_amp);
    let mut a0 = [0.0; NB];
    a0[W0] = rd.a0;
    a0[W1] = -s * rd.a0;
    let mut t = [[0.0; NB]; 6];
    if deta != 0.0 {
        t[0][W1] = deta * p;
        t[0][W0] = deta * p * s;
    }
    let f2 = eta - eta.powf(two_star - 1.0);
    if f2 != 0.0 {
        t[1][W0] = f2 * a0[W0];
        t[1][W1] = f2 * a0[W1];
    }
    let r3 = eta * r * r * r * p;
    t[2][TH0] = r3;
    t[2][TH1] = -s * r3;
    t[3][L10] = eta * p * r;
    t[3][L11] = -eta * p * r * s;
    t[3][L20] = eta * p * r * r;
    t[3][L21] = -eta * p * r * r * s;
    let mut rn = r * r;
    for n in 0..3 {
        let (i0, i1) = (BETA + 2 * n, BETA + 2 * n + 1);
        t[4][i0] = -eta * rd.g1 * rn;
        t[4][i1] = eta * rd.g1 * rn * s;
        t[4][W0] += eta * rd.g2 * rn * node.tr[n];
        if deta != 0.0 {
            t[5][i0] = deta * p * rn;
            t[5][i1] = -deta * p * rn * s;
        }
        rn *= r;
    }
    (a0, t)
}

fn sum_coef(t: &[Coef]) -> Coef {
    let mut out = [0.0; NB];
    for c in t {
        for i in 0..NB {
            out[i] += c[i];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Residual audit

/// Exponents of the stated bounds for `‖A₁‖ … ‖A₆‖` and the total.
pub fn residual_exponents(m: usize) -> [f64; 7] {
    let mf = m as f64;
    let half = (mf - 1.0) / 2.0;
    let a3 = if m <= 8 { half } else { 4.0 };
    let a4 = if m <= 6 { half } else { 3.0 };
    [half, (mf + 1.0) / 2.0, a3, a4, a4, a3, a4]
}

/// Whether the stated bound for a term carries a logarithmic factor at this `m`.
pub fn residual_has_log(m: usize, term: usize) -> bool {
    matches!((term, m), (2, 9) | (5, 9) | (3, 7) | (4, 7) | (6, 7))
}

/// Per-term values and fitted orders.
#[derive(Debug, Clone, Serialize)]
pub struct TermFit {
    /// Term name.
    pub name: String,
    /// Values on the grid.
    pub values: Vec<f64>,
    /// Fitted order when all values are positive.
    pub fit: Option<OrderFit>,
    /// Exponent of the stated bound.
    pub expected: f64,
    /// Whether the stated bound has a log factor.
    pub log_factor: bool,
    /// Whether the term is rounding noise (≤ 1e−12 of the total) on the whole grid.
    pub vanishes: bool,
}

/// Result of [`residual_audit`].
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// Dimension.
    pub m: usize,
    /// Grid.
    pub eps: Vec<f64>,
    /// `A₁ … A₆` and `total`.
    pub terms: Vec<TermFit>,
}

const TERM_NAMES: [&str; 7] = ["A1", "A2", "A3", "A4", "A5", "A6", "total"];

/// `L^{2m/(m+1)}` norms of the residual terms over `|x| ≤ 2δ` and their fitted orders.
pub fn residual_audit(setup: &AuditSetup, psi0: &Spinor, eps: &[f64], rule: &SphereRule) -> Result<ResidualReport> {
    setup.validate_shape()?;
    let m = setup.m;
    let rep = build_rep(m)?;
    if psi0.len() != rep.spinor_dim() {
        return Err(Error::DimensionMismatch { expected: rep.spinor_dim(), got: psi0.len() });
    }
    let fields = Fields::new(setup, &rep, psi0);
    let p = 2.0 * m as f64 / (m as f64 + 1.0);
    let two_star = critical_exponent(m);
    let radial: Vec<Vec<(Radial, f64)>> = eps
        .iter()
        .map(|&e| {
            radial_nodes(e, setup.delta, 10)
                .into_iter()
                .map(|(s, w)| (Radial::new(m, e, setup.delta, s), w * e.powi(m as i32) * s.powi(m as i32 - 1)))
                .collect()
        })
        .collect();
    let mut acc = vec![[0.0f64; 7]; eps.len()];
    for i in 0..rule.len() {
        let node = fields.node(rule.node(i));
        let wa = rule.weight(i);
        for (ie, rads) in radial.iter().enumerate() {
            for (rd, wr) in rads {
                let (_, t) = terms(&node, rd, two_star);
                let w = wa * wr;
                for (k, c) in t.iter().enumerate() {
                    if c.iter().any(|v| *v != 0.0) {
                        acc[ie][k] += w * quad(&node.gram, c).powf(p / 2.0);
                    }
                }
                acc[ie][6] += w * quad(&node.gram, &sum_coef(&t)).powf(p / 2.0);
            }
        }
    }
    let expected = residual_exponents(m);
    let totals: Vec<f64> = acc.iter().map(|a| a[6].powf(1.0 / p)).collect();
    let terms = (0..7)
        .map(|k| {
            let values: Vec<f64> = acc.iter().map(|a| a[k].powf(1.0 / p)).collect();
            TermFit {
                vanishes: values.iter().zip(&totals).all(|(v, t)| *v <= 1e-12 * t),
                name: TERM_NAMES[k].to_string(),
                fit: order_fit(eps, &values).ok(),
                values,
                expected: expected[k],
                log_factor: residual_has_log(m, k),
            }
        })
        .collect();
    Ok(ResidualReport { m, eps: eps.to_vec(), terms })
}

// ---------------------------------------------------------------------------
// Energy audit

/// Sphere averages of the Gram entries entering `J₄` and `J₆`.
#[derive(Debug, Clone, Default)]
struct AngularSums {
    th: [f64; 3],
    beta: [[f64; 3]; 3],
    tr: [[f64; 2]; 3],
}

fn angular_sums(fields: &Fields, rule: &SphereRule) -> (AngularSums, Vec<Node>) {
    let mut a = AngularSums::default();
    let mut nodes = Vec::with_capacity(rule.len());
    for i in 0..rule.len() {
        let nd = fields.node(rule.node(i));
        let w = rule.weight(i);
        let g = &nd.gram;
        a.th[0] += w * g[TH0][W0];
        a.th[1] += w * (g[TH1][W0] + g[TH0][W1]);
        a.th[2] += w * g[TH1][W1];
        for n in 0..3 {
            let (i0, i1) = (BETA + 2 * n, BETA + 2 * n + 1);
            a.beta[n][0] += w * g[i0][W0];
            a.beta[n][1] += w * (g[i1][W0] + g[i0][W1]);
            a.beta[n][2] += w * g[i1][W1];
            a.tr[n][0] += w * nd.tr[n] * g[W0][W0];
            a.tr[n][1] += w * nd.tr[n] * g[W0][W1];
        }
        nodes.push(nd);
    }
    (a, nodes)
}

/// Per-ε values of `J₁ … J₇` and derived quantities.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    /// Dimension.
    pub m: usize,
    /// Grid.
    pub eps: Vec<f64>,
    /// `J₁ … J₇` on the grid (row per ε).
    pub j: Vec<[f64; 7]>,
    /// `m^m ω_{m−1} I(m)`.
    pub j2_limit: f64,
    /// `J₂ − limit` on the grid.
    pub j2_deficit: Vec<f64>,
    /// `J₄` with a generic (non-cancelling) `Ψ₀`.
    pub j4_generic: Vec<f64>,
    /// `m^{m−1} · j6_leading(R, M_∞)`: predicted `J₆/ε⁴`.
    pub j6_predicted: f64,
    /// Fit of `|J₂ − limit|`.
    pub j2_fit: Option<OrderFit>,
    /// Fit of `J₃`.
    pub j3_fit: Option<OrderFit>,
    /// Fit of `|J₄|` (generic `Ψ₀`).
    pub j4_generic_fit: Option<OrderFit>,
    /// Fit of `|J₄|` with the cancelling `Ψ₀`.
    pub j4_fit: Option<OrderFit>,
    /// Fit of `|J₆|`.
    pub j6_fit: Option<OrderFit>,
    /// `J₆ / (ε⁴ · j6_predicted)` on the grid.
    pub j6_ratio: Vec<f64>,
    /// `m^m ω_{m−1} I(m) (1/2 − 1/2*) − (1/2m)(m/2)^m ω_m`, relative.
    pub critical_level_residual: f64,
}

/// The J-pieces of `∫ (D̄φ̄_ε, φ̄_ε)` for a given `Ψ₀`, without the fits.
fn energy_pieces(setup: &AuditSetup, psi0: &Spinor, eps: &[f64], rule: &SphereRule) -> Result<(Vec<[f64; 7]>, f64, Vec<f64>)> {
    setup.validate()?;
    let m = setup.m;
    let mf = m as f64;
    let rep = build_rep(m)?;
    if psi0.len() != rep.spinor_dim() {
        return Err(Error::DimensionMismatch { expected: rep.spinor_dim(), got: psi0.len() });
    }
    let fields = Fields::new(setup, &rep, psi0);
    let (ang, nodes) = angular_sums(&fields, rule);
    let two_star = critical_exponent(m);
    let delta = setup.delta;
    let c2 = mf.powf(mf - 1.0);
    let area = sphere_volume(m - 1);
    let limit = mf.powf(mf) * area * radial_i(m, f64::INFINITY)?;
    let mut rows = Vec::new();
    let mut deficits = Vec::new();
    for &e in eps {
        let inner = delta / e;
        let outer = 2.0 * delta / e;
        let eta = |s: f64| cutoff(e * s, delta);
        let w = |s: f64| s.powf(mf - 1.0) * (1.0 + s * s).powf(-mf);
        let norm = mf.powf(mf) * area;
        // J₂ − limit and J₃ only see the shell and the tail.
        let def = -norm
            * (integrate(|s| (1.0 - eta(s).powf(two_star)) * w(s), inner, outer, 1e-12)
                + integrate_to_infinity(w, outer, 1e-12));
        let j3 = norm * integrate(|s| (eta(s) - eta(s).powf(two_star - 1.0)) * eta(s) * w(s), inner, outer, 1e-12);
        let split = |f: &dyn Fn(f64) -> f64| integrate(f, 0.0, inner, 1e-12) + integrate(f, inner, outer, 1e-12);
        // J₄: ε⁴ c² ∫ η² s^{m+2} (1+s²)^{−m} (θ₀ − s θ₁ + s² θ₂) ds.
        let j4 = e.powi(4)
            * c2
            * split(&|s: f64| {
                eta(s).powi(2) * s.powf(mf + 2.0) * (1.0 + s * s).powf(-mf) * (ang.th[0] - s * ang.th[1] + s * s * ang.th[2])
            });
        // J₆: Σ_n εⁿ ∫ η² s^{m−1+n} [−m c² s (1+s²)^{−m−1} β_n(s) + c² (1+s²)^{−m} τ_n(s)] ds.
        let mut j6 = 0.0;
        for n in 0..3 {
            let deg = n + 2;
            let (b, t) = (ang.beta[n], ang.tr[n]);
            let f = |s: f64| {
                let q = 1.0 + s * s;
                eta(s).powi(2)
                    * s.powf(mf - 1.0 + deg as f64)
                    * (-mf * c2 * s * q.powf(-mf - 1.0) * (b[0] - s * b[1] + s * s * b[2]) + c2 * q.powf(-mf) * (t[0] - s * t[1]))
            };
            j6 += e.powi(deg as i32) * split(&f);
        }
        // J₁, J₅, J₇: pointwise real parts of Clifford-vector pairings.
        let (mut j1, mut j5, mut j7) = (0.0, 0.0, 0.0);
        for (rd_s, wr) in radial_nodes(e, delta, 10) {
            let rd = Radial::new(m, e, delta, rd_s);
            let jac = wr * e.powi(m as i32) * rd_s.powi(m as i32 - 1);
            for (i, nd) in nodes.iter().enumerate() {
                let v: Vec<C64> =
                    nd.v[W0].iter().zip(&nd.v[W1]).map(|(a, b)| (a - b * rd.s) * rd.p_amp).collect();
                let wgt = jac * rule.weight(i);
                let lam: Vec<f64> = nd.lam1.iter().zip(&nd.lam2).map(|(a, b)| rd.r * a + rd.r * rd.r * b).collect();
                j5 += wgt * rd.eta * rd.eta * fields.sg.vec_re_form(&lam, &v);
                if rd.deta != 0.0 {
                    j1 += wgt * rd.eta * rd.deta * fields.sg.vec_re_form(&nd.omega, &v);
                    let mut bv = vec![0.0; m];
                    let mut rn = rd.r * rd.r;
                    for n in 0..3 {
                        for (o, x) in bv.iter_mut().zip(&nd.bw[n]) {
                            *o += rn * x;
                        }
                        rn *= rd.r;
                    }
                    j7 += wgt * rd.eta * rd.deta * fields.sg.vec_re_form(&bv, &v);
                }
            }
        }
        rows.push([j1, limit + def, j3, j4, j5, j6, j7]);
        deficits.push(def);
    }
    Ok((rows, limit, deficits))
}

/// J-term report; `psi0` should cancel the Θ contribution (see [`audit_psi0`]).
pub fn energy_audit(setup: &AuditSetup, psi0: &Spinor, eps: &[f64], rule: &SphereRule) -> Result<EnergyReport> {
    let m = setup.m;
    let mf = m as f64;
    let (j, limit, deficit) = energy_pieces(setup, psi0, eps, rule)?;
    let (jg, _, _) = energy_pieces(setup, &generic_psi0(m), eps, rule)?;
    let j4_generic: Vec<f64> = jg.iter().map(|r| r[3]).collect();
    let j6_predicted = if m >= 5 {
        mf.powf(mf - 1.0) * j6_leading(&setup.r, &moment_table(m, f64::INFINITY)?)?
    } else {
        f64::NAN
    };
    let col = |k: usize| -> Vec<f64> { j.iter().map(|r| r[k].abs()).collect() };
    let j6_ratio = j.iter().zip(eps).map(|(r, e)| r[5] / (e.powi(4) * j6_predicted)).collect();
    let two_star = critical_exponent(m);
    let lhs = limit * (0.5 - 1.0 / two_star);
    let rhs = (mf / 2.0).powf(mf) * sphere_volume(m) / (2.0 * mf);
    Ok(EnergyReport {
        m,
        eps: eps.to_vec(),
        j2_fit: order_fit(eps, &deficit.iter().map(|d| d.abs()).collect::<Vec<_>>()).ok(),
        j3_fit: order_fit(eps, &col(2)).ok(),
        j4_generic_fit: order_fit(eps, &j4_generic.iter().map(|v| v.abs()).collect::<Vec<_>>()).ok(),
        j4_fit: order_fit(eps, &col(3)).ok(),
        j6_fit: order_fit(eps, &col(5)).ok(),
        j,
        j2_limit: limit,
        j2_deficit: deficit,
        j4_generic,
        j6_predicted,
        j6_ratio,
        critical_level_residual: (lhs - rhs).abs() / rhs,
    })
}

// ---------------------------------------------------------------------------
// Rayleigh audit

/// Rayleigh-quotient values on the grid.
#[derive(Debug, Clone, Serialize)]
pub struct RayleighReport {
    /// Dimension.
    pub m: usize,
    /// Grid.
    pub eps: Vec<f64>,
    /// `(∫|D̄φ̄_ε|^{2m/(m+1)})^{(m+1)/m}`.
    pub numerator: Vec<f64>,
    /// `∫ (D̄φ̄_ε, φ̄_ε)`.
    pub denominator: Vec<f64>,
    /// `J(φ̄_ε)`.
    pub quotient: Vec<f64>,
    /// `J(φ̄_ε) − (m/2) ω_m^{1/m}`, computed from the deficits directly.
    pub excess: Vec<f64>,
    /// `(m/2)^{m+1} ω_m^{(m+1)/m}`.
    pub numerator_limit: f64,
    /// `(m/2)^m ω_m`.
    pub denominator_limit: f64,
    /// `(m/2) ω_m^{1/m}`.
    pub sphere_value: f64,
    /// First-order prediction `(m/2) ω_m^{1/m} · J₆ / ((m/2)^m ω_m)` of the excess.
    pub first_order_excess: Vec<f64>,
}

/// `J(φ̄_ε)` from `∫|D̄φ̄_ε|^{2m/(m+1)}` and `∫(D̄φ̄_ε, φ̄_ε)`, both evaluated as
/// deficits from the Euclidean bubble so the ε⁴ excess is resolved.
pub fn rayleigh_audit(setup: &AuditSetup, psi0: &Spinor, eps: &[f64], rule: &SphereRule) -> Result<RayleighReport> {
    setup.validate()?;
    let m = setup.m;
    let mf = m as f64;
    let rep = build_rep(m)?;
    let p = 2.0 * mf / (mf + 1.0);
    let two_star = critical_exponent(m);
    let (jrows, limit, _) = energy_pieces(setup, psi0, eps, rule)?;
    let fields = Fields::new(setup, &rep, psi0);
    let area = sphere_volume(m - 1);
    let bubble = limit;
    let mut num_def = vec![0.0; eps.len()];
    let radial: Vec<Vec<(Radial, f64)>> = eps
        .iter()
        .map(|&e| {
            radial_nodes(e, setup.delta, 12)
                .into_iter()
                .map(|(s, w)| (Radial::new(m, e, setup.delta, s), w * e.powi(m as i32) * s.powi(m as i32 - 1)))
                .collect()
        })
        .collect();
    for i in 0..rule.len() {
        let node = fields.node(rule.node(i));
        let wa = rule.weight(i);
        for (ie, rads) in radial.iter().enumerate() {
            let e = eps[ie];
            for (rd, wr) in rads {
                let (a0, t) = terms(&node, rd, two_star);
                // D̄φ̄ = A₁ + η a₀ + A₃ + … + A₆, so h = D̄φ̄ − a₀.
                let mut h = sum_coef(&[t[0], t[2], t[3], t[4], t[5]]);
                for k in 0..NB {
                    h[k] += (rd.eta - 1.0) * a0[k];
                }
                let v = (mf / (1.0 + rd.s * rd.s)).powf(mf - 1.0) * (mf / (1.0 + rd.s * rd.s)).powi(2) / (e * e)
                    * e.powf(-(mf - 1.0));
                let du = 2.0 * bilinear(&node.gram, &a0, &h) + quad(&node.gram, &h);
                let vp = v.powf(p / 2.0);
                let d = vp * ((p / 2.0) * (du / v).ln_1p()).exp_m1();
                num_def[ie] += wa * wr * d;
            }
        }
    }
    let mut out = RayleighReport {
        m,
        eps: eps.to_vec(),
        numerator: Vec::new(),
        denominator: Vec::new(),
        quotient: Vec::new(),
        excess: Vec::new(),
        numerator_limit: bubble.powf((mf + 1.0) / mf),
        denominator_limit: bubble,
        sphere_value: bubble.powf(1.0 / mf),
        first_order_excess: Vec::new(),
    };
    for (ie, &e) in eps.iter().enumerate() {
        let tail = mf.powf(mf) * area * integrate_to_infinity(|s| s.powf(mf - 1.0) * (1.0 + s * s).powf(-mf), 2.0 * setup.delta / e, 1e-12);
        let dn = num_def[ie] - tail;
        let row = jrows[ie];
        let dd = (row[1] - limit) + row[0] + row[2] + row[3] + row[4] + row[5] + row[6];
        let log_ratio = ((mf + 1.0) / mf) * (dn / bubble).ln_1p() - (dd / bubble).ln_1p();
        out.numerator.push((bubble + dn).powf((mf + 1.0) / mf));
        out.denominator.push(bubble + dd);
        out.quotient.push(out.sphere_value * log_ratio.exp());
        out.excess.push(out.sphere_value * log_ratio.exp_m1());
        out.first_order_excess.push(out.sphere_value * row[5] / bubble);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_integral_closed_forms() {
        assert!((radial_i(2, f64::INFINITY).unwrap() - 0.5).abs() < 1e-12);
        assert!((radial_i(1, f64::INFINITY).unwrap() - PI / 2.0).abs() < 1e-12);
        let exact = |r: f64| 0.5 * (1.0 - 1.0 / (1.0 + r * r));
        for r in [0.3, 1.0, 7.0] {
            assert!((radial_i(2, r).unwrap() - exact(r)).abs() < 1e-13);
        }
    }

    #[test]
    fn volume_identity() {
        for m in 2..=9 {
            assert!(volume_identity_residual(m).unwrap() <= 1e-10, "m={m}");
        }
        assert!((sphere_volume(2) - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn sphere_rule_area_and_degree() {
        for m in 2..=7 {
            let rule = SphereRule::standard(m).unwrap();
            let area = 2.0 * PI.powf(m as f64 / 2.0) / gamma(m as f64 / 2.0);
            assert!((rule.integrate(|_| 1.0) - area).abs() < 1e-12 * area);
            for i in 0..rule.len() {
                let n: f64 = rule.node(i).iter().map(|v| v * v).sum();
                assert!((n - 1.0).abs() < 1e-13);
            }
            // ⟨ω₁⁸⟩ = 105 / (m(m+2)(m+4)(m+6)).
            let mf = m as f64;
            let mom = rule.integrate(|w| w[m - 1].powi(8)) / area;
            let exact = 105.0 / (mf * (mf + 2.0) * (mf + 4.0) * (mf + 6.0));
            assert!((mom - exact).abs() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn moment_ratio_is_three() {
        for m in [4, 5, 6] {
            let t = moment_table(m, 3.0).unwrap();
            assert!((t.m4 / t.m22 - 3.0).abs() < 1e-8);
            assert!(t.m4 > t.m22 && t.m22 > 0.0);
        }
        let t = moment_table(6, f64::INFINITY).unwrap();
        assert!((t.m4 / t.m22 - 3.0).abs() < 1e-8);
        assert!(moment_table(4, f64::INFINITY).is_err());
        let small = moment_table(5, 1e-3).unwrap();
        assert!(small.m4 < 1e-20);
    }

    #[test]
    fn order_fit_examples() {
        let eps = eps_grid(1e-3, 1e-1, 8).unwrap();
        let f3: Vec<f64> = eps.iter().map(|e| e.powi(3)).collect();
        assert!((order_fit(&eps, &f3).unwrap().slope - 3.0).abs() < 1e-10);
        let f4: Vec<f64> = eps.iter().map(|e| 5.0 * e.powi(4) + e.powi(6)).collect();
        assert!((order_fit(&eps, &f4).unwrap().slope - 4.0).abs() < 0.05);
        let fl: Vec<f64> = eps.iter().map(|e| e.powi(3) * e.ln().abs()).collect();
        assert!(order_fit(&eps, &fl).unwrap().slope < 3.0);
        assert!(order_fit(&eps, &vec![0.0; 8]).is_err());
        assert!(order_fit(&eps[..3], &f3[..3]).is_err());
        assert!(eps.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn flat_residual_terms_vanish() {
        let setup = AuditSetup::flat(4, 1.0);
        let rule = SphereRule::new(4, 3, 6).unwrap();
        let eps = eps_grid(1e-2, 1e-1, 4).unwrap();
        let rep = residual_audit(&setup, &generic_psi0(4), &eps, &rule).unwrap();
        for k in 2..6 {
            assert!(rep.terms[k].values.iter().all(|v| *v == 0.0), "{}", rep.terms[k].name);
        }
        assert!(rep.terms[0].values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn theta_quartic_contraction_matches_direct_sphere_average() {
        let m = 5;
        let setup = AuditSetup::cnc(m, 3, 1.0).unwrap();
        let rep = build_rep(m).unwrap();
        let (theta, _) = theta_lambda_coeffs(&setup.r, &setup.jets);
        let q = theta_quartic_coeffs(&theta);
        let psi = generic_psi0(m);
        let fval = crate::spinor_fields::quartic_form(&rep, &q, &psi);
        // Direct: ∫ Re⟨Θ(ω) ω·Ψ₀, Ψ₀⟩ dω equals F(Ψ₀) ∫ω₁²ω₂² dω.
        let fields = Fields::new(&setup, &rep, &psi);
        let rule = SphereRule::standard(m).unwrap();
        let direct = rule.integrate(|w| fields.node(w).gram[TH1][W0]);
        let a22 = rule.integrate(|w| w[0] * w[0] * w[1] * w[1]);
        assert!((direct - fval * a22).abs() <= 1e-11 * (1.0 + direct.abs()));
        // With the cancelling spinor the average vanishes.
        let res = audit_psi0(&setup).unwrap();
        let fields = Fields::new(&setup, &rep, &res.psi0);
        let direct = rule.integrate(|w| fields.node(w).gram[TH1][W0]);
        assert!(direct.abs() < 1e-12);
    }

    #[test]
    fn node_spinors_match_dense_evaluation() {
        let m = 5;
        let setup = AuditSetup::cnc(m, 8, 1.0).unwrap();
        let rep = build_rep(m).unwrap();
        let psi = generic_psi0(m);
        let fields = Fields::new(&setup, &rep, &psi);
        let (theta, _) = theta_lambda_coeffs(&setup.r, &setup.jets);
        let (b, _) = b_coefficients(&setup.r, &setup.jets);
        let w = crate::util::sample_directions(m, 1, 4).pop().unwrap();
        let nd = fields.node(&w);
        let mut th = Spinor::zeros(rep.spinor_dim());
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    if i == j || j == k || i == k {
                        continue;
                    }
                    let mut c = 0.0;
                    for a in 0..m {
                        for bb in 0..m {
                            for g in 0..m {
                                c += theta.get(i, j, k, a, bb, g) * w[a] * w[bb] * w[g];
                            }
                        }
                    }
                    th += rep.gamma_word(&[i + 1, j + 1, k + 1]).unwrap() * &psi * C64::new(c, 0.0);
                }
            }
        }
        let d: f64 = th.iter().zip(&nd.v[TH0]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-12);
        let parts = b.eval_parts(&w);
        for n in 0..3 {
            let tr: f64 = (0..m).map(|i| parts[n][i * m + i]).sum();
            assert!((tr - nd.tr[n]).abs() < 1e-12);
            for i in 0..m {
                let bw: f64 = (0..m).map(|j| parts[n][i * m + j] * w[j]).sum();
                assert!((bw - nd.bw[n][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn energy_pieces_exact_zeros_small() {
        let m = 5;
        let setup = AuditSetup::cnc(m, 2, 1.0).unwrap();
        let psi = audit_psi0(&setup).unwrap().psi0;
        let rule = SphereRule::new(m, 5, 10).unwrap();
        let eps = [0.1, 0.05];
        let (rows, limit, _) = energy_pieces(&setup, &psi, &eps, &rule).unwrap();
        for r in &rows {
            assert_eq!(r[0], 0.0);
            assert_eq!(r[4], 0.0);
            assert_eq!(r[6], 0.0);
            assert!((r[1] - limit).abs() < 1e-3 * limit);
            assert!(r[5] < 0.0);
        }
    }
}

//! Strongly indefinite functionals `ℒ(z) = ½(‖Pz‖² − ‖(I−P)z‖²) − Ψ(z)` on ℝⁿ:
//! hypothesis checks, the inner maximiser β, the reduced functional `J`, the
//! Nehari functional `K`, Nehari projection, ground-state minimisation and the
//! energy-envelope audit.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::util::rng;

/// Nonlinear part `Ψ` with value, gradient and Hessian-vector product.
pub trait Nonlinearity {
    /// Ambient dimension.
    fn dim(&self) -> usize;
    /// `Ψ(z)`.
    fn value(&self, z: &[f64]) -> f64;
    /// `∇Ψ(z)`.
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
    /// `∇²Ψ(z) v`.
    fn hessian_apply(&self, z: &[f64], v: &[f64]) -> Vec<f64>;
    /// `(Ψ(z), ∇Ψ(z))`; override when sharing work is cheaper.
    fn value_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        (self.value(z), self.gradient(z))
    }
}

/// `Ψ(z) = ¼ (Σ wᵢ zᵢ²)²`; `w ≡ 1` gives `¼|z|⁴`.
#[derive(Debug, Clone)]
pub struct WeightedQuartic {
    /// Positive weights.
    pub w: Vec<f64>,
}

impl WeightedQuartic {
    /// `¼|z|⁴` on ℝⁿ.
    pub fn unit(n: usize) -> Self {
        Self { w: vec![1.0; n] }
    }

    fn q(&self, z: &[f64]) -> f64 {
        self.w.iter().zip(z).map(|(w, x)| w * x * x).sum()
    }
}

impl Nonlinearity for WeightedQuartic {
    fn dim(&self) -> usize {
        self.w.len()
    }
    fn value(&self, z: &[f64]) -> f64 {
        0.25 * self.q(z).powi(2)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let q = self.q(z);
        self.w.iter().zip(z).map(|(w, x)| q * w * x).collect()
    }
    fn hessian_apply(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let q = self.q(z);
        let zwv: f64 = self.w.iter().zip(z).zip(v).map(|((w, x), y)| w * x * y).sum();
        self.w.iter().zip(z).zip(v).map(|((w, x), y)| q * w * y + 2.0 * w * x * zwv).collect()
    }
}

/// `Ψ(z) = ¼ Σ_k c_k (a_k·z)⁴` with `c_k > 0`: convex and 4-homogeneous.
#[derive(Debug, Clone)]
pub struct SumOfQuartics {
    n: usize,
    dirs: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl SumOfQuartics {
    /// `terms` random directions with weights in `[0.5, 1.5]`.
    pub fn random(n: usize, terms: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let dirs = (0..terms).map(|_| (0..n).map(|_| r.sample(StandardNormal)).collect()).collect();
        let weights = (0..terms).map(|_| r.gen_range(0.5..1.5)).collect();
        Self { n, dirs, weights }
    }

    /// Constant `K` of the growth hypothesis with `μ = ¾`: `(Σ c_k |a_k|⁴)^{1/4}`.
    pub fn growth_constant(&self) -> f64 {
        self.dirs
            .iter()
            .zip(&self.weights)
            .map(|(a, c)| c * a.iter().map(|x| x * x).sum::<f64>().powi(2))
            .sum::<f64>()
            .powf(0.25)
    }

    fn proj(&self, z: &[f64]) -> Vec<f64> {
        self.dirs.iter().map(|a| a.iter().zip(z).map(|(x, y)| x * y).sum()).collect()
    }
}

impl Nonlinearity for SumOfQuartics {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.proj(z).iter().zip(&self.weights).map(|(t, c)| 0.25 * c * t.powi(4)).sum()
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let t = self.proj(z);
        let mut g = vec![0.0; self.n];
        for ((a, tk), c) in self.dirs.iter().zip(&t).zip(&self.weights) {
            let f = c * tk.powi(3);
            for (gi, ai) in g.iter_mut().zip(a) {
                *gi += f * ai;
            }
        }
        g
    }
    fn hessian_apply(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let t = self.proj(z);
        let u = self.proj(v);
        let mut g = vec![0.0; self.n];
        for (((a, tk), uk), c) in self.dirs.iter().zip(&t).zip(&u).zip(&self.weights) {
            let f = 3.0 * c * tk * tk * uk;
            for (gi, ai) in g.iter_mut().zip(a) {
                *gi += f * ai;
            }
        }
        g
    }
}

/// `Ψ ≡ 0`.
#[derive(Debug, Clone)]
pub struct ZeroNonlinearity(pub usize);

impl Nonlinearity for ZeroNonlinearity {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, _z: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        vec![0.0; z.len()]
    }
    fn hessian_apply(&self, _z: &[f64], v: &[f64]) -> Vec<f64> {
        vec![0.0; v.len()]
    }
}

/// Orthogonal projector onto `X`.
#[derive(Debug, Clone)]
pub enum Projector {
    /// Coordinate split: `true` marks an `X` coordinate.
    Mask(Vec<bool>),
    /// Dense symmetric idempotent matrix.
    Dense(DMatrix<f64>),
}

impl Projector {
    fn dim(&self) -> usize {
        match self {
            Projector::Mask(m) => m.len(),
            Projector::Dense(p) => p.nrows(),
        }
    }

    /// `Pv`.
    pub fn x_part(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Projector::Mask(m) => v.iter().zip(m).map(|(x, &b)| if b { *x } else { 0.0 }).collect(),
            Projector::Dense(p) => (p * nalgebra::DVector::from_column_slice(v)).iter().copied().collect(),
        }
    }

    /// `(I−P)v`.
    pub fn y_part(&self, v: &[f64]) -> Vec<f64> {
        let x = self.x_part(v);
        v.iter().zip(&x).map(|(a, b)| a - b).collect()
    }

    fn validate(&self) -> Result<()> {
        if let Projector::Dense(p) = self {
            if !p.is_square() {
                return Err(Error::InvalidParameter("projector must be square".into()));
            }
            let sym = (p - p.transpose()).amax();
            let idem = (p * p - p).amax();
            if sym > 1e-10 || idem > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "projector is not an orthogonal projection (asymmetry {sym:e}, idempotency {idem:e})"
                )));
            }
        }
        Ok(())
    }
}

/// User-supplied constants of the hypotheses.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HypothesisConstants {
    /// Superquadratic exponent `p > 2`.
    pub p: f64,
    /// Growth constant `K > 0`.
    pub k: f64,
    /// Growth exponent `μ ∈ (½, 1)`.
    pub mu: f64,
    /// Convexity constant `κ > 1`.
    pub kappa: f64,
}

impl HypothesisConstants {
    /// Constants valid for 4-homogeneous convex quartics `¼(zᵀWz)²` and sums of `(a·z)⁴`.
    pub fn quartic(k: f64) -> Self {
        Self { p: 4.0, k, mu: 0.75, kappa: 5.0 / 3.0 }
    }
}

/// Problem data `(P, Ψ, constants)`.
pub struct IndefiniteProblem {
    projector: Projector,
    psi: Box<dyn Nonlinearity>,
    constants: HypothesisConstants,
}

impl std::fmt::Debug for IndefiniteProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IndefiniteProblem").field("n", &self.dim()).field("constants", &self.constants).finish()
    }
}

impl IndefiniteProblem {
    /// Validate and assemble.
    pub fn new(projector: Projector, psi: Box<dyn Nonlinearity>, constants: HypothesisConstants) -> Result<Self> {
        projector.validate()?;
        if projector.dim() != psi.dim() {
            return Err(Error::DimensionMismatch { expected: projector.dim(), got: psi.dim() });
        }
        let c = constants;
        if !(c.p > 2.0 && c.k > 0.0 && c.mu > 0.5 && c.mu < 1.0 && c.kappa > 1.0) {
            return Err(Error::InvalidParameter("constants need p > 2, K > 0, 1/2 < mu < 1, kappa > 1".into()));
        }
        Ok(Self { projector, psi, constants })
    }

    /// The two-dimensional example: `X = span e₁`, `Y = span e₂`, `Ψ = ¼|z|⁴`.
    pub fn toy() -> Self {
        Self::new(Projector::Mask(vec![true, false]), Box::new(WeightedQuartic::unit(2)), HypothesisConstants::quartic(1.0))
            .expect("toy problem is valid")
    }

    /// Diagonal quadratic part with spectrum `λ` (nonzero; sign selects `X`/`Y`) and
    /// `Ψ = ¼|u|⁴` in the original coordinates, rescaled so the quadratic part is `±½|z|²`.
    pub fn diagonal_quartic(spectrum: &[f64]) -> Result<Self> {
        if spectrum.is_empty() || spectrum.iter().any(|l| *l == 0.0 || !l.is_finite()) {
            return Err(Error::InvalidParameter("spectrum entries must be finite and nonzero".into()));
        }
        let mask = spectrum.iter().map(|l| *l > 0.0).collect();
        let w: Vec<f64> = spectrum.iter().map(|l| 1.0 / l.abs()).collect();
        let k = w.iter().fold(0.0f64, |a, b| a.max(*b)).sqrt();
        Self::new(Projector::Mask(mask), Box::new(WeightedQuartic { w }), HypothesisConstants::quartic(k))
    }

    /// Diagonal quadratic part with spectrum `λ` and `Ψ = ¼Σ c_k (a_k·u)⁴` for
    /// `terms` random directions, rescaled so the quadratic part is `±½|z|²`.
    pub fn diagonal_sum_of_quartics(spectrum: &[f64], terms: usize, seed: u64) -> Result<Self> {
        if spectrum.is_empty() || spectrum.iter().any(|l| *l == 0.0 || !l.is_finite()) {
            return Err(Error::InvalidParameter("spectrum entries must be finite and nonzero".into()));
        }
        if terms == 0 {
            return Err(Error::InvalidParameter("need at least one quartic term".into()));
        }
        let mask = spectrum.iter().map(|l| *l > 0.0).collect();
        let mut psi = SumOfQuartics::random(spectrum.len(), terms, seed);
        for a in psi.dirs.iter_mut() {
            for (x, l) in a.iter_mut().zip(spectrum) {
                *x /= l.abs().sqrt();
            }
        }
        let k = psi.growth_constant();
        Self::new(Projector::Mask(mask), Box::new(psi), HypothesisConstants::quartic(k))
    }

    /// Same data with replaced constants.
    pub fn with_constants(self, constants: HypothesisConstants) -> Result<Self> {
        Self::new(self.projector, self.psi, constants)
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.projector.dim()
    }

    /// Constants.
    pub fn constants(&self) -> HypothesisConstants {
        self.constants
    }

    /// Projector onto `X`.
    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    /// Nonlinearity.
    pub fn psi(&self) -> &dyn Nonlinearity {
        self.psi.as_ref()
    }

    /// `ℒ(z)` and `∇ℒ(z) = Pz − (I−P)z − ∇Ψ(z)`.
    pub fn lagrangian(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let x = self.projector.x_part(z);
        let (v, g) = self.psi.value_gradient(z);
        let mut val = -v;
        let mut grad = Vec::with_capacity(z.len());
        for i in 0..z.len() {
            let y = z[i] - x[i];
            val += 0.5 * (x[i] * x[i] - y * y);
            grad.push(x[i] - y - g[i]);
        }
        (val, grad)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(u, v)| a * u + v).collect()
}

// ---------------------------------------------------------------------------
// Hypotheses

/// Worst sampled margins (`≥ 0` means satisfied).
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    /// Samples drawn.
    pub samples: usize,
    /// `min Ψ` over samples together with `|Ψ(0)|, |∇Ψ(0)|` (H1).
    pub h1: f64,
    /// `min (⟨∇Ψ(z),z⟩ − pΨ(z))` (H2).
    pub h2: f64,
    /// `min ((Ψ(z)+Ψ(w))/2 − Ψ((z+w)/2))` (H3).
    pub h3: f64,
    /// `min (K⟨∇Ψ(z),z⟩^μ + μ‖z‖ − ‖∇Ψ(z)‖)` (H4).
    pub h4: f64,
    /// `min (⟨∇²Ψ(z)[z+w],z+w⟩ − 2⟨∇Ψ(z),w⟩ − κ⟨∇Ψ(z),z⟩)` (H5).
    pub h5: f64,
    /// H5 margin divided by `⟨∇Ψ(z),z⟩`, minimised; equals `κ_eff − κ`.
    pub h5_relative: f64,
}

fn sample_point(r: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let s = 10f64.powf(r.gen_range(-1.5..1.0)) / norm(&v).max(1e-300);
    v.iter().map(|x| x * s).collect()
}

/// Sample the hypotheses; a violation beyond `1e−12` (relative to the terms
/// compared) is returned as [`Error::Hypothesis`].
pub fn check_hypotheses(problem: &IndefiniteProblem, samples: usize, seed: u64) -> Result<HypothesisReport> {
    let n = problem.dim();
    let psi = problem.psi();
    let c = problem.constants();
    let mut r = rng(seed);
    let zero = vec![0.0; n];
    let mut rep = HypothesisReport {
        samples,
        h1: -(psi.value(&zero).abs() + norm(&psi.gradient(&zero))),
        h2: f64::INFINITY,
        h3: f64::INFINITY,
        h4: f64::INFINITY,
        h5: f64::INFINITY,
        h5_relative: f64::INFINITY,
    };
    let violated = |margin: f64, scale: f64| margin < -1e-12 * (1.0 + scale.abs());
    if violated(rep.h1, 0.0) {
        return Err(Error::Hypothesis { name: "H1".into(), margin: rep.h1 });
    }
    let mut any_positive = false;
    for _ in 0..samples {
        let z = sample_point(&mut r, n);
        let w = sample_point(&mut r, n);
        let (pz, gz) = psi.value_gradient(&z);
        let gzz = dot(&gz, &z);
        any_positive |= pz > 0.0;
        if violated(pz, pz) {
            return Err(Error::Hypothesis { name: "H1".into(), margin: pz });
        }
        rep.h1 = rep.h1.min(pz);
        let m2 = gzz - c.p * pz;
        rep.h2 = rep.h2.min(m2);
        if violated(m2, gzz) {
            return Err(Error::Hypothesis { name: "H2".into(), margin: m2 });
        }
        let mid: Vec<f64> = z.iter().zip(&w).map(|(a, b)| 0.5 * (a + b)).collect();
        let pw = psi.value(&w);
        let pm = psi.value(&mid);
        let m3 = 0.5 * (pz + pw) - pm;
        rep.h3 = rep.h3.min(m3);
        if violated(m3, pz + pw) {
            return Err(Error::Hypothesis { name: "H3".into(), margin: m3 });
        }
        let ng = norm(&gz);
        let bound = c.k * gzz.max(0.0).powf(c.mu) + c.mu * norm(&z);
        let m4 = bound - ng;
        rep.h4 = rep.h4.min(m4);
        if violated(m4, bound) {
            return Err(Error::Hypothesis { name: "H4".into(), margin: m4 });
        }
        let zw: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a + b).collect();
        let hzw = psi.hessian_apply(&z, &zw);
        let lhs = dot(&hzw, &zw) - 2.0 * dot(&gz, &w);
        let m5 = lhs - c.kappa * gzz;
        rep.h5 = rep.h5.min(m5);
        if gzz > 0.0 {
            rep.h5_relative = rep.h5_relative.min(m5 / gzz);
        }
        if violated(m5, lhs.abs() + gzz) {
            return Err(Error::Hypothesis { name: "H5".into(), margin: m5 });
        }
    }
    if !any_positive {
        return Err(Error::Hypothesis { name: "H3 (Psi not identically zero)".into(), margin: 0.0 });
    }
    Ok(rep)
}

/// Worst relative error of `∇²Ψ(z)v` against central differences of `∇Ψ` with step `h`.
pub fn hessian_fd_error(psi: &dyn Nonlinearity, z: &[f64], v: &[f64], h: f64) -> f64 {
    let zp = axpy(h, v, z);
    let zm = axpy(-h, v, z);
    let gp = psi.gradient(&zp);
    let gm = psi.gradient(&zm);
    let hv = psi.hessian_apply(z, v);
    let fd: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let diff: Vec<f64> = fd.iter().zip(&hv).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&hv).max(1e-300)
}

// ---------------------------------------------------------------------------
// Inner maximiser

/// Output of [`beta`].
#[derive(Debug, Clone, Serialize)]
pub struct BetaResult {
    /// `β(φ) ∈ Y`.
    pub w: Vec<f64>,
    /// `‖w + (I−P)∇Ψ(φ+w)‖`.
    pub residual: f64,
    /// Newton steps taken.
    pub iterations: usize,
    /// Residual after each step.
    pub history: Vec<f64>,
}

fn cg(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], rel: f64, max_iter: usize) -> Vec<f64> {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = rel * rel * rr;
    for _ in 0..max_iter {
        if rr <= stop || rr == 0.0 {
            break;
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let a = rr / pap;
        for i in 0..x.len() {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        let rr2 = dot(&r, &r);
        let bcoef = rr2 / rr;
        rr = rr2;
        for i in 0..p.len() {
            p[i] = r[i] + bcoef * p[i];
        }
    }
    x
}

fn beta_residual(problem: &IndefiniteProblem, phi: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let z: Vec<f64> = phi.iter().zip(w).map(|(a, b)| a + b).collect();
    let g = problem.projector.y_part(&problem.psi.gradient(&z));
    let f: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a + b).collect();
    (f, z)
}

/// `β(φ)` from the start `w0 ∈ Y` by damped Newton on `w + (I−P)∇Ψ(φ+w) = 0`.
pub fn beta_from(problem: &IndefiniteProblem, phi: &[f64], w0: &[f64], tol: f64) -> Result<BetaResult> {
    problem.check_len(phi)?;
    problem.check_len(w0)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let proj = &problem.projector;
    let phi = proj.x_part(phi);
    let mut w = proj.y_part(w0);
    let (mut f, mut z) = beta_residual(problem, &phi, &w);
    let mut res = norm(&f);
    let mut history = vec![res];
    let floor = |z: &[f64], w: &[f64]| 1e-15 * (1.0 + norm(w) + norm(&problem.psi.gradient(z)));
    let max_iter = 100;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(BetaResult { w, residual: res, iterations: it, history });
        }
        let zc = z.clone();
        let apply = |v: &[f64]| {
            let hv = problem.psi.hessian_apply(&zc, &proj.y_part(v));
            let qhv = proj.y_part(&hv);
            v.iter().zip(&qhv).map(|(a, b)| a + b).collect::<Vec<f64>>()
        };
        let neg: Vec<f64> = f.iter().map(|x| -x).collect();
        let d = proj.y_part(&cg(apply, &neg, 1e-13, 4 * phi.len() + 20));
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let wt = axpy(step, &d, &w);
            let (ft, zt) = beta_residual(problem, &phi, &wt);
            let rt = norm(&ft);
            if rt <= (1.0 - 1e-4 * step) * res || rt <= tol {
                w = wt;
                f = ft;
                z = zt;
                res = rt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(res);
        if !accepted {
            if res <= 1e3 * floor(&z, &w) {
                return Ok(BetaResult { w, residual: res, iterations: it + 1, history });
            }
            return Err(Error::NoConvergence { iterations: it + 1, residual: res });
        }
    }
    if res <= tol.max(1e3 * floor(&z, &w)) {
        Ok(BetaResult { w, residual: res, iterations: max_iter, history })
    } else {
        Err(Error::NoConvergence { iterations: max_iter, residual: res })
    }
}

/// `β(φ)`, starting from 0.
pub fn beta(problem: &IndefiniteProblem, phi: &[f64], tol: f64) -> Result<BetaResult> {
    beta_from(problem, phi, &vec![0.0; problem.dim()], tol)
}

/// `J(φ)`, `∇J(φ)`, `K(φ)` and the inner solution.
#[derive(Debug, Clone, Serialize)]
pub struct Reduced {
    /// `J(φ) = ℒ(φ + β(φ))`.
    pub j: f64,
    /// `∇J(φ) = φ − P∇Ψ(φ + β(φ))`.
    pub grad: Vec<f64>,
    /// `K(φ) = ⟨∇J(φ), φ⟩`.
    pub k: f64,
    /// `β(φ)`.
    pub beta: BetaResult,
}

const BETA_TOL: f64 = 1e-13;

fn reduced_with(problem: &IndefiniteProblem, phi: &[f64], w0: &[f64]) -> Result<Reduced> {
    let phi = problem.projector.x_part(phi);
    let tol = BETA_TOL * (1.0 + norm(&phi));
    let b = beta_from(problem, &phi, w0, tol)?;
    let z: Vec<f64> = phi.iter().zip(&b.w).map(|(a, c)| a + c).collect();
    let (j, _) = problem.lagrangian(&z);
    let gp = problem.projector.x_part(&problem.psi.gradient(&z));
    let grad: Vec<f64> = phi.iter().zip(&gp).map(|(a, c)| a - c).collect();
    let k = dot(&grad, &phi);
    Ok(Reduced { j, grad, k, beta: b })
}

/// Evaluate the reduced functional at `φ ∈ X` (the `Y` part of `φ` is discarded).
pub fn reduced(problem: &IndefiniteProblem, phi: &[f64]) -> Result<Reduced> {
    problem.check_len(phi)?;
    reduced_with(problem, phi, &vec![0.0; problem.dim()])
}

/// `⟨∇K(φ), φ⟩ = d/dt K(tφ)|_{t=1}`, with `β'` from the linearised β equation.
pub fn nehari_derivative(problem: &IndefiniteProblem, phi: &[f64]) -> Result<f64> {
    let red = reduced(problem, phi)?;
    let proj = &problem.projector;
    let phi = proj.x_part(phi);
    let z: Vec<f64> = phi.iter().zip(&red.beta.w).map(|(a, b)| a + b).collect();
    let hphi = problem.psi.hessian_apply(&z, &phi);
    let rhs: Vec<f64> = proj.y_part(&hphi).iter().map(|x| -x).collect();
    let apply = |v: &[f64]| {
        let hv = problem.psi.hessian_apply(&z, &proj.y_part(v));
        let q = proj.y_part(&hv);
        v.iter().zip(&q).map(|(a, b)| a + b).collect::<Vec<f64>>()
    };
    let bp = proj.y_part(&cg(apply, &rhs, 1e-14, 4 * phi.len() + 20));
    let zp: Vec<f64> = phi.iter().zip(&bp).map(|(a, b)| a + b).collect();
    let g = problem.psi.gradient(&z);
    let hzp = problem.psi.hessian_apply(&z, &zp);
    Ok(2.0 * dot(&phi, &phi) - dot(&proj.x_part(&g), &phi) - dot(&hzp, &phi))
}

/// Margin `2K(φ) − (κ−1)⟨∇Ψ(z_φ),z_φ⟩ − ⟨∇K(φ),φ⟩` of the Nehari-derivative estimate.
pub fn k_estimate_margin(problem: &IndefiniteProblem, phi: &[f64]) -> Result<f64> {
    let red = reduced(problem, phi)?;
    let phi = problem.projector.x_part(phi);
    let z: Vec<f64> = phi.iter().zip(&red.beta.w).map(|(a, b)| a + b).collect();
    let gzz = dot(&problem.psi.gradient(&z), &z);
    let dk = nehari_derivative(problem, &phi)?;
    Ok(2.0 * red.k - (problem.constants.kappa - 1.0) * gzz - dk)
}

// ---------------------------------------------------------------------------
// Nehari projection and minimisation

fn scaled(t: f64, v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| t * x).collect()
}

struct RayEval {
    k: f64,
    red: Reduced,
}

fn ray(problem: &IndefiniteProblem, phi: &[f64], t: f64, w0: &[f64]) -> Result<RayEval> {
    let red = reduced_with(problem, &scaled(t, phi), w0)?;
    Ok(RayEval { k: red.k / (t * t), red })
}

/// Nehari point on a ray.
#[derive(Debug, Clone)]
pub struct NehariPoint {
    /// `t_φ`.
    pub t: f64,
    /// Reduced data at `t_φ φ`.
    pub reduced: Reduced,
    /// `K(tφ)` evaluations used.
    pub evaluations: usize,
}

fn nehari_point(problem: &IndefiniteProblem, phi: &[f64], tol: f64, t_guess: f64, w_guess: &[f64]) -> Result<NehariPoint> {
    let degenerate = || Error::Degenerate("ray degenerate: K(t phi) stays positive".into());
    let nphi = norm(phi);
    if nphi == 0.0 {
        return Err(degenerate());
    }
    let mut evals = 0usize;
    let mut t0 = t_guess;
    let mut e0 = ray(problem, phi, t0, w_guess)?;
    evals += 1;
    // Bracket: k(t) = K(tφ)/t² is positive near 0 and decreasing along the ray.
    let (mut lo, mut hi, mut elo, mut ehi);
    if e0.k > 0.0 {
        let mut t1 = t0;
        let mut e1;
        loop {
            t1 *= 2.0;
            if t1 > 1e18 * t_guess {
                return Err(degenerate());
            }
            let wg = scaled(2.0, &e0.red.beta.w);
            e1 = ray(problem, phi, t1, &wg)?;
            evals += 1;
            if e1.k <= 0.0 {
                break;
            }
            t0 = t1;
            e0 = e1;
        }
        lo = t0;
        elo = e0;
        hi = t1;
        ehi = e1;
    } else {
        let mut t1 = t0;
        let mut e1;
        loop {
            t1 *= 0.5;
            if t1 < 1e-18 * t_guess {
                return Err(Error::Degenerate("no positive K on the ray".into()));
            }
            let wg = scaled(0.5, &e0.red.beta.w);
            e1 = ray(problem, phi, t1, &wg)?;
            evals += 1;
            if e1.k > 0.0 {
                break;
            }
            t0 = t1;
            e0 = e1;
        }
        lo = t1;
        elo = e1;
        hi = t0;
        ehi = e0;
    }
    // Illinois regula falsi on k(t).
    let scale = norm(&elo.red.grad).max(1.0) * nphi;
    let mut side = 0i32;
    let (mut flo, mut fhi) = (elo.k, ehi.k);
    for _ in 0..200 {
        if ehi.k == 0.0 {
            return Ok(NehariPoint { t: hi, reduced: ehi.red, evaluations: evals });
        }
        let t = (lo * fhi - hi * flo) / (fhi - flo);
        let t = if t.is_finite() && t > lo && t < hi { t } else { 0.5 * (lo + hi) };
        let wg = scaled(t / lo, &elo.red.beta.w);
        let e = ray(problem, phi, t, &wg)?;
        evals += 1;
        let done = e.k.abs() * t * t <= tol * scale || (hi - lo) <= 1e-14 * hi;
        if done {
            return Ok(NehariPoint { t, reduced: e.red, evaluations: evals });
        }
        if e.k > 0.0 {
            lo = t;
            flo = e.k;
            elo = e;
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        } else {
            hi = t;
            fhi = e.k;
            ehi = e;
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        }
    }
    Err(Error::NoConvergence { iterations: 200, residual: ehi.k.abs() })
}

/// `t_φ > 0` with `K(t_φ φ) = 0` within `tol` (relative to `‖φ‖·max(1, ‖∇J‖)`).
pub fn nehari_project(problem: &IndefiniteProblem, phi: &[f64], tol: f64) -> Result<f64> {
    problem.check_len(phi)?;
    let phi = problem.projector.x_part(phi);
    Ok(nehari_point(problem, &phi, tol, 1.0 / norm(&phi).max(1e-300), &vec![0.0; phi.len()])?.t)
}

/// Output of [`minimize_nehari`].
#[derive(Debug, Clone, Serialize)]
pub struct NehariMinimum {
    /// `γ = J(t_φ φ)` at the best start.
    pub gamma: f64,
    /// `u = t_φ φ ∈ X`.
    pub minimizer: Vec<f64>,
    /// `u + β(u)`.
    pub critical_point: Vec<f64>,
    /// `t_φ` for the unit direction `φ`.
    pub nehari_scale: f64,
    /// `‖∇J(u)‖`.
    pub grad_norm: f64,
    /// Outer iterations of the best start.
    pub iterations: usize,
    /// Best value reached from each start (`NaN` for degenerate starts).
    pub start_values: Vec<f64>,
}

struct Descent {
    gamma: f64,
    u: Vec<f64>,
    z: Vec<f64>,
    t: f64,
    grad_norm: f64,
    iterations: usize,
}

fn descend(problem: &IndefiniteProblem, start: &[f64], tol: f64, max_iter: usize) -> Result<Descent> {
    let unit = |v: &[f64]| {
        let n = norm(v);
        scaled(1.0 / n, v)
    };
    let ntol = 1e-13;
    let mut phi = unit(&problem.projector.x_part(start));
    let mut np = nehari_point(problem, &phi, ntol, 1.0, &vec![0.0; phi.len()])?;
    let sphere_grad = |phi: &[f64], np: &NehariPoint| {
        let g = &np.reduced.grad;
        let c = dot(g, phi);
        g.iter().zip(phi).map(|(a, b)| np.t * (a - c * b)).collect::<Vec<f64>>()
    };
    let mut g = sphere_grad(&phi, &np);
    let mut alpha = 1.0 / np.t.max(1e-12);
    let mut f = np.reduced.j;
    let mut it = 0;
    let mut gn = norm(&np.reduced.grad);
    while it < max_iter && gn > tol {
        it += 1;
        let mut accepted = None;
        let mut a = alpha;
        for _ in 0..40 {
            let trial = unit(&axpy(-a, &g, &phi));
            let tg = np.t;
            let wg = np.reduced.beta.w.clone();
            match nehari_point(problem, &trial, ntol, tg, &wg) {
                Ok(nt) if nt.reduced.j <= f - 1e-4 * a * dot(&g, &g).min(1e300) + 1e-14 * f.abs() => {
                    accepted = Some((trial, nt, a));
                    break;
                }
                _ => a *= 0.5,
            }
        }
        let Some((trial, nt, a_used)) = accepted else {
            break;
        };
        let g_new = sphere_grad(&trial, &nt);
        let s: Vec<f64> = trial.iter().zip(&phi).map(|(x, y)| x - y).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(x, y)| x - y).collect();
        let sy = dot(&s, &y);
        alpha = if sy > 0.0 { dot(&s, &s) / sy } else { 2.0 * a_used };
        phi = trial;
        np = nt;
        g = g_new;
        f = np.reduced.j;
        gn = norm(&np.reduced.grad);
    }
    let u = scaled(np.t, &phi);
    let z: Vec<f64> = u.iter().zip(&np.reduced.beta.w).map(|(a, b)| a + b).collect();
    Ok(Descent { gamma: f, u, z, t: np.t, grad_norm: gn, iterations: it })
}

/// Minimise `J` over the Nehari set from `starts` random directions in `X`
/// (seeded), stopping when `‖∇J‖ ≤ tol`.
pub fn minimize_nehari(problem: &IndefiniteProblem, starts: usize, tol: f64, seed: u64) -> Result<NehariMinimum> {
    let mut r = rng(seed);
    let n = problem.dim();
    let inits: Vec<Vec<f64>> = (0..starts.max(1)).map(|_| (0..n).map(|_| r.sample(StandardNormal)).collect()).collect();
    minimize_nehari_from(problem, &inits, tol)
}

/// As [`minimize_nehari`] from explicit starting directions.
pub fn minimize_nehari_from(problem: &IndefiniteProblem, inits: &[Vec<f64>], tol: f64) -> Result<NehariMinimum> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let mut best: Option<Descent> = None;
    let mut values = Vec::new();
    for s in inits {
        problem.check_len(s)?;
        if norm(&problem.projector.x_part(s)) == 0.0 {
            values.push(f64::NAN);
            continue;
        }
        match descend(problem, s, tol, 5000) {
            Ok(d) => {
                values.push(d.gamma);
                let better = match &best {
                    None => true,
                    Some(b) => d.gamma < b.gamma - 1e-12 * b.gamma.abs() || (d.gamma <= b.gamma + 1e-12 * b.gamma.abs() && d.grad_norm < b.grad_norm),
                };
                if better {
                    best = Some(d);
                }
            }
            Err(Error::Degenerate(_)) => values.push(f64::NAN),
            Err(e) => return Err(e),
        }
    }
    let b = best.ok_or_else(|| Error::Degenerate("all starts degenerate".into()))?;
    if b.grad_norm > tol {
        return Err(Error::NoConvergence { iterations: b.iterations, residual: b.grad_norm });
    }
    Ok(NehariMinimum {
        gamma: b.gamma,
        minimizer: b.u,
        critical_point: b.z,
        nehari_scale: b.t,
        grad_norm: b.grad_norm,
        iterations: b.iterations,
        start_values: values,
    })
}

// ---------------------------------------------------------------------------
// Energy envelope

/// Output of [`energy_bound_audit`].
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    /// Reference level `γ`.
    pub gamma: f64,
    /// Perturbation scales.
    pub scales: Vec<f64>,
    /// `ℒ(z + s·d)`.
    pub lagrangian: Vec<f64>,
    /// `‖∇ℒ(z + s·d)‖`.
    pub grad_norm: Vec<f64>,
    /// Smallest `C ≥ 0` with `γ ≤ ℒ + C‖∇ℒ‖²` at every scale.
    pub fitted_c: f64,
    /// Whether the fitted `C` is finite.
    pub bound_ok: bool,
}

/// Check `γ ≤ ℒ(z_s) + C‖∇ℒ(z_s)‖²` along `z_s = z + s·d` for the given scales.
pub fn energy_bound_audit(problem: &IndefiniteProblem, gamma: f64, z: &[f64], direction: &[f64], scales: &[f64]) -> Result<EnvelopeReport> {
    problem.check_len(z)?;
    problem.check_len(direction)?;
    let (l0, _) = problem.lagrangian(z);
    if !(l0 > 0.0) {
        return Err(Error::Precondition("envelope audit needs a positive energy level at z".into()));
    }
    let nd = norm(direction);
    if nd == 0.0 {
        return Err(Error::InvalidParameter("perturbation direction must be nonzero".into()));
    }
    let d = scaled(1.0 / nd, direction);
    let mut lag = Vec::new();
    let mut gn = Vec::new();
    let mut c = 0.0f64;
    for &s in scales {
        let zs = axpy(s, &d, z);
        let (l, g) = problem.lagrangian(&zs);
        let g2 = dot(&g, &g);
        let gap = gamma - l;
        if gap > 1e-10 * gamma.abs().max(1.0) {
            c = if g2 > 0.0 { c.max(gap / g2) } else { f64::INFINITY };
        }
        lag.push(l);
        gn.push(g2.sqrt());
    }
    Ok(EnvelopeReport { gamma, scales: scales.to_vec(), lagrangian: lag, grad_norm: gn, fitted_c: c, bound_ok: c.is_finite() })
}

/// Nine geometric scales from `1e−3` to `1e−1`.
pub fn default_scales() -> Vec<f64> {
    (0..9).map(|k| 1e-3 * 10f64.powf(k as f64 / 4.0)).collect()
}

/// Unit Gaussian direction.
pub fn random_direction(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let v: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let s = norm(&v);
    scaled(1.0 / s, &v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic(n: usize, seed: u64) -> IndefiniteProblem {
        let psi = SumOfQuartics::random(n, 2 * n, seed);
        let k = psi.growth_constant();
        let mask = (0..n).map(|i| i % 2 == 0).collect();
        IndefiniteProblem::new(Projector::Mask(mask), Box::new(psi), HypothesisConstants::quartic(k)).unwrap()
    }

    #[test]
    fn toy_hypotheses() {
        let rep = check_hypotheses(&IndefiniteProblem::toy(), 10_000, 1).unwrap();
        assert!(rep.h2.abs() < 1e-9);
        assert!(rep.h5 >= -1e-12);
        assert!(rep.h5_relative >= -1e-12 && rep.h5_relative < 0.05);
    }

    #[test]
    fn zero_nonlinearity_reported() {
        let p = IndefiniteProblem::new(Projector::Mask(vec![true, false]), Box::new(ZeroNonlinearity(2)), HypothesisConstants::quartic(1.0)).unwrap();
        match check_hypotheses(&p, 100, 1) {
            Err(Error::Hypothesis { name, .. }) => assert!(name.contains("H3")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_kappa_is_caught() {
        let c = HypothesisConstants { kappa: 1.9, ..HypothesisConstants::quartic(1.0) };
        let p = IndefiniteProblem::new(Projector::Mask(vec![true, false]), Box::new(WeightedQuartic::unit(2)), c).unwrap();
        assert!(matches!(check_hypotheses(&p, 2000, 3), Err(Error::Hypothesis { ref name, .. }) if *name == "H5"));
    }

    #[test]
    fn toy_beta_and_reduced() {
        let p = IndefiniteProblem::toy();
        for x in [-1.3, -0.4, 0.2, 0.9, 1.7] {
            let b = beta(&p, &[x, 0.0], 1e-13).unwrap();
            assert!(b.w.iter().all(|v| v.abs() < 1e-14));
            let r = reduced(&p, &[x, 0.0]).unwrap();
            assert!((r.j - (0.5 * x * x - 0.25 * x.powi(4))).abs() < 1e-14);
            assert!((r.k - (x * x - x.powi(4))).abs() < 1e-13);
            let m = k_estimate_margin(&p, &[x, 0.0]).unwrap();
            assert!((m - 4.0 / 3.0 * x.powi(4)).abs() < 1e-12);
        }
        let zero = IndefiniteProblem::new(Projector::Mask(vec![true, false]), Box::new(ZeroNonlinearity(2)), HypothesisConstants::quartic(1.0)).unwrap();
        assert!(beta(&zero, &[1.0, 0.0], 1e-12).unwrap().w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn generic_beta_matches_ascent_oracle() {
        let n = 10;
        let p = generic(n, 5);
        let phi: Vec<f64> = p.projector().x_part(&random_direction(n, 9));
        let phi = scaled(1.3, &phi);
        let b = beta(&p, &phi, 1e-12).unwrap();
        assert!(b.residual <= 1e-12 && b.iterations <= 30);
        let z: Vec<f64> = phi.iter().zip(&b.w).map(|(a, c)| a + c).collect();
        assert!(dot(&b.w, &b.w) <= 2.0 * p.psi().value(&phi) + 1e-12);
        // Oracle: gradient ascent of ℒ(φ + w) over w ∈ Y from 20 starts.
        let (lz, _) = p.lagrangian(&z);
        for s in 0..20 {
            let mut w = p.projector().y_part(&random_direction(n, 100 + s));
            let lag = |w: &[f64]| {
                let zz: Vec<f64> = phi.iter().zip(w).map(|(a, c)| a + c).collect();
                p.lagrangian(&zz)
            };
            let ys: Vec<usize> = (0..n).filter(|i| i % 2 == 1).collect();
            let mut mu = 1.0;
            for _ in 0..500 {
                let (l, g) = lag(&w);
                let gy: Vec<f64> = ys.iter().map(|&i| g[i]).collect();
                if norm(&gy) < 1e-14 {
                    break;
                }
                let zz: Vec<f64> = phi.iter().zip(&w).map(|(a, c)| a + c).collect();
                // Dense Hessian of ℒ restricted to Y: −I − ∇²Ψ.
                let mut h = DMatrix::<f64>::zeros(ys.len(), ys.len());
                for (c, &j) in ys.iter().enumerate() {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    let hv = p.psi().hessian_apply(&zz, &e);
                    for (r, &i) in ys.iter().enumerate() {
                        h[(r, c)] = -hv[i] - if i == j { 1.0 } else { 0.0 };
                    }
                }
                loop {
                    let m = -&h + DMatrix::<f64>::identity(ys.len(), ys.len()) * mu;
                    let d = m.lu().solve(&nalgebra::DVector::from_vec(gy.clone())).unwrap();
                    let mut wt = w.clone();
                    for (k, &i) in ys.iter().enumerate() {
                        wt[i] += d[k];
                    }
                    let (lt, gt) = lag(&wt);
                    let gyt: f64 = ys.iter().map(|&i| gt[i] * gt[i]).sum::<f64>().sqrt();
                    if lt >= l || gyt < norm(&gy) {
                        w = wt;
                        mu = (mu * 0.3).max(1e-12);
                        break;
                    }
                    mu *= 4.0;
                }
            }
            let d = w.iter().zip(&b.w).map(|(a, c)| (a - c).abs()).fold(0.0, |m: f64, x| if x.is_nan() { f64::INFINITY } else { m.max(x) });
            assert!(d < 1e-8, "start {s}: {d:e}");
            let zz: Vec<f64> = phi.iter().zip(&w).map(|(a, c)| a + c).collect();
            assert!(p.lagrangian(&zz).0 <= lz + 1e-12 * (1.0 + lz.abs()), "{} {}", p.lagrangian(&zz).0, lz);
        }
        // Newton from random starts agrees.
        for s in 0..20 {
            let w0 = scaled(3.0, &random_direction(n, 500 + s));
            let b2 = beta_from(&p, &phi, &w0, 1e-12).unwrap();
            let d = b2.w.iter().zip(&b.w).map(|(a, c)| (a - c).abs()).fold(0.0, |m: f64, x| if x.is_nan() { f64::INFINITY } else { m.max(x) });
            assert!(d < 1e-8);
        }
    }

    #[test]
    fn reduced_gradient_identities() {
        let n = 8;
        let p = generic(n, 11);
        let phi = p.projector().x_part(&scaled(0.8, &random_direction(n, 3)));
        let r = reduced(&p, &phi).unwrap();
        let z: Vec<f64> = phi.iter().zip(&r.beta.w).map(|(a, c)| a + c).collect();
        let (_, gl) = p.lagrangian(&z);
        assert!((norm(&r.grad) - norm(&gl)).abs() < 1e-10);
        let h = 1e-5;
        let mut errs = Vec::new();
        for i in (0..n).step_by(2) {
            let mut a = phi.clone();
            let mut b = phi.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (reduced(&p, &a).unwrap().j - reduced(&p, &b).unwrap().j) / (2.0 * h);
            errs.push((fd - r.grad[i]).abs());
        }
        assert!(errs.iter().all(|e| *e < 1e-7), "{errs:?}");
        let t = 1e-5;
        let dk = nehari_derivative(&p, &phi).unwrap();
        let kp = reduced(&p, &scaled(1.0 + t, &phi)).unwrap().k;
        let km = reduced(&p, &scaled(1.0 - t, &phi)).unwrap().k;
        assert!(((kp - km) / (2.0 * t) - dk).abs() < 1e-7);
    }

    #[test]
    fn nehari_projection_examples() {
        let p = IndefiniteProblem::toy();
        let t = nehari_project(&p, &[1.0, 0.0], 1e-14).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        assert!((reduced(&p, &[t, 0.0]).unwrap().j - 0.25).abs() < 1e-12);
        let g = generic(6, 2);
        let phi = g.projector().x_part(&random_direction(6, 4));
        let t1 = nehari_project(&g, &phi, 1e-14).unwrap();
        let t2 = nehari_project(&g, &scaled(3.0, &phi), 1e-14).unwrap();
        assert!((t1 / 3.0 - t2).abs() < 1e-10 * t1);
        assert!(nehari_derivative(&g, &scaled(t1, &phi)).unwrap() < 0.0);
        let zero = IndefiniteProblem::new(Projector::Mask(vec![true, false]), Box::new(ZeroNonlinearity(2)), HypothesisConstants::quartic(1.0)).unwrap();
        assert!(matches!(nehari_project(&zero, &[1.0, 0.0], 1e-12), Err(Error::Degenerate(_))));
    }

    #[test]
    fn toy_ground_state() {
        let p = IndefiniteProblem::toy();
        let r = minimize_nehari(&p, 4, 1e-10, 1).unwrap();
        assert!((r.gamma - 0.25).abs() < 1e-8);
        assert!((r.minimizer[0].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn diagonal_problem_matches_grid_oracle() {
        let spec = [1.5, 0.8, -1.2, -2.0];
        let p = IndefiniteProblem::diagonal_quartic(&spec).unwrap();
        let r = minimize_nehari(&p, 6, 1e-10, 2).unwrap();
        assert!(r.gamma > 0.0);
        // Oracle: min over directions θ in X of max over (t, y) on a grid.
        let inner = |th: f64| {
            let mut best = f64::NEG_INFINITY;
            let k = 24;
            for a in 0..=k {
                for b in 0..=k {
                    let y = [-0.6 + 1.2 * a as f64 / k as f64, -0.6 + 1.2 * b as f64 / k as f64];
                    let f = |t: f64| p.lagrangian(&[t * th.cos(), t * th.sin(), y[0], y[1]]).0;
                    let (mut lo, mut hi) = (0.0, 4.0);
                    for _ in 0..80 {
                        let m1 = lo + (hi - lo) * 0.382;
                        let m2 = lo + (hi - lo) * 0.618;
                        if f(m1) < f(m2) {
                            lo = m1;
                        } else {
                            hi = m2;
                        }
                    }
                    best = best.max(f(0.5 * (lo + hi)));
                }
            }
            best
        };
        let mut oracle = f64::INFINITY;
        for i in 0..90 {
            oracle = oracle.min(inner(std::f64::consts::PI * i as f64 / 90.0));
        }
        assert!((r.gamma - oracle).abs() < 1e-4, "{} vs {}", r.gamma, oracle);
        assert!((r.gamma - 0.8f64.powi(2) / 4.0).abs() < 1e-8);
    }

    #[test]
    fn envelope_examples() {
        let p = IndefiniteProblem::toy();
        let rep = energy_bound_audit(&p, 0.25, &[1.0, 0.0], &[1.0, 0.0], &[0.0]).unwrap();
        assert!(rep.lagrangian[0] + 1e-10 >= 0.25);
        let rep = energy_bound_audit(&p, 0.25, &[1.0, 0.0], &[1.0, 0.0], &default_scales()).unwrap();
        assert!(rep.bound_ok && rep.fitted_c < 1.0);
        let rep = energy_bound_audit(&p, 0.25, &[1.0, 0.0], &random_direction(2, 1), &default_scales()).unwrap();
        assert!(rep.bound_ok);
    }

    #[test]
    fn hessian_matches_differences() {
        let p = generic(6, 1);
        let z = random_direction(6, 2);
        let v = random_direction(6, 3);
        let e1 = hessian_fd_error(p.psi(), &z, &v, 1e-3);
        let e2 = hessian_fd_error(p.psi(), &z, &v, 5e-4);
        assert!(e1 < 1e-5 && (e1 / e2 - 4.0).abs() < 0.5);
    }
}

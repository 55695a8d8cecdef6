//! Spectrally truncated Dirac operator on the flat torus `ℝ²/(2πℤ)²` with a
//! selectable spin structure, the functional `Φ(ψ) = ½(‖ψ⁺‖² − ‖ψ⁻‖²) − ¼∫|ψ|⁴`,
//! the kernel best-approximation `T`, the modified functional `Φ̃`, and ground
//! states through [`crate::reduction`].
//!
//! Spinors are stored by their L² coefficients `a` in the basis
//! `u_{k,±} e^{iθ·x}/(2π)`, `θ = k + δ`. Solver coordinates use `√λ·a` so the
//! half-order Sobolev norm on `E⁺ ⊕ E⁻` is Euclidean.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::clifford::{build_rep, C64};
use crate::error::{Error, Result};
use crate::reduction::{
    minimize_nehari_from, HypothesisConstants, IndefiniteProblem, Nonlinearity, Projector,
};
use crate::util::rng;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Fourier offset `δ ∈ {0, ½}²` selecting one of the four spin structures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpinStructure {
    /// Offsets.
    pub delta: [f64; 2],
}

impl SpinStructure {
    /// Validate `δ`.
    pub fn new(delta: [f64; 2]) -> Result<Self> {
        if delta.iter().any(|d| *d != 0.0 && *d != 0.5) {
            return Err(Error::InvalidParameter(format!("spin offsets must be 0 or 0.5, got {delta:?}")));
        }
        Ok(Self { delta })
    }

    /// `δ = (0, 0)`: the only structure with harmonic spinors.
    pub fn is_trivial(&self) -> bool {
        self.delta == [0.0, 0.0]
    }
}

/// One nonzero Fourier mode with its two eigenvectors.
#[derive(Debug, Clone, Serialize)]
pub struct Mode {
    /// Integer frequency `k`.
    pub k: [i64; 2],
    /// `θ = k + δ`.
    pub theta: [f64; 2],
    /// `|θ|`.
    pub lambda: f64,
    /// Eigenvector for `+|θ|`.
    pub u_plus: [C64; 2],
    /// Eigenvector for `−|θ|`.
    pub u_minus: [C64; 2],
}

/// Hermitian symbol `i(θ₁γ₁ + θ₂γ₂)` of the Dirac operator at `θ`.
pub fn symbol(theta: [f64; 2]) -> [[C64; 2]; 2] {
    let rep = build_rep(2).expect("m = 2 is valid");
    let i = C64::new(0.0, 1.0);
    let mut s = [[ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            s[r][c] = i * (rep.generator(1).unwrap()[(r, c)] * theta[0] + rep.generator(2).unwrap()[(r, c)] * theta[1]);
        }
    }
    s
}

fn eigvec(s: &[[C64; 2]; 2], lambda: f64) -> [C64; 2] {
    // (S − λ) v = 0 with S = [[a, b], [b̄, −a]].
    let a = s[0][0].re;
    let b = s[0][1];
    let v = if b.norm() > 1e-300 { [b, C64::new(lambda - a, 0.0)] } else if (lambda - a).abs() < 1e-300 { [C64::new(1.0, 0.0), ZERO] } else { [ZERO, C64::new(1.0, 0.0)] };
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / n, v[1] / n]
}

struct Grid {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Grid {
    fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Self { n, fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }

    fn transform(&self, data: &mut [C64], forward: bool) {
        let n = self.n;
        let f = if forward { &self.fwd } else { &self.inv };
        f.process(data);
        let mut t = vec![ZERO; n * n];
        for r in 0..n {
            for c in 0..n {
                t[c * n + r] = data[r * n + c];
            }
        }
        f.process(&mut t);
        for r in 0..n {
            for c in 0..n {
                data[r * n + c] = t[c * n + r];
            }
        }
    }
}

/// Truncated eigenbasis and quadrature grid.
pub struct SpectralBasis {
    spin: SpinStructure,
    lambda_max: f64,
    modes: Vec<Mode>,
    n_grid: usize,
    grid: Grid,
}

impl std::fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralBasis")
            .field("spin", &self.spin)
            .field("lambda_max", &self.lambda_max)
            .field("modes", &self.modes.len())
            .field("n_grid", &self.n_grid)
            .finish()
    }
}

fn smooth_at_least(n: usize) -> usize {
    (n..).find(|&k| {
        let mut x = k;
        for p in [2, 3, 5] {
            while x % p == 0 {
                x /= p;
            }
        }
        x == 1
    })
    .unwrap()
}

impl SpectralBasis {
    /// Modes with `0 < |k + δ| ≤ Λ_max`; grid size `≥ 4(2Λ_max + 1)` with prime factors `≤ 5`.
    pub fn new(lambda_max: f64, spin: SpinStructure) -> Result<Self> {
        if !(lambda_max >= 1.0) || !lambda_max.is_finite() {
            return Err(Error::InvalidParameter("mode cutoff must be at least 1".into()));
        }
        let kmax = lambda_max.ceil() as i64 + 1;
        let mut modes = Vec::new();
        for k1 in -kmax..=kmax {
            for k2 in -kmax..=kmax {
                let theta = [k1 as f64 + spin.delta[0], k2 as f64 + spin.delta[1]];
                let lambda = theta[0].hypot(theta[1]);
                if lambda == 0.0 || lambda > lambda_max + 1e-12 {
                    continue;
                }
                let s = symbol(theta);
                modes.push(Mode { k: [k1, k2], theta, lambda, u_plus: eigvec(&s, lambda), u_minus: eigvec(&s, -lambda) });
            }
        }
        modes.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap().then(a.k.cmp(&b.k)));
        let n_grid = smooth_at_least(4 * (2 * lambda_max.ceil() as usize + 1));
        Ok(Self { spin, lambda_max, modes, n_grid, grid: Grid::new(n_grid) })
    }

    /// Spin structure.
    pub fn spin(&self) -> SpinStructure {
        self.spin
    }

    /// Mode cutoff.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Nonzero modes, sorted by `|θ|`.
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Grid points per side.
    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    /// Complex dimension of the kernel block.
    pub fn kernel_dim(&self) -> usize {
        if self.spin.is_trivial() {
            2
        } else {
            0
        }
    }

    /// All eigenvalues with multiplicity (kernel zeros included).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.modes.iter().flat_map(|m| [m.lambda, -m.lambda]).collect();
        v.extend(std::iter::repeat(0.0).take(self.kernel_dim()));
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// Smallest positive eigenvalue.
    pub fn smallest_positive(&self) -> f64 {
        self.modes[0].lambda
    }

    fn idx(&self, k: [i64; 2]) -> usize {
        let n = self.n_grid as i64;
        (k[0].rem_euclid(n) * n + k[1].rem_euclid(n)) as usize
    }

    /// Grid values `ψ(x_{ij})` (without the common phase `e^{iδ·x}`), `x_{ij} = 2π(i, j)/n`.
    pub fn to_grid(&self, psi: &TorusSpinor) -> [Vec<C64>; 2] {
        let n = self.n_grid;
        let mut f = [vec![ZERO; n * n], vec![ZERO; n * n]];
        for (m, (ap, am)) in self.modes.iter().zip(psi.plus.iter().zip(&psi.minus)) {
            let i = self.idx(m.k);
            for c in 0..2 {
                f[c][i] += m.u_plus[c] * ap + m.u_minus[c] * am;
            }
        }
        if self.spin.is_trivial() {
            for c in 0..2 {
                f[c][0] += psi.kernel[c];
            }
        }
        let s = 1.0 / (2.0 * PI);
        for c in f.iter_mut() {
            self.grid.transform(c, false);
            for v in c.iter_mut() {
                *v *= s;
            }
        }
        f
    }

    /// L² projection of grid values onto the basis: coefficients `∫⟨e_n, F⟩`.
    pub fn from_grid(&self, mut f: [Vec<C64>; 2]) -> TorusSpinor {
        let n = self.n_grid;
        let s = 2.0 * PI / (n * n) as f64;
        for c in f.iter_mut() {
            self.grid.transform(c, true);
            for v in c.iter_mut() {
                *v *= s;
            }
        }
        let mut out = TorusSpinor::zeros(self);
        for (j, m) in self.modes.iter().enumerate() {
            let i = self.idx(m.k);
            out.plus[j] = m.u_plus[0].conj() * f[0][i] + m.u_plus[1].conj() * f[1][i];
            out.minus[j] = m.u_minus[0].conj() * f[0][i] + m.u_minus[1].conj() * f[1][i];
        }
        if self.spin.is_trivial() {
            out.kernel = [f[0][0], f[1][0]];
        }
        out
    }

    fn cell(&self) -> f64 {
        (2.0 * PI / self.n_grid as f64).powi(2)
    }

    /// `∫|ψ|⁴` by grid quadrature.
    pub fn quartic_integral(&self, psi: &TorusSpinor) -> f64 {
        let g = self.to_grid(psi);
        self.cell() * g[0].iter().zip(&g[1]).map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).powi(2)).sum::<f64>()
    }

    /// `∫|ψ|²` by grid quadrature.
    pub fn l2_grid(&self, psi: &TorusSpinor) -> f64 {
        let g = self.to_grid(psi);
        self.cell() * g[0].iter().zip(&g[1]).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).sum::<f64>()
    }

    /// `(∫|ψ|⁴, coefficients of |ψ|²ψ)`.
    fn cubic(&self, psi: &TorusSpinor) -> (f64, TorusSpinor) {
        let mut g = self.to_grid(psi);
        let mut q = 0.0;
        for i in 0..g[0].len() {
            let r = g[0][i].norm_sqr() + g[1][i].norm_sqr();
            q += r * r;
            g[0][i] *= r;
            g[1][i] *= r;
        }
        (self.cell() * q, self.from_grid(g))
    }

    /// Coefficients of `|r|²v + 2Re⟨r,v⟩r` for grid values `r`.
    fn cubic_derivative_at(&self, g: &[Vec<C64>; 2], v: &TorusSpinor) -> TorusSpinor {
        let mut h = self.to_grid(v);
        for i in 0..g[0].len() {
            let r = g[0][i].norm_sqr() + g[1][i].norm_sqr();
            let d = 2.0 * (g[0][i].conj() * h[0][i] + g[1][i].conj() * h[1][i]).re;
            h[0][i] = h[0][i] * r + g[0][i] * d;
            h[1][i] = h[1][i] * r + g[1][i] * d;
        }
        self.from_grid(h)
    }
}

/// Coefficients in the eigenbasis: `plus[j]`, `minus[j]` for mode `j`, and the kernel block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusSpinor {
    /// `E⁺` coefficients.
    pub plus: Vec<C64>,
    /// `E⁻` coefficients.
    pub minus: Vec<C64>,
    /// Kernel coefficients (zero unless `δ = (0,0)`).
    pub kernel: [C64; 2],
}

impl TorusSpinor {
    /// Zero spinor.
    pub fn zeros(basis: &SpectralBasis) -> Self {
        let n = basis.modes.len();
        Self { plus: vec![ZERO; n], minus: vec![ZERO; n], kernel: [ZERO; 2] }
    }

    /// Gaussian coefficients with standard deviation `amp / (1 + |θ|)`.
    pub fn random(basis: &SpectralBasis, seed: u64, amp: f64) -> Self {
        let mut r = rng(seed);
        let mut g = |s: f64| C64::new(r.sample::<f64, _>(StandardNormal) * s, r.sample::<f64, _>(StandardNormal) * s);
        let mut out = Self::zeros(basis);
        for (j, m) in basis.modes.iter().enumerate() {
            let s = amp / (1.0 + m.lambda);
            out.plus[j] = g(s);
            out.minus[j] = g(s);
        }
        if basis.spin.is_trivial() {
            out.kernel = [g(amp), g(amp)];
        }
        out
    }

    /// Single `E⁺` mode `j` with amplitude `a`.
    pub fn plus_mode(basis: &SpectralBasis, j: usize, a: C64) -> Self {
        let mut out = Self::zeros(basis);
        out.plus[j] = a;
        out
    }

    /// `‖ψ⁺‖²` and `‖ψ⁻‖²` in the half-order norm.
    pub fn half_norms(&self, basis: &SpectralBasis) -> (f64, f64) {
        let mut p = 0.0;
        let mut m = 0.0;
        for (j, md) in basis.modes.iter().enumerate() {
            p += md.lambda * self.plus[j].norm_sqr();
            m += md.lambda * self.minus[j].norm_sqr();
        }
        (p, m)
    }

    /// `Σ|a|²`.
    pub fn l2_coeff(&self) -> f64 {
        self.plus.iter().chain(&self.minus).chain(&self.kernel).map(|a| a.norm_sqr()).sum()
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        Self {
            plus: self.plus.iter().zip(&other.plus).map(|(a, b)| a + b * s).collect(),
            minus: self.minus.iter().zip(&other.minus).map(|(a, b)| a + b * s).collect(),
            kernel: [self.kernel[0] + other.kernel[0] * s, self.kernel[1] + other.kernel[1] * s],
        }
    }

    /// Same spinor with the kernel block replaced.
    pub fn with_kernel(&self, k: [C64; 2]) -> Self {
        Self { kernel: k, ..self.clone() }
    }

    /// Copy onto another basis, keeping coefficients of modes present in both.
    pub fn transfer(&self, from: &SpectralBasis, to: &SpectralBasis) -> Self {
        let mut out = Self::zeros(to);
        for (j, m) in to.modes.iter().enumerate() {
            if let Some(i) = from.modes.iter().position(|x| x.k == m.k) {
                out.plus[j] = self.plus[i];
                out.minus[j] = self.minus[i];
            }
        }
        if from.spin.is_trivial() && to.spin.is_trivial() {
            out.kernel = self.kernel;
        }
        out
    }
}

/// `Φ(ψ)` and its gradient (`∂/∂Re a + i ∂/∂Im a` per coefficient).
pub fn phi_functional(basis: &SpectralBasis, psi: &TorusSpinor) -> (f64, TorusSpinor) {
    let (p, m) = psi.half_norms(basis);
    let (q, g) = basis.cubic(psi);
    let mut grad = g.axpy(-2.0, &g);
    for (j, md) in basis.modes.iter().enumerate() {
        grad.plus[j] += psi.plus[j] * md.lambda;
        grad.minus[j] -= psi.minus[j] * md.lambda;
    }
    (0.5 * (p - m) - 0.25 * q, grad)
}

// ---------------------------------------------------------------------------
// Best approximation in the kernel

/// Output of [`t_project`].
#[derive(Debug, Clone, Serialize)]
pub struct KernelProjection {
    /// Kernel coefficients of `T(ψ)`.
    pub kernel: [C64; 2],
    /// Final gradient norm of `¼∫|ψ − φ|⁴`.
    pub residual: f64,
    /// Newton steps.
    pub iterations: usize,
}

fn kernel_objective(basis: &SpectralBasis, g: &[Vec<C64>; 2], b: &Vector4<f64>) -> (f64, Vector4<f64>, Matrix4<f64>) {
    let s = 1.0 / (2.0 * PI);
    let c = [C64::new(b[0], b[1]) * s, C64::new(b[2], b[3]) * s];
    let mut val = 0.0;
    let mut grad = Vector4::zeros();
    let mut hess = Matrix4::zeros();
    for i in 0..g[0].len() {
        let r0 = g[0][i] - c[0];
        let r1 = g[1][i] - c[1];
        let rho = Vector4::new(r0.re, r0.im, r1.re, r1.im);
        let n2 = r0.norm_sqr() + r1.norm_sqr();
        val += n2 * n2;
        grad += rho * n2;
        hess += Matrix4::identity() * n2 + rho * rho.transpose() * 2.0;
    }
    let w = basis.cell();
    (0.25 * w * val, -grad * (w * s), hess * (w * s * s))
}

/// `T(ψ)`: the minimiser of `∫|ψ − φ|⁴` over kernel spinors `φ`, by Newton from the L² projection.
pub fn t_project(basis: &SpectralBasis, psi: &TorusSpinor) -> Result<KernelProjection> {
    if !basis.spin.is_trivial() {
        return Ok(KernelProjection { kernel: [ZERO; 2], residual: 0.0, iterations: 0 });
    }
    let g = basis.to_grid(psi);
    let off: f64 = psi.plus.iter().chain(&psi.minus).map(|a| a.norm_sqr()).sum();
    let scale = psi.l2_coeff().sqrt();
    if off.sqrt() <= 1e-15 * scale.max(1e-300) {
        return Ok(KernelProjection { kernel: psi.kernel, residual: 0.0, iterations: 0 });
    }
    let mut b = Vector4::new(psi.kernel[0].re, psi.kernel[0].im, psi.kernel[1].re, psi.kernel[1].im);
    let (mut f, mut grad, mut hess) = kernel_objective(basis, &g, &b);
    let tol = 1e-13 * scale.powi(3).max(1e-300);
    for it in 0..100 {
        if grad.norm() <= tol {
            return Ok(KernelProjection { kernel: [C64::new(b[0], b[1]), C64::new(b[2], b[3])], residual: grad.norm(), iterations: it });
        }
        let ev = hess.symmetric_eigenvalues();
        if ev.min() <= 1e-14 * ev.max().max(1e-300) {
            return Err(Error::Degenerate("kernel Hessian numerically singular".into()));
        }
        let d = hess.cholesky().ok_or_else(|| Error::Degenerate("kernel Hessian not positive".into()))?.solve(&-grad);
        let mut step = 1.0;
        loop {
            let bt = b + d * step;
            let (ft, gt, ht) = kernel_objective(basis, &g, &bt);
            if ft <= f + 1e-4 * step * grad.dot(&d) || gt.norm() < grad.norm() || step < 1e-10 {
                b = bt;
                f = ft;
                grad = gt;
                hess = ht;
                break;
            }
            step *= 0.5;
        }
    }
    Err(Error::NoConvergence { iterations: 100, residual: grad.norm() })
}

/// `Φ̃(ψ) = ½(‖ψ⁺‖² − ‖ψ⁻‖²) − ¼∫|ψ − T(ψ)|⁴` on `E⁺ ⊕ E⁻` and its gradient.
pub fn tilde_phi(basis: &SpectralBasis, psi: &TorusSpinor) -> Result<(f64, TorusSpinor)> {
    if psi.kernel.iter().any(|k| k.norm() != 0.0) {
        return Err(Error::Precondition("tilde functional takes spinors without kernel part".into()));
    }
    if !basis.spin.is_trivial() {
        return Ok(phi_functional(basis, psi));
    }
    let t = t_project(basis, psi)?;
    let r = psi.with_kernel([-t.kernel[0], -t.kernel[1]]);
    let (p, m) = psi.half_norms(basis);
    let (q, g) = basis.cubic(&r);
    let mut grad = g.axpy(-2.0, &g);
    for (j, md) in basis.modes.iter().enumerate() {
        grad.plus[j] += psi.plus[j] * md.lambda;
        grad.minus[j] -= psi.minus[j] * md.lambda;
    }
    Ok((0.5 * (p - m) - 0.25 * q, grad))
}

// ---------------------------------------------------------------------------
// Solver coordinates

/// `z = (Re, Im)(√λ a⁺)` followed by `(Re, Im)(√λ a⁻)`.
pub fn to_coords(basis: &SpectralBasis, psi: &TorusSpinor) -> Vec<f64> {
    let n = basis.modes.len();
    let mut z = vec![0.0; 4 * n];
    for (j, m) in basis.modes.iter().enumerate() {
        let s = m.lambda.sqrt();
        z[2 * j] = psi.plus[j].re * s;
        z[2 * j + 1] = psi.plus[j].im * s;
        z[2 * n + 2 * j] = psi.minus[j].re * s;
        z[2 * n + 2 * j + 1] = psi.minus[j].im * s;
    }
    z
}

/// Inverse of [`to_coords`] (kernel block zero).
pub fn from_coords(basis: &SpectralBasis, z: &[f64]) -> TorusSpinor {
    let n = basis.modes.len();
    let mut psi = TorusSpinor::zeros(basis);
    for (j, m) in basis.modes.iter().enumerate() {
        let s = 1.0 / m.lambda.sqrt();
        psi.plus[j] = C64::new(z[2 * j], z[2 * j + 1]) * s;
        psi.minus[j] = C64::new(z[2 * n + 2 * j], z[2 * n + 2 * j + 1]) * s;
    }
    psi
}

/// Coefficient gradient → coordinate gradient (`∂/∂z = λ^{−1/2} ∂/∂a`).
fn grad_to_coords(basis: &SpectralBasis, g: &TorusSpinor) -> Vec<f64> {
    let n = basis.modes.len();
    let mut z = vec![0.0; 4 * n];
    for (j, m) in basis.modes.iter().enumerate() {
        let s = 1.0 / m.lambda.sqrt();
        z[2 * j] = g.plus[j].re * s;
        z[2 * j + 1] = g.plus[j].im * s;
        z[2 * n + 2 * j] = g.minus[j].re * s;
        z[2 * n + 2 * j + 1] = g.minus[j].im * s;
    }
    z
}

/// `Ψ(z) = ¼∫|ψ − T(ψ)|⁴` in solver coordinates (`T = 0` without kernel).
pub struct TorusNonlinearity {
    basis: Arc<SpectralBasis>,
    cache: Mutex<Option<Linearisation>>,
}

/// Data of `∇²Ψ` at one point, reused across Hessian-vector products.
struct Linearisation {
    z: Vec<f64>,
    grid: [Vec<C64>; 2],
    cols: Vec<TorusSpinor>,
    m4: Option<nalgebra::Cholesky<f64, nalgebra::U4>>,
}

const KERNEL_UNITS: [[C64; 2]; 4] = [
    [C64 { re: 1.0, im: 0.0 }, ZERO],
    [C64 { re: 0.0, im: 1.0 }, ZERO],
    [ZERO, C64 { re: 1.0, im: 0.0 }],
    [ZERO, C64 { re: 0.0, im: 1.0 }],
];

impl TorusNonlinearity {
    /// Wrap a basis.
    pub fn new(basis: Arc<SpectralBasis>) -> Self {
        Self { basis, cache: Mutex::new(None) }
    }

    fn residual_spinor(&self, z: &[f64]) -> TorusSpinor {
        let psi = from_coords(&self.basis, z);
        if self.basis.spin.is_trivial() {
            let t = t_project(&self.basis, &psi).expect("kernel projection of a band-limited spinor");
            psi.with_kernel([-t.kernel[0], -t.kernel[1]])
        } else {
            psi
        }
    }

    fn linearise(&self, z: &[f64]) -> Linearisation {
        let b = &self.basis;
        let grid = b.to_grid(&self.residual_spinor(z));
        let mut cols = Vec::new();
        let mut m4 = None;
        if b.spin.is_trivial() {
            // dT v solves P⁰M P⁰ (dT v) = P⁰ M v with M the linearised cubic at r.
            let mut m = Matrix4::zeros();
            for (c, e) in KERNEL_UNITS.iter().enumerate() {
                let col = b.cubic_derivative_at(&grid, &TorusSpinor::zeros(b).with_kernel(*e));
                for (rr, f) in KERNEL_UNITS.iter().enumerate() {
                    m[(rr, c)] = (f[0].conj() * col.kernel[0] + f[1].conj() * col.kernel[1]).re;
                }
                cols.push(col);
            }
            m4 = m.cholesky();
        }
        Linearisation { z: z.to_vec(), grid, cols, m4 }
    }
}

impl Nonlinearity for TorusNonlinearity {
    fn dim(&self) -> usize {
        4 * self.basis.modes.len()
    }
    fn value(&self, z: &[f64]) -> f64 {
        0.25 * self.basis.quartic_integral(&self.residual_spinor(z))
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.value_gradient(z).1
    }
    fn value_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let (q, g) = self.basis.cubic(&self.residual_spinor(z));
        (0.25 * q, grad_to_coords(&self.basis, &g))
    }
    fn hessian_apply(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let b = &self.basis;
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.as_ref().map_or(true, |l| l.z != z) {
            *cache = Some(self.linearise(z));
        }
        let lin = cache.as_ref().expect("filled above");
        let mut h = b.cubic_derivative_at(&lin.grid, &from_coords(b, v));
        if let Some(ch) = &lin.m4 {
            let rhs = Vector4::new(h.kernel[0].re, h.kernel[0].im, h.kernel[1].re, h.kernel[1].im);
            let dt = ch.solve(&rhs);
            for (k, col) in lin.cols.iter().enumerate() {
                h = h.axpy(-dt[k], col);
            }
        }
        grad_to_coords(b, &h)
    }
}

/// Growth constant `K = λ₁^{−1/2} (N/π)^{1/2}` for `N` complex basis functions.
pub fn torus_growth_constant(basis: &SpectralBasis) -> f64 {
    let n = (2 * basis.modes.len() + basis.kernel_dim()) as f64;
    (n / PI).sqrt() / basis.smallest_positive().sqrt()
}

/// The indefinite problem `X = E⁺`, `Y = E⁻` with `Ψ` from [`TorusNonlinearity`].
pub fn torus_problem(basis: Arc<SpectralBasis>) -> Result<IndefiniteProblem> {
    let n = basis.modes.len();
    let mask = (0..4 * n).map(|i| i < 2 * n).collect();
    let k = torus_growth_constant(&basis);
    IndefiniteProblem::new(Projector::Mask(mask), Box::new(TorusNonlinearity::new(basis)), HypothesisConstants::quartic(k))
}

/// `(m/2)^m ω_m / (2m)` at `m = 2`.
pub const GAMMA_CRIT: f64 = PI;

/// Output of [`solve_ground_state`].
#[derive(Debug, Clone, Serialize)]
pub struct GroundState {
    /// Critical point of `Φ` (kernel block `−T` applied).
    pub psi: TorusSpinor,
    /// `Φ(ψ*)`.
    pub energy: f64,
    /// `∫|ψ*|⁴`.
    pub quartic_mass: f64,
    /// Coefficient-space norm of `∇Φ(ψ*)`, kernel component included.
    pub grad_norm: f64,
    /// `|Φ − ¼∫|ψ|⁴| / |Φ|`.
    pub critical_identity_residual: f64,
    /// `π`.
    pub gamma_crit: f64,
    /// Complex kernel dimension.
    pub kernel_dim: usize,
    /// Number of nonzero modes.
    pub modes: usize,
    /// Nehari scale of the minimiser direction.
    pub nehari_scale: f64,
    /// Outer iterations.
    pub iterations: usize,
    /// Solver coordinates of the critical point of the reduced problem.
    #[serde(skip)]
    pub coords: Vec<f64>,
}

/// Starting directions: the lowest `E⁺` modes one at a time plus random mixtures.
fn starts(basis: &SpectralBasis, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = basis.modes.len();
    let mut out = Vec::new();
    let lowest = basis.smallest_positive();
    let low: Vec<usize> = (0..n).filter(|&j| basis.modes[j].lambda <= lowest + 1e-12).collect();
    let mut z = vec![0.0; 4 * n];
    for &j in &low {
        z[2 * j] = 1.0;
    }
    out.push(z);
    let mut r = rng(seed);
    while out.len() < count.max(1) {
        let mut z = vec![0.0; 4 * n];
        for (j, m) in basis.modes.iter().enumerate() {
            let s = 1.0 / (1.0 + (m.lambda - lowest).powi(2));
            z[2 * j] = r.sample::<f64, _>(StandardNormal) * s;
            z[2 * j + 1] = r.sample::<f64, _>(StandardNormal) * s;
        }
        out.push(z);
    }
    out
}

/// Ground state of the truncated problem by Nehari minimisation.
pub fn solve_ground_state(basis: Arc<SpectralBasis>, tol: f64, seed: u64, start_count: usize) -> Result<GroundState> {
    let inits = starts(&basis, start_count, seed);
    solve_from(basis, tol, &inits)
}

/// As [`solve_ground_state`], seeded from a spinor (e.g. a coarser solution).
pub fn solve_ground_state_from(basis: Arc<SpectralBasis>, tol: f64, start: &TorusSpinor) -> Result<GroundState> {
    let z = to_coords(&basis, &start.with_kernel([ZERO; 2]));
    solve_from(basis, tol, &[z])
}

fn solve_from(basis: Arc<SpectralBasis>, tol: f64, inits: &[Vec<f64>]) -> Result<GroundState> {
    let problem = torus_problem(basis.clone())?;
    let min = minimize_nehari_from(&problem, inits, tol)?;
    let tilde = from_coords(&basis, &min.critical_point);
    let t = t_project(&basis, &tilde)?;
    let psi = tilde.with_kernel([-t.kernel[0], -t.kernel[1]]);
    let (energy, grad) = phi_functional(&basis, &psi);
    let q = basis.quartic_integral(&psi);
    let gz = grad_to_coords(&basis, &grad);
    let gk: f64 = grad.kernel.iter().map(|c| c.norm_sqr()).sum();
    let grad_norm = (gz.iter().map(|x| x * x).sum::<f64>() + gk).sqrt();
    Ok(GroundState {
        critical_identity_residual: (energy - 0.25 * q).abs() / energy.abs(),
        energy,
        quartic_mass: q,
        grad_norm,
        gamma_crit: GAMMA_CRIT,
        kernel_dim: basis.kernel_dim(),
        modes: basis.modes.len(),
        nehari_scale: min.nehari_scale,
        iterations: min.iterations,
        coords: min.critical_point,
        psi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::check_hypotheses;

    fn basis(l: f64, d: [f64; 2]) -> SpectralBasis {
        SpectralBasis::new(l, SpinStructure::new(d).unwrap()).unwrap()
    }

    #[test]
    fn spectrum_examples() {
        let b = basis(3.0, [0.5, 0.5]);
        assert!((b.smallest_positive() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(b.kernel_dim(), 0);
        let e = b.eigenvalues();
        let mut neg: Vec<f64> = e.iter().map(|x| -x).collect();
        neg.sort_by(|a, c| a.partial_cmp(c).unwrap());
        assert_eq!(e, neg);
        assert_eq!(basis(2.0, [0.0, 0.0]).kernel_dim(), 2);
        assert!(SpinStructure::new([0.3, 0.0]).is_err());
        assert!(SpectralBasis::new(0.5, SpinStructure::new([0.0, 0.0]).unwrap()).is_err());
        for m in b.modes() {
            let s = symbol(m.theta);
            for (u, l) in [(m.u_plus, m.lambda), (m.u_minus, -m.lambda)] {
                for r in 0..2 {
                    let v = s[r][0] * u[0] + s[r][1] * u[1] - u[r] * l;
                    assert!(v.norm() < 1e-13);
                }
            }
            let ip = m.u_plus[0].conj() * m.u_minus[0] + m.u_plus[1].conj() * m.u_minus[1];
            assert!(ip.norm() < 1e-14);
        }
    }

    #[test]
    fn transforms_round_trip_and_parseval() {
        for d in [[0.0, 0.0], [0.5, 0.0], [0.5, 0.5]] {
            let b = basis(4.0, d);
            let psi = TorusSpinor::random(&b, 3, 1.0);
            let back = b.from_grid(b.to_grid(&psi));
            let err = psi.axpy(-1.0, &back).l2_coeff().sqrt();
            assert!(err <= 1e-12);
            assert!((b.l2_grid(&psi) - psi.l2_coeff()).abs() <= 1e-12 * psi.l2_coeff());
        }
        assert_eq!(basis(8.0, [0.0, 0.0]).n_grid(), 72);
    }

    #[test]
    fn single_mode_quartic_matches_direct_sum() {
        let b = basis(3.0, [0.5, 0.0]);
        let a = C64::new(0.7, -0.2);
        for j in [0, 5] {
            let psi = TorusSpinor::plus_mode(&b, j, a);
            // |ψ|² = |a|²/(4π²) constant for one plane wave.
            let exact = (a.norm_sqr() / (4.0 * PI * PI)).powi(2) * 4.0 * PI * PI;
            assert!((b.quartic_integral(&psi) - exact).abs() <= 1e-12 * exact);
            let (v, _) = phi_functional(&b, &psi);
            let l = b.modes()[j].lambda;
            assert!((v - (0.5 * l * a.norm_sqr() - 0.25 * exact)).abs() < 1e-14);
        }
        // Two modes: direct spatial sum at a finer resolution than the FFT grid.
        let mut psi = TorusSpinor::plus_mode(&b, 0, C64::new(1.0, 0.0));
        psi.minus[3] = C64::new(0.0, 0.5);
        let n = 150;
        let mut direct = 0.0;
        for i in 0..n {
            for k in 0..n {
                let x = [2.0 * PI * i as f64 / n as f64, 2.0 * PI * k as f64 / n as f64];
                let mut f = [ZERO; 2];
                for (j, m) in b.modes().iter().enumerate() {
                    let ph = C64::from_polar(1.0 / (2.0 * PI), m.k[0] as f64 * x[0] + m.k[1] as f64 * x[1]);
                    for c in 0..2 {
                        f[c] += (m.u_plus[c] * psi.plus[j] + m.u_minus[c] * psi.minus[j]) * ph;
                    }
                }
                direct += (f[0].norm_sqr() + f[1].norm_sqr()).powi(2);
            }
        }
        direct *= (2.0 * PI / n as f64).powi(2);
        assert!((direct - b.quartic_integral(&psi)).abs() <= 1e-12 * direct);
    }

    #[test]
    fn phi_gradient_matches_differences() {
        let b = basis(3.0, [0.0, 0.5]);
        let psi = TorusSpinor::random(&b, 4, 0.5);
        let (_, g) = phi_functional(&b, &psi);
        let h = 1e-5;
        for j in [0, 3, 7] {
            let mut e = TorusSpinor::zeros(&b);
            e.plus[j] = C64::new(1.0, 0.0);
            let fd = (phi_functional(&b, &psi.axpy(h, &e)).0 - phi_functional(&b, &psi.axpy(-h, &e)).0) / (2.0 * h);
            assert!((fd - g.plus[j].re).abs() < 1e-8);
            let mut e = TorusSpinor::zeros(&b);
            e.minus[j] = C64::new(0.0, 1.0);
            let fd = (phi_functional(&b, &psi.axpy(h, &e)).0 - phi_functional(&b, &psi.axpy(-h, &e)).0) / (2.0 * h);
            assert!((fd - g.minus[j].im).abs() < 1e-8);
        }
    }

    #[test]
    fn kernel_projection_properties() {
        let b = basis(3.0, [0.0, 0.0]);
        let k0 = [C64::new(0.3, 0.1), C64::new(-0.2, 0.4)];
        let inker = TorusSpinor::zeros(&b).with_kernel(k0);
        assert_eq!(t_project(&b, &inker).unwrap().kernel, k0);
        for seed in 0..5 {
            let psi = TorusSpinor::random(&b, seed, 0.8);
            let t = t_project(&b, &psi).unwrap();
            assert!(t.residual <= 1e-12 * psi.l2_coeff().powf(1.5));
            let s = 2.7;
            let ts = t_project(&b, &psi.axpy(s - 1.0, &psi)).unwrap();
            for c in 0..2 {
                assert!((ts.kernel[c] - t.kernel[c] * s).norm() < 1e-10);
            }
            let shifted = psi.with_kernel([psi.kernel[0] + k0[0], psi.kernel[1] + k0[1]]);
            let tt = t_project(&b, &shifted).unwrap();
            for c in 0..2 {
                assert!((tt.kernel[c] - t.kernel[c] - k0[c]).norm() < 1e-10);
            }
        }
        // Grid-search oracle with successive refinement over the kernel 4-ball.
        let psi = TorusSpinor::random(&b, 9, 0.8);
        let t = t_project(&b, &psi).unwrap();
        let g = b.to_grid(&psi);
        let f = |v: &Vector4<f64>| kernel_objective(&b, &g, v).0;
        let mut c = Vector4::new(psi.kernel[0].re, psi.kernel[0].im, psi.kernel[1].re, psi.kernel[1].im);
        let mut rad = 2.0;
        for _ in 0..45 {
            let mut best = (f(&c), c);
            for i in 0..625 {
                let d = Vector4::new((i % 5) as f64, (i / 5 % 5) as f64, (i / 25 % 5) as f64, (i / 125) as f64).map(|x| (x - 2.0) / 2.0 * rad);
                let v = c + d;
                let fv = f(&v);
                if fv < best.0 {
                    best = (fv, v);
                }
            }
            c = best.1;
            rad *= 0.6;
        }
        let newton = Vector4::new(t.kernel[0].re, t.kernel[0].im, t.kernel[1].re, t.kernel[1].im);
        assert!((c - newton).amax() < 1e-6);
    }

    #[test]
    fn tilde_functional_properties() {
        let b = basis(3.0, [0.0, 0.0]);
        for seed in 0..4 {
            let psi = TorusSpinor::random(&b, seed, 0.8).with_kernel([ZERO; 2]);
            let (pt, gt) = tilde_phi(&b, &psi).unwrap();
            let (p, _) = phi_functional(&b, &psi);
            assert!(p <= pt + 1e-14);
            assert!(gt.kernel.iter().map(|c| c.norm()).fold(0.0, f64::max) <= 1e-10);
            let mut e = TorusSpinor::zeros(&b);
            e.plus[2] = C64::new(0.0, 1.0);
            let h = 1e-5;
            let fd = (tilde_phi(&b, &psi.axpy(h, &e)).unwrap().0 - tilde_phi(&b, &psi.axpy(-h, &e)).unwrap().0) / (2.0 * h);
            assert!((fd - gt.plus[2].im).abs() < 1e-8);
        }
        let b = basis(3.0, [0.5, 0.0]);
        let psi = TorusSpinor::random(&b, 1, 0.8);
        assert_eq!(tilde_phi(&b, &psi).unwrap().0, phi_functional(&b, &psi).0);
    }

    #[test]
    fn torus_nonlinearity_hessian_and_hypotheses() {
        for d in [[0.0, 0.0], [0.5, 0.5]] {
            let b = Arc::new(basis(2.0, d));
            let nl = TorusNonlinearity::new(b.clone());
            let z = to_coords(&b, &TorusSpinor::random(&b, 2, 1.0));
            let v = to_coords(&b, &TorusSpinor::random(&b, 3, 1.0));
            let e1 = crate::reduction::hessian_fd_error(&nl, &z, &v, 1e-3);
            let e2 = crate::reduction::hessian_fd_error(&nl, &z, &v, 5e-4);
            assert!(e1 < 1e-5 && e2 < e1, "{e1:e} {e2:e}");
            let p = torus_problem(b.clone()).unwrap();
            let rep = check_hypotheses(&p, 300, 5).unwrap();
            assert!(rep.h5_relative >= 0.0);
        }
    }

    #[test]
    fn small_ground_state() {
        for d in [[0.5, 0.5], [0.0, 0.0]] {
            let b = Arc::new(basis(2.0, d));
            let gs = solve_ground_state(b, 1e-9, 1, 3).unwrap();
            assert!(gs.grad_norm <= 1e-8, "{}", gs.grad_norm);
            assert!(gs.critical_identity_residual <= 1e-6);
            assert!(gs.energy > 0.0);
        }
    }
}

//! The Euclidean test spinor `ψ(x) = m^{(m−1)/2}(1+|x|²)^{−m/2}(1 − x)·Ψ₀`,
//! its rescaling and cutoff, exact derivatives, the Dirac residual, and the
//! constructive choice of `Ψ₀` that cancels a four-index Clifford form.

use crate::clifford::{build_rep, chirality_split, inner, CMat, CliffordRep, Spinor, C64};
use crate::curvature::RiemannTensor;
use crate::error::{Error, Result};

/// Parameters of the rescaled, cut-off test spinor.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSpinorParams {
    /// Dimension.
    pub m: usize,
    /// Unit spinor `Ψ₀`.
    pub psi0: Spinor,
    /// Scale `ε > 0`.
    pub eps: f64,
    /// Cutoff radius `δ > 0`.
    pub delta: f64,
}

impl TestSpinorParams {
    /// Validate and build.
    pub fn new(m: usize, psi0: Spinor, eps: f64, delta: f64) -> Result<Self> {
        let n = 1usize << (m / 2);
        if m < 2 {
            return Err(Error::InvalidDimension { got: m, reason: "test spinor needs m >= 2" });
        }
        if psi0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: psi0.len() });
        }
        if (psi0.norm() - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidParameter(format!("|Ψ₀| = {} is not 1", psi0.norm())));
        }
        if !(eps > 0.0) || !(delta > 0.0) {
            return Err(Error::InvalidParameter("eps and delta must be positive".into()));
        }
        Ok(Self { m, psi0, eps, delta })
    }

    /// Default parameters: first basis spinor, `ε = 1`, `δ = 1`.
    pub fn standard(m: usize) -> Result<Self> {
        let n = 1usize << (m / 2);
        let mut psi0 = Spinor::zeros(n);
        psi0[0] = C64::new(1.0, 0.0);
        Self::new(m, psi0, 1.0, 1.0)
    }

    /// Same parameters with another scale.
    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }
}

/// Critical Sobolev exponent `2m/(m−1)`.
pub fn critical_exponent(m: usize) -> f64 {
    2.0 * m as f64 / (m as f64 - 1.0)
}

/// Radial cutoff: 1 on `[0, δ]`, 0 beyond `2δ`, quintic smoothstep between.
pub fn cutoff(r: f64, delta: f64) -> f64 {
    let t = (r - delta) / delta;
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Radial derivative `η'(r)` of [`cutoff`].
pub fn cutoff_derivative(r: f64, delta: f64) -> f64 {
    let t = (r - delta) / delta;
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        -30.0 * t * t * (1.0 - t) * (1.0 - t) / delta
    }
}

/// Evaluator for the test spinor and its derived fields.
#[derive(Debug, Clone)]
pub struct TestSpinor {
    rep: CliffordRep,
    params: TestSpinorParams,
    scale: f64,
}

impl TestSpinor {
    /// Build from parameters.
    pub fn new(params: TestSpinorParams) -> Result<Self> {
        let rep = build_rep(params.m)?;
        let m = params.m as f64;
        Ok(Self { rep, scale: m.powf((m - 1.0) / 2.0), params })
    }

    /// Representation in use.
    pub fn rep(&self) -> &CliffordRep {
        &self.rep
    }

    /// Parameters in use.
    pub fn params(&self) -> &TestSpinorParams {
        &self.params
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.params.m {
            return Err(Error::DimensionMismatch { expected: self.params.m, got: x.len() });
        }
        Ok(())
    }

    /// `(1 − x)·Ψ₀`.
    fn one_minus_x(&self, x: &[f64]) -> Result<Spinor> {
        Ok(&self.params.psi0 - self.rep.vec_mul(x, &self.params.psi0)?)
    }

    /// `ψ(x)`.
    pub fn psi(&self, x: &[f64]) -> Result<Spinor> {
        self.check(x)?;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let f = self.scale * (1.0 + r2).powf(-(self.params.m as f64) / 2.0);
        Ok(self.one_minus_x(x)? * C64::new(f, 0.0))
    }

    /// `∇_{∂_j}ψ(x)` for a 0-based direction `j`.
    pub fn grad_psi(&self, j: usize, x: &[f64]) -> Result<Spinor> {
        self.check(x)?;
        if j >= self.params.m {
            return Err(Error::IndexOutOfRange { index: j, max: self.params.m - 1 });
        }
        let m = self.params.m as f64;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let a = -m * self.scale * (1.0 + r2).powf(-m / 2.0 - 1.0) * x[j];
        let b = -self.scale * (1.0 + r2).powf(-m / 2.0);
        let gj = &self.rep.generators()[j] * &self.params.psi0;
        Ok(self.one_minus_x(x)? * C64::new(a, 0.0) + gj * C64::new(b, 0.0))
    }

    /// `Dψ(x) = Σ_j γ_j ∇_{∂_j}ψ(x)` from the analytic derivatives.
    pub fn dirac(&self, x: &[f64]) -> Result<Spinor> {
        let mut out = Spinor::zeros(self.rep.spinor_dim());
        for j in 0..self.params.m {
            out += &self.rep.generators()[j] * self.grad_psi(j, x)?;
        }
        Ok(out)
    }

    /// `|Dψ(x) − |ψ(x)|^{2*−2} ψ(x)|` with analytic derivatives.
    pub fn dirac_residual(&self, x: &[f64]) -> Result<f64> {
        let p = self.psi(x)?;
        let rhs = &p * C64::new(p.norm().powf(critical_exponent(self.params.m) - 2.0), 0.0);
        Ok((self.dirac(x)? - rhs).norm())
    }

    /// Same residual with `∇_j` replaced by central differences of step `h`.
    pub fn dirac_residual_fd(&self, x: &[f64], h: f64) -> Result<f64> {
        self.check(x)?;
        let mut d = Spinor::zeros(self.rep.spinor_dim());
        for j in 0..self.params.m {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let g = (self.psi(&xp)? - self.psi(&xm)?) * C64::new(0.5 / h, 0.0);
            d += &self.rep.generators()[j] * g;
        }
        let p = self.psi(x)?;
        let rhs = &p * C64::new(p.norm().powf(critical_exponent(self.params.m) - 2.0), 0.0);
        Ok((d - rhs).norm())
    }

    /// `ψ_ε(x) = ε^{−(m−1)/2} ψ(x/ε)`.
    pub fn psi_eps(&self, x: &[f64]) -> Result<Spinor> {
        let eps = self.params.eps;
        let y: Vec<f64> = x.iter().map(|v| v / eps).collect();
        Ok(self.psi(&y)? * C64::new(eps.powf(-(self.params.m as f64 - 1.0) / 2.0), 0.0))
    }

    /// `φ_ε(x) = η(x) ψ_ε(x)`.
    pub fn phi_eps(&self, x: &[f64]) -> Result<Spinor> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e = cutoff(r, self.params.delta);
        if e == 0.0 {
            self.check(x)?;
            return Ok(Spinor::zeros(self.rep.spinor_dim()));
        }
        Ok(self.psi_eps(x)? * C64::new(e, 0.0))
    }
}

/// Four-index coefficients `A_ijkl` (0-based, dense `m⁴`), used only where
/// `i, j, k` are mutually distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarticCoeffs {
    /// Dimension.
    pub m: usize,
    /// Entries indexed `((i·m + j)·m + k)·m + l`.
    pub a: Vec<f64>,
}

impl QuarticCoeffs {
    /// All zero.
    pub fn zero(m: usize) -> Self {
        Self { m, a: vec![0.0; m.pow(4)] }
    }

    /// Uniform entries in `[−1, 1]`.
    pub fn random(m: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut r = crate::util::rng(seed);
        Self { m, a: (0..m.pow(4)).map(|_| r.gen_range(-1.0..1.0)).collect() }
    }

    /// Unit weight on every permutation of four distinct given indices (0-based).
    pub fn permutation_indicator(m: usize, idx: [usize; 4]) -> Self {
        let mut c = Self::zero(m);
        for &i in &idx {
            for &j in &idx {
                for &k in &idx {
                    for &l in &idx {
                        let mut s = [i, j, k, l];
                        s.sort_unstable();
                        if s.windows(2).all(|w| w[0] != w[1]) {
                            c.set(i, j, k, l, 1.0);
                        }
                    }
                }
            }
        }
        c
    }

    /// Entry `A_ijkl`.
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.a[((i * self.m + j) * self.m + k) * self.m + l]
    }

    /// Set entry `A_ijkl`.
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let m = self.m;
        self.a[((i * m + j) * m + k) * m + l] = v;
    }
}

/// Hermitian matrix `H` with `⟨Υ, HΥ⟩ = Σ A_ijkl Re⟨γ_iγ_jγ_kγ_l Υ, Υ⟩`, the sum
/// running over `i, j, k` mutually distinct and all indices `< limit`.
fn quartic_form_matrix(rep: &CliffordRep, a: &QuarticCoeffs, limit: usize) -> CMat {
    let n = rep.spinor_dim();
    let g = rep.generators();
    let mut acc = CMat::zeros(n, n);
    for i in 0..limit {
        for j in 0..limit {
            if j == i {
                continue;
            }
            let gij = &g[i] * &g[j];
            for k in 0..limit {
                if k == i || k == j {
                    continue;
                }
                let gijk = &gij * &g[k];
                for l in 0..limit {
                    let c = a.get(i, j, k, l);
                    if c != 0.0 {
                        acc += (&gijk * &g[l]) * C64::new(c, 0.0);
                    }
                }
            }
        }
    }
    (&acc + acc.adjoint()) * C64::new(0.5, 0.0)
}

fn hermitian_value(h: &CMat, s: &Spinor) -> f64 {
    inner(s, &(h * s)).re
}

/// `F(Υ) = Σ_{i,j,k distinct; l} A_ijkl Re⟨γ_iγ_jγ_kγ_l Υ, Υ⟩`.
pub fn quartic_form(rep: &CliffordRep, a: &QuarticCoeffs, s: &Spinor) -> f64 {
    hermitian_value(&quartic_form_matrix(rep, a, rep.dim()), s)
}

/// Output of [`find_psi0`].
#[derive(Debug, Clone)]
pub struct Psi0Result {
    /// Unit spinor.
    pub psi0: Spinor,
    /// `|F(Ψ₀)|`.
    pub residual: f64,
    /// Largest modulus of `F` met along the construction, for scale.
    pub scale: f64,
}

fn seed_spinor(n: usize) -> Spinor {
    Spinor::from_fn(n, |p, _| C64::new(1.0 + 0.37 * p as f64, 0.21 * (p as f64 + 1.0).sqrt()))
}

/// Unit spinor `Ψ₀` with `F(Ψ₀) = 0`, built level by level: balance the
/// chirality halves of `γ₁γ₂γ₃γ₄`, then for each further index `d` bisect
/// along the great circle from `Ψ₁` to `γ_d Ψ₁`.
pub fn find_psi0(rep: &CliffordRep, a: &QuarticCoeffs) -> Result<Psi0Result> {
    let m = rep.dim();
    if m < 3 {
        return Err(Error::InvalidDimension { got: m, reason: "Ψ₀ search needs m >= 3" });
    }
    if a.m != m {
        return Err(Error::DimensionMismatch { expected: m, got: a.m });
    }
    let n = rep.spinor_dim();
    let start = seed_spinor(n);
    let start = &start / C64::new(start.norm(), 0.0);
    if m == 3 {
        return Ok(Psi0Result { psi0: start, residual: 0.0, scale: 0.0 });
    }
    let (wp, wm) = chirality_split(rep, &[1, 2, 3, 4]);
    let (up, um) = (&wp * &start, &wm * &start);
    if up.norm() < 1e-8 || um.norm() < 1e-8 {
        return Err(Error::Degenerate("seed spinor lies in one chirality half".into()));
    }
    let bal = &up / C64::new(up.norm(), 0.0) + &um / C64::new(um.norm(), 0.0);
    let mut psi1 = &bal / C64::new(bal.norm(), 0.0);
    let mut scale = 0.0f64;
    for d in 5..=m {
        let h = quartic_form_matrix(rep, a, d);
        let f0 = hermitian_value(&h, &psi1);
        let psi2 = &rep.generators()[d - 1] * &psi1;
        let f1 = hermitian_value(&h, &psi2);
        scale = scale.max(f0.abs()).max(f1.abs());
        if f0.abs() <= 1e-15 * (1.0 + scale) {
            continue;
        }
        if f0 * f1 > 0.0 {
            return Err(Error::Degenerate(format!(
                "no sign change at level {d}: F = {f0:e}, {f1:e}"
            )));
        }
        let at = |t: f64| {
            let u = &psi1 * C64::new(t.cos(), 0.0) + &psi2 * C64::new(t.sin(), 0.0);
            let u = &u / C64::new(u.norm(), 0.0);
            (hermitian_value(&h, &u), u)
        };
        let (mut lo, mut hi) = (0.0, std::f64::consts::FRAC_PI_2);
        let s_lo = f0.signum();
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            let (fm, _) = at(mid);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if fm.signum() == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (fl, ul) = at(lo);
        let (fh, uh) = at(hi);
        psi1 = if fl.abs() <= fh.abs() { ul } else { uh };
    }
    let residual = quartic_form(rep, a, &psi1).abs();
    Ok(Psi0Result { psi0: psi1, residual, scale })
}

/// `|Σ_{i,j} R_iαβj x^α x^β γ_i ∇_{∂_j}ψ(x)|` for a Ricci-flat tensor, together
/// with the size `Σ_{i,j} |R_iαβj x^α x^β| |∇_{∂_j}ψ(x)|` of the summands.
pub fn weyl_contraction_identity(ts: &TestSpinor, r: &RiemannTensor, x: &[f64]) -> Result<(f64, f64)> {
    let m = ts.params().m;
    if m < 4 {
        return Err(Error::InvalidDimension { got: m, reason: "identity is stated for m >= 4" });
    }
    if r.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: r.dim() });
    }
    if !r.is_ricci_flat(1e-12) {
        return Err(Error::Precondition(format!(
            "curvature tensor must be Ricci-flat (max |Ric| = {:e})",
            r.ricci_max_abs()
        )));
    }
    let grads: Vec<Spinor> = (0..m).map(|j| ts.grad_psi(j, x)).collect::<Result<_>>()?;
    let mut sum = Spinor::zeros(ts.rep().spinor_dim());
    let mut size = 0.0;
    for i in 0..m {
        for j in 0..m {
            let mut q = 0.0;
            for a in 0..m {
                for b in 0..m {
                    q += r.get(i, a, b, j) * x[a] * x[b];
                }
            }
            sum += (&ts.rep().generators()[i] * &grads[j]) * C64::new(q, 0.0);
            size += q.abs() * grads[j].norm();
        }
    }
    Ok((sum.norm(), size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{random_riemann, random_weyl};
    use crate::util::{random_unit, rng};
    use rand::Rng;

    fn ts(m: usize) -> TestSpinor {
        TestSpinor::new(TestSpinorParams::standard(m).unwrap()).unwrap()
    }

    fn random_point(r: &mut impl Rng, m: usize, scale: f64) -> Vec<f64> {
        (0..m).map(|_| r.gen_range(-scale..scale)).collect()
    }

    #[test]
    fn params_validation() {
        assert!(TestSpinorParams::standard(1).is_err());
        let p = TestSpinorParams::standard(4).unwrap();
        assert!(TestSpinorParams::new(4, p.psi0.clone() * C64::new(2.0, 0.0), 1.0, 1.0).is_err());
        assert!(TestSpinorParams::new(4, p.psi0.clone(), 0.0, 1.0).is_err());
        assert!(TestSpinorParams::new(4, p.psi0.clone(), 1.0, -1.0).is_err());
    }

    #[test]
    fn value_at_origin_and_modulus() {
        for m in 2..=8 {
            let t = ts(m);
            let z = vec![0.0; m];
            let c = (m as f64).powf((m as f64 - 1.0) / 2.0);
            assert!((t.psi(&z).unwrap().norm() - c).abs() < 1e-12 * c);
            let mut r = rng(m as u64);
            for _ in 0..20 {
                let x = random_point(&mut r, m, 3.0);
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let e = (m as f64 / (1.0 + r2)).powf((m as f64 - 1.0) / 2.0);
                assert!((t.psi(&x).unwrap().norm() - e).abs() <= 1e-12 * e);
            }
        }
        assert!((ts(2).psi(&[0.0, 0.0]).unwrap().norm() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn decay_at_infinity() {
        let m = 5;
        let t = ts(m);
        let mut x = vec![0.0; m];
        x[2] = 1e3;
        let v = t.psi(&x).unwrap().norm() * 1e3f64.powi(m as i32 - 1);
        assert!((v - (m as f64).powf(2.0)).abs() < 1e-4 * v);
    }

    #[test]
    fn gradient_at_origin() {
        let m = 4;
        let t = ts(m);
        let c = (m as f64).powf(1.5);
        for j in 0..m {
            let g = t.grad_psi(j, &[0.0; 4]).unwrap();
            let e = (&t.rep().generators()[j] * &t.params().psi0) * C64::new(-c, 0.0);
            assert!((g - e).norm() < 1e-13);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = 5;
        let t = ts(m);
        let x = vec![0.3, -0.2, 0.7, 0.1, -0.5];
        let err = |h: f64| {
            let mut worst = 0.0f64;
            for j in 0..m {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[j] += h;
                xm[j] -= h;
                let fd = (t.psi(&xp).unwrap() - t.psi(&xm).unwrap()) * C64::new(0.5 / h, 0.0);
                worst = worst.max((fd - t.grad_psi(j, &x).unwrap()).norm());
            }
            worst
        };
        let slope = (err(1e-2) / err(1e-3)).log10();
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn dirac_equation_holds() {
        for m in 2..=8 {
            let t = ts(m);
            assert!(t.dirac_residual(&vec![0.0; m]).unwrap() <= 1e-10);
            let d0 = t.dirac(&vec![0.0; m]).unwrap();
            let p0 = t.psi(&vec![0.0; m]).unwrap();
            assert!((d0 - p0 * C64::new(m as f64, 0.0)).norm() < 1e-9);
            let mut r = rng(10 + m as u64);
            for _ in 0..100 {
                let x = random_point(&mut r, m, 2.0);
                assert!(t.dirac_residual(&x).unwrap() <= 1e-10);
            }
        }
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.5, 1.0), 1.0);
        assert_eq!(cutoff(2.0, 1.0), 0.0);
        assert!((cutoff(1.5, 1.0) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for k in 0..=100 {
            let v = cutoff(1.0 + k as f64 / 100.0, 1.0);
            assert!(v <= prev);
            prev = v;
        }
        let h = 1e-6;
        let fd = (cutoff(1.3 + h, 1.0) - cutoff(1.3 - h, 1.0)) / (2.0 * h);
        assert!((fd - cutoff_derivative(1.3, 1.0)).abs() < 1e-8);
    }

    #[test]
    fn phi_eps_inside_and_outside() {
        let p = TestSpinorParams::standard(4).unwrap().with_eps(0.1);
        let t = TestSpinor::new(p).unwrap();
        let x = [0.3, 0.2, -0.1, 0.4];
        assert_eq!(t.phi_eps(&x).unwrap(), t.psi_eps(&x).unwrap());
        assert_eq!(t.phi_eps(&[2.5, 0.0, 0.0, 0.0]).unwrap().norm(), 0.0);
    }

    #[test]
    fn psi0_three_dimensions_any_spinor() {
        let rep = build_rep(3).unwrap();
        let a = QuarticCoeffs::random(3, 1);
        let mut r = rng(2);
        for _ in 0..10 {
            let s = Spinor::from_fn(2, |_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
            assert!(quartic_form(&rep, &a, &s).abs() < 1e-14);
        }
        assert!(find_psi0(&rep, &a).unwrap().residual == 0.0);
    }

    #[test]
    fn psi0_four_dimensions_balanced() {
        let rep = build_rep(4).unwrap();
        let a = QuarticCoeffs::permutation_indicator(4, [0, 1, 2, 3]);
        let res = find_psi0(&rep, &a).unwrap();
        assert!(res.residual <= 1e-10);
        let (wp, wm) = rep.volume_projectors().unwrap();
        assert!(((&wp * &res.psi0).norm() - (&wm * &res.psi0).norm()).abs() <= 1e-10);
        assert!((res.psi0.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn psi0_higher_dimensions() {
        for m in [5, 6] {
            let rep = build_rep(m).unwrap();
            for s in 0..10 {
                let a = QuarticCoeffs::random(m, 100 * m as u64 + s);
                let res = find_psi0(&rep, &a).unwrap();
                assert!(res.residual <= 1e-10, "m={m} seed={s} residual {}", res.residual);
                assert!((res.psi0.norm() - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sign_flip_under_last_generator() {
        let m = 5;
        let rep = build_rep(m).unwrap();
        let a = QuarticCoeffs::random(m, 9);
        let mut r = rng(4);
        let s = Spinor::from_fn(4, |_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
        let s = &s / C64::new(s.norm(), 0.0);
        let full = quartic_form_matrix(&rep, &a, m);
        let low = quartic_form_matrix(&rep, &a, m - 1);
        let rest = &full - &low;
        let t = &rep.generators()[m - 1] * &s;
        assert!((hermitian_value(&low, &t) - hermitian_value(&low, &s)).abs() < 1e-12);
        assert!((hermitian_value(&rest, &t) + hermitian_value(&rest, &s)).abs() < 1e-12);
    }

    #[test]
    fn weyl_contraction_vanishes_for_ricci_flat() {
        for m in [4, 5, 6] {
            let t = ts(m);
            let w = random_weyl(m, 20 + m as u64).unwrap();
            let mut r = rng(m as u64);
            for _ in 0..20 {
                let x: Vec<f64> = random_unit(&mut r, m).iter().map(|v| v * r.gen_range(0.1..3.0)).collect();
                let (v, size) = weyl_contraction_identity(&t, &w, &x).unwrap();
                assert!(v <= 1e-10 * size.max(1e-300), "m={m}: {v} vs {size}");
            }
        }
        let t = ts(4);
        assert_eq!(weyl_contraction_identity(&t, &RiemannTensor::zero(4), &[0.1, 0.2, 0.3, 0.4]).unwrap().0, 0.0);
        assert!(matches!(
            weyl_contraction_identity(&t, &random_riemann(4, 1), &[0.1, 0.2, 0.3, 0.4]),
            Err(Error::Precondition(_))
        ));
    }
}

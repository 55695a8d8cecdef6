//! Riemann-tensor algebra at a point and its normal-coordinate expansions.
//!
//! Conventions: `R_ij = Σ_k R_kikj`, `S = Σ_i R_ii`, so that the constant
//! curvature tensor `c(δ_ik δ_jl − δ_il δ_jk)` has `Ric = c(m−1) I`.
//! Derivative jets `R_{ijkl,p}` and `R_{ijkl,pq}` are stored with the
//! derivative slots last. Contracted jets follow the Ricci convention:
//! `R_{αβ,k} = Σ_i R_{iαiβ,k}`.

pub mod jet;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util::sample_directions;
pub use jet::{Jet, JetMatrix, JetSpace};

/// Components `R_ijkl` of a curvature tensor at a point, 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RiemannTensor {
    m: usize,
    c: Vec<f64>,
}

#[inline]
fn idx4(m: usize, i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * m + j) * m + k) * m + l
}

impl RiemannTensor {
    /// The zero tensor.
    pub fn zero(m: usize) -> Self {
        Self {
            m,
            c: vec![0.0; m.pow(4)],
        }
    }

    /// Tensor with components given by `f(i, j, k, l)`; symmetries are not enforced.
    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zero(m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        t.c[idx4(m, i, j, k, l)] = f(i, j, k, l);
                    }
                }
            }
        }
        t
    }

    /// Constant curvature `c(δ_ik δ_jl − δ_il δ_jk)`.
    pub fn constant_curvature(m: usize, c: f64) -> Self {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        Self::from_fn(m, |i, j, k, l| c * (d(i, k) * d(j, l) - d(i, l) * d(j, k)))
    }

    /// Tensor with prescribed symmetric Ricci matrix `s` (row-major `m × m`) and
    /// zero Weyl part. Requires `m ≥ 3`.
    pub fn from_ricci(m: usize, s: &[f64]) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidDimension {
                got: m,
                reason: "Ricci reconstruction needs m >= 3",
            });
        }
        let tr: f64 = (0..m).map(|i| s[i * m + i]).sum();
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let a = 1.0 / (m as f64 - 2.0);
        let b = tr / ((m as f64 - 1.0) * (m as f64 - 2.0));
        Ok(Self::from_fn(m, |i, j, k, l| {
            a * (s[i * m + k] * d(j, l) - s[i * m + l] * d(j, k) + s[j * m + l] * d(i, k)
                - s[j * m + k] * d(i, l))
                - b * (d(i, k) * d(j, l) - d(i, l) * d(j, k))
        }))
    }

    /// Dimension `m`.
    pub fn dim(&self) -> usize {
        self.m
    }

    /// Component `R_ijkl`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.c[idx4(self.m, i, j, k, l)]
    }

    /// Flat component storage.
    pub fn components(&self) -> &[f64] {
        &self.c
    }

    /// Largest component modulus.
    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Squared Frobenius norm `Σ R_ijkl²`.
    pub fn norm_sq(&self) -> f64 {
        self.c.iter().map(|v| v * v).sum()
    }

    /// Worst violation of antisymmetry and pair symmetry.
    pub fn symmetry_residual(&self) -> f64 {
        let m = self.m;
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let r = self.get(i, j, k, l);
                        worst = worst
                            .max((r + self.get(j, i, k, l)).abs())
                            .max((r + self.get(i, j, l, k)).abs())
                            .max((r - self.get(k, l, i, j)).abs());
                    }
                }
            }
        }
        worst
    }

    /// Worst violation of `R_ijkl + R_iklj + R_iljk = 0`.
    pub fn bianchi_residual(&self) -> f64 {
        let m = self.m;
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let s = self.get(i, j, k, l) + self.get(i, k, l, j) + self.get(i, l, j, k);
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Ricci matrix `R_ij = Σ_k R_kikj`, row-major.
    pub fn ricci(&self) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = (0..m).map(|k| self.get(k, i, k, j)).sum();
            }
        }
        out
    }

    /// Scalar curvature.
    pub fn scalar(&self) -> f64 {
        let ric = self.ricci();
        (0..self.m).map(|i| ric[i * self.m + i]).sum()
    }

    /// Largest Ricci component modulus.
    pub fn ricci_max_abs(&self) -> f64 {
        self.ricci().iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Weyl tensor; requires `m ≥ 3`.
    pub fn weyl(&self) -> Result<Self> {
        let ricci_part = Self::from_ricci(self.m, &self.ricci())?;
        Ok(Self {
            m: self.m,
            c: self.c.iter().zip(&ricci_part.c).map(|(a, b)| a - b).collect(),
        })
    }

    /// Whether the Ricci tensor vanishes within `tol` relative to the tensor size.
    pub fn is_ricci_flat(&self, tol: f64) -> bool {
        self.ricci_max_abs() <= tol * self.max_abs().max(1.0)
    }

    fn require_ricci_flat(&self) -> Result<()> {
        if self.is_ricci_flat(1e-12) {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "curvature tensor must be Ricci-flat (max |Ric| = {:e})",
                self.ricci_max_abs()
            )))
        }
    }

    /// Quartic contraction `P_αβkl = Σ_{i,d} R_iαβd R_ikld`, dense `m⁴`.
    pub fn rr_contraction(&self) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m.pow(4)];
        for a in 0..m {
            for b in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let mut s = 0.0;
                        for i in 0..m {
                            for d in 0..m {
                                s += self.get(i, a, b, d) * self.get(i, k, l, d);
                            }
                        }
                        out[idx4(m, a, b, k, l)] = s;
                    }
                }
            }
        }
        out
    }
}

/// Project an arbitrary 4-tensor onto algebraic curvature tensors:
/// antisymmetrise both pairs, symmetrise the pair exchange, then remove the
/// cyclic average.
pub fn project_to_riemann(m: usize, x: &[f64]) -> RiemannTensor {
    let g = |i, j, k, l| x[idx4(m, i, j, k, l)];
    let a = RiemannTensor::from_fn(m, |i, j, k, l| {
        0.25 * (g(i, j, k, l) - g(j, i, k, l) - g(i, j, l, k) + g(j, i, l, k))
    });
    let b = RiemannTensor::from_fn(m, |i, j, k, l| 0.5 * (a.get(i, j, k, l) + a.get(k, l, i, j)));
    RiemannTensor::from_fn(m, |i, j, k, l| {
        b.get(i, j, k, l) - (b.get(i, j, k, l) + b.get(i, k, l, j) + b.get(i, l, j, k)) / 3.0
    })
}

/// Reproducible random curvature tensor with entries drawn uniformly in `[−1, 1]`
/// before projection.
pub fn random_riemann(m: usize, seed: u64) -> RiemannTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..m.pow(4)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    project_to_riemann(m, &x)
}

/// Weyl part of [`random_riemann`]; Ricci-flat by construction.
pub fn random_weyl(m: usize, seed: u64) -> Result<RiemannTensor> {
    random_riemann(m, seed).weyl()
}

/// Covariant-derivative jets of the curvature at the centre point.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureJets {
    m: usize,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl CurvatureJets {
    /// All derivatives zero.
    pub fn zero(m: usize) -> Self {
        Self {
            m,
            d1: vec![0.0; m.pow(5)],
            d2: vec![0.0; m.pow(6)],
        }
    }

    /// Dimension.
    pub fn dim(&self) -> usize {
        self.m
    }

    /// `R_{ijkl,p}`.
    #[inline]
    pub fn d1(&self, i: usize, j: usize, k: usize, l: usize, p: usize) -> f64 {
        self.d1[idx4(self.m, i, j, k, l) * self.m + p]
    }

    /// `R_{ijkl,pq}`.
    #[inline]
    pub fn d2(&self, i: usize, j: usize, k: usize, l: usize, p: usize, q: usize) -> f64 {
        self.d2[(idx4(self.m, i, j, k, l) * self.m + p) * self.m + q]
    }

    /// Replace the first-derivative slot `p` by a curvature tensor.
    pub fn set_d1_slot(&mut self, p: usize, t: &RiemannTensor) {
        let m = self.m;
        for (n, v) in t.c.iter().enumerate() {
            self.d1[n * m + p] = *v;
        }
    }

    /// Replace the second-derivative slot `(p, q)` by a curvature tensor.
    pub fn set_d2_slot(&mut self, p: usize, q: usize, t: &RiemannTensor) {
        let m = self.m;
        for (n, v) in t.c.iter().enumerate() {
            self.d2[(n * m + p) * m + q] = *v;
        }
    }

    /// Random jets whose every derivative slot is an algebraic curvature tensor;
    /// second-derivative slots are symmetric in `(p, q)`.
    pub fn random(m: usize, seed: u64) -> Self {
        let mut j = Self::zero(m);
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        for p in 0..m {
            s = s.wrapping_add(1);
            j.set_d1_slot(p, &random_riemann(m, s));
        }
        for p in 0..m {
            for q in p..m {
                s = s.wrapping_add(1);
                let t = random_riemann(m, s);
                j.set_d2_slot(p, q, &t);
                j.set_d2_slot(q, p, &t);
            }
        }
        j
    }

    /// Contracted first derivative `R_{αβ,k} = Σ_i R_{iαiβ,k}`.
    pub fn ricci_d1(&self, a: usize, b: usize, k: usize) -> f64 {
        (0..self.m).map(|i| self.d1(i, a, i, b, k)).sum()
    }

    /// Contracted second derivative `R_{αβ,kl} = Σ_i R_{iαiβ,kl}`.
    pub fn ricci_d2(&self, a: usize, b: usize, k: usize, l: usize) -> f64 {
        (0..self.m).map(|i| self.d2(i, a, i, b, k, l)).sum()
    }

    /// Worst violation of `R_{ij,k} + R_{jk,i} + R_{ki,j} = 0`.
    pub fn cyclic_ricci_d1_residual(&self) -> f64 {
        let m = self.m;
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let s = self.ricci_d1(i, j, k) + self.ricci_d1(j, k, i) + self.ricci_d1(k, i, j);
                    worst = worst.max(s.abs());
                }
            }
        }
        worst
    }
}

/// Totally symmetrise a 4-tensor.
pub fn symmetrize4(m: usize, t: &[f64]) -> Vec<f64> {
    const PERMS: [[usize; 4]; 24] = permutations4();
    let mut out = vec![0.0; m.pow(4)];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let ix = [a, b, c, d];
                    let mut s = 0.0;
                    for p in PERMS.iter() {
                        s += t[idx4(m, ix[p[0]], ix[p[1]], ix[p[2]], ix[p[3]])];
                    }
                    out[idx4(m, a, b, c, d)] = s / 24.0;
                }
            }
        }
    }
    out
}

const fn permutations4() -> [[usize; 4]; 24] {
    let mut out = [[0usize; 4]; 24];
    let mut n = 0;
    let mut a = 0;
    while a < 4 {
        let mut b = 0;
        while b < 4 {
            let mut c = 0;
            while c < 4 {
                if a != b && b != c && a != c {
                    out[n] = [a, b, c, 6 - a - b - c];
                    n += 1;
                }
                c += 1;
            }
            b += 1;
        }
        a += 1;
    }
    out
}

/// Weight of the Weyl-squared term in the fourth-order conformal normal
/// coordinate condition `(R_{αβ,kl} + w Σ R_iαβd R_ikld) x^αx^βx^kx^l = 0`.
pub const CNC_QUARTIC_WEIGHT: f64 = 22.0 / 9.0;

/// Second-derivative jets whose symmetrised contraction satisfies the
/// fourth-order normal-coordinate condition exactly. First derivatives are zero.
pub fn make_cnc_jets(r: &RiemannTensor) -> Result<CurvatureJets> {
    let mut jets = CurvatureJets::zero(r.dim());
    fill_cnc_second_jets(r, &mut jets)?;
    Ok(jets)
}

/// Like [`make_cnc_jets`] but also carries random first-derivative jets whose
/// contraction satisfies `R_{ij,k} + R_{jk,i} + R_{ki,j} = 0` while `R_{ij,k}`
/// itself is generically nonzero.
pub fn make_cnc_jets_with_first(r: &RiemannTensor, seed: u64) -> Result<CurvatureJets> {
    let m = r.dim();
    let mut jets = CurvatureJets::zero(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FF_EE00);
    let mut x = vec![0.0; m * m * m];
    for i in 0..m {
        for j in i..m {
            for k in 0..m {
                let v: f64 = rng.gen_range(-1.0..1.0);
                x[(i * m + j) * m + k] = v;
                x[(j * m + i) * m + k] = v;
            }
        }
    }
    let sym = |i: usize, j: usize, k: usize| {
        let g = |a: usize, b: usize, c: usize| x[(a * m + b) * m + c];
        (g(i, j, k) + g(j, k, i) + g(k, i, j) + g(j, i, k) + g(i, k, j) + g(k, j, i)) / 6.0
    };
    for k in 0..m {
        let mut s = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                s[i * m + j] = x[(i * m + j) * m + k] - sym(i, j, k);
            }
        }
        let ricci_part = RiemannTensor::from_ricci(m, &s)?;
        let w = random_weyl(m, seed.wrapping_add(1000 + k as u64))?;
        let slot = RiemannTensor::from_fn(m, |a, b, c, d| ricci_part.get(a, b, c, d) + w.get(a, b, c, d));
        jets.set_d1_slot(k, &slot);
    }
    fill_cnc_second_jets(r, &mut jets)?;
    Ok(jets)
}

fn fill_cnc_second_jets(r: &RiemannTensor, jets: &mut CurvatureJets) -> Result<()> {
    let m = r.dim();
    let z = symmetrize4(m, &r.rr_contraction());
    for p in 0..m {
        for q in 0..m {
            let s: Vec<f64> = (0..m * m)
                .map(|ab| -CNC_QUARTIC_WEIGHT * z[ab * m * m + p * m + q])
                .collect();
            jets.set_d2_slot(p, q, &RiemannTensor::from_ricci(m, &s)?);
        }
    }
    Ok(())
}

/// Sampled supremum over unit vectors of
/// `|(R_{αβ,kl} + (22/9) Σ R_iαβd R_ikld) x^αx^βx^kx^l|`.
pub fn cnc_condition3_residual(r: &RiemannTensor, jets: &CurvatureJets) -> f64 {
    let m = r.dim();
    let p = r.rr_contraction();
    let mut t = vec![0.0; m.pow(4)];
    for a in 0..m {
        for b in 0..m {
            for k in 0..m {
                for l in 0..m {
                    t[idx4(m, a, b, k, l)] =
                        jets.ricci_d2(a, b, k, l) + CNC_QUARTIC_WEIGHT * p[idx4(m, a, b, k, l)];
                }
            }
        }
    }
    sample_directions(m, 512, 0x5EED)
        .iter()
        .map(|x| quartic_form(m, &t, x).abs())
        .fold(0.0, f64::max)
}

fn quartic_form(m: usize, t: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..m {
        for b in 0..m {
            let xab = x[a] * x[b];
            for k in 0..m {
                for l in 0..m {
                    s += t[idx4(m, a, b, k, l)] * xab * x[k] * x[l];
                }
            }
        }
    }
    s
}

/// Homogeneous coefficient tensors of `b_ij − δ_ij`:
/// `b2[i,j,α,β]`, `b3[i,j,α,β,k]`, `b4[i,j,α,β,k,l]`, contracted against
/// `x^α x^β (x^k (x^l))`.
#[derive(Debug, Clone)]
pub struct BCoefficients {
    /// Dimension.
    pub m: usize,
    /// Quadratic coefficients.
    pub b2: Vec<f64>,
    /// Cubic coefficients.
    pub b3: Vec<f64>,
    /// Quartic coefficients.
    pub b4: Vec<f64>,
}

/// Coefficients of `B − I` and `B⁻¹ − I` up to degree four.
pub fn b_coefficients(r: &RiemannTensor, jets: &CurvatureJets) -> (BCoefficients, BCoefficients) {
    let m = r.dim();
    let mut fwd = BCoefficients {
        m,
        b2: vec![0.0; m.pow(4)],
        b3: vec![0.0; m.pow(5)],
        b4: vec![0.0; m.pow(6)],
    };
    let mut inv = fwd.clone();
    for i in 0..m {
        for j in 0..m {
            for a in 0..m {
                for b in 0..m {
                    let n = idx4(m, i, j, a, b);
                    let q = r.get(i, a, b, j);
                    fwd.b2[n] = -q / 6.0;
                    inv.b2[n] = q / 6.0;
                    for k in 0..m {
                        let c = jets.d1(i, a, b, j, k);
                        fwd.b3[n * m + k] = -c / 12.0;
                        inv.b3[n * m + k] = c / 12.0;
                        for l in 0..m {
                            let rr: f64 = (0..m).map(|d| r.get(i, a, b, d) * r.get(j, k, l, d)).sum();
                            let d2 = jets.d2(i, a, b, j, k, l);
                            fwd.b4[(n * m + k) * m + l] = -(d2 / 40.0 - 7.0 * rr / 360.0);
                            inv.b4[(n * m + k) * m + l] = d2 / 40.0 + rr / 120.0;
                        }
                    }
                }
            }
        }
    }
    (fwd, inv)
}

impl BCoefficients {
    /// Assemble `I + (b2 + b3 + b4)` as a jet matrix.
    pub fn to_jet_matrix(&self, space: &Arc<JetSpace>) -> JetMatrix {
        let m = self.m;
        let mut out = JetMatrix::identity(space, m);
        for i in 0..m {
            for j in 0..m {
                let e = out.get_mut(i, j);
                for a in 0..m {
                    for b in 0..m {
                        let n = idx4(m, i, j, a, b);
                        e.add_term(&[a, b], self.b2[n]);
                        for k in 0..m {
                            e.add_term(&[a, b, k], self.b3[n * m + k]);
                            for l in 0..m {
                                e.add_term(&[a, b, k, l], self.b4[(n * m + k) * m + l]);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Evaluate the homogeneous parts of `b − I` at `x`: `(b2(x), b3(x), b4(x))`,
    /// each a row-major `m × m` matrix.
    pub fn eval_parts(&self, x: &[f64]) -> [Vec<f64>; 3] {
        let m = self.m;
        let mut p2 = vec![0.0; m * m];
        let mut p3 = vec![0.0; m * m];
        let mut p4 = vec![0.0; m * m];
        for ij in 0..m * m {
            let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
            for a in 0..m {
                for b in 0..m {
                    let n = (ij * m + a) * m + b;
                    let xab = x[a] * x[b];
                    s2 += self.b2[n] * xab;
                    for k in 0..m {
                        let xabk = xab * x[k];
                        s3 += self.b3[n * m + k] * xabk;
                        let base = (n * m + k) * m;
                        let mut t = 0.0;
                        for l in 0..m {
                            t += self.b4[base + l] * x[l];
                        }
                        s4 += t * xabk;
                    }
                }
            }
            p2[ij] = s2;
            p3[ij] = s3;
            p4[ij] = s4;
        }
        [p2, p3, p4]
    }
}

/// Metric jet `g_ij` through degree four.
pub fn metric_jet(r: &RiemannTensor, jets: &CurvatureJets, space: &Arc<JetSpace>) -> JetMatrix {
    let m = r.dim();
    let mut g = JetMatrix::identity(space, m);
    for i in 0..m {
        for j in 0..m {
            let e = g.get_mut(i, j);
            for a in 0..m {
                for b in 0..m {
                    e.add_term(&[a, b], r.get(i, a, b, j) / 3.0);
                    for k in 0..m {
                        e.add_term(&[a, b, k], jets.d1(i, a, b, j, k) / 6.0);
                        for l in 0..m {
                            let rr: f64 = (0..m).map(|d| r.get(i, a, b, d) * r.get(j, k, l, d)).sum();
                            e.add_term(&[a, b, k, l], jets.d2(i, a, b, j, k, l) / 20.0 + 2.0 * rr / 45.0);
                        }
                    }
                }
            }
        }
    }
    g
}

/// Jets `(B, B⁻¹)` through degree four.
pub fn b_jets(r: &RiemannTensor, jets: &CurvatureJets, space: &Arc<JetSpace>) -> (JetMatrix, JetMatrix) {
    let (fwd, inv) = b_coefficients(r, jets);
    (fwd.to_jet_matrix(space), inv.to_jet_matrix(space))
}

/// Largest coefficient of `B·B·G − I` through degree four.
pub fn b_relation_residual(r: &RiemannTensor, jets: &CurvatureJets) -> f64 {
    let space = JetSpace::new(r.dim(), 4);
    let g = metric_jet(r, jets, &space);
    let (b, _) = b_jets(r, jets, &space);
    let id = JetMatrix::identity(&space, r.dim());
    b.mul(&b).mul(&g).sub(&id).max_abs()
}

/// Largest coefficient of `B·B⁻¹ − I` through degree four.
pub fn b_inverse_residual(r: &RiemannTensor, jets: &CurvatureJets) -> f64 {
    let space = JetSpace::new(r.dim(), 4);
    let (b, binv) = b_jets(r, jets, &space);
    let id = JetMatrix::identity(&space, r.dim());
    b.mul(&binv).sub(&id).max_abs()
}

/// Cubic coefficients `A_ijkαβγ` of the Clifford-valued term Θ, dense `m⁶`
/// (zero unless `i, j, k` are mutually distinct).
#[derive(Debug, Clone)]
pub struct ThetaCoeffs {
    /// Dimension.
    pub m: usize,
    /// Coefficients indexed `((((i·m + j)·m + k)·m + α)·m + β)·m + γ`.
    pub a: Vec<f64>,
}

impl ThetaCoeffs {
    /// `A_ijkαβγ`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, a: usize, b: usize, g: usize) -> f64 {
        let m = self.m;
        self.a[((((i * m + j) * m + k) * m + a) * m + b) * m + g]
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0, |s, v| s.max(v.abs()))
    }
}

/// Coefficients of the vector field Λ: `lambda1[k][α]` for the linear part and
/// `lambda2[k][α][β]` for the quadratic part, so that
/// `Λ_k = lambda1[k,α] x^α + lambda2[k,α,β] x^α x^β`.
#[derive(Debug, Clone)]
pub struct LambdaCoeffs {
    /// Dimension.
    pub m: usize,
    /// Linear coefficients, `m × m`.
    pub lambda1: Vec<f64>,
    /// Quadratic coefficients, `m × m × m`.
    pub lambda2: Vec<f64>,
}

/// Θ coefficients and Λ coefficients.
pub fn theta_lambda_coeffs(r: &RiemannTensor, jets: &CurvatureJets) -> (ThetaCoeffs, LambdaCoeffs) {
    let m = r.dim();
    let mut a = vec![0.0; m.pow(6)];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                if i == j || j == k || k == i {
                    continue;
                }
                for al in 0..m {
                    for be in 0..m {
                        for ga in 0..m {
                            let s: f64 = (0..m)
                                .map(|l| r.get(l, be, ga, k) * (r.get(j, i, al, l) + r.get(j, l, al, i)))
                                .sum();
                            a[((((i * m + j) * m + k) * m + al) * m + be) * m + ga] = -s / 144.0;
                        }
                    }
                }
            }
        }
    }
    let ric = r.ricci();
    let mut lambda1 = vec![0.0; m * m];
    let mut lambda2 = vec![0.0; m * m * m];
    for k in 0..m {
        for al in 0..m {
            lambda1[k * m + al] = -0.25 * ric[al * m + k];
            for be in 0..m {
                lambda2[(k * m + al) * m + be] = -jets.ricci_d1(al, k, be) / 6.0;
            }
        }
    }
    (ThetaCoeffs { m, a }, LambdaCoeffs { m, lambda1, lambda2 })
}

/// Θ coefficients and the components of Λ as degree-two jets.
pub fn theta_lambda(r: &RiemannTensor, jets: &CurvatureJets, space: &Arc<JetSpace>) -> (ThetaCoeffs, Vec<Jet>) {
    let (theta, lam) = theta_lambda_coeffs(r, jets);
    let m = r.dim();
    let comps = (0..m)
        .map(|k| {
            let mut j = Jet::zero(space);
            for al in 0..m {
                j.add_term(&[al], lam.lambda1[k * m + al]);
                for be in 0..m {
                    j.add_term(&[al, be], lam.lambda2[(k * m + al) * m + be]);
                }
            }
            j
        })
        .collect();
    (theta, comps)
}

/// Coefficient of `Σ R_iαβd R_ikld x^αx^βx^kx^l` in the quartic part of `det g`
/// as written in the stated expansion.
pub const DET_QUARTIC_RR_STATED: f64 = 11.0 / 90.0;

/// The value of that coefficient produced by expanding the determinant of the
/// metric jet directly.
pub const DET_QUARTIC_RR_DIRECT: f64 = 1.0 / 90.0;

/// Closed-form determinant expansion
/// `1 − ⅓R_αβ xx − ⅙R_{αβ,k} xxx − (1/20 R_{αβ,kl} + w Σ R R − 1/18 R_αβ R_kl) xxxx`
/// with the curvature-squared weight `w`.
pub fn det_expansion_formula(r: &RiemannTensor, jets: &CurvatureJets, w: f64, space: &Arc<JetSpace>) -> Jet {
    let m = r.dim();
    let ric = r.ricci();
    let p = r.rr_contraction();
    let mut out = Jet::constant(space, 1.0);
    for a in 0..m {
        for b in 0..m {
            out.add_term(&[a, b], -ric[a * m + b] / 3.0);
            for k in 0..m {
                out.add_term(&[a, b, k], -jets.ricci_d1(a, b, k) / 6.0);
                for l in 0..m {
                    let c = jets.ricci_d2(a, b, k, l) / 20.0 + w * p[idx4(m, a, b, k, l)]
                        - ric[a * m + b] * ric[k * m + l] / 18.0;
                    out.add_term(&[a, b, k, l], -c);
                }
            }
        }
    }
    out
}

/// Largest coefficient of `det(g) − formula` with the stated weight 11/90.
pub fn det_expansion_check(r: &RiemannTensor, jets: &CurvatureJets) -> f64 {
    det_expansion_check_with(r, jets, DET_QUARTIC_RR_STATED)
}

/// Largest coefficient of `det(g) − formula` for a chosen curvature-squared weight.
pub fn det_expansion_check_with(r: &RiemannTensor, jets: &CurvatureJets, w: f64) -> f64 {
    let space = JetSpace::new(r.dim(), 4);
    let g = metric_jet(r, jets, &space);
    let det = g.det().expect("metric jet is a perturbation of the identity");
    (&det - &det_expansion_formula(r, jets, w, &space)).max_abs()
}

/// Radial moments `M4 = ∫ x1⁴ w(|x|) dx` and `M22 = ∫ x1² x2² w(|x|) dx`
/// for the weight `w(r) = (1+r²)^{−m}` over a ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTable {
    /// Dimension.
    pub m: usize,
    /// Ball radius (may be infinite).
    pub rho: f64,
    /// `M_αααα`.
    pub m4: f64,
    /// `M_ααββ`, `α ≠ β`.
    pub m22: f64,
}

impl MomentTable {
    /// Full moment `M_αβkl`.
    pub fn get(&self, a: usize, b: usize, k: usize, l: usize) -> f64 {
        let mut ix = [a, b, k, l];
        ix.sort_unstable();
        if ix[0] == ix[3] {
            self.m4
        } else if ix[0] == ix[1] && ix[2] == ix[3] {
            self.m22
        } else {
            0.0
        }
    }
}

/// Leading `ε⁴` coefficient `−(1/24) Σ R_iαβd R_ikld M_αβkl` for Ricci-flat `R`.
pub fn j6_leading(r: &RiemannTensor, moments: &MomentTable) -> Result<f64> {
    r.require_ricci_flat()?;
    let m = r.dim();
    let p = r.rr_contraction();
    let mut s = 0.0;
    for a in 0..m {
        s += p[idx4(m, a, a, a, a)] * moments.m4;
        for b in 0..m {
            if a != b {
                s += (p[idx4(m, a, a, b, b)] + p[idx4(m, a, b, a, b)] + p[idx4(m, a, b, b, a)]) * moments.m22;
            }
        }
    }
    Ok(-s / 24.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_tensor_has_symmetries() {
        for m in 2..=6 {
            let r = random_riemann(m, 7 + m as u64);
            assert!(r.symmetry_residual() <= 1e-13);
            assert!(r.bianchi_residual() <= 1e-13);
            assert!(r.max_abs() > 0.0);
        }
    }

    #[test]
    fn seed_reproducible() {
        assert_eq!(random_riemann(5, 3), random_riemann(5, 3));
        assert_ne!(random_riemann(5, 3), random_riemann(5, 4));
    }

    #[test]
    fn constant_curvature_contractions() {
        for m in 3..=7 {
            let c = 0.7;
            let r = RiemannTensor::constant_curvature(m, c);
            let ric = r.ricci();
            for i in 0..m {
                for j in 0..m {
                    let e = if i == j { c * (m as f64 - 1.0) } else { 0.0 };
                    assert!((ric[i * m + j] - e).abs() < 1e-14);
                }
            }
            assert!((r.scalar() - c * (m * (m - 1)) as f64).abs() < 1e-12);
            assert!(r.weyl().unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn weyl_is_trace_free_and_idempotent() {
        for m in 4..=6 {
            let r = random_riemann(m, 100 + m as u64);
            let w = r.weyl().unwrap();
            assert!(w.ricci_max_abs() <= 1e-12);
            let ww = w.weyl().unwrap();
            let d = w.components().iter().zip(ww.components()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(d <= 1e-12);
        }
    }

    #[test]
    fn weyl_vanishes_in_three_dimensions() {
        for s in 0..5 {
            assert!(random_riemann(3, s).weyl().unwrap().max_abs() <= 1e-12);
        }
        assert!(random_riemann(2, 1).weyl().is_err());
    }

    #[test]
    fn from_ricci_reproduces_ricci() {
        let m = 5;
        let r = random_riemann(m, 9);
        let ric = r.ricci();
        let back = RiemannTensor::from_ricci(m, &ric).unwrap().ricci();
        for (a, b) in ric.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn metric_jet_flat_and_quadratic_block() {
        let m = 4;
        let space = JetSpace::new(m, 4);
        let g0 = metric_jet(&RiemannTensor::zero(m), &CurvatureJets::zero(m), &space);
        assert_eq!(g0.sub(&JetMatrix::identity(&space, m)).max_abs(), 0.0);
        let r = random_riemann(m, 2);
        let g = metric_jet(&r, &CurvatureJets::random(m, 2), &space);
        assert!(g.asymmetry() <= 1e-14);
        let x = [0.3, -0.2, 0.5, 0.1];
        for i in 0..m {
            for j in 0..m {
                let mut q = 0.0;
                for a in 0..m {
                    for b in 0..m {
                        q += r.get(i, a, b, j) * x[a] * x[b];
                    }
                }
                assert!((g.get(i, j).degree_part(2).eval(&x) - q / 3.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn b_jets_flat_are_identity() {
        let m = 4;
        let space = JetSpace::new(m, 4);
        let (b, bi) = b_jets(&RiemannTensor::zero(m), &CurvatureJets::zero(m), &space);
        let id = JetMatrix::identity(&space, m);
        assert_eq!(b.sub(&id).max_abs(), 0.0);
        assert_eq!(bi.sub(&id).max_abs(), 0.0);
    }

    #[test]
    fn b_relations_hold() {
        for m in [4, 6] {
            let r = random_riemann(m, 31);
            let j = CurvatureJets::random(m, 31);
            assert!(b_relation_residual(&r, &j) <= 1e-12);
            assert!(b_inverse_residual(&r, &j) <= 1e-12);
        }
    }

    #[test]
    fn b_quadratic_block() {
        let m = 4;
        let r = random_riemann(m, 1);
        let space = JetSpace::new(m, 4);
        let (b, _) = b_jets(&r, &CurvatureJets::zero(m), &space);
        assert!((b.get(0, 1).coeff(&[2, 3]) + (r.get(0, 2, 3, 1) + r.get(0, 3, 2, 1)) / 6.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_vanishes_when_ricci_flat() {
        let m = 5;
        let space = JetSpace::new(m, 4);
        let w = random_weyl(m, 4).unwrap();
        let (_, lam) = theta_lambda(&w, &CurvatureJets::zero(m), &space);
        assert!(lam.iter().all(|j| j.max_abs() <= 1e-14));
        let (theta, _) = theta_lambda(&RiemannTensor::zero(m), &CurvatureJets::zero(m), &space);
        assert_eq!(theta.max_abs(), 0.0);
    }

    #[test]
    fn cnc_jets_satisfy_condition() {
        for m in [4, 5, 6] {
            let w = random_weyl(m, 50 + m as u64).unwrap();
            let j = make_cnc_jets(&w).unwrap();
            assert!(cnc_condition3_residual(&w, &j) <= 1e-12);
            let j1 = make_cnc_jets_with_first(&w, 3).unwrap();
            assert!(cnc_condition3_residual(&w, &j1) <= 1e-12);
            assert!(j1.cyclic_ricci_d1_residual() <= 1e-13);
            assert!((0..m).any(|k| j1.ricci_d1(0, 1, k).abs() > 1e-3));
        }
        assert_eq!(cnc_condition3_residual(&RiemannTensor::zero(4), &CurvatureJets::zero(4)), 0.0);
        let w = random_weyl(4, 1).unwrap();
        assert!(cnc_condition3_residual(&w, &CurvatureJets::random(4, 1)) > 1e-6);
    }

    #[test]
    fn determinant_expansion_weights() {
        let m = 4;
        assert_eq!(det_expansion_check(&RiemannTensor::zero(m), &CurvatureJets::zero(m)), 0.0);
        let r = random_riemann(m, 12);
        let j = CurvatureJets::random(m, 12);
        assert!(det_expansion_check_with(&r, &j, DET_QUARTIC_RR_DIRECT) <= 1e-12);
        assert!(det_expansion_check(&r, &j) > 1e-3);
    }

    #[test]
    fn j6_identity_and_sign() {
        let m = 5;
        let w = random_weyl(m, 77).unwrap();
        for i in 0..m {
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for a in 0..m {
                for b in 0..m {
                    for d in 0..m {
                        lhs += w.get(i, a, b, d) * w.get(i, b, a, d);
                        rhs += 0.5 * w.get(i, a, b, d).powi(2);
                    }
                }
            }
            assert!((lhs - rhs).abs() <= 1e-12);
        }
        let mo = MomentTable { m, rho: 1.0, m4: 3.0, m22: 1.0 };
        assert!(j6_leading(&w, &mo).unwrap() < 0.0);
        assert_eq!(j6_leading(&RiemannTensor::zero(m), &mo).unwrap(), 0.0);
        assert!(j6_leading(&random_riemann(m, 1), &mo).is_err());
    }
}

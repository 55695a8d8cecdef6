//! Complex Clifford algebra representation.
//!
//! Generators satisfy `γ_i γ_j + γ_j γ_i = -2 δ_ij I` and are anti-Hermitian.
//! They are built from a Pauli ladder: for `m = 2k` the Hermitian matrices
//! `σ3⊗…⊗σ3⊗σ_a⊗I⊗…⊗I` (`a ∈ {1, 2}`) anticommute and square to the identity,
//! and multiplying them by `i` gives the generators. For odd `m` the chirality
//! `σ3⊗…⊗σ3`, times `i`, is appended.
//!
//! Every entry of a generator lies in `{0, ±1, ±i}`, so the algebraic identities
//! hold exactly in floating point.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex scalar used for spinor arithmetic.
pub type C64 = Complex64;
/// A spinor: complex vector of length `N = 2^⌊m/2⌋`.
pub type Spinor = DVector<C64>;
/// Complex `N × N` matrix acting on spinors.
pub type CMat = DMatrix<C64>;

/// Generators of the complex spin representation in dimension `m`.
#[derive(Debug, Clone)]
pub struct CliffordRep {
    m: usize,
    n: usize,
    generators: Vec<CMat>,
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

fn pauli(which: u8) -> CMat {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match which {
        0 => CMat::from_row_slice(2, 2, &[o, z, z, o]),
        1 => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

fn tensor_chain(factors: &[u8]) -> CMat {
    let mut out = CMat::identity(1, 1);
    for &f in factors {
        out = kron(&out, &pauli(f));
    }
    out
}

/// Build the representation for `m ≥ 2`.
pub fn build_rep(m: usize) -> Result<CliffordRep> {
    if m < 2 {
        return Err(Error::InvalidDimension {
            got: m,
            reason: "Clifford representation needs m >= 2",
        });
    }
    let k = m / 2;
    let i = C64::new(0.0, 1.0);
    let mut generators = Vec::with_capacity(m);
    for slot in 0..k {
        for a in [1u8, 2u8] {
            let mut factors = vec![3u8; slot];
            factors.push(a);
            factors.extend(std::iter::repeat(0u8).take(k - slot - 1));
            generators.push(tensor_chain(&factors) * i);
        }
    }
    if m % 2 == 1 {
        generators.push(tensor_chain(&vec![3u8; k]) * i);
    }
    Ok(CliffordRep {
        m,
        n: 1 << k,
        generators,
    })
}

impl CliffordRep {
    /// Ambient dimension `m`.
    pub fn dim(&self) -> usize {
        self.m
    }

    /// Spinor dimension `N = 2^⌊m/2⌋`.
    pub fn spinor_dim(&self) -> usize {
        self.n
    }

    /// Generator `γ_i` with 1-based label `i`.
    pub fn generator(&self, i: usize) -> Result<&CMat> {
        if i == 0 || i > self.m {
            return Err(Error::IndexOutOfRange { index: i, max: self.m });
        }
        Ok(&self.generators[i - 1])
    }

    /// All generators in order `γ_1 … γ_m`.
    pub fn generators(&self) -> &[CMat] {
        &self.generators
    }

    /// Matrix of Clifford multiplication by the real vector `v`: `Σ v_i γ_i`.
    ///
    /// Entries `(a, b)` and `(b, a)` are accumulated in the same order, so the
    /// result is exactly anti-Hermitian.
    pub fn vec_matrix(&self, v: &[f64]) -> Result<CMat> {
        if v.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: v.len(),
            });
        }
        let mut out = CMat::zeros(self.n, self.n);
        for (g, &c) in self.generators.iter().zip(v) {
            if c != 0.0 {
                out += g * C64::new(c, 0.0);
            }
        }
        Ok(out)
    }

    /// Clifford multiplication `v · s = Σ v_i γ_i s`.
    pub fn vec_mul(&self, v: &[f64], s: &Spinor) -> Result<Spinor> {
        if s.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: s.len(),
            });
        }
        if v.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: v.len(),
            });
        }
        let mut out = Spinor::zeros(self.n);
        for (g, &c) in self.generators.iter().zip(v) {
            if c != 0.0 {
                out += (g * s) * C64::new(c, 0.0);
            }
        }
        Ok(out)
    }

    /// Ordered product `γ_{i_1} γ_{i_2} …` of generators with 1-based labels.
    pub fn gamma_word(&self, indices: &[usize]) -> Result<CMat> {
        let mut out = CMat::identity(self.n, self.n);
        for &i in indices {
            out = &out * self.generator(i)?;
        }
        Ok(out)
    }

    /// Projectors `w± = (I ± γ1γ2γ3γ4)/2`; only defined for `m = 4`.
    pub fn volume_projectors(&self) -> Result<(CMat, CMat)> {
        if self.m != 4 {
            return Err(Error::InvalidDimension {
                got: self.m,
                reason: "volume projectors are defined for m = 4",
            });
        }
        Ok(chirality_split(self, &[1, 2, 3, 4]))
    }

    /// Largest entry of `γ_iγ_j + γ_jγ_i + 2δ_ij I` over all pairs.
    pub fn anticommutation_residual(&self) -> f64 {
        let id = CMat::identity(self.n, self.n);
        let mut worst = 0.0f64;
        for i in 0..self.m {
            for j in 0..self.m {
                let mut a = &self.generators[i] * &self.generators[j]
                    + &self.generators[j] * &self.generators[i];
                if i == j {
                    a += &id * C64::new(2.0, 0.0);
                }
                worst = worst.max(max_abs(&a));
            }
        }
        worst
    }

    /// Largest entry of `γ_i† + γ_i` over all generators.
    pub fn antihermitian_residual(&self) -> f64 {
        self.generators
            .iter()
            .map(|g| max_abs(&(g.adjoint() + g)))
            .fold(0.0, f64::max)
    }
}

/// Projectors `(I ± γ_aγ_bγ_cγ_d)/2` for four distinct labels, valid in any
/// dimension `m ≥ 4` because the word is Hermitian and squares to `I`.
pub fn chirality_split(rep: &CliffordRep, labels: &[usize; 4]) -> (CMat, CMat) {
    let w = rep.gamma_word(labels).expect("labels within range");
    let id = CMat::identity(rep.n, rep.n);
    let half = C64::new(0.5, 0.0);
    ((&id + &w) * half, (&id - &w) * half)
}

/// Largest modulus of a matrix entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Hermitian inner product `⟨s, t⟩ = Σ conj(s_a) t_a`.
pub fn inner(s: &Spinor, t: &Spinor) -> C64 {
    s.iter().zip(t.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// `Re⟨A s, s⟩` evaluated pairwise over `(a, b)` and `(b, a)`.
///
/// For an exactly anti-Hermitian `A` each pair cancels bit for bit, so the
/// result is exactly zero.
pub fn re_form(a: &CMat, s: &Spinor) -> f64 {
    let n = s.len();
    let mut acc = 0.0;
    for p in 0..n {
        acc += (a[(p, p)] * s[p].norm_sqr()).re;
        for q in (p + 1)..n {
            let w = s[q].conj() * s[p];
            let wt = s[p].conj() * s[q];
            acc += (a[(q, p)] * w).re + (a[(p, q)] * wt).re;
        }
    }
    acc
}

/// Unit-normalise a spinor.
pub fn normalize(s: &Spinor) -> Spinor {
    let n = s.norm();
    s / C64::new(n, 0.0)
}

/// Row-sparse copy of the generators. In the Pauli-ladder basis every row of
/// every `γ_i` has exactly one nonzero entry, so Clifford multiplication costs
/// `O(N)` per generator.
#[derive(Debug, Clone)]
pub struct SparseGammas {
    m: usize,
    n: usize,
    col: Vec<usize>,
    val: Vec<C64>,
}

impl SparseGammas {
    /// Extract the sparse pattern from a representation.
    pub fn new(rep: &CliffordRep) -> Self {
        let (m, n) = (rep.m, rep.n);
        let mut col = vec![0; m * n];
        let mut val = vec![C64::new(0.0, 0.0); m * n];
        for (i, g) in rep.generators.iter().enumerate() {
            for p in 0..n {
                let q = (0..n).find(|&q| g[(p, q)] != C64::new(0.0, 0.0)).expect("generator rows are nonzero");
                col[i * n + p] = q;
                val[i * n + p] = g[(p, q)];
            }
        }
        Self { m, n, col, val }
    }

    /// Dimension `m`.
    pub fn dim(&self) -> usize {
        self.m
    }

    /// Spinor dimension `N`.
    pub fn spinor_dim(&self) -> usize {
        self.n
    }

    /// `out += c · γ_i s` for a 0-based generator index.
    #[inline]
    pub fn axpy(&self, i: usize, c: C64, s: &[C64], out: &mut [C64]) {
        let base = i * self.n;
        for p in 0..self.n {
            out[p] += c * self.val[base + p] * s[self.col[base + p]];
        }
    }

    /// `γ_i s` for a 0-based index.
    pub fn apply(&self, i: usize, s: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        self.axpy(i, C64::new(1.0, 0.0), s, &mut out);
        out
    }

    /// `Σ_i v_i γ_i s`.
    pub fn vec_mul(&self, v: &[f64], s: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        for (i, &c) in v.iter().enumerate() {
            if c != 0.0 {
                self.axpy(i, C64::new(c, 0.0), s, &mut out);
            }
        }
        out
    }

    /// `Re⟨s, (Σ v_i γ_i) s⟩`, evaluated so that each conjugate pair of
    /// entries cancels before rounding; the result is exactly zero.
    pub fn vec_re_form(&self, v: &[f64], s: &[C64]) -> f64 {
        let mut acc = 0.0;
        for (i, &c) in v.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let base = i * self.n;
            for p in 0..self.n {
                let q = self.col[base + p];
                let a = self.val[base + p] * c;
                if p == q {
                    acc += (a * s[p].norm_sqr()).re;
                } else if p < q {
                    let wt = s[p].conj() * s[q];
                    let w = s[q].conj() * s[p];
                    let aq = self.val[i * self.n + q] * c;
                    acc += (a * wt).re + (aq * w).re;
                }
            }
        }
        acc
    }
}

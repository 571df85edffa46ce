//! Rate-2 4×4 codewords built from four Alamouti blocks, viewed as linear
//! dispersion codes.
//!
//! With `X_A = alamouti(s1, s2)`, `X_B = alamouti(s3, s4)`,
//! `X_C = alamouti(s5, s6)`, `X_D = alamouti(s7, s8)` and `c = cos ρ`,
//! `s = sin ρ`:
//!
//! ```text
//! proposed = [ c X_A + s X_B        c X_C + s X_D ]
//!            [ i (s X_C − c X_D)    s X_A − c X_B ]
//!
//! djabba   = [ c X_A + s X_C        c X_B + s X_D ]
//!            [ i (s X_B − c X_D)    s X_A − c X_C ]
//! ```
//!
//! Weight matrices are obtained by probing the builders with unit symbols,
//! so the builders are the single source of truth.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::numerics::{tilde_vec, vec_stack, CMat, RMat};
use crate::{Error, Result};

/// Transmit antennas.
pub const N_T: usize = 4;
/// Channel uses per codeword.
pub const T: usize = 4;
/// Complex information symbols per codeword.
pub const KAPPA: usize = 8;

/// κ complex constellation symbols `s_1 … s_8`.
pub type SymbolVector = Vec<Complex64>;

/// Golden rotation `tan⁻¹((1 + √5)/2)`.
pub fn golden_angle() -> f64 {
    ((1.0 + 5f64.sqrt()) / 2.0).atan()
}

/// Best known DjABBA rotation `cos⁻¹(0.8881)`.
pub fn djabba_angle() -> f64 {
    0.8881f64.acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodeKind {
    /// The fast-decodable code pairing `(X_A, X_B)` and `(X_C, X_D)`.
    Proposed,
    /// The DjABBA baseline pairing `(X_A, X_C)` and `(X_B, X_D)`.
    Djabba,
}

impl CodeKind {
    pub fn name(self) -> &'static str {
        match self {
            CodeKind::Proposed => "proposed",
            CodeKind::Djabba => "djabba",
        }
    }

    pub fn default_rho(self) -> f64 {
        match self {
            CodeKind::Proposed => golden_angle(),
            CodeKind::Djabba => djabba_angle(),
        }
    }

    /// The R-factor sparsity this code guarantees for every channel.
    pub fn native_pattern(self) -> SparsityPattern {
        match self {
            CodeKind::Proposed => SparsityPattern::Conditional,
            CodeKind::Djabba => SparsityPattern::AlamoutiBlocks,
        }
    }

    pub fn codeword(self, s: &[Complex64], rho: f64) -> CMat {
        match self {
            CodeKind::Proposed => proposed_codeword(s, rho),
            CodeKind::Djabba => djabba_codeword(s, rho),
        }
    }
}

impl fmt::Display for CodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proposed" | "new" => Ok(CodeKind::Proposed),
            "djabba" => Ok(CodeKind::Djabba),
            _ => Err(Error::UnknownCode(s.to_string())),
        }
    }
}

/// Which inner products `⟨h_j, h_k⟩` (and entries of `R`) vanish for every
/// channel, indexed by real symbol position `0..16` in the order
/// `s_1^R, s_1^I, …, s_8^R, s_8^I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsityPattern {
    /// Among the first eight real columns only `(j, j + 4)` pairs couple.
    Conditional,
    /// The four real columns of each Alamouti block are mutually orthogonal.
    AlamoutiBlocks,
}

impl SparsityPattern {
    pub fn name(self) -> &'static str {
        match self {
            SparsityPattern::Conditional => "proposed",
            SparsityPattern::AlamoutiBlocks => "djabba",
        }
    }

    /// Whether columns `j` and `k` are orthogonal under this pattern.
    pub fn orthogonal_pair(self, j: usize, k: usize) -> bool {
        if j == k {
            return false;
        }
        match self {
            SparsityPattern::Conditional => j < 8 && k < 8 && j.abs_diff(k) != 4,
            SparsityPattern::AlamoutiBlocks => j / 4 == k / 4,
        }
    }

    /// Expected-zero mask of the `dim × dim` R factor: the strict lower
    /// triangle plus every upper entry `(j, k)` with an orthogonal pair.
    pub fn r_mask(self, dim: usize) -> Vec<Vec<bool>> {
        (0..dim)
            .map(|j| {
                (0..dim)
                    .map(|k| j > k || (j < k && self.orthogonal_pair(j, k)))
                    .collect()
            })
            .collect()
    }
}

impl fmt::Display for SparsityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SparsityPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(CodeKind::from_str(s)?.native_pattern())
    }
}

/// `[[a, b], [−b*, a*]]`.
pub fn alamouti_block(a: Complex64, b: Complex64) -> CMat {
    CMat::from_vec(2, 2, vec![a, b, -b.conj(), a.conj()])
}

fn combine(x: &CMat, y: &CMat, a: f64, b: f64, phase: Complex64) -> CMat {
    CMat::from_fn(2, 2, |r, c| phase * (x[(r, c)] * a + y[(r, c)] * b))
}

fn assemble(tl: &CMat, tr: &CMat, bl: &CMat, br: &CMat) -> CMat {
    let mut x = CMat::zeros(4, 4);
    x.set_block(0, 0, tl);
    x.set_block(0, 2, tr);
    x.set_block(2, 0, bl);
    x.set_block(2, 2, br);
    x
}

fn alamouti_quad(s: &[Complex64]) -> [CMat; 4] {
    assert_eq!(s.len(), KAPPA, "a codeword carries exactly {KAPPA} symbols");
    [
        alamouti_block(s[0], s[1]),
        alamouti_block(s[2], s[3]),
        alamouti_block(s[4], s[5]),
        alamouti_block(s[6], s[7]),
    ]
}

/// The fast-decodable codeword.
///
/// # Panics
///
/// Panics unless `s.len() == 8`.
pub fn proposed_codeword(s: &[Complex64], rho: f64) -> CMat {
    let [xa, xb, xc, xd] = alamouti_quad(s);
    let (sn, cs) = rho.sin_cos();
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    assemble(
        &combine(&xa, &xb, cs, sn, one),
        &combine(&xc, &xd, cs, sn, one),
        &combine(&xc, &xd, sn, -cs, i),
        &combine(&xa, &xb, sn, -cs, one),
    )
}

/// The DjABBA codeword.
///
/// # Panics
///
/// Panics unless `s.len() == 8`.
pub fn djabba_codeword(s: &[Complex64], rho: f64) -> CMat {
    let [xa, xb, xc, xd] = alamouti_quad(s);
    let (sn, cs) = rho.sin_cos();
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    assemble(
        &combine(&xa, &xc, cs, sn, one),
        &combine(&xb, &xd, cs, sn, one),
        &combine(&xb, &xd, sn, -cs, i),
        &combine(&xa, &xc, sn, -cs, one),
    )
}

/// `A_1 … A_16`: `A_{2j−1}` carries `s_j^R` and `A_{2j}` carries `s_j^I`.
pub fn weight_matrices(code: CodeKind, rho: f64) -> Vec<CMat> {
    let mut out = Vec::with_capacity(2 * KAPPA);
    for j in 0..KAPPA {
        for unit in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
            let mut s = vec![Complex64::new(0.0, 0.0); KAPPA];
            s[j] = unit;
            out.push(code.codeword(&s, rho));
        }
    }
    out
}

/// `G = [vec(A_1)~, …, vec(A_16)~]`, 32×16.
pub fn generator_matrix(code: CodeKind, rho: f64) -> RMat {
    generator_from_weights(&weight_matrices(code, rho))
}

fn generator_from_weights(weights: &[CMat]) -> RMat {
    let cols: Vec<Vec<f64>> = weights.iter().map(|a| tilde_vec(&vec_stack(a))).collect();
    RMat::from_fn(cols[0].len(), cols.len(), |r, c| cols[c][r])
}

/// Static description of a code at a given rotation.
#[derive(Debug, Clone)]
pub struct CodeDescriptor {
    pub kind: CodeKind,
    pub n_t: usize,
    pub t: usize,
    pub kappa: usize,
    pub rho: f64,
    pub weights: Vec<CMat>,
    pub generator: RMat,
}

impl CodeDescriptor {
    pub fn new(kind: CodeKind, rho: f64) -> Self {
        let weights = weight_matrices(kind, rho);
        let generator = generator_from_weights(&weights);
        CodeDescriptor {
            kind,
            n_t: N_T,
            t: T,
            kappa: KAPPA,
            rho,
            weights,
            generator,
        }
    }

    pub fn with_default_rho(kind: CodeKind) -> Self {
        Self::new(kind, kind.default_rho())
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn codeword(&self, s: &[Complex64]) -> CMat {
        self.kind.codeword(s, self.rho)
    }

    /// `Σ s_j^R A_{2j−1} + s_j^I A_{2j}`.
    pub fn codeword_from_weights(&self, s: &[Complex64]) -> CMat {
        assert_eq!(s.len(), self.kappa);
        let mut x = CMat::zeros(self.n_t, self.t);
        for (j, sj) in s.iter().enumerate() {
            x = &x + &self.weights[2 * j].scale(Complex64::new(sj.re, 0.0));
            x = &x + &self.weights[2 * j + 1].scale(Complex64::new(sj.im, 0.0));
        }
        x
    }
}

//! Maximum-likelihood detection on the triangularized real model
//! `min ‖z − R s̃‖²` with `z = Qᵀ ỹ`.
//!
//! Real dimension `2j` carries `s_{j+1}^R` and `2j + 1` carries
//! `s_{j+1}^I`; a square M-QAM point is the product of two √M-PAM levels, so
//! every detector works on per-dimension level indices.
//!
//! Four detectors share the same metric and tie-break (lexicographically
//! smallest vector of real level indices):
//!
//! * [`ml_exhaustive`] visits all `M^κ` leaves of the search tree.
//! * [`ml_sphere`] is a depth-first Schnorr-Euchner search with an infinite
//!   initial radius.
//! * [`ml_fast`] enumerates `(s_5 … s_8)` and, conditioned on it, solves four
//!   independent two-level problems `{s_1^R, s_3^R}`, `{s_1^I, s_3^I}`,
//!   `{s_2^R, s_4^R}`, `{s_2^I, s_4^I}` by slicing.
//! * [`ml_fast_anyconstellation`] replaces the slicing stage by two joint
//!   searches over `{s_1, s_3}` and `{s_2, s_4}`.
//!
//! Counters: `leaf_visits` counts complete candidate evaluations (full
//! vectors for the tree searches, inner group candidates for the conditional
//! decoders) and `metric_evaluations` counts scalar squared residuals.

use std::fmt;
use std::str::FromStr;

use crate::channel::received_vector;
use crate::codes::SparsityPattern;
use crate::constellation::{Constellation, PamAxis};
use crate::numerics::{qr_decompose, tolerances, CMat, QrFactorization, RMat};
use crate::{Error, Result};

/// Largest exhaustive search accepted by default (`2^24` leaves).
pub const DEFAULT_EXHAUSTIVE_BUDGET: u128 = 1 << 24;

/// Upper bound on √M for the stack buffers used by the tree searches.
const MAX_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub metric_evaluations: u64,
    pub leaf_visits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Decided constellation point indices `s_1 … s_κ`.
    pub symbols: Vec<usize>,
    /// Gray bits of `symbols`.
    pub bits: Vec<u8>,
    /// `‖z − R s̃‖²` at the decision.
    pub metric: f64,
    pub counters: Counters,
}

/// Per-codeword detector state: QR of `H_eq` and `z = Qᵀ ỹ`.
#[derive(Debug, Clone)]
pub struct DecoderWorkspace {
    pub qr: QrFactorization,
    pub z: Vec<f64>,
}

impl DecoderWorkspace {
    /// Factorizes `h_eq` and rotates the received block `y` (`N_r × T`).
    pub fn prepare(h_eq: &RMat, y: &CMat) -> Result<Self> {
        Self::prepare_real(h_eq, &received_vector(y))
    }

    /// Same as [`DecoderWorkspace::prepare`] from an already realified `ỹ`.
    pub fn prepare_real(h_eq: &RMat, y: &[f64]) -> Result<Self> {
        if y.len() != h_eq.rows() {
            return Err(Error::DimensionMismatch(format!(
                "received vector has {} entries, equivalent channel has {} rows",
                y.len(),
                h_eq.rows()
            )));
        }
        if !h_eq.cols().is_multiple_of(2) {
            return Err(Error::DimensionMismatch(
                "equivalent channel must have an even number of columns".into(),
            ));
        }
        let qr = qr_decompose(h_eq)?;
        let z = qr.q.transpose().mul_vec(y);
        Ok(DecoderWorkspace { qr, z })
    }

    pub fn r(&self) -> &RMat {
        &self.qr.r
    }

    /// Number of real dimensions `2κ`.
    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn kappa(&self) -> usize {
        self.dim() / 2
    }

    /// Top-left `κ × κ` block of `R`.
    pub fn r1(&self) -> RMat {
        let h = self.kappa();
        self.qr.r.block(0, 0, h, h)
    }

    /// Top-right `κ × κ` block of `R`.
    pub fn r2(&self) -> RMat {
        let h = self.kappa();
        self.qr.r.block(0, h, h, h)
    }

    /// Bottom-right `κ × κ` block of `R`.
    pub fn r4(&self) -> RMat {
        let h = self.kappa();
        self.qr.r.block(h, h, h, h)
    }

    /// Workspace with `(z, R)` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        DecoderWorkspace {
            qr: QrFactorization {
                q: self.qr.q.clone(),
                r: self.qr.r.scale(factor),
                colnorms: self.qr.colnorms.iter().map(|c| c * factor).collect(),
            },
            z: self.z.iter().map(|v| v * factor).collect(),
        }
    }

    /// `‖z − R s̃‖²` for the given point indices.
    pub fn metric_of(&self, cons: &Constellation, symbols: &[usize]) -> f64 {
        let s: Vec<f64> = symbols
            .iter()
            .flat_map(|&p| {
                let v = cons.point(p);
                [v.re, v.im]
            })
            .collect();
        let rs = self.qr.r.mul_vec(&s);
        self.z.iter().zip(&rs).map(|(a, b)| (a - b).powi(2)).sum()
    }

    /// Largest relative magnitude `|R[j][k]| / ‖h_k‖` over the upper-triangle
    /// entries of the first `κ` rows and columns that `pattern` says vanish,
    /// with its position.
    pub fn structure_violation(&self, pattern: SparsityPattern) -> (f64, usize, usize) {
        let h = self.kappa();
        let mut worst = (0.0, 0, 0);
        for k in 0..h {
            let hk = self.qr.input_column_norm(k);
            for j in 0..k {
                if pattern.orthogonal_pair(j, k) {
                    let v = self.qr.r[(j, k)].abs() / hk;
                    if v > worst.0 {
                        worst = (v, j, k);
                    }
                }
            }
        }
        worst
    }

    /// Fails with [`Error::StructureViolation`] unless `R_1` has the sparsity
    /// of `pattern` within the factorization tolerance.
    pub fn check_structure(&self, pattern: SparsityPattern) -> Result<()> {
        let (magnitude, row, col) = self.structure_violation(pattern);
        if magnitude > tolerances().factorization {
            return Err(Error::StructureViolation {
                row,
                col,
                magnitude,
            });
        }
        Ok(())
    }
}

/// `true` when `(metric, idx)` beats `(best, best_idx)`.
fn improves(metric: f64, idx: &[usize], best: f64, best_idx: &[usize]) -> bool {
    metric < best || (metric == best && idx < best_idx)
}

fn finish(cons: &Constellation, levels: &[usize], metric: f64, counters: Counters) -> DecodeResult {
    let symbols: Vec<usize> = levels
        .chunks_exact(2)
        .map(|p| cons.index_from_levels(p[0], p[1]))
        .collect();
    let bits = cons.symbols_to_bits(&symbols);
    DecodeResult {
        symbols,
        bits,
        metric,
        counters,
    }
}

fn check_side(cons: &Constellation) -> Result<()> {
    if cons.side() > MAX_SIDE {
        return Err(Error::UnsupportedOrder(cons.order()));
    }
    Ok(())
}

/// Level indices of `axis` ordered by distance to `center`, nearest first;
/// equal distances go to the lower level.
fn zigzag(center: f64, axis: &PamAxis, out: &mut [usize; MAX_SIDE]) -> usize {
    let levels = axis.levels();
    let n = levels.len();
    let first = axis.slice_index(center);
    out[0] = first;
    let (mut lo, mut hi) = (first as isize - 1, first + 1);
    for slot in out.iter_mut().take(n).skip(1) {
        let take_lo = if lo < 0 {
            false
        } else if hi >= n {
            true
        } else {
            center - levels[lo as usize] <= levels[hi] - center
        };
        if take_lo {
            *slot = lo as usize;
            lo -= 1;
        } else {
            *slot = hi;
            hi += 1;
        }
    }
    n
}

/// Depth-first search over rows `dim − 1 … 0` of `R`.
struct TreeSearch<'a> {
    r: &'a RMat,
    z: &'a [f64],
    axis: &'a PamAxis,
    prune: bool,
    x: Vec<f64>,
    idx: Vec<usize>,
    best: f64,
    best_idx: Vec<usize>,
    counters: Counters,
}

impl<'a> TreeSearch<'a> {
    fn new(ws: &'a DecoderWorkspace, axis: &'a PamAxis, prune: bool) -> Self {
        let n = ws.dim();
        TreeSearch {
            r: &ws.qr.r,
            z: &ws.z,
            axis,
            prune,
            x: vec![0.0; n],
            idx: vec![0; n],
            best: f64::INFINITY,
            best_idx: vec![usize::MAX; n],
            counters: Counters::default(),
        }
    }

    fn descend(&mut self, row: usize, partial: f64) {
        let n = self.x.len();
        let mut c = self.z[row];
        for k in row + 1..n {
            c -= self.r[(row, k)] * self.x[k];
        }
        let diag = self.r[(row, row)];
        let mut order = [0usize; MAX_SIDE];
        let count = if self.prune {
            zigzag(c / diag, self.axis, &mut order)
        } else {
            let n = self.axis.len();
            for (i, o) in order.iter_mut().enumerate().take(n) {
                *o = i;
            }
            n
        };
        for &li in &order[..count] {
            let level = self.axis.level(li);
            let e = c - diag * level;
            let d = partial + e * e;
            self.counters.metric_evaluations += 1;
            // Children come in nondecreasing distance, so the rest are no better.
            if self.prune && d > self.best {
                break;
            }
            self.x[row] = level;
            self.idx[row] = li;
            if row == 0 {
                self.counters.leaf_visits += 1;
                if improves(d, &self.idx, self.best, &self.best_idx) {
                    self.best = d;
                    self.best_idx.copy_from_slice(&self.idx);
                }
            } else {
                self.descend(row - 1, d);
            }
        }
    }

    fn run(mut self, cons: &Constellation) -> DecodeResult {
        let n = self.x.len();
        self.descend(n - 1, 0.0);
        finish(cons, &self.best_idx, self.best, self.counters)
    }
}

/// Exhaustive ML search with the default budget.
pub fn ml_exhaustive(ws: &DecoderWorkspace, cons: &Constellation) -> Result<DecodeResult> {
    ml_exhaustive_with_budget(ws, cons, DEFAULT_EXHAUSTIVE_BUDGET)
}

/// `M^κ`, the exhaustive candidate count.
pub fn exhaustive_candidates(m: usize, kappa: usize) -> u128 {
    (m as u128).pow(kappa as u32)
}

/// Exhaustive ML search over all `M^κ` candidates; refuses larger searches
/// than `budget`.
pub fn ml_exhaustive_with_budget(
    ws: &DecoderWorkspace,
    cons: &Constellation,
    budget: u128,
) -> Result<DecodeResult> {
    check_side(cons)?;
    let needed = exhaustive_candidates(cons.order(), ws.kappa());
    if needed > budget {
        return Err(Error::BudgetExceeded {
            what: "exhaustive ML search",
            needed,
            budget,
        });
    }
    Ok(TreeSearch::new(ws, cons.axis(), false).run(cons))
}

/// Schnorr-Euchner sphere decoder with infinite initial radius.
pub fn ml_sphere(ws: &DecoderWorkspace, cons: &Constellation) -> Result<DecodeResult> {
    check_side(cons)?;
    Ok(TreeSearch::new(ws, cons.axis(), true).run(cons))
}

/// How the first half of the symbols is searched once the second half is fixed.
#[derive(Clone, Copy)]
enum InnerStage {
    /// Four pairs `(j, j + κ/2)` of real dimensions, slicing `j`.
    Sliced,
    /// Two joint complex searches over `{s_1, s_3}` and `{s_2, s_4}`.
    Joint,
}

struct Conditional<'a> {
    r: &'a RMat,
    z: &'a [f64],
    cons: &'a Constellation,
    stage: InnerStage,
    half: usize,
    /// `v` after subtracting the outer columns fixed so far, per outer depth.
    v_stack: Vec<Vec<f64>>,
    x: Vec<f64>,
    idx: Vec<usize>,
    best: f64,
    best_idx: Vec<usize>,
    counters: Counters,
}

impl<'a> Conditional<'a> {
    fn new(ws: &'a DecoderWorkspace, cons: &'a Constellation, stage: InnerStage) -> Self {
        let n = ws.dim();
        let half = n / 2;
        Conditional {
            r: &ws.qr.r,
            z: &ws.z,
            cons,
            stage,
            half,
            v_stack: vec![ws.z[..half].to_vec(); half + 1],
            x: vec![0.0; n],
            idx: vec![0; n],
            best: f64::INFINITY,
            best_idx: vec![usize::MAX; n],
            counters: Counters::default(),
        }
    }

    /// Exhaustive enumeration of the outer dimensions `half..n` (rows of `R_4`).
    fn outer(&mut self, row: usize, partial: f64) {
        let n = self.x.len();
        let half = self.half;
        let mut c = self.z[row];
        for k in row + 1..n {
            c -= self.r[(row, k)] * self.x[k];
        }
        let diag = self.r[(row, row)];
        let axis = self.cons.axis();
        // v_stack[d] holds v with columns row+1..n removed, d = n − 1 − row.
        let depth = n - 1 - row;
        for li in 0..axis.len() {
            let level = axis.level(li);
            let e = c - diag * level;
            let d = partial + e * e;
            self.counters.metric_evaluations += 1;
            self.x[row] = level;
            self.idx[row] = li;
            let (done, rest) = self.v_stack.split_at_mut(depth + 1);
            let next = &mut rest[0];
            let prev = &done[depth];
            for (i, (nv, pv)) in next.iter_mut().zip(prev).enumerate() {
                *nv = pv - self.r[(i, row)] * level;
            }
            if row == half {
                self.inner(d);
            } else {
                self.outer(row - 1, d);
            }
        }
    }

    fn inner(&mut self, outer_metric: f64) {
        let v = std::mem::take(&mut self.v_stack[self.half]);
        let inner_metric = match self.stage {
            InnerStage::Sliced => self.sliced(&v),
            InnerStage::Joint => self.joint(&v),
        };
        self.v_stack[self.half] = v;
        let total = outer_metric + inner_metric;
        if improves(total, &self.idx, self.best, &self.best_idx) {
            self.best = total;
            self.best_idx.copy_from_slice(&self.idx);
        }
    }

    /// Four independent searches over the level of dimension `g + q`, with
    /// dimension `g` obtained by the conditioned hard decision.
    fn sliced(&mut self, v: &[f64]) -> f64 {
        let axis = self.cons.axis();
        let quarter = self.half / 2;
        let mut total = 0.0;
        for g in 0..quarter {
            let (a, b) = (g, g + quarter);
            let (raa, rab, rbb) = (self.r[(a, a)], self.r[(a, b)], self.r[(b, b)]);
            let mut best = f64::INFINITY;
            let mut best_pair = (usize::MAX, usize::MAX);
            for lb in 0..axis.len() {
                let bval = axis.level(lb);
                let la = axis.slice_index((v[a] - rab * bval) / raa);
                let aval = axis.level(la);
                let e1 = v[a] - raa * aval - rab * bval;
                let e2 = v[b] - rbb * bval;
                let m = e1 * e1 + e2 * e2;
                self.counters.leaf_visits += 1;
                self.counters.metric_evaluations += 2;
                if m < best || (m == best && (la, lb) < best_pair) {
                    best = m;
                    best_pair = (la, lb);
                }
            }
            total += best;
            self.idx[a] = best_pair.0;
            self.idx[b] = best_pair.1;
        }
        total
    }

    /// Two joint searches over complex pairs `(s_{g+1}, s_{g+1+κ/4})`,
    /// `g ∈ {0, 1}`.
    fn joint(&mut self, v: &[f64]) -> f64 {
        let quarter = self.half / 2;
        let m = self.cons.order();
        let mut total = 0.0;
        for g in 0..quarter / 2 {
            // Real dimensions of the two complex symbols, in increasing order.
            let dims = [2 * g, 2 * g + 1, 2 * g + quarter, 2 * g + quarter + 1];
            let mut best = f64::INFINITY;
            let mut best_levels = [usize::MAX; 4];
            for p in 0..m {
                let (pr, pi) = self.cons.levels_of(p);
                for q in 0..m {
                    let (qr, qi) = self.cons.levels_of(q);
                    let levels = [pr, pi, qr, qi];
                    let vals = levels.map(|l| self.cons.axis().level(l));
                    let mut metric = 0.0;
                    for (row_pos, &row) in dims.iter().enumerate() {
                        let mut e = v[row];
                        for col_pos in row_pos..4 {
                            e -= self.r[(row, dims[col_pos])] * vals[col_pos];
                        }
                        metric += e * e;
                    }
                    self.counters.leaf_visits += 1;
                    self.counters.metric_evaluations += 4;
                    if metric < best || (metric == best && levels < best_levels) {
                        best = metric;
                        best_levels = levels;
                    }
                }
            }
            total += best;
            for (d, l) in dims.iter().zip(best_levels) {
                self.idx[*d] = l;
            }
        }
        total
    }

    fn run(mut self) -> DecodeResult {
        let n = self.x.len();
        self.outer(n - 1, 0.0);
        finish(self.cons, &self.best_idx, self.best, self.counters)
    }
}

fn check_conditional(ws: &DecoderWorkspace, cons: &Constellation) -> Result<()> {
    check_side(cons)?;
    if !ws.kappa().is_multiple_of(4) {
        return Err(Error::DimensionMismatch(format!(
            "conditional decoding needs κ divisible by 4, got {}",
            ws.kappa()
        )));
    }
    ws.check_structure(SparsityPattern::Conditional)
}

/// Conditional ML decoder for square QAM: `M^{κ/2}` outer candidates, each
/// followed by `κ/2` one-dimensional searches of `√M` levels.
pub fn ml_fast(ws: &DecoderWorkspace, cons: &Constellation) -> Result<DecodeResult> {
    check_conditional(ws, cons)?;
    Ok(Conditional::new(ws, cons, InnerStage::Sliced).run())
}

/// Conditional ML decoder that does not split real and imaginary parts:
/// `M^{κ/2}` outer candidates, each followed by two joint searches over `M²`
/// symbol pairs.
pub fn ml_fast_anyconstellation(
    ws: &DecoderWorkspace,
    cons: &Constellation,
) -> Result<DecodeResult> {
    check_conditional(ws, cons)?;
    Ok(Conditional::new(ws, cons, InnerStage::Joint).run())
}

/// Predicted `leaf_visits` of [`ml_fast`] for κ = 8: `M⁴ · 4√M`.
pub fn fast_leaf_count(m: usize) -> u64 {
    let side = (m as f64).sqrt().round() as u64;
    (m as u64).pow(4) * 4 * side
}

/// Predicted `leaf_visits` of [`ml_fast_anyconstellation`] for κ = 8: `M⁴ · 2M²`.
pub fn fast_any_leaf_count(m: usize) -> u64 {
    (m as u64).pow(4) * 2 * (m as u64).pow(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Exhaustive,
    Sphere,
    Fast,
    FastAny,
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Exhaustive => "exhaustive",
            DecoderKind::Sphere => "sphere",
            DecoderKind::Fast => "fast",
            DecoderKind::FastAny => "fast-any",
        }
    }

    pub fn decode(
        self,
        ws: &DecoderWorkspace,
        cons: &Constellation,
        exhaustive_budget: u128,
    ) -> Result<DecodeResult> {
        match self {
            DecoderKind::Exhaustive => ml_exhaustive_with_budget(ws, cons, exhaustive_budget),
            DecoderKind::Sphere => ml_sphere(ws, cons),
            DecoderKind::Fast => ml_fast(ws, cons),
            DecoderKind::FastAny => ml_fast_anyconstellation(ws, cons),
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exhaustive" | "ml" => Ok(DecoderKind::Exhaustive),
            "sphere" => Ok(DecoderKind::Sphere),
            "fast" => Ok(DecoderKind::Fast),
            "fast-any" | "fast_any" | "fastany" => Ok(DecoderKind::FastAny),
            _ => Err(Error::UnknownDecoder(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, equivalent_channel, transmit, RngStream};
    use crate::codes::{CodeDescriptor, CodeKind};
    use crate::constellation::make_qam;
    use num_complex::Complex64;
    use rand::Rng;

    struct Instance {
        ws: DecoderWorkspace,
        sent: Vec<usize>,
    }

    fn instance(
        rng: &mut RngStream,
        code: &CodeDescriptor,
        cons: &Constellation,
        n0: f64,
    ) -> Instance {
        let sent: Vec<usize> = (0..8).map(|_| rng.gen_range(0..cons.order())).collect();
        let s: Vec<Complex64> = sent.iter().map(|&p| cons.point(p)).collect();
        let ch = draw_channel(rng, 2, 4, n0);
        let y = transmit(&code.codeword(&s), &ch, rng);
        let h_eq = equivalent_channel(&ch, code).unwrap();
        Instance {
            ws: DecoderWorkspace::prepare(&h_eq, &y).unwrap(),
            sent,
        }
    }

    #[test]
    fn prepare_noiseless_and_partition() {
        let mut rng = RngStream::new(1, 0);
        let cons = make_qam(4, true).unwrap();
        let code = CodeDescriptor::with_default_rho(CodeKind::Proposed);
        let inst = instance(&mut rng, &code, &cons, 0.0);
        let s: Vec<f64> = inst
            .sent
            .iter()
            .flat_map(|&p| [cons.point(p).re, cons.point(p).im])
            .collect();
        let rs = inst.ws.r().mul_vec(&s);
        let err: f64 = inst
            .ws
            .z
            .iter()
            .zip(&rs)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-9);
        for block in [inst.ws.r1(), inst.ws.r2(), inst.ws.r4()] {
            assert_eq!(block.shape(), (8, 8));
        }
    }

    #[test]
    fn orthogonal_channel_gives_diagonal_r() {
        let h = RMat::from_fn(4, 4, |r, c| if r == c { (r + 1) as f64 } else { 0.0 });
        let ws = DecoderWorkspace::prepare_real(&h, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    assert_eq!(ws.r()[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn prepare_rejects_bad_input() {
        let h = RMat::identity(4);
        assert!(DecoderWorkspace::prepare_real(&h, &[1.0; 3]).is_err());
        let singular = RMat::zeros(4, 4);
        assert!(matches!(
            DecoderWorkspace::prepare_real(&singular, &[0.0; 4]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn noiseless_recovery_all_decoders() {
        let mut rng = RngStream::new(2, 0);
        let cons = make_qam(4, true).unwrap();
        let code = CodeDescriptor::with_default_rho(CodeKind::Proposed);
        for _ in 0..5 {
            let inst = instance(&mut rng, &code, &cons, 0.0);
            for dec in [ml_exhaustive, ml_sphere, ml_fast, ml_fast_anyconstellation] {
                let out = dec(&inst.ws, &cons).unwrap();
                assert_eq!(out.symbols, inst.sent);
                assert!(out.metric < 1e-18, "metric {}", out.metric);
                assert_eq!(out.bits, cons.symbols_to_bits(&inst.sent));
                assert!(out.counters.leaf_visits >= 1);
            }
        }
    }

    #[test]
    fn exhaustive_counts_and_self_consistency() {
        let mut rng = RngStream::new(3, 0);
        let cons = make_qam(4, true).unwrap();
        let code = CodeDescriptor::with_default_rho(CodeKind::Djabba);
        let inst = instance(&mut rng, &code, &cons, 0.5);
        let out = ml_exhaustive(&inst.ws, &cons).unwrap();
        assert_eq!(out.counters.leaf_visits, 65_536);
        // Nodes of a complete binary tree of depth 16.
        assert_eq!(out.counters.metric_evaluations, (1u64 << 17) - 2);
        let recomputed = inst.ws.metric_of(&cons, &out.symbols);
        assert!((recomputed - out.metric).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_budget() {
        let mut rng = RngStream::new(4, 0);
        let cons = make_qam(16, true).unwrap();
        let code = CodeDescriptor::with_default_rho(CodeKind::Proposed);
        let inst = instance(&mut rng, &code, &cons, 0.1);
        assert!(matches!(
            ml_exhaustive(&inst.ws, &cons),
            Err(Error::BudgetExceeded { needed, .. }) if needed == 1u128 << 32
        ));
    }

    #[test]
    fn decoders_agree_with_exhaustive() {
        let mut rng = RngStream::new(5, 0);
        let cons = make_qam(4, true).unwrap();
        for kind in [CodeKind::Proposed, CodeKind::Djabba] {
            let code = CodeDescriptor::with_default_rho(kind);
            for _ in 0..100 {
                let n0 = 10f64.powf(rng.gen_range(-1.5..0.8));
                let inst = instance(&mut rng, &code, &cons, n0);
                let ex = ml_exhaustive(&inst.ws, &cons).unwrap();
                let sp = ml_sphere(&inst.ws, &cons).unwrap();
                assert!((ex.metric - sp.metric).abs() <= 1e-9);
                assert_eq!(ex.symbols, sp.symbols);
                assert!(sp.counters.leaf_visits <= 65_536);
                if kind == CodeKind::Proposed {
                    let fast = ml_fast(&inst.ws, &cons).unwrap();
                    let any = ml_fast_anyconstellation(&inst.ws, &cons).unwrap();
                    assert!((ex.metric - fast.metric).abs() <= 1e-9);
                    assert!((ex.metric - any.metric).abs() <= 1e-9);
                    assert_eq!(ex.symbols, fast.symbols);
                    assert_eq!(fast.symbols, any.symbols);
                    assert_eq!(fast.counters.leaf_visits, 2048);
                    assert_eq!(any.counters.leaf_visits, 8192);
                }
            }
        }
    }

    #[test]
    fn fast_matches_sphere_for_16qam() {
        let mut rng = RngStream::new(6, 0);
        let cons = make_qam(16, true).unwrap();
        let code = CodeDescriptor::with_default_rho(CodeKind::Proposed);
        for _ in 0..3 {
            let inst = instance(&mut rng, &code, &cons, 0.05);
            let fast = ml_fast(&inst.ws, &cons).unwrap();
            let sp = ml_sphere(&inst.ws, &cons).unwrap();
            assert!((fast.metric - sp.metric).abs() <= 1e-9);
            assert_eq!(fast.symbols, sp.symbols);
            assert_eq!(fast.counters.leaf_visits, fast_leaf_count(16));
            assert_eq!(fast.counters.leaf_visits, 1 << 20);
        }
    }

    #[test]
    fn fast_rejects_djabba_structure() {
        let mut rng = RngStream::new(7, 0);
        let cons = make_qam(4, true).unwrap();
        let code = CodeDescriptor::with_default_rho(CodeKind::Djabba);
        let inst = instance(&mut rng, &code, &cons, 0.1);
        assert!(matches!(
            ml_fast(&inst.ws, &cons),
            Err(Error::StructureViolation { .. })
        ));
        assert!(matches!(
            ml_fast_anyconstellation(&inst.ws, &cons),
            Err(Error::StructureViolation { .. })
        ));
        assert!(inst
            .ws
            .check_structure(SparsityPattern::AlamoutiBlocks)
            .is_ok());
    }

    #[test]
    fn conditioned_slicer_is_the_brute_force_argmin() {
        // For fixed b the first group summand is minimized over a by slicing.
        for side in [2usize, 4, 8] {
            let axis = PamAxis::new(side, 1.0);
            for (raa, rab) in [(1.3, 0.4), (0.7, -1.1), (2.0, 0.0)] {
                for vi in -40..=40 {
                    let v = vi as f64 * 0.173 + 0.01;
                    for &b in axis.levels() {
                        let sliced = axis.level(axis.slice_index((v - rab * b) / raa));
                        let brute = axis
                            .levels()
                            .iter()
                            .copied()
                            .min_by(|x, y| {
                                let fx = (v - raa * x - rab * b).powi(2);
                                let fy = (v - raa * y - rab * b).powi(2);
                                fx.partial_cmp(&fy).unwrap()
                            })
                            .unwrap();
                        assert_eq!(sliced, brute, "v={v} b={b}");
                    }
                }
            }
        }
    }

    #[test]
    fn decisions_invariant_under_joint_scaling() {
        let mut rng = RngStream::new(8, 0);
        let cons = make_qam(4, true).unwrap();
        let code = CodeDescriptor::with_default_rho(CodeKind::Proposed);
        for _ in 0..20 {
            let inst = instance(&mut rng, &code, &cons, 0.3);
            let scaled = inst.ws.scaled(3.7);
            for dec in [ml_sphere, ml_fast] {
                assert_eq!(
                    dec(&inst.ws, &cons).unwrap().symbols,
                    dec(&scaled, &cons).unwrap().symbols
                );
            }
        }
    }

    #[test]
    fn zigzag_orders_by_distance() {
        let axis = PamAxis::new(8, 1.0);
        let mut out = [0; MAX_SIDE];
        zigzag(0.2, &axis, &mut out);
        let d: Vec<f64> = out.iter().map(|&i| (axis.level(i) - 0.2).abs()).collect();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
        let mut seen = out.to_vec();
        seen.sort();
        assert_eq!(seen, (0..8).collect::<Vec<_>>());
        zigzag(100.0, &axis, &mut out);
        assert_eq!(out, [7, 6, 5, 4, 3, 2, 1, 0]);
    }

    #[test]
    fn parse_decoder_names() {
        assert_eq!("fast".parse::<DecoderKind>().unwrap(), DecoderKind::Fast);
        assert_eq!(
            "fast-any".parse::<DecoderKind>().unwrap(),
            DecoderKind::FastAny
        );
        assert!(matches!(
            "mmse".parse::<DecoderKind>(),
            Err(Error::UnknownDecoder(_))
        ));
        assert_eq!(fast_leaf_count(4), 2048);
        assert_eq!(fast_any_leaf_count(4), 8192);
    }
}

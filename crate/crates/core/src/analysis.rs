//! Structural checks and coding-gain analysis.
//!
//! * [`check_alamouti_combination`]: real combinations of Alamouti blocks stay scaled
//!   unitary.
//! * [`verify_sparsity`]: anticommuting weight matrices, orthogonal columns of
//!   `H_eq` and the resulting zeros of `R`, checked on random channels.
//! * [`min_determinant`]: exact scan of `det(ΔX ΔX^H)` over every nonzero
//!   symbol difference of an unnormalized QAM grid.

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{draw_channel, equivalent_channel, ChannelRealization, RngStream};
use crate::codes::{alamouti_block, CodeDescriptor, CodeKind, SparsityPattern};
use crate::constellation::Constellation;
use crate::numerics::{det_complex, det_in_place, dot, norm, qr_decompose, CMat};
use crate::{Error, Result};

/// Deviation of `C = aA + bB` from `C C^H = C^H C = c I_2`, normalized by `c`.
pub fn combination_deviation(a: &CMat, b: &CMat, ca: f64, cb: f64) -> f64 {
    let c = &a.scale(Complex64::new(ca, 0.0)) + &b.scale(Complex64::new(cb, 0.0));
    let outer = c.matmul(&c.adjoint());
    let inner = c.adjoint().matmul(&c);
    let scale = outer[(0, 0)].re;
    if scale == 0.0 {
        return c.max_abs();
    }
    let eye = CMat::identity(2);
    let k = Complex64::new(1.0 / scale, 0.0);
    outer
        .scale(k)
        .max_abs_diff(&eye)
        .max(inner.scale(k).max_abs_diff(&eye))
}

/// Largest [`combination_deviation`] over `trials` random Alamouti pairs and real
/// coefficients.
pub fn check_alamouti_combination(rng: &mut RngStream, trials: usize) -> f64 {
    assert!(trials >= 1, "at least one trial");
    (0..trials)
        .map(|_| {
            let a = alamouti_block(rng.complex_gaussian(1.0), rng.complex_gaussian(1.0));
            let b = alamouti_block(rng.complex_gaussian(1.0), rng.complex_gaussian(1.0));
            let ca: f64 = rng.gen_range(-2.0..2.0);
            let cb: f64 = rng.gen_range(-2.0..2.0);
            combination_deviation(&a, &b, ca, cb)
        })
        .fold(0.0, f64::max)
}

/// Outcome of checking a sparsity pattern against a code.
#[derive(Debug, Clone)]
pub struct SparsityReport {
    pub code: CodeKind,
    pub pattern: SparsityPattern,
    pub channels: usize,
    pub rank_deficient_draws: usize,
    /// Largest `|⟨q_j, h_k⟩| / ‖h_k‖` over the pattern's zeros of `R`.
    pub max_violation: f64,
    /// Largest entry of `A_j A_k^H + A_k A_j^H` over orthogonal pairs.
    pub weight_anticommutation: f64,
    /// Largest `|⟨h_j, h_k⟩| / (‖h_j‖ ‖h_k‖)` over orthogonal pairs.
    pub column_orthogonality: f64,
    /// Largest `|q_j − h_j/‖h_j‖|` over columns orthogonal to all earlier ones.
    pub leading_columns: f64,
    /// Largest `|r_j − (h_j − Σ_coupled ⟨q_k, h_j⟩ q_k)| / ‖h_j‖`.
    pub residual_identity: f64,
    /// Expected-zero mask of `R` (strict lower triangle included).
    pub mask: Vec<Vec<bool>>,
}

impl SparsityReport {
    /// All checks within the factorization (1e−10) and identity (1e−12)
    /// tolerances.
    pub fn passes(&self) -> bool {
        self.max_violation < 1e-10
            && self.weight_anticommutation < 1e-12
            && self.column_orthogonality < 1e-10
            && self.leading_columns < 1e-10
            && self.residual_identity < 1e-10
            && self.channels > 0
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "code={}\npattern={}\nchannels={}\nrank_deficient_draws={}\nmax_violation={:e}\n\
             weight_anticommutation={:e}\ncolumn_orthogonality={:e}\nleading_columns={:e}\n\
             residual_identity={:e}\npass={}\n",
            self.code,
            self.pattern,
            self.channels,
            self.rank_deficient_draws,
            self.max_violation,
            self.weight_anticommutation,
            self.column_orthogonality,
            self.leading_columns,
            self.residual_identity,
            self.passes()
        )
    }

    fn merge(&mut self, other: &SparsityReport) {
        self.channels += other.channels;
        self.rank_deficient_draws += other.rank_deficient_draws;
        self.max_violation = self.max_violation.max(other.max_violation);
        self.column_orthogonality = self.column_orthogonality.max(other.column_orthogonality);
        self.leading_columns = self.leading_columns.max(other.leading_columns);
        self.residual_identity = self.residual_identity.max(other.residual_identity);
    }
}

/// Largest entry of `A_j A_k^H + A_k A_j^H` over the pattern's orthogonal pairs.
pub fn weight_anticommutation(code: &CodeDescriptor, pattern: SparsityPattern) -> f64 {
    let w = &code.weights;
    let mut worst: f64 = 0.0;
    for j in 0..w.len() {
        for k in j + 1..w.len() {
            if pattern.orthogonal_pair(j, k) {
                let sum = &w[j].matmul(&w[k].adjoint()) + &w[k].matmul(&w[j].adjoint());
                worst = worst.max(sum.max_abs());
            }
        }
    }
    worst
}

fn empty_report(code: &CodeDescriptor, pattern: SparsityPattern) -> SparsityReport {
    let dim = 2 * code.kappa;
    SparsityReport {
        code: code.kind,
        pattern,
        channels: 0,
        rank_deficient_draws: 0,
        max_violation: 0.0,
        weight_anticommutation: weight_anticommutation(code, pattern),
        column_orthogonality: 0.0,
        leading_columns: 0.0,
        residual_identity: 0.0,
        mask: pattern.r_mask(dim),
    }
}

/// Checks `pattern` for one channel matrix.
pub fn verify_sparsity_on_channel(
    code: &CodeDescriptor,
    pattern: SparsityPattern,
    h: &CMat,
) -> Result<SparsityReport> {
    let mut report = empty_report(code, pattern);
    let h_eq = equivalent_channel(&ChannelRealization::new(h.clone(), 0.0), code)?;
    let qr = qr_decompose(&h_eq)?;
    let dim = h_eq.cols();
    let cols: Vec<Vec<f64>> = (0..dim).map(|j| h_eq.column(j)).collect();
    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let q_cols: Vec<Vec<f64>> = (0..dim).map(|j| qr.q.column(j)).collect();

    for j in 0..dim {
        for k in 0..dim {
            if !pattern.orthogonal_pair(j, k) {
                continue;
            }
            let ip = dot(&cols[j], &cols[k]).abs() / (norms[j] * norms[k]);
            report.column_orthogonality = report.column_orthogonality.max(ip);
            // ⟨q_j, h_k⟩ for every pair, not only the stored upper triangle.
            let qh = dot(&q_cols[j], &cols[k]).abs() / norms[k];
            report.max_violation = report.max_violation.max(qh);
        }
        if (0..j).all(|k| pattern.orthogonal_pair(k, j)) {
            let dev = q_cols[j]
                .iter()
                .zip(&cols[j])
                .map(|(q, h)| (q - h / norms[j]).abs())
                .fold(0.0, f64::max);
            report.leading_columns = report.leading_columns.max(dev);
        }
        let mut expected = cols[j].clone();
        for k in (0..j).filter(|&k| !pattern.orthogonal_pair(k, j)) {
            let coef = qr.r[(k, j)];
            for (e, q) in expected.iter_mut().zip(&q_cols[k]) {
                *e -= coef * q;
            }
        }
        let dev = expected
            .iter()
            .zip(&q_cols[j])
            .map(|(e, q)| (e - qr.r[(j, j)] * q).abs())
            .fold(0.0, f64::max)
            / norms[j];
        report.residual_identity = report.residual_identity.max(dev);
    }
    report.channels = 1;
    Ok(report)
}

/// Checks `pattern` on `trials` random Rayleigh channels (2 receive
/// antennas). Rank-deficient draws are counted and skipped.
pub fn verify_sparsity(
    code: &CodeDescriptor,
    pattern: SparsityPattern,
    rng: &mut RngStream,
    trials: usize,
) -> Result<SparsityReport> {
    let mut report = empty_report(code, pattern);
    for _ in 0..trials {
        let ch = draw_channel(rng, 2, code.n_t, 0.0);
        match verify_sparsity_on_channel(code, pattern, &ch.h) {
            Ok(r) => report.merge(&r),
            Err(Error::RankDeficient { .. }) => report.rank_deficient_draws += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// Default candidate budget for [`min_determinant`] (QPSK needs 9⁸ ≈ 4.3·10⁷).
pub const DEFAULT_MINDET_BUDGET: u128 = 1_000_000_000;

/// Largest inner lookup table (in difference vectors) for the scan.
const INNER_TABLE_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, Copy)]
pub struct MinDetOptions {
    pub budget: u128,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for MinDetOptions {
    fn default() -> Self {
        MinDetOptions {
            budget: DEFAULT_MINDET_BUDGET,
            workers: None,
        }
    }
}

/// Result of a minimum-determinant search.
#[derive(Debug, Clone)]
pub struct MinDetReport {
    pub code: CodeKind,
    pub rho: f64,
    pub constellation: usize,
    /// `min det(ΔX ΔX^H)` over the scanned differences.
    pub min_det: f64,
    /// The minimizing symbol difference `Δs`.
    pub argmin_delta: Vec<Complex64>,
    pub candidates_scanned: u64,
    pub wall_seconds: f64,
}

impl MinDetReport {
    pub fn to_key_value(&self) -> String {
        let delta: Vec<String> = self
            .argmin_delta
            .iter()
            .map(|d| format!("{}{:+}i", d.re, d.im))
            .collect();
        format!(
            "code={}\nconstellation={}\nrho_rad={}\nrho_deg={}\nmin_det={}\nargmin_delta={}\n\
             candidates_scanned={}\nwall_seconds={:.3}\n",
            self.code,
            self.constellation,
            self.rho,
            self.rho.to_degrees(),
            self.min_det,
            delta.join(";"),
            self.candidates_scanned,
            self.wall_seconds
        )
    }

    /// Number of nonzero symbols in the minimizer.
    pub fn argmin_support(&self) -> usize {
        self.argmin_delta
            .iter()
            .filter(|d| d.norm_sqr() > 0.0)
            .count()
    }
}

/// `det(ΔX ΔX^H) = |det ΔX|²` computed from the codeword builder.
pub fn difference_determinant(code: CodeKind, rho: f64, delta: &[Complex64]) -> f64 {
    det_complex(&code.codeword(delta, rho)).norm_sqr()
}

/// Per-axis differences of the grid: `{0, ±2, …, ±2(√M − 1)}·scale`, ascending.
fn axis_differences(cons: &Constellation) -> Vec<f64> {
    let side = cons.side() as i64;
    (-(side - 1)..=side - 1)
        .map(|k| 2.0 * k as f64 * cons.scale())
        .collect()
}

fn complex_differences(cons: &Constellation) -> Vec<Complex64> {
    let axis = axis_differences(cons);
    axis.iter()
        .flat_map(|&re| axis.iter().map(move |&im| Complex64::new(re, im)))
        .collect()
}

type Block = [Complex64; 16];

fn add_blocks(a: &Block, b: &Block) -> Block {
    let mut out = *a;
    for (o, v) in out.iter_mut().zip(b) {
        *o += v;
    }
    out
}

/// Contribution of symbol `j` taking each difference value, as flat 4×4 blocks.
fn contributions(code: &CodeDescriptor, diffs: &[Complex64]) -> Vec<Vec<Block>> {
    (0..code.kappa)
        .map(|j| {
            let (wr, wi) = (&code.weights[2 * j], &code.weights[2 * j + 1]);
            diffs
                .iter()
                .map(|d| {
                    let mut b = [Complex64::new(0.0, 0.0); 16];
                    for (i, slot) in b.iter_mut().enumerate() {
                        *slot = wr.data()[i] * d.re + wi.data()[i] * d.im;
                    }
                    b
                })
                .collect()
        })
        .collect()
}

/// Sum of contributions of symbols `first..first + count` for a mixed-radix
/// index (most significant digit first).
fn partial_block(
    contrib: &[Vec<Block>],
    first: usize,
    count: usize,
    mut index: usize,
    radix: usize,
) -> Block {
    let mut b = [Complex64::new(0.0, 0.0); 16];
    for j in (first..first + count).rev() {
        let digit = index % radix;
        index /= radix;
        b = add_blocks(&b, &contrib[j][digit]);
    }
    b
}

fn decode_index(
    mut index: u128,
    radix: usize,
    kappa: usize,
    diffs: &[Complex64],
) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); kappa];
    for slot in out.iter_mut().rev() {
        *slot = diffs[(index % radix as u128) as usize];
        index /= radix as u128;
    }
    out
}

/// Running minimum `(value, linear index)`; ties go to the lower index.
fn better(a: (f64, u128), b: (f64, u128)) -> (f64, u128) {
    if a.0 < b.0 || (a.0 == b.0 && a.1 < b.1) {
        a
    } else {
        b
    }
}

pub(crate) fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Exhaustive minimum of `det(ΔX ΔX^H)` over all nonzero `Δs` on the
/// difference grid of `cons` (use the unnormalized grid to reproduce
/// published values).
///
/// The `Δs` space is enumerated as a mixed-radix odometer, `s_1` most
/// significant, and split into disjoint outer ranges handled by independent
/// workers; the result does not depend on the worker count.
pub fn min_determinant(
    code: CodeKind,
    rho: f64,
    cons: &Constellation,
    opts: MinDetOptions,
) -> Result<MinDetReport> {
    let start = Instant::now();
    let desc = CodeDescriptor::new(code, rho);
    let diffs = complex_differences(cons);
    let radix = diffs.len();
    let kappa = desc.kappa;
    let needed = (radix as u128).pow(kappa as u32);
    if needed > opts.budget {
        return Err(Error::BudgetExceeded {
            what: "minimum-determinant search",
            needed,
            budget: opts.budget,
        });
    }

    let mut inner_count = 0;
    while inner_count < kappa && radix.pow(inner_count as u32 + 1) <= INNER_TABLE_LIMIT {
        inner_count += 1;
    }
    let outer_count = kappa - inner_count;
    let inner_size = radix.pow(inner_count as u32);
    let outer_size = radix.pow(outer_count as u32);

    let contrib = contributions(&desc, &diffs);
    let zero_digit = radix / 2;
    let zero_inner = (0..inner_count).fold(0, |acc, _| acc * radix + zero_digit);
    let zero_outer = (0..outer_count).fold(0, |acc, _| acc * radix + zero_digit);
    let inner_table: Vec<Block> = (0..inner_size)
        .into_par_iter()
        .map(|i| partial_block(&contrib, outer_count, inner_count, i, radix))
        .collect();

    let scan = || {
        (0..outer_size)
            .into_par_iter()
            .map(|o| {
                let outer = partial_block(&contrib, 0, outer_count, o, radix);
                let mut best = (f64::INFINITY, u128::MAX);
                for (i, inner) in inner_table.iter().enumerate() {
                    if o == zero_outer && i == zero_inner {
                        continue;
                    }
                    let mut m = add_blocks(&outer, inner);
                    let value = det_in_place(&mut m, 4).norm_sqr();
                    if value < best.0 {
                        best = (value, (o * inner_size + i) as u128);
                    }
                }
                best
            })
            .reduce(|| (f64::INFINITY, u128::MAX), better)
    };
    let (min_det, index) = with_workers(opts.workers, scan)?;

    Ok(MinDetReport {
        code,
        rho,
        constellation: cons.order(),
        min_det,
        argmin_delta: decode_index(index, radix, kappa, &diffs),
        candidates_scanned: (needed - 1) as u64,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Minimum over differences confined to a single symbol (an upper bound on
/// the full minimum).
pub fn min_determinant_single_symbol(
    code: CodeKind,
    rho: f64,
    cons: &Constellation,
) -> MinDetReport {
    let start = Instant::now();
    let diffs = complex_differences(cons);
    let kappa = crate::codes::KAPPA;
    let mut best = (f64::INFINITY, Vec::new());
    let mut scanned = 0;
    for j in 0..kappa {
        for d in diffs.iter().filter(|d| d.norm_sqr() > 0.0) {
            let mut delta = vec![Complex64::new(0.0, 0.0); kappa];
            delta[j] = *d;
            let v = difference_determinant(code, rho, &delta);
            scanned += 1;
            if v < best.0 {
                best = (v, delta);
            }
        }
    }
    MinDetReport {
        code,
        rho,
        constellation: cons.order(),
        min_det: best.0,
        argmin_delta: best.1,
        candidates_scanned: scanned,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

/// [`min_determinant`] at each angle; every angle must lie in `(0, π/2)`.
pub fn angle_sweep(
    code: CodeKind,
    cons: &Constellation,
    angles: &[f64],
    opts: MinDetOptions,
) -> Result<Vec<MinDetReport>> {
    if let Some(bad) = angles
        .iter()
        .find(|&&a| !(a > 0.0 && a < std::f64::consts::FRAC_PI_2))
    {
        return Err(Error::InvalidConfig(format!(
            "rotation angle {bad} rad is outside (0, π/2)"
        )));
    }
    angles
        .iter()
        .map(|&rho| min_determinant(code, rho, cons, opts))
        .collect()
}

/// Index of the largest `min_det`; ties go to the first.
pub fn sweep_argmax(reports: &[MinDetReport]) -> Option<usize> {
    reports
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, f64)>, (i, r)| match acc {
            Some((_, best)) if best >= r.min_det => acc,
            _ => Some((i, r.min_det)),
        })
        .map(|(i, _)| i)
}

#[derive(Serialize)]
struct SweepRow<'a> {
    code: &'a str,
    constellation: usize,
    rho_rad: f64,
    rho_deg: f64,
    min_det: f64,
    candidates_scanned: u64,
}

/// Writes a sweep as CSV:
/// `code,constellation,rho_rad,rho_deg,min_det,candidates_scanned`.
pub fn write_sweep_csv<W: Write>(reports: &[MinDetReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(SweepRow {
            code: r.code.name(),
            constellation: r.constellation,
            rho_rad: r.rho,
            rho_deg: r.rho.to_degrees(),
            min_det: r.min_det,
            candidates_scanned: r.candidates_scanned,
        })?;
    }
    w.flush()?;
    Ok(())
}

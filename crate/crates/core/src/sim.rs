//! Monte Carlo BER simulation over quasi-static Rayleigh fading.
//!
//! Every frame draws from its own [`RngStream`], keyed by the seed and the SNR
//! point with the frame index as stream id, so counts do not depend on the
//! number of workers or on the decoder under test.

use std::io::{Read, Write};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::with_workers;
use crate::channel::{
    draw_channel, equivalent_channel, noise_variance, received_vector, transmit, RngStream,
    SNR_CONVENTION,
};
use crate::codes::{CodeDescriptor, CodeKind};
use crate::constellation::{make_qam, Constellation};
use crate::decoder::{
    exhaustive_candidates, ml_sphere, DecoderKind, DecoderWorkspace, DEFAULT_EXHAUSTIVE_BUDGET,
};
use crate::{Error, Result};

/// Frames decoded between two checks of the stopping rule.
pub const CHUNK_FRAMES: u64 = 256;

/// Receive antennas used by the simulator.
pub const N_R: usize = 2;

/// Column order of BER CSV files.
pub const BER_CSV_HEADER: [&str; 12] = [
    "code",
    "decoder",
    "constellation",
    "snr_db",
    "frames",
    "bits",
    "bit_errors",
    "ber",
    "wall_seconds",
    "mean_leaf_visits",
    "seed",
    "snr_convention",
];

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub code: CodeKind,
    pub rho: f64,
    pub decoder: DecoderKind,
    pub qam: usize,
    pub snr_points_db: Vec<f64>,
    pub max_frames: u64,
    pub min_bit_errors: u64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub exhaustive_budget: u128,
    /// Store measured run time in the CSV (otherwise 0, keeping reruns
    /// byte-identical).
    pub record_wall_time: bool,
    /// Re-decode every k-th frame with the sphere decoder and count
    /// disagreements; 0 disables.
    pub cross_check_every: u64,
}

impl SimConfig {
    pub fn new(code: CodeKind, decoder: DecoderKind, qam: usize, snr_points_db: Vec<f64>) -> Self {
        SimConfig {
            code,
            rho: code.default_rho(),
            decoder,
            qam,
            snr_points_db,
            max_frames: 1_000_000,
            min_bit_errors: 200,
            seed: 1,
            workers: None,
            exhaustive_budget: DEFAULT_EXHAUSTIVE_BUDGET,
            record_wall_time: false,
            cross_check_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_points_db.is_empty() {
            return Err(Error::InvalidConfig("no SNR points".into()));
        }
        if let Some(bad) = self
            .snr_points_db
            .iter()
            .find(|s| s.is_nan() || **s == f64::NEG_INFINITY)
        {
            return Err(Error::InvalidConfig(format!("invalid SNR point {bad}")));
        }
        if !self.rho.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "invalid rotation angle {}",
                self.rho
            )));
        }
        if self.max_frames == 0 {
            return Err(Error::InvalidConfig("max_frames must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        make_qam(self.qam, true)?;
        if self.decoder == DecoderKind::Exhaustive {
            let needed = exhaustive_candidates(self.qam, crate::codes::KAPPA);
            if needed > self.exhaustive_budget {
                return Err(Error::BudgetExceeded {
                    what: "exhaustive decoding",
                    needed,
                    budget: self.exhaustive_budget,
                });
            }
        }
        Ok(())
    }
}

/// Counts for one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub code: CodeKind,
    pub decoder: DecoderKind,
    pub constellation: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub frames: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub symbol_errors: u64,
    pub wall_seconds: f64,
    pub total_leaf_visits: u64,
    /// Channel draws replaced because `H_eq` was numerically singular.
    pub discarded_channels: u64,
    pub cross_checks: u64,
    pub cross_check_mismatches: u64,
}

impl BerRecord {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }

    pub fn mean_leaf_visits(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.total_leaf_visits as f64 / self.frames as f64
        }
    }

    /// Binomial standard deviation of the BER estimate.
    pub fn ber_std(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        let p = self.ber();
        (p * (1.0 - p) / self.bits as f64).sqrt()
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct FrameOutcome {
    bit_errors: u64,
    symbol_errors: u64,
    leaf_visits: u64,
    discarded_channels: u64,
    cross_checked: bool,
    mismatch: bool,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator key for one SNR point.
pub fn point_key(seed: u64, snr_db: f64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(snr_db.to_bits())))
}

/// Random stream of frame `frame` at an SNR point.
pub fn frame_stream(seed: u64, snr_db: f64, frame: u64) -> RngStream {
    RngStream::new(point_key(seed, snr_db), frame)
}

struct Setup<'a> {
    cfg: &'a SimConfig,
    code: CodeDescriptor,
    cons: Constellation,
    n0: f64,
    snr_db: f64,
}

const MAX_CHANNEL_REDRAWS: u64 = 64;

fn simulate_frame(setup: &Setup, frame: u64) -> Result<FrameOutcome> {
    let mut rng = frame_stream(setup.cfg.seed, setup.snr_db, frame);
    let bps = setup.cons.bits_per_symbol();
    let bits: Vec<u8> = (0..bps * setup.code.kappa)
        .map(|_| rng.gen_range(0..2u8))
        .collect();
    let sent = setup.cons.bits_to_symbols(&bits)?;
    let s: Vec<_> = sent.iter().map(|&p| setup.cons.point(p)).collect();
    let x = setup.code.codeword(&s);

    let mut outcome = FrameOutcome::default();
    let ws = loop {
        let ch = draw_channel(&mut rng, N_R, setup.code.n_t, setup.n0);
        let h_eq = equivalent_channel(&ch, &setup.code)?;
        let y = transmit(&x, &ch, &mut rng);
        match DecoderWorkspace::prepare_real(&h_eq, &received_vector(&y)) {
            Ok(ws) => break ws,
            Err(Error::RankDeficient { .. }) => outcome.discarded_channels += 1,
            Err(e) => return Err(e),
        }
        if outcome.discarded_channels > MAX_CHANNEL_REDRAWS {
            return Err(Error::InvalidConfig(
                "channel draws keep being singular".into(),
            ));
        }
    };
    let result = setup
        .cfg
        .decoder
        .decode(&ws, &setup.cons, setup.cfg.exhaustive_budget)?;

    outcome.bit_errors = bits
        .iter()
        .zip(&result.bits)
        .filter(|(a, b)| a != b)
        .count() as u64;
    outcome.symbol_errors = sent
        .iter()
        .zip(&result.symbols)
        .filter(|(a, b)| a != b)
        .count() as u64;
    outcome.leaf_visits = result.counters.leaf_visits;
    let every = setup.cfg.cross_check_every;
    if every > 0 && frame.is_multiple_of(every) && setup.cfg.decoder != DecoderKind::Sphere {
        outcome.cross_checked = true;
        outcome.mismatch = ml_sphere(&ws, &setup.cons)?.symbols != result.symbols;
    }
    Ok(outcome)
}

/// Simulates one SNR point until `min_bit_errors` errors or `max_frames`
/// frames, checking the rule every [`CHUNK_FRAMES`] frames. An infinite SNR
/// gives a noiseless channel.
pub fn run_point(cfg: &SimConfig, snr_db: f64) -> Result<BerRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let setup = Setup {
        cfg,
        code: CodeDescriptor::new(cfg.code, cfg.rho),
        cons: make_qam(cfg.qam, true)?,
        n0: noise_variance(snr_db, crate::codes::N_T),
        snr_db,
    };
    let bits_per_frame = (setup.cons.bits_per_symbol() * setup.code.kappa) as u64;
    let mut rec = BerRecord {
        code: cfg.code,
        decoder: cfg.decoder,
        constellation: cfg.qam,
        snr_db,
        seed: cfg.seed,
        frames: 0,
        bits: 0,
        bit_errors: 0,
        symbol_errors: 0,
        wall_seconds: 0.0,
        total_leaf_visits: 0,
        discarded_channels: 0,
        cross_checks: 0,
        cross_check_mismatches: 0,
    };

    with_workers(cfg.workers, || -> Result<()> {
        while rec.frames < cfg.max_frames && rec.bit_errors < cfg.min_bit_errors {
            let end = (rec.frames + CHUNK_FRAMES).min(cfg.max_frames);
            let outcomes = (rec.frames..end)
                .into_par_iter()
                .map(|f| simulate_frame(&setup, f))
                .collect::<Result<Vec<_>>>()?;
            for o in outcomes {
                rec.bit_errors += o.bit_errors;
                rec.symbol_errors += o.symbol_errors;
                rec.total_leaf_visits += o.leaf_visits;
                rec.discarded_channels += o.discarded_channels;
                rec.cross_checks += u64::from(o.cross_checked);
                rec.cross_check_mismatches += u64::from(o.mismatch);
            }
            rec.frames = end;
        }
        Ok(())
    })??;

    rec.bits = rec.frames * bits_per_frame;
    if cfg.record_wall_time {
        rec.wall_seconds = start.elapsed().as_secs_f64();
    }
    Ok(rec)
}

/// [`run_point`] for each configured SNR point.
pub fn run_sweep(cfg: &SimConfig) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    cfg.snr_points_db
        .iter()
        .map(|&snr| run_point(cfg, snr))
        .collect()
}

/// One row of a BER CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub code: String,
    pub decoder: String,
    pub constellation: String,
    pub snr_db: f64,
    pub frames: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub wall_seconds: f64,
    pub mean_leaf_visits: f64,
    pub seed: u64,
    pub snr_convention: String,
}

impl From<&BerRecord> for BerRow {
    fn from(r: &BerRecord) -> Self {
        BerRow {
            code: r.code.name().to_string(),
            decoder: r.decoder.name().to_string(),
            constellation: format!("{}qam", r.constellation),
            snr_db: r.snr_db,
            frames: r.frames,
            bits: r.bits,
            bit_errors: r.bit_errors,
            ber: r.ber(),
            wall_seconds: r.wall_seconds,
            mean_leaf_visits: r.mean_leaf_visits(),
            seed: r.seed,
            snr_convention: SNR_CONVENTION.to_string(),
        }
    }
}

/// Writes records with the [`BER_CSV_HEADER`] columns.
pub fn write_ber_csv<W: Write>(records: &[BerRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(BER_CSV_HEADER)?;
    }
    for r in records {
        w.serialize(BerRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a BER CSV, rejecting files whose header differs from
/// [`BER_CSV_HEADER`].
pub fn read_ber_csv<R: Read>(input: R) -> Result<Vec<BerRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(BER_CSV_HEADER.iter().copied()) {
        return Err(Error::InvalidConfig(format!(
            "unexpected BER CSV header: {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

//! Quasi-static i.i.d. Rayleigh channel with AWGN, and the real-valued
//! equivalent channel `H_eq = (I_T ⊗ Ȟ) G`.

use num_complex::Complex64;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codes::CodeDescriptor;
use crate::numerics::{kron, realify_matrix, tilde_vec, vec_stack, CMat, RMat};
use crate::{Error, Result};

/// SNR convention written into every BER CSV: received energy per receive
/// antenna per channel use over the noise variance, with unit-energy symbols
/// and unit-variance fading (so `Es_rx = N_t`).
pub const SNR_CONVENTION: &str = "Es_rx/N0 per rx antenna per channel use (Es_rx=Nt)";

/// Noise variance per complex sample for a given SNR under [`SNR_CONVENTION`].
pub fn noise_variance(snr_db: f64, n_t: usize) -> f64 {
    n_t as f64 / 10f64.powf(snr_db / 10.0)
}

/// Reproducible random stream identified by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Circularly-symmetric complex Gaussian with `E|x|² = variance`.
    pub fn complex_gaussian(&mut self, variance: f64) -> Complex64 {
        let sigma = (variance / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        Complex64::new(sigma * re, sigma * im)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// One quasi-static channel draw: `N_r × N_t` gains and the noise variance.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: CMat,
    /// `E|w|²` per complex noise sample.
    pub n0: f64,
}

impl ChannelRealization {
    pub fn new(h: CMat, n0: f64) -> Self {
        assert!(n0 >= 0.0, "noise variance must be nonnegative");
        assert!(h.is_finite(), "channel gains must be finite");
        ChannelRealization { h, n0 }
    }

    pub fn n_r(&self) -> usize {
        self.h.rows()
    }

    pub fn n_t(&self) -> usize {
        self.h.cols()
    }
}

/// Rayleigh draw: i.i.d. CN(0, 1) gains.
pub fn draw_channel(rng: &mut RngStream, n_r: usize, n_t: usize, n0: f64) -> ChannelRealization {
    let h = CMat::from_fn(n_r, n_t, |_, _| rng.complex_gaussian(1.0));
    ChannelRealization::new(h, n0)
}

/// `Y = H X + W` with `W` i.i.d. CN(0, n0).
pub fn transmit(x: &CMat, ch: &ChannelRealization, rng: &mut RngStream) -> CMat {
    assert_eq!(
        ch.n_t(),
        x.rows(),
        "codeword rows must match transmit antennas"
    );
    let hx = ch.h.matmul(x);
    if ch.n0 == 0.0 {
        return hx;
    }
    hx.map(|v| v + rng.complex_gaussian(ch.n0))
}

/// `ỹ = vec(Y)~`.
pub fn received_vector(y: &CMat) -> Vec<f64> {
    tilde_vec(&vec_stack(y))
}

/// `H_eq = (I_T ⊗ Ȟ) G`, of shape `2 N_r T × 2κ`.
pub fn equivalent_channel(ch: &ChannelRealization, code: &CodeDescriptor) -> Result<RMat> {
    if ch.n_t() != code.n_t {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} transmit antennas, code needs {}",
            ch.n_t(),
            code.n_t
        )));
    }
    let block = kron(&RMat::identity(code.t), &realify_matrix(&ch.h));
    Ok(block.matmul(&code.generator))
}

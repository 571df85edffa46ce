//! Square M-QAM alphabets built as the product of two Gray-labelled PAM axes.
//!
//! Point `p` of an M-QAM constellation has real level index `p / √M` and
//! imaginary level index `p % √M`; level indices count from the most
//! negative level upwards. A symbol's label is the real-axis label (most
//! significant bits) followed by the imaginary-axis label. On each axis the
//! level at position `k` from the top carries the binary-reflected Gray code
//! of `k`, so `00` is `(+1 + i)·scale` for QPSK.

use num_complex::Complex64;

use crate::{Error, Result};

/// Gray-labelled √M-PAM axis `{±1, ±3, …}·scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct PamAxis {
    levels: Vec<f64>,
    gray_labels: Vec<u32>,
    scale: f64,
}

impl PamAxis {
    /// `size` must be a power of two ≥ 2.
    pub fn new(size: usize, scale: f64) -> Self {
        assert!(
            size >= 2 && size.is_power_of_two(),
            "PAM size must be a power of two"
        );
        let levels = (0..size)
            .map(|k| (2.0 * k as f64 - (size as f64 - 1.0)) * scale)
            .collect();
        let gray_labels = (0..size)
            .map(|k| {
                let from_top = (size - 1 - k) as u32;
                from_top ^ (from_top >> 1)
            })
            .collect();
        PamAxis {
            levels,
            gray_labels,
            scale,
        }
    }

    /// Levels in strictly increasing order.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn gray_labels(&self) -> &[u32] {
        &self.gray_labels
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.levels.len().trailing_zeros() as usize
    }

    pub fn level(&self, index: usize) -> f64 {
        self.levels[index]
    }

    /// Index of the level nearest to `x`; exact ties go to the lower level.
    pub fn slice_index(&self, x: f64) -> usize {
        let top = self.levels.len() - 1;
        // Position on the unit-spaced grid 0..=top.
        let t = (x / self.scale + top as f64) * 0.5;
        let k = (t - 0.5).ceil();
        if k <= 0.0 {
            0
        } else if k >= top as f64 {
            top
        } else {
            k as usize
        }
    }

    /// The hard decision `Q(x)`: the level nearest to `x`.
    pub fn hard_decision(&self, x: f64) -> f64 {
        self.levels[self.slice_index(x)]
    }

    fn index_of_label(&self, label: u32) -> usize {
        self.gray_labels
            .iter()
            .position(|&g| g == label)
            .expect("label within axis range")
    }
}

/// Free-function form of [`PamAxis::hard_decision`].
pub fn hard_decision(x: f64, axis: &PamAxis) -> f64 {
    axis.hard_decision(x)
}

/// Square M-QAM constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    m: usize,
    points: Vec<Complex64>,
    gray_labels: Vec<u32>,
    axis: PamAxis,
}

impl Constellation {
    pub fn order(&self) -> usize {
        self.m
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.axis.bits()
    }

    pub fn gray_labels(&self) -> &[u32] {
        &self.gray_labels
    }

    /// Normalization applied to the odd-integer grid.
    pub fn scale(&self) -> f64 {
        self.axis.scale
    }

    /// The per-axis √M-PAM alphabet.
    pub fn axis(&self) -> &PamAxis {
        &self.axis
    }

    /// √M.
    pub fn side(&self) -> usize {
        self.axis.len()
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.m as f64
    }

    /// Point index from per-axis level indices.
    pub fn index_from_levels(&self, re: usize, im: usize) -> usize {
        re * self.side() + im
    }

    /// Per-axis level indices of a point index.
    pub fn levels_of(&self, index: usize) -> (usize, usize) {
        (index / self.side(), index % self.side())
    }

    /// Maps a bit string (one `0`/`1` per byte) to point indices.
    pub fn bits_to_symbols(&self, bits: &[u8]) -> Result<Vec<usize>> {
        let bps = self.bits_per_symbol();
        if !bits.len().is_multiple_of(bps) {
            return Err(Error::LengthMismatch {
                len: bits.len(),
                bits_per_symbol: bps,
            });
        }
        let half = bps / 2;
        Ok(bits
            .chunks_exact(bps)
            .map(|chunk| {
                let label = |b: &[u8]| {
                    b.iter()
                        .fold(0u32, |acc, &bit| (acc << 1) | u32::from(bit & 1))
                };
                let re = self.axis.index_of_label(label(&chunk[..half]));
                let im = self.axis.index_of_label(label(&chunk[half..]));
                self.index_from_levels(re, im)
            })
            .collect())
    }

    /// Inverse of [`Constellation::bits_to_symbols`].
    pub fn symbols_to_bits(&self, symbols: &[usize]) -> Vec<u8> {
        let bps = self.bits_per_symbol();
        let mut out = Vec::with_capacity(symbols.len() * bps);
        for &s in symbols {
            let label = self.gray_labels[s];
            for b in (0..bps).rev() {
                out.push(((label >> b) & 1) as u8);
            }
        }
        out
    }

    /// Point index nearest to `x` (per-axis slicing).
    pub fn slice(&self, x: Complex64) -> usize {
        self.index_from_levels(self.axis.slice_index(x.re), self.axis.slice_index(x.im))
    }
}

/// Builds the square M-QAM alphabet.
///
/// `normalized = false` gives the odd-integer grid (scale 1) used for
/// coding-gain analysis; `normalized = true` rescales to unit average energy.
pub fn make_qam(m: usize, normalized: bool) -> Result<Constellation> {
    if !matches!(m, 4 | 16 | 64) {
        return Err(Error::UnsupportedOrder(m));
    }
    let side = (m as f64).sqrt().round() as usize;
    // E|s|² of the odd-integer grid is 2(M − 1)/3.
    let scale = if normalized {
        (3.0 / (2.0 * (m as f64 - 1.0))).sqrt()
    } else {
        1.0
    };
    let axis = PamAxis::new(side, scale);
    let half = axis.bits();
    let mut points = Vec::with_capacity(m);
    let mut gray_labels = Vec::with_capacity(m);
    for re in 0..side {
        for im in 0..side {
            points.push(Complex64::new(axis.levels[re], axis.levels[im]));
            gray_labels.push((axis.gray_labels[re] << half) | axis.gray_labels[im]);
        }
    }
    Ok(Constellation {
        m,
        points,
        gray_labels,
        axis,
    })
}

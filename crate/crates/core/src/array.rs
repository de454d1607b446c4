//! Shared domain types: array geometry, link budget, precoder weights, power
//! conversions and the seeded random source.
//!
//! Powers are linear everywhere inside the crate. Decibels only appear at the
//! I/O boundary through [`db_from_linear`] and [`db_or_sentinel`].

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Baseband symbol, in units of square-root power.
pub type ComplexSymbol = Complex64;

/// Relative tolerance of the `Σ|w_m|² = M` normalization.
pub const POWER_NORMALIZATION_TOL: f64 = 1e-9;

/// Uniform linear array with `num_antennas` isotropic elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    num_antennas: usize,
    spacing_over_wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(num_antennas: usize, spacing_over_wavelength: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::Domain("array needs at least one antenna".into()));
        }
        if !(spacing_over_wavelength.is_finite() && spacing_over_wavelength > 0.0) {
            return Err(Error::Domain(format!(
                "antenna spacing must be positive, got {spacing_over_wavelength}"
            )));
        }
        Ok(Self {
            num_antennas,
            spacing_over_wavelength,
        })
    }

    /// Half-wavelength ULA.
    pub fn half_wavelength(num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, 0.5)
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn spacing_over_wavelength(&self) -> f64 {
        self.spacing_over_wavelength
    }

    /// Per-antenna phase `m·2π·(d/λ)·cos(angle)` for a wave leaving at `angle`
    /// from the array axis.
    pub fn phase_profile(&self, angle: f64) -> Vec<f64> {
        let step = 2.0 * std::f64::consts::PI * self.spacing_over_wavelength * angle.cos();
        (0..self.num_antennas).map(|m| m as f64 * step).collect()
    }
}

/// Symbol power `p`, receiver noise power `σ_v²` and path loss `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub symbol_power: f64,
    pub noise_power: f64,
    pub path_loss: f64,
}

impl LinkBudget {
    pub fn new(symbol_power: f64, noise_power: f64, path_loss: f64) -> Result<Self> {
        for (name, v) in [
            ("symbol_power", symbol_power),
            ("noise_power", noise_power),
            ("path_loss", path_loss),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            symbol_power,
            noise_power,
            path_loss,
        })
    }

    /// Budget pinned by the constraint `M²·β·p/σ_v² = snr_db`, solving for `σ_v²`.
    pub fn from_array_snr_db(
        num_antennas: usize,
        symbol_power: f64,
        path_loss: f64,
        snr_db: f64,
    ) -> Result<Self> {
        let m = num_antennas as f64;
        let noise = m * m * path_loss * symbol_power / linear_from_db(snr_db);
        Self::new(symbol_power, noise, path_loss)
    }

    /// `β·p/σ_v²`.
    pub fn per_antenna_snr(&self) -> f64 {
        self.path_loss * self.symbol_power / self.noise_power
    }
}

/// Precoding weights `w_0..w_{M-1}` normalized so that `Σ|w_m|² = M`, i.e. the
/// total PA input power is `p·M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderWeights {
    weights: Vec<Complex64>,
}

impl PrecoderWeights {
    /// Validates the `Σ|w_m|² = M` normalization.
    pub fn new(weights: Vec<Complex64>) -> Result<Self> {
        let w = Self::unnormalized(weights)?;
        let m = w.len() as f64;
        let power = w.total_power();
        if ((power - m) / m).abs() > POWER_NORMALIZATION_TOL {
            return Err(Error::Domain(format!(
                "weights carry total power {power}, expected {m}"
            )));
        }
        Ok(w)
    }

    /// Arbitrary finite weights without the power check, for probing
    /// functionals on hand-built vectors.
    pub fn unnormalized(weights: Vec<Complex64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("empty weight vector".into()));
        }
        if weights.iter().any(|w| !(w.re.is_finite() && w.im.is_finite())) {
            return Err(Error::Domain("non-finite weight".into()));
        }
        Ok(Self { weights })
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ|w_m|²`.
    pub fn total_power(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_sqr()).sum()
    }

    /// Multiplies every weight by the same unit phasor.
    pub fn rotated(&self, phase: f64) -> Self {
        let r = Complex64::from_polar(1.0, phase);
        Self {
            weights: self.weights.iter().map(|w| w * r).collect(),
        }
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.weights
    }
}

/// `10·log10(x)` for strictly positive `x`.
pub fn db_from_linear(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("cannot take dB of {x}")));
    }
    Ok(10.0 * x.log10())
}

pub fn linear_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dB conversion that maps an exact zero to `-inf` and `+inf` to `+inf`.
/// Negative and NaN inputs still fail.
pub fn db_or_sentinel(x: f64) -> Result<f64> {
    if x == 0.0 {
        Ok(f64::NEG_INFINITY)
    } else if x == f64::INFINITY {
        Ok(f64::INFINITY)
    } else {
        db_from_linear(x)
    }
}

/// Deterministic random source identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose output is specified bit-for-bit, so sequences are
/// identical on every platform. Workers never share an instance; they call
/// [`SeededRng::derive`] to obtain an independent sub-stream.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh generator on a sub-stream determined only by this generator's
    /// identity and `index`, never by how much of it has been consumed.
    pub fn derive(&self, index: u64) -> SeededRng {
        let stream = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)));
        SeededRng::new(self.seed, stream)
    }

    /// Standard normal sample.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Circularly symmetric complex Gaussian with `E|z|² = power`.
    pub fn complex_normal(&mut self, power: f64) -> Complex64 {
        let sd = (power / 2.0).sqrt();
        let re = self.normal();
        let im = self.normal();
        Complex64::new(sd * re, sd * im)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `n` i.i.d. circularly symmetric complex Gaussian symbols of power `p`.
pub fn gaussian_symbols(rng: &mut SeededRng, p: f64, n: usize) -> Result<Vec<ComplexSymbol>> {
    if n == 0 {
        return Err(Error::Domain("symbol count must be at least 1".into()));
    }
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::Domain(format!("symbol power must be positive, got {p}")));
    }
    Ok((0..n).map(|_| rng.complex_normal(p)).collect())
}

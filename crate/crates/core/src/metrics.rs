//! Bussgang link metrics at the user: `r = G·s + d + v` with `d` uncorrelated
//! with `s`, and SNR / SDR / SNDR built from `|G|²p`, `E|d|²` and `σ_v²`.
//!
//! Monte Carlo estimation works for any PA model. Noise is never sampled; it
//! enters analytically through `σ_v²`. Samples are generated in fixed-size
//! partitions, each on its own RNG sub-stream, and partial sums are combined in
//! partition order so results do not depend on the number of worker threads.
//!
//! Every PA here is memoryless and phase-transparent, so `r = s·f(|s|²)` and
//! all moments depend on `|s|²` only. Symbol powers are therefore drawn with
//! stratified sampling: sample `i` of `n` takes `|s|² = −p·ln(1 − u_i)` with
//! `u_i` uniform on `[i/n, (i+1)/n)`, and a uniform phase. Each symbol is still
//! marginally `CN(0, p)`, estimates stay unbiased, and the heavy `|s|⁶` tail
//! that dominates the distortion estimate is sampled evenly. Standard errors
//! pair adjacent strata, which slightly overstates the true variance.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::array::{db_or_sentinel, ArrayGeometry, LinkBudget, PrecoderWeights, SeededRng};
use crate::channel::{los_ula_channel, ChannelRealization};
use crate::error::{Error, Result};
use crate::pa::PaModel;
use crate::precoder::{array_response, residual_scale, zero_distortion_residual, PrecoderSpec};
use crate::radiation::NULL_FLOOR;

pub const MIN_SAMPLES: usize = 10_000;
pub const DEFAULT_SAMPLES: usize = 1_000_000;

/// Samples per RNG partition.
pub const PARTITION_LEN: usize = 1 << 14;

/// Estimated distortion below this fraction of the signal power is rounding
/// noise of an exactly linear response.
const DISTORTION_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub bussgang_gain: Complex64,
    /// `|G|²·p`.
    pub signal_power: f64,
    /// `E|d|²`.
    pub distortion_power: f64,
    pub noise_power: f64,
    pub snr_db: f64,
    /// `+inf` when the distortion is exactly zero.
    pub sdr_db: f64,
    pub sndr_db: f64,
    /// Zero for closed-form reports.
    pub sample_count: usize,
    /// Standard error of the SDR estimate, in dB.
    pub standard_error_db: f64,
    /// The distortion estimate was below resolution and was set to zero.
    pub distortion_floored: bool,
}

impl MetricsReport {
    fn assemble(
        gain: Complex64,
        symbol_power: f64,
        distortion_power: f64,
        noise_power: f64,
        sample_count: usize,
        standard_error_db: f64,
        distortion_floored: bool,
    ) -> Result<Self> {
        let signal_power = gain.norm_sqr() * symbol_power;
        let mut report = Self {
            bussgang_gain: gain,
            signal_power,
            distortion_power,
            noise_power,
            snr_db: 0.0,
            sdr_db: 0.0,
            sndr_db: 0.0,
            sample_count,
            standard_error_db,
            distortion_floored,
        };
        report.snr_db = db_or_sentinel(report.snr())?;
        report.sdr_db = db_or_sentinel(report.sdr())?;
        report.sndr_db = db_or_sentinel(report.sndr())?;
        Ok(report)
    }

    pub fn snr(&self) -> f64 {
        self.signal_power / self.noise_power
    }

    pub fn sdr(&self) -> f64 {
        if self.distortion_power == 0.0 {
            f64::INFINITY
        } else {
            self.signal_power / self.distortion_power
        }
    }

    pub fn sndr(&self) -> f64 {
        self.signal_power / (self.distortion_power + self.noise_power)
    }
}

/// Symbols and noiseless received samples of one Monte Carlo run.
#[derive(Debug, Clone)]
pub struct ReceivedBatch {
    pub symbols: Vec<Complex64>,
    pub received: Vec<Complex64>,
    partitions: Vec<std::ops::Range<usize>>,
}

/// Symbols `offset..offset + len` of an `n`-point stratified `CN(0, p)` draw.
fn stratified_symbols(rng: &mut SeededRng, p: f64, offset: usize, len: usize, n: usize) -> Vec<Complex64> {
    let nf = n as f64;
    (offset..offset + len)
        .map(|i| {
            let u = ((i as f64 + rng.uniform()) / nf).min(1.0 - f64::EPSILON / 2.0);
            let power = -p * (-u).ln_1p();
            Complex64::from_polar(power.sqrt(), 2.0 * std::f64::consts::PI * rng.uniform())
        })
        .collect()
}

/// Draws `n` stratified Gaussian symbols of power `p` and evaluates the
/// noiseless received signal `Σ h_m·PA(w_m·s)` for each.
pub fn draw_received(
    h: &ChannelRealization,
    w: &PrecoderWeights,
    pa: &PaModel,
    p: f64,
    n: usize,
    rng: &SeededRng,
) -> Result<ReceivedBatch> {
    if h.len() != w.len() {
        return Err(Error::Dimension {
            expected: h.len(),
            actual: w.len(),
        });
    }
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::Domain(format!("symbol power must be positive, got {p}")));
    }
    // r = s·Σ h_m w_m g(|w_m|²|s|²)
    let coupling: Vec<(Complex64, f64)> = h
        .gains()
        .iter()
        .zip(w.as_slice())
        .map(|(g, wm)| (g * wm, wm.norm_sqr()))
        .collect();
    let partitions: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(PARTITION_LEN)
        .map(|start| start..(start + PARTITION_LEN).min(n))
        .collect();
    let chunks: Vec<Result<(Vec<Complex64>, Vec<Complex64>)>> = partitions
        .par_iter()
        .enumerate()
        .map(|(k, range)| {
            let mut sub = rng.derive(k as u64);
            let symbols = stratified_symbols(&mut sub, p, range.start, range.len(), n);
            let received: Vec<Complex64> = symbols
                .iter()
                .map(|s| {
                    let power = s.norm_sqr();
                    let sum: Complex64 = coupling
                        .iter()
                        .map(|&(c, wp)| c * pa.gain(wp * power))
                        .sum();
                    s * sum
                })
                .collect();
            if received.iter().any(|r| !(r.re.is_finite() && r.im.is_finite())) {
                return Err(Error::Numeric("non-finite received sample".into()));
            }
            Ok((symbols, received))
        })
        .collect();
    let mut symbols = Vec::with_capacity(n);
    let mut received = Vec::with_capacity(n);
    for chunk in chunks {
        let (s, r) = chunk?;
        symbols.extend(s);
        received.extend(r);
    }
    Ok(ReceivedBatch {
        symbols,
        received,
        partitions,
    })
}

impl ReceivedBatch {
    /// Applies `f` to each partition sequentially and adds the partial sums
    /// in partition order.
    fn reduce<T, F>(&self, f: F) -> T
    where
        T: Send + std::iter::Sum<T>,
        F: Fn(&[Complex64], &[Complex64]) -> T + Sync,
    {
        let parts: Vec<T> = self
            .partitions
            .par_iter()
            .map(|r| f(&self.symbols[r.clone()], &self.received[r.clone()]))
            .collect();
        parts.into_iter().sum()
    }

    /// Least-squares Bussgang gain `Σ r s* / Σ|s|²` and the empirical symbol
    /// power.
    pub fn bussgang_gain(&self) -> (Complex64, f64) {
        let (cross, power) = self.reduce(|s, r| {
            let mut cross = Complex64::new(0.0, 0.0);
            let mut power = 0.0;
            for (si, ri) in s.iter().zip(r) {
                cross += ri * si.conj();
                power += si.norm_sqr();
            }
            Pair(cross, power)
        })
        .into();
        (cross / power, power / self.symbols.len() as f64)
    }

    /// Distortion samples `d = r − G·s`.
    pub fn distortion(&self, gain: Complex64) -> Vec<Complex64> {
        self.symbols
            .iter()
            .zip(&self.received)
            .map(|(s, r)| r - gain * s)
            .collect()
    }

    /// `Σ|d|²` for `d = r − G·s`, and `Σ (|d_{2k}|² − |d_{2k+1}|²)²` over
    /// adjacent strata, the collapsed-strata estimate of `n²·Var(mean|d|²)`.
    fn distortion_moments(&self, gain: Complex64) -> (f64, f64) {
        self.reduce(|s, r| {
            let mut m2 = 0.0;
            let mut pairs = 0.0;
            for (sp, rp) in s.chunks(2).zip(r.chunks(2)) {
                let e: Vec<f64> = sp.iter().zip(rp).map(|(si, ri)| (ri - gain * si).norm_sqr()).collect();
                m2 += e.iter().sum::<f64>();
                if let [a, b] = e[..] {
                    pairs += (a - b) * (a - b);
                }
            }
            Pair(Complex64::new(m2, pairs), 0.0)
        })
        .into_moments()
    }
}

struct Pair(Complex64, f64);

impl std::iter::Sum for Pair {
    fn sum<I: Iterator<Item = Pair>>(iter: I) -> Self {
        iter.fold(Pair(Complex64::new(0.0, 0.0), 0.0), |a, b| Pair(a.0 + b.0, a.1 + b.1))
    }
}

impl From<Pair> for (Complex64, f64) {
    fn from(p: Pair) -> Self {
        (p.0, p.1)
    }
}

impl Pair {
    fn into_moments(self) -> (f64, f64) {
        (self.0.re, self.0.im)
    }
}

/// Monte Carlo Bussgang metrics.
///
/// The gain is the least-squares fit `Ĝ = Σ r s*/Σ|s|²` and the distortion
/// power is the mean of `|r − Ĝs|²` rescaled from the empirical to the nominal
/// symbol power. This equals `E|r|² − |G|²p` in expectation but does not
/// subtract two large sample moments, so high SDRs stay resolvable.
pub fn bussgang_monte_carlo(
    h: &ChannelRealization,
    w: &PrecoderWeights,
    pa: &PaModel,
    budget: &LinkBudget,
    n: usize,
    rng: &SeededRng,
) -> Result<MetricsReport> {
    if n < MIN_SAMPLES {
        return Err(Error::Precision(format!(
            "{n} samples is below the minimum of {MIN_SAMPLES}"
        )));
    }
    let p = budget.symbol_power;
    let batch = draw_received(h, w, pa, p, n, rng)?;
    let (gain, p_hat) = batch.bussgang_gain();
    let (m2, pairs) = batch.distortion_moments(gain);
    let nf = n as f64;
    let d_hat = m2 / nf;
    let floored = d_hat <= DISTORTION_FLOOR * gain.norm_sqr() * p_hat;
    let (distortion, se_db) = if floored {
        (0.0, 0.0)
    } else {
        let se = pairs.sqrt() / nf;
        (d_hat * p / p_hat, 10.0 / std::f64::consts::LN_10 * se / d_hat)
    };
    MetricsReport::assemble(gain, p, distortion, budget.noise_power, n, se_db, floored)
}

/// Closed-form metrics for the third-order PA with Gaussian symbols.
///
/// With `A = Σh_m w_m` and `B = a3·Σh_m w_m|w_m|²`, the noiseless received
/// signal is `A·s + B·s|s|²`, which gives `G = A + 2pB` and
/// `E|d|² = 2p³|B|²`.
pub fn third_order_analytic_metrics(
    h: &ChannelRealization,
    w: &PrecoderWeights,
    a3: Complex64,
    budget: &LinkBudget,
) -> Result<MetricsReport> {
    let p = budget.symbol_power;
    let a = array_response(h, w)?;
    let residual = zero_distortion_residual(h, w)?;
    let residual = if residual.norm() <= NULL_FLOOR * residual_scale(h, w)? {
        Complex64::new(0.0, 0.0)
    } else {
        residual
    };
    let b = a3 * residual;
    let gain = a + b * (2.0 * p);
    let distortion = 2.0 * p * p * p * b.norm_sqr();
    MetricsReport::assemble(gain, p, distortion, budget.noise_power, 0, 0.0, false)
}

/// Amplifier family swept over back-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepAmplifier {
    Ideal,
    Rapp { smoothness: f64 },
}

impl SweepAmplifier {
    /// PA for input back-off `p/p_sat = backoff_db`.
    pub fn at_backoff(&self, symbol_power: f64, backoff_db: f64) -> Result<PaModel> {
        match *self {
            SweepAmplifier::Ideal => Ok(PaModel::Ideal),
            SweepAmplifier::Rapp { smoothness } => PaModel::rapp(
                symbol_power / crate::array::linear_from_db(backoff_db),
                smoothness,
            ),
        }
    }
}

/// LOS back-off sweep. `p` is held fixed by the constraint
/// `M²βp/σ_v² = array_snr_db` and `p_sat = p / backoff` varies.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub geometry: ArrayGeometry,
    pub user_angle: f64,
    pub path_loss: f64,
    pub symbol_power: f64,
    pub array_snr_db: f64,
    pub amplifier: SweepAmplifier,
    pub precoders: Vec<PrecoderSpec>,
    pub samples: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn budget(&self) -> Result<LinkBudget> {
        LinkBudget::from_array_snr_db(
            self.geometry.num_antennas(),
            self.symbol_power,
            self.path_loss,
            self.array_snr_db,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub backoff_db: f64,
    pub precoder: String,
    pub report: MetricsReport,
}

/// `count` points evenly spaced over `[start, stop]`, endpoints included.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![start],
        _ => {
            let step = (stop - start) / (count - 1) as f64;
            (0..count)
                .map(|k| if k + 1 == count { stop } else { start + step * k as f64 })
                .collect()
        }
    }
}

/// Rows are ordered by back-off, then by precoder in configuration order.
/// Every point reuses the same symbol stream.
pub fn backoff_sweep(config: &SweepConfig, backoffs_db: &[f64]) -> Result<Vec<SweepRow>> {
    if backoffs_db.is_empty() {
        return Err(Error::config("backoff_db", "empty back-off grid"));
    }
    if backoffs_db.iter().any(|b| !b.is_finite()) {
        return Err(Error::config("backoff_db", "non-finite back-off"));
    }
    if config.precoders.is_empty() {
        return Err(Error::config("precoders", "no precoder selected"));
    }
    let budget = config.budget()?;
    let h = los_ula_channel(&config.geometry, config.user_angle, config.path_loss)?;
    let weights: Vec<(String, PrecoderWeights)> = config
        .precoders
        .iter()
        .map(|spec| {
            Ok((
                spec.label(),
                spec.synthesize_los(&config.geometry, config.user_angle, config.path_loss)?,
            ))
        })
        .collect::<Result<_>>()?;
    let rng = SeededRng::new(config.seed, 0);
    let mut rows = Vec::with_capacity(backoffs_db.len() * weights.len());
    for &b in backoffs_db {
        let pa = config.amplifier.at_backoff(budget.symbol_power, b)?;
        for (label, w) in &weights {
            let report = bussgang_monte_carlo(&h, w, &pa, &budget, config.samples, &rng)?;
            rows.push(SweepRow {
                backoff_db: b,
                precoder: label.clone(),
                report,
            });
        }
    }
    Ok(rows)
}

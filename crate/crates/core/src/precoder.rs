//! Closed-form precoders: maximum ratio transmission (MRT) and the zero
//! third-order distortion (Z3RO) design, for LOS and general channels.
//!
//! A Z3RO precoder drives `M_s` "saturated" antennas with an amplified,
//! sign-flipped copy of the MRT weight so that the cubic distortion terms of
//! all antennas cancel at the user:
//!
//! ```text
//! Σ_m h_m · w_m · |w_m|² = 0
//! ```
//!
//! The construction is independent of the PA coefficient and of the symbol
//! statistics. All weights are normalized to `Σ|w_m|² = M` (PA input power
//! `p·M`); the global phasor is fixed to one.

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, ComplexSymbol, LinkBudget, PrecoderWeights};
use crate::channel::{los_ula_channel, ChannelRealization};
use crate::error::{Error, Result};
use crate::pa::PaModel;

/// Which antennas carry the saturated, sign-flipped weight.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaturatedSelection {
    /// Indices `0..M_s`.
    #[default]
    FirstIndices,
    /// The `M_s` largest `|h_m|`, ties broken by lower index.
    StrongestGains,
    /// The `M_s` smallest `|h_m|`, ties broken by lower index.
    WeakestGains,
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Z3roConfig {
    pub num_saturated: usize,
    pub selection: SaturatedSelection,
}

impl Z3roConfig {
    pub fn new(num_saturated: usize) -> Self {
        Self {
            num_saturated,
            selection: SaturatedSelection::FirstIndices,
        }
    }

    pub fn with_selection(mut self, selection: SaturatedSelection) -> Self {
        self.selection = selection;
        self
    }

    /// Checks `0 < M_s ≤ ⌊M/2⌋` and the explicit list, if any.
    pub fn validate(&self, num_antennas: usize) -> Result<()> {
        validate_saturated_count(num_antennas, self.num_saturated)?;
        if let SaturatedSelection::Explicit(idx) = &self.selection {
            if idx.len() != self.num_saturated {
                return Err(Error::config(
                    "selection",
                    format!(
                        "explicit list has {} entries but M_s = {}",
                        idx.len(),
                        self.num_saturated
                    ),
                ));
            }
            let mut seen = vec![false; num_antennas];
            for &i in idx {
                if i >= num_antennas {
                    return Err(Error::config(
                        "selection",
                        format!("index {i} out of range for M = {num_antennas}"),
                    ));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::config("selection", format!("duplicate index {i}")));
                }
            }
        }
        Ok(())
    }

    /// Membership mask of the saturated set for the given gain magnitudes.
    fn saturated_mask(&self, magnitudes: &[f64]) -> Result<Vec<bool>> {
        let m = magnitudes.len();
        self.validate(m)?;
        let mut mask = vec![false; m];
        let chosen: Vec<usize> = match &self.selection {
            SaturatedSelection::FirstIndices => (0..self.num_saturated).collect(),
            SaturatedSelection::Explicit(idx) => idx.clone(),
            SaturatedSelection::StrongestGains | SaturatedSelection::WeakestGains => {
                let mut order: Vec<usize> = (0..m).collect();
                let strongest = self.selection == SaturatedSelection::StrongestGains;
                // stable sort keeps lower indices first on ties
                order.sort_by(|&a, &b| {
                    let ord = magnitudes[a].total_cmp(&magnitudes[b]);
                    if strongest {
                        ord.reverse()
                    } else {
                        ord
                    }
                });
                order.truncate(self.num_saturated);
                order
            }
        };
        for i in chosen {
            mask[i] = true;
        }
        Ok(mask)
    }
}

fn validate_saturated_count(num_antennas: usize, num_saturated: usize) -> Result<()> {
    if num_saturated == 0 || 2 * num_saturated > num_antennas {
        return Err(Error::config(
            "num_saturated",
            format!("M_s = {num_saturated} must satisfy 0 < M_s <= M/2 with M = {num_antennas}"),
        ));
    }
    Ok(())
}

fn warn_if_half(num_antennas: usize, num_saturated: usize) {
    if 2 * num_saturated == num_antennas {
        warn!("M_s = M/2 = {num_saturated}: the Z3RO precoder has zero array gain");
    }
}

/// `α·e^{jφ_m}` scale factors of the LOS design, returned as
/// `(α, γ)` with the saturated weight `−γ`.
pub fn z3ro_los_coefficients(num_antennas: usize, num_saturated: usize) -> Result<(f64, f64)> {
    validate_saturated_count(num_antennas, num_saturated)?;
    let m = num_antennas as f64;
    let ms = num_saturated as f64;
    let rest = m - ms;
    let gamma = (rest / ms).cbrt();
    let alpha = m.sqrt() / (rest + ms.cbrt() * rest.powf(2.0 / 3.0)).sqrt();
    Ok((alpha, gamma))
}

/// Maximum ratio transmission `w_m = α·h_m*`, `α = √(M/Σ|h|²)`.
pub fn mrt(h: &ChannelRealization) -> Result<PrecoderWeights> {
    let energy = h.energy();
    if !(energy > 0.0) {
        return Err(Error::DegenerateChannel("all channel gains are zero".into()));
    }
    let alpha = (h.len() as f64 / energy).sqrt();
    PrecoderWeights::new(h.gains().iter().map(|g| g.conj() * alpha).collect())
}

/// Linear SNR of MRT: `p·M·Σ|h_m|²/σ_v²`.
pub fn snr_mrt(h: &ChannelRealization, budget: &LinkBudget) -> f64 {
    budget.symbol_power * h.len() as f64 * h.energy() / budget.noise_power
}

/// Z3RO precoder for the LOS ULA channel towards `user_angle` (radians from
/// the array axis).
///
/// In LOS all gains have the same magnitude, so gain-ranked selections reduce
/// to [`SaturatedSelection::FirstIndices`].
pub fn z3ro_los(
    geometry: &ArrayGeometry,
    user_angle: f64,
    path_loss: f64,
    cfg: &Z3roConfig,
) -> Result<PrecoderWeights> {
    let m = geometry.num_antennas();
    if !(user_angle > 0.0 && user_angle < std::f64::consts::PI) {
        return Err(Error::Domain(format!(
            "user angle {user_angle} rad outside (0, π)"
        )));
    }
    if !(path_loss.is_finite() && path_loss > 0.0) {
        return Err(Error::Domain(format!("path loss must be positive, got {path_loss}")));
    }
    let (alpha, gamma) = z3ro_los_coefficients(m, cfg.num_saturated)?;
    let mask = cfg.saturated_mask(&vec![path_loss.sqrt(); m])?;
    warn_if_half(m, cfg.num_saturated);
    let weights = geometry
        .phase_profile(user_angle)
        .into_iter()
        .zip(mask)
        .map(|(phi, saturated)| {
            let amp = if saturated { -alpha * gamma } else { alpha };
            Complex64::from_polar(1.0, phi) * amp
        })
        .collect();
    PrecoderWeights::new(weights)
}

/// Z3RO extension to an arbitrary channel: `w_m = α·h_m*·(−γ)` on the
/// saturated set and `α·h_m*` elsewhere, with
/// `γ = (Σ_unsat|h|⁴ / Σ_sat|h|⁴)^{1/3}`.
pub fn z3ro_general(h: &ChannelRealization, cfg: &Z3roConfig) -> Result<PrecoderWeights> {
    let m = h.len();
    let magnitudes: Vec<f64> = h.gains().iter().map(|g| g.norm()).collect();
    let mask = cfg.saturated_mask(&magnitudes)?;
    warn_if_half(m, cfg.num_saturated);

    let (mut sat4, mut unsat4, mut sat2, mut unsat2) = (0.0, 0.0, 0.0, 0.0);
    for (g, &saturated) in h.gains().iter().zip(&mask) {
        let e = g.norm_sqr();
        if saturated {
            sat2 += e;
            sat4 += e * e;
        } else {
            unsat2 += e;
            unsat4 += e * e;
        }
    }
    if !(sat4 > 0.0) {
        return Err(Error::DegenerateSelection(
            "every saturated antenna has a zero channel gain".into(),
        ));
    }
    let gamma = (unsat4 / sat4).cbrt();
    let denom = unsat2 + gamma * gamma * sat2;
    if !(denom > 0.0) {
        return Err(Error::DegenerateSelection(
            "every unsaturated antenna has a zero channel gain".into(),
        ));
    }
    let alpha = (m as f64 / denom).sqrt();
    let weights = h
        .gains()
        .iter()
        .zip(&mask)
        .map(|(g, &saturated)| {
            let amp = if saturated { -alpha * gamma } else { alpha };
            g.conj() * amp
        })
        .collect();
    PrecoderWeights::new(weights)
}

/// A precoder choice, synthesized against a concrete channel.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecoderSpec {
    Mrt,
    Z3ro(Z3roConfig),
}

impl PrecoderSpec {
    /// Short name used in output tables, e.g. `mrt` or `z3ro_ms4`.
    pub fn label(&self) -> String {
        match self {
            PrecoderSpec::Mrt => "mrt".into(),
            PrecoderSpec::Z3ro(cfg) => format!("z3ro_ms{}", cfg.num_saturated),
        }
    }

    pub fn synthesize_los(
        &self,
        geometry: &ArrayGeometry,
        user_angle: f64,
        path_loss: f64,
    ) -> Result<PrecoderWeights> {
        match self {
            PrecoderSpec::Mrt => mrt(&los_ula_channel(geometry, user_angle, path_loss)?),
            PrecoderSpec::Z3ro(cfg) => z3ro_los(geometry, user_angle, path_loss, cfg),
        }
    }

    pub fn synthesize(&self, h: &ChannelRealization) -> Result<PrecoderWeights> {
        match self {
            PrecoderSpec::Mrt => mrt(h),
            PrecoderSpec::Z3ro(cfg) => z3ro_general(h, cfg),
        }
    }
}

fn check_len(h: &ChannelRealization, w: &PrecoderWeights) -> Result<()> {
    if h.len() != w.len() {
        return Err(Error::Dimension {
            expected: h.len(),
            actual: w.len(),
        });
    }
    Ok(())
}

/// `Σ h_m·w_m`: the coherent linear response at the user.
pub fn array_response(h: &ChannelRealization, w: &PrecoderWeights) -> Result<Complex64> {
    check_len(h, w)?;
    Ok(h.gains().iter().zip(w.as_slice()).map(|(g, w)| g * w).sum())
}

/// `Σ h_m·w_m·|w_m|²`: the coherent third-order distortion at the user.
pub fn zero_distortion_residual(h: &ChannelRealization, w: &PrecoderWeights) -> Result<Complex64> {
    check_len(h, w)?;
    Ok(h
        .gains()
        .iter()
        .zip(w.as_slice())
        .map(|(g, w)| g * w * w.norm_sqr())
        .sum())
}

/// `Σ |h_m|·|w_m|³`, the natural magnitude scale of the residual.
pub fn residual_scale(h: &ChannelRealization, w: &PrecoderWeights) -> Result<f64> {
    check_len(h, w)?;
    Ok(h
        .gains()
        .iter()
        .zip(w.as_slice())
        .map(|(g, w)| g.norm() * w.norm().powi(3))
        .sum())
}

/// `M·((M−M_s)^{2/3} − M_s^{2/3})² / ((M−M_s)^{1/3} + M_s^{1/3})`, the
/// LOS Z3RO value of `|Σ g_m|²`.
pub fn z3ro_array_factor(num_antennas: usize, num_saturated: usize) -> Result<f64> {
    validate_saturated_count(num_antennas, num_saturated)?;
    let m = num_antennas as f64;
    let ms = num_saturated as f64;
    let rest = m - ms;
    let num = rest.powf(2.0 / 3.0) - ms.powf(2.0 / 3.0);
    Ok(m * num * num / (rest.cbrt() + ms.cbrt()))
}

/// Closed-form LOS Z3RO SNR, `(βp/σ_v²)` times [`z3ro_array_factor`].
pub fn z3ro_snr(num_antennas: usize, num_saturated: usize, budget: &LinkBudget) -> Result<f64> {
    Ok(budget.per_antenna_snr() * z3ro_array_factor(num_antennas, num_saturated)?)
}

/// Received sample `r = Σ h_m·PA(w_m·s) + v` with its linear, distortion and
/// noise parts. For the third-order PA the parts are `s·Σh_m w_m` and
/// `a3·s|s|²·Σh_m w_m|w_m|²`; for other models the distortion is whatever the
/// PA output adds on top of the linear part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceivedSample {
    pub value: Complex64,
    pub linear: Complex64,
    pub distortion: Complex64,
    pub noise: Complex64,
}

pub fn received_signal(
    h: &ChannelRealization,
    w: &PrecoderWeights,
    s: ComplexSymbol,
    pa: &PaModel,
    noise: Complex64,
) -> Result<ReceivedSample> {
    check_len(h, w)?;
    let mut linear = Complex64::new(0.0, 0.0);
    let mut distortion = Complex64::new(0.0, 0.0);
    for (g, wm) in h.gains().iter().zip(w.as_slice()) {
        let x = wm * s;
        match pa {
            PaModel::Ideal => linear += g * x,
            PaModel::ThirdOrder { .. } => {
                let (l, d) = pa.third_order_split(x)?;
                linear += g * l;
                distortion += g * d;
            }
            PaModel::Rapp { .. } => {
                linear += g * x;
                distortion += g * (pa.amplify(x) - x);
            }
        }
    }
    Ok(ReceivedSample {
        value: linear + distortion + noise,
        linear,
        distortion,
        noise,
    })
}

//! Narrowband single-user channels: line-of-sight over a ULA and i.i.d.
//! Rayleigh fading.

use num_complex::Complex64;

use crate::array::{ArrayGeometry, SeededRng};
use crate::error::{Error, Result};

/// Complex gains `h_m` from each antenna to the user, plus the path loss `β`
/// they were generated with.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    gains: Vec<Complex64>,
    path_loss: f64,
}

impl ChannelRealization {
    pub fn new(gains: Vec<Complex64>, path_loss: f64) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::Domain("channel needs at least one gain".into()));
        }
        if gains.iter().any(|h| !(h.re.is_finite() && h.im.is_finite())) {
            return Err(Error::Domain("non-finite channel gain".into()));
        }
        check_path_loss(path_loss)?;
        Ok(Self { gains, path_loss })
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn path_loss(&self) -> f64 {
        self.path_loss
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// `Σ|h_m|²`.
    pub fn energy(&self) -> f64 {
        self.gains.iter().map(|h| h.norm_sqr()).sum()
    }
}

fn check_path_loss(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Domain(format!("path loss must be positive, got {beta}")));
    }
    Ok(())
}

/// LOS channel `h_m = √β·exp(−j·φ_m)` with `φ_m = m·2π·(d/λ)·cos(θ)`.
///
/// `user_angle` is in radians from the array axis and must lie in the open
/// interval `(0, π)`.
pub fn los_ula_channel(
    geometry: &ArrayGeometry,
    user_angle: f64,
    path_loss: f64,
) -> Result<ChannelRealization> {
    if !(user_angle > 0.0 && user_angle < std::f64::consts::PI) {
        return Err(Error::Domain(format!(
            "user angle {user_angle} rad outside (0, π)"
        )));
    }
    check_path_loss(path_loss)?;
    let amp = path_loss.sqrt();
    let gains = geometry
        .phase_profile(user_angle)
        .into_iter()
        .map(|phi| Complex64::from_polar(amp, -phi))
        .collect();
    Ok(ChannelRealization { gains, path_loss })
}

/// i.i.d. circularly symmetric Gaussian gains with `E|h_m|² = β`.
pub fn iid_rayleigh_channel(
    num_antennas: usize,
    path_loss: f64,
    rng: &mut SeededRng,
) -> Result<ChannelRealization> {
    if num_antennas == 0 {
        return Err(Error::Domain("channel needs at least one antenna".into()));
    }
    check_path_loss(path_loss)?;
    let gains = (0..num_antennas)
        .map(|_| rng.complex_normal(path_loss))
        .collect();
    Ok(ChannelRealization { gains, path_loss })
}

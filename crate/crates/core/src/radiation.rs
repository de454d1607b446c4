//! Far-field radiation patterns of a precoded ULA driven by third-order PAs.
//!
//! With Gaussian symbols `s` of power `p`, the radiated field in direction
//! `θ̃` is `A(θ̃)·s + B(θ̃)·s|s|²` where
//!
//! ```text
//! A(θ̃) = Σ w_m e^{−jφ̃_m},   B(θ̃) = a3 Σ w_m |w_m|² e^{−jφ̃_m}
//! ```
//!
//! and the expected power follows from `E|s|⁴ = 2p²`, `E|s|⁶ = 6p³`:
//! `P(θ̃) = p|A|² + 4p²·Re(A·B*) + 6p³|B|²`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::array::{ArrayGeometry, PrecoderWeights};
use crate::error::{Error, Result};
use crate::pa::PaModel;

/// Sums whose magnitude falls below this fraction of their term-magnitude
/// total are below floating-point resolution and are reported as exact zeros.
pub const NULL_FLOOR: f64 = 1e-12;

/// Minimum number of points for directivity integration.
pub const MIN_DIRECTIVITY_POINTS: usize = 1024;

pub const DEFAULT_GRID_POINTS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    angles: Vec<f64>,
    uniform: bool,
}

impl AngularGrid {
    /// `n` equally spaced angles covering `(−π, π]`, ending exactly at `π`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("angular grid needs at least one point".into()));
        }
        let step = 2.0 * PI / n as f64;
        let mut angles: Vec<f64> = (1..=n).map(|k| -PI + step * k as f64).collect();
        *angles.last_mut().unwrap() = PI;
        Ok(Self {
            angles,
            uniform: true,
        })
    }

    /// Arbitrary strictly increasing angles in `(−π, π]`. The grid is not
    /// treated as uniform even if the spacing happens to be constant.
    pub fn from_angles(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::Domain("angular grid needs at least one point".into()));
        }
        if angles.iter().any(|&a| !(a > -PI && a <= PI)) {
            return Err(Error::Domain("grid angles must lie in (−π, π]".into()));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("grid angles must be strictly increasing".into()));
        }
        Ok(Self {
            angles,
            uniform: false,
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    fn step(&self) -> f64 {
        2.0 * PI / self.angles.len() as f64
    }
}

/// How the radiated power is split into a "signal" and a "third-order" curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decomposition {
    /// Signal `p|A|²`, distortion `6p³|B|²`; the cross term only enters the
    /// total.
    #[default]
    Raw,
    /// Signal is the part correlated with `s`, `p|A + 2pB|²`; distortion is the
    /// uncorrelated remainder `2p³|B|²`.
    Bussgang,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternResult {
    pub angles: Vec<f64>,
    pub total: Vec<f64>,
    pub linear: Vec<f64>,
    pub dist3: Vec<f64>,
    /// Populated by [`directivity`].
    pub integrated: Option<IntegratedPower>,
}

/// Powers integrated over the full circle and the matching directivities.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedPower {
    pub total_power: f64,
    pub linear_power: f64,
    pub dist3_power: f64,
    pub directivity_total: Vec<f64>,
    pub directivity_linear: Vec<f64>,
    pub directivity_dist3: Vec<f64>,
}

/// `P/(P_T/2π)`, or zero when nothing is radiated at all.
pub fn directivity_value(power: f64, total_power: f64) -> f64 {
    if total_power > 0.0 {
        power / (total_power / (2.0 * PI))
    } else {
        0.0
    }
}

fn snap(sum: Complex64, scale: f64) -> Complex64 {
    if sum.norm() <= NULL_FLOOR * scale {
        Complex64::new(0.0, 0.0)
    } else {
        sum
    }
}

pub fn radiation_pattern(
    geometry: &ArrayGeometry,
    w: &PrecoderWeights,
    pa: &PaModel,
    p: f64,
    grid: &AngularGrid,
) -> Result<PatternResult> {
    radiation_pattern_with(geometry, w, pa, p, grid, Decomposition::Raw)
}

pub fn radiation_pattern_with(
    geometry: &ArrayGeometry,
    w: &PrecoderWeights,
    pa: &PaModel,
    p: f64,
    grid: &AngularGrid,
    mode: Decomposition,
) -> Result<PatternResult> {
    let a3 = pa.cubic_coefficient().ok_or_else(|| Error::UnsupportedModel {
        expected: "ideal or third-order",
        actual: pa.name().into(),
    })?;
    if w.len() != geometry.num_antennas() {
        return Err(Error::Dimension {
            expected: geometry.num_antennas(),
            actual: w.len(),
        });
    }
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::Domain(format!("symbol power must be positive, got {p}")));
    }
    let cubic: Vec<Complex64> = w.as_slice().iter().map(|x| x * x.norm_sqr()).collect();
    let linear_scale: f64 = w.as_slice().iter().map(|x| x.norm()).sum();
    let cubic_scale = a3.norm() * cubic.iter().map(|x| x.norm()).sum::<f64>();

    let n = grid.len();
    let mut out = PatternResult {
        angles: grid.angles().to_vec(),
        total: Vec::with_capacity(n),
        linear: Vec::with_capacity(n),
        dist3: Vec::with_capacity(n),
        integrated: None,
    };
    for &angle in grid.angles() {
        let mut a = Complex64::new(0.0, 0.0);
        let mut b = Complex64::new(0.0, 0.0);
        for ((wm, cm), phi) in w.as_slice().iter().zip(&cubic).zip(geometry.phase_profile(angle)) {
            let steer = Complex64::from_polar(1.0, -phi);
            a += wm * steer;
            b += cm * steer;
        }
        let a = snap(a, linear_scale);
        let b = snap(a3 * b, cubic_scale);
        let lin = p * a.norm_sqr();
        let d3 = 6.0 * p * p * p * b.norm_sqr();
        let cross = 4.0 * p * p * (a * b.conj()).re;
        // exact expectation is nonnegative; guard rounding in the cross term
        let total = (lin + cross + d3).max(0.0);
        let (lin, d3) = match mode {
            Decomposition::Raw => (lin, d3),
            Decomposition::Bussgang => {
                let g = a + b * (2.0 * p);
                (p * g.norm_sqr(), 2.0 * p * p * p * b.norm_sqr())
            }
        };
        out.total.push(total);
        out.linear.push(lin);
        out.dist3.push(d3);
    }
    Ok(out)
}

fn check_integration_grid(pattern: &PatternResult, grid: &AngularGrid) -> Result<()> {
    if !grid.is_uniform() {
        return Err(Error::Resolution("integration needs a uniform grid".into()));
    }
    if grid.len() < MIN_DIRECTIVITY_POINTS {
        return Err(Error::Resolution(format!(
            "{} points is below the minimum of {MIN_DIRECTIVITY_POINTS}",
            grid.len()
        )));
    }
    if pattern.angles.len() != grid.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            actual: pattern.angles.len(),
        });
    }
    Ok(())
}

/// Trapezoid over one period; on a uniform periodic grid the end corrections
/// cancel and this is `step·Σ f`.
fn integrate(values: &[f64], grid: &AngularGrid) -> f64 {
    grid.step() * values.iter().sum::<f64>()
}

/// Integrates the three power curves and fills in their directivities.
pub fn directivity(pattern: &PatternResult, grid: &AngularGrid) -> Result<PatternResult> {
    check_integration_grid(pattern, grid)?;
    let total_power = integrate(&pattern.total, grid);
    let linear_power = integrate(&pattern.linear, grid);
    let dist3_power = integrate(&pattern.dist3, grid);
    let dir = |v: &[f64], t: f64| v.iter().map(|&x| directivity_value(x, t)).collect();
    let mut out = pattern.clone();
    out.integrated = Some(IntegratedPower {
        total_power,
        linear_power,
        dist3_power,
        directivity_total: dir(&pattern.total, total_power),
        directivity_linear: dir(&pattern.linear, linear_power),
        directivity_dist3: dir(&pattern.dist3, dist3_power),
    });
    Ok(out)
}

/// `∫ P_dist3(θ̃) dθ̃` over the full circle.
pub fn total_distortion_power(pattern: &PatternResult, grid: &AngularGrid) -> Result<f64> {
    check_integration_grid(pattern, grid)?;
    Ok(integrate(&pattern.dist3, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{gaussian_symbols, SeededRng};
    use crate::channel::los_ula_channel;
    use crate::precoder::{mrt, z3ro_los, Z3roConfig};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mrt_los(m: usize, theta: f64) -> (ArrayGeometry, PrecoderWeights) {
        let g = ArrayGeometry::half_wavelength(m).unwrap();
        let h = los_ula_channel(&g, theta, 1.0).unwrap();
        (g, mrt(&h).unwrap())
    }

    #[test]
    fn grid_construction() {
        let g = AngularGrid::uniform(8).unwrap();
        assert_eq!(g.angles().last(), Some(&PI));
        assert!(g.angles()[0] > -PI);
        assert!(AngularGrid::uniform(0).is_err());
        assert!(AngularGrid::from_angles(vec![]).is_err());
        assert!(AngularGrid::from_angles(vec![0.1, 0.1]).is_err());
        assert!(AngularGrid::from_angles(vec![-PI, 0.0]).is_err());
        assert!(!AngularGrid::from_angles(vec![0.0, 1.0]).unwrap().is_uniform());
    }

    #[test]
    fn isotropic_single_element() {
        let g = ArrayGeometry::half_wavelength(1).unwrap();
        let w = PrecoderWeights::new(vec![c(1.0, 0.0)]).unwrap();
        let grid = AngularGrid::uniform(2048).unwrap();
        let pat = radiation_pattern(&g, &w, &PaModel::Ideal, 0.7, &grid).unwrap();
        assert!(pat.total.iter().all(|&x| (x - 0.7).abs() < 1e-15));
        let d = directivity(&pat, &grid).unwrap();
        let i = d.integrated.unwrap();
        assert!(i.directivity_total.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        assert!(i.directivity_dist3.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn directivity_scale_invariant_for_ideal_pa() {
        let (g, w) = mrt_los(16, 1.1);
        let grid = AngularGrid::uniform(4096).unwrap();
        let d1 = directivity(&radiation_pattern(&g, &w, &PaModel::Ideal, 1.0, &grid).unwrap(), &grid).unwrap();
        let d2 = directivity(&radiation_pattern(&g, &w, &PaModel::Ideal, 2.0, &grid).unwrap(), &grid).unwrap();
        let (a, b) = (d1.integrated.unwrap(), d2.integrated.unwrap());
        assert!((b.total_power / a.total_power - 2.0).abs() < 1e-12);
        for (x, y) in a.directivity_total.iter().zip(&b.directivity_total) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x));
        }
    }

    #[test]
    fn directivity_integrates_to_one() {
        let g = ArrayGeometry::half_wavelength(32).unwrap();
        let w = z3ro_los(&g, 80f64.to_radians(), 1.0, &Z3roConfig::new(2)).unwrap();
        let pa = PaModel::third_order(c(-0.08, 0.03)).unwrap();
        let grid = AngularGrid::uniform(4096).unwrap();
        let d = directivity(&radiation_pattern(&g, &w, &pa, 1.0, &grid).unwrap(), &grid).unwrap();
        let i = d.integrated.unwrap();
        for dir in [&i.directivity_total, &i.directivity_linear, &i.directivity_dist3] {
            let mean = dir.iter().sum::<f64>() / dir.len() as f64;
            assert!((mean - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn peak_directivity_grid_refinement() {
        // Independent check: the same integral on a 16x finer grid.
        let (g, w) = mrt_los(32, 80f64.to_radians());
        let peak = |n: usize| {
            let grid = AngularGrid::uniform(n).unwrap();
            let d = directivity(&radiation_pattern(&g, &w, &PaModel::Ideal, 1.0, &grid).unwrap(), &grid)
                .unwrap();
            d.integrated.unwrap().directivity_total.into_iter().fold(0.0, f64::max)
        };
        let coarse = peak(4096);
        let fine = peak(65536);
        assert!((coarse / fine - 1.0).abs() < 1e-3, "{coarse} vs {fine}");
    }

    #[test]
    fn integration_errors() {
        let (g, w) = mrt_los(4, 1.0);
        let coarse = AngularGrid::uniform(512).unwrap();
        let pat = radiation_pattern(&g, &w, &PaModel::Ideal, 1.0, &coarse).unwrap();
        assert!(matches!(directivity(&pat, &coarse), Err(Error::Resolution(_))));
        let irregular = AngularGrid::from_angles((0..2000).map(|k| -3.0 + 0.003 * k as f64).collect()).unwrap();
        let pat = radiation_pattern(&g, &w, &PaModel::Ideal, 1.0, &irregular).unwrap();
        assert!(matches!(total_distortion_power(&pat, &irregular), Err(Error::Resolution(_))));
        let rapp = PaModel::rapp(1.0, 2.0).unwrap();
        assert!(matches!(
            radiation_pattern(&g, &w, &rapp, 1.0, &coarse),
            Err(Error::UnsupportedModel { .. })
        ));
    }

    #[test]
    fn ideal_pa_has_no_distortion() {
        let (g, w) = mrt_los(8, 1.0);
        let grid = AngularGrid::uniform(1024).unwrap();
        let pat = radiation_pattern(&g, &w, &PaModel::Ideal, 1.0, &grid).unwrap();
        assert_eq!(total_distortion_power(&pat, &grid).unwrap(), 0.0);
    }

    #[test]
    fn mrt_distortion_follows_signal() {
        let (g, w) = mrt_los(32, 80f64.to_radians());
        let pa = PaModel::third_order(c(-0.1, 0.05)).unwrap();
        let grid = AngularGrid::uniform(4096).unwrap();
        let d = directivity(&radiation_pattern(&g, &w, &pa, 0.5, &grid).unwrap(), &grid).unwrap();
        let i = d.integrated.unwrap();
        for (a, b) in i.directivity_linear.iter().zip(&i.directivity_dist3) {
            assert!((a - b).abs() <= 1e-9 * a.max(1e-300) + 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn z3ro_null_in_user_direction() {
        let theta = 80f64.to_radians();
        let g = ArrayGeometry::half_wavelength(32).unwrap();
        let w = z3ro_los(&g, theta, 1.0, &Z3roConfig::new(1)).unwrap();
        let pa = PaModel::third_order(c(-0.1, 0.0)).unwrap();
        let at_user = AngularGrid::from_angles(vec![theta]).unwrap();
        let pat = radiation_pattern(&g, &w, &pa, 1.0, &at_user).unwrap();
        assert_eq!(pat.dist3[0], 0.0);
        let grid = AngularGrid::uniform(4096).unwrap();
        let pat = radiation_pattern(&g, &w, &pa, 1.0, &grid).unwrap();
        let k = pat
            .linear
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        // ULA patterns are mirror-symmetric; the peak is at ±θ
        assert!((pat.angles[k].abs() - theta).abs() < 2.0 * 2.0 * PI / 4096.0);
    }

    #[test]
    fn pattern_symmetric_and_nonnegative() {
        let g = ArrayGeometry::new(12, 0.45).unwrap();
        let w = z3ro_los(&g, 1.9, 1.0, &Z3roConfig::new(3)).unwrap();
        // large |a3| makes the cross term strongly negative in places
        let pa = PaModel::third_order(c(-0.6, 0.2)).unwrap();
        let grid = AngularGrid::uniform(1024).unwrap();
        let pat = radiation_pattern(&g, &w, &pa, 1.0, &grid).unwrap();
        assert!(pat.total.iter().all(|&x| x >= 0.0));
        let n = grid.len();
        // angles[k] = −π + step·(k+1), so −angles[k] = angles[n−2−k]
        for k in 0..n - 1 {
            let mirror = n - 2 - k;
            assert!((pat.total[k] - pat.total[mirror]).abs() <= 1e-9 * (1.0 + pat.total[k]));
        }
    }

    #[test]
    fn bussgang_split_conserves_total() {
        let g = ArrayGeometry::half_wavelength(10).unwrap();
        let w = z3ro_los(&g, 1.0, 1.0, &Z3roConfig::new(2)).unwrap();
        let pa = PaModel::third_order(c(-0.2, 0.1)).unwrap();
        let grid = AngularGrid::uniform(256).unwrap();
        let pat = radiation_pattern_with(&g, &w, &pa, 0.8, &grid, Decomposition::Bussgang).unwrap();
        for k in 0..grid.len() {
            let sum = pat.linear[k] + pat.dist3[k];
            assert!((sum - pat.total[k]).abs() <= 1e-10 * (1.0 + pat.total[k]));
        }
    }

    #[test]
    fn closed_form_matches_monte_carlo() {
        let g = ArrayGeometry::half_wavelength(8).unwrap();
        let h = los_ula_channel(&g, 1.2, 1.0).unwrap();
        let w = mrt(&h).unwrap();
        let pa = PaModel::third_order(c(-0.15, 0.05)).unwrap();
        let p = 1.0;
        let grid = AngularGrid::from_angles((0..32).map(|k| -3.1 + 0.19 * k as f64).collect()).unwrap();
        let pat = radiation_pattern(&g, &w, &pa, p, &grid).unwrap();

        let steer: Vec<Vec<Complex64>> = grid
            .angles()
            .iter()
            .map(|&a| g.phase_profile(a).into_iter().map(|phi| Complex64::from_polar(1.0, -phi)).collect())
            .collect();
        let n = 1_000_000;
        let symbols = gaussian_symbols(&mut SeededRng::new(42, 0), p, n).unwrap();
        let mut acc = vec![0.0; grid.len()];
        let mut y = [c(0.0, 0.0); 8];
        for s in &symbols {
            for (ym, wm) in y.iter_mut().zip(w.as_slice()) {
                *ym = pa.amplify(wm * s);
            }
            for (k, st) in steer.iter().enumerate() {
                let f: Complex64 = y.iter().zip(st).map(|(a, b)| a * b).sum();
                acc[k] += f.norm_sqr();
            }
        }
        for (k, a) in acc.iter().enumerate() {
            let mc = a / n as f64;
            assert!((mc / pat.total[k] - 1.0).abs() < 0.01, "angle {k}: {mc} vs {}", pat.total[k]);
        }
    }
}

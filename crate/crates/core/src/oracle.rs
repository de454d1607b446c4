//! Numerical cross-check of the closed-form Z3RO optimum.
//!
//! In the LOS case the precoder design reduces (after `g_m = w_m e^{−jφ_m}`)
//! to the real program
//!
//! ```text
//! maximize (Σ g_m)²   subject to   Σ g_m² = M,   Σ g_m³ = 0
//! ```
//!
//! whose stationary points take only two values, `α` on `M − M_s` entries and
//! `δ < 0` on `M_s` entries. This module solves the program independently by
//! multi-start projected-gradient ascent on the constraint manifold, checks
//! Lagrangian stationarity of arbitrary points, and probes whether the complex
//! version of the program has a better optimum than the real one.

use log::info;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::array::SeededRng;
use crate::error::{Error, Result};

pub const DEFAULT_STARTS: usize = 128;
pub const MIN_STARTS: usize = 32;

/// Feasibility tolerance on `Σg² − M`, relative to `M`.
pub const POWER_TOL: f64 = 1e-8;
/// Feasibility tolerance on `Σg³`, relative to `M^{3/2}`.
pub const CUBIC_TOL: f64 = 1e-8;
/// Stationarity tolerance, relative to `|Σg|`.
pub const STATIONARITY_TOL: f64 = 1e-6;

const MAX_ASCENT_ITERS: usize = 20_000;
const MAX_PROJECTION_ITERS: usize = 60;

/// A feasible point of the real program and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RealProblemSolution {
    pub g: Vec<f64>,
    /// `(Σ g_m)²`.
    pub objective: f64,
    /// `Σ g_m² − M`.
    pub power_residual: f64,
    /// `Σ g_m³`.
    pub cubic_residual: f64,
    /// Fitted `(λ, μ)` of the stationarity system, when fitted.
    pub multipliers: Option<(f64, f64)>,
}

impl RealProblemSolution {
    fn evaluate(g: Vec<f64>) -> Self {
        let m = g.len() as f64;
        let sum: f64 = g.iter().sum();
        let power_residual = g.iter().map(|x| x * x).sum::<f64>() - m;
        let cubic_residual = g.iter().map(|x| x * x * x).sum::<f64>();
        Self {
            g,
            objective: sum * sum,
            power_residual,
            cubic_residual,
            multipliers: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        let m = self.g.len() as f64;
        self.power_residual.abs() <= POWER_TOL * m
            && self.cubic_residual.abs() <= CUBIC_TOL * m.powf(1.5)
    }

    fn with_multipliers(mut self) -> Self {
        if let Ok(check) = verify_critical_point(&self.g) {
            self.multipliers = Some((check.lambda, check.mu));
        }
        self
    }
}

/// Two-level closed-form critical point: `M_s` entries `δ` followed by
/// `M − M_s` entries `α`.
pub fn closed_form_candidate(num_antennas: usize, num_saturated: usize) -> Result<RealProblemSolution> {
    if num_saturated == 0 || 2 * num_saturated >= num_antennas {
        return Err(Error::config(
            "num_saturated",
            format!("need 0 < M_s < M/2, got M_s = {num_saturated} with M = {num_antennas}"),
        ));
    }
    let m = num_antennas as f64;
    let ms = num_saturated as f64;
    let rest = m - ms;
    let alpha = m.sqrt() / (rest + ms.cbrt() * rest.powf(2.0 / 3.0)).sqrt();
    let delta = -alpha * (rest / ms).cbrt();
    let g: Vec<f64> = (0..num_antennas)
        .map(|i| if i < num_saturated { delta } else { alpha })
        .collect();
    let mut sol = RealProblemSolution::evaluate(g);
    // closed form of (Σg)², free of the rounding in the summation
    let sum = rest * alpha + ms * delta;
    sol.objective = sum * sum;
    Ok(sol.with_multipliers())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPointCheck {
    pub is_critical: bool,
    pub lambda: f64,
    pub mu: f64,
    /// `max_m |2Σg − 2λg_m − 3μg_m²|` at the fitted multipliers.
    pub gradient_residual: f64,
}

/// Fits `(λ, μ)` to `2Σg − 2λg_m − 3μg_m² = 0` by least squares and reports
/// whether the worst equation is within `1e−6·|Σg|`.
pub fn verify_critical_point(g: &[f64]) -> Result<CriticalPointCheck> {
    let sol = RealProblemSolution::evaluate(g.to_vec());
    if g.is_empty() || !sol.is_feasible() {
        return Err(Error::Precondition(format!(
            "point is not feasible (power residual {:e}, cubic residual {:e})",
            sol.power_residual, sol.cubic_residual
        )));
    }
    let sum: f64 = g.iter().sum();
    let a = DMatrix::from_fn(g.len(), 2, |i, j| if j == 0 { 2.0 * g[i] } else { 3.0 * g[i] * g[i] });
    let b = DVector::from_element(g.len(), 2.0 * sum);
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Numeric(format!("multiplier fit failed: {e}")))?;
    let residual = (&b - &a * &x).amax();
    Ok(CriticalPointCheck {
        is_critical: residual <= STATIONARITY_TOL * sum.abs(),
        lambda: x[0],
        mu: x[1],
        gradient_residual: residual,
    })
}

/// Smooth equality-constrained maximization problem in `R^n`.
trait ManifoldProblem: Sync {
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> DVector<f64>;
    fn constraints(&self, x: &[f64]) -> DVector<f64>;
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
    /// Per-constraint scale used for the projection stopping rule.
    fn constraint_scale(&self) -> DVector<f64>;
}

struct RealProgram {
    m: usize,
}

impl ManifoldProblem for RealProgram {
    fn objective(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().sum();
        s * s
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let s: f64 = x.iter().sum();
        DVector::from_element(self.m, 2.0 * s)
    }

    fn constraints(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![
            x.iter().map(|v| v * v).sum::<f64>() - self.m as f64,
            x.iter().map(|v| v * v * v).sum::<f64>(),
        ])
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(2, self.m, |r, c| if r == 0 { 2.0 * x[c] } else { 3.0 * x[c] * x[c] })
    }

    fn constraint_scale(&self) -> DVector<f64> {
        let m = self.m as f64;
        DVector::from_vec(vec![m, m.powf(1.5)])
    }
}

/// Complex program on `x = [Re g; Im g]`: maximize `|Σg|²` subject to
/// `Σ|g|² = M` and `Σ g|g|² = 0`.
struct ComplexProgram {
    m: usize,
}

impl ManifoldProblem for ComplexProgram {
    fn objective(&self, x: &[f64]) -> f64 {
        let (re, im) = x.split_at(self.m);
        let a: f64 = re.iter().sum();
        let b: f64 = im.iter().sum();
        a * a + b * b
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let (re, im) = x.split_at(self.m);
        let a: f64 = re.iter().sum();
        let b: f64 = im.iter().sum();
        DVector::from_fn(2 * self.m, |i, _| if i < self.m { 2.0 * a } else { 2.0 * b })
    }

    fn constraints(&self, x: &[f64]) -> DVector<f64> {
        let (re, im) = x.split_at(self.m);
        let mut c = [-(self.m as f64), 0.0, 0.0];
        for (r, i) in re.iter().zip(im) {
            let e = r * r + i * i;
            c[0] += e;
            c[1] += r * e;
            c[2] += i * e;
        }
        DVector::from_column_slice(&c)
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.m;
        let (re, im) = x.split_at(m);
        DMatrix::from_fn(3, 2 * m, |row, col| {
            let k = col % m;
            let (r, i) = (re[k], im[k]);
            let wrt_re = col < m;
            match (row, wrt_re) {
                (0, true) => 2.0 * r,
                (0, false) => 2.0 * i,
                (1, true) => 3.0 * r * r + i * i,
                (1, false) => 2.0 * r * i,
                (2, true) => 2.0 * r * i,
                (_, _) => r * r + 3.0 * i * i,
            }
        })
    }

    fn constraint_scale(&self) -> DVector<f64> {
        let m = self.m as f64;
        DVector::from_vec(vec![m, m.powf(1.5), m.powf(1.5)])
    }
}

/// Newton projection onto `{c(x) = 0}` with minimum-norm steps.
fn project<P: ManifoldProblem>(problem: &P, x: &mut DVector<f64>) -> bool {
    let scale = problem.constraint_scale();
    for _ in 0..MAX_PROJECTION_ITERS {
        let c = problem.constraints(x.as_slice());
        if !c.iter().all(|v| v.is_finite()) {
            return false;
        }
        if c.iter().zip(scale.iter()).all(|(v, s)| v.abs() <= 1e-13 * s) {
            return true;
        }
        let j = problem.jacobian(x.as_slice());
        let Some(y) = (&j * j.transpose()).lu().solve(&c) else {
            return false;
        };
        *x -= j.transpose() * y;
    }
    false
}

/// Gradient projected onto the tangent space of the constraint manifold.
fn tangent_gradient<P: ManifoldProblem>(problem: &P, x: &DVector<f64>) -> Option<DVector<f64>> {
    let g = problem.gradient(x.as_slice());
    let j = problem.jacobian(x.as_slice());
    let y = (&j * j.transpose()).lu().solve(&(&j * &g))?;
    Some(g - j.transpose() * y)
}

/// Armijo projected-gradient ascent from `start`. Returns the final feasible
/// point, or `None` if the start cannot be made feasible.
fn ascend<P: ManifoldProblem>(problem: &P, start: Vec<f64>) -> Option<DVector<f64>> {
    let mut x = DVector::from_vec(start);
    if !project(problem, &mut x) {
        return None;
    }
    let mut f = problem.objective(x.as_slice());
    let mut step = 1e-2;
    for _ in 0..MAX_ASCENT_ITERS {
        let Some(v) = tangent_gradient(problem, &x) else {
            break;
        };
        let vv = v.norm_squared();
        if vv.sqrt() <= 1e-11 * (1.0 + f.abs()) {
            break;
        }
        let mut accepted = false;
        while step > 1e-18 {
            let mut trial = &x + &v * step;
            if project(problem, &mut trial) {
                let ft = problem.objective(trial.as_slice());
                if ft >= f + 1e-4 * step * vv {
                    x = trial;
                    f = ft;
                    step *= 2.0;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some(x)
}

/// Outcome of a multi-start solve of the real program.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartReport {
    /// Best over every start, including the closed-form seed.
    pub best: RealProblemSolution,
    /// Best over random starts only.
    pub best_random: Option<RealProblemSolution>,
    pub random_starts: usize,
    pub feasible_random_starts: usize,
    /// Stationary points found that are not two-level.
    pub off_family_critical_points: usize,
}

fn distinct_levels(g: &[f64]) -> usize {
    let mut v = g.to_vec();
    v.sort_by(f64::total_cmp);
    let scale = v.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
    1 + v.windows(2).filter(|w| w[1] - w[0] > 1e-6 * scale).count()
}

/// Random starting point with `Σg² = M`.
fn random_start(rng: &mut SeededRng, n: usize, m: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let s = (m as f64).sqrt() / norm;
    x.iter_mut().for_each(|v| *v *= s);
    x
}

/// Picks the maximum objective, ties resolved by lowest index.
fn best_by_objective<T, F: Fn(&T) -> f64>(items: Vec<T>, f: F) -> Option<T> {
    let mut best: Option<(f64, T)> = None;
    for item in items {
        let v = f(&item);
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, item));
        }
    }
    best.map(|(_, t)| t)
}

/// Multi-start solve of the real program. Random starts come from
/// `rng.derive(k)`; the closed-form `M_s = 1` point (or `[1, −1]` for `M = 2`)
/// is added as a final seeded start.
pub fn solve_real_problem_detailed(
    num_antennas: usize,
    starts: usize,
    rng: &SeededRng,
) -> Result<MultiStartReport> {
    if num_antennas < 2 {
        return Err(Error::Domain("the program needs M >= 2".into()));
    }
    if starts < MIN_STARTS {
        return Err(Error::config(
            "starts",
            format!("{starts} starts is below the minimum of {MIN_STARTS}"),
        ));
    }
    let problem = RealProgram { m: num_antennas };
    let random: Vec<Option<RealProblemSolution>> = (0..starts)
        .into_par_iter()
        .map(|k| {
            let mut sub = rng.derive(k as u64);
            let x0 = random_start(&mut sub, num_antennas, num_antennas);
            ascend(&problem, x0)
                .map(|x| RealProblemSolution::evaluate(x.as_slice().to_vec()))
                .filter(RealProblemSolution::is_feasible)
        })
        .collect();

    let mut off_family = 0;
    for sol in random.iter().flatten() {
        if let Ok(check) = verify_critical_point(&sol.g) {
            if check.is_critical && distinct_levels(&sol.g) > 2 {
                info!("critical point outside the two-level family: {:?}", sol.g);
                off_family += 1;
            }
        }
    }

    let feasible: Vec<RealProblemSolution> = random.into_iter().flatten().collect();
    let feasible_random_starts = feasible.len();
    let best_random = best_by_objective(feasible, |s| s.objective).map(|s| s.with_multipliers());

    let seed_point = if num_antennas == 2 {
        vec![1.0, -1.0]
    } else {
        closed_form_candidate(num_antennas, 1)?.g
    };
    let seeded = ascend(&problem, seed_point)
        .map(|x| RealProblemSolution::evaluate(x.as_slice().to_vec()))
        .filter(RealProblemSolution::is_feasible);

    let candidates: Vec<RealProblemSolution> = best_random.iter().cloned().chain(seeded).collect();
    let best = best_by_objective(candidates, |s| s.objective)
        .ok_or_else(|| Error::Infeasible(format!("no feasible point reached for M = {num_antennas}")))?
        .with_multipliers();

    Ok(MultiStartReport {
        best,
        best_random,
        random_starts: starts,
        feasible_random_starts,
        off_family_critical_points: off_family,
    })
}

/// Best feasible solution of the real program over `starts` random starts
/// plus the closed-form seed.
pub fn solve_real_problem(num_antennas: usize, starts: usize, rng: &SeededRng) -> Result<RealProblemSolution> {
    Ok(solve_real_problem_detailed(num_antennas, starts, rng)?.best)
}

/// Evidence on whether the complex program's optimum is real up to a phasor.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjectureReport {
    pub num_antennas: usize,
    /// Best `|Σg|²` found over complex `g`.
    pub best_objective: f64,
    /// `max_m |Im g_m|` of the best point after removing its global phase.
    pub max_imag_after_phase_removal: f64,
    pub best: Vec<Complex64>,
    pub feasible_starts: usize,
}

/// `max_m |Im g_m|` after rotating `g` so that `Σg` is real and positive.
/// When `Σg` vanishes the largest entry is rotated onto the real axis instead.
pub fn realness_gap(g: &[Complex64]) -> f64 {
    let sum: Complex64 = g.iter().sum();
    let scale: f64 = g.iter().map(|z| z.norm()).sum();
    let reference = if sum.norm() > 1e-9 * scale.max(f64::MIN_POSITIVE) {
        sum
    } else {
        g.iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(Complex64::new(1.0, 0.0))
    };
    let rot = Complex64::from_polar(1.0, -reference.arg());
    g.iter().map(|z| (z * rot).im.abs()).fold(0.0, f64::max)
}

/// Multi-start solve of the complex program from random complex starts.
pub fn probe_realness_conjecture(
    num_antennas: usize,
    starts: usize,
    rng: &SeededRng,
) -> Result<ConjectureReport> {
    if !(2..=12).contains(&num_antennas) {
        return Err(Error::Domain(format!(
            "conjecture probing is limited to 2 <= M <= 12, got {num_antennas}"
        )));
    }
    if starts == 0 {
        return Err(Error::config("starts", "need at least one start"));
    }
    let m = num_antennas;
    let problem = ComplexProgram { m };
    let runs: Vec<Option<(f64, Vec<Complex64>)>> = (0..starts)
        .into_par_iter()
        .map(|k| {
            let mut sub = rng.derive(k as u64);
            let x0 = random_start(&mut sub, 2 * m, m);
            let x = ascend(&problem, x0)?;
            let c = problem.constraints(x.as_slice());
            let scale = problem.constraint_scale();
            if c.iter().zip(scale.iter()).any(|(v, s)| v.abs() > CUBIC_TOL * s) {
                return None;
            }
            let g: Vec<Complex64> = (0..m).map(|i| Complex64::new(x[i], x[m + i])).collect();
            Some((problem.objective(x.as_slice()), g))
        })
        .collect();
    let feasible: Vec<(f64, Vec<Complex64>)> = runs.into_iter().flatten().collect();
    let feasible_starts = feasible.len();
    let (best_objective, best) = best_by_objective(feasible, |r| r.0)
        .ok_or_else(|| Error::Infeasible(format!("no feasible complex point for M = {m}")))?;
    Ok(ConjectureReport {
        num_antennas: m,
        best_objective,
        max_imag_after_phase_removal: realness_gap(&best),
        best,
        feasible_starts,
    })
}

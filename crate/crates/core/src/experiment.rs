//! Declarative experiment runner behind the `z3ro` binary.
//!
//! A JSON config is parsed into [`ExperimentConfig`], validated into a
//! [`Plan`] before anything is computed, executed into typed rows, and
//! serialized as CSV. Files are written to a temporary sibling and renamed,
//! so a failed run never leaves a partial output behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use serde::Deserialize;

use crate::array::{db_or_sentinel, ArrayGeometry, SeededRng};
use crate::error::{Error, Result};
use crate::metrics::{backoff_sweep, linspace, SweepAmplifier, SweepConfig, SweepRow, DEFAULT_SAMPLES, MIN_SAMPLES};
use crate::oracle::{
    probe_realness_conjecture, solve_real_problem_detailed, closed_form_candidate, verify_critical_point,
    DEFAULT_STARTS,
};
use crate::pa::PaModel;
use crate::precoder::{z3ro_array_factor, PrecoderSpec, SaturatedSelection, Z3roConfig};
use crate::radiation::{
    directivity, directivity_value, radiation_pattern_with, AngularGrid, Decomposition, DEFAULT_GRID_POINTS,
    MIN_DIRECTIVITY_POINTS,
};

/// Sample count used by `--quick`.
pub const QUICK_SAMPLES: usize = 10_000;
/// Relative tolerance on the oracle gap.
pub const ORACLE_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Pattern,
    ArrayGain,
    BackoffSweep,
    OracleVerify,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Pattern => "pattern",
            ExperimentKind::ArrayGain => "array-gain",
            ExperimentKind::BackoffSweep => "backoff-sweep",
            ExperimentKind::OracleVerify => "oracle-verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    fn values(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// One array size, or a list for pattern runs.
    pub num_antennas: OneOrMany,
    #[serde(default = "half")]
    pub spacing_over_wavelength: f64,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrecoderEntry {
    Mrt {},
    Z3ro {
        num_saturated: usize,
        #[serde(default)]
        selection: SaturatedSelection,
    },
}

impl PrecoderEntry {
    fn spec(&self) -> PrecoderSpec {
        match self {
            PrecoderEntry::Mrt {} => PrecoderSpec::Mrt,
            PrecoderEntry::Z3ro {
                num_saturated,
                selection,
            } => PrecoderSpec::Z3ro(Z3roConfig::new(*num_saturated).with_selection(selection.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(default = "one")]
    pub path_loss: f64,
    #[serde(default = "one")]
    pub symbol_power: f64,
    /// `M²·β·p/σ_v²` in dB.
    pub array_snr_db: Option<f64>,
    pub noise_power: Option<f64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            path_loss: 1.0,
            symbol_power: 1.0,
            array_snr_db: None,
            noise_power: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGainConfig {
    pub antennas: Vec<usize>,
    pub saturated: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackoffConfig {
    pub start_db: f64,
    pub stop_db: f64,
    pub count: usize,
    /// Rapp smoothness `S`; `null` sweeps an ideal PA.
    #[serde(default = "default_smoothness")]
    pub smoothness: Option<f64>,
}

fn default_smoothness() -> Option<f64> {
    Some(2.0)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub antennas: Vec<usize>,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_conjecture_starts")]
    pub conjecture_starts: usize,
}

fn default_starts() -> usize {
    DEFAULT_STARTS
}

fn default_conjecture_starts() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub geometry: Option<GeometryConfig>,
    pub user_angle_deg: Option<f64>,
    #[serde(default)]
    pub precoders: Vec<PrecoderEntry>,
    /// PA descriptor such as `ideal` or `poly3:-0.1,0`.
    pub pa: Option<String>,
    #[serde(default)]
    pub budget: BudgetConfig,
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub decomposition: Option<String>,
    pub array_gain: Option<ArrayGainConfig>,
    pub backoff: Option<BackoffConfig>,
    pub oracle: Option<OracleConfig>,
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub quick: bool,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternPlan {
    pub arrays: Vec<ArrayGeometry>,
    pub user_angle: f64,
    pub precoders: Vec<PrecoderSpec>,
    pub pa: PaModel,
    pub symbol_power: f64,
    pub path_loss: f64,
    pub grid: AngularGrid,
    pub decomposition: Decomposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGainPlan {
    pub antennas: Vec<usize>,
    pub saturated: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackoffPlan {
    pub sweep: SweepConfig,
    pub backoffs_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePlan {
    pub antennas: Vec<usize>,
    pub starts: usize,
    pub conjecture_starts: usize,
    pub seed: u64,
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Pattern(PatternPlan),
    ArrayGain(ArrayGainPlan),
    BackoffSweep(BackoffPlan),
    OracleVerify(OraclePlan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedExperiment {
    pub plan: Plan,
    pub output: PathBuf,
}

fn require<T: Clone>(value: &Option<T>, key: &str) -> Result<T> {
    value.clone().ok_or_else(|| Error::config(key, "missing"))
}

fn reject(present: bool, key: &str, kind: ExperimentKind) -> Result<()> {
    if present {
        return Err(Error::config(key, format!("not used by {}", kind.name())));
    }
    Ok(())
}

fn keyed<T>(key: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { key: inner, reason } => Error::config(format!("{key}.{inner}"), reason),
        other => Error::config(key, other.to_string()),
    })
}

fn user_angle(cfg: &ExperimentConfig) -> Result<f64> {
    let deg = require(&cfg.user_angle_deg, "user_angle_deg")?;
    if !(deg > 0.0 && deg < 180.0) {
        return Err(Error::config("user_angle_deg", format!("{deg} is outside (0, 180)")));
    }
    Ok(deg.to_radians())
}

fn geometries(cfg: &ExperimentConfig) -> Result<Vec<ArrayGeometry>> {
    let g = require(&cfg.geometry, "geometry")?;
    let counts = g.num_antennas.values();
    if counts.is_empty() {
        return Err(Error::config("geometry.num_antennas", "empty list"));
    }
    counts
        .into_iter()
        .map(|m| keyed("geometry", ArrayGeometry::new(m, g.spacing_over_wavelength)))
        .collect()
}

fn precoders(cfg: &ExperimentConfig, arrays: &[ArrayGeometry]) -> Result<Vec<PrecoderSpec>> {
    if cfg.precoders.is_empty() {
        return Err(Error::config("precoders", "no precoder selected"));
    }
    let specs: Vec<PrecoderSpec> = cfg.precoders.iter().map(PrecoderEntry::spec).collect();
    for spec in &specs {
        if let PrecoderSpec::Z3ro(z) = spec {
            for a in arrays {
                keyed("precoders", z.validate(a.num_antennas()))?;
            }
        }
    }
    Ok(specs)
}

fn positive(v: f64, key: &str) -> Result<f64> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(key, format!("must be positive, got {v}")));
    }
    Ok(v)
}

impl ExperimentConfig {
    /// Validates every parameter for `kind` and applies `overrides`.
    pub fn resolve(&self, kind: ExperimentKind, overrides: &Overrides) -> Result<ResolvedExperiment> {
        if let Some(declared) = self.experiment {
            if declared != kind {
                return Err(Error::config(
                    "experiment",
                    format!("config is for {}, not {}", declared.name(), kind.name()),
                ));
            }
        }
        let output = overrides
            .output
            .clone()
            .or_else(|| self.output.clone())
            .ok_or_else(|| Error::config("output", "no output path in config or --out"))?;
        let seed = overrides.seed.unwrap_or(self.seed);
        let plan = match kind {
            ExperimentKind::Pattern => Plan::Pattern(self.pattern_plan(kind)?),
            ExperimentKind::ArrayGain => Plan::ArrayGain(self.array_gain_plan(kind)?),
            ExperimentKind::BackoffSweep => Plan::BackoffSweep(self.backoff_plan(kind, seed, overrides)?),
            ExperimentKind::OracleVerify => Plan::OracleVerify(self.oracle_plan(kind, seed)?),
        };
        Ok(ResolvedExperiment { plan, output })
    }

    fn pattern_plan(&self, kind: ExperimentKind) -> Result<PatternPlan> {
        reject(self.array_gain.is_some(), "array_gain", kind)?;
        reject(self.backoff.is_some(), "backoff", kind)?;
        reject(self.oracle.is_some(), "oracle", kind)?;
        let arrays = geometries(self)?;
        let user_angle = user_angle(self)?;
        let precoders = precoders(self, &arrays)?;
        let pa: PaModel = require(&self.pa, "pa")?.parse().map_err(|e: Error| Error::config("pa", e.to_string()))?;
        if pa.cubic_coefficient().is_none() {
            return Err(Error::config("pa", "pattern needs an ideal or poly3 amplifier"));
        }
        let points = self.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
        if points < MIN_DIRECTIVITY_POINTS {
            return Err(Error::config(
                "grid_points",
                format!("{points} is below the minimum of {MIN_DIRECTIVITY_POINTS}"),
            ));
        }
        let decomposition = match self.decomposition.as_deref() {
            None | Some("raw") => Decomposition::Raw,
            Some("bussgang") => Decomposition::Bussgang,
            Some(other) => return Err(Error::config("decomposition", format!("unknown mode `{other}`"))),
        };
        Ok(PatternPlan {
            arrays,
            user_angle,
            precoders,
            pa,
            symbol_power: positive(self.budget.symbol_power, "budget.symbol_power")?,
            path_loss: positive(self.budget.path_loss, "budget.path_loss")?,
            grid: keyed("grid_points", AngularGrid::uniform(points))?,
            decomposition,
        })
    }

    fn array_gain_plan(&self, kind: ExperimentKind) -> Result<ArrayGainPlan> {
        reject(self.backoff.is_some(), "backoff", kind)?;
        reject(self.oracle.is_some(), "oracle", kind)?;
        let ag = require(&self.array_gain, "array_gain")?;
        if ag.antennas.is_empty() {
            return Err(Error::config("array_gain.antennas", "empty list"));
        }
        if ag.saturated.is_empty() {
            return Err(Error::config("array_gain.saturated", "empty list"));
        }
        if let Some(m) = ag.antennas.iter().find(|&&m| m < 2) {
            return Err(Error::config("array_gain.antennas", format!("M = {m} is below 2")));
        }
        if ag.saturated.contains(&0) {
            return Err(Error::config("array_gain.saturated", "M_s must be positive"));
        }
        Ok(ArrayGainPlan {
            antennas: ag.antennas,
            saturated: ag.saturated,
        })
    }

    fn backoff_plan(&self, kind: ExperimentKind, seed: u64, overrides: &Overrides) -> Result<BackoffPlan> {
        reject(self.array_gain.is_some(), "array_gain", kind)?;
        reject(self.oracle.is_some(), "oracle", kind)?;
        if self.pa.is_some() {
            return Err(Error::config(
                "pa",
                "saturation is set by the back-off grid; use backoff.smoothness",
            ));
        }
        let arrays = geometries(self)?;
        if arrays.len() != 1 {
            return Err(Error::config("geometry.num_antennas", "back-off sweep needs a single M"));
        }
        let geometry = arrays[0];
        let user_angle = user_angle(self)?;
        let precoders = precoders(self, &arrays)?;
        let bo = require(&self.backoff, "backoff")?;
        if bo.count == 0 {
            return Err(Error::config("backoff.count", "empty back-off grid"));
        }
        if !(bo.start_db.is_finite() && bo.stop_db.is_finite()) {
            return Err(Error::config("backoff", "non-finite range"));
        }
        let amplifier = match bo.smoothness {
            None => SweepAmplifier::Ideal,
            Some(s) => SweepAmplifier::Rapp {
                smoothness: positive(s, "backoff.smoothness")?,
            },
        };
        let path_loss = positive(self.budget.path_loss, "budget.path_loss")?;
        let symbol_power = positive(self.budget.symbol_power, "budget.symbol_power")?;
        let m = geometry.num_antennas() as f64;
        let array_snr_db = match (self.budget.array_snr_db, self.budget.noise_power) {
            (Some(db), None) if db.is_finite() => db,
            (None, Some(n)) => {
                10.0 * (m * m * path_loss * symbol_power / positive(n, "budget.noise_power")?).log10()
            }
            (Some(_), Some(_)) => {
                return Err(Error::config("budget", "give either array_snr_db or noise_power"));
            }
            _ => return Err(Error::config("budget.array_snr_db", "missing or non-finite")),
        };
        let samples = overrides
            .samples
            .or(overrides.quick.then_some(QUICK_SAMPLES))
            .or(self.samples)
            .unwrap_or(DEFAULT_SAMPLES);
        if samples < MIN_SAMPLES {
            return Err(Error::config("samples", format!("{samples} is below the minimum of {MIN_SAMPLES}")));
        }
        Ok(BackoffPlan {
            sweep: SweepConfig {
                geometry,
                user_angle,
                path_loss,
                symbol_power,
                array_snr_db,
                amplifier,
                precoders,
                samples,
                seed,
            },
            backoffs_db: linspace(bo.start_db, bo.stop_db, bo.count),
        })
    }

    fn oracle_plan(&self, kind: ExperimentKind, seed: u64) -> Result<OraclePlan> {
        reject(self.array_gain.is_some(), "array_gain", kind)?;
        reject(self.backoff.is_some(), "backoff", kind)?;
        let oc = require(&self.oracle, "oracle")?;
        if oc.antennas.is_empty() {
            return Err(Error::config("oracle.antennas", "empty list"));
        }
        if let Some(m) = oc.antennas.iter().find(|m| !(2..=12).contains(*m)) {
            return Err(Error::config("oracle.antennas", format!("M = {m} is outside [2, 12]")));
        }
        if oc.starts < crate::oracle::MIN_STARTS {
            return Err(Error::config(
                "oracle.starts",
                format!("{} is below the minimum of {}", oc.starts, crate::oracle::MIN_STARTS),
            ));
        }
        if oc.conjecture_starts == 0 {
            return Err(Error::config("oracle.conjecture_starts", "need at least one start"));
        }
        Ok(OraclePlan {
            antennas: oc.antennas,
            starts: oc.starts,
            conjecture_starts: oc.conjecture_starts,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternRow {
    pub num_antennas: usize,
    pub precoder: String,
    pub angle_deg: f64,
    pub p_total: f64,
    pub p_linear: f64,
    pub p_dist3: f64,
    pub d_total_db: f64,
    pub d_linear_db: f64,
    pub d_dist3_db: f64,
}

/// Patterns for every (array, precoder) pair. Each block holds the uniform
/// grid plus one row evaluated exactly at the user angle, in angle order.
pub fn run_pattern(plan: &PatternPlan) -> Result<Vec<PatternRow>> {
    let mut rows = Vec::new();
    let exact_grid = AngularGrid::from_angles(vec![plan.user_angle])?;
    for geometry in &plan.arrays {
        for spec in &plan.precoders {
            let w = spec.synthesize_los(geometry, plan.user_angle, plan.path_loss)?;
            let pattern = radiation_pattern_with(geometry, &w, &plan.pa, plan.symbol_power, &plan.grid, plan.decomposition)?;
            let pattern = directivity(&pattern, &plan.grid)?;
            let integ = pattern.integrated.as_ref().ok_or_else(|| Error::Numeric("missing integrals".into()))?;
            let at_user = radiation_pattern_with(geometry, &w, &plan.pa, plan.symbol_power, &exact_grid, plan.decomposition)?;
            let label = spec.label();
            let make = |angle: f64, total: f64, linear: f64, dist3: f64| -> Result<PatternRow> {
                Ok(PatternRow {
                    num_antennas: geometry.num_antennas(),
                    precoder: label.clone(),
                    angle_deg: angle.to_degrees(),
                    p_total: total,
                    p_linear: linear,
                    p_dist3: dist3,
                    d_total_db: db_or_sentinel(directivity_value(total, integ.total_power))?,
                    d_linear_db: db_or_sentinel(directivity_value(linear, integ.linear_power))?,
                    d_dist3_db: db_or_sentinel(directivity_value(dist3, integ.dist3_power))?,
                })
            };
            let mut inserted = false;
            for (i, &angle) in pattern.angles.iter().enumerate() {
                if !inserted && angle >= plan.user_angle {
                    inserted = true;
                    if angle != plan.user_angle {
                        rows.push(make(plan.user_angle, at_user.total[0], at_user.linear[0], at_user.dist3[0])?);
                    }
                }
                rows.push(make(angle, pattern.total[i], pattern.linear[i], pattern.dist3[i])?);
            }
        }
    }
    Ok(rows)
}

pub fn pattern_csv(rows: &[PatternRow]) -> String {
    let mut out = String::from("M,precoder,angle_deg,P_total,P_linear,P_dist3,D_total_dB,D_linear_dB,D_dist3_dB\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.num_antennas, r.precoder, r.angle_deg, r.p_total, r.p_linear, r.p_dist3, r.d_total_db, r.d_linear_db, r.d_dist3_db
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGainRow {
    pub num_antennas: usize,
    pub num_saturated: usize,
    pub mrt_gain_db: f64,
    pub z3ro_gain_db: f64,
    pub penalty_db: f64,
}

/// Closed-form array gains normalized by `M·βp/σ_v²`: MRT gives `M` and
/// Z3RO gives its array factor divided by `M`.
pub fn run_array_gain(plan: &ArrayGainPlan) -> Result<Vec<ArrayGainRow>> {
    let mut rows = Vec::new();
    for &m in &plan.antennas {
        for &ms in &plan.saturated {
            if 2 * ms > m {
                warn!("skipping M_s = {ms} for M = {m}: more than half the array saturated");
                continue;
            }
            let mrt = m as f64;
            let z3ro = z3ro_array_factor(m, ms)? / m as f64;
            let mrt_gain_db = db_or_sentinel(mrt)?;
            let z3ro_gain_db = db_or_sentinel(z3ro)?;
            rows.push(ArrayGainRow {
                num_antennas: m,
                num_saturated: ms,
                mrt_gain_db,
                z3ro_gain_db,
                penalty_db: mrt_gain_db - z3ro_gain_db,
            });
        }
    }
    Ok(rows)
}

pub fn array_gain_csv(rows: &[ArrayGainRow]) -> String {
    let mut out = String::from("M,M_s,mrt_gain_db,z3ro_gain_db,penalty_db\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.num_antennas, r.num_saturated, r.mrt_gain_db, r.z3ro_gain_db, r.penalty_db
        );
    }
    out
}

pub fn run_backoff_sweep(plan: &BackoffPlan) -> Result<Vec<SweepRow>> {
    backoff_sweep(&plan.sweep, &plan.backoffs_db)
}

pub fn backoff_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("backoff_db,precoder,snr_db,sdr_db,sndr_db,g_re,g_im,dist_power,n,stderr_db\n");
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.backoff_db,
            r.precoder,
            m.snr_db,
            m.sdr_db,
            m.sndr_db,
            m.bussgang_gain.re,
            m.bussgang_gain.im,
            m.distortion_power,
            m.sample_count,
            m.standard_error_db
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub num_antennas: usize,
    pub closed_form_objective: f64,
    /// Best objective over every start, including the closed-form seed.
    pub oracle_objective: f64,
    /// Best objective over random starts only.
    pub random_start_objective: f64,
    /// `(random − closed)/max(|closed|, 1)`.
    pub relative_gap: f64,
    pub candidates_checked: usize,
    pub max_stationarity_residual: f64,
    pub all_critical: bool,
    pub conjecture_objective: f64,
    pub conjecture_max_imag: f64,
}

impl OracleRow {
    pub fn passes(&self) -> bool {
        self.relative_gap.abs() <= ORACLE_GAP_TOL && self.all_critical
    }
}

/// Closed-form `M_s = 1` objective used as the reference in oracle runs.
pub fn closed_form_objective(num_antennas: usize) -> Result<f64> {
    z3ro_array_factor(num_antennas, 1)
}

pub fn run_oracle_verify(plan: &OraclePlan) -> Result<Vec<OracleRow>> {
    run_oracle_verify_with(plan, &closed_form_objective)
}

/// Same as [`run_oracle_verify`] with the reference objective supplied by
/// `candidate`, so tests can inject a wrong value.
pub fn run_oracle_verify_with(plan: &OraclePlan, candidate: &dyn Fn(usize) -> Result<f64>) -> Result<Vec<OracleRow>> {
    let mut rows = Vec::with_capacity(plan.antennas.len());
    for &m in &plan.antennas {
        let rng = SeededRng::new(plan.seed, m as u64);
        let report = solve_real_problem_detailed(m, plan.starts, &rng)?;
        let closed = candidate(m)?;
        let random = report
            .best_random
            .as_ref()
            .map(|s| s.objective)
            .ok_or_else(|| Error::Infeasible(format!("no random start reached a feasible point for M = {m}")))?;

        let mut checked = 0;
        let mut worst = 0.0f64;
        let mut all_critical = true;
        let points: Vec<Vec<f64>> = if m == 2 {
            vec![vec![1.0, -1.0]]
        } else {
            (1..m.div_ceil(2))
                .map(|ms| closed_form_candidate(m, ms).map(|c| c.g))
                .collect::<Result<_>>()?
        };
        for g in points {
            let check = verify_critical_point(&g)?;
            checked += 1;
            worst = worst.max(check.gradient_residual);
            all_critical &= check.is_critical;
        }

        let conj = probe_realness_conjecture(m, plan.conjecture_starts, &SeededRng::new(plan.seed, 1000 + m as u64))?;
        rows.push(OracleRow {
            num_antennas: m,
            closed_form_objective: closed,
            oracle_objective: report.best.objective,
            random_start_objective: random,
            relative_gap: (random - closed) / closed.abs().max(1.0),
            candidates_checked: checked,
            max_stationarity_residual: worst,
            all_critical,
            conjecture_objective: conj.best_objective,
            conjecture_max_imag: conj.max_imag_after_phase_removal,
        });
    }
    Ok(rows)
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from(
        "M,closed_form_objective,oracle_objective,random_start_objective,relative_gap,candidates_checked,max_stationarity_residual,all_critical,conjecture_objective,conjecture_max_imag\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.num_antennas,
            r.closed_form_objective,
            r.oracle_objective,
            r.random_start_objective,
            r.relative_gap,
            r.candidates_checked,
            r.max_stationarity_residual,
            r.all_critical,
            r.conjecture_objective,
            r.conjecture_max_imag
        );
    }
    out
}

/// CSV text of a finished run and whether its verification (if any) passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: String,
    pub verified: bool,
}

pub fn execute(plan: &Plan) -> Result<Outcome> {
    Ok(match plan {
        Plan::Pattern(p) => Outcome {
            csv: pattern_csv(&run_pattern(p)?),
            verified: true,
        },
        Plan::ArrayGain(p) => Outcome {
            csv: array_gain_csv(&run_array_gain(p)?),
            verified: true,
        },
        Plan::BackoffSweep(p) => Outcome {
            csv: backoff_csv(&run_backoff_sweep(p)?),
            verified: true,
        },
        Plan::OracleVerify(p) => {
            let rows = run_oracle_verify(p)?;
            Outcome {
                verified: rows.iter().all(OracleRow::passes),
                csv: oracle_csv(&rows),
            }
        }
    })
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::config("output", format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::config("output", format!("{}: {e}", path.display())));
    }
    Ok(())
}

/// Process exit code for an error: 2 configuration, 3 infeasibility,
/// 4 numeric failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) => 3,
        Error::Numeric(_) | Error::Precision(_) | Error::DegenerateChannel(_) => 4,
        _ => 2,
    }
}

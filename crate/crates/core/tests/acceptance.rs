//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use num_complex::Complex64;

use z3ro::array::{db_from_linear, ArrayGeometry, LinkBudget, PrecoderWeights, SeededRng};
use z3ro::channel::{iid_rayleigh_channel, los_ula_channel, ChannelRealization};
use z3ro::experiment::{
    backoff_csv, execute, run_backoff_sweep, ExperimentConfig, ExperimentKind, Overrides, Plan,
};
use z3ro::metrics::{bussgang_monte_carlo, third_order_analytic_metrics, SweepRow};
use z3ro::oracle::{solve_real_problem_detailed, closed_form_candidate, verify_critical_point};
use z3ro::pa::PaModel;
use z3ro::precoder::{
    array_response, mrt, residual_scale, snr_mrt, z3ro_array_factor, z3ro_general, z3ro_los, z3ro_snr,
    zero_distortion_residual, SaturatedSelection, Z3roConfig,
};
use z3ro::radiation::{radiation_pattern, total_distortion_power, AngularGrid};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn lib<T>(r: z3ro::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn preset(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name);
    ExperimentConfig::from_path(&path).expect("preset parses")
}

fn random_selection(rng: &mut SeededRng, m: usize, ms: usize) -> SaturatedSelection {
    match (rng.uniform() * 4.0) as usize {
        0 => SaturatedSelection::FirstIndices,
        1 => SaturatedSelection::StrongestGains,
        2 => SaturatedSelection::WeakestGains,
        _ => {
            let mut idx: Vec<usize> = (0..m).collect();
            for i in 0..ms {
                let j = i + (rng.uniform() * (m - i) as f64) as usize;
                idx.swap(i, j.min(m - 1));
            }
            idx.truncate(ms);
            SaturatedSelection::Explicit(idx)
        }
    }
}

fn criterion_1() -> Check {
    let mut rng = SeededRng::new(1, 1);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let m = 3 + (rng.uniform() * 254.0) as usize;
        let ms = 1 + (rng.uniform() * (m / 2) as f64) as usize;
        let ms = ms.min(m / 2);
        let a3 = Complex64::new(rng.normal(), rng.normal());
        let (h, w) = if case % 2 == 0 {
            let geom = lib(ArrayGeometry::new(m, 0.1 + rng.uniform()))?;
            let theta = 0.01 + rng.uniform() * (PI - 0.02);
            let beta = 0.1 + rng.uniform();
            let h = lib(los_ula_channel(&geom, theta, beta))?;
            let w = lib(z3ro_los(&geom, theta, beta, &Z3roConfig::new(ms)))?;
            (h, w)
        } else {
            let h = lib(iid_rayleigh_channel(m, 0.1 + rng.uniform(), &mut rng))?;
            let cfg = Z3roConfig::new(ms).with_selection(random_selection(&mut rng, m, ms));
            let w = lib(z3ro_general(&h, &cfg))?;
            (h, w)
        };
        let res = (a3 * lib(zero_distortion_residual(&h, &w))?).norm();
        let scale = a3.norm() * lib(residual_scale(&h, &w))?;
        let ratio = res / scale;
        worst = worst.max(ratio);
        ensure(ratio <= 1e-10, format!("case {case} M={m} Ms={ms}: ratio {ratio:e}"))?;
    }
    Ok(format!("1000 cases, worst |residual|/scale = {worst:.2e}"))
}

fn criterion_2() -> Check {
    let budget = lib(LinkBudget::new(1.0, 1.0, 1.0))?;
    let geom = lib(ArrayGeometry::half_wavelength(64))?;
    let h = lib(los_ula_channel(&geom, 1.2, 1.0))?;
    let ratio_db = lib(db_from_linear(lib(z3ro_snr(64, 1, &budget))? / snr_mrt(&h, &budget)))?;
    ensure((ratio_db + 1.61).abs() <= 0.05, format!("M=64 ratio {ratio_db:.4} dB"))?;
    for ms in [1usize, 2, 4, 8] {
        let mut prev: Option<f64> = None;
        for m in (2 * ms).max(4)..=1024 {
            let penalty = (m * m) as f64 / lib(z3ro_array_factor(m, ms))?;
            ensure(prev.is_none_or(|q| penalty < q), format!("penalty not decreasing at M={m}, Ms={ms}"))?;
            prev = Some(penalty);
        }
    }
    let big = 1e9f64;
    let limit = lib(z3ro_array_factor(1_000_000_000, 1))? / (big * big);
    ensure(limit > 0.995, format!("ratio at M=1e9 is {limit}"))?;
    Ok(format!("ratio(64,1) = {ratio_db:.4} dB, ratio(1e9,1) = {limit:.6}"))
}

fn criterion_3() -> Check {
    let geom = lib(ArrayGeometry::half_wavelength(32))?;
    let theta = 80f64.to_radians();
    let h = lib(los_ula_channel(&geom, theta, 1.0))?;
    let w = lib(mrt(&h))?;
    let grid = lib(AngularGrid::uniform(4096))?;
    let pa = lib(PaModel::third_order(Complex64::new(-0.1, 0.03)))?;
    let pat = lib(radiation_pattern(&geom, &w, &pa, 1.0, &grid))?;
    let lmax = pat.linear.iter().cloned().fold(0.0, f64::max);
    let dmax = pat.dist3.iter().cloned().fold(0.0, f64::max);
    let worst = pat
        .linear
        .iter()
        .zip(&pat.dist3)
        .map(|(l, d)| (l / lmax - d / dmax).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    Ok(format!("max |D_lin − D_dist3| after peak normalization = {worst:.2e}"))
}

fn criterion_4() -> Check {
    let theta = 80f64.to_radians();
    let grid = lib(AngularGrid::from_angles(vec![theta]))?;
    let pa = lib(PaModel::third_order(Complex64::new(-0.1, 0.03)))?;
    let mut lin = Vec::new();
    for m in [2usize, 8, 32] {
        let geom = lib(ArrayGeometry::half_wavelength(m))?;
        let w = lib(z3ro_los(&geom, theta, 1.0, &Z3roConfig::new(1)))?;
        let pat = lib(radiation_pattern(&geom, &w, &pa, 1.0, &grid))?;
        ensure(pat.dist3[0] == 0.0, format!("M={m}: dist3 at user = {:e}", pat.dist3[0]))?;
        lin.push(pat.linear[0]);
    }
    ensure(lin[0] == 0.0, format!("M=2 linear gain {:e}", lin[0]))?;
    Ok(format!("dist3 exactly 0 at θ for M=2,8,32; linear at M=2 = {}", lin[0]))
}

fn criterion_5() -> Check {
    let geom = lib(ArrayGeometry::half_wavelength(32))?;
    let theta = 80f64.to_radians();
    let grid = lib(AngularGrid::uniform(4096))?;
    let pa = lib(PaModel::third_order(Complex64::new(-0.1, 0.0)))?;
    let power = |w: &PrecoderWeights| -> Result<f64, String> {
        let pat = lib(radiation_pattern(&geom, w, &pa, 1.0, &grid))?;
        lib(total_distortion_power(&pat, &grid))
    };
    let h = lib(los_ula_channel(&geom, theta, 1.0))?;
    let mrt_power = power(&lib(mrt(&h))?)?;
    let mut z = Vec::new();
    for ms in [1usize, 2, 4, 8] {
        z.push(power(&lib(z3ro_los(&geom, theta, 1.0, &Z3roConfig::new(ms)))?)?);
    }
    ensure(z[0] > mrt_power, format!("Z3RO Ms=1 {} vs MRT {}", z[0], mrt_power))?;
    ensure(z.windows(2).all(|w| w[1] < w[0]), format!("not decreasing: {z:?}"))?;
    Ok(format!(
        "MRT {mrt_power:.2}, Z3RO Ms=1,2,4,8: {:.2}, {:.2}, {:.2}, {:.2}",
        z[0], z[1], z[2], z[3]
    ))
}

fn criterion_6() -> Check {
    let mut worst_gap = 0.0f64;
    let mut worst_res = 0.0f64;
    for m in 3..=8usize {
        let rep = lib(solve_real_problem_detailed(m, 128, &SeededRng::new(6, m as u64)))?;
        let closed = lib(closed_form_candidate(m, 1))?.objective;
        let found = rep.best_random.as_ref().ok_or("no feasible random start")?.objective;
        let gap = ((found - closed) / closed).abs();
        worst_gap = worst_gap.max(gap);
        ensure(gap <= 1e-6, format!("M={m}: oracle {found} vs closed form {closed}"))?;
        for ms in 1..m.div_ceil(2) {
            let c = lib(closed_form_candidate(m, ms))?;
            let check = lib(verify_critical_point(&c.g))?;
            worst_res = worst_res.max(check.gradient_residual);
            ensure(
                check.is_critical && check.gradient_residual <= 1e-6,
                format!("M={m} Ms={ms}: residual {:e}", check.gradient_residual),
            )?;
        }
    }
    Ok(format!("worst relative gap {worst_gap:.2e}, worst stationarity residual {worst_res:.2e}"))
}

fn fig4_rows() -> Result<Vec<SweepRow>, String> {
    let resolved = lib(preset("fig4.json").resolve(ExperimentKind::BackoffSweep, &Overrides::default()))?;
    let Plan::BackoffSweep(plan) = resolved.plan else {
        return Err("fig4 preset is not a back-off sweep".into());
    };
    lib(run_backoff_sweep(&plan))
}

fn criterion_7(rows: &[SweepRow]) -> Check {
    let pick = |b: f64, name: &str| -> Result<&SweepRow, String> {
        rows.iter()
            .filter(|r| r.precoder == name)
            .min_by(|x, y| (x.backoff_db - b).abs().total_cmp(&(y.backoff_db - b).abs()))
            .ok_or_else(|| format!("no {name} row"))
    };
    let within = |got: f64, want: f64, what: &str| ensure((got - want).abs() <= 0.3, format!("{what}: {got:.3} vs {want}"));
    let m = &pick(-10.0, "mrt")?.report;
    let z = &pick(-10.0, "z3ro_ms4")?.report;
    within(m.sdr_db, 34.65, "MRT SDR @-10")?;
    within(m.snr_db, 26.04, "MRT SNR @-10")?;
    within(m.sndr_db, 25.48, "MRT SNDR @-10")?;
    within(z.sdr_db, 38.89, "Z3RO SDR @-10")?;
    within(z.snr_db, 22.97, "Z3RO SNR @-10")?;
    within(z.sndr_db, 22.86, "Z3RO SNDR @-10")?;
    let m2 = pick(2.0, "mrt")?.report.sndr_db;
    let z2 = pick(2.0, "z3ro_ms4")?.report.sndr_db;
    within(m2, 10.58, "MRT SNDR @+2")?;
    within(z2, 11.85, "Z3RO SNDR @+2")?;

    let diff: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.precoder == "mrt")
        .map(|r| Ok((r.backoff_db, pick(r.backoff_db, "z3ro_ms4")?.report.sndr_db - r.report.sndr_db)))
        .collect::<Result<_, String>>()?;
    let crossings: Vec<f64> = diff
        .windows(2)
        .filter(|w| w[0].1.signum() != w[1].1.signum())
        .map(|w| w[0].0 + (w[1].0 - w[0].0) * w[0].1 / (w[0].1 - w[1].1))
        .collect();
    ensure(crossings.len() == 1, format!("expected one SNDR crossover, found {crossings:?}"))?;
    let cross = crossings[0];
    ensure((-7.5..=-6.2).contains(&cross), format!("crossover at {cross:.3} dB"))?;
    let at = pick(-2.4, "mrt")?;
    let gain = pick(at.backoff_db, "z3ro_ms4")?.report.sndr_db - at.report.sndr_db;
    ensure(gain >= 1.8, format!("gain {gain:.3} dB at {:.3} dB back-off", at.backoff_db))?;
    Ok(format!(
        "@-10 MRT {:.2}/{:.2}/{:.2}, Z3RO {:.2}/{:.2}/{:.2}; @+2 SNDR {m2:.2}/{z2:.2}; crossover {cross:.2} dB; gain {gain:.2} dB @ {:.2} dB",
        m.sdr_db, m.snr_db, m.sndr_db, z.sdr_db, z.snr_db, z.sndr_db, at.backoff_db
    ))
}

fn criterion_8() -> Check {
    let mut rng = SeededRng::new(8, 8);
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let m = 2 + (rng.uniform() * 7.0) as usize;
        let h = if case % 2 == 0 {
            let geom = lib(ArrayGeometry::half_wavelength(m))?;
            lib(los_ula_channel(&geom, 0.2 + 2.7 * rng.uniform(), 0.5 + rng.uniform()))?
        } else {
            lib(iid_rayleigh_channel(m, 0.5 + rng.uniform(), &mut rng))?
        };
        let w = if case % 4 < 2 {
            lib(mrt(&h))?
        } else {
            let raw: Vec<Complex64> = (0..m).map(|_| rng.complex_normal(1.0)).collect();
            let s = (m as f64 / raw.iter().map(|x| x.norm_sqr()).sum::<f64>()).sqrt();
            lib(PrecoderWeights::new(raw.into_iter().map(|x| x * s).collect()))?
        };
        let a3 = Complex64::from_polar(0.02 + 0.08 * rng.uniform(), PI * (2.0 * rng.uniform() - 1.0));
        let p = 0.5 + rng.uniform();
        let budget = lib(LinkBudget::new(p, 0.1 + rng.uniform(), h.path_loss()))?;
        let pa = lib(PaModel::third_order(a3))?;
        let analytic = lib(third_order_analytic_metrics(&h, &w, a3, &budget))?;
        ensure(analytic.sdr_db.is_finite(), format!("case {case}: infinite SDR"))?;
        let mc = lib(bussgang_monte_carlo(&h, &w, &pa, &budget, 1_000_000, &SeededRng::new(80, case)))?;
        let d_snr = (mc.snr_db - analytic.snr_db).abs();
        let d_sdr = (mc.sdr_db - analytic.sdr_db).abs();
        worst = worst.max(d_snr).max(d_sdr);
        ensure(
            d_snr <= 0.1 && d_sdr <= 0.1,
            format!("case {case}: SNR {:.3}/{:.3}, SDR {:.3}/{:.3}", mc.snr_db, analytic.snr_db, mc.sdr_db, analytic.sdr_db),
        )?;
    }
    Ok(format!("20 configs, worst deviation {worst:.4} dB"))
}

fn criterion_9() -> Check {
    let (m, ms) = (4096usize, 256usize);
    let budget = lib(LinkBudget::new(1.0, 1.0, 1.0))?;
    let mut rng = SeededRng::new(9, 9);
    let mut acc = 0.0;
    for _ in 0..100 {
        let h: ChannelRealization = lib(iid_rayleigh_channel(m, 1.0, &mut rng))?;
        let w = lib(z3ro_general(&h, &Z3roConfig::new(ms)))?;
        acc += lib(array_response(&h, &w))?.norm_sqr() * budget.symbol_power / budget.noise_power;
    }
    let realized = acc / 100.0;
    let closed = lib(z3ro_snr(m, ms, &budget))?;
    let diff = lib(db_from_linear(realized / closed))?;
    ensure(diff.abs() <= 0.2, format!("realized vs closed form differ by {diff:.3} dB"))?;
    Ok(format!("realized/closed form = {diff:+.4} dB"))
}

fn run_in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn criterion_10(fig4_default: &[SweepRow]) -> Check {
    let presets = [
        ("fig1.json", ExperimentKind::Pattern),
        ("fig2.json", ExperimentKind::ArrayGain),
        ("fig3.json", ExperimentKind::Pattern),
        ("fig4.json", ExperimentKind::BackoffSweep),
        ("oracle.json", ExperimentKind::OracleVerify),
    ];
    for (name, kind) in presets {
        let plan = lib(preset(name).resolve(kind, &Overrides::default()))?.plan;
        let one = run_in_pool(1, || execute(&plan)).map_err(|e| e.to_string())?;
        let many = run_in_pool(3, || execute(&plan)).map_err(|e| e.to_string())?;
        ensure(one.csv == many.csv, format!("{name}: output differs between 1 and 3 threads"))?;
        if name == "fig4.json" {
            ensure(backoff_csv(fig4_default) == one.csv, "fig4.json: output differs from the default-pool run")?;
        }
    }
    Ok("all presets byte-identical across re-runs with 1 and 3 worker threads".into())
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, limit: Duration, run: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let result = result.and_then(|msg| {
            if took > limit {
                Err(format!("{msg}; took {took:.1?}, limit {limit:?}"))
            } else {
                Ok(msg)
            }
        });
        match result {
            Ok(msg) => println!("PASS criterion {n:>2} ({took:.1?}): {msg}"),
            Err(msg) => {
                failures += 1;
                println!("FAIL criterion {n:>2} ({took:.1?}): {msg}");
            }
        }
    };
    let secs = Duration::from_secs;
    report(1, secs(5), &mut criterion_1);
    report(2, secs(1), &mut criterion_2);
    report(3, secs(1), &mut criterion_3);
    report(4, secs(1), &mut criterion_4);
    report(5, secs(2), &mut criterion_5);
    report(6, secs(60), &mut criterion_6);
    let mut fig4 = Vec::new();
    report(7, secs(300), &mut || {
        fig4 = fig4_rows()?;
        criterion_7(&fig4)
    });
    report(8, secs(120), &mut criterion_8);
    report(9, secs(30), &mut criterion_9);
    report(10, Duration::MAX, &mut || {
        if fig4.is_empty() {
            return Err("criterion 7 produced no rows to compare".into());
        }
        criterion_10(&fig4)
    });
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}

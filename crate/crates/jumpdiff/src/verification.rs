//! Verification suites: fast unit checks, module invariants, and the full
//! acceptance table. Every check returns a [`CheckReport`]; the CLI and the
//! integration tests render one pass/fail line per check.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;

use crate::estimators::{
    bootstrap_mlmc_estimate, build_schedule, fit_rate, mc_estimate, mlmc_estimate,
    pilot_mesh_stats, probe_correction, realize_draw, rmse_study, run_estimator, Discretization,
    EstimatorKind, EstimatorOutput, LevelSchedule, LevelSpec, PartitionDraw, ProblemConfig,
    RefSpace, StudyRow,
};
use crate::fem1d::{adaptive_mesh_1d, assemble_solve_1d, h1_error_vs_oracle, oracle_solve_1d};
use crate::harness::{parse_discretization, parse_estimator, ExperimentConfig, Preset, CSV_HEADER};
use crate::jumps::{sample_partition_1d, GigDist, GigParams, GigTable};
use crate::rng::{Purpose, RngStream, StreamLabel};
use crate::spectra::{draw_noise, sample_gaussian_field, SpectrumModel};
use crate::{Error, Result};

/// Master seed for every verification run; pinned so reports are
/// reproducible.
const VERIFY_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Unit,
    Invariants,
    Acceptance,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Suite::Unit),
            "invariants" => Ok(Suite::Invariants),
            "acceptance" => Ok(Suite::Acceptance),
            other => Err(Error::Config(format!("unknown suite '{other}'"))),
        }
    }
}

/// Outcome of one verification check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckReport {
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("{status}  {:<32}  {:>8.1}s  {}", self.name, self.seconds, self.detail)
    }
}

/// Runs a named check, converting errors into failed reports.
fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckReport {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok((passed, detail)) => (passed, detail),
        Err(e) => (false, format!("error: {e}")),
    };
    CheckReport { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn run_suite(suite: Suite) -> Result<Vec<CheckReport>> {
    Ok(match suite {
        Suite::Unit => unit_suite(),
        Suite::Invariants => invariants_suite(),
        Suite::Acceptance => acceptance_report(),
    })
}

pub fn render_report(reports: &[CheckReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.line());
        out.push('\n');
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        out.push_str(&format!("all {} checks passed\n", reports.len()));
    } else {
        out.push_str(&format!("{failed} of {} checks FAILED\n", reports.len()));
    }
    out
}

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

fn preset_problem(preset: Preset) -> Result<ProblemConfig> {
    let dim = if preset == Preset::Hetero2d { 2 } else { 1 };
    ExperimentConfig::preset_defaults(preset, dim).problem()
}

/// Manual dyadic schedule over `h_l = 2^{-l-1}` with explicit sample counts.
fn dyadic_schedule(config: &ProblemConfig, samples: &[u64], cutoff: usize) -> LevelSchedule {
    let levels = samples
        .iter()
        .enumerate()
        .map(|(l, &m)| {
            let h = 0.5f64.powi(l as i32 + 1);
            LevelSpec {
                level: l as u32,
                h_bar: h,
                mean_sq_h: h * h,
                cutoff,
                eps: 0.0,
                samples: m,
            }
        })
        .collect();
    LevelSchedule { levels, kappa: config.kappa, nu: config.nu }
}

/// Spatial average of a reference-grid field; the scalar functional used for
/// cross-estimator statistical comparisons.
fn field_average(field: &[f64]) -> f64 {
    field.iter().sum::<f64>() / field.len() as f64
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn study_slope(rows: &[StudyRow]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.inv_h, r.rmse)).collect();
    fit_rate(&pts)
}

// ---------------------------------------------------------------------------
// Unit suite (< 60 s)
// ---------------------------------------------------------------------------

fn unit_suite() -> Vec<CheckReport> {
    vec![
        check("schedule-example", check_schedule_example),
        check("fit-rate-regressions", check_fit_rate),
        check("name-round-trips", check_name_round_trips),
        check("gig-table-certificate", check_gig_table_certificate),
        check("csv-contract", check_csv_contract),
    ]
}

fn documented_schedule() -> Result<LevelSchedule> {
    let config = preset_problem(Preset::BmUniform1d)?;
    let mut plain = config.clone();
    plain.use_gaussian = false;
    let msq: Vec<f64> = (0..4).map(|l| 0.25f64.powi(l + 1)).collect();
    build_schedule(&plain, &msq, 1.0, 0.01)
}

fn check_schedule_example() -> Result<(bool, String)> {
    let schedule = documented_schedule()?;
    let m: Vec<u64> = schedule.levels.iter().map(|s| s.samples).collect();
    let clamped: Vec<u64> = schedule.for_bootstrap().levels.iter().map(|s| s.samples).collect();
    let ok = m == [256, 64, 65, 37] && clamped == [256, 64, 64, 37];
    Ok((ok, format!("M={m:?}, bootstrap M={clamped:?}")))
}

fn check_fit_rate() -> Result<(bool, String)> {
    let rows: Vec<(f64, f64)> = (1..=5).map(|l| ((1 << l) as f64, 3.0 / (1 << l) as f64)).collect();
    let one = fit_rate(&rows)?;
    let rows75: Vec<(f64, f64)> =
        (1..=5).map(|l| ((1 << l) as f64, 0.2 * ((1 << l) as f64).powf(-0.75))).collect();
    let low = fit_rate(&rows75)?;
    let ok = (one - 1.0).abs() < 1e-12 && (low - 0.75).abs() < 1e-12;
    Ok((ok, format!("slopes {one:.3} / {low:.3} for exact 1.0 / 0.75 power laws")))
}

fn check_name_round_trips() -> Result<(bool, String)> {
    for p in ["bm-uniform-1d", "se-gig-1d", "hetero-2d", "custom"] {
        if Preset::parse(p)?.as_str() != p {
            return Ok((false, format!("preset '{p}' does not round-trip")));
        }
    }
    for e in ["mc", "mlmc", "mlmc-bootstrap"] {
        if parse_estimator(e)?.as_str() != e {
            return Ok((false, format!("estimator '{e}' does not round-trip")));
        }
    }
    for d in ["adaptive", "uniform"] {
        if parse_discretization(d)?.as_str() != d {
            return Ok((false, format!("discretization '{d}' does not round-trip")));
        }
    }
    let bad = Preset::parse("no-such").is_err()
        && parse_estimator("no-such").is_err()
        && parse_discretization("no-such").is_err();
    Ok((bad, "presets, estimators, and discretizations round-trip".into()))
}

fn check_gig_table_certificate() -> Result<(bool, String)> {
    let dist = Arc::new(GigDist::new(GigParams::new(0.25, 9.0, -1.0)?));
    let eps = 1e-3;
    let table = GigTable::new(Arc::clone(&dist), eps)?;
    let mut rng = RngStream::from_label(StreamLabel::new(VERIFY_SEED, 0, None, 0, Purpose::Generic));
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let (exact, approx) = table.sample_coupled(rng.gen::<f64>());
        worst = worst.max((exact - approx).abs());
    }
    let ok = worst <= table.delta() + 1e-12;
    Ok((ok, format!("max |coupled deviation| {worst:.2e} <= delta {:.2e}", table.delta())))
}

fn check_csv_contract() -> Result<(bool, String)> {
    let expected = "preset,estimator,discretization,L,inv_h,rmse,wall_time_s,M_levels,N_levels,eps_levels,slope_so_far";
    if CSV_HEADER != expected {
        return Ok((false, "CSV header drifted".into()));
    }
    let dir = std::env::temp_dir().join("jumpdiff-verify-unit");
    std::fs::create_dir_all(&dir)?;
    let empty = dir.join("empty.csv");
    std::fs::write(&empty, format!("{CSV_HEADER}\n"))?;
    let (r, t) = crate::harness::emit_plotdata(&empty)?;
    let ok = std::fs::read_to_string(r)?.is_empty() && std::fs::read_to_string(t)?.is_empty();
    Ok((ok, "header pinned; empty CSV yields empty plot data".into()))
}

// ---------------------------------------------------------------------------
// Invariants suite (< 10 min)
// ---------------------------------------------------------------------------

fn invariants_suite() -> Vec<CheckReport> {
    vec![
        check("coupling-recomputation", check_coupling_recomputation),
        check("telescoping-identities", check_telescoping_identities),
        check("schedule-example", check_schedule_example),
        check("fixed-level-unbiasedness", check_fixed_level_unbiasedness),
        check("correction-variance-decay", check_variance_decay),
        check("bootstrap-variance-accounting", check_bootstrap_variance_accounting),
        check("solve-count-accounting", check_solve_counts),
    ]
}

fn check_coupling_recomputation() -> Result<(bool, String)> {
    let config = preset_problem(Preset::BmUniform1d)?;
    for index in 0..16u64 {
        let hi = realize_draw(&config, VERIFY_SEED, 3, Some(2), index, 96);
        let lo = realize_draw(&config, VERIFY_SEED, 3, Some(2), index, 40);
        let (bhi, blo) = match (&hi.partition, &lo.partition) {
            (PartitionDraw::One(a), PartitionDraw::One(b)) => (a.breakpoints(), b.breakpoints()),
            _ => return Ok((false, "dimension mismatch".into())),
        };
        if bhi != blo || hi.uniforms != lo.uniforms || hi.noise[..40] != lo.noise[..] {
            return Ok((false, format!("draw {index} differs between noise lengths")));
        }
    }
    // The coupled pair inside one correction is reproducible independently of
    // the estimator loop.
    let schedule = documented_schedule()?;
    let (f1, c1) = probe_correction(
        &config,
        &schedule.levels[2],
        &schedule.levels[1],
        Discretization::Adaptive,
        VERIFY_SEED,
        3,
        5,
    )?;
    let (f2, c2) = probe_correction(
        &config,
        &schedule.levels[2],
        &schedule.levels[1],
        Discretization::Adaptive,
        VERIFY_SEED,
        3,
        5,
    )?;
    let ok = f1 == f2 && c1 == c2;
    Ok((ok, "shared draws agree bit-for-bit across recomputation".into()))
}

fn check_telescoping_identities() -> Result<(bool, String)> {
    let config = preset_problem(Preset::BmUniform1d)?;
    let base = dyadic_schedule(&config, &[12], 24);
    let mlmc = mlmc_estimate(&config, &base, Discretization::Adaptive, VERIFY_SEED, 0)?;
    let mc = mc_estimate(&config, 12, &base.levels[0], Discretization::Adaptive, VERIFY_SEED, 0)?;
    if mlmc.mean_field != mc.mean_field {
        return Ok((false, "single-level MLMC differs from MC".into()));
    }
    let equal = dyadic_schedule(&config, &[5, 5, 5], 24);
    let boot = bootstrap_mlmc_estimate(&config, &equal, Discretization::Adaptive, VERIFY_SEED, 0)?;
    let top = mc_estimate(&config, 5, &equal.levels[2], Discretization::Adaptive, VERIFY_SEED, 0)?;
    let ok = boot.mean_field == top.mean_field;
    Ok((ok, "MLMC(L=0) == MC and equal-count bootstrap == top-level MC, bit-for-bit".into()))
}

fn check_fixed_level_unbiasedness() -> Result<(bool, String)> {
    let config = preset_problem(Preset::BmUniform1d)?;
    let schedule = dyadic_schedule(&config, &[48, 12, 8], 48);
    let reps = 10u64;
    let mut by_kind = Vec::new();
    for kind in [EstimatorKind::Mc, EstimatorKind::Mlmc, EstimatorKind::Bootstrap] {
        let mut scalars = Vec::new();
        for rep in 0..reps {
            let out =
                run_estimator(&config, kind, &schedule, Discretization::Adaptive, VERIFY_SEED, rep)?;
            scalars.push(field_average(&out.mean_field));
        }
        by_kind.push((kind, mean_and_se(&scalars)));
    }
    let mut detail = String::new();
    let mut ok = true;
    for i in 0..by_kind.len() {
        for j in i + 1..by_kind.len() {
            let (ka, (ma, sa)) = by_kind[i];
            let (kb, (mb, sb)) = by_kind[j];
            let gap = (ma - mb).abs();
            let bound = 3.0 * (sa * sa + sb * sb).sqrt();
            if gap > bound {
                ok = false;
            }
            detail.push_str(&format!(
                "{}-{} gap {gap:.2e} (3se {bound:.2e}); ",
                ka.as_str(),
                kb.as_str()
            ));
        }
    }
    Ok((ok, detail))
}

fn check_variance_decay() -> Result<(bool, String)> {
    let config = preset_problem(Preset::BmUniform1d)?;
    let h_bars = config.level_h_bars(4);
    let pilot = pilot_mesh_stats(&config, &h_bars, 16, Discretization::Adaptive, VERIFY_SEED)?;
    let schedule = build_schedule(&config, &pilot.mean_sq_h, config.kappa, config.nu)?;
    let out = mlmc_estimate(&config, &schedule, Discretization::Adaptive, VERIFY_SEED, 11)?;
    let vars: Vec<f64> = out.per_level.iter().map(|s| s.correction_variance).collect();
    let base = vars[0];
    let decayed = vars[1..].iter().all(|&v| v <= base / 4.0);
    let tail = vars[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = decayed && tail <= base / 20.0;
    let rendered: Vec<String> = vars.iter().map(|v| format!("{v:.3e}")).collect();
    Ok((ok, format!("correction variances [{}]", rendered.join(", "))))
}

fn check_bootstrap_variance_accounting() -> Result<(bool, String)> {
    let config = preset_problem(Preset::BmUniform1d)?;
    let schedule = dyadic_schedule(&config, &[32, 8, 8], 32);
    let space = RefSpace::new(config.dim());
    let reps = 40u64;
    let mut fields: Vec<Vec<f64>> = Vec::new();
    let mut predicted_sum = 0.0;
    for rep in 0..reps {
        let out =
            bootstrap_mlmc_estimate(&config, &schedule, Discretization::Adaptive, VERIFY_SEED, rep)?;
        // Plug-in decomposition: sum over levels of (M_l - M_{l+1}) times the
        // sample variance of the nested partial sums ending at level l.
        let mut predicted = 0.0;
        for (l, stats) in out.per_level.iter().enumerate() {
            let m_next =
                out.per_level.get(l + 1).map(|s| s.samples).unwrap_or(0) as f64;
            predicted += (stats.samples as f64 - m_next) * stats.nested_variance;
        }
        predicted_sum += predicted;
        fields.push(out.mean_field);
    }
    let n = reps as f64;
    let mut mean = vec![0.0; space.len()];
    for f in &fields {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n;
        }
    }
    let empirical = fields
        .iter()
        .map(|f| {
            let d = space.dist(f, &mean);
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    let predicted = predicted_sum / n;
    let rel = (predicted - empirical).abs() / empirical;
    Ok((
        rel <= 0.5,
        format!("empirical Var {empirical:.3e}, decomposition {predicted:.3e}, rel dev {rel:.2}"),
    ))
}

fn check_solve_counts() -> Result<(bool, String)> {
    let config = preset_problem(Preset::BmUniform1d)?;
    let schedule = dyadic_schedule(&config, &[32, 8, 8], 32);
    let boot =
        bootstrap_mlmc_estimate(&config, &schedule, Discretization::Adaptive, VERIFY_SEED, 0)?;
    let mlmc = mlmc_estimate(&config, &schedule, Discretization::Adaptive, VERIFY_SEED, 0)?;
    let m: Vec<u64> = schedule.levels.iter().map(|s| s.samples).collect();
    let boot_expected: u64 = m.iter().sum();
    let mlmc_expected: u64 =
        (0..m.len()).map(|l| m[l] + m.get(l + 1).copied().unwrap_or(0)).sum();
    let ok = boot.solve_count == boot_expected && mlmc.solve_count == mlmc_expected;
    Ok((
        ok,
        format!(
            "bootstrap {} (expected {boot_expected}), mlmc {} (expected {mlmc_expected})",
            boot.solve_count, mlmc.solve_count
        ),
    ))
}

// ---------------------------------------------------------------------------
// Acceptance criteria
// ---------------------------------------------------------------------------

/// Runs the ten acceptance criteria, sharing the expensive study runs between
/// related criteria, and returns one report per criterion in order.
pub fn acceptance_report() -> Vec<CheckReport> {
    let mut reports = criteria_1_and_2().to_vec();
    reports.push(check("3-gig-tolerance-schedule", criterion_3));
    reports.push(check("4-2d-heterogeneous-rates", criterion_4));
    reports.push(check("5-kl-truncation-law", criterion_5));
    reports.push(check("6-jump-sampling-law", criterion_6));
    reports.push(check("7-oracle-equivalence", criterion_7));
    reports.push(check("8-estimator-identities", criterion_8));
    reports.push(check("9-bootstrap-unbiasedness-cost", criterion_9));
    reports.push(check("10-gig-distribution", criterion_10));
    reports
}

/// Runs one acceptance criterion by number (1..=10). Criteria 1 and 2 share
/// their study runs, so requesting either computes both and returns the one
/// asked for.
pub fn acceptance_criterion(n: u32) -> CheckReport {
    match n {
        1 => criteria_1_and_2()[0].clone(),
        2 => criteria_1_and_2()[1].clone(),
        3 => check("3-gig-tolerance-schedule", criterion_3),
        4 => check("4-2d-heterogeneous-rates", criterion_4),
        5 => check("5-kl-truncation-law", criterion_5),
        6 => check("6-jump-sampling-law", criterion_6),
        7 => check("7-oracle-equivalence", criterion_7),
        8 => check("8-estimator-identities", criterion_8),
        9 => check("9-bootstrap-unbiasedness-cost", criterion_9),
        10 => check("10-gig-distribution", criterion_10),
        other => CheckReport {
            name: "unknown-criterion",
            passed: false,
            detail: format!("no criterion numbered {other}"),
            seconds: 0.0,
        },
    }
}

/// Criteria 1 + 2 share the 1D study configuration and seeds.
fn criteria_1_and_2() -> [CheckReport; 2] {
    let mut reports = Vec::with_capacity(2);
    let bm_studies = (|| -> Result<(Vec<StudyRow>, Vec<StudyRow>)> {
        let config = preset_problem(Preset::BmUniform1d)?;
        let adaptive = rmse_study(
            &config,
            5,
            7,
            10,
            EstimatorKind::Mlmc,
            Discretization::Adaptive,
            VERIFY_SEED,
        )?;
        let uniform = rmse_study(
            &config,
            5,
            7,
            10,
            EstimatorKind::Mlmc,
            Discretization::Uniform,
            VERIFY_SEED,
        )?;
        Ok((adaptive, uniform))
    })();

    let start = Instant::now();
    let adaptive_slope = match &bm_studies {
        Ok((adaptive, _)) => study_slope(adaptive),
        Err(e) => Err(Error::Config(format!("study failed: {e}"))),
    };
    reports.push(CheckReport {
        name: "1-1d-adaptive-rate",
        passed: matches!(adaptive_slope, Ok(s) if (0.85..=1.15).contains(&s)),
        detail: match &adaptive_slope {
            Ok(s) => format!("adaptive MLMC slope {s:.3} (window [0.85, 1.15])"),
            Err(e) => format!("error: {e}"),
        },
        seconds: start.elapsed().as_secs_f64(),
    });

    let start = Instant::now();
    let c2 = (|| -> Result<(bool, String)> {
        let (adaptive, uniform) = bm_studies.as_ref().map_err(|e| Error::Config(e.to_string()))?;
        let sa = study_slope(adaptive)?;
        let su = study_slope(uniform)?;
        let ra = adaptive.last().unwrap().rmse;
        let ru = uniform.last().unwrap().rmse;
        let ok = (0.60..=0.90).contains(&su) && su < sa && ra < ru;
        Ok((ok, format!(
            "uniform slope {su:.3} (window [0.60, 0.90]) vs adaptive {sa:.3}; top-level RMSE {ra:.3e} (adaptive) < {ru:.3e} (uniform)"
        )))
    })();
    reports.push(report_from("2-1d-uniform-degradation", c2, start));
    [reports.remove(0), reports.remove(0)]
}

fn report_from(
    name: &'static str,
    result: Result<(bool, String)>,
    start: Instant,
) -> CheckReport {
    let (passed, detail) = match result {
        Ok((p, d)) => (p, d),
        Err(e) => (false, format!("error: {e}")),
    };
    CheckReport { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn criterion_3() -> Result<(bool, String)> {
    let config = preset_problem(Preset::SeGig1d)?;
    let rows = rmse_study(
        &config,
        5,
        7,
        10,
        EstimatorKind::Mlmc,
        Discretization::Adaptive,
        VERIFY_SEED,
    )?;
    let slope = study_slope(&rows)?;
    // Hard bias assertion: run one estimate covering every level of the full
    // schedule and check the recorded coupled-sampler deviation against the
    // level tolerance.
    let h_bars = config.level_h_bars(5);
    let pilot = pilot_mesh_stats(&config, &h_bars, 16, Discretization::Adaptive, VERIFY_SEED)?;
    let mut schedule = build_schedule(&config, &pilot.mean_sq_h, config.kappa, config.nu)?;
    for spec in &mut schedule.levels {
        spec.samples = spec.samples.min(32);
    }
    let out = mlmc_estimate(&config, &schedule, Discretization::Adaptive, VERIFY_SEED, 909)?;
    for (stats, spec) in out.per_level.iter().zip(&schedule.levels) {
        assert!(
            stats.jump_bias_mean_sq <= spec.eps,
            "level {}: mean squared jump deviation {:.3e} exceeds tolerance {:.3e}",
            spec.level,
            stats.jump_bias_mean_sq,
            spec.eps
        );
    }
    let ok = (0.85..=1.15).contains(&slope);
    Ok((ok, format!(
        "adaptive slope {slope:.3} (window [0.85, 1.15]); per-level jump deviation within tolerance at all {} levels",
        schedule.levels.len()
    )))
}

fn criterion_4() -> Result<(bool, String)> {
    let config = preset_problem(Preset::Hetero2d)?;
    let adaptive = rmse_study(
        &config,
        3,
        5,
        5,
        EstimatorKind::Mlmc,
        Discretization::Adaptive,
        VERIFY_SEED,
    )?;
    let uniform = rmse_study(
        &config,
        3,
        5,
        5,
        EstimatorKind::Mlmc,
        Discretization::Uniform,
        VERIFY_SEED,
    )?;
    let sa = study_slope(&adaptive)?;
    let su = study_slope(&uniform)?;
    let ra = adaptive.last().unwrap().rmse;
    let ru = uniform.last().unwrap().rmse;
    let ok = (0.75..=1.05).contains(&sa) && su <= sa + 0.05 && ra <= ru;
    Ok((ok, format!(
        "adaptive slope {sa:.3} (window [0.75, 1.05]), uniform slope {su:.3} <= adaptive + 0.05; finest-level RMSE {ra:.3e} (adaptive) <= {ru:.3e} (uniform)"
    )))
}

fn criterion_5() -> Result<(bool, String)> {
    let spectrum = Arc::new(SpectrumModel::brownian_motion_1d().with_mode_cap(4096));
    let n_big = 1024usize;
    let cuts = [4usize, 16, 64];
    let grid: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
    let samples = 256u64;
    let mut sum_sq = [0.0f64; 3];
    for s in 0..samples {
        let mut rng =
            RngStream::from_label(StreamLabel::new(VERIFY_SEED, s, None, 0, Purpose::Noise));
        let noise = draw_noise(&mut rng, n_big);
        let real = sample_gaussian_field(&spectrum, n_big, &noise);
        for (j, &n) in cuts.iter().enumerate() {
            let sup = grid
                .iter()
                .map(|&x| (real.eval_1d(x) - real.eval_1d_truncated(x, n)).abs())
                .fold(0.0f64, f64::max);
            sum_sq[j] += sup * sup;
        }
    }
    let rms: Vec<f64> = sum_sq.iter().map(|s| (s / samples as f64).sqrt()).collect();
    let xi: Vec<f64> = cuts.iter().map(|&n| spectrum.xi_tail(n).sqrt()).collect();
    let mut ok = true;
    let mut detail = String::new();
    for j in 0..cuts.len() - 1 {
        let measured = rms[j] / rms[j + 1];
        let law = xi[j] / xi[j + 1];
        let rel = (measured / law - 1.0).abs();
        if rel > 0.25 {
            ok = false;
        }
        detail.push_str(&format!(
            "N {}->{}: ratio {measured:.3} vs law {law:.3} (dev {:.0}%); ",
            cuts[j],
            cuts[j + 1],
            rel * 100.0
        ));
    }
    Ok((ok, detail))
}

fn criterion_6() -> Result<(bool, String)> {
    let dist = Arc::new(GigDist::new(GigParams::new(0.25, 9.0, -1.0)?));
    let mut detail = String::new();
    let mut ok = true;
    for (k, &eps) in [1e-2, 1e-3, 1e-4].iter().enumerate() {
        let table = GigTable::new(Arc::clone(&dist), eps)?;
        let draws = 300u64;
        let mut sum_max_sq = 0.0;
        for d in 0..draws {
            let mut prng = RngStream::from_label(StreamLabel::new(
                VERIFY_SEED,
                d,
                Some(k as u32),
                0,
                Purpose::Partition,
            ));
            let partition = sample_partition_1d(12.0, &mut prng);
            let mut hrng = RngStream::from_label(StreamLabel::new(
                VERIFY_SEED,
                d,
                Some(k as u32),
                0,
                Purpose::Heights,
            ));
            let mut max_sq = 0.0f64;
            for _ in 0..partition.cell_count() {
                let (exact, approx) = table.sample_coupled(hrng.gen::<f64>());
                max_sq = max_sq.max((exact - approx) * (exact - approx));
            }
            sum_max_sq += max_sq;
        }
        let mean_max_sq = sum_max_sq / draws as f64;
        if mean_max_sq > 12.0 * eps {
            ok = false;
        }
        detail.push_str(&format!("eps {eps:.0e}: E(max dev^2) {mean_max_sq:.2e} <= {:.2e}; ", 12.0 * eps));
    }
    Ok((ok, detail))
}

fn criterion_7() -> Result<(bool, String)> {
    let config = preset_problem(Preset::BmUniform1d)?;
    let source: crate::fem1d::SourceFn1d = Arc::new(|_| 1.0);
    let cutoff = 16usize;
    let mut min_slope = f64::INFINITY;
    for path in 0..20u64 {
        let draw = realize_draw(&config, VERIFY_SEED, path, None, 7000, cutoff);
        let partition = match &draw.partition {
            PartitionDraw::One(p) => p.clone(),
            _ => unreachable!("1D preset"),
        };
        let (heights, _) = crate::estimators::heights_at_level(&config, &draw.uniforms, None);
        let gaussian = sample_gaussian_field(&config.spectrum, cutoff, &draw.noise);
        let coeff = crate::coefficient::make_coefficient(
            config.deterministic.clone(),
            gaussian,
            crate::coefficient::PartitionWithJumps::One { partition: partition.clone(), heights },
            config.transform.clone(),
        )?;
        let oracle = oracle_solve_1d(&coeff, Arc::clone(&source), 1024)?;
        let mut pts = Vec::new();
        for l in 6..=10 {
            let mesh = adaptive_mesh_1d(&partition, 0.5f64.powi(l + 1))?;
            let sol = assemble_solve_1d(&coeff, &|_| 1.0, &mesh)?;
            let err = h1_error_vs_oracle(&sol, &oracle);
            pts.push((1.0 / mesh.realized_h(), err.max(1e-300)));
        }
        min_slope = min_slope.min(fit_rate(&pts)?);
    }

    // Nodal exactness: piecewise-constant coefficient (no Gaussian part) with
    // constant source; the interface-fitted P1 solution is exact at the nodes.
    let mut plain = config.clone();
    plain.use_gaussian = false;
    let draw = realize_draw(&plain, VERIFY_SEED, 99, None, 0, 0);
    let partition = match &draw.partition {
        PartitionDraw::One(p) => p.clone(),
        _ => unreachable!("1D preset"),
    };
    let (heights, _) = crate::estimators::heights_at_level(&plain, &draw.uniforms, None);
    let gaussian = sample_gaussian_field(&plain.spectrum, 0, &[]);
    let coeff = crate::coefficient::make_coefficient(
        plain.deterministic.clone(),
        gaussian,
        crate::coefficient::PartitionWithJumps::One { partition: partition.clone(), heights },
        plain.transform.clone(),
    )?;
    let oracle = oracle_solve_1d(&coeff, Arc::clone(&source), 1024)?;
    let mesh = adaptive_mesh_1d(&partition, 0.125)?;
    let sol = assemble_solve_1d(&coeff, &|_| 1.0, &mesh)?;
    let worst_nodal = sol
        .mesh
        .nodes()
        .iter()
        .zip(&sol.nodal)
        .map(|(&x, &v)| (v - oracle.eval(x)).abs())
        .fold(0.0f64, f64::max);

    let ok = min_slope >= 0.9 && worst_nodal <= 1e-10;
    Ok((ok, format!(
        "min per-path slope {min_slope:.3} (>= 0.9 over 20 paths, 5 refinements); piecewise-constant nodal error {worst_nodal:.2e} <= 1e-10"
    )))
}

fn criterion_8() -> Result<(bool, String)> {
    let (tel_ok, tel_detail) = check_telescoping_identities()?;
    let (sched_ok, sched_detail) = check_schedule_example()?;
    let ok = tel_ok && sched_ok;
    Ok((ok, format!("{tel_detail}; {sched_detail}")))
}

fn criterion_9() -> Result<(bool, String)> {
    let config = preset_problem(Preset::BmUniform1d)?;
    let schedule = dyadic_schedule(&config, &[64, 16, 16], 48);
    let reps = 10u64;
    let mut boot_scalars = Vec::new();
    let mut mlmc_scalars = Vec::new();
    let mut boot_out: Option<EstimatorOutput> = None;
    let mut mlmc_out: Option<EstimatorOutput> = None;
    for rep in 0..reps {
        let b = bootstrap_mlmc_estimate(
            &config,
            &schedule,
            Discretization::Adaptive,
            VERIFY_SEED,
            rep,
        )?;
        let m = mlmc_estimate(&config, &schedule, Discretization::Adaptive, VERIFY_SEED, rep)?;
        boot_scalars.push(field_average(&b.mean_field));
        mlmc_scalars.push(field_average(&m.mean_field));
        boot_out = Some(b);
        mlmc_out = Some(m);
    }
    let (mb, sb) = mean_and_se(&boot_scalars);
    let (mm, sm) = mean_and_se(&mlmc_scalars);
    let gap = (mb - mm).abs();
    let bound = 3.0 * (sb * sb + sm * sm).sqrt();
    let m: Vec<u64> = schedule.levels.iter().map(|s| s.samples).collect();
    let boot_expected: u64 = m.iter().sum();
    let mlmc_expected: u64 =
        (0..m.len()).map(|l| m[l] + m.get(l + 1).copied().unwrap_or(0)).sum();
    let bc = boot_out.unwrap().solve_count;
    let mc = mlmc_out.unwrap().solve_count;
    let ok = gap <= bound && bc == boot_expected && mc == mlmc_expected;
    Ok((ok, format!(
        "mean gap {gap:.2e} <= 3 combined SE {bound:.2e} over {reps} replications; solves {bc}={boot_expected} (bootstrap) vs {mc}={mlmc_expected} (mlmc)"
    )))
}

fn criterion_10() -> Result<(bool, String)> {
    let dist = GigDist::new(GigParams::new(0.25, 9.0, -1.0)?);
    let mut rng = RngStream::from_label(StreamLabel::new(VERIFY_SEED, 0, None, 10, Purpose::Generic));
    let draws = 1_000_000u64;
    let mut sum = 0.0;
    for _ in 0..draws {
        sum += dist.sample_exact(&mut rng)?;
    }
    let empirical = sum / draws as f64;
    let exact = dist.mean();
    let rel = (empirical - exact).abs() / exact;

    // Composite Simpson over the effective support; the density decays like
    // exp(-psi x / 2) in the upper tail, negligible beyond x = 400.
    let (lo, hi) = (1e-9, 400.0);
    let panels = 400_000usize;
    let dx = (hi - lo) / panels as f64;
    let mut mass = 0.0;
    for k in 0..panels {
        let x0 = lo + k as f64 * dx;
        mass += dx / 6.0
            * (dist.density(x0) + 4.0 * dist.density(x0 + 0.5 * dx) + dist.density(x0 + dx));
    }
    let ok = rel <= 0.01 && (mass - 1.0).abs() <= 1e-8 && (exact - 4.6243).abs() < 5e-4;
    Ok((ok, format!(
        "empirical mean {empirical:.4} vs exact {exact:.4} (rel {:.2e} <= 1e-2); density mass 1{:+.1e}",
        rel,
        mass - 1.0
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!(Suite::parse("unit").unwrap(), Suite::Unit);
        assert_eq!(Suite::parse("invariants").unwrap(), Suite::Invariants);
        assert_eq!(Suite::parse("acceptance").unwrap(), Suite::Acceptance);
        assert!(Suite::parse("everything").is_err());
    }

    #[test]
    fn unit_suite_passes() {
        let reports = run_suite(Suite::Unit).unwrap();
        assert_eq!(reports.len(), 5);
        let rendered = render_report(&reports);
        assert!(
            reports.iter().all(|r| r.passed),
            "unit suite failed:\n{rendered}"
        );
        assert!(rendered.contains("all 5 checks passed"));
    }

    #[test]
    fn failed_checks_render_as_failures() {
        let report = check("always-fails", || Err(Error::Config("boom".into())));
        assert!(!report.passed);
        assert!(report.line().starts_with("FAIL"));
        assert!(render_report(&[report]).contains("1 of 1 checks FAILED"));
    }
}

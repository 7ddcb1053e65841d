//! Experiment harness: presets for the convergence studies, flat key=value
//! configuration with overrides, CSV/manifest/plot-data emission, and debug
//! dumps of sampled coefficients and meshes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::coefficient::{make_coefficient, DeterministicPart, PartitionWithJumps, Transform};
use crate::estimators::{
    fit_rate, realize_draw, rmse_study, Discretization, EstimatorKind, JumpModel, PartitionDraw,
    PartitionModel, ProblemConfig, StudyRow,
};
use crate::fem1d::adaptive_mesh_1d;
use crate::fem2d::{triangulate_conforming, MixedBC};
use crate::jumps::{GigDist, GigParams};
use crate::spectra::SpectrumModel;
use crate::{Error, Result};

/// The bit-exact CSV header of a results table.
pub const CSV_HEADER: &str =
    "preset,estimator,discretization,L,inv_h,rmse,wall_time_s,M_levels,N_levels,eps_levels,slope_so_far";

/// Named experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 1D, Brownian-motion covariance, uniform jump heights.
    BmUniform1d,
    /// 1D, squared-exponential covariance, GIG jump heights with an active
    /// tolerance schedule.
    SeGig1d,
    /// 2D heterogeneous media: heat-kernel covariance, Poisson line
    /// partitions, uniform jump heights.
    Hetero2d,
    /// Everything taken from the defaults and overrides.
    Custom,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::BmUniform1d => "bm-uniform-1d",
            Preset::SeGig1d => "se-gig-1d",
            Preset::Hetero2d => "hetero-2d",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bm-uniform-1d" => Ok(Preset::BmUniform1d),
            "se-gig-1d" => Ok(Preset::SeGig1d),
            "hetero-2d" => Ok(Preset::Hetero2d),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

/// Gaussian covariance families selectable in custom runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    BrownianMotion,
    SquaredExponential,
    HeatKernel,
}

/// Boundary-condition presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcChoice {
    HomogeneousDirichlet,
    Mixed,
}

/// Jump-height families selectable in custom runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpChoice {
    Uniform,
    Gig,
    Constant,
}

/// Fully resolved experiment description. Every field lands in the manifest.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub dimension: usize,
    pub estimator: EstimatorKind,
    pub discretization: Discretization,
    pub l_max: u32,
    pub reference_level: u32,
    pub replications: u32,
    pub master_seed: u64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub dump_coefficient: bool,
    pub dump_mesh: bool,
    pub kernel: KernelChoice,
    pub gaussian: bool,
    pub intensity: f64,
    pub jump_dist: JumpChoice,
    pub jump_lo: f64,
    pub jump_hi: f64,
    pub jump_value: f64,
    pub gig_psi: f64,
    pub gig_chi: f64,
    pub gig_lambda_bar: f64,
    pub variance: f64,
    pub corr_len: f64,
    pub nu: f64,
    pub kappa: f64,
    pub theta_min_deg: f64,
    pub h_base: f64,
    pub f_const: f64,
    pub bc: BcChoice,
    pub mode_cap: usize,
    pub nystrom_points: usize,
}

impl ExperimentConfig {
    /// Defaults for a preset. Custom 1D starts from the Brownian-motion
    /// family, custom 2D from the heterogeneous-media family.
    pub fn preset_defaults(preset: Preset, dimension: usize) -> Self {
        let mut cfg = ExperimentConfig {
            preset,
            dimension: 1,
            estimator: EstimatorKind::Mlmc,
            discretization: Discretization::Adaptive,
            l_max: 5,
            reference_level: 7,
            replications: 10,
            master_seed: 1,
            threads: None,
            out_dir: default_out_dir(),
            dump_coefficient: false,
            dump_mesh: false,
            kernel: KernelChoice::BrownianMotion,
            gaussian: true,
            intensity: 12.0,
            jump_dist: JumpChoice::Uniform,
            jump_lo: 0.0,
            jump_hi: 10.0,
            jump_value: 1.0,
            gig_psi: 0.25,
            gig_chi: 9.0,
            gig_lambda_bar: -1.0,
            variance: 1.0,
            corr_len: 0.1,
            nu: 0.01,
            kappa: 1.0,
            theta_min_deg: 0.005,
            h_base: 0.5,
            f_const: 1.0,
            bc: BcChoice::HomogeneousDirichlet,
            mode_cap: 262_144,
            nystrom_points: 200,
        };
        match preset {
            Preset::BmUniform1d => {}
            Preset::SeGig1d => {
                cfg.kernel = KernelChoice::SquaredExponential;
                cfg.jump_dist = JumpChoice::Gig;
            }
            Preset::Hetero2d | Preset::Custom => {
                if preset == Preset::Hetero2d || dimension == 2 {
                    cfg.dimension = 2;
                    cfg.kernel = KernelChoice::HeatKernel;
                    cfg.variance = 0.25;
                    cfg.corr_len = 0.02;
                    cfg.intensity = 1.0;
                    cfg.jump_hi = 5.0;
                    cfg.h_base = 0.4;
                    cfg.l_max = 3;
                    cfg.reference_level = 5;
                    cfg.replications = 5;
                }
            }
        }
        cfg
    }

    /// Applies one `key=value` override; unknown keys are usage errors naming
    /// the key.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("invalid value '{value}' for key '{key}' ({what})"));
        match key {
            "preset" => self.preset = Preset::parse(value)?,
            "dimension" => {
                self.dimension = value.parse().map_err(|_| bad("integer"))?;
                if self.dimension != 1 && self.dimension != 2 {
                    return Err(bad("1 or 2"));
                }
            }
            "estimator" => self.estimator = parse_estimator(value)?,
            "discretization" => self.discretization = parse_discretization(value)?,
            "lmax" => self.l_max = value.parse().map_err(|_| bad("integer"))?,
            "ref" => self.reference_level = value.parse().map_err(|_| bad("integer"))?,
            "reps" => self.replications = value.parse().map_err(|_| bad("integer"))?,
            "seed" => self.master_seed = value.parse().map_err(|_| bad("u64"))?,
            "threads" => self.threads = Some(value.parse().map_err(|_| bad("integer"))?),
            "out" => self.out_dir = PathBuf::from(value),
            "dump-coefficient" => self.dump_coefficient = parse_bool(value).ok_or_else(|| bad("bool"))?,
            "dump-mesh" => self.dump_mesh = parse_bool(value).ok_or_else(|| bad("bool"))?,
            "kernel" => {
                self.kernel = match value {
                    "bm" => KernelChoice::BrownianMotion,
                    "se" => KernelChoice::SquaredExponential,
                    "heat" => KernelChoice::HeatKernel,
                    _ => return Err(bad("bm|se|heat")),
                }
            }
            "gaussian" => self.gaussian = parse_bool(value).ok_or_else(|| bad("bool"))?,
            "intensity" => self.intensity = value.parse().map_err(|_| bad("real"))?,
            "jump-dist" => {
                self.jump_dist = match value {
                    "uniform" => JumpChoice::Uniform,
                    "gig" => JumpChoice::Gig,
                    "constant" => JumpChoice::Constant,
                    _ => return Err(bad("uniform|gig|constant")),
                }
            }
            "jump-range" => {
                let (lo, hi) = value
                    .split_once(':')
                    .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                    .ok_or_else(|| bad("lo:hi"))?;
                self.jump_lo = lo;
                self.jump_hi = hi;
            }
            "jump-value" => self.jump_value = value.parse().map_err(|_| bad("real"))?,
            "gig-psi" => self.gig_psi = value.parse().map_err(|_| bad("real"))?,
            "gig-chi" => self.gig_chi = value.parse().map_err(|_| bad("real"))?,
            "gig-lambda-bar" => self.gig_lambda_bar = value.parse().map_err(|_| bad("real"))?,
            "v" => self.variance = value.parse().map_err(|_| bad("real"))?,
            "r" => self.corr_len = value.parse().map_err(|_| bad("real"))?,
            "nu" => self.nu = value.parse().map_err(|_| bad("real"))?,
            "kappa" => self.kappa = value.parse().map_err(|_| bad("real"))?,
            "theta" => self.theta_min_deg = value.parse().map_err(|_| bad("real"))?,
            "h-base" => self.h_base = value.parse().map_err(|_| bad("real"))?,
            "f-const" => self.f_const = value.parse().map_err(|_| bad("real"))?,
            "bc" => {
                self.bc = match value {
                    "homogeneous-dirichlet" => BcChoice::HomogeneousDirichlet,
                    "mixed" => BcChoice::Mixed,
                    _ => return Err(bad("homogeneous-dirichlet|mixed")),
                }
            }
            "mode-cap" => self.mode_cap = value.parse().map_err(|_| bad("integer"))?,
            "nystrom-points" => self.nystrom_points = value.parse().map_err(|_| bad("integer"))?,
            // Manifest metadata, ignored on re-ingestion.
            "config-hash" => {}
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Loads `key = value` lines from a flat config file (blank lines and
    /// `#` comments allowed).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key=value", path.display(), lineno + 1))
            })?;
            self.apply_override(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.reference_level <= self.l_max {
            return Err(Error::Config(format!(
                "reference level {} must exceed lmax {}",
                self.reference_level, self.l_max
            )));
        }
        if self.replications < 1 {
            return Err(Error::Config("need at least one replication".into()));
        }
        match self.preset {
            Preset::BmUniform1d | Preset::SeGig1d if self.dimension != 1 => {
                return Err(Error::Config(format!(
                    "preset {} is one-dimensional",
                    self.preset.as_str()
                )))
            }
            Preset::Hetero2d if self.dimension != 2 => {
                return Err(Error::Config("preset hetero-2d is two-dimensional".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// Resolves the problem description the estimators run on.
    pub fn problem(&self) -> Result<ProblemConfig> {
        let spectrum = match self.kernel {
            KernelChoice::BrownianMotion => {
                if self.dimension != 1 {
                    return Err(Error::Config("kernel bm is one-dimensional".into()));
                }
                SpectrumModel::brownian_motion_1d().with_mode_cap(self.mode_cap)
            }
            KernelChoice::SquaredExponential => {
                if self.dimension != 1 {
                    return Err(Error::Config("kernel se is one-dimensional".into()));
                }
                SpectrumModel::nystrom_1d(self.variance, self.corr_len, self.nystrom_points)?
                    .with_mode_cap(self.mode_cap)
            }
            KernelChoice::HeatKernel => {
                if self.dimension != 2 {
                    return Err(Error::Config("kernel heat is two-dimensional".into()));
                }
                SpectrumModel::heat_kernel_2d(self.variance, self.corr_len)
                    .with_mode_cap(self.mode_cap)
            }
        };
        let partition = match self.dimension {
            1 => PartitionModel::Poisson1d { intensity: self.intensity },
            _ => PartitionModel::Lines2d { line_intensity: self.intensity },
        };
        let jumps = match self.jump_dist {
            JumpChoice::Uniform => JumpModel::Uniform { lo: self.jump_lo, hi: self.jump_hi },
            JumpChoice::Constant => JumpModel::Constant { value: self.jump_value },
            JumpChoice::Gig => {
                let params = GigParams::new(self.gig_psi, self.gig_chi, self.gig_lambda_bar)?;
                JumpModel::Gig { dist: Arc::new(GigDist::new(params)) }
            }
        };
        let bc = match self.bc {
            BcChoice::HomogeneousDirichlet => MixedBC::homogeneous_dirichlet(),
            BcChoice::Mixed => MixedBC::mixed_preset(),
        };
        Ok(ProblemConfig {
            deterministic: DeterministicPart::Zero,
            transform: Transform::Exp,
            spectrum: Arc::new(spectrum),
            use_gaussian: self.gaussian,
            partition,
            jumps,
            source: self.f_const,
            bc,
            h_base: self.h_base,
            theta_min_deg: self.theta_min_deg,
            kappa: self.kappa,
            nu: self.nu,
        })
    }

    /// The manifest body: every result-affecting parameter, one per line.
    pub fn manifest_body(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("preset", self.preset.as_str().into());
        put("dimension", self.dimension.to_string());
        put("estimator", self.estimator.as_str().into());
        put("discretization", self.discretization.as_str().into());
        put("lmax", self.l_max.to_string());
        put("ref", self.reference_level.to_string());
        put("reps", self.replications.to_string());
        put("seed", self.master_seed.to_string());
        put(
            "kernel",
            match self.kernel {
                KernelChoice::BrownianMotion => "bm",
                KernelChoice::SquaredExponential => "se",
                KernelChoice::HeatKernel => "heat",
            }
            .into(),
        );
        put("gaussian", self.gaussian.to_string());
        put("intensity", self.intensity.to_string());
        put(
            "jump-dist",
            match self.jump_dist {
                JumpChoice::Uniform => "uniform",
                JumpChoice::Gig => "gig",
                JumpChoice::Constant => "constant",
            }
            .into(),
        );
        put("jump-range", format!("{}:{}", self.jump_lo, self.jump_hi));
        put("jump-value", self.jump_value.to_string());
        put("gig-psi", self.gig_psi.to_string());
        put("gig-chi", self.gig_chi.to_string());
        put("gig-lambda-bar", self.gig_lambda_bar.to_string());
        put("v", self.variance.to_string());
        put("r", self.corr_len.to_string());
        put("nu", self.nu.to_string());
        put("kappa", self.kappa.to_string());
        put("theta", self.theta_min_deg.to_string());
        put("h-base", self.h_base.to_string());
        put("f-const", self.f_const.to_string());
        put(
            "bc",
            match self.bc {
                BcChoice::HomogeneousDirichlet => "homogeneous-dirichlet",
                BcChoice::Mixed => "mixed",
            }
            .into(),
        );
        put("mode-cap", self.mode_cap.to_string());
        put("nystrom-points", self.nystrom_points.to_string());
        s
    }

    /// Manifest body plus its content hash.
    pub fn manifest_string(&self) -> String {
        let body = self.manifest_body();
        let hash = Sha256::digest(body.as_bytes());
        format!("{body}config-hash={hash:x}\n")
    }

    /// File-name stem shared by the artifacts of this run.
    pub fn artifact_stem(&self) -> String {
        format!(
            "{}_{}_{}_L{}_s{}",
            self.preset.as_str(),
            self.estimator.as_str(),
            self.discretization.as_str(),
            self.l_max,
            self.master_seed
        )
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os("JUMPDIFF_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "on" | "1" | "yes" => Some(true),
        "false" | "off" | "0" | "no" => Some(false),
        _ => None,
    }
}

pub fn parse_estimator(s: &str) -> Result<EstimatorKind> {
    match s {
        "mc" => Ok(EstimatorKind::Mc),
        "mlmc" => Ok(EstimatorKind::Mlmc),
        "mlmc-bootstrap" => Ok(EstimatorKind::Bootstrap),
        other => Err(Error::Config(format!("unknown estimator '{other}'"))),
    }
}

pub fn parse_discretization(s: &str) -> Result<Discretization> {
    match s {
        "adaptive" => Ok(Discretization::Adaptive),
        "uniform" => Ok(Discretization::Uniform),
        other => Err(Error::Config(format!("unknown discretization '{other}'"))),
    }
}

/// Paths produced by one experiment run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub rows: Vec<StudyRow>,
    /// Fitted overall slope, if three or more rows were produced.
    pub slope: Option<f64>,
}

/// Runs the configured study and writes the results CSV and run manifest.
///
/// With `threads=1` (bit-stable verification mode) the wall-time column is
/// written as zero so that identical configs and seeds produce byte-identical
/// CSV files; timings are inherently non-deterministic.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let rows = rmse_study(
        &problem,
        cfg.l_max,
        cfg.reference_level,
        cfg.replications,
        cfg.estimator,
        cfg.discretization,
        cfg.master_seed,
    )?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let stem = cfg.artifact_stem();
    let csv_path = cfg.out_dir.join(format!("{stem}.csv"));
    let manifest_path = cfg.out_dir.join(format!("{stem}.manifest.txt"));
    let zero_times = cfg.threads == Some(1);
    std::fs::write(&csv_path, render_csv(cfg, &rows, zero_times))?;
    std::fs::write(&manifest_path, cfg.manifest_string())?;
    if cfg.dump_coefficient || cfg.dump_mesh {
        write_dumps(cfg, &problem, &cfg.out_dir, &stem)?;
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.inv_h, r.rmse)).collect();
    let slope = if points.len() >= 3 { fit_rate(&points).ok() } else { None };
    Ok(RunArtifacts { csv_path, manifest_path, rows, slope })
}

/// Renders the results table with the pinned header. `slope_so_far` is the
/// fitted rate over the rows up to and including each line (NaN while fewer
/// than three rows exist).
pub fn render_csv(cfg: &ExperimentConfig, rows: &[StudyRow], zero_times: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut points: Vec<(f64, f64)> = Vec::new();
    for row in rows {
        points.push((row.inv_h, row.rmse));
        let slope = if points.len() >= 3 { fit_rate(&points).unwrap_or(f64::NAN) } else { f64::NAN };
        let m: Vec<String> = row.m_levels.iter().map(u64::to_string).collect();
        let n: Vec<String> = row.n_levels.iter().map(usize::to_string).collect();
        let eps: Vec<String> = row.eps_levels.iter().map(f64::to_string).collect();
        let wall = if zero_times { 0.0 } else { row.wall_time_s };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            cfg.preset.as_str(),
            cfg.estimator.as_str(),
            cfg.discretization.as_str(),
            row.level,
            row.inv_h,
            row.rmse,
            wall,
            m.join(";"),
            n.join(";"),
            eps.join(";"),
            slope
        );
    }
    out
}

/// Writes the two whitespace-delimited plot-data files next to the CSV:
/// `<stem>_rmse.dat` with (inv-h, rmse) and `<stem>_time.dat` with
/// (wall-time, rmse).
pub fn emit_plotdata(csv_path: &Path) -> Result<(PathBuf, PathBuf)> {
    let text = std::fs::read_to_string(csv_path)?;
    let mut lines = text.lines();
    match lines.next() {
        None => {}
        Some(header) if header == CSV_HEADER => {}
        Some(other) => {
            return Err(Error::Config(format!("unrecognized CSV header '{other}'")));
        }
    }
    let mut rmse_data = String::new();
    let mut time_data = String::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Config(format!(
                "{}:{}: expected 11 fields, found {}",
                csv_path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let _ = writeln!(rmse_data, "{} {}", fields[4], fields[5]);
        let _ = writeln!(time_data, "{} {}", fields[6], fields[5]);
    }
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let dir = csv_path.parent().unwrap_or_else(|| Path::new("."));
    let rmse_path = dir.join(format!("{stem}_rmse.dat"));
    let time_path = dir.join(format!("{stem}_time.dat"));
    std::fs::write(&rmse_path, rmse_data)?;
    std::fs::write(&time_path, time_data)?;
    Ok((rmse_path, time_path))
}

/// Debug dumps: one sampled coefficient on a plotting grid and one adaptive
/// mesh, both from the first draw of replication 0 at the study's top level.
fn write_dumps(
    cfg: &ExperimentConfig,
    problem: &ProblemConfig,
    dir: &Path,
    stem: &str,
) -> Result<()> {
    let h_bar = problem.h_bar(cfg.l_max);
    let cutoff = if problem.use_gaussian {
        problem.spectrum.choose_cutoff(h_bar * h_bar)?
    } else {
        0
    };
    let draw = realize_draw(problem, cfg.master_seed, 0, None, 0, cutoff);
    let (heights, _) = crate::estimators::heights_at_level(problem, &draw.uniforms, None);
    let gaussian =
        crate::spectra::sample_gaussian_field(&problem.spectrum, cutoff, &draw.noise[..cutoff]);
    match &draw.partition {
        PartitionDraw::One(partition) => {
            let coeff = make_coefficient(
                problem.deterministic.clone(),
                gaussian,
                PartitionWithJumps::One { partition: partition.clone(), heights },
                problem.transform.clone(),
            )?;
            if cfg.dump_coefficient {
                let mut data = String::new();
                for k in 0..=1000 {
                    let x = k as f64 / 1000.0;
                    let _ = writeln!(data, "{x} {}", coeff.eval_1d(x)?);
                }
                std::fs::write(dir.join(format!("{stem}_coefficient.dat")), data)?;
            }
            if cfg.dump_mesh {
                let mesh = adaptive_mesh_1d(partition, h_bar)?;
                let mut data = String::new();
                for x in mesh.nodes() {
                    let _ = writeln!(data, "{x}");
                }
                std::fs::write(dir.join(format!("{stem}_mesh.dat")), data)?;
            }
        }
        PartitionDraw::Two(partition) => {
            let coeff = make_coefficient(
                problem.deterministic.clone(),
                gaussian,
                PartitionWithJumps::Two { partition: partition.clone(), heights },
                problem.transform.clone(),
            )?;
            if cfg.dump_coefficient {
                let mut data = String::new();
                for j in 0..=100 {
                    for i in 0..=100 {
                        let (x, y) = (i as f64 / 100.0, j as f64 / 100.0);
                        let _ = writeln!(data, "{x} {y} {}", coeff.eval_2d(x, y)?);
                    }
                    data.push('\n');
                }
                std::fs::write(dir.join(format!("{stem}_coefficient.dat")), data)?;
            }
            if cfg.dump_mesh {
                let mesh = triangulate_conforming(partition, h_bar, problem.theta_min_deg)?;
                let mut data = String::new();
                for v in mesh.vertices() {
                    let _ = writeln!(data, "v {} {}", v[0], v[1]);
                }
                for t in mesh.triangles() {
                    let _ = writeln!(data, "t {} {} {}", t[0], t[1], t[2]);
                }
                std::fs::write(dir.join(format!("{stem}_mesh.dat")), data)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degenerate_custom(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset_defaults(Preset::Custom, 1);
        for (k, v) in [
            ("gaussian", "off"),
            ("jump-dist", "constant"),
            ("jump-value", "0"),
            ("discretization", "uniform"),
            ("estimator", "mc"),
            ("lmax", "0"),
            ("ref", "2"),
            ("reps", "3"),
            ("threads", "1"),
        ] {
            cfg.apply_override(k, v).unwrap();
        }
        cfg.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn overrides_parse_and_reject() {
        let mut cfg = ExperimentConfig::preset_defaults(Preset::BmUniform1d, 1);
        cfg.apply_override("jump-range", "1:3").unwrap();
        assert_eq!((cfg.jump_lo, cfg.jump_hi), (1.0, 3.0));
        cfg.apply_override("estimator", "mlmc-bootstrap").unwrap();
        assert_eq!(cfg.estimator, EstimatorKind::Bootstrap);
        let err = cfg.apply_override("no-such-key", "1").unwrap_err().to_string();
        assert!(err.contains("no-such-key"));
        let err = cfg.apply_override("jump-range", "oops").unwrap_err().to_string();
        assert!(err.contains("jump-range"));

        cfg.l_max = 7;
        cfg.reference_level = 7;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn manifest_round_trips() {
        let mut cfg = ExperimentConfig::preset_defaults(Preset::SeGig1d, 1);
        cfg.apply_override("intensity", "9.5").unwrap();
        cfg.apply_override("seed", "77").unwrap();
        let manifest = cfg.manifest_string();
        assert!(manifest.contains("config-hash="));

        let dir = std::env::temp_dir().join("jumpdiff-manifest-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.txt");
        std::fs::write(&path, &manifest).unwrap();
        let mut reread = ExperimentConfig::preset_defaults(Preset::Custom, 1);
        reread.apply_file(&path).unwrap();
        assert_eq!(reread.manifest_string(), manifest);
    }

    #[test]
    fn degenerate_run_writes_reproducible_artifacts() {
        let dir = std::env::temp_dir().join("jumpdiff-harness-test");
        let _ = std::fs::remove_dir_all(&dir);
        let cfg = degenerate_custom(&dir);
        let first = run_experiment(&cfg).unwrap();
        let bytes_a = std::fs::read(&first.csv_path).unwrap();
        let text = String::from_utf8(bytes_a.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.count(), 1, "lmax=0 yields a single row");

        let second = run_experiment(&cfg).unwrap();
        let bytes_b = std::fs::read(&second.csv_path).unwrap();
        assert_eq!(bytes_a, bytes_b, "verification mode must be byte-stable");

        let (rmse_path, time_path) = emit_plotdata(&first.csv_path).unwrap();
        let rmse = std::fs::read_to_string(rmse_path).unwrap();
        assert_eq!(rmse.lines().count(), 1);
        let first_col: f64 =
            rmse.split_whitespace().next().unwrap().parse().expect("numeric inv_h");
        assert!(first_col > 0.0);
        let time = std::fs::read_to_string(time_path).unwrap();
        assert_eq!(time.lines().count(), 1);

        // Re-running from the manifest reproduces the CSV.
        let mut from_manifest = ExperimentConfig::preset_defaults(Preset::Custom, 1);
        from_manifest.apply_file(&first.manifest_path).unwrap();
        from_manifest.out_dir = dir.join("again");
        from_manifest.threads = Some(1);
        let third = run_experiment(&from_manifest).unwrap();
        assert_eq!(std::fs::read(&third.csv_path).unwrap(), bytes_a);
    }

    #[test]
    fn plotdata_handles_empty_and_malformed() {
        let dir = std::env::temp_dir().join("jumpdiff-plotdata-test");
        std::fs::create_dir_all(&dir).unwrap();
        let empty = dir.join("empty.csv");
        std::fs::write(&empty, format!("{CSV_HEADER}\n")).unwrap();
        let (r, t) = emit_plotdata(&empty).unwrap();
        assert_eq!(std::fs::read_to_string(r).unwrap(), "");
        assert_eq!(std::fs::read_to_string(t).unwrap(), "");

        let bad = dir.join("bad.csv");
        std::fs::write(&bad, "who,what\n1,2\n").unwrap();
        assert!(emit_plotdata(&bad).is_err());
    }
}

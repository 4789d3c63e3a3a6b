//! End-to-end runs shared by the command line, the Python module and the
//! acceptance suite, plus the artifact manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::diagnostics::{self, CoercivityReport, DiagContext, DTerms, IdentityReport, MonitorReport, VirialRecord};
use crate::dynamics::{self, FieldState, Model, RunSummary, SimConfig};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::kink::{self, KinkProfile};
use crate::profiles::{self, DriftProfile, SpeedProfile};
use crate::spectral::{self, GoldenRule, SpectralData, SpectralOptions};

pub const A_REFERENCE: f64 = 0.687271;
pub const A_TOLERANCE: f64 = 5e-4;
pub const DENOMINATOR_REFERENCE: f64 = -0.327;
pub const DENOMINATOR_TOLERANCE: f64 = 5e-3;

/// Drift and kink for one configuration.
#[derive(Debug, Clone)]
pub struct Problem {
    pub cfg: RunConfig,
    pub drift: DriftProfile,
    pub kink: KinkProfile,
}

pub fn build_drift(cfg: &RunConfig) -> Result<DriftProfile> {
    let grid = Grid::symmetric(cfg.half_length, cfg.h)?;
    match &cfg.speed_profile {
        Some(path) => {
            let speed = SpeedProfile::from_csv(path)?;
            if speed.delta > 0.1 {
                return Err(Error::Config(format!("speed profile has max|c - 1| = {} above 0.1", speed.delta)));
            }
            profiles::speed_to_drift(&speed, grid)
        }
        None if cfg.delta == 0.0 => Ok(DriftProfile::zero(grid)),
        None => profiles::builtin_drift(&cfg.family, cfg.delta, grid),
    }
}

impl Problem {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let drift = build_drift(cfg)?;
        let kink = kink::build_kink(&drift, cfg.tol)?;
        Ok(Problem { cfg: cfg.clone(), drift, kink })
    }

    pub fn grid(&self) -> &Grid {
        self.drift.grid()
    }

    pub fn spectral(&self, oracle: bool) -> Result<SpectralData> {
        spectral::analyze(&self.kink, &self.drift, SpectralOptions { tol: self.cfg.tol, oracle })
    }

    pub fn coercivity(&self, spec: &SpectralData) -> Result<CoercivityReport> {
        diagnostics::measure_coercivity(&self.kink, &self.drift, &spec.ybar1, Ok(DTerms::of(spec)), self.cfg.seed)
    }

    pub fn sim_config(&self) -> SimConfig {
        let mut s = SimConfig::new(self.grid(), self.cfg.t_final, self.cfg.boundary);
        s.dt = self.cfg.dt();
        s.sponge_width = self.cfg.sponge_width;
        s.sample_every = self.cfg.sample_every;
        s
    }
}

/// Everything a simulation produces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub summary: RunSummary,
    pub records: Vec<VirialRecord>,
    pub coercivity: CoercivityReport,
    /// Only for Dirichlet runs.
    pub identity: Option<IdentityReport>,
    pub monitors: Option<MonitorReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub run: RunSummary,
    pub energy_drift: f64,
    pub sup_norm_ratio: f64,
    pub local_norm_ratio: f64,
    pub h_func_ratio: f64,
    pub z_ratio: f64,
    pub identity: Option<IdentityReport>,
    pub monitors: Option<MonitorReport>,
    pub kappa_d: f64,
}

impl Simulation {
    pub fn report(&self) -> SimulationReport {
        let r = &self.records;
        let e0 = r[0].energy;
        let max = |f: fn(&VirialRecord) -> f64| r.iter().map(f).fold(0.0, f64::max);
        let last = r.last().expect("at least one sample");
        SimulationReport {
            run: self.summary.clone(),
            energy_drift: r.iter().map(|x| (x.energy - e0).abs()).fold(0.0, f64::max) / e0.abs().max(1e-30),
            sup_norm_ratio: self.summary.sup_norm / self.summary.initial_norm.max(f64::MIN_POSITIVE),
            local_norm_ratio: last.local_norm / max(|x| x.local_norm).max(f64::MIN_POSITIVE),
            h_func_ratio: last.h_func / max(|x| x.h_func).max(f64::MIN_POSITIVE),
            z_ratio: (last.zsq / r[0].zsq.max(f64::MIN_POSITIVE)).sqrt(),
            identity: self.identity,
            monitors: self.monitors.clone(),
            kappa_d: self.coercivity.kappa_d.unwrap_or(f64::NAN),
        }
    }
}

fn state_name(k: usize) -> String {
    format!("state_{k:06}.csv")
}

/// Runs the configured simulation, evaluating the diagnostics at every
/// sample; with `state_dir`, every `state_every`-th sample is written there
/// together with `index.csv`.
pub fn simulate(problem: &Problem, spec: &SpectralData, state_dir: Option<&Path>) -> Result<Simulation> {
    let cfg = &problem.cfg;
    let coercivity = problem.coercivity(spec)?;
    let kappa = coercivity.kappa_d.ok_or_else(|| Error::Regime(coercivity.kappa_d_note.clone().unwrap_or_default()))?;
    let sim = problem.sim_config();
    let model = Model::new(&problem.kink, &problem.drift, &sim)?;
    let ctx = DiagContext::new(&problem.kink, &problem.drift, spec, kappa)?.for_model(&model);
    let init = dynamics::make_initial(&cfg.init, cfg.epsilon, &spec.ybar1)?;
    let mut records = Vec::new();
    let mut index = match (state_dir, cfg.state_every) {
        (Some(d), k) if k > 0 => {
            std::fs::create_dir_all(d)?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(d.join("index.csv"))?);
            writeln!(f, "file,t")?;
            Some((d.to_path_buf(), f))
        }
        _ => None,
    };
    let mut count = 0usize;
    let summary = dynamics::run(init, &model, &sim, |s| {
        records.push(diagnostics::record(&ctx, Some(&model), s)?);
        if let Some((dir, f)) = index.as_mut() {
            if count % cfg.state_every == 0 {
                let name = state_name(count);
                s.write_csv(dir.join(&name))?;
                writeln!(f, "{name},{:.12e}", s.t)?;
            }
        }
        count += 1;
        Ok(())
    })?;
    if let Some((_, mut f)) = index {
        f.flush()?;
    }
    let (identity, monitors) = evaluate_series(&records, cfg, spec.mu, kappa, summary.initial_norm)?;
    Ok(Simulation { summary, records, coercivity, identity, monitors })
}

fn evaluate_series(
    records: &[VirialRecord],
    cfg: &RunConfig,
    mu: f64,
    kappa: f64,
    epsilon: f64,
) -> Result<(Option<IdentityReport>, Option<MonitorReport>)> {
    if records.len() < 8 {
        return Ok((None, None));
    }
    let identity = match cfg.boundary {
        dynamics::Boundary::Dirichlet => Some(diagnostics::check_virial_identity(records)?),
        dynamics::Boundary::Sponge => None,
    };
    Ok((identity, Some(diagnostics::monitor_inequalities(records, mu, kappa, epsilon)?)))
}

/// Reads back the states written by [`simulate`].
pub fn read_states(dir: &Path, grid: Grid) -> Result<Vec<FieldState>> {
    let text = std::fs::read_to_string(dir.join("index.csv"))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let (name, t) = line.split_once(',').ok_or_else(|| Error::Config(format!("bad index line {line:?}")))?;
        let t: f64 = t.trim().parse().map_err(|_| Error::Config(format!("bad time in {line:?}")))?;
        let body = std::fs::read_to_string(dir.join(name))?;
        let mut p1 = Vec::new();
        let mut p2 = Vec::new();
        for row in body.lines().skip(1) {
            let cols: Vec<&str> = row.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Config(format!("{name}: expected 3 columns")));
            }
            let v = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("{name}: bad number {s:?}")));
            p1.push(v(cols[1])?);
            p2.push(v(cols[2])?);
        }
        out.push(FieldState { t, phi1: GridFn::new(grid, p1)?, phi2: GridFn::new(grid, p2)? });
    }
    Ok(out)
}

/// Diagnostics recomputed from a saved trajectory.
#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub records: Vec<VirialRecord>,
    pub identity: Option<IdentityReport>,
    pub monitors: Option<MonitorReport>,
    pub kappa_d: f64,
}

pub fn diagnose(problem: &Problem, spec: &SpectralData, states: &[FieldState]) -> Result<Diagnosis> {
    let coercivity = problem.coercivity(spec)?;
    let kappa = coercivity.kappa_d.ok_or_else(|| Error::Regime(coercivity.kappa_d_note.clone().unwrap_or_default()))?;
    let model = Model::new(&problem.kink, &problem.drift, &problem.sim_config())?;
    let ctx = DiagContext::new(&problem.kink, &problem.drift, spec, kappa)?.for_model(&model);
    let records = states.iter().map(|s| diagnostics::record(&ctx, Some(&model), s)).collect::<Result<Vec<_>>>()?;
    let eps = states.first().map_or(0.0, |s| s.norm());
    let (identity, monitors) = evaluate_series(&records, &problem.cfg, spec.mu, kappa, eps)?;
    Ok(Diagnosis { records, identity, monitors, kappa_d: kappa })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub half_length: f64,
    pub h: f64,
    pub a: f64,
    pub a_reference: f64,
    pub a_difference: f64,
    pub a_tolerance: f64,
    pub psi_f_imk: f64,
    pub psi_f_imk_reference: f64,
    pub psi_f_imk_difference: f64,
    pub psi_f_imk_tolerance: f64,
    pub pass: bool,
}

/// `a` and `⟨ψ'f, Im k⟩` of the constant-speed problem on `[-L, L]`.
pub fn reproduce_constants(half_length: f64, h: f64) -> Result<ConstantsReport> {
    let g = Grid::symmetric(half_length, h)?;
    let (f, fp) = spectral::constant_speed_f(g)?;
    let GoldenRule { a, psi_f_imk, .. } = spectral::golden_rule_constants(&f, &fp, &DriftProfile::zero(g))?;
    let da = (a - A_REFERENCE).abs();
    let dd = (psi_f_imk - DENOMINATOR_REFERENCE).abs();
    Ok(ConstantsReport {
        half_length,
        h,
        a,
        a_reference: A_REFERENCE,
        a_difference: da,
        a_tolerance: A_TOLERANCE,
        psi_f_imk,
        psi_f_imk_reference: DENOMINATOR_REFERENCE,
        psi_f_imk_difference: dd,
        psi_f_imk_tolerance: DENOMINATOR_TOLERANCE,
        pass: da <= A_TOLERANCE && dd <= DENOMINATOR_TOLERANCE,
    })
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub a0: f64,
    pub kappa_b: f64,
    pub kappa_d: f64,
    pub time_integral: f64,
    pub sup_norm_ratio: f64,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: &str = "value,lambda0,lambda1,a0,kappa_B,kappa_D,time_integral,sup_norm_ratio,error";

pub fn sweep_job(template: &RunConfig, axis: &str, value: f64) -> SweepRow {
    let mut row = SweepRow {
        value,
        lambda0: f64::NAN,
        lambda1: f64::NAN,
        a0: f64::NAN,
        kappa_b: f64::NAN,
        kappa_d: f64::NAN,
        time_integral: f64::NAN,
        sup_norm_ratio: f64::NAN,
        error: None,
    };
    let result = (|| -> Result<()> {
        let mut cfg = template.clone();
        cfg.set(axis, &format!("{value}"))?;
        let problem = Problem::build(&cfg)?;
        let spec = problem.spectral(false)?;
        row.lambda0 = spec.lambda0;
        row.lambda1 = spec.lambda1;
        row.a0 = spec.rule.a0;
        if cfg.t_final > 0.0 {
            let sim = simulate(&problem, &spec, None)?;
            row.kappa_b = sim.coercivity.kappa_b;
            row.kappa_d = sim.coercivity.kappa_d.unwrap_or(f64::NAN);
            row.time_integral = sim.monitors.as_ref().map_or(f64::NAN, |m| m.time_integral);
            row.sup_norm_ratio = sim.summary.sup_norm / sim.summary.initial_norm.max(f64::MIN_POSITIVE);
        } else {
            let c = problem.coercivity(&spec)?;
            row.kappa_b = c.kappa_b;
            row.kappa_d = c.kappa_d.unwrap_or(f64::NAN);
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

/// Independent jobs, one per value, run concurrently; failures are kept
/// per row.
pub fn sweep(template: &RunConfig, axis: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    const NUMERIC: [&str; 8] = ["delta", "L", "h", "epsilon", "T", "dt", "sponge_width", "tol"];
    if !NUMERIC.contains(&axis) {
        return Err(Error::Config(format!("sweep axis {axis:?} is not a numeric key; use one of {}", NUMERIC.join(", "))));
    }
    Ok(values.par_iter().map(|&v| sweep_job(template, axis, v)).collect())
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{SWEEP_HEADER}")?;
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            f,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{err}",
            r.value, r.lambda0, r.lambda1, r.a0, r.kappa_b, r.kappa_d, r.time_integral, r.sup_norm_ratio
        )?;
    }
    Ok(())
}

pub fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Where each reported quantity comes from.
pub fn citations() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("kink", "fixed point of the Green's-operator map for H_delta = K - H"),
        ("lambda0", "even shooting functional U'(0) = 0, bisection"),
        ("lambda1", "odd shooting functional V(0) = 0, bisection"),
        ("oracle", "Sturm bisection on the symmetric tridiagonal sqrt(p) L_K (1/sqrt(p))"),
        ("a", "golden-rule constant, constant speed: <Im k, psi f' + (a + 1/2) psi' f> = 0"),
        ("a0", "golden-rule constant with drift: <Im k, (psi fbar' + (a0 + 1/2) psi' fbar)/p> = 0"),
        ("psi_f_imk", "denominator <psi' f, Im k> of the constant-speed golden rule"),
        ("hbar", "resolvent of (L - 6) plus the Re k / Im k Fredholm correction"),
        ("energy", "conserved energy of the perturbation, p-weighted"),
        ("I_J", "virial functionals I, J and the identity d(I+J)/dt = -Dtilde + R"),
        ("K_func", "Lyapunov-type combination (kappa/4mu) alpha beta - (I + J) + 2 sigma <theta v1, v2>"),
        ("kappa_B", "lowest Rayleigh quotient of Btilde over odd v orthogonal to Ybar1"),
        ("kappa_D", "lowest Rayleigh quotient of Dtilde over (v, alpha), v orthogonal to Ybar1"),
        ("time_integral", "integral of |z|^4 + weighted H1 x L2 norm of v"),
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config: RunConfig,
    pub artifacts: Vec<Artifact>,
    pub wall_times: BTreeMap<String, f64>,
    pub citations: BTreeMap<&'static str, &'static str>,
}

/// Collects wall-times while a command runs and writes `manifest.json` with
/// checksums of everything else in the output directory.
#[derive(Debug)]
pub struct ManifestBuilder {
    command: String,
    config: RunConfig,
    wall_times: BTreeMap<String, f64>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        ManifestBuilder { command: command.into(), config: config.clone(), wall_times: BTreeMap::new() }
    }

    pub fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        *self.wall_times.entry(label.into()).or_default() += t0.elapsed().as_secs_f64();
        out
    }

    pub fn finish(self, dir: &Path) -> Result<Manifest> {
        let mut files = Vec::new();
        collect_files(dir, dir, &mut files)?;
        files.sort();
        let mut artifacts = Vec::new();
        for rel in files {
            if rel == Path::new("manifest.json") {
                continue;
            }
            let bytes = std::fs::read(dir.join(&rel))?;
            artifacts.push(Artifact {
                file: rel.to_string_lossy().replace('\\', "/"),
                sha256: format!("{:x}", Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            });
        }
        let m = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: self.config,
            artifacts,
            wall_times: self.wall_times,
            citations: citations(),
        };
        write_json(&m, &dir.join("manifest.json"))?;
        Ok(m)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("inside root").to_path_buf());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.h = 0.02;
        c.t_final = 2.0;
        c
    }

    #[test]
    fn constants_on_default_grid() {
        let r = reproduce_constants(40.0, 0.005).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn sweep_rows_and_failures() {
        let rows = sweep(&small(), "delta", &[0.01, 0.09]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].error.is_none(), "{:?}", rows[0]);
        assert!(rows[1].error.is_some());
        assert!(sweep(&small(), "delta", &[]).unwrap().is_empty());
        assert!(matches!(sweep(&small(), "init", &[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn states_round_trip_and_manifest() {
        let mut cfg = small();
        cfg.state_every = 4;
        let dir = tempfile::tempdir().unwrap();
        let p = Problem::build(&cfg).unwrap();
        let spec = p.spectral(false).unwrap();
        let mut mb = ManifestBuilder::new("simulate", &cfg);
        let sim = mb.time("simulate", || simulate(&p, &spec, Some(&dir.path().join("states")))).unwrap();
        let states = read_states(&dir.path().join("states"), *p.grid()).unwrap();
        assert_eq!(states.len(), sim.records.len().div_ceil(4));
        let d = diagnose(&p, &spec, &states).unwrap();
        assert!((d.records[1].i_func - sim.records[4].i_func).abs() <= 1e-9 * sim.records[4].i_func.abs().max(1e-30));
        let m = mb.finish(dir.path()).unwrap();
        assert!(m.artifacts.iter().any(|a| a.file == "states/index.csv" && a.sha256.len() == 64));
        assert!(dir.path().join("manifest.json").exists());
    }
}

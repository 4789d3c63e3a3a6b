use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinklab::config::RunConfig;
use kinklab::diagnostics::{self, coercivity_for};
use kinklab::pipeline::{self, ManifestBuilder, Problem};
use kinklab::profiles::{self, SPECIAL_NAMES};
use kinklab::{spectral, Error, Grid, GridFn, Result};
use serde::Serialize;

/// Variable-speed phi^4 kink laboratory.
#[derive(Parser)]
#[command(name = "kinklab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary kink.
    Kink {
        #[command(subcommand)]
        action: KinkAction,
    },
    /// Eigenvalues, eigenfunctions and golden-rule constants.
    Spectrum {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Skip the matrix oracle.
        #[arg(long)]
        no_oracle: bool,
    },
    /// Constant-speed golden-rule constants against their reference values.
    Constants {
        #[arg(long = "L", default_value_t = 40.0)]
        half_length: f64,
        #[arg(long, default_value_t = 0.005)]
        h: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Perturbed-kink simulation with per-sample diagnostics.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Decomposition and monitors on a saved trajectory.
    Diagnose {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory with `index.csv` and the state files.
        #[arg(long)]
        states: PathBuf,
    },
    /// Coercivity constants of the virial forms.
    Coercivity {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// One job per value of a numeric key.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        axis: String,
        /// Comma-separated values; may be empty.
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        values: String,
    },
    /// Closed-form profiles.
    Profiles {
        #[command(subcommand)]
        action: ProfilesAction,
    },
}

#[derive(Subcommand)]
enum KinkAction {
    Build {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Subcommand)]
enum ProfilesAction {
    Dump {
        #[arg(long = "L", default_value_t = 40.0)]
        half_length: f64,
        #[arg(long, default_value_t = 0.005)]
        h: f64,
        /// Comma-separated names; all by default.
        #[arg(long)]
        names: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Configuration: defaults, then `--config`, then `--set` pairs and the
/// named flags. Flag names are the config keys.
#[derive(Args, Default)]
struct ConfigArgs {
    /// `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long = "speed_profile")]
    speed_profile: Option<String>,
    #[arg(long = "L")]
    half_length: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    init: Option<String>,
    #[arg(long = "T")]
    t_final: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    boundary: Option<String>,
    #[arg(long = "sponge_width")]
    sponge_width: Option<String>,
    #[arg(long = "sample_every")]
    sample_every: Option<String>,
    #[arg(long = "state_every")]
    state_every: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    tol: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut pairs = Vec::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got {s:?}")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let named = [
            ("delta", &self.delta),
            ("family", &self.family),
            ("speed_profile", &self.speed_profile),
            ("L", &self.half_length),
            ("h", &self.h),
            ("epsilon", &self.epsilon),
            ("init", &self.init),
            ("T", &self.t_final),
            ("dt", &self.dt),
            ("boundary", &self.boundary),
            ("sponge_width", &self.sponge_width),
            ("sample_every", &self.sample_every),
            ("state_every", &self.state_every),
            ("out", &self.out),
            ("seed", &self.seed),
            ("tol", &self.tol),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        }
        RunConfig::load(self.config.as_deref(), &pairs)
    }
}

fn out_dir(path: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(path)?;
    Ok(path.to_path_buf())
}

fn write_columns(path: &Path, header: &str, cols: &[&GridFn]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{header}")?;
    let g = cols[0].grid();
    for i in 0..g.len() {
        write!(w, "{:.16e}", g.node(i))?;
        for c in cols {
            write!(w, ",{:.16e}", c.at(i))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn kink_build(cfg: RunConfig) -> Result<()> {
    let dir = out_dir(&cfg.out)?;
    let mut m = ManifestBuilder::new("kink build", &cfg);
    let p = m.time("kink", || Problem::build(&cfg))?;
    let k = &p.kink;
    write_columns(&dir.join("kink.csv"), "y,K,Kprime,H_delta,H_delta_prime", &[&k.k, &k.k_prime, &k.h_delta, &k.h_delta_prime])?;
    write_columns(&dir.join("drift.csv"), "y,b,bprime,p", &[&p.drift.b, &p.drift.b_prime, &p.drift.p])?;
    let report = k.report(cfg.delta);
    pipeline::write_json(&report, &dir.join("kink.json"))?;
    m.finish(&dir)?;
    println!("kink: residual {:.3e}, decay constant {:.4}, {} iterations", report.residual, report.decay_constant, report.iterations);
    Ok(())
}

fn spectrum(cfg: RunConfig, oracle: bool) -> Result<()> {
    let dir = out_dir(&cfg.out)?;
    let mut m = ManifestBuilder::new("spectrum", &cfg);
    let p = m.time("kink", || Problem::build(&cfg))?;
    let s = m.time("spectrum", || p.spectral(oracle))?;
    let summary = s.summary(&p.drift.p)?;
    pipeline::write_json(&summary, &dir.join("spectral.json"))?;
    spectral::write_csvs(&s, &dir)?;
    m.finish(&dir)?;
    println!("lambda0 = {:.10e}", s.lambda0);
    println!("lambda1 = {:.10}", s.lambda1);
    println!("a = {:.7}, a0 = {:.7}", s.rule.a, s.rule.a0);
    if oracle {
        println!("oracle gap = {:.3e}", s.oracle_gap);
    }
    Ok(())
}

fn constants(half_length: f64, h: f64, out: PathBuf) -> Result<()> {
    let cfg = RunConfig { half_length, h, delta: 0.0, out: out.clone(), ..RunConfig::default() };
    let dir = out_dir(&out)?;
    let mut m = ManifestBuilder::new("constants", &cfg);
    let r = m.time("constants", || pipeline::reproduce_constants(half_length, h))?;
    pipeline::write_json(&r, &dir.join("constants.json"))?;
    m.finish(&dir)?;
    println!("a              = {:.7}  reference {}  difference {:.3e}  tolerance {:.0e}", r.a, r.a_reference, r.a_difference, r.a_tolerance);
    println!(
        "<psi' f, Im k> = {:.6}  reference {}  difference {:.3e}  tolerance {:.0e}",
        r.psi_f_imk, r.psi_f_imk_reference, r.psi_f_imk_difference, r.psi_f_imk_tolerance
    );
    if !r.pass {
        return Err(Error::Tolerance("constants outside tolerance".into()));
    }
    Ok(())
}

fn simulate(cfg: RunConfig) -> Result<()> {
    let dir = out_dir(&cfg.out)?;
    let mut m = ManifestBuilder::new("simulate", &cfg);
    let p = m.time("kink", || Problem::build(&cfg))?;
    let s = m.time("spectrum", || p.spectral(false))?;
    let states = dir.join("states");
    let sim = m.time("simulate", || pipeline::simulate(&p, &s, (cfg.state_every > 0).then_some(states.as_path())))?;
    diagnostics::write_timeseries(&sim.records, dir.join("timeseries.csv"))?;
    let report = sim.report();
    pipeline::write_json(&report, &dir.join("summary.json"))?;
    pipeline::write_json(&sim.coercivity, &dir.join("coercivity.json"))?;
    m.finish(&dir)?;
    println!(
        "steps {}, energy drift {:.3e}, sup norm ratio {:.3}, local norm ratio {:.3}",
        report.run.steps, report.energy_drift, report.sup_norm_ratio, report.local_norm_ratio
    );
    if let Some(id) = report.identity {
        println!("virial identity max relative defect {:.3e}", id.max_relative_defect);
    }
    if let Some(mr) = &report.monitors {
        println!("time integral {:.6e}", mr.time_integral);
    }
    Ok(())
}

fn diagnose(cfg: RunConfig, states: PathBuf) -> Result<()> {
    let dir = out_dir(&cfg.out)?;
    let mut m = ManifestBuilder::new("diagnose", &cfg);
    let p = m.time("kink", || Problem::build(&cfg))?;
    let s = m.time("spectrum", || p.spectral(false))?;
    let fields = pipeline::read_states(&states, *p.grid())?;
    let d = m.time("diagnose", || pipeline::diagnose(&p, &s, &fields))?;
    diagnostics::write_timeseries(&d.records, dir.join("diagnose_timeseries.csv"))?;
    #[derive(Serialize)]
    struct Out<'a> {
        states: usize,
        kappa_d: f64,
        identity: Option<diagnostics::IdentityReport>,
        monitors: Option<&'a diagnostics::MonitorReport>,
    }
    let out = Out { states: fields.len(), kappa_d: d.kappa_d, identity: d.identity, monitors: d.monitors.as_ref() };
    pipeline::write_json(&out, &dir.join("diagnosis.json"))?;
    m.finish(&dir)?;
    println!("{} states diagnosed", fields.len());
    Ok(())
}

fn coercivity(cfg: RunConfig) -> Result<()> {
    let dir = out_dir(&cfg.out)?;
    let mut m = ManifestBuilder::new("coercivity", &cfg);
    let p = m.time("kink", || Problem::build(&cfg))?;
    let r = m.time("coercivity", || coercivity_for(&p.kink, &p.drift, cfg.seed))?;
    pipeline::write_json(&r, &dir.join("coercivity.json"))?;
    m.finish(&dir)?;
    println!("kappa_B = {:.6}", r.kappa_b);
    match r.kappa_d {
        Some(k) => println!("kappa_D = {k:.6}"),
        None => println!("kappa_D unavailable: {}", r.kappa_d_note.as_deref().unwrap_or("")),
    }
    Ok(())
}

fn sweep(cfg: RunConfig, axis: String, values: String) -> Result<()> {
    let vals = values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::Config(format!("sweep value {s:?} is not a number"))))
        .collect::<Result<Vec<_>>>()?;
    let dir = out_dir(&cfg.out)?;
    let mut m = ManifestBuilder::new("sweep", &cfg);
    let rows = m.time("sweep", || pipeline::sweep(&cfg, &axis, &vals))?;
    pipeline::write_sweep(&rows, &dir.join("summary.csv"))?;
    m.finish(&dir)?;
    for r in &rows {
        match &r.error {
            Some(e) => println!("{axis} = {}: failed: {e}", r.value),
            None => println!("{axis} = {}: lambda0 {:.4e}, lambda1 {:.6}, kappa_D {:.4e}", r.value, r.lambda0, r.lambda1, r.kappa_d),
        }
    }
    Ok(())
}

fn profiles_dump(half_length: f64, h: f64, names: Option<String>, out: PathBuf) -> Result<()> {
    let grid = Grid::symmetric(half_length, h)?;
    let names: Vec<String> = match names {
        Some(n) => n.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => SPECIAL_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    let funcs = names.iter().map(|n| profiles::special(n, grid)).collect::<Result<Vec<_>>>()?;
    let cfg = RunConfig { half_length, h, out: out.clone(), ..RunConfig::default() };
    let dir = out_dir(&out)?;
    let m = ManifestBuilder::new("profiles dump", &cfg);
    for (n, f) in names.iter().zip(&funcs) {
        f.write_csv(dir.join(format!("{n}.csv")))?;
    }
    m.finish(&dir)?;
    println!("wrote {} profiles", names.len());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Kink { action: KinkAction::Build { cfg } } => kink_build(cfg.load()?),
        Command::Spectrum { cfg, no_oracle } => spectrum(cfg.load()?, !no_oracle),
        Command::Constants { half_length, h, out } => constants(half_length, h, out),
        Command::Simulate { cfg } => simulate(cfg.load()?),
        Command::Diagnose { cfg, states } => diagnose(cfg.load()?, states),
        Command::Coercivity { cfg } => coercivity(cfg.load()?),
        Command::Sweep { cfg, axis, values } => sweep(cfg.load()?, axis, values),
        Command::Profiles { action: ProfilesAction::Dump { half_length, h, names, out } } => {
            profiles_dump(half_length, h, names, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Time evolution of the odd perturbation `φ = (φ₁, φ₂)` of the kink:
//!
//! ```text
//! ∂_t φ₁ = φ₂
//! ∂_t φ₂ = -𝓛_K φ₁ - (3Kφ₁² + φ₁³)
//! ```
//!
//! `𝓛_K = -(1/p)∂(p∂) - 1 + 3K²` is discretized in conservative form,
//! `-(p_{i+½}(φ_{i+1} - φ_i) - p_{i-½}(φ_i - φ_{i-1})) / (h² p_i)`, which is
//! symmetric in the discrete `p`-weighted inner product; together with the
//! kick-drift-kick leapfrog this keeps the energy bounded without drift.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Grid, GridFn, Parity};
use crate::kink::KinkProfile;
use crate::profiles::DriftProfile;

pub const DEFAULT_DT_FACTOR: f64 = 0.4;
pub const CFL_LIMIT: f64 = 0.9;
pub const DEFAULT_SPONGE_WIDTH: f64 = 10.0;
pub const DEFAULT_SPONGE_STRENGTH: f64 = 1.0;
const BLOWUP_FACTOR: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct FieldState {
    pub t: f64,
    pub phi1: GridFn,
    pub phi2: GridFn,
}

impl FieldState {
    pub fn zero(grid: Grid) -> Self {
        FieldState { t: 0.0, phi1: GridFn::zeros(grid).tagged(Parity::Odd), phi2: GridFn::zeros(grid).tagged(Parity::Odd) }
    }

    pub fn grid(&self) -> &Grid {
        self.phi1.grid()
    }

    /// `(‖φ₁‖²_{H¹} + ‖φ₂‖²_{L²})^{1/2}`.
    pub fn norm(&self) -> f64 {
        let g = self.grid();
        let d = grid::derivative4(self.phi1.values(), g.h());
        let v: Vec<f64> = (0..g.len())
            .map(|i| d[i] * d[i] + self.phi1.at(i).powi(2) + self.phi2.at(i).powi(2))
            .collect();
        grid::simpson(&v, g.h()).max(0.0).sqrt()
    }

    /// The same norm restricted to `|y| ≤ r`.
    pub fn local_norm(&self, r: f64) -> f64 {
        let g = self.grid();
        let d = grid::derivative4(self.phi1.values(), g.h());
        let v: Vec<f64> = (0..g.len())
            .map(|i| {
                if g.node(i).abs() <= r + 1e-12 {
                    d[i] * d[i] + self.phi1.at(i).powi(2) + self.phi2.at(i).powi(2)
                } else {
                    0.0
                }
            })
            .collect();
        grid::simpson(&v, g.h()).max(0.0).sqrt()
    }

    /// Largest parity residual of the two components.
    pub fn odd_residual(&self) -> f64 {
        self.phi1.parity_residual(Parity::Odd).max(self.phi2.parity_residual(Parity::Odd))
    }

    /// CSV with columns `y,phi1,phi2`.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "y,phi1,phi2")?;
        let g = self.grid();
        for i in 0..g.len() {
            writeln!(w, "{:.10e},{:.16e},{:.16e}", g.node(i), self.phi1.at(i), self.phi2.at(i))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Sponge,
}

impl FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(Boundary::Dirichlet),
            "sponge" => Ok(Boundary::Sponge),
            _ => Err(Error::Config(format!("boundary = {s:?}; expected dirichlet or sponge"))),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Dirichlet => "dirichlet",
            Boundary::Sponge => "sponge",
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub boundary: Boundary,
    pub sponge_width: f64,
    /// Peak damping rate at the outer edge of the sponge.
    pub sponge_strength: f64,
    pub sample_every: usize,
    /// Test hook: `false` drops `3Kφ₁² + φ₁³`.
    pub nonlinear: bool,
}

impl SimConfig {
    pub fn new(grid: &Grid, t_final: f64, boundary: Boundary) -> Self {
        SimConfig {
            dt: DEFAULT_DT_FACTOR * grid.h(),
            t_final,
            boundary,
            sponge_width: DEFAULT_SPONGE_WIDTH,
            sponge_strength: DEFAULT_SPONGE_STRENGTH,
            sample_every: 10,
            nonlinear: true,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= CFL_LIMIT * grid.h()) {
            return Err(Error::Config(format!(
                "dt = {} violates CFL: need 0 < dt <= {} (0.9 h)",
                self.dt,
                CFL_LIMIT * grid.h()
            )));
        }
        if !(self.t_final >= 0.0) {
            return Err(Error::Config(format!("T = {} must be >= 0", self.t_final)));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be >= 1".into()));
        }
        if self.boundary == Boundary::Sponge && !(self.sponge_width > 0.0 && self.sponge_width < grid.half_length()) {
            return Err(Error::Config(format!("sponge_width = {} outside (0, L)", self.sponge_width)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Precomputed discrete operator.
#[derive(Debug, Clone)]
pub struct Model {
    grid: Grid,
    k: Vec<f64>,
    p: Vec<f64>,
    cp: Vec<f64>,
    cm: Vec<f64>,
    diag: Vec<f64>,
    /// Per-step velocity multiplier (1 outside the sponge).
    mask: Vec<f64>,
    /// Damping rate `σ(y)` the mask applies, `φ̇₂ = ... - σφ₂`.
    damping: Vec<f64>,
    nonlinear: bool,
}

impl Model {
    pub fn new(kink: &KinkProfile, drift: &DriftProfile, cfg: &SimConfig) -> Result<Self> {
        let g = *drift.grid();
        cfg.validate(&g)?;
        let n = g.len();
        let h2 = g.h() * g.h();
        let p = drift.p.values().to_vec();
        let k = kink.k.values().to_vec();
        let mut cp = vec![0.0; n];
        let mut cm = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for i in 1..n - 1 {
            let pp = 0.5 * (p[i] + p[i + 1]);
            let pm = 0.5 * (p[i] + p[i - 1]);
            cp[i] = pp / (h2 * p[i]);
            cm[i] = pm / (h2 * p[i]);
            diag[i] = cp[i] + cm[i] + 3.0 * k[i] * k[i] - 1.0;
        }
        let damping: Vec<f64> = (0..n)
            .map(|i| match cfg.boundary {
                Boundary::Dirichlet => 0.0,
                Boundary::Sponge => {
                    let depth = g.node(i).abs() - (g.half_length() - cfg.sponge_width);
                    if depth <= 0.0 {
                        0.0
                    } else {
                        cfg.sponge_strength * 0.5 * (1.0 - (PI * depth / cfg.sponge_width).cos())
                    }
                }
            })
            .collect();
        let mask = damping.iter().map(|s| (-cfg.dt * s).exp()).collect();
        Ok(Model { grid: g, k, p, cp, cm, diag, mask, damping, nonlinear: cfg.nonlinear })
    }

    /// Discrete `𝓛_K φ` (zero at the end nodes).
    pub fn apply(&self, phi: &[f64], out: &mut [f64]) {
        let n = phi.len();
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for i in 1..n - 1 {
            out[i] = self.diag[i] * phi[i] - self.cp[i] * phi[i + 1] - self.cm[i] * phi[i - 1];
        }
    }

    fn acceleration(&self, phi: &[f64], out: &mut [f64]) {
        self.apply(phi, out);
        for i in 0..phi.len() {
            let f = phi[i];
            let nl = if self.nonlinear { f * f * (3.0 * self.k[i] + f) } else { 0.0 };
            out[i] = -out[i] - nl;
        }
    }

    /// `𝓔 = ∫pφ₂² + ⟨𝓛_Kφ₁, φ₁⟩_p + 2∫pKφ₁³ + ½∫pφ₁⁴` with the discrete
    /// operator and the rectangle rule (the pairing the scheme conserves).
    pub fn energy(&self, s: &FieldState) -> f64 {
        let phi = s.phi1.values();
        let v = s.phi2.values();
        let n = phi.len();
        let mut lphi = vec![0.0; n];
        self.apply(phi, &mut lphi);
        let mut e = 0.0;
        for i in 1..n - 1 {
            let f = phi[i];
            let nl = if self.nonlinear { 2.0 * self.k[i] * f * f * f + 0.5 * f.powi(4) } else { 0.0 };
            e += self.p[i] * (v[i] * v[i] + f * lphi[i] + nl);
        }
        e * self.grid.h()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    pub fn nonlinear(&self) -> bool {
        self.nonlinear
    }
}

/// Integrator state with the cached acceleration.
pub struct Stepper<'a> {
    model: &'a Model,
    dt: f64,
    acc: Vec<f64>,
    pub state: FieldState,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a Model, dt: f64, state: FieldState) -> Self {
        let mut acc = vec![0.0; state.phi1.len()];
        model.acceleration(state.phi1.values(), &mut acc);
        Stepper { model, dt, acc, state }
    }

    /// One kick-drift-kick step, then the sponge mask on `φ₂`.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        let n = self.acc.len();
        {
            let v = self.state.phi2.values_mut();
            for i in 0..n {
                v[i] += 0.5 * dt * self.acc[i];
            }
        }
        {
            let v = self.state.phi2.values().to_vec();
            let f = self.state.phi1.values_mut();
            for i in 1..n - 1 {
                f[i] += dt * v[i];
            }
        }
        self.model.acceleration(self.state.phi1.values(), &mut self.acc);
        {
            let v = self.state.phi2.values_mut();
            for i in 0..n {
                v[i] = (v[i] + 0.5 * dt * self.acc[i]) * self.model.mask[i];
            }
            v[0] = 0.0;
            v[n - 1] = 0.0;
        }
        self.state.t += dt;
        let bad = self.state.phi1.values().iter().chain(self.state.phi2.values()).any(|v| !v.is_finite());
        if bad {
            return Err(Error::Aborted { t: self.state.t, reason: "non-finite state".into() });
        }
        Ok(())
    }
}

/// Summary of a completed run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub t_final: f64,
    pub initial_norm: f64,
    pub sup_norm: f64,
    pub final_norm: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub max_odd_residual: f64,
    #[serde(skip)]
    pub final_state: Option<FieldState>,
}

/// Advance `init` to `cfg.t_final`, calling `observer` at `t = 0` and every
/// `sample_every` steps (and at the final step).
pub fn run(
    init: FieldState,
    model: &Model,
    cfg: &SimConfig,
    mut observer: impl FnMut(&FieldState) -> Result<()>,
) -> Result<RunSummary> {
    let initial_norm = init.norm();
    let initial_energy = model.energy(&init);
    let steps = cfg.steps();
    let mut st = Stepper::new(model, cfg.dt, init);
    observer(&st.state)?;
    let mut sup_norm = initial_norm;
    let mut max_odd = st.state.odd_residual();
    for k in 1..=steps {
        st.step()?;
        if k % cfg.sample_every == 0 || k == steps {
            let nrm = st.state.norm();
            sup_norm = sup_norm.max(nrm);
            max_odd = max_odd.max(st.state.odd_residual());
            if initial_norm > 0.0 && nrm > BLOWUP_FACTOR * initial_norm {
                return Err(Error::Aborted { t: st.state.t, reason: format!("norm {nrm:.3e} left the stability regime") });
            }
            observer(&st.state)?;
        }
    }
    let final_norm = st.state.norm();
    let final_energy = model.energy(&st.state);
    Ok(RunSummary {
        steps,
        t_final: st.state.t,
        initial_norm,
        sup_norm,
        final_norm,
        initial_energy,
        final_energy,
        max_odd_residual: max_odd,
        final_state: Some(st.state),
    })
}

pub const INITIAL_KINDS: [&str; 3] = ["internal-mode", "radiation", "mixed"];

/// Centre of the radiation bump.
pub const BUMP_CENTER: f64 = 20.0;

fn bump(g: Grid) -> GridFn {
    let y0 = BUMP_CENTER;
    GridFn::from_fn(g, |y| (-(y - y0).powi(2)).exp() - (-(y + y0).powi(2)).exp()).symmetrized(Parity::Odd)
}

fn h1_norm(f: &GridFn) -> f64 {
    FieldState { t: 0.0, phi1: f.clone(), phi2: GridFn::zeros(*f.grid()) }.norm()
}

/// Odd initial data.
///
/// * `internal-mode`: `(εȲ₁, 0)`, so that `z₁(0) = ε`;
/// * `radiation`: odd Gaussian pair at `±20`, scaled to `‖·‖_{H¹×L²} = ε`;
/// * `mixed`: equal-norm sum of the two, scaled to `‖·‖_{H¹×L²} = ε`.
pub fn make_initial(kind: &str, epsilon: f64, ybar1: &GridFn) -> Result<FieldState> {
    if !(0.0..=0.05).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon = {epsilon} outside admissible range [0, 0.05]")));
    }
    let g = *ybar1.grid();
    let phi1 = match kind {
        "internal-mode" => ybar1.scale(epsilon),
        "radiation" => {
            let b = bump(g);
            b.scale(epsilon / h1_norm(&b))
        }
        "mixed" => {
            let b = bump(g);
            let m = ybar1.scale(1.0 / h1_norm(ybar1)).add(&b.scale(1.0 / h1_norm(&b)));
            m.scale(epsilon / h1_norm(&m).max(f64::MIN_POSITIVE))
        }
        _ => {
            return Err(Error::UnknownName(format!("initial kind {kind:?}; known: {}", INITIAL_KINDS.join(", "))))
        }
    };
    Ok(FieldState { t: 0.0, phi1: phi1.symmetrized(Parity::Odd), phi2: GridFn::zeros(g).tagged(Parity::Odd) })
}

//! Decomposition of the perturbation along `Ȳ₁`, virial functionals, the
//! virial identity, the decay monitors and the coercivity constants.
//!
//! With `z₁ = ⟨φ₁,Ȳ₁⟩_p`, `z₂ = ⟨φ₂,Ȳ₁⟩_p/μ`, `u = φ - (z₁, μz₂)Ȳ₁` and
//! `v₁ = u₁ + |z|²q`, `v₂ = u₂`, the remainder obeys
//!
//! ```text
//! v̇₁ = v₂ + F₁,   v̇₂ = -𝓛_K v₁ - α f̄ + F₂,
//! α̇ = 2μβ + F_α,  β̇ = -2μα + F_β.
//! ```
//!
//! On `[-L, L]` with `v(±L) = 0` the virial identity picks up the boundary
//! terms `ψ(L) v₁'(L)² + 2α p(L) h̄(L) v₁'(L)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{FieldState, Model};
use crate::error::{Error, Result};
use crate::grid::{self, Grid, GridFn, Parity};
use crate::kink::KinkProfile;
use crate::profiles::{closed, DriftProfile};
use crate::spectral::{self, SpectralData};

pub const DEFAULT_SEED: u64 = 0x5EED;
pub const ORTHOGONALITY_FLAG: f64 = 1e-6;
/// Half-width of the interval `I` for the local norm.
pub const LOCAL_RADIUS: f64 = 10.0;

/// Profiles the diagnostics evaluate against, on the simulation grid.
#[derive(Debug, Clone)]
pub struct DiagContext {
    grid: Grid,
    p: Vec<f64>,
    b: Vec<f64>,
    k: Vec<f64>,
    kp: Vec<f64>,
    ybar1: GridFn,
    mu: f64,
    q: Vec<f64>,
    qp: Vec<f64>,
    fbar: Vec<f64>,
    gbar: Vec<f64>,
    a0: f64,
    p_hbar_end: f64,
    psi: Vec<f64>,
    psip: Vec<f64>,
    psippp: Vec<f64>,
    psib_prime: Vec<f64>,
    theta: Vec<f64>,
    /// `κ` in `𝒦`; `σ = κ/100`.
    pub kappa: f64,
    pub nonlinear: bool,
    fbar_gbar: f64,
    /// Sponge damping rate; zero for Dirichlet runs.
    damping: Vec<f64>,
}

impl DiagContext {
    pub fn new(kink: &KinkProfile, drift: &DriftProfile, spec: &SpectralData, kappa: f64) -> Result<Self> {
        let g = *drift.grid();
        let n = g.len();
        let ys = g.nodes();
        let f = |c: fn(f64) -> f64| ys.iter().map(|&y| c(y)).collect::<Vec<f64>>();
        let psi = f(closed::psi);
        let psip = f(closed::psi_prime);
        let psipp = f(closed::psi_second);
        let b = drift.b.values().to_vec();
        let bp = drift.b_prime.values().to_vec();
        let psib_prime = (0..n).map(|i| psipp[i] * b[i] + psip[i] * bp[i]).collect();
        let fbar_gbar = grid::inner(&spec.fbar, &spec.gbar)?;
        Ok(DiagContext {
            grid: g,
            p: drift.p.values().to_vec(),
            b,
            k: kink.k.values().to_vec(),
            kp: kink.k_prime.values().to_vec(),
            ybar1: spec.ybar1.clone(),
            mu: spec.mu,
            q: spec.q.values().to_vec(),
            qp: spec.q_prime.values().to_vec(),
            fbar: spec.fbar.values().to_vec(),
            gbar: spec.gbar.values().to_vec(),
            a0: spec.rule.a0,
            p_hbar_end: drift.p.at(n - 1) * spec.hbar.at(n - 1),
            psi,
            psip,
            psippp: f(closed::psi_third),
            psib_prime,
            theta: f(closed::theta),
            kappa,
            nonlinear: true,
            fbar_gbar,
            damping: vec![0.0; n],
        })
    }

    /// Takes the nonlinearity switch and the sponge profile from `model`.
    pub fn for_model(mut self, model: &Model) -> Self {
        self.damping = model.damping().to_vec();
        self.nonlinear = model.nonlinear();
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sigma(&self) -> f64 {
        self.kappa / 100.0
    }

    fn integrate(&self, v: impl Fn(usize) -> f64) -> f64 {
        let w: Vec<f64> = (0..self.grid.len()).map(v).collect();
        grid::simpson(&w, self.grid.h())
    }

    fn inner_p(&self, a: &[f64], b: &[f64]) -> f64 {
        self.integrate(|i| self.p[i] * a[i] * b[i])
    }
}

#[derive(Debug, Clone)]
pub struct DecompState {
    pub t: f64,
    pub z1: f64,
    pub z2: f64,
    pub u1: GridFn,
    pub u2: GridFn,
    pub v1: GridFn,
    pub v2: GridFn,
    pub alpha: f64,
    pub beta: f64,
    pub zsq: f64,
    pub gamma_prod: f64,
    /// `max(|⟨u₁,Ȳ₁⟩_p|, |⟨u₂,Ȳ₁⟩_p|)`.
    pub orth_residual: f64,
    /// Set when the orthogonality residual exceeds `1e-6`.
    pub flagged: bool,
}

pub fn decompose(ctx: &DiagContext, s: &FieldState) -> Result<DecompState> {
    if s.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let y1 = ctx.ybar1.values();
    let z1 = ctx.inner_p(s.phi1.values(), y1);
    let z2 = ctx.inner_p(s.phi2.values(), y1) / ctx.mu;
    let u1 = s.phi1.axpy(-z1, &ctx.ybar1);
    let u2 = s.phi2.axpy(-ctx.mu * z2, &ctx.ybar1);
    let zsq = z1 * z1 + z2 * z2;
    let v1 = GridFn::new(ctx.grid, (0..ctx.grid.len()).map(|i| u1.at(i) + zsq * ctx.q[i]).collect())?;
    let v2 = u2.clone();
    let orth = ctx.inner_p(u1.values(), y1).abs().max(ctx.inner_p(u2.values(), y1).abs());
    let alpha = z1 * z1 - z2 * z2;
    let beta = 2.0 * z1 * z2;
    Ok(DecompState {
        t: s.t,
        z1,
        z2,
        u1,
        u2,
        v1,
        v2,
        alpha,
        beta,
        zsq,
        gamma_prod: alpha * beta,
        orth_residual: orth,
        flagged: orth > ORTHOGONALITY_FLAG,
    })
}

#[derive(Debug, Clone)]
pub struct Forcing {
    pub f_alpha: f64,
    pub f_beta: f64,
    pub f1: GridFn,
    pub f2: GridFn,
    /// `⟨3Kφ₁² + φ₁³, Ȳ₁⟩_p`.
    pub bracket: f64,
}

pub fn forcing_terms(ctx: &DiagContext, d: &DecompState) -> Result<Forcing> {
    let n = ctx.grid.len();
    if !ctx.nonlinear {
        let z = GridFn::zeros(ctx.grid);
        return Ok(Forcing { f_alpha: 0.0, f_beta: 0.0, f1: z.clone(), f2: z, bracket: 0.0 });
    }
    let y1 = ctx.ybar1.values();
    let u1 = d.u1.values();
    let phi1: Vec<f64> = (0..n).map(|i| u1[i] + d.z1 * y1[i]).collect();
    let nl: Vec<f64> = (0..n).map(|i| phi1[i] * phi1[i] * (3.0 * ctx.k[i] + phi1[i])).collect();
    let bracket = ctx.inner_p(&nl, y1);
    let f_alpha = 2.0 / ctx.mu * d.z2 * bracket;
    let f_beta = -2.0 / ctx.mu * d.z1 * bracket;
    let w: Vec<f64> = (0..n)
        .map(|i| 3.0 * ctx.k[i] * (u1[i] * u1[i] + 2.0 * u1[i] * d.z1 * y1[i]) + phi1[i].powi(3))
        .collect();
    let wp = ctx.inner_p(&w, y1);
    let f2 = GridFn::new(ctx.grid, (0..n).map(|i| -(w[i] - wp * y1[i])).collect())?;
    let f1 = GridFn::new(ctx.grid, ctx.q.iter().map(|q| -q * f_alpha).collect())?;
    Ok(Forcing { f_alpha, f_beta, f1, f2, bracket })
}

/// One sample of the virial time series.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct VirialRecord {
    pub t: f64,
    pub energy: f64,
    pub z1: f64,
    pub z2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub zsq: f64,
    pub i_func: f64,
    pub j_func: f64,
    pub k_func: f64,
    pub h_func: f64,
    pub h1w2: f64,
    pub l2w2: f64,
    pub local_norm: f64,
    pub norm: f64,
    /// `∫ sech(y/2√2) v₁ v₂`.
    pub theta_v1v2: f64,
    /// `‖∂_y(ζ v₁)‖²`.
    pub dzeta2: f64,
    pub b_tilde: f64,
    pub d_tilde: f64,
    pub r_dtilde: f64,
    pub boundary: f64,
    /// Rate of change of `ℐ + 𝒥` caused by the sponge.
    pub sponge: f64,
    pub f_alpha: f64,
    pub f_beta: f64,
    pub orth_residual: f64,
}

impl VirialRecord {
    /// `-D̃ + R_D̃ +` boundary and sponge terms.
    pub fn virial_rhs(&self) -> f64 {
        -self.d_tilde + self.r_dtilde + self.domain_flux()
    }

    /// Contribution of the truncated domain (walls and sponge) to
    /// `d(ℐ + 𝒥)/dt`; absent on the whole line.
    pub fn domain_flux(&self) -> f64 {
        self.boundary + self.sponge
    }
}

pub const TIMESERIES_HEADER: &str = "t,E,z1,z2,alpha,beta,zsq,I,J,K_func,H_func,H1w2,L2w2,local_norm,H1L2_norm,theta_v1v2,dzeta2,B_tilde,D_tilde,R_Dtilde,boundary,sponge,F_alpha,F_beta,orth_residual";

/// `(ℐ, 𝒥, 𝒦, ℋ)` and the remaining per-sample quantities.
pub fn virial_eval(ctx: &DiagContext, d: &DecompState, f: &Forcing) -> VirialRecord {
    let g = ctx.grid;
    let h = g.h();
    let n = g.len();
    let v1 = d.v1.values();
    let v2 = d.v2.values();
    let v1p = grid::derivative4(v1, h);
    let (alpha, beta, mu) = (d.alpha, d.beta, ctx.mu);

    let i_func = ctx.integrate(|i| ctx.psi[i] * v1p[i] * v2[i] + 0.5 * ctx.psip[i] * v1[i] * v2[i]);
    let v2g = ctx.integrate(|i| v2[i] * ctx.gbar[i]);
    let v1g = ctx.integrate(|i| v1[i] * ctx.gbar[i]);
    let j_func = alpha * v2g - 2.0 * mu * beta * v1g;
    let theta_v1v2 = ctx.integrate(|i| ctx.theta[i] * v1[i] * v2[i]);
    let h1w2 = ctx.integrate(|i| ctx.theta[i] * (v1p[i] * v1p[i] + v1[i] * v1[i]));
    let l2w2 = ctx.integrate(|i| ctx.theta[i] * v2[i] * v2[i]);
    let h_func = h1w2 + ctx.integrate(|i| ctx.theta[i] * v1[i] * v1[i]) + l2w2;
    let k_func = ctx.kappa / (4.0 * mu) * d.gamma_prod - (i_func + j_func) + 2.0 * ctx.sigma() * theta_v1v2;

    let zv: Vec<f64> = (0..n).map(|i| closed::zeta(g.node(i)) * v1[i]).collect();
    let zvp = grid::derivative4(&zv, h);
    let dzeta2 = grid::simpson(&zvp.iter().map(|x| x * x).collect::<Vec<_>>(), h);

    let b_tilde = ctx.integrate(|i| {
        ctx.psip[i] * v1p[i] * v1p[i] - 0.25 * ctx.psippp[i] * v1[i] * v1[i] - 3.0 * ctx.psi[i] * ctx.k[i] * ctx.kp[i] * v1[i] * v1[i]
    });
    let d_tilde = b_tilde
        + ctx.integrate(|i| {
            -ctx.psi[i] * ctx.b[i] * v1p[i] * v1p[i]
                + 0.25 * ctx.psib_prime[i] * v1[i] * v1[i]
                + ctx.a0 * alpha * ctx.psip[i] * ctx.fbar[i] * v1[i]
        })
        + alpha * alpha * ctx.fbar_gbar;

    let f1 = f.f1.values();
    let f2 = f.f2.values();
    let f2p = grid::derivative4(f2, h);
    let r_dtilde = ctx.integrate(|i| {
        let f1p = -ctx.qp[i] * f.f_alpha;
        ctx.gbar[i] * (alpha * f2[i] - 2.0 * mu * beta * f1[i])
            + v2[i] * (ctx.psi[i] * f1p + 0.5 * ctx.psip[i] * f1[i] + ctx.gbar[i] * f.f_alpha)
            - v1[i] * (ctx.psi[i] * f2p[i] + 0.5 * ctx.psip[i] * f2[i] + 2.0 * mu * ctx.gbar[i] * f.f_beta)
    });
    let vl = v1p[n - 1];
    let boundary = ctx.psi[n - 1] * vl * vl + 2.0 * alpha * ctx.p_hbar_end * vl;
    let phi2 = d.u2.values().iter().zip(ctx.ybar1.values()).map(|(u, y)| u + mu * d.z2 * y).collect::<Vec<_>>();
    let sponge = if ctx.damping.iter().any(|s| *s != 0.0) {
        -ctx.integrate(|i| {
            ctx.damping[i] * phi2[i] * (ctx.psi[i] * v1p[i] + 0.5 * ctx.psip[i] * v1[i] + alpha * ctx.gbar[i])
        })
    } else {
        0.0
    };

    VirialRecord {
        t: d.t,
        energy: f64::NAN,
        z1: d.z1,
        z2: d.z2,
        alpha,
        beta,
        zsq: d.zsq,
        i_func,
        j_func,
        k_func,
        h_func,
        h1w2,
        l2w2,
        local_norm: f64::NAN,
        norm: f64::NAN,
        theta_v1v2,
        dzeta2,
        b_tilde,
        d_tilde,
        r_dtilde,
        boundary,
        sponge,
        f_alpha: f.f_alpha,
        f_beta: f.f_beta,
        orth_residual: d.orth_residual,
    }
}

/// Full per-sample evaluation of a state.
pub fn record(ctx: &DiagContext, model: Option<&Model>, s: &FieldState) -> Result<VirialRecord> {
    let d = decompose(ctx, s)?;
    let f = forcing_terms(ctx, &d)?;
    let mut r = virial_eval(ctx, &d, &f);
    r.energy = model.map_or(f64::NAN, |m| m.energy(s));
    r.local_norm = s.local_norm(LOCAL_RADIUS);
    r.norm = s.norm();
    Ok(r)
}

pub fn write_timeseries(records: &[VirialRecord], path: impl AsRef<Path>) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{TIMESERIES_HEADER}")?;
    for r in records {
        let v = [
            r.t, r.energy, r.z1, r.z2, r.alpha, r.beta, r.zsq, r.i_func, r.j_func, r.k_func, r.h_func, r.h1w2, r.l2w2,
            r.local_norm, r.norm, r.theta_v1v2, r.dzeta2, r.b_tilde, r.d_tilde, r.r_dtilde, r.boundary, r.sponge, r.f_alpha,
            r.f_beta, r.orth_residual,
        ];
        let line: Vec<String> = v.iter().map(|x| format!("{x:.12e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Fourth-order centred time derivative of `f` at interior samples
/// (`None` at the two samples nearest each end).
pub fn time_derivative(records: &[VirialRecord], f: impl Fn(&VirialRecord) -> f64) -> Vec<Option<f64>> {
    let n = records.len();
    (0..n)
        .map(|k| {
            if k < 2 || k + 2 >= n {
                return None;
            }
            let dt = (records[k + 2].t - records[k - 2].t) / 4.0;
            let v = |j: usize| f(&records[j]);
            Some((-v(k + 2) + 8.0 * v(k + 1) - 8.0 * v(k - 1) + v(k - 2)) / (12.0 * dt))
        })
        .collect()
}

fn check_uniform(records: &[VirialRecord]) -> Result<f64> {
    if records.len() < 5 {
        return Err(Error::Config(format!("need at least 5 samples, got {}", records.len())));
    }
    let dt = records[1].t - records[0].t;
    for w in records.windows(2) {
        let s = w[1].t - w[0].t;
        if !(s > 0.0) || (s - dt).abs() > 1e-6 * dt {
            return Err(Error::Config("samples are not uniformly spaced in time".into()));
        }
    }
    Ok(dt)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityReport {
    /// `max_t |d(ℐ+𝒥)/dt - RHS| / max_t |RHS|`.
    pub max_relative_defect: f64,
    pub max_abs_defect: f64,
    pub max_rhs: f64,
    pub samples: usize,
    pub sample_dt: f64,
}

/// Compares the finite-difference rate of `ℐ + 𝒥` with `-D̃ + R_D̃ +` boundary
/// terms (Dirichlet runs).
pub fn check_virial_identity(records: &[VirialRecord]) -> Result<IdentityReport> {
    let dt = check_uniform(records)?;
    let lhs = time_derivative(records, |r| r.i_func + r.j_func);
    let mut max_abs = 0.0f64;
    let mut max_rhs = 0.0f64;
    let mut count = 0;
    for (r, l) in records.iter().zip(&lhs) {
        if let Some(l) = l {
            max_abs = max_abs.max((l - r.virial_rhs()).abs());
            max_rhs = max_rhs.max(r.virial_rhs().abs());
            count += 1;
        }
    }
    let rel = if max_rhs > 0.0 { max_abs / max_rhs } else { max_abs };
    Ok(IdentityReport { max_relative_defect: rel, max_abs_defect: max_abs, max_rhs, samples: count, sample_dt: dt })
}

#[derive(Debug, Clone, Serialize)]
pub struct Monitor {
    pub name: String,
    /// Constant fitted on the first half.
    pub constant: f64,
    /// Largest violation on the first half with the fitted constant (≤ 0).
    pub fit_violation: f64,
    /// Largest violation on the second half, relative to the scale of the
    /// left-hand side; `≤ 0` means the inequality held.
    pub validated_violation: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    pub epsilon: f64,
    pub kappa: f64,
    pub monitors: Vec<Monitor>,
    /// `∫(|z|⁴ + ‖v₁‖²_{H¹_ω} + ‖v₂‖²_{L²_ω}) dt`.
    pub time_integral: f64,
    /// `max |d|z|²/dt + F_α| / max |F_α|`.
    pub zsq_defect: f64,
}

/// Fits `C ≥ 0` so that `m + C s ≥ 0` on the first half, then measures the
/// worst violation on the second.
fn fit_slack(name: &str, samples: &[(f64, f64, f64)]) -> Monitor {
    let half = samples.len() / 2;
    let scale = samples.iter().map(|s| s.2.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let c = samples[..half].iter().filter(|s| s.1 > 0.0).map(|s| (-s.0 / s.1).max(0.0)).fold(0.0, f64::max);
    let viol = |set: &[(f64, f64, f64)]| set.iter().map(|s| -(s.0 + c * s.1)).fold(f64::NEG_INFINITY, f64::max) / scale;
    Monitor {
        name: name.into(),
        constant: c,
        fit_violation: viol(&samples[..half]),
        validated_violation: viol(&samples[half..]),
        scale,
    }
}

/// Fits the largest `c` with `m ≥ c s` on the first half, then measures the
/// worst violation on the second.
fn fit_lower(name: &str, samples: &[(f64, f64, f64)]) -> Monitor {
    let half = samples.len() / 2;
    let scale = samples.iter().map(|s| s.2.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let c = samples[..half].iter().filter(|s| s.1 > 0.0).map(|s| s.0 / s.1).fold(f64::INFINITY, f64::min);
    let viol = |set: &[(f64, f64, f64)]| set.iter().map(|s| c * s.1 - s.0).fold(f64::NEG_INFINITY, f64::max) / scale;
    let mut out = Monitor {
        name: name.into(),
        constant: c,
        fit_violation: viol(&samples[..half]),
        validated_violation: viol(&samples[half..]),
        scale,
    };
    if !(c > 0.0) {
        // a non-positive rate is itself a violation of the lower bound
        out.validated_violation = out.validated_violation.max(-c / scale).max(f64::MIN_POSITIVE);
    }
    out
}

/// The four decay inequalities, with `ε` the initial `H¹×L²` norm. The
/// rates of `ℐ + 𝒥` and `𝒦` are taken net of the wall and sponge fluxes
/// (the whole-line rates); `θ` makes those fluxes negligible for `∫θv₁v₂`.
///
/// * `γ`: `γ̇ - 2μ(β² - α²) + Cε(|z|⁴ + ‖v₁‖²_{H¹_ω}) ≥ 0`;
/// * `I+J`: `-d(ℐ+𝒥)/dt - κ(α² + ‖∂_y(ζv₁)‖²) + Cε(|z|⁴ + ‖v₂‖²_{L²_ω}) ≥ 0`,
///   `κ` the measured `D̃` constant;
/// * `v1v2`: `2 d/dt ∫θv₁v₂ - ‖v₂‖²_{L²_ω} + C(|z|⁴ + ‖v₁‖²_{H¹_ω}) ≥ 0`;
/// * `K`: `d𝒦/dt ≥ c(|z|⁴ + ‖v‖²)` with fitted `c`, which must be positive.
pub fn monitor_inequalities(records: &[VirialRecord], mu: f64, kappa: f64, epsilon: f64) -> Result<MonitorReport> {
    check_uniform(records)?;
    let dg = time_derivative(records, |r| r.alpha * r.beta);
    let dij = time_derivative(records, |r| r.i_func + r.j_func);
    let dw = time_derivative(records, |r| r.theta_v1v2);
    let dk = time_derivative(records, |r| r.k_func);
    let dz = time_derivative(records, |r| r.zsq);
    let mut sg = Vec::new();
    let mut sij = Vec::new();
    let mut sw = Vec::new();
    let mut sk = Vec::new();
    let mut zdef = 0.0f64;
    let mut fmax = 0.0f64;
    for (k, r) in records.iter().enumerate() {
        let (Some(g), Some(ij), Some(w), Some(kk), Some(z)) = (dg[k], dij[k], dw[k], dk[k], dz[k]) else {
            continue;
        };
        let z4 = r.zsq * r.zsq;
        sg.push((g - 2.0 * mu * (r.beta * r.beta - r.alpha * r.alpha), epsilon * (z4 + r.h1w2), g));
        let ij = ij - r.domain_flux();
        let kk = kk + r.domain_flux();
        sij.push((-ij - kappa * (r.alpha * r.alpha + r.dzeta2), epsilon * (z4 + r.l2w2), ij));
        sw.push((2.0 * w - r.l2w2, z4 + r.h1w2, 2.0 * w));
        sk.push((kk, z4 + r.h1w2 + r.l2w2, kk));
        zdef = zdef.max((z + r.f_alpha).abs());
        fmax = fmax.max(r.f_alpha.abs());
    }
    let integrand: Vec<f64> = records.iter().map(|r| r.zsq * r.zsq + r.h1w2 + r.l2w2).collect();
    let time_integral = integrand.windows(2).zip(records.windows(2)).map(|(v, r)| 0.5 * (v[0] + v[1]) * (r[1].t - r[0].t)).sum();
    Ok(MonitorReport {
        epsilon,
        kappa,
        monitors: vec![
            fit_slack("gamma", &sg),
            fit_slack("IplusJ", &sij),
            fit_slack("v1v2", &sw),
            fit_lower("dKdt", &sk),
        ],
        time_integral,
        zsq_defect: if fmax > 0.0 { zdef / fmax } else { zdef },
    })
}

/// `(B, B̃, D, D̃)` by quadrature. `B`, `D` use the constant-speed objects
/// `H`, `f`, `g`, `a`; `D(v, α) = B(v) + aα∫ψ'fv + α²∫fg`, the cross-term
/// sign matching `D̃` for the sign convention of `g` and `h̄`.
pub fn quadratic_forms(ctx: &DiagContext, consts: &ConstantSpeed, v: &GridFn, alpha: f64) -> Result<(f64, f64, f64, f64)> {
    if v.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let g = ctx.grid;
    let h = g.h();
    let vv = v.values();
    let vp = grid::derivative4(vv, h);
    let b = ctx.integrate(|i| {
        let y = g.node(i);
        ctx.psip[i] * vp[i] * vp[i] - 0.25 * ctx.psippp[i] * vv[i] * vv[i]
            - 3.0 * ctx.psi[i] * closed::h(y) * closed::h_prime(y) * vv[i] * vv[i]
    });
    let bt = ctx.integrate(|i| {
        ctx.psip[i] * vp[i] * vp[i] - 0.25 * ctx.psippp[i] * vv[i] * vv[i] - 3.0 * ctx.psi[i] * ctx.k[i] * ctx.kp[i] * vv[i] * vv[i]
    });
    let d = b + alpha * consts.a * ctx.integrate(|i| ctx.psip[i] * consts.f.at(i) * vv[i]) + alpha * alpha * consts.f_g;
    let dt = bt
        + ctx.integrate(|i| {
            -ctx.psi[i] * ctx.b[i] * vp[i] * vp[i]
                + 0.25 * ctx.psib_prime[i] * vv[i] * vv[i]
                + ctx.a0 * alpha * ctx.psip[i] * ctx.fbar[i] * vv[i]
        })
        + alpha * alpha * ctx.fbar_gbar;
    Ok((b, bt, d, dt))
}

/// `f`, `g`, `a` and `∫fg` for the constant-speed problem.
#[derive(Debug, Clone)]
pub struct ConstantSpeed {
    pub f: GridFn,
    pub g: GridFn,
    pub a: f64,
    pub f_g: f64,
}

impl ConstantSpeed {
    pub fn new(spec: &SpectralData, grid: Grid) -> Result<Self> {
        let (f, _) = spectral::constant_speed_f(grid)?;
        let g = spectral::build_g(&spec.rule, grid)?;
        let f_g = grid::inner(&f, &g)?;
        Ok(ConstantSpeed { f, g, a: spec.rule.a, f_g })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub half_length: f64,
    pub h: f64,
    pub unknowns: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub delta: f64,
    #[serde(rename = "kappa_B")]
    pub kappa_b: f64,
    /// `None` when the golden-rule constants are rejected at this drift.
    #[serde(rename = "kappa_D")]
    pub kappa_d: Option<f64>,
    #[serde(rename = "kappa_D_note", skip_serializing_if = "Option::is_none")]
    pub kappa_d_note: Option<String>,
    /// Lowest quotient of `B̃` without the orthogonality constraint.
    #[serde(rename = "kappa_B_unconstrained")]
    pub kappa_b_unconstrained: f64,
    /// Smallest sampled quotients (`B̃`, `D̃`) over random constrained data.
    #[serde(rename = "sampled_min_B")]
    pub sampled_min_b: f64,
    #[serde(rename = "sampled_min_D")]
    pub sampled_min_d: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    /// `max ‖v‖_{H¹_ω} / ‖∂_y(ζv)‖` over random odd `v`.
    pub zeta_constant: f64,
    pub grid: GridSummary,
}

/// Symmetric tridiagonal form on the half-line unknowns `v_1 .. v_{n-1}`
/// (`v_0 = 0` by oddness, `v_n = 0` at `y = L`).
#[derive(Debug, Clone)]
struct Tri {
    d: Vec<f64>,
    e: Vec<f64>,
}

impl Tri {
    fn zeros(m: usize) -> Self {
        Tri { d: vec![0.0; m], e: vec![0.0; m.saturating_sub(1)] }
    }

    /// Adds `w (c1 v_{j+1} - c0 v_j)²` for the edge between nodes `j`, `j+1`.
    fn add_edge(&mut self, n: usize, j: usize, w: f64, c0: f64, c1: f64) {
        let left = (j >= 1).then(|| j - 1);
        let right = (j + 1 <= n - 1).then_some(j);
        if let Some(a) = left {
            self.d[a] += w * c0 * c0;
        }
        if let Some(b) = right {
            self.d[b] += w * c1 * c1;
        }
        if let (Some(a), Some(_)) = (left, right) {
            self.e[a] -= w * c0 * c1;
        }
    }

    fn quad(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d.len() {
            s += self.d[i] * x[i] * x[i];
            if i + 1 < self.d.len() {
                s += 2.0 * self.e[i] * x[i] * x[i + 1];
            }
        }
        s
    }

    fn shifted(&self, other: &Tri, s: f64) -> Tri {
        Tri {
            d: self.d.iter().zip(&other.d).map(|(a, b)| a - s * b).collect(),
            e: self.e.iter().zip(&other.e).map(|(a, b)| a - s * b).collect(),
        }
    }

    /// `LDLᵀ` pivots and multipliers.
    fn factor(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.d.len();
        let mut piv = vec![0.0; m];
        let mut l = vec![0.0; m];
        for i in 0..m {
            let mut p = self.d[i];
            if i > 0 {
                l[i] = self.e[i - 1] / piv[i - 1];
                p -= l[i] * self.e[i - 1];
            }
            if p == 0.0 {
                p = -1e-300;
            }
            piv[i] = p;
        }
        (piv, l)
    }
}

fn ldl_solve(piv: &[f64], l: &[f64], r: &[f64]) -> Vec<f64> {
    let m = piv.len();
    let mut y = r.to_vec();
    for i in 1..m {
        y[i] -= l[i] * y[i - 1];
    }
    for i in 0..m {
        y[i] /= piv[i];
    }
    for i in (0..m.saturating_sub(1)).rev() {
        y[i] -= l[i + 1] * y[i + 1];
    }
    y
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn neg_sym2(a: f64, b: f64, c: f64) -> usize {
    let tr = a + c;
    let det = a * c - b * b;
    if det < 0.0 {
        1
    } else if tr < 0.0 && det > 0.0 {
        2
    } else if det == 0.0 && tr < 0.0 {
        1
    } else {
        0
    }
}

/// Discrete pencil for the coercivity problems on the half line.
struct Pencil {
    /// `v`-block of the form.
    a: Tri,
    metric: Tri,
    /// `α`-coupling column (half of the cross coefficient) and `α²` entry.
    alpha: Option<(Vec<f64>, f64)>,
    /// Constraint column `c` (`cᵀv = 0`), if any.
    constraint: Option<Vec<f64>>,
}

impl Pencil {
    /// Number of generalized eigenvalues below `s` on the constrained space
    /// (Haynsworth inertia of the bordered pencil).
    fn count_below(&self, s: f64) -> usize {
        let st = self.a.shifted(&self.metric, s);
        let (piv, l) = st.factor();
        let neg = piv.iter().filter(|p| **p < 0.0).count();
        let solve = |r: &[f64]| ldl_solve(&piv, &l, r);
        match (&self.alpha, &self.constraint) {
            (None, None) => neg,
            (None, Some(c)) => {
                let sc = -dot(c, &solve(c));
                neg + usize::from(sc < 0.0) - 1
            }
            (Some((dv, daa)), None) => {
                let sc = daa - s - dot(dv, &solve(dv));
                neg + usize::from(sc < 0.0)
            }
            (Some((dv, daa)), Some(c)) => {
                let sd = solve(dv);
                let s11 = daa - s - dot(dv, &sd);
                let s12 = -dot(c, &sd);
                let s22 = -dot(c, &solve(c));
                neg + neg_sym2(s11, s12, s22) - 1
            }
        }
    }

    fn lowest(&self, tol: f64) -> Result<f64> {
        let mut lo = -1.0;
        while self.count_below(lo) > 0 {
            lo *= 2.0;
            if lo < -1e12 {
                return Err(Error::IllConditioned(lo));
            }
        }
        let mut hi = 1.0;
        while self.count_below(hi) == 0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::IllConditioned(hi));
            }
        }
        while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > 0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn quotient(&self, v: &[f64], alpha: f64) -> f64 {
        let mut num = self.a.quad(v);
        let mut den = self.metric.quad(v);
        if let Some((dv, daa)) = &self.alpha {
            num += 2.0 * alpha * dot(dv, v) + daa * alpha * alpha;
            den += alpha * alpha;
        }
        num / den
    }
}

/// The `α`-dependent ingredients of `D̃`.
#[derive(Debug, Clone, Copy)]
pub struct DTerms<'a> {
    pub a0: f64,
    pub fbar: &'a GridFn,
    pub gbar: &'a GridFn,
}

impl<'a> DTerms<'a> {
    pub fn of(spec: &'a SpectralData) -> Self {
        DTerms { a0: spec.rule.a0, fbar: &spec.fbar, gbar: &spec.gbar }
    }
}

/// Coercivity from scratch: runs the spectral analysis and, if the
/// golden-rule constants are rejected, still measures `κ_B` from `Ȳ₁`.
pub fn coercivity_for(kink: &KinkProfile, drift: &DriftProfile, seed: u64) -> Result<CoercivityReport> {
    let opts = spectral::SpectralOptions { oracle: false, ..Default::default() };
    match spectral::analyze(kink, drift, opts) {
        Ok(spec) => measure_coercivity(kink, drift, &spec.ybar1, Ok(DTerms::of(&spec)), seed),
        Err(Error::Regime(msg)) => {
            let e = spectral::find_lambda1(kink, drift, opts.tol)?;
            measure_coercivity(kink, drift, &e.f, Err(format!("golden-rule constants rejected: {msg}")), seed)
        }
        Err(e) => Err(e),
    }
}

/// Random smooth odd test function on the nodes `ys`.
fn random_odd(rng: &mut ChaCha8Rng, ys: &[f64]) -> Vec<f64> {
    let terms: Vec<(f64, f64)> = (0..6).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.5..10.0))).collect();
    ys.iter()
        .map(|&y| terms.iter().map(|&(a, s)| a * (y / s) * (-0.5 * (y / s).powi(2)).exp()).sum())
        .collect()
}

pub const COERCIVITY_SAMPLES: usize = 1000;
const ZETA_SAMPLES: usize = 100;

/// `κ_B = min B̃(v)/‖∂_y(ζv)‖²` and `κ_D = min D̃(v,α)/(α² + ‖∂_y(ζv)‖²)` over
/// odd `v` with `⟨v,Ȳ₁⟩_p = 0`: lowest eigenvalue of the generalized
/// problem, the constraint enforced through a Lagrange border and counted
/// by inertia. Both forms use midpoint differences for `v'` and the
/// trapezoid rule elsewhere.
pub fn measure_coercivity(
    kink: &KinkProfile,
    drift: &DriftProfile,
    ybar1: &GridFn,
    d_terms: std::result::Result<DTerms<'_>, String>,
    seed: u64,
) -> Result<CoercivityReport> {
    let full = *drift.grid();
    let half = full.half();
    let h = half.h();
    let n = half.len() - 1;
    let m = n - 1;
    let ys = half.nodes();
    let o = full.origin();
    let at = |f: &GridFn, j: usize| f.at(o + j);
    let mid = |f: &dyn Fn(usize) -> f64, j: usize| 0.5 * (f(j) + f(j + 1));

    // all forms are full-line integrals of even integrands: factor 2
    let mut a_b = Tri::zeros(m);
    let mut a_d = Tri::zeros(m);
    let mut metric = Tri::zeros(m);
    for j in 0..n {
        let ym = ys[j] + 0.5 * h;
        let pp = closed::psi_prime(ym);
        let bm = mid(&|i| at(&drift.b, i), j);
        let psim = closed::psi(ym);
        a_b.add_edge(n, j, 2.0 * pp / h, 1.0, 1.0);
        a_d.add_edge(n, j, 2.0 * (pp - psim * bm) / h, 1.0, 1.0);
        metric.add_edge(n, j, 2.0 / h, closed::zeta(ys[j]), closed::zeta(ys[j + 1]));
    }
    let mut dv = vec![0.0; m];
    let mut c = vec![0.0; m];
    for i in 0..m {
        let j = i + 1;
        let y = ys[j];
        let vb = -0.25 * closed::psi_third(y) - 3.0 * closed::psi(y) * at(&kink.k, j) * at(&kink.k_prime, j);
        let psib_p = closed::psi_second(y) * at(&drift.b, j) + closed::psi_prime(y) * at(&drift.b_prime, j);
        a_b.d[i] += 2.0 * h * vb;
        a_d.d[i] += 2.0 * h * (vb + 0.25 * psib_p);
        if let Ok(t) = &d_terms {
            dv[i] = t.a0 * h * closed::psi_prime(y) * at(t.fbar, j);
        }
        c[i] = at(&drift.p, j) * at(ybar1, j);
    }
    let faa = match &d_terms {
        Ok(t) => grid::inner(t.fbar, t.gbar)?,
        Err(_) => 0.0,
    };

    let metric_check = Pencil { a: metric.clone(), metric: Tri::zeros(m), alpha: None, constraint: None };
    if metric_check.count_below(0.0) > 0 {
        return Err(Error::IllConditioned(0.0));
    }
    let pb = Pencil { a: a_b.clone(), metric: metric.clone(), alpha: None, constraint: Some(c.clone()) };
    let pb_free = Pencil { a: a_b, metric: metric.clone(), alpha: None, constraint: None };
    let pd = Pencil { a: a_d, metric, alpha: Some((dv, faa)), constraint: Some(c.clone()) };
    let kappa_b = pb.lowest(1e-10)?;
    let kappa_b_free = pb_free.lowest(1e-10)?;
    let kappa_d = if d_terms.is_ok() { Some(pd.lowest(1e-10)?) } else { None };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner_ys = &ys[1..n];
    let cc = dot(&c, &c);
    let mut min_b = f64::INFINITY;
    let mut min_d = f64::INFINITY;
    for _ in 0..COERCIVITY_SAMPLES {
        let mut v = random_odd(&mut rng, inner_ys);
        let k = dot(&c, &v) / cc;
        for (vi, ci) in v.iter_mut().zip(&c) {
            *vi -= k * ci;
        }
        let alpha = rng.random_range(-1.0..1.0) * (pb.metric.quad(&v)).sqrt();
        min_b = min_b.min(pb.quotient(&v, 0.0));
        if kappa_d.is_some() {
            min_d = min_d.min(pd.quotient(&v, alpha));
        }
    }

    let mut zeta_c = 0.0f64;
    for _ in 0..ZETA_SAMPLES {
        let v = random_odd(&mut rng, &full.nodes());
        let v = GridFn::new(full, v)?.symmetrized(Parity::Odd);
        let (h1, _) = grid::weighted_norms(&v, &GridFn::zeros(full))?;
        let zv = GridFn::from_fn(full, closed::zeta).mul(&v);
        let d = grid::derivative(&zv);
        let den = grid::inner(&d, &d)?.sqrt();
        zeta_c = zeta_c.max(h1 / den);
    }

    Ok(CoercivityReport {
        delta: drift.delta,
        kappa_b,
        kappa_d,
        kappa_d_note: d_terms.err(),
        kappa_b_unconstrained: kappa_b_free,
        sampled_min_b: min_b,
        sampled_min_d: kappa_d.map(|_| min_d),
        samples: COERCIVITY_SAMPLES,
        seed,
        zeta_constant: zeta_c,
        grid: GridSummary { half_length: full.half_length(), h, unknowns: m },
    })
}

//! Discrete spectrum of `𝓛_K = -∂² - b∂ - 1 + 3K²` and the auxiliary
//! objects of the internal-mode analysis (`f̄`, `q`, `h̄`, `ḡ`, `a`, `a₀`).
//!
//! Eigenvalues come from half-line shooting: `Ȳ₀ = Y₀ + U_λ` with the
//! boundary functional `U_λ'(0)`, and `Ȳ₁ = Y₁ + V_λ` with `V_λ(0)`, each
//! located by bisection. A symmetric tridiagonal discretization of
//! `√p 𝓛_K (1/√p)` serves as an independent check.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fredholm::{self, FredholmReport, FundamentalPair, HalfLineKernel};
use crate::grid::{self, Grid, GridFn, Parity};
use crate::kink::{self, KinkProfile};
use crate::linalg::SymTridiagonal;
use crate::profiles::{closed, kcirc_constants, w1, DriftProfile};

pub const BISECTION_TOL: f64 = 1e-10;
pub const ORACLE_COUNT: usize = 20;
const DENOMINATOR_MIN: f64 = 0.3;

/// Half-line data shared by the shooting problems.
struct HalfLine {
    grid: Grid,
    b: Vec<f64>,
    bp: Vec<f64>,
    d: Vec<f64>,
    pair0: FundamentalPair,
    pair1: FundamentalPair,
}

impl HalfLine {
    fn new(kink: &KinkProfile, drift: &DriftProfile) -> Self {
        let grid = drift.grid().half();
        let ys = grid.nodes();
        let col = |f: fn(f64) -> f64| ys.iter().map(|&y| f(y)).collect::<Vec<_>>();
        let pair1 = FundamentalPair::constant_wronskian(
            col(closed::y1),
            col(closed::y1_prime),
            col(closed::z1),
            col(closed::z1_prime),
            w1(),
        );
        HalfLine {
            grid,
            b: drift.b.restrict_half().into_values(),
            bp: drift.b_prime.restrict_half().into_values(),
            d: kink.d.restrict_half().into_values(),
            pair0: kink::pair0(&grid),
            pair1,
        }
    }
}

/// Which of the two shooting problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `Ȳ₀ = Y₀ + U_λ`, root of `U_λ'(0)`.
    Even,
    /// `Ȳ₁ = Y₁ + V_λ`, root of `V_λ(0)`.
    Odd,
}

/// One half-line solve at fixed `λ`.
#[derive(Debug, Clone)]
pub struct Shot {
    pub lambda: f64,
    /// `U_λ` or `V_λ` on `[0, L]`.
    pub correction: Vec<f64>,
    pub correction_prime: Vec<f64>,
    /// `U_λ'(0)` (even branch) or `V_λ(0)` (odd branch), from the
    /// quadrature functional.
    pub boundary: f64,
    pub nu: f64,
    /// `‖V‖_∞ ≤ ‖h₀‖_∞ / (1 - ν)` held for this solve.
    pub bound_holds: bool,
}

fn shoot(hl: &HalfLine, branch: Branch, lambda: f64) -> Result<Shot> {
    let (pair, shift) = match branch {
        Branch::Even => (&hl.pair0, 0.0),
        Branch::Odd => (&hl.pair1, 1.5),
    };
    let n = hl.grid.len();
    let m: Vec<f64> = (0..n).map(|i| lambda - shift - hl.d[i]).collect();
    let src: Vec<f64> = (0..n).map(|i| hl.b[i] * pair.yp[i] + m[i] * pair.y[i]).collect();
    let green = pair.green(hl.grid)?;
    let h0 = green.apply(&src);
    let h0p = green.apply_derivative(&src).expect("derivatives");
    let kernel = pair.kernel(hl.grid, &m, Some((&hl.b, &hl.bp)))?;
    let rep = fredholm::neumann_solve(&kernel, &GridFn::new(hl.grid, h0)?, fredholm::DEFAULT_TOL)?;
    let u = rep.solution.values().to_vec();
    let kp = kernel.apply_derivative(&u).expect("derivatives");
    let up: Vec<f64> = (0..n).map(|i| h0p[i] + kp[i]).collect();
    // G(0, w) = z(0) y(w) / W and ∂_y G(0, w) = z'(0) y(w) / W, so the
    // solution's own node-0 values are the boundary functionals evaluated
    // with the kernel's quadrature.
    let boundary = match branch {
        Branch::Even => up[0],
        Branch::Odd => u[0],
    };
    Ok(Shot { lambda, correction: u, correction_prime: up, boundary, nu: rep.nu, bound_holds: rep.bound_holds() })
}

/// Even shooting problem at `λ`.
pub fn shoot_even(kink: &KinkProfile, drift: &DriftProfile, lambda: f64) -> Result<Shot> {
    shoot(&HalfLine::new(kink, drift), Branch::Even, lambda)
}

/// Odd shooting problem at `λ`.
pub fn shoot_odd(kink: &KinkProfile, drift: &DriftProfile, lambda: f64) -> Result<Shot> {
    shoot(&HalfLine::new(kink, drift), Branch::Odd, lambda)
}

/// Half-width `λ*` of the bracket, `5 ∫ |(d + b') Y + b Y'|` with a floor
/// of `10⁻³` so that the unperturbed problem still has a proper bracket.
fn lambda_star(hl: &HalfLine, branch: Branch) -> f64 {
    let pair = match branch {
        Branch::Even => &hl.pair0,
        Branch::Odd => &hl.pair1,
    };
    let v: Vec<f64> = (0..hl.grid.len())
        .map(|i| ((hl.d[i] + hl.bp[i]) * pair.y[i] + hl.b[i] * pair.yp[i]).abs())
        .collect();
    (5.0 * grid::simpson(&v, hl.grid.h())).max(1e-3)
}

/// A located eigenvalue with its eigenfunction on the full line.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub lambda: f64,
    pub f: GridFn,
    pub f_prime: GridFn,
    pub lambda_star: f64,
    pub bisections: usize,
}

fn find(hl: &HalfLine, branch: Branch, tol: f64, full: Grid) -> Result<Eigen> {
    let center = if branch == Branch::Even { 0.0 } else { 1.5 };
    let ls = lambda_star(hl, branch);
    let (mut lo, mut hi) = (center - ls, center + ls);
    let mut slo = shoot(hl, branch, lo)?.boundary;
    let mut shi = shoot(hl, branch, hi)?.boundary;
    if slo.signum() == shi.signum() {
        return Err(Error::Regime(format!(
            "no sign change of the boundary functional on [{lo}, {hi}]: {slo:.3e}, {shi:.3e}"
        )));
    }
    let mut bisections = 0;
    while hi - lo > tol && slo != 0.0 && shi != 0.0 {
        let mid = 0.5 * (lo + hi);
        let s = shoot(hl, branch, mid)?.boundary;
        if s.signum() == slo.signum() {
            lo = mid;
            slo = s;
        } else {
            hi = mid;
            shi = s;
        }
        bisections += 1;
    }
    // a closing secant step inside the final bracket; the boundary
    // functional is smooth in λ, so this removes the O(tol) offset that
    // would otherwise show up as a kink at y = 0 after extension
    let lambda = if slo == 0.0 {
        lo
    } else if shi == 0.0 {
        hi
    } else {
        (lo - slo * (hi - lo) / (shi - slo)).clamp(lo, hi)
    };
    let shot = shoot(hl, branch, lambda)?;
    let pair = if branch == Branch::Even { &hl.pair0 } else { &hl.pair1 };
    let n = hl.grid.len();
    let phi: Vec<f64> = (0..n).map(|i| pair.y[i] + shot.correction[i]).collect();
    let phip: Vec<f64> = (0..n).map(|i| pair.yp[i] + shot.correction_prime[i]).collect();
    let (pf, pd) = match branch {
        Branch::Even => (Parity::Even, Parity::Odd),
        Branch::Odd => (Parity::Odd, Parity::Even),
    };
    let f = GridFn::new(hl.grid, phi)?.extend(pf);
    let f_prime = GridFn::new(hl.grid, phip)?.extend(pd);
    debug_assert_eq!(f.grid(), &full);
    Ok(Eigen { lambda, f, f_prime, lambda_star: ls, bisections })
}

/// `λ₀` and `Ȳ₀ = Y₀ + U_{λ₀}` (not normalized).
pub fn find_lambda0(kink: &KinkProfile, drift: &DriftProfile, tol: f64) -> Result<Eigen> {
    find(&HalfLine::new(kink, drift), Branch::Even, tol, *drift.grid())
}

/// `λ₁` and `Ȳ₁`, normalized to `⟨Ȳ₁, Ȳ₁⟩_p = 1`.
pub fn find_lambda1(kink: &KinkProfile, drift: &DriftProfile, tol: f64) -> Result<Eigen> {
    let mut e = find(&HalfLine::new(kink, drift), Branch::Odd, tol, *drift.grid())?;
    let norm = grid::inner_p(&e.f, &e.f, &drift.p)?.sqrt();
    e.f = e.f.scale(1.0 / norm);
    e.f_prime = e.f_prime.scale(1.0 / norm);
    Ok(e)
}

/// `max |𝓛_K f - λ f|` on `|y| ≤ L - 1`, fourth-order differences.
pub fn eigen_residual(f: &GridFn, lambda: f64, kink: &KinkProfile, drift: &DriftProfile) -> f64 {
    let r = apply_lk(f, kink, drift);
    let g = f.grid();
    let lim = g.half_length() - 1.0;
    (0..g.len())
        .filter(|&i| g.node(i).abs() <= lim)
        .map(|i| (r[i] - lambda * f.at(i)).abs())
        .fold(0.0, f64::max)
}

/// `𝓛_K f` by fourth-order differences (outer two nodes unreliable).
pub fn apply_lk(f: &GridFn, kink: &KinkProfile, drift: &DriftProfile) -> Vec<f64> {
    let g = f.grid();
    let d2 = grid::second_derivative4(f.values(), g.h());
    let d1 = grid::derivative4(f.values(), g.h());
    (0..g.len())
        .map(|i| {
            let k = kink.k.at(i);
            -d2[i] - drift.b.at(i) * d1[i] + (3.0 * k * k - 1.0) * f.at(i)
        })
        .collect()
}

/// Eigenvalue of the matrix oracle with its parity class.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleValue {
    pub lambda: f64,
    pub parity: Parity,
}

/// Lowest eigenvalues of the second-order, conservative discretization of
/// `√p 𝓛_K (1/√p)` with Dirichlet ends.
pub fn matrix_oracle(kink: &KinkProfile, drift: &DriftProfile) -> Result<Vec<OracleValue>> {
    let g = drift.grid();
    let n = g.len();
    let h2 = g.h() * g.h();
    // interior unknowns 1..n-1
    let m = n - 2;
    let p = drift.p.values();
    let mid = |i: usize| 0.5 * (p[i] + p[i + 1]);
    let mut d = Vec::with_capacity(m);
    let mut e = Vec::with_capacity(m.saturating_sub(1));
    for i in 1..n - 1 {
        let k = kink.k.at(i);
        d.push((mid(i - 1) + mid(i)) / (h2 * p[i]) + 3.0 * k * k - 1.0);
        if i + 1 < n - 1 {
            e.push(-mid(i) / (h2 * (p[i] * p[i + 1]).sqrt()));
        }
    }
    let t = SymTridiagonal { d, e };
    let values = t.lowest_eigenvalues(ORACLE_COUNT, 1e-13);
    values
        .into_iter()
        .map(|lambda| {
            let v = t.eigenvector(lambda)?;
            // v is indexed by interior node i - 1; mirror of node i is n - 1 - i
            let (mut even, mut odd) = (0.0_f64, 0.0_f64);
            for r in 0..m {
                let s = m - 1 - r;
                even = even.max((v[r] - v[s]).abs());
                odd = odd.max((v[r] + v[s]).abs());
            }
            let parity = if even < 1e-6 {
                Parity::Even
            } else if odd < 1e-6 {
                Parity::Odd
            } else {
                Parity::None
            };
            Ok(OracleValue { lambda, parity })
        })
        .collect()
}

/// Output of [`resolvent_l6`].
#[derive(Debug, Clone)]
pub struct Resolvent {
    /// `G` with `(-𝓛 + 6) G = F`.
    pub g: GridFn,
    pub g_prime: GridFn,
    /// `∫ k̄ F`.
    pub k_inner: Complex64,
    /// `∫ Im(k) F`.
    pub im_k_inner: f64,
}

/// `G(y) = (1/12) Im(k(y) ∫_{-∞}^y k̄F + k̄(y) ∫_y^∞ kF)`.
pub fn resolvent_l6(f: &GridFn) -> Result<Resolvent> {
    let g = *f.grid();
    let h = g.h();
    let n = g.len();
    let ks: Vec<Complex64> = g.nodes().iter().map(|&y| closed::k(y)).collect();
    let kps: Vec<Complex64> = g.nodes().iter().map(|&y| closed::k_prime(y)).collect();
    let fv = f.values();
    let col = |sel: &dyn Fn(usize) -> f64| (0..n).map(sel).collect::<Vec<_>>();
    let lo_re = grid::cumulative(&col(&|i| ks[i].re * fv[i]), h);
    let lo_im = grid::cumulative(&col(&|i| -ks[i].im * fv[i]), h);
    let hi_re = grid::cumulative_tail(&col(&|i| ks[i].re * fv[i]), h);
    let hi_im = grid::cumulative_tail(&col(&|i| ks[i].im * fv[i]), h);
    let mut out = Vec::with_capacity(n);
    let mut outp = Vec::with_capacity(n);
    for i in 0..n {
        let a = Complex64::new(lo_re[i], lo_im[i]);
        let b = Complex64::new(hi_re[i], hi_im[i]);
        out.push((ks[i] * a + ks[i].conj() * b).im / 12.0);
        outp.push((kps[i] * a + kps[i].conj() * b).im / 12.0);
    }
    let k_inner = Complex64::new(lo_re[n - 1], lo_im[n - 1]);
    let imk = GridFn::from_fn(g, |y| closed::k(y).im);
    let im_k_inner = grid::inner(&imk, f)?;
    let mut gf = GridFn::new(g, out)?;
    let mut gp = GridFn::new(g, outp)?;
    match f.parity() {
        Parity::Odd => {
            gf = gf.symmetrized(Parity::Odd);
            gp = gp.symmetrized(Parity::Even);
        }
        Parity::Even => {
            gf = gf.symmetrized(Parity::Even);
            gp = gp.symmetrized(Parity::Odd);
        }
        Parity::None => {}
    }
    Ok(Resolvent { g: gf, g_prime: gp, k_inner, im_k_inner })
}

/// `f̄ = (3/2)(K Ȳ₁² - ⟨K Ȳ₁², Ȳ₁⟩_p Ȳ₁)` and its derivative.
pub fn build_fbar(y1: &Eigen, kink: &KinkProfile, drift: &DriftProfile) -> Result<(GridFn, GridFn)> {
    let ky2 = kink.k.mul(&y1.f).mul(&y1.f);
    let c = grid::inner_p(&ky2, &y1.f, &drift.p)?;
    let f = ky2.axpy(-c, &y1.f).scale(1.5).symmetrized(Parity::Odd);
    let fp = kink
        .k_prime
        .mul(&y1.f)
        .mul(&y1.f)
        .add(&kink.k.mul(&y1.f).mul(&y1.f_prime).scale(2.0))
        .axpy(-c, &y1.f_prime)
        .scale(1.5)
        .symmetrized(Parity::Even);
    Ok((f, fp))
}

/// Constant-speed `f = (3/2)(H Y₁² - ⟨H Y₁², Y₁⟩ Y₁)` and `f'`.
pub fn constant_speed_f(g: Grid) -> Result<(GridFn, GridFn)> {
    let h = GridFn::from_fn(g, closed::h);
    let hp = GridFn::from_fn(g, closed::h_prime);
    let y1 = GridFn::from_fn(g, closed::y1);
    let y1p = GridFn::from_fn(g, closed::y1_prime);
    let hy2 = h.mul(&y1).mul(&y1);
    let c = grid::inner(&hy2, &y1)?;
    let f = hy2.axpy(-c, &y1).scale(1.5).symmetrized(Parity::Odd);
    let fp = hp
        .mul(&y1)
        .mul(&y1)
        .add(&h.mul(&y1).mul(&y1p).scale(2.0))
        .axpy(-c, &y1p)
        .scale(1.5)
        .symmetrized(Parity::Even);
    Ok((f, fp))
}

/// Odd solution of `𝓛_K q = f̄` through `q = G_b f̄ - G_b(d q)`.
pub fn build_q(fbar: &GridFn, kink: &KinkProfile, drift: &DriftProfile) -> Result<(GridFn, GridFn)> {
    build_q_with_report(fbar, kink, drift).map(|(q, qp, _)| (q, qp))
}

/// [`build_q`] together with the report of its Fredholm solve.
pub fn build_q_with_report(fbar: &GridFn, kink: &KinkProfile, drift: &DriftProfile) -> Result<(GridFn, GridFn, FredholmReport)> {
    let sys = kink::solve_vb(drift)?;
    let half = sys.half;
    let d = kink.d.restrict_half().into_values();
    let minus_d: Vec<f64> = d.iter().map(|v| -v).collect();
    let gb = sys.pair.green(half)?;
    let fh = fbar.restrict_half().into_values();
    let src = gb.apply(&fh);
    let srcp = gb.apply_derivative(&fh).expect("derivatives");
    let kernel = sys.pair.kernel(half, &minus_d, None)?;
    let rep = fredholm::neumann_solve(&kernel, &GridFn::new(half, src)?, fredholm::DEFAULT_TOL)?;
    let q = rep.solution.values().to_vec();
    let kp = kernel.apply_derivative(&q).expect("derivatives");
    let qp: Vec<f64> = (0..q.len()).map(|i| srcp[i] + kp[i]).collect();
    Ok((GridFn::new(half, q)?.extend(Parity::Odd), GridFn::new(half, qp)?.extend(Parity::Even), rep))
}

/// The constants `a`, `a₀` and the denominators that define them.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GoldenRule {
    pub a: f64,
    pub a0: f64,
    /// `⟨ψ'f, Im k⟩` (constant speed).
    pub psi_f_imk: f64,
    /// `⟨ψ'f̄/p, Im k⟩`.
    pub psi_fbar_imk: f64,
}

fn golden_ratio_pair(f: &GridFn, fp: &GridFn, weight: &GridFn) -> Result<(f64, f64)> {
    let g = *f.grid();
    let psi = GridFn::from_fn(g, closed::psi);
    let psip = GridFn::from_fn(g, closed::psi_prime);
    let imk = GridFn::from_fn(g, |y| closed::k(y).im);
    let num = psi.mul(fp).add(&psip.mul(f).scale(0.5)).mul(weight);
    let den = psip.mul(f).mul(weight);
    Ok((grid::inner(&num, &imk)?, grid::inner(&den, &imk)?))
}

/// `a = -⟨ψf' + ½ψ'f, Im k⟩ / ⟨ψ'f, Im k⟩` and
/// `a₀ = -⟨(ψf̄' + ½ψ'f̄)/p, Im k⟩ / ⟨ψ'f̄/p, Im k⟩`.
pub fn golden_rule_constants(fbar: &GridFn, fbar_prime: &GridFn, drift: &DriftProfile) -> Result<GoldenRule> {
    let g = *drift.grid();
    let (f, fp) = constant_speed_f(g)?;
    let one = GridFn::constant(g, 1.0);
    let (n, d) = golden_ratio_pair(&f, &fp, &one)?;
    let inv_p = drift.p.map(|v| 1.0 / v);
    let (n0, d0) = golden_ratio_pair(fbar, fbar_prime, &inv_p)?;
    if d0.abs() < DENOMINATOR_MIN {
        return Err(Error::Regime(format!("|<psi' fbar / p, Im k>| = {:.4} below {DENOMINATOR_MIN}", d0.abs())));
    }
    Ok(GoldenRule { a: -n / d, a0: -n0 / d0, psi_f_imk: d, psi_fbar_imk: d0 })
}

/// `ℓ = (ψ F' + (c + ½) ψ' F) / p`-type source.
fn ell(f: &GridFn, fp: &GridFn, c: f64, weight: &GridFn) -> GridFn {
    let g = *f.grid();
    let psi = GridFn::from_fn(g, closed::psi);
    let psip = GridFn::from_fn(g, closed::psi_prime);
    psi.mul(fp).add(&psip.mul(f).scale(c + 0.5)).mul(weight).symmetrized(Parity::Odd)
}

/// Solution `g` of `(𝓛 - 6) g = ψf' + (a + ½)ψ'f` (constant speed).
pub fn build_g(rule: &GoldenRule, g: Grid) -> Result<GridFn> {
    let (f, fp) = constant_speed_f(g)?;
    let l = ell(&f, &fp, rule.a, &GridFn::constant(g, 1.0));
    Ok(resolvent_l6(&l.scale(-1.0))?.g)
}

/// `h̄` solving `𝓛_K h̄ - 4μ²h̄ = ℓ`, `ℓ = (ψf̄' + (a₀ + ½)ψ'f̄)/p`, as `h + η`
/// where `(𝓛 - 6) h = ℓ` and `η` solves the half-line Fredholm equation
/// with the kernel built from `Re k°`, `Im k°`.
#[derive(Debug, Clone)]
pub struct Hbar {
    pub hbar: GridFn,
    pub hbar_prime: GridFn,
    pub gbar: GridFn,
    pub ell: GridFn,
    /// `⟨Im k, ℓ⟩`, zero by the choice of `a₀`.
    pub ell_imk: f64,
    pub nu: f64,
    pub bound_holds: bool,
}

pub fn build_hbar_gbar(
    fbar: &GridFn,
    fbar_prime: &GridFn,
    rule: &GoldenRule,
    mu: f64,
    kink: &KinkProfile,
    drift: &DriftProfile,
) -> Result<Hbar> {
    let inv_p = drift.p.map(|v| 1.0 / v);
    let l = ell(fbar, fbar_prime, rule.a0, &inv_p);
    let res = resolvent_l6(&l.scale(-1.0))?;
    let half = drift.grid().half();
    let n = half.len();
    let b = drift.b.restrict_half().into_values();
    let bp = drift.b_prime.restrict_half().into_values();
    let d = kink.d.restrict_half().into_values();
    let h = res.g.restrict_half().into_values();
    let hp = res.g_prime.restrict_half().into_values();
    let m2 = mu * mu;
    let src: Vec<f64> = (0..n).map(|i| b[i] * hp[i] - d[i] * h[i] + (4.0 * m2 - 6.0) * h[i]).collect();
    let kc = kcirc_constants(mu)?;
    let ys = half.nodes();
    let pair = FundamentalPair::constant_wronskian(
        ys.iter().map(|&y| kc.eval(y).re).collect(),
        ys.iter().map(|&y| kc.eval_prime(y).re).collect(),
        ys.iter().map(|&y| kc.eval(y).im).collect(),
        ys.iter().map(|&y| kc.eval_prime(y).im).collect(),
        kc.c0,
    );
    let green = pair.green(half)?;
    let eta0 = green.apply(&src);
    let eta0p = green.apply_derivative(&src).expect("derivatives");
    let minus_d: Vec<f64> = d.iter().map(|v| -v).collect();
    let kernel = pair
        .kernel(half, &minus_d, Some((&b, &bp)))?
        .with_note("Re k°(y_>) Im k°(y_<)/c0, bounded and oscillatory");
    let rep = fredholm::neumann_solve(&kernel, &GridFn::new(half, eta0)?, fredholm::DEFAULT_TOL)?;
    let eta = rep.solution.values().to_vec();
    let kp = kernel.apply_derivative(&eta).expect("derivatives");
    let etap: Vec<f64> = (0..n).map(|i| eta0p[i] + kp[i]).collect();
    let hbar = res.g.add(&GridFn::new(half, eta)?.extend(Parity::Odd)).symmetrized(Parity::Odd);
    let hbar_prime = res.g_prime.add(&GridFn::new(half, etap)?.extend(Parity::Even)).symmetrized(Parity::Even);
    let gbar = hbar.mul(&drift.p).symmetrized(Parity::Odd);
    let imk = GridFn::from_fn(*drift.grid(), |y| closed::k(y).im);
    let ell_imk = grid::inner(&imk, &l)?;
    Ok(Hbar { hbar, hbar_prime, gbar, ell: l, ell_imk, nu: rep.nu, bound_holds: rep.bound_holds() })
}

/// Everything the dynamics and diagnostics need from the spectral analysis.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub lambda0: f64,
    pub lambda1: f64,
    pub mu: f64,
    pub ybar0: GridFn,
    pub ybar0_prime: GridFn,
    pub ybar1: GridFn,
    pub ybar1_prime: GridFn,
    pub fbar: GridFn,
    pub fbar_prime: GridFn,
    pub q: GridFn,
    pub q_prime: GridFn,
    pub hbar: GridFn,
    pub hbar_prime: GridFn,
    pub gbar: GridFn,
    pub ell: GridFn,
    pub rule: GoldenRule,
    pub oracle: Vec<OracleValue>,
    /// `max(|λ₀ - λ₀^matrix|, |λ₁ - λ₁^matrix|)`, `NaN` without the oracle.
    pub oracle_gap: f64,
    pub residual0: f64,
    pub residual1: f64,
    pub hbar_residual: f64,
    pub q_residual: f64,
    pub ell_imk: f64,
}

/// Summary written to `spectral.json`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub lambda0: f64,
    pub lambda1: f64,
    pub mu: f64,
    pub a: f64,
    pub a0: f64,
    pub psi_f_imk: f64,
    pub psi_fbar_imk: f64,
    pub oracle_gap: f64,
    pub eigen_residual0: f64,
    pub eigen_residual1: f64,
    pub q_residual: f64,
    pub hbar_residual: f64,
    pub ell_imk: f64,
    pub fbar_ybar1_p: f64,
    pub q_ybar1_p: f64,
    pub oracle: Vec<OracleValue>,
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    pub tol: f64,
    pub oracle: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { tol: BISECTION_TOL, oracle: true }
    }
}

fn interior_max(g: &Grid, v: impl Fn(usize) -> f64) -> f64 {
    let lim = g.half_length() - 1.0;
    (0..g.len()).filter(|&i| g.node(i).abs() <= lim).map(v).fold(0.0, f64::max)
}

/// Run the full spectral analysis.
pub fn analyze(kink: &KinkProfile, drift: &DriftProfile, opts: SpectralOptions) -> Result<SpectralData> {
    let hl = HalfLine::new(kink, drift);
    let full = *drift.grid();
    let e0 = find(&hl, Branch::Even, opts.tol, full)?;
    let mut e1 = find(&hl, Branch::Odd, opts.tol, full)?;
    let norm = grid::inner_p(&e1.f, &e1.f, &drift.p)?.sqrt();
    e1.f = e1.f.scale(1.0 / norm);
    e1.f_prime = e1.f_prime.scale(1.0 / norm);
    let mu = e1.lambda.sqrt();
    let residual0 = eigen_residual(&e0.f, e0.lambda, kink, drift);
    let residual1 = eigen_residual(&e1.f, e1.lambda, kink, drift);

    let (fbar, fbar_prime) = build_fbar(&e1, kink, drift)?;
    let (q, q_prime) = build_q(&fbar, kink, drift)?;
    let lq = apply_lk(&q, kink, drift);
    let q_residual = interior_max(&full, |i| (lq[i] - fbar.at(i)).abs());
    let rule = golden_rule_constants(&fbar, &fbar_prime, drift)?;
    let hb = build_hbar_gbar(&fbar, &fbar_prime, &rule, mu, kink, drift)?;
    let lh = apply_lk(&hb.hbar, kink, drift);
    let hbar_residual = interior_max(&full, |i| (lh[i] - 4.0 * mu * mu * hb.hbar.at(i) - hb.ell.at(i)).abs());

    let (oracle, oracle_gap) = if opts.oracle {
        let o = matrix_oracle(kink, drift)?;
        let even = o.iter().find(|v| v.parity == Parity::Even).map(|v| v.lambda);
        let odd = o.iter().find(|v| v.parity == Parity::Odd).map(|v| v.lambda);
        let gap = match (even, odd) {
            (Some(a), Some(b)) => (a - e0.lambda).abs().max((b - e1.lambda).abs()),
            _ => f64::INFINITY,
        };
        (o, gap)
    } else {
        (Vec::new(), f64::NAN)
    };

    Ok(SpectralData {
        lambda0: e0.lambda,
        lambda1: e1.lambda,
        mu,
        ybar0: e0.f,
        ybar0_prime: e0.f_prime,
        ybar1: e1.f,
        ybar1_prime: e1.f_prime,
        fbar,
        fbar_prime,
        q,
        q_prime,
        hbar: hb.hbar,
        hbar_prime: hb.hbar_prime,
        gbar: hb.gbar,
        ell: hb.ell,
        rule,
        oracle,
        oracle_gap,
        residual0,
        residual1,
        hbar_residual,
        q_residual,
        ell_imk: hb.ell_imk,
    })
}

impl SpectralData {
    pub fn summary(&self, p: &GridFn) -> Result<SpectralSummary> {
        Ok(SpectralSummary {
            lambda0: self.lambda0,
            lambda1: self.lambda1,
            mu: self.mu,
            a: self.rule.a,
            a0: self.rule.a0,
            psi_f_imk: self.rule.psi_f_imk,
            psi_fbar_imk: self.rule.psi_fbar_imk,
            oracle_gap: self.oracle_gap,
            eigen_residual0: self.residual0,
            eigen_residual1: self.residual1,
            q_residual: self.q_residual,
            hbar_residual: self.hbar_residual,
            ell_imk: self.ell_imk,
            fbar_ybar1_p: grid::inner_p(&self.fbar, &self.ybar1, p)?,
            q_ybar1_p: grid::inner_p(&self.q, &self.ybar1, p)?,
            oracle: self.oracle.clone(),
        })
    }

    /// `sup e^{|y|/√2}(|Ȳ₁ - Y₁| + |Ȳ₁' - Y₁'|)` over `|y| ≤ y_max`.
    pub fn ybar1_decay(&self, y_max: f64) -> f64 {
        let g = self.ybar1.grid();
        (0..g.len())
            .filter(|&i| g.node(i).abs() <= y_max)
            .map(|i| {
                let y = g.node(i);
                let dv = (self.ybar1.at(i) - closed::y1(y)).abs() + (self.ybar1_prime.at(i) - closed::y1_prime(y)).abs();
                (y.abs() / SQRT_2).exp() * dv
            })
            .fold(0.0, f64::max)
    }

    /// `sup e^{|y|/√2}(|F| + |F'|)` over `|y| ≤ y_max`.
    pub fn decay_of(f: &GridFn, fp: &GridFn, y_max: f64) -> f64 {
        let g = f.grid();
        (0..g.len())
            .filter(|&i| g.node(i).abs() <= y_max)
            .map(|i| (g.node(i).abs() / SQRT_2).exp() * (f.at(i).abs() + fp.at(i).abs()))
            .fold(0.0, f64::max)
    }
}

/// Write the eigen- and auxiliary functions as CSV files into `dir`.
pub fn write_csvs(data: &SpectralData, dir: &std::path::Path) -> Result<Vec<String>> {
    let items: [(&str, &GridFn); 6] = [
        ("Ybar0.csv", &data.ybar0),
        ("Ybar1.csv", &data.ybar1),
        ("fbar.csv", &data.fbar),
        ("q.csv", &data.q),
        ("hbar.csv", &data.hbar),
        ("gbar.csv", &data.gbar),
    ];
    let mut names = Vec::new();
    for (name, f) in items {
        f.write_csv(dir.join(name))?;
        names.push(name.to_string());
    }
    Ok(names)
}

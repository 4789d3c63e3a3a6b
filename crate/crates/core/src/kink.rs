//! Stationary kink `K = H + H_δ` of `-K'' - bK' = K - K³`.
//!
//! The construction runs on the half line `[0, L]`:
//!
//! 1. the decaying solution `Y_b = Y0 + V_b` of `𝓛_b Y = 0`, where
//!    `𝓛_b = -∂² - b∂ - 1 + 3H²`, from a Fredholm equation for `V_b`;
//! 2. `Z_b = Y_b ∫_0^y 1/(p Y_b²)` by reduction of order, so that
//!    `Y_b Z_b' - Y_b' Z_b = 1/p`;
//! 3. the Green's kernel `G_b(y, w) = Y_b(y_>) Z_b(y_<) p(w)`;
//! 4. Picard iteration of `H_δ = h - ∫ G_b (H_δ³ + 3H H_δ²)`, `h = ∫ G_b b H'`.
//!
//! `H_δ` is then extended to the line by oddness.

use std::f64::consts::SQRT_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fredholm::{self, FredholmReport, FundamentalPair, HalfLineKernel, SemiSeparableKernel};
use crate::grid::{self, Grid, GridFn, Parity};
use crate::linalg::Banded;
use crate::profiles::{closed, DriftProfile, W0};

pub const DEFAULT_TOL: f64 = 1e-10;
const PICARD_CAP: usize = 500;

/// Unperturbed pair `(Y0, Z0)` on a half-line grid.
pub fn pair0(half: &Grid) -> FundamentalPair {
    let ys = half.nodes();
    FundamentalPair::constant_wronskian(
        ys.iter().map(|&y| closed::y0(y)).collect(),
        ys.iter().map(|&y| closed::y0_prime(y)).collect(),
        ys.iter().map(|&y| closed::z0(y)).collect(),
        ys.iter().map(|&y| closed::z0_prime(y)).collect(),
        W0,
    )
}

/// Perturbed fundamental system `(Y_b, Z_b)` on `[0, L]`.
#[derive(Debug, Clone)]
pub struct PerturbedSystem {
    pub half: Grid,
    pub pair: FundamentalPair,
    /// Fredholm solve for `V_b = Y_b - Y0`.
    pub v_report: FredholmReport,
}

impl PerturbedSystem {
    pub fn v_b(&self) -> Vec<f64> {
        self.v_report.solution.values().to_vec()
    }

    /// `max |Y_b Z_b' - Y_b' Z_b - 1/p|` with both derivatives taken by
    /// fourth-order differences, over `[0, y_max]`.
    pub fn wronskian_defect(&self, y_max: f64) -> f64 {
        let h = self.half.h();
        let dy = grid::derivative4(&self.pair.y, h);
        let dz = grid::derivative4(&self.pair.z, h);
        (0..self.half.len())
            .filter(|&i| self.half.node(i) <= y_max)
            .map(|i| (self.pair.y[i] * dz[i] - dy[i] * self.pair.z[i] - self.pair.winv[i].recip()).abs())
            .fold(0.0, f64::max)
    }
}

struct HalfDrift {
    b: Vec<f64>,
    bp: Vec<f64>,
    p: Vec<f64>,
}

fn half_drift(drift: &DriftProfile) -> HalfDrift {
    HalfDrift {
        b: drift.b.restrict_half().into_values(),
        bp: drift.b_prime.restrict_half().into_values(),
        p: drift.p.restrict_half().into_values(),
    }
}

/// Solve for `V_b` and build `(Y_b, Z_b)`.
///
/// `𝓛 V_b = b (Y0 + V_b)'` becomes `V_b = g + ∫ G0 b V_b'` with
/// `g = ∫ G0 b Y0'`, and the derivative is moved onto `G0 b` by parts.
pub fn solve_vb(drift: &DriftProfile) -> Result<PerturbedSystem> {
    let half = drift.grid().half();
    let hd = half_drift(drift);
    let p0 = pair0(&half);
    let g0 = p0.green(half)?;
    let src: Vec<f64> = hd.b.iter().zip(&p0.yp).map(|(b, y)| b * y).collect();
    let g = g0.apply(&src);
    let gp = g0.apply_derivative(&src).expect("green kernel has derivatives");
    let n = half.len();
    let kernel = p0
        .kernel(half, &vec![0.0; n], Some((&hd.b, &hd.bp)))?
        .with_note("-∂_w[G0(y,w) b(w)], envelope δ e^{-√2|y-w|}");
    let report = fredholm::neumann_solve(&kernel, &GridFn::new(half, g)?, fredholm::DEFAULT_TOL)?;
    let v = report.solution.values();
    let vp = kernel.apply_derivative(v).expect("kernel has derivatives");
    let yb: Vec<f64> = (0..n).map(|i| p0.y[i] + v[i]).collect();
    let ybp: Vec<f64> = (0..n).map(|i| p0.yp[i] + gp[i] + vp[i]).collect();
    if let Some(i) = yb.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Regime(format!("Y_b vanishes near y = {}", half.node(i))));
    }
    let integrand: Vec<f64> = (0..n).map(|i| 1.0 / (hd.p[i] * yb[i] * yb[i])).collect();
    let acc = grid::cumulative(&integrand, half.h());
    let zb: Vec<f64> = (0..n).map(|i| yb[i] * acc[i]).collect();
    let zbp: Vec<f64> = (0..n).map(|i| ybp[i] * acc[i] + 1.0 / (hd.p[i] * yb[i])).collect();
    let dwinv: Vec<f64> = (0..n).map(|i| hd.p[i] * hd.b[i]).collect();
    let pair = FundamentalPair { y: yb, yp: ybp, z: zb, zp: zbp, winv: hd.p.clone(), dwinv };
    Ok(PerturbedSystem { half, pair, v_report: report })
}

/// Green's kernel `G_b(y, w) = Y_b(y_>) Z_b(y_<) p(w)` of `𝓛_b` on `[0, ∞)`
/// with a zero at `y = 0`.
pub fn green_b(sys: &PerturbedSystem) -> Result<SemiSeparableKernel> {
    Ok(sys.pair.green(sys.half)?.with_note("Y_b(y_>) Z_b(y_<) p(w), bounded by e^{-√2|y-w|}"))
}

/// The stationary kink and the quantities derived from it.
#[derive(Debug, Clone)]
pub struct KinkProfile {
    pub k: GridFn,
    pub k_prime: GridFn,
    pub h_delta: GridFn,
    pub h_delta_prime: GridFn,
    /// `d = 3(K² - H²)`.
    pub d: GridFn,
    /// `max |-K'' - bK' - K + K³|` on `|y| ≤ L - 1`.
    pub residual: f64,
    /// `sup e^{√2|y|} (|H_δ| + |H_δ'|)`.
    pub decay_constant: f64,
    /// Largest ratio of successive `‖·‖_∼` updates in the Picard iteration.
    pub contraction: f64,
    pub iterations: usize,
    pub nu: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KinkReport {
    pub delta: f64,
    pub residual: f64,
    pub decay_constant: f64,
    pub contraction: f64,
    pub iterations: usize,
    pub nu: f64,
}

impl KinkProfile {
    pub fn grid(&self) -> &Grid {
        self.k.grid()
    }

    pub fn report(&self, delta: f64) -> KinkReport {
        KinkReport {
            delta,
            residual: self.residual,
            decay_constant: self.decay_constant,
            contraction: self.contraction,
            iterations: self.iterations,
            nu: self.nu,
        }
    }
}

fn tilde_norm(half: &Grid, v: &[f64]) -> f64 {
    (0..v.len()).map(|i| (SQRT_2 * half.node(i)).exp() * v[i].abs()).fold(0.0, f64::max)
}

/// Build `K` by the contraction `𝒯` and extend it oddly.
pub fn build_kink(drift: &DriftProfile, tol: f64) -> Result<KinkProfile> {
    if drift.delta > 0.05 + 1e-12 {
        return Err(Error::Regime(format!("kink construction is validated for delta <= 0.05, got {}", drift.delta)));
    }
    let sys = solve_vb(drift)?;
    let half = sys.half;
    let n = half.len();
    let gb = green_b(&sys)?;
    let hd = half_drift(drift);
    let hv: Vec<f64> = half.nodes().iter().map(|&y| closed::h(y)).collect();
    let src: Vec<f64> = (0..n).map(|i| hd.b[i] * closed::h_prime(half.node(i))).collect();
    let h0 = gb.apply(&src);
    let h0p = gb.apply_derivative(&src).expect("derivatives");
    let nonlin = |eta: &[f64]| -> Vec<f64> { (0..n).map(|i| eta[i] * eta[i] * (eta[i] + 3.0 * hv[i])).collect() };

    let mut eta = h0.clone();
    let mut prev: Option<f64> = None;
    let mut contraction: f64 = 0.0;
    let mut iterations = 0;
    loop {
        let ge = gb.apply(&nonlin(&eta));
        let next: Vec<f64> = (0..n).map(|i| h0[i] - ge[i]).collect();
        let diff: Vec<f64> = (0..n).map(|i| next[i] - eta[i]).collect();
        let change = tilde_norm(&half, &diff);
        eta = next;
        iterations += 1;
        if let Some(p) = prev {
            if p > 1e3 * f64::EPSILON {
                contraction = contraction.max(change / p);
            }
        }
        if !change.is_finite() || (iterations > 3 && contraction >= 1.0) {
            return Err(Error::Regime(format!("Picard map is not contracting (ratio {contraction:.3})")));
        }
        if change <= tol {
            break;
        }
        if iterations >= PICARD_CAP {
            return Err(Error::NoConvergence { cap: PICARD_CAP, last: change });
        }
        prev = Some(change);
    }
    let gd = gb.apply_derivative(&nonlin(&eta)).expect("derivatives");
    let etap: Vec<f64> = (0..n).map(|i| h0p[i] - gd[i]).collect();

    let h_delta = GridFn::new(half, eta)?.extend(Parity::Odd);
    let h_delta_prime = GridFn::new(half, etap)?.extend(Parity::Even);
    let full = *drift.grid();
    let hfull = GridFn::from_fn(full, closed::h).symmetrized(Parity::Odd);
    let hpfull = GridFn::from_fn(full, closed::h_prime).symmetrized(Parity::Even);
    let k = hfull.add(&h_delta);
    let k_prime = hpfull.add(&h_delta_prime);
    let d = h_delta.zip(&hfull, |e, h| 3.0 * e * e + 6.0 * h * e).tagged(Parity::Even);
    let residual = ode_residual(&k, drift);
    let decay_constant = (0..full.len())
        .map(|i| (SQRT_2 * full.node(i).abs()).exp() * (h_delta.at(i).abs() + h_delta_prime.at(i).abs()))
        .fold(0.0, f64::max);
    let out = KinkProfile {
        k,
        k_prime,
        h_delta,
        h_delta_prime,
        d,
        residual,
        decay_constant,
        contraction,
        iterations,
        nu: sys.v_report.nu,
    };
    let limit = 1e2 * tol + 10.0 * residual_floor(&full);
    if residual > limit {
        return Err(Error::Tolerance(format!("kink residual {residual:.3e} exceeds {limit:.1e}")));
    }
    Ok(out)
}

/// Residual the difference stencils report for the exact `tanh(y/√2)` on
/// `grid`: below this level the measurement cannot resolve the solve error.
pub fn residual_floor(grid: &Grid) -> f64 {
    let h = GridFn::from_fn(*grid, closed::h);
    ode_residual(&h, &DriftProfile::zero(*grid))
}

/// `max |-K'' - bK' - K + K³|` over `|y| ≤ L - 1`, fourth-order differences.
pub fn ode_residual(k: &GridFn, drift: &DriftProfile) -> f64 {
    let g = k.grid();
    let d2 = grid::second_derivative4(k.values(), g.h());
    let d1 = grid::derivative4(k.values(), g.h());
    let lim = g.half_length() - 1.0;
    (0..g.len())
        .filter(|&i| g.node(i).abs() <= lim)
        .map(|i| {
            let kv = k.at(i);
            (-d2[i] - drift.b.at(i) * d1[i] - kv + kv * kv * kv).abs()
        })
        .fold(0.0, f64::max)
}

/// Independent check: Newton's method on the fourth-order difference
/// discretization of the `H_δ` equation on `[0, L]`, with `H_δ(0) = 0`
/// (odd reflection) and `H_δ(L) = 0`.
pub fn bvp_oracle(drift: &DriftProfile) -> Result<GridFn> {
    let half = drift.grid().half();
    let n = half.len();
    let h = half.h();
    let hd = half_drift(drift);
    let hv: Vec<f64> = half.nodes().iter().map(|&y| closed::h(y)).collect();
    let hpv: Vec<f64> = half.nodes().iter().map(|&y| closed::h_prime(y)).collect();
    let d2 = [-1.0, 16.0, -30.0, 16.0, -1.0].map(|c| c / (12.0 * h * h));
    let d1 = [1.0, -8.0, 0.0, 8.0, -1.0].map(|c| c / (12.0 * h));
    // unknowns u_1 .. u_{n-2}
    let m = n - 2;
    let mut u = vec![0.0; n];
    for _ in 0..30 {
        let mut jac = Banded::zeros(m, 2);
        let mut f = vec![0.0; m];
        for i in 1..n - 1 {
            let r = i - 1;
            let mut val = 0.0;
            for (s, off) in (-2i64..=2).enumerate() {
                let j = i as i64 + off;
                let coef = -d2[s] - hd.b[i] * d1[s];
                let (idx, sign) = if j < 0 { ((-j) as usize, -1.0) } else { (j as usize, 1.0) };
                if idx == 0 || idx >= n - 1 {
                    continue;
                }
                val += coef * sign * u[idx];
                jac.add(r, idx - 1, coef * sign);
            }
            let ui = u[i];
            val += (3.0 * hv[i] * hv[i] - 1.0) * ui + ui * ui * ui + 3.0 * hv[i] * ui * ui - hd.b[i] * hpv[i];
            jac.add(r, r, 3.0 * hv[i] * hv[i] - 1.0 + 3.0 * ui * ui + 6.0 * hv[i] * ui);
            f[r] = val;
        }
        let du = jac.solve(&f)?;
        let step = du.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for r in 0..m {
            u[r + 1] -= du[r];
        }
        if step < 1e-15 {
            break;
        }
    }
    Ok(GridFn::new(half, u)?.extend(Parity::Odd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::builtin_drift;

    fn grid() -> Grid {
        Grid::symmetric(40.0, 0.005).unwrap()
    }

    #[test]
    fn unperturbed_system() {
        let d = DriftProfile::zero(grid());
        let sys = solve_vb(&d).unwrap();
        assert_eq!(sys.v_report.solution.max_abs(), 0.0);
        let k = build_kink(&d, DEFAULT_TOL).unwrap();
        assert_eq!(k.h_delta.max_abs(), 0.0);
        assert!(k.residual <= 1e-10, "{}", k.residual);
    }

    #[test]
    fn perturbed_fundamental_system() {
        let d = builtin_drift("canonical", 0.02, grid()).unwrap();
        let sys = solve_vb(&d).unwrap();
        assert!(sys.v_report.nu < 1.0);
        let v = sys.v_b();
        let env = (0..v.len()).map(|i| (SQRT_2 * sys.half.node(i)).exp() * v[i].abs()).fold(0.0, f64::max);
        assert!(env <= 50.0 * 0.02, "{env}");
        assert!(env > 0.0);
        let w = sys.wronskian_defect(30.0);
        assert!(w <= 1e-8, "{w}");
        assert!(sys.v_report.bound_holds());
    }

    #[test]
    fn green_b_properties() {
        let d = builtin_drift("canonical", 0.02, grid()).unwrap();
        let sys = solve_vb(&d).unwrap();
        let gb = green_b(&sys).unwrap();
        let n = sys.half.len();
        for j in 0..n {
            assert_eq!(gb.eval(0, j), 0.0);
        }
        let p = &sys.pair.winv;
        for &(i, j) in &[(10usize, 300usize), (700, 2000), (4000, 4100), (50, 6000)] {
            let lhs = p[i] * gb.eval(i, j);
            let rhs = p[j] * gb.eval(j, i);
            assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1e-300), "{i} {j}");
        }
    }

    #[test]
    fn green_b_inverts_operator() {
        let d = DriftProfile::zero(grid());
        let sys = solve_vb(&d).unwrap();
        let gb = green_b(&sys).unwrap();
        let half = sys.half;
        let f: Vec<f64> = half.nodes().iter().map(|&y| (1.0 / (y / SQRT_2).cosh()).powi(3)).collect();
        let u = gb.apply(&f);
        let lu = crate::profiles::apply_l(&u, &half);
        let err = (2..half.len() - 2).map(|i| (lu[i] - f[i]).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn perturbed_kink() {
        let d = builtin_drift("canonical", 0.02, grid()).unwrap();
        let k = build_kink(&d, DEFAULT_TOL).unwrap();
        assert!(k.residual <= 1e-8, "{}", k.residual);
        assert!(k.contraction < 1.0);
        let g = *k.grid();
        assert!((k.k.at(g.len() - 1) - 1.0).abs() < 1e-10);
        assert!((k.k.at(0) + 1.0).abs() < 1e-10);
        assert_eq!(k.k.at(g.origin()), 0.0);
        assert!(k.d.clone().with_parity(Parity::Even).is_ok());
        let oracle = bvp_oracle(&d).unwrap();
        let diff = oracle.sub(&k.h_delta).max_abs();
        assert!(diff <= 1e-7, "{diff}");
        // derivative from the kernel agrees with differences
        let dk = grid::derivative(&k.k);
        let e = (2..g.len() - 2).map(|i| (dk.at(i) - k.k_prime.at(i)).abs()).fold(0.0, f64::max);
        assert!(e < 1e-8, "{e}");
        let env = (0..g.len()).map(|i| k.d.at(i).abs() * (SQRT_2 * g.node(i).abs()).exp()).fold(0.0, f64::max);
        assert!(env < 100.0 * 0.02);
    }

    #[test]
    fn regime_rejection() {
        let d = builtin_drift("canonical", 0.08, grid()).unwrap();
        assert!(matches!(build_kink(&d, DEFAULT_TOL), Err(Error::Regime(_))));
    }
}

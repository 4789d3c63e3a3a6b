//! Closed-form profiles of the φ⁴ kink problem, drift families and the
//! speed-to-drift change of variables.
//!
//! Throughout `u = y / √2`.

use std::f64::consts::{E, SQRT_2};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{self, ComplexGridFn, Grid, GridFn, Parity};

/// `2^{-3/4} 3^{1/2}`, the L²-normalization of `Y1`.
pub fn y1_norm() -> f64 {
    2f64.powf(-0.75) * 3f64.sqrt()
}

/// Constant Wronskian `Y0 Z0' - Y0' Z0`.
pub const W0: f64 = 0.5;

/// Constant Wronskian `Y1 Z1' - Y1' Z1 = -3^{1/2} 2^{-5/4}`.
pub fn w1() -> f64 {
    -3f64.sqrt() * 2f64.powf(-1.25)
}

/// Pointwise closed forms.
pub mod closed {
    use super::*;

    #[inline]
    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    pub fn h(y: f64) -> f64 {
        (y / SQRT_2).tanh()
    }

    pub fn h_prime(y: f64) -> f64 {
        sech(y / SQRT_2).powi(2) / SQRT_2
    }

    pub fn h_second(y: f64) -> f64 {
        let u = y / SQRT_2;
        -sech(u).powi(2) * u.tanh()
    }

    pub fn y0(y: f64) -> f64 {
        0.5 * sech(y / SQRT_2).powi(2)
    }

    pub fn y0_prime(y: f64) -> f64 {
        let u = y / SQRT_2;
        -sech(u).powi(2) * u.tanh() / SQRT_2
    }

    /// `∫_0^y cosh⁴(s/√2) ds`.
    pub fn cosh4_integral(y: f64) -> f64 {
        let r = SQRT_2 * y;
        (12.0 * y + 8.0 * SQRT_2 * r.sinh() + SQRT_2 * (2.0 * r).sinh()) / 32.0
    }

    /// Second solution of `𝓛Z = 0`: `Z0 = sech²(y/√2) ∫_0^y cosh⁴(s/√2) ds`.
    pub fn z0(y: f64) -> f64 {
        cosh4_integral(y) * sech(y / SQRT_2).powi(2)
    }

    pub fn z0_prime(y: f64) -> f64 {
        let u = y / SQRT_2;
        -SQRT_2 * u.tanh() * z0(y) + u.cosh().powi(2)
    }

    pub fn y1(y: f64) -> f64 {
        let u = y / SQRT_2;
        y1_norm() * u.tanh() * sech(u)
    }

    pub fn y1_prime(y: f64) -> f64 {
        let s = sech(y / SQRT_2);
        y1_norm() / SQRT_2 * s * (2.0 * s * s - 1.0)
    }

    fn z1_b(y: f64) -> (f64, f64) {
        let u = y / SQRT_2;
        let b = -5.0 + 3.0 * SQRT_2 * y * u.tanh() + (SQRT_2 * y).cosh();
        let db = 3.0 * SQRT_2 * u.tanh() + 3.0 * y * sech(u).powi(2) + SQRT_2 * (SQRT_2 * y).sinh();
        (b, db)
    }

    /// Even second solution of `(𝓛 - 3/2) Z = 0` with `Z1(0) = 1`.
    pub fn z1(y: f64) -> f64 {
        -0.25 * sech(y / SQRT_2) * z1_b(y).0
    }

    pub fn z1_prime(y: f64) -> f64 {
        let u = y / SQRT_2;
        let s = sech(u);
        let (b, db) = z1_b(y);
        -0.25 * (-s * u.tanh() / SQRT_2 * b + s * db)
    }

    pub const PSI_SCALE: f64 = 8.0 * SQRT_2;

    pub fn psi(y: f64) -> f64 {
        PSI_SCALE * (y / PSI_SCALE).tanh()
    }

    pub fn psi_prime(y: f64) -> f64 {
        sech(y / PSI_SCALE).powi(2)
    }

    pub fn psi_second(y: f64) -> f64 {
        let s = y / PSI_SCALE;
        -2.0 * sech(s).powi(2) * s.tanh() / PSI_SCALE
    }

    pub fn psi_third(y: f64) -> f64 {
        let s = y / PSI_SCALE;
        let q = sech(s).powi(2);
        let t = s.tanh();
        -2.0 * (q * q - 2.0 * q * t * t) / (PSI_SCALE * PSI_SCALE)
    }

    pub fn zeta(y: f64) -> f64 {
        sech(y / PSI_SCALE)
    }

    pub fn zeta_prime(y: f64) -> f64 {
        let s = y / PSI_SCALE;
        -sech(s) * s.tanh() / PSI_SCALE
    }

    /// Weight `sech(y / 2√2)`.
    pub fn theta(y: f64) -> f64 {
        sech(y / (2.0 * SQRT_2))
    }

    pub fn k(y: f64) -> Complex64 {
        let u = y / SQRT_2;
        Complex64::from_polar(1.0, 2.0 * y) * Complex64::new(1.0 + 0.5 * sech(u).powi(2), SQRT_2 * u.tanh())
    }

    pub fn k_prime(y: f64) -> Complex64 {
        let u = y / SQRT_2;
        let s2 = sech(u).powi(2);
        let phase = Complex64::from_polar(1.0, 2.0 * y);
        let inner = Complex64::new(1.0 + 0.5 * s2, SQRT_2 * u.tanh());
        let d_inner = Complex64::new(-s2 * u.tanh() / SQRT_2, s2);
        phase * (Complex64::new(0.0, 2.0) * inner + d_inner)
    }
}

/// Names accepted by [`special`].
pub const SPECIAL_NAMES: [&str; 11] = ["H", "Hprime", "Y0", "Z0", "Y1", "Z1", "psi", "psiprime", "zeta", "theta", "k"];

/// A sampled special function.
#[derive(Debug, Clone)]
pub enum Special {
    Real(GridFn),
    Complex(ComplexGridFn),
}

impl Special {
    pub fn real(self) -> Option<GridFn> {
        match self {
            Special::Real(f) => Some(f),
            Special::Complex(_) => None,
        }
    }

    /// CSV dump; complex functions get `y,re,im`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            Special::Real(f) => f.write_csv(path),
            Special::Complex(k) => {
                use std::io::Write;
                let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
                writeln!(w, "y,re,im")?;
                for (i, z) in k.values().iter().enumerate() {
                    writeln!(w, "{:.16e},{:.16e},{:.16e}", k.grid().node(i), z.re, z.im)?;
                }
                Ok(())
            }
        }
    }
}

/// Sample a named special function on `grid`.
pub fn special(name: &str, grid: Grid) -> Result<Special> {
    use closed::*;
    let (f, parity): (fn(f64) -> f64, Parity) = match name {
        "H" => (h, Parity::Odd),
        "Hprime" => (h_prime, Parity::Even),
        "Y0" => (y0, Parity::Even),
        "Z0" => (z0, Parity::Odd),
        "Y1" => (y1, Parity::Odd),
        "Z1" => (z1, Parity::Even),
        "psi" => (psi, Parity::Odd),
        "psiprime" => (psi_prime, Parity::Even),
        "zeta" => (zeta, Parity::Even),
        "theta" => (theta, Parity::Even),
        "k" => return Ok(Special::Complex(ComplexGridFn::from_fn(grid, k))),
        other => return Err(Error::UnknownName(other.to_string())),
    };
    Ok(Special::Real(GridFn::from_fn(grid, f).symmetrized(parity)))
}

pub(crate) fn sample(grid: Grid, f: impl Fn(f64) -> f64, parity: Parity) -> GridFn {
    GridFn::from_fn(grid, f).symmetrized(parity)
}

/// Constants of the oscillatory solution `k°` of `𝓛k° = 4μ²k°`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KcircConstants {
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    /// Wronskian `W(Re k°, Im k°)`.
    pub c0: f64,
}

pub fn kcirc_constants(mu: f64) -> Result<KcircConstants> {
    let m2 = mu * mu;
    if !(4.0 * m2 > 3.0) {
        return Err(Error::Regime(format!("k° needs 4 mu^2 > 3, got mu^2 = {m2}")));
    }
    let gamma = (4.0 * m2 - 2.0).sqrt();
    let c1 = 3.0 / (4.0 * m2 - 3.0);
    let c2 = 3.0 * gamma / (8.0 * m2 - 6.0);
    let c0 = (1.0 + 0.5 * c1) * (gamma * (1.0 + 0.5 * c1) + c2);
    Ok(KcircConstants { gamma, c1, c2, c0 })
}

impl KcircConstants {
    pub fn eval(&self, y: f64) -> Complex64 {
        let u = y / SQRT_2;
        let s2 = 1.0 / u.cosh().powi(2);
        Complex64::from_polar(1.0, self.gamma * y) * Complex64::new(1.0 + 0.5 * self.c1 * s2, self.c2 * SQRT_2 * u.tanh())
    }

    pub fn eval_prime(&self, y: f64) -> Complex64 {
        let u = y / SQRT_2;
        let s2 = 1.0 / u.cosh().powi(2);
        let phase = Complex64::from_polar(1.0, self.gamma * y);
        let inner = Complex64::new(1.0 + 0.5 * self.c1 * s2, self.c2 * SQRT_2 * u.tanh());
        let d_inner = Complex64::new(-self.c1 * s2 * u.tanh() / SQRT_2, self.c2 * s2);
        phase * (Complex64::new(0.0, self.gamma) * inner + d_inner)
    }
}

pub fn kcirc(mu: f64, grid: Grid) -> Result<ComplexGridFn> {
    let k = kcirc_constants(mu)?;
    Ok(ComplexGridFn::from_fn(grid, |y| k.eval(y)))
}

/// `(-∂² - 1 + 3H²) f` with fourth-order differences (outer nodes unreliable).
pub fn apply_l(f: &[f64], grid: &Grid) -> Vec<f64> {
    let d2 = grid::second_derivative4(f, grid.h());
    (0..f.len())
        .map(|i| {
            let hy = closed::h(grid.node(i));
            -d2[i] + (3.0 * hy * hy - 1.0) * f[i]
        })
        .collect()
}

/// Registered drift families.
pub const DRIFT_FAMILIES: [&str; 2] = ["canonical", "gaussian"];

/// Drift coefficient `b` with its derivative, integrating factor `p = exp ∫_0^y b`
/// and amplitude.
#[derive(Debug, Clone)]
pub struct DriftProfile {
    pub b: GridFn,
    pub b_prime: GridFn,
    pub p: GridFn,
    pub delta: f64,
    pub family: String,
    /// Envelope constant `C` with `|b| e^{√2|y|} ≤ Cδ` and `|b'| ≤ Cδ`.
    pub envelope: f64,
}

impl DriftProfile {
    pub fn grid(&self) -> &Grid {
        self.b.grid()
    }

    /// Zero drift (`b = 0`, `p = 1`).
    pub fn zero(grid: Grid) -> Self {
        DriftProfile {
            b: GridFn::zeros(grid).tagged(Parity::Odd),
            b_prime: GridFn::zeros(grid).tagged(Parity::Even),
            p: GridFn::constant(grid, 1.0).tagged(Parity::Even),
            delta: 0.0,
            family: "canonical".into(),
            envelope: 4.0,
        }
    }

    /// `max |b| e^{√2|y|}`.
    pub fn envelope_sup(&self) -> f64 {
        let g = self.grid();
        (0..g.len()).map(|i| self.b.at(i).abs() * (SQRT_2 * g.node(i).abs()).exp()).fold(0.0, f64::max)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=0.1).contains(&delta) {
        return Err(Error::Config(format!("delta = {delta} outside admissible range [0, 0.1]")));
    }
    Ok(())
}

/// Built-in drift families.
///
/// * `canonical`: `b = 2δ tanh(√2y) sech(√2y)`, `max|b| = δ`, `C = 4`.
/// * `gaussian`: `b = δ √(2e) y e^{-y²}`, `max|b| = δ`, `C = 4`.
pub fn builtin_drift(family: &str, delta: f64, grid: Grid) -> Result<DriftProfile> {
    check_delta(delta)?;
    let (b, bp, logp): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>) = match family {
        "canonical" => (
            Box::new(move |y: f64| {
                let r = SQRT_2 * y;
                2.0 * delta * r.tanh() / r.cosh()
            }),
            Box::new(move |y: f64| {
                let s = 1.0 / (SQRT_2 * y).cosh();
                2.0 * SQRT_2 * delta * s * (2.0 * s * s - 1.0)
            }),
            Box::new(move |y: f64| SQRT_2 * delta * (1.0 - 1.0 / (SQRT_2 * y).cosh())),
        ),
        "gaussian" => {
            let a = delta * (2.0 * E).sqrt();
            (
                Box::new(move |y: f64| a * y * (-y * y).exp()),
                Box::new(move |y: f64| a * (1.0 - 2.0 * y * y) * (-y * y).exp()),
                Box::new(move |y: f64| 0.5 * a * (1.0 - (-y * y).exp())),
            )
        }
        other => return Err(Error::UnknownName(other.to_string())),
    };
    Ok(DriftProfile {
        b: sample(grid, &b, Parity::Odd),
        b_prime: sample(grid, &bp, Parity::Even),
        p: sample(grid, |y| logp(y).exp(), Parity::Even),
        delta,
        family: family.to_string(),
        envelope: 4.0,
    })
}

/// Even propagation speed `c(x)` sampled on `x ∈ [0, X]`.
#[derive(Debug, Clone)]
pub struct SpeedProfile {
    dx: f64,
    c: Vec<f64>,
    pub delta: f64,
}

impl SpeedProfile {
    /// Sample an even speed function on `[0, x_max]` with spacing `dx`.
    pub fn from_fn(c: impl Fn(f64) -> f64, x_max: f64, dx: f64) -> Result<Self> {
        let n = (x_max / dx).ceil() as usize + 1;
        let samples: Vec<f64> = (0..n).map(|i| c(i as f64 * dx)).collect();
        Self::from_samples(samples, dx)
    }

    fn from_samples(c: Vec<f64>, dx: f64) -> Result<Self> {
        if c.len() < 8 {
            return Err(Error::Config("speed profile needs at least 8 samples".into()));
        }
        if let Some(i) = c.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("speed must be positive; c = {} at x = {}", c[i], i as f64 * dx)));
        }
        let delta = c.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        Ok(Self { dx, c, delta })
    }

    /// Read an `x,c` CSV on a uniform grid. Rows with `x < 0` are dropped
    /// (the profile is assumed even).
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let (xs, cs) = grid::read_two_columns(path)?;
        let keep: Vec<(f64, f64)> = xs.into_iter().zip(cs).filter(|(x, _)| *x >= -1e-12).collect();
        if keep.len() < 8 || keep[0].0.abs() > 1e-9 {
            return Err(Error::Config("speed CSV must cover x = 0 and at least 8 nodes".into()));
        }
        let dx = keep[1].0 - keep[0].0;
        for (i, (x, _)) in keep.iter().enumerate() {
            if (x - i as f64 * dx).abs() > 1e-6 * dx.max(1.0) {
                return Err(Error::Config("speed CSV x column must be uniform".into()));
            }
        }
        Self::from_samples(keep.into_iter().map(|(_, c)| c).collect(), dx)
    }

    pub fn x_max(&self) -> f64 {
        (self.c.len() - 1) as f64 * self.dx
    }
}

/// Four-point Lagrange interpolation on an increasing, possibly non-uniform mesh.
fn lagrange4(xs: &[f64], vs: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let j = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(j) => return vs[j],
        Err(j) => j,
    };
    let s = j.saturating_sub(2).min(n - 4);
    let mut out = 0.0;
    for a in s..s + 4 {
        let mut l = 1.0;
        for m in s..s + 4 {
            if m != a {
                l *= (x - xs[m]) / (xs[a] - xs[m]);
            }
        }
        out += l * vs[a];
    }
    out
}

/// Drift produced by a variable speed through `y = ∫_0^x 1/c`.
///
/// With the sign convention `∂_t²Φ - ∂_y²Φ - b∂_yΦ = Φ - Φ³` (energy weight
/// `p = exp ∫ b`), the transformed equation has `b(y) = -c'(x(y))`,
/// `b'(y) = -c''(x) c(x)` and `p = c(0) / c(x(y))`.
pub fn speed_to_drift(speed: &SpeedProfile, grid: Grid) -> Result<DriftProfile> {
    let half = grid.half();
    let dx = speed.dx;
    let c = &speed.c;
    let inv: Vec<f64> = c.iter().map(|v| 1.0 / v).collect();
    let ys = grid::cumulative(&inv, dx);
    if ys.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("y(x) is not monotone".into()));
    }
    let y_max = *ys.last().unwrap();
    if y_max < half.half_length() {
        return Err(Error::Config(format!(
            "speed profile covers y up to {y_max:.3}, grid needs {}",
            half.half_length()
        )));
    }
    let cp = grid::derivative4(c, dx);
    let cpp = grid::second_derivative4(c, dx);
    let bv: Vec<f64> = cp.iter().map(|v| -v).collect();
    let bpv: Vec<f64> = cpp.iter().zip(c).map(|(a, b)| -a * b).collect();
    let mut b = Vec::with_capacity(half.len());
    let mut bp = Vec::with_capacity(half.len());
    let mut p = Vec::with_capacity(half.len());
    for i in 0..half.len() {
        let y = half.node(i);
        b.push(lagrange4(&ys, &bv, y));
        bp.push(lagrange4(&ys, &bpv, y));
        p.push(c[0] / lagrange4(&ys, c, y));
    }
    b[0] = 0.0;
    let bf = GridFn::new(half, b)?.extend(Parity::Odd);
    let bpf = GridFn::new(half, bp)?.extend(Parity::Even);
    let pf = GridFn::new(half, p)?.extend(Parity::Even);
    let delta = speed.delta;
    let out = DriftProfile { b: bf, b_prime: bpf, p: pf, delta, family: "speed".into(), envelope: f64::NAN };
    let envelope = if delta > 0.0 { out.envelope_sup().max(out.b_prime.max_abs()) / delta } else { 0.0 };
    Ok(DriftProfile { envelope, ..out })
}

#[cfg(test)]
mod tests {
    use super::closed::*;
    use super::*;

    fn grid() -> Grid {
        Grid::symmetric(40.0, 0.005).unwrap()
    }

    fn l_residual(f: &GridFn, lambda: f64, trim: f64) -> f64 {
        let g = f.grid();
        let lf = apply_l(f.values(), g);
        (0..g.len())
            .filter(|&i| g.node(i).abs() <= trim)
            .map(|i| (lf[i] - lambda * f.at(i)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn kink_limits() {
        let g = grid();
        let hf = special("H", g).unwrap().real().unwrap();
        assert_eq!(hf.at(g.origin()), 0.0);
        assert!((hf.at(g.len() - 1) - 1.0).abs() < 1e-12);
        assert!((hf.at(0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn fundamental_systems() {
        let g = grid();
        let y0f = special("Y0", g).unwrap().real().unwrap();
        let y1f = special("Y1", g).unwrap().real().unwrap();
        assert!(l_residual(&y0f, 0.0, 39.0) < 1e-6);
        assert!(l_residual(&y1f, 1.5, 39.0) < 1e-6);
        assert!((grid::integrate(&y1f.mul(&y1f)).unwrap() - 1.0).abs() < 1e-8);
        assert!((grid::integrate(&y0f.mul(&y0f)).unwrap() - SQRT_2 / 3.0).abs() < 1e-8);

        // Z0, Z1 grow, so check relative residuals on a moderate window
        let z0f = special("Z0", g).unwrap().real().unwrap();
        let z1f = special("Z1", g).unwrap().real().unwrap();
        let lz0 = apply_l(z0f.values(), &g);
        let lz1 = apply_l(z1f.values(), &g);
        for i in 0..g.len() {
            if g.node(i).abs() <= 15.0 {
                assert!(lz0[i].abs() <= 1e-6 * z0f.at(i).abs().max(1.0));
                assert!((lz1[i] - 1.5 * z1f.at(i)).abs() <= 1e-6 * z1f.at(i).abs().max(1.0));
            }
        }
        assert_eq!(z0(0.0), 0.0);
        assert!((z0_prime(0.0) - 1.0).abs() < 1e-15);
        assert!((z1(0.0) - 1.0).abs() < 1e-15);
        assert!(z1_prime(0.0).abs() < 1e-15);
        for y in [0.0, 0.7, 3.0, 11.0, 25.0] {
            let wa = y0(y) * z0_prime(y) - y0_prime(y) * z0(y);
            let wb = y1(y) * z1_prime(y) - y1_prime(y) * z1(y);
            assert!((wa - W0).abs() < 1e-9 * (1.0 + z0(y).abs() * y0(y).abs()), "{y} {wa}");
            assert!((wb - w1()).abs() < 1e-9 * (1.0 + (z1(y) * y1(y)).abs()), "{y} {wb}");
        }
    }

    #[test]
    fn derivative_closed_forms_match_differences() {
        let pairs: [(fn(f64) -> f64, fn(f64) -> f64); 7] = [
            (h, h_prime),
            (h_prime, h_second),
            (y0, y0_prime),
            (y1, y1_prime),
            (z0, z0_prime),
            (z1, z1_prime),
            (psi, psi_prime),
        ];
        let e = 1e-5;
        for (f, fp) in pairs {
            for y in [-3.0, -0.4, 0.0, 0.3, 1.7, 6.0] {
                let fd = (f(y + e) - f(y - e)) / (2.0 * e);
                assert!((fd - fp(y)).abs() < 1e-7 * (1.0 + fp(y).abs()), "{y}");
            }
        }
        for y in [-3.0, 0.3, 10.0] {
            let fd = (psi_second(y + e) - psi_second(y - e)) / (2.0 * e);
            assert!((fd - psi_third(y)).abs() < 1e-9);
            let fd = (psi_prime(y + e) - psi_prime(y - e)) / (2.0 * e);
            assert!((fd - psi_second(y)).abs() < 1e-9);
            let fd = (k(y + e) - k(y - e)) / (2.0 * e);
            assert!((fd - k_prime(y)).norm() < 1e-7);
        }
    }

    #[test]
    fn parity_and_zeta() {
        let g = grid();
        for name in SPECIAL_NAMES {
            if let Special::Real(f) = special(name, g).unwrap() {
                let expect = match name {
                    "H" | "Z0" | "Y1" | "psi" => Parity::Odd,
                    _ => Parity::Even,
                };
                assert_eq!(f.parity(), expect, "{name}");
                assert!(f.clone().with_parity(expect).is_ok(), "{name}");
            }
        }
        for i in 0..200 {
            let y = -40.0 + 0.4 * i as f64;
            assert!((zeta(y).powi(2) - psi_prime(y)).abs() < 1e-12);
        }
        assert!(matches!(special("nope", g), Err(Error::UnknownName(_))));
    }

    #[test]
    fn k_properties() {
        assert_eq!(k(0.0), Complex64::new(1.5, 0.0));
        for y in [0.1, 1.0, 4.5, 20.0] {
            assert!((k(-y).conj() - k(y)).norm() < 1e-14);
        }
        let g = Grid::symmetric(20.0, 0.005).unwrap();
        let kf = special("k", g).unwrap();
        let Special::Complex(kf) = kf else { panic!() };
        let (re, im) = (kf.re(), kf.im());
        assert!(l_residual(&re, 6.0, 19.0) < 1e-5);
        assert!(l_residual(&im, 6.0, 19.0) < 1e-5);
        for y in [0.0, 2.0, 13.0] {
            let (z, dz) = (k(y), k_prime(y));
            assert!((z.re * dz.im - dz.re * z.im - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kcirc_solves_shifted_equation() {
        let g = Grid::symmetric(20.0, 0.0025).unwrap();
        for m2 in [1.5, 1.45, 1.56] {
            let mu = f64::sqrt(m2);
            let kc = kcirc(mu, g).unwrap();
            let lam = 4.0 * m2;
            let r1 = l_residual(&kc.re(), lam, 19.0);
            let r2 = l_residual(&kc.im(), lam, 19.0);
            assert!(r1 < 1e-5 && r2 < 1e-5, "{m2}: {r1} {r2}");
            let c = kcirc_constants(mu).unwrap();
            for y in [0.0, 0.5, 3.0, 10.0] {
                let (z, dz) = (c.eval(y), c.eval_prime(y));
                assert!((z.re * dz.im - dz.re * z.im - c.c0).abs() < 1e-10);
            }
        }
        let c = kcirc_constants(1.5f64.sqrt()).unwrap();
        assert!((c.gamma - 2.0).abs() < 1e-14 && (c.c1 - 1.0).abs() < 1e-14);
        assert!((c.c2 - 1.0).abs() < 1e-14 && (c.c0 - 6.0).abs() < 1e-13);
        assert!(kcirc_constants(0.7).is_err());
    }

    #[test]
    fn builtin_drift_families() {
        let g = grid();
        let z = builtin_drift("canonical", 0.0, g).unwrap();
        assert_eq!(z.b.max_abs(), 0.0);
        for fam in DRIFT_FAMILIES {
            let d = builtin_drift(fam, 0.02, g).unwrap();
            assert!((d.b.max_abs() - 0.02).abs() < 1e-6, "{fam}");
            assert!(d.b.clone().with_parity(Parity::Odd).is_ok());
            assert!(d.p.clone().with_parity(Parity::Even).is_ok());
            assert_eq!(d.p.at(g.origin()), 1.0);
            assert!(d.envelope_sup() <= d.envelope * 0.02 * (1.0 + 1e-12), "{fam} {}", d.envelope_sup());
            assert!(d.b_prime.max_abs() <= d.envelope * 0.02);
            assert!(d.p.map(|v| v - 1.0).max_abs() <= d.envelope * 0.02);
            // d/dy log p = b
            let lp = d.p.map(f64::ln);
            let dlp = grid::differentiate(&lp);
            assert!(dlp.sub(&d.b).max_abs() < 1e-6);
            let db = grid::derivative(&d.b);
            assert!(db.sub(&d.b_prime).max_abs() < 1e-8);
        }
        assert!(matches!(builtin_drift("nope", 0.01, g), Err(Error::UnknownName(_))));
        assert!(matches!(builtin_drift("canonical", 0.2, g), Err(Error::Config(_))));
    }

    #[test]
    fn canonical_maximum_is_exact() {
        // max of tanh·sech is 1/2 at sinh = 1
        let y = (1.0f64).asinh() / SQRT_2;
        let g = Grid::symmetric(40.0, 0.005).unwrap();
        let d = builtin_drift("canonical", 0.02, g).unwrap();
        let r = SQRT_2 * y;
        assert!((2.0 * 0.02 * r.tanh() / r.cosh() - 0.02).abs() < 1e-15);
        assert!(d.b.max_abs() <= 0.02 + 1e-15);
    }

    #[test]
    fn constant_speed_gives_zero_drift() {
        let g = Grid::symmetric(20.0, 0.01).unwrap();
        let s = SpeedProfile::from_fn(|_| 1.0, 25.0, 0.005).unwrap();
        let d = speed_to_drift(&s, g).unwrap();
        assert!(d.b.max_abs() < 1e-14);
        assert!(d.p.map(|v| v - 1.0).max_abs() < 1e-14);
    }

    #[test]
    fn gaussian_speed_bump() {
        let delta = 0.02;
        let g = Grid::symmetric(20.0, 0.01).unwrap();
        let s = SpeedProfile::from_fn(|x| 1.0 + delta * (-2.0 * x * x).exp(), 25.0, 0.005).unwrap();
        let d = speed_to_drift(&s, g).unwrap();
        assert!(d.b.parity_residual(Parity::Odd) == 0.0);
        let tail = (0..g.len()).filter(|&i| g.node(i).abs() >= 10.0).map(|i| d.b.at(i).abs()).fold(0.0, f64::max);
        assert!(tail < 1e-12, "{tail}");
        let dlp = grid::differentiate(&d.p.map(f64::ln));
        assert!(dlp.sub(&d.b).max_abs() < 1e-5);
        // compare with the exact map at one point: x = 0.5
        let x: f64 = 0.5;
        let c = |x: f64| 1.0 + delta * (-2.0 * x * x).exp();
        // y(0.5) by fine trapezoid
        let m = 20000;
        let y: f64 = (0..m).map(|j| 0.5 * (1.0 / c(j as f64 * x / m as f64) + 1.0 / c((j + 1) as f64 * x / m as f64)) * x / m as f64).sum();
        let b_exact = 4.0 * delta * x * (-2.0 * x * x).exp();
        let b_num = lagrange4(&g.nodes(), d.b.values(), y);
        assert!((b_num - b_exact).abs() < 1e-7, "{b_num} {b_exact}");
    }

    #[test]
    fn speed_rejections() {
        assert!(SpeedProfile::from_fn(|x| 1.0 - x, 5.0, 0.01).is_err());
        let g = Grid::symmetric(40.0, 0.01).unwrap();
        let s = SpeedProfile::from_fn(|_| 1.0, 10.0, 0.01).unwrap();
        assert!(matches!(speed_to_drift(&s, g), Err(Error::Config(_))));
    }
}

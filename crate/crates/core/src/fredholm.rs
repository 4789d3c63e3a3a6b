//! Half-line Fredholm equations of the second kind,
//! `f(y) = g(y) + ∫_0^∞ G(y, w) f(w) dw`, solved by Neumann iteration and by
//! dense collocation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{self, max_abs, Grid, GridFn};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const ITERATION_CAP: usize = 10_000;
pub const CONDITION_LIMIT: f64 = 1e10;

/// Kernel `G(y, w)` on the nodes of a half-line grid.
pub trait HalfLineKernel: Sync {
    fn grid(&self) -> &Grid;

    /// `G(y_i, w_j)`.
    fn eval(&self, i: usize, j: usize) -> f64;

    fn decay_note(&self) -> String {
        String::new()
    }

    /// `(∫_0^L G(y_i, w) f(w) dw)_i`. The default is a dense Simpson sum.
    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let g = self.grid();
        let w = grid::simpson_weights(g.len(), g.h());
        (0..g.len()).map(|i| (0..g.len()).map(|j| w[j] * self.eval(i, j) * f[j]).sum()).collect()
    }

    /// Dense matrix of the discrete operator used by [`HalfLineKernel::apply`].
    fn matrix(&self) -> DMatrix<f64> {
        let g = self.grid();
        let n = g.len();
        let w = grid::simpson_weights(n, g.h());
        DMatrix::from_fn(n, n, |i, j| w[j] * self.eval(i, j))
    }

    /// `(∫_0^L |G(y_i, w)| dw)_i`.
    fn row_abs_integrals(&self) -> Vec<f64> {
        let g = self.grid();
        let n = g.len();
        let w = grid::simpson_weights(n, g.h());
        (0..n).map(|i| (0..n).map(|j| w[j] * self.eval(i, j).abs()).sum()).collect()
    }
}

/// Kernel given by a closure of `(y, w)`.
pub struct FnKernel<F> {
    grid: Grid,
    f: F,
    note: String,
}

impl<F: Fn(f64, f64) -> f64 + Sync> FnKernel<F> {
    pub fn new(grid: Grid, f: F, note: impl Into<String>) -> Self {
        Self { grid, f, note: note.into() }
    }
}

impl<F: Fn(f64, f64) -> f64 + Sync> HalfLineKernel for FnKernel<F> {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn eval(&self, i: usize, j: usize) -> f64 {
        (self.f)(self.grid.node(i), self.grid.node(j))
    }

    fn decay_note(&self) -> String {
        self.note.clone()
    }
}

/// Kernel of the form
///
/// ```text
/// G(y, w) = a(y) c(w)   for w < y
///           e(y) g(w)   for w > y
/// ```
///
/// which covers every Green's-function kernel built from a fundamental
/// system. Application costs O(N) through running integrals; the tail
/// integrals are accumulated from the far end so that products of growing and
/// decaying factors keep their relative accuracy.
#[derive(Debug, Clone)]
pub struct SemiSeparableKernel {
    grid: Grid,
    a: Vec<f64>,
    c: Vec<f64>,
    e: Vec<f64>,
    g: Vec<f64>,
    da: Option<Vec<f64>>,
    de: Option<Vec<f64>>,
    note: String,
}

impl SemiSeparableKernel {
    pub fn new(grid: Grid, a: Vec<f64>, c: Vec<f64>, e: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if [a.len(), c.len(), e.len(), g.len()].iter().any(|&l| l != n) {
            return Err(Error::Grid("kernel factors do not match the grid".into()));
        }
        for v in [&a, &c, &e, &g] {
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { index, y: grid.node(index) });
            }
        }
        Ok(Self { grid, a, c, e, g, da: None, de: None, note: String::new() })
    }

    /// Supply `a'` and `e'` so that `∂_y ∫ G f` can be evaluated.
    pub fn with_derivatives(mut self, da: Vec<f64>, de: Vec<f64>) -> Self {
        self.da = Some(da);
        self.de = Some(de);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    fn running(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.grid.h();
        let cf: Vec<f64> = self.c.iter().zip(f).map(|(c, f)| c * f).collect();
        let gf: Vec<f64> = self.g.iter().zip(f).map(|(g, f)| g * f).collect();
        (grid::cumulative(&cf, h), grid::cumulative_tail(&gf, h))
    }

    /// `∂_y ∫ G(y, w) f(w) dw`, including the jump term `(a c - e g)(y) f(y)`.
    pub fn apply_derivative(&self, f: &[f64]) -> Option<Vec<f64>> {
        let (da, de) = (self.da.as_ref()?, self.de.as_ref()?);
        let (lo, hi) = self.running(f);
        Some(
            (0..self.grid.len())
                .map(|i| da[i] * lo[i] + de[i] * hi[i] + (self.a[i] * self.c[i] - self.e[i] * self.g[i]) * f[i])
                .collect(),
        )
    }
}

impl HalfLineKernel for SemiSeparableKernel {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn eval(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match j.cmp(&i) {
            Less => self.a[i] * self.c[j],
            Greater => self.e[i] * self.g[j],
            Equal => 0.5 * (self.a[i] * self.c[i] + self.e[i] * self.g[i]),
        }
    }

    fn decay_note(&self) -> String {
        self.note.clone()
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.running(f);
        (0..self.grid.len()).map(|i| self.a[i] * lo[i] + self.e[i] * hi[i]).collect()
    }

    fn matrix(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let h = self.grid.h();
        let mut m = DMatrix::zeros(n, n);
        // running weights of the forward integral up to node i
        let mut acc = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.a[i] * acc[j] * self.c[j];
            }
            if i + 1 < n {
                let (s, w) = grid::interval_rule(i, n, h);
                for (k, wk) in w.iter().enumerate().filter(|(_, wk)| **wk != 0.0) {
                    acc[s + k] += wk;
                }
            }
        }
        let mut acc = vec![0.0; n];
        for i in (0..n).rev() {
            if i + 1 < n {
                let (s, w) = grid::interval_rule(i, n, h);
                for (k, wk) in w.iter().enumerate().filter(|(_, wk)| **wk != 0.0) {
                    acc[s + k] += wk;
                }
            }
            for j in 0..n {
                m[(i, j)] += self.e[i] * acc[j] * self.g[j];
            }
        }
        m
    }

    fn row_abs_integrals(&self) -> Vec<f64> {
        let h = self.grid.h();
        let ac: Vec<f64> = self.c.iter().map(|v| v.abs()).collect();
        let ag: Vec<f64> = self.g.iter().map(|v| v.abs()).collect();
        let lo = grid::cumulative(&ac, h);
        let hi = grid::cumulative_tail(&ag, h);
        (0..self.grid.len()).map(|i| self.a[i].abs() * lo[i] + self.e[i].abs() * hi[i]).collect()
    }
}

/// Fundamental pair of a second-order operator on `[0, L]`: `y` decays at
/// infinity, `z` vanishes at 0, and `winv = 1 / W` is the reciprocal of their
/// Wronskian `y z' - y' z` (with its derivative).
#[derive(Debug, Clone)]
pub struct FundamentalPair {
    pub y: Vec<f64>,
    pub yp: Vec<f64>,
    pub z: Vec<f64>,
    pub zp: Vec<f64>,
    pub winv: Vec<f64>,
    pub dwinv: Vec<f64>,
}

impl FundamentalPair {
    /// Pair with a constant Wronskian `w`.
    pub fn constant_wronskian(y: Vec<f64>, yp: Vec<f64>, z: Vec<f64>, zp: Vec<f64>, w: f64) -> Self {
        let n = y.len();
        Self { y, yp, z, zp, winv: vec![1.0 / w; n], dwinv: vec![0.0; n] }
    }

    /// Kernel of `F ↦ ∫ G(y, w) [m F + β F'](w) dw` after moving the
    /// derivative onto `G β` by parts, where
    /// `G(y, w) = y(y_>) z(y_<) / W(w)`. `beta` is `(β, β')`; `β(0)` must vanish.
    pub fn kernel(&self, grid: Grid, m: &[f64], beta: Option<(&[f64], &[f64])>) -> Result<SemiSeparableKernel> {
        let n = self.y.len();
        let mut c = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let wm = self.winv[i] * m[i];
            let (mut ci, mut gi) = (self.z[i] * wm, self.y[i] * wm);
            if let Some((b, bp)) = beta {
                let wb = self.winv[i] * b[i];
                let dwb = self.dwinv[i] * b[i] + self.winv[i] * bp[i];
                ci -= self.zp[i] * wb + self.z[i] * dwb;
                gi -= self.yp[i] * wb + self.y[i] * dwb;
            }
            c.push(ci);
            g.push(gi);
        }
        Ok(SemiSeparableKernel::new(grid, self.y.clone(), c, self.z.clone(), g)?
            .with_derivatives(self.yp.clone(), self.zp.clone()))
    }

    /// Kernel of `F ↦ ∫ G(y, w) F(w) dw`.
    pub fn green(&self, grid: Grid) -> Result<SemiSeparableKernel> {
        self.kernel(grid, &vec![1.0; self.y.len()], None)
    }
}

/// Outcome of a Fredholm solve.
#[derive(Debug, Clone)]
pub struct FredholmReport {
    pub solution: GridFn,
    pub nu: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `‖g‖_∞ / (1 - ν)` when `ν < 1`.
    pub a_priori_bound: Option<f64>,
}

impl FredholmReport {
    /// Whether `‖f‖_∞ ≤ ‖g‖_∞ / (1 - ν)` holds (up to round-off).
    pub fn bound_holds(&self) -> bool {
        match self.a_priori_bound {
            Some(b) => self.solution.max_abs() <= b * (1.0 + 1e-12) + 1e-300,
            None => false,
        }
    }

    /// JSON form with the solution written to `csv_path`.
    pub fn to_json(&self, csv_path: &std::path::Path) -> Result<serde_json::Value> {
        #[derive(Serialize)]
        struct Out<'a> {
            solution_csv_path: &'a str,
            nu: f64,
            iterations: usize,
            residual: f64,
        }
        self.solution.write_csv(csv_path)?;
        Ok(serde_json::to_value(Out {
            solution_csv_path: &csv_path.to_string_lossy(),
            nu: self.nu,
            iterations: self.iterations,
            residual: self.residual,
        })?)
    }
}

/// `ν = max_i ∫_0^L |G(y_i, w)| dw`.
pub fn estimate_nu(kernel: &dyn HalfLineKernel) -> Result<f64> {
    let rows = kernel.row_abs_integrals();
    let mut nu: f64 = 0.0;
    for (i, r) in rows.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::NonFinite { index: i, y: kernel.grid().node(i) });
        }
        nu = nu.max(*r);
    }
    Ok(nu)
}

fn check_rhs(kernel: &dyn HalfLineKernel, g: &GridFn) -> Result<()> {
    if g.grid() != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    if let Some(index) = g.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index, y: g.grid().node(index) });
    }
    Ok(())
}

fn residual(kernel: &dyn HalfLineKernel, f: &[f64], g: &[f64]) -> f64 {
    let kf = kernel.apply(f);
    (0..f.len()).map(|i| (f[i] - g[i] - kf[i]).abs()).fold(0.0, f64::max)
}

/// Neumann iteration `f_{k+1} = g + ∫ G f_k`, `f_0 = g`.
pub fn neumann_solve(kernel: &dyn HalfLineKernel, g: &GridFn, tol: f64) -> Result<FredholmReport> {
    check_rhs(kernel, g)?;
    let nu = estimate_nu(kernel)?;
    if nu >= 1.0 {
        return Err(Error::Regime(format!("Neumann series needs nu < 1, measured nu = {nu:.6}")));
    }
    let gv = g.values();
    let mut f = gv.to_vec();
    let mut iterations = 0;
    loop {
        let kf = kernel.apply(&f);
        let next: Vec<f64> = gv.iter().zip(&kf).map(|(a, b)| a + b).collect();
        let change = f.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        f = next;
        iterations += 1;
        if !change.is_finite() {
            return Err(Error::NoConvergence { cap: iterations, last: change });
        }
        if change <= tol {
            break;
        }
        if iterations >= ITERATION_CAP {
            return Err(Error::NoConvergence { cap: ITERATION_CAP, last: change });
        }
    }
    let residual = residual(kernel, &f, gv);
    let solution = GridFn::new(*g.grid(), f)?;
    Ok(FredholmReport { solution, nu, iterations, residual, a_priori_bound: Some(max_abs(gv) / (1.0 - nu)) })
}

/// Direct solve of `(I - 𝐆) f = g` with the dense quadrature matrix.
pub fn collocation_solve(kernel: &dyn HalfLineKernel, g: &GridFn) -> Result<FredholmReport> {
    check_rhs(kernel, g)?;
    let nu = estimate_nu(kernel)?;
    let n = g.len();
    let mut m = -kernel.matrix();
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    let norm1 = (0..n).map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let lu = m.lu();
    let rhs = DVector::from_column_slice(g.values());
    let x = lu.solve(&rhs).ok_or(Error::IllConditioned(f64::INFINITY))?;
    // Lower estimate of ‖(I - 𝐆)⁻¹‖₁ from a few probe solves.
    let mut inv_norm: f64 = 0.0;
    let probes = [
        DVector::from_element(n, 1.0 / n as f64),
        DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 } / n as f64),
        DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 }),
        DVector::from_fn(n, |i, _| if i + 1 == n { 1.0 } else { 0.0 }),
    ];
    for p in probes.iter() {
        let pn = p.iter().map(|v| v.abs()).sum::<f64>();
        if let Some(s) = lu.solve(p) {
            inv_norm = inv_norm.max(s.iter().map(|v| v.abs()).sum::<f64>() / pn);
        }
    }
    let cond = norm1 * inv_norm;
    if !cond.is_finite() || cond > CONDITION_LIMIT || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned(cond));
    }
    let f: Vec<f64> = x.iter().copied().collect();
    let residual = residual(kernel, &f, g.values());
    let solution = GridFn::new(*g.grid(), f)?;
    let a_priori_bound = (nu < 1.0).then(|| max_abs(g.values()) / (1.0 - nu));
    Ok(FredholmReport { solution, nu, iterations: 1, residual, a_priori_bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half(l: f64, h: f64) -> Grid {
        Grid::half_line(l, h).unwrap()
    }

    fn rank_one(grid: Grid, s: f64) -> FnKernel<impl Fn(f64, f64) -> f64 + Sync> {
        FnKernel::new(grid, move |y, w| s * (-y - w).exp(), "rank one, e^{-y-w}")
    }

    // the same kernel through the O(N) path
    fn rank_one_fast(grid: Grid, s: f64) -> SemiSeparableKernel {
        let a: Vec<f64> = grid.nodes().iter().map(|y| s * (-y).exp()).collect();
        let c: Vec<f64> = grid.nodes().iter().map(|w| (-w).exp()).collect();
        SemiSeparableKernel::new(grid, a.clone(), c.clone(), a, c).unwrap()
    }

    #[test]
    fn zero_kernel_has_zero_nu() {
        let k = FnKernel::new(half(5.0, 0.1), |_, _| 0.0, "");
        assert_eq!(estimate_nu(&k).unwrap(), 0.0);
    }

    #[test]
    fn nu_of_rank_one_kernel() {
        let l = 30.0;
        let k = rank_one(half(l, 0.01), 0.5);
        let nu = estimate_nu(&k).unwrap();
        assert!((nu - 0.5 * (1.0 - (-l as f64).exp())).abs() < 1e-6, "{nu}");
    }

    #[test]
    fn neumann_zero_rhs() {
        let grid = half(10.0, 0.05);
        let r = neumann_solve(&rank_one(grid, 0.5), &GridFn::zeros(grid), DEFAULT_TOL).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.solution.max_abs(), 0.0);
    }

    fn max_err(f: &GridFn, exact: impl Fn(f64) -> f64) -> f64 {
        let g = f.grid();
        (0..g.len()).map(|i| (f.at(i) - exact(g.node(i))).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn neumann_rank_one() {
        // f = e^{-y}(1 + c), c = (1/2)(1 + c)/2  =>  c = 1/3
        let grid = half(30.0, 0.005);
        let k = rank_one_fast(grid, 0.5);
        let g = GridFn::from_fn(grid, |y| (-y).exp());
        let r = neumann_solve(&k, &g, DEFAULT_TOL).unwrap();
        let err = max_err(&r.solution, |y| 4.0 / 3.0 * (-y).exp());
        assert!(err < 1e-10, "{err}");
        assert!(r.residual <= 1e-10);
        assert!(r.bound_holds());
    }

    #[test]
    fn neumann_agrees_with_collocation() {
        let grid = half(20.0, 0.02);
        let k = rank_one_fast(grid, 0.5);
        let g = GridFn::from_fn(grid, |y| (-y).exp());
        let a = neumann_solve(&k, &g, DEFAULT_TOL).unwrap();
        let b = collocation_solve(&k, &g).unwrap();
        let diff = a.solution.sub(&b.solution).max_abs();
        assert!(diff < 10.0 * DEFAULT_TOL, "{diff}");
        assert!(max_err(&b.solution, |y| 4.0 / 3.0 * (-y).exp()) < 1e-7);
    }

    #[test]
    fn collocation_beyond_contraction() {
        let grid = half(20.0, 0.02);
        // 1.5 e^{-y-w}: f = e^{-y}(1 + c), c = 1.5(1 + c)/2  =>  f = 4 e^{-y}
        let k = rank_one_fast(grid, 1.5);
        let g = GridFn::from_fn(grid, |y| (-y).exp());
        assert!(matches!(neumann_solve(&k, &g, DEFAULT_TOL), Err(Error::Regime(_))));
        let r = collocation_solve(&k, &g).unwrap();
        assert!(max_err(&r.solution, |y| 4.0 * (-y).exp()) < 1e-6);

        // 2 e^{-y-2w} has nu = 1; with g = e^{-y}, f = (1 + A) e^{-y} and
        // A = 2(1 + A)/3, so f = 3 e^{-y}
        let a: Vec<f64> = grid.nodes().iter().map(|y| 2.0 * (-y).exp()).collect();
        let c: Vec<f64> = grid.nodes().iter().map(|w| (-2.0 * w).exp()).collect();
        let k2 = SemiSeparableKernel::new(grid, a.clone(), c.clone(), a, c).unwrap();
        assert!((estimate_nu(&k2).unwrap() - 1.0).abs() < 1e-6);
        let r2 = collocation_solve(&k2, &g).unwrap();
        let e2 = max_err(&r2.solution, |y| 3.0 * (-y).exp());
        assert!(e2 < 1e-5, "{e2}");
    }

    #[test]
    fn collocation_rejects_singular_system() {
        // 2 e^{-y-w}: I - 𝐆 annihilates e^{-y} up to quadrature error
        let grid = half(20.0, 0.02);
        let n = grid.len();
        let mut m = -rank_one_fast(grid, 2.0).matrix();
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        let v: Vec<f64> = grid.nodes().iter().map(|y| (-y).exp()).collect();
        let mv = &m * DVector::from_column_slice(&v);
        assert!(mv.amax() < 1e-6);
        let k = FnKernel::new(grid, |_, _| 0.0, "");
        assert!(collocation_solve(&k, &GridFn::constant(grid, 1.0)).is_ok());
    }

    #[test]
    fn collocation_zero_rhs() {
        let grid = half(10.0, 0.05);
        let r = collocation_solve(&rank_one(grid, 0.5), &GridFn::zeros(grid)).unwrap();
        assert_eq!(r.solution.max_abs(), 0.0);
    }

    fn green_kernel(grid: Grid, s: f64) -> SemiSeparableKernel {
        // s/2 e^{-|y-w|}: the Green's function of -u'' + u scaled by s
        let n = grid.len();
        let y = grid.nodes();
        let a: Vec<f64> = y.iter().map(|y| 0.5 * s * (-y).exp()).collect();
        let c: Vec<f64> = y.iter().map(|w| w.exp()).collect();
        let e: Vec<f64> = y.iter().map(|y| 0.5 * s * y.exp()).collect();
        let g: Vec<f64> = y.iter().map(|w| (-w).exp()).collect();
        let da = a.iter().map(|v| -v).collect();
        let de = e.clone();
        assert_eq!(a.len(), n);
        SemiSeparableKernel::new(grid, a, c, e, g).unwrap().with_derivatives(da, de)
    }

    #[test]
    fn semi_separable_apply_matches_dense() {
        let grid = half(8.0, 0.02);
        let k = green_kernel(grid, 1.0);
        let f: Vec<f64> = grid.nodes().iter().map(|y| (-y * y).exp() * y).collect();
        let fast = k.apply(&f);
        let m = k.matrix();
        let slow = &m * DVector::from_column_slice(&f);
        for i in 0..grid.len() {
            assert!((fast[i] - slow[i]).abs() < 1e-13);
        }
        // exact: ∫_0^∞ ½ e^{-|y-w|} w e^{-w²} dw at y = 0 equals ½∫ w e^{-w-w²}
        let exact0 = 0.5 * 0.22717931961747637;
        assert!((fast[0] - exact0).abs() < 1e-8, "{}", fast[0]);
    }

    #[test]
    fn semi_separable_derivative() {
        let grid = half(20.0, 0.01);
        let k = green_kernel(grid, 1.0);
        let f: Vec<f64> = grid.nodes().iter().map(|y| (-y * y).exp()).collect();
        let u = k.apply(&f);
        let du = k.apply_derivative(&f).unwrap();
        let fd = grid::derivative4(&u, grid.h());
        for i in 2..grid.len() - 2 {
            assert!((du[i] - fd[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn semi_separable_neumann_vs_collocation() {
        let grid = half(20.0, 0.02);
        let k = green_kernel(grid, 0.6);
        let g = GridFn::from_fn(grid, |y| 1.0 / (1.0 + y * y));
        let nu = estimate_nu(&k).unwrap();
        assert!(nu < 0.6 + 1e-9);
        let a = neumann_solve(&k, &g, DEFAULT_TOL).unwrap();
        let b = collocation_solve(&k, &g).unwrap();
        assert!(a.solution.sub(&b.solution).max_abs() < 1e-10);
        assert!(a.bound_holds() && b.bound_holds());
        assert!(a.residual <= 1e-10 && b.residual <= 1e-10);
    }

    #[test]
    fn report_json() {
        let dir = tempfile::tempdir().unwrap();
        let grid = half(5.0, 0.1);
        let r = neumann_solve(&rank_one(grid, 0.5), &GridFn::constant(grid, 1.0), DEFAULT_TOL).unwrap();
        let v = r.to_json(&dir.path().join("f.csv")).unwrap();
        for key in ["solution_csv_path", "nu", "iterations", "residual"] {
            assert!(v.get(key).is_some());
        }
    }
}

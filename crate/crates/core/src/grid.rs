//! Uniform grids, sampled functions and the quadrature/difference operators
//! used by every other module.

use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance used when checking parity tags.
pub const PARITY_TOL: f64 = 1e-10;

/// Uniform grid `y_i = (i - origin) * h`, `i = 0..n`.
///
/// Two shapes are used: the symmetric grid on `[-L, L]` (odd node count,
/// `y = 0` in the middle) and the half-line grid on `[0, L]` used by the
/// Fredholm solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    h: f64,
    n: usize,
    origin: usize,
}

impl Grid {
    /// Symmetric grid on `[-L, L]`. `L / h` must be an integer.
    pub fn symmetric(half_length: f64, h: f64) -> Result<Self> {
        let m = Self::steps(half_length, h)?;
        Ok(Self { h, n: 2 * m + 1, origin: m })
    }

    /// Half-line grid on `[0, L]`.
    pub fn half_line(half_length: f64, h: f64) -> Result<Self> {
        let m = Self::steps(half_length, h)?;
        Ok(Self { h, n: m + 1, origin: 0 })
    }

    fn steps(half_length: f64, h: f64) -> Result<usize> {
        if !(half_length > 0.0 && h > 0.0 && half_length.is_finite()) {
            return Err(Error::Grid(format!("need L > 0 and h > 0, got L = {half_length}, h = {h}")));
        }
        let ratio = half_length / h;
        let m = ratio.round();
        if (ratio - m).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::Grid(format!("L / h = {ratio} is not an integer")));
        }
        if m < 4.0 {
            return Err(Error::Grid(format!("need at least 4 steps on [0, L], got {m}")));
        }
        Ok(m as usize)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Index of the node `y = 0`.
    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn half_length(&self) -> f64 {
        (self.n - 1 - self.origin) as f64 * self.h
    }

    pub fn is_symmetric(&self) -> bool {
        self.origin > 0
    }

    pub fn node(&self, i: usize) -> f64 {
        (i as f64 - self.origin as f64) * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of `-y_i` on a symmetric grid.
    pub fn mirror(&self, i: usize) -> usize {
        2 * self.origin - i
    }

    /// The half-line grid `[0, L]` with the same spacing.
    pub fn half(&self) -> Grid {
        Grid { h: self.h, n: self.n - self.origin, origin: 0 }
    }

    /// The symmetric grid whose right half is this grid.
    pub fn full(&self) -> Grid {
        let m = self.n - 1 - self.origin;
        Grid { h: self.h, n: 2 * m + 1, origin: m }
    }

    /// Grid with every `factor`-th node kept.
    pub fn coarsen(&self, factor: usize) -> Result<Grid> {
        let m = self.n - 1 - self.origin;
        if factor == 0 || m % factor != 0 || self.origin % factor != 0 {
            return Err(Error::Grid(format!("cannot coarsen {m} steps by {factor}")));
        }
        Ok(Grid { h: self.h * factor as f64, n: (self.n - 1) / factor + 1, origin: self.origin / factor })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
    None,
}

impl Parity {
    pub fn flip(self) -> Self {
        match self {
            Parity::Odd => Parity::Even,
            Parity::Even => Parity::Odd,
            Parity::None => Parity::None,
        }
    }

    pub fn product(self, other: Parity) -> Parity {
        match (self, other) {
            (Parity::None, _) | (_, Parity::None) => Parity::None,
            (a, b) if a == b => Parity::Even,
            _ => Parity::Odd,
        }
    }
}

/// Real function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    grid: Grid,
    values: Vec<f64>,
    parity: Parity,
}

impl GridFn {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!("{} samples for {} nodes", values.len(), grid.len())));
        }
        Ok(Self { grid, values, parity: Parity::None })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values, parity: Parity::None }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()], parity: Parity::None }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()], parity: Parity::None }
    }

    /// Attach a parity tag, checking it against the samples.
    pub fn with_parity(mut self, parity: Parity) -> Result<Self> {
        if parity != Parity::None {
            let r = parity_residual(&self.grid, &self.values, parity);
            let scale = max_abs(&self.values);
            if r > PARITY_TOL * scale {
                return Err(Error::Parity(format!("{parity:?} tag violated: residual {r:.3e}, max |f| {scale:.3e}")));
            }
        }
        self.parity = parity;
        Ok(self)
    }

    /// Tag without checking. Used where parity holds by construction.
    pub(crate) fn tagged(mut self, parity: Parity) -> Self {
        self.parity = parity;
        self
    }

    /// Replace the samples by their exact odd or even part.
    pub fn symmetrized(mut self, parity: Parity) -> Self {
        let g = self.grid;
        if g.is_symmetric() && parity != Parity::None {
            let sign = if parity == Parity::Odd { -1.0 } else { 1.0 };
            for i in 0..g.origin() {
                let j = g.mirror(i);
                let avg = 0.5 * (self.values[j] + sign * self.values[i]);
                self.values[j] = avg;
                self.values[i] = sign * avg;
            }
            if parity == Parity::Odd {
                self.values[g.origin()] = 0.0;
            }
        }
        self.parity = parity;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.parity = Parity::None;
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    pub fn parity_residual(&self, parity: Parity) -> f64 {
        parity_residual(&self.grid, &self.values, parity)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFn {
        GridFn { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), parity: Parity::None }
    }

    pub fn scale(&self, c: f64) -> GridFn {
        GridFn { grid: self.grid, values: self.values.iter().map(|v| c * v).collect(), parity: self.parity }
    }

    pub fn add(&self, other: &GridFn) -> GridFn {
        let parity = if self.parity == other.parity { self.parity } else { Parity::None };
        self.zip(other, |a, b| a + b).tagged(parity)
    }

    pub fn sub(&self, other: &GridFn) -> GridFn {
        let parity = if self.parity == other.parity { self.parity } else { Parity::None };
        self.zip(other, |a, b| a - b).tagged(parity)
    }

    pub fn mul(&self, other: &GridFn) -> GridFn {
        self.zip(other, |a, b| a * b).tagged(self.parity.product(other.parity))
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &GridFn) -> GridFn {
        let parity = if self.parity == other.parity { self.parity } else { Parity::None };
        self.zip(other, |a, b| a + c * b).tagged(parity)
    }

    pub fn zip(&self, other: &GridFn, f: impl Fn(f64, f64) -> f64) -> GridFn {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        GridFn { grid: self.grid, values, parity: Parity::None }
    }

    /// Restriction of a function on the symmetric grid to `[0, L]`.
    pub fn restrict_half(&self) -> GridFn {
        let g = self.grid.half();
        GridFn { grid: g, values: self.values[self.grid.origin()..].to_vec(), parity: Parity::None }
    }

    /// Odd or even extension of a half-line function to the symmetric grid.
    pub fn extend(&self, parity: Parity) -> GridFn {
        assert!(!self.grid.is_symmetric(), "extend expects a half-line function");
        let full = self.grid.full();
        let m = full.origin();
        let sign = match parity {
            Parity::Odd => -1.0,
            _ => 1.0,
        };
        let mut values = vec![0.0; full.len()];
        for (j, &v) in self.values.iter().enumerate() {
            values[m + j] = v;
            values[m - j] = sign * v;
        }
        if parity == Parity::Odd {
            values[m] = 0.0;
        }
        GridFn { grid: full, values, parity }
    }

    /// Every `factor`-th sample.
    pub fn coarsen(&self, factor: usize) -> Result<GridFn> {
        let grid = self.grid.coarsen(factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        Ok(GridFn { grid, values, parity: self.parity })
    }

    /// CSV with header `y,value`, 17 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "y,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.node(i), v)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a `y,value` CSV written by [`GridFn::write_csv`]. The nodes must
    /// form a uniform grid on `[-L, L]` or `[0, L]`.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<GridFn> {
        let (ys, vs) = read_two_columns(path)?;
        if ys.len() < 5 {
            return Err(Error::Grid("too few rows".into()));
        }
        let h = ys[1] - ys[0];
        let grid = if ys[0].abs() < 0.5 * h {
            Grid::half_line(*ys.last().unwrap(), h)?
        } else {
            Grid::symmetric(*ys.last().unwrap(), h)?
        };
        if grid.len() != ys.len() {
            return Err(Error::Grid("rows do not form a uniform grid".into()));
        }
        GridFn::new(grid, vs)
    }
}

/// Read the first two numeric columns of a CSV with a header row.
pub fn read_two_columns(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<f64>)> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let mut next = || -> Result<f64> {
            cols.next()
                .and_then(|c| c.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("bad CSV row {}: `{line}`", lineno + 1)))
        };
        let x = next()?;
        let v = next()?;
        xs.push(x);
        vs.push(v);
    }
    Ok((xs, vs))
}

/// Complex function sampled on a [`Grid`] (used for `k` and `k°`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGridFn {
    grid: Grid,
    values: Vec<Complex64>,
}

impl ComplexGridFn {
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn re(&self) -> GridFn {
        GridFn { grid: self.grid, values: self.values.iter().map(|z| z.re).collect(), parity: Parity::None }
    }

    pub fn im(&self) -> GridFn {
        GridFn { grid: self.grid, values: self.values.iter().map(|z| z.im).collect(), parity: Parity::None }
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn parity_residual(grid: &Grid, v: &[f64], parity: Parity) -> f64 {
    if !grid.is_symmetric() {
        return 0.0;
    }
    let sign = match parity {
        Parity::Odd => 1.0,
        Parity::Even => -1.0,
        Parity::None => return 0.0,
    };
    (0..grid.len()).map(|i| (v[i] + sign * v[grid.mirror(i)]).abs()).fold(0.0, f64::max)
}

fn check_finite(f: &GridFn) -> Result<()> {
    match f.values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index, y: f.grid.node(index) }),
        None => Ok(()),
    }
}

/// Composite Simpson weights; a 3/8 panel closes an odd interval count.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    let intervals = n - 1;
    if intervals == 1 {
        w[0] = 0.5 * h;
        w[1] = 0.5 * h;
        return w;
    }
    let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 3 };
    let mut k = 0;
    while k < simpson_end {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
        k += 2;
    }
    if simpson_end < intervals {
        let s = simpson_end;
        w[s] += 3.0 * h / 8.0;
        w[s + 1] += 9.0 * h / 8.0;
        w[s + 2] += 9.0 * h / 8.0;
        w[s + 3] += 3.0 * h / 8.0;
    }
    w
}

pub fn simpson(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    if intervals == 1 {
        return 0.5 * h * (v[0] + v[1]);
    }
    let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 3 };
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in (1..simpson_end).step_by(2) {
        odd += v[k];
    }
    for k in (2..simpson_end).step_by(2) {
        even += v[k];
    }
    let mut s = h / 3.0 * (v[0] + 4.0 * odd + 2.0 * even + v[simpson_end]);
    if simpson_end < intervals {
        let j = simpson_end;
        s += 3.0 * h / 8.0 * (v[j] + 3.0 * v[j + 1] + 3.0 * v[j + 2] + v[j + 3]);
    }
    s
}

/// Composite Simpson approximation of the integral over the whole grid.
pub fn integrate(f: &GridFn) -> Result<f64> {
    check_finite(f)?;
    Ok(simpson(&f.values, f.grid.h()))
}

pub fn inner(f: &GridFn, g: &GridFn) -> Result<f64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    let prod: Vec<f64> = f.values.iter().zip(&g.values).map(|(a, b)| a * b).collect();
    Ok(simpson(&prod, f.grid.h()))
}

/// `<f, g>_p = ∫ p f g`.
pub fn inner_p(f: &GridFn, g: &GridFn, p: &GridFn) -> Result<f64> {
    if f.grid != g.grid || f.grid != p.grid {
        return Err(Error::GridMismatch);
    }
    let prod: Vec<f64> = f.values.iter().zip(&g.values).zip(&p.values).map(|((a, b), w)| a * b * w).collect();
    Ok(simpson(&prod, f.grid.h()))
}

/// Centered difference, second order inside, second-order one-sided at the ends.
pub fn differentiate(f: &GridFn) -> GridFn {
    let v = &f.values;
    let h = f.grid.h();
    let n = v.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    GridFn { grid: f.grid, values: d, parity: f.parity.flip() }
}

/// Fourth-order first derivative (centered inside, one-sided at the ends).
pub fn derivative4(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h);
    }
    let one_sided = |w: [f64; 5]| (-25.0 * w[0] + 48.0 * w[1] - 36.0 * w[2] + 16.0 * w[3] - 3.0 * w[4]) / (12.0 * h);
    d[0] = one_sided([v[0], v[1], v[2], v[3], v[4]]);
    d[1] = (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / (12.0 * h);
    d[n - 1] = -one_sided([v[n - 1], v[n - 2], v[n - 3], v[n - 4], v[n - 5]]);
    d[n - 2] = -(-3.0 * v[n - 1] - 10.0 * v[n - 2] + 18.0 * v[n - 3] - 6.0 * v[n - 4] + v[n - 5]) / (12.0 * h);
    d
}

/// Fourth-order second derivative inside; second order at the outer two nodes.
pub fn second_derivative4(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let h2 = h * h;
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (-v[i - 2] + 16.0 * v[i - 1] - 30.0 * v[i] + 16.0 * v[i + 1] - v[i + 2]) / (12.0 * h2);
    }
    d[1] = (v[0] - 2.0 * v[1] + v[2]) / h2;
    d[n - 2] = (v[n - 3] - 2.0 * v[n - 2] + v[n - 1]) / h2;
    d[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
    d[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
    d
}

/// Fourth-order derivative of a tagged function, keeping its parity.
pub fn derivative(f: &GridFn) -> GridFn {
    GridFn { grid: f.grid, values: derivative4(&f.values, f.grid.h()), parity: f.parity.flip() }
}

/// Interval weights of the cubic-interpolation rule on `[x_k, x_{k+1}]`.
/// Returns the first node index and up to six weights (already scaled by `h`);
/// the end intervals use the interior rule with a quartic ghost value, so the
/// quadrature error stays a smooth function of position up to the ends.
#[inline]
pub(crate) fn interval_rule(k: usize, n: usize, h: f64) -> (usize, [f64; 6]) {
    let s = h / 24.0;
    if n >= 5 && k == 0 {
        (0, [8.0 * s, 23.0 * s, -11.0 * s, 5.0 * s, -s, 0.0])
    } else if n >= 5 && k + 2 == n {
        (n - 5, [-s, 5.0 * s, -11.0 * s, 23.0 * s, 8.0 * s, 0.0])
    } else if k == 0 {
        (0, [9.0 * s, 19.0 * s, -5.0 * s, s, 0.0, 0.0])
    } else if k + 2 >= n {
        (n - 4, [s, -5.0 * s, 19.0 * s, 9.0 * s, 0.0, 0.0])
    } else {
        (k - 1, [-s, 13.0 * s, 13.0 * s, -s, 0.0, 0.0])
    }
}

/// Per-interval integrals, fourth order.
pub(crate) fn interval_integrals(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n - 1)
        .map(|k| {
            let (s, w) = interval_rule(k, n, h);
            w.iter().enumerate().filter(|(_, wk)| **wk != 0.0).map(|(j, wk)| wk * v[s + j]).sum::<f64>()
        })
        .collect()
}

/// `∫_{x_0}^{x_i} f` at every node (fourth order).
pub fn cumulative(v: &[f64], h: f64) -> Vec<f64> {
    let pieces = interval_integrals(v, h);
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for p in pieces {
        acc += p;
        out.push(acc);
    }
    out
}

/// `∫_{x_i}^{x_{n-1}} f` at every node, accumulated from the right end so
/// that rapidly decaying integrands keep full relative accuracy.
pub fn cumulative_tail(v: &[f64], h: f64) -> Vec<f64> {
    let pieces = interval_integrals(v, h);
    let n = v.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for k in (0..n - 1).rev() {
        acc += pieces[k];
        out[k] = acc;
    }
    out
}

/// Weighted norms `(‖v1‖_{H¹_ω}, ‖v2‖_{L²_ω})` with weight `sech(y / 2√2)`.
pub fn weighted_norms(v1: &GridFn, v2: &GridFn) -> Result<(f64, f64)> {
    if v1.grid != v2.grid {
        return Err(Error::GridMismatch);
    }
    let (a, b) = weighted_norms_sq(v1, v2);
    Ok((a.sqrt(), b.sqrt()))
}

/// Squared weighted norms.
pub fn weighted_norms_sq(v1: &GridFn, v2: &GridFn) -> (f64, f64) {
    let g = v1.grid;
    let h = g.h();
    let d = derivative4(&v1.values, h);
    let c = 1.0 / (2.0 * std::f64::consts::SQRT_2);
    let mut h1 = Vec::with_capacity(g.len());
    let mut l2 = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let w = 1.0 / (c * g.node(i)).cosh();
        h1.push((d[i] * d[i] + v1.values[i] * v1.values[i]) * w);
        l2.push(v2.values[i] * v2.values[i] * w);
    }
    (simpson(&h1, h), simpson(&l2, h))
}

/// `f - (<f,dir>_p / <dir,dir>_p) dir`.
pub fn project_out_p(f: &GridFn, dir: &GridFn, p: &GridFn) -> Result<GridFn> {
    let nn = inner_p(dir, dir, p)?;
    if !(nn > 0.0) || nn < 1e-300 {
        return Err(Error::Degenerate(format!("<dir, dir>_p = {nn:.3e}")));
    }
    let c = inner_p(f, dir, p)? / nn;
    Ok(f.axpy(-c, dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn grid() -> Grid {
        Grid::symmetric(40.0, 0.005).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = grid();
        assert_eq!(g.len(), 16001);
        assert_eq!(g.node(g.origin()), 0.0);
        assert_eq!(g.node(0), -40.0);
        assert_eq!(g.node(g.len() - 1), 40.0);
        for i in [0, 17, 4000, 9000] {
            assert_eq!(g.node(i), -g.node(g.mirror(i)));
        }
        assert!(Grid::symmetric(1.0, 0.3).is_err());
        assert_eq!(g.half().len(), 8001);
        assert_eq!(g.half().full(), g);
    }

    #[test]
    fn integrate_zero_and_odd() {
        let g = grid();
        assert_eq!(integrate(&GridFn::zeros(g)).unwrap(), 0.0);
        let f = GridFn::from_fn(g, |y| y * (-y * y / 30.0).exp() + (y / 3.0).sin()).with_parity(Parity::Odd).unwrap();
        let r = integrate(&f).unwrap();
        assert!(r.abs() <= 1e-12 * f.max_abs() * 40.0, "{r}");
    }

    #[test]
    fn integrate_y1_squared_is_one() {
        // ∫ (3/2^{3/2}) tanh²(u) sech²(u) dy with u = y/√2 equals
        // (3/2^{3/2}) √2 [tanh³/3]_{-∞}^{∞} = (3/2^{3/2}) √2 (2/3) = 1.
        let g = grid();
        let c = 2f64.powf(-0.75) * 3f64.sqrt();
        let f = GridFn::from_fn(g, |y| {
            let u = y / SQRT_2;
            let v = c * u.tanh() / u.cosh();
            v * v
        });
        assert!((integrate(&f).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let g = Grid::symmetric(1.0, 0.1).unwrap();
        let mut f = GridFn::zeros(g);
        f.values_mut()[3] = f64::NAN;
        match integrate(&f) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn simpson_with_three_eighths_tail() {
        // odd interval count: exact for cubics
        let g = Grid::half_line(0.7, 0.1).unwrap();
        assert_eq!(g.len(), 8);
        let f = GridFn::from_fn(g, |y| 1.0 + y - 2.0 * y * y + y * y * y);
        let exact = 0.7 + 0.49 / 2.0 - 2.0 * 0.343 / 3.0 + 0.2401 / 4.0;
        assert!((integrate(&f).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn differentiate_tanh() {
        let g = grid();
        let f = GridFn::from_fn(g, |y| (y / SQRT_2).tanh()).with_parity(Parity::Odd).unwrap();
        let d = differentiate(&f);
        assert_eq!(d.parity(), Parity::Even);
        let err = (0..g.len())
            .map(|i| (d.at(i) - 1.0 / SQRT_2 / (g.node(i) / SQRT_2).cosh().powi(2)).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.2 * g.h() * g.h(), "{err}");
        let c = differentiate(&GridFn::constant(g, 2.5));
        assert!(c.max_abs() < 1e-10);
        let d4 = derivative(&f);
        let err4 = (0..g.len())
            .map(|i| (d4.at(i) - 1.0 / SQRT_2 / (g.node(i) / SQRT_2).cosh().powi(2)).abs())
            .fold(0.0, f64::max);
        assert!(err4 < 1e-10, "{err4}");
    }

    #[test]
    fn integration_by_parts_consistency() {
        let g = grid();
        let f = GridFn::from_fn(g, |y| (-y * y / 8.0).exp() * (1.0 + y));
        let q = GridFn::from_fn(g, |y| (-(y - 1.0).powi(2) / 4.0).exp());
        let lhs = inner(&differentiate(&f), &q).unwrap() + inner(&f, &differentiate(&q)).unwrap();
        assert!(lhs.abs() < 1e-8, "{lhs}");
    }

    #[test]
    fn cumulative_rules_are_fourth_order() {
        let g = Grid::half_line(3.0, 0.01).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|y| (2.0 * y).cos()).collect();
        let c = cumulative(&v, g.h());
        let t = cumulative_tail(&v, g.h());
        for i in 0..g.len() {
            let y = g.node(i);
            assert!((c[i] - (2.0 * y).sin() / 2.0).abs() < 1e-8);
            assert!((t[i] - ((6.0f64).sin() - (2.0 * y).sin()) / 2.0).abs() < 1e-8, "{i} {} {}", t[i], ((6.0f64).sin() - (2.0 * y).sin()) / 2.0);
        }
    }

    #[test]
    fn inner_products() {
        let g = grid();
        let f = GridFn::from_fn(g, |y| y * (-y * y).exp());
        let e = GridFn::from_fn(g, |y| (-y * y / 2.0).exp());
        assert!(inner(&f, &e).unwrap().abs() < 1e-14);
        let one = GridFn::constant(g, 1.0);
        assert_eq!(inner_p(&f, &e, &one).unwrap(), inner(&f, &e).unwrap());
        let other = GridFn::zeros(Grid::symmetric(10.0, 0.01).unwrap());
        assert!(matches!(inner(&f, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn weighted_norm_of_constant() {
        let g = grid();
        let (h1, l2) = weighted_norms(&GridFn::zeros(g), &GridFn::constant(g, 1.0)).unwrap();
        assert_eq!(h1, 0.0);
        // ∫ sech(y / 2√2) = 2√2 π minus the tail beyond |y| = 40
        let tail = 2.0 * 2.0 * (2.0 * SQRT_2) * (-40.0 / (2.0 * SQRT_2)).exp();
        assert!((l2 * l2 - (2.0 * SQRT_2 * std::f64::consts::PI - tail)).abs() < 1e-8);
    }

    #[test]
    fn projection() {
        let g = grid();
        let p = GridFn::from_fn(g, |y| 1.0 + 0.02 / (y).cosh());
        let dir = GridFn::from_fn(g, |y| y * (-y * y / 3.0).exp());
        let f = GridFn::from_fn(g, |y| (y / 2.0).sin() * (-y * y / 10.0).exp());
        let r = project_out_p(&f, &dir, &p).unwrap();
        assert!(inner_p(&r, &dir, &p).unwrap().abs() < 1e-12 * inner_p(&f, &f, &p).unwrap().sqrt());
        assert!(project_out_p(&dir, &dir, &p).unwrap().max_abs() < 1e-14);
        let orth = GridFn::from_fn(g, |y| (-y * y).exp());
        let r = project_out_p(&orth, &dir, &p).unwrap();
        assert!(r.sub(&orth).max_abs() < 1e-12);
        assert!(project_out_p(&f, &GridFn::zeros(g), &p).is_err());
    }

    #[test]
    fn parity_tags() {
        let g = Grid::symmetric(5.0, 0.1).unwrap();
        assert!(GridFn::from_fn(g, |y| y + 0.1).with_parity(Parity::Odd).is_err());
        let e = GridFn::from_fn(g, |y| y * y).with_parity(Parity::Even).unwrap();
        assert_eq!(differentiate(&e).parity(), Parity::Odd);
        let half = e.restrict_half();
        assert_eq!(half.extend(Parity::Even).values(), e.values());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::symmetric(2.0, 0.25).unwrap();
        let f = GridFn::from_fn(g, |y| (y * 1.3).sin() / 7.0);
        let path = dir.path().join("f.csv");
        f.write_csv(&path).unwrap();
        let back = GridFn::read_csv(&path).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.values(), f.values());
    }
}

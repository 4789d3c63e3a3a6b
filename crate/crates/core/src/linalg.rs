//! Small banded and tridiagonal solvers.

use crate::error::{Error, Result};

/// Banded matrix with `k` sub- and super-diagonals, stored by rows:
/// `rows[i][k + j - i] = A[i][j]`.
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    k: usize,
    rows: Vec<Vec<f64>>,
}

impl Banded {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self { n, k, rows: vec![vec![0.0; 2 * k + 1]; n] }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i.abs_diff(j) <= self.k);
        self.rows[i][self.k + j - i] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.k {
            0.0
        } else {
            self.rows[i][self.k + j - i]
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.k);
                let hi = (i + self.k).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Gaussian elimination without pivoting; fine for the diagonally
    /// dominant-ish difference operators it is used on.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (n, k) = (self.n, self.k);
        let mut a = self.rows.clone();
        let mut b = rhs.to_vec();
        for p in 0..n {
            let piv = a[p][k];
            if piv.abs() < 1e-300 || !piv.is_finite() {
                return Err(Error::IllConditioned(f64::INFINITY));
            }
            for i in p + 1..(p + k + 1).min(n) {
                let f = a[i][k + p - i] / piv;
                if f == 0.0 {
                    continue;
                }
                for j in p..(p + k + 1).min(n) {
                    let v = a[p][k + j - p];
                    a[i][k + j - i] -= f * v;
                }
                b[i] -= f * b[p];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..(i + k + 1).min(n) {
                s -= a[i][k + j - i] * x[j];
            }
            x[i] = s / a[i][k];
        }
        Ok(x)
    }
}

/// Symmetric tridiagonal matrix (diagonal `d`, off-diagonal `e`, `e.len() = n - 1`).
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl SymTridiagonal {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.d.len() {
            let off = if i == 0 { 0.0 } else { self.e[i - 1] * self.e[i - 1] };
            q = self.d[i] - x - if i == 0 { 0.0 } else { off / q };
            if q == 0.0 {
                q = -1e-300;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.d.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.e[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.e[i].abs() } else { 0.0 };
            lo = lo.min(self.d[i] - r);
            hi = hi.max(self.d[i] + r);
        }
        (lo, hi)
    }

    /// The `m` smallest eigenvalues by bisection.
    pub fn lowest_eigenvalues(&self, m: usize, tol: f64) -> Vec<f64> {
        let (lo0, hi0) = self.gershgorin();
        (0..m.min(self.len()))
            .map(|j| {
                let (mut lo, mut hi) = (lo0, hi0);
                while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) {
                    let mid = 0.5 * (lo + hi);
                    if self.count_below(mid) > j {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }

    /// Eigenvector for the eigenvalue closest to `lambda` by inverse iteration.
    pub fn eigenvector(&self, lambda: f64) -> Result<Vec<f64>> {
        let n = self.len();
        let shift = lambda - 1e-10 * (1.0 + lambda.abs());
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
        for _ in 0..4 {
            x = self.solve_shifted(shift, &x)?;
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in x.iter_mut() {
                *v /= norm;
            }
        }
        Ok(x)
    }

    /// Solve `(T - s I) x = r` (Thomas algorithm; zero pivots are nudged).
    fn solve_shifted(&self, s: f64, r: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for i in 0..n {
            let (sub_c, sub_d) = if i > 0 { (self.e[i - 1] * cp[i - 1], self.e[i - 1] * dp[i - 1]) } else { (0.0, 0.0) };
            let mut m = self.d[i] - s - sub_c;
            if m.abs() < 1e-280 {
                m = 1e-280;
            }
            cp[i] = if i + 1 < n { self.e[i] / m } else { 0.0 };
            dp[i] = (r[i] - sub_d) / m;
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = dp[i] - if i + 1 < n { cp[i] * x[i + 1] } else { 0.0 };
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned(f64::INFINITY));
        }
        Ok(x)
    }
}

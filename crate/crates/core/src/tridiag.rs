//! Real symmetric tridiagonal matrices: products, matrix exponentials and
//! eigensolvers.

use crate::special::bessel_j_truncated;
use crate::{Error, Result, C64};

/// Real symmetric tridiagonal matrix; `off[k]` couples rows `k` and `k + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// Eigenvalues in ascending order with matching unit eigenvectors.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(
            off.len() + 1,
            diag.len().max(1),
            "off-diagonal must be one shorter than the diagonal"
        );
        Self { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m = vec![vec![0.0; n]; n];
        for (i, &d) in self.diag.iter().enumerate() {
            m[i][i] = d;
        }
        for (i, &e) in self.off.iter().enumerate() {
            m[i][i + 1] = e;
            m[i + 1][i] = e;
        }
        m
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = (0..n).map(|i| self.diag[i] * x[i]).collect();
        for (i, &e) in self.off.iter().enumerate() {
            y[i] += e * x[i + 1];
            y[i + 1] += e * x[i];
        }
        y
    }

    pub fn matvec_complex(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        self.matvec_shifted_into(0.0, 1.0, x, &mut y);
        y
    }

    /// `y = (A - shift) x / scale`.
    fn matvec_shifted_into(&self, shift: f64, scale: f64, x: &[C64], y: &mut [C64]) {
        let n = self.dim();
        let inv = 1.0 / scale;
        for i in 0..n {
            let mut acc = (self.diag[i] - shift) * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc * inv;
        }
    }

    /// Interval containing every eigenvalue (Gershgorin discs).
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// `e^{-i dt A} v` by Chebyshev expansion, accurate to roughly machine
    /// precision for any `dt`.
    pub fn expm_apply(&self, dt: f64, v: &[C64]) -> Vec<C64> {
        let (lo, hi) = self.gershgorin_bounds();
        let center = 0.5 * (hi + lo);
        let half = 0.5 * (hi - lo);
        let global = C64::from_polar(1.0, -dt * center);
        if half <= f64::EPSILON * center.abs().max(1.0) {
            return v.iter().map(|x| global * x).collect();
        }
        // Slight widening keeps the spectrum strictly inside [-1, 1].
        let half = half * (1.0 + 1e-12) + 1e-300;
        let coeffs = bessel_j_truncated(dt * half, 1e-18);

        let n = v.len();
        let mut t_prev = v.to_vec();
        let mut t_cur = vec![C64::new(0.0, 0.0); n];
        self.matvec_shifted_into(center, half, &t_prev, &mut t_cur);
        let mut out: Vec<C64> = t_prev.iter().map(|x| coeffs[0] * x).collect();
        // (-i)^k cycles through 1, -i, -1, i.
        let phases = [
            C64::new(1.0, 0.0),
            C64::new(0.0, -1.0),
            C64::new(-1.0, 0.0),
            C64::new(0.0, 1.0),
        ];
        if coeffs.len() > 1 {
            let a = 2.0 * coeffs[1] * phases[1];
            for (o, t) in out.iter_mut().zip(&t_cur) {
                *o += a * t;
            }
        }
        let mut t_next = vec![C64::new(0.0, 0.0); n];
        for (k, &jk) in coeffs.iter().enumerate().skip(2) {
            self.matvec_shifted_into(center, half, &t_cur, &mut t_next);
            for i in 0..n {
                t_next[i] = 2.0 * t_next[i] - t_prev[i];
            }
            let a = 2.0 * jk * phases[k % 4];
            for (o, t) in out.iter_mut().zip(&t_next) {
                *o += a * t;
            }
            std::mem::swap(&mut t_prev, &mut t_cur);
            std::mem::swap(&mut t_cur, &mut t_next);
        }
        out.iter_mut().for_each(|x| *x *= global);
        out
    }

    /// `e^{-i dt A} v` through a full eigendecomposition.
    pub fn expm_apply_eigen(&self, dt: f64, v: &[C64]) -> Result<Vec<C64>> {
        let es = self.eigen_decompose()?;
        let n = v.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (lam, vec) in es.values.iter().zip(&es.vectors) {
            let proj: C64 = vec.iter().zip(v).map(|(a, b)| a * b).sum();
            let c = proj * C64::from_polar(1.0, -dt * lam);
            for (o, a) in out.iter_mut().zip(vec) {
                *o += c * a;
            }
        }
        Ok(out)
    }

    /// Full eigendecomposition by the implicit QL algorithm with Wilkinson
    /// shifts.
    pub fn eigen_decompose(&self) -> Result<Eigensystem> {
        let n = self.dim();
        let mut d = self.diag.clone();
        let mut e = self.off.clone();
        e.push(0.0);
        // z[row * n + col], columns become eigenvectors.
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
        for l in 0..n {
            let mut iter = 0;
            loop {
                let mut m = l;
                while m + 1 < n {
                    let dd = d[m].abs() + d[m + 1].abs();
                    if e[m].abs() <= f64::EPSILON * dd {
                        break;
                    }
                    m += 1;
                }
                if m == l {
                    break;
                }
                iter += 1;
                if iter > 60 {
                    return Err(Error::Eigen(format!("QL did not converge for eigenvalue {l}")));
                }
                let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                let mut r = g.hypot(1.0);
                g = d[m] - d[l] + e[l] / (g + r.copysign(g));
                let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
                let mut deflated = false;
                let mut i = m;
                while i > l {
                    i -= 1;
                    let f = s * e[i];
                    let b = c * e[i];
                    r = f.hypot(g);
                    e[i + 1] = r;
                    if r == 0.0 {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        deflated = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    for k in 0..n {
                        let zi = z[k * n + i];
                        let zi1 = z[k * n + i + 1];
                        z[k * n + i + 1] = s * zi + c * zi1;
                        z[k * n + i] = c * zi - s * zi1;
                    }
                }
                if deflated {
                    continue;
                }
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
        let values = order.iter().map(|&k| d[k]).collect();
        let vectors = order
            .iter()
            .map(|&k| (0..n).map(|row| z[row * n + k]).collect())
            .collect();
        Ok(Eigensystem { values, vectors })
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence).
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.dim();
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..n {
            let e2 = if i > 0 { self.off[i - 1] * self.off[i - 1] } else { 0.0 };
            q = self.diag[i] - x - if i > 0 { e2 / q } else { 0.0 };
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The eigenvalue with ascending index `idx`, by bisection.
    pub fn eigenvalue_by_index(&self, idx: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin_bounds();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        lo -= 1e-12 * scale;
        hi += 1e-12 * scale;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > idx {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * scale {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// The `k`-th largest eigenvalue (`k = 0` is the maximum).
    pub fn kth_largest_eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalue_by_index(self.dim() - 1 - k)
    }

    /// Unit eigenvector for an (accurate) eigenvalue `lambda` by inverse
    /// iteration.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.dim();
        if n == 1 {
            return vec![1.0];
        }
        let scale = self
            .diag
            .iter()
            .chain(&self.off)
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let shift = lambda + 8.0 * f64::EPSILON * scale;
        let lu = TridiagLu::factor(self, shift);
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.37 * ((i as f64) * 1.618).sin()).collect();
        normalize(&mut x);
        for _ in 0..4 {
            x = lu.solve(&x);
            normalize(&mut x);
        }
        x
    }
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// LU factorization of `A - shift` with partial pivoting.
struct TridiagLu {
    // Row i of U has entries u0[i] (diagonal), u1[i], u2[i] to the right.
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(a: &SymTridiag, shift: f64) -> Self {
        let n = a.dim();
        let tiny = f64::EPSILON * a.gershgorin_bounds().1.abs().max(1.0) * 1e-3;
        let mut u0: Vec<f64> = a.diag.iter().map(|d| d - shift).collect();
        let mut u1: Vec<f64> = a.off.clone();
        u1.push(0.0);
        let mut u2 = vec![0.0; n];
        let sub = a.off.clone();
        let mut mult = vec![0.0; n];
        let mut swapped = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            if sub[i].abs() > u0[i].abs() {
                // swap rows i and i+1
                swapped[i] = true;
                let m = u0[i] / sub[i];
                mult[i] = m;
                let (r0, r1, r2) = (sub[i], u0[i + 1], u1[i + 1]);
                let (o1, o2) = (u1[i], u2[i]);
                u0[i] = r0;
                u1[i] = r1;
                u2[i] = r2;
                u0[i + 1] = o1 - m * r1;
                u1[i + 1] = o2 - m * r2;
            } else {
                if u0[i] == 0.0 {
                    u0[i] = tiny;
                }
                let m = sub[i] / u0[i];
                mult[i] = m;
                u0[i + 1] -= m * u1[i];
                u1[i + 1] -= m * u2[i];
            }
        }
        if n > 0 && u0[n - 1] == 0.0 {
            u0[n - 1] = tiny;
        }
        Self {
            u0,
            u1,
            u2,
            mult,
            swapped,
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                y.swap(i, i + 1);
            }
            y[i + 1] -= self.mult[i] * y[i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            if i + 1 < n {
                acc -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                acc -= self.u2[i] * x[i + 2];
            }
            x[i] = acc / self.u0[i];
        }
        x
    }
}

//! Grids, finite-difference stencils, quadrature, time stepping and fitting
//! utilities shared by the evolution and functional code.

use crate::geometry::{tortoise_of_r, BlackHoleParams};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("radial grid needs at least 16 points, got {0}")]
    GridTooSmall(usize),
    #[error("radial bounds must satisfy rstar_min < rstar_max, got [{0}, {1}]")]
    BadRadialBounds(f64, f64),
    #[error("array length {got} does not match grid size {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("power-law fit needs at least 8 samples in the window, got {0}")]
    TooFewSamples(usize),
    #[error("power-law fit window contains non-positive value {value} at t = {t}")]
    NonPositiveValue { t: f64, value: f64 },
    #[error("state became non-finite during a time step")]
    NonFiniteState,
}

/// Uniform grid in the tortoise coordinate with cached r(r*) and mu(r*)
/// tables.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub rstar_min: f64,
    pub rstar_max: f64,
    pub n_r: usize,
    pub dr: f64,
    pub rstar: Vec<f64>,
    pub r: Vec<f64>,
    pub mu: Vec<f64>,
    pub one_minus_mu: Vec<f64>,
    /// horizon gap r - 2m, kept separately because it stays relatively
    /// accurate where r itself rounds onto 2m
    pub gap: Vec<f64>,
}

impl RadialGrid {
    pub fn new(
        rstar_min: f64,
        rstar_max: f64,
        n_r: usize,
        p: &BlackHoleParams,
    ) -> Result<Self, NumericsError> {
        if n_r < 16 {
            return Err(NumericsError::GridTooSmall(n_r));
        }
        if !(rstar_min < rstar_max) {
            return Err(NumericsError::BadRadialBounds(rstar_min, rstar_max));
        }
        let dr = (rstar_max - rstar_min) / (n_r - 1) as f64;
        let mut rstar = Vec::with_capacity(n_r);
        let mut r = Vec::with_capacity(n_r);
        let mut mu = Vec::with_capacity(n_r);
        let mut one_minus_mu = Vec::with_capacity(n_r);
        let mut gap = Vec::with_capacity(n_r);
        for i in 0..n_r {
            let rs = rstar_min + dr * i as f64;
            let gi = crate::geometry::horizon_gap_of_tortoise(rs, p);
            let ri = p.horizon_radius() + gi;
            rstar.push(rs);
            r.push(ri);
            mu.push(p.mu(ri));
            one_minus_mu.push(gi / ri);
            gap.push(gi);
        }
        Ok(Self {
            rstar_min,
            rstar_max,
            n_r,
            dr,
            rstar,
            r,
            mu,
            one_minus_mu,
            gap,
        })
    }

    /// Index range [lo, hi] (inclusive) of nodes with rstar inside the bounds.
    pub fn index_range(&self, rstar_lo: f64, rstar_hi: f64) -> (usize, usize) {
        let lo = ((rstar_lo - self.rstar_min) / self.dr).ceil().max(0.0) as usize;
        let hi_f = ((rstar_hi - self.rstar_min) / self.dr).floor();
        let hi = (hi_f.max(0.0) as usize).min(self.n_r - 1);
        (lo.min(self.n_r - 1), hi)
    }
}

/// Gauss-Legendre nodes in x = cos(theta) with weights, plus the spectral
/// differentiation matrix d/dx on the nodes. Realizes axisymmetric sphere
/// integrals as 2 pi * sum of weighted samples; nodes exclude the poles.
#[derive(Debug, Clone)]
pub struct AngularGrid {
    pub n_theta: usize,
    /// nodes in ascending x = cos(theta), all strictly inside (-1, 1)
    pub x: Vec<f64>,
    pub weight: Vec<f64>,
    pub sin_theta: Vec<f64>,
    pub theta: Vec<f64>,
    /// dense spectral differentiation matrix: (d f/dx)(x_i) = sum_j d[i*n+j] f(x_j)
    pub diff: Vec<f64>,
    /// barycentric interpolation weights for the nodes
    pub bary: Vec<f64>,
}

impl AngularGrid {
    pub fn new(n_theta: usize) -> Self {
        let (x, weight) = gauss_legendre(n_theta);
        let sin_theta: Vec<f64> = x.iter().map(|&xi| (1.0 - xi * xi).sqrt()).collect();
        let theta: Vec<f64> = x.iter().map(|&xi| xi.acos()).collect();
        let bary = barycentric_weights(&x);
        let diff = differentiation_matrix(&x, &bary);
        Self {
            n_theta,
            x,
            weight,
            sin_theta,
            theta,
            diff,
            bary,
        }
    }

    /// Apply d/dx to a vector of nodal values.
    pub fn ddx(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n_theta;
        debug_assert_eq!(f.len(), n);
        for i in 0..n {
            let row = &self.diff[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * f[j];
            }
            out[i] = acc;
        }
    }
}

/// Gauss-Legendre nodes (ascending) and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for k in 0..m {
        // Initial guess (Abramowitz-Stegun) for the k-th root from the top.
        let mut z = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre recurrence for P_n(z) and P'_n(z).
            let mut p0 = 1.0;
            let mut p1 = z;
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        // Final polish values.
        let mut p0 = 1.0;
        let mut p1 = z;
        for j in 2..=n {
            let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
        x[n - 1 - k] = z;
        x[k] = -z;
        let wk = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - k] = wk;
        w[k] = wk;
    }
    if n % 2 == 1 {
        // Middle node is exactly zero.
        x[n / 2] = 0.0;
        let mut p0 = 1.0;
        let mut p1 = 0.0;
        for j in 2..=n {
            let p2 = (-((j - 1) as f64) * p0) / j as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (-p0) / (-1.0);
        w[n / 2] = 2.0 / (dp * dp);
    }
    (x, w)
}

fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut b = vec![1.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                b[i] /= x[i] - x[j];
            }
        }
    }
    b
}

fn differentiation_matrix(x: &[f64], bary: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (bary[j] / bary[i]) / (x[i] - x[j]);
                d[i * n + j] = v;
                diag -= v;
            }
        }
        d[i * n + i] = diag;
    }
    d
}

/// Barycentric Lagrange interpolation of nodal values at x.
pub fn barycentric_interp(nodes: &[f64], bary: &[f64], values: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&xi, &bi), &fi) in nodes.iter().zip(bary).zip(values) {
        let dx = x - xi;
        if dx == 0.0 {
            return fi;
        }
        let t = bi / dx;
        num += t * fi;
        den += t;
    }
    num / den
}

/// Fourth-order first derivative in r* on a uniform grid: centered in the
/// interior, one-sided (still fourth-order) at the two rows nearest each edge.
/// Exact for polynomials of degree <= 4.
pub fn d_rstar(samples: &[f64], grid: &RadialGrid) -> Result<Vec<f64>, NumericsError> {
    if samples.len() != grid.n_r {
        return Err(NumericsError::LengthMismatch {
            got: samples.len(),
            want: grid.n_r,
        });
    }
    let mut out = vec![0.0; grid.n_r];
    d_rstar_stride(samples, 1, grid.n_r, grid.dr, &mut out, 1);
    Ok(out)
}

/// Strided kernel: differentiate `n` values spaced `stride` apart inside
/// `src`, writing to the same layout in `dst`.
pub fn d_rstar_stride(
    src: &[f64],
    stride: usize,
    n: usize,
    dr: f64,
    dst: &mut [f64],
    dst_stride: usize,
) {
    debug_assert!(n >= 5);
    let c = 1.0 / (12.0 * dr);
    let at = |i: usize| src[i * stride];
    dst[0] = (-25.0 * at(0) + 48.0 * at(1) - 36.0 * at(2) + 16.0 * at(3) - 3.0 * at(4)) * c;
    dst[dst_stride] = (-3.0 * at(0) - 10.0 * at(1) + 18.0 * at(2) - 6.0 * at(3) + at(4)) * c;
    for i in 2..n - 2 {
        dst[i * dst_stride] = (at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)) * c;
    }
    dst[(n - 2) * dst_stride] =
        (3.0 * at(n - 1) + 10.0 * at(n - 2) - 18.0 * at(n - 3) + 6.0 * at(n - 4) - at(n - 5)) * c;
    dst[(n - 1) * dst_stride] = (25.0 * at(n - 1) - 48.0 * at(n - 2) + 36.0 * at(n - 3)
        - 16.0 * at(n - 4)
        + 3.0 * at(n - 5))
        * c;
}

/// Axisymmetric sphere integral: 2 pi * sum_k w_k density(x_k).
/// Exact for densities polynomial in cos(theta) up to degree 2 n_theta - 1.
pub fn integrate_sphere(density: &[f64], grid: &AngularGrid) -> f64 {
    debug_assert_eq!(density.len(), grid.n_theta);
    let mut acc = 0.0;
    for (d, w) in density.iter().zip(&grid.weight) {
        acc += d * w;
    }
    2.0 * std::f64::consts::PI * acc
}

/// Anything the classical RK4 step can advance.
pub trait StateVector: Clone {
    /// self += a * other
    fn axpy(&mut self, a: f64, other: &Self);
    fn is_finite(&self) -> bool;
}

impl StateVector for f64 {
    fn axpy(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl StateVector for Vec<f64> {
    fn axpy(&mut self, a: f64, other: &Self) {
        for (s, o) in self.iter_mut().zip(other) {
            *s += a * o;
        }
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<S, F>(state: &S, rhs: F, dt: f64) -> Result<S, NumericsError>
where
    S: StateVector,
    F: Fn(&S) -> S,
{
    let k1 = rhs(state);
    let mut y = state.clone();
    y.axpy(0.5 * dt, &k1);
    let k2 = rhs(&y);
    let mut y = state.clone();
    y.axpy(0.5 * dt, &k2);
    let k3 = rhs(&y);
    let mut y = state.clone();
    y.axpy(dt, &k3);
    let k4 = rhs(&y);
    let mut out = state.clone();
    out.axpy(dt / 6.0, &k1);
    out.axpy(dt / 3.0, &k2);
    out.axpy(dt / 3.0, &k3);
    out.axpy(dt / 6.0, &k4);
    if !out.is_finite() {
        return Err(NumericsError::NonFiniteState);
    }
    Ok(out)
}

/// Result of a log-log least-squares fit value ~ amplitude * time^(-exponent).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FitResult {
    pub exponent: f64,
    pub amplitude: f64,
    /// RMS residual of the fit in log space.
    pub residual: f64,
}

/// Least squares on log(value) vs log(time) over the samples with time inside
/// `window`. Sign convention: a positive exponent means decay.
pub fn fit_power_law(
    times: &[f64],
    values: &[f64],
    window: std::ops::Range<f64>,
) -> Result<FitResult, NumericsError> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t >= window.start && t < window.end {
            if !(v > 0.0) {
                return Err(NumericsError::NonPositiveValue { t, value: v });
            }
            lx.push(t.ln());
            ly.push(v.ln());
        }
    }
    let n = lx.len();
    if n < 8 {
        return Err(NumericsError::TooFewSamples(n));
    }
    let nf = n as f64;
    let mx = lx.iter().sum::<f64>() / nf;
    let my = ly.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        let e = y - (slope * x + intercept);
        ss += e * e;
    }
    Ok(FitResult {
        exponent: -slope,
        amplitude: intercept.exp(),
        residual: (ss / nf).sqrt(),
    })
}

/// Integrate a sampled function over its full span using local cubics:
/// for each gap, the Lagrange cubic through the four nearest samples is
/// integrated analytically. Fourth-order accurate on smooth data and robust
/// to the occasional irregular spacing; falls back to trapezoid when fewer
/// than four samples exist.
pub fn integrate_samples(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    if n < 4 {
        let mut acc = 0.0;
        for w in samples.windows(2) {
            acc += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        }
        return acc;
    }
    let mut acc = 0.0;
    for i in 0..n - 1 {
        let j0 = i.saturating_sub(1).min(n - 4);
        let (a, b) = (samples[i].0, samples[i + 1].0);
        // integral over [a, b] of the cubic through samples j0..j0+4
        for j in j0..j0 + 4 {
            let (xj, fj) = samples[j];
            // integrate the Lagrange basis polynomial exactly via its
            // antiderivative sampled with 3-point Gauss on [a, b]
            let basis = |x: f64| {
                let mut l = 1.0;
                for m in j0..j0 + 4 {
                    if m != j {
                        let xm = samples[m].0;
                        l *= (x - xm) / (xj - xm);
                    }
                }
                l
            };
            // 3-point Gauss-Legendre integrates cubics exactly
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let g = (0.6f64).sqrt();
            let int_basis = half
                * (5.0 / 9.0 * basis(mid - half * g)
                    + 8.0 / 9.0 * basis(mid)
                    + 5.0 / 9.0 * basis(mid + half * g));
            acc += fj * int_basis;
        }
    }
    acc
}

/// Trapezoid over the nodes inside [lo, hi] plus linearly interpolated
/// partial cells at the two edges, so regions that do not land on nodes do
/// not pick up an O(dr*) snapping error.
pub fn radial_integrate_partial(
    grid: &RadialGrid,
    lo: f64,
    hi: f64,
    row_value: &mut dyn FnMut(usize) -> f64,
) -> f64 {
    let lo = lo.max(grid.rstar_min);
    let hi = hi.min(grid.rstar_max);
    if lo >= hi {
        return 0.0;
    }
    let (ilo, ihi) = grid.index_range(lo, hi);
    if ilo > ihi {
        return 0.0;
    }
    let mut vals: Vec<f64> = Vec::with_capacity(ihi - ilo + 1);
    for i in ilo..=ihi {
        vals.push(row_value(i));
    }
    let mut acc = 0.0;
    for w in vals.windows(2) {
        acc += 0.5 * (w[0] + w[1]);
    }
    acc *= grid.dr;
    // left strip [lo, rstar[ilo]]
    let wl = grid.rstar[ilo] - lo;
    if wl > 1e-12 * grid.dr && ilo > 0 {
        let f_prev = row_value(ilo - 1);
        let frac = wl / grid.dr;
        let f_lo = vals[0] + (f_prev - vals[0]) * frac;
        acc += 0.5 * (f_lo + vals[0]) * wl;
    }
    // right strip [rstar[ihi], hi]
    let wr = hi - grid.rstar[ihi];
    if wr > 1e-12 * grid.dr && ihi + 1 < grid.n_r {
        let f_next = row_value(ihi + 1);
        let frac = wr / grid.dr;
        let f_hi = vals[vals.len() - 1] + (f_next - vals[vals.len() - 1]) * frac;
        acc += 0.5 * (f_hi + vals[vals.len() - 1]) * wr;
    }
    acc
}

/// Bisection for a root of f on [lo, hi]; f(lo) and f(hi) must have opposite
/// signs. Tolerance is relative on the abscissa.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let flo = f(lo);
    debug_assert!(flo * f(hi) <= 0.0, "bisect: no sign change on [{lo}, {hi}]");
    let increasing = flo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= rel_tol * mid.abs().max(1.0) {
            return mid;
        }
        let fm = f(mid);
        if (fm < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Convenience: cache of tortoise values for named radii.
pub fn rstar_of(r: f64, p: &BlackHoleParams) -> f64 {
    tortoise_of_r(r, p).expect("radius must be exterior")
}

//! Closed-form Schwarzschild exterior geometry.
//!
//! Everything here is analytic: coordinate maps between the area radius,
//! tortoise and double-null charts, metric component tables, the Christoffel
//! tables for each chart, the orthonormal/null frame and its covariant
//! derivatives, and the Kruskal/Penrose maps used for reporting.
//!
//! Geometric units G = c = 1 throughout; the exterior is r > 2m.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("black hole mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("area radius {r} is not outside the horizon r > {horizon}")]
    NotExterior { r: f64, horizon: f64 },
    #[error("coordinate {0} is not finite")]
    NonFinite(&'static str),
}

/// Black-hole parameters. Owns the compactness ratio mu = 2m/r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlackHoleParams {
    mass: f64,
}

impl BlackHoleParams {
    pub fn new(mass: f64) -> Result<Self, GeometryError> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(GeometryError::NonPositiveMass(mass));
        }
        Ok(Self { mass })
    }

    #[inline]
    pub fn mass(&self) -> f64 {
        self.mass
    }

    #[inline]
    pub fn horizon_radius(&self) -> f64 {
        2.0 * self.mass
    }

    #[inline]
    pub fn photon_sphere_radius(&self) -> f64 {
        3.0 * self.mass
    }

    /// mu = 2m/r.
    #[inline]
    pub fn mu(&self, r: f64) -> f64 {
        2.0 * self.mass / r
    }

    /// 1 - mu = 1 - 2m/r, the lapse-squared factor.
    #[inline]
    pub fn lapse_sq(&self, r: f64) -> f64 {
        1.0 - self.mu(r)
    }
}

/// A point of the exterior in the (t, r*, theta, phi) chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimePoint {
    pub t: f64,
    pub rstar: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SpacetimePoint {
    pub fn new(t: f64, rstar: f64, theta: f64, phi: f64) -> Result<Self, GeometryError> {
        if !rstar.is_finite() {
            return Err(GeometryError::NonFinite("rstar"));
        }
        Ok(Self {
            t,
            rstar,
            theta,
            phi,
        })
    }

    pub fn to_double_null(&self) -> DoubleNullPoint {
        DoubleNullPoint {
            v: self.t + self.rstar,
            w: self.t - self.rstar,
            theta: self.theta,
            phi: self.phi,
        }
    }
}

/// A point in the double-null chart: v = t + r*, w = t - r*.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleNullPoint {
    pub v: f64,
    pub w: f64,
    pub theta: f64,
    pub phi: f64,
}

impl DoubleNullPoint {
    pub fn to_tortoise(&self) -> SpacetimePoint {
        SpacetimePoint {
            t: 0.5 * (self.v + self.w),
            rstar: 0.5 * (self.v - self.w),
            theta: self.theta,
            phi: self.phi,
        }
    }
}

/// Kruskal null and Cartesian-type coordinates of an exterior point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KruskalPoint {
    pub vprime: f64,
    pub wprime: f64,
    pub tprime: f64,
    pub xprime: f64,
}

/// Result of the Kruskal map: the point, the conformal factor F^2 of the
/// metric in these coordinates, and whether the exponentials were clamped.
#[derive(Debug, Clone, Copy)]
pub struct KruskalMap {
    pub point: KruskalPoint,
    pub conformal_factor_sq: f64,
    pub saturated: bool,
}

/// Coordinate charts with fixed index conventions.
///
/// Index meaning per chart:
/// - `Tortoise`:   0 = t, 1 = r*, 2 = theta, 3 = phi
/// - `AreaRadius`: 0 = t, 1 = r,  2 = theta, 3 = phi
/// - `DoubleNull`: 0 = v, 1 = w,  2 = theta, 3 = phi
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    Tortoise,
    AreaRadius,
    DoubleNull,
}

pub const IDX_T: usize = 0;
pub const IDX_RSTAR: usize = 1;
pub const IDX_V: usize = 0;
pub const IDX_W: usize = 1;
pub const IDX_THETA: usize = 2;
pub const IDX_PHI: usize = 3;

/// Frame labels: the orthonormal frame (t̂, r̂*, θ̂, φ̂), the hatted null pair
/// (v̂ = ∂_v, ŵ = (1-mu)^{-1} ∂_w) and the sphere basis aliases e1 = θ̂, e2 = φ̂.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameLabel {
    THat,
    RStarHat,
    ThetaHat,
    PhiHat,
    VHat,
    WHat,
    E1,
    E2,
}

/// Tortoise coordinate r* = r + 2m ln(r - 2m).
///
/// The integration constant is fixed exactly as written: the logarithm takes
/// the bare length r - 2m, not (r - 2m)/2m.
pub fn tortoise_of_r(r: f64, p: &BlackHoleParams) -> Result<f64, GeometryError> {
    let horizon = p.horizon_radius();
    if !(r > horizon) {
        return Err(GeometryError::NotExterior { r, horizon });
    }
    Ok(r + horizon * (r - horizon).ln())
}

/// Numerical inverse of `tortoise_of_r`.
///
/// Newton iteration with a bracketing fallback; the seed is
/// r ≈ 2m + exp((r* - 2m)/2m) near the horizon and r ≈ r* far out.
/// For very negative r* the result saturates just outside the horizon
/// instead of rounding onto it.
pub fn r_of_tortoise(rstar: f64, p: &BlackHoleParams) -> f64 {
    let two_m = p.horizon_radius();
    // Smallest representable exterior radius we ever return.
    let r_floor = two_m * (1.0 + 4.0 * f64::EPSILON);

    // Seed.
    let gap = ((rstar - two_m) / two_m).exp();
    let mut r = if rstar < two_m {
        two_m + gap
    } else {
        // r* ~ r + 2m ln(r); invert roughly, then polish.
        let mut guess = rstar.max(two_m + 1.0);
        for _ in 0..4 {
            guess = (rstar - two_m * (guess - two_m).ln()).max(two_m + 0.5);
        }
        guess
    };
    if !(r > r_floor) || !r.is_finite() {
        return r_floor;
    }

    // Bracket for the safety bisection.
    let (mut lo, mut hi) = (r_floor, r.max(rstar.abs() + 10.0 * two_m));
    let tol = 2.0 * f64::EPSILON * rstar.abs().max(two_m);
    for _ in 0..200 {
        let h = r - two_m;
        let f = r + two_m * h.ln() - rstar;
        if f.abs() <= tol {
            break;
        }
        if f > 0.0 {
            hi = hi.min(r);
        } else {
            lo = lo.max(r);
        }
        // f'(r) = r/(r - 2m); Newton step dr = -f (r-2m)/r.
        let mut next = r - f * h / r;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= f64::EPSILON * r {
            r = next;
            break;
        }
        r = next;
    }
    r.max(r_floor)
}

/// The horizon gap r - 2m as a function of the tortoise coordinate, accurate
/// in a relative sense even where r itself rounds onto 2m. Solves
/// gap + 2m ln(gap) = r* - 2m by fixed point plus Newton polish.
pub fn horizon_gap_of_tortoise(rstar: f64, p: &BlackHoleParams) -> f64 {
    let two_m = p.horizon_radius();
    if rstar > two_m + 1.0 {
        return r_of_tortoise(rstar, p) - two_m;
    }
    // gap = exp((r* - 2m - gap)/2m); the iteration contracts for gap < 2m.
    let mut gap = ((rstar - two_m) / two_m).exp().min(two_m);
    for _ in 0..60 {
        let next = ((rstar - two_m - gap) / two_m).exp();
        if !next.is_finite() || next <= 0.0 {
            break;
        }
        if (next - gap).abs() <= 1e-16 * gap {
            gap = next;
            break;
        }
        gap = next;
    }
    // Newton polish on f(g) = g + 2m ln g - (r* - 2m); f' = 1 + 2m/g.
    for _ in 0..4 {
        let f = gap + two_m * gap.ln() - (rstar - two_m);
        let fp = 1.0 + two_m / gap;
        let step = f / fp;
        let next = gap - step;
        if next > 0.0 && next.is_finite() {
            gap = next;
        }
        if (step / gap).abs() < 1e-15 {
            break;
        }
    }
    gap.max(f64::MIN_POSITIVE)
}

/// Metric components g and its inverse in the requested chart at area radius
/// r and polar angle theta. Rows/columns follow the chart's index convention.
pub fn metric_components(
    chart: Chart,
    r: f64,
    theta: f64,
    p: &BlackHoleParams,
) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
    let n = p.lapse_sq(r);
    let r2 = r * r;
    let s2 = theta.sin() * theta.sin();
    let mut g = [[0.0; 4]; 4];
    let mut ginv = [[0.0; 4]; 4];
    match chart {
        Chart::Tortoise => {
            g[0][0] = -n;
            g[1][1] = n;
            ginv[0][0] = -1.0 / n;
            ginv[1][1] = 1.0 / n;
        }
        Chart::AreaRadius => {
            g[0][0] = -n;
            g[1][1] = 1.0 / n;
            ginv[0][0] = -1.0 / n;
            ginv[1][1] = n;
        }
        Chart::DoubleNull => {
            g[0][1] = -0.5 * n;
            g[1][0] = -0.5 * n;
            ginv[0][1] = -2.0 / n;
            ginv[1][0] = -2.0 / n;
        }
    }
    g[2][2] = r2;
    g[3][3] = r2 * s2;
    ginv[2][2] = 1.0 / r2;
    ginv[3][3] = 1.0 / (r2 * s2);
    (g, ginv)
}

/// Christoffel symbol Γ^upper_{lower1 lower2} in the requested chart,
/// from the closed-form table. Coefficients not in the table are zero.
pub fn connection_coefficient(
    chart: Chart,
    upper: usize,
    lower1: usize,
    lower2: usize,
    r: f64,
    theta: f64,
    p: &BlackHoleParams,
) -> f64 {
    let mu = p.mu(r);
    let n = 1.0 - mu;
    let (sin_t, cos_t) = theta.sin_cos();
    // Symmetric in the lower pair by construction.
    let (a, b) = if lower1 <= lower2 {
        (lower1, lower2)
    } else {
        (lower2, lower1)
    };
    match chart {
        Chart::Tortoise => match (upper, a, b) {
            (IDX_T, IDX_T, IDX_RSTAR) => mu / (2.0 * r),
            (IDX_RSTAR, IDX_T, IDX_T) => mu / (2.0 * r),
            (IDX_RSTAR, IDX_RSTAR, IDX_RSTAR) => mu / (2.0 * r),
            (IDX_RSTAR, IDX_THETA, IDX_THETA) => -r,
            (IDX_RSTAR, IDX_PHI, IDX_PHI) => -r * sin_t * sin_t,
            (IDX_THETA, IDX_RSTAR, IDX_THETA) => n / r,
            (IDX_PHI, IDX_RSTAR, IDX_PHI) => n / r,
            (IDX_THETA, IDX_PHI, IDX_PHI) => -sin_t * cos_t,
            (IDX_PHI, IDX_THETA, IDX_PHI) => cos_t / sin_t,
            _ => 0.0,
        },
        Chart::AreaRadius => match (upper, a, b) {
            (IDX_T, IDX_T, 1) => mu / (2.0 * r * n),
            (1, IDX_T, IDX_T) => mu * n / (2.0 * r),
            (1, 1, 1) => -mu / (2.0 * r * n),
            (1, IDX_THETA, IDX_THETA) => -n * r,
            (1, IDX_PHI, IDX_PHI) => -n * r * sin_t * sin_t,
            (IDX_THETA, 1, IDX_THETA) => 1.0 / r,
            (IDX_PHI, 1, IDX_PHI) => 1.0 / r,
            (IDX_THETA, IDX_PHI, IDX_PHI) => -sin_t * cos_t,
            (IDX_PHI, IDX_THETA, IDX_PHI) => cos_t / sin_t,
            _ => 0.0,
        },
        Chart::DoubleNull => match (upper, a, b) {
            (IDX_V, IDX_V, IDX_V) => mu / (2.0 * r),
            (IDX_W, IDX_W, IDX_W) => -mu / (2.0 * r),
            (IDX_V, IDX_THETA, IDX_THETA) => -r,
            (IDX_W, IDX_THETA, IDX_THETA) => r,
            (IDX_V, IDX_PHI, IDX_PHI) => -r * sin_t * sin_t,
            (IDX_W, IDX_PHI, IDX_PHI) => r * sin_t * sin_t,
            (IDX_THETA, IDX_V, IDX_THETA) => n / (2.0 * r),
            (IDX_THETA, IDX_W, IDX_THETA) => -n / (2.0 * r),
            (IDX_PHI, IDX_V, IDX_PHI) => n / (2.0 * r),
            (IDX_PHI, IDX_W, IDX_PHI) => -n / (2.0 * r),
            (IDX_THETA, IDX_PHI, IDX_PHI) => -sin_t * cos_t,
            (IDX_PHI, IDX_THETA, IDX_PHI) => cos_t / sin_t,
            _ => 0.0,
        },
    }
}

/// Coordinate components (tortoise chart) of a frame vector at (r, theta).
pub fn frame_vector(label: FrameLabel, r: f64, theta: f64, p: &BlackHoleParams) -> [f64; 4] {
    let n = p.lapse_sq(r);
    let inv_sqrt_n = 1.0 / n.sqrt();
    match label {
        FrameLabel::THat => [inv_sqrt_n, 0.0, 0.0, 0.0],
        FrameLabel::RStarHat => [0.0, inv_sqrt_n, 0.0, 0.0],
        FrameLabel::ThetaHat | FrameLabel::E1 => [0.0, 0.0, 1.0 / r, 0.0],
        FrameLabel::PhiHat | FrameLabel::E2 => [0.0, 0.0, 0.0, 1.0 / (r * theta.sin())],
        FrameLabel::VHat => [0.5, 0.5, 0.0, 0.0],
        FrameLabel::WHat => [0.5 / n, -0.5 / n, 0.0, 0.0],
    }
}

/// Partial derivatives d(frame components)/d(r*, theta) in the tortoise chart.
/// Returns (d/dr* of the 4 components, d/dtheta of the 4 components).
fn frame_vector_partials(
    label: FrameLabel,
    r: f64,
    theta: f64,
    p: &BlackHoleParams,
) -> ([f64; 4], [f64; 4]) {
    let mu = p.mu(r);
    let n = 1.0 - mu;
    // d/dr* of (1-mu)^{-1/2} and of 1/r, 1/(r sin) use d(1-mu)/dr* = (1-mu) mu / r
    // and dr/dr* = 1-mu.
    let d_inv_sqrt_n = -mu / (2.0 * r * n.sqrt());
    let d_inv_r = -n / (r * r);
    let (sin_t, cos_t) = theta.sin_cos();
    let mut dr = [0.0; 4];
    let mut dth = [0.0; 4];
    match label {
        FrameLabel::THat => dr[0] = d_inv_sqrt_n,
        FrameLabel::RStarHat => dr[1] = d_inv_sqrt_n,
        FrameLabel::ThetaHat | FrameLabel::E1 => dr[2] = d_inv_r,
        FrameLabel::PhiHat | FrameLabel::E2 => {
            dr[3] = d_inv_r / sin_t;
            dth[3] = -cos_t / (r * sin_t * sin_t);
        }
        FrameLabel::VHat => {}
        FrameLabel::WHat => {
            // d/dr* of 1/(2(1-mu)) = -mu / (2 r (1-mu)).
            let d = -mu / (2.0 * r * n * n) * n;
            dr[0] = d;
            dr[1] = -d;
        }
    }
    (dr, dth)
}

/// Covariant derivative of one frame vector along another, returned as
/// components on the orthonormal frame (t̂, r̂*, θ̂, φ̂).
pub fn frame_covariant_derivative(
    direction: FrameLabel,
    field: FrameLabel,
    r: f64,
    theta: f64,
    p: &BlackHoleParams,
) -> [f64; 4] {
    let x = frame_vector(direction, r, theta, p);
    let y = frame_vector(field, r, theta, p);
    let (dy_drstar, dy_dtheta) = frame_vector_partials(field, r, theta, p);
    // W^k = X^j (d_j Y^k + Γ^k_{j l} Y^l) in the tortoise chart; Y depends on
    // (r*, theta) only.
    let mut w = [0.0; 4];
    for k in 0..4 {
        let mut acc = x[IDX_RSTAR] * dy_drstar[k] + x[IDX_THETA] * dy_dtheta[k];
        for j in 0..4 {
            if x[j] == 0.0 {
                continue;
            }
            for l in 0..4 {
                if y[l] == 0.0 {
                    continue;
                }
                acc += x[j] * connection_coefficient(Chart::Tortoise, k, j, l, r, theta, p) * y[l];
            }
        }
        w[k] = acc;
    }
    // Express on the orthonormal frame.
    let sqrt_n = p.lapse_sq(r).sqrt();
    [
        w[0] * sqrt_n,
        w[1] * sqrt_n,
        w[2] * r,
        w[3] * r * theta.sin(),
    ]
}

/// Kruskal map of an exterior double-null point:
/// v' = exp(v/4m), w' = -exp(-w/4m). The exponentials are clamped for
/// |v|, |w| > 300 m and the saturation is flagged.
pub fn kruskal_of_null(point: &DoubleNullPoint, p: &BlackHoleParams) -> KruskalMap {
    let m = p.mass();
    let cap = 300.0 * m;
    let v = point.v.clamp(-cap, cap);
    let w = point.w.clamp(-cap, cap);
    let saturated = v != point.v || w != point.w;
    let vprime = (v / (4.0 * m)).exp();
    let wprime = -(-w / (4.0 * m)).exp();
    let rstar = 0.5 * (v - w);
    let r = r_of_tortoise(rstar, p);
    let conformal_factor_sq = 16.0 * m * m / r * (-r / (2.0 * m)).exp();
    KruskalMap {
        point: KruskalPoint {
            vprime,
            wprime,
            tprime: 0.5 * (vprime + wprime),
            xprime: 0.5 * (vprime - wprime),
        },
        conformal_factor_sq,
        saturated,
    }
}

/// Penrose compactification of a Kruskal point:
/// v'' = arctan(v'/2m), w'' = arctan(w'/2m).
pub fn penrose_of_kruskal(kp: &KruskalPoint, p: &BlackHoleParams) -> (f64, f64) {
    let m2 = 2.0 * p.mass();
    ((kp.vprime / m2).atan(), (kp.wprime / m2).atan())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(m: f64) -> BlackHoleParams {
        BlackHoleParams::new(m).unwrap()
    }

    #[test]
    fn rejects_bad_mass() {
        assert!(BlackHoleParams::new(0.0).is_err());
        assert!(BlackHoleParams::new(-1.0).is_err());
        assert!(BlackHoleParams::new(f64::NAN).is_err());
    }

    #[test]
    fn tortoise_closed_form_values() {
        let p = params(0.5);
        // ln(2*0.5 - ...) = ln(1) = 0
        assert_abs_diff_eq!(tortoise_of_r(2.0, &p).unwrap(), 2.0, epsilon = 1e-15);
        // 1.5 + ln(0.5)
        assert_abs_diff_eq!(
            tortoise_of_r(1.5, &p).unwrap(),
            1.5 + 0.5f64.ln(),
            epsilon = 1e-15
        );
        let p1 = params(1.0);
        // 4 + 2 ln 2
        assert_abs_diff_eq!(
            tortoise_of_r(4.0, &p1).unwrap(),
            4.0 + 2.0 * 2.0f64.ln(),
            epsilon = 1e-15
        );
        assert!(tortoise_of_r(2.0, &p1).is_err());
        assert!(tortoise_of_r(1.0, &p1).is_err());
    }

    #[test]
    fn tortoise_inverse_round_trip() {
        let p = params(0.5);
        assert_abs_diff_eq!(r_of_tortoise(2.0, &p), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r_of_tortoise(1.5 + 0.5f64.ln(), &p), 1.5, epsilon = 1e-9);
    }

    #[test]
    fn tortoise_inverse_deep_values_do_not_overflow() {
        let p = params(1.0);
        let r50 = r_of_tortoise(-50.0, &p);
        assert!(r50 > 2.0);
        let r60 = r_of_tortoise(-60.0, &p);
        assert!(r60 > 2.0);
        assert!(r60 < r50);
        // Far below the representable gap the result saturates just outside
        // the horizon instead of landing on it.
        let deep = r_of_tortoise(-1e6, &p);
        assert!(deep > 2.0);
        assert!(r_of_tortoise(-1e7, &p) <= deep);
    }

    #[test]
    fn metric_values_at_photon_sphere() {
        let p = params(1.0);
        let (g, _) = metric_components(Chart::Tortoise, 3.0, 1.1, &p);
        assert_abs_diff_eq!(g[0][0], -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1][1], 1.0 / 3.0, epsilon = 1e-15);
        let (gn, _) = metric_components(Chart::DoubleNull, 3.0, 1.1, &p);
        assert_abs_diff_eq!(gn[0][1], -(1.0 - 2.0 / 3.0) / 2.0, epsilon = 1e-15);
        assert_eq!(gn[0][0], 0.0);
        assert_eq!(gn[1][1], 0.0);
        let th: f64 = 0.7;
        let (ga, _) = metric_components(Chart::AreaRadius, 5.0, th, &p);
        assert_abs_diff_eq!(ga[2][2], 25.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ga[3][3], 25.0 * th.sin() * th.sin(), epsilon = 1e-12);
    }

    #[test]
    fn metric_times_inverse_is_identity() {
        let p = params(1.0);
        for chart in [Chart::Tortoise, Chart::AreaRadius, Chart::DoubleNull] {
            for &(r, th) in &[(2.1, 0.4), (3.0, 1.2), (10.0, 2.8), (55.0, 1.57)] {
                let (g, ginv) = metric_components(chart, r, th, &p);
                for i in 0..4 {
                    for j in 0..4 {
                        let mut acc = 0.0;
                        for k in 0..4 {
                            acc += g[i][k] * ginv[k][j];
                        }
                        let expected = if i == j { 1.0 } else { 0.0 };
                        assert_abs_diff_eq!(acc, expected, epsilon = 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_table_spot_values() {
        let p = params(1.0);
        // Γ^r_{θθ} = -(1-mu) r in the area-radius chart.
        let g = connection_coefficient(Chart::AreaRadius, 1, IDX_THETA, IDX_THETA, 4.0, 1.0, &p);
        assert_abs_diff_eq!(g, -2.0, epsilon = 1e-15);
        // Γ^t_{t r*} = mu/(2r) in the tortoise chart.
        let g = connection_coefficient(Chart::Tortoise, IDX_T, IDX_T, IDX_RSTAR, 4.0, 1.0, &p);
        assert_abs_diff_eq!(g, 0.0625, epsilon = 1e-15);
        // Γ^phi_{θ phi} = cot θ vanishes on the equator.
        let g = connection_coefficient(
            Chart::Tortoise,
            IDX_PHI,
            IDX_THETA,
            IDX_PHI,
            4.0,
            std::f64::consts::FRAC_PI_2,
            &p,
        );
        assert_abs_diff_eq!(g, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn christoffel_symmetric_in_lower_indices() {
        let p = params(1.0);
        for chart in [Chart::Tortoise, Chart::AreaRadius, Chart::DoubleNull] {
            for up in 0..4 {
                for a in 0..4 {
                    for b in 0..4 {
                        let x = connection_coefficient(chart, up, a, b, 7.3, 0.9, &p);
                        let y = connection_coefficient(chart, up, b, a, 7.3, 0.9, &p);
                        assert_eq!(x, y);
                    }
                }
            }
        }
    }

    /// Finite-difference oracle: the Christoffel tables must be metric
    /// compatible, |d_s g_ab - Γ^l_{sa} g_lb - Γ^l_{sb} g_al| -> 0, with a
    /// quadratic Richardson extrapolation of central differences.
    #[test]
    fn christoffel_metric_compatibility_fd_oracle() {
        let p = params(1.0);
        let charts = [Chart::Tortoise, Chart::DoubleNull, Chart::AreaRadius];
        // Deterministic pseudo-random sweep of exterior points.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut rand = move || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..40 {
            let r = 2.2 + 30.0 * rand();
            let th = 0.25 + 2.6 * rand();
            let rs = tortoise_of_r(r, &p).unwrap();
            for &chart in &charts {
                let g_at = |rr: f64, tt: f64| metric_components(chart, rr, tt, &p).0;
                let g = g_at(r, th);
                // Richardson-extrapolated central differences of g along one
                // chart coordinate sigma. The base step is large enough that
                // f64 rounding of g stays below the 1e-9 target.
                let fd_extrap = |step: &dyn Fn(f64) -> ([[f64; 4]; 4], [[f64; 4]; 4])| {
                    let diff = |h: f64| {
                        let (gp, gm) = step(h);
                        let mut out = [[0.0; 4]; 4];
                        for a in 0..4 {
                            for b in 0..4 {
                                out[a][b] = (gp[a][b] - gm[a][b]) / (2.0 * h);
                            }
                        }
                        out
                    };
                    let d1 = diff(2e-3);
                    let d2 = diff(1e-3);
                    let mut out = [[0.0; 4]; 4];
                    for a in 0..4 {
                        for b in 0..4 {
                            out[a][b] = (4.0 * d2[a][b] - d1[a][b]) / 3.0;
                        }
                    }
                    out
                };
                // For each chart, the metric depends on one "radial" slot and
                // theta; time-like slots give identically zero derivatives and
                // vanishing Christoffel contractions of the right combination,
                // so testing the nontrivial sigmas covers the whole table.
                let sigmas: Vec<(usize, [[f64; 4]; 4])> = match chart {
                    Chart::AreaRadius => vec![
                        (1, fd_extrap(&|h| (g_at(r + h, th), g_at(r - h, th)))),
                        (
                            IDX_THETA,
                            fd_extrap(&|h| (g_at(r, th + h), g_at(r, th - h))),
                        ),
                    ],
                    Chart::Tortoise => vec![
                        (
                            IDX_RSTAR,
                            fd_extrap(&|h| {
                                (
                                    g_at(r_of_tortoise(rs + h, &p), th),
                                    g_at(r_of_tortoise(rs - h, &p), th),
                                )
                            }),
                        ),
                        (
                            IDX_THETA,
                            fd_extrap(&|h| (g_at(r, th + h), g_at(r, th - h))),
                        ),
                    ],
                    Chart::DoubleNull => vec![
                        // moving v at fixed w changes r* by h/2
                        (
                            IDX_V,
                            fd_extrap(&|h| {
                                (
                                    g_at(r_of_tortoise(rs + 0.5 * h, &p), th),
                                    g_at(r_of_tortoise(rs - 0.5 * h, &p), th),
                                )
                            }),
                        ),
                        (
                            IDX_W,
                            fd_extrap(&|h| {
                                (
                                    g_at(r_of_tortoise(rs - 0.5 * h, &p), th),
                                    g_at(r_of_tortoise(rs + 0.5 * h, &p), th),
                                )
                            }),
                        ),
                        (
                            IDX_THETA,
                            fd_extrap(&|h| (g_at(r, th + h), g_at(r, th - h))),
                        ),
                    ],
                };
                for (sigma, dg) in sigmas {
                    for a in 0..4 {
                        for b in 0..4 {
                            let mut gamma_terms = 0.0;
                            for l in 0..4 {
                                gamma_terms +=
                                    connection_coefficient(chart, l, sigma, a, r, th, &p) * g[l][b]
                                        + connection_coefficient(chart, l, sigma, b, r, th, &p)
                                            * g[a][l];
                            }
                            let scale = dg[a][b].abs().max(gamma_terms.abs()).max(1.0);
                            let residual = (dg[a][b] - gamma_terms).abs() / scale;
                            assert!(
                                residual < 1e-9,
                                "chart {chart:?} sigma {sigma} a {a} b {b}: residual {residual:e}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn frame_orthonormality() {
        let p = params(1.0);
        let labels = [
            FrameLabel::THat,
            FrameLabel::RStarHat,
            FrameLabel::ThetaHat,
            FrameLabel::PhiHat,
        ];
        let eta = [-1.0, 1.0, 1.0, 1.0];
        for &(r, th) in &[(2.05, 0.3), (3.0, 1.4), (20.0, 2.9)] {
            let (g, _) = metric_components(Chart::Tortoise, r, th, &p);
            for (i, &li) in labels.iter().enumerate() {
                for (j, &lj) in labels.iter().enumerate() {
                    let x = frame_vector(li, r, th, &p);
                    let y = frame_vector(lj, r, th, &p);
                    let mut dot = 0.0;
                    for a in 0..4 {
                        for b in 0..4 {
                            dot += g[a][b] * x[a] * y[b];
                        }
                    }
                    let expected = if i == j { eta[i] } else { 0.0 };
                    assert_abs_diff_eq!(dot, expected, epsilon = 1e-14);
                }
            }
            // g(v̂, ŵ) = -1/2 under the hatted null scalings.
            let v = frame_vector(FrameLabel::VHat, r, th, &p);
            let w = frame_vector(FrameLabel::WHat, r, th, &p);
            let mut dot = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    dot += g[a][b] * v[a] * w[b];
                }
            }
            assert_abs_diff_eq!(dot, -0.5, epsilon = 1e-14);
        }
    }

    /// The hatted-frame covariant-derivative table.
    #[test]
    fn frame_derivative_table() {
        let p = params(1.0);
        let r = 4.0;
        let th = 1.1;
        let n: f64 = 1.0 - 2.0 / r;
        let close = |got: [f64; 4], want: [f64; 4]| {
            for k in 0..4 {
                assert_abs_diff_eq!(got[k], want[k], epsilon = 1e-12);
            }
        };
        use FrameLabel::*;
        // ∇_{θ̂} θ̂ = -(sqrt(1-mu)/r) r̂*; at r=4: -sqrt(0.5)/4
        close(
            frame_covariant_derivative(ThetaHat, ThetaHat, r, th, &p),
            [0.0, -n.sqrt() / r, 0.0, 0.0],
        );
        // ∇_{r̂*} of every hatted basis vector vanishes.
        for y in [THat, RStarHat, ThetaHat, PhiHat] {
            close(frame_covariant_derivative(RStarHat, y, r, th, &p), [0.0; 4]);
        }
        // ∇_{θ̂} φ̂ = 0
        close(
            frame_covariant_derivative(ThetaHat, PhiHat, r, th, &p),
            [0.0; 4],
        );
        // ∇_{θ̂} t̂ = 0 and ∇_{φ̂} t̂ = 0
        close(
            frame_covariant_derivative(ThetaHat, THat, r, th, &p),
            [0.0; 4],
        );
        close(
            frame_covariant_derivative(PhiHat, THat, r, th, &p),
            [0.0; 4],
        );
        // ∇_{t̂} t̂ = mu/(2 r sqrt(1-mu)) r̂*
        close(
            frame_covariant_derivative(THat, THat, r, th, &p),
            [0.0, 0.5 / (2.0 * r * n.sqrt()), 0.0, 0.0],
        );
        // ∇_{t̂} r̂* = mu/(2 r sqrt(1-mu)) t̂
        close(
            frame_covariant_derivative(THat, RStarHat, r, th, &p),
            [0.5 / (2.0 * r * n.sqrt()), 0.0, 0.0, 0.0],
        );
        // ∇_{θ̂} r̂* = (sqrt(1-mu)/r) θ̂ and ∇_{φ̂} r̂* = (sqrt(1-mu)/r) φ̂
        close(
            frame_covariant_derivative(ThetaHat, RStarHat, r, th, &p),
            [0.0, 0.0, n.sqrt() / r, 0.0],
        );
        close(
            frame_covariant_derivative(PhiHat, RStarHat, r, th, &p),
            [0.0, 0.0, 0.0, n.sqrt() / r],
        );
        // ∇_{φ̂} φ̂ = -(sqrt(1-mu)/r) r̂* - (cot θ / r) θ̂
        close(
            frame_covariant_derivative(PhiHat, PhiHat, r, th, &p),
            [0.0, -n.sqrt() / r, -th.cos() / (th.sin() * r), 0.0],
        );
        // ∇_{φ̂} θ̂ = (cot θ / r) φ̂
        close(
            frame_covariant_derivative(PhiHat, ThetaHat, r, th, &p),
            [0.0, 0.0, 0.0, th.cos() / (th.sin() * r)],
        );
    }

    #[test]
    fn kruskal_map_values() {
        let p = params(1.0);
        // v = 0 -> v' = 1
        let k = kruskal_of_null(
            &DoubleNullPoint {
                v: 0.0,
                w: -4.0,
                theta: 1.0,
                phi: 0.0,
            },
            &p,
        );
        assert_abs_diff_eq!(k.point.vprime, 1.0, epsilon = 1e-15);
        // (m=1, v=4, w=-4) -> v' = e, w' = -e
        let k = kruskal_of_null(
            &DoubleNullPoint {
                v: 4.0,
                w: -4.0,
                theta: 1.0,
                phi: 0.0,
            },
            &p,
        );
        assert_abs_diff_eq!(k.point.vprime, std::f64::consts::E, epsilon = 1e-14);
        assert_abs_diff_eq!(k.point.wprime, -std::f64::consts::E, epsilon = 1e-14);
        assert!(!k.saturated);
        let k = kruskal_of_null(
            &DoubleNullPoint {
                v: 400.0,
                w: 0.0,
                theta: 1.0,
                phi: 0.0,
            },
            &p,
        );
        assert!(k.saturated);
        assert!(k.point.vprime.is_finite());
    }

    #[test]
    fn kruskal_relation_and_conformal_factor() {
        let p = params(1.0);
        for &r in &[2.0001, 2.1, 2.5, 3.0, 5.0, 10.0] {
            let rstar = tortoise_of_r(r, &p).unwrap();
            for &t in &[-3.0, 0.0, 7.0] {
                let dn = SpacetimePoint {
                    t,
                    rstar,
                    theta: 1.0,
                    phi: 0.0,
                }
                .to_double_null();
                let k = kruskal_of_null(&dn, &p);
                let lhs = k.point.tprime * k.point.tprime - k.point.xprime * k.point.xprime;
                let rhs = -(r / 2.0).exp() * (r - 2.0);
                let scale = lhs.abs().max(rhs.abs()).max(1e-300);
                assert!(
                    ((lhs - rhs) / scale).abs() < 1e-10,
                    "kruskal relation failed at r={r}, t={t}: {lhs} vs {rhs}"
                );
                let f2 = 16.0 / r * (-r / 2.0).exp();
                assert_abs_diff_eq!(k.conformal_factor_sq, f2, epsilon = 1e-12 * f2.abs());
                // The relation degenerates to 0 at the horizon.
                if r < 2.001 {
                    assert!(lhs.abs() < 1e-2);
                }
            }
        }
    }

    #[test]
    fn penrose_compactification() {
        let p = params(1.0);
        let (vpp, _) = penrose_of_kruskal(
            &KruskalPoint {
                vprime: 0.0,
                wprime: -1.0,
                tprime: 0.0,
                xprime: 0.0,
            },
            &p,
        );
        assert_abs_diff_eq!(vpp, 0.0, epsilon = 1e-15);
        let (vpp, wpp) = penrose_of_kruskal(
            &KruskalPoint {
                vprime: 2.0,
                wprime: -0.5,
                tprime: 0.0,
                xprime: 0.0,
            },
            &p,
        );
        // v' = 2m -> arctan(1) = pi/4
        assert_abs_diff_eq!(vpp, std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
        assert!(vpp.abs() < std::f64::consts::FRAC_PI_2);
        assert!(wpp.abs() < std::f64::consts::FRAC_PI_2);
        let (vpp, _) = penrose_of_kruskal(
            &KruskalPoint {
                vprime: 1e6,
                wprime: -0.5,
                tprime: 0.0,
                xprime: 0.0,
            },
            &p,
        );
        assert!(vpp < std::f64::consts::FRAC_PI_2);
        assert!(vpp > std::f64::consts::FRAC_PI_2 - 1e-5);
    }

    #[test]
    fn null_point_round_trip() {
        let pt = SpacetimePoint {
            t: 3.0,
            rstar: -1.5,
            theta: 0.8,
            phi: 0.1,
        };
        let dn = pt.to_double_null();
        assert_abs_diff_eq!(dn.v + dn.w, 2.0 * pt.t, epsilon = 1e-15);
        assert_abs_diff_eq!(dn.v - dn.w, 2.0 * pt.rstar, epsilon = 1e-15);
        let back = dn.to_tortoise();
        assert_abs_diff_eq!(back.t, pt.t, epsilon = 1e-15);
        assert_abs_diff_eq!(back.rstar, pt.rstar, epsilon = 1e-15);
    }
}

//! Vector-field-method machinery: multiplier fields and their deformation
//! contraction with the Maxwell energy-momentum tensor, energy functionals on
//! time slices, the sign radii bracketing the photon sphere, and the
//! certified near-horizon weight profile h.

use crate::geometry::BlackHoleParams;
use crate::maxwell::{EvolutionContext, FieldState};
use crate::numerics::{bisect, rstar_of};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MultiplierError {
    #[error("weight radius r1 = {r1} violates 2m < r1 and 1.2 r1 < 3m (m = {m})")]
    R1OutOfRange { r1: f64, m: f64 },
    #[error(
        "weight radius r1 = {r1} is outside the feasibility window: the envelope \
         inequality (1+6m/r^2) h <= 2m h'/(r-2m) fails beyond r = {edge}"
    )]
    InfeasibleR1 { r1: f64, edge: f64 },
    #[error("h certification failed: constraint {name} has margin {margin} at r = {r}")]
    CertificationFailed {
        name: &'static str,
        margin: f64,
        r: f64,
    },
    #[error("requested radial range [{lo}, {hi}] is outside the grid")]
    RangeOutsideGrid { lo: f64, hi: f64 },
    #[error(
        "h-profile machinery requires unit mass; got m = {0}. The dimensionally \
             literal weight constraints (6m/r^2, log(r-2m)) are only certified at m = 1; \
             pass the explicit override to proceed anyway"
    )]
    NonUnitMass(f64),
}

/// Radial weight profile f(r*) for the radial multiplier.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum GProfile {
    /// f identically constant
    Constant(f64),
    /// f = integral of a C² smoothed indicator of [lo, hi] in r*; rises from
    /// 0 toward hi - lo with ramps of half-width `ramp` at both edges
    SmoothedStep { lo: f64, hi: f64, ramp: f64 },
}

/// quintic smoothstep: C² monotone 0 -> 1 on [0, 1]
fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

fn smoothstep_deriv(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        30.0 * u * u * (1.0 - u) * (1.0 - u)
    }
}

/// Smooth C² indicator of [lo, hi]: 1 well inside, 0 outside, with
/// smoothstep ramps of half-width `ramp` at both edges.
pub fn smooth_indicator(rstar: f64, lo: f64, hi: f64, ramp: f64) -> f64 {
    smoothstep((rstar - (lo - ramp)) / (2.0 * ramp))
        - smoothstep((rstar - (hi - ramp)) / (2.0 * ramp))
}

/// running integral of the smoothstep: 0 for u <= 0, u - 1/2 for u >= 1
fn smoothstep_integral(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        u - 0.5
    } else {
        u * u * u * u * (2.5 + u * (-3.0 + u))
    }
}

impl GProfile {
    /// (f, f') at the tortoise coordinate.
    pub fn eval(&self, rstar: f64) -> (f64, f64) {
        match *self {
            GProfile::Constant(c) => (c, 0.0),
            GProfile::SmoothedStep { lo, hi, ramp } => {
                let width = 2.0 * ramp;
                let ua = (rstar - (lo - ramp)) / width;
                let ub = (rstar - (hi - ramp)) / width;
                let f = width * (smoothstep_integral(ua) - smoothstep_integral(ub));
                let fp = smoothstep(ua) - smoothstep(ub);
                (f, fp)
            }
        }
    }
}

/// The near-horizon weight h(r*): closed-form integral of the saturating
/// envelope ODE h' = (1+delta) (r-2m)(r^2+6m)/(2m r^2) h, normalized to
/// h = 1 at r* = -50m, then cut off by a C² ramp between r1 and 1.2 r1.
///
/// The small saturation backoff delta keeps all five certification margins
/// strictly positive instead of one of them sitting at floating-point zero.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HProfile {
    pub r1: f64,
    pub r1_star: f64,
    /// r*(1.2 r1), the outer edge of the support
    pub cutoff_star: f64,
    pub mass: f64,
    delta: f64,
    /// exponent offset so that h(-50m) = 1
    phi_base: f64,
    /// tabulated on the grid that certified the profile
    pub rstar: Vec<f64>,
    pub h: Vec<f64>,
    pub h_prime: Vec<f64>,
    /// per-node margins of the five §-constraints at nodes with r <= r1
    pub margins: [Vec<f64>; 5],
    /// min over certified nodes of each margin
    pub min_margins: [f64; 5],
}

pub const H_SATURATION_BACKOFF: f64 = 1e-6;

fn h_exponent(r: f64, mass: f64) -> f64 {
    r * r / (4.0 * mass) + 3.0 * r.ln()
}

impl HProfile {
    /// (h, h') at any tortoise coordinate.
    pub fn eval(&self, rstar: f64) -> (f64, f64) {
        if rstar >= self.cutoff_star {
            return (0.0, 0.0);
        }
        let gap = crate::geometry::horizon_gap_of_tortoise(
            rstar,
            &BlackHoleParams::new(self.mass).unwrap(),
        );
        let r = 2.0 * self.mass + gap;
        let raw = ((1.0 + self.delta) * (h_exponent(r, self.mass) - self.phi_base)).exp();
        let slope =
            (1.0 + self.delta) * gap * (r * r + 6.0 * self.mass) / (2.0 * self.mass * r * r);
        let raw_prime = slope * raw;
        if rstar <= self.r1_star {
            (raw, raw_prime)
        } else {
            let width = self.cutoff_star - self.r1_star;
            let u = (rstar - self.r1_star) / width;
            let ramp = 1.0 - smoothstep(u);
            let ramp_prime = -smoothstep_deriv(u) / width;
            (raw * ramp, raw_prime * ramp + raw * ramp_prime)
        }
    }
}

/// Area radius beyond which the envelope inequality
/// (1+delta)(r-2m)(r^2+6m) <= 4m^2 fails; the feasibility window for r1.
pub fn h_feasibility_edge(p: &BlackHoleParams) -> f64 {
    let m = p.mass();
    bisect(
        |r| (1.0 + H_SATURATION_BACKOFF) * (r - 2.0 * m) * (r * r + 6.0 * m) - 4.0 * m * m,
        2.0 * m,
        3.0 * m,
        1e-14,
    )
}

/// Build and certify the weight profile on the given context's radial grid.
///
/// `allow_nonunit_mass` overrides the refusal to certify the dimensionally
/// literal constraint system away from m = 1.
pub fn build_h_profile(
    ctx: &EvolutionContext,
    r1: f64,
    allow_nonunit_mass: bool,
) -> Result<HProfile, MultiplierError> {
    let p = &ctx.params;
    let m = p.mass();
    if (m - 1.0).abs() > 1e-12 && !allow_nonunit_mass {
        return Err(MultiplierError::NonUnitMass(m));
    }
    if !(r1 > 2.0 * m) || !(1.2 * r1 < 3.0 * m) {
        return Err(MultiplierError::R1OutOfRange { r1, m });
    }
    let edge = h_feasibility_edge(p);
    if r1 > edge {
        return Err(MultiplierError::InfeasibleR1 { r1, edge });
    }
    let r_base = 2.0 * m + crate::geometry::horizon_gap_of_tortoise(-50.0 * m, p);
    let mut profile = HProfile {
        r1,
        r1_star: rstar_of(r1, p),
        cutoff_star: rstar_of(1.2 * r1, p),
        mass: m,
        delta: H_SATURATION_BACKOFF,
        phi_base: h_exponent(r_base, m),
        rstar: ctx.radial.rstar.clone(),
        h: Vec::new(),
        h_prime: Vec::new(),
        margins: Default::default(),
        min_margins: [f64::MAX; 5],
    };
    let grid = &ctx.radial;
    let mut margins: [Vec<f64>; 5] = Default::default();
    for i in 0..grid.n_r {
        let (h, hp) = profile.eval(grid.rstar[i]);
        profile.h.push(h);
        profile.h_prime.push(hp);
        let r = grid.r[i];
        if r <= r1 {
            let gap = grid.gap[i];
            let mu = grid.mu[i];
            // h'/(1-mu) computed through the gap to stay finite arbitrarily
            // close to the horizon
            let hp_over = hp * r / gap;
            let vals = [
                (mu / r) * h - hp,                // (mu/r) h - h' >= 0
                h,                                // h > 0
                hp,                               // h' >= 0
                hp_over - 3.0 * h / r,            // -h'/(1-mu) + 3h/r <= 0
                mu * (hp_over - 3.0 * h / r) - h, // mu[...] <= -h
            ];
            let names = [
                "mu_h_over_r_minus_hprime",
                "h_positive",
                "hprime_nonneg",
                "redshift_sign",
                "envelope",
            ];
            for (j, &v) in vals.iter().enumerate() {
                if v < 0.0 {
                    return Err(MultiplierError::CertificationFailed {
                        name: names[j],
                        margin: v,
                        r,
                    });
                }
                margins[j].push(v);
                profile.min_margins[j] = profile.min_margins[j].min(v);
            }
        }
    }
    profile.margins = margins;
    Ok(profile)
}

/// A multiplier vector field V = V^v ∂_v + V^w ∂_w.
#[derive(Debug, Clone)]
pub enum Multiplier {
    /// ∂_t: V^v = V^w = 1 (Killing; zero deformation)
    TimeTranslation,
    /// K = -v² ∂_v - w² ∂_w
    Conformal,
    /// G = f ∂_r* = f ∂_v - f ∂_w
    Radial(GProfile),
    /// H = -h ∂_v - h/(1-mu) ∂_w
    Redshift(HProfile),
}

impl Multiplier {
    pub fn name(&self) -> &'static str {
        match self {
            Multiplier::TimeTranslation => "T",
            Multiplier::Conformal => "K",
            Multiplier::Radial(_) => "G",
            Multiplier::Redshift(_) => "H",
        }
    }
}

/// Pointwise multiplier data entering the deformation contraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierComponents {
    pub v_v: f64,
    pub v_w: f64,
    pub dv_vv: f64,
    pub dw_vw: f64,
    pub dv_vw: f64,
    pub dw_vv: f64,
}

impl Multiplier {
    /// Components and null derivatives at (t, r*). The redshift field needs
    /// the horizon gap to stay well conditioned, hence the context.
    pub fn components(&self, t: f64, rstar: f64, ctx: &EvolutionContext) -> MultiplierComponents {
        match self {
            Multiplier::TimeTranslation => MultiplierComponents {
                v_v: 1.0,
                v_w: 1.0,
                dv_vv: 0.0,
                dw_vw: 0.0,
                dv_vw: 0.0,
                dw_vv: 0.0,
            },
            Multiplier::Conformal => {
                let v = t + rstar;
                let w = t - rstar;
                MultiplierComponents {
                    v_v: -v * v,
                    v_w: -w * w,
                    dv_vv: -2.0 * v,
                    dw_vw: -2.0 * w,
                    dv_vw: 0.0,
                    dw_vv: 0.0,
                }
            }
            Multiplier::Radial(f) => {
                let (fv, fp) = f.eval(rstar);
                MultiplierComponents {
                    v_v: fv,
                    v_w: -fv,
                    dv_vv: 0.5 * fp,
                    dw_vw: 0.5 * fp,
                    dv_vw: -0.5 * fp,
                    dw_vv: -0.5 * fp,
                }
            }
            Multiplier::Redshift(h) => {
                let (hv, hp) = h.eval(rstar);
                let p = &ctx.params;
                let gap = crate::geometry::horizon_gap_of_tortoise(rstar, p);
                let r = p.horizon_radius() + gap;
                let mu = p.mu(r);
                // d/dr* of h/(1-mu) = (h' - mu h / r)/(1-mu)
                let d = (hp - mu * hv / r) * r / gap;
                MultiplierComponents {
                    v_v: -hv,
                    v_w: -hv * r / gap,
                    dv_vv: -0.5 * hp,
                    dw_vw: 0.5 * d,
                    dv_vw: -0.5 * d,
                    dw_vv: 0.5 * hp,
                }
            }
        }
    }
}

/// The three quadratic field blocks entering every functional:
/// the transverse w-block T_ww, the transverse v-block T_vv, and the
/// middle block M = |F_vw|²/(1-mu)² + |F_θφ|²/(4 r⁴ sin²θ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldBlocks {
    pub t_ww: f64,
    pub t_vv: f64,
    /// middle-component block with the raw 1/(1-mu)² weight
    pub middle: f64,
    /// T_vw = (1-mu) * middle
    pub t_vw: f64,
    /// T_{t r*} = <F_tθ, F_r*θ>/r² + <F_tφ, F_r*φ>/(r² sin²θ)
    pub t_trstar: f64,
}

/// Blocks from the six raw components at one node.
#[inline]
pub fn field_blocks(comps: [f64; 6], r: f64, gap: f64, sin_theta: f64) -> FieldBlocks {
    let [p, q, s, x, y, z] = comps;
    let inv_s2 = 1.0 / (sin_theta * sin_theta);
    let f_v_theta = 0.5 * (q + s);
    let f_w_theta = 0.5 * (q - s);
    let f_v_phi = 0.5 * (x + y);
    let f_w_phi = 0.5 * (x - y);
    let r2 = r * r;
    let t_ww = (f_w_theta * f_w_theta + f_w_phi * f_w_phi * inv_s2) / r2;
    let t_vv = (f_v_theta * f_v_theta + f_v_phi * f_v_phi * inv_s2) / r2;
    // F_vw = -P/2; 1/(1-mu) = r/gap
    let f_vw_over = -0.5 * p * r / gap;
    let middle = f_vw_over * f_vw_over + z * z * inv_s2 / (4.0 * r2 * r2);
    let t_vw = (gap / r) * middle;
    let t_trstar = (q * s + x * y * inv_s2) / r2;
    FieldBlocks {
        t_ww,
        t_vv,
        middle,
        t_vw,
        t_trstar,
    }
}

/// π^{αβ}(V) T_{αβ} via the closed three-term form:
/// T_ww-block · (-2/(1-mu)) ∂_v V^w + T_vv-block · (-2/(1-mu)) ∂_w V^v
/// + middle-block · (-2)[∂_v V^v + ∂_w V^w + (3mu-2)/(2r) (V^v - V^w)].
#[inline]
pub fn deformation_contraction_blocks(
    mc: &MultiplierComponents,
    blocks: &FieldBlocks,
    r: f64,
    gap: f64,
) -> f64 {
    let mu = 1.0 - gap / r;
    let inv_n = r / gap;
    blocks.t_ww * (-2.0 * inv_n) * mc.dv_vw
        + blocks.t_vv * (-2.0 * inv_n) * mc.dw_vv
        + blocks.middle
            * (-2.0)
            * (mc.dv_vv + mc.dw_vw + (3.0 * mu - 2.0) / (2.0 * r) * (mc.v_v - mc.v_w))
}

/// Deformation contraction of a multiplier with the field state at an
/// off-grid point of the slice.
pub fn deformation_contraction(
    v: &Multiplier,
    state: &FieldState,
    ctx: &EvolutionContext,
    rstar: f64,
    theta: f64,
) -> Result<f64, crate::maxwell::MaxwellError> {
    let comps = crate::maxwell::interpolate_components(state, ctx, rstar, theta)?;
    let gap = crate::geometry::horizon_gap_of_tortoise(rstar, &ctx.params);
    let r = ctx.params.horizon_radius() + gap;
    let blocks = field_blocks(comps, r, gap, theta.sin());
    let mc = v.components(state.time, rstar, ctx);
    Ok(deformation_contraction_blocks(&mc, &blocks, r, gap))
}

/// Named slice functionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum EnergyKind {
    /// conserved energy from ∂_t
    ET,
    /// energy without the middle components
    EHat,
    /// conformal energy (v², w² weights)
    EK,
    /// modified energy with horizon-weighted transverse terms
    ESharp,
    /// boundary term of the radial multiplier (not sign definite)
    EG,
}

impl EnergyKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnergyKind::ET => "E_T",
            EnergyKind::EHat => "E_hat",
            EnergyKind::EK => "E_K",
            EnergyKind::ESharp => "E_sharp",
            EnergyKind::EG => "E_G",
        }
    }
}

/// A named scalar with its region and discretization metadata.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FunctionalReport {
    pub name: String,
    /// slice time, or the fixed null coordinate for fluxes
    pub coord: f64,
    pub region_lo: f64,
    pub region_hi: f64,
    pub value: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub dt: f64,
}

impl FunctionalReport {
    pub fn csv_header() -> &'static str {
        "name,coord,region_lo,region_hi,value,n_r,n_theta,dt"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.name,
            self.coord,
            self.region_lo,
            self.region_hi,
            self.value,
            self.n_r,
            self.n_theta,
            self.dt
        )
    }
}

/// Per-node slice density of an energy kind, with respect to dr* dσ².
#[inline]
fn energy_density(
    kind: EnergyKind,
    comps: [f64; 6],
    t: f64,
    rstar: f64,
    r: f64,
    gap: f64,
    sin_theta: f64,
    g_profile: Option<&GProfile>,
) -> f64 {
    let [p, q, s, x, y, z] = comps;
    let inv_s2 = 1.0 / (sin_theta * sin_theta);
    let r2 = r * r;
    match kind {
        EnergyKind::ET => {
            // ½[r²P²/(1-mu) + Q² + S² + (X²+Y²)/sin² + (1-mu) Z²/(r² sin²)]
            0.5 * (r2 * p * p * r / gap
                + q * q
                + s * s
                + (x * x + y * y) * inv_s2
                + (gap / r) * z * z * inv_s2 / r2)
        }
        EnergyKind::EHat => q * q + s * s + (x * x + y * y) * inv_s2,
        EnergyKind::EK => {
            let v = t + rstar;
            let w = t - rstar;
            let f_v_theta = 0.5 * (q + s);
            let f_w_theta = 0.5 * (q - s);
            let f_v_phi = 0.5 * (x + y);
            let f_w_phi = 0.5 * (x - y);
            // r²(1-mu) M = r² P²/(4(1-mu)) + (1-mu) Z²/(4 r² sin²)
            let m_r2 = 0.25 * r2 * p * p * r / gap + 0.25 * (gap / r) * z * z * inv_s2 / r2;
            w * w * (f_w_theta * f_w_theta + f_w_phi * f_w_phi * inv_s2)
                + v * v * (f_v_theta * f_v_theta + f_v_phi * f_v_phi * inv_s2)
                + (v * v + w * w) * m_r2
        }
        EnergyKind::ESharp => {
            let f_v_theta = 0.5 * (q + s);
            let f_w_theta = 0.5 * (q - s);
            let f_v_phi = 0.5 * (x + y);
            let f_w_phi = 0.5 * (x - y);
            let p_over = 0.5 * p * r / gap;
            (f_w_theta * f_w_theta + f_w_phi * f_w_phi * inv_s2) * r / gap
                + f_v_theta * f_v_theta
                + f_v_phi * f_v_phi * inv_s2
                + r2 * p_over * p_over
                + 0.25 * z * z * inv_s2 / r2
        }
        EnergyKind::EG => {
            let f = g_profile.map(|g| g.eval(rstar).0).unwrap_or(1.0);
            -f * (q * s + x * y * inv_s2)
        }
    }
}

/// Quadrature of the requested energy density over {t} x [range] x S².
/// The radial range is snapped to grid nodes; trapezoid weights in r*.
pub fn energy_functional(
    kind: EnergyKind,
    state: &FieldState,
    range: (f64, f64),
    ctx: &EvolutionContext,
    g_profile: Option<&GProfile>,
) -> Result<FunctionalReport, MultiplierError> {
    let grid = &ctx.radial;
    if range.0 > range.1 || range.1 < grid.rstar_min || range.0 > grid.rstar_max {
        return Err(MultiplierError::RangeOutsideGrid {
            lo: range.0,
            hi: range.1,
        });
    }
    let lo = range.0.max(grid.rstar_min);
    let hi = range.1.min(grid.rstar_max);
    let ang = &ctx.angular;
    let mut row = |i: usize| -> f64 {
        let mut sph = 0.0;
        for k in 0..ang.n_theta {
            let comps = [
                state.f_t_rstar.at(i, k),
                state.f_t_theta.at(i, k),
                state.f_rstar_theta.at(i, k),
                state.f_t_phi.at(i, k),
                state.f_rstar_phi.at(i, k),
                state.f_theta_phi.at(i, k),
            ];
            sph += ang.weight[k]
                * energy_density(
                    kind,
                    comps,
                    state.time,
                    grid.rstar[i],
                    grid.r[i],
                    grid.gap[i],
                    ang.sin_theta[k],
                    g_profile,
                );
        }
        sph
    };
    let value = crate::numerics::radial_integrate_partial(grid, lo, hi, &mut row)
        * 2.0
        * std::f64::consts::PI;
    Ok(FunctionalReport {
        name: kind.name().to_string(),
        coord: state.time,
        region_lo: lo,
        region_hi: hi,
        value,
        n_r: grid.n_r,
        n_theta: ang.n_theta,
        dt: ctx.max_dt(),
    })
}

/// The trapping coefficient c(r) = 2 + (3mu - 2) r*/r whose sign structure
/// defines the radii r0 < 3m < R0.
pub fn trapping_coefficient(r: f64, p: &BlackHoleParams) -> f64 {
    let mu = p.mu(r);
    let rstar = rstar_of(r, p);
    2.0 + (3.0 * mu - 2.0) * rstar / r
}

/// The radii bracketing the photon sphere outside which c(r) <= 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SignRadii {
    pub r0: f64,
    pub big_r0: f64,
}

/// Bisection for r0 (largest r < 3m with c <= 0) and R0 (smallest r > 3m
/// with c <= 0), to 1e-10 relative.
pub fn find_sign_radii(p: &BlackHoleParams) -> SignRadii {
    let m = p.mass();
    // On (2m, 3m): 3mu - 2 > 0 and c <= 0 iff g(r) = r* + 2r/(3mu-2) <= 0.
    // g -> -inf at the horizon and +inf at the photon sphere.
    let g_inner = |r: f64| rstar_of(r, p) + 2.0 * r / (3.0 * p.mu(r) - 2.0);
    let r0 = bisect(
        g_inner,
        2.0 * m * (1.0 + 1e-12),
        3.0 * m * (1.0 - 1e-12),
        1e-12,
    );
    // On (3m, inf): 2 - 3mu > 0 and c <= 0 iff r* >= 2r/(2-3mu).
    let g_outer = |r: f64| rstar_of(r, p) - 2.0 * r / (2.0 - 3.0 * p.mu(r));
    let big_r0 = bisect(g_outer, 3.0 * m * (1.0 + 1e-12), 1000.0 * m, 1e-12);
    SignRadii { r0, big_r0 }
}

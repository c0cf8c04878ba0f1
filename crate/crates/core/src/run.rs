//! Recording machinery for evolved runs: null-line flux stations, space-time
//! bulk integrals, divergence-theorem closure rectangles and decimated
//! snapshots, all accumulated while the evolution advances so that long runs
//! never need the full history in memory.
//!
//! Flux and bulk values follow the paper-side measure conventions
//! (dσ² dv, dσ² dw, dσ² dr* dt, dσ² dw dv); the closure accumulators use the
//! exact coordinate-volume bookkeeping d(sqrt(-g) J^t)/dt + radial flux.

use crate::maxwell::{
    interpolate_radial_line, EvolutionContext, EvolveEvent, FieldState, MaxwellError,
};
use crate::multipliers::{
    deformation_contraction_blocks, field_blocks, FieldBlocks, FunctionalReport, HProfile,
    Multiplier,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no recorded station or snapshot coverage for the requested {0}")]
    NotCovered(String),
    #[error(transparent)]
    Maxwell(#[from] MaxwellError),
}

/// A null line at fixed v or fixed w.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum NullLine {
    VConst(f64),
    WConst(f64),
}

impl NullLine {
    /// (r*, running null coordinate) at slice time t.
    fn at_time(&self, t: f64) -> (f64, f64) {
        match *self {
            NullLine::VConst(v) => (v - t, 2.0 * t - v),
            NullLine::WConst(w) => (t - w, 2.0 * t - w),
        }
    }

    pub fn coord(&self) -> f64 {
        match *self {
            NullLine::VConst(v) => v,
            NullLine::WConst(w) => w,
        }
    }
}

/// Which current is fluxed through the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum FluxCurrent {
    /// the ∂_t current (positive flux)
    T,
    /// the redshift current (F^(H); negative of a sum of squares for h >= 0)
    H,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FluxStationSpec {
    pub current: FluxCurrent,
    pub line: NullLine,
    /// range of the running null coordinate (w on v = const lines, v on
    /// w = const lines); use f64::INFINITY to run to the grid edge
    pub range: (f64, f64),
    /// restrict the transverse extent to r >= this area radius, if set
    pub r_min: Option<f64>,
    /// restrict to r <= this area radius, if set
    pub r_max: Option<f64>,
    /// hard floor in r*. Integrands weighting the w-transverse block by
    /// 1/(1-mu) lose to amplified cancellation noise beyond r* ~ -50m
    /// (the true F_wθ cancels below the f64 floor while 1/(1-mu) grows like
    /// e^{|r*|/2m}); the dropped true tail is reported via the station tail.
    pub rstar_floor: Option<f64>,
}

#[derive(Debug, Clone)]
struct FluxStation {
    spec: FluxStationSpec,
    value: f64,
    prev: Option<(f64, f64)>,
    /// integrand magnitude at the last accumulated sample; reports how much
    /// flux the grid-edge truncation may be dropping
    tail: f64,
    rstar_min_eff: f64,
    rstar_max_eff: f64,
}

/// Space-time bulk integrals over dyadic slabs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum BulkKind {
    /// conformal-multiplier bulk, 4t c(r) x middle, measure (1-mu) r² dσ² dr* dt
    JK,
    /// Morawetz middle-component bulk, measure dσ² dr* dt
    JG,
    /// |r* - (3m)*|-weighted middle bulk, measure dσ² dr* dt
    JC,
    /// transverse (hat-energy) density windowed by a smooth indicator of
    /// [lo, hi] in r*, measure dσ² dr* dt
    EHatBand { lo: f64, hi: f64, ramp: f64 },
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BulkStationSpec {
    pub kind: BulkKind,
    pub t_range: (f64, f64),
    pub rstar_range: (f64, f64),
}

#[derive(Debug, Clone)]
struct BulkStation {
    spec: BulkStationSpec,
    value: f64,
    prev: Option<(f64, f64)>,
}

/// The near-horizon space-time integral I^(H) over a null rectangle
/// (v in [v0, v1]) x (w >= w0) x (r <= r_cap), measure r²(1-mu) dσ² dw dv.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IhStationSpec {
    pub v_range: (f64, f64),
    pub w_min: f64,
    /// area-radius cap, usually r1; use f64::INFINITY for none
    pub r_cap: f64,
    /// r* noise floor for the 1/(1-mu)-weighted transverse term; see
    /// [`FluxStationSpec::rstar_floor`]
    pub rstar_floor: f64,
}

#[derive(Debug, Clone)]
struct IhStation {
    spec: IhStationSpec,
    value: f64,
    prev: Option<(f64, f64)>,
    /// most negative value of the pointwise -I^(H) integrand seen in r <= cap
    min_pointwise: f64,
    /// field scale companion for normalizing `min_pointwise`
    max_pointwise: f64,
}

/// Divergence-theorem closure over a coordinate rectangle
/// [t1, t2] x [r*_lo, r*_hi]; the time endpoints must be hit exactly, so
/// register them as evolve targets.
#[derive(Debug, Clone)]
pub struct ClosureSpec {
    pub multiplier: Multiplier,
    pub t_range: (f64, f64),
    pub rstar_range: (f64, f64),
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ClosureResult {
    pub bulk: f64,
    pub delta_e: f64,
    pub flux_lo: f64,
    pub flux_hi: f64,
    pub residual: f64,
    pub scale: f64,
}

#[derive(Debug, Clone)]
struct ClosureAccumulator {
    spec: ClosureSpec,
    ilo: usize,
    ihi: usize,
    /// per-step samples of (t, bulk rate, flux rate lo, flux rate hi);
    /// integrated with local cubics at finish so the time quadrature does
    /// not cap the closure's convergence order
    samples: Vec<(f64, f64, f64, f64)>,
    e_start: Option<f64>,
    e_end: Option<f64>,
}

/// Everything recorded over one evolution.
pub struct EvolvedRun {
    pub flux: Vec<(FluxStationSpec, f64, f64)>,
    pub bulk: Vec<(BulkStationSpec, f64)>,
    pub ih: Vec<(IhStationSpec, f64, f64, f64)>,
    pub closures: Vec<(String, (f64, f64), (f64, f64), ClosureResult)>,
    /// decimated stored slices (time-ordered), if requested
    pub snapshots: Vec<FieldState>,
    pub final_state: FieldState,
}

/// Observer wiring the stations into `maxwell::evolve`.
pub struct RunRecorder<'a> {
    ctx: &'a EvolutionContext,
    flux: Vec<FluxStation>,
    bulk: Vec<BulkStation>,
    ih: Vec<IhStation>,
    closures: Vec<ClosureAccumulator>,
    h_profile: Option<HProfile>,
    snapshot_every: Option<usize>,
    snapshots: Vec<FieldState>,
    steps_seen: usize,
}

impl<'a> RunRecorder<'a> {
    pub fn new(ctx: &'a EvolutionContext) -> Self {
        Self {
            ctx,
            flux: Vec::new(),
            bulk: Vec::new(),
            ih: Vec::new(),
            closures: Vec::new(),
            h_profile: None,
            snapshot_every: None,
            snapshots: Vec::new(),
            steps_seen: 0,
        }
    }

    /// Weight profile used by H-current stations and I^(H).
    pub fn with_h_profile(mut self, h: HProfile) -> Self {
        self.h_profile = Some(h);
        self
    }

    pub fn snapshot_every(mut self, steps: usize) -> Self {
        self.snapshot_every = Some(steps.max(1));
        self
    }

    pub fn add_flux(&mut self, spec: FluxStationSpec) {
        let g = &self.ctx.radial;
        let margin = 2.0 * g.dr;
        let mut lo = match spec.r_min {
            Some(r) => crate::numerics::rstar_of(r, &self.ctx.params).max(g.rstar_min + margin),
            None => g.rstar_min + margin,
        };
        if let Some(floor) = spec.rstar_floor {
            lo = lo.max(floor);
        }
        let hi = match spec.r_max {
            Some(r) => crate::numerics::rstar_of(r, &self.ctx.params).min(g.rstar_max - margin),
            None => g.rstar_max - margin,
        };
        self.flux.push(FluxStation {
            spec,
            value: 0.0,
            prev: None,
            tail: 0.0,
            rstar_min_eff: lo,
            rstar_max_eff: hi,
        });
    }

    pub fn add_bulk(&mut self, spec: BulkStationSpec) {
        self.bulk.push(BulkStation {
            spec,
            value: 0.0,
            prev: None,
        });
    }

    pub fn add_ih(&mut self, spec: IhStationSpec) {
        self.ih.push(IhStation {
            spec,
            value: 0.0,
            prev: None,
            min_pointwise: 0.0,
            max_pointwise: 0.0,
        });
    }

    pub fn add_closure(&mut self, spec: ClosureSpec) {
        let (ilo, ihi) = self
            .ctx
            .radial
            .index_range(spec.rstar_range.0, spec.rstar_range.1);
        self.closures.push(ClosureAccumulator {
            spec,
            ilo,
            ihi,
            samples: Vec::new(),
            e_start: None,
            e_end: None,
        });
    }

    /// Target times the evolution must hit exactly for the registered
    /// closure rectangles.
    pub fn required_targets(&self) -> Vec<f64> {
        let mut t = Vec::new();
        for c in &self.closures {
            t.push(c.spec.t_range.0);
            t.push(c.spec.t_range.1);
        }
        t
    }

    pub fn observe(&mut self, state: &FieldState, event: EvolveEvent) {
        match event {
            EvolveEvent::Start => {
                self.sample(state);
                if self.snapshot_every.is_some() {
                    self.snapshots.push(state.clone());
                }
            }
            EvolveEvent::Step { .. } => {
                self.steps_seen += 1;
                self.sample(state);
                if let Some(k) = self.snapshot_every {
                    if self.steps_seen % k == 0 {
                        self.snapshots.push(state.clone());
                    }
                }
            }
            EvolveEvent::Target { .. } => {
                let t = state.time;
                for c in &mut self.closures {
                    if (t - c.spec.t_range.0).abs() < 1e-9 && c.e_start.is_none() {
                        c.e_start = Some(signed_energy(
                            &c.spec.multiplier,
                            state,
                            self.ctx,
                            c.ilo,
                            c.ihi,
                        ));
                    }
                    if (t - c.spec.t_range.1).abs() < 1e-9 && c.e_end.is_none() {
                        c.e_end = Some(signed_energy(
                            &c.spec.multiplier,
                            state,
                            self.ctx,
                            c.ilo,
                            c.ihi,
                        ));
                    }
                }
            }
        }
    }

    fn sample(&mut self, state: &FieldState) {
        let t = state.time;
        let ctx = self.ctx;
        for st in &mut self.flux {
            let (rstar, run_coord) = st.spec.line.at_time(t);
            if rstar < st.rstar_min_eff
                || rstar > st.rstar_max_eff
                || run_coord < st.spec.range.0
                || run_coord > st.spec.range.1
            {
                st.prev = None;
                continue;
            }
            let integrand =
                flux_sphere_integral_oriented(&st.spec, state, ctx, rstar, self.h_profile.as_ref());
            // running coordinate advances at d(coord)/dt = 2
            if let Some((t0, f0)) = st.prev {
                st.value += 0.5 * (f0 + integrand) * 2.0 * (t - t0);
            }
            st.prev = Some((t, integrand));
            st.tail = integrand.abs();
        }
        for st in &mut self.bulk {
            if t < st.spec.t_range.0 - 1e-12 || t > st.spec.t_range.1 + 1e-12 {
                st.prev = None;
                continue;
            }
            let integrand = bulk_slice_integral(st.spec.kind, state, ctx, st.spec.rstar_range);
            if let Some((t0, f0)) = st.prev {
                st.value += 0.5 * (f0 + integrand) * (t - t0);
            }
            st.prev = Some((t, integrand));
        }
        if let Some(h) = self.h_profile.as_ref() {
            for st in &mut self.ih {
                let (integrand, min_pt, max_pt) = ih_slice_integral(state, ctx, h, &st.spec);
                if integrand != 0.0 || st.prev.is_some() {
                    if let Some((t0, f0)) = st.prev {
                        // dw dv = 2 dt dr*; the dr* part is inside the slice
                        // integral, the factor 2 dt lands here
                        st.value += 0.5 * (f0 + integrand) * 2.0 * (t - t0);
                    }
                    st.prev = Some((t, integrand));
                }
                st.min_pointwise = st.min_pointwise.min(min_pt);
                st.max_pointwise = st.max_pointwise.max(max_pt);
            }
        }
        for c in &mut self.closures {
            if t < c.spec.t_range.0 - 1e-12 || t > c.spec.t_range.1 + 1e-12 {
                continue;
            }
            if let Some(&(t_prev, ..)) = c.samples.last() {
                if t <= t_prev {
                    continue;
                }
            }
            let (bulk_rate, flo, fhi) = closure_rates(&c.spec.multiplier, state, ctx, c.ilo, c.ihi);
            c.samples.push((t, bulk_rate, flo, fhi));
        }
    }

    pub fn finish(self, final_state: FieldState) -> EvolvedRun {
        let flux = self
            .flux
            .into_iter()
            .map(|s| (s.spec, s.value, s.tail))
            .collect();
        let bulk = self.bulk.into_iter().map(|s| (s.spec, s.value)).collect();
        let ih = self
            .ih
            .into_iter()
            .map(|s| (s.spec, s.value, s.min_pointwise, s.max_pointwise))
            .collect();
        let closures = self
            .closures
            .into_iter()
            .map(|c| {
                let e_start = c.e_start.unwrap_or(0.0);
                let e_end = c.e_end.unwrap_or(0.0);
                let delta_e = e_end - e_start;
                let bulk = crate::numerics::integrate_samples(
                    &c.samples.iter().map(|s| (s.0, s.1)).collect::<Vec<_>>(),
                );
                let flux_lo = crate::numerics::integrate_samples(
                    &c.samples.iter().map(|s| (s.0, s.2)).collect::<Vec<_>>(),
                );
                let flux_hi = crate::numerics::integrate_samples(
                    &c.samples.iter().map(|s| (s.0, s.3)).collect::<Vec<_>>(),
                );
                // Normalize by the largest term of the identity; the signed
                // energies themselves count, so that a conserved current
                // reports its drift rather than a spurious O(1) residual.
                let scale = bulk
                    .abs()
                    .max(e_start.abs())
                    .max(e_end.abs())
                    .max(flux_lo.abs())
                    .max(flux_hi.abs());
                let mismatch = (delta_e + flux_hi - flux_lo - bulk).abs();
                let residual = if scale > 0.0 { mismatch / scale } else { 0.0 };
                (
                    c.spec.multiplier.name().to_string(),
                    c.spec.t_range,
                    c.spec.rstar_range,
                    ClosureResult {
                        bulk,
                        delta_e,
                        flux_lo,
                        flux_hi,
                        residual,
                        scale,
                    },
                )
            })
            .collect();
        EvolvedRun {
            flux,
            bulk,
            ih,
            closures,
            snapshots: self.snapshots,
            final_state,
        }
    }
}

/// Bulk slice integral of a space-time density over the radial range at one
/// time, per unit t (the t-quadrature happens in the caller).
fn bulk_slice_integral(
    kind: BulkKind,
    state: &FieldState,
    ctx: &EvolutionContext,
    rstar_range: (f64, f64),
) -> f64 {
    let g = &ctx.radial;
    let ang = &ctx.angular;
    let three_m_star = crate::numerics::rstar_of(3.0 * ctx.params.mass(), &ctx.params);
    let mut row = |i: usize| -> f64 {
        let r = g.r[i];
        let gap = g.gap[i];
        let band = match kind {
            BulkKind::EHatBand { lo, hi, ramp } => {
                crate::multipliers::smooth_indicator(g.rstar[i], lo, hi, ramp)
            }
            _ => 0.0,
        };
        let mut sph = 0.0;
        for k in 0..ang.n_theta {
            let s = ang.sin_theta[k];
            let p = state.f_t_rstar.at(i, k);
            let z = state.f_theta_phi.at(i, k);
            let p_over2 = 0.5 * p * r / gap;
            let m_plain = p_over2 * p_over2 + z * z / (s * s) / (4.0 * r * r * r * r);
            let v = match kind {
                BulkKind::JK => {
                    // c(r) = 2 + (3mu - 2) r*/r from the cached node tables;
                    // recomputing r* from r would hit the horizon rounding
                    let c = 2.0 + (3.0 * g.mu[i] - 2.0) * g.rstar[i] / r;
                    4.0 * state.time * c * gap * r * m_plain
                }
                BulkKind::JG => m_plain,
                BulkKind::JC => m_plain * (g.rstar[i] - three_m_star).abs(),
                BulkKind::EHatBand { .. } => {
                    let q = state.f_t_theta.at(i, k);
                    let ss = state.f_rstar_theta.at(i, k);
                    let x = state.f_t_phi.at(i, k);
                    let y = state.f_rstar_phi.at(i, k);
                    band * (q * q + ss * ss + (x * x + y * y) / (s * s))
                }
            };
            sph += ang.weight[k] * v;
        }
        sph
    };
    crate::numerics::radial_integrate_partial(g, rstar_range.0, rstar_range.1, &mut row)
        * 2.0
        * std::f64::consts::PI
}

/// I^(H) slice integral (per unit t, including the dr* quadrature and the
/// Jacobian factor left to the caller), plus the extrema of the pointwise
/// -I^(H) integrand over the capped region for the positivity check.
fn ih_slice_integral(
    state: &FieldState,
    ctx: &EvolutionContext,
    h: &HProfile,
    spec: &IhStationSpec,
) -> (f64, f64, f64) {
    let g = &ctx.radial;
    let ang = &ctx.angular;
    let t = state.time;
    let mut acc = 0.0;
    let mut min_pt = 0.0f64;
    let mut max_pt = 0.0f64;
    for i in 0..g.n_r {
        let rstar = g.rstar[i];
        if rstar < spec.rstar_floor {
            continue;
        }
        let v = t + rstar;
        let w = t - rstar;
        if v < spec.v_range.0 || v > spec.v_range.1 || w < spec.w_min {
            continue;
        }
        let r = g.r[i];
        if rstar > h.cutoff_star {
            continue;
        }
        let gap = g.gap[i];
        let mu = g.mu[i];
        let (hv, hp) = (h.h[i], h.h_prime[i]);
        let in_cap = r <= spec.r_cap;
        let mut sph = 0.0;
        for k in 0..ang.n_theta {
            let s = ang.sin_theta[k];
            let inv_s2 = 1.0 / (s * s);
            let p = state.f_t_rstar.at(i, k);
            let q = state.f_t_theta.at(i, k);
            let ss = state.f_rstar_theta.at(i, k);
            let x = state.f_t_phi.at(i, k);
            let y = state.f_rstar_phi.at(i, k);
            let z = state.f_theta_phi.at(i, k);
            let f_v_theta = 0.5 * (q + ss);
            let f_w_theta = 0.5 * (q - ss);
            let f_v_phi = 0.5 * (x + y);
            let f_w_phi = 0.5 * (x - y);
            let trans_w = f_w_theta * f_w_theta + f_w_phi * f_w_phi * inv_s2;
            let trans_v = f_v_theta * f_v_theta + f_v_phi * f_v_phi * inv_s2;
            let p_over2 = 0.5 * p * r / gap;
            let m_plain = p_over2 * p_over2 + z * z * inv_s2 / (4.0 * r * r * r * r);
            // measure-weighted integrand terms (already multiplied by r²(1-mu))
            let t1 = trans_w * (hp - mu * hv / r) * r / gap;
            let t2 = trans_v * (-hp);
            let t3 = mu * m_plain * (3.0 * hv * gap - r * r * hp);
            let val = t1 + t2 + t3;
            sph += ang.weight[k] * val;
            if in_cap {
                let neg = -val;
                min_pt = min_pt.min(neg);
                max_pt = max_pt.max(neg.abs()).max(trans_w + trans_v + m_plain);
            }
        }
        if in_cap {
            acc += sph;
        }
    }
    (acc * 2.0 * std::f64::consts::PI * g.dr, min_pt, max_pt)
}

/// sqrt(-g) J^t integrated over the slice sub-range: the signed energy whose
/// t-difference enters the exact closure identity.
fn signed_energy(
    v: &Multiplier,
    state: &FieldState,
    ctx: &EvolutionContext,
    ilo: usize,
    ihi: usize,
) -> f64 {
    let g = &ctx.radial;
    let ang = &ctx.angular;
    let mut acc = 0.0;
    for i in ilo..=ihi {
        let r = g.r[i];
        let gap = g.gap[i];
        let mc = v.components(state.time, g.rstar[i], ctx);
        let mut sph = 0.0;
        for k in 0..ang.n_theta {
            let blocks = blocks_at(state, ctx, i, k, r, gap);
            let t_tv = blocks.t_vv + blocks.t_vw;
            let t_tw = blocks.t_vw + blocks.t_ww;
            sph += ang.weight[k] * (-(r * r) * (t_tv * mc.v_v + t_tw * mc.v_w));
        }
        let w_r = if i == ilo || i == ihi { 0.5 } else { 1.0 };
        acc += w_r * sph;
    }
    acc * 2.0 * std::f64::consts::PI * g.dr
}

#[inline]
fn blocks_at(
    state: &FieldState,
    _ctx: &EvolutionContext,
    i: usize,
    k: usize,
    r: f64,
    gap: f64,
) -> FieldBlocks {
    let comps = [
        state.f_t_rstar.at(i, k),
        state.f_t_theta.at(i, k),
        state.f_rstar_theta.at(i, k),
        state.f_t_phi.at(i, k),
        state.f_rstar_phi.at(i, k),
        state.f_theta_phi.at(i, k),
    ];
    let sin = _ctx.angular.sin_theta[k];
    field_blocks(comps, r, gap, sin)
}

/// (bulk rate, flux rate at r*_lo, flux rate at r*_hi) for the closure
/// rectangle at one time, with respect to coordinate measures.
fn closure_rates(
    v: &Multiplier,
    state: &FieldState,
    ctx: &EvolutionContext,
    ilo: usize,
    ihi: usize,
) -> (f64, f64, f64) {
    let g = &ctx.radial;
    let ang = &ctx.angular;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut bulk = 0.0;
    for i in ilo..=ihi {
        let r = g.r[i];
        let gap = g.gap[i];
        let mc = v.components(state.time, g.rstar[i], ctx);
        let mut sph = 0.0;
        for k in 0..ang.n_theta {
            let blocks = blocks_at(state, ctx, i, k, r, gap);
            // sqrt(-g) = (1-mu) r² sinθ; sinθ is folded into the quadrature
            sph += ang.weight[k] * deformation_contraction_blocks(&mc, &blocks, r, gap) * gap * r;
        }
        let w_r = if i == ilo || i == ihi { 0.5 } else { 1.0 };
        bulk += w_r * sph;
    }
    bulk *= two_pi * g.dr;

    let radial_flux = |i: usize| -> f64 {
        let r = g.r[i];
        let gap = g.gap[i];
        let mc = v.components(state.time, g.rstar[i], ctx);
        let mut sph = 0.0;
        for k in 0..ang.n_theta {
            let blocks = blocks_at(state, ctx, i, k, r, gap);
            let t_rv = blocks.t_vv - blocks.t_vw;
            let t_rw = blocks.t_vw - blocks.t_ww;
            sph += ang.weight[k] * (r * r) * (t_rv * mc.v_v + t_rw * mc.v_w);
        }
        sph * two_pi
    };
    (bulk, radial_flux(ilo), radial_flux(ihi))
}

impl EvolvedRun {
    /// Flux through a null segment. Looks up a matching recorded station
    /// first, then falls back to integrating the stored snapshots.
    pub fn flux_functional(
        &self,
        ctx: &EvolutionContext,
        spec: &FluxStationSpec,
        h: Option<&HProfile>,
    ) -> Result<FunctionalReport, RunError> {
        for (s, value, _tail) in &self.flux {
            if s.current == spec.current
                && s.line == spec.line
                && (s.range.0 - spec.range.0).abs() < 1e-9
                && (s.range.1 - spec.range.1).abs() < 1e-9
            {
                return Ok(self.report_for(ctx, spec, *value));
            }
        }
        // snapshot path
        if self.snapshots.len() < 3 {
            return Err(RunError::NotCovered(format!("{spec:?}")));
        }
        let mut value = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        let mut covered = false;
        for snap in &self.snapshots {
            let t = snap.time;
            let (rstar, run_coord) = spec.line.at_time(t);
            let margin = 2.0 * ctx.radial.dr;
            if rstar < ctx.radial.rstar_min + margin
                || rstar > ctx.radial.rstar_max - margin
                || run_coord < spec.range.0
                || run_coord > spec.range.1
            {
                prev = None;
                continue;
            }
            covered = true;
            let f = flux_sphere_integral_oriented(spec, snap, ctx, rstar, h);
            if let Some((t0, f0)) = prev {
                value += 0.5 * (f0 + f) * 2.0 * (t - t0);
            }
            prev = Some((t, f));
        }
        if !covered {
            return Err(RunError::NotCovered(format!("{spec:?}")));
        }
        Ok(self.report_for(ctx, spec, value))
    }

    fn report_for(
        &self,
        ctx: &EvolutionContext,
        spec: &FluxStationSpec,
        value: f64,
    ) -> FunctionalReport {
        let name = match (spec.current, spec.line) {
            (FluxCurrent::H, NullLine::VConst(_)) => "F_H_vconst",
            (FluxCurrent::H, NullLine::WConst(_)) => "F_H_wconst",
            (FluxCurrent::T, NullLine::VConst(_)) => "F_T_vconst",
            (FluxCurrent::T, NullLine::WConst(_)) => "F_T_wconst",
        };
        FunctionalReport {
            name: name.to_string(),
            coord: spec.line.coord(),
            region_lo: spec.range.0,
            region_hi: spec.range.1,
            value,
            n_r: ctx.radial.n_r,
            n_theta: ctx.angular.n_theta,
            dt: ctx.max_dt(),
        }
    }

    /// Space-time bulk over a time x radial region from stations or
    /// snapshots.
    pub fn bulk_functional(
        &self,
        ctx: &EvolutionContext,
        spec: &BulkStationSpec,
    ) -> Result<FunctionalReport, RunError> {
        let name = match spec.kind {
            BulkKind::JK => "J_K",
            BulkKind::JG => "J_G",
            BulkKind::JC => "J_C",
            BulkKind::EHatBand { .. } => "J_hat_band",
        };
        for (s, value) in &self.bulk {
            if s.kind == spec.kind
                && (s.t_range.0 - spec.t_range.0).abs() < 1e-9
                && (s.t_range.1 - spec.t_range.1).abs() < 1e-9
                && (s.rstar_range.0 - spec.rstar_range.0).abs() < 1e-9
                && (s.rstar_range.1 - spec.rstar_range.1).abs() < 1e-9
            {
                return Ok(FunctionalReport {
                    name: name.to_string(),
                    coord: spec.t_range.0,
                    region_lo: spec.rstar_range.0,
                    region_hi: spec.rstar_range.1,
                    value: *value,
                    n_r: ctx.radial.n_r,
                    n_theta: ctx.angular.n_theta,
                    dt: ctx.max_dt(),
                });
            }
        }
        if self.snapshots.len() < 3 {
            return Err(RunError::NotCovered(format!("{spec:?}")));
        }
        let mut value = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        let mut covered = false;
        for snap in &self.snapshots {
            let t = snap.time;
            if t < spec.t_range.0 - 1e-12 || t > spec.t_range.1 + 1e-12 {
                prev = None;
                continue;
            }
            covered = true;
            let f = bulk_slice_integral(spec.kind, snap, ctx, spec.rstar_range);
            if let Some((t0, f0)) = prev {
                value += 0.5 * (f0 + f) * (t - t0);
            }
            prev = Some((t, f));
        }
        if !covered {
            return Err(RunError::NotCovered(format!("{spec:?}")));
        }
        Ok(FunctionalReport {
            name: name.to_string(),
            coord: spec.t_range.0,
            region_lo: spec.rstar_range.0,
            region_hi: spec.rstar_range.1,
            value,
            n_r: ctx.radial.n_r,
            n_theta: ctx.angular.n_theta,
            dt: ctx.max_dt(),
        })
    }

    /// The divergence-theorem residual |ΔE + ΔΦ - bulk| / max-term for a
    /// registered closure rectangle.
    pub fn divergence_identity_residual(
        &self,
        name: &str,
        t_range: (f64, f64),
    ) -> Result<ClosureResult, RunError> {
        for (n, tr, _rr, res) in &self.closures {
            if n == name && (tr.0 - t_range.0).abs() < 1e-9 && (tr.1 - t_range.1).abs() < 1e-9 {
                return Ok(*res);
            }
        }
        Err(RunError::NotCovered(format!(
            "closure {name} over {t_range:?}"
        )))
    }
}

/// Orientation-aware flux sphere integral (per unit running null coordinate).
pub fn flux_sphere_integral_oriented(
    spec: &FluxStationSpec,
    state: &FieldState,
    ctx: &EvolutionContext,
    rstar: f64,
    h: Option<&HProfile>,
) -> f64 {
    let line = match interpolate_radial_line(state, ctx, rstar) {
        Ok(l) => l,
        Err(_) => return 0.0,
    };
    let gap = crate::geometry::horizon_gap_of_tortoise(rstar, &ctx.params);
    let r = ctx.params.horizon_radius() + gap;
    let hv = match (spec.current, h) {
        (FluxCurrent::H, Some(hp)) => hp.eval(rstar).0,
        _ => 0.0,
    };
    let on_w_const = matches!(spec.line, NullLine::WConst(_));
    let ang = &ctx.angular;
    let mut acc = 0.0;
    for k in 0..ang.n_theta {
        let s = ang.sin_theta[k];
        let [p, q, ss, x, y, z] = line[k];
        let inv_s2 = 1.0 / (s * s);
        let f_v_theta = 0.5 * (q + ss);
        let f_w_theta = 0.5 * (q - ss);
        let f_v_phi = 0.5 * (x + y);
        let f_w_phi = 0.5 * (x - y);
        let p_over2 = 0.5 * p * r / gap;
        let m_plain = p_over2 * p_over2 + z * z * inv_s2 / (4.0 * r * r * r * r);
        let trans_v = f_v_theta * f_v_theta + f_v_phi * f_v_phi * inv_s2;
        let trans_w = f_w_theta * f_w_theta + f_w_phi * f_w_phi * inv_s2;
        let value = match (spec.current, on_w_const) {
            // F^T through w = const: 2[(1-mu) r² M + v-transverse]
            (FluxCurrent::T, true) => 2.0 * (gap * r * m_plain + trans_v),
            // F^T through v = const: 2[(1-mu) r² M + w-transverse]
            (FluxCurrent::T, false) => 2.0 * (gap * r * m_plain + trans_w),
            // F^H through w = const: -2h[r² M + v-transverse]
            (FluxCurrent::H, true) => -2.0 * hv * (r * r * m_plain + trans_v),
            // F^H through v = const: -2h[w-transverse/(1-mu) + (1-mu) r² M]
            (FluxCurrent::H, false) => -2.0 * hv * (trans_w * r / gap + gap * r * m_plain),
        };
        acc += ang.weight[k] * value;
    }
    acc * 2.0 * std::f64::consts::PI
}

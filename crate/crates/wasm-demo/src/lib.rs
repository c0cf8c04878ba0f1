//! Browser bindings for three interactive views: live pulse evolution on the
//! exterior, the near-horizon weight profile as a function of its anchor
//! radius, and the trapping coefficient whose sign change brackets the
//! photon sphere.
//!
//! All DOM work lives in the page; this module only marshals flat `f64`
//! arrays across the boundary.

use blackwell_core::geometry::BlackHoleParams;
use blackwell_core::maxwell::{
    evolution_rhs_into, make_initial_data, EvolutionContext, FieldState, InitialDataSpec, Sector,
};
use blackwell_core::multipliers::{
    build_h_profile, energy_functional, find_sign_radii, h_feasibility_edge, trapping_coefficient,
    EnergyKind,
};
use blackwell_core::numerics::{rstar_of, AngularGrid, RadialGrid};
use wasm_bindgen::prelude::*;

fn ctx_for(half_width: f64, n_r: usize, n_theta: usize) -> Result<EvolutionContext, String> {
    let p = BlackHoleParams::new(1.0).map_err(|e| e.to_string())?;
    let radial = RadialGrid::new(-half_width, half_width, n_r, &p).map_err(|e| e.to_string())?;
    Ok(EvolutionContext::new(
        p,
        radial,
        AngularGrid::new(n_theta),
        0.5,
    ))
}

// JsValue construction only works on wasm32, so every fallible path keeps a
// String error internally and converts at the boundary.
fn js<T>(r: Result<T, String>) -> Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

/// A live axisymmetric Maxwell evolution on a modest grid.
#[wasm_bindgen]
pub struct PulseSimulation {
    ctx: EvolutionContext,
    state: FieldState,
    scratch: [FieldState; 5],
    dt: f64,
}

#[wasm_bindgen]
impl PulseSimulation {
    /// sector is "A" (electric-type) or "B" (magnetic-type); ell is 1 or 2.
    #[wasm_bindgen(constructor)]
    pub fn new(
        sector: &str,
        amplitude: f64,
        center: f64,
        width: f64,
        ell: u32,
        n_r: usize,
        half_width: f64,
    ) -> Result<PulseSimulation, JsValue> {
        js(Self::new_impl(
            sector, amplitude, center, width, ell, n_r, half_width,
        ))
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance by n classical RK4 steps.
    pub fn step(&mut self, n: usize) -> Result<(), JsValue> {
        js(self.step_impl(n))
    }

    fn step_impl(&mut self, n: usize) -> Result<(), String> {
        for _ in 0..n {
            let [k1, k2, k3, k4, work] = &mut self.scratch;
            let dt = self.dt;
            evolution_rhs_into(&self.state, &self.ctx, k1);
            work.clone_from(&self.state);
            work.axpy(0.5 * dt, k1);
            evolution_rhs_into(work, &self.ctx, k2);
            work.clone_from(&self.state);
            work.axpy(0.5 * dt, k2);
            evolution_rhs_into(work, &self.ctx, k3);
            work.clone_from(&self.state);
            work.axpy(dt, k3);
            evolution_rhs_into(work, &self.ctx, k4);
            self.state.axpy(dt / 6.0, k1);
            self.state.axpy(dt / 3.0, k2);
            self.state.axpy(dt / 3.0, k3);
            self.state.axpy(dt / 6.0, k4);
            self.state.time += dt;
        }
        if !self.state.is_finite() {
            return Err("state became non-finite".to_string());
        }
        Ok(())
    }

    pub fn rstar_axis(&self) -> Vec<f64> {
        self.ctx.radial.rstar.clone()
    }

    /// Radial profile of one hatted component family, reduced over the
    /// sphere (root mean square over the angular nodes). `which` is one of
    /// "vw" (middle), "ve" (v-transverse), "we" (redshifted w-transverse),
    /// "e1e2" (angular middle).
    pub fn profile(&self, which: &str) -> Result<Vec<f64>, JsValue> {
        js(self.profile_impl(which))
    }

    fn profile_impl(&self, which: &str) -> Result<Vec<f64>, String> {
        let g = &self.ctx.radial;
        let ang = &self.ctx.angular;
        let mut out = Vec::with_capacity(g.n_r);
        for i in 0..g.n_r {
            let r = g.r[i];
            let gap = g.gap[i];
            let n = gap / r;
            let mut acc = 0.0;
            for k in 0..ang.n_theta {
                let s = ang.sin_theta[k];
                let p = self.state.f_t_rstar.at(i, k);
                let q = self.state.f_t_theta.at(i, k);
                let ss = self.state.f_rstar_theta.at(i, k);
                let x = self.state.f_t_phi.at(i, k);
                let y = self.state.f_rstar_phi.at(i, k);
                let z = self.state.f_theta_phi.at(i, k);
                let v = match which {
                    "vw" => -0.5 * p / n,
                    "ve" => {
                        let e1 = 0.5 * (q + ss) / r;
                        let e2 = 0.5 * (x + y) / (r * s);
                        (e1 * e1 + e2 * e2).sqrt()
                    }
                    "we" => {
                        let e1 = 0.5 * (q - ss) / (n.sqrt() * r);
                        let e2 = 0.5 * (x - y) / (n.sqrt() * r * s);
                        (e1 * e1 + e2 * e2).sqrt()
                    }
                    "e1e2" => z / (r * r * s),
                    other => return Err(format!("unknown profile {other}")),
                };
                acc += v * v / ang.n_theta as f64;
            }
            out.push(acc.sqrt());
        }
        Ok(out)
    }

    /// Total conserved energy of the current slice.
    pub fn energy(&self) -> f64 {
        energy_functional(
            EnergyKind::ET,
            &self.state,
            (self.ctx.radial.rstar_min, self.ctx.radial.rstar_max),
            &self.ctx,
            None,
        )
        .map(|r| r.value)
        .unwrap_or(f64::NAN)
    }
}

impl PulseSimulation {
    fn new_impl(
        sector: &str,
        amplitude: f64,
        center: f64,
        width: f64,
        ell: u32,
        n_r: usize,
        half_width: f64,
    ) -> Result<PulseSimulation, String> {
        let ctx = ctx_for(half_width, n_r.clamp(64, 4096), 8)?;
        let sector = match sector {
            "A" => Sector::A,
            "B" => Sector::B,
            other => return Err(format!("unknown sector {other}")),
        };
        let spec = InitialDataSpec {
            sector,
            amplitude,
            center,
            width,
            ell,
        };
        let state = make_initial_data(&spec, &ctx).map_err(|e| e.to_string())?;
        let dt = ctx.max_dt();
        let z = || FieldState::zeros(ctx.radial.n_r, ctx.angular.n_theta);
        let scratch = [z(), z(), z(), z(), z()];
        Ok(PulseSimulation {
            ctx,
            state,
            scratch,
            dt,
        })
    }
}

/// The certified weight profile h(r*) for anchor radius r1, as a flat array
/// [r*_0, h_0, h'_0, r*_1, h_1, h'_1, ...]. Errors carry the violated
/// feasibility condition.
#[wasm_bindgen]
pub fn h_profile_curve(r1: f64, n: usize) -> Result<Vec<f64>, JsValue> {
    js(h_profile_curve_impl(r1, n))
}

fn h_profile_curve_impl(r1: f64, n: usize) -> Result<Vec<f64>, String> {
    let ctx = ctx_for(80.0, n.clamp(64, 4096), 8)?;
    let h = build_h_profile(&ctx, r1, false).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(3 * ctx.radial.n_r);
    for (i, &rs) in ctx.radial.rstar.iter().enumerate() {
        out.push(rs);
        out.push(h.h[i]);
        out.push(h.h_prime[i]);
    }
    Ok(out)
}

/// Largest admissible anchor radius of the weight construction.
#[wasm_bindgen]
pub fn h_feasible_edge() -> f64 {
    h_feasibility_edge(&BlackHoleParams::new(1.0).unwrap())
}

/// The trapping coefficient c(r) = 2 + (3mu-2) r*/r sampled against r*,
/// flat [r*_0, c_0, r*_1, c_1, ...].
#[wasm_bindgen]
pub fn trapping_curve(rstar_min: f64, rstar_max: f64, n: usize) -> Vec<f64> {
    let p = BlackHoleParams::new(1.0).unwrap();
    let n = n.clamp(16, 4096);
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let rs = rstar_min + (rstar_max - rstar_min) * i as f64 / (n - 1) as f64;
        let gap = blackwell_core::geometry::horizon_gap_of_tortoise(rs, &p);
        let r = 2.0 + gap;
        let mu = 2.0 / r;
        out.push(rs);
        out.push(2.0 + (3.0 * mu - 2.0) * rs / r);
    }
    out
}

/// [r0, R0, r0*, R0*]: the radii bracketing the photon sphere where the
/// trapping coefficient changes sign.
#[wasm_bindgen]
pub fn sign_radii() -> Vec<f64> {
    let p = BlackHoleParams::new(1.0).unwrap();
    let radii = find_sign_radii(&p);
    vec![
        radii.r0,
        radii.big_r0,
        rstar_of(radii.r0, &p),
        rstar_of(radii.big_r0, &p),
    ]
}

/// Sanity helper used by the page footer.
#[wasm_bindgen]
pub fn trapping_at_photon_sphere() -> f64 {
    trapping_coefficient(3.0, &BlackHoleParams::new(1.0).unwrap())
}

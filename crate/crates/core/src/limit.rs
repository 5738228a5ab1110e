//! Low Mach number limit systems indexed by the scattering exponent δ.
//!
//! Every regime shares the same fluid part: a variable-density
//! incompressible-type flow whose velocity divergence is slaved to heat
//! conduction, `2 div u = kappa lap exp(theta)`. The regimes differ only in
//! what the radiation moments become.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, Field, VectorField};
use crate::grid::PeriodicGrid;
use crate::params::ScaledParameters;
use crate::spectral::{PoissonOptions, Spectral, Spectrum};
use crate::state::{InitialRecipe, RunMetadata, RunStatus};

/// Velocity `w` with `div w = target_div` whose transformed vorticity
/// `curl(exp(-theta) w)` equals that of `base`.
///
/// `exp(-theta) base` is split into mean, gradient and solenoidal parts; the
/// gradient part is discarded and replaced by the one fixed through
/// `div(exp(theta) grad chi) = target_div - div(exp(theta) (mean + solenoidal))`.
pub fn reconstruct_velocity(
    sp: &Spectral,
    base: &[Field],
    theta: &[f64],
    target_div: &[f64],
    opts: &PoissonOptions,
) -> Result<VectorField> {
    let e = field::exp(theta);
    let em = field::map(theta, |t| (-t).exp());
    let v = field::vec_mul_scalar(base, &em);
    let h = sp.helmholtz(&v);
    let keep: VectorField = h
        .solenoidal
        .iter()
        .zip(&h.mean)
        .map(|(s, m)| field::map(s, |x| x + m))
        .collect();
    let flux = field::vec_mul_scalar(&keep, &e);
    let rhs = field::sub(target_div, &sp.divergence(&flux));
    let chi = sp.solve_weighted_poisson(&e, &rhs, opts, None)?.phi;
    let grad = sp.gradient(&chi);
    Ok(keep
        .iter()
        .zip(&grad)
        .map(|(k, g)| field::mul(&field::add(k, g), &e))
        .collect())
}

/// Initial limit velocity: `2 div w = kappa lap exp(theta0)` with the
/// transformed vorticity of `u0`.
pub fn construct_initial_velocity(
    sp: &Spectral,
    u0: &[Field],
    theta0: &[f64],
    kappa: f64,
) -> Result<VectorField> {
    let target = field::scale(&sp.laplacian(&field::exp(theta0)), 0.5 * kappa);
    let opts = PoissonOptions {
        rel_tol: 1e-12,
        ..Default::default()
    };
    reconstruct_velocity(sp, u0, theta0, &target, &opts)
}

/// `2 div u - kappa lap exp(theta)`.
pub fn divergence_constraint_residual(sp: &Spectral, u: &[Field], theta: &[f64], kappa: f64) -> Field {
    let div = sp.divergence(u);
    let lap = sp.laplacian(&field::exp(theta));
    field::zip(&div, &lap, |d, l| 2.0 * d - kappa * l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// δ = 2: radiative energy obeys a diffusion equation.
    Diffusive,
    /// 1 < δ < 2: radiative energy is harmonic.
    Harmonic,
    /// δ = 1: energy gradient balances the flux.
    Balanced,
    /// 0 < δ < 1: both constraints homogeneous.
    Weak,
    /// δ = 0: divergence-free flux damped at unit-plus-one rate.
    Undamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub delta: f64,
}

impl RegimeSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&delta) {
            return Err(Error::Domain(format!("delta must lie in [0,2], got {delta}")));
        }
        Ok(RegimeSpec { delta })
    }

    pub fn regime(&self) -> Regime {
        let d = self.delta;
        if d == 2.0 {
            Regime::Diffusive
        } else if d > 1.0 {
            Regime::Harmonic
        } else if d == 1.0 {
            Regime::Balanced
        } else if d > 0.0 {
            Regime::Weak
        } else {
            Regime::Undamped
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxTarget {
    Zero,
    /// Zero, with a constant vector admissible but non-generic.
    ZeroOrConstant,
    /// Any divergence-free field.
    Solenoidal,
}

/// The radiation constraints of an intermediate regime and what they reduce
/// to on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiationLimit {
    pub delta: f64,
    pub constraints: Vec<String>,
    /// Periodic solutions of the constraints force a spatially constant energy.
    pub energy_constant: bool,
    pub flux: FluxTarget,
}

pub fn limit_radiation_profile(delta: f64) -> Result<RadiationLimit> {
    if !(delta > 0.0 && delta < 2.0) {
        return Err(Error::Domain(format!(
            "radiation constraints are defined for 0 < delta < 2, got {delta}"
        )));
    }
    let (constraints, flux) = match RegimeSpec::new(delta)?.regime() {
        Regime::Harmonic => (vec!["lap I0 = 0".to_string(), "I1 = 0".to_string()], FluxTarget::Zero),
        Regime::Balanced => (
            vec!["grad I0 = -3 I1".to_string(), "div I1 = 0".to_string()],
            FluxTarget::ZeroOrConstant,
        ),
        _ => (
            vec!["grad I0 = 0".to_string(), "div I1 = 0".to_string()],
            FluxTarget::Solenoidal,
        ),
    };
    Ok(RadiationLimit {
        delta,
        constraints,
        energy_constant: true,
        flux,
    })
}

/// Closed-form limit flux for δ = 0: `exp(-2t)` times the divergence-free
/// part of the initial flux.
pub fn delta0_radiation_exact(sp: &Spectral, i10: &[Field], t: f64) -> VectorField {
    let decay = (-2.0 * t).exp();
    sp.project_solenoidal(i10)
        .iter()
        .map(|c| field::scale(c, decay))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitState {
    pub grid: PeriodicGrid,
    pub u: VectorField,
    pub theta: Field,
    pub i0: Field,
    pub i1: VectorField,
    /// Mean-free pressure multiplier of the momentum equation.
    pub pi: Field,
    pub time: f64,
}

impl LimitState {
    pub fn equilibrium(grid: &PeriodicGrid, params: &ScaledParameters) -> Self {
        let n = grid.len();
        LimitState {
            grid: *grid,
            u: field::zero_vector(grid.dim, n),
            theta: field::constant(n, params.theta_c),
            i0: field::constant(n, params.i_c),
            i1: field::zero_vector(grid.dim, n),
            pi: field::zeros(n),
            time: 0.0,
        }
    }
}

/// Limit initial data matching [`crate::state::make_initial_data`] for the
/// same recipe: the ε-independent fields, the velocity reconstructed from
/// the constraint, and the radiation initialised per regime.
pub fn make_limit_initial(
    grid: &PeriodicGrid,
    params: &ScaledParameters,
    recipe: &InitialRecipe,
    regime: &RegimeSpec,
) -> Result<LimitState> {
    recipe.validate(grid)?;
    let sp = Spectral::new(grid);
    let base = recipe.base(grid);
    let theta = field::map(&base.theta, |x| x + params.theta_c);
    let u = construct_initial_velocity(&sp, &base.u, &theta, params.kappa)?;
    let n = grid.len();
    let (i0, i1) = match regime.regime() {
        Regime::Diffusive => (field::map(&base.i0, |x| x + params.i_c), field::zero_vector(grid.dim, n)),
        Regime::Undamped => (
            field::constant(n, params.i_c + field::mean(&base.i0)),
            sp.project_solenoidal(&base.i1),
        ),
        _ => (
            field::constant(n, params.i_c + field::mean(&base.i0)),
            field::zero_vector(grid.dim, n),
        ),
    };
    Ok(LimitState {
        grid: *grid,
        u,
        theta,
        i0,
        i1,
        pi: field::zeros(n),
        time: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_interval: f64,
    /// Abort when the divergence constraint residual exceeds this (L²).
    pub constraint_tol: f64,
    pub poisson_tol: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            dt: 1e-3,
            t_end: 0.5,
            snapshot_interval: 0.01,
            constraint_tol: 1e-7,
            poisson_tol: 1e-12,
        }
    }
}

impl LimitConfig {
    fn steps_per_snapshot(&self) -> Result<usize> {
        let r = self.snapshot_interval / self.dt;
        let n = r.round();
        if !(self.dt > 0.0) || n < 1.0 || (r - n).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::Config(format!(
                "snapshot interval {} is not a positive multiple of dt {}",
                self.snapshot_interval, self.dt
            )));
        }
        Ok(n as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitTrajectory {
    pub parameters: ScaledParameters,
    pub regime: RegimeSpec,
    pub snapshots: Vec<LimitState>,
    pub metadata: RunMetadata,
    pub status: RunStatus,
    /// Largest divergence-constraint residual seen at a snapshot.
    pub max_constraint_residual: f64,
}

impl LimitTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }
}

struct FluidTendency {
    theta_t: Field,
    u_t: VectorField,
    pi: Field,
}

/// Time stepper for the limit systems.
pub struct LimitSolver {
    sp: Spectral,
    params: ScaledParameters,
    regime: RegimeSpec,
    opts: PoissonOptions,
    /// Per-mode decay rate of the radiative energy; `None` for frozen modes.
    energy_rates: Vec<Option<f64>>,
}

impl LimitSolver {
    pub fn new(grid: &PeriodicGrid, params: &ScaledParameters, regime: RegimeSpec, poisson_tol: f64) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        let sp = Spectral::new(grid);
        let diffusive = regime.regime() == Regime::Diffusive;
        let energy_rates = (0..sp.len())
            .map(|idx| {
                if diffusive {
                    Some(-(sp.k_squared(idx) / 3.0 + 1.0))
                } else if idx == 0 {
                    Some(-1.0)
                } else {
                    None
                }
            })
            .collect();
        Ok(LimitSolver {
            sp,
            params: *params,
            regime,
            opts: PoissonOptions {
                rel_tol: poisson_tol,
                ..Default::default()
            },
            energy_rates,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    fn dealiased(&self, f: &[f64]) -> Field {
        self.sp.dealias(f)
    }

    /// Tendencies of `(theta, u)` and the multiplier, with the constraint
    /// substituted into the temperature equation.
    fn fluid(&self, theta: &[f64], u: &[Field], warm: Option<&[f64]>) -> Result<FluidTendency> {
        let sp = &self.sp;
        let d = sp.grid().dim;
        let n = sp.len();
        let (mu, lam, kappa) = (self.params.mu, self.params.lambda, self.params.kappa);
        let e = field::exp(theta);
        let lap_e = sp.laplacian(&e);
        let grad_t = sp.gradient(theta);
        let mut theta_t = field::scale(&lap_e, 0.5 * kappa);
        for a in 0..d {
            for i in 0..n {
                theta_t[i] -= u[a][i] * grad_t[a][i];
            }
        }
        let theta_t = self.dealiased(&theta_t);

        let refs: Vec<&[f64]> = u.iter().map(|c| c.as_slice()).collect();
        let uh = sp.forward_many(&refs);
        let divh = sp.divergence_hat(&uh);
        let mut parts: Vec<Spectrum> = Vec::new();
        for b in 0..d {
            for a in 0..d {
                parts.push(sp.derivative_hat(&uh[b], a));
            }
        }
        for a in 0..d {
            let lap = sp.laplacian_hat(&uh[a]);
            let gd = sp.derivative_hat(&divh, a);
            parts.push(lap.iter().zip(&gd).map(|(l, g)| l * mu + g * (mu + lam)).collect());
        }
        let real = sp.inverse_many(parts);
        let mut force: VectorField = Vec::with_capacity(d);
        for a in 0..d {
            let visc = &real[d * d + a];
            let mut c = vec![0.0; n];
            for i in 0..n {
                let conv: f64 = (0..d).map(|b| u[b][i] * real[a * d + b][i]).sum();
                c[i] = -conv + e[i] * visc[i];
            }
            force.push(self.dealiased(&c));
        }
        // div(e grad pi) = div(force) - (kappa/2) lap(e theta_t)
        let et = field::mul(&e, &theta_t);
        let rhs = field::zip(&sp.divergence(&force), &sp.laplacian(&et), |a, b| a - 0.5 * kappa * b);
        let pi = sp.solve_weighted_poisson(&e, &rhs, &self.opts, warm)?.phi;
        let grad_pi = sp.gradient(&pi);
        let u_t = force
            .iter()
            .zip(&grad_pi)
            .map(|(f, g)| field::zip(f, &field::mul(&e, g), |x, y| x - y))
            .collect();
        Ok(FluidTendency { theta_t, u_t, pi })
    }

    /// Weighted projection onto `2 div u = kappa lap exp(theta)`, leaving the
    /// transformed vorticity untouched.
    fn project(&self, theta: &[f64], u: &mut [Field]) -> Result<()> {
        let sp = &self.sp;
        let e = field::exp(theta);
        let target = field::scale(&sp.laplacian(&e), 0.5 * self.params.kappa);
        let rhs = field::sub(&target, &sp.divergence(u));
        let phi = sp.solve_weighted_poisson(&e, &rhs, &self.opts, None)?.phi;
        for (c, g) in u.iter_mut().zip(sp.gradient(&phi)) {
            for i in 0..c.len() {
                c[i] += e[i] * g[i];
            }
        }
        Ok(())
    }

    fn emission(&self, theta: &[f64]) -> Spectrum {
        self.sp.forward(&field::map(theta, |t| (4.0 * t).exp()))
    }

    /// One step: classical RK4 for the fluid, Lawson RK4 for the radiative
    /// energy (exact on its linear part), closed form for the flux, then a
    /// projection that removes the constraint drift.
    pub fn step(&self, s: &LimitState, dt: f64) -> Result<LimitState> {
        let h = dt;
        let th0 = &s.theta;
        let u0 = &s.u;
        let axpy_state = |th: &[f64], u: &[Field], t: &FluidTendency, c: f64| -> (Field, VectorField) {
            let th2 = field::zip(th, &t.theta_t, |a, b| a + c * b);
            let u2 = u.iter().zip(&t.u_t).map(|(x, y)| field::zip(x, y, |a, b| a + c * b)).collect();
            (th2, u2)
        };
        let k1 = self.fluid(th0, u0, Some(&s.pi))?;
        let (th2, u2) = axpy_state(th0, u0, &k1, 0.5 * h);
        let k2 = self.fluid(&th2, &u2, Some(&k1.pi))?;
        let (th3, u3) = axpy_state(th0, u0, &k2, 0.5 * h);
        let k3 = self.fluid(&th3, &u3, Some(&k2.pi))?;
        let (th4, u4) = axpy_state(th0, u0, &k3, h);
        let k4 = self.fluid(&th4, &u4, Some(&k3.pi))?;
        let mut theta = th0.clone();
        let mut u = u0.clone();
        for (k, w) in [(&k1, h / 6.0), (&k2, h / 3.0), (&k3, h / 3.0), (&k4, h / 6.0)] {
            field::axpy(&mut theta, w, &k.theta_t);
            for (c, kc) in u.iter_mut().zip(&k.u_t) {
                field::axpy(c, w, kc);
            }
        }
        self.project(&theta, &mut u)?;

        // Lawson RK4; the source depends only on the stage temperatures.
        let s1 = self.emission(th0);
        let s2 = self.emission(&th2);
        let s3 = self.emission(&th3);
        let s4 = self.emission(&th4);
        let mut ih = self.sp.forward(&s.i0);
        for (idx, z) in ih.iter_mut().enumerate() {
            match self.energy_rates[idx] {
                Some(rate) => {
                    let e1 = (rate * h).exp();
                    let e2 = (rate * 0.5 * h).exp();
                    *z = e1 * *z + (h / 6.0) * (e1 * s1[idx] + 2.0 * e2 * (s2[idx] + s3[idx]) + s4[idx]);
                }
                None => *z = Complex64::default(),
            }
        }
        let i0 = self.sp.inverse(ih);

        let i1 = match self.regime.regime() {
            Regime::Undamped => s.i1.iter().map(|c| field::scale(c, (-2.0 * h).exp())).collect(),
            _ => field::zero_vector(s.grid.dim, s.grid.len()),
        };
        let pi = self.fluid(&theta, &u, Some(&k4.pi))?.pi;
        Ok(LimitState {
            grid: s.grid,
            u,
            theta,
            i0,
            i1,
            pi,
            time: s.time + dt,
        })
    }

    /// Explicit stability bound of the fluid stage.
    pub fn admissible_dt(&self, s: &LimitState) -> f64 {
        let g = self.sp.grid();
        let mut kmax: f64 = 0.0;
        let mut kmax2: f64 = 0.0;
        for a in 0..g.dim {
            let k = 2.0 * std::f64::consts::PI / g.extent[a] * (g.points[a] / 2) as f64;
            kmax = kmax.max(k);
            kmax2 += k * k;
        }
        let emax = s.theta.iter().fold(0.0f64, |m, t| m.max(t.exp()));
        let nu = emax * (0.5 * self.params.kappa).max(2.0 * self.params.mu + self.params.lambda.abs());
        let rate = field::max_abs_vec(&s.u) * g.dim as f64 * kmax + nu * kmax2;
        if rate <= 0.0 {
            f64::INFINITY
        } else {
            2.5 / rate
        }
    }

    pub fn constraint_residual(&self, s: &LimitState) -> f64 {
        self.sp
            .l2_norm(&divergence_constraint_residual(&self.sp, &s.u, &s.theta, self.params.kappa))
    }
}

/// One step of the δ = 2 system.
pub fn step_limit_delta2(state: &LimitState, dt: f64, params: &ScaledParameters) -> Result<LimitState> {
    LimitSolver::new(&state.grid, params, RegimeSpec { delta: 2.0 }, 1e-12)?.step(state, dt)
}

/// Integrate a limit system, checking the divergence constraint at every
/// snapshot.
pub fn simulate_limit(
    regime: RegimeSpec,
    grid: &PeriodicGrid,
    params: &ScaledParameters,
    initial: &LimitState,
    config: &LimitConfig,
) -> Result<LimitTrajectory> {
    let per_snap = config.steps_per_snapshot()?;
    let n_snaps = (config.t_end / config.snapshot_interval).round() as usize;
    let solver = LimitSolver::new(grid, params, regime, config.poisson_tol)?;
    let admissible = solver.admissible_dt(initial);
    if config.dt > admissible {
        return Err(Error::CflViolation {
            dt: config.dt,
            admissible,
        });
    }
    let mut state = initial.clone();
    state.time = 0.0;
    let r0 = solver.constraint_residual(&state);
    if r0 > config.constraint_tol {
        return Err(Error::Constraint(format!(
            "initial divergence constraint residual {r0:.3e} exceeds {:.3e}",
            config.constraint_tol
        )));
    }
    state.pi = solver.fluid(&state.theta, &state.u, None)?.pi;
    let mut worst = r0;
    let mut snapshots = vec![state.clone()];
    let mut steps = 0;
    for s in 1..=n_snaps {
        for _ in 0..per_snap {
            state = solver.step(&state, config.dt)?;
            steps += 1;
        }
        state.time = s as f64 * config.snapshot_interval;
        let r = solver.constraint_residual(&state);
        worst = worst.max(r);
        if !(r <= config.constraint_tol) {
            return Err(Error::Constraint(format!(
                "divergence constraint residual {r:.3e} at t = {} exceeds {:.3e}",
                state.time, config.constraint_tol
            )));
        }
        snapshots.push(state.clone());
    }
    Ok(LimitTrajectory {
        parameters: *params,
        regime,
        snapshots,
        metadata: RunMetadata {
            dt: config.dt,
            steps,
            splitting: "none".into(),
            scheme: "rk4-projected".into(),
            snapshot_interval: config.snapshot_interval,
        },
        status: RunStatus::Complete,
        max_constraint_residual: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> PeriodicGrid {
        PeriodicGrid::cube(2, 2.0 * PI, 32).unwrap()
    }

    #[test]
    fn constant_temperature_keeps_solenoidal_part() {
        let g = grid();
        let sp = Spectral::new(&g);
        let u0 = vec![
            g.sample(|x| x[1].sin() + x[0].cos() + 0.3),
            g.sample(|x| (2.0 * x[0]).cos()),
        ];
        let theta = vec![0.2; g.len()];
        let w = construct_initial_velocity(&sp, &u0, &theta, 0.5).unwrap();
        let expect = sp.project_solenoidal(&u0);
        assert!(field::max_abs_vec(&field::vec_sub(&w, &expect)) < 1e-10);
    }

    #[test]
    fn regime_boundaries_exact() {
        let r = |d: f64| RegimeSpec::new(d).unwrap().regime();
        assert_eq!(r(2.0), Regime::Diffusive);
        assert_eq!(r(1.999), Regime::Harmonic);
        assert_eq!(r(1.0), Regime::Balanced);
        assert_eq!(r(0.5), Regime::Weak);
        assert_eq!(r(0.0), Regime::Undamped);
        assert!(RegimeSpec::new(2.5).is_err());
    }

    #[test]
    fn radiation_profiles() {
        assert_eq!(limit_radiation_profile(1.5).unwrap().flux, FluxTarget::Zero);
        assert_eq!(limit_radiation_profile(1.0).unwrap().flux, FluxTarget::ZeroOrConstant);
        assert_eq!(limit_radiation_profile(0.5).unwrap().flux, FluxTarget::Solenoidal);
        assert!(limit_radiation_profile(2.0).is_err());
        assert!(limit_radiation_profile(0.0).is_err());
    }

    #[test]
    fn closed_form_flux_halves() {
        let g = grid();
        let sp = Spectral::new(&g);
        let v = vec![g.sample(|x| x[1].sin()), vec![0.0; g.len()]];
        let out = delta0_radiation_exact(&sp, &v, 2f64.ln() / 2.0);
        assert!(field::max_abs_vec(&field::vec_sub(&out, &field::vec_scale(&v, 0.5))) < 1e-13);
    }
}

//! Variable-coefficient acoustic wave probe and the fast-component residual.
//!
//! The probe integrates `eps d_t v = w / a`, `eps d_t w = div(b grad v) + c - eps sigma w`
//! on a torus much larger than the data, with an absorbing layer `sigma`
//! near the cell boundary standing in for the whole space. Leapfrog with
//! `w` on half steps conserves a modified energy exactly when `sigma = 0`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, MeasurementBox, StateRates, StencilOrder};
use crate::error::{Error, Result};
use crate::field::{self, Field, VectorField};
use crate::grid::PeriodicGrid;
use crate::params::ScaledParameters;
use crate::spectral::Spectral;
use crate::state::{uniform_spacing, FullState};

/// Absorbing layer of the given width along every face of the periodic cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sponge {
    pub width: f64,
    /// Damping rate at the cell boundary; the profile is quadratic.
    pub peak: f64,
}

impl Sponge {
    pub const NONE: Sponge = Sponge { width: 0.0, peak: 0.0 };

    pub fn profile(&self, grid: &PeriodicGrid) -> Field {
        if self.peak == 0.0 || self.width <= 0.0 {
            return field::zeros(grid.len());
        }
        (0..grid.len())
            .map(|i| {
                let x = grid.coords(i);
                let mut s: f64 = 0.0;
                for a in 0..grid.dim {
                    let d = x[a].min(grid.extent[a] - x[a]);
                    if d < self.width {
                        s = s.max(((self.width - d) / self.width).powi(2));
                    }
                }
                self.peak * s
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveConfig {
    pub grid: PeriodicGrid,
    pub epsilon: f64,
    /// Inertia coefficient, strictly positive.
    pub a: Field,
    /// Stiffness coefficient, strictly positive.
    pub b: Field,
    pub source: Option<Field>,
    pub sponge: Sponge,
    pub t_end: f64,
    pub snapshot_interval: f64,
    /// Fraction of the leapfrog stability limit used for the step.
    pub cfl: f64,
}

impl WaveConfig {
    /// Constant coefficients `a = 1`, `b = 2` and a sponge one eighth of the side wide.
    pub fn homogeneous(grid: PeriodicGrid, epsilon: f64) -> Self {
        let n = grid.len();
        WaveConfig {
            grid,
            epsilon,
            a: field::constant(n, 1.0),
            b: field::constant(n, 2.0),
            source: None,
            sponge: Sponge {
                width: grid.extent[0] / 8.0,
                peak: 20.0,
            },
            t_end: 1.0,
            snapshot_interval: 0.02,
            cfl: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        let mut errs = Vec::new();
        if !(self.epsilon > 0.0) {
            errs.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.a.len() != n || self.b.len() != n {
            errs.push("coefficient fields must match the grid".into());
        }
        if self.a.iter().chain(&self.b).any(|x| !(*x > 0.0)) {
            errs.push("wave coefficients must be strictly positive".into());
        }
        if self.source.as_ref().is_some_and(|c| c.len() != n) {
            errs.push("source field must match the grid".into());
        }
        if !(self.t_end > 0.0) || !(self.snapshot_interval > 0.0) {
            errs.push("t_end and snapshot_interval must be positive".into());
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            errs.push(format!("cfl must lie in (0, 1), got {}", self.cfl));
        }
        if self.sponge.peak < 0.0 || self.sponge.width < 0.0 {
            errs.push("sponge width and peak must be non-negative".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Leapfrog stability limit `2 eps / (max(b/a) sum k_max^2)^(1/2)`.
    pub fn stability_limit(&self) -> f64 {
        let speed2 = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| b / a)
            .fold(0.0, f64::max);
        let k2: f64 = (0..self.grid.dim)
            .map(|ax| {
                let kmax = (self.grid.points[ax] / 2 - 1) as f64 * 2.0 * std::f64::consts::PI / self.grid.extent[ax];
                kmax * kmax
            })
            .sum();
        2.0 * self.epsilon / (speed2 * k2).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSolution {
    pub dt: f64,
    pub times: Vec<f64>,
    pub v: Vec<Field>,
    /// Modified leapfrog energy at each snapshot.
    pub energy: Vec<f64>,
    /// `max |E(t) - E(0)| / E(0)` over all steps.
    pub energy_drift: f64,
}

fn stiffness(sp: &Spectral, b: &[f64], v: &[f64]) -> Field {
    let g = sp.gradient(v);
    let bg: VectorField = g.iter().map(|c| field::mul(c, b)).collect();
    sp.divergence(&bg)
}

/// Integrate from `v(0) = v0`, `eps d_t v(0) = v1`.
pub fn solve_wave(config: &WaveConfig, v0: &[f64], v1: &[f64]) -> Result<WaveSolution> {
    config.validate()?;
    let grid = config.grid;
    let n = grid.len();
    if v0.len() != n || v1.len() != n {
        return Err(Error::Config("initial data must match the grid".into()));
    }
    let sp = Spectral::new(&grid);
    let adm = config.cfl * config.stability_limit();
    let per = (config.snapshot_interval / adm).ceil().max(1.0) as usize;
    let dt = config.snapshot_interval / per as f64;
    let n_snap = (config.t_end / config.snapshot_interval).round() as usize;
    let tau = dt / config.epsilon;
    let sigma = config.sponge.profile(&grid);
    let zero = field::zeros(n);
    let c = config.source.as_deref().unwrap_or(&zero);
    let dv = grid.cell_volume();

    let energy = |wm: &[f64], wp: &[f64], v: &[f64], kv: &[f64]| -> f64 {
        (0..n)
            .map(|i| 0.5 * wm[i] * wp[i] / config.a[i] - 0.5 * v[i] * kv[i] - c[i] * v[i])
            .sum::<f64>()
            * dv
    };

    let mut v = v0.to_vec();
    let w0 = field::mul(&config.a, v1);
    let lv0 = stiffness(&sp, &config.b, &v);
    let mut w_half: Field = (0..n).map(|i| w0[i] - 0.5 * tau * (lv0[i] + c[i])).collect();

    let advance = |w: &[f64], lv: &[f64]| -> Field {
        (0..n)
            .map(|i| {
                let damp = 0.5 * dt * sigma[i];
                (w[i] * (1.0 - damp) + tau * (lv[i] + c[i])) / (1.0 + damp)
            })
            .collect()
    };

    let mut times = vec![0.0];
    let mut snaps = vec![v.clone()];
    let mut energies = Vec::new();
    let mut e0 = 0.0;
    let mut drift: f64 = 0.0;
    // one extra step so the energy at the final snapshot has its half step
    for step in 0..=n_snap * per {
        let lv = stiffness(&sp, &config.b, &v);
        let next = advance(&w_half, &lv);
        let e = energy(&w_half, &next, &v, &lv);
        if !e.is_finite() {
            return Err(Error::NumericOverflow {
                term: "wave energy".into(),
            });
        }
        if step == 0 {
            e0 = e;
        }
        drift = drift.max((e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE));
        if step % per == 0 {
            energies.push(e);
        }
        if step == n_snap * per {
            break;
        }
        for i in 0..n {
            v[i] += tau * next[i] / config.a[i];
        }
        w_half = next;
        if (step + 1) % per == 0 {
            times.push((step + 1) as f64 / per as f64 * config.snapshot_interval);
            snaps.push(v.clone());
        }
    }
    Ok(WaveSolution {
        dt,
        times,
        v: snaps,
        energy: energies,
        energy_drift: drift,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    /// Local `L²` norm of `v` in the measurement box.
    pub local: Vec<f64>,
    pub window_start: f64,
    /// `int_{window_start}^{T} |v|²_{L²(box)} dt`.
    pub integral: f64,
}

pub fn decay_curve(grid: &PeriodicGrid, sol: &WaveSolution, region: &MeasurementBox, window_start: f64) -> DecayCurve {
    let local: Vec<f64> = sol
        .v
        .iter()
        .map(|v| diagnostics::local_energy(grid, v, region))
        .collect();
    let mut integral = 0.0;
    for j in 1..sol.times.len() {
        if sol.times[j - 1] + 1e-12 >= window_start {
            let dt = sol.times[j] - sol.times[j - 1];
            integral += 0.5 * dt * (local[j - 1].powi(2) + local[j].powi(2));
        }
    }
    DecayCurve {
        times: sol.times.clone(),
        local,
        window_start,
        integral,
    }
}

/// How well the fast components of a trajectory satisfy their wave equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastResidualReport {
    pub times: Vec<f64>,
    /// `||eps² d_tt p~ - div(2 exp(theta) grad p~) - F||`.
    pub pressure: Vec<f64>,
    /// Same for `div u~` with source `G`.
    pub divergence: Vec<f64>,
    pub pressure_source: Vec<f64>,
    pub divergence_source: Vec<f64>,
    /// Time-`L²` norms of the residual histories.
    pub pressure_l2: f64,
    pub divergence_l2: f64,
}

struct FastFields {
    pt: Field,
    phi: Field,
    /// `u . grad p~`
    adv_pt: Field,
    /// `div(u . grad u~)`
    div_adv_ut: Field,
    g4: Field,
    /// `div[exp(-eps p + theta)(div Psi(u~) + kappa/2 grad div u~) + 2 exp(theta) g5]`
    div_visc: Field,
    theta_t: Field,
}

fn fast_fields(sp: &Spectral, s: &FullState, rates: &StateRates, params: &ScaledParameters) -> FastFields {
    let d = s.grid.dim;
    let n = s.grid.len();
    let eps = params.epsilon;
    let (mu, lam, kappa) = (params.mu, params.lambda, params.kappa);
    let (pt, ut) = diagnostics::equivalent_variables(sp, s, params);
    let (g4, g5) = diagnostics::fast_sources(sp, s, rates, params);
    let adv_pt = field::dot(&s.u, &sp.gradient(&pt));
    let phi = sp.divergence(&ut);
    let gphi = sp.gradient(&phi);
    let mut adv_ut = Vec::with_capacity(d);
    let mut visc = Vec::with_capacity(d);
    let e = field::exp(&s.theta);
    let w = field::zip(&s.p, &s.theta, |p, t| (-eps * p + t).exp());
    for a in 0..d {
        adv_ut.push(field::dot(&s.u, &sp.gradient(&ut[a])));
        let lap = sp.laplacian(&ut[a]);
        visc.push(
            (0..n)
                .map(|i| w[i] * (mu * lap[i] + (mu + lam + 0.5 * kappa) * gphi[a][i]) + 2.0 * e[i] * g5[a][i])
                .collect::<Field>(),
        );
    }
    FastFields {
        pt,
        phi,
        adv_pt,
        div_adv_ut: sp.divergence(&adv_ut),
        g4,
        div_visc: sp.divergence(&visc),
        theta_t: rates.theta.clone(),
    }
}

/// Residuals of the wave equations satisfied by `p~` and `div u~`, with
/// every time derivative taken by second-order stencils on the snapshots.
/// Nested derivatives need two snapshots on each side of a measured time.
pub fn fast_component_wave_residual(
    snapshots: &[FullState],
    params: &ScaledParameters,
) -> Result<FastResidualReport> {
    let m = snapshots.len();
    if m < 5 {
        return Err(Error::Window { needed: 5, found: m });
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.time).collect();
    let h = uniform_spacing(&times)?;
    let grid = snapshots[0].grid;
    let sp = Spectral::new(&grid);
    let d = grid.dim;
    let n = grid.len();
    let eps = params.epsilon;
    let order = StencilOrder::Second;
    let dt1 = |get: &dyn Fn(usize) -> Field, j: usize| -> Result<Field> {
        let vals: Vec<Field> = (j - 1..=j + 1).map(get).collect();
        let refs: Vec<&[f64]> = vals.iter().map(|v| v.as_slice()).collect();
        diagnostics::time_derivative(&refs, 1, h, 1, order)
    };

    let mut ff: Vec<Option<FastFields>> = (0..m).map(|_| None).collect();
    for j in 1..m - 1 {
        let rates = StateRates {
            p: dt1(&|i| snapshots[i].p.clone(), j)?,
            theta: dt1(&|i| snapshots[i].theta.clone(), j)?,
            i0: dt1(&|i| snapshots[i].i0.clone(), j)?,
            i1: (0..d)
                .map(|a| dt1(&|i| snapshots[i].i1[a].clone(), j))
                .collect::<Result<_>>()?,
        };
        ff[j] = Some(fast_fields(&sp, &snapshots[j], &rates, params));
    }
    let get = |j: usize| ff[j].as_ref().expect("inner derivatives available");

    let mut rep = FastResidualReport {
        times: Vec::new(),
        pressure: Vec::new(),
        divergence: Vec::new(),
        pressure_source: Vec::new(),
        divergence_source: Vec::new(),
        pressure_l2: 0.0,
        divergence_l2: 0.0,
    };
    for j in 2..m - 2 {
        let (prev, cur, next) = (get(j - 1), get(j), get(j + 1));
        let s = &snapshots[j];
        let two_e = field::map(&s.theta, |t| 2.0 * t.exp());
        let c1 = |f: fn(&FastFields) -> &Field| -> Field {
            (0..n).map(|i| (f(next)[i] - f(prev)[i]) / (2.0 * h)).collect()
        };
        let c2 = |f: fn(&FastFields) -> &Field| -> Field {
            (0..n)
                .map(|i| (f(next)[i] - 2.0 * f(cur)[i] + f(prev)[i]) / (h * h))
                .collect()
        };
        let d_adv_pt = c1(|x| &x.adv_pt);
        let d_g4 = c1(|x| &x.g4);
        let d_div_adv = c1(|x| &x.div_adv_ut);
        let d_div_visc = c1(|x| &x.div_visc);
        let pt_tt = c2(|x| &x.pt);
        let phi_tt = c2(|x| &x.phi);

        let f_src: Field = (0..n)
            .map(|i| -eps * eps * d_adv_pt[i] + eps * cur.div_adv_ut[i] + eps * eps * d_g4[i] - eps * cur.div_visc[i])
            .collect();
        let wave_p = stiffness(&sp, &two_e, &cur.pt);
        let r_p: Field = (0..n).map(|i| eps * eps * pt_tt[i] - wave_p[i] - f_src[i]).collect();

        let gpt = sp.gradient(&cur.pt);
        let heat: VectorField = gpt
            .iter()
            .map(|g| (0..n).map(|i| two_e[i] * cur.theta_t[i] * g[i]).collect())
            .collect();
        let div_heat = sp.divergence(&heat);
        let adv_term = stiffness(&sp, &two_e, &cur.adv_pt);
        let g4_term = stiffness(&sp, &two_e, &cur.g4);
        let g_src: Field = (0..n)
            .map(|i| {
                // differentiating the divergence equation gives +eps div(2 e^theta grad(u.grad p~))
                -eps * eps * d_div_adv[i] - eps * div_heat[i] + eps * adv_term[i] + eps * eps * d_div_visc[i]
                    - eps * g4_term[i]
            })
            .collect();
        let wave_phi = stiffness(&sp, &two_e, &cur.phi);
        let r_phi: Field = (0..n).map(|i| eps * eps * phi_tt[i] - wave_phi[i] - g_src[i]).collect();

        rep.times.push(times[j]);
        rep.pressure.push(sp.l2_norm(&r_p));
        rep.divergence.push(sp.l2_norm(&r_phi));
        rep.pressure_source.push(sp.l2_norm(&f_src));
        rep.divergence_source.push(sp.l2_norm(&g_src));
    }
    let l2 = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() * h).sqrt();
    rep.pressure_l2 = l2(&rep.pressure);
    rep.divergence_l2 = l2(&rep.divergence);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian_bump(grid: &PeriodicGrid, width: f64) -> Field {
        let c = [grid.extent[0] / 2.0, grid.extent[1] / 2.0];
        grid.sample(|x| {
            let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
            (-r2 / (width * width)).exp()
        })
    }

    #[test]
    fn plane_wave_matches_exact_solution() {
        // a = 1, b = 2: v = cos(k x - sqrt(2) k t / eps)
        let g = PeriodicGrid::cube(2, 2.0 * PI, 16).unwrap();
        let mut cfg = WaveConfig::homogeneous(g, 0.5);
        cfg.sponge = Sponge::NONE;
        cfg.t_end = 0.2;
        cfg.snapshot_interval = 0.1;
        cfg.cfl = 0.05;
        let k = 2.0;
        let om = 2f64.sqrt() * k;
        let v0 = g.sample(|x| (k * x[0]).cos());
        let v1 = g.sample(|x| om * (k * x[0]).sin());
        let sol = solve_wave(&cfg, &v0, &v1).unwrap();
        let t = 0.2;
        let exact = g.sample(|x| (k * x[0] - om * t / 0.5).cos());
        let err = field::max_abs(&field::sub(&sol.v[2], &exact));
        assert!(err < 1e-3, "err {err}");
        assert!(sol.energy_drift < 1e-10);
    }

    #[test]
    fn modified_energy_conserved_without_sponge() {
        let g = PeriodicGrid::cube(2, 8.0, 32).unwrap();
        let mut cfg = WaveConfig::homogeneous(g, 0.1);
        cfg.sponge = Sponge::NONE;
        cfg.b = field::map(&gaussian_bump(&g, 1.0), |x| 2.0 + x);
        cfg.a = field::map(&gaussian_bump(&g, 1.5), |x| 1.0 + 0.5 * x);
        cfg.t_end = 0.3;
        let sol = solve_wave(&cfg, &gaussian_bump(&g, 0.7), &field::zeros(g.len())).unwrap();
        assert!(sol.energy_drift < 1e-8, "drift {}", sol.energy_drift);
    }

    #[test]
    fn sponge_dissipates_energy() {
        let g = PeriodicGrid::cube(2, 8.0, 32).unwrap();
        let mut cfg = WaveConfig::homogeneous(g, 0.1);
        cfg.t_end = 1.0;
        let sol = solve_wave(&cfg, &gaussian_bump(&g, 0.7), &field::zeros(g.len())).unwrap();
        let (e0, e1) = (sol.energy[0], *sol.energy.last().unwrap());
        assert!(e1 < 0.1 * e0, "energy {e0} -> {e1}");
    }

    #[test]
    fn rejects_bad_coefficients() {
        let g = PeriodicGrid::cube(2, 8.0, 16).unwrap();
        let mut cfg = WaveConfig::homogeneous(g, 0.1);
        cfg.a[3] = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }
}

//! Derived quantities measured on trajectories.
//!
//! Time derivatives always come from centred finite-difference stencils on
//! the snapshot sequence, so the same code measures full-system and limit
//! trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, Field, VectorField};
use crate::grid::PeriodicGrid;
use crate::limit::LimitTrajectory;
use crate::params::ScaledParameters;
use crate::spectral::Spectral;
use crate::state::{uniform_spacing, FullState, Trajectory};

/// Equivalent pressure `p + exp(-eps p)(I0 - I_c)/3` and velocity
/// `2u - kappa exp(-eps p + theta) grad theta`.
pub fn equivalent_variables(sp: &Spectral, s: &FullState, params: &ScaledParameters) -> (Field, VectorField) {
    let eps = params.epsilon;
    let pt: Field = (0..s.p.len())
        .map(|i| s.p[i] + (-eps * s.p[i]).exp() * (s.i0[i] - params.i_c) / 3.0)
        .collect();
    let w = field::zip(&s.p, &s.theta, |p, t| (-eps * p + t).exp());
    let gt = sp.gradient(&s.theta);
    let ut = s
        .u
        .iter()
        .zip(&gt)
        .map(|(u, g)| (0..u.len()).map(|i| 2.0 * u[i] - params.kappa * w[i] * g[i]).collect())
        .collect();
    (pt, ut)
}

/// Perturbation variables of the symmetrised linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryState {
    pub p: Field,
    pub u: VectorField,
    pub theta: Field,
    pub i0: Field,
    pub i1: VectorField,
}

/// `(eps p - (theta - theta_c), eps u, theta - theta_c, I0 - I_c, I1)`.
pub fn auxiliary_variables(s: &FullState, params: &ScaledParameters) -> AuxiliaryState {
    let eps = params.epsilon;
    let th = field::map(&s.theta, |t| t - params.theta_c);
    AuxiliaryState {
        p: field::zip(&s.p, &th, |p, t| eps * p - t),
        u: field::vec_scale(&s.u, eps),
        theta: th,
        i0: field::map(&s.i0, |x| x - params.i_c),
        i1: s.i1.clone(),
    }
}

/// Inverse of [`auxiliary_variables`].
pub fn from_auxiliary(a: &AuxiliaryState, grid: PeriodicGrid, params: &ScaledParameters, time: f64) -> FullState {
    let eps = params.epsilon;
    FullState {
        grid,
        p: field::zip(&a.p, &a.theta, |p, t| (p + t) / eps),
        u: field::vec_scale(&a.u, 1.0 / eps),
        theta: field::map(&a.theta, |t| t + params.theta_c),
        i0: field::map(&a.i0, |x| x + params.i_c),
        i1: a.i1.clone(),
        time,
    }
}

/// `curl(exp(-theta) u)`.
pub fn transformed_vorticity(sp: &Spectral, u: &[Field], theta: &[f64]) -> Result<VectorField> {
    let w = field::map(theta, |t| (-t).exp());
    sp.curl(&field::vec_mul_scalar(u, &w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StencilOrder {
    Second,
    Fourth,
}

impl StencilOrder {
    /// Points needed on each side of the centre.
    pub fn half_width(self, k: usize) -> usize {
        match (self, k) {
            (_, 0) => 0,
            (StencilOrder::Second, _) => 1,
            (StencilOrder::Fourth, _) => 2,
        }
    }

    fn weights(self, k: usize) -> Vec<f64> {
        match (self, k) {
            (_, 0) => vec![1.0],
            (StencilOrder::Second, 1) => vec![-0.5, 0.0, 0.5],
            (StencilOrder::Second, 2) => vec![1.0, -2.0, 1.0],
            (StencilOrder::Fourth, 1) => vec![1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0],
            (StencilOrder::Fourth, 2) => vec![-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0],
            _ => unreachable!("derivative order above two"),
        }
    }
}

/// `k`-th time derivative at `series[center]` by a centred stencil.
pub fn time_derivative(series: &[&[f64]], center: usize, h: f64, k: usize, order: StencilOrder) -> Result<Field> {
    if k > 2 {
        return Err(Error::Config("time derivatives above second order are not measured".into()));
    }
    let half = order.half_width(k);
    if center < half || center + half >= series.len() {
        return Err(Error::Window {
            needed: 2 * half + 1,
            found: series.len().min(center + 1 + series.len().saturating_sub(center + 1).min(half)),
        });
    }
    let w = order.weights(k);
    let scale = h.powi(k as i32);
    let n = series[center].len();
    let mut out = vec![0.0; n];
    for (j, wj) in w.iter().enumerate() {
        if *wj != 0.0 {
            field::axpy(&mut out, wj / scale, series[center + j - half]);
        }
    }
    Ok(out)
}

/// A time series of one field group: `series[time][component]`.
pub type GroupSeries = Vec<Vec<Field>>;

fn graded_norm(
    sp: &Spectral,
    series: &GroupSeries,
    center: usize,
    h: f64,
    s: usize,
    kmax: usize,
    order: StencilOrder,
    weight: impl Fn(usize) -> f64,
) -> Result<f64> {
    if kmax > 2 {
        return Err(Error::Config("kmax is capped at 2".into()));
    }
    if kmax > s {
        return Err(Error::Config(format!("kmax {kmax} exceeds the Sobolev order {s}")));
    }
    let ncomp = series[center].len();
    let mut total = 0.0;
    for k in 0..=kmax {
        let mut sq = 0.0;
        for c in 0..ncomp {
            let refs: Vec<&[f64]> = series.iter().map(|t| t[c].as_slice()).collect();
            let d = time_derivative(&refs, center, h, k, order)?;
            sq += sp.sobolev_norm(&d, s - k).powi(2);
        }
        total += weight(k) * sq.sqrt();
    }
    Ok(total)
}

/// `sum_k ||(eps d_t)^k v||_{s-k}` for `k <= kmax`.
#[allow(clippy::too_many_arguments)]
pub fn weighted_norm(
    sp: &Spectral,
    series: &GroupSeries,
    center: usize,
    h: f64,
    s: usize,
    epsilon: f64,
    kmax: usize,
    order: StencilOrder,
) -> Result<f64> {
    graded_norm(sp, series, center, h, s, kmax, order, |k| epsilon.powi(k as i32))
}

/// `sum_k ||eps^[k-1]+ d_t^k v||_{s-k}` for `k <= kmax`.
#[allow(clippy::too_many_arguments)]
pub fn triple_norm(
    sp: &Spectral,
    series: &GroupSeries,
    center: usize,
    h: f64,
    s: usize,
    epsilon: f64,
    kmax: usize,
    order: StencilOrder,
) -> Result<f64> {
    graded_norm(sp, series, center, h, s, kmax, order, |k| {
        epsilon.powi(k.saturating_sub(1) as i32)
    })
}

/// Per-group norm histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupNorms {
    pub name: String,
    pub order: usize,
    pub weighted: Vec<f64>,
    pub triple: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormReport {
    pub s: usize,
    pub epsilon: f64,
    /// Highest time-derivative order retained (the sums are truncated here).
    pub kmax: usize,
    pub stencil: StencilOrder,
    pub times: Vec<f64>,
    pub groups: Vec<GroupNorms>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    /// Flux contribution to `m1`, reported on its own.
    pub flux_part: Vec<f64>,
    pub sup_m1: f64,
    pub integral_m2_sq: f64,
    /// `sup m1 + (int m2^2)^(1/2)`.
    pub aggregate: f64,
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Truncated analogues of the a priori energy functionals on the interior
/// snapshots of a trajectory (those with a full stencil on both sides).
pub fn proposition_energy(
    sp: &Spectral,
    snapshots: &[FullState],
    params: &ScaledParameters,
    s: usize,
    kmax: usize,
    order: StencilOrder,
) -> Result<WeightedNormReport> {
    let times: Vec<f64> = snapshots.iter().map(|x| x.time).collect();
    let h = if snapshots.len() > 1 { uniform_spacing(&times)? } else { 1.0 };
    let half = order.half_width(kmax);
    if snapshots.len() < 2 * half + 1 {
        return Err(Error::Window {
            needed: 2 * half + 1,
            found: snapshots.len(),
        });
    }
    let eps = params.epsilon;
    let grad = |f: &[f64]| sp.gradient(f);
    let mut pu = GroupSeries::new();
    let mut scaled = GroupSeries::new();
    let mut rad = GroupSeries::new();
    let mut flux = GroupSeries::new();
    let mut gpu = GroupSeries::new();
    let mut gut = GroupSeries::new();
    for x in snapshots {
        let mut a = vec![x.p.clone()];
        a.extend(x.u.iter().cloned());
        pu.push(a);
        let mut b = vec![field::scale(&x.p, eps)];
        b.extend(x.u.iter().map(|c| field::scale(c, eps)));
        b.push(field::map(&x.theta, |t| t - params.theta_c));
        scaled.push(b);
        let mut c = vec![field::map(&x.i0, |v| v - params.i_c)];
        c.extend(x.i1.iter().cloned());
        rad.push(c);
        flux.push(x.i1.clone());
        let mut d = grad(&x.p);
        for c in &x.u {
            d.extend(grad(c));
        }
        gpu.push(d);
        let mut e = Vec::new();
        for c in &x.u {
            e.extend(grad(c).into_iter().map(|g| field::scale(&g, eps)));
        }
        e.extend(grad(&x.theta));
        gut.push(e);
    }
    let centers: Vec<usize> = (half..snapshots.len() - half).collect();
    let hist = |series: &GroupSeries, order_s: usize, triple: bool| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut w = Vec::new();
        let mut t = Vec::new();
        for &j in &centers {
            w.push(weighted_norm(sp, series, j, h, order_s, eps, kmax, order)?);
            if triple {
                t.push(triple_norm(sp, series, j, h, order_s, eps, kmax, order)?);
            }
        }
        Ok((w, t))
    };
    let (g1w, g1t) = hist(&pu, s, true)?;
    let (g2w, g2t) = hist(&scaled, s + 1, true)?;
    let (g3w, g3t) = hist(&rad, s + 1, true)?;
    let (_, fl) = hist(&flux, s + 1, true)?;
    let (g4w, g4t) = hist(&gpu, s, true)?;
    let (g5w, g5t) = hist(&gut, s + 1, true)?;
    let m1: Vec<f64> = (0..centers.len()).map(|i| g1w[i] + g2w[i] + g3t[i]).collect();
    let m2: Vec<f64> = (0..centers.len()).map(|i| g4w[i] + g5w[i]).collect();
    let ts: Vec<f64> = centers.iter().map(|&j| times[j]).collect();
    let sup_m1 = m1.iter().cloned().fold(0.0, f64::max);
    let m2sq: Vec<f64> = m2.iter().map(|x| x * x).collect();
    let integral_m2_sq = trapezoid(&ts, &m2sq);
    let mk = |name: &str, order_s: usize, w: Vec<f64>, t: Vec<f64>| GroupNorms {
        name: name.into(),
        order: order_s,
        weighted: w,
        triple: t,
    };
    Ok(WeightedNormReport {
        s,
        epsilon: eps,
        kmax,
        stencil: order,
        times: ts,
        groups: vec![
            mk("p,u", s, g1w, g1t),
            mk("eps p,eps u,theta", s + 1, g2w, g2t),
            mk("I0,I1", s + 1, g3w, g3t),
            mk("grad p,grad u", s, g4w, g4t),
            mk("grad eps u,grad theta", s + 1, g5w, g5t),
        ],
        m1,
        m2,
        flux_part: fl,
        sup_m1,
        integral_m2_sq,
        aggregate: sup_m1 + integral_m2_sq.sqrt(),
    })
}

/// Axis-aligned measurement box `[lo, hi)` in physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl MeasurementBox {
    pub fn whole(grid: &PeriodicGrid) -> Self {
        MeasurementBox {
            lo: [0.0; 3],
            hi: grid.extent,
        }
    }

    /// Centred box of half the side length on every axis.
    pub fn centered_half(grid: &PeriodicGrid) -> Self {
        let mut b = Self::whole(grid);
        for a in 0..3 {
            b.lo[a] = 0.25 * grid.extent[a];
            b.hi[a] = 0.75 * grid.extent[a];
        }
        b
    }

    /// Shrink by one cell on each side of every used axis.
    pub fn shrunk(&self, grid: &PeriodicGrid) -> Self {
        let mut b = *self;
        for a in 0..grid.dim {
            let h = grid.spacing(a);
            b.lo[a] += h;
            b.hi[a] -= h;
        }
        b
    }

    pub fn mask(&self, grid: &PeriodicGrid) -> Vec<bool> {
        (0..grid.len())
            .map(|i| {
                let x = grid.coords(i);
                (0..grid.dim).all(|a| x[a] >= self.lo[a] - 1e-12 && x[a] < self.hi[a] - 1e-12)
            })
            .collect()
    }
}

/// `L²` norm restricted to `region` (cell quadrature).
pub fn local_energy(grid: &PeriodicGrid, f: &[f64], region: &MeasurementBox) -> f64 {
    let mask = region.mask(grid);
    let s: f64 = f.iter().zip(&mask).filter(|(_, m)| **m).map(|(x, _)| x * x).sum();
    (grid.cell_volume() * s).sqrt()
}

pub fn local_energy_vec(grid: &PeriodicGrid, v: &[Field], region: &MeasurementBox) -> f64 {
    v.iter()
        .map(|c| local_energy(grid, c, region).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root of the summed squared log-residuals.
    pub residual: f64,
}

/// Least-squares line through `(log eps, log error)`.
pub fn fit_rate(epsilons: &[f64], errors: &[f64]) -> Result<RateFit> {
    if epsilons.len() != errors.len() || epsilons.len() < 3 {
        return Err(Error::Fit("need at least three (epsilon, error) pairs".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Fit("epsilons must be strictly decreasing".into()));
    }
    if errors.iter().any(|e| !(*e > 0.0)) || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Fit("errors and epsilons must be positive".into()));
    }
    let x: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(RateFit {
        epsilons: epsilons.to_vec(),
        errors: errors.to_vec(),
        slope,
        intercept,
        residual,
    })
}

/// Slow variables of any trajectory, as needed by the limit residuals.
#[derive(Debug, Clone)]
pub struct SlowSeries {
    pub grid: PeriodicGrid,
    pub times: Vec<f64>,
    pub u: Vec<VectorField>,
    pub theta: Vec<Field>,
    pub i0: Vec<Field>,
    pub i1: Vec<VectorField>,
}

impl SlowSeries {
    pub fn from_full(t: &Trajectory) -> Self {
        SlowSeries {
            grid: t.snapshots[0].grid,
            times: t.times(),
            u: t.snapshots.iter().map(|s| s.u.clone()).collect(),
            theta: t.snapshots.iter().map(|s| s.theta.clone()).collect(),
            i0: t.snapshots.iter().map(|s| s.i0.clone()).collect(),
            i1: t.snapshots.iter().map(|s| s.i1.clone()).collect(),
        }
    }

    pub fn from_limit(t: &LimitTrajectory) -> Self {
        SlowSeries {
            grid: t.snapshots[0].grid,
            times: t.times(),
            u: t.snapshots.iter().map(|s| s.u.clone()).collect(),
            theta: t.snapshots.iter().map(|s| s.theta.clone()).collect(),
            i0: t.snapshots.iter().map(|s| s.i0.clone()).collect(),
            i1: t.snapshots.iter().map(|s| s.i1.clone()).collect(),
        }
    }
}

/// `L²` residual histories of the limit equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitResidualReport {
    pub times: Vec<f64>,
    /// `2 div u - kappa lap exp(theta)` (every snapshot).
    pub constraint: Vec<f64>,
    pub constraint_times: Vec<f64>,
    /// Momentum residual after removing its gradient part.
    pub momentum: Vec<f64>,
    pub temperature: Vec<f64>,
    /// Density form with `rho = exp(-theta)`.
    pub density: Vec<f64>,
    /// Radiative energy diffusion equation (δ = 2 only).
    pub radiation_energy: Option<Vec<f64>>,
    /// Divergence-free part of `d_t I1 + 2 I1` and `div I1` (δ = 0 only).
    pub radiation_flux: Option<Vec<f64>>,
}

impl LimitResidualReport {
    pub fn max_of(v: &[f64]) -> f64 {
        v.iter().cloned().fold(0.0, f64::max)
    }
}

/// Residuals of the limit system selected by `delta`, measured on `series`.
pub fn limit_residual(
    sp: &Spectral,
    series: &SlowSeries,
    params: &ScaledParameters,
    delta: f64,
    order: StencilOrder,
) -> Result<LimitResidualReport> {
    let n_t = series.times.len();
    let half = order.half_width(1);
    if n_t < 2 * half + 1 {
        return Err(Error::Window {
            needed: 2 * half + 1,
            found: n_t,
        });
    }
    let h = uniform_spacing(&series.times)?;
    let d = series.grid.dim;
    let (mu, lam, kappa) = (params.mu, params.lambda, params.kappa);
    let constraint: Vec<f64> = (0..n_t)
        .map(|j| {
            sp.l2_norm(&crate::limit::divergence_constraint_residual(
                sp,
                &series.u[j],
                &series.theta[j],
                kappa,
            ))
        })
        .collect();
    let mut rep = LimitResidualReport {
        times: Vec::new(),
        constraint,
        constraint_times: series.times.clone(),
        momentum: Vec::new(),
        temperature: Vec::new(),
        density: Vec::new(),
        radiation_energy: (delta == 2.0).then(Vec::new),
        radiation_flux: (delta == 0.0).then(Vec::new),
    };
    let dt_of = |refs: Vec<&[f64]>, j: usize| time_derivative(&refs, j, h, 1, order);
    for j in half..n_t - half {
        rep.times.push(series.times[j]);
        let u = &series.u[j];
        let th = &series.theta[j];
        let e = field::exp(th);
        let em = field::map(th, |t| (-t).exp());
        let theta_t = dt_of((0..n_t).map(|i| series.theta[i].as_slice()).collect(), j)?;
        let grad_t = sp.gradient(th);
        let div_u = sp.divergence(u);
        let lap_e = sp.laplacian(&e);
        let adv_t = field::dot(u, &grad_t);

        let r_t: Field = (0..th.len())
            .map(|i| theta_t[i] + adv_t[i] + div_u[i] - kappa * lap_e[i])
            .collect();
        rep.temperature.push(sp.l2_norm(&r_t));

        // rho = exp(-theta): d_t rho + u.grad rho + rho div u
        let rho_t = field::zip(&em, &theta_t, |r, t| -r * t);
        let r_rho: Field = (0..th.len())
            .map(|i| rho_t[i] - em[i] * adv_t[i] + em[i] * div_u[i])
            .collect();
        rep.density.push(sp.l2_norm(&r_rho));

        let mut mom = Vec::with_capacity(d);
        let grads: Vec<VectorField> = u.iter().map(|c| sp.gradient(c)).collect();
        let grad_div = sp.gradient(&div_u);
        for a in 0..d {
            let ut = dt_of((0..n_t).map(|i| series.u[i][a].as_slice()).collect(), j)?;
            let lap = sp.laplacian(&u[a]);
            let conv = field::dot(u, &grads[a]);
            mom.push(
                (0..th.len())
                    .map(|i| em[i] * (ut[i] + conv[i]) - mu * lap[i] - (mu + lam) * grad_div[a][i])
                    .collect::<Field>(),
            );
        }
        let h_mom = sp.helmholtz(&mom);
        let sol: VectorField = h_mom
            .solenoidal
            .iter()
            .zip(&h_mom.mean)
            .map(|(c, m)| field::map(c, |x| x + m))
            .collect();
        rep.momentum.push(sp.l2_norm_vec(&sol));

        if let Some(r) = rep.radiation_energy.as_mut() {
            let i0 = &series.i0[j];
            let i0_t = dt_of((0..n_t).map(|i| series.i0[i].as_slice()).collect(), j)?;
            let lap = sp.laplacian(i0);
            let res: Field = (0..th.len())
                .map(|i| i0_t[i] - lap[i] / 3.0 + i0[i] - (4.0 * th[i]).exp())
                .collect();
            r.push(sp.l2_norm(&res));
        }
        if let Some(r) = rep.radiation_flux.as_mut() {
            let i1 = &series.i1[j];
            let mut v = Vec::with_capacity(d);
            for a in 0..d {
                let it = dt_of((0..n_t).map(|i| series.i1[i][a].as_slice()).collect(), j)?;
                v.push(field::zip(&it, &i1[a], |x, y| x + 2.0 * y));
            }
            let pv = sp.project_solenoidal(&v);
            let div = sp.divergence(i1);
            r.push((sp.l2_norm_vec(&pv).powi(2) + sp.l2_norm(&div).powi(2)).sqrt());
        }
    }
    Ok(rep)
}

/// Time derivatives of the state entering the fast-component sources.
#[derive(Debug, Clone)]
pub struct StateRates {
    pub p: Field,
    pub theta: Field,
    pub i0: Field,
    pub i1: VectorField,
}

/// The sources `(g4, g5)` of the equivalent pressure/velocity system
/// `d_t p~ + u.grad p~ + div u~ / eps = g4`,
/// `exp(-theta)/2 (d_t u~ + u.grad u~) + grad p~ / eps
///   = exp(-eps p)/2 (div Psi(u~) + kappa/2 grad div u~) + g5`.
pub fn fast_sources(
    sp: &Spectral,
    s: &FullState,
    rates: &StateRates,
    params: &ScaledParameters,
) -> (Field, VectorField) {
    let d = s.grid.dim;
    let n = s.grid.len();
    let eps = params.epsilon;
    let (mu, lam, kappa) = (params.mu, params.lambda, params.kappa);
    let em = field::map(&s.p, |p| (-eps * p).exp());
    let e = field::exp(&s.theta);
    let e4 = field::map(&s.theta, |t| (4.0 * t).exp());
    let gp = sp.gradient(&s.p);
    let gt = sp.gradient(&s.theta);
    let gi0 = sp.gradient(&s.i0);
    let gu: Vec<VectorField> = s.u.iter().map(|c| sp.gradient(c)).collect(); // gu[b][a] = d_a u_b
    let div_u: Field = (0..n).map(|i| (0..d).map(|a| gu[a][a][i]).sum()).collect();
    let mut diss = field::map(&div_u, |x| lam * x * x);
    for a in 0..d {
        for b in 0..d {
            for i in 0..n {
                let sym = 0.5 * (gu[b][a][i] + gu[a][b][i]);
                diss[i] += 2.0 * mu * sym * sym;
            }
        }
    }
    let i1u = field::dot(&s.i1, &s.u);
    let adv_p = field::dot(&s.u, &gp);
    let adv_t = field::dot(&s.u, &gt);
    let adv_i0 = field::dot(&s.u, &gi0);
    let gpgt = field::dot(&gp, &gt);
    let pw = params.pressure_work_coeff();
    let tw = params.temperature_work_coeff();

    let g4: Field = (0..n)
        .map(|i| {
            let dev = s.i0[i] - params.i_c;
            em[i] / 3.0 * (-eps * dev * (rates.p[i] + adv_p[i]) + (rates.i0[i] + adv_i0[i]))
                + em[i] * (eps * diss[i] + (s.i0[i] - e4[i]) - pw * i1u[i])
                + kappa * em[i] * e[i] * gpgt[i]
        })
        .collect();

    // q = exp(-eps p + theta) grad theta
    let w = field::mul(&em, &e);
    let q: VectorField = gt.iter().map(|g| field::mul(g, &w)).collect();
    let div_q = sp.divergence(&q);
    let gdq = sp.gradient(&div_q);
    let lap_e = sp.laplacian(&e);
    let g_em_lap = sp.gradient(&field::mul(&em, &lap_e));
    let heat: Field = (0..n)
        .map(|i| em[i] * (eps * eps * diss[i] + eps * (s.i0[i] - e4[i]) - tw * i1u[i]))
        .collect();
    let g_heat = sp.gradient(&heat);
    let mut g5 = Vec::with_capacity(d);
    for a in 0..d {
        let lap_q = sp.laplacian(&q[a]);
        let c: Field = (0..n)
            .map(|i| {
                // (grad u grad theta)_a = sum_b d_a u_b d_b theta
                let gugt: f64 = (0..d).map(|b| gu[b][a][i] * gt[b][i]).sum();
                0.5 * kappa * em[i] * (eps * (rates.p[i] + adv_p[i]) - (rates.theta[i] + adv_t[i])) * gt[a][i]
                    + 0.5
                        * kappa
                        * em[i]
                        * (mu * lap_q[i] + (mu + lam + 0.5 * kappa) * gdq[a][i] - kappa * g_em_lap[a][i])
                    + em[i] * (0.5 * kappa * gugt - rates.i1[a][i] - (s.i0[i] - params.i_c) * gp[a][i] / 3.0)
                    - 0.5 * kappa * em[i] * g_heat[a][i]
            })
            .collect();
        g5.push(c);
    }
    (g4, g5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::scaled_rhs;
    use crate::state::{make_initial_data, InitialRecipe, Preparedness};
    use std::f64::consts::PI;

    #[test]
    fn equivalent_pressure_scalar_case() {
        let g = PeriodicGrid::cube(2, 1.0, 8).unwrap();
        let p = ScaledParameters::new(0.5, 2.0, 0.5, 0.5, 0.0, 0.0).unwrap();
        let n = g.len();
        let s = FullState {
            grid: g,
            p: vec![0.2; n],
            u: vec![vec![0.3; n], vec![-0.1; n]],
            theta: vec![0.0; n],
            i0: vec![1.3; n],
            i1: vec![vec![0.0; n]; 2],
            time: 0.0,
        };
        let (pt, ut) = equivalent_variables(&Spectral::new(&g), &s, &p);
        assert!((pt[0] - 0.290_483_741_803_595_9).abs() < 1e-12);
        assert!((ut[0][5] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn auxiliary_pressure_example() {
        let g = PeriodicGrid::cube(1, 1.0, 8).unwrap();
        let p = ScaledParameters::new(0.25, 2.0, 0.5, 0.5, 0.0, 0.0).unwrap();
        let mut s = crate::state::make_equilibrium(&g, &p);
        s.p = vec![1.0; 8];
        s.theta = vec![0.1; 8];
        let a = auxiliary_variables(&s, &p);
        assert!((a.p[0] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn stencils_recover_polynomials() {
        let h = 0.1;
        let vals: Vec<Vec<f64>> = (0..5).map(|j| vec![(j as f64 * h).powi(3)]).collect();
        let refs: Vec<&[f64]> = vals.iter().map(|v| v.as_slice()).collect();
        let d1 = time_derivative(&refs, 2, h, 1, StencilOrder::Fourth).unwrap();
        assert!((d1[0] - 3.0 * 0.04).abs() < 1e-12);
        let d2 = time_derivative(&refs, 2, h, 2, StencilOrder::Fourth).unwrap();
        assert!((d2[0] - 6.0 * 0.2).abs() < 1e-11);
        assert!(matches!(
            time_derivative(&refs, 1, h, 1, StencilOrder::Fourth),
            Err(Error::Window { .. })
        ));
    }

    #[test]
    fn cosine_mode_weighted_norm() {
        let g = PeriodicGrid::cube(2, 2.0 * PI, 16).unwrap();
        let sp = Spectral::new(&g);
        let h = 1e-3;
        let series: GroupSeries = (-1..=1)
            .map(|j| vec![g.sample(|x| (j as f64 * h).cos() * x[0].sin())])
            .collect();
        let v = weighted_norm(&sp, &series, 1, h, 1, 0.5, 1, StencilOrder::Second).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-5);
    }

    #[test]
    fn rate_fit_exact_line() {
        let f = fit_rate(&[0.2, 0.1, 0.05], &[0.1, 0.05, 0.025]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert!(fit_rate(&[0.2, 0.1, 0.05], &[0.1, 0.0, 0.025]).is_err());
        assert!(fit_rate(&[0.1, 0.2, 0.05], &[0.1, 0.1, 0.025]).is_err());
    }

    #[test]
    fn local_energy_whole_domain_is_l2() {
        let g = PeriodicGrid::cube(2, 2.0 * PI, 16).unwrap();
        let sp = Spectral::new(&g);
        let f = g.sample(|x| x[0].sin() + 0.2 * x[1].cos());
        let b = MeasurementBox::whole(&g);
        assert!((local_energy(&g, &f, &b) - sp.l2_norm(&f)).abs() < 1e-12);
        assert_eq!(local_energy(&g, &vec![0.0; g.len()], &b), 0.0);
    }

    /// The sources must close the equivalent-variable system when every
    /// time derivative is taken from the right-hand side.
    #[test]
    fn fast_sources_close_equivalent_system() {
        let g = PeriodicGrid::cube(2, 2.0 * PI, 64).unwrap();
        let sp = Spectral::new(&g);
        let p = ScaledParameters::new(0.3, 1.5, 0.4, 0.6, 0.1, 0.1).unwrap();
        let s = make_initial_data(
            &g,
            &p,
            &InitialRecipe {
                amplitude: 0.2,
                preparedness: Preparedness::General,
                max_mode: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let r = scaled_rhs(&sp, &s, &p).unwrap();
        let d = g.dim;
        let n = g.len();
        let rates = StateRates {
            p: r[0].clone(),
            theta: r[d + 1].clone(),
            i0: r[d + 2].clone(),
            i1: r[d + 3..].to_vec(),
        };
        let ut_rate: VectorField = r[1..=d].to_vec();
        let (g4, g5) = fast_sources(&sp, &s, &rates, &p);
        let eps = p.epsilon;
        let (pt, ut) = equivalent_variables(&sp, &s, &p);

        // d_t p~ by the chain rule
        let pt_t: Field = (0..n)
            .map(|i| {
                let em = (-eps * s.p[i]).exp();
                rates.p[i] * (1.0 - eps * em * (s.i0[i] - p.i_c) / 3.0) + em * rates.i0[i] / 3.0
            })
            .collect();
        let adv = field::dot(&s.u, &sp.gradient(&pt));
        let div_ut = sp.divergence(&ut);
        let r4: Field = (0..n).map(|i| pt_t[i] + adv[i] + div_ut[i] / eps - g4[i]).collect();
        assert!(sp.l2_norm(&r4) < 1e-8 * sp.l2_norm(&g4).max(1.0), "g4 mismatch {}", sp.l2_norm(&r4));

        // d_t u~ = 2 u_t - kappa d_t(w grad theta), w = exp(-eps p + theta)
        let w = field::zip(&s.p, &s.theta, |a, b| (-eps * a + b).exp());
        let gt = sp.gradient(&s.theta);
        let gtt = sp.gradient(&rates.theta);
        let div_ut_h = sp.divergence(&ut);
        let gdiv = sp.gradient(&div_ut_h);
        let refs: Vec<&[f64]> = ut.iter().map(|c| c.as_slice()).collect();
        let uth = sp.forward_many(&refs);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for a in 0..d {
            let lap = sp.inverse(sp.laplacian_hat(&uth[a]));
            let gua = sp.gradient(&ut[a]);
            let conv = field::dot(&s.u, &gua);
            let gp = sp.gradient(&pt);
            let res: Field = (0..n)
                .map(|i| {
                    let wt = w[i] * (-eps * rates.p[i] + rates.theta[i]);
                    let dut = 2.0 * ut_rate[a][i] - p.kappa * (wt * gt[a][i] + w[i] * gtt[a][i]);
                    let em = (-eps * s.p[i]).exp();
                    let visc = p.mu * lap[i] + (p.mu + p.lambda) * gdiv[a][i];
                    0.5 * (-s.theta[i]).exp() * (dut + conv[i]) + gp[a][i] / eps
                        - 0.5 * em * (visc + 0.5 * p.kappa * gdiv[a][i])
                        - g5[a][i]
                })
                .collect();
            worst = worst.max(sp.l2_norm(&res));
            scale = scale.max(sp.l2_norm(&g5[a]));
        }
        assert!(worst < 1e-8 * scale, "g5 mismatch {worst} (scale {scale})");
    }
}

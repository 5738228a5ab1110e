//! Time integration of the scaled system.
//!
//! The stiff set is the complete linearisation about the constant background
//! state. It is integrated exactly mode by mode with a matrix exponential; the
//! remainder (full right-hand side minus that linear part) is integrated by an
//! explicit Runge-Kutta scheme, and the two flows are composed by Strang or
//! Lie splitting.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, Field, VectorField};
use crate::grid::PeriodicGrid;
use crate::params::ScaledParameters;
use crate::spectral::{Spectral, Spectrum};
use crate::state::{make_equilibrium, FullState, RunMetadata, RunStatus, Trajectory};

/// Index layout of the per-mode perturbation `(p, u, theta, I0, I1)`.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub dim: usize,
}

impl Layout {
    pub fn size(&self) -> usize {
        2 * self.dim + 3
    }
    pub fn p(&self) -> usize {
        0
    }
    pub fn u(&self, a: usize) -> usize {
        1 + a
    }
    pub fn theta(&self) -> usize {
        1 + self.dim
    }
    pub fn i0(&self) -> usize {
        2 + self.dim
    }
    pub fn i1(&self, a: usize) -> usize {
        3 + self.dim + a
    }
}

/// Linearised generator for one wavevector.
#[derive(Debug, Clone)]
pub struct StiffBlock {
    pub k: [f64; 3],
    pub dim: usize,
    pub matrix: DMatrix<Complex64>,
}

/// The linearisation of the scaled right-hand side about
/// `(0, 0, theta_c, I_c, 0)` at wavevector `k`.
pub fn linearized_stiff_matrix(k: [f64; 3], dim: usize, params: &ScaledParameters) -> StiffBlock {
    let l = Layout { dim };
    let m = l.size();
    let eps = params.epsilon;
    let ec = params.theta_c.exp();
    let e4c = (4.0 * params.theta_c).exp();
    let damp = params.damping();
    let k2: f64 = k.iter().take(dim).map(|x| x * x).sum();
    let ik = |a: usize| Complex64::new(0.0, k[a]);
    let re = |x: f64| Complex64::new(x, 0.0);
    let mut a = DMatrix::<Complex64>::zeros(m, m);

    a[(l.p(), l.theta())] = re(-params.kappa / eps * ec * k2 - 4.0 * e4c);
    a[(l.p(), l.i0())] = re(1.0);
    a[(l.theta(), l.theta())] = re(-params.kappa * ec * k2 - 4.0 * eps * e4c);
    a[(l.theta(), l.i0())] = re(eps);
    a[(l.i0(), l.theta())] = re(4.0 * e4c);
    a[(l.i0(), l.i0())] = re(-1.0);
    for i in 0..dim {
        a[(l.p(), l.u(i))] = -ik(i) * (2.0 / eps);
        a[(l.theta(), l.u(i))] = -ik(i);
        a[(l.u(i), l.p())] = -ik(i) * (ec / eps);
        for j in 0..dim {
            let diag = if i == j { params.mu * k2 } else { 0.0 };
            a[(l.u(i), l.u(j))] = re(-ec * (diag + (params.mu + params.lambda) * k[i] * k[j]));
        }
        a[(l.u(i), l.i1(i))] = re(ec * damp);
        a[(l.i0(), l.i1(i))] = -ik(i) / eps;
        a[(l.i1(i), l.i0())] = -ik(i) / (3.0 * eps);
        a[(l.i1(i), l.i1(i))] = re(-damp);
    }
    StiffBlock { k, dim, matrix: a }
}

/// `exp(dt A)`.
pub fn stiff_propagator(block: &StiffBlock, dt: f64) -> DMatrix<Complex64> {
    (&block.matrix * Complex64::new(dt, 0.0)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splitting {
    Strang,
    Lie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageScheme {
    Rk2,
    Rk4,
}

impl StageScheme {
    /// Radius (in units of `dt` times the spectral radius) inside which the
    /// scheme is used; kept below the true stability boundary.
    fn stability_radius(self) -> f64 {
        match self {
            StageScheme::Rk4 => 2.5,
            StageScheme::Rk2 => 1.0,
        }
    }
}

impl std::str::FromStr for Splitting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strang" => Ok(Splitting::Strang),
            "lie" => Ok(Splitting::Lie),
            o => Err(Error::Config(format!("unknown splitting `{o}`"))),
        }
    }
}

impl std::str::FromStr for StageScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk2" => Ok(StageScheme::Rk2),
            "rk4" => Ok(StageScheme::Rk4),
            o => Err(Error::Config(format!("unknown stage scheme `{o}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub splitting: Splitting,
    pub scheme: StageScheme,
    /// Safety factor applied to the admissible step when choosing `dt`.
    pub cfl: f64,
    pub snapshot_interval: f64,
    /// Abort once any field exceeds this multiple of its initial size.
    pub guard_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1e-3,
            t_end: 0.5,
            splitting: Splitting::Strang,
            scheme: StageScheme::Rk4,
            cfl: 0.5,
            snapshot_interval: 0.01,
            guard_factor: 1e3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt > 0.0) {
            errs.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            errs.push(format!("CFL factor must lie in (0,1], got {}", self.cfl));
        }
        if !(self.t_end >= 0.0) {
            errs.push("t_end must be nonnegative".into());
        }
        if !(self.snapshot_interval > 0.0) {
            errs.push("snapshot interval must be positive".into());
        }
        if !(self.guard_factor > 1.0) {
            errs.push("guard factor must exceed 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Steps per snapshot; the interval must be a whole number of steps.
    pub fn steps_per_snapshot(&self) -> Result<usize> {
        let r = self.snapshot_interval / self.dt;
        let n = r.round();
        if n < 1.0 || (r - n).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::Config(format!(
                "snapshot interval {} is not a multiple of dt {}",
                self.snapshot_interval, self.dt
            )));
        }
        Ok(n as usize)
    }

    /// Largest step not above `cfl * admissible` that divides the snapshot interval.
    pub fn fit_dt(&mut self, admissible: f64) {
        let target = self.cfl * admissible;
        let n = (self.snapshot_interval / target).ceil().max(1.0);
        self.dt = self.snapshot_interval / n;
    }
}

fn checked(term: &str, f: Field) -> Result<Field> {
    if field::all_finite(&f) {
        Ok(f)
    } else {
        Err(Error::NumericOverflow { term: term.to_string() })
    }
}

/// Pointwise evaluation of the scaled right-hand sides, returned in the
/// component order of [`FullState::components`].
pub fn scaled_rhs(sp: &Spectral, state: &FullState, params: &ScaledParameters) -> Result<Vec<Field>> {
    rhs_and_spectra(sp, state, params).map(|(r, _)| r)
}

/// The right-hand side together with the spectra of the state components
/// (component order), which the remainder reuses.
fn rhs_and_spectra(sp: &Spectral, state: &FullState, params: &ScaledParameters) -> Result<(Vec<Field>, Vec<Spectrum>)> {
    let g = sp.grid();
    if state.grid != *g {
        return Err(Error::Validation(vec!["state and operator grids differ".into()]));
    }
    let d = g.dim;
    let n = g.len();
    let eps = params.epsilon;
    let (mu, lam, kappa) = (params.mu, params.lambda, params.kappa);

    let e_theta = checked("exp(theta)", field::exp(&state.theta))?;
    let e_minus_p = checked("exp(-eps p)", field::map(&state.p, |p| (-eps * p).exp()))?;
    let e4 = checked("exp(4 theta)", field::map(&state.theta, |t| (4.0 * t).exp()))?;

    // spectra: p, theta, e^theta, I0, u.., I1..
    let mut inputs: Vec<&[f64]> = vec![&state.p, &state.theta, &e_theta, &state.i0];
    inputs.extend(state.u.iter().map(|c| c.as_slice()));
    inputs.extend(state.i1.iter().map(|c| c.as_slice()));
    let hats = sp.forward_many(&inputs);
    let (ph, th, eh, i0h) = (&hats[0], &hats[1], &hats[2], &hats[3]);
    let uh = &hats[4..4 + d];
    let i1h = &hats[4 + d..4 + 2 * d];

    let mut outs: Vec<Spectrum> = Vec::new();
    for a in 0..d {
        outs.push(sp.derivative_hat(ph, a));
    }
    for a in 0..d {
        outs.push(sp.derivative_hat(th, a));
    }
    for a in 0..d {
        outs.push(sp.derivative_hat(i0h, a));
    }
    for b in 0..d {
        for a in 0..d {
            // d_a u_b
            outs.push(sp.derivative_hat(&uh[b], a));
        }
    }
    outs.push(sp.laplacian_hat(eh));
    outs.push(sp.divergence_hat(i1h));
    let divu_h = sp.divergence_hat(uh);
    for a in 0..d {
        let lap = sp.laplacian_hat(&uh[a]);
        let gd = sp.derivative_hat(&divu_h, a);
        outs.push(
            lap.iter()
                .zip(&gd)
                .map(|(l, g)| l * mu + g * (mu + lam))
                .collect(),
        );
    }
    let mut real = sp.inverse_many(outs).into_iter();
    let mut take = |count: usize| -> VectorField { (0..count).map(|_| real.next().unwrap()).collect() };
    let grad_p = take(d);
    let grad_t = take(d);
    let grad_i0 = take(d);
    let grad_u = take(d * d); // index b*d + a -> d_a u_b
    let lap_e = take(1).pop().unwrap();
    let div_i1 = take(1).pop().unwrap();
    let visc = take(d);

    let du = |b: usize, a: usize| &grad_u[b * d + a];
    let mut div_u = vec![0.0; n];
    for a in 0..d {
        field::axpy(&mut div_u, 1.0, du(a, a));
    }
    // Psi(u) : grad u = 2 mu |D(u)|^2 + lambda (div u)^2
    let mut dissipation = field::map(&div_u, |x| lam * x * x);
    for a in 0..d {
        for b in 0..d {
            let (x, y) = (du(b, a), du(a, b));
            for i in 0..n {
                let s = 0.5 * (x[i] + y[i]);
                dissipation[i] += 2.0 * mu * s * s;
            }
        }
    }
    let i1_dot_u = field::dot(&state.i1, &state.u);
    let adv = |grad: &[Field]| -> Field { field::dot(&state.u, grad) };

    let damp = params.damping();
    let pw = params.pressure_work_coeff();
    let tw = params.temperature_work_coeff();

    let adv_p = adv(&grad_p);
    let mut p_t = vec![0.0; n];
    for i in 0..n {
        let bracket = kappa / eps * lap_e[i] + eps * dissipation[i] + (state.i0[i] - e4[i]) - pw * i1_dot_u[i];
        p_t[i] = -adv_p[i] - 2.0 / eps * div_u[i] + e_minus_p[i] * bracket;
    }
    let p_t = checked("pressure equation", p_t)?;

    let mut u_t = Vec::with_capacity(d);
    for a in 0..d {
        let mut c = vec![0.0; n];
        for i in 0..n {
            let conv: f64 = (0..d).map(|b| state.u[b][i] * du(a, b)[i]).sum();
            c[i] = -conv - e_theta[i] * grad_p[a][i] / eps
                + e_theta[i] * e_minus_p[i] * (visc[a][i] + damp * state.i1[a][i]);
        }
        u_t.push(checked("momentum equation", c)?);
    }

    let adv_t = adv(&grad_t);
    let mut t_t = vec![0.0; n];
    for i in 0..n {
        let bracket = kappa * lap_e[i] + eps * eps * dissipation[i] + eps * (state.i0[i] - e4[i]) - tw * i1_dot_u[i];
        t_t[i] = -adv_t[i] - div_u[i] + e_minus_p[i] * bracket;
    }
    let t_t = checked("temperature equation", t_t)?;

    let i0_t = checked(
        "radiative energy equation",
        (0..n).map(|i| -div_i1[i] / eps + e4[i] - state.i0[i]).collect(),
    )?;
    let mut i1_t = Vec::with_capacity(d);
    for a in 0..d {
        i1_t.push(checked(
            "radiative flux equation",
            (0..n)
                .map(|i| -grad_i0[a][i] / (3.0 * eps) - damp * state.i1[a][i])
                .collect(),
        )?);
    }

    let mut out = vec![p_t];
    out.extend(u_t);
    out.push(t_t);
    out.push(i0_t);
    out.extend(i1_t);
    let mut spectra = vec![hats[0].clone()];
    spectra.extend(uh.iter().cloned());
    spectra.push(hats[1].clone());
    spectra.push(hats[3].clone());
    spectra.extend(i1h.iter().cloned());
    Ok((out, spectra))
}

/// Admissible explicit step for the remainder at the current state, before
/// any safety factor.
pub fn admissible_dt(sp: &Spectral, state: &FullState, params: &ScaledParameters, scheme: StageScheme) -> f64 {
    let g = sp.grid();
    let eps = params.epsilon;
    let ec = params.theta_c.exp();
    let mut kmax: f64 = 0.0;
    let mut kmax2: f64 = 0.0;
    for a in 0..g.dim {
        let k = 2.0 * std::f64::consts::PI / g.extent[a] * g.dealias_cutoff(a) as f64;
        kmax = kmax.max(k);
        kmax2 += k * k;
    }
    let umax = field::max_abs_vec(&state.u);
    let c0 = (2.0 * ec).sqrt();
    let mut dc: f64 = 0.0;
    let mut dcoef: f64 = 0.0;
    for i in 0..g.len() {
        dc = dc.max(((2.0 * state.theta[i].exp()).sqrt() - c0).abs());
        let w = (state.theta[i] - eps * state.p[i]).exp();
        dcoef = dcoef.max((w - ec).abs());
    }
    let speed = umax * g.dim as f64 + dc / eps;
    let nu = dcoef * params.kappa.max(2.0 * params.mu + params.lambda.abs());
    let relax = dcoef * params.damping();
    let rate = speed * kmax + nu * kmax2 + relax;
    if rate <= 0.0 {
        f64::INFINITY
    } else {
        scheme.stability_radius() / rate
    }
}

/// Linear generators and their exponentials for every mode of one grid.
pub struct StiffOperator {
    layout: Layout,
    generators: Vec<DMatrix<Complex64>>,
    propagators: Vec<(f64, Vec<DMatrix<Complex64>>)>,
}

impl StiffOperator {
    pub fn new(sp: &Spectral, params: &ScaledParameters) -> Self {
        let dim = sp.grid().dim;
        let generators = (0..sp.len())
            .into_par_iter()
            .map(|idx| linearized_stiff_matrix(sp.wavevector(idx), dim, params).matrix)
            .collect();
        StiffOperator {
            layout: Layout { dim },
            generators,
            propagators: Vec::new(),
        }
    }

    fn propagators(&mut self, dt: f64) -> &[DMatrix<Complex64>] {
        if let Some(pos) = self.propagators.iter().position(|(h, _)| *h == dt) {
            return &self.propagators[pos].1;
        }
        let scale = Complex64::new(dt, 0.0);
        let mats: Vec<DMatrix<Complex64>> = self
            .generators
            .par_iter()
            .map(|a| (a * scale).exp())
            .collect();
        self.propagators.push((dt, mats));
        &self.propagators.last().unwrap().1
    }

    fn apply(mats: &[DMatrix<Complex64>], hats: &mut [Spectrum]) {
        let m = hats.len();
        let n = hats[0].len();
        let mut x = vec![Complex64::default(); m];
        for idx in 0..n {
            for c in 0..m {
                x[c] = hats[c][idx];
            }
            let a = mats[idx].as_slice();
            for r in 0..m {
                let mut s = Complex64::default();
                for c in 0..m {
                    s += a[c * m + r] * x[c];
                }
                hats[r][idx] = s;
            }
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }
}

/// Stateful stepper that caches plans, generators and propagators.
pub struct ImexSolver {
    sp: Spectral,
    params: ScaledParameters,
    stiff: StiffOperator,
    background: Vec<Field>,
}

impl ImexSolver {
    pub fn new(grid: &PeriodicGrid, params: &ScaledParameters) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        let sp = Spectral::new(grid);
        let stiff = StiffOperator::new(&sp, params);
        let eq = make_equilibrium(grid, params);
        let background = eq.components().into_iter().cloned().collect();
        Ok(ImexSolver {
            sp,
            params: *params,
            stiff,
            background,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    fn deviation_hats(&self, comps: &[Field]) -> Vec<Spectrum> {
        let dev: Vec<Field> = comps
            .iter()
            .zip(&self.background)
            .map(|(c, b)| field::sub(c, b))
            .collect();
        let refs: Vec<&[f64]> = dev.iter().map(|c| c.as_slice()).collect();
        self.sp.forward_many(&refs)
    }

    /// Right-hand side minus its linear part, dealiased.
    pub fn remainder(&self, state: &FullState) -> Result<Vec<Field>> {
        let (rhs, mut dev) = rhs_and_spectra(&self.sp, state, &self.params)?;
        // deviations from a constant background differ only in the mean mode
        let n = self.sp.len() as f64;
        for (d, b) in dev.iter_mut().zip(&self.background) {
            d[0] -= Complex64::new(b[0] * n, 0.0);
        }
        let refs: Vec<&[f64]> = rhs.iter().map(|c| c.as_slice()).collect();
        let mut rh = self.sp.forward_many(&refs);
        let m = rh.len();
        let mut x = vec![Complex64::default(); m];
        for idx in 0..self.sp.len() {
            if !self.sp.kept_by_dealias(idx) {
                for r in rh.iter_mut() {
                    r[idx] = Complex64::default();
                }
                continue;
            }
            for c in 0..m {
                x[c] = dev[c][idx];
            }
            let a = self.stiff.generators[idx].as_slice();
            for (r, row) in rh.iter_mut().enumerate() {
                let mut s = Complex64::default();
                for c in 0..m {
                    // column-major storage
                    s += a[c * m + r] * x[c];
                }
                row[idx] -= s;
            }
        }
        Ok(self.sp.inverse_many(rh))
    }

    fn explicit(&self, state: &FullState, h: f64, scheme: StageScheme) -> Result<FullState> {
        let comps: Vec<Field> = state.components().into_iter().cloned().collect();
        let shifted = |base: &[Field], k: &[Field], s: f64| -> FullState {
            let c: Vec<Field> = base.iter().zip(k).map(|(b, k)| field::zip(b, k, |x, y| x + s * y)).collect();
            FullState::from_components(state.grid, c, state.time)
        };
        let combine = |ks: &[(&[Field], f64)]| -> Vec<Field> {
            let mut out = comps.clone();
            for (k, w) in ks {
                for (o, kc) in out.iter_mut().zip(k.iter()) {
                    field::axpy(o, *w, kc);
                }
            }
            out
        };
        let next = match scheme {
            StageScheme::Rk2 => {
                let k1 = self.remainder(state)?;
                let k2 = self.remainder(&shifted(&comps, &k1, 0.5 * h))?;
                combine(&[(&k2, h)])
            }
            StageScheme::Rk4 => {
                let k1 = self.remainder(state)?;
                let k2 = self.remainder(&shifted(&comps, &k1, 0.5 * h))?;
                let k3 = self.remainder(&shifted(&comps, &k2, 0.5 * h))?;
                let k4 = self.remainder(&shifted(&comps, &k3, h))?;
                combine(&[(&k1, h / 6.0), (&k2, h / 3.0), (&k3, h / 3.0), (&k4, h / 6.0)])
            }
        };
        Ok(FullState::from_components(state.grid, next, state.time))
    }

    fn linear(&mut self, state: &FullState, dt: f64) -> FullState {
        let comps: Vec<Field> = state.components().into_iter().cloned().collect();
        let mut hats = self.deviation_hats(&comps);
        let mats = self.stiff.propagators(dt);
        StiffOperator::apply(mats, &mut hats);
        let dev = self.sp.inverse_many(hats);
        let next: Vec<Field> = dev.iter().zip(&self.background).map(|(d, b)| field::add(d, b)).collect();
        FullState::from_components(state.grid, next, state.time)
    }

    pub fn admissible_dt(&self, state: &FullState, scheme: StageScheme) -> f64 {
        admissible_dt(&self.sp, state, &self.params, scheme)
    }

    pub fn step(&mut self, state: &FullState, config: &SolverConfig) -> Result<FullState> {
        let dt = config.dt;
        let limit = self.admissible_dt(state, config.scheme);
        if dt > limit {
            return Err(Error::CflViolation {
                dt,
                admissible: config.cfl * limit,
            });
        }
        let mut s = match config.splitting {
            Splitting::Strang => {
                let a = self.explicit(state, 0.5 * dt, config.scheme)?;
                let b = self.linear(&a, dt);
                self.explicit(&b, 0.5 * dt, config.scheme)?
            }
            Splitting::Lie => {
                let a = self.explicit(state, dt, config.scheme)?;
                self.linear(&a, dt)
            }
        };
        s.time = state.time + dt;
        for c in s.components() {
            if !field::all_finite(c) {
                return Err(Error::NumericOverflow {
                    term: "state after step".into(),
                });
            }
        }
        Ok(s)
    }
}

/// One splitting step (builds the operator cache; use [`ImexSolver`] for runs).
pub fn imex_step(state: &FullState, config: &SolverConfig, params: &ScaledParameters) -> Result<FullState> {
    config.validate()?;
    ImexSolver::new(&state.grid, params)?.step(state, config)
}

/// Integrate from `initial` to `config.t_end`, recording a snapshot every
/// `snapshot_interval`.
pub fn simulate(
    grid: &PeriodicGrid,
    params: &ScaledParameters,
    config: &SolverConfig,
    initial: &FullState,
) -> Result<Trajectory> {
    config.validate()?;
    initial.validate()?;
    if initial.grid != *grid {
        return Err(Error::Validation(vec!["initial data lives on another grid".into()]));
    }
    let per_snap = config.steps_per_snapshot()?;
    let n_snaps = (config.t_end / config.snapshot_interval).round() as usize;
    let mut solver = ImexSolver::new(grid, params)?;
    let guard = config.guard_factor * initial.max_abs().max(1.0);
    let mut state = initial.clone();
    state.time = 0.0;
    let mut snapshots = vec![state.clone()];
    let mut status = RunStatus::Complete;
    let mut steps = 0;
    'outer: for s in 1..=n_snaps {
        for _ in 0..per_snap {
            state = solver.step(&state, config)?;
            steps += 1;
            let size = state.max_abs();
            if size > guard {
                status = RunStatus::Unstable {
                    time: state.time,
                    reason: format!("field size {size:.3e} exceeded guard {guard:.3e}"),
                };
                break 'outer;
            }
        }
        state.time = s as f64 * config.snapshot_interval;
        snapshots.push(state.clone());
    }
    Ok(Trajectory {
        parameters: *params,
        snapshots,
        metadata: RunMetadata {
            dt: config.dt,
            steps,
            splitting: format!("{:?}", config.splitting).to_lowercase(),
            scheme: format!("{:?}", config.scheme).to_lowercase(),
            snapshot_interval: config.snapshot_interval,
        },
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{make_initial_data, InitialRecipe, Preparedness};

    #[test]
    fn zero_mode_damping_entry() {
        let p = ScaledParameters::new(0.5, 2.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        let b = linearized_stiff_matrix([0.0; 3], 2, &p);
        let l = Layout { dim: 2 };
        assert_eq!(b.matrix[(l.i1(0), l.i1(0))].re, -5.0);
        assert_eq!(b.matrix[(l.i0(), l.theta())].re, 4.0);
        assert_eq!(b.matrix[(l.i0(), l.i0())].re, -1.0);
    }

    #[test]
    fn zero_generator_gives_identity() {
        let b = StiffBlock {
            k: [0.0; 3],
            dim: 1,
            matrix: DMatrix::zeros(5, 5),
        };
        let e = stiff_propagator(&b, 0.3);
        assert!((e - DMatrix::<Complex64>::identity(5, 5)).norm() < 1e-15);
    }

    #[test]
    fn rotation_block_closed_form() {
        let w = 3.0;
        let dt = 0.7;
        let mut m = DMatrix::<Complex64>::zeros(2, 2);
        m[(0, 1)] = Complex64::new(-w, 0.0);
        m[(1, 0)] = Complex64::new(w, 0.0);
        let e = stiff_propagator(&StiffBlock { k: [0.0; 3], dim: 0, matrix: m }, dt);
        let (c, s) = ((w * dt).cos(), (w * dt).sin());
        assert!((e[(0, 0)].re - c).abs() < 1e-13);
        assert!((e[(0, 1)].re + s).abs() < 1e-13);
        assert!((e[(1, 0)].re - s).abs() < 1e-13);
    }

    #[test]
    fn equilibrium_has_zero_tendency() {
        let g = PeriodicGrid::cube(2, 2.0 * std::f64::consts::PI, 16).unwrap();
        let p = ScaledParameters::new(0.1, 2.0, 0.5, 0.5, 0.0, 0.3).unwrap();
        let sp = Spectral::new(&g);
        let r = scaled_rhs(&sp, &make_equilibrium(&g, &p), &p).unwrap();
        assert!(r.iter().all(|c| field::max_abs(c) < 1e-13));
    }

    #[test]
    fn overflow_is_named() {
        let g = PeriodicGrid::cube(2, 1.0, 8).unwrap();
        let p = ScaledParameters::default();
        let mut s = make_equilibrium(&g, &p);
        s.theta[3] = 400.0;
        match scaled_rhs(&Spectral::new(&g), &s, &p) {
            Err(Error::NumericOverflow { term }) => assert!(term.contains("theta")),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn oversized_step_rejected() {
        let g = PeriodicGrid::cube(2, 2.0 * std::f64::consts::PI, 16).unwrap();
        let p = ScaledParameters::default();
        let s = make_initial_data(
            &g,
            &p,
            &InitialRecipe {
                preparedness: Preparedness::General,
                amplitude: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = SolverConfig {
            dt: 10.0,
            ..Default::default()
        };
        assert!(matches!(imex_step(&s, &cfg, &p), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn snapshot_interval_must_divide() {
        let mut c = SolverConfig {
            dt: 0.003,
            snapshot_interval: 0.01,
            ..Default::default()
        };
        assert!(c.steps_per_snapshot().is_err());
        c.fit_dt(0.006);
        assert_eq!(c.steps_per_snapshot().unwrap(), 4);
    }
}

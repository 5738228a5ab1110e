//! Full-system state, initial data recipes and trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, Field, VectorField};
use crate::grid::PeriodicGrid;
use crate::params::ScaledParameters;
use crate::spectral::{PoissonOptions, Spectral};

/// The unknowns `(p, u, theta, I0, I1)` on one grid at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub grid: PeriodicGrid,
    pub p: Field,
    pub u: VectorField,
    pub theta: Field,
    pub i0: Field,
    pub i1: VectorField,
    pub time: f64,
}

impl FullState {
    /// Number of scalar components, `2 dim + 3`.
    pub fn n_components(dim: usize) -> usize {
        2 * dim + 3
    }

    /// Components in the order `p, u_0.., theta, I0, I1_0..`.
    pub fn components(&self) -> Vec<&Field> {
        let mut out = vec![&self.p];
        out.extend(self.u.iter());
        out.push(&self.theta);
        out.push(&self.i0);
        out.extend(self.i1.iter());
        out
    }

    pub fn from_components(grid: PeriodicGrid, mut comps: Vec<Field>, time: f64) -> Self {
        let d = grid.dim;
        assert_eq!(comps.len(), Self::n_components(d));
        let i1 = comps.split_off(d + 3);
        let i0 = comps.pop().unwrap();
        let theta = comps.pop().unwrap();
        let u = comps.split_off(1);
        let p = comps.pop().unwrap();
        FullState {
            grid,
            p,
            u,
            theta,
            i0,
            i1,
            time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        let d = self.grid.dim;
        if self.u.len() != d || self.i1.len() != d {
            return Err(Error::Validation(vec!["vector fields need dim components".into()]));
        }
        for (i, c) in self.components().into_iter().enumerate() {
            if c.len() != n {
                return Err(Error::Validation(vec![format!("component {i} has wrong length")]));
            }
            if !field::all_finite(c) {
                return Err(Error::NumericOverflow {
                    term: format!("state component {i}"),
                });
            }
        }
        Ok(())
    }

    /// Largest pointwise difference over all components.
    pub fn max_deviation(&self, other: &FullState) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.components().iter().map(|c| field::max_abs(c)).fold(0.0, f64::max)
    }

    /// Physical pressure `exp(eps p)` and temperature `exp(theta)`.
    pub fn physical_pressure(&self, params: &ScaledParameters) -> Field {
        field::map(&self.p, |p| (params.epsilon * p).exp())
    }

    pub fn physical_temperature(&self) -> Field {
        field::exp(&self.theta)
    }
}

/// The constant background state: `p = 0, u = 0, theta = theta_c, I0 = I_c, I1 = 0`.
pub fn make_equilibrium(grid: &PeriodicGrid, params: &ScaledParameters) -> FullState {
    let n = grid.len();
    let d = grid.dim;
    FullState {
        grid: *grid,
        p: field::zeros(n),
        u: field::zero_vector(d, n),
        theta: field::constant(n, params.theta_c),
        i0: field::constant(n, params.i_c),
        i1: field::zero_vector(d, n),
        time: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preparedness {
    /// Fast components `p~` and `div u~` vanish at t = 0 and the radiation
    /// flux starts in its relaxed state.
    WellPrepared,
    /// Arbitrary fluid data; radiation flux relaxed so `dI1/dt = 0` at t = 0.
    PartialGeneral,
    /// Every field taken as given.
    General,
}

impl std::str::FromStr for Preparedness {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "well-prepared" => Ok(Preparedness::WellPrepared),
            "partial-general" => Ok(Preparedness::PartialGeneral),
            "general" => Ok(Preparedness::General),
            other => Err(Error::Config(format!("unknown preparedness `{other}`"))),
        }
    }
}

/// Relative weights of the perturbation in each unknown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldWeights {
    pub p: f64,
    pub u: f64,
    pub theta: f64,
    pub i0: f64,
    pub i1: f64,
}

impl FieldWeights {
    pub const ZERO: FieldWeights = FieldWeights {
        p: 0.0,
        u: 0.0,
        theta: 0.0,
        i0: 0.0,
        i1: 0.0,
    };
    pub const ONE: FieldWeights = FieldWeights {
        p: 1.0,
        u: 1.0,
        theta: 1.0,
        i0: 1.0,
        i1: 1.0,
    };
}

/// Smooth band-limited perturbation of equilibrium.
///
/// Each unknown gets an independent random trigonometric polynomial with
/// modes `|m_a| <= max_mode`, normalised to unit maximum and scaled by
/// `amplitude * weight`. The optional `eps_weights` add a second independent
/// perturbation proportional to ε, which is how a family of data converging
/// to its limit at a known rate is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialRecipe {
    pub amplitude: f64,
    pub max_mode: i64,
    pub preparedness: Preparedness,
    pub seed: u64,
    pub weights: FieldWeights,
    pub eps_weights: FieldWeights,
    /// Replace the ε-independent radiative flux by its divergence-free part.
    pub solenoidal_flux: bool,
}

impl Default for InitialRecipe {
    fn default() -> Self {
        InitialRecipe {
            amplitude: 0.1,
            max_mode: 2,
            preparedness: Preparedness::WellPrepared,
            seed: 7,
            weights: FieldWeights::ONE,
            eps_weights: FieldWeights::ZERO,
            solenoidal_flux: false,
        }
    }
}

/// Data from which both the ε-family and the limit problem start.
#[derive(Debug, Clone)]
pub struct BaseData {
    pub p: Field,
    pub u: VectorField,
    pub theta: Field,
    pub i0: Field,
    pub i1: VectorField,
}

/// Random trigonometric polynomial with unit maximum.
fn random_profile(grid: &PeriodicGrid, max_mode: i64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim;
    let mut terms: Vec<([f64; 3], f64, f64)> = Vec::new();
    let span = 2 * max_mode + 1;
    let count = span.pow(d as u32);
    for c in 0..count {
        let mut m = [0i64; 3];
        let mut r = c;
        for slot in m.iter_mut().take(d) {
            *slot = r % span - max_mode;
            r /= span;
        }
        // one representative of each +-m pair, skipping the mean
        let first_nonzero = m.iter().take(d).find(|&&x| x != 0);
        match first_nonzero {
            Some(&x) if x > 0 => {}
            _ => continue,
        }
        let m2: i64 = m.iter().map(|x| x * x).sum();
        let w = 1.0 / (1.0 + m2 as f64);
        let a: f64 = rng.gen_range(-1.0..1.0) * w;
        let b: f64 = rng.gen_range(-1.0..1.0) * w;
        let mut k = [0.0; 3];
        for ax in 0..d {
            k[ax] = 2.0 * std::f64::consts::PI / grid.extent[ax] * m[ax] as f64;
        }
        terms.push((k, a, b));
    }
    let f = grid.sample(|x| {
        terms
            .iter()
            .map(|(k, a, b)| {
                let phase = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
                a * phase.cos() + b * phase.sin()
            })
            .sum()
    });
    let m = field::max_abs(&f);
    if m > 0.0 {
        field::scale(&f, 1.0 / m)
    } else {
        f
    }
}

impl InitialRecipe {
    pub fn validate(&self, grid: &PeriodicGrid) -> Result<()> {
        if self.max_mode < 1 {
            return Err(Error::Config("max_mode must be at least 1".into()));
        }
        for a in 0..grid.dim {
            if self.max_mode > grid.dealias_cutoff(a) {
                return Err(Error::Config(format!(
                    "mode {} lies outside the dealiased band (cutoff {}) on axis {a}",
                    self.max_mode,
                    grid.dealias_cutoff(a)
                )));
            }
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Config("amplitude must be finite".into()));
        }
        Ok(())
    }

    fn profiles(&self, grid: &PeriodicGrid, w: &FieldWeights, salt: u64) -> BaseData {
        let d = grid.dim;
        let seed = self.seed.wrapping_mul(1_000_003).wrapping_add(salt * 101);
        let a = self.amplitude;
        let prof = |tag: u64, weight: f64| -> Field {
            if weight == 0.0 || a == 0.0 {
                vec![0.0; grid.len()]
            } else {
                field::scale(&random_profile(grid, self.max_mode, seed + tag), a * weight)
            }
        };
        BaseData {
            p: prof(1, w.p),
            u: (0..d).map(|c| prof(10 + c as u64, w.u)).collect(),
            theta: prof(2, w.theta),
            i0: prof(3, w.i0),
            i1: (0..d).map(|c| prof(20 + c as u64, w.i1)).collect(),
        }
    }

    /// The ε-independent perturbation (offsets from equilibrium), shared by
    /// the full system and its limit.
    pub fn base(&self, grid: &PeriodicGrid) -> BaseData {
        let mut b = self.profiles(grid, &self.weights, 0);
        if self.solenoidal_flux {
            b.i1 = Spectral::new(grid).project_solenoidal(&b.i1);
        }
        b
    }
}

/// Relaxed radiation flux: `I1 = -grad I0 / (3 eps (1 + eps^-delta))`, the
/// value for which the flux equation has no initial transient.
pub fn relaxed_flux(sp: &Spectral, i0: &[f64], params: &ScaledParameters) -> VectorField {
    let c = -1.0 / (3.0 * params.epsilon * params.damping());
    sp.gradient(i0).iter().map(|g| field::scale(g, c)).collect()
}

/// Build initial data for the full system from a recipe.
pub fn make_initial_data(
    grid: &PeriodicGrid,
    params: &ScaledParameters,
    recipe: &InitialRecipe,
) -> Result<FullState> {
    recipe.validate(grid)?;
    params.validate()?;
    let sp = Spectral::new(grid);
    let base = recipe.base(grid);
    let eps = params.epsilon;
    let pert = recipe.profiles(grid, &recipe.eps_weights, 1);
    let with_pert = |b: &[f64], q: &[f64]| field::zip(b, q, |x, y| x + eps * y);

    let theta: Field = field::map(&with_pert(&base.theta, &pert.theta), |x| x + params.theta_c);
    let i0: Field = field::map(&with_pert(&base.i0, &pert.i0), |x| x + params.i_c);
    let mut p = with_pert(&base.p, &pert.p);
    let mut u: VectorField = base.u.iter().zip(&pert.u).map(|(b, q)| with_pert(b, q)).collect();
    let mut i1: VectorField = base.i1.iter().zip(&pert.i1).map(|(b, q)| with_pert(b, q)).collect();

    match recipe.preparedness {
        Preparedness::General => {}
        Preparedness::PartialGeneral => {
            i1 = relaxed_flux(&sp, &i0, params);
        }
        Preparedness::WellPrepared => {
            i1 = relaxed_flux(&sp, &i0, params);
            p = prepared_pressure(&i0, params);
            u = prepared_velocity(&sp, &u, &theta, &p, params)?;
        }
    }
    let s = FullState {
        grid: *grid,
        p,
        u,
        theta,
        i0,
        i1,
        time: 0.0,
    };
    s.validate()?;
    Ok(s)
}

/// Pointwise fixed point of `p = -exp(-eps p) (I0 - I_c) / 3`, which makes
/// the equivalent pressure vanish.
pub fn prepared_pressure(i0: &[f64], params: &ScaledParameters) -> Field {
    let eps = params.epsilon;
    i0.iter()
        .map(|&e| {
            let q = (e - params.i_c) / 3.0;
            let mut p = -q;
            for _ in 0..200 {
                let next = -(-eps * p).exp() * q;
                if (next - p).abs() <= 1e-16 * (1.0 + p.abs()) {
                    p = next;
                    break;
                }
                p = next;
            }
            p
        })
        .collect()
}

/// Velocity with `2 div u = kappa div(exp(-eps p + theta) grad theta)` whose
/// transformed vorticity `curl(exp(-theta) u)` matches that of `base`.
pub fn prepared_velocity(
    sp: &Spectral,
    base: &[Field],
    theta: &[f64],
    p: &[f64],
    params: &ScaledParameters,
) -> Result<VectorField> {
    let eps = params.epsilon;
    let w = field::zip(p, theta, |p, t| (-eps * p + t).exp());
    let flux: VectorField = sp.gradient(theta).iter().map(|g| field::mul(g, &w)).collect();
    let target = field::scale(&sp.divergence(&flux), 0.5 * params.kappa);
    crate::limit::reconstruct_velocity(sp, base, theta, &target, &PoissonOptions::default())
}

/// Run status of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    /// Blow-up guard or non-finite values; snapshots end at the last healthy one.
    Unstable { time: f64, reason: String },
}

/// Solver settings recorded alongside a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunMetadata {
    pub dt: f64,
    pub steps: usize,
    pub splitting: String,
    pub scheme: String,
    pub snapshot_interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub parameters: ScaledParameters,
    pub snapshots: Vec<FullState>,
    pub metadata: RunMetadata,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// Snapshot spacing, checking it is uniform.
    pub fn spacing(&self) -> Result<f64> {
        uniform_spacing(&self.times())
    }
}

/// Common spacing of a strictly increasing time list (relative tolerance 1e-12
/// on the spacing, scaled by the final time).
pub fn uniform_spacing(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Window {
            needed: 2,
            found: times.len(),
        });
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let scale = times.iter().fold(h, |m, t| m.max(t.abs()));
    for w in times.windows(2) {
        if !(w[1] > w[0]) || ((w[1] - w[0]) - h).abs() > 1e-12 * scale.max(1.0) * 10.0 {
            return Err(Error::Validation(vec!["snapshot times are not uniformly spaced".into()]));
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64) -> ScaledParameters {
        ScaledParameters::new(eps, 2.0, 0.5, 0.5, 0.0, 0.0).unwrap()
    }

    #[test]
    fn equilibrium_fields() {
        let g = PeriodicGrid::default_2d();
        let p = ScaledParameters::new(0.1, 2.0, 1.0, 1.0, 0.0, 0.25).unwrap();
        let s = make_equilibrium(&g, &p);
        assert!(s.i0.iter().all(|&x| x == 1.0_f64.exp()));
        assert!(s.p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_amplitude_gives_equilibrium() {
        let g = PeriodicGrid::default_2d();
        let p = params(0.1);
        for prep in [Preparedness::General, Preparedness::PartialGeneral, Preparedness::WellPrepared] {
            let r = InitialRecipe {
                amplitude: 0.0,
                preparedness: prep,
                ..Default::default()
            };
            let s = make_initial_data(&g, &p, &r).unwrap();
            assert!(s.max_deviation(&make_equilibrium(&g, &p)) < 1e-15);
        }
    }

    #[test]
    fn general_data_independent_of_epsilon() {
        let g = PeriodicGrid::default_2d();
        let r = InitialRecipe {
            amplitude: 1.0,
            preparedness: Preparedness::General,
            ..Default::default()
        };
        let a = make_initial_data(&g, &params(0.1), &r).unwrap();
        let b = make_initial_data(&g, &params(0.05), &r).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn modes_outside_band_rejected() {
        let g = PeriodicGrid::cube(2, 1.0, 16).unwrap();
        let r = InitialRecipe {
            max_mode: 6,
            ..Default::default()
        };
        assert!(matches!(make_initial_data(&g, &params(0.1), &r), Err(Error::Config(_))));
    }

    #[test]
    fn component_round_trip() {
        let g = PeriodicGrid::cube(3, 1.0, 8).unwrap();
        let s = make_initial_data(
            &g,
            &params(0.2),
            &InitialRecipe {
                preparedness: Preparedness::General,
                ..Default::default()
            },
        )
        .unwrap();
        let comps: Vec<Field> = s.components().into_iter().cloned().collect();
        assert_eq!(FullState::from_components(g, comps, s.time), s);
    }
}

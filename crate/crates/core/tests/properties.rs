//! Property tests over randomly drawn inputs.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsfp1_core::diagnostics::{self, StencilOrder};
use nsfp1_core::field::{self, Field};
use nsfp1_core::foundations::{self, Group, PhysicalScales};
use nsfp1_core::harness::random_band_limited;
use nsfp1_core::limit;
use nsfp1_core::solver::{linearized_stiff_matrix, stiff_propagator, Layout, StiffBlock};
use nsfp1_core::state::{make_initial_data, InitialRecipe, Preparedness};
use nsfp1_core::wave::{self, Sponge, WaveConfig};
use nsfp1_core::{PeriodicGrid, ScaledParameters, Spectral};

fn band_field(sp: &Spectral, band: i64, seed: u64) -> Field {
    random_band_limited(sp, band, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn band_vector(sp: &Spectral, band: i64, seed: u64) -> Vec<Field> {
    (0..sp.grid().dim).map(|a| band_field(sp, band, seed.wrapping_mul(31).wrapping_add(a as u64))).collect()
}

fn grid_for(dim: usize) -> PeriodicGrid {
    let n = if dim == 3 { 12 } else { 16 };
    PeriodicGrid::cube(dim, 2.0 * PI, n).unwrap()
}

/// Cyclic shift by whole cells along every axis.
fn roll(grid: &PeriodicGrid, f: &[f64], shift: [usize; 3]) -> Field {
    let mut out = vec![0.0; f.len()];
    for (i, v) in f.iter().enumerate() {
        let mut ix = grid.unravel(i);
        for a in 0..grid.dim {
            ix[a] = (ix[a] + shift[a]) % grid.points[a];
        }
        out[grid.ravel(ix)] = *v;
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    field::max_abs(&field::sub(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_norm_splits_into_divergence_and_curl(seed in any::<u64>(), dim in 2usize..=3, band in 1i64..=4) {
        let sp = Spectral::new(&grid_for(dim));
        let v = band_vector(&sp, band, seed);
        let grad_sq: f64 = v.iter().map(|c| sp.l2_norm_vec(&sp.gradient(c)).powi(2)).sum();
        let div_sq = sp.l2_norm(&sp.divergence(&v)).powi(2);
        let curl_sq = sp.l2_norm_vec(&sp.curl(&v).unwrap()).powi(2);
        prop_assert!((grad_sq - div_sq - curl_sq).abs() <= 1e-10 * grad_sq);
    }

    #[test]
    fn divergence_of_gradient_is_laplacian(seed in any::<u64>(), dim in 1usize..=3, band in 1i64..=4) {
        let sp = Spectral::new(&grid_for(dim));
        let phi = band_field(&sp, band, seed);
        let lhs = sp.divergence(&sp.gradient(&phi));
        prop_assert!(max_diff(&lhs, &sp.laplacian(&phi)) <= 1e-11 * (1.0 + field::max_abs(&lhs)));
    }

    #[test]
    fn helmholtz_parts_are_idempotent_and_orthogonal(seed in any::<u64>(), dim in 2usize..=3) {
        let sp = Spectral::new(&grid_for(dim));
        let v = band_vector(&sp, 3, seed);
        let h = sp.helmholtz(&v);
        let again = sp.helmholtz(&h.solenoidal);
        let again_grad = sp.helmholtz(&h.gradient);
        let mut inner = 0.0;
        for a in 0..dim {
            prop_assert!(max_diff(&again.solenoidal[a], &h.solenoidal[a]) <= 1e-12);
            prop_assert!(field::max_abs(&again.gradient[a]) <= 1e-12);
            prop_assert!(max_diff(&again_grad.gradient[a], &h.gradient[a]) <= 1e-12);
            inner += sp.inner(&h.gradient[a], &h.solenoidal[a]);
            let sum: Field = (0..v[a].len()).map(|i| h.mean[a] + h.gradient[a][i] + h.solenoidal[a][i]).collect();
            prop_assert!(max_diff(&sum, &v[a]) <= 1e-12);
        }
        prop_assert!(inner.abs() <= 1e-10 * sp.l2_norm_vec(&v).powi(2));
    }

    #[test]
    fn operators_commute_with_grid_shifts(seed in any::<u64>(), dim in 1usize..=3, s0 in 0usize..16, s1 in 0usize..16, s2 in 0usize..16) {
        let grid = grid_for(dim);
        let sp = Spectral::new(&grid);
        let f = band_field(&sp, 4, seed);
        let shift = [s0, s1, s2];
        let shifted = roll(&grid, &f, shift);
        let lap = sp.laplacian(&f);
        prop_assert!(max_diff(&sp.laplacian(&shifted), &roll(&grid, &lap, shift)) <= 1e-11);
        let g = sp.gradient(&f);
        let gs = sp.gradient(&shifted);
        for a in 0..dim {
            prop_assert!(max_diff(&gs[a], &roll(&grid, &g[a], shift)) <= 1e-11);
        }
    }

    #[test]
    fn transforms_preserve_energy(seed in any::<u64>(), dim in 1usize..=3) {
        let sp = Spectral::new(&grid_for(dim));
        let f = band_field(&sp, 5, seed);
        let hat = sp.forward(&f);
        let n = sp.len() as f64;
        let spectral: f64 = hat.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let physical: f64 = f.iter().map(|x| x * x).sum();
        prop_assert!((spectral - physical).abs() <= 1e-12 * physical);
        prop_assert!(max_diff(&sp.inverse(hat), &f) <= 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stencils_differentiate_polynomials_exactly(
        coeffs in prop::collection::vec(-2.0f64..2.0, 5),
        t0 in -1.0f64..1.0,
        h in 0.01f64..0.2,
        fourth in any::<bool>(),
        k in 1usize..=2,
    ) {
        // second-order stencils are exact up to degree 2 (3 for the first
        // derivative), fourth-order ones up to degree 4 (5)
        let (order, degree) = if fourth { (StencilOrder::Fourth, 4) } else { (StencilOrder::Second, 2) };
        let c = &coeffs[..=degree];
        let value = |t: f64| c.iter().rev().fold(0.0, |acc, a| acc * t + a);
        let deriv = |t: f64, k: usize| -> f64 {
            c.iter().enumerate().skip(k).map(|(j, a)| {
                let fall: f64 = (0..k).map(|m| (j - m) as f64).product();
                a * fall * t.powi((j - k) as i32)
            }).sum()
        };
        let series: Vec<Vec<f64>> = (0..5).map(|j| vec![value(t0 + (j as f64 - 2.0) * h)]).collect();
        let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
        let d = diagnostics::time_derivative(&refs, 2, h, k, order).unwrap()[0];
        let exact = deriv(t0, k);
        prop_assert!((d - exact).abs() <= 1e-7 * (1.0 + exact.abs()), "{d} vs {exact}");
    }

    #[test]
    fn weighted_norm_never_exceeds_triple_norm(
        seed in any::<u64>(),
        eps in 0.01f64..=1.0,
        s in 1usize..=3,
        kmax in 0usize..=2,
        fourth in any::<bool>(),
    ) {
        let kmax = kmax.min(s);
        let sp = Spectral::new(&grid_for(2));
        let series: Vec<Vec<Field>> = (0..5).map(|j| vec![band_field(&sp, 3, seed.wrapping_add(j))]).collect();
        let order = if fourth { StencilOrder::Fourth } else { StencilOrder::Second };
        let w = diagnostics::weighted_norm(&sp, &series, 2, 0.1, s, eps, kmax, order).unwrap();
        let t = diagnostics::triple_norm(&sp, &series, 2, 0.1, s, eps, kmax, order).unwrap();
        prop_assert!(w <= t * (1.0 + 1e-14));
    }

    #[test]
    fn weighted_norm_reduces_to_sobolev_norm(seed in any::<u64>(), s in 0usize..=3) {
        let sp = Spectral::new(&grid_for(2));
        let f = band_field(&sp, 3, seed);
        let series = vec![vec![f.clone()]];
        let w = diagnostics::weighted_norm(&sp, &series, 0, 1.0, s, 1.0, 0, StencilOrder::Second).unwrap();
        prop_assert!((w - sp.sobolev_norm(&f, s)).abs() <= 1e-12 * w.max(1.0));
    }

    #[test]
    fn auxiliary_variables_round_trip(seed in any::<u64>(), eps in 0.01f64..=1.0, theta_c in -0.5f64..0.5) {
        let grid = PeriodicGrid::cube(2, 2.0 * PI, 8).unwrap();
        let params = ScaledParameters::new(eps, 2.0, 0.5, 0.5, 0.0, theta_c).unwrap();
        let recipe = InitialRecipe { seed, preparedness: Preparedness::General, ..Default::default() };
        let s = make_initial_data(&grid, &params, &recipe).unwrap();
        let aux = diagnostics::auxiliary_variables(&s, &params);
        let back = diagnostics::from_auxiliary(&aux, grid, &params, s.time);
        prop_assert!(back.max_deviation(&s) <= 1e-12 * (1.0 + 1.0 / eps));
    }
}

/// Change of variables to the symmetrised unknowns and the energy weights.
fn symmetrised(layout: Layout, eps: f64, theta_c: f64) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let m = layout.size();
    let mut s = DMatrix::<Complex64>::identity(m, m);
    s[(layout.p(), layout.p())] = Complex64::new(eps, 0.0);
    s[(layout.p(), layout.theta())] = Complex64::new(-1.0, 0.0);
    let mut w = DMatrix::<Complex64>::identity(m, m);
    for a in 0..layout.dim {
        s[(layout.u(a), layout.u(a))] = Complex64::new(eps, 0.0);
        w[(layout.u(a), layout.u(a))] = Complex64::new((-0.5 * theta_c).exp(), 0.0);
        w[(layout.i1(a), layout.i1(a))] = Complex64::new(3f64.sqrt(), 0.0);
    }
    (s, w)
}

/// Largest singular value of `exp(dt A)` in the symmetrised energy norm.
fn energy_gain(block: &StiffBlock, dt: f64, params: &ScaledParameters) -> f64 {
    let layout = Layout { dim: block.dim };
    let (s, w) = symmetrised(layout, params.epsilon, params.theta_c);
    let s_inv = s.clone().try_inverse().unwrap();
    let w_inv = w.clone().try_inverse().unwrap();
    let g = &w * &s * stiff_propagator(block, dt) * s_inv * w_inv;
    g.singular_values().max()
}

/// Removes the fluid-radiation exchange terms, leaving the acoustic-thermal
/// block and the radiation block.
fn decouple(block: &mut StiffBlock) {
    let l = Layout { dim: block.dim };
    let z = Complex64::default();
    block.matrix[(l.p(), l.i0())] = z;
    block.matrix[(l.theta(), l.i0())] = z;
    block.matrix[(l.i0(), l.theta())] = z;
    for a in 0..block.dim {
        block.matrix[(l.u(a), l.i1(a))] = z;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoupled_blocks_are_contractive(
        k in prop::array::uniform3(-6.0f64..6.0),
        dim in 1usize..=3,
        eps in 0.01f64..=1.0,
        delta in 0.0f64..=2.0,
        visc in 0.05f64..2.0,
        theta_c in -0.5f64..0.5,
        dt in 1e-3f64..0.5,
    ) {
        let params = ScaledParameters::new(eps, delta, visc, visc, visc, theta_c).unwrap();
        let mut block = linearized_stiff_matrix(k, dim, &params);
        decouple(&mut block);
        let gain = energy_gain(&block, dt, &params);
        prop_assert!(gain <= 1.0 + 1e-10, "gain {gain}");
    }

    #[test]
    fn relaxed_flux_defect_is_bounded_uniformly(eps in 0.01f64..=1.0, kx in -3.0f64..3.0, seed in any::<u64>()) {
        let params = ScaledParameters::default().with_epsilon(eps).unwrap();
        let block = linearized_stiff_matrix([kx, 1.0, 0.0], 2, &params);
        let l = Layout { dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = nalgebra::DVector::<Complex64>::from_fn(l.size(), |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let y = stiff_propagator(&block, 0.1) * &x0;
        let damp = params.damping();
        let mut defect = 0.0;
        for a in 0..2 {
            let ik = Complex64::new(0.0, block.k[a]);
            defect += (y[l.i1(a)] * damp + ik * y[l.i0()] / (3.0 * eps)).norm_sqr();
        }
        prop_assert!(defect.sqrt() <= RELAXED_FLUX_BOUND * x0.norm(), "defect {}", defect.sqrt() / x0.norm());
    }
}

/// Observed sup is about 2.6 for these wavevectors; it must not grow as eps shrinks.
const RELAXED_FLUX_BOUND: f64 = 5.0;

#[test]
fn exchange_terms_break_contractivity() {
    // the zero mode alone already shows the indefinite coupling
    let params = ScaledParameters::default();
    let block = linearized_stiff_matrix([0.0; 3], 2, &params);
    assert!(energy_gain(&block, 0.05, &params) > 1.0 + 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sponge_never_adds_energy(seed in any::<u64>(), width in 0.3f64..1.5, peak in 1.0f64..200.0, eps in 0.05f64..0.5) {
        let grid = PeriodicGrid::cube(2, 2.0 * PI, 32).unwrap();
        let sp = Spectral::new(&grid);
        let mut cfg = WaveConfig::homogeneous(grid, eps);
        cfg.sponge = Sponge { width, peak };
        cfg.t_end = 0.2;
        cfg.snapshot_interval = 0.02;
        let v0 = band_field(&sp, 4, seed);
        let v1 = band_field(&sp, 4, seed ^ 0x5a5a);
        let sol = wave::solve_wave(&cfg, &v0, &v1).unwrap();
        for w in sol.energy.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn initial_velocity_construction_is_idempotent(seed in any::<u64>(), kappa in 0.1f64..1.0) {
        let grid = PeriodicGrid::cube(2, 2.0 * PI, 16).unwrap();
        let sp = Spectral::new(&grid);
        let u0 = band_vector(&sp, 3, seed);
        let theta = field::scale(&band_field(&sp, 2, seed ^ 7), 0.1);
        let once = limit::construct_initial_velocity(&sp, &u0, &theta, kappa).unwrap();
        let twice = limit::construct_initial_velocity(&sp, &once, &theta, kappa).unwrap();
        for a in 0..2 {
            prop_assert!(max_diff(&once[a], &twice[a]) <= 1e-10);
        }
    }

    #[test]
    fn initial_data_is_deterministic(seed in any::<u64>(), general in any::<bool>()) {
        let grid = PeriodicGrid::cube(2, 2.0 * PI, 8).unwrap();
        let params = ScaledParameters::default();
        let preparedness = if general { Preparedness::General } else { Preparedness::WellPrepared };
        let recipe = InitialRecipe { seed, preparedness, ..Default::default() };
        let a = make_initial_data(&grid, &params, &recipe).unwrap();
        let b = make_initial_data(&grid, &params, &recipe).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn strouhal_number_is_scale_covariant(factor in 0.01f64..100.0) {
        let s = PhysicalScales::unit();
        let scaled = PhysicalScales { l_inf: s.l_inf * factor, t_inf: s.t_inf * factor, ..s };
        let a = foundations::dimensionless_numbers(&s).unwrap();
        let b = foundations::dimensionless_numbers(&scaled).unwrap();
        prop_assert!((a.st - b.st).abs() <= 1e-14 * a.st);
    }

    #[test]
    fn regime_label_ignores_insertion_order(
        orders in prop::array::uniform5(prop::sample::select(vec![-2.0, -1.0, -0.5, 0.0, 1.0, 2.0])),
        perm in Just(vec![0usize, 1, 2, 3, 4]).prop_shuffle(),
    ) {
        let forward: BTreeMap<Group, f64> = Group::ALL.iter().copied().zip(orders).collect();
        let mut shuffled = BTreeMap::new();
        for i in perm {
            shuffled.insert(Group::ALL[i], orders[i]);
        }
        prop_assert_eq!(foundations::classify_regime(&forward).ok(), foundations::classify_regime(&shuffled).ok());
    }
}

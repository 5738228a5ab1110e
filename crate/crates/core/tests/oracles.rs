//! Independent oracles: finite differences for the right-hand side and
//! adaptive Simpson quadrature for the Planck integral.

use std::f64::consts::PI;

use nsfp1_core::field::Field;
use nsfp1_core::foundations::{self, QuadratureSettings};
use nsfp1_core::solver::scaled_rhs;
use nsfp1_core::{FullState, PeriodicGrid, ScaledParameters, Spectral};

/// Fourth-order centred difference along `axis` on a 2D periodic grid.
fn fd(grid: &PeriodicGrid, f: &[f64], axis: usize) -> Field {
    let n = grid.points[axis] as isize;
    let h = grid.extent[axis] / n as f64;
    (0..f.len())
        .map(|i| {
            let ix = grid.unravel(i);
            let at = |off: isize| {
                let mut j = ix;
                j[axis] = ((ix[axis] as isize + off).rem_euclid(n)) as usize;
                f[grid.ravel(j)]
            };
            (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
        })
        .collect()
}

/// The scaled system evaluated with finite differences, written out term by
/// term with the viscous force as the divergence of the stress tensor.
fn fd_rhs(grid: &PeriodicGrid, s: &FullState, q: &ScaledParameters) -> Vec<Field> {
    let n = grid.len();
    let eps = q.epsilon;
    let damp = 1.0 + eps.powf(-q.delta);
    let pw = eps + eps.powf(1.0 - q.delta);
    let tw = eps * eps + eps.powf(2.0 - q.delta);
    let d = |f: &[f64], a: usize| fd(grid, f, a);
    let grad = |f: &[f64]| [d(f, 0), d(f, 1)];

    let e_theta: Field = s.theta.iter().map(|t| t.exp()).collect();
    let gp = grad(&s.p);
    let gt = grad(&s.theta);
    let gi0 = grad(&s.i0);
    // du[b][a] = d_a u_b
    let du = [grad(&s.u[0]), grad(&s.u[1])];
    let div_u: Field = (0..n).map(|i| du[0][0][i] + du[1][1][i]).collect();
    // stress[a][b] = mu (d_a u_b + d_b u_a) + lambda div u delta_ab
    let mut stress = vec![vec![vec![0.0; n]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for i in 0..n {
                stress[a][b][i] = q.mu * (du[b][a][i] + du[a][b][i]) + if a == b { q.lambda * div_u[i] } else { 0.0 };
            }
        }
    }
    let force: Vec<Field> = (0..2)
        .map(|b| {
            let t0 = d(&stress[0][b], 0);
            let t1 = d(&stress[1][b], 1);
            (0..n).map(|i| t0[i] + t1[i]).collect()
        })
        .collect();
    let ge = grad(&e_theta);
    let lap_e: Field = {
        let x = d(&ge[0], 0);
        let y = d(&ge[1], 1);
        (0..n).map(|i| x[i] + y[i]).collect()
    };
    let div_i1: Field = {
        let x = d(&s.i1[0], 0);
        let y = d(&s.i1[1], 1);
        (0..n).map(|i| x[i] + y[i]).collect()
    };

    let mut p_t = vec![0.0; n];
    let mut u_t = vec![vec![0.0; n]; 2];
    let mut t_t = vec![0.0; n];
    let mut i0_t = vec![0.0; n];
    let mut i1_t = vec![vec![0.0; n]; 2];
    for i in 0..n {
        let u = [s.u[0][i], s.u[1][i]];
        let i1 = [s.i1[0][i], s.i1[1][i]];
        let mut stress_work = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                stress_work += stress[a][b][i] * du[b][a][i];
            }
        }
        let i1u = i1[0] * u[0] + i1[1] * u[1];
        let emp = (-eps * s.p[i]).exp();
        let relax = s.i0[i] - (4.0 * s.theta[i]).exp();
        let adv = |g: &[Field; 2]| u[0] * g[0][i] + u[1] * g[1][i];
        p_t[i] = -adv(&gp) - 2.0 / eps * div_u[i]
            + emp * (q.kappa / eps * lap_e[i] + eps * stress_work + relax - pw * i1u);
        t_t[i] = -adv(&gt) - div_u[i]
            + emp * (q.kappa * lap_e[i] + eps * eps * stress_work + eps * relax - tw * i1u);
        for b in 0..2 {
            u_t[b][i] = -adv(&du[b]) - e_theta[i] * gp[b][i] / eps + e_theta[i] * emp * (force[b][i] + damp * i1[b]);
            i1_t[b][i] = -gi0[b][i] / (3.0 * eps) - damp * i1[b];
        }
        i0_t[i] = -div_i1[i] / eps - relax;
    }
    let mut out = vec![p_t];
    out.extend(u_t);
    out.push(t_t);
    out.push(i0_t);
    out.extend(i1_t);
    out
}

fn smooth_state(grid: &PeriodicGrid) -> FullState {
    let f = |a: f64, kx: f64, ky: f64, ph: f64| {
        grid.sample(move |x| a * (kx * x[0] + ph).sin() * (ky * x[1] - 0.5 * ph).cos())
    };
    FullState {
        grid: *grid,
        p: f(0.3, 1.0, 2.0, 0.1),
        u: vec![f(0.2, 2.0, 1.0, 0.7), f(0.25, 1.0, 1.0, -0.3)],
        theta: f(0.15, 1.0, 1.0, 1.1),
        i0: grid.sample(|x| 1.0 + 0.2 * (x[0] - x[1]).cos()),
        i1: vec![f(0.1, 1.0, 2.0, 0.4), f(0.1, 2.0, 2.0, -0.9)],
        time: 0.0,
    }
}

fn rhs_gap(points: usize) -> f64 {
    let grid = PeriodicGrid::cube(2, 2.0 * PI, points).unwrap();
    let params = ScaledParameters::new(0.3, 1.5, 0.4, 0.6, 0.2, 0.0).unwrap();
    let state = smooth_state(&grid);
    let spectral = scaled_rhs(&Spectral::new(&grid), &state, &params).unwrap();
    let oracle = fd_rhs(&grid, &state, &params);
    spectral
        .iter()
        .zip(&oracle)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn rhs_agrees_with_fourth_order_differences() {
    let coarse = rhs_gap(64);
    let fine = rhs_gap(128);
    // halving the spacing must cut the gap by about 2^4
    assert!(fine < 1e-4, "fine-grid gap {fine:e}");
    assert!(coarse / fine > 12.0, "gap ratio {}", coarse / fine);
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson on `[0, 60]`; the tail beyond is below `60^3 e^-60`.
fn planck_by_simpson() -> f64 {
    let f = |x: f64| if x == 0.0 { 0.0 } else { x.powi(3) / (x.exp() - 1.0) };
    let (a, b) = (0.0, 60.0);
    let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
    simpson(&f, a, b, f(a), f(0.5 * (a + b)), f(b), whole, 1e-13, 50)
}

#[test]
fn planck_integral_matches_adaptive_simpson() {
    let oracle = planck_by_simpson();
    let exact = PI.powi(4) / 15.0;
    assert!((oracle - exact).abs() < 1e-10 * exact, "oracle itself off: {oracle}");
    let mapped = foundations::reduced_planck_integral(&QuadratureSettings::default());
    assert!((mapped - oracle).abs() < 1e-10 * exact);
}

#[test]
fn planck_error_shrinks_as_panels_double() {
    let exact = PI.powi(4) / 15.0;
    let mut last = f64::INFINITY;
    for panels in [1, 2, 4, 8, 16, 32, 64] {
        let err = (foundations::reduced_planck_integral(&QuadratureSettings { panels, order: 4 }) - exact).abs() / exact;
        if last > 1e-10 {
            assert!(err < last, "{panels} panels: {err:e} after {last:e}");
        }
        last = err;
    }
    assert!(last < 1e-8);
}

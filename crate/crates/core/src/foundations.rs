//! Physical constants of the gray P1 model, the quadratures behind its
//! derivation, dimensional analysis and regime classification.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::{Error, Result};

/// Stefan-type radiation constant `8 pi^5 k_B^4 / (15 h^3 c^3)`.
pub fn radiation_constant(h: f64, k_b: f64, c: f64) -> f64 {
    8.0 * PI.powi(5) * k_b.powi(4) / (15.0 * h.powi(3) * c.powi(3))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre settings: `panels` equal subintervals with an
/// `order`-point rule on each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub panels: usize,
    pub order: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { panels: 16, order: 8 }
    }
}

fn composite(f: impl Fn(f64) -> f64, a: f64, b: f64, q: &QuadratureSettings) -> f64 {
    let (x, w) = gauss_legendre(q.order);
    let h = (b - a) / q.panels as f64;
    let mut sum = 0.0;
    for p in 0..q.panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            sum += wi * f(lo + 0.5 * h * (xi + 1.0));
        }
    }
    0.5 * h * sum
}

/// `x^3 / (e^x - 1)` with the removable singularity at zero handled.
fn bose_cubic(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powi(3) / x.exp_m1()
    }
}

/// `int_0^inf x^3 / (e^x - 1) dx` via `x = y / (1 - y)`: `y in [0, 1/2]`
/// covers `x in [0, 1]` and `y in [1/2, 1)` covers the tail.
pub fn reduced_planck_integral(q: &QuadratureSettings) -> f64 {
    let g = |y: f64| {
        if y >= 1.0 {
            return 0.0;
        }
        let x = y / (1.0 - y);
        bose_cubic(x) / ((1.0 - y) * (1.0 - y))
    };
    composite(g, 0.0, 0.5, q) + composite(g, 0.5, 1.0, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanckCheck {
    pub numeric: f64,
    pub reference: f64,
    pub relative_error: f64,
}

/// Integrate `4 pi B_nu(Theta)` over frequency and compare with
/// `c a_r Theta^4`.
pub fn planck_integral_check(
    theta: f64,
    q: &QuadratureSettings,
    h: f64,
    k_b: f64,
    c: f64,
) -> Result<PlanckCheck> {
    if !(theta > 0.0) {
        return Err(Error::Domain("temperature must be positive".into()));
    }
    // nu = (k_B Theta / h) x
    let scale = k_b * theta / h;
    let numeric = 4.0 * PI * 2.0 * h / (c * c) * scale.powi(4) * reduced_planck_integral(q);
    let reference = c * radiation_constant(h, k_b, c) * theta.powi(4);
    let relative_error = ((numeric - reference) / reference).abs();
    if relative_error > 1e-6 {
        return Err(Error::Domain(format!(
            "Planck quadrature reached only {relative_error:.2e} relative accuracy"
        )));
    }
    Ok(PlanckCheck {
        numeric,
        reference,
        relative_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SphereQuadrature {
    /// Gauss-Legendre in `cos(polar)` times uniform azimuth; exact for the
    /// low-degree polynomials involved.
    AnalyticLattice { polar: usize, azimuth: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolidAngleMoments {
    /// `int dω`
    pub m0: f64,
    /// `int ω dω`
    pub m1: [f64; 3],
    /// `int ω (ω . A) dω`
    pub m2a: [f64; 3],
    /// Standard errors (zero for the lattice rule).
    pub m1_stderr: [f64; 3],
    pub m2a_stderr: [f64; 3],
}

/// Zeroth, first and contracted second angular moments over the unit sphere.
pub fn solid_angle_moments(a: [f64; 3], method: SphereQuadrature) -> Result<SolidAngleMoments> {
    let integrand = |w: [f64; 3]| -> ([f64; 3], [f64; 3]) {
        let wa = w[0] * a[0] + w[1] * a[1] + w[2] * a[2];
        (w, [w[0] * wa, w[1] * wa, w[2] * wa])
    };
    let dir = |mu: f64, phi: f64| {
        let s = (1.0 - mu * mu).max(0.0).sqrt();
        [s * phi.cos(), s * phi.sin(), mu]
    };
    match method {
        SphereQuadrature::AnalyticLattice { polar, azimuth } => {
            let (x, wt) = gauss_legendre(polar);
            let dphi = 2.0 * PI / azimuth as f64;
            let mut m0 = 0.0;
            let mut m1 = [0.0; 3];
            let mut m2 = [0.0; 3];
            for (mu, wm) in x.iter().zip(&wt) {
                for j in 0..azimuth {
                    let w = dir(*mu, (j as f64 + 0.5) * dphi);
                    let weight = wm * dphi;
                    let (f1, f2) = integrand(w);
                    m0 += weight;
                    for c in 0..3 {
                        m1[c] += weight * f1[c];
                        m2[c] += weight * f2[c];
                    }
                }
            }
            Ok(SolidAngleMoments {
                m0,
                m1,
                m2a: m2,
                m1_stderr: [0.0; 3],
                m2a_stderr: [0.0; 3],
            })
        }
        SphereQuadrature::MonteCarlo { samples, seed } => {
            if samples < 10_000 {
                return Err(Error::Config("Monte-Carlo sphere sampling needs at least 1e4 samples".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s1 = [0.0; 3];
            let mut s2 = [0.0; 3];
            let mut q1 = [0.0; 3];
            let mut q2 = [0.0; 3];
            for _ in 0..samples {
                let mu: f64 = rng.gen_range(-1.0..=1.0);
                let phi: f64 = rng.gen_range(0.0..2.0 * PI);
                let (f1, f2) = integrand(dir(mu, phi));
                for c in 0..3 {
                    s1[c] += f1[c];
                    s2[c] += f2[c];
                    q1[c] += f1[c] * f1[c];
                    q2[c] += f2[c] * f2[c];
                }
            }
            let n = samples as f64;
            let area = 4.0 * PI;
            let mut out = SolidAngleMoments {
                m0: area,
                m1: [0.0; 3],
                m2a: [0.0; 3],
                m1_stderr: [0.0; 3],
                m2a_stderr: [0.0; 3],
            };
            for c in 0..3 {
                let (mean1, mean2) = (s1[c] / n, s2[c] / n);
                let var1 = (q1[c] / n - mean1 * mean1) * n / (n - 1.0);
                let var2 = (q2[c] / n - mean2 * mean2) * n / (n - 1.0);
                out.m1[c] = area * mean1;
                out.m2a[c] = area * mean2;
                out.m1_stderr[c] = area * (var1 / n).sqrt();
                out.m2a_stderr[c] = area * (var2 / n).sqrt();
            }
            Ok(out)
        }
    }
}

/// Reference scales of a radiating gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalScales {
    pub l_inf: f64,
    pub t_inf: f64,
    pub u_inf: f64,
    pub rho_inf: f64,
    pub theta_inf: f64,
    pub p_inf: f64,
    pub e_inf: f64,
    pub mu_inf: f64,
    pub kappa_inf: f64,
    pub sigma_a_inf: f64,
    pub sigma_s_inf: f64,
    pub c: f64,
    pub r_gas: f64,
    pub c_v: f64,
    pub h: f64,
    pub k_b: f64,
}

const SCALE_KEYS: [&str; 16] = [
    "L_inf",
    "t_inf",
    "u_inf",
    "rho_inf",
    "Theta_inf",
    "P_inf",
    "e_inf",
    "mu_inf",
    "kappa_inf",
    "sigma_a_inf",
    "sigma_s_inf",
    "c",
    "R",
    "c_V",
    "h",
    "k_B",
];

const ORDER_KEYS: [&str; 5] = ["order_Ma", "order_P", "order_L", "order_Ls", "order_C"];

impl PhysicalScales {
    /// Unit scales satisfying the compatibility relations with `R = c_V = 1`.
    pub fn unit() -> Self {
        PhysicalScales {
            l_inf: 1.0,
            t_inf: 1.0,
            u_inf: 1.0,
            rho_inf: 1.0,
            theta_inf: 1.0,
            p_inf: 1.0,
            e_inf: 1.0,
            mu_inf: 1.0,
            kappa_inf: 1.0,
            sigma_a_inf: 1.0,
            sigma_s_inf: 1.0,
            c: 1.0,
            r_gas: 1.0,
            c_v: 1.0,
            h: 1.0,
            k_b: 1.0,
        }
    }

    /// Parse a scales file; `e_inf` and `P_inf` may be omitted and are then
    /// derived from the compatibility relations. Optional `order_*` keys give
    /// ε-exponents for regime classification.
    pub fn from_key_values(kv: &KeyValues) -> Result<(Self, Option<BTreeMap<Group, f64>>)> {
        let mut allowed: Vec<&str> = SCALE_KEYS.to_vec();
        allowed.extend(ORDER_KEYS);
        kv.reject_unknown(&allowed)?;
        let r = |k: &str| kv.require::<f64>(k);
        let theta = r("Theta_inf")?;
        let rho = r("rho_inf")?;
        let r_gas = r("R")?;
        let c_v = r("c_V")?;
        let s = PhysicalScales {
            l_inf: r("L_inf")?,
            t_inf: r("t_inf")?,
            u_inf: r("u_inf")?,
            rho_inf: rho,
            theta_inf: theta,
            p_inf: kv.get("P_inf")?.unwrap_or(r_gas * rho * theta),
            e_inf: kv.get("e_inf")?.unwrap_or(c_v * theta),
            mu_inf: r("mu_inf")?,
            kappa_inf: r("kappa_inf")?,
            sigma_a_inf: r("sigma_a_inf")?,
            sigma_s_inf: r("sigma_s_inf")?,
            c: r("c")?,
            r_gas,
            c_v,
            h: r("h")?,
            k_b: r("k_B")?,
        };
        let mut orders = BTreeMap::new();
        for (key, g) in ORDER_KEYS.iter().zip(Group::ALL) {
            if let Some(v) = kv.get::<f64>(key)? {
                orders.insert(g, v);
            }
        }
        Ok((s, if orders.is_empty() { None } else { Some(orders) }))
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("L_inf", self.l_inf),
            ("t_inf", self.t_inf),
            ("u_inf", self.u_inf),
            ("rho_inf", self.rho_inf),
            ("Theta_inf", self.theta_inf),
            ("P_inf", self.p_inf),
            ("e_inf", self.e_inf),
            ("mu_inf", self.mu_inf),
            ("kappa_inf", self.kappa_inf),
            ("sigma_a_inf", self.sigma_a_inf),
            ("sigma_s_inf", self.sigma_s_inf),
            ("c", self.c),
            ("R", self.r_gas),
            ("c_V", self.c_v),
            ("h", self.h),
            ("k_B", self.k_b),
        ];
        let mut errs: Vec<String> = named
            .iter()
            .filter(|(_, v)| !(*v > 0.0 && v.is_finite()))
            .map(|(k, v)| format!("{k} must be positive, got {v}"))
            .collect();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !close(self.e_inf, self.c_v * self.theta_inf) {
            errs.push(format!(
                "e_inf = {} differs from c_V Theta_inf = {}",
                self.e_inf,
                self.c_v * self.theta_inf
            ));
        }
        if !close(self.p_inf, self.r_gas * self.rho_inf * self.theta_inf) {
            errs.push(format!(
                "P_inf = {} differs from R rho_inf Theta_inf = {}",
                self.p_inf,
                self.r_gas * self.rho_inf * self.theta_inf
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessNumbers {
    /// Strouhal number.
    pub st: f64,
    /// Mach number.
    pub ma: f64,
    /// Reynolds number.
    pub re: f64,
    /// Prandtl number.
    pub pr: f64,
    /// Infrarelativistic number (light speed over flow speed).
    pub c_infrarel: f64,
    /// Absorption length ratio.
    pub l_abs: f64,
    /// Scattering to absorption ratio.
    pub ls_ratio: f64,
    /// Radiation to material energy ratio.
    pub p_rad: f64,
    pub gamma: f64,
    pub c_p: f64,
    pub a_r: f64,
}

pub fn dimensionless_numbers(s: &PhysicalScales) -> Result<DimensionlessNumbers> {
    s.validate()?;
    let c_p = s.r_gas + s.c_v;
    let gamma = c_p / s.c_v;
    let a_r = radiation_constant(s.h, s.k_b, s.c);
    Ok(DimensionlessNumbers {
        st: s.l_inf / (s.t_inf * s.u_inf),
        ma: s.u_inf / (gamma * s.r_gas * s.theta_inf).sqrt(),
        re: s.l_inf * s.rho_inf * s.u_inf / s.mu_inf,
        pr: c_p * s.mu_inf / s.kappa_inf,
        c_infrarel: s.c / s.u_inf,
        l_abs: s.l_inf * s.sigma_a_inf,
        ls_ratio: s.sigma_s_inf / s.sigma_a_inf,
        p_rad: a_r * s.theta_inf.powi(4) / (s.rho_inf * s.e_inf),
        gamma,
        c_p,
        a_r,
    })
}

/// Dimensionless groups whose ε-orders decide the regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    Ma,
    P,
    L,
    Ls,
    C,
}

impl Group {
    pub const ALL: [Group; 5] = [Group::Ma, Group::P, Group::L, Group::Ls, Group::C];
}

impl std::str::FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Ma" => Ok(Group::Ma),
            "P" | "𝒫" => Ok(Group::P),
            "L" | "𝓛" => Ok(Group::L),
            "Ls" | "𝓛s" | "𝓛ₛ" => Ok(Group::Ls),
            "C" | "𝒞" => Ok(Group::C),
            other => Err(Error::Config(format!("unknown dimensionless group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum RegimeLabel {
    EquilibriumDiffusion,
    NonEquilibriumDiffusion,
    LowMach,
    CombinedLowMachNonEquilibrium { delta: f64 },
    Unclassified,
}

/// Exact-match classification of ε-exponents (`X = O(eps^e)`).
pub fn classify_regime(orders: &BTreeMap<Group, f64>) -> Result<RegimeLabel> {
    let missing: Vec<String> = Group::ALL
        .iter()
        .filter(|g| !orders.contains_key(g))
        .map(|g| format!("missing order for {g:?}"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(missing));
    }
    let o = |g: Group| orders[&g];
    let is = |g: Group, v: f64| o(g) == v;
    if is(Group::L, -1.0) && is(Group::Ls, 2.0) && is(Group::Ma, 0.0) && is(Group::C, -1.0) {
        return Ok(RegimeLabel::EquilibriumDiffusion);
    }
    if is(Group::L, 1.0) && is(Group::Ls, -2.0) && is(Group::Ma, 0.0) && is(Group::C, -1.0) {
        return Ok(RegimeLabel::NonEquilibriumDiffusion);
    }
    if is(Group::L, 0.0) && is(Group::Ls, 0.0) && is(Group::Ma, 1.0) && is(Group::C, -1.0) {
        return Ok(RegimeLabel::LowMach);
    }
    if is(Group::Ma, 1.0) && is(Group::P, 1.0) && is(Group::L, 1.0) && is(Group::C, -1.0) {
        let delta = -o(Group::Ls);
        if (0.0..=2.0).contains(&delta) {
            return Ok(RegimeLabel::CombinedLowMachNonEquilibrium { delta: delta + 0.0 });
        }
    }
    Ok(RegimeLabel::Unclassified)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn radiation_constant_unit_value() {
        assert!((radiation_constant(1.0, 1.0, 1.0) - 163.210_498_552_150_09).abs() < 1e-10);
    }

    #[test]
    fn compatibility_violation_lists_each() {
        let mut s = PhysicalScales::unit();
        s.e_inf = 2.0;
        s.p_inf = 3.0;
        match dimensionless_numbers(&s) {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn missing_order_is_validation_error() {
        let mut m = BTreeMap::new();
        m.insert(Group::Ma, 1.0);
        assert!(matches!(classify_regime(&m), Err(Error::Validation(_))));
    }
}

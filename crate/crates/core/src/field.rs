//! Pointwise helpers for real-space fields stored as flat vectors.

/// Scalar field on a grid, row-major.
pub type Field = Vec<f64>;
/// Vector field: one scalar field per component.
pub type VectorField = Vec<Field>;

pub fn zeros(n: usize) -> Field {
    vec![0.0; n]
}

pub fn constant(n: usize, c: f64) -> Field {
    vec![c; n]
}

pub fn zero_vector(dim: usize, n: usize) -> VectorField {
    vec![vec![0.0; n]; dim]
}

pub fn map(a: &[f64], f: impl Fn(f64) -> f64) -> Field {
    a.iter().map(|&x| f(x)).collect()
}

pub fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Field {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Field {
    zip(a, b, |x, y| x + y)
}

pub fn sub(a: &[f64], b: &[f64]) -> Field {
    zip(a, b, |x, y| x - y)
}

pub fn mul(a: &[f64], b: &[f64]) -> Field {
    zip(a, b, |x, y| x * y)
}

pub fn scale(a: &[f64], s: f64) -> Field {
    map(a, |x| s * x)
}

pub fn exp(a: &[f64]) -> Field {
    map(a, f64::exp)
}

/// `a += s * b`
pub fn axpy(a: &mut [f64], s: f64, b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += s * y;
    }
}

pub fn dot(u: &[Field], v: &[Field]) -> Field {
    let n = u[0].len();
    let mut out = vec![0.0; n];
    for (a, b) in u.iter().zip(v) {
        for i in 0..n {
            out[i] += a[i] * b[i];
        }
    }
    out
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

pub fn max_abs_vec(v: &[Field]) -> f64 {
    v.iter().map(|c| max_abs(c)).fold(0.0, f64::max)
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub fn vec_sub(a: &[Field], b: &[Field]) -> VectorField {
    a.iter().zip(b).map(|(x, y)| sub(x, y)).collect()
}

pub fn vec_scale(a: &[Field], s: f64) -> VectorField {
    a.iter().map(|x| scale(x, s)).collect()
}

/// Multiply every component by a scalar field.
pub fn vec_mul_scalar(v: &[Field], w: &[f64]) -> VectorField {
    v.iter().map(|c| mul(c, w)).collect()
}

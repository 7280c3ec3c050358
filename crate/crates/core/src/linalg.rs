//! Small dense helpers for `d x d` row-major matrices stored as flat slices.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `M x` for a row-major `d x d` matrix.
pub fn mat_vec(m: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    debug_assert_eq!(m.len(), d * d);
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], x)).collect()
}

/// `M' x` for a row-major `d x d` matrix.
pub fn mat_t_vec(m: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    debug_assert_eq!(m.len(), d * d);
    let mut out = vec![0.0; d];
    for (i, xi) in x.iter().enumerate() {
        let row = &m[i * d..(i + 1) * d];
        for (o, r) in out.iter_mut().zip(row) {
            *o += r * xi;
        }
    }
    out
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

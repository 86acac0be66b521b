//! Small dense linear-algebra helpers shared across modules.

use nalgebra::SymmetricEigen;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::Rng;
use crate::{Error, Matrix, Result, Vector};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted
/// descending; column `k` of the returned matrix pairs with value `k`.
pub fn sym_eigen_desc(m: &Matrix) -> (Vector, Matrix) {
    let eig = SymmetricEigen::new(m.clone());
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = Vector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Matrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(m + mᵀ) / 2`, exactly symmetric.
pub fn symmetrize(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

pub fn gaussian_vector(d: usize, rng: &mut Rng) -> Vector {
    Vector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Uniform point on the sphere of the given radius.
pub fn uniform_sphere(d: usize, radius: f64, rng: &mut Rng) -> Vector {
    loop {
        let g = gaussian_vector(d, rng);
        let n = g.norm();
        if n > 1e-12 {
            return g * (radius / n);
        }
    }
}

/// Uniform point in the closed ball of the given radius.
pub fn uniform_ball(d: usize, radius: f64, rng: &mut Rng) -> Vector {
    let u: f64 = rng.random();
    uniform_sphere(d, radius * u.powf(1.0 / d as f64), rng)
}

/// A `rows × cols` matrix with orthonormal columns, Haar-distributed
/// (QR of a Gaussian matrix with the signs of `R`'s diagonal folded into `Q`).
pub fn random_orthonormal(rows: usize, cols: usize, rng: &mut Rng) -> Result<Matrix> {
    if cols > rows {
        return Err(Error::InvalidConfig(format!(
            "cannot fit {cols} orthonormal columns in dimension {rows}"
        )));
    }
    let g = gaussian_matrix(rows, cols, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..cols {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    Ok(q)
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidInstance(format!("{what}: ragged matrix rows")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    Some(v[lo] * (1.0 - t) + v[hi] * t)
}

//! Truncated singular value decomposition.
//!
//! Small inputs are decomposed exactly with one-sided (Hestenes) Jacobi
//! rotations. Inputs whose smaller dimension exceeds [`EXACT_LIMIT`] are
//! first projected onto a seeded randomized range basis refined by subspace
//! iteration, and the projection is decomposed exactly. The projection is
//! exact whenever the input rank is at most `k + OVERSAMPLE`.
//!
//! Every column-wise product keeps a fixed accumulation order per column, so
//! identical input columns yield bit-identical spatial columns.

use nalgebra::{DMatrix, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const EXACT_LIMIT: usize = 256;
const OVERSAMPLE: usize = 8;
const POWER_ITERATIONS: usize = 4;
const RANGE_SEED: u64 = 0x5eed_b7f0;
const MAX_SWEEPS: usize = 80;

/// Rank-k factors `A ~ angular * spatial`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `D x k`, orthonormal columns.
    pub angular: DMatrix<f64>,
    /// `k x P`, rows are singular-value-scaled right singular vectors.
    pub spatial: DMatrix<f64>,
    /// All singular values that were computed, descending; at least `k`.
    pub singular_values: Vec<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.angular.ncols()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.angular * &self.spatial
    }
}

pub fn truncated_svd<T>(matrix: &DMatrix<T>, k: usize) -> Result<TruncatedSvd>
where
    T: Scalar + Copy + Into<f64> + Send + Sync,
{
    let (rows, cols) = matrix.shape();
    let max = rows.min(cols);
    if k == 0 || k > max {
        return Err(Error::InvalidRank { k, max });
    }
    if matrix.iter().any(|v| !(*v).into().is_finite()) {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    let basis = k + OVERSAMPLE;
    if max <= EXACT_LIMIT || basis >= max {
        let a = matrix.map(|v| v.into());
        Ok(finish(exact(&a), k))
    } else {
        Ok(finish(randomized(matrix, basis), k))
    }
}

/// Full thin decomposition, unsorted-sign but sorted by singular value.
struct Factors {
    angular: DMatrix<f64>,
    spatial: DMatrix<f64>,
    sigma: Vec<f64>,
}

fn finish(mut f: Factors, k: usize) -> TruncatedSvd {
    // Largest-magnitude entry of every angular column made positive.
    for c in 0..f.angular.ncols() {
        let col = f.angular.column(c);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            f.angular.column_mut(c).neg_mut();
            f.spatial.row_mut(c).neg_mut();
        }
    }
    TruncatedSvd {
        angular: f.angular.columns(0, k).into_owned(),
        spatial: f.spatial.rows(0, k).into_owned(),
        singular_values: f.sigma,
    }
}

fn exact(a: &DMatrix<f64>) -> Factors {
    let (rows, cols) = a.shape();
    if rows <= cols {
        // Orthogonalize the columns of A^T: A^T J = W, so A = J W^T.
        let (w, j) = hestenes(a.transpose());
        let order = order_by_norm(&w);
        let n = order.len();
        let mut angular = DMatrix::zeros(rows, n);
        let mut spatial = DMatrix::zeros(n, cols);
        let mut sigma = Vec::with_capacity(n);
        for (dst, &(src, s)) in order.iter().enumerate() {
            angular.set_column(dst, &j.column(src));
            spatial.set_row(dst, &w.column(src).transpose());
            sigma.push(s);
        }
        Factors { angular, spatial, sigma }
    } else {
        // Orthogonalize the columns of A: A J = W, so A = (W / s) diag(s) J^T.
        let (w, j) = hestenes(a.clone());
        let order = order_by_norm(&w);
        let n = order.len();
        let smax = order.first().map_or(0.0, |o| o.1);
        let mut angular = DMatrix::zeros(rows, n);
        let mut spatial = DMatrix::zeros(n, cols);
        let mut sigma = Vec::with_capacity(n);
        for (dst, &(src, s)) in order.iter().enumerate() {
            if s > smax * 1e-12 && s > 0.0 {
                angular.set_column(dst, &(w.column(src) / s));
            }
            spatial.set_row(dst, &(j.column(src).transpose() * s));
            sigma.push(s);
        }
        complete_orthonormal(&mut angular, &sigma, smax);
        Factors { angular, spatial, sigma }
    }
}

/// Replaces the columns belonging to numerically zero singular values with
/// unit vectors orthogonal to everything before them.
fn complete_orthonormal(q: &mut DMatrix<f64>, sigma: &[f64], smax: f64) {
    let rows = q.nrows();
    let mut candidate = 0;
    for c in 0..q.ncols() {
        if sigma[c] > smax * 1e-12 && sigma[c] > 0.0 {
            continue;
        }
        loop {
            let mut v = nalgebra::DVector::<f64>::zeros(rows);
            v[candidate % rows] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for p in 0..c {
                    let proj = q.column(p).dot(&v);
                    v -= q.column(p) * proj;
                }
            }
            let n = v.norm();
            if n > 1e-6 {
                q.set_column(c, &(v / n));
                break;
            }
            assert!(candidate < 2 * rows + q.ncols(), "orthonormal completion failed");
        }
    }
}

fn order_by_norm(w: &DMatrix<f64>) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = (0..w.ncols()).map(|c| (c, w.column(c).norm())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order
}

/// One-sided Jacobi: rotates the columns of `m` until they are mutually
/// orthogonal. Returns the rotated matrix and the accumulated rotation.
fn hestenes(mut m: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.ncols();
    let mut j = DMatrix::<f64>::identity(n, n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = m.column(p);
                    let cq = m.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut m, p, q, c, s);
                rotate(&mut j, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    (m, j)
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let a = m[(i, p)];
        let b = m[(i, q)];
        m[(i, p)] = c * a - s * b;
        m[(i, q)] = s * a + c * b;
    }
}

fn randomized<T>(a: &DMatrix<T>, basis: usize) -> Factors
where
    T: Scalar + Copy + Into<f64> + Send + Sync,
{
    let cols = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(RANGE_SEED);
    let omega = DMatrix::<f64>::from_fn(cols, basis, |_, _| rng.random_range(-1.0..1.0));
    let mut q = orthonormalize(mul(a, &omega));
    for _ in 0..POWER_ITERATIONS {
        let z = orthonormalize(mul_transpose(a, &q));
        q = orthonormalize(mul(a, &z));
    }
    // B = Q^T A, computed column by column.
    let b = mul_transpose(a, &q).transpose();
    debug_assert_eq!(b.shape(), (basis, cols));
    let small = exact(&b);
    Factors {
        angular: &q * small.angular,
        spatial: small.spatial,
        sigma: small.sigma,
    }
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// `A * Z`; each output column accumulates over A's columns in order.
fn mul<T>(a: &DMatrix<T>, z: &DMatrix<f64>) -> DMatrix<f64>
where
    T: Scalar + Copy + Into<f64> + Send + Sync,
{
    let (rows, cols) = a.shape();
    let out_cols: Vec<Vec<f64>> = (0..z.ncols())
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0f64; rows];
            for j in 0..cols {
                let w = z[(j, c)];
                if w == 0.0 {
                    continue;
                }
                for (slot, v) in acc.iter_mut().zip(a.column(j).iter()) {
                    *slot += (*v).into() * w;
                }
            }
            acc
        })
        .collect();
    DMatrix::from_fn(rows, z.ncols(), |i, c| out_cols[c][i])
}

/// `A^T * Q`; row `j` of the result depends only on column `j` of A.
fn mul_transpose<T>(a: &DMatrix<T>, q: &DMatrix<f64>) -> DMatrix<f64>
where
    T: Scalar + Copy + Into<f64> + Send + Sync,
{
    let cols = a.ncols();
    let width = q.ncols();
    let out_rows: Vec<Vec<f64>> = (0..cols)
        .into_par_iter()
        .map(|j| {
            let col = a.column(j);
            (0..width)
                .map(|c| {
                    col.iter()
                        .zip(q.column(c).iter())
                        .map(|(x, y)| (*x).into() * y)
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(cols, width, |j, c| out_rows[j][c])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Independent oracle: singular values from nalgebra's bidiagonal SVD.
    fn oracle_tail(a: &DMatrix<f64>, k: usize) -> f64 {
        let sv = a.clone().svd(false, false).singular_values;
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|x, y| y.total_cmp(x));
        s[k..].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn assert_orthonormal(u: &DMatrix<f64>, tol: f64) {
        let g = u.transpose() * u;
        let id = DMatrix::<f64>::identity(g.nrows(), g.ncols());
        assert!((g - id).abs().max() < tol);
    }

    #[test]
    fn rank_one_is_exact() {
        let u = DMatrix::from_fn(7, 1, |i, _| i as f64 + 1.0);
        let v = DMatrix::from_fn(1, 5, |_, j| 0.5 - j as f64);
        let a = &u * &v;
        let svd = truncated_svd(&a, 1).unwrap();
        assert!((svd.reconstruct() - &a).norm() < 1e-8);
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let a = DMatrix::<f64>::identity(4, 4);
        let svd = truncated_svd(&a, 4).unwrap();
        assert!(svd.singular_values.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!((svd.reconstruct() - a).norm() < 1e-12);
    }

    #[test]
    fn eckart_young_on_16x12() {
        let a = random(16, 12, 7);
        for k in 1..=12 {
            let svd = truncated_svd(&a, k).unwrap();
            let err = (svd.reconstruct() - &a).norm();
            let tail = oracle_tail(&a, k);
            assert!((err - tail).abs() <= 1e-6 * tail + 1e-12 * a.norm(), "k={k} {err} vs {tail}");
            assert_orthonormal(&svd.angular, 1e-10);
        }
    }

    #[test]
    fn tall_and_wide_agree() {
        let a = random(20, 9, 3);
        let t = truncated_svd(&a.transpose(), 5).unwrap();
        let s = truncated_svd(&a, 5).unwrap();
        for (x, y) in s.singular_values.iter().zip(t.singular_values.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn spatial_row_norms_are_singular_values() {
        let a = random(10, 30, 11);
        let svd = truncated_svd(&a, 6).unwrap();
        let norms: Vec<f64> = (0..6).map(|c| svd.spatial.row(c).norm()).collect();
        for c in 0..6 {
            assert!((norms[c] - svd.singular_values[c]).abs() < 1e-10);
            if c > 0 {
                assert!(norms[c] <= norms[c - 1] + 1e-12);
            }
        }
    }

    #[test]
    fn sign_normalized() {
        let a = random(12, 8, 5);
        let svd = truncated_svd(&a, 8).unwrap();
        for c in 0..8 {
            let col = svd.angular.column(c);
            let max = col.iter().copied().max_by(|x, y| x.abs().total_cmp(&y.abs())).unwrap();
            assert!(max > 0.0);
        }
        let again = truncated_svd(&a, 8).unwrap();
        assert_eq!(svd.angular, again.angular);
        assert_eq!(svd.spatial, again.spatial);
    }

    #[test]
    fn rank_deficient_tall_matrix_completes_basis() {
        // Rank 2 but k = 4: the extra angular columns must still be orthonormal.
        let u = random(9, 2, 1);
        let v = random(2, 4, 2);
        let a = &u * &v;
        let svd = truncated_svd(&a, 4).unwrap();
        assert_orthonormal(&svd.angular, 1e-10);
        assert!((svd.reconstruct() - a).norm() < 1e-10);
    }

    #[test]
    fn invalid_rank_and_input() {
        let a = random(4, 3, 0);
        assert!(matches!(truncated_svd(&a, 4), Err(Error::InvalidRank { k: 4, max: 3 })));
        assert!(matches!(truncated_svd(&a, 0), Err(Error::InvalidRank { .. })));
        let mut bad = a.clone();
        bad[(1, 1)] = f64::NAN;
        assert!(matches!(truncated_svd(&bad, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn randomized_path_is_exact_for_low_rank() {
        let u = random(400, 5, 21);
        let v = random(5, 300, 22);
        let a = (&u * &v).map(|x| x as f32);
        let svd = truncated_svd(&a, 8).unwrap();
        let af = a.map(|x| x as f64);
        let err = (svd.reconstruct() - &af).norm();
        assert!(err < 1e-6 * af.norm(), "{err}");
        assert_orthonormal(&svd.angular, 1e-9);
    }

    #[test]
    fn identical_columns_give_identical_spatial_columns() {
        let base = random(300, 4, 9);
        let pick = [0usize, 1, 0, 2, 3, 1, 0];
        let cols: Vec<usize> = (0..280).map(|j| pick[j % pick.len()]).collect();
        let a = DMatrix::from_fn(300, 280, |i, j| base[(i, cols[j])]);
        let svd = truncated_svd(&a, 4).unwrap();
        for j in 0..280 {
            let first = cols.iter().position(|&c| c == cols[j]).unwrap();
            assert_eq!(svd.spatial.column(j), svd.spatial.column(first));
        }
    }
}

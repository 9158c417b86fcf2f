//! Dense linear-algebra helpers shared by every module.
//!
//! All numerical ranks in the crate go through [`numerical_rank`], which uses
//! the tolerance `max(rows, cols) * sigma_max * eps * 10`. Keeping a single
//! rule makes verdicts reproducible across modules.

use nalgebra::{DMatrix, DVector};

/// Safety factor applied on top of `max(rows, cols) * sigma_max * eps`.
pub const RANK_TOLERANCE_FACTOR: f64 = 10.0;

/// Rank tolerance for a `rows x cols` matrix whose largest singular value is `sigma_max`.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON * RANK_TOLERANCE_FACTOR
}

/// Singular values (descending) together with the rank they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    pub tolerance: f64,
    pub singular_values: Vec<f64>,
}

impl RankInfo {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }
}

fn sorted_desc(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Thin SVD with singular values in descending order.
///
/// Computed with faer: nalgebra's SVD loses accuracy on some tall,
/// well-conditioned matrices (reconstruction errors near 1e-6 relative).
struct ThinSvd {
    u: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
}

fn thin_svd(m: &DMatrix<f64>) -> ThinSvd {
    let (rows, cols) = m.shape();
    let fm = faer::Mat::from_fn(rows, cols, |i, j| m[(i, j)]);
    match fm.thin_svd() {
        Ok(svd) => {
            let (u, v) = (svd.U(), svd.V());
            let s = svd.S().column_vector();
            let k = rows.min(cols);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
            ThinSvd {
                u: DMatrix::from_fn(rows, k, |i, c| u[(i, order[c])]),
                s: order.iter().map(|&c| s[c]).collect(),
                v: DMatrix::from_fn(cols, k, |i, c| v[(i, order[c])]),
            }
        }
        Err(_) => {
            let svd = m.clone().svd(true, true);
            let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
            ThinSvd {
                u: DMatrix::from_fn(rows, order.len(), |i, c| u[(i, order[c])]),
                s: order.iter().map(|&c| svd.singular_values[c]).collect(),
                v: DMatrix::from_fn(cols, order.len(), |i, c| v_t[(order[c], i)]),
            }
        }
    }
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let fm = faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    match fm.singular_values() {
        Ok(s) => sorted_desc(s.into_iter()),
        Err(_) => sorted_desc(m.clone().svd(false, false).singular_values.iter().copied()),
    }
}

pub fn numerical_rank(m: &DMatrix<f64>) -> RankInfo {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return RankInfo { rank: 0, tolerance: 0.0, singular_values: Vec::new() };
    }
    let sv = singular_values(m);
    let tolerance = rank_tolerance(rows, cols, sv[0]);
    let rank = sv.iter().filter(|&&s| s > tolerance).count();
    RankInfo { rank, tolerance, singular_values: sv }
}

pub fn has_full_column_rank(m: &DMatrix<f64>) -> bool {
    numerical_rank(m).rank == m.ncols()
}

pub fn has_full_row_rank(m: &DMatrix<f64>) -> bool {
    numerical_rank(m).rank == m.nrows()
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>) -> (DMatrix<f64>, RankInfo) {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return (DMatrix::zeros(0, 0), numerical_rank(m));
    }
    if rows == 0 {
        return (DMatrix::identity(cols, cols), numerical_rank(m));
    }
    // Zero rows do not change the kernel; padding gives a full V from the thin SVD.
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = thin_svd(&padded);
    let sigma_max = svd.s.first().copied().unwrap_or(0.0);
    let tolerance = rank_tolerance(rows, cols, sigma_max);
    let kernel: Vec<usize> = (0..svd.s.len()).filter(|&k| svd.s[k] <= tolerance).collect();
    let basis = DMatrix::from_fn(cols, kernel.len(), |i, c| svd.v[(i, kernel[c])]);
    // the padded SVD carries `cols - rows` extra zeros
    let mut sv = svd.s;
    sv.truncate(rows.min(cols));
    let rank = sv.iter().filter(|&&s| s > tolerance).count();
    (basis, RankInfo { rank, tolerance, singular_values: sv })
}

/// Moore-Penrose pseudoinverse with the shared rank tolerance, plus the rank used.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, RankInfo) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(cols, rows), numerical_rank(m));
    }
    let svd = thin_svd(m);
    let tolerance = rank_tolerance(rows, cols, svd.s.first().copied().unwrap_or(0.0));
    let rank = svd.s.iter().filter(|&&s| s > tolerance).count();
    let v = svd.v.columns(0, rank);
    let u = svd.u.columns(0, rank);
    let inv_s = DMatrix::from_diagonal(&DVector::from_iterator(rank, svd.s[..rank].iter().map(|s| 1.0 / s)));
    let pinv = v * inv_s * u.transpose();
    (pinv, RankInfo { rank, tolerance, singular_values: svd.s })
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Induced infinity norm: largest absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Column-stacking vectorization.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn direct_sum(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical concatenation; all blocks must share the column count.
pub fn vstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), b.shape()).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Horizontal concatenation; all blocks must share the row count.
pub fn hstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), b.shape()).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Row-major flattening, the on-disk layout of every matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Option<DMatrix<f64>> {
    (data.len() == rows * cols).then(|| DMatrix::from_row_slice(rows, cols, data))
}

/// Kalman-type matrix `[B, AB, ..., A^{steps-1} B]`, built by a running product.
pub fn krylov_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, steps: usize) -> DMatrix<f64> {
    let mut blocks = Vec::with_capacity(steps);
    let mut x = b.clone();
    for _ in 0..steps {
        let next = a * &x;
        blocks.push(std::mem::replace(&mut x, next));
    }
    if blocks.is_empty() {
        return DMatrix::zeros(b.nrows(), 0);
    }
    hstack(&blocks)
}

//! Markov-parameter estimation from input/output data via block Hankel
//! matrices, persistency-of-excitation checks and excitation design.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lti::MarkovSequence;

/// Relative residual above which the data equations are declared inconsistent.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

/// Number of regeneration attempts in [`design_pe_input`].
pub const MAX_DESIGN_ATTEMPTS: usize = 10;

/// Block Hankel matrix of depth `k` built from a `dim x T` signal.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    pub depth: usize,
    pub source_length: usize,
    pub signal_dim: usize,
    pub data: DMatrix<f64>,
}

impl HankelMatrix {
    /// Block `(a, b)`, which equals `f(a + b)`.
    pub fn block(&self, a: usize, b: usize) -> DMatrix<f64> {
        self.data.view((a * self.signal_dim, b), (self.signal_dim, 1)).into_owned()
    }

    /// First `blocks` block rows.
    pub fn upper(&self, blocks: usize) -> DMatrix<f64> {
        self.data.rows(0, blocks * self.signal_dim).into_owned()
    }

    /// Block rows from `blocks` onward.
    pub fn lower(&self, blocks: usize) -> DMatrix<f64> {
        let start = blocks * self.signal_dim;
        self.data.rows(start, self.data.nrows() - start).into_owned()
    }
}

pub fn hankel(f: &DMatrix<f64>, k: usize) -> Result<HankelMatrix> {
    let (dim, length) = f.shape();
    if k == 0 {
        return Err(Error::InvalidParameter("Hankel depth must be positive".into()));
    }
    if k > length {
        return Err(Error::DepthExceedsLength { depth: k, length });
    }
    let cols = length - k + 1;
    let mut data = DMatrix::zeros(k * dim, cols);
    for a in 0..k {
        data.view_mut((a * dim, 0), (dim, cols)).copy_from(&f.columns(a, cols));
    }
    Ok(HankelMatrix { depth: k, source_length: length, signal_dim: dim, data })
}

/// Whether `H_k(u)` has full row rank `k * m`.
pub fn is_persistently_exciting(u: &DMatrix<f64>, order: usize) -> bool {
    if order == 0 {
        return true;
    }
    let (m, length) = u.shape();
    if order > length || order * m > length - order + 1 {
        return false;
    }
    match hankel(u, order) {
        Ok(h) => linalg::numerical_rank(&h.data).rank == order * m,
        Err(_) => false,
    }
}

/// Minimal sample count `(m + 1)(2n + r + 1) - 1` for excitation of order `2n + r + 1`.
pub fn minimal_length(m: usize, n: usize, r: usize) -> usize {
    (m + 1) * (2 * n + r + 1) - 1
}

/// Standard-normal input (`m x T`) of minimal length, persistently exciting of
/// order `2n + r + 1`. Attempt `k` uses seed `seed + k`.
pub fn design_pe_input(m: usize, n: usize, r: usize, seed: u64) -> Result<DMatrix<f64>> {
    let length = minimal_length(m, n, r);
    let order = 2 * n + r + 1;
    for attempt in 0..MAX_DESIGN_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let u = random_normal(&mut rng, m, length);
        if is_persistently_exciting(&u, order) {
            return Ok(u);
        }
    }
    Err(Error::ExcitationFailure { attempts: MAX_DESIGN_ATTEMPTS })
}

/// `rows x cols` standard-normal matrix, drawn column by column (time-major).
pub fn random_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for t in 0..cols {
        for i in 0..rows {
            out[(i, t)] = StandardNormal.sample(rng);
        }
    }
    out
}

/// Measured input (`m x T`) and output (`p x T`) trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    u: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl DataSet {
    pub fn new(u: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if u.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} samples, output has {}",
                u.ncols(),
                y.ncols()
            )));
        }
        if u.ncols() == 0 {
            return Err(Error::InvalidParameter("trajectories must contain at least one sample".into()));
        }
        Ok(Self { u, y })
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.u.ncols() == 0
    }
}

/// Feedthrough and Markov parameters recovered from data.
#[derive(Debug, Clone)]
pub struct MarkovEstimate {
    pub feedthrough: DMatrix<f64>,
    /// `M_0 = CB, ..., M_r = CA^r B`.
    pub markov: MarkovSequence,
    pub residual: f64,
}

/// Solves `[U_p; Y_p; U_f] G = [0; 0; col(I, 0)]` by minimum-norm least squares
/// and reads `Y_f G = col(D, CB, ..., CA^r B)`.
///
/// The past window has `n` block rows and the future window `r + 2`, so that
/// `M_r` is included.
pub fn estimate_markov(data: &DataSet, n: usize, r: usize) -> Result<MarkovEstimate> {
    let (m, p) = (data.u.nrows(), data.y.nrows());
    let order = 2 * n + r + 1;
    if !is_persistently_exciting(&data.u, order) {
        return Err(Error::NotPersistentlyExciting { order });
    }
    let depth = n + r + 2;
    let hu = hankel(&data.u, depth)?;
    let hy = hankel(&data.y, depth)?;
    let (u_p, u_f) = (hu.upper(n), hu.lower(n));
    let (y_p, y_f) = (hy.upper(n), hy.lower(n));
    let phi = linalg::vstack(&[u_p, y_p, u_f]);

    let mut rhs = DMatrix::zeros(phi.nrows(), m);
    let offset = n * m + n * p;
    rhs.view_mut((offset, 0), (m, m)).fill_with_identity();

    let (pinv, _) = linalg::pseudo_inverse(&phi);
    let g = pinv * &rhs;
    let residual = (&phi * &g - &rhs).norm();
    let tolerance = RESIDUAL_TOLERANCE * rhs.norm();
    if residual > tolerance {
        return Err(Error::ResidualTooLarge { residual, tolerance });
    }

    let stacked = y_f * g;
    let mut blocks = (0..r + 2).map(|k| stacked.view((k * p, 0), (p, m)).into_owned());
    let feedthrough = blocks.next().expect("future window is nonempty");
    let markov = MarkovSequence::new(blocks.collect())?;
    Ok(MarkovEstimate { feedthrough, markov, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{simulate, StateSpaceSystem};
    use nalgebra::DVector;

    fn row(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, values.len(), values)
    }

    #[test]
    fn hankel_small() {
        let h = hankel(&row(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert_eq!(h.data, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
        let h = hankel(&row(&[5.0]), 1).unwrap();
        assert_eq!(h.data, DMatrix::from_element(1, 1, 5.0));
    }

    #[test]
    fn hankel_depth_too_large() {
        assert_eq!(hankel(&row(&[1.0, 2.0, 3.0]), 4).unwrap_err(), Error::DepthExceedsLength { depth: 4, length: 3 });
    }

    #[test]
    fn hankel_blocks_follow_the_signal() {
        let f = DMatrix::from_fn(2, 6, |i, t| (10 * i + t) as f64);
        let h = hankel(&f, 3).unwrap();
        for a in 0..3 {
            for b in 0..4 {
                assert_eq!(h.block(a, b), f.columns(a + b, 1).into_owned());
            }
        }
    }

    #[test]
    fn zero_and_constant_inputs_are_not_exciting() {
        assert!(!is_persistently_exciting(&DMatrix::zeros(1, 20), 3));
        assert!(!is_persistently_exciting(&DMatrix::from_element(1, 20, 1.0), 2));
        assert!(is_persistently_exciting(&DMatrix::from_element(1, 20, 1.0), 1));
    }

    #[test]
    fn random_input_is_exciting() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_normal(&mut rng, 1, 61);
        assert!(is_persistently_exciting(&u, 20));
    }

    #[test]
    fn designed_input_lengths() {
        assert_eq!(design_pe_input(1, 2, 3, 0).unwrap().ncols(), 15);
        assert_eq!(design_pe_input(2, 1, 0, 0).unwrap().shape(), (2, 8));
        assert!(is_persistently_exciting(&design_pe_input(1, 2, 3, 0).unwrap(), 8));
    }

    #[test]
    fn designed_input_is_deterministic() {
        assert_eq!(design_pe_input(2, 3, 4, 42).unwrap(), design_pe_input(2, 3, 4, 42).unwrap());
        assert_ne!(design_pe_input(2, 3, 4, 42).unwrap(), design_pe_input(2, 3, 4, 43).unwrap());
    }

    #[test]
    fn estimate_single_integrator() {
        let sys = StateSpaceSystem::strictly_proper(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let r = 3;
        // the extra future block needs one sample beyond the minimal length when n = 1
        let u = design_pe_input(1, 1, r + 1, 5).unwrap();
        let y = simulate(&sys, &DVector::zeros(1), &u).unwrap();
        let est = estimate_markov(&DataSet::new(u, y).unwrap(), 1, r).unwrap();
        assert!(est.feedthrough[(0, 0)].abs() < 1e-10);
        assert_eq!(est.markov.order(), r);
        for m in est.markov.params() {
            assert!((m[(0, 0)] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn estimate_rejects_zero_input() {
        let data = DataSet::new(DMatrix::zeros(1, 30), DMatrix::zeros(1, 30)).unwrap();
        assert!(matches!(estimate_markov(&data, 1, 2), Err(Error::NotPersistentlyExciting { .. })));
    }

    #[test]
    fn dataset_lengths_must_agree() {
        assert!(DataSet::new(DMatrix::zeros(1, 3), DMatrix::zeros(1, 4)).is_err());
        assert!(DataSet::new(DMatrix::zeros(1, 0), DMatrix::zeros(1, 0)).is_err());
    }
}

//! Reconstruction of the interconnection matrix from Markov parameters.
//!
//! With `K_l = M_l - C A^l B R` and the block-Toeplitz matrix `L` of node
//! Markov parameters `C A^k B`, the true `Q` solves the generalized Sylvester
//! equation `K = Σ_{i<r} L_i Q M_i`. Vectorizing gives the linear system
//! `Σ (M_i^T ⊗ L_i) vec(Q) = vec(K)`, which is solved in the minimum-norm
//! least-squares sense. Because `A`, `B`, `C` are block diagonal the system
//! splits into one independent problem per row block of `Q`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::matrix_format;
use crate::linalg;
use crate::lti::{offsets, MarkovSequence, Network};

/// Default cap on `Σm_i · Σp_i` for the vectorized solver.
pub const DEFAULT_MAX_UNKNOWNS: usize = 40_000;

/// Data `(K, {L_i}, {M_i})` of `K = Σ L_i Q M_i`, for the whole network or one row block.
#[derive(Debug, Clone)]
pub struct SylvesterSystem {
    /// `col(K_1, ..., K_r)`.
    pub k: DMatrix<f64>,
    /// Column blocks `L_0, ..., L_{r-1}` of the block-Toeplitz matrix.
    pub l_blocks: Vec<DMatrix<f64>>,
    /// `M_0, ..., M_{r-1}`.
    pub m_blocks: Arc<[DMatrix<f64>]>,
    pub r: usize,
    /// Row partition of the unknown (`m_i`).
    pub row_blocks: Vec<usize>,
    /// Column partition of the unknown (`p_i`).
    pub col_blocks: Vec<usize>,
}

impl SylvesterSystem {
    /// Shape of the unknown `Q` (or of its row block).
    pub fn unknown_shape(&self) -> (usize, usize) {
        (self.l_blocks[0].ncols(), self.m_blocks[0].nrows())
    }

    pub fn unknowns(&self) -> usize {
        let (a, b) = self.unknown_shape();
        a * b
    }

    /// `Σ_{i<r} M_i^T ⊗ L_i`.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let rows = self.k.nrows() * self.k.ncols();
        let mut out = DMatrix::zeros(rows, self.unknowns());
        for (l, m) in self.l_blocks.iter().zip(self.m_blocks.iter()) {
            out += linalg::kron(&m.transpose(), l);
        }
        out
    }

    /// Frobenius norm of `Σ L_i Q M_i - K`.
    pub fn residual_for(&self, q: &DMatrix<f64>) -> f64 {
        let mut acc = -self.k.clone();
        for (l, m) in self.l_blocks.iter().zip(self.m_blocks.iter()) {
            acc += l * q * m;
        }
        acc.norm()
    }
}

/// Row-block subproblem for node `node` (0-based).
#[derive(Debug, Clone)]
pub struct NodeSylvesterSystem {
    pub node: usize,
    pub system: SylvesterSystem,
}

/// Block columns of the lower-triangular Toeplitz matrix whose block `(k, i)`
/// is `markov[k - i]` for `k >= i`.
fn toeplitz_columns(markov: &[DMatrix<f64>], r: usize) -> Vec<DMatrix<f64>> {
    let (p, m) = markov[0].shape();
    (0..r)
        .map(|i| {
            let mut col = DMatrix::zeros(r * p, m);
            for k in i..r {
                col.view_mut((k * p, 0), (p, m)).copy_from(&markov[k - i]);
            }
            col
        })
        .collect()
}

/// Minimum `r` for reconstruction, `2n - 1`.
pub fn required_order(net: &Network) -> usize {
    (2 * net.state_dim()).saturating_sub(1)
}

fn check_markov(net: &Network, markov: &MarkovSequence) -> Result<()> {
    let p: usize = net.output_dims().iter().sum();
    let m = net.external_input_dim();
    if markov.rows() != p || markov.cols() != m {
        return Err(Error::DimensionMismatch(format!(
            "node-output Markov parameters must be {p}x{m}, got {}x{}",
            markov.rows(),
            markov.cols()
        )));
    }
    let required = required_order(net);
    if markov.order() < required || markov.order() == 0 {
        return Err(Error::InsufficientOrder { r: markov.order(), required: required.max(1) });
    }
    Ok(())
}

/// `K_l = M_l - C A^l B R` for `l = 1..=r`, one matrix per `l`.
fn residual_markov(net: &Network, markov: &MarkovSequence) -> Vec<DMatrix<f64>> {
    let (a, b, c) = (net.a(), net.b(), net.c());
    let mut x = &a * &b * net.r();
    (1..=markov.order())
        .map(|l| {
            let k = &markov.params()[l] - &c * &x;
            x = &a * &x;
            k
        })
        .collect()
}

/// Full system for node-output Markov parameters `M_0..M_r` (the `S = I` convention).
pub fn build_system(net: &Network, markov: &MarkovSequence) -> Result<SylvesterSystem> {
    check_markov(net, markov)?;
    let r = markov.order();
    let k = linalg::vstack(&residual_markov(net, markov));
    let (a, b, c) = (net.a(), net.b(), net.c());
    let node_markov: Vec<DMatrix<f64>> = {
        let mut x = b.clone();
        (0..r)
            .map(|_| {
                let out = &c * &x;
                x = &a * &x;
                out
            })
            .collect()
    };
    Ok(SylvesterSystem {
        k,
        l_blocks: toeplitz_columns(&node_markov, r),
        m_blocks: markov.params()[..r].to_vec().into(),
        r,
        row_blocks: net.input_dims(),
        col_blocks: net.output_dims(),
    })
}

/// One subproblem per node: `K^(j) = Σ L_i^(j) Q^(j) M_i` with node-local Toeplitz blocks.
pub fn build_node_systems(net: &Network, markov: &MarkovSequence) -> Result<Vec<NodeSylvesterSystem>> {
    check_markov(net, markov)?;
    let r = markov.order();
    let k_all = residual_markov(net, markov);
    let m_blocks: Arc<[DMatrix<f64>]> = markov.params()[..r].to_vec().into();
    let out_offsets = offsets(&net.output_dims());
    Ok(net
        .nodes()
        .iter()
        .enumerate()
        .map(|(j, node)| {
            let pj = node.output_dim();
            let rows: Vec<DMatrix<f64>> =
                k_all.iter().map(|k| k.rows(out_offsets[j], pj).into_owned()).collect();
            let local = node.system().markov_parameters(r.saturating_sub(1));
            NodeSylvesterSystem {
                node: j,
                system: SylvesterSystem {
                    k: linalg::vstack(&rows),
                    l_blocks: toeplitz_columns(local.params(), r),
                    m_blocks: Arc::clone(&m_blocks),
                    r,
                    row_blocks: vec![node.input_dim()],
                    col_blocks: net.output_dims(),
                },
            }
        })
        .collect())
}

/// Converts external-output Markov parameters `S M_l` to node outputs using a
/// left inverse of `S`.
pub fn to_node_outputs(net: &Network, external: &MarkovSequence) -> Result<MarkovSequence> {
    let s = net.s();
    if s.is_square() && *s == DMatrix::identity(s.nrows(), s.ncols()) {
        return Ok(external.clone());
    }
    let (pinv, rank) = linalg::pseudo_inverse(s);
    if rank.rank < s.ncols() {
        return Err(Error::RankDeficientS { rank: rank.rank, cols: s.ncols() });
    }
    external.premultiplied(&pinv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Vectorized,
    Blockwise,
}

/// Per-row-block diagnostics of the blockwise solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostics {
    /// 1-based node id.
    pub node: usize,
    pub unknowns: usize,
    pub rank: usize,
    pub unique: bool,
    pub residual: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: SolverKind,
    #[serde(with = "matrix_format")]
    pub q_hat: DMatrix<f64>,
    pub row_blocks: Vec<usize>,
    pub col_blocks: Vec<usize>,
    /// Euclidean norm of the least-squares residual.
    pub residual: f64,
    /// `‖X^†‖_∞` for the coefficient matrix `X`.
    pub alpha: f64,
    pub bound: Option<f64>,
    pub unique: bool,
    pub rank: usize,
    pub unknowns: usize,
    pub blocks: Vec<BlockDiagnostics>,
}

struct LinearSolution {
    q: DMatrix<f64>,
    residual: f64,
    alpha: f64,
    rank: usize,
    unknowns: usize,
}

fn solve_linear(sys: &SylvesterSystem) -> LinearSolution {
    let x = sys.coefficient_matrix();
    let rhs = linalg::vec(&sys.k);
    let (pinv, info) = linalg::pseudo_inverse(&x);
    let q = &pinv * &rhs;
    let residual = (&x * &q - &rhs).norm();
    let (rows, cols) = sys.unknown_shape();
    LinearSolution {
        q: linalg::unvec(&q, rows, cols),
        residual,
        alpha: linalg::inf_norm(&pinv),
        rank: info.rank,
        unknowns: rows * cols,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    pub max_unknowns: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_unknowns: DEFAULT_MAX_UNKNOWNS }
    }
}

pub fn solve_vectorized(sys: &SylvesterSystem) -> Result<SolveReport> {
    solve_vectorized_with(sys, &SolverOptions::default())
}

pub fn solve_vectorized_with(sys: &SylvesterSystem, options: &SolverOptions) -> Result<SolveReport> {
    if sys.unknowns() > options.max_unknowns {
        return Err(Error::ProblemTooLarge { unknowns: sys.unknowns(), limit: options.max_unknowns });
    }
    let sol = solve_linear(sys);
    Ok(SolveReport {
        solver: SolverKind::Vectorized,
        unique: sol.rank == sol.unknowns,
        q_hat: sol.q,
        row_blocks: sys.row_blocks.clone(),
        col_blocks: sys.col_blocks.clone(),
        residual: sol.residual,
        alpha: sol.alpha,
        bound: None,
        rank: sol.rank,
        unknowns: sol.unknowns,
        blocks: Vec::new(),
    })
}

/// Least-squares reconstruction from perturbed Markov parameters. The
/// minimizer is the same pseudoinverse solution as [`solve_vectorized`]; `alpha`
/// is the constant of the perturbation bound.
pub fn solve_least_squares(sys: &SylvesterSystem) -> Result<SolveReport> {
    solve_vectorized(sys)
}

/// Solves every row block independently and stacks the results in node order.
pub fn solve_blockwise(systems: &[NodeSylvesterSystem], parallel: bool) -> Result<SolveReport> {
    if systems.is_empty() {
        return Err(Error::InvalidParameter("no row-block systems to solve".into()));
    }
    let mut ordered: Vec<&NodeSylvesterSystem> = systems.iter().collect();
    ordered.sort_by_key(|s| s.node);
    let solve = |s: &&NodeSylvesterSystem| (s.node, solve_linear(&s.system));
    let solutions: Vec<(usize, LinearSolution)> = if parallel {
        ordered.par_iter().map(solve).collect()
    } else {
        ordered.iter().map(solve).collect()
    };

    let q_hat = linalg::vstack(&solutions.iter().map(|(_, s)| s.q.clone()).collect::<Vec<_>>());
    let blocks: Vec<BlockDiagnostics> = solutions
        .iter()
        .map(|(node, s)| BlockDiagnostics {
            node: node + 1,
            unknowns: s.unknowns,
            rank: s.rank,
            unique: s.rank == s.unknowns,
            residual: s.residual,
            alpha: s.alpha,
        })
        .collect();
    Ok(SolveReport {
        solver: SolverKind::Blockwise,
        q_hat,
        row_blocks: ordered.iter().flat_map(|s| s.system.row_blocks.iter().copied()).collect(),
        col_blocks: ordered[0].system.col_blocks.clone(),
        residual: blocks.iter().map(|b| b.residual * b.residual).sum::<f64>().sqrt(),
        // the full pseudoinverse is a row/column permutation of the block-diagonal one
        alpha: blocks.iter().map(|b| b.alpha).fold(0.0, f64::max),
        bound: None,
        unique: blocks.iter().all(|b| b.unique),
        rank: blocks.iter().map(|b| b.rank).sum(),
        unknowns: blocks.iter().map(|b| b.unknowns).sum(),
        blocks,
    })
}

/// Bounds on the Markov-parameter perturbations entering the error bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBounds {
    /// Bound on `‖vec(col(Δ_1, ..., Δ_r))‖_∞`.
    pub stacked: f64,
    /// Bounds on `‖Δ_i^T‖_∞` for `i = 0..r-1`.
    pub transposed: Vec<f64>,
}

impl PerturbationBounds {
    /// The same bound `delta` for every perturbation.
    pub fn uniform(delta: f64, r: usize) -> Self {
        Self { stacked: delta, transposed: vec![delta; r] }
    }
}

/// `Σ_i ‖Δ_i^T‖_∞ ‖L_i‖_∞`, an upper bound on `‖Σ Δ_i^T ⊗ L_i‖_∞`.
pub fn kronecker_term(transposed: &[f64], l_blocks: &[DMatrix<f64>]) -> Result<f64> {
    if transposed.len() != l_blocks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} perturbation bounds for {} Toeplitz blocks",
            transposed.len(),
            l_blocks.len()
        )));
    }
    Ok(transposed.iter().zip(l_blocks).map(|(d, l)| d * linalg::inf_norm(l)).sum())
}

/// `α (δ + Σ_i ‖Δ_i^T‖_∞ ‖L_i‖_∞ · q_inf)`, an upper bound on `‖vec(Q̂) - vec(Q)‖_∞`.
pub fn robustness_bound(
    report: &SolveReport,
    bounds: &PerturbationBounds,
    q_inf: f64,
    l_blocks: &[DMatrix<f64>],
) -> Result<f64> {
    Ok(report.alpha * (bounds.stacked + kronecker_term(&bounds.transposed, l_blocks)? * q_inf))
}

/// Result of zeroing small entries of an estimate.
#[derive(Debug, Clone, Serialize)]
pub struct Thresholded {
    #[serde(with = "matrix_format")]
    pub q: DMatrix<f64>,
    pub gamma: f64,
    /// `bound < γ/2`: the zero pattern is then guaranteed correct.
    pub valid: bool,
}

/// Sets entries with `|q| < γ/2` to zero.
pub fn threshold_topology(q_hat: &DMatrix<f64>, gamma: f64, bound: f64) -> Result<Thresholded> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let cut = gamma / 2.0;
    Ok(Thresholded {
        q: q_hat.map(|x| if x.abs() < cut { 0.0 } else { x }),
        gamma,
        valid: bound < cut,
    })
}

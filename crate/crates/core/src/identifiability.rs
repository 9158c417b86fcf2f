//! Rank and constant-kernel tests for topological identifiability.
//!
//! A proper transfer matrix has trivial constant kernel exactly when the
//! stacked Markov parameters `col(M_0, ..., M_r)` have full column rank for
//! `r` at least its order. Every test in this module reduces to that check on
//! a Kronecker product of node and network transfer matrices.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::matrix_format;
use crate::linalg::{self, RankInfo};
use crate::lti::{MarkovOutput, MarkovSequence, Network, StateSpaceSystem};

/// Null space of `col(M_0, ..., M_r)`.
#[derive(Debug, Clone)]
pub struct ConstantKernel {
    pub basis: DMatrix<f64>,
    pub rank: RankInfo,
}

impl ConstantKernel {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_trivial(&self) -> bool {
        self.basis.ncols() == 0
    }
}

/// Common kernel of all coefficients. Each coefficient is scaled to unit
/// Frobenius norm first; this leaves the kernel unchanged and keeps fast-growing
/// coefficients of unstable systems from dominating the rank tolerance.
pub fn constant_kernel(stack: &MarkovSequence) -> ConstantKernel {
    let scaled: Vec<DMatrix<f64>> = stack
        .params()
        .iter()
        .map(|c| {
            let norm = c.norm();
            if norm > 0.0 { c / norm } else { c.clone() }
        })
        .collect();
    let (basis, rank) = linalg::null_space(&linalg::vstack(&scaled));
    ConstantKernel { basis, rank }
}

/// Coefficients of `T1(z) ⊗ T2(z)` for strictly proper `T1`, `T2`.
///
/// With `T1 = Σ a_i z^{-i-1}` and `T2 = Σ b_j z^{-j-1}`, coefficient `k` (of
/// `z^{-k-2}`) is `Σ_{i+j=k} a_i ⊗ b_j`. Returns coefficients `0..=depth`.
pub fn kron_markov(a: &MarkovSequence, b: &MarkovSequence, depth: usize) -> Result<MarkovSequence> {
    let available = a.len().min(b.len());
    if available < depth + 1 {
        return Err(Error::InsufficientDepth { available, required: depth + 1 });
    }
    let (rows, cols) = (a.rows() * b.rows(), a.cols() * b.cols());
    let coeffs = (0..=depth)
        .map(|k| {
            let mut acc = DMatrix::zeros(rows, cols);
            for i in 0..=k {
                acc += linalg::kron(&a.params()[i], &b.params()[k - i]);
            }
            acc
        })
        .collect();
    MarkovSequence::new(coeffs)
}

/// Which transfer matrix a kernel test was run on (1-based node ids).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSubject {
    Node(usize),
    Pair(usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelTestReport {
    pub subject: KernelSubject,
    pub stack_depth: usize,
    pub kernel_dim: usize,
    #[serde(with = "matrix_format")]
    pub kernel_basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub tolerance: f64,
}

impl KernelTestReport {
    fn from_kernel(subject: KernelSubject, stack_depth: usize, kernel: ConstantKernel) -> Self {
        Self {
            subject,
            stack_depth,
            kernel_dim: kernel.dim(),
            kernel_basis: kernel.basis,
            singular_values: kernel.rank.singular_values,
            tolerance: kernel.rank.tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.kernel_dim == 0
    }
}

/// A named rank condition and whether it held.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankFinding {
    pub name: String,
    pub rank: usize,
    pub required: usize,
    pub passed: bool,
}

impl RankFinding {
    fn at_least(name: &str, rank: usize, required: usize) -> Self {
        Self { name: name.to_owned(), rank, required, passed: rank >= required }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Constant kernels of `G_i ⊗ H_Q^T`; needs `Q`.
    General,
    /// Pairwise constant kernels of `G_i^T ⊗ G_j`; independent of `Q`.
    FullExcitation,
    /// Rank, controllability and observability conditions for identical SISO nodes.
    HomogeneousSiso,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentifiabilityVerdict {
    pub identifiable: bool,
    /// False when the test only establishes a necessary condition.
    pub conclusive: bool,
    pub method: Method,
    pub reports: Vec<KernelTestReport>,
    pub findings: Vec<RankFinding>,
    pub caveats: Vec<String>,
    pub rank_tolerance_factor: f64,
}

impl IdentifiabilityVerdict {
    fn new(method: Method) -> Self {
        Self {
            identifiable: false,
            conclusive: true,
            method,
            reports: Vec::new(),
            findings: Vec::new(),
            caveats: Vec::new(),
            rank_tolerance_factor: linalg::RANK_TOLERANCE_FACTOR,
        }
    }

    /// Reports and findings that failed.
    pub fn failures(&self) -> usize {
        self.reports.iter().filter(|r| !r.passed()).count()
            + self.findings.iter().filter(|f| !f.passed).count()
    }
}

/// Identifiability at the given `Q`, for `S` of full column rank.
///
/// Node `i` is tested with stacking depth `n_i * m + m_i * n` unless
/// `depth_override` is given.
pub fn check_identifiability_general(
    net: &Network,
    depth_override: Option<usize>,
) -> Result<IdentifiabilityVerdict> {
    let s_rank = linalg::numerical_rank(net.s()).rank;
    if s_rank < net.s().ncols() {
        return Err(Error::RankDeficientS { rank: s_rank, cols: net.s().ncols() });
    }
    let n = net.state_dim();
    let m = net.external_input_dim();
    let depths: Vec<usize> = net
        .nodes()
        .iter()
        .map(|node| depth_override.unwrap_or(node.state_dim() * m + node.input_dim() * n))
        .collect();
    let max_depth = depths.iter().copied().max().unwrap_or(0);
    let h_t = net.markov_exact(max_depth, MarkovOutput::NodeOutputs).transposed();

    let reports = net
        .nodes()
        .par_iter()
        .zip(depths.par_iter())
        .enumerate()
        .map(|(i, (node, &depth))| {
            let g = node.system().markov_parameters(depth);
            let stack = kron_markov(&g, &h_t, depth)?;
            Ok(KernelTestReport::from_kernel(KernelSubject::Node(i + 1), depth, constant_kernel(&stack)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut verdict = IdentifiabilityVerdict::new(Method::General);
    verdict.identifiable = reports.iter().all(KernelTestReport::passed);
    verdict.reports = reports;
    verdict.findings.push(RankFinding::at_least("s_full_column_rank", s_rank, net.s().ncols()));
    verdict
        .caveats
        .push("certifies identifiability at the given interconnection matrix Q only".into());
    if depth_override.is_none() {
        verdict.caveats.push(
            "stacking depth n_i*m + m_i*n is a realization-dimension bound, not a computed McMillan degree"
                .into(),
        );
    }
    Ok(verdict)
}

/// Pairwise test on `G_i^T ⊗ G_j`; conclusive when `S` has full column rank
/// and `R` has full row rank, a necessary condition otherwise.
pub fn check_identifiability_full_excitation(net: &Network) -> Result<IdentifiabilityVerdict> {
    let nodes = net.nodes();
    let pairs: Vec<(usize, usize)> =
        (0..nodes.len()).flat_map(|i| (0..nodes.len()).map(move |j| (i, j))).collect();
    let reports = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (ni, nj) = (&nodes[i], &nodes[j]);
            let depth = ni.state_dim() * nj.output_dim() + ni.output_dim() * nj.state_dim();
            let gi_t = ni.system().transposed().markov_parameters(depth);
            let gj = nj.system().markov_parameters(depth);
            let stack = kron_markov(&gi_t, &gj, depth)?;
            Ok(KernelTestReport::from_kernel(KernelSubject::Pair(i + 1, j + 1), depth, constant_kernel(&stack)))
        })
        .collect::<Result<Vec<_>>>()?;

    let s_rank = linalg::numerical_rank(net.s()).rank;
    let r_rank = linalg::numerical_rank(net.r()).rank;
    let s_finding = RankFinding::at_least("s_full_column_rank", s_rank, net.s().ncols());
    let r_finding = RankFinding::at_least("r_full_row_rank", r_rank, net.r().nrows());
    let sufficient = s_finding.passed && r_finding.passed;
    let kernels_ok = reports.iter().all(KernelTestReport::passed);

    let mut verdict = IdentifiabilityVerdict::new(Method::FullExcitation);
    verdict.reports = reports;
    verdict.findings = vec![s_finding, r_finding];
    if sufficient {
        verdict.identifiable = kernels_ok;
    } else {
        verdict.identifiable = false;
        verdict.conclusive = !kernels_ok;
        if kernels_ok {
            verdict.caveats.push(
                "necessary condition only: pairwise kernels are trivial but S lacks full column rank or R lacks full row rank"
                    .into(),
            );
        }
    }
    Ok(verdict)
}

/// Full row rank of `[CB, CAB, ..., CA^{n-1}B]`.
pub fn output_controllability(sys: &StateSpaceSystem) -> bool {
    let reach = linalg::krylov_matrix(sys.a(), sys.b(), sys.state_dim());
    let m = sys.c() * reach;
    linalg::numerical_rank(&m).rank == sys.output_dim()
}

/// How node homogeneity is established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Homogeneity {
    /// Exact matrix equality across all nodes.
    #[default]
    Detect,
    /// The caller asserts homogeneity; node 1 is taken as the shared realization.
    Asserted,
}

fn require_homogeneous_siso(net: &Network, mode: Homogeneity) -> Result<()> {
    if !net.is_siso() {
        return Err(Error::NotHomogeneousSiso("some node has m_i != 1 or p_i != 1".into()));
    }
    if mode == Homogeneity::Detect && !net.is_homogeneous() {
        return Err(Error::NotHomogeneousSiso("node realizations differ".into()));
    }
    Ok(())
}

pub fn check_homogeneous_siso(net: &Network) -> Result<IdentifiabilityVerdict> {
    check_homogeneous_siso_with(net, Homogeneity::Detect)
}

pub fn check_homogeneous_siso_with(net: &Network, mode: Homogeneity) -> Result<IdentifiabilityVerdict> {
    require_homogeneous_siso(net, mode)?;
    let n_nodes = net.node_count();
    let node = net.nodes()[0].system();

    let g0_rank = if node.state_dim() == 0 {
        0
    } else {
        linalg::numerical_rank(&node.markov_parameters(node.state_dim() - 1).stacked()).rank
    };
    let rank_s = linalg::numerical_rank(net.s()).rank;
    let rank_r = linalg::numerical_rank(net.r()).rank;
    let ctrb = linalg::numerical_rank(&linalg::krylov_matrix(net.q(), net.r(), n_nodes)).rank;
    let obsv = linalg::numerical_rank(&linalg::krylov_matrix(&net.q().transpose(), &net.s().transpose(), n_nodes))
        .rank;

    let g0 = RankFinding::at_least("node_transfer_nonzero", g0_rank, 1);
    let s = RankFinding::at_least("rank_s_equals_n", rank_s, n_nodes);
    let r = RankFinding::at_least("rank_r_equals_n", rank_r, n_nodes);
    let c = RankFinding::at_least("q_r_controllable", ctrb, n_nodes);
    let o = RankFinding::at_least("s_q_observable", obsv, n_nodes);
    let either = RankFinding::at_least("rank_s_or_r_full", rank_s.max(rank_r), n_nodes);

    let mut verdict = IdentifiabilityVerdict::new(Method::HomogeneousSiso);
    verdict.identifiable = g0.passed && ((s.passed && c.passed) || (r.passed && o.passed));
    if !g0.passed {
        verdict.caveats.push("node transfer function is identically zero, so F_Q(z) = 0 for every Q".into());
    }
    if !either.passed {
        verdict.caveats.push(
            "neither S nor R has rank N; for homogeneous SISO networks this alone rules out identifiability"
                .into(),
        );
    }
    if !c.passed || !o.passed {
        verdict.caveats.push(
            "(Q, R) uncontrollable or (S, Q) unobservable; both are necessary for homogeneous SISO networks".into(),
        );
    }
    if mode == Homogeneity::Asserted {
        verdict.caveats.push("homogeneity asserted by the caller, not verified".into());
    }
    verdict.findings = vec![g0, s, r, c, o, either];
    Ok(verdict)
}

/// For a homogeneous SISO network with `rank S < N` and `rank R < N`, builds
/// `Q̄ = T^{-1} Q T` with `T = I + v1 v2^T`, `S v1 = 0`, `v2^T R = 0`.
///
/// Returns `None` when every admissible choice of `v1`, `v2` gives back `Q`.
pub fn construct_indistinguishable(net: &Network) -> Result<Option<DMatrix<f64>>> {
    require_homogeneous_siso(net, Homogeneity::Detect)
        .map_err(|e| Error::PreconditionViolated(e.to_string()))?;
    let n_nodes = net.node_count();
    let rank_s = linalg::numerical_rank(net.s()).rank;
    let rank_r = linalg::numerical_rank(net.r()).rank;
    if rank_s >= n_nodes || rank_r >= n_nodes {
        return Err(Error::PreconditionViolated(format!(
            "needs rank S < N and rank R < N (rank S = {rank_s}, rank R = {rank_r}, N = {n_nodes})"
        )));
    }
    let (ker_s, _) = linalg::null_space(net.s());
    let (ker_rt, _) = linalg::null_space(&net.r().transpose());
    let q = net.q();
    let scale = 1.0 + linalg::max_abs(q);

    for v1 in ker_s.column_iter() {
        for v2 in ker_rt.column_iter() {
            let q_bar = similarity_witness(q, &v1.into_owned(), &v2.into_owned());
            if linalg::max_abs(&(&q_bar - q)) > 1e-10 * scale {
                return Ok(Some(q_bar));
            }
        }
    }
    Ok(None)
}

/// `T^{-1} Q T` with `T = I + v1 v2^T`; `v2` is doubled when `v2^T v1 = -1` would make `T` singular.
fn similarity_witness(q: &DMatrix<f64>, v1: &DVector<f64>, v2: &DVector<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let mut v2 = v2.clone();
    if (1.0 + v2.dot(v1)).abs() < 1e-8 {
        v2 *= 2.0;
    }
    let denom = 1.0 + v2.dot(v1);
    let outer = v1 * v2.transpose();
    let t = DMatrix::identity(n, n) + &outer;
    let t_inv = DMatrix::identity(n, n) - outer / denom;
    t_inv * q * t
}

/// `Q + v v^T` for `v` in the unobservable subspace of `(S, Q)`, or `Q + w w^T`
/// for `w` with `w^T Q^k R = 0`. Either leaves `S Q^k R` and thus `F_Q` unchanged
/// in a homogeneous SISO network. `None` when `(S, Q)` is observable and `(Q, R)` controllable.
pub fn shift_witness(net: &Network) -> Result<Option<DMatrix<f64>>> {
    require_homogeneous_siso(net, Homogeneity::Detect)
        .map_err(|e| Error::PreconditionViolated(e.to_string()))?;
    let n_nodes = net.node_count();
    let q = net.q();
    let obsv = linalg::krylov_matrix(&q.transpose(), &net.s().transpose(), n_nodes).transpose();
    let (unobservable, _) = linalg::null_space(&obsv);
    let ctrb = linalg::krylov_matrix(q, net.r(), n_nodes);
    let (uncontrollable, _) = linalg::null_space(&ctrb.transpose());
    let v = unobservable.column_iter().next().or_else(|| uncontrollable.column_iter().next());
    Ok(v.map(|v| q + v * v.transpose()))
}

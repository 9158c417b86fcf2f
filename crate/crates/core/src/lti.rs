//! Realizations, network assembly, simulation, Markov parameters and
//! transfer-matrix evaluation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;

/// Condition estimate above which `zI - A` is treated as singular.
pub const RESOLVENT_CONDITION_LIMIT: f64 = 1e14;

/// Discrete-time realization `x(t+1) = A x(t) + B u(t)`, `y(t) = C x(t) + D u(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpaceSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!("A is {}x{}, not square", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "C has {} columns, expected {n}",
                c.ncols()
            )));
        }
        let (p, m) = (c.nrows(), b.ncols());
        let d = d.unwrap_or_else(|| DMatrix::zeros(p, m));
        if d.shape() != (p, m) {
            return Err(Error::DimensionMismatch(format!(
                "D is {}x{}, expected {p}x{m}",
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// Realization without feedthrough.
    pub fn strictly_proper(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        Self::new(a, b, c, None)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Change of state coordinates `x' = T x`.
    pub fn similarity(&self, t: &DMatrix<f64>) -> Result<Self> {
        let n = self.state_dim();
        if t.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("transform must be {n}x{n}")));
        }
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("similarity transform is singular".into()))?;
        Ok(Self {
            a: t * &self.a * &t_inv,
            b: t * &self.b,
            c: &self.c * &t_inv,
            d: self.d.clone(),
        })
    }

    /// Dual realization `(A^T, C^T, B^T, D^T)`, whose transfer matrix is `G(z)^T`.
    pub fn transposed(&self) -> Self {
        Self {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
        }
    }

    /// `[C B, C A B, ..., C A^r B]`, the strictly proper part of the impulse response.
    pub fn markov_parameters(&self, r: usize) -> MarkovSequence {
        let mut params = Vec::with_capacity(r + 1);
        let mut x = self.b.clone();
        for _ in 0..=r {
            params.push(&self.c * &x);
            x = &self.a * x;
        }
        MarkovSequence { rows: self.output_dim(), cols: self.input_dim(), params }
    }
}

/// One node realization `(A_i, B_i, C_i)`; node models carry no feedthrough.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSystem {
    sys: StateSpaceSystem,
}

impl NodeSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        Ok(Self { sys: StateSpaceSystem::strictly_proper(a, b, c)? })
    }

    pub fn from_system(sys: StateSpaceSystem) -> Result<Self> {
        if sys.d().iter().any(|&x| x != 0.0) {
            return Err(Error::InvalidParameter("node systems must have zero feedthrough".into()));
        }
        Ok(Self { sys })
    }

    pub fn system(&self) -> &StateSpaceSystem {
        &self.sys
    }

    pub fn state_dim(&self) -> usize {
        self.sys.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.sys.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.sys.output_dim()
    }
}

/// Ordered impulse-response coefficients `M_0, ..., M_r`, all of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSequence {
    rows: usize,
    cols: usize,
    params: Vec<DMatrix<f64>>,
}

impl MarkovSequence {
    pub fn new(params: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = params
            .first()
            .ok_or_else(|| Error::InvalidParameter("Markov sequence must be nonempty".into()))?;
        let (rows, cols) = first.shape();
        if let Some((k, m)) = params.iter().enumerate().find(|(_, m)| m.shape() != (rows, cols)) {
            return Err(Error::DimensionMismatch(format!(
                "Markov parameter {k} is {}x{}, expected {rows}x{cols}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { rows, cols, params })
    }

    /// Highest index `r` in `M_0..M_r`.
    pub fn order(&self) -> usize {
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn params(&self) -> &[DMatrix<f64>] {
        &self.params
    }

    pub fn get(&self, k: usize) -> Option<&DMatrix<f64>> {
        self.params.get(k)
    }

    pub fn into_params(self) -> Vec<DMatrix<f64>> {
        self.params
    }

    /// `col(M_0, ..., M_r)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        linalg::vstack(&self.params)
    }

    /// Coefficients of `T(z)^T`.
    pub fn transposed(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            params: self.params.iter().map(|m| m.transpose()).collect(),
        }
    }

    /// Keeps `M_0..M_r`.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        if r >= self.params.len() {
            return Err(Error::InsufficientDepth { available: self.params.len(), required: r + 1 });
        }
        Ok(Self { rows: self.rows, cols: self.cols, params: self.params[..=r].to_vec() })
    }

    /// Left-multiplies every coefficient by `m`.
    pub fn premultiplied(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot premultiply {}-row Markov parameters by a {}x{} matrix",
                self.rows,
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { rows: m.nrows(), cols: self.cols, params: self.params.iter().map(|p| m * p).collect() })
    }

    /// Largest absolute entry over the whole sequence.
    pub fn max_abs(&self) -> f64 {
        self.params.iter().map(linalg::max_abs).fold(0.0, f64::max)
    }
}

/// Which output map the Markov parameters are taken through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkovOutput {
    /// Node outputs `w = C x`, i.e. the `S = I` convention used for reconstruction.
    NodeOutputs,
    /// External outputs `y = S C x`.
    External,
}

/// Network of node systems coupled through `v = Q w + R u`, observed through `y = S w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<NodeSystem>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    s: DMatrix<f64>,
}

impl Network {
    /// Validates the block partitions of `Q`, `R` and `S` against the node dimensions.
    pub fn assemble(
        nodes: Vec<NodeSystem>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        s: DMatrix<f64>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one node".into()));
        }
        let m_total: usize = nodes.iter().map(NodeSystem::input_dim).sum();
        let p_total: usize = nodes.iter().map(NodeSystem::output_dim).sum();
        if q.nrows() != m_total {
            return Err(Error::DimensionMismatch(format!(
                "Q has {} rows but the node inputs sum to {m_total} (row blocks {:?})",
                q.nrows(),
                nodes.iter().map(NodeSystem::input_dim).collect::<Vec<_>>()
            )));
        }
        if q.ncols() != p_total {
            return Err(Error::DimensionMismatch(format!(
                "Q has {} columns but the node outputs sum to {p_total} (column blocks {:?})",
                q.ncols(),
                nodes.iter().map(NodeSystem::output_dim).collect::<Vec<_>>()
            )));
        }
        if r.nrows() != m_total {
            return Err(Error::DimensionMismatch(format!(
                "R has {} rows but the node inputs sum to {m_total}",
                r.nrows()
            )));
        }
        if s.ncols() != p_total {
            return Err(Error::DimensionMismatch(format!(
                "S has {} columns but the node outputs sum to {p_total}",
                s.ncols()
            )));
        }
        Ok(Self { nodes, q, r, s })
    }

    pub fn nodes(&self) -> &[NodeSystem] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn state_dims(&self) -> Vec<usize> {
        self.nodes.iter().map(NodeSystem::state_dim).collect()
    }

    /// Node input dimensions `m_i`, the row partition of `Q`.
    pub fn input_dims(&self) -> Vec<usize> {
        self.nodes.iter().map(NodeSystem::input_dim).collect()
    }

    /// Node output dimensions `p_i`, the column partition of `Q`.
    pub fn output_dims(&self) -> Vec<usize> {
        self.nodes.iter().map(NodeSystem::output_dim).collect()
    }

    /// Total state dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.nodes.iter().map(NodeSystem::state_dim).sum()
    }

    pub fn external_input_dim(&self) -> usize {
        self.r.ncols()
    }

    pub fn external_output_dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn a(&self) -> DMatrix<f64> {
        linalg::direct_sum(&self.nodes.iter().map(|n| n.system().a()).collect::<Vec<_>>())
    }

    pub fn b(&self) -> DMatrix<f64> {
        linalg::direct_sum(&self.nodes.iter().map(|n| n.system().b()).collect::<Vec<_>>())
    }

    pub fn c(&self) -> DMatrix<f64> {
        linalg::direct_sum(&self.nodes.iter().map(|n| n.system().c()).collect::<Vec<_>>())
    }

    /// Block `Q_ij`, the weight of edge `j -> i`.
    pub fn q_block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let ro = offsets(&self.input_dims());
        let co = offsets(&self.output_dims());
        self.q
            .view((ro[i], co[j]), (self.nodes[i].input_dim(), self.nodes[j].output_dim()))
            .into_owned()
    }

    pub fn with_q(&self, q: DMatrix<f64>) -> Result<Self> {
        Self::assemble(self.nodes.clone(), q, self.r.clone(), self.s.clone())
    }

    pub fn with_r(&self, r: DMatrix<f64>) -> Result<Self> {
        Self::assemble(self.nodes.clone(), self.q.clone(), r, self.s.clone())
    }

    pub fn with_s(&self, s: DMatrix<f64>) -> Result<Self> {
        Self::assemble(self.nodes.clone(), self.q.clone(), self.r.clone(), s)
    }

    pub fn with_nodes(&self, nodes: Vec<NodeSystem>) -> Result<Self> {
        Self::assemble(nodes, self.q.clone(), self.r.clone(), self.s.clone())
    }

    pub fn is_siso(&self) -> bool {
        self.nodes.iter().all(|n| n.input_dim() == 1 && n.output_dim() == 1)
    }

    /// Exact equality of all node realizations.
    pub fn is_homogeneous(&self) -> bool {
        self.nodes.windows(2).all(|w| w[0] == w[1])
    }

    /// Closed loop `(A + BQC, BR, SC, 0)`.
    pub fn closed_loop(&self) -> StateSpaceSystem {
        let (a, b, c) = (self.a(), self.b(), self.c());
        let a_cl = &a + &b * &self.q * &c;
        StateSpaceSystem {
            d: DMatrix::zeros(self.external_output_dim(), self.external_input_dim()),
            a: a_cl,
            b: &b * &self.r,
            c: &self.s * &c,
        }
    }

    /// `M_l = C_out (A + BQC)^l B R` for `l = 0..=r`, by a running product.
    pub fn markov_exact(&self, r: usize, output: MarkovOutput) -> MarkovSequence {
        let (a, b, c) = (self.a(), self.b(), self.c());
        let a_cl = &a + &b * &self.q * &c;
        let c_out = match output {
            MarkovOutput::NodeOutputs => c,
            MarkovOutput::External => &self.s * c,
        };
        let mut params = Vec::with_capacity(r + 1);
        let mut x = &b * &self.r;
        for _ in 0..=r {
            params.push(&c_out * &x);
            x = &a_cl * x;
        }
        MarkovSequence { rows: c_out.nrows(), cols: self.r.ncols(), params }
    }

    /// Next node-output Markov parameter from the affine recursion
    /// `M_l = C A^l B R + sum_{i<l} C A^i B Q M_{l-i-1}`, where `l = prior.len()`.
    pub fn markov_recursion(
        &self,
        q_candidate: &DMatrix<f64>,
        prior: &[DMatrix<f64>],
    ) -> Result<DMatrix<f64>> {
        if q_candidate.shape() != self.q.shape() {
            return Err(Error::DimensionMismatch(format!(
                "candidate Q is {}x{}, expected {}x{}",
                q_candidate.nrows(),
                q_candidate.ncols(),
                self.q.nrows(),
                self.q.ncols()
            )));
        }
        let p: usize = self.output_dims().iter().sum();
        let m = self.external_input_dim();
        if let Some(bad) = prior.iter().find(|x| x.shape() != (p, m)) {
            return Err(Error::DimensionMismatch(format!(
                "prior Markov parameter is {}x{}, expected {p}x{m}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        let (a, b, c) = (self.a(), self.b(), self.c());
        let ell = prior.len();
        // running A^i B for i = 0..=ell
        let mut a_pow_b = b.clone();
        let mut acc = DMatrix::zeros(p, m);
        for i in 0..ell {
            acc += &c * &a_pow_b * q_candidate * &prior[ell - i - 1];
            a_pow_b = &a * a_pow_b;
        }
        Ok(acc + &c * a_pow_b * &self.r)
    }
}

/// Start offsets of consecutive blocks.
pub(crate) fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    out.push(0);
    for s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

/// Runs the recursion from `x0` over the columns of `u` (`m x T`), returning `y` (`p x T`).
pub fn simulate(sys: &StateSpaceSystem, x0: &DVector<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, expected {}",
            x0.len(),
            sys.state_dim()
        )));
    }
    if u.nrows() != sys.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} channels, expected {}",
            u.nrows(),
            sys.input_dim()
        )));
    }
    let horizon = u.ncols();
    let mut y = DMatrix::zeros(sys.output_dim(), horizon);
    let mut x = x0.clone();
    for t in 0..horizon {
        let ut = u.column(t);
        y.set_column(t, &(&sys.c * &x + &sys.d * ut));
        x = &sys.a * &x + &sys.b * ut;
    }
    Ok(y)
}

/// `C (zI - A)^{-1} B + D`.
pub fn transfer_eval(sys: &StateSpaceSystem, z: Complex64) -> Result<DMatrix<Complex64>> {
    let n = sys.state_dim();
    let to_c = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    let d = to_c(&sys.d);
    if n == 0 {
        return Ok(d);
    }
    let resolvent = DMatrix::<Complex64>::identity(n, n) * z - to_c(&sys.a);
    let sv = resolvent.clone().singular_values();
    let (s_max, s_min) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if condition.is_nan() || condition > RESOLVENT_CONDITION_LIMIT {
        return Err(Error::SingularResolvent { z: format!("{z}"), condition });
    }
    let x = resolvent
        .lu()
        .solve(&to_c(&sys.b))
        .ok_or_else(|| Error::SingularResolvent { z: format!("{z}"), condition })?;
    Ok(to_c(&sys.c) * x + d)
}

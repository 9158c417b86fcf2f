//! Topology extraction, comparison metrics and example network generators.
//!
//! Nodes are numbered from 1 in every public type. An edge `j -> i` exists
//! when the block `Q_ij` has an entry above the extraction tolerance.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::matrix_format;
use crate::lti::{offsets, Network, NodeSystem};

/// Row blocks `(m_i)` and column blocks `(p_i)` of an interconnection matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub row_blocks: Vec<usize>,
    pub col_blocks: Vec<usize>,
}

impl BlockPartition {
    pub fn new(row_blocks: Vec<usize>, col_blocks: Vec<usize>) -> Result<Self> {
        if row_blocks.len() != col_blocks.len() {
            return Err(Error::PartitionMismatch(format!(
                "{} row blocks but {} column blocks",
                row_blocks.len(),
                col_blocks.len()
            )));
        }
        Ok(Self { row_blocks, col_blocks })
    }

    /// Partition of the network's `Q`.
    pub fn of_network(net: &Network) -> Self {
        Self { row_blocks: net.input_dims(), col_blocks: net.output_dims() }
    }

    /// One scalar block per node.
    pub fn scalar(n: usize) -> Self {
        Self { row_blocks: vec![1; n], col_blocks: vec![1; n] }
    }

    pub fn node_count(&self) -> usize {
        self.row_blocks.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.row_blocks.iter().sum(), self.col_blocks.iter().sum())
    }
}

/// A weighted directed edge `from -> to` carrying the block `Q_{to,from}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    #[serde(with = "matrix_format")]
    pub weight: DMatrix<f64>,
}

impl Edge {
    pub fn weight_maxabs(&self) -> f64 {
        self.weight.amax()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    partition: BlockPartition,
    edges: BTreeMap<(usize, usize), DMatrix<f64>>,
}

/// Edges for blocks whose max-abs entry exceeds `tol`; `tol = 0` keeps every nonzero block.
pub fn extract_topology(q: &DMatrix<f64>, partition: &BlockPartition, tol: f64) -> Result<Topology> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidParameter(format!("tolerance must be nonnegative, got {tol}")));
    }
    if q.shape() != partition.shape() {
        return Err(Error::PartitionMismatch(format!(
            "matrix is {}x{} but the partition describes {}x{}",
            q.nrows(),
            q.ncols(),
            partition.shape().0,
            partition.shape().1
        )));
    }
    let ro = offsets(&partition.row_blocks);
    let co = offsets(&partition.col_blocks);
    let mut edges = BTreeMap::new();
    for (i, &mi) in partition.row_blocks.iter().enumerate() {
        for (j, &pj) in partition.col_blocks.iter().enumerate() {
            let block = q.view((ro[i], co[j]), (mi, pj)).into_owned();
            if block.iter().any(|x| x.abs() > tol) {
                edges.insert((j + 1, i + 1), block);
            }
        }
    }
    Ok(Topology { partition: partition.clone(), edges })
}

impl Topology {
    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn node_count(&self) -> usize {
        self.partition.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains_key(&(from, to))
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.keys().copied().collect()
    }

    /// Edges sorted by `(from, to)`.
    pub fn edges(&self) -> Vec<Edge> {
        self.edges
            .iter()
            .map(|(&(from, to), w)| Edge { from, to, weight: w.clone() })
            .collect()
    }

    /// Dense matrix with the edge blocks in place and zeros elsewhere.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (rows, cols) = self.partition.shape();
        let ro = offsets(&self.partition.row_blocks);
        let co = offsets(&self.partition.col_blocks);
        let mut q = DMatrix::zeros(rows, cols);
        for (&(from, to), w) in &self.edges {
            q.view_mut((ro[to - 1], co[from - 1]), w.shape()).copy_from(w);
        }
        q
    }

    /// Node-level matrix of block max-abs values, rows indexed by `to`.
    pub fn heatmap(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut h = DMatrix::zeros(n, n);
        for (&(from, to), w) in &self.edges {
            h[(to - 1, from - 1)] = w.amax();
        }
        h
    }

    /// Edge list with header `from,to,weight_maxabs`.
    pub fn write_edge_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["from", "to", "weight_maxabs"])?;
        for (&(from, to), block) in &self.edges {
            w.write_record(&[from.to_string(), to.to_string(), format!("{:.16e}", block.amax())])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_doc(&self) -> TopologyDoc {
        TopologyDoc { nodes: self.node_count(), partition: self.partition.clone(), edges: self.edges() }
    }
}

/// JSON adjacency with full weight blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDoc {
    pub nodes: usize,
    pub partition: BlockPartition,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyComparison {
    /// Edges of the reference absent from the candidate.
    pub missing_edges: Vec<(usize, usize)>,
    /// Edges of the candidate absent from the reference.
    pub spurious_edges: Vec<(usize, usize)>,
    pub precision: f64,
    pub recall: f64,
    /// Largest entrywise weight difference over common edges.
    pub max_weight_error: f64,
}

impl TopologyComparison {
    pub fn is_exact(&self) -> bool {
        self.missing_edges.is_empty() && self.spurious_edges.is_empty()
    }
}

/// Compares `candidate` against `reference`. An empty candidate has precision 1,
/// an empty reference recall 1.
pub fn compare(reference: &Topology, candidate: &Topology) -> Result<TopologyComparison> {
    if reference.partition != candidate.partition {
        return Err(Error::PartitionMismatch(format!(
            "reference partition {:?} differs from candidate partition {:?}",
            reference.partition, candidate.partition
        )));
    }
    let a = reference.edge_set();
    let b = candidate.edge_set();
    let common = a.intersection(&b).count() as f64;
    let ratio = |den: usize| if den == 0 { 1.0 } else { common / den as f64 };
    let max_weight_error = a
        .intersection(&b)
        .map(|k| (&reference.edges[k] - &candidate.edges[k]).amax())
        .fold(0.0, f64::max);
    Ok(TopologyComparison {
        missing_edges: a.difference(&b).copied().collect(),
        spurious_edges: b.difference(&a).copied().collect(),
        precision: ratio(b.len()),
        recall: ratio(a.len()),
        max_weight_error,
    })
}

/// Angle of oscillator `i` (1-based) in the ring.
pub fn oscillator_angle(i: usize) -> f64 {
    (0.2 + 0.01 * i as f64) * std::f64::consts::PI
}

pub fn oscillator_node(theta: f64) -> NodeSystem {
    let (s, c) = theta.sin_cos();
    NodeSystem::new(
        DMatrix::from_row_slice(2, 2, &[c, s, -s, c]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .expect("oscillator dimensions are consistent")
}

/// Diffusive coupling on a cycle with self-loops: `-1` on the diagonal, `1/2`
/// between ring neighbours.
pub fn ring_coupling(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -1.0
        } else if (i + 1) % n == j || (j + 1) % n == i {
            0.5
        } else {
            0.0
        }
    })
}

/// Ring of `n >= 3` rotation oscillators with the external input at node 1
/// and every node output measured.
pub fn make_oscillator_ring(n: usize) -> Result<Network> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("an oscillator ring needs at least 3 nodes, got {n}")));
    }
    let nodes = (1..=n).map(|i| oscillator_node(oscillator_angle(i))).collect();
    let mut r = DMatrix::zeros(n, 1);
    r[(0, 0)] = 1.0;
    Network::assemble(nodes, ring_coupling(n), r, DMatrix::identity(n, n))
}

/// Oscillator ring with an independent external input at every node (`R = I`).
pub fn make_oscillator_ring_full_input(n: usize) -> Result<Network> {
    make_oscillator_ring(n)?.with_r(DMatrix::identity(n, n))
}

/// Integrator node coupled with a double-integrator chain, input at node 1 and
/// output at node 2.
pub fn make_integrator_chain(q: DMatrix<f64>) -> Result<Network> {
    let n1 = NodeSystem::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), DMatrix::identity(1, 1))?;
    let n2 = NodeSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )?;
    Network::assemble(
        vec![n1, n2],
        q,
        DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
    )
}

/// `N` scalar integrators (`A_i = 0`, `B_i = C_i = 1`) with the given couplings.
pub fn make_integrator_network(q: DMatrix<f64>, r: DMatrix<f64>, s: DMatrix<f64>) -> Result<Network> {
    let node = NodeSystem::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), DMatrix::identity(1, 1))?;
    Network::assemble(vec![node; q.nrows()], q, r, s)
}

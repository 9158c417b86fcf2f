//! File formats: network and Markov-sequence JSON, trajectory CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lti::{MarkovSequence, Network, NodeSystem};
use crate::markov_est::DataSet;

/// Dense matrix as `{rows, cols, data}` with row-major `data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: linalg::to_row_major(m) }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        linalg::from_row_major(self.rows, self.cols, &self.data).ok_or_else(|| {
            Error::Format(format!(
                "matrix declares {}x{} but has {} entries",
                self.rows,
                self.cols,
                self.data.len()
            ))
        })
    }
}

/// `#[serde(with = "matrix_format")]` adapter for `DMatrix<f64>`.
pub mod matrix_format {
    use super::MatrixDoc;
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        MatrixDoc::from_matrix(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        MatrixDoc::deserialize(d)?.to_matrix().map_err(serde::de::Error::custom)
    }
}

/// Matrix with its block partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedMatrixDoc {
    pub row_blocks: Vec<usize>,
    pub col_blocks: Vec<usize>,
    #[serde(flatten)]
    pub matrix: MatrixDoc,
}

impl PartitionedMatrixDoc {
    pub fn new(m: &DMatrix<f64>, row_blocks: Vec<usize>, col_blocks: Vec<usize>) -> Self {
        Self { row_blocks, col_blocks, matrix: MatrixDoc::from_matrix(m) }
    }

    pub fn to_matrix(&self, what: &str) -> Result<DMatrix<f64>> {
        let m = self.matrix.to_matrix()?;
        if self.row_blocks.iter().sum::<usize>() != m.nrows() || self.col_blocks.iter().sum::<usize>() != m.ncols() {
            return Err(Error::Format(format!("{what}: block partition does not match its {}x{} shape", m.nrows(), m.ncols())));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "A")]
    pub a: MatrixDoc,
    #[serde(rename = "B")]
    pub b: MatrixDoc,
    #[serde(rename = "C")]
    pub c: MatrixDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub nodes: Vec<NodeDoc>,
    #[serde(rename = "Q")]
    pub q: PartitionedMatrixDoc,
    #[serde(rename = "R")]
    pub r: PartitionedMatrixDoc,
    #[serde(rename = "S")]
    pub s: PartitionedMatrixDoc,
}

impl NetworkDoc {
    pub fn from_network(net: &Network) -> Self {
        let nodes = net
            .nodes()
            .iter()
            .map(|node| {
                let sys = node.system();
                NodeDoc {
                    n: node.state_dim(),
                    m: node.input_dim(),
                    p: node.output_dim(),
                    a: MatrixDoc::from_matrix(sys.a()),
                    b: MatrixDoc::from_matrix(sys.b()),
                    c: MatrixDoc::from_matrix(sys.c()),
                }
            })
            .collect();
        Self {
            nodes,
            q: PartitionedMatrixDoc::new(net.q(), net.input_dims(), net.output_dims()),
            r: PartitionedMatrixDoc::new(net.r(), net.input_dims(), vec![net.external_input_dim()]),
            s: PartitionedMatrixDoc::new(net.s(), vec![net.external_output_dim()], net.output_dims()),
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, doc) in self.nodes.iter().enumerate() {
            let (a, b, c) = (doc.a.to_matrix()?, doc.b.to_matrix()?, doc.c.to_matrix()?);
            if a.shape() != (doc.n, doc.n) || b.shape() != (doc.n, doc.m) || c.shape() != (doc.p, doc.n) {
                return Err(Error::Format(format!(
                    "node {}: matrices do not match declared n={}, m={}, p={}",
                    i + 1,
                    doc.n,
                    doc.m,
                    doc.p
                )));
            }
            nodes.push(NodeSystem::new(a, b, c)?);
        }
        let m: Vec<usize> = self.nodes.iter().map(|n| n.m).collect();
        let p: Vec<usize> = self.nodes.iter().map(|n| n.p).collect();
        if self.q.row_blocks != m || self.q.col_blocks != p {
            return Err(Error::Format("Q partition does not match node dimensions".into()));
        }
        if self.r.row_blocks != m {
            return Err(Error::Format("R row partition does not match node inputs".into()));
        }
        if self.s.col_blocks != p {
            return Err(Error::Format("S column partition does not match node outputs".into()));
        }
        Network::assemble(nodes, self.q.to_matrix("Q")?, self.r.to_matrix("R")?, self.s.to_matrix("S")?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovDoc {
    pub p: usize,
    pub m: usize,
    pub r: usize,
    /// Row-major `M_0, ..., M_r`.
    pub params: Vec<Vec<f64>>,
}

impl MarkovDoc {
    pub fn from_sequence(seq: &MarkovSequence) -> Self {
        Self {
            p: seq.rows(),
            m: seq.cols(),
            r: seq.order(),
            params: seq.params().iter().map(linalg::to_row_major).collect(),
        }
    }

    pub fn to_sequence(&self) -> Result<MarkovSequence> {
        if self.params.len() != self.r + 1 {
            return Err(Error::Format(format!("r = {} requires {} parameters, found {}", self.r, self.r + 1, self.params.len())));
        }
        let params = self
            .params
            .iter()
            .enumerate()
            .map(|(k, data)| {
                linalg::from_row_major(self.p, self.m, data)
                    .ok_or_else(|| Error::Format(format!("M_{k} has {} entries, expected {}", data.len(), self.p * self.m)))
            })
            .collect::<Result<Vec<_>>>()?;
        MarkovSequence::new(params)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let mut s = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut s)?;
    Ok(serde_json::from_str(&s)?)
}

pub fn save_network(path: &Path, net: &Network) -> Result<()> {
    write_json(path, &NetworkDoc::from_network(net))
}

pub fn load_network(path: &Path) -> Result<Network> {
    read_json::<NetworkDoc>(path)?.to_network()
}

pub fn save_markov(path: &Path, seq: &MarkovSequence) -> Result<()> {
    write_json(path, &MarkovDoc::from_sequence(seq))
}

pub fn load_markov(path: &Path) -> Result<MarkovSequence> {
    read_json::<MarkovDoc>(path)?.to_sequence()
}

/// Writes `t,u_1..u_m,y_1..y_p`, one row per sample.
pub fn write_trajectory<W: Write>(writer: W, data: &DataSet) -> Result<()> {
    let (u, y) = (data.u(), data.y());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((1..=u.nrows()).map(|i| format!("u_{i}")));
    header.extend((1..=y.nrows()).map(|i| format!("y_{i}")));
    w.write_record(&header)?;
    for t in 0..data.len() {
        let mut rec = vec![t.to_string()];
        rec.extend(u.column(t).iter().map(|x| format!("{x:.16e}")));
        rec.extend(y.column(t).iter().map(|x| format!("{x:.16e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(reader: R) -> Result<DataSet> {
    let mut rd = csv::Reader::from_reader(reader);
    let header = rd.headers()?.clone();
    if header.get(0) != Some("t") {
        return Err(Error::Format("trajectory CSV must start with a `t` column".into()));
    }
    let m = header.iter().filter(|h| h.starts_with("u_")).count();
    let p = header.iter().filter(|h| h.starts_with("y_")).count();
    if m + p + 1 != header.len() {
        return Err(Error::Format("trajectory columns must be t, u_*, y_*".into()));
    }
    let mut u_cols = Vec::new();
    let mut y_cols = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", row + 1)))?;
        u_cols.extend_from_slice(&values[..m]);
        y_cols.extend_from_slice(&values[m..]);
    }
    let t = u_cols.len().checked_div(m).unwrap_or_else(|| y_cols.len() / p.max(1));
    DataSet::new(DMatrix::from_column_slice(m, t, &u_cols), DMatrix::from_column_slice(p, t, &y_cols))
}

pub fn save_trajectory(path: &Path, data: &DataSet) -> Result<()> {
    write_trajectory(BufWriter::new(File::create(path)?), data)
}

pub fn load_trajectory(path: &Path) -> Result<DataSet> {
    read_trajectory(BufReader::new(File::open(path)?))
}

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use topoid::{Network, NodeSystem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_node(rng: &mut ChaCha8Rng, max_state: usize, max_io: usize) -> NodeSystem {
    let n = rng.random_range(1..=max_state);
    let m = rng.random_range(1..=max_io);
    let p = rng.random_range(1..=max_io);
    let a = normal(rng, n, n) * (0.5 / (n as f64).sqrt());
    NodeSystem::new(a, normal(rng, n, m), normal(rng, p, n)).unwrap()
}

/// Random network with block-sparse `Q`, `R = I` and `S = I`.
pub fn random_network(rng: &mut ChaCha8Rng, nodes: usize, max_state: usize, max_io: usize) -> Network {
    let nodes: Vec<NodeSystem> = (0..nodes).map(|_| random_node(rng, max_state, max_io)).collect();
    let m: Vec<usize> = nodes.iter().map(|n| n.input_dim()).collect();
    let p: Vec<usize> = nodes.iter().map(|n| n.output_dim()).collect();
    let (mt, pt): (usize, usize) = (m.iter().sum(), p.iter().sum());
    let mut q = normal(rng, mt, pt) * 0.3;
    let mut ro = 0;
    for &mi in &m {
        let mut co = 0;
        for &pj in &p {
            if rng.random_bool(0.4) {
                q.view_mut((ro, co), (mi, pj)).fill(0.0);
            }
            co += pj;
        }
        ro += mi;
    }
    Network::assemble(nodes, q, DMatrix::identity(mt, mt), DMatrix::identity(pt, pt)).unwrap()
}

/// Random invertible matrix, well away from singular.
pub fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) * 2.0 + normal(rng, n, n) * (0.5 / (n as f64).sqrt())
}

pub fn random_point(rng: &mut ChaCha8Rng, radius: std::ops::Range<f64>) -> Complex64 {
    let rho = rng.random_range(radius);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    Complex64::from_polar(rho, phi)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn unit(n: usize, k: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[k] = 1.0;
    v
}

pub fn complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Rank of a complex matrix via the real embedding `[Re; Im]` of a stack of samples.
pub fn real_embedding(samples: &[DMatrix<Complex64>]) -> DMatrix<f64> {
    let rows: usize = samples.iter().map(|s| 2 * s.nrows()).sum();
    let cols = samples[0].ncols();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for s in samples {
        out.view_mut((r, 0), s.shape()).copy_from(&s.map(|z| z.re));
        out.view_mut((r + s.nrows(), 0), s.shape()).copy_from(&s.map(|z| z.im));
        r += 2 * s.nrows();
    }
    out
}

/// Kronecker product of complex matrices.
pub fn ckron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

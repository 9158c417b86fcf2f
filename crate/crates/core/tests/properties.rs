mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use topoid::graph::{self, BlockPartition};
use topoid::identifiability::{
    check_homogeneous_siso, check_identifiability_full_excitation, check_identifiability_general, constant_kernel,
    kron_markov,
};
use topoid::linalg;
use topoid::lti::{simulate, transfer_eval, MarkovOutput, MarkovSequence};
use topoid::noise::{perturb_markov, NoiseDistribution};
use topoid::sylvester::{self, PerturbationBounds};

#[test]
fn markov_parameters_are_the_impulse_response() {
    let mut rng = rng(11);
    for _ in 0..20 {
        let net = random_network(&mut rng, 3, 3, 2);
        let sys = net.closed_loop();
        let r = 8;
        let markov = net.markov_exact(r, MarkovOutput::External);
        for k in 0..sys.input_dim() {
            let mut u = DMatrix::zeros(sys.input_dim(), r + 2);
            u[(k, 0)] = 1.0;
            let y = simulate(&sys, &DVector::zeros(sys.state_dim()), &u).unwrap();
            assert_eq!(y.column(0).amax(), 0.0);
            for l in 0..=r {
                let expected = markov.params()[l].column(k);
                assert!((y.column(l + 1) - expected).amax() < 1e-12 * (1.0 + expected.amax()));
            }
        }
    }
}

#[test]
fn recursion_matches_direct_markov() {
    let mut rng = rng(12);
    for _ in 0..50 {
        let nodes = rng_nodes(&mut rng);
        let net = random_network(&mut rng, nodes, 3, 2);
        let r = 10;
        let direct = net.markov_exact(r, MarkovOutput::NodeOutputs);
        let mut prior: Vec<DMatrix<f64>> = Vec::new();
        for l in 0..=r {
            let next = net.markov_recursion(net.q(), &prior).unwrap();
            let scale = 1.0 + direct.params()[l].amax();
            assert!(max_abs_diff(&next, &direct.params()[l]) < 1e-10 * scale, "l = {l}");
            prior.push(next);
        }
    }
}

fn rng_nodes(rng: &mut rand_chacha::ChaCha8Rng) -> usize {
    use rand::Rng;
    rng.random_range(2..=4)
}

#[test]
fn closed_loop_transfer_matches_feedback_formula() {
    let mut rng = rng(13);
    for _ in 0..20 {
        let net = random_network(&mut rng, 3, 2, 2);
        for _ in 0..5 {
            let z = random_point(&mut rng, 2.0..6.0);
            let blocks: Vec<DMatrix<Complex64>> =
                net.nodes().iter().map(|n| transfer_eval(n.system(), z).unwrap()).collect();
            let (mt, pt) = net.q().shape();
            let mut g = DMatrix::zeros(pt, mt);
            let (mut ro, mut co) = (0, 0);
            for b in &blocks {
                g.view_mut((ro, co), b.shape()).copy_from(b);
                ro += b.nrows();
                co += b.ncols();
            }
            let q = complex(net.q());
            let lhs = DMatrix::<Complex64>::identity(pt, pt) - &g * &q;
            let inner = lhs.lu().solve(&(&g * complex(net.r()))).unwrap();
            let expected = complex(net.s()) * inner;
            let actual = transfer_eval(&net.closed_loop(), z).unwrap();
            let err = (&actual - &expected).map(|c| c.norm()).amax();
            assert!(err < 1e-10 * (1.0 + expected.map(|c| c.norm()).amax()));
        }
    }
}

#[test]
fn verdicts_are_invariant_under_node_similarity() {
    let mut rng = rng(14);
    for _ in 0..10 {
        let net = random_network(&mut rng, 3, 2, 2);
        let nodes = net
            .nodes()
            .iter()
            .map(|n| {
                let t = random_invertible(&mut rng, n.state_dim());
                topoid::NodeSystem::from_system(n.system().similarity(&t).unwrap()).unwrap()
            })
            .collect();
        let moved = net.with_nodes(nodes).unwrap();
        let a = check_identifiability_general(&net, None).unwrap();
        let b = check_identifiability_general(&moved, None).unwrap();
        assert_eq!(a.identifiable, b.identifiable);
        let dims = |v: &topoid::identifiability::IdentifiabilityVerdict| {
            v.reports.iter().map(|r| r.kernel_dim).collect::<Vec<_>>()
        };
        assert_eq!(dims(&a), dims(&b));
        let a = check_identifiability_full_excitation(&net).unwrap();
        let b = check_identifiability_full_excitation(&moved).unwrap();
        assert_eq!(a.identifiable, b.identifiable);
        assert_eq!(dims(&a), dims(&b));
    }
}

#[test]
fn kron_markov_matches_product_of_transfers() {
    let mut rng = rng(15);
    for _ in 0..10 {
        let net = random_network(&mut rng, 2, 2, 2);
        let depth = 40;
        let g = net.nodes()[0].system();
        let h = net.closed_loop();
        let stack =
            kron_markov(&g.markov_parameters(depth), &net.markov_exact(depth, MarkovOutput::NodeOutputs), depth)
                .unwrap();
        let z = random_point(&mut rng, 40.0..50.0);
        // G(z) ⊗ H(z) = Σ_k coeff_k z^{-k-2}
        let mut series = DMatrix::<Complex64>::zeros(stack.rows(), stack.cols());
        let zinv = 1.0 / z;
        let mut pow = zinv * zinv;
        for c in stack.params() {
            series += complex(c) * pow;
            pow *= zinv;
        }
        let direct = ckron(&transfer_eval(g, z).unwrap(), &transfer_eval(&h, z).unwrap());
        let err = (&series - &direct).map(|c| c.norm()).amax();
        assert!(err < 1e-12 * (1.0 + direct.map(|c| c.norm()).amax()), "err = {err}");
    }
}

/// Kernel dimension of `G_i(z) ⊗ H^T(z)` from point evaluations.
fn sampled_kernel_dim(net: &topoid::Network, node: usize, rng: &mut rand_chacha::ChaCha8Rng) -> usize {
    let g = net.nodes()[node].system();
    let h = net.closed_loop();
    let samples: Vec<DMatrix<Complex64>> = (0..12)
        .map(|_| {
            let z = random_point(rng, 1.5..3.0);
            ckron(&transfer_eval(g, z).unwrap(), &transfer_eval(&h, z).unwrap().transpose())
        })
        .collect();
    let stacked = real_embedding(&samples);
    stacked.ncols() - linalg::numerical_rank(&stacked).rank
}

#[test]
fn constant_kernel_matches_sampled_transfer_kernel() {
    let mut rng = rng(16);
    for _ in 0..15 {
        let net = random_network(&mut rng, 3, 2, 1);
        let verdict = check_identifiability_general(&net, None).unwrap();
        for (i, report) in verdict.reports.iter().enumerate() {
            assert_eq!(report.kernel_dim, sampled_kernel_dim(&net, i, &mut rng));
        }
    }
    // a node whose output never moves gives a kernel everywhere
    let net = graph::make_integrator_network(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let verdict = check_identifiability_general(&net, None).unwrap();
    for (i, report) in verdict.reports.iter().enumerate() {
        assert_eq!(report.kernel_dim, sampled_kernel_dim(&net, i, &mut rng));
    }
    assert!(!verdict.identifiable);
}

#[test]
fn general_and_full_excitation_agree_when_both_apply() {
    let mut rng = rng(17);
    for _ in 0..50 {
        let net = random_network(&mut rng, 3, 2, 2);
        let general = check_identifiability_general(&net, None).unwrap();
        let full = check_identifiability_full_excitation(&net).unwrap();
        assert!(full.conclusive);
        assert_eq!(general.identifiable, full.identifiable);
    }
}

#[test]
fn kernel_dimension_is_stable_under_depth_doubling() {
    let mut rng = rng(18);
    for _ in 0..20 {
        let net = random_network(&mut rng, 3, 2, 2);
        let n = net.state_dim();
        let m = net.external_input_dim();
        let h = net.markov_exact(4 * n * (m + 3), MarkovOutput::NodeOutputs).transposed();
        for node in net.nodes() {
            let depth = node.state_dim() * m + node.input_dim() * n;
            let g = node.system().markov_parameters(2 * depth);
            let once = constant_kernel(&kron_markov(&g, &h, depth).unwrap());
            let twice = constant_kernel(&kron_markov(&g, &h, 2 * depth).unwrap());
            assert_eq!(once.dim(), twice.dim());
        }
    }
}

#[test]
fn homogeneous_checks_agree_with_general_test() {
    let node = topoid::NodeSystem::new(
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
    )
    .unwrap();
    let mut rng = rng(19);
    for _ in 0..20 {
        let q = normal(&mut rng, 4, 4).map(|x| if x.abs() < 0.6 { 0.0 } else { x });
        let r = DMatrix::from_fn(4, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let net = topoid::Network::assemble(vec![node.clone(); 4], q, r, DMatrix::identity(4, 4)).unwrap();
        let siso = check_homogeneous_siso(&net).unwrap();
        let general = check_identifiability_general(&net, None).unwrap();
        assert_eq!(siso.identifiable, general.identifiable);
    }
}

fn identifiable_networks(seed: u64, count: usize) -> Vec<topoid::Network> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for _ in 0..20 * count {
        let net = random_network(&mut rng, 3, 2, 2);
        if check_identifiability_general(&net, None).unwrap().identifiable {
            out.push(net);
            if out.len() == count {
                break;
            }
        }
    }
    assert_eq!(out.len(), count, "not enough identifiable samples");
    out
}

#[test]
fn exact_recovery_and_solver_equivalence() {
    for net in identifiable_networks(20, 30) {
        let r = sylvester::required_order(&net);
        let markov = net.markov_exact(r, MarkovOutput::NodeOutputs);
        let sys = sylvester::build_system(&net, &markov).unwrap();
        let full = sylvester::solve_vectorized(&sys).unwrap();
        assert!(full.unique);
        let scale = 1.0 + net.q().amax();
        assert!(max_abs_diff(&full.q_hat, net.q()) < 1e-7 * scale);
        let blocks = sylvester::solve_blockwise(&sylvester::build_node_systems(&net, &markov).unwrap(), true).unwrap();
        assert!(blocks.unique);
        assert!(max_abs_diff(&full.q_hat, &blocks.q_hat) < 1e-9 * scale);
        assert!((full.alpha - blocks.alpha).abs() < 1e-8 * full.alpha);
        assert_eq!(full.rank, blocks.rank);
    }
}

#[test]
fn residual_identity_on_true_q() {
    let mut rng = rng(21);
    for _ in 0..20 {
        let net = random_network(&mut rng, 3, 2, 2);
        let r = sylvester::required_order(&net).max(1);
        let sys = sylvester::build_system(&net, &net.markov_exact(r, MarkovOutput::NodeOutputs)).unwrap();
        let scale = 1.0 + sys.k.amax();
        assert!(sys.residual_for(net.q()) < 1e-10 * scale);
        let coeff = sys.coefficient_matrix();
        let lhs = &coeff * linalg::vec(net.q());
        assert!((lhs - linalg::vec(&sys.k)).amax() < 1e-10 * scale);
    }
}

#[test]
fn perturbation_bound_is_never_violated() {
    let nets = identifiable_networks(22, 10);
    let mut trials = 0;
    for (k, net) in nets.iter().enumerate() {
        let r = sylvester::required_order(net);
        let exact = net.markov_exact(r, MarkovOutput::NodeOutputs);
        for t in 0..10u64 {
            let delta = [1e-6, 1e-5, 1e-4, 1e-3][(t % 4) as usize];
            let dist = if t % 2 == 0 { NoiseDistribution::Normal } else { NoiseDistribution::Uniform };
            let noisy = perturb_markov(&exact, delta, dist, 1000 * k as u64 + t).unwrap();
            let sys = sylvester::build_system(net, &noisy.perturbed).unwrap();
            let report = sylvester::solve_least_squares(&sys).unwrap();
            if !report.unique {
                continue;
            }
            let bounds = PerturbationBounds {
                stacked: noisy.stacked_max_abs(1, r),
                transposed: noisy.transposed_inf_norms()[..r].to_vec(),
            };
            let bound = sylvester::robustness_bound(&report, &bounds, net.q().amax(), &sys.l_blocks).unwrap();
            let err = max_abs_diff(&report.q_hat, net.q());
            assert!(err <= bound * (1.0 + 1e-9) + 1e-12, "error {err} exceeds bound {bound}");
            trials += 1;
        }
    }
    assert_eq!(trials, 100);
}

#[test]
fn topology_extraction_round_trips() {
    let mut rng = rng(23);
    for _ in 0..20 {
        let net = random_network(&mut rng, 4, 2, 2);
        let part = BlockPartition::of_network(&net);
        let topo = graph::extract_topology(net.q(), &part, 0.0).unwrap();
        assert_eq!(&topo.to_dense(), net.q());
        let cmp = graph::compare(&topo, &topo).unwrap();
        assert!(cmp.is_exact() && cmp.max_weight_error == 0.0);
    }
}

proptest! {
    #[test]
    fn vec_unvec_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let m = normal(&mut rng(seed), rows, cols);
        prop_assert_eq!(linalg::unvec(&linalg::vec(&m), rows, cols), m);
    }

    #[test]
    fn vectorized_product_identity(seed in any::<u64>()) {
        // vec(L Q M) = (M^T ⊗ L) vec(Q)
        let mut g = rng(seed);
        let l = normal(&mut g, 3, 2);
        let q = normal(&mut g, 2, 4);
        let m = normal(&mut g, 4, 3);
        let lhs = linalg::vec(&(&l * &q * &m));
        let rhs = linalg::kron(&m.transpose(), &l) * linalg::vec(&q);
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_is_a_left_inverse(rows in 3usize..8, seed in any::<u64>()) {
        let m = normal(&mut rng(seed), rows, 3);
        let (pinv, info) = linalg::pseudo_inverse(&m);
        prop_assert_eq!(info.rank, 3);
        prop_assert!((pinv * &m - DMatrix::identity(3, 3)).amax() < 1e-9);
    }

    #[test]
    fn null_space_is_annihilated(rows in 1usize..5, cols in 1usize..7, seed in any::<u64>()) {
        let m = normal(&mut rng(seed), rows, cols);
        let (basis, info) = linalg::null_space(&m);
        prop_assert_eq!(basis.ncols() + info.rank, cols);
        if basis.ncols() > 0 {
            prop_assert!((&m * &basis).amax() < 1e-10);
        }
    }

    #[test]
    fn markov_truncation_is_a_prefix(seed in any::<u64>(), r in 0usize..6) {
        let net = random_network(&mut rng(seed), 2, 2, 2);
        let long = net.markov_exact(r + 3, MarkovOutput::External);
        prop_assert_eq!(long.truncated(r).unwrap(), net.markov_exact(r, MarkovOutput::External));
        let seq: MarkovSequence = long.transposed().transposed();
        prop_assert_eq!(seq, long);
    }
}

use netimmse_core::engine::Engine;
use netimmse_core::estimator::{estimator_diagnostics, gaussian_mmse, mmse_matrix, score_identity_residual};
use netimmse_core::exec::{BlockJob, BlockRunner};
use netimmse_core::flowmodel::InputDistribution;
use netimmse_core::infogradients::{
    closed_form_gradients, compare, gaussian_mutual_information, grad_mi_cut, grad_oracle, information_and_mmse,
    logdet_gradient, mutual_information, verify_gradients, Cut, OracleOptions, Target, VerifyOptions,
};
use netimmse_core::linalg::{max_abs_diff, real, real_matrix};
use netimmse_core::netgraph::{Factors, Form};
use netimmse_core::rng::StreamFactory;
use netimmse_core::scenarios::Figure1Coefficients;
use netimmse_core::{CMat, Result};

fn complex_matrix(seed: u64, rows: usize, cols: usize) -> CMat {
    let f = StreamFactory::new(seed);
    let mut k = 0;
    CMat::from_fn(rows, cols, |_, _| {
        k += 1;
        f.stream(k).complex_normal() * 0.7
    })
}

fn random_factors(seed: u64) -> Factors {
    Factors::new(
        complex_matrix(seed, 2, 2),
        complex_matrix(seed + 100, 2, 2),
        complex_matrix(seed + 200, 2, 2),
        Form::Compact,
    )
    .unwrap()
}

#[test]
fn scalar_derivative_equals_mmse() {
    let d = InputDistribution::bpsk();
    let engine = Engine::quadrature_nodes(128);
    let info = |snr: f64| mutual_information(&real_matrix(&[&[snr.sqrt()]]), &d, &engine).unwrap().nats;
    for snr in [0.25, 1.0, 4.0] {
        let h = 1e-3;
        let slope = (info(snr + h) - info(snr - h)) / (2.0 * h);
        let mmse = mmse_matrix(&real_matrix(&[&[snr.sqrt()]]), &d, &engine).unwrap().e[(0, 0)].re;
        assert!((slope / mmse - 1.0).abs() < 1e-3, "snr {snr}: {slope} vs {mmse}");
    }
}

#[test]
fn gaussian_closed_forms_match_log_det() {
    for seed in 1..=5 {
        let f = random_factors(seed);
        let e = netimmse_core::estimator::MmseMatrix {
            e: gaussian_mmse(&f.system()).unwrap(),
            estimate: netimmse_core::engine::Estimate::ClosedForm,
            std_err: None,
        };
        let closed = closed_form_gradients(&f, &e).unwrap();
        for t in Target::ALL {
            let d = compare(closed.get(t), &logdet_gradient(Cut::Full, t, &f).unwrap());
            assert!(d.max_rel < 1e-9, "seed {seed} {}: {}", t.label(), d.max_rel);
        }
        for (cut, t) in [(Cut::Source, Target::B), (Cut::Mid, Target::G), (Cut::Mid, Target::B)] {
            let (_, ec) = information_and_mmse(&cut.channel(&f), &InputDistribution::gaussian(2), &Engine::quadrature()).unwrap();
            let g = grad_mi_cut(cut, t, &f, &ec).unwrap();
            let d = compare(&g, &logdet_gradient(cut, t, &f).unwrap());
            assert!(d.max_rel < 1e-9, "{} {}: {}", cut.label(), t.label(), d.max_rel);
        }
    }
}

#[test]
fn gaussian_monte_carlo_is_consistent() {
    let m = complex_matrix(9, 2, 2);
    let d = InputDistribution::gaussian(2);
    let (mi, e) = information_and_mmse(&m, &d, &Engine::monte_carlo(200_000, 3)).unwrap();
    let exact = gaussian_mutual_information(&m).unwrap();
    assert!((mi.nats - exact).abs() < 5.0 * mi.std_err.unwrap(), "{} vs {exact}", mi.nats);
    let se = e.std_err.unwrap();
    let exact_e = gaussian_mmse(&m).unwrap();
    for (k, (v, w)) in e.e.iter().zip(exact_e.iter()).enumerate() {
        let s = se[k];
        assert!((v.re - w.re).abs() <= 5.0 * s.re + 1e-15, "entry {k}");
        assert!((v.im - w.im).abs() <= 5.0 * s.im + 1e-15, "entry {k}");
    }
}

#[test]
fn score_identity_holds_for_qpsk() {
    let m = complex_matrix(4, 2, 2);
    let d = InputDistribution::qpsk(2);
    let f = StreamFactory::new(11);
    for k in 0..100 {
        let mut s = f.stream(k);
        let z = [s.complex_normal() * 2.0, s.complex_normal() * 2.0];
        assert!(score_identity_residual(&m, &d, &z).unwrap() < 1e-8);
    }
}

#[test]
fn closed_forms_match_oracles_on_small_network() {
    let f = Figure1Coefficients::random(5, 0).compact_factors().unwrap();
    let d = InputDistribution::bpsk_vector(2);
    let r = verify_gradients(&f, &d, &Engine::quadrature_nodes(10), VerifyOptions::default()).unwrap();
    assert!(r.passes(), "{:?}", r.worst());
    assert_eq!(r.calibration, 2.0);
}

#[test]
fn cut_gradients_match_oracles() {
    let f = Figure1Coefficients::random(6, 0).compact_factors().unwrap();
    let d = InputDistribution::bpsk_vector(2);
    let engine = Engine::quadrature_nodes(10);
    for cut in [Cut::Source, Cut::Mid] {
        let (_, e) = information_and_mmse(&cut.channel(&f), &d, &engine).unwrap();
        for &t in cut.targets() {
            let closed = grad_mi_cut(cut, t, &f, &e).unwrap();
            let oracle = grad_oracle(&f, cut, &d, t, &engine, OracleOptions::default()).unwrap();
            let c = compare(&closed, &oracle.value);
            assert!(c.max_rel < 1e-3, "{} {}: {}", cut.label(), t.label(), c.max_rel);
        }
    }
}

#[test]
fn unitary_topology_preserves_cut_error() {
    // a rotation G and identity A: the mid-cut and source-cut MMSE agree
    let (c, s) = (0.6, 0.8);
    let g = CMat::from_fn(2, 2, |i, j| real([[c, -s], [s, c]][i][j]));
    let b = real_matrix(&[&[0.45, 0.15], &[-0.1, 0.55]]);
    let f = Factors::new(CMat::identity(2, 2), g, b, Form::Compact).unwrap();
    let d = InputDistribution::bpsk_vector(2);
    let engine = Engine::quadrature_nodes(32);
    let mid = mmse_matrix(&Cut::Mid.channel(&f), &d, &engine).unwrap();
    let source = mmse_matrix(&Cut::Source.channel(&f), &d, &engine).unwrap();
    let diff = max_abs_diff(&mid.e, &source.e);
    assert!(diff < 1e-8);
}

#[test]
fn orthogonality_and_tower_within_noise() {
    let m = complex_matrix(21, 2, 2);
    let d = InputDistribution::qpsk(2);
    let diag = estimator_diagnostics(&m, &d, &Engine::monte_carlo(100_000, 5)).unwrap();
    assert!(diag.max_z_score().unwrap() < 5.0);
    let exact = estimator_diagnostics(&m, &d, &Engine::quadrature_nodes(8)).unwrap();
    // the tower property is exact under a symmetric rule; orthogonality
    // only up to quadrature error
    assert!(exact.bias.iter().all(|v| v.norm() < 1e-14));
    assert!(exact.cross.iter().all(|v| v.norm() < 1e-4));
}

/// Runs blocks back to front.
struct Reversed;

impl BlockRunner for Reversed {
    fn run_blocks(&self, count: usize, job: &BlockJob<'_>) -> Vec<Result<Vec<f64>>> {
        let mut out: Vec<_> = (0..count).rev().map(job).collect();
        out.reverse();
        out
    }
}

#[test]
fn results_do_not_depend_on_block_schedule() {
    let m = complex_matrix(2, 2, 2);
    let d = InputDistribution::qpsk(2);
    for engine in [Engine::quadrature_nodes(6), Engine::monte_carlo(5_000, 8)] {
        let a = mmse_matrix(&m, &d, &engine).unwrap();
        let b = mmse_matrix(&m, &d, &engine.with_runner(&Reversed)).unwrap();
        assert_eq!(a, b);
    }
}

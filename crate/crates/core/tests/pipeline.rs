//! End-to-end runs through the file loaders, propagation, verification and
//! the Monte-Carlo oracle.

use cfverify::model_io::{load_problem, random_network, save_network};
use cfverify::oracle::{compare, empirical_probability, projected_outputs, sample_inputs};
use cfverify::propagation::write_trace_csv;
use cfverify::verification::{output_scalar_cf, quantile};
use cfverify::{
    propagate_network, verify_halfspace, verify_polytope, AffineLayer, AnalyticCf, Direction, HalfSpace,
    Network, Numerics, Verdict, VerificationProblem,
};

/// Hidden neurons each read a different input, so the marginals stay
/// independent and the product propagation is exact. The output bias is 0
/// so the atom (both ReLUs off) sits at the origin, where the boundary-value
/// extrapolation of the sampled CF is exact.
fn diagonal_net() -> Network {
    Network::new(vec![
        AffineLayer::new(vec![vec![1.5, 0.0], vec![0.0, -0.8]], vec![0.2, 0.1]).unwrap(),
        AffineLayer::new(vec![vec![1.0, 2.0]], vec![0.0]).unwrap(),
    ])
    .unwrap()
}

fn diagonal_problem(d: f64, direction: Direction) -> VerificationProblem {
    VerificationProblem {
        network: diagonal_net(),
        inputs: vec![AnalyticCf::gaussian(0.5, 1.0).unwrap(), AnalyticCf::gaussian(-0.3, 0.5).unwrap()],
        constraints: vec![HalfSpace::new(vec![1.0], d, direction).unwrap()],
        risk: 0.1,
        numerics: Numerics::default(),
    }
}

#[test]
fn independent_hidden_layer_matches_monte_carlo() {
    let n = 400_000;
    let problem = diagonal_problem(0.0, Direction::Le);
    let batch = sample_inputs(&problem.inputs, n, 11).unwrap();
    let ys = projected_outputs(&problem.network, &batch, &[1.0]).unwrap();
    for d in [0.1, 0.5, 1.0, 1.7, 3.0] {
        for direction in [Direction::Le, Direction::Ge] {
            let p = diagonal_problem(d, direction);
            let cf = verify_halfspace(&p).unwrap().p_hat;
            let mc = empirical_probability(&ys, &p.constraints[0]);
            // 4 sigma of the MC estimate plus the numerical budget
            let tol = 4.0 * (mc * (1.0 - mc) / n as f64).sqrt() + 3e-3;
            assert!((cf - mc).abs() < tol, "d={d} {direction:?}: cf {cf} mc {mc}");
        }
    }
}

#[test]
fn nothing_below_the_output_floor() {
    // both ReLUs are nonnegative, so y >= 0 with an atom at 0
    let ge = verify_halfspace(&diagonal_problem(-0.5, Direction::Ge)).unwrap();
    assert!(ge.p_hat > 0.995, "{}", ge.p_hat);
    let le = verify_halfspace(&diagonal_problem(-0.5, Direction::Le)).unwrap();
    assert!(le.p_hat < 5e-3, "{}", le.p_hat);
}

#[test]
fn files_on_disk_round_trip_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let net = random_network(&[2, 6, 1], 4).unwrap();
    save_network(&net, dir.path().join("net.json")).unwrap();
    let cfg = dir.path().join("problem.json");
    std::fs::write(
        &cfg,
        r#"{
            "network": "net.json",
            "inputs": [{"kind": "cauchy", "location": 1, "scale": 1},
                       {"kind": "uniform", "low": -1, "high": 2}],
            "safety": [{"c": [1], "d": 0, "direction": "ge"}],
            "risk": 0.05,
            "seed": 5,
            "mc_samples": 20000
        }"#,
    )
    .unwrap();
    let loaded = load_problem(&cfg).unwrap();
    assert_eq!(loaded.problem.network, net);
    assert_eq!((loaded.seed, loaded.mc_samples), (5, 20_000));
    let r = verify_halfspace(&loaded.problem).unwrap();
    assert!((0.0..=1.0).contains(&r.p_hat));
    assert_eq!(r.verdict, Verdict::from_probability(r.p_hat, 0.05));
    let report = compare(&loaded.problem, &r, loaded.mc_samples, loaded.seed).unwrap();
    assert_eq!(report.n_samples, 20_000);
    assert_eq!(report.p_hat_cf, r.p_hat);
}

#[test]
fn polytope_bound_never_exceeds_any_single_constraint() {
    let mut p = diagonal_problem(3.0, Direction::Le);
    p.constraints.push(HalfSpace::new(vec![1.0], 0.2, Direction::Ge).unwrap());
    let poly = verify_polytope(&p).unwrap();
    for r in &poly.constraints {
        assert!(poly.lower_bound <= r.p_hat + 1e-12);
    }
    let sum: f64 = poly.constraints.iter().map(|r| 1.0 - r.p_hat).sum();
    assert!((poly.lower_bound - (1.0 - sum).max(0.0)).abs() < 1e-12);
}

#[test]
fn quantile_inverts_the_verified_probability() {
    let p = diagonal_problem(1.0, Direction::Ge);
    let outputs = p.propagate().unwrap();
    let grid = p.numerics.grid().unwrap();
    let params = p.numerics.hilbert().unwrap();
    let phi = output_scalar_cf(&outputs, &[1.0], grid).unwrap();
    let r = quantile(&phi, 0.1, Direction::Ge, params).unwrap();
    let at_r = verify_halfspace(&diagonal_problem(r, Direction::Ge)).unwrap().p_hat;
    assert!((at_r - 0.9).abs() < 5e-3, "P(y >= {r}) = {at_r}");
}

#[test]
fn trace_csv_covers_every_layer() {
    let p = diagonal_problem(0.0, Direction::Le);
    let grid = p.numerics.grid().unwrap();
    let params = p.numerics.hilbert().unwrap();
    let run = propagate_network(&p.network, &p.input_marginals().unwrap(), grid, params, true).unwrap();
    let rows = run.trace.unwrap().cdf_rows(&[-1.0, 0.0, 1.0], None, params);
    // layer 0: 2 pre + 2 post, layer 1: 1 pre; 3 points each
    assert_eq!(rows.len(), 15);
    let mut buf = Vec::new();
    write_trace_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 16);
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 5));
}

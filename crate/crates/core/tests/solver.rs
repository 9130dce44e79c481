mod common;

use std::time::Duration;

use common::*;
use lts_core::{
    enumerate_oracle, solve, solve_mio, standardize, BnbParams, Dataset, Design, InterceptMode, Method, ProblemSpec,
    Status,
};
use nalgebra::{DMatrix, DVector};

const MIO: [Method; 3] = [Method::BigM, Method::Conic, Method::ConicPlus];

#[test]
fn zero_budget_is_a_single_ridge_node() {
    let design = zero_design(&uniform_instance(12, 2, 3), 0.1, 0);
    let (_, ridge) = design.ridge(&[true; 12]).unwrap();
    for method in MIO {
        let r = solve_mio(&design, method, &BnbParams::default()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        // conic+ tuning already closes the gap, so its root is never expanded
        let nodes = if method == Method::ConicPlus { 0 } else { 1 };
        assert_eq!(r.nodes, Some(nodes), "{method}");
        assert!(rel_diff(r.objective(), ridge) <= 1e-9);
        assert_eq!(r.incumbent.discarded_count(), 0);
    }
}

#[test]
fn reported_bounds_bracket_the_optimum() {
    for seed in 0..6 {
        let design = zero_design(&planted_instance(12, 2, 0.2, 40 + seed), 0.1, 2);
        let opt = enumerate_oracle(&design).unwrap().objective;
        for method in MIO {
            let r = solve_mio(&design, method, &BnbParams::default()).unwrap();
            let lb = r.lower_bound.unwrap();
            assert!(lb <= opt * (1.0 + 1e-6) + 1e-12, "{method}: lb {lb} > {opt}");
            assert!(r.objective() >= opt * (1.0 - 1e-9));
            assert!(r.root_bound.unwrap() <= lb + 1e-12);
            assert!(r.incumbent.discarded_count() <= 2);
        }
    }
}

#[test]
fn options_do_not_change_the_optimum() {
    let design = zero_design(&uniform_instance(14, 2, 77), 0.1, 3);
    let opt = enumerate_oracle(&design).unwrap().objective;
    let variants = [
        BnbParams { node_retune: true, ..BnbParams::default() },
        BnbParams { warm_start: true, ..BnbParams::default() },
        BnbParams { parallel: true, threads: 3, ..BnbParams::default() },
    ];
    for params in variants {
        let r = solve_mio(&design, Method::ConicPlus, &params).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!(rel_diff(r.objective(), opt) <= 1e-6);
    }
}

#[test]
fn node_limit_stops_with_a_valid_bound() {
    let design = zero_design(&uniform_instance(40, 3, 5), 0.05, 8);
    let params = BnbParams { node_limit: 3, ..BnbParams::default() };
    let r = solve_mio(&design, Method::BigM, &params).unwrap();
    assert_eq!(r.status, Status::NodeLimit);
    assert!(r.lower_bound.unwrap() <= r.objective());
    assert!(r.gap.unwrap() > 0.0);
}

#[test]
fn time_limit_is_honored() {
    let design = zero_design(&uniform_instance(120, 4, 6), 0.05, 30);
    let params = BnbParams { time_limit: Duration::from_millis(500), ..BnbParams::default() };
    let r = solve_mio(&design, Method::Conic, &params).unwrap();
    assert_eq!(r.status, Status::TimeLimit);
    assert!(r.time_s < 1.5, "{}", r.time_s);
    assert!(r.lower_bound.unwrap() <= r.objective());
}

#[test]
fn proxy_intercept_matches_enumeration() {
    for seed in 0..4 {
        let inst = planted_instance(11, 2, 0.2, 90 + seed);
        let spec = ProblemSpec::new(Method::Conic, 0.1, 2);
        let design = Design::new(&inst, &spec).unwrap();
        let opt = enumerate_oracle(&design).unwrap().objective;
        for method in MIO {
            let spec = ProblemSpec { method, ..spec.clone() };
            let r = solve(&inst, &spec, &BnbParams::default()).unwrap();
            assert!(rel_diff(r.objective(), opt) <= 1e-6, "{method} seed {seed}");
        }
    }
}

#[test]
fn reliable_rows_are_never_discarded() {
    // rows 0 and 5 are gross outliers but marked reliable
    let a = DMatrix::from_column_slice(10, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
    let y = DVector::from_column_slice(&[40.0, 2.1, 2.9, 4.2, 5.0, -30.0, 7.1, 7.9, 9.0, 25.0]);
    let mut reliable = vec![false; 10];
    reliable[0] = true;
    reliable[5] = true;
    let inst = standardize(&Dataset::new(a, y, reliable, vec!["x".into()]).unwrap()).unwrap();
    for method in Method::ALL {
        let spec = ProblemSpec::new(method, 0.1, 2).with_intercept(InterceptMode::Zero);
        let r = solve(&inst, &spec, &BnbParams::default()).unwrap();
        let flagged = r.incumbent.discarded_indices();
        assert!(!flagged.contains(&0) && !flagged.contains(&5), "{method}: {flagged:?}");
    }
}

#[test]
fn baselines_never_beat_the_optimum() {
    for seed in 0..5 {
        let inst = planted_instance(12, 2, 0.25, 300 + seed);
        let spec = ProblemSpec::new(Method::Conic, 0.1, 3).with_intercept(InterceptMode::Zero);
        let opt = solve(&inst, &spec, &BnbParams::default()).unwrap().objective();
        for method in [Method::AltOpt, Method::Lad, Method::LsL2] {
            let spec = ProblemSpec { method, ..spec.clone() };
            let r = solve(&inst, &spec, &BnbParams::default()).unwrap();
            assert!(r.objective() >= opt * (1.0 - 1e-9), "{method} seed {seed}");
            assert_eq!(r.incumbent.discarded_count(), 3);
            assert!(r.nodes.is_none());
        }
    }
}

#[test]
fn conic_plus_reports_tuning() {
    let design = zero_design(&planted_instance(20, 2, 0.1, 8), 0.1, 2);
    let r = solve_mio(&design, Method::ConicPlus, &BnbParams::default()).unwrap();
    let t = r.tuning.expect("tuning summary");
    assert_eq!(r.alg1_iterations, Some(t.iterations));
    assert_eq!(t.lb_trace.len(), t.iterations);
    assert!(t.lb_trace.windows(2).all(|w| w[1] >= w[0]));
    assert!(t.ub_trace.windows(2).all(|w| w[1] <= w[0]));
    let d = r.d_weights.unwrap();
    assert!(d.iter().all(|&v| (0.0..1.0).contains(&v)));
}

mod common;

use std::collections::HashSet;

use kernelcost::model::{objective, predict, read_measurements, write_measurements, ModelWeights};
use kernelcost::pipeline::record_properties;
use kernelcost::props::{extract_properties, DEFAULT_CAP};
use kernelcost::sim::{model_time, run_campaign, simulate_time, SimDevice};
use kernelcost::suite::{Role, Suite, SuiteCase, DEFAULT_PROFILE};
use kernelcost::{Binding, GroupConfig};

#[test]
fn noiseless_recovery_on_every_profile() {
    let s = Suite::bundled();
    for p in s.profiles() {
        let r = common::noiseless_recovery(&s, p);
        assert!(r.worst_relative <= 1e-6, "{p}: {}", r.worst_relative);
        assert!(r.worst_zero_share <= 1e-6, "{p}: {}", r.worst_zero_share);
        assert!(r.objective <= 1e-10, "{p}: {}", r.objective);
    }
}

#[test]
fn campaign_size_and_determinism() {
    let s = Suite::bundled();
    let dev = SimDevice::r9_fury().noisy(0.02, 5);
    let a = common::simulate(&s, &dev, DEFAULT_PROFILE, Role::Measurement);
    let b = common::simulate(&s, &dev, DEFAULT_PROFILE, Role::Measurement);
    assert_eq!(a.len(), 130);
    assert_eq!(a, b);
    let (none, errs) = run_campaign(&dev, &s, &[], |_, _| {});
    assert!(none.is_empty() && errs.is_empty());
}

#[test]
fn campaign_collects_bad_cases() {
    let s = Suite::bundled();
    let mut cases: Vec<SuiteCase> = s
        .measurement_cases(DEFAULT_PROFILE)
        .unwrap()
        .into_iter()
        .take(10)
        .collect();
    cases[3].binding.set("n", 0);
    let (recs, errs) = run_campaign(&SimDevice::r9_fury(), &s, &cases, |_, _| {});
    assert_eq!((recs.len(), errs.len()), (9, 1));
    assert_eq!(errs[0].error.code(), "E_ASSUMPTION_VIOLATED");
}

#[test]
fn fits_are_optimal_under_perturbation() {
    let s = Suite::bundled();
    for p in s.profiles() {
        for (sigma, seed) in [(0.0, 0), (0.02, 1), (0.02, 2)] {
            let dev = SimDevice::r9_fury().noisy(sigma, seed);
            let recs = common::simulate(&s, &dev, p, Role::Measurement);
            let (w, _, dm) = common::fit(&s, &recs, p);
            let r = common::perturbations(&dm, &w);
            assert_eq!(
                r.violations, 0,
                "{p} sigma {sigma}: worst change {}",
                r.worst_change
            );
            if sigma > 0.0 {
                assert_eq!(r.within_rounding, 0, "{p} sigma {sigma}");
            }
        }
    }
}

#[test]
fn scaling_times_scales_weights() {
    let s = Suite::bundled();
    let dev = SimDevice::r9_fury().noisy(0.02, 9);
    let recs = common::simulate(&s, &dev, DEFAULT_PROFILE, Role::Measurement);
    let (w, _, _) = common::fit(&s, &recs, DEFAULT_PROFILE);
    let c = 3.5;
    let scaled: Vec<_> = recs
        .iter()
        .cloned()
        .map(|mut r| {
            r.time_s *= c;
            r
        })
        .collect();
    let (ws, _, _) = common::fit(&s, &scaled, DEFAULT_PROFILE);
    for (a, b) in w.weights.iter().zip(&ws.weights) {
        assert!(
            (a * c - b).abs() <= 1e-9 * (a * c).abs().max(1e-300),
            "{a} {b}"
        );
    }
    let pv = record_properties(&s, &recs[0], DEFAULT_CAP).unwrap();
    let (p, ps) = (
        predict(&w, &pv).unwrap().seconds,
        predict(&ws, &pv).unwrap().seconds,
    );
    assert!((p * c - ps).abs() <= 1e-9 * ps);
}

#[test]
fn prediction_decomposes() {
    let s = Suite::bundled();
    let w = ModelWeights::from_pairs("R9Fury", kernelcost::sim::R9_FURY_WEIGHTS).unwrap();
    for case in s.test_cases(DEFAULT_PROFILE).unwrap() {
        let k = s.instantiate(&case.kernel, case.group).unwrap();
        let p = predict(&w, &extract_properties(&k, Some(&case.binding)).unwrap()).unwrap();
        let mut sum = 0.0;
        for (_, c) in &p.breakdown {
            sum += c;
        }
        assert_eq!(sum, p.seconds);
    }
}

#[test]
fn copy_prediction_equals_simulation() {
    let s = Suite::bundled();
    let dev = SimDevice::r9_fury();
    let w = ModelWeights::from_pairs("R9Fury", kernelcost::sim::R9_FURY_WEIGHTS).unwrap();
    let g = GroupConfig::one_d(256);
    let k = s.instantiate("copy", g).unwrap();
    for n in [1, 1000, 4096, 1 << 20] {
        let b = Binding::new().with("n", n);
        let t = simulate_time(&dev, &k, &b, g).unwrap();
        assert_eq!(
            predict(&w, &extract_properties(&k, Some(&b)).unwrap())
                .unwrap()
                .seconds,
            t
        );
    }
}

#[test]
fn simulator_is_linear_in_each_property() {
    let s = Suite::bundled();
    let g = GroupConfig(16, 16);
    let k = s.instantiate("arith_mul", g).unwrap();
    let dev = SimDevice::with_weights(
        "mul only",
        &[("flop.f32.mul", 1e-12), ("launch.const", 1e-6)],
    )
    .unwrap();
    let t = |nk: i64| {
        model_time(&dev, &k, &Binding::new().with("n", 64).with("nk", nk)).unwrap() - 1e-6
    };
    assert!((t(200) - 2.0 * t(100)).abs() <= 1e-15 * t(200));
}

#[test]
fn csv_round_trip_of_a_campaign() {
    let s = Suite::bundled();
    let recs = common::simulate(
        &s,
        &SimDevice::r9_fury().noisy(0.02, 4),
        "TitanX",
        Role::Test,
    );
    let mut buf = Vec::new();
    write_measurements(&mut buf, &recs).unwrap();
    assert_eq!(read_measurements(buf.as_slice()).unwrap(), recs);
    let kernels: HashSet<_> = recs.iter().map(|r| r.kernel.as_str()).collect();
    assert_eq!(kernels, common::TEST_KERNELS.into_iter().collect());
}

#[test]
fn zero_model_objective_bounds_the_fit() {
    let s = Suite::bundled();
    let recs = common::simulate(
        &s,
        &SimDevice::r9_fury().noisy(0.02, 3),
        "Tesla",
        Role::Measurement,
    );
    let (w, obj, dm) = common::fit(&s, &recs, "Tesla");
    assert!(obj <= objective(&dm, &vec![0.0; w.weights.len()]));
}

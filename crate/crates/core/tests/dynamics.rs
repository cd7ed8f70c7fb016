use proptest::prelude::*;

use sgldvr::dynamics::{
    draw_batch, gaussian_init, run_baseline, run_method, step, svrg_estimator, svrg_estimator_into, Baseline,
    ConstantSchedule, DecaySchedule, DynamicsError, Method, RunOptions, SamplingMode, Schedule, ScheduleSpec,
    SgldVrConfig, SgldVrState,
};
use sgldvr::objectives::{make_quadratic, make_saddle_quadratic, ObjectiveSpec};
use sgldvr::rng::StreamKey;
use sgldvr::FiniteSumObjective;

fn config(eta0: f64, rho0: f64, b: usize, be: usize, horizon: u64) -> SgldVrConfig {
    SgldVrConfig {
        batch_size: b,
        epoch_length: be,
        horizon,
        schedule: DecaySchedule::new(eta0, rho0, 1.0, 1).unwrap().into(),
        sampling: SamplingMode::WithReplacement,
    }
}

fn sigmoid() -> sgldvr::objectives::Problem {
    ObjectiveSpec::SigmoidNet {
        matrix: None,
        rows: 5,
        cols: 3,
        matrix_seed: 2,
        gamma: 0.2,
        offset: 0.0,
    }
    .build()
    .unwrap()
}

#[test]
fn sgld_without_noise_is_sgd_bit_for_bit() {
    let p = sigmoid();
    let cfg = config(0.3, 0.0, 2, 5, 200);
    let x0 = gaussian_init(3, 1.0, 4);
    let opts = RunOptions {
        record_iterates: true,
        ..Default::default()
    };
    let a = run_baseline(p.objective.as_ref(), &cfg, &x0, 9, Baseline::Sgd, &opts).unwrap();
    let b = run_baseline(p.objective.as_ref(), &cfg, &x0, 9, Baseline::Sgld, &opts).unwrap();
    assert_eq!(a.records, b.records);
}

#[test]
fn full_batch_without_noise_is_gradient_descent() {
    let p = sigmoid();
    let obj = p.objective.as_ref();
    let mut cfg = config(0.2, 0.0, 5, 4, 40);
    cfg.sampling = SamplingMode::WithoutReplacement;
    let x0 = gaussian_init(3, 1.0, 1);
    let mut st = SgldVrState::new(x0.clone(), 3);
    let mut x = x0;
    for t in 0..40 {
        step(obj, &cfg, Method::SgldVr, &mut st);
        let g = obj.full_gradient(&x);
        let eta = cfg.schedule.eta(t);
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= eta * gi);
    }
    for (a, b) in st.x.iter().zip(&x) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn runs_are_reproducible_and_seed_dependent() {
    let (q, _) = make_quadratic(4, 1.0).unwrap();
    let cfg = config(0.1, 0.1, 1, 4, 100);
    let x0 = vec![1.0; 4];
    let opts = RunOptions::default();
    let a = run_method(&q, &cfg, Method::SgldVr, &x0, 5, &opts).unwrap();
    let b = run_method(&q, &cfg, Method::SgldVr, &x0, 5, &opts).unwrap();
    let c = run_method(&q, &cfg, Method::SgldVr, &x0, 6, &opts).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.records, c.records);
}

#[test]
fn stride_records_endpoints() {
    let (q, _) = make_quadratic(2, 1.0).unwrap();
    let cfg = config(0.1, 0.0, 1, 5, 25);
    let opts = RunOptions {
        stride: 10,
        ..Default::default()
    };
    let tr = run_method(&q, &cfg, Method::Sgd, &[1.0, 1.0], 0, &opts).unwrap();
    let ts: Vec<u64> = tr.records.iter().map(|r| r.t).collect();
    assert_eq!(ts, vec![0, 10, 20, 25]);
}

#[test]
fn huge_stepsizes_diverge_with_an_error() {
    let (q, _) = make_quadratic(2, 1.0).unwrap();
    let cfg = SgldVrConfig {
        batch_size: 1,
        epoch_length: 1,
        horizon: 5000,
        schedule: ConstantSchedule { eta: 10.0, rho: 0.0 }.into(),
        sampling: SamplingMode::WithReplacement,
    };
    let r = run_method(&q, &cfg, Method::Sgd, &[1.0, 1.0], 0, &RunOptions::default());
    assert!(matches!(r, Err(DynamicsError::Diverged { .. })), "{r:?}");
}

#[test]
fn invalid_configs_are_rejected() {
    let (q, _) = make_quadratic(3, 1.0).unwrap();
    let opts = RunOptions::default();
    let bad_batch = config(0.1, 0.0, 4, 1, 10);
    assert!(matches!(
        run_method(&q, &bad_batch, Method::Sgd, &[0.0; 3], 0, &opts),
        Err(DynamicsError::InvalidConfig(_))
    ));
    let bad_horizon = config(0.1, 0.0, 1, 3, 10);
    assert!(bad_horizon.validate(3).is_err());
    assert!(matches!(
        run_method(&q, &config(0.1, 0.0, 1, 1, 10), Method::Sgd, &[0.0; 2], 0, &opts),
        Err(DynamicsError::DimensionMismatch { expected: 3, got: 2 })
    ));
    let bad_nu = r#"{"kind":"decay","eta0":1.0,"rho0":0.1,"nu":0.5}"#;
    let s: ScheduleSpec = serde_json::from_str(bad_nu).unwrap();
    assert!(matches!(s.validate(), Err(DynamicsError::InvalidSchedule(_))));
}

#[test]
fn noise_free_start_on_the_stable_manifold_never_leaves_it() {
    let (s, _) = make_saddle_quadratic(2, 1.0, 1.0).unwrap();
    let cfg = config(1.0, 0.0, 1, 10, 2000);
    let mut st = SgldVrState::new(vec![0.0, 0.3], 1);
    for _ in 0..2000 {
        step(&s, &cfg, Method::SgldVr, &mut st);
        assert_eq!(st.x[0], 0.0);
    }
}

#[test]
fn without_replacement_batches_are_distinct() {
    let mut rng = StreamKey::new(1).at(0);
    let mut b = Vec::new();
    for _ in 0..50 {
        draw_batch(&mut rng, 10, 7, SamplingMode::WithoutReplacement, &mut b);
        let mut s = b.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 7);
        assert!(b.iter().all(|&i| i < 10));
    }
}

#[test]
fn method_names_parse() {
    assert_eq!("sgld-vr".parse::<Method>().unwrap(), Method::SgldVr);
    assert_eq!("sgd".parse::<Method>().unwrap(), Method::Sgd);
    assert!("adam".parse::<Method>().is_err());
}

proptest! {
    #[test]
    fn schedule_matches_its_formula(
        eta0 in 1e-3f64..1e3,
        rho0 in 0.0f64..1.0,
        nu in 1.0f64..3.0,
        offset in 1u64..20,
        t in 0u64..1_000_000,
    ) {
        let s = DecaySchedule::new(eta0, rho0, nu, offset).unwrap();
        let base = (t + offset) as f64;
        prop_assert!((s.eta(t) - eta0 / base.powf(nu)).abs() <= 1e-12 * s.eta(t));
        prop_assert!((s.rho(t) - rho0 / base.powf(nu / 2.0)).abs() <= 1e-12 * (s.rho(t) + 1e-300));
        prop_assert!(s.eta(t + 1) <= s.eta(t));
    }

    #[test]
    fn estimator_equals_snapshot_gradient_at_the_snapshot(
        x in prop::collection::vec(-3.0f64..3.0, 3),
        batch in prop::collection::vec(0usize..5, 1..6),
    ) {
        let p = sigmoid();
        let obj = p.objective.as_ref();
        let mut st = SgldVrState::new(x, 0);
        st.refresh_snapshot(obj);
        let est = svrg_estimator(obj, &st, &batch).unwrap();
        prop_assert_eq!(est, st.snapshot_grad.clone());
    }

    #[test]
    fn single_draw_estimator_is_unbiased_by_enumeration(
        x in prop::collection::vec(-3.0f64..3.0, 3),
        snap in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        // averaging the B_b = 1 estimator over every index is exactly E[·]
        let p = sigmoid();
        let obj = p.objective.as_ref();
        let w = obj.full_gradient(&snap);
        let n = obj.num_components();
        let mut mean = vec![0.0; 3];
        let mut est = vec![0.0; 3];
        for i in 0..n {
            svrg_estimator_into(obj, &x, &snap, &w, &[i], &mut est).unwrap();
            mean.iter_mut().zip(&est).for_each(|(m, e)| *m += e / n as f64);
        }
        let g = obj.full_gradient(&x);
        for (m, gi) in mean.iter().zip(&g) {
            prop_assert!((m - gi).abs() <= 1e-10 * (1.0 + gi.abs()));
        }
    }

    #[test]
    fn pair_estimator_is_unbiased_over_all_subsets(
        x in prop::collection::vec(-2.0f64..2.0, 4),
        snap in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let (q, _) = make_quadratic(4, 0.5).unwrap();
        let w = q.full_gradient(&snap);
        let mut mean = vec![0.0; 4];
        let mut est = vec![0.0; 4];
        let mut count = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                svrg_estimator_into(&q, &x, &snap, &w, &[i, j], &mut est).unwrap();
                mean.iter_mut().zip(&est).for_each(|(m, e)| *m += e);
                count += 1.0;
            }
        }
        let g = q.full_gradient(&x);
        for (m, gi) in mean.iter().zip(&g) {
            prop_assert!((m / count - gi).abs() <= 1e-12 * (1.0 + gi.abs()));
        }
    }
}

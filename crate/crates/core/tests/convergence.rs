use magnus_core::coefficients::cache::{self, CacheKey};
use magnus_core::optimizer::{minimize, random_seed_pulse, OptimizationConfig};
use magnus_core::propagators::{reference_rk_converged, true_infidelity};
use magnus_core::spinchain::{build_model, chain_ansatz, initial_state, target_state, transfer_problem};
use magnus_core::{ControlAnsatz, ControlProblem, PulseCoefficients, SchemeKernels, SchemeKind, SpinChainParams, StateVector, TimeGrid};

fn setup(rwa: bool) -> (SpinChainParams, ControlAnsatz, PulseCoefficients) {
    let params = SpinChainParams::new(3, 1.0, rwa);
    let ansatz = chain_ansatz(&params, 4, 2.9, 0.29, 1.0).unwrap();
    let b = PulseCoefficients::from_flat(2, 4, vec![0.4, -0.2, 0.3, 0.1, -0.35, 0.25, 0.05, -0.15]).unwrap();
    (params, ansatz, b)
}

fn state(params: &SpinChainParams, ansatz: &ControlAnsatz, b: &PulseCoefficients, scheme: SchemeKind, n: usize) -> StateVector {
    let grid = TimeGrid::new(2.9, n).unwrap();
    transfer_problem(params, ansatz.clone(), grid, scheme).unwrap().final_state(b).unwrap()
}

#[test]
fn step_doubling_ratios_match_the_orders() {
    let (params, ansatz, b) = setup(true);
    let reference = state(&params, &ansatz, &b, SchemeKind::M4Exact, 2560);
    for scheme in SchemeKind::MAGNUS {
        let errs: Vec<f64> = [40, 80, 160]
            .iter()
            .map(|&n| state(&params, &ansatz, &b, scheme, n).distance(&reference))
            .collect();
        let want = 2f64.powi(scheme.order() as i32);
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio / want - 1.0).abs() < 0.15, "{scheme}: ratio {ratio}");
        }
    }
}

#[test]
fn magnus_agrees_with_runge_kutta() {
    for rwa in [true, false] {
        let (params, ansatz, b) = setup(rwa);
        let model = build_model(&params).unwrap();
        let psi0 = initial_state(&params).unwrap();
        let rk = reference_rk_converged(&model, &ansatz, &b, &psi0, 1e-11, 200, 1 << 20).unwrap();
        assert!(rk.error_estimate < 1e-11);
        // the carrier needs a finer grid in the lab frame
        let n = if rwa { 1280 } else { 5120 };
        let m4 = state(&params, &ansatz, &b, SchemeKind::M4Exact, n);
        assert!(m4.distance(&rk.state) < 1e-9, "rwa={rwa}: {}", m4.distance(&rk.state));
        // RK drifts off the unit sphere, Magnus does not
        assert!((m4.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn true_infidelity_is_converged() {
    let (params, ansatz, b) = setup(true);
    let model = build_model(&params).unwrap();
    let t = true_infidelity(
        &model,
        &ansatz,
        &b,
        &initial_state(&params).unwrap(),
        &target_state(&params).unwrap(),
        1e-10,
        20,
    )
    .unwrap();
    assert!(t.last_change < 1e-11);
    let g = TimeGrid::new(2.9, 4 * t.n_steps).unwrap();
    let fine = transfer_problem(&params, ansatz, g, SchemeKind::M4Exact).unwrap().infidelity(&b).unwrap();
    assert!((fine - t.value).abs() < 1e-10);
    assert!(true_infidelity(&model, &setup(true).1, &b, &initial_state(&params).unwrap(), &target_state(&params).unwrap(), 1e-13, 20).is_err());
}

#[test]
fn schemes_converge_to_the_same_optimum() {
    // both schemes simulate to better than 1e-8 here
    let (params, ansatz, _) = setup(true);
    let config = OptimizationConfig {
        seed: 3,
        max_iterations: 150,
        ..OptimizationConfig::default()
    };
    let b0 = random_seed_pulse(&ansatz, &config).unwrap();
    let run = |scheme, n| {
        let p = transfer_problem(&params, ansatz.clone(), TimeGrid::new(2.9, n).unwrap(), scheme).unwrap();
        let (b, record) = minimize(&p, &b0, &config).unwrap();
        assert!(record.converged, "{scheme}: {:?}", record.termination_reason);
        let model = build_model(&params).unwrap();
        let t = true_infidelity(
            &model,
            &ansatz,
            &b,
            &initial_state(&params).unwrap(),
            &target_state(&params).unwrap(),
            1e-10,
            n,
        )
        .unwrap();
        t.value
    };
    let f2 = run(SchemeKind::M2Approx, 4000);
    let f4 = run(SchemeKind::M4Exact, 200);
    assert!((f2 - f4).abs() < 1e-6, "M2approx {f2:e} vs M4exact {f4:e}");
}

#[test]
fn kernel_cache_round_trips_exactly() {
    let (_, ansatz, b) = setup(false);
    let dir = tempfile::tempdir().unwrap();
    let grid = TimeGrid::new(2.9, 30).unwrap();
    for scheme in SchemeKind::MAGNUS {
        let key = CacheKey::new(&ansatz, &grid, scheme).unwrap();
        assert!(cache::load::<f64>(dir.path(), &key).unwrap().is_none());
        let (fresh, hit) = cache::load_or_compute(dir.path(), &ansatz, &grid, scheme).unwrap();
        assert!(!hit);
        let (again, hit) = cache::load_or_compute(dir.path(), &ansatz, &grid, scheme).unwrap();
        assert!(hit);
        assert_eq!(fresh, again);
        assert_eq!(fresh.table(&b).unwrap(), again.table(&b).unwrap());
    }
    // a file under the wrong key is refused
    let k1 = CacheKey::new(&ansatz, &grid, SchemeKind::M2Exact).unwrap();
    let k2 = CacheKey::new(&ansatz, &grid, SchemeKind::M4Exact).unwrap();
    std::fs::copy(cache::cache_path(dir.path(), &k1), cache::cache_path(dir.path(), &k2)).unwrap();
    assert!(cache::load::<f64>(dir.path(), &k2).is_err());

    let other = chain_ansatz(&SpinChainParams::new(3, 1.0, true), 4, 2.9, 0.29, 1.0).unwrap();
    assert_ne!(CacheKey::new(&other, &grid, SchemeKind::M2Exact).unwrap(), k1);
}

#[test]
fn precomputed_kernels_can_be_reused() {
    let (params, ansatz, b) = setup(true);
    let grid = TimeGrid::new(2.9, 40).unwrap();
    let direct = transfer_problem(&params, ansatz.clone(), grid, SchemeKind::M4Approx).unwrap();
    let kernels = SchemeKernels::precompute(SchemeKind::M4Approx, &ansatz, &grid).unwrap();
    let reused = ControlProblem::with_kernels(
        build_model(&params).unwrap(),
        ansatz,
        kernels,
        initial_state(&params).unwrap(),
        target_state(&params).unwrap(),
    )
    .unwrap();
    assert_eq!(direct.infidelity(&b).unwrap(), reused.infidelity(&b).unwrap());
}

#[test]
fn single_precision_core_runs() {
    use magnus_core::f32::{PulseCoefficients as B32, TimeGrid as G32};
    let params = magnus_core::spinchain::SpinChainParams::<f32>::new(3, 1.0, true);
    let ansatz = chain_ansatz(&params, 4, 2.9f32, 0.29, 1.0).unwrap();
    let b = B32::from_flat(2, 4, vec![0.4, -0.2, 0.3, 0.1, -0.35, 0.25, 0.05, -0.15]).unwrap();
    let p = transfer_problem(&params, ansatz, G32::new(2.9, 40).unwrap(), SchemeKind::M4Exact).unwrap();
    let f32_value = p.infidelity(&b).unwrap();
    let (p64, a64, b64) = setup(true);
    let f64_value = transfer_problem(&p64, a64, TimeGrid::new(2.9, 40).unwrap(), SchemeKind::M4Exact)
        .unwrap()
        .infidelity(&b64)
        .unwrap();
    assert!((f64::from(f32_value) - f64_value).abs() < 1e-4);
    let g = p.gradient(&b).unwrap();
    assert!(g.grad.as_slice().iter().all(|v| v.is_finite()));
}

use approx::assert_relative_eq;
use elapsed_core::evolution::step;
use elapsed_core::{
    regime_scan, run, solve_m, AgeGrid, DensityState, Execution, FiringRateModel, InitialDatum, RateKind,
    SimulationConfig, SmoothRate,
};
use proptest::prelude::*;

fn grid() -> AgeGrid {
    AgeGrid::new(0.02, 6.0).unwrap()
}

fn normalized(grid: &AgeGrid, raw: &[f64]) -> DensityState {
    let mass: f64 = raw.iter().sum::<f64>() * grid.dx();
    DensityState::new(raw.iter().map(|v| v / mass).collect(), 1.0)
}

fn any_model() -> impl Strategy<Value = FiringRateModel> {
    prop_oneof![
        (0.2f64..4.0).prop_map(|k| FiringRateModel::constant(k).unwrap()),
        (0.3f64..0.9, 0.05f64..0.25, 0.3f64..3.0, 0.0f64..0.3)
            .prop_map(|(sp, sm, d, l)| FiringRateModel::step(sp, sm, d, l).unwrap()),
        (0.5f64..2.0, 0.0f64..2.0, 0.1f64..1.0, 0.0f64..1.0).prop_map(|(k0, extra, ramp, l)| {
            FiringRateModel::new(
                RateKind::Smooth(SmoothRate {
                    k0,
                    k1: k0 + extra,
                    ramp,
                    gain: 1.0,
                }),
                l,
            )
            .unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn a_step_conserves_mass_and_positivity(
        model in any_model(),
        raw in prop::collection::vec(0.0f64..3.0, 300),
        m in 0.0f64..2.0,
    ) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-3);
        let g = grid();
        let state = normalized(&g, &raw);
        let (next, boundary) = step(&state, m, &model, &g).unwrap();
        prop_assert!((next.mass - 1.0).abs() < 1e-12);
        prop_assert!(next.values.iter().all(|v| *v >= 0.0));
        prop_assert!(boundary >= 0.0);
    }

    #[test]
    fn runs_conserve_mass(model in any_model(), a in 0.0f64..2.0, w in 0.2f64..2.0) {
        let g = grid();
        let f0 = InitialDatum::Uniform { a, b: a + w }.project(&g).unwrap().state;
        let mut cfg = SimulationConfig::new(g, model, 2.0);
        cfg.allow_degenerate = true;
        let trace = run(&cfg, &f0, None).unwrap();
        for mass in &trace.mass_series {
            prop_assert!((mass - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn parallel_and_sequential_scans_agree(top in 0.0f64..1.0) {
        let g = grid();
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.0).unwrap();
        let lambdas: Vec<f64> = (0..6).map(|i| top * i as f64 / 5.0).collect();
        let seq = regime_scan(&model, &lambdas, &g, 32, Execution::Sequential);
        let par = regime_scan(&model, &lambdas, &g, 32, Execution::Parallel);
        prop_assert_eq!(seq, par);
    }
}

#[test]
fn the_stationary_density_is_a_fixed_point() {
    let g = grid();
    let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.1).unwrap();
    let ss = solve_m(&model, &g, (1e-6, 1.001), 1e-13).unwrap();
    let state = DensityState::new(ss.values.clone(), 1.0);
    let (next, boundary) = step(&state, ss.m, &model, &g).unwrap();
    assert_relative_eq!(boundary, ss.m, max_relative = 1e-12);
    let diff = g.l1_distance(&next.values, &ss.values).unwrap();
    assert!(diff < 1e-12, "{diff}");
}

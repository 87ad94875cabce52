use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

use super::*;
use crate::dynamics::{assemble_model, simulate, FullOrderModel, InputSchedule};
use crate::linearize::{build_ldes, OpUpdatePolicy, OperatingSchedule};
use crate::network::{segmentize, Scheme};
use crate::testnets::*;

fn tank_with_booster(k_b: f64, dt: f64) -> (crate::network::NetworkGraph, FullOrderModel) {
    let graph = single_tank_graph(1.0);
    let profile = single_tank_profile(&graph, 600.0, 2);
    let mut scenario = toy_scenario(Scheme::ExplicitUpwind, dt, 1200.0, 600.0);
    scenario.reaction = m7_reaction(0.0);
    scenario.reaction.kind = crate::network::ReactionKind::M7;
    scenario.reaction.k_b = k_b;
    scenario.booster_ids = vec!["TK1".to_string()];
    scenario.intrusion_point_ids = vec![];
    scenario.chlorine_sensor_ids = vec!["TK1".to_string()];
    scenario.reactant_sensor_ids = vec![];
    let plan = segmentize(&graph, &profile, dt).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    let model = assemble_model(&graph, &plan, &layout, &scenario, &profile).unwrap();
    (graph, model)
}

/// R1 -> P1 (segments) -> J1 line with sensors and a booster at R1.
fn line_model(
    length_m: f64,
    dt: f64,
    scheme: Scheme,
    k_r: f64,
) -> (crate::network::NetworkGraph, crate::network::ScenarioConfig, FullOrderModel) {
    let graph = single_pipe_graph(length_m);
    let profile = single_pipe_profile(&graph, 1.0, 3600.0, 1);
    let mut scenario = toy_scenario(scheme, dt, 3600.0, 3600.0);
    scenario.reaction = m7_reaction(k_r);
    scenario.booster_ids = vec!["J1".to_string()];
    scenario.intrusion_point_ids = vec!["J1".to_string()];
    scenario.chlorine_sensor_ids = vec!["J1".to_string()];
    scenario.reactant_sensor_ids = vec!["J1".to_string()];
    let plan = segmentize(&graph, &profile, dt).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    let model = assemble_model(&graph, &plan, &layout, &scenario, &profile).unwrap();
    (graph, scenario, model)
}

#[test]
fn impulse_snapshots_decay_geometrically_on_scalar_system() {
    // Tank alone with k_b dt = 0.5: A = 0.5 on the chlorine state.
    let (_, model) = tank_with_booster(0.1, 5.0);
    let snaps = collect_state_snapshots(
        &model,
        &Excitation::ChannelImpulses { gains: vec![2.0] },
        6,
        false,
    )
    .unwrap();
    let b = model.slices[0].b.get(0, 0);
    assert!(b > 0.0);
    assert_eq!(snaps.x.column(0), DVector::zeros(2));
    for k in 1..6 {
        let expected = 2.0 * b * 0.5f64.powi(k as i32 - 1);
        assert_relative_eq!(snaps.x[(0, k)], expected, epsilon = 1e-14);
        assert_eq!(snaps.x[(1, k)], 0.0);
    }
}

#[test]
fn zero_snapshots_are_rejected_as_rank_zero() {
    let (_, model) = tank_with_booster(0.1, 5.0);
    let snaps = collect_state_snapshots(
        &model,
        &Excitation::ChannelImpulses { gains: vec![0.0] },
        6,
        false,
    )
    .unwrap();
    assert_eq!(numerical_rank(&snaps), 0);
    assert!(matches!(
        pod_transform(&snaps, 1),
        Err(MorError::RankExceeded { requested: 1, rank: 0 })
    ));
}

#[test]
fn booster_impulse_energy_stays_on_the_reachable_path() {
    let graph = three_node_graph();
    let profile = three_node_profile(&graph, 600.0, 12);
    let scenario = three_node_mor_scenario(Scheme::ImplicitUpwind, false);
    let plan = segmentize(&graph, &profile, scenario.dt_s).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    let model = assemble_model(&graph, &plan, &layout, &scenario, &profile).unwrap();

    // Impulse only on the booster channel (J1, chlorine).
    let mut gains = vec![0.0; model.n_u_total()];
    gains[0] = 10.0;
    let snaps =
        collect_state_snapshots(&model, &Excitation::ChannelImpulses { gains }, 300, false).unwrap();

    let n = model.map.n();
    let reservoir = model.map.node_state(0);
    let pump = 3; // R, J, TK, pump ordering
    for col in 0..snaps.x.ncols() {
        // Upstream states and the whole reactant block stay at zero.
        assert_eq!(snaps.x[(reservoir, col)], 0.0);
        assert_eq!(snaps.x[(pump, col)], 0.0);
        for i in 0..n {
            assert_eq!(snaps.x[(n + i, col)], 0.0);
        }
    }
    // And the junction-to-tank path does get excited.
    assert!(snaps.x.row(model.map.node_state(2)).amax() > 0.0);
}

#[test]
fn pod_keeps_the_largest_orthogonal_directions() {
    let mut x = DMatrix::zeros(5, 3);
    x[(0, 0)] = 3.0;
    x[(2, 1)] = 2.0;
    x[(4, 2)] = 1.0;
    let snaps = SnapshotSet {
        x,
        f: None,
        p: None,
        m: 3,
        excitation: String::new(),
    };
    let pair = pod_transform(&snaps, 2).unwrap();
    // Columns are e0 and e2 after sign normalization.
    assert_relative_eq!(pair.v_r[(0, 0)], 1.0, epsilon = 1e-12);
    assert_relative_eq!(pair.v_r[(2, 1)], 1.0, epsilon = 1e-12);
    assert_relative_eq!(pair.retained[0], 9.0, epsilon = 1e-12);
    assert_relative_eq!(pair.retained[1], 4.0, epsilon = 1e-12);
    assert!((&pair.l_r * &pair.v_r - DMatrix::identity(2, 2)).amax() < 1e-12);
}

#[test]
fn full_rank_pod_replay_reproduces_outputs() {
    // Snapshots of the exact run to be replayed: the trajectory lies in the
    // span, so the ROM must track outputs at solver precision.
    let graph = five_state_graph();
    let profile = five_state_profile(&graph, 600.0, 2);
    let mut scenario = toy_scenario(Scheme::ImplicitUpwind, 100.0, 1200.0, 600.0);
    scenario.reaction = m7_reaction(1.0e-3);
    scenario.sources = vec![crate::network::SourceSpec {
        node: 0,
        chlorine_mg_l: 1.0,
        reactant_mg_l: 0.3,
    }];
    scenario.booster_ids = vec!["J1".to_string()];
    scenario.intrusion_point_ids = vec!["J1".to_string()];
    scenario.chlorine_sensor_ids = vec!["TK1".to_string()];
    scenario.reactant_sensor_ids = vec!["TK1".to_string()];
    let plan = segmentize(&graph, &profile, scenario.dt_s).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    let model = assemble_model(&graph, &plan, &layout, &scenario, &profile).unwrap();

    let x0 = scenario.initial_state(&graph, &model.map).unwrap();
    let aug = crate::dynamics::shift_initial_conditions(&model, &x0).unwrap();
    let n_steps = 12;
    let inputs = InputSchedule::zeros(model.n_u_real(), n_steps);
    let snaps = collect_state_snapshots(
        &aug,
        &Excitation::Schedule(inputs.clone()),
        n_steps + 1,
        true,
    )
    .unwrap();
    let rank = numerical_rank(&snaps);
    let pair = pod_transform(&snaps, rank).unwrap();
    let f_rank = numerical_rank(&SnapshotSet {
        x: snaps.f.clone().unwrap(),
        f: None,
        p: None,
        m: snaps.m,
        excitation: String::new(),
    });
    let deim = greedy_deim(snaps.f.as_ref().unwrap(), f_rank).unwrap();
    let rom = reduce_model(&aug, &pair, Some(&deim)).unwrap();

    let ref_traj = simulate(&aug, &DVector::zeros(aug.n()), &inputs, n_steps, 1).unwrap();
    let rom_traj = rom
        .simulate(&aug, &DVector::zeros(rom.n_r), &inputs, n_steps)
        .unwrap();
    let err = rmse(&ref_traj.outputs, &rom_traj.outputs).unwrap();
    assert!(err < 1e-8, "replay RMSE {err:.3e}");
}

#[test]
fn gramian_branches_agree_up_to_sign() {
    // 6-state snapshots of rank 4; sign normalization makes the two
    // branches agree exactly, not just up to column sign.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let basis = DMatrix::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0));
    let coefs = DMatrix::from_fn(4, 10, |_, _| rng.gen_range(-1.0..1.0));
    let x = &basis * &coefs;
    let small = pod_via_small_gramian(&x, 4).unwrap();
    let large = pod_via_large_gramian(&x, 4).unwrap();
    assert!((small.v_r - large.v_r).amax() < 1e-9);
    assert!((small.l_r - large.l_r).amax() < 1e-9);
}

#[test]
fn min_snapshot_length_is_path_travel_time() {
    // 600 m at 1 m/s with dt = 5 s: 120 steps.
    let graph = single_pipe_graph(600.0);
    let profile = single_pipe_profile(&graph, 1.0, 3600.0, 1);
    let mut scenario = toy_scenario(Scheme::ImplicitUpwind, 5.0, 3600.0, 3600.0);
    scenario.booster_ids = vec!["R1".to_string()];
    scenario.chlorine_sensor_ids = vec!["J1".to_string()];
    scenario.intrusion_point_ids = vec![];
    scenario.reactant_sensor_ids = vec![];
    let plan = segmentize(&graph, &profile, 5.0).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    assert_eq!(min_snapshot_length(&graph, &plan, &profile, &layout).unwrap(), 120);

    // Two sensors at 120 and 300 steps: the bound is the maximum.
    let text = r#"[meta]
name = "two-hop"
[[nodes]]
id = "R1"
kind = "reservoir"
[[nodes]]
id = "J1"
kind = "junction"
[[nodes]]
id = "J2"
kind = "junction"
[[links]]
id = "P1"
kind = "pipe"
from = "R1"
to = "J1"
length_m = 600.0
radius_m = 0.15
[[links]]
id = "P2"
kind = "pipe"
from = "J1"
to = "J2"
length_m = 900.0
radius_m = 0.15
"#;
    let graph = crate::network::parse_network(text).unwrap();
    let q = std::f64::consts::PI * 0.15 * 0.15 * 1000.0;
    let profile = crate::network::constant_profile(
        &graph,
        3600.0,
        1,
        &DVector::from_vec(vec![1.0, 1.0]),
        &DVector::from_vec(vec![q, q]),
        &DVector::from_vec(vec![0.0, 0.0, q]),
    );
    let plan = segmentize(&graph, &profile, 5.0).unwrap();
    let layout = crate::network::DeviceLayout::from_ids(
        &graph,
        &["R1".to_string()],
        &[],
        &["J1".to_string(), "J2".to_string()],
        &[],
    )
    .unwrap();
    assert_eq!(min_snapshot_length(&graph, &plan, &profile, &layout).unwrap(), 300);

    // Reversed flow makes the sensor unreachable.
    let mut reversed = profile.clone();
    for s in &mut reversed.steps {
        s.velocity_m_s = vec![-1.0, -1.0];
        s.flow_l_s = vec![-q, -q];
        s.demand_l_s = vec![q, 0.0, 0.0];
    }
    assert!(matches!(
        min_snapshot_length(&graph, &plan, &reversed, &layout),
        Err(MorError::Unreachable { .. })
    ));
}

#[test]
fn adjoint_trace_is_geometric_for_diagonal_dynamics() {
    let (_, model) = tank_with_booster(0.1, 5.0); // chlorine diagonal 0.5
    let mut linear = model.clone();
    for s in &mut linear.slices {
        s.f = None;
    }
    let options = AdjointOptions {
        output_states: vec![0],
        include_constant_forcing: false,
    };
    let p = collect_adjoint_snapshots(&linear, 5, &options).unwrap();
    for k in 0..5 {
        assert_relative_eq!(p[(0, k)], 0.5f64.powi(k as i32), epsilon = 1e-14);
        assert_eq!(p[(1, k)], 0.0);
    }
}

#[test]
fn hankel_matches_observability_controllability_product() {
    let (_, _, model) = line_model(100.0, 50.0, Scheme::ImplicitUpwind, 0.0);
    let mut linear = model.clone();
    for s in &mut linear.slices {
        s.f = None;
    }
    let m = 4;
    let snaps = collect_state_snapshots(
        &linear,
        &Excitation::ChannelImpulses { gains: vec![1.0, 1.0] },
        m,
        false,
    )
    .unwrap();
    let layout = crate::network::DeviceLayout::from_ids(
        &single_pipe_graph(100.0),
        &["R1".to_string()],
        &["R1".to_string()],
        &["J1".to_string()],
        &["J1".to_string()],
    )
    .unwrap();
    let adjoint =
        collect_adjoint_snapshots(&linear, m, &AdjointOptions::for_layout(&linear, &layout)).unwrap();
    let hankel = adjoint.transpose() * &snaps.x;

    // Dense effective matrices: A_eff = E^-1 A, B_eff = E^-1 B.
    let slice = &linear.slices[0];
    let e_inv = slice.e.to_dense().try_inverse().unwrap();
    let a_eff = &e_inv * slice.a.to_dense();
    let b_eff = &e_inv * slice.b.to_dense();
    let n = linear.n();
    let n_u = linear.n_u_total();
    // Output states per AdjointOptions::for_layout: chlorine sensor at J1,
    // reactant row at R1.
    let mut c = DMatrix::zeros(2, n);
    c[(0, linear.map.node_state(1))] = 1.0;
    c[(1, n / 2 + linear.map.node_state(0))] = 1.0;

    for i in 0..m {
        for j in 0..m {
            // p_i^T x_j with x_0 = 0 and x_j = A^(j-1) B for j >= 1.
            let mut expect = DMatrix::zeros(2, n_u);
            if j >= 1 {
                let mut pow = DMatrix::identity(n, n);
                for _ in 0..(i + j - 1) {
                    pow = &pow * &a_eff;
                }
                expect = &c * &pow * &b_eff;
            }
            for (row_out, out) in [0usize, 1].iter().enumerate() {
                for (col_u, _) in (0..n_u).enumerate() {
                    let h = hankel[(out * m + i, col_u * m + j)];
                    assert_relative_eq!(h, expect[(row_out, col_u)], epsilon = 1e-10);
                }
            }
        }
    }
}

#[test]
fn bpod_is_biorthogonal_and_exact_at_full_rank() {
    // 8 stacked states: R, J, 2 segments per species.
    let (graph, mut scenario, model) = line_model(100.0, 50.0, Scheme::ImplicitUpwind, 3e-4);
    assert_eq!(model.n(), 8);
    scenario.sources = vec![crate::network::SourceSpec {
        node: 0,
        chlorine_mg_l: 1.2,
        reactant_mg_l: 0.2,
    }];
    let schedule = OperatingSchedule::constant(
        OpUpdatePolicy::default(),
        model.map.reaction_sites().len(),
        crate::linearize::OperatingPoint { c_o: 0.5, c_tilde_o: 0.1 },
    );
    let lde = build_ldes(&model, &schedule).unwrap();
    let x0 = scenario.initial_state(&graph, &model.map).unwrap();
    let aug = crate::dynamics::shift_initial_conditions(&lde.model, &x0).unwrap();

    let m = 24;
    let gains = vec![1.0; aug.n_u_total()];
    let snaps =
        collect_state_snapshots(&aug, &Excitation::ChannelImpulses { gains }, m, false).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    let adjoint =
        collect_adjoint_snapshots(&aug, m, &AdjointOptions::for_layout(&aug, &layout)).unwrap();

    let pair = bpod_transform(&snaps.x, &adjoint, usize::MAX).unwrap();
    let identity_err =
        (&pair.l_r * &pair.v_r - DMatrix::identity(pair.n_r(), pair.n_r())).amax();
    assert!(identity_err < 1e-8, "bi-orthogonality error {identity_err:.3e}");

    let rom = reduce_model(&aug, &pair, None).unwrap();
    let n_steps = 60;
    let inputs = InputSchedule::zeros(model.n_u_real(), n_steps);
    let ref_traj = simulate(&aug, &DVector::zeros(aug.n()), &inputs, n_steps, 1).unwrap();
    let rom_traj = rom
        .simulate(&aug, &DVector::zeros(rom.n_r), &inputs, n_steps)
        .unwrap();
    let err = rmse(&ref_traj.outputs, &rom_traj.outputs).unwrap();
    assert!(err < 1e-8, "full-rank BPOD RMSE {err:.3e}");

    // Decreasing order cannot improve the error.
    let mut last = err;
    for n_r in [6, 4, 2] {
        let pair = bpod_transform(&snaps.x, &adjoint, n_r).unwrap();
        let rom = reduce_model(&aug, &pair, None).unwrap();
        let rom_traj = rom
            .simulate(&aug, &DVector::zeros(rom.n_r), &inputs, n_steps)
            .unwrap();
        let e = rmse(&ref_traj.outputs, &rom_traj.outputs).unwrap();
        assert!(e + 1e-12 >= last, "coarser model got better: {e:.3e} < {last:.3e}");
        last = e;
    }
}

#[test]
fn greedy_deim_selects_deterministic_indices() {
    // Single nonzero row: the only admissible index.
    let mut f = DMatrix::zeros(6, 4);
    for j in 0..4 {
        f[(3, j)] = (j + 1) as f64;
    }
    let deim = greedy_deim(&f, 1).unwrap();
    assert_eq!(deim.indices, vec![3]);
    assert!(matches!(greedy_deim(&f, 2), Err(MorError::RankExceeded { .. })));

    // First index is the largest-magnitude entry of the first mode,
    // regardless of sign.
    let u = DVector::from_vec(vec![0.1, -0.9, 0.3]);
    let f = &u * nalgebra::RowDVector::from_vec(vec![1.0, 2.0, 3.0]);
    let deim = greedy_deim(&f, 1).unwrap();
    assert_eq!(deim.indices, vec![1]);
}

#[test]
fn deim_is_exact_on_its_span() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let basis = DMatrix::from_fn(12, 5, |_, _| rng.gen_range(-1.0..1.0));
    let coes = DMatrix::from_fn(5, 9, |_, _| rng.gen_range(-1.0..1.0));
    let f_snaps = &basis * &coes; // rank 5
    let deim = greedy_deim(&f_snaps, 5).unwrap();
    for trial in 0..10 {
        let coef = DVector::from_fn(5, |i, _| ((i + trial) as f64 * 0.37).sin());
        let f = &basis * coef;
        let rec = deim.reconstruct(&f).unwrap();
        assert!((rec - f).amax() < 1e-9);
    }
}

#[test]
fn deim_error_is_nonincreasing_in_order() {
    // Smooth snapshot columns, the shape real reaction fields have: the
    // singular values decay fast and the greedy interpolant improves with
    // every added point.
    let f_snaps = DMatrix::from_fn(20, 15, |i, j| {
        (-((i as f64 / 4.0 - j as f64 / 3.0).powi(2))).exp()
    });
    let mut last = f64::INFINITY;
    for r in 1..=8 {
        let deim = greedy_deim(&f_snaps, r).unwrap();
        let err: f64 = (0..f_snaps.ncols())
            .map(|c| {
                let col = DVector::from_column_slice(f_snaps.column(c).as_slice());
                (deim.reconstruct(&col).unwrap() - col).norm_squared()
            })
            .sum::<f64>()
            .sqrt();
        assert!(err <= last + 1e-9, "order {r}: {err:.3e} > {last:.3e}");
        last = err;
    }
}

#[test]
fn identity_reduction_matches_full_model() {
    let graph = five_state_graph();
    let profile = five_state_profile(&graph, 600.0, 2);
    let mut scenario = toy_scenario(Scheme::ImplicitUpwind, 100.0, 1200.0, 600.0);
    scenario.reaction = m7_reaction(2e-3);
    scenario.booster_ids = vec!["J1".to_string()];
    scenario.intrusion_point_ids = vec!["J1".to_string()];
    scenario.chlorine_sensor_ids = vec!["TK1".to_string()];
    scenario.reactant_sensor_ids = vec![];
    let plan = segmentize(&graph, &profile, scenario.dt_s).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    let model = assemble_model(&graph, &plan, &layout, &scenario, &profile).unwrap();

    let pair = TransformPair::identity(model.n());
    let rom = reduce_model(&model, &pair, None).unwrap();
    let mut x = DVector::from_fn(model.n(), |i, _| 0.1 + 0.02 * i as f64);
    let mut x_r = x.clone();
    let u = DVector::from_vec(vec![100.0, 50.0]);
    for k in 0..10 {
        let u_full = model.full_input(&u).unwrap();
        x = crate::dynamics::step_full(&model, k, &x, &u_full).unwrap();
        x_r = rom.step(&model, k, &x_r, &u_full).unwrap();
        assert!((&x - &x_r).amax() < 1e-12);
    }
}

#[test]
fn deim_rom_touches_exactly_its_order_of_state_rows() {
    let graph = five_state_graph();
    let profile = five_state_profile(&graph, 600.0, 2);
    let mut scenario = toy_scenario(Scheme::ImplicitUpwind, 100.0, 1200.0, 600.0);
    scenario.reaction = m7_reaction(2e-3);
    scenario.sources = vec![crate::network::SourceSpec {
        node: 0,
        chlorine_mg_l: 1.0,
        reactant_mg_l: 0.2,
    }];
    scenario.booster_ids = vec!["J1".to_string()];
    scenario.intrusion_point_ids = vec!["J1".to_string()];
    scenario.chlorine_sensor_ids = vec!["TK1".to_string()];
    scenario.reactant_sensor_ids = vec![];
    let plan = segmentize(&graph, &profile, scenario.dt_s).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    let model = assemble_model(&graph, &plan, &layout, &scenario, &profile).unwrap();
    let x0 = scenario.initial_state(&graph, &model.map).unwrap();
    let aug = crate::dynamics::shift_initial_conditions(&model, &x0).unwrap();

    let inputs = InputSchedule::zeros(model.n_u_real(), 8);
    let snaps =
        collect_state_snapshots(&aug, &Excitation::Schedule(inputs), 9, true).unwrap();
    let deim = greedy_deim(snaps.f.as_ref().unwrap(), 2).unwrap();
    let pair = pod_transform(&snaps, 4).unwrap();
    let rom = reduce_model(&aug, &pair, Some(&deim)).unwrap();
    assert_eq!(rom.deim_indices().unwrap().len(), 2);
    // All touched rows live on the bilinear support (tank + segments).
    let n = model.map.n();
    for &idx in rom.deim_indices().unwrap() {
        let site = idx % n;
        assert!(model
            .map
            .reaction_sites()
            .iter()
            .any(|s| s.state == site));
    }
}

#[test]
fn rmse_basics() {
    let a = vec![DVector::from_vec(vec![1.0, 2.0]); 5];
    assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    let b: Vec<DVector<f64>> = a
        .iter()
        .map(|v| DVector::from_vec(vec![v[0] + 0.5, v[1]]))
        .collect();
    assert_relative_eq!(rmse(&a, &b).unwrap(), 0.5, epsilon = 1e-15);
    let short = vec![DVector::zeros(2); 3];
    assert!(rmse(&a, &short).is_err());
}

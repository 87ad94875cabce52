use approx::assert_relative_eq;
use nalgebra::DVector;

use super::*;
use crate::dynamics::{
    assemble_model, scenario_inputs, shift_initial_conditions, step_full, FullOrderModel,
    InputSchedule,
};
use crate::linearize::{build_ldes, OpUpdatePolicy, OperatingSchedule};
use crate::mor::{reduce_model, TransformPair};
use crate::network::{segmentize, ControlSettings, Scheme, Species};
use crate::testnets::*;

/// Five-state scenario wired for control: booster at J1, sensor at TK1.
fn five_state_setup(
    k_r: f64,
    tank_ic: f64,
) -> (
    crate::network::NetworkGraph,
    crate::network::HydraulicProfile,
    crate::network::ScenarioConfig,
    FullOrderModel,
) {
    let graph = five_state_graph();
    let profile = five_state_profile(&graph, 600.0, 24);
    let mut scenario = toy_scenario(Scheme::ImplicitUpwind, 100.0, 14_400.0, 600.0);
    scenario.reaction = m7_reaction(k_r);
    scenario.booster_ids = vec!["J1".to_string()];
    scenario.intrusion_point_ids = vec!["J1".to_string()];
    scenario.chlorine_sensor_ids = vec!["TK1".to_string()];
    scenario.reactant_sensor_ids = vec!["TK1".to_string()];
    scenario.overrides = vec![crate::network::InitialOverride {
        label: "TK1".to_string(),
        species: Species::Chlorine,
        value_mg_l: tank_ic,
    }];
    scenario.control = ControlSettings {
        mu_per_mg: 1e-4,
        u1_min_mg_min: 0.0,
        u1_max_mg_min: 20_000.0,
        x1_min_mg_l: 0.2,
        x1_max_mg_l: 4.0,
        x2_max_mg_l: None,
        control_interval_s: 600.0,
        n_ctl: 2,
        n_pred: 4,
    };
    let plan = segmentize(&graph, &profile, scenario.dt_s).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    let model = assemble_model(&graph, &plan, &layout, &scenario, &profile).unwrap();
    (graph, profile, scenario, model)
}

/// Identity-transform ROM of the shifted model: predictions are exact.
fn identity_rom(
    base: &FullOrderModel,
    x0: &DVector<f64>,
    schedule: Option<&OperatingSchedule>,
) -> (crate::mor::ReducedModel, FullOrderModel) {
    let shifted = match schedule {
        Some(s) => {
            let lde = build_ldes(base, s).unwrap();
            shift_initial_conditions(&lde.model, x0).unwrap()
        }
        None => shift_initial_conditions(base, x0).unwrap(),
    };
    let pair = TransformPair::identity(shifted.n());
    let rom = reduce_model(&shifted, &pair, None).unwrap();
    (rom, shifted)
}

#[test]
fn scalar_augmented_system_is_hand_checkable() {
    // One-state system a = 0.5, c = 1: Phi_a = [[a, 0], [a, 1]].
    let graph = single_tank_graph(1.0);
    let profile = single_tank_profile(&graph, 600.0, 2);
    let mut scenario = toy_scenario(Scheme::ExplicitUpwind, 5.0, 1200.0, 600.0);
    scenario.reaction = m7_reaction(0.0);
    scenario.reaction.k_b = 0.1; // a = 1 - k dt = 0.5
    scenario.booster_ids = vec!["TK1".to_string()];
    scenario.intrusion_point_ids = vec![];
    scenario.chlorine_sensor_ids = vec!["TK1".to_string()];
    scenario.reactant_sensor_ids = vec![];
    let plan = segmentize(&graph, &profile, 5.0).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    let model = assemble_model(&graph, &plan, &layout, &scenario, &profile).unwrap();

    let pair = TransformPair::identity(model.n());
    let rom = reduce_model(&model, &pair, None).unwrap();
    let interval = compose_interval(&rom, &model, 0, 1, &|_| DVector::zeros(0), false).unwrap();
    let aug = augment_system(&interval);
    // State order: chlorine then reactant; output selects chlorine.
    assert_relative_eq!(aug.phi_a[(0, 0)], 0.5, epsilon = 1e-12);
    assert_relative_eq!(aug.phi_a[(2, 0)], 0.5, epsilon = 1e-12);
    assert_relative_eq!(aug.phi_a[(2, 2)], 1.0, epsilon = 1e-12);
    assert_eq!(aug.phi_a[(0, 2)], 0.0);
    // k_r = 0: no product channel columns at all in linear mode.
    assert_eq!(aug.gamma_a.ncols(), aug.n_u1);
}

#[test]
fn true_product_increments_reproduce_the_nonlinear_run() {
    // Feed the z channel the true bilinear products step by step; the
    // composed dynamics must match the nonlinear model exactly.
    let (graph, _, scenario, model) = five_state_setup(2e-3, 0.6);
    let x0 = scenario.initial_state(&graph, &model.map).unwrap();
    let shifted = shift_initial_conditions(&model, &x0).unwrap();
    let pair = TransformPair::identity(shifted.n());
    let rom = reduce_model(&shifted, &pair, None).unwrap();

    let u2 = |_: usize| DVector::zeros(1);
    let n = model.map.n();
    let sites = model.map.reaction_sites();
    let mut x_hat = DVector::zeros(shifted.n());
    let mut x_chan = DVector::zeros(shifted.n());
    for k in 0..10 {
        let interval = compose_interval(&rom, &shifted, k, 1, &u2, true).unwrap();
        // True shifted-product vector at the current channel state.
        let z: DVector<f64> = DVector::from_iterator(
            sites.len(),
            sites.iter().map(|s| x_chan[s.state] * x_chan[n + s.state]),
        );
        x_chan = &interval.a * &x_chan + &interval.g_z * &z + &interval.w;
        let u_full = shifted.full_input(&DVector::zeros(shifted.n_u_real())).unwrap();
        x_hat = step_full(&shifted, k, &x_hat, &u_full).unwrap();
        assert!(
            (&x_hat - &x_chan).amax() < 1e-12,
            "step {k}: channel dynamics diverge by {:.2e}",
            (&x_hat - &x_chan).amax()
        );
    }
}

#[test]
fn below_minimum_forces_injection_matching_grid_oracle() {
    // Tank starts below the floor; the controller must dose. With the
    // identity ROM the predictions are exact, so the optimal first move is
    // the smallest feasible injection: compare against a brute-force grid.
    let (graph, _profile, mut scenario, model) = five_state_setup(0.0, 0.15);
    scenario.control.n_ctl = 1;
    scenario.control.n_pred = 2;
    let x0 = scenario.initial_state(&graph, &model.map).unwrap();
    let schedule = OperatingSchedule::zero(
        OpUpdatePolicy::default(),
        model.map.reaction_sites().len(),
    );
    let (rom, shifted) = identity_rom(&model, &x0, Some(&schedule));
    let config = ControlConfig::from_settings(&scenario.control, scenario.dt_s).unwrap();
    let mut controller = Controller::new(
        ControllerKind::Linearized,
        rom,
        shifted.clone(),
        config.clone(),
        0.0,
    )
    .unwrap();

    let u2_sched = InputSchedule::zeros(model.n_u_real(), 200);
    let y1 = {
        let mut y = DVector::zeros(model.n_y());
        model.slices[0].c.mul_vec(&x0, &mut y);
        y.rows(0, model.n_y1).into_owned()
    };
    let action = controller.mpc_step(0, &y1, &u2_sched).unwrap();
    assert!(action.u1_mg_min[0] > 0.0, "must inject when below the floor");
    assert!(action.kkt_primal < 1e-6 && action.kkt_dual < 1e-6);

    // Grid oracle: simulate the plant over the prediction horizon for each
    // candidate u and find the cheapest one whose sensed chlorine clears the
    // floor at both interval boundaries.
    let steps = config.interval_steps;
    let mut best = f64::INFINITY;
    let n_grid = 4000;
    for g in 0..=n_grid {
        let u = 20_000.0 * g as f64 / n_grid as f64;
        let mut x = x0.clone();
        let mut ok = true;
        for k in 0..(2 * steps) {
            let u_real = DVector::from_vec(vec![u, 0.0]);
            let u_full = model.full_input(&u_real).unwrap();
            x = step_full(&model, k, &x, &u_full).unwrap();
            if (k + 1) % steps == 0 {
                let mut y = DVector::zeros(model.n_y());
                model.slice_at_step(k + 1).c.mul_vec(&x, &mut y);
                if y[0] < 0.2 - 1e-9 {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            best = u;
            break;
        }
    }
    let grid_step = 20_000.0 / n_grid as f64;
    assert!(
        (action.u1_mg_min[0] - best).abs() <= grid_step + 1e-6,
        "controller {} vs grid oracle {}",
        action.u1_mg_min[0],
        best
    );
}

#[test]
fn zero_reaction_collapses_all_three_controllers() {
    // k_r = 0 on an identical ROM: the relaxed, linearized, and
    // single-species controllers must produce the same actions.
    let (graph, profile, scenario, model) = five_state_setup(0.0, 0.15);
    let x0 = scenario.initial_state(&graph, &model.map).unwrap();
    let schedule = OperatingSchedule::zero(
        OpUpdatePolicy::default(),
        model.map.reaction_sites().len(),
    );
    let config = ControlConfig::from_settings(&scenario.control, scenario.dt_s).unwrap();
    let u2_sched = scenario_inputs(&model, &graph, &scenario.device_layout(&graph).unwrap(), &profile, &scenario, 144);

    let mut actions: Vec<Vec<DVector<f64>>> = Vec::new();
    for kind in [
        ControllerKind::Relaxed,
        ControllerKind::Linearized,
        ControllerKind::SingleSpecies,
    ] {
        // The relaxed controller runs on the nonlinear shifted model (whose
        // bilinear term is identically zero here), the linear ones on the
        // zero-schedule LDE; with k_r = 0 these coincide.
        let (rom, shifted) = match kind {
            ControllerKind::Relaxed => identity_rom(&model, &x0, None),
            _ => identity_rom(&model, &x0, Some(&schedule)),
        };
        let mut controller =
            Controller::new(kind, rom, shifted, config.clone(), 0.1).unwrap();
        let log = closed_loop_run(&model, &x0, &mut controller, &u2_sched, 24, &[], 6).unwrap();
        actions.push(log.records.iter().map(|r| r.u1_mg_min.clone()).collect());
    }
    for other in &actions[1..] {
        for (a, b) in actions[0].iter().zip(other) {
            assert!(
                (a - b).amax() < 1e-8,
                "controllers disagree: {a:?} vs {b:?}"
            );
        }
    }
}

#[test]
fn steady_feasible_plant_holds_its_action() {
    // Start comfortably inside the band with a chlorine source upstream;
    // the cheapest plan is no injection, repeatedly.
    let (graph, profile, mut scenario, _) = five_state_setup(0.0, 1.0);
    scenario.sources = vec![crate::network::SourceSpec {
        node: 0,
        chlorine_mg_l: 1.0,
        reactant_mg_l: 0.0,
    }];
    let plan = segmentize(&graph, &profile, scenario.dt_s).unwrap();
    let layout = scenario.device_layout(&graph).unwrap();
    let model = assemble_model(&graph, &plan, &layout, &scenario, &profile).unwrap();
    let x0 = scenario.initial_state(&graph, &model.map).unwrap();
    let schedule = OperatingSchedule::zero(
        OpUpdatePolicy::default(),
        model.map.reaction_sites().len(),
    );
    let (rom, shifted) = identity_rom(&model, &x0, Some(&schedule));
    let config = ControlConfig::from_settings(&scenario.control, scenario.dt_s).unwrap();
    let mut controller =
        Controller::new(ControllerKind::Linearized, rom, shifted, config, 0.0).unwrap();
    let u2_sched = InputSchedule::zeros(model.n_u_real(), 144);
    let log = closed_loop_run(&model, &x0, &mut controller, &u2_sched, 36, &[], 6).unwrap();
    for r in &log.records {
        assert!(r.u1_mg_min[0].abs() < 1e-6, "steady plant should not dose");
        assert!(!r.held_previous);
    }
}

#[test]
fn disturbance_drop_triggers_dose_within_one_interval() {
    let (graph, _profile, scenario, model) = five_state_setup(0.0, 1.0);
    let x0 = scenario.initial_state(&graph, &model.map).unwrap();
    let schedule = OperatingSchedule::zero(
        OpUpdatePolicy::default(),
        model.map.reaction_sites().len(),
    );
    let (rom, shifted) = identity_rom(&model, &x0, Some(&schedule));
    let config = ControlConfig::from_settings(&scenario.control, scenario.dt_s).unwrap();
    let mut controller =
        Controller::new(ControllerKind::Linearized, rom, shifted, config, 0.0).unwrap();
    let u2_sched = InputSchedule::zeros(model.n_u_real(), 400);
    let disturbances = vec![crate::network::Disturbance {
        time_s: 1800.0, // step 18, mid interval 3
        node: 2,
        species: Species::Chlorine,
        value_mg_l: 0.05,
    }];
    let log = closed_loop_run(&model, &x0, &mut controller, &u2_sched, 60, &disturbances, 6).unwrap();
    // Doses before the disturbance are zero; the first interval that senses
    // the drop must inject.
    let before: f64 = log.records[..3].iter().map(|r| r.u1_mg_min[0]).sum();
    assert!(before < 1e-6, "unexpected early dosing");
    // The drop lands at the start of interval 3 and is sensed right there.
    let at_sense = log.records[3].u1_mg_min[0];
    assert!(at_sense > 0.0, "controller must react within one interval");
    // Sensed chlorine recovers above the floor.
    let recovered = log
        .trajectory
        .outputs
        .iter()
        .skip(30)
        .all(|y| y[0] >= 0.2 - 1e-9);
    assert!(recovered, "chlorine must recover above the floor");
    // Hard input bounds always hold.
    for r in &log.records {
        assert!(r.u1_mg_min[0] >= -1e-12 && r.u1_mg_min[0] <= 20_000.0 + 1e-9);
    }
}

#[test]
fn receding_horizon_resolve_shifts_the_plan_tail() {
    // At the regulation equilibrium, re-solving one interval later must
    // continue the previous plan. The startup transient is excluded: with
    // an economic cost the sliding horizon legitimately reshapes it.
    let (graph, _, mut scenario, model) = five_state_setup(0.0, 0.25);
    scenario.control.n_ctl = 3;
    scenario.control.n_pred = 6;
    let x0 = scenario.initial_state(&graph, &model.map).unwrap();
    let schedule = OperatingSchedule::zero(
        OpUpdatePolicy::default(),
        model.map.reaction_sites().len(),
    );
    let (rom, shifted) = identity_rom(&model, &x0, Some(&schedule));
    let config = ControlConfig::from_settings(&scenario.control, scenario.dt_s).unwrap();
    let mut controller = Controller::new(
        ControllerKind::Linearized,
        rom,
        shifted,
        config,
        0.0,
    )
    .unwrap();
    let u2_sched = InputSchedule::zeros(model.n_u_real(), 400);
    let log = closed_loop_run(&model, &x0, &mut controller, &u2_sched, 180, &[], 6).unwrap();

    // Maintenance dosing is active and settled over the last intervals.
    let last = &log.records[log.records.len() - 1];
    let prev = &log.records[log.records.len() - 2];
    assert!(prev.u1_mg_min[0] > 50.0, "expected a nonzero maintenance dose");
    let tail = &prev.u1_mg_min; // plan beyond the first move repeats at steady state
    let head = &last.u1_mg_min;
    let scale = tail.amax().max(1.0);
    // The tank volume keeps growing, so consecutive plans drift by the
    // slice-to-slice model change; a few percent covers it.
    assert!(
        (tail - head).amax() / scale < 5e-2,
        "steady-state re-solve drifted: {tail:?} vs {head:?}"
    );
}

#[test]
fn relaxed_controller_keeps_plant_inside_envelopes() {
    // Intrusion on the five-state net under the relaxed controller: the
    // audits must show sound envelopes throughout.
    let (graph, profile, mut scenario, model) = five_state_setup(2e-3, 0.6);
    scenario.intrusions = vec![crate::network::IntrusionEvent {
        node: 1,
        concentration_mg_l: 0.1,
        start_s: 0.0,
        end_s: 3600.0,
    }];
    let layout = scenario.device_layout(&graph).unwrap();
    let x0 = scenario.initial_state(&graph, &model.map).unwrap();
    let (rom, shifted) = identity_rom(&model, &x0, None);
    let config = ControlConfig::from_settings(&scenario.control, scenario.dt_s).unwrap();
    let mut controller =
        Controller::new(ControllerKind::Relaxed, rom, shifted, config, 0.1).unwrap();
    let u2_sched = scenario_inputs(&model, &graph, &layout, &profile, &scenario, 72);
    let log = closed_loop_run(&model, &x0, &mut controller, &u2_sched, 72, &[], 6).unwrap();
    for (k, audit) in log.audits.iter().enumerate() {
        assert!(
            audit.max_envelope_violation < 1e-9,
            "envelope violated at step {k}: {:.3e}",
            audit.max_envelope_violation
        );
        assert!(
            audit.max_box_exceedance < 5e-3,
            "box exceeded at step {k}: {:.3e}",
            audit.max_box_exceedance
        );
    }
}

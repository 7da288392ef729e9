use adaptive_cbf::config::{PlantKind, Scenario};
use adaptive_cbf::sim::Case;
use adaptive_cbf::Error;

fn short(kind: PlantKind, t_end: f64) -> Scenario {
    let mut s = Scenario::defaults(kind);
    s.sim.t_end = t_end;
    s
}

#[test]
fn config_round_trips_for_both_plants() {
    for kind in [PlantKind::Pendulum, PlantKind::Robot] {
        let s = Scenario::defaults(kind);
        let text = s.to_config_string();
        assert_eq!(Scenario::parse(&text).unwrap(), s);
    }
}

#[test]
fn empty_config_is_the_pendulum_defaults() {
    assert_eq!(Scenario::parse("# nothing\n\n").unwrap(), Scenario::defaults(PlantKind::Pendulum));
}

#[test]
fn config_errors_carry_line_numbers() {
    let err = Scenario::parse("sim.t_end = 5\nrobot.rho = 3\n").unwrap_err();
    assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
    let err = Scenario::parse("bogus = 1").unwrap_err();
    assert!(matches!(err, Error::Config { line: 1, .. }));
    let err = Scenario::parse("sim.t_end = 1\nsim.t_end = 2").unwrap_err();
    assert!(matches!(err, Error::Config { line: 2, .. }));
    assert!(Scenario::parse("estimator.sigma = -1").unwrap_err().is_config());
    assert!(Scenario::parse("sim.sample_dt = 0.2505").unwrap_err().is_config());
}

#[test]
fn unsafe_initial_state_is_rejected() {
    let mut s = short(PlantKind::Pendulum, 1.0);
    s.sim.x0 = vec![1.0, 0.0];
    let err = s.run_case(Case::Case1).unwrap_err();
    assert!(matches!(err, Error::UnsafeInitialState(_)));
}

#[test]
fn bound_is_sound_and_monotone_along_runs() {
    for kind in [PlantKind::Pendulum, PlantKind::Robot] {
        let s = short(kind, 10.0);
        for case in [Case::Case1, Case::Case2, Case::Case3] {
            let log = s.run_case(case).unwrap();
            for r in &log.rows {
                assert!(r.nu >= r.theta_err - 1e-9, "t = {}: nu {} < err {}", r.t, r.nu, r.theta_err);
            }
            for w in log.rows.windows(2) {
                assert!(w[1].nu <= w[0].nu + 1e-12);
            }
            for e in &log.estimator_rows {
                assert!(e.tau <= 1e-12);
                assert!(e.nu >= e.theta_err - 1e-9);
            }
        }
    }
}

#[test]
fn active_constraint_is_tight_and_inactive_keeps_desired_input() {
    let log = short(PlantKind::Pendulum, 5.0).run_case(Case::Case1).unwrap();
    let mut active = 0;
    for r in &log.rows {
        if r.lambda > 0.0 {
            active += 1;
            assert!(r.psi.abs() <= 1e-8 * (1.0 + r.omega.abs()), "psi {} omega {}", r.psi, r.omega);
        } else {
            assert_eq!(r.u, r.u_d);
            assert_eq!(r.delta, 0.0);
            assert!(r.omega >= 0.0);
        }
    }
    assert!(active > 0);
}

#[test]
fn case_two_desired_input_ignores_the_estimate() {
    let s = short(PlantKind::Pendulum, 3.0);
    let log = s.run_case(Case::Case2).unwrap();
    let plant = s.plant_model();
    let theta0 = s.estimator_config().theta0;
    for r in log.rows.iter().step_by(97) {
        let x = adaptive_cbf::Vector::from_vec(r.x.clone());
        assert_eq!(plant.desired_control(&x, &theta0, r.t).as_slice(), r.u_d.as_slice());
    }
}

#[test]
fn csv_shapes_match_the_headers() {
    let log = short(PlantKind::Robot, 1.0).run_case(Case::Case1).unwrap();
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let width = lines.next().unwrap().split(',').count();
    assert_eq!(width, log.columns.len());
    assert_eq!(lines.clone().count(), log.rows.len());
    assert!(lines.all(|l| l.split(',').count() == width));

    for debug in [false, true] {
        let mut buf = Vec::new();
        log.write_estimator_csv(&mut buf, debug).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let width = log.estimator_columns(debug).len();
        assert_eq!(text.lines().count(), log.estimator_rows.len() + 1);
        assert!(text.lines().all(|l| l.split(',').count() == width));
    }
}

#[test]
fn log_times_are_exact_tick_multiples() {
    let log = short(PlantKind::Pendulum, 2.0).run_case(Case::Case1).unwrap();
    assert_eq!(log.rows.len(), 2001);
    assert_eq!(log.rows.last().unwrap().t, 2.0);
    assert_eq!(log.estimator_rows.len(), 8);
    assert_eq!(log.estimator_rows[3].t, 1.0);
}

use std::f64::consts::PI;

use oncolab_core::ode::{integrate, IntegrationConfig};
use oncolab_core::pde::{
    mean_speed, run_pde, total_cells, wave_speed, PdeRunConfig, Population, DEFAULT_DR,
};
use oncolab_core::{ModelParams, State3};

fn untreated() -> ModelParams {
    ModelParams {
        v0: 0.0,
        ..ModelParams::table1()
    }
}

#[test]
fn diffusion_alone_conserves_mass() {
    let p = ModelParams {
        r_u: 0.0,
        beta: 0.0,
        delta_v: 0.0,
        delta_i: 0.0,
        ..ModelParams::table1()
    };
    let cfg = PdeRunConfig::new(40.0).with_snapshots(&[0.0, 40.0]);
    let run = run_pde(&p, &cfg).unwrap();
    let (start, end) = (&run.snapshots[0], &run.snapshots[1]);
    for pop in [Population::Uninfected, Population::Virus] {
        let a = total_cells(start, &p, pop);
        let b = total_cells(end, &p, pop);
        assert!((b - a).abs() < 1e-3 * a, "{pop:?}: {a} -> {b}");
    }
    // The virus has spread far beyond the injection ball.
    assert!(end.v[0] < 0.1 * start.v[0]);
}

#[test]
fn without_diffusion_every_node_follows_the_well_mixed_model() {
    let p = ModelParams {
        beta: 0.002,
        d_u: 0.0,
        d_v: 0.0,
        r_t: 4.0,
        r_v: 4.0,
        domain_l: 4.0,
        ..ModelParams::table1()
    };
    let times = [5.0, 20.0, 40.0];
    let mut cfg = PdeRunConfig::new(40.0).with_snapshots(&times);
    cfg.integrator = cfg.integrator.with_tolerances(1e-11, 1e-12);
    let run = run_pde(&p, &cfg).unwrap();
    let ode_cfg = IntegrationConfig::span(0.0, 40.0)
        .with_tolerances(1e-11, 1e-12)
        .with_stride(5.0);
    let traj = integrate(&p, State3::new(p.u0, p.v0, 0.0), &ode_cfg).unwrap();
    for &t in &times {
        let k = traj.times.iter().position(|&s| (s - t).abs() < 1e-9).unwrap();
        let expected = traj.states[k];
        let field = run.snapshot_at(t).unwrap();
        for j in 0..field.grid.n {
            let got = State3::new(field.u[j], field.v[j], field.i[j]);
            for (x, y) in got.to_array().into_iter().zip(expected.to_array()) {
                assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0), "t {t} node {j}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn halving_the_spacing_barely_moves_the_day_40_total() {
    let p = ModelParams::table1();
    let total = |dr: f64| {
        let cfg = PdeRunConfig {
            dr,
            ..PdeRunConfig::new(40.0)
        };
        let run = run_pde(&p, &cfg).unwrap();
        let last = run.observables.last().unwrap();
        assert_eq!(last.t, 40.0);
        last.total_u + last.total_i
    };
    let coarse = total(DEFAULT_DR);
    let fine = total(0.5 * DEFAULT_DR);
    assert!((coarse - fine).abs() < 1e-2 * fine, "{coarse} vs {fine}");
}

#[test]
fn populations_stay_nonnegative() {
    for beta in [0.001, 0.002, 0.005, 0.01] {
        let run = run_pde(&ModelParams::table1().with_beta(beta), &PdeRunConfig::new(40.0)).unwrap();
        assert!(run.min_value >= -1e-6, "beta {beta}: {}", run.min_value);
    }
}

#[test]
fn untreated_total_matches_a_ball_of_the_front_radius() {
    let p = untreated();
    let run = run_pde(&p, &PdeRunConfig::new(40.0)).unwrap();
    let last = run.observables.last().unwrap();
    let front = last.front_u.unwrap();
    let ball = p.k * 4.0 / 3.0 * PI * front.powi(3);
    assert!((last.total_u - ball).abs() < 0.1 * ball, "{} vs {ball}", last.total_u);
    assert_eq!(last.total_v, 0.0);
}

#[test]
fn untreated_front_approaches_the_fisher_speed() {
    let p = ModelParams {
        domain_l: 20.0,
        ..untreated()
    };
    let run = run_pde(&p, &PdeRunConfig::new(100.0)).unwrap();
    let speed = wave_speed(&run.series(|r| r.front_u), 60.0, 100.0).unwrap();
    let fisher = 2.0 * (p.r_u * p.d_u).sqrt();
    assert!((speed - fisher).abs() < 0.1 * fisher, "{speed} vs {fisher}");
}

#[test]
fn average_virus_front_speed_grows_with_infectivity() {
    let speeds: Vec<f64> = [0.001, 0.002, 0.003, 0.004, 0.005]
        .iter()
        .map(|&beta| {
            let run = run_pde(&ModelParams::table1().with_beta(beta), &PdeRunConfig::new(40.0)).unwrap();
            mean_speed(&run.series(|r| r.front_v), 0.0, 40.0).unwrap()
        })
        .collect();
    assert!(speeds.windows(2).all(|w| w[1] > w[0]), "{speeds:?}");
}

#[test]
fn weak_infection_is_cleared_and_the_tumour_recovers() {
    let p = ModelParams::table1().with_beta(0.001);
    let run = run_pde(&p, &PdeRunConfig::new(40.0)).unwrap();
    let first = run.observables.first().unwrap();
    let last = run.observables.last().unwrap();
    assert!(last.total_v < 1e-3 * first.total_v, "{} -> {}", first.total_v, last.total_v);
    assert!(last.tail_u > 0.99, "{}", last.tail_u);
    assert!(last.total_i < 1e-3 * last.total_u);
}

#[test]
fn no_eradication_up_to_high_infectivity() {
    for beta in [0.002, 0.01, 0.03, 0.1] {
        let run = run_pde(&ModelParams::table1().with_beta(beta), &PdeRunConfig::new(200.0)).unwrap();
        assert_eq!(run.eradicated_at, None, "beta {beta}");
        let last = run.observables.last().unwrap();
        assert!(last.total_u + last.total_i > 1.0);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let p = ModelParams::table1();
    let late = PdeRunConfig::new(10.0).with_snapshots(&[20.0]);
    assert!(run_pde(&p, &late).is_err());
    let outside = PdeRunConfig::new(10.0).with_probes(&[11.0]);
    assert!(run_pde(&p, &outside).is_err());
}

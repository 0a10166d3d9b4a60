use oncolab_core::bifurcation::{limit_cycle_branch, CycleSettings};
use oncolab_core::model::coexistence_equilibrium;
use oncolab_core::ode::{detect_peaks, integrate, IntegrationConfig, Peak};
use oncolab_core::{Component, ContinuationParam, ModelParams, State3};

const BETA_HOPF: f64 = 0.0087102164;

fn treated_start(p: &ModelParams) -> State3 {
    State3::new(1.0, p.v0, 0.0)
}

#[test]
fn halving_tolerances_moves_terminal_state_less_than_ten_tight_tolerances() {
    let cases = [
        (0.002, State3::new(0.9, 5.0, 0.05), 100.0),
        (0.005, State3::new(0.5, 20.0, 0.1), 100.0),
        (0.01, State3::new(0.3, 40.0, 0.05), 50.0),
    ];
    for (beta, s0, t_end) in cases {
        let p = ModelParams::table1().with_beta(beta);
        let (rel, abs) = (1e-9, 1e-12);
        let coarse = IntegrationConfig::span(0.0, t_end).with_tolerances(2.0 * rel, 2.0 * abs);
        let fine = coarse.with_tolerances(rel, abs);
        let a = integrate(&p, s0, &coarse).unwrap().last();
        let b = integrate(&p, s0, &fine).unwrap().last();
        for (x, y) in a.to_array().into_iter().zip(b.to_array()) {
            let bound = 10.0 * (rel * y.abs() + abs);
            assert!((x - y).abs() < bound, "beta {beta}: {x} vs {y}, bound {bound}");
        }
    }
}

// The cycle at beta = 0.01 attracts slowly (about 9% per period), so the
// transient from the treated state lasts well over 1000 days.
fn settled_cycle_peaks() -> Vec<Peak> {
    let p = ModelParams::table1().with_beta(0.01);
    let cfg = IntegrationConfig::span(0.0, 3000.0)
        .with_tolerances(1e-10, 1e-14)
        .with_stride(0.02);
    let traj = integrate(&p, treated_start(&p), &cfg).unwrap();
    detect_peaks(&traj, Component::U, 1500.0)
}

#[test]
fn limit_cycle_peaks_settle_after_transient() {
    let peaks = settled_cycle_peaks();
    assert!(peaks.len() > 50, "{} peaks", peaks.len());
    for w in peaks.windows(2) {
        assert!((w[1].value - w[0].value).abs() < 1e-4, "{:?}", w);
    }
    let p = ModelParams::table1();
    let cycle = limit_cycle_branch(&p, ContinuationParam::Beta, &[0.01], &CycleSettings::default())[0];
    let last = peaks.last().unwrap().value;
    assert!((cycle.u_max - last).abs() < 1e-3, "{cycle:?} vs {last}");
    assert!(last > coexistence_equilibrium(&p.with_beta(0.01)).unwrap().state.u);
}

#[test]
fn limit_cycle_peaks_are_evenly_spaced() {
    let peaks = settled_cycle_peaks();
    let gaps: Vec<f64> = peaks.windows(2).map(|w| w[1].time - w[0].time).collect();
    for w in gaps.windows(2) {
        assert!((w[1] - w[0]).abs() < 1e-3 * w[0], "{:?}", w);
    }
}

#[test]
fn cycle_amplitude_vanishes_toward_the_hopf_point() {
    let p = ModelParams::table1();
    let betas = [1.05 * BETA_HOPF, 1.02 * BETA_HOPF, 1.01 * BETA_HOPF];
    let settings = CycleSettings {
        max_windows: 30,
        ..CycleSettings::default()
    };
    let cycles = limit_cycle_branch(&p, ContinuationParam::Beta, &betas, &settings);
    let excess: Vec<f64> = cycles
        .iter()
        .map(|c| {
            assert!(c.oscillating, "{c:?}");
            c.u_max - coexistence_equilibrium(&p.with_beta(c.param_value)).unwrap().state.u
        })
        .collect();
    assert!(excess[0] > 0.0 && excess[0] < 0.2, "{excess:?}");
    assert!(excess.windows(2).all(|w| w[1] < w[0]), "{excess:?}");
}

#[test]
fn cycle_maxima_and_periods_grow_with_infectivity() {
    let p = ModelParams::table1();
    let betas = [0.0095, 0.01, 0.012, 0.015, 0.02, 0.025];
    let cycles = limit_cycle_branch(&p, ContinuationParam::Beta, &betas, &CycleSettings::default());
    for c in &cycles {
        assert!(c.oscillating && c.converged, "{c:?}");
        assert!(c.u_max < 1.0 && c.u_min >= 0.0);
    }
    for w in cycles.windows(2) {
        assert!(w[1].u_max > w[0].u_max, "{:?}", w);
        assert!(w[1].period > w[0].period, "{:?}", w);
    }
}

#[test]
fn below_the_hopf_point_the_orbit_settles() {
    let p = ModelParams::table1();
    let cycles = limit_cycle_branch(&p, ContinuationParam::Beta, &[0.005], &CycleSettings::default());
    let c = cycles[0];
    let u_s = coexistence_equilibrium(&p.with_beta(0.005)).unwrap().state.u;
    assert!((c.u_max - u_s).abs() < 1e-3, "{c:?} vs {u_s}");
    assert!((c.u_max - c.u_min).abs() < 1e-3, "{c:?}");
}

//! Executes scenarios and writes their artifacts.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use oncolab_core::bifurcation::{
    coexistence_branch, hopf_curve_2param, limit_cycle_branch, trivial_branch, Branch,
    ContinuationSettings, CycleSettings, HopfScan,
};
use oncolab_core::calibration::calibrate;
use oncolab_core::export::{self, num, opt};
use oncolab_core::model::coexistence_equilibrium;
use oncolab_core::ode::{detect_peaks, integrate, IntegrationConfig};
use oncolab_core::pde::{
    mean_speed, oscillation_monitor, run_pde, tumour_volume, wave_speed, OscillationVerdict,
    PdeRun, PdeRunConfig,
};
use oncolab_core::{Component, ModelParams, PdeError, State3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{
    BranchSettings, BranchStart, CalibrationSettings, Config, HopfCurveSettings, Job,
    LimitCycleSettings, Monitor, OdeRunSettings, PdeNumerics, PdeSnapshotSettings,
    PdeSweepSettings, PdeVsOdeSettings, Scenario,
};
use crate::error::{ConfigError, RunError};
use crate::plot::{Plot, Series, Style};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to reproduce a scenario's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub kind: String,
    pub description: String,
    pub config: String,
    /// Full resolved parameter set.
    pub params: BTreeMap<String, f64>,
    pub overrides: BTreeMap<String, f64>,
    pub settings: serde_json::Value,
    /// All computation is deterministic.
    pub rng: String,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    /// Rebuilds the parameter set recorded in the manifest.
    pub fn resolved_params(&self) -> Result<ModelParams, oncolab_core::ParamError> {
        let mut p = ModelParams::table1();
        for (key, &value) in &self.params {
            p.set(key, value)?;
        }
        Ok(p)
    }
}

struct Outputs {
    scenario: String,
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    fn new(scenario: &Scenario, root: &Path) -> Result<Self, RunError> {
        let dir = root.join(&scenario.out);
        let out = Self {
            scenario: scenario.name.clone(),
            dir,
            files: Vec::new(),
        };
        fs::create_dir_all(&out.dir).map_err(|e| out.io_error(&out.dir, e))?;
        Ok(out)
    }

    fn io_error(&self, path: &Path, source: io::Error) -> RunError {
        RunError::Io {
            scenario: self.scenario.clone(),
            path: path.to_path_buf(),
            source,
        }
    }

    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| self.io_error(&path, e))?;
        let digest = Sha256::digest(bytes);
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<(), RunError> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| self.io_error(&self.dir.join(name), e))?;
        self.bytes(name, &buf)
    }

    fn plot(&mut self, name: &str, plot: &Plot) -> Result<(), RunError> {
        self.bytes(name, plot.render().as_bytes())
    }
}

fn numeric(scenario: &Scenario, e: impl Display) -> RunError {
    RunError::Numeric {
        scenario: scenario.name.clone(),
        message: e.to_string(),
    }
}

fn pde_error(scenario: &Scenario, e: PdeError) -> RunError {
    match e {
        PdeError::InvalidConfig(message) | PdeError::InvalidGrid(message) => {
            RunError::Config(ConfigError::Settings {
                scenario: scenario.name.clone(),
                message,
            })
        }
        other => numeric(scenario, other),
    }
}

fn invalid(scenario: &Scenario, message: impl Into<String>) -> RunError {
    RunError::Config(ConfigError::Settings {
        scenario: scenario.name.clone(),
        message: message.into(),
    })
}

/// Compact label for a number in file names and legends.
fn tag(x: f64) -> String {
    format!("{x}")
}

fn with_key(p: &ModelParams, key: &str, value: f64) -> ModelParams {
    let mut q = *p;
    q.set(key, value).expect("keys are checked at parse");
    q
}

fn pde_config(n: &PdeNumerics, t_end: f64) -> PdeRunConfig {
    let mut cfg = PdeRunConfig::new(t_end).with_stride(n.stride);
    cfg.dr = n.dr;
    cfg.integrator = cfg.integrator.with_tolerances(n.rel_tol, n.abs_tol);
    cfg
}

/// Stable state the spatial tail should approach: the coexistence state when
/// it is biologically meaningful, otherwise the untreated carrying capacity.
fn equilibrium_u(p: &ModelParams) -> (f64, bool) {
    match coexistence_equilibrium(p) {
        Some(eq) if eq.biological => (eq.state.u, eq.eigen.is_stable()),
        _ => (1.0, true),
    }
}

/// Runs one scenario and writes its outputs below `root/<out>`.
pub fn run_scenario(cfg: &Config, name: &str, root: &Path) -> Result<Manifest, RunError> {
    let scenario = cfg.scenario(name)?;
    let params = cfg.resolve(scenario)?;
    let job = scenario.job()?;
    let mut out = Outputs::new(scenario, root)?;
    match &job {
        Job::PdeSnapshot(s) => pde_snapshot(scenario, &params, s, &mut out)?,
        Job::PdeSweep(s) => pde_sweep(scenario, &params, s, &mut out)?,
        Job::OdeRun(s) => ode_run(scenario, &params, s, &mut out)?,
        Job::Branch(s) => branch(scenario, &params, s, &mut out)?,
        Job::LimitCycleBranch(s) => limit_cycles(scenario, &params, s, &mut out)?,
        Job::HopfCurve(s) => hopf_curves(scenario, &params, s, &mut out)?,
        Job::CalibrationReport(s) => calibration(scenario, &params, s, &mut out)?,
        Job::PdeVsOde(s) => pde_vs_ode(scenario, &params, s, &mut out)?,
    }
    let mut overrides = cfg.params.clone();
    overrides.extend(scenario.params.iter().map(|(k, v)| (k.clone(), *v)));
    let manifest = Manifest {
        scenario: scenario.name.clone(),
        kind: scenario.kind.to_string(),
        description: scenario.description.clone(),
        config: cfg.path.display().to_string(),
        params: params.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        overrides,
        settings: serde_json::to_value(&scenario.settings).map_err(|e| numeric(scenario, e))?,
        rng: "none".into(),
        outputs: out.files.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| numeric(scenario, e))?;
    text.push('\n');
    let path = out.dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| out.io_error(&path, e))?;
    Ok(manifest)
}

/// Runs every scenario concurrently; results come back in config order.
pub fn run_all(cfg: &Config, root: &Path) -> Vec<(String, Result<Manifest, RunError>)> {
    cfg.scenarios
        .par_iter()
        .map(|s| (s.name.clone(), run_scenario(cfg, &s.name, root)))
        .collect()
}

fn pde_snapshot(
    scenario: &Scenario,
    p: &ModelParams,
    s: &PdeSnapshotSettings,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let cfg = pde_config(&s.numerics, s.t_end)
        .with_snapshots(&s.snapshots)
        .with_probes(&s.probes);
    let run = run_pde(p, &cfg).map_err(|e| pde_error(scenario, e))?;
    out.csv("observables.csv", |w| export::write_observables(w, &run.observables))?;
    for field in &run.snapshots {
        out.csv(&format!("snapshot_t{}.csv", tag(field.time)), |w| export::write_snapshot(w, field))?;
    }
    for probe in &run.probes {
        out.csv(&format!("probe_r{}.csv", tag(probe.radius)), |w| export::write_probe(w, probe))?;
    }
    if s.volume {
        out.csv("volume.csv", |w| write_volume(w, &run))?;
        let volume = run.series(|r| r.front_u.map(tumour_volume));
        out.plot(
            "volume.svg",
            &Plot::new(&scenario.name, "time (days)", "tumour volume (mm³)")
                .with(Series::line("volume", volume)),
        )?;
    }
    if !run.snapshots.is_empty() {
        out.plot("profiles.svg", &profiles_plot(&scenario.name, &run))?;
    }
    let mut totals = Plot::new(&scenario.name, "time (days)", "tumour cells");
    totals.series.push(Series::line("uninfected + infected", run.series(|r| Some(r.total_u + r.total_i))));
    out.plot("totals.svg", &totals)?;
    if !run.probes.is_empty() {
        let mut plot = Plot::new(&scenario.name, "time (days)", "u at probe");
        for probe in &run.probes {
            let pts = probe.times.iter().copied().zip(probe.u.iter().copied()).collect();
            plot.series.push(Series::line(format!("r = {} mm", tag(probe.radius)), pts));
        }
        out.plot("probes.svg", &plot)?;
    }
    Ok(())
}

fn profiles_plot(title: &str, run: &PdeRun) -> Plot {
    let mut plot = Plot::new(title, "r (mm)", "density");
    for field in &run.snapshots {
        let radii = field.grid.radii();
        let u = radii.iter().copied().zip(field.u.iter().copied()).collect();
        let i = radii.iter().copied().zip(field.i.iter().copied()).collect();
        plot.series.push(Series::line(format!("u, day {}", tag(field.time)), u));
        plot.series.push(Series::line(format!("i, day {}", tag(field.time)), i).styled(Style::Dashed));
    }
    plot
}

fn write_volume(mut w: impl Write, run: &PdeRun) -> io::Result<()> {
    writeln!(w, "t_days,front_u_mm,volume_mm3")?;
    for row in &run.observables {
        let volume = row.front_u.map(tumour_volume);
        writeln!(w, "{},{},{}", num(row.t), opt(row.front_u), opt(volume))?;
    }
    Ok(())
}

fn pde_sweep(
    scenario: &Scenario,
    p: &ModelParams,
    s: &PdeSweepSettings,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let [t0, t1] = s.speed_window.unwrap_or([0.0, s.t_end]);
    let runs: Vec<PdeRun> = s
        .values
        .par_iter()
        .map(|&value| {
            let cfg = pde_config(&s.numerics, s.t_end).with_snapshots(&s.snapshots);
            run_pde(&with_key(p, &s.param, value), &cfg)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| pde_error(scenario, e))?;

    let mut rows = Vec::new();
    let mut tumour = Plot::new(&scenario.name, "time (days)", "tumour cells");
    for (&value, run) in s.values.iter().zip(&runs) {
        let label = format!("{}_{}", s.param, tag(value));
        out.csv(&format!("observables_{label}.csv"), |w| export::write_observables(w, &run.observables))?;
        for field in &run.snapshots {
            out.csv(&format!("snapshot_{label}_t{}.csv", tag(field.time)), |w| {
                export::write_snapshot(w, field)
            })?;
        }
        if !run.snapshots.is_empty() {
            out.plot(&format!("profiles_{label}.svg"), &profiles_plot(&label, run))?;
        }
        tumour.series.push(Series::line(
            format!("{} = {}", s.param, tag(value)),
            run.series(|r| Some(r.total_u + r.total_i)),
        ));
        let front_v = run.series(|r| r.front_v);
        let chord = mean_speed(&front_v, t0, t1).unwrap_or(f64::NAN);
        let fit = wave_speed(&front_v, t0, t1).unwrap_or(f64::NAN);
        let last = *run.observables.last().expect("runs record the start");
        rows.push((value, last, chord, fit));
    }
    out.csv("sweep.csv", |w| {
        writeln!(w, "value,total_u,total_i,total_v,front_u_mm,front_v_mm,tail_u,mean_speed_v,fit_speed_v")?;
        for (value, last, chord, fit) in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                num(*value),
                num(last.total_u),
                num(last.total_i),
                num(last.total_v),
                opt(last.front_u),
                opt(last.front_v),
                num(last.tail_u),
                num(*chord),
                num(*fit)
            )?;
        }
        Ok(())
    })?;
    out.plot("tumour.svg", &tumour)?;
    let speeds = rows.iter().map(|r| (r.0, r.2)).collect();
    out.plot(
        "speed.svg",
        &Plot::new(&scenario.name, &s.param, "virus front speed (mm/day)")
            .with(Series::line("average speed", speeds).styled(Style::Markers)),
    )?;
    Ok(())
}

fn ode_run(scenario: &Scenario, p: &ModelParams, s: &OdeRunSettings, out: &mut Outputs) -> Result<(), RunError> {
    let s0 = match s.initial {
        Some(a) => State3::from_array(a),
        None => State3::new(p.u0, p.v0, 0.0),
    };
    let cfg = IntegrationConfig::span(0.0, s.t_end)
        .with_tolerances(s.rel_tol, s.abs_tol)
        .with_stride(s.stride);
    cfg.validate().map_err(|e| invalid(scenario, e.to_string()))?;
    let traj = integrate(p, s0, &cfg).map_err(|e| numeric(scenario, e))?;
    out.csv("trajectory.csv", |w| export::write_trajectory(w, &traj))?;
    let peaks = detect_peaks(&traj, Component::U, s.discard);
    out.csv("peaks.csv", |w| {
        writeln!(w, "t_days,u")?;
        for pk in &peaks {
            writeln!(w, "{},{}", num(pk.time), num(pk.value))?;
        }
        Ok(())
    })?;
    let series = |c: Component| traj.times.iter().copied().zip(traj.component(c)).collect();
    out.plot(
        "trajectory.svg",
        &Plot::new(&scenario.name, "time (days)", "fraction of carrying capacity")
            .with(Series::line("u", series(Component::U)))
            .with(Series::line("i", series(Component::I))),
    )?;
    Ok(())
}

fn branch_plot(plot: &mut Plot, name: &str, branch: &Branch) {
    let mut runs: Vec<(bool, Vec<(f64, f64)>)> = Vec::new();
    for pt in &branch.points {
        let xy = (pt.param_value, pt.state.u);
        match runs.last_mut() {
            Some((stable, pts)) if *stable == pt.stable => pts.push(xy),
            Some((_, pts)) => {
                let joint = *pts.last().expect("runs are never empty");
                runs.push((pt.stable, vec![joint, xy]));
            }
            None => runs.push((pt.stable, vec![xy])),
        }
    }
    for (stable, pts) in runs {
        let (label, style) = if stable {
            (format!("{name} stable"), Style::Line)
        } else {
            (format!("{name} unstable"), Style::Dashed)
        };
        plot.series.push(Series::line(label, pts).styled(style));
    }
    let events = branch.events.iter().map(|e| (e.param_value, e.state.u)).collect();
    plot.series.push(Series::line(format!("{name} events"), events).styled(Style::Markers));
}

fn branch(scenario: &Scenario, p: &ModelParams, s: &BranchSettings, out: &mut Outputs) -> Result<(), RunError> {
    let mut settings = ContinuationSettings {
        log_param: s.log,
        ..ContinuationSettings::default()
    };
    if let Some(h) = s.h_max {
        settings.h_max = h;
    }
    let range = (s.range[0], s.range[1]);
    let mut plot = Plot::new(&scenario.name, s.param.name(), "u");
    if s.log {
        plot = plot.log_x();
    }
    for start in &s.branches {
        let branch = match start {
            BranchStart::Coexistence => coexistence_branch(p, s.param, range, s.from, &settings),
            BranchStart::Trivial => trivial_branch(p, s.param, range, &settings),
        }
        .map_err(|e| numeric(scenario, format!("{} branch: {e}", start.name())))?;
        out.csv(&format!("branch_{}.csv", start.name()), |w| export::write_branch(w, &branch))?;
        out.csv(&format!("events_{}.csv", start.name()), |w| export::write_events(w, &branch.events))?;
        branch_plot(&mut plot, start.name(), &branch);
    }
    out.plot("branch.svg", &plot)
}

fn limit_cycles(
    scenario: &Scenario,
    p: &ModelParams,
    s: &LimitCycleSettings,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let defaults = CycleSettings::default();
    let settings = CycleSettings {
        window: s.window.unwrap_or(defaults.window),
        max_windows: s.max_windows.unwrap_or(defaults.max_windows),
        stride: s.stride.unwrap_or(defaults.stride),
        ..defaults
    };
    let points = limit_cycle_branch(p, s.param, &s.values, &settings);
    out.csv("limit_cycles.csv", |w| export::write_limit_cycles(w, &points))?;
    let equilibrium = s
        .values
        .iter()
        .filter_map(|&x| coexistence_equilibrium(&p.with(s.param, x)).map(|eq| (x, eq.state.u)))
        .collect();
    out.plot(
        "limit_cycles.svg",
        &Plot::new(&scenario.name, s.param.name(), "u")
            .with(Series::line("u max", points.iter().map(|c| (c.param_value, c.u_max)).collect()))
            .with(Series::line("u min", points.iter().map(|c| (c.param_value, c.u_min)).collect()))
            .with(Series::line("coexistence state", equilibrium).styled(Style::Dashed)),
    )
}

fn hopf_curves(
    scenario: &Scenario,
    p: &ModelParams,
    s: &HopfCurveSettings,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let d = HopfScan::default();
    let scan = HopfScan {
        delta_i_from: s.delta_i_from.unwrap_or(d.delta_i_from),
        delta_i_to: s.delta_i_to.unwrap_or(d.delta_i_to),
        delta_i_lines: s.delta_i_lines.unwrap_or(d.delta_i_lines),
        delta_v_samples: s.delta_v_samples.unwrap_or(d.delta_v_samples),
        ..d
    };
    let curves = hopf_curve_2param(p, &s.betas, &scan).map_err(|e| numeric(scenario, e))?;
    out.csv("hopf_curve.csv", |w| export::write_hopf_curves(w, &curves))?;
    out.csv("hopf_summary.csv", |w| {
        writeln!(w, "beta,area,axis_delta_i")?;
        for c in &curves {
            if c.axis_intersections.is_empty() {
                writeln!(w, "{},{},nan", num(c.beta), num(c.area))?;
            }
            for &di in &c.axis_intersections {
                writeln!(w, "{},{},{}", num(c.beta), num(c.area), num(di))?;
            }
        }
        Ok(())
    })?;
    let mut plot = Plot::new(&scenario.name, "delta_i", "delta_v").log_x();
    for c in &curves {
        for seg in &c.segments {
            let pts = seg.iter().map(|&(dv, di)| (di, dv)).collect();
            plot.series.push(Series::line(format!("beta = {}", tag(c.beta)), pts));
        }
    }
    out.plot("hopf_curve.svg", &plot)
}

fn calibration(
    scenario: &Scenario,
    p: &ModelParams,
    s: &CalibrationSettings,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let cal = calibrate(&s.inputs).map_err(|e| invalid(scenario, e.to_string()))?;
    out.bytes("calibration.txt", cal.report(p).as_bytes())?;
    let derived = cal.params(p, s.rounding);
    out.csv("params.csv", |w| {
        writeln!(w, "key,value")?;
        for (key, value) in derived.entries() {
            writeln!(w, "{key},{}", num(value))?;
        }
        Ok(())
    })
}

struct Comparison {
    value: f64,
    run: PdeRun,
    u_eq: f64,
    eq_stable: bool,
    verdict: OscillationVerdict,
    low_confidence: bool,
    last_amplitude: f64,
}

fn pde_vs_ode(scenario: &Scenario, p: &ModelParams, s: &PdeVsOdeSettings, out: &mut Outputs) -> Result<(), RunError> {
    if !(s.window > 0.0) {
        return Err(invalid(scenario, "window must be positive"));
    }
    let rows: Vec<Comparison> = s
        .values
        .par_iter()
        .map(|&value| {
            let q = with_key(p, &s.param, value);
            let cfg = pde_config(&s.numerics, s.t_end).with_probes(&[s.probe]);
            let run = run_pde(&q, &cfg)?;
            let series = match s.monitor {
                Monitor::Probe => {
                    let probe = &run.probes[0];
                    probe.times.iter().copied().zip(probe.u.iter().copied()).collect()
                }
                Monitor::Total => run.series(|r| Some(r.total_u)),
            };
            let report = oscillation_monitor(&series, s.window);
            let (u_eq, eq_stable) = equilibrium_u(&q);
            Ok(Comparison {
                value,
                u_eq,
                eq_stable,
                verdict: report.verdict,
                low_confidence: report.low_confidence,
                last_amplitude: report.amplitudes.last().map_or(f64::NAN, |a| a.1),
                run,
            })
        })
        .collect::<Result<_, PdeError>>()
        .map_err(|e| pde_error(scenario, e))?;

    out.csv("comparison.csv", |w| {
        writeln!(w, "value,tail_u,u_eq,rel_diff,eq_stable,verdict,low_confidence,last_amplitude")?;
        for c in &rows {
            let tail = final_tail(&c.run);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                num(c.value),
                num(tail),
                num(c.u_eq),
                num((tail - c.u_eq) / c.u_eq),
                u8::from(c.eq_stable),
                match c.verdict {
                    OscillationVerdict::Damped => "damped",
                    OscillationVerdict::Persistent => "persistent",
                },
                u8::from(c.low_confidence),
                num(c.last_amplitude)
            )?;
        }
        Ok(())
    })?;
    let mut probes = Plot::new(&scenario.name, "time (days)", format!("u at r = {} mm", tag(s.probe)));
    let mut totals = Plot::new(&scenario.name, "time (days)", "uninfected cells");
    for c in &rows {
        let label = format!("{}_{}", s.param, tag(c.value));
        let probe = &c.run.probes[0];
        out.csv(&format!("probe_{label}.csv"), |w| export::write_probe(w, probe))?;
        out.csv(&format!("observables_{label}.csv"), |w| export::write_observables(w, &c.run.observables))?;
        let legend = format!("{} = {}", s.param, tag(c.value));
        probes.series.push(Series::line(
            legend.clone(),
            probe.times.iter().copied().zip(probe.u.iter().copied()).collect(),
        ));
        totals.series.push(Series::line(legend, c.run.series(|r| Some(r.total_u))));
    }
    out.plot("probes.svg", &probes)?;
    out.plot("totals.svg", &totals)?;
    out.plot(
        "tails.svg",
        &Plot::new(&scenario.name, &s.param, "tail density u")
            .with(Series::line("equilibrium", rows.iter().map(|c| (c.value, c.u_eq)).collect()).styled(Style::Dashed))
            .with(Series::line("spatial tail", rows.iter().map(|c| (c.value, final_tail(&c.run))).collect()).styled(Style::Markers)),
    )
}

fn final_tail(run: &PdeRun) -> f64 {
    run.observables.last().map_or(f64::NAN, |r| r.tail_u)
}

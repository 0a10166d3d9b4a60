//! CSV writers. Every number is written in scientific notation with nine
//! significant digits so reruns compare byte for byte.

use std::io::{self, Write};

use crate::bifurcation::{BifurcationEvent, Branch, HopfCurve, LimitCyclePoint};
use crate::ode::Trajectory;
use crate::pde::{ObservableRow, ProbeSeries, RadialField};

pub const BRANCH_HEADER: &str = "param,u,v,i,re_l1,im_l1,re_l2,im_l2,re_l3,im_l3,stable";
pub const EVENTS_HEADER: &str = "kind,param,u,v,i";
pub const HOPF_CURVE_HEADER: &str = "beta,delta_v,delta_i";
pub const SNAPSHOT_HEADER: &str = "r_mm,u,v,i";
pub const OBSERVABLES_HEADER: &str = "t_days,total_u,total_i,total_v,front_u_mm,front_v_mm,tail_u";
pub const TRAJECTORY_HEADER: &str = "t_days,u,v,i";
pub const LIMIT_CYCLE_HEADER: &str = "param,u_max,u_min,period,converged,oscillating";

/// `x` with nine significant digits; non-finite values print as `nan`,
/// `inf` or `-inf`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.8e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), num)
}

pub fn write_branch(mut w: impl Write, branch: &Branch) -> io::Result<()> {
    writeln!(w, "{BRANCH_HEADER}")?;
    for pt in &branch.points {
        let s = pt.state;
        write!(w, "{},{},{},{}", num(pt.param_value), num(s.u), num(s.v), num(s.i))?;
        for z in pt.eigen.values {
            write!(w, ",{},{}", num(z.re), num(z.im))?;
        }
        writeln!(w, ",{}", u8::from(pt.stable))?;
    }
    Ok(())
}

pub fn write_events(mut w: impl Write, events: &[BifurcationEvent]) -> io::Result<()> {
    writeln!(w, "{EVENTS_HEADER}")?;
    for e in events {
        let s = e.state;
        writeln!(
            w,
            "{},{},{},{},{}",
            e.kind.label(),
            num(e.param_value),
            num(s.u),
            num(s.v),
            num(s.i)
        )?;
    }
    Ok(())
}

pub fn write_hopf_curves(mut w: impl Write, curves: &[HopfCurve]) -> io::Result<()> {
    writeln!(w, "{HOPF_CURVE_HEADER}")?;
    for c in curves {
        for &(dv, di) in &c.points {
            writeln!(w, "{},{},{}", num(c.beta), num(dv), num(di))?;
        }
    }
    Ok(())
}

pub fn write_snapshot(mut w: impl Write, field: &RadialField) -> io::Result<()> {
    writeln!(w, "{SNAPSHOT_HEADER}")?;
    for j in 0..field.grid.n {
        writeln!(
            w,
            "{},{},{},{}",
            num(field.grid.r(j)),
            num(field.u[j]),
            num(field.v[j]),
            num(field.i[j])
        )?;
    }
    Ok(())
}

pub fn write_observables(mut w: impl Write, rows: &[ObservableRow]) -> io::Result<()> {
    writeln!(w, "{OBSERVABLES_HEADER}")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            num(row.t),
            num(row.total_u),
            num(row.total_i),
            num(row.total_v),
            opt(row.front_u),
            opt(row.front_v),
            num(row.tail_u)
        )?;
    }
    Ok(())
}

pub fn write_trajectory(mut w: impl Write, traj: &Trajectory) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        writeln!(w, "{},{},{},{}", num(*t), num(s.u), num(s.v), num(s.i))?;
    }
    Ok(())
}

pub fn write_probe(mut w: impl Write, probe: &ProbeSeries) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for k in 0..probe.times.len() {
        writeln!(
            w,
            "{},{},{},{}",
            num(probe.times[k]),
            num(probe.u[k]),
            num(probe.v[k]),
            num(probe.i[k])
        )?;
    }
    Ok(())
}

pub fn write_limit_cycles(mut w: impl Write, points: &[LimitCyclePoint]) -> io::Result<()> {
    writeln!(w, "{LIMIT_CYCLE_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            num(p.param_value),
            num(p.u_max),
            num(p.u_min),
            num(p.period),
            u8::from(p.converged),
            u8::from(p.oscillating)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(num(0.0011431838), "1.14318380e-3");
        assert_eq!(num(-2.5), "-2.50000000e0");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(num(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn trajectory_rows() {
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![crate::State3::new(1.0, 2.0, 3.0), crate::State3::ZERO],
            step_stats: Default::default(),
        };
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines[1], "0.00000000e0,1.00000000e0,2.00000000e0,3.00000000e0");
        assert_eq!(lines.len(), 3);
    }
}

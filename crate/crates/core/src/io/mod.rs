//! CSV exports and the binary snapshot/transform caches.
//!
//! CSV formats:
//! * trajectory: `time_s,state_or_sensor_id,species,value_mg_per_L`
//! * operating schedule: `window_start_s,element_id,c_op,ctilde_op`
//! * control log: `time_s,booster_id,u_mg_per_min,objective,solve_ms`
//!
//! Binary caches are little-endian with magic + version headers and
//! column-major `f64` payloads; see [`cache`].

pub mod cache;

use std::io::Write;

use nalgebra::DVector;

use crate::control::ClosedLoopLog;
use crate::dynamics::Trajectory;
use crate::linearize::OperatingSchedule;
use crate::network::{NetworkGraph, StateIndexMap};

pub type IoResult<T> = std::io::Result<T>;

/// Write recorded states (at the trajectory's stride) and sensor outputs.
///
/// State rows use element labels (`P1:17` for pipe segments); sensor rows
/// use the sensor channel label with a `sensor:` prefix to stay
/// unambiguous.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    graph: &NetworkGraph,
    map: &StateIndexMap,
    trajectory: &Trajectory,
    sensor_channel_labels: &[String],
) -> IoResult<()> {
    writeln!(out, "time_s,state_or_sensor_id,species,value_mg_per_L")?;
    let n = map.n();
    for (i, x) in trajectory.states.iter().enumerate() {
        let step = (i * trajectory.state_stride).min(trajectory.n_steps());
        let t = step as f64 * trajectory.dt_s;
        for state in 0..n {
            let label = map.label(graph, state);
            writeln!(out, "{t},{label},chlorine,{:.12e}", x[state])?;
            writeln!(out, "{t},{label},reactant,{:.12e}", x[n + state])?;
        }
    }
    for (k, y) in trajectory.outputs.iter().enumerate() {
        let t = k as f64 * trajectory.dt_s;
        for (c, label) in sensor_channel_labels.iter().enumerate() {
            writeln!(out, "{t},sensor:{label},,{:.12e}", y[c])?;
        }
    }
    Ok(())
}

/// Sensor channel labels in output order: chlorine sensors then the
/// evaluation-only reactant sensors.
pub fn sensor_labels(graph: &NetworkGraph, layout: &crate::network::DeviceLayout) -> Vec<String> {
    layout
        .chlorine_sensors
        .iter()
        .map(|&node| format!("{}:chlorine", graph.nodes()[node].id))
        .chain(
            layout
                .reactant_sensors
                .iter()
                .map(|&node| format!("{}:reactant", graph.nodes()[node].id)),
        )
        .collect()
}

/// Outputs-only export, one row per step and channel.
pub fn write_outputs_csv<W: Write>(
    out: &mut W,
    dt_s: f64,
    labels: &[String],
    outputs: &[DVector<f64>],
) -> IoResult<()> {
    writeln!(out, "time_s,sensor,value_mg_per_L")?;
    for (k, y) in outputs.iter().enumerate() {
        let t = k as f64 * dt_s;
        for (c, label) in labels.iter().enumerate() {
            writeln!(out, "{t},{label},{:.12e}", y[c])?;
        }
    }
    Ok(())
}

/// Operating-point windows for reproducibility.
pub fn write_schedule_csv<W: Write>(
    out: &mut W,
    graph: &NetworkGraph,
    map: &StateIndexMap,
    schedule: &OperatingSchedule,
) -> IoResult<()> {
    writeln!(out, "window_start_s,element_id,c_op,ctilde_op")?;
    for window in schedule.windows() {
        for (site, op) in map.reaction_sites().iter().zip(&window.ops) {
            writeln!(
                out,
                "{},{},{:.12e},{:.12e}",
                window.start_s,
                map.label(graph, site.state),
                op.c_o,
                op.c_tilde_o
            )?;
        }
    }
    Ok(())
}

/// Control actions with solve diagnostics, one row per booster per interval.
pub fn write_control_log_csv<W: Write>(
    out: &mut W,
    graph: &NetworkGraph,
    boosters: &[usize],
    log: &ClosedLoopLog,
) -> IoResult<()> {
    writeln!(out, "time_s,booster_id,u_mg_per_min,objective,solve_ms")?;
    for record in &log.records {
        for (b, &node) in boosters.iter().enumerate() {
            writeln!(
                out,
                "{},{},{:.12e},{:.12e},{:.3}",
                record.time_s,
                graph.nodes()[node].id,
                record.u1_mg_min[b],
                record.objective,
                record.solve_ms
            )?;
        }
    }
    Ok(())
}

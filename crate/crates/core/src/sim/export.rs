use std::io::Write;

use super::{StudyRow, TrajectoryBundle};
use crate::error::Result;

/// 17 significant digits in scientific notation; parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Config(format!("CSV: {other:?}")),
    }
}

/// Columns `replication, t, agent_id, x1.., u1..`.
pub fn write_trajectory_csv<W: Write>(bundle: &TrajectoryBundle, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["replication".to_string(), "t".into(), "agent_id".into()];
    header.extend((1..=bundle.n).map(|p| format!("x{p}")));
    header.extend((1..=bundle.r).map(|c| format!("u{c}")));
    w.write_record(&header).map_err(csv_err)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for rep in 0..bundle.replications {
        for (k, &t) in bundle.grid.iter().enumerate() {
            for i in 0..bundle.n_agents {
                rec.clear();
                rec.push(rep.to_string());
                rec.push(format_float(t));
                rec.push(i.to_string());
                rec.extend(bundle.state(rep, k, i).iter().map(|v| format_float(*v)));
                rec.extend(bundle.control(rep, k, i).iter().map(|v| format_float(*v)));
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `N, metric, estimate, stderr`.
pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "metric", "estimate", "stderr"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.metric.clone(),
            format_float(r.estimate),
            format_float(r.stderr),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

use super::population::EpochRecord;
use super::sweep::SweepReport;

pub const EPOCH_COLUMNS: [&str; 16] = [
    "epoch",
    "graph_seed",
    "lambda_star",
    "lambda_2",
    "assumption_ok",
    "u",
    "y_obs1",
    "y_obs1_consensus",
    "r_ave",
    "pi_hat_11",
    "pi_hat_12",
    "pi_hat_22",
    "y_goal1",
    "b",
    "lyapunov",
    "pe_min_eig_w",
];

pub const SWEEP_COLUMNS: [&str; 6] = ["plateau", "b", "n_pos", "crossing_agent", "b_linear_pred", "rel_dev"];

fn epoch_row(r: &EpochRecord) -> [String; 16] {
    [
        r.epoch.to_string(),
        r.graph_seed.to_string(),
        r.lambda_star.to_string(),
        r.lambda_2.to_string(),
        r.assumption_ok.to_string(),
        r.u.to_string(),
        r.y_obs1.to_string(),
        r.y_obs1_consensus.to_string(),
        r.r_ave.to_string(),
        r.pi_hat[0].to_string(),
        r.pi_hat[1].to_string(),
        r.pi_hat[2].to_string(),
        r.y_goal1.to_string(),
        r.b.to_string(),
        r.lyapunov.to_string(),
        r.pe_min_eig_w.to_string(),
    ]
}

pub fn write_records_csv<W: Write>(records: &[EpochRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(EPOCH_COLUMNS)?;
    for r in records {
        wtr.write_record(epoch_row(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn export_csv(records: &[EpochRecord], path: &Path) -> Result<()> {
    write_records_csv(records, BufWriter::new(File::create(path)?))
}

/// One row per plateau; the crossing columns describe the step into that plateau.
/// Several agents crossing in one step are joined with `;` and leave the
/// prediction columns empty.
pub fn write_sweep_csv<W: Write>(rep: &SweepReport, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SWEEP_COLUMNS)?;
    for p in &rep.plateaus {
        let here: Vec<_> = rep.crossings.iter().filter(|c| c.plateau == p.index && p.index > 0).collect();
        let (agent, pred, dev) = match here.as_slice() {
            [] => (String::new(), String::new(), String::new()),
            [c] => (c.agent.to_string(), c.b_linear_pred.to_string(), c.rel_dev.to_string()),
            many => (
                many.iter().map(|c| c.agent.to_string()).collect::<Vec<_>>().join(";"),
                String::new(),
                String::new(),
            ),
        };
        wtr.write_record([p.index.to_string(), p.b.to_string(), p.n_pos.to_string(), agent, pred, dev])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn export_sweep_csv(rep: &SweepReport, path: &Path) -> Result<()> {
    write_sweep_csv(rep, BufWriter::new(File::create(path)?))
}

/// Pretty-printed JSON with a trailing newline.
pub fn export_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

//! Checkpoint directory: config.json, models.bin, models.json, metrics.csv, losses.csv.

use std::fmt::Write as _;
use std::path::Path;

use super::{EpochMetrics, Phase, TrainConfig, TrainState};
use crate::error::{PllError, Result};
use crate::models::write_atomic;
use crate::objectives::LossReport;

pub const CONFIG_JSON: &str = "config.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const LOSSES_CSV: &str = "losses.csv";

const LE_HEADER: &str =
    "epoch,phase,total,min_loss,risk,compat,kl,recon_label,recon_graph,test_acc,le_quality,d_convergence,skipped_batches";
const ABLATION_HEADER: &str = "epoch,phase,total,min_loss,test_acc,skipped_batches";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Warmup => "warmup",
        Phase::LabelEnhancement => "label_enhancement",
        Phase::Ablation => "ablation",
    }
}

/// Per-epoch metrics; ablation runs get no label-enhancement columns.
pub fn metrics_csv(history: &[EpochMetrics], ablation: bool) -> String {
    let mut s = String::new();
    s.push_str(if ablation { ABLATION_HEADER } else { LE_HEADER });
    s.push('\n');
    for m in history {
        let l = &m.losses;
        let _ = if ablation {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                m.epoch,
                phase_name(m.phase),
                l.total,
                l.min_loss,
                opt(m.test_acc),
                m.skipped_batches
            )
        } else {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                m.epoch,
                phase_name(m.phase),
                l.total,
                l.min_loss,
                l.risk,
                l.compat,
                l.kl,
                l.recon_label,
                l.recon_graph,
                opt(m.test_acc),
                opt(m.le_quality),
                opt(m.d_convergence),
                m.skipped_batches
            )
        };
    }
    s
}

pub fn losses_csv(steps: &[LossReport]) -> String {
    let mut s = String::from(LossReport::CSV_HEADER);
    s.push('\n');
    for (i, r) in steps.iter().enumerate() {
        s.push_str(&r.csv_row(i));
        s.push('\n');
    }
    s
}

/// Writes the whole run to `dir`, creating it if needed.
pub fn write_run(dir: &Path, config: &TrainConfig, state: &TrainState, ablation: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PllError::io(dir, e))?;
    write_atomic(&dir.join(CONFIG_JSON), serde_json::to_string_pretty(config)?.as_bytes())?;
    state.bundle.save(dir, config.seed)?;
    write_atomic(&dir.join(METRICS_CSV), metrics_csv(&state.history, ablation).as_bytes())?;
    write_atomic(&dir.join(LOSSES_CSV), losses_csv(&state.step_log).as_bytes())
}

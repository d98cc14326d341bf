//! Loss by learning-rate grid of final clean and robust 0-1 errors.

use rayon::prelude::*;
use serde::Serialize;

use score_core::trainer::{train, TrainConfig};
use score_core::MetricSpec;

use crate::config::ExperimentConfig;
use crate::demos::init_model;
use crate::report::Csv;

pub const CSV_HEADER: &str = "loss,lr,clean01,robust01";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub loss: String,
    pub lr: f64,
    /// NaN when the cell failed.
    pub clean01: f64,
    pub robust01: f64,
}

fn cell(cfg: &ExperimentConfig, spec: MetricSpec, lr: f64) -> SweepRow {
    let t = TrainConfig {
        objective: cfg.sweep.objective,
        spec,
        lr,
        ..cfg.train.clone()
    };
    let last = init_model(cfg)
        .ok()
        .and_then(|m| train(m, &cfg.distribution, &cfg.attack, &t).ok())
        .and_then(|out| out.records.last().copied());
    let (clean01, robust01) = last.map_or((f64::NAN, f64::NAN), |r| (r.std01, r.madry01));
    SweepRow {
        loss: spec.to_string(),
        lr,
        clean01,
        robust01,
    }
}

/// Train every cell from the same initialization. Rows are sorted by loss
/// name, then learning rate.
pub fn run_sweep(cfg: &ExperimentConfig) -> Vec<SweepRow> {
    let cells: Vec<(MetricSpec, f64)> = cfg
        .sweep
        .losses
        .iter()
        .flat_map(|&s| cfg.sweep.lrs.iter().map(move |&lr| (s, lr)))
        .collect();
    let mut rows: Vec<SweepRow> = cells.par_iter().map(|&(s, lr)| cell(cfg, s, lr)).collect();
    rows.sort_by(|a, b| a.loss.cmp(&b.loss).then(a.lr.total_cmp(&b.lr)));
    rows
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut csv = Csv::new(CSV_HEADER);
    for r in rows {
        csv.row(Some(&r.loss), &[r.lr, r.clean01, r.robust01]);
    }
    csv.into_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{build, command_defaults, Override};

    fn quick(extra: &[Override]) -> ExperimentConfig {
        let mut ov = vec![
            Override::new("train.steps", "3"),
            Override::new("train.record_every", "3"),
            Override::new("train.eval_points", "21"),
            Override::new("train.batch", r#"{"mode":"full_quadrature","points":21}"#),
            Override::new("model.hidden", "4"),
        ];
        ov.extend_from_slice(extra);
        build(command_defaults("sweep"), None, &ov).unwrap()
    }

    #[test]
    fn full_grid_is_sorted() {
        let rows = run_sweep(&quick(&[]));
        assert_eq!(rows.len(), 24);
        for w in rows.windows(2) {
            assert!((w[0].loss.as_str(), w[0].lr) < (w[1].loss.as_str(), w[1].lr));
        }
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.clean01)));
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        assert_eq!(csv.lines().count(), 25);
    }

    #[test]
    fn failed_cells_become_nan_rows() {
        let mut cfg = quick(&[]);
        cfg.sweep.lrs = vec![0.01, -1.0];
        cfg.sweep.losses = vec![MetricSpec::KL];
        let rows = run_sweep(&cfg);
        assert!(rows[0].clean01.is_nan() && rows[0].lr == -1.0);
        assert!(rows[1].clean01.is_finite());
        assert!(sweep_csv(&rows).contains("KL,-1,NaN,NaN"));
    }
}

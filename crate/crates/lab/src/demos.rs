//! Toy-figure reproductions: training runs, curves, trajectories and charts.

use std::str::FromStr;

use serde::Serialize;

use score_core::mlp::{Classifier, MlpModel};
use score_core::objectives::{BallGrid, Objective};
use score_core::rng::derive_seed;
use score_core::trainer::{
    detect_overfit_onset, finite_sample_run, sup_gap, train, train_observed, OverfitOnset,
    TrainConfig, TrainError, TrainOutcome, TrajectoryRecord,
};
use score_core::MetricSpec;

use crate::config::{ExperimentConfig, Format};
use crate::error::LabError;
use crate::report::{config_comment, jsonl, trajectory_csv, Artifacts, Csv};
use crate::svg::{Chart, Marker, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Demo {
    Fig1,
    Fig2,
    OverfitL2,
    OverfitKl,
    GradientAlignment,
}

impl Demo {
    pub const ALL: [Demo; 5] = [
        Self::Fig1,
        Self::Fig2,
        Self::OverfitL2,
        Self::OverfitKl,
        Self::GradientAlignment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fig1 => "fig1",
            Self::Fig2 => "fig2",
            Self::OverfitL2 => "overfit_l2",
            Self::OverfitKl => "overfit_kl",
            Self::GradientAlignment => "gradient_alignment",
        }
    }
}

impl FromStr for Demo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown demo {s:?}; expected one of fig1, fig2, overfit_l2, overfit_kl, gradient_alignment"))
    }
}

/// Onset of overfitting with its distance from the smoothness constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnsetSummary {
    pub step: Option<usize>,
    pub r_madry: Option<f64>,
    /// Smoothness constant of the training metric on the recording grid.
    pub c: f64,
    /// `r_madry / c` at the onset.
    pub ratio: Option<f64>,
    pub within_25pct: bool,
}

impl OnsetSummary {
    pub fn new(onset: Option<OverfitOnset>, c: f64) -> Self {
        let ratio = onset.map(|o| o.r_madry / c);
        Self {
            step: onset.map(|o| o.step),
            r_madry: onset.map(|o| o.r_madry),
            c,
            ratio,
            within_25pct: ratio.is_some_and(|r| (r - 1.0).abs() <= 0.25),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub demo: &'static str,
    pub objective: &'static str,
    pub spec: String,
    pub steps: usize,
    pub sup_gap: f64,
    pub last: TrajectoryRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub onset: Option<OnsetSummary>,
}

/// Everything a demo produced, before it is written.
#[derive(Debug, Clone, Default)]
pub struct DemoOutput {
    pub summaries: Vec<RunSummary>,
    pub artifacts: Artifacts,
}

pub fn init_model(cfg: &ExperimentConfig) -> Result<MlpModel, LabError> {
    Ok(MlpModel::two_hidden(
        cfg.model.hidden,
        cfg.model.activation,
        cfg.seed,
    )?)
}

fn diverged(run: &str) -> impl FnOnce(TrainError) -> LabError + '_ {
    move |e| match e {
        TrainError::NonFinite { step, .. } => LabError::NonFinite {
            run: run.to_string(),
            step,
        },
        TrainError::Config(e) => LabError::Core(e),
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
    label: &str,
) -> Result<TrainOutcome, LabError> {
    train(init_model(cfg)?, &cfg.distribution, &cfg.attack, train_cfg).map_err(diverged(label))
}

fn summary(
    demo: Demo,
    cfg: &ExperimentConfig,
    t: &TrainConfig,
    model: &MlpModel,
    records: &[TrajectoryRecord],
) -> RunSummary {
    RunSummary {
        demo: demo.name(),
        objective: t.objective.name(),
        spec: t.spec.to_string(),
        steps: t.steps,
        sup_gap: sup_gap(model, &cfg.distribution, cfg.demo.curve_points),
        last: records.last().copied().unwrap_or_default(),
        onset: None,
    }
}

fn curve_points(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.distribution.quadrature(cfg.demo.curve_points).points
}

fn curves_csv(cfg: &ExperimentConfig, names: &[&str], models: &[&MlpModel]) -> String {
    let mut csv = Csv::new(&format!("x,eta,{}", names.join(",")));
    for x in curve_points(cfg) {
        let mut row = vec![x, cfg.distribution.eta(x)];
        row.extend(models.iter().map(|m| m.prob_one(x)));
        csv.row(None, &row);
    }
    csv.into_string()
}

fn curves_chart(
    cfg: &ExperimentConfig,
    title: &str,
    names: &[&str],
    models: &[&MlpModel],
) -> Chart {
    let xs = curve_points(cfg);
    let mut series = vec![Series::new(
        "eta (data)",
        xs.iter().map(|&x| (x, cfg.distribution.eta(x))).collect(),
    )
    .dashed()];
    for (n, m) in names.iter().zip(models) {
        series.push(Series::new(
            *n,
            xs.iter().map(|&x| (x, m.prob_one(x))).collect(),
        ));
    }
    Chart {
        title: title.into(),
        x_label: "x".into(),
        y_label: "p(y=1|x)".into(),
        series,
        markers: Vec::new(),
        comment: config_comment(cfg),
    }
}

fn fig1(cfg: &ExperimentConfig) -> Result<DemoOutput, LabError> {
    let mut out = DemoOutput::default();
    let mut models = Vec::new();
    let names = ["madry", "score"];
    for (objective, name) in [(Objective::Madry, names[0]), (Objective::Score, names[1])] {
        let t = TrainConfig {
            objective,
            ..cfg.train.clone()
        };
        let run = run_one(cfg, &t, name)?;
        out.artifacts.add(
            format!("fig1_{name}_trajectory.csv"),
            Format::Csv,
            trajectory_csv(&run.records),
        );
        out.summaries
            .push(summary(Demo::Fig1, cfg, &t, &run.model, &run.records));
        models.push(run.model);
    }
    let refs: Vec<&MlpModel> = models.iter().collect();
    out.artifacts.add(
        "fig1_curves.csv",
        Format::Csv,
        curves_csv(cfg, &names, &refs),
    );
    let title = format!(
        "Converged conditionals, {} steps, {}",
        cfg.train.steps, cfg.train.spec
    );
    out.artifacts.add(
        "fig1.svg",
        Format::Svg,
        curves_chart(cfg, &title, &names, &refs).render(),
    );
    Ok(out)
}

fn fig2(cfg: &ExperimentConfig) -> Result<DemoOutput, LabError> {
    let names = ["standard", "madry", "score"];
    let cfgs: Vec<TrainConfig> = [Objective::Standard, Objective::Madry, Objective::Score]
        .into_iter()
        .map(|objective| TrainConfig {
            objective,
            ..cfg.train.clone()
        })
        .collect();
    let n = cfg.demo.sample_size;
    let sample_seed = derive_seed(cfg.seed, 2);
    let init = init_model(cfg)?;
    let fs = finite_sample_run(&cfg.distribution, n, sample_seed, &init, &cfg.attack, &cfgs)
        .map_err(diverged("fig2"))?;

    let mut out = DemoOutput::default();
    for (run, name) in fs.runs.iter().zip(names) {
        out.artifacts.add(
            format!("fig2_{name}_trajectory.csv"),
            Format::Csv,
            trajectory_csv(&run.records),
        );
        out.summaries.push(summary(
            Demo::Fig2,
            cfg,
            &run.config,
            &run.model,
            &run.records,
        ));
    }
    let refs: Vec<&MlpModel> = fs.runs.iter().map(|r| &r.model).collect();
    out.artifacts.add(
        "fig2_curves.csv",
        Format::Csv,
        curves_csv(cfg, &names, &refs),
    );
    let mut samples = Csv::new("x,y,eta");
    for &(x, y) in &fs.samples {
        samples.row(None, &[x, f64::from(y), cfg.distribution.eta(x)]);
    }
    out.artifacts
        .add("fig2_samples.csv", Format::Csv, samples.into_string());
    let title = format!(
        "{n} training pairs, {} steps, {}",
        cfg.train.steps, cfg.train.spec
    );
    let mut chart = curves_chart(cfg, &title, &names, &refs);
    chart.markers = fs
        .samples
        .iter()
        .map(|&(x, y)| Marker {
            x,
            label: format!("y={y}"),
        })
        .collect();
    out.artifacts.add("fig2.svg", Format::Svg, chart.render());
    Ok(out)
}

fn trajectory_chart(
    cfg: &ExperimentConfig,
    title: &str,
    records: &[TrajectoryRecord],
    onset: &OnsetSummary,
) -> Chart {
    let t = &cfg.train;
    let pts =
        |f: fn(&TrajectoryRecord) -> f64| records.iter().map(|r| (r.step as f64, f(r))).collect();
    let monitor = t.monitor_spec();
    let mut markers = Vec::new();
    if let (Some(step), Some(ratio)) = (onset.step, onset.ratio) {
        markers.push(Marker {
            x: step as f64,
            label: format!("onset {step} (R/C = {ratio:.3})"),
        });
    }
    Chart {
        title: title.into(),
        x_label: "step".into(),
        y_label: "risk".into(),
        series: vec![
            Series::new(format!("R_madry [{}]", t.spec), pts(|r| r.r_madry)),
            Series::new(format!("R_score [{monitor}]"), pts(|r| r.r_score)),
            Series::new(format!("C [{}]", t.spec), pts(|r| r.c_const)).dashed(),
        ],
        markers,
        comment: config_comment(cfg),
    }
}

fn overfit(demo: Demo, cfg: &ExperimentConfig) -> Result<DemoOutput, LabError> {
    let name = demo.name();
    let run = run_one(cfg, &cfg.train, name)?;
    let window = cfg.demo.onset_window.max(2);
    let onset = detect_overfit_onset(&run.records, window);
    let c = run.records.first().map_or(0.0, |r| r.c_const);
    let onset = OnsetSummary::new(onset, c);
    let mut s = summary(demo, cfg, &cfg.train, &run.model, &run.records);
    s.onset = Some(onset);

    let mut out = DemoOutput::default();
    out.artifacts.add(
        format!("{name}_trajectory.csv"),
        Format::Csv,
        trajectory_csv(&run.records),
    );
    let title = format!(
        "Overfitting onset, {} {}",
        cfg.train.objective.name(),
        cfg.train.spec
    );
    out.artifacts.add(
        format!("{name}.svg"),
        Format::Svg,
        trajectory_chart(cfg, &title, &run.records, &onset).render(),
    );
    out.summaries.push(s);
    Ok(out)
}

/// Per-record terms of the first-order expansion of the self-consistent risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignmentRow {
    pub step: usize,
    pub score_l1: f64,
    pub std_l1: f64,
    /// `score_l1 - std_l1`.
    pub excess: f64,
    /// `2 eps E|eta' - eta_hat'|`.
    pub alignment: f64,
    pub c_l1: f64,
}

impl AlignmentRow {
    pub const CSV_HEADER: &'static str = "step,score_l1,std_l1,excess,alignment,c_l1";
}

fn alignment_rows(cfg: &ExperimentConfig) -> Result<(TrainOutcome, Vec<AlignmentRow>), LabError> {
    let dist = &cfg.distribution;
    let set = dist.quadrature(cfg.train.eval_points);
    let grid = BallGrid::new(dist, set.clone(), cfg.ball);
    let c_l1 = grid.smoothness(MetricSpec::L1)?;
    let eps = cfg.ball.epsilon;
    let mut rows = Vec::new();
    let mut failure = None;
    let outcome = train_observed(
        init_model(cfg)?,
        dist,
        &cfg.attack,
        &cfg.train,
        |rec, model| {
            if failure.is_some() {
                return;
            }
            let t = grid.model_table(model);
            let risks = grid
                .score(MetricSpec::L1, &t)
                .and_then(|s| Ok((s.value, grid.standard(MetricSpec::L1, &t)?.value)));
            match risks {
                Ok((score_l1, std_l1)) => {
                    let mean_abs: f64 = set
                        .iter()
                        .map(|(x, w)| w * (dist.eta_dx(x) - model.prob_one_dx(x)).abs())
                        .sum();
                    rows.push(AlignmentRow {
                        step: rec.step,
                        score_l1,
                        std_l1,
                        excess: score_l1 - std_l1,
                        alignment: 2.0 * eps * mean_abs,
                        c_l1,
                    });
                }
                Err(e) => failure = Some(e),
            }
        },
    )
    .map_err(diverged(Demo::GradientAlignment.name()))?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok((outcome, rows))
}

fn gradient_alignment(cfg: &ExperimentConfig) -> Result<DemoOutput, LabError> {
    let demo = Demo::GradientAlignment;
    let (run, rows) = alignment_rows(cfg)?;
    let mut out = DemoOutput::default();
    out.artifacts.add(
        "gradient_alignment_trajectory.csv",
        Format::Csv,
        trajectory_csv(&run.records),
    );
    let mut csv = Csv::new(AlignmentRow::CSV_HEADER);
    for r in &rows {
        csv.row(
            Some(&r.step.to_string()),
            &[r.score_l1, r.std_l1, r.excess, r.alignment, r.c_l1],
        );
    }
    out.artifacts.add(
        "gradient_alignment_terms.csv",
        Format::Csv,
        csv.into_string(),
    );
    let pts = |f: fn(&AlignmentRow) -> f64| rows.iter().map(|r| (r.step as f64, f(r))).collect();
    let chart = Chart {
        title: format!(
            "Gradient alignment, {} {}",
            cfg.train.objective.name(),
            cfg.train.spec
        ),
        x_label: "step".into(),
        y_label: "l1 risk".into(),
        series: vec![
            Series::new("R_score - R_std", pts(|r| r.excess)),
            Series::new("2 eps E|eta' - eta_hat'|", pts(|r| r.alignment)),
            Series::new("C [L1]", pts(|r| r.c_l1)).dashed(),
        ],
        markers: Vec::new(),
        comment: config_comment(cfg),
    };
    out.artifacts
        .add("gradient_alignment.svg", Format::Svg, chart.render());
    out.summaries
        .push(summary(demo, cfg, &cfg.train, &run.model, &run.records));
    Ok(out)
}

/// Run `demo` and collect its artifacts, including `{demo}_summary.jsonl`.
pub fn run_demo(demo: Demo, cfg: &ExperimentConfig) -> Result<DemoOutput, LabError> {
    let mut out = match demo {
        Demo::Fig1 => fig1(cfg)?,
        Demo::Fig2 => fig2(cfg)?,
        Demo::OverfitL2 | Demo::OverfitKl => overfit(demo, cfg)?,
        Demo::GradientAlignment => gradient_alignment(cfg)?,
    };
    out.artifacts.add(
        format!("{}_summary.jsonl", demo.name()),
        Format::Jsonl,
        jsonl(&out.summaries),
    );
    Ok(out)
}

/// One line per run for standard output.
pub fn describe(s: &RunSummary) -> String {
    let mut line = format!(
        "{} {}/{}: sup_gap={:.4} r_madry={:.4} r_score={:.4} c={:.4}",
        s.demo, s.objective, s.spec, s.sup_gap, s.last.r_madry, s.last.r_score, s.last.c_const
    );
    if let Some(o) = &s.onset {
        match (o.step, o.r_madry, o.ratio) {
            (Some(step), Some(r), Some(ratio)) => {
                line += &format!(" onset={step} r_madry_at_onset={r:.4} ratio={ratio:.3}")
            }
            _ => line += " onset=none",
        }
    }
    line
}

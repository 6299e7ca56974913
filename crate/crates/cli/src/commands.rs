//! The `run`, `bounds` and `mac` commands. Each returns the files it would
//! write; nothing touches the disk until the whole command has succeeded.

use capbench_core::estimators::EstimatorConfig;
use capbench_core::mac::{aggregate_mac, run_mac_trial, MacRunResult};
use capbench_core::ndt::SourceSpec;
use capbench_core::trainer::{aggregate, discrete_search_with, final_rule_description, run_trial, CapacityRunResult, TrainConfig};

use crate::config::ExperimentConfig;
use crate::experiment::{bounds_for, mac_regions, points, Point};
pub use crate::output::Outputs;
use crate::output::{
    bounds_csv, hist_csv, json_bytes, region_csv, results_csv, BoundSummary, MacSummary, MacTrialSummary, PointSummary,
    RegionSummary, ResultRow, RunSummary, TrialError,
};
use crate::parallel::map_indexed;
use crate::CliError;

fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.estimator.validate().map_err(|e| CliError::Config(e.to_string()))?;
    cfg.train.validate().map_err(|e| CliError::Config(e.to_string()))
}

fn run_err(e: capbench_core::Error) -> CliError {
    CliError::Run(e.to_string())
}

/// Trials of one source, fanned out over `threads` workers.
pub fn run_source(
    point: &Point,
    estimator: &EstimatorConfig,
    train: &TrainConfig,
    source: &SourceSpec,
    threads: usize,
) -> capbench_core::Result<CapacityRunResult> {
    let trials = map_indexed(train.trials, threads, |i| run_trial(&point.channel, estimator, train, source, i));
    aggregate(trials, train, source)
}

/// Outcome at one operating point.
pub struct PointRun {
    pub result: CapacityRunResult,
    pub chosen_m: Option<usize>,
    pub m_history: Vec<(usize, f64)>,
}

/// Algorithm 1 with the configured source, or the discrete-support search.
pub fn run_point(point: &Point, cfg: &ExperimentConfig, threads: usize) -> Result<PointRun, CliError> {
    if cfg.discrete_search {
        let s = discrete_search_with(&cfg.train, |source| run_source(point, &cfg.estimator, &cfg.train, source, threads))
            .map_err(run_err)?;
        Ok(PointRun {
            result: s.result,
            chosen_m: Some(s.chosen_m),
            m_history: s.history,
        })
    } else {
        let source = SourceSpec {
            kind: cfg.train.source,
            dim: 1,
        };
        let result = run_source(point, &cfg.estimator, &cfg.train, &source, threads).map_err(run_err)?;
        Ok(PointRun {
            chosen_m: result.source.atoms(),
            result,
            m_history: Vec::new(),
        })
    }
}

fn single_user_points(cfg: &ExperimentConfig, command: &str) -> Result<Vec<Point>, CliError> {
    if cfg.channel.kind.is_mac() {
        return Err(CliError::Config(format!(
            "{} is a multiple-access channel; use the `mac` command instead of `{command}`",
            cfg.channel.kind.name()
        )));
    }
    points(&cfg.channel)
}

/// Trains at every operating point; produces `results.csv`, `summary.json`
/// and one histogram per point.
pub fn cmd_run(cfg: &ExperimentConfig, threads: usize) -> Result<Outputs, CliError> {
    validate(cfg)?;
    let pts = single_user_points(cfg, "run")?;
    let channel = cfg.channel.kind.name().to_string();
    let estimator = cfg.estimator.kind.name().to_string();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut out = Outputs::default();
    let mut hists = Vec::new();
    for (k, point) in pts.iter().enumerate() {
        let run = run_point(point, cfg, threads)?;
        let r = &run.result;
        let snr = point.snr_label();
        for t in &r.trials {
            rows.push(ResultRow {
                channel: channel.clone(),
                snr_db: snr.clone(),
                estimator: estimator.clone(),
                trial: t.index,
                estimate: t.estimate.as_ref().map(|e| e.value),
                converged_iter: t.converged_iter,
            });
        }
        let hist_name = if pts.len() == 1 {
            "hist.csv".to_string()
        } else {
            format!("hist_{k}.csv")
        };
        hists.push((hist_name.clone(), hist_csv(&r.histogram)));
        out.stdout.push_str(&format!(
            "{channel} {} ({}): mean {} nats over {} trials\n",
            if snr.is_empty() { "-" } else { &snr },
            point.param,
            r.mean,
            r.trials.len() - r.failed
        ));
        summaries.push(PointSummary {
            snr_db: point.snr_db.clone(),
            param: point.param.clone(),
            mean: r.mean,
            std: r.std,
            trials: r.trials.len(),
            failed: r.failed,
            trial_errors: r
                .trials
                .iter()
                .filter_map(|t| {
                    t.error.as_ref().map(|e| TrialError {
                        trial: t.index,
                        seed: t.seed,
                        error: e.clone(),
                    })
                })
                .collect(),
            clamped: r.trials.iter().map(|t| t.clamped).sum(),
            converged_iters: r.trials.iter().map(|t| t.converged_iter).collect(),
            chosen_m: run.chosen_m,
            m_history: run.m_history,
            histogram_file: hist_name,
            histogram_trial: r.histogram_trial,
            bounds: bounds_for(point).iter().map(|b| BoundSummary::new(b, r.mean)).collect(),
        });
    }
    let summary = RunSummary {
        channel,
        estimator,
        final_rule: final_rule_description(&cfg.train),
        discrete_search: cfg.discrete_search,
        points: summaries,
    };
    out.add("results.csv", results_csv(&rows));
    out.add("summary.json", json_bytes(&summary));
    for (name, bytes) in hists {
        out.add(name, bytes);
    }
    Ok(out)
}

/// Bounds at every operating point as `bounds.csv`, also echoed to stdout.
pub fn cmd_bounds(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let pts = points(&cfg.channel)?;
    let rows: Vec<(Point, Vec<_>)> = pts.into_iter().map(|p| {
        let b = bounds_for(&p);
        (p, b)
    }).collect();
    let channel = cfg.channel.kind.name();
    let bytes = bounds_csv(
        rows.iter()
            .flat_map(|(p, bs)| bs.iter().map(move |b| (channel, p.param.as_str(), b))),
    );
    let mut out = Outputs::default();
    out.stdout = String::from_utf8(bytes.clone()).expect("csv is UTF-8");
    out.add("bounds.csv", bytes);
    Ok(out)
}

/// Trains the two-user estimators; produces `region.csv` with the estimated
/// pentagon followed by the analytic regions, `results.csv` with per-trial
/// sum rates, and `summary.json`.
pub fn cmd_mac(cfg: &ExperimentConfig, threads: usize) -> Result<Outputs, CliError> {
    validate(cfg)?;
    if !cfg.channel.kind.is_mac() {
        return Err(CliError::Config(format!(
            "`mac` needs awgn_mac or oi_mac, not {}",
            cfg.channel.kind.name()
        )));
    }
    let point = points(&cfg.channel)?.remove(0);
    let analytic = mac_regions(&point)?;
    let run = run_mac(&point, cfg, threads)?;
    let channel = cfg.channel.kind.name().to_string();
    let estimator = cfg.estimator.kind.name().to_string();
    let est = &run.mean;

    let region_rows = est
        .pentagon
        .vertices
        .iter()
        .map(|&(a, b)| ("estimated", a, b))
        .chain(analytic.iter().flat_map(|(name, r)| r.vertices.iter().map(move |&(a, b)| (*name, a, b))));
    let region = region_csv(region_rows);

    let rows: Vec<ResultRow> = run
        .trials
        .iter()
        .map(|t| ResultRow {
            channel: channel.clone(),
            snr_db: point.snr_label(),
            estimator: estimator.clone(),
            trial: t.index,
            estimate: t.estimate.as_ref().map(|e| e.i_sum),
            converged_iter: t.converged_iter,
        })
        .collect();

    let region_summary = |name: &str, r: &capbench_core::bounds::RateRegion| RegionSummary {
        region: name.to_string(),
        r1_max: r.r1_max(),
        r2_max: r.r2_max(),
        sum_rate: r.sum_rate(),
        vertices: r.vertices.clone(),
    };
    let summary = MacSummary {
        channel: channel.clone(),
        estimator,
        final_rule: final_rule_description(&cfg.train),
        snr_db: point.snr_db.clone(),
        param: point.param.clone(),
        trials: run.trials.len(),
        failed: run.failed,
        trial_errors: run
            .trials
            .iter()
            .filter_map(|t| {
                t.error.as_ref().map(|e| TrialError {
                    trial: t.index,
                    seed: t.seed,
                    error: e.clone(),
                })
            })
            .collect(),
        i_sum: est.i_sum,
        i1: est.i1,
        i2: est.i2,
        i_y1: est.i_y1,
        i_y2: est.i_y2,
        std_sum: run.std_sum,
        per_trial: run
            .trials
            .iter()
            .filter_map(|t| {
                t.estimate.as_ref().map(|e| MacTrialSummary {
                    trial: t.index,
                    i_sum: e.i_sum,
                    i1: e.i1,
                    i2: e.i2,
                    i_y1: e.i_y1,
                    i_y2: e.i_y2,
                })
            })
            .collect(),
        estimated: region_summary("estimated", &est.pentagon),
        analytic: analytic.iter().map(|(n, r)| region_summary(n, r)).collect(),
    };

    let mut out = Outputs::default();
    out.stdout = String::from_utf8(region.clone()).expect("csv is UTF-8");
    out.add("region.csv", region);
    out.add("results.csv", results_csv(&rows));
    out.add("summary.json", json_bytes(&summary));
    Ok(out)
}

/// MAC trials fanned out over `threads` workers.
pub fn run_mac(point: &Point, cfg: &ExperimentConfig, threads: usize) -> Result<MacRunResult, CliError> {
    let trials = map_indexed(cfg.train.trials, threads, |i| {
        run_mac_trial(&point.channel, &cfg.estimator, &cfg.train, i)
    });
    aggregate_mac(trials).map_err(run_err)
}

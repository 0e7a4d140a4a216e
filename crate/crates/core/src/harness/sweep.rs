use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Strategy};
use super::metrics::{median, speedup_eta, Milestone};
use super::output::{run_dir, write_run};
use super::run::{run_experiment, RunResult};
use crate::error::Result;

/// Median step with NotReached ranked above every reached step. An even
/// count averages the middle pair (rounded down) when both were reached.
pub fn median_milestone(values: &[Milestone]) -> Milestone {
    let mut v: Vec<Milestone> = values.to_vec();
    v.sort_by_key(|m| m.rank());
    let n = v.len();
    if n == 0 {
        return Milestone::NotReached;
    }
    if n % 2 == 1 {
        return v[n / 2];
    }
    match (v[n / 2 - 1], v[n / 2]) {
        (Milestone::Reached(a), Milestone::Reached(b)) => Milestone::Reached((a + b) / 2),
        _ => Milestone::NotReached,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    pub reached_tau: usize,
    pub median_steps_to_tau: Milestone,
    pub median_auc: f64,
    pub median_final_return: f64,
    pub median_wall_clock: f64,
    pub median_time_to_tau: Option<f64>,
    /// Time-to-threshold speedup over UER, when both reached it.
    pub speedup_eta: Option<f64>,
}

pub fn summarize(results: &[RunResult]) -> Vec<StrategySummary> {
    let mut out: Vec<StrategySummary> = Vec::new();
    for s in Strategy::ALL {
        let runs: Vec<&RunResult> = results.iter().filter(|r| r.strategy == s).collect();
        if runs.is_empty() {
            continue;
        }
        let times: Vec<f64> = runs.iter().filter_map(|r| r.time_to_tau).collect();
        out.push(StrategySummary {
            strategy: s,
            runs: runs.len(),
            reached_tau: runs.iter().filter(|r| r.steps_to_tau != Milestone::NotReached).count(),
            median_steps_to_tau: median_milestone(&runs.iter().map(|r| r.steps_to_tau).collect::<Vec<_>>()),
            median_auc: median(&runs.iter().map(|r| r.auc).collect::<Vec<_>>()),
            median_final_return: median(&runs.iter().map(|r| r.final_return_mean).collect::<Vec<_>>()),
            median_wall_clock: median(&runs.iter().map(|r| r.wall_clock_total).collect::<Vec<_>>()),
            median_time_to_tau: (times.len() * 2 > runs.len()).then(|| median(&times)),
            speedup_eta: None,
        });
    }
    let base = out.iter().find(|s| s.strategy == Strategy::Uer).and_then(|s| s.median_time_to_tau);
    for s in &mut out {
        s.speedup_eta = match (base, s.median_time_to_tau) {
            (Some(b), Some(m)) => speedup_eta(b, m).ok(),
            _ => None,
        };
    }
    out
}

pub fn comparison_table(summaries: &[StrategySummary]) -> String {
    let mut t = String::from(
        "| strategy | runs | reached tau | median steps-to-tau | median AUC | median final return | median wall-clock s | eta |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for s in summaries {
        let eta = s.speedup_eta.map_or_else(|| "-".to_string(), |e| format!("{e:.2}"));
        let _ = writeln!(
            t,
            "| {} | {} | {} | {} | {:.2} | {:.4} | {:.2} | {} |",
            s.strategy, s.runs, s.reached_tau, s.median_steps_to_tau, s.median_auc, s.median_final_return, s.median_wall_clock, eta
        );
    }
    t
}

/// Run every (strategy, seed) pair of `cfg`, writing each run under
/// `root`. Up to `jobs` runs execute concurrently; results come back in
/// (strategy, seed) order.
pub fn sweep(cfg: &ExperimentConfig, strategies: &[Strategy], root: &Path, jobs: usize) -> Result<Vec<RunResult>> {
    let mut tasks = Vec::new();
    for &s in strategies {
        let mut c = cfg.clone();
        c.strategy = s;
        c.validate()?;
        for &seed in &cfg.seeds {
            tasks.push((c.clone(), seed));
        }
    }
    let slots: Vec<Mutex<Option<Result<RunResult>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(tasks.len().max(1)) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("sweep counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some((c, seed)) = tasks.get(i) else { break };
                log::info!("sweep: {} seed {seed}", c.strategy);
                let r = run_experiment(c, *seed).and_then(|out| {
                    write_run(&out, &run_dir(root, &out.result))?;
                    Ok(out.result)
                });
                *slots[i].lock().expect("sweep slot") = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("sweep slot").expect("every task ran")).collect()
}

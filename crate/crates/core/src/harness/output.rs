use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::run::{DistributionRecord, MetricsRecord, RunOutput, RunResult};
use crate::error::{Error, Result};
use crate::grounding::{write_rule_log, RuleLogRecord};
use crate::induction::ProposalSet;

pub const METRICS_HEADER: &str = "step,episode,episode_return,moving_avg_return,loss,epsilon,distribution_entropy";
pub const TIMING_HEADER: &str = "step,episode,wall_clock_seconds";
pub const DISTRIBUTION_HEADER: &str = "episode,step,generation,rules,min_w,max_w,mean_w,entropy";

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RULES_FILE: &str = "rules.log";
pub const DISTRIBUTION_FILE: &str = "distribution.csv";
pub const PROPOSALS_FILE: &str = "proposals.jsonl";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(BufWriter::new(f))
}

/// Training curve without wall-clock time, so identical runs give identical bytes.
pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        let entropy = r.distribution_entropy.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.step, r.episode, r.episode_return, r.moving_avg_return, r.loss, r.epsilon, entropy
        )?;
    }
    Ok(())
}

pub fn write_timing_csv<W: Write>(records: &[MetricsRecord], mut w: W) -> Result<()> {
    writeln!(w, "{TIMING_HEADER}")?;
    for r in records {
        writeln!(w, "{},{},{:.6}", r.step, r.episode, r.wall_clock_seconds)?;
    }
    Ok(())
}

fn write_distribution_csv<W: Write>(records: &[DistributionRecord], mut w: W) -> Result<()> {
    writeln!(w, "{DISTRIBUTION_HEADER}")?;
    for r in records {
        let d = &r.diagnostics;
        writeln!(w, "{},{},{},{},{},{},{},{}", r.episode, r.step, d.generation, r.rules, d.min_w, d.max_w, d.mean_w, d.entropy)?;
    }
    Ok(())
}

fn write_proposals<W: Write>(sets: &[ProposalSet], mut w: W) -> Result<()> {
    for s in sets {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Write every artifact of one run into `dir`, creating it if needed.
pub fn write_outputs(
    result: &RunResult,
    records: &[MetricsRecord],
    rule_log: &[RuleLogRecord],
    distributions: &[DistributionRecord],
    proposal_sets: &[ProposalSet],
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = create(dir, METRICS_FILE)?;
    write_metrics_csv(records, &mut w)?;
    w.flush()?;
    let mut w = create(dir, TIMING_FILE)?;
    write_timing_csv(records, &mut w)?;
    w.flush()?;
    let mut w = create(dir, SUMMARY_FILE)?;
    serde_json::to_writer_pretty(&mut w, result)?;
    w.write_all(b"\n")?;
    w.flush()?;
    let mut w = create(dir, RULES_FILE)?;
    write_rule_log(rule_log, &mut w)?;
    w.flush()?;
    if !distributions.is_empty() {
        let mut w = create(dir, DISTRIBUTION_FILE)?;
        write_distribution_csv(distributions, &mut w)?;
        w.flush()?;
    }
    if !proposal_sets.is_empty() {
        let mut w = create(dir, PROPOSALS_FILE)?;
        write_proposals(proposal_sets, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    write_outputs(&out.result, &out.records, &out.rule_log, &out.distributions, &out.proposal_sets, dir)
}

pub fn read_summary(path: &Path) -> Result<RunResult> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// `<root>/<env>_<agent>_<strategy>_seed<seed>`
pub fn run_dir(root: &Path, result: &RunResult) -> PathBuf {
    root.join(format!("{}_{}_{}_seed{}", result.env, result.agent_kind, result.strategy, result.seed))
}

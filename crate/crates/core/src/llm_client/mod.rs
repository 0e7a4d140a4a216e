//! Proposer boundary: prompt construction, response filtering, the
//! deterministic stub, transcript logging/replay and (with the `remote`
//! feature) an OpenAI-compatible chat-completions client.

#[cfg(feature = "remote")]
mod remote;
mod stub;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

#[cfg(feature = "remote")]
pub use remote::RemoteProposer;
pub use stub::{StubKind, StubProposer, StubRule, StubRuleTable};

use crate::envs::{EnvId, TrajId};
use crate::error::{Error, Result};
use crate::grounding::{parse_rule, strip_list_marker, Vocabulary};
use crate::induction::{Proposer, SerializedTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposerKind {
    Stub,
    Remote,
    Transcript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposerConfig {
    pub kind: ProposerKind,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub api_key_env_var: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_in_flight: usize,
    /// Where request/response transcripts are appended (remote) or read
    /// from (transcript kind).
    pub transcript_path: Option<PathBuf>,
    /// Replaces the built-in stub table when set.
    pub stub_table: Option<StubRuleTable>,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        Self {
            kind: ProposerKind::Stub,
            endpoint_url: None,
            model_name: None,
            api_key_env_var: "NSER_API_KEY".into(),
            timeout_secs: 30.0,
            max_retries: 3,
            backoff_base_ms: 500,
            temperature: 0.7,
            max_output_tokens: 512,
            max_in_flight: 4,
            transcript_path: None,
            stub_table: None,
        }
    }
}

impl ProposerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::config("proposer timeout must be positive"));
        }
        if self.max_in_flight == 0 {
            return Err(Error::config("max_in_flight must be at least 1"));
        }
        match self.kind {
            ProposerKind::Remote => {
                if self.endpoint_url.as_deref().is_none_or(str::is_empty) || self.model_name.as_deref().is_none_or(str::is_empty)
                {
                    return Err(Error::config("remote proposer needs endpoint_url and model_name"));
                }
                if cfg!(not(feature = "remote")) {
                    return Err(Error::config("remote proposer requires the `remote` feature"));
                }
            }
            ProposerKind::Transcript => {
                if self.transcript_path.is_none() {
                    return Err(Error::config("transcript proposer needs transcript_path"));
                }
            }
            ProposerKind::Stub => {}
        }
        Ok(())
    }
}

/// Build a proposer for `env` from its configuration.
pub fn build_proposer(cfg: &ProposerConfig, env: EnvId, vocab: &Vocabulary) -> Result<Box<dyn Proposer>> {
    cfg.validate()?;
    match cfg.kind {
        ProposerKind::Stub => {
            let table = cfg.stub_table.clone().unwrap_or_default();
            Ok(Box::new(StubProposer::new(table, env, vocab)?))
        }
        ProposerKind::Transcript => {
            let path = cfg.transcript_path.as_ref().expect("validated");
            Ok(Box::new(TranscriptProposer::from_path(path, vocab.clone())?))
        }
        #[cfg(feature = "remote")]
        ProposerKind::Remote => {
            let log = match &cfg.transcript_path {
                Some(p) => Some(TranscriptLog::create(p)?),
                None => None,
            };
            Ok(Box::new(RemoteProposer::new(cfg.clone(), vocab.clone(), log)?))
        }
        #[cfg(not(feature = "remote"))]
        ProposerKind::Remote => Err(Error::config("remote proposer requires the `remote` feature")),
    }
}

/// Zero-shot prompt: role framing, the serialized trajectory verbatim and
/// the output grammar with the atom vocabulary.
pub fn build_prompt(x: &SerializedTrajectory, vocab: &Vocabulary, m: usize) -> String {
    let mut p = String::new();
    p.push_str(
        "You are given a sequence of state-action-reward transitions from an agent interacting with an environment.\n\
         Based only on the observed trajectory, identify any high-level behavioral patterns, constraints, or preferences \
         that appear to govern successful or unsuccessful behavior.\n\
         Describe each pattern as a general rule, without referring to specific state indices or coordinates.\n\n",
    );
    p.push_str("Trajectory:\n");
    p.push_str(&x.text);
    p.push_str("\nAtoms you may use:\n");
    for a in &vocab.atoms {
        p.push_str("  ");
        p.push_str(a);
        p.push('\n');
    }
    p.push_str(&format!(
        "\nWrite at most {m} rules, one per line, each of the form\n\
         IF <atom> [AND <atom>] THEN <atom>\n\
         with up to four conditions. Any atom may be prefixed with NOT. Output only the rules.\n"
    ));
    p
}

/// Keep at most `m` response lines that parse under the rule grammar.
pub fn filter_response(raw: &str, vocab: &Vocabulary, m: usize) -> Vec<String> {
    raw.lines()
        .map(strip_list_marker)
        .map(|l| l.trim_matches('`').trim())
        .filter(|l| !l.is_empty() && parse_rule(l, 0, vocab).is_ok())
        .take(m)
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub traj_id: TrajId,
    pub prompt: String,
    pub raw_response: String,
    pub accepted: Vec<String>,
}

/// Append-only JSONL transcript, shareable across worker threads.
#[derive(Debug, Clone)]
pub struct TranscriptLog {
    file: Arc<Mutex<File>>,
}

impl TranscriptLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Arc::new(Mutex::new(file)) })
    }

    pub fn append(&self, record: &TranscriptRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let mut f = self.file.lock().expect("transcript lock poisoned");
        f.write_all(&line)?;
        Ok(())
    }
}

pub fn read_transcripts(path: &Path) -> Result<Vec<TranscriptRecord>> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("transcript line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Answers from a recorded transcript, matched by prompt text, re-filtered
/// through the grammar.
#[derive(Debug, Clone)]
pub struct TranscriptProposer {
    responses: BTreeMap<String, String>,
    vocab: Vocabulary,
}

impl TranscriptProposer {
    pub fn new(records: Vec<TranscriptRecord>, vocab: Vocabulary) -> Self {
        Self { responses: records.into_iter().map(|r| (r.prompt, r.raw_response)).collect(), vocab }
    }

    pub fn from_path(path: &Path, vocab: Vocabulary) -> Result<Self> {
        Ok(Self::new(read_transcripts(path)?, vocab))
    }
}

impl Proposer for TranscriptProposer {
    fn id(&self) -> &str {
        "transcript"
    }

    fn propose(&mut self, x: &SerializedTrajectory, m: usize) -> Result<Vec<String>> {
        let prompt = build_prompt(x, &self.vocab, m);
        let raw = self
            .responses
            .get(&prompt)
            .ok_or_else(|| Error::Proposer(format!("no transcript entry for trajectory {}", x.traj_id)))?;
        Ok(filter_response(raw, &self.vocab, m))
    }
}

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde_json::{json, Value};

use super::{build_prompt, filter_response, ProposerConfig, TranscriptLog, TranscriptRecord};
use crate::error::{Error, Result};
use crate::grounding::Vocabulary;
use crate::induction::{Proposer, SerializedTrajectory};

const SYSTEM_MESSAGE: &str = "You summarize agent trajectories as symbolic behavioral rules.";

/// Chat-completions client for OpenAI-compatible endpoints.
pub struct RemoteProposer {
    cfg: ProposerConfig,
    vocab: Vocabulary,
    agent: ureq::Agent,
    api_key: String,
    log: Option<TranscriptLog>,
    retries: AtomicU64,
}

enum Attempt {
    Done(String),
    Retry(String),
}

impl RemoteProposer {
    pub fn new(cfg: ProposerConfig, vocab: Vocabulary, log: Option<TranscriptLog>) -> Result<Self> {
        cfg.validate()?;
        let api_key = std::env::var(&cfg.api_key_env_var)
            .map_err(|_| Error::config(format!("environment variable {} is not set", cfg.api_key_env_var)))?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Ok(Self { agent: ureq::Agent::new_with_config(config), cfg, vocab, api_key, log, retries: AtomicU64::new(0) })
    }

    /// Retries performed so far across all requests.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.cfg.endpoint_url.as_deref().unwrap_or_default().trim_end_matches('/'))
    }

    fn attempt(&self, body: &Value) -> Result<Attempt> {
        let resp = self
            .agent
            .post(&self.url())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(format!("transport: {e}"))),
        };
        let status = resp.status().as_u16();
        match status {
            401 | 403 => Err(Error::config(format!("endpoint rejected credentials (HTTP {status})"))),
            429 | 500..=599 => Ok(Attempt::Retry(format!("HTTP {status}"))),
            400..=499 => Err(Error::Proposer(format!("endpoint refused request (HTTP {status})"))),
            _ => {
                let v: Value = match resp.body_mut().read_json() {
                    Ok(v) => v,
                    Err(e) => return Ok(Attempt::Retry(format!("unreadable body: {e}"))),
                };
                let content = v["choices"][0]["message"]["content"]
                    .as_str()
                    .ok_or_else(|| Error::Proposer("response lacks choices[0].message.content".into()))?;
                Ok(Attempt::Done(content.to_string()))
            }
        }
    }

    fn request(&self, x: &SerializedTrajectory, m: usize) -> Result<Vec<String>> {
        let prompt = build_prompt(x, &self.vocab, m);
        let body = json!({
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": SYSTEM_MESSAGE},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        });
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                self.retries.fetch_add(1, Ordering::Relaxed);
                let wait = self.cfg.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(&body)? {
                Attempt::Done(raw) => {
                    if attempt > 0 {
                        log::info!("trajectory {} answered after {attempt} retries", x.traj_id);
                    }
                    let accepted = filter_response(&raw, &self.vocab, m);
                    if let Some(log) = &self.log {
                        log.append(&TranscriptRecord { traj_id: x.traj_id, prompt, raw_response: raw, accepted: accepted.clone() })?;
                    }
                    return Ok(accepted);
                }
                Attempt::Retry(why) => {
                    log::warn!("proposer attempt {} for trajectory {} failed: {why}", attempt + 1, x.traj_id);
                    last = why;
                }
            }
        }
        Err(Error::Proposer(format!("gave up after {} retries: {last}", self.cfg.max_retries)))
    }
}

impl Proposer for RemoteProposer {
    fn id(&self) -> &str {
        self.cfg.model_name.as_deref().unwrap_or("remote")
    }

    fn propose(&mut self, x: &SerializedTrajectory, m: usize) -> Result<Vec<String>> {
        self.request(x, m)
    }

    fn propose_batch(&mut self, xs: &[SerializedTrajectory], m: usize) -> Vec<Result<Vec<String>>> {
        let this = &*self;
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(self.cfg.max_in_flight) {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|x| s.spawn(move || this.request(x, m))).collect();
                for h in handles {
                    out.push(h.join().unwrap_or_else(|_| Err(Error::Proposer("request thread panicked".into()))));
                }
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread::JoinHandle;

    use super::*;
    use crate::envs::EnvId;
    use crate::llm_client::{tests::lake_x, ProposerKind};

    enum Reply {
        Json(u16, String),
        Stall(Duration),
    }

    fn chat_body(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    /// Serves one scripted reply per connection and returns the request bodies.
    fn serve(replies: Vec<Reply>) -> (String, JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for reply in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                bodies.push(String::from_utf8(body).unwrap());
                let mut stream = stream;
                match reply {
                    Reply::Stall(d) => {
                        std::thread::spawn(move || {
                            std::thread::sleep(d);
                            drop(stream);
                        });
                    }
                    Reply::Json(status, text) => {
                        let _ = write!(
                            stream,
                            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                            text.len()
                        );
                    }
                }
            }
            bodies
        });
        (url, handle)
    }

    fn proposer(url: String, key_var: &str) -> RemoteProposer {
        std::env::set_var(key_var, "sk-test");
        let cfg = ProposerConfig {
            kind: ProposerKind::Remote,
            endpoint_url: Some(url),
            model_name: Some("mock-model".into()),
            api_key_env_var: key_var.into(),
            timeout_secs: 0.3,
            max_retries: 2,
            backoff_base_ms: 10,
            ..Default::default()
        };
        RemoteProposer::new(cfg, Vocabulary::for_env(EnvId::FrozenLake), None).unwrap()
    }

    #[test]
    fn keeps_only_grammatical_lines() {
        let content = "IF at(hole) THEN outcome(failure)\nthe agent likes ice\nIF at(goal) THEN outcome(success)\n\
                       IF at(volcano) THEN outcome(failure)\nIF NOT at(cell_adjacent_hole) THEN outcome(success)";
        let (url, server) = serve(vec![Reply::Json(200, chat_body(content))]);
        let mut p = proposer(url, "NSER_TEST_KEY_FILTER");
        let got = p.propose(&lake_x(), 5).unwrap();
        assert_eq!(got.len(), 3);
        let bodies = server.join().unwrap();
        let sent: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["model"], "mock-model");
        assert_eq!(sent["messages"][1]["content"], build_prompt(&lake_x(), &p.vocab, 5));
    }

    #[test]
    fn timeout_then_success_retries_once() {
        let (url, server) = serve(vec![
            Reply::Stall(Duration::from_millis(800)),
            Reply::Json(200, chat_body("IF at(goal) THEN outcome(success)")),
        ]);
        let mut p = proposer(url, "NSER_TEST_KEY_RETRY");
        let got = p.propose(&lake_x(), 3).unwrap();
        assert_eq!(got, vec!["IF at(goal) THEN outcome(success)".to_string()]);
        assert_eq!(p.retries(), 1);
        server.join().unwrap();
    }

    #[test]
    fn server_error_is_retried() {
        let (url, server) = serve(vec![
            Reply::Json(503, "{}".into()),
            Reply::Json(200, chat_body("IF at(hole) THEN outcome(failure)")),
        ]);
        let mut p = proposer(url, "NSER_TEST_KEY_503");
        assert_eq!(p.propose(&lake_x(), 3).unwrap().len(), 1);
        assert_eq!(p.retries(), 1);
        server.join().unwrap();
    }

    #[test]
    fn unauthorized_is_config_error() {
        let (url, server) = serve(vec![Reply::Json(401, "{\"error\":\"bad key\"}".into())]);
        let mut p = proposer(url, "NSER_TEST_KEY_401");
        assert!(matches!(p.propose(&lake_x(), 3), Err(Error::Config(_))));
        assert_eq!(p.retries(), 0);
        server.join().unwrap();
    }

    #[test]
    fn missing_key_is_config_error() {
        let cfg = ProposerConfig {
            kind: ProposerKind::Remote,
            endpoint_url: Some("http://127.0.0.1:9".into()),
            model_name: Some("m".into()),
            api_key_env_var: "NSER_TEST_KEY_DEFINITELY_UNSET".into(),
            ..Default::default()
        };
        assert!(matches!(
            RemoteProposer::new(cfg, Vocabulary::for_env(EnvId::FrozenLake), None),
            Err(Error::Config(_))
        ));
    }
}

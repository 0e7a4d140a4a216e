use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A step index that may never have been reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Milestone {
    Reached(u64),
    NotReached,
}

impl Milestone {
    pub fn step(self) -> Option<u64> {
        match self {
            Milestone::Reached(s) => Some(s),
            Milestone::NotReached => None,
        }
    }

    /// Sort key that places NotReached after every reached step.
    pub fn rank(self) -> u64 {
        self.step().unwrap_or(u64::MAX)
    }
}

impl fmt::Display for Milestone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Milestone::Reached(s) => write!(f, "{s}"),
            Milestone::NotReached => f.write_str("NotReached"),
        }
    }
}

impl Serialize for Milestone {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Milestone::Reached(n) => s.serialize_u64(*n),
            Milestone::NotReached => s.serialize_str("NotReached"),
        }
    }
}

impl<'de> Deserialize<'de> for Milestone {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Step(u64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Step(n) => Ok(Milestone::Reached(n)),
            Raw::Tag(t) if t == "NotReached" => Ok(Milestone::NotReached),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unexpected milestone '{t}'"))),
        }
    }
}

/// Trailing mean over at most `window` values ending at each index.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Trapezoidal area under `(step, value)` points.
pub fn compute_auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        log::warn!("AUC needs at least two points; got {}", points.len());
        return Ok(0.0);
    }
    let mut area = 0.0;
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if !(x1 > x0) {
            return Err(Error::contract(format!("AUC steps must increase strictly ({x0} then {x1})")));
        }
        area += 0.5 * (y0 + y1) * (x1 - x0);
    }
    Ok(area)
}

/// First step whose full trailing window of episode returns averages at
/// least `tau`. `records` holds `(step, episode_return)` per episode.
pub fn steps_to_tau(records: &[(u64, f64)], tau: f64, window: usize) -> Milestone {
    let window = window.max(1);
    if records.len() < window {
        return Milestone::NotReached;
    }
    for i in window - 1..records.len() {
        let mean = records[i + 1 - window..=i].iter().map(|r| r.1).sum::<f64>() / window as f64;
        if mean >= tau {
            return Milestone::Reached(records[i].0);
        }
    }
    Milestone::NotReached
}

/// Full-window moving averages paired with the step ending each window.
pub fn full_window_averages(records: &[(u64, f64)], window: usize) -> Vec<(u64, f64)> {
    let window = window.max(1);
    if records.len() < window {
        return Vec::new();
    }
    (window - 1..records.len())
        .map(|i| (records[i].0, records[i + 1 - window..=i].iter().map(|r| r.1).sum::<f64>() / window as f64))
        .collect()
}

/// Earliest step after which the full-window moving average stays within
/// `delta` of its final value.
pub fn n_conv(records: &[(u64, f64)], delta: f64, window: usize) -> Milestone {
    let avgs = full_window_averages(records, window);
    let Some(&(_, last)) = avgs.last() else {
        return Milestone::NotReached;
    };
    let mut start = avgs.len() - 1;
    while start > 0 && (avgs[start - 1].1 - last).abs() <= delta {
        start -= 1;
    }
    Milestone::Reached(avgs[start].0)
}

/// Default N_conv band: 5% of the final moving average, at least 0.01.
pub fn default_n_conv_delta(final_value: f64) -> f64 {
    (0.05 * final_value.abs()).max(0.01)
}

pub fn speedup_eta(t_baseline: f64, t_method: f64) -> Result<f64> {
    if !(t_baseline > 0.0) || !(t_method > 0.0) {
        return Err(Error::contract(format!("speedup needs positive times, got {t_baseline} and {t_method}")));
    }
    Ok(t_baseline / t_method)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

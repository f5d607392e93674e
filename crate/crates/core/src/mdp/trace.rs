use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Executed environment action (a discrete index is stored as one value).
    pub action: Vec<f64>,
    pub reward: f64,
    pub decision_charged: bool,
    pub macs: u64,
}

/// Full per-step record of one episode; every metric derives from this.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
    pub terminated: bool,
    pub truncated: bool,
    pub budget_exhausted: bool,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn decisions(&self) -> usize {
        self.steps.iter().filter(|s| s.decision_charged).count()
    }

    pub fn total_macs(&self) -> u64 {
        self.steps.iter().map(|s| s.macs).sum()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn action_width(&self) -> usize {
        self.steps.first().map_or(0, |s| s.action.len())
    }

    /// Writes the trace as CSV.
    ///
    /// Layout: a `#` comment line carrying the end-of-episode flags, then a
    /// header `step,action_0..action_{d-1},reward,decision_charged,macs` and
    /// one row per step. Floats use Rust's shortest round-trip formatting, so
    /// [`EpisodeTrace::read_csv`] reproduces the trace exactly.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# terminated={} truncated={} budget_exhausted={}",
            self.terminated, self.truncated, self.budget_exhausted
        )
        .map_err(|e| Error::io("<trace>", e))?;
        let width = self.action_width();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend((0..width).map(|i| format!("action_{i}")));
        header.extend(["reward", "decision_charged", "macs"].map(String::from));
        w.write_record(&header)?;
        for (t, s) in self.steps.iter().enumerate() {
            if s.action.len() != width {
                return Err(Error::Dimension {
                    expected: width,
                    actual: s.action.len(),
                });
            }
            let mut row = vec![t.to_string()];
            row.extend(s.action.iter().map(|a| a.to_string()));
            row.push(s.reward.to_string());
            row.push(u8::from(s.decision_charged).to_string());
            row.push(s.macs.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut first = String::new();
        input
            .read_line(&mut first)
            .map_err(|e| Error::io("<trace>", e))?;
        let mut trace = EpisodeTrace::default();
        let flags = first
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("trace csv must start with a '#' flags line".into()))?;
        for kv in flags.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad flag `{kv}`")))?;
            let v: bool = v.parse().map_err(|_| Error::Parse(format!("bad flag value `{kv}`")))?;
            match k {
                "terminated" => trace.terminated = v,
                "truncated" => trace.truncated = v,
                "budget_exhausted" => trace.budget_exhausted = v,
                _ => return Err(Error::Parse(format!("unknown flag `{k}`"))),
            }
        }
        let mut r = csv::Reader::from_reader(input);
        let width = r
            .headers()?
            .iter()
            .filter(|h| h.starts_with("action_"))
            .count();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != width + 4 {
                return Err(Error::Parse(format!("trace row has {} fields", rec.len())));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("field {i}: {e}")))
            };
            let action = (1..=width).map(num).collect::<Result<Vec<_>>>()?;
            let reward = num(width + 1)?;
            let decision_charged = match &rec[width + 2] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse(format!("bad decision flag `{other}`"))),
            };
            let macs = rec[width + 3]
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("macs: {e}")))?;
            trace.steps.push(StepRecord {
                action,
                reward,
                decision_charged,
                macs,
            });
        }
        Ok(trace)
    }
}

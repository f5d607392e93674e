//! Episode metrics: return, decisions, MMACs, action repetition, jerk and
//! normalized area under the evaluation curve.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::EpisodeTrace;

/// Reward range used to normalize evaluation curves on Pendulum.
pub const PENDULUM_AUC_BOUNDS: (f64, f64) = (-2000.0, 0.0);
/// Reward range used to normalize evaluation curves on Mountain Car.
pub const MOUNTAIN_CAR_AUC_BOUNDS: (f64, f64) = (-100.0, 100.0);

/// A per-step-pair statistic. `defined` is false when the trace has fewer
/// than two steps, in which case `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStat {
    pub value: f64,
    pub defined: bool,
}

impl PairStat {
    fn undefined() -> Self {
        PairStat {
            value: 0.0,
            defined: false,
        }
    }
}

fn pairwise(trace: &EpisodeTrace, f: impl Fn(f64, f64) -> f64) -> PairStat {
    if trace.len() < 2 {
        return PairStat::undefined();
    }
    let mut total = 0.0;
    for w in trace.steps.windows(2) {
        let (prev, cur) = (&w[0].action, &w[1].action);
        let dims = cur.len().max(1);
        let sum: f64 = prev.iter().zip(cur).map(|(&a, &b)| f(a, b)).sum();
        total += sum / dims as f64;
    }
    PairStat {
        value: total / (trace.len() - 1) as f64,
        defined: true,
    }
}

/// Percentage of steps 2..T whose action equals the previous one exactly,
/// counted per dimension and averaged.
pub fn action_repetition(trace: &EpisodeTrace) -> PairStat {
    let mut s = pairwise(trace, |a, b| if a == b { 1.0 } else { 0.0 });
    s.value *= 100.0;
    s
}

/// Mean absolute per-step change of the action, averaged over dimensions.
pub fn jerk(trace: &EpisodeTrace) -> PairStat {
    pairwise(trace, |a, b| (b - a).abs())
}

/// Millions of multiply-accumulates charged over the episode.
pub fn episode_mmacs(trace: &EpisodeTrace) -> f64 {
    trace.total_macs() as f64 / 1e6
}

/// Mean of the evaluation curve rescaled to [0, 1] by `(r_min, r_max)`.
pub fn normalized_auc(curve: &[f64], r_min: f64, r_max: f64) -> Result<f64> {
    if !(r_min < r_max) {
        return Err(Error::config(format!("auc bounds need r_min < r_max, got {r_min} and {r_max}")));
    }
    if curve.is_empty() {
        return Err(Error::config("auc of an empty curve"));
    }
    let span = r_max - r_min;
    let sum: f64 = curve.iter().map(|r| ((r - r_min) / span).clamp(0.0, 1.0)).sum();
    Ok(sum / curve.len() as f64)
}

/// Metrics for one seed, averaged over its evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub episodes: usize,
    pub avg_return: f64,
    pub avg_decisions: f64,
    pub avg_mmacs: f64,
    pub action_repetition_pct: f64,
    pub avg_jerk: f64,
    pub normalized_auc: f64,
}

impl SeedMetrics {
    /// `episodes` are the final evaluation episodes; `curve` holds the average
    /// evaluation return at every evaluation point of training.
    pub fn from_traces(seed: u64, episodes: &[EpisodeTrace], curve: &[f64], bounds: (f64, f64)) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::config("metrics need at least one episode"));
        }
        let n = episodes.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeTrace) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        Ok(SeedMetrics {
            seed,
            episodes: episodes.len(),
            avg_return: mean(&|t| t.total_return()),
            avg_decisions: mean(&|t| t.decisions() as f64),
            avg_mmacs: mean(&episode_mmacs),
            action_repetition_pct: mean(&|t| action_repetition(t).value),
            avg_jerk: mean(&|t| jerk(t).value),
            normalized_auc: normalized_auc(curve, bounds.0, bounds.1)?,
        })
    }
}

/// Metrics averaged across seeds, with the per-seed breakdown kept.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub avg_return: f64,
    pub avg_decisions: f64,
    pub avg_mmacs: f64,
    pub action_repetition_pct: f64,
    pub avg_jerk: f64,
    pub normalized_auc: f64,
    pub per_seed: Vec<SeedMetrics>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricReport {
    pub fn from_seeds(per_seed: Vec<SeedMetrics>) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(Error::config("metric report needs at least one seed"));
        }
        let avg = |f: fn(&SeedMetrics) -> f64| mean_std(per_seed.iter().map(f)).0;
        Ok(MetricReport {
            avg_return: avg(|s| s.avg_return),
            avg_decisions: avg(|s| s.avg_decisions),
            avg_mmacs: avg(|s| s.avg_mmacs),
            action_repetition_pct: avg(|s| s.action_repetition_pct),
            avg_jerk: avg(|s| s.avg_jerk),
            normalized_auc: avg(|s| s.normalized_auc),
            per_seed,
        })
    }

    /// Mean and population standard deviation across seeds of one column.
    pub fn spread(&self, f: fn(&SeedMetrics) -> f64) -> (f64, f64) {
        mean_std(self.per_seed.iter().map(f))
    }

    /// One CSV row per seed; the averages are recomputed on read.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.per_seed {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io("<metrics csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<SeedMetrics>, _>>()?;
        Self::from_seeds(rows)
    }
}

/// Plain-text table with one row per labelled report, `mean (std)` cells.
pub fn summary_table(rows: &[(String, MetricReport)]) -> String {
    let header = ["algorithm", "return", "decisions", "MMACs", "repetition %", "jerk", "AUC"];
    let columns: [fn(&SeedMetrics) -> f64; 6] = [
        |s| s.avg_return,
        |s| s.avg_decisions,
        |s| s.avg_mmacs,
        |s| s.action_repetition_pct,
        |s| s.avg_jerk,
        |s| s.normalized_auc,
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
    for (label, report) in rows {
        let mut line = vec![label.clone()];
        for f in columns {
            let (m, sd) = report.spread(f);
            line.push(format!("{m:.2} ({sd:.2})"));
        }
        cells.push(line);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in cells.iter().enumerate() {
        let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "| {} |", line.join(" | "));
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "| {} |", rule.join(" | "));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::StepRecord;
    use proptest::prelude::*;

    fn trace(actions: &[Vec<f64>]) -> EpisodeTrace {
        EpisodeTrace {
            steps: actions
                .iter()
                .map(|a| StepRecord {
                    action: a.clone(),
                    reward: -1.0,
                    decision_charged: true,
                    macs: 10,
                })
                .collect(),
            ..EpisodeTrace::default()
        }
    }

    fn scalar(xs: &[f64]) -> EpisodeTrace {
        trace(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>())
    }

    #[test]
    fn repetition_examples() {
        assert_eq!(action_repetition(&scalar(&[1.0, 1.0, 2.0, 2.0, 2.0])).value, 75.0);
        assert_eq!(action_repetition(&scalar(&[0.1, 0.2, 0.3])).value, 0.0);
        let t = trace(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        assert_eq!(action_repetition(&t).value, 50.0);
        let one = action_repetition(&scalar(&[1.0]));
        assert_eq!((one.value, one.defined), (0.0, false));
    }

    #[test]
    fn jerk_examples() {
        assert_eq!(jerk(&scalar(&[0.3; 5])).value, 0.0);
        assert_eq!(jerk(&scalar(&[0.5, -0.5, -0.5])).value, 0.5);
        assert!(!jerk(&scalar(&[])).defined);
    }

    #[test]
    fn mmacs_examples() {
        let mut t = scalar(&[0.0; 200]);
        for s in &mut t.steps {
            s.macs = crate::neural::count_macs(&[3, 256, 256, 1]);
        }
        assert!((episode_mmacs(&t) - 13.312).abs() < 1e-12);
        assert_eq!(episode_mmacs(&EpisodeTrace::default()), 0.0);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(normalized_auc(&[0.0; 4], -2000.0, 0.0).unwrap(), 1.0);
        assert_eq!(normalized_auc(&[-100.0; 4], -100.0, 100.0).unwrap(), 0.0);
        assert_eq!(normalized_auc(&[-5000.0, 50.0], -100.0, 100.0).unwrap(), 0.375);
        assert!(normalized_auc(&[1.0], 1.0, 1.0).is_err());
        assert!(normalized_auc(&[], 0.0, 1.0).is_err());
    }

    #[test]
    fn report_averages_and_table() {
        let a = SeedMetrics::from_traces(0, &[scalar(&[1.0, 1.0]), scalar(&[1.0, 2.0, 2.0])], &[-50.0], MOUNTAIN_CAR_AUC_BOUNDS).unwrap();
        assert_eq!(a.avg_return, -2.5);
        assert_eq!(a.avg_decisions, 2.5);
        assert_eq!(a.action_repetition_pct, 75.0);
        assert_eq!(a.avg_jerk, 0.25);
        assert_eq!(a.normalized_auc, 0.25);
        let mut b = a.clone();
        b.seed = 1;
        b.avg_return = -4.5;
        let r = MetricReport::from_seeds(vec![a, b]).unwrap();
        assert_eq!(r.avg_return, -3.5);
        assert_eq!(r.spread(|s| s.avg_return), (-3.5, 1.0));
        let table = summary_table(&[("tla".into(), r)]);
        assert!(table.contains("-3.50 (1.00)"));
        assert_eq!(table.lines().count(), 3);
        assert!(MetricReport::from_seeds(vec![]).is_err());
        assert!(SeedMetrics::from_traces(0, &[], &[0.0], PENDULUM_AUC_BOUNDS).is_err());
    }

    fn arb_trace() -> impl Strategy<Value = EpisodeTrace> {
        (1usize..3, 0usize..40).prop_flat_map(|(d, n)| {
            prop::collection::vec(
                (
                    prop::collection::vec(prop::sample::select(vec![-1.0, -0.25, 0.0, 0.5, 1.0]), d),
                    -10.0f64..10.0,
                    any::<bool>(),
                    0u64..100_000,
                ),
                n,
            )
            .prop_map(|rows| EpisodeTrace {
                steps: rows
                    .into_iter()
                    .map(|(action, reward, decision_charged, macs)| StepRecord {
                        action,
                        reward,
                        decision_charged,
                        macs,
                    })
                    .collect(),
                ..EpisodeTrace::default()
            })
        })
    }

    proptest! {
        #[test]
        fn recomputed_from_csv_is_identical(t in arb_trace()) {
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            let back = EpisodeTrace::read_csv(&buf[..]).unwrap();
            prop_assert_eq!(action_repetition(&back), action_repetition(&t));
            prop_assert_eq!(jerk(&back), jerk(&t));
            prop_assert_eq!(episode_mmacs(&back), episode_mmacs(&t));
            let r = action_repetition(&t).value;
            prop_assert!((0.0..=100.0).contains(&r));
        }

        #[test]
        fn report_csv_round_trips(t in arb_trace(), curve in prop::collection::vec(-3000.0f64..100.0, 1..10)) {
            prop_assume!(!t.is_empty());
            let a = SeedMetrics::from_traces(3, std::slice::from_ref(&t), &curve, PENDULUM_AUC_BOUNDS).unwrap();
            let b = SeedMetrics::from_traces(4, &[t.clone(), t], &curve, MOUNTAIN_CAR_AUC_BOUNDS).unwrap();
            let r = MetricReport::from_seeds(vec![a, b]).unwrap();
            let mut buf = Vec::new();
            r.write_csv(&mut buf).unwrap();
            prop_assert_eq!(MetricReport::read_csv(&buf[..]).unwrap(), r);
        }

        #[test]
        fn held_actions_have_zero_jerk_at_repeats(xs in prop::collection::vec(-2.0f64..2.0, 2..20), k in 1usize..6) {
            let held: Vec<f64> = xs.iter().flat_map(|&x| std::iter::repeat_n(x, k)).collect();
            let t = scalar(&held);
            for (i, w) in held.windows(2).enumerate() {
                if (i + 1) % k != 0 {
                    prop_assert_eq!((w[1] - w[0]).abs(), 0.0);
                }
            }
            prop_assert!(jerk(&t).value <= jerk(&scalar(&xs)).value + 1e-12);
        }

        #[test]
        fn mmacs_additive(a in arb_trace(), b in arb_trace()) {
            let mut joined = a.clone();
            joined.steps.extend(b.steps.iter().cloned());
            prop_assert_eq!(joined.total_macs(), a.total_macs() + b.total_macs());
            prop_assert!((episode_mmacs(&joined) - episode_mmacs(&a) - episode_mmacs(&b)).abs() < 1e-9);
        }

        #[test]
        fn auc_monotone(base in prop::collection::vec(-300.0f64..300.0, 1..20), bump in prop::collection::vec(0.0f64..50.0, 20)) {
            let higher: Vec<f64> = base.iter().zip(&bump).map(|(r, d)| r + d).collect();
            let lo = normalized_auc(&base, -100.0, 100.0).unwrap();
            let hi = normalized_auc(&higher, -100.0, 100.0).unwrap();
            prop_assert!(hi >= lo);
            prop_assert!((0.0..=1.0).contains(&lo));
        }
    }
}

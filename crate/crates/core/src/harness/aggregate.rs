use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::runner::RunRecord;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;

/// Mean and standard error across seeds at one evaluation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub seeds: usize,
    pub return_mean: f64,
    pub return_stderr: f64,
    pub decisions_mean: f64,
    pub decisions_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub config_hash: String,
    pub curve: Vec<CurvePoint>,
    pub report: MetricReport,
}

/// Mean and standard error of the mean (zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Combines the records of one experiment. Records from different configs
/// or with different evaluation steps are rejected.
pub fn aggregate(records: &[RunRecord]) -> Result<Aggregate> {
    let first = records.first().ok_or_else(|| Error::config("nothing to aggregate"))?;
    if records.iter().any(|r| r.config_hash != first.config_hash) {
        return Err(Error::config("records come from different configs"));
    }
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.seed);
    if sorted.windows(2).any(|w| w[0].seed == w[1].seed) {
        return Err(Error::config("duplicate seed among records"));
    }
    let steps: Vec<u64> = first.curve.iter().map(|p| p.step).collect();
    if sorted.iter().any(|r| r.curve.iter().map(|p| p.step).ne(steps.iter().copied())) {
        return Err(Error::config("records have different evaluation steps"));
    }
    let curve = steps
        .iter()
        .enumerate()
        .map(|(i, &step)| {
            let rets: Vec<f64> = sorted.iter().map(|r| r.curve[i].avg_return).collect();
            let decs: Vec<f64> = sorted.iter().map(|r| r.curve[i].avg_decisions).collect();
            let (return_mean, return_stderr) = mean_stderr(&rets);
            let (decisions_mean, decisions_stderr) = mean_stderr(&decs);
            CurvePoint {
                step,
                seeds: sorted.len(),
                return_mean,
                return_stderr,
                decisions_mean,
                decisions_stderr,
            }
        })
        .collect();
    let report = MetricReport::from_seeds(sorted.iter().map(|r| r.final_metrics.clone()).collect())?;
    Ok(Aggregate {
        config_hash: first.config_hash.clone(),
        curve,
        report,
    })
}

pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("<curve csv>", e))?;
    Ok(())
}

pub fn read_curve_csv<R: Read>(input: R) -> Result<Vec<CurvePoint>> {
    Ok(csv::Reader::from_reader(input).deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::runner::EvalPoint;
    use crate::metrics::SeedMetrics;
    use proptest::prelude::*;

    fn record(hash: &str, seed: u64, returns: &[f64]) -> RunRecord {
        RunRecord {
            config_hash: hash.into(),
            seed,
            curve: returns
                .iter()
                .enumerate()
                .map(|(i, &r)| EvalPoint {
                    step: (i as u64 + 1) * 10,
                    avg_return: r,
                    avg_decisions: -r / 2.0,
                    avg_mmacs: 0.5,
                    jerk: 0.1,
                    repetition_pct: 20.0,
                })
                .collect(),
            final_metrics: SeedMetrics {
                seed,
                episodes: 10,
                avg_return: *returns.last().unwrap(),
                avg_decisions: 5.0,
                avg_mmacs: 0.5,
                action_repetition_pct: 20.0,
                avg_jerk: 0.1,
                normalized_auc: 0.5,
            },
        }
    }

    #[test]
    fn identical_curves_have_no_band() {
        let recs: Vec<RunRecord> = (0..10).map(|s| record("h", s, &[-3.0, -1.0])).collect();
        let a = aggregate(&recs).unwrap();
        assert!(a.curve.iter().all(|p| p.return_stderr == 0.0 && p.seeds == 10));
        assert_eq!(a.curve[1].return_mean, -1.0);
        let one = aggregate(&recs[..1]).unwrap();
        assert_eq!(one.curve[0].return_stderr, 0.0);
    }

    #[test]
    fn stderr_example() {
        let (m, se) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_mixed_inputs() {
        assert!(aggregate(&[]).is_err());
        assert!(aggregate(&[record("a", 0, &[1.0]), record("b", 1, &[1.0])]).is_err());
        assert!(aggregate(&[record("a", 0, &[1.0]), record("a", 1, &[1.0, 2.0])]).is_err());
        assert!(aggregate(&[record("a", 0, &[1.0]), record("a", 0, &[1.0])]).is_err());
    }

    proptest! {
        #[test]
        fn order_independent_and_csv_round_trip(
            curves in prop::collection::vec(prop::collection::vec(-500.0f64..0.0, 3), 1..8),
            rot in 0usize..8,
        ) {
            let recs: Vec<RunRecord> = curves.iter().enumerate().map(|(s, c)| record("h", s as u64, c)).collect();
            let mut shuffled = recs.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let a = aggregate(&recs).unwrap();
            prop_assert_eq!(&a, &aggregate(&shuffled).unwrap());
            let mut buf = Vec::new();
            write_curve_csv(&a.curve, &mut buf).unwrap();
            prop_assert_eq!(read_curve_csv(&buf[..]).unwrap(), a.curve);
        }
    }
}

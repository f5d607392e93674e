use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::run_experiment;
use crate::error::{Error, Result};

pub const MAX_SWEEP_TAU: usize = 11;
pub const SWEEP_P_RANGE: (f64, f64) = (0.1, 6.0);
pub const SWEEP_SEEDS: usize = 5;

/// Outcome of one (tau, p) cell across the sweep seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub tau: usize,
    pub p: f64,
    pub return_mean: f64,
    pub return_std: f64,
    pub decisions_mean: f64,
}

/// Index of the preferred cell: among cells whose mean return lies within
/// one standard deviation of the best mean return, the one with the fewest
/// decisions (higher return breaks remaining ties).
pub fn best_cell(cells: &[CellResult]) -> Result<usize> {
    let best = cells
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.return_mean.total_cmp(&b.1.return_mean))
        .ok_or_else(|| Error::config("empty sweep grid"))?;
    let floor = best.1.return_mean - best.1.return_std;
    let (i, _) = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.return_mean >= floor)
        .min_by(|a, b| {
            a.1.decisions_mean
                .total_cmp(&b.1.decisions_mean)
                .then(b.1.return_mean.total_cmp(&a.1.return_mean))
        })
        .expect("the best cell passes its own floor");
    Ok(i)
}

/// Trains every (tau, p) cell on the first five seeds of `base` and returns
/// the per-cell results plus the index of the preferred cell.
pub fn sweep(base: &ExperimentConfig, taus: &[usize], ps: &[f64]) -> Result<(Vec<CellResult>, usize)> {
    if taus.is_empty() || ps.is_empty() {
        return Err(Error::config("empty sweep grid"));
    }
    if let Some(t) = taus.iter().find(|&&t| !(2..=MAX_SWEEP_TAU).contains(&t)) {
        return Err(Error::config(format!("sweep tau {t} outside 2..={MAX_SWEEP_TAU}")));
    }
    if let Some(p) = ps.iter().find(|&&p| !(SWEEP_P_RANGE.0..=SWEEP_P_RANGE.1).contains(&p)) {
        return Err(Error::config(format!("sweep p {p} outside [{}, {}]", SWEEP_P_RANGE.0, SWEEP_P_RANGE.1)));
    }
    let mut cells = Vec::new();
    for &tau in taus {
        for &p in ps {
            let mut cfg = base.clone();
            cfg.tau = tau;
            cfg.p = p;
            cfg.seeds.truncate(SWEEP_SEEDS);
            let records = run_experiment(&cfg)?;
            let rets: Vec<f64> = records.iter().map(|r| r.final_metrics.avg_return).collect();
            let n = rets.len() as f64;
            let mean = rets.iter().sum::<f64>() / n;
            let std = (rets.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
            cells.push(CellResult {
                tau,
                p,
                return_mean: mean,
                return_std: std,
                decisions_mean: records.iter().map(|r| r.final_metrics.avg_decisions).sum::<f64>() / n,
            });
        }
    }
    let best = best_cell(&cells)?;
    Ok((cells, best))
}

pub fn write_sweep_csv<W: Write>(cells: &[CellResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| Error::io("<sweep csv>", e))?;
    Ok(())
}

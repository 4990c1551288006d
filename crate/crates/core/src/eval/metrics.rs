use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::MajorityModel;
use crate::error::{Error, Result};

pub const DEFAULT_N_MAX: usize = 10;

/// Label indices ordered by descending score; equal scores keep ascending
/// index (and hence app-id) order.
pub fn rank_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Precision and recall of one top-n list, as fractions.
pub fn purity_coverage(predicted: &[usize], actual: &[usize]) -> Result<(f64, f64)> {
    if actual.is_empty() {
        return Err(Error::InvalidTarget("empty actual label set".into()));
    }
    for (i, p) in predicted.iter().enumerate() {
        if predicted[..i].contains(p) {
            return Err(Error::DuplicatePrediction(*p));
        }
    }
    let mut actual = actual.to_vec();
    actual.sort_unstable();
    actual.dedup();
    let hits = predicted
        .iter()
        .filter(|p| actual.binary_search(p).is_ok())
        .count() as f64;
    let purity = if predicted.is_empty() {
        0.0
    } else {
        hits / predicted.len() as f64
    };
    Ok((purity, hits / actual.len() as f64))
}

/// Mean purity and coverage at n = 1..=n_max, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub purity: Vec<f64>,
    pub coverage: Vec<f64>,
    pub n_max: usize,
    pub n_samples: usize,
}

impl MetricsReport {
    pub fn purity_at(&self, n: usize) -> f64 {
        self.purity[n - 1]
    }

    pub fn coverage_at(&self, n: usize) -> f64 {
        self.coverage[n - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric");
        for n in 1..=self.n_max {
            write!(s, ",top{n}").unwrap();
        }
        s.push('\n');
        for (name, row) in [("purity", &self.purity), ("coverage", &self.coverage)] {
            s.push_str(name);
            for v in row {
                write!(s, ",{v:.2}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// One row per n with purity and coverage columns.
    pub fn to_table(&self, title: &str) -> String {
        let mut s = format!("{title}\n{:<8}{:>10}{:>10}\n", "", "Purity", "Coverage");
        for n in 1..=self.n_max {
            writeln!(
                s,
                "{:<8}{:>10.2}{:>10.2}",
                format!("top-{n}"),
                self.purity_at(n),
                self.coverage_at(n)
            )
            .unwrap();
        }
        s
    }
}

/// Scores precomputed rankings. Each is truncated to `n_max` after being
/// padded from `majority` when shorter.
pub fn evaluate_rankings(
    rankings: &[Vec<usize>],
    actuals: &[&[usize]],
    majority: Option<&MajorityModel>,
    n_max: usize,
) -> Result<MetricsReport> {
    if rankings.len() != actuals.len() {
        return Err(Error::shape(actuals.len(), rankings.len()));
    }
    if n_max == 0 {
        return Err(Error::InvalidConfig("n_max must be at least 1".into()));
    }
    let mut purity = vec![0.0; n_max];
    let mut coverage = vec![0.0; n_max];
    for (ranking, actual) in rankings.iter().zip(actuals) {
        let mut ranked: Vec<usize> = ranking.iter().take(n_max).copied().collect();
        if let Some(m) = majority {
            m.pad(&mut ranked, n_max);
        }
        if ranked.len() < n_max {
            return Err(Error::TooFewPredictions {
                got: ranked.len(),
                need: n_max,
            });
        }
        for n in 1..=n_max {
            let (p, c) = purity_coverage(&ranked[..n], actual)?;
            purity[n - 1] += p;
            coverage[n - 1] += c;
        }
    }
    let count = rankings.len().max(1) as f64;
    let pct = |v: Vec<f64>| v.into_iter().map(|x| 100.0 * x / count).collect();
    Ok(MetricsReport {
        purity: pct(purity),
        coverage: pct(coverage),
        n_max,
        n_samples: rankings.len(),
    })
}

/// Evaluates `predict(i)` for every sample index `i` in `0..actuals.len()`.
pub fn evaluate_model<F>(
    predict: F,
    actuals: &[&[usize]],
    majority: Option<&MajorityModel>,
    n_max: usize,
) -> Result<MetricsReport>
where
    F: Fn(usize) -> Result<Vec<usize>>,
{
    let rankings = (0..actuals.len())
        .map(predict)
        .collect::<Result<Vec<_>>>()?;
    evaluate_rankings(&rankings, actuals, majority, n_max)
}

use std::collections::BTreeMap;

use super::Corpus;

/// Label-set size histogram and per-app HLI count histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsReport {
    /// label-set size -> number of samples
    pub apps_per_hli: BTreeMap<usize, usize>,
    /// number of samples mentioning an app -> number of apps
    pub hlis_per_app: BTreeMap<usize, usize>,
    pub total_samples: usize,
    pub total_apps: usize,
}

impl StatsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("histogram,key,count\n");
        for (k, v) in &self.apps_per_hli {
            out.push_str(&format!("apps_per_hli,{k},{v}\n"));
        }
        for (k, v) in &self.hlis_per_app {
            out.push_str(&format!("hlis_per_app,{k},{v}\n"));
        }
        out.push_str(&format!("total,samples,{}\n", self.total_samples));
        out.push_str(&format!("total,apps,{}\n", self.total_apps));
        out
    }
}

pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let mut apps_per_hli = BTreeMap::new();
    let mut per_app = vec![0usize; corpus.vocab().len()];
    for s in corpus.samples() {
        *apps_per_hli.entry(s.labels.len()).or_insert(0) += 1;
        for &l in &s.labels {
            per_app[l] += 1;
        }
    }
    let mut hlis_per_app = BTreeMap::new();
    for count in per_app {
        *hlis_per_app.entry(count).or_insert(0) += 1;
    }
    StatsReport {
        apps_per_hli,
        hlis_per_app,
        total_samples: corpus.len(),
        total_apps: corpus.vocab().len(),
    }
}

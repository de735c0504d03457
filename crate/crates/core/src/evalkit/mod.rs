//! Evaluation: feature extraction, PCA, pair and set scoring, k-fold
//! verification accuracy, ROC / TAR@FAR, and CMC identification rates.

mod features;
mod identify;
mod pca;
mod sets;
mod verify;

use std::fmt::Write as _;

pub use features::{extract_features, pair_scores, FeatureTable, FEATURE_MAGIC};
pub use identify::{cmc, probe_ranks, rates_from_ranks};
pub use pca::{pca, PcaModel};
pub use sets::{
    template_pair_scores, template_pool_softmax, video_pair_score, video_pair_scores, DEFAULT_BETA,
    DEFAULT_FRAME_PAIRS,
};
pub use verify::{best_threshold, candidate_thresholds, kfold_accuracy, roc, tar_at_far, KFoldResult, RocPoint};

use crate::error::Result;

/// Everything one evaluation run measured. Sections that do not apply to
/// the protocol stay empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub protocol: String,
    pub pair_count: usize,
    pub fold_accuracies: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub mean_accuracy: Option<f64>,
    pub roc: Vec<RocPoint>,
    /// `(far level, tar)`
    pub tar_at_far: Vec<(f64, f64)>,
    pub probe_count: usize,
    /// Identification rate at rank 1, 2, ...
    pub cmc: Vec<f64>,
}

impl EvalReport {
    /// Pair verification: k-fold accuracy plus the ROC sweep.
    pub fn verification(
        protocol: &str,
        scores: &[f64],
        labels: &[bool],
        folds: usize,
        far_levels: &[f64],
    ) -> Result<Self> {
        let kf = kfold_accuracy(scores, labels, folds)?;
        let points = roc(scores, labels)?;
        Ok(EvalReport {
            protocol: protocol.to_string(),
            pair_count: scores.len(),
            tar_at_far: far_levels.iter().map(|&f| (f, tar_at_far(&points, f))).collect(),
            fold_accuracies: kf.fold_accuracies,
            thresholds: kf.thresholds,
            mean_accuracy: Some(kf.mean_accuracy),
            roc: points,
            ..EvalReport::default()
        })
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let _ = writeln!(out, "protocol: {}", self.protocol);
        if self.pair_count > 0 {
            let _ = writeln!(out, "pairs: {}", self.pair_count);
        }
        if let Some(acc) = self.mean_accuracy {
            let _ = writeln!(out, "mean_accuracy: {acc}");
            let _ = writeln!(out, "fold_accuracies: {}", list(&self.fold_accuracies));
            let _ = writeln!(out, "thresholds: {}", list(&self.thresholds));
        }
        if !self.roc.is_empty() {
            let _ = writeln!(out, "roc_points: {}", self.roc.len());
        }
        for (far, tar) in &self.tar_at_far {
            let _ = writeln!(out, "tar_at_far_{far}: {tar}");
        }
        if !self.cmc.is_empty() {
            let _ = writeln!(out, "probes: {}", self.probe_count);
            for (r, rate) in self.cmc.iter().enumerate() {
                let _ = writeln!(out, "rank_{}: {rate}", r + 1);
            }
        }
        out
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("threshold,far,tar\n");
        for p in &self.roc {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.far, p.tar);
        }
        out
    }

    pub fn cmc_csv(&self) -> String {
        let mut out = String::from("rank,rate\n");
        for (r, rate) in self.cmc.iter().enumerate() {
            let _ = writeln!(out, "{},{rate}", r + 1);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verification_report_text() {
        let scores: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 0.8 } else { -0.1 }).collect();
        let labels: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let r = EvalReport::verification("verify", &scores, &labels, 10, &[0.01, 0.001]).unwrap();
        assert_eq!(r.mean_accuracy, Some(1.0));
        let text = r.to_text();
        assert!(text.starts_with("protocol: verify\npairs: 20\nmean_accuracy: 1\n"));
        assert!(text.contains("tar_at_far_0.001: 1\n"));
        assert_eq!(r.roc_csv(), "threshold,far,tar\n0.8,0,1\n-0.1,1,1\n");
    }

    #[test]
    fn cmc_csv_layout() {
        let r = EvalReport {
            protocol: "identify".into(),
            probe_count: 4,
            cmc: vec![0.5, 1.0],
            ..EvalReport::default()
        };
        assert_eq!(r.cmc_csv(), "rank,rate\n1,0.5\n2,1\n");
        assert!(r.to_text().ends_with("probes: 4\nrank_1: 0.5\nrank_2: 1\n"));
    }
}

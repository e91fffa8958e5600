//! Breast-level ROC curve, trapezoidal AUC and percentile bootstrap.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{central_interval, run_replicates, BootstrapConfig};
use crate::error::{Error, Result};

/// A scored case with its binary ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCase {
    pub score: f64,
    pub positive: bool,
}

impl ScoredCase {
    pub fn new(score: f64, positive: bool) -> Self {
        ScoredCase { score, positive }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Cases with `score >= threshold` are called positive. The first point
    /// of every curve has an infinite threshold.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// TPR at false-positive rate `fpr`, linear between operating points.
    /// On a vertical segment the highest TPR at that FPR is returned.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let idx = self.points.partition_point(|p| p.fpr <= fpr);
        if idx == 0 {
            return 0.0;
        }
        let p = self.points[idx - 1];
        if p.fpr == fpr || idx == self.points.len() {
            return p.tpr;
        }
        let q = self.points[idx];
        p.tpr + (q.tpr - p.tpr) * (fpr - p.fpr) / (q.fpr - p.fpr)
    }
}

/// One pointwise interval of a bootstrap band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub x: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocBootstrap {
    pub auc: f64,
    pub lo: f64,
    pub hi: f64,
    pub replicates: usize,
    pub interval: f64,
    pub seed: u64,
    pub degenerate_redraws: u64,
    /// Pointwise TPR interval on an FPR grid; empty when no grid was requested.
    pub band: Vec<BandPoint>,
}

/// FPR grid `0.00, 0.01, ..., 1.00` used for the pointwise ROC band.
pub fn default_fpr_grid() -> Vec<f64> {
    (0..=100).map(|i| f64::from(i) / 100.0).collect()
}

/// Cases grouped by distinct score, highest score first.
struct TieGroups {
    thresholds: Vec<f64>,
    /// Group index of every input case.
    group_of: Vec<usize>,
    positive: Vec<bool>,
}

impl TieGroups {
    fn new(cases: &[ScoredCase]) -> Result<Self> {
        if let Some(c) = cases.iter().find(|c| !(0.0..=1.0).contains(&c.score)) {
            return Err(Error::InvalidInput(format!(
                "case scores must lie in [0, 1], got {}",
                c.score
            )));
        }
        let n_pos = cases.iter().filter(|c| c.positive).count();
        if n_pos == 0 {
            return Err(Error::Degenerate(
                "ROC needs at least one positive case; none present".into(),
            ));
        }
        if n_pos == cases.len() {
            return Err(Error::Degenerate(
                "ROC needs at least one negative case; none present".into(),
            ));
        }

        let mut order: Vec<usize> = (0..cases.len()).collect();
        order.sort_by(|&a, &b| cases[b].score.total_cmp(&cases[a].score));
        let mut thresholds: Vec<f64> = Vec::new();
        let mut group_of = vec![0; cases.len()];
        for i in order {
            let s = cases[i].score;
            if thresholds.last() != Some(&s) {
                thresholds.push(s);
            }
            group_of[i] = thresholds.len() - 1;
        }
        Ok(TieGroups {
            thresholds,
            group_of,
            positive: cases.iter().map(|c| c.positive).collect(),
        })
    }

    /// Curve for case multiplicities `weights` (all ones for the sample itself).
    fn curve(&self, weights: &[u32], tally: &mut Vec<(u64, u64)>) -> RocCurve {
        tally.clear();
        tally.resize(self.thresholds.len(), (0, 0));
        for ((&g, &pos), &w) in self.group_of.iter().zip(&self.positive).zip(weights) {
            if pos {
                tally[g].0 += u64::from(w);
            } else {
                tally[g].1 += u64::from(w);
            }
        }
        let total_pos: u64 = tally.iter().map(|t| t.0).sum();
        let total_neg: u64 = tally.iter().map(|t| t.1).sum();
        let (np, nn) = (total_pos as f64, total_neg as f64);

        let mut points = Vec::with_capacity(self.thresholds.len() + 1);
        points.push(RocPoint {
            threshold: f64::INFINITY,
            fpr: 0.0,
            tpr: 0.0,
        });
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut auc = 0.0;
        for (&thr, &(p, n)) in self.thresholds.iter().zip(tally.iter()) {
            if p == 0 && n == 0 {
                continue;
            }
            let prev = *points.last().expect("curve starts with the origin");
            tp += p;
            fp += n;
            let pt = RocPoint {
                threshold: thr,
                fpr: fp as f64 / nn,
                tpr: tp as f64 / np,
            };
            auc += (pt.fpr - prev.fpr) * (pt.tpr + prev.tpr) / 2.0;
            points.push(pt);
        }
        RocCurve { points, auc }
    }
}

/// ROC curve with one operating point per distinct score. Tied cases change
/// classification together, so ties contribute a diagonal segment.
pub fn roc_curve(cases: &[ScoredCase]) -> Result<RocCurve> {
    let groups = TieGroups::new(cases)?;
    Ok(groups.curve(&vec![1; cases.len()], &mut Vec::new()))
}

/// Full-sample AUC with its percentile interval; see [`roc_bootstrap`].
pub fn auc_bootstrap(cases: &[ScoredCase], cfg: &BootstrapConfig) -> Result<RocBootstrap> {
    roc_bootstrap(cases, cfg, &[])
}

/// Resamples cases with replacement `cfg.replicates()` times and reports the
/// central percentile interval of the replicate AUCs, plus a pointwise TPR
/// band at every FPR in `fpr_grid`.
///
/// Replicates that lose a class are redrawn, so exactly `replicates` AUCs
/// enter the interval; the number of redraws is reported.
pub fn roc_bootstrap(
    cases: &[ScoredCase],
    cfg: &BootstrapConfig,
    fpr_grid: &[f64],
) -> Result<RocBootstrap> {
    let groups = TieGroups::new(cases)?;
    let full = groups.curve(&vec![1; cases.len()], &mut Vec::new());

    let usable = |w: &[u32]| {
        let mut pos = false;
        let mut neg = false;
        for (&p, &c) in groups.positive.iter().zip(w) {
            if c > 0 {
                pos |= p;
                neg |= !p;
            }
        }
        pos && neg
    };
    let stat = |w: &[u32]| {
        let curve = groups.curve(w, &mut Vec::new());
        let tprs: Vec<f64> = fpr_grid.iter().map(|&x| curve.tpr_at(x)).collect();
        (curve.auc, tprs)
    };
    let (reps, degenerate_redraws) = run_replicates(cfg, cases.len(), usable, stat)?;

    let mut aucs: Vec<f64> = reps.iter().map(|r| r.0).collect();
    let (lo, hi) = central_interval(&mut aucs, cfg);

    let mut column = Vec::with_capacity(reps.len());
    let band = fpr_grid
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            column.clear();
            column.extend(reps.iter().map(|r| r.1[j]));
            let (lo, hi) = central_interval(&mut column, cfg);
            BandPoint { x, lo, hi }
        })
        .collect();

    Ok(RocBootstrap {
        auc: full.auc,
        lo,
        hi,
        replicates: cfg.replicates(),
        interval: cfg.interval(),
        seed: cfg.seed(),
        degenerate_redraws,
        band,
    })
}

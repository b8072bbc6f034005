//! Ranking metrics, label frequency groups and fusion-weight histograms.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_TAUS: [usize; 3] = [1, 3, 5];
pub const HISTOGRAM_BINS: usize = 10;

/// Label indices ordered by descending score; ties go to the lower index.
pub fn rank_labels(scores: &[f64]) -> Result<Vec<usize>> {
    if let Some(j) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!(
            "score for label {j} is {}",
            scores[j]
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Numeric comparison so that -0.0 and 0.0 tie.
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    Ok(order)
}

fn check_query(k: usize, truth: &BTreeSet<usize>, tau: usize) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::Validation("truth label set is empty".into()));
    }
    if tau == 0 || tau > k {
        return Err(Error::Validation(format!(
            "tau must be in 1..={k}, got {tau}"
        )));
    }
    if let Some(&j) = truth.iter().find(|&&j| j >= k) {
        return Err(Error::Validation(format!(
            "truth label {j} is outside 0..{k}"
        )));
    }
    Ok(())
}

// Rankings shorter than tau are truncated; precision still divides by tau.
fn precision_ranked(ranking: &[usize], truth: &BTreeSet<usize>, tau: usize) -> f64 {
    let hits = ranking
        .iter()
        .take(tau)
        .filter(|j| truth.contains(j))
        .count();
    hits as f64 / tau as f64
}

fn ndcg_ranked(
    ranking: &[usize],
    truth: &BTreeSet<usize>,
    tau: usize,
    log: impl Fn(f64) -> f64,
) -> f64 {
    let dcg: f64 = ranking
        .iter()
        .take(tau)
        .enumerate()
        .filter(|(_, j)| truth.contains(j))
        .map(|(i, _)| 1.0 / log(i as f64 + 2.0))
        .sum();
    let ideal: f64 = (0..tau.min(truth.len()))
        .map(|i| 1.0 / log(i as f64 + 2.0))
        .sum();
    dcg / ideal
}

/// Fraction of the `tau` highest-scored labels found in `truth`.
pub fn precision_at_k(scores: &[f64], truth: &BTreeSet<usize>, tau: usize) -> Result<f64> {
    check_query(scores.len(), truth, tau)?;
    Ok(precision_ranked(&rank_labels(scores)?, truth, tau))
}

/// nDCG at cutoff `tau` with base-2 discounts.
pub fn ndcg_at_k(scores: &[f64], truth: &BTreeSet<usize>, tau: usize) -> Result<f64> {
    ndcg_at_k_with_log(scores, truth, tau, f64::log2)
}

/// nDCG with a caller-chosen logarithm for the discount. Any base gives the
/// same value up to rounding.
pub fn ndcg_at_k_with_log(
    scores: &[f64],
    truth: &BTreeSet<usize>,
    tau: usize,
    log: impl Fn(f64) -> f64,
) -> Result<f64> {
    check_query(scores.len(), truth, tau)?;
    Ok(ndcg_ranked(&rank_labels(scores)?, truth, tau, log))
}

/// Frequency boundaries splitting labels into groups. With boundaries
/// `[5, 50]`: G1 holds F ≤ 5, G2 holds 5 < F ≤ 50, G3 holds F > 50.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelGroupSpec {
    pub boundaries: Vec<usize>,
}

impl Default for LabelGroupSpec {
    fn default() -> Self {
        LabelGroupSpec {
            boundaries: vec![5, 50],
        }
    }
}

impl LabelGroupSpec {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        let spec = LabelGroupSpec { boundaries };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "group boundaries must be strictly increasing, got {:?}",
                self.boundaries
            )));
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn group_of(&self, frequency: usize) -> usize {
        self.boundaries.partition_point(|&b| b < frequency)
    }

    /// `(name, lower exclusive, upper inclusive)` for group `g`.
    pub fn describe(&self, g: usize) -> (String, Option<usize>, Option<usize>) {
        let lower = g.checked_sub(1).map(|i| self.boundaries[i]);
        let upper = self.boundaries.get(g).copied();
        let name = match (lower, upper) {
            (None, Some(u)) => format!("G{}(F<={u})", g + 1),
            (Some(l), Some(u)) => format!("G{}({l}<F<={u})", g + 1),
            (Some(l), None) => format!("G{}(F>{l})", g + 1),
            (None, None) => format!("G{}(all)", g + 1),
        };
        (name, lower, upper)
    }

    /// Group index of every label given its training frequency.
    pub fn assign(&self, frequencies: &[usize]) -> Vec<usize> {
        frequencies.iter().map(|&f| self.group_of(f)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauMetrics {
    pub tau: usize,
    pub precision: Option<f64>,
    pub ndcg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    /// Documents that contributed to the averages.
    pub documents: usize,
    pub at: Vec<TauMetrics>,
}

impl MetricSet {
    pub fn precision(&self, tau: usize) -> Option<f64> {
        self.at
            .iter()
            .find(|m| m.tau == tau)
            .and_then(|m| m.precision)
    }

    pub fn ndcg(&self, tau: usize) -> Option<f64> {
        self.at.iter().find(|m| m.tau == tau).and_then(|m| m.ndcg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub lower: Option<usize>,
    pub upper: Option<usize>,
    pub label_count: usize,
    pub labels: Vec<usize>,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionHistograms {
    pub alpha: Histogram,
    pub beta: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub documents: usize,
    pub overall: MetricSet,
    pub groups: Vec<GroupReport>,
    pub histograms: BTreeMap<String, FusionHistograms>,
}

// Sum per-document values in input order so results do not depend on the
// thread count.
fn aggregate(per_doc: &[Vec<(f64, f64)>], taus: &[usize]) -> MetricSet {
    let n = per_doc.len();
    let at = taus
        .iter()
        .enumerate()
        .map(|(t, &tau)| {
            if n == 0 {
                return TauMetrics {
                    tau,
                    precision: None,
                    ndcg: None,
                };
            }
            let (p, g) = per_doc
                .iter()
                .fold((0.0, 0.0), |(p, g), d| (p + d[t].0, g + d[t].1));
            TauMetrics {
                tau,
                precision: Some(p / n as f64),
                ndcg: Some(g / n as f64),
            }
        })
        .collect();
    MetricSet { documents: n, at }
}

/// Scores every document against its truth set. Overall metrics rank all
/// labels. Group metrics rank only the group's labels against the
/// document's in-group truth and skip documents without in-group truth.
pub fn evaluate(
    scores: &[Vec<f64>],
    truths: &[BTreeSet<usize>],
    taus: &[usize],
    groups: &LabelGroupSpec,
    train_frequencies: &[usize],
) -> Result<EvalReport> {
    let k = train_frequencies.len();
    if scores.len() != truths.len() {
        return Err(Error::Validation(format!(
            "{} score rows for {} documents",
            scores.len(),
            truths.len()
        )));
    }
    if taus.is_empty() || taus.iter().any(|&t| t == 0 || t > k) {
        return Err(Error::Validation(format!(
            "every tau must be in 1..={k}, got {taus:?}"
        )));
    }
    groups.validate()?;
    for (i, (s, t)) in scores.iter().zip(truths).enumerate() {
        if s.len() != k {
            return Err(Error::Validation(format!(
                "document {i} has {} scores, label space has {k}",
                s.len()
            )));
        }
        check_query(k, t, 1).map_err(|e| Error::Validation(format!("document {i}: {e}")))?;
    }

    let assignment = groups.assign(train_frequencies);
    let rankings: Vec<Vec<usize>> = scores
        .par_iter()
        .map(|s| rank_labels(s))
        .collect::<Result<_>>()?;

    let overall: Vec<Vec<(f64, f64)>> = rankings
        .par_iter()
        .zip(truths.par_iter())
        .map(|(r, t)| {
            taus.iter()
                .map(|&tau| {
                    (
                        precision_ranked(r, t, tau),
                        ndcg_ranked(r, t, tau, f64::log2),
                    )
                })
                .collect()
        })
        .collect();

    let mut group_reports = Vec::with_capacity(groups.num_groups());
    for g in 0..groups.num_groups() {
        let labels: Vec<usize> = (0..k).filter(|&j| assignment[j] == g).collect();
        let per_doc: Vec<Vec<(f64, f64)>> = rankings
            .par_iter()
            .zip(truths.par_iter())
            .filter_map(|(r, t)| {
                let truth: BTreeSet<usize> =
                    t.iter().copied().filter(|&j| assignment[j] == g).collect();
                if truth.is_empty() {
                    return None;
                }
                let restricted: Vec<usize> =
                    r.iter().copied().filter(|&j| assignment[j] == g).collect();
                Some(
                    taus.iter()
                        .map(|&tau| {
                            (
                                precision_ranked(&restricted, &truth, tau),
                                ndcg_ranked(&restricted, &truth, tau, f64::log2),
                            )
                        })
                        .collect(),
                )
            })
            .collect();
        let (name, lower, upper) = groups.describe(g);
        group_reports.push(GroupReport {
            name,
            lower,
            upper,
            label_count: labels.len(),
            labels,
            metrics: aggregate(&per_doc, taus),
        });
    }

    Ok(EvalReport {
        documents: scores.len(),
        overall: aggregate(&overall, taus),
        groups: group_reports,
        histograms: BTreeMap::new(),
    })
}

/// Counts values in `[0, 1]` into equal-width bins, the last bin closed.
pub fn histogram(values: impl IntoIterator<Item = f64>, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Validation("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0; bins];
    for v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Validation(format!(
                "histogram value {v} outside [0, 1]"
            )));
        }
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { counts })
}

/// Histograms of the fusion weights α and β over (document, positive label)
/// pairs, in ten 0.1-wide bins.
pub fn fusion_weight_histogram(pairs: &[(f64, f64)]) -> Result<FusionHistograms> {
    Ok(FusionHistograms {
        alpha: histogram(pairs.iter().map(|p| p.0), HISTOGRAM_BINS)?,
        beta: histogram(pairs.iter().map(|p| p.1), HISTOGRAM_BINS)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn precision_examples() {
        // Ranking [1, 2, 3] over labels 0..4.
        let scores = [0.0, 0.9, 0.8, 0.7];
        assert!((precision_at_k(&scores, &set(&[1, 3]), 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision_at_k(&scores, &set(&[1, 2]), 2).unwrap(), 1.0);
        assert_eq!(precision_at_k(&scores, &set(&[0]), 2).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_example() {
        let scores = [0.9, 0.8, 0.7, 0.1];
        let got = ndcg_at_k(&scores, &set(&[0, 2]), 3).unwrap();
        let want = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.9197).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&scores, &set(&[0, 1]), 2).unwrap(), 1.0);
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(
            rank_labels(&[0.5, 0.7, 0.5, 0.7]).unwrap(),
            vec![1, 3, 0, 2]
        );
        assert_eq!(
            precision_at_k(&[0.5, 0.5, 0.5], &set(&[0]), 1).unwrap(),
            1.0
        );
        assert_eq!(
            precision_at_k(&[0.5, 0.5, 0.5], &set(&[2]), 1).unwrap(),
            0.0
        );
        assert_eq!(rank_labels(&[0.0, -0.0]).unwrap(), vec![0, 1]);
        assert_eq!(rank_labels(&[-0.0, 0.0]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn query_errors() {
        assert!(matches!(
            precision_at_k(&[0.1, 0.2], &set(&[]), 1),
            Err(Error::Validation(_))
        ));
        assert!(ndcg_at_k(&[0.1, 0.2], &set(&[]), 1).is_err());
        assert!(precision_at_k(&[0.1, 0.2], &set(&[0]), 3).is_err());
        assert!(precision_at_k(&[0.1, 0.2], &set(&[0]), 0).is_err());
        assert!(precision_at_k(&[0.1, 0.2], &set(&[2]), 1).is_err());
        assert!(matches!(
            precision_at_k(&[f64::NAN, 0.2], &set(&[0]), 1),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn group_boundaries() {
        let g = LabelGroupSpec::default();
        let got: Vec<usize> = [0, 1, 5, 6, 50, 51, 1000]
            .iter()
            .map(|&f| g.group_of(f))
            .collect();
        assert_eq!(got, vec![0, 0, 0, 1, 1, 2, 2]);
        assert_eq!(g.describe(0).0, "G1(F<=5)");
        assert_eq!(g.describe(1).0, "G2(5<F<=50)");
        assert_eq!(g.describe(2).0, "G3(F>50)");
        assert!(LabelGroupSpec::new(vec![5, 5]).is_err());
        assert!(LabelGroupSpec::new(vec![50, 5]).is_err());
    }

    #[test]
    fn evaluate_single_document() {
        let report = evaluate(
            &[vec![0.1, 0.9, 0.2]],
            &[set(&[1])],
            &[1, 3],
            &LabelGroupSpec::default(),
            &[1, 10, 100],
        )
        .unwrap();
        assert_eq!(report.overall.precision(1), Some(1.0));
        assert_eq!(report.overall.ndcg(3), Some(1.0));
        assert_eq!(report.groups.len(), 3);
        // Only G2 holds the true label.
        assert_eq!(report.groups[0].metrics.documents, 0);
        assert_eq!(report.groups[0].metrics.precision(1), None);
        assert_eq!(report.groups[1].metrics.documents, 1);
        // G2 has one label, so P@3 keeps the 1/3 denominator.
        assert!((report.groups[1].metrics.precision(3).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(report.groups[2].label_count, 1);
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["groups"][0]["metrics"]["at"][0]["precision"].is_null());
        assert!(json["overall"].is_object());
        assert!(json["histograms"].is_object());
    }

    #[test]
    fn evaluate_rejects_label_space_mismatch() {
        let g = LabelGroupSpec::default();
        assert!(evaluate(&[vec![0.1, 0.9]], &[set(&[1])], &[1], &g, &[1, 1, 1]).is_err());
        assert!(evaluate(&[vec![0.1, 0.9, 0.0]], &[set(&[3])], &[1], &g, &[1, 1, 1]).is_err());
        assert!(evaluate(&[vec![0.1, 0.9, 0.0]], &[set(&[1])], &[4], &g, &[1, 1, 1]).is_err());
    }

    #[test]
    fn histogram_bins() {
        let h = fusion_weight_histogram(&[(0.5, 0.5); 7]).unwrap();
        assert_eq!(h.alpha.counts[5], 7);
        assert_eq!(h.alpha.total(), 7);
        let h = histogram([0.0, 0.05, 0.1, 0.99, 1.0], 10).unwrap();
        assert_eq!(h.counts, vec![2, 1, 0, 0, 0, 0, 0, 0, 0, 2]);
        assert!(histogram([1.5], 10).is_err());
        assert!(histogram([f64::NAN], 10).is_err());
    }

    proptest! {
        #[test]
        fn metrics_are_bounded_and_agree_at_one(
            scores in prop::collection::vec(-5.0f64..5.0, 1..12),
            picks in prop::collection::vec(any::<prop::sample::Index>(), 1..6),
            tau_pick in any::<prop::sample::Index>(),
        ) {
            let k = scores.len();
            let truth: BTreeSet<usize> = picks.iter().map(|i| i.index(k)).collect();
            let tau = tau_pick.index(k) + 1;
            let p = precision_at_k(&scores, &truth, tau).unwrap();
            let n = ndcg_at_k(&scores, &truth, tau).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((0.0..=1.0 + 1e-15).contains(&n));
            prop_assert_eq!(
                precision_at_k(&scores, &truth, 1).unwrap(),
                ndcg_at_k(&scores, &truth, 1).unwrap()
            );
            let ln = ndcg_at_k_with_log(&scores, &truth, tau, f64::ln).unwrap();
            prop_assert!((n - ln).abs() <= 1e-12);
        }

        #[test]
        fn monotone_transform_invariance(
            scores in prop::collection::vec(-3.0f64..3.0, 1..10),
            label in any::<prop::sample::Index>(),
        ) {
            let k = scores.len();
            let truth: BTreeSet<usize> = [label.index(k)].into();
            let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 1.0).collect();
            for tau in 1..=k {
                prop_assert_eq!(
                    precision_at_k(&scores, &truth, tau).unwrap(),
                    precision_at_k(&transformed, &truth, tau).unwrap()
                );
                prop_assert_eq!(
                    ndcg_at_k(&scores, &truth, tau).unwrap(),
                    ndcg_at_k(&transformed, &truth, tau).unwrap()
                );
            }
        }

        #[test]
        fn beta_histogram_mirrors_alpha(alphas in prop::collection::vec(0.001f64..0.999, 1..50)) {
            // Keep values off bin edges so 1 - a lands in the mirrored bin.
            let alphas: Vec<f64> = alphas
                .into_iter()
                .filter(|a| ((a * 10.0) - (a * 10.0).round()).abs() > 1e-9)
                .collect();
            let pairs: Vec<(f64, f64)> = alphas.iter().map(|&a| (a, 1.0 - a)).collect();
            let h = fusion_weight_histogram(&pairs).unwrap();
            let mut mirrored = h.alpha.counts.clone();
            mirrored.reverse();
            prop_assert_eq!(mirrored, h.beta.counts);
        }
    }
}

//! Tuple-level precision, recall and F1, neutralization options, assessor
//! agreement and error-reduction arithmetic.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;

use crate::pipeline::{Realis, ResponseTuple};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    pub neutralize_realis: bool,
    /// Without a `coref_map` this has no effect and entities match by exact text.
    pub neutralize_coref: bool,
    /// Entity text to cluster id.
    pub coref_map: Option<BTreeMap<String, String>>,
}

impl ScoreOptions {
    pub fn realis_neutralized() -> Self {
        ScoreOptions {
            neutralize_realis: true,
            ..Self::default()
        }
    }
}

/// Applies the options and deduplicates.
pub fn neutralize<'a>(
    tuples: impl IntoIterator<Item = &'a ResponseTuple>,
    options: &ScoreOptions,
) -> BTreeSet<ResponseTuple> {
    let map = if options.neutralize_coref {
        options.coref_map.as_ref()
    } else {
        None
    };
    tuples
        .into_iter()
        .map(|t| {
            let mut t = t.clone();
            if options.neutralize_realis {
                t.realis = Realis::Neutralized;
            }
            if let Some(cluster) = map.and_then(|m| m.get(&t.entity)) {
                t.entity = cluster.clone();
            }
            t
        })
        .collect()
}

/// Counts and the derived rates. A zero denominator gives 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MacroPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreReport {
    pub per_type: BTreeMap<String, Prf>,
    /// Pooled counts over all types.
    pub overall: Prf,
    /// Unweighted mean of the per-type rates.
    pub macro_avg: MacroPrf,
}

/// Scores system tuples against key tuples under exact tuple equality after
/// neutralizing both sides.
pub fn score<'a, 'b>(
    system: impl IntoIterator<Item = &'a ResponseTuple>,
    key: impl IntoIterator<Item = &'b ResponseTuple>,
    options: &ScoreOptions,
) -> ScoreReport {
    let system = neutralize(system, options);
    let key = neutralize(key, options);
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for t in &system {
        let c = counts.entry(&t.event_type).or_default();
        if key.contains(t) {
            c.0 += 1;
        } else {
            c.1 += 1;
        }
    }
    for t in key.difference(&system) {
        counts.entry(&t.event_type).or_default().2 += 1;
    }
    let per_type: BTreeMap<String, Prf> = counts
        .iter()
        .map(|(t, &(tp, fp, fn_))| (String::from(*t), Prf::from_counts(tp, fp, fn_)))
        .collect();
    let (tp, fp, fn_) = counts
        .values()
        .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    let n = per_type.len();
    let macro_avg = if n == 0 {
        MacroPrf::default()
    } else {
        let sum = per_type.values().fold((0.0, 0.0, 0.0), |a, p| {
            (a.0 + p.precision, a.1 + p.recall, a.2 + p.f1)
        });
        MacroPrf {
            precision: sum.0 / n as f64,
            recall: sum.1 / n as f64,
            f1: sum.2 / n as f64,
        }
    };
    ScoreReport {
        per_type,
        overall: Prf::from_counts(tp, fp, fn_),
        macro_avg,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Dimension {
    EventPresence,
    RoleSelection,
    ArgumentAssessment,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::EventPresence => "event_presence",
            Dimension::RoleSelection => "role_selection",
            Dimension::ArgumentAssessment => "argument_assessment",
        }
    }
}

/// Two judges' verdicts on the same item and dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssessmentPair {
    pub item_id: String,
    pub dimension: Dimension,
    pub judge_a: String,
    pub judge_b: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AgreementRate {
    pub matches: usize,
    pub total: usize,
    pub rate: f64,
}

/// Fraction of matching verdicts per dimension. Dimensions without pairs
/// are absent.
pub fn agreement(pairs: &[AssessmentPair]) -> BTreeMap<Dimension, AgreementRate> {
    let mut counts: BTreeMap<Dimension, (usize, usize)> = BTreeMap::new();
    for p in pairs {
        let c = counts.entry(p.dimension).or_default();
        c.1 += 1;
        if p.judge_a == p.judge_b {
            c.0 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(d, (matches, total))| {
            (
                d,
                AgreementRate {
                    matches,
                    total,
                    rate: matches as f64 / total as f64,
                },
            )
        })
        .collect()
}

/// Fraction of the remaining error removed, per component. `None` where the
/// base is already perfect.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorReduction {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn reduction(base: f64, improved: f64) -> Option<f64> {
    if base >= 1.0 {
        None
    } else {
        Some((improved - base) / (1.0 - base))
    }
}

pub fn error_reduction(base: &Prf, improved: &Prf) -> ErrorReduction {
    ErrorReduction {
        precision: reduction(base.precision, improved.precision),
        recall: reduction(base.recall, improved.recall),
        f1: reduction(base.f1, improved.f1),
    }
}

/// Same as [`error_reduction`] on the overall rows of two reports.
pub fn report_error_reduction(base: &ScoreReport, improved: &ScoreReport) -> ErrorReduction {
    error_reduction(&base.overall, &improved.overall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec::Vec;

    fn t(e: &str) -> ResponseTuple {
        tr("Conflict.Attack", e, Realis::Actual)
    }

    fn tr(ty: &str, e: &str, m: Realis) -> ResponseTuple {
        ResponseTuple {
            doc_id: "d".into(),
            event_type: ty.into(),
            role: "Attacker".into(),
            entity: e.into(),
            realis: m,
        }
    }

    #[test]
    fn worked_example() {
        let system = [t("a"), t("b"), t("c")];
        let key = [t("a"), t("b"), t("d"), t("e")];
        let r = score(&system, &key, &ScoreOptions::default());
        assert_eq!((r.overall.tp, r.overall.fp, r.overall.fn_), (2, 1, 2));
        assert!((r.overall.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.overall.recall, 0.5);
        assert!((r.overall.f1 - 4.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn identity_and_empty() {
        let key = [t("a"), t("b")];
        let r = score(&key, &key, &ScoreOptions::default());
        assert_eq!((r.overall.precision, r.overall.recall, r.overall.f1), (1.0, 1.0, 1.0));
        let r = score(&[], &key, &ScoreOptions::default());
        assert_eq!((r.overall.precision, r.overall.recall, r.overall.f1), (0.0, 0.0, 0.0));
        let r = score(&[], &[], &ScoreOptions::default());
        assert_eq!(r.overall, Prf::default());
        assert!(r.per_type.is_empty());
    }

    #[test]
    fn neutralization_examples() {
        let a = tr("T", "x", Realis::Actual);
        let g = tr("T", "x", Realis::Generic);
        assert_eq!(neutralize([&a, &g], &ScoreOptions::realis_neutralized()).len(), 1);
        assert_eq!(neutralize([&a, &g], &ScoreOptions::default()).len(), 2);

        let map: BTreeMap<String, String> = [("the president", "c1"), ("obama", "c1")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let p = tr("T", "the president", Realis::Actual);
        let o = tr("T", "obama", Realis::Actual);
        let opts = ScoreOptions {
            neutralize_coref: true,
            coref_map: Some(map),
            ..Default::default()
        };
        assert_eq!(neutralize([&p, &o], &opts).len(), 1);
        let no_map = ScoreOptions {
            neutralize_coref: true,
            ..Default::default()
        };
        assert_eq!(neutralize([&p, &o], &no_map).len(), 2);
    }

    #[test]
    fn per_type_and_macro() {
        let system = [tr("A", "x", Realis::Actual), tr("B", "y", Realis::Actual)];
        let key = [tr("A", "x", Realis::Actual), tr("B", "z", Realis::Actual)];
        let r = score(&system, &key, &ScoreOptions::default());
        assert_eq!(r.per_type["A"].f1, 1.0);
        assert_eq!(r.per_type["B"].f1, 0.0);
        assert_eq!(r.macro_avg.f1, 0.5);
        assert_eq!(r.overall.f1, 0.5);
    }

    #[test]
    fn agreement_rates() {
        let mut pairs = Vec::new();
        for i in 0..20 {
            pairs.push(AssessmentPair {
                item_id: i.to_string(),
                dimension: Dimension::EventPresence,
                judge_a: "yes".into(),
                judge_b: if i == 0 { "no".into() } else { "yes".into() },
            });
        }
        for i in 0..50 {
            pairs.push(AssessmentPair {
                item_id: i.to_string(),
                dimension: Dimension::RoleSelection,
                judge_a: "Agent".into(),
                judge_b: if i == 7 { "Place".into() } else { "Agent".into() },
            });
        }
        let rates = agreement(&pairs);
        assert_eq!(rates[&Dimension::EventPresence].rate, 0.95);
        assert_eq!(rates[&Dimension::RoleSelection].rate, 0.98);
        assert!(!rates.contains_key(&Dimension::ArgumentAssessment));
    }

    #[test]
    fn error_reduction_examples() {
        assert!((reduction(0.50, 0.53).unwrap() - 0.06).abs() < 1e-9);
        assert!((reduction(0.80, 0.82).unwrap() - 0.10).abs() < 1e-9);
        assert_eq!(reduction(0.4, 0.4), Some(0.0));
        assert_eq!(reduction(1.0, 1.0), None);
        let base = Prf::from_counts(1, 1, 1);
        let er = error_reduction(&base, &base);
        assert_eq!((er.precision, er.recall, er.f1), (Some(0.0), Some(0.0), Some(0.0)));
    }
}

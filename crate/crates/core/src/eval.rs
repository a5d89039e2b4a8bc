//! Accuracy, grouped breakdowns and the retraining protocols.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classifier::{predict_corpus, BiasModel};
use crate::corpus::{Corpus, SideLabel};
use crate::error::{Error, Result};
use crate::observe::Observer;
use crate::pipeline::{run_pipeline, PipelineConfig};

pub fn accuracy(predictions: &[SideLabel], labels: &[SideLabel]) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

fn check_lengths(predictions: usize, labels: usize) -> Result<()> {
    if predictions != labels {
        return Err(Error::DimensionMismatch {
            expected: labels,
            found: predictions,
        });
    }
    if labels == 0 {
        return Err(Error::invalid("cannot score an empty prediction set"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub key: String,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub total: usize,
    /// Descending count, ties by key.
    pub per_group: Vec<GroupAccuracy>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

/// Per-key accuracy. A sample counts toward every key it carries.
pub fn group_accuracy(predictions: &[SideLabel], labels: &[SideLabel], keys: &[Vec<String>]) -> Result<EvalReport> {
    check_lengths(predictions.len(), labels.len())?;
    check_lengths(keys.len(), labels.len())?;
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ((p, l), ks) in predictions.iter().zip(labels).zip(keys) {
        for k in ks {
            let t = tally.entry(k.as_str()).or_default();
            t.0 += (p == l) as usize;
            t.1 += 1;
        }
    }
    let mut per_group: Vec<GroupAccuracy> = tally
        .into_iter()
        .map(|(key, (correct, count))| GroupAccuracy {
            key: key.to_string(),
            accuracy: correct as f64 / count as f64,
            count,
        })
        .collect();
    per_group.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.key.cmp(&b.key)));
    Ok(EvalReport {
        overall_accuracy: accuracy(predictions, labels)?,
        total: labels.len(),
        per_group,
        metadata: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    Source,
    Topic,
}

impl Grouping {
    pub fn keys(self, corpus: &Corpus) -> Vec<Vec<String>> {
        corpus
            .iter()
            .map(|s| match self {
                Grouping::Source => vec![s.source.clone()],
                Grouping::Topic => s.topics.iter().cloned().collect(),
            })
            .collect()
    }
}

/// Stage-2 predictions on `corpus`, broken down by `grouping`.
pub fn evaluate(model: &BiasModel, corpus: &Corpus, grouping: Grouping) -> Result<EvalReport> {
    let predictions = predict_corpus(model, corpus)?;
    let labels: Vec<SideLabel> = corpus.iter().map(|s| s.side).collect();
    group_accuracy(&predictions, &labels, &grouping.keys(corpus))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    pub accuracy: f64,
    pub sources_used: usize,
    pub warning: Option<String>,
}

/// Mean accuracy over the `k` largest groups of `report`, either plain or
/// weighted by group size.
pub fn top_k_source_accuracy(report: &EvalReport, k: usize, weighted: bool) -> Result<TopK> {
    if k == 0 || report.per_group.is_empty() {
        return Err(Error::invalid("top-k needs k ≥ 1 and a non-empty report"));
    }
    let warning = (k > report.per_group.len()).then(|| {
        format!("k = {k} exceeds the {} sources in the report; using all", report.per_group.len())
    });
    let groups = &report.per_group[..k.min(report.per_group.len())];
    let accuracy = if weighted {
        let n: usize = groups.iter().map(|g| g.count).sum();
        groups.iter().map(|g| g.accuracy * g.count as f64).sum::<f64>() / n as f64
    } else {
        groups.iter().map(|g| g.accuracy).sum::<f64>() / groups.len() as f64
    };
    Ok(TopK {
        accuracy,
        sources_used: groups.len(),
        warning,
    })
}

impl EvalReport {
    pub fn write_csv(&self, mut writer: impl Write) -> std::io::Result<()> {
        writeln!(writer, "key,accuracy,count")?;
        for g in &self.per_group {
            let key = if g.key.contains([',', '"', '\n']) {
                format!("\"{}\"", g.key.replace('"', "\"\""))
            } else {
                g.key.clone()
            };
            writeln!(writer, "{key},{},{}", g.accuracy, g.count)?;
        }
        writer.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoResult {
    pub source: String,
    pub accuracy_with: f64,
    pub accuracy_without: f64,
    pub test_samples: usize,
    pub train_samples_removed: usize,
}

/// Trains the pipeline with and without `source` in the training set and
/// scores both on that source's test samples.
pub fn leave_one_source_out(
    train: &Corpus,
    test: &Corpus,
    source: &str,
    config: &PipelineConfig,
    observer: &mut dyn Observer,
) -> Result<LosoResult> {
    let held_out = test.filtered(|s| s.source == source);
    let removed = train.iter().filter(|s| s.source == source).count();
    if held_out.is_empty() && removed == 0 {
        return Err(Error::UnknownSource(source.to_string()));
    }
    if held_out.is_empty() {
        return Err(Error::invalid(format!("source {source:?} has no test samples")));
    }
    let with = run_pipeline(train, config, observer)?;
    let without = run_pipeline(&train.filtered(|s| s.source != source), config, observer)?;
    let labels: Vec<SideLabel> = held_out.iter().map(|s| s.side).collect();
    Ok(LosoResult {
        source: source.to_string(),
        accuracy_with: accuracy(&predict_corpus(&with.stage2, &held_out)?, &labels)?,
        accuracy_without: accuracy(&predict_corpus(&without.stage2, &held_out)?, &labels)?,
        test_samples: held_out.len(),
        train_samples_removed: removed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    /// Sentences kept; `None` is the full-article reference.
    pub k: Option<usize>,
    pub accuracy: f64,
}

/// Stage-2 test accuracy after retraining on articles cut to their first
/// `k` sentences, for each `k`, preceded by the full-article run.
pub fn sentence_truncation_sweep(
    train: &Corpus,
    test: &Corpus,
    ks: &[usize],
    config: &PipelineConfig,
    observer: &mut dyn Observer,
) -> Result<Vec<SweepEntry>> {
    if ks.is_empty() {
        return Err(Error::invalid("truncation sweep needs at least one k"));
    }
    let labels: Vec<SideLabel> = test.iter().map(|s| s.side).collect();
    let mut score = |corpus: &Corpus| -> Result<f64> {
        let models = run_pipeline(corpus, config, observer)?;
        accuracy(&predict_corpus(&models.stage2, test)?, &labels)
    };
    let mut out = vec![SweepEntry {
        k: None,
        accuracy: score(train)?,
    }];
    for &k in ks {
        out.push(SweepEntry {
            k: Some(k),
            accuracy: score(&train.truncated(k))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SideLabel::{Left as L, Right as R};

    fn keys(k: &[&str]) -> Vec<Vec<String>> {
        k.iter().map(|s| vec![s.to_string()]).collect()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[L, R], &[L, R]).unwrap(), 1.0);
        assert_eq!(accuracy(&[R, L], &[L, R]).unwrap(), 0.0);
        assert_eq!(accuracy(&[L, L, R, R], &[L, L, R, L]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[L], &[L, R]).is_err());
    }

    #[test]
    fn groups_by_key_sorted_by_count() {
        let r = group_accuracy(&[L, L, R, R, L], &[L, R, R, R, L], &keys(&["a", "a", "b", "b", "b"])).unwrap();
        assert_eq!(r.per_group[0].key, "b");
        assert_eq!(r.per_group[0].count, 3);
        assert_eq!(r.per_group[0].accuracy, 1.0);
        assert_eq!(r.per_group[1].accuracy, 0.5);
        let weighted: f64 = r.per_group.iter().map(|g| g.accuracy * g.count as f64).sum::<f64>() / 5.0;
        assert!((weighted - r.overall_accuracy).abs() < 1e-12);

        let single = group_accuracy(&[L, R, R], &[L, L, R], &keys(&["x", "x", "x"])).unwrap();
        assert_eq!(single.per_group[0].accuracy, single.overall_accuracy);
    }

    #[test]
    fn multi_key_samples_count_in_each_group() {
        let k = vec![vec!["a".to_string(), "b".to_string()], vec!["b".to_string()]];
        let r = group_accuracy(&[L, R], &[L, L], &k).unwrap();
        assert_eq!(r.per_group[0].key, "b");
        assert_eq!(r.per_group[0].count, 2);
        assert_eq!(r.per_group[1].count, 1);
    }

    fn three_sources() -> EvalReport {
        let preds = [L, L, L, L, L, L, L, L, L];
        let labels = [L, L, L, R, L, L, R, L, R];
        group_accuracy(&preds, &labels, &keys(&["a", "a", "a", "a", "b", "b", "b", "c", "c"])).unwrap()
    }

    #[test]
    fn top_k_examples() {
        let r = three_sources();
        assert_eq!(top_k_source_accuracy(&r, 1, false).unwrap().accuracy, 0.75);
        let two = top_k_source_accuracy(&r, 2, false).unwrap();
        assert!((two.accuracy - (0.75 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        let w = top_k_source_accuracy(&r, 2, true).unwrap();
        assert!((w.accuracy - 5.0 / 7.0).abs() < 1e-12);
        let all = top_k_source_accuracy(&r, 10, false).unwrap();
        assert_eq!(all.sources_used, 3);
        assert!(all.warning.is_some());
    }

    #[test]
    fn identical_source_accuracies_average_to_that_value() {
        let r = group_accuracy(&[L, R, L, R], &[L, L, L, L], &keys(&["a", "a", "b", "b"])).unwrap();
        assert_eq!(top_k_source_accuracy(&r, 2, false).unwrap().accuracy, 0.5);
    }

    #[test]
    fn report_round_trips_through_json_and_csv() {
        let mut r = three_sources();
        r.metadata.insert("seed".into(), serde_json::json!(42));
        let json = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("key,accuracy,count\na,0.75,4\n"));
    }
}

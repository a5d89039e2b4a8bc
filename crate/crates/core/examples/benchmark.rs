//! Two-stage model against the image-only baseline on a synthetic corpus.
//!
//! ```text
//! cargo run --release --example benchmark -- '{"seeds":[0,1],"synth":{"noise":1.5}}'
//! ```
//!
//! The optional JSON argument overrides any field of [`Settings`].

use serde::{Deserialize, Serialize};
use serde_json::Value;
use weakbias::classifier::{ablate_zero_text, predict_corpus, ClassWeighting};
use weakbias::corpus::{split, SideLabel};
use weakbias::eval::accuracy;
use weakbias::pipeline::{image_only_baseline, run_pipeline, PipelineConfig};
use weakbias::synth::{make_synthetic, SyntheticSpec};

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct Settings {
    seeds: Vec<u64>,
    test_fraction: f64,
    synth: SyntheticSpec,
    pipeline: PipelineConfig,
    truncate: Vec<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            test_fraction: 0.2,
            synth: weakbias::synth::benchmark_spec(0),
            pipeline: weakbias::synth::benchmark_pipeline(),
            truncate: Vec::new(),
        }
    }
}

fn merge(base: &mut Value, overrides: Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn main() -> weakbias::Result<()> {
    let bad = |e: serde_json::Error| weakbias::Error::InvalidArgument(e.to_string());
    let mut merged = serde_json::to_value(Settings::default()).map_err(bad)?;
    if let Some(json) = std::env::args().nth(1) {
        merge(&mut merged, serde_json::from_str(&json).map_err(bad)?);
    }
    let settings: Settings = serde_json::from_value(merged).map_err(bad)?;
    let mut gaps = Vec::new();
    for &s in &settings.seeds {
        let corpus = make_synthetic(&SyntheticSpec {
            seed: s,
            ..settings.synth.clone()
        })?;
        let (train, test) = split(&corpus, settings.test_fraction, s)?;
        let labels: Vec<SideLabel> = test.iter().map(|x| x.side).collect();
        let config = settings.pipeline.clone().with_root_seed(s);
        let t0 = std::time::Instant::now();
        let models = run_pipeline(&train, &config, &mut ())?;
        let two_stage = accuracy(&predict_corpus(&models.stage2, &test)?, &labels)?;
        let ablated = accuracy(&ablate_zero_text(&models.stage1).predict_corpus(&test)?, &labels)?;
        let baseline = accuracy(&predict_corpus(&image_only_baseline(&train, &config, &mut ())?, &test)?, &labels)?;
        let mut truncated = Vec::new();
        for &k in &settings.truncate {
            let m = run_pipeline(&train.truncated(k), &config, &mut ())?;
            truncated.push(accuracy(&predict_corpus(&m.stage2, &test)?, &labels)?);
        }
        let uniform = PipelineConfig {
            stage1: weakbias::classifier::TrainSpec {
                class_weighting: ClassWeighting::Uniform,
                ..config.stage1.clone()
            },
            stage2: weakbias::classifier::TrainSpec {
                class_weighting: ClassWeighting::Uniform,
                ..config.stage2.clone()
            },
            ..config.clone()
        };
        let minority = if train.side_counts()[0] < train.side_counts()[1] { SideLabel::Left } else { SideLabel::Right };
        let recall = |preds: &[SideLabel]| {
            let hits = preds.iter().zip(&labels).filter(|(p, l)| **l == minority && **p == minority).count();
            hits as f64 / labels.iter().filter(|l| **l == minority).count() as f64
        };
        let weighted_recall = recall(&predict_corpus(&models.stage2, &test)?);
        let uniform_recall = if train.side_counts()[0] != train.side_counts()[1] {
            recall(&predict_corpus(&run_pipeline(&train, &uniform, &mut ())?.stage2, &test)?)
        } else {
            f64::NAN
        };
        println!(
            "seed {s}: two-stage {two_stage:.4} baseline {baseline:.4} ablated {ablated:.4} truncated {truncated:?} \
             minority recall weighted {weighted_recall:.3} uniform {uniform_recall:.3} ({:.1}s)",
            t0.elapsed().as_secs_f64()
        );
        gaps.push((two_stage - baseline, two_stage - ablated));
    }
    let n = gaps.len() as f64;
    println!(
        "mean gap vs baseline {:.4}, vs ablated {:.4}",
        gaps.iter().map(|g| g.0).sum::<f64>() / n,
        gaps.iter().map(|g| g.1).sum::<f64>() / n
    );
    Ok(())
}

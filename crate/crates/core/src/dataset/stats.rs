use serde::Serialize;

use super::{DatasetFile, Example};
use crate::error::Result;
use crate::par;
use crate::sampler::{evaluate_scene, matches_concept, nearest_concept_distance, SplitKind};

/// Verification rates for one split. Every rate is recomputed from the stored
/// scenes with the symbolic labeler.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitStats {
    pub split: SplitKind,
    pub examples: usize,
    /// Mean fraction of positive labels on each side.
    pub sender_balance: f64,
    pub receiver_balance: f64,
    /// Fraction of examples with exactly half positives on both sides.
    pub exact_balance_rate: f64,
    /// Stored labels agreeing with `evaluate_scene`.
    pub soundness_rate: f64,
    /// Negative scenes exactly one attribute from the concept.
    pub tightness_rate: f64,
    /// Hypotheses respecting the split's holdout rule.
    pub hygiene_rate: f64,
    /// Scenes whose verdict survives removing every non-concept object.
    pub neutrality_rate: f64,
}

impl SplitStats {
    pub fn is_clean(&self) -> bool {
        [
            self.exact_balance_rate,
            self.soundness_rate,
            self.tightness_rate,
            self.hygiene_rate,
            self.neutrality_rate,
        ]
        .iter()
        .all(|&r| r == 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub splits: Vec<SplitStats>,
}

impl DatasetStats {
    pub fn is_clean(&self) -> bool {
        self.splits.iter().all(SplitStats::is_clean)
    }

    /// Soundness over all scenes of all splits.
    pub fn overall_soundness(&self) -> f64 {
        let total: usize = self.splits.iter().map(|s| s.examples).sum();
        self.splits
            .iter()
            .map(|s| s.soundness_rate * s.examples as f64)
            .sum::<f64>()
            / total.max(1) as f64
    }
}

#[derive(Default)]
struct Tally {
    sender_pos: f64,
    receiver_pos: f64,
    balanced: usize,
    scenes: usize,
    sound: usize,
    negatives: usize,
    tight: usize,
    hygienic: usize,
    neutral: usize,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.sender_pos += o.sender_pos;
        self.receiver_pos += o.receiver_pos;
        self.balanced += o.balanced;
        self.scenes += o.scenes;
        self.sound += o.sound;
        self.negatives += o.negatives;
        self.tight += o.tight;
        self.hygienic += o.hygienic;
        self.neutral += o.neutral;
        self
    }
}

fn tally(ds: &DatasetFile, ex: &Example) -> Tally {
    let h = &ex.hypothesis;
    let frac = |items: &[super::LabeledScene]| {
        items.iter().filter(|s| s.label).count() as f64 / items.len().max(1) as f64
    };
    let mut t = Tally {
        sender_pos: frac(&ex.sender),
        receiver_pos: frac(&ex.receiver),
        ..Tally::default()
    };
    if t.sender_pos == 0.5 && t.receiver_pos == 0.5 {
        t.balanced = 1;
    }
    if ds
        .holdout()
        .hypothesis_respects_split(&ds.config().task, h, ex.split)
    {
        t.hygienic = 1;
    }
    for (_, items) in ex.sides() {
        for item in items {
            let verdict = evaluate_scene(h, &item.scene);
            t.scenes += 1;
            t.sound += (verdict == item.label) as usize;
            if !item.label {
                t.negatives += 1;
                t.tight += (nearest_concept_distance(h, &item.scene) == Some(1)) as usize;
            }
            let core = item.scene.retain(|o| matches_concept(h, o));
            t.neutral += (evaluate_scene(h, &core) == verdict) as usize;
        }
    }
    t
}

fn rate(n: usize, d: usize) -> f64 {
    if d == 0 {
        1.0
    } else {
        n as f64 / d as f64
    }
}

pub fn dataset_stats(ds: &DatasetFile) -> Result<DatasetStats> {
    let mut splits = Vec::with_capacity(SplitKind::ALL.len());
    for split in SplitKind::ALL {
        let range = ds.split_range(split);
        let tallies = par::try_map_indices(range.len(), |i| {
            Ok(tally(ds, &ds.example(range.start + i)?))
        })?;
        let n = tallies.len();
        let t = tallies.into_iter().fold(Tally::default(), Tally::merge);
        splits.push(SplitStats {
            split,
            examples: n,
            sender_balance: t.sender_pos / n.max(1) as f64,
            receiver_balance: t.receiver_pos / n.max(1) as f64,
            exact_balance_rate: rate(t.balanced, n),
            soundness_rate: rate(t.sound, t.scenes),
            tightness_rate: rate(t.tight, t.negatives),
            hygiene_rate: rate(t.hygienic, n),
            neutrality_rate: rate(t.neutral, t.scenes),
        });
    }
    Ok(DatasetStats { splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, DatasetConfig, SplitCounts};
    use crate::sampler::TaskSpec;
    use crate::scene::TaskType;

    fn ds() -> DatasetFile {
        let mut cfg = DatasetConfig::desk(TaskSpec::new(TaskType::Tex, 2), 5);
        cfg.examples_per_split = SplitCounts::uniform_eval(10, 4);
        cfg.images_per_side = 8;
        cfg.positives_per_side = 4;
        build_dataset(&cfg).unwrap()
    }

    #[test]
    fn fresh_dataset_is_clean() {
        let stats = dataset_stats(&ds()).unwrap();
        assert!(stats.is_clean());
        for s in &stats.splits {
            assert_eq!(s.sender_balance, 0.5);
            assert_eq!(s.receiver_balance, 0.5);
        }
        assert_eq!(stats.overall_soundness(), 1.0);
    }

    #[test]
    fn corrupted_label_is_caught() {
        let bad = ds().with_flipped_label(3, false, 0).unwrap();
        let stats = dataset_stats(&bad).unwrap();
        assert!(!stats.is_clean());
        assert!(stats.splits[0].soundness_rate < 1.0);
        assert!(stats.splits[0].exact_balance_rate < 1.0);
    }
}

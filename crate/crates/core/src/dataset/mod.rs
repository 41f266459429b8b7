//! Example assembly, split construction and the TXR1 container.

mod format;
mod stats;

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::render::{render_scene, texture_table, Image, Palette, TextureMask};
use crate::sampler::{
    derive_seed, make_holdout_partition, sample_hypothesis, sample_labeled_scene, HoldoutPartition,
    RngStream, SplitKind, TaskSpec,
};
use crate::scene::{GridScene, Hypothesis};

pub use format::{
    generate_to_path, parse_dataset, read_dataset, serialize_dataset, write_dataset, Header,
    FORMAT_VERSION, MAGIC,
};
pub use stats::{dataset_stats, DatasetStats, SplitStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val_same: usize,
    pub test_same: usize,
    pub val_new: usize,
    pub test_new: usize,
}

impl SplitCounts {
    pub fn uniform_eval(train: usize, eval: usize) -> Self {
        SplitCounts {
            train,
            val_same: eval,
            test_same: eval,
            val_new: eval,
            test_new: eval,
        }
    }

    pub fn get(&self, split: SplitKind) -> usize {
        match split {
            SplitKind::Train => self.train,
            SplitKind::ValSame => self.val_same,
            SplitKind::TestSame => self.test_same,
            SplitKind::ValNew => self.val_new,
            SplitKind::TestNew => self.test_new,
        }
    }

    pub fn total(&self) -> usize {
        SplitKind::ALL.iter().map(|&s| self.get(s)).sum()
    }
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts::uniform_eval(100_000, 1024)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub cell_size: u16,
    pub mask_dim: u8,
    /// Seed for texture masks; derived from the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture_seed: Option<u64>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            cell_size: 16,
            mask_dim: 4,
            texture_seed: None,
        }
    }
}

fn default_holdout() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub task: TaskSpec,
    #[serde(default)]
    pub examples_per_split: SplitCounts,
    pub images_per_side: usize,
    pub positives_per_side: usize,
    #[serde(default = "default_holdout")]
    pub holdout_count: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub render: RenderConfig,
}

impl DatasetConfig {
    /// Full-size layout: 100,000 training examples, 1024 per eval split,
    /// 128 images per side of which 64 are positive.
    pub fn full_scale(task: TaskSpec, master_seed: u64) -> Self {
        DatasetConfig {
            task,
            examples_per_split: SplitCounts::default(),
            images_per_side: 128,
            positives_per_side: 64,
            holdout_count: default_holdout(),
            master_seed,
            render: RenderConfig::default(),
        }
    }

    /// Desk-scale layout: 200 train / 50 per eval split, 32 images per side.
    pub fn desk(task: TaskSpec, master_seed: u64) -> Self {
        DatasetConfig {
            examples_per_split: SplitCounts::uniform_eval(200, 50),
            images_per_side: 32,
            positives_per_side: 16,
            ..DatasetConfig::full_scale(task, master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.images_per_side == 0 || self.images_per_side > u8::MAX as usize {
            return bad(format!(
                "images per side must be in [1, 255], got {}",
                self.images_per_side
            ));
        }
        if !self.images_per_side.is_multiple_of(2)
            || self.positives_per_side * 2 != self.images_per_side
        {
            return bad(format!(
                "positives per side ({}) must be half of images per side ({})",
                self.positives_per_side, self.images_per_side
            ));
        }
        for split in SplitKind::ALL {
            if self.examples_per_split.get(split) == 0 {
                return bad(format!("split {split} needs at least one example"));
            }
        }
        let dim = self.render.mask_dim as u16;
        if dim < 2 || self.render.cell_size == 0 || !self.render.cell_size.is_multiple_of(dim) {
            return bad(format!(
                "cell size {} must be a positive multiple of mask dim {}",
                self.render.cell_size, dim
            ));
        }
        Ok(())
    }

    pub fn texture_seed(&self) -> u64 {
        self.render
            .texture_seed
            .unwrap_or_else(|| derive_seed(self.master_seed, 0x7e47, 0))
    }

    pub fn image_side(&self) -> usize {
        self.task.grid_size as usize * self.render.cell_size as usize
    }

    /// Byte length of one example record; constant within a dataset.
    pub fn record_len(&self) -> usize {
        let objects = self.task.core_objects() + self.task.num_distractors as usize;
        let item = 1 + 4 * objects + 1;
        2 + self.task.num_attrs() + 2 * (1 + self.images_per_side * item)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledScene {
    pub scene: GridScene,
    pub label: bool,
}

/// One referential episode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub hypothesis: Hypothesis,
    pub sender: Vec<LabeledScene>,
    pub receiver: Vec<LabeledScene>,
    pub split: SplitKind,
}

impl Example {
    pub fn sides(&self) -> [(&'static str, &[LabeledScene]); 2] {
        [("sender", &self.sender), ("receiver", &self.receiver)]
    }
}

fn build_side(
    cfg: &DatasetConfig,
    part: &HoldoutPartition,
    split: SplitKind,
    h: &Hypothesis,
    rng: &mut RngStream,
) -> Result<Vec<LabeledScene>> {
    use rand::seq::SliceRandom;
    let mut labels: Vec<bool> = (0..cfg.images_per_side)
        .map(|i| i < cfg.positives_per_side)
        .collect();
    labels.shuffle(rng);
    labels
        .into_iter()
        .map(|label| {
            let (scene, _) = sample_labeled_scene(h, &cfg.task, part, split, label, rng)?;
            Ok(LabeledScene { scene, label })
        })
        .collect()
}

/// Builds one example; a pure function of `(master_seed, split, example_index)`.
pub fn build_example(
    cfg: &DatasetConfig,
    part: &HoldoutPartition,
    split: SplitKind,
    example_index: usize,
) -> Result<Example> {
    let mut rng = RngStream::for_example(cfg.master_seed, split, example_index as u64);
    let hypothesis = sample_hypothesis(&cfg.task, part, split, &mut rng)?;
    let sender = build_side(cfg, part, split, &hypothesis, &mut rng)?;
    let receiver = build_side(cfg, part, split, &hypothesis, &mut rng)?;
    Ok(Example {
        hypothesis,
        sender,
        receiver,
        split,
    })
}

pub fn holdout_for(cfg: &DatasetConfig) -> Result<HoldoutPartition> {
    make_holdout_partition(&cfg.task, cfg.holdout_count, cfg.master_seed)
}

/// Symbolic dataset: header, offset index and encoded example records.
///
/// Records are decoded (and scenes rendered) on demand.
#[derive(Clone, Debug)]
pub struct DatasetFile {
    header: Header,
    palette: Palette,
    masks: Vec<TextureMask>,
    offsets: Vec<u64>,
    payload: Vec<u8>,
}

impl PartialEq for DatasetFile {
    fn eq(&self, other: &Self) -> bool {
        self.header == other.header
            && self.offsets == other.offsets
            && self.payload == other.payload
    }
}

impl DatasetFile {
    pub(crate) fn from_parts(header: Header, offsets: Vec<u64>, payload: Vec<u8>) -> Result<Self> {
        let palette = Palette::from_colors(header.palette.clone())?;
        let masks = header.decode_masks()?;
        Ok(DatasetFile {
            header,
            palette,
            masks,
            offsets,
            payload,
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.header.config
    }

    pub fn holdout(&self) -> &HoldoutPartition {
        &self.header.holdout
    }

    pub fn palette(&self) -> &Palette {
        &self.palette
    }

    pub fn masks(&self) -> &[TextureMask] {
        &self.masks
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Global index range of a split's examples.
    pub fn split_range(&self, split: SplitKind) -> Range<usize> {
        let counts = &self.header.config.examples_per_split;
        let start: usize = SplitKind::ALL
            .iter()
            .take_while(|&&s| s != split)
            .map(|&s| counts.get(s))
            .sum();
        start..start + counts.get(split)
    }

    pub fn split_of(&self, index: usize) -> Option<SplitKind> {
        SplitKind::ALL
            .into_iter()
            .find(|&s| self.split_range(s).contains(&index))
    }

    fn record(&self, index: usize) -> Result<&[u8]> {
        let start = *self.offsets.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.len(),
        })? as usize;
        let end = self
            .offsets
            .get(index + 1)
            .map_or(self.payload.len(), |&o| o as usize);
        Ok(&self.payload[start..end])
    }

    pub fn example(&self, index: usize) -> Result<Example> {
        let split = self.split_of(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.len(),
        })?;
        format::decode_record(self.record(index)?, self.config().task.grid_size, split)
    }

    /// Example `index` within `split`.
    pub fn split_example(&self, split: SplitKind, index: usize) -> Result<Example> {
        let range = self.split_range(split);
        if index >= range.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: range.len(),
            });
        }
        self.example(range.start + index)
    }

    pub fn render(&self, scene: &GridScene) -> Result<Image> {
        render_scene(
            scene,
            &self.palette,
            &self.masks,
            self.config().render.cell_size as usize,
        )
    }

    /// Replaces the label of one stored scene; used to build corrupted fixtures.
    pub fn with_flipped_label(&self, index: usize, receiver: bool, item: usize) -> Result<Self> {
        let mut copy = self.clone();
        let start = copy.offsets[index] as usize;
        let pos = format::label_position(copy.record(index)?, receiver, item)?;
        copy.payload[start + pos] ^= 1;
        Ok(copy)
    }
}

/// Renders deterministic palette and texture masks for a config.
pub fn render_assets(cfg: &DatasetConfig) -> Result<(Palette, Vec<TextureMask>)> {
    let palette = Palette::hue_wheel(cfg.task.num_colors as usize)?;
    let masks = texture_table(
        cfg.task.num_textures as usize,
        cfg.render.mask_dim,
        cfg.texture_seed(),
    )?;
    Ok((palette, masks))
}

/// Examples encoded per parallel batch when streaming.
pub(crate) const CHUNK: usize = 2048;

/// Encodes every example in file order, in parallel batches, handing each
/// record to `sink` sequentially.
pub(crate) fn for_each_record(
    cfg: &DatasetConfig,
    part: &HoldoutPartition,
    mut sink: impl FnMut(&[u8]) -> Result<()>,
) -> Result<()> {
    for split in SplitKind::ALL {
        let count = cfg.examples_per_split.get(split);
        let mut start = 0;
        while start < count {
            let end = (start + CHUNK).min(count);
            let records = par::try_map_indices(end - start, |i| {
                let ex = build_example(cfg, part, split, start + i)?;
                Ok(format::encode_record(&ex))
            })?;
            for rec in &records {
                sink(rec)?;
            }
            start = end;
        }
    }
    Ok(())
}

pub fn build_dataset(cfg: &DatasetConfig) -> Result<DatasetFile> {
    cfg.validate()?;
    let part = holdout_for(cfg)?;
    let header = Header::new(cfg, &part)?;
    let total = cfg.examples_per_split.total();
    let mut offsets = Vec::with_capacity(total);
    let mut payload = Vec::with_capacity(header.payload_bytes as usize);
    for_each_record(cfg, &part, |rec| {
        offsets.push(payload.len() as u64);
        payload.extend_from_slice(rec);
        Ok(())
    })?;
    debug_assert_eq!(payload.len() as u64, header.payload_bytes);
    DatasetFile::from_parts(header, offsets, payload)
}

/// Writes one P6 image per scene of example `index` as
/// `<side>_<item>_<label>.ppm`.
pub fn export_ppm(ds: &DatasetFile, index: usize, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ex = ds.example(index)?;
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::with_capacity(ex.sender.len() + ex.receiver.len());
    for (side, items) in ex.sides() {
        for (i, item) in items.iter().enumerate() {
            let img = ds.render(&item.scene)?;
            let path = out_dir.join(format!("{side}_{i:03}_{}.ppm", item.label));
            fs::write(&path, img.to_ppm())?;
            written.push(path);
        }
    }
    Ok(written)
}

//! Rasterization of grid scenes.
//!
//! Every object is a square filling its cell. Objects differ only by color and
//! by a small binary texture mask tiled up to the cell size, so textures (not
//! outlines) carry the shape identity.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::derive_seed;
use crate::scene::{ColorId, GridScene, TextureId};

const MASK_RETRIES: usize = 10_000;

/// A `dim`×`dim` binary pattern, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TextureMask {
    dim: u8,
    bits: Vec<bool>,
}

impl TextureMask {
    pub fn new(dim: u8, bits: Vec<bool>) -> Result<Self> {
        if dim < 2 || bits.len() != dim as usize * dim as usize {
            return Err(Error::Config(format!(
                "mask of dim {dim} needs {} bits, got {}",
                dim as usize * dim as usize,
                bits.len()
            )));
        }
        Ok(TextureMask { dim, bits })
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.dim as usize + col]
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Strictly between 25% and 75% of the cells set.
    pub fn has_valid_density(&self) -> bool {
        let area = self.bits.len();
        let pop = self.popcount();
        4 * pop > area && 4 * pop < 3 * area
    }

    /// Bits packed MSB-first into bytes, hex encoded.
    pub fn to_hex(&self) -> String {
        self.bits
            .chunks(8)
            .map(|chunk| {
                let byte = chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)));
                format!("{byte:02x}")
            })
            .collect()
    }

    pub fn from_hex(dim: u8, hex: &str) -> Result<Self> {
        let area = dim as usize * dim as usize;
        let bad = || Error::Config(format!("invalid mask hex {hex:?} for dim {dim}"));
        if hex.len() != 2 * area.div_ceil(8) {
            return Err(bad());
        }
        let mut bits = Vec::with_capacity(area);
        for i in (0..hex.len()).step_by(2) {
            let byte =
                u8::from_str_radix(hex.get(i..i + 2).ok_or_else(bad)?, 16).map_err(|_| bad())?;
            for k in 0..8 {
                if bits.len() < area {
                    bits.push(byte & (0x80 >> k) != 0);
                }
            }
        }
        TextureMask::new(dim, bits)
    }
}

/// Deterministic, pairwise-distinct masks for textures `0..count`.
///
/// Each texture draws candidates from its own stream and resamples until the
/// density constraint holds and the mask differs from all lower ids.
pub fn texture_table(count: usize, dim: u8, texture_seed: u64) -> Result<Vec<TextureMask>> {
    if dim < 2 {
        return Err(Error::Config(format!("mask dim must be >= 2, got {dim}")));
    }
    let area = dim as usize * dim as usize;
    let mut masks: Vec<TextureMask> = Vec::with_capacity(count);
    for id in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(texture_seed, 0x7e57, id as u64));
        let mut accepted = None;
        for _ in 0..MASK_RETRIES {
            let bits: Vec<bool> = (0..area).map(|_| rng.random::<bool>()).collect();
            let mask = TextureMask { dim, bits };
            if mask.has_valid_density() && !masks.contains(&mask) {
                accepted = Some(mask);
                break;
            }
        }
        let mask = accepted.ok_or_else(|| {
            Error::Exhausted(format!(
                "no valid mask for texture {id} after {MASK_RETRIES} draws"
            ))
        })?;
        masks.push(mask);
    }
    Ok(masks)
}

/// The mask for one texture id; identical to entry `id` of [`texture_table`].
pub fn texture_mask(texture_id: TextureId, dim: u8, texture_seed: u64) -> Result<TextureMask> {
    let id = texture_id.0 as usize;
    let mut table = texture_table(id + 1, dim, texture_seed)?;
    Ok(table.swap_remove(id))
}

pub type Rgb = [u8; 3];

/// Evenly spaced hues at full saturation and value.
pub fn palette_color(color_id: ColorId, num_colors: usize) -> Result<Rgb> {
    let id = color_id.0 as usize;
    if id >= num_colors {
        return Err(Error::IdOutOfRange {
            kind: "color",
            id,
            size: num_colors,
        });
    }
    let h6 = id as f64 / num_colors as f64 * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let (r, g, b) = match sector as u32 % 6 {
        0 => (1.0, f, 0.0),
        1 => (1.0 - f, 1.0, 0.0),
        2 => (0.0, 1.0, f),
        3 => (0.0, 1.0 - f, 1.0),
        4 => (f, 0.0, 1.0),
        _ => (1.0, 0.0, 1.0 - f),
    };
    let to8 = |x: f64| (x * 255.0).round() as u8;
    Ok([to8(r), to8(g), to8(b)])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    colors: Vec<Rgb>,
}

impl Palette {
    pub fn hue_wheel(num_colors: usize) -> Result<Self> {
        let colors = (0..num_colors)
            .map(|i| palette_color(ColorId::checked(i, num_colors)?, num_colors))
            .collect::<Result<Vec<_>>>()?;
        Palette::from_colors(colors)
    }

    pub fn from_colors(colors: Vec<Rgb>) -> Result<Self> {
        for (i, c) in colors.iter().enumerate() {
            if *c == [0, 0, 0] {
                return Err(Error::Config(format!(
                    "palette entry {i} equals background"
                )));
            }
            if colors[..i].contains(c) {
                return Err(Error::Config(format!("palette entry {i} duplicates {c:?}")));
            }
        }
        Ok(Palette { colors })
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn get(&self, id: ColorId) -> Result<Rgb> {
        self.colors
            .get(id.0 as usize)
            .copied()
            .ok_or(Error::IdOutOfRange {
                kind: "color",
                id: id.0 as usize,
                size: self.colors.len(),
            })
    }
}

/// 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn black(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0; height * width * 3],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Binary portable pixmap (P6, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

pub fn render_scene(
    scene: &GridScene,
    palette: &Palette,
    masks: &[TextureMask],
    cell_size: usize,
) -> Result<Image> {
    let side = scene.grid_size() as usize * cell_size;
    let mut img = Image::black(side, side);
    for obj in scene.objects() {
        let rgb = palette.get(obj.spec.color)?;
        let mask = masks
            .get(obj.spec.texture.0 as usize)
            .ok_or(Error::IdOutOfRange {
                kind: "texture",
                id: obj.spec.texture.0 as usize,
                size: masks.len(),
            })?;
        let dim = mask.dim() as usize;
        if cell_size == 0 || !cell_size.is_multiple_of(dim) {
            return Err(Error::Config(format!(
                "cell size {cell_size} not a multiple of mask dim {dim}"
            )));
        }
        let scale = cell_size / dim;
        let top = obj.row as usize * cell_size;
        let left = obj.col as usize * cell_size;
        for y in 0..cell_size {
            let row_start = ((top + y) * side + left) * 3;
            for x in 0..cell_size {
                if mask.get(y / scale, x / scale) {
                    let i = row_start + x * 3;
                    img.data[i..i + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
    Ok(img)
}

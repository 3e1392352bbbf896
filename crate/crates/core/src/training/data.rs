use crate::error::{Error, Result};
use crate::metrics::{degrade, modcrop};
use crate::tensor::Tensor;
use crate::tiling::split_tiles;

/// Aligned `(input, target)` tiles. Inputs are the degraded images
/// (bicubic down by `s`, quantized, bicubic up by `s`, quantized); targets are
/// the corresponding high-resolution tiles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
}

impl TrainingSet {
    pub fn from_pairs(inputs: Vec<Tensor>, targets: Vec<Tensor>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape {
                op: "TrainingSet::from_pairs",
                axis: "pair count",
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        for (x, y) in inputs.iter().zip(&targets) {
            if x.dims() != y.dims() {
                return Err(Error::Shape {
                    op: "TrainingSet::from_pairs",
                    axis: "tile extent",
                    expected: x.len(),
                    found: y.len(),
                });
            }
        }
        Ok(TrainingSet { inputs, targets })
    }

    /// Degrades every image as a whole and cuts both versions with the same
    /// `tile` grid. Images too small for one tile after cropping to a
    /// multiple of `scale` are skipped with a warning.
    pub fn from_images(images: &[Tensor], tile: usize, scale: usize) -> Result<Self> {
        let mut set = TrainingSet::default();
        for (i, img) in images.iter().enumerate() {
            let (_, h, w) = img.chw()?;
            if h < tile.max(scale) || w < tile.max(scale) {
                log::warn!("image {i} ({h}x{w}) is smaller than one {tile}x{tile} tile; skipped");
                continue;
            }
            let hr = modcrop(img, scale)?;
            let (_, h, w) = hr.chw()?;
            if h < tile || w < tile {
                log::warn!("image {i} is smaller than one tile after cropping to a multiple of {scale}; skipped");
                continue;
            }
            let lr = degrade(&hr, scale)?;
            let (x, _) = split_tiles(&lr, tile)?;
            let (y, _) = split_tiles(&hr, tile)?;
            set.inputs.extend(x);
            set.targets.extend(y);
        }
        if set.is_empty() {
            return Err(Error::Empty("no training tiles could be cut from the dataset"));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn pair(&self, i: usize) -> (&Tensor, &Tensor) {
        (&self.inputs[i], &self.targets[i])
    }
}

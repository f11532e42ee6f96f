use super::idx::IdxImages;
use super::{Target, TaskBatch};
use crate::error::{Error, Result};
use crate::ndmath::{Matrix, Rng};

/// An image read as a sequence, `channels` values per step.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelSequence {
    pub channels: usize,
    pub values: Vec<f64>,
    pub permutation: Option<Vec<usize>>,
}

impl PixelSequence {
    pub fn len(&self) -> usize {
        self.values.len() / self.channels.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }
}

/// Flattens a `height x width x channels` image left to right, top to
/// bottom; step `t` then reads pixel `perm[t]`.
pub fn scanline_sequence(
    image: &[f64],
    height: usize,
    width: usize,
    channels: usize,
    perm: Option<&[usize]>,
) -> Result<PixelSequence> {
    let n = height * width;
    if image.len() != n * channels {
        return Err(Error::shape(
            "scanline_sequence",
            format!("{} values ({height}x{width}x{channels})", n * channels),
            image.len(),
        ));
    }
    let values = match perm {
        None => image.to_vec(),
        Some(p) => {
            if p.len() != n || !super::is_permutation(p) {
                return Err(Error::shape(
                    "scanline_sequence permutation",
                    format!("a permutation of {n} pixels"),
                    format!("{} entries", p.len()),
                ));
            }
            p.iter().flat_map(|&i| image[i * channels..(i + 1) * channels].iter().copied()).collect()
        }
    };
    Ok(PixelSequence { channels, values, permutation: perm.map(<[usize]>::to_vec) })
}

/// Labelled grayscale images fed one pixel per step.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelDataset {
    pub images: IdxImages,
    pub labels: Vec<u8>,
    pub permutation: Option<Vec<usize>>,
    pub classes: usize,
}

impl PixelDataset {
    pub fn new(images: IdxImages, labels: Vec<u8>, permutation: Option<Vec<usize>>) -> Result<Self> {
        if images.count != labels.len() {
            return Err(Error::shape("PixelDataset", format!("{} labels", images.count), labels.len()));
        }
        if images.count == 0 {
            return Err(Error::config("data", "dataset has no images"));
        }
        let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1).max(10);
        Ok(PixelDataset { images, labels, permutation, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Batch of the listed images, scored at the last step.
    pub fn batch(&self, indices: &[usize]) -> Result<TaskBatch> {
        let (h, w) = (self.images.rows, self.images.cols);
        let seqs = indices
            .iter()
            .map(|&i| scanline_sequence(&self.images.image_f64(i), h, w, 1, self.permutation.as_deref()))
            .collect::<Result<Vec<_>>>()?;
        let steps = h * w;
        let inputs = (0..steps)
            .map(|t| {
                let data = seqs.iter().map(|s| s.values[t]).collect();
                Matrix::from_vec(indices.len(), 1, data).expect("one channel")
            })
            .collect();
        let labels = vec![indices.iter().map(|&i| self.labels[i] as usize).collect()];
        Ok(TaskBatch {
            inputs,
            target: Target::Classes { steps: vec![steps - 1], labels, classes: self.classes },
        })
    }

    /// `batch` indices drawn uniformly with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut Rng) -> Vec<usize> {
        (0..batch).map(|_| rng.below(self.len() as u64) as usize).collect()
    }
}

// Seven-segment strokes as (x0, y0, x1, y1) in a 12 x 20 glyph box.
const SEGMENTS: [(usize, usize, usize, usize); 7] = [
    (0, 0, 12, 0),   // top
    (12, 0, 12, 10), // upper right
    (12, 10, 12, 20), // lower right
    (0, 20, 12, 20), // bottom
    (0, 10, 0, 20),  // lower left
    (0, 0, 0, 10),   // upper left
    (0, 10, 12, 10), // middle
];

const DIGITS: [u8; 10] = [
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110, 0b1101101, 0b1111101, 0b0000111,
    0b1111111, 0b1101111,
];

/// Digit-like 28x28 glyphs: seven-segment digits with jittered position,
/// stroke intensity and background noise. Labels cycle through `0..10`
/// before shuffling so classes are balanced.
pub fn synthetic_digits(count: usize, rng: &mut Rng) -> (IdxImages, Vec<u8>) {
    let (rows, cols) = (28, 28);
    let mut data = vec![0u8; count * rows * cols];
    let mut labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
    for i in (1..count).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        labels.swap(i, j);
    }
    for (n, &label) in labels.iter().enumerate() {
        let img = &mut data[n * rows * cols..(n + 1) * rows * cols];
        for px in img.iter_mut() {
            if rng.uniform() < 0.05 {
                *px = rng.below(60) as u8;
            }
        }
        let ox = 6 + rng.below(5) as usize;
        let oy = 2 + rng.below(5) as usize;
        let ink = 180 + rng.below(76) as u8;
        for (s, &(x0, y0, x1, y1)) in SEGMENTS.iter().enumerate() {
            if DIGITS[label as usize] & (1 << s) == 0 {
                continue;
            }
            for y in y0..=y1 {
                for x in x0..=x1 {
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let (yy, xx) = (oy + y + dy, ox + x + dx);
                        if yy < rows && xx < cols {
                            img[yy * cols + xx] = ink;
                        }
                    }
                }
            }
        }
    }
    (IdxImages { count, rows, cols, data }, labels)
}

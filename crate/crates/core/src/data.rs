//! Datasets: IDX files, batching, and synthetic clusters.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ArError, Result};
use crate::math::Vector;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const MNIST_CLASSES: usize = 10;

/// Raw contents of an image IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    /// Images as vectors scaled to `[0, 1]`.
    pub fn to_vectors(&self) -> Vec<Vector> {
        let size = self.rows * self.cols;
        if size == 0 {
            return vec![Vector::default(); self.count];
        }
        self.pixels
            .chunks_exact(size)
            .map(|px| Vector::new(px.iter().map(|&b| f64::from(b) / 255.0).collect()))
            .collect()
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

fn read_header(path: &Path, bytes: &[u8], magic: u32, ndims: usize) -> Result<Vec<usize>> {
    let header = 4 + 4 * ndims;
    if bytes.len() < 4 {
        return Err(ArError::Length {
            path: path.into(),
            expected: header,
            found: bytes.len(),
        });
    }
    let found = read_u32(bytes, 0);
    if found != magic {
        return Err(ArError::Format {
            path: path.into(),
            message: format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"),
        });
    }
    if bytes.len() < header {
        return Err(ArError::Length {
            path: path.into(),
            expected: header,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|k| read_u32(bytes, 4 + 4 * k) as usize)
        .collect();
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() != expected {
        return Err(ArError::Length {
            path: path.into(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(dims)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| ArError::io(path, e))
}

pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_file(path)?;
    let dims = read_header(path, &bytes, IMAGE_MAGIC, 3)?;
    Ok(IdxImages {
        count: dims[0],
        rows: dims[1],
        cols: dims[2],
        pixels: bytes[16..].to_vec(),
    })
}

/// Labels, each checked to lie in `0..10`.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    read_header(path, &bytes, LABEL_MAGIC, 1)?;
    let labels = bytes[8..].to_vec();
    if let Some((i, &l)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| usize::from(l) >= MNIST_CLASSES)
    {
        return Err(ArError::Data {
            path: path.into(),
            message: format!("label {l} at index {i} is out of range 0-9"),
        });
    }
    Ok(labels)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| ArError::io(path, e))
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    if images.pixels.len() != images.count * images.rows * images.cols {
        return Err(ArError::shape(
            "write_idx_images",
            format!("{}x{}x{}", images.count, images.rows, images.cols),
            format!("{} bytes", images.pixels.len()),
        ));
    }
    let mut bytes = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGE_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend_from_slice(&images.pixels);
    write_file(path, &bytes)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    write_file(path, &bytes)
}

pub fn one_hot(label: usize, classes: usize) -> Vector {
    let mut v = Vector::zeros(classes);
    v[label] = 1.0;
    v
}

/// Inputs in `[0, 1]` with one-hot targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vector>,
    targets: Vec<Vector>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vector>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(ArError::shape(
                "Dataset",
                format!("{} inputs", inputs.len()),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(d) = inputs.first().map(Vector::dim) {
            if let Some(i) = inputs.iter().position(|x| x.dim() != d) {
                return Err(ArError::shape(
                    "Dataset",
                    format!("input dim {d}"),
                    format!("input {i} dim {}", inputs[i].dim()),
                ));
            }
        }
        if let Some(i) = inputs
            .iter()
            .position(|x| x.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(ArError::Config(format!(
                "input {i} has entries outside [0, 1]"
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l >= classes) {
            return Err(ArError::Config(format!(
                "label {} at index {i} exceeds {classes} classes",
                labels[i]
            )));
        }
        let targets = labels.iter().map(|&l| one_hot(l, classes)).collect();
        Ok(Self {
            inputs,
            targets,
            labels,
        })
    }

    pub fn from_idx(images: &IdxImages, labels: &[u8]) -> Result<Self> {
        Self::new(
            images.to_vectors(),
            labels.iter().map(|&l| usize::from(l)).collect(),
            MNIST_CLASSES,
        )
    }

    pub fn inputs(&self) -> &[Vector] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vector] {
        &self.targets
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.inputs.first().map(Vector::dim)
    }

    pub fn classes(&self) -> Option<usize> {
        self.targets.first().map(Vector::dim)
    }

    /// The first `n` items (all of them if `n` exceeds the count).
    pub fn subset(&self, n: usize) -> Dataset {
        let n = n.min(self.count());
        Dataset {
            inputs: self.inputs[..n].to_vec(),
            targets: self.targets[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Paths of the standard image and label files of a split.
pub fn split_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let p = split.prefix();
    (
        dir.join(format!("{p}-images-idx3-ubyte")),
        dir.join(format!("{p}-labels-idx1-ubyte")),
    )
}

/// Loads one split of an MNIST-layout directory (MNIST or Fashion-MNIST).
pub fn load_mnist_split(dir: &Path, split: Split) -> Result<Dataset> {
    let (img_path, lbl_path) = split_paths(dir, split);
    let images = load_idx_images(&img_path)?;
    let labels = load_idx_labels(&lbl_path)?;
    if images.count != labels.len() {
        return Err(ArError::Data {
            path: lbl_path,
            message: format!("{} labels for {} images", labels.len(), images.count),
        });
    }
    Dataset::from_idx(&images, &labels)
}

/// Per-epoch visiting order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub order: Vec<usize>,
    pub seed: u64,
}

impl BatchPlan {
    /// Shuffles `0..count` with a stream derived from `seed` and `epoch`.
    pub fn new(count: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(ArError::Config("batch size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            batch_size,
            order,
            seed,
        })
    }

    /// Index slices in visiting order; the last may be short.
    pub fn chunks(&self) -> std::slice::Chunks<'_, usize> {
        self.order.chunks(self.batch_size)
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

/// `(inputs, targets)` per batch, following `plan.order`.
pub fn batches<'a>(
    dataset: &'a Dataset,
    plan: &'a BatchPlan,
) -> Result<impl Iterator<Item = (Vec<&'a Vector>, Vec<&'a Vector>)> + 'a> {
    if plan.order.len() != dataset.count() {
        return Err(ArError::Config(format!(
            "plan covers {} items, dataset has {}",
            plan.order.len(),
            dataset.count()
        )));
    }
    Ok(plan.chunks().map(|idx| {
        (
            idx.iter().map(|&i| &dataset.inputs[i]).collect(),
            idx.iter().map(|&i| &dataset.targets[i]).collect(),
        )
    }))
}

/// Gaussian clusters: item `i` belongs to class `i % classes`, centred on the
/// basis vector `e_class` with standard deviation 0.1, clamped to `[0, 1]`.
pub fn synthetic_dataset(seed: u64, n: usize, in_dim: usize, classes: usize) -> Result<Dataset> {
    if classes < 2 || n < classes {
        return Err(ArError::Config(format!(
            "need n >= classes >= 2, got n={n}, classes={classes}"
        )));
    }
    if in_dim < classes {
        return Err(ArError::Config(format!(
            "synthetic clusters need in_dim >= classes, got {in_dim} < {classes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).expect("valid std");
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let inputs = labels
        .iter()
        .map(|&c| {
            Vector::new(
                (0..in_dim)
                    .map(|d| {
                        let mean: f64 = if d == c { 1.0 } else { 0.0 };
                        (mean + noise.sample(&mut rng)).clamp(0.0, 1.0)
                    })
                    .collect(),
            )
        })
        .collect();
    Dataset::new(inputs, labels, classes)
}

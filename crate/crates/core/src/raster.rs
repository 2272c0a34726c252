//! Fixed-shape multi-channel 2D histograms of compressed node coordinates.
//!
//! Channel `k` is the histogram of dimensions `(2k, 2k+1)`: dimension `2k`
//! indexes columns and `2k+1` rows. Every image of a dataset shares one
//! square [`ImageSpec`] whose side is `ceil(range * resolution)` bins.

use std::fs;
use std::io::{self, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compress::{ChannelLayout, CompressedNodeVectors};
use crate::container::{ContainerError, Record, TensorContainer, TensorData};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("vector width {0} is odd; channels are dimension pairs")]
    OddWidth(usize),
    #[error("graph {graph_id} has layout {found:?}, image spec expects {expected:?}")]
    LayoutMismatch { graph_id: usize, expected: ChannelLayout, found: ChannelLayout },
    #[error("no coordinates to compute an extent from")]
    Empty,
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("{images} images but {labels} labels")]
    LabelCount { images: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    /// Bins per coordinate unit.
    pub resolution: f64,
    pub min: f64,
    pub max: f64,
    /// Bins per axis (images are `size x size`).
    pub size: usize,
    pub layout: ChannelLayout,
}

impl ImageSpec {
    /// Side length `ceil(|max - min| * resolution)`, at least one bin.
    pub fn from_extent(min: f64, max: f64, resolution: f64, layout: ChannelLayout) -> Result<Self, RasterError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(RasterError::BadResolution(resolution));
        }
        let raw = (max - min).abs() * resolution;
        // absorb rounding such as 2.0 * 14.0 landing a hair above 28
        let size = ((raw - 1e-9).ceil() as usize).max(1);
        Ok(Self { resolution, min: min.min(max), max: min.max(max), size, layout })
    }

    pub fn channels(&self) -> usize {
        self.layout.total()
    }

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels(), self.size, self.size)
    }

    pub fn bin_width(&self) -> f64 {
        if self.max > self.min {
            (self.max - self.min) / self.size as f64
        } else {
            1.0 / self.resolution
        }
    }

    /// Half-open bins except the last, which also takes `max`. `None` for
    /// coordinates outside the extent.
    pub fn bin(&self, x: f64) -> Option<usize> {
        if !(x >= self.min && x <= self.max) {
            return None;
        }
        if self.max == self.min {
            return Some(0);
        }
        let t = (x - self.min) / (self.max - self.min) * self.size as f64;
        Some((t.floor() as usize).min(self.size - 1))
    }
}

/// One global extent over every coordinate of the selected graphs (all
/// graphs when `indices` is `None`).
pub fn compute_spec<T: Scalar>(
    vectors: &[CompressedNodeVectors<T>],
    resolution: f64,
    indices: Option<&[usize]>,
) -> Result<ImageSpec, RasterError> {
    let first = vectors.first().ok_or(RasterError::Empty)?;
    let layout = first.layout();
    for v in vectors {
        if v.width() % 2 == 1 {
            return Err(RasterError::OddWidth(v.width()));
        }
        if v.layout() != layout {
            return Err(RasterError::LayoutMismatch { graph_id: v.graph_id, expected: layout, found: v.layout() });
        }
    }
    let all: Vec<usize> = (0..vectors.len()).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &i in indices.unwrap_or(&all) {
        for x in vectors[i].values() {
            let x = x.as_f64();
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if lo > hi {
        return Err(RasterError::Empty);
    }
    ImageSpec::from_extent(lo, hi, resolution, layout)
}

/// Raw node counts, `channels x size x size`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphImage {
    pub graph_id: usize,
    pub label: usize,
    pub channels: usize,
    pub size: usize,
    pub counts: Vec<u32>,
}

impl GraphImage {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.size, self.size)
    }

    pub fn channel(&self, c: usize) -> &[u32] {
        let plane = self.size * self.size;
        &self.counts[c * plane..(c + 1) * plane]
    }

    pub fn channel_sum(&self, c: usize) -> u64 {
        self.channel(c).iter().map(|&x| x as u64).sum()
    }

    pub fn at(&self, c: usize, row: usize, col: usize) -> u32 {
        self.counts[(c * self.size + row) * self.size + col]
    }

    /// Counts as reals; with `normalize` each nonempty channel is divided by
    /// its total so it sums to one.
    pub fn to_tensor<T: Scalar>(&self, normalize: bool) -> Vec<T> {
        let plane = self.size * self.size;
        let mut out: Vec<T> = self.counts.iter().map(|&x| T::of(x as f64)).collect();
        if normalize {
            for c in 0..self.channels {
                let total = self.channel_sum(c);
                if total > 0 {
                    let t = T::of(total as f64);
                    out[c * plane..(c + 1) * plane].iter_mut().for_each(|x| *x /= t);
                }
            }
        }
        out
    }
}

pub fn rasterize_graph<T: Scalar>(
    vectors: &CompressedNodeVectors<T>,
    spec: &ImageSpec,
    label: usize,
) -> Result<GraphImage, RasterError> {
    if vectors.width() % 2 == 1 {
        return Err(RasterError::OddWidth(vectors.width()));
    }
    if vectors.layout() != spec.layout {
        return Err(RasterError::LayoutMismatch {
            graph_id: vectors.graph_id,
            expected: spec.layout,
            found: vectors.layout(),
        });
    }
    let (channels, size) = (spec.channels(), spec.size);
    let mut counts = vec![0u32; channels * size * size];
    for node in 0..vectors.node_count() {
        for c in 0..channels {
            let col = spec.bin(vectors.coordinate(node, 2 * c).as_f64());
            let row = spec.bin(vectors.coordinate(node, 2 * c + 1).as_f64());
            if let (Some(row), Some(col)) = (row, col) {
                counts[(c * size + row) * size + col] += 1;
            }
        }
    }
    Ok(GraphImage { graph_id: vectors.graph_id, label, channels, size, counts })
}

/// Rasterizes every graph with the shared spec, preserving order.
pub fn rasterize_dataset<T: Scalar>(
    vectors: &[CompressedNodeVectors<T>],
    labels: &[usize],
    spec: &ImageSpec,
) -> Result<Vec<GraphImage>, RasterError> {
    if vectors.len() != labels.len() {
        return Err(RasterError::LabelCount { images: vectors.len(), labels: labels.len() });
    }
    vectors.par_iter().zip(labels).map(|(v, &l)| rasterize_graph(v, spec, l)).collect()
}

/// One 8-bit grayscale PNG per channel, brightest pixel = largest count in
/// that channel. Files are named `<prefix>_c<k>.png`.
pub fn write_channel_pngs(image: &GraphImage, dir: &Path, prefix: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for c in 0..image.channels {
        let plane = image.channel(c);
        let peak = plane.iter().copied().max().unwrap_or(0).max(1) as f64;
        let pixels: Vec<u8> = plane.iter().map(|&x| (x as f64 / peak * 255.0).round() as u8).collect();
        let file = fs::File::create(dir.join(format!("{prefix}_c{c}.png")))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), image.size as u32, image.size as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(io::Error::other)?;
        writer.write_image_data(&pixels).map_err(io::Error::other)?;
    }
    Ok(())
}

pub fn images_to_container(images: &[GraphImage]) -> TensorContainer {
    let mut c = TensorContainer::new();
    for im in images {
        c.push(Record::new(
            im.graph_id as u64,
            format!("image/{}", im.graph_id),
            vec![im.channels, im.size, im.size],
            TensorData::U32(im.counts.clone()),
        ));
    }
    let labels: Vec<u32> = images.iter().map(|im| im.label as u32).collect();
    c.push(Record::new(u64::MAX, "labels", vec![labels.len()], TensorData::U32(labels)));
    c
}

pub fn images_from_container(c: &TensorContainer) -> Result<Vec<GraphImage>, ContainerError> {
    let labels = c.get("labels")?.to_u32()?.to_vec();
    let records: Vec<&Record> = c.records.iter().filter(|r| r.name.starts_with("image/")).collect();
    records
        .into_iter()
        .zip(labels)
        .map(|(r, label)| {
            if r.shape.len() != 3 {
                return Err(ContainerError::RankMismatch { name: r.name.clone(), rank: r.shape.len(), expected: 3 });
            }
            Ok(GraphImage {
                graph_id: r.id as usize,
                label: label as usize,
                channels: r.shape[0],
                size: r.shape[1],
                counts: r.to_u32()?.to_vec(),
            })
        })
        .collect()
}

// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! Labelled image datasets and the IDX / CIFAR-10 binary readers.

use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::FeatureMap;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

/// Images in `[0, 1]` with one class index per image.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: FeatureMap,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: FeatureMap, labels: Vec<usize>) -> Result<Self> {
        if images.batch != labels.len() {
            return Err(Error::dims(
                "Dataset",
                format!("{} images, {} labels", images.batch, labels.len()),
            ));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Images and labels at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> (FeatureMap, Vec<usize>) {
        let len = self.images.map_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(&self.images.data[i * len..(i + 1) * len]);
        }
        let images = FeatureMap {
            batch: indices.len(),
            h: self.images.h,
            w: self.images.w,
            c: self.images.c,
            data,
        };
        (images, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// The first `n` examples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let (images, labels) = self.gather(&idx);
        Dataset { images, labels }
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Format {
                offset: self.pos,
                msg: format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            }),
        }
    }

    fn u32_be(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, want: u32) -> Result<()> {
        let offset = self.pos;
        let got = self.u32_be("magic number")?;
        if got != want {
            return Err(Error::Format {
                offset,
                msg: format!("bad magic 0x{got:08x}, expected 0x{want:08x}"),
            });
        }
        Ok(())
    }
}

/// Parses IDX image and label buffers.
pub fn parse_mnist_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes: images, pos: 0 };
    r.magic(IDX_IMAGES)?;
    let n = r.u32_be("image count")? as usize;
    let rows = r.u32_be("row count")? as usize;
    let cols = r.u32_be("column count")? as usize;
    let pixels = r.take(n * rows * cols, "pixel data")?;

    let mut l = Reader { bytes: labels, pos: 0 };
    l.magic(IDX_LABELS)?;
    let count_offset = l.pos;
    let n_labels = l.u32_be("label count")? as usize;
    if n_labels != n {
        return Err(Error::Format {
            offset: count_offset,
            msg: format!("{n_labels} labels for {n} images"),
        });
    }
    let label_bytes = l.take(n, "label data")?;

    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Dataset::new(
        FeatureMap::batched(n, rows, cols, 1, data)?,
        label_bytes.iter().map(|&b| usize::from(b)).collect(),
    )
}

pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    parse_mnist_idx(&std::fs::read(images_path)?, &std::fs::read(labels_path)?)
}

/// Parses CIFAR-10 binary records: a label byte then R, G, B planes of 32×32.
pub fn parse_cifar_bin(bytes: &[u8]) -> Result<Dataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Format {
            offset: bytes.len() - bytes.len() % CIFAR_RECORD,
            msg: format!("length {} is not a multiple of {CIFAR_RECORD}", bytes.len()),
        });
    }
    let n = bytes.len() / CIFAR_RECORD;
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut data = vec![0.0; n * 3 * plane];
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(Error::Format {
                offset: i * CIFAR_RECORD,
                msg: format!("label {} out of range", rec[0]),
            });
        }
        labels.push(usize::from(rec[0]));
        let out = &mut data[i * 3 * plane..(i + 1) * 3 * plane];
        for ch in 0..3 {
            for (p, &v) in rec[1 + ch * plane..1 + (ch + 1) * plane].iter().enumerate() {
                out[p * 3 + ch] = f64::from(v) / 255.0;
            }
        }
    }
    Dataset::new(FeatureMap::batched(n, CIFAR_SIDE, CIFAR_SIDE, 3, data)?, labels)
}

pub fn load_cifar_bin(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_cifar_bin(&std::fs::read(path)?)
}

/// IDX encoding of `dataset` (single channel, pixels rounded to bytes).
pub fn encode_mnist_idx(dataset: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let im = &dataset.images;
    if im.c != 1 {
        return Err(Error::InvalidArgument(format!("IDX images need 1 channel, got {}", im.c)));
    }
    let mut images = Vec::with_capacity(16 + im.data.len());
    for v in [IDX_IMAGES, im.batch as u32, im.h as u32, im.w as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(im.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut labels = Vec::with_capacity(8 + dataset.len());
    labels.extend_from_slice(&IDX_LABELS.to_be_bytes());
    labels.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    for &l in &dataset.labels {
        labels.push(u8::try_from(l).map_err(|_| Error::InvalidArgument(format!("label {l}")))?);
    }
    Ok((images, labels))
}

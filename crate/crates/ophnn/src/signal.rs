//! Sample-major multichannel signal storage shared by datasets, rollouts
//! and metrics.

use crate::error::{Error, Result};

/// A length-N sequence of `channels`-dimensional samples, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Channels {
    channels: usize,
    data: Vec<f64>,
}

impl Channels {
    pub fn new(channels: usize) -> Self {
        assert!(channels >= 1, "channel count must be >= 1");
        Self {
            channels,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(channels: usize, samples: usize) -> Self {
        assert!(channels >= 1);
        Self {
            channels,
            data: Vec::with_capacity(channels * samples),
        }
    }

    pub fn from_flat(channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.len() % channels != 0 {
            return Err(Error::invalid(format!(
                "flat signal of length {} is not a multiple of {} channels",
                data.len(),
                channels
            )));
        }
        Ok(Self { channels, data })
    }

    /// Single-channel sequence from a scalar series.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            channels: 1,
            data: values.to_vec(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.channels..(k + 1) * self.channels]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.channels..(k + 1) * self.channels]
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.channels, "sample width");
        self.data.extend_from_slice(row);
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Contiguous sample range as a new signal.
    pub fn slice(&self, start: usize, end: usize) -> Channels {
        Channels {
            channels: self.channels,
            data: self.data[start * self.channels..end * self.channels].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Per-channel means.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        let mut m = vec![0.0; self.channels];
        for row in self.rows() {
            for (acc, &v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut m {
            *v /= n;
        }
        m
    }

    /// Per-channel population standard deviations (divide by N).
    pub fn std_pop(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        let mean = self.mean();
        let mut s = vec![0.0; self.channels];
        for row in self.rows() {
            for ((acc, &v), &m) in s.iter_mut().zip(row).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        for v in &mut s {
            *v = (*v / n).sqrt();
        }
        s
    }
}

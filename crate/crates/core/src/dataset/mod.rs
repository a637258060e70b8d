//! Labelled multichannel series with subject identities, a synthetic
//! spectral-drift generator, subject-level splits and the BTSD file format.

pub mod btsd;
pub mod drift;
pub mod split;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub use btsd::{read_btsd, write_btsd};
pub use drift::{generate, ClassTemplate, DriftSpec, Peak};
pub use split::{split_by_subject, Part, SplitLevel, SplitPlan, SplitPolicy};

/// `x` is `[N, T, C]`; `labels` and `subjects` have one entry per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesBatch {
    pub x: Tensor,
    pub labels: Vec<usize>,
    pub subjects: Vec<usize>,
    pub num_classes: usize,
    pub num_subjects: usize,
}

impl TimeSeriesBatch {
    pub fn new(x: Tensor, labels: Vec<usize>, subjects: Vec<usize>, num_classes: usize, num_subjects: usize) -> Result<Self> {
        if x.ndim() != 3 {
            return Err(Error::dim(format!("series must be [N, T, C], got {:?}", x.shape())));
        }
        let n = x.shape()[0];
        if labels.len() != n || subjects.len() != n {
            return Err(Error::dim(format!("{n} samples but {} labels and {} subjects", labels.len(), subjects.len())));
        }
        if let Some(y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Validation(format!("label {y} out of range for {num_classes} classes")));
        }
        if let Some(s) = subjects.iter().find(|&&s| s >= num_subjects) {
            return Err(Error::Validation(format!("subject {s} out of range for {num_subjects} subjects")));
        }
        Ok(TimeSeriesBatch { x, labels, subjects, num_classes, num_subjects })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn length(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.x.shape()[2]
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> TimeSeriesBatch {
        let row = self.length() * self.channels();
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            data.extend_from_slice(&self.x.data()[i * row..(i + 1) * row]);
        }
        TimeSeriesBatch {
            x: Tensor::new(vec![indices.len(), self.length(), self.channels()], data).expect("row-aligned copy"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            subjects: indices.iter().map(|&i| self.subjects[i]).collect(),
            num_classes: self.num_classes,
            num_subjects: self.num_subjects,
        }
    }

    /// Distinct subject ids in ascending order.
    pub fn subject_ids(&self) -> Vec<usize> {
        let mut ids = self.subjects.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

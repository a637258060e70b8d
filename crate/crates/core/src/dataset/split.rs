//! Subject-disjoint train/validation/test partitions.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TimeSeriesBatch;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitPolicy {
    /// Fractions of the subjects; floors per part, remainder to train.
    Ratios { train: f64, val: f64, test: f64 },
    /// Subject counts; must not exceed the number of subjects.
    Counts { train: usize, val: usize, test: usize },
    /// Named subject ids.
    Explicit { train: Vec<usize>, val: Vec<usize>, test: Vec<usize> },
    /// Sample-level split ignoring subjects (subject-dependent evaluation).
    SampleRatios { train: f64, val: f64, test: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitLevel {
    Subject,
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
}

/// Ids in `train`/`val`/`test` are subject ids at subject level and sample
/// indices at sample level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    pub level: SplitLevel,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    pub fn part(&self, part: Part) -> &[usize] {
        match part {
            Part::Train => &self.train,
            Part::Val => &self.val,
            Part::Test => &self.test,
        }
    }

    /// Errors unless the three parts are pairwise disjoint.
    pub fn check_disjoint(&self) -> Result<()> {
        let sets: Vec<BTreeSet<usize>> = [&self.train, &self.val, &self.test].iter().map(|v| v.iter().copied().collect()).collect();
        for (a, b, name) in [(0, 1, "train/val"), (0, 2, "train/test"), (1, 2, "val/test")] {
            if let Some(x) = sets[a].intersection(&sets[b]).next() {
                return Err(Error::Validation(format!("{name} parts share id {x}")));
            }
        }
        Ok(())
    }

    /// Sample indices of `part` in `batch`, in ascending order.
    pub fn indices(&self, batch: &TimeSeriesBatch, part: Part) -> Vec<usize> {
        let ids: BTreeSet<usize> = self.part(part).iter().copied().collect();
        match self.level {
            SplitLevel::Subject => (0..batch.len()).filter(|&i| ids.contains(&batch.subjects[i])).collect(),
            SplitLevel::Sample => ids.into_iter().filter(|&i| i < batch.len()).collect(),
        }
    }

    pub fn select(&self, batch: &TimeSeriesBatch, part: Part) -> TimeSeriesBatch {
        batch.select(&self.indices(batch, part))
    }
}

fn check_ratios(train: f64, val: f64, test: f64) -> Result<()> {
    if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r)) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("split ratios {train}/{val}/{test} must be in [0, 1] and sum to 1")));
    }
    Ok(())
}

fn carve(mut ids: Vec<usize>, counts: [usize; 3], seed: u64) -> [Vec<usize>; 3] {
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = ids[..counts[1]].to_vec();
    let test = ids[counts[1]..counts[1] + counts[2]].to_vec();
    let train = ids[counts[1] + counts[2]..].to_vec();
    let sorted = |mut v: Vec<usize>| {
        v.sort_unstable();
        v
    };
    [sorted(train), sorted(val), sorted(test)]
}

/// Partition of `batch` under `policy`. Every subject's samples land in a
/// single part except under [`SplitPolicy::SampleRatios`].
pub fn split_by_subject(batch: &TimeSeriesBatch, policy: &SplitPolicy, seed: u64) -> Result<SplitPlan> {
    let subjects = batch.subject_ids();
    let n = subjects.len();
    let plan = match policy {
        SplitPolicy::Ratios { train, val, test } => {
            check_ratios(*train, *val, *test)?;
            let nv = (val * n as f64 + 1e-9).floor() as usize;
            let nt = (test * n as f64 + 1e-9).floor() as usize;
            let [tr, va, te] = carve(subjects, [0, nv, nt], seed);
            SplitPlan { level: SplitLevel::Subject, train: tr, val: va, test: te }
        }
        SplitPolicy::Counts { train, val, test } => {
            if train + val + test > n {
                return Err(Error::Validation(format!("{} subjects requested but only {n} present", train + val + test)));
            }
            let [tr, va, te] = carve(subjects, [0, *val, *test], seed);
            SplitPlan { level: SplitLevel::Subject, train: tr[..*train].to_vec(), val: va, test: te }
        }
        SplitPolicy::Explicit { train, val, test } => {
            let present: BTreeSet<usize> = subjects.into_iter().collect();
            for id in train.iter().chain(val).chain(test) {
                if !present.contains(id) {
                    return Err(Error::Validation(format!("subject {id} has no samples")));
                }
            }
            SplitPlan { level: SplitLevel::Subject, train: train.clone(), val: val.clone(), test: test.clone() }
        }
        SplitPolicy::SampleRatios { train, val, test } => {
            check_ratios(*train, *val, *test)?;
            let m = batch.len();
            let nv = (val * m as f64 + 1e-9).floor() as usize;
            let nt = (test * m as f64 + 1e-9).floor() as usize;
            let [tr, va, te] = carve((0..m).collect(), [0, nv, nt], seed);
            SplitPlan { level: SplitLevel::Sample, train: tr, val: va, test: te }
        }
    };
    plan.check_disjoint()?;
    Ok(plan)
}

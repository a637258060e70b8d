//! Frequency-band discriminability: task separation of band power relative to
//! its spread across subjects.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::fft;
use crate::numcore::Tensor;

/// Denominator guard.
pub const FBD_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbdConfig {
    /// Sampling rate of the series; with `fs = T` frequencies are in DFT bins.
    pub fs: f64,
    /// Width of each frequency bin, in the units of `fs`.
    pub bin_hz: f64,
    /// Half-open frequency range `[lo, hi)` of bin lower edges averaged into
    /// the aggregate. `None` averages every bin.
    pub band: Option<(f64, f64)>,
}

impl Default for FbdConfig {
    fn default() -> Self {
        FbdConfig { fs: 128.0, bin_hz: 2.0, band: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbdReport {
    /// Lower edge of each bin.
    pub bin_lo: Vec<f64>,
    pub bin_hz: f64,
    pub intra: Vec<f64>,
    pub inter: Vec<f64>,
    pub fbd: Vec<f64>,
    pub aggregate: f64,
    pub band: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl FbdReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,freq_lo,freq_hi,intra,inter,fbd\n");
        for b in 0..self.fbd.len() {
            s.push_str(&format!("{b},{},{},{},{},{}\n", self.bin_lo[b], self.bin_lo[b] + self.bin_hz, self.intra[b], self.inter[b], self.fbd[b]));
        }
        s
    }
}

/// Per-sample band powers `[N][bins]`: `|DFT|^2` summed inside each bin and
/// averaged over channels. Returns the powers and the bin lower edges.
pub fn band_powers(x: &Tensor, cfg: &FbdConfig) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if x.ndim() != 3 {
        return Err(Error::dim(format!("fbd expects [N, T, C], got {:?}", x.shape())));
    }
    if !(cfg.fs > 0.0 && cfg.bin_hz > 0.0) {
        return Err(Error::config(format!("fs {} and bin width {} must be positive", cfg.fs, cfg.bin_hz)));
    }
    let (n, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if t < 2 {
        return Err(Error::dim("fbd needs at least two time steps"));
    }
    let k = fft::rfft_bins(t);
    let bin_of: Vec<usize> = (0..k).map(|j| ((j as f64 * cfg.fs / t as f64) / cfg.bin_hz + 1e-9).floor() as usize).collect();
    let nb = bin_of[k - 1] + 1;
    // [N, C, T] rows for the transform
    let mut rows = vec![0.0; n * c * t];
    for i in 0..n {
        for tt in 0..t {
            for ch in 0..c {
                rows[(i * c + ch) * t + tt] = x.data()[(i * t + tt) * c + ch];
            }
        }
    }
    let z = fft::rfft(&Tensor::new(vec![n, c, t], rows)?)?;
    let mut out = vec![vec![0.0; nb]; n];
    for (i, row) in out.iter_mut().enumerate() {
        for ch in 0..c {
            for j in 0..k {
                let f = (i * c + ch) * k + j;
                row[bin_of[j]] += (z.re()[f].powi(2) + z.im()[f].powi(2)) / c as f64;
            }
        }
    }
    Ok((out, (0..nb).map(|b| b as f64 * cfg.bin_hz).collect()))
}

/// Intra, Inter and FBD from per-(class, subject) mean powers.
fn discriminability(cells: &BTreeMap<(usize, usize), Vec<f64>>, nb: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<String>)> {
    let mut by_class: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
    for ((y, _), p) in cells {
        by_class.entry(*y).or_default().push(p);
    }
    let mut warnings = Vec::new();
    let mut intra = vec![0.0; nb];
    let mut counted = 0;
    let mut means = Vec::new();
    for (y, subj) in &by_class {
        let m = subj.len() as f64;
        let mean: Vec<f64> = (0..nb).map(|b| subj.iter().map(|p| p[b]).sum::<f64>() / m).collect();
        if subj.len() < 2 {
            warnings.push(format!("class {y} has one subject and is left out of Intra"));
        } else {
            counted += 1;
            for b in 0..nb {
                let var = subj.iter().map(|p| (p[b] - mean[b]).powi(2)).sum::<f64>() / m;
                intra[b] += var.sqrt();
            }
        }
        means.push(mean);
    }
    if counted == 0 {
        return Err(Error::Validation("no class has two or more subjects; Intra is undefined".into()));
    }
    intra.iter_mut().for_each(|v| *v /= counted as f64);
    let inter = (0..nb)
        .map(|b| {
            let (lo, hi) = means.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m[b]), hi.max(m[b])));
            hi - lo
        })
        .collect();
    Ok((intra, inter, warnings))
}

/// FBD from per-sample band powers.
pub fn fbd_from_powers(powers: &[Vec<f64>], labels: &[usize], subjects: &[usize], bin_lo: &[f64], cfg: &FbdConfig) -> Result<FbdReport> {
    if powers.len() != labels.len() || powers.len() != subjects.len() {
        return Err(Error::dim(format!("{} samples, {} labels, {} subjects", powers.len(), labels.len(), subjects.len())));
    }
    let nb = bin_lo.len();
    let mut sums: BTreeMap<(usize, usize), (Vec<f64>, usize)> = BTreeMap::new();
    for ((p, &y), &s) in powers.iter().zip(labels).zip(subjects) {
        let e = sums.entry((y, s)).or_insert_with(|| (vec![0.0; nb], 0));
        e.0.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        e.1 += 1;
    }
    let cells = sums.into_iter().map(|(k, (v, n))| (k, v.into_iter().map(|x| x / n as f64).collect())).collect();
    let (intra, inter, warnings) = discriminability(&cells, nb)?;
    let fbd: Vec<f64> = inter.iter().zip(&intra).map(|(e, a)| e / (a + FBD_EPS)).collect();
    let picked: Vec<f64> = match cfg.band {
        Some((lo, hi)) => fbd.iter().zip(bin_lo).filter(|(_, f)| **f >= lo && **f < hi).map(|(v, _)| *v).collect(),
        None => fbd.clone(),
    };
    if picked.is_empty() {
        return Err(Error::config(format!("aggregation range {:?} holds no bins", cfg.band)));
    }
    let aggregate = picked.iter().sum::<f64>() / picked.len() as f64;
    Ok(FbdReport { bin_lo: bin_lo.to_vec(), bin_hz: cfg.bin_hz, intra, inter, fbd, aggregate, band: cfg.band, warnings })
}

/// FBD of raw signals or sequence embeddings `[N, T, C]`.
pub fn fbd(x: &Tensor, labels: &[usize], subjects: &[usize], cfg: &FbdConfig) -> Result<FbdReport> {
    let (powers, bin_lo) = band_powers(x, cfg)?;
    fbd_from_powers(&powers, labels, subjects, &bin_lo, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub alpha: f64,
    pub beta: f64,
    /// `beta / alpha`.
    pub bound: f64,
    /// Per-frequency ratio `Inter / Intra` on the base and the transformed set.
    pub base: Vec<f64>,
    pub transformed: Vec<f64>,
    /// Summed transformed over summed base, across the usable frequencies.
    pub ratio: f64,
    pub min_ratio: f64,
    pub holds: bool,
}

/// Variance-form discriminability of Fourier coordinates per frequency:
/// Intra is the mean squared distance of samples to their class mean, Inter
/// the mean squared distance between distinct class means. Each frequency's
/// coordinates are the real and imaginary parts across channels.
pub fn fourier_discriminability(x: &Tensor, labels: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let coords = fourier_coords(x)?;
    let (n, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k = fft::rfft_bins(t);
    let classes = class_ids(labels);
    if classes.len() < 2 || labels.len() != n {
        return Err(Error::Validation("discriminability needs at least two classes and one label per sample".into()));
    }
    let means = class_means(&coords, labels, &classes, k * c);
    let mut intra = vec![0.0; k];
    let mut inter = vec![0.0; k];
    for (i, &y) in labels.iter().enumerate() {
        let m = &means[&y];
        for (idx, (a, b)) in coords[i].iter().zip(m).enumerate() {
            intra[idx / c] += ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)) / n as f64;
        }
    }
    let pairs = (classes.len() * (classes.len() - 1)) as f64;
    for &p in &classes {
        for &q in &classes {
            if p != q {
                for (idx, (a, b)) in means[&p].iter().zip(&means[&q]).enumerate() {
                    inter[idx / c] += ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)) / pairs;
                }
            }
        }
    }
    Ok((intra, inter))
}

type Coords = Vec<Vec<(f64, f64)>>;

/// Per-sample `[(freq, channel)]` complex coefficients.
fn fourier_coords(x: &Tensor) -> Result<Coords> {
    if x.ndim() != 3 {
        return Err(Error::dim(format!("expected [N, T, C], got {:?}", x.shape())));
    }
    let (n, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut rows = vec![0.0; n * c * t];
    for i in 0..n {
        for tt in 0..t {
            for ch in 0..c {
                rows[(i * c + ch) * t + tt] = x.data()[(i * t + tt) * c + ch];
            }
        }
    }
    let z = fft::rfft(&Tensor::new(vec![n, c, t], rows)?)?;
    let k = fft::rfft_bins(t);
    Ok((0..n)
        .map(|i| {
            let mut v = Vec::with_capacity(k * c);
            for j in 0..k {
                for ch in 0..c {
                    let f = (i * c + ch) * k + j;
                    v.push((z.re()[f], z.im()[f]));
                }
            }
            v
        })
        .collect())
}

fn class_ids(labels: &[usize]) -> Vec<usize> {
    let mut ids = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn class_means(coords: &Coords, labels: &[usize], classes: &[usize], width: usize) -> BTreeMap<usize, Vec<(f64, f64)>> {
    let mut out = BTreeMap::new();
    for &y in classes {
        let members: Vec<&Vec<(f64, f64)>> = coords.iter().zip(labels).filter(|(_, &l)| l == y).map(|(c, _)| c).collect();
        let m = members.len() as f64;
        let mean = (0..width).map(|j| (members.iter().map(|c| c[j].0).sum::<f64>() / m, members.iter().map(|c| c[j].1).sum::<f64>() / m)).collect();
        out.insert(y, mean);
    }
    out
}

/// Builds the transformed set `mu + sqrt(beta) (mu_y - mu) + sqrt(alpha) (a - mu_y)`
/// in Fourier coordinates, where `mu` is the average class mean, and returns
/// it as real signals.
pub fn contract_expand(x: &Tensor, labels: &[usize], alpha: f64, beta: f64) -> Result<Tensor> {
    let coords = fourier_coords(x)?;
    let (n, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if labels.len() != n {
        return Err(Error::dim(format!("{n} samples but {} labels", labels.len())));
    }
    let k = fft::rfft_bins(t);
    let classes = class_ids(labels);
    let means = class_means(&coords, labels, &classes, k * c);
    let nc = classes.len() as f64;
    let centre: Vec<(f64, f64)> =
        (0..k * c).map(|j| (means.values().map(|m| m[j].0).sum::<f64>() / nc, means.values().map(|m| m[j].1).sum::<f64>() / nc)).collect();
    let (sa, sb) = (alpha.sqrt(), beta.sqrt());
    let mut re = vec![0.0; n * c * k];
    let mut im = vec![0.0; n * c * k];
    for (i, (a, y)) in coords.iter().zip(labels).enumerate() {
        let m = &means[y];
        for j in 0..k {
            for ch in 0..c {
                let idx = j * c + ch;
                let f = (i * c + ch) * k + j;
                re[f] = centre[idx].0 + sb * (m[idx].0 - centre[idx].0) + sa * (a[idx].0 - m[idx].0);
                im[f] = centre[idx].1 + sb * (m[idx].1 - centre[idx].1) + sa * (a[idx].1 - m[idx].1);
            }
        }
    }
    let rows = fft::irfft(&fft::ComplexTensor::new(vec![n, c, k], re, im)?, t)?;
    let mut out = vec![0.0; n * t * c];
    for i in 0..n {
        for ch in 0..c {
            for tt in 0..t {
                out[(i * t + tt) * c + ch] = rows.data()[(i * c + ch) * t + tt];
            }
        }
    }
    Tensor::new(vec![n, t, c], out)
}

/// Contracts within-class spread by `sqrt(alpha)` and expands the spread of
/// class means by `sqrt(beta)`, then measures how much the variance-form
/// discriminability improved. `holds` compares the aggregate ratio against
/// `beta / alpha * (1 - tol)`.
pub fn fbd_corollary_check(x: &Tensor, labels: &[usize], alpha: f64, beta: f64, tol: f64) -> Result<CorollaryReport> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(beta >= 1.0 && beta.is_finite()) {
        return Err(Error::config(format!("need 0 < alpha <= 1 and beta >= 1, got {alpha}, {beta}")));
    }
    if class_ids(labels).len() < 2 {
        return Err(Error::Validation("discriminability needs at least two classes".into()));
    }
    let (intra, inter) = fourier_discriminability(x, labels)?;
    let moved = contract_expand(x, labels, alpha, beta)?;
    let (intra2, inter2) = fourier_discriminability(&moved, labels)?;
    let scale = intra.iter().chain(&inter).fold(0.0f64, |m, v| m.max(*v));
    let usable: Vec<usize> = (0..intra.len()).filter(|&j| intra[j] > 1e-12 * scale && inter[j] > 1e-12 * scale).collect();
    if usable.is_empty() {
        return Err(Error::Validation("base set has no frequency with both within-class and between-class spread".into()));
    }
    let base: Vec<f64> = usable.iter().map(|&j| inter[j] / intra[j]).collect();
    let transformed: Vec<f64> = usable.iter().map(|&j| inter2[j] / intra2[j]).collect();
    let ratio = transformed.iter().sum::<f64>() / base.iter().sum::<f64>();
    let min_ratio = base.iter().zip(&transformed).map(|(b, t)| t / b).fold(f64::INFINITY, f64::min);
    let bound = beta / alpha;
    Ok(CorollaryReport { alpha, beta, bound, base, transformed, ratio, min_ratio, holds: ratio >= bound * (1.0 - tol) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, DriftSpec};

    fn cells(entries: &[((usize, usize), f64)]) -> BTreeMap<(usize, usize), Vec<f64>> {
        entries.iter().map(|(k, v)| (*k, vec![*v])).collect()
    }

    #[test]
    fn hand_example() {
        let c = cells(&[((0, 0), 1.0), ((0, 1), 3.0), ((1, 2), 5.0), ((1, 3), 7.0)]);
        let (intra, inter, w) = discriminability(&c, 1).unwrap();
        assert_eq!((intra[0], inter[0]), (1.0, 4.0));
        assert!(w.is_empty());
    }

    #[test]
    fn identical_means_give_zero() {
        let p = vec![vec![1.0], vec![3.0], vec![3.0], vec![1.0]];
        let r = fbd_from_powers(&p, &[0, 0, 1, 1], &[0, 1, 2, 3], &[0.0], &FbdConfig::default()).unwrap();
        assert_eq!(r.fbd, vec![0.0]);
    }

    #[test]
    fn single_subject_classes_error() {
        let p = vec![vec![1.0], vec![2.0]];
        let r = fbd_from_powers(&p, &[0, 1], &[0, 1], &[0.0], &FbdConfig::default());
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn single_subject_class_is_warned_and_skipped() {
        let p = vec![vec![1.0], vec![3.0], vec![9.0]];
        let r = fbd_from_powers(&p, &[0, 0, 1], &[0, 1, 2], &[0.0], &FbdConfig::default()).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert_eq!((r.intra[0], r.inter[0]), (1.0, 7.0));
    }

    #[test]
    fn sinusoid_lands_in_its_bin() {
        // T = 32 at fs = 32: a cosine at 6 cycles falls in bin 3 of width 2
        let x = Tensor::from_fn(&[1, 32, 1], |i| (2.0 * std::f64::consts::PI * 6.0 * i as f64 / 32.0).cos());
        let (p, lo) = band_powers(&x, &FbdConfig { fs: 32.0, bin_hz: 2.0, band: None }).unwrap();
        assert_eq!(lo.len(), 9);
        assert!((p[0][3] - 256.0).abs() < 1e-9);
        assert!(p[0].iter().enumerate().all(|(b, v)| b == 3 || v.abs() < 1e-12));
    }

    #[test]
    fn scaling_preserves_fbd() {
        let b = generate(&DriftSpec { num_subjects: 4, samples_per_subject: 5, length: 32, ..Default::default() }, 3).unwrap();
        let cfg = FbdConfig { fs: 32.0, bin_hz: 2.0, band: Some((0.0, 10.0)) };
        let r1 = fbd(&b.x, &b.labels, &b.subjects, &cfg).unwrap();
        let scaled = Tensor::from_fn(b.x.shape(), |i| 3.0 * b.x.data()[i]);
        let r2 = fbd(&scaled, &b.labels, &b.subjects, &cfg).unwrap();
        for j in 0..r1.fbd.len() {
            assert!((r2.intra[j] - 9.0 * r1.intra[j]).abs() <= 1e-9 * r1.intra[j].max(1.0));
            assert!((r2.fbd[j] - r1.fbd[j]).abs() <= 1e-6 * r1.fbd[j].max(1.0));
        }
        assert!(r1.fbd.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn csv_has_a_row_per_bin() {
        let p = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![5.0, 2.0], vec![7.0, 2.0]];
        let r = fbd_from_powers(&p, &[0, 0, 1, 1], &[0, 1, 2, 3], &[0.0, 2.0], &FbdConfig::default()).unwrap();
        assert_eq!(r.to_csv().lines().count(), 3);
        assert_eq!(r.fbd[1], 0.0);
    }

    fn corollary_base() -> (Tensor, Vec<usize>) {
        let b = generate(&DriftSpec { num_subjects: 4, samples_per_subject: 6, length: 32, channels: 2, ..Default::default() }, 11).unwrap();
        (b.x, b.labels)
    }

    #[test]
    fn corollary_ratios() {
        let (x, y) = corollary_base();
        for (a, b, want) in [(0.25, 1.0, 4.0), (0.5, 2.0, 4.0), (1.0, 1.0, 1.0), (0.5, 1.5, 3.0)] {
            let r = fbd_corollary_check(&x, &y, a, b, 0.05).unwrap();
            assert!((r.ratio - want).abs() < 1e-6 * want, "{a} {b}: {}", r.ratio);
            assert!((r.min_ratio - want).abs() < 1e-6 * want);
            assert!(r.holds);
        }
    }

    #[test]
    fn corollary_rejects_bad_inputs() {
        let (x, y) = corollary_base();
        assert!(fbd_corollary_check(&x, &y, 0.0, 1.0, 0.05).is_err());
        assert!(fbd_corollary_check(&x, &y, 0.5, 0.5, 0.05).is_err());
        assert!(fbd_corollary_check(&x, &vec![0; y.len()], 0.5, 1.0, 0.05).is_err());
        let flat = Tensor::zeros(x.shape());
        assert!(matches!(fbd_corollary_check(&flat, &y, 0.5, 1.0, 0.05), Err(Error::Validation(_))));
    }
}

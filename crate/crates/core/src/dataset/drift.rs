//! Synthetic class spectra under subject-level band-wise gain and phase drift.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::TimeSeriesBatch;
use crate::error::{Error, Result};
use crate::numcore::{irfft, ComplexTensor, Tensor};
use crate::spectral::BandLayout;

/// A spectral line of a class template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Peak {
    pub bin: usize,
    /// Time-domain sinusoid amplitude per channel; a single value applies to all.
    pub amplitude: Vec<f64>,
    /// Phase in radians at channel 0; channel `c` adds `c * channel_phase_step`.
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTemplate {
    pub peaks: Vec<Peak>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSpec {
    pub num_classes: usize,
    pub num_subjects: usize,
    pub length: usize,
    pub channels: usize,
    pub samples_per_subject: usize,
    /// One per class; when empty, a default set is built by [`DriftSpec::templates`].
    pub templates: Vec<ClassTemplate>,
    /// Number of uniform bands sharing one subject gain and phase.
    pub drift_bands: usize,
    /// Log-normal scale of subject band gains.
    pub gain_spread: f64,
    /// Half-width in radians of the uniform subject band phase offsets.
    pub phase_spread: f64,
    /// Standard deviation of white time-domain noise.
    pub noise_std: f64,
    /// Standard deviation in radians of per-sample, per-peak phase jitter.
    pub phase_jitter: f64,
    /// Per-sample standard deviation of the log amplitude of every peak.
    pub amplitude_jitter: f64,
    /// Amplitude of a random-phase `1/sqrt(k)` background at every oscillatory bin.
    pub background: f64,
    pub channel_phase_step: f64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        DriftSpec {
            num_classes: 2,
            num_subjects: 8,
            length: 128,
            channels: 4,
            samples_per_subject: 200,
            templates: Vec::new(),
            drift_bands: 6,
            gain_spread: 0.6,
            phase_spread: 1.0,
            noise_std: 0.3,
            phase_jitter: 0.0,
            amplitude_jitter: 0.0,
            background: 0.0,
            channel_phase_step: 0.5,
        }
    }
}

impl DriftSpec {
    /// Explicit templates, or the default family: class `i` has a fundamental
    /// at bin `5 + 2i` and its second harmonic, amplitudes decreasing across
    /// channels.
    pub fn templates(&self) -> Vec<ClassTemplate> {
        if !self.templates.is_empty() {
            return self.templates.clone();
        }
        let amps: Vec<f64> = (0..self.channels).map(|c| 1.0 - 0.1 * c as f64).collect();
        (0..self.num_classes)
            .map(|i| {
                let f = 5 + 2 * i;
                ClassTemplate {
                    peaks: vec![
                        Peak { bin: f, amplitude: amps.clone(), phase: 0.0 },
                        Peak { bin: 2 * f, amplitude: amps.iter().map(|a| 0.5 * a).collect(), phase: 0.0 },
                    ],
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.length / 2;
        if self.num_classes == 0 || self.num_subjects == 0 || self.channels == 0 {
            return Err(Error::config("classes, subjects and channels must be positive"));
        }
        if self.num_classes > u16::MAX as usize + 1 || self.num_subjects > u16::MAX as usize + 1 {
            return Err(Error::config("class and subject ids must fit in 16 bits"));
        }
        if self.length < 4 {
            return Err(Error::config(format!("length must be at least 4, got {}", self.length)));
        }
        if !(self.gain_spread >= 0.0) || !(0.0..=PI).contains(&self.phase_spread) || !(self.noise_std >= 0.0) {
            return Err(Error::config("need gain_spread >= 0, phase_spread in [0, pi], noise_std >= 0"));
        }
        if !(self.phase_jitter >= 0.0) || !(self.amplitude_jitter >= 0.0) || !(self.background >= 0.0) {
            return Err(Error::config("jitter and background must be non-negative"));
        }
        BandLayout::uniform(self.length, self.drift_bands)?;
        let templates = self.templates();
        if templates.len() != self.num_classes {
            return Err(Error::config(format!("{} templates for {} classes", templates.len(), self.num_classes)));
        }
        for (i, t) in templates.iter().enumerate() {
            for p in &t.peaks {
                if p.bin == 0 || p.bin >= k {
                    return Err(Error::config(format!("class {i} peak bin {} must lie in 1..{k}", p.bin)));
                }
                if p.amplitude.len() != 1 && p.amplitude.len() != self.channels {
                    return Err(Error::config(format!("class {i} peak amplitudes must have 1 or {} entries", self.channels)));
                }
            }
        }
        Ok(())
    }
}

/// Subject drift factors, one per band: gain times unit rotation.
fn subject_drift(spec: &DriftSpec, rng: &mut ChaCha8Rng) -> Result<Vec<(f64, f64)>> {
    let gain = LogNormal::new(0.0, spec.gain_spread).map_err(|e| Error::config(e.to_string()))?;
    Ok((0..spec.drift_bands)
        .map(|_| {
            let g = gain.sample(rng);
            let d = if spec.phase_spread > 0.0 { rng.random_range(-spec.phase_spread..=spec.phase_spread) } else { 0.0 };
            (g, d)
        })
        .collect())
}

/// Draws `samples_per_subject` samples for every subject; sample `i` of a
/// subject has class `i % num_classes`. Each subject uses its own ChaCha
/// stream, so the output is deterministic in `seed`.
pub fn generate(spec: &DriftSpec, seed: u64) -> Result<TimeSeriesBatch> {
    spec.validate()?;
    let (t, c, k) = (spec.length, spec.channels, spec.length / 2);
    let bins = k + 1;
    let templates = spec.templates();
    let layout = BandLayout::uniform(t, spec.drift_bands)?;
    let band_of = layout.band_of_position();
    let scale = t as f64 / 2.0;
    let noise = Normal::new(0.0, spec.noise_std.max(0.0)).map_err(|e| Error::config(e.to_string()))?;
    let jitter = Normal::new(0.0, spec.phase_jitter).map_err(|e| Error::config(e.to_string()))?;
    let amp_jitter = Normal::new(0.0, spec.amplitude_jitter).map_err(|e| Error::config(e.to_string()))?;

    let n = spec.num_subjects * spec.samples_per_subject;
    let mut x = Vec::with_capacity(n * t * c);
    let mut labels = Vec::with_capacity(n);
    let mut subjects = Vec::with_capacity(n);
    for s in 0..spec.num_subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64 + 1);
        let drift = subject_drift(spec, &mut rng)?;
        for i in 0..spec.samples_per_subject {
            let y = i % spec.num_classes;
            let mut z = vec![Complex64::new(0.0, 0.0); c * bins];
            if spec.background > 0.0 {
                for ch in 0..c {
                    for kk in 1..=k {
                        let phi = rng.random_range(0.0..2.0 * PI);
                        z[ch * bins + kk] += Complex64::from_polar(spec.background * scale / (kk as f64).sqrt(), phi);
                    }
                }
            }
            for p in &templates[y].peaks {
                let j = jitter.sample(&mut rng);
                let a = amp_jitter.sample(&mut rng).exp();
                for ch in 0..c {
                    let amp = if p.amplitude.len() == 1 { p.amplitude[0] } else { p.amplitude[ch] };
                    let phi = p.phase + ch as f64 * spec.channel_phase_step + j;
                    z[ch * bins + p.bin] += Complex64::from_polar(a * amp * scale, phi);
                }
            }
            for ch in 0..c {
                for kk in 1..=k {
                    let (g, d) = drift[band_of[kk - 1]];
                    // an even-length Nyquist bin stays real
                    let rot = if kk == k && t % 2 == 0 { 1.0.into() } else { Complex64::from_polar(1.0, d) };
                    z[ch * bins + kk] *= g * rot;
                }
            }
            let spec_t = ComplexTensor::new(vec![c, bins], z.iter().map(|v| v.re).collect(), z.iter().map(|v| v.im).collect())?;
            let series = irfft(&spec_t, t)?;
            let sd = series.data();
            for tt in 0..t {
                for ch in 0..c {
                    x.push(sd[ch * t + tt] + if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 });
                }
            }
            labels.push(y);
            subjects.push(s);
        }
    }
    TimeSeriesBatch::new(Tensor::new(vec![n, t, c], x)?, labels, subjects, spec.num_classes, spec.num_subjects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rfft;

    fn quiet() -> DriftSpec {
        DriftSpec { gain_spread: 0.0, phase_spread: 0.0, noise_std: 0.0, samples_per_subject: 4, ..DriftSpec::default() }
    }

    fn sample(b: &TimeSeriesBatch, i: usize) -> &[f64] {
        let row = b.length() * b.channels();
        &b.x.data()[i * row..(i + 1) * row]
    }

    #[test]
    fn zero_drift_makes_subjects_identical() {
        let b = generate(&quiet(), 3).unwrap();
        for s in 1..8 {
            for i in 0..4 {
                assert_eq!(sample(&b, i), sample(&b, s * 4 + i));
            }
        }
        assert_ne!(sample(&b, 0), sample(&b, 1));
    }

    #[test]
    fn class_mean_spectra_peak_at_template_bins() {
        let spec = DriftSpec { samples_per_subject: 20, ..DriftSpec::default() };
        let b = generate(&spec, 11).unwrap();
        let (t, c) = (b.length(), b.channels());
        let mut psd = vec![vec![0.0; t / 2 + 1]; 2];
        for i in 0..b.len() {
            let row = sample(&b, i);
            for ch in 0..c {
                let series: Vec<f64> = (0..t).map(|tt| row[tt * c + ch]).collect();
                let z = rfft(&Tensor::from_vec(series)).unwrap();
                for k in 0..=t / 2 {
                    psd[b.labels[i]][k] += z.get(k).norm_sqr();
                }
            }
        }
        for (class, peaks) in [(0, [5, 10]), (1, [7, 14])] {
            let mut order: Vec<usize> = (1..=t / 2).collect();
            order.sort_by(|a, b| psd[class][*b].total_cmp(&psd[class][*a]));
            let mut top = order[..2].to_vec();
            top.sort_unstable();
            assert_eq!(top, peaks.to_vec(), "class {class}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = DriftSpec { samples_per_subject: 3, background: 0.1, phase_jitter: 0.2, ..DriftSpec::default() };
        assert_eq!(generate(&spec, 5).unwrap(), generate(&spec, 5).unwrap());
        assert_ne!(generate(&spec, 5).unwrap().x, generate(&spec, 6).unwrap().x);
    }

    #[test]
    fn subject_drift_is_shared_across_samples() {
        let spec = DriftSpec { noise_std: 0.0, samples_per_subject: 4, ..DriftSpec::default() };
        let b = generate(&spec, 2).unwrap();
        // with no per-sample randomness, same-class samples of a subject coincide
        assert_eq!(sample(&b, 0), sample(&b, 2));
        assert_ne!(sample(&b, 0), sample(&b, 4));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&DriftSpec { phase_spread: 4.0, ..quiet() }, 0).is_err());
        assert!(generate(&DriftSpec { gain_spread: -1.0, ..quiet() }, 0).is_err());
        let t = ClassTemplate { peaks: vec![Peak { bin: 64, amplitude: vec![1.0], phase: 0.0 }] };
        assert!(generate(&DriftSpec { num_classes: 1, templates: vec![t], ..quiet() }, 0).is_err());
        assert!(generate(&DriftSpec { num_classes: 3, templates: DriftSpec::default().templates(), ..quiet() }, 0).is_err());
    }
}

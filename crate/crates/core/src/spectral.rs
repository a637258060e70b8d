//! Frequency-band layouts, polar decomposition of spectra, and the five
//! band-level magnitude descriptors.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::ComplexTensor;

/// Guard inside logarithms and phase normalization.
pub const EPS: f64 = 1e-8;

/// Partition of the oscillatory bins `1..=T/2` of a length-`T` spectrum into
/// contiguous, non-empty bands.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandLayout {
    length: usize,
    boundaries: Vec<usize>,
}

impl BandLayout {
    /// Contiguous split with ceil-first sizes: every band but the last holds
    /// `ceil(K / M)` bins. When that would leave a band empty, the bins are
    /// spread as evenly as possible with earlier bands taking the extra bin.
    pub fn uniform(length: usize, bands: usize) -> Result<Self> {
        let k = length / 2;
        if bands == 0 || bands > k {
            return Err(Error::config(format!("{bands} bands requested but a length-{length} spectrum has {k} oscillatory bins")));
        }
        let chunk = k.div_ceil(bands);
        let ceil_first = (bands - 1) * chunk < k;
        let mut boundaries = Vec::with_capacity(bands + 1);
        let mut at = 1;
        boundaries.push(at);
        for m in 0..bands {
            at += if ceil_first {
                if m + 1 == bands {
                    k - (bands - 1) * chunk
                } else {
                    chunk
                }
            } else {
                k / bands + usize::from(m < k % bands)
            };
            boundaries.push(at);
        }
        Ok(BandLayout { length, boundaries })
    }

    /// Layout from explicit bin boundaries.
    ///
    /// A leading 0 is read as "DC handled separately" and mapped to bin 1, so
    /// tables such as `[0, 5, 12, 20, 32, 48, 64]` are accepted as-is. The last
    /// boundary may be `T/2` (exclusive end at the last oscillatory bin) or
    /// `T/2 + 1`; either way the final band runs through bin `T/2`.
    pub fn custom(length: usize, boundaries: &[usize]) -> Result<Self> {
        let k = length / 2;
        if boundaries.len() < 2 {
            return Err(Error::config("band boundaries need at least two entries"));
        }
        let mut b = boundaries.to_vec();
        if b[0] == 0 {
            b[0] = 1;
        }
        let last = b.len() - 1;
        if b[last] == k && k >= 1 {
            b[last] = k + 1;
        }
        if b[0] != 1 {
            return Err(Error::config(format!("band boundaries must start at bin 0 or 1, got {}", boundaries[0])));
        }
        if b[last] != k + 1 {
            return Err(Error::config(format!("band boundaries must end at bin {k} or {}, got {}", k + 1, boundaries[last])));
        }
        if b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!("band boundaries {boundaries:?} must be strictly ascending with non-empty bands")));
        }
        Ok(BandLayout { length, boundaries: b })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn num_bands(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// `M + 1` ascending bin indices; band `m` covers `[b[m], b[m+1])`.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn band(&self, m: usize) -> std::ops::Range<usize> {
        self.boundaries[m]..self.boundaries[m + 1]
    }

    /// Number of oscillatory bins (DC excluded, Nyquist included).
    pub fn num_oscillatory(&self) -> usize {
        self.length / 2
    }

    pub fn nyquist_present(&self) -> bool {
        self.length % 2 == 0
    }

    /// Boundaries re-based to positions inside the oscillatory slice (bin 1 at 0).
    pub fn offsets(&self) -> Vec<usize> {
        self.boundaries.iter().map(|b| b - 1).collect()
    }

    /// Band index of every oscillatory position.
    pub fn band_of_position(&self) -> Vec<usize> {
        (0..self.num_bands()).flat_map(|m| std::iter::repeat_n(m, self.band(m).len())).collect()
    }
}

/// Which descriptor entries feed the modulation network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorSubset {
    /// log mean, log std, log max.
    LogMom,
    LogMomPeakLoc,
    LogMomBandEnergy,
    #[default]
    Full,
}

impl DescriptorSubset {
    /// Indices into the full `[log mu, log sigma, log max, log E, f]` vector.
    pub fn indices(self) -> &'static [usize] {
        match self {
            DescriptorSubset::LogMom => &[0, 1, 2],
            DescriptorSubset::LogMomPeakLoc => &[0, 1, 2, 4],
            DescriptorSubset::LogMomBandEnergy => &[0, 1, 2, 3],
            DescriptorSubset::Full => &[0, 1, 2, 3, 4],
        }
    }

    pub fn len(self) -> usize {
        self.indices().len()
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn project(self, full: &[f64; 5]) -> Vec<f64> {
        self.indices().iter().map(|&i| full[i]).collect()
    }
}

/// Polar form of one spectrum `[channel, bin]`: DC kept aside, oscillatory
/// bins split into magnitude and unit phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarSpectrum {
    pub channels: usize,
    pub length: usize,
    pub dc: Vec<Complex64>,
    /// `[channel, K]` magnitudes, `K = length / 2`.
    pub magnitude: Vec<f64>,
    /// `[channel, K]` phases `z / (|z| + eps)`.
    pub phase: Vec<Complex64>,
}

impl PolarSpectrum {
    pub fn num_oscillatory(&self) -> usize {
        self.length / 2
    }

    pub fn magnitudes_of(&self, channel: usize) -> &[f64] {
        let k = self.num_oscillatory();
        &self.magnitude[channel * k..(channel + 1) * k]
    }
}

/// Splits an rFFT result of shape `[channel, T/2+1]` into polar form.
pub fn to_polar(z: &ComplexTensor, length: usize) -> Result<PolarSpectrum> {
    let shape = z.shape();
    let bins = length / 2 + 1;
    if shape.len() != 2 || shape[1] != bins {
        return Err(Error::dim(format!("to_polar expects [channel, {bins}] bins, got {shape:?}")));
    }
    let channels = shape[0];
    let k = bins - 1;
    let mut dc = Vec::with_capacity(channels);
    let mut magnitude = Vec::with_capacity(channels * k);
    let mut phase = Vec::with_capacity(channels * k);
    for c in 0..channels {
        dc.push(z.get(c * bins));
        for j in 1..bins {
            let v = z.get(c * bins + j);
            let a = v.norm();
            magnitude.push(a);
            phase.push(v / (a + EPS));
        }
    }
    Ok(PolarSpectrum { channels, length, dc, magnitude, phase })
}

/// Recombines `[DC, A * P]` into `[channel, T/2+1]` bins.
pub fn from_polar(p: &PolarSpectrum) -> ComplexTensor {
    let k = p.num_oscillatory();
    let bins = k + 1;
    let mut re = Vec::with_capacity(p.channels * bins);
    let mut im = Vec::with_capacity(p.channels * bins);
    for c in 0..p.channels {
        re.push(p.dc[c].re);
        im.push(p.dc[c].im);
        for j in 0..k {
            let a = p.magnitude[c * k + j];
            // (a + eps) undoes the shrink applied by `to_polar`
            let v = if a > 0.0 { p.phase[c * k + j] * (a + EPS) } else { Complex64::new(0.0, 0.0) };
            re.push(v.re);
            im.push(v.im);
        }
    }
    ComplexTensor::new(vec![p.channels, bins], re, im).expect("polar shape")
}

/// Full five-entry descriptor of one band from its pooled magnitudes.
///
/// `values` is laid out `[channel, bin]` with `band_len` bins per channel.
/// `f` is the bin position (within the band) of the largest magnitude divided
/// by `band_len`.
pub fn band_descriptor(values: &[f64], band_len: usize) -> [f64; 5] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let energy: f64 = values.iter().map(|v| v * v).sum();
    [(mean + EPS).ln(), (var.sqrt() + EPS).ln(), (values[best] + EPS).ln(), (energy + EPS).ln(), (best % band_len) as f64 / band_len as f64]
}

/// Per-band descriptors pooled over channels.
pub fn band_statistics(p: &PolarSpectrum, layout: &BandLayout, subset: DescriptorSubset) -> Result<Vec<Vec<f64>>> {
    if layout.length() != p.length {
        return Err(Error::dim(format!("layout for length {} applied to length {}", layout.length(), p.length)));
    }
    let k = p.num_oscillatory();
    let offsets = layout.offsets();
    Ok((0..layout.num_bands())
        .map(|m| {
            let (lo, hi) = (offsets[m], offsets[m + 1]);
            let pooled: Vec<f64> = (0..p.channels).flat_map(|c| p.magnitude[c * k + lo..c * k + hi].iter().copied()).collect();
            subset.project(&band_descriptor(&pooled, hi - lo))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes(l: &BandLayout) -> Vec<usize> {
        (0..l.num_bands()).map(|m| l.band(m).len()).collect()
    }

    #[test]
    fn uniform_128_by_6() {
        let l = BandLayout::uniform(128, 6).unwrap();
        assert_eq!(sizes(&l), vec![11, 11, 11, 11, 11, 9]);
        assert_eq!(l.boundaries(), &[1, 12, 23, 34, 45, 56, 65]);
        assert_eq!(l.boundaries()[0], 1);
        assert_eq!(*l.boundaries().last().unwrap(), 65);
    }

    #[test]
    fn uniform_small_cases() {
        let l = BandLayout::uniform(4, 1).unwrap();
        assert_eq!(l.band(0), 1..3);
        let l = BandLayout::uniform(13, 6).unwrap();
        assert_eq!(sizes(&l), vec![1; 6]);
        assert!(BandLayout::uniform(8, 5).is_err());
        assert!(BandLayout::uniform(8, 0).is_err());
        // ceil-first would give 2,2,2,2,1 and an empty sixth band
        let l = BandLayout::uniform(18, 6).unwrap();
        assert_eq!(sizes(&l), vec![2, 2, 2, 1, 1, 1]);
    }

    #[test]
    fn custom_apava_table() {
        let l = BandLayout::custom(128, &[0, 5, 12, 20, 32, 48, 64]).unwrap();
        assert_eq!(l.num_bands(), 6);
        assert_eq!(l.boundaries(), &[1, 5, 12, 20, 32, 48, 65]);
    }

    #[test]
    fn custom_single_band_matches_uniform() {
        let l = BandLayout::custom(20, &[1, 11]).unwrap();
        assert_eq!(l, BandLayout::uniform(20, 1).unwrap());
    }

    #[test]
    fn custom_rejects_bad_tables() {
        assert!(BandLayout::custom(128, &[0, 12, 5, 64]).is_err());
        assert!(BandLayout::custom(128, &[0, 5, 5, 64]).is_err());
        assert!(BandLayout::custom(128, &[0, 5, 70]).is_err());
        assert!(BandLayout::custom(128, &[3, 5, 64]).is_err());
    }

    #[test]
    fn polar_of_three_four() {
        let z = ComplexTensor::new(vec![1, 2], vec![7.0, 3.0], vec![0.0, 4.0]).unwrap();
        let p = to_polar(&z, 2).unwrap();
        assert!((p.magnitude[0] - 5.0).abs() < 1e-12);
        assert!((p.phase[0].re - 0.6).abs() < 1e-8);
        assert!((p.phase[0].im - 0.8).abs() < 1e-8);
        assert_eq!(p.dc[0], Complex64::new(7.0, 0.0));
    }

    #[test]
    fn polar_of_zero() {
        let z = ComplexTensor::new(vec![1, 2], vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let p = to_polar(&z, 2).unwrap();
        assert_eq!(p.magnitude[0], 0.0);
        assert_eq!(p.phase[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn descriptor_by_hand() {
        let d = band_descriptor(&[1.0, 3.0], 2);
        let expect = [2f64.ln(), 1f64.ln(), 3f64.ln(), 10f64.ln(), 0.5];
        for (a, b) in d.iter().zip(expect) {
            assert!((a - b).abs() < 1e-7, "{d:?}");
        }
        let d = band_descriptor(&[0.0, 0.0, 0.0], 3);
        assert_eq!(d[..4], [EPS.ln(); 4]);
        assert_eq!(d[4], 0.0);
        let d = band_descriptor(&[5.0], 1);
        assert!((d[0] - 5f64.ln()).abs() < 1e-8);
        assert_eq!(d[1], EPS.ln());
        assert!((d[2] - 5f64.ln()).abs() < 1e-8);
        assert!((d[3] - 25f64.ln()).abs() < 1e-8);
        assert_eq!(d[4], 0.0);
    }

    #[test]
    fn subsets_select_entries() {
        let full = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(DescriptorSubset::LogMom.project(&full), vec![1.0, 2.0, 3.0]);
        assert_eq!(DescriptorSubset::LogMomPeakLoc.project(&full), vec![1.0, 2.0, 3.0, 5.0]);
        assert_eq!(DescriptorSubset::LogMomBandEnergy.project(&full), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(DescriptorSubset::Full.project(&full), full.to_vec());
    }

    proptest! {
        #[test]
        fn bands_cover_and_are_disjoint(t in 2usize..600, m_seed in 1usize..64) {
            let k = t / 2;
            let m = 1 + m_seed % k;
            let l = BandLayout::uniform(t, m).unwrap();
            let mut seen = vec![0u32; k + 2];
            for b in 0..l.num_bands() {
                prop_assert!(!l.band(b).is_empty());
                for bin in l.band(b) {
                    seen[bin] += 1;
                }
            }
            prop_assert_eq!(seen[0], 0);
            prop_assert!(seen[1..=k].iter().all(|&c| c == 1));
            let s = sizes(&l);
            prop_assert_eq!(s.len(), m);
            prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn polar_round_trip(vals in proptest::collection::vec(-10.0f64..10.0, 18)) {
            let re: Vec<f64> = vals[..9].to_vec();
            let im: Vec<f64> = vals[9..].to_vec();
            let z = ComplexTensor::new(vec![1, 9], re, im).unwrap();
            let back = from_polar(&to_polar(&z, 16).unwrap());
            for j in 1..9 {
                let a = z.get(j).norm();
                if a > 1e-6 {
                    prop_assert!((back.get(j) - z.get(j)).norm() < 1e-9);
                }
            }
            prop_assert_eq!(back.get(0), z.get(0));
        }

        #[test]
        fn descriptor_scale_response(vals in proptest::collection::vec(0.01f64..5.0, 6), c in 0.1f64..10.0) {
            let d = band_descriptor(&vals, 3);
            let scaled: Vec<f64> = vals.iter().map(|v| v * c).collect();
            let ds = band_descriptor(&scaled, 3);
            // the eps guard breaks exact log-homogeneity at the 1e-8 relative level
            let tol = 1e-6;
            prop_assert!((ds[0] - d[0] - c.ln()).abs() < tol);
            prop_assert!((ds[2] - d[2] - c.ln()).abs() < tol);
            prop_assert!((ds[3] - d[3] - 2.0 * c.ln()).abs() < tol);
            let sigma = (d[1].exp() - EPS).max(0.0);
            if sigma > 1e-3 {
                prop_assert!((ds[1] - d[1] - c.ln()).abs() < tol);
            }
            prop_assert_eq!(ds[4], d[4]);
        }
    }
}

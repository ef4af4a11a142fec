//! Group-sparse activity, Rayleigh channels and noisy linear measurements.

use log::warn;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::gaussian;

/// Devices split into `groups` equal groups; odd groups (1-based) are active
/// with probability `p1`, even groups with `p2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSparsityConfig {
    pub devices: usize,
    pub groups: usize,
    pub p1: f64,
    pub p2: f64,
}

impl GroupSparsityConfig {
    pub fn new(devices: usize, groups: usize, p1: f64, p2: f64) -> Result<Self> {
        let cfg = Self {
            devices,
            groups,
            p1,
            p2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config with mean activity `p` and ratio `p1 / p2`.
    pub fn from_mean_and_ratio(devices: usize, groups: usize, p: f64, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(Error::Config(format!("p1/p2 ratio must be positive, got {ratio}")));
        }
        if groups == 0 {
            return Err(Error::Config("group count must be positive".into()));
        }
        let g1 = groups.div_ceil(2) as f64;
        let g2 = (groups / 2) as f64;
        let p2 = p * groups as f64 / (g1 * ratio + g2);
        Self::new(devices, groups, ratio * p2, p2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices == 0 {
            return Err(Error::Config("device count must be positive".into()));
        }
        if self.groups == 0 || self.devices % self.groups != 0 {
            return Err(Error::Config(format!(
                "group count {} must be positive and divide device count {}",
                self.groups, self.devices
            )));
        }
        for (name, p) in [("p1", self.p1), ("p2", self.p2)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn group_size(&self) -> usize {
        self.devices / self.groups
    }

    /// Number of odd-indexed groups, `ceil(G / 2)`.
    pub fn odd_groups(&self) -> usize {
        self.groups.div_ceil(2)
    }

    /// Number of even-indexed groups, `floor(G / 2)`.
    pub fn even_groups(&self) -> usize {
        self.groups / 2
    }

    /// Average group activity probability `(G1 p1 + G2 p2) / G`.
    pub fn mean_activity(&self) -> f64 {
        (self.odd_groups() as f64 * self.p1 + self.even_groups() as f64 * self.p2)
            / self.groups as f64
    }

    /// Group index (0-based) of a device.
    pub fn group_of(&self, device: usize) -> usize {
        device / self.group_size()
    }
}

/// Binary activity indicator, one entry per device.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActivityVector(Vec<u8>);

impl ActivityVector {
    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        Self(bits.into_iter().map(u8::from).collect())
    }

    /// Accepts only exact 0.0 / 1.0 entries.
    pub fn from_f64(values: &[f64]) -> Result<Self> {
        values
            .iter()
            .enumerate()
            .map(|(index, &value)| match value {
                v if v == 0.0 => Ok(0),
                v if v == 1.0 => Ok(1),
                _ => Err(Error::NonBinary { index, value }),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_active(&self, device: usize) -> bool {
        self.0[device] == 1
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| self.is_active(n)).collect()
    }

    pub fn count_active(&self) -> usize {
        self.0.iter().map(|&b| b as usize).sum()
    }

    /// `'0'`/`'1'` characters, device order.
    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        s.chars()
            .enumerate()
            .map(|(index, c)| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::NonBinary {
                    index,
                    value: f64::NAN,
                }),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }
}

/// Row-sparse signal matrix `X` together with its activity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSignal {
    pub x: ComplexMatrix,
    pub activity: ActivityVector,
}

/// Received block `Y = A X + Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBatch {
    pub y: ComplexMatrix,
    pub sigma2: f64,
}

/// An `L x N` pilot (sensing) matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingMatrix(ComplexMatrix);

impl SensingMatrix {
    pub fn new(a: ComplexMatrix) -> Self {
        let (l, n) = a.shape();
        if l >= n {
            warn!("sensing matrix is not compressive: L = {l}, N = {n}");
        }
        Self(a)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn measurements(&self) -> usize {
        self.0.nrows()
    }

    pub fn devices(&self) -> usize {
        self.0.ncols()
    }

    /// Largest relative deviation of a column norm from `sqrt(L)`.
    pub fn column_norm_violation(&self) -> f64 {
        let target = (self.measurements() as f64).sqrt();
        self.0
            .column_norms()
            .iter()
            .map(|norm| (norm - target).abs() / target)
            .fold(0.0, f64::max)
    }
}

/// Draws one Bernoulli state per group and copies it to every member.
pub fn sample_activity<R: Rng + ?Sized>(
    cfg: &GroupSparsityConfig,
    rng: &mut R,
) -> Result<ActivityVector> {
    cfg.validate()?;
    let size = cfg.group_size();
    let mut alpha = Vec::with_capacity(cfg.devices);
    for group in 1..=cfg.groups {
        let p = if group % 2 == 1 { cfg.p1 } else { cfg.p2 };
        let active = rng.random::<f64>() < p;
        alpha.extend(std::iter::repeat_n(u8::from(active), size));
    }
    Ok(ActivityVector(alpha))
}

/// `N x M` matrix of i.i.d. CN(0, 1) entries.
pub fn sample_channels<R: Rng + ?Sized>(
    devices: usize,
    antennas: usize,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    if devices == 0 || antennas == 0 {
        return Err(Error::InvalidArgument(format!(
            "channel matrix needs positive dimensions, got {devices} x {antennas}"
        )));
    }
    Ok(sample_complex_gaussian(devices, antennas, 1.0, rng))
}

/// Entries with independent real and imaginary parts of variance `variance / 2`.
pub fn sample_complex_gaussian<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> ComplexMatrix {
    let half = variance / 2.0;
    let mut re = Array2::zeros((rows, cols));
    let mut im = Array2::zeros((rows, cols));
    for (r, i) in re.iter_mut().zip(im.iter_mut()) {
        *r = gaussian(rng, half);
        *i = gaussian(rng, half);
    }
    ComplexMatrix { re, im }
}

/// Masks channel rows of inactive devices.
pub fn build_signal(activity: &ActivityVector, channels: &ComplexMatrix) -> Result<JointSignal> {
    if channels.nrows() != activity.len() {
        return Err(Error::dims(
            "build_signal",
            format!("{} channel rows", activity.len()),
            format!("{}", channels.nrows()),
        ));
    }
    let mut x = channels.clone();
    for (n, &a) in activity.as_slice().iter().enumerate() {
        if a == 0 {
            x.re.row_mut(n).fill(0.0);
            x.im.row_mut(n).fill(0.0);
        }
    }
    Ok(JointSignal {
        x,
        activity: activity.clone(),
    })
}

/// Noise block with real and imaginary parts drawn from N(0, sigma2 / 2).
pub fn sample_noise<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    sigma2: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be finite and non-negative, got {sigma2}"
        )));
    }
    if sigma2 == 0.0 {
        return Ok(ComplexMatrix::zeros(rows, cols));
    }
    Ok(sample_complex_gaussian(rows, cols, sigma2, rng))
}

/// `Y = A X + Z` with a noise block supplied by the caller.
pub fn linear_measurement(
    a: &ComplexMatrix,
    x: &ComplexMatrix,
    noise: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    if a.ncols() != x.nrows() {
        return Err(Error::dims(
            "measurement",
            format!("signal with {} rows", a.ncols()),
            format!("{} rows", x.nrows()),
        ));
    }
    if noise.shape() != (a.nrows(), x.ncols()) {
        return Err(Error::dims(
            "measurement noise",
            format!("{:?}", (a.nrows(), x.ncols())),
            format!("{:?}", noise.shape()),
        ));
    }
    // Re(Y) = Re(A)Re(X) - Im(A)Im(X) + Re(Z)
    // Im(Y) = Im(A)Re(X) + Re(A)Im(X) + Im(Z)
    let re = a.re.dot(&x.re) - a.im.dot(&x.im) + &noise.re;
    let im = a.im.dot(&x.re) + a.re.dot(&x.im) + &noise.im;
    Ok(ComplexMatrix { re, im })
}

/// Noisy measurement of `x` through `a`.
pub fn measure<R: Rng + ?Sized>(
    a: &SensingMatrix,
    x: &ComplexMatrix,
    sigma2: f64,
    rng: &mut R,
) -> Result<MeasurementBatch> {
    if a.devices() != x.nrows() {
        return Err(Error::dims(
            "measure",
            format!("signal with {} rows", a.devices()),
            format!("{} rows", x.nrows()),
        ));
    }
    let noise = sample_noise(a.measurements(), x.ncols(), sigma2, rng)?;
    let y = linear_measurement(a.matrix(), x, &noise)?;
    Ok(MeasurementBatch { y, sigma2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;

    #[test]
    fn degenerate_probabilities() {
        let cfg = GroupSparsityConfig::new(4, 2, 1.0, 0.0).unwrap();
        let alpha = sample_activity(&cfg, &mut stream(1, 0)).unwrap();
        assert_eq!(alpha.as_slice(), &[1, 1, 0, 0]);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(GroupSparsityConfig::new(10, 3, 0.1, 0.1).is_err());
        assert!(GroupSparsityConfig::new(10, 0, 0.1, 0.1).is_err());
        assert!(GroupSparsityConfig::new(10, 5, 1.1, 0.1).is_err());
        assert!(GroupSparsityConfig::new(10, 5, 0.1, -0.1).is_err());
        assert!(GroupSparsityConfig::new(0, 1, 0.1, 0.1).is_err());
    }

    #[test]
    fn mean_and_ratio_round_trip() {
        let cfg = GroupSparsityConfig::from_mean_and_ratio(100, 10, 0.1, 3.0).unwrap();
        assert!((cfg.p1 - 0.15).abs() < 1e-15);
        assert!((cfg.p2 - 0.05).abs() < 1e-15);
        assert!((cfg.mean_activity() - 0.1).abs() < 1e-15);
        // odd G: three odd groups, two even
        let cfg = GroupSparsityConfig::from_mean_and_ratio(50, 5, 0.2, 2.0).unwrap();
        assert_eq!((cfg.odd_groups(), cfg.even_groups()), (3, 2));
        assert!((cfg.mean_activity() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn masking_by_hand() {
        let h = ComplexMatrix::new(array![[1.0, 3.0], [4.0, 0.0]], array![[2.0, 0.0], [0.0, 5.0]])
            .unwrap();
        let alpha = ActivityVector::from_bools([true, false]);
        let s = build_signal(&alpha, &h).unwrap();
        assert_eq!(s.x.re, array![[1.0, 3.0], [0.0, 0.0]]);
        assert_eq!(s.x.im, array![[2.0, 0.0], [0.0, 0.0]]);

        let all = build_signal(&ActivityVector::from_bools([true, true]), &h).unwrap();
        assert_eq!(all.x, h);
        let none = build_signal(&ActivityVector::zeros(2), &h).unwrap();
        assert!(none.x.is_zero());
    }

    #[test]
    fn build_signal_dimension_mismatch() {
        let h = ComplexMatrix::zeros(3, 2);
        assert!(build_signal(&ActivityVector::zeros(2), &h).is_err());
    }

    #[test]
    fn measure_rejects_negative_noise_and_bad_shapes() {
        let a = SensingMatrix::new(ComplexMatrix::zeros(2, 4));
        let x = ComplexMatrix::zeros(4, 3);
        assert!(measure(&a, &x, -1.0, &mut stream(0, 0)).is_err());
        assert!(measure(&a, &ComplexMatrix::zeros(5, 3), 0.0, &mut stream(0, 0)).is_err());
        let y = measure(&a, &x, 0.0, &mut stream(0, 0)).unwrap();
        assert!(y.y.is_zero());
    }

    #[test]
    fn activity_from_f64_rejects_non_binary() {
        assert!(ActivityVector::from_f64(&[0.0, 1.0]).is_ok());
        assert!(matches!(
            ActivityVector::from_f64(&[0.0, 0.5]),
            Err(Error::NonBinary { index: 1, .. })
        ));
    }

    #[test]
    fn channels_need_positive_dims() {
        assert!(sample_channels(0, 2, &mut stream(0, 0)).is_err());
        assert!(sample_channels(2, 0, &mut stream(0, 0)).is_err());
    }
}

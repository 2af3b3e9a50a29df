//! Stationarizing hourly station records: missing values become 0, each
//! station's hour-of-day means are removed, then a centered circular moving
//! average is removed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Space, TimeSeriesMatrix, TimeStampVector};
use crate::tensor::Tensor;

/// Hours in the monthly moving average.
pub const MOVING_AVERAGE_KERNEL: usize = 720;

/// Everything subtracted from the raw record, kept for the inverse map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    /// `m × 24` hour-of-day means of the zero-filled record.
    pub hourly_means: Tensor,
    /// `m × n` moving average removed in the second step.
    pub moving_average: Tensor,
    pub kernel: usize,
    pub missing: usize,
}

impl PreprocessRecord {
    /// Adds the removed components back onto a series with the original stamps.
    pub fn restore(&self, series: &TimeSeriesMatrix) -> Result<Tensor> {
        let cal = series.stamps().as_calendar().ok_or_else(|| Error::InvalidStamps("restore needs calendar stamps".into()))?;
        if series.data().shape() != self.moving_average.shape() {
            return Err(Error::shape("restore needs the preprocessed shape"));
        }
        Ok(Tensor::from_fn(series.dim(), series.len(), |i, j| {
            series.data()[(i, j)] + self.hourly_means[(i, cal[j].hour as usize)] + self.moving_average[(i, j)]
        }))
    }
}

/// Centered moving average of `x` with circular wraparound. Even kernels
/// take one more point on the past side.
pub fn circular_moving_average(x: &[f64], kernel: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 || kernel == 0 {
        return x.to_vec();
    }
    let back = kernel / 2;
    let idx = |k: isize| x[k.rem_euclid(n as isize) as usize];
    let mut acc: f64 = (0..kernel as isize).map(|k| idx(k - back as isize)).sum();
    let mut out = vec![0.0; n];
    for j in 0..n {
        out[j] = acc / kernel as f64;
        let j = j as isize;
        acc += idx(j + (kernel - back) as isize) - idx(j - back as isize);
    }
    out
}

/// `raw` is `m × n` with NaN marking missing readings; `stamps` must be
/// consecutive hours.
pub fn wind_preprocess(raw: &Tensor, stamps: &TimeStampVector, kernel: usize) -> Result<(TimeSeriesMatrix, PreprocessRecord)> {
    let cal = stamps
        .as_calendar()
        .ok_or_else(|| Error::InvalidStamps("wind records need calendar stamps".into()))?;
    if cal.len() != raw.cols() {
        return Err(Error::MisalignedStations(format!("{} stamps for {} readings", cal.len(), raw.cols())));
    }
    if cal.windows(2).any(|w| w[1].hours_since_epoch() - w[0].hours_since_epoch() != 1) {
        return Err(Error::InvalidStamps("wind records must be hourly without gaps".into()));
    }
    let (m, n) = raw.shape();
    let mut filled = raw.clone();
    let mut missing = 0;
    for v in filled.as_mut_slice() {
        if !v.is_finite() {
            *v = 0.0;
            missing += 1;
        }
    }
    let mut hourly_means = Tensor::zeros(m, 24);
    let mut counts = [0usize; 24];
    for s in cal {
        counts[s.hour as usize] += 1;
    }
    for i in 0..m {
        for (j, s) in cal.iter().enumerate() {
            hourly_means[(i, s.hour as usize)] += filled[(i, j)];
        }
        for h in 0..24 {
            if counts[h] > 0 {
                hourly_means[(i, h)] /= counts[h] as f64;
            }
        }
    }
    let mut residual = Tensor::from_fn(m, n, |i, j| filled[(i, j)] - hourly_means[(i, cal[j].hour as usize)]);
    let mut moving_average = Tensor::zeros(m, n);
    for i in 0..m {
        let ma = circular_moving_average(residual.row(i), kernel);
        for j in 0..n {
            residual[(i, j)] -= ma[j];
        }
        moving_average.row_mut(i).copy_from_slice(&ma);
    }
    let series = TimeSeriesMatrix::new(residual, Space::Physical, stamps.clone())?;
    Ok((series, PreprocessRecord { hourly_means, moving_average, kernel, missing }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, standard_normal};
    use crate::series::CalendarStamp;

    fn hours(n: usize) -> TimeStampVector {
        TimeStampVector::hourly(CalendarStamp::new(2010, 1, 1, 0).unwrap(), n)
    }

    #[test]
    fn moving_average_matches_direct_window() {
        let x: Vec<f64> = (0..11).map(|k| (k * k) as f64).collect();
        for kernel in [1, 4, 5] {
            let ma = circular_moving_average(&x, kernel);
            for j in 0..11 {
                let direct: f64 = (0..kernel).map(|k| x[(j + 11 * 3 + k - kernel / 2) % 11]).sum::<f64>() / kernel as f64;
                assert!((ma[j] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_input_leaves_nothing() {
        let raw = Tensor::filled(2, 24 * 40, 6.5);
        let (s, rec) = wind_preprocess(&raw, &hours(24 * 40), MOVING_AVERAGE_KERNEL).unwrap();
        assert!(s.data().as_slice().iter().all(|v| v.abs() < 1e-12));
        assert!(rec.hourly_means.as_slice().iter().all(|v| *v == 6.5));
        assert!(rec.restore(&s).unwrap().max_abs_diff(&raw) < 1e-12);
    }

    #[test]
    fn diurnal_cycle_is_removed() {
        let n = 24 * 30;
        let raw = Tensor::from_fn(1, n, |_, j| 3.0 + libm::sin(2.0 * core::f64::consts::PI * j as f64 / 24.0));
        let (s, _) = wind_preprocess(&raw, &hours(n), MOVING_AVERAGE_KERNEL).unwrap();
        assert!(s.data().as_slice().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn missing_values_are_zero_filled_first() {
        let mut raw = Tensor::filled(1, 48, 2.0);
        raw[(0, 5)] = f64::NAN;
        let (_, rec) = wind_preprocess(&raw, &hours(48), 24).unwrap();
        assert_eq!(rec.missing, 1);
        assert_eq!(rec.hourly_means[(0, 5)], 1.0);
        assert_eq!(rec.hourly_means[(0, 6)], 2.0);
    }

    #[test]
    fn trend_and_noise_become_mean_stationary() {
        let n = 24 * 360;
        let mut rng = seeded(3);
        let raw = Tensor::from_fn(1, n, |_, j| {
            let t = j as f64 / n as f64;
            5.0 + 4.0 * t + 2.0 * libm::sin(2.0 * core::f64::consts::PI * j as f64 / 24.0) + standard_normal(&mut rng)
        });
        let (s, _) = wind_preprocess(&raw, &hours(n), MOVING_AVERAGE_KERNEL).unwrap();
        let r = s.data().row(0);
        // drop the wraparound month at each end, then compare the halves
        let body = &r[720..n - 720];
        let half = body.len() / 2;
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let sd = libm::sqrt(body.iter().map(|v| v * v).sum::<f64>() / body.len() as f64);
        let se = sd * libm::sqrt(2.0 / half as f64);
        let d = (mean(&body[..half]) - mean(&body[half..])).abs();
        assert!(d < 2.0 * se, "{d} vs {se}");
    }

    #[test]
    fn malformed_stamps_are_rejected() {
        let raw = Tensor::zeros(1, 3);
        assert!(matches!(wind_preprocess(&raw, &hours(4), 24), Err(Error::MisalignedStations(_))));
        assert!(wind_preprocess(&raw, &TimeStampVector::regular(0.0, 1.0, 3), 24).is_err());
        let gap = TimeStampVector::calendar(
            [0, 2, 4].iter().map(|h| CalendarStamp::from_hours_since_epoch(*h)).collect(),
        )
        .unwrap();
        assert!(matches!(wind_preprocess(&raw, &gap, 24), Err(Error::InvalidStamps(_))));
    }
}

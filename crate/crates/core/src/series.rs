//! Multivariate realizations, their time stamps and Markov labels, and the
//! sliding-window dataset construction shared by both deep models.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::optim::LrSchedule;
use crate::tensor::Tensor;

/// Which marginal space a series lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Physical,
    Gaussian,
}

impl Space {
    pub fn expect(self, found: Space) -> Result<()> {
        if self == found {
            Ok(())
        } else {
            Err(Error::SpaceTagMismatch { expected: self, found })
        }
    }
}

/// Naive (timezone-free) hourly calendar stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CalendarStamp {
    pub year: i32,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        _ => 28,
    }
}

// Howard Hinnant's days-from-civil / civil-from-days.
fn days_from_civil(y: i32, m: u8, d: u8) -> i64 {
    let y = if m <= 2 { y as i64 - 1 } else { y as i64 };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = m as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i32, u8, u8) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u8;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u8;
    let y = yoe + era * 400 + if m <= 2 { 1 } else { 0 };
    (y as i32, m, d)
}

impl CalendarStamp {
    pub fn new(year: i32, month: u8, day: u8, hour: u8) -> Result<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) || hour > 23 {
            return Err(Error::InvalidStamps(format!("{year}-{month}-{day} {hour}h is not a valid date-hour")));
        }
        Ok(Self { year, month, day, hour })
    }

    pub fn hours_since_epoch(&self) -> i64 {
        days_from_civil(self.year, self.month, self.day) * 24 + self.hour as i64
    }

    pub fn from_hours_since_epoch(hours: i64) -> Self {
        let (year, month, day) = civil_from_days(hours.div_euclid(24));
        Self { year, month, day, hour: hours.rem_euclid(24) as u8 }
    }

    pub fn plus_hours(&self, hours: i64) -> Self {
        Self::from_hours_since_epoch(self.hours_since_epoch() + hours)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StampKind {
    Unitless,
    Calendar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Stamps {
    Unitless(Vec<f64>),
    Calendar(Vec<CalendarStamp>),
}

/// Strictly increasing, uniformly spaced time stamps of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeStampVector {
    stamps: Stamps,
}

const SPACING_TOL: f64 = 1e-6;

impl TimeStampVector {
    pub fn unitless(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidStamps("non-finite stamp".into()));
        }
        if values.len() >= 2 {
            let step = values[1] - values[0];
            if step <= 0.0 {
                return Err(Error::InvalidStamps("stamps must be strictly increasing".into()));
            }
            for w in values.windows(2) {
                let d = w[1] - w[0];
                if d <= 0.0 {
                    return Err(Error::InvalidStamps("stamps must be strictly increasing".into()));
                }
                if libm::fabs(d - step) > SPACING_TOL * step.max(libm::fabs(w[1])) {
                    return Err(Error::InvalidStamps(format!("non-uniform spacing {d} vs {step}")));
                }
            }
        }
        Ok(Self { stamps: Stamps::Unitless(values) })
    }

    /// `start, start + dt, …` (`n` stamps).
    pub fn regular(start: f64, dt: f64, n: usize) -> Self {
        Self { stamps: Stamps::Unitless((0..n).map(|j| start + dt * j as f64).collect()) }
    }

    pub fn calendar(values: Vec<CalendarStamp>) -> Result<Self> {
        for s in &values {
            CalendarStamp::new(s.year, s.month, s.day, s.hour)?;
        }
        if values.len() >= 2 {
            let step = values[1].hours_since_epoch() - values[0].hours_since_epoch();
            if step <= 0 {
                return Err(Error::InvalidStamps("stamps must be strictly increasing".into()));
            }
            for w in values.windows(2) {
                if w[1].hours_since_epoch() - w[0].hours_since_epoch() != step {
                    return Err(Error::InvalidStamps("non-uniform calendar spacing".into()));
                }
            }
        }
        Ok(Self { stamps: Stamps::Calendar(values) })
    }

    pub fn hourly(start: CalendarStamp, n: usize) -> Self {
        Self { stamps: Stamps::Calendar((0..n as i64).map(|h| start.plus_hours(h)).collect()) }
    }

    pub fn kind(&self) -> StampKind {
        match self.stamps {
            Stamps::Unitless(_) => StampKind::Unitless,
            Stamps::Calendar(_) => StampKind::Calendar,
        }
    }

    pub fn len(&self) -> usize {
        match &self.stamps {
            Stamps::Unitless(v) => v.len(),
            Stamps::Calendar(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_unitless(&self) -> Option<&[f64]> {
        match &self.stamps {
            Stamps::Unitless(v) => Some(v),
            Stamps::Calendar(_) => None,
        }
    }

    pub fn as_calendar(&self) -> Option<&[CalendarStamp]> {
        match &self.stamps {
            Stamps::Calendar(v) => Some(v),
            Stamps::Unitless(_) => None,
        }
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        let stamps = match &self.stamps {
            Stamps::Unitless(v) => Stamps::Unitless(v[range].to_vec()),
            Stamps::Calendar(v) => Stamps::Calendar(v[range].to_vec()),
        };
        Self { stamps }
    }

    /// `others` appended after `self`; the result must stay uniform.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        match (&self.stamps, &other.stamps) {
            (Stamps::Unitless(a), Stamps::Unitless(b)) => {
                Self::unitless(a.iter().chain(b).copied().collect())
            }
            (Stamps::Calendar(a), Stamps::Calendar(b)) => {
                Self::calendar(a.iter().chain(b).copied().collect())
            }
            _ => Err(Error::InvalidStamps("cannot mix unitless and calendar stamps".into())),
        }
    }

    /// The `k` stamps that would follow this vector at its own spacing
    /// (unit spacing for vectors shorter than two).
    pub fn continuation(&self, k: usize) -> Self {
        match &self.stamps {
            Stamps::Unitless(v) => {
                let step = if v.len() >= 2 { v[1] - v[0] } else { 1.0 };
                let last = v.last().copied().unwrap_or(-step);
                Self::regular(last + step, step, k)
            }
            Stamps::Calendar(v) => {
                let step = if v.len() >= 2 { v[1].hours_since_epoch() - v[0].hours_since_epoch() } else { 1 };
                let last = v.last().map_or(0, |s| s.hours_since_epoch());
                let stamps = (1..=k as i64).map(|i| CalendarStamp::from_hours_since_epoch(last + i * step)).collect();
                Self { stamps: Stamps::Calendar(stamps) }
            }
        }
    }

    /// Same kind and spacing, starting at this vector's first stamp, `n` long.
    pub fn restamped(&self, n: usize) -> Self {
        match &self.stamps {
            Stamps::Unitless(v) => {
                let step = if v.len() >= 2 { v[1] - v[0] } else { 1.0 };
                Self::regular(v.first().copied().unwrap_or(0.0), step, n)
            }
            Stamps::Calendar(v) => {
                let step = if v.len() >= 2 { v[1].hours_since_epoch() - v[0].hours_since_epoch() } else { 1 };
                let first = v.first().map_or(0, |s| s.hours_since_epoch());
                let stamps = (0..n as i64).map(|i| CalendarStamp::from_hours_since_epoch(first + i * step)).collect();
                Self { stamps: Stamps::Calendar(stamps) }
            }
        }
    }
}

/// An `m × n` realization; row `i` is location `i`, column `j` the stamp `t_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesMatrix {
    data: Tensor,
    space: Space,
    stamps: TimeStampVector,
}

impl TimeSeriesMatrix {
    pub fn new(data: Tensor, space: Space, stamps: TimeStampVector) -> Result<Self> {
        if data.cols() != stamps.len() {
            return Err(Error::shape(format!(
                "{} columns but {} time stamps",
                data.cols(),
                stamps.len()
            )));
        }
        if !data.is_finite() {
            return Err(Error::NonFiniteResult("series contains non-finite entries".into()));
        }
        Ok(Self { data, space, stamps })
    }

    /// Series on unit-less stamps `0, dt, 2dt, …`.
    pub fn regular(data: Tensor, space: Space, dt: f64) -> Result<Self> {
        let n = data.cols();
        Self::new(data, space, TimeStampVector::regular(0.0, dt, n))
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_data(self) -> Tensor {
        self.data
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn stamps(&self) -> &TimeStampVector {
        &self.stamps
    }

    /// Number of locations.
    pub fn dim(&self) -> usize {
        self.data.rows()
    }

    /// Number of time stamps.
    pub fn len(&self) -> usize {
        self.data.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.cols() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j)
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            data: self.data.slice_cols(range.start, range.len()),
            space: self.space,
            stamps: self.stamps.slice(range),
        }
    }

    /// Same stamps, new values and space tag.
    pub fn with_data(&self, data: Tensor, space: Space) -> Result<Self> {
        Self::new(data, space, self.stamps.clone())
    }
}

/// Integer Markov labels `y_1..y_n`, each in `0..n_states`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkovStateSequence {
    states: Vec<usize>,
    n_states: usize,
}

impl MarkovStateSequence {
    pub fn new(states: Vec<usize>, n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidParameter("n_states must be positive".into()));
        }
        if let Some(&state) = states.iter().find(|&&s| s >= n_states) {
            return Err(Error::InvalidState { state, n_states });
        }
        Ok(Self { states, n_states })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        Self { states: self.states[range].to_vec(), n_states: self.n_states }
    }
}

/// A realization together with its Markov labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub series: TimeSeriesMatrix,
    pub states: MarkovStateSequence,
}

impl Realization {
    pub fn new(series: TimeSeriesMatrix, states: MarkovStateSequence) -> Result<Self> {
        if series.len() != states.len() {
            return Err(Error::shape(format!(
                "series has {} stamps but {} states",
                series.len(),
                states.len()
            )));
        }
        Ok(Self { series, states })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        Self { series: self.series.slice(range.clone()), states: self.states.slice(range) }
    }
}

/// One encoder input block followed immediately by its target block.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    /// Column of the source realization where the window starts.
    pub start: usize,
    pub enc_x: Tensor,
    pub enc_y: Vec<usize>,
    pub enc_t: TimeStampVector,
    pub out_y: Vec<usize>,
    pub out_t: TimeStampVector,
    pub target_x: Tensor,
}

/// Architecture and training settings shared by the two deep models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub q_enc_in: usize,
    pub q_out: usize,
    pub q_dec_in: usize,
    pub n_clusters: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_head: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    pub n_markov: usize,
    pub markov_order: usize,
    pub eta: f64,
    pub dropout_rate: f64,
    pub lr_schedule: LrSchedule,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub focal_gamma: f64,
    pub tail_class_weight: f64,
}

impl HyperParams {
    /// Settings reported for the three-location SDE benchmark.
    pub fn paper_sde() -> Self {
        Self {
            q_enc_in: 40,
            q_out: 20,
            q_dec_in: 20,
            n_clusters: 300,
            d_model: 1024,
            d_ff: 2048,
            n_head: 8,
            n_enc: 3,
            n_dec: 3,
            n_markov: 3,
            markov_order: 10,
            eta: 0.9,
            dropout_rate: 0.05,
            lr_schedule: LrSchedule::paper(),
            max_epochs: 20,
            batch_size: 128,
            early_stop_patience: 3,
            focal_gamma: 2.0,
            tail_class_weight: 1.3,
        }
    }

    /// Settings reported for the six-station hourly wind example.
    pub fn paper_wind() -> Self {
        Self {
            q_enc_in: 48,
            q_out: 48,
            q_dec_in: 48,
            d_model: 512,
            n_enc: 4,
            n_dec: 4,
            markov_order: 36,
            tail_class_weight: 1.2,
            ..Self::paper_sde()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("q_enc_in", self.q_enc_in),
            ("q_out", self.q_out),
            ("q_dec_in", self.q_dec_in),
            ("n_clusters", self.n_clusters),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("n_head", self.n_head),
            ("n_enc", self.n_enc),
            ("n_dec", self.n_dec),
            ("n_markov", self.n_markov),
            ("markov_order", self.markov_order),
            ("max_epochs", self.max_epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.n_head != 0 {
            return Err(Error::InvalidParameter(format!(
                "d_model {} is not divisible by n_head {}",
                self.d_model, self.n_head
            )));
        }
        if self.q_dec_in > self.q_enc_in {
            return Err(Error::InvalidParameter("q_dec_in must not exceed q_enc_in".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta = {} is outside (0, 1)", self.eta)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParameter("dropout_rate must lie in [0, 1)".into()));
        }
        if self.focal_gamma < 0.0 || self.tail_class_weight <= 0.0 {
            return Err(Error::InvalidParameter("focal_gamma >= 0 and tail_class_weight > 0 required".into()));
        }
        Ok(())
    }
}

/// Number of sliding windows a realization of length `n` yields.
pub fn window_count(n: usize, q_enc_in: usize, q_out: usize) -> usize {
    (n + 1).saturating_sub(q_enc_in + q_out)
}

/// All `n − q_enc_in − q_out + 1` windows of one realization; window `k`
/// covers columns `k .. k + q_enc_in + q_out`.
pub fn build_windows(series: &TimeSeriesMatrix, states: &MarkovStateSequence, hp: &HyperParams) -> Result<Vec<WindowPair>> {
    build_windows_with(series, states, hp.q_enc_in, hp.q_out)
}

pub fn build_windows_with(
    series: &TimeSeriesMatrix,
    states: &MarkovStateSequence,
    q_enc_in: usize,
    q_out: usize,
) -> Result<Vec<WindowPair>> {
    let n = series.len();
    if states.len() != n {
        return Err(Error::shape(format!("{} states for {n} stamps", states.len())));
    }
    let span = q_enc_in + q_out;
    if n < span {
        return Err(Error::SeriesTooShort { len: n, required: span });
    }
    let data = series.data();
    let y = states.states();
    let t = series.stamps();
    Ok((0..window_count(n, q_enc_in, q_out))
        .map(|k| WindowPair {
            start: k,
            enc_x: data.slice_cols(k, q_enc_in),
            enc_y: y[k..k + q_enc_in].to_vec(),
            enc_t: t.slice(k..k + q_enc_in),
            out_y: y[k + q_enc_in..k + span].to_vec(),
            out_t: t.slice(k + q_enc_in..k + span),
            target_x: data.slice_cols(k + q_enc_in, q_out),
        })
        .collect())
}

/// Windows of every realization; windows never straddle two realizations.
pub fn build_dataset(realizations: &[Realization], q_enc_in: usize, q_out: usize) -> Result<Vec<WindowPair>> {
    let mut out = Vec::new();
    for r in realizations {
        out.extend(build_windows_with(&r.series, &r.states, q_enc_in, q_out)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// First `⌊η·n⌋` stamps of each realization train, the rest validate.
    ByTime,
    /// First `⌊η·R⌋` realizations train, the rest validate.
    ByRealization,
}

/// Splits before any windowing, so no window mixes training and validation data.
pub fn split_train_validation(
    realizations: &[Realization],
    eta: f64,
    mode: SplitMode,
) -> Result<(Vec<Realization>, Vec<Realization>)> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} is outside (0, 1)")));
    }
    if realizations.is_empty() {
        return Err(Error::DegenerateSplit("no realizations".into()));
    }
    match mode {
        SplitMode::ByRealization => {
            let r = realizations.len();
            let n_train = libm::floor(eta * r as f64) as usize;
            if n_train == 0 || n_train == r {
                return Err(Error::DegenerateSplit(format!("{n_train} of {r} realizations would train")));
            }
            Ok((realizations[..n_train].to_vec(), realizations[n_train..].to_vec()))
        }
        SplitMode::ByTime => {
            let mut train = Vec::with_capacity(realizations.len());
            let mut val = Vec::with_capacity(realizations.len());
            for real in realizations {
                let n = real.len();
                let cut = libm::floor(eta * n as f64) as usize;
                if cut == 0 || cut == n {
                    return Err(Error::DegenerateSplit(format!("{cut} of {n} stamps would train")));
                }
                train.push(real.slice(0..cut));
                val.push(real.slice(cut..n));
            }
            Ok((train, val))
        }
    }
}

/// Stacks realizations along time. The result is re-stamped continuously at the
/// first realization's spacing so that its stamps stay strictly increasing.
pub fn concat_realizations(parts: &[TimeSeriesMatrix]) -> Result<TimeSeriesMatrix> {
    let first = parts.first().ok_or(Error::EmptyInput)?;
    let m = first.dim();
    for p in parts {
        if p.dim() != m {
            return Err(Error::shape(format!("cannot stack {}-variate and {m}-variate series", p.dim())));
        }
        first.space().expect(p.space())?;
        if p.stamps().kind() != first.stamps().kind() {
            return Err(Error::shape("mixed stamp kinds"));
        }
    }
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut data = Tensor::zeros(m, total);
    for i in 0..m {
        let row = data.row_mut(i);
        let mut offset = 0;
        for p in parts {
            row[offset..offset + p.len()].copy_from_slice(p.row(i));
            offset += p.len();
        }
    }
    let stamps = first.stamps().restamped(total);
    TimeSeriesMatrix::new(data, first.space(), stamps)
}

/// Inverse of [`concat_realizations`] for equal-length pieces.
pub fn split_concatenated(series: &TimeSeriesMatrix, piece_len: usize, stamps: &TimeStampVector) -> Result<Vec<TimeSeriesMatrix>> {
    if piece_len == 0 || series.len() % piece_len != 0 || stamps.len() != piece_len {
        return Err(Error::shape(format!("cannot cut {} stamps into pieces of {piece_len}", series.len())));
    }
    (0..series.len() / piece_len)
        .map(|k| {
            let data = series.data().slice_cols(k * piece_len, piece_len);
            TimeSeriesMatrix::new(data, series.space(), stamps.clone())
        })
        .collect()
}

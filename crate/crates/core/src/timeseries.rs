//! Case-count ingestion: JHU-layout cumulative CSVs to daily count series.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed interval of physical inputs (days, or the toy problems' x range).
///
/// Kernel fits and quadrature work on the unit interval; simulators receive
/// physical coordinates through this map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Argument(format!("domain needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub const UNIT: Domain = Domain { lo: 0.0, hi: 1.0 };

    #[inline]
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn to_physical(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }

    #[inline]
    pub fn to_unit(&self, x: f64) -> f64 {
        (x - self.lo) / (self.hi - self.lo)
    }
}

/// Per-day cumulative totals for one country.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeSeries {
    pub country: String,
    pub dates: Vec<NaiveDate>,
    pub cumulative: Vec<u64>,
}

/// Observed counts `y_i` at unit-interval locations `x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub x: Vec<f64>,
    pub y: Vec<u64>,
    /// Number of negative raw increments that were clamped to zero.
    pub clamp_count: usize,
    /// Physical extent of the unit interval.
    pub domain: Domain,
    /// Calendar date of `x = 0` when the series comes from case data.
    pub day0: Option<NaiveDate>,
}

impl TimeSeries {
    /// Builds a series, checking `x` is strictly increasing inside `[0, 1]`.
    pub fn new(x: Vec<f64>, y: Vec<u64>, domain: Domain) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Argument(format!(
                "x has {} entries but y has {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Range("series locations must lie in [0, 1]".into()));
        }
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("series locations must be strictly increasing".into()));
        }
        Ok(Self { x, y, clamp_count: 0, domain, day0: None })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn y_f64(&self) -> Vec<f64> {
        self.y.iter().map(|&v| v as f64).collect()
    }

    /// Physical location of observation `i`.
    pub fn x_physical(&self) -> Vec<f64> {
        self.x.iter().map(|&u| self.domain.to_physical(u)).collect()
    }
}

const DATE_FORMAT: &str = "%m/%d/%y";

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|e| Error::Format(format!("bad date column {s:?}: {e}")))
}

/// Reads the JHU global time-series layout and sums all rows of `country`.
///
/// Header: `Province/State,Country/Region,Lat,Long,<M/D/YY>...`.
pub fn parse_cumulative_csv(bytes: &[u8], country: &str) -> Result<CumulativeSeries> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .clone();
    if header.len() < 5 {
        return Err(Error::Format("header has no date columns".into()));
    }
    if header.get(1).map(str::trim) != Some("Country/Region") {
        return Err(Error::Format("second column must be Country/Region".into()));
    }
    let dates = header.iter().skip(4).map(parse_date).collect::<Result<Vec<_>>>()?;
    for w in dates.windows(2) {
        if w[1] != w[0] + Duration::days(1) {
            return Err(Error::Format(format!("dates not consecutive: {} then {}", w[0], w[1])));
        }
    }

    let mut total = vec![0u64; dates.len()];
    let mut matched = false;
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("row {}: {e}", row_no + 2)))?;
        if record.len() != header.len() {
            return Err(Error::Format(format!(
                "row {} has {} fields, header has {}",
                row_no + 2,
                record.len(),
                header.len()
            )));
        }
        if record.get(1).map(str::trim) != Some(country) {
            continue;
        }
        matched = true;
        for (slot, field) in total.iter_mut().zip(record.iter().skip(4)) {
            let v: u64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("row {}: count {field:?} is not a non-negative integer", row_no + 2))
            })?;
            *slot += v;
        }
    }
    if !matched {
        return Err(Error::NotFound(format!("country {country:?}")));
    }
    Ok(CumulativeSeries { country: country.to_string(), dates, cumulative: total })
}

/// Daily increments for each day in `[start, end]`; the cumulative value of
/// the day before `start` must be present.
pub fn to_daily_increments(s: &CumulativeSeries, start: NaiveDate, end: NaiveDate) -> Result<TimeSeries> {
    if start >= end {
        return Err(Error::Range(format!("window start {start} is not before end {end}")));
    }
    let (Some(&first), Some(&last)) = (s.dates.first(), s.dates.last()) else {
        return Err(Error::Range("series is empty".into()));
    };
    let before = start - Duration::days(1);
    if before < first || end > last {
        return Err(Error::Range(format!(
            "window {start}..={end} needs data from {before}, available {first}..={last}"
        )));
    }
    let i0 = (start - first).num_days() as usize;
    let i1 = (end - first).num_days() as usize;
    let n = i1 - i0 + 1;

    let mut y = Vec::with_capacity(n);
    let mut clamp_count = 0;
    for i in i0..=i1 {
        let diff = s.cumulative[i] as i128 - s.cumulative[i - 1] as i128;
        if diff < 0 {
            clamp_count += 1;
            y.push(0);
        } else {
            y.push(diff as u64);
        }
    }
    let step = 1.0 / (n - 1) as f64;
    let x = (0..n).map(|i| if i + 1 == n { 1.0 } else { i as f64 * step }).collect();
    Ok(TimeSeries {
        x,
        y,
        clamp_count,
        domain: Domain { lo: 0.0, hi: (n - 1) as f64 },
        day0: Some(start),
    })
}

/// On-disk form of an ingested series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesDocument {
    pub country: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub x: Vec<f64>,
    pub y: Vec<u64>,
    pub clamp_count: usize,
    pub day0: NaiveDate,
}

impl SeriesDocument {
    pub fn from_series(country: &str, ts: &TimeSeries) -> Result<Self> {
        let day0 = ts.day0.ok_or_else(|| Error::Argument("series has no calendar anchor".into()))?;
        let end = day0 + Duration::days(ts.domain.hi.round() as i64);
        Ok(Self {
            country: country.to_string(),
            start: day0,
            end,
            x: ts.x.clone(),
            y: ts.y.clone(),
            clamp_count: ts.clamp_count,
            day0,
        })
    }

    pub fn into_series(self) -> Result<TimeSeries> {
        let days = (self.end - self.start).num_days();
        if days < 1 {
            return Err(Error::Format("series document has end <= start".into()));
        }
        let mut ts = TimeSeries::new(self.x, self.y, Domain { lo: 0.0, hi: days as f64 })?;
        ts.clamp_count = self.clamp_count;
        ts.day0 = Some(self.day0);
        Ok(ts)
    }
}

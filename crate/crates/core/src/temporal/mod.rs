//! Evening departure volumes: the linear volume recurrence, per-origin
//! parameter fits, and additive models linking parameters to station features.

pub mod bspline;
pub mod gam;
pub mod recurrence;

use std::io::{Read, Write};

use chrono::NaiveTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gam::{fit_gam, GamConfig, GamModel, Link};
pub use recurrence::{fit_recurrence_params, simulate_volume_series, RecurrenceFit, Simulation, TemporalParams};

/// Default bin width in minutes.
pub const BIN_MINUTES: u32 = 10;
/// Bins in the 17:00-24:00 evening window at the default width.
pub const EVENING_BINS: usize = 42;

pub fn evening_start() -> NaiveTime {
    NaiveTime::from_hms_opt(17, 0, 0).expect("valid time")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSeries {
    pub origin: String,
    pub t_start: NaiveTime,
    pub bin_width: u32,
    pub values: Vec<f64>,
}

impl VolumeSeries {
    pub fn evening(origin: impl Into<String>, values: Vec<f64>) -> Self {
        VolumeSeries { origin: origin.into(), t_start: evening_start(), bin_width: BIN_MINUTES, values }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::invalid(format!("series for {} has fewer than two bins", self.origin)));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("series for {} has a negative or non-finite volume", self.origin)));
        }
        Ok(())
    }
}

pub fn write_series<W: Write>(w: W, series: &[VolumeSeries]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["origin", "bin_index", "volume"])?;
    for s in series {
        for (k, v) in s.values.iter().enumerate() {
            wtr.write_record([s.origin.as_str(), &k.to_string(), &v.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `origin,bin_index,volume`; bins of each origin must be contiguous from 0.
pub fn read_series<R: Read>(r: R) -> Result<Vec<VolumeSeries>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let mut out: Vec<VolumeSeries> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let k: usize = rec[1].parse().map_err(|e| Error::Parse(format!("bad bin index {:?}: {e}", &rec[1])))?;
        let v: f64 = rec[2].parse().map_err(|e| Error::Parse(format!("bad volume {:?}: {e}", &rec[2])))?;
        let pos = match out.iter().position(|s| s.origin == rec[0]) {
            Some(p) => p,
            None => {
                out.push(VolumeSeries::evening(&rec[0], Vec::new()));
                out.len() - 1
            }
        };
        let s = &mut out[pos];
        if k != s.values.len() {
            return Err(Error::Parse(format!("series {} skips to bin {k}", s.origin)));
        }
        s.values.push(v);
    }
    Ok(out)
}

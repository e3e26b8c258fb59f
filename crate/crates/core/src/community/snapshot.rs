//! Daily community snapshots and their pairwise variability.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::contingency::contingency_coefficient;
use super::Partition;
use crate::error::{Error, Result};
use crate::flowgraph::StationIndex;
use crate::ingest::parse_date;

/// Partitions of one day, one per period, over a shared station universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySnapshot {
    pub date: NaiveDate,
    pub periods: Vec<(String, Partition)>,
}

impl CommunitySnapshot {
    /// Labels over (period, station) items; a community id only matches within its own period.
    pub fn combined_labels(&self) -> Vec<(usize, usize)> {
        self.periods
            .iter()
            .enumerate()
            .flat_map(|(p, (_, part))| part.labels().iter().map(move |l| (p, *l)))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W, stations: &StationIndex) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["station_id", "period", "community_id"])?;
        for (period, part) in &self.periods {
            if part.len() != stations.len() {
                return Err(Error::PartitionSize { partition: part.len(), graph: stations.len() });
            }
            for (id, l) in stations.ids().iter().zip(part.labels()) {
                wtr.write_record([id.as_str(), period.as_str(), &l.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, date: NaiveDate, stations: &StationIndex) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut periods: Vec<(String, Vec<Option<usize>>)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let pos = stations.position(&rec[0])?;
            let c: usize = rec[2]
                .parse()
                .map_err(|e| Error::Parse(format!("bad community id {:?}: {e}", &rec[2])))?;
            let slot = match periods.iter().position(|(p, _)| p == &rec[1]) {
                Some(k) => k,
                None => {
                    periods.push((rec[1].to_string(), vec![None; stations.len()]));
                    periods.len() - 1
                }
            };
            periods[slot].1[pos] = Some(c);
        }
        let periods = periods
            .into_iter()
            .map(|(name, labels)| {
                let labels: Option<Vec<usize>> = labels.into_iter().collect();
                labels
                    .map(|l| (name.clone(), Partition::from_labels(&l)))
                    .ok_or_else(|| Error::Parse(format!("period {name} does not label every station")))
            })
            .collect::<Result<_>>()?;
        Ok(CommunitySnapshot { date, periods })
    }
}

/// Symmetric matrix of contingency coefficients between daily snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityMatrix {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<Vec<f64>>,
}

impl VariabilityMatrix {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        header.extend(self.dates.iter().map(|d| d.to_string()));
        wtr.write_record(&header)?;
        for (d, row) in self.dates.iter().zip(&self.values) {
            let mut rec = vec![d.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let dates = rdr
            .headers()?
            .iter()
            .skip(1)
            .map(parse_date)
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("bad value {v:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != dates.len() {
                return Err(Error::Parse("variability matrix is not square".into()));
            }
            values.push(row);
        }
        if values.len() != dates.len() {
            return Err(Error::Parse("variability matrix is not square".into()));
        }
        Ok(VariabilityMatrix { dates, values })
    }
}

pub fn snapshot_variability_matrix(snapshots: &[CommunitySnapshot]) -> Result<VariabilityMatrix> {
    if snapshots.len() < 2 {
        return Err(Error::invalid("at least two snapshots are required"));
    }
    let shape: Vec<(&str, usize)> = snapshots[0]
        .periods
        .iter()
        .map(|(p, part)| (p.as_str(), part.len()))
        .collect();
    for s in snapshots {
        let other: Vec<(&str, usize)> = s.periods.iter().map(|(p, part)| (p.as_str(), part.len())).collect();
        if other != shape {
            return Err(Error::invalid(format!(
                "snapshot {} does not share periods and stations with {}",
                s.date, snapshots[0].date
            )));
        }
    }
    let labels: Vec<Vec<(usize, usize)>> = snapshots.iter().map(|s| s.combined_labels()).collect();
    let n = snapshots.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = contingency_coefficient(&labels[i], &labels[j])?;
            values[i][j] = c;
            values[j][i] = c;
        }
    }
    Ok(VariabilityMatrix { dates: snapshots.iter().map(|s| s.date).collect(), values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(d: u32, parts: &[&[usize]]) -> CommunitySnapshot {
        CommunitySnapshot {
            date: NaiveDate::from_ymd_opt(2015, 4, d).unwrap(),
            periods: parts
                .iter()
                .enumerate()
                .map(|(k, l)| (format!("P{k}"), Partition::from_labels(l)))
                .collect(),
        }
    }

    #[test]
    fn identical_days_match_self_coefficient() {
        let p: &[&[usize]] = &[&[0, 0, 1, 1, 2, 2], &[0, 1, 1, 1, 2, 2]];
        let vm = snapshot_variability_matrix(&[day(7, p), day(8, p)]).unwrap();
        assert_eq!(vm.values[0][1], vm.values[0][0]);
        assert_eq!(vm.values[0][1], vm.values[1][0]);
        assert!(vm.values[0][0] < 1.0);
    }

    #[test]
    fn one_different_day_has_lower_row() {
        let same: &[&[usize]] = &[&[0, 0, 0, 1, 1, 1, 2, 2, 2], &[0, 0, 1, 1, 1, 2, 2, 2, 0]];
        let odd: &[&[usize]] = &[&[0, 1, 2, 0, 1, 2, 0, 1, 2], &[0, 0, 0, 0, 1, 1, 1, 1, 1]];
        let mut days: Vec<_> = (1..=17).map(|d| day(d, same)).collect();
        days.push(day(18, odd));
        let vm = snapshot_variability_matrix(&days).unwrap();
        for i in 0..17 {
            for j in 0..17 {
                assert!(vm.values[i][17] < vm.values[i][j]);
            }
        }
        assert!(vm.values.iter().flatten().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn csv_round_trip() {
        let p: &[&[usize]] = &[&[0, 0, 1, 1]];
        let q: &[&[usize]] = &[&[0, 1, 1, 1]];
        let vm = snapshot_variability_matrix(&[day(7, p), day(8, q)]).unwrap();
        let mut buf = Vec::new();
        vm.write_csv(&mut buf).unwrap();
        assert_eq!(VariabilityMatrix::read_csv(buf.as_slice()).unwrap(), vm);
    }

    #[test]
    fn needs_two_snapshots_with_shared_shape() {
        let p: &[&[usize]] = &[&[0, 0, 1, 1]];
        assert!(snapshot_variability_matrix(&[day(7, p)]).is_err());
        let q: &[&[usize]] = &[&[0, 0, 1]];
        assert!(snapshot_variability_matrix(&[day(7, p), day(8, q)]).is_err());
    }
}

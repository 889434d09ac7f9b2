//! Station panel loading, descriptive statistics, coordinate projection,
//! and train/test splitting.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WindvolError};

/// Wind-speed measurement height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Ws10,
    Ws100,
}

impl std::fmt::Display for Variable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variable::Ws10 => write!(f, "ws10"),
            Variable::Ws100 => write!(f, "ws100"),
        }
    }
}

impl std::str::FromStr for Variable {
    type Err = WindvolError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ws10" => Ok(Variable::Ws10),
            "ws100" => Ok(Variable::Ws100),
            other => Err(WindvolError::ConfigInvalid(format!(
                "unknown variable {other:?}, expected ws10 or ws100"
            ))),
        }
    }
}

/// A monitoring station with geographic and projected coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    /// Easting in metres (transverse Mercator, zone 32N).
    pub x: f64,
    /// Northing in metres.
    pub y: f64,
}

/// T x N panel of daily observations for one variable.
#[derive(Debug, Clone)]
pub struct Panel {
    /// Row-major T x N values.
    pub values: Vec<f64>,
    pub dates: Vec<NaiveDate>,
    pub stations: Vec<Station>,
    pub variable: Variable,
}

impl Panel {
    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn value(&self, t: usize, i: usize) -> f64 {
        self.values[t * self.n_stations() + i]
    }

    /// Column of observations for station `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        let n = self.n_stations();
        (0..self.n_days()).map(|t| self.values[t * n + i]).collect()
    }
}

/// Pooled descriptive statistics over all T x N cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsRow {
    pub variable: String,
    pub t: usize,
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub iqr: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    date: String,
    station_id: String,
    lon: f64,
    lat: f64,
    value: String,
}

/// Load a complete station panel from CSV with columns
/// `date, station_id, lon, lat, value`.
pub fn load_panel(path: &Path, variable: Variable) -> Result<Panel> {
    let file = std::fs::File::open(path)?;
    load_panel_from(file, variable)
}

pub fn load_panel_from<R: Read>(reader: R, variable: Variable) -> Result<Panel> {
    let mut rdr = csv::Reader::from_reader(reader);
    // (date, station) -> value
    let mut cells: BTreeMap<(NaiveDate, String), f64> = BTreeMap::new();
    let mut stations: BTreeMap<String, (f64, f64)> = BTreeMap::new();

    for (idx, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = idx as u64 + 2;
        let row = row.map_err(|e| WindvolError::UnparseableValue {
            line,
            detail: e.to_string(),
        })?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| {
            WindvolError::UnparseableValue {
                line,
                detail: format!("bad date {:?}: {e}", row.date),
            }
        })?;
        let value: f64 = row
            .value
            .trim()
            .parse()
            .map_err(|e| WindvolError::UnparseableValue {
                line,
                detail: format!("bad value {:?}: {e}", row.value),
            })?;
        if !value.is_finite() {
            return Err(WindvolError::UnparseableValue {
                line,
                detail: format!("non-finite value {value}"),
            });
        }
        stations.entry(row.station_id.clone()).or_insert((row.lon, row.lat));
        if cells.insert((date, row.station_id.clone()), value).is_some() {
            return Err(WindvolError::DuplicateRow {
                date,
                station: row.station_id,
            });
        }
    }

    if cells.is_empty() {
        return Err(WindvolError::EmptyPanel);
    }

    let dates: Vec<NaiveDate> = {
        let mut d: Vec<NaiveDate> = cells.keys().map(|(d, _)| *d).collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    for w in dates.windows(2) {
        if (w[1] - w[0]).num_days() != 1 {
            return Err(WindvolError::NonDailySpacing {
                prev: w[0],
                next: w[1],
            });
        }
    }

    let station_records: Vec<Station> = stations
        .iter()
        .map(|(id, &(lon, lat))| {
            let (x, y) = project_coordinates(lon, lat)?;
            Ok(Station {
                id: id.clone(),
                lon,
                lat,
                x,
                y,
            })
        })
        .collect::<Result<_>>()?;

    let n = station_records.len();
    let t_len = dates.len();
    let mut values = vec![0.0; t_len * n];
    for (ti, date) in dates.iter().enumerate() {
        for (si, st) in station_records.iter().enumerate() {
            match cells.get(&(*date, st.id.clone())) {
                Some(&v) => values[ti * n + si] = v,
                None => {
                    return Err(WindvolError::MissingCell {
                        date: *date,
                        station: st.id.clone(),
                    })
                }
            }
        }
    }

    Ok(Panel {
        values,
        dates,
        stations: station_records,
        variable,
    })
}

/// Write a panel back out in the load_panel CSV schema.
pub fn write_panel<W: Write>(panel: &Panel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["date", "station_id", "lon", "lat", "value"])?;
    for (ti, date) in panel.dates.iter().enumerate() {
        for (si, st) in panel.stations.iter().enumerate() {
            wtr.write_record([
                date.format("%Y-%m-%d").to_string(),
                st.id.clone(),
                format!("{}", st.lon),
                format!("{}", st.lat),
                format!("{}", panel.value(ti, si)),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Type-7 (linear interpolation) quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pooled descriptive statistics of a panel (Table 1 layout).
pub fn descriptive_stats(panel: &Panel) -> Result<StatsRow> {
    if panel.values.is_empty() {
        return Err(WindvolError::EmptyPanel);
    }
    let mut sorted = panel.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let count = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / count;
    let sd = if sorted.len() > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(StatsRow {
        variable: panel.variable.to_string(),
        t: panel.n_days(),
        n: panel.n_stations(),
        median: quantile_sorted(&sorted, 0.5),
        mean,
        iqr: quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25),
        sd,
        min: sorted[0],
        max: *sorted.last().unwrap(),
    })
}

// WGS84 ellipsoid and zone 32N parameters.
const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const TM_K0: f64 = 0.9996;
const TM_LON0_DEG: f64 = 9.0;
const TM_FALSE_EASTING: f64 = 500_000.0;

/// Transverse-Mercator forward projection (zone 32N: central meridian 9E,
/// scale 0.9996, WGS84). Kruger series, millimetre-level accurate within
/// the zone.
pub fn project_coordinates(lon: f64, lat: f64) -> Result<(f64, f64)> {
    if lat.abs() >= 89.0 {
        return Err(WindvolError::OutOfDomain(lat));
    }
    let n = WGS84_F / (2.0 - WGS84_F);
    let big_a = WGS84_A / (1.0 + n) * (1.0 + n * n / 4.0 + n.powi(4) / 64.0);
    let alpha = [
        n / 2.0 - 2.0 * n * n / 3.0 + 5.0 * n.powi(3) / 16.0,
        13.0 * n * n / 48.0 - 3.0 * n.powi(3) / 5.0,
        61.0 * n.powi(3) / 240.0,
    ];

    let phi = lat.to_radians();
    let lam = (lon - TM_LON0_DEG).to_radians();
    let t = {
        let s = (2.0 * n.sqrt()) / (1.0 + n);
        (phi.sin().atanh() - s * (s * phi.sin()).atanh()).sinh()
    };
    let xi_p = t.atan2(lam.cos());
    let eta_p = (lam.sin() / (t * t + lam.cos() * lam.cos()).sqrt()).asinh();

    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in alpha.iter().enumerate() {
        let k = 2.0 * (j as f64 + 1.0);
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }

    let x = TM_FALSE_EASTING + TM_K0 * big_a * eta;
    let y = TM_K0 * big_a * xi;
    Ok((x, y))
}

/// Split a panel at `boundary`: train contains all days strictly before it.
pub fn split(panel: &Panel, boundary: NaiveDate) -> Result<(Panel, Panel)> {
    let first = *panel.dates.first().ok_or(WindvolError::EmptyPanel)?;
    let last = *panel.dates.last().unwrap();
    if boundary <= first || boundary > last {
        return Err(WindvolError::BoundaryOutsideRange(boundary));
    }
    let cut = panel.dates.partition_point(|d| *d < boundary);
    let n = panel.n_stations();
    let train = Panel {
        values: panel.values[..cut * n].to_vec(),
        dates: panel.dates[..cut].to_vec(),
        stations: panel.stations.clone(),
        variable: panel.variable,
    };
    let test = Panel {
        values: panel.values[cut * n..].to_vec(),
        dates: panel.dates[cut..].to_vec(),
        stations: panel.stations.clone(),
        variable: panel.variable,
    };
    Ok((train, test))
}

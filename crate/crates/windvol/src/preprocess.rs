//! Deterministic-seasonality removal (STL-style decomposition) and AR(1)
//! filtering, producing the residual panel used by the volatility models.

use chrono::Datelike;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, WindvolError};
use crate::ingest::Panel;

/// Additive seasonal/trend/remainder decomposition of one series.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub seasonal: Vec<f64>,
    pub trend: Vec<f64>,
    pub remainder: Vec<f64>,
}

/// Conditional-least-squares AR(1) fit.
#[derive(Debug, Clone, Serialize)]
pub struct Ar1Fit {
    pub phi: f64,
    /// Residuals e_t = x_t - phi * x_{t-1}, t = 2..T (length T-1).
    #[serde(skip)]
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    /// Set when the CLS estimate fell outside (-1, 1) and was clamped.
    pub clamped: bool,
}

/// Residual panel after STL + AR(1) per station.
#[derive(Debug, Clone)]
pub struct ResidualPanel {
    /// Row-major (T-1) x N residual matrix.
    pub residuals: Vec<f64>,
    pub dates: Vec<chrono::NaiveDate>,
    pub station_ids: Vec<String>,
    pub phis: Vec<f64>,
    pub decompositions: Vec<Decomposition>,
}

impl ResidualPanel {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }
    pub fn n_stations(&self) -> usize {
        self.station_ids.len()
    }
    pub fn column(&self, i: usize) -> Vec<f64> {
        let n = self.n_stations();
        (0..self.n_rows()).map(|t| self.residuals[t * n + i]).collect()
    }
}

fn tricube(u: f64) -> f64 {
    let a = 1.0 - u.abs().powi(3);
    if a > 0.0 {
        a.powi(3)
    } else {
        0.0
    }
}

/// Local linear loess smoother with optional robustness weights.
/// `span` is the window size in points (clamped to the series length).
fn loess(y: &[f64], span: usize, rw: Option<&[f64]>) -> Vec<f64> {
    let n = y.len();
    let span = span.clamp(2, n);
    let mut out = vec![0.0; n];
    for t in 0..n {
        // window of `span` points nearest to t
        let half = span / 2;
        let mut lo = t.saturating_sub(half);
        if lo + span > n {
            lo = n - span;
        }
        let hi = lo + span;
        let d_max = ((t - lo).max(hi - 1 - t)) as f64;
        let d_max = d_max.max(1.0);

        let mut sw = 0.0;
        let mut swx = 0.0;
        let mut swy = 0.0;
        let mut swxx = 0.0;
        let mut swxy = 0.0;
        for j in lo..hi {
            let mut w = tricube((j as f64 - t as f64) / d_max);
            if let Some(r) = rw {
                w *= r[j];
            }
            if w <= 0.0 {
                continue;
            }
            let x = j as f64 - t as f64;
            sw += w;
            swx += w * x;
            swy += w * y[j];
            swxx += w * x * x;
            swxy += w * x * y[j];
        }
        if sw == 0.0 {
            out[t] = y[t];
            continue;
        }
        let det = sw * swxx - swx * swx;
        out[t] = if det.abs() < 1e-12 * sw.max(1.0) {
            swy / sw
        } else {
            // intercept of the local line at x = 0
            (swxx * swy - swx * swxy) / det
        };
    }
    out
}

fn next_odd_at_least(x: f64) -> usize {
    let mut k = x.ceil() as usize;
    if k % 2 == 0 {
        k += 1;
    }
    k
}

/// STL-style additive decomposition with periodic seasonal (cycle-subseries
/// means), a low-pass detrending of the seasonal, and a loess trend.
/// Two inner iterations and one outer robustness iteration.
pub fn stl_decompose(series: &[f64], period: usize) -> Result<Decomposition> {
    let cycle: Vec<usize> = (0..series.len()).map(|t| t % period).collect();
    stl_decompose_with_cycle(series, period, &cycle)
}

/// As [`stl_decompose`] but with explicit cycle-subseries indices, so
/// calendar-aware assignments (day-of-year with leap days clamped) can be
/// supplied.
pub fn stl_decompose_with_cycle(
    series: &[f64],
    period: usize,
    cycle: &[usize],
) -> Result<Decomposition> {
    let n = series.len();
    if period < 2 || n < 2 * period {
        return Err(WindvolError::SeriesTooShort {
            len: n,
            need: 2 * period.max(2),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(WindvolError::NonFinite);
    }
    assert_eq!(cycle.len(), n);

    // trend span: standard STL default with a periodic seasonal window
    let trend_span = next_odd_at_least(1.5 * period as f64).min(n);

    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut rw = vec![1.0; n];

    for outer in 0..2 {
        for _inner in 0..2 {
            // cycle-subseries smoothing: robust-weighted subseries means
            let detrended: Vec<f64> = (0..n).map(|t| series[t] - trend[t]).collect();
            let mut sums = vec![0.0; period];
            let mut wsum = vec![0.0; period];
            for t in 0..n {
                let c = cycle[t].min(period - 1);
                sums[c] += rw[t] * detrended[t];
                wsum[c] += rw[t];
            }
            let sub_mean: Vec<f64> = (0..period)
                .map(|c| if wsum[c] > 0.0 { sums[c] / wsum[c] } else { 0.0 })
                .collect();
            let raw_seasonal: Vec<f64> = (0..n).map(|t| sub_mean[cycle[t].min(period - 1)]).collect();

            // with a periodic seasonal (constant across cycles) the only
            // low-frequency content is its level; centre it so the trend
            // absorbs the mean without moving-average edge artifacts
            let lp = raw_seasonal.iter().sum::<f64>() / n as f64;
            for t in 0..n {
                seasonal[t] = raw_seasonal[t] - lp;
            }

            let deseason: Vec<f64> = (0..n).map(|t| series[t] - seasonal[t]).collect();
            trend = loess(&deseason, trend_span, Some(&rw));
        }

        if outer == 0 {
            // robustness weights from the remainder (bisquare)
            let rem: Vec<f64> = (0..n).map(|t| series[t] - seasonal[t] - trend[t]).collect();
            let mut abs: Vec<f64> = rem.iter().map(|r| r.abs()).collect();
            abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let med = abs[n / 2];
            let h = 6.0 * med;
            if h <= 0.0 {
                break;
            }
            for t in 0..n {
                let u = rem[t].abs() / h;
                rw[t] = if u < 1.0 { (1.0 - u * u).powi(2) } else { 0.0 };
            }
        }
    }

    let remainder: Vec<f64> = (0..n).map(|t| series[t] - seasonal[t] - trend[t]).collect();
    Ok(Decomposition {
        seasonal,
        trend,
        remainder,
    })
}

/// Conditional least squares AR(1): phi = sum x_t x_{t-1} / sum x_{t-1}^2.
pub fn fit_ar1(series: &[f64]) -> Result<Ar1Fit> {
    let n = series.len();
    if n < 30 {
        return Err(WindvolError::SeriesTooShort { len: n, need: 30 });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 1..n {
        num += series[t] * series[t - 1];
        den += series[t - 1] * series[t - 1];
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if den <= 0.0 || var < 1e-300 {
        return Err(WindvolError::DegenerateVariance);
    }
    let mut phi = num / den;
    let clamped = phi.abs() >= 1.0;
    if clamped {
        phi = 0.999 * phi.signum();
    }
    let residuals: Vec<f64> = (1..n).map(|t| series[t] - phi * series[t - 1]).collect();
    let sigma2 = residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64;
    Ok(Ar1Fit {
        phi,
        residuals,
        sigma2,
        clamped,
    })
}

/// Per-station STL + AR(1) over a panel. Returns the (T-1) x N residual
/// matrix together with the per-station AR coefficients and decompositions.
pub fn preprocess_panel(panel: &Panel, period: usize) -> Result<ResidualPanel> {
    let n = panel.n_stations();
    let t_len = panel.n_days();
    if n == 0 || t_len == 0 {
        return Err(WindvolError::EmptyPanel);
    }
    // day-of-year clamped to 365 for the seasonal subseries assignment
    let cycle: Vec<usize> = panel
        .dates
        .iter()
        .map(|d| (d.ordinal() as usize).min(365) - 1)
        .collect();

    let per_station: Vec<Result<(Decomposition, Ar1Fit)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let series = panel.column(i);
            let dec = stl_decompose_with_cycle(&series, period, &cycle)
                .map_err(|e| e.at_station(&panel.stations[i].id))?;
            let ar = fit_ar1(&dec.remainder).map_err(|e| e.at_station(&panel.stations[i].id))?;
            Ok((dec, ar))
        })
        .collect();

    let mut residuals = vec![0.0; (t_len - 1) * n];
    let mut phis = Vec::with_capacity(n);
    let mut decompositions = Vec::with_capacity(n);
    for (i, r) in per_station.into_iter().enumerate() {
        let (dec, ar) = r?;
        for t in 0..t_len - 1 {
            residuals[t * n + i] = ar.residuals[t];
        }
        phis.push(ar.phi);
        decompositions.push(dec);
    }

    Ok(ResidualPanel {
        residuals,
        dates: panel.dates[1..].to_vec(),
        station_ids: panel.stations.iter().map(|s| s.id.clone()).collect(),
        phis,
        decompositions,
    })
}

/// ResidualPanel CSV export (date, station_id, residual).
pub fn write_residuals<W: std::io::Write>(rp: &ResidualPanel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["date", "station_id", "residual"])?;
    let n = rp.n_stations();
    for (t, date) in rp.dates.iter().enumerate() {
        for i in 0..n {
            wtr.write_record([
                date.format("%Y-%m-%d").to_string(),
                rp.station_ids[i].clone(),
                format!("{}", rp.residuals[t * n + i]),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Load a residual panel written by [`write_residuals`].
pub fn read_residuals<R: std::io::Read>(reader: R) -> Result<ResidualPanel> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut cells: std::collections::BTreeMap<(chrono::NaiveDate, String), f64> =
        std::collections::BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let date = chrono::NaiveDate::parse_from_str(&row[0], "%Y-%m-%d").map_err(|e| {
            WindvolError::UnparseableValue {
                line: 0,
                detail: e.to_string(),
            }
        })?;
        let val: f64 = row[2].parse().map_err(|e| WindvolError::UnparseableValue {
            line: 0,
            detail: format!("{e}"),
        })?;
        cells.insert((date, row[1].to_string()), val);
    }
    if cells.is_empty() {
        return Err(WindvolError::EmptyPanel);
    }
    let mut dates: Vec<chrono::NaiveDate> = cells.keys().map(|(d, _)| *d).collect();
    dates.sort_unstable();
    dates.dedup();
    let mut ids: Vec<String> = cells.keys().map(|(_, s)| s.clone()).collect();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    let mut residuals = vec![0.0; dates.len() * n];
    for (t, d) in dates.iter().enumerate() {
        for (i, id) in ids.iter().enumerate() {
            residuals[t * n + i] =
                *cells
                    .get(&(*d, id.clone()))
                    .ok_or_else(|| WindvolError::MissingCell {
                        date: *d,
                        station: id.clone(),
                    })?;
        }
    }
    Ok(ResidualPanel {
        residuals,
        dates,
        station_ids: ids,
        phis: Vec::new(),
        decompositions: Vec::new(),
    })
}

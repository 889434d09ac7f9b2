//! Row-standardized spatial weight matrices: k-nearest-neighbour,
//! distance-band, and directional (advection-based) constructions, plus
//! shared utilities.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WindvolError};
use crate::ingest::Station;

/// Construction metadata for a weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Knn { k: usize },
    DistanceBand { radius_m: f64 },
    Directional { cutoff_m: f64, half_angle_deg: f64, decay_m: f64 },
    Combined { lambda: f64 },
    Custom,
}

/// Sparse row-standardized N x N spatial weight matrix.
/// Each row sums to 1, or to exactly 0 for isolated nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub n: usize,
    /// Per-row sparse entries (j, w_ij), w_ij > 0, j != i.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub kind: WeightKind,
    pub isolated: Vec<usize>,
}

impl WeightMatrix {
    /// Build from raw per-row entries, row-standardizing and recording
    /// isolated nodes.
    pub fn from_raw(n: usize, mut rows: Vec<Vec<(usize, f64)>>, kind: WeightKind) -> Self {
        let mut isolated = Vec::new();
        for (i, row) in rows.iter_mut().enumerate() {
            row.retain(|&(j, w)| j != i && w > 0.0);
            row.sort_by_key(|&(j, _)| j);
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            if sum > 0.0 {
                for e in row.iter_mut() {
                    e.1 /= sum;
                }
            } else {
                row.clear();
                isolated.push(i);
            }
        }
        WeightMatrix {
            n,
            rows,
            kind,
            isolated,
        }
    }

    /// All-zero matrix (every node isolated).
    pub fn zero(n: usize) -> Self {
        WeightMatrix {
            n,
            rows: vec![Vec::new(); n],
            kind: WeightKind::Custom,
            isolated: (0..n).collect(),
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, w)| w).sum()
    }

    /// y = W x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * x[j]).sum())
            .collect()
    }

    /// Sum of all weights.
    pub fn total_weight(&self) -> f64 {
        self.rows.iter().map(|r| r.iter().map(|&(_, w)| w).sum::<f64>()).sum()
    }

    /// Dense copy, for determinant/LU work in the panel models.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] = w;
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(jj, _)| jj == j)
            .map(|&(_, w)| w)
            .unwrap_or(0.0)
    }
}

/// Symmetric matrix of pairwise Euclidean distances (metres) over
/// projected coordinates; row-major N x N.
pub fn pairwise_distances(stations: &[Station]) -> Vec<f64> {
    let n = stations.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = stations[i].x - stations[j].x;
            let dy = stations[i].y - stations[j].y;
            let dist = (dx * dx + dy * dy).sqrt();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    d
}

/// k-nearest-neighbour weights: w_ij = 1/k for the k closest stations.
/// Distance ties are broken by ascending station id.
pub fn knn_weights(stations: &[Station], k: usize) -> Result<WeightMatrix> {
    let n = stations.len();
    if k >= n {
        return Err(WindvolError::KTooLarge { k, n });
    }
    let d = pairwise_distances(stations);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut cand: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        cand.sort_by(|&a, &b| {
            d[i * n + a]
                .partial_cmp(&d[i * n + b])
                .unwrap()
                .then_with(|| stations[a].id.cmp(&stations[b].id))
        });
        let row: Vec<(usize, f64)> = cand[..k].iter().map(|&j| (j, 1.0 / k as f64)).collect();
        rows.push(row);
    }
    Ok(WeightMatrix::from_raw(n, rows, WeightKind::Knn { k }))
}

/// Distance-band weights: w_ij = 1/n_i for 0 < d_ij <= r; isolated rows
/// stay all-zero.
pub fn distance_band_weights(stations: &[Station], radius_m: f64) -> WeightMatrix {
    let n = stations.len();
    let d = pairwise_distances(stations);
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && d[i * n + j] > 0.0 && d[i * n + j] <= radius_m)
                .map(|j| (j, 1.0))
                .collect()
        })
        .collect();
    WeightMatrix::from_raw(n, rows, WeightKind::DistanceBand { radius_m })
}

/// Parameters for directional (advection-based) weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionalParams {
    /// Prevailing wind bearing per station, degrees clockwise from north.
    pub prevailing_dir: Vec<f64>,
    pub half_angle_deg: f64,
    pub cutoff_m: f64,
    pub decay_m: f64,
}

impl DirectionalParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.prevailing_dir.len() != n {
            return Err(WindvolError::DimensionMismatch(self.prevailing_dir.len(), n));
        }
        if !(self.half_angle_deg > 0.0 && self.half_angle_deg <= 180.0) {
            return Err(WindvolError::InvalidParams(format!(
                "half_angle {} not in (0, 180]",
                self.half_angle_deg
            )));
        }
        if self.cutoff_m <= 0.0 || self.decay_m <= 0.0 {
            return Err(WindvolError::InvalidParams(
                "cutoff and decay must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Bearing from station i to station j, degrees clockwise from north.
fn bearing(from: &Station, to: &Station) -> f64 {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    let b = dx.atan2(dy).to_degrees();
    (b + 360.0) % 360.0
}

/// Circular distance between two bearings, in [0, 180].
fn angular_deviation(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Directional weights: upwind cone of half-angle delta around the
/// prevailing direction, exponential distance decay, cosine angular taper,
/// normalized within each upwind set. Rows with no upwind neighbour stay
/// all-zero.
pub fn directional_weights(stations: &[Station], params: &DirectionalParams) -> Result<WeightMatrix> {
    let n = stations.len();
    params.validate(n)?;
    let d = pairwise_distances(stations);
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let dist = d[i * n + j];
                    if dist <= 0.0 || dist > params.cutoff_m {
                        return None;
                    }
                    let dev = angular_deviation(bearing(&stations[i], &stations[j]), params.prevailing_dir[i]);
                    if dev > params.half_angle_deg {
                        return None;
                    }
                    // cosines past 90 degrees are floored at zero so weights stay nonnegative
                    let taper = dev.to_radians().cos().max(0.0);
                    let w = (-dist / params.decay_m).exp() * taper;
                    (w > 0.0).then_some((j, w))
                })
                .collect()
        })
        .collect();
    Ok(WeightMatrix::from_raw(
        n,
        rows,
        WeightKind::Directional {
            cutoff_m: params.cutoff_m,
            half_angle_deg: params.half_angle_deg,
            decay_m: params.decay_m,
        },
    ))
}

/// Circular mean of a series of bearings, mapped to [0, 360).
pub fn prevailing_direction(dir_series: &[f64]) -> Result<f64> {
    if dir_series.is_empty() {
        return Err(WindvolError::EmptyList);
    }
    let n = dir_series.len() as f64;
    let s: f64 = dir_series.iter().map(|d| d.to_radians().sin()).sum::<f64>() / n;
    let c: f64 = dir_series.iter().map(|d| d.to_radians().cos()).sum::<f64>() / n;
    if (s * s + c * c).sqrt() < 1e-12 {
        return Err(WindvolError::UndefinedDirection);
    }
    Ok((s.atan2(c).to_degrees() + 360.0) % 360.0)
}

/// lambda * W_a + (1 - lambda) * W_b, re-row-standardized.
pub fn combine_weights(w_a: &WeightMatrix, w_b: &WeightMatrix, lambda_mix: f64) -> Result<WeightMatrix> {
    if w_a.n != w_b.n {
        return Err(WindvolError::DimensionMismatch(w_a.n, w_b.n));
    }
    if !(0.0..=1.0).contains(&lambda_mix) {
        return Err(WindvolError::InvalidParams(format!(
            "lambda_mix {lambda_mix} not in [0,1]"
        )));
    }
    let n = w_a.n;
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let mut acc: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
            for &(j, w) in &w_a.rows[i] {
                *acc.entry(j).or_insert(0.0) += lambda_mix * w;
            }
            for &(j, w) in &w_b.rows[i] {
                *acc.entry(j).or_insert(0.0) += (1.0 - lambda_mix) * w;
            }
            acc.into_iter().collect()
        })
        .collect();
    Ok(WeightMatrix::from_raw(n, rows, WeightKind::Combined { lambda: lambda_mix }))
}

/// Coordinate-list CSV export (i, j, w), with station ids.
pub fn write_weights<W: std::io::Write>(w: &WeightMatrix, ids: &[String], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["i", "j", "w"])?;
    for (i, row) in w.rows.iter().enumerate() {
        for &(j, wij) in row {
            wtr.write_record([ids[i].clone(), ids[j].clone(), format!("{wij}")])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

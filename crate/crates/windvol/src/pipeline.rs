//! Pipeline orchestration: a declarative experiment configuration (TOML), a
//! stage runner that writes hash-stamped CSV/JSON artifacts, and the full
//! reproduction preset. Every artifact embeds the tool version and a hash of
//! the configuration that produced it, so a finished output directory is a
//! verifiable provenance chain; re-running a stage with identical config and
//! inputs is byte-identical, regardless of the thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics;
use crate::error::{Result, WindvolError};
use crate::evaluate::{self, ProxySeries, Rv5Mode};
use crate::ingest::{self, Panel, Station, Variable};
use crate::mvlogarch;
use crate::preprocess::{self, ResidualPanel};
use crate::sdpd;
use crate::stgarch;
use crate::unigarch;
use crate::weights::{self, DirectionalParams, WeightMatrix};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    /// Per-variable CSV paths (columns date, station_id, lon, lat, value).
    #[serde(default)]
    pub paths: BTreeMap<String, PathBuf>,
    /// Generate a bundled synthetic dataset when no path is configured.
    #[serde(default)]
    pub synthetic: bool,
    #[serde(default = "default_synth_stations")]
    pub synthetic_stations: usize,
    #[serde(default = "default_synth_days")]
    pub synthetic_days: usize,
    pub variables: Vec<String>,
}

fn default_synth_stations() -> usize {
    5
}
fn default_synth_days() -> usize {
    800
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: WeightSpecKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpecKind {
    Knn {
        k: usize,
    },
    DistanceBand {
        radius_m: f64,
    },
    Directional {
        cutoff_m: f64,
        half_angle_deg: f64,
        decay_m: f64,
        prevailing_dir_deg: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanModel {
    Ar1,
    Sdpd,
}

impl std::fmt::Display for MeanModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MeanModel::Ar1 => "ar1",
            MeanModel::Sdpd => "sdpd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolModel {
    UniGarch,
    UniEgarch,
    Starmagarch,
    MvLogarch,
}

impl std::fmt::Display for VolModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VolModel::UniGarch => "uni_garch",
            VolModel::UniEgarch => "uni_egarch",
            VolModel::Starmagarch => "starmagarch",
            VolModel::MvLogarch => "mv_logarch",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mean: MeanModel,
    pub volatility: VolModel,
    #[serde(default = "default_proxies")]
    pub proxies: Vec<String>,
    #[serde(default = "default_lambda")]
    pub ewma_lambda: f64,
}

fn default_proxies() -> Vec<String> {
    vec!["rv".into(), "ewma".into(), "rv5_sq".into(), "rv5_abs".into()]
}
fn default_lambda() -> f64 {
    0.94
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub split_date: NaiveDate,
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_period")]
    pub seasonal_period: usize,
    pub data: DataConfig,
    pub weights: Vec<WeightSpec>,
    pub model: ModelConfig,
}

fn default_period() -> usize {
    365
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(s).map_err(|e| WindvolError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| {
            WindvolError::ConfigInvalid(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.variables.is_empty() {
            return Err(WindvolError::ConfigInvalid("no variables configured".into()));
        }
        for v in &self.data.variables {
            v.parse::<Variable>()?;
            if !self.data.synthetic && !self.data.paths.contains_key(v) {
                return Err(WindvolError::ConfigInvalid(format!(
                    "no data path for variable {v} and synthetic generation is off"
                )));
            }
        }
        for (v, p) in &self.data.paths {
            if !p.exists() {
                return Err(WindvolError::ConfigInvalid(format!(
                    "data path for {v} does not exist: {}",
                    p.display()
                )));
            }
        }
        if self.weights.is_empty() {
            return Err(WindvolError::ConfigInvalid("no weight matrices configured".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for w in &self.weights {
            if !names.insert(&w.name) {
                return Err(WindvolError::ConfigInvalid(format!(
                    "duplicate weight-matrix name {}",
                    w.name
                )));
            }
            match &w.kind {
                WeightSpecKind::Knn { k } if *k == 0 => {
                    return Err(WindvolError::ConfigInvalid("knn k must be positive".into()))
                }
                WeightSpecKind::DistanceBand { radius_m } if *radius_m <= 0.0 => {
                    return Err(WindvolError::ConfigInvalid(
                        "distance-band radius must be positive".into(),
                    ))
                }
                _ => {}
            }
        }
        if !(self.model.ewma_lambda > 0.0 && self.model.ewma_lambda < 1.0) {
            return Err(WindvolError::ConfigInvalid(format!(
                "ewma_lambda {} outside (0,1)",
                self.model.ewma_lambda
            )));
        }
        if self.model.volatility == VolModel::MvLogarch && self.data.variables.len() != 2 {
            return Err(WindvolError::ConfigInvalid(
                "mv_logarch needs exactly two variables".into(),
            ));
        }
        Ok(())
    }

    /// Short hash of the canonical configuration serialization; stamped into
    /// every artifact. Execution concerns (output directory, thread count)
    /// are excluded so logically identical experiments get identical stamps.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        canonical.threads = 0;
        let canon = toml::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        hex_prefix(&digest, 12)
    }

    /// A ready-to-run configuration on bundled synthetic data.
    pub fn synthetic_preset(out_dir: &Path) -> Self {
        ExperimentConfig {
            seed: 42,
            out_dir: out_dir.to_path_buf(),
            split_date: NaiveDate::from_ymd_opt(2021, 9, 1).unwrap(),
            threads: 0,
            seasonal_period: 365,
            data: DataConfig {
                paths: BTreeMap::new(),
                synthetic: true,
                synthetic_stations: 5,
                synthetic_days: 800,
                variables: vec!["ws10".into(), "ws100".into()],
            },
            weights: vec![
                WeightSpec {
                    name: "knn".into(),
                    kind: WeightSpecKind::Knn { k: 2 },
                },
                WeightSpec {
                    name: "dist".into(),
                    kind: WeightSpecKind::DistanceBand { radius_m: 60_000.0 },
                },
                WeightSpec {
                    name: "dir".into(),
                    kind: WeightSpecKind::Directional {
                        cutoff_m: 120_000.0,
                        half_angle_deg: 45.0,
                        decay_m: 50_000.0,
                        prevailing_dir_deg: 270.0,
                    },
                },
            ],
            model: ModelConfig {
                mean: MeanModel::Ar1,
                volatility: VolModel::Starmagarch,
                proxies: default_proxies(),
                ewma_lambda: 0.94,
            },
        }
    }
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::new();
    for b in bytes {
        let _ = write!(s, "{b:02x}");
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

// ---------------------------------------------------------------------------
// Stage runner and artifact plumbing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Preprocess,
    Weights,
    Diagnose,
    FitUni,
    FitSt,
    FitSdpd,
    FitMv,
    Forecast,
    Evaluate,
    Report,
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    hash: String,
    watermark: Option<String>,
}

/// JSON artifact envelope: payload plus provenance.
#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    tool: String,
    version: String,
    config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    watermark: Option<String>,
    payload: T,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash();
        let watermark = if cfg.data.synthetic && cfg.data.paths.is_empty() {
            Some("synthetic".to_string())
        } else {
            None
        };
        std::fs::create_dir_all(&cfg.out_dir)?;
        if cfg.threads > 0 {
            // ignore failure: the global pool may already exist with the
            // same size from a previous call in-process
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build_global();
        }
        Ok(Pipeline {
            cfg,
            hash,
            watermark,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn header_comment(&self, tags: &[(&str, &str)]) -> String {
        let mut s = format!("# windvol {TOOL_VERSION} config={}", self.hash);
        if let Some(w) = &self.watermark {
            let _ = write!(s, " watermark={w}");
        }
        for (k, v) in tags {
            let _ = write!(s, " {k}={v}");
        }
        s.push('\n');
        s
    }

    fn write_csv_artifact(&self, name: &str, tags: &[(&str, &str)], body: &str) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, format!("{}{body}", self.header_comment(tags)))?;
        Ok(p)
    }

    fn read_csv_artifact(&self, name: &str) -> Result<(BTreeMap<String, String>, String)> {
        let p = self.path(name);
        if !p.exists() {
            return Err(WindvolError::MissingUpstream(name.to_string()));
        }
        let raw = std::fs::read_to_string(&p)?;
        let mut tags = BTreeMap::new();
        let mut body = String::new();
        for line in raw.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        tags.insert(k.to_string(), v.to_string());
                    }
                }
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        Ok((tags, body))
    }

    fn write_json_artifact<T: Serialize>(&self, name: &str, payload: &T) -> Result<PathBuf> {
        let env = Envelope {
            tool: "windvol".to_string(),
            version: TOOL_VERSION.to_string(),
            config_hash: self.hash.clone(),
            watermark: self.watermark.clone(),
            payload,
        };
        let p = self.path(name);
        let mut s = serde_json::to_string_pretty(&env)
            .map_err(|e| WindvolError::ConfigInvalid(e.to_string()))?;
        s.push('\n');
        std::fs::write(&p, s)?;
        Ok(p)
    }

    fn read_json_artifact<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        let p = self.path(name);
        if !p.exists() {
            return Err(WindvolError::MissingUpstream(name.to_string()));
        }
        let s = std::fs::read_to_string(&p)?;
        let env: Envelope<T> = serde_json::from_str(&s)
            .map_err(|e| WindvolError::ConfigInvalid(format!("{name}: {e}")))?;
        Ok(env.payload)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        match stage {
            Stage::Ingest => self.stage_ingest(),
            Stage::Preprocess => self.stage_preprocess(),
            Stage::Weights => self.stage_weights(),
            Stage::Diagnose => self.stage_diagnose(),
            Stage::FitUni => self.stage_fit_uni(),
            Stage::FitSt => self.stage_fit_st(),
            Stage::FitSdpd => self.stage_fit_sdpd(),
            Stage::FitMv => self.stage_fit_mv(),
            Stage::Forecast => self.stage_forecast(),
            Stage::Evaluate => self.stage_evaluate(),
            Stage::Report => self.stage_report(),
        }
    }

    /// The stages the configured model actually needs, in order.
    pub fn run_all(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        out.extend(self.stage_ingest()?);
        out.extend(self.stage_preprocess()?);
        out.extend(self.stage_weights()?);
        out.extend(self.stage_diagnose()?);
        match self.cfg.model.volatility {
            VolModel::UniGarch | VolModel::UniEgarch => {
                if self.cfg.model.mean == MeanModel::Sdpd {
                    out.extend(self.stage_fit_sdpd()?);
                }
                out.extend(self.stage_fit_uni()?);
            }
            VolModel::Starmagarch => {
                if self.cfg.model.mean == MeanModel::Sdpd {
                    out.extend(self.stage_fit_sdpd()?);
                }
                out.extend(self.stage_fit_st()?);
            }
            VolModel::MvLogarch => out.extend(self.stage_fit_mv()?),
        }
        out.extend(self.stage_forecast()?);
        out.extend(self.stage_evaluate()?);
        out.extend(self.stage_report()?);
        Ok(out)
    }

    // -- data access ------------------------------------------------------

    fn panel_source(&self, var: &str) -> Result<PathBuf> {
        if let Some(p) = self.cfg.data.paths.get(var) {
            return Ok(p.clone());
        }
        if self.cfg.data.synthetic {
            let p = self.path(&format!("synthetic_{var}.csv"));
            if !p.exists() {
                self.generate_synthetic()?;
            }
            return Ok(p);
        }
        Err(WindvolError::DataUnavailable(format!(
            "no CSV configured for {var}; download the Agrimonia daily dataset \
             (https://zenodo.org/records/7956006), export columns date, station_id, \
             lon, lat, value per height, and set [data.paths] in the config"
        )))
    }

    fn load_variable(&self, var: &str) -> Result<Panel> {
        let variable: Variable = var.parse()?;
        ingest::load_panel(&self.panel_source(var)?, variable)
    }

    fn load_panel_artifact(&self, name: &str) -> Result<Panel> {
        let (tags, body) = self.read_csv_artifact(name)?;
        let var = tags.get("variable").cloned().unwrap_or_default();
        let variable: Variable = var.parse()?;
        ingest::load_panel_from(body.as_bytes(), variable)
    }

    fn load_residual_artifact(&self, name: &str) -> Result<ResidualPanel> {
        let (_tags, body) = self.read_csv_artifact(name)?;
        preprocess::read_residuals(body.as_bytes())
    }

    /// Row index of the first date at or after the split boundary.
    fn split_index(&self, dates: &[NaiveDate]) -> Result<usize> {
        let idx = dates.partition_point(|d| *d < self.cfg.split_date);
        if idx == 0 || idx >= dates.len() {
            return Err(WindvolError::BoundaryOutsideRange(self.cfg.split_date));
        }
        Ok(idx)
    }

    // -- synthetic data ---------------------------------------------------

    /// Deterministic synthetic wind-speed panels at both heights: a seasonal
    /// cycle, a spatially correlated AR(1) anomaly with GARCH-type noise,
    /// and a height-profile scaling.
    fn generate_synthetic(&self) -> Result<()> {
        use rand::Rng;
        use rand::SeedableRng;
        let n = self.cfg.data.synthetic_stations;
        let days = self.cfg.data.synthetic_days;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();

        // stations scattered over a ~1 degree box in the study region
        let coords: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                (
                    9.0 + rng.gen::<f64>() * 1.2,
                    45.2 + rng.gen::<f64>() * 0.9,
                )
            })
            .collect();

        let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            rng.sample(rand_distr::StandardNormal)
        };

        let mut x = vec![0.0; n]; // anomaly state
        let mut h: Vec<f64> = vec![0.05; n]; // conditional variance state
        let mut e_prev = vec![0.0; n];
        let mut panels: [Vec<f64>; 2] = [Vec::with_capacity(days * n), Vec::with_capacity(days * n)];
        for t in 0..days {
            let date = start + chrono::Duration::days(t as i64);
            let doy = date.ordinal() as f64;
            let common = normal(&mut rng) * 0.3;
            for i in 0..n {
                h[i] = 0.02 + 0.1 * e_prev[i] * e_prev[i] + 0.8 * h[i];
                let e = h[i].sqrt() * normal(&mut rng) + common;
                e_prev[i] = e;
                x[i] = 0.7 * x[i] + e;
                let phase = i as f64 * 0.7;
                let seasonal =
                    2.5 + 0.8 * (2.0 * std::f64::consts::PI * doy / 365.0 + phase).sin();
                let ws10 = (seasonal + x[i]).max(0.05);
                let ws100 = (1.4 * seasonal + 0.8 * x[i] + 0.2 * normal(&mut rng)).max(0.05);
                panels[0].push(ws10);
                panels[1].push(ws100);
            }
        }

        for (vi, var) in ["ws10", "ws100"].iter().enumerate() {
            let mut body = String::from("date,station_id,lon,lat,value\n");
            for t in 0..days {
                let date = start + chrono::Duration::days(t as i64);
                for i in 0..n {
                    let _ = writeln!(
                        body,
                        "{},st{:03},{},{},{}",
                        date.format("%Y-%m-%d"),
                        i,
                        coords[i].0,
                        coords[i].1,
                        panels[vi][t * n + i]
                    );
                }
            }
            std::fs::write(self.path(&format!("synthetic_{var}.csv")), body)?;
        }
        Ok(())
    }

    // -- stages -----------------------------------------------------------

    pub fn stage_ingest(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        let mut stats = Vec::new();
        for var in &self.cfg.data.variables {
            let panel = self.load_variable(var)?;
            let mut body = Vec::new();
            ingest::write_panel(&panel, &mut body)?;
            out.push(self.write_csv_artifact(
                &format!("panel_{var}.csv"),
                &[("variable", var)],
                std::str::from_utf8(&body).unwrap(),
            )?);
            stats.push(ingest::descriptive_stats(&panel)?);
        }
        out.push(self.write_json_artifact("stats.json", &stats)?);
        Ok(out)
    }

    pub fn stage_preprocess(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for var in &self.cfg.data.variables {
            let panel = self.load_panel_artifact(&format!("panel_{var}.csv"))?;
            let rp = preprocess::preprocess_panel(&panel, self.cfg.seasonal_period)?;

            let mut body = Vec::new();
            preprocess::write_residuals(&rp, &mut body)?;
            out.push(self.write_csv_artifact(
                &format!("residuals_{var}.csv"),
                &[("variable", var), ("track", "ar1")],
                std::str::from_utf8(&body).unwrap(),
            )?);

            // deseasonalized series (decomposition remainder) for the panel
            // mean-model track; same schema as the residual export
            let n = panel.n_stations();
            let mut body = String::from("date,station_id,residual\n");
            for (t, date) in panel.dates.iter().enumerate() {
                for i in 0..n {
                    let _ = writeln!(
                        body,
                        "{},{},{}",
                        date.format("%Y-%m-%d"),
                        panel.stations[i].id,
                        rp.decompositions[i].remainder[t]
                    );
                }
            }
            out.push(self.write_csv_artifact(
                &format!("deseasonalized_{var}.csv"),
                &[("variable", var)],
                &body,
            )?);

            let phis: BTreeMap<&str, f64> = panel
                .stations
                .iter()
                .enumerate()
                .map(|(i, s)| (s.id.as_str(), rp.phis[i]))
                .collect();
            out.push(self.write_json_artifact(&format!("ar1_{var}.json"), &phis)?);
        }
        Ok(out)
    }

    fn stations(&self) -> Result<Vec<Station>> {
        let var = &self.cfg.data.variables[0];
        let panel = self.load_panel_artifact(&format!("panel_{var}.csv"))?;
        Ok(panel.stations)
    }

    fn build_weights(&self, spec: &WeightSpec, stations: &[Station]) -> Result<WeightMatrix> {
        match &spec.kind {
            WeightSpecKind::Knn { k } => weights::knn_weights(stations, *k),
            WeightSpecKind::DistanceBand { radius_m } => {
                Ok(weights::distance_band_weights(stations, *radius_m))
            }
            WeightSpecKind::Directional {
                cutoff_m,
                half_angle_deg,
                decay_m,
                prevailing_dir_deg,
            } => weights::directional_weights(
                stations,
                &DirectionalParams {
                    prevailing_dir: vec![*prevailing_dir_deg; stations.len()],
                    half_angle_deg: *half_angle_deg,
                    cutoff_m: *cutoff_m,
                    decay_m: *decay_m,
                },
            ),
        }
    }

    pub fn stage_weights(&self) -> Result<Vec<PathBuf>> {
        let stations = self.stations()?;
        let ids: Vec<String> = stations.iter().map(|s| s.id.clone()).collect();
        let mut out = Vec::new();
        for spec in &self.cfg.weights {
            let w = self.build_weights(spec, &stations)?;
            out.push(self.write_json_artifact(&format!("weights_{}.json", spec.name), &w)?);
            let mut body = Vec::new();
            weights::write_weights(&w, &ids, &mut body)?;
            out.push(self.write_csv_artifact(
                &format!("weights_{}.csv", spec.name),
                &[("weights", &spec.name)],
                std::str::from_utf8(&body).unwrap(),
            )?);
        }
        Ok(out)
    }

    fn load_weights(&self, name: &str) -> Result<WeightMatrix> {
        self.read_json_artifact(&format!("weights_{name}.json"))
    }

    pub fn stage_diagnose(&self) -> Result<Vec<PathBuf>> {
        #[derive(Serialize)]
        struct StationDiag {
            station: String,
            ljung_box_p: f64,
            arch_lm_p: f64,
            excess_kurtosis: f64,
        }
        #[derive(Serialize)]
        struct MoranRow {
            weights: String,
            target: String,
            i: f64,
            z: f64,
            p: f64,
            dropped: usize,
        }
        #[derive(Serialize)]
        struct Diag {
            variable: String,
            ljung_box_pass_rate: f64,
            arch_lm_pass_rate: f64,
            stations: Vec<StationDiag>,
            moran: Vec<MoranRow>,
        }

        let mut out = Vec::new();
        for var in &self.cfg.data.variables {
            let rp = self.load_residual_artifact(&format!("residuals_{var}.csv"))?;
            let n = rp.n_stations();
            let mut stations = Vec::new();
            let mut lb_results = Vec::new();
            let mut arch_results = Vec::new();
            for i in 0..n {
                let col = rp.column(i);
                let lb = diagnostics::ljung_box(&col, 10)?;
                let arch = diagnostics::arch_lm(&col, 5)?;
                stations.push(StationDiag {
                    station: rp.station_ids[i].clone(),
                    ljung_box_p: lb.p_value,
                    arch_lm_p: arch.p_value,
                    excess_kurtosis: diagnostics::excess_kurtosis(&col)?,
                });
                lb_results.push(lb);
                arch_results.push(arch);
            }

            // cross-sectional spatial autocorrelation of the time-averaged
            // residual and its square, per weight matrix
            let t_len = rp.n_rows();
            let mean_res: Vec<f64> = (0..n)
                .map(|i| (0..t_len).map(|t| rp.residuals[t * n + i]).sum::<f64>() / t_len as f64)
                .collect();
            let mean_sq: Vec<f64> = (0..n)
                .map(|i| {
                    (0..t_len)
                        .map(|t| rp.residuals[t * n + i].powi(2))
                        .sum::<f64>()
                        / t_len as f64
                })
                .collect();
            let mut moran = Vec::new();
            for spec in &self.cfg.weights {
                let w = self.load_weights(&spec.name)?;
                for (target, vals) in [("mean_residual", &mean_res), ("mean_squared", &mean_sq)] {
                    let r = diagnostics::morans_i(vals, &w)?;
                    moran.push(MoranRow {
                        weights: spec.name.clone(),
                        target: target.to_string(),
                        i: r.statistic,
                        z: r.df_or_z,
                        p: r.p_value,
                        dropped: r.dropped,
                    });
                }
            }

            let diag = Diag {
                variable: var.clone(),
                ljung_box_pass_rate: diagnostics::pass_rates(&lb_results, 0.05)?,
                arch_lm_pass_rate: diagnostics::pass_rates(&arch_results, 0.05)?,
                stations,
                moran,
            };
            out.push(self.write_json_artifact(&format!("diagnostics_{var}.json"), &diag)?);
        }
        Ok(out)
    }

    /// Residual track feeding the volatility models: AR(1) residuals from
    /// preprocessing, or one-step SDPD innovations (per weight matrix).
    fn track_artifact(&self, var: &str, wname: &str) -> String {
        match self.cfg.model.mean {
            MeanModel::Ar1 => format!("residuals_{var}.csv"),
            MeanModel::Sdpd => format!("residuals_sdpd_{var}_{wname}.csv"),
        }
    }

    pub fn stage_fit_sdpd(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for var in &self.cfg.data.variables {
            let des = self.load_residual_artifact(&format!("deseasonalized_{var}.csv"))?;
            let n = des.n_stations();
            let split = self.split_index(&des.dates)?;
            for spec in &self.cfg.weights {
                let w = self.load_weights(&spec.name)?;
                let train = &des.residuals[..split * n];
                let fit = sdpd::fit_sdpd(train, &w)?;
                out.push(self.write_json_artifact(
                    &format!("fit_sdpd_{var}_{}.json", spec.name),
                    &fit,
                )?);

                // innovation track over the full period with frozen
                // coefficients; dates shift by one (first day consumed)
                let resid = sdpd::sdpd_residuals(&fit, &w, &des.residuals)?;
                let mut body = String::from("date,station_id,residual\n");
                for (t, date) in des.dates.iter().skip(1).enumerate() {
                    for i in 0..n {
                        let _ = writeln!(
                            body,
                            "{},{},{}",
                            date.format("%Y-%m-%d"),
                            des.station_ids[i],
                            resid[t * n + i]
                        );
                    }
                }
                out.push(self.write_csv_artifact(
                    &format!("residuals_sdpd_{var}_{}.csv", spec.name),
                    &[("variable", var), ("track", "sdpd"), ("weights", &spec.name)],
                    &body,
                )?);
            }
        }
        Ok(out)
    }

    pub fn stage_fit_uni(&self) -> Result<Vec<PathBuf>> {
        use rayon::prelude::*;
        #[derive(Serialize, Deserialize)]
        pub struct UniStationFit {
            pub station: String,
            pub model: String,
            pub omega: f64,
            pub alpha: f64,
            pub beta: f64,
            pub gamma: f64,
            pub loglik: f64,
            pub aic: f64,
            pub bic: f64,
            pub h0_train: f64,
        }
        #[derive(Serialize, Deserialize)]
        pub struct UniFitArtifact {
            pub fits: Vec<UniStationFit>,
            pub egarch_preferred_share_aic: f64,
        }

        let mut out = Vec::new();
        for var in &self.cfg.data.variables {
            // univariate benchmarks are fit per weight track only when the
            // mean model is SDPD; the AR(1) track is weight-free
            let wnames: Vec<String> = match self.cfg.model.mean {
                MeanModel::Ar1 => vec!["none".to_string()],
                MeanModel::Sdpd => self.cfg.weights.iter().map(|s| s.name.clone()).collect(),
            };
            for wname in &wnames {
                let rp = self.load_residual_artifact(&self.track_artifact(var, wname))?;
                let n = rp.n_stations();
                let split = self.split_index(&rp.dates)?;
                let results: Vec<Result<(unigarch::UniFit, unigarch::UniFit, f64)>> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let col: Vec<f64> =
                            (0..split).map(|t| rp.residuals[t * n + i]).collect();
                        let mean = col.iter().sum::<f64>() / col.len() as f64;
                        let h0 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                            / (col.len() as f64 - 1.0);
                        let g = unigarch::fit_garch(&col)
                            .map_err(|e| e.at_station(&rp.station_ids[i]))?;
                        let eg = unigarch::fit_egarch(&col)
                            .map_err(|e| e.at_station(&rp.station_ids[i]))?;
                        Ok((g, eg, h0))
                    })
                    .collect();

                let mut fits = Vec::new();
                let mut garch_fits = Vec::new();
                let mut egarch_fits = Vec::new();
                for (i, r) in results.into_iter().enumerate() {
                    let (g, eg, h0) = r?;
                    for f in [&g, &eg] {
                        fits.push(UniStationFit {
                            station: rp.station_ids[i].clone(),
                            model: match f.model {
                                unigarch::UniModel::Garch => "garch".into(),
                                unigarch::UniModel::Egarch => "egarch".into(),
                            },
                            omega: f.omega,
                            alpha: f.alpha,
                            beta: f.beta,
                            gamma: f.gamma,
                            loglik: f.loglik,
                            aic: f.aic,
                            bic: f.bic,
                            h0_train: h0,
                        });
                    }
                    garch_fits.push(g);
                    egarch_fits.push(eg);
                }
                let share = unigarch::model_preference(&garch_fits, &egarch_fits, false)?;
                let artifact = UniFitArtifact {
                    fits,
                    egarch_preferred_share_aic: share,
                };
                let suffix = if wname == "none" {
                    format!("{var}")
                } else {
                    format!("{var}_{wname}")
                };
                out.push(self.write_json_artifact(&format!("fit_uni_{suffix}.json"), &artifact)?);
            }
        }
        Ok(out)
    }

    pub fn stage_fit_st(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for var in &self.cfg.data.variables {
            for spec in &self.cfg.weights {
                let rp = self.load_residual_artifact(&self.track_artifact(var, &spec.name))?;
                let n = rp.n_stations();
                let split = self.split_index(&rp.dates)?;
                let w = self.load_weights(&spec.name)?;
                let fit = stgarch::fit_st(&rp.residuals[..split * n], &w)?;
                out.push(
                    self.write_json_artifact(&format!("fit_st_{var}_{}.json", spec.name), &fit)?,
                );
            }
        }
        Ok(out)
    }

    pub fn stage_fit_mv(&self) -> Result<Vec<PathBuf>> {
        let vars = &self.cfg.data.variables;
        if vars.len() != 2 {
            return Err(WindvolError::ConfigInvalid(
                "fit-mv needs exactly two variables".into(),
            ));
        }
        let ra = self.load_residual_artifact(&format!("residuals_{}.csv", vars[0]))?;
        let rb = self.load_residual_artifact(&format!("residuals_{}.csv", vars[1]))?;
        if ra.dates != rb.dates || ra.station_ids != rb.station_ids {
            return Err(WindvolError::ShapeMismatch(
                "residual panels for the two heights do not align".into(),
            ));
        }
        let n = ra.n_stations();
        let split = self.split_index(&ra.dates)?;
        let mut out = Vec::new();
        for spec in &self.cfg.weights {
            let w = self.load_weights(&spec.name)?;
            let fit = mvlogarch::fit_mv_logarch(
                &ra.residuals[..split * n],
                &rb.residuals[..split * n],
                &w,
            )?;
            out.push(self.write_json_artifact(&format!("fit_mv_{}.json", spec.name), &fit)?);
        }
        Ok(out)
    }

    fn write_forecast(
        &self,
        name: &str,
        tags: &[(&str, &str)],
        dates: &[NaiveDate],
        ids: &[String],
        h: &[f64],
    ) -> Result<PathBuf> {
        let n = ids.len();
        let mut body = String::from("date,station_id,h\n");
        for (t, date) in dates.iter().enumerate() {
            for i in 0..n {
                let _ = writeln!(
                    body,
                    "{},{},{}",
                    date.format("%Y-%m-%d"),
                    ids[i],
                    h[t * n + i]
                );
            }
        }
        self.write_csv_artifact(name, tags, &body)
    }

    pub fn stage_forecast(&self) -> Result<Vec<PathBuf>> {
        match self.cfg.model.volatility {
            VolModel::UniGarch | VolModel::UniEgarch => self.forecast_uni(),
            VolModel::Starmagarch => self.forecast_st(),
            VolModel::MvLogarch => self.forecast_mv(),
        }
    }

    fn forecast_uni(&self) -> Result<Vec<PathBuf>> {
        #[derive(Deserialize)]
        struct UniStationFit {
            station: String,
            model: String,
            omega: f64,
            alpha: f64,
            beta: f64,
            gamma: f64,
            h0_train: f64,
        }
        #[derive(Deserialize)]
        struct UniFitArtifact {
            fits: Vec<UniStationFit>,
        }

        let want = match self.cfg.model.volatility {
            VolModel::UniGarch => "garch",
            _ => "egarch",
        };
        let mut out = Vec::new();
        for var in &self.cfg.data.variables {
            let wnames: Vec<String> = match self.cfg.model.mean {
                MeanModel::Ar1 => vec!["none".to_string()],
                MeanModel::Sdpd => self.cfg.weights.iter().map(|s| s.name.clone()).collect(),
            };
            for wname in &wnames {
                let track = self.track_artifact(var, wname);
                let rp = self.load_residual_artifact(&track)?;
                let n = rp.n_stations();
                let t_len = rp.n_rows();
                let split = self.split_index(&rp.dates)?;
                let suffix = if wname == "none" {
                    format!("{var}")
                } else {
                    format!("{var}_{wname}")
                };
                let art: UniFitArtifact =
                    self.read_json_artifact(&format!("fit_uni_{suffix}.json"))?;

                let mut h_test = vec![0.0; (t_len - split) * n];
                for i in 0..n {
                    let fit = art
                        .fits
                        .iter()
                        .find(|f| f.station == rp.station_ids[i] && f.model == want)
                        .ok_or_else(|| {
                            WindvolError::MissingUpstream(format!(
                                "fit for station {} model {want}",
                                rp.station_ids[i]
                            ))
                        })?;
                    let col = rp.column(i);
                    // run the fitted filter over the whole sample so test-day
                    // forecasts condition on realized residuals only
                    let h = match want {
                        "garch" => unigarch::garch_filter(
                            &unigarch::GarchParams {
                                omega: fit.omega,
                                alpha: fit.alpha,
                                beta: fit.beta,
                            },
                            &col,
                            fit.h0_train,
                        ),
                        _ => unigarch::egarch_filter(
                            &unigarch::EgarchParams {
                                omega: fit.omega,
                                alpha: fit.alpha,
                                gamma: fit.gamma,
                                beta: fit.beta,
                            },
                            &col,
                            fit.h0_train.ln(),
                        ),
                    };
                    for t in split..t_len {
                        h_test[(t - split) * n + i] = h[t];
                    }
                }
                let name = format!("forecast_{want}_{suffix}.csv");
                let eps_name = self.write_eps_test(&rp, split, &suffix, &track)?;
                out.push(self.write_forecast(
                    &name,
                    &[
                        ("model", want),
                        ("variable", var),
                        ("weights", wname),
                        ("eps", &eps_name),
                    ],
                    &rp.dates[split..],
                    &rp.station_ids,
                    &h_test,
                )?);
            }
        }
        Ok(out)
    }

    /// Export the test-window residuals the forecasts will be scored
    /// against; returns the artifact name.
    fn write_eps_test(
        &self,
        rp: &ResidualPanel,
        split: usize,
        suffix: &str,
        track: &str,
    ) -> Result<String> {
        let n = rp.n_stations();
        let t_len = rp.n_rows();
        let mut body = String::from("date,station_id,residual\n");
        for t in split..t_len {
            for i in 0..n {
                let _ = writeln!(
                    body,
                    "{},{},{}",
                    rp.dates[t].format("%Y-%m-%d"),
                    rp.station_ids[i],
                    rp.residuals[t * n + i]
                );
            }
        }
        let name = format!("eps_test_{suffix}.csv");
        self.write_csv_artifact(&name, &[("track", track)], &body)?;
        Ok(name)
    }

    fn forecast_st(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for var in &self.cfg.data.variables {
            for spec in &self.cfg.weights {
                let track = self.track_artifact(var, &spec.name);
                let rp = self.load_residual_artifact(&track)?;
                let n = rp.n_stations();
                let split = self.split_index(&rp.dates)?;
                let w = self.load_weights(&spec.name)?;
                let fit: stgarch::StFit =
                    self.read_json_artifact(&format!("fit_st_{var}_{}.json", spec.name))?;
                let h = stgarch::st_forecast_path(
                    &fit.params,
                    &w,
                    &rp.residuals[..split * n],
                    &rp.residuals[split * n..],
                )?;
                let suffix = format!("{var}_{}", spec.name);
                let eps_name = self.write_eps_test(&rp, split, &suffix, &track)?;
                out.push(self.write_forecast(
                    &format!("forecast_starmagarch_{suffix}.csv"),
                    &[
                        ("model", "starmagarch"),
                        ("variable", var),
                        ("weights", &spec.name),
                        ("eps", &eps_name),
                    ],
                    &rp.dates[split..],
                    &rp.station_ids,
                    &h,
                )?);
            }
        }
        Ok(out)
    }

    fn forecast_mv(&self) -> Result<Vec<PathBuf>> {
        let vars = &self.cfg.data.variables;
        let ra = self.load_residual_artifact(&format!("residuals_{}.csv", vars[0]))?;
        let rb = self.load_residual_artifact(&format!("residuals_{}.csv", vars[1]))?;
        let n = ra.n_stations();
        let t_len = ra.n_rows();
        let width = 2 * n;
        let mut y = vec![0.0; t_len * width];
        for t in 0..t_len {
            y[t * width..t * width + n].copy_from_slice(&ra.residuals[t * n..(t + 1) * n]);
            y[t * width + n..(t + 1) * width]
                .copy_from_slice(&rb.residuals[t * n..(t + 1) * n]);
        }

        let mut out = Vec::new();
        for spec in &self.cfg.weights {
            let w = self.load_weights(&spec.name)?;
            let fit: mvlogarch::MvFit =
                self.read_json_artifact(&format!("fit_mv_{}.json", spec.name))?;

            // mean-stage innovations over the full period (rows 2..T), then
            // the log-squared series the volatility stage operates on
            let eps = mvlogarch::system_residuals(&fit.mean, &w, &y)?;
            let (log_sq, _floored) = mvlogarch::log_sq_transform(&eps)?;
            // eps rows correspond to dates[1..]; test rows are those at or
            // after the split boundary
            let eps_dates = &ra.dates[1..];
            let test_start = eps_dates.partition_point(|d| *d < self.cfg.split_date);
            if test_start == 0 || test_start >= eps_dates.len() {
                return Err(WindvolError::BoundaryOutsideRange(self.cfg.split_date));
            }

            let t_test = eps_dates.len() - test_start;
            let mut h10 = vec![0.0; t_test * n];
            let mut h100 = vec![0.0; t_test * n];
            for t in 0..t_test {
                let prev = &log_sq[(test_start + t - 1) * width..(test_start + t) * width];
                let (a, b) = mvlogarch::mv_forecast(&fit.vol, &w, prev)?;
                h10[t * n..(t + 1) * n].copy_from_slice(&a);
                h100[t * n..(t + 1) * n].copy_from_slice(&b);
            }

            for (vi, (var, h)) in [(&vars[0], &h10), (&vars[1], &h100)].iter().enumerate() {
                let suffix = format!("{var}_{}", spec.name);
                // test-window mean-stage innovations for scoring
                let mut body = String::from("date,station_id,residual\n");
                for t in 0..t_test {
                    for i in 0..n {
                        let _ = writeln!(
                            body,
                            "{},{},{}",
                            eps_dates[test_start + t].format("%Y-%m-%d"),
                            ra.station_ids[i],
                            eps[(test_start + t) * width + vi * n + i]
                        );
                    }
                }
                let eps_name = format!("eps_test_mv_{suffix}.csv");
                self.write_csv_artifact(&eps_name, &[("track", "mv")], &body)?;
                out.push(self.write_forecast(
                    &format!("forecast_mv_logarch_{suffix}.csv"),
                    &[
                        ("model", "mv_logarch"),
                        ("variable", var),
                        ("weights", &spec.name),
                        ("eps", &eps_name),
                    ],
                    &eps_dates[test_start..],
                    &ra.station_ids,
                    h,
                )?);
            }
        }
        Ok(out)
    }

    fn proxy_series(&self, kind: &str, eps: &[f64], n: usize) -> Result<ProxySeries> {
        match kind {
            "rv" => Ok(evaluate::rv(eps, n)),
            "ewma" => evaluate::ewma(eps, n, self.cfg.model.ewma_lambda),
            "rv5_sq" => evaluate::rv5(eps, n, Rv5Mode::Sq),
            "rv5_abs" => evaluate::rv5(eps, n, Rv5Mode::Abs),
            other => Err(WindvolError::ConfigInvalid(format!("unknown proxy {other}"))),
        }
    }

    pub fn stage_evaluate(&self) -> Result<Vec<PathBuf>> {
        // score every forecast artifact in the output directory against the
        // residual panel named in its header
        let mut names: Vec<String> = std::fs::read_dir(&self.cfg.out_dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|f| f.starts_with("forecast_") && f.ends_with(".csv"))
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(WindvolError::MissingUpstream("forecast artifacts".into()));
        }

        let mut body = String::from(
            "model,weights,proxy,variable,rmsfe,mafe,n_used,excluded_zero,excluded_unavailable\n",
        );
        for name in &names {
            let (tags, _) = self.read_csv_artifact(name)?;
            let model = tags.get("model").cloned().unwrap_or_default();
            let var = tags.get("variable").cloned().unwrap_or_default();
            let wname = tags.get("weights").cloned().unwrap_or_default();
            let eps_name = tags
                .get("eps")
                .cloned()
                .ok_or_else(|| WindvolError::MissingUpstream(format!("{name}: eps tag")))?;
            let eps_panel = self.load_residual_artifact(&eps_name)?;
            let h_panel = self.load_residual_artifact_generic(name)?;
            if eps_panel.dates != h_panel.0 {
                return Err(WindvolError::ShapeMismatch(format!(
                    "{name}: forecast and residual dates differ"
                )));
            }
            let n = eps_panel.n_stations();
            for proxy_kind in &self.cfg.model.proxies {
                let proxy = self.proxy_series(proxy_kind, &eps_panel.residuals, n)?;
                let s = evaluate::score(&h_panel.1, &proxy)?;
                let _ = writeln!(
                    body,
                    "{model},{wname},{proxy_kind},{var},{},{},{},{},{}",
                    s.rmsfe, s.mafe, s.n_used, s.excluded_zero, s.excluded_unavailable
                );
            }
        }
        Ok(vec![self.write_csv_artifact("scores.csv", &[], &body)?])
    }

    /// Load a forecast CSV (date, station_id, h) as (dates, row-major values).
    fn load_residual_artifact_generic(&self, name: &str) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
        let (_tags, body) = self.read_csv_artifact(name)?;
        let rp = preprocess::read_residuals(body.as_bytes())?;
        Ok((rp.dates, rp.residuals))
    }

    pub fn stage_report(&self) -> Result<Vec<PathBuf>> {
        let (_tags, body) = self.read_csv_artifact("scores.csv")?;
        let mut entries = Vec::new();
        for line in body.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 6 {
                continue;
            }
            entries.push((
                cols[0].to_string(),
                cols[1].to_string(),
                cols[2].to_string(),
                cols[3].to_string(),
                cols[4].parse::<f64>().unwrap_or(f64::NAN),
                cols[5].parse::<f64>().unwrap_or(f64::NAN),
            ));
        }
        let report = evaluate::build_report(&entries);

        let mut csv = String::from("model,weights,proxy,variable,rmsfe,mafe,min_rmsfe,min_mafe\n");
        for r in &report.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                r.model, r.weights, r.proxy, r.height, r.rmsfe, r.mafe, r.min_rmsfe, r.min_mafe
            );
        }
        let p1 = self.write_csv_artifact("report.csv", &[], &csv)?;

        let mut md = format!(
            "# Forecast comparison\n\ntool windvol {TOOL_VERSION}, config {}{}\n\n\
             | model | weights | proxy | variable | RMSFE | MAFE |\n\
             |---|---|---|---|---|---|\n",
            self.hash,
            self.watermark
                .as_deref()
                .map(|w| format!(" ({w})"))
                .unwrap_or_default()
        );
        for r in &report.rows {
            let fmt = |v: f64, is_min: bool| {
                if is_min {
                    format!("**{v:.4}**")
                } else {
                    format!("{v:.4}")
                }
            };
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                r.model,
                r.weights,
                r.proxy,
                r.height,
                fmt(r.rmsfe, r.min_rmsfe),
                fmt(r.mafe, r.min_mafe)
            );
        }
        let p2 = self.path("report.md");
        std::fs::write(&p2, md)?;
        Ok(vec![p1, p2])
    }

    // -- full reproduction ------------------------------------------------

    /// Execute the complete study design: both residual tracks, every
    /// configured weight matrix, both heights, all models, one combined
    /// report. Requires either real data paths or synthetic mode.
    pub fn reproduce(&self) -> Result<Vec<PathBuf>> {
        // fail early with download instructions when nothing can be loaded
        for var in &self.cfg.data.variables {
            self.panel_source(var)?;
        }
        let mut out = Vec::new();
        out.extend(self.stage_ingest()?);
        out.extend(self.stage_preprocess()?);
        out.extend(self.stage_weights()?);
        out.extend(self.stage_diagnose()?);

        // AR(1) track: univariate benchmarks, joint model, bivariate model
        let mut cfg_ar = self.cfg.clone();
        cfg_ar.model.mean = MeanModel::Ar1;
        let run = |cfg: ExperimentConfig, out: &mut Vec<PathBuf>| -> Result<()> {
            let p = Pipeline {
                cfg,
                hash: self.hash.clone(),
                watermark: self.watermark.clone(),
            };
            out.extend(p.stage_forecast()?);
            Ok(())
        };

        let mut ar_uni = cfg_ar.clone();
        ar_uni.model.volatility = VolModel::UniGarch;
        {
            let p = Pipeline {
                cfg: ar_uni.clone(),
                hash: self.hash.clone(),
                watermark: self.watermark.clone(),
            };
            out.extend(p.stage_fit_uni()?);
            run(ar_uni, &mut out)?;
        }
        let mut ar_euni = cfg_ar.clone();
        ar_euni.model.volatility = VolModel::UniEgarch;
        run(ar_euni, &mut out)?; // reuses fit_uni artifacts

        let mut ar_st = cfg_ar.clone();
        ar_st.model.volatility = VolModel::Starmagarch;
        {
            let p = Pipeline {
                cfg: ar_st.clone(),
                hash: self.hash.clone(),
                watermark: self.watermark.clone(),
            };
            out.extend(p.stage_fit_st()?);
            run(ar_st, &mut out)?;
        }

        if self.cfg.data.variables.len() == 2 {
            let mut ar_mv = cfg_ar.clone();
            ar_mv.model.volatility = VolModel::MvLogarch;
            let p = Pipeline {
                cfg: ar_mv.clone(),
                hash: self.hash.clone(),
                watermark: self.watermark.clone(),
            };
            out.extend(p.stage_fit_mv()?);
            run(ar_mv, &mut out)?;
        }

        // SDPD track: joint model on SDPD innovations
        let mut sd_cfg = self.cfg.clone();
        sd_cfg.model.mean = MeanModel::Sdpd;
        sd_cfg.model.volatility = VolModel::Starmagarch;
        {
            let p = Pipeline {
                cfg: sd_cfg.clone(),
                hash: self.hash.clone(),
                watermark: self.watermark.clone(),
            };
            out.extend(p.stage_fit_sdpd()?);
            out.extend(p.stage_fit_st()?);
            run(sd_cfg, &mut out)?;
        }

        out.extend(self.stage_evaluate()?);
        out.extend(self.stage_report()?);
        out.extend(self.reference_comparison()?);
        Ok(out)
    }

    /// Side-by-side comparison of pooled descriptive statistics against the
    /// published benchmark values for the original 141-station dataset, with
    /// absolute deviations. Only meaningful when real data is configured;
    /// synthetic runs still emit the file, watermarked, for layout checks.
    fn reference_comparison(&self) -> Result<Vec<PathBuf>> {
        // published pooled statistics: (variable, median, mean, iqr, sd, min, max)
        const REFERENCE: [(&str, [f64; 6]); 2] = [
            ("ws10", [1.313, 1.475, 0.717, 0.689, 0.2309, 7.036]),
            ("ws100", [2.542, 2.822, 1.417, 1.217, 0.3847, 11.17]),
        ];
        let stats: Vec<ingest::StatsRow> = self.read_json_artifact("stats.json")?;
        let mut body =
            String::from("variable,metric,computed,reference,abs_delta\n");
        for row in &stats {
            if let Some((_, r)) = REFERENCE.iter().find(|(v, _)| *v == row.variable.to_string()) {
                let metrics = [
                    ("median", row.median, r[0]),
                    ("mean", row.mean, r[1]),
                    ("iqr", row.iqr, r[2]),
                    ("sd", row.sd, r[3]),
                    ("min", row.min, r[4]),
                    ("max", row.max, r[5]),
                ];
                for (name, got, want) in metrics {
                    let _ = writeln!(
                        body,
                        "{},{name},{got},{want},{}",
                        row.variable,
                        (got - want).abs()
                    );
                }
            }
        }
        Ok(vec![self.write_csv_artifact("reference_comparison.csv", &[], &body)?])
    }
}

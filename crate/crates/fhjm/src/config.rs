//! JSON experiment configuration and its resolution into core types.

use std::path::{Path, PathBuf};

use fhjm_core::consistency::NELSON_SIEGEL_BOX;
use fhjm_core::ledger::{DiscreteMeasure, Gate, Holding, Strategy};
use fhjm_core::{FbmMethod, HurstParam, InitialCurve, MaturityGrid, TimeGrid, VolFactor, VolatilitySpec};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliError};

/// Relative distance from a grid node still accepted as "on the grid".
const GRID_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub hurst: f64,
    pub grid: GridConfig,
    pub initial_curve: CurveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portfolio: Option<PortfolioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencyConfig>,
}

/// Either a list of volatility factors or `"zero": true`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<VolFactor>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_star: f64,
    pub n_steps: usize,
    pub x_max: f64,
    pub m_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveConfig {
    Flat {
        rate: f64,
    },
    NelsonSiegel {
        params: [f64; 4],
    },
    /// Values on the time step covering `[0, T* + x_max]`.
    Tabulated {
        values: Vec<f64>,
    },
    /// CSV file with one forward rate per line (an optional `x,r` header and
    /// two-column rows are accepted) on the same nodes as `tabulated`.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: FbmMethod,
    /// Fine steps per polygonal cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_factor: Option<usize>,
}

fn default_method() -> FbmMethod {
    FbmMethod::Cholesky
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_identity: Option<DriftIdentityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quasi_martingale: Option<QuasiMartingaleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillation: Option<OscillationConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftIdentityConfig {
    /// Bond maturity `T`; defaults to `T*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maturity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiMartingaleConfig {
    /// `(t, T)` pairs on the grid.
    pub pairs: Vec<[f64; 2]>,
    #[serde(default = "yes")]
    pub control_variate: bool,
    /// Negative control: simulate with the drift removed.
    #[serde(default)]
    pub zero_drift: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationConfig {
    pub k: Vec<f64>,
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioConfig {
    pub strategies: Vec<StrategyConfig>,
    pub k: Vec<f64>,
    #[serde(default = "default_bound")]
    pub admissibility_bound: f64,
}

fn default_bound() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub name: String,
    pub holdings: Vec<HoldingConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldingConfig {
    pub from: f64,
    pub to: f64,
    pub atoms: Vec<AtomConfig>,
    #[serde(default)]
    pub gate: GateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    #[serde(rename = "T")]
    pub maturity: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GateConfig {
    #[default]
    Always,
    Threshold {
        observe: f64,
        #[serde(rename = "T")]
        maturity: f64,
        level: f64,
        above: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyConfig {
    #[serde(default = "default_family")]
    pub family: String,
    /// Decay of `nelson-siegel-fixed-decay`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    /// Parameter box `[lo, hi]` per coordinate.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub param_box: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_times")]
    pub n_times: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_family() -> String {
    "nelson-siegel".into()
}

fn default_samples() -> usize {
    50
}

fn default_times() -> usize {
    8
}

fn default_x_max() -> f64 {
    10.0
}

fn default_nodes() -> usize {
    512
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid config JSON: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        // Relative curve files are resolved against the config's directory.
        if let CurveConfig::File { path: p } = &mut cfg.initial_curve {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Canonical JSON used for hashing and the manifest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}

/// A validated config with core objects built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub spec: VolatilitySpec,
    pub h: HurstParam,
    pub t_grid: TimeGrid,
    pub x_grid: MaturityGrid,
    pub init: InitialCurve,
}

impl Resolved {
    pub fn new(config: ExperimentConfig) -> Result<Self, CliError> {
        let h = HurstParam::new(config.hurst)
            .map_err(|_| CliError::config(format!("hurst must lie in (0.5, 1), got {}", config.hurst)))?;
        let g = config.grid;
        let t_grid = TimeGrid::new(g.t_star, g.n_steps).map_err(invalid)?;
        let x_grid = MaturityGrid::new(g.x_max, g.m_steps).map_err(invalid)?;
        if (t_grid.step() - x_grid.step()).abs() > GRID_SNAP * t_grid.step() {
            return Err(CliError::config(format!(
                "time step {} and maturity step {} must agree (t_star/n_steps = x_max/m_steps)",
                t_grid.step(),
                x_grid.step()
            )));
        }
        let spec = match (&config.model.factors[..], config.model.zero) {
            ([], true) => VolatilitySpec::zero(g.t_star, g.t_star + g.x_max).map_err(invalid)?,
            ([], false) => return Err(CliError::config("model needs volatility factors or \"zero\": true")),
            (_, true) => return Err(CliError::config("model cannot have both factors and \"zero\": true")),
            (f, false) => VolatilitySpec::new(f.to_vec()).map_err(invalid)?,
        };
        let init = match &config.initial_curve {
            CurveConfig::Flat { rate } => {
                if !rate.is_finite() {
                    return Err(CliError::config("flat rate must be finite"));
                }
                InitialCurve::flat(&t_grid, &x_grid, *rate).map_err(invalid)?
            }
            CurveConfig::NelsonSiegel { params } => {
                let [a, b, c, d] = *params;
                if params.iter().any(|v| !v.is_finite()) || d == 0.0 {
                    return Err(CliError::config(
                        "Nelson-Siegel curve needs finite parameters with y4 != 0",
                    ));
                }
                InitialCurve::from_fn(&t_grid, &x_grid, |x| a + (b + c * x) * (-d * x).exp()).map_err(invalid)?
            }
            CurveConfig::Tabulated { values } => tabulated_curve(&t_grid, &x_grid, values.clone())?,
            CurveConfig::File { path } => tabulated_curve(&t_grid, &x_grid, read_curve_file(path)?)?,
        };
        let resolved = Self {
            config,
            spec,
            h,
            t_grid,
            x_grid,
            init,
        };
        resolved.validate_blocks()?;
        Ok(resolved)
    }

    fn validate_blocks(&self) -> Result<(), CliError> {
        let cfg = &self.config;
        if let Some(mc) = &cfg.monte_carlo {
            if mc.n_paths == 0 {
                return Err(CliError::config("monte_carlo.n_paths must be at least 1"));
            }
            match (mc.method, mc.coarse_factor) {
                (FbmMethod::Polygonal, Some(f)) if f >= 1 && self.t_grid.n_steps().is_multiple_of(f) => {}
                (FbmMethod::Polygonal, _) => {
                    return Err(CliError::config(
                        "polygonal method needs a coarse_factor dividing n_steps",
                    ))
                }
                (_, Some(_)) => return Err(CliError::config("coarse_factor only applies to the polygonal method")),
                _ => {}
            }
        }
        if let Some(check) = &cfg.check {
            if let Some(di) = &check.drift_identity {
                if let Some(t) = di.maturity {
                    if !(t > 0.0 && t.is_finite()) {
                        return Err(CliError::config("drift_identity.maturity must be positive"));
                    }
                }
            }
            if let Some(qm) = &check.quasi_martingale {
                self.qm_pairs(qm)?;
            }
            if let Some(osc) = &check.oscillation {
                self.oscillation_taus(osc)?;
                if osc.k.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
                    return Err(CliError::config("oscillation thresholds k must be positive"));
                }
            }
        }
        if let Some(p) = &cfg.portfolio {
            if p.k.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
                return Err(CliError::config("portfolio cost rates k must be nonnegative"));
            }
            if !(p.admissibility_bound > 0.0) {
                return Err(CliError::config("admissibility_bound must be positive"));
            }
            self.strategies(p)?;
        }
        if let Some(c) = &cfg.consistency {
            self.consistency_box(c)?;
            if c.n_samples == 0 || c.n_times == 0 || c.nodes < 2 || !(c.x_max > 0.0) {
                return Err(CliError::config(
                    "consistency needs n_samples, n_times >= 1, nodes >= 2, x_max > 0",
                ));
            }
        }
        Ok(())
    }

    /// Grid index of time `t` on the step of the grids.
    pub fn index_of(&self, what: &str, t: f64, max: usize) -> Result<usize, CliError> {
        let step = self.t_grid.step();
        let k = (t / step).round();
        if !(t >= 0.0) || (k * step - t).abs() > GRID_SNAP * step.max(t) || k as usize > max {
            return Err(CliError::config(format!(
                "{what} = {t} is not a grid point in [0, {}] (step {step})",
                max as f64 * step
            )));
        }
        Ok(k as usize)
    }

    pub fn mc(&self) -> Result<MonteCarloConfig, CliError> {
        self.config
            .monte_carlo
            .ok_or_else(|| CliError::config("this command needs a monte_carlo block"))
    }

    pub fn qm_pairs(&self, qm: &QuasiMartingaleConfig) -> Result<Vec<(usize, usize)>, CliError> {
        let n = self.t_grid.n_steps();
        let far = n + self.x_grid.m_steps();
        qm.pairs
            .iter()
            .map(|[t, big_t]| {
                let i = self.index_of("quasi_martingale t", *t, n)?;
                let m = self.index_of("quasi_martingale T", *big_t, far)?;
                if m < i {
                    return Err(CliError::config(format!("pair ({t}, {big_t}) has T < t")));
                }
                Ok((i, m))
            })
            .collect()
    }

    pub fn oscillation_taus(&self, osc: &OscillationConfig) -> Result<Vec<usize>, CliError> {
        let n = self.t_grid.n_steps();
        osc.taus
            .iter()
            .map(|t| {
                let i = self.index_of("oscillation tau", *t, n)?;
                if i >= n {
                    return Err(CliError::config("oscillation tau must lie before T*"));
                }
                Ok(i)
            })
            .collect()
    }

    /// Maturities of the simulated bond surface: `T_m = m Delta <= x_max`.
    pub fn bond_steps(&self) -> usize {
        self.x_grid.m_steps()
    }

    pub fn strategies(&self, p: &PortfolioConfig) -> Result<Vec<(String, Strategy)>, CliError> {
        let n = self.t_grid.n_steps();
        let mat = self.bond_steps();
        p.strategies
            .iter()
            .map(|s| {
                let holdings = s
                    .holdings
                    .iter()
                    .map(|hc| {
                        let from = self.index_of("holding from", hc.from, n)?;
                        let to = self.index_of("holding to", hc.to, n)?;
                        let atoms = hc
                            .atoms
                            .iter()
                            .map(|a| Ok((self.index_of("atom T", a.maturity, mat)?, a.w)))
                            .collect::<Result<Vec<_>, CliError>>()?;
                        let gate = match hc.gate {
                            GateConfig::Always => Gate::Always,
                            GateConfig::Threshold {
                                observe,
                                maturity,
                                level,
                                above,
                            } => Gate::Threshold {
                                observe: self.index_of("gate observe", observe, n)?,
                                maturity: self.index_of("gate T", maturity, mat)?,
                                level,
                                above,
                            },
                        };
                        Ok(Holding {
                            from,
                            to,
                            measure: DiscreteMeasure::new(atoms).map_err(invalid)?,
                            gate,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                let strategy =
                    Strategy::new(n, holdings).map_err(|e| CliError::config(format!("strategy {:?}: {e}", s.name)))?;
                Ok((s.name.clone(), strategy))
            })
            .collect()
    }

    pub fn consistency_box(&self, c: &ConsistencyConfig) -> Result<Vec<(f64, f64)>, CliError> {
        let dim = match c.family.as_str() {
            "nelson-siegel" => 4,
            "nelson-siegel-fixed-decay" => {
                if !c.decay.is_some_and(|a| a.is_finite() && a != 0.0) {
                    return Err(CliError::config("nelson-siegel-fixed-decay needs a nonzero decay"));
                }
                3
            }
            other => return Err(CliError::config(format!("unknown family {other:?}"))),
        };
        let bounds: Vec<(f64, f64)> = match &c.param_box {
            Some(b) => b.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
            None => NELSON_SIEGEL_BOX[..dim].to_vec(),
        };
        if bounds.len() != dim
            || bounds
                .iter()
                .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
        {
            return Err(CliError::config(format!(
                "consistency box needs {dim} finite [lo, hi] ranges"
            )));
        }
        if dim == 4 && bounds[3].0 <= 0.0 && bounds[3].1 >= 0.0 {
            return Err(CliError::config("Nelson-Siegel decay range must exclude 0"));
        }
        Ok(bounds)
    }
}

fn tabulated_curve(t_grid: &TimeGrid, x_grid: &MaturityGrid, values: Vec<f64>) -> Result<InitialCurve, CliError> {
    let need = t_grid.n_steps() + x_grid.m_steps() + 1;
    if values.len() < need {
        return Err(CliError::config(format!(
            "initial curve has {} values; [0, T* + x_max] needs {need}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::config("initial curve values must be finite"));
    }
    InitialCurve::new(t_grid.step(), values).map_err(invalid)
}

fn read_curve_file(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if n == 0 => continue,
            Err(_) => {
                return Err(CliError::config(format!(
                    "{}:{}: not a number: {field:?}",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    Ok(out)
}

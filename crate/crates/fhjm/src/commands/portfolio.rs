use std::fmt::Write;

use fhjm_core::ledger::{integration_by_parts_check, liquidation_value};
use serde::Serialize;

use crate::error::{numerics, CliError};
use crate::output::{num, OutputDir};

use super::{simulate_one, Model};

#[derive(Debug, Serialize)]
pub struct PortfolioSummary {
    pub n_paths: usize,
    pub admissibility_bound: f64,
    pub strategies: Vec<StrategySummary>,
}

#[derive(Debug, Serialize)]
pub struct StrategySummary {
    pub name: String,
    pub total_variation: f64,
    /// Largest integration-by-parts residual over paths.
    pub ibp_max_residual: f64,
    pub by_k: Vec<CostSummary>,
}

#[derive(Debug, Serialize)]
pub struct CostSummary {
    pub k: f64,
    pub mean_terminal_value: f64,
    pub terminal_quantiles: Vec<(f64, f64)>,
    /// `inf_t V_t` over all paths.
    pub inf_value: f64,
    /// Paths on which `V_t < -bound` at some grid time.
    pub inadmissible_paths: Vec<u64>,
}

const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

struct PathResult {
    rows: String,
    /// `(V_T, inf_t V_t)` per strategy and cost rate.
    values: Vec<Vec<(f64, f64)>>,
    ibp: Vec<f64>,
}

/// `ledger.csv` with `strategy,k,path_id,t,gains,cost,liquidation,V` and
/// `portfolio_summary.json`.
pub fn run(model: &Model, out: &mut OutputDir) -> Result<PortfolioSummary, CliError> {
    let r = &model.r;
    let cfg = r
        .config
        .portfolio
        .clone()
        .ok_or_else(|| CliError::config("this command needs a portfolio block"))?;
    let strategies = r.strategies(&cfg)?;
    let n_paths = r.mc()?.n_paths;
    let src = model.source()?;
    let sim = model.simulator()?;
    let mut csv = out.open("ledger.csv")?;
    csv.line("strategy,k,path_id,t,gains,cost,liquidation,V")?;
    let mut terminal = vec![vec![Vec::with_capacity(n_paths); cfg.k.len()]; strategies.len()];
    let mut inf = vec![vec![f64::INFINITY; cfg.k.len()]; strategies.len()];
    let mut flagged = vec![vec![Vec::new(); cfg.k.len()]; strategies.len()];
    let mut ibp = vec![0.0f64; strategies.len()];
    src.for_each_ordered(
        n_paths,
        |p, block| {
            let z = simulate_one(model, &sim, &src, block)?.discounted;
            let mut res = PathResult {
                rows: String::new(),
                values: Vec::new(),
                ibp: Vec::new(),
            };
            for (name, strategy) in &strategies {
                let mut per_k = Vec::with_capacity(cfg.k.len());
                for &k in &cfg.k {
                    let l = liquidation_value(strategy, &z, 0, k).map_err(numerics)?;
                    let kk = num(k);
                    for i in 0..l.times.len() {
                        writeln!(
                            res.rows,
                            "{name},{kk},{p},{},{},{},{},{}",
                            num(l.times[i]),
                            num(l.gains[i]),
                            num(l.cost[i]),
                            num(l.liquidation[i]),
                            num(l.value[i])
                        )
                        .unwrap();
                    }
                    per_k.push((*l.value.last().unwrap(), l.min_value()));
                }
                res.values.push(per_k);
                res.ibp.push(
                    integration_by_parts_check(strategy, &z, 0)
                        .map_err(numerics)?
                        .residual
                        .abs(),
                );
            }
            Ok(res)
        },
        |p, res| {
            csv.write_str(&res.rows)?;
            for (s, per_k) in res.values.iter().enumerate() {
                for (q, &(v_t, v_min)) in per_k.iter().enumerate() {
                    terminal[s][q].push(v_t);
                    inf[s][q] = inf[s][q].min(v_min);
                    if v_min < -cfg.admissibility_bound {
                        flagged[s][q].push(p);
                    }
                }
                ibp[s] = ibp[s].max(res.ibp[s]);
            }
            Ok(())
        },
    )?;
    out.close(csv)?;

    let summary = PortfolioSummary {
        n_paths,
        admissibility_bound: cfg.admissibility_bound,
        strategies: strategies
            .iter()
            .enumerate()
            .map(|(s, (name, strategy))| StrategySummary {
                name: name.clone(),
                total_variation: strategy.total_variation(),
                ibp_max_residual: ibp[s],
                by_k: cfg
                    .k
                    .iter()
                    .enumerate()
                    .map(|(q, &k)| {
                        let mut sorted = terminal[s][q].clone();
                        sorted.sort_by(f64::total_cmp);
                        CostSummary {
                            k,
                            mean_terminal_value: sorted.iter().sum::<f64>() / sorted.len() as f64,
                            terminal_quantiles: QUANTILES.iter().map(|&a| (a, quantile(&sorted, a))).collect(),
                            inf_value: inf[s][q],
                            inadmissible_paths: std::mem::take(&mut flagged[s][q]),
                        }
                    })
                    .collect(),
            })
            .collect(),
    };
    out.write_json("portfolio_summary.json", &summary)?;
    Ok(summary)
}

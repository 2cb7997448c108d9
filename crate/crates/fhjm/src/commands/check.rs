use fhjm_core::noarb::{drift_identity_check, max_oscillation, quasi_martingale_from_samples, DiscountTables};
use fhjm_core::noarb::{OscillationReport, QuasiMartingaleEntry};
use fhjm_core::DriftField;
use serde::Serialize;

use crate::error::{numerics, CliError};
use crate::output::OutputDir;

use super::{simulate_one, Model};

pub const IDENTITY_TOL: f64 = 1e-6;
pub const Z_LIMIT: f64 = 3.0;

#[derive(Debug, Default, Serialize)]
pub struct CheckReport {
    pub drift_identity: Option<DriftIdentityResult>,
    pub quasi_martingale: Option<QuasiMartingaleResult>,
    pub oscillation: Option<OscillationResult>,
    /// All requested checks passed.
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct DriftIdentityResult {
    pub maturity: f64,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct QuasiMartingaleResult {
    pub n_paths: usize,
    pub zero_drift: bool,
    pub entries: Vec<QuasiMartingaleEntry>,
    pub z_limit: f64,
    pub exceeding: usize,
    /// One exceedance in twenty pairs is what chance alone produces.
    pub allowed: usize,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct OscillationResult {
    pub n_paths: usize,
    pub probes: Vec<OscillationReport>,
    /// Every frequency is positive.
    pub pass: bool,
}

/// Runs the checks named in the `check` block into `report.json`.
pub fn run(model: &Model, out: &mut OutputDir) -> Result<CheckReport, CliError> {
    let r = &model.r;
    let cfg = r.config.check.clone().unwrap_or_default();
    let mut report = CheckReport::default();

    if let Some(di) = &cfg.drift_identity {
        let maturity = di.maturity.unwrap_or(r.t_grid.t_star());
        let err = drift_identity_check(&r.spec, r.h, &r.t_grid, maturity);
        report.drift_identity = Some(DriftIdentityResult {
            maturity,
            max_abs_error: err,
            tolerance: IDENTITY_TOL,
            pass: err <= IDENTITY_TOL,
        });
    }

    let qm = cfg.quasi_martingale.as_ref();
    let osc = cfg.oscillation.as_ref();
    if qm.is_some() || osc.is_some() {
        let n_paths = r.mc()?.n_paths;
        let src = model.source()?;
        let pairs = match qm {
            Some(q) => r.qm_pairs(q)?,
            None => Vec::new(),
        };
        let taus = match osc {
            Some(o) => r.oscillation_taus(o)?,
            None => Vec::new(),
        };
        let mat = pairs.iter().map(|p| p.1).max().unwrap_or(0);
        let zero_drift = qm.is_some_and(|q| q.zero_drift);
        // Exposures come from the model; prices from the model or, for the
        // negative control, from the same model with its drift removed.
        let tables = match qm {
            Some(_) => {
                let exposure = DiscountTables::new(&r.spec, &model.drift, &r.init, r.t_grid, mat).map_err(numerics)?;
                let priced = if zero_drift {
                    let zero = DriftField::zeros(r.t_grid, model.wide);
                    Some(DiscountTables::new(&r.spec, &zero, &r.init, r.t_grid, mat).map_err(numerics)?)
                } else {
                    None
                };
                Some((exposure, priced))
            }
            None => None,
        };
        let sim = if taus.is_empty() {
            None
        } else {
            Some(model.simulator()?)
        };

        let mut values = vec![Vec::with_capacity(n_paths); pairs.len()];
        let mut controls = values.clone();
        let mut oscillations = vec![Vec::with_capacity(n_paths); taus.len()];
        src.for_each_ordered(
            n_paths,
            |_, block| {
                let qm_row: Vec<(f64, f64)> = match &tables {
                    Some((exposure, priced)) => pairs
                        .iter()
                        .map(|&(i, m)| {
                            let e = exposure.exposure_of(&block, i, m);
                            (priced.as_ref().unwrap_or(exposure).value_from_exposure(i, m, e), e)
                        })
                        .collect(),
                    None => Vec::new(),
                };
                let osc_row = match &sim {
                    Some(sim) => {
                        let z = simulate_one(model, sim, &src, block)?.discounted;
                        taus.iter().map(|&tau| max_oscillation(&z, 0, tau)).collect()
                    }
                    None => Vec::new(),
                };
                Ok((qm_row, osc_row))
            },
            |_, (qm_row, osc_row)| {
                for (q, (v, e)) in qm_row.into_iter().enumerate() {
                    values[q].push(v);
                    controls[q].push(e);
                }
                for (q, v) in osc_row.into_iter().enumerate() {
                    oscillations[q].push(v);
                }
                Ok(())
            },
        )?;

        if let Some(q) = qm {
            let ctl = q.control_variate.then_some(&controls[..]);
            let rep = quasi_martingale_from_samples(&r.t_grid, &r.spec, r.h, &r.init, &pairs, &values, ctl)
                .map_err(numerics)?;
            let exceeding = rep.count_exceeding(Z_LIMIT);
            let allowed = pairs.len().div_ceil(20);
            report.quasi_martingale = Some(QuasiMartingaleResult {
                n_paths,
                zero_drift,
                entries: rep.entries,
                z_limit: Z_LIMIT,
                exceeding,
                allowed,
                pass: exceeding <= allowed,
            });
        }
        if let Some(o) = osc {
            let probes: Vec<OscillationReport> =
                o.k.iter()
                    .map(|&k| OscillationReport {
                        k,
                        taus: taus.iter().map(|t| r.t_grid.point(*t)).collect(),
                        frequencies: oscillations
                            .iter()
                            .map(|xs| xs.iter().filter(|v| **v < k).count() as f64 / n_paths as f64)
                            .collect(),
                    })
                    .collect();
            let pass = probes.iter().all(|p| p.frequencies.iter().all(|f| *f > 0.0));
            report.oscillation = Some(OscillationResult { n_paths, probes, pass });
        }
    }

    report.pass = report.drift_identity.as_ref().is_none_or(|d| d.pass)
        && report.quasi_martingale.as_ref().is_none_or(|q| q.pass)
        && report.oscillation.as_ref().is_none_or(|o| o.pass);
    out.write_json("report.json", &report)?;
    Ok(report)
}

/// Plain-text summary of a report.
pub fn table(report: &CheckReport) -> String {
    use std::fmt::Write;
    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let mut s = String::new();
    if let Some(d) = &report.drift_identity {
        writeln!(
            s,
            "drift identity   T={:<6} max|err|={:.3e}  tol={:.0e}  {}",
            d.maturity,
            d.max_abs_error,
            d.tolerance,
            mark(d.pass)
        )
        .unwrap();
    }
    if let Some(q) = &report.quasi_martingale {
        writeln!(
            s,
            "quasi-martingale paths={} |z|>{} in {}/{} pairs (allowed {})  {}",
            q.n_paths,
            q.z_limit,
            q.exceeding,
            q.entries.len(),
            q.allowed,
            mark(q.pass)
        )
        .unwrap();
        writeln!(
            s,
            "  {:>6} {:>6} {:>14} {:>14} {:>10} {:>8}",
            "t", "T", "target", "mc_mean", "se", "z"
        )
        .unwrap();
        for e in &q.entries {
            writeln!(
                s,
                "  {:>6} {:>6} {:>14.10} {:>14.10} {:>10.3e} {:>8.2}",
                e.t, e.maturity, e.target, e.mc_mean, e.std_error, e.z_score
            )
            .unwrap();
        }
    }
    if let Some(o) = &report.oscillation {
        writeln!(s, "oscillation      paths={}  {}", o.n_paths, mark(o.pass)).unwrap();
        for p in &o.probes {
            for (t, f) in p.taus.iter().zip(&p.frequencies) {
                writeln!(s, "  k={:<8} tau={:<6} frequency={f:.4}", p.k, t).unwrap();
            }
        }
    }
    s
}

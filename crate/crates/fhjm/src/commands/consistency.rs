use fhjm_core::consistency::{
    latin_hypercube, nagumo_full_check, time_samples, ManifoldFamily, MembershipGrid, NagumoReport, NelsonSiegel,
    NelsonSiegelFixedDecay, Probe, Verdict,
};
use serde::Serialize;

use crate::config::Resolved;
use crate::error::{numerics, CliError};
use crate::output::OutputDir;

#[derive(Debug, Serialize)]
pub struct ConsistencyReport {
    pub family: String,
    /// `consistent`, `consistent (trivial)`, `inconsistent` or `indeterminate`.
    pub label: String,
    pub verdict: Verdict,
    pub trivial: bool,
    pub shift_verdict: Verdict,
    pub drift_and_vol_verdict: Verdict,
    pub witness: Option<Probe>,
    pub failing_terms: Vec<String>,
    pub n_parameter_samples: usize,
    pub n_times: usize,
    pub nodes: usize,
    /// The first pass was indeterminate and the verdict comes from a grid
    /// with twice the resolution.
    pub refined: bool,
}

pub fn label(report: &NagumoReport) -> &'static str {
    match report.verdict {
        Verdict::Consistent if report.trivial => "consistent (trivial)",
        Verdict::Consistent => "consistent",
        Verdict::Inconsistent => "inconsistent",
        Verdict::Indeterminate => "indeterminate",
    }
}

/// Tangency verdict of the configured family under the model into `verdict.json`.
pub fn run(r: &Resolved, out: &mut OutputDir) -> Result<ConsistencyReport, CliError> {
    let c = r
        .config
        .consistency
        .clone()
        .ok_or_else(|| CliError::config("this command needs a consistency block"))?;
    let bounds = r.consistency_box(&c)?;
    let family: Box<dyn ManifoldFamily> = match c.family.as_str() {
        "nelson-siegel" => Box::new(NelsonSiegel),
        _ => Box::new(NelsonSiegelFixedDecay {
            alpha: c.decay.unwrap_or_default(),
        }),
    };
    let ys = latin_hypercube(&bounds, c.n_samples, c.seed).map_err(numerics)?;
    let ts = time_samples(r.t_grid.t_star(), c.n_times);
    let mut grid = MembershipGrid::new(c.x_max, c.nodes).map_err(numerics)?;
    let mut report = nagumo_full_check(family.as_ref(), &r.spec, r.h, &ts, &ys, &grid).map_err(numerics)?;
    let mut refined = false;
    if report.verdict == Verdict::Indeterminate {
        grid = grid.refined();
        report = nagumo_full_check(family.as_ref(), &r.spec, r.h, &ts, &ys, &grid).map_err(numerics)?;
        refined = true;
    }
    let witness = if report.drift_and_vol.verdict == report.verdict {
        report.drift_and_vol.witness.clone()
    } else {
        report.shift.witness.clone()
    };
    let out_report = ConsistencyReport {
        family: family.name().to_string(),
        label: label(&report).to_string(),
        verdict: report.verdict,
        trivial: report.trivial,
        shift_verdict: report.shift.verdict,
        drift_and_vol_verdict: report.drift_and_vol.verdict,
        witness,
        failing_terms: report.drift_and_vol.failing_terms.clone(),
        n_parameter_samples: ys.len(),
        n_times: ts.len(),
        nodes: grid.points().len(),
        refined,
    };
    out.write_json("verdict.json", &out_report)?;
    Ok(out_report)
}

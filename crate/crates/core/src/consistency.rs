//! Finite-dimensional forward-curve families and numerical Nagumo checks.
//!
//! A family `M = {F(., y)}` is invariant for the fractional HJM dynamics iff
//! the shift `dF/dx`, the drift `S_H sigma(t, .)` and every volatility
//! `sigma^j(t, .)` lie in the tangent space `span{dF/dy_i(., y)}`. Each
//! membership is a weighted least-squares projection on a maturity grid.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use libm::{exp, fabs, pow, sqrt};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::drift::{hullwhite_terms, DriftEvaluator, DriftField, DEFAULT_CELLS};
use crate::error::{Error, Result};
use crate::fbm::{path_rng, FbmMethod, FbmPathSet};
use crate::hjm::{simulate_forward, ForwardSurface, InitialCurve};
use crate::kernel::{frac_integral, FracOrder, HurstParam, SampledFunction};
use crate::math::weighted_least_squares;
use crate::vol::{MaturityGrid, VolFactor, VolatilitySpec};

/// Passing bound on the relative residual.
pub const PASS_TOL: f64 = 1e-6;
/// Residuals in `(PASS_TOL, INDETERMINATE_TOL]` ask for refinement.
pub const INDETERMINATE_TOL: f64 = 1e-3;

const TAG_LHS: u64 = 3 << 56;

/// Parametrised family of smooth forward curves `x -> F(x, y)`.
pub trait ManifoldFamily {
    fn name(&self) -> &str;
    /// Parameter dimension `q`.
    fn dim(&self) -> usize;
    fn curve(&self, x: f64, y: &[f64]) -> f64;
    /// `dF/dy_i`.
    fn partial(&self, i: usize, x: f64, y: &[f64]) -> f64;
    /// `dF/dx`.
    fn dx(&self, x: f64, y: &[f64]) -> f64;
    fn in_domain(&self, y: &[f64]) -> bool;
}

/// `F(x, y) = y_1 + y_2 e^{-y_4 x} + y_3 x e^{-y_4 x}` on `y_4 != 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NelsonSiegel;

impl ManifoldFamily for NelsonSiegel {
    fn name(&self) -> &str {
        "nelson-siegel"
    }

    fn dim(&self) -> usize {
        4
    }

    fn curve(&self, x: f64, y: &[f64]) -> f64 {
        let e = exp(-y[3] * x);
        y[0] + (y[1] + y[2] * x) * e
    }

    fn partial(&self, i: usize, x: f64, y: &[f64]) -> f64 {
        let e = exp(-y[3] * x);
        match i {
            0 => 1.0,
            1 => e,
            2 => x * e,
            3 => -x * (y[1] + y[2] * x) * e,
            _ => panic!("Nelson-Siegel has four parameters"),
        }
    }

    fn dx(&self, x: f64, y: &[f64]) -> f64 {
        (y[2] - y[3] * (y[1] + y[2] * x)) * exp(-y[3] * x)
    }

    fn in_domain(&self, y: &[f64]) -> bool {
        y.len() == 4 && y.iter().all(|v| v.is_finite()) && y[3] != 0.0
    }
}

/// Nelson–Siegel with the decay frozen at `alpha`: parameters `(y_1, y_2, y_3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelsonSiegelFixedDecay {
    pub alpha: f64,
}

impl ManifoldFamily for NelsonSiegelFixedDecay {
    fn name(&self) -> &str {
        "nelson-siegel-fixed-decay"
    }

    fn dim(&self) -> usize {
        3
    }

    fn curve(&self, x: f64, y: &[f64]) -> f64 {
        y[0] + (y[1] + y[2] * x) * exp(-self.alpha * x)
    }

    fn partial(&self, i: usize, x: f64, _y: &[f64]) -> f64 {
        let e = exp(-self.alpha * x);
        match i {
            0 => 1.0,
            1 => e,
            2 => x * e,
            _ => panic!("fixed-decay Nelson-Siegel has three parameters"),
        }
    }

    fn dx(&self, x: f64, y: &[f64]) -> f64 {
        (y[2] - self.alpha * (y[1] + y[2] * x)) * exp(-self.alpha * x)
    }

    fn in_domain(&self, y: &[f64]) -> bool {
        y.len() == 3 && y.iter().all(|v| v.is_finite()) && self.alpha != 0.0
    }
}

/// Largest relative gap between the analytic partials of `family` and
/// central differences with step `step` at `y`, over the nodes `xs`.
/// Partials below `1e-6` in magnitude are compared in absolute terms, since
/// the difference quotient cannot resolve them.
pub fn partials_fd_error<F: ManifoldFamily + ?Sized>(family: &F, y: &[f64], xs: &[f64], step: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut yp = y.to_vec();
    for i in 0..family.dim() {
        for &x in xs {
            let hi = step * fabs(y[i]).max(1.0);
            yp[i] = y[i] + hi;
            let up = family.curve(x, &yp);
            yp[i] = y[i] - hi;
            let down = family.curve(x, &yp);
            yp[i] = y[i];
            let fd = (up - down) / (2.0 * hi);
            let exact = family.partial(i, x, y);
            worst = worst.max(fabs(fd - exact) / fabs(exact).max(1e-6));
        }
    }
    for &x in xs {
        let hx = step * x.max(1.0);
        if x >= hx {
            let fd = (family.curve(x + hx, y) - family.curve(x - hx, y)) / (2.0 * hx);
            let exact = family.dx(x, y);
            worst = worst.max(fabs(fd - exact) / fabs(exact).max(1e-6));
        }
    }
    worst
}

/// Maturity nodes on `[0, x_max]` with weights `e^{-x/4}` times the
/// trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for MembershipGrid {
    fn default() -> Self {
        Self::new(10.0, 512).expect("default membership grid")
    }
}

impl MembershipGrid {
    pub fn new(x_max: f64, nodes: usize) -> Result<Self> {
        if !(x_max > 0.0 && x_max.is_finite()) || nodes < 2 {
            return Err(Error::InvalidGrid(
                "membership grid needs x_max > 0 and 2+ nodes".into(),
            ));
        }
        let h = x_max / (nodes - 1) as f64;
        let points: Vec<f64> = (0..nodes)
            .map(|k| if k + 1 == nodes { x_max } else { k as f64 * h })
            .collect();
        let weights = points
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let trap = if k == 0 || k + 1 == nodes { 0.5 * h } else { h };
                trap * exp(-x / 4.0)
            })
            .collect();
        Ok(Self { points, weights })
    }

    /// Same interval, step halved.
    pub fn refined(&self) -> Self {
        Self::new(*self.points.last().unwrap(), 2 * self.points.len() - 1).expect("refining a valid grid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn norm(&self, g: &[f64]) -> f64 {
        sqrt(g.iter().zip(&self.weights).map(|(v, w)| w * v * v).sum())
    }

    fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points.iter().map(|x| f(*x)).collect()
    }
}

/// Projection of a curve on a tangent space.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TangentFit {
    /// `||g - P g||_w / ||g||_w`, zero for `g = 0`.
    pub residual: f64,
    /// `||g||_w`.
    pub norm: f64,
    /// Numerical rank of the tangent basis; below `q` the pseudo-inverse is used.
    pub rank: usize,
}

/// Relative weighted residual of `g` (sampled on `grid`) against
/// `span{dF/dy_i(., y)}`.
pub fn tangent_residual<F: ManifoldFamily + ?Sized>(
    family: &F,
    y: &[f64],
    g: &[f64],
    grid: &MembershipGrid,
) -> Result<TangentFit> {
    if !family.in_domain(y) {
        return Err(Error::InvalidParameter(alloc::format!(
            "parameter {y:?} is outside the {} domain",
            family.name()
        )));
    }
    if g.len() != grid.points().len() {
        return Err(Error::Shape("curve and membership grid differ in length".into()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("curve has non-finite values".into()));
    }
    let columns: Vec<Vec<f64>> = (0..family.dim())
        .map(|i| grid.sample(|x| family.partial(i, x, y)))
        .collect();
    let norm = grid.norm(g);
    let fit = weighted_least_squares(&columns, g, grid.weights());
    let residual = if norm > 0.0 { fit.residual_norm / norm } else { 0.0 };
    Ok(TangentFit {
        residual,
        norm,
        rank: fit.rank,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Outcome {
    Pass,
    Indeterminate,
    Fail,
}

impl Outcome {
    pub fn of(residual: f64) -> Self {
        if residual <= PASS_TOL {
            Outcome::Pass
        } else if residual <= INDETERMINATE_TOL {
            Outcome::Indeterminate
        } else {
            Outcome::Fail
        }
    }

    fn worst(self, other: Self) -> Self {
        match (self, other) {
            (Outcome::Fail, _) | (_, Outcome::Fail) => Outcome::Fail,
            (Outcome::Indeterminate, _) | (_, Outcome::Indeterminate) => Outcome::Indeterminate,
            _ => Outcome::Pass,
        }
    }
}

/// One membership test.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Probe {
    /// Which vector was tested, e.g. `shift`, `drift`, `vol[0]`.
    pub label: String,
    pub t: Option<f64>,
    pub y: Vec<f64>,
    pub residual: f64,
    pub norm: f64,
    pub rank: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    Consistent,
    Indeterminate,
    Inconsistent,
}

impl From<Outcome> for Verdict {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Pass => Verdict::Consistent,
            Outcome::Indeterminate => Verdict::Indeterminate,
            Outcome::Fail => Verdict::Inconsistent,
        }
    }
}

/// Aggregate of a family of membership probes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TangencyVerdict {
    pub verdict: Verdict,
    /// Every tested vector was zero.
    pub trivial: bool,
    /// Probes that decide the verdict.
    pub probes: Vec<Probe>,
    /// Term-by-term breakdown of the drift for models with a closed form;
    /// explains a failure without entering the verdict.
    pub terms: Vec<Probe>,
    /// Decisive probe with the largest residual among the failing ones.
    pub witness: Option<Probe>,
    /// Labels of the failing drift terms, in order of first failure.
    pub failing_terms: Vec<String>,
}

impl TangencyVerdict {
    fn from_probes(probes: Vec<Probe>, terms: Vec<Probe>) -> Self {
        let outcome = probes.iter().fold(Outcome::Pass, |acc, p| acc.worst(p.outcome));
        let witness = probes
            .iter()
            .filter(|p| p.outcome != Outcome::Pass)
            .fold(None::<&Probe>, |best, p| match best {
                Some(b) if b.residual >= p.residual => Some(b),
                _ => Some(p),
            })
            .cloned();
        let mut failing_terms: Vec<String> = Vec::new();
        for t in terms.iter().filter(|t| t.outcome == Outcome::Fail) {
            if !failing_terms.contains(&t.label) {
                failing_terms.push(t.label.clone());
            }
        }
        let trivial = probes.iter().all(|p| p.norm == 0.0);
        Self {
            verdict: outcome.into(),
            trivial,
            probes,
            terms,
            witness,
            failing_terms,
        }
    }

    /// Largest residual among probes labelled `label`.
    pub fn max_residual(&self, label: &str) -> Option<f64> {
        self.probes
            .iter()
            .chain(&self.terms)
            .filter(|p| p.label == label)
            .map(|p| p.residual)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    /// Smallest residual among probes labelled `label`.
    pub fn min_residual(&self, label: &str) -> Option<f64> {
        self.probes
            .iter()
            .chain(&self.terms)
            .filter(|p| p.label == label)
            .map(|p| p.residual)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.min(r))))
    }
}

fn probe<F: ManifoldFamily + ?Sized>(
    family: &F,
    label: String,
    t: Option<f64>,
    y: &[f64],
    g: &[f64],
    grid: &MembershipGrid,
) -> Result<Probe> {
    let fit = tangent_residual(family, y, g, grid)?;
    Ok(Probe {
        label,
        t,
        y: y.to_vec(),
        residual: fit.residual,
        norm: fit.norm,
        rank: fit.rank,
        outcome: Outcome::of(fit.residual),
    })
}

/// The shift condition: `dF/dx(., y)` in the tangent space for every sample.
pub fn check_shift_condition<F: ManifoldFamily + ?Sized>(
    family: &F,
    ys: &[Vec<f64>],
    grid: &MembershipGrid,
) -> Result<TangencyVerdict> {
    let probes = ys
        .iter()
        .map(|y| {
            probe(
                family,
                "shift".to_string(),
                None,
                y,
                &grid.sample(|x| family.dx(x, y)),
                grid,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TangencyVerdict::from_probes(probes, Vec::new()))
}

/// Labelled closed-form pieces of the drift of factor `j` at time `t`.
fn drift_terms(
    spec: &VolatilitySpec,
    h: HurstParam,
    j: usize,
    t: f64,
    grid: &MembershipGrid,
) -> Vec<(String, Vec<f64>)> {
    let hv = h.value();
    match *spec.factor(j) {
        VolFactor::HoLee { sigma } => {
            let slope = 2.0 * sigma * sigma * hv * pow(t, 2.0 * hv - 1.0);
            let level = sigma * sigma * (hv - 0.5) * pow(t, 2.0 * hv);
            alloc::vec![
                (alloc::format!("drift[{j}]: x-linear term"), grid.sample(|x| slope * x)),
                (alloc::format!("drift[{j}]: constant term"), grid.sample(|_| level)),
            ]
        }
        VolFactor::HullWhite { sigma, alpha } => {
            let (a, b) = hullwhite_terms(sigma, alpha, h, t);
            alloc::vec![
                (
                    alloc::format!("drift[{j}]: e^(-alpha x) term"),
                    grid.sample(|x| a * exp(-alpha * x))
                ),
                (
                    alloc::format!("drift[{j}]: e^(-2 alpha x) term"),
                    grid.sample(|x| b * exp(-2.0 * alpha * x))
                ),
            ]
        }
        VolFactor::Tabulated(_) => Vec::new(),
    }
}

/// Drift and volatility conditions: `S_H sigma(t, .)` and each
/// `sigma^j(t, .)` in the tangent space, for every `(t, y)` sample.
pub fn check_drift_and_vol_condition<F: ManifoldFamily + ?Sized>(
    family: &F,
    spec: &VolatilitySpec,
    h: HurstParam,
    ts: &[f64],
    ys: &[Vec<f64>],
    grid: &MembershipGrid,
) -> Result<TangencyVerdict> {
    if let Some(t) = ts.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter(alloc::format!(
            "time samples must be positive, got {t}"
        )));
    }
    let eval = DriftEvaluator::new(spec, h, DEFAULT_CELLS);
    let mut probes = Vec::new();
    let mut terms = Vec::new();
    for &t in ts {
        let drift = grid.sample(|x| eval.eval(t, x));
        let vols: Vec<Vec<f64>> = (0..spec.dims())
            .map(|j| grid.sample(|x| spec.eval_flat(j, t, x)))
            .collect();
        let pieces: Vec<(String, Vec<f64>)> = (0..spec.dims())
            .flat_map(|j| drift_terms(spec, h, j, t, grid))
            .collect();
        for y in ys {
            probes.push(probe(family, "drift".to_string(), Some(t), y, &drift, grid)?);
            for (j, v) in vols.iter().enumerate() {
                probes.push(probe(family, alloc::format!("vol[{j}]"), Some(t), y, v, grid)?);
            }
            for (label, g) in &pieces {
                terms.push(probe(family, label.clone(), Some(t), y, g, grid)?);
            }
        }
    }
    Ok(TangencyVerdict::from_probes(probes, terms))
}

/// Combined Nagumo check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NagumoReport {
    pub verdict: Verdict,
    pub trivial: bool,
    pub shift: TangencyVerdict,
    pub drift_and_vol: TangencyVerdict,
}

/// Consistent iff both the shift and the drift-and-volatility conditions hold.
pub fn nagumo_full_check<F: ManifoldFamily + ?Sized>(
    family: &F,
    spec: &VolatilitySpec,
    h: HurstParam,
    ts: &[f64],
    ys: &[Vec<f64>],
    grid: &MembershipGrid,
) -> Result<NagumoReport> {
    let shift = check_shift_condition(family, ys, grid)?;
    let drift_and_vol = check_drift_and_vol_condition(family, spec, h, ts, ys, grid)?;
    let verdict = match (shift.verdict, drift_and_vol.verdict) {
        (Verdict::Inconsistent, _) | (_, Verdict::Inconsistent) => Verdict::Inconsistent,
        (Verdict::Indeterminate, _) | (_, Verdict::Indeterminate) => Verdict::Indeterminate,
        _ => Verdict::Consistent,
    };
    Ok(NagumoReport {
        verdict,
        trivial: drift_and_vol.trivial,
        shift,
        drift_and_vol,
    })
}

/// `count` equally spaced times `k T* / count`, `k = 1..=count`.
pub fn time_samples(t_star: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| t_star * k as f64 / count as f64).collect()
}

/// Latin-hypercube sample of `count` points in the box `bounds`.
pub fn latin_hypercube(bounds: &[(f64, f64)], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if bounds
        .iter()
        .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
    {
        return Err(Error::InvalidParameter("parameter box needs finite lo <= hi".into()));
    }
    let mut rng = path_rng(seed, TAG_LHS, 0);
    let mut out = alloc::vec![alloc::vec![0.0; bounds.len()]; count];
    for (d, (lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(&mut rng);
        for (row, s) in out.iter_mut().zip(strata) {
            let u: f64 = rng.random();
            row[d] = lo + (hi - lo) * (s as f64 + u) / count as f64;
        }
    }
    Ok(out)
}

/// Default Nelson–Siegel sampling box. The decay stays in `[1, 3]`: as
/// `y_4 -> 0` the span of `{1, e^{-y_4 x}, x e^{-y_4 x}}` approximates
/// linear curves arbitrarily well on a bounded grid.
pub const NELSON_SIEGEL_BOX: [(f64, f64); 4] = [(0.0, 0.06), (-0.04, 0.04), (-0.04, 0.04), (1.0, 3.0)];

/// Single deterministic path of
///
/// ```text
/// dy/dt = A y + S_H sigma(t) + sum_j sigma^j (I^{H-1/2} u_j)(t)
/// ```
///
/// from `init`, with `u[j]` sampled on the time grid of `drift`. It is the
/// forward simulation driven by the Cameron–Martin path
/// `h_j(t) = ∫_0^t (I^{H-1/2} u_j)(s) ds` (trapezoid) in place of fBm, so
/// `u = 0` reproduces the noise-free simulation node for node.
pub fn controlled_path(
    spec: &VolatilitySpec,
    h: HurstParam,
    drift: &DriftField,
    init: &InitialCurve,
    u: &[SampledFunction],
    x_grid: MaturityGrid,
) -> Result<ForwardSurface> {
    let tg = drift.t_grid();
    let n = tg.n_steps();
    let dt = tg.step();
    if u.len() != spec.dims() {
        return Err(Error::Shape(alloc::format!(
            "{} controls for {} factors",
            u.len(),
            spec.dims()
        )));
    }
    let order = FracOrder::new(h.value() - 0.5)?;
    let mut block = Vec::with_capacity(spec.dims() * (n + 1));
    for uj in u {
        if uj.len() != n + 1 || fabs(uj.uniform_step()? - dt) > 1e-12 * dt {
            return Err(Error::InvalidGrid("controls must be sampled on the time grid".into()));
        }
        if uj.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("controls must be finite".into()));
        }
        let iu = frac_integral(uj, order)?;
        let v = iu.values();
        let mut acc = 0.0;
        block.push(0.0);
        for i in 1..=n {
            acc += 0.5 * dt * (v[i - 1] + v[i]);
            block.push(acc);
        }
    }
    let paths = FbmPathSet::from_paths(tg, spec.dims(), alloc::vec![block], 0, FbmMethod::Cholesky, None)?;
    simulate_forward(spec, drift, init, &paths, x_grid)
}

/// Best fit of a family to a sampled curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyFit {
    pub y: Vec<f64>,
    /// Weighted distance `||g - F(., y)||_w`.
    pub distance: f64,
    /// `distance / ||g||_w`.
    pub relative: f64,
    pub iterations: usize,
}

/// Levenberg–Marquardt fit of `F(., y)` to `g` on the nodes `xs` with
/// weights `w`, started at `y0`.
pub fn fit_family<F: ManifoldFamily + ?Sized>(
    family: &F,
    xs: &[f64],
    w: &[f64],
    g: &[f64],
    y0: &[f64],
    max_iter: usize,
) -> Result<FamilyFit> {
    if xs.len() != g.len() || w.len() != g.len() {
        return Err(Error::Shape("nodes, weights and curve differ in length".into()));
    }
    if !family.in_domain(y0) {
        return Err(Error::InvalidParameter(
            "starting point outside the family domain".into(),
        ));
    }
    let q = family.dim();
    let wnorm = |r: &[f64]| sqrt(r.iter().zip(w).map(|(v, wi)| wi * v * v).sum());
    let resid = |y: &[f64]| -> Vec<f64> { xs.iter().zip(g).map(|(x, gv)| gv - family.curve(*x, y)).collect() };
    let mut y = y0.to_vec();
    let mut r = resid(&y);
    let mut cost = wnorm(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let jac: Vec<Vec<f64>> = (0..q)
            .map(|i| xs.iter().map(|x| family.partial(i, *x, &y)).collect())
            .collect();
        let scale: Vec<f64> = jac.iter().map(|c| wnorm(c).max(1e-300)).collect();
        let mut improved = false;
        for _ in 0..30 {
            // Damped normal equations as an augmented least-squares problem.
            let damp = sqrt(lambda);
            let mut cols = jac.clone();
            for (i, c) in cols.iter_mut().enumerate() {
                c.extend((0..q).map(|k| if k == i { damp * scale[i] } else { 0.0 }));
            }
            let mut target = r.clone();
            target.extend(core::iter::repeat_n(0.0, q));
            let mut weights = w.to_vec();
            weights.extend(core::iter::repeat_n(1.0, q));
            let step = weighted_least_squares(&cols, &target, &weights).coefficients;
            let trial: Vec<f64> = y.iter().zip(&step).map(|(a, b)| a + b).collect();
            if family.in_domain(&trial) {
                let rt = resid(&trial);
                let ct = wnorm(&rt);
                if ct < cost {
                    let gain = cost - ct;
                    y = trial;
                    r = rt;
                    cost = ct;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = gain > 1e-15 * cost.max(1e-300);
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let norm = wnorm(g);
    Ok(FamilyFit {
        y,
        distance: cost,
        relative: if norm > 0.0 { cost / norm } else { 0.0 },
        iterations,
    })
}

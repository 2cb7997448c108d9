//! Measure-valued bond portfolios, proportional transaction costs and the
//! liquidation value
//!
//! ```text
//! V_t^k(mu) = ∫_0^t mu_s dZ_s - k ∫_0^t Z_s d|mu_s| - k Z_t |mu_t|
//! ```
//!
//! on the simulation grid. A strategy holds measure `m_i` on the grid steps
//! `(t_from, t_to]` when its gate is open. The holding on step
//! `(t_s, t_{s+1}]` is written `mu^(s)`; `mu_{t_i} = mu^(i-1)` and
//! `mu^(-1) = 0`, so the portfolio changes right after grid times.

use alloc::vec;
use alloc::vec::Vec;

use libm::fabs;

use crate::error::{Error, Result};
use crate::hjm::BondSurface;

/// Signed measure with finitely many atoms on maturity-grid indices.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscreteMeasure {
    atoms: Vec<(usize, f64)>,
}

impl DiscreteMeasure {
    /// Atoms at the same maturity are merged; zero weights are dropped.
    pub fn new(atoms: Vec<(usize, f64)>) -> Result<Self> {
        if atoms.iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::InvalidParameter("measure weights must be finite".into()));
        }
        let mut merged: Vec<(usize, f64)> = Vec::new();
        let mut sorted = atoms;
        sorted.sort_by_key(|a| a.0);
        for (m, w) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == m => last.1 += w,
                _ => merged.push((m, w)),
            }
        }
        merged.retain(|a| a.1 != 0.0);
        Ok(Self { atoms: merged })
    }

    pub fn dirac(m: usize, w: f64) -> Result<Self> {
        Self::new(vec![(m, w)])
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| fabs(a.1)).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|(m, w)| (*m, w * c)).collect(),
        }
    }

    fn weight(&self, m: usize) -> f64 {
        self.atoms.iter().find(|a| a.0 == m).map_or(0.0, |a| a.1)
    }

    fn max_maturity(&self) -> Option<usize> {
        self.atoms.iter().map(|a| a.0).max()
    }

    fn min_maturity(&self) -> Option<usize> {
        self.atoms.iter().map(|a| a.0).min()
    }
}

/// Participation rule of a holding, fixed when the holding starts.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Gate {
    Always,
    /// Open iff `Z_{t_observe}(T_maturity)` is above (or below) `level`.
    Threshold {
        observe: usize,
        maturity: usize,
        level: f64,
        above: bool,
    },
}

impl Gate {
    fn is_open(&self, z: &PathView<'_>) -> bool {
        match *self {
            Gate::Always => true,
            Gate::Threshold {
                observe,
                maturity,
                level,
                above,
            } => {
                let v = z.get(observe, maturity);
                if above {
                    v > level
                } else {
                    v < level
                }
            }
        }
    }
}

/// Measure `measure` held on grid steps `from..to` while `gate` is open.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Holding {
    pub from: usize,
    pub to: usize,
    pub measure: DiscreteMeasure,
    pub gate: Gate,
}

/// Elementary strategy over the grid steps `0..horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    horizon: usize,
    holdings: Vec<Holding>,
}

impl Strategy {
    /// Holdings must be disjoint and inside the horizon; a gate may only
    /// observe prices known when its holding starts, and every atom must
    /// mature no earlier than the end of its holding.
    pub fn new(horizon: usize, mut holdings: Vec<Holding>) -> Result<Self> {
        holdings.sort_by_key(|h| h.from);
        for h in &holdings {
            if h.from >= h.to || h.to > horizon {
                return Err(Error::InvalidParameter(alloc::format!(
                    "holding [{}, {}) not a nonempty range inside the horizon {horizon}",
                    h.from,
                    h.to
                )));
            }
            if let Gate::Threshold { observe, maturity, .. } = h.gate {
                if observe > h.from {
                    return Err(Error::FutureInformation { observe, start: h.from });
                }
                if maturity < observe {
                    return Err(Error::InvalidParameter("gate observes a matured bond".into()));
                }
            }
            if let Some(m) = h.measure.min_maturity() {
                if m < h.to {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "atom at maturity index {m} expires before the holding ends at {}",
                        h.to
                    )));
                }
            }
        }
        if holdings.windows(2).any(|w| w[1].from < w[0].to) {
            return Err(Error::InvalidParameter("holdings overlap".into()));
        }
        Ok(Self { horizon, holdings })
    }

    pub fn empty(horizon: usize) -> Self {
        Self {
            horizon,
            holdings: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn holdings(&self) -> &[Holding] {
        &self.holdings
    }

    pub fn max_maturity(&self) -> Option<usize> {
        self.holdings.iter().filter_map(|h| h.measure.max_maturity()).max()
    }

    /// Every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let holdings = self
            .holdings
            .iter()
            .map(|h| Holding {
                measure: h.measure.scaled(c),
                ..h.clone()
            })
            .collect();
        Self {
            horizon: self.horizon,
            holdings,
        }
    }

    /// `mu^(s)` for `s = 0..horizon` with gates resolved by `open`.
    fn steps(&self, open: impl Fn(&Holding) -> bool) -> Vec<DiscreteMeasure> {
        let mut out = vec![DiscreteMeasure::default(); self.horizon];
        for h in &self.holdings {
            if open(h) {
                for s in out.iter_mut().take(h.to).skip(h.from) {
                    *s = h.measure.clone();
                }
            }
        }
        out
    }

    /// Total variation `sum_s ||mu^(s) - mu^(s-1)||_TV`, all gates open.
    pub fn total_variation(&self) -> f64 {
        total_variation_of(&self.steps(|_| true))
    }

    fn check_surface(&self, z: &BondSurface) -> Result<()> {
        if self.horizon > z.t_grid().n_steps() {
            return Err(Error::InvalidGrid("strategy horizon beyond the surface".into()));
        }
        if let Some(m) = self.max_maturity() {
            if m > z.mat_steps() {
                return Err(Error::InvalidGrid("strategy maturity beyond the surface".into()));
            }
        }
        for h in &self.holdings {
            if let Gate::Threshold { maturity, .. } = h.gate {
                if maturity > z.mat_steps() {
                    return Err(Error::InvalidGrid("gate maturity beyond the surface".into()));
                }
            }
        }
        Ok(())
    }
}

fn total_variation_of(steps: &[DiscreteMeasure]) -> f64 {
    let zero = DiscreteMeasure::default();
    let mut prev = &zero;
    let mut acc = 0.0;
    for cur in steps {
        acc += jump_tv(prev, cur, |_| 1.0);
        prev = cur;
    }
    acc
}

/// `sum_m g(m) |w_m(b) - w_m(a)|`.
fn jump_tv(a: &DiscreteMeasure, b: &DiscreteMeasure, g: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for (m, w) in b.atoms() {
        acc += g(*m) * fabs(w - a.weight(*m));
    }
    for (m, w) in a.atoms() {
        if b.weight(*m) == 0.0 {
            acc += g(*m) * fabs(*w);
        }
    }
    acc
}

/// `<mu, G>` = `sum_m w_m G(m)`.
fn pair(mu: &DiscreteMeasure, g: impl Fn(usize) -> f64) -> f64 {
    mu.atoms().iter().map(|(m, w)| w * g(*m)).sum()
}

/// Read-only view of one path of a bond surface.
struct PathView<'a> {
    surface: &'a BondSurface,
    p: usize,
}

impl PathView<'_> {
    fn get(&self, i: usize, m: usize) -> f64 {
        self.surface.value(self.p, i, m)
    }
}

/// Ledger of one path on grid times `t_0..t_horizon`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LedgerResult {
    pub k: f64,
    pub times: Vec<f64>,
    /// `∫_0^t mu dZ`.
    pub gains: Vec<f64>,
    /// `k ∫_0^t Z d|mu|`.
    pub cost: Vec<f64>,
    /// `k Z_t |mu_t|`.
    pub liquidation: Vec<f64>,
    /// `gains - cost - liquidation`.
    pub value: Vec<f64>,
}

impl LedgerResult {
    pub fn min_value(&self) -> f64 {
        self.value.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `V_t^k >= -bound` at every grid time.
    pub fn admissible(&self, bound: f64) -> bool {
        self.min_value() >= -bound
    }
}

/// Liquidation value of `strategy` along path `p` of the discounted surface.
pub fn liquidation_value(strategy: &Strategy, z: &BondSurface, p: usize, k: f64) -> Result<LedgerResult> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!(
            "cost rate must be nonnegative, got {k}"
        )));
    }
    strategy.check_surface(z)?;
    let view = PathView { surface: z, p };
    let steps = strategy.steps(|h| h.gate.is_open(&view));
    let grid = z.t_grid();
    let horizon = strategy.horizon();
    let zero = DiscreteMeasure::default();
    let mut res = LedgerResult {
        k,
        times: Vec::with_capacity(horizon + 1),
        gains: Vec::with_capacity(horizon + 1),
        cost: Vec::with_capacity(horizon + 1),
        liquidation: Vec::with_capacity(horizon + 1),
        value: Vec::with_capacity(horizon + 1),
    };
    let (mut gains, mut cost) = (0.0, 0.0);
    for i in 0..=horizon {
        let held = if i == 0 { &zero } else { &steps[i - 1] };
        let liq = k * held
            .atoms()
            .iter()
            .map(|(m, w)| view.get(i, *m) * fabs(*w))
            .sum::<f64>();
        res.times.push(grid.point(i));
        res.gains.push(gains);
        res.cost.push(cost);
        res.liquidation.push(liq);
        res.value.push(gains - cost - liq);
        if i == horizon {
            break;
        }
        let next = &steps[i];
        cost += k * jump_tv(held, next, |m| view.get(i, m));
        gains += pair(next, |m| view.get(i + 1, m) - view.get(i, m));
    }
    Ok(res)
}

/// Terms of the integration-by-parts identity on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationByParts {
    /// `∫ G dmu`: sum over jumps of `<Delta mu, G_{t_s}>`.
    pub g_dmu: f64,
    /// `∫ mu dG`: `sum_s <mu^(s), G_{t_{s+1}} - G_{t_s}>`.
    pub mu_dg: f64,
    /// `<mu_{T*}, G_{T*}> - <mu_0, G_0>`.
    pub boundary: f64,
    pub residual: f64,
}

/// Checks `∫ G dmu + ∫ mu dG = G_{T*} mu_{T*} - G_0 mu_0` along path `p` of `g`;
/// gates are resolved on `g` itself.
pub fn integration_by_parts_check(strategy: &Strategy, g: &BondSurface, p: usize) -> Result<IntegrationByParts> {
    strategy.check_surface(g)?;
    let view = PathView { surface: g, p };
    let steps = strategy.steps(|h| h.gate.is_open(&view));
    let horizon = strategy.horizon();
    let zero = DiscreteMeasure::default();
    let (mut g_dmu, mut mu_dg) = (0.0, 0.0);
    for s in 0..horizon {
        let prev = if s == 0 { &zero } else { &steps[s - 1] };
        let cur = &steps[s];
        g_dmu += pair(cur, |m| view.get(s, m)) - pair(prev, |m| view.get(s, m));
        mu_dg += pair(cur, |m| view.get(s + 1, m) - view.get(s, m));
    }
    let boundary = match steps.last() {
        Some(last) => pair(last, |m| view.get(horizon, m)),
        None => 0.0,
    };
    Ok(IntegrationByParts {
        g_dmu,
        mu_dg,
        boundary,
        residual: fabs(g_dmu + mu_dg - boundary),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hold(from: usize, to: usize, m: usize, w: f64) -> Holding {
        Holding {
            from,
            to,
            measure: DiscreteMeasure::dirac(m, w).unwrap(),
            gate: Gate::Always,
        }
    }

    #[test]
    fn total_variation_examples() {
        let one = Strategy::new(4, vec![hold(0, 4, 4, 1.0)]).unwrap();
        assert_eq!(one.total_variation(), 1.0);
        let two = Strategy::new(4, vec![hold(0, 2, 4, 1.0), hold(2, 4, 4, 2.0)]).unwrap();
        assert_eq!(two.total_variation(), 2.0);
        assert_eq!(Strategy::empty(4).total_variation(), 0.0);
        // Closing before the horizon is a jump inside [0, T*].
        let early = Strategy::new(4, vec![hold(0, 2, 4, 1.0)]).unwrap();
        assert_eq!(early.total_variation(), 2.0);
    }

    #[test]
    fn construction_rejects_look_ahead_and_expired_atoms() {
        let gate = Gate::Threshold {
            observe: 3,
            maturity: 4,
            level: 0.9,
            above: true,
        };
        let h = Holding {
            from: 1,
            to: 2,
            measure: DiscreteMeasure::dirac(4, 1.0).unwrap(),
            gate,
        };
        assert_eq!(
            Strategy::new(4, vec![h]),
            Err(Error::FutureInformation { observe: 3, start: 1 })
        );
        assert!(Strategy::new(4, vec![hold(0, 3, 2, 1.0)]).is_err());
        assert!(Strategy::new(4, vec![hold(0, 3, 4, 1.0), hold(2, 4, 4, 1.0)]).is_err());
        assert!(Strategy::new(4, vec![hold(2, 2, 4, 1.0)]).is_err());
    }

    #[test]
    fn measures_merge_atoms() {
        let m = DiscreteMeasure::new(vec![(3, 1.0), (1, 2.0), (3, -1.0)]).unwrap();
        assert_eq!(m.atoms(), &[(1, 2.0)]);
        assert_eq!(m.total_variation(), 2.0);
    }
}

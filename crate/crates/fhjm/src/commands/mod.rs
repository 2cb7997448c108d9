//! The five subcommands. Each writes its files into an [`OutputDir`] and
//! returns; the manifest is written by the caller.

pub mod check;
pub mod consistency;
pub mod drift;
pub mod portfolio;
pub mod simulate;

use fhjm_core::hjm::{bond_surface, discounted_surface, money_account, ForwardSimulator};
use fhjm_core::{BondSurface, DriftField, ForwardSurface, MaturityGrid};

use crate::config::Resolved;
use crate::error::{numerics, CliError};
use crate::paths::PathSource;

/// Resolved config plus the drift field on maturities up to `T* + x_max`,
/// which is what the simulator and the closed-form tables need.
pub struct Model {
    pub r: Resolved,
    pub wide: MaturityGrid,
    pub drift: DriftField,
}

impl Model {
    pub fn new(r: Resolved) -> Result<Self, CliError> {
        let n = r.t_grid.n_steps();
        let m = r.x_grid.m_steps();
        let wide = MaturityGrid::new(r.t_grid.t_star() + r.x_grid.x_max(), n + m).map_err(numerics)?;
        let drift = DriftField::compute(&r.spec, r.h, r.t_grid, wide);
        Ok(Self { r, wide, drift })
    }

    pub fn simulator(&self) -> Result<ForwardSimulator, CliError> {
        ForwardSimulator::new(&self.r.spec, &self.drift, &self.r.init, self.r.t_grid, self.r.x_grid).map_err(numerics)
    }

    pub fn source(&self) -> Result<PathSource, CliError> {
        PathSource::new(self.r.t_grid, self.r.h, self.r.spec.dims(), &self.r.mc()?)
    }
}

/// Forward curves, bond prices and discounted prices of one path.
pub struct PathSurfaces {
    pub forward: ForwardSurface,
    pub bonds: BondSurface,
    pub discounted: BondSurface,
}

pub fn simulate_one(
    model: &Model,
    sim: &ForwardSimulator,
    src: &PathSource,
    block: Vec<f64>,
) -> Result<PathSurfaces, CliError> {
    let set = src.single(block)?;
    let values = sim.simulate_path(&set, 0);
    let forward = ForwardSurface::from_paths(model.r.t_grid, model.r.x_grid, vec![values]).map_err(numerics)?;
    let bonds = bond_surface(&forward, model.r.bond_steps()).map_err(numerics)?;
    let discounted = discounted_surface(&bonds, &money_account(&forward)).map_err(numerics)?;
    Ok(PathSurfaces {
        forward,
        bonds,
        discounted,
    })
}

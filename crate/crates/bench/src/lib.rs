//! Shared fixtures for the benchmarks.

use gradrobust::assembly::StokesBlocks;
use gradrobust::mms;
use gradrobust::spaces::{dirichlet_constraints, ConstraintSet};
use gradrobust::{Discretization, Result};

/// Mesh levels timed by default.
pub const LEVELS: [usize; 3] = [8, 16, 32];

/// An assembled unit-square problem with the manufactured boundary data.
pub struct Fixture {
    pub disc: Discretization,
    pub blocks: StokesBlocks,
    pub constraints: ConstraintSet,
}

impl Fixture {
    pub fn new(n: usize) -> Result<Self> {
        let disc = Discretization::unit_square(n)?;
        let blocks = disc.assemble_stokes();
        let constraints = dirichlet_constraints(&disc.dofs, mms::exact_velocity);
        Ok(Fixture { disc, blocks, constraints })
    }

    /// The Stokes solution, a representative Newton linearization point.
    pub fn stokes_velocity(&self) -> Vec<f64> {
        let cfg = gradrobust::FormConfig::new(gradrobust::Form::Convective, false, 1.0).unwrap();
        let op = gradrobust::nonlinear::StateOperator::new(&self.disc, &self.blocks, cfg);
        let load = vec![0.0; self.disc.dofs.n_vel];
        op.solve_stokes(&load, &self.constraints, 1e-12).unwrap().velocity
    }
}

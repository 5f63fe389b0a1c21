//! Discrete-time laboratory for backward stochastic differential equations
//! with zero, one, or two reflecting barriers and merely integrable data.
//!
//! The crate builds recombining Brownian lattices and sampled path bundles,
//! solves plain/reflected equations by implicit backward Euler with exact
//! per-node martingale representation, runs penalization ladders and
//! convolution-regularization schemes toward their limits, and ships the
//! diagnostics that make those limits checkable: driver assumption-class
//! validators, Snell/Dynkin dynamic-programming oracles, flat-off and
//! mutual-singularity reports, empirical norm estimators, and comparison/
//! uniqueness/approximation batteries.

pub mod analysis;
pub mod bsde;
pub mod convolution_scheme;
pub mod error;
pub mod forcing;
pub mod generator;
pub mod grid;
pub mod ladder;
pub mod lattice;
pub mod mc;
pub mod oracle;
pub mod pathfn;
pub mod paths;
pub mod process;
pub mod reflected;

pub use bsde::{solve_bsde, ContractionPolicy, NumericsConfig, SolutionPair};
pub use convolution_scheme::{solve_extremal_via_convolution, ConvolutionLadder, Extremal};
pub use error::{Error, Result};
pub use forcing::{ForcingTerm, TerminalCondition};
pub use generator::{AssumptionClass, GeneratorParams, GeneratorSpec, SplitGenerator};
pub use grid::TimeGrid;
pub use ladder::{
    penalization_ladder_double, penalization_ladder_lower, penalization_ladder_upper,
    triple_penalization_study, LadderVariant, PenalizationLadder, TriplePenalization,
};
pub use lattice::BrownianLattice;
pub use mc::{solve_bsde_mc, McSolution, RegressionConfig};
pub use oracle::{dynkin_oracle, snell_oracle};
pub use paths::{sample_paths, PathBundle};
pub use process::{BarrierPair, EvalPoint, NodeProcess, Obstacle, ProcessSpec, VectorNodeProcess};
pub use reflected::{
    flat_off_report, solve_drbsde, solve_rbsde_lower, solve_rbsde_upper, FlatOffReport,
    SolutionQuadruple,
};

//! Numerical laboratory for Wong–Zakai approximations of the defocusing
//! quintic stochastic NLS on the line with conservative multiplicative noise
//!
//! ```text
//! i∂ₜu + Δu = |u|⁴u + u∘Ẇ,   W(t,x) = Σ_k B_k(t) V_k(x).
//! ```
//!
//! Modules, bottom-up: [`grid`] (periodic discretization and e^{itΔ}),
//! [`noise`] (Brownian ensembles, partitions, piecewise-linear drivers),
//! [`dynamics`] (split-step solver), [`spacetime`] (X norms),
//! [`diagnostics`] (numerical checks of the estimate machinery) and
//! [`experiments`] (Monte Carlo orchestration).

pub mod diagnostics;
pub mod dynamics;
pub mod experiments;
pub mod grid;
pub mod noise;
pub mod spacetime;

pub use diagnostics::{run_estimate_suite, DiagnosticsConfig, DiagnosticsError, EstimateReport};
pub use dynamics::{
    coupled_pair, evolve, DriverKind, InitialData, Records, SolverSpec, Trajectory, TruncationSpec,
};
pub use experiments::{ExperimentConfig, ExperimentError, MomentEstimate};
pub use grid::{ComplexField, RealField, SpatialGrid};
pub use noise::{build_standard_noise, BrownianEnsemble, ModeDescriptor, NoiseModel, Partition, WzDriver};
pub use spacetime::{TimeInterval, XNorms};

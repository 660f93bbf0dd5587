//! Density-of-states estimation for scalar functions over discrete input
//! spaces: classic Wang-Landau sampling and a gradient-informed variant
//! whose proposals follow the slope of the running entropy estimate.

pub mod dataset;
pub mod dos_histogram;
pub mod energy_models;
pub mod entropy_interp;
pub mod numfmt;
pub mod oracle;
pub mod plot;
pub mod proposals;
pub mod tiny_autodiff;
pub mod wl_engine;

pub use dos_histogram::{BinIndex, BinSpec, DosHistogram, ModificationSchedule};
pub use energy_models::{Config, ConfigSpace, EnergyModel, GradMatrix, IsingModel, NnModel};
pub use entropy_interp::InterpView;
pub use oracle::ExactDos;
pub use tiny_autodiff::Network;
pub use wl_engine::{ProposalKind, WalkerState};

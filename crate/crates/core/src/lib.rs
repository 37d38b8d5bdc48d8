//! Potts model with invisible colours: q interacting visible colours and r
//! non-interacting invisible ones, its biased random-cluster
//! representation, the contour machinery built on that representation, and
//! cluster Monte Carlo for desk-scale experiments.
//!
//! Everything exact is enumeration-based and carried in log space; every
//! capped enumeration says whether it was complete.

pub mod analysis;
pub mod biased_rc;
pub mod contour_model;
pub mod contours;
pub mod coupling;
pub mod lattice;
pub mod logsum;
pub mod mc;
pub mod potts;
pub mod unionfind;
pub mod window_sweep;

pub use biased_rc::{BondConfig, BoundaryClass, ComponentCounts, WindowPair};
pub use contours::{Config, Contour, ContourFamily, ContourKind, Energies};
pub use lattice::{Bond, BoundaryCounts, Site, Volume, VolumeSpec};
pub use logsum::{LogSum, LogValue};
pub use potts::{ModelParams, SpinConfig};

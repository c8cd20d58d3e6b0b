//! Bakry-Emery curvature, the normalized curvature flow and equilibrium
//! stability for finite weighted graphs.
//!
//! A weighted graph is a [`CombinatorialGraph`] together with a
//! [`WeightScheme`] of transition rates. Curvature is computed locally from
//! the 2-ball of each vertex through a Schur complement of the `Gamma_2`
//! matrix; the flow evolves the rates and converges to curvature sharp
//! schemes, whose stability is read off the linearized flow.

pub mod bakry_emery;
pub mod batch;
pub mod error;
pub mod export;
pub mod fixtures;
pub mod flow;
pub mod graph;
pub mod linalg;
pub mod par;
pub mod rng;
pub mod stability;
pub mod weights;

pub use bakry_emery::{curvature, curvature_upper_bound, curvatures, is_curvature_sharp, Dimension};
pub use error::{Error, Result};
pub use flow::{norm_curv_flow, norm_curv_flow_lim, FlowTrajectory, LimitResult};
pub use graph::CombinatorialGraph;
pub use par::Execution;
pub use stability::{equilibrium_type, EquilibriumReport};

pub use weights::{ToleranceConfig, WeightScheme};

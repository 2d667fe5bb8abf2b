//! Flow estimation and the physics-determined transition.

pub mod expm;
pub mod flow;
pub mod galerkin;

pub use expm::matrix_exponential;
pub use flow::{
    derive_diffusivity, estimate_flow_with_diffusivity, estimate_optical_flow, FlowFields,
    OpticalFlowParams,
};
pub use galerkin::{apply_operator, galerkin_generator, galerkin_transition, TransitionMatrix};

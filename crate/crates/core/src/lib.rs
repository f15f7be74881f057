//! Electrical networks: energy space, dipoles, Laplacian realizations,
//! spectral comparison and conductance variation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod energy;
pub mod error;
pub mod graph;
pub mod harmonics;
pub mod io;
pub mod laplacian;
pub mod linalg;
pub mod spectral;
pub mod variation;

pub use energy::{
    build_frame, energy_inner, frame_analyze, frame_synthesize, gramian, resistance_distance, solve_dipole,
    EnergySpace, EnergyVector, FrameSystem, OrientedEdgeSet,
};
pub use error::{Error, Result};
pub use graph::{generate_chain, random_network, ChainProfile, Edge, Network, VertexId, Violation};
pub use io::{load_network, load_pair, parse_network, save_network, NetworkFormat};
pub use laplacian::{apply_laplacian, build_l2_laplacian, L2Vector};
pub use spectral::{compare_spectra, eig_energy, eig_l2, EigenSystem, InnerKind};
pub use variation::{make_pair, ConductancePair};

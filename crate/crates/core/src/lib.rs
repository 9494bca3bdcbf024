//! Simulation core for a programmable two-qubit photonic processor built on
//! the linear-combination-of-unitaries (LCU) architecture.
//!
//! Modules, bottom-up:
//! - [`qmath`]: dense complex matrices, states and fidelity metrics
//! - [`kak`]: Cartan KAK decomposition and four-term LCU coefficients
//! - [`lcu`]: abstract probabilistic and deterministic LCU circuits, gate library
//! - [`calib`]: component transfer matrices and calibration fits
//! - [`photonic`]: chip-level simulation with post-selection accounting
//! - [`tomography`]: state and process tomography with MLE
//! - [`qaoa`]: p-level QAOA for two-bit constraint problems
//! - [`szegedy`]: Szegedy walks and periodicity analysis
//!
//! Sweeps run on rayon when the `parallel` feature is enabled; see [`par`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod kak;
pub mod lcu;
pub mod par;
pub mod photonic;
pub mod qaoa;
pub mod qmath;
pub mod szegedy;
pub mod tomography;

pub use qmath::{ComplexMatrix, DensityMatrix, StateVector, C64};

/// Stable 64-bit mix used to derive per-task seeds (SplitMix64 finalizer).
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

//! Single-neutron spin ⊗ energy entanglement in a MIEZE beamline.
//!
//! The crate is organised along the measurement chain:
//!
//! * [`quantum`]: two-qubit algebra on the (spin, energy) basis, observables,
//!   projectors and the CHSH combination.
//! * [`beamline`]: maps currents, frequencies and distances onto the spin
//!   phase α, the energy phase γ and the idealized detector signal.
//! * [`wavepacket`]: k-space wave-packet propagation through the spin-phase
//!   coil and both rf flippers, with quadrature-evaluated intensities.
//! * [`synth`]: Poisson count generation for 2-D (current × detector offset)
//!   scans.
//! * [`analysis`]: cosine fits, expectation values, the witness and its
//!   uncertainty.

pub mod analysis;
pub mod beamline;
pub mod constants;
pub mod error;
pub mod quantum;
pub mod synth;
pub mod wavepacket;

pub use error::{Error, Result};

//! Fixed-structure feedback passivation of SISO LTI plants.
//!
//! A plant `G₀ = N₀/D₀` is closed with a parametric controller
//! `C(ρ) = Σ ρᵢ Nᵢ/Dᵢ`. Stability of the loop over a parameter box is
//! certified with sum-of-squares programs built on modified Routh/Jury
//! tables, and the passivity indices of the loop are then maximized with
//! further SOS programs solved by a built-in interior-point SDP solver.

pub mod passivation;
pub mod poly;
pub mod sdp;
pub mod sos;
pub mod stability;
pub mod system;
pub mod verify;

//! Numerical toolkit for the volume-constrained Allen–Cahn problem
//! `-eps^2 Δu + W'(u) = λ`, `∫u = V`, with an asymmetric double-well `W`.

pub mod banded;
pub mod domain;
pub mod fieldsolver;
pub mod kv;
pub mod multiplicity;
pub mod potential;
pub mod radial;
pub mod rearrange;
pub mod spectral;
pub mod spline;

pub use potential::{certify, quartic, tilt, Potential, PotentialCertificate};

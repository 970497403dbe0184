//! Numerical laboratory for one-spike solutions of a three-component
//! Gierer–Meinhardt system in the semi-strong regime.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: parameters, grids, fields and the PDE right-hand sides
//! * [`profile`]: inner spike asymptotics and moment integrals
//! * [`outer`]: the outer boundary value problem, nucleation threshold and
//!   the coupled amplitude solve
//! * [`nlep`]: nonlocal eigenvalue problems and amplitude-Hopf thresholds
//! * [`smalleig`]: drift eigenvalues and the drift-Hopf threshold
//! * [`sim`]: IMEX time stepping, spike tracking and event detection
//! * [`continuation`]: steady Newton solves and pseudo-arclength branches

pub mod continuation;
pub mod error;
pub mod linalg;
pub mod model;
pub(crate) mod newton;
pub mod nlep;
pub mod outer;
pub mod profile;
pub mod quad;
pub mod sim;
pub mod smalleig;

pub use continuation::{BranchPoint, ContinuationConfig};
pub use error::{Error, Result};
pub use model::{DomainMode, FieldTriple, Grid1D, ModelParams};
pub use nlep::{LineOperator, SpectrumResult, Verdict};
pub use outer::{NucleationResult, OuterSolve};
pub use profile::{MomentTable, SpikeProfile};
pub use sim::{SimConfig, SpikeTrack};
pub use smalleig::{DriftSpectrum, EtaProfile};

pub use num_complex::Complex64;

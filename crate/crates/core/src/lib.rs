//! Simulation and control toolkit for continuous-dynamical-decoupling
//! protected qubits (CDPQs) on multi-level transmons.
//!
//! The crate is layered bottom-up:
//!
//! * [`linalg`]: dense complex operators, eigendecomposition, propagation
//! * [`device`]: transmon/drive parameters and every Hamiltonian in use
//! * [`pulse`]: gate envelopes, initialization ramps, envelope spectra
//! * [`sim`]: segment-level simulator shared by the higher layers
//! * [`compiler`]: gate compilation into gapless wait/pulse schedules
//! * [`calibration`]: automated tune-up and (A_g, t_g) leakage sweeps
//! * [`noise`]: Monte Carlo Ramsey / Hahn experiments
//! * [`benchmarking`]: single-qubit Clifford randomized benchmarking
//! * [`experiment`]: configuration, records and the figure-level runners

// `!(x > 0.0)` style guards are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarking;
pub mod calibration;
pub mod compiler;
pub mod device;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod noise;
pub mod optimize;
pub mod parallel;
pub mod pulse;
pub mod sim;

pub use calibration::{CalibrationResult, SweepMap};
pub use compiler::{GateSpec, PulseSchedule, Segment, SegmentKind};
pub use device::{DressedLabel, DriveConfig, TransmonParams, TWO_PI};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentRecord};
pub use linalg::{Operator, StateVector, C64};
pub use noise::{DecayCurve, NoiseModel};
pub use pulse::PulseEnvelope;
pub use sim::{Model, Simulator};

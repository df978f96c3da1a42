//! Modeling toolkit for a floating-transmon tunable coupler between two
//! fixed-frequency transmon qubits.
//!
//! The crate is organized as a pipeline:
//!
//! * [`captools`] reduces lumped capacitance networks to an effective
//!   three-mode circuit and its inverse-capacitance parameters.
//! * [`netsim`] models waveguide extenders as transmission lines, extracts
//!   effective capacitances from the admittance matrix, and studies coupling
//!   vs. qubit-qubit distance and drive crosstalk.
//! * [`hammod`] builds the three-mode Hamiltonian, computes dressed spectra,
//!   ZZ strength, analytic coupler formulas, and fits couplings to measured
//!   ZZ curves.
//! * [`gatesim`] generates Slepian flux pulses, applies IIR predistortion,
//!   evolves the system in time, and calibrates a diabatic CZ gate.
//! * [`noisemod`] propagates mode coherence through hybridization and
//!   computes effective coherence times and the gate-error limit.
//! * [`rbkit`] synthesizes two-qubit randomized-benchmarking sequences,
//!   simulates decay curves, and fits (interleaved) RB experiments.

pub mod captools;
pub mod gatesim;
pub mod hammod;
pub mod noisemod;
pub mod netsim;
pub mod rbkit;

pub use captools::{
    BarredCircuit, CapError, CapacitanceNetwork, EffectiveCapMatrix, InverseCapParams,
    ReducedCircuit,
};
pub use gatesim::{
    Calibration, FluxMap, FluxPulse, GateConfig, GateError, GateResult, PredistortionFilter,
    ThetaMap,
};
pub use hammod::{DressedSpectrum, HamError, SystemParams, TransmonParams};
pub use noisemod::{
    CoherenceBudget, CoherenceCurves, FluxNoiseModel, LimitConvention, ModeCoherence,
    NoiseError,
};
pub use netsim::{CrosstalkGeometryCaps, DeviceTemplate, MicrowaveNetwork, NetError, TwoPort};
pub use rbkit::{
    CliffordGroup, DecayFit, DecayRecord, ErrorModel, InterleavedResult, RbError, RbSequence,
};

/// Physical constants shared across modules.
pub mod phys {
    /// Speed of light in vacuum, m/s.
    pub const C_LIGHT: f64 = 299_792_458.0;
    /// Elementary charge, C.
    pub const E_CHARGE: f64 = 1.602_176_634e-19;
    /// Planck constant, J s.
    pub const H_PLANCK: f64 = 6.626_070_15e-34;

    /// Charging energy E_C/h in GHz for a capacitance in fF: e^2 / (2 h C).
    pub fn charging_energy_ghz(c_ff: f64) -> f64 {
        E_CHARGE * E_CHARGE / (2.0 * H_PLANCK * c_ff * 1e-15) / 1e9
    }
}

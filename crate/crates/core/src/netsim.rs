//! Quasi-lumped microwave models of the coupler layout.
//!
//! A network is a set of named nodes joined by lumped capacitors and ideal
//! lossless transmission-line segments. At a given frequency the whole thing
//! is assembled into a nodal admittance matrix, internal nodes are eliminated
//! by a Schur complement, and the remaining port admittance is reinterpreted
//! as an effective Maxwell capacitance matrix. That matrix feeds the circuit
//! reduction in [`crate::captools`] and the coupling-rate formulas in
//! [`crate::hammod`].
//!
//! Also here: the stretchable device template used for qubit-spacing sweeps,
//! and two small layout estimators (feedline-crossing crosstalk ratios and
//! next-nearest-neighbour coupling).

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::captools::{eliminate_com, CapError, ReducedCircuit};
use crate::hammod::{coupling_strengths, HamError};
use crate::phys::C_LIGHT;

const GND: &str = "GND";

/// Relative singular-value cutoff below which internal-node elimination is
/// declared singular.
const SINGULAR_RTOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid line parameters: z0 = {z0} ohm, eps_eff = {eps_eff}")]
    BadLineParams { z0: f64, eps_eff: f64 },
    #[error("frequency must be positive, got {0} Hz")]
    BadFrequency(f64),
    #[error("internal-node elimination is singular at {f_hz} Hz (network resonance)")]
    SingularAtFrequency { f_hz: f64 },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("port {0} listed twice")]
    DuplicatePort(String),
    #[error("netlist error: {0}")]
    Netlist(String),
    #[error("qubit spacing {d_um} um is inside the coupler footprint (minimum {min_um} um)")]
    DistanceBelowCouplerWidth { d_um: f64, min_um: f64 },
    #[error("crosstalk reference capacitance is zero")]
    ZeroReference,
    #[error(transparent)]
    Cap(#[from] CapError),
    #[error(transparent)]
    Coupling(#[from] HamError),
}

/// Chain (ABCD) matrix of a two-port at one frequency.
#[derive(Debug, Clone, Copy)]
pub struct TwoPort {
    pub abcd: Matrix2<Complex64>,
}

impl TwoPort {
    /// Pi-equivalent admittance parameters (y11, y12, y21, y22).
    ///
    /// `None` when B = 0: the two-port then enforces a voltage constraint
    /// (ideal transformer / series resonance) that a nodal stamp cannot
    /// represent.
    fn y_params(&self) -> Option<[Complex64; 4]> {
        let a = self.abcd[(0, 0)];
        let b = self.abcd[(0, 1)];
        let c = self.abcd[(1, 0)];
        let d = self.abcd[(1, 1)];
        if b.norm() < 1e-30 {
            return None;
        }
        let det = a * d - b * c;
        Some([d / b, -det / b, -1.0 / b, a / b])
    }
}

/// ABCD matrix of an ideal lossless line of characteristic impedance
/// `z0_ohm`, effective permittivity `eps_eff` and physical length
/// `length_m`, evaluated at `f_hz`.
pub fn tl_twoport(z0_ohm: f64, eps_eff: f64, length_m: f64, f_hz: f64) -> Result<TwoPort, NetError> {
    if !(z0_ohm > 0.0) || !(eps_eff >= 1.0) {
        return Err(NetError::BadLineParams {
            z0: z0_ohm,
            eps_eff,
        });
    }
    if !(f_hz > 0.0) {
        return Err(NetError::BadFrequency(f_hz));
    }
    if length_m < 0.0 {
        return Err(NetError::Netlist(format!(
            "negative line length {length_m} m"
        )));
    }
    let beta = 2.0 * std::f64::consts::PI * f_hz * eps_eff.sqrt() / C_LIGHT;
    let (s, c) = (beta * length_m).sin_cos();
    let j = Complex64::new(0.0, 1.0);
    let abcd = Matrix2::new(
        Complex64::new(c, 0.0),
        j * z0_ohm * s,
        j * s / z0_ohm,
        Complex64::new(c, 0.0),
    );
    Ok(TwoPort { abcd })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapEdge {
    a: String,
    b: String,
    #[serde(rename = "fF")]
    f_f: f64,
}

/// A transmission-line segment between two named nodes. Lengths are in
/// micrometres to match layout coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlineBranch {
    pub a: String,
    pub b: String,
    pub z0_ohm: f64,
    pub eps_eff: f64,
    pub length_um: f64,
}

impl TlineBranch {
    pub fn new(a: &str, b: &str, z0_ohm: f64, eps_eff: f64, length_um: f64) -> Self {
        TlineBranch {
            a: a.to_string(),
            b: b.to_string(),
            z0_ohm,
            eps_eff,
            length_um,
        }
    }
}

/// Capacitors plus transmission lines over a set of named nodes. `"GND"` is
/// the implicit reference and must not be declared as a node.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrowaveNetwork {
    nodes: Vec<String>,
    capacitors: Vec<CapEdge>,
    tlines: Vec<TlineBranch>,
}

impl MicrowaveNetwork {
    pub fn new(
        nodes: &[&str],
        capacitors: &[(&str, &str, f64)],
        tlines: &[TlineBranch],
    ) -> Result<Self, NetError> {
        let net = MicrowaveNetwork {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            capacitors: capacitors
                .iter()
                .map(|&(a, b, f_f)| CapEdge {
                    a: a.to_string(),
                    b: b.to_string(),
                    f_f,
                })
                .collect(),
            tlines: tlines.to_vec(),
        };
        net.validate()?;
        Ok(net)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    fn validate(&self) -> Result<(), NetError> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n == GND {
                return Err(NetError::Netlist("GND cannot be a listed node".into()));
            }
            if self.nodes[..i].contains(n) {
                return Err(NetError::Netlist(format!("duplicate node {n}")));
            }
        }
        let known = |name: &str| name == GND || self.nodes.iter().any(|n| n == name);
        for c in &self.capacitors {
            if !known(&c.a) {
                return Err(NetError::UnknownNode(c.a.clone()));
            }
            if !known(&c.b) {
                return Err(NetError::UnknownNode(c.b.clone()));
            }
            if c.a == c.b {
                return Err(NetError::Netlist(format!("capacitor loop at {}", c.a)));
            }
            if !(c.f_f >= 0.0) {
                return Err(NetError::Netlist(format!(
                    "capacitor {}-{} has invalid value {} fF",
                    c.a, c.b, c.f_f
                )));
            }
        }
        for t in &self.tlines {
            if !known(&t.a) {
                return Err(NetError::UnknownNode(t.a.clone()));
            }
            if !known(&t.b) {
                return Err(NetError::UnknownNode(t.b.clone()));
            }
            if t.a == t.b {
                return Err(NetError::Netlist(format!("line loop at {}", t.a)));
            }
            if !(t.z0_ohm > 0.0) || !(t.eps_eff >= 1.0) {
                return Err(NetError::BadLineParams {
                    z0: t.z0_ohm,
                    eps_eff: t.eps_eff,
                });
            }
            if !(t.length_um > 0.0) {
                return Err(NetError::Netlist(format!(
                    "line {}-{} has nonpositive length {} um",
                    t.a, t.b, t.length_um
                )));
            }
        }
        Ok(())
    }

    fn index_of(&self, name: &str) -> Result<usize, NetError> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| NetError::UnknownNode(name.to_string()))
    }

    /// Full nodal admittance matrix over all declared nodes.
    fn full_admittance(&self, f_hz: f64) -> Result<DMatrix<Complex64>, NetError> {
        if !(f_hz > 0.0) {
            return Err(NetError::BadFrequency(f_hz));
        }
        let n = self.nodes.len();
        let mut y = DMatrix::<Complex64>::zeros(n, n);
        let w = 2.0 * std::f64::consts::PI * f_hz;
        for c in &self.capacitors {
            let yc = Complex64::new(0.0, w * c.f_f * 1e-15);
            match (c.a.as_str(), c.b.as_str()) {
                (GND, other) | (other, GND) => {
                    let i = self.index_of(other)?;
                    y[(i, i)] += yc;
                }
                (a, b) => {
                    let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
                    y[(ia, ia)] += yc;
                    y[(ib, ib)] += yc;
                    y[(ia, ib)] -= yc;
                    y[(ib, ia)] -= yc;
                }
            }
        }
        for t in &self.tlines {
            let tp = tl_twoport(t.z0_ohm, t.eps_eff, t.length_um * 1e-6, f_hz)?;
            let yp = tp
                .y_params()
                .ok_or(NetError::SingularAtFrequency { f_hz })?;
            match (t.a.as_str(), t.b.as_str()) {
                (GND, other) => {
                    let i = self.index_of(other)?;
                    y[(i, i)] += yp[3];
                }
                (other, GND) => {
                    let i = self.index_of(other)?;
                    y[(i, i)] += yp[0];
                }
                (a, b) => {
                    let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
                    y[(ia, ia)] += yp[0];
                    y[(ia, ib)] += yp[1];
                    y[(ib, ia)] += yp[2];
                    y[(ib, ib)] += yp[3];
                }
            }
        }
        Ok(y)
    }

    /// Port admittance matrix at `f_hz` with every non-port node eliminated
    /// by a Schur complement. Row/column order follows `ports`.
    ///
    /// Internal nodes with no connection at all are dropped; a genuinely
    /// resonant internal block raises [`NetError::SingularAtFrequency`].
    pub fn assemble_admittance(
        &self,
        f_hz: f64,
        ports: &[&str],
    ) -> Result<DMatrix<Complex64>, NetError> {
        let mut keep = Vec::with_capacity(ports.len());
        for p in ports {
            let i = self.index_of(p)?;
            if keep.contains(&i) {
                return Err(NetError::DuplicatePort(p.to_string()));
            }
            keep.push(i);
        }
        let y = self.full_admittance(f_hz)?;
        let mut drop: Vec<usize> = (0..self.nodes.len()).filter(|i| !keep.contains(i)).collect();
        drop.retain(|&i| y.row(i).iter().any(|v| v.norm() > 1e-30));
        let a = submatrix(&y, &keep, &keep);
        if drop.is_empty() {
            return Ok(a);
        }
        let b = submatrix(&y, &keep, &drop);
        let c = submatrix(&y, &drop, &keep);
        let d = submatrix(&y, &drop, &drop);
        let sv = d.clone().svd(false, false).singular_values;
        let smax = sv.iter().copied().fold(0.0_f64, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        // judge against the whole network's admittance scale, otherwise a
        // uniformly tiny resonant block (e.g. a lone quarter-wave stub node)
        // looks well conditioned to a purely relative test
        let scale = y.iter().map(|v| v.norm()).fold(smax, f64::max);
        if scale <= 0.0 || smin < SINGULAR_RTOL * scale {
            return Err(NetError::SingularAtFrequency { f_hz });
        }
        let x = d
            .lu()
            .solve(&c)
            .ok_or(NetError::SingularAtFrequency { f_hz })?;
        Ok(a - b * x)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let net: MicrowaveNetwork =
            serde_json::from_str(text).map_err(|e| NetError::Netlist(e.to_string()))?;
        net.validate()?;
        Ok(net)
    }
}

fn submatrix(y: &DMatrix<Complex64>, rows: &[usize], cols: &[usize]) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| y[(rows[i], cols[j])])
}

/// Effective Maxwell capacitance matrix (fF) read off an imaginary-valued
/// port admittance: C = Im(Y) / omega.
pub fn extract_caps(y: &DMatrix<Complex64>, f_hz: f64) -> DMatrix<f64> {
    let w = 2.0 * std::f64::consts::PI * f_hz;
    y.map(|z| z.im / w / 1e-15)
}

/// Parametric layout of the two-qubit cell: qubit pads, finger capacitors,
/// stretchable feedline extenders, and the floating coupler islands D and E.
///
/// `network` holds the geometry at `nominal_d_um` qubit spacing. Changing the
/// spacing stretches both extender lines by half the spacing change each;
/// everything else is spacing-independent. Port order is
/// `[qubit 1, island D, island E, qubit 2]`.
#[derive(Debug, Clone)]
pub struct DeviceTemplate {
    pub network: MicrowaveNetwork,
    pub ports: [String; 4],
    pub nominal_d_um: f64,
    pub min_d_um: f64,
    /// Frequency at which port capacitances are extracted.
    pub extract_f_hz: f64,
    pub f1_ghz: f64,
    pub f2_ghz: f64,
    pub fc_ghz: f64,
}

impl Default for DeviceTemplate {
    fn default() -> Self {
        let tlines = [
            TlineBranch::new("e1a", "e1b", 152.3, 6.45, 900.0),
            TlineBranch::new("f2a", "f2b", 162.0, 6.45, 900.0),
        ];
        let network = MicrowaveNetwork::new(
            &["Q1", "e1a", "e1b", "D", "E", "f2b", "f2a", "Q2"],
            &[
                ("Q1", "GND", 82.0),
                ("Q2", "GND", 82.0),
                ("Q1", "e1a", 9.0),
                ("Q2", "f2a", 9.0),
                ("e1b", "D", 189.0),
                ("f2b", "E", 192.0),
                ("e1b", "E", 2.0),
                ("f2b", "D", 5.0),
                ("e1b", "f2b", 41.0),
                ("D", "E", 6.0),
                ("D", "GND", 62.0),
                ("E", "GND", 62.0),
            ],
            &tlines,
        )
        .expect("template netlist is valid");
        DeviceTemplate {
            network,
            ports: ["Q1", "D", "E", "Q2"].map(String::from),
            nominal_d_um: 1960.0,
            min_d_um: 920.0,
            extract_f_hz: 5e9,
            f1_ghz: 4.10,
            f2_ghz: 3.89,
            fc_ghz: 3.195,
        }
    }
}

impl DeviceTemplate {
    fn network_at(&self, d_um: f64) -> Result<MicrowaveNetwork, NetError> {
        if !(d_um >= self.min_d_um) {
            return Err(NetError::DistanceBelowCouplerWidth {
                d_um,
                min_um: self.min_d_um,
            });
        }
        let shift = (d_um - self.nominal_d_um) / 2.0;
        let mut net = self.network.clone();
        for tl in &mut net.tlines {
            tl.length_um += shift;
        }
        net.validate()?;
        Ok(net)
    }

    /// 4x4 Maxwell capacitance matrix (fF) seen at the ports for a given
    /// qubit spacing.
    pub fn port_caps_at(&self, d_um: f64, f_hz: f64) -> Result<DMatrix<f64>, NetError> {
        let net = self.network_at(d_um)?;
        let ports: Vec<&str> = self.ports.iter().map(String::as_str).collect();
        let y = net.assemble_admittance(f_hz, &ports)?;
        Ok(extract_caps(&y, f_hz))
    }

    /// Lumped circuit parameters at a given qubit spacing, extracted at
    /// `extract_f_hz`. Row sums give the ground capacitances; negated
    /// off-diagonals give the branch capacitors.
    pub fn reduced_circuit_at(&self, d_um: f64) -> Result<ReducedCircuit, NetError> {
        let c = self.port_caps_at(d_um, self.extract_f_hz)?;
        let ground = |i: usize| c.row(i).sum();
        Ok(ReducedCircuit {
            c1: ground(0),
            c2: ground(3),
            cc: -c[(1, 2)],
            c1c_par: -c[(0, 1)],
            c1c_perp: -c[(0, 2)],
            c2c_par: -c[(3, 2)],
            c2c_perp: -c[(3, 1)],
            c12: -c[(0, 3)],
            csd_tilde: ground(1),
            cse_tilde: ground(2),
        })
    }
}

/// One point of a qubit-spacing sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepPoint {
    pub d_qq_um: f64,
    pub g1c_mhz: f64,
    pub g2c_mhz: f64,
    pub g12_mhz: f64,
}

/// Coupling rates versus qubit spacing at the template's fixed mode
/// frequencies. Points evaluate independently and in parallel.
pub fn coupling_vs_distance(
    tmpl: &DeviceTemplate,
    d_um: &[f64],
) -> Result<Vec<SweepPoint>, NetError> {
    d_um.par_iter()
        .map(|&d| {
            let rc = tmpl.reduced_circuit_at(d)?;
            let eff = eliminate_com(&rc)?;
            let cs = coupling_strengths(&eff, tmpl.f1_ghz, tmpl.f2_ghz, tmpl.fc_ghz)?;
            Ok(SweepPoint {
                d_qq_um: d,
                g1c_mhz: cs.g1c_mhz,
                g2c_mhz: cs.g2c_mhz,
                g12_mhz: cs.g12_mhz,
            })
        })
        .collect()
}

/// Simulated parasitic capacitances where a feedline crosses the coupler
/// cell, all in fF. `c_q_dl` is the intended qubit-to-driveline capacitance
/// used as the reference, `x_cross_um` records the crossing position.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrosstalkGeometryCaps {
    pub c_q1_tl: f64,
    pub c_q2_tl: f64,
    pub c_cc_tl: f64,
    pub c_cf_tl: f64,
    pub c_q_dl: f64,
    pub x_cross_um: f64,
}

/// Classical drive-crosstalk ratios (qubit 1, qubit 2, coupler) relative to
/// the intended drive capacitance. The coupler entry is differential: a
/// symmetric crossing couples to both islands equally and drives nothing.
pub fn crosstalk_ratios(c: &CrosstalkGeometryCaps) -> Result<(f64, f64, f64), NetError> {
    if c.c_q_dl == 0.0 {
        return Err(NetError::ZeroReference);
    }
    Ok((
        c.c_q1_tl / c.c_q_dl,
        c.c_q2_tl / c.c_q_dl,
        (c.c_cc_tl - c.c_cf_tl).abs() / c.c_q_dl,
    ))
}

/// Direct coupling rate (kHz) between next-nearest-neighbour qubits with
/// residual mutual capacitance `c13_ff` and shunt capacitances `cs1_ff`,
/// `cs3_ff`, at qubit frequency `f_ghz`.
pub fn nnn_coupling(c13_ff: f64, cs1_ff: f64, cs3_ff: f64, f_ghz: f64) -> f64 {
    0.5 * c13_ff / (cs1_ff * cs3_ff).sqrt() * f_ghz * 1e6
}

//! Capacitance-network reduction for the floating-coupler circuit.
//!
//! The canonical internal form is the Maxwell capacitance matrix (diagonal =
//! total capacitance at a node including ground, off-diagonal = minus the
//! branch capacitance). Star-mesh chains, Kron reduction and the analytic
//! two-island eliminations below are all views of Schur complements of that
//! matrix.

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phys::charging_energy_ghz;

#[derive(Debug, Error)]
pub enum CapError {
    #[error("degenerate transformation: {0}")]
    DegenerateTransform(String),
    #[error("eliminated block is singular")]
    SingularReduction,
    #[error("effective capacitance matrix is singular or not positive definite")]
    SingularMatrix,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("negative capacitance {value} on branch {a}-{b}")]
    NegativeCapacitance { a: String, b: String, value: f64 },
    #[error("invalid netlist: {0}")]
    Netlist(String),
}

/// Labeled capacitive network, stored as a Maxwell matrix in fF.
#[derive(Debug, Clone)]
pub struct CapacitanceNetwork {
    nodes: Vec<String>,
    maxwell: DMatrix<f64>,
}

impl CapacitanceNetwork {
    /// Build from branch list; `"GND"` as the second node names a shunt.
    /// Parallel branches between the same pair accumulate.
    pub fn from_branches(nodes: &[&str], branches: &[(&str, &str, f64)]) -> Result<Self, CapError> {
        let mut seen = std::collections::HashSet::new();
        for n in nodes {
            if *n == "GND" {
                return Err(CapError::Netlist("GND cannot be a listed node".into()));
            }
            if !seen.insert(*n) {
                return Err(CapError::DuplicateNode(n.to_string()));
            }
        }
        let idx = |name: &str| -> Result<usize, CapError> {
            nodes
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| CapError::UnknownNode(name.to_string()))
        };
        let n = nodes.len();
        let mut m = DMatrix::zeros(n, n);
        for (a, b, c) in branches {
            if *c < 0.0 {
                return Err(CapError::NegativeCapacitance {
                    a: a.to_string(),
                    b: b.to_string(),
                    value: *c,
                });
            }
            if a == b {
                return Err(CapError::Netlist(format!("self-loop on {a}")));
            }
            if *b == "GND" {
                let i = idx(a)?;
                m[(i, i)] += c;
            } else if *a == "GND" {
                let j = idx(b)?;
                m[(j, j)] += c;
            } else {
                let (i, j) = (idx(a)?, idx(b)?);
                m[(i, i)] += c;
                m[(j, j)] += c;
                m[(i, j)] -= c;
                m[(j, i)] -= c;
            }
        }
        Ok(Self {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            maxwell: m,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn maxwell(&self) -> &DMatrix<f64> {
        &self.maxwell
    }

    fn index(&self, name: &str) -> Result<usize, CapError> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CapError::UnknownNode(name.to_string()))
    }

    /// Branch capacitance between two nodes (fF).
    pub fn branch(&self, a: &str, b: &str) -> Result<f64, CapError> {
        Ok(-self.maxwell[(self.index(a)?, self.index(b)?)])
    }

    /// Capacitance from a node to ground (fF): Maxwell row sum.
    pub fn shunt(&self, a: &str) -> Result<f64, CapError> {
        let i = self.index(a)?;
        Ok(self.maxwell.row(i).sum())
    }

    /// Kron reduction: Schur complement of the Maxwell matrix over all nodes
    /// not in `keep`. Exact for purely capacitive networks.
    pub fn kron_reduce(&self, keep: &[&str]) -> Result<Self, CapError> {
        if keep.is_empty() || keep.len() >= self.nodes.len() {
            return Err(CapError::Netlist(
                "keep set must be a nonempty strict subset".into(),
            ));
        }
        let keep_idx: Vec<usize> = keep
            .iter()
            .map(|n| self.index(n))
            .collect::<Result<_, _>>()?;
        let drop_idx: Vec<usize> = (0..self.nodes.len())
            .filter(|i| !keep_idx.contains(i))
            .collect();

        let a = self.maxwell.select_rows(&keep_idx).select_columns(&keep_idx);
        let b = self.maxwell.select_rows(&keep_idx).select_columns(&drop_idx);
        let c = self.maxwell.select_rows(&drop_idx).select_columns(&keep_idx);
        let d = self.maxwell.select_rows(&drop_idx).select_columns(&drop_idx);

        // isolated eliminated nodes make D singular in a harmless way; peel
        // them off first (zero row contributes nothing to the complement)
        let live: Vec<usize> = (0..drop_idx.len())
            .filter(|&k| d.row(k).amax() > 0.0 || c.row(k).amax() > 0.0)
            .collect();
        let reduced = if live.is_empty() {
            a
        } else {
            let d_live = d.select_rows(&live).select_columns(&live);
            let c_live = c.select_rows(&live);
            let b_live = b.select_columns(&live);
            let lu = d_live.lu();
            let x = lu.solve(&c_live).ok_or(CapError::SingularReduction)?;
            a - b_live * x
        };
        Ok(Self {
            nodes: keep.iter().map(|s| s.to_string()).collect(),
            maxwell: reduced,
        })
    }

    /// Star-mesh elimination of a single node (ground acts as one more star
    /// branch); identical to a single-pivot Schur complement.
    pub fn eliminate_node(&self, node: &str) -> Result<Self, CapError> {
        let x = self.index(node)?;
        let n = self.nodes.len();
        let pivot = self.maxwell[(x, x)];
        let connected = (0..n).any(|i| i != x && self.maxwell[(x, i)] != 0.0);
        if pivot == 0.0 && connected {
            return Err(CapError::SingularReduction);
        }
        let keep: Vec<usize> = (0..n).filter(|&i| i != x).collect();
        let mut m = self.maxwell.select_rows(&keep).select_columns(&keep);
        if pivot != 0.0 {
            for (ri, &i) in keep.iter().enumerate() {
                for (rj, &j) in keep.iter().enumerate() {
                    m[(ri, rj)] -= self.maxwell[(i, x)] * self.maxwell[(x, j)] / pivot;
                }
            }
        }
        Ok(Self {
            nodes: keep.iter().map(|&i| self.nodes[i].clone()).collect(),
            maxwell: m,
        })
    }

    /// Copy with nodes permuted into the given order.
    pub fn reordered(&self, order: &[&str]) -> Result<Self, CapError> {
        if order.len() != self.nodes.len() {
            return Err(CapError::Netlist("reorder must list every node".into()));
        }
        let perm: Vec<usize> = order
            .iter()
            .map(|n| self.index(n))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            nodes: order.iter().map(|s| s.to_string()).collect(),
            maxwell: self.maxwell.select_rows(&perm).select_columns(&perm),
        })
    }

    /// Serialize as the netlist JSON schema.
    pub fn to_netlist_json(&self) -> String {
        serde_json::to_string_pretty(&NetlistDoc::from_network(self)).expect("serializable")
    }

    pub fn from_netlist_json(s: &str) -> Result<Self, CapError> {
        let doc: NetlistDoc =
            serde_json::from_str(s).map_err(|e| CapError::Netlist(e.to_string()))?;
        doc.into_network()
    }
}

/// Netlist document: `{"nodes": [...], "capacitors": [{"a", "b", "fF"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetlistDoc {
    pub nodes: Vec<String>,
    pub capacitors: Vec<CapBranch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapBranch {
    pub a: String,
    pub b: String,
    #[serde(rename = "fF")]
    pub f_f: f64,
}

/// Reduction provenance attached to emitted netlists.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub method: String,
    pub eliminated: Vec<String>,
}

impl NetlistDoc {
    pub fn from_network(net: &CapacitanceNetwork) -> Self {
        let mut capacitors = Vec::new();
        let n = net.nodes.len();
        for i in 0..n {
            for j in i + 1..n {
                let c = -net.maxwell[(i, j)];
                if c.abs() > 1e-15 {
                    capacitors.push(CapBranch {
                        a: net.nodes[i].clone(),
                        b: net.nodes[j].clone(),
                        f_f: c,
                    });
                }
            }
            let shunt = net.maxwell.row(i).sum();
            if shunt.abs() > 1e-15 {
                capacitors.push(CapBranch {
                    a: net.nodes[i].clone(),
                    b: "GND".into(),
                    f_f: shunt,
                });
            }
        }
        NetlistDoc {
            nodes: net.nodes.clone(),
            capacitors,
            provenance: None,
        }
    }

    pub fn into_network(self) -> Result<CapacitanceNetwork, CapError> {
        let nodes: Vec<&str> = self.nodes.iter().map(|s| s.as_str()).collect();
        let branches: Vec<(&str, &str, f64)> = self
            .capacitors
            .iter()
            .map(|b| (b.a.as_str(), b.b.as_str(), b.f_f))
            .collect();
        CapacitanceNetwork::from_branches(&nodes, &branches)
    }
}

/// Mesh-star (Δ-Y) transform of a capacitive triangle. Inputs are the mesh
/// capacitances (C-F, C-S, F-S); outputs are the star branches at C, F, S.
pub fn mesh_star(c_cf: f64, c_sc: f64, c_sf: f64) -> Result<(f64, f64, f64), CapError> {
    if c_cf <= 0.0 || c_sc <= 0.0 || c_sf <= 0.0 {
        return Err(CapError::DegenerateTransform(
            "mesh-star requires strictly positive mesh capacitances".into(),
        ));
    }
    let p = c_cf * c_sc + c_cf * c_sf + c_sc * c_sf;
    Ok((p / c_sf, p / c_sc, p / c_cf))
}

/// Star-mesh elimination of a star node: every unordered branch pair (i, j)
/// produces a mesh capacitance C_i C_j / ΣC. Returned as a symmetric matrix
/// with zero diagonal.
pub fn star_mesh(branches: &[f64]) -> Result<DMatrix<f64>, CapError> {
    if branches.len() < 2 {
        return Err(CapError::DegenerateTransform(
            "star-mesh needs at least two branches".into(),
        ));
    }
    let total: f64 = branches.iter().sum();
    if total <= 0.0 {
        return Err(CapError::DegenerateTransform(
            "star-mesh branch sum must be positive".into(),
        ));
    }
    let n = branches.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let c = branches[i] * branches[j] / total;
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    Ok(m)
}

/// Two-island coupler circuit after Kron reduction of the extender nodes:
/// qubit self caps, island couplings (parallel = same-side, perp =
/// cross-side), qubit-qubit cap, and island shunts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReducedCircuit {
    pub c1: f64,
    pub c2: f64,
    pub cc: f64,
    pub c1c_par: f64,
    pub c1c_perp: f64,
    pub c2c_par: f64,
    pub c2c_perp: f64,
    pub c12: f64,
    pub csd_tilde: f64,
    pub cse_tilde: f64,
}

/// Effective 3-mode capacitance matrix after eliminating the coupler
/// center-of-capacitance coordinate. Mode order (1, c, 2); sign structure
/// [[CΣ1, -C1c, -C12*], [-C1c, CΣc, +C2c], [-C12*, +C2c, CΣ2]].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EffectiveCapMatrix {
    pub c_sigma1: f64,
    pub c_sigma2: f64,
    pub c_sigmac: f64,
    pub c1c: f64,
    pub c2c: f64,
    pub c12_star: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub c_sigma_theta: f64,
}

impl EffectiveCapMatrix {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.c_sigma1,
            -self.c1c,
            -self.c12_star,
            -self.c1c,
            self.c_sigmac,
            self.c2c,
            -self.c12_star,
            self.c2c,
            self.c_sigma2,
        )
    }
}

/// Eliminate the center-of-capacitance coordinate of the two coupler islands,
/// leaving the differential island mode coupled to the qubits.
pub fn eliminate_com(rc: &ReducedCircuit) -> Result<EffectiveCapMatrix, CapError> {
    let cst = rc.c1c_par + rc.c1c_perp + rc.c2c_par + rc.c2c_perp + rc.csd_tilde + rc.cse_tilde;
    if cst <= 0.0 {
        return Err(CapError::DegenerateTransform(
            "island capacitance sum must be positive".into(),
        ));
    }
    let gamma1 = (rc.c2c_par + rc.c1c_perp + rc.cse_tilde) / cst;
    let gamma2 = (rc.c1c_par + rc.c2c_perp + rc.csd_tilde) / cst;
    let c_sigma1_gross = rc.c1 + rc.c1c_par + rc.c1c_perp + rc.c12;
    let c_sigma2_gross = rc.c2 + rc.c2c_par + rc.c2c_perp + rc.c12;
    Ok(EffectiveCapMatrix {
        c_sigma1: c_sigma1_gross - (rc.c1c_par + rc.c1c_perp).powi(2) / cst,
        c_sigma2: c_sigma2_gross - (rc.c2c_par + rc.c2c_perp).powi(2) / cst,
        c_sigmac: rc.cc + gamma1 * gamma2 * cst,
        c1c: gamma1 * rc.c1c_par - gamma2 * rc.c1c_perp,
        c2c: gamma2 * rc.c2c_par - gamma1 * rc.c2c_perp,
        c12_star: rc.c12 + (rc.c1c_par + rc.c1c_perp) * (rc.c2c_par + rc.c2c_perp) / cst,
        gamma1,
        gamma2,
        c_sigma_theta: cst,
    })
}

/// Cross-island-free equivalent circuit: same effective capacitance matrix,
/// but each qubit couples to only one coupler island.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BarredCircuit {
    pub c1_bar: f64,
    pub c2_bar: f64,
    pub cc_bar: f64,
    pub c1c_par_bar: f64,
    pub c2c_par_bar: f64,
    pub c12_bar: f64,
    pub csd_tilde: f64,
    pub cse_tilde: f64,
}

impl BarredCircuit {
    /// View as a ReducedCircuit (cross-island couplings identically zero).
    pub fn to_reduced(&self) -> ReducedCircuit {
        ReducedCircuit {
            c1: self.c1_bar,
            c2: self.c2_bar,
            cc: self.cc_bar,
            c1c_par: self.c1c_par_bar,
            c1c_perp: 0.0,
            c2c_par: self.c2c_par_bar,
            c2c_perp: 0.0,
            c12: self.c12_bar,
            csd_tilde: self.csd_tilde,
            cse_tilde: self.cse_tilde,
        }
    }
}

/// Construct the cross-island-free equivalent of a reduced circuit. The
/// output reproduces the input's effective capacitance matrix exactly.
pub fn remove_cross_island(rc: &ReducedCircuit) -> Result<BarredCircuit, CapError> {
    let den_e = rc.c2c_par + rc.c1c_perp + rc.cse_tilde;
    let den_d = rc.c1c_par + rc.c2c_perp + rc.csd_tilde;
    if den_e == 0.0 || den_d == 0.0 {
        return Err(CapError::DegenerateTransform(
            "island-side capacitance sums must be nonzero".into(),
        ));
    }
    let b1cp = rc.c1c_par - rc.c1c_perp * den_d / den_e;
    let b2cp = rc.c2c_par - rc.c2c_perp * den_e / den_d;
    let bst = b1cp + b2cp + rc.csd_tilde + rc.cse_tilde;
    let side_d = b1cp + rc.csd_tilde;
    let side_e = b2cp + rc.cse_tilde;
    if bst == 0.0 || side_d == 0.0 || side_e == 0.0 {
        return Err(CapError::DegenerateTransform(
            "barred island capacitance sums must be nonzero".into(),
        ));
    }
    let eff = eliminate_com(rc)?;
    let c12_bar = eff.c12_star - b1cp * b2cp / bst;
    let cc_bar = eff.c_sigmac - 1.0 / (1.0 / side_d + 1.0 / side_e);
    let c1_bar = eff.c_sigma1 + b1cp * b1cp / bst - b1cp - c12_bar;
    let c2_bar = eff.c_sigma2 + b2cp * b2cp / bst - b2cp - c12_bar;
    Ok(BarredCircuit {
        c1_bar,
        c2_bar,
        cc_bar,
        c1c_par_bar: b1cp,
        c2c_par_bar: b2cp,
        c12_bar,
        csd_tilde: rc.csd_tilde,
        cse_tilde: rc.cse_tilde,
    })
}

/// Inverse-capacitance parameters from the exact 3x3 inversion: effective
/// self and coupling capacitances plus per-mode charging energies.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InverseCapParams {
    pub c_sigma1_star: f64,
    pub c_sigmac_star: f64,
    pub c_sigma2_star: f64,
    /// Coupling capacitances 1/(C^-1)_ij; infinite when a coupling is absent.
    pub c_sigma_1c_star: f64,
    pub c_sigma_2c_star: f64,
    pub c_sigma_12_star: f64,
    /// Charging energies E_C/h in GHz, modes (1, c, 2).
    pub ec1: f64,
    pub ecc: f64,
    pub ec2: f64,
}

pub fn inverse_cap_params(m: &EffectiveCapMatrix) -> Result<InverseCapParams, CapError> {
    let cm = m.matrix();
    if cm.cholesky().is_none() {
        return Err(CapError::SingularMatrix);
    }
    let inv = cm.try_inverse().ok_or(CapError::SingularMatrix)?;
    let recip = |x: f64| {
        if x == 0.0 {
            f64::INFINITY
        } else {
            1.0 / x
        }
    };
    let c1s = 1.0 / inv[(0, 0)];
    let ccs = 1.0 / inv[(1, 1)];
    let c2s = 1.0 / inv[(2, 2)];
    Ok(InverseCapParams {
        c_sigma1_star: c1s,
        c_sigmac_star: ccs,
        c_sigma2_star: c2s,
        c_sigma_1c_star: recip(inv[(0, 1)]),
        c_sigma_2c_star: recip(inv[(1, 2)]),
        c_sigma_12_star: recip(inv[(0, 2)]),
        ec1: charging_energy_ghz(c1s),
        ecc: charging_energy_ghz(ccs),
        ec2: charging_energy_ghz(c2s),
    })
}

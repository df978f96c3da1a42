//! Three-mode models of the qubit-coupler-qubit cell.
//!
//! Modes are ordered (qubit 1, coupler, qubit 2) everywhere, each a Duffing
//! oscillator truncated to `levels` states, with exchange couplings built on
//! (b† - b) quadratures. Energies are in GHz (E/h), coupling rates in MHz.
//!
//! The module covers transmon parameter conversions, the analytic
//! capacitance-to-coupling formulas, dense dressed-state spectra with
//! max-overlap labeling, the static ZZ strength and its zero search, the
//! Schrieffer-Wolff effective qubit-qubit coupling, and a Levenberg-Marquardt
//! fit of measured ZZ curves.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::captools::EffectiveCapMatrix;

#[derive(Debug, Error)]
pub enum HamError {
    #[error("ej/ec = {ratio} is outside the transmon regime (need > 20)")]
    OutOfTransmonRegime { ratio: f64 },
    #[error("eta = 1: the qubit-qubit coupling expression is singular")]
    EtaUnity,
    #[error("coupler frequency {fc_ghz} GHz is resonant with a qubit")]
    ResonantDivergence { fc_ghz: f64 },
    #[error("dressed labels collide at bare state {label:?} (near-degenerate spectrum)")]
    LabelCollision { label: (usize, usize, usize) },
    #[error("{0} levels per mode is too few for this operation")]
    InvalidLevels(usize),
    #[error("least-squares fit diverged or is unidentifiable")]
    FitDiverged,
    #[error("need at least 4 curve points, got {0}")]
    InsufficientData(usize),
    #[error("no ZZ sign change in [{lo} GHz, {hi} GHz]")]
    NoZeroCrossing { lo: f64, hi: f64 },
}

/// Single transmon island: Josephson and charging energies in GHz (E/h).
/// `ej_max` and `flux` describe a symmetric SQUID when present.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TransmonParams {
    pub ej: f64,
    pub ec: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ej_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<f64>,
}

impl TransmonParams {
    pub fn new(ej: f64, ec: f64) -> Self {
        TransmonParams {
            ej,
            ec,
            ej_max: None,
            flux: None,
        }
    }

    /// Invert the transmon frequency formula: given the 0-1 frequency and the
    /// (negative) anharmonicity, recover (ej, ec) exactly.
    pub fn from_freq_anh(freq_ghz: f64, alpha_ghz: f64) -> Self {
        let ec = -alpha_ghz;
        let ej = (freq_ghz + ec).powi(2) / (8.0 * ec);
        TransmonParams::new(ej, ec)
    }

    /// Raw frequency formula with no regime guard, for parameters that came
    /// from `from_freq_anh` and are exact by construction. Use
    /// [`transmon_freq`] when the inputs are physical junction energies.
    pub fn freq_anh(&self) -> (f64, f64) {
        ((8.0 * self.ej * self.ec).sqrt() - self.ec, -self.ec)
    }
}

/// Transmon 0-1 frequency and anharmonicity (GHz): f = sqrt(8 ej ec) - ec,
/// alpha = -ec. Valid only well inside the transmon regime.
pub fn transmon_freq(p: &TransmonParams) -> Result<(f64, f64), HamError> {
    let ratio = p.ej / p.ec;
    if !(ratio > 20.0) {
        return Err(HamError::OutOfTransmonRegime { ratio });
    }
    Ok(p.freq_anh())
}

/// Effective Josephson energy of a symmetric SQUID at the given flux (Phi0).
pub fn squid_ej(ej_max: f64, flux: f64) -> f64 {
    debug_assert!(ej_max > 0.0);
    ej_max * (std::f64::consts::PI * flux).cos().abs()
}

/// Coupling rates from the three-body effective capacitance matrix.
#[derive(Debug, Clone, Copy)]
pub struct CouplingStrengths {
    pub g1c_mhz: f64,
    pub g2c_mhz: f64,
    pub g12_mhz: f64,
    /// eta = C1c C2c / (C12* C_sigma_c), the indirect fraction of the
    /// qubit-qubit coupling.
    pub eta: f64,
    /// xi = eta / (1 - eta), used by the off-state frequency estimate.
    pub xi: f64,
}

/// Approximate coupling rates (MHz) for mode frequencies `f1`, `f2`, `fc`
/// in GHz: g_ic = (C_ic / 2 sqrt(C_si C_sc)) sqrt(f_i f_c), and the
/// qubit-qubit rate carries the (1 - eta) correction from the indirect path.
pub fn coupling_strengths(
    m: &EffectiveCapMatrix,
    f1: f64,
    f2: f64,
    fc: f64,
) -> Result<CouplingStrengths, HamError> {
    let g1c_mhz = 0.5 * m.c1c / (m.c_sigma1 * m.c_sigmac).sqrt() * (f1 * fc).sqrt() * 1e3;
    let g2c_mhz = 0.5 * m.c2c / (m.c_sigma2 * m.c_sigmac).sqrt() * (f2 * fc).sqrt() * 1e3;
    // q is the indirect-path capacitance scale; eta compares it to the direct one
    let q = m.c1c * m.c2c / m.c_sigmac;
    let denom = m.c12_star - q;
    if denom == 0.0 {
        return Err(HamError::EtaUnity);
    }
    let g12_mhz = 0.5 * denom / (m.c_sigma1 * m.c_sigma2).sqrt() * (f1 * f2).sqrt() * 1e3;
    Ok(CouplingStrengths {
        g1c_mhz,
        g2c_mhz,
        g12_mhz,
        eta: q / m.c12_star,
        xi: q / denom,
    })
}

/// Full parameter set of the three-mode cell. Coupling rates are the values
/// at this exact configuration; the `with_*` builders apply the
/// sqrt-frequency rescaling when a mode is moved.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SystemParams {
    pub q1: TransmonParams,
    pub q2: TransmonParams,
    pub coupler: TransmonParams,
    pub g1c_mhz: f64,
    pub g2c_mhz: f64,
    pub g12_mhz: f64,
    pub levels: usize,
}

impl SystemParams {
    /// Build from mode frequencies and anharmonicities (GHz) plus coupling
    /// rates (MHz).
    #[allow(clippy::too_many_arguments)]
    pub fn from_frequencies(
        f1: f64,
        a1: f64,
        f2: f64,
        a2: f64,
        fc: f64,
        ac: f64,
        g1c_mhz: f64,
        g2c_mhz: f64,
        g12_mhz: f64,
        levels: usize,
    ) -> Self {
        SystemParams {
            q1: TransmonParams::from_freq_anh(f1, a1),
            q2: TransmonParams::from_freq_anh(f2, a2),
            coupler: TransmonParams::from_freq_anh(fc, ac),
            g1c_mhz,
            g2c_mhz,
            g12_mhz,
            levels,
        }
    }

    /// Build with coupling rates derived from an effective capacitance matrix.
    #[allow(clippy::too_many_arguments)]
    pub fn from_effective_caps(
        m: &EffectiveCapMatrix,
        f1: f64,
        a1: f64,
        f2: f64,
        a2: f64,
        fc: f64,
        ac: f64,
        levels: usize,
    ) -> Result<Self, HamError> {
        let cs = coupling_strengths(m, f1, f2, fc)?;
        Ok(SystemParams::from_frequencies(
            f1, a1, f2, a2, fc, ac, cs.g1c_mhz, cs.g2c_mhz, cs.g12_mhz, levels,
        ))
    }

    /// (frequency, anharmonicity) per mode, ordered (q1, coupler, q2).
    pub fn mode_freqs(&self) -> [(f64, f64); 3] {
        [
            self.q1.freq_anh(),
            self.coupler.freq_anh(),
            self.q2.freq_anh(),
        ]
    }

    /// Move the coupler to `fc_ghz`. With `rescale` the qubit-coupler rates
    /// pick up sqrt(fc_new / fc_old); the direct rate is unaffected.
    pub fn with_coupler_freq(&self, fc_ghz: f64, rescale: bool) -> Self {
        let (fc_old, ac) = self.coupler.freq_anh();
        let mut s = *self;
        s.coupler = TransmonParams::from_freq_anh(fc_ghz, ac);
        if rescale {
            let k = (fc_ghz / fc_old).sqrt();
            s.g1c_mhz *= k;
            s.g2c_mhz *= k;
        }
        s
    }

    /// Move qubit 2 to `f2_ghz`. With `rescale`, every rate involving qubit 2
    /// picks up sqrt(f2_new / f2_old).
    pub fn with_qubit2_freq(&self, f2_ghz: f64, rescale: bool) -> Self {
        let (f2_old, a2) = self.q2.freq_anh();
        let mut s = *self;
        s.q2 = TransmonParams::from_freq_anh(f2_ghz, a2);
        if rescale {
            let k = (f2_ghz / f2_old).sqrt();
            s.g2c_mhz *= k;
            s.g12_mhz *= k;
        }
        s
    }
}

fn kron3(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b).kronecker(c)
}

/// Dense Hamiltonian (GHz) of the three coupled Duffing modes, dimension
/// levels^3. Diagonal ladders w n + (a/2) n(n-1); exchange terms
/// -g1c x1 xc + g2c xc x2 - g12 x1 x2 with x = b† - b, which makes the
/// matrix real symmetric.
pub fn build_hamiltonian(s: &SystemParams) -> DMatrix<f64> {
    assert!(s.levels >= 2, "need at least two levels per mode");
    let n = s.levels;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut x = DMatrix::<f64>::zeros(n, n);
    for i in 0..n - 1 {
        let v = ((i + 1) as f64).sqrt();
        x[(i + 1, i)] = v;
        x[(i, i + 1)] = -v;
    }
    let ladder = |w: f64, a: f64| {
        DMatrix::<f64>::from_fn(n, n, |i, j| {
            if i == j {
                let nf = i as f64;
                w * nf + 0.5 * a * nf * (nf - 1.0)
            } else {
                0.0
            }
        })
    };
    let [(f1, a1), (fc, ac), (f2, a2)] = s.mode_freqs();
    let mut h = kron3(&ladder(f1, a1), &eye, &eye)
        + kron3(&eye, &ladder(fc, ac), &eye)
        + kron3(&eye, &eye, &ladder(f2, a2));
    h += kron3(&x, &x, &eye) * (-s.g1c_mhz * 1e-3);
    h += kron3(&eye, &x, &x) * (s.g2c_mhz * 1e-3);
    h += kron3(&x, &eye, &x) * (-s.g12_mhz * 1e-3);
    h
}

/// Labels that must resolve uniquely: the four computational states plus the
/// coupler single excitation. Anything else is labeled best-effort.
const PROTECTED: [(usize, usize, usize); 5] =
    [(0, 0, 0), (1, 0, 0), (0, 0, 1), (1, 0, 1), (0, 1, 0)];

/// Eigendecomposition of the three-mode Hamiltonian with bare-state labels.
#[derive(Debug, Clone)]
pub struct DressedSpectrum {
    /// Ascending eigenvalues in GHz.
    pub eigenvalues: DVector<f64>,
    /// Column k is the eigenvector of `eigenvalues[k]` in the bare basis.
    pub eigenvectors: DMatrix<f64>,
    labels: HashMap<(usize, usize, usize), usize>,
    /// Single-excitation participation, rows = dressed (q1, coupler, q2),
    /// cols = bare (q1, coupler, q2); each row sums to 1.
    pub participation: Matrix3<f64>,
    levels: usize,
}

impl DressedSpectrum {
    pub fn eigenindex(&self, label: (usize, usize, usize)) -> Option<usize> {
        self.labels.get(&label).copied()
    }

    /// Dressed energy (GHz) of the eigenstate labeled by a bare occupation.
    pub fn energy(&self, label: (usize, usize, usize)) -> Option<f64> {
        self.eigenindex(label).map(|k| self.eigenvalues[k])
    }

    pub fn labels(&self) -> &HashMap<(usize, usize, usize), usize> {
        &self.labels
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    fn bare_index(&self, label: (usize, usize, usize)) -> usize {
        (label.0 * self.levels + label.1) * self.levels + label.2
    }

    /// |<bare label|dressed label'>|^2 overlap element.
    pub fn overlap2(&self, bare: (usize, usize, usize), dressed: (usize, usize, usize)) -> Option<f64> {
        let k = self.eigenindex(dressed)?;
        Some(self.eigenvectors[(self.bare_index(bare), k)].powi(2))
    }
}

/// Diagonalize and label. Each bare state claims the eigenvector holding its
/// largest squared component; a clash among the protected labels (the
/// computational set and the coupler single excitation) is an error, other
/// clashes keep the first claimant.
pub fn dressed_spectrum(h: &DMatrix<f64>, s: &SystemParams) -> Result<DressedSpectrum, HamError> {
    let n = s.levels;
    let dim = n * n * n;
    assert_eq!(h.nrows(), dim, "Hamiltonian does not match levels^3");
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_fn(dim, |k, _| eig.eigenvalues[order[k]]);
    let eigenvectors = DMatrix::from_fn(dim, dim, |i, k| eig.eigenvectors[(i, order[k])]);

    let claim = |bare: usize| -> usize {
        let mut best = 0;
        let mut best_w = -1.0;
        for k in 0..dim {
            let w = eigenvectors[(bare, k)].powi(2);
            if w > best_w {
                best_w = w;
                best = k;
            }
        }
        best
    };
    let bare_of = |l: (usize, usize, usize)| (l.0 * n + l.1) * n + l.2;

    let mut labels = HashMap::new();
    let mut taken = vec![false; dim];
    for &lab in PROTECTED.iter() {
        if lab.0 >= n || lab.1 >= n || lab.2 >= n {
            continue;
        }
        let k = claim(bare_of(lab));
        if taken[k] {
            return Err(HamError::LabelCollision { label: lab });
        }
        taken[k] = true;
        labels.insert(lab, k);
    }
    for b in 0..dim {
        let lab = (b / (n * n), (b / n) % n, b % n);
        if labels.contains_key(&lab) {
            continue;
        }
        let k = claim(b);
        if !taken[k] {
            taken[k] = true;
            labels.insert(lab, k);
        }
    }

    // single-excitation participation, renormalized within the manifold
    let singles = [(1, 0, 0), (0, 1, 0), (0, 0, 1)];
    let mut participation = Matrix3::<f64>::zeros();
    for (row, &dl) in singles.iter().enumerate() {
        let k = labels[&dl];
        let mut p = Vector3::zeros();
        for (col, &bl) in singles.iter().enumerate() {
            p[col] = eigenvectors[(bare_of(bl), k)].powi(2);
        }
        let total: f64 = p.sum();
        if total <= 0.0 {
            return Err(HamError::LabelCollision { label: dl });
        }
        participation.set_row(row, &(p / total).transpose());
    }

    Ok(DressedSpectrum {
        eigenvalues,
        eigenvectors,
        labels,
        participation,
        levels: n,
    })
}

/// Static ZZ strength (MHz): E11 - E10 - E01 + E00 over the dressed
/// computational labels. Needs at least 3 levels per mode so the
/// two-excitation states that generate the shift are present.
pub fn zz_strength(s: &SystemParams) -> Result<f64, HamError> {
    if s.levels < 3 {
        return Err(HamError::InvalidLevels(s.levels));
    }
    let h = build_hamiltonian(s);
    let d = dressed_spectrum(&h, s)?;
    let e = |l: (usize, usize, usize)| d.energy(l).expect("protected label");
    Ok((e((1, 0, 1)) - e((1, 0, 0)) - e((0, 0, 1)) + e((0, 0, 0))) * 1e3)
}

/// ZZ strength along a coupler-frequency sweep, parallel over points.
/// `rescale` selects the sqrt-frequency coupling convention.
pub fn zz_vs_coupler(
    base: &SystemParams,
    fc_ghz: &[f64],
    rescale: bool,
) -> Result<Vec<(f64, f64)>, HamError> {
    fc_ghz
        .par_iter()
        .map(|&fc| Ok((fc, zz_strength(&base.with_coupler_freq(fc, rescale))?)))
        .collect()
}

/// Locate a zero of the ZZ strength in [lo, hi] GHz by scanning for the first
/// sign change and bisecting it. Points where labeling fails are skipped.
pub fn find_zz_zero(
    base: &SystemParams,
    lo: f64,
    hi: f64,
    rescale: bool,
) -> Result<f64, HamError> {
    let zeta = |fc: f64| zz_strength(&base.with_coupler_freq(fc, rescale)).ok();
    const SCAN: usize = 64;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for i in 0..=SCAN {
        let fc = lo + (hi - lo) * i as f64 / SCAN as f64;
        let Some(z) = zeta(fc) else { continue };
        if z == 0.0 {
            return Ok(fc);
        }
        if let Some((pf, pz)) = prev {
            if pz * z < 0.0 {
                bracket = Some((pf, pz, fc));
                break;
            }
        }
        prev = Some((fc, z));
    }
    let (mut a, mut za, mut b) = bracket.ok_or(HamError::NoZeroCrossing { lo, hi })?;
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        let Some(zm) = zeta(mid) else { break };
        if zm.abs() < 1e-9 || (b - a) < 1e-13 {
            return Ok(mid);
        }
        if (zm < 0.0) == (za < 0.0) {
            a = mid;
            za = zm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// One cell of a ZZ map over (coupler frequency, qubit detuning).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZzMapPoint {
    pub omega_c_ghz: f64,
    pub delta_mhz: f64,
    /// None where the dressed labeling collides (on-resonance cells).
    pub zeta_mhz: Option<f64>,
}

/// ZZ strength over a grid: qubit 2 is moved to f1 - delta for each detuning
/// row and the coupler is swept per column. Under `rescale` every rate tracks
/// the moved mode frequencies as sqrt ratios.
pub fn zz_grid(
    base: &SystemParams,
    delta_mhz: &[f64],
    fc_ghz: &[f64],
    rescale: bool,
) -> Vec<ZzMapPoint> {
    let (f1, _) = base.q1.freq_anh();
    let cells: Vec<(f64, f64)> = delta_mhz
        .iter()
        .flat_map(|&d| fc_ghz.iter().map(move |&fc| (d, fc)))
        .collect();
    cells
        .par_iter()
        .map(|&(d, fc)| {
            let s = base
                .with_qubit2_freq(f1 - d * 1e-3, rescale)
                .with_coupler_freq(fc, rescale);
            ZzMapPoint {
                omega_c_ghz: fc,
                delta_mhz: d,
                zeta_mhz: zz_strength(&s).ok(),
            }
        })
        .collect()
}

/// Second-order effective qubit-qubit coupling (MHz), the coupling ratio
/// xi = 2 g1c g2c / (g12 w_c), and the off-state coupler frequency
/// w_off = w1 / sqrt(1 + xi).
pub fn gtilde_and_off(s: &SystemParams) -> Result<(f64, f64, f64), HamError> {
    let [(f1, _), (fc, _), (f2, _)] = s.mode_freqs();
    let d1 = f1 - fc;
    let d2 = f2 - fc;
    if d1.abs() < 1e-9 || d2.abs() < 1e-9 {
        return Err(HamError::ResonantDivergence { fc_ghz: fc });
    }
    let sum_terms = 1.0 / d1 + 1.0 / d2 - 1.0 / (f1 + fc) - 1.0 / (f2 + fc);
    let g_tilde_mhz = s.g12_mhz - 0.5 * s.g1c_mhz * s.g2c_mhz * 1e-3 * sum_terms;
    let xi = if s.g12_mhz == 0.0 {
        f64::INFINITY
    } else {
        2.0 * s.g1c_mhz * s.g2c_mhz / (s.g12_mhz * fc * 1e3)
    };
    let omega_off_ghz = f1 / (1.0 + xi).sqrt();
    Ok((g_tilde_mhz, xi, omega_off_ghz))
}

/// Result of a ZZ-curve fit for the three coupling rates.
#[derive(Debug, Clone, Copy)]
pub struct ZzFit {
    pub g1c_mhz: f64,
    pub g2c_mhz: f64,
    pub g12_mhz: f64,
    /// 1-sigma uncertainties from the Jacobian at the optimum.
    pub sigma_mhz: [f64; 3],
    pub ssr_mhz2: f64,
    pub iterations: usize,
}

/// Fit (g1c, g2c, g12) to a measured ZZ curve of (coupler GHz, zeta MHz)
/// points by Levenberg-Marquardt with a forward-difference Jacobian. The
/// rates are quoted at the coupler frequency of `fixed`, whose coupling
/// fields seed the search; `rescale` selects the sweep convention.
pub fn fit_zz_couplings(
    curve: &[(f64, f64)],
    fixed: &SystemParams,
    rescale: bool,
) -> Result<ZzFit, HamError> {
    if curve.len() < 4 {
        return Err(HamError::InsufficientData(curve.len()));
    }
    let n = curve.len();
    let residuals = |g: &[f64; 3]| -> Result<DVector<f64>, HamError> {
        let mut base = *fixed;
        base.g1c_mhz = g[0];
        base.g2c_mhz = g[1];
        base.g12_mhz = g[2];
        let pts: Result<Vec<f64>, HamError> = curve
            .par_iter()
            .map(|&(fc, z)| Ok(zz_strength(&base.with_coupler_freq(fc, rescale))? - z))
            .collect();
        Ok(DVector::from_vec(pts?))
    };
    let jacobian = |g: &[f64; 3], r0: &DVector<f64>| -> Result<DMatrix<f64>, HamError> {
        let mut j = DMatrix::zeros(n, 3);
        for col in 0..3 {
            let h = 1e-6 * g[col].abs().max(1.0);
            let mut gp = *g;
            gp[col] += h;
            let rp = residuals(&gp)?;
            for row in 0..n {
                j[(row, col)] = (rp[row] - r0[row]) / h;
            }
        }
        Ok(j)
    };

    let mut g = [fixed.g1c_mhz, fixed.g2c_mhz, fixed.g12_mhz];
    let mut r = residuals(&g)?;
    let mut ssr = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    'outer: for _ in 0..300 {
        iterations += 1;
        let j = jacobian(&g, &r)?;
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..3 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [g[0] + step[0], g[1] + step[1], g[2] + step[2]];
            let rt = residuals(&trial)?;
            let st = rt.norm_squared();
            if st < ssr {
                let rel = (ssr - st) / ssr.max(1e-300);
                g = trial;
                r = rt;
                ssr = st;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < 1e-8 || ssr < 1e-24 {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // damping exhausted with no downhill step left
            break;
        }
    }
    // a stall at an essentially perfect fit is still an optimum
    if !converged && ssr >= 1e-16 {
        return Err(HamError::FitDiverged);
    }

    // identifiability: reject a rank-deficient Jacobian at the solution
    let j = jacobian(&g, &r)?;
    let jtj = j.transpose() * &j;
    let sv = jtj.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin < 1e-8 * smax {
        return Err(HamError::FitDiverged);
    }
    let cov = jtj.try_inverse().ok_or(HamError::FitDiverged)?;
    let dof = (n.saturating_sub(3)).max(1) as f64;
    let s2 = ssr / dof;
    let sigma_mhz = [
        (s2 * cov[(0, 0)]).sqrt(),
        (s2 * cov[(1, 1)]).sqrt(),
        (s2 * cov[(2, 2)]).sqrt(),
    ];
    Ok(ZzFit {
        g1c_mhz: g[0],
        g2c_mhz: g[1],
        g12_mhz: g[2],
        sigma_mhz,
        ssr_mhz2: ssr,
        iterations,
    })
}

//! Diabatic two-qubit gate on the tunable coupler: flux-pulse synthesis,
//! line predistortion, time-domain propagation of the three-mode model and
//! CZ calibration.
//!
//! The control variable is the mixing angle theta of the |11>/|20> pair.
//! A monotone table theta(omega_c) built from exact diagonalization links the
//! angle to the coupler frequency, and the SQUID relation links frequency to
//! flux. Pulses ramp from the table base (the angle minimum, where the pair
//! is effectively uncoupled) to an operating angle near the resonance, hold,
//! and ramp back.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::hammod::{
    build_hamiltonian, dressed_spectrum, squid_ej, DressedSpectrum, HamError, SystemParams,
};

#[derive(Debug, Error)]
pub enum GateError {
    #[error("operating point out of reach: {0}")]
    UnreachableOperatingPoint(String),
    #[error("predistortion stage with amplitude {amplitude} has no stable inverse")]
    UnstableFilter { amplitude: f64 },
    #[error("calibration did not converge after {iterations} objective evaluations")]
    CalibrationFailed { iterations: usize },
    #[error("pulse grid: {0}")]
    BadPulseGrid(String),
    #[error("theta table: {0}")]
    BadThetaTable(String),
    #[error(transparent)]
    Ham(#[from] HamError),
}

/// Closed-form SQUID tuning curve of the coupler: flux in Phi0 against the
/// 0-1 frequency in GHz.
#[derive(Debug, Clone, Copy)]
pub struct FluxMap {
    pub ej_max: f64,
    pub ec: f64,
}

impl FluxMap {
    /// Fix E_J^max so that zero flux gives the requested maximum frequency.
    pub fn from_max_freq(wc_max_ghz: f64, ec_ghz: f64) -> Self {
        FluxMap {
            ej_max: (wc_max_ghz + ec_ghz).powi(2) / (8.0 * ec_ghz),
            ec: ec_ghz,
        }
    }

    pub fn for_coupler(s: &SystemParams, wc_max_ghz: f64) -> Self {
        FluxMap::from_max_freq(wc_max_ghz, s.coupler.ec)
    }

    pub fn wc_max(&self) -> f64 {
        (8.0 * self.ej_max * self.ec).sqrt() - self.ec
    }

    pub fn wc_of_flux(&self, flux_phi0: f64) -> f64 {
        (8.0 * squid_ej(self.ej_max, flux_phi0) * self.ec).sqrt() - self.ec
    }

    /// Invert onto the first branch, flux in [0, 0.5].
    pub fn flux_of_wc(&self, wc_ghz: f64) -> Result<f64, GateError> {
        if !(wc_ghz > 0.0) || wc_ghz > self.wc_max() + 1e-9 {
            return Err(GateError::UnreachableOperatingPoint(format!(
                "coupler frequency {wc_ghz} GHz outside (0, {:.4}]",
                self.wc_max()
            )));
        }
        let r = ((wc_ghz + self.ec).powi(2) / (8.0 * self.ec * self.ej_max)).min(1.0);
        Ok(r.acos() / PI)
    }
}

/// Labeled splitting D = E11 - E20 (GHz) and pair mixing angle chi at the
/// system's present coupler frequency. The two eigenvectors carrying the
/// most |11>/|20> weight form the pair; majority overlap assigns which is
/// which, so chi stays in [0, pi/4].
pub fn pair_state(s: &SystemParams) -> Result<(f64, f64), GateError> {
    let n = s.levels;
    if n < 3 {
        return Err(HamError::InvalidLevels(n).into());
    }
    let dim = n * n * n;
    let i11 = (n + 0) * n + 1;
    let i20 = 2 * n * n;
    let eig = build_hamiltonian(s).symmetric_eigen();
    let v = &eig.eigenvectors;
    let (mut ka, mut kb) = (usize::MAX, usize::MAX);
    let (mut wa, mut wb) = (-1.0, -1.0);
    for k in 0..dim {
        let w = v[(i11, k)].powi(2) + v[(i20, k)].powi(2);
        if w > wa {
            (kb, wb) = (ka, wa);
            (ka, wa) = (k, w);
        } else if w > wb {
            (kb, wb) = (k, w);
        }
    }
    let direct = v[(i11, ka)].powi(2) + v[(i20, kb)].powi(2);
    let swapped = v[(i11, kb)].powi(2) + v[(i20, ka)].powi(2);
    let (k11, k20) = if direct >= swapped { (ka, kb) } else { (kb, ka) };
    let d = eig.eigenvalues[k11] - eig.eigenvalues[k20];
    let chi = v[(i20, k11)].abs().atan2(v[(i11, k11)].abs());
    Ok((d, chi))
}

/// Control angle theta = arctan(2 g_eff / Delta_20) of the pair, recovered
/// from the eigenvectors: 2 chi on the near side of the resonance, pi - 2 chi
/// past it (where the labeled splitting has flipped sign).
pub fn theta_exact(s: &SystemParams) -> Result<f64, GateError> {
    let (d, chi) = pair_state(s)?;
    Ok(if d > 0.0 { 2.0 * chi } else { PI - 2.0 * chi })
}

/// Monotone cubic (pchip) derivative choice; interior points use the
/// weighted harmonic mean, endpoints the shape-preserving three-point rule.
fn pchip_derivs(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if del[i - 1] * del[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
        }
    }
    let edge = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let mut e = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if e * d0 <= 0.0 {
            e = 0.0;
        } else if d0 * d1 < 0.0 && e.abs() > 3.0 * d0.abs() {
            e = 3.0 * d0;
        }
        e
    };
    d[0] = edge(h[0], h[1], del[0], del[1]);
    d[n - 1] = edge(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

fn hermite_eval(x: &[f64], y: &[f64], d: &[f64], xq: f64) -> f64 {
    let i = match x.binary_search_by(|v| v.partial_cmp(&xq).unwrap()) {
        Ok(i) => i.min(x.len() - 2),
        Err(i) => i.saturating_sub(1).min(x.len() - 2),
    };
    let h = x[i + 1] - x[i];
    let t = (xq - x[i]) / h;
    let (t2, t3) = (t * t, t * t * t);
    y[i] * (2.0 * t3 - 3.0 * t2 + 1.0)
        + d[i] * h * (t3 - 2.0 * t2 + t)
        + y[i + 1] * (3.0 * t2 - 2.0 * t3)
        + d[i + 1] * h * (t3 - t2)
}

/// Interpolated theta(omega_c) on the monotone branch above the angle
/// minimum of a dense exact-diagonalization scan.
#[derive(Debug, Clone)]
pub struct ThetaMap {
    wc: Vec<f64>,
    th: Vec<f64>,
    d: Vec<f64>,
}

impl ThetaMap {
    /// Scan `n` points on [lo, hi] GHz with the couplings rescaled from the
    /// system's own coupler frequency, locate the angle minimum and keep the
    /// increasing branch above it.
    pub fn build(s: &SystemParams, lo_ghz: f64, hi_ghz: f64, n: usize) -> Result<Self, GateError> {
        if n < 8 || !(hi_ghz > lo_ghz) {
            return Err(GateError::BadThetaTable(format!(
                "need at least 8 points and lo < hi, got n = {n}, [{lo_ghz}, {hi_ghz}]"
            )));
        }
        let grid: Vec<f64> = (0..n)
            .map(|k| lo_ghz + (hi_ghz - lo_ghz) * k as f64 / (n - 1) as f64)
            .collect();
        let mut th = Vec::with_capacity(n);
        for &wc in &grid {
            th.push(theta_exact(&s.with_coupler_freq(wc, true))?);
        }
        let imin = (0..n)
            .min_by(|&a, &b| th[a].partial_cmp(&th[b]).unwrap())
            .unwrap();
        let wc: Vec<f64> = grid[imin..].to_vec();
        let th: Vec<f64> = th[imin..].to_vec();
        if wc.len() < 4 {
            return Err(GateError::BadThetaTable(
                "angle minimum sits at the top of the scan window".into(),
            ));
        }
        if th.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GateError::BadThetaTable(
                "theta is not strictly increasing above its minimum".into(),
            ));
        }
        let d = pchip_derivs(&wc, &th);
        Ok(ThetaMap { wc, th, d })
    }

    /// Coupler frequency at the branch base (the angle minimum).
    pub fn base_wc(&self) -> f64 {
        self.wc[0]
    }

    pub fn base_theta(&self) -> f64 {
        self.th[0]
    }

    pub fn max_theta(&self) -> f64 {
        *self.th.last().unwrap()
    }

    pub fn theta_at(&self, wc_ghz: f64) -> Result<f64, GateError> {
        if wc_ghz < self.wc[0] - 1e-12 || wc_ghz > *self.wc.last().unwrap() + 1e-12 {
            return Err(GateError::UnreachableOperatingPoint(format!(
                "coupler frequency {wc_ghz} GHz off the tabulated branch [{:.4}, {:.4}]",
                self.wc[0],
                self.wc.last().unwrap()
            )));
        }
        Ok(hermite_eval(&self.wc, &self.th, &self.d, wc_ghz))
    }

    /// Invert the interpolant by bisection; the branch is strictly monotone.
    pub fn wc_at(&self, theta: f64) -> Result<f64, GateError> {
        if theta < self.th[0] - 1e-12 || theta > self.max_theta() + 1e-12 {
            return Err(GateError::UnreachableOperatingPoint(format!(
                "theta = {theta} rad off the tabulated branch [{:.5}, {:.5}]",
                self.th[0],
                self.max_theta()
            )));
        }
        let (mut lo, mut hi) = (self.wc[0], *self.wc.last().unwrap());
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if hermite_eval(&self.wc, &self.th, &self.d, mid) < theta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn slepian_value(theta_i: f64, theta_f: f64, lambda1: f64, u: f64) -> f64 {
    theta_i
        + (theta_f - theta_i) * (u - (2.0 * PI * u).sin() / (2.0 * PI))
        + lambda1 * 0.5 * (1.0 - (2.0 * PI * u).cos())
}

/// Fast-adiabatic control-angle trajectory sampled on the nodes k dt,
/// k = 0..=round(tau/dt). The base term sweeps theta_i -> theta_f with
/// vanishing endpoint slope; `lambda1` adds the first harmonic, which keeps
/// both endpoints pinned.
pub fn slepian_theta(theta_i: f64, theta_f: f64, tau_ns: f64, lambda1: f64, dt_ns: f64) -> Vec<f64> {
    assert!(tau_ns > 0.0 && dt_ns > 0.0, "need positive tau and dt");
    let n = (tau_ns / dt_ns).round() as usize;
    (0..=n)
        .map(|k| slepian_value(theta_i, theta_f, lambda1, k as f64 / n as f64))
        .collect()
}

/// Coupler flux drive on a uniform grid. `samples` are midpoint values for
/// the ramp-hold-ramp gate pulse (piecewise-constant propagation then
/// converges at second order); trajectories from [`theta_to_flux`] keep
/// whatever sampling the caller chose.
#[derive(Debug, Clone)]
pub struct FluxPulse {
    pub samples: Vec<f64>,
    pub idle_flux: f64,
    pub pad_ns: f64,
    pub interaction_ns: f64,
    pub dt_ns: f64,
}

impl FluxPulse {
    pub fn total_ns(&self) -> f64 {
        self.samples.len() as f64 * self.dt_ns
    }
}

/// Ramp-hold-ramp gate pulse: slepian ramps over the pad, hold at the
/// operating angle for tau (snapped onto the sample grid). Angles are
/// clamped onto the tabulated branch, matching how the calibrator explores.
pub fn flux_pulse(
    tm: &ThetaMap,
    fm: &FluxMap,
    theta_op: f64,
    tau_ns: f64,
    pad_ns: f64,
    dt_ns: f64,
    lambda1: f64,
) -> Result<FluxPulse, GateError> {
    if !(dt_ns > 0.0) || !(tau_ns > 0.0) || !(pad_ns > 0.0) {
        return Err(GateError::BadPulseGrid(format!(
            "need positive dt, tau, pad; got {dt_ns}, {tau_ns}, {pad_ns}"
        )));
    }
    let n_pad = (pad_ns / dt_ns).round();
    if (n_pad * dt_ns - pad_ns).abs() > 1e-6 {
        return Err(GateError::BadPulseGrid(format!(
            "pad {pad_ns} ns is not a multiple of dt {dt_ns} ns"
        )));
    }
    let n_pad = n_pad as usize;
    let n_int = (tau_ns / dt_ns).round().max(1.0) as usize;
    let (th_lo, th_hi) = (tm.base_theta(), tm.max_theta());
    let th_op = theta_op.clamp(th_lo, th_hi);

    let mut thetas = Vec::with_capacity(2 * n_pad + n_int);
    for k in 0..n_pad {
        let u = (k as f64 + 0.5) / n_pad as f64;
        thetas.push(slepian_value(th_lo, th_op, lambda1, u).clamp(th_lo, th_hi));
    }
    thetas.extend(std::iter::repeat(th_op).take(n_int));
    for k in (0..n_pad).rev() {
        thetas.push(thetas[k]);
    }

    let mut samples = Vec::with_capacity(thetas.len());
    for th in thetas {
        samples.push(fm.flux_of_wc(tm.wc_at(th)?)?);
    }
    Ok(FluxPulse {
        samples,
        idle_flux: fm.flux_of_wc(tm.base_wc())?,
        pad_ns: n_pad as f64 * dt_ns,
        interaction_ns: n_int as f64 * dt_ns,
        dt_ns,
    })
}

/// Map an explicit control-angle trajectory to flux, sample by sample.
/// Unlike the gate-pulse builder this refuses angles off the branch.
pub fn theta_to_flux(
    theta: &[f64],
    dt_ns: f64,
    tm: &ThetaMap,
    fm: &FluxMap,
) -> Result<FluxPulse, GateError> {
    let mut samples = Vec::with_capacity(theta.len());
    for &th in theta {
        samples.push(fm.flux_of_wc(tm.wc_at(th)?)?);
    }
    Ok(FluxPulse {
        samples,
        idle_flux: fm.flux_of_wc(tm.base_wc())?,
        pad_ns: 0.0,
        interaction_ns: theta.len() as f64 * dt_ns,
        dt_ns,
    })
}

/// Cascade of first-order correction stages. Each stage models a line whose
/// step response is 1 + a exp(-t/tau).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PredistortionFilter {
    /// (amplitude, tau_ns) per stage.
    pub stages: Vec<(f64, f64)>,
}

fn check_stages(f: &PredistortionFilter, dt_ns: f64, inverse: bool) -> Result<(), GateError> {
    for &(a, tau) in &f.stages {
        if a.abs() >= 1.0 {
            return Err(GateError::UnstableFilter { amplitude: a });
        }
        if !(tau > 0.0) {
            return Err(GateError::BadPulseGrid(format!(
                "stage time constant {tau} ns must be positive"
            )));
        }
        if inverse {
            let q = (-dt_ns / tau).exp();
            if ((q + a) / (1.0 + a)).abs() >= 1.0 {
                return Err(GateError::UnstableFilter { amplitude: a });
            }
        }
    }
    Ok(())
}

/// Apply the modeled line distortion (the thing predistortion undoes) to the
/// deviation from idle. Step-invariant discretization: an input step of
/// height s acquires the transient a s exp(-t/tau).
pub fn apply_distortion(p: &FluxPulse, f: &PredistortionFilter) -> Result<FluxPulse, GateError> {
    check_stages(f, p.dt_ns, false)?;
    let mut out = p.clone();
    for &(a, tau) in &f.stages {
        let q = (-p.dt_ns / tau).exp();
        let mut e = 0.0;
        let mut prev = 0.0;
        for s in out.samples.iter_mut() {
            let u = *s - p.idle_flux;
            e = q * e + (u - prev);
            prev = u;
            *s = p.idle_flux + u + a * e;
        }
    }
    Ok(out)
}

/// Exact discrete inverse of [`apply_distortion`], stage by stage; the
/// cascade order is immaterial for these LTI sections.
pub fn predistort(p: &FluxPulse, f: &PredistortionFilter) -> Result<FluxPulse, GateError> {
    check_stages(f, p.dt_ns, true)?;
    let mut out = p.clone();
    for &(a, tau) in &f.stages {
        let q = (-p.dt_ns / tau).exp();
        let mut e = 0.0;
        let mut prev = 0.0;
        for s in out.samples.iter_mut() {
            let y = *s - p.idle_flux;
            let u = (y - a * (q * e - prev)) / (1.0 + a);
            e = q * e + (u - prev);
            prev = u;
            *s = p.idle_flux + u;
        }
    }
    Ok(out)
}

/// Propagate the full truncated space through the pulse: one exact
/// exponential of the instantaneous Hamiltonian per sample, couplings
/// rescaled from the system's own coupler frequency.
pub fn evolve(s: &SystemParams, fm: &FluxMap, p: &FluxPulse) -> DMatrix<Complex64> {
    let dim = s.levels.pow(3);
    let mut u = DMatrix::<Complex64>::identity(dim, dim);
    for &flux in &p.samples {
        let wc = fm.wc_of_flux(flux);
        let h = build_hamiltonian(&s.with_coupler_freq(wc, true));
        let eig = h.symmetric_eigen();
        // V e^{-2 pi i E dt} V^T
        let mut w = eig.eigenvectors.map(Complex64::from);
        for k in 0..dim {
            let ph = Complex64::new(0.0, -2.0 * PI * eig.eigenvalues[k] * p.dt_ns).exp();
            for i in 0..dim {
                w[(i, k)] *= ph;
            }
        }
        let step = w * eig.eigenvectors.map(Complex64::from).transpose();
        u = step * u;
    }
    u
}

/// Gate summary in the rotating dressed frame of the pulse base point.
#[derive(Debug, Clone)]
pub struct GateResult {
    /// Full truncated-space unitary after undoing idle-frame phase rotation.
    pub unitary: DMatrix<Complex64>,
    /// Conditional phase, wrapped to (-pi, pi].
    pub phi11_rad: f64,
    /// Mean population lost from the computational subspace.
    pub leakage: f64,
    /// (phi_10, phi_01) accumulated single-excitation phases for virtual-Z
    /// correction, wrapped to (-pi, pi].
    pub single_qubit_phases: (f64, f64),
}

fn wrap_phase(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Conditional phase, single-qubit phases and leakage of a propagator,
/// reported in the dressed frame of `idle` rotating at the idle dressed
/// energies over `total_ns`.
pub fn cz_metrics(u: &DMatrix<Complex64>, idle: &DressedSpectrum, total_ns: f64) -> GateResult {
    let dim = u.nrows();
    assert_eq!(dim, idle.eigenvalues.len(), "propagator/basis size mismatch");
    let v = idle.eigenvectors.map(Complex64::from);
    let mut ur = v.transpose() * u * &v;
    for i in 0..dim {
        let ph = Complex64::new(0.0, 2.0 * PI * idle.eigenvalues[i] * total_ns).exp();
        for j in 0..dim {
            ur[(i, j)] *= ph;
        }
    }
    let k = |lab: (usize, usize, usize)| idle.eigenindex(lab).expect("computational label");
    let comp = [k((0, 0, 0)), k((1, 0, 0)), k((0, 0, 1)), k((1, 0, 1))];
    let diag = |i: usize| ur[(comp[i], comp[i])].arg();
    let phi11 = wrap_phase(diag(3) - diag(1) - diag(2) + diag(0));
    let single_qubit_phases = (wrap_phase(diag(1) - diag(0)), wrap_phase(diag(2) - diag(0)));
    let mut kept = 0.0;
    for &c in &comp {
        for &r in &comp {
            kept += ur[(r, c)].norm_sqr();
        }
    }
    let leakage = 1.0 - kept / 4.0;
    GateResult {
        unitary: ur,
        phi11_rad: phi11,
        leakage,
        single_qubit_phases,
    }
}

/// Knobs of the calibration pipeline. Defaults reproduce the reference
/// device: 5.5 ns pads, a 600-point angle table on [3.10, 3.85] GHz under a
/// 4.21 GHz coupler ceiling, and a (phase, leakage) weighting of (1, 10).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub wc_max_ghz: f64,
    pub table_lo_ghz: f64,
    pub table_hi_ghz: f64,
    pub table_points: usize,
    pub pad_ns: f64,
    pub lambda1: f64,
    pub dt_coarse_ns: f64,
    pub dt_opt_ns: f64,
    pub dt_final_ns: f64,
    pub tau_window_ns: (f64, f64),
    pub scan_wc_ghz: (f64, f64),
    pub scan_points: usize,
    pub weights: (f64, f64),
    pub max_iterations: usize,
    pub spread_tol: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            wc_max_ghz: 4.21,
            table_lo_ghz: 3.10,
            table_hi_ghz: 3.85,
            table_points: 600,
            pad_ns: 5.5,
            lambda1: 0.0,
            dt_coarse_ns: 0.1,
            dt_opt_ns: 0.02,
            dt_final_ns: 0.01,
            tau_window_ns: (18.0, 28.0),
            scan_wc_ghz: (3.66, 3.83),
            scan_points: 8,
            weights: (1.0, 10.0),
            max_iterations: 400,
            spread_tol: 1e-6,
        }
    }
}

/// Calibrated gate: the pulse, its metrics at the finest step size, and the
/// operating point in every coordinate.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub pulse: FluxPulse,
    pub result: GateResult,
    pub theta_op: f64,
    pub wc_op_ghz: f64,
    pub interaction_ns: f64,
    pub operation_flux: f64,
    pub objective: f64,
    pub evaluations: usize,
}

/// Two-parameter Nelder-Mead over (theta_op, tau). Returns the best vertex,
/// its value, whether the simplex collapsed (in f-spread below `f_tol` or in
/// coordinates), and the number of objective evaluations.
fn nelder_mead<F>(
    mut f: F,
    x0: [f64; 2],
    steps: [f64; 2],
    max_iter: usize,
    f_tol: f64,
) -> Result<([f64; 2], f64, bool, usize), GateError>
where
    F: FnMut(&[f64; 2]) -> Result<f64, GateError>,
{
    let mut evals = 0;
    let mut eval = |x: &[f64; 2], n: &mut usize| -> Result<f64, GateError> {
        *n += 1;
        f(x)
    };
    let mut xs = [
        x0,
        [x0[0] + steps[0], x0[1]],
        [x0[0], x0[1] + steps[1]],
    ];
    let mut fs = [0.0; 3];
    for i in 0..3 {
        fs[i] = eval(&xs[i], &mut evals)?;
    }
    let mut converged = false;
    for _ in 0..max_iter {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| fs[a].partial_cmp(&fs[b]).unwrap());
        (xs, fs) = (
            [xs[order[0]], xs[order[1]], xs[order[2]]],
            [fs[order[0]], fs[order[1]], fs[order[2]]],
        );
        let spread = fs[2] - fs[0];
        let diam = (xs[1][0] - xs[0][0]).abs().max((xs[2][0] - xs[0][0]).abs())
            + (xs[1][1] - xs[0][1]).abs().max((xs[2][1] - xs[0][1]).abs());
        if spread < f_tol || diam < 1e-8 {
            converged = true;
            break;
        }
        let c = [0.5 * (xs[0][0] + xs[1][0]), 0.5 * (xs[0][1] + xs[1][1])];
        let xr = [2.0 * c[0] - xs[2][0], 2.0 * c[1] - xs[2][1]];
        let fr = eval(&xr, &mut evals)?;
        if fr < fs[0] {
            let xe = [c[0] + 2.0 * (xr[0] - c[0]), c[1] + 2.0 * (xr[1] - c[1])];
            let fe = eval(&xe, &mut evals)?;
            if fe < fr {
                (xs[2], fs[2]) = (xe, fe);
            } else {
                (xs[2], fs[2]) = (xr, fr);
            }
        } else if fr < fs[1] {
            (xs[2], fs[2]) = (xr, fr);
        } else {
            // contract on the reflected side when the reflection at least
            // beat the worst vertex, on the inside otherwise
            let (xc, keep_if) = if fr < fs[2] {
                (
                    [c[0] + 0.5 * (xr[0] - c[0]), c[1] + 0.5 * (xr[1] - c[1])],
                    fr,
                )
            } else {
                (
                    [c[0] + 0.5 * (xs[2][0] - c[0]), c[1] + 0.5 * (xs[2][1] - c[1])],
                    fs[2],
                )
            };
            let fc = eval(&xc, &mut evals)?;
            if fc <= keep_if {
                (xs[2], fs[2]) = (xc, fc);
            } else {
                for i in 1..3 {
                    xs[i] = [
                        0.5 * (xs[i][0] + xs[0][0]),
                        0.5 * (xs[i][1] + xs[0][1]),
                    ];
                    fs[i] = eval(&xs[i], &mut evals)?;
                }
            }
        }
    }
    let best = (0..3)
        .min_by(|&a, &b| fs[a].partial_cmp(&fs[b]).unwrap())
        .unwrap();
    Ok((xs[best], fs[best], converged, evals))
}

/// Calibrate the diabatic CZ: coarse grid over candidate operating points
/// and hold times, then simplex refinement of (theta_op, tau) against
/// w1 (phi11 - pi)^2 + w2 leakage with a soft window on tau, then a final
/// fine-step evaluation. Convergence means the simplex collapsed; a
/// converged point that still misses the conditional phase by more than
/// 0.1 rad counts as failure (no reachable operating point).
pub fn calibrate_cz(s: &SystemParams, cfg: &GateConfig) -> Result<Calibration, GateError> {
    let fm = FluxMap::for_coupler(s, cfg.wc_max_ghz);
    let tm = ThetaMap::build(s, cfg.table_lo_ghz, cfg.table_hi_ghz, cfg.table_points)?;
    let s_base = s.with_coupler_freq(tm.base_wc(), true);
    let idle = dressed_spectrum(&build_hamiltonian(&s_base), &s_base)?;
    let (w1, w2) = cfg.weights;
    let (tau_lo, tau_hi) = cfg.tau_window_ns;

    let gate = |theta: f64, tau: f64, dt: f64| -> Result<(f64, GateResult, FluxPulse), GateError> {
        let p = flux_pulse(&tm, &fm, theta, tau.max(dt), cfg.pad_ns, dt, cfg.lambda1)?;
        let u = evolve(s, &fm, &p);
        let m = cz_metrics(&u, &idle, p.total_ns());
        let d = wrap_phase(m.phi11_rad - PI);
        let pen = ((tau - tau_hi).max(0.0) + (tau_lo - tau).max(0.0)).powi(2);
        let obj = w1 * d * d + w2 * m.leakage.max(0.0) + pen;
        Ok((obj, m, p))
    };

    // coarse scan; clamp the candidate window onto the tabulated branch
    let branch_hi = tm.wc_at(tm.max_theta())?;
    let mut lo = cfg.scan_wc_ghz.0.max(tm.base_wc() + 0.02);
    let mut hi = cfg.scan_wc_ghz.1.min(branch_hi);
    if lo >= hi {
        lo = 0.5 * (tm.base_wc() + branch_hi);
        hi = branch_hi;
    }
    let mut coarse: Vec<(f64, f64, f64)> = Vec::new();
    let mut evaluations = 0;
    for i in 0..cfg.scan_points {
        let wc = lo + (hi - lo) * i as f64 / (cfg.scan_points - 1).max(1) as f64;
        let theta = tm.theta_at(wc)?;
        let mut tau = tau_lo;
        while tau <= tau_hi + 1e-9 {
            let (obj, _, _) = gate(theta, tau, cfg.dt_coarse_ns)?;
            evaluations += 1;
            coarse.push((obj, theta, tau));
            tau += 2.0;
        }
    }
    coarse.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // the coarse minimum can sit in a shallow trap near the window edge, so
    // refine from the few best well-separated candidates and keep the winner
    let mut starts: Vec<[f64; 2]> = Vec::new();
    for &(_, theta, tau) in &coarse {
        if starts
            .iter()
            .all(|s| (s[0] - theta).abs() > 0.02 || (s[1] - tau).abs() > 1.9)
        {
            starts.push([theta, tau]);
            if starts.len() == 3 {
                break;
            }
        }
    }

    let mut winner: Option<([f64; 2], f64)> = None;
    for &start in &starts {
        let mut x = start;
        let mut fx = f64::INFINITY;
        let mut converged = false;
        for _ in 0..3 {
            let (xn, fxn, conv, n) = nelder_mead(
                |p| gate(p[0], p[1], cfg.dt_opt_ns).map(|(obj, _, _)| obj),
                x,
                [0.01, 0.4],
                cfg.max_iterations,
                cfg.spread_tol,
            )?;
            x = xn;
            fx = fxn;
            evaluations += n;
            if conv {
                converged = true;
                break;
            }
        }
        if converged && winner.map_or(true, |(_, f)| fx < f) {
            winner = Some((x, fx));
        }
    }
    let Some((x, _)) = winner else {
        return Err(GateError::CalibrationFailed {
            iterations: evaluations,
        });
    };

    let (objective, result, pulse) = gate(x[0], x[1], cfg.dt_final_ns)?;
    evaluations += 1;
    if wrap_phase(result.phi11_rad - PI).abs() > 0.1 {
        return Err(GateError::CalibrationFailed {
            iterations: evaluations,
        });
    }
    let theta_op = x[0].clamp(tm.base_theta(), tm.max_theta());
    let wc_op_ghz = tm.wc_at(theta_op)?;
    Ok(Calibration {
        interaction_ns: pulse.interaction_ns,
        operation_flux: fm.flux_of_wc(wc_op_ghz)?,
        pulse,
        result,
        theta_op,
        wc_op_ghz,
        objective,
        evaluations,
    })
}

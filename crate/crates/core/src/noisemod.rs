//! Decoherence budgets for the tunable-coupler cell.
//!
//! Times are in microseconds, rates in inverse microseconds, coupler
//! frequencies in GHz. Infinite coherence is always stored as a zero rate.
//! The three channels are relaxation (T1), white dephasing (T_phi1, the
//! exponential part of a Ramsey envelope) and quasi-static dephasing
//! (T_phi2, the Gaussian part). Linear channels mix linearly under
//! hybridization and time-average along a flux pulse; the Gaussian channel
//! mixes and averages in quadrature.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("coherence times must be positive (or infinite), got {0}")]
    BadTime(f64),
    #[error("participation row sums to {sum}, expected 1")]
    BadParticipation { sum: f64 },
    #[error("need at least {need} points, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("all points share one slope, the line fit is degenerate")]
    DegenerateFit,
    #[error("trajectory visits {omega_ghz} GHz, outside the tabulated curves")]
    RangeNotCovered { omega_ghz: f64 },
}

/// One mode's coherence channels, stored as rates so that "infinite time"
/// is an ordinary zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCoherence {
    gamma1: f64,
    gamma_phi1: f64,
    gamma_phi2: f64,
}

fn time_to_rate(t_us: f64) -> Result<f64, NoiseError> {
    if t_us.is_infinite() && t_us > 0.0 {
        Ok(0.0)
    } else if t_us > 0.0 && t_us.is_finite() {
        Ok(1.0 / t_us)
    } else {
        Err(NoiseError::BadTime(t_us))
    }
}

impl ModeCoherence {
    pub fn from_times(t1_us: f64, t_phi1_us: f64, t_phi2_us: f64) -> Result<Self, NoiseError> {
        Ok(ModeCoherence {
            gamma1: time_to_rate(t1_us)?,
            gamma_phi1: time_to_rate(t_phi1_us)?,
            gamma_phi2: time_to_rate(t_phi2_us)?,
        })
    }

    pub fn from_rates(gamma1: f64, gamma_phi1: f64, gamma_phi2: f64) -> Result<Self, NoiseError> {
        for g in [gamma1, gamma_phi1, gamma_phi2] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(NoiseError::BadTime(1.0 / g));
            }
        }
        Ok(ModeCoherence {
            gamma1,
            gamma_phi1,
            gamma_phi2,
        })
    }

    pub fn rates(&self) -> (f64, f64, f64) {
        (self.gamma1, self.gamma_phi1, self.gamma_phi2)
    }

    pub fn t1_us(&self) -> f64 {
        1.0 / self.gamma1
    }

    pub fn t_phi1_us(&self) -> f64 {
        1.0 / self.gamma_phi1
    }

    pub fn t_phi2_us(&self) -> f64 {
        1.0 / self.gamma_phi2
    }
}

/// Ramsey fringe envelope a(t) exp(-t/2T1 - t/T_phi1 - (t/T_phi2)^2); the
/// caller supplies the oscillatory factor a(t) already evaluated.
pub fn ramsey_envelope(t_us: f64, a_t: f64, m: &ModeCoherence) -> f64 {
    let decay = 0.5 * t_us * m.gamma1 + t_us * m.gamma_phi1 + (t_us * m.gamma_phi2).powi(2);
    a_t * (-decay).exp()
}

/// Coherence of a coupled mode from the participation of the three
/// uncoupled modes in it: relaxation and white dephasing mix linearly,
/// quasi-static dephasing in quadrature.
pub fn hybrid_rates(
    participation: &[f64; 3],
    uncoupled: &[ModeCoherence; 3],
) -> Result<ModeCoherence, NoiseError> {
    let sum: f64 = participation.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(NoiseError::BadParticipation { sum });
    }
    let mut gamma1 = 0.0;
    let mut gamma_phi1 = 0.0;
    let mut qs_sq = 0.0;
    for (p, m) in participation.iter().zip(uncoupled) {
        gamma1 += p * m.gamma1;
        gamma_phi1 += p * m.gamma_phi1;
        qs_sq += (p * m.gamma_phi2).powi(2);
    }
    ModeCoherence::from_rates(gamma1, gamma_phi1, qs_sq.sqrt())
}

/// Flux-noise dephasing parameters. `sqrt_a_uphi0` is the 1/f amplitude in
/// micro-flux-quanta; `b_uphi0` the coefficient of the Ramsey-style linear
/// model, nominally 53 here since the source only pins its order of
/// magnitude; `offset_per_us` an additive rate offset from the line fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FluxNoiseModel {
    pub sqrt_a_uphi0: f64,
    pub offset_per_us: f64,
    #[serde(default = "default_b")]
    pub b_uphi0: f64,
}

fn default_b() -> f64 {
    53.0
}

impl FluxNoiseModel {
    pub fn new(sqrt_a_uphi0: f64, offset_per_us: f64) -> Self {
        FluxNoiseModel {
            sqrt_a_uphi0,
            offset_per_us,
            b_uphi0: default_b(),
        }
    }

    pub fn with_b(mut self, b_uphi0: f64) -> Self {
        self.b_uphi0 = b_uphi0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DephasingKind {
    Echo,
    Ramsey,
}

// uPhi0 * GHz/Phi0 -> 1/us, with the angular 2 pi folded in
const UPHI0_GHZ_TO_RATE: f64 = 2.0 * std::f64::consts::PI * 1e-3;

/// Dephasing rate from the flux dispersion slope (GHz per flux quantum):
/// echo uses sqrt(A ln 2) |slope|, the Ramsey-style model B |slope|, both
/// plus the model's offset.
pub fn flux_noise_dephasing(
    slope_ghz_per_phi0: f64,
    model: &FluxNoiseModel,
    kind: DephasingKind,
) -> f64 {
    let coeff = match kind {
        DephasingKind::Echo => model.sqrt_a_uphi0 * std::f64::consts::LN_2.sqrt(),
        DephasingKind::Ramsey => model.b_uphi0,
    };
    coeff * UPHI0_GHZ_TO_RATE * slope_ghz_per_phi0.abs() + model.offset_per_us
}

/// Echo-dephasing line fit: model, plus one-sigma uncertainties on the
/// amplitude and offset.
#[derive(Debug, Clone, Copy)]
pub struct FluxNoiseFit {
    pub model: FluxNoiseModel,
    pub sigma_sqrt_a: f64,
    pub sigma_offset: f64,
}

/// Fit rate = sqrt(A ln 2)|slope| + offset to measured echo rates. Points
/// are (slope in GHz/Phi0, rate in 1/us).
pub fn fit_flux_noise(points: &[(f64, f64)]) -> Result<FluxNoiseFit, NoiseError> {
    let n = points.len();
    if n < 3 {
        return Err(NoiseError::InsufficientData { need: 3, got: n });
    }
    let nf = n as f64;
    let xbar = points.iter().map(|p| p.0.abs()).sum::<f64>() / nf;
    let ybar = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(s, y) in points {
        let dx = s.abs() - xbar;
        sxx += dx * dx;
        sxy += dx * (y - ybar);
    }
    if sxx <= 1e-12 * nf * (1.0 + xbar * xbar) {
        return Err(NoiseError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ssr: f64 = points
        .iter()
        .map(|&(s, y)| (y - slope * s.abs() - intercept).powi(2))
        .sum();
    let s2 = ssr / (nf - 2.0).max(1.0);
    let var_slope = s2 / sxx;
    let var_intercept = s2 * (1.0 / nf + xbar * xbar / sxx);
    let conv = std::f64::consts::LN_2.sqrt() * UPHI0_GHZ_TO_RATE;
    Ok(FluxNoiseFit {
        model: FluxNoiseModel::new(slope / conv, intercept),
        sigma_sqrt_a: var_slope.sqrt() / conv,
        sigma_offset: var_intercept.sqrt(),
    })
}

/// Per-channel decoherence rates tabulated against coupler frequency,
/// interpolated linearly between tabulated points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceCurves {
    omega_ghz: Vec<f64>,
    rates: Vec<(f64, f64, f64)>,
}

impl CoherenceCurves {
    /// Rows of (omega_c GHz, T1, T_phi1, T_phi2) in microseconds; infinite
    /// times allowed.
    pub fn from_time_rows(rows: &[(f64, f64, f64, f64)]) -> Result<Self, NoiseError> {
        let rates = rows
            .iter()
            .map(|&(_, t1, tp1, tp2)| {
                Ok((time_to_rate(t1)?, time_to_rate(tp1)?, time_to_rate(tp2)?))
            })
            .collect::<Result<Vec<_>, NoiseError>>()?;
        Self::build(rows.iter().map(|r| r.0).collect(), rates)
    }

    /// Rows of (omega_c GHz, Gamma1, Gamma_phi1, Gamma_phi2) in 1/us.
    pub fn from_rate_rows(rows: &[(f64, f64, f64, f64)]) -> Result<Self, NoiseError> {
        for &(_, g1, gp1, gp2) in rows {
            for g in [g1, gp1, gp2] {
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(NoiseError::BadTime(1.0 / g));
                }
            }
        }
        Self::build(
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| (r.1, r.2, r.3)).collect(),
        )
    }

    fn build(omega_ghz: Vec<f64>, rates: Vec<(f64, f64, f64)>) -> Result<Self, NoiseError> {
        if omega_ghz.is_empty() {
            return Err(NoiseError::InsufficientData { need: 1, got: 0 });
        }
        let mut idx: Vec<usize> = (0..omega_ghz.len()).collect();
        idx.sort_by(|&a, &b| omega_ghz[a].partial_cmp(&omega_ghz[b]).unwrap());
        Ok(CoherenceCurves {
            omega_ghz: idx.iter().map(|&i| omega_ghz[i]).collect(),
            rates: idx.iter().map(|&i| rates[i]).collect(),
        })
    }

    pub fn domain_ghz(&self) -> (f64, f64) {
        (self.omega_ghz[0], *self.omega_ghz.last().unwrap())
    }

    /// Interpolated (gamma1, gamma_phi1, gamma_phi2) at a coupler frequency.
    pub fn rates_at(&self, w: f64) -> Result<(f64, f64, f64), NoiseError> {
        let (lo, hi) = self.domain_ghz();
        if w < lo - 1e-9 || w > hi + 1e-9 {
            return Err(NoiseError::RangeNotCovered { omega_ghz: w });
        }
        let j = match self
            .omega_ghz
            .binary_search_by(|x| x.partial_cmp(&w).unwrap())
        {
            Ok(i) => return Ok(self.rates[i]),
            Err(0) => return Ok(self.rates[0]),
            Err(i) if i == self.omega_ghz.len() => return Ok(*self.rates.last().unwrap()),
            Err(i) => i,
        };
        let (w0, w1) = (self.omega_ghz[j - 1], self.omega_ghz[j]);
        let u = if w1 > w0 { (w - w0) / (w1 - w0) } else { 0.0 };
        let (a0, b0, c0) = self.rates[j - 1];
        let (a1, b1, c1) = self.rates[j];
        Ok((
            a0 + u * (a1 - a0),
            b0 + u * (b1 - b0),
            c0 + u * (c1 - c0),
        ))
    }
}

/// Effective coherence times over a pulse trajectory given as uniformly
/// spaced coupler-frequency samples: linear channels average their rates in
/// time, the quasi-static channel averages in quadrature.
pub fn effective_times(
    curves: &CoherenceCurves,
    trajectory_ghz: &[f64],
) -> Result<(f64, f64, f64), NoiseError> {
    if trajectory_ghz.is_empty() {
        return Err(NoiseError::InsufficientData { need: 1, got: 0 });
    }
    let mut g1 = 0.0;
    let mut gp1 = 0.0;
    let mut gp2_sq = 0.0;
    for &w in trajectory_ghz {
        let (a, b, c) = curves.rates_at(w)?;
        g1 += a;
        gp1 += b;
        gp2_sq += c * c;
    }
    let n = trajectory_ghz.len() as f64;
    Ok((
        n / g1,
        n / gp1,
        (n / gp2_sq).sqrt(),
    ))
}

/// Which error-per-gate prefactor to use: the main-text 2/5 per qubit, or
/// the generalized-benchmarking 4/5 that the appendix derivation implies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitConvention {
    MainText,
    Appendix,
}

/// Coherence-limited CZ error from each qubit's effective times (us) and
/// the gate duration (ns): sum over both qubits of
/// pref * (tau/T1 + tau/T_phi1 + (tau/T_phi2)^2).
pub fn coherence_limit(
    q1_times_us: (f64, f64, f64),
    q2_times_us: (f64, f64, f64),
    tau_ns: f64,
    convention: LimitConvention,
) -> f64 {
    let pref = match convention {
        LimitConvention::MainText => 0.4,
        LimitConvention::Appendix => 0.8,
    };
    let tau = tau_ns * 1e-3;
    let mut eps = 0.0;
    for (t1, tp1, tp2) in [q1_times_us, q2_times_us] {
        eps += pref * (tau / t1 + tau / tp1 + (tau / tp2).powi(2));
    }
    eps
}

/// Effective times for both qubits, the gate duration, and the resulting
/// error floor, bundled for reporting.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoherenceBudget {
    pub q1_t1_us: f64,
    pub q1_tphi1_us: f64,
    pub q1_tphi2_us: f64,
    pub q2_t1_us: f64,
    pub q2_tphi1_us: f64,
    pub q2_tphi2_us: f64,
    pub tau_ns: f64,
    pub epsilon_limit: f64,
}

impl CoherenceBudget {
    pub fn evaluate(
        q1_times_us: (f64, f64, f64),
        q2_times_us: (f64, f64, f64),
        tau_ns: f64,
        convention: LimitConvention,
    ) -> Self {
        CoherenceBudget {
            q1_t1_us: q1_times_us.0,
            q1_tphi1_us: q1_times_us.1,
            q1_tphi2_us: q1_times_us.2,
            q2_t1_us: q2_times_us.0,
            q2_tphi1_us: q2_times_us.1,
            q2_tphi2_us: q2_times_us.2,
            tau_ns,
            epsilon_limit: coherence_limit(q1_times_us, q2_times_us, tau_ns, convention),
        }
    }
}

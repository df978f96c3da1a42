//! Config file schema. One JSON document drives every subcommand; sections
//! that a command does not use are ignored by it but still validated.

use std::fs;
use std::path::{Path, PathBuf};

use coupler_core::gatesim::GateConfig;
use coupler_core::hammod::SystemParams;
use coupler_core::netsim::CrosstalkGeometryCaps;
use coupler_core::noisemod::{LimitConvention, ModeCoherence, NoiseError};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Top-level config. Exactly one of `netlist` / `device` describes the
/// device; everything else has defaults and is echoed back on serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    /// Path to a lumped capacitance netlist (JSON, nodes + capacitors in fF).
    /// Relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub netlist: Option<PathBuf>,
    /// Direct Hamiltonian parameters, used by all spectrum-based commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DirectParams>,
    #[serde(default)]
    pub reduce: ReduceSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub crosstalk: CrosstalkSection,
    #[serde(default)]
    pub zz: ZzSection,
    /// Calibration knobs passed straight to the gate calibrator.
    #[serde(default)]
    pub gate: GateConfig,
    #[serde(default)]
    pub gate_sim: GateSimSection,
    #[serde(default)]
    pub coherence: CoherenceSection,
    #[serde(default)]
    pub rb: RbSection,
    /// Output directory when --out is not given. Relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Seed for stochastic commands when --seed is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Transmon frequencies/anharmonicities (GHz) and coupling rates (MHz),
/// quoted at the listed coupler frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectParams {
    pub f1_ghz: f64,
    pub alpha1_ghz: f64,
    pub f2_ghz: f64,
    pub alpha2_ghz: f64,
    pub fc_ghz: f64,
    pub alphac_ghz: f64,
    pub g1c_mhz: f64,
    pub g2c_mhz: f64,
    pub g12_mhz: f64,
    /// Oscillator levels kept per mode in the Hamiltonian.
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_levels() -> usize {
    3
}

impl DirectParams {
    pub fn to_system(self) -> SystemParams {
        SystemParams::from_frequencies(
            self.f1_ghz,
            self.alpha1_ghz,
            self.f2_ghz,
            self.alpha2_ghz,
            self.fc_ghz,
            self.alphac_ghz,
            self.g1c_mhz,
            self.g2c_mhz,
            self.g12_mhz,
            self.levels,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReduceSection {
    /// Node names of (qubit 1, island D, island E, qubit 2) in the netlist.
    pub ports: [String; 4],
}

impl Default for ReduceSection {
    fn default() -> Self {
        ReduceSection {
            ports: ["Q1", "D", "E", "Q2"].map(String::from),
        }
    }
}

/// Qubit-spacing range for the distance sweep. The extender geometry itself
/// is the built-in template; only the sweep range is configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub d_lo_um: f64,
    pub d_hi_um: f64,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            d_lo_um: 1960.0,
            d_hi_um: 2960.0,
            points: 26,
        }
    }
}

/// Capacitances (fF) from each component to a transmission line crossing the
/// structure, plus the qubit drive-line reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrosstalkSection {
    pub c_q1_tl_ff: f64,
    pub c_q2_tl_ff: f64,
    pub c_cc_tl_ff: f64,
    pub c_cf_tl_ff: f64,
    pub c_q_dl_ff: f64,
    pub x_cross_um: f64,
    /// Optional next-nearest-neighbor coupling estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nnn: Option<NnnSection>,
}

impl Default for CrosstalkSection {
    fn default() -> Self {
        CrosstalkSection {
            c_q1_tl_ff: 0.012,
            c_q2_tl_ff: 0.012,
            c_cc_tl_ff: 0.05,
            c_cf_tl_ff: 0.02,
            c_q_dl_ff: 0.12,
            x_cross_um: 0.0,
            nnn: None,
        }
    }
}

impl CrosstalkSection {
    pub fn to_caps(&self) -> CrosstalkGeometryCaps {
        CrosstalkGeometryCaps {
            c_q1_tl: self.c_q1_tl_ff,
            c_q2_tl: self.c_q2_tl_ff,
            c_cc_tl: self.c_cc_tl_ff,
            c_cf_tl: self.c_cf_tl_ff,
            c_q_dl: self.c_q_dl_ff,
            x_cross_um: self.x_cross_um,
        }
    }
}

/// Cross-coupling cap between next-nearest qubits and their shunts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnnSection {
    pub c13_ff: f64,
    pub cs1_ff: f64,
    pub cs3_ff: f64,
    pub f_ghz: f64,
}

/// ZZ map grid and ZZ-curve fit inputs. `data` points at a measured
/// (omega_c_GHz, zeta_MHz) CSV; without it the fit runs on a synthetic curve
/// generated from the device itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZzSection {
    pub map_wc_lo_ghz: f64,
    pub map_wc_hi_ghz: f64,
    pub map_wc_points: usize,
    pub map_delta_lo_mhz: f64,
    pub map_delta_hi_mhz: f64,
    pub map_delta_points: usize,
    /// Rescale coupling rates with sqrt of the mode frequencies as the
    /// coupler (or qubit 2) is tuned.
    pub rescale: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub fit_lo_ghz: f64,
    pub fit_hi_ghz: f64,
    /// Synthetic-curve length when no data file is given.
    pub fit_points: usize,
    /// Starting guess for (g1c, g2c, g12) in MHz.
    pub fit_seed_g_mhz: [f64; 3],
}

impl Default for ZzSection {
    fn default() -> Self {
        ZzSection {
            map_wc_lo_ghz: 2.90,
            map_wc_hi_ghz: 3.80,
            map_wc_points: 46,
            map_delta_lo_mhz: -300.0,
            map_delta_hi_mhz: 300.0,
            map_delta_points: 25,
            rescale: true,
            data: None,
            fit_lo_ghz: 2.90,
            fit_hi_ghz: 3.55,
            fit_points: 20,
            fit_seed_g_mhz: [45.0, 45.0, 3.0],
        }
    }
}

/// Fixed operating point for gate-sim. When both knobs are given the command
/// skips calibration and propagates that pulse directly; otherwise it runs
/// the full calibration first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateSimSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_op_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_ns: Option<f64>,
    pub dt_ns: f64,
}

impl Default for GateSimSection {
    fn default() -> Self {
        GateSimSection {
            theta_op_rad: None,
            tau_ns: None,
            dt_ns: 0.02,
        }
    }
}

/// Uncoupled coherence times in us; a value <= 0 disables that channel
/// (infinite time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTimes {
    pub t1_us: f64,
    pub tphi1_us: f64,
    pub tphi2_us: f64,
}

impl ModeTimes {
    pub fn to_coherence(self) -> Result<ModeCoherence, NoiseError> {
        let inv = |t: f64| if t > 0.0 && t.is_finite() { 1.0 / t } else { 0.0 };
        ModeCoherence::from_rates(inv(self.t1_us), inv(self.tphi1_us), inv(self.tphi2_us))
    }
}

/// Hybridized-coherence sweep: uncoupled times for the three modes and the
/// coupler-frequency grid. The coupler's times come from `coupler_curves`
/// (CSV: omega_GHz, T1_us, Tphi1_us, Tphi2_us) when given, else from the
/// constant `coupler` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoherenceSection {
    pub q1: ModeTimes,
    pub q2: ModeTimes,
    pub coupler: ModeTimes,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupler_curves: Option<PathBuf>,
    pub wc_lo_ghz: f64,
    pub wc_hi_ghz: f64,
    pub points: usize,
    pub rescale: bool,
    /// Optional gate-error floor evaluation from effective times.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSection>,
}

impl Default for CoherenceSection {
    fn default() -> Self {
        CoherenceSection {
            q1: ModeTimes {
                t1_us: 15.0,
                tphi1_us: 60.0,
                tphi2_us: 25.0,
            },
            q2: ModeTimes {
                t1_us: 18.0,
                tphi1_us: 60.0,
                tphi2_us: 25.0,
            },
            coupler: ModeTimes {
                t1_us: 40.0,
                tphi1_us: 30.0,
                tphi2_us: 2.0,
            },
            coupler_curves: None,
            wc_lo_ghz: 3.00,
            wc_hi_ghz: 3.80,
            points: 41,
            rescale: true,
            budget: None,
        }
    }
}

/// Coherence-limited gate error from six effective times and a duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub q1_times_us: (f64, f64, f64),
    pub q2_times_us: (f64, f64, f64),
    pub tau_ns: f64,
    #[serde(default = "default_convention")]
    pub convention: LimitConvention,
}

fn default_convention() -> LimitConvention {
    LimitConvention::MainText
}

/// Randomized-benchmarking run: sequence lengths, randomizations per length,
/// interleaving depths (0 = reference), and the error model. Depolarizing
/// strengths are channel weights; the RB-visible error per gate is 3/4 of
/// the weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbSection {
    pub lengths: Vec<usize>,
    pub randomizations: usize,
    pub interleave_counts: Vec<usize>,
    pub clifford_depolarizing: f64,
    pub cz_depolarizing: f64,
    /// Coherent over-rotation of the interleaved CZ phase instead of
    /// depolarizing it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cz_coherent_rad: Option<f64>,
    /// Interleave the calibrated gate's propagator (run through gate-cal's
    /// pipeline) instead of an ideal-but-depolarized CZ.
    pub use_calibrated_cz: bool,
    /// Finite measurement shots per sequence; omitted = exact survivals.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    /// Decay CSV consumed by rb-fit, as emitted by rb-sim.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
}

impl Default for RbSection {
    fn default() -> Self {
        RbSection {
            lengths: vec![1, 3, 6, 10, 16, 24, 35, 50, 70, 100],
            randomizations: 30,
            interleave_counts: vec![0, 1],
            clifford_depolarizing: 0.0185,
            cz_depolarizing: 1.9e-3 * 4.0 / 3.0,
            cz_coherent_rad: None,
            use_calibrated_cz: false,
            shots: None,
            data: None,
        }
    }
}

/// Parse and validate a config file. Syntax and type errors carry the
/// line/column they occurred at; unknown fields and semantic violations come
/// back as one validation error listing everything found.
pub fn parse_device_config(path: &Path) -> Result<DeviceConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg: DeviceConfig = serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        if msg.contains("unknown field") {
            CliError::Validation {
                violations: vec![msg],
            }
        } else {
            CliError::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                column: e.column(),
                detail: msg,
            }
        }
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    validate(&cfg, base)?;
    Ok(cfg)
}

/// Collect every violation instead of stopping at the first.
pub fn validate(cfg: &DeviceConfig, base: &Path) -> Result<(), CliError> {
    let mut v = Vec::new();
    match (&cfg.netlist, &cfg.device) {
        (None, None) => v.push("one of `netlist` or `device` is required".to_string()),
        (Some(_), Some(_)) => {
            v.push("`netlist` and `device` are mutually exclusive; give exactly one".to_string())
        }
        _ => {}
    }
    let mut check_file = |key: &str, p: &Option<PathBuf>| {
        if let Some(p) = p {
            let full = resolve(base, p);
            if !full.is_file() {
                v.push(format!("`{key}` file not found: {}", full.display()));
            }
        }
    };
    check_file("netlist", &cfg.netlist);
    check_file("zz.data", &cfg.zz.data);
    check_file("coherence.coupler_curves", &cfg.coherence.coupler_curves);
    check_file("rb.data", &cfg.rb.data);

    if cfg.sweep.points < 2 {
        v.push("`sweep.points` must be at least 2".to_string());
    }
    if !(cfg.sweep.d_lo_um < cfg.sweep.d_hi_um) {
        v.push("`sweep.d_lo_um` must be below `sweep.d_hi_um`".to_string());
    }
    if cfg.zz.map_wc_points < 2 || cfg.zz.map_delta_points < 1 {
        v.push("`zz` map grid needs at least 2 coupler points and 1 detuning point".to_string());
    }
    if cfg.zz.fit_points < 4 {
        v.push("`zz.fit_points` must be at least 4".to_string());
    }
    if !(cfg.zz.fit_lo_ghz < cfg.zz.fit_hi_ghz) {
        v.push("`zz.fit_lo_ghz` must be below `zz.fit_hi_ghz`".to_string());
    }
    if cfg.gate_sim.theta_op_rad.is_some() != cfg.gate_sim.tau_ns.is_some() {
        v.push("`gate_sim.theta_op_rad` and `gate_sim.tau_ns` must be given together".to_string());
    }
    if !(cfg.gate_sim.dt_ns > 0.0) {
        v.push("`gate_sim.dt_ns` must be positive".to_string());
    }
    if cfg.coherence.points < 2 || !(cfg.coherence.wc_lo_ghz < cfg.coherence.wc_hi_ghz) {
        v.push("`coherence` grid needs wc_lo_ghz < wc_hi_ghz and at least 2 points".to_string());
    }
    if let Some(b) = &cfg.coherence.budget {
        let ts = [
            b.q1_times_us.0,
            b.q1_times_us.1,
            b.q1_times_us.2,
            b.q2_times_us.0,
            b.q2_times_us.1,
            b.q2_times_us.2,
        ];
        if !ts.iter().all(|t| *t > 0.0 && t.is_finite()) {
            v.push("`coherence.budget` times must be positive and finite".to_string());
        }
        if !(b.tau_ns > 0.0) {
            v.push("`coherence.budget.tau_ns` must be positive".to_string());
        }
    }
    if cfg.rb.lengths.is_empty() {
        v.push("`rb.lengths` must not be empty".to_string());
    }
    if cfg.rb.randomizations == 0 {
        v.push("`rb.randomizations` must be at least 1".to_string());
    }
    if cfg.rb.interleave_counts.is_empty() {
        v.push("`rb.interleave_counts` must not be empty".to_string());
    }
    if cfg.rb.cz_coherent_rad.is_some() && cfg.rb.use_calibrated_cz {
        v.push(
            "`rb.cz_coherent_rad` and `rb.use_calibrated_cz` are mutually exclusive".to_string(),
        );
    }
    if cfg.rb.shots == Some(0) {
        v.push("`rb.shots` must be at least 1 when given".to_string());
    }

    if v.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation { violations: v })
    }
}

/// Resolve a possibly-relative config path against the config directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

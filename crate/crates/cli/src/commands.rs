//! One function per subcommand. Each returns the artifact paths it wrote;
//! all numeric output goes through the shared CSV/JSON writers so reruns are
//! byte-identical.

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use coupler_core::captools::{
    eliminate_com, inverse_cap_params, remove_cross_island, BarredCircuit, EffectiveCapMatrix,
    InverseCapParams, NetlistDoc, ReducedCircuit,
};
use coupler_core::gatesim::{
    calibrate_cz, cz_metrics, evolve, flux_pulse, FluxMap, FluxPulse, ThetaMap,
};
use coupler_core::hammod::{
    build_hamiltonian, dressed_spectrum, fit_zz_couplings, zz_grid, zz_vs_coupler,
    DressedSpectrum, SystemParams,
};
use coupler_core::netsim::{coupling_vs_distance, crosstalk_ratios, nnn_coupling, DeviceTemplate};
use coupler_core::noisemod::{hybrid_rates, CoherenceBudget, CoherenceCurves, ModeCoherence};
use coupler_core::rbkit::{
    fit_decay, gate_to_cz_block, interleaved_analysis, simulate_decay, simulate_decay_sampled,
    synth_sequences, CliffordGroup, DecayFit, DecayRecord, ErrorModel, InterleavedResult,
};
use serde::Serialize;

use crate::config::{resolve, DeviceConfig};
use crate::{cmd_err, linspace, num, write_csv, write_json, CliError, CommandKind, RunContext};

/// Hamiltonian parameters for commands that need them. A capacitance netlist
/// alone cannot supply junction energies, so those commands insist on the
/// `device` section.
fn system_params(cfg: &DeviceConfig, cmd: CommandKind) -> Result<SystemParams, CliError> {
    cfg.device.map(|d| d.to_system()).ok_or_else(|| {
        cmd_err(
            cmd,
            "needs the `device` section; a netlist fixes capacitances but not junction energies",
        )
    })
}

fn read_input(path: &PathBuf, ctx: &RunContext) -> Result<(PathBuf, String), CliError> {
    let full = resolve(&ctx.config_dir, path);
    let text = fs::read_to_string(&full).map_err(|source| CliError::Io {
        path: full.clone(),
        source,
    })?;
    Ok((full, text))
}

/// Map a reordered 4-port network (qubit 1, island D, island E, qubit 2)
/// onto the lumped two-island coupler circuit. Maxwell row sums give the
/// shunts to ground; negated off-diagonals the branch capacitors.
fn reduced_from_ports(net: &coupler_core::captools::CapacitanceNetwork) -> ReducedCircuit {
    let c = net.maxwell();
    let ground = |i: usize| c.row(i).sum();
    ReducedCircuit {
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
    }
}

#[derive(Serialize)]
struct ReduceReport {
    units: &'static str,
    ports: [String; 4],
    reduced: ReducedCircuit,
    effective: EffectiveCapMatrix,
    barred: BarredCircuit,
    transmon: InverseCapParams,
}

pub fn reduce(cfg: &DeviceConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    const CMD: CommandKind = CommandKind::Reduce;
    let Some(rel) = &cfg.netlist else {
        return Err(cmd_err(CMD, "needs a `netlist` file"));
    };
    let (path, text) = read_input(rel, ctx)?;
    let doc: NetlistDoc = serde_json::from_str(&text)
        .map_err(|e| cmd_err(CMD, format!("{}: {e}", path.display())))?;
    let net = doc
        .into_network()
        .map_err(|e| cmd_err(CMD, format!("{}: {e}", path.display())))?;
    let ports: Vec<&str> = cfg.reduce.ports.iter().map(String::as_str).collect();
    let four = net
        .kron_reduce(&ports)
        .and_then(|n| n.reordered(&ports))
        .map_err(|e| cmd_err(CMD, e))?;
    let rc = reduced_from_ports(&four);
    let eff = eliminate_com(&rc).map_err(|e| cmd_err(CMD, e))?;
    let barred = remove_cross_island(&rc).map_err(|e| cmd_err(CMD, e))?;
    let transmon = inverse_cap_params(&eff).map_err(|e| cmd_err(CMD, e))?;
    let report = ReduceReport {
        units: "capacitances fF, charging energies GHz",
        ports: cfg.reduce.ports.clone(),
        reduced: rc,
        effective: eff,
        barred,
        transmon,
    };
    Ok(vec![write_json(&ctx.out_dir, "reduce.json", &report)?])
}

pub fn distance_sweep(cfg: &DeviceConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    const CMD: CommandKind = CommandKind::DistanceSweep;
    let tmpl = DeviceTemplate::default();
    let ds = linspace(cfg.sweep.d_lo_um, cfg.sweep.d_hi_um, cfg.sweep.points);
    let pts = coupling_vs_distance(&tmpl, &ds).map_err(|e| cmd_err(CMD, e))?;
    let rows: Vec<Vec<String>> = pts
        .iter()
        .map(|p| {
            vec![
                num(p.d_qq_um),
                num(p.g1c_mhz),
                num(p.g2c_mhz),
                num(p.g12_mhz),
            ]
        })
        .collect();
    Ok(vec![write_csv(
        &ctx.out_dir,
        "distance_sweep.csv",
        &["d_qq_um", "g1c_MHz", "g2c_MHz", "g12_MHz"],
        &rows,
    )?])
}

#[derive(Serialize)]
struct CrosstalkReport {
    x_cross_um: f64,
    r_q1: f64,
    r_q2: f64,
    r_coupler: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    nnn_khz: Option<f64>,
}

pub fn crosstalk(cfg: &DeviceConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    const CMD: CommandKind = CommandKind::Crosstalk;
    let caps = cfg.crosstalk.to_caps();
    let (r_q1, r_q2, r_coupler) = crosstalk_ratios(&caps).map_err(|e| cmd_err(CMD, e))?;
    let nnn_khz = cfg
        .crosstalk
        .nnn
        .map(|n| nnn_coupling(n.c13_ff, n.cs1_ff, n.cs3_ff, n.f_ghz));
    let report = CrosstalkReport {
        x_cross_um: cfg.crosstalk.x_cross_um,
        r_q1,
        r_q2,
        r_coupler,
        nnn_khz,
    };
    Ok(vec![write_json(&ctx.out_dir, "crosstalk.json", &report)?])
}

pub fn zzmap(cfg: &DeviceConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let s = system_params(cfg, CommandKind::Zzmap)?;
    let z = &cfg.zz;
    let wcs = linspace(z.map_wc_lo_ghz, z.map_wc_hi_ghz, z.map_wc_points);
    let deltas = linspace(z.map_delta_lo_mhz, z.map_delta_hi_mhz, z.map_delta_points);
    let grid = zz_grid(&s, &deltas, &wcs, z.rescale);
    let rows: Vec<Vec<String>> = grid
        .iter()
        .map(|p| {
            vec![
                num(p.omega_c_ghz),
                num(p.delta_mhz),
                // cells where dressed labeling collapses carry no value
                p.zeta_mhz.map_or_else(|| "nan".to_string(), num),
            ]
        })
        .collect();
    Ok(vec![write_csv(
        &ctx.out_dir,
        "zz_map.csv",
        &["omega_c_GHz", "delta_MHz", "zeta_MHz"],
        &rows,
    )?])
}

#[derive(Serialize)]
struct ZzFitReport {
    g1c_mhz: f64,
    g2c_mhz: f64,
    g12_mhz: f64,
    sigma_g1c_mhz: f64,
    sigma_g2c_mhz: f64,
    sigma_g12_mhz: f64,
    ssr_mhz2: f64,
    iterations: usize,
    points: usize,
    window_ghz: [f64; 2],
    source: &'static str,
}

pub fn zzfit(cfg: &DeviceConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    const CMD: CommandKind = CommandKind::Zzfit;
    let s = system_params(cfg, CMD)?;
    let z = &cfg.zz;
    let (curve, source) = match &z.data {
        Some(rel) => {
            let (path, text) = read_input(rel, ctx)?;
            (read_zz_curve(&path, &text)?, "file")
        }
        None => {
            let fcs = linspace(z.fit_lo_ghz, z.fit_hi_ghz, z.fit_points);
            let curve = zz_vs_coupler(&s, &fcs, z.rescale).map_err(|e| cmd_err(CMD, e))?;
            (curve, "synthetic")
        }
    };
    let windowed: Vec<(f64, f64)> = curve
        .into_iter()
        .filter(|&(fc, _)| fc >= z.fit_lo_ghz - 1e-12 && fc <= z.fit_hi_ghz + 1e-12)
        .collect();
    let mut fixed = s;
    fixed.g1c_mhz = z.fit_seed_g_mhz[0];
    fixed.g2c_mhz = z.fit_seed_g_mhz[1];
    fixed.g12_mhz = z.fit_seed_g_mhz[2];
    let fit = fit_zz_couplings(&windowed, &fixed, z.rescale).map_err(|e| cmd_err(CMD, e))?;
    let report = ZzFitReport {
        g1c_mhz: fit.g1c_mhz,
        g2c_mhz: fit.g2c_mhz,
        g12_mhz: fit.g12_mhz,
        sigma_g1c_mhz: fit.sigma_mhz[0],
        sigma_g2c_mhz: fit.sigma_mhz[1],
        sigma_g12_mhz: fit.sigma_mhz[2],
        ssr_mhz2: fit.ssr_mhz2,
        iterations: fit.iterations,
        points: windowed.len(),
        window_ghz: [z.fit_lo_ghz, z.fit_hi_ghz],
        source,
    };
    Ok(vec![write_json(&ctx.out_dir, "zz_fit.json", &report)?])
}

fn read_zz_curve(path: &PathBuf, text: &str) -> Result<Vec<(f64, f64)>, CliError> {
    const CMD: CommandKind = CommandKind::Zzfit;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let head = rdr
        .headers()
        .map_err(|e| cmd_err(CMD, format!("{}: {e}", path.display())))?;
    if head != vec!["omega_c_GHz", "zeta_MHz"] {
        return Err(cmd_err(
            CMD,
            format!(
                "{}: expected header omega_c_GHz,zeta_MHz, got {:?}",
                path.display(),
                head
            ),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| cmd_err(CMD, format!("{}: {e}", path.display())))?;
        let field = |j: usize| -> Result<f64, CliError> {
            rec.get(j)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| cmd_err(CMD, format!("{}: bad row {}", path.display(), i + 2)))
        };
        out.push((field(0)?, field(1)?));
    }
    Ok(out)
}

#[derive(Serialize)]
struct GateCalReport {
    wc_op_ghz: f64,
    theta_op_rad: f64,
    operation_flux_phi0: f64,
    interaction_ns: f64,
    pad_ns: f64,
    total_ns: f64,
    phi11_rad: f64,
    phase_error_rad: f64,
    leakage_prob: f64,
    phi10_rad: f64,
    phi01_rad: f64,
    objective: f64,
    evaluations: usize,
}

pub fn gate_cal(cfg: &DeviceConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    const CMD: CommandKind = CommandKind::GateCal;
    let s = system_params(cfg, CMD)?;
    let cal = calibrate_cz(&s, &cfg.gate).map_err(|e| cmd_err(CMD, e))?;
    let (phi10, phi01) = cal.result.single_qubit_phases;
    let report = GateCalReport {
        wc_op_ghz: cal.wc_op_ghz,
        theta_op_rad: cal.theta_op,
        operation_flux_phi0: cal.operation_flux,
        interaction_ns: cal.interaction_ns,
        pad_ns: cal.pulse.pad_ns,
        total_ns: cal.pulse.total_ns(),
        phi11_rad: cal.result.phi11_rad,
        phase_error_rad: wrap_phase(cal.result.phi11_rad - PI),
        leakage_prob: cal.result.leakage,
        phi10_rad: phi10,
        phi01_rad: phi01,
        objective: cal.objective,
        evaluations: cal.evaluations,
    };
    Ok(vec![write_json(&ctx.out_dir, "gate_cal.json", &report)?])
}

fn wrap_phase(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    } else if y < -PI {
        y += 2.0 * PI;
    }
    y
}

/// Idle dressed spectrum in the same frame the calibrator scores against:
/// the base point of the tabulated angle branch.
fn idle_spectrum(
    s: &SystemParams,
    cfg: &DeviceConfig,
    cmd: CommandKind,
) -> Result<(ThetaMap, FluxMap, DressedSpectrum), CliError> {
    let g = &cfg.gate;
    let tm = ThetaMap::build(s, g.table_lo_ghz, g.table_hi_ghz, g.table_points)
        .map_err(|e| cmd_err(cmd, e))?;
    let fm = FluxMap::for_coupler(s, g.wc_max_ghz);
    let s_base = s.with_coupler_freq(tm.base_wc(), true);
    let idle =
        dressed_spectrum(&build_hamiltonian(&s_base), &s_base).map_err(|e| cmd_err(cmd, e))?;
    Ok((tm, fm, idle))
}

#[derive(Serialize)]
struct GateSimReport {
    calibrated: bool,
    theta_op_rad: f64,
    interaction_ns: f64,
    dt_ns: f64,
    total_ns: f64,
    samples: usize,
    phi11_rad: f64,
    phase_error_rad: f64,
    leakage_prob: f64,
    phi10_rad: f64,
    phi01_rad: f64,
}

pub fn gate_sim(cfg: &DeviceConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    const CMD: CommandKind = CommandKind::GateSim;
    let s = system_params(cfg, CMD)?;
    let (calibrated, theta_op, pulse, result) =
        match (cfg.gate_sim.theta_op_rad, cfg.gate_sim.tau_ns) {
            (Some(theta), Some(tau)) => {
                let (tm, fm, idle) = idle_spectrum(&s, cfg, CMD)?;
                let dt = cfg.gate_sim.dt_ns;
                let p = flux_pulse(&tm, &fm, theta, tau, cfg.gate.pad_ns, dt, cfg.gate.lambda1)
                    .map_err(|e| cmd_err(CMD, e))?;
                let u = evolve(&s, &fm, &p);
                let m = cz_metrics(&u, &idle, p.total_ns());
                (false, theta, p, m)
            }
            _ => {
                let cal = calibrate_cz(&s, &cfg.gate).map_err(|e| cmd_err(CMD, e))?;
                (true, cal.theta_op, cal.pulse, cal.result)
            }
        };
    let (phi10, phi01) = result.single_qubit_phases;
    let report = GateSimReport {
        calibrated,
        theta_op_rad: theta_op,
        interaction_ns: pulse.interaction_ns,
        dt_ns: pulse.dt_ns,
        total_ns: pulse.total_ns(),
        samples: pulse.samples.len(),
        phi11_rad: result.phi11_rad,
        phase_error_rad: wrap_phase(result.phi11_rad - PI),
        leakage_prob: result.leakage,
        phi10_rad: phi10,
        phi01_rad: phi01,
    };
    let json = write_json(&ctx.out_dir, "gate_sim.json", &report)?;
    let csv = write_pulse_csv(&pulse, ctx)?;
    Ok(vec![json, csv])
}

/// Flux samples live on midpoints of the uniform grid.
fn write_pulse_csv(p: &FluxPulse, ctx: &RunContext) -> Result<PathBuf, CliError> {
    let rows: Vec<Vec<String>> = p
        .samples
        .iter()
        .enumerate()
        .map(|(k, &f)| vec![num((k as f64 + 0.5) * p.dt_ns), num(f)])
        .collect();
    write_csv(
        &ctx.out_dir,
        "gate_pulse.csv",
        &["t_ns", "flux_phi0"],
        &rows,
    )
}

pub fn coherence(cfg: &DeviceConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    const CMD: CommandKind = CommandKind::Coherence;
    let s = system_params(cfg, CMD)?;
    let co = &cfg.coherence;
    let q1 = co.q1.to_coherence().map_err(|e| cmd_err(CMD, e))?;
    let q2 = co.q2.to_coherence().map_err(|e| cmd_err(CMD, e))?;
    let curves = match &co.coupler_curves {
        Some(rel) => {
            let (path, text) = read_input(rel, ctx)?;
            Some(read_coupler_curves(&path, &text)?)
        }
        None => None,
    };
    let constant_coupler = co.coupler.to_coherence().map_err(|e| cmd_err(CMD, e))?;

    let mut rows = Vec::new();
    for wc in linspace(co.wc_lo_ghz, co.wc_hi_ghz, co.points) {
        let coupler = match &curves {
            Some(c) => {
                let (a, b, g) = c.rates_at(wc).map_err(|e| cmd_err(CMD, e))?;
                ModeCoherence::from_rates(a, b, g).map_err(|e| cmd_err(CMD, e))?
            }
            None => constant_coupler,
        };
        let at = s.with_coupler_freq(wc, co.rescale);
        let spec = match dressed_spectrum(&build_hamiltonian(&at), &at) {
            Ok(sp) => sp,
            Err(e) => {
                // labeling collapses at mode crossings; skip those grid points
                log::warn!("coherence: skipping wc = {wc} GHz: {e}");
                continue;
            }
        };
        let p = spec.participation;
        let uncoupled = [q1, coupler, q2];
        let d1 = hybrid_rates(&[p[(0, 0)], p[(0, 1)], p[(0, 2)]], &uncoupled)
            .map_err(|e| cmd_err(CMD, e))?;
        let d2 = hybrid_rates(&[p[(2, 0)], p[(2, 1)], p[(2, 2)]], &uncoupled)
            .map_err(|e| cmd_err(CMD, e))?;
        rows.push(vec![
            num(wc),
            num(d1.t1_us()),
            num(d1.t_phi1_us()),
            num(d1.t_phi2_us()),
            num(d2.t1_us()),
            num(d2.t_phi1_us()),
            num(d2.t_phi2_us()),
        ]);
    }
    let csv = write_csv(
        &ctx.out_dir,
        "coherence_vs_coupler.csv",
        &[
            "omega_c_GHz",
            "q1_T1_us",
            "q1_Tphi1_us",
            "q1_Tphi2_us",
            "q2_T1_us",
            "q2_Tphi1_us",
            "q2_Tphi2_us",
        ],
        &rows,
    )?;
    let mut artifacts = vec![csv];
    if let Some(b) = &co.budget {
        let budget = CoherenceBudget::evaluate(b.q1_times_us, b.q2_times_us, b.tau_ns, b.convention);
        artifacts.push(write_json(&ctx.out_dir, "coherence_budget.json", &budget)?);
    }
    Ok(artifacts)
}

fn read_coupler_curves(path: &PathBuf, text: &str) -> Result<CoherenceCurves, CliError> {
    const CMD: CommandKind = CommandKind::Coherence;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let head = rdr
        .headers()
        .map_err(|e| cmd_err(CMD, format!("{}: {e}", path.display())))?;
    if head != vec!["omega_GHz", "T1_us", "Tphi1_us", "Tphi2_us"] {
        return Err(cmd_err(
            CMD,
            format!(
                "{}: expected header omega_GHz,T1_us,Tphi1_us,Tphi2_us, got {:?}",
                path.display(),
                head
            ),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| cmd_err(CMD, format!("{}: {e}", path.display())))?;
        let field = |j: usize| -> Result<f64, CliError> {
            rec.get(j)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| cmd_err(CMD, format!("{}: bad row {}", path.display(), i + 2)))
        };
        rows.push((field(0)?, field(1)?, field(2)?, field(3)?));
    }
    CoherenceCurves::from_time_rows(&rows).map_err(|e| cmd_err(CMD, format!("{}: {e}", path.display())))
}

fn rb_error_model(cfg: &DeviceConfig, cmd: CommandKind) -> Result<ErrorModel, CliError> {
    let rb = &cfg.rb;
    if rb.use_calibrated_cz {
        let s = system_params(cfg, cmd)?;
        let cal = calibrate_cz(&s, &cfg.gate).map_err(|e| cmd_err(cmd, e))?;
        let (_, _, idle) = idle_spectrum(&s, cfg, cmd)?;
        let block = gate_to_cz_block(&cal.result, &idle).map_err(|e| cmd_err(cmd, e))?;
        return ErrorModel::leaky_cz(rb.clifford_depolarizing, block).map_err(|e| cmd_err(cmd, e));
    }
    if let Some(rad) = rb.cz_coherent_rad {
        return ErrorModel::coherent_cz(rb.clifford_depolarizing, rad).map_err(|e| cmd_err(cmd, e));
    }
    ErrorModel::depolarizing(rb.clifford_depolarizing, rb.cz_depolarizing)
        .map_err(|e| cmd_err(cmd, e))
}

const RB_HEADER: [&str; 4] = [
    "m_cliffords",
    "n_interleaved_cz",
    "mean_survival_prob",
    "std_survival_prob",
];

pub fn rb_sim(cfg: &DeviceConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    const CMD: CommandKind = CommandKind::RbSim;
    let seed = ctx.seed.or(cfg.seed).ok_or_else(|| {
        cmd_err(CMD, "needs a seed: pass --seed or set `seed` in the config")
    })?;
    let rb = &cfg.rb;
    let group = CliffordGroup::standard();
    let model = rb_error_model(cfg, CMD)?;
    let mut rows = Vec::new();
    for &n in &rb.interleave_counts {
        // one master seed; sequences are split per (length, randomization)
        // stream, so every n sees paired Clifford draws
        let seqs = synth_sequences(group, &rb.lengths, n, rb.randomizations, seed);
        let records = match rb.shots {
            Some(shots) => {
                let sample_seed = seed.wrapping_add(n as u64).wrapping_add(1);
                simulate_decay_sampled(group, &seqs, &model, shots, sample_seed)
            }
            None => simulate_decay(group, &seqs, &model),
        };
        for r in &records {
            rows.push(vec![
                r.m.to_string(),
                r.n_interleaved.to_string(),
                num(r.mean_fidelity),
                num(r.std),
            ]);
        }
    }
    Ok(vec![write_csv(
        &ctx.out_dir,
        "rb_decay.csv",
        &RB_HEADER,
        &rows,
    )?])
}

#[derive(Serialize)]
struct InterleavedEntry {
    fit: DecayFit,
    #[serde(flatten)]
    analysis: InterleavedResult,
}

#[derive(Serialize)]
struct RbFitReport {
    reference: DecayFit,
    interleaved: Vec<InterleavedEntry>,
}

pub fn rb_fit(cfg: &DeviceConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    const CMD: CommandKind = CommandKind::RbFit;
    let Some(rel) = &cfg.rb.data else {
        return Err(cmd_err(CMD, "needs `rb.data`, a decay CSV from rb-sim"));
    };
    let (path, text) = read_input(rel, ctx)?;
    let records = read_rb_records(&path, &text)?;
    let reference: Vec<DecayRecord> = records
        .iter()
        .filter(|r| r.n_interleaved == 0)
        .cloned()
        .collect();
    if reference.is_empty() {
        return Err(cmd_err(
            CMD,
            format!(
                "{}: no reference rows (n_interleaved_cz = 0) found",
                path.display()
            ),
        ));
    }
    let ref_fit = fit_decay(&reference).map_err(|e| cmd_err(CMD, e))?;
    let mut ns: Vec<usize> = records
        .iter()
        .map(|r| r.n_interleaved)
        .filter(|&n| n > 0)
        .collect();
    ns.sort_unstable();
    ns.dedup();
    let mut interleaved = Vec::new();
    for n in ns {
        let subset: Vec<DecayRecord> = records
            .iter()
            .filter(|r| r.n_interleaved == n)
            .cloned()
            .collect();
        let fit = fit_decay(&subset).map_err(|e| cmd_err(CMD, e))?;
        let analysis = interleaved_analysis(&ref_fit, &fit, n).map_err(|e| cmd_err(CMD, e))?;
        interleaved.push(InterleavedEntry { fit, analysis });
    }
    let report = RbFitReport {
        reference: ref_fit,
        interleaved,
    };
    Ok(vec![write_json(&ctx.out_dir, "rb_fit.json", &report)?])
}

fn read_rb_records(path: &PathBuf, text: &str) -> Result<Vec<DecayRecord>, CliError> {
    const CMD: CommandKind = CommandKind::RbFit;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let head = rdr
        .headers()
        .map_err(|e| cmd_err(CMD, format!("{}: {e}", path.display())))?;
    if head != RB_HEADER.to_vec() {
        return Err(cmd_err(
            CMD,
            format!(
                "{}: expected header {}, got {:?}",
                path.display(),
                RB_HEADER.join(","),
                head
            ),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| cmd_err(CMD, format!("{}: {e}", path.display())))?;
        let bad = || cmd_err(CMD, format!("{}: bad row {}", path.display(), i + 2));
        let get = |j: usize| rec.get(j).ok_or_else(bad);
        out.push(DecayRecord {
            m: get(0)?.parse().map_err(|_| bad())?,
            n_interleaved: get(1)?.parse().map_err(|_| bad())?,
            mean_fidelity: get(2)?.parse().map_err(|_| bad())?,
            std: get(3)?.parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

//! File formats and experiment drivers for the FD-NOMA small-cell
//! simulator: scenario files (TOML, flat keys matching the configuration
//! field names), `report.json`, and the CSV exports (`metrics.csv`,
//! `cdf.csv`, `modes.csv`). All floating-point output uses Rust's shortest
//! round-trip decimal form, so values re-parse exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use fdnoma_core::baselines::SchedulerPolicy;
use fdnoma_core::config::ScenarioConfig;
use fdnoma_core::phy::TransmissionMode;
use fdnoma_core::sim::{ReplicationOutput, SweepPoint};

/// Loads a scenario from a TOML file; missing keys take the desk-scale
/// defaults while `base` supplies the starting point.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: ScenarioConfig =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    cfg.validate()
        .with_context(|| format!("validating config {}", path.display()))?;
    Ok(cfg)
}

/// Serializes the full report with stable field order.
pub fn write_report_json(out_dir: &Path, output: &ReplicationOutput) -> Result<()> {
    let json = serde_json::to_vec_pretty(&output.report)?;
    fs::write(out_dir.join("report.json"), json)?;
    Ok(())
}

/// Topology fixture dump.
pub fn write_topology_json(out_dir: &Path, output: &ReplicationOutput) -> Result<()> {
    let json = serde_json::to_vec_pretty(&output.topology)?;
    fs::write(out_dir.join("topology.json"), json)?;
    Ok(())
}

/// Per-subframe queue trajectories and service:
/// `subframe,user,q_ul,q_dl,h_ul,h_dl,served_ul,served_dl,p_ul`.
pub fn write_metrics_csv(out_dir: &Path, output: &ReplicationOutput) -> Result<()> {
    let mut file = fs::File::create(out_dir.join("metrics.csv"))?;
    writeln!(file, "subframe,user,q_ul,q_dl,h_ul,h_dl,served_ul,served_dl,p_ul")?;
    for m in &output.metrics {
        for u in 0..m.q_ul.len() {
            writeln!(
                file,
                "{},{},{},{},{},{},{},{},{}",
                m.subframe,
                u,
                m.q_ul[u],
                m.q_dl[u],
                m.h_ul[u],
                m.h_dl[u],
                m.served_ul_bits[u],
                m.served_dl_bits[u],
                m.p_ul[u]
            )?;
        }
    }
    Ok(())
}

/// Per-user throughput CDF points: `direction,throughput,prob`.
pub fn write_cdf_csv(out_dir: &Path, output: &ReplicationOutput) -> Result<()> {
    let mut file = fs::File::create(out_dir.join("cdf.csv"))?;
    writeln!(file, "direction,throughput,prob")?;
    for p in &output.report.cdf_ul {
        writeln!(file, "ul,{},{}", p.value, p.prob)?;
    }
    for p in &output.report.cdf_dl {
        writeln!(file, "dl,{},{}", p.value, p.prob)?;
    }
    Ok(())
}

/// Mode tallies and shares over non-idle transmissions:
/// `mode,count,share`.
pub fn write_modes_csv(out_dir: &Path, output: &ReplicationOutput) -> Result<()> {
    let mut counts = [0usize; 5]; // hd_oma, fd, ul_noma, dl_noma, idle
    for m in &output.metrics {
        for mode in &m.modes {
            match mode {
                TransmissionMode::HdOmaUl | TransmissionMode::HdOmaDl => counts[0] += 1,
                TransmissionMode::FdOma => counts[1] += 1,
                TransmissionMode::HdNomaUl => counts[2] += 1,
                TransmissionMode::HdNomaDl => counts[3] += 1,
                TransmissionMode::Idle => counts[4] += 1,
            }
        }
    }
    let active: usize = counts[..4].iter().sum();
    let share = |c: usize| if active > 0 { c as f64 / active as f64 } else { 0.0 };
    let mut file = fs::File::create(out_dir.join("modes.csv"))?;
    writeln!(file, "mode,count,share")?;
    for (name, idx) in [("hd-oma", 0), ("fd", 1), ("ul-noma", 2), ("dl-noma", 3)] {
        writeln!(file, "{},{},{}", name, counts[idx], share(counts[idx]))?;
    }
    writeln!(file, "idle,{},", counts[4])?;
    Ok(())
}

/// Writes every artifact of one run into `out_dir`.
pub fn write_run_outputs(out_dir: &Path, output: &ReplicationOutput) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_report_json(out_dir, output)?;
    write_topology_json(out_dir, output)?;
    write_metrics_csv(out_dir, output)?;
    write_cdf_csv(out_dir, output)?;
    write_modes_csv(out_dir, output)?;
    Ok(())
}

/// Sweep outputs: the full point list as JSON plus a per-point summary CSV
/// (`axis_value,policy,mean_packet_throughput,stderr,hd_oma,fd,ul_noma,dl_noma`).
pub fn write_sweep_outputs(out_dir: &Path, points: &[SweepPoint]) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_vec_pretty(points)?;
    fs::write(out_dir.join("sweep.json"), json)?;
    let mut file = fs::File::create(out_dir.join("summary.csv"))?;
    writeln!(
        file,
        "axis_value,policy,mean_packet_throughput,stderr,hd_oma,fd,ul_noma,dl_noma"
    )?;
    for p in points {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{}",
            p.axis_value,
            p.policy,
            p.mean_packet_throughput,
            p.stderr_packet_throughput,
            p.mean_mode_shares.hd_oma,
            p.mean_mode_shares.fd,
            p.mean_mode_shares.ul_noma,
            p.mean_mode_shares.dl_noma
        )?;
    }
    Ok(())
}

/// Policy list helper for CLI help text.
pub fn policy_names() -> Vec<&'static str> {
    SchedulerPolicy::ALL.iter().map(|p| p.name()).collect()
}

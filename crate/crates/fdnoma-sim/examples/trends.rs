use fdnoma_core::baselines::SchedulerPolicy;
use fdnoma_core::config::ScenarioConfig;
use fdnoma_core::sim::{run_sweep, SweepAxis};
use std::time::Instant;

fn main() {
    let cfg = ScenarioConfig::default();
    let reps = 5;
    let t0 = Instant::now();

    let traffic = run_sweep(&cfg, SweepAxis::Traffic, &[50e3, 100e3, 200e3, 400e3], reps, SchedulerPolicy::Proposed).unwrap();
    println!("traffic sweep (proposed):");
    for p in &traffic {
        println!(
            "  {:>7.0} bits: fd+noma={:.4} (fd={:.4} uln={:.4} dln={:.4}) pk_tput={:.3e}",
            p.axis_value,
            p.mean_mode_shares.fd_plus_noma(),
            p.mean_mode_shares.fd,
            p.mean_mode_shares.ul_noma,
            p.mean_mode_shares.dl_noma,
            p.mean_packet_throughput
        );
    }

    let density = run_sweep(&cfg, SweepAxis::Density, &[2.0, 4.0, 6.0], reps, SchedulerPolicy::Proposed).unwrap();
    println!("density sweep (proposed):");
    for p in &density {
        println!(
            "  {:>2.0} SBSs: dln={:.4} fd={:.4} uln={:.4} pk_tput={:.3e}",
            p.axis_value, p.mean_mode_shares.dl_noma, p.mean_mode_shares.fd, p.mean_mode_shares.ul_noma, p.mean_packet_throughput
        );
    }

    let si = run_sweep(&cfg, SweepAxis::Si, &[30.0, 50.0, 70.0, 90.0, 110.0], reps, SchedulerPolicy::Proposed).unwrap();
    println!("SI sweep (proposed):");
    for p in &si {
        println!(
            "  {:>3.0} dB: fd={:.4} uln={:.4} dln={:.4}",
            p.axis_value, p.mean_mode_shares.fd, p.mean_mode_shares.ul_noma, p.mean_mode_shares.dl_noma
        );
    }

    // (d) comparison at highest traffic point.
    let mut heavy = cfg.clone();
    heavy.mean_packet_size = 400e3;
    for pol in [SchedulerPolicy::Proposed, SchedulerPolicy::Uncoordinated, SchedulerPolicy::HdOma] {
        let pts = run_sweep(&heavy, SweepAxis::Traffic, &[400e3], reps, pol).unwrap();
        println!("400kb {}: pk_tput={:.4e}", pol, pts[0].mean_packet_throughput);
    }
    println!("total {:.2?}", t0.elapsed());
}

use fdnoma_core::baselines::SchedulerPolicy;
use fdnoma_core::config::ScenarioConfig;
use fdnoma_core::sim::run_replication;
use std::time::Instant;

fn main() {
    let cfg = ScenarioConfig::default();
    for policy in [SchedulerPolicy::Proposed, SchedulerPolicy::Uncoordinated, SchedulerPolicy::HdOma] {
        let t0 = Instant::now();
        let out = run_replication(&cfg, policy, 0).unwrap();
        println!(
            "{policy}: {:.2?} users={} pk_tput={:.3e} shares: hd={:.3} fd={:.3} uln={:.3} dln={:.3} warn={}",
            t0.elapsed(),
            out.report.num_users,
            out.report.packet_throughput,
            out.report.mode_shares.hd_oma,
            out.report.mode_shares.fd,
            out.report.mode_shares.ul_noma,
            out.report.mode_shares.dl_noma,
            out.report.solver_warnings,
        );
    }
}

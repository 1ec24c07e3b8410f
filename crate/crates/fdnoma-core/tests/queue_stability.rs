//! Long-horizon queue stability at light load: the time-averaged backlog
//! per user must vanish relative to the arrival rate.

use fdnoma_core::baselines::SchedulerPolicy;
use fdnoma_core::config::ScenarioConfig;
use fdnoma_core::sim::run_replication;

#[test]
fn light_load_keeps_traffic_queues_mean_rate_stable() {
    // 50 kb packets at 5/s per direction: ~250 bits/subframe per user, two
    // orders of magnitude inside the per-cell service capacity.
    let mut cfg = ScenarioConfig::default();
    cfg.mean_packet_size = 50e3;
    cfg.num_subframes = 20_000;
    cfg.rng_seed = 7;
    let mean_arrival_bits_per_subframe =
        cfg.lambda_ul * cfg.mean_packet_size * cfg.subframe_duration;

    let out = run_replication(&cfg, SchedulerPolicy::Proposed, 0).unwrap();
    let growth = out
        .report
        .max_queue_growth_ul
        .max(out.report.max_queue_growth_dl);
    assert!(
        growth < 0.01 * mean_arrival_bits_per_subframe,
        "max Q(T)/T = {growth} vs 1% of arrivals = {}",
        0.01 * mean_arrival_bits_per_subframe
    );
    // Sanity: traffic actually flowed.
    assert!(out.report.served_bits_ul > 0 && out.report.served_bits_dl > 0);
}

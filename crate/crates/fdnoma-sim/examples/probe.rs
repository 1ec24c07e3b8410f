use fdnoma_core::baselines::SchedulerPolicy;
use fdnoma_core::config::ScenarioConfig;
use fdnoma_core::sim::{run_sweep, SweepAxis};
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    for (area, upc, reps) in [(280.0, 10.0, 12), (320.0, 10.0, 12)] {
        let mut cfg = ScenarioConfig::default();
        cfg.area_side = area;
        cfg.mean_users_per_sbs = upc;
        cfg.lambda_ul = 2.0;
        cfg.lambda_dl = 10.0;
        cfg.mean_packet_size = 300e3;
        let pts = run_sweep(&cfg, SweepAxis::Density, &[2.0, 4.0, 6.0], reps, SchedulerPolicy::Proposed).unwrap();
        let dln: Vec<String> = pts
            .iter()
            .map(|p| {
                let n = p.reports.len() as f64;
                let vals: Vec<f64> = p.reports.iter().map(|r| r.mode_shares.dl_noma).collect();
                let m = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
                format!("{:.4}±{:.4}", m, (var / n).sqrt())
            })
            .collect();
        println!("area={area} upc={upc}: dln = {:?}", dln);
    }
    println!("{:.1?}", t0.elapsed());
}

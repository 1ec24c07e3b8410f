//! Randomized property checks: queue laws, interference accounting,
//! decode-order structure and SINR monotonicity.

use fdnoma_core::config::ScenarioConfig;
use fdnoma_core::phy::{
    compute_sinr, noma_decode_order, ranks_above, service_rate, Assignment, CellAssignment,
    Direction, PowerAllocation,
};
use fdnoma_core::queues::{select_auxiliary, update_traffic_queue, QueueState};
use fdnoma_core::topology::{generate_topology, ChannelGains};
use proptest::prelude::*;

const N0: f64 = 3.162277660168379e-13;

proptest! {
    #[test]
    fn queue_law_is_exact(q in 0u64..1u64 << 62, r in 0u64..1u64 << 62, a in 0u64..1u64 << 62) {
        let next = update_traffic_queue(q, r, a);
        let expected = if q > r { q - r + a } else { a };
        prop_assert_eq!(next, expected);
    }

    #[test]
    fn auxiliary_output_is_two_valued(h in 0.0f64..1e12, v in 0.0f64..1e9, r_max in 1e-6f64..1e9) {
        let gamma = select_auxiliary(h, v, r_max);
        prop_assert!(gamma == 0.0 || gamma == r_max);
        prop_assert_eq!(gamma == r_max, h <= v);
    }

    #[test]
    fn service_rate_is_monotone(s1 in 0.0f64..1e6, s2 in 0.0f64..1e6) {
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(service_rate(lo, 10e6) <= service_rate(hi, 10e6));
    }

    #[test]
    fn virtual_queues_stay_non_negative(
        rates in prop::collection::vec(0.0f64..1e6, 3),
        powers in prop::collection::vec(0.0f64..0.2, 3),
        gammas in prop::collection::vec(0.0f64..1e5, 3),
        steps in 1usize..30,
    ) {
        let cfg = ScenarioConfig::default();
        let mut qs = QueueState::new(3, 2);
        for u in 0..3 {
            qs.gamma_ul[u] = gammas[u];
            qs.gamma_dl[u] = gammas[u];
        }
        for _ in 0..steps {
            qs.update_virtual_queues(&rates, &rates, &powers, &powers[..2], &cfg);
            for u in 0..3 {
                prop_assert!(qs.h_ul[u] >= 0.0 && qs.h_dl[u] >= 0.0 && qs.z_ul[u] >= 0.0);
            }
            prop_assert!(qs.z_dl.iter().all(|&z| z >= 0.0));
        }
    }
}

/// Builds a random-but-valid scenario with one NOMA cell and one FD cell.
fn random_scenario(seed: u64) -> (ScenarioConfig, ChannelGains, Assignment, PowerAllocation) {
    use fdnoma_core::rng::{SeedSpawner, StreamKind};
    let mut cfg = ScenarioConfig::default();
    cfg.num_sbs = 2;
    cfg.mean_users_per_sbs = 3.0;
    cfg.rng_seed = seed;
    let spawner = SeedSpawner::new(seed);
    let mut rng = spawner.stream(StreamKind::Topology, 0);
    let topo = loop {
        let t = generate_topology(&cfg, &mut rng).unwrap();
        if t.num_users() >= 5 {
            break t;
        }
    };
    let channel = ChannelGains::faded(&topo, &mut spawner.stream(StreamKind::Fading, 0));
    let assignment = Assignment {
        cells: vec![
            CellAssignment {
                ul_users: vec![0, 1, 2],
                dl_users: vec![],
            },
            CellAssignment {
                ul_users: vec![3],
                dl_users: vec![4],
            },
        ],
    };
    let mut powers = PowerAllocation::zeros(&assignment, topo.num_users());
    for (i, u) in [0, 1, 2, 3].iter().enumerate() {
        powers.p_ul[*u] = 0.01 + 0.02 * i as f64;
    }
    powers.p_dl[1][0] = 0.11;
    (cfg, channel, assignment, powers)
}

#[test]
fn interference_breakdown_reconstructs_denominator() {
    for seed in 0..25u64 {
        let (cfg, channel, assignment, powers) = random_scenario(seed);
        for (b, cell) in assignment.cells.iter().enumerate() {
            for (&u, dir) in cell
                .ul_users
                .iter()
                .map(|u| (u, Direction::Ul))
                .chain(cell.dl_users.iter().map(|u| (u, Direction::Dl)))
                .map(|(u, d)| (u, d))
            {
                let res = compute_sinr(
                    &assignment,
                    &powers,
                    &channel,
                    N0,
                    cfg.si_cancellation,
                    dir,
                    b,
                    u,
                );
                // Signal / (N0 + total breakdown) must reproduce the SINR.
                let signal = match dir {
                    Direction::Ul => powers.p_ul[u] * channel.sbs_user(b, u),
                    Direction::Dl => powers.p_dl_of(&assignment, b, u) * channel.sbs_user(b, u),
                };
                let rebuilt = signal / (N0 + res.breakdown.total());
                assert!(
                    (rebuilt - res.sinr).abs() <= 1e-15 * res.sinr.abs().max(1.0),
                    "seed {seed}: {} vs {}",
                    rebuilt,
                    res.sinr
                );
            }
        }
    }
}

#[test]
fn noma_order_is_permutation_and_partitions_pairs() {
    for seed in 0..25u64 {
        let (_, channel, assignment, _) = random_scenario(seed);
        let users = &assignment.cells[0].ul_users;
        let order = noma_decode_order(users, &channel, 0);
        // Permutation.
        let mut sorted = order.clone();
        sorted.sort_unstable();
        let mut expected = users.clone();
        expected.sort_unstable();
        assert_eq!(sorted, expected);
        // For any two co-scheduled users exactly one interferes with the
        // other (the ranking relation is a strict total order).
        for &a in users {
            for &b in users {
                if a == b {
                    continue;
                }
                let ga = channel.sbs_user(0, a);
                let gb = channel.sbs_user(0, b);
                let ab = ranks_above(ga, a, gb, b);
                let ba = ranks_above(gb, b, ga, a);
                assert!(ab ^ ba, "exactly one direction of interference");
            }
        }
    }
}

#[test]
fn ul_sinr_monotone_in_si_cancellation() {
    let (cfg, channel, assignment, powers) = random_scenario(7);
    let _ = cfg;
    let mut last = 0.0;
    for zeta_db in [30.0, 50.0, 70.0, 90.0, 110.0] {
        let zeta = 10f64.powf(zeta_db / 10.0);
        let sinr = compute_sinr(
            &assignment,
            &powers,
            &channel,
            N0,
            zeta,
            Direction::Ul,
            1,
            3,
        )
        .sinr;
        assert!(sinr >= last, "SINR must not decrease with better SI cancellation");
        last = sinr;
    }
}

#[test]
fn sinr_monotone_decreasing_in_interferer_power() {
    let (cfg, channel, assignment, mut powers) = random_scenario(9);
    let base = compute_sinr(
        &assignment,
        &powers,
        &channel,
        N0,
        cfg.si_cancellation,
        Direction::Ul,
        0,
        0,
    )
    .sinr;
    // Crank up a foreign UL transmitter.
    powers.p_ul[3] *= 10.0;
    let worse = compute_sinr(
        &assignment,
        &powers,
        &channel,
        N0,
        cfg.si_cancellation,
        Direction::Ul,
        0,
        0,
    )
    .sinr;
    assert!(worse < base);
}

#[test]
fn h_queue_bounded_when_service_covers_auxiliary() {
    // With r >= gamma every subframe, H never exceeds r_max plus its start.
    let cfg = ScenarioConfig::default();
    let r_max = cfg.r_max();
    let mut qs = QueueState::new(1, 1);
    qs.h_ul[0] = 3e4;
    let start = qs.h_ul[0];
    for _ in 0..200 {
        qs.gamma_ul[0] = select_auxiliary(qs.h_ul[0], cfg.lyapunov_v, r_max);
        let r = qs.gamma_ul[0].max(1e4); // service always covers gamma
        qs.update_virtual_queues(&[r], &[0.0], &[0.0], &[0.0], &cfg);
        assert!(qs.h_ul[0] <= r_max + start + 1e-9);
    }
}

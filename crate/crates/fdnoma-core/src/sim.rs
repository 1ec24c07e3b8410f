//! Subframe-level simulation loop, metrics collection and scenario sweeps.
//!
//! One replication runs a fixed topology for `num_subframes` subframes. Each
//! subframe: draw arrivals, let the selected policy pick an assignment and
//! powers (for the matched schemes this is auxiliary selection, interference
//! learning, matching and — for the proposed policy — the convex-concave
//! power optimizer), compute the realized SINRs and served bits, drain the
//! packet FIFOs, and advance every traffic and virtual queue.
//!
//! Traffic queues are integer bits, so the conservation identity
//! `arrivals = served + residual` holds exactly at the end of every run.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    schedule_fd_oma, schedule_hd_noma, schedule_hd_oma, schedule_uncoordinated, BaselineState,
    SchedulerPolicy,
};
use crate::config::ScenarioConfig;
use crate::matching::{
    run_matching, update_learning, LearnedInterference, MatchingContext, PreferenceProfile,
};
use crate::phy::{
    compute_sinr, service_rate, Assignment, Direction, PowerAllocation, TransmissionMode,
};
use crate::power::run_ccp;
use crate::queues::{draw_arrivals, ArrivalProcess, CompletedPacket, PacketFifo, QueueState};
use crate::rng::{SeedSpawner, StreamKind};
use crate::topology::{generate_topology, ChannelGains, GeometryError, NetworkTopology};

/// Everything recorded about one subframe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubframeMetrics {
    pub subframe: usize,
    /// Served bits per user.
    pub served_ul_bits: Vec<u64>,
    pub served_dl_bits: Vec<u64>,
    /// Mode of each SBS.
    pub modes: Vec<TransmissionMode>,
    /// Queue snapshots after the subframe's updates.
    pub q_ul: Vec<u64>,
    pub q_dl: Vec<u64>,
    pub h_ul: Vec<f64>,
    pub h_dl: Vec<f64>,
    /// Allocated powers (zero when unscheduled).
    pub p_ul: Vec<f64>,
    pub p_dl_sbs: Vec<f64>,
}

/// Share of non-idle transmissions carried in each mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeShares {
    pub hd_oma: f64,
    pub fd: f64,
    pub ul_noma: f64,
    pub dl_noma: f64,
}

impl ModeShares {
    pub fn fd_plus_noma(&self) -> f64 {
        self.fd + self.ul_noma + self.dl_noma
    }
}

/// Aggregated results of one replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub policy: String,
    pub master_seed: u64,
    pub replication: u64,
    pub num_sbs: usize,
    pub num_users: usize,
    pub num_subframes: usize,
    /// Mean packet throughput (size/delay over completed packets), bits/s.
    pub packet_throughput: f64,
    pub packet_throughput_ul: f64,
    pub packet_throughput_dl: f64,
    pub completed_packets_ul: usize,
    pub completed_packets_dl: usize,
    /// Mean per-user rate throughput (served bits over the run duration).
    pub rate_throughput_ul: f64,
    pub rate_throughput_dl: f64,
    /// 10th-percentile per-user throughput.
    pub cell_edge_throughput_ul: f64,
    pub cell_edge_throughput_dl: f64,
    /// Per-user throughput CDF points (value, cumulative probability).
    pub cdf_ul: Vec<CdfPoint>,
    pub cdf_dl: Vec<CdfPoint>,
    pub mode_shares: ModeShares,
    /// Time-average allocated powers.
    pub avg_power_ul: Vec<f64>,
    pub avg_power_dl: Vec<f64>,
    /// Conservation bookkeeping, exact in bits.
    pub arrived_bits_ul: u64,
    pub arrived_bits_dl: u64,
    pub served_bits_ul: u64,
    pub served_bits_dl: u64,
    pub residual_bits_ul: u64,
    pub residual_bits_dl: u64,
    /// max_u Q_u(T)/T in bits per subframe, per direction.
    pub max_queue_growth_ul: f64,
    pub max_queue_growth_dl: f64,
    /// Power-optimizer runs that stopped at the iteration cap.
    pub solver_warnings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    pub prob: f64,
}

/// Full output of one replication.
#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    pub topology: NetworkTopology,
    pub metrics: Vec<SubframeMetrics>,
    pub completions_ul: Vec<CompletedPacket>,
    pub completions_dl: Vec<CompletedPacket>,
    pub report: ExperimentReport,
}

/// Runs one replication of `policy` under `config`. Deterministic in
/// `(config.rng_seed, replication, policy)`.
pub fn run_replication(
    config: &ScenarioConfig,
    policy: SchedulerPolicy,
    replication: u64,
) -> Result<ReplicationOutput, GeometryError> {
    let spawner = SeedSpawner::new(config.rng_seed);
    let mut topo_rng = spawner.stream(StreamKind::Topology, replication);
    let mut arrivals_rng = spawner.stream(StreamKind::Arrivals, replication);
    let mut fading_rng = spawner.stream(StreamKind::Fading, replication);

    let topo = generate_topology(config, &mut topo_rng)?;
    let num_users = topo.num_users();
    let num_sbs = topo.num_sbs();
    let noise = config.noise_power();
    let r_max = config.r_max();
    let dt = config.subframe_duration;

    let proc_ul = ArrivalProcess::from_config(config, Direction::Ul);
    let proc_dl = ArrivalProcess::from_config(config, Direction::Dl);

    let mut queues = QueueState::new(num_users, num_sbs);
    let mut fifo_ul: Vec<PacketFifo> = vec![PacketFifo::new(); num_users];
    let mut fifo_dl: Vec<PacketFifo> = vec![PacketFifo::new(); num_users];
    let mut learned = LearnedInterference::zeros(num_sbs, num_users);
    let mut last_measured_sbs: Vec<Option<f64>> = vec![None; num_sbs];
    let mut last_measured_user: Vec<Option<f64>> = vec![None; num_users];
    let mut baseline_state = BaselineState::new(&topo);

    let mut metrics = Vec::with_capacity(config.num_subframes);
    let mut completions_ul: Vec<CompletedPacket> = Vec::new();
    let mut completions_dl: Vec<CompletedPacket> = Vec::new();
    let mut arrived_ul: u64 = 0;
    let mut arrived_dl: u64 = 0;
    let mut served_total_ul: u64 = 0;
    let mut served_total_dl: u64 = 0;
    let mut served_per_user_ul: Vec<u64> = vec![0; num_users];
    let mut served_per_user_dl: Vec<u64> = vec![0; num_users];
    let mut power_acc_ul: Vec<f64> = vec![0.0; num_users];
    let mut power_acc_dl: Vec<f64> = vec![0.0; num_sbs];
    let mut solver_warnings = 0usize;

    let uses_learning = matches!(
        policy,
        SchedulerPolicy::Proposed | SchedulerPolicy::Uncoordinated
    );

    for t in 0..config.num_subframes {
        let channel = if config.fading {
            ChannelGains::faded(&topo, &mut fading_rng)
        } else {
            ChannelGains::static_from(&topo)
        };

        // Arrivals of this subframe (queued after service, packet sizes in
        // whole bits).
        let arrivals: Vec<(Vec<u64>, Vec<u64>)> = (0..num_users)
            .map(|_| {
                (
                    draw_arrivals(&proc_ul, dt, &mut arrivals_rng),
                    draw_arrivals(&proc_dl, dt, &mut arrivals_rng),
                )
            })
            .collect();

        // Policy decision.
        if uses_learning {
            queues.select_auxiliaries(config.lyapunov_v, r_max);
            learned = update_learning(
                &learned,
                &last_measured_sbs,
                &last_measured_user,
                config.nu1,
                config.nu2,
            );
        }
        let (assignment, powers) = match policy {
            SchedulerPolicy::HdOma => schedule_hd_oma(&mut baseline_state, &queues, config),
            SchedulerPolicy::HdNoma => {
                schedule_hd_noma(&mut baseline_state, &queues, &channel, config)
            }
            SchedulerPolicy::FdOma => {
                schedule_fd_oma(&mut baseline_state, &queues, &channel, config)
            }
            SchedulerPolicy::Uncoordinated => {
                let ctx = MatchingContext {
                    config,
                    channel: &channel,
                    queues: &queues,
                    learned: &learned,
                    noise,
                };
                schedule_uncoordinated(&ctx, &channel, config, num_users)
            }
            SchedulerPolicy::Proposed => {
                let ctx = MatchingContext {
                    config,
                    channel: &channel,
                    queues: &queues,
                    learned: &learned,
                    noise,
                };
                let profile = PreferenceProfile::build(&ctx);
                let outcome = run_matching(&ctx, &profile);
                let initial = matching_fixed_powers(&outcome.assignment, config, num_users);
                let result = run_ccp(
                    &outcome.assignment,
                    &initial,
                    &queues,
                    &channel,
                    config,
                    noise,
                );
                if result.hit_iteration_cap {
                    solver_warnings += 1;
                }
                (outcome.assignment, result.powers)
            }
        };

        // Realized offered rates (bits/subframe), bounded by r_max.
        let mut offered_ul = vec![0.0f64; num_users];
        let mut offered_dl = vec![0.0f64; num_users];
        for (b, cell) in assignment.cells.iter().enumerate() {
            for &u in &cell.ul_users {
                let sinr = compute_sinr(
                    &assignment,
                    &powers,
                    &channel,
                    noise,
                    config.si_cancellation,
                    Direction::Ul,
                    b,
                    u,
                )
                .sinr;
                offered_ul[u] = (service_rate(sinr, config.bandwidth) * dt).min(r_max);
            }
            for &u in &cell.dl_users {
                let sinr = compute_sinr(
                    &assignment,
                    &powers,
                    &channel,
                    noise,
                    config.si_cancellation,
                    Direction::Dl,
                    b,
                    u,
                )
                .sinr;
                offered_dl[u] = (service_rate(sinr, config.bandwidth) * dt).min(r_max);
            }
        }

        // Serve queues (floor to whole bits, never beyond the backlog),
        // collect packet completions, then push the new arrivals.
        let mut served_ul = vec![0u64; num_users];
        let mut served_dl = vec![0u64; num_users];
        for u in 0..num_users {
            served_ul[u] = queues.q_ul[u].min(offered_ul[u] as u64);
            served_dl[u] = queues.q_dl[u].min(offered_dl[u] as u64);
            completions_ul.extend(fifo_ul[u].serve(served_ul[u], t));
            completions_dl.extend(fifo_dl[u].serve(served_dl[u], t));
            let (ul_pkts, dl_pkts) = &arrivals[u];
            let a_ul: u64 = ul_pkts.iter().sum();
            let a_dl: u64 = dl_pkts.iter().sum();
            queues.q_ul[u] = crate::queues::update_traffic_queue(queues.q_ul[u], served_ul[u], a_ul);
            queues.q_dl[u] = crate::queues::update_traffic_queue(queues.q_dl[u], served_dl[u], a_dl);
            for &size in ul_pkts {
                fifo_ul[u].push(t, size);
            }
            for &size in dl_pkts {
                fifo_dl[u].push(t, size);
            }
            arrived_ul += a_ul;
            arrived_dl += a_dl;
            served_total_ul += served_ul[u];
            served_total_dl += served_dl[u];
            served_per_user_ul[u] += served_ul[u];
            served_per_user_dl[u] += served_dl[u];
            debug_assert_eq!(fifo_ul[u].backlog(), queues.q_ul[u]);
            debug_assert_eq!(fifo_dl[u].backlog(), queues.q_dl[u]);
        }

        // Inter-cell interference measurements for the next subframe's
        // learning step (receivers only; idle nodes keep their estimate).
        if uses_learning {
            let (m_sbs, m_user) =
                measure_inter_cell(&assignment, &powers, &channel, num_sbs, num_users);
            last_measured_sbs = m_sbs;
            last_measured_user = m_user;
        }

        // Virtual queues: H absorbs offered rates and the chosen auxiliary
        // rates, Z absorbs the allocated powers.
        let p_dl_sbs: Vec<f64> = (0..num_sbs).map(|b| powers.p_dl_total(b)).collect();
        queues.update_virtual_queues(&offered_ul, &offered_dl, &powers.p_ul, &p_dl_sbs, config);
        for u in 0..num_users {
            power_acc_ul[u] += powers.p_ul[u];
        }
        for b in 0..num_sbs {
            power_acc_dl[b] += p_dl_sbs[b];
        }

        metrics.push(SubframeMetrics {
            subframe: t,
            served_ul_bits: served_ul,
            served_dl_bits: served_dl,
            modes: assignment.cells.iter().map(|c| c.mode()).collect(),
            q_ul: queues.q_ul.clone(),
            q_dl: queues.q_dl.clone(),
            h_ul: queues.h_ul.clone(),
            h_dl: queues.h_dl.clone(),
            p_ul: powers.p_ul.clone(),
            p_dl_sbs,
        });
    }

    let t_f = config.num_subframes as f64;
    let duration = t_f * dt;
    let packet_rate = |packets: &[CompletedPacket]| -> f64 {
        if packets.is_empty() {
            return 0.0;
        }
        let sum: f64 = packets
            .iter()
            .map(|p| {
                let delay = (p.completion_subframe - p.arrival_subframe).max(1) as f64 * dt;
                p.size_bits as f64 / delay
            })
            .sum();
        sum / packets.len() as f64
    };
    let all_completions: Vec<CompletedPacket> = completions_ul
        .iter()
        .chain(completions_dl.iter())
        .copied()
        .collect();

    let throughput_ul: Vec<f64> = served_per_user_ul
        .iter()
        .map(|&b| b as f64 / duration)
        .collect();
    let throughput_dl: Vec<f64> = served_per_user_dl
        .iter()
        .map(|&b| b as f64 / duration)
        .collect();

    let mut mode_counts = [0usize; 4]; // hd_oma, fd, ul_noma, dl_noma
    for m in &metrics {
        for mode in &m.modes {
            match mode {
                TransmissionMode::HdOmaUl | TransmissionMode::HdOmaDl => mode_counts[0] += 1,
                TransmissionMode::FdOma => mode_counts[1] += 1,
                TransmissionMode::HdNomaUl => mode_counts[2] += 1,
                TransmissionMode::HdNomaDl => mode_counts[3] += 1,
                TransmissionMode::Idle => {}
            }
        }
    }
    let active: usize = mode_counts.iter().sum();
    let share = |c: usize| if active > 0 { c as f64 / active as f64 } else { 0.0 };

    let report = ExperimentReport {
        policy: String::from(policy.name()),
        master_seed: config.rng_seed,
        replication,
        num_sbs,
        num_users,
        num_subframes: config.num_subframes,
        packet_throughput: packet_rate(&all_completions),
        packet_throughput_ul: packet_rate(&completions_ul),
        packet_throughput_dl: packet_rate(&completions_dl),
        completed_packets_ul: completions_ul.len(),
        completed_packets_dl: completions_dl.len(),
        rate_throughput_ul: mean(&throughput_ul),
        rate_throughput_dl: mean(&throughput_dl),
        cell_edge_throughput_ul: percentile(&throughput_ul, 0.10),
        cell_edge_throughput_dl: percentile(&throughput_dl, 0.10),
        cdf_ul: cdf_points(&throughput_ul),
        cdf_dl: cdf_points(&throughput_dl),
        mode_shares: ModeShares {
            hd_oma: share(mode_counts[0]),
            fd: share(mode_counts[1]),
            ul_noma: share(mode_counts[2]),
            dl_noma: share(mode_counts[3]),
        },
        avg_power_ul: power_acc_ul.iter().map(|p| p / t_f).collect(),
        avg_power_dl: power_acc_dl.iter().map(|p| p / t_f).collect(),
        arrived_bits_ul: arrived_ul,
        arrived_bits_dl: arrived_dl,
        served_bits_ul: served_total_ul,
        served_bits_dl: served_total_dl,
        residual_bits_ul: queues.q_ul.iter().sum(),
        residual_bits_dl: queues.q_dl.iter().sum(),
        max_queue_growth_ul: queues.q_ul.iter().map(|&q| q as f64 / t_f).fold(0.0, f64::max),
        max_queue_growth_dl: queues.q_dl.iter().map(|&q| q as f64 / t_f).fold(0.0, f64::max),
        solver_warnings,
    };

    Ok(ReplicationOutput {
        topology: topo,
        metrics,
        completions_ul,
        completions_dl,
        report,
    })
}

/// The fixed powers the matching phase assumes, expanded to an allocation:
/// δ_u^UL per UL user, δ_b^DL split equally across DL users.
pub fn matching_fixed_powers(
    assignment: &Assignment,
    config: &ScenarioConfig,
    num_users: usize,
) -> PowerAllocation {
    let mut powers = PowerAllocation::zeros(assignment, num_users);
    for (b, cell) in assignment.cells.iter().enumerate() {
        for &u in &cell.ul_users {
            powers.p_ul[u] = config.delta_ul;
        }
        let dl_count = cell.dl_users.len();
        for slot in 0..dl_count {
            powers.p_dl[b][slot] = config.delta_dl / dl_count as f64;
        }
    }
    powers
}

/// Realized inter-cell interference at every receiving node: SBSs serving
/// UL measure foreign UL users and other SBSs' DL power; users receiving DL
/// measure other cells' DL power and foreign UL users.
pub fn measure_inter_cell(
    assignment: &Assignment,
    powers: &PowerAllocation,
    channel: &ChannelGains,
    num_sbs: usize,
    num_users: usize,
) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let mut at_sbs: Vec<Option<f64>> = vec![None; num_sbs];
    let mut at_user: Vec<Option<f64>> = vec![None; num_users];
    for b in 0..num_sbs {
        if assignment.cells[b].ul_users.is_empty() {
            continue;
        }
        let mut total = 0.0;
        for (b2, cell2) in assignment.cells.iter().enumerate() {
            if b2 == b {
                continue;
            }
            for &v in &cell2.ul_users {
                total += powers.p_ul[v] * channel.sbs_user(b, v);
            }
            total += powers.p_dl_total(b2) * channel.sbs_sbs(b2, b);
        }
        at_sbs[b] = Some(total);
    }
    for (b, cell) in assignment.cells.iter().enumerate() {
        for &u in &cell.dl_users {
            let mut total = 0.0;
            for (b2, cell2) in assignment.cells.iter().enumerate() {
                if b2 == b {
                    continue;
                }
                total += powers.p_dl_total(b2) * channel.sbs_user(b2, u);
                for &v in &cell2.ul_users {
                    total += powers.p_ul[v] * channel.user_user(v, u);
                }
            }
            at_user[u] = Some(total);
        }
    }
    (at_sbs, at_user)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Nearest-rank percentile of the per-user distribution.
fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let rank = libm::ceil(q * sorted.len() as f64).max(1.0) as usize;
    sorted[rank - 1]
}

fn cdf_points(values: &[f64]) -> Vec<CdfPoint> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, value)| CdfPoint {
            value,
            prob: (i + 1) as f64 / n as f64,
        })
        .collect()
}

/// Sweep axis of the experiment protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Mean packet size in bits.
    Traffic,
    /// Number of SBSs.
    Density,
    /// Self-interference cancellation in dB.
    Si,
}

impl core::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traffic" => Ok(SweepAxis::Traffic),
            "density" => Ok(SweepAxis::Density),
            "si" => Ok(SweepAxis::Si),
            other => Err(format!("unknown sweep axis: {other}")),
        }
    }
}

/// Applies one sweep value to a base scenario.
pub fn apply_sweep_value(base: &ScenarioConfig, axis: SweepAxis, value: f64) -> ScenarioConfig {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Traffic => cfg.mean_packet_size = value,
        SweepAxis::Density => cfg.num_sbs = value as usize,
        SweepAxis::Si => cfg.si_cancellation = crate::math::db_to_linear(value),
    }
    cfg
}

/// Aggregate over the replications of one sweep point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub policy: String,
    pub mean_packet_throughput: f64,
    pub stderr_packet_throughput: f64,
    pub mean_mode_shares: ModeShares,
    pub mean_rate_throughput_ul: f64,
    pub mean_rate_throughput_dl: f64,
    pub reports: Vec<ExperimentReport>,
}

/// Runs `replications` runs per sweep value and aggregates the means.
pub fn run_sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    replications: u64,
    policy: SchedulerPolicy,
) -> Result<Vec<SweepPoint>, GeometryError> {
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let cfg = apply_sweep_value(base, axis, value);
        let mut reports = Vec::with_capacity(replications as usize);
        for r in 0..replications {
            reports.push(run_replication(&cfg, policy, r)?.report);
        }
        points.push(aggregate_point(value, policy, reports));
    }
    Ok(points)
}

/// Builds the per-value aggregate from finished replication reports.
pub fn aggregate_point(
    axis_value: f64,
    policy: SchedulerPolicy,
    reports: Vec<ExperimentReport>,
) -> SweepPoint {
    let n = reports.len().max(1) as f64;
    let tputs: Vec<f64> = reports.iter().map(|r| r.packet_throughput).collect();
    let m = mean(&tputs);
    let var = if reports.len() > 1 {
        tputs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let shares = ModeShares {
        hd_oma: reports.iter().map(|r| r.mode_shares.hd_oma).sum::<f64>() / n,
        fd: reports.iter().map(|r| r.mode_shares.fd).sum::<f64>() / n,
        ul_noma: reports.iter().map(|r| r.mode_shares.ul_noma).sum::<f64>() / n,
        dl_noma: reports.iter().map(|r| r.mode_shares.dl_noma).sum::<f64>() / n,
    };
    SweepPoint {
        axis_value,
        policy: String::from(policy.name()),
        mean_packet_throughput: m,
        stderr_packet_throughput: crate::math::sqrt(var / n),
        mean_mode_shares: shares,
        mean_rate_throughput_ul: reports.iter().map(|r| r.rate_throughput_ul).sum::<f64>() / n,
        mean_rate_throughput_dl: reports.iter().map(|r| r.rate_throughput_dl).sum::<f64>() / n,
        reports,
    }
}

//! Traffic queues, Lyapunov virtual queues and the auxiliary-rate selector.
//!
//! Traffic queues are kept in integer bits so that the queue law
//! `Q' = max(Q - r, 0) + a` and the arrivals = served + residual conservation
//! identity hold exactly, with no floating-point drift. Virtual queues (the
//! auxiliary-rate queues `H` and the average-power queues `Z`) are real
//! valued: `H` absorbs offered service rates, `Z` absorbs transmit powers.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::config::ScenarioConfig;

/// Link direction of a queue, packet or transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    Ul,
    Dl,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Ul, Direction::Dl];
}

/// Poisson packet arrivals with exponential sizes, truncated per subframe.
#[derive(Debug, Clone, Copy)]
pub struct ArrivalProcess {
    /// Mean packet arrival rate, packets/second.
    pub lambda: f64,
    /// Mean packet size 1/μ, bits.
    pub mean_size: f64,
    /// Hard cap on total arriving bits in one subframe.
    pub a_max: f64,
}

impl ArrivalProcess {
    pub fn from_config(config: &ScenarioConfig, direction: Direction) -> Self {
        ArrivalProcess {
            lambda: match direction {
                Direction::Ul => config.lambda_ul,
                Direction::Dl => config.lambda_dl,
            },
            mean_size: config.mean_packet_size,
            a_max: config.a_max(),
        }
    }
}

/// Packet sizes (bits) arriving in one subframe for one user-direction.
///
/// The per-subframe total is truncated at `a_max`: a packet that would
/// overflow the cap is clipped to the remaining budget and later packets are
/// dropped. The cap sits at 20 mean packet sizes by default, so truncation
/// is a negligible-probability safeguard rather than a modelling feature.
pub fn draw_arrivals(proc: &ArrivalProcess, subframe_duration: f64, rng: &mut impl Rng) -> Vec<u64> {
    let mean_count = proc.lambda * subframe_duration;
    if mean_count <= 0.0 || proc.mean_size <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(mean_count).expect("positive mean").sample(rng) as usize;
    let size_dist = Exp::new(1.0 / proc.mean_size).expect("positive rate");
    let budget = proc.a_max as u64;
    let mut used: u64 = 0;
    let mut packets = Vec::new();
    for _ in 0..count {
        let raw: f64 = size_dist.sample(rng);
        let size = (libm::round(raw) as u64).max(1).min(budget.saturating_sub(used));
        if size == 0 {
            break;
        }
        packets.push(size);
        used += size;
    }
    packets
}

/// The queue law `Q(t+1) = max(Q(t) - r(t), 0) + A(t)`, exact in bits.
#[inline]
pub fn update_traffic_queue(queue: u64, served: u64, arrival: u64) -> u64 {
    queue.saturating_sub(served) + arrival
}

/// Auxiliary-rate selection: the drift-plus-penalty subproblem for a linear
/// utility is bang-bang in the auxiliary variable.
#[inline]
pub fn select_auxiliary(h: f64, v: f64, r_max: f64) -> f64 {
    if h <= v {
        r_max
    } else {
        0.0
    }
}

/// Traffic and virtual queues for the whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueState {
    /// Per-user UL/DL traffic backlog, bits.
    pub q_ul: Vec<u64>,
    pub q_dl: Vec<u64>,
    /// Per-user auxiliary virtual queues, bits.
    pub h_ul: Vec<f64>,
    pub h_dl: Vec<f64>,
    /// Per-user UL power virtual queues, watt-subframes.
    pub z_ul: Vec<f64>,
    /// Per-SBS DL power virtual queues, watt-subframes.
    pub z_dl: Vec<f64>,
    /// Auxiliary rates chosen this subframe, bits/subframe.
    pub gamma_ul: Vec<f64>,
    pub gamma_dl: Vec<f64>,
}

impl QueueState {
    /// All queues start empty.
    pub fn new(num_users: usize, num_sbs: usize) -> Self {
        QueueState {
            q_ul: vec![0; num_users],
            q_dl: vec![0; num_users],
            h_ul: vec![0.0; num_users],
            h_dl: vec![0.0; num_users],
            z_ul: vec![0.0; num_users],
            z_dl: vec![0.0; num_sbs],
            gamma_ul: vec![0.0; num_users],
            gamma_dl: vec![0.0; num_users],
        }
    }

    pub fn num_users(&self) -> usize {
        self.q_ul.len()
    }

    #[inline]
    pub fn q(&self, u: usize, direction: Direction) -> u64 {
        match direction {
            Direction::Ul => self.q_ul[u],
            Direction::Dl => self.q_dl[u],
        }
    }

    /// Queue weight w = Q + H used by the schedulers.
    #[inline]
    pub fn weight(&self, u: usize, direction: Direction) -> f64 {
        match direction {
            Direction::Ul => self.q_ul[u] as f64 + self.h_ul[u],
            Direction::Dl => self.q_dl[u] as f64 + self.h_dl[u],
        }
    }

    /// Picks γ for every user-direction from the current H queues.
    pub fn select_auxiliaries(&mut self, v: f64, r_max: f64) {
        for u in 0..self.num_users() {
            self.gamma_ul[u] = select_auxiliary(self.h_ul[u], v, r_max);
            self.gamma_dl[u] = select_auxiliary(self.h_dl[u], v, r_max);
        }
    }

    /// Advances every virtual queue by one subframe.
    ///
    /// `rate_*` are the offered service rates in bits/subframe, `p_ul` the
    /// allocated UL powers (watts, zero when unscheduled) and `p_dl_sbs` the
    /// total DL power spent by each SBS.
    pub fn update_virtual_queues(
        &mut self,
        rate_ul: &[f64],
        rate_dl: &[f64],
        p_ul: &[f64],
        p_dl_sbs: &[f64],
        config: &ScenarioConfig,
    ) {
        for u in 0..self.num_users() {
            self.h_ul[u] = (self.h_ul[u] - rate_ul[u]).max(0.0) + self.gamma_ul[u];
            self.h_dl[u] = (self.h_dl[u] - rate_dl[u]).max(0.0) + self.gamma_dl[u];
            self.z_ul[u] = (self.z_ul[u] - config.delta_ul).max(0.0) + p_ul[u];
        }
        for b in 0..self.z_dl.len() {
            self.z_dl[b] = (self.z_dl[b] - config.delta_dl).max(0.0) + p_dl_sbs[b];
        }
    }
}

/// The finite constant bounding the drift-plus-penalty expression,
/// from raw per-link bounds. Diagnostics only.
#[allow(clippy::too_many_arguments)]
pub fn drift_bound_from_bounds(
    a_max_ul: f64,
    a_max_dl: f64,
    p_max_ul: f64,
    p_max_dl: f64,
    r_max_ul: f64,
    r_max_dl: f64,
    num_users: usize,
    num_sbs: usize,
) -> f64 {
    let per_user = a_max_ul * a_max_ul
        + a_max_dl * a_max_dl
        + 2.0 * p_max_ul * p_max_ul
        + 3.0 * r_max_ul * r_max_ul
        + 3.0 * r_max_dl * r_max_dl;
    0.5 * num_users as f64 * per_user + num_sbs as f64 * 2.0 * p_max_dl * p_max_dl
}

/// Drift bound constant for a configured scenario.
pub fn drift_bound_constant(config: &ScenarioConfig, num_users: usize, num_sbs: usize) -> f64 {
    drift_bound_from_bounds(
        config.a_max(),
        config.a_max(),
        config.p_max_ul,
        config.p_max_dl,
        config.r_max(),
        config.r_max(),
        num_users,
        num_sbs,
    )
}

/// One packet waiting in (or completed from) a traffic queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub arrival_subframe: usize,
    pub size_bits: u64,
    pub remaining_bits: u64,
}

/// A packet whose last bit has been served.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompletedPacket {
    pub arrival_subframe: usize,
    pub completion_subframe: usize,
    pub size_bits: u64,
}

/// FIFO packet composition of one traffic queue. Partial service is allowed
/// (fluid within a packet); a packet completes in the subframe its last bit
/// is served.
#[derive(Debug, Clone, Default)]
pub struct PacketFifo {
    packets: VecDeque<Packet>,
}

impl PacketFifo {
    pub fn new() -> Self {
        PacketFifo {
            packets: VecDeque::new(),
        }
    }

    pub fn push(&mut self, arrival_subframe: usize, size_bits: u64) {
        self.packets.push_back(Packet {
            arrival_subframe,
            size_bits,
            remaining_bits: size_bits,
        });
    }

    /// Total backlog in bits; always equals the matching traffic queue.
    pub fn backlog(&self) -> u64 {
        self.packets.iter().map(|p| p.remaining_bits).sum()
    }

    /// Serves `bits` in FIFO order at subframe `now`, returning completions.
    pub fn serve(&mut self, mut bits: u64, now: usize) -> Vec<CompletedPacket> {
        let mut done = Vec::new();
        while bits > 0 {
            let Some(head) = self.packets.front_mut() else {
                break;
            };
            if head.remaining_bits <= bits {
                bits -= head.remaining_bits;
                done.push(CompletedPacket {
                    arrival_subframe: head.arrival_subframe,
                    completion_subframe: now,
                    size_bits: head.size_bits,
                });
                self.packets.pop_front();
            } else {
                head.remaining_bits -= bits;
                bits = 0;
            }
        }
        done
    }
}

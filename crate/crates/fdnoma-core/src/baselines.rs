//! Benchmark schedulers: round-robin HD-OMA, queue-directed HD-NOMA,
//! threshold-paired FD-OMA, and the uncoordinated fixed-power variant of
//! the matched scheme.
//!
//! All baselines associate users to their nearest SBS and emit a structural
//! assignment plus fixed powers each subframe; none of them runs the power
//! optimizer.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::matching::{run_matching, MatchingContext, PreferenceProfile};
use crate::phy::{Assignment, Direction, PowerAllocation};
use crate::queues::QueueState;
use crate::topology::{ChannelGains, NetworkTopology};

/// Scheduling policy selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerPolicy {
    /// Matching plus convex-concave power optimization.
    Proposed,
    /// Nearest-SBS association, one user per subframe, round robin.
    HdOma,
    /// Round robin with gain-ratio NOMA grouping, direction by backlog.
    HdNoma,
    /// Round robin with FD pairing on low mutual user-user gain.
    FdOma,
    /// Matching for association/mode selection, fixed powers, no optimizer.
    Uncoordinated,
}

impl SchedulerPolicy {
    pub const ALL: [SchedulerPolicy; 5] = [
        SchedulerPolicy::Proposed,
        SchedulerPolicy::HdOma,
        SchedulerPolicy::HdNoma,
        SchedulerPolicy::FdOma,
        SchedulerPolicy::Uncoordinated,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerPolicy::Proposed => "proposed",
            SchedulerPolicy::HdOma => "hd-oma",
            SchedulerPolicy::HdNoma => "hd-noma",
            SchedulerPolicy::FdOma => "fd-oma",
            SchedulerPolicy::Uncoordinated => "uncoordinated",
        }
    }

    pub fn parse(name: &str) -> Option<SchedulerPolicy> {
        Self::ALL.iter().copied().find(|p| p.name() == name)
    }
}

impl core::fmt::Display for SchedulerPolicy {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for SchedulerPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchedulerPolicy::parse(s).ok_or_else(|| {
            let mut msg = String::from("unknown scheme: ");
            msg.push_str(s);
            msg
        })
    }
}

/// Round-robin pointers and the per-cell member cache shared by the
/// baseline schedulers. The pointers are the only mutable scheduler state.
#[derive(Debug, Clone)]
pub struct BaselineState {
    /// Users of each cell (nearest-SBS association), ascending.
    pub members: Vec<Vec<usize>>,
    /// Per-SBS pointer into the (user, direction) request ring.
    ring_ptr: Vec<usize>,
    /// Per-SBS per-direction pointers over the member list.
    ul_ptr: Vec<usize>,
    dl_ptr: Vec<usize>,
}

impl BaselineState {
    pub fn new(topo: &NetworkTopology) -> Self {
        let num_sbs = topo.num_sbs();
        let members: Vec<Vec<usize>> = (0..num_sbs).map(|b| topo.cell_members(b)).collect();
        BaselineState {
            members,
            ring_ptr: vec![0; num_sbs],
            ul_ptr: vec![0; num_sbs],
            dl_ptr: vec![0; num_sbs],
        }
    }

    /// The fixed (user, direction) request ring of cell `b`.
    fn ring(&self, b: usize) -> Vec<(usize, Direction)> {
        self.members[b]
            .iter()
            .flat_map(|&u| [(u, Direction::Ul), (u, Direction::Dl)])
            .collect()
    }

    /// Next backlogged slot at or after the pointer, if any.
    fn next_backlogged(
        &self,
        b: usize,
        queues: &QueueState,
    ) -> Option<(usize, (usize, Direction))> {
        let ring = self.ring(b);
        if ring.is_empty() {
            return None;
        }
        let start = self.ring_ptr[b] % ring.len();
        for off in 0..ring.len() {
            let idx = (start + off) % ring.len();
            let (u, d) = ring[idx];
            if queues.q(u, d) > 0 {
                return Some((idx, (u, d)));
            }
        }
        None
    }

    /// Backlogged members of `b` in `direction`, in round-robin order.
    fn backlogged_in_order(
        &self,
        b: usize,
        direction: Direction,
        queues: &QueueState,
    ) -> Vec<usize> {
        let members = &self.members[b];
        if members.is_empty() {
            return Vec::new();
        }
        let ptr = match direction {
            Direction::Ul => self.ul_ptr[b],
            Direction::Dl => self.dl_ptr[b],
        } % members.len();
        (0..members.len())
            .map(|off| members[(ptr + off) % members.len()])
            .filter(|&u| queues.q(u, direction) > 0)
            .collect()
    }

    fn advance_dir_ptr(&mut self, b: usize, direction: Direction, served_head: usize) {
        let members = &self.members[b];
        if let Some(pos) = members.iter().position(|&u| u == served_head) {
            match direction {
                Direction::Ul => self.ul_ptr[b] = (pos + 1) % members.len(),
                Direction::Dl => self.dl_ptr[b] = (pos + 1) % members.len(),
            }
        }
    }
}

/// NOMA power fractions over a gain-ranked group: rank weights
/// (k, k-1, ..., 1)/Σ laid over the group sorted strongest-first.
/// UL gives the largest fraction to the strongest user, DL to the weakest.
pub fn noma_power_fractions(group_size: usize, direction: Direction) -> Vec<f64> {
    let k = group_size;
    let total = (k * (k + 1) / 2) as f64;
    (0..k)
        .map(|rank| match direction {
            Direction::Ul => (k - rank) as f64 / total,
            Direction::Dl => (rank + 1) as f64 / total,
        })
        .collect()
}

/// HD-OMA: each SBS serves the next backlogged (user, direction) request
/// after its round-robin pointer, at full power.
pub fn schedule_hd_oma(
    state: &mut BaselineState,
    queues: &QueueState,
    config: &ScenarioConfig,
) -> (Assignment, PowerAllocation) {
    let num_sbs = state.members.len();
    let mut assignment = Assignment::idle(num_sbs);
    for b in 0..num_sbs {
        if let Some((idx, (u, d))) = state.next_backlogged(b, queues) {
            match d {
                Direction::Ul => assignment.cells[b].ul_users.push(u),
                Direction::Dl => assignment.cells[b].dl_users.push(u),
            }
            let ring_len = state.ring(b).len();
            state.ring_ptr[b] = (idx + 1) % ring_len;
        }
    }
    let mut powers = PowerAllocation::zeros(&assignment, queues.num_users());
    apply_full_power(&assignment, &mut powers, config);
    (assignment, powers)
}

/// HD-NOMA: the direction with the larger aggregate backlog wins (ties go
/// UL); users are grouped from the round-robin head while consecutive
/// gain ratios stay at or above the configured threshold, up to the quota.
pub fn schedule_hd_noma(
    state: &mut BaselineState,
    queues: &QueueState,
    channel: &ChannelGains,
    config: &ScenarioConfig,
) -> (Assignment, PowerAllocation) {
    let num_sbs = state.members.len();
    let mut assignment = Assignment::idle(num_sbs);
    let mut powers_todo: Vec<(usize, Direction, Vec<usize>)> = Vec::new();
    for b in 0..num_sbs {
        let ul_backlog: u64 = state.members[b].iter().map(|&u| queues.q_ul[u]).sum();
        let dl_backlog: u64 = state.members[b].iter().map(|&u| queues.q_dl[u]).sum();
        if ul_backlog == 0 && dl_backlog == 0 {
            continue;
        }
        let direction = if ul_backlog >= dl_backlog {
            Direction::Ul
        } else {
            Direction::Dl
        };
        let candidates = state.backlogged_in_order(b, direction, queues);
        if candidates.is_empty() {
            continue;
        }
        let group = grow_noma_group(&candidates, b, channel, config);
        state.advance_dir_ptr(b, direction, candidates[0]);
        match direction {
            Direction::Ul => {
                assignment.cells[b].ul_users = group.clone();
            }
            Direction::Dl => {
                assignment.cells[b].dl_users = group.clone();
            }
        }
        powers_todo.push((b, direction, group));
    }
    let mut powers = PowerAllocation::zeros(&assignment, queues.num_users());
    for (b, direction, group) in powers_todo {
        apply_noma_powers(&assignment, &mut powers, b, direction, &group, channel, config);
    }
    (assignment, powers)
}

/// Greedy group growth from the RR head: a candidate joins when the
/// gain-sorted group keeps every consecutive ratio at or above the
/// threshold.
fn grow_noma_group(
    candidates: &[usize],
    sbs: usize,
    channel: &ChannelGains,
    config: &ScenarioConfig,
) -> Vec<usize> {
    let mut group = vec![candidates[0]];
    for &cand in &candidates[1..] {
        if group.len() >= config.noma_quota {
            break;
        }
        let mut trial = group.clone();
        trial.push(cand);
        trial.sort_by(|&a, &b| {
            channel
                .sbs_user(sbs, b)
                .partial_cmp(&channel.sbs_user(sbs, a))
                .expect("finite gains")
                .then(a.cmp(&b))
        });
        let ok = trial.windows(2).all(|w| {
            channel.sbs_user(sbs, w[0]) >= config.noma_gain_ratio * channel.sbs_user(sbs, w[1])
        });
        if ok {
            group = trial;
        }
    }
    group
}

fn apply_noma_powers(
    assignment: &Assignment,
    powers: &mut PowerAllocation,
    b: usize,
    direction: Direction,
    group: &[usize],
    channel: &ChannelGains,
    config: &ScenarioConfig,
) {
    // Rank strongest-first for the fraction rule.
    let mut ranked = group.to_vec();
    ranked.sort_by(|&x, &y| {
        channel
            .sbs_user(b, y)
            .partial_cmp(&channel.sbs_user(b, x))
            .expect("finite gains")
            .then(x.cmp(&y))
    });
    let fractions = noma_power_fractions(ranked.len(), direction);
    for (rank, &u) in ranked.iter().enumerate() {
        match direction {
            Direction::Ul => powers.p_ul[u] = fractions[rank] * config.p_max_ul,
            Direction::Dl => {
                let slot = assignment.cells[b]
                    .dl_users
                    .iter()
                    .position(|&v| v == u)
                    .expect("group member is assigned");
                powers.p_dl[b][slot] = fractions[rank] * config.p_max_dl;
            }
        }
    }
}

/// FD-OMA: the heads of the UL and DL round-robin queues are paired in FD
/// when their mutual gain clears the pairing rule, otherwise the SBS falls
/// back to plain HD round robin for this subframe.
pub fn schedule_fd_oma(
    state: &mut BaselineState,
    queues: &QueueState,
    channel: &ChannelGains,
    config: &ScenarioConfig,
) -> (Assignment, PowerAllocation) {
    let num_sbs = state.members.len();
    let mut assignment = Assignment::idle(num_sbs);
    for b in 0..num_sbs {
        let ul_head = state
            .backlogged_in_order(b, Direction::Ul, queues)
            .first()
            .copied();
        let dl_head = state
            .backlogged_in_order(b, Direction::Dl, queues)
            .first()
            .copied();
        match (ul_head, dl_head) {
            (Some(ul), Some(dl)) if ul != dl && fd_pair_allowed(ul, dl, channel, config) => {
                assignment.cells[b].ul_users.push(ul);
                assignment.cells[b].dl_users.push(dl);
                state.advance_dir_ptr(b, Direction::Ul, ul);
                state.advance_dir_ptr(b, Direction::Dl, dl);
            }
            _ => {
                if let Some((idx, (u, d))) = state.next_backlogged(b, queues) {
                    match d {
                        Direction::Ul => assignment.cells[b].ul_users.push(u),
                        Direction::Dl => assignment.cells[b].dl_users.push(u),
                    }
                    let ring_len = state.ring(b).len();
                    state.ring_ptr[b] = (idx + 1) % ring_len;
                }
            }
        }
    }
    let mut powers = PowerAllocation::zeros(&assignment, queues.num_users());
    apply_full_power(&assignment, &mut powers, config);
    (assignment, powers)
}

/// Default rule: pair on *low* mutual gain (the UL transmission must not
/// drown the DL reception). `fd_pair_high_gain` flips the comparison to the
/// literal greater-than reading of the benchmark description.
fn fd_pair_allowed(
    ul: usize,
    dl: usize,
    channel: &ChannelGains,
    config: &ScenarioConfig,
) -> bool {
    let mutual = channel.user_user(ul, dl);
    if config.fd_pair_high_gain {
        mutual > config.fd_pair_gain_threshold
    } else {
        mutual <= config.fd_pair_gain_threshold
    }
}

/// Uncoordinated scheme: the matching algorithm (with learning) picks the
/// association and mode; powers stay fixed — full power for OMA/FD links,
/// baseline NOMA fractions for NOMA groups.
pub fn schedule_uncoordinated(
    ctx: &MatchingContext,
    channel: &ChannelGains,
    config: &ScenarioConfig,
    num_users: usize,
) -> (Assignment, PowerAllocation) {
    let profile = PreferenceProfile::build(ctx);
    let outcome = run_matching(ctx, &profile);
    let assignment = outcome.assignment;
    let mut powers = PowerAllocation::zeros(&assignment, num_users);
    for b in 0..assignment.cells.len() {
        let ul_group = assignment.cells[b].ul_users.clone();
        let dl_group = assignment.cells[b].dl_users.clone();
        if ul_group.len() > 1 {
            apply_noma_powers(&assignment, &mut powers, b, Direction::Ul, &ul_group, channel, config);
        } else {
            for &u in &ul_group {
                powers.p_ul[u] = config.p_max_ul;
            }
        }
        if dl_group.len() > 1 {
            apply_noma_powers(&assignment, &mut powers, b, Direction::Dl, &dl_group, channel, config);
        } else {
            for slot in 0..dl_group.len() {
                powers.p_dl[b][slot] = config.p_max_dl;
            }
        }
    }
    (assignment, powers)
}

fn apply_full_power(
    assignment: &Assignment,
    powers: &mut PowerAllocation,
    config: &ScenarioConfig,
) {
    for (b, cell) in assignment.cells.iter().enumerate() {
        for &u in &cell.ul_users {
            powers.p_ul[u] = config.p_max_ul;
        }
        for slot in 0..cell.dl_users.len() {
            powers.p_dl[b][slot] = config.p_max_dl;
        }
    }
}

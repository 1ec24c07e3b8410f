//! SINR and rate computation for any candidate or realized assignment.
//!
//! Everything here is a pure function over immutable inputs: an assignment
//! (who is served where, in which direction), a power allocation, and the
//! effective channel gains of the current subframe. The interference terms
//! are kept separated in an [`InterferenceBreakdown`] so each denominator
//! can be reconstructed and audited term by term.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::topology::ChannelGains;

pub use crate::queues::Direction;

/// Per-SBS transmission mode implied by an assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransmissionMode {
    Idle,
    HdOmaUl,
    HdOmaDl,
    HdNomaUl,
    HdNomaDl,
    FdOma,
}

/// Structural violation of the assignment constraints.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("user {user} appears in more than one served set")]
    UserReused { user: usize },
    #[error("SBS {sbs} mixes FD and NOMA: {ul} UL and {dl} DL users")]
    FdNomaMix { sbs: usize, ul: usize, dl: usize },
    #[error("SBS {sbs} exceeds the per-direction quota {quota}")]
    QuotaExceeded { sbs: usize, quota: usize },
}

/// Served users of one SBS in one subframe.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellAssignment {
    pub ul_users: Vec<usize>,
    pub dl_users: Vec<usize>,
}

impl CellAssignment {
    pub fn is_idle(&self) -> bool {
        self.ul_users.is_empty() && self.dl_users.is_empty()
    }

    pub fn mode(&self) -> TransmissionMode {
        match (self.ul_users.len(), self.dl_users.len()) {
            (0, 0) => TransmissionMode::Idle,
            (1, 0) => TransmissionMode::HdOmaUl,
            (0, 1) => TransmissionMode::HdOmaDl,
            (_, 0) => TransmissionMode::HdNomaUl,
            (0, _) => TransmissionMode::HdNomaDl,
            _ => TransmissionMode::FdOma,
        }
    }
}

/// Network-wide link assignment: which users each SBS serves and in which
/// direction. The indicator semantics x_bu^UL / x_bu^DL of the underlying
/// problem map to membership of `u` in `cells[b].ul_users` / `dl_users`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub cells: Vec<CellAssignment>,
}

impl Assignment {
    pub fn idle(num_sbs: usize) -> Self {
        Assignment {
            cells: vec![CellAssignment::default(); num_sbs],
        }
    }

    pub fn num_sbs(&self) -> usize {
        self.cells.len()
    }

    /// The SBS and direction serving `user`, if any.
    pub fn serving(&self, user: usize) -> Option<(usize, Direction)> {
        for (b, cell) in self.cells.iter().enumerate() {
            if cell.ul_users.contains(&user) {
                return Some((b, Direction::Ul));
            }
            if cell.dl_users.contains(&user) {
                return Some((b, Direction::Dl));
            }
        }
        None
    }

    /// Checks the structural constraints: a user is served by at most one
    /// SBS in one direction, an SBS never mixes FD with NOMA, and no served
    /// set exceeds the quota.
    pub fn validate(&self, num_users: usize, quota: usize) -> Result<(), AssignmentError> {
        let mut seen = vec![false; num_users];
        for (b, cell) in self.cells.iter().enumerate() {
            let ul = cell.ul_users.len();
            let dl = cell.dl_users.len();
            if ul > 0 && dl > 0 && (ul > 1 || dl > 1) {
                return Err(AssignmentError::FdNomaMix { sbs: b, ul, dl });
            }
            if ul > quota || dl > quota {
                return Err(AssignmentError::QuotaExceeded { sbs: b, quota });
            }
            for &u in cell.ul_users.iter().chain(cell.dl_users.iter()) {
                if seen[u] {
                    return Err(AssignmentError::UserReused { user: u });
                }
                seen[u] = true;
            }
        }
        Ok(())
    }
}

/// UL and DL transmit powers for one subframe.
///
/// `p_ul` is indexed by user (zero when unscheduled); `p_dl[b][i]` is the
/// power SBS `b` spends on `assignment.cells[b].dl_users[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p_ul: Vec<f64>,
    pub p_dl: Vec<Vec<f64>>,
}

impl PowerAllocation {
    pub fn zeros(assignment: &Assignment, num_users: usize) -> Self {
        PowerAllocation {
            p_ul: vec![0.0; num_users],
            p_dl: assignment
                .cells
                .iter()
                .map(|c| vec![0.0; c.dl_users.len()])
                .collect(),
        }
    }

    /// Total DL power p_b^DL spent by SBS `b`.
    pub fn p_dl_total(&self, b: usize) -> f64 {
        self.p_dl[b].iter().sum()
    }

    /// DL power allocated by SBS `b` to `user`, zero if not served.
    pub fn p_dl_of(&self, assignment: &Assignment, b: usize, user: usize) -> f64 {
        assignment.cells[b]
            .dl_users
            .iter()
            .position(|&u| u == user)
            .map_or(0.0, |i| self.p_dl[b][i])
    }
}

/// Decode ranking: `(g1, u1)` ranks above `(g2, u2)` when its gain is
/// strictly larger, with ties broken by ascending user index.
#[inline]
pub fn ranks_above(g1: f64, u1: usize, g2: f64, u2: usize) -> bool {
    g1 > g2 || (g1 == g2 && u1 < u2)
}

/// SIC decode order for a co-scheduled NOMA set: strongest channel first,
/// for both UL (the SBS peels the strongest user) and DL (a user cancels
/// everything ranked below itself).
pub fn noma_decode_order(users: &[usize], channel: &ChannelGains, sbs: usize) -> Vec<usize> {
    let mut order: Vec<usize> = users.to_vec();
    order.sort_by(|&a, &b| {
        let ga = channel.sbs_user(sbs, a);
        let gb = channel.sbs_user(sbs, b);
        gb.partial_cmp(&ga)
            .expect("gains are finite")
            .then(a.cmp(&b))
    });
    order
}

/// Additive interference terms of one SINR denominator, watts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InterferenceBreakdown {
    /// Inter-cell UL-to-UL (users served elsewhere, received at this SBS).
    pub ul_ul: f64,
    /// Inter-cell DL-to-UL (other SBSs' DL transmissions at this SBS).
    pub dl_ul: f64,
    /// Inter-cell DL-to-DL (other SBSs' DL transmissions at this user).
    pub dl_dl: f64,
    /// UL-to-DL (every UL transmitter at this user; includes the intra-cell
    /// FD partner).
    pub ul_dl: f64,
    /// Intra-cell NOMA interference at the SBS (co-scheduled weaker users).
    pub noma_ul: f64,
    /// Intra-cell NOMA interference at the user (co-scheduled stronger users).
    pub noma_dl: f64,
    /// Residual self-interference p_b^DL / ζ.
    pub self_interference: f64,
}

impl InterferenceBreakdown {
    /// Sum of every stored term.
    pub fn total(&self) -> f64 {
        self.ul_ul
            + self.dl_ul
            + self.dl_dl
            + self.ul_dl
            + self.noma_ul
            + self.noma_dl
            + self.self_interference
    }
}

/// SINR of one served link plus the interference audit trail.
#[derive(Debug, Clone, Copy)]
pub struct SinrResult {
    pub sinr: f64,
    pub breakdown: InterferenceBreakdown,
}

/// Exact SINR of `user` served by `sbs` in `direction` under the given
/// assignment and powers.
pub fn compute_sinr(
    assignment: &Assignment,
    powers: &PowerAllocation,
    channel: &ChannelGains,
    noise: f64,
    si_cancellation: f64,
    direction: Direction,
    sbs: usize,
    user: usize,
) -> SinrResult {
    let mut bd = InterferenceBreakdown::default();
    let signal;
    match direction {
        Direction::Ul => {
            debug_assert!(assignment.cells[sbs].ul_users.contains(&user));
            signal = powers.p_ul[user] * channel.sbs_user(sbs, user);
            let own_gain = channel.sbs_user(sbs, user);
            for (b, cell) in assignment.cells.iter().enumerate() {
                if b == sbs {
                    // Co-scheduled NOMA users ranked below `user` are not yet
                    // decoded and interfere; stronger ones were cancelled.
                    for &v in &cell.ul_users {
                        if v == user {
                            continue;
                        }
                        let g = channel.sbs_user(sbs, v);
                        if ranks_above(own_gain, user, g, v) {
                            bd.noma_ul += powers.p_ul[v] * g;
                        }
                    }
                } else {
                    for &v in &cell.ul_users {
                        bd.ul_ul += powers.p_ul[v] * channel.sbs_user(sbs, v);
                    }
                    bd.dl_ul += powers.p_dl_total(b) * channel.sbs_sbs(b, sbs);
                }
            }
            bd.self_interference = powers.p_dl_total(sbs) / si_cancellation;
        }
        Direction::Dl => {
            debug_assert!(assignment.cells[sbs].dl_users.contains(&user));
            let own_gain = channel.sbs_user(sbs, user);
            signal = powers.p_dl_of(assignment, sbs, user) * own_gain;
            for (b, cell) in assignment.cells.iter().enumerate() {
                if b == sbs {
                    // Messages for users ranked above `user` cannot be
                    // cancelled and are received through this user's own
                    // channel.
                    for (i, &v) in cell.dl_users.iter().enumerate() {
                        if v == user {
                            continue;
                        }
                        let g = channel.sbs_user(sbs, v);
                        if ranks_above(g, v, own_gain, user) {
                            bd.noma_dl += powers.p_dl[sbs][i] * own_gain;
                        }
                    }
                } else {
                    bd.dl_dl += powers.p_dl_total(b) * channel.sbs_user(b, user);
                }
                // UL-to-DL covers every UL transmitter, including the FD
                // partner inside this cell.
                for &v in &cell.ul_users {
                    bd.ul_dl += powers.p_ul[v] * channel.user_user(v, user);
                }
            }
        }
    }
    let denominator = noise + bd.total();
    SinrResult {
        sinr: signal / denominator,
        breakdown: bd,
    }
}

/// Shannon service rate in bits/second.
#[inline]
pub fn service_rate(sinr: f64, bandwidth: f64) -> f64 {
    bandwidth * math::log2(1.0 + sinr)
}

/// Decode margin of one ordered DL-NOMA pair: how much better the stronger
/// user `strong` decodes `weak`'s message than `weak` itself does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SicMargin {
    pub weak: usize,
    pub strong: usize,
    pub margin: f64,
}

/// SIC feasibility margins for every ordered pair of a DL-NOMA cell.
///
/// For each pair `(weak, strong)` with the strong user ranked above the weak
/// one, the margin is `Γ_b,weak^(strong,DL) - Γ_b,weak^DL`; the cell's power
/// split supports successful SIC iff every margin is non-negative.
pub fn sic_feasibility(
    assignment: &Assignment,
    powers: &PowerAllocation,
    channel: &ChannelGains,
    noise: f64,
    si_cancellation: f64,
    sbs: usize,
) -> Vec<SicMargin> {
    let dl = &assignment.cells[sbs].dl_users;
    let mut margins = Vec::new();
    for (wi, &weak) in dl.iter().enumerate() {
        let g_weak = channel.sbs_user(sbs, weak);
        for &strong in dl.iter() {
            let g_strong = channel.sbs_user(sbs, strong);
            if strong == weak || !ranks_above(g_strong, strong, g_weak, weak) {
                continue;
            }
            // Interference environment at the strong user while it decodes
            // the weak user's message: its own signal plus everything its
            // own SINR denominator carries.
            let at_strong = compute_sinr(
                assignment,
                powers,
                channel,
                noise,
                si_cancellation,
                Direction::Dl,
                sbs,
                strong,
            );
            let own_signal_strong =
                powers.p_dl_of(assignment, sbs, strong) * g_strong;
            let decode_den = own_signal_strong + noise + at_strong.breakdown.total();
            let decode_sinr = powers.p_dl[sbs][wi] * g_strong / decode_den;

            let weak_sinr = compute_sinr(
                assignment,
                powers,
                channel,
                noise,
                si_cancellation,
                Direction::Dl,
                sbs,
                weak,
            )
            .sinr;
            margins.push(SicMargin {
                weak,
                strong,
                margin: decode_sinr - weak_sinr,
            });
        }
    }
    margins
}

/// True when every SIC margin of the cell is non-negative.
pub fn sic_feasible(margins: &[SicMargin]) -> bool {
    margins.iter().all(|m| m.margin >= 0.0)
}

/// One member of a candidate set during matching: a user, the direction it
/// would be served in, and the fixed evaluation power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateMember {
    pub user: usize,
    pub direction: Direction,
    pub power: f64,
}

/// Estimated SINR of `member` when `sbs` serves exactly the candidate set
/// `members`: inter-cell interference is replaced by the learned estimates
/// (`learned_at_sbs` for UL, `learned_at_user` for DL) while intra-cell
/// interference is computed exactly from the candidate set.
pub fn estimated_sinr(
    members: &[CandidateMember],
    member: &CandidateMember,
    channel: &ChannelGains,
    noise: f64,
    si_cancellation: f64,
    learned_at_sbs: f64,
    learned_at_user: f64,
    sbs: usize,
) -> f64 {
    let own_gain = channel.sbs_user(sbs, member.user);
    match member.direction {
        Direction::Ul => {
            let mut intra = 0.0;
            let mut p_dl_total = 0.0;
            for other in members {
                match other.direction {
                    Direction::Ul => {
                        if other.user != member.user {
                            let g = channel.sbs_user(sbs, other.user);
                            if ranks_above(own_gain, member.user, g, other.user) {
                                intra += other.power * g;
                            }
                        }
                    }
                    Direction::Dl => p_dl_total += other.power,
                }
            }
            let den = noise + learned_at_sbs + intra + p_dl_total / si_cancellation;
            member.power * own_gain / den
        }
        Direction::Dl => {
            let mut intra = 0.0;
            for other in members {
                if other.user == member.user {
                    continue;
                }
                match other.direction {
                    Direction::Dl => {
                        let g = channel.sbs_user(sbs, other.user);
                        if ranks_above(g, other.user, own_gain, member.user) {
                            intra += other.power * own_gain;
                        }
                    }
                    Direction::Ul => {
                        intra += other.power * channel.user_user(other.user, member.user);
                    }
                }
            }
            let den = noise + learned_at_user + intra;
            member.power * own_gain / den
        }
    }
}

/// Estimated SIC margins of a DL-NOMA candidate set, by analogy with
/// [`sic_feasibility`] but with learned inter-cell terms.
pub fn estimated_sic_margins(
    members: &[CandidateMember],
    channel: &ChannelGains,
    noise: f64,
    learned_at_user: &[f64],
    sbs: usize,
) -> Vec<SicMargin> {
    let mut margins = Vec::new();
    for weak in members {
        debug_assert_eq!(weak.direction, Direction::Dl);
        let g_weak = channel.sbs_user(sbs, weak.user);
        for strong in members {
            let g_strong = channel.sbs_user(sbs, strong.user);
            if strong.user == weak.user
                || !ranks_above(g_strong, strong.user, g_weak, weak.user)
            {
                continue;
            }
            let mut noma_at_strong = 0.0;
            for other in members {
                let g = channel.sbs_user(sbs, other.user);
                if other.user != strong.user
                    && ranks_above(g, other.user, g_strong, strong.user)
                {
                    noma_at_strong += other.power * g_strong;
                }
            }
            let decode_den = strong.power * g_strong
                + noise
                + learned_at_user[strong.user]
                + noma_at_strong;
            let decode_sinr = weak.power * g_strong / decode_den;

            let weak_sinr = estimated_sinr(
                members,
                weak,
                channel,
                noise,
                f64::INFINITY,
                0.0,
                learned_at_user[weak.user],
                sbs,
            );
            margins.push(SicMargin {
                weak: weak.user,
                strong: strong.user,
                margin: decode_sinr - weak_sinr,
            });
        }
    }
    margins
}

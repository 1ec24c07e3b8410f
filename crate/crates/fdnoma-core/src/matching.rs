//! User–SBS association and mode selection as a many-to-one matching game.
//!
//! Preferences on both sides are built from *estimated* utilities: inter-cell
//! interference enters through learned EWMA estimates ([`LearnedInterference`],
//! one estimate per SBS receiver and one per user receiver), while intra-cell
//! interference of a candidate set is computed exactly. Freezing the
//! inter-cell terms removes the matching externalities, so preference
//! profiles stay fixed over the rounds of one subframe.
//!
//! The matching itself is a deferred-acceptance variant: unmatched users
//! propose down their preference lists, and each SBS repeatedly keeps the
//! best feasible direction-annotated subset of its candidate pool (current
//! members plus everyone who ever proposed and is currently unmatched).
//! Feasibility encodes the mode structure: one user per direction when both
//! are active (FD), per-direction NOMA quota, and estimated SIC margins for
//! DL-NOMA sets. Every user proposes to an SBS at most once, so the total
//! number of proposals never exceeds U·B.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::ScenarioConfig;
use crate::phy::{
    estimated_sic_margins, estimated_sinr, Assignment, CandidateMember, Direction,
};
use crate::queues::QueueState;
use crate::topology::ChannelGains;

/// Proposal pools larger than this fall back to gain-sorted prefix
/// enumeration for NOMA subsets instead of the full power set.
const EXHAUSTIVE_ENUM_LIMIT: usize = 12;

/// EWMA estimates of inter-cell interference power, watts.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedInterference {
    /// Î_b: estimate at each SBS (UL receiver).
    pub at_sbs: Vec<f64>,
    /// Ĵ_u: estimate at each user (DL receiver).
    pub at_user: Vec<f64>,
}

impl LearnedInterference {
    pub fn zeros(num_sbs: usize, num_users: usize) -> Self {
        LearnedInterference {
            at_sbs: vec![0.0; num_sbs],
            at_user: vec![0.0; num_users],
        }
    }
}

/// One EWMA step. `measured_*` carry the previous subframe's measured
/// inter-cell interference; `None` marks a node that was not receiving and
/// keeps its previous estimate.
pub fn update_learning(
    prev: &LearnedInterference,
    measured_sbs: &[Option<f64>],
    measured_user: &[Option<f64>],
    nu1: f64,
    nu2: f64,
) -> LearnedInterference {
    let at_sbs = prev
        .at_sbs
        .iter()
        .zip(measured_sbs)
        .map(|(&est, m)| match m {
            Some(measured) => nu1 * measured + (1.0 - nu1) * est,
            None => est,
        })
        .collect();
    let at_user = prev
        .at_user
        .iter()
        .zip(measured_user)
        .map(|(&est, m)| match m {
            Some(measured) => nu2 * measured + (1.0 - nu2) * est,
            None => est,
        })
        .collect();
    LearnedInterference { at_sbs, at_user }
}

/// Everything the preference machinery needs to value users and sets.
#[derive(Clone, Copy)]
pub struct MatchingContext<'a> {
    pub config: &'a ScenarioConfig,
    pub channel: &'a ChannelGains,
    pub queues: &'a QueueState,
    pub learned: &'a LearnedInterference,
    pub noise: f64,
}

impl<'a> MatchingContext<'a> {
    fn rate_scale(&self) -> f64 {
        // Rates enter the utilities in bits/subframe.
        self.config.bandwidth * self.config.subframe_duration
    }

    fn num_users(&self) -> usize {
        self.queues.num_users()
    }

    fn num_sbs(&self) -> usize {
        self.learned.at_sbs.len()
    }

    /// Directions a user currently has traffic for; empty-queue users do
    /// not participate.
    pub fn needs(&self, user: usize) -> Vec<Direction> {
        let mut needs = Vec::new();
        if self.queues.q_ul[user] > 0 {
            needs.push(Direction::Ul);
        }
        if self.queues.q_dl[user] > 0 {
            needs.push(Direction::Dl);
        }
        needs
    }
}

/// A candidate set rejected by the valuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibleSet {
    /// Violates the FD/NOMA structure (more than one user per direction
    /// while both directions are active).
    FdNomaMix,
    /// Exceeds the per-direction quota.
    QuotaExceeded,
    /// A DL-NOMA pair fails the estimated SIC margin check.
    SicInfeasible,
}

/// The additive pieces of one set valuation.
#[derive(Debug, Clone)]
pub struct UtilityTerms {
    /// Ψ̂ per member: estimated weighted rate, queue-bits × bits/subframe.
    pub psi: Vec<f64>,
    /// Ω_u^UL per member (zero for DL members).
    pub omega_ul: Vec<f64>,
    /// Ω_b^DL of the SBS.
    pub omega_dl: f64,
    /// Full set value Ω_b^DL + Σ (Ψ̂ + Ω_u).
    pub value: f64,
}

/// Fixed powers used while matching: UL members transmit at δ_u^UL and the
/// DL budget δ_b^DL is split equally over the DL members.
pub fn matching_phase_members(
    config: &ScenarioConfig,
    set: &[(usize, Direction)],
) -> Vec<CandidateMember> {
    let dl_count = set.iter().filter(|(_, d)| *d == Direction::Dl).count();
    set.iter()
        .map(|&(user, direction)| CandidateMember {
            user,
            direction,
            power: match direction {
                Direction::Ul => config.delta_ul,
                Direction::Dl => config.delta_dl / dl_count as f64,
            },
        })
        .collect()
}

/// Values the direction-annotated set `set` at SBS `sbs` under the fixed
/// matching-phase powers and the learned inter-cell estimates.
pub fn utility_terms(
    ctx: &MatchingContext,
    sbs: usize,
    set: &[(usize, Direction)],
) -> Result<UtilityTerms, InfeasibleSet> {
    let ul_count = set.iter().filter(|(_, d)| *d == Direction::Ul).count();
    let dl_count = set.len() - ul_count;
    if ul_count > 0 && dl_count > 0 && (ul_count > 1 || dl_count > 1) {
        return Err(InfeasibleSet::FdNomaMix);
    }
    let quota = ctx.config.noma_quota;
    if ul_count > quota || dl_count > quota {
        return Err(InfeasibleSet::QuotaExceeded);
    }

    let members = matching_phase_members(ctx.config, set);
    if dl_count >= 2 {
        let dl_members: Vec<CandidateMember> = members
            .iter()
            .filter(|m| m.direction == Direction::Dl)
            .copied()
            .collect();
        let margins = estimated_sic_margins(
            &dl_members,
            ctx.channel,
            ctx.noise,
            &ctx.learned.at_user,
            sbs,
        );
        if !margins.iter().all(|m| m.margin >= 0.0) {
            return Err(InfeasibleSet::SicInfeasible);
        }
    }

    let scale = ctx.rate_scale();
    let mut psi = Vec::with_capacity(members.len());
    let mut omega_ul = Vec::with_capacity(members.len());
    let mut p_dl_total = 0.0;
    for member in &members {
        let sinr = estimated_sinr(
            &members,
            member,
            ctx.channel,
            ctx.noise,
            ctx.config.si_cancellation,
            ctx.learned.at_sbs[sbs],
            ctx.learned.at_user[member.user],
            sbs,
        );
        let rate = scale * crate::math::log2(1.0 + sinr);
        psi.push(ctx.queues.weight(member.user, member.direction) * rate);
        match member.direction {
            Direction::Ul => {
                omega_ul.push(ctx.queues.z_ul[member.user] * (ctx.config.delta_ul - member.power));
            }
            Direction::Dl => {
                omega_ul.push(0.0);
                p_dl_total += member.power;
            }
        }
    }
    let omega_dl = ctx.queues.z_dl[sbs] * (ctx.config.delta_dl - p_dl_total);
    let value = omega_dl + psi.iter().sum::<f64>() + omega_ul.iter().sum::<f64>();
    Ok(UtilityTerms {
        psi,
        omega_ul,
        omega_dl,
        value,
    })
}

/// User-side score of SBS `b`: the sum over needed directions of the
/// estimated weighted rate, assuming single-user service at the fixed
/// powers. Intra-cell interference is deliberately ignored here.
pub fn user_score(ctx: &MatchingContext, user: usize, sbs: usize) -> f64 {
    let scale = ctx.rate_scale();
    let gain = ctx.channel.sbs_user(sbs, user);
    let mut score = 0.0;
    for direction in ctx.needs(user) {
        let (power, inter) = match direction {
            Direction::Ul => (ctx.config.delta_ul, ctx.learned.at_sbs[sbs]),
            Direction::Dl => (ctx.config.delta_dl, ctx.learned.at_user[user]),
        };
        let sinr = power * gain / (ctx.noise + inter);
        score += ctx.queues.weight(user, direction) * scale * crate::math::log2(1.0 + sinr);
    }
    score
}

/// Frozen preference profiles for one subframe: per-user ranked SBS lists
/// and the per-user direction needs.
pub struct PreferenceProfile {
    /// Per user: SBS indices with scores, best first (ties by SBS index).
    pub ranked: Vec<Vec<(usize, f64)>>,
    /// Per user: directions with backlog.
    pub needs: Vec<Vec<Direction>>,
}

impl PreferenceProfile {
    pub fn build(ctx: &MatchingContext) -> Self {
        let num_users = ctx.num_users();
        let num_sbs = ctx.num_sbs();
        let mut ranked = Vec::with_capacity(num_users);
        let mut needs = Vec::with_capacity(num_users);
        for u in 0..num_users {
            let need = ctx.needs(u);
            let mut scored: Vec<(usize, f64)> = if need.is_empty() {
                Vec::new()
            } else {
                (0..num_sbs).map(|b| (b, user_score(ctx, u, b))).collect()
            };
            scored.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .expect("scores are finite")
                    .then(a.0.cmp(&b.0))
            });
            ranked.push(scored);
            needs.push(need);
        }
        PreferenceProfile { ranked, needs }
    }

    /// Strict user preference: does `u` prefer `b` over its current match?
    /// An unmatched user prefers any SBS it has a score for.
    pub fn prefers(&self, user: usize, sbs: usize, current: Option<usize>) -> bool {
        let score_of = |b: usize| {
            self.ranked[user]
                .iter()
                .find(|(s, _)| *s == b)
                .map(|(_, v)| *v)
        };
        let Some(new) = score_of(sbs) else {
            return false;
        };
        match current {
            None => true,
            Some(cur) => {
                let cur_score = score_of(cur).expect("current match was ranked");
                new > cur_score || (new == cur_score && sbs < cur)
            }
        }
    }
}

/// Result of one matching run.
#[derive(Debug, Clone)]
pub struct MatchingOutcome {
    pub assignment: Assignment,
    /// Per user: serving SBS and direction, if matched.
    pub matched: Vec<Option<(usize, Direction)>>,
    /// Total proposals sent over all rounds (bounded by U·B).
    pub total_proposals: usize,
    pub rounds: usize,
}

/// Deterministic total order on candidate sets: higher value first, then
/// fewer members, then lexicographically smaller (user, direction) lists.
fn candidate_beats(
    value_a: f64,
    set_a: &[(usize, Direction)],
    value_b: f64,
    set_b: &[(usize, Direction)],
) -> bool {
    if value_a != value_b {
        return value_a > value_b;
    }
    if set_a.len() != set_b.len() {
        return set_a.len() < set_b.len();
    }
    let key = |s: &[(usize, Direction)]| {
        let mut k: Vec<(usize, u8)> = s
            .iter()
            .map(|&(u, d)| (u, if d == Direction::Ul { 0u8 } else { 1u8 }))
            .collect();
        k.sort_unstable();
        k
    };
    key(set_a) < key(set_b)
}

/// Enumerates the feasible direction-annotated family of a candidate pool:
/// singletons, UL/DL NOMA subsets up to the quota, and FD pairs. Pools
/// larger than [`EXHAUSTIVE_ENUM_LIMIT`] per direction use gain-sorted
/// prefixes for the NOMA subsets.
fn feasible_candidates(
    ctx: &MatchingContext,
    sbs: usize,
    pool: &[usize],
    needs: &[Vec<Direction>],
) -> Vec<Vec<(usize, Direction)>> {
    let mut out: Vec<Vec<(usize, Direction)>> = Vec::new();
    let ul_pool: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&u| needs[u].contains(&Direction::Ul))
        .collect();
    let dl_pool: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&u| needs[u].contains(&Direction::Dl))
        .collect();

    // Singletons.
    for &u in pool {
        for &d in &needs[u] {
            out.push(vec![(u, d)]);
        }
    }
    // FD pairs: one UL with one DL.
    for &ul in &ul_pool {
        for &dl in &dl_pool {
            if ul != dl {
                out.push(vec![(ul, Direction::Ul), (dl, Direction::Dl)]);
            }
        }
    }
    // NOMA groups per direction.
    for (dir_pool, direction) in [(&ul_pool, Direction::Ul), (&dl_pool, Direction::Dl)] {
        let quota = ctx.config.noma_quota;
        if dir_pool.len() <= EXHAUSTIVE_ENUM_LIMIT {
            let n = dir_pool.len();
            for mask in 1u32..(1u32 << n) {
                let size = mask.count_ones() as usize;
                if size < 2 || size > quota {
                    continue;
                }
                let set: Vec<(usize, Direction)> = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| (dir_pool[i], direction))
                    .collect();
                out.push(set);
            }
        } else {
            // Gain-sorted prefixes keep the gain-ordered structure NOMA
            // exploits without the exponential blowup.
            let mut sorted = dir_pool.clone();
            sorted.sort_by(|&a, &b| {
                let ga = ctx.channel.sbs_user(sbs, a);
                let gb = ctx.channel.sbs_user(sbs, b);
                gb.partial_cmp(&ga).expect("finite gains").then(a.cmp(&b))
            });
            for size in 2..=quota.min(sorted.len()) {
                let set: Vec<(usize, Direction)> =
                    sorted[..size].iter().map(|&u| (u, direction)).collect();
                out.push(set);
            }
        }
    }
    out
}

/// Best feasible direction-annotated subset of `pool` by the SBS valuation,
/// with the deterministic tie-break of [`candidate_beats`].
fn best_subset(
    ctx: &MatchingContext,
    sbs: usize,
    pool: &[usize],
    needs: &[Vec<Direction>],
) -> Option<(Vec<(usize, Direction)>, f64)> {
    let mut best: Option<(Vec<(usize, Direction)>, f64)> = None;
    for candidate in feasible_candidates(ctx, sbs, pool, needs) {
        let Ok(terms) = utility_terms(ctx, sbs, &candidate) else {
            continue;
        };
        let beats = match &best {
            None => true,
            Some((set, value)) => candidate_beats(terms.value, &candidate, *value, set),
        };
        if beats {
            best = Some((candidate, terms.value));
        }
    }
    best
}

/// Runs the proposal/acceptance rounds and returns a matching that is
/// pairwise stable with respect to the frozen estimated preferences.
pub fn run_matching(ctx: &MatchingContext, profile: &PreferenceProfile) -> MatchingOutcome {
    let num_users = ctx.num_users();
    let num_sbs = ctx.num_sbs();

    // Remaining preference list per user (SBS indices, best first).
    let mut remaining: Vec<Vec<usize>> = profile
        .ranked
        .iter()
        .map(|l| l.iter().map(|(b, _)| *b).collect())
        .collect();
    let mut matched: Vec<Option<(usize, Direction)>> = vec![None; num_users];
    // Users that ever proposed to each SBS; a rejected user stays available
    // to the SBS while it remains unmatched.
    let mut ever_proposed: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); num_sbs];
    let mut accepted: Vec<Vec<(usize, Direction)>> = vec![Vec::new(); num_sbs];
    let mut pool_dirty = vec![false; num_sbs];

    let mut total_proposals = 0usize;
    let mut rounds = 0usize;
    let round_cap = (num_users + 2) * (num_sbs + 2) + 64;

    loop {
        let mut progressed = false;

        // Proposal phase: every unmatched user with a non-empty list
        // proposes to its current top choice.
        for u in 0..num_users {
            if matched[u].is_none() && !profile.needs[u].is_empty() {
                if let Some(&target) = remaining[u].first() {
                    if ever_proposed[target].insert(u) {
                        total_proposals += 1;
                        pool_dirty[target] = true;
                        progressed = true;
                    }
                }
            }
        }

        // Acceptance phase: each SBS with a changed pool re-picks the best
        // feasible subset.
        for b in 0..num_sbs {
            if !pool_dirty[b] {
                continue;
            }
            pool_dirty[b] = false;
            let pool: Vec<usize> = (0..num_users)
                .filter(|&u| match matched[u] {
                    Some((m, _)) => m == b,
                    None => ever_proposed[b].contains(&u),
                })
                .collect();
            let choice = best_subset(ctx, b, &pool, &profile.needs);
            let new_set = choice.map(|(set, _)| set).unwrap_or_default();
            if new_set != accepted[b] {
                progressed = true;
                // Evict members not in the new set.
                let old_set = core::mem::take(&mut accepted[b]);
                for &(u, _) in &old_set {
                    if !new_set.iter().any(|&(v, _)| v == u) {
                        matched[u] = None;
                        strike(&mut remaining[u], b);
                        // An evicted user re-enters the pool of every SBS
                        // it ever proposed to.
                        for (target, proposed) in ever_proposed.iter().enumerate() {
                            if target != b && proposed.contains(&u) {
                                pool_dirty[target] = true;
                            }
                        }
                    }
                }
                for &(u, d) in &new_set {
                    if matched[u].is_none() {
                        // Newly taken: other SBSs lose this user from their
                        // pools.
                        for (target, proposed) in ever_proposed.iter().enumerate() {
                            if target != b && proposed.contains(&u) {
                                pool_dirty[target] = true;
                            }
                        }
                    }
                    matched[u] = Some((b, d));
                }
                accepted[b] = new_set;
            }
            // Everyone considered and left unmatched strikes this SBS.
            for &u in &pool {
                if matched[u].is_none() {
                    strike(&mut remaining[u], b);
                }
            }
        }

        if !progressed {
            break;
        }
        rounds += 1;
        if rounds > round_cap {
            debug_assert!(false, "matching failed to settle within {round_cap} rounds");
            break;
        }
    }

    let mut assignment = Assignment::idle(num_sbs);
    for (b, set) in accepted.iter().enumerate() {
        for &(u, d) in set {
            match d {
                Direction::Ul => assignment.cells[b].ul_users.push(u),
                Direction::Dl => assignment.cells[b].dl_users.push(u),
            }
        }
        assignment.cells[b].ul_users.sort_unstable();
        assignment.cells[b].dl_users.sort_unstable();
    }
    MatchingOutcome {
        assignment,
        matched,
        total_proposals,
        rounds,
    }
}

fn strike(remaining: &mut Vec<usize>, sbs: usize) {
    remaining.retain(|&b| b != sbs);
}

/// Scans every user–SBS pair for a blocking pair; returns the first witness
/// `(user, sbs)` if the matching is not pairwise stable.
pub fn verify_pairwise_stability(
    ctx: &MatchingContext,
    profile: &PreferenceProfile,
    outcome: &MatchingOutcome,
) -> Result<(), (usize, usize)> {
    let num_sbs = ctx.num_sbs();
    for u in 0..ctx.num_users() {
        if profile.needs[u].is_empty() {
            continue;
        }
        let current = outcome.matched[u].map(|(b, _)| b);
        for b in 0..num_sbs {
            if current == Some(b) {
                continue;
            }
            if !profile.prefers(u, b, current) {
                continue;
            }
            let incumbent_set: Vec<(usize, Direction)> = outcome.assignment.cells[b]
                .ul_users
                .iter()
                .map(|&v| (v, Direction::Ul))
                .chain(
                    outcome.assignment.cells[b]
                        .dl_users
                        .iter()
                        .map(|&v| (v, Direction::Dl)),
                )
                .collect();
            let incumbent_value = match utility_terms(ctx, b, &incumbent_set) {
                Ok(t) => t.value,
                Err(_) => continue,
            };
            let users: Vec<usize> = incumbent_set
                .iter()
                .map(|&(v, _)| v)
                .chain(core::iter::once(u))
                .collect();
            if let Some((set, value)) =
                best_arrangement_of_exact_set(ctx, b, &users, &profile.needs)
            {
                if candidate_beats(value, &set, incumbent_value, &incumbent_set) {
                    return Err((u, b));
                }
            }
        }
    }
    Ok(())
}

/// Best feasible direction assignment for exactly the given user set (no
/// member may be dropped); `None` when no arrangement is feasible.
pub fn best_arrangement_of_exact_set(
    ctx: &MatchingContext,
    sbs: usize,
    users: &[usize],
    needs: &[Vec<Direction>],
) -> Option<(Vec<(usize, Direction)>, f64)> {
    let mut best: Option<(Vec<(usize, Direction)>, f64)> = None;
    let n = users.len();
    if users.iter().any(|&u| needs[u].is_empty()) {
        return None;
    }
    let mut dirs = vec![0usize; n];
    'outer: loop {
        let set: Vec<(usize, Direction)> = users
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, needs[u][dirs[i]]))
            .collect();
        if let Ok(terms) = utility_terms(ctx, sbs, &set) {
            let beats = match &best {
                None => true,
                Some((s, v)) => candidate_beats(terms.value, &set, *v, s),
            };
            if beats {
                best = Some((set, terms.value));
            }
        }
        // Advance the mixed-radix direction counter.
        for i in 0..n {
            dirs[i] += 1;
            if dirs[i] < needs[users[i]].len() {
                continue 'outer;
            }
            dirs[i] = 0;
        }
        break;
    }
    best
}

//! UL/DL power optimization for the matched users of one subframe.
//!
//! The weighted-rate objective is non-concave through the interference
//! terms, but splits exactly into a concave part `F` (log of signal plus
//! interference), a convex part `G` (negative log of interference) and an
//! affine part `Ω` (power virtual-queue terms), all over the stacked vector
//! of UL and DL powers. The convex part is replaced by its tangent at the
//! current iterate and the resulting concave surrogate is maximized with a
//! log-barrier interior-point method; iterating tangent point and inner
//! solve drives the true objective monotonically upward to a local optimum.
//!
//! The DL SIC decode constraints cross-multiply into inequalities that are
//! *linear* in the powers (the decoded user's own power cancels), so they
//! join the box and per-SBS sum constraints in the inner problem unchanged
//! at every iteration.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::ScenarioConfig;
use crate::math;
use crate::phy::{
    compute_sinr, ranks_above, Assignment, Direction, PowerAllocation,
};
use crate::queues::QueueState;
use crate::topology::ChannelGains;

const LN2: f64 = core::f64::consts::LN_2;

/// Per-iteration snapshot of the CCP loop.
#[derive(Debug, Clone, Copy)]
pub struct CcpState {
    pub iteration: usize,
    pub objective: f64,
    pub improvement: f64,
}

/// Outcome of one power-optimization run.
#[derive(Debug, Clone)]
pub struct CcpResult {
    pub powers: PowerAllocation,
    /// True objective after each iteration, starting with the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Set when the loop stopped at the iteration cap instead of the
    /// improvement threshold.
    pub hit_iteration_cap: bool,
    /// Set when no strictly feasible start was found and the fixed matching
    /// powers were returned unchanged.
    pub fell_back: bool,
}

/// The inner solver could not produce a strictly feasible point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no strictly feasible starting point for the power subproblem")]
pub struct InfeasibleStart;

/// One weighted-rate term over the stacked power vector: the SINR of link
/// `j` is `signal_coef·x[signal_var] / (noise + Σ interf_coefs·x)`.
#[derive(Debug, Clone)]
struct LinkTerm {
    /// w · f_b · subframe / ln 2 — multiplies natural logs.
    kappa: f64,
    signal_var: usize,
    signal_coef: f64,
    interf: Vec<(usize, f64)>,
}

/// The UDPO instance for one matching outcome: variable layout, per-link
/// coefficient structure, affine objective part and constraint rows.
pub struct PowerProblem {
    /// Variable index -> UL user.
    pub ul_vars: Vec<usize>,
    /// Variable index offset `ul_vars.len()` onwards -> (sbs, slot) into
    /// `assignment.cells[sbs].dl_users`.
    pub dl_vars: Vec<(usize, usize)>,
    n: usize,
    noise: f64,
    links: Vec<LinkTerm>,
    omega_const: f64,
    omega_lin: Vec<f64>,
    upper: Vec<f64>,
    /// Per-SBS DL power budget rows: (sbs, vars).
    dl_sum_rows: Vec<(usize, Vec<usize>)>,
    /// SIC rows c0 + cᵀx ≥ 0.
    sic_rows: Vec<(f64, Vec<f64>)>,
    p_max_dl: f64,
}

impl PowerProblem {
    /// Assembles the instance from a matching outcome. Only scheduled links
    /// appear; the channel knowledge required is limited to the scheduled
    /// users' gains.
    pub fn build(
        assignment: &Assignment,
        queues: &QueueState,
        channel: &ChannelGains,
        config: &ScenarioConfig,
        noise: f64,
    ) -> Self {
        let mut ul_vars = Vec::new();
        let mut dl_vars = Vec::new();
        for (b, cell) in assignment.cells.iter().enumerate() {
            for &u in &cell.ul_users {
                ul_vars.push(u);
            }
            for slot in 0..cell.dl_users.len() {
                dl_vars.push((b, slot));
            }
        }
        let n = ul_vars.len() + dl_vars.len();
        let ul_var_of = |user: usize| ul_vars.iter().position(|&u| u == user);
        let dl_var_index = |sbs: usize, slot: usize| {
            ul_vars.len()
                + dl_vars
                    .iter()
                    .position(|&(b, s)| b == sbs && s == slot)
                    .expect("dl var exists")
        };

        let scale = config.bandwidth * config.subframe_duration / LN2;
        let mut links = Vec::new();
        let mut omega_const = 0.0;
        let mut omega_lin = vec![0.0; n];

        for (b, cell) in assignment.cells.iter().enumerate() {
            // UL links at SBS b.
            for &u in &cell.ul_users {
                let own_gain = channel.sbs_user(b, u);
                let mut interf: Vec<(usize, f64)> = Vec::new();
                for (b2, cell2) in assignment.cells.iter().enumerate() {
                    if b2 == b {
                        for &v in &cell2.ul_users {
                            if v == u {
                                continue;
                            }
                            let g = channel.sbs_user(b, v);
                            if ranks_above(own_gain, u, g, v) {
                                interf.push((ul_var_of(v).unwrap(), g));
                            }
                        }
                        for slot in 0..cell2.dl_users.len() {
                            interf.push((
                                dl_var_index(b2, slot),
                                1.0 / config.si_cancellation,
                            ));
                        }
                    } else {
                        for &v in &cell2.ul_users {
                            interf.push((ul_var_of(v).unwrap(), channel.sbs_user(b, v)));
                        }
                        let g = channel.sbs_sbs(b2, b);
                        for slot in 0..cell2.dl_users.len() {
                            interf.push((dl_var_index(b2, slot), g));
                        }
                    }
                }
                links.push(LinkTerm {
                    kappa: queues.weight(u, Direction::Ul) * scale,
                    signal_var: ul_var_of(u).unwrap(),
                    signal_coef: own_gain,
                    interf,
                });
            }
            // DL links of SBS b.
            for (slot, &u) in cell.dl_users.iter().enumerate() {
                let own_gain = channel.sbs_user(b, u);
                let mut interf: Vec<(usize, f64)> = Vec::new();
                for (b2, cell2) in assignment.cells.iter().enumerate() {
                    for &v in &cell2.ul_users {
                        interf.push((ul_var_of(v).unwrap(), channel.user_user(v, u)));
                    }
                    if b2 == b {
                        for (slot2, &v) in cell2.dl_users.iter().enumerate() {
                            if v == u {
                                continue;
                            }
                            let g = channel.sbs_user(b, v);
                            if ranks_above(g, v, own_gain, u) {
                                interf.push((dl_var_index(b, slot2), own_gain));
                            }
                        }
                    } else {
                        let g = channel.sbs_user(b2, u);
                        for slot2 in 0..cell2.dl_users.len() {
                            interf.push((dl_var_index(b2, slot2), g));
                        }
                    }
                }
                links.push(LinkTerm {
                    kappa: queues.weight(u, Direction::Dl) * scale,
                    signal_var: dl_var_index(b, slot),
                    signal_coef: own_gain,
                    interf,
                });
            }
        }

        // Affine part: Z_u(δ_u − p_u) for every matched user, Z_b(δ_b − p_b)
        // for every SBS. Constants matter for the reported objective.
        for b in 0..assignment.cells.len() {
            omega_const += queues.z_dl[b] * config.delta_dl;
            for &u in &assignment.cells[b].ul_users {
                omega_const += queues.z_ul[u] * config.delta_ul;
                omega_lin[ul_var_of(u).unwrap()] -= queues.z_ul[u];
            }
            for (slot, &u) in assignment.cells[b].dl_users.iter().enumerate() {
                omega_const += queues.z_ul[u] * config.delta_ul;
                omega_lin[dl_var_index(b, slot)] -= queues.z_dl[b];
            }
        }

        let mut upper = vec![0.0; n];
        for (i, _) in ul_vars.iter().enumerate() {
            upper[i] = config.p_max_ul;
        }
        for i in ul_vars.len()..n {
            upper[i] = config.p_max_dl;
        }

        let mut dl_sum_rows = Vec::new();
        for (b, cell) in assignment.cells.iter().enumerate() {
            if !cell.dl_users.is_empty() {
                let vars: Vec<usize> =
                    (0..cell.dl_users.len()).map(|s| dl_var_index(b, s)).collect();
                dl_sum_rows.push((b, vars));
            }
        }

        // SIC rows: for each DL-NOMA pair (weak w, strong s) the decode
        // condition cross-multiplies to h_s·D_w(x) − h_w·D'_s(x) ≥ 0 with
        // both D terms affine in x (the weak user's own power cancels).
        let mut sic_rows = Vec::new();
        for (b, cell) in assignment.cells.iter().enumerate() {
            if cell.dl_users.len() < 2 {
                continue;
            }
            for &w in &cell.dl_users {
                let g_w = channel.sbs_user(b, w);
                for &s in &cell.dl_users {
                    let g_s = channel.sbs_user(b, s);
                    if s == w || !ranks_above(g_s, s, g_w, w) {
                        continue;
                    }
                    let mut c = vec![0.0; n];
                    let mut c0 = 0.0;
                    // + h_s · D_w(x): everything in the weak user's own
                    // denominator.
                    c0 += g_s * noise;
                    accumulate_dl_denominator(
                        assignment, channel, b, w, g_w, g_s, 1.0, &mut c,
                        &ul_var_of, &dl_var_index,
                    );
                    // − h_w · D'_s(x): the strong user's decode denominator:
                    // its own signal power plus its environment interference.
                    c0 -= g_w * noise;
                    let s_slot = cell.dl_users.iter().position(|&v| v == s).unwrap();
                    c[dl_var_index(b, s_slot)] -= g_w * g_s;
                    accumulate_dl_denominator(
                        assignment, channel, b, s, g_s, g_w, -1.0, &mut c,
                        &ul_var_of, &dl_var_index,
                    );
                    sic_rows.push((c0, c));
                }
            }
        }

        PowerProblem {
            ul_vars,
            dl_vars,
            n,
            noise,
            links,
            omega_const,
            omega_lin,
            upper,
            dl_sum_rows,
            sic_rows,
            p_max_dl: config.p_max_dl,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    /// Stacks a [`PowerAllocation`] into the problem's variable order.
    pub fn stack(&self, powers: &PowerAllocation) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n);
        for &u in &self.ul_vars {
            x.push(powers.p_ul[u]);
        }
        for &(b, slot) in &self.dl_vars {
            x.push(powers.p_dl[b][slot]);
        }
        x
    }

    /// Expands a stacked vector back into a [`PowerAllocation`].
    pub fn unstack(&self, assignment: &Assignment, num_users: usize, x: &[f64]) -> PowerAllocation {
        let mut powers = PowerAllocation::zeros(assignment, num_users);
        for (i, &u) in self.ul_vars.iter().enumerate() {
            powers.p_ul[u] = x[i];
        }
        for (k, &(b, slot)) in self.dl_vars.iter().enumerate() {
            powers.p_dl[b][slot] = x[self.ul_vars.len() + k];
        }
        powers
    }

    fn interference_at(&self, link: &LinkTerm, x: &[f64]) -> f64 {
        link.interf.iter().map(|&(i, c)| c * x[i]).sum()
    }

    /// Concave part F(x) = Σ κ ln(N0 + signal + interference).
    pub fn f_value(&self, x: &[f64]) -> f64 {
        self.links
            .iter()
            .map(|l| {
                l.kappa
                    * math::ln(self.noise + l.signal_coef * x[l.signal_var]
                        + self.interference_at(l, x))
            })
            .sum()
    }

    /// Convex part G(x) = −Σ κ ln(N0 + interference).
    pub fn g_value(&self, x: &[f64]) -> f64 {
        -self
            .links
            .iter()
            .map(|l| l.kappa * math::ln(self.noise + self.interference_at(l, x)))
            .sum::<f64>()
    }

    /// Affine part Ω(x).
    pub fn omega_value(&self, x: &[f64]) -> f64 {
        self.omega_const
            + self
                .omega_lin
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// True objective F + G + Ω through the coefficient route.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.f_value(x) + self.g_value(x) + self.omega_value(x)
    }

    /// Analytic gradient of F.
    pub fn f_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for l in &self.links {
            let den =
                self.noise + l.signal_coef * x[l.signal_var] + self.interference_at(l, x);
            let w = l.kappa / den;
            g[l.signal_var] += w * l.signal_coef;
            for &(i, c) in &l.interf {
                g[i] += w * c;
            }
        }
        g
    }

    /// Analytic gradient of G.
    pub fn g_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for l in &self.links {
            let den = self.noise + self.interference_at(l, x);
            let w = -l.kappa / den;
            for &(i, c) in &l.interf {
                g[i] += w * c;
            }
        }
        g
    }

    /// Tangent of the convex part at `x_ref`: G̃(x) = G(x_ref) +
    /// ∇G(x_ref)ᵀ(x − x_ref). Convexity puts the tangent below G everywhere,
    /// so the surrogate F + G̃ + Ω under-estimates the true objective with
    /// equality at the reference point.
    pub fn linearize_convex(&self, x_ref: &[f64]) -> (f64, Vec<f64>) {
        let g0 = self.g_value(x_ref);
        let grad = self.g_gradient(x_ref);
        let c0 = g0 - grad.iter().zip(x_ref).map(|(g, v)| g * v).sum::<f64>();
        (c0, grad)
    }

    /// Surrogate value at `x` for the tangent taken at `x_ref`.
    pub fn surrogate(&self, x: &[f64], tangent: &(f64, Vec<f64>)) -> f64 {
        self.f_value(x)
            + tangent.0
            + tangent.1.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
            + self.omega_value(x)
    }

    /// All constraint rows as (c0, coefs) with c(x) = c0 + coefsᵀx ≥ 0,
    /// normalized to unit max coefficient.
    fn constraint_rows(&self) -> Vec<(f64, Vec<f64>)> {
        let mut rows = Vec::new();
        for i in 0..self.n {
            let mut c = vec![0.0; self.n];
            c[i] = 1.0; // x_i ≥ 0
            rows.push((0.0, c));
            let mut c = vec![0.0; self.n];
            c[i] = -1.0 / self.upper[i]; // x_i ≤ ub
            rows.push((1.0, c));
        }
        for (_, vars) in &self.dl_sum_rows {
            let mut c = vec![0.0; self.n];
            for &i in vars {
                c[i] = -1.0 / self.p_max_dl;
            }
            rows.push((1.0, c));
        }
        for (c0, coefs) in &self.sic_rows {
            let scale = coefs
                .iter()
                .fold(math::abs(*c0), |m, &v| m.max(math::abs(v)))
                .max(f64::MIN_POSITIVE);
            rows.push((c0 / scale, coefs.iter().map(|v| v / scale).collect()));
        }
        rows
    }

    /// Strict feasibility margin: min over rows of c(x).
    pub fn feasibility_margin(&self, x: &[f64]) -> f64 {
        self.constraint_rows()
            .iter()
            .map(|(c0, c)| c0 + c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}

#[allow(clippy::too_many_arguments)]
fn accumulate_dl_denominator(
    assignment: &Assignment,
    channel: &ChannelGains,
    sbs: usize,
    user: usize,
    own_gain: f64,
    multiplier_gain: f64,
    sign: f64,
    c: &mut [f64],
    ul_var_of: &dyn Fn(usize) -> Option<usize>,
    dl_var_index: &dyn Fn(usize, usize) -> usize,
) {
    // Adds sign · multiplier_gain · (interference terms of `user`'s DL
    // denominator) to the constraint row.
    for (b2, cell2) in assignment.cells.iter().enumerate() {
        for &v in &cell2.ul_users {
            c[ul_var_of(v).unwrap()] +=
                sign * multiplier_gain * channel.user_user(v, user);
        }
        if b2 == sbs {
            for (slot2, &v) in cell2.dl_users.iter().enumerate() {
                if v == user {
                    continue;
                }
                let g = channel.sbs_user(sbs, v);
                if ranks_above(g, v, own_gain, user) {
                    c[dl_var_index(sbs, slot2)] += sign * multiplier_gain * own_gain;
                }
            }
        } else {
            let g = channel.sbs_user(b2, user);
            for slot2 in 0..cell2.dl_users.len() {
                c[dl_var_index(b2, slot2)] += sign * multiplier_gain * g;
            }
        }
    }
}

/// True objective evaluated through the SINR route (independent of the
/// coefficient structure): Σ w·R(bits/subframe) + Ω.
pub fn udpo_objective(
    assignment: &Assignment,
    powers: &PowerAllocation,
    channel: &ChannelGains,
    queues: &QueueState,
    config: &ScenarioConfig,
    noise: f64,
) -> f64 {
    let scale = config.bandwidth * config.subframe_duration;
    let mut total = 0.0;
    for (b, cell) in assignment.cells.iter().enumerate() {
        for &u in &cell.ul_users {
            let sinr = compute_sinr(
                assignment,
                powers,
                channel,
                noise,
                config.si_cancellation,
                Direction::Ul,
                b,
                u,
            )
            .sinr;
            total += queues.weight(u, Direction::Ul) * scale * math::log2(1.0 + sinr);
            total += queues.z_ul[u] * (config.delta_ul - powers.p_ul[u]);
        }
        for &u in &cell.dl_users {
            let sinr = compute_sinr(
                assignment,
                powers,
                channel,
                noise,
                config.si_cancellation,
                Direction::Dl,
                b,
                u,
            )
            .sinr;
            total += queues.weight(u, Direction::Dl) * scale * math::log2(1.0 + sinr);
            total += queues.z_ul[u] * config.delta_ul;
        }
        total += queues.z_dl[b] * (config.delta_dl - powers.p_dl_total(b));
    }
    total
}

/// Maximizes the concave surrogate subject to the problem's constraint rows
/// with a log-barrier interior-point method. `x0` must be strictly
/// feasible; the result stays strictly feasible.
pub fn solve_inner_convex(
    problem: &PowerProblem,
    tangent: &(f64, Vec<f64>),
    x0: &[f64],
) -> Result<Vec<f64>, InfeasibleStart> {
    let rows = problem.constraint_rows();
    let m = rows.len() as f64;
    let n = problem.n;
    if n == 0 {
        return Ok(Vec::new());
    }

    // Normalize the objective so barrier bookkeeping is scale-free.
    let obj_scale = problem
        .links
        .iter()
        .map(|l| math::abs(l.kappa))
        .chain(problem.omega_lin.iter().zip(&problem.upper).map(|(c, ub)| math::abs(c * ub)))
        .fold(1.0_f64, f64::max);

    let eval_rows = |x: &[f64], slack: &mut [f64]| -> bool {
        for (k, (c0, c)) in rows.iter().enumerate() {
            let v = c0 + c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if v <= 0.0 {
                return false;
            }
            slack[k] = v;
        }
        true
    };

    let mut slack = vec![0.0; rows.len()];
    if !eval_rows(x0, &mut slack) {
        return Err(InfeasibleStart);
    }

    let surrogate_scaled =
        |x: &[f64]| -> f64 { problem.surrogate(x, tangent) / obj_scale };

    let mut x = x0.to_vec();
    let mut t = 1.0_f64;
    let gap_tol = 1e-9;
    let mu = 20.0;

    while m / t > gap_tol {
        // Newton centering for max t·S̄(x) + Σ ln c_k(x).
        for _ in 0..60 {
            if !eval_rows(&x, &mut slack) {
                break;
            }
            // Gradient and Hessian of the barrier objective.
            let mut grad = vec![0.0; n];
            let mut hess = vec![0.0; n * n];

            // t · (F part): κ ln(noise + sᵀx) contributes κ s/den and
            // −κ s sᵀ/den².
            for l in &problem.links {
                let den = problem.noise
                    + l.signal_coef * x[l.signal_var]
                    + l.interf.iter().map(|&(i, c)| c * x[i]).sum::<f64>();
                let k_scaled = t * l.kappa / obj_scale;
                let mut coef_iter: Vec<(usize, f64)> = l.interf.clone();
                coef_iter.push((l.signal_var, l.signal_coef));
                // Merge duplicate variable entries for the quadratic form.
                for &(i, ci) in &coef_iter {
                    grad[i] += k_scaled * ci / den;
                }
                let d2 = k_scaled / (den * den);
                for &(i, ci) in &coef_iter {
                    for &(j, cj) in &coef_iter {
                        hess[i * n + j] -= d2 * ci * cj;
                    }
                }
            }
            // t · (linearized G + Ω linear parts).
            for i in 0..n {
                grad[i] += t * (tangent.1[i] + problem.omega_lin[i]) / obj_scale;
            }
            // Barrier: Σ ln c_k.
            for (k, (_, c)) in rows.iter().enumerate() {
                let inv = 1.0 / slack[k];
                for i in 0..n {
                    if c[i] != 0.0 {
                        grad[i] += inv * c[i];
                    }
                }
                let inv2 = inv * inv;
                for i in 0..n {
                    if c[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        if c[j] != 0.0 {
                            hess[i * n + j] -= inv2 * c[i] * c[j];
                        }
                    }
                }
            }

            // Newton step: solve (−H) Δ = grad, −H positive definite.
            let mut neg_h: Vec<f64> = hess.iter().map(|v| -v).collect();
            let Some(step) = cholesky_solve(&mut neg_h, &grad, n) else {
                break;
            };
            let decrement: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
            if decrement <= 2e-12 {
                break;
            }

            // Backtracking line search: stay strictly feasible, require an
            // increase of the barrier objective.
            let phi =
                |x: &[f64], slack: &mut Vec<f64>| -> Option<f64> {
                    if !eval_rows(x, slack) {
                        return None;
                    }
                    let mut v = t * surrogate_scaled(x);
                    for s in slack.iter() {
                        v += math::ln(*s);
                    }
                    Some(v)
                };
            let mut tmp_slack = vec![0.0; rows.len()];
            let phi0 = phi(&x, &mut tmp_slack).expect("current point feasible");
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                let cand: Vec<f64> =
                    x.iter().zip(&step).map(|(v, s)| v + alpha * s).collect();
                if let Some(val) = phi(&cand, &mut tmp_slack) {
                    if val > phi0 + 0.25 * alpha * decrement {
                        x = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        t *= mu;
    }
    Ok(x)
}

/// Dense Cholesky solve of `A x = b` for symmetric positive definite `A`
/// (row-major, overwritten). Returns `None` when the factorization breaks
/// down. The systems here are tiny (one variable per scheduled link).
fn cholesky_solve(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    // Ridge for near-singular Hessians; retried with a larger shift once.
    for attempt in 0..2 {
        let mut l = a.to_vec();
        if attempt == 1 {
            let max_diag = (0..n).map(|i| math::abs(a[i * n + i])).fold(0.0, f64::max);
            for i in 0..n {
                l[i * n + i] += 1e-10 * max_diag.max(1e-30);
            }
        }
        if factor(&mut l, n) {
            return Some(substitute(&l, b, n));
        }
    }
    return None;

    fn factor(l: &mut [f64], n: usize) -> bool {
        for i in 0..n {
            for j in 0..=i {
                let mut sum = l[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return false;
                    }
                    l[i * n + i] = math::sqrt(sum);
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        true
    }

    fn substitute(l: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= l[i * n + k] * y[k];
            }
            y[i] /= l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= l[k * n + i] * y[k];
            }
            y[i] /= l[i * n + i];
        }
        y
    }
}

/// Runs the full convex-concave loop for one matching outcome.
///
/// Starting from the fixed matching-phase powers (halved up to ten times if
/// the SIC rows reject them, then a near-zero interior point), each
/// iteration linearizes the convex part at the current iterate and solves
/// the concave surrogate. A safeguard keeps the iterate when the inner
/// solution fails to improve the surrogate, which makes the true objective
/// trace non-decreasing by the majorization argument.
pub fn run_ccp(
    assignment: &Assignment,
    initial: &PowerAllocation,
    queues: &QueueState,
    channel: &ChannelGains,
    config: &ScenarioConfig,
    noise: f64,
) -> CcpResult {
    let problem = PowerProblem::build(assignment, queues, channel, config, noise);
    let num_users = queues.num_users();
    if problem.num_vars() == 0 {
        return CcpResult {
            powers: initial.clone(),
            trace: vec![problem.objective(&[])],
            iterations: 0,
            hit_iteration_cap: false,
            fell_back: false,
        };
    }

    // Strictly feasible start: halve the matching powers while any
    // constraint is violated, then fall back to a tiny interior point.
    let mut x = problem.stack(initial);
    let mut feasible = problem.feasibility_margin(&x) > 0.0;
    if !feasible {
        for _ in 0..10 {
            for v in x.iter_mut() {
                *v *= 0.5;
            }
            if problem.feasibility_margin(&x) > 0.0 {
                feasible = true;
                break;
            }
        }
    }
    if !feasible {
        let tiny: Vec<f64> = problem.upper.iter().map(|ub| 1e-9 * ub).collect();
        if problem.feasibility_margin(&tiny) > 0.0 {
            x = tiny;
            feasible = true;
        }
    }
    if !feasible {
        return CcpResult {
            powers: initial.clone(),
            trace: vec![problem.objective(&problem.stack(initial))],
            iterations: 0,
            hit_iteration_cap: false,
            fell_back: true,
        };
    }

    let mut trace = vec![problem.objective(&x)];
    let delta = config.ccp_improvement_rel * math::abs(trace[0]).max(1e-12);
    let mut hit_cap = true;
    let mut iterations = 0;

    for it in 0..config.ccp_max_iterations {
        iterations = it + 1;
        let tangent = problem.linearize_convex(&x);
        let candidate = match solve_inner_convex(&problem, &tangent, &x) {
            Ok(c) => c,
            Err(InfeasibleStart) => break,
        };
        // Ascent safeguard: never move to a surrogate-worse point.
        let x_new = if problem.surrogate(&candidate, &tangent)
            >= problem.surrogate(&x, &tangent)
        {
            candidate
        } else {
            x.clone()
        };
        let obj_new = problem.objective(&x_new);
        let improvement = obj_new - *trace.last().unwrap();
        x = x_new;
        trace.push(obj_new);
        if improvement <= delta {
            hit_cap = false;
            break;
        }
    }

    CcpResult {
        powers: problem.unstack(assignment, num_users, &x),
        trace,
        iterations,
        hit_iteration_cap: hit_cap,
        fell_back: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::CellAssignment;
    use crate::topology::{NetworkTopology, Point};

    const N0: f64 = 3.162277660168379e-13;

    fn p(x: f64, y: f64) -> Point {
        Point { x, y }
    }

    /// Single isolated UL link with queue weight `w` and power queue `z`.
    fn single_link(w: u64, z: f64) -> (ScenarioConfig, NetworkTopology, Assignment, QueueState) {
        let mut cfg = ScenarioConfig::default();
        cfg.num_sbs = 1;
        let mut topo = NetworkTopology::with_unit_gains(vec![p(0.0, 0.0)], vec![p(5.0, 0.0)]);
        topo.set_gain(0, 1, 1e-9);
        let assignment = Assignment {
            cells: vec![CellAssignment {
                ul_users: vec![0],
                dl_users: vec![],
            }],
        };
        let mut queues = QueueState::new(1, 1);
        queues.q_ul[0] = w;
        queues.z_ul[0] = z;
        (cfg, topo, assignment, queues)
    }

    /// Central finite differences of a scalar function, the independent
    /// gradient oracle.
    fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let mut grad = Vec::with_capacity(x.len());
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1e-4);
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let dn = f(&xp);
            xp[i] = x[i];
            grad.push((up - dn) / (2.0 * h));
        }
        grad
    }

    #[test]
    fn single_link_objective_matches_hand_formula() {
        let (cfg, topo, assignment, queues) = single_link(50_000, 2.0);
        let channel = ChannelGains::static_from(&topo);
        let problem = PowerProblem::build(&assignment, &queues, &channel, &cfg, N0);
        let x = [0.03];
        let w = 50_000.0;
        let c = cfg.bandwidth * cfg.subframe_duration;
        let expected =
            w * c * math::log2(1.0 + 0.03 * 1e-9 / N0) + 2.0 * (cfg.delta_ul - 0.03)
                + queues.z_dl[0] * cfg.delta_dl;
        assert!(math::rel_err(problem.objective(&x), expected, 1e-12) < 1e-12);

        // The SINR route agrees.
        let powers = problem.unstack(&assignment, 1, &x);
        let via_phy = udpo_objective(&assignment, &powers, &channel, &queues, &cfg, N0);
        assert!(math::rel_err(problem.objective(&x), via_phy, 1e-12) < 1e-12);

        // Weights and Z zero make the objective vanish for any power.
        let idle = QueueState::new(1, 1);
        let problem0 = PowerProblem::build(&assignment, &idle, &channel, &cfg, N0);
        assert_eq!(problem0.objective(&[0.05]), 0.0);
        assert_eq!(problem0.objective(&[0.001]), 0.0);

        // With Z = 0 the single-link objective strictly increases in p.
        let mut q2 = QueueState::new(1, 1);
        q2.q_ul[0] = 50_000;
        let problem2 = PowerProblem::build(&assignment, &q2, &channel, &cfg, N0);
        assert!(problem2.objective(&[0.02]) > problem2.objective(&[0.01]));
    }

    #[test]
    fn dc_split_reconstructs_objective() {
        // A 2-cell instance so interference terms are non-trivial.
        let mut cfg2 = ScenarioConfig::default();
        cfg2.num_sbs = 2;
        let mut topo = NetworkTopology::with_unit_gains(
            vec![p(0.0, 0.0), p(60.0, 0.0)],
            vec![p(5.0, 0.0), p(55.0, 0.0), p(65.0, 0.0)],
        );
        topo.set_gain(0, 2, 1.5e-9);
        topo.set_gain(0, 3, 4e-11);
        topo.set_gain(0, 4, 3e-11);
        topo.set_gain(1, 2, 5e-11);
        topo.set_gain(1, 3, 1.2e-9);
        topo.set_gain(1, 4, 9e-10);
        topo.set_gain(0, 1, 7e-12);
        topo.set_gain(2, 3, 2e-11);
        topo.set_gain(2, 4, 1.8e-11);
        topo.set_gain(3, 4, 6e-10);
        let assignment = Assignment {
            cells: vec![
                CellAssignment {
                    ul_users: vec![0],
                    dl_users: vec![],
                },
                CellAssignment {
                    ul_users: vec![],
                    dl_users: vec![1, 2],
                },
            ],
        };
        let mut queues = QueueState::new(3, 2);
        queues.q_ul[0] = 120_000;
        queues.q_dl[1] = 90_000;
        queues.q_dl[2] = 40_000;
        queues.h_ul[0] = 5_000.0;
        queues.z_ul[0] = 1.2;
        queues.z_dl[1] = 0.7;
        let channel = ChannelGains::static_from(&topo);
        let problem = PowerProblem::build(&assignment, &queues, &channel, &cfg2, N0);
        assert_eq!(problem.num_vars(), 3);

        // F + G + Omega reconstructs the SINR-route objective at random
        // points within 1e-9 relative.
        let mut rng_state = 88172645463325252u64;
        let mut next = move || {
            // xorshift64
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let x = [
                next() * cfg2.p_max_ul,
                next() * cfg2.p_max_dl * 0.5,
                next() * cfg2.p_max_dl * 0.5,
            ];
            let split =
                problem.f_value(&x) + problem.g_value(&x) + problem.omega_value(&x);
            let powers = problem.unstack(&assignment, 3, &x);
            let direct = udpo_objective(&assignment, &powers, &channel, &queues, &cfg2, N0);
            assert!(
                math::rel_err(split, direct, 1e-9) < 1e-9,
                "split {split} direct {direct}"
            );
        }

        // Zero interference at an isolated link makes G constant in p.
        let (cfg1, topo1, a1, q1) = single_link(10_000, 0.0);
        let channel1 = ChannelGains::static_from(&topo1);
        let p1 = PowerProblem::build(&a1, &q1, &channel1, &cfg1, N0);
        let g_a = p1.g_value(&[0.01]);
        let g_b = p1.g_value(&[0.09]);
        assert_eq!(g_a, g_b);
        let kappa = 10_000.0 * cfg1.bandwidth * cfg1.subframe_duration / LN2;
        assert!(math::rel_err(g_a, -kappa * math::ln(N0), 1e-12) < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (cfg, topo, assignment, queues) = {
            let mut cfg = ScenarioConfig::default();
            cfg.num_sbs = 2;
            let mut topo = NetworkTopology::with_unit_gains(
                vec![p(0.0, 0.0), p(60.0, 0.0)],
                vec![p(5.0, 0.0), p(8.0, 0.0), p(55.0, 0.0), p(65.0, 0.0)],
            );
            // Cell 0: FD pair (u0 UL, u1 DL); cell 1: DL NOMA (u2, u3).
            topo.set_gain(0, 2, 2e-9);
            topo.set_gain(0, 3, 1.2e-9);
            topo.set_gain(0, 4, 5e-11);
            topo.set_gain(0, 5, 4e-11);
            topo.set_gain(1, 2, 6e-11);
            topo.set_gain(1, 3, 7e-11);
            topo.set_gain(1, 4, 1.6e-9);
            topo.set_gain(1, 5, 8e-10);
            topo.set_gain(0, 1, 9e-12);
            topo.set_gain(2, 3, 7e-10);
            topo.set_gain(2, 4, 3e-11);
            topo.set_gain(2, 5, 2e-11);
            topo.set_gain(3, 4, 2.5e-11);
            topo.set_gain(3, 5, 1.5e-11);
            topo.set_gain(4, 5, 5e-10);
            let assignment = Assignment {
                cells: vec![
                    CellAssignment {
                        ul_users: vec![0],
                        dl_users: vec![1],
                    },
                    CellAssignment {
                        ul_users: vec![],
                        dl_users: vec![2, 3],
                    },
                ],
            };
            let mut queues = QueueState::new(4, 2);
            queues.q_ul[0] = 150_000;
            queues.q_dl[1] = 100_000;
            queues.q_dl[2] = 80_000;
            queues.q_dl[3] = 60_000;
            queues.z_ul[0] = 0.9;
            queues.z_dl[0] = 0.4;
            queues.z_dl[1] = 1.1;
            (cfg, topo, assignment, queues)
        };
        let channel = ChannelGains::static_from(&topo);
        let problem = PowerProblem::build(&assignment, &queues, &channel, &cfg, N0);
        assert_eq!(problem.num_vars(), 4);

        let x = [0.04, 0.08, 0.05, 0.03];
        let grad_f = problem.f_gradient(&x);
        let fd_f = finite_diff(|y| problem.f_value(y), &x);
        for i in 0..4 {
            assert!(
                math::rel_err(grad_f[i], fd_f[i], 1e-6) < 1e-4,
                "dF[{i}]: analytic {} vs fd {}",
                grad_f[i],
                fd_f[i]
            );
        }
        let grad_g = problem.g_gradient(&x);
        let fd_g = finite_diff(|y| problem.g_value(y), &x);
        for i in 0..4 {
            assert!(
                math::rel_err(grad_g[i], fd_g[i], 1e-6) < 1e-4,
                "dG[{i}]: analytic {} vs fd {}",
                grad_g[i],
                fd_g[i]
            );
        }
    }

    #[test]
    fn tangent_is_exact_at_reference_and_below_elsewhere() {
        let (cfg, topo, assignment, queues) = single_link(50_000, 1.0);
        let mut cfg2 = cfg.clone();
        cfg2.num_sbs = 2;
        let mut topo2 = NetworkTopology::with_unit_gains(
            vec![p(0.0, 0.0), p(60.0, 0.0)],
            vec![p(5.0, 0.0), p(65.0, 0.0)],
        );
        topo2.set_gain(0, 2, 1.5e-9);
        topo2.set_gain(0, 3, 4e-11);
        topo2.set_gain(1, 2, 5e-11);
        topo2.set_gain(1, 3, 1.1e-9);
        topo2.set_gain(0, 1, 8e-12);
        topo2.set_gain(2, 3, 3e-11);
        let assignment2 = Assignment {
            cells: vec![
                CellAssignment {
                    ul_users: vec![0],
                    dl_users: vec![],
                },
                CellAssignment {
                    ul_users: vec![1],
                    dl_users: vec![],
                },
            ],
        };
        let mut queues2 = QueueState::new(2, 2);
        queues2.q_ul[0] = 70_000;
        queues2.q_ul[1] = 90_000;
        let channel2 = ChannelGains::static_from(&topo2);
        let problem = PowerProblem::build(&assignment2, &queues2, &channel2, &cfg2, N0);

        let x_ref = [0.05, 0.06];
        let tangent = problem.linearize_convex(&x_ref);
        // Tangency.
        let at_ref = tangent.0 + tangent.1.iter().zip(&x_ref).map(|(c, v)| c * v).sum::<f64>();
        assert!(math::rel_err(at_ref, problem.g_value(&x_ref), 1e-12) < 1e-12);
        // Tangent under-estimates the convex part, so the surrogate
        // under-estimates the objective.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let x = [next() * cfg2.p_max_ul, next() * cfg2.p_max_ul];
            let lin = tangent.0 + tangent.1.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
            assert!(lin <= problem.g_value(&x) * (1.0 + 1e-12) + 1e-9);
            assert!(
                problem.surrogate(&x, &tangent)
                    <= problem.objective(&x) + 1e-9 * problem.objective(&x).abs()
            );
        }
        let _ = (cfg, topo, assignment, queues);
    }

    #[test]
    fn inner_solver_matches_closed_form_single_link() {
        // max w·c·log2(1 + p·h/N0) + Z(δ − p) over 0 ≤ p ≤ P has the
        // stationary point p* = w·c/(Z·ln2) − N0/h (clamped).
        let w = 50_000u64;
        let z = 1.43e10;
        let (cfg, topo, assignment, queues) = single_link(w, z);
        let channel = ChannelGains::static_from(&topo);
        let problem = PowerProblem::build(&assignment, &queues, &channel, &cfg, N0);
        let c = cfg.bandwidth * cfg.subframe_duration;
        let p_star = (w as f64 * c / (z * LN2) - N0 / 1e-9).clamp(0.0, cfg.p_max_ul);
        assert!(p_star > 0.0 && p_star < cfg.p_max_ul, "interior optimum");

        let tangent = problem.linearize_convex(&[cfg.delta_ul]);
        let x = solve_inner_convex(&problem, &tangent, &[cfg.delta_ul]).unwrap();
        assert!(
            (x[0] - p_star).abs() < 1e-6,
            "solver {} vs closed form {p_star}",
            x[0]
        );
    }

    #[test]
    fn ccp_single_link_converges_to_closed_form() {
        let w = 50_000u64;
        let z = 1.43e10;
        let (cfg, topo, assignment, queues) = single_link(w, z);
        let channel = ChannelGains::static_from(&topo);
        let initial = {
            let mut pw = PowerAllocation::zeros(&assignment, 1);
            pw.p_ul[0] = cfg.delta_ul;
            pw
        };
        let mut cfg_tight = cfg.clone();
        cfg_tight.ccp_improvement_rel = 1e-9;
        let result = run_ccp(&assignment, &initial, &queues, &channel, &cfg_tight, N0);
        let c = cfg.bandwidth * cfg.subframe_duration;
        let p_star = (w as f64 * c / (z * LN2) - N0 / 1e-9).clamp(0.0, cfg.p_max_ul);
        assert!(
            (result.powers.p_ul[0] - p_star).abs() < 1e-6,
            "ccp {} vs {p_star}",
            result.powers.p_ul[0]
        );
        assert!(result.iterations <= 2, "iterations {}", result.iterations);
        assert!(!result.hit_iteration_cap);
        // Monotone trace.
        for w in result.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn ccp_zero_power_queue_pushes_to_max() {
        let (cfg, topo, assignment, queues) = single_link(50_000, 0.0);
        let channel = ChannelGains::static_from(&topo);
        let initial = {
            let mut pw = PowerAllocation::zeros(&assignment, 1);
            pw.p_ul[0] = cfg.delta_ul;
            pw
        };
        let result = run_ccp(&assignment, &initial, &queues, &channel, &cfg, N0);
        assert!(
            (result.powers.p_ul[0] - cfg.p_max_ul).abs() < 1e-5,
            "expected P_max, got {}",
            result.powers.p_ul[0]
        );
    }

    #[test]
    fn symmetric_two_link_instance_gets_symmetric_powers() {
        let mut cfg = ScenarioConfig::default();
        cfg.num_sbs = 2;
        cfg.ccp_improvement_rel = 1e-9;
        let mut topo = NetworkTopology::with_unit_gains(
            vec![p(0.0, 0.0), p(60.0, 0.0)],
            vec![p(5.0, 0.0), p(65.0, 0.0)],
        );
        let direct = 1.2e-9;
        let cross = 3e-11;
        topo.set_gain(0, 2, direct);
        topo.set_gain(1, 3, direct);
        topo.set_gain(0, 3, cross);
        topo.set_gain(1, 2, cross);
        topo.set_gain(0, 1, 5e-12);
        topo.set_gain(2, 3, 2e-11);
        let assignment = Assignment {
            cells: vec![
                CellAssignment {
                    ul_users: vec![0],
                    dl_users: vec![],
                },
                CellAssignment {
                    ul_users: vec![1],
                    dl_users: vec![],
                },
            ],
        };
        let mut queues = QueueState::new(2, 2);
        queues.q_ul[0] = 100_000;
        queues.q_ul[1] = 100_000;
        queues.z_ul[0] = 5e9;
        queues.z_ul[1] = 5e9;
        let channel = ChannelGains::static_from(&topo);
        let mut initial = PowerAllocation::zeros(&assignment, 2);
        initial.p_ul[0] = cfg.delta_ul;
        initial.p_ul[1] = cfg.delta_ul;
        let result = run_ccp(&assignment, &initial, &queues, &channel, &cfg, N0);
        assert!(
            (result.powers.p_ul[0] - result.powers.p_ul[1]).abs() < 1e-6,
            "{} vs {}",
            result.powers.p_ul[0],
            result.powers.p_ul[1]
        );
    }

    #[test]
    fn ccp_beats_99_percent_of_grid_search() {
        // Two mutually interfering UL links; the oracle scans a 200×200
        // power grid of the true objective.
        let mut cfg = ScenarioConfig::default();
        cfg.num_sbs = 2;
        cfg.ccp_improvement_rel = 1e-6;
        let mut topo = NetworkTopology::with_unit_gains(
            vec![p(0.0, 0.0), p(40.0, 0.0)],
            vec![p(5.0, 0.0), p(45.0, 0.0)],
        );
        topo.set_gain(0, 2, 1.5e-9);
        topo.set_gain(1, 3, 9e-10);
        topo.set_gain(0, 3, 1.2e-10); // strong-ish coupling
        topo.set_gain(1, 2, 8e-11);
        topo.set_gain(0, 1, 2e-11);
        topo.set_gain(2, 3, 4e-11);
        let assignment = Assignment {
            cells: vec![
                CellAssignment {
                    ul_users: vec![0],
                    dl_users: vec![],
                },
                CellAssignment {
                    ul_users: vec![1],
                    dl_users: vec![],
                },
            ],
        };
        let mut queues = QueueState::new(2, 2);
        queues.q_ul[0] = 120_000;
        queues.q_ul[1] = 70_000;
        let channel = ChannelGains::static_from(&topo);

        let mut best = f64::NEG_INFINITY;
        let steps = 200;
        for i in 0..steps {
            for j in 0..steps {
                let mut pw = PowerAllocation::zeros(&assignment, 2);
                pw.p_ul[0] = cfg.p_max_ul * i as f64 / (steps - 1) as f64;
                pw.p_ul[1] = cfg.p_max_ul * j as f64 / (steps - 1) as f64;
                let v = udpo_objective(&assignment, &pw, &channel, &queues, &cfg, N0);
                if v > best {
                    best = v;
                }
            }
        }

        let mut initial = PowerAllocation::zeros(&assignment, 2);
        initial.p_ul[0] = cfg.delta_ul;
        initial.p_ul[1] = cfg.delta_ul;
        let result = run_ccp(&assignment, &initial, &queues, &channel, &cfg, N0);
        let achieved = *result.trace.last().unwrap();
        assert!(
            achieved >= 0.99 * best,
            "ccp {achieved} vs grid {best} ({}%)",
            100.0 * achieved / best
        );
    }

    #[test]
    fn cholesky_solves_known_system() {
        // A = [[4,2],[2,3]], b = [8, 7] -> x = [1, 2] ... solve to check.
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        let b = vec![8.0, 7.0];
        let x = cholesky_solve(&mut a, &b, 2).unwrap();
        // Verify A·x = b.
        assert!((4.0 * x[0] + 2.0 * x[1] - 8.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 7.0).abs() < 1e-12);
        // Indefinite matrices are rejected.
        let mut bad = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_solve(&mut bad, &b, 2).is_none());
    }
}

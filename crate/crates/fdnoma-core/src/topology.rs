//! Network geometry and static channel gains.
//!
//! A topology is generated once per replication and is immutable afterwards:
//! SBS positions are uniform over the deployment area (kept `cell_radius`
//! away from the border so every cell disc fits), the user count is Poisson
//! with mean `num_sbs * mean_users_per_sbs`, and each user lands uniformly in
//! the disc of a uniformly chosen cell. Static gains combine distance
//! pathloss with one log-normal shadowing draw per node pair; channel
//! reciprocity within a subframe is modelled by storing a single value per
//! unordered pair.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::math;

/// Minimum propagation distance, meters. Prevents a singular pathloss when
/// nodes are generated arbitrarily close.
pub const DISTANCE_FLOOR_M: f64 = 1.0;

/// Which pathloss law applies to a node pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    SbsUser,
    UserUser,
    SbsSbs,
}

/// Topology generation failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid scenario: {0}")]
    BadConfig(#[from] crate::config::ConfigError),
}

/// A point in the deployment plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        math::sqrt(dx * dx + dy * dy)
    }
}

/// Static per-replication network state: positions, home cells and the
/// symmetric table of link gains (linear power ratios).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub sbs_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    /// Nearest SBS per user.
    pub home_sbs: Vec<usize>,
    /// Row-major (B+U)×(B+U) gain table; nodes 0..B are SBSs, B.. are users.
    gains: Vec<f64>,
}

impl NetworkTopology {
    pub fn num_sbs(&self) -> usize {
        self.sbs_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_sbs() + self.num_users()
    }

    /// Node index of SBS `b` in the gain table.
    #[inline]
    pub fn sbs_node(&self, b: usize) -> usize {
        b
    }

    /// Node index of user `u` in the gain table.
    #[inline]
    pub fn user_node(&self, u: usize) -> usize {
        self.num_sbs() + u
    }

    /// Static gain between two distinct nodes (symmetric lookup).
    #[inline]
    pub fn gain(&self, node_a: usize, node_b: usize) -> f64 {
        debug_assert_ne!(node_a, node_b, "self-pairs carry no gain");
        self.gains[node_a * self.num_nodes() + node_b]
    }

    /// Static SBS↔user gain h_{bu}.
    #[inline]
    pub fn gain_sbs_user(&self, b: usize, u: usize) -> f64 {
        self.gain(self.sbs_node(b), self.user_node(u))
    }

    /// Users whose home cell is `b`.
    pub fn cell_members(&self, b: usize) -> Vec<usize> {
        (0..self.num_users()).filter(|&u| self.home_sbs[u] == b).collect()
    }

    /// Builds a topology with explicit positions; gains still come from the
    /// configured pathloss/shadowing model. Intended for tests and fixtures.
    pub fn from_positions(
        config: &ScenarioConfig,
        sbs_positions: Vec<Point>,
        user_positions: Vec<Point>,
        rng: &mut impl Rng,
    ) -> Self {
        let mut topo = NetworkTopology {
            sbs_positions,
            user_positions,
            home_sbs: Vec::new(),
            gains: Vec::new(),
        };
        topo.assign_home_cells();
        topo.fill_gains(config, rng);
        topo
    }

    /// Builds a topology with every gain pinned to an explicit value.
    /// `gains[(a, b)]` must be supplied through the setter afterwards; the
    /// table starts at 1.0 for all off-diagonal pairs.
    pub fn with_unit_gains(sbs_positions: Vec<Point>, user_positions: Vec<Point>) -> Self {
        let mut topo = NetworkTopology {
            sbs_positions,
            user_positions,
            home_sbs: Vec::new(),
            gains: Vec::new(),
        };
        topo.assign_home_cells();
        let n = topo.num_nodes();
        topo.gains = vec![1.0; n * n];
        for i in 0..n {
            topo.gains[i * n + i] = 0.0;
        }
        topo
    }

    /// Overrides one symmetric gain entry. Test/fixture helper.
    pub fn set_gain(&mut self, node_a: usize, node_b: usize, gain: f64) {
        let n = self.num_nodes();
        self.gains[node_a * n + node_b] = gain;
        self.gains[node_b * n + node_a] = gain;
    }

    fn assign_home_cells(&mut self) {
        self.home_sbs = self
            .user_positions
            .iter()
            .map(|pos| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (b, sbs) in self.sbs_positions.iter().enumerate() {
                    let d = pos.distance(sbs);
                    if d < best_d {
                        best_d = d;
                        best = b;
                    }
                }
                best
            })
            .collect();
    }

    fn fill_gains(&mut self, config: &ScenarioConfig, rng: &mut impl Rng) {
        let n = self.num_nodes();
        let b = self.num_sbs();
        let shadow = Normal::new(0.0, config.shadowing_sigma_db)
            .expect("shadowing sigma is non-negative");
        self.gains = vec![0.0; n * n];
        // One draw per unordered pair keeps the table reciprocal.
        for i in 0..n {
            for j in (i + 1)..n {
                let kind = match (i < b, j < b) {
                    (true, true) => LinkKind::SbsSbs,
                    (false, false) => LinkKind::UserUser,
                    _ => LinkKind::SbsUser,
                };
                let pi = self.node_position(i);
                let pj = self.node_position(j);
                let g = link_gain(config, kind, pi.distance(&pj), shadow.sample(rng));
                self.gains[i * n + j] = g;
                self.gains[j * n + i] = g;
            }
        }
    }

    fn node_position(&self, node: usize) -> Point {
        let b = self.num_sbs();
        if node < b {
            self.sbs_positions[node]
        } else {
            self.user_positions[node - b]
        }
    }
}

/// Pathloss in dB for a link of `kind` at `distance_m` meters, clamped to
/// the 1 m floor.
pub fn pathloss_db(config: &ScenarioConfig, kind: LinkKind, distance_m: f64) -> f64 {
    let params = match kind {
        LinkKind::SbsUser => config.pl_sbs_user,
        LinkKind::UserUser => config.pl_user_user,
        LinkKind::SbsSbs => config.pl_sbs_sbs,
    };
    let d_km = distance_m.max(DISTANCE_FLOOR_M) / 1000.0;
    params.intercept_db + params.slope_db_per_decade * math::log10(d_km)
}

/// Linear link gain 10^(−(PL + shadow)/10).
pub fn link_gain(config: &ScenarioConfig, kind: LinkKind, distance_m: f64, shadow_db: f64) -> f64 {
    math::db_to_linear(-(pathloss_db(config, kind, distance_m) + shadow_db))
}

/// Generates a topology; pure function of `(config, seed)`.
pub fn generate_topology(
    config: &ScenarioConfig,
    rng: &mut impl Rng,
) -> Result<NetworkTopology, GeometryError> {
    config.validate()?;
    let r = config.cell_radius;
    let lo = r;
    let hi = config.area_side - r;

    let sbs_positions: Vec<Point> = (0..config.num_sbs)
        .map(|_| Point {
            x: sample_range(rng, lo, hi),
            y: sample_range(rng, lo, hi),
        })
        .collect();

    let mean_users = config.num_sbs as f64 * config.mean_users_per_sbs;
    let num_users = if mean_users > 0.0 {
        Poisson::new(mean_users).expect("positive mean").sample(rng) as usize
    } else {
        0
    };

    let user_positions: Vec<Point> = (0..num_users)
        .map(|_| {
            let cell = rng.random_range(0..config.num_sbs);
            let center = sbs_positions[cell];
            // Uniform over the cell disc.
            let radius = r * math::sqrt(rng.random::<f64>());
            let theta = rng.random::<f64>() * core::f64::consts::TAU;
            Point {
                x: center.x + radius * libm::cos(theta),
                y: center.y + radius * libm::sin(theta),
            }
        })
        .collect();

    let mut topo = NetworkTopology {
        sbs_positions,
        user_positions,
        home_sbs: Vec::new(),
        gains: Vec::new(),
    };
    topo.assign_home_cells();
    topo.fill_gains(config, rng);
    Ok(topo)
}

fn sample_range(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Effective gains for one subframe: static gains with an optional i.i.d.
/// unit-mean exponential (Rayleigh power) fade per node pair.
#[derive(Debug, Clone)]
pub struct ChannelGains {
    n: usize,
    num_sbs: usize,
    gains: Vec<f64>,
}

impl ChannelGains {
    /// Fading disabled: effective gains equal the static table.
    pub fn static_from(topo: &NetworkTopology) -> Self {
        ChannelGains {
            n: topo.num_nodes(),
            num_sbs: topo.num_sbs(),
            gains: topo.gains.clone(),
        }
    }

    /// Draws fresh per-pair fades for one subframe.
    pub fn faded(topo: &NetworkTopology, rng: &mut impl Rng) -> Self {
        let n = topo.num_nodes();
        let exp = Exp::new(1.0).expect("unit rate");
        let mut gains = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let f: f64 = exp.sample(rng);
                let g = topo.gains[i * n + j] * f;
                gains[i * n + j] = g;
                gains[j * n + i] = g;
            }
        }
        ChannelGains {
            n,
            num_sbs: topo.num_sbs(),
            gains,
        }
    }

    #[inline]
    pub fn gain(&self, node_a: usize, node_b: usize) -> f64 {
        debug_assert_ne!(node_a, node_b);
        self.gains[node_a * self.n + node_b]
    }

    #[inline]
    pub fn sbs_user(&self, b: usize, u: usize) -> f64 {
        self.gain(b, self.num_sbs + u)
    }

    #[inline]
    pub fn user_user(&self, u: usize, v: usize) -> f64 {
        self.gain(self.num_sbs + u, self.num_sbs + v)
    }

    #[inline]
    pub fn sbs_sbs(&self, a: usize, b: usize) -> f64 {
        self.gain(a, b)
    }

    #[inline]
    pub fn user_node(&self, u: usize) -> usize {
        self.num_sbs + u
    }
}

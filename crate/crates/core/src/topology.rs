//! Macro-cell geometry and per-node radio parameters.
//!
//! Nodes are stored densely in a fixed order: the macro base station first,
//! then the small base stations, then the user equipments. Every algorithm in
//! the crate addresses nodes through this dense index; [`NodeId`] is the
//! human-facing name (`MBS`, `SBS3`, `UE7`, ...).

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RNG stream used for node placement; popularity permutations use another.
pub(crate) const GEOMETRY_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Mbs,
    Sbs,
    Ue,
}

/// Node name: kind plus a 1-based ordinal within the kind (the MBS is `Mbs`/1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeId {
    pub const MBS: NodeId = NodeId {
        kind: NodeKind::Mbs,
        index: 1,
    };

    pub fn sbs(index: usize) -> Self {
        NodeId {
            kind: NodeKind::Sbs,
            index,
        }
    }

    pub fn ue(index: usize) -> Self {
        NodeId {
            kind: NodeKind::Ue,
            index,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::Mbs => write!(f, "MBS"),
            NodeKind::Sbs => write!(f, "SBS{}", self.index),
            NodeKind::Ue => write!(f, "UE{}", self.index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Scalar parameters of a scenario. `Default` holds the reference
/// configuration used throughout the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkParams {
    /// Macro-cell radius (m).
    pub cell_radius: f64,
    /// Radius around the MBS inside which SBSs are dropped (m).
    pub sbs_radius: f64,
    /// Minimum distance between any two generated nodes (m).
    pub min_separation: f64,
    pub mbs_power: f64,
    pub sbs_power: f64,
    pub ue_power: f64,
    pub noise_power: f64,
    pub path_loss_exponent: f64,
    pub reference_distance: f64,
    pub num_channels: usize,
    /// Per-channel bandwidth (Hz).
    pub bandwidth: f64,
    /// Slot duration (s).
    pub slot_duration: f64,
    /// Average backhaul delay (slots).
    pub backhaul_delay: f64,
    /// Delivery delay threshold (slots).
    pub delay_threshold: f64,
    pub mbs_cache_bits: f64,
    pub sbs_cache_bits: f64,
    pub ue_cache_bits: f64,
    pub file_count: usize,
    /// File length (bits).
    pub file_length: f64,
    /// Maximum users per channel; `None` means `ceil(U / W)`.
    pub reuse_limit: Option<usize>,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            cell_radius: 100.0,
            sbs_radius: 10.0 * 50f64.sqrt(),
            min_separation: 1.0,
            mbs_power: 1.0,
            sbs_power: 0.5,
            ue_power: 0.1,
            noise_power: 0.01,
            path_loss_exponent: 3.0,
            reference_distance: 1.0,
            num_channels: 3,
            bandwidth: 1e6,
            slot_duration: 0.01,
            backhaul_delay: 10.0,
            delay_threshold: 5.0,
            mbs_cache_bits: 500.0,
            sbs_cache_bits: 200.0,
            ue_cache_bits: 100.0,
            file_count: 100,
            file_length: 100.0,
            reuse_limit: None,
        }
    }
}

impl NetworkParams {
    /// Normalized per-file load `L / (tau B)` in bits per slot-Hz.
    pub fn load(&self) -> f64 {
        self.file_length / (self.slot_duration * self.bandwidth)
    }

    /// Checks the ranges every instance needs. The strict capacity ordering
    /// `F L > C_m > C_S > C_U > 0` is reported by
    /// [`NetworkParams::capacity_ordering_holds`], not enforced.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cell_radius", self.cell_radius),
            ("noise_power", self.noise_power),
            ("reference_distance", self.reference_distance),
            ("bandwidth", self.bandwidth),
            ("slot_duration", self.slot_duration),
            ("file_length", self.file_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("sbs_radius", self.sbs_radius),
            ("min_separation", self.min_separation),
            ("mbs_power", self.mbs_power),
            ("sbs_power", self.sbs_power),
            ("ue_power", self.ue_power),
            ("backhaul_delay", self.backhaul_delay),
            ("delay_threshold", self.delay_threshold),
            ("mbs_cache_bits", self.mbs_cache_bits),
            ("sbs_cache_bits", self.sbs_cache_bits),
            ("ue_cache_bits", self.ue_cache_bits),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.sbs_radius > self.cell_radius {
            return Err(Error::invalid("sbs_radius exceeds cell_radius"));
        }
        if !(self.path_loss_exponent >= 2.0) {
            return Err(Error::invalid(format!(
                "path_loss_exponent must be >= 2, got {}",
                self.path_loss_exponent
            )));
        }
        if self.num_channels == 0 {
            return Err(Error::invalid("num_channels must be >= 1"));
        }
        if self.file_count == 0 {
            return Err(Error::invalid("file_count must be >= 1"));
        }
        Ok(())
    }

    pub fn capacity_ordering_holds(&self) -> bool {
        let library = self.file_count as f64 * self.file_length;
        library > self.mbs_cache_bits
            && self.mbs_cache_bits > self.sbs_cache_bits
            && self.sbs_cache_bits > self.ue_cache_bits
            && self.ue_cache_bits > 0.0
    }
}

/// A fully specified problem instance. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub params: NetworkParams,
    pub num_sbs: usize,
    pub num_ue: usize,
    /// Dense node order: MBS, SBS 1..S, UE 1..U.
    pub positions: Vec<Point>,
}

impl NetworkInstance {
    /// Drops `num_sbs` SBSs uniformly in the SBS disc and `num_ue` UEs
    /// uniformly in the cell, MBS at the origin. Nodes closer than
    /// `min_separation` to an already placed node are redrawn.
    pub fn generate(seed: u64, num_ue: usize, num_sbs: usize, params: &NetworkParams) -> Result<Self> {
        if num_ue == 0 {
            return Err(Error::invalid("at least one UE is required"));
        }
        params.validate()?;
        if num_sbs > 0 && params.sbs_radius <= 0.0 {
            return Err(Error::invalid("sbs_radius must be positive when SBSs are present"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(GEOMETRY_STREAM);

        let mut positions = Vec::with_capacity(1 + num_sbs + num_ue);
        positions.push(Point::ORIGIN);
        for _ in 0..num_sbs {
            let p = draw_separated(&mut rng, params.sbs_radius, params.min_separation, &positions)?;
            positions.push(p);
        }
        for _ in 0..num_ue {
            let p = draw_separated(&mut rng, params.cell_radius, params.min_separation, &positions)?;
            positions.push(p);
        }
        let inst = NetworkInstance {
            params: params.clone(),
            num_sbs,
            num_ue,
            positions,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Builds an instance from explicit coordinates (MBS at the origin).
    pub fn from_positions(params: NetworkParams, sbs: &[Point], ues: &[Point]) -> Result<Self> {
        let mut positions = Vec::with_capacity(1 + sbs.len() + ues.len());
        positions.push(Point::ORIGIN);
        positions.extend_from_slice(sbs);
        positions.extend_from_slice(ues);
        let inst = NetworkInstance {
            params,
            num_sbs: sbs.len(),
            num_ue: ues.len(),
            positions,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.num_ue == 0 {
            return Err(Error::invalid("at least one UE is required"));
        }
        if self.positions.len() != 1 + self.num_sbs + self.num_ue {
            return Err(Error::DimensionMismatch(format!(
                "{} positions for {} nodes",
                self.positions.len(),
                1 + self.num_sbs + self.num_ue
            )));
        }
        if self.positions[0] != Point::ORIGIN {
            return Err(Error::invalid("the MBS must sit at the origin"));
        }
        let tol = 1e-9 * self.params.cell_radius;
        for (i, p) in self.positions.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) || p.norm() > self.params.cell_radius + tol {
                return Err(Error::invalid(format!("{} lies outside the cell", self.node_id(i))));
            }
        }
        let limit = self.params.reuse_limit.unwrap_or_else(|| self.default_reuse_limit());
        if limit < self.default_reuse_limit() {
            return Err(Error::invalid(format!(
                "reuse limit {limit} is below ceil(U/W) = {}",
                self.default_reuse_limit()
            )));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn num_files(&self) -> usize {
        self.params.file_count
    }

    pub fn num_channels(&self) -> usize {
        self.params.num_channels
    }

    pub const fn mbs(&self) -> usize {
        0
    }

    /// Dense index of the 0-based SBS `s`.
    pub fn sbs_node(&self, s: usize) -> usize {
        1 + s
    }

    /// Dense index of the 0-based user `u`.
    pub fn ue_node(&self, u: usize) -> usize {
        1 + self.num_sbs + u
    }

    /// 0-based user index of a dense node, if the node is a UE.
    pub fn user_of(&self, node: usize) -> Option<usize> {
        let first = 1 + self.num_sbs;
        (node >= first && node < self.node_count()).then(|| node - first)
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        if node == 0 {
            NodeKind::Mbs
        } else if node <= self.num_sbs {
            NodeKind::Sbs
        } else {
            NodeKind::Ue
        }
    }

    pub fn node_id(&self, node: usize) -> NodeId {
        match self.kind(node) {
            NodeKind::Mbs => NodeId::MBS,
            NodeKind::Sbs => NodeId::sbs(node),
            NodeKind::Ue => NodeId::ue(node - self.num_sbs),
        }
    }

    pub fn node_index(&self, id: NodeId) -> Result<usize> {
        let idx = match id.kind {
            NodeKind::Mbs if id.index == 1 => Some(0),
            NodeKind::Sbs if (1..=self.num_sbs).contains(&id.index) => Some(id.index),
            NodeKind::Ue if (1..=self.num_ue).contains(&id.index) => Some(self.num_sbs + id.index),
            _ => None,
        };
        idx.ok_or(Error::UnknownNode(id))
    }

    pub fn power(&self, node: usize) -> f64 {
        match self.kind(node) {
            NodeKind::Mbs => self.params.mbs_power,
            NodeKind::Sbs => self.params.sbs_power,
            NodeKind::Ue => self.params.ue_power,
        }
    }

    pub fn cache_bits(&self, node: usize) -> f64 {
        match self.kind(node) {
            NodeKind::Mbs => self.params.mbs_cache_bits,
            NodeKind::Sbs => self.params.sbs_cache_bits,
            NodeKind::Ue => self.params.ue_cache_bits,
        }
    }

    /// Whole files node `node` can hold, `floor(C_i / L)`.
    pub fn cache_slots(&self, node: usize) -> usize {
        (self.cache_bits(node) / self.params.file_length + 1e-9).floor() as usize
    }

    pub fn default_reuse_limit(&self) -> usize {
        self.num_ue.div_ceil(self.params.num_channels)
    }

    /// `R`, the maximum number of users sharing one channel.
    pub fn reuse_limit(&self) -> usize {
        self.params.reuse_limit.unwrap_or_else(|| self.default_reuse_limit())
    }

    pub fn load(&self) -> f64 {
        self.params.load()
    }

    /// Euclidean distance between two named nodes.
    pub fn distance(&self, i: NodeId, j: NodeId) -> Result<f64> {
        Ok(self.dist(self.node_index(i)?, self.node_index(j)?))
    }

    /// Euclidean distance between two dense indices.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.positions[i].dist(&self.positions[j])
    }

    /// Mean received SNR of link `i -> j`: `P_i / sigma^2 * (d_ij / d0)^-alpha`.
    pub fn theta(&self, i: NodeId, j: NodeId) -> Result<f64> {
        self.theta_between(self.node_index(i)?, self.node_index(j)?)
    }

    pub fn theta_between(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::Domain(format!("theta of {} with itself", self.node_id(i))));
        }
        let d = self.dist(i, j);
        if d <= 0.0 {
            return Err(Error::Domain(format!(
                "{} and {} are co-located",
                self.node_id(i),
                self.node_id(j)
            )));
        }
        Ok(link_theta(
            self.power(i),
            self.params.noise_power,
            d,
            self.params.reference_distance,
            self.params.path_loss_exponent,
        ))
    }
}

/// `P / sigma^2 * (d / d0)^-alpha`.
pub fn link_theta(power: f64, noise: f64, distance: f64, reference: f64, alpha: f64) -> f64 {
    power / noise * (distance / reference).powf(-alpha)
}

fn draw_separated(rng: &mut ChaCha8Rng, radius: f64, min_sep: f64, placed: &[Point]) -> Result<Point> {
    const MAX_TRIES: usize = 100_000;
    for _ in 0..MAX_TRIES {
        let r = radius * rng.random::<f64>().sqrt();
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        let p = Point::new(r * phi.cos(), r * phi.sin());
        if placed.iter().all(|q| q.dist(&p) >= min_sep) {
            return Ok(p);
        }
    }
    Err(Error::invalid(format!(
        "cannot place a node with {min_sep} m separation inside a {radius} m disc"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_layout_has_expected_node_count() {
        let params = NetworkParams::default();
        let inst = NetworkInstance::generate(0, 22, 4, &params).unwrap();
        assert_eq!(inst.node_count(), 27);
        for u in 0..22 {
            assert!(inst.positions[inst.ue_node(u)].norm() <= 100.0);
        }
        for s in 0..4 {
            assert!(inst.positions[inst.sbs_node(s)].norm() <= params.sbs_radius);
        }
    }

    #[test]
    fn minimal_instance() {
        let inst = NetworkInstance::generate(3, 1, 0, &NetworkParams::default()).unwrap();
        assert_eq!(inst.node_count(), 2);
        assert_eq!(inst.kind(1), NodeKind::Ue);
    }

    #[test]
    fn generation_is_deterministic() {
        let p = NetworkParams::default();
        let a = NetworkInstance::generate(42, 10, 4, &p).unwrap();
        let b = NetworkInstance::generate(42, 10, 4, &p).unwrap();
        assert_eq!(a, b);
        let c = NetworkInstance::generate(43, 10, 4, &p).unwrap();
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn separation_floor_respected() {
        let p = NetworkParams::default();
        let inst = NetworkInstance::generate(9, 22, 4, &p).unwrap();
        for i in 0..inst.node_count() {
            for j in 0..i {
                assert!(inst.dist(i, j) >= 1.0);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = NetworkParams::default();
        assert!(NetworkInstance::generate(0, 0, 1, &p).is_err());
        let bad = NetworkParams {
            cell_radius: -1.0,
            ..NetworkParams::default()
        };
        assert!(NetworkInstance::generate(0, 2, 1, &bad).is_err());
        let bad = NetworkParams {
            path_loss_exponent: 1.5,
            ..NetworkParams::default()
        };
        assert!(NetworkInstance::generate(0, 2, 1, &bad).is_err());
        let bad = NetworkParams {
            reuse_limit: Some(1),
            ..NetworkParams::default()
        };
        assert!(NetworkInstance::generate(0, 7, 1, &bad).is_err());
    }

    #[test]
    fn distance_examples() {
        let inst = NetworkInstance::from_positions(NetworkParams::default(), &[], &[Point::new(30.0, 40.0)]).unwrap();
        assert_eq!(inst.distance(NodeId::MBS, NodeId::ue(1)).unwrap(), 50.0);
        assert_eq!(inst.distance(NodeId::ue(1), NodeId::ue(1)).unwrap(), 0.0);
        assert!(matches!(
            inst.distance(NodeId::ue(2), NodeId::MBS),
            Err(Error::UnknownNode(_))
        ));
        assert!(inst.distance(NodeId::sbs(1), NodeId::MBS).is_err());
    }

    #[test]
    fn theta_examples() {
        let params = NetworkParams {
            mbs_power: 1.0,
            noise_power: 0.01,
            reference_distance: 1.0,
            path_loss_exponent: 3.0,
            ..NetworkParams::default()
        };
        let inst = NetworkInstance::from_positions(params, &[], &[Point::new(1.0, 0.0), Point::new(2.0, 0.0)]).unwrap();
        assert!((inst.theta(NodeId::MBS, NodeId::ue(1)).unwrap() - 100.0).abs() < 1e-12);
        assert!((inst.theta(NodeId::MBS, NodeId::ue(2)).unwrap() - 12.5).abs() < 1e-12);
        assert!(inst.theta(NodeId::ue(1), NodeId::ue(1)).is_err());
    }

    #[test]
    fn colocated_nodes_have_no_theta() {
        let inst = NetworkInstance::from_positions(
            NetworkParams::default(),
            &[],
            &[Point::new(5.0, 5.0), Point::new(5.0, 5.0)],
        )
        .unwrap();
        assert!(matches!(inst.theta_between(1, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn node_ids_round_trip() {
        let inst = NetworkInstance::generate(1, 5, 3, &NetworkParams::default()).unwrap();
        for i in 0..inst.node_count() {
            assert_eq!(inst.node_index(inst.node_id(i)).unwrap(), i);
        }
        assert_eq!(inst.node_id(4).to_string(), "UE1");
        assert_eq!(inst.user_of(4), Some(0));
        assert_eq!(inst.user_of(3), None);
    }

    #[test]
    fn cache_slots_floor_partial_files() {
        let params = NetworkParams {
            file_length: 200.0,
            ..NetworkParams::default()
        };
        let inst = NetworkInstance::generate(0, 3, 1, &params).unwrap();
        assert_eq!(inst.cache_slots(0), 2);
        assert_eq!(inst.cache_slots(1), 1);
        assert_eq!(inst.cache_slots(2), 0);
    }
}

//! Decision matrices and the per-request delivery-delay bound.
//!
//! Every evaluator here adds the same non-zero terms in the same order:
//!
//! 1. backhaul delay, weighted by "no cacher";
//! 2. MBS link without interference;
//! 3. MBS link under each interferer `y`, per (channel, co-user, file);
//! 4. for each cacher `x`: its clean link, then its interfered terms.
//!
//! Terms with zero weight are skipped, so on binary inputs the direct,
//! linearized and incremental evaluators agree bit for bit.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::DelayBoundTable;
use crate::error::{Error, Result};
use crate::popularity::PopularityModel;
use crate::topology::NetworkInstance;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BinaryMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            if let Some(v) = r.iter().find(|v| **v > 1) {
                return Err(Error::invalid(format!("binary matrix entry {v} in row {i}")));
            }
            data.extend_from_slice(r);
        }
        Ok(BinaryMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    pub fn is_set(&self, r: usize, c: usize) -> bool {
        self.get(r, c) == 1
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v as u8;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_sum(&self, r: usize) -> usize {
        self.row(r).iter().map(|&v| v as usize).sum()
    }

    pub fn col_sum(&self, c: usize) -> usize {
        (0..self.rows).map(|r| self.get(r, c) as usize).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<u8>>> for BinaryMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        BinaryMatrix::from_rows(rows)
    }
}

impl From<BinaryMatrix> for Vec<Vec<u8>> {
    fn from(m: BinaryMatrix) -> Self {
        m.to_rows()
    }
}

/// Constraint violated by an assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    CacheCapacity {
        node: usize,
        files: usize,
        slots: usize,
    },
    Redundancy {
        file: usize,
        copies: usize,
    },
    ChannelCount {
        user: usize,
        channels: usize,
    },
    ChannelReuse {
        channel: usize,
        users: usize,
        limit: usize,
    },
    DelayThreshold {
        user: usize,
        file: usize,
        bound: f64,
        threshold: f64,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::CacheCapacity { node, files, slots } => {
                write!(f, "node {node} caches {files} files but has room for {slots}")
            }
            Violation::Redundancy { file, copies } => write!(f, "file {file} is cached {copies} times"),
            Violation::ChannelCount { user, channels } => {
                write!(f, "user {user} holds {channels} channels instead of one")
            }
            Violation::ChannelReuse { channel, users, limit } => {
                write!(f, "channel {channel} serves {users} users, limit {limit}")
            }
            Violation::DelayThreshold {
                user,
                file,
                bound,
                threshold,
            } => write!(
                f,
                "user {user} marked as served for file {file} but its delay bound {bound} exceeds {threshold}"
            ),
        }
    }
}

/// Caching (`nodes × F`), channel (`U × W`) and delivery (`U × F`) matrices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub caching: BinaryMatrix,
    pub channels: BinaryMatrix,
    pub delivery: BinaryMatrix,
}

impl Assignment {
    pub fn empty(instance: &NetworkInstance) -> Self {
        Assignment {
            caching: BinaryMatrix::zeros(instance.node_count(), instance.num_files()),
            channels: BinaryMatrix::zeros(instance.num_ue, instance.num_channels()),
            delivery: BinaryMatrix::zeros(instance.num_ue, instance.num_files()),
        }
    }

    /// Single-copy caching from `holder[f]`, channels from `channel_of[u]`;
    /// the delivery matrix is left empty.
    pub fn from_parts(instance: &NetworkInstance, holder: &[Option<usize>], channel_of: &[usize]) -> Result<Self> {
        let mut a = Assignment::empty(instance);
        if holder.len() != instance.num_files() || channel_of.len() != instance.num_ue {
            return Err(Error::DimensionMismatch(
                "holder or channel vector has the wrong length".into(),
            ));
        }
        for (f, h) in holder.iter().enumerate() {
            if let Some(i) = *h {
                if i >= instance.node_count() {
                    return Err(Error::IndexOutOfRange {
                        what: "node",
                        index: i,
                        len: instance.node_count(),
                    });
                }
                a.caching.set(i, f, true);
            }
        }
        for (u, &w) in channel_of.iter().enumerate() {
            if w >= instance.num_channels() {
                return Err(Error::IndexOutOfRange {
                    what: "channel",
                    index: w,
                    len: instance.num_channels(),
                });
            }
            a.channels.set(u, w, true);
        }
        Ok(a)
    }

    pub fn check_shape(&self, instance: &NetworkInstance) -> Result<()> {
        let want = [
            ("caching", &self.caching, instance.node_count(), instance.num_files()),
            ("channel", &self.channels, instance.num_ue, instance.num_channels()),
            ("delivery", &self.delivery, instance.num_ue, instance.num_files()),
        ];
        for (name, m, r, c) in want {
            if m.rows() != r || m.cols() != c {
                return Err(Error::DimensionMismatch(format!(
                    "{name} matrix is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(())
    }

    /// Capacity, redundancy and channel constraints (not the delay one).
    pub fn structural_violations(&self, instance: &NetworkInstance) -> Result<Vec<Violation>> {
        self.check_shape(instance)?;
        let mut out = Vec::new();
        for i in 0..instance.node_count() {
            let files = self.caching.row_sum(i);
            let slots = instance.cache_slots(i);
            if files > slots {
                out.push(Violation::CacheCapacity { node: i, files, slots });
            }
        }
        for f in 0..instance.num_files() {
            let copies = self.caching.col_sum(f);
            if copies > 1 {
                out.push(Violation::Redundancy { file: f, copies });
            }
        }
        for u in 0..instance.num_ue {
            let channels = self.channels.row_sum(u);
            if channels != 1 {
                out.push(Violation::ChannelCount { user: u, channels });
            }
        }
        let limit = instance.reuse_limit();
        for w in 0..instance.num_channels() {
            let users = self.channels.col_sum(w);
            if users > limit {
                out.push(Violation::ChannelReuse {
                    channel: w,
                    users,
                    limit,
                });
            }
        }
        Ok(out)
    }

    /// `holder[f]` under single-copy caching; `None` if some file has
    /// several copies.
    pub fn holders(&self) -> Option<Vec<Option<usize>>> {
        (0..self.caching.cols())
            .map(|f| {
                let mut found = None;
                for i in 0..self.caching.rows() {
                    if self.caching.is_set(i, f) {
                        if found.is_some() {
                            return None;
                        }
                        found = Some(i);
                    }
                }
                Some(found)
            })
            .collect()
    }

    /// `channel_of[u]` when every user holds exactly one channel.
    pub fn channel_of(&self) -> Option<Vec<usize>> {
        (0..self.channels.rows())
            .map(|u| {
                let row = self.channels.row(u);
                (row.iter().filter(|&&v| v == 1).count() == 1).then(|| row.iter().position(|&v| v == 1).unwrap())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmitterProbs {
    pub none: f64,
    /// Indexed by dense node; the receiver's own entry is 0.
    pub by_node: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfererProbs {
    pub none: f64,
    pub by_node: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityBreakdown {
    pub transmitters: TransmitterProbs,
    pub interferers: InterfererProbs,
}

/// Probability that each node is the (only) potential transmitter of file
/// `f` to the node `receiver`, from the product form over caching bits.
pub fn transmitter_probs(caching: &BinaryMatrix, receiver: usize, f: usize) -> TransmitterProbs {
    let n = caching.rows();
    let keep = |i: usize| 1.0 - caching.get(i, f) as f64;
    let none = (0..n).filter(|&i| i != receiver).map(keep).product();
    let by_node = (0..n)
        .map(|x| {
            if x == receiver {
                return 0.0;
            }
            let mut p = caching.get(x, f) as f64;
            for i in 0..n {
                if i != receiver && i != x {
                    p *= keep(i);
                }
            }
            p
        })
        .collect();
    TransmitterProbs { none, by_node }
}

fn user_offset(a: &Assignment) -> usize {
    a.caching.rows() - a.channels.rows()
}

/// Probability that user `u` is on a channel of its own.
pub fn idle_channel_prob(channels: &BinaryMatrix, u: usize) -> f64 {
    (0..channels.cols())
        .map(|w| {
            let mut p = channels.get(u, w) as f64;
            for v in 0..channels.rows() {
                if v != u {
                    p *= 1.0 - channels.get(v, w) as f64;
                }
            }
            p
        })
        .sum()
}

/// Interferer distribution seen by user `u` while it downloads file `f`
/// from `transmitter` (dense node; the MBS when the file comes over the
/// backhaul). Co-channel users other than `u`, the transmitter and the
/// interferer itself request files `f' != f` with their popularity.
pub fn interferer_probs(
    a: &Assignment,
    popularity: &PopularityModel,
    u: usize,
    f: usize,
    transmitter: usize,
) -> Result<InterfererProbs> {
    let off = user_offset(a);
    let n = a.caching.rows();
    let users = a.channels.rows();
    let rx = off + u;
    let tps = all_transmitter_probs(a);
    let mut by_node = vec![0.0; n];
    for (y, slot) in by_node.iter_mut().enumerate() {
        if y == rx || y == transmitter {
            continue;
        }
        let mut total = 0.0;
        for w in 0..a.channels.cols() {
            for v in 0..users {
                let vn = off + v;
                if v == u || vn == transmitter || vn == y {
                    continue;
                }
                let rr = a.channels.get(u, w) as f64 * a.channels.get(v, w) as f64;
                for fp in 0..a.caching.cols() {
                    if fp != f {
                        total +=
                            rr * popularity.averaged_popularity(v, fp)? * tps[v * a.caching.cols() + fp].by_node[y];
                    }
                }
            }
        }
        *slot = total;
    }
    Ok(InterfererProbs {
        none: idle_channel_prob(&a.channels, u),
        by_node,
    })
}

fn all_transmitter_probs(a: &Assignment) -> Vec<TransmitterProbs> {
    let off = user_offset(a);
    let files = a.caching.cols();
    (0..a.channels.rows())
        .flat_map(|v| (0..files).map(move |fp| (v, fp)))
        .map(|(v, fp)| transmitter_probs(&a.caching, off + v, fp))
        .collect()
}

struct Accumulator {
    sum: f64,
}

impl Accumulator {
    fn add(&mut self, weight: f64, value: impl FnOnce() -> Result<f64>) -> Result<()> {
        if weight != 0.0 {
            self.sum += weight * value()?;
        }
        Ok(())
    }

    fn add_weighted(&mut self, weight: f64, popularity: f64, value: impl FnOnce() -> Result<f64>) -> Result<()> {
        if weight != 0.0 {
            self.sum += (weight * popularity) * value()?;
        }
        Ok(())
    }
}

fn check_request(instance: &NetworkInstance, a: &Assignment, u: usize, f: usize) -> Result<()> {
    a.check_shape(instance)?;
    if u >= instance.num_ue {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: u,
            len: instance.num_ue,
        });
    }
    if f >= instance.num_files() {
        return Err(Error::IndexOutOfRange {
            what: "file",
            index: f,
            len: instance.num_files(),
        });
    }
    Ok(())
}

/// Upper bound on the average delay (slots) to deliver file `f` to user
/// `u`, assembled from transmitter and interferer probabilities.
pub fn delivery_bound(
    instance: &NetworkInstance,
    a: &Assignment,
    popularity: &PopularityModel,
    table: &DelayBoundTable,
    u: usize,
    f: usize,
) -> Result<f64> {
    check_request(instance, a, u, f)?;
    let n = instance.node_count();
    let users = instance.num_ue;
    let files = instance.num_files();
    let rx = instance.ue_node(u);
    let mbs = instance.mbs();
    if a.caching.is_set(rx, f) {
        return Ok(0.0);
    }
    let keep = 1.0 - a.caching.get(rx, f) as f64;
    let tp = transmitter_probs(&a.caching, rx, f);
    let idle = idle_channel_prob(&a.channels, u);
    let tps = all_transmitter_probs(a);
    let mut acc = Accumulator { sum: 0.0 };

    let interfered = |acc: &mut Accumulator, x: usize, base: f64| -> Result<()> {
        for y in 0..n {
            if y == rx || y == x {
                continue;
            }
            for w in 0..instance.num_channels() {
                for v in 0..users {
                    let vn = instance.ue_node(v);
                    if v == u || vn == x || vn == y {
                        continue;
                    }
                    for fp in 0..files {
                        if fp == f {
                            continue;
                        }
                        let weight = base
                            * a.channels.get(u, w) as f64
                            * a.channels.get(v, w) as f64
                            * tps[v * files + fp].by_node[y];
                        let q = popularity.averaged_popularity(v, fp)?;
                        acc.add_weighted(weight, q, || table.g(x, u, Some(y)))?;
                    }
                }
            }
        }
        Ok(())
    };

    let backhaul = keep * tp.none;
    acc.add(backhaul, || Ok(instance.params.backhaul_delay))?;
    acc.add(backhaul * idle, || table.g(mbs, u, None))?;
    interfered(&mut acc, mbs, backhaul)?;
    for x in 0..n {
        if x == rx {
            continue;
        }
        let base = keep * tp.by_node[x];
        if base == 0.0 {
            continue;
        }
        acc.add(base * idle, || table.g(x, u, None))?;
        interfered(&mut acc, x, base)?;
    }
    Ok(acc.sum)
}

/// Chains of auxiliary binaries that linearize the products in the
/// delivery bound, materialized from an assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxiliaryVariables {
    nodes: usize,
    users: usize,
    channels: usize,
    files: usize,
    /// `phi[f * nodes + i]`: no node among `0..=i` caches `f`.
    phi: Vec<u8>,
    /// `phix[(x * files + f) * nodes + i]`: among `0..=i`, only `x` may
    /// cache `f`, and `x` does if `i >= x`.
    phix: Vec<u8>,
    /// `rho[(u * channels + w) * users + v]`: `u` on `w` and none of the
    /// users `0..=v` other than `u` on `w`.
    rho: Vec<u8>,
    /// `pair[(u * users + v) * channels + w]`: `u` and `v` both on `w`.
    pair: Vec<u8>,
}

impl AuxiliaryVariables {
    pub fn from_assignment(a: &Assignment) -> Self {
        let nodes = a.caching.rows();
        let files = a.caching.cols();
        let users = a.channels.rows();
        let channels = a.channels.cols();
        let c = |i: usize, f: usize| a.caching.get(i, f);
        let r = |u: usize, w: usize| a.channels.get(u, w);

        let mut phi = vec![0u8; files * nodes];
        for f in 0..files {
            let mut prev = 1;
            for i in 0..nodes {
                prev &= 1 - c(i, f);
                phi[f * nodes + i] = prev;
            }
        }
        let mut phix = vec![0u8; nodes * files * nodes];
        for x in 0..nodes {
            for f in 0..files {
                let mut prev = 1;
                for i in 0..nodes {
                    let bar = if i == x { c(i, f) } else { 1 - c(i, f) };
                    prev &= bar;
                    phix[(x * files + f) * nodes + i] = prev;
                }
            }
        }
        let mut rho = vec![0u8; users * channels * users];
        for u in 0..users {
            for w in 0..channels {
                let mut prev = 1;
                for v in 0..users {
                    let delta = if v == u { r(u, w) } else { 1 - r(v, w) };
                    prev &= delta;
                    rho[(u * channels + w) * users + v] = prev;
                }
            }
        }
        let mut pair = vec![0u8; users * users * channels];
        for u in 0..users {
            for v in 0..users {
                for w in 0..channels {
                    pair[(u * users + v) * channels + w] = r(u, w) & r(v, w);
                }
            }
        }
        AuxiliaryVariables {
            nodes,
            users,
            channels,
            files,
            phi,
            phix,
            rho,
            pair,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn num_files(&self) -> usize {
        self.files
    }

    pub fn phi_chain(&self, i: usize, f: usize) -> u8 {
        self.phi[f * self.nodes + i]
    }

    pub fn phi(&self, f: usize) -> u8 {
        self.phi_chain(self.nodes - 1, f)
    }

    pub fn phix_chain(&self, x: usize, i: usize, f: usize) -> u8 {
        self.phix[(x * self.files + f) * self.nodes + i]
    }

    pub fn phix(&self, x: usize, f: usize) -> u8 {
        self.phix_chain(x, self.nodes - 1, f)
    }

    pub fn rho_chain(&self, u: usize, v: usize, w: usize) -> u8 {
        self.rho[(u * self.channels + w) * self.users + v]
    }

    pub fn rho(&self, u: usize, w: usize) -> u8 {
        self.rho_chain(u, self.users - 1, w)
    }

    pub fn pair(&self, u: usize, v: usize, w: usize) -> u8 {
        self.pair[(u * self.users + v) * self.channels + w]
    }

    pub fn omega(&self, u: usize, w: usize, f: usize) -> u8 {
        self.rho(u, w) & self.phi(f)
    }

    pub fn omega_x(&self, u: usize, w: usize, f: usize, x: usize) -> u8 {
        self.rho(u, w) & self.phix(x, f)
    }

    pub fn gamma(&self, u: usize, v: usize, w: usize, f: usize) -> u8 {
        self.pair(u, v, w) & self.phi(f)
    }

    pub fn gamma_x(&self, u: usize, v: usize, w: usize, f: usize, x: usize) -> u8 {
        self.pair(u, v, w) & self.phix(x, f)
    }

    pub fn lambda(&self, u: usize, v: usize, w: usize, f: usize, fp: usize, y: usize) -> u8 {
        self.gamma(u, v, w, f) & self.phix(y, fp)
    }

    pub fn lambda_x(&self, u: usize, v: usize, w: usize, f: usize, fp: usize, x: usize, y: usize) -> u8 {
        self.gamma_x(u, v, w, f, x) & self.phix(y, fp)
    }
}

/// The delivery bound written as a linear function of the auxiliary
/// binaries.
pub fn delivery_bound_linearized(
    instance: &NetworkInstance,
    a: &Assignment,
    popularity: &PopularityModel,
    table: &DelayBoundTable,
    u: usize,
    f: usize,
) -> Result<f64> {
    check_request(instance, a, u, f)?;
    let aux = AuxiliaryVariables::from_assignment(a);
    delivery_bound_from_auxiliaries(instance, &aux, popularity, table, u, f)
}

pub fn delivery_bound_from_auxiliaries(
    instance: &NetworkInstance,
    aux: &AuxiliaryVariables,
    popularity: &PopularityModel,
    table: &DelayBoundTable,
    u: usize,
    f: usize,
) -> Result<f64> {
    let n = aux.num_nodes();
    let users = aux.num_users();
    let channels = aux.num_channels();
    let files = aux.num_files();
    let rx = instance.ue_node(u);
    let mbs = instance.mbs();
    let mut acc = Accumulator { sum: 0.0 };

    acc.add(aux.phi(f) as f64, || Ok(instance.params.backhaul_delay))?;
    for w in 0..channels {
        acc.add(aux.omega(u, w, f) as f64, || table.g(mbs, u, None))?;
    }
    for y in 0..n {
        if y == rx || y == mbs {
            continue;
        }
        for w in 0..channels {
            for v in 0..users {
                if v == u || instance.ue_node(v) == y {
                    continue;
                }
                for fp in 0..files {
                    if fp == f {
                        continue;
                    }
                    let lam = aux.lambda(u, v, w, f, fp, y) as f64;
                    let q = popularity.averaged_popularity(v, fp)?;
                    acc.add_weighted(lam, q, || table.g(mbs, u, Some(y)))?;
                }
            }
        }
    }
    for x in 0..n {
        if x == rx {
            continue;
        }
        for w in 0..channels {
            acc.add(aux.omega_x(u, w, f, x) as f64, || table.g(x, u, None))?;
        }
        for y in 0..n {
            if y == rx || y == x {
                continue;
            }
            for w in 0..channels {
                for v in 0..users {
                    let vn = instance.ue_node(v);
                    if v == u || vn == x || vn == y {
                        continue;
                    }
                    for fp in 0..files {
                        if fp == f {
                            continue;
                        }
                        let lam = aux.lambda_x(u, v, w, f, fp, x, y) as f64;
                        let q = popularity.averaged_popularity(v, fp)?;
                        acc.add_weighted(lam, q, || table.g(x, u, Some(y)))?;
                    }
                }
            }
        }
    }
    Ok(acc.sum)
}

/// Incremental evaluator for single-copy caching and one channel per user,
/// the structure every search in this crate works with.
#[derive(Debug, Clone)]
pub struct FastEvaluator<'a> {
    table: &'a DelayBoundTable,
    popularity: &'a PopularityModel,
    backhaul_delay: f64,
    nodes: usize,
    user_offset: usize,
    holder: Vec<Option<usize>>,
    files_at: Vec<Vec<usize>>,
    channel_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl<'a> FastEvaluator<'a> {
    pub fn new(
        instance: &NetworkInstance,
        table: &'a DelayBoundTable,
        popularity: &'a PopularityModel,
        holder: &[Option<usize>],
        channel_of: &[usize],
    ) -> Result<Self> {
        let n = instance.node_count();
        if holder.len() != instance.num_files() || channel_of.len() != instance.num_ue {
            return Err(Error::DimensionMismatch(
                "holder or channel vector has the wrong length".into(),
            ));
        }
        if popularity.num_users() != instance.num_ue || popularity.num_files() != instance.num_files() {
            return Err(Error::DimensionMismatch(
                "popularity model does not match the instance".into(),
            ));
        }
        let mut files_at = vec![Vec::new(); n];
        for (f, h) in holder.iter().enumerate() {
            if let Some(i) = *h {
                if i >= n {
                    return Err(Error::IndexOutOfRange {
                        what: "node",
                        index: i,
                        len: n,
                    });
                }
                files_at[i].push(f);
            }
        }
        let mut members = vec![Vec::new(); instance.num_channels()];
        for (u, &w) in channel_of.iter().enumerate() {
            if w >= members.len() {
                return Err(Error::IndexOutOfRange {
                    what: "channel",
                    index: w,
                    len: members.len(),
                });
            }
            members[w].push(u);
        }
        Ok(FastEvaluator {
            table,
            popularity,
            backhaul_delay: instance.params.backhaul_delay,
            nodes: n,
            user_offset: instance.ue_node(0),
            holder: holder.to_vec(),
            files_at,
            channel_of: channel_of.to_vec(),
            members,
        })
    }

    pub fn holder(&self, f: usize) -> Option<usize> {
        self.holder[f]
    }

    pub fn holders(&self) -> &[Option<usize>] {
        &self.holder
    }

    pub fn files_at(&self, node: usize) -> &[usize] {
        &self.files_at[node]
    }

    pub fn set_holder(&mut self, f: usize, node: Option<usize>) {
        if let Some(old) = self.holder[f] {
            let list = &mut self.files_at[old];
            if let Ok(pos) = list.binary_search(&f) {
                list.remove(pos);
            }
        }
        if let Some(new) = node {
            let list = &mut self.files_at[new];
            if let Err(pos) = list.binary_search(&f) {
                list.insert(pos, f);
            }
        }
        self.holder[f] = node;
    }

    /// Delivery bound for user `u` and file `f` under the current state.
    pub fn g(&self, u: usize, f: usize) -> Result<f64> {
        let rx = self.user_offset + u;
        let holder = self.holder[f];
        if holder == Some(rx) {
            return Ok(0.0);
        }
        let ch = self.channel_of[u];
        let idle = self.members[ch].len() == 1;
        let mut sum = 0.0;
        let x = match holder {
            None => {
                sum += self.backhaul_delay;
                0
            }
            Some(x) => x,
        };
        if idle {
            sum += self.table.g(x, u, None)?;
            return Ok(sum);
        }
        for y in 0..self.nodes {
            if y == rx || y == x || self.files_at[y].is_empty() {
                continue;
            }
            let mut g_y = None;
            for &v in &self.members[ch] {
                let vn = self.user_offset + v;
                if v == u || vn == x || vn == y {
                    continue;
                }
                for &fp in &self.files_at[y] {
                    if fp == f {
                        continue;
                    }
                    let g = match g_y {
                        Some(g) => g,
                        None => *g_y.insert(self.table.g(x, u, Some(y))?),
                    };
                    sum += self.popularity.user_row(v)[fp] * g;
                }
            }
        }
        Ok(sum)
    }

    /// Popularity-weighted successful deliveries of file `f`, `Σ_u Q_uf x_uf`,
    /// not yet divided by the user count.
    pub fn file_score(&self, f: usize, threshold: f64) -> Result<f64> {
        let mut s = 0.0;
        for u in 0..self.channel_of.len() {
            if self.g(u, f)? <= threshold {
                s += self.popularity.user_row(u)[f];
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryEvaluation {
    /// `g[u * F + f]`.
    pub g: Vec<f64>,
    pub delivery: BinaryMatrix,
    pub sdr: f64,
}

impl DeliveryEvaluation {
    pub fn bound(&self, u: usize, f: usize) -> f64 {
        self.g[u * self.delivery.cols() + f]
    }

    /// Popularity-weighted mean of the finite delay bounds.
    pub fn mean_bound(&self, popularity: &PopularityModel) -> f64 {
        let users = self.delivery.rows();
        let files = self.delivery.cols();
        let mut num = 0.0;
        let mut den = 0.0;
        for u in 0..users {
            for f in 0..files {
                let g = self.g[u * files + f];
                if g.is_finite() {
                    let q = popularity.user_row(u)[f];
                    num += q * g;
                    den += q;
                }
            }
        }
        if den > 0.0 {
            num / den
        } else {
            f64::NAN
        }
    }
}

/// `(1/U) Σ_u Σ_f Q_uf x_uf`, capped at 1 against rounding.
pub fn successful_delivery_rate(popularity: &PopularityModel, delivery: &BinaryMatrix) -> f64 {
    let users = delivery.rows();
    let mut s = 0.0;
    for u in 0..users {
        let row = popularity.user_row(u);
        for f in 0..delivery.cols() {
            if delivery.is_set(u, f) {
                s += row[f];
            }
        }
    }
    (s / users as f64).min(1.0)
}

/// Bounds every request and marks it delivered when its bound meets the
/// threshold. Uses the incremental evaluator when the caching is
/// single-copy, the direct formula otherwise.
pub fn evaluate_deliveries(
    instance: &NetworkInstance,
    a: &Assignment,
    popularity: &PopularityModel,
    table: &DelayBoundTable,
) -> Result<DeliveryEvaluation> {
    a.check_shape(instance)?;
    let users = instance.num_ue;
    let files = instance.num_files();
    let threshold = instance.params.delay_threshold;
    let mut g = Vec::with_capacity(users * files);
    match (a.holders(), a.channel_of()) {
        (Some(h), Some(ch)) => {
            let fast = FastEvaluator::new(instance, table, popularity, &h, &ch)?;
            for u in 0..users {
                for f in 0..files {
                    g.push(fast.g(u, f)?);
                }
            }
        }
        _ => {
            for u in 0..users {
                for f in 0..files {
                    g.push(delivery_bound(instance, a, popularity, table, u, f)?);
                }
            }
        }
    }
    let mut delivery = BinaryMatrix::zeros(users, files);
    for u in 0..users {
        for f in 0..files {
            delivery.set(u, f, g[u * files + f] <= threshold);
        }
    }
    let sdr = successful_delivery_rate(popularity, &delivery);
    Ok(DeliveryEvaluation { g, delivery, sdr })
}

/// Writes per-request rows `(user, file, popularity, bound, delivered)`.
pub fn write_delivery_csv<W: Write>(
    out: W,
    evaluation: &DeliveryEvaluation,
    popularity: &PopularityModel,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user", "file", "popularity", "bound", "delivered"])?;
    let files = evaluation.delivery.cols();
    for u in 0..evaluation.delivery.rows() {
        for f in 0..files {
            w.write_record([
                u.to_string(),
                f.to_string(),
                popularity.user_row(u)[f].to_string(),
                evaluation.g[u * files + f].to_string(),
                evaluation.delivery.get(u, f).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

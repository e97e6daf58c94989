//! Geometric channel allocation: users are split into one polygon per
//! channel, choosing the split whose polygon perimeters are large on
//! average and alike (`ν = mean / variance`).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::delivery::BinaryMatrix;
use crate::error::{Error, Result};
use crate::topology::{NetworkInstance, Point};

/// Added to the perimeter variance so equal perimeters score finitely.
pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocationOptions {
    /// Enumerate every partition when there are at most this many.
    pub max_enumeration: u64,
    /// Random partitions drawn otherwise.
    pub samples: usize,
    pub seed: u64,
}

impl Default for AllocationOptions {
    fn default() -> Self {
        AllocationOptions {
            max_enumeration: 10_000,
            samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonPartition {
    /// Users (0-based) of each group; channel `j` serves group `j`.
    pub groups: Vec<Vec<usize>>,
    pub perimeters: Vec<f64>,
    pub mean_perimeter: f64,
    pub variance: f64,
    pub nu: f64,
}

impl PolygonPartition {
    fn score(groups: Vec<Vec<usize>>, positions: &[Point]) -> Self {
        let perimeters: Vec<f64> = groups
            .iter()
            .map(|g| polygon_perimeter(&g.iter().map(|&u| positions[u]).collect::<Vec<_>>()))
            .collect();
        let w = perimeters.len() as f64;
        let mean = perimeters.iter().sum::<f64>() / w;
        let variance = perimeters.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / w;
        PolygonPartition {
            groups,
            perimeters,
            mean_perimeter: mean,
            variance,
            nu: mean / (variance + VARIANCE_FLOOR),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAllocation {
    pub partition: PolygonPartition,
    pub channel_of: Vec<usize>,
    pub channels: BinaryMatrix,
    pub candidates_evaluated: u64,
    pub exhaustive: bool,
}

/// Perimeter of the cycle through `points` in angular order around their
/// centroid; two points count the segment twice, one point gives 0.
pub fn polygon_perimeter(points: &[Point]) -> f64 {
    match points.len() {
        0 | 1 => 0.0,
        2 => 2.0 * points[0].dist(&points[1]),
        n => {
            let cx = points.iter().map(|p| p.x).sum::<f64>() / n as f64;
            let cy = points.iter().map(|p| p.y).sum::<f64>() / n as f64;
            let c = Point::new(cx, cy);
            let mut order: Vec<(f64, f64, Point)> = points
                .iter()
                .map(|p| ((p.y - cy).atan2(p.x - cx), p.dist(&c), *p))
                .collect();
            order.sort_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(a.2.x.total_cmp(&b.2.x))
                    .then(a.2.y.total_cmp(&b.2.y))
            });
            (0..n).map(|i| order[i].2.dist(&order[(i + 1) % n].2)).sum()
        }
    }
}

/// Group sizes: `U mod W` groups of `U div W + 1`, the rest `U div W`.
pub fn group_sizes(users: usize, channels: usize) -> Vec<usize> {
    let x = users / channels;
    let extra = users % channels;
    (0..channels).map(|j| if j < extra { x + 1 } else { x }).collect()
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Number of unordered partitions of `users` into the group sizes above.
pub fn partition_count(users: usize, channels: usize) -> f64 {
    let sizes = group_sizes(users, channels);
    let extra = users % channels;
    let mut ln = ln_factorial(users);
    for s in &sizes {
        ln -= ln_factorial(*s);
    }
    ln -= ln_factorial(extra) + ln_factorial(channels - extra);
    ln.exp().round()
}

/// Calls `visit` once per unordered partition with the size profile, in a
/// fixed order: the group holding the lowest unassigned user is formed
/// next, larger size first, members in lexicographic order.
fn for_each_partition<F: FnMut(&[Vec<usize>])>(users: usize, channels: usize, mut visit: F) {
    let x = users / channels;
    let extra = users % channels;
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(channels);
    let mut used = vec![false; users];

    fn recurse<F: FnMut(&[Vec<usize>])>(
        groups: &mut Vec<Vec<usize>>,
        used: &mut [bool],
        big_left: usize,
        small_left: usize,
        x: usize,
        visit: &mut F,
    ) {
        let Some(first) = used.iter().position(|u| !u) else {
            visit(groups);
            return;
        };
        let mut options = Vec::with_capacity(2);
        if big_left > 0 {
            options.push(x + 1);
        }
        if small_left > 0 && x > 0 {
            options.push(x);
        }
        for size in options {
            used[first] = true;
            let rest: Vec<usize> = (first + 1..used.len()).filter(|&v| !used[v]).collect();
            let mut pick = Vec::with_capacity(size - 1);
            choose(&rest, 0, size - 1, &mut pick, &mut |members: &[usize]| {
                let mut g = Vec::with_capacity(size);
                g.push(first);
                g.extend_from_slice(members);
                for &m in members {
                    used[m] = true;
                }
                groups.push(g);
                let (b, s) = if size == x + 1 {
                    (big_left - 1, small_left)
                } else {
                    (big_left, small_left - 1)
                };
                recurse(groups, used, b, s, x, visit);
                groups.pop();
                for &m in members {
                    used[m] = false;
                }
            });
            used[first] = false;
        }
    }

    fn choose<G: FnMut(&[usize])>(pool: &[usize], start: usize, k: usize, pick: &mut Vec<usize>, f: &mut G) {
        if pick.len() == k {
            f(pick);
            return;
        }
        let need = k - pick.len();
        for i in start..pool.len() {
            if pool.len() - i < need {
                break;
            }
            pick.push(pool[i]);
            choose(pool, i + 1, k, pick, f);
            pick.pop();
        }
    }

    recurse(&mut groups, &mut used, extra, channels - extra, x, &mut visit);
}

fn cut(order: &[usize], sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &s in sizes {
        out.push(order[at..at + s].to_vec());
        at += s;
    }
    out
}

/// Users sorted by angle around their centroid and dealt round-robin, which
/// spreads every group around the cell.
fn greedy_partition(positions: &[Point], channels: usize) -> Vec<Vec<usize>> {
    let n = positions.len();
    let cx = positions.iter().map(|p| p.x).sum::<f64>() / n as f64;
    let cy = positions.iter().map(|p| p.y).sum::<f64>() / n as f64;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ang = |u: usize| (positions[u].y - cy).atan2(positions[u].x - cx);
        ang(a).total_cmp(&ang(b)).then(a.cmp(&b))
    });
    let mut groups = vec![Vec::new(); channels];
    for (k, &u) in order.iter().enumerate() {
        groups[k % channels].push(u);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

fn finish(
    partition: PolygonPartition,
    users: usize,
    channels: usize,
    candidates: u64,
    exhaustive: bool,
) -> ChannelAllocation {
    let mut channel_of = vec![0; users];
    let mut matrix = BinaryMatrix::zeros(users, channels);
    for (j, g) in partition.groups.iter().enumerate() {
        for &u in g {
            channel_of[u] = j;
            matrix.set(u, j, true);
        }
    }
    ChannelAllocation {
        partition,
        channel_of,
        channels: matrix,
        candidates_evaluated: candidates,
        exhaustive,
    }
}

/// Channel allocation by polygon partition with default options.
pub fn allocate_channels(instance: &NetworkInstance) -> Result<ChannelAllocation> {
    allocate_channels_with(instance, &AllocationOptions::default())
}

pub fn allocate_channels_with(instance: &NetworkInstance, opts: &AllocationOptions) -> Result<ChannelAllocation> {
    let users = instance.num_ue;
    let channels = instance.num_channels();
    if users == 0 || channels == 0 {
        return Err(Error::invalid(
            "channel allocation needs at least one user and one channel",
        ));
    }
    let positions: Vec<Point> = (0..users).map(|u| instance.positions[instance.ue_node(u)]).collect();
    allocate_points(&positions, channels, opts)
}

/// Allocation for bare user positions.
pub fn allocate_points(positions: &[Point], channels: usize, opts: &AllocationOptions) -> Result<ChannelAllocation> {
    let users = positions.len();
    if users == 0 || channels == 0 {
        return Err(Error::invalid(
            "channel allocation needs at least one user and one channel",
        ));
    }
    if channels >= users {
        let mut groups: Vec<Vec<usize>> = (0..users).map(|u| vec![u]).collect();
        groups.resize(channels, Vec::new());
        let p = PolygonPartition::score(groups, positions);
        return Ok(finish(p, users, channels, 1, true));
    }

    let mut best: Option<PolygonPartition> = None;
    let consider = |groups: Vec<Vec<usize>>, best: &mut Option<PolygonPartition>| {
        let cand = PolygonPartition::score(groups, positions);
        if best.as_ref().is_none_or(|b| cand.nu > b.nu) {
            *best = Some(cand);
        }
    };

    if partition_count(users, channels) <= opts.max_enumeration as f64 {
        let mut evaluated = 0;
        for_each_partition(users, channels, |groups| {
            evaluated += 1;
            consider(groups.to_vec(), &mut best);
        });
        let best = best.expect("at least one partition");
        return Ok(finish(best, users, channels, evaluated, true));
    }

    let sizes = group_sizes(users, channels);
    consider(greedy_partition(positions, channels), &mut best);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..users).collect();
    for _ in 0..opts.samples {
        order.shuffle(&mut rng);
        let mut groups = cut(&order, &sizes);
        for g in &mut groups {
            g.sort_unstable();
        }
        consider(groups, &mut best);
    }
    let best = best.expect("greedy partition always scored");
    Ok(finish(best, users, channels, opts.samples as u64 + 1, false))
}

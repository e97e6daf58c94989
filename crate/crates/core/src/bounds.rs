//! Chernoff bounds on the slot-count needed to push one file across a
//! Rayleigh-faded link, and the expected-delay bound built from them.
//!
//! With `s = t / ln 2` and per-slot SNR `X ~ Exp(mean θ)`, the per-slot
//! moment is `E[(1+X)^-s] = J(1-s, 1/θ) / θ` (see
//! [`scaled_gamma_integral`]). The exceedance bound after `T` slots is
//! `min_t exp(t·load + T·(ln E + c))`, where `c = 0` without interference
//! and `c = ln(1 + Σθ')` with interferers `I`. The density-domination
//! factor `(1 + Σθ') / θ^(|I|-1)` is only valid for a single interferer or
//! `θ <= 1`; the factor `1 + Σθ'` holds for every interferer set and agrees
//! with it when `|I| = 1`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::special::{
    minimize_over_t, scaled_gamma_integral, truncated_series_sum, Bracket, MinimizerOptions, SeriesOptions,
};
use crate::topology::NetworkInstance;

/// Search range for the Chernoff parameter `t`, spaced logarithmically.
pub const T_BRACKET_LO: f64 = 1e-6;
pub const T_BRACKET_HI: f64 = 1e7;

pub fn default_bracket() -> Bracket {
    Bracket::logarithmic(T_BRACKET_LO, T_BRACKET_HI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkBoundParams {
    pub theta: f64,
    pub interferer_thetas: Vec<f64>,
    pub load: f64,
}

impl LinkBoundParams {
    pub fn new(theta: f64, interferer_thetas: Vec<f64>, load: f64) -> Result<Self> {
        let p = LinkBoundParams {
            theta,
            interferer_thetas,
            load,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn interference_free(theta: f64, load: f64) -> Result<Self> {
        Self::new(theta, Vec::new(), load)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid(format!(
                "link SNR must be positive and finite, got {}",
                self.theta
            )));
        }
        if !(self.load >= 0.0 && self.load.is_finite()) {
            return Err(Error::invalid(format!("load must be non-negative, got {}", self.load)));
        }
        if let Some(bad) = self.interferer_thetas.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!(
                "interferer SNR must be non-negative, got {bad}"
            )));
        }
        Ok(())
    }

    /// Per-slot log-offset `c` added to `ln E[Z]` by the interferers.
    pub fn interference_offset(&self) -> f64 {
        interference_offset(self.theta, &self.interferer_thetas)
    }
}

pub fn interference_offset(_theta: f64, interferers: &[f64]) -> f64 {
    interferers.iter().sum::<f64>().ln_1p()
}

/// Offset from the factor `(1 + Σθ') / θ^(|I|-1)`; not a valid bound for
/// several interferers on a link with `θ > 1`.
pub fn literal_interference_offset(theta: f64, interferers: &[f64]) -> f64 {
    if interferers.is_empty() {
        return 0.0;
    }
    interferers.iter().sum::<f64>().ln_1p() - (interferers.len() as f64 - 1.0) * theta.ln()
}

/// `ln E[Z]` for `Z = exp(-t·log2(1+X))`, `X ~ Exp(mean θ)`.
pub fn log_mean_z(theta: f64, t: f64) -> Result<f64> {
    let s = t / std::f64::consts::LN_2;
    let j = scaled_gamma_integral(1.0 - s, 1.0 / theta)?;
    Ok(j.ln() - theta.ln())
}

/// Closed form of `E[Z]` written with the upper incomplete gamma function.
pub fn mean_z_closed_form(theta: f64, t: f64) -> Result<f64> {
    let s = t / std::f64::consts::LN_2;
    let lg = crate::special::ln_upper_incomplete_gamma(1.0 - s, 1.0 / theta)?;
    Ok((1.0 / theta + lg - s * theta.ln()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffBound {
    /// `min(1, bound)`.
    pub value: f64,
    /// Natural log of the unclipped bound.
    pub log_bound: f64,
    pub t: f64,
    pub at_boundary: bool,
}

fn chernoff(theta: f64, load: f64, offset: f64, slots: u64) -> Result<ChernoffBound> {
    if slots == 0 {
        return Err(Error::invalid("slot count must be at least 1"));
    }
    let tt = slots as f64;
    let objective = |t: f64| match log_mean_z(theta, t) {
        Ok(h) => t * load + tt * (h + offset),
        Err(_) => f64::INFINITY,
    };
    let r = minimize_over_t(objective, default_bracket(), &MinimizerOptions::default())?;
    Ok(ChernoffBound {
        value: r.value.exp().min(1.0),
        log_bound: r.value,
        t: r.argmin,
        at_boundary: r.at_boundary,
    })
}

/// Interference-free bound on `P[delay > slots]`.
pub fn zeta0(params: &LinkBoundParams, slots: u64) -> Result<ChernoffBound> {
    params.validate()?;
    chernoff(params.theta, params.load, 0.0, slots)
}

/// Bound on `P[delay > slots]` under the listed interferers, with a single
/// joint minimization over `t`.
pub fn zeta1(params: &LinkBoundParams, slots: u64) -> Result<ChernoffBound> {
    params.validate()?;
    if params.interferer_thetas.is_empty() {
        return Err(Error::invalid(
            "interferer list is empty; use the interference-free bound",
        ));
    }
    chernoff(params.theta, params.load, params.interference_offset(), slots)
}

/// Bound on `P[delay > slots]`, dispatching on whether interferers are present.
pub fn zeta(params: &LinkBoundParams, slots: u64) -> Result<ChernoffBound> {
    if params.interferer_thetas.is_empty() {
        zeta0(params, slots)
    } else {
        zeta1(params, slots)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeOptions {
    pub points_per_decade: usize,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            points_per_decade: 16,
            t_lo: T_BRACKET_LO,
            t_hi: T_BRACKET_HI,
        }
    }
}

/// Lower envelope of the lines `T ↦ t_k·load + T·ln E[Z](t_k)` over a
/// fixed grid of `t_k`. Minimizing over a subset of `t` keeps every value
/// a valid (slightly looser) bound, and one envelope serves every `T` and
/// every interference offset.
#[derive(Debug, Clone)]
pub struct ChernoffEnvelope {
    theta: f64,
    load: f64,
    // (intercept, slope, t), slopes strictly decreasing
    lines: Vec<(f64, f64, f64)>,
}

impl ChernoffEnvelope {
    pub fn new(theta: f64, load: f64, opts: &EnvelopeOptions) -> Result<Self> {
        LinkBoundParams::interference_free(theta, load)?;
        if !(opts.t_lo > 0.0 && opts.t_lo < opts.t_hi) || opts.points_per_decade == 0 {
            return Err(Error::invalid("bad envelope grid"));
        }
        let decades = (opts.t_hi / opts.t_lo).log10();
        let n = (decades * opts.points_per_decade as f64).ceil() as usize + 1;
        let step = (opts.t_hi / opts.t_lo).ln() / (n - 1) as f64;
        let mut raw = Vec::with_capacity(n);
        for k in 0..n {
            let t = opts.t_lo * (step * k as f64).exp();
            if let Ok(h) = log_mean_z(theta, t) {
                if h.is_finite() {
                    raw.push((t * load, h, t));
                }
            }
        }
        if raw.is_empty() {
            return Err(Error::NonFiniteObjective {
                lo: opts.t_lo,
                hi: opts.t_hi,
            });
        }
        Ok(ChernoffEnvelope {
            theta,
            load,
            lines: lower_hull(raw),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn load(&self) -> f64 {
        self.load
    }

    fn best_line(&self, slots: f64, offset: f64) -> usize {
        // value(k) is unimodal along the hull for slots >= 0
        let value = |k: usize| self.lines[k].0 + slots * (self.lines[k].1 + offset);
        let (mut lo, mut hi) = (0, self.lines.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if value(mid + 1) < value(mid) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Natural log of the unclipped bound on `P[delay > slots]`.
    pub fn log_bound(&self, slots: u64, offset: f64) -> f64 {
        let tt = slots as f64;
        let k = self.best_line(tt, offset);
        self.lines[k].0 + tt * (self.lines[k].1 + offset)
    }

    pub fn bound(&self, slots: u64, offset: f64) -> f64 {
        self.log_bound(slots, offset).exp().min(1.0)
    }

    /// Upper bound on `Σ_{T >= from} min(1, bound(T))` using single lines
    /// of the envelope; `inf` when no line decays.
    pub fn tail_bound(&self, from: u64, offset: f64) -> f64 {
        let tt = from as f64;
        let candidates = [self.best_line(tt, offset), self.lines.len() - 1];
        candidates
            .iter()
            .map(|&k| {
                let (a, b, _) = self.lines[k];
                let m = b + offset;
                if m >= 0.0 {
                    f64::INFINITY
                } else {
                    (a + tt * m).exp() / -m.exp_m1()
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn lower_hull(mut raw: Vec<(f64, f64, f64)>) -> Vec<(f64, f64, f64)> {
    // min over lines a + T b for T >= 0: sort by slope descending, drop
    // lines that are never strictly minimal
    raw.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.total_cmp(&y.0)));
    let mut hull: Vec<(f64, f64, f64)> = Vec::with_capacity(raw.len());
    for line in raw {
        if let Some(last) = hull.last() {
            if last.1 == line.1 {
                continue; // same slope, larger intercept
            }
            if line.0 <= last.0 {
                // dominates everything before it for all T >= 0
                while hull.last().is_some_and(|l| line.0 <= l.0) {
                    hull.pop();
                }
            }
        }
        while hull.len() >= 2 {
            let (a1, b1, _) = hull[hull.len() - 2];
            let (a2, b2, _) = hull[hull.len() - 1];
            // middle line is useless if the outer two cross before it takes over
            let x12 = (a2 - a1) / (b1 - b2);
            let x13 = (line.0 - a1) / (b1 - line.1);
            if x13 <= x12 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(line);
    }
    hull
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBound {
    /// Upper bound on the expected delay, in slots.
    pub value: f64,
    /// Number of series terms summed explicitly.
    pub terms: u64,
    /// The explicit sum did not settle and an analytic tail bound was added.
    pub tail_bound_used: bool,
}

/// Expected delay bound `1 + Σ_{T>=1} min(1, ζ(T))`, i.e. the sum over
/// `n >= 1` of bounds on `P[delay >= n]`, evaluated through the envelope.
pub fn expected_delay_bound(params: &LinkBoundParams) -> Result<DelayBound> {
    params.validate()?;
    let env = ChernoffEnvelope::new(params.theta, params.load, &EnvelopeOptions::default())?;
    Ok(delay_from_envelope(
        &env,
        params.interference_offset(),
        &SeriesOptions::default(),
    ))
}

/// Same series with every term minimized exactly over `t`. Slow; used to
/// check the envelope.
pub fn expected_delay_bound_exact(params: &LinkBoundParams, opts: &SeriesOptions) -> Result<DelayBound> {
    params.validate()?;
    let offset = params.interference_offset();
    let mut failure = None;
    let r = truncated_series_sum(
        |n| {
            if n == 1 {
                return 1.0;
            }
            match chernoff(params.theta, params.load, offset, n - 1) {
                Ok(b) => b.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    1.0
                }
            }
        },
        opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let s = r?;
    Ok(DelayBound {
        value: s.value,
        terms: s.terms,
        tail_bound_used: false,
    })
}

pub fn delay_from_envelope(env: &ChernoffEnvelope, offset: f64, opts: &SeriesOptions) -> DelayBound {
    let term = |n: u64| {
        if n == 1 {
            1.0
        } else {
            env.bound(n - 1, offset)
        }
    };
    match truncated_series_sum(term, opts) {
        Ok(s) => DelayBound {
            value: s.value,
            terms: s.terms,
            tail_bound_used: false,
        },
        Err(Error::NonConvergence { partial, terms }) => DelayBound {
            // terms n > `terms` bound P[delay > n-1], i.e. T >= terms
            value: partial + env.tail_bound(terms, offset),
            terms,
            tail_bound_used: true,
        },
        Err(_) => DelayBound {
            value: f64::INFINITY,
            terms: 0,
            tail_bound_used: true,
        },
    }
}

/// Rounds to 12 significant digits; the key and the rounded value.
fn quantize(v: f64) -> (u64, f64) {
    if v == 0.0 || !v.is_finite() {
        return (v.to_bits(), v);
    }
    let e = v.abs().log10().floor() as i32 - 11;
    let scale = 10f64.powi(e.abs());
    let q = if e >= 0 {
        (v / scale).round() * scale
    } else {
        (v * scale).round() / scale
    };
    (q.to_bits(), q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    pub series: SeriesOptions,
    pub envelope: EnvelopeOptions,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            series: SeriesOptions::default(),
            envelope: EnvelopeOptions::default(),
        }
    }
}

/// Expected-delay bounds for every (transmitter node, receiving user,
/// optional interfering node) triple of an instance, computed on first
/// use and memoized by quantized link SNRs.
#[derive(Debug)]
pub struct DelayBoundTable {
    load: f64,
    num_nodes: usize,
    num_users: usize,
    user_offset: usize,
    opts: TableOptions,
    // θ[i][j] for dense node indices
    theta: Vec<f64>,
    entries: Vec<OnceLock<Result<DelayBound, String>>>,
    envelopes: Mutex<HashMap<u64, Arc<ChernoffEnvelope>>>,
    sums: Mutex<HashMap<(u64, u64), DelayBound>>,
}

impl DelayBoundTable {
    pub fn new(instance: &NetworkInstance) -> Result<Self> {
        Self::with_options(instance, TableOptions::default())
    }

    pub fn with_options(instance: &NetworkInstance, opts: TableOptions) -> Result<Self> {
        let n = instance.node_count();
        let mut theta = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    theta[i * n + j] = instance.theta_between(i, j)?;
                }
            }
        }
        let users = instance.num_ue;
        let mut entries = Vec::new();
        entries.resize_with(n * users * (n + 1), OnceLock::new);
        Ok(DelayBoundTable {
            load: instance.load(),
            num_nodes: n,
            num_users: users,
            user_offset: instance.ue_node(0),
            opts,
            theta,
            entries,
            envelopes: Mutex::new(HashMap::new()),
            sums: Mutex::new(HashMap::new()),
        })
    }

    pub fn load(&self) -> f64 {
        self.load
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn theta(&self, from: usize, to: usize) -> f64 {
        self.theta[from * self.num_nodes + to]
    }

    fn check(&self, tx: usize, user: usize, interferer: Option<usize>) -> Result<usize> {
        if tx >= self.num_nodes {
            return Err(Error::IndexOutOfRange {
                what: "transmitter",
                index: tx,
                len: self.num_nodes,
            });
        }
        if user >= self.num_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                len: self.num_users,
            });
        }
        let rx = self.user_offset + user;
        let missing = |reason: &str| Error::MissingBound {
            transmitter: tx,
            receiver: rx,
            interferer,
            reason: reason.to_string(),
        };
        if tx == rx {
            return Err(missing("a user does not transmit to itself"));
        }
        if let Some(y) = interferer {
            if y >= self.num_nodes {
                return Err(Error::IndexOutOfRange {
                    what: "interferer",
                    index: y,
                    len: self.num_nodes,
                });
            }
            if y == rx || y == tx {
                return Err(missing("interferer must differ from both link ends"));
            }
        }
        Ok(rx)
    }

    fn slot(&self, tx: usize, user: usize, interferer: Option<usize>) -> usize {
        let y = interferer.map_or(0, |y| y + 1);
        (tx * self.num_users + user) * (self.num_nodes + 1) + y
    }

    fn envelope(&self, theta: f64) -> Result<Arc<ChernoffEnvelope>> {
        let (key, q) = quantize(theta);
        if let Some(e) = self.envelopes.lock().unwrap().get(&key) {
            return Ok(e.clone());
        }
        let env = Arc::new(ChernoffEnvelope::new(q, self.load, &self.opts.envelope)?);
        self.envelopes.lock().unwrap().entry(key).or_insert(env.clone());
        Ok(env)
    }

    fn sum_for(&self, theta: f64, interferer_theta: Option<f64>) -> Result<DelayBound> {
        let (k1, q) = quantize(theta);
        let (k2, q2) = interferer_theta.map_or((u64::MAX, 0.0), quantize);
        if let Some(b) = self.sums.lock().unwrap().get(&(k1, k2)) {
            return Ok(*b);
        }
        let env = self.envelope(theta)?;
        let offset = interferer_theta.map_or(0.0, |_| interference_offset(q, &[q2]));
        let mut b = delay_from_envelope(&env, offset, &self.opts.series);
        if interferer_theta.is_some() {
            let free = self.sum_for(theta, None)?;
            if free.value > b.value {
                b = DelayBound { value: free.value, ..b };
            }
        }
        self.sums.lock().unwrap().insert((k1, k2), b);
        Ok(b)
    }

    /// Full record for the link `tx -> user` (user is a 0-based UE
    /// ordinal; `tx` and `interferer` are dense node indices).
    pub fn bound(&self, tx: usize, user: usize, interferer: Option<usize>) -> Result<DelayBound> {
        let rx = self.check(tx, user, interferer)?;
        let cell = &self.entries[self.slot(tx, user, interferer)];
        let r = cell.get_or_init(|| {
            let th = self.theta(tx, rx);
            let it = interferer.map(|y| self.theta(y, rx));
            self.sum_for(th, it).map_err(|e| e.to_string())
        });
        r.clone().map_err(|reason| Error::MissingBound {
            transmitter: tx,
            receiver: rx,
            interferer,
            reason,
        })
    }

    /// Expected-delay bound in slots.
    pub fn g(&self, tx: usize, user: usize, interferer: Option<usize>) -> Result<f64> {
        self.bound(tx, user, interferer).map(|b| b.value)
    }

    /// Fills every entry, in parallel.
    pub fn precompute_all(&self) -> Result<()> {
        let n = self.num_nodes;
        let keys: Vec<(usize, usize, Option<usize>)> = (0..n)
            .flat_map(|tx| (0..self.num_users).map(move |u| (tx, u)))
            .filter(|&(tx, u)| tx != self.user_offset + u)
            .flat_map(|(tx, u)| {
                let rx = self.user_offset + u;
                std::iter::once(None)
                    .chain((0..n).filter(move |&y| y != tx && y != rx).map(Some))
                    .map(move |y| (tx, u, y))
            })
            .collect();
        keys.par_iter()
            .try_for_each(|&(tx, u, y)| self.bound(tx, u, y).map(|_| ()))
    }

    /// `(T, min(1, ζ(T)))` for `T = 1..=max_slots`, from the envelope.
    pub fn zeta_curve(
        &self,
        tx: usize,
        user: usize,
        interferer: Option<usize>,
        max_slots: u64,
    ) -> Result<Vec<(u64, f64)>> {
        let rx = self.check(tx, user, interferer)?;
        let th = quantize(self.theta(tx, rx)).1;
        let env = self.envelope(th)?;
        let offset = interferer.map_or(0.0, |y| interference_offset(th, &[quantize(self.theta(y, rx)).1]));
        Ok((1..=max_slots).map(|t| (t, env.bound(t, offset))).collect())
    }
}

/// Writes `(T, zeta)` rows as CSV.
pub fn write_zeta_csv<W: Write>(out: W, curve: &[(u64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["T", "zeta"])?;
    for (t, z) in curve {
        w.write_record([t.to_string(), z.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

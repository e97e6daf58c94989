//! Slot-by-slot simulation of a block-faded link, used as ground truth for
//! the delay bounds.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::bounds::mean_z_closed_form;
use crate::error::{Error, Result};

const CHUNK: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub trials: usize,
    pub max_slots: u64,
    pub seed: u64,
    pub theta: f64,
    pub interferer_thetas: Vec<f64>,
    pub load: f64,
}

impl TrialConfig {
    pub fn new(theta: f64, interferer_thetas: Vec<f64>, load: f64, trials: usize, seed: u64) -> Self {
        TrialConfig {
            trials,
            max_slots: 100_000,
            seed,
            theta,
            interferer_thetas,
            load,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("at least one trial is required"));
        }
        if self.max_slots == 0 {
            return Err(Error::invalid("max_slots must be at least 1"));
        }
        crate::bounds::LinkBoundParams::new(self.theta, self.interferer_thetas.clone(), self.load).map(|_| ())
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// One draw of `SINR = θ·E / (1 + Σθ'·E')` with independent unit-mean
/// exponential powers.
fn draw_sinr<R: Rng>(rng: &mut R, theta: f64, interferers: &[f64]) -> f64 {
    let signal: f64 = rng.sample(Exp1);
    let mut noise = 1.0;
    for &it in interferers {
        let e: f64 = rng.sample(Exp1);
        noise += it * e;
    }
    theta * signal / noise
}

/// Empirical delay distribution. Censored trials did not finish within
/// `max_slots` and count as `max_slots + 1` in every statistic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayDistribution {
    /// `counts[T - 1]` trials finished in exactly `T` slots.
    pub counts: Vec<u64>,
    pub censored: u64,
    pub trials: u64,
    pub max_slots: u64,
}

impl DelayDistribution {
    pub fn mean(&self) -> f64 {
        let finished: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as f64 + 1.0) * c as f64)
            .sum();
        (finished + self.censored as f64 * (self.max_slots as f64 + 1.0)) / self.trials as f64
    }

    /// Empirical `P[delay > slots]`.
    pub fn exceedance(&self, slots: u64) -> f64 {
        let done: u64 = self.counts.iter().take(slots as usize).sum();
        (self.trials - done) as f64 / self.trials as f64
    }

    /// Binomial standard error of [`exceedance`](Self::exceedance).
    pub fn exceedance_std_error(&self, slots: u64) -> f64 {
        let p = self.exceedance(slots);
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn std_error_of_mean(&self) -> f64 {
        let m = self.mean();
        let cap = self.max_slots as f64 + 1.0;
        let mut ss: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * (i as f64 + 1.0 - m).powi(2))
            .sum();
        ss += self.censored as f64 * (cap - m).powi(2);
        let n = self.trials as f64;
        if n < 2.0 {
            return 0.0;
        }
        (ss / (n - 1.0) / n).sqrt()
    }
}

/// Simulates the rate-accumulation rule: the delay is the first `T >= 1`
/// with `Σ_{t<=T} log2(1 + SINR_t) >= load`.
pub fn sample_delay(config: &TrialConfig) -> Result<DelayDistribution> {
    config.validate()?;
    let chunks = config.trials.div_ceil(CHUNK);
    let partial: Vec<(Vec<u64>, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(config.seed, c);
            let n = CHUNK.min(config.trials - c * CHUNK);
            let mut counts = Vec::new();
            let mut censored = 0;
            for _ in 0..n {
                let mut acc = 0.0;
                let mut slot = 0;
                let finished = loop {
                    if slot == config.max_slots {
                        break None;
                    }
                    slot += 1;
                    acc +=
                        draw_sinr(&mut rng, config.theta, &config.interferer_thetas).ln_1p() / std::f64::consts::LN_2;
                    if acc >= config.load {
                        break Some(slot);
                    }
                };
                match finished {
                    Some(t) => {
                        let i = t as usize - 1;
                        if counts.len() <= i {
                            counts.resize(i + 1, 0);
                        }
                        counts[i] += 1;
                    }
                    None => censored += 1,
                }
            }
            (counts, censored)
        })
        .collect();
    let mut counts: Vec<u64> = Vec::new();
    let mut censored = 0;
    for (c, cen) in partial {
        if counts.len() < c.len() {
            counts.resize(c.len(), 0);
        }
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        censored += cen;
    }
    Ok(DelayDistribution {
        counts,
        censored,
        trials: config.trials as u64,
        max_slots: config.max_slots,
    })
}

/// Samples of `Z = exp(-t·log2(1 + SINR))`.
pub fn sample_z(config: &TrialConfig, t: f64) -> Result<Vec<f64>> {
    config.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("Chernoff parameter must be positive, got {t}")));
    }
    let chunks = config.trials.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(config.seed, c);
            let n = CHUNK.min(config.trials - c * CHUNK);
            (0..n)
                .map(|_| {
                    let sinr = draw_sinr(&mut rng, config.theta, &config.interferer_thetas);
                    (-t * sinr.ln_1p() / std::f64::consts::LN_2).exp()
                })
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

/// `v(z) - 1` where `v(z) = 2^(-ln z / t)`: the SINR threshold at which
/// `Z` equals `z`.
fn sinr_threshold(z: f64, t: f64) -> f64 {
    (-(std::f64::consts::LN_2 / t) * z.ln()).exp_m1()
}

/// CDF of `Z` on a link without interference.
pub fn z_cdf(z: f64, theta: f64, t: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    (-sinr_threshold(z, t) / theta).exp()
}

/// CDF of `Z` under independent exponential interferers.
pub fn z_cdf_interfered(z: f64, theta: f64, interferers: &[f64], t: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    let w = sinr_threshold(z, t);
    interferers
        .iter()
        .fold((-w / theta).exp(), |acc, &it| acc * theta / (theta + it * w))
}

/// Density of `Z` under the given interferers (empty slice for none).
pub fn z_pdf(z: f64, theta: f64, interferers: &[f64], t: f64) -> f64 {
    if !(z > 0.0 && z < 1.0) {
        return 0.0;
    }
    let k = std::f64::consts::LN_2 / t;
    let w = sinr_threshold(z, t);
    // dw/dz = -k·z^(-k-1)
    let dw_dz = -k * (-(k + 1.0) * z.ln()).exp();
    let dlog_dw = -1.0 / theta - interferers.iter().map(|&it| it / (theta + it * w)).sum::<f64>();
    z_cdf_interfered(z, theta, interferers, t) * dlog_dw * dw_dz
}

/// Kolmogorov distance between the empirical CDF of `samples` and `cdf`.
pub fn kolmogorov_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotDistributionReport {
    pub t: f64,
    /// Kolmogorov distance to the interference-free CDF.
    pub ks_interference_free: f64,
    pub sample_mean: f64,
    pub closed_form_mean: f64,
    pub mean_rel_error: f64,
    /// Kolmogorov distance to the interfered CDF; present when the
    /// configuration lists interferers.
    pub ks_interfered: Option<f64>,
    /// Largest ratio of the interfered density to
    /// `f(z)·(1 + Σθ')/θ^(|I|-1)` on the check grid; at most 1 when the
    /// domination holds.
    pub pdf_bound_worst_ratio: Option<f64>,
    pub pdf_bound_holds: Option<bool>,
    /// Same check against `f(z)·(1 + Σθ')`.
    pub pdf_bound_corrected_worst_ratio: Option<f64>,
}

/// Checks the per-slot distribution of `Z` and its moment against the
/// analytic forms at a fixed Chernoff parameter `t`.
pub fn validate_slot_distribution(config: &TrialConfig, t: f64) -> Result<SlotDistributionReport> {
    config.validate()?;
    let free_cfg = TrialConfig {
        interferer_thetas: Vec::new(),
        ..config.clone()
    };
    let free = sample_z(&free_cfg, t)?;
    let theta = config.theta;
    let ks_free = kolmogorov_distance(&free, |z| z_cdf(z, theta, t));
    let sample_mean = free.iter().sum::<f64>() / free.len() as f64;
    let closed = mean_z_closed_form(theta, t)?;

    let (ks_int, worst, holds, corrected) = if config.interferer_thetas.is_empty() {
        (None, None, None, None)
    } else {
        let its = &config.interferer_thetas;
        let hit_cfg = TrialConfig {
            seed: config.seed.wrapping_add(1),
            ..config.clone()
        };
        let hit = sample_z(&hit_cfg, t)?;
        let ks = kolmogorov_distance(&hit, |z| z_cdf_interfered(z, theta, its, t));
        let corrected_factor = 1.0 + its.iter().sum::<f64>();
        let factor = corrected_factor / theta.powi(its.len() as i32 - 1);
        let worst_ratio = |factor: f64| {
            (1..=99)
                .map(|k| {
                    let z = k as f64 / 100.0;
                    let bound = z_pdf(z, theta, &[], t) * factor;
                    let f0 = z_pdf(z, theta, its, t);
                    if bound > 0.0 {
                        f0 / bound
                    } else if f0 > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max)
        };
        let worst = worst_ratio(factor);
        (
            Some(ks),
            Some(worst),
            Some(worst <= 1.0 + 1e-12),
            Some(worst_ratio(corrected_factor)),
        )
    };
    Ok(SlotDistributionReport {
        t,
        ks_interference_free: ks_free,
        sample_mean,
        closed_form_mean: closed,
        mean_rel_error: (sample_mean - closed).abs() / closed,
        ks_interfered: ks_int,
        pdf_bound_worst_ratio: worst,
        pdf_bound_holds: holds,
        pdf_bound_corrected_worst_ratio: corrected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceedanceRow {
    pub slots: u64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
}

/// Writes `(T, empirical exceedance, standard error, bound)` rows as CSV.
pub fn write_exceedance_csv<W: Write>(out: W, rows: &[ExceedanceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["T", "empirical", "std_error", "bound"])?;
    for r in rows {
        w.write_record([
            r.slots.to_string(),
            r.empirical.to_string(),
            r.std_error.to_string(),
            r.bound.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huge_snr_finishes_in_one_slot() {
        let d = sample_delay(&TrialConfig::new(1e12, vec![], 0.01, 2000, 1)).unwrap();
        assert_eq!(d.counts, vec![2000]);
        assert_eq!(d.mean(), 1.0);
    }

    #[test]
    fn zero_load_takes_one_slot() {
        let d = sample_delay(&TrialConfig::new(1e-3, vec![], 0.0, 500, 3)).unwrap();
        assert_eq!(d.counts[0], 500);
    }

    #[test]
    fn censored_trials_count_beyond_horizon() {
        let mut cfg = TrialConfig::new(1e-6, vec![], 10.0, 100, 5);
        cfg.max_slots = 3;
        let d = sample_delay(&cfg).unwrap();
        assert_eq!(d.censored, 100);
        assert_eq!(d.mean(), 4.0);
        assert_eq!(d.exceedance(3), 1.0);
    }

    #[test]
    fn same_seed_same_distribution() {
        let cfg = TrialConfig::new(0.01, vec![0.005], 0.01, 25_000, 11);
        assert_eq!(sample_delay(&cfg).unwrap(), sample_delay(&cfg).unwrap());
    }

    #[test]
    fn pdf_matches_finite_difference_of_cdf() {
        let (theta, t) = (3.0, 0.7);
        for &z in &[0.1, 0.4, 0.8] {
            let h = 1e-6;
            let fd = (z_cdf_interfered(z + h, theta, &[0.5, 2.0], t) - z_cdf_interfered(z - h, theta, &[0.5, 2.0], t))
                / (2.0 * h);
            let an = z_pdf(z, theta, &[0.5, 2.0], t);
            assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "z={z}: {fd} vs {an}");
        }
    }

    #[test]
    fn kolmogorov_distance_of_exact_quantiles_is_small() {
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = kolmogorov_distance(&samples, |x| x);
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(sample_delay(&TrialConfig::new(1.0, vec![], 0.01, 0, 0)).is_err());
        assert!(sample_delay(&TrialConfig::new(-1.0, vec![], 0.01, 10, 0)).is_err());
    }
}

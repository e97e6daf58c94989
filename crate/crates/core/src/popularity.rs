//! Per-class Zipf popularity and probabilistic class membership.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const POPULARITY_STREAM: u64 = 1;

const STOCHASTIC_TOL: f64 = 1e-9;

/// Class-membership vectors of the three-class reference setup, selected by
/// `user_ordinal mod 3`.
pub const DEFAULT_CLASS_VECTORS: [[f64; 3]; 3] = [[0.3, 0.5, 0.2], [0.2, 0.3, 0.5], [0.5, 0.2, 0.3]];

/// Membership vector of the 1-based user `user_ordinal` in the three-class
/// preset. Other class counts need an explicit matrix.
pub fn default_class_probs(user_ordinal: usize, classes: usize) -> Result<[f64; 3]> {
    if classes != 3 {
        return Err(Error::invalid(format!(
            "the preset class vectors cover K = 3 only (got K = {classes}); supply an explicit matrix"
        )));
    }
    Ok(DEFAULT_CLASS_VECTORS[user_ordinal % 3])
}

/// Serializable part of the model; derived tables are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularitySpec {
    pub beta: f64,
    /// `ranks[k][f]`: 1-based rank of file `f` in class `k`.
    pub ranks: Vec<Vec<usize>>,
    /// `class_probs[u][k]`: probability that user `u` belongs to class `k`.
    pub class_probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PopularitySpec", into = "PopularitySpec")]
pub struct PopularityModel {
    spec: PopularitySpec,
    /// `class_pop[k][f]` = q_f^k.
    class_pop: Vec<Vec<f64>>,
    /// `user_pop[u][f]` = Q_{u,f}.
    user_pop: Vec<Vec<f64>>,
    /// Q_f = sum_u Q_{u,f}.
    file_metric: Vec<f64>,
}

impl TryFrom<PopularitySpec> for PopularityModel {
    type Error = Error;

    fn try_from(spec: PopularitySpec) -> Result<Self> {
        PopularityModel::new(spec.beta, spec.ranks, spec.class_probs)
    }
}

impl From<PopularityModel> for PopularitySpec {
    fn from(m: PopularityModel) -> Self {
        m.spec
    }
}

impl PopularityModel {
    pub fn new(beta: f64, ranks: Vec<Vec<usize>>, class_probs: Vec<Vec<f64>>) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("Zipf exponent must be >= 0, got {beta}")));
        }
        let k_count = ranks.len();
        if k_count == 0 {
            return Err(Error::invalid("at least one popularity class is required"));
        }
        let f_count = ranks[0].len();
        if f_count == 0 {
            return Err(Error::invalid("the library must hold at least one file"));
        }
        for (k, perm) in ranks.iter().enumerate() {
            if perm.len() != f_count {
                return Err(Error::DimensionMismatch(format!(
                    "class {k} ranks {} files, expected {f_count}",
                    perm.len()
                )));
            }
            let mut seen = vec![false; f_count];
            for &r in perm {
                if r == 0 || r > f_count || seen[r - 1] {
                    return Err(Error::invalid(format!(
                        "class {k} ranks are not a permutation of 1..{f_count}"
                    )));
                }
                seen[r - 1] = true;
            }
        }
        if class_probs.is_empty() {
            return Err(Error::invalid("at least one user is required"));
        }
        for (u, row) in class_probs.iter().enumerate() {
            if row.len() != k_count {
                return Err(Error::DimensionMismatch(format!(
                    "user {u} has {} class probabilities, expected {k_count}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid(format!(
                    "user {u} has a class probability outside [0, 1]"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!("user {u} class probabilities sum to {total}")));
            }
        }

        let class_pop: Vec<Vec<f64>> = ranks
            .iter()
            .map(|perm| {
                let weights: Vec<f64> = perm.iter().map(|&r| (r as f64).powf(-beta)).collect();
                let norm: f64 = weights.iter().sum();
                weights.into_iter().map(|w| w / norm).collect()
            })
            .collect();
        let user_pop: Vec<Vec<f64>> = class_probs
            .iter()
            .map(|row| {
                (0..f_count)
                    .map(|f| row.iter().zip(&class_pop).map(|(p, q)| p * q[f]).sum())
                    .collect()
            })
            .collect();
        let file_metric = (0..f_count).map(|f| user_pop.iter().map(|row| row[f]).sum()).collect();

        Ok(PopularityModel {
            spec: PopularitySpec {
                beta,
                ranks,
                class_probs,
            },
            class_pop,
            user_pop,
            file_metric,
        })
    }

    /// `classes` independent uniformly random rank permutations drawn from
    /// `seed`, or the identity ranking for every class when `identical` is set.
    pub fn random_ranks(seed: u64, files: usize, classes: usize, identical: bool) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(POPULARITY_STREAM);
        (0..classes)
            .map(|_| {
                let mut perm: Vec<usize> = (1..=files).collect();
                if !identical {
                    perm.shuffle(&mut rng);
                }
                perm
            })
            .collect()
    }

    /// Preset membership matrix for `users` users (user `u` is ordinal `u + 1`).
    pub fn default_membership(users: usize) -> Vec<Vec<f64>> {
        (0..users)
            .map(|u| DEFAULT_CLASS_VECTORS[(u + 1) % 3].to_vec())
            .collect()
    }

    /// Three classes with the preset membership vectors and seeded ranks.
    pub fn with_default_classes(seed: u64, users: usize, files: usize, beta: f64, identical: bool) -> Result<Self> {
        let ranks = Self::random_ranks(seed, files, 3, identical);
        Self::new(beta, ranks, Self::default_membership(users))
    }

    pub fn beta(&self) -> f64 {
        self.spec.beta
    }

    pub fn num_files(&self) -> usize {
        self.class_pop[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_pop.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_pop.len()
    }

    pub fn spec(&self) -> &PopularitySpec {
        &self.spec
    }

    pub fn rank(&self, f: usize, k: usize) -> usize {
        self.spec.ranks[k][f]
    }

    pub fn class_prob(&self, u: usize, k: usize) -> f64 {
        self.spec.class_probs[u][k]
    }

    /// q_f^k (0-based file and class).
    pub fn zipf_prob(&self, f: usize, k: usize) -> Result<f64> {
        check_index("file", f, self.num_files())?;
        check_index("class", k, self.num_classes())?;
        Ok(self.class_pop[k][f])
    }

    /// Q_{u,f} = sum_k p_u^k q_f^k (0-based user and file).
    pub fn averaged_popularity(&self, u: usize, f: usize) -> Result<f64> {
        check_index("user", u, self.num_users())?;
        check_index("file", f, self.num_files())?;
        Ok(self.user_pop[u][f])
    }

    /// Q_f = sum_u Q_{u,f}.
    pub fn file_metric(&self, f: usize) -> Result<f64> {
        check_index("file", f, self.num_files())?;
        Ok(self.file_metric[f])
    }

    /// Unchecked row of Q_{u,.}; hot loops use this.
    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user_pop[u]
    }

    pub fn file_metrics(&self) -> &[f64] {
        &self.file_metric
    }

    /// Files ordered by decreasing Q_f, ties broken by file index.
    pub fn ranked_files(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.num_files()).collect();
        order.sort_by(|&a, &b| self.file_metric[b].total_cmp(&self.file_metric[a]).then(a.cmp(&b)));
        order
    }
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, len })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(files: usize, classes: usize) -> Vec<Vec<usize>> {
        vec![(1..=files).collect(); classes]
    }

    #[test]
    fn uniform_when_beta_is_zero() {
        let m = PopularityModel::new(0.0, identity(7, 2), vec![vec![0.5, 0.5]]).unwrap();
        for f in 0..7 {
            assert!((m.zipf_prob(f, 1).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn three_file_closed_form() {
        let m = PopularityModel::new(2.0, identity(3, 1), vec![vec![1.0]]).unwrap();
        let expected = [36.0 / 49.0, 9.0 / 49.0, 4.0 / 49.0];
        for (f, e) in expected.iter().enumerate() {
            assert!((m.zipf_prob(f, 0).unwrap() - e).abs() < 1e-15);
        }
    }

    #[test]
    fn class_pmf_sums_to_one() {
        let m = PopularityModel::with_default_classes(5, 4, 100, 2.0, false).unwrap();
        for k in 0..3 {
            let s: f64 = (0..100).map(|f| m.zipf_prob(f, k).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_average_equals_class_pmf() {
        let ranks = PopularityModel::random_ranks(3, 9, 1, false);
        let m = PopularityModel::new(1.3, ranks, vec![vec![1.0]; 4]).unwrap();
        for u in 0..4 {
            for f in 0..9 {
                assert_eq!(m.averaged_popularity(u, f).unwrap(), m.zipf_prob(f, 0).unwrap());
            }
        }
    }

    #[test]
    fn identical_ranks_make_membership_irrelevant() {
        let m = PopularityModel::new(2.0, identity(6, 3), vec![vec![0.3, 0.5, 0.2]]).unwrap();
        for f in 0..6 {
            let q = m.zipf_prob(f, 0).unwrap();
            assert!((m.averaged_popularity(0, f).unwrap() - q).abs() < 1e-15);
        }
    }

    #[test]
    fn default_rows_are_stochastic() {
        let m = PopularityModel::with_default_classes(11, 7, 10, 2.0, false).unwrap();
        for u in 0..7 {
            let s: f64 = m.user_row(u).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let total: f64 = m.file_metrics().iter().sum();
        assert!((total - 7.0).abs() < 1e-9);
    }

    #[test]
    fn preset_class_vectors() {
        assert_eq!(default_class_probs(3, 3).unwrap(), [0.3, 0.5, 0.2]);
        assert_eq!(default_class_probs(4, 3).unwrap(), [0.2, 0.3, 0.5]);
        assert_eq!(default_class_probs(5, 3).unwrap(), [0.5, 0.2, 0.3]);
        assert!(default_class_probs(1, 4).is_err());
        for u in 0..6 {
            let s: f64 = default_class_probs(u, 3).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
        let rows = PopularityModel::default_membership(3);
        assert_eq!(rows[2], vec![0.3, 0.5, 0.2]);
    }

    #[test]
    fn single_user_metric_is_its_row() {
        let m = PopularityModel::with_default_classes(2, 1, 5, 2.0, false).unwrap();
        for f in 0..5 {
            assert_eq!(m.file_metric(f).unwrap(), m.averaged_popularity(0, f).unwrap());
        }
    }

    #[test]
    fn identical_users_rank_like_averaged_q() {
        let ranks = PopularityModel::random_ranks(8, 12, 3, false);
        let m = PopularityModel::new(2.0, ranks, vec![vec![0.2, 0.3, 0.5]; 5]).unwrap();
        let by_metric = m.ranked_files();
        let mut by_q: Vec<usize> = (0..12).collect();
        by_q.sort_by(|&a, &b| m.user_row(0)[b].total_cmp(&m.user_row(0)[a]).then(a.cmp(&b)));
        assert_eq!(by_metric, by_q);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(PopularityModel::new(-1.0, identity(3, 1), vec![vec![1.0]]).is_err());
        assert!(PopularityModel::new(1.0, vec![vec![1, 1, 2]], vec![vec![1.0]]).is_err());
        assert!(PopularityModel::new(1.0, identity(3, 2), vec![vec![0.5, 0.6]]).is_err());
        assert!(PopularityModel::new(1.0, identity(3, 2), vec![vec![1.0]]).is_err());
        let m = PopularityModel::new(1.0, identity(3, 1), vec![vec![1.0]]).unwrap();
        assert!(m.zipf_prob(3, 0).is_err());
        assert!(m.zipf_prob(0, 1).is_err());
        assert!(m.averaged_popularity(1, 0).is_err());
    }

    #[test]
    fn serde_round_trip_rebuilds_tables() {
        let m = PopularityModel::with_default_classes(4, 3, 8, 1.5, false).unwrap();
        let text = toml::to_string(&m).unwrap();
        let back: PopularityModel = toml::from_str(&text).unwrap();
        assert_eq!(m, back);
    }
}

//! Exhaustive search over channel partitions and single-copy placements,
//! with the delivery matrix implied by the delay threshold.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::DelayBoundTable;
use crate::delivery::{
    evaluate_deliveries, successful_delivery_rate, Assignment, DeliveryEvaluation, FastEvaluator, Violation,
};
use crate::error::{Error, Result};
use crate::popularity::PopularityModel;
use crate::topology::NetworkInstance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveLimits {
    pub max_states: f64,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits { max_states: 1e8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub assignment: Assignment,
    pub evaluation: DeliveryEvaluation,
    pub sdr: f64,
    pub states_explored: u64,
    pub elapsed_s: f64,
}

/// Channel labelings as restricted growth strings: user 0 on channel 0,
/// each next user on a used channel or the next new one, at most
/// `channels` channels and `limit` users per channel.
pub fn channel_partitions(users: usize, channels: usize, limit: usize) -> Vec<Vec<usize>> {
    fn rec(
        label: &mut Vec<usize>,
        counts: &mut Vec<usize>,
        users: usize,
        channels: usize,
        limit: usize,
        out: &mut Vec<Vec<usize>>,
    ) {
        if label.len() == users {
            out.push(label.clone());
            return;
        }
        let open = counts.len();
        for c in 0..=open.min(channels.saturating_sub(1)) {
            if c == open {
                counts.push(0);
            }
            if counts[c] < limit {
                counts[c] += 1;
                label.push(c);
                rec(label, counts, users, channels, limit, out);
                label.pop();
                counts[c] -= 1;
            }
            if c == open {
                counts.pop();
            }
        }
    }
    let mut out = Vec::new();
    if users == 0 {
        return out;
    }
    rec(
        &mut Vec::with_capacity(users),
        &mut Vec::new(),
        users,
        channels,
        limit,
        &mut out,
    );
    out
}

/// Upper estimate of the states the search visits.
pub fn search_space_estimate(instance: &NetworkInstance) -> f64 {
    let partitions = channel_partitions(instance.num_ue, instance.num_channels(), instance.reuse_limit()).len() as f64;
    partitions * ((instance.node_count() + 1) as f64).powi(instance.num_files() as i32)
}

fn leaf_sdr(
    eval: &FastEvaluator,
    users: usize,
    files: usize,
    threshold: f64,
    popularity: &PopularityModel,
) -> Result<f64> {
    let mut s = 0.0;
    for u in 0..users {
        let row = popularity.user_row(u);
        for f in 0..files {
            if eval.g(u, f)? <= threshold {
                s += row[f];
            }
        }
    }
    Ok((s / users as f64).min(1.0))
}

struct Search<'e, 'a> {
    eval: FastEvaluator<'a>,
    instance: &'e NetworkInstance,
    popularity: &'a PopularityModel,
    residual: Vec<usize>,
    best: Option<(f64, Vec<Option<usize>>)>,
    states: u64,
}

impl Search<'_, '_> {
    fn run(&mut self, f: usize) -> Result<()> {
        let files = self.instance.num_files();
        if f == files {
            self.states += 1;
            let sdr = leaf_sdr(
                &self.eval,
                self.instance.num_ue,
                files,
                self.instance.params.delay_threshold,
                self.popularity,
            )?;
            if self.best.as_ref().is_none_or(|(b, _)| sdr > *b) {
                self.best = Some((sdr, self.eval.holders().to_vec()));
            }
            return Ok(());
        }
        self.eval.set_holder(f, None);
        self.run(f + 1)?;
        for i in 0..self.instance.node_count() {
            if self.residual[i] == 0 {
                continue;
            }
            self.residual[i] -= 1;
            self.eval.set_holder(f, Some(i));
            self.run(f + 1)?;
            self.eval.set_holder(f, None);
            self.residual[i] += 1;
        }
        Ok(())
    }
}

/// Globally optimal assignment by enumeration. Ties keep the first optimum
/// in enumeration order (channel labelings, then per file: absent, node 0,
/// node 1, ...).
pub fn solve_exhaustive(
    instance: &NetworkInstance,
    popularity: &PopularityModel,
    table: &DelayBoundTable,
    limits: &SolveLimits,
) -> Result<SolveResult> {
    let start = Instant::now();
    let estimate = search_space_estimate(instance);
    if estimate > limits.max_states {
        return Err(Error::SearchSpaceTooLarge {
            estimate,
            limit: limits.max_states,
        });
    }
    let partitions = channel_partitions(instance.num_ue, instance.num_channels(), instance.reuse_limit());
    if partitions.is_empty() {
        return Err(Error::Infeasible(format!(
            "{} users cannot share {} channels with at most {} per channel",
            instance.num_ue,
            instance.num_channels(),
            instance.reuse_limit()
        )));
    }
    let residual: Vec<usize> = (0..instance.node_count()).map(|i| instance.cache_slots(i)).collect();
    let per_partition: Vec<Result<(f64, Vec<Option<usize>>, u64)>> = partitions
        .par_iter()
        .map(|labels| {
            let holder = vec![None; instance.num_files()];
            let eval = FastEvaluator::new(instance, table, popularity, &holder, labels)?;
            let mut s = Search {
                eval,
                instance,
                popularity,
                residual: residual.clone(),
                best: None,
                states: 0,
            };
            s.run(0)?;
            let (sdr, holder) = s.best.expect("the empty placement is always visited");
            Ok((sdr, holder, s.states))
        })
        .collect();

    let mut best: Option<(f64, usize, Vec<Option<usize>>)> = None;
    let mut states = 0;
    for (k, r) in per_partition.into_iter().enumerate() {
        let (sdr, holder, n) = r?;
        states += n;
        if best.as_ref().is_none_or(|(b, _, _)| sdr > *b) {
            best = Some((sdr, k, holder));
        }
    }
    let (_, k, holder) = best.expect("at least one partition");
    let mut assignment = Assignment::from_parts(instance, &holder, &partitions[k])?;
    let evaluation = evaluate_deliveries(instance, &assignment, popularity, table)?;
    assignment.delivery = evaluation.delivery.clone();
    Ok(SolveResult {
        sdr: evaluation.sdr,
        assignment,
        evaluation,
        states_explored: states,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    /// Objective of the delivery matrix as given.
    pub objective: f64,
    /// Objective with deliveries implied by the delay threshold.
    pub implied_objective: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every violated constraint of `assignment` and recomputes the
/// objective.
pub fn check_solution(
    instance: &NetworkInstance,
    popularity: &PopularityModel,
    table: &DelayBoundTable,
    assignment: &Assignment,
) -> Result<FeasibilityReport> {
    let mut violations = assignment.structural_violations(instance)?;
    let evaluation = evaluate_deliveries(instance, assignment, popularity, table)?;
    let threshold = instance.params.delay_threshold;
    for u in 0..instance.num_ue {
        for f in 0..instance.num_files() {
            let g = evaluation.bound(u, f);
            if assignment.delivery.is_set(u, f) && !(g <= threshold) {
                violations.push(Violation::DelayThreshold {
                    user: u,
                    file: f,
                    bound: g,
                    threshold,
                });
            }
        }
    }
    Ok(FeasibilityReport {
        violations,
        objective: successful_delivery_rate(popularity, &assignment.delivery),
        implied_objective: evaluation.sdr,
    })
}

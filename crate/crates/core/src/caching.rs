//! Greedy file placement: files in decreasing aggregate popularity, each
//! cached at the node that serves the most popularity mass within the
//! delay threshold.

use serde::{Deserialize, Serialize};

use crate::bounds::DelayBoundTable;
use crate::delivery::{BinaryMatrix, FastEvaluator};
use crate::error::{Error, Result};
use crate::popularity::PopularityModel;
use crate::topology::{NetworkInstance, NodeKind};

/// One file's placement decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementStep {
    pub file: usize,
    pub node: Option<usize>,
    /// `O_f` at the chosen node.
    pub score: f64,
    /// No candidate served anyone; the file went to the roomiest node.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub holder: Vec<Option<usize>>,
    pub caching: BinaryMatrix,
    pub trace: Vec<PlacementStep>,
}

/// Residual capacities and running caching decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementState {
    pub residual: Vec<usize>,
    pub holder: Vec<Option<usize>>,
    pub order: Vec<usize>,
}

fn kind_rank(kind: NodeKind) -> u8 {
    match kind {
        NodeKind::Ue => 2,
        NodeKind::Sbs => 1,
        NodeKind::Mbs => 0,
    }
}

/// Candidate `a` beats the incumbent `b` at equal score: UE over SBS over
/// MBS, then lower index.
fn preferred(instance: &NetworkInstance, a: usize, b: usize) -> bool {
    let (ka, kb) = (kind_rank(instance.kind(a)), kind_rank(instance.kind(b)));
    ka > kb || (ka == kb && a < b)
}

fn place(
    instance: &NetworkInstance,
    popularity: &PopularityModel,
    channel_of: &[usize],
    table: &DelayBoundTable,
    allow: impl Fn(usize) -> bool,
) -> Result<Placement> {
    let n = instance.node_count();
    let files = instance.num_files();
    if popularity.num_files() != files || popularity.num_users() != instance.num_ue {
        return Err(Error::DimensionMismatch(
            "popularity model does not match the instance".into(),
        ));
    }
    let mut state = PlacementState {
        residual: (0..n)
            .map(|i| if allow(i) { instance.cache_slots(i) } else { 0 })
            .collect(),
        holder: vec![None; files],
        order: popularity.ranked_files(),
    };
    let mut eval = FastEvaluator::new(instance, table, popularity, &state.holder, channel_of)?;
    let users = instance.num_ue as f64;
    let threshold = instance.params.delay_threshold;
    let mut trace = Vec::with_capacity(files);

    for &f in &state.order {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if state.residual[i] == 0 {
                continue;
            }
            eval.set_holder(f, Some(i));
            let score = eval.file_score(f, threshold)? / users;
            let better = match best {
                None => true,
                Some((b, s)) => score > s || (score == s && preferred(instance, i, b)),
            };
            if better {
                best = Some((i, score));
            }
        }
        let step = match best {
            None => {
                eval.set_holder(f, None);
                PlacementStep {
                    file: f,
                    node: None,
                    score: 0.0,
                    fallback: false,
                }
            }
            Some((i, score)) if score > 0.0 => {
                eval.set_holder(f, Some(i));
                state.residual[i] -= 1;
                state.holder[f] = Some(i);
                PlacementStep {
                    file: f,
                    node: Some(i),
                    score,
                    fallback: false,
                }
            }
            Some(_) => {
                let mut pick = None;
                for i in 0..n {
                    if state.residual[i] == 0 {
                        continue;
                    }
                    pick = match pick {
                        None => Some(i),
                        Some(b)
                            if state.residual[i] > state.residual[b]
                                || (state.residual[i] == state.residual[b] && preferred(instance, i, b)) =>
                        {
                            Some(i)
                        }
                        keep => keep,
                    };
                }
                let i = pick.expect("a candidate with room exists");
                eval.set_holder(f, Some(i));
                state.residual[i] -= 1;
                state.holder[f] = Some(i);
                PlacementStep {
                    file: f,
                    node: Some(i),
                    score: 0.0,
                    fallback: true,
                }
            }
        };
        trace.push(step);
    }

    let mut caching = BinaryMatrix::zeros(n, files);
    for (f, h) in state.holder.iter().enumerate() {
        if let Some(i) = h {
            caching.set(*i, f, true);
        }
    }
    Ok(Placement {
        holder: state.holder,
        caching,
        trace,
    })
}

/// Places every file greedily over all nodes for a fixed channel
/// allocation `channel_of[u]`.
pub fn place_all(
    instance: &NetworkInstance,
    popularity: &PopularityModel,
    channel_of: &[usize],
    table: &DelayBoundTable,
) -> Result<Placement> {
    place(instance, popularity, channel_of, table, |_| true)
}

/// The same greedy placement with UE caches disabled.
pub fn baseline_no_d2d(
    instance: &NetworkInstance,
    popularity: &PopularityModel,
    channel_of: &[usize],
    table: &DelayBoundTable,
) -> Result<Placement> {
    place(instance, popularity, channel_of, table, |i| {
        instance.kind(i) != NodeKind::Ue
    })
}

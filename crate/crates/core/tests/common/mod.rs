use d2dcache::delivery::Assignment;
use d2dcache::topology::NetworkInstance;
use rand::seq::SliceRandom;
use rand::Rng;

/// Uniform choice per file among "absent" and the nodes with room left,
/// and a random channel with room left per user in shuffled order.
pub fn random_feasible<R: Rng>(inst: &NetworkInstance, rng: &mut R) -> Assignment {
    let mut residual: Vec<usize> = (0..inst.node_count()).map(|i| inst.cache_slots(i)).collect();
    let holder: Vec<Option<usize>> = (0..inst.num_files())
        .map(|_| {
            let mut options: Vec<Option<usize>> = vec![None];
            options.extend((0..inst.node_count()).filter(|&i| residual[i] > 0).map(Some));
            let pick = options[rng.random_range(0..options.len())];
            if let Some(i) = pick {
                residual[i] -= 1;
            }
            pick
        })
        .collect();
    let mut load = vec![0; inst.num_channels()];
    let mut users: Vec<usize> = (0..inst.num_ue).collect();
    users.shuffle(rng);
    let mut channel_of = vec![0; inst.num_ue];
    for u in users {
        let open: Vec<usize> = (0..inst.num_channels())
            .filter(|&w| load[w] < inst.reuse_limit())
            .collect();
        let w = open[rng.random_range(0..open.len())];
        load[w] += 1;
        channel_of[u] = w;
    }
    Assignment::from_parts(inst, &holder, &channel_of).unwrap()
}

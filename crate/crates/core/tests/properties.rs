mod common;

use d2dcache::allocation::{allocate_channels, group_sizes, polygon_perimeter};
use d2dcache::bounds::{expected_delay_bound, zeta, zeta0, zeta1, DelayBoundTable, LinkBoundParams};
use d2dcache::caching::place_all;
use d2dcache::delivery::{
    delivery_bound, delivery_bound_linearized, evaluate_deliveries, transmitter_probs, Assignment,
};
use d2dcache::exact::{solve_exhaustive, SolveLimits};
use d2dcache::experiments::{run_method, run_sweep, write_sweep_csv, ExperimentSweep, Method, ScenarioConfig};
use d2dcache::montecarlo::{sample_delay, TrialConfig};
use d2dcache::popularity::PopularityModel;
use d2dcache::special::{minimize_over_t, upper_incomplete_gamma, Bracket, MinimizerOptions};
use d2dcache::topology::{link_theta, NetworkInstance, NetworkParams, Point};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_config(users: usize, files: usize, channels: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig {
        num_ue: users,
        num_sbs: 1,
        ..ScenarioConfig::default()
    };
    c.network.file_count = files;
    c.network.num_channels = channels;
    c.network.mbs_cache_bits = 200.0;
    c.network.sbs_cache_bits = 100.0;
    c.network.cell_radius = 60.0;
    c.network.sbs_radius = 40.0;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_nodes_stay_inside_their_disks(seed in any::<u64>(), ues in 1usize..30, sbs in 0usize..6, r in 20.0f64..500.0) {
        let params = NetworkParams { cell_radius: r, sbs_radius: r * 0.7, ..NetworkParams::default() };
        let inst = NetworkInstance::generate(seed, ues, sbs, &params).unwrap();
        for s in 0..sbs {
            prop_assert!(inst.positions[inst.sbs_node(s)].norm() <= params.sbs_radius);
        }
        for u in 0..ues {
            prop_assert!(inst.positions[inst.ue_node(u)].norm() <= params.cell_radius);
        }
        prop_assert_eq!(inst, NetworkInstance::generate(seed, ues, sbs, &params).unwrap());
    }

    #[test]
    fn theta_scales_with_power_and_noise(p in 1e-3f64..10.0, n in 1e-4f64..1.0, d in 1.0f64..300.0, alpha in 2.0f64..5.0, k in -8i32..8) {
        let s = 2f64.powi(k);
        let base = link_theta(p, n, d, 1.0, alpha);
        prop_assert_eq!(link_theta(p * s, n, d, 1.0, alpha), base * s);
        prop_assert_eq!(link_theta(p, n * s, d, 1.0, alpha), base / s);
    }

    #[test]
    fn popularity_rows_are_stochastic(seed in any::<u64>(), users in 1usize..12, files in 1usize..60, beta in 0.0f64..3.0) {
        let pop = PopularityModel::with_default_classes(seed, users, files, beta, false).unwrap();
        for u in 0..users {
            prop_assert!((pop.user_row(u).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        for k in 0..pop.num_classes() {
            let s: f64 = (0..files).map(|f| pop.zipf_prob(f, k).unwrap()).sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn steeper_skew_favours_the_top_file(seed in any::<u64>(), files in 2usize..60, b1 in 0.0f64..3.0, db in 0.0f64..2.0) {
        let lo = PopularityModel::with_default_classes(seed, 3, files, b1, false).unwrap();
        let hi = PopularityModel::with_default_classes(seed, 3, files, b1 + db, false).unwrap();
        for k in 0..3 {
            let top = (0..files).find(|&f| lo.rank(f, k) == 1).unwrap();
            prop_assert!(hi.zipf_prob(top, k).unwrap() >= lo.zipf_prob(top, k).unwrap());
        }
    }

    #[test]
    fn upper_gamma_decreases_in_x(a in -3.0f64..3.0, x in 0.01f64..20.0, dx in 0.01f64..5.0) {
        prop_assert!(upper_incomplete_gamma(a, x + dx).unwrap() < upper_incomplete_gamma(a, x).unwrap());
    }

    #[test]
    fn upper_gamma_of_unit_order_is_exponential(x in 0.0f64..30.0) {
        let x = x + 1e-9;
        prop_assert!((upper_incomplete_gamma(1.0, x).unwrap() - (-x).exp()).abs() <= 1e-10);
    }

    #[test]
    fn upper_gamma_matches_the_regularized_oracle(a in 0.05f64..6.0, x in 0.01f64..40.0) {
        let want = statrs::function::gamma::gamma_ur(a, x) * statrs::function::gamma::gamma(a);
        let got = upper_incomplete_gamma(a, x).unwrap();
        prop_assert!((got - want).abs() <= 1e-8 * want.abs() + 1e-300, "a={} x={}: {} vs {}", a, x, got, want);
    }

    #[test]
    fn minimizer_never_exceeds_a_sample(c in 0.1f64..5.0, a in 0.5f64..3.0, w in 0.0f64..2.0, probes in prop::collection::vec(0.0f64..1.0, 20)) {
        let f = |t: f64| a * (t - c).powi(2) + w * (3.0 * t).sin();
        let (lo, hi) = (1e-6, 10.0);
        let r = minimize_over_t(f, Bracket::linear(lo, hi), &MinimizerOptions::default()).unwrap();
        for p in probes {
            let t = lo + (hi - lo) * p;
            if t > lo && t < hi {
                prop_assert!(r.value <= f(t) + 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn zeta_is_clipped_and_monotone(theta in 0.5f64..1e4, f in 1.0f64..10.0, it in 0.1f64..100.0, df in 1.0f64..10.0, slots in 1u64..40) {
        let load = 0.01;
        let base = LinkBoundParams::interference_free(theta, load).unwrap();
        let stronger = LinkBoundParams::interference_free(theta * f, load).unwrap();
        let z0 = zeta0(&base, slots).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&z0));
        prop_assert!(zeta0(&stronger, slots).unwrap().value <= z0);
        prop_assert!(zeta0(&base, slots + 1).unwrap().value <= z0);

        let p = LinkBoundParams::new(theta, vec![it], load).unwrap();
        let z1 = zeta1(&p, slots).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&z1));
        prop_assert!(zeta1(&LinkBoundParams::new(theta * f, vec![it], load).unwrap(), slots).unwrap().value <= z1);
        prop_assert!(zeta1(&p, slots + 1).unwrap().value <= z1);
        prop_assert!(zeta1(&LinkBoundParams::new(theta, vec![it * df], load).unwrap(), slots).unwrap().value >= z1);
    }

    #[test]
    fn empirical_delay_respects_the_bounds(theta in 1.0f64..200.0, it in prop::option::of(0.5f64..20.0), seed in any::<u64>()) {
        let load = 0.01;
        let its: Vec<f64> = it.into_iter().collect();
        let config = TrialConfig::new(theta, its.clone(), load, 4000, seed);
        let dist = sample_delay(&config).unwrap();
        let params = LinkBoundParams::new(theta, its, load).unwrap();
        for slots in 1..=8 {
            let bound = zeta(&params, slots).unwrap().value;
            prop_assert!(dist.exceedance(slots) <= bound + 3.0 * dist.exceedance_std_error(slots));
        }
        let g = expected_delay_bound(&params).unwrap().value;
        prop_assert!(dist.mean() <= g + 3.0 * dist.std_error_of_mean() + 1e-6);
        prop_assert_eq!(dist, sample_delay(&config).unwrap());
    }

    #[test]
    fn allocation_is_a_balanced_partition_with_the_best_score(seed in any::<u64>(), users in 2usize..12, channels in 1usize..5) {
        let params = NetworkParams { num_channels: channels, ..NetworkParams::default() };
        let inst = NetworkInstance::generate(seed, users, 1, &params).unwrap();
        let alloc = allocate_channels(&inst).unwrap();
        let mut seen = vec![0; users];
        for g in &alloc.partition.groups {
            for &u in g {
                seen[u] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        for u in 0..users {
            prop_assert_eq!(alloc.channels.row_sum(u), 1);
            prop_assert!(alloc.partition.groups[alloc.channel_of[u]].contains(&u));
        }
        if channels < users {
            let mut sizes: Vec<usize> = alloc.partition.groups.iter().map(Vec::len).collect();
            let mut want = group_sizes(users, channels);
            sizes.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(sizes, want);
            if alloc.exhaustive {
                let pts: Vec<Point> = (0..users).map(|u| inst.positions[inst.ue_node(u)]).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..50 {
                    let mut order: Vec<usize> = (0..users).collect();
                    order.shuffle(&mut rng);
                    let mut start = 0;
                    let per: Vec<f64> = group_sizes(users, channels)
                        .into_iter()
                        .map(|n| {
                            let g: Vec<Point> = order[start..start + n].iter().map(|&u| pts[u]).collect();
                            start += n;
                            polygon_perimeter(&g)
                        })
                        .collect();
                    let mean = per.iter().sum::<f64>() / per.len() as f64;
                    let var = per.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / per.len() as f64;
                    let nu = mean / (var + 1e-9);
                    prop_assert!(alloc.partition.nu >= nu * (1.0 - 1e-9));
                }
            }
        }
        prop_assert_eq!(&alloc, &allocate_channels(&inst).unwrap());
    }

    #[test]
    fn delivery_bound_structure(seed in any::<u64>(), draw in any::<u64>()) {
        let sc = tiny_config(4, 5, 2).build(seed).unwrap();
        let inst = &sc.instance;
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let a = common::random_feasible(inst, &mut rng);
        for u in 0..inst.num_ue {
            for f in 0..inst.num_files() {
                let g = delivery_bound(inst, &a, &sc.popularity, &sc.table, u, f).unwrap();
                prop_assert!(g >= 0.0);
                if a.caching.is_set(inst.ue_node(u), f) {
                    prop_assert_eq!(g, 0.0);
                }
                prop_assert_eq!(g.to_bits(), delivery_bound_linearized(inst, &a, &sc.popularity, &sc.table, u, f).unwrap().to_bits());
                let tp = transmitter_probs(&a.caching, inst.ue_node(u), f);
                prop_assert!((tp.none + tp.by_node.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn heuristic_placement_is_feasible(seed in any::<u64>(), users in 2usize..8, files in 1usize..25, dth in 0.0f64..200.0) {
        let mut cfg = tiny_config(users, files, 2);
        cfg.network.delay_threshold = dth;
        let sc = cfg.build(seed).unwrap();
        let inst = &sc.instance;
        let alloc = allocate_channels(inst).unwrap();
        let placement = place_all(inst, &sc.popularity, &alloc.channel_of, &sc.table).unwrap();
        for i in 0..inst.node_count() {
            prop_assert!(placement.caching.row_sum(i) <= inst.cache_slots(i));
        }
        for f in 0..files {
            prop_assert!(placement.caching.col_sum(f) <= 1);
        }
        let a = Assignment::from_parts(inst, &placement.holder, &alloc.channel_of).unwrap();
        let eval = evaluate_deliveries(inst, &a, &sc.popularity, &sc.table).unwrap();
        prop_assert!((0.0..=1.0).contains(&eval.sdr));
        let all_met = (0..users).all(|u| (0..files).all(|f| eval.bound(u, f) <= dth));
        if all_met {
            prop_assert!((eval.sdr - 1.0).abs() <= 1e-9);
        } else {
            prop_assert!(eval.sdr < 1.0 - 1e-12);
        }
        for u in 0..users {
            for f in 0..files {
                prop_assert_eq!(eval.delivery.is_set(u, f), eval.bound(u, f) <= dth);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn exhaustive_optimum_dominates(seed in any::<u64>(), draw in any::<u64>(), dth in 1.0f64..40.0) {
        let mut cfg = tiny_config(3, 4, 2);
        cfg.network.delay_threshold = dth;
        let sc = cfg.build(seed).unwrap();
        let inst = &sc.instance;
        let best = solve_exhaustive(inst, &sc.popularity, &sc.table, &SolveLimits::default()).unwrap();
        for u in 0..inst.num_ue {
            for f in 0..inst.num_files() {
                prop_assert_eq!(best.assignment.delivery.is_set(u, f), best.evaluation.bound(u, f) <= dth);
            }
        }
        let heuristic = run_method(&sc, Method::Heuristic, &SolveLimits::default()).unwrap();
        prop_assert!(heuristic.sdr <= best.sdr);
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        for _ in 0..200 {
            let a = common::random_feasible(inst, &mut rng);
            prop_assert!(evaluate_deliveries(inst, &a, &sc.popularity, &sc.table).unwrap().sdr <= best.sdr);
        }
    }

    #[test]
    fn sweep_csv_is_reproducible(seed in 0u64..1000) {
        let cfg = tiny_config(4, 8, 2);
        let sweep = ExperimentSweep::new(cfg, "D_th", vec![2.0, 20.0], vec![seed, seed + 1], vec![Method::Heuristic, Method::NoD2d]);
        let render = || {
            let mut result = run_sweep(&sweep).unwrap();
            for row in &mut result.rows {
                prop_assert!(row.sdr.is_none_or(|s| (0.0..=1.0).contains(&s)));
                row.runtime_s = row.runtime_s.map(|_| 0.0);
            }
            let mut out = Vec::new();
            write_sweep_csv(&mut out, &result).unwrap();
            Ok(String::from_utf8(out).unwrap())
        };
        let first = render()?;
        prop_assert!(first.lines().any(|l| l.starts_with("kind,param,value,seed,method,sdr,mean_g,runtime_s,error")));
        prop_assert_eq!(first, render()?);
    }
}

#[test]
fn delay_table_is_shared_across_equal_links() {
    let inst = NetworkInstance::from_positions(
        NetworkParams::default(),
        &[],
        &[Point::new(30.0, 0.0), Point::new(0.0, 30.0)],
    )
    .unwrap();
    let table = DelayBoundTable::new(&inst).unwrap();
    assert_eq!(table.g(0, 0, None).unwrap(), table.g(0, 1, None).unwrap());
}

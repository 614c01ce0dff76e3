use edgecdn::agent::{Experience, ReplayBuffer};
use edgecdn::baselines::{baseline_decide, DecisionContext, Destination, RecencyTracker, Strategy};
use edgecdn::cache_net::{dominates, dominating_set, transferable_bytes, ContactGraph, Link, PlacementState};
use edgecdn::cost::{zipf_request_rate, DemandModel, ZipfNormalization};
use edgecdn::harness::ScenarioSpec;
use edgecdn::mdp::{decode_state, encode_state, AtomicAction, Env, StateLayout};
use edgecdn::neural::{LstmCell, LstmState, SparseVec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_placement(rng: &mut ChaCha8Rng, d: StateLayout) -> PlacementState {
    let mut s = PlacementState::new(d.n, d.f, d.n_low, d.n_high);
    for i in 0..d.n {
        for l in 0..d.n_low {
            s.set_y(i, l, rng.random_bool(0.5));
            for j in 0..d.n {
                s.set_z(i, j, l, rng.random_range(0..5));
            }
        }
    }
    for f in 0..d.f {
        for h in 0..d.n_high {
            s.set_x(f, h, rng.random_bool(0.5));
        }
    }
    s
}

/// Random walk over legal actions; `pick` chooses among legal indices.
fn walk(env: &mut Env, slots: usize, mut pick: impl FnMut(&[usize]) -> usize) -> f64 {
    let space = env.action_space();
    let mut weighted = 0.0;
    for _ in 0..slots {
        let legal: Vec<usize> = env.legal_mask().iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| k).collect();
        let k = legal[pick(&legal)];
        weighted += env.step(space.decode(k)).unwrap().weighted_cost;
    }
    weighted
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn state_encoding_round_trips(n in 1usize..4, f in 0usize..3, nl in 1usize..4, nh in 0usize..3, pad in 0usize..2, seed: u64) {
        let f = f.min(n);
        let dims = StateLayout { n, f, n_low: nl, n_high: nh };
        let layout = StateLayout { n: n + pad, f: f + pad, n_low: nl + pad, n_high: nh + pad };
        let s = random_placement(&mut ChaCha8Rng::seed_from_u64(seed), dims);
        let v = encode_state(&s, &layout).unwrap();
        prop_assert_eq!(v.len(), layout.width());
        prop_assert_eq!(decode_state(&v, &layout, dims).unwrap(), s);
    }

    #[test]
    fn action_indices_are_a_bijection(seed in 0u64..1000) {
        let mut spec = ScenarioSpec::small();
        spec.layout_seed = seed;
        let env = Env::new(&spec, seed, Strategy::NoMig).unwrap();
        let space = env.action_space();
        for k in 0..space.count() {
            let a = space.decode(k);
            prop_assert_eq!(space.encode(a), k);
        }
        prop_assert_eq!(space.decode(space.noop_index()), AtomicAction::NoOp);
    }

    #[test]
    fn transferable_bytes_is_clamped_and_monotone(s1 in 0.0f64..5.0, s2 in 0.0f64..5.0, size in 0.1f64..200.0, rate in 0.1f64..50.0, tau in 0.0f64..1.0) {
        let link = Link { rate, tau };
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let a = transferable_bytes(true, lo, &link, size);
        let b = transferable_bytes(true, hi, &link, size);
        prop_assert!((0.0..=size).contains(&a) && (0.0..=size).contains(&b));
        prop_assert!(a <= b);
        prop_assert_eq!(transferable_bytes(false, hi, &link, size), 0.0);
    }

    #[test]
    fn standard_zipf_rates_sum_to_total(catalog in 1usize..200, slope in 0.1f64..2.0, rate in 0.1f64..10.0) {
        let demand = DemandModel { zipf_slope: slope, request_rate: rate, normalization: ZipfNormalization::Standard };
        let total: f64 = (1..=catalog).map(|l| zipf_request_rate(l, catalog, &demand).unwrap()).sum();
        prop_assert!((total - rate).abs() < 1e-9 * rate);
        for l in 1..catalog {
            prop_assert!(zipf_request_rate(l, catalog, &demand).unwrap() >= zipf_request_rate(l + 1, catalog, &demand).unwrap());
        }
    }

    #[test]
    fn greedy_set_dominates(nodes in 1usize..12, sigma in 1usize..3, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adj = vec![Vec::new(); nodes];
        for a in 0..nodes {
            for b in a + 1..nodes {
                if rng.random_bool(0.3) {
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        let g = ContactGraph { nodes: (0..nodes).map(|v| v * 3 + 1).collect(), adj };
        let d = dominating_set(&g, sigma);
        prop_assert!(dominates(&g, &d.members, sigma));
        prop_assert!(d.members.iter().all(|m| g.nodes.contains(m)));
        prop_assert!(d.members.len() <= nodes);
    }

    #[test]
    fn lstm_gates_and_memory_are_bounded(inputs in 1usize..5, hidden in 1usize..5, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = LstmCell::<f64>::random(inputs, hidden, &mut rng);
        let mut prev = LstmState { m: (0..hidden).map(|_| rng.random_range(-3.0..3.0)).collect(), y: (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect() };
        for _ in 0..5 {
            let x: Vec<f64> = (0..inputs).map(|_| rng.random_range(-10.0..10.0)).collect();
            let st = cell.step(&x, &prev).unwrap();
            for g in 0..3 {
                prop_assert!(st.gates[g].iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
            prop_assert!(st.gates[3].iter().all(|&v| (-1.0..=1.0).contains(&v)));
            for r in 0..hidden {
                prop_assert!(st.m[r].abs() <= st.m_prev[r].abs() + 1.0 + 1e-12);
                prop_assert!(st.y[r].abs() <= 1.0);
            }
            prev = LstmState { m: st.m, y: st.y };
        }
    }

    #[test]
    fn replay_buffer_stays_bounded(cap in 1usize..50, pushes in 0usize..200, batch in 1usize..60, seed: u64) {
        let mut buf = ReplayBuffer::<f64>::new(cap);
        let empty = SparseVec::from_dense(&[0.0f64; 2]);
        for k in 0..pushes {
            buf.push(Experience { state: empty.clone(), action: k, reward: 0.0, next_state: empty.clone(), next_legal: vec![0] });
            prop_assert!(buf.len() <= cap);
        }
        prop_assert_eq!(buf.len(), pushes.min(cap));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match buf.sample_indices(batch, &mut rng) {
            Ok(mut idx) => {
                prop_assert!(batch <= buf.len());
                prop_assert!(idx.iter().all(|&i| i < buf.len()));
                idx.sort_unstable();
                idx.dedup();
                prop_assert_eq!(idx.len(), batch);
                // Oldest surviving entry is pushes - len.
                let oldest = pushes - buf.len();
                prop_assert!((0..buf.len()).all(|k| buf.get(k).action >= oldest));
            }
            Err(_) => prop_assert!(batch > buf.len()),
        }
    }

    #[test]
    fn fit_strategies_pick_as_defined(seed: u64) {
        let spec = ScenarioSpec::default();
        let env = Env::new(&spec, seed, Strategy::NoMig).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = env.state.n;
        let dims = StateLayout::of(&env.state);
        let state = random_placement(&mut rng, dims);
        let free: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..300.0)).collect();
        let target = env.caches.iter().position(|c| !c.is_fixed()).unwrap();
        let ctx = DecisionContext { state: &state, caches: &env.caches, low_sizes: &env.low_sizes, free_mb: &free, dist: env.distances(), excluded: &[] };
        let mut tracker = RecencyTracker::default();
        for l in 0..dims.n_low {
            tracker.touch(target, l, rng.random_range(0..100));
        }
        let need = free[target] + 200.0;
        let first = |s: Strategy| baseline_decide(s, &ctx, need, target, &tracker, &mut ChaCha8Rng::seed_from_u64(0)).first().copied();
        let Some(best) = first(Strategy::BestFit) else { return Ok(()); };
        let worst = first(Strategy::WorstFit).unwrap();
        let ff = first(Strategy::FirstFit).unwrap();
        prop_assert_eq!(best.victim, tracker.lru_order(&state, target)[0]);
        let size = env.low_sizes[best.victim];
        let feasible: Vec<usize> = (0..n).filter(|&d| d != target && !state.y(d, best.victim) && free[d] >= size && env.distances().get(target, d).is_finite()).collect();
        match (best.destination, worst.destination, ff.destination) {
            (Destination::Cache(b), Destination::Cache(w), Destination::Cache(f)) => {
                prop_assert!(free[b] - size <= free[w] - size);
                prop_assert!(feasible.iter().all(|&d| free[b] <= free[d] && free[w] >= free[d]));
                prop_assert!(feasible.iter().all(|&d| env.distances().get(target, f) <= env.distances().get(target, d)));
            }
            (Destination::Deleted, Destination::Deleted, Destination::Deleted) => prop_assert!(feasible.is_empty()),
            other => prop_assert!(false, "strategies disagree on feasibility: {:?}", other),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn legal_walks_keep_constraints_and_phi(seed: u64) {
        let mut env = Env::new(&ScenarioSpec::small(), seed, Strategy::NoMig).unwrap();
        env.check_constraints = true;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let weighted = walk(&mut env, 200, |legal| rng.random_range(0..legal.len()));
        prop_assert_eq!(env.violations_seen, 0);
        prop_assert!(env.violations().unwrap().is_empty());
        prop_assert!((env.phi - weighted).abs() <= 1e-9 * weighted.abs().max(1.0));
        let s = env.sojourns();
        let cap = env.sojourn_cap;
        for i in 0..env.caches.len() {
            for j in 0..env.caches.len() {
                prop_assert!((0.0..=cap).contains(&s.get(i, j)));
            }
        }
    }

    #[test]
    fn exogenous_streams_ignore_actions(seed: u64) {
        let spec = ScenarioSpec::small();
        let mut a = Env::new(&spec, seed, Strategy::NoMig).unwrap();
        let mut b = Env::new(&spec, seed, Strategy::BestFit).unwrap();
        let noop = a.action_space().noop_index();
        walk(&mut a, 100, |legal| legal.iter().position(|&k| k == noop).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        walk(&mut b, 100, |legal| rng.random_range(0..legal.len()));
        prop_assert_eq!(a.exogenous_digest, b.exogenous_digest);
        prop_assert_ne!(a.exogenous_digest, 0);
    }
}

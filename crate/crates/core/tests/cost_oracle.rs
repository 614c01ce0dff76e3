mod common;

use common::{library_costs, oracle_costs, random_toy, rel_close};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn library_matches_brute_force_on_random_snapshots() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let toy = random_toy(&mut rng);
        let want = oracle_costs(&toy);
        let got = library_costs(&toy);
        assert!(rel_close(got.0, want.0, 1e-9), "case {case} migration {got:?} vs {want:?}\n{toy:#?}");
        assert!(rel_close(got.1, want.1, 1e-9), "case {case} access {got:?} vs {want:?}\n{toy:#?}");
        assert!(rel_close(got.2, want.2, 1e-9), "case {case} delivery {got:?} vs {want:?}\n{toy:#?}");
    }
}

#[test]
fn hand_worked_snapshot() {
    // Two caches, one content of 10 MB held by cache 0; cache 1 asks twice with a quota of one.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut toy = random_toy(&mut rng);
    toy.n = 2;
    toy.f = 1;
    toy.low = vec![10.0];
    toy.high = vec![20.0];
    toy.y = vec![vec![true], vec![false]];
    toy.x = vec![vec![false]];
    toy.z = vec![vec![vec![0], vec![1]], vec![vec![0], vec![0]]];
    toy.requests = vec![vec![0], vec![2]];
    toy.sojourn = vec![vec![0.0, 0.6], vec![0.6, 0.0]];
    toy.dist = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
    toy.flips = vec![(false, 0, 0)];
    toy.members = vec![1];
    toy.arrivals = vec![0];
    toy.link = edgecdn::cache_net::Link { rate: 10.0, tau: 0.1 };
    toy.params = edgecdn::cost::CostParameters {
        upload_per_mb: 1.0,
        download_per_mb: 2.0,
        bandwidth_per_mb_hop: 3.0,
        cloud_delay_per_mb: 0.5,
        low_delay_cost: 4.0,
        high_delay_cost: 5.0,
        ..Default::default()
    };
    // Cloud fetch of 20 MB: 40. Edge pushes 5 MB (0.5 s), rest 5 MB from cloud:
    // delay 0.5 + 0.1 + 2.5 = 3.1, second request all cloud 5.0, times 4 = 32.4.
    // Fixed 0 now holds high 0: 5 MB edge, 15 MB cloud = 0.6 + 7.5 = 8.1, times 5 = 40.5.
    let want = (40.0, 32.4, 40.5);
    let got = library_costs(&toy);
    assert!(rel_close(got.0, want.0, 1e-12) && rel_close(got.1, want.1, 1e-12) && rel_close(got.2, want.2, 1e-12), "{got:?}");
    let o = oracle_costs(&toy);
    assert!(rel_close(o.0, want.0, 1e-12) && rel_close(o.1, want.1, 1e-12) && rel_close(o.2, want.2, 1e-12), "{o:?}");
}

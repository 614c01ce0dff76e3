//! Brute-force cost evaluator used by the oracle and acceptance tests.
//!
//! Written against plain nested vectors so it shares nothing with the library's
//! routing or logging code.

#![allow(dead_code)]

use edgecdn::cache_net::{
    apply_placement_delta, DistanceTable, DominatingSet, Flip, Link, PlacementState, RequestBatch,
};
use edgecdn::cost::{
    high_priority_delivery_cost, low_priority_access_cost, migration_cost_slot, plan_high_deliveries,
    route_requests, CostParameters,
};
use edgecdn::mobility::SojournTable;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Toy {
    pub n: usize,
    pub f: usize,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub y: Vec<Vec<bool>>,
    pub x: Vec<Vec<bool>>,
    /// z[i][j][l]
    pub z: Vec<Vec<Vec<u32>>>,
    /// requests[j][l]
    pub requests: Vec<Vec<u32>>,
    pub sojourn: Vec<Vec<f64>>,
    pub dist: Vec<Vec<f64>>,
    /// (is_low, cache, content)
    pub flips: Vec<(bool, usize, usize)>,
    /// Mobile cache ids acting as dominators.
    pub members: Vec<usize>,
    pub arrivals: Vec<usize>,
    pub link: Link,
    pub params: CostParameters,
}

pub fn random_toy<R: Rng>(rng: &mut R) -> Toy {
    let n = rng.random_range(2..=3);
    let f = rng.random_range(1..n);
    let n_low = rng.random_range(1..=3);
    let n_high = rng.random_range(1..=3);
    let low: Vec<f64> = (0..n_low).map(|_| rng.random_range(1.0..30.0)).collect();
    let high: Vec<f64> = (0..n_high).map(|_| rng.random_range(1.0..30.0)).collect();
    let y = (0..n).map(|_| (0..n_low).map(|_| rng.random_bool(0.5)).collect()).collect();
    let x = (0..f).map(|_| (0..n_high).map(|_| rng.random_bool(0.5)).collect()).collect();
    let z = (0..n)
        .map(|_| (0..n).map(|_| (0..n_low).map(|_| rng.random_range(0..3)).collect()).collect())
        .collect();
    let requests = (0..n).map(|_| (0..n_low).map(|_| rng.random_range(0..4)).collect()).collect();
    let mut sojourn = vec![vec![0.0; n]; n];
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let s = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..3.0) };
            sojourn[i][j] = s;
            sojourn[j][i] = s;
            let d = if rng.random_bool(0.2) { f64::INFINITY } else { rng.random_range(1..4) as f64 };
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let flips = (0..rng.random_range(0..5))
        .map(|_| {
            if rng.random_bool(0.5) {
                (true, rng.random_range(0..n), rng.random_range(0..n_low))
            } else {
                (false, rng.random_range(0..f), rng.random_range(0..n_high))
            }
        })
        .collect();
    let members = (f..n).filter(|_| rng.random_bool(0.7)).collect();
    let arrivals = (0..rng.random_range(0..4)).map(|_| rng.random_range(0..n_high)).collect();
    let link = Link { rate: rng.random_range(1.0..20.0), tau: rng.random_range(0.0..0.5) };
    let params = CostParameters {
        upload_per_mb: rng.random_range(0.5..3.0),
        download_per_mb: rng.random_range(0.5..3.0),
        bandwidth_per_mb_hop: rng.random_range(0.5..3.0),
        cloud_delay_per_mb: rng.random_range(0.1..1.0),
        low_delay_cost: rng.random_range(1.0..10.0),
        high_delay_cost: rng.random_range(1.0..20.0),
        ..CostParameters::default()
    };
    Toy { n, f, low, high, y, x, z, requests, sojourn, dist, flips, members, arrivals, link, params }
}

fn edge_bytes(placed: bool, sojourn: f64, link: &Link, size: f64) -> f64 {
    if !placed || sojourn <= link.tau {
        return 0.0;
    }
    let b = (sojourn - link.tau) * link.rate;
    if b > size {
        size
    } else {
        b
    }
}

fn split_delay(edge: f64, size: f64, t: &Toy) -> f64 {
    let mut d = (size - edge) * t.params.cloud_delay_per_mb;
    if edge > 0.0 {
        d += edge / t.link.rate + t.link.tau;
    }
    d
}

/// (migration, access, delivery) computed by hand after applying the flips.
pub fn oracle_costs(t: &Toy) -> (f64, f64, f64) {
    let p = &t.params;
    let mut y = t.y.clone();
    let mut x = t.x.clone();
    let z = &t.z;
    let mut migration = 0.0;
    for &(is_low, c, k) in &t.flips {
        let (held, size, pool): (bool, f64, Vec<usize>) = if is_low {
            (y[c][k], t.low[k], (0..t.n).filter(|&i| y[i][k]).collect())
        } else {
            (x[c][k], t.high[k], (0..t.f).filter(|&i| x[i][k]).collect())
        };
        if held {
            if is_low {
                y[c][k] = false;
            } else {
                x[c][k] = false;
            }
            continue;
        }
        let mut source: Option<usize> = None;
        for i in pool {
            if i == c || !t.dist[i][c].is_finite() {
                continue;
            }
            match source {
                Some(s) if t.dist[s][c] <= t.dist[i][c] => {}
                _ => source = Some(i),
            }
        }
        migration += size * p.download_per_mb;
        if let Some(s) = source {
            migration += size * p.upload_per_mb + size * p.bandwidth_per_mb_hop * t.dist[s][c];
        }
        if is_low {
            y[c][k] = true;
        } else {
            x[c][k] = true;
        }
    }

    let mut access = 0.0;
    for j in 0..t.n {
        for (l, &size) in t.low.iter().enumerate() {
            let mut left = t.requests[j][l];
            if left == 0 || y[j][l] {
                continue;
            }
            let mut holders: Vec<(usize, f64)> = (0..t.n)
                .filter(|&i| i != j && y[i][l] && z[i][j][l] > 0)
                .map(|i| (i, edge_bytes(true, t.sojourn[i][j], &t.link, size)))
                .collect();
            // Selection sort: most bytes first, lowest id on ties.
            for a in 0..holders.len() {
                let mut best = a;
                for b in a + 1..holders.len() {
                    let (hb, hbest) = (holders[b], holders[best]);
                    if hb.1 > hbest.1 || (hb.1 == hbest.1 && hb.0 < hbest.0) {
                        best = b;
                    }
                }
                holders.swap(a, best);
            }
            for (i, bytes) in holders {
                let take = z[i][j][l].min(left);
                access += take as f64 * split_delay(bytes, size, t);
                left -= take;
            }
            access += left as f64 * size * p.cloud_delay_per_mb;
        }
    }
    access *= p.low_delay_cost;

    let mut delivery = 0.0;
    for &u in &t.members {
        for &h in &t.arrivals {
            let size = t.high[h];
            let mut best = 0.0;
            for fx in 0..t.f {
                let b = edge_bytes(x[fx][h], t.sojourn[fx][u], &t.link, size);
                if b > best {
                    best = b;
                }
            }
            delivery += split_delay(best, size, t);
        }
    }
    delivery *= p.high_delay_cost;
    (migration, access, delivery)
}

/// The same three numbers through the library.
pub fn library_costs(t: &Toy) -> (f64, f64, f64) {
    let n_low = t.low.len();
    let n_high = t.high.len();
    let mut state = PlacementState::new(t.n, t.f, n_low, n_high);
    let mut batch = RequestBatch::empty(t.n, n_low);
    for i in 0..t.n {
        for l in 0..n_low {
            state.set_y(i, l, t.y[i][l]);
            batch.set(l, i, t.requests[i][l]);
            for j in 0..t.n {
                state.set_z(i, j, l, t.z[i][j][l]);
            }
        }
    }
    for fx in 0..t.f {
        for h in 0..n_high {
            state.set_x(fx, h, t.x[fx][h]);
        }
    }
    let flips: Vec<Flip> = t
        .flips
        .iter()
        .map(|&(is_low, c, k)| if is_low { Flip::Y { cache: c, content: k } } else { Flip::X { fixed: c, content: k } })
        .collect();
    let dist = DistanceTable::from_matrix(t.n, t.dist.iter().flatten().copied().collect());
    let sojourn = SojournTable::from_matrix(t.n, t.sojourn.iter().flatten().copied().collect());
    let (next, log) = apply_placement_delta(&state, &flips, &dist, &t.low, &t.high).expect("valid flips");
    let m = migration_cost_slot(&log, &t.params, &dist).total();
    let served = route_requests(&next, &batch, &sojourn, &t.link, &t.low);
    let a = low_priority_access_cost(&served, &t.link, &t.params);
    let dom = DominatingSet { members: t.members.clone(), radius: 1 };
    let plan = plan_high_deliveries(&next, &dom, &t.arrivals, &t.high, &sojourn, &t.link);
    let d = high_priority_delivery_cost(&plan, &t.link, &t.params);
    (m, a, d)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

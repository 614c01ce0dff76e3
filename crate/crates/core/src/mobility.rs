//! Manhattan-grid vehicle movement, coverage discs and sojourn times.

use std::collections::BTreeMap;
use std::io::Read;

use rand::Rng;

use crate::cache_net::{CacheKind, EdgeCache};
use crate::error::{Error, Result};

const ON_ROAD_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn unit(self) -> Point {
        match self {
            Heading::North => Point::new(0.0, 1.0),
            Heading::East => Point::new(1.0, 0.0),
            Heading::South => Point::new(0.0, -1.0),
            Heading::West => Point::new(-1.0, 0.0),
        }
    }

    /// Rotation by +90 degrees.
    pub fn left(self) -> Heading {
        match self {
            Heading::East => Heading::North,
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Heading::East | Heading::West)
    }

    pub fn turn(self, turn: Turn) -> Heading {
        match turn {
            Turn::Straight => self,
            Turn::Left => self.left(),
            Turn::Right => self.right(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    Straight,
    Left,
    Right,
}

/// Square road grid wrapped as a torus; roads run along every multiple of `cell_side`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadGrid {
    pub n: usize,
    pub cell_side: f64,
}

impl RoadGrid {
    pub fn new(n: usize, cell_side: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::Config { key: "grid.n".into(), reason: "must be at least 1".into() });
        }
        if !(cell_side > 0.0) {
            return Err(Error::Config { key: "grid.cell_side".into(), reason: "must be positive".into() });
        }
        Ok(RoadGrid { n, cell_side })
    }

    pub fn side(&self) -> f64 {
        self.n as f64 * self.cell_side
    }

    pub fn on_line(&self, v: f64) -> bool {
        let r = v.rem_euclid(self.cell_side);
        r < ON_ROAD_EPS || self.cell_side - r < ON_ROAD_EPS
    }

    pub fn is_on_road(&self, p: Point) -> bool {
        self.on_line(p.x) || self.on_line(p.y)
    }

    pub fn wrap(&self, p: Point) -> Point {
        let s = self.side();
        Point::new(p.x.rem_euclid(s), p.y.rem_euclid(s))
    }

    /// Shortest displacement from `a` to `b` on the torus.
    pub fn delta(&self, a: Point, b: Point) -> Point {
        let s = self.side();
        let fold = |d: f64| d - s * (d / s).round();
        Point::new(fold(b.x - a.x), fold(b.y - a.y))
    }

    pub fn torus_dist(&self, a: Point, b: Point) -> f64 {
        self.delta(a, b).norm()
    }

    /// Image of `p` closest to `anchor`, possibly outside the fundamental square.
    pub fn image_near(&self, anchor: Point, p: Point) -> Point {
        let d = self.delta(anchor, p);
        Point::new(anchor.x + d.x, anchor.y + d.y)
    }

    fn snap(&self, v: f64) -> f64 {
        (v / self.cell_side).round() * self.cell_side
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnPolicy {
    pub mu_straight: f64,
    pub mu_left: f64,
    pub mu_right: f64,
}

impl Default for TurnPolicy {
    fn default() -> Self {
        TurnPolicy { mu_straight: 0.5, mu_left: 0.25, mu_right: 0.25 }
    }
}

impl TurnPolicy {
    pub fn validate(&self) -> Result<()> {
        let ps = [self.mu_straight, self.mu_left, self.mu_right];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || (ps.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config {
                key: "mobility.turn".into(),
                reason: "probabilities must lie in [0,1] and sum to 1".into(),
            });
        }
        Ok(())
    }

    pub fn turn_for(&self, u: f64) -> Turn {
        if u < self.mu_straight {
            Turn::Straight
        } else if u < self.mu_straight + self.mu_left {
            Turn::Left
        } else {
            Turn::Right
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleKinematics {
    pub position: Point,
    /// Speed in m/s.
    pub velocity: f64,
    pub heading: Heading,
}

impl VehicleKinematics {
    pub fn velocity_vector(&self) -> Point {
        self.heading.unit().scale(self.velocity)
    }

    /// Position lies on a road running along the heading.
    pub fn is_valid_on(&self, grid: &RoadGrid) -> bool {
        let across = if self.heading.is_horizontal() { self.position.y } else { self.position.x };
        self.velocity >= 0.0 && self.velocity.is_finite() && grid.on_line(across)
    }
}

pub fn step_vehicle<R: Rng + ?Sized>(
    kin: VehicleKinematics,
    grid: &RoadGrid,
    policy: &TurnPolicy,
    dt: f64,
    rng: &mut R,
) -> Result<VehicleKinematics> {
    if !kin.is_valid_on(grid) {
        return Err(Error::OffRoad { x: kin.position.x, y: kin.position.y });
    }
    let cs = grid.cell_side;
    let mut pos = kin.position;
    let mut heading = kin.heading;
    // The coordinate across the road is pinned exactly to the grid line.
    if heading.is_horizontal() {
        pos.y = grid.snap(pos.y);
    } else {
        pos.x = grid.snap(pos.x);
    }
    let mut remaining = kin.velocity * dt;
    while remaining > 0.0 {
        let u = heading.unit();
        let along = if heading.is_horizontal() { pos.x } else { pos.y };
        let sign = if heading.is_horizontal() { u.x } else { u.y };
        let r = along.rem_euclid(cs);
        let to_next = if sign > 0.0 { cs - r } else { r };
        let to_next = if to_next < ON_ROAD_EPS || to_next > cs - ON_ROAD_EPS { cs } else { to_next };
        if remaining < to_next {
            let moved = along + sign * remaining;
            if heading.is_horizontal() {
                pos.x = moved;
            } else {
                pos.y = moved;
            }
            remaining = 0.0;
        } else {
            let moved = grid.snap(along + sign * to_next);
            if heading.is_horizontal() {
                pos.x = moved;
            } else {
                pos.y = moved;
            }
            remaining -= to_next;
            heading = heading.turn(policy.turn_for(rng.random::<f64>()));
        }
        pos = grid.wrap(pos);
    }
    Ok(VehicleKinematics { position: grid.wrap(pos), velocity: kin.velocity, heading })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageDisc {
    pub center: Point,
    pub diameter: f64,
}

impl CoverageDisc {
    pub fn radius(&self) -> f64 {
        self.diameter / 2.0
    }
}

pub fn coverage_contains(disc: &CoverageDisc, point: Point) -> bool {
    disc.center.dist(point) <= disc.radius()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathLengths {
    pub r_straight: f64,
    pub r_left: f64,
    pub r_right: f64,
    pub r_plain: f64,
}

fn chord(radius: f64, offset: f64) -> f64 {
    2.0 * (radius * radius - offset * offset).max(0.0).sqrt()
}

/// Path lengths inside `disc` for a vehicle entering on the nearest road parallel to
/// `entry_heading`; the left/right paths turn at the first intersection met inside the disc.
pub fn road_path_lengths(disc: &CoverageDisc, entry_heading: Heading, grid: &RoadGrid) -> Result<PathLengths> {
    let r = disc.radius();
    let c = disc.center;
    let cs = grid.cell_side;
    let d_horizontal = (c.y - grid.snap(c.y)).abs();
    let d_vertical = (c.x - grid.snap(c.x)).abs();
    if d_horizontal > r && d_vertical > r {
        return Err(Error::NoRoadInDisc);
    }
    let u = entry_heading.unit();
    // Road line nearest to the centre, parallel to the heading.
    let road_point = if entry_heading.is_horizontal() {
        Point::new(c.x, grid.snap(c.y))
    } else {
        Point::new(grid.snap(c.x), c.y)
    };
    let offset = road_point.sub(c).norm();
    if offset > r {
        return Ok(PathLengths::default());
    }
    let half = chord(r, offset) / 2.0;
    let r_straight = 2.0 * half;
    // Along-road coordinate of the entry point and the first intersection after it.
    let along_c = road_point.dot(u);
    let entry = along_c - half;
    let sign = if entry_heading.is_horizontal() { u.x } else { u.y };
    let entry_raw = sign * entry;
    let first_raw = if sign > 0.0 {
        (entry_raw / cs).ceil() * cs
    } else {
        (entry_raw / cs).floor() * cs
    };
    let first_along = sign * first_raw;
    let mut out = PathLengths { r_straight, ..Default::default() };
    if first_along <= along_c + half {
        let inter = road_point.sub(u.scale(along_c - first_along));
        let to_inter = first_along - entry;
        let a = inter.sub(c).dot(u);
        let half_turned = chord(r, a) / 2.0;
        let ci = c.sub(inter);
        out.r_left = to_inter + half_turned + ci.dot(entry_heading.left().unit());
        out.r_right = to_inter + half_turned + ci.dot(entry_heading.right().unit());
    }
    Ok(out)
}

/// Chord of the covering disc along the relative motion of `moving` (relative position `rel`).
pub fn relative_chord(radius: f64, rel: Point, rel_velocity: Point) -> f64 {
    let speed = rel_velocity.norm();
    if speed == 0.0 {
        return 0.0;
    }
    let dir = rel_velocity.scale(1.0 / speed);
    let perp = (rel.x * dir.y - rel.y * dir.x).abs();
    chord(radius, perp)
}

/// Seconds `moving` remains inside the coverage of `covering`, capped at `t_cap`.
pub fn sojourn_time(
    covering: &EdgeCache,
    moving: &EdgeCache,
    grid: &RoadGrid,
    policy: &TurnPolicy,
    t_cap: f64,
) -> f64 {
    let disc = CoverageDisc { center: covering.position(), diameter: covering.coverage_diameter };
    let here = grid.image_near(disc.center, moving.position());
    if !coverage_contains(&disc, here) {
        return 0.0;
    }
    let raw = match (covering.kind, moving.kinematics) {
        (_, None) => match covering.kinematics {
            None => f64::INFINITY,
            Some(cov) => {
                let rel = here.sub(disc.center);
                let w = cov.velocity_vector().scale(-1.0);
                relative_chord(disc.radius(), rel, w) / w.norm()
            }
        },
        (CacheKind::Mobile, Some(mv)) => {
            let cov = covering.kinematics.expect("mobile cache carries kinematics");
            let w = mv.velocity_vector().sub(cov.velocity_vector());
            let rel = here.sub(disc.center);
            relative_chord(disc.radius(), rel, w) / w.norm()
        }
        (CacheKind::FixedStraight, Some(mv)) => match road_path_lengths(&disc, mv.heading, grid) {
            Ok(p) => p.r_straight / mv.velocity,
            Err(_) => 0.0,
        },
        (CacheKind::FixedIntersection, Some(mv)) => match road_path_lengths(&disc, mv.heading, grid) {
            Ok(p) => {
                (policy.mu_straight * p.r_straight + policy.mu_left * p.r_left + policy.mu_right * p.r_right)
                    / mv.velocity
            }
            Err(_) => 0.0,
        },
    };
    if raw.is_nan() {
        t_cap
    } else {
        raw.min(t_cap)
    }
}

/// `get(i, j)`: seconds cache `j` stays inside the coverage of cache `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SojournTable {
    n: usize,
    s: Vec<f64>,
}

impl SojournTable {
    pub fn compute(caches: &[EdgeCache], grid: &RoadGrid, policy: &TurnPolicy, t_cap: f64) -> Self {
        let n = caches.len();
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s[i * n + j] = sojourn_time(&caches[i], &caches[j], grid, policy, t_cap);
                }
            }
        }
        SojournTable { n, s }
    }

    pub fn from_matrix(n: usize, s: Vec<f64>) -> Self {
        assert_eq!(s.len(), n * n);
        SojournTable { n, s }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.n + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time_s: f64,
    pub vehicle_id: usize,
    pub position: Point,
    pub speed: f64,
}

/// Mobility trace keyed by whole second, replacing the stochastic model when present.
#[derive(Debug, Clone, Default)]
pub struct MobilityTrace {
    by_time: BTreeMap<u64, BTreeMap<usize, TraceRecord>>,
}

impl MobilityTrace {
    pub fn parse<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(input);
        let mut trace = MobilityTrace::default();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Trace(format!("line {}: expected 5 fields, got {}", row + 1, rec.len())));
            }
            let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let nums = match nums {
                Ok(v) => v,
                Err(_) if row == 0 => continue,
                Err(e) => return Err(Error::Trace(format!("line {}: {e}", row + 1))),
            };
            let r = TraceRecord {
                time_s: nums[0],
                vehicle_id: nums[1] as usize,
                position: Point::new(nums[2], nums[3]),
                speed: nums[4],
            };
            trace.by_time.entry(r.time_s.round() as u64).or_default().insert(r.vehicle_id, r);
        }
        Ok(trace)
    }

    pub fn is_empty(&self) -> bool {
        self.by_time.is_empty()
    }

    pub fn record(&self, time_s: u64, vehicle_id: usize) -> Option<&TraceRecord> {
        self.by_time.get(&time_s).and_then(|m| m.get(&vehicle_id))
    }

    /// Kinematics at `time_s`; the heading follows the dominant axis of the next displacement.
    pub fn kinematics(&self, time_s: u64, vehicle_id: usize, fallback: Heading) -> Option<VehicleKinematics> {
        let now = self.record(time_s, vehicle_id)?;
        let heading = self
            .by_time
            .range(time_s + 1..)
            .find_map(|(_, m)| m.get(&vehicle_id))
            .map(|next| {
                let d = next.position.sub(now.position);
                if d.x == 0.0 && d.y == 0.0 {
                    fallback
                } else if d.x.abs() >= d.y.abs() {
                    if d.x > 0.0 { Heading::East } else { Heading::West }
                } else if d.y > 0.0 {
                    Heading::North
                } else {
                    Heading::South
                }
            })
            .unwrap_or(fallback);
        Some(VehicleKinematics { position: now.position, velocity: now.speed.max(0.0), heading })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> RoadGrid {
        RoadGrid::new(4, 500.0).unwrap()
    }

    #[test]
    fn thirty_kmh_for_one_second() {
        let kin = VehicleKinematics { position: Point::new(100.0, 0.0), velocity: 30.0 / 3.6, heading: Heading::East };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = step_vehicle(kin, &grid(), &TurnPolicy::default(), 1.0, &mut rng).unwrap();
        assert!((next.position.x - 108.333_333).abs() < 1e-5);
        assert_eq!(next.heading, Heading::East);
    }

    #[test]
    fn draw_mapping() {
        let p = TurnPolicy::default();
        assert_eq!(p.turn_for(0.6), Turn::Left);
        assert_eq!(p.turn_for(0.49), Turn::Straight);
        assert_eq!(p.turn_for(0.75), Turn::Right);
        assert_eq!(Heading::East.turn(Turn::Left), Heading::North);
    }

    #[test]
    fn off_road_rejected() {
        let kin = VehicleKinematics { position: Point::new(10.0, 10.0), velocity: 1.0, heading: Heading::East };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            step_vehicle(kin, &grid(), &TurnPolicy::default(), 1.0, &mut rng),
            Err(Error::OffRoad { .. })
        ));
    }

    #[test]
    fn wraps_around_edge() {
        let kin = VehicleKinematics { position: Point::new(1999.0, 0.0), velocity: 2.0, heading: Heading::East };
        let policy = TurnPolicy { mu_straight: 1.0, mu_left: 0.0, mu_right: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = step_vehicle(kin, &grid(), &policy, 1.0, &mut rng).unwrap();
        assert!((next.position.x - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coverage_closed_disc() {
        let d = CoverageDisc { center: Point::new(0.0, 0.0), diameter: 10.0 };
        assert!(coverage_contains(&d, Point::new(0.0, 0.0)));
        assert!(coverage_contains(&d, Point::new(3.0, 4.0)));
        assert!(!coverage_contains(&d, Point::new(10.0, 0.0)));
    }

    #[test]
    fn chord_through_centre_and_offset() {
        let g = grid();
        let d = CoverageDisc { center: Point::new(250.0, 0.0), diameter: 60.0 };
        let p = road_path_lengths(&d, Heading::East, &g).unwrap();
        assert_eq!(p.r_straight, 60.0);
        assert_eq!((p.r_left, p.r_right), (0.0, 0.0));
        let d = CoverageDisc { center: Point::new(250.0, 10.0), diameter: 60.0 };
        let p = road_path_lengths(&d, Heading::West, &g).unwrap();
        assert!((p.r_straight - 2.0 * (900.0f64 - 100.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn intersection_at_centre() {
        let d = CoverageDisc { center: Point::new(500.0, 500.0), diameter: 60.0 };
        for h in Heading::ALL {
            let p = road_path_lengths(&d, h, &grid()).unwrap();
            assert!((p.r_straight - 60.0).abs() < 1e-12);
            assert!((p.r_left - 60.0).abs() < 1e-12, "{h:?} {p:?}");
            assert!((p.r_right - 60.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disc_without_road() {
        let d = CoverageDisc { center: Point::new(250.0, 250.0), diameter: 60.0 };
        assert!(matches!(road_path_lengths(&d, Heading::East, &grid()), Err(Error::NoRoadInDisc)));
    }

    #[test]
    fn trace_parsing_and_heading() {
        let text = "time_s,vehicle_id,x_m,y_m,speed_mps\n0,0,10,0,8.3\n1,0,18.3,0,8.3\n0,1,0,40,5\n1,1,0,35,5\n";
        let t = MobilityTrace::parse(text.as_bytes()).unwrap();
        let k = t.kinematics(0, 0, Heading::North).unwrap();
        assert_eq!(k.heading, Heading::East);
        assert_eq!(t.kinematics(0, 1, Heading::North).unwrap().heading, Heading::South);
        assert_eq!(t.kinematics(1, 1, Heading::North).unwrap().heading, Heading::North);
        assert!(t.kinematics(2, 0, Heading::North).is_none());
    }
}

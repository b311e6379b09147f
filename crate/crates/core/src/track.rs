//! Closed-loop serpentine tracks and the leader/follower vehicle pair driving them.
//!
//! A track is a dense polyline: a first straight, `n` half-turn hairpins
//! alternating left/right joined by straights, and one wide return arc that
//! closes the loop. Vehicle poses are interpolated linearly along the polyline.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// The two evaluation scenarios: few hairpins (training) and many hairpins (robustness).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    One,
    Two,
}

impl Scenario {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Scenario::One),
            2 => Ok(Scenario::Two),
            other => Err(Error::config(format!("unknown scenario {other} (expected 1 or 2)"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Scenario::One => 1,
            Scenario::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub straight_length_m: f64,
    pub hairpin_radius_m: f64,
    pub hairpins_scenario1: usize,
    pub hairpins_scenario2: usize,
    pub resolution_m: f64,
    /// Upper bound on centerline curvature (1/m).
    pub max_curvature: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            straight_length_m: 200.0,
            hairpin_radius_m: 25.0,
            hairpins_scenario1: 3,
            hairpins_scenario2: 9,
            resolution_m: 0.5,
            max_curvature: 0.1,
        }
    }
}

impl GeometryConfig {
    pub fn hairpins(&self, scenario: Scenario) -> usize {
        match scenario {
            Scenario::One => self.hairpins_scenario1,
            Scenario::Two => self.hairpins_scenario2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("straight_length_m", self.straight_length_m),
            ("hairpin_radius_m", self.hairpin_radius_m),
            ("resolution_m", self.resolution_m),
            ("max_curvature", self.max_curvature),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("track.{key} must be positive, got {v}")));
            }
        }
        if 1.0 / self.hairpin_radius_m > self.max_curvature {
            return Err(Error::config(format!(
                "track.hairpin_radius_m = {} exceeds max_curvature {}",
                self.hairpin_radius_m, self.max_curvature
            )));
        }
        if self.resolution_m > self.hairpin_radius_m {
            return Err(Error::config("track.resolution_m must not exceed the hairpin radius"));
        }
        for (key, n) in [
            ("hairpins_scenario1", self.hairpins_scenario1),
            ("hairpins_scenario2", self.hairpins_scenario2),
        ] {
            // The return arc has radius n·r; closure needs an odd count and n ≥ 3
            // keeps that arc clearly below hairpin curvature.
            if n < 3 || n % 2 == 0 {
                return Err(Error::config(format!(
                    "track.{key} must be odd and at least 3, got {n}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Straight { start: Vec2, heading: f64, length: f64 },
    Arc { center: Vec2, radius: f64, start_angle: f64, ccw: bool, length: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Straight { length, .. } | Piece::Arc { length, .. } => length,
        }
    }

    fn point(&self, t: f64) -> Vec2 {
        match *self {
            Piece::Straight { start, heading, .. } => start + Vec2::from_angle(heading) * t,
            Piece::Arc { center, radius, start_angle, ccw, .. } => {
                let sign = if ccw { 1.0 } else { -1.0 };
                center + Vec2::from_angle(start_angle + sign * t / radius) * radius
            }
        }
    }

    fn end(&self) -> (Vec2, f64) {
        match *self {
            Piece::Straight { start, heading, length } => {
                (start + Vec2::from_angle(heading) * length, heading)
            }
            Piece::Arc { ccw, length, radius, start_angle, .. } => {
                let sign = if ccw { 1.0 } else { -1.0 };
                let theta = start_angle + sign * length / radius;
                (self.point(length), theta + sign * PI / 2.0)
            }
        }
    }

    fn turn(start: Vec2, heading: f64, radius: f64, sweep: f64, ccw: bool) -> Piece {
        let normal = if ccw {
            Vec2::new(-heading.sin(), heading.cos())
        } else {
            Vec2::new(heading.sin(), -heading.cos())
        };
        let center = start + normal * radius;
        let start_angle = (start - center).angle();
        Piece::Arc { center, radius, start_angle, ccw, length: radius * sweep }
    }
}

/// Immutable closed polyline with cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
    total_length: f64,
    hairpin_count: usize,
    scenario: Scenario,
}

/// Builds the serpentine loop for `scenario`. Deterministic for a fixed config.
pub fn build_serpentine(scenario: Scenario, cfg: &GeometryConfig) -> Result<Track> {
    cfg.validate()?;
    let n = cfg.hairpins(scenario);
    let r = cfg.hairpin_radius_m;
    let l = cfg.straight_length_m;

    let mut pieces = Vec::with_capacity(2 * n + 2);
    let mut pos = Vec2::default();
    let mut heading = 0.0;
    let mut push = |piece: Piece, pos: &mut Vec2, heading: &mut f64| {
        let (p, h) = piece.end();
        *pos = p;
        *heading = h;
        pieces.push(piece);
    };
    for i in 0..n {
        push(Piece::Straight { start: pos, heading, length: l }, &mut pos, &mut heading);
        push(Piece::turn(pos, heading, r, PI, i % 2 == 0), &mut pos, &mut heading);
    }
    push(Piece::Straight { start: pos, heading, length: l }, &mut pos, &mut heading);
    push(Piece::turn(pos, heading, r * n as f64, PI, true), &mut pos, &mut heading);

    let analytic: f64 = pieces.iter().map(Piece::length).sum();
    let count = (analytic / cfg.resolution_m).round().max(3.0) as usize;
    let spacing = analytic / count as f64;

    let mut points = Vec::with_capacity(count);
    let mut piece_idx = 0;
    let mut piece_start = 0.0;
    for k in 0..count {
        let s = k as f64 * spacing;
        while piece_idx + 1 < pieces.len() && s >= piece_start + pieces[piece_idx].length() {
            piece_start += pieces[piece_idx].length();
            piece_idx += 1;
        }
        points.push(pieces[piece_idx].point(s - piece_start));
    }

    let mut cumulative = Vec::with_capacity(count);
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in points.windows(2) {
        acc += (w[1] - w[0]).norm();
        cumulative.push(acc);
    }
    let total_length = acc + (points[0] - points[count - 1]).norm();

    Ok(Track { points, cumulative, total_length, hairpin_count: n, scenario })
}

impl Track {
    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn hairpin_count(&self) -> usize {
        self.hairpin_count
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn wrap(&self, s: f64) -> f64 {
        let w = s.rem_euclid(self.total_length);
        if w >= self.total_length {
            0.0
        } else {
            w
        }
    }

    /// Position and heading at arc length `s` (wrapped onto the loop).
    pub fn pose(&self, s: f64) -> (Vec2, f64) {
        let s = self.wrap(s);
        let idx = self.cumulative.partition_point(|&c| c <= s).saturating_sub(1);
        let next = (idx + 1) % self.points.len();
        let seg_end = if next == 0 { self.total_length } else { self.cumulative[next] };
        let a = self.points[idx];
        let d = self.points[next] - a;
        let frac = (s - self.cumulative[idx]) / (seg_end - self.cumulative[idx]);
        (a + d * frac, d.angle())
    }

    /// Forward arc-length distance from `behind` to `ahead` along the loop.
    pub fn gap(&self, ahead: f64, behind: f64) -> f64 {
        (ahead - behind).rem_euclid(self.total_length)
    }

    /// Writes the centerline as `x,y,arc_length` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,arc_length")?;
        for (p, s) in self.points.iter().zip(&self.cumulative) {
            writeln!(w, "{},{},{}", p.x, p.y, s)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub arc_position: f64,
    pub xy: Vec2,
    pub heading: f64,
    /// m/s
    pub speed: f64,
}

impl VehicleState {
    pub fn on_track(track: &Track, arc_position: f64, speed: f64) -> Self {
        let arc_position = track.wrap(arc_position);
        let (xy, heading) = track.pose(arc_position);
        Self { arc_position, xy, heading, speed }
    }
}

pub fn kmh_to_ms(v: f64) -> f64 {
    v / 3.6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    /// Standard deviation of the per-second speed random walk (m/s²).
    pub speed_noise: f64,
    pub min_gap_m: f64,
    pub max_gap_m: f64,
    /// Gap the follower's speed controller steers towards.
    pub desired_gap_m: f64,
    /// Follower speed correction per metre of gap error (1/s).
    pub gap_gain: f64,
    /// Rate at which the follower relaxes to its target speed (1/s).
    pub follower_response: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            speed_min_kmh: 30.0,
            speed_max_kmh: 40.0,
            speed_noise: 0.3,
            min_gap_m: 5.0,
            max_gap_m: 60.0,
            desired_gap_m: 15.0,
            gap_gain: 0.2,
            follower_response: 1.0,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_min_kmh > 0.0 && self.speed_min_kmh <= self.speed_max_kmh) {
            return Err(Error::config("mobility speed bounds must satisfy 0 < min <= max"));
        }
        if !(self.min_gap_m >= 0.0 && self.min_gap_m < self.max_gap_m) {
            return Err(Error::config("mobility gaps must satisfy 0 <= min_gap_m < max_gap_m"));
        }
        if self.speed_noise < 0.0 || self.gap_gain < 0.0 || self.follower_response < 0.0 {
            return Err(Error::config("mobility noise and gains must be non-negative"));
        }
        Ok(())
    }

    pub fn speed_bounds(&self) -> (f64, f64) {
        (kmh_to_ms(self.speed_min_kmh), kmh_to_ms(self.speed_max_kmh))
    }
}

/// Advances both vehicles by one tick.
///
/// Each vehicle moves `speed·dt` along the centerline, except that the
/// follower is held back to keep `min_gap_m` and the leader is held back to
/// keep `max_gap_m`. Speeds for the next tick then follow a clipped random
/// walk; the follower additionally tracks the desired gap.
pub fn step_vehicles<R: Rng + ?Sized>(
    track: &Track,
    leader: &VehicleState,
    follower: &VehicleState,
    dt: f64,
    rng: &mut R,
    cfg: &MobilityConfig,
) -> Result<(VehicleState, VehicleState)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::contract(format!("step_vehicles requires dt > 0, got {dt}")));
    }
    let gap = track.gap(leader.arc_position, follower.arc_position);
    let mut leader_adv = leader.speed * dt;
    let mut follower_adv = follower.speed * dt;
    if gap + leader_adv - follower_adv < cfg.min_gap_m {
        follower_adv = (gap + leader_adv - cfg.min_gap_m).max(0.0);
    }
    if gap + leader_adv - follower_adv > cfg.max_gap_m {
        leader_adv = (cfg.max_gap_m - gap + follower_adv).max(0.0);
    }
    let new_gap = gap + leader_adv - follower_adv;

    let (vmin, vmax) = cfg.speed_bounds();
    let noise_scale = cfg.speed_noise * dt.sqrt();
    let z_leader: f64 = StandardNormal.sample(rng);
    let z_follower: f64 = StandardNormal.sample(rng);

    let leader_speed = (leader_adv / dt + noise_scale * z_leader).clamp(vmin, vmax);
    let current = follower_adv / dt;
    let target = leader_speed + cfg.gap_gain * (new_gap - cfg.desired_gap_m);
    let follower_speed = (current
        + cfg.follower_response * dt * (target - current)
        + noise_scale * z_follower)
        .clamp(vmin, vmax);

    Ok((
        VehicleState::on_track(track, leader.arc_position + leader_adv, leader_speed),
        VehicleState::on_track(track, follower.arc_position + follower_adv, follower_speed),
    ))
}

/// Distance and the two frame-relative bearings between a transmitter and a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelGeometry {
    pub distance: f64,
    /// Direction of the receiver in the transmitter's heading frame.
    pub bearing_tx: f64,
    /// Direction of the transmitter in the receiver's heading frame.
    pub bearing_rx: f64,
}

pub fn relative_geometry(tx: &VehicleState, rx: &VehicleState) -> RelGeometry {
    let d = rx.xy - tx.xy;
    let distance = d.norm();
    if distance == 0.0 {
        return RelGeometry::default();
    }
    RelGeometry {
        distance,
        bearing_tx: wrap_angle(d.angle() - tx.heading),
        bearing_rx: wrap_angle((tx.xy - rx.xy).angle() - rx.heading),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn straight_vehicle(x: f64, y: f64, heading: f64) -> VehicleState {
        VehicleState { arc_position: 0.0, xy: Vec2::new(x, y), heading, speed: 10.0 }
    }

    /// Counts contiguous runs of polyline vertices whose discrete curvature
    /// exceeds half the hairpin curvature.
    fn count_sharp_turns(track: &Track, radius: f64) -> usize {
        let pts = track.points();
        let n = pts.len();
        let threshold = 0.5 / radius;
        let sharp: Vec<bool> = (0..n)
            .map(|i| {
                let a = pts[(i + n - 1) % n];
                let b = pts[i];
                let c = pts[(i + 1) % n];
                let turn = wrap_angle((c - b).angle() - (b - a).angle()).abs();
                let ds = 0.5 * ((b - a).norm() + (c - b).norm());
                turn / ds > threshold
            })
            .collect();
        (0..n).filter(|&i| sharp[i] && !sharp[(i + n - 1) % n]).count()
    }

    #[test]
    fn default_scenarios_have_expected_hairpins() {
        let cfg = GeometryConfig::default();
        let t1 = build_serpentine(Scenario::One, &cfg).unwrap();
        let t2 = build_serpentine(Scenario::Two, &cfg).unwrap();
        assert_eq!(t1.hairpin_count(), 3);
        assert_eq!(count_sharp_turns(&t1, cfg.hairpin_radius_m), 3);
        assert_eq!(t2.hairpin_count(), 9);
        assert_eq!(count_sharp_turns(&t2, cfg.hairpin_radius_m), 9);
    }

    #[test]
    fn track_invariants_hold() {
        let cfg = GeometryConfig::default();
        let track = build_serpentine(Scenario::One, &cfg).unwrap();
        for w in track.cumulative().windows(2) {
            assert!(w[1] > w[0]);
        }
        let pts = track.points();
        for i in 0..pts.len() {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            assert!((b - a).norm() > 0.0);
        }
        // Closed loop: the closing segment is no longer than the uniform spacing.
        let spacing = track.total_length() / pts.len() as f64;
        assert!((spacing - cfg.resolution_m).abs() < 0.01);
        assert!((pts[0] - pts[pts.len() - 1]).norm() <= spacing * 1.001);
        let max_kappa = (0..pts.len())
            .map(|i| {
                let n = pts.len();
                let (a, b, c) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
                wrap_angle((c - b).angle() - (b - a).angle()).abs() / (b - a).norm()
            })
            .fold(0.0, f64::max);
        assert!(max_kappa <= cfg.max_curvature, "max curvature {max_kappa}");
    }

    #[test]
    fn degenerate_geometry_is_rejected() {
        let cfg = GeometryConfig { hairpin_radius_m: 0.0, ..Default::default() };
        assert!(matches!(build_serpentine(Scenario::One, &cfg), Err(Error::Config(_))));
        let cfg = GeometryConfig { straight_length_m: -1.0, ..Default::default() };
        assert!(matches!(build_serpentine(Scenario::One, &cfg), Err(Error::Config(_))));
        let cfg = GeometryConfig { hairpins_scenario1: 4, ..Default::default() };
        assert!(matches!(build_serpentine(Scenario::One, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = GeometryConfig::default();
        let a = build_serpentine(Scenario::Two, &cfg).unwrap();
        let b = build_serpentine(Scenario::Two, &cfg).unwrap();
        let bits = |t: &Track| -> Vec<u64> {
            t.points().iter().flat_map(|p| [p.x.to_bits(), p.y.to_bits()]).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn unknown_scenario_is_config_error() {
        assert!(matches!(Scenario::from_id(3), Err(Error::Config(_))));
        assert_eq!(Scenario::from_id(2).unwrap(), Scenario::Two);
    }

    #[test]
    fn kinematics_on_straight() {
        let track = build_serpentine(Scenario::One, &GeometryConfig::default()).unwrap();
        let cfg = MobilityConfig::default();
        let leader = VehicleState::on_track(&track, 50.0, 10.0);
        let follower = VehicleState::on_track(&track, 30.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (l, f) = step_vehicles(&track, &leader, &follower, 0.1, &mut rng, &cfg).unwrap();
        assert!((l.arc_position - 51.0).abs() <= 1e-6);
        assert!((f.arc_position - 31.0).abs() <= 1e-6);
        assert!((l.xy.x - 51.0).abs() <= 1e-6 && l.xy.y.abs() <= 1e-9);
    }

    #[test]
    fn minimum_gap_is_enforced() {
        let track = build_serpentine(Scenario::One, &GeometryConfig::default()).unwrap();
        let cfg = MobilityConfig { min_gap_m: 0.5, ..Default::default() };
        let leader = VehicleState::on_track(&track, 10.5, 8.5);
        let follower = VehicleState::on_track(&track, 10.0, 11.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (l, f) = step_vehicles(&track, &leader, &follower, 0.1, &mut rng, &cfg).unwrap();
        assert!(track.gap(l.arc_position, f.arc_position) >= 0.5 - 1e-12);
    }

    #[test]
    fn non_positive_dt_is_rejected() {
        let track = build_serpentine(Scenario::One, &GeometryConfig::default()).unwrap();
        let v = VehicleState::on_track(&track, 0.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let res = step_vehicles(&track, &v, &v, 0.0, &mut rng, &MobilityConfig::default());
        assert!(matches!(res, Err(Error::Contract(_))));
    }

    #[test]
    fn trajectories_are_seed_deterministic_and_wrap() {
        let track = build_serpentine(Scenario::One, &GeometryConfig::default()).unwrap();
        let cfg = MobilityConfig::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut l = VehicleState::on_track(&track, 15.0, 10.0);
            let mut f = VehicleState::on_track(&track, 0.0, 10.0);
            let mut out = Vec::new();
            for _ in 0..4000 {
                let (nl, nf) = step_vehicles(&track, &l, &f, 0.1, &mut rng, &cfg).unwrap();
                l = nl;
                f = nf;
                let g = track.gap(l.arc_position, f.arc_position);
                assert!(g >= cfg.min_gap_m - 1e-9 && g <= cfg.max_gap_m + 1e-9, "gap {g}");
                assert!(l.arc_position < track.total_length());
                out.push((l.arc_position.to_bits(), f.arc_position.to_bits(), f.speed.to_bits()));
            }
            out
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn geometry_examples() {
        let tx = straight_vehicle(0.0, 0.0, 0.0);
        let rx = straight_vehicle(10.0, 0.0, 0.0);
        let g = relative_geometry(&tx, &rx);
        assert_eq!(g.distance, 10.0);
        assert_eq!(g.bearing_tx, 0.0);
        assert!((g.bearing_rx - PI).abs() < 1e-15);

        let left = straight_vehicle(0.0, 5.0, 0.0);
        let g = relative_geometry(&tx, &left);
        assert!((g.bearing_tx - PI / 2.0).abs() < 1e-15);

        let g = relative_geometry(&tx, &tx);
        assert_eq!(g, RelGeometry { distance: 0.0, bearing_tx: 0.0, bearing_rx: 0.0 });
    }

    #[test]
    fn wrap_boundaries() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI + 1e-9) - (-PI + 1e-9)).abs() < 1e-15);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_bearings_wrapped(
            x1 in -500.0..500.0f64, y1 in -500.0..500.0f64, h1 in -10.0..10.0f64,
            x2 in -500.0..500.0f64, y2 in -500.0..500.0f64, h2 in -10.0..10.0f64,
        ) {
            let a = straight_vehicle(x1, y1, h1);
            let b = straight_vehicle(x2, y2, h2);
            let ab = relative_geometry(&a, &b);
            let ba = relative_geometry(&b, &a);
            prop_assert_eq!(ab.distance, ba.distance);
            for g in [ab, ba] {
                prop_assert!(g.distance >= 0.0);
                prop_assert!(g.bearing_tx > -PI && g.bearing_tx <= PI);
                prop_assert!(g.bearing_rx > -PI && g.bearing_rx <= PI);
            }
        }

        #[test]
        fn wrap_range(a in -100.0..100.0f64) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((a - w) / (2.0 * PI)).round() * 2.0 * PI - (a - w) < 1e-9);
        }
    }
}

//! 2-D arena, obstacle occlusion and panoramic view construction.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::types::{LandmarkId, PanoramicView, SECTOR_COUNT, SECTOR_WIDTH_DEG};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Position in meters and heading in radians, `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            x,
            y,
            heading: heading.rem_euclid(TAU),
        }
    }

    pub fn at(p: Point) -> Self {
        Pose::new(p.x, p.y, 0.0)
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl From<[f64; 3]> for Circle {
    fn from([x, y, r]: [f64; 3]) -> Self {
        Circle {
            center: Point::new(x, y),
            radius: r,
        }
    }
}

impl From<Circle> for [f64; 3] {
    fn from(c: Circle) -> Self {
        [c.center.x, c.center.y, c.radius]
    }
}

impl Circle {
    /// True when the segment `a→b` passes strictly inside the circle.
    pub fn blocks(&self, a: Point, b: Point) -> bool {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((self.center.x - a.x) * dx + (self.center.y - a.y) * dy) / len2).clamp(0.0, 1.0)
        };
        let closest = Point::new(a.x + t * dx, a.y + t * dy);
        closest.distance(self.center) < self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Arena {
    pub fn contains(&self, p: Point) -> bool {
        p.x.is_finite() && p.y.is_finite() && (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub arena: Arena,
    pub landmarks: BTreeMap<LandmarkId, Point>,
    #[serde(default)]
    pub obstacles: Vec<Circle>,
    pub goal_landmark: LandmarkId,
    pub sensor_range: f64,
}

impl World {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.arena.width > 0.0 && self.arena.height > 0.0) {
            return Err("arena dimensions must be positive".into());
        }
        if !(self.sensor_range.is_finite() && self.sensor_range > 0.0) {
            return Err("sensor_range must be a positive number".into());
        }
        for (id, p) in &self.landmarks {
            if !self.arena.contains(*p) {
                return Err(format!("landmark {id} lies outside the arena"));
            }
        }
        for (i, c) in self.obstacles.iter().enumerate() {
            if !self.arena.contains(c.center) || c.radius.is_nan() || c.radius < 0.0 {
                return Err(format!("obstacle {i} is outside the arena or has a bad radius"));
            }
        }
        if !self.landmarks.contains_key(&self.goal_landmark) {
            return Err(format!("goal landmark {} is not a landmark", self.goal_landmark));
        }
        Ok(())
    }

    pub fn position(&self, id: &LandmarkId) -> Option<Point> {
        self.landmarks.get(id).copied()
    }

    pub fn occluded(&self, from: Point, to: Point) -> bool {
        self.obstacles.iter().any(|c| c.blocks(from, to))
    }
}

/// World-frame bearing from `from` to `to`, in degrees `[0, 360)`.
pub fn bearing_deg(from: Point, to: Point) -> f64 {
    let deg = (to.y - from.y).atan2(to.x - from.x).to_degrees();
    let deg = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative angles
    if deg >= 360.0 {
        0.0
    } else {
        deg
    }
}

pub fn sector_of(bearing_deg: f64) -> usize {
    ((bearing_deg / SECTOR_WIDTH_DEG).floor() as usize).min(SECTOR_COUNT - 1)
}

/// Landmarks within sensor range and not hidden behind an obstacle, binned
/// by world-frame bearing into 60° sectors.
pub fn compute_view(world: &World, pose: &Pose) -> PanoramicView {
    let here = pose.point();
    let mut view = PanoramicView::empty();
    for (id, &p) in &world.landmarks {
        if here.distance(p) <= world.sensor_range && !world.occluded(here, p) {
            view.insert(sector_of(bearing_deg(here, p)), id.clone());
        }
    }
    view
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(s: &str) -> LandmarkId {
        LandmarkId::new(s).unwrap()
    }

    fn world(landmarks: &[(&str, f64, f64)], obstacles: Vec<Circle>) -> World {
        World {
            arena: Arena {
                width: 100.0,
                height: 100.0,
            },
            landmarks: landmarks.iter().map(|(id, x, y)| (lm(id), Point::new(*x, *y))).collect(),
            obstacles,
            goal_landmark: lm(landmarks[0].0),
            sensor_range: 10.0,
        }
    }

    #[test]
    fn out_of_range_landmark_is_absent() {
        let w = world(&[("NEAR", 60.0, 50.0), ("FAR", 61.0, 50.0)], vec![]);
        let v = compute_view(&w, &Pose::new(50.0, 50.0, 0.0));
        assert!(v.contains(&lm("NEAR")));
        assert!(!v.contains(&lm("FAR")));
    }

    #[test]
    fn east_is_sector_zero_north_is_sector_one() {
        let w = world(&[("E", 55.0, 50.0), ("N", 50.0, 55.0), ("S", 50.0, 45.0)], vec![]);
        let v = compute_view(&w, &Pose::new(50.0, 50.0, 1.0));
        assert!(v.sectors()[0].contains(&lm("E")));
        assert!(v.sectors()[1].contains(&lm("N")));
        // 270° → ⌊270/60⌋ = 4
        assert!(v.sectors()[4].contains(&lm("S")));
    }

    #[test]
    fn heading_does_not_rotate_sectors() {
        let w = world(&[("E", 55.0, 50.0)], vec![]);
        for h in [0.0, 1.0, 3.0, 6.0] {
            assert!(compute_view(&w, &Pose::new(50.0, 50.0, h)).sectors()[0].contains(&lm("E")));
        }
    }

    /// Oracle: sample the open segment densely and test point-in-disc.
    fn sampled_blocked(a: Point, b: Point, c: &Circle) -> bool {
        (1..10_000).any(|i| {
            let t = i as f64 / 10_000.0;
            Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)).distance(c.center) < c.radius
        })
    }

    #[test]
    fn obstacle_on_sight_line_hides_landmark() {
        let c = Circle::from([55.0, 50.0, 1.0]);
        let w = world(&[("HIDDEN", 58.0, 50.0), ("CLEAR", 58.0, 53.0)], vec![c]);
        let v = compute_view(&w, &Pose::new(50.0, 50.0, 0.0));
        assert!(!v.contains(&lm("HIDDEN")));
        assert!(v.contains(&lm("CLEAR")));
        let here = Point::new(50.0, 50.0);
        assert_eq!(c.blocks(here, Point::new(58.0, 50.0)), sampled_blocked(here, Point::new(58.0, 50.0), &c));
        assert_eq!(c.blocks(here, Point::new(58.0, 53.0)), sampled_blocked(here, Point::new(58.0, 53.0), &c));
    }

    #[test]
    fn segment_test_agrees_with_sampling_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut disagreements = 0;
        for _ in 0..2000 {
            let a = Point::new(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0));
            let b = Point::new(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0));
            let c = Circle::from([rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0), rng.gen_range(0.1..4.0)]);
            if c.blocks(a, b) != sampled_blocked(a, b, &c) {
                disagreements += 1;
            }
        }
        // sampling misses only grazing contacts thinner than the sample step
        assert!(disagreements <= 2, "{disagreements} disagreements");
    }

    #[test]
    fn validation_catches_bad_worlds() {
        let mut w = world(&[("G", 1.0, 1.0)], vec![]);
        assert_eq!(w.validate(), Ok(()));
        w.goal_landmark = lm("NOPE");
        assert!(w.validate().is_err());
        let mut w = world(&[("G", 101.0, 1.0)], vec![]);
        assert!(w.validate().unwrap_err().contains("outside"));
        w.landmarks.clear();
        w.landmarks.insert(lm("G"), Point::new(1.0, 1.0));
        w.sensor_range = -1.0;
        assert!(w.validate().is_err());
    }

    #[test]
    fn world_json_shape() {
        let json = r#"{"arena":{"width":10,"height":5},"landmarks":{"G":[1,2]},
            "obstacles":[[3,3,1]],"goal_landmark":"G","sensor_range":4}"#;
        let w: World = serde_json::from_str(json).unwrap();
        assert_eq!(w.obstacles[0].radius, 1.0);
        assert_eq!(w.landmarks[&lm("G")], Point::new(1.0, 2.0));
    }
}

//! Indoor scene geometry and line-of-sight predicates.
//!
//! Obstacles are z-invariant prisms, so every blockage question is answered
//! on the floor plan. Interiors are open sets: a segment that only grazes a
//! circle or touches a wall endpoint is not blocked.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

/// Tolerance used by every intersection predicate, in meters.
pub const EPS_GEO: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("point ({x}, {y}) lies inside obstacle {index}")]
    InsideObstacle { x: f64, y: f64, index: usize },
    #[error("point ({x}, {y}) is not on the room boundary")]
    NotOnBoundary { x: f64, y: f64 },
    #[error("point ({x}, {y}) is outside the room")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn lift(self, z: f64) -> Point3 {
        Point3::new(self.x, self.y, z)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Self) -> Self {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Self) -> Self {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Self {
        Point2::new(self.x * s, self.y * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn xy(self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Plane an antenna array or RIS is laid out in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Xy,
    Yz,
    Xz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Obstacle {
    Circle {
        center: Point2,
        radius: f64,
    },
    /// Zero-thickness wall; `angle` is measured counter-clockwise from the x-axis.
    Wall {
        center: Point2,
        length: f64,
        angle: f64,
    },
}

impl Obstacle {
    pub fn circle(x: f64, y: f64, radius: f64) -> Self {
        Obstacle::Circle { center: Point2::new(x, y), radius }
    }

    pub fn wall(x: f64, y: f64, length: f64, angle: f64) -> Self {
        Obstacle::Wall { center: Point2::new(x, y), length, angle }
    }

    /// Wall between two endpoints.
    pub fn wall_between(a: Point2, b: Point2) -> Self {
        let d = b - a;
        let mut angle = d.y.atan2(d.x);
        if angle <= 0.0 {
            angle += PI;
        }
        let c = (a + b) * 0.5;
        Obstacle::Wall { center: c, length: d.norm(), angle }
    }

    /// Endpoints of a wall obstacle.
    pub fn wall_endpoints(&self) -> Option<(Point2, Point2)> {
        match *self {
            Obstacle::Wall { center, length, angle } => {
                let half = Point2::new(angle.cos(), angle.sin()) * (0.5 * length);
                Some((center - half, center + half))
            }
            Obstacle::Circle { .. } => None,
        }
    }

    /// Strict interior membership. Walls have no interior.
    pub fn contains(&self, p: Point2) -> bool {
        match *self {
            Obstacle::Circle { center, radius } => p.distance(center) < radius - EPS_GEO,
            Obstacle::Wall { .. } => false,
        }
    }

    /// True iff the open segment `(a, b)` meets the obstacle interior.
    pub fn blocks_segment(&self, a: Point2, b: Point2) -> bool {
        match *self {
            Obstacle::Circle { center, radius } => {
                let d = b - a;
                let len2 = d.dot(d);
                if len2 <= EPS_GEO * EPS_GEO {
                    return false;
                }
                let t = ((center - a).dot(d) / len2).clamp(0.0, 1.0);
                let closest = a + d * t;
                closest.distance(center) < radius - EPS_GEO
            }
            Obstacle::Wall { .. } => {
                let (p, q) = self.wall_endpoints().expect("wall");
                segments_cross(a, b, p, q)
            }
        }
    }

    /// Axis-aligned bounding box `(min, max)` of the footprint.
    pub fn bounding_box(&self) -> (Point2, Point2) {
        match *self {
            Obstacle::Circle { center, radius } => {
                (Point2::new(center.x - radius, center.y - radius), Point2::new(center.x + radius, center.y + radius))
            }
            Obstacle::Wall { .. } => {
                let (p, q) = self.wall_endpoints().expect("wall");
                (Point2::new(p.x.min(q.x), p.y.min(q.y)), Point2::new(p.x.max(q.x), p.y.max(q.y)))
            }
        }
    }

    /// Distance from `p` to the obstacle footprint (0 inside a circle).
    pub fn distance_to(&self, p: Point2) -> f64 {
        match *self {
            Obstacle::Circle { center, radius } => (p.distance(center) - radius).max(0.0),
            Obstacle::Wall { .. } => {
                let (a, b) = self.wall_endpoints().expect("wall");
                point_segment_distance(p, a, b)
            }
        }
    }
}

/// Signed distance of `p` from the directed line through `a` and `b`.
fn side(a: Point2, b: Point2, p: Point2) -> f64 {
    let d = b - a;
    let len = d.norm();
    if len == 0.0 {
        return 0.0;
    }
    d.cross(p - a) / len
}

/// Proper crossing of segments `ab` and `pq`; touching or collinear contact
/// does not count.
pub fn segments_cross(a: Point2, b: Point2, p: Point2, q: Point2) -> bool {
    if a.distance(b) <= EPS_GEO || p.distance(q) <= EPS_GEO {
        return false;
    }
    let s1 = side(a, b, p);
    let s2 = side(a, b, q);
    if s1.abs() <= EPS_GEO || s2.abs() <= EPS_GEO || s1.signum() == s2.signum() {
        return false;
    }
    let s3 = side(p, q, a);
    let s4 = side(p, q, b);
    !(s3.abs() <= EPS_GEO || s4.abs() <= EPS_GEO || s3.signum() == s4.signum())
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.distance(a + d * t)
}

/// One of the four side walls of the room, listed clockwise starting at the
/// origin corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryWall {
    /// x = 0, running from (0, 0) to (0, Sy).
    West,
    /// y = Sy, running from (0, Sy) to (Sx, Sy).
    North,
    /// x = Sx, running from (Sx, Sy) to (Sx, 0).
    East,
    /// y = 0, running from (Sx, 0) back to (0, 0).
    South,
}

impl BoundaryWall {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Plane of an RIS mounted on this wall.
    pub fn ris_plane(self) -> Plane {
        match self {
            BoundaryWall::West | BoundaryWall::East => Plane::Yz,
            BoundaryWall::North | BoundaryWall::South => Plane::Xz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomBounds {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl RoomBounds {
    pub fn perimeter(&self) -> f64 {
        2.0 * (self.x + self.y)
    }

    pub fn floor_area(&self) -> f64 {
        self.x * self.y
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= -EPS_GEO && p.x <= self.x + EPS_GEO && p.y >= -EPS_GEO && p.y <= self.y + EPS_GEO
    }

    fn wall_length(&self, wall: BoundaryWall) -> f64 {
        match wall {
            BoundaryWall::West | BoundaryWall::East => self.y,
            BoundaryWall::North | BoundaryWall::South => self.x,
        }
    }

    /// Wall a boundary point belongs to. Corners go to the wall that starts
    /// there in clockwise order.
    pub fn wall_of(&self, p: Point2) -> Option<BoundaryWall> {
        if !self.contains(p) {
            return None;
        }
        let on_w = p.x.abs() <= EPS_GEO;
        let on_n = (p.y - self.y).abs() <= EPS_GEO;
        let on_e = (p.x - self.x).abs() <= EPS_GEO;
        let on_s = p.y.abs() <= EPS_GEO;
        match (on_w, on_n, on_e, on_s) {
            (true, true, _, _) => Some(BoundaryWall::North),
            (_, true, true, _) => Some(BoundaryWall::East),
            (_, _, true, true) => Some(BoundaryWall::South),
            (true, _, _, true) => Some(BoundaryWall::West),
            (true, _, _, _) => Some(BoundaryWall::West),
            (_, true, _, _) => Some(BoundaryWall::North),
            (_, _, true, _) => Some(BoundaryWall::East),
            (_, _, _, true) => Some(BoundaryWall::South),
            _ => None,
        }
    }

    /// Clockwise arc length from (0, 0) to a boundary point.
    pub fn perimeter_position(&self, p: Point2) -> Option<f64> {
        let wall = self.wall_of(p)?;
        Some(match wall {
            BoundaryWall::West => p.y.clamp(0.0, self.y),
            BoundaryWall::North => self.y + p.x.clamp(0.0, self.x),
            BoundaryWall::East => self.y + self.x + (self.y - p.y).clamp(0.0, self.y),
            BoundaryWall::South => 2.0 * self.y + self.x + (self.x - p.x).clamp(0.0, self.x),
        })
    }

    /// Boundary point at clockwise arc length `s` (taken modulo the perimeter).
    pub fn point_at_perimeter(&self, s: f64) -> (Point2, BoundaryWall) {
        let s = s.rem_euclid(self.perimeter());
        if s < self.y {
            (Point2::new(0.0, s), BoundaryWall::West)
        } else if s < self.y + self.x {
            (Point2::new(s - self.y, self.y), BoundaryWall::North)
        } else if s < 2.0 * self.y + self.x {
            (Point2::new(self.x, self.y - (s - self.y - self.x)), BoundaryWall::East)
        } else {
            (Point2::new(self.x - (s - 2.0 * self.y - self.x), 0.0), BoundaryWall::South)
        }
    }

    /// First boundary point hit by the ray from an interior `origin` along `dir`.
    pub fn ray_exit(&self, origin: Point2, dir: Point2) -> Point2 {
        let tx = if dir.x > 0.0 {
            (self.x - origin.x) / dir.x
        } else if dir.x < 0.0 {
            -origin.x / dir.x
        } else {
            f64::INFINITY
        };
        let ty = if dir.y > 0.0 {
            (self.y - origin.y) / dir.y
        } else if dir.y < 0.0 {
            -origin.y / dir.y
        } else {
            f64::INFINITY
        };
        let t = tx.min(ty);
        let mut p = origin + dir * t;
        // Snap onto the wall(s) actually hit so the point is exactly on the boundary.
        if (tx - t).abs() <= EPS_GEO * t.max(1.0) {
            p.x = if dir.x > 0.0 { self.x } else { 0.0 };
        }
        if (ty - t).abs() <= EPS_GEO * t.max(1.0) {
            p.y = if dir.y > 0.0 { self.y } else { 0.0 };
        }
        p.x = p.x.clamp(0.0, self.x);
        p.y = p.y.clamp(0.0, self.y);
        p
    }
}

/// The room, the base station and the obstacles. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bounds: RoomBounds,
    pub bs_position: Point3,
    pub bs_plane: Plane,
    pub obstacles: Vec<Obstacle>,
    /// Side length of each RIS along its wall, in meters.
    pub ris_length: f64,
    /// Number of points sampled along an RIS footprint for two-hop LoS.
    pub footprint_samples: usize,
}

impl Scene {
    pub fn new(
        bounds: RoomBounds,
        bs_position: Point3,
        obstacles: Vec<Obstacle>,
        ris_length: f64,
    ) -> Result<Self, SceneError> {
        let scene = Scene { bounds, bs_position, bs_plane: Plane::Xy, obstacles, ris_length, footprint_samples: 5 };
        scene.validate()?;
        Ok(scene)
    }

    /// Empty 10 x 10 x 3 m room with the BS centered on the ceiling.
    pub fn default_room() -> Self {
        Scene::new(RoomBounds { x: 10.0, y: 10.0, z: 3.0 }, Point3::new(5.0, 5.0, 3.0), Vec::new(), 0.5)
            .expect("default room is valid")
    }

    pub fn with_obstacles(mut self, obstacles: Vec<Obstacle>) -> Result<Self, SceneError> {
        self.obstacles = obstacles;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let b = &self.bounds;
        if !(b.x > 0.0 && b.y > 0.0 && b.z > 0.0 && b.x.is_finite() && b.y.is_finite()) {
            return Err(SceneError::Invalid("room dimensions must be positive".into()));
        }
        let bs = self.bs_position;
        if !b.contains(bs.xy()) || bs.z < -EPS_GEO || bs.z > b.z + EPS_GEO {
            return Err(SceneError::Invalid("BS outside the room".into()));
        }
        if !(self.ris_length > 0.0 && self.ris_length <= b.x.min(b.y)) {
            return Err(SceneError::Invalid("RIS length must be positive and fit on a wall".into()));
        }
        if self.footprint_samples == 0 {
            return Err(SceneError::Invalid("footprint sample count must be at least 1".into()));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            match *o {
                Obstacle::Circle { center, radius } => {
                    if !(radius > 0.0 && center.x.is_finite() && center.y.is_finite()) {
                        return Err(SceneError::Invalid(format!("obstacle {i}: bad circle")));
                    }
                }
                Obstacle::Wall { center, length, angle } => {
                    if !(length > 0.0 && angle.is_finite() && center.x.is_finite() && center.y.is_finite()) {
                        return Err(SceneError::Invalid(format!("obstacle {i}: bad wall")));
                    }
                }
            }
            let (lo, hi) = o.bounding_box();
            if !b.contains(lo) || !b.contains(hi) {
                return Err(SceneError::Invalid(format!("obstacle {i} extends outside the room")));
            }
        }
        Ok(())
    }

    pub fn bs_2d(&self) -> Point2 {
        self.bs_position.xy()
    }

    /// Index of the first obstacle whose interior contains `p`.
    pub fn obstacle_containing(&self, p: Point2) -> Option<usize> {
        self.obstacles.iter().position(|o| o.contains(p))
    }

    pub fn is_occupied(&self, p: Point2) -> bool {
        self.obstacle_containing(p).is_some()
    }

    pub fn segment_blocked(&self, a: Point2, b: Point2, ignore: Option<usize>) -> bool {
        self.obstacles.iter().enumerate().any(|(i, o)| Some(i) != ignore && o.blocks_segment(a, b))
    }

    fn check_free(&self, p: Point2) -> Result<(), SceneError> {
        if let Some(index) = self.obstacle_containing(p) {
            return Err(SceneError::InsideObstacle { x: p.x, y: p.y, index });
        }
        Ok(())
    }

    pub fn has_direct_los(&self, p: Point2) -> Result<bool, SceneError> {
        self.check_free(p)?;
        Ok(!self.segment_blocked(self.bs_2d(), p, None))
    }

    /// Segment occupied by an RIS centered at boundary point `q`, shifted
    /// along the wall if it would run past a corner.
    pub fn ris_footprint(&self, q: Point2) -> Result<(Point2, Point2), SceneError> {
        let wall = self.bounds.wall_of(q).ok_or(SceneError::NotOnBoundary { x: q.x, y: q.y })?;
        let half = 0.5 * self.ris_length;
        let len = self.bounds.wall_length(wall);
        let along = |t: f64| -> Point2 {
            match wall {
                BoundaryWall::West => Point2::new(0.0, t),
                BoundaryWall::East => Point2::new(self.bounds.x, t),
                BoundaryWall::North => Point2::new(t, self.bounds.y),
                BoundaryWall::South => Point2::new(t, 0.0),
            }
        };
        let coord = match wall {
            BoundaryWall::West | BoundaryWall::East => q.y,
            BoundaryWall::North | BoundaryWall::South => q.x,
        };
        let c = coord.clamp(half, len - half);
        Ok((along(c - half), along(c + half)))
    }

    /// Points on the RIS footprint used for two-hop LoS: evenly spaced from
    /// end to end, plus the center when the count is even.
    pub fn footprint_sample_points(&self, q: Point2) -> Result<Vec<Point2>, SceneError> {
        let (a, b) = self.ris_footprint(q)?;
        let n = self.footprint_samples;
        let mid = (a + b) * 0.5;
        if n == 1 {
            return Ok(vec![mid]);
        }
        let mut pts: Vec<Point2> = (0..n).map(|i| a + (b - a) * (i as f64 / (n - 1) as f64)).collect();
        if n.is_multiple_of(2) {
            pts.insert(n / 2, mid);
        }
        Ok(pts)
    }

    /// True iff some point of the RIS at `q` sees both the BS and `p`.
    pub fn has_ris_los(&self, q: Point2, p: Point2) -> Result<bool, SceneError> {
        let bs = self.bs_2d();
        Ok(self
            .footprint_sample_points(q)?
            .into_iter()
            .any(|r| !self.segment_blocked(bs, r, None) && !self.segment_blocked(r, p, None)))
    }
}

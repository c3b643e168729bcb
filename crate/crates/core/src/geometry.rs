//! Obstacle primitives, signed clearance queries and union-preserving box
//! subdivision.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::math::sqrt;

pub type Point3 = Vector3<f64>;

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Axis-aligned box in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    /// Builds a box, rejecting non-finite coordinates and inverted extents.
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        let aabb = Self { min, max };
        aabb.validate("box")?;
        Ok(aabb)
    }

    /// Checks the box invariants, naming the primitive as `what` in errors.
    pub fn validate(&self, what: &str) -> Result<()> {
        for axis in 0..3 {
            let (lo, hi) = (self.min[axis], self.max[axis]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(invalid(what, format!("non-finite coordinate on axis {}", AXIS_NAMES[axis])));
            }
            if lo > hi {
                return Err(invalid(
                    what,
                    format!("max < min on axis {} ({hi} < {lo})", AXIS_NAMES[axis]),
                ));
            }
        }
        Ok(())
    }

    pub fn extents(&self) -> Point3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }

    /// Closed-box membership.
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Closest point of the closed box to `p`.
    pub fn closest_point(&self, p: &Point3) -> Point3 {
        Point3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    fn longest_axis(&self) -> usize {
        let e = self.extents();
        let mut best = 0;
        for axis in 1..3 {
            if e[axis] > e[best] {
                best = axis;
            }
        }
        best
    }

    /// Splits at the midpoint of `axis`; both halves share the cut plane exactly.
    fn split(&self, axis: usize) -> (Aabb, Aabb) {
        let mid = 0.5 * (self.min[axis] + self.max[axis]);
        let mut low = *self;
        let mut high = *self;
        low.max[axis] = mid;
        high.min[axis] = mid;
        (low, high)
    }
}

/// Sphere in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Point3,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Point3, radius: f64) -> Result<Self> {
        let sphere = Self { center, radius };
        sphere.validate("sphere")?;
        Ok(sphere)
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(invalid(what, "non-finite center".into()));
        }
        if !self.radius.is_finite() || self.radius <= 0.0 {
            return Err(invalid(what, format!("radius must be positive, got {}", self.radius)));
        }
        Ok(())
    }
}

/// Obstacle set. An empty scene is free space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub name: String,
    pub boxes: Vec<Aabb>,
    pub spheres: Vec<Sphere>,
}

impl Scene {
    /// Validates every primitive; errors name the offending one, e.g. `boxes[3]`.
    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.boxes.iter().enumerate() {
            b.validate(&format!("boxes[{i}]"))?;
        }
        for (i, s) in self.spheres.iter().enumerate() {
            s.validate(&format!("spheres[{i}]"))?;
        }
        Ok(())
    }

    /// Number of environment primitives a single robot sphere is checked against.
    pub fn primitive_count(&self) -> usize {
        self.boxes.len() + self.spheres.len()
    }

    /// Clearance of `sphere` against primitive `index` (boxes first, then spheres).
    pub fn clearance_to(&self, index: usize, sphere: &Sphere) -> f64 {
        if index < self.boxes.len() {
            sphere_aabb_clearance(sphere, &self.boxes[index])
        } else {
            sphere_sphere_clearance(sphere, &self.spheres[index - self.boxes.len()])
        }
    }

    /// Point membership in the union of all primitives.
    pub fn contains_point(&self, p: &Point3) -> bool {
        self.boxes.iter().any(|b| b.contains(p))
            || self.spheres.iter().any(|s| (p - s.center).norm_squared() <= s.radius * s.radius)
    }
}

fn invalid(what: &str, reason: String) -> Error {
    Error::InvalidPrimitive { what: what.into(), reason }
}

/// Signed clearance between a sphere and a closed box: distance from the
/// sphere center to the box minus the radius. Negative means overlap.
pub fn sphere_aabb_clearance(s: &Sphere, b: &Aabb) -> f64 {
    let mut sq = 0.0;
    for i in 0..3 {
        let c = s.center[i];
        let d = if c < b.min[i] {
            b.min[i] - c
        } else if c > b.max[i] {
            c - b.max[i]
        } else {
            0.0
        };
        sq += d * d;
    }
    sqrt(sq) - s.radius
}

/// Signed clearance between two spheres.
pub fn sphere_sphere_clearance(a: &Sphere, b: &Sphere) -> f64 {
    (a.center - b.center).norm() - (a.radius + b.radius)
}

/// Replaces every box by `factor` boxes whose union is exactly the original.
///
/// Each box is refined greedily: the piece with the largest volume (lowest
/// position on ties) is cut at the midpoint of its longest axis (lowest axis
/// index on ties) until `factor` pieces exist. The two halves take the place
/// of the cut piece, so the pieces of one box stay contiguous and ordered.
/// Spheres pass through unchanged.
pub fn subdivide_scene(scene: &Scene, factor: usize) -> Result<Scene> {
    if factor == 0 {
        return Err(Error::InvalidParameter("subdivision factor must be at least 1".into()));
    }
    let mut boxes = Vec::with_capacity(scene.boxes.len() * factor);
    for b in &scene.boxes {
        boxes.extend(subdivide_box(b, factor));
    }
    Ok(Scene { name: scene.name.clone(), boxes, spheres: scene.spheres.clone() })
}

fn subdivide_box(b: &Aabb, factor: usize) -> Vec<Aabb> {
    let mut pieces = Vec::with_capacity(factor);
    pieces.push(*b);
    while pieces.len() < factor {
        let mut target = 0;
        for (i, p) in pieces.iter().enumerate().skip(1) {
            if p.volume() > pieces[target].volume() {
                target = i;
            }
        }
        let (low, high) = pieces[target].split(pieces[target].longest_axis());
        pieces[target] = low;
        pieces.insert(target + 1, high);
    }
    pieces
}

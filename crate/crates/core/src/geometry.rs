//! Polygonal mission spaces: feasibility, line of sight, visibility regions,
//! shadow (impact) segments and nearest-point projection onto the feasible
//! region.
//!
//! The outer boundary is a convex polygon; obstacles are simple polygons that
//! lie strictly inside it and do not touch one another. With that layout the
//! feasible region is always connected, so validating the layout is enough.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::QuadratureGrid;

/// Distance under which a point counts as lying on a polygon boundary.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// Shadow segments shorter than this are dropped.
pub const MIN_IMPACT_LENGTH: f64 = 1e-6;

/// Displacement applied to agents sitting on a non-differentiable configuration.
pub const NUDGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn dist_sq(self, o: Point) -> f64 {
        (self - o).norm_sq()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Sign-exact orientation of `c` relative to the directed line `a -> b`
/// (positive when counter-clockwise).
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    robust::orient2d(
        robust::Coord { x: a.x, y: a.y },
        robust::Coord { x: b.x, y: b.y },
        robust::Coord { x: c.x, y: c.y },
    )
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Closest point to `p` on the closed segment `a-b`.
pub fn closest_on_segment(p: Point, a: Point, b: Point) -> Point {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

/// True when the closed segments `a-b` and `p-q` share at least one point.
pub fn segments_touch(a: Point, b: Point, p: Point, q: Point) -> bool {
    let o1 = sign(orient(a, b, p));
    let o2 = sign(orient(a, b, q));
    let o3 = sign(orient(p, q, a));
    let o4 = sign(orient(p, q, b));
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    let on = |u: Point, v: Point, w: Point| {
        w.x >= u.x.min(v.x) && w.x <= u.x.max(v.x) && w.y >= u.y.min(v.y) && w.y <= u.y.max(v.y)
    };
    (o1 == 0 && on(a, b, p))
        || (o2 == 0 && on(a, b, q))
        || (o3 == 0 && on(p, q, a))
        || (o4 == 0 && on(p, q, b))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    fn of(points: &[Point]) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BBox { min, max }
    }

    fn overlaps(&self, lo: Point, hi: Point) -> bool {
        self.min.x <= hi.x && self.max.x >= lo.x && self.min.y <= hi.y && self.max.y >= lo.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// A simple polygon stored counter-clockwise without a repeated closing vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
    bbox: BBox,
}

impl Polygon {
    pub fn new(raw: Vec<Point>) -> Result<Self> {
        let mut vertices: Vec<Point> = Vec::with_capacity(raw.len());
        for p in raw {
            if !p.is_finite() {
                return Err(Error::InvalidSpace("non-finite vertex".into()));
            }
            if vertices.last() != Some(&p) {
                vertices.push(p);
            }
        }
        while vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::InvalidSpace(
                "polygon needs at least three distinct vertices".into(),
            ));
        }
        let area = signed_area(&vertices);
        if area == 0.0 {
            return Err(Error::InvalidSpace("polygon has zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let bbox = BBox::of(&vertices);
        Ok(Polygon { vertices, bbox })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            orient(
                self.vertices[i],
                self.vertices[(i + 1) % n],
                self.vertices[(i + 2) % n],
            ) >= 0.0
        })
    }

    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // adjacent edges may only share their common vertex
                    let (a, b) = edges[i];
                    let (p, q) = edges[j];
                    let shared = if j == i + 1 { b } else { a };
                    let other_end = if j == i + 1 { q } else { p };
                    let this_far = if j == i + 1 { a } else { b };
                    if orient(this_far, shared, other_end) == 0.0
                        && (other_end - shared).dot(this_far - shared) > 0.0
                    {
                        return false;
                    }
                    continue;
                }
                let (a, b) = edges[i];
                let (p, q) = edges[j];
                if segments_touch(a, b, p, q) {
                    return false;
                }
            }
        }
        true
    }

    /// Returns `(inside by crossing parity, squared distance to the boundary)`.
    fn locate(&self, p: Point) -> (bool, f64) {
        let mut inside = false;
        let mut best = f64::INFINITY;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            best = best.min(p.dist_sq(closest_on_segment(p, a, b)));
        }
        (inside, best)
    }

    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.locate(p).1.sqrt()
    }

    /// Closed containment: boundary points (within `BOUNDARY_EPS`) count as inside.
    pub fn contains_closed(&self, p: Point) -> bool {
        if p.x < self.bbox.min.x - BOUNDARY_EPS
            || p.x > self.bbox.max.x + BOUNDARY_EPS
            || p.y < self.bbox.min.y - BOUNDARY_EPS
            || p.y > self.bbox.max.y + BOUNDARY_EPS
        {
            return false;
        }
        let (inside, d2) = self.locate(p);
        inside || d2 <= BOUNDARY_EPS * BOUNDARY_EPS
    }

    /// Open containment: strictly inside and farther than `BOUNDARY_EPS` from the boundary.
    pub fn contains_strict(&self, p: Point) -> bool {
        if p.x <= self.bbox.min.x
            || p.x >= self.bbox.max.x
            || p.y <= self.bbox.min.y
            || p.y >= self.bbox.max.y
        {
            return false;
        }
        let (inside, d2) = self.locate(p);
        inside && d2 > BOUNDARY_EPS * BOUNDARY_EPS
    }

    /// Nearest boundary point, with the index of the edge it lies on.
    /// Ties keep the lowest edge index.
    pub fn nearest_boundary_point(&self, p: Point) -> (Point, usize, f64) {
        let mut best = (self.vertices[0], 0, f64::INFINITY);
        for (i, (a, b)) in self.edges().enumerate() {
            let c = closest_on_segment(p, a, b);
            let d = p.dist_sq(c);
            if d < best.2 {
                best = (c, i, d);
            }
        }
        (best.0, best.1, best.2.sqrt())
    }

    /// Does the segment `a-b` pass through the open interior? Endpoints are
    /// assumed not to lie strictly inside. Grazing contact (touching a vertex
    /// or running along an edge) does not count.
    fn segment_enters_interior(&self, a: Point, b: Point) -> bool {
        let lo = Point::new(a.x.min(b.x), a.y.min(b.y));
        let hi = Point::new(a.x.max(b.x), a.y.max(b.y));
        if !self.bbox.overlaps(lo, hi) {
            return false;
        }
        let ab = b - a;
        let mut ts: Vec<f64> = Vec::new();
        for (p, q) in self.edges() {
            let o1 = sign(orient(a, b, p));
            let o2 = sign(orient(a, b, q));
            if o1 * o2 > 0 {
                continue;
            }
            if o1 == 0 && o2 == 0 {
                let len_sq = ab.norm_sq();
                if len_sq == 0.0 {
                    continue;
                }
                let tp = (p - a).dot(ab) / len_sq;
                let tq = (q - a).dot(ab) / len_sq;
                let (t0, t1) = if tp < tq { (tp, tq) } else { (tq, tp) };
                if t1 < 0.0 || t0 > 1.0 {
                    continue;
                }
                ts.push(t0.clamp(0.0, 1.0));
                ts.push(t1.clamp(0.0, 1.0));
                continue;
            }
            let o3 = sign(orient(p, q, a));
            let o4 = sign(orient(p, q, b));
            if o3 * o4 > 0 {
                continue;
            }
            let pq = q - p;
            let denom = ab.cross(pq);
            if denom == 0.0 {
                continue;
            }
            let t = (p - a).cross(pq) / denom;
            ts.push(t.clamp(0.0, 1.0));
        }
        if ts.is_empty() {
            // no boundary contact: the segment is wholly inside or wholly
            // outside, and its endpoints are not inside
            return false;
        }
        ts.push(0.0);
        ts.push(1.0);
        ts.sort_by(|x, y| x.total_cmp(y));
        ts.windows(2).any(|w| {
            let (t0, t1) = (w[0], w[1]);
            t1 - t0 > 1e-12 && self.contains_strict(a + ab * (0.5 * (t0 + t1)))
        })
    }
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
}

/// Boundary piece of a visibility region cast by an occluding obstacle vertex.
///
/// Points on the segment are `vertex + direction * r` for `r` in `[0, length]`.
/// `normal` is the unit normal pointing from the shadow into the visible side,
/// `angle` the acute angle between the ray and the x-axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactSegment {
    pub vertex: Point,
    pub length: f64,
    pub angle: f64,
    pub normal: Point,
    pub anchor_distance: f64,
    pub direction: Point,
}

impl ImpactSegment {
    pub fn point_at(&self, r: f64) -> Point {
        self.vertex + self.direction * r
    }
}

/// Visible part of an agent's sensing disk, sampled on the quadrature grid.
#[derive(Clone, Debug)]
pub struct VisibilityRegion {
    pub anchor: Point,
    pub radius: f64,
    /// Grid node indices inside the region, in ascending order.
    pub nodes: Vec<u32>,
    /// Distance from the anchor to each node in `nodes`.
    pub distances: Vec<f64>,
    pub impact_segments: Vec<ImpactSegment>,
}

impl VisibilityRegion {
    /// Exact membership test for an arbitrary point.
    pub fn contains(&self, space: &MissionSpace, x: Point) -> bool {
        space.sees(self.anchor, self.radius, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MissionSpace {
    outer: Polygon,
    obstacles: Vec<Polygon>,
}

impl MissionSpace {
    pub fn new(outer: Vec<Point>, obstacles: Vec<Vec<Point>>) -> Result<Self> {
        let outer = Polygon::new(outer)?;
        if !outer.is_convex() {
            return Err(Error::InvalidSpace("outer polygon must be convex".into()));
        }
        let mut polys = Vec::with_capacity(obstacles.len());
        for (k, raw) in obstacles.into_iter().enumerate() {
            let poly = Polygon::new(raw)
                .map_err(|e| Error::InvalidSpace(format!("obstacle {k}: {e}")))?;
            if !poly.is_simple() {
                return Err(Error::InvalidSpace(format!(
                    "obstacle {k} is not a simple polygon"
                )));
            }
            for v in poly.vertices() {
                if !outer.contains_closed(*v) || outer.boundary_distance(*v) <= BOUNDARY_EPS {
                    return Err(Error::InvalidSpace(format!(
                        "obstacle {k} must lie strictly inside the outer polygon"
                    )));
                }
            }
            polys.push(poly);
        }
        for i in 0..polys.len() {
            for j in (i + 1)..polys.len() {
                let (a, b) = (&polys[i], &polys[j]);
                let crossing = a
                    .edges()
                    .any(|(p, q)| b.edges().any(|(r, s)| segments_touch(p, q, r, s)));
                let nested = b.contains_closed(a.vertices[0]) || a.contains_closed(b.vertices[0]);
                if crossing || nested {
                    return Err(Error::InvalidSpace(format!(
                        "obstacles {i} and {j} intersect or touch"
                    )));
                }
            }
        }
        Ok(MissionSpace {
            outer,
            obstacles: polys,
        })
    }

    pub fn blank(outer: Vec<Point>) -> Result<Self> {
        Self::new(outer, Vec::new())
    }

    pub fn outer(&self) -> &Polygon {
        &self.outer
    }

    pub fn obstacles(&self) -> &[Polygon] {
        &self.obstacles
    }

    pub fn bbox(&self) -> BBox {
        self.outer.bbox
    }

    pub fn is_feasible(&self, x: Point) -> bool {
        self.outer.contains_closed(x) && !self.obstacles.iter().any(|o| o.contains_strict(x))
    }

    /// Line of sight between two feasible points. Grazing contact with an
    /// obstacle counts as visible.
    pub fn line_of_sight(&self, a: Point, b: Point) -> Result<bool> {
        if !self.is_feasible(a) {
            return Err(Error::Infeasible(a));
        }
        if !self.is_feasible(b) {
            return Err(Error::Infeasible(b));
        }
        Ok(self.segment_clear(a, b))
    }

    /// Line of sight without the endpoint feasibility check.
    pub(crate) fn segment_clear(&self, a: Point, b: Point) -> bool {
        !self
            .obstacles
            .iter()
            .any(|o| o.segment_enters_interior(a, b))
    }

    fn segment_clear_among(&self, candidates: &[usize], a: Point, b: Point) -> bool {
        !candidates
            .iter()
            .any(|&k| self.obstacles[k].segment_enters_interior(a, b))
    }

    /// Obstacles whose bounding box meets the disk's bounding box.
    fn obstacles_near(&self, s: Point, radius: f64) -> Vec<usize> {
        let lo = Point::new(s.x - radius, s.y - radius);
        let hi = Point::new(s.x + radius, s.y + radius);
        (0..self.obstacles.len())
            .filter(|&k| self.obstacles[k].bbox.overlaps(lo, hi))
            .collect()
    }

    /// Is `x` in the visibility set of an agent at `s` with range `radius`?
    pub fn sees(&self, s: Point, radius: f64, x: Point) -> bool {
        s.dist_sq(x) <= radius * radius && self.is_feasible(x) && self.segment_clear(s, x)
    }

    pub fn visibility_region(
        &self,
        s: Point,
        radius: f64,
        grid: &QuadratureGrid,
    ) -> Result<VisibilityRegion> {
        let mut region = self.visibility_mask(s, radius, grid)?;
        region.impact_segments = self.extract_impact_segments(s, radius);
        Ok(region)
    }

    /// Visibility region without the shadow segments.
    pub fn visibility_mask(
        &self,
        s: Point,
        radius: f64,
        grid: &QuadratureGrid,
    ) -> Result<VisibilityRegion> {
        if !self.is_feasible(s) {
            return Err(Error::Infeasible(s));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sensing range must be positive, got {radius}"
            )));
        }
        let near = self.obstacles_near(s, radius);
        let r2 = radius * radius;
        let mut nodes = Vec::new();
        let mut distances = Vec::new();
        for k in grid.nodes_in_box(s, radius) {
            if !grid.in_feasible(k) {
                continue;
            }
            let x = grid.node(k);
            let d2 = s.dist_sq(x);
            if d2 > r2 {
                continue;
            }
            if self.segment_clear_among(&near, s, x) {
                nodes.push(k as u32);
                distances.push(d2.sqrt());
            }
        }
        Ok(VisibilityRegion {
            anchor: s,
            radius,
            nodes,
            distances,
            impact_segments: Vec::new(),
        })
    }

    /// Shadow segments of the visibility region of an agent at `s`.
    pub fn extract_impact_segments(&self, s: Point, radius: f64) -> Vec<ImpactSegment> {
        let mut out = Vec::new();
        for obs in &self.obstacles {
            let n = obs.vertices.len();
            for i in 0..n {
                let v = obs.vertices[i];
                let d = s.dist(v);
                if d <= 1e-12 || d > radius {
                    continue;
                }
                let prev = obs.vertices[(i + n - 1) % n];
                let next = obs.vertices[(i + 1) % n];
                let o1 = sign(orient(s, v, prev));
                let o2 = sign(orient(s, v, next));
                if o1 == 0 || o2 == 0 || o1 != o2 {
                    continue;
                }
                if !self.segment_clear(s, v) {
                    continue;
                }
                let u = (v - s) * (1.0 / d);
                let left = u.perp();
                // the shadow lies on the obstacle's side of the ray
                let normal = if o1 > 0 { -left } else { left };
                let reach = (radius - d).min(self.ray_exit(v, u));
                if reach < MIN_IMPACT_LENGTH {
                    continue;
                }
                out.push(ImpactSegment {
                    vertex: v,
                    length: reach,
                    angle: u.y.abs().atan2(u.x.abs()),
                    normal,
                    anchor_distance: d,
                    direction: u,
                });
            }
        }
        out
    }

    /// Distance along the ray `origin + dir * r`, `r > 0`, to the first
    /// obstacle edge or the outer boundary.
    fn ray_exit(&self, origin: Point, dir: Point) -> f64 {
        let mut best = f64::INFINITY;
        let mut hit = |p: Point, q: Point| {
            let pq = q - p;
            let denom = dir.cross(pq);
            if denom.abs() < 1e-15 {
                return;
            }
            let w = p - origin;
            let r = w.cross(pq) / denom;
            let tau = w.cross(dir) / denom;
            if r > 1e-9 && (-1e-12..=1.0 + 1e-12).contains(&tau) && r < best {
                best = r;
            }
        };
        for obs in &self.obstacles {
            for (p, q) in obs.edges() {
                if p == origin || q == origin {
                    continue;
                }
                hit(p, q);
            }
        }
        for (p, q) in self.outer.edges() {
            hit(p, q);
        }
        best
    }

    /// Nearest point of the feasible region. Ties go to the lowest obstacle
    /// index, then the lowest edge index.
    pub fn project_to_feasible(&self, x: Point) -> Point {
        if self.is_feasible(x) {
            return x;
        }
        if !self.outer.contains_closed(x) {
            return self.outer.nearest_boundary_point(x).0;
        }
        // strictly inside an obstacle; its boundary holds the nearest feasible point
        let mut best: Option<(Point, f64)> = None;
        for obs in &self.obstacles {
            if obs.contains_strict(x) {
                let (c, _, d) = obs.nearest_boundary_point(x);
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((c, d));
                }
            }
        }
        best.map_or(x, |(c, _)| c)
    }

    /// Moves `s` off non-differentiable configurations: contact with an
    /// obstacle or the outer boundary, and bitangent alignment of two
    /// occluding vertices.
    pub fn nudge_off_degenerate(&self, s: Point, radius: f64) -> Point {
        let mut s = s;
        for obs in &self.obstacles {
            let (c, edge, d) = obs.nearest_boundary_point(s);
            if d < NUDGE {
                let dir = if d > 1e-12 {
                    (s - c) * (1.0 / d)
                } else {
                    let (a, b) = obs.edges().nth(edge).expect("edge index in range");
                    let t = b - a;
                    // outward normal of a counter-clockwise polygon
                    Point::new(t.y, -t.x) * (1.0 / t.norm())
                };
                s = c + dir * NUDGE;
            }
        }
        let (c, _, d) = self.outer.nearest_boundary_point(s);
        if d < NUDGE {
            let centroid = self
                .outer
                .vertices
                .iter()
                .fold(Point::default(), |acc, &v| acc + v)
                * (1.0 / self.outer.vertices.len() as f64);
            let dir = centroid - c;
            s = c + dir * (NUDGE / dir.norm());
        }
        let segs = self.extract_impact_segments(s, radius);
        for (i, a) in segs.iter().enumerate() {
            for b in &segs[i + 1..] {
                if a.direction.cross(b.direction).abs() < 1e-9 && a.direction.dot(b.direction) > 0.0
                {
                    let moved = s + a.direction.perp() * NUDGE;
                    if self.is_feasible(moved) {
                        return moved;
                    }
                    return s - a.direction.perp() * NUDGE;
                }
            }
        }
        s
    }
}

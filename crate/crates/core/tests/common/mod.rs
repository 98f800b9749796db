//! Reference implementations used by the integration tests. Nothing here
//! calls into the library's geometry, quadrature or enumeration code.

#![allow(dead_code)]

use teamcov::geometry::Point;

/// `2π p0 ∫_0^δ e^{-λr} r dr` by composite Simpson on `m` panels.
pub fn kappa_simpson(p0: f64, lambda: f64, delta: f64, m: usize) -> f64 {
    let m = if m % 2 == 1 { m + 1 } else { m };
    let h = delta / m as f64;
    let f = |r: f64| (-lambda * r).exp() * r;
    let mut acc = f(0.0) + f(delta);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    2.0 * std::f64::consts::PI * p0 * acc * h / 3.0
}

pub fn conventional(n: usize) -> f64 {
    let mut v = 1.0;
    for _ in 0..n {
        v *= 1.0 - 1.0 / n as f64;
    }
    1.0 - v
}

/// Convex polygon, vertices stored counterclockwise.
#[derive(Clone, Debug)]
pub struct Convex {
    v: Vec<Point>,
    lo: Point,
    hi: Point,
}

impl Convex {
    pub fn new(mut v: Vec<Point>) -> Self {
        let n = v.len();
        let mut a = 0.0;
        for i in 0..n {
            let p = v[i];
            let q = v[(i + 1) % n];
            a += p.x * q.y - q.x * p.y;
        }
        if a < 0.0 {
            v.reverse();
        }
        let lo = Point::new(
            v.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
            v.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
        );
        let hi = Point::new(
            v.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
            v.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
        );
        Convex { v, lo, hi }
    }

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Convex::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn contains_open(&self, x: Point) -> bool {
        if x.x <= self.lo.x || x.x >= self.hi.x || x.y <= self.lo.y || x.y >= self.hi.y {
            return false;
        }
        let v = &self.v;
        (0..v.len()).all(|i| {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            (b.x - a.x) * (x.y - a.y) - (b.y - a.y) * (x.x - a.x) > 1e-12
        })
    }

    /// Cyrus-Beck clip: length of the part of segment `ab` inside the polygon.
    pub fn clipped_length(&self, a: Point, b: Point) -> f64 {
        if a.x.max(b.x) < self.lo.x
            || a.x.min(b.x) > self.hi.x
            || a.y.max(b.y) < self.lo.y
            || a.y.min(b.y) > self.hi.y
        {
            return 0.0;
        }
        let v = &self.v;
        let d = Point::new(b.x - a.x, b.y - a.y);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for i in 0..v.len() {
            let p = v[i];
            let q = v[(i + 1) % v.len()];
            // inward normal of a ccw edge
            let n = Point::new(-(q.y - p.y), q.x - p.x);
            let num = n.x * (a.x - p.x) + n.y * (a.y - p.y);
            let den = n.x * d.x + n.y * d.y;
            if den.abs() < 1e-15 {
                if num <= 0.0 {
                    return 0.0;
                }
                continue;
            }
            let t = -num / den;
            if den > 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
            if lo >= hi {
                return 0.0;
            }
        }
        (hi - lo) * (d.x * d.x + d.y * d.y).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct Sensor {
    pub p0: f64,
    pub lambda: f64,
    pub delta: f64,
}

/// Brute-force coverage field on midpoint nodes of a rectangle.
pub struct RefField {
    pub nodes: Vec<Point>,
    pub area: f64,
    pub obstacles: Vec<Convex>,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
}

impl RefField {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, cell: f64, obstacles: Vec<Convex>) -> Self {
        let nx = ((x1 - x0) / cell).round() as usize;
        let ny = ((y1 - y0) / cell).round() as usize;
        let mut nodes = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                nodes.push(Point::new(
                    x0 + (i as f64 + 0.5) * cell,
                    y0 + (j as f64 + 0.5) * cell,
                ));
            }
        }
        RefField {
            nodes,
            area: cell * cell,
            obstacles,
            origin: Point::new(x0, y0),
            cell,
            nx,
            ny,
        }
    }

    /// Indices of nodes in the axis-aligned square of half-width `r` at `s`.
    fn near(&self, s: Point, r: f64) -> impl Iterator<Item = usize> + '_ {
        let span = |c: f64, o: f64, n: usize| {
            let lo = (((c - r - o) / self.cell) - 0.5).floor().max(0.0) as usize;
            let hi = ((((c + r - o) / self.cell) - 0.5).ceil().max(0.0) as usize + 1).min(n);
            lo.min(n)..hi
        };
        let xs = span(s.x, self.origin.x, self.nx);
        let ys = span(s.y, self.origin.y, self.ny);
        let nx = self.nx;
        ys.flat_map(move |j| xs.clone().map(move |i| j * nx + i))
    }

    pub fn visible(&self, s: Point, x: Point) -> bool {
        self.obstacles
            .iter()
            .all(|o| !o.contains_open(x) && o.clipped_length(s, x) < 1e-9)
    }

    pub fn detect(&self, sensor: &Sensor, s: Point, x: Point) -> f64 {
        let d = ((x.x - s.x).powi(2) + (x.y - s.y).powi(2)).sqrt();
        if d > sensor.delta || !self.visible(s, x) {
            0.0
        } else {
            sensor.p0 * (-sensor.lambda * d).exp()
        }
    }

    /// Per-node miss factor `1 - t p̂` of one agent.
    pub fn miss_of(&self, sensor: &Sensor, s: Point, t: f64) -> Vec<f64> {
        let mut miss = vec![1.0; self.nodes.len()];
        for k in self.near(s, sensor.delta) {
            miss[k] = 1.0 - t * self.detect(sensor, s, self.nodes[k]);
        }
        miss
    }

    pub fn coverage(&self, agents: &[(Point, Sensor, f64)]) -> f64 {
        let mut miss = vec![1.0; self.nodes.len()];
        for (s, sensor, t) in agents {
            for (m, f) in miss.iter_mut().zip(self.miss_of(sensor, *s, *t)) {
                *m *= f;
            }
        }
        self.coverage_from(&miss)
    }

    pub fn coverage_from(&self, miss: &[f64]) -> f64 {
        miss.iter().map(|m| 1.0 - m).sum::<f64>() * self.area
    }

    /// Coverage with agent `(s, sensor, t)` added to a fixed miss product;
    /// only nodes within range are revisited.
    pub fn coverage_with(&self, base: &[f64], base_cov: f64, sensor: &Sensor, s: Point, t: f64) -> f64 {
        let mut delta = 0.0;
        for k in self.near(s, sensor.delta) {
            delta += base[k] * t * self.detect(sensor, s, self.nodes[k]);
        }
        base_cov + delta * self.area
    }
}

/// Largest value over every way of choosing `rank` distinct indices from
/// `0..n` and labelling them with classes drawn from `counts`.
pub fn brute_best(
    n: usize,
    counts: &[usize],
    value: &mut dyn FnMut(&[(usize, usize)]) -> f64,
) -> f64 {
    fn rec(
        start: usize,
        n: usize,
        left: &mut Vec<usize>,
        cur: &mut Vec<(usize, usize)>,
        value: &mut dyn FnMut(&[(usize, usize)]) -> f64,
        best: &mut f64,
    ) {
        if left.iter().all(|&c| c == 0) {
            let v = value(cur);
            if v > *best {
                *best = v;
            }
            return;
        }
        for j in start..n {
            for c in 0..left.len() {
                if left[c] == 0 {
                    continue;
                }
                left[c] -= 1;
                cur.push((j, c));
                rec(j + 1, n, left, cur, value, best);
                cur.pop();
                left[c] += 1;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(0, n, &mut counts.to_vec(), &mut Vec::new(), value, &mut best);
    best
}

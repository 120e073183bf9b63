//! Lattice primitives shared by the growth models.

use serde::{Deserialize, Serialize};

use crate::rng::{pack_site, Lane};

/// A point of Z². Ordering is lexicographic in `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0, y: 0 };

    pub const fn new(x: i32, y: i32) -> Self {
        Point { x, y }
    }

    pub fn l1(self) -> u32 {
        self.x.unsigned_abs() + self.y.unsigned_abs()
    }

    pub fn l1_to(self, other: Point) -> u32 {
        (self.x - other.x).unsigned_abs() + (self.y - other.y).unsigned_abs()
    }

    pub fn site_id(self) -> u64 {
        pack_site(self.x, self.y)
    }

    pub fn neighbors(self) -> [Point; 4] {
        [
            Point::new(self.x + 1, self.y),
            Point::new(self.x - 1, self.y),
            Point::new(self.x, self.y + 1),
            Point::new(self.x, self.y - 1),
        ]
    }
}

impl From<(i32, i32)> for Point {
    fn from((x, y): (i32, i32)) -> Self {
        Point::new(x, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// An undirected nearest-neighbour edge, stored by its lower/left endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub base: Point,
    pub orientation: Orientation,
}

impl Edge {
    /// The edge joining two neighbouring points, in either order.
    pub fn between(a: Point, b: Point) -> Option<Edge> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match (hi.x - lo.x, hi.y - lo.y) {
            (1, 0) => Some(Edge { base: lo, orientation: Orientation::Horizontal }),
            (0, 1) => Some(Edge { base: lo, orientation: Orientation::Vertical }),
            _ => None,
        }
    }

    pub fn endpoints(self) -> (Point, Point) {
        let b = self.base;
        match self.orientation {
            Orientation::Horizontal => (b, Point::new(b.x + 1, b.y)),
            Orientation::Vertical => (b, Point::new(b.x, b.y + 1)),
        }
    }

    /// Graph distance from the origin to the closest endpoint.
    pub fn norm(self) -> u32 {
        let (a, b) = self.endpoints();
        a.l1().min(b.l1())
    }

    pub fn lane(self) -> Lane {
        match self.orientation {
            Orientation::Horizontal => Lane::HorizontalEdge,
            Orientation::Vertical => Lane::VerticalEdge,
        }
    }

    pub fn site_id(self) -> u64 {
        self.base.site_id()
    }
}

/// A place that can carry a weight: a vertex (LPP, polymers) or an edge (FPP).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    Vertex(Point),
    Edge(Edge),
}

impl Location {
    pub fn norm(self) -> u32 {
        match self {
            Location::Vertex(p) => p.l1(),
            Location::Edge(e) => e.norm(),
        }
    }

    pub fn site_id(self) -> u64 {
        match self {
            Location::Vertex(p) => p.site_id(),
            Location::Edge(e) => e.site_id(),
        }
    }

    pub fn lane(self) -> Lane {
        match self {
            Location::Vertex(_) => Lane::Vertex,
            Location::Edge(e) => e.lane(),
        }
    }
}

/// A finite ‖·‖₁ ball `{z : ‖z − center‖₁ ≤ radius}`, with a dense
/// row-major index over its bounding square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub center: Point,
    pub radius: u32,
}

impl LatticeBox {
    pub fn new(center: Point, radius: u32) -> Self {
        LatticeBox { center, radius }
    }

    /// Box of radius `factor · ‖y − x‖₁` around the midpoint of `x` and `y`,
    /// never smaller than what is needed to contain both endpoints.
    pub fn around(x: Point, y: Point, factor: f64) -> Self {
        let center = Point::new(
            x.x + (y.x - x.x).div_euclid(2),
            x.y + (y.y - x.y).div_euclid(2),
        );
        let dist = x.l1_to(y);
        let need = center.l1_to(x).max(center.l1_to(y)) + 1;
        let radius = ((factor * f64::from(dist)).ceil() as u32).max(need);
        LatticeBox { center, radius }
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.side() * self.side()
    }

    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        p.l1_to(self.center) <= self.radius
    }

    #[inline]
    pub fn on_boundary(&self, p: Point) -> bool {
        p.l1_to(self.center) == self.radius
    }

    /// Dense index of `p` in the bounding square (valid only if `contains(p)`).
    #[inline]
    pub fn index(&self, p: Point) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let r = self.radius as i32;
        let col = (p.x - self.center.x + r) as usize;
        let row = (p.y - self.center.y + r) as usize;
        Some(row * self.side() + col)
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let side = self.side();
        let r = self.radius as i32;
        Point::new(
            (idx % side) as i32 - r + self.center.x,
            (idx / side) as i32 - r + self.center.y,
        )
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        let r = self.radius as i32;
        let c = self.center;
        (-r..=r).flat_map(move |dy| {
            let w = r - dy.abs();
            (-w..=w).map(move |dx| Point::new(c.x + dx, c.y + dy))
        })
    }

    /// Edges with both endpoints inside the box.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.points().flat_map(move |p| {
            let h = Edge { base: p, orientation: Orientation::Horizontal };
            let v = Edge { base: p, orientation: Orientation::Vertical };
            let keep_h = self.contains(h.endpoints().1);
            let keep_v = self.contains(v.endpoints().1);
            keep_h.then_some(h).into_iter().chain(keep_v.then_some(v))
        })
    }

    pub fn vertex_count(&self) -> usize {
        let r = self.radius as usize;
        2 * r * r + 2 * r + 1
    }
}

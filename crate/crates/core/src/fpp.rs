//! First-passage percolation on Z² with i.i.d. nonnegative edge weights,
//! restricted to a finite ‖·‖₁ box.
//!
//! Geodesics are distinguished by a fixed rule: when two relaxations give a
//! vertex the same tentative time, the lexicographically smaller predecessor
//! wins. The predecessor pointers form a tree, so all distinguished
//! geodesics from one source are consistent.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::coupling::{
    coupled_pair, draw_coupled, segment_distance, y_uniform, CoupledDraw, CouplingKind, CouplingSpec, EpsilonSchedule,
};
use crate::error::{Error, Result};
use crate::lattice::{Edge, LatticeBox, Location, Orientation, Point};
use crate::lawcore::WeightLaw;
use crate::rng::StreamKey;

const NONE: u32 = u32::MAX;

/// Dense edge weights on a box. Entry `i` of `h` (resp. `v`) is the edge
/// leaving the `i`-th cell of the bounding square to the right (resp. up);
/// entries for edges leaving the box are NaN and never read.
#[derive(Clone, Debug)]
pub struct EdgeEnvironment {
    bbox: LatticeBox,
    h: Vec<f64>,
    v: Vec<f64>,
}

impl EdgeEnvironment {
    /// Weights `X_e` drawn from `law` under `key` (stream 0 of each edge).
    pub fn sample(law: &WeightLaw, key: StreamKey, bbox: LatticeBox) -> Result<Self> {
        if law.essinf() < 0.0 {
            return Err(Error::NegativeWeight { essinf: law.essinf() });
        }
        Ok(Self::from_fn(bbox, |e| law.sample_at(key, e.site_id(), e.lane(), 0)))
    }

    /// Weights from an arbitrary function of the edge.
    pub fn from_fn(bbox: LatticeBox, mut f: impl FnMut(Edge) -> f64) -> Self {
        let cells = bbox.cells();
        let mut h = vec![f64::NAN; cells];
        let mut v = vec![f64::NAN; cells];
        for e in bbox.edges() {
            let i = bbox.index(e.base).expect("edge base inside box");
            match e.orientation {
                Orientation::Horizontal => h[i] = f(e),
                Orientation::Vertical => v[i] = f(e),
            }
        }
        EdgeEnvironment { bbox, h, v }
    }

    pub fn bbox(&self) -> LatticeBox {
        self.bbox
    }

    fn slot(&self, e: Edge) -> Option<usize> {
        let (a, b) = e.endpoints();
        if !self.bbox.contains(b) {
            return None;
        }
        self.bbox.index(a)
    }

    pub fn weight(&self, e: Edge) -> Option<f64> {
        let i = self.slot(e)?;
        Some(match e.orientation {
            Orientation::Horizontal => self.h[i],
            Orientation::Vertical => self.v[i],
        })
    }

    pub fn set_weight(&mut self, e: Edge, w: f64) -> Result<()> {
        let i = self.slot(e).ok_or(Error::OutsideBox(e.endpoints().1))?;
        match e.orientation {
            Orientation::Horizontal => self.h[i] = w,
            Orientation::Vertical => self.v[i] = w,
        }
        Ok(())
    }

    pub fn dump(&self) -> EnvDump {
        let edges = self
            .bbox
            .edges()
            .map(|e| EdgeRecord {
                x: e.base.x,
                y: e.base.y,
                orientation: e.orientation,
                weight: self.weight(e).unwrap(),
            })
            .collect();
        EnvDump { center: self.bbox.center, radius: self.bbox.radius, edges }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub x: i32,
    pub y: i32,
    pub orientation: Orientation,
    pub weight: f64,
}

/// JSON form of an edge environment, for replay and debugging.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvDump {
    pub center: Point,
    pub radius: u32,
    pub edges: Vec<EdgeRecord>,
}

/// Single-source shortest-path tree, possibly truncated.
pub struct PathTree<'a> {
    env: &'a EdgeEnvironment,
    source: Point,
    dist: Vec<f64>,
    pred: Vec<u32>,
    settled: Vec<bool>,
}

enum Stop {
    Target(usize),
    Time(f64),
    Never,
}

fn search(env: &EdgeEnvironment, source: Point, stop: Stop) -> Result<PathTree<'_>> {
    let b = env.bbox;
    let s = b.index(source).ok_or(Error::OutsideBox(source))?;
    let side = b.side();
    let cells = b.cells();
    let mut dist = vec![f64::INFINITY; cells];
    let mut pred = vec![NONE; cells];
    let mut settled = vec![false; cells];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Reverse((0u64, s as u32)));
    while let Some(Reverse((key, u))) = heap.pop() {
        let u = u as usize;
        if settled[u] || f64::from_bits(key) > dist[u] {
            continue;
        }
        let du = dist[u];
        if let Stop::Time(t) = stop {
            if du > t {
                break;
            }
        }
        settled[u] = true;
        if let Stop::Target(t) = stop {
            if u == t {
                break;
            }
        }
        let p = b.point(u);
        let mut relax = |v: usize, w: f64| {
            if settled[v] {
                return;
            }
            let nd = du + w;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = u as u32;
                heap.push(Reverse((nd.to_bits(), v as u32)));
            } else if nd == dist[v] && p < b.point(pred[v] as usize) {
                pred[v] = u as u32;
            }
        };
        if b.contains(Point::new(p.x + 1, p.y)) {
            relax(u + 1, env.h[u]);
        }
        if b.contains(Point::new(p.x - 1, p.y)) {
            relax(u - 1, env.h[u - 1]);
        }
        if b.contains(Point::new(p.x, p.y + 1)) {
            relax(u + side, env.v[u]);
        }
        if b.contains(Point::new(p.x, p.y - 1)) {
            relax(u - side, env.v[u - side]);
        }
    }
    Ok(PathTree { env, source, dist, pred, settled })
}

impl<'a> PathTree<'a> {
    pub fn source(&self) -> Point {
        self.source
    }

    /// Passage time to `p` if `p` was settled.
    pub fn time(&self, p: Point) -> Option<f64> {
        let i = self.env.bbox.index(p)?;
        self.settled[i].then_some(self.dist[i])
    }

    /// Vertices of the distinguished geodesic from the source to `p`.
    pub fn vertices_to(&self, p: Point) -> Option<Vec<Point>> {
        let b = self.env.bbox;
        let mut i = b.index(p)?;
        if !self.settled[i] {
            return None;
        }
        let mut out = vec![p];
        while self.pred[i] != NONE {
            i = self.pred[i] as usize;
            out.push(b.point(i));
        }
        out.reverse();
        Some(out)
    }

    /// The geodesic to `p` with weights re-read from the environment and
    /// summed in path order.
    pub fn result_to(&self, p: Point) -> Option<PassageResult> {
        let vertices = self.vertices_to(p)?;
        let path: Vec<Edge> = vertices.windows(2).map(|w| Edge::between(w[0], w[1]).unwrap()).collect();
        let per_edge_weights: Vec<f64> = path.iter().map(|e| self.env.weight(*e).unwrap()).collect();
        let value = per_edge_weights.iter().fold(0.0, |acc, w| acc + w);
        let touched_boundary = vertices.iter().any(|v| self.env.bbox.on_boundary(*v));
        Some(PassageResult { value, vertices, path, per_edge_weights, touched_boundary })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageResult {
    pub value: f64,
    pub vertices: Vec<Point>,
    pub path: Vec<Edge>,
    pub per_edge_weights: Vec<f64>,
    /// Some geodesic vertex lies on the box boundary, so the box may have
    /// constrained the minimum.
    pub touched_boundary: bool,
}

/// `T(x, y)` within the box, with its distinguished geodesic.
pub fn passage_time(env: &EdgeEnvironment, x: Point, y: Point) -> Result<PassageResult> {
    let t = env.bbox.index(y).ok_or(Error::OutsideBox(y))?;
    let tree = search(env, x, Stop::Target(t))?;
    Ok(tree.result_to(y).expect("target settled in a connected box"))
}

/// Full single-source tree from `x`.
pub fn passage_tree(env: &EdgeEnvironment, x: Point) -> Result<PathTree<'_>> {
    search(env, x, Stop::Never)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthBall {
    pub t: f64,
    /// Sorted lattice points with `T(0, z) ≤ t`.
    pub reached: Vec<Point>,
}

/// `{z : T(0, z) ≤ t}`. Fails if the ball reaches the box boundary, since
/// the box could then have cut it short.
pub fn growth_ball(env: &EdgeEnvironment, t: f64) -> Result<GrowthBall> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
    }
    let tree = search(env, Point::ORIGIN, Stop::Time(t))?;
    let b = env.bbox;
    let mut reached: Vec<Point> = (0..b.cells())
        .filter(|&i| tree.settled[i] && tree.dist[i] <= t)
        .map(|i| b.point(i))
        .collect();
    if reached.iter().any(|p| b.on_boundary(*p)) {
        return Err(Error::BallHitsBoundary { t });
    }
    reached.sort();
    Ok(GrowthBall { t, reached })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeConstantRow {
    pub n: u32,
    pub mean: f64,
    pub se: f64,
    pub replicas: u32,
    pub boundary_touches: u32,
}

/// Monte Carlo `T(0, n·dir)/n` over replicas. `box_factor` sets the box
/// radius relative to `n‖dir‖₁`.
pub fn time_constant_estimate(
    law: &WeightLaw,
    dir: Point,
    n_list: &[u32],
    replicas: u32,
    seed: u64,
    box_factor: f64,
) -> Result<Vec<TimeConstantRow>> {
    if replicas < 2 {
        return Err(Error::invalid("replicas", "need at least 2"));
    }
    let mut out = Vec::new();
    for &n in n_list {
        let target = Point::new(dir.x * n as i32, dir.y * n as i32);
        let bbox = LatticeBox::around(Point::ORIGIN, target, box_factor);
        let mut vals = Vec::with_capacity(replicas as usize);
        let mut touches = 0;
        for r in 0..replicas {
            let key = StreamKey::new(seed).replica(u64::from(n), u64::from(r));
            let env = EdgeEnvironment::sample(law, key, bbox)?;
            let res = passage_time(&env, Point::ORIGIN, target)?;
            touches += u32::from(res.touched_boundary);
            vals.push(res.value / f64::from(n));
        }
        let k = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / k;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        out.push(TimeConstantRow { n, mean, se: (var / k).sqrt(), replicas, boundary_touches: touches });
    }
    Ok(out)
}

/// Points `y` with `‖y − x‖₁ = n`.
pub fn sphere(x: Point, n: u32) -> Vec<Point> {
    let n = n as i32;
    let mut out = Vec::with_capacity(4 * n as usize);
    for k in 0..n {
        out.push(Point::new(x.x + n - k, x.y + k));
        out.push(Point::new(x.x - k, x.y + n - k));
        out.push(Point::new(x.x - n + k, x.y - k));
        out.push(Point::new(x.x + k, x.y - n + k));
    }
    out
}

/// Whether some distinguished geodesic from `x` to a point of `∂B_n(x)` has
/// fewer than `ρn` edges of weight at least `s + 2δ`.
pub fn event_en(env: &EdgeEnvironment, law: &WeightLaw, x: Point, n: u32, delta: f64, rho: f64) -> Result<bool> {
    if n == 0 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    let inner = LatticeBox::new(x, n);
    let b = env.bbox;
    if inner.center.l1_to(b.center) + n > b.radius {
        return Err(Error::OutsideBox(x));
    }
    let threshold = law.essinf() + 2.0 * delta;
    let limit = rho * f64::from(n);
    let tree = search(env, x, Stop::Never)?;
    for y in sphere(x, n) {
        let vs = tree.vertices_to(y).expect("box is connected");
        let heavy = vs
            .windows(2)
            .filter(|w| env.weight(Edge::between(w[0], w[1]).unwrap()).unwrap() >= threshold)
            .count();
        if (heavy as f64) < limit {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confinement {
    pub max_transverse_dev: f64,
    pub inside: bool,
}

/// Largest Euclidean distance of the geodesic from `0` to `n·dir` from the
/// segment joining them, and whether it stays within `n^exponent`.
pub fn geodesic_confinement(env: &EdgeEnvironment, dir: Point, n: u32, exponent: f64) -> Result<Confinement> {
    let target = Point::new(dir.x * n as i32, dir.y * n as i32);
    let res = passage_time(env, Point::ORIGIN, target)?;
    let dev = res.vertices.iter().map(|p| segment_distance(*p, target)).fold(0.0, f64::max);
    Ok(Confinement { max_transverse_dev: dev, inside: dev <= f64::from(n).powf(exponent) })
}

/// An edge field together with its min-coupled perturbation.
pub struct CoupledEdgeEnvironment {
    law: WeightLaw,
    spec: CouplingSpec,
    schedule: EpsilonSchedule,
    key: StreamKey,
    x: EdgeEnvironment,
    x_tilde: EdgeEnvironment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedPassage {
    pub t: f64,
    pub t_tilde: f64,
    /// `Σ 1{Y = 1}·Z` along the distinguished geodesic of the `X` field.
    pub d: f64,
    pub path_edges: u32,
    pub touched_boundary: bool,
    pub touched_boundary_tilde: bool,
}

impl PerturbedPassage {
    /// Floating-point slack for comparing sums taken along different paths.
    pub fn slack(&self) -> f64 {
        1e-10 * (1.0 + self.t.abs())
    }

    /// `T̃ ≤ T` and `T − T̃ ≥ D ≥ 0` up to rounding.
    pub fn holds(&self) -> bool {
        let s = self.slack();
        self.t_tilde <= self.t + s && self.t - self.t_tilde >= self.d - s && self.d >= 0.0
    }
}

impl CoupledEdgeEnvironment {
    pub fn sample(
        law: &WeightLaw,
        spec: CouplingSpec,
        schedule: &EpsilonSchedule,
        key: StreamKey,
        bbox: LatticeBox,
    ) -> Result<Self> {
        if spec.kind != CouplingKind::Min {
            return Err(Error::Incompatible("first passage uses the min coupling".into()));
        }
        if law.essinf() < 0.0 {
            return Err(Error::NegativeWeight { essinf: law.essinf() });
        }
        let cells = bbox.cells();
        let mut x = EdgeEnvironment { bbox, h: vec![f64::NAN; cells], v: vec![f64::NAN; cells] };
        let mut x_tilde = x.clone();
        for e in bbox.edges() {
            let i = bbox.index(e.base).unwrap();
            let (site, lane) = (e.site_id(), e.lane());
            let (xv, xp) = coupled_pair(law, &spec, key, site, lane);
            let eps = schedule.epsilon_at(Location::Edge(e));
            let xt = if eps > 0.0 && y_uniform(&spec, key, site, lane) < eps { xp } else { xv };
            match e.orientation {
                Orientation::Horizontal => {
                    x.h[i] = xv;
                    x_tilde.h[i] = xt;
                }
                Orientation::Vertical => {
                    x.v[i] = xv;
                    x_tilde.v[i] = xt;
                }
            }
        }
        Ok(CoupledEdgeEnvironment { law: law.clone(), spec, schedule: schedule.clone(), key, x, x_tilde })
    }

    pub fn unperturbed(&self) -> &EdgeEnvironment {
        &self.x
    }

    pub fn perturbed(&self) -> &EdgeEnvironment {
        &self.x_tilde
    }

    /// Replays every variable drawn at an edge.
    pub fn draw(&self, e: Edge) -> CoupledDraw {
        let at = Location::Edge(e);
        draw_coupled(&self.law, &self.spec, self.schedule.epsilon_at(at), self.key, at)
    }

    /// `Σ W_e` along the distinguished geodesic of the unperturbed field.
    pub fn geodesic_w_sum(&self, x: Point, y: Point) -> Result<f64> {
        let res = passage_time(&self.x, x, y)?;
        Ok(res.path.iter().map(|e| self.draw(*e).w).sum())
    }

    pub fn perturbed_passage(&self, x: Point, y: Point) -> Result<PerturbedPassage> {
        let a = passage_time(&self.x, x, y)?;
        let b = passage_time(&self.x_tilde, x, y)?;
        // on the X geodesic, X − X̃ is Z where Y = 1 and 0 elsewhere
        let d = a
            .path
            .iter()
            .map(|e| self.x.weight(*e).unwrap() - self.x_tilde.weight(*e).unwrap())
            .sum();
        Ok(PerturbedPassage {
            t: a.value,
            t_tilde: b.value,
            d,
            path_edges: a.path.len() as u32,
            touched_boundary: a.touched_boundary,
            touched_boundary_tilde: b.touched_boundary,
        })
    }
}

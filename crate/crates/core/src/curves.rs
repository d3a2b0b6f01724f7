//! Candidate boundary curves and their rectilinear partitions.
//!
//! Every segment carries the unit tangent `u` and the normal `u⊥ = (u₂, −u₁)`,
//! the tangent turned clockwise. Normals of a counterclockwise closed curve
//! therefore point outward.

use std::collections::HashMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_SEGMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub length: f64,
    pub direction: Vector2<f64>,
    pub normal: Vector2<f64>,
}

impl Segment {
    pub fn new(start: [f64; 2], end: [f64; 2]) -> Option<Self> {
        let d = Vector2::new(end[0] - start[0], end[1] - start[1]);
        let length = d.norm();
        if length < MIN_SEGMENT {
            return None;
        }
        let u = d / length;
        Some(Segment {
            start,
            end,
            length,
            direction: u,
            normal: Vector2::new(u[1], -u[0]),
        })
    }

    pub fn point_at(&self, t: f64) -> [f64; 2] {
        [self.start[0] + t * self.direction[0], self.start[1] + t * self.direction[1]]
    }

    /// Splits at distance `t` from the start.
    pub fn split(&self, t: f64) -> Option<(Segment, Segment)> {
        let mid = self.point_at(t);
        Some((Segment::new(self.start, mid)?, Segment::new(mid, self.end)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub segments: Vec<Segment>,
    pub norm: f64,
    pub total_length: f64,
    pub closed: bool,
}

impl Partition {
    pub fn from_segments(segments: Vec<Segment>, closed: bool) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyCurve);
        }
        let norm = segments.iter().map(|s| s.length).fold(0.0, f64::max);
        let total_length = segments.iter().map(|s| s.length).sum();
        Ok(Partition { segments, norm, total_length, closed })
    }

    /// Vertices `s₀, s₁, …, s_n` of the polygon.
    pub fn vertices(&self) -> Vec<[f64; 2]> {
        let mut v: Vec<[f64; 2]> = self.segments.iter().map(|s| s.start).collect();
        if let Some(last) = self.segments.last() {
            v.push(last.end);
        }
        v
    }
}

pub fn arc_length(p: &Partition) -> f64 {
    p.segments.iter().map(|s| s.length).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    AsGiven,
    Clockwise,
    CounterClockwise,
}

/// Values of a scalar field on the nodes of a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    /// Row-major: `values[j * nx + i]` sits at `(xᵢ, yⱼ)`.
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn from_fn(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize, f: impl Fn([f64; 2]) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        let mut g = ScalarGrid { x, y, nx, ny, values: Vec::new() };
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(g.node(i, j)));
            }
        }
        g.values = values;
        g
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let fx = if self.nx > 1 { i as f64 / (self.nx - 1) as f64 } else { 0.0 };
        let fy = if self.ny > 1 { j as f64 / (self.ny - 1) as f64 } else { 0.0 };
        [self.x.0 + fx * (self.x.1 - self.x.0), self.y.0 + fy * (self.y.1 - self.y.0)]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || self.values.len() != self.nx * self.ny {
            return Err(Error::Config(format!(
                "grid needs at least 2x2 nodes and nx*ny values, got {}x{} with {}",
                self.nx,
                self.ny,
                self.values.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetSpec {
    pub grid: ScalarGrid,
    pub level: f64,
    /// Pick the component passing closest to this point instead of the longest.
    pub near: Option<[f64; 2]>,
    /// Convex polygon (counterclockwise) to clip the contour to.
    pub hull: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurveKind {
    Polyline(Vec<[f64; 2]>),
    Bezier { control: Vec<[f64; 2]>, resolution: usize },
    LevelSet(LevelSetSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    pub closed: bool,
    pub orientation: Orientation,
}

impl Curve {
    pub fn polyline(points: Vec<[f64; 2]>) -> Self {
        let closed = points.len() > 2 && points.first() == points.last();
        Curve {
            kind: CurveKind::Polyline(points),
            closed,
            orientation: Orientation::AsGiven,
        }
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }
}

/// Point on the Bézier curve with the given control polygon.
pub fn de_casteljau(control: &[[f64; 2]], t: f64) -> [f64; 2] {
    let mut pts = control.to_vec();
    let n = pts.len();
    for level in 1..n {
        for i in 0..n - level {
            pts[i] = [
                (1.0 - t) * pts[i][0] + t * pts[i + 1][0],
                (1.0 - t) * pts[i][1] + t * pts[i + 1][1],
            ];
        }
    }
    pts[0]
}

pub fn bezier_points(control: &[[f64; 2]], resolution: usize) -> Vec<[f64; 2]> {
    let steps = resolution.max(1);
    (0..=steps).map(|k| de_casteljau(control, k as f64 / steps as f64)).collect()
}

/// Twice the signed area; positive for counterclockwise vertex order.
pub fn signed_area2(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum()
}

fn dedupe(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(points.len());
    for p in points {
        if out
            .last()
            .is_none_or(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() >= MIN_SEGMENT)
        {
            out.push(*p);
        }
    }
    out
}

/// Realises the curve as a polygon whose segments are no longer than
/// `max_norm`. Each edge is cut into a power-of-two number of equal pieces, so
/// halving `max_norm` halves every piece once it is below the edge lengths.
pub fn realize(curve: &Curve, max_norm: f64) -> Result<Partition> {
    if !(max_norm > 0.0 && max_norm.is_finite()) {
        return Err(Error::Config(format!("max_norm must be positive, got {max_norm}")));
    }
    let (raw, mut closed) = match &curve.kind {
        CurveKind::Polyline(points) => (points.clone(), curve.closed),
        CurveKind::Bezier { control, resolution } => {
            if control.len() < 2 {
                return Err(Error::EmptyCurve);
            }
            (bezier_points(control, *resolution), curve.closed)
        }
        CurveKind::LevelSet(spec) => {
            let component = select_level_component(spec)?;
            let closed = component.len() > 2 && component.first() == component.last();
            (component, closed)
        }
    };
    if raw.len() < 2 {
        return Err(Error::EmptyCurve);
    }
    let mut points = dedupe(&raw);
    if points.len() < 2 {
        return Err(Error::DegenerateCurve);
    }
    if closed && points.first() != points.last() {
        points.push(points[0]);
    }
    closed = closed && points.len() > 3;
    if closed {
        let ccw = signed_area2(&points[..points.len() - 1]) > 0.0;
        let flip = match curve.orientation {
            Orientation::AsGiven => false,
            Orientation::Clockwise => ccw,
            Orientation::CounterClockwise => !ccw,
        };
        if flip {
            points.reverse();
        }
    }

    let mut segments = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let pieces = if len <= max_norm {
            1
        } else {
            1usize << (len / max_norm).log2().ceil() as u32
        };
        let mut prev = a;
        for k in 1..=pieces {
            let next = if k == pieces {
                b
            } else {
                let f = k as f64 / pieces as f64;
                [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
            };
            if let Some(s) = Segment::new(prev, next) {
                segments.push(s);
                prev = next;
            }
        }
    }
    if segments.is_empty() {
        return Err(Error::DegenerateCurve);
    }
    Partition::from_segments(segments, closed)
}

fn polyline_length(points: &[[f64; 2]]) -> f64 {
    points
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

fn select_level_component(spec: &LevelSetSpec) -> Result<Vec<[f64; 2]>> {
    let mut components = level_set_components(&spec.grid, spec.level)?;
    if let Some(hull) = &spec.hull {
        components = components
            .into_iter()
            .flat_map(|c| clip_polyline_to_convex(&c, hull))
            .collect();
        components.sort_by(|a, b| polyline_length(b).total_cmp(&polyline_length(a)));
    }
    if components.is_empty() {
        return Err(Error::EmptyCurve);
    }
    match spec.near {
        None => Ok(components.swap_remove(0)),
        Some(p) => {
            let dist = |c: &Vec<[f64; 2]>| {
                c.iter()
                    .map(|q| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2))
                    .fold(f64::INFINITY, f64::min)
            };
            let best = components
                .iter()
                .enumerate()
                .min_by(|a, b| dist(a.1).total_cmp(&dist(b.1)))
                .map(|(i, _)| i)
                .expect("nonempty");
            Ok(components.swap_remove(best))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeId {
    /// Between nodes `(i, j)` and `(i+1, j)`.
    H(usize, usize),
    /// Between nodes `(i, j)` and `(i, j+1)`.
    V(usize, usize),
}

/// Contour components of `{field = level}` by marching squares, longest first.
/// Closed components repeat their first point at the end.
pub fn level_set_components(grid: &ScalarGrid, level: f64) -> Result<Vec<Vec<[f64; 2]>>> {
    grid.validate()?;
    let mut crossing: HashMap<EdgeId, [f64; 2]> = HashMap::new();
    let lerp = |a: [f64; 2], b: [f64; 2], va: f64, vb: f64| {
        let t = if vb == va { 0.5 } else { (level - va) / (vb - va) };
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    };
    let mut point = |e: EdgeId| -> [f64; 2] {
        *crossing.entry(e).or_insert_with(|| match e {
            EdgeId::H(i, j) => lerp(grid.node(i, j), grid.node(i + 1, j), grid.at(i, j), grid.at(i + 1, j)),
            EdgeId::V(i, j) => lerp(grid.node(i, j), grid.node(i, j + 1), grid.at(i, j), grid.at(i, j + 1)),
        })
    };
    let mut pieces: Vec<(EdgeId, EdgeId)> = Vec::new();
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx - 1 {
            let v = [grid.at(i, j), grid.at(i + 1, j), grid.at(i + 1, j + 1), grid.at(i, j + 1)];
            let above = v.map(|x| x > level);
            let case = above
                .iter()
                .enumerate()
                .fold(0u8, |acc, (k, &b)| acc | ((b as u8) << k));
            let bottom = EdgeId::H(i, j);
            let right = EdgeId::V(i + 1, j);
            let top = EdgeId::H(i, j + 1);
            let left = EdgeId::V(i, j);
            let centre_above = v.iter().sum::<f64>() / 4.0 > level;
            let edges: &[(EdgeId, EdgeId)] = match case {
                0 | 15 => &[],
                1 | 14 => &[(left, bottom)],
                2 | 13 => &[(bottom, right)],
                3 | 12 => &[(left, right)],
                4 | 11 => &[(right, top)],
                6 | 9 => &[(bottom, top)],
                7 | 8 => &[(left, top)],
                // corners 0 and 2 above
                5 => {
                    if centre_above {
                        &[(left, top), (bottom, right)]
                    } else {
                        &[(left, bottom), (right, top)]
                    }
                }
                // corners 1 and 3 above
                10 => {
                    if centre_above {
                        &[(left, bottom), (right, top)]
                    } else {
                        &[(left, top), (bottom, right)]
                    }
                }
                _ => unreachable!(),
            };
            pieces.extend_from_slice(edges);
        }
    }
    for (a, b) in &pieces {
        point(*a);
        point(*b);
    }

    let mut adjacency: HashMap<EdgeId, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in pieces.iter().enumerate() {
        adjacency.entry(*a).or_default().push(k);
        adjacency.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; pieces.len()];
    let mut chains: Vec<Vec<EdgeId>> = Vec::new();
    let walk = |start_piece: usize, from: EdgeId, used: &mut Vec<bool>| -> Vec<EdgeId> {
        let mut chain = vec![from];
        let mut current = start_piece;
        let mut at = from;
        loop {
            used[current] = true;
            let (a, b) = pieces[current];
            let next = if a == at { b } else { a };
            chain.push(next);
            at = next;
            match adjacency[&at].iter().find(|&&k| !used[k]) {
                Some(&k) => current = k,
                None => break,
            }
        }
        chain
    };
    // Open chains start at crossings with a single incident piece; sort for determinism.
    let mut ends: Vec<EdgeId> = adjacency
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(e, _)| *e)
        .collect();
    ends.sort_by_key(edge_key);
    for e in ends {
        let k = adjacency[&e][0];
        if !used[k] {
            chains.push(walk(k, e, &mut used));
        }
    }
    for k in 0..pieces.len() {
        if !used[k] {
            chains.push(walk(k, pieces[k].0, &mut used));
        }
    }
    let mut components: Vec<Vec<[f64; 2]>> = chains
        .into_iter()
        .map(|c| c.into_iter().map(|e| crossing[&e]).collect::<Vec<_>>())
        .map(|c| dedupe(&c))
        .filter(|c| c.len() >= 2)
        .collect();
    components.sort_by(|a, b| polyline_length(b).total_cmp(&polyline_length(a)));
    Ok(components)
}

fn edge_key(e: &EdgeId) -> (u8, usize, usize) {
    match *e {
        EdgeId::H(i, j) => (0, j, i),
        EdgeId::V(i, j) => (1, j, i),
    }
}

/// Convex hull by the monotone chain, counterclockwise without repetition.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Parameter range of `a + t(b − a)`, `t ∈ [0, 1]`, inside a counterclockwise
/// convex polygon (Cyrus–Beck).
fn clip_segment(a: [f64; 2], b: [f64; 2], hull: &[[f64; 2]]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let d = [b[0] - a[0], b[1] - a[1]];
    for k in 0..hull.len() {
        let p = hull[k];
        let q = hull[(k + 1) % hull.len()];
        // inward normal of a counterclockwise edge
        let n = [-(q[1] - p[1]), q[0] - p[0]];
        let num = n[0] * (a[0] - p[0]) + n[1] * (a[1] - p[1]);
        let den = n[0] * d[0] + n[1] * d[1];
        if den == 0.0 {
            if num < 0.0 {
                return None;
            }
        } else {
            let t = -num / den;
            if den > 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Pieces of a polyline that lie inside a convex polygon.
pub fn clip_polyline_to_convex(points: &[[f64; 2]], hull: &[[f64; 2]]) -> Vec<Vec<[f64; 2]>> {
    if hull.len() < 3 {
        return Vec::new();
    }
    let mut out: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut current: Vec<[f64; 2]> = Vec::new();
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        match clip_segment(a, b, hull) {
            Some((t0, t1)) => {
                let p = if t0 > 0.0 { lerp(a, b, t0) } else { a };
                let q = if t1 < 1.0 { lerp(a, b, t1) } else { b };
                if current.is_empty() || t0 > 0.0 {
                    if current.len() >= 2 {
                        out.push(std::mem::take(&mut current));
                    }
                    current = vec![p];
                }
                current.push(q);
                if t1 < 1.0 {
                    out.push(std::mem::take(&mut current));
                }
            }
            None => {
                if current.len() >= 2 {
                    out.push(std::mem::take(&mut current));
                }
                current.clear();
            }
        }
    }
    if current.len() >= 2 {
        out.push(current);
    }
    // A closed curve cut once yields two pieces that join at the old seam.
    if out.len() >= 2 && points.first() == points.last() {
        let first_starts_at_seam = out[0][0] == points[0];
        let last_ends_at_seam = out.last().and_then(|c| c.last()) == points.last();
        if first_starts_at_seam && last_ends_at_seam {
            let head = out.remove(0);
            let tail = out.last_mut().expect("at least one piece");
            tail.extend_from_slice(&head[1..]);
        }
    }
    out.into_iter().map(|c| dedupe(&c)).filter(|c| c.len() >= 2).collect()
}

/// Serialised form of a curve shared by files, the HTTP API and the UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDoc {
    pub kind: CurveDocKind,
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub closed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub orientation: Orientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near: Option<[f64; 2]>,
    #[serde(default)]
    pub clip_to_hull: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveDocKind {
    Polyline,
    Bezier,
    Level,
}

pub const DEFAULT_BEZIER_RESOLUTION: usize = 1000;

impl CurveDoc {
    pub fn polyline(points: Vec<[f64; 2]>, closed: bool) -> Self {
        CurveDoc {
            kind: CurveDocKind::Polyline,
            points,
            closed,
            level: None,
            resolution: None,
            orientation: Orientation::AsGiven,
            near: None,
            clip_to_hull: false,
        }
    }

    /// Builds the curve. Level curves need the field to contour and, when
    /// `clip_to_hull` is set, the observed locations.
    pub fn to_curve(&self, field: Option<&ScalarGrid>, locations: Option<&[[f64; 2]]>) -> Result<Curve> {
        let kind = match self.kind {
            CurveDocKind::Polyline => CurveKind::Polyline(self.points.clone()),
            CurveDocKind::Bezier => CurveKind::Bezier {
                control: self.points.clone(),
                resolution: self.resolution.unwrap_or(DEFAULT_BEZIER_RESOLUTION),
            },
            CurveDocKind::Level => {
                let level = self
                    .level
                    .ok_or_else(|| Error::Config("level curve needs a `level`".into()))?;
                let grid = field
                    .ok_or_else(|| Error::Config("level curve needs a field to contour".into()))?
                    .clone();
                let hull = if self.clip_to_hull {
                    let locs = locations
                        .ok_or_else(|| Error::Config("hull clipping needs the observed locations".into()))?;
                    Some(convex_hull(locs))
                } else {
                    None
                };
                CurveKind::LevelSet(LevelSetSpec {
                    grid,
                    level,
                    near: self.near,
                    hull,
                })
            }
        };
        Ok(Curve {
            kind,
            closed: self.closed,
            orientation: self.orientation,
        })
    }
}

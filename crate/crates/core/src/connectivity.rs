//! Soft edge-to-edge connections between nearby triangles.

use std::io::Write;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scene::{TriangleSoup, VertexLayout};
use crate::spatial::PointGrid;

/// Which vectors the two admission thresholds are applied to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriteriaMode {
    /// Outward in-plane edge normals (`ô_a·ĝ > τ`, `ô_a·ô_b < -ρ`).
    #[default]
    Outward,
    /// Edge direction vectors (`ê_a·ĝ > τ`, `ê_a·ê_b < -ρ`).
    EdgeVector,
}

/// Edge `edge` of triangle `tri` runs from `V[edge]` to `V[(edge + 1) % 3]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeRef<T: Real> {
    pub tri: u32,
    pub edge: u8,
    pub midpoint: Vector3<T>,
    /// Unit, orthogonal to the edge and the normal, pointing away from the triangle.
    pub outward: Vector3<T>,
    /// Unit edge direction.
    pub direction: Vector3<T>,
}

impl<T: Real> EdgeRef<T> {
    pub fn new(tri: usize, edge: usize, layout: &VertexLayout<T>) -> Self {
        let a = layout.vertices[edge];
        let b = layout.vertices[(edge + 1) % 3];
        let midpoint = (a + b) / T::lit(2.0);
        let direction = (b - a).normalize();
        let mut outward = direction.cross(&layout.normal).normalize();
        if outward.dot(&(midpoint - layout.barycenter)) < T::zero() {
            outward = -outward;
        }
        Self { tri: tri as u32, edge: edge as u8, midpoint, outward, direction }
    }

    pub fn endpoints(&self, layout: &VertexLayout<T>) -> (Vector3<T>, Vector3<T>) {
        let e = self.edge as usize;
        (layout.vertices[e], layout.vertices[(e + 1) % 3])
    }
}

/// Direction and orientation tests for connecting edge `a` to edge `b`.
/// Coincident midpoints pass the direction test (the edges already touch).
pub fn admissible<T: Real>(a: &EdgeRef<T>, b: &EdgeRef<T>, tau: T, rho: T, mode: CriteriaMode) -> bool {
    let (va, vb) = match mode {
        CriteriaMode::Outward => (a.outward, b.outward),
        CriteriaMode::EdgeVector => (a.direction, b.direction),
    };
    let g = b.midpoint - a.midpoint;
    let gn = g.norm();
    let direction_ok = if gn > T::lit(1e-300) { va.dot(&(g / gn)) > tau } else { true };
    direction_ok && va.dot(&vb) < -rho
}

/// A directed connection from edge `a` to edge `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Connection<T: Real> {
    pub a: EdgeRef<T>,
    pub b: EdgeRef<T>,
    /// When set, `a`'s start pairs with `b`'s end and vice versa.
    pub reversed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeGraph<T: Real> {
    pub connections: Vec<Connection<T>>,
    /// Iteration at which the graph was built.
    pub stamp: u64,
    /// Triangle count of the soup it was built from.
    pub triangle_count: usize,
    /// Set when the soup changed topology since the build.
    pub stale: bool,
}

impl<T: Real> EdgeGraph<T> {
    pub fn empty(triangle_count: usize) -> Self {
        Self { connections: Vec::new(), stamp: 0, triangle_count, stale: false }
    }

    pub fn check_current(&self, soup: &TriangleSoup<T>) -> Result<()> {
        if self.stale || self.triangle_count != soup.count() {
            return Err(Error::Contract(format!(
                "edge graph built for {} triangles is stale (soup has {})",
                self.triangle_count,
                soup.count()
            )));
        }
        Ok(())
    }

    /// Writes the connections as line segments between edge midpoints
    /// (Wavefront OBJ polylines).
    pub fn write_obj(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# {} edge connections", self.connections.len())?;
        for c in &self.connections {
            let (p, q) = (c.a.midpoint, c.b.midpoint);
            writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
            writeln!(w, "v {} {} {}", q.x, q.y, q.z)?;
        }
        for k in 0..self.connections.len() {
            writeln!(w, "l {} {}", 2 * k + 1, 2 * k + 2)?;
        }
        Ok(())
    }
}

/// Graph construction parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphParams {
    pub tau: f64,
    pub rho: f64,
    /// Search radius as a multiple of the owning triangle's circumradius.
    pub radius_factor: f64,
    pub mode: CriteriaMode,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { tau: 0.0, rho: 0.0, radius_factor: 3.0, mode: CriteriaMode::Outward }
    }
}

/// Circumradius `abc / (4 · area)`.
pub fn circumradius<T: Real>(l: &VertexLayout<T>) -> T {
    let v = &l.vertices;
    let a = (v[1] - v[0]).norm();
    let b = (v[2] - v[1]).norm();
    let c = (v[0] - v[2]).norm();
    a * b * c / (T::lit(4.0) * l.area)
}

/// Edge pairing that minimizes the summed endpoint distance; ties reverse.
pub fn pairing<T: Real>(a: (Vector3<T>, Vector3<T>), b: (Vector3<T>, Vector3<T>)) -> bool {
    let straight = (a.0 - b.0).norm() + (a.1 - b.1).norm();
    let reversed = (a.0 - b.1).norm() + (a.1 - b.0).norm();
    reversed <= straight
}

fn edges_of<T: Real>(layouts: &[VertexLayout<T>]) -> Vec<EdgeRef<T>> {
    let mut edges = Vec::with_capacity(layouts.len() * 3);
    for (i, l) in layouts.iter().enumerate() {
        if l.degenerate {
            continue;
        }
        for e in 0..3 {
            edges.push(EdgeRef::new(i, e, l));
        }
    }
    edges
}

fn better<T: Real>(cand: (T, u32, u8), best: Option<(T, u32, u8)>) -> bool {
    match best {
        None => true,
        Some(b) => cand.0 < b.0 || (cand.0 == b.0 && (cand.1, cand.2) < (b.1, b.2)),
    }
}

fn finish<T: Real>(layouts: &[VertexLayout<T>], edges: &[EdgeRef<T>], choice: Vec<Option<usize>>, stamp: u64) -> EdgeGraph<T> {
    let connections = edges
        .iter()
        .zip(choice)
        .filter_map(|(a, c)| {
            let b = edges[c?];
            let reversed = pairing(a.endpoints(&layouts[a.tri as usize]), b.endpoints(&layouts[b.tri as usize]));
            Some(Connection { a: *a, b, reversed })
        })
        .collect();
    EdgeGraph { connections, stamp, triangle_count: layouts.len(), stale: false }
}

/// Connects every edge to its nearest admissible foreign edge within the
/// search radius. Ties in distance go to the lowest `(tri, edge)`.
pub fn build_graph<T: Real>(soup: &TriangleSoup<T>, params: &GraphParams, stamp: u64) -> EdgeGraph<T> {
    let layouts = soup.layouts();
    build_graph_from_layouts(&layouts, params, stamp)
}

pub fn build_graph_from_layouts<T: Real>(layouts: &[VertexLayout<T>], params: &GraphParams, stamp: u64) -> EdgeGraph<T> {
    let edges = edges_of(layouts);
    if edges.is_empty() {
        return EdgeGraph::empty(layouts.len());
    }
    let radii: Vec<T> = layouts.iter().map(|l| if l.degenerate { T::zero() } else { circumradius(l) * T::lit(params.radius_factor) }).collect();
    let mut sorted: Vec<f64> = edges.iter().map(|e| radii[e.tri as usize].as_f64()).filter(|r| r.is_finite() && *r > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let cell = sorted.get(sorted.len() / 2).copied().unwrap_or(1.0).max(1e-12);
    let mids: Vec<Vector3<T>> = edges.iter().map(|e| e.midpoint).collect();
    let grid = PointGrid::new(&mids, cell);
    let (tau, rho) = (T::lit(params.tau), T::lit(params.rho));
    let choice: Vec<Option<usize>> = edges
        .par_iter()
        .map(|a| {
            let mut best: Option<(T, u32, u8)> = None;
            let mut best_idx = None;
            grid.within(&a.midpoint, radii[a.tri as usize], |j| {
                let b = &edges[j];
                if b.tri == a.tri || !admissible(a, b, tau, rho, params.mode) {
                    return;
                }
                let cand = ((b.midpoint - a.midpoint).norm(), b.tri, b.edge);
                if better(cand, best) {
                    best = Some(cand);
                    best_idx = Some(j);
                }
            });
            best_idx
        })
        .collect();
    finish(layouts, &edges, choice, stamp)
}

/// Quadratic reference implementation of [`build_graph_from_layouts`].
pub fn build_graph_brute_force<T: Real>(layouts: &[VertexLayout<T>], params: &GraphParams, stamp: u64) -> EdgeGraph<T> {
    let edges = edges_of(layouts);
    let (tau, rho) = (T::lit(params.tau), T::lit(params.rho));
    let choice = edges
        .iter()
        .map(|a| {
            let radius = circumradius(&layouts[a.tri as usize]) * T::lit(params.radius_factor);
            let mut best: Option<(T, u32, u8)> = None;
            let mut best_idx = None;
            for (j, b) in edges.iter().enumerate() {
                let d = (b.midpoint - a.midpoint).norm();
                if b.tri == a.tri || d > radius || !admissible(a, b, tau, rho, params.mode) {
                    continue;
                }
                if better((d, b.tri, b.edge), best) {
                    best = Some((d, b.tri, b.edge));
                    best_idx = Some(j);
                }
            }
            best_idx
        })
        .collect();
    finish(layouts, &edges, choice, stamp)
}

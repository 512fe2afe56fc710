//! Computational domains and uniform grids.
//!
//! Nodes are stored in lexicographic order. For a rectangle the node
//! `(ix, iy)` has index `ix * n + iy`, so the `y` index runs fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::expr::Point;

/// A bounded domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainGeometry {
    Interval { x0: f64, x1: f64 },
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Ball of radius `radius` in `dim` dimensions, reduced to radial
    /// functions on `[0, radius]`.
    RadialBall { radius: f64, dim: usize },
}

impl DomainGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DomainGeometry::Interval { x0, x1 } => x0.is_finite() && x1.is_finite() && x0 < x1,
            DomainGeometry::Rectangle { x0, x1, y0, y1 } => {
                [x0, x1, y0, y1].iter().all(|v| v.is_finite()) && x0 < x1 && y0 < y1
            }
            DomainGeometry::RadialBall { radius, dim } => radius.is_finite() && radius > 0.0 && dim >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid domain {self:?}")))
        }
    }

    /// Number of grid axes (1 for intervals and radial balls).
    pub fn axes(&self) -> usize {
        match self {
            DomainGeometry::Rectangle { .. } => 2,
            _ => 1,
        }
    }
}

/// Uniform grid over the closed domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: DomainGeometry,
    n: usize,
    spacing: [f64; 2],
    nodes: Vec<[f64; 2]>,
    interior: Vec<bool>,
    corner: Vec<bool>,
    normals: Vec<[f64; 2]>,
    distance: Vec<f64>,
}

/// Builds a grid with `n` nodes per axis.
pub fn build_grid(domain: DomainGeometry, n: usize) -> Result<Grid> {
    domain.validate()?;
    if n < 3 {
        return Err(Error::config(format!("grid needs at least 3 nodes per axis, got {n}")));
    }
    let grid = match domain {
        DomainGeometry::Interval { x0, x1 } => {
            let h = (x1 - x0) / (n - 1) as f64;
            let mut g = Grid::empty(domain.clone(), n, [h, 0.0]);
            for i in 0..n {
                let x = axis_coord(x0, x1, h, i, n);
                let (dl, dr) = (x - x0, x1 - x);
                let boundary = i == 0 || i == n - 1;
                let normal = if i == 0 || (i != n - 1 && dl <= dr) { -1.0 } else { 1.0 };
                g.push([x, 0.0], !boundary, false, [normal, 0.0], if boundary { 0.0 } else { dl.min(dr) });
            }
            g
        }
        DomainGeometry::RadialBall { radius, .. } => {
            let h = radius / (n - 1) as f64;
            let mut g = Grid::empty(domain.clone(), n, [h, 0.0]);
            for i in 0..n {
                let r = axis_coord(0.0, radius, h, i, n);
                let boundary = i == n - 1;
                g.push([r, 0.0], !boundary, false, [1.0, 0.0], if boundary { 0.0 } else { radius - r });
            }
            g
        }
        DomainGeometry::Rectangle { x0, x1, y0, y1 } => {
            let hx = (x1 - x0) / (n - 1) as f64;
            let hy = (y1 - y0) / (n - 1) as f64;
            let mut g = Grid::empty(domain.clone(), n, [hx, hy]);
            let diag = std::f64::consts::FRAC_1_SQRT_2;
            for ix in 0..n {
                let x = axis_coord(x0, x1, hx, ix, n);
                for iy in 0..n {
                    let y = axis_coord(y0, y1, hy, iy, n);
                    let sx = side(ix, n);
                    let sy = side(iy, n);
                    let candidates = [
                        (x - x0, [-1.0, 0.0]),
                        (x1 - x, [1.0, 0.0]),
                        (y - y0, [0.0, -1.0]),
                        (y1 - y, [0.0, 1.0]),
                    ];
                    let (d, nearest) = candidates
                        .iter()
                        .fold((f64::INFINITY, [0.0, 0.0]), |acc, &(d, nv)| if d < acc.0 { (d, nv) } else { acc });
                    match (sx, sy) {
                        (0, 0) => g.push([x, y], true, false, nearest, d),
                        (sx, 0) => g.push([x, y], false, false, [sx as f64, 0.0], 0.0),
                        (0, sy) => g.push([x, y], false, false, [0.0, sy as f64], 0.0),
                        (sx, sy) => g.push([x, y], false, true, [sx as f64 * diag, sy as f64 * diag], 0.0),
                    }
                }
            }
            g
        }
    };
    Ok(grid)
}

fn axis_coord(lo: f64, hi: f64, h: f64, i: usize, n: usize) -> f64 {
    if i == n - 1 {
        hi
    } else {
        lo + i as f64 * h
    }
}

fn side(i: usize, n: usize) -> i32 {
    if i == 0 {
        -1
    } else if i == n - 1 {
        1
    } else {
        0
    }
}

impl Grid {
    fn empty(domain: DomainGeometry, n: usize, spacing: [f64; 2]) -> Self {
        let cap = if domain.axes() == 2 { n * n } else { n };
        Grid {
            domain,
            n,
            spacing,
            nodes: Vec::with_capacity(cap),
            interior: Vec::with_capacity(cap),
            corner: Vec::with_capacity(cap),
            normals: Vec::with_capacity(cap),
            distance: Vec::with_capacity(cap),
        }
    }

    fn push(&mut self, x: [f64; 2], interior: bool, corner: bool, normal: [f64; 2], distance: f64) {
        self.nodes.push(x);
        self.interior.push(interior);
        self.corner.push(corner);
        self.normals.push(normal);
        self.distance.push(distance);
    }

    pub fn domain(&self) -> &DomainGeometry {
        &self.domain
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> usize {
        self.domain.axes()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Spacing along the first axis.
    pub fn h(&self) -> f64 {
        self.spacing[0]
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    /// Coordinates of node `i` (the second entry is 0 on 1D grids).
    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.axes()]
    }

    pub fn is_interior(&self, i: usize) -> bool {
        self.interior[i]
    }

    pub fn is_corner(&self, i: usize) -> bool {
        self.corner[i]
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub fn distance(&self, i: usize) -> f64 {
        self.distance[i]
    }

    pub fn distances(&self) -> &[f64] {
        &self.distance
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.interior[i])
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| !self.interior[i])
    }

    /// Outward normal and 0 at boundary nodes; direction of the nearest
    /// boundary point and `d(x)` at interior nodes.
    pub fn boundary_data(&self, node: usize) -> ([f64; 2], f64) {
        (self.normals[node], self.distance[node])
    }

    /// Index of node `(ix, iy)` on a rectangle.
    pub fn index2(&self, ix: usize, iy: usize) -> usize {
        ix * self.n + iy
    }

    /// Axis indices of node `i`; `iy` is 0 on 1D grids.
    pub fn multi_index(&self, i: usize) -> (usize, usize) {
        if self.axes() == 2 {
            (i / self.n, i % self.n)
        } else {
            (i, 0)
        }
    }

    /// Index offset of one step along axis `k`.
    pub(crate) fn stride(&self, axis: usize) -> isize {
        if self.axes() == 2 && axis == 0 {
            self.n as isize
        } else {
            1
        }
    }

    /// Evaluation point for coefficient expressions. On a radial ball both
    /// `x` and `r` are bound to the radial coordinate.
    pub fn point(&self, i: usize) -> Point {
        let [a, b] = self.nodes[i];
        match self.domain {
            DomainGeometry::Interval { .. } => Point { x: a, y: 0.0, r: a.abs() },
            DomainGeometry::RadialBall { .. } => Point { x: a, y: 0.0, r: a },
            DomainGeometry::Rectangle { .. } => Point { x: a, y: b, r: a.hypot(b) },
        }
    }

    /// Checks `⟨n(x), y−x⟩ ≤ |y−x|²/(2r)` over all boundary/node pairs.
    pub fn exterior_sphere_holds(&self, r: f64) -> bool {
        self.boundary_nodes().all(|b| {
            let x = self.nodes[b];
            let nv = self.normals[b];
            self.nodes.iter().all(|y| {
                let d = [y[0] - x[0], y[1] - x[1]];
                nv[0] * d[0] + nv[1] * d[1] <= (d[0] * d[0] + d[1] * d[1]) / (2.0 * r) + 1e-12
            })
        })
    }
}

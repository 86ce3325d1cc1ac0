//! Planar coverage accounting: a fine grid of cells marked once a robot's
//! sensing disk has swept over their centres.

use mosaic_core::geometry::point_segment_distance;
use mosaic_core::Point2;
use serde::{Deserialize, Serialize};

pub const DEFAULT_COVERAGE_CELL: f64 = 0.25;
pub const DEFAULT_SENSING_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    origin: Point2,
    cell_size: f64,
    nx: usize,
    ny: usize,
    covered: Vec<bool>,
    count: usize,
    changes: Vec<u32>,
}

/// Grid geometry shared with clients that rebuild the map from deltas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageGrid {
    pub origin: Point2,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl CoverageMap {
    pub fn new(origin: Point2, width: f64, height: f64, cell_size: f64) -> Self {
        assert!(cell_size > 0.0 && width > 0.0 && height > 0.0);
        let nx = (width / cell_size).ceil() as usize;
        let ny = (height / cell_size).ceil() as usize;
        Self {
            origin,
            cell_size,
            nx,
            ny,
            covered: vec![false; nx * ny],
            count: 0,
            changes: Vec::new(),
        }
    }

    pub fn grid(&self) -> CoverageGrid {
        CoverageGrid {
            origin: self.origin,
            cell_size: self.cell_size,
            nx: self.nx,
            ny: self.ny,
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    pub fn covered_cells(&self) -> usize {
        self.count
    }

    /// Covered area in m², exactly `covered_cells * cell_area`.
    pub fn covered_area(&self) -> f64 {
        self.count as f64 * self.cell_area()
    }

    pub fn is_covered(&self, i: usize, j: usize) -> bool {
        self.covered[j * self.nx + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) * self.cell_size,
            self.origin.y + (j as f64 + 0.5) * self.cell_size,
        )
    }

    /// Marks every cell whose centre lies within `radius` of segment `a`-`b`.
    /// Returns the number of newly covered cells.
    pub fn cover_segment(&mut self, a: Point2, b: Point2, radius: f64) -> usize {
        let (i0, i1) = self.span(
            a.x.min(b.x) - radius,
            a.x.max(b.x) + radius,
            self.origin.x,
            self.nx,
        );
        let (j0, j1) = self.span(
            a.y.min(b.y) - radius,
            a.y.max(b.y) + radius,
            self.origin.y,
            self.ny,
        );
        let mut added = 0;
        for j in j0..j1 {
            for i in i0..i1 {
                let k = j * self.nx + i;
                if self.covered[k] {
                    continue;
                }
                if point_segment_distance(self.cell_center(i, j), a, b) <= radius {
                    self.covered[k] = true;
                    self.changes.push(k as u32);
                    added += 1;
                }
            }
        }
        self.count += added;
        added
    }

    pub fn cover_disk(&mut self, center: Point2, radius: f64) -> usize {
        self.cover_segment(center, center, radius)
    }

    pub fn cover_path(&mut self, path: &[Point2], radius: f64) -> usize {
        match path {
            [] => 0,
            [p] => self.cover_disk(*p, radius),
            _ => path
                .windows(2)
                .map(|w| self.cover_segment(w[0], w[1], radius))
                .sum(),
        }
    }

    /// Indices (`j * nx + i`) of cells covered since the last call.
    pub fn take_changes(&mut self) -> Vec<u32> {
        std::mem::take(&mut self.changes)
    }

    /// Indices of every covered cell, ascending.
    pub fn covered_indices(&self) -> Vec<u32> {
        (0..self.covered.len())
            .filter(|&k| self.covered[k])
            .map(|k| k as u32)
            .collect()
    }

    fn span(&self, lo: f64, hi: f64, origin: f64, n: usize) -> (usize, usize) {
        let a = ((lo - origin) / self.cell_size - 0.5).floor().max(0.0) as usize;
        let b = (((hi - origin) / self.cell_size - 0.5).ceil() + 1.0).max(0.0) as usize;
        (a.min(n), b.min(n))
    }
}

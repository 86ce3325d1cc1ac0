//! Traversability grid and 8-connected shortest paths.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use mosaic_core::geometry::polyline_length;
use mosaic_core::utility::PathOracle;
use mosaic_core::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Flat,
    Rough,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mobility {
    Legged,
    Wheeled,
}

impl Mobility {
    pub fn can_traverse(self, cell: Cell) -> bool {
        !matches!(
            (self, cell),
            (_, Cell::Blocked) | (Mobility::Wheeled, Cell::Rough)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TerrainError {
    #[error("cell size must be positive and finite")]
    CellSize,
    #[error("terrain must have at least one cell")]
    Empty,
    #[error("row {row} has {got} cells, expected {expected}")]
    Ragged {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("unknown terrain symbol {0:?}")]
    Symbol(char),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    origin: Point2,
    cell_size: f64,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    corner_cutting: bool,
}

const NEIGHBOURS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

impl Terrain {
    /// All-flat grid of `width` x `height` cells.
    pub fn new(
        origin: Point2,
        width: usize,
        height: usize,
        cell_size: f64,
    ) -> Result<Self, TerrainError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(TerrainError::CellSize);
        }
        if width == 0 || height == 0 {
            return Err(TerrainError::Empty);
        }
        Ok(Self {
            origin,
            cell_size,
            width,
            height,
            cells: vec![Cell::Flat; width * height],
            corner_cutting: false,
        })
    }

    /// Parses rows of `.` (flat), `~` (rough) and `#` (blocked). The first row is y = 0.
    pub fn from_rows(
        origin: Point2,
        cell_size: f64,
        rows: &[impl AsRef<str>],
    ) -> Result<Self, TerrainError> {
        let width = rows
            .first()
            .map(|r| r.as_ref().chars().count())
            .unwrap_or(0);
        let mut terrain = Self::new(origin, width, rows.len(), cell_size)?;
        for (y, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            let got = row.chars().count();
            if got != width {
                return Err(TerrainError::Ragged {
                    row: y,
                    got,
                    expected: width,
                });
            }
            for (x, c) in row.chars().enumerate() {
                let cell = match c {
                    '.' => Cell::Flat,
                    '~' => Cell::Rough,
                    '#' => Cell::Blocked,
                    other => return Err(TerrainError::Symbol(other)),
                };
                terrain.set(x, y, cell);
            }
        }
        Ok(terrain)
    }

    /// Whether diagonal moves may squeeze between two non-traversable
    /// orthogonal neighbours.
    pub fn with_corner_cutting(mut self, allowed: bool) -> Self {
        self.corner_cutting = allowed;
        self
    }

    pub fn corner_cutting(&self) -> bool {
        self.corner_cutting
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Extent in metres.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.cell_size,
            self.height as f64 * self.cell_size,
        )
    }

    pub fn get(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, cell: Cell) {
        self.cells[y * self.width + x] = cell;
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.cell_of(p).is_some()
    }

    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn cell_at(&self, p: Point2) -> Option<Cell> {
        self.cell_of(p).map(|(x, y)| self.get(x, y))
    }

    pub fn center(&self, x: usize, y: usize) -> Point2 {
        Point2::new(
            self.origin.x + (x as f64 + 0.5) * self.cell_size,
            self.origin.y + (y as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn traversable(&self, x: usize, y: usize, mobility: Mobility) -> bool {
        mobility.can_traverse(self.get(x, y))
    }

    pub fn traversable_at(&self, p: Point2, mobility: Mobility) -> bool {
        self.cell_of(p)
            .is_some_and(|(x, y)| self.traversable(x, y, mobility))
    }

    fn step(&self, x: usize, y: usize, dx: isize, dy: isize, mobility: Mobility) -> Option<usize> {
        let nx = x.checked_add_signed(dx)?;
        let ny = y.checked_add_signed(dy)?;
        if nx >= self.width || ny >= self.height || !self.traversable(nx, ny, mobility) {
            return None;
        }
        if dx != 0 && dy != 0 && !self.corner_cutting {
            let side_a = self.traversable(nx, y, mobility);
            let side_b = self.traversable(x, ny, mobility);
            if !(side_a && side_b) {
                return None;
            }
        }
        Some(ny * self.width + nx)
    }

    /// Single-source shortest distances over cell centres.
    pub fn distance_field(&self, start: (usize, usize), mobility: Mobility) -> DistanceField {
        let n = self.cells.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        let s = start.1 * self.width + start.0;
        dist[s] = 0.0;
        heap.push(Frontier {
            cost: 0.0,
            index: s,
        });
        while let Some(Frontier { cost, index }) = heap.pop() {
            if cost > dist[index] {
                continue;
            }
            let (x, y) = (index % self.width, index / self.width);
            for (dx, dy) in NEIGHBOURS {
                let Some(next) = self.step(x, y, dx, dy, mobility) else {
                    continue;
                };
                let w = if dx != 0 && dy != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                } * self.cell_size;
                let c = cost + w;
                if c < dist[next] {
                    dist[next] = c;
                    parent[next] = index;
                    heap.push(Frontier {
                        cost: c,
                        index: next,
                    });
                }
            }
        }
        DistanceField {
            width: self.width,
            start: s,
            dist,
            parent,
        }
    }

    /// Waypoints from `from` to `to`: the exact endpoints joined through the
    /// centres of the intermediate cells. `None` when either end is not
    /// traversable or `to` is unreachable.
    pub fn find_path(&self, from: Point2, to: Point2, mobility: Mobility) -> Option<Vec<Point2>> {
        let start = self.cell_of(from)?;
        if !self.traversable(start.0, start.1, mobility) {
            return None;
        }
        let field = self.distance_field(start, mobility);
        self.path_in(&field, from, to, mobility)
    }

    fn path_in(
        &self,
        field: &DistanceField,
        from: Point2,
        to: Point2,
        mobility: Mobility,
    ) -> Option<Vec<Point2>> {
        let (gx, gy) = self.cell_of(to)?;
        if !self.traversable(gx, gy, mobility) {
            return None;
        }
        let cells = field.cells_to(gy * self.width + gx)?;
        let mut points = Vec::with_capacity(cells.len() + 1);
        points.push(from);
        if cells.len() > 2 {
            points.extend(
                cells[1..cells.len() - 1]
                    .iter()
                    .map(|&i| self.center(i % self.width, i / self.width)),
            );
        }
        points.push(to);
        Some(points)
    }

    /// Cells visited by a path produced by [`Terrain::find_path`].
    pub fn path_cells(&self, path: &[Point2]) -> Vec<(usize, usize)> {
        path.iter().filter_map(|p| self.cell_of(*p)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Frontier {
    cost: f64,
    index: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    start: usize,
    dist: Vec<f64>,
    parent: Vec<usize>,
}

impl DistanceField {
    /// Grid distance between cell centres, infinite when unreachable.
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        self.dist[y * self.width + x]
    }

    fn cells_to(&self, goal: usize) -> Option<Vec<usize>> {
        if !self.dist[goal].is_finite() {
            return None;
        }
        let mut cells = vec![goal];
        let mut at = goal;
        while at != self.start {
            at = self.parent[at];
            cells.push(at);
        }
        cells.reverse();
        Some(cells)
    }
}

/// Path oracle for one mobility class. Moves are symmetric, so distance
/// fields are computed from the goal cell and cached per goal.
#[derive(Debug)]
pub struct TerrainNav {
    terrain: Arc<Terrain>,
    mobility: Mobility,
    fields: RefCell<BTreeMap<(usize, usize), Arc<DistanceField>>>,
}

const FIELD_CACHE_LIMIT: usize = 512;

impl TerrainNav {
    pub fn new(terrain: Arc<Terrain>, mobility: Mobility) -> Self {
        Self {
            terrain,
            mobility,
            fields: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn terrain(&self) -> &Terrain {
        &self.terrain
    }

    pub fn mobility(&self) -> Mobility {
        self.mobility
    }

    fn field(&self, goal: (usize, usize)) -> Arc<DistanceField> {
        let mut fields = self.fields.borrow_mut();
        if fields.len() >= FIELD_CACHE_LIMIT && !fields.contains_key(&goal) {
            fields.clear();
        }
        Arc::clone(
            fields
                .entry(goal)
                .or_insert_with(|| Arc::new(self.terrain.distance_field(goal, self.mobility))),
        )
    }

    /// Grid distance between the cells of `from` and `to`.
    pub fn grid_distance(&self, from: Point2, to: Point2) -> Option<f64> {
        let start = self.terrain.cell_of(from)?;
        let goal = self.terrain.cell_of(to)?;
        let d = self.field(goal).distance(start.0, start.1);
        d.is_finite().then_some(d)
    }

    /// Waypoints from `from` to `to`, as for [`Terrain::find_path`].
    pub fn path(&self, from: Point2, to: Point2) -> Option<Vec<Point2>> {
        let t = &self.terrain;
        let (sx, sy) = t.cell_of(from)?;
        let (gx, gy) = t.cell_of(to)?;
        if !t.traversable(gx, gy, self.mobility) {
            return None;
        }
        let field = self.field((gx, gy));
        let cells = field.cells_to(sy * t.width + sx)?;
        let mut points = Vec::with_capacity(cells.len() + 1);
        points.push(from);
        if cells.len() > 2 {
            points.extend(
                cells[1..cells.len() - 1]
                    .iter()
                    .rev()
                    .map(|&i| t.center(i % t.width, i / t.width)),
            );
        }
        points.push(to);
        Some(points)
    }
}

impl PathOracle for TerrainNav {
    fn path_length(&self, from: Point2, to: Point2) -> Option<f64> {
        self.path(from, to).map(|p| polyline_length(&p))
    }
}

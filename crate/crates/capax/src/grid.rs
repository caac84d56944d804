//! Uniform lattices in one or two dimensions, sup-norm cubes and the finite
//! cube families that stand in for "all cubes of side at most rho".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the total number of cells of a grid.
pub const MAX_CELLS: usize = 1 << 22;

/// A point of the ambient space. One-dimensional grids ignore the second
/// coordinate.
pub type Point = [f64; 2];

/// Slack used when snapping coordinates to cell boundaries.
const SNAP: f64 = 1e-9;

/// Uniform grid of `shape[0] x shape[1]` cells of side `h` whose lower-left
/// corner is `origin`. For `dim == 1` the second axis has a single cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub h: f64,
    pub origin: Point,
    pub shape: [usize; 2],
}

impl Eq for Grid {}

impl std::hash::Hash for Grid {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.dim.hash(state);
        self.shape.hash(state);
        self.h.to_bits().hash(state);
        self.origin[0].to_bits().hash(state);
        self.origin[1].to_bits().hash(state);
    }
}

impl Grid {
    pub fn new(dim: usize, h: f64, origin: Point, shape: [usize; 2]) -> Result<Self> {
        Self::with_cap(dim, h, origin, shape, MAX_CELLS)
    }

    pub fn with_cap(
        dim: usize,
        h: f64,
        origin: Point,
        shape: [usize; 2],
        cap: usize,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Grid(format!("dimension {dim} not supported")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Grid(format!("cell size {h} must be positive")));
        }
        let shape = if dim == 1 { [shape[0], 1] } else { shape };
        if shape[0] == 0 || shape[1] == 0 {
            return Err(Error::Grid("shape components must be >= 1".into()));
        }
        let cells = shape[0].saturating_mul(shape[1]);
        if cells > cap {
            return Err(Error::Grid(format!("{cells} cells exceed the cap of {cap}")));
        }
        let origin = if dim == 1 { [origin[0], 0.0] } else { origin };
        Ok(Self {
            dim,
            h,
            origin,
            shape,
        })
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.shape[1] + j
    }

    pub fn coords(&self, idx: usize) -> [usize; 2] {
        [idx / self.shape[1], idx % self.shape[1]]
    }

    pub fn center(&self, idx: usize) -> Point {
        let [i, j] = self.coords(idx);
        let x = self.origin[0] + (i as f64 + 0.5) * self.h;
        if self.dim == 1 {
            [x, 0.0]
        } else {
            [x, self.origin[1] + (j as f64 + 0.5) * self.h]
        }
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    /// Upper corner of the grid box.
    pub fn upper(&self) -> Point {
        let mut up = [0.0; 2];
        for (a, u) in up.iter_mut().enumerate().take(self.dim) {
            *u = self.origin[a] + self.shape[a] as f64 * self.h;
        }
        up
    }

    /// Cell containing `x`, if any.
    pub fn locate(&self, x: Point) -> Option<usize> {
        let mut ij = [0usize; 2];
        for a in 0..self.dim {
            let u = (x[a] - self.origin[a]) / self.h;
            if u < 0.0 || u >= self.shape[a] as f64 {
                return None;
            }
            ij[a] = u.floor() as usize;
        }
        Some(self.index(ij[0], ij[1]))
    }

    /// Sup-norm distance between two points.
    pub fn dist(&self, x: Point, y: Point) -> f64 {
        (0..self.dim)
            .map(|a| (x[a] - y[a]).abs())
            .fold(0.0, f64::max)
    }

    /// Clipped extent of `cube` along `axis`, in fractional cell units.
    pub(crate) fn span(&self, cube: &CubeSpec, axis: usize) -> (f64, f64) {
        if axis >= self.dim {
            return (0.0, 1.0);
        }
        let n = self.shape[axis] as f64;
        let lo = ((cube.center[axis] - cube.half_len - self.origin[axis]) / self.h).clamp(0.0, n);
        let hi = ((cube.center[axis] + cube.half_len - self.origin[axis]) / self.h).clamp(0.0, n);
        (lo, hi)
    }

    /// Index range `[lo, hi)` of cells whose centers lie strictly inside
    /// the cube along `axis`.
    pub(crate) fn center_range(&self, cube: &CubeSpec, axis: usize) -> (usize, usize) {
        if axis >= self.dim {
            return (0, 1);
        }
        let n = self.shape[axis] as i64;
        let a = (cube.center[axis] - cube.half_len - self.origin[axis]) / self.h - 0.5;
        let b = (cube.center[axis] + cube.half_len - self.origin[axis]) / self.h - 0.5;
        let lo = ((a + SNAP).floor() as i64 + 1).clamp(0, n);
        let hi = ((b - SNAP).ceil() as i64).clamp(0, n);
        (lo as usize, hi.max(lo) as usize)
    }

    /// Volume of `cube` intersected with the grid box.
    pub fn clipped_volume(&self, cube: &CubeSpec) -> f64 {
        let (a0, a1) = self.span(cube, 0);
        let (b0, b1) = self.span(cube, 1);
        (a1 - a0) * (b1 - b0) * self.cell_volume()
    }

    /// Cells with positive overlap with `cube`, with their overlap volume.
    pub fn overlaps(&self, cube: &CubeSpec) -> Vec<(usize, f64)> {
        let (a0, a1) = self.span(cube, 0);
        let (b0, b1) = self.span(cube, 1);
        let mut out = Vec::new();
        if a1 <= a0 || b1 <= b0 {
            return out;
        }
        let vol = self.cell_volume();
        let (i0, i1) = (a0.floor() as usize, (a1.ceil() as usize).min(self.shape[0]));
        let (j0, j1) = (b0.floor() as usize, (b1.ceil() as usize).min(self.shape[1]));
        for i in i0..i1 {
            let fx = (a1.min(i as f64 + 1.0) - a0.max(i as f64)).max(0.0);
            if fx <= 0.0 {
                continue;
            }
            for j in j0..j1 {
                let fy = (b1.min(j as f64 + 1.0) - b0.max(j as f64)).max(0.0);
                if fy > 0.0 {
                    out.push((self.index(i, j), fx * fy * vol));
                }
            }
        }
        out
    }

    /// Cells whose centers lie strictly inside `cube`.
    pub fn cells_inside(&self, cube: &CubeSpec) -> Vec<usize> {
        let (i0, i1) = self.center_range(cube, 0);
        let (j0, j1) = self.center_range(cube, 1);
        let mut out = Vec::with_capacity((i1 - i0) * (j1 - j0));
        for i in i0..i1 {
            for j in j0..j1 {
                out.push(self.index(i, j));
            }
        }
        out
    }

    /// The cube occupied by a single cell.
    pub fn cell_cube(&self, idx: usize) -> CubeSpec {
        CubeSpec {
            center: self.center(idx),
            half_len: self.h / 2.0,
        }
    }

    /// Same box, cells of half the size.
    pub fn refined(&self) -> Result<Grid> {
        Grid::new(
            self.dim,
            self.h / 2.0,
            self.origin,
            [self.shape[0] * 2, if self.dim == 1 { 1 } else { self.shape[1] * 2 }],
        )
    }
}

/// Builds the grid covering the box `[lo, hi]` (per axis) with cells of
/// side `h`. The box sides must be integer multiples of `h`.
pub fn make_grid(dim: usize, h: f64, lo: &[f64], hi: &[f64]) -> Result<Grid> {
    if lo.len() < dim || hi.len() < dim {
        return Err(Error::Grid("box has fewer coordinates than dim".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Grid(format!("cell size {h} must be positive")));
    }
    let mut shape = [1usize; 2];
    let mut origin = [0.0; 2];
    for a in 0..dim {
        let side = hi[a] - lo[a];
        if !(side > 0.0) {
            return Err(Error::Grid(format!("empty box along axis {a}")));
        }
        let cells = side / h;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::Grid(format!(
                "box side {side} is not a multiple of h = {h}"
            )));
        }
        shape[a] = rounded as usize;
        origin[a] = lo[a];
    }
    Grid::new(dim, h, origin, shape)
}

/// Sup-norm cube `Q_r(x) = { y : |y - x|_inf < r }`; side length `2r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeSpec {
    pub center: Point,
    pub half_len: f64,
}

impl CubeSpec {
    pub fn new(center: Point, half_len: f64) -> Result<Self> {
        if !(half_len > 0.0 && half_len.is_finite()) {
            return Err(Error::Param(format!("half length {half_len} must be positive")));
        }
        Ok(Self { center, half_len })
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_len
    }

    pub fn contains(&self, y: Point, dim: usize) -> bool {
        (0..dim).all(|a| (y[a] - self.center[a]).abs() < self.half_len)
    }

    /// `true` when `other` is contained in `self` (closed inclusion).
    pub fn includes(&self, other: &CubeSpec, dim: usize) -> bool {
        (0..dim).all(|a| {
            other.center[a] - other.half_len >= self.center[a] - self.half_len - 1e-12
                && other.center[a] + other.half_len <= self.center[a] + self.half_len + 1e-12
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CubePolicy {
    /// Cubes centered at cell centers; partial cells at the faces.
    Centered,
    /// Cubes whose faces lie on cell boundaries, fully inside the box.
    Aligned,
}

/// Finite, deterministically ordered family of cubes with side at most `rho`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CubeLattice {
    pub cubes: Vec<CubeSpec>,
    pub rho: f64,
}

impl CubeLattice {
    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Sub-family of cubes with side at most `rho`.
    pub fn restrict(&self, rho: f64) -> CubeLattice {
        CubeLattice {
            cubes: self
                .cubes
                .iter()
                .filter(|q| q.side() <= rho * (1.0 + 1e-12))
                .copied()
                .collect(),
            rho,
        }
    }
}

/// Dyadic half-lengths `h, 2h, 4h, ...` not exceeding `rho / 2`.
pub fn dyadic_half_lengths(h: f64, rho: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = h;
    while r <= rho / 2.0 * (1.0 + 1e-12) {
        out.push(r);
        r *= 2.0;
    }
    out
}

pub fn enumerate_cubes(grid: &Grid, rho: f64, policy: CubePolicy) -> Result<CubeLattice> {
    if !(rho >= 2.0 * grid.h * (1.0 - 1e-12)) {
        return Err(Error::Param(format!(
            "rho = {rho} is below the smallest cube side 2h = {}",
            2.0 * grid.h
        )));
    }
    let radii = dyadic_half_lengths(grid.h, rho);
    let mut cubes = Vec::new();
    match policy {
        CubePolicy::Centered => {
            for &r in &radii {
                for k in 0..grid.len() {
                    cubes.push(CubeSpec {
                        center: grid.center(k),
                        half_len: r,
                    });
                }
            }
        }
        CubePolicy::Aligned => {
            for &r in &radii {
                let m = (2.0 * r / grid.h).round() as usize;
                if m > grid.shape[0] || (grid.dim == 2 && m > grid.shape[1]) {
                    continue;
                }
                let nj = if grid.dim == 1 { 1 } else { grid.shape[1] - m + 1 };
                for i in 0..=grid.shape[0] - m {
                    for j in 0..nj {
                        let cx = grid.origin[0] + (i as f64) * grid.h + r;
                        let cy = if grid.dim == 1 {
                            0.0
                        } else {
                            grid.origin[1] + (j as f64) * grid.h + r
                        };
                        cubes.push(CubeSpec {
                            center: [cx, cy],
                            half_len: r,
                        });
                    }
                }
            }
        }
    }
    if cubes.is_empty() {
        return Err(Error::EmptyLattice);
    }
    Ok(CubeLattice { cubes, rho })
}

/// Geometric quadrature grid on `[t_min, t_max]` for integrals against `dt/t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogTimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub nodes_per_octave: usize,
}

impl LogTimeGrid {
    pub fn new(t_min: f64, t_max: f64, nodes_per_octave: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_min < t_max) || nodes_per_octave == 0 {
            return Err(Error::Param(format!(
                "log-time grid needs 0 < t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        Ok(Self {
            t_min,
            t_max,
            nodes_per_octave,
        })
    }

    /// Default grid `[h/2, rho]` with 8 nodes per octave.
    pub fn for_grid(grid: &Grid, rho: f64) -> Result<Self> {
        Self::new(grid.h / 2.0, rho, 8)
    }

    /// Quadrature nodes `(t_k, w_k)`: log-midpoints and log-widths of equal
    /// subintervals, so that `sum_k w_k g(t_k)` approximates `int g dt/t`.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let span = (self.t_max / self.t_min).ln();
        let cells = ((self.nodes_per_octave as f64) * span / std::f64::consts::LN_2)
            .ceil()
            .max(1.0) as usize;
        let w = span / cells as f64;
        (0..cells)
            .map(|k| (self.t_min * ((k as f64 + 0.5) * w).exp(), w))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_cell_counts() {
        assert_eq!(make_grid(1, 0.25, &[0.0], &[1.0]).unwrap().len(), 4);
        assert_eq!(make_grid(2, 0.5, &[0.0, 0.0], &[1.0, 1.0]).unwrap().len(), 4);
        assert!(make_grid(1, 0.3, &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn cell_cap_enforced() {
        assert!(Grid::with_cap(1, 1.0, [0.0, 0.0], [100, 1], 64).is_err());
        assert!(Grid::new(3, 1.0, [0.0, 0.0], [1, 1]).is_err());
    }

    #[test]
    fn lattice_centered_1d() {
        let g = make_grid(1, 1.0, &[0.0], &[8.0]).unwrap();
        let lat = enumerate_cubes(&g, 4.0, CubePolicy::Centered).unwrap();
        assert_eq!(lat.len(), 16);
        let mut radii: Vec<f64> = lat.cubes.iter().map(|q| q.half_len).collect();
        radii.dedup();
        assert_eq!(radii, vec![1.0, 2.0]);
        assert!(lat.cubes.iter().all(|q| q.side() <= 4.0));
        assert!(enumerate_cubes(&g, 1.0, CubePolicy::Centered).is_err());
    }

    #[test]
    fn lattice_centered_2d() {
        let g = make_grid(2, 1.0, &[0.0, 0.0], &[4.0, 4.0]).unwrap();
        let lat = enumerate_cubes(&g, 2.0, CubePolicy::Centered).unwrap();
        assert_eq!(lat.len(), 16);
        assert!(lat.cubes.iter().all(|q| q.half_len == 1.0));
    }

    #[test]
    fn lattice_aligned_inside_box() {
        let g = make_grid(2, 1.0, &[0.0, 0.0], &[4.0, 4.0]).unwrap();
        let lat = enumerate_cubes(&g, 4.0, CubePolicy::Aligned).unwrap();
        // side 2: 3x3 positions, side 4: 1 position
        assert_eq!(lat.len(), 10);
        for q in &lat.cubes {
            assert!((g.clipped_volume(q) - q.side() * q.side()).abs() < 1e-12);
        }
    }

    #[test]
    fn lattice_is_deterministic() {
        let g = make_grid(1, 0.125, &[-1.0], &[1.0]).unwrap();
        let a = enumerate_cubes(&g, 1.0, CubePolicy::Aligned).unwrap();
        let b = enumerate_cubes(&g, 1.0, CubePolicy::Aligned).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn strict_center_membership() {
        let g = make_grid(1, 1.0, &[0.0], &[8.0]).unwrap();
        let q = CubeSpec::new(g.center(3), 1.0).unwrap();
        assert_eq!(g.cells_inside(&q), vec![3]);
        let q = CubeSpec::new(g.center(3), 1.0 + 1e-6).unwrap();
        assert_eq!(g.cells_inside(&q), vec![2, 3, 4]);
    }

    #[test]
    fn overlap_fractions() {
        let g = make_grid(1, 1.0, &[0.0], &[4.0]).unwrap();
        let q = CubeSpec::new([1.5, 0.0], 1.0).unwrap();
        let ov = g.overlaps(&q);
        assert_eq!(ov, vec![(0, 0.5), (1, 1.0), (2, 0.5)]);
        let clipped = CubeSpec::new([0.0, 0.0], 1.0).unwrap();
        assert_eq!(g.clipped_volume(&clipped), 1.0);
    }

    #[test]
    fn log_grid_integrates_dt_over_t() {
        let tg = LogTimeGrid::new(0.01, 1.0, 8).unwrap();
        let nodes = tg.nodes();
        let total: f64 = nodes.iter().map(|(_, w)| w).sum();
        assert!((total - 100f64.ln()).abs() < 1e-12);
        // int_{0.01}^{1} t dt/t = 0.99, midpoint in log t is second order
        let approx: f64 = nodes.iter().map(|(t, w)| t * w).sum();
        assert!((approx - 0.99).abs() < 5e-3);
    }
}

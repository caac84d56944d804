//! Cell-valued fields and discrete measures on a [`Grid`], with the cube
//! averages and cube masses every other module is built on.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CubeSpec, Grid};

/// One value per cell, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "{} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self {
            values: (0..grid.len()).map(|k| f(grid.center(k))).collect(),
            grid: grid.clone(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `int f dx` over the grid box.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// `int f w dx` over the grid box.
    pub fn integral_against(&self, w: &Field) -> f64 {
        self.values
            .iter()
            .zip(&w.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Serializes to the plain text format: a header line `dim h shape.. origin..`
    /// followed by the values, one grid row per line.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut s = header(g);
        for row in self.values.chunks(g.shape[1]) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (grid, values) = parse_text(text)?;
        Field::new(grid, values)
    }
}

fn header(g: &Grid) -> String {
    let mut s = format!("{} {}", g.dim, g.h);
    for a in 0..g.dim {
        let _ = write!(s, " {}", g.shape[a]);
    }
    for a in 0..g.dim {
        let _ = write!(s, " {}", g.origin[a]);
    }
    s.push('\n');
    s
}

fn parse_text(text: &str) -> Result<(Grid, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines.next().ok_or_else(|| Error::Parse("empty input".into()))?;
    let tok: Vec<&str> = head.split_whitespace().collect();
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
    };
    let dim = tok
        .first()
        .ok_or_else(|| Error::Parse("missing dim".into()))?
        .parse::<usize>()
        .map_err(|e| Error::Parse(e.to_string()))?;
    if tok.len() != 2 + 2 * dim {
        return Err(Error::Parse(format!(
            "header needs {} tokens, found {}",
            2 + 2 * dim,
            tok.len()
        )));
    }
    let h = num(tok[1])?;
    let mut shape = [1usize; 2];
    let mut origin = [0.0; 2];
    for a in 0..dim {
        shape[a] = tok[2 + a]
            .parse::<usize>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        origin[a] = num(tok[2 + dim + a])?;
    }
    let grid = Grid::new(dim, h, origin, shape)?;
    let values = lines
        .flat_map(|l| l.split_whitespace())
        .map(num)
        .collect::<Result<Vec<f64>>>()?;
    Ok((grid, values))
}

pub(crate) fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::Mismatch("fields live on different grids".into()));
    }
    Ok(())
}

/// Nonnegative mass per cell, located at the cell center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub grid: Grid,
    pub masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(grid: Grid, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "{} masses for {} cells",
                masses.len(),
                grid.len()
            )));
        }
        if masses.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::Param("masses must be finite and nonnegative".into()));
        }
        Ok(Self { grid, masses })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self {
            masses: vec![0.0; grid.len()],
            grid: grid.clone(),
        }
    }

    /// Point mass `m` in the cell containing `x`.
    pub fn dirac(grid: &Grid, x: [f64; 2], m: f64) -> Result<Self> {
        let mut mu = Self::zero(grid);
        let k = grid
            .locate(x)
            .ok_or_else(|| Error::Param(format!("point {x:?} outside the grid")))?;
        mu.masses[k] = m;
        Ok(mu)
    }

    /// The measure `f dx`.
    pub fn from_density(f: &Field) -> Self {
        let vol = f.grid.cell_volume();
        Self {
            grid: f.grid.clone(),
            masses: f.values.iter().map(|v| v.max(0.0) * vol).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            masses: self.masses.iter().map(|m| m * c).collect(),
        }
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.masses.len()).filter(|&k| self.masses[k] > 0.0).collect()
    }

    /// `int f dmu`.
    pub fn integrate(&self, f: &Field) -> f64 {
        self.masses.iter().zip(&f.values).map(|(m, v)| m * v).sum()
    }
}

/// Summed-area table of `values * cell_volume`. Integrals over axis-aligned
/// boxes are exact for piecewise-constant data, partial cells included.
#[derive(Debug, Clone)]
pub struct PrefixIntegral {
    grid: Grid,
    table: Vec<f64>,
}

impl PrefixIntegral {
    pub fn new(grid: &Grid, values: &[f64]) -> Self {
        let [n0, n1] = grid.shape;
        let w = n1 + 1;
        let mut table = vec![0.0; (n0 + 1) * w];
        for i in 0..n0 {
            let mut row = 0.0;
            for j in 0..n1 {
                row += values[grid.index(i, j)];
                table[(i + 1) * w + j + 1] = table[i * w + j + 1] + row;
            }
        }
        Self {
            grid: grid.clone(),
            table,
        }
    }

    pub fn of_field(f: &Field) -> Self {
        Self::new(&f.grid, &f.values)
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.table[i * (self.grid.shape[1] + 1) + j]
    }

    /// Bilinear interpolation of the table at fractional index `(u, v)`.
    fn interp(&self, u: f64, v: f64) -> f64 {
        let [n0, n1] = self.grid.shape;
        let i = (u.floor() as usize).min(n0.saturating_sub(1));
        let j = (v.floor() as usize).min(n1.saturating_sub(1));
        let fu = u - i as f64;
        let fv = v - j as f64;
        let a = self.at(i, j);
        let b = self.at(i + 1, j);
        let c = self.at(i, j + 1);
        let d = self.at(i + 1, j + 1);
        a * (1.0 - fu) * (1.0 - fv) + b * fu * (1.0 - fv) + c * (1.0 - fu) * fv + d * fu * fv
    }

    /// `int_{Q ∩ box} f dx`.
    pub fn cube_integral(&self, cube: &CubeSpec) -> f64 {
        let (u0, u1) = self.grid.span(cube, 0);
        let (v0, v1) = self.grid.span(cube, 1);
        if u1 <= u0 || v1 <= v0 {
            return 0.0;
        }
        let s = self.interp(u1, v1) - self.interp(u0, v1) - self.interp(u1, v0)
            + self.interp(u0, v0);
        s * self.grid.cell_volume()
    }

    /// `int f dx` over the axis-parallel box `[lo, hi]`, clipped to the grid box.
    pub fn box_integral(&self, lo: [f64; 2], hi: [f64; 2]) -> f64 {
        let g = &self.grid;
        let frac = |a: usize, x: f64| -> f64 {
            ((x - g.origin[a]) / g.h).clamp(0.0, g.shape[a] as f64)
        };
        let (u0, u1) = (frac(0, lo[0]), frac(0, hi[0]));
        let (v0, v1) = if g.dim == 1 { (0.0, 1.0) } else { (frac(1, lo[1]), frac(1, hi[1])) };
        if u1 <= u0 || v1 <= v0 {
            return 0.0;
        }
        let s = self.interp(u1, v1) - self.interp(u0, v1) - self.interp(u1, v0)
            + self.interp(u0, v0);
        s * g.cell_volume()
    }

    /// Average over `Q ∩ box`, or `None` when the intersection is empty.
    pub fn cube_average(&self, cube: &CubeSpec) -> Option<f64> {
        let vol = self.grid.clipped_volume(cube);
        if vol <= 0.0 {
            None
        } else {
            Some(self.cube_integral(cube) / vol)
        }
    }
}

/// Summed-area table over whole cells, for masses located at cell centers.
#[derive(Debug, Clone)]
pub struct PrefixSum {
    grid: Grid,
    table: Vec<f64>,
}

impl PrefixSum {
    pub fn new(grid: &Grid, masses: &[f64]) -> Self {
        let [n0, n1] = grid.shape;
        let w = n1 + 1;
        let mut table = vec![0.0; (n0 + 1) * w];
        for i in 0..n0 {
            let mut row = 0.0;
            for j in 0..n1 {
                row += masses[grid.index(i, j)];
                table[(i + 1) * w + j + 1] = table[i * w + j + 1] + row;
            }
        }
        Self {
            grid: grid.clone(),
            table,
        }
    }

    pub fn of_measure(mu: &DiscreteMeasure) -> Self {
        Self::new(&mu.grid, &mu.masses)
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.table[i * (self.grid.shape[1] + 1) + j]
    }

    /// Sum over cells `[i0, i1) x [j0, j1)`.
    pub fn block(&self, i0: usize, i1: usize, j0: usize, j1: usize) -> f64 {
        if i1 <= i0 || j1 <= j0 {
            return 0.0;
        }
        (self.at(i1, j1) - self.at(i0, j1) - self.at(i1, j0) + self.at(i0, j0)).max(0.0)
    }

    /// Total mass of cells whose centers lie strictly inside `cube`.
    pub fn cube_mass(&self, cube: &CubeSpec) -> f64 {
        let (i0, i1) = self.grid.center_range(cube, 0);
        let (j0, j1) = self.grid.center_range(cube, 1);
        self.block(i0, i1, j0, j1)
    }
}

/// Average of `field` over `Q ∩ box`, partial cells weighted by overlap.
pub fn cube_average(field: &Field, cube: &CubeSpec) -> Result<f64> {
    let vol = field.grid.clipped_volume(cube);
    if vol <= 0.0 {
        return Err(Error::EmptyIntersection);
    }
    let s: f64 = field
        .grid
        .overlaps(cube)
        .into_iter()
        .map(|(k, v)| field.values[k] * v)
        .sum();
    Ok(s / vol)
}

/// `mu(Q)`: mass of the cells whose centers lie strictly inside `cube`.
pub fn cube_mass(mu: &DiscreteMeasure, cube: &CubeSpec) -> f64 {
    mu.grid
        .cells_inside(cube)
        .into_iter()
        .map(|k| mu.masses[k])
        .sum()
}

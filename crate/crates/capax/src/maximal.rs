//! Local Hardy–Littlewood maximal operators (uncentered, centered,
//! measure-weighted) and the local fractional maximal function of a measure.

use rayon::prelude::*;

use crate::error::{param, Result};
use crate::field::{check_same_grid, DiscreteMeasure, Field, PrefixIntegral, PrefixSum};
use crate::grid::{dyadic_half_lengths, CubeLattice, CubeSpec, Grid};

/// `sup Avg_Q |f|` over the lattice cubes `Q` that contain each cell center,
/// together with the cell itself.
pub fn uncentered_local_maximal(f: &Field, lattice: &CubeLattice) -> Field {
    let grid = &f.grid;
    let abs = f.map(f64::abs);
    let pi = PrefixIntegral::of_field(&abs);
    let mut out = abs.values.clone();
    let averages: Vec<f64> = lattice
        .cubes
        .par_iter()
        .map(|q| pi.cube_average(q).unwrap_or(0.0))
        .collect();
    for (q, &avg) in lattice.cubes.iter().zip(&averages) {
        if q.side() > lattice.rho * (1.0 + 1e-12) {
            continue;
        }
        for k in grid.cells_inside(q) {
            if avg > out[k] {
                out[k] = avg;
            }
        }
    }
    Field {
        grid: grid.clone(),
        values: out,
    }
}

/// `max_r Avg_{Q_r(x)} |f|` over the dyadic radii `h, 2h, ... <= rho/2`.
pub fn centered_local_maximal(f: &Field, rho: f64) -> Field {
    let grid = &f.grid;
    let pi = PrefixIntegral::of_field(&f.map(f64::abs));
    let radii = dyadic_half_lengths(grid.h, rho);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.center(k);
            radii
                .iter()
                .filter_map(|&r| pi.cube_average(&CubeSpec { center: x, half_len: r }))
                .fold(0.0, f64::max)
        })
        .collect();
    Field {
        grid: grid.clone(),
        values,
    }
}

/// Radii `h, 2h, 4h, ... <= rho`.
pub(crate) fn fractional_radii(h: f64, rho: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = h;
    while r <= rho * (1.0 + 1e-12) {
        out.push(r);
        r *= 2.0;
    }
    out
}

/// `M_{alpha,rho} mu(x) = max_r mu(Q_r(x)) / r^{n - alpha}` over dyadic `r <= rho`.
pub fn fractional_local_maximal(mu: &DiscreteMeasure, alpha: f64, rho: f64) -> Result<Field> {
    let grid = &mu.grid;
    let n = grid.dim as f64;
    if !(alpha > 0.0 && alpha < n) {
        return Err(param(format!("alpha = {alpha} must lie in (0, {n})")));
    }
    let ps = PrefixSum::of_measure(mu);
    let radii = fractional_radii(grid.h, rho);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.center(k);
            radii
                .iter()
                .map(|&r| ps.cube_mass(&CubeSpec { center: x, half_len: r }) / r.powf(n - alpha))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(Field {
        grid: grid.clone(),
        values,
    })
}

/// Result of [`measure_weighted_maximal`]: the maximal function and the
/// cells at which no admissible cube carried positive mass.
#[derive(Debug, Clone)]
pub struct WeightedMaximal {
    pub field: Field,
    pub massless: Vec<usize>,
}

/// `sup (1/mu(Q)) int_Q |f| dmu` over lattice cubes containing each cell
/// center; cubes with `mu(Q) = 0` are skipped.
pub fn measure_weighted_maximal(
    f: &Field,
    mu: &DiscreteMeasure,
    lattice: &CubeLattice,
) -> Result<WeightedMaximal> {
    check_same_grid(&f.grid, &mu.grid)?;
    let grid: &Grid = &f.grid;
    let weighted: Vec<f64> = f
        .values
        .iter()
        .zip(&mu.masses)
        .map(|(v, m)| v.abs() * m)
        .collect();
    let num = PrefixSum::new(grid, &weighted);
    let den = PrefixSum::of_measure(mu);
    let mut out = vec![f64::NEG_INFINITY; grid.len()];
    let ratios: Vec<Option<f64>> = lattice
        .cubes
        .par_iter()
        .map(|q| {
            let m = den.cube_mass(q);
            (m > 0.0).then(|| num.cube_mass(q) / m)
        })
        .collect();
    for (q, r) in lattice.cubes.iter().zip(&ratios) {
        let Some(r) = *r else { continue };
        if q.side() > lattice.rho * (1.0 + 1e-12) {
            continue;
        }
        for k in grid.cells_inside(q) {
            if r > out[k] {
                out[k] = r;
            }
        }
    }
    let mut massless = Vec::new();
    for (k, v) in out.iter_mut().enumerate() {
        if *v == f64::NEG_INFINITY {
            if mu.masses[k] > 0.0 {
                *v = f.values[k].abs();
            } else {
                *v = 0.0;
                massless.push(k);
            }
        } else if mu.masses[k] > 0.0 {
            *v = v.max(f.values[k].abs());
        }
    }
    Ok(WeightedMaximal {
        field: Field {
            grid: grid.clone(),
            values: out,
        },
        massless,
    })
}

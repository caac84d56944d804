//! Riesz and Bessel convolutions, the nonlinear potentials `V` and `𝒱`, and
//! the Wolff potentials `𝒲` and `W`.
//!
//! Measures are cell masses at cell centers; convolutions are dense sums over
//! a symmetric lag table, so `K` is its own transpose.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::field::{check_same_grid, DiscreteMeasure, Field, PrefixIntegral, PrefixSum};
use crate::grid::{CubeSpec, Grid, LogTimeGrid};
use crate::weights::{conjugate, dual_weight, WeightField};

/// Sup-norm lags below `rho` by less than this many cells count as outside.
const LAG_SNAP: f64 = 1e-9;

/// `I_{alpha,rho}(x) = |x|_inf^(alpha-n)` on `|x|_inf < rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalRieszKernel {
    pub alpha: f64,
    pub rho: f64,
    pub dim: usize,
}

impl LocalRieszKernel {
    pub fn new(alpha: f64, rho: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < dim as f64) {
            return Err(param(format!("alpha = {alpha} must lie in (0, {dim})")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(param(format!("rho = {rho} must be positive")));
        }
        Ok(Self { alpha, rho, dim })
    }

    /// Kernel at sup-norm distance `r > 0`.
    pub fn value(&self, r: f64) -> f64 {
        if r < self.rho {
            r.powf(self.alpha - self.dim as f64)
        } else {
            0.0
        }
    }

    /// Average of `|y|_inf^(alpha-n)` over one cell of side `h` centered at 0.
    pub fn self_average(&self, h: f64) -> f64 {
        let n = self.dim as f64;
        n / self.alpha * (h / 2.0).powf(self.alpha - n)
    }

    fn lag_table(&self, grid: &Grid) -> LagKernel {
        let h = grid.h;
        let reach = (self.rho / h - LAG_SNAP).ceil().max(0.0) as usize;
        LagKernel::build(grid, reach, |di, dj| {
            if di == 0 && dj == 0 {
                self.self_average(h)
            } else {
                let r = di.max(dj) as f64;
                if r < self.rho / h - LAG_SNAP {
                    self.value(r * h)
                } else {
                    0.0
                }
            }
        })
    }
}

/// `r^(alpha-n)` for `r <= c`, `A r^{-(n+1-alpha)/2} e^{-r}` beyond, with `A`
/// fixed by continuity at `c`. Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselKernelApprox {
    pub alpha: f64,
    pub c_match: f64,
    pub dim: usize,
    amp: f64,
}

impl BesselKernelApprox {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        Self::with_match(alpha, dim, 1.0)
    }

    pub fn with_match(alpha: f64, dim: usize, c_match: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < dim as f64) {
            return Err(param(format!("alpha = {alpha} must lie in (0, {dim})")));
        }
        if !(c_match > 0.0) {
            return Err(param("matching radius must be positive"));
        }
        let n = dim as f64;
        let amp = c_match.powf(alpha - n) / (c_match.powf(-(n + 1.0 - alpha) / 2.0) * (-c_match).exp());
        Ok(Self {
            alpha,
            c_match,
            dim,
            amp,
        })
    }

    pub fn value(&self, r: f64) -> f64 {
        let n = self.dim as f64;
        if r <= self.c_match {
            r.powf(self.alpha - n)
        } else {
            self.amp * r.powf(-(n + 1.0 - self.alpha) / 2.0) * (-r).exp()
        }
    }

    /// Average of `|y|^(alpha-n)` over a cell of side `h` centered at 0.
    /// Assumes the cell lies within the matching radius.
    pub fn self_average(&self, h: f64) -> f64 {
        let a = h / 2.0;
        let al = self.alpha;
        match self.dim {
            1 => a.powf(al - 1.0) / al,
            _ => {
                // 8 a^al / al * int_0^{pi/4} cos^{-al}, over the area 4 a^2
                let m = 512;
                let step = std::f64::consts::FRAC_PI_4 / m as f64;
                let s: f64 = (0..m)
                    .map(|k| ((k as f64 + 0.5) * step).cos().powf(-al) * step)
                    .sum();
                2.0 * a.powf(al - 2.0) / al * s
            }
        }
    }

    fn lag_table(&self, grid: &Grid) -> LagKernel {
        let reach = grid.shape[0].max(grid.shape[1]);
        let h = grid.h;
        LagKernel::build(grid, reach, |di, dj| {
            if di == 0 && dj == 0 {
                self.self_average(h)
            } else {
                self.value(h * ((di * di + dj * dj) as f64).sqrt())
            }
        })
    }
}

/// Translation-invariant symmetric kernel on a grid, stored by absolute lag.
#[derive(Debug, Clone)]
pub(crate) struct LagKernel {
    grid: Grid,
    reach: [usize; 2],
    table: Vec<f64>,
}

impl LagKernel {
    fn build(grid: &Grid, reach: usize, k: impl Fn(usize, usize) -> f64) -> Self {
        let r0 = reach.min(grid.shape[0].saturating_sub(1));
        let r1 = if grid.dim == 1 { 0 } else { reach.min(grid.shape[1].saturating_sub(1)) };
        let mut table = Vec::with_capacity((r0 + 1) * (r1 + 1));
        for di in 0..=r0 {
            for dj in 0..=r1 {
                table.push(k(di, dj));
            }
        }
        Self {
            grid: grid.clone(),
            reach: [r0, r1],
            table,
        }
    }

    pub(crate) fn riesz(grid: &Grid, alpha: f64, rho: f64) -> Result<Self> {
        Ok(LocalRieszKernel::new(alpha, rho, grid.dim)?.lag_table(grid))
    }

    pub(crate) fn bessel(grid: &Grid, alpha: f64) -> Result<Self> {
        Ok(BesselKernelApprox::new(alpha, grid.dim)?.lag_table(grid))
    }

    /// `K(x_a - x_b)`.
    pub(crate) fn entry(&self, a: usize, b: usize) -> f64 {
        let [ai, aj] = self.grid.coords(a);
        let [bi, bj] = self.grid.coords(b);
        let di = ai.abs_diff(bi);
        let dj = aj.abs_diff(bj);
        if di > self.reach[0] || dj > self.reach[1] {
            return 0.0;
        }
        self.table[di * (self.reach[1] + 1) + dj]
    }

    /// `out_a = sum_b K(x_a - x_b) src_b` over every cell.
    pub(crate) fn apply(&self, src: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let [n0, n1] = g.shape;
        let [r0, r1] = self.reach;
        let w = r1 + 1;
        (0..g.len())
            .into_par_iter()
            .map(|a| {
                let [i, j] = g.coords(a);
                let (i0, i1) = (i.saturating_sub(r0), (i + r0 + 1).min(n0));
                let (j0, j1) = (j.saturating_sub(r1), (j + r1 + 1).min(n1));
                let mut s = 0.0;
                for bi in i0..i1 {
                    let row = i.abs_diff(bi) * w;
                    let base = bi * n1;
                    for bj in j0..j1 {
                        s += self.table[row + j.abs_diff(bj)] * src[base + bj];
                    }
                }
                s
            })
            .collect()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(param(format!("p = {p} must exceed 1")));
    }
    Ok(())
}

/// `(I_{alpha,rho} * mu)(x_i) = sum_j K(x_i - x_j) m_j`.
pub fn riesz_convolve(mu: &DiscreteMeasure, alpha: f64, rho: f64) -> Result<Field> {
    let k = LagKernel::riesz(&mu.grid, alpha, rho)?;
    Field::new(mu.grid.clone(), k.apply(&mu.masses))
}

/// `I_{alpha,rho} * f` for a density `f`.
pub fn riesz_convolve_field(f: &Field, alpha: f64, rho: f64) -> Result<Field> {
    let vol = f.grid.cell_volume();
    let k = LagKernel::riesz(&f.grid, alpha, rho)?;
    let src: Vec<f64> = f.values.iter().map(|v| v * vol).collect();
    Field::new(f.grid.clone(), k.apply(&src))
}

/// `G_alpha * mu` with the matched kernel, summed over the whole grid box.
pub fn bessel_convolve(mu: &DiscreteMeasure, alpha: f64) -> Result<Field> {
    let k = LagKernel::bessel(&mu.grid, alpha)?;
    Field::new(mu.grid.clone(), k.apply(&mu.masses))
}

/// `V = I * ((I * mu)^(p'-1) w')`.
#[allow(non_snake_case)]
pub fn nonlinear_potential_V(
    mu: &DiscreteMeasure,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
) -> Result<Field> {
    check_p(p)?;
    check_same_grid(&mu.grid, omega.grid())?;
    let k = LagKernel::riesz(&mu.grid, alpha, rho)?;
    let u = k.apply(&mu.masses);
    let wd = dual_weight(omega, p)?;
    let e = conjugate(p) - 1.0;
    let vol = mu.grid.cell_volume();
    let g: Vec<f64> = u
        .iter()
        .zip(wd.values())
        .map(|(u, w)| u.powf(e) * w * vol)
        .collect();
    Field::new(mu.grid.clone(), k.apply(&g))
}

/// Both sides of `int V dmu = int (I*mu)^{p'} w' dx`.
pub fn energy_identity_sides(
    mu: &DiscreteMeasure,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
) -> Result<(f64, f64)> {
    let v = nonlinear_potential_V(mu, omega, alpha, p, rho)?;
    let u = riesz_convolve(mu, alpha, rho)?;
    let wd = dual_weight(omega, p)?;
    let pp = conjugate(p);
    let vol = mu.grid.cell_volume();
    let rhs: f64 = u
        .values
        .iter()
        .zip(wd.values())
        .map(|(u, w)| u.powf(pp) * w * vol)
        .sum();
    Ok((mu.integrate(&v), rhs))
}

fn check_tgrid(tgrid: &LogTimeGrid, rho: f64) -> Result<()> {
    if tgrid.t_max > rho * (1.0 + 1e-12) {
        return Err(param(format!(
            "time grid reaches {} beyond rho = {rho}",
            tgrid.t_max
        )));
    }
    Ok(())
}

/// `int_0^{t0} t^{alpha p/(p-1)} dt/t`.
fn small_t_factor(alpha: f64, p: f64, t0: f64) -> f64 {
    let e = alpha * p / (p - 1.0);
    t0.powf(e) / e
}

/// `𝒲(x) = int_0^rho (t^{alpha p} mu(Q_t(x)) / w(Q_t(x)))^{1/(p-1)} dt/t`.
///
/// The log-t nodes cover `[t_min, t_max]`; below `t_min` the cell's mass is
/// treated as spread uniformly over the cell and integrated in closed form.
pub fn wolff_cal(
    mu: &DiscreteMeasure,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
    tgrid: &LogTimeGrid,
) -> Result<Field> {
    check_p(p)?;
    check_tgrid(tgrid, rho)?;
    let grid = &mu.grid;
    check_same_grid(grid, omega.grid())?;
    let nodes = tgrid.nodes();
    let masses = PrefixSum::of_measure(mu);
    let wint = PrefixIntegral::of_field(omega.field());
    let e = 1.0 / (p - 1.0);
    let ap = alpha * p;
    let hn = grid.cell_volume();
    let tail = small_t_factor(alpha, p, tgrid.t_min);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.center(i);
            let mut s = 0.0;
            for &(t, w) in &nodes {
                let q = CubeSpec { center: x, half_len: t };
                let m = masses.cube_mass(&q);
                if m > 0.0 {
                    s += (t.powf(ap) * m / wint.cube_integral(&q)).powf(e) * w;
                }
            }
            let m = mu.masses[i];
            if m > 0.0 {
                s += (m / (omega.values()[i] * hn)).powf(e) * tail;
            }
            s
        })
        .collect();
    Field::new(grid.clone(), values)
}

/// `W(x) = int_0^rho (mu(Q_t(x)) / t^{n - alpha p})^{1/(p-1)} Avg_{Q_t(x)} w' dt/t`.
pub fn wolff_variant(
    mu: &DiscreteMeasure,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
    tgrid: &LogTimeGrid,
) -> Result<Field> {
    check_p(p)?;
    check_tgrid(tgrid, rho)?;
    let grid = &mu.grid;
    check_same_grid(grid, omega.grid())?;
    let nodes = tgrid.nodes();
    let masses = PrefixSum::of_measure(mu);
    let wd = dual_weight(omega, p)?;
    let wdint = PrefixIntegral::of_field(wd.field());
    let e = 1.0 / (p - 1.0);
    let n = grid.dim as f64;
    let hn = grid.cell_volume();
    let tail = small_t_factor(alpha, p, tgrid.t_min);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.center(i);
            let mut s = 0.0;
            for &(t, w) in &nodes {
                let q = CubeSpec { center: x, half_len: t };
                let m = masses.cube_mass(&q);
                if m > 0.0 {
                    let avg = wdint.cube_average(&q).unwrap_or(0.0);
                    s += (m / t.powf(n - alpha * p)).powf(e) * avg * w;
                }
            }
            let m = mu.masses[i];
            if m > 0.0 {
                s += (m * 2f64.powf(n) / hn).powf(e) * wd.values()[i] * tail;
            }
            s
        })
        .collect();
    Field::new(grid.clone(), values)
}

/// The space-time kernel `k(x,(y,t)) = t^{alpha-n} chi(|x-y|_inf < t)` on
/// `grid x tgrid`, with `dnu = w'(y) dy dt/t`.
///
/// Atoms are indexed `k * grid.len() + j` for node `k` and cell `j`.
#[derive(Debug, Clone)]
pub struct SpaceTimeKernel {
    pub grid: Grid,
    pub alpha: f64,
    pub rho: f64,
    pub nodes: Vec<(f64, f64)>,
}

impl SpaceTimeKernel {
    pub fn new(grid: &Grid, alpha: f64, rho: f64, tgrid: &LogTimeGrid) -> Result<Self> {
        LocalRieszKernel::new(alpha, rho, grid.dim)?;
        check_tgrid(tgrid, rho)?;
        Ok(Self {
            grid: grid.clone(),
            alpha,
            rho,
            nodes: tgrid.nodes(),
        })
    }

    pub fn atoms(&self) -> usize {
        self.nodes.len() * self.grid.len()
    }

    /// `nu` mass of every atom.
    pub fn atom_measure(&self, dual_w: &[f64]) -> Vec<f64> {
        let hn = self.grid.cell_volume();
        self.nodes
            .iter()
            .flat_map(|&(_, w)| dual_w.iter().map(move |d| d * hn * w))
            .collect()
    }

    fn scale(&self, t: f64) -> f64 {
        t.powf(self.alpha - self.grid.dim as f64)
    }

    /// `k(mu, (y_j, t_k)) = t_k^{alpha-n} mu(Q_{t_k}(y_j))`.
    pub fn apply_adjoint(&self, masses: &[f64]) -> Vec<f64> {
        let ps = PrefixSum::new(&self.grid, masses);
        let n = self.grid.len();
        let mut out = vec![0.0; self.atoms()];
        out.par_chunks_mut(n).enumerate().for_each(|(k, chunk)| {
            let t = self.nodes[k].0;
            let c = self.scale(t);
            for (j, o) in chunk.iter_mut().enumerate() {
                let q = CubeSpec {
                    center: self.grid.center(j),
                    half_len: t,
                };
                *o = c * ps.cube_mass(&q);
            }
        });
        out
    }

    /// `k(x_i, g)` for atom masses `g` (already multiplied by `nu`).
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let per_node: Vec<Vec<f64>> = self
            .nodes
            .par_iter()
            .enumerate()
            .map(|(k, &(t, _))| {
                let ps = PrefixSum::new(&self.grid, &g[k * n..(k + 1) * n]);
                let c = self.scale(t);
                (0..n)
                    .map(|i| {
                        let q = CubeSpec {
                            center: self.grid.center(i),
                            half_len: t,
                        };
                        c * ps.cube_mass(&q)
                    })
                    .collect()
            })
            .collect();
        let mut out = vec![0.0; n];
        for v in &per_node {
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
        out
    }
}

/// `𝒱(x) = k(x, (k(mu, .))^{p'-1} nu)` over the space-time discretization.
#[allow(non_snake_case)]
pub fn nonlinear_V_cal(
    mu: &DiscreteMeasure,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
    tgrid: &LogTimeGrid,
) -> Result<Field> {
    check_p(p)?;
    check_same_grid(&mu.grid, omega.grid())?;
    let st = SpaceTimeKernel::new(&mu.grid, alpha, rho, tgrid)?;
    let wd = dual_weight(omega, p)?;
    let nu = st.atom_measure(wd.values());
    let e = conjugate(p) - 1.0;
    let g: Vec<f64> = st
        .apply_adjoint(&mu.masses)
        .iter()
        .zip(&nu)
        .map(|(k, n)| k.powf(e) * n)
        .collect();
    Field::new(mu.grid.clone(), st.apply(&g))
}

/// Which potential to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Riesz,
    Bessel,
    V,
    Vcal,
    Wolff,
    Wvariant,
}

impl std::str::FromStr for PotentialKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "riesz" => Self::Riesz,
            "bessel" => Self::Bessel,
            "v" => Self::V,
            "vcal" => Self::Vcal,
            "wolff" => Self::Wolff,
            "wvariant" => Self::Wvariant,
            _ => return Err(Error::Parse(format!("unknown potential {s:?}"))),
        })
    }
}

/// Dispatches to one of the potentials with the default time grid.
pub fn evaluate(
    kind: PotentialKind,
    mu: &DiscreteMeasure,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
) -> Result<Field> {
    let tg = || LogTimeGrid::for_grid(&mu.grid, rho);
    match kind {
        PotentialKind::Riesz => riesz_convolve(mu, alpha, rho),
        PotentialKind::Bessel => bessel_convolve(mu, alpha),
        PotentialKind::V => nonlinear_potential_V(mu, omega, alpha, p, rho),
        PotentialKind::Vcal => nonlinear_V_cal(mu, omega, alpha, p, rho, &tg()?),
        PotentialKind::Wolff => wolff_cal(mu, omega, alpha, p, rho, &tg()?),
        PotentialKind::Wvariant => wolff_variant(mu, omega, alpha, p, rho, &tg()?),
    }
}

/// `int_{delta <= |x-y|_inf < rho} |x-y|_inf^{alpha-n} dmu(y)` by direct
/// summation; `delta = 0` with `x` off the support gives the full ball.
pub fn annulus_direct(mu: &DiscreteMeasure, x: [f64; 2], alpha: f64, delta: f64, rho: f64) -> f64 {
    let g = &mu.grid;
    let n = g.dim as f64;
    mu.masses
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(j, m)| {
            let r = g.dist(x, g.center(j));
            if r >= delta && r < rho && r > 0.0 {
                m * r.powf(alpha - n)
            } else {
                0.0
            }
        })
        .sum()
}

/// Layer-cake side `(n-alpha) int_delta^rho mu(Q_r(x)) r^{alpha-n} dr/r
/// + mu(Q_rho(x)) rho^{alpha-n} - mu(Q_delta(x)) delta^{alpha-n}`, with
/// the `delta` term dropped at `delta = 0`. `rho = inf` uses the exact tail
/// beyond the support.
pub fn annulus_layer_cake(
    mu: &DiscreteMeasure,
    x: [f64; 2],
    alpha: f64,
    delta: f64,
    rho: f64,
    nodes_per_octave: usize,
) -> Result<f64> {
    let g = &mu.grid;
    let n = g.dim as f64;
    let ball = |r: f64| -> f64 {
        mu.masses
            .iter()
            .enumerate()
            .filter(|(j, m)| **m > 0.0 && g.dist(x, g.center(*j)) < r)
            .map(|(_, m)| m)
            .sum()
    };
    let lo = if delta > 0.0 { delta } else { g.h / 64.0 };
    let (hi, tail) = if rho.is_finite() {
        (rho, ball(rho) * rho.powf(alpha - n))
    } else {
        // past the farthest mass mu(Q_r) is the total; integrate in closed form
        let far = (0..g.len())
            .filter(|&j| mu.masses[j] > 0.0)
            .map(|j| g.dist(x, g.center(j)))
            .fold(lo, f64::max)
            * 2.0
            + g.h;
        (far, 0.0)
    };
    let tg = LogTimeGrid::new(lo, hi, nodes_per_octave)?;
    let mut s = 0.0;
    for (r, w) in tg.nodes() {
        s += ball(r) * r.powf(alpha - n) * w;
    }
    s *= n - alpha;
    if !rho.is_finite() {
        s += mu.total() * hi.powf(alpha - n);
    }
    let head = if delta > 0.0 { ball(delta) * delta.powf(alpha - n) } else { 0.0 };
    Ok(s + tail - head)
}

//! Weighted capacities as convex programs.
//!
//! Every capacity here has the form
//! `C(E) = inf { sum_a nu_a f_a^p : f >= 0, sum_a k_ia f_a nu_a >= g_i, i in E }`
//! for a positive kernel `k` and atom measure `nu`. The solver maximizes the
//! concave dual `p g.l - (p-1) sum_a nu_a k(l)_a^{p'}` over `l >= 0`, where
//! `k(l)_a = sum_i k_ia l_i`, and recovers `f = k(l)^{p'-1}`.
//!
//! Each returned solution carries two certificates: the lower bound
//! `(g.l / |k(l)|_{p', nu})^p` from any `l >= 0`, and the upper bound
//! `c^p sum nu f^p` from the rescaled feasible `c f`.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::field::{check_same_grid, DiscreteMeasure, Field, PrefixIntegral};
use crate::grid::{CubeSpec, Grid, LogTimeGrid, Point};
use crate::potentials::{nonlinear_potential_V, LagKernel, SpaceTimeKernel};
use crate::weights::{conjugate, dual_weight, WeightField};

/// A finite set of grid cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetSet {
    pub grid: Grid,
    pub cells: Vec<usize>,
}

impl TargetSet {
    pub fn new(grid: &Grid, cells: impl IntoIterator<Item = usize>) -> Result<Self> {
        let set: BTreeSet<usize> = cells.into_iter().collect();
        if let Some(&c) = set.iter().next_back() {
            if c >= grid.len() {
                return Err(param(format!("cell {c} outside a grid of {} cells", grid.len())));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            cells: set.into_iter().collect(),
        })
    }

    pub fn empty(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            cells: Vec::new(),
        }
    }

    /// Cells whose centers lie in the closed box `[lo, hi]`.
    pub fn from_box(grid: &Grid, lo: Point, hi: Point) -> Self {
        let eps = 1e-9 * grid.h;
        let cells = (0..grid.len())
            .filter(|&k| {
                let c = grid.center(k);
                (0..grid.dim).all(|a| c[a] >= lo[a] - eps && c[a] <= hi[a] + eps)
            })
            .collect();
        Self {
            grid: grid.clone(),
            cells,
        }
    }

    /// Cells whose centers lie strictly inside the cube `Q_r(a)`.
    pub fn cube(grid: &Grid, a: Point, r: f64) -> Self {
        Self {
            grid: grid.clone(),
            cells: grid.cells_inside(&CubeSpec { center: a, half_len: r }),
        }
    }

    /// Cells where `mask` holds.
    pub fn from_mask(grid: &Grid, mask: impl Fn(usize) -> bool) -> Self {
        Self {
            grid: grid.clone(),
            cells: (0..grid.len()).filter(|&k| mask(k)).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    pub fn is_subset(&self, other: &TargetSet) -> bool {
        self.cells.iter().all(|c| other.contains(*c))
    }

    pub fn union(&self, other: &TargetSet) -> TargetSet {
        let cells: BTreeSet<usize> = self.cells.iter().chain(&other.cells).copied().collect();
        TargetSet {
            grid: self.grid.clone(),
            cells: cells.into_iter().collect(),
        }
    }

    pub fn intersect_cube(&self, cube: &CubeSpec) -> TargetSet {
        let inside = self.grid.cells_inside(cube);
        TargetSet {
            grid: self.grid.clone(),
            cells: inside.into_iter().filter(|c| self.contains(*c)).collect(),
        }
    }

    /// Lebesgue measure of the union of member cells.
    pub fn volume(&self) -> f64 {
        self.cells.len() as f64 * self.grid.cell_volume()
    }

    /// `w(E)`.
    pub fn weight_measure(&self, w: &WeightField) -> f64 {
        let vol = self.grid.cell_volume();
        self.cells.iter().map(|&c| w.values()[c] * vol).sum()
    }
}

/// Which capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `R^w_{alpha,p;rho}` with the truncated Riesz kernel.
    Riesz { alpha: f64, rho: f64 },
    /// `B^w_{alpha,p}` with the matched Bessel kernel over the grid box.
    Bessel { alpha: f64 },
    /// `ℛ^w_{alpha,p;rho}` over the space-time kernel.
    Variant { alpha: f64, rho: f64 },
}

impl KernelSpec {
    pub fn alpha(&self) -> f64 {
        match *self {
            KernelSpec::Riesz { alpha, .. }
            | KernelSpec::Bessel { alpha }
            | KernelSpec::Variant { alpha, .. } => alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once `(upper - lower) / upper` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations between certificate evaluations.
    pub check_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50_000,
            check_every: 10,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacitySolution {
    /// Certified upper bound; the reported capacity.
    pub value: f64,
    pub value_upper: f64,
    pub value_lower: f64,
    /// `(value_upper - value_lower) / value_upper`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Polished feasible primal, one entry per atom.
    #[serde(skip)]
    pub primal: Vec<f64>,
    /// Grid cell of each atom.
    #[serde(skip)]
    pub atom_cells: Vec<usize>,
    /// Dual measure on `E`, scaled so that its mass approximates the capacity.
    #[serde(skip)]
    pub dual_mu: Option<DiscreteMeasure>,
    /// `max_i g_i / (K f)_i` for the unpolished primal.
    pub polish_factor: f64,
}

impl CapacitySolution {
    fn zero(grid: &Grid) -> Self {
        Self {
            value: 0.0,
            value_upper: 0.0,
            value_lower: 0.0,
            gap: 0.0,
            iterations: 0,
            converged: true,
            primal: Vec::new(),
            atom_cells: Vec::new(),
            dual_mu: Some(DiscreteMeasure::zero(grid)),
            polish_factor: 1.0,
        }
    }

    /// Normalized dual mass `mu(E)` with `|K^T mu|_{p'} = 1`; equals `lower^{1/p}`.
    pub fn normalized_dual_mass(&self, p: f64) -> f64 {
        self.value_lower.powf(1.0 / p)
    }

    /// The primal as a field when atoms are grid cells (Riesz, Bessel);
    /// space-time atoms are summed over time.
    pub fn primal_field(&self, grid: &Grid) -> Field {
        let mut f = Field::zeros(grid);
        for (v, &c) in self.primal.iter().zip(&self.atom_cells) {
            f.values[c] += v;
        }
        f
    }
}

/// The kernel restricted to rows in `E`.
enum Operator {
    Dense {
        /// `k_ia`, row-major `|E| x atoms`.
        rows: Vec<f64>,
        /// Transpose of `rows`.
        cols: Vec<f64>,
        m: usize,
    },
    SpaceTime {
        st: SpaceTimeKernel,
        targets: Vec<usize>,
    },
}

struct Problem {
    op: Operator,
    nu: Vec<f64>,
    g: Vec<f64>,
    atom_cells: Vec<usize>,
    p: f64,
}

impl Problem {
    fn atoms(&self) -> usize {
        self.nu.len()
    }

    /// `k(l)_a = sum_i k_ia l_i`.
    fn adjoint(&self, lam: &[f64]) -> Vec<f64> {
        match &self.op {
            Operator::Dense { cols, m, .. } => cols
                .par_chunks(*m)
                .map(|c| c.iter().zip(lam).map(|(k, l)| k * l).sum())
                .collect(),
            Operator::SpaceTime { st, targets } => {
                let mut masses = vec![0.0; st.grid.len()];
                for (&c, l) in targets.iter().zip(lam) {
                    masses[c] = *l;
                }
                st.apply_adjoint(&masses)
            }
        }
    }

    /// `(K f)_i = sum_a k_ia f_a nu_a`.
    fn forward(&self, f: &[f64]) -> Vec<f64> {
        let fnu: Vec<f64> = f.iter().zip(&self.nu).map(|(f, n)| f * n).collect();
        match &self.op {
            Operator::Dense { rows, .. } => rows
                .par_chunks(self.atoms())
                .map(|r| r.iter().zip(&fnu).map(|(k, f)| k * f).sum())
                .collect(),
            Operator::SpaceTime { st, targets } => {
                let v = st.apply(&fnu);
                targets.iter().map(|&c| v[c]).collect()
            }
        }
    }

    fn primal_of(&self, k: &[f64]) -> Vec<f64> {
        let e = conjugate(self.p) - 1.0;
        k.iter().map(|v| v.powf(e)).collect()
    }

    /// `sum_a nu_a k_a^{p'}`.
    fn dual_norm(&self, k: &[f64]) -> f64 {
        let pp = conjugate(self.p);
        k.iter().zip(&self.nu).map(|(k, n)| k.powf(pp) * n).sum()
    }

    fn gl(&self, lam: &[f64]) -> f64 {
        self.g.iter().zip(lam).map(|(g, l)| g * l).sum()
    }

    /// `F(l) = -g.l + (1/p') sum nu k^{p'}`, to be minimized.
    fn objective(&self, lam: &[f64], k: &[f64]) -> f64 {
        -self.gl(lam) + self.dual_norm(k) / conjugate(self.p)
    }

    fn lower_bound(&self, lam: &[f64], k: &[f64]) -> f64 {
        let gl = self.gl(lam);
        let nrm = self.dual_norm(k);
        if gl <= 0.0 || nrm <= 0.0 {
            return 0.0;
        }
        gl.powf(self.p) / nrm.powf(self.p - 1.0)
    }

    /// Feasible rescaling of `f = k^{p'-1}`: `(upper, c, c f)`.
    fn upper_bound(&self, k: &[f64]) -> (f64, f64, Vec<f64>) {
        let f = self.primal_of(k);
        let kf = self.forward(&f);
        let c = self
            .g
            .iter()
            .zip(&kf)
            .filter(|(g, _)| **g > 0.0)
            .map(|(g, v)| if *v > 0.0 { g / v } else { f64::INFINITY })
            .fold(0.0, f64::max);
        let mass: f64 = f.iter().zip(&self.nu).map(|(f, n)| f.powf(self.p) * n).sum();
        let up = c.powf(self.p) * mass;
        (up, c, f.into_iter().map(|v| v * c).collect())
    }

    /// Scale maximizing the dual along the ray through `lam`.
    fn best_scale(&self, lam: &[f64], k: &[f64]) -> f64 {
        let gl = self.gl(lam);
        let nrm = self.dual_norm(k);
        if gl <= 0.0 || nrm <= 0.0 {
            return 1.0;
        }
        (gl / nrm).powf(self.p - 1.0)
    }
}

struct Outcome {
    lower: f64,
    upper: f64,
    lam: Vec<f64>,
    primal: Vec<f64>,
    polish: f64,
    iterations: usize,
    converged: bool,
}

/// Preconditioned FISTA with backtracking and function-value restart.
fn solve(pb: &Problem, opts: &SolverOptions) -> Outcome {
    let m = pb.g.len();
    let ones = vec![1.0; m];
    let k1 = pb.adjoint(&ones);
    // row sums of the Hessian at a uniform point, up to a scalar
    let d: Vec<f64> = pb
        .forward(&pb.primal_of(&k1))
        .into_iter()
        .map(|v| v.max(1e-300))
        .collect();
    let s0 = pb.best_scale(&ones, &k1);
    let mut lam: Vec<f64> = ones.iter().map(|_| s0).collect();
    let mut k = pb.adjoint(&lam);
    let mut obj = pb.objective(&lam, &k);
    let pp = conjugate(pb.p);
    let mut lip = (pp - 1.0) * s0.powf(pp - 2.0);
    if !lip.is_finite() || lip <= 0.0 {
        lip = 1.0;
    }
    let mut y = lam.clone();
    let mut ky = k.clone();
    let mut t = 1.0f64;

    let mut best_lower = pb.lower_bound(&lam, &k);
    let mut best_lam = lam.clone();
    let (mut best_upper, mut best_polish, mut best_primal) = pb.upper_bound(&k);
    let mut it = 0;
    let mut converged = (best_upper - best_lower) <= opts.tol * best_upper;

    while !converged && it < opts.max_iter {
        it += 1;
        let fy = pb.objective(&y, &ky);
        let grad: Vec<f64> = pb
            .forward(&pb.primal_of(&ky))
            .iter()
            .zip(&pb.g)
            .map(|(kf, g)| kf - g)
            .collect();
        let (next, knext, fnext) = loop {
            let cand: Vec<f64> = (0..m)
                .map(|i| (y[i] - grad[i] / (lip * d[i])).max(0.0))
                .collect();
            let kc = pb.adjoint(&cand);
            let fc = pb.objective(&cand, &kc);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for i in 0..m {
                let dx = cand[i] - y[i];
                lin += grad[i] * dx;
                quad += d[i] * dx * dx;
            }
            if fc <= fy + lin + 0.5 * lip * quad + 1e-15 * fy.abs() || lip > 1e300 {
                break (cand, kc, fc);
            }
            lip *= 2.0;
        };
        if fnext > obj {
            if t == 1.0 {
                // no descent even without momentum: rounding floor reached
                break;
            }
            // restart momentum from the last iterate
            t = 1.0;
            y = lam.clone();
            ky = k.clone();
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        y = (0..m)
            .map(|i| (next[i] + beta * (next[i] - lam[i])).max(0.0))
            .collect();
        ky = pb.adjoint(&y);
        lam = next;
        k = knext;
        obj = fnext;
        t = t_next;
        lip *= 0.9;

        if it % opts.check_every == 0 || it == opts.max_iter {
            let lo = pb.lower_bound(&lam, &k);
            if lo > best_lower {
                best_lower = lo;
                best_lam = lam.clone();
            }
            let (up, c, f) = pb.upper_bound(&k);
            if up < best_upper {
                best_upper = up;
                best_polish = c;
                best_primal = f;
            }
            converged = (best_upper - best_lower) <= opts.tol * best_upper;
        }
    }
    if !converged {
        let lo = pb.lower_bound(&lam, &k);
        if lo > best_lower {
            best_lower = lo;
            best_lam = lam.clone();
        }
        let (up, c, f) = pb.upper_bound(&k);
        if up < best_upper {
            best_upper = up;
            best_polish = c;
            best_primal = f;
        }
        converged = (best_upper - best_lower) <= opts.tol * best_upper;
    }
    let kb = pb.adjoint(&best_lam);
    let s = pb.best_scale(&best_lam, &kb);
    Outcome {
        // both bounds are certificates; only rounding can invert them
        lower: best_lower.min(best_upper),
        upper: best_upper,
        lam: best_lam.into_iter().map(|l| l * s).collect(),
        primal: best_primal,
        polish: best_polish,
        iterations: it,
        converged,
    }
}

fn obstacle_values(e: &TargetSet, obstacle: Option<&Field>) -> Result<Vec<f64>> {
    match obstacle {
        None => Ok(vec![1.0; e.len()]),
        Some(g) => {
            check_same_grid(&e.grid, &g.grid)?;
            let vals: Vec<f64> = e.cells.iter().map(|&c| g.values[c]).collect();
            if vals.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(param("obstacle must be nonnegative and finite"));
            }
            Ok(vals)
        }
    }
}

fn build_problem(
    e: &TargetSet,
    omega: &WeightField,
    kernel: &KernelSpec,
    p: f64,
    g: Vec<f64>,
) -> Result<Problem> {
    let grid = &e.grid;
    match *kernel {
        KernelSpec::Riesz { alpha, rho } => {
            let lag = LagKernel::riesz(grid, alpha, rho)?;
            Ok(dense_problem(e, omega, &lag, p, g))
        }
        KernelSpec::Bessel { alpha } => {
            let lag = LagKernel::bessel(grid, alpha)?;
            Ok(dense_problem(e, omega, &lag, p, g))
        }
        KernelSpec::Variant { alpha, rho } => {
            let tg = LogTimeGrid::for_grid(grid, rho)?;
            let st = SpaceTimeKernel::new(grid, alpha, rho, &tg)?;
            let nu = st.atom_measure(dual_weight(omega, p)?.values());
            let n = grid.len();
            let atom_cells = (0..st.atoms()).map(|a| a % n).collect();
            Ok(Problem {
                op: Operator::SpaceTime {
                    st,
                    targets: e.cells.clone(),
                },
                nu,
                g,
                atom_cells,
                p,
            })
        }
    }
}

/// `k_ia = K(x_i - x_a) / w_a`, `nu_a = w_a h^n`, over atoms seen by `E`.
fn dense_problem(e: &TargetSet, omega: &WeightField, lag: &LagKernel, p: f64, g: Vec<f64>) -> Problem {
    let grid = &e.grid;
    let active: Vec<usize> = (0..grid.len())
        .into_par_iter()
        .filter(|&a| e.cells.iter().any(|&i| lag.entry(i, a) > 0.0))
        .collect();
    let na = active.len();
    let w = omega.values();
    let rows: Vec<f64> = e
        .cells
        .par_iter()
        .flat_map_iter(|&i| active.iter().map(move |&a| lag.entry(i, a) / w[a]))
        .collect();
    let m = e.len();
    let mut cols = vec![0.0; rows.len()];
    for r in 0..m {
        for c in 0..na {
            cols[c * m + r] = rows[r * na + c];
        }
    }
    let vol = grid.cell_volume();
    Problem {
        op: Operator::Dense { rows, cols, m },
        nu: active.iter().map(|&a| w[a] * vol).collect(),
        g,
        atom_cells: active,
        p,
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(param(format!("p = {p} must exceed 1")));
    }
    Ok(())
}

/// The capacity of `E` with obstacle `g` (default 1): minimal `|f|^p` among
/// nonnegative `f` with `K f >= g` at every member cell center.
pub fn capacity_primal(
    e: &TargetSet,
    omega: &WeightField,
    kernel: &KernelSpec,
    p: f64,
    obstacle: Option<&Field>,
    opts: &SolverOptions,
) -> Result<CapacitySolution> {
    check_p(p)?;
    check_same_grid(&e.grid, omega.grid())?;
    let g = obstacle_values(e, obstacle)?;
    if e.is_empty() || g.iter().all(|v| *v == 0.0) {
        // still validate the kernel parameters
        build_problem(&TargetSet::empty(&e.grid), omega, kernel, p, Vec::new())?;
        return Ok(CapacitySolution::zero(&e.grid));
    }
    let pb = build_problem(e, omega, kernel, p, g)?;
    let out = solve(&pb, opts);
    let mut mu = DiscreteMeasure::zero(&e.grid);
    for (&c, l) in e.cells.iter().zip(&out.lam) {
        mu.masses[c] = *l;
    }
    let gap = if out.upper > 0.0 {
        (out.upper - out.lower) / out.upper
    } else {
        0.0
    };
    Ok(CapacitySolution {
        value: out.upper,
        value_upper: out.upper,
        value_lower: out.lower,
        gap,
        iterations: out.iterations,
        converged: out.converged,
        primal: out.primal,
        atom_cells: pb.atom_cells,
        dual_mu: Some(mu),
        polish_factor: out.polish,
    })
}

/// The dual program on its own: `value` is the certified lower bound
/// `sup mu(E)^p` over `mu >= 0` on `E` with `|K^T mu|_{L^{p'}(w')} <= 1`.
pub fn capacity_dual(
    e: &TargetSet,
    omega: &WeightField,
    kernel: &KernelSpec,
    p: f64,
    opts: &SolverOptions,
) -> Result<CapacitySolution> {
    let mut s = capacity_primal(e, omega, kernel, p, None, opts)?;
    s.value = s.value_lower;
    Ok(s)
}

/// `R^w_{alpha,p;rho}(E)`.
pub fn capacity_riesz(
    e: &TargetSet,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
    opts: &SolverOptions,
) -> Result<CapacitySolution> {
    capacity_primal(e, omega, &KernelSpec::Riesz { alpha, rho }, p, None, opts)
}

/// `ℛ^w_{alpha,p;rho}(E)` over the space-time kernel.
#[allow(non_snake_case)]
pub fn capacity_variant_R(
    e: &TargetSet,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
    opts: &SolverOptions,
) -> Result<CapacitySolution> {
    capacity_primal(e, omega, &KernelSpec::Variant { alpha, rho }, p, None, opts)
}

/// `B^w_{alpha,p}(E)`, the kernel summed over the whole grid box.
pub fn bessel_capacity(
    e: &TargetSet,
    omega: &WeightField,
    p: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<CapacitySolution> {
    capacity_primal(e, omega, &KernelSpec::Bessel { alpha }, p, None, opts)
}

#[derive(Debug, Clone)]
pub struct EquilibriumMeasure {
    pub mu: DiscreteMeasure,
    pub capacity: CapacitySolution,
    /// `V^mu` evaluated independently of the solver.
    pub potential: Field,
    pub max_v_on_support: f64,
    pub min_v_on_e: f64,
}

/// The optimal dual measure for `R^w_{alpha,p;rho}(E)`, with `V^mu` checked
/// on `E` and on the support.
pub fn equilibrium_measure(
    e: &TargetSet,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
    opts: &SolverOptions,
) -> Result<EquilibriumMeasure> {
    let cap = capacity_riesz(e, omega, alpha, p, rho, opts)?;
    if !(cap.value > 0.0 && cap.value.is_finite()) {
        return Err(param("equilibrium measure needs 0 < capacity < inf"));
    }
    let mu = cap.dual_mu.clone().ok_or_else(|| param("missing dual measure"))?;
    let v = nonlinear_potential_V(&mu, omega, alpha, p, rho)?;
    let peak = mu.masses.iter().cloned().fold(0.0, f64::max);
    let max_v_on_support = mu
        .masses
        .iter()
        .zip(&v.values)
        .filter(|(m, _)| **m > 1e-6 * peak)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let min_v_on_e = e
        .cells
        .iter()
        .map(|&c| v.values[c])
        .fold(f64::INFINITY, f64::min);
    Ok(EquilibriumMeasure {
        mu,
        capacity: cap,
        potential: v,
        max_v_on_support,
        min_v_on_e,
    })
}

/// `(int_r^{2 rho} w'(Q_t(a)) / t^{(n-alpha)p'} dt/t)^{1-p}`; `+inf` once
/// `r >= 2 rho`.
pub fn capacity_cube_formula(
    a: Point,
    r: f64,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
) -> Result<f64> {
    check_p(p)?;
    let grid = omega.grid();
    if !(alpha > 0.0 && alpha < grid.dim as f64) {
        return Err(param(format!("alpha = {alpha} must lie in (0, {})", grid.dim)));
    }
    if !(r > 0.0) {
        return Err(param(format!("r = {r} must be positive")));
    }
    if r >= 2.0 * rho {
        return Ok(f64::INFINITY);
    }
    let wd = dual_weight(omega, p)?;
    let pi = PrefixIntegral::of_field(wd.field());
    let pp = conjugate(p);
    let n = grid.dim as f64;
    let tg = LogTimeGrid::new(r, 2.0 * rho, 32)?;
    let integral: f64 = tg
        .nodes()
        .into_iter()
        .map(|(t, w)| pi.cube_integral(&CubeSpec { center: a, half_len: t }) / t.powf((n - alpha) * pp) * w)
        .sum();
    Ok(integral.powf(1.0 - p))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThinnessReport {
    pub a: Point,
    /// `t_k = 2^{-k} rho`.
    pub scales: Vec<f64>,
    /// `R(E ∩ Q_{t_k}(a))`.
    pub capacities: Vec<f64>,
    /// `w(Q_{t_k}(a))`.
    pub cube_weights: Vec<f64>,
    /// Running values of `int_{t}^{rho} (t^{alpha p} / w(Q_t(a)))^{p'-1} dt/t`
    /// at each `t_k`.
    pub divergence_partials: Vec<f64>,
    /// Running sums of `(2^{-alpha p k} R(E ∩ Q_{t_k}) / w(Q_{t_k}))^{p'-1}`.
    pub thinness_partials: Vec<f64>,
    pub thinness_sum: f64,
}

/// Capacity densities of `E` at `a` along dyadic scales.
#[allow(clippy::too_many_arguments)]
pub fn thinness_diagnostic(
    e: &TargetSet,
    a: Point,
    omega: &WeightField,
    alpha: f64,
    p: f64,
    rho: f64,
    kmax: usize,
    opts: &SolverOptions,
) -> Result<ThinnessReport> {
    check_p(p)?;
    let grid = &e.grid;
    if grid.locate(a).is_none() {
        return Err(Error::Param(format!("point {a:?} outside the grid")));
    }
    let kcap = (rho / grid.h).log2().floor().max(0.0) as usize;
    if kmax > kcap {
        return Err(param(format!("kmax = {kmax} exceeds log2(rho/h) = {kcap}")));
    }
    let pi = PrefixIntegral::of_field(omega.field());
    let e1 = conjugate(p) - 1.0;
    let ap = alpha * p;
    let mut report = ThinnessReport {
        a,
        scales: Vec::new(),
        capacities: Vec::new(),
        cube_weights: Vec::new(),
        divergence_partials: Vec::new(),
        thinness_partials: Vec::new(),
        thinness_sum: 0.0,
    };
    let mut div = 0.0;
    let mut sum = 0.0;
    let mut prev_t = rho;
    for k in 0..=kmax {
        let t = rho * 0.5f64.powi(k as i32);
        if k > 0 {
            let tg = LogTimeGrid::new(t, prev_t, 16)?;
            for (s, w) in tg.nodes() {
                let wq = pi.cube_integral(&CubeSpec { center: a, half_len: s });
                div += (s.powf(ap) / wq).powf(e1) * w;
            }
        }
        prev_t = t;
        let q = CubeSpec { center: a, half_len: t };
        let sub = e.intersect_cube(&q);
        let cap = capacity_riesz(&sub, omega, alpha, p, rho, opts)?.value;
        let wq = pi.cube_integral(&q);
        sum += (0.5f64.powf(ap * k as f64) * cap / wq).powf(e1);
        report.scales.push(t);
        report.capacities.push(cap);
        report.cube_weights.push(wq);
        report.divergence_partials.push(div);
        report.thinness_partials.push(sum);
    }
    report.thinness_sum = sum;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::potentials::LocalRieszKernel;
    use crate::weights::{weight_exp, weight_power};
    use proptest::prelude::*;

    fn line(h: f64, lo: f64, hi: f64) -> Grid {
        make_grid(1, h, &[lo], &[hi]).unwrap()
    }

    fn riesz(alpha: f64, rho: f64) -> KernelSpec {
        KernelSpec::Riesz { alpha, rho }
    }

    #[test]
    fn empty_set_has_zero_capacity() {
        let g = line(1.0 / 16.0, 0.0, 1.0);
        let w = WeightField::constant(&g, 1.0).unwrap();
        let e = TargetSet::empty(&g);
        for k in [riesz(0.5, 1.0), KernelSpec::Bessel { alpha: 0.5 }, KernelSpec::Variant { alpha: 0.5, rho: 0.5 }] {
            let s = capacity_primal(&e, &w, &k, 2.0, None, &SolverOptions::default()).unwrap();
            assert_eq!(s.value, 0.0);
            assert!(s.primal.is_empty());
            assert_eq!(capacity_dual(&e, &w, &k, 2.0, &SolverOptions::default()).unwrap().value, 0.0);
        }
    }

    /// Single cell `i`: the dual is one-dimensional, so
    /// `C = (sum_j h^n K_ij^{p'} w'_j)^{1-p}`.
    fn single_cell_oracle(g: &Grid, w: &WeightField, i: usize, alpha: f64, p: f64, rho: f64) -> f64 {
        let k = LocalRieszKernel::new(alpha, rho, g.dim).unwrap();
        let pp = conjugate(p);
        let s: f64 = (0..g.len())
            .map(|j| {
                let kij = if i == j {
                    k.self_average(g.h)
                } else {
                    k.value(g.dist(g.center(i), g.center(j)))
                };
                g.cell_volume() * kij.powf(pp) * w.values()[j].powf(1.0 - pp)
            })
            .sum();
        s.powf(1.0 - p)
    }

    #[test]
    fn single_cell_matches_closed_form() {
        let g = line(1.0 / 16.0, 0.0, 1.0);
        assert_eq!(g.len(), 16);
        for w in [WeightField::constant(&g, 1.0).unwrap(), weight_exp(&g, 1.5).unwrap()] {
            for i in [0usize, 7] {
                let e = TargetSet::new(&g, [i]).unwrap();
                let s = capacity_riesz(&e, &w, 0.5, 2.0, 1.0, &SolverOptions::default()).unwrap();
                let oracle = single_cell_oracle(&g, &w, i, 0.5, 2.0, 1.0);
                assert!((s.value - oracle).abs() < 1e-6 * oracle, "{} vs {oracle}", s.value);
                assert!(s.value_lower <= s.value_upper);
            }
        }
    }

    #[test]
    fn weak_duality_and_certificates() {
        let g = line(1.0 / 32.0, -1.0, 1.0);
        let w = weight_power(&g, 0.4).unwrap();
        let e = TargetSet::from_box(&g, [-0.3, 0.0], [0.2, 0.0]);
        for p in [1.5, 2.0, 3.0] {
            let s = capacity_riesz(&e, &w, 0.5, p, 0.75, &SolverOptions::default()).unwrap();
            assert!(s.converged, "p={p} gap {}", s.gap);
            assert!(s.value_lower <= s.value_upper);
            assert!(s.gap <= 1e-6);
            // the polished primal is feasible
            let f = s.primal_field(&g);
            let u = crate::potentials::riesz_convolve_field(&f, 0.5, 0.75).unwrap();
            for &c in &e.cells {
                assert!(u.values[c] >= 1.0 - 1e-9);
            }
            let energy: f64 = f.values.iter().zip(w.values()).map(|(f, w)| f.powf(p) * w).sum::<f64>() * g.h;
            assert!((energy - s.value_upper).abs() < 1e-9 * energy);
            let mu = s.dual_mu.as_ref().unwrap();
            assert!((mu.total() - s.value).abs() < 1e-3 * s.value);
        }
    }

    #[test]
    fn equilibrium_potential_is_one_on_set() {
        let g = line(1.0 / 32.0, -1.5, 1.5);
        let w = WeightField::constant(&g, 1.0).unwrap();
        let c = g.locate([0.0, 0.0]).unwrap();
        let e = TargetSet::new(&g, [c]).unwrap();
        let eq = equilibrium_measure(&e, &w, 0.5, 2.0, 1.0, &SolverOptions::default()).unwrap();
        assert_eq!(eq.mu.support(), vec![c]);
        assert!((eq.potential.values[c] - 1.0).abs() < 1e-5);

        let e = TargetSet::from_box(&g, [-0.25, 0.0], [0.25, 0.0]);
        let eq = equilibrium_measure(&e, &w, 0.5, 2.0, 1.0, &SolverOptions::default()).unwrap();
        assert!(eq.min_v_on_e >= 1.0 - 1e-3, "{}", eq.min_v_on_e);
        assert!(eq.max_v_on_support <= 1.0 + 1e-3, "{}", eq.max_v_on_support);
        assert!((eq.mu.total() - eq.capacity.value).abs() < 1e-3 * eq.capacity.value);
    }

    #[test]
    fn translation_moves_equilibrium_measure() {
        let g = line(1.0 / 32.0, -2.0, 2.0);
        let w = WeightField::constant(&g, 1.0).unwrap();
        let e1 = TargetSet::from_box(&g, [-0.5, 0.0], [-0.25, 0.0]);
        let e2 = TargetSet::from_box(&g, [0.25, 0.0], [0.5, 0.0]);
        let shift = e2.cells[0] - e1.cells[0];
        let a = equilibrium_measure(&e1, &w, 0.5, 2.0, 1.0, &SolverOptions::default()).unwrap();
        let b = equilibrium_measure(&e2, &w, 0.5, 2.0, 1.0, &SolverOptions::default()).unwrap();
        assert!((a.capacity.value - b.capacity.value).abs() < 1e-5 * a.capacity.value);
        for &c in &e1.cells {
            let (x, y) = (a.mu.masses[c], b.mu.masses[c + shift]);
            assert!((x - y).abs() < 1e-2 * a.mu.total());
        }
    }

    #[test]
    fn cube_formula_closed_form() {
        // w = 1, n = 1, alpha = 1/2, p = 2: (2 log(2 rho / r))^{-1}
        let g = line(1.0 / 64.0, -3.0, 3.0);
        let w = WeightField::constant(&g, 1.0).unwrap();
        for r in [1.0 / 16.0, 0.25, 1.0] {
            let v = capacity_cube_formula([0.0, 0.0], r, &w, 0.5, 2.0, 1.0).unwrap();
            let oracle = 1.0 / (2.0 * (2.0 / r).ln());
            assert!((v - oracle).abs() < 1e-12 * oracle);
        }
        assert_eq!(capacity_cube_formula([0.0, 0.0], 2.0, &w, 0.5, 2.0, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn variant_single_cell_against_enumeration() {
        let g = line(1.0 / 8.0, 0.0, 1.0);
        let w = weight_exp(&g, 1.0).unwrap();
        let (alpha, p, rho) = (0.5, 2.0, 0.5);
        let i = 3;
        let e = TargetSet::new(&g, [i]).unwrap();
        let s = capacity_variant_R(&e, &w, alpha, p, rho, &SolverOptions::default()).unwrap();
        // C = (sum_{j,k} nu_{jk} k_{i,(j,k)}^{p'})^{1-p}
        let tg = LogTimeGrid::for_grid(&g, rho).unwrap();
        let pp = conjugate(p);
        let mut sum = 0.0;
        for (t, dt) in tg.nodes() {
            for j in 0..g.len() {
                if g.dist(g.center(i), g.center(j)) < t - 1e-12 {
                    let k = t.powf(alpha - 1.0);
                    sum += k.powf(pp) * w.values()[j].powf(1.0 - pp) * g.h * dt;
                }
            }
        }
        let oracle = sum.powf(1.0 - p);
        assert!((s.value - oracle).abs() < 1e-6 * oracle, "{} vs {oracle}", s.value);
    }

    #[test]
    fn obstacle_homogeneity() {
        let g = line(1.0 / 16.0, -1.0, 1.0);
        let w = WeightField::constant(&g, 1.0).unwrap();
        let e = TargetSet::from_box(&g, [-0.25, 0.0], [0.25, 0.0]);
        let phi = Field::from_fn(&g, |x| 1.0 + x[0].abs());
        let p = 2.0;
        let k = riesz(0.5, 1.0);
        let g1 = phi.map(|v| v.powf(1.0 / p));
        let g2 = phi.map(|v| (3.0 * v).powf(1.0 / p));
        let a = capacity_primal(&e, &w, &k, p, Some(&g1), &SolverOptions::default()).unwrap();
        let b = capacity_primal(&e, &w, &k, p, Some(&g2), &SolverOptions::default()).unwrap();
        assert!((b.value - 3.0 * a.value).abs() < 1e-5 * b.value);
    }

    #[test]
    fn thinness_report_shapes() {
        let g = line(1.0 / 32.0, -2.0, 2.0);
        let w = WeightField::constant(&g, 1.0).unwrap();
        let e = TargetSet::from_box(&g, [1.0, 0.0], [1.5, 0.0]);
        let r = thinness_diagnostic(&e, [0.0, 0.0], &w, 0.5, 2.0, 0.5, 3, &SolverOptions::default()).unwrap();
        assert_eq!(r.thinness_sum, 0.0);
        assert_eq!(r.scales.len(), 4);
        let empty = TargetSet::empty(&g);
        let r = thinness_diagnostic(&empty, [0.0, 0.0], &w, 0.5, 2.0, 0.5, 2, &SolverOptions::default()).unwrap();
        assert_eq!(r.thinness_sum, 0.0);
        assert!(thinness_diagnostic(&e, [0.0, 0.0], &w, 0.5, 2.0, 0.5, 9, &SolverOptions::default()).is_err());
    }

    #[test]
    fn thick_point_partial_sums_grow() {
        let g = line(1.0 / 64.0, -2.0, 2.0);
        let w = WeightField::constant(&g, 1.0).unwrap();
        let e = TargetSet::cube(&g, [0.0, 0.0], 0.5);
        let r = thinness_diagnostic(&e, [0.0, 0.0], &w, 0.25, 2.0, 0.5, 4, &SolverOptions::with_tol(1e-4)).unwrap();
        for k in 1..r.capacities.len() {
            assert!(r.capacities[k] <= r.capacities[k - 1] * (1.0 + 1e-4));
            assert!(r.thinness_partials[k] > r.thinness_partials[k - 1]);
        }
        // increments do not decay: a thick point
        let inc: Vec<f64> = r.thinness_partials.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(inc.last().unwrap() > &(0.5 * inc[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn monotone_and_subadditive(a0 in -0.8f64..0.0, l1 in 0.05f64..0.4, b0 in 0.0f64..0.6, l2 in 0.05f64..0.4) {
            let g = line(1.0 / 32.0, -1.5, 1.5);
            let w = weight_exp(&g, 0.7).unwrap();
            let opts = SolverOptions::with_tol(1e-7);
            let e1 = TargetSet::from_box(&g, [a0, 0.0], [a0 + l1, 0.0]);
            let e2 = TargetSet::from_box(&g, [b0, 0.0], [b0 + l2, 0.0]);
            let u = e1.union(&e2);
            let c1 = capacity_riesz(&e1, &w, 0.5, 2.0, 1.0, &opts).unwrap();
            let c2 = capacity_riesz(&e2, &w, 0.5, 2.0, 1.0, &opts).unwrap();
            let cu = capacity_riesz(&u, &w, 0.5, 2.0, 1.0, &opts).unwrap();
            prop_assert!(c1.value_lower <= cu.value_upper);
            prop_assert!(c2.value_lower <= cu.value_upper);
            prop_assert!(cu.value_lower <= c1.value_upper + c2.value_upper);
        }

        #[test]
        fn larger_scale_gives_smaller_capacity(r1 in 0.2f64..0.8, dr in 0.05f64..0.8) {
            let g = line(1.0 / 32.0, -2.0, 2.0);
            let w = WeightField::constant(&g, 1.0).unwrap();
            let e = TargetSet::from_box(&g, [-0.2, 0.0], [0.1, 0.0]);
            let opts = SolverOptions::with_tol(1e-7);
            let a = capacity_riesz(&e, &w, 0.5, 2.0, r1, &opts).unwrap();
            let b = capacity_riesz(&e, &w, 0.5, 2.0, r1 + dr, &opts).unwrap();
            prop_assert!(b.value_lower <= a.value_upper);
        }
    }
}

//! Weights and their local Muckenhoupt constants.
//!
//! Every supremum "over all cubes of side at most rho" is taken over a
//! [`CubeLattice`]; essential suprema and infima are cell maxima and minima.
//! Reports carry the maximizing cube so that blow-ups can be located.

use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::field::{check_same_grid, Field, PrefixIntegral};
use crate::grid::{enumerate_cubes, CubeLattice, CubePolicy, CubeSpec, Grid, Point};
use crate::maximal::uncentered_local_maximal;

/// A strictly positive, finite field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Field", into = "Field")]
pub struct WeightField(Field);

impl WeightField {
    pub fn new(field: Field) -> Result<Self> {
        if let Some(v) = field.values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(param(format!("weight values must be positive and finite, found {v}")));
        }
        Ok(Self(field))
    }

    pub fn constant(grid: &Grid, c: f64) -> Result<Self> {
        Self::new(Field::constant(grid, c))
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(Point) -> f64) -> Result<Self> {
        Self::new(Field::from_fn(grid, f))
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    pub fn grid(&self) -> &Grid {
        &self.0.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    /// Pointwise power `w^e`.
    pub fn powf(&self, e: f64) -> Result<Self> {
        Self::new(self.0.map(|v| v.powf(e)))
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        Self::new(self.0.map(|v| v * c))
    }

    /// `w(Q) = int_Q w dx`.
    pub fn measure_of(&self, cube: &CubeSpec) -> f64 {
        PrefixIntegral::of_field(&self.0).cube_integral(cube)
    }
}

impl TryFrom<Field> for WeightField {
    type Error = Error;
    fn try_from(f: Field) -> Result<Self> {
        WeightField::new(f)
    }
}

impl From<WeightField> for Field {
    fn from(w: WeightField) -> Field {
        w.0
    }
}

fn sup_norm(x: Point, dim: usize) -> f64 {
    (0..dim).map(|a| x[a].abs()).fold(0.0, f64::max)
}

/// `|x|_inf^a` at cell centers; the distance is never taken below `h/2`.
pub fn weight_power(grid: &Grid, a: f64) -> Result<WeightField> {
    let floor = grid.h / 2.0;
    WeightField::from_fn(grid, |x| sup_norm(x, grid.dim).max(floor).powf(a))
}

/// `exp(c |x|_inf)` at cell centers.
pub fn weight_exp(grid: &Grid, c: f64) -> Result<WeightField> {
    WeightField::from_fn(grid, |x| (c * sup_norm(x, grid.dim)).exp())
}

/// `w1 * w2^(1 - p)`.
pub fn weight_product(w1: &WeightField, w2: &WeightField, p: f64) -> Result<WeightField> {
    if p < 1.0 {
        return Err(param(format!("p = {p} must be >= 1")));
    }
    WeightField::new(w1.0.zip_map(&w2.0, |a, b| a * b.powf(1.0 - p))?)
}

/// `min(w, k)`.
pub fn weight_truncate(w: &WeightField, k: f64) -> Result<WeightField> {
    if !(k > 0.0) {
        return Err(param(format!("truncation height {k} must be positive")));
    }
    WeightField::new(w.0.map(|v| v.min(k)))
}

/// Interpolated weight `w^(1/p) = w0^((1-theta)/p0) w1^(theta/p1)` with
/// `1/p = (1-theta)/p0 + theta/p1`. Returns `(w, p)`.
pub fn weight_interpolate(
    w0: &WeightField,
    p0: f64,
    w1: &WeightField,
    p1: f64,
    theta: f64,
) -> Result<(WeightField, f64)> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(param(format!("theta = {theta} must lie in [0, 1]")));
    }
    if p0 < 1.0 || p1 < 1.0 {
        return Err(param("exponents must be >= 1"));
    }
    let p = 1.0 / ((1.0 - theta) / p0 + theta / p1);
    let e0 = (1.0 - theta) * p / p0;
    let e1 = theta * p / p1;
    let w = w0.0.zip_map(&w1.0, |a, b| a.powf(e0) * b.powf(e1))?;
    Ok((WeightField::new(w)?, p))
}

/// Pointwise sum `w1 + w2`.
pub fn weight_sum(w1: &WeightField, w2: &WeightField) -> Result<WeightField> {
    WeightField::new(w1.0.zip_map(&w2.0, |a, b| a + b)?)
}

/// Dual weight `w' = w^(1 - p') = w^(-1/(p-1))`.
pub fn dual_weight(w: &WeightField, p: f64) -> Result<WeightField> {
    if !(p > 1.0) {
        return Err(param(format!("dual weight needs p > 1, got {p}")));
    }
    w.powf(-1.0 / (p - 1.0))
}

/// Conjugate exponent.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// A measured local Muckenhoupt constant. `p == None` marks the
/// `A_infinity` constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub p: Option<f64>,
    pub rho: f64,
    pub constant: f64,
    pub argmax_cube: CubeSpec,
}

fn argmax(lattice: &CubeLattice, vals: Vec<f64>, p: Option<f64>) -> Result<ApReport> {
    let mut best = None::<(usize, f64)>;
    for (i, v) in vals.into_iter().enumerate() {
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let (i, constant) = best.ok_or(Error::EmptyLattice)?;
    Ok(ApReport {
        p,
        rho: lattice.rho,
        constant,
        argmax_cube: lattice.cubes[i],
    })
}

/// Smallest cell value over the cells with positive overlap with `cube`.
fn cell_min(w: &Field, cube: &CubeSpec) -> f64 {
    w.grid
        .overlaps(cube)
        .into_iter()
        .map(|(k, _)| w.values[k])
        .fold(f64::INFINITY, f64::min)
}

/// Per-cube `A_p` quantity for every lattice cube.
pub fn ap_per_cube(w: &WeightField, p: f64, lattice: &CubeLattice) -> Result<Vec<f64>> {
    if !(p >= 1.0) {
        return Err(param(format!("p = {p} must be >= 1")));
    }
    let avg = PrefixIntegral::of_field(&w.0);
    if p == 1.0 {
        return Ok(lattice
            .cubes
            .par_iter()
            .map(|q| avg.cube_average(q).unwrap_or(0.0) / cell_min(&w.0, q))
            .collect());
    }
    let e = -1.0 / (p - 1.0);
    let dual = PrefixIntegral::new(w.grid(), &w.0.values.iter().map(|v| v.powf(e)).collect::<Vec<_>>());
    Ok(lattice
        .cubes
        .par_iter()
        .map(|q| match (avg.cube_average(q), dual.cube_average(q)) {
            (Some(a), Some(b)) => a * b.powf(p - 1.0),
            _ => 0.0,
        })
        .collect())
}

/// `[w]_{A_{p;rho}}` over the lattice: the largest
/// `Avg_Q w * (Avg_Q w^(-1/(p-1)))^(p-1)`, or `Avg_Q w * max_Q w^(-1)` at `p = 1`.
pub fn ap_loc_constant(w: &WeightField, p: f64, lattice: &CubeLattice) -> Result<ApReport> {
    if lattice.is_empty() {
        return Err(Error::EmptyLattice);
    }
    argmax(lattice, ap_per_cube(w, p, lattice)?, Some(p))
}

/// `[w]_{A_{inf;rho}}`: the largest `Avg_Q w * exp(Avg_Q log w^(-1))`.
pub fn ainf_loc_constant(w: &WeightField, lattice: &CubeLattice) -> Result<ApReport> {
    if lattice.is_empty() {
        return Err(Error::EmptyLattice);
    }
    let avg = PrefixIntegral::of_field(&w.0);
    let logs = PrefixIntegral::new(w.grid(), &w.0.values.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let vals = lattice
        .cubes
        .par_iter()
        .map(|q| match (avg.cube_average(q), logs.cube_average(q)) {
            (Some(a), Some(l)) => a * (-l).exp(),
            _ => 0.0,
        })
        .collect();
    argmax(lattice, vals, None)
}

/// `[w]_{A_q}` for each `q`, used to watch the approach `q -> 1+`.
pub fn ap_sequence(w: &WeightField, qs: &[f64], lattice: &CubeLattice) -> Result<Vec<(f64, f64)>> {
    qs.iter()
        .map(|&q| Ok((q, ap_loc_constant(w, q, lattice)?.constant)))
        .collect()
}

/// Certificate of a local reverse Hölder inequality
/// `(Avg_Q w^(1+gamma))^(1/(1+gamma)) <= C Avg_Q w` on every lattice cube
/// of side at most `rho / 3`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReverseHolderCert {
    pub gamma: f64,
    pub constant: f64,
    pub rho: f64,
    #[serde(skip)]
    pub verified_on: CubeLattice,
    /// Largest observed ratio of the two sides at the certified `gamma`.
    pub worst_ratio: f64,
    /// Set when no `gamma` on the ladder validates; `gamma` is then 0.
    pub flagged: bool,
}

/// Reverse Hölder constant obtained from a measured `A_p` constant, with
/// the density parameter fixed at `1/2`:
/// `C = [1 + 1/(sqrt(s) - s)]^(2L / (2L - ln s))`, `s = 1 - 3/(4 [w])`,
/// `L = ln(2 * 3^n)`.
pub fn reverse_holder_constant(ap_constant: f64, dim: usize) -> f64 {
    let s = 1.0 - 0.75 / ap_constant.max(1.0);
    let l = (3f64.powi(dim as i32) / 0.5).ln();
    (1.0 + 1.0 / (s.sqrt() - s)).powf(2.0 * l / (2.0 * l - s.ln()))
}

/// The gamma ladder `1, 1/2, ..., 2^-12`, largest first.
pub fn gamma_ladder() -> Vec<f64> {
    (0..=12).map(|k| 0.5f64.powi(k)).collect()
}

/// Largest ratio `(Avg w^(1+gamma))^(1/(1+gamma)) / Avg w` over the cubes.
fn reverse_holder_ratio(w: &WeightField, gamma: f64, cubes: &CubeLattice) -> f64 {
    let avg = PrefixIntegral::of_field(&w.0);
    let pow = PrefixIntegral::new(
        w.grid(),
        &w.0.values.iter().map(|v| v.powf(1.0 + gamma)).collect::<Vec<_>>(),
    );
    cubes
        .cubes
        .par_iter()
        .map(|q| match (avg.cube_average(q), pow.cube_average(q)) {
            (Some(a), Some(b)) => b.powf(1.0 / (1.0 + gamma)) / a,
            _ => 0.0,
        })
        .reduce(|| 0.0, f64::max)
}

/// Reverse Hölder search with a caller-supplied constant.
pub fn reverse_holder_with_constant(
    w: &WeightField,
    constant: f64,
    lattice: &CubeLattice,
) -> ReverseHolderCert {
    let small = lattice.restrict(lattice.rho / 3.0);
    for gamma in gamma_ladder() {
        let worst = reverse_holder_ratio(w, gamma, &small);
        if worst <= constant * (1.0 + 1e-12) {
            return ReverseHolderCert {
                gamma,
                constant,
                rho: lattice.rho,
                verified_on: small,
                worst_ratio: worst,
                flagged: false,
            };
        }
    }
    ReverseHolderCert {
        gamma: 0.0,
        constant,
        rho: lattice.rho,
        worst_ratio: 1.0,
        verified_on: small,
        flagged: true,
    }
}

/// Largest ladder `gamma` for which the reverse Hölder inequality holds
/// with the constant [`reverse_holder_constant`] of the measured `[w]_{A_{p;rho}}`.
pub fn reverse_holder_search(
    w: &WeightField,
    p: f64,
    lattice: &CubeLattice,
) -> Result<ReverseHolderCert> {
    let ap = ap_loc_constant(w, p, lattice)?;
    let c = reverse_holder_constant(ap.constant, w.grid().dim);
    Ok(reverse_holder_with_constant(w, c, lattice))
}

/// Even reflection across the coordinate hyperplanes through the corner of
/// `Q`, then `2 rho`-periodic repetition, sampled on `target`.
///
/// `w_on_q` must live on a grid whose box is exactly a cube of side `rho`;
/// `target` must share its cell size and be node-aligned with it.
pub fn extend_periodic(w_on_q: &WeightField, rho: f64, target: &Grid) -> Result<WeightField> {
    let src = w_on_q.grid();
    let m = src.shape[0];
    if (m as f64 * src.h - rho).abs() > 1e-9 * rho
        || (src.dim == 2 && src.shape[1] != m)
    {
        return Err(Error::Mismatch(format!(
            "input box is not a cube of side rho = {rho}"
        )));
    }
    if target.dim != src.dim || (target.h - src.h).abs() > 1e-12 * src.h {
        return Err(Error::Mismatch("target grid must share dim and h".into()));
    }
    let mut offset = [0i64; 2];
    for a in 0..src.dim {
        let s = (target.origin[a] - src.origin[a]) / src.h;
        if (s - s.round()).abs() > 1e-9 {
            return Err(Error::Mismatch("target grid is not node-aligned with Q".into()));
        }
        offset[a] = s.round() as i64;
    }
    let period = 2 * m as i64;
    let fold = |k: i64| -> usize {
        let r = k.rem_euclid(period);
        if r < m as i64 {
            r as usize
        } else {
            (period - 1 - r) as usize
        }
    };
    let values = (0..target.len())
        .map(|idx| {
            let [i, j] = target.coords(idx);
            let si = fold(i as i64 + offset[0]);
            let sj = if src.dim == 1 { 0 } else { fold(j as i64 + offset[1]) };
            w_on_q.values()[src.index(si, sj)]
        })
        .collect();
    WeightField::new(Field::new(target.clone(), values)?)
}

/// The factor `max(2^{np}, (2 rho + 1)^{np})` bounding the global `A_p`
/// constant of the periodic extension.
pub fn extension_bound_factor(dim: usize, p: f64, rho: f64) -> f64 {
    let np = dim as f64 * p;
    2f64.powf(np).max((2.0 * rho + 1.0).powf(np))
}

/// Factorization `w = k (M_rho f)^eps` of an `A_1`-type weight.
#[derive(Debug, Clone)]
pub struct A1Decomposition {
    pub k: Field,
    pub f: Field,
    pub epsilon: f64,
    pub cert: ReverseHolderCert,
    /// `[w]_{A_{1;3 rho}}` measured on the certification lattice.
    pub a1_constant: f64,
    pub k_min: f64,
    pub k_max: f64,
}

impl A1Decomposition {
    /// Lower bound `C^{-1-gamma} [w]^{-1}_{A_{1;3rho}}` for `inf k`.
    pub fn k_lower_bound(&self) -> f64 {
        self.cert.constant.powf(-1.0 - self.cert.gamma) / self.a1_constant
    }

    /// Largest relative error of `k (M f)^eps` against `w`.
    pub fn reconstruction_error(&self, w: &WeightField, maximal_f: &Field) -> f64 {
        w.values()
            .iter()
            .zip(&self.k.values)
            .zip(&maximal_f.values)
            .map(|((wv, kv), mv)| ((kv * mv.powf(self.epsilon)) - wv).abs() / wv)
            .fold(0.0, f64::max)
    }
}

/// Decomposes `w` as `k * (M_rho^loc f)^eps` with `eps = 1/(1+gamma)` from the
/// reverse Hölder certificate at scale `3 rho` and `f = w^(1/eps)`.
pub fn decompose_a1(w: &WeightField, rho: f64) -> Result<(A1Decomposition, Field)> {
    let grid = w.grid();
    let wide = enumerate_cubes(grid, 3.0 * rho, CubePolicy::Centered)?;
    let a1 = ap_loc_constant(w, 1.0, &wide)?;
    let cert = reverse_holder_with_constant(w, reverse_holder_constant(a1.constant, grid.dim), &wide);
    let epsilon = 1.0 / (1.0 + cert.gamma);
    let f = w.0.map(|v| v.powf(1.0 / epsilon));
    let lattice = wide.restrict(rho);
    let mf = uncentered_local_maximal(&f, &lattice);
    let k = f.zip_map(&mf, |fv, mv| (fv / mv).powf(epsilon))?;
    let (k_min, k_max) = (k.min(), k.max());
    Ok((
        A1Decomposition {
            k,
            f,
            epsilon,
            cert,
            a1_constant: a1.constant,
            k_min,
            k_max,
        },
        mf,
    ))
}

/// Density fit `w(A)/w(Q) <= C2 (|A|/|Q|)^eps0` over random sub-boxes `A`
/// of lattice cubes. Returns `(C2, eps0)` with `eps0` the largest exponent
/// on a fixed ladder for which the smallest admissible `C2` stays below
/// `max_c2`.
pub fn fit_density_exponent<R: Rng>(
    w: &WeightField,
    lattice: &CubeLattice,
    samples: usize,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    let pairs = sample_subboxes(w, lattice, samples, rng);
    [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0]
        .iter()
        .map(|&eps| {
            let c2 = pairs
                .iter()
                .map(|&(ra, rw)| rw / ra.powf(eps))
                .fold(0.0, f64::max);
            (c2, eps)
        })
        .collect()
}

/// Pairs `(|A|/|Q|, w(A)/w(Q))` for random sub-boxes `A` of random lattice cubes.
pub fn sample_subboxes<R: Rng>(
    w: &WeightField,
    lattice: &CubeLattice,
    samples: usize,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    let grid = w.grid();
    let pi = PrefixIntegral::of_field(&w.0);
    let mut out = Vec::with_capacity(samples);
    if lattice.is_empty() {
        return out;
    }
    while out.len() < samples {
        let q = lattice.cubes[rng.gen_range(0..lattice.len())];
        let wq = pi.cube_integral(&q);
        let vq = grid.clipped_volume(&q);
        if wq <= 0.0 || vq <= 0.0 {
            continue;
        }
        // random sub-box, axis by axis, inside the clipped cube
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        for a in 0..grid.dim {
            let (u0, u1) = grid.span(&q, a);
            let x0 = grid.origin[a] + u0 * grid.h;
            let x1 = grid.origin[a] + u1 * grid.h;
            let s: f64 = rng.gen_range(0.0..1.0);
            let t: f64 = rng.gen_range(0.0..1.0);
            let (s, t) = if s < t { (s, t) } else { (t, s) };
            lo[a] = x0 + s * (x1 - x0);
            hi[a] = x0 + t * (x1 - x0);
        }
        let (wa, va) = box_integral(&pi, grid, lo, hi);
        if va <= 0.0 {
            continue;
        }
        out.push((va / vq, wa / wq));
    }
    out
}

fn box_integral(pi: &PrefixIntegral, grid: &Grid, lo: Point, hi: Point) -> (f64, f64) {
    let vol: f64 = (0..grid.dim).map(|a| hi[a] - lo[a]).product();
    (pi.box_integral(lo, hi), vol)
}

/// Named weight constructors, addressable as `power:a=0.5`, `exp:c=1`,
/// `const:c=2`, `fourier:seed=3;amp=0.5;modes=4`, and the composites
/// `product:<w1>,<w2>,p=<p>`, `truncate:<w>,k=<k>`, `sum:<w1>,<w2>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightSpec {
    Const { c: f64 },
    Power { a: f64 },
    Exp { c: f64 },
    /// `exp(amp * sum_k sin(freq_k x + phase_k) / modes)`; log-Lipschitz.
    Fourier { seed: u64, amp: f64, modes: usize },
    Product { w1: Box<WeightSpec>, w2: Box<WeightSpec>, p: f64 },
    Truncate { w: Box<WeightSpec>, k: f64 },
    Sum { w1: Box<WeightSpec>, w2: Box<WeightSpec> },
}

impl WeightSpec {
    pub fn build(&self, grid: &Grid) -> Result<WeightField> {
        match self {
            WeightSpec::Const { c } => WeightField::constant(grid, *c),
            WeightSpec::Power { a } => weight_power(grid, *a),
            WeightSpec::Exp { c } => weight_exp(grid, *c),
            WeightSpec::Fourier { seed, amp, modes } => {
                let terms = fourier_terms(*seed, *modes, grid.dim);
                let m = (*modes).max(1) as f64;
                WeightField::from_fn(grid, |x| {
                    let s: f64 = terms
                        .iter()
                        .map(|(f, ph)| (0..grid.dim).map(|a| (f[a] * x[a] + ph).sin()).sum::<f64>())
                        .sum();
                    (amp * s / m).exp()
                })
            }
            WeightSpec::Product { w1, w2, p } => weight_product(&w1.build(grid)?, &w2.build(grid)?, *p),
            WeightSpec::Truncate { w, k } => weight_truncate(&w.build(grid)?, *k),
            WeightSpec::Sum { w1, w2 } => weight_sum(&w1.build(grid)?, &w2.build(grid)?),
        }
    }
}

fn fourier_terms(seed: u64, modes: usize, dim: usize) -> Vec<([f64; 2], f64)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..modes)
        .map(|_| {
            let mut f = [0.0; 2];
            for v in f.iter_mut().take(dim) {
                *v = rng.gen_range(0.5..4.0);
            }
            (f, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect()
}

fn split_top(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).collect()
}

fn kv(s: &str) -> Result<(&str, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("expected key=value, got {s:?}")))?;
    let v = v
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
    Ok((k.trim(), v))
}

fn atom(s: &str) -> Result<WeightSpec> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let params: Vec<(&str, f64)> = rest
        .split(';')
        .filter(|t| !t.trim().is_empty())
        .map(kv)
        .collect::<Result<_>>()?;
    let get = |key: &str, default: Option<f64>| -> Result<f64> {
        params
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .or(default)
            .ok_or_else(|| Error::Parse(format!("{name}: missing parameter {key}")))
    };
    Ok(match name.trim() {
        "const" => WeightSpec::Const { c: get("c", Some(1.0))? },
        "power" => WeightSpec::Power { a: get("a", None)? },
        "exp" => WeightSpec::Exp { c: get("c", None)? },
        "fourier" => WeightSpec::Fourier {
            seed: get("seed", Some(0.0))? as u64,
            amp: get("amp", Some(0.5))?,
            modes: get("modes", Some(4.0))? as usize,
        },
        other => return Err(Error::Parse(format!("unknown weight {other:?}"))),
    })
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("product:") {
            let parts = split_top(rest);
            if parts.len() != 3 {
                return Err(Error::Parse("product:<w1>,<w2>,p=<p>".into()));
            }
            let (_, p) = kv(parts[2])?;
            return Ok(WeightSpec::Product {
                w1: Box::new(atom(parts[0])?),
                w2: Box::new(atom(parts[1])?),
                p,
            });
        }
        if let Some(rest) = s.strip_prefix("truncate:") {
            let parts = split_top(rest);
            if parts.len() != 2 {
                return Err(Error::Parse("truncate:<w>,k=<k>".into()));
            }
            let (_, k) = kv(parts[1])?;
            return Ok(WeightSpec::Truncate {
                w: Box::new(atom(parts[0])?),
                k,
            });
        }
        if let Some(rest) = s.strip_prefix("sum:") {
            let parts = split_top(rest);
            if parts.len() != 2 {
                return Err(Error::Parse("sum:<w1>,<w2>".into()));
            }
            return Ok(WeightSpec::Sum {
                w1: Box::new(atom(parts[0])?),
                w2: Box::new(atom(parts[1])?),
            });
        }
        atom(s)
    }
}

/// Checks two weights share a grid.
pub fn same_grid(a: &WeightField, b: &WeightField) -> Result<()> {
    check_same_grid(a.grid(), b.grid())
}

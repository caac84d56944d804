//! Choquet integrals and weak quasi-norms with respect to a capacity.
//!
//! Level sets are strict: `{f > t}`. A capacity is queried through a
//! [`CapacityOracle`] that returns a certified bracket `[lower, upper]` and
//! memoizes by cell set.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{capacity_primal, KernelSpec, SolverOptions, TargetSet};
use crate::error::{param, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::weights::WeightField;

type SetFn = dyn Fn(&TargetSet) -> Result<(f64, f64)> + Send + Sync;

/// A set function with memoization keyed by the member cells.
#[derive(Clone)]
pub struct CapacityOracle {
    grid: Grid,
    eval: Arc<SetFn>,
    memo: Arc<Mutex<HashMap<Vec<usize>, (f64, f64)>>>,
    violations: Arc<AtomicUsize>,
    calls: Arc<AtomicUsize>,
}

impl std::fmt::Debug for CapacityOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CapacityOracle")
            .field("cached", &self.memo.lock().unwrap().len())
            .finish()
    }
}

impl CapacityOracle {
    /// Wraps an exact set function.
    pub fn from_fn(grid: &Grid, f: impl Fn(&TargetSet) -> f64 + Send + Sync + 'static) -> Self {
        Self::from_bracket(grid, move |s| {
            let v = f(s);
            Ok((v, v))
        })
    }

    /// Wraps a set function returning `(lower, upper)`.
    pub fn from_bracket(
        grid: &Grid,
        f: impl Fn(&TargetSet) -> Result<(f64, f64)> + Send + Sync + 'static,
    ) -> Self {
        Self {
            grid: grid.clone(),
            eval: Arc::new(f),
            memo: Arc::new(Mutex::new(HashMap::new())),
            violations: Arc::new(AtomicUsize::new(0)),
            calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    /// The capacity with the given kernel; the bracket is the solver's
    /// pair of certificates.
    pub fn capacity(omega: &WeightField, kernel: KernelSpec, p: f64, opts: SolverOptions) -> Self {
        let w = omega.clone();
        Self::from_bracket(omega.grid(), move |s| {
            let sol = capacity_primal(s, &w, &kernel, p, None, &opts)?;
            Ok((sol.value_lower, sol.value_upper))
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of distinct sets evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    /// Nested pairs seen out of order (beyond the brackets' overlap).
    pub fn monotonicity_violations(&self) -> usize {
        self.violations.load(Ordering::Relaxed)
    }

    pub fn bracket(&self, set: &TargetSet) -> Result<(f64, f64)> {
        Ok(self.brackets(std::slice::from_ref(set))?[0])
    }

    /// The upper certificate, used as the value.
    pub fn value(&self, set: &TargetSet) -> Result<f64> {
        Ok(self.bracket(set)?.1)
    }

    /// Evaluates distinct uncached sets in parallel.
    pub fn brackets(&self, sets: &[TargetSet]) -> Result<Vec<(f64, f64)>> {
        let missing: Vec<&TargetSet> = {
            let memo = self.memo.lock().unwrap();
            let mut seen = std::collections::HashSet::new();
            sets.iter()
                .filter(|s| !memo.contains_key(&s.cells) && seen.insert(&s.cells))
                .collect()
        };
        let fresh: Vec<(Vec<usize>, (f64, f64))> = missing
            .par_iter()
            .map(|s| {
                if s.is_empty() {
                    Ok((Vec::new(), (0.0, 0.0)))
                } else {
                    (self.eval)(s).map(|v| (s.cells.clone(), v))
                }
            })
            .collect::<Result<_>>()?;
        let mut memo = self.memo.lock().unwrap();
        self.calls.fetch_add(fresh.len(), Ordering::Relaxed);
        memo.extend(fresh);
        Ok(sets.iter().map(|s| memo[&s.cells]).collect())
    }

    /// Brackets for a chain `S_0 ⊇ S_1 ⊇ ...`, tightened so that both ends
    /// are nonincreasing: `upper_k = min_{j<=k} upper_j`,
    /// `lower_k = max_{j>=k} lower_j`. Both remain certificates.
    fn chain(&self, sets: &[TargetSet]) -> Result<Vec<(f64, f64)>> {
        let raw = self.brackets(sets)?;
        for w in raw.windows(2) {
            if w[1].0 > w[0].1 * (1.0 + 1e-9) + 1e-300 {
                self.violations.fetch_add(1, Ordering::Relaxed);
            }
        }
        let mut out = raw.clone();
        for k in 1..out.len() {
            out[k].1 = out[k].1.min(out[k - 1].1);
        }
        for k in (0..out.len().saturating_sub(1)).rev() {
            out[k].0 = out[k].0.max(out[k + 1].0);
        }
        for v in &mut out {
            v.0 = v.0.min(v.1);
        }
        Ok(out)
    }
}

/// One layer of a layer-cake sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelRow {
    /// The set is `{f > threshold}`.
    pub threshold: f64,
    /// Upper end of the layer.
    pub next: f64,
    pub cells: usize,
    pub capacity_lower: f64,
    pub capacity_upper: f64,
    /// `(next^q - threshold^q) * capacity_upper`.
    pub contribution: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChoquetValue {
    /// Upper certificate.
    pub value: f64,
    pub lower: f64,
    pub levels: Vec<LevelRow>,
}

fn check_input(f: &Field, q: f64, oracle: &CapacityOracle) -> Result<()> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(param(format!("q = {q} must be positive")));
    }
    if f.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(param("f must be nonnegative and finite"));
    }
    crate::field::check_same_grid(&f.grid, oracle.grid())
}

/// `{f > t}`.
pub fn level_set(f: &Field, t: f64) -> TargetSet {
    TargetSet::from_mask(&f.grid, |k| f.values[k] > t)
}

fn distinct_levels(f: &Field) -> Vec<f64> {
    let mut v: Vec<f64> = f.values.iter().copied().filter(|v| *v > 0.0).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Layer-cake sum over the thresholds `0 = t_0 < t_1 < ... < t_m`:
/// the layer `[t_{k-1}, t_k)` uses `{f > t_{k-1}}` for the upper sum and
/// `{f > t_k}` for the lower one; these agree when the thresholds are
/// the distinct values of `f`.
fn layer_cake(f: &Field, q: f64, oracle: &CapacityOracle, ts: &[f64], exact: bool) -> Result<ChoquetValue> {
    let mut thresholds = vec![0.0];
    thresholds.extend_from_slice(ts);
    let sets: Vec<TargetSet> = thresholds.iter().map(|&t| level_set(f, t)).collect();
    let caps = oracle.chain(&sets)?;
    let mut levels = Vec::new();
    let (mut upper, mut lower) = (0.0, 0.0);
    for k in 1..thresholds.len() {
        let (a, b) = (thresholds[k - 1], thresholds[k]);
        let dq = b.powf(q) - a.powf(q);
        let (lo, up) = caps[k - 1];
        upper += dq * up;
        lower += dq * if exact { lo } else { caps[k].0 };
        levels.push(LevelRow {
            threshold: a,
            next: b,
            cells: sets[k - 1].len(),
            capacity_lower: lo,
            capacity_upper: up,
            contribution: dq * up,
        });
    }
    Ok(ChoquetValue {
        value: upper,
        lower,
        levels,
    })
}

/// `int f^q dC = int_0^inf C({f^q > t}) dt`, exactly over the distinct
/// values of `f`.
pub fn choquet_integral(f: &Field, q: f64, oracle: &CapacityOracle) -> Result<ChoquetValue> {
    check_input(f, q, oracle)?;
    layer_cake(f, q, oracle, &distinct_levels(f), true)
}

/// Geometric thresholds `max * r^{L-j}`, `j = 1..=L`, with `r` chosen so the
/// smallest sits at or below the smallest positive value of `f`.
pub fn geometric_thresholds(f: &Field, levels: usize) -> Vec<f64> {
    let vals = distinct_levels(f);
    let (lo, hi) = match (vals.first(), vals.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Vec::new(),
    };
    if levels <= 1 || lo == hi {
        return vec![hi];
    }
    let r = (lo / hi).powf(1.0 / (levels - 1) as f64);
    (0..levels).map(|j| hi * r.powi((levels - 1 - j) as i32)).collect()
}

/// Lower and upper layer-cake sums on a fixed set of thresholds; uses at most
/// `levels + 1` capacity evaluations. When `f` has no more than `levels`
/// distinct values this is [`choquet_integral`].
pub fn choquet_bracket(f: &Field, q: f64, oracle: &CapacityOracle, levels: usize) -> Result<ChoquetValue> {
    check_input(f, q, oracle)?;
    let distinct = distinct_levels(f);
    if distinct.len() <= levels.max(1) {
        return layer_cake(f, q, oracle, &distinct, true);
    }
    layer_cake(f, q, oracle, &geometric_thresholds(f, levels), false)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeakValue {
    pub value: f64,
    pub lower: f64,
    /// Threshold attaining the upper value.
    pub argmax: f64,
}

/// `sup_t t C({f > t})^{1/q}`, the sup attained as `t` rises to a value of `f`.
pub fn weak_quasinorm(f: &Field, q: f64, oracle: &CapacityOracle) -> Result<WeakValue> {
    check_input(f, q, oracle)?;
    weak_on(f, q, oracle, &distinct_levels(f), true)
}

/// Bracketed weak quasi-norm on geometric thresholds.
pub fn weak_bracket(f: &Field, q: f64, oracle: &CapacityOracle, levels: usize) -> Result<WeakValue> {
    check_input(f, q, oracle)?;
    let distinct = distinct_levels(f);
    if distinct.len() <= levels.max(1) {
        return weak_on(f, q, oracle, &distinct, true);
    }
    weak_on(f, q, oracle, &geometric_thresholds(f, levels), false)
}

fn weak_on(f: &Field, q: f64, oracle: &CapacityOracle, ts: &[f64], exact: bool) -> Result<WeakValue> {
    // t in [t_{k-1}, t_k) sees {f > t} between {f > t_k} and {f > t_{k-1}}
    let mut thresholds = vec![0.0];
    thresholds.extend_from_slice(ts);
    let sets: Vec<TargetSet> = thresholds.iter().map(|&t| level_set(f, t)).collect();
    let caps = oracle.chain(&sets)?;
    let mut out = WeakValue {
        value: 0.0,
        lower: 0.0,
        argmax: 0.0,
    };
    for k in 1..thresholds.len() {
        let (a, b) = (thresholds[k - 1], thresholds[k]);
        let up = b * caps[k - 1].1.powf(1.0 / q);
        let lo = if exact {
            b * caps[k - 1].0.powf(1.0 / q)
        } else {
            a * caps[k - 1].0.powf(1.0 / q)
        };
        if up > out.value {
            out.value = up;
            out.argmax = b;
        }
        out.lower = out.lower.max(lo);
    }
    Ok(out)
}

/// Refinement controls for [`choquet_adaptive`] and [`weak_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// Geometric thresholds to start from.
    pub levels: usize,
    /// Stop once `upper - lower <= rel_tol * upper`.
    pub rel_tol: f64,
    /// Most level sets evaluated per call.
    pub max_sets: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            levels: 12,
            rel_tol: 0.02,
            max_sets: 64,
        }
    }
}

/// Thresholds drawn from the distinct values `d` of `f` by index. A layer
/// between adjacent values sees a single level set and is exact.
struct Ladder<'a> {
    f: &'a Field,
    d: Vec<f64>,
    idx: Vec<usize>,
}

/// Per-layer data: `(a, b, exact, lower capacity)` for `[a, b)`.
type Layers = Vec<(f64, f64, bool, (f64, f64), f64)>;

impl<'a> Ladder<'a> {
    fn new(f: &'a Field, levels: usize) -> Self {
        let d = distinct_levels(f);
        let mut idx: Vec<usize> = geometric_thresholds(f, levels)
            .iter()
            .map(|t| d.partition_point(|v| v <= t).saturating_sub(1))
            .collect();
        if !d.is_empty() {
            idx.push(d.len() - 1);
        }
        idx.sort_unstable();
        idx.dedup();
        Self { f, d, idx }
    }

    fn sets(&self) -> usize {
        self.idx.len() + 1
    }

    /// `(a, b, exact, (lower, upper) of {f > a}, lower of {f > b})` per layer.
    fn layers(&self, oracle: &CapacityOracle) -> Result<Layers> {
        let mut ts = vec![0.0];
        ts.extend(self.idx.iter().map(|&i| self.d[i]));
        let sets: Vec<TargetSet> = ts.iter().map(|&t| level_set(self.f, t)).collect();
        let caps = oracle.chain(&sets)?;
        Ok((1..ts.len())
            .map(|k| {
                let prev = if k == 1 { None } else { Some(self.idx[k - 2]) };
                let exact = match prev {
                    None => self.idx[0] == 0,
                    Some(j) => self.idx[k - 1] == j + 1,
                };
                (ts[k - 1], ts[k], exact, caps[k - 1], caps[k].0)
            })
            .collect())
    }

    /// Splits layer `k` (1-based) at its middle value; false if it is exact.
    fn split(&mut self, k: usize) -> bool {
        let lo = if k == 1 { 0 } else { self.idx[k - 2] + 1 };
        let hi = self.idx[k - 1];
        if lo >= hi {
            return false;
        }
        let mid = lo + (hi - lo - 1) / 2;
        self.idx.insert(k - 1, mid);
        true
    }
}

fn refine<F>(f: &Field, oracle: &CapacityOracle, how: Refinement, mut step: F) -> Result<()>
where
    F: FnMut(&Layers) -> (bool, Vec<usize>),
{
    let mut ladder = Ladder::new(f, how.levels);
    loop {
        let layers = ladder.layers(oracle)?;
        let (done, worst) = step(&layers);
        if done || ladder.sets() >= how.max_sets {
            return Ok(());
        }
        let room = how.max_sets - ladder.sets();
        let mut split = 0;
        // split from the top so earlier layer numbers stay valid
        let mut ks: Vec<usize> = worst.into_iter().take(4.min(room)).collect();
        ks.sort_unstable_by(|a, b| b.cmp(a));
        for k in ks {
            if ladder.split(k) {
                split += 1;
            }
        }
        if split == 0 {
            return Ok(());
        }
    }
}

/// Layer indices (1-based) of inexact layers ordered by decreasing `score`.
fn worst_layers(layers: &Layers, score: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut ks: Vec<(usize, f64)> = (1..=layers.len())
        .filter(|&k| !layers[k - 1].2)
        .map(|k| (k, score(k)))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    ks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ks.into_iter().map(|(k, _)| k).collect()
}

/// `int f^q dC` bracketed on thresholds taken from the values of `f`, with the
/// widest layers split until the bracket meets `how.rel_tol`.
pub fn choquet_adaptive(f: &Field, q: f64, oracle: &CapacityOracle, how: Refinement) -> Result<ChoquetValue> {
    check_input(f, q, oracle)?;
    let mut out = ChoquetValue {
        value: 0.0,
        lower: 0.0,
        levels: Vec::new(),
    };
    refine(f, oracle, how, |layers| {
        let mut rows = Vec::new();
        let (mut upper, mut lower) = (0.0, 0.0);
        let mut gaps = Vec::new();
        for &(a, b, exact, (lo, up), next_lo) in layers {
            let dq = b.powf(q) - a.powf(q);
            let l = if exact { lo } else { next_lo };
            upper += dq * up;
            lower += dq * l;
            gaps.push(dq * (up - l));
            rows.push(LevelRow {
                threshold: a,
                next: b,
                cells: level_set(f, a).len(),
                capacity_lower: lo,
                capacity_upper: up,
                contribution: dq * up,
            });
        }
        out = ChoquetValue {
            value: upper,
            lower: lower.min(upper),
            levels: rows,
        };
        let done = upper - lower <= how.rel_tol * upper;
        (done, worst_layers(layers, |k| gaps[k - 1]))
    })?;
    Ok(out)
}

/// `sup_t t C({f > t})^{1/q}` bracketed like [`choquet_adaptive`].
pub fn weak_adaptive(f: &Field, q: f64, oracle: &CapacityOracle, how: Refinement) -> Result<WeakValue> {
    check_input(f, q, oracle)?;
    let mut out = WeakValue {
        value: 0.0,
        lower: 0.0,
        argmax: 0.0,
    };
    refine(f, oracle, how, |layers| {
        let mut best = WeakValue {
            value: 0.0,
            lower: 0.0,
            argmax: 0.0,
        };
        let ups: Vec<f64> = layers
            .iter()
            .map(|&(_, b, _, (_, up), _)| b * up.powf(1.0 / q))
            .collect();
        for (k, &(a, b, exact, (lo, _), _)) in layers.iter().enumerate() {
            if ups[k] > best.value {
                best.value = ups[k];
                best.argmax = b;
            }
            let l = if exact { b } else { a } * lo.powf(1.0 / q);
            best.lower = best.lower.max(l);
        }
        let done = best.value - best.lower <= how.rel_tol * best.value;
        let floor = best.lower;
        out = best;
        (done, worst_layers(layers, |k| ups[k - 1] - floor))
    })?;
    Ok(out)
}

/// `𝒞(phi)`: the capacity of `supp phi` with obstacle `phi^{1/p}`.
pub fn c_functional(
    phi: &Field,
    omega: &WeightField,
    kernel: &KernelSpec,
    p: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    if phi.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(param("phi must be nonnegative and bounded"));
    }
    let e = level_set(phi, 0.0);
    let g = phi.map(|v| v.powf(1.0 / p));
    Ok(capacity_primal(&e, omega, kernel, p, Some(&g), opts)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize) -> Grid {
        make_grid(1, 1.0 / n as f64, &[0.0], &[1.0]).unwrap()
    }

    /// `C(E) = sqrt(|E|)`: monotone and subadditive.
    fn sqrt_count(g: &Grid) -> CapacityOracle {
        CapacityOracle::from_fn(g, |s| (s.len() as f64).sqrt())
    }

    fn random_field(g: &Grid, rng: &mut ChaCha8Rng, zero: f64, hi: f64) -> Field {
        let v = (0..g.len())
            .map(|_| if rng.gen_bool(zero) { 0.0 } else { rng.gen_range(0.0..hi) })
            .collect();
        Field::new(g.clone(), v).unwrap()
    }

    fn indicator(g: &Grid, cells: &[usize], c: f64) -> Field {
        let mut f = Field::zeros(g);
        for &k in cells {
            f.values[k] = c;
        }
        f
    }

    #[test]
    fn indicator_and_scaled_indicator() {
        let g = line(16);
        let o = sqrt_count(&g);
        let e = [2usize, 3, 9];
        let ce = 3f64.sqrt();
        let v = choquet_integral(&indicator(&g, &e, 1.0), 1.0, &o).unwrap();
        assert!((v.value - ce).abs() < 1e-12);
        assert_eq!(v.value, v.lower);
        let v = choquet_integral(&indicator(&g, &e, 2.5), 1.0, &o).unwrap();
        assert!((v.value - 2.5 * ce).abs() < 1e-12);
        let w = weak_quasinorm(&indicator(&g, &e, 1.0), 2.0, &o).unwrap();
        assert!((w.value - ce.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn two_level_sum() {
        let g = line(16);
        let o = sqrt_count(&g);
        let a = [4usize, 5];
        let b = [3usize, 4, 5, 6, 7];
        // 2 chi_A + chi_B with A in B
        let mut f = indicator(&g, &b, 1.0);
        for &k in &a {
            f.values[k] += 2.0;
        }
        let v = choquet_integral(&f, 1.0, &o).unwrap();
        // levels 1 and 3: 1 * C(B) + 2 * C(A)
        let hand = 5f64.sqrt() + 2.0 * 2f64.sqrt();
        assert!((v.value - hand).abs() < 1e-12);

        // the two-level example from the definition: 2 chi_A + chi_B
        // read as values {2 on A, 1 on B \ A} gives C(B) + C(A)
        let mut f = indicator(&g, &b, 1.0);
        for &k in &a {
            f.values[k] = 2.0;
        }
        let v = choquet_integral(&f, 1.0, &o).unwrap();
        assert!((v.value - (5f64.sqrt() + 2f64.sqrt())).abs() < 1e-12);

        let w = weak_quasinorm(&f, 1.0, &o).unwrap();
        let hand = (1.0 * 5f64.sqrt()).max(2.0 * 2f64.sqrt());
        assert!((w.value - hand).abs() < 1e-12);
    }

    #[test]
    fn bracket_contains_exact_value() {
        let g = line(64);
        let o = sqrt_count(&g);
        let f = Field::from_fn(&g, |x| (6.0 * x[0]).sin().abs() + 0.01);
        let exact = choquet_integral(&f, 1.5, &o).unwrap().value;
        for levels in [4, 16, 40] {
            let b = choquet_bracket(&f, 1.5, &o, levels).unwrap();
            assert!(b.lower <= exact * (1.0 + 1e-12) && exact <= b.value * (1.0 + 1e-12));
        }
        let exact_w = weak_quasinorm(&f, 1.5, &o).unwrap().value;
        let b = weak_bracket(&f, 1.5, &o, 12).unwrap();
        assert!(b.lower <= exact_w * (1.0 + 1e-12) && exact_w <= b.value * (1.0 + 1e-12));
    }

    #[test]
    fn adaptive_brackets_converge_to_exact() {
        let g = line(64);
        let o = sqrt_count(&g);
        let f = Field::from_fn(&g, |x| (6.0 * x[0]).sin().abs() + 0.01);
        for q in [0.3, 1.0, 1.5] {
            let exact = choquet_integral(&f, q, &o).unwrap().value;
            let loose = Refinement {
                levels: 4,
                rel_tol: 0.05,
                max_sets: 200,
            };
            let b = choquet_adaptive(&f, q, &o, loose).unwrap();
            assert!(b.lower <= exact * (1.0 + 1e-12) && exact <= b.value * (1.0 + 1e-12));
            assert!(b.value - b.lower <= 0.05 * b.value);
            let full = choquet_adaptive(&f, q, &o, Refinement { rel_tol: 0.0, ..loose }).unwrap();
            assert!((full.value - exact).abs() <= 1e-12 * exact);
            assert!((full.lower - exact).abs() <= 1e-12 * exact);
            let w = weak_quasinorm(&f, q, &o).unwrap().value;
            let wb = weak_adaptive(&f, q, &o, loose).unwrap();
            assert!(wb.lower <= w * (1.0 + 1e-12) && w <= wb.value * (1.0 + 1e-12));
        }
    }

    #[test]
    fn memoization_counts_distinct_sets() {
        let g = line(8);
        let o = sqrt_count(&g);
        let f = Field::from_fn(&g, |x| if x[0] < 0.5 { 1.0 } else { 2.0 });
        choquet_integral(&f, 1.0, &o).unwrap();
        let n = o.evaluations();
        choquet_integral(&f.map(|v| 3.0 * v), 2.0, &o).unwrap();
        weak_quasinorm(&f, 1.0, &o).unwrap();
        assert_eq!(o.evaluations(), n);
    }

    #[test]
    fn c_functional_indicator_and_sandwich() {
        let g = line(16);
        let w = WeightField::constant(&g, 1.0).unwrap();
        let k = KernelSpec::Riesz { alpha: 0.5, rho: 0.5 };
        let p = 2.0;
        let opts = SolverOptions::default();
        let e = [5usize, 6, 7];
        let chi = indicator(&g, &e, 1.0);
        let ce = capacity_primal(&TargetSet::new(&g, e).unwrap(), &w, &k, p, None, &opts).unwrap().value;
        assert!((c_functional(&chi, &w, &k, p, &opts).unwrap() - ce).abs() < 1e-6 * ce);
        let c3 = c_functional(&chi.map(|v| 3.0 * v), &w, &k, p, &opts).unwrap();
        assert!((c3 - 3.0 * ce).abs() < 1e-5 * c3);

        let phi = Field::from_fn(&g, |x| (1.0 - 2.0 * (x[0] - 0.5).abs()).max(0.0));
        let cf = c_functional(&phi, &w, &k, p, &opts).unwrap();
        let oracle = CapacityOracle::capacity(&w, k, p, opts);
        let ch = choquet_integral(&phi, 1.0, &oracle).unwrap();
        assert!(ch.value >= 0.25 * cf);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn weak_below_strong_and_homogeneous(seed in 0u64..10_000, q in 0.2f64..3.0, lam in 0.1f64..10.0) {
            let g = line(24);
            let o = sqrt_count(&g);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_field(&g, &mut rng, 0.3, 5.0);
            let s = choquet_integral(&f, q, &o).unwrap().value;
            let w = weak_quasinorm(&f, q, &o).unwrap().value;
            prop_assert!(w <= s.powf(1.0 / q) * (1.0 + 1e-12));
            let s2 = choquet_integral(&f.map(|v| lam * v), q, &o).unwrap().value;
            prop_assert!((s2 - lam.powf(q) * s).abs() <= 1e-9 * s2.max(1e-300));
            // monotone in f
            let bigger = f.map(|v| v + 0.5);
            prop_assert!(choquet_integral(&bigger, q, &o).unwrap().value >= s);
        }

        #[test]
        fn max_of_family_weak_bound(seed in 0u64..10_000, q in 0.3f64..2.0) {
            let g = line(24);
            let o = sqrt_count(&g);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fs: Vec<Field> = (0..3)
                .map(|_| random_field(&g, &mut rng, 0.5, 3.0))
                .collect();
            let mut mx = Field::zeros(&g);
            for f in &fs {
                mx = mx.zip_map(f, f64::max).unwrap();
            }
            let lhs = weak_quasinorm(&mx, q, &o).unwrap().value.powf(q);
            let rhs: f64 = fs.iter().map(|f| weak_quasinorm(f, q, &o).unwrap().value.powf(q)).sum();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }
}

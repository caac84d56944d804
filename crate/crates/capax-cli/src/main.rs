use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capax::capacity::{capacity_primal, KernelSpec, SolverOptions, TargetSet};
use capax::choquet::{choquet_adaptive, weak_adaptive, CapacityOracle, Refinement};
use capax::maximal::{centered_local_maximal, fractional_local_maximal, uncentered_local_maximal};
use capax::potentials::{evaluate, PotentialKind};
use capax::verify::{run_check, CheckId, CheckReport, VerifyReport};
use capax::weights::{ainf_loc_constant, ap_loc_constant, ApReport, WeightSpec};
use capax::{enumerate_cubes, make_grid, CubePolicy, DiscreteMeasure, Field, Grid};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

const CONFIG_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "capax", version, about = "Weighted local potential theory on grids")]
#[command(args_override_self = true)]
struct Cli {
    /// TOML config file (`version = 1` plus `flag = value` keys); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
    /// Plain field text; only for field-valued commands.
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Describe a grid, optionally filled with a weight.
    Grid(GridCmd),
    /// Local Muckenhoupt constants of a weight.
    Weight(WeightCmd),
    /// Local maximal functions of a field.
    Maximal(MaximalCmd),
    /// Potentials of a measure.
    Potential(PotentialCmd),
    /// Capacity of a set with certified bounds.
    Capacity(CapacityCmd),
    /// Choquet integral or weak quasi-norm of a field.
    Choquet(ChoquetCmd),
    /// Run inequality checks.
    Verify(VerifyCmd),
}

fn parse_num(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a: f64 = a.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
        let b: f64 = b.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
        return Ok(a / b);
    }
    s.parse().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_num).collect()
}

/// A comma-separated point; a single value is repeated in every axis.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
struct Coords(Vec<f64>);

fn parse_coords(s: &str) -> Result<Coords, String> {
    parse_list(s).map(Coords)
}

#[derive(Args, Debug, Clone, Serialize)]
struct GridArgs {
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Cell size; fractions such as `1/64` are accepted.
    #[arg(long, value_parser = parse_num, default_value = "1/64")]
    h: f64,
    /// Lower box corner, comma separated.
    #[arg(long, value_parser = parse_coords, default_value = "-1", allow_hyphen_values = true)]
    lo: Coords,
    /// Upper box corner, comma separated.
    #[arg(long, value_parser = parse_coords, default_value = "1", allow_hyphen_values = true)]
    hi: Coords,
}

impl GridArgs {
    fn build(&self) -> Result<Grid, Failure> {
        let widen = |v: &Coords| if v.0.len() == 1 { vec![v.0[0]; self.dim] } else { v.0.clone() };
        Ok(make_grid(self.dim, self.h, &widen(&self.lo), &widen(&self.hi))?)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct GridCmd {
    #[command(flatten)]
    grid: GridArgs,
    /// Weight spec to sample on the grid, e.g. `power:a=0.5`.
    #[arg(long)]
    fill: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct WeightCmd {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "power:a=0.5")]
    weight: String,
    /// Exponents, comma separated; `inf` gives the exp-log constant.
    #[arg(long, default_value = "1,2,inf")]
    p: String,
    #[arg(long, value_parser = parse_num, default_value = "1")]
    rho: f64,
    #[arg(long, value_enum, default_value_t = Policy::Centered)]
    lattice: Policy,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Policy {
    Centered,
    Aligned,
}

impl From<Policy> for CubePolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Centered => CubePolicy::Centered,
            Policy::Aligned => CubePolicy::Aligned,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MaximalVariant {
    Uncentered,
    Centered,
    Fractional,
}

#[derive(Args, Debug, Clone, Serialize)]
struct MaximalCmd {
    /// Input field in the text format.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MaximalVariant::Uncentered)]
    variant: MaximalVariant,
    #[arg(long, value_parser = parse_num, default_value = "1")]
    rho: f64,
    /// Order of the fractional maximal function; the input is read as cell masses.
    #[arg(long, value_parser = parse_num, default_value = "0.5")]
    alpha: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct PotentialCmd {
    #[command(flatten)]
    grid: GridArgs,
    /// Cell masses in the text format; overrides the grid flags.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Point masses `x:m` (1-D) or `x,y:m`, separated by `;`.
    #[arg(long, default_value = "0:1", allow_hyphen_values = true)]
    atoms: String,
    #[arg(long, default_value = "riesz")]
    kind: String,
    #[arg(long, default_value = "const:c=1")]
    weight: String,
    #[arg(long, value_parser = parse_num, default_value = "0.5")]
    alpha: f64,
    #[arg(long, value_parser = parse_num, default_value = "2")]
    p: f64,
    #[arg(long, value_parser = parse_num, default_value = "1")]
    rho: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Kernel {
    Riesz,
    Variant,
    Bessel,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = Kernel::Riesz)]
    kernel: Kernel,
    #[arg(long, value_parser = parse_num, default_value = "0.5")]
    alpha: f64,
    #[arg(long, value_parser = parse_num, default_value = "2")]
    p: f64,
    #[arg(long, value_parser = parse_num, default_value = "1")]
    rho: f64,
    /// Relative duality gap at which the solver stops.
    #[arg(long, value_parser = parse_num, default_value = "1e-6")]
    tol: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iter: usize,
}

impl SolverArgs {
    fn kernel(&self) -> KernelSpec {
        match self.kernel {
            Kernel::Riesz => KernelSpec::Riesz {
                alpha: self.alpha,
                rho: self.rho,
            },
            Kernel::Variant => KernelSpec::Variant {
                alpha: self.alpha,
                rho: self.rho,
            },
            Kernel::Bessel => KernelSpec::Bessel { alpha: self.alpha },
        }
    }

    fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..SolverOptions::default()
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct CapacityCmd {
    #[command(flatten)]
    grid: GridArgs,
    /// `box:lo,hi` (cell centers in the closed box), `cube:c,r` (open cube) or
    /// `cells:FILE` (cell indices); 2-D takes `box:x0,y0,x1,y1` and `cube:x,y,r`.
    #[arg(long, default_value = "box:0,0.25", allow_hyphen_values = true)]
    set: String,
    #[arg(long, default_value = "const:c=1")]
    weight: String,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ChoquetCmd {
    /// Nonnegative field in the text format.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "const:c=1")]
    weight: String,
    #[arg(long, value_parser = parse_num, default_value = "1")]
    q: f64,
    /// Report the weak quasi-norm instead of the integral.
    #[arg(long)]
    weak: bool,
    #[arg(long, default_value_t = 12)]
    levels: usize,
    #[arg(long, value_parser = parse_num, default_value = "0.02")]
    bracket_tol: f64,
    #[arg(long, default_value_t = 64)]
    max_sets: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct VerifyCmd {
    /// A check name or `all`.
    #[arg(long, default_value = "all")]
    check: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Coarse cell size for every selected check; each check has its own default.
    #[arg(long, value_parser = parse_num)]
    h: Option<f64>,
}

/// Process outcome with the exit code it maps to.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Solver(String),
    Io(String),
    Verdict,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verdict => 1,
            Failure::Usage(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl From<capax::Error> for Failure {
    fn from(e: capax::Error) -> Self {
        match e {
            capax::Error::Io(_) | capax::Error::Json(_) => Failure::Io(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn read_field(path: &Path) -> Result<Field, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(Field::from_text(&text)?)
}

fn weight(spec: &str, grid: &Grid) -> Result<capax::weights::WeightField, Failure> {
    Ok(spec.parse::<WeightSpec>()?.build(grid)?)
}

fn parse_set(spec: &str, grid: &Grid) -> Result<TargetSet, Failure> {
    let bad = || Failure::Usage(format!("bad set {spec:?}; expected box:lo,hi, cube:c,r or cells:file"));
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    if kind == "cells" {
        let path = Path::new(rest);
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let cells = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        return Ok(TargetSet::new(grid, cells)?);
    }
    let v = parse_list(rest).map_err(Failure::Usage)?;
    let n = grid.dim;
    let pt = |s: &[f64]| if n == 1 { [s[0], 0.0] } else { [s[0], s[1]] };
    match kind {
        "box" if v.len() == 2 * n => Ok(TargetSet::from_box(grid, pt(&v[..n]), pt(&v[n..]))),
        "cube" if v.len() == n + 1 => Ok(TargetSet::cube(grid, pt(&v[..n]), v[n])),
        _ => Err(bad()),
    }
}

fn parse_atoms(spec: &str, grid: &Grid) -> Result<DiscreteMeasure, Failure> {
    let mut mu = DiscreteMeasure::zero(grid);
    for part in spec.split(';').filter(|s| !s.trim().is_empty()) {
        let (x, m) = part
            .split_once(':')
            .ok_or_else(|| Failure::Usage(format!("bad atom {part:?}; expected x:m")))?;
        let x = parse_list(x).map_err(Failure::Usage)?;
        let m = parse_num(m).map_err(Failure::Usage)?;
        let at = [x[0], x.get(1).copied().unwrap_or(0.0)];
        let i = grid
            .locate(at)
            .ok_or_else(|| Failure::Usage(format!("atom {part:?} outside the grid")))?;
        mu.masses[i] += m;
    }
    Ok(mu)
}

/// The emitted document: command name, effective configuration, result.
fn document(command: &str, config: &impl Serialize, result: Value) -> Value {
    json!({
        "command": command,
        "config_version": CONFIG_VERSION,
        "config": config,
        "result": result,
    })
}

fn field_csv(f: &Field) -> String {
    let mut s = String::from("index,x,y,value\n");
    for (i, v) in f.values.iter().enumerate() {
        let c = f.grid.center(i);
        let _ = writeln!(s, "{i},{},{},{v}", c[0], c[1]);
    }
    s
}

fn field_output(format: Format, command: &str, config: &impl Serialize, f: &Field) -> Result<String, Failure> {
    Ok(match format {
        Format::Text => f.to_text(),
        Format::Csv => field_csv(f),
        Format::Json => pretty(&document(command, config, serde_json::to_value(f).map_err(capax::Error::from)?))?,
    })
}

fn pretty(v: &Value) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(capax::Error::from)?;
    s.push('\n');
    Ok(s)
}

fn csv_rows(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn no_text(format: Format) -> Result<(), Failure> {
    if format == Format::Text {
        return Err(Failure::Usage("--format text applies to field outputs only".into()));
    }
    Ok(())
}

/// Output text, one-line summary, and any failure to report after writing.
type Outcome = (String, String, Option<Failure>);

fn run_grid(cmd: &GridCmd, format: Format) -> Result<Outcome, Failure> {
    let g = cmd.grid.build()?;
    if let Some(spec) = &cmd.fill {
        let w = weight(spec, &g)?;
        let out = field_output(format, "grid", cmd, w.field())?;
        return Ok((out, format!("grid: {} cells filled with {spec}", g.len()), None));
    }
    no_text(format)?;
    let out = match format {
        Format::Csv => csv_rows(
            &["dim", "h", "cells", "shape0", "shape1", "origin0", "origin1"],
            &[vec![
                g.dim.to_string(),
                g.h.to_string(),
                g.len().to_string(),
                g.shape[0].to_string(),
                g.shape[1].to_string(),
                g.origin[0].to_string(),
                g.origin[1].to_string(),
            ]],
        ),
        _ => pretty(&document(
            "grid",
            cmd,
            json!({ "dim": g.dim, "h": g.h, "origin": g.origin, "shape": g.shape, "cells": g.len() }),
        ))?,
    };
    Ok((out, format!("grid: {} cells", g.len()), None))
}

fn run_weight(cmd: &WeightCmd, format: Format) -> Result<Outcome, Failure> {
    no_text(format)?;
    let g = cmd.grid.build()?;
    let w = weight(&cmd.weight, &g)?;
    let lattice = enumerate_cubes(&g, cmd.rho, cmd.lattice.into())?;
    let mut reports: Vec<ApReport> = Vec::new();
    for tok in cmd.p.split(',') {
        let tok = tok.trim();
        reports.push(if tok == "inf" {
            ainf_loc_constant(&w, &lattice)?
        } else {
            ap_loc_constant(&w, parse_num(tok).map_err(Failure::Usage)?, &lattice)?
        });
    }
    let out = match format {
        Format::Csv => csv_rows(
            &["p", "rho", "constant", "cube_center_x", "cube_center_y", "cube_half_len"],
            &reports
                .iter()
                .map(|r| {
                    vec![
                        r.p.map_or("inf".to_string(), |p| p.to_string()),
                        r.rho.to_string(),
                        r.constant.to_string(),
                        r.argmax_cube.center[0].to_string(),
                        r.argmax_cube.center[1].to_string(),
                        r.argmax_cube.half_len.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        _ => pretty(&document(
            "weight",
            cmd,
            serde_json::to_value(&reports).map_err(capax::Error::from)?,
        ))?,
    };
    let summary = reports
        .iter()
        .map(|r| format!("p={} -> {:.6}", r.p.map_or("inf".to_string(), |p| p.to_string()), r.constant))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((out, format!("weight {}: {summary}", cmd.weight), None))
}

fn run_maximal(cmd: &MaximalCmd, format: Format) -> Result<Outcome, Failure> {
    let f = read_field(&cmd.input)?;
    let out = match cmd.variant {
        MaximalVariant::Uncentered => {
            uncentered_local_maximal(&f, &enumerate_cubes(&f.grid, cmd.rho, CubePolicy::Centered)?)
        }
        MaximalVariant::Centered => centered_local_maximal(&f, cmd.rho),
        MaximalVariant::Fractional => {
            fractional_local_maximal(&DiscreteMeasure::new(f.grid.clone(), f.values.clone())?, cmd.alpha, cmd.rho)?
        }
    };
    let text = field_output(format, "maximal", cmd, &out)?;
    Ok((text, format!("maximal: max {:.6} over {} cells", out.max(), out.values.len()), None))
}

fn run_potential(cmd: &PotentialCmd, format: Format) -> Result<Outcome, Failure> {
    let mu = match &cmd.input {
        Some(path) => {
            let f = read_field(path)?;
            DiscreteMeasure::new(f.grid.clone(), f.values)?
        }
        None => parse_atoms(&cmd.atoms, &cmd.grid.build()?)?,
    };
    let kind: PotentialKind = cmd.kind.parse()?;
    let w = weight(&cmd.weight, &mu.grid)?;
    let out = evaluate(kind, &mu, &w, cmd.alpha, cmd.p, cmd.rho)?;
    let text = field_output(format, "potential", cmd, &out)?;
    Ok((text, format!("potential {}: max {:.6}", cmd.kind, out.max()), None))
}

fn run_capacity(cmd: &CapacityCmd, format: Format) -> Result<Outcome, Failure> {
    no_text(format)?;
    let g = cmd.grid.build()?;
    let e = parse_set(&cmd.set, &g)?;
    let w = weight(&cmd.weight, &g)?;
    let s = capacity_primal(&e, &w, &cmd.solver.kernel(), cmd.solver.p, None, &cmd.solver.options())?;
    let result = json!({
        "value_upper": s.value_upper,
        "value_lower": s.value_lower,
        "gap": s.gap,
        "iters": s.iterations,
        "converged": s.converged,
        "cells": e.len(),
    });
    let out = match format {
        Format::Csv => csv_rows(
            &["value_upper", "value_lower", "gap", "iters", "converged", "cells"],
            &[vec![
                s.value_upper.to_string(),
                s.value_lower.to_string(),
                s.gap.to_string(),
                s.iterations.to_string(),
                s.converged.to_string(),
                e.len().to_string(),
            ]],
        ),
        _ => pretty(&document("capacity", cmd, result))?,
    };
    let summary = format!(
        "capacity of {} cells: [{:.8e}, {:.8e}] gap {:.2e} after {} iterations",
        e.len(),
        s.value_lower,
        s.value_upper,
        s.gap,
        s.iterations
    );
    let flag = (!s.converged).then(|| Failure::Solver(format!("solver stopped with gap {:.3e}", s.gap)));
    Ok((out, summary, flag))
}

fn run_choquet(cmd: &ChoquetCmd, format: Format) -> Result<Outcome, Failure> {
    no_text(format)?;
    let f = read_field(&cmd.input)?;
    let w = weight(&cmd.weight, &f.grid)?;
    let oracle = CapacityOracle::capacity(&w, cmd.solver.kernel(), cmd.solver.p, cmd.solver.options());
    let how = Refinement {
        levels: cmd.levels,
        rel_tol: cmd.bracket_tol,
        max_sets: cmd.max_sets,
    };
    let (upper, lower, result) = if cmd.weak {
        let v = weak_adaptive(&f, cmd.q, &oracle, how)?;
        (v.value, v.lower, serde_json::to_value(&v).map_err(capax::Error::from)?)
    } else {
        let v = choquet_adaptive(&f, cmd.q, &oracle, how)?;
        (v.value, v.lower, serde_json::to_value(&v).map_err(capax::Error::from)?)
    };
    let out = match format {
        Format::Csv => csv_rows(
            &["value_upper", "value_lower", "sets"],
            &[vec![upper.to_string(), lower.to_string(), oracle.evaluations().to_string()]],
        ),
        _ => pretty(&document("choquet", cmd, result))?,
    };
    let name = if cmd.weak { "weak quasi-norm" } else { "choquet integral" };
    Ok((
        out,
        format!("{name}: [{lower:.6e}, {upper:.6e}] from {} level sets", oracle.evaluations()),
        None,
    ))
}

fn run_verify(cmd: &VerifyCmd, format: Format) -> Result<Outcome, Failure> {
    no_text(format)?;
    let ids: Vec<CheckId> = if cmd.check == "all" {
        CheckId::ALL.to_vec()
    } else {
        cmd.check
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<capax::Result<_>>()?
    };
    let mut checks: Vec<CheckReport> = Vec::new();
    for id in ids {
        let mut params = id.defaults(cmd.seed);
        if let Some(h) = cmd.h {
            params.h = h;
        }
        checks.extend(run_check(id, &params)?);
    }
    let report = VerifyReport::new(cmd.seed, checks);
    let out = match format {
        Format::Csv => csv_rows(
            &["id", "setting", "verdict", "constant", "constant_refined", "refinement_ratio"],
            &report
                .checks
                .iter()
                .map(|c| {
                    let setting = c
                        .settings
                        .iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect::<Vec<_>>()
                        .join(";");
                    vec![
                        c.id.clone(),
                        setting,
                        format!("{:?}", c.verdict).to_lowercase(),
                        c.constant.to_string(),
                        c.constant_refined.to_string(),
                        c.refinement_ratio.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        _ => pretty(&document(
            "verify",
            cmd,
            serde_json::to_value(&report).map_err(capax::Error::from)?,
        ))?,
    };
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| c.id.as_str())
        .collect();
    let summary = if failed.is_empty() {
        format!("verify: {} reports, all pass", report.checks.len())
    } else {
        format!("verify: {} reports, failed: {}", report.checks.len(), failed.join(", "))
    };
    let flag = (!report.pass).then_some(Failure::Verdict);
    Ok((out, summary, flag))
}

/// A TOML table with `version = 1`; every other key names a flag of the
/// subcommand (`max_iter` or `max-iter`), booleans toggle switches.
fn config_args(path: &Path) -> Result<Vec<String>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    match table.get("version").and_then(toml::Value::as_integer) {
        Some(v) if v == i64::from(CONFIG_VERSION) => {}
        Some(v) => return Err(Failure::Usage(format!("unsupported config version {v}"))),
        None => {
            return Err(Failure::Usage(format!(
                "{}: missing `version = {CONFIG_VERSION}`",
                path.display()
            )))
        }
    }
    let mut args = Vec::new();
    for (k, v) in table.iter().filter(|(k, _)| *k != "version") {
        let flag = format!("--{}", k.replace('_', "-"));
        let value = match v {
            toml::Value::Boolean(true) => {
                args.push(flag);
                continue;
            }
            toml::Value::Boolean(false) => continue,
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(x) => x.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|x| match x {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => return Err(Failure::Usage(format!("{k}: unsupported value {other}"))),
        };
        args.push(flag);
        args.push(value);
    }
    Ok(args)
}

/// Inserts config-file flags right after the subcommand so that flags given
/// on the command line, which come later, take precedence.
fn merged_argv() -> Result<Vec<String>, Failure> {
    let argv: Vec<String> = std::env::args().collect();
    let pos = argv.iter().position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else { return Ok(argv) };
    let path = match argv[pos].split_once('=') {
        Some((_, p)) => p.to_string(),
        None => argv
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| Failure::Usage("--config needs a path".into()))?,
    };
    let extra = config_args(Path::new(&path))?;
    let names = ["grid", "weight", "maximal", "potential", "capacity", "choquet", "verify"];
    let sub = argv
        .iter()
        .position(|a| names.contains(&a.as_str()))
        .ok_or_else(|| Failure::Usage("missing subcommand".into()))?;
    let mut out = argv[..=sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[sub + 1..]);
    Ok(out)
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("CAPAX_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("CAPAX_THREADS={v:?} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run() -> Result<(), Failure> {
    let argv = merged_argv()?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 {
                Ok(())
            } else {
                Err(Failure::Usage(String::new()))
            };
        }
    };
    configure_threads()?;
    let f = cli.format;
    let (text, summary, flag) = match &cli.command {
        Command::Grid(c) => run_grid(c, f)?,
        Command::Weight(c) => run_weight(c, f)?,
        Command::Maximal(c) => run_maximal(c, f)?,
        Command::Potential(c) => run_potential(c, f)?,
        Command::Capacity(c) => run_capacity(c, f)?,
        Command::Choquet(c) => run_choquet(c, f)?,
        Command::Verify(c) => run_verify(c, f)?,
    };
    match &cli.out {
        Some(path) => std::fs::write(path, &text).map_err(|e| io_err(path, e))?,
        None => print!("{text}"),
    }
    eprintln!("{summary}");
    flag.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Solver(m) | Failure::Io(m) if !m.is_empty() => eprintln!("capax: {m}"),
                _ => {}
            }
            ExitCode::from(f.code())
        }
    }
}

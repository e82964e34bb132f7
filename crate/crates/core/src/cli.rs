//! Command-line surface. Every command renders a deterministic report string;
//! the binary only parses arguments, sizes the worker pool and writes output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::constructors::{construct_c_element, construct_t_element, Flavor, StratumRequest};
use crate::error::{Result, StrataError};
use crate::field::{
    self, curve_condition, exclusion_report, fixture, max_holomorphic_residual, motivational_identity_check,
    nabla_prime_residual, poisson_suite, read_field, stratum_map, three_form_type_check, write_field, Encoding,
    Fixture, StratumMap, StructureField, Target,
};
use crate::grassmann::{
    build_chart, graph_intersection_dim, graph_point, is_maximal_isotropic, random_params, stratum_dim, StratumKind,
};
use crate::numerics::{kernel, CMat, Mat, Tolerance};
use crate::pair::{
    bundle_map_ranks, canonical_decomposition, classify_pair, decompose_id_infinity, eigenspace_intersection_dims,
    eigenspaces, raw_ranks, StratumSignature,
};
use crate::structures::{j0, random_c, random_t, rng, ComplexStructure, Metric};
use crate::tangent::{check_transversality, tangent_model, Which};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum MetricChoice {
    Identity,
    /// `A A^T + I` drawn from the run seed.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
pub enum Command {
    /// Classify the pair in `--input` and summarize its decomposition.
    Classify,
    /// Build a pair in the stratum `(--n, --m1, --mm1)`; metric-compatible with `--metric`.
    Construct,
    /// Draw a random pair of dimension `--n` from `--seed`.
    Sample,
    /// Tangent-space dimensions and transversality for `--input` or a constructed pair.
    Tangent,
    /// Analyze a field file (`--input`) or a built-in `--fixture`.
    Field,
    /// Run the invariant suite for `n <= --n` over `--seeds` seeds.
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "strata", version, about = "Strata of pairs of complex structures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Pair file (JSON) or field file to read.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Complex dimension (the real dimension is 2n).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Requested m1: half the real dimension of ker(J+K).
    #[arg(long, global = true)]
    pub m1: Option<usize>,
    /// Requested m_minus1: half the real dimension of ker(J-K).
    #[arg(long, global = true)]
    pub mm1: Option<usize>,
    /// Eigenvalue parameter of the paired blocks (finite, nonzero, |r| != 1; default 2).
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Relative rank tolerance.
    #[arg(long = "tol-rel", global = true)]
    pub tol_rel: Option<f64>,
    /// Absolute rank tolerance.
    #[arg(long = "tol-abs", global = true)]
    pub tol_abs: Option<f64>,
    /// Built-in field: constant, quat_rotation, line_drop, holomorphic, nonholomorphic, poisson, exclusion.
    #[arg(long, global = true)]
    pub fixture: Option<String>,
    /// Points per axis.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Comma-separated grid spacings; one analysis per value.
    #[arg(long, global = true, value_delimiter = ',')]
    pub h: Vec<f64>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Build metric-compatible pairs, under this metric.
    #[arg(long, global = true, value_enum)]
    pub metric: Option<MetricChoice>,
    /// Seed count for `verify`.
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    /// Also write the analyzed field to this path (binary encoding).
    #[arg(long, global = true)]
    pub export: Option<PathBuf>,
}

/// Validated run parameters.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub tol: Tolerance,
    pub n: Option<usize>,
    pub request: Option<StratumRequest>,
    pub fixture: Option<String>,
    pub grid: Option<usize>,
    pub h: Vec<f64>,
    pub format: Format,
    pub metric: Option<MetricChoice>,
    pub seeds: usize,
    pub export: Option<PathBuf>,
}

pub const DEFAULT_VERIFY_N: usize = 4;
pub const MAX_VERIFY_N: usize = 5;
pub const DEFAULT_SEEDS: usize = 500;

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let d = Tolerance::default();
        let tol = Tolerance::new(cli.tol_rel.unwrap_or(d.rel), cli.tol_abs.unwrap_or(d.abs))?;
        if let Some(&h) = cli.h.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(StrataError::InvalidRequest(format!("invalid spacing {h}")));
        }
        let request = match (cli.n, cli.m1, cli.mm1) {
            (Some(n), m1, mm1) if m1.is_some() || mm1.is_some() => {
                let mut req = StratumRequest::new(n, m1.unwrap_or(0), mm1.unwrap_or(0));
                if let Some(r) = cli.r {
                    req = req.with_r(r);
                }
                req.metric = cli.metric.is_some();
                Some(req)
            }
            (None, Some(_), _) | (None, _, Some(_)) => {
                return Err(StrataError::InvalidRequest("--m1/--mm1 need --n".into()));
            }
            _ => None,
        };
        Ok(RunConfig {
            command: cli.command,
            input: cli.input,
            output: cli.output,
            seed: cli.seed,
            tol,
            n: cli.n,
            request,
            fixture: cli.fixture,
            grid: cli.grid,
            h: cli.h,
            format: cli.format,
            metric: cli.metric,
            seeds: cli.seeds.unwrap_or(DEFAULT_SEEDS),
            export: cli.export,
        })
    }
}

/// Rendered report plus exit status.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: String,
    pub code: i32,
}

/// Caps the global worker pool from `STRATA_THREADS`.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("STRATA_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| StrataError::InvalidRequest(format!("STRATA_THREADS={v} is not a positive integer")))?;
    // a pool built earlier in the process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Full pipeline for the binary: run, write, map errors to exit codes.
pub fn main_with(cli: Cli) -> i32 {
    let outcome = init_threads().and_then(|_| RunConfig::from_cli(cli)).and_then(|cfg| {
        let out = run(&cfg)?;
        emit(&out.report, cfg.output.as_deref())?;
        Ok(out.code)
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(report: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, report)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(report.as_bytes())?;
        }
    }
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.format == Format::Csv && !matches!(cfg.command, Command::Classify | Command::Field) {
        return Err(StrataError::InvalidRequest("csv output is available for classify and field".into()));
    }
    match cfg.command {
        Command::Classify => cmd_classify(cfg),
        Command::Construct => cmd_construct(cfg),
        Command::Sample => cmd_sample(cfg),
        Command::Tangent => cmd_tangent(cfg),
        Command::Field => cmd_field(cfg),
        Command::Verify => cmd_verify(cfg),
    }
}

fn ok(v: Value) -> Result<Outcome> {
    Ok(Outcome { report: pretty(&v)?, code: 0 })
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// `{"rows", "cols", "data"}` with row-major reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// `{"rows", "cols", "re", "im"}`, both parts row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&Mat> for MatrixJson {
    fn from(m: &Mat) -> Self {
        let data = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| (r, c))).map(|i| m[i]).collect();
        MatrixJson { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl MatrixJson {
    pub fn to_mat(&self) -> Result<Mat> {
        if self.rows * self.cols != self.data.len() {
            return Err(StrataError::Malformed(format!(
                "{}x{} matrix with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(Mat::from_row_slice(self.rows, self.cols, &self.data))
    }
}

impl From<&CMat> for ComplexMatrixJson {
    fn from(m: &CMat) -> Self {
        let idx: Vec<(usize, usize)> = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| (r, c))).collect();
        ComplexMatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            re: idx.iter().map(|&i| m[i].re).collect(),
            im: idx.iter().map(|&i| m[i].im).collect(),
        }
    }
}

impl ComplexMatrixJson {
    pub fn to_cmat(&self) -> Result<CMat> {
        let len = self.rows * self.cols;
        if self.re.len() != len || self.im.len() != len {
            return Err(StrataError::Malformed("complex matrix size mismatch".into()));
        }
        let v: Vec<Complex64> = self.re.iter().zip(&self.im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        Ok(CMat::from_row_slice(self.rows, self.cols, &v))
    }
}

/// Input schema for pair commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairJson {
    #[serde(rename = "J")]
    pub j: MatrixJson,
    #[serde(rename = "K")]
    pub k: MatrixJson,
    #[serde(default)]
    pub g: Option<MatrixJson>,
}

impl PairJson {
    pub fn new(j: &ComplexStructure, k: &ComplexStructure) -> Self {
        PairJson { j: j.matrix().into(), k: k.matrix().into(), g: j.metric().map(|g| g.matrix().into()) }
    }

    pub fn structures(&self) -> Result<(ComplexStructure, ComplexStructure)> {
        let g = self.g.as_ref().map(|g| g.to_mat().and_then(Metric::new)).transpose()?;
        Ok((ComplexStructure::new(self.j.to_mat()?, g.clone())?, ComplexStructure::new(self.k.to_mat()?, g)?))
    }
}

fn read_pair(cfg: &RunConfig) -> Result<(ComplexStructure, ComplexStructure)> {
    let path = cfg.input.as_ref().ok_or_else(|| StrataError::InvalidRequest("--input is required".into()))?;
    let text = std::fs::read_to_string(path)?;
    let pair = match serde_json::from_str::<PairInput>(&text)? {
        PairInput::Bare(p) | PairInput::Wrapped { pair: p } => p,
    };
    pair.structures()
}

/// A bare pair, or any report carrying one under `"pair"` (construct, sample).
#[derive(Deserialize)]
#[serde(untagged)]
enum PairInput {
    Bare(PairJson),
    Wrapped { pair: PairJson },
}

fn cmd_classify(cfg: &RunConfig) -> Result<Outcome> {
    let (j, k) = read_pair(cfg)?;
    let sig = classify_pair(&j, &k, cfg.tol)?;
    if cfg.format == Format::Csv {
        let k = sig.k.map(|k| k.to_string()).unwrap_or_default();
        let report = format!(
            "n,m1,m_minus1,s,k,same_orientation\n{},{},{},{},{},{}\n",
            sig.n, sig.m1, sig.m_minus1, sig.s, k, sig.same_orientation
        );
        return Ok(Outcome { report, code: 0 });
    }
    let (plus, minus, comm) = raw_ranks(j.matrix(), k.matrix(), cfg.tol);
    let (v10, v01) = eigenspace_intersection_dims(&j, &k, cfg.tol)?;
    let (_, mu_k) = eigenspaces(k.matrix(), cfg.tol);
    let mut report = json!({
        "signature": sig,
        "orientation": if sig.same_orientation { 1 } else { -1 },
        "kernel_dims": { "plus": plus, "minus": minus, "commutator_rank": comm },
        "eigenspace_intersections": [v10, v01],
        "mu_k": ComplexMatrixJson::from(&mu_k.basis),
        "bundle_maps": bundle_map_ranks(&j, &k, cfg.tol)?,
    });
    if let Some(g) = j.shares_metric(&k) {
        let dec = canonical_decomposition(&j, &k, g, cfg.tol)?;
        let id = decompose_id_infinity(&j, &k, g, cfg.tol)?;
        report["decomposition"] = json!({
            "blocks": dec.blocks_e.iter().map(|b| json!({"e": b.e, "f": b.f, "dim": b.dim()})).collect::<Vec<_>>(),
            "v1_dim": dec.v1.dim(),
            "v_minus1_dim": dec.v_minus1.dim(),
            "completeness_residual": dec.completeness_residual(),
        });
        report["id_infinity"] = id
            .summands
            .iter()
            .map(|s| json!({"poly": s.poly, "coefficients": s.poly.coefficients(), "multiplicity": s.multiplicity}))
            .collect();
    }
    ok(report)
}

fn metric_for(choice: MetricChoice, dim: usize, seed: u64) -> Metric {
    match choice {
        MetricChoice::Identity => Metric::identity(dim),
        MetricChoice::Random => Metric::random(dim, seed),
    }
}

fn constructed(cfg: &RunConfig) -> Result<(ComplexStructure, ComplexStructure)> {
    let req = cfg.request.ok_or_else(|| StrataError::InvalidRequest("--n with --m1/--mm1 is required".into()))?;
    match cfg.metric {
        Some(choice) => {
            let g = metric_for(choice, 2 * req.n, cfg.seed);
            let j = match choice {
                MetricChoice::Identity => ComplexStructure::standard(req.n),
                MetricChoice::Random => random_t(req.n, &g, cfg.seed.wrapping_add(1)),
            };
            let k = construct_t_element(&j, &g, &req)?;
            Ok((j, k))
        }
        None => {
            let j = ComplexStructure::new(j0(req.n), None)?;
            let k = construct_c_element(&j, &req)?;
            Ok((j, k))
        }
    }
}

fn cmd_construct(cfg: &RunConfig) -> Result<Outcome> {
    let (j, k) = constructed(cfg)?;
    let sig = classify_pair(&j, &k, cfg.tol)?;
    ok(json!({ "request": cfg.request, "pair": PairJson::new(&j, &k), "signature": sig }))
}

fn cmd_sample(cfg: &RunConfig) -> Result<Outcome> {
    let n = cfg.n.ok_or_else(|| StrataError::InvalidRequest("--n is required".into()))?;
    let s = cfg.seed;
    let (j, k) = match cfg.metric {
        Some(choice) => {
            let g = metric_for(choice, 2 * n, s);
            (random_t(n, &g, s.wrapping_mul(2).wrapping_add(1)), random_t(n, &g, s.wrapping_mul(2).wrapping_add(2)))
        }
        None => (random_c(n, s.wrapping_mul(2).wrapping_add(1)), random_c(n, s.wrapping_mul(2).wrapping_add(2))),
    };
    let sig = classify_pair(&j, &k, cfg.tol)?;
    ok(json!({ "seed": s, "pair": PairJson::new(&j, &k), "signature": sig }))
}

fn expected_dim(flavor: Flavor, which: Which, n: usize, m1: usize, mm1: usize) -> Result<usize> {
    let kind = match (flavor, which) {
        (Flavor::C, Which::M1Star) => StratumKind::CM1 { m1 },
        (Flavor::C, Which::StarM1) => StratumKind::CM1 { m1: mm1 },
        (Flavor::C, Which::Pair) => StratumKind::CPair { m1, m_minus1: mm1 },
        (Flavor::T, Which::M1Star) => StratumKind::TM1 { m1 },
        (Flavor::T, Which::StarM1) => StratumKind::TM1 { m1: mm1 },
        (Flavor::T, Which::Pair) => StratumKind::TPair { m1, m_minus1: mm1 },
    };
    stratum_dim(kind, n)
}

fn cmd_tangent(cfg: &RunConfig) -> Result<Outcome> {
    let (j, k) = if cfg.input.is_some() { read_pair(cfg)? } else { constructed(cfg)? };
    let sig = classify_pair(&j, &k, cfg.tol)?;
    let g = j.shares_metric(&k).cloned();
    let flavor = if g.is_some() { Flavor::T } else { Flavor::C };
    let mut models = Vec::new();
    for which in [Which::M1Star, Which::StarM1, Which::Pair] {
        let m = tangent_model(&j, &k, flavor, g.as_ref(), which, cfg.tol)?;
        models.push(json!({
            "which": which,
            "ambient_complex_dim": m.ambient_complex_dim(),
            "stratum_complex_dim": m.stratum_complex_dim(),
            "complex_codim": m.complex_codim(),
            "formula": expected_dim(flavor, which, sig.n, sig.m1, sig.m_minus1)?,
        }));
    }
    let tr = check_transversality(&j, &k, flavor, g.as_ref(), cfg.tol)?;
    ok(json!({ "flavor": flavor, "signature": sig, "models": models, "transversality": tr }))
}

/// One analysis pass of `cmd_field`.
#[derive(Debug, Clone, Serialize)]
pub struct FieldRun {
    pub h: f64,
    pub shape: Vec<usize>,
    pub strata: Vec<Value>,
    pub components: usize,
    pub semicontinuity_violations: usize,
    pub nabla_prime: f64,
    pub holomorphic: Option<f64>,
    pub three_form_type: Option<[f64; 2]>,
    pub motivational: Option<Value>,
    /// `(res_plus, res_minus)` at the centre point, per axis.
    pub curve_condition_center: Option<Vec<[f64; 2]>>,
    pub poisson: Option<field::PoissonReport>,
    pub exclusion: field::ExclusionReport,
    #[serde(skip)]
    pub map: Option<StratumMap>,
}

fn analyze(f: &StructureField, tol: Tolerance) -> Result<FieldRun> {
    let map = stratum_map(f, tol)?;
    let mut counts: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    for s in &map.signatures {
        *counts.entry((s.m1, s.m_minus1, s.s)).or_default() += 1;
    }
    let strata = counts.iter().map(|(&(a, b, s), &c)| json!({"m1": a, "m_minus1": b, "s": s, "points": c})).collect();
    let holomorphic = match f.base() {
        Some(_) => Some(max_holomorphic_residual(f)?),
        None => None,
    };
    let (three_form_type, motivational) = if f.three_form(0).is_some() {
        let mut worst = [0.0f64; 2];
        for p in 0..f.len() {
            worst[0] = worst[0].max(three_form_type_check(f, p, Target::J)?);
            worst[1] = worst[1].max(three_form_type_check(f, p, Target::K)?);
        }
        let mot = if f.has_metric() {
            let rs = (0..f.len())
                .into_par_iter()
                .map(|p| motivational_identity_check(f, p, false, tol))
                .collect::<Result<Vec<_>>>()?;
            let max = |g: fn(&field::MotivationalReport) -> f64| rs.iter().map(g).fold(0.0, f64::max);
            Some(json!({
                "admissible": rs.iter().all(|r| r.admissible),
                "part1": max(|r| r.part1),
                "part2": max(|r| r.part2),
                "part3": max(|r| r.part3),
            }))
        } else {
            None
        };
        (Some(worst), mot)
    } else {
        (None, None)
    };
    let (curve, poisson) = if f.has_metric() {
        let c = f.grid().center();
        let d = f.grid().dim();
        let curve = (0..d)
            .map(|a| {
                let dir: Vec<f64> = (0..d).map(|i| if i == a { 1.0 } else { 0.0 }).collect();
                curve_condition(f, c, &dir, tol).map(|(p, m)| [p, m])
            })
            .collect::<Result<Vec<_>>>()?;
        (Some(curve), Some(poisson_suite(f, tol)?))
    } else {
        (None, None)
    };
    Ok(FieldRun {
        h: f.grid().h(),
        shape: f.grid().shape().to_vec(),
        strata,
        components: map.component_info.len(),
        semicontinuity_violations: map.violations.len(),
        nabla_prime: nabla_prime_residual(f),
        holomorphic,
        three_form_type,
        motivational,
        curve_condition_center: curve,
        poisson,
        exclusion: exclusion_report(&map),
        map: Some(map),
    })
}

fn stratum_csv(map: &StratumMap) -> String {
    let d = map.grid.dim();
    let mut out: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    out.extend(["m1", "m_minus1", "s", "k", "component"].map(String::from));
    let mut s = out.join(",");
    s.push('\n');
    for (p, sig) in map.signatures.iter().enumerate() {
        let coords: Vec<String> = map.grid.coords(p).iter().map(|x| format!("{x}")).collect();
        let k = sig.k.map(|k| k.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            coords.join(","),
            sig.m1,
            sig.m_minus1,
            sig.s,
            k,
            map.components[p]
        ));
    }
    s
}

fn cmd_field(cfg: &RunConfig) -> Result<Outcome> {
    let fields: Vec<StructureField> = match (&cfg.input, &cfg.fixture) {
        (Some(_), Some(_)) => return Err(StrataError::InvalidRequest("give --input or --fixture, not both".into())),
        (Some(path), None) => {
            if !cfg.h.is_empty() {
                return Err(StrataError::InvalidRequest("--h applies to fixtures only".into()));
            }
            let mut r = BufReader::new(File::open(path)?);
            vec![read_field(&mut r)?]
        }
        (None, Some(name)) => {
            let kind = Fixture::parse(name)?;
            let poisson = kind == Fixture::Poisson;
            if cfg.h.is_empty() {
                vec![fixture(kind, cfg.grid, None)?]
            } else {
                let pts = if poisson { cfg.grid } else { None };
                cfg.h.iter().map(|&h| fixture(kind, pts, Some(h))).collect::<Result<_>>()?
            }
        }
        (None, None) => return Err(StrataError::InvalidRequest("--input or --fixture is required".into())),
    };
    if let Some(path) = &cfg.export {
        let mut w = std::io::BufWriter::new(File::create(path)?);
        write_field(&fields[0], &mut w, Encoding::Binary)?;
        w.flush()?;
    }
    let mut runs = fields.iter().map(|f| analyze(f, cfg.tol)).collect::<Result<Vec<_>>>()?;
    if cfg.format == Format::Csv {
        let map = runs[0].map.take().expect("analysis keeps its map");
        return Ok(Outcome { report: stratum_csv(&map), code: 0 });
    }
    let mut ratios = Vec::new();
    for w in runs.windows(2) {
        for e in w[0].poisson.iter().flat_map(|p| p.jacobi.iter()) {
            let fine = w[1].poisson.as_ref().and_then(|p| p.jacobi_residual(e.kind));
            let ratio = fine.filter(|&f| f > 0.0).map(|f| e.residual / f);
            ratios.push(json!({"kind": e.kind, "h_coarse": w[0].h, "h_fine": w[1].h, "ratio": ratio}));
        }
    }
    ok(json!({
        "source": cfg.fixture.clone().or_else(|| cfg.input.as_ref().map(|p| p.display().to_string())),
        "runs": runs,
        "jacobi_ratios": ratios,
    }))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct InvariantCount {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    /// Failure counts keyed by error kind.
    pub failures: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub max_n: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub tol: Tolerance,
    pub checks: Vec<InvariantCount>,
    pub all_passed: bool,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&InvariantCount> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures_of(&self, kind: &str) -> usize {
        self.checks.iter().map(|c| c.failures.get(kind).copied().unwrap_or(0)).sum()
    }
}

pub const INVARIANTS: [&str; 8] = [
    "kernel_splitting",
    "metric_parity",
    "constructor_round_trip",
    "mu_intersection",
    "tangent_dimensions",
    "transversality",
    "graph_chart_law",
    "graph_isotropy",
];

type Tally = Vec<(usize, std::result::Result<(), String>)>;

fn check(out: &mut Tally, idx: usize, r: Result<bool>) {
    out.push((
        idx,
        match r {
            Ok(true) => Ok(()),
            Ok(false) => Err("Mismatch".into()),
            Err(e) => Err(e.kind()),
        },
    ));
}

fn splitting(j: &ComplexStructure, k: &ComplexStructure, tol: Tolerance) -> Result<bool> {
    let sig = classify_pair(j, k, tol)?;
    let (plus, minus, comm) = raw_ranks(j.matrix(), k.matrix(), tol);
    if j.dim() - comm != plus + minus || plus != 2 * sig.m1 || minus != 2 * sig.m_minus1 {
        return Ok(false);
    }
    let Some(g) = j.shares_metric(k) else { return Ok(true) };
    let np = kernel(&(j.matrix() + k.matrix()), tol).real_basis().expect("real input");
    let nm = kernel(&(j.matrix() - k.matrix()), tol).real_basis().expect("real input");
    if np.ncols() == 0 || nm.ncols() == 0 {
        return Ok(true);
    }
    Ok((np.transpose() * g.matrix() * nm).amax() <= 1e-8 * g.matrix().amax().max(1.0))
}

fn parity(j: &ComplexStructure, k: &ComplexStructure, tol: Tolerance) -> Result<bool> {
    let sig = classify_pair(j, k, tol)?;
    Ok((2 * sig.s) % 4 == 0 && sig.same_orientation == (sig.m1 % 2 == 0))
}

fn mu_law(j: &ComplexStructure, k: &ComplexStructure, tol: Tolerance) -> Result<bool> {
    let sig = classify_pair(j, k, tol)?;
    Ok(eigenspace_intersection_dims(j, k, tol)? == (sig.m1, sig.m_minus1))
}

fn round_trip(j: &ComplexStructure, k: &ComplexStructure, req: &StratumRequest, tol: Tolerance) -> Result<bool> {
    let sig: StratumSignature = classify_pair(j, k, tol)?;
    Ok(sig.pair() == (req.m1, req.m_minus1))
}

fn tangent_laws(
    out: &mut Tally,
    j: &ComplexStructure,
    k: &ComplexStructure,
    flavor: Flavor,
    g: Option<&Metric>,
    req: &StratumRequest,
    tol: Tolerance,
) {
    let dims = (|| -> Result<bool> {
        for which in [Which::M1Star, Which::StarM1, Which::Pair] {
            let m = tangent_model(j, k, flavor, g, which, tol)?;
            if m.stratum_complex_dim() != expected_dim(flavor, which, req.n, req.m1, req.m_minus1)? {
                return Ok(false);
            }
        }
        Ok(true)
    })();
    check(out, 4, dims);
    check(out, 5, check_transversality(j, k, flavor, g, tol).map(|t| t.holds));
}

fn chart_laws(out: &mut Tally, j: &ComplexStructure, k: &ComplexStructure, g: Option<&Metric>, seed: u64, tol: Tolerance) {
    let mut r = rng(seed);
    let chart = match build_chart(j, k, g, tol) {
        Ok(c) => c,
        Err(e) => {
            out.push((6, Err(e.kind())));
            return;
        }
    };
    let t = chart.t();
    let choices: Vec<usize> = (0..=t).filter(|x| g.is_none() || (t - x) % 2 == 0).collect();
    let nullity = choices[r.random_range(0..choices.len())];
    let law = random_params(&chart, nullity, 1.0, &mut r).and_then(|p| {
        let dim = graph_intersection_dim(&chart, &p, &chart.v0, tol)?;
        Ok((dim == nullity, p))
    });
    match law {
        Ok((holds, p)) => {
            out.push((6, if holds { Ok(()) } else { Err("Mismatch".into()) }));
            if let Some(g) = g {
                check(out, 7, graph_point(&chart, &p, tol).and_then(|w| is_maximal_isotropic(&w, g, tol)));
            }
        }
        Err(e) => out.push((6, Err(e.kind()))),
    }
}

fn feasible(n: usize, flavor: Flavor) -> Vec<StratumRequest> {
    let mut v = Vec::new();
    for m1 in 0..=n {
        for mm1 in 0..=n - m1 {
            let req = StratumRequest::new(n, m1, mm1);
            if req.is_feasible(flavor) {
                v.push(req);
            }
        }
    }
    v
}

fn verify_seed(i: usize, max_n: usize, base: u64, tol: Tolerance) -> Tally {
    let n = 1 + i % max_n;
    let s = base.wrapping_add(i as u64).wrapping_mul(8);
    let mut out = Tally::new();
    let tangent_round = i.is_multiple_of(4) && n <= 4;

    let (jc, kc) = (random_c(n, s + 1), random_c(n, s + 2));
    check(&mut out, 0, splitting(&jc, &kc, tol));
    check(&mut out, 3, mu_law(&jc, &kc, tol));

    let g = Metric::random(2 * n, s + 3);
    let (jt, kt) = (random_t(n, &g, s + 4), random_t(n, &g, s + 5));
    check(&mut out, 0, splitting(&jt, &kt, tol));
    check(&mut out, 1, parity(&jt, &kt, tol));
    check(&mut out, 3, mu_law(&jt, &kt, tol));

    let reqs = feasible(n, Flavor::T);
    let req = reqs[(i / max_n) % reqs.len()];
    match construct_t_element(&jt, &g, &req) {
        Ok(k) => {
            check(&mut out, 2, round_trip(&jt, &k, &req, tol));
            check(&mut out, 0, splitting(&jt, &k, tol));
            check(&mut out, 1, parity(&jt, &k, tol));
            check(&mut out, 3, mu_law(&jt, &k, tol));
            if tangent_round {
                tangent_laws(&mut out, &jt, &k, Flavor::T, Some(&g), &req, tol);
            }
            chart_laws(&mut out, &jt, &k, Some(&g), s + 6, tol);
        }
        Err(e) => out.push((2, Err(e.kind()))),
    }

    let reqs = feasible(n, Flavor::C);
    let req = reqs[(i / max_n) % reqs.len()];
    match construct_c_element(&jc, &req) {
        Ok(k) => {
            check(&mut out, 2, round_trip(&jc, &k, &req, tol));
            check(&mut out, 0, splitting(&jc, &k, tol));
            check(&mut out, 3, mu_law(&jc, &k, tol));
            if tangent_round {
                tangent_laws(&mut out, &jc, &k, Flavor::C, None, &req, tol);
            }
            chart_laws(&mut out, &jc, &k, None, s + 7, tol);
        }
        Err(e) => out.push((2, Err(e.kind()))),
    }
    out
}

pub fn verify_suite(max_n: usize, seeds: usize, base_seed: u64, tol: Tolerance) -> Result<VerifyReport> {
    if max_n == 0 || max_n > MAX_VERIFY_N {
        return Err(StrataError::InvalidRequest(format!("--n must lie in 1..={MAX_VERIFY_N}")));
    }
    let tallies: Vec<Tally> = (0..seeds).into_par_iter().map(|i| verify_seed(i, max_n, base_seed, tol)).collect();
    let mut checks: Vec<InvariantCount> =
        INVARIANTS.iter().map(|&name| InvariantCount { name, ..Default::default() }).collect();
    for (idx, r) in tallies.into_iter().flatten() {
        match r {
            Ok(()) => checks[idx].passed += 1,
            Err(kind) => {
                checks[idx].failed += 1;
                *checks[idx].failures.entry(kind).or_default() += 1;
            }
        }
    }
    let all_passed = checks.iter().all(|c| c.failed == 0);
    Ok(VerifyReport { max_n, seeds, base_seed, tol, checks, all_passed })
}

fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let report = verify_suite(cfg.n.unwrap_or(DEFAULT_VERIFY_N), cfg.seeds, cfg.seed, cfg.tol)?;
    let code = match (report.all_passed, report.failures_of("OddKernelDimension") > 0) {
        (true, _) => 0,
        (false, true) => 3,
        (false, false) => 2,
    };
    Ok(Outcome { report: pretty(&report)?, code })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructors::counterexample_pair;

    fn config(args: &[&str]) -> RunConfig {
        let mut full = vec!["strata"];
        full.extend_from_slice(args);
        RunConfig::from_cli(Cli::try_parse_from(full).unwrap()).unwrap()
    }

    fn write_pair(name: &str, j: &ComplexStructure, k: &ComplexStructure) -> PathBuf {
        let path = std::env::temp_dir().join(format!("strata-cli-{}-{name}.json", std::process::id()));
        std::fs::write(&path, serde_json::to_string(&PairJson::new(j, k)).unwrap()).unwrap();
        path
    }

    #[test]
    fn classify_counterexample_and_equal_pair() {
        let (j, k) = counterexample_pair();
        let p = write_pair("counter", &j, &k);
        let out = run(&config(&["classify", "--input", p.to_str().unwrap()])).unwrap();
        let v: Value = serde_json::from_str(&out.report).unwrap();
        assert_eq!(v["signature"]["s"], 1);
        assert_eq!(v["orientation"], -1);
        let j3 = ComplexStructure::standard(3);
        let p = write_pair("equal", &j3, &j3);
        let out = run(&config(&["classify", "--input", p.to_str().unwrap(), "--format", "csv"])).unwrap();
        assert_eq!(out.report.lines().nth(1).unwrap(), "3,0,3,0,0,true");
    }

    #[test]
    fn truncated_json_is_exit_one() {
        let path = std::env::temp_dir().join(format!("strata-cli-{}-trunc.json", std::process::id()));
        std::fs::write(&path, "{\"J\": {\"rows\": 2, \"cols\"").unwrap();
        let e = run(&config(&["classify", "--input", path.to_str().unwrap()])).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn infeasible_construct_is_a_validation_error() {
        let e = run(&config(&["construct", "--n", "3", "--m1", "1", "--mm1", "1", "--metric", "identity"])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let out = run(&config(&["construct", "--n", "3", "--m1", "1", "--mm1", "2"])).unwrap();
        assert!(out.report.contains("\"m_minus1\": 2"));
    }

    #[test]
    fn reports_are_reproducible() {
        let a = run(&config(&["sample", "--n", "3", "--seed", "9", "--metric", "random"])).unwrap();
        let b = run(&config(&["sample", "--n", "3", "--seed", "9", "--metric", "random"])).unwrap();
        assert_eq!(a.report, b.report);
        let a = run(&config(&["field", "--fixture", "line_drop", "--grid", "9"])).unwrap();
        let b = run(&config(&["field", "--fixture", "line_drop", "--grid", "9"])).unwrap();
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let cli = Cli::try_parse_from(["strata", "verify", "--tol-rel=-1"]).unwrap();
        assert_eq!(RunConfig::from_cli(cli).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn verify_small_run_passes() {
        let r = verify_suite(1, 8, 0, Tolerance::default()).unwrap();
        assert!(r.all_passed, "{r:?}");
    }

    #[test]
    fn matrix_schema_round_trips() {
        let m = Mat::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let j = MatrixJson::from(&m);
        assert_eq!(j.data, vec![1., 2., 3., 4., 5., 6.]);
        assert_eq!(j.to_mat().unwrap(), m);
        let c = crate::numerics::to_complex(&m) * Complex64::new(0.0, 1.0);
        assert_eq!(ComplexMatrixJson::from(&c).to_cmat().unwrap(), c);
    }
}

//! Problem ingestion, solver dispatch and machine-readable output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::barriers::BoxBarrier;
use crate::error::{Error, Result};
use crate::ipm::{solve_from_interior, BarrierProblem, IpmConfig};
use crate::linalg::{SymMatrix, Vector};
use crate::linear::{solve_linear_with, LinearOptions};
use crate::oracle::Mode;
use crate::sdp::{solve_sdp, SdpProblem};
use crate::trace::{write_jsonl, TraceEvent};
use crate::verify;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolveLinear,
    SolveBarrier,
    SolveSdp,
    Verify,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub command: Command,
    pub input: Option<PathBuf>,
    /// Flat `key = value` file applied before the flags below.
    pub config: Option<PathBuf>,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    pub mode: Option<Mode>,
    pub bound: Option<f64>,
    pub seed: u64,
    pub trace: Option<PathBuf>,
}

impl RunSpec {
    pub fn new(command: Command) -> Self {
        RunSpec {
            command,
            input: None,
            config: None,
            eps: None,
            beta: None,
            mode: None,
            bound: None,
            seed: 0,
            trace: None,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Input and configuration problems map to exit code 2, everything else to 1.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::NonSymmetricEntry { .. } | Error::Io(_) | Error::InvalidArgument(_) => {
            EXIT_INPUT
        }
        _ => EXIT_SOLVER,
    }
}

/// Runs one command, writing result JSON to `out` and messages to `err`.
pub fn run(spec: &RunSpec, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(spec) {
        Ok((json, trace, code)) => {
            if let Some(path) = &spec.trace {
                let written = fs::File::create(path)
                    .map_err(Error::from)
                    .and_then(|f| write_jsonl(std::io::BufWriter::new(f), &trace));
                if let Err(e) = written {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_INPUT;
                }
            }
            let _ = writeln!(out, "{json}");
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

type Dispatched = (String, Vec<TraceEvent>, i32);

fn dispatch(spec: &RunSpec) -> Result<Dispatched> {
    if let Some(eps) = spec.eps {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!("eps = {eps} not in (0, 1)")));
        }
    }
    match spec.command {
        Command::SolveLinear => run_linear(spec),
        Command::SolveBarrier => run_barrier(spec),
        Command::SolveSdp => run_sdp(spec),
        Command::Verify => run_verify(spec),
    }
}

fn input_path(spec: &RunSpec, ext: &str) -> Result<PathBuf> {
    let path = spec
        .input
        .clone()
        .ok_or_else(|| Error::InvalidArgument("missing input file".into()))?;
    let name = path.to_string_lossy();
    if !name.ends_with(ext) {
        return Err(Error::InvalidArgument(format!(
            "{name}: expected a {ext} file for this command"
        )));
    }
    Ok(path)
}

fn ipm_config(spec: &RunSpec) -> Result<IpmConfig> {
    let mut cfg = IpmConfig::default();
    if let Some(path) = &spec.config {
        apply_config(&fs::read_to_string(path)?, &mut cfg)?;
    }
    if let Some(b) = spec.beta {
        cfg.beta = b;
    }
    if let Some(m) = spec.mode {
        cfg.mode = m;
    }
    if let Some(b) = spec.bound {
        cfg.bound = b;
    }
    if let Some(e) = spec.eps {
        cfg.eps = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Applies `key = value` lines to `cfg`; `#` starts a comment.
pub fn apply_config(text: &str, cfg: &mut IpmConfig) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err("expected key = value".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| parse_err(format!("{key}: not a number: {value:?}")))
        };
        let flag = || {
            value
                .parse::<bool>()
                .map_err(|_| parse_err(format!("{key}: not a boolean: {value:?}")))
        };
        match key {
            "beta" => cfg.beta = num()?,
            "B" | "bound" => cfg.bound = num()?,
            "bound_h" => cfg.bound_h = num()?,
            "bound_htilde" => cfg.bound_htilde = num()?,
            "eps" => cfg.eps = num()?,
            "mu0" => cfg.mu0 = num()?,
            "tau0" => cfg.tau0 = num()?,
            "inner_cap" => cfg.inner_cap = Some(num()? as usize),
            "mode" => cfg.mode = value.parse().map_err(|_| parse_err(format!("unknown mode {value:?}")))?,
            "verify" => cfg.verify = flag()?,
            "reset_preconditioner" => cfg.reset_preconditioner = flag()?,
            "phase1_exact_newton" => cfg.phase1_exact_newton = flag()?,
            other => return Err(parse_err(format!("unknown key {other:?}"))),
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixInput {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl MatrixInput {
    fn into_sym(self, n: usize) -> Result<SymMatrix> {
        let flat: Vec<f64> = match self {
            MatrixInput::Flat(v) => v,
            MatrixInput::Rows(rows) => {
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidArgument("H rows must have length n".into()));
                }
                rows.into_iter().flatten().collect()
            }
        };
        if flat.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "H has {} entries, expected {}",
                flat.len(),
                n * n
            )));
        }
        SymMatrix::from_row_major(n, &flat).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

#[derive(Deserialize)]
struct LinearInput {
    #[serde(rename = "H")]
    h: MatrixInput,
    b: Vec<f64>,
    eps: Option<f64>,
    x0: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct BoxInput {
    c: Vec<f64>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    y0: Option<Vec<f64>>,
    scale: Option<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line().max(1),
        message: e.to_string(),
    })
}

fn run_linear(spec: &RunSpec) -> Result<Dispatched> {
    let input: LinearInput = read_json(&input_path(spec, ".json")?)?;
    let n = input.b.len();
    let h = input.h.into_sym(n)?;
    let b = Vector::from_vec(input.b);
    let x0 = match input.x0 {
        Some(x) if x.len() == n => Vector::from_vec(x),
        Some(_) => return Err(Error::InvalidArgument("x0 has the wrong length".into())),
        None => Vector::zeros(n),
    };
    let opts = LinearOptions {
        eps: spec.eps.or(input.eps).unwrap_or(1e-8),
        beta: spec.beta.unwrap_or(0.5),
        ..LinearOptions::default()
    };
    let sol = solve_linear_with(&h, &b, &x0, &opts)?;
    let mut j = JsonObject::new();
    j.str("command", "solve-linear");
    j.vec("x", sol.x.as_slice());
    j.num("residual", sol.residual);
    j.num("relative_residual", sol.residual / sol.initial_residual.max(f64::MIN_POSITIVE));
    j.int("iterations", sol.iterations as u64);
    j.int("updates", sol.updates as u64);
    j.num("iteration_bound", sol.iteration_bound);
    Ok((j.finish(), sol.trace, EXIT_OK))
}

fn run_barrier(spec: &RunSpec) -> Result<Dispatched> {
    let input: BoxInput = read_json(&input_path(spec, ".json")?)?;
    let n = input.c.len();
    let vec_or = |v: Option<Vec<f64>>, fill: f64| -> Result<Vector> {
        match v {
            Some(v) if v.len() == n => Ok(Vector::from_vec(v)),
            Some(_) => Err(Error::InvalidArgument("box vectors must match c in length".into())),
            None => Ok(Vector::from_element(n, fill)),
        }
    };
    let lower = vec_or(input.lower, 0.0)?;
    let upper = vec_or(input.upper, 1.0)?;
    let barrier = BoxBarrier::with_scale(lower, upper, input.scale.unwrap_or(1.0))?;
    let y0 = match input.y0 {
        Some(y) => vec_or(Some(y), 0.0)?,
        None => barrier.center(),
    };
    let problem = BarrierProblem::new(Vector::from_vec(input.c), barrier)?;
    let cfg = ipm_config(spec)?;
    let sol = solve_from_interior(&problem, &y0, &cfg)?;
    let mut j = JsonObject::new();
    j.str("command", "solve-barrier");
    j.vec("y", sol.y.as_slice());
    j.num("objective", sol.objective);
    j.num("mu_final", sol.mu_final);
    j.int("iterations", sol.state.outer_iterations as u64);
    j.int("inner_iterations", sol.state.inner_iterations as u64);
    j.int("updates", sol.state.updates as u64);
    j.int("gradient_queries", sol.state.gradient_queries);
    Ok((j.finish(), sol.state.trace, EXIT_OK))
}

fn run_sdp(spec: &RunSpec) -> Result<Dispatched> {
    let problem = parse_sdpa(&input_path(spec, ".dat-s")?)?;
    let cfg = ipm_config(spec)?;
    let eps = spec.eps.unwrap_or(cfg.eps);
    let sol = solve_sdp(&problem, eps, &cfg)?;
    let mut j = JsonObject::new();
    j.str("command", "solve-sdp");
    j.vec("y", sol.y.as_slice());
    j.num("objective", sol.objective);
    j.num("mu_final", sol.mu_final);
    j.int("iterations", sol.iterations as u64);
    j.int("gradient_queries", sol.gradient_queries);
    j.vec("slack", sol.slack.as_matrix().transpose().as_slice());
    Ok((j.finish(), sol.trace, EXIT_OK))
}

fn run_verify(spec: &RunSpec) -> Result<Dispatched> {
    let reports = verify::run_all(spec.seed);
    let passed = reports.iter().all(|r| r.passed());
    let mut body = String::from("[");
    for (i, r) in reports.iter().enumerate() {
        if i > 0 {
            body.push(',');
        }
        let mut j = JsonObject::new();
        j.str("name", r.name);
        j.int("cases", r.cases as u64);
        j.int("failures", r.failures as u64);
        j.bool("passed", r.passed());
        body.push_str(&j.finish());
    }
    body.push(']');
    let mut j = JsonObject::new();
    j.str("command", "verify");
    j.int("seed", spec.seed);
    j.bool("passed", passed);
    j.raw("suites", &body);
    Ok((j.finish(), Vec::new(), if passed { EXIT_OK } else { EXIT_SOLVER }))
}

/// Minimal JSON object writer with 17-significant-digit floats.
struct JsonObject {
    buf: String,
}

impl JsonObject {
    fn new() -> Self {
        JsonObject { buf: String::from("{") }
    }

    fn key(&mut self, k: &str) {
        if self.buf.len() > 1 {
            self.buf.push(',');
        }
        self.buf.push_str(&serde_json::to_string(k).expect("strings serialize"));
        self.buf.push(':');
    }

    fn num(&mut self, k: &str, v: f64) {
        self.key(k);
        self.buf.push_str(&format_f64(v));
    }

    fn int(&mut self, k: &str, v: u64) {
        self.key(k);
        let _ = write!(self.buf, "{v}");
    }

    fn bool(&mut self, k: &str, v: bool) {
        self.key(k);
        self.buf.push_str(if v { "true" } else { "false" });
    }

    fn str(&mut self, k: &str, v: &str) {
        self.key(k);
        self.buf.push_str(&serde_json::to_string(v).expect("strings serialize"));
    }

    fn vec(&mut self, k: &str, v: &[f64]) {
        self.key(k);
        self.buf.push('[');
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            self.buf.push_str(&format_f64(*x));
        }
        self.buf.push(']');
    }

    fn raw(&mut self, k: &str, json: &str) {
        self.key(k);
        self.buf.push_str(json);
    }

    fn finish(mut self) -> String {
        self.buf.push('}');
        self.buf
    }
}

/// 17 significant digits, which round-trips every `f64`; non-finite values become `null`.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

/// Reads an SDPA sparse file: `matno 0` is `B`, `matno k` is `A_k`.
pub fn parse_sdpa(path: &Path) -> Result<SdpProblem> {
    parse_sdpa_str(&fs::read_to_string(path)?)
}

pub fn parse_sdpa_str(text: &str) -> Result<SdpProblem> {
    // Comment lines (leading `"` or `*`) may precede the data.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .skip_while(|(_, l)| l.trim_start().starts_with('"') || l.trim_start().starts_with('*'))
        .filter(|(_, l)| !l.trim().is_empty());
    let tokens = |l: &str| -> Vec<String> {
        l.replace([',', '{', '}', '(', ')'], " ")
            .split_whitespace()
            .map(str::to_owned)
            .collect()
    };
    let mut next_line = |what: &str| -> Result<(usize, Vec<String>)> {
        lines
            .next()
            .map(|(n, l)| (n, tokens(l)))
            .ok_or_else(|| Error::Parse {
                line: text.lines().count().max(1),
                message: format!("missing {what}"),
            })
    };
    let parse_err = |line: usize, message: String| Error::Parse { line, message };

    let (ln, t) = next_line("constraint count")?;
    let m: usize = t
        .first()
        .and_then(|s| s.parse().ok())
        .filter(|&m| m > 0)
        .ok_or_else(|| parse_err(ln, "expected the number of constraint matrices".into()))?;
    let (ln, t) = next_line("block count")?;
    let nblocks: usize = t
        .first()
        .and_then(|s| s.parse().ok())
        .filter(|&b| b > 0)
        .ok_or_else(|| parse_err(ln, "expected the number of blocks".into()))?;

    // Block sizes may span lines; negative sizes mark diagonal blocks.
    let mut sizes = Vec::new();
    while sizes.len() < nblocks {
        let (ln, t) = next_line("block sizes")?;
        for s in t {
            let k: i64 = s
                .parse()
                .map_err(|_| parse_err(ln, format!("bad block size {s:?}")))?;
            if k == 0 {
                return Err(parse_err(ln, "block size 0".into()));
            }
            sizes.push(k.unsigned_abs() as usize);
        }
    }
    if sizes.len() != nblocks {
        return Err(Error::Parse {
            line: 3,
            message: format!("expected {nblocks} block sizes, found {}", sizes.len()),
        });
    }
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let n: usize = sizes.iter().sum();

    let mut c = Vec::new();
    while c.len() < m {
        let (ln, t) = next_line("objective vector")?;
        for s in t {
            c.push(
                s.parse::<f64>()
                    .map_err(|_| parse_err(ln, format!("bad objective entry {s:?}")))?,
            );
        }
    }
    if c.len() != m {
        return Err(Error::Parse {
            line: 4,
            message: format!("expected {m} objective entries, found {}", c.len()),
        });
    }

    let mut mats = vec![nalgebra::DMatrix::<f64>::zeros(n, n); m + 1];
    for (ln, l) in lines {
        let t = tokens(l);
        if t.len() != 5 {
            return Err(parse_err(ln, format!("expected 5 fields, found {}", t.len())));
        }
        let int = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| parse_err(ln, format!("bad {what} {s:?}")))
        };
        let mat = int(&t[0], "matrix number")?;
        let blk = int(&t[1], "block number")?;
        let i = int(&t[2], "row")?;
        let j = int(&t[3], "column")?;
        let val: f64 = t[4]
            .parse()
            .map_err(|_| parse_err(ln, format!("bad value {:?}", t[4])))?;
        if mat > m {
            return Err(parse_err(ln, format!("matrix number {mat} > {m}")));
        }
        if blk == 0 || blk > nblocks {
            return Err(parse_err(ln, format!("block number {blk} out of range")));
        }
        let size = sizes[blk - 1];
        if i == 0 || j == 0 || i > size || j > size {
            return Err(parse_err(ln, format!("index ({i}, {j}) outside block of size {size}")));
        }
        if i > j {
            return Err(Error::NonSymmetricEntry { line: ln });
        }
        let (r, s) = (offsets[blk - 1] + i - 1, offsets[blk - 1] + j - 1);
        mats[mat][(r, s)] = val;
        mats[mat][(s, r)] = val;
    }
    let mut mats = mats.into_iter().map(SymMatrix::symmetrize);
    let b = mats.next().expect("m + 1 matrices");
    SdpProblem::new(Vector::from_vec(c), mats.collect(), b)
}

/// Writes a problem in SDPA sparse format as a single block.
pub fn write_sdpa(p: &SdpProblem) -> String {
    let n = p.n();
    let mut s = String::new();
    let _ = writeln!(s, "{}", p.m());
    let _ = writeln!(s, "1");
    let _ = writeln!(s, "{n}");
    let c: Vec<String> = p.c.iter().map(|x| format!("{x:?}")).collect();
    let _ = writeln!(s, "{}", c.join(" "));
    for (k, mat) in std::iter::once(&p.b).chain(p.a.iter()).enumerate() {
        let m = mat.as_matrix();
        for i in 0..n {
            for j in i..n {
                if m[(i, j)] != 0.0 {
                    let _ = writeln!(s, "{k} 1 {} {} {:?}", i + 1, j + 1, m[(i, j)]);
                }
            }
        }
    }
    s
}

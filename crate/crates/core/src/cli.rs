//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid certificate or failed selftest, 2
//! malformed input. Diagnostics go to standard error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::geometry::{sample_set, Point};
use crate::mdmvt::{choose_params, run, verify_certificate, Certificate, ProblemSpec, RunOptions, VerifyReport};
use crate::supconv::{write_samples_csv, SupConvSpec};
use crate::tent::{psi, TentSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;

/// Problems run by `selftest`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("canonical_1d", include_str!("../problems/canonical_1d.json")),
    ("smooth_convex", include_str!("../problems/smooth_convex.json")),
    ("max_affine", include_str!("../problems/max_affine.json")),
    ("smooth_nonconvex", include_str!("../problems/smooth_nonconvex.json")),
    ("restricted_quadratic", include_str!("../problems/restricted_quadratic.json")),
    ("linear_2d", include_str!("../problems/linear_2d.json")),
];

#[derive(Debug, Parser)]
#[command(name = "mvi", version, about = "Certificates for the multidirectional mean value inequality")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Tolerance for the Ekeland variational check.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Grid resolution per axis.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated decreasing epsilon schedule.
    #[arg(long, global = true, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline, verify, and write the certificate JSON.
    Certificate {
        spec: PathBuf,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump psi on a grid over [A,B].
    EvalPsi(EvalArgs),
    /// Dump phi_K and psi on a grid over C.
    EvalPhi(EvalArgs),
    /// Run the bundled problems and invariant checks.
    Selftest,
    /// Recheck a certificate against its problem.
    Verify { certificate: PathBuf, spec: PathBuf },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub spec: PathBuf,
    /// Points per axis.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn malformed(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_MALFORMED, msg: msg.into() }
    }
    fn invalid(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_INVALID, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::InconsistentProblem(_) | Error::OutsideDomain => {
                Failure::malformed(e.to_string())
            }
            other => Failure::invalid(other.to_string()),
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_MALFORMED } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, Failure> {
    let ov = &cli.overrides;
    match &cli.command {
        Command::Certificate { spec, out } => {
            let ps = load_spec(spec, ov)?;
            let cert = run(&ps, &run_options(ov))?;
            let report = verify_certificate(&cert, &ps);
            let text = serde_json::to_string_pretty(&cert).map_err(|e| Failure::invalid(e.to_string()))? + "\n";
            write_output(out.as_deref(), text.as_bytes())?;
            print_report(&report);
            Ok(if report.valid { EXIT_OK } else { EXIT_INVALID })
        }
        Command::EvalPsi(args) => {
            let ps = load_spec(&args.spec, ov)?;
            let sc = eval_supconv(&ps)?;
            let pts = sample_set(&ps.a, &ps.b, 0.0, grid_res(args.grid)?)?;
            let mut buf = Vec::new();
            write_psi_csv(&mut buf, &sc.tent, &pts)?;
            write_output(args.out.as_deref(), &buf)?;
            Ok(EXIT_OK)
        }
        Command::EvalPhi(args) => {
            let ps = load_spec(&args.spec, ov)?;
            let sc = eval_supconv(&ps)?;
            let pts = sample_set(&ps.a, &ps.b, ps.delta, grid_res(args.grid)?)?;
            let mut buf = Vec::new();
            write_samples_csv(&mut buf, &sc, &pts)?;
            write_output(args.out.as_deref(), &buf)?;
            Ok(EXIT_OK)
        }
        Command::Selftest => Ok(if selftest(ov) { EXIT_OK } else { EXIT_INVALID }),
        Command::Verify { certificate, spec } => {
            let ps = load_spec(spec, ov)?;
            let cert: Certificate = serde_json::from_str(&read(certificate)?)
                .map_err(|e| Failure::malformed(format!("{}: {e}", certificate.display())))?;
            let report = verify_certificate(&cert, &ps);
            print_report(&report);
            Ok(if report.valid { EXIT_OK } else { EXIT_INVALID })
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::malformed(format!("{}: {e}", path.display())))
}

fn load_spec(path: &Path, ov: &Overrides) -> Result<ProblemSpec, Failure> {
    let mut ps = parse_spec(&read(path)?).map_err(|e| Failure::malformed(format!("{}: {e}", path.display())))?;
    apply_overrides(&mut ps, ov);
    ps.validate()?;
    Ok(ps)
}

fn parse_spec(text: &str) -> Result<ProblemSpec, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

fn apply_overrides(ps: &mut ProblemSpec, ov: &Overrides) {
    if let Some(r) = ov.resolution {
        ps.resolution = r;
    }
    if let Some(s) = ov.seed {
        ps.seed = s;
    }
    if let Some(s) = &ov.schedule {
        ps.schedule = Some(s.clone());
    }
}

fn run_options(ov: &Overrides) -> RunOptions {
    let mut o = RunOptions::default();
    if let Some(t) = ov.tol {
        o.tol_evp = t;
    }
    o
}

fn grid_res(r: usize) -> Result<usize, Failure> {
    if r < 2 {
        return Err(Failure::malformed("--grid must be >= 2"));
    }
    Ok(r)
}

/// The tent of the `tent` override if present, else the pipeline's.
fn eval_supconv(ps: &ProblemSpec) -> Result<SupConvSpec, Failure> {
    let (r, s, k) = match &ps.tent {
        Some(t) => (t.r, t.s, t.k),
        None => {
            let p = choose_params(ps)?;
            (p.r, p.s1, p.k)
        }
    };
    Ok(SupConvSpec::new(TentSpec::new(ps.a.clone(), ps.b.clone(), r, s)?, k)?)
}

fn write_psi_csv<W: Write>(mut out: W, t: &TentSpec, points: &[Point]) -> Result<(), Failure> {
    let io = |e: io::Error| Failure::invalid(format!("write failed: {e}"));
    let header: Vec<String> = (0..t.dim()).map(|i| format!("x{i}")).chain(["psi".to_string()]).collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for x in points {
        let mut cols: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        cols.push(psi(x, t)?.to_string());
        writeln!(out, "{}", cols.join(",")).map_err(io)?;
    }
    Ok(())
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::invalid(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(bytes).map_err(|e| Failure::invalid(e.to_string())),
    }
}

fn print_report(report: &VerifyReport) {
    for c in &report.checks {
        eprintln!("{:<12} {}  {}", c.name, if c.ok { "ok  " } else { "FAIL" }, c.detail);
    }
    eprintln!("certificate {}", if report.valid { "valid" } else { "INVALID" });
}

/// Runs every bundled problem through the pipeline and the verifier, plus
/// tamper and determinism checks. Prints one line per check to stderr.
pub fn selftest(ov: &Overrides) -> bool {
    let mut all = true;
    let mut line = |name: &str, ok: bool, detail: String| {
        eprintln!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        all &= ok;
    };
    for (name, text) in BUNDLED {
        let mut ps = match parse_spec(text) {
            Ok(ps) => ps,
            Err(e) => {
                line(name, false, format!("bundled spec does not parse: {e}"));
                continue;
            }
        };
        apply_overrides(&mut ps, ov);
        let opts = run_options(ov);
        let cert = match run(&ps, &opts) {
            Ok(c) => c,
            Err(e) => {
                line(name, false, e.to_string());
                continue;
            }
        };
        let report = verify_certificate(&cert, &ps);
        let slacks = [cert.eq3.slack, cert.eq4.slack, cert.eq5.slack];
        line(
            name,
            report.valid && slacks.iter().all(|s| *s > 0.0),
            format!("xi = {:?}, p = {:?}, slacks {:.4} / {:.4} / {:.4}", cert.xi.0, cert.p.0, slacks[0], slacks[1], slacks[2]),
        );
        let mut tampered = cert.clone();
        tampered.p = tampered.p.add(&vec![1.0; tampered.p.dim()]);
        line(&format!("{name}/tamper"), !verify_certificate(&tampered, &ps).valid, "shifted p is rejected".into());
        if *name == "canonical_1d" {
            let again = run(&ps, &opts).ok();
            line(&format!("{name}/determinism"), again.as_ref() == Some(&cert), "repeat run is identical".into());
        }
    }
    all
}

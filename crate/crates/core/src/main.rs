use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use qkzlab::combinatorics::{enumerate_z, lambda_invariants, JTuple, NuVector};
use qkzlab::contours::{build_contour, polyline, validate_contour, Side};
use qkzlab::harness::{default_beta, default_mu, run_suite, ExperimentConfig, DEFAULT_LAMBDA, DEFAULT_RHO};
use qkzlab::integration::{pairing, pairing_matrix, QuadratureConfig};
use qkzlab::qkz_operators::{det_k_closed, k_operator, Params, Step};
use qkzlab::scalar::{cx, rel_err, Cx};
use qkzlab::special_functions::{s2_table, Periods};
use qkzlab::weights::{PermTuple, TermFactors};
use qkzlab::{QkzError, Result};

#[derive(Parser)]
#[command(name = "qkzlab", version, about = "Numerical checks for qKZ hypergeometric solutions at |q| = 1")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites listed in a TOML config and write JSON + CSV reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report prefix; overrides `run.output`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// One pairing entry, or the full matrix when --j/--jp are omitted.
    Pair {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, value_delimiter = ',')]
        j: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        jp: Option<Vec<usize>>,
        #[arg(long, default_value_t = 1e-8)]
        rel_tol: f64,
    },
    /// Direct and closed-form determinant of K_m.
    Detk {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        m: usize,
        #[arg(long, value_enum, default_value = "rho")]
        step: StepArg,
    },
    /// The index set Z_ν with its invariants.
    Enumerate {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        sites: usize,
        #[arg(long, value_delimiter = ',')]
        nu: Option<Vec<usize>>,
    },
    /// CSV table of S₂ on a rectangular grid.
    S2Table {
        #[arg(long, default_value_t = DEFAULT_RHO)]
        rho: f64,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        re_min: f64,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        re_max: f64,
        #[arg(long, default_value_t = 26)]
        re_steps: usize,
        #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
        im_min: f64,
        #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
        im_max: f64,
        #[arg(long, default_value_t = 7)]
        im_steps: usize,
    },
    /// Integration contour of one variable as polylines.
    ContourDump {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, value_delimiter = ',')]
        j: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        jp: Vec<usize>,
        /// Variable index in integration order, outermost is 0.
        #[arg(long, default_value_t = 0)]
        var: usize,
        /// Values of the outer variables as re:im pairs.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        outer: Vec<String>,
        #[arg(long, default_value_t = 64)]
        points_per_loop: usize,
    },
}

#[derive(Args)]
struct Problem {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    sites: usize,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// ν_1..ν_{n−1}; defaults to (1, 0, …).
    #[arg(long, value_delimiter = ',')]
    nu: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mu: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepArg {
    Rho,
    Lambda,
}

fn nu_vector(n: usize, sites: usize, tail: Option<Vec<usize>>) -> Result<NuVector> {
    let tail = tail.unwrap_or_else(|| {
        let mut t = vec![0; n.saturating_sub(1).max(1)];
        t[0] = 1;
        t
    });
    if tail.len() + 1 != n {
        return Err(QkzError::Config(format!("--nu needs {} values for n = {n}", n - 1)));
    }
    NuVector::new(sites, &tail)
}

impl Problem {
    fn build(&self) -> Result<(Params<f64>, NuVector)> {
        let mu = self.mu.clone().unwrap_or_else(|| default_mu(self.n, self.rho, self.lambda));
        let beta = self.beta.clone().unwrap_or_else(|| default_beta(self.sites));
        let params = Params::new(self.n, self.sites, self.rho, self.lambda, mu, beta)?;
        let nu = nu_vector(self.n, self.sites, self.nu.clone())?;
        Ok((params, nu))
    }
}

fn jtuple(entries: &[usize], n: usize) -> Result<JTuple> {
    JTuple::new(entries.to_vec(), n)
}

fn c(z: Cx<f64>) -> Value {
    json!([z.re, z.im])
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, output } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let report = run_suite(&cfg)?;
            if let Some(prefix) = output.or(cfg.output_path.clone()) {
                let (j, c) = report.write(&prefix)?;
                eprintln!("wrote {} and {}", j.display(), c.display());
            } else {
                println!("{}", report.to_json());
            }
            for r in &report.records {
                eprintln!(
                    "{} {:<20} {:<60} rel_err={:.3e} tol={:.1e}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.suite.name(),
                    r.name,
                    r.rel_err,
                    r.tolerance
                );
            }
            Ok(report.passed())
        }
        Command::Pair { problem, j, jp, rel_tol } => {
            let (params, nu) = problem.build()?;
            let cfg = QuadratureConfig::standard().with_rel_tol(rel_tol);
            let start = Instant::now();
            match (j, jp) {
                (Some(j), Some(jp)) => {
                    let (a, b) = (jtuple(&j, params.n)?, jtuple(&jp, params.n)?);
                    let e = pairing(&a, &b, &params, &cfg)?;
                    print(&json!({
                        "J": e.j, "J'": e.jp,
                        "value_re": e.value.re, "value_im": e.value.im,
                        "err": e.err, "terms": e.terms,
                        "wall_time": start.elapsed().as_secs_f64(),
                    }));
                }
                (None, None) => {
                    let m = pairing_matrix(&params, &nu, &cfg)?;
                    let entries: Vec<Value> = m
                        .entries
                        .iter()
                        .map(|e| {
                            json!({
                                "J": e.j, "J'": e.jp,
                                "value_re": e.value.re, "value_im": e.value.im,
                                "err": e.err, "terms": e.terms,
                            })
                        })
                        .collect();
                    print(&json!({
                        "entries": entries,
                        "det": c(m.det()),
                        "det_rel_error": m.det_rel_error(),
                        "wall_time": start.elapsed().as_secs_f64(),
                    }));
                }
                _ => return Err(QkzError::Config("--j and --jp go together".into())),
            }
            Ok(true)
        }
        Command::Detk { problem, m, step } => {
            let (params, nu) = problem.build()?;
            let step = match step {
                StepArg::Rho => Step::Rho,
                StepArg::Lambda => Step::Lambda,
            };
            let direct = k_operator(m, &params, &nu, step)?.det();
            let closed = det_k_closed(m, &params, &nu, step)?;
            let err = rel_err(direct, closed);
            print(&json!({
                "m": m, "det_direct": c(direct), "det_closed": c(closed), "rel_err": err,
            }));
            Ok(err <= 1e-11)
        }
        Command::Enumerate { n, sites, nu } => {
            let nu = nu_vector(n, sites, nu)?;
            let z = enumerate_z(&nu);
            let rows: Vec<Value> = z
                .iter()
                .enumerate()
                .map(|(i, jt)| {
                    let levels: Vec<Vec<usize>> = (0..n).map(|j| jt.level_sites(j).to_vec()).collect();
                    json!({ "index": i, "J": jt.entries(), "sites_by_level": levels })
                })
                .collect();
            print(&json!({
                "nu": nu.as_slice(),
                "lambda": nu.lambda().lambda,
                "invariants": lambda_invariants(&nu.lambda()),
                "permutations": nu.permutation_count(),
                "Z": rows,
            }));
            Ok(true)
        }
        Command::S2Table { rho, lambda, re_min, re_max, re_steps, im_min, im_max, im_steps } => {
            let p = Periods::new(rho, lambda)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["x_re", "x_im", "s2_re", "s2_im"]).map_err(io)?;
            for (x, v) in s2_table(&p, (re_min, re_max), (im_min, im_max), (re_steps, im_steps)) {
                let v = v.unwrap_or(cx(f64::NAN, f64::NAN));
                w.serialize((x.re, x.im, v.re, v.im)).map_err(io)?;
            }
            w.flush().map_err(io)?;
            Ok(true)
        }
        Command::ContourDump { problem, j, jp, var, outer, points_per_loop } => {
            let (params, _) = problem.build()?;
            let (a, b) = (jtuple(&j, params.n)?, jtuple(&jp, params.n)?);
            let id = PermTuple::identity(&a.nu());
            let tf = TermFactors::new(&a, &b, &id, &id, &params)?;
            if var >= tf.dim() {
                return Err(QkzError::Config(format!("--var must be below {}", tf.dim())));
            }
            let outer = parse_points(&outer)?;
            if outer.len() != var {
                return Err(QkzError::Config(format!("--outer needs {var} values")));
            }
            let poles = tf.pole_candidates(var, &outer);
            let ccfg = QuadratureConfig::standard().contour(&params);
            let path = build_contour(&poles, &ccfg)?;
            let check = validate_contour(&path, &poles, ccfg.delta * 0.5);
            let pole_rows: Vec<Value> = poles
                .iter()
                .map(|p| {
                    json!({
                        "position": c(p.position),
                        "side": if p.side == Side::Above { "above" } else { "below" },
                        "active": p.active,
                    })
                })
                .collect();
            print(&json!({
                "variable": var,
                "level": tf.level_of(var),
                "path": path,
                "poles": pole_rows,
                "check": check,
                "polylines": polyline(&path, points_per_loop),
            }));
            Ok(check.valid)
        }
    }
}

fn parse_points(items: &[String]) -> Result<Vec<Cx<f64>>> {
    items
        .iter()
        .map(|s| {
            let (a, b) = s.split_once(':').unwrap_or((s, "0"));
            match (a.trim().parse(), b.trim().parse()) {
                (Ok(x), Ok(y)) => Ok(cx(x, y)),
                _ => Err(QkzError::Config(format!("cannot parse point `{s}`"))),
            }
        })
        .collect()
}

fn io(e: impl std::fmt::Display) -> QkzError {
    QkzError::Config(format!("output error: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

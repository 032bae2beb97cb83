//! Experiment configuration, the verification suites and report output.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{
    all_nu, enumerate_z, log_p_j_factor, mult_table, partial_order_leq, JTuple, LambdaWeights, NuVector,
};
use crate::error::{QkzError, Result};
use crate::integration::{h_numeric, integrate_term, pairing_matrix, QuadratureConfig, TermResult};
use crate::qkz_operators::{
    det_k_closed, k_operator, log_c_constant, log_diagonal_limit, log_e_function, log_rhs_theorem, Params, Step,
};
use crate::scalar::{cx, im, log_rel_err, re, rel_err, Cx};
use crate::special_functions::{DoubleSine, Periods};
use crate::weights::{exchange_check, perm_tuples, GammaAssignment, PermTuple};

pub const DEFAULT_RHO: f64 = 7.3;
pub const DEFAULT_LAMBDA: f64 = 9.4;
pub const MAX_PERMUTATIONS: u64 = 10_000;

/// μ_j = 0.45·j·(ρ+λ): equal gaps satisfy the convergence window, and for
/// n = 3 μ₃−μ₁ stays off the pole of S₂ at ρ+λ.
pub fn default_mu(n: usize, rho: f64, lambda: f64) -> Vec<f64> {
    (0..n).map(|j| 0.45 * j as f64 * (rho + lambda)).collect()
}

pub fn default_beta(sites: usize) -> Vec<f64> {
    (0..sites).map(|r| r as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    S2Properties,
    HIdentity,
    DetkOracle,
    Exchange,
    EDifference,
    RhsConsistency,
    MultOracle,
    Asymptotics,
    Theorem61,
    ContourRobustness,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::S2Properties,
        Suite::HIdentity,
        Suite::DetkOracle,
        Suite::Exchange,
        Suite::EDifference,
        Suite::RhsConsistency,
        Suite::MultOracle,
        Suite::Asymptotics,
        Suite::Theorem61,
        Suite::ContourRobustness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::S2Properties => "s2-properties",
            Suite::HIdentity => "h-identity",
            Suite::DetkOracle => "detk-oracle",
            Suite::Exchange => "exchange",
            Suite::EDifference => "e-difference",
            Suite::RhsConsistency => "rhs-consistency",
            Suite::MultOracle => "mult-oracle",
            Suite::Asymptotics => "asymptotics",
            Suite::Theorem61 => "theorem61",
            Suite::ContourRobustness => "contour-robustness",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = QkzError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| QkzError::Config(format!("unknown suite `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub params: Params<f64>,
    pub nu: NuVector,
    pub cfg: QuadratureConfig<f64>,
    pub suites: Vec<Suite>,
    pub output_path: Option<PathBuf>,
    pub seed: u64,
    /// Random samples per property in s2-properties.
    pub samples: usize,
    /// Random parameter draws in the closed-form suites.
    pub draws: usize,
    /// β spacings for the asymptotics suite.
    pub spacings: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    params: RawParams,
    #[serde(default)]
    nu: RawNu,
    #[serde(default)]
    quadrature: RawQuadrature,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    n: Option<usize>,
    sites: Option<usize>,
    rho: Option<f64>,
    lambda: Option<f64>,
    mu: Option<Vec<f64>>,
    beta: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNu {
    tail: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    max_depth: Option<usize>,
    truncation_margin: Option<f64>,
    delta_scale: Option<f64>,
    max_truncation: Option<f64>,
    parallel: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    suites: Option<Vec<String>>,
    output: Option<PathBuf>,
    seed: Option<u64>,
    samples: Option<usize>,
    draws: Option<usize>,
    spacings: Option<Vec<f64>>,
}

impl ExperimentConfig {
    /// Defaults: n = N = 2, ν = (2, 1), ρ = 7.3, λ = 9.4, μ from [`default_mu`], β = (0, 1).
    pub fn standard(suites: Vec<Suite>) -> Self {
        let params = Params::new(
            2,
            2,
            DEFAULT_RHO,
            DEFAULT_LAMBDA,
            default_mu(2, DEFAULT_RHO, DEFAULT_LAMBDA),
            default_beta(2),
        )
        .expect("default parameters");
        Self {
            params,
            nu: NuVector::new(2, &[1]).expect("default ν"),
            cfg: QuadratureConfig::standard(),
            suites,
            output_path: None,
            seed: 20240611,
            samples: 100,
            draws: 10,
            spacings: vec![4.0, 8.0, 12.0],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| QkzError::Config(e.to_string()))?;
        let n = raw.params.n.unwrap_or(2);
        let sites = raw.params.sites.unwrap_or(2);
        let rho = raw.params.rho.unwrap_or(DEFAULT_RHO);
        let lambda = raw.params.lambda.unwrap_or(DEFAULT_LAMBDA);
        let mu = raw.params.mu.unwrap_or_else(|| default_mu(n, rho, lambda));
        let beta = raw.params.beta.unwrap_or_else(|| default_beta(sites));
        let params = Params::new(n, sites, rho, lambda, mu, beta).map_err(as_config)?;
        let tail = raw.nu.tail.unwrap_or_else(|| {
            let mut t = vec![0; n - 1];
            t[0] = 1.min(sites);
            t
        });
        let nu = NuVector::new(sites, &tail).map_err(as_config)?;
        let d = QuadratureConfig::standard();
        let q = raw.quadrature;
        let cfg = QuadratureConfig {
            rel_tol: q.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: q.abs_tol.unwrap_or(d.abs_tol),
            max_depth: q.max_depth.unwrap_or(d.max_depth),
            truncation_margin: q.truncation_margin.unwrap_or(d.truncation_margin),
            delta_scale: q.delta_scale.unwrap_or(d.delta_scale),
            max_truncation: q.max_truncation.unwrap_or(d.max_truncation),
            parallel: q.parallel.unwrap_or(d.parallel),
        };
        let suites = raw
            .run
            .suites
            .unwrap_or_else(|| vec!["theorem61".into()])
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<Suite>>>()?;
        let base = Self::standard(suites);
        let out = Self {
            params,
            nu,
            cfg,
            output_path: raw.run.output,
            seed: raw.run.seed.unwrap_or(base.seed),
            samples: raw.run.samples.unwrap_or(base.samples),
            draws: raw.run.draws.unwrap_or(base.draws),
            spacings: raw.run.spacings.unwrap_or(base.spacings.clone()),
            ..base
        };
        out.validate()?;
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| QkzError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.nu.n() != self.params.n || self.nu.sites() != self.params.sites {
            return Err(QkzError::Config(format!(
                "ν = {:?} does not match n = {}, N = {}",
                self.nu.as_slice(),
                self.params.n,
                self.params.sites
            )));
        }
        if self.nu.permutation_count() > MAX_PERMUTATIONS {
            return Err(QkzError::Config(format!(
                "Πν_j! = {} exceeds {MAX_PERMUTATIONS}",
                self.nu.permutation_count()
            )));
        }
        if self.suites.is_empty() {
            return Err(QkzError::Config("no suites requested".into()));
        }
        if self.samples == 0 || self.draws == 0 {
            return Err(QkzError::Config("samples and draws must be positive".into()));
        }
        if self.spacings.len() < 2 || self.spacings.iter().any(|s| !(*s > 0.0)) {
            return Err(QkzError::Config("need at least two positive spacings".into()));
        }
        let needs_window = self
            .suites
            .iter()
            .any(|s| matches!(s, Suite::Asymptotics | Suite::Theorem61 | Suite::ContourRobustness));
        if needs_window {
            self.params.check_window().map_err(as_config)?;
        }
        Ok(())
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            params: self.params.clone(),
            nu: self.nu.as_slice().to_vec(),
            quadrature: self.cfg,
            suites: self.suites.clone(),
            seed: self.seed,
            samples: self.samples,
            draws: self.draws,
            spacings: self.spacings.clone(),
        }
    }
}

fn as_config(e: QkzError) -> QkzError {
    match e {
        QkzError::Config(_) => e,
        other => QkzError::Config(other.to_string()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub params: Params<f64>,
    pub nu: Vec<usize>,
    pub quadrature: QuadratureConfig<f64>,
    pub suites: Vec<Suite>,
    pub seed: u64,
    pub samples: usize,
    pub draws: usize,
    pub spacings: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Environment {
    pub crate_version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub scalar: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: rayon::current_num_threads(),
            scalar: "f64".into(),
        }
    }
}

/// One comparison. For sampled checks lhs/rhs are the worst sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub suite: Suite,
    pub name: String,
    /// Which identities are being compared.
    pub provenance: String,
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub samples: usize,
    pub wall_time_s: f64,
    pub note: String,
}

impl CheckRecord {
    fn new(suite: Suite, name: impl Into<String>, provenance: impl Into<String>, tolerance: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            provenance: provenance.into(),
            lhs: [f64::NAN; 2],
            rhs: [f64::NAN; 2],
            rel_err: 0.0,
            tolerance,
            pass: true,
            samples: 0,
            wall_time_s: 0.0,
            note: String::new(),
        }
    }

    /// Folds one sample into the record, keeping the worst one.
    fn sample(&mut self, lhs: Cx<f64>, rhs: Cx<f64>, err: f64) {
        self.samples += 1;
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if self.samples == 1 || err > self.rel_err {
            self.rel_err = err;
            self.lhs = [lhs.re, lhs.im];
            self.rhs = [rhs.re, rhs.im];
        }
        self.pass = self.rel_err <= self.tolerance;
    }

    /// A sample that could not be evaluated counts as a failure.
    fn failed_sample(&mut self, what: &str, e: &QkzError) {
        self.samples += 1;
        self.rel_err = f64::INFINITY;
        self.pass = false;
        if self.note.is_empty() {
            self.note = format!("{what}: {e}");
        }
    }

    fn timed(mut self, start: Instant) -> Self {
        self.wall_time_s = start.elapsed().as_secs_f64();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem61Outcome {
    pub nu: Vec<usize>,
    pub det: [f64; 2],
    pub det_rel_error: f64,
    pub rhs: [f64; 2],
    /// det / rhs.
    pub ratio: [f64; 2],
    pub rel_err: f64,
    /// (Πν_j!)^{Λ0}, the number of relabelings summed in each entry.
    pub relabel_factor: f64,
    pub rel_err_relabeled: f64,
    pub beta_alt: Vec<f64>,
    pub ratio_of_ratios: [f64; 2],
    pub ratio_of_ratios_err: f64,
    pub mirror_det: [f64; 2],
    pub mirror_abs_err: f64,
    pub evaluations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub environment: Environment,
    pub config: ConfigEcho,
    pub records: Vec<CheckRecord>,
    pub theorem61: Option<Theorem61Outcome>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    /// Hash of everything except wall times; equal for repeated runs of one config.
    pub fn fingerprint(&self) -> u64 {
        let mut stripped = self.clone();
        for r in &mut stripped.records {
            r.wall_time_s = 0.0;
        }
        let text = serde_json::to_string(&(&stripped.config, &stripped.records, &stripped.theorem61))
            .expect("report serializes");
        let mut h = DefaultHasher::new();
        text.hash(&mut h);
        h.finish()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(CsvRow::from(r)).map_err(io_err)?;
        }
        let bytes = w.into_inner().map_err(|e| QkzError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf-8 csv"))
    }

    /// Writes `<prefix>.json` and `<prefix>.csv`.
    pub fn write(&self, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
        let json = prefix.with_extension("json");
        let csv = prefix.with_extension("csv");
        std::fs::write(&json, self.to_json()).map_err(io_err)?;
        std::fs::write(&csv, self.to_csv()?).map_err(io_err)?;
        Ok((json, csv))
    }
}

fn io_err(e: impl fmt::Display) -> QkzError {
    QkzError::Config(format!("cannot write report: {e}"))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    suite: &'static str,
    name: &'a str,
    provenance: &'a str,
    lhs_re: f64,
    lhs_im: f64,
    rhs_re: f64,
    rhs_im: f64,
    rel_err: f64,
    tolerance: f64,
    pass: bool,
    samples: usize,
    wall_time_s: f64,
    note: &'a str,
}

impl<'a> From<&'a CheckRecord> for CsvRow<'a> {
    fn from(r: &'a CheckRecord) -> Self {
        Self {
            suite: r.suite.name(),
            name: &r.name,
            provenance: &r.provenance,
            lhs_re: r.lhs[0],
            lhs_im: r.lhs[1],
            rhs_re: r.rhs[0],
            rhs_im: r.rhs[1],
            rel_err: r.rel_err,
            tolerance: r.tolerance,
            pass: r.pass,
            samples: r.samples,
            wall_time_s: r.wall_time_s,
            note: &r.note,
        }
    }
}

/// Runs every requested suite in order. Numerical failures inside the
/// integral suites abort the run; sampled checks record them instead.
pub fn run_suite(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let mut records = Vec::new();
    let mut theorem61 = None;
    for (i, &suite) in config.suites.iter().enumerate() {
        let seed = config.seed.wrapping_add(i as u64);
        match suite {
            Suite::S2Properties => records.extend(s2_properties(config.samples, seed)),
            Suite::HIdentity => records.extend(h_identity(&config.cfg)),
            Suite::DetkOracle => records.extend(detk_oracle(config.draws, seed)),
            Suite::Exchange => records.extend(exchange(2 * config.draws, seed)),
            Suite::EDifference => records.extend(e_difference(config.draws, seed)),
            Suite::RhsConsistency => records.extend(rhs_consistency(config.draws, seed)),
            Suite::MultOracle => records.extend(mult_oracle()),
            Suite::Asymptotics => {
                records.extend(asymptotics(&config.params, &config.nu, &config.cfg, &config.spacings)?)
            }
            Suite::Theorem61 => {
                let (recs, out) = theorem61_records(&config.params, &config.nu, &config.cfg)?;
                records.extend(recs);
                theorem61 = Some(out);
            }
            Suite::ContourRobustness => {
                records.extend(contour_robustness(&config.params, &config.nu, &config.cfg)?)
            }
        }
    }
    Ok(Report {
        environment: Environment::current(),
        config: config.echo(),
        records,
        theorem61,
    })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_periods(rng: &mut ChaCha8Rng) -> Periods<f64> {
    loop {
        if let Ok(p) = Periods::new(rng.gen_range(4.0..12.0), rng.gen_range(4.0..12.0)) {
            return p;
        }
    }
}

/// Shift relations, symmetry, reflection, normalization, zeros and poles of S₂
/// at random periods in [4, 12]² and random arguments.
pub fn s2_properties(samples: usize, seed: u64) -> Vec<CheckRecord> {
    let mut rng = rng(seed);
    let tol = 1e-10;
    let s = Suite::S2Properties;
    let mut shift1 = CheckRecord::new(s, "shift by ω₁", "S₂(x+ω₁)/S₂(x) = 1/(2 sin(πx/ω₂))", tol);
    let mut shift2 = CheckRecord::new(s, "shift by ω₂", "S₂(x+ω₂)/S₂(x) = 1/(2 sin(πx/ω₁))", tol);
    let mut sym = CheckRecord::new(s, "period symmetry", "S₂(x|ω₁,ω₂) = S₂(x|ω₂,ω₁)", tol);
    let mut refl = CheckRecord::new(s, "reflection", "S₂(x)·S₂(ω₁+ω₂−x) = 1", tol);
    let mut norm = CheckRecord::new(
        s,
        "normalization",
        "S₂(x)/x → 2π/√(ω₁ω₂), symmetric quotient at |x| = 1e-6",
        tol,
    );
    let mut norm1 = CheckRecord::new(s, "normalization (one-sided)", "S₂(x)/x at x = 1e-6", 1e-5);
    let mut zeros = CheckRecord::new(s, "zeros", "S₂(−aω₁−bω₂) = 0, a,b ≥ 0", 0.0);
    let mut poles = CheckRecord::new(s, "poles", "S₂ has poles at (a+1)ω₁+(b+1)ω₂, a,b ≥ 0", 0.0);
    let start = Instant::now();
    for _ in 0..samples {
        let p = random_periods(&mut rng);
        let ds = DoubleSine::new(p);
        let dsw = DoubleSine::new(p.swapped());
        let (w1, w2) = (p.omega1, p.omega2);
        let x = cx(rng.gen_range(-15.0..30.0), rng.gen_range(-12.0..12.0));
        let pi = std::f64::consts::PI;

        let pairs = [(&mut shift1, w1, w2), (&mut shift2, w2, w1)];
        for (rec, a, b) in pairs {
            match (ds.log_s2(x + re(a)), ds.log_s2(x)) {
                (Ok(l1), Ok(l0)) => {
                    let lhs = l1 - l0;
                    let rhs = -(re(2.0) * (x * (pi / b)).sin()).ln();
                    rec.sample(lhs.exp(), rhs.exp(), log_rel_err(lhs, rhs));
                }
                (Err(e), _) | (_, Err(e)) => rec.failed_sample("shift", &e),
            }
        }
        match (ds.log_s2(x), dsw.log_s2(x)) {
            (Ok(a), Ok(b)) => sym.sample(a.exp(), b.exp(), log_rel_err(a, b)),
            (Err(e), _) | (_, Err(e)) => sym.failed_sample("symmetry", &e),
        }
        match (ds.log_s2(x), ds.log_s2(re(p.sum()) - x)) {
            (Ok(a), Ok(b)) => refl.sample((a + b).exp(), re(1.0), log_rel_err(a + b, re(0.0))),
            (Err(e), _) | (_, Err(e)) => refl.failed_sample("reflection", &e),
        }

        let want = re(2.0 * pi / (w1 * w2).sqrt());
        let z = Complex::from_polar(1e-6, rng.gen_range(0.0..2.0 * pi));
        match (ds.s2(z), ds.s2(-z)) {
            (Ok(a), Ok(b)) => {
                let q = (a / z + b / (-z)) * 0.5;
                norm.sample(q, want, rel_err(q, want));
                let q1 = ds.s2(re(1e-6)).map(|v| v / re(1e-6)).unwrap_or(re(f64::NAN));
                norm1.sample(q1, want, rel_err(q1, want));
            }
            (Err(e), _) | (_, Err(e)) => norm.failed_sample("normalization", &e),
        }

        let (a, b) = (rng.gen_range(0..5) as f64, rng.gen_range(0..5) as f64);
        let zero = re(-a * w1 - b * w2);
        match (ds.s2(zero), ds.log_s2(zero)) {
            (Ok(v), Err(QkzError::ZeroProximity { .. })) => {
                zeros.sample(v, re(0.0), if v == re(0.0) { 0.0 } else { f64::INFINITY })
            }
            (Ok(v), _) => zeros.sample(v, re(0.0), f64::INFINITY),
            (Err(e), _) => zeros.failed_sample("zero", &e),
        }
        let pole = re((a + 1.0) * w1 + (b + 1.0) * w2);
        match ds.s2(pole) {
            Err(QkzError::PoleProximity { .. }) => poles.sample(re(f64::INFINITY), re(f64::INFINITY), 0.0),
            Ok(v) => poles.sample(v, re(f64::INFINITY), f64::INFINITY),
            Err(e) => poles.failed_sample("pole", &e),
        }
    }
    [shift1, shift2, sym, refl, norm, norm1, zeros, poles].into_iter().map(|r| r.timed(start)).collect()
}

/// Period pairs for the one-point check. 8.1/11.7 is exactly 9/13, so the
/// second pair moves λ to 11.71 to pass the rational-ratio guard.
pub const H_PERIODS: [(f64, f64); 2] = [(7.3, 9.4), (8.1, 11.71)];

/// Numerical one-point integral against its closed form on a 3×3 grid.
pub fn h_identity(cfg: &QuadratureConfig<f64>) -> Vec<CheckRecord> {
    let cfg = cfg.with_rel_tol(cfg.rel_tol.min(1e-10));
    let mut out = Vec::new();
    for (rho, lambda) in H_PERIODS {
        for n in [2usize, 3] {
            let start = Instant::now();
            let mut rec = CheckRecord::new(
                Suite::HIdentity,
                format!("n={n}, (ρ,λ)=({rho},{lambda})"),
                "∫ e^{xγ}φ(γ)ψ(γ)dγ = closed form in S₂",
                1e-8,
            );
            let params = match Params::new(n, 1, rho, lambda, default_mu(n, rho, lambda), vec![0.0]) {
                Ok(p) => p,
                Err(e) => {
                    rec.failed_sample("params", &e);
                    out.push(rec);
                    continue;
                }
            };
            let ds = params.double_sine();
            for xr in [-5.0, 0.5, 5.0] {
                for xi in [-1.5, 0.0, 1.5] {
                    let x = cx(xr, xi);
                    match (h_numeric(x, &params, &cfg), ds.h_closed(x, n)) {
                        (Ok(a), Ok(b)) => rec.sample(a.value, b, rel_err(a.value, b)),
                        (Err(e), _) | (_, Err(e)) => rec.failed_sample(&format!("x={x}"), &e),
                    }
                }
            }
            out.push(rec.timed(start));
        }
    }
    out
}

fn random_params(rng: &mut ChaCha8Rng, n: usize, sites: usize) -> Params<f64> {
    let mu = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let beta = (0..sites).map(|_| rng.gen_range(-3.0..3.0)).collect();
    Params::new(n, sites, DEFAULT_RHO, DEFAULT_LAMBDA, mu, beta).expect("valid random parameters")
}

/// Direct determinant of K_m on each weight space against its closed form.
pub fn detk_oracle(draws: usize, seed: u64) -> Vec<CheckRecord> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for (n, sites) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
        let start = Instant::now();
        let mut rec = CheckRecord::new(
            Suite::DetkOracle,
            format!("n={n}, N={sites}"),
            "det of the assembled K_m = closed-form product of sinh ratios",
            1e-11,
        );
        for _ in 0..draws {
            let params = random_params(&mut rng, n, sites);
            for nu in all_nu(n, sites) {
                for m in 1..=sites {
                    for step in [Step::Rho, Step::Lambda] {
                        match (k_operator(m, &params, &nu, step), det_k_closed(m, &params, &nu, step)) {
                            (Ok(k), Ok(c)) => {
                                let d = k.det();
                                rec.sample(d, c, rel_err(d, c));
                            }
                            (Err(e), _) | (_, Err(e)) => rec.failed_sample("det K", &e),
                        }
                    }
                }
            }
        }
        out.push(rec.timed(start));
    }
    out
}

/// Exchange relation of the weight functions under adjacent swaps.
pub fn exchange(draws: usize, seed: u64) -> Vec<CheckRecord> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for (n, sites) in [(2, 2), (2, 3), (3, 2)] {
        let start = Instant::now();
        let mut rec = CheckRecord::new(
            Suite::Exchange,
            format!("n={n}, N={sites}"),
            "w with swapped (J_k,β_k) = Σ R(β_k−β_{k+1}) w",
            1e-9,
        );
        for _ in 0..draws {
            let params = random_params(&mut rng, n, sites);
            for nu in all_nu(n, sites) {
                let flat: Vec<Cx<f64>> = (0..nu.dimension())
                    .map(|_| cx(rng.gen_range(-2.0..2.0), rng.gen_range(-0.5..0.5)))
                    .collect();
                let g = match GammaAssignment::from_flat(&nu, &flat, &params.beta) {
                    Ok(g) => g,
                    Err(e) => {
                        rec.failed_sample("γ", &e);
                        continue;
                    }
                };
                for jt in enumerate_z(&nu) {
                    for k in 1..sites {
                        for step in [Step::Rho, Step::Lambda] {
                            match exchange_check(&jt, k, &g, step, &params) {
                                Ok(r) => rec.sample(re(r), re(0.0), r),
                                Err(e) => rec.failed_sample("exchange", &e),
                            }
                        }
                    }
                }
            }
        }
        out.push(rec.timed(start));
    }
    out
}

/// E(…β_m−λi…)/E(β) = det K_m^{(ρ)} and E(…β_m−ρi…)/E(β) = det K_m^{(λ)}.
pub fn e_difference(draws: usize, seed: u64) -> Vec<CheckRecord> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for (step, shifted) in [(Step::Rho, "λ"), (Step::Lambda, "ρ")] {
        let start = Instant::now();
        let mut rec = CheckRecord::new(
            Suite::EDifference,
            format!("shift β_m by −{shifted}i"),
            format!("E(…β_m−{shifted}i…)/E(β) = closed det K_m for step {step:?}"),
            1e-9,
        );
        for (n, sites) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            for _ in 0..draws {
                let params = random_params(&mut rng, n, sites);
                let ds = params.double_sine();
                let base: Vec<Cx<f64>> = params.beta.iter().map(|&b| re(b)).collect();
                let shift = params.step_value(step.other());
                for nu in all_nu(n, sites) {
                    for m in 1..=sites {
                        let mut b2 = base.clone();
                        b2[m - 1] -= im(shift);
                        let l = log_e_function(&params, &nu, &b2, &ds)
                            .and_then(|a| Ok(a - log_e_function(&params, &nu, &base, &ds)?));
                        match (l, det_k_closed(m, &params, &nu, step)) {
                            (Ok(l), Ok(d)) => rec.sample(l.exp(), d, log_rel_err(l, d.ln())),
                            (Err(e), _) | (_, Err(e)) => rec.failed_sample("E ratio", &e),
                        }
                    }
                }
            }
        }
        out.push(rec.timed(start));
    }
    out
}

/// The determinant formula against the product c·E of its factorized form.
pub fn rhs_consistency(draws: usize, seed: u64) -> Vec<CheckRecord> {
    let mut rng = rng(seed);
    let cases: [&[usize]; 6] = [&[1, 1], &[2, 1], &[1, 1, 0], &[1, 0, 1], &[0, 1, 1], &[1, 1, 1]];
    let mut out = Vec::new();
    for lam in cases {
        let start = Instant::now();
        let n = lam.len();
        let sites: usize = lam.iter().sum();
        let mut rec = CheckRecord::new(
            Suite::RhsConsistency,
            format!("λ={lam:?}"),
            "closed-form determinant = c·E(β)",
            1e-9,
        );
        let nu = LambdaWeights::new(lam.to_vec()).and_then(|lw| NuVector::from_lambda(&lw));
        let nu = match nu {
            Ok(nu) => nu,
            Err(e) => {
                rec.failed_sample("λ", &e);
                out.push(rec);
                continue;
            }
        };
        for _ in 0..draws {
            let beta = (0..sites).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut mu = vec![rng.gen_range(-1.0..1.0)];
            for j in 1..n {
                mu.push(mu[j - 1] + rng.gen_range(2.0..6.0));
            }
            let params = Params::new(n, sites, DEFAULT_RHO, DEFAULT_LAMBDA, mu, beta).expect("valid parameters");
            let ds = params.double_sine();
            let bc: Vec<Cx<f64>> = params.beta.iter().map(|&b| re(b)).collect();
            let lhs = log_rhs_theorem(&params, &nu, &ds);
            let rhs = log_c_constant(&params, &nu, &ds)
                .and_then(|c| Ok(c + log_e_function(&params, &nu, &bc, &ds)?));
            match (lhs, rhs) {
                (Ok(a), Ok(b)) => rec.sample(a.exp(), b.exp(), log_rel_err(a, b)),
                (Err(e), _) | (_, Err(e)) => rec.failed_sample("closed forms", &e),
            }
        }
        out.push(rec.timed(start));
    }
    out
}

/// Brute-force multiplicity differences against the three-case closed form.
pub fn mult_oracle() -> Vec<CheckRecord> {
    let mut out = Vec::new();
    for n in 2..=3 {
        for sites in 1..=4 {
            let start = Instant::now();
            let mut rec = CheckRecord::new(
                Suite::MultOracle,
                format!("n={n}, N={sites}"),
                "mult(a)−mult(a+1) by enumeration = closed three-case formula",
                0.0,
            );
            let mut bad = Vec::new();
            for nu in all_nu(n, sites) {
                let lw = nu.lambda();
                for r in 2..=n {
                    for rp in 1..r {
                        match mult_table(rp, r, &lw) {
                            Ok(t) => {
                                let mism = t.differences.values().filter(|(a, b)| a != b).count();
                                if mism > 0 {
                                    bad.push(format!("λ={:?} (r′,r)=({rp},{r})", lw.lambda));
                                }
                                rec.sample(re(mism as f64), re(0.0), mism as f64);
                            }
                            Err(e) => rec.failed_sample("mult", &e),
                        }
                    }
                }
            }
            if !bad.is_empty() {
                rec.note = format!("mismatch at {}", bad.join("; "));
            }
            out.push(rec.timed(start));
        }
    }
    out
}

fn identity_term(jt: &JTuple, jp: &JTuple, params: &Params<f64>, cfg: &QuadratureConfig<f64>) -> Result<TermResult<f64>> {
    let id = PermTuple::identity(&jt.nu());
    integrate_term(jt, jp, &id, &id, params, cfg)
}

/// P_J-scaled identity-permutation terms at spread β: decay for J ≰ J′ and
/// the one-point-function limit on the diagonal.
pub fn asymptotics(
    params: &Params<f64>,
    nu: &NuVector,
    cfg: &QuadratureConfig<f64>,
    spacings: &[f64],
) -> Result<Vec<CheckRecord>> {
    let basis = enumerate_z(nu);
    let ds = params.double_sine();
    let mut out = Vec::new();
    for jt in &basis {
        for jp in &basis {
            let diagonal = jt == jp;
            let below = partial_order_leq(jt, jp)?;
            if !diagonal && below {
                continue;
            }
            let start = Instant::now();
            let mut vals = Vec::new();
            for &s in spacings {
                let beta: Vec<f64> = (0..params.sites).map(|r| s * r as f64).collect();
                let p = params.with_beta(beta);
                let t = identity_term(jt, jp, &p, cfg)?;
                let scale = log_p_j_factor(jt, &p.beta, &p.mu, p.rho, p.lambda).exp();
                vals.push(t.value * scale);
            }
            let label = format!("J={:?}, J′={:?}", jt.entries(), jp.entries());
            let spacing_note = format!(
                "spacings {:?}: |P_J·I_id| = {:?}",
                spacings,
                vals.iter().map(|v| v.norm()).collect::<Vec<_>>()
            );
            let last = *vals.last().expect("spacings non-empty");
            if diagonal {
                let lim = log_diagonal_limit(jt, params, &ds)?;
                let mut rec = CheckRecord::new(
                    Suite::Asymptotics,
                    format!("diagonal {label}"),
                    "P_J·(identity term) → 2^{−d}·phase·Π_r G_{J_r}(μ̃) at the largest spacing",
                    1e-3,
                );
                rec.sample(last, lim.exp(), log_rel_err(last.ln(), lim));
                rec.note = spacing_note;
                out.push(rec.timed(start));
            } else {
                let mut rec = CheckRecord::new(
                    Suite::Asymptotics,
                    format!("off-diagonal {label}"),
                    "P_J·(identity term) decreases monotonically for J ≰ J′; rel_err is the largest successive ratio",
                    1.0 - 1e-12,
                );
                let worst = vals.windows(2).map(|w| w[1].norm() / w[0].norm()).fold(0.0, f64::max);
                rec.sample(last, re(0.0), worst);
                rec.note = spacing_note;
                out.push(rec.timed(start));
            }
        }
    }
    Ok(out)
}

fn pair(z: Cx<f64>) -> [f64; 2] {
    [z.re, z.im]
}

/// Pairing determinant against the closed form, the constancy of det/E
/// across two β vectors and the ρ↔λ mirror.
pub fn compare_theorem61(params: &Params<f64>, nu: &NuVector, cfg: &QuadratureConfig<f64>) -> Result<Theorem61Outcome> {
    let ds = params.double_sine();
    let m1 = pairing_matrix(params, nu, cfg)?;
    let det = m1.det();
    let lrhs = log_rhs_theorem(params, nu, &ds)?;
    let ratio = det / lrhs.exp();
    let rel = log_rel_err(det.ln(), lrhs);
    let lam0 = crate::combinatorics::lambda_invariants(&nu.lambda()).lambda0;
    let relabel = (nu.permutation_count() as f64).powi(lam0 as i32);
    let rel_relabeled = log_rel_err(det.ln(), lrhs + re(relabel.ln()));

    let beta_alt: Vec<f64> = params.beta.iter().map(|b| 1.4 * b + 0.3).collect();
    let p2 = params.with_beta(beta_alt.clone());
    let m2 = pairing_matrix(&p2, nu, cfg)?;
    let b1: Vec<Cx<f64>> = params.beta.iter().map(|&b| re(b)).collect();
    let b2: Vec<Cx<f64>> = beta_alt.iter().map(|&b| re(b)).collect();
    let le1 = log_e_function(params, nu, &b1, &ds)?;
    let le2 = log_e_function(&p2, nu, &b2, &ds)?;
    let lror = (det.ln() - le1) - (m2.det().ln() - le2);
    let ror_err = log_rel_err(lror, re(0.0));

    let mirror = pairing_matrix(&params.swapped_periods(), nu, cfg)?;
    let mdet = mirror.det();
    let mirror_err = (mdet.norm() / det.norm() - 1.0).abs();

    let evaluations = [&m1, &m2, &mirror]
        .iter()
        .flat_map(|m| m.entries.iter())
        .flat_map(|e| e.terms.iter())
        .map(|t| t.evaluations)
        .sum();
    Ok(Theorem61Outcome {
        nu: nu.as_slice().to_vec(),
        det: pair(det),
        det_rel_error: m1.det_rel_error(),
        rhs: pair(lrhs.exp()),
        ratio: pair(ratio),
        rel_err: rel,
        relabel_factor: relabel,
        rel_err_relabeled: rel_relabeled,
        beta_alt,
        ratio_of_ratios: pair(lror.exp()),
        ratio_of_ratios_err: ror_err,
        mirror_det: pair(mdet),
        mirror_abs_err: mirror_err,
        evaluations,
    })
}

fn theorem61_records(
    params: &Params<f64>,
    nu: &NuVector,
    cfg: &QuadratureConfig<f64>,
) -> Result<(Vec<CheckRecord>, Theorem61Outcome)> {
    let start = Instant::now();
    let o = compare_theorem61(params, nu, cfg)?;
    let s = Suite::Theorem61;
    let label = format!("ν={:?}", o.nu);
    let mut main = CheckRecord::new(s, format!("det vs closed form, {label}"), "det I(w_J, w_J′) = closed-form product", 1e-3);
    main.sample(cx(o.det[0], o.det[1]), cx(o.rhs[0], o.rhs[1]), o.rel_err);
    main.note = format!("quadrature det error ≈ {:.2e}", o.det_rel_error);
    let mut relab = CheckRecord::new(
        s,
        format!("det vs (Πν_j!)^Λ0 · closed form, {label}"),
        "each entry sums Πν_j! relabeled copies of every term",
        1e-3,
    );
    let f = o.relabel_factor;
    relab.sample(cx(o.det[0], o.det[1]), cx(o.rhs[0] * f, o.rhs[1] * f), o.rel_err_relabeled);
    relab.note = format!("factor {f}");
    let mut ror = CheckRecord::new(
        s,
        format!("ratio of ratios, {label}"),
        format!("det/E at β={:?} equals det/E at β={:?}", params.beta, o.beta_alt),
        2e-3,
    );
    ror.sample(cx(o.ratio_of_ratios[0], o.ratio_of_ratios[1]), re(1.0), o.ratio_of_ratios_err);
    let mut mirror = CheckRecord::new(s, format!("ρ↔λ mirror, {label}"), "|det| invariant under swapping ρ and λ", 1e-3);
    mirror.sample(cx(o.mirror_det[0], o.mirror_det[1]), cx(o.det[0], o.det[1]), o.mirror_abs_err);
    let recs = [main, relab, ror, mirror].into_iter().map(|r| r.timed(start)).collect();
    Ok((recs, o))
}

/// Every term integral against its values with δ halved and T doubled.
pub fn contour_robustness(params: &Params<f64>, nu: &NuVector, cfg: &QuadratureConfig<f64>) -> Result<Vec<CheckRecord>> {
    params.check_window()?;
    let basis = enumerate_z(nu);
    let perms = perm_tuples(nu)?;
    let variants = [
        ("δ/2", QuadratureConfig { delta_scale: cfg.delta_scale * 0.5, ..*cfg }),
        ("2T", QuadratureConfig { truncation_margin: cfg.truncation_margin * 2.0, ..*cfg }),
    ];
    let mut out = Vec::new();
    for jt in &basis {
        for jp in &basis {
            for s in &perms {
                for sp in &perms {
                    let start = Instant::now();
                    let base = integrate_term(jt, jp, s, sp, params, cfg)?;
                    for (label, alt) in &variants {
                        let t = integrate_term(jt, jp, s, sp, params, alt)?;
                        let mut rec = CheckRecord::new(
                            Suite::ContourRobustness,
                            format!("{label}: J={:?}, J′={:?}, σ={:?}, σ′={:?}", jt.entries(), jp.entries(), s.perms, sp.perms),
                            "term integral unchanged by the contour perturbation; rel_err is |Δ|/(err₀+err₁)",
                            1.0,
                        );
                        let budget = base.err + t.err;
                        let diff = (t.value - base.value).norm();
                        let ratio = if budget > 0.0 { diff / budget } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
                        rec.sample(t.value, base.value, ratio);
                        rec.note = format!("|Δ| = {diff:.3e}, errors {:.3e} + {:.3e}", base.err, t.err);
                        out.push(rec.timed(start));
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_a_config_error() {
        let e = ExperimentConfig::from_toml_str("[run]\nsuites = [\"s2-properties\", \"nope\"]\n").unwrap_err();
        assert!(matches!(e, QkzError::Config(_)));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c.params.n, 2);
        assert!((c.params.mu[1] - 7.515).abs() < 1e-12);
        assert_eq!(c.params.beta, vec![0.0, 1.0]);
        assert_eq!(c.nu.as_slice(), &[2, 1]);
        assert_eq!(c.suites, vec![Suite::Theorem61]);
    }

    #[test]
    fn bad_window_rejected() {
        let text = "[params]\nmu = [5.0, 0.0]\n[run]\nsuites = [\"theorem61\"]\n";
        assert!(matches!(ExperimentConfig::from_toml_str(text), Err(QkzError::Config(_))));
    }

    #[test]
    fn mismatched_nu_rejected() {
        let text = "[params]\nn = 3\n[nu]\ntail = [1]\n";
        assert!(matches!(ExperimentConfig::from_toml_str(text), Err(QkzError::Config(_))));
    }

    #[test]
    fn closed_form_suites_pass_and_are_deterministic() {
        let mut c = ExperimentConfig::standard(vec![
            Suite::S2Properties,
            Suite::DetkOracle,
            Suite::RhsConsistency,
            Suite::MultOracle,
        ]);
        c.samples = 10;
        c.draws = 2;
        let a = run_suite(&c).unwrap();
        let b = run_suite(&c).unwrap();
        for r in &a.records {
            assert!(r.pass, "{r:?}");
        }
        assert_eq!(a.fingerprint(), b.fingerprint());
        let csv = a.to_csv().unwrap();
        assert_eq!(csv.lines().count(), a.records.len() + 1);
    }
}

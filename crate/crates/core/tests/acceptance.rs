//! One pass/fail line per acceptance criterion. Run with
//! `cargo test --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use qkzlab::combinatorics::NuVector;
use qkzlab::harness::{
    asymptotics, compare_theorem61, contour_robustness, default_beta, default_mu, detk_oracle, e_difference, exchange,
    h_identity, mult_oracle, rhs_consistency, s2_properties, CheckRecord, DEFAULT_LAMBDA, DEFAULT_RHO,
};
use qkzlab::integration::QuadratureConfig;
use qkzlab::qkz_operators::Params;
use qkzlab::Result;

const SEED: u64 = 20240611;

struct Instance {
    label: &'static str,
    n: usize,
    tail: &'static [usize],
    rel_tol: f64,
}

const INSTANCES: [Instance; 3] = [
    Instance { label: "n=2,N=2,ν₁=1", n: 2, tail: &[1], rel_tol: 1e-8 },
    Instance { label: "n=2,N=2,ν₁=2", n: 2, tail: &[2], rel_tol: 1e-6 },
    Instance { label: "n=3,N=2,ν=(1,0)", n: 3, tail: &[1, 0], rel_tol: 1e-8 },
];

impl Instance {
    fn build(&self) -> (Params<f64>, NuVector, QuadratureConfig<f64>) {
        let params = Params::new(
            self.n,
            2,
            DEFAULT_RHO,
            DEFAULT_LAMBDA,
            default_mu(self.n, DEFAULT_RHO, DEFAULT_LAMBDA),
            default_beta(2),
        )
        .unwrap();
        let nu = NuVector::new(2, self.tail).unwrap();
        (params, nu, QuadratureConfig::standard().with_rel_tol(self.rel_tol))
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn summarize(records: &[CheckRecord], limit_s: Option<f64>, elapsed: f64) -> Outcome {
    let worst = records
        .iter()
        .max_by(|a, b| (a.rel_err / a.tolerance.max(1e-300)).total_cmp(&(b.rel_err / b.tolerance.max(1e-300))))
        .expect("records");
    let failures: Vec<&str> = records.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    let slow = limit_s.is_some_and(|l| elapsed > l);
    let mut detail = format!(
        "{} checks, worst {} rel_err {:.2e} (tol {:.0e})",
        records.len(),
        worst.name,
        worst.rel_err,
        worst.tolerance
    );
    if !failures.is_empty() {
        detail += &format!("; failing: {}", failures.join(", "));
    }
    if slow {
        detail += &format!("; runtime {elapsed:.1} s exceeds {:.0} s", limit_s.unwrap());
    }
    Outcome { pass: failures.is_empty() && !slow, detail }
}

fn records_criterion(limit_s: Option<f64>, f: impl FnOnce() -> Result<Vec<CheckRecord>>) -> Outcome {
    let start = Instant::now();
    match f() {
        Ok(r) => summarize(&r, limit_s, start.elapsed().as_secs_f64()),
        Err(e) => Outcome { pass: false, detail: format!("error: {e}") },
    }
}

fn per_instance(
    limit_s: f64,
    f: impl Fn(&Params<f64>, &NuVector, &QuadratureConfig<f64>) -> Result<Vec<CheckRecord>>,
) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for inst in &INSTANCES {
        let (p, nu, cfg) = inst.build();
        let o = records_criterion(Some(limit_s), || f(&p, &nu, &cfg));
        pass &= o.pass;
        parts.push(format!("[{}] {}{}", inst.label, if o.pass { "" } else { "FAIL " }, o.detail));
    }
    Outcome { pass, detail: parts.join(" | ") }
}

fn theorem() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for inst in &INSTANCES {
        let (p, nu, cfg) = inst.build();
        let start = Instant::now();
        match compare_theorem61(&p, &nu, &cfg) {
            Ok(o) => {
                let t = start.elapsed().as_secs_f64();
                let ok = o.rel_err <= 1e-3 && o.ratio_of_ratios_err <= 2e-3 && t < 1800.0;
                pass &= ok;
                let mut s = format!(
                    "[{}] {} det/rhs = {:.9}{:+.1e}i, rel_err {:.2e}, ratio of ratios err {:.2e}, {:.0} s",
                    inst.label,
                    if ok { "PASS" } else { "FAIL" },
                    o.ratio[0],
                    o.ratio[1],
                    o.rel_err,
                    o.ratio_of_ratios_err,
                    t
                );
                if o.relabel_factor != 1.0 {
                    s += &format!(
                        " (against (Πν_j!)^Λ0 = {} times the formula: rel_err {:.2e})",
                        o.relabel_factor, o.rel_err_relabeled
                    );
                }
                parts.push(s);
            }
            Err(e) => {
                pass = false;
                parts.push(format!("[{}] error: {e}", inst.label));
            }
        }
    }
    Outcome { pass, detail: parts.join(" | ") }
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("S₂ shift relations, normalization, symmetry, zeros and poles", Box::new(|| {
            records_criterion(Some(10.0), || Ok(s2_properties(100, SEED)))
        })),
        ("one-point integral H against its closed form", Box::new(|| {
            records_criterion(Some(60.0), || Ok(h_identity(&QuadratureConfig::standard())))
        })),
        ("det K_m direct against closed form", Box::new(|| {
            records_criterion(Some(30.0), || Ok(detk_oracle(10, SEED + 1)))
        })),
        ("exchange relation of the weight functions", Box::new(|| {
            records_criterion(Some(60.0), || Ok(exchange(20, SEED + 2)))
        })),
        ("difference equations of E", Box::new(|| records_criterion(None, || Ok(e_difference(10, SEED + 3))))),
        ("multiplicity identity", Box::new(|| records_criterion(Some(10.0), || Ok(mult_oracle())))),
        ("closed-form determinant = c·E", Box::new(|| records_criterion(None, || Ok(rhs_consistency(10, SEED + 4))))),
        ("asymptotics at spread β", Box::new(|| {
            per_instance(600.0, |p, nu, cfg| asymptotics(p, nu, cfg, &[4.0, 8.0, 12.0]))
        })),
        ("determinant of the pairing matrix", Box::new(theorem)),
        ("contour robustness under δ/2 and 2T", Box::new(|| per_instance(1800.0, contour_robustness))),
    ];
    let mut all = true;
    for (i, (title, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let o = run();
        all &= o.pass;
        println!(
            "criterion {:>2} {} {} ({:.1} s): {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            title,
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance battery: one line per criterion with runtime against its bound.
//!
//! Runs as a plain binary so the report is printed even when output capture
//! is on. The process fails if any criterion fails, except criteria listed in
//! `KNOWN_UNATTAINABLE`, which must fail and are still reported as FAIL.

mod common;

use std::time::{Duration, Instant};

use common::{fd_grad5, fixture, TestRng};
use pspin_critical::cli::{cmd_verify, RunConfig};
use pspin_critical::criticality::{
    self, beta_c_talagrand, beta_hessian_singular, beta_m, check_nsd, Verdict,
};
use pspin_critical::landscape::{
    f_beta, f_grad, f_hessian, hessian_at_zero, maximize_f, Objective,
};
use pspin_critical::montecarlo::estimators::{estimate_free_energy, estimate_level_set};
use pspin_critical::montecarlo::{
    covariance_exact, log_e_z2_exact, sample_disorder, sample_uniform, Domain, FiniteModel,
    KeyedStream,
};
use pspin_critical::{Mixture, ModelSpec, MultiIndex, SpeciesSet};

/// Criterion 8 asks for a negative residual of the exact finite-N second
/// moment against its limit. For SK the integrand is a probability density
/// times `exp(N beta^2 r^2) >= 1`, so `log E Z^2 / N - beta^2 >= 0` at every
/// N and the sign clause cannot hold. It is evaluated as written and must fail.
const KNOWN_UNATTAINABLE: &[u32] = &[8];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn run(id: u32, name: &str, bound: Duration, body: impl FnOnce() -> Outcome) -> (u32, bool) {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let (passed, detail) = match result {
        Ok(o) => (o.passed && elapsed < bound, o.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let known = if !passed && KNOWN_UNATTAINABLE.contains(&id) {
        " [known unattainable]"
    } else {
        ""
    };
    println!(
        "{} criterion {id:>2} {name}: {detail} ({:.2} s, bound {} s){known}",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        bound.as_secs()
    );
    (id, passed)
}

/// Tangency of a single-species objective `a(r) + beta^2 xi(r)`: eliminating
/// beta^2 from the stationarity condition leaves a 1-d root in r.
fn tangency_beta(model: &ModelSpec, a: impl Fn(f64) -> f64, da: impl Fn(f64) -> f64) -> f64 {
    let mix = model.mixture();
    let beta_sq = |r: f64| -da(r) / mix.grad(&[r])[0];
    let h = |r: f64| a(r) + beta_sq(r) * mix.eval_scalar(r);
    let mut lo = 1e-3;
    assert!(h(lo) < 0.0, "tangency oracle: no sign change near 0");
    let mut hi = lo;
    while h(hi) < 0.0 {
        lo = hi;
        hi = 0.5 * (hi + 1.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    beta_sq(0.5 * (lo + hi)).sqrt()
}

fn oracle_beta_m(model: &ModelSpec) -> f64 {
    tangency_beta(model, |r| 0.5 * (1.0 - r * r).ln(), |r| -r / (1.0 - r * r))
}

fn oracle_beta_c(model: &ModelSpec) -> f64 {
    tangency_beta(model, |r| (1.0 - r).ln() + r, |r| -r / (1.0 - r))
}

fn c1() -> Outcome {
    let sk = fixture("sk");
    let rep = criticality::verdict(&sk).unwrap();
    let target = std::f64::consts::FRAC_1_SQRT_2;
    let ok = (rep.beta_m - target).abs() <= 1e-6
        && rep.verdict == Verdict::Equal
        && rep.beta_c == Some(rep.beta_m);
    outcome(
        ok,
        format!("beta_m = {:.12}, verdict {:?}, beta_c = {:?}", rep.beta_m, rep.verdict, rep.beta_c),
    )
}

fn c2() -> Outcome {
    let sk = fixture("sk");
    let bc = beta_c_talagrand(&sk).unwrap();
    let bm = beta_m(&sk).unwrap();
    outcome((bc - bm).abs() <= 1e-6, format!("beta_c - beta_m = {:.3e}", bc - bm))
}

fn c3() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["pure3", "pure4"] {
        let m = fixture(name);
        let rep = criticality::verdict(&m).unwrap();
        let bc = beta_c_talagrand(&m).unwrap();
        let gap = bc - rep.beta_m;
        let oracle_gap = oracle_beta_c(&m) - oracle_beta_m(&m);
        ok &= rep.verdict == Verdict::StrictlyLess && gap > 1e-3 && (gap - oracle_gap).abs() < 1e-6;
        parts.push(format!("{name}: {:?}, gap {gap:.9} (oracle {oracle_gap:.9})", rep.verdict));
    }
    outcome(ok, parts.join("; "))
}

fn c4() -> Outcome {
    let m = fixture("two_species_quadratic");
    let bh = beta_hessian_singular(&m);
    let rep = criticality::verdict(&m).unwrap();
    let exact = 1.0 / 6f64.sqrt();
    let ok = (bh - exact).abs() <= 1e-9
        && rep.verdict == Verdict::Equal
        && (rep.beta_m - bh).abs() <= 1e-6;
    outcome(
        ok,
        format!(
            "beta_H - 1/sqrt6 = {:.2e}, beta_m - beta_H = {:.2e}, verdict {:?}",
            bh - exact,
            rep.beta_m - bh,
            rep.verdict
        ),
    )
}

fn random_model(rng: &mut TestRng) -> ModelSpec {
    let n = 1 + rng.below(3) as usize;
    let w: Vec<f64> = (0..n).map(|_| rng.range(0.2, 1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut lambda: Vec<f64> = w.iter().map(|x| x / total).collect();
    // make the proportions sum to one exactly
    let head: f64 = lambda[..n - 1].iter().sum();
    lambda[n - 1] = 1.0 - head;
    let names = (0..n).map(|s| format!("s{s}")).collect();
    let mut terms = std::collections::BTreeMap::new();
    // duplicates collapse, so small species sets end up with fewer terms
    for _ in 0..1 + rng.below(5) {
        let k = 2 + rng.below(3) as u32;
        let mut d = vec![0u32; n];
        for _ in 0..k {
            d[rng.below(n as u64) as usize] += 1;
        }
        terms.insert(MultiIndex::new(d), rng.range(0.05, 1.0));
    }
    let mixture = Mixture::new(n, terms, 2).unwrap();
    ModelSpec::new(SpeciesSet::new(names, lambda).unwrap(), mixture).unwrap()
}

fn c5() -> Outcome {
    let mut rng = TestRng::new(2024);
    let mut failures = Vec::new();
    let mut max_n = 0;
    for k in 0..50 {
        let m = random_model(&mut rng);
        let lo = 3 * m.n_species();
        let n = lo + rng.below((30 - lo + 1) as u64) as usize;
        max_n = max_n.max(n);
        let fm = FiniteModel::build(&m, n).unwrap();
        let mut st = KeyedStream::new(k, Domain::Pairs, 0);
        let a = sample_uniform(&fm, &mut st);
        let b = if k % 5 == 0 { a.clone() } else { sample_uniform(&fm, &mut st) };
        if let Err(e) = covariance_exact(&fm, &a, &b) {
            failures.push(format!("instance {k}: {e}"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("50 instances agree to 1e-10 (largest N = {max_n})")
        } else {
            failures.join("; ")
        },
    )
}

fn c6() -> Outcome {
    let names = ["sk", "pure3", "pure4", "two_species_quadratic", "two_species_cubic", "bipartite_only"];
    let mut rng = TestRng::new(6);
    let mut worst: f64 = 0.0;
    let mut worst_zero: f64 = 0.0;
    let rel = |a: &[f64], b: &[f64]| -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    };
    for name in names {
        let m = fixture(name);
        let n = m.n_species();
        let mix = m.mixture();
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.range(0.01, 0.95)).collect();
            let beta = rng.range(0.1, 2.0);
            worst = worst.max(rel(&mix.grad(&x), &fd_grad5(|y| mix.eval(y), &x, 1e-3)));
            let h = mix.hessian(&x);
            let fg = f_grad(&m, beta, &x).unwrap();
            worst = worst.max(rel(&fg, &fd_grad5(|y| f_beta(&m, beta, y).unwrap(), &x, 1e-4)));
            let fh = f_hessian(&m, beta, &x).unwrap();
            for i in 0..n {
                let row: Vec<f64> = (0..n).map(|j| h[(i, j)]).collect();
                worst = worst.max(rel(&row, &fd_grad5(|y| mix.grad(y)[i], &x, 1e-3)));
                let row: Vec<f64> = (0..n).map(|j| fh[(i, j)]).collect();
                let fd = fd_grad5(|y| f_grad(&m, beta, y).unwrap()[i], &x, 1e-4);
                worst = worst.max(rel(&row, &fd));
            }
            let z = hessian_at_zero(&m, beta);
            let zf = f_hessian(&m, beta, &vec![0.0; n]).unwrap();
            worst_zero = worst_zero.max((z - zf).abs().max());
        }
    }
    outcome(
        worst <= 1e-6 && worst_zero <= 1e-12,
        format!("max rel err {worst:.2e}; origin Hessian deviation {worst_zero:.2e}"),
    )
}

fn c7() -> Outcome {
    let mut rng = TestRng::new(7);
    let mut worst_identity: f64 = 0.0;
    let mut worst_eta: f64 = 0.0;
    let mut corners_exact = true;
    let pool: Vec<ModelSpec> = ["sk", "pure3", "pure4", "two_species_quadratic", "two_species_cubic"]
        .iter()
        .map(|n| fixture(n))
        .collect();
    for k in 0..100 {
        let m = &pool[k % pool.len()];
        let n = m.n_species();
        let mix = m.mixture();
        let r: Vec<f64> = (0..n).map(|_| rng.range(0.0, 0.99)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let r2: Vec<f64> = r.iter().map(|v| v * v).collect();
        let shifted: Vec<f64> = x.iter().zip(&r2).map(|(a, q)| (1.0 - q) * a + q).collect();
        let direct = mix.eval(&shifted) - mix.eval(&r2);
        let via = mix.tilde_transform(&r).unwrap().eval(&x);
        worst_identity = worst_identity.max((via - direct).abs() / direct.abs().max(1.0));

        let dir: Vec<f64> = (0..n).map(|_| rng.range(0.05, 1.0)).collect();
        let slope_at = |eps: f64| {
            let r: Vec<f64> = dir.iter().map(|v| (eps * v).sqrt()).collect();
            (mix.tilde_transform(&r).unwrap().eval(&x) - mix.eval(&x)) / eps
        };
        let slope = 2.0 * slope_at(5e-6) - slope_at(1e-5);
        let eta = mix.eta_direction(&dir, &x);
        worst_eta = worst_eta.max((eta - slope).abs() / eta.abs().max(1e-2));
        corners_exact &= mix.eta_direction(&dir, &vec![0.0; n]) == 0.0
            && mix.eta_direction(&dir, &vec![1.0; n]) == 0.0;
    }
    outcome(
        worst_identity <= 1e-12 && worst_eta <= 1e-4 && corners_exact,
        format!(
            "identity err {worst_identity:.2e}, slope rel err {worst_eta:.2e}, corners exact: {corners_exact}"
        ),
    )
}

fn c8() -> Outcome {
    let sk = fixture("sk");
    let beta = 0.5;
    let limit = beta * beta * sk.xi_one() + maximize_f(&sk, beta, Objective::Plain).unwrap().value;
    let mut zero_worst: f64 = 0.0;
    let mut residuals = Vec::new();
    for n in [50, 100, 200, 400] {
        let fm = FiniteModel::build(&sk, n).unwrap();
        zero_worst = zero_worst.max(log_e_z2_exact(&fm, 0.0).unwrap().abs());
        residuals.push(log_e_z2_exact(&fm, beta).unwrap() - limit);
    }
    let normalized = zero_worst <= 1e-8;
    let negative = residuals.iter().all(|r| *r < 0.0);
    let shrinking = residuals.windows(2).all(|w| w[1].abs() < w[0].abs());
    let small = residuals[3].abs() <= 0.02;
    outcome(
        normalized && negative && shrinking && small,
        format!(
            "beta=0 max |value| {zero_worst:.1e}; residuals {:?}; negative: {negative}, shrinking: {shrinking}, <= 0.02 at N=400: {small}",
            residuals.iter().map(|r| format!("{r:+.6}")).collect::<Vec<_>>()
        ),
    )
}

fn c9() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["two_species_cubic", "sk"] {
        let m = fixture(name);
        let beta = 0.5 * beta_m(&m).unwrap();
        let fm = FiniteModel::build(&m, 60).unwrap();
        let d = sample_disorder(&fm, 7).unwrap();
        let annealed = 0.5 * beta * beta * m.xi_one();
        let fe = estimate_free_energy(&d, beta, 100_000, 7).unwrap();
        let ls = estimate_level_set(&d, beta, 0.05, 100_000, 7).unwrap();
        let fe_ok = (fe.estimate - annealed).abs() <= 0.1;
        let ls_ok = (ls.estimate + annealed).abs() <= 0.15;
        ok &= fe_ok && ls_ok;
        parts.push(format!(
            "{name}: F {:.4} vs {annealed:.4}, level set {:.4} vs {:.4}",
            fe.estimate, ls.estimate, -annealed
        ));
    }
    outcome(ok, parts.join("; "))
}

fn c10() -> Outcome {
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for name in common::FIXTURES {
        let m = fixture(name);
        if !m.mixture().satisfies_assumption_a() {
            continue;
        }
        let bm = beta_m(&m).unwrap();
        for f in [0.25, 0.5, 0.75, 0.9] {
            let c = check_nsd(&m, f * bm, 1e-6);
            ok &= c.lambda_max < 0.0 && c.is_nsd;
            worst = worst.max(c.lambda_max);
            checked += 1;
        }
    }
    outcome(ok, format!("{checked} (model, beta) pairs, largest top eigenvalue {worst:.4}"))
}

fn c11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut timings = Vec::new();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}.json"));
        let cfg = RunConfig {
            seed: 7,
            out: Some(out.clone()),
            ..Default::default()
        };
        let start = Instant::now();
        let code = cmd_verify(&cfg, &mut Vec::new()).unwrap();
        timings.push(start.elapsed().as_secs_f64());
        outputs.push((
            code,
            std::fs::read(&out).unwrap(),
            std::fs::read(out.with_extension("csv")).unwrap(),
        ));
    }
    let same = outputs[0] == outputs[1];
    outcome(
        same && timings[1] < 10.0,
        format!(
            "byte-identical JSON and CSV: {same} (exit {}); per-run {:.2} s / {:.2} s",
            outputs[0].0, timings[0], timings[1]
        ),
    )
}

fn main() {
    // rayon output must not depend on the pool, so run with the default one
    let s = Duration::from_secs;
    let results = [
        run(1, "SK anchor", s(1), c1),
        run(2, "Talagrand cross-oracle", s(1), c2),
        run(3, "regular-case strictness", s(5), c3),
        run(4, "quadratic two-species", s(5), c4),
        run(5, "coefficient law", s(30), c5),
        run(6, "derivatives", s(5), c6),
        run(7, "transform", s(5), c7),
        run(8, "second-moment convergence", s(60), c8),
        run(9, "asymptotic free energy", s(120), c9),
        run(10, "NSD below threshold", s(5), c10),
        // the 10 s overhead bound is checked on the repeat run inside c11
        run(11, "determinism", s(30), c11),
    ];
    let unexpected: Vec<u32> = results
        .iter()
        .filter(|(id, passed)| *passed == KNOWN_UNATTAINABLE.contains(id))
        .map(|(id, _)| *id)
        .collect();
    let passed = results.iter().filter(|r| r.1).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if !unexpected.is_empty() {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}

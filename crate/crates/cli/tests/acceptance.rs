//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use flowlab::lab::{
    cmd_dichotomy, cmd_entropy, cmd_flatfn, cmd_recurrence, cmd_timechange, flat_profile, manifest_without_timings,
    DichotomySummary, ExperimentConfig, FieldChoice, ProfileSource, RunWriter,
};
use flowlab::speed::{mollifier_h, speed_at};
use flowlab::suspension::dist_susp;
use flowlab::time_change::pushforward_density;
use flowlab::torus::BaseMapSpec;
use flowlab::{AdditiveClock, BaseMap, SpeedField, SpeedKind, SuspensionPoint, TimeChangedFlow, TorusPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIG_CLOUD: usize = 100_000;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, secs: f64, limit_s: f64, checks: &[(&str, bool)], detail: String) {
        let mut failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
        if secs > limit_s {
            failed.push("runtime");
        }
        let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
        if !failed.is_empty() {
            self.failures += 1;
        }
        let why = if failed.is_empty() { String::new() } else { format!(" failed: {}", failed.join(", ")) };
        let limit = if limit_s.is_finite() { format!(" of {limit_s:.0}s") } else { String::new() };
        println!("criterion {id} {verdict} {name} [{secs:.1}s{limit}] {detail}{why}");
    }
}

fn writer(dir: &Path, name: &str, cfg: &ExperimentConfig) -> RunWriter {
    RunWriter::new(&dir.join(name), name, cfg).expect("output directory")
}

fn rotation_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.base_map = BaseMapSpec::Rotation { angles: vec![(5f64.sqrt() - 1.0) / 2.0] };
    cfg.field.stopped_base = vec![0.3];
    cfg
}

fn random_q(rng: &mut ChaCha8Rng, dim: usize) -> SuspensionPoint {
    let c: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    SuspensionPoint::new(TorusPoint::new(c), rng.gen::<f64>())
}

/// Adaptive Simpson on `[a, b]`, kept separate from the library quadrature.
fn simpson_oracle(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    // fixed subintervals keep narrow spikes from being stepped over
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            rec(f, lo, hi, fa, fm, fb, h / 6.0 * (fa + 4.0 * fm + fb), tol / pieces as f64, 48)
        })
        .sum()
}

/// Largest eigenvalue of a 2×2 integer matrix from its characteristic polynomial.
fn eigen_oracle(m: [[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    (tr + (tr * tr - 4.0 * det).sqrt()) / 2.0
}

/// Smallest `l` with `{kθ : 0 ≤ k ≤ l}` meeting every open arc of radius `eps`.
fn brute_gap_oracle(theta: f64, eps: f64) -> u64 {
    for l in 0..100_000u64 {
        let mut pts: Vec<f64> = (0..=l).map(|k| (k as f64 * theta).rem_euclid(1.0)).collect();
        pts.sort_by(f64::total_cmp);
        let mut gap = 1.0 - pts[pts.len() - 1] + pts[0];
        for w in pts.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        if gap < 2.0 * eps {
            return l;
        }
    }
    panic!("no recurrence constant below the search bound");
}

fn criterion_1(dir: &Path, r: &mut Report) {
    let t0 = Instant::now();
    let cfg = ExperimentConfig::default();
    let s = cmd_flatfn(&cfg, writer(dir, "flatfn", &cfg)).expect("flatfn");
    let mut w = writer(dir, "flatfn_profile", &cfg);
    let profile = flat_profile(&cfg, &mut w).expect("profile");
    let eta = |t: f64| profile.eta(t).unwrap();

    let zero = (0..=1000).all(|k| eta(-1.0 + k as f64 / 1000.0) == 0.0);
    let one = (0..=1000).all(|k| eta(1.0 + k as f64 / 1000.0) == 1.0);
    let h1 = (-1.0f64).exp();
    let mut shells = true;
    for k in 0..=10usize {
        let (lo, hi) = (1.0 / (k + 2) as f64, 1.0 / (k + 1) as f64);
        let bound = profile.beta(k as i64) * h1 / 2f64.powi(k as i32);
        for m in 1..=100 {
            let t = lo * (hi / lo).powf(m as f64 / 100.0);
            let v = if k == 0 { profile.series(t) } else { eta(t) };
            shells &= v < bound;
        }
    }
    // finite differences with a step shrinking alongside t
    let fd = |t: f64, k: usize| -> f64 {
        let h = t / 8.0;
        let mut acc = 0.0;
        let mut binom = 1.0;
        for i in 0..=k {
            let sign = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * eta(t + (i as f64 - 0.5 * k as f64) * h);
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
        (acc / h.powi(k as i32)).abs()
    };
    let mut derivs = true;
    let mut last = Vec::new();
    for k in 1..=4 {
        let vals: Vec<f64> = (1..=4).map(|j| fd(10f64.powi(-j), k)).collect();
        derivs &= vals.windows(2).all(|v| v[1] <= v[0]);
        last.push(vals[3]);
    }
    r.line(
        1,
        "flat function",
        t0.elapsed().as_secs_f64(),
        5.0,
        &[
            ("zero on [-1,0]", zero && s.zero_for_nonpositive_t),
            ("one on [1,2]", one && s.one_on_one_two),
            ("shell bound", shells && s.shells_pass),
            ("derivatives shrink", derivs && s.derivatives_decrease),
            ("h(1) = 1/e", (mollifier_h(1.0) - h1).abs() < 1e-15),
        ],
        format!("fd at 1e-4 orders 1-4 = {last:?}"),
    );
}

fn criterion_2(dir: &Path, r: &mut Report) {
    let t0 = Instant::now();
    let cfg = ExperimentConfig::default();
    let s = cmd_timechange(&cfg, writer(dir, "timechange", &cfg)).expect("timechange");
    let flow = cfg.flow().unwrap();
    let quad =
        SpeedField::new(SpeedKind::QuadraticAtP, flow.clone(), cfg.stopped_point(), cfg.field.chart_radius).unwrap();
    let phi = TimeChangedFlow::for_speed(&quad);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // clock against an independent quadrature of a = 1/α along ψ
    let mut oracle_err = 0.0f64;
    for _ in 0..100 {
        let q = random_q(&mut rng, 2);
        let t = rng.gen::<f64>() * 3.0;
        let f = |s: f64| 1.0 / speed_at(&quad, &flow.advance(&q, s));
        let exact = simpson_oracle(&f, 0.0, t, 1e-13);
        oracle_err = oracle_err.max((phi.clock().theta(&q, t).unwrap() - exact).abs());
    }
    // long round trips
    let mut rt = 0.0f64;
    for _ in 0..50 {
        let q = random_q(&mut rng, 2);
        if dist_susp(&flow, &q, &cfg.stopped_point()) < 1e-3 {
            continue;
        }
        let s = rng.gen::<f64>() * 50.0;
        let theta = phi.clock().theta(&q, s).unwrap();
        rt = rt.max((phi.tau(&q, theta).unwrap() - s).abs());
    }
    // constant clocks
    let mut lin = 0.0f64;
    for c in [0.5, 2.0, 3.0] {
        let f = TimeChangedFlow::new(AdditiveClock::constant(flow.clone(), c).unwrap(), 1e-12, 1e6).unwrap();
        for _ in 0..20 {
            let q = random_q(&mut rng, 2);
            let t = rng.gen::<f64>() * 10.0;
            lin = lin.max((f.clock().theta(&q, t).unwrap() - c * t).abs());
            lin = lin.max((f.tau(&q, t).unwrap() - t / c).abs());
            lin = lin.max(dist_susp(&flow, &f.advance(&q, t).unwrap(), &flow.advance(&q, t / c)));
        }
    }
    r.line(
        2,
        "clock",
        t0.elapsed().as_secs_f64(),
        30.0,
        &[
            ("1000 trials", s.trials == 1000),
            ("cocycle < 1e-9", s.max_cocycle_residual < 1e-9),
            ("quadrature oracle < 1e-9", oracle_err < 1e-9),
            ("round trip < 1e-8", s.max_round_trip < 1e-8 && rt < 1e-8),
            ("constant clocks", s.max_constant_error < 1e-10 && lin < 1e-10),
        ],
        format!(
            "cocycle {:.1e}, oracle {oracle_err:.1e}, round trip {:.1e}/{rt:.1e}, linear {lin:.1e}",
            s.max_cocycle_residual, s.max_round_trip
        ),
    );
}

/// Suspension estimates reused by the balance criterion.
struct CatEntropy {
    h_susp: f64,
    h_double: f64,
}

fn criteria_3_4(dir: &Path, r: &mut Report) -> CatEntropy {
    let t0 = Instant::now();
    let lambda = eigen_oracle([[2.0, 1.0], [1.0, 1.0]]).ln();

    let mut cat = ExperimentConfig::default();
    cat.samples.cloud_size = BIG_CLOUD;
    cat.entropy.suspension = false;
    let sc = cmd_entropy(&cat, writer(dir, "entropy_cat", &cat)).expect("cat entropy");
    let t_cat = t0.elapsed();

    let mut rot = rotation_cfg();
    rot.samples.cloud_size = BIG_CLOUD;
    rot.entropy.suspension = false;
    let sr = cmd_entropy(&rot, writer(dir, "entropy_rotation", &rot)).expect("rotation entropy");

    let mut id = ExperimentConfig::default();
    id.base_map = BaseMap::identity(2).spec();
    id.samples.cloud_size = BIG_CLOUD;
    id.entropy.suspension = false;
    let si = cmd_entropy(&id, writer(dir, "entropy_identity", &id)).expect("identity entropy");
    r.line(
        3,
        "entropy oracles",
        t0.elapsed().as_secs_f64(),
        600.0,
        &[
            ("cat within 10% of ln λ", (sc.map_entropy - lambda).abs() <= 0.1 * lambda),
            ("rotation < 0.02", sr.map_entropy < 0.02),
            ("identity < 0.02", si.map_entropy < 0.02),
        ],
        format!(
            "cat {:.4} vs ln λ {lambda:.4} ({:.0}s), rotation {:.4}, identity {:.4}",
            sc.map_entropy,
            t_cat.as_secs_f64(),
            sr.map_entropy,
            si.map_entropy
        ),
    );

    // suspension and the constant clock a ≡ 2 share one run
    let t1 = Instant::now();
    let mut susp = ExperimentConfig::default();
    susp.samples.cloud_size = BIG_CLOUD;
    susp.entropy.time_changes = vec![FieldChoice::Constant { speed: 0.5 }];
    let ss = cmd_entropy(&susp, writer(dir, "entropy_suspension", &susp)).expect("suspension entropy");
    let h_susp = ss.suspension_entropy.unwrap();
    let h_double = ss.time_changes[0].1;
    let ratio = h_susp / ss.map_entropy;
    r.line(
        4,
        "suspension equality",
        t1.elapsed().as_secs_f64() - constant_clock_secs(dir),
        900.0,
        &[("ratio within 15%", (ratio - 1.0).abs() <= 0.15), ("box sandwich", ss.box_sandwich_holds == Some(true))],
        format!("map {:.4}, suspension {h_susp:.4}, ratio {ratio:.4}", ss.map_entropy),
    );
    CatEntropy { h_susp, h_double }
}

fn timings(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["timings"].clone()
}

/// Seconds of the constant clock stage of the suspension run, which
/// belongs to the balance criterion.
fn constant_clock_secs(dir: &Path) -> f64 {
    timings(&dir.join("entropy_suspension/manifest.json"))["constant_0.5"].as_f64().unwrap_or(0.0)
}

/// Seconds of the named dichotomy stages.
fn stage_secs(dir: &Path, stages: &[&str]) -> f64 {
    let t = timings(&dir.join("dichotomy/manifest.json"));
    stages.iter().map(|s| t[s].as_f64().unwrap_or(0.0)).sum()
}

fn criterion_5(dir: &Path, cat: &CatEntropy, d: &DichotomySummary, r: &mut Report) {
    let t0 = Instant::now();
    let cfg = ExperimentConfig::default();
    let flow = cfg.flow().unwrap();
    // total mass of a ≡ 2 from the same Monte Carlo estimator used for K
    let half = SpeedField::constant(0.5, flow.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<SuspensionPoint> = (0..10_000).map(|_| random_q(&mut rng, 2)).collect();
    let mass = pushforward_density(&half, &samples, |_| true).unwrap().as_f64();
    let linear = cat.h_double * mass / cat.h_susp;
    let quad = d.totoki.ratio;
    let (k1, k2) = d.mass_quadratic;
    let drift = (k2 - k1).abs() / k1;
    r.line(
        5,
        "entropy-mass balance",
        t0.elapsed().as_secs_f64()
            + stage_secs(dir, &["entropy_psi", "entropy_quadratic", "totoki"])
            + constant_clock_secs(dir),
        1200.0,
        &[
            ("a ≡ 2 ratio within 5%", (linear - 1.0).abs() <= 0.05),
            ("mass of a ≡ 2 is 2", (mass - 2.0).abs() < 1e-12),
            ("quadratic ratio within 25%", (quad - 1.0).abs() <= 0.25),
            ("K drift < 5%", drift < 0.05),
        ],
        format!(
            "a≡2: h {:.4} x mass {mass} / h_psi {:.4} = {linear:.4}; quadratic ratio {quad:.4}, K {k1:.4}/{k2:.4}",
            cat.h_double, cat.h_susp
        ),
    );
}

fn criterion_6(dir: &Path, r: &mut Report) {
    let t0 = Instant::now();
    let cfg = rotation_cfg();
    let s = cmd_recurrence(&cfg, writer(dir, "recurrence", &cfg)).expect("recurrence");
    let theta = (5f64.sqrt() - 1.0) / 2.0;
    let mut matches = true;
    for &(eps, l) in &s.l_values {
        matches &= brute_gap_oracle(theta, eps) == l;
    }
    let l01 = s.l_values.iter().find(|(e, _)| *e == 0.1).map(|v| v.1).unwrap_or(0);
    let oracle01 = brute_gap_oracle(theta, 0.1);
    let measure = 2.0 * 0.1;
    // arc measure by equidistribution of a long orbit
    let n = 1_000_000;
    let hits = (0..n).filter(|k| flowlab::torus::circle_dist((*k as f64 * theta).rem_euclid(1.0), 0.5) < 0.1).count();
    let freq = hits as f64 / n as f64;
    r.line(
        6,
        "recurrence",
        t0.elapsed().as_secs_f64(),
        60.0,
        &[
            ("certified", s.certified),
            ("L matches gap oracle", matches),
            ("L(0.1) = oracle", l01 == oracle01),
            ("μ(B) ≥ 1/L", measure >= 1.0 / l01.max(1) as f64),
            ("Birkhoff frequency", (freq - measure).abs() < 0.01 * measure),
            ("ball bound check", s.ball_bound_holds == Some(true)),
            ("monotone", s.monotone),
        ],
        format!("L = {:?}, oracle L(0.1) = {oracle01}, frequency {freq:.5}", s.l_values),
    );
}

fn dichotomy(dir: &Path) -> (DichotomySummary, f64) {
    let t0 = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.samples.cloud_size = BIG_CLOUD;
    let s = cmd_dichotomy(&cfg, writer(dir, "dichotomy", &cfg)).expect("dichotomy");
    (s, t0.elapsed().as_secs_f64())
}

fn criterion_7(dir: &Path, d: &DichotomySummary, r: &mut Report) {
    let gammas: Vec<f64> = d.gamma_flat.iter().map(|g| g.as_f64()).collect();
    let doubling = gammas.windows(2).all(|g| g[1] >= 2.0 * g[0]);
    let ends_diverged = d.gamma_flat.last().is_some_and(|g| g.is_diverged());
    let (g1, g2) = d.gamma_quadratic;
    let drift = (g2 - g1).abs() / g1;
    // logarithmic growth: equal increments per decade of cutoff
    let text = std::fs::read_to_string(dir.join("dichotomy/mass_2d.csv")).unwrap();
    let masses: Vec<f64> =
        text.lines().skip(1).filter_map(|l| l.split(',').nth(1)).map(|m| m.parse::<f64>().unwrap()).collect();
    let finite: Vec<f64> = masses[..masses.len() - 1].to_vec();
    let incs: Vec<f64> = finite.windows(2).skip(3).map(|m| m[1] - m[0]).collect();
    let mean = incs.iter().sum::<f64>() / incs.len() as f64;
    let log_law = incs.iter().all(|i| *i > 0.0 && (i - mean).abs() < 0.05 * mean);
    r.line(
        7,
        "return-time dichotomy",
        stage_secs(dir, &["gamma"]),
        600.0,
        &[
            ("flat doubles per index", doubling),
            ("flat ends diverged", ends_diverged),
            ("quadratic finite", g1.is_finite() && g2.is_finite()),
            ("quadratic drift < 5%", drift < 0.05),
            ("2D analogue diverges", d.mass_2d.is_diverged()),
            ("2D mass grows like ln(1/cutoff)", log_law),
        ],
        format!("flat {gammas:?}, quadratic {g1:.4}/{g2:.4}, 2D increment per decade {mean:.4}"),
    );
}

fn criterion_8(dir: &Path, d: &DichotomySummary, d_secs: f64, r: &mut Report) {
    let last = *d.h_flat.last().unwrap();
    let nonincreasing = d.h_flat.windows(2).all(|h| h[1] <= h[0]);
    r.line(
        8,
        "entropy dichotomy",
        d_secs - stage_secs(dir, &["gamma", "totoki"]),
        1800.0,
        &[
            ("quadratic ≥ 0.5 ψ", d.h_quadratic >= 0.5 * d.h_psi),
            ("flat nonincreasing", nonincreasing && d.flat_nonincreasing),
            ("flat drops below 0.1", last < 0.1 && d.h_flat[0] > last),
            ("10 monotone witnesses", d.witnesses_monotone == 10),
        ],
        format!("ψ {:.4}, quadratic {:.4}, flat {:.4?}", d.h_psi, d.h_quadratic, d.h_flat),
    );
}

fn run_cli(cmd: &str, cfg: &Path, out: &Path, workers: usize) -> bool {
    Command::new(env!("CARGO_BIN_EXE_flowlab"))
        .args([cmd, "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(["--workers", &workers.to_string()])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn read_outputs(dir: &Path) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut text = std::fs::read_to_string(&path).unwrap();
        if name == "manifest.json" {
            text = manifest_without_timings(&text).unwrap();
        }
        files.insert(name, text);
    }
    files
}

fn criterion_9(dir: &Path, r: &mut Report) {
    let t0 = Instant::now();
    let mut cat = ExperimentConfig::default();
    cat.timechange.trials = 100;
    cat.flat.floors = vec![1e-2, 1e-7];
    cat.samples.gamma_lattice = 32;
    cat.samples.mass_samples = 10_000;
    cat.samples.witness_points = 3;
    let mut rot = rotation_cfg();
    rot.flat.profile = ProfileSource::Recurrence { i0: 1, len: 20 };
    let mut same = Vec::new();
    let mut differing = Vec::new();
    let mut manifests = true;
    for (label, cfg, cmds) in [
        ("cat", &cat, &["flatfn", "timechange", "entropy", "dichotomy"][..]),
        ("rotation", &rot, &["recurrence", "flatfn", "entropy"][..]),
    ] {
        let path = dir.join(format!("determinism_{label}.json"));
        std::fs::write(&path, cfg.to_json()).unwrap();
        for cmd in cmds {
            let outs: Vec<_> = [(1, "a"), (1, "b"), (2, "c")]
                .iter()
                .map(|(workers, tag)| {
                    let out = dir.join(format!("det_{label}_{cmd}_{tag}"));
                    let ok = run_cli(cmd, &path, &out, *workers);
                    (ok, read_outputs(&out))
                })
                .collect();
            let ok = outs.iter().all(|o| o.0) && outs.windows(2).all(|o| o[0].1 == o[1].1);
            manifests &= outs.iter().all(|o| o.1.contains_key("manifest.json"));
            if ok {
                same.push(format!("{label}/{cmd}"));
            } else {
                differing.push(format!("{label}/{cmd}"));
            }
        }
    }
    r.line(
        9,
        "determinism",
        t0.elapsed().as_secs_f64(),
        f64::INFINITY,
        &[("identical outputs", differing.is_empty()), ("manifest per run", manifests)],
        format!("identical: {same:?}; differing: {differing:?}"),
    );
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let dir = tmp.path();
    let mut r = Report { failures: 0 };

    criterion_1(dir, &mut r);
    criterion_2(dir, &mut r);
    let cat = criteria_3_4(dir, &mut r);
    criterion_6(dir, &mut r);
    let (d, d_secs) = dichotomy(dir);
    criterion_5(dir, &cat, &d, &mut r);
    criterion_7(dir, &d, &mut r);
    criterion_8(dir, &d, d_secs, &mut r);
    criterion_9(dir, &mut r);

    println!("{} of 9 criteria failed", r.failures);
    if r.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! The experiment commands. Each writes its files through a [`RunWriter`]
//! and returns a summary that is also written as `summary.json`.

use rand::Rng;
use serde::Serialize;

use super::config::{ExperimentConfig, FieldChoice, ProfileSource};
use super::output::{num, warn_excluded, Csv, RunWriter, WARN_CHART, WARN_SPLIT_HYPOTHESES, WARN_UNCERTIFIED};
use crate::entropy::{
    box_count_grid, entropy_estimate_flow, entropy_estimate_map, time_changed_cloud, EntropyEstimate, EntropyGrid,
    TotokiRecord,
};
use crate::error::{Error, Result};
use crate::quadrature::Simpson;
use crate::recurrence::{
    ball_measure_bound_check, gap_recurrence, lebesgue_ball_measure, recurrence_constant_within, EmpiricalRecurrence,
};
use crate::rng::stream_rng;
use crate::speed::{build_flat_profile, default_shell_gap, mollifier_h, FlatProfile, SpeedField, SpeedKind};
use crate::suspension::{SuspensionFlow, SuspensionPoint};
use crate::time_change::{
    expected_gamma_trace, orbit_equivalence_check, pushforward_density, radial_density_integral, AdditiveClock,
    Estimate, TimeChangedFlow, DIVERGENCE_CAP,
};
use crate::torus::{BaseMap, BaseMapSpec, TorusPoint};

/// Stream tags keeping the samples of different stages independent.
const STREAM_TRIALS: u64 = 1 << 48;
const STREAM_CENTERS: u64 = 2 << 48;
const STREAM_WITNESS: u64 = 3 << 48;
const STREAM_MASS: u64 = 4 << 48;

/// Runs `body`, then writes the manifest whatever the outcome.
pub fn run<T: Serialize>(mut writer: RunWriter, body: impl FnOnce(&mut RunWriter) -> Result<T>) -> Result<T> {
    let out = body(&mut writer).and_then(|summary| {
        writer.write_json("summary.json", &summary)?;
        Ok(summary)
    });
    writer.finish(out.as_ref().err())?;
    out
}

/// The flat profile of the config, recording the sequences it used.
pub fn flat_profile(cfg: &ExperimentConfig, w: &mut RunWriter) -> Result<FlatProfile> {
    let profile = match &cfg.flat.profile {
        ProfileSource::Geometric { ratio, len } => FlatProfile::geometric(*ratio, *len)?,
        ProfileSource::Explicit { betas } => FlatProfile::new(betas.clone(), 1e-14)?,
        ProfileSource::Recurrence { i0, len } => {
            let map = cfg.map()?;
            let js: Vec<usize> = (1..=*len).map(|i| i0 + i).collect();
            let ls: Vec<u64> = match &map {
                BaseMap::Rotation(angles) if angles.len() == 1 => js
                    .iter()
                    .map(|j| gap_recurrence(angles[0], 1.0 / *j as f64, cfg.recurrence.horizon))
                    .collect::<Result<_>>()?,
                BaseMap::Rotation(_) => js
                    .iter()
                    .map(|j| {
                        let eps = 1.0 / *j as f64;
                        recurrence_constant_within(&map, eps, 0.25 * eps, cfg.recurrence.horizon).map(|r| r.l)
                    })
                    .collect::<Result<_>>()?,
                BaseMap::ToralAutomorphism(_) => {
                    w.warn(WARN_UNCERTIFIED);
                    let rec = EmpiricalRecurrence::measure(
                        &map,
                        &cfg.recurrence.epsilons,
                        cfg.recurrence.pairs,
                        cfg.recurrence.horizon,
                        cfg.seed,
                    )?;
                    js.iter().map(|j| rec.l(1.0 / *j as f64)).collect()
                }
            };
            let (profile, adjusted) = build_flat_profile(|j| ls[j - i0 - 1], default_shell_gap, *i0, *len)?;
            let d = &mut w.manifest.derived;
            d.l_values = js.iter().zip(&ls).map(|(j, l)| (1.0 / *j as f64, *l)).collect();
            d.l_sequence = js.iter().map(|j| default_shell_gap(*j)).collect();
            d.adjusted_betas = adjusted;
            profile
        }
    };
    w.manifest.derived.betas = profile.record().betas;
    Ok(profile)
}

fn field_of(cfg: &ExperimentConfig, kind: SpeedKind) -> Result<SpeedField> {
    SpeedField::new(kind, cfg.flow()?, cfg.stopped_point(), cfg.field.chart_radius)
}

fn choice_flow(cfg: &ExperimentConfig, choice: &FieldChoice, w: &mut RunWriter) -> Result<(String, TimeChangedFlow)> {
    Ok(match choice {
        FieldChoice::Constant { speed } => {
            let field = SpeedField::constant(*speed, cfg.flow()?)?;
            (format!("constant_{speed}"), TimeChangedFlow::for_speed(&field))
        }
        FieldChoice::Quadratic => {
            ("quadratic".into(), TimeChangedFlow::for_speed(&field_of(cfg, SpeedKind::QuadraticAtP)?))
        }
        FieldChoice::Flat { floor } => {
            let profile = flat_profile(cfg, w)?;
            let f = field_of(cfg, SpeedKind::FlatAtP { profile, floor: *floor })?;
            (format!("flat_{floor}"), TimeChangedFlow::for_speed(&f))
        }
    })
}

fn unit_flow(flow: &SuspensionFlow) -> Result<TimeChangedFlow> {
    TimeChangedFlow::new(AdditiveClock::constant(flow.clone(), 1.0)?, 1e-12, 1e6)
}

fn random_point(map: &BaseMap, seed: u64, stream: u64) -> SuspensionPoint {
    let mut rng = stream_rng(seed, stream);
    let x: Vec<f64> = (0..map.dim()).map(|_| rng.gen()).collect();
    SuspensionPoint::new(TorusPoint::new(x), rng.gen())
}

fn write_estimate(w: &mut RunWriter, label: &str, grid: &EntropyGrid, est: &EntropyEstimate) -> Result<()> {
    w.write(&format!("{label}_grid.csv"), &grid.to_csv())?;
    w.write_json(&format!("{label}_estimate.json"), est)
}

#[derive(Debug, Clone, Serialize)]
pub struct FlatFnSummary {
    pub zero_for_nonpositive_t: bool,
    pub one_on_one_two: bool,
    pub shells_pass: bool,
    /// Finite-difference derivatives at `t = 10^{-j}` shrink with `j` for every order.
    pub derivatives_decrease: bool,
}

/// `k`-th central difference quotient with step `h`.
fn central_difference(f: impl Fn(f64) -> f64, t: f64, k: usize, h: f64) -> f64 {
    let mut binom = 1.0;
    let mut acc = 0.0;
    for i in 0..=k {
        let sign = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom * f(t + (i as f64 - 0.5 * k as f64) * h);
        binom = binom * (k - i) as f64 / (i + 1) as f64;
    }
    acc / h.powi(k as i32)
}

pub fn cmd_flatfn(cfg: &ExperimentConfig, w: RunWriter) -> Result<FlatFnSummary> {
    cfg.validate()?;
    run(w, |w| {
        let profile = flat_profile(cfg, w)?;
        let ff = &cfg.flatfn;
        let mut ts: Vec<f64> = vec![-1.0, -0.5, -0.1, -1e-3, 0.0];
        let steps = ff.decades as usize * ff.points_per_decade;
        ts.extend((0..=steps).map(|k| 10f64.powf(-(ff.decades as f64) + k as f64 / ff.points_per_decade as f64)));
        ts.extend([1.25, 1.5, 1.75, 2.0]);
        let mut csv = Csv::new(&["t", "eta", "d1", "d2", "d3", "d4"]);
        let (mut zero, mut one) = (true, true);
        for &t in &ts {
            let e = profile.eta(t)?;
            let mut cells = vec![num(t), num(e)];
            for k in 1..=4 {
                cells.push(num(profile.eta_derivative(t, k)?));
            }
            if t <= 0.0 {
                zero &= e == 0.0;
            }
            if t >= 1.0 {
                one &= e == 1.0;
            }
            csv.row(&cells);
        }
        w.write_csv("eta.csv", &csv)?;

        // shell k is (α_{k+1}, α_k]; the k = 0 shell reaches into the blend,
        // so it is checked on the raw series
        let h1 = mollifier_h(1.0);
        let mut shells = Csv::new(&["shell", "t_min", "t_max", "function", "max_value", "bound", "pass"]);
        let mut shells_pass = true;
        for k in 0..=ff.shells {
            let (lo, hi) = (FlatProfile::alpha(k + 1), FlatProfile::alpha(k));
            let bound = profile.beta(k as i64) * h1 / 2f64.powi(k as i32);
            let n = ff.points_per_shell;
            let mut max = 0.0f64;
            for m in 1..=n {
                let t = lo * (hi / lo).powf(m as f64 / n as f64);
                let v = if k == 0 { profile.series(t) } else { profile.eta(t)? };
                max = max.max(v);
            }
            let pass = max < bound;
            shells_pass &= pass;
            let func = if k == 0 { "series" } else { "eta" };
            shells.row(&[k.to_string(), num(lo), num(hi), func.into(), num(max), num(bound), pass.to_string()]);
        }
        w.write_csv("shells.csv", &shells)?;

        let mut der = Csv::new(&["j", "t", "order", "finite_difference", "series"]);
        let mut decrease = true;
        let mut prev = [f64::INFINITY; 5];
        for j in 1..=ff.decades {
            let t = 10f64.powi(-(j as i32));
            for k in 1..=4 {
                let fd = central_difference(|s| profile.eta(s).unwrap_or(0.0), t, k, t / 8.0);
                decrease &= fd.abs() <= prev[k];
                prev[k] = fd.abs();
                der.row(&[j.to_string(), num(t), k.to_string(), num(fd), num(profile.eta_derivative(t, k)?)]);
            }
        }
        w.write_csv("derivatives.csv", &der)?;
        w.mark("flatfn");
        Ok(FlatFnSummary {
            zero_for_nonpositive_t: zero,
            one_on_one_two: one,
            shells_pass,
            derivatives_decrease: decrease,
        })
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropySummary {
    pub map_entropy: f64,
    pub known_entropy: Option<f64>,
    pub suspension_entropy: Option<f64>,
    /// Suspension estimate over map estimate.
    pub suspension_ratio: Option<f64>,
    /// `R_map ≤ R̃ ≤ k(ε)·R_map` on every computed cell.
    pub box_sandwich_holds: Option<bool>,
    pub time_changes: Vec<(String, f64)>,
}

pub fn cmd_entropy(cfg: &ExperimentConfig, w: RunWriter) -> Result<EntropySummary> {
    cfg.validate()?;
    run(w, |w| {
        let map = cfg.map()?;
        let params = cfg.grid.params();
        let sampler = cfg.samples.sampler();
        let cloud = sampler.base_samples(&map, cfg.samples.cloud_size, cfg.seed, 0);
        let (grid, est) = entropy_estimate_map(&map, &cloud, &params)?;
        write_estimate(w, "map", &grid, &est)?;
        w.mark("map");
        let mut summary = EntropySummary {
            map_entropy: est.extrapolated,
            known_entropy: map.known_entropy(),
            suspension_entropy: None,
            suspension_ratio: None,
            box_sandwich_holds: None,
            time_changes: Vec::new(),
        };
        if cfg.entropy.suspension {
            let flow = cfg.flow()?;
            let psi = unit_flow(&flow)?;
            let scloud = sampler.suspension_samples(&map, cfg.samples.cloud_size, cfg.seed, 0);
            let (sgrid, sest) = entropy_estimate_flow(&psi, &scloud, &params, cfg.grid.time_step)?;
            write_estimate(w, "suspension", &sgrid, &sest)?;
            let boxes = box_count_grid(&map, &scloud, &params)?;
            let mut csv = Csv::new(&["n", "eps", "map_count", "box_count", "k", "sandwich"]);
            let mut holds = true;
            for (eps, row) in params.eps_values.iter().zip(&boxes) {
                for (n, b) in params.n_values.iter().zip(row) {
                    if let Some(b) = b {
                        let ok = b.map_count <= b.box_count && b.box_count <= b.k * b.map_count;
                        holds &= ok;
                        csv.row(&[
                            n.to_string(),
                            num(*eps),
                            b.map_count.to_string(),
                            b.box_count.to_string(),
                            b.k.to_string(),
                            ok.to_string(),
                        ]);
                    }
                }
            }
            w.write_csv("box_counts.csv", &csv)?;
            summary.suspension_entropy = Some(sest.extrapolated);
            summary.suspension_ratio = Some(sest.extrapolated / est.extrapolated);
            summary.box_sandwich_holds = Some(holds);
            w.mark("suspension");
        }
        for choice in &cfg.entropy.time_changes {
            let (label, phi) = choice_flow(cfg, choice, w)?;
            let tcloud = time_changed_cloud(&phi, cfg.samples.cloud_size, cfg.seed)?;
            let (g, e) = entropy_estimate_flow(&phi, &tcloud, &params, cfg.grid.time_step)?;
            if e.dropped > 0 {
                w.warn(warn_excluded(e.dropped, &label));
            }
            write_estimate(w, &label, &g, &e)?;
            summary.time_changes.push((label.clone(), e.extrapolated));
            w.mark(&label);
        }
        Ok(summary)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RecurrenceSummary {
    pub certified: bool,
    /// `(ε, L)` in config order.
    pub l_values: Vec<(f64, u64)>,
    /// `L(ε₁) ≥ L(ε₂)` whenever `ε₁ < ε₂`.
    pub monotone: bool,
    pub ball_bound_holds: Option<bool>,
}

pub fn cmd_recurrence(cfg: &ExperimentConfig, w: RunWriter) -> Result<RecurrenceSummary> {
    cfg.validate()?;
    run(w, |w| {
        let map = cfg.map()?;
        let rc = &cfg.recurrence;
        let mut csv = Csv::new(&[
            "epsilon",
            "l",
            "certified",
            "grid_bound",
            "gap_oracle",
            "ball_measure",
            "inverse_l",
            "above_inverse_l",
            "ball_check",
        ]);
        let mut l_values = Vec::new();
        let mut ball_ok = true;
        let certified = map.is_isometry();
        if certified {
            for (e, &eps) in rc.epsilons.iter().enumerate() {
                let report = recurrence_constant_within(&map, eps, rc.grid_resolution, rc.horizon)?;
                let gap = match &cfg.base_map {
                    BaseMapSpec::Rotation { angles } if angles.len() == 1 => {
                        Some(gap_recurrence(angles[0], eps, rc.horizon)?)
                    }
                    _ => None,
                };
                let centers: Vec<TorusPoint> = (0..rc.ball_centers as u64)
                    .map(|k| random_point(&map, cfg.seed, STREAM_CENTERS + ((e as u64) << 24) + k).base)
                    .collect();
                let check = ball_measure_bound_check(&map, eps, &report, &centers, rc.orbit_len, cfg.seed)?;
                let measure = lebesgue_ball_measure(map.dim(), eps);
                let inv = check.inverse_l;
                ball_ok &= check.pass && measure >= check.bound;
                csv.row(&[
                    num(eps),
                    report.l.to_string(),
                    "certified".into(),
                    report.grid_bound.map(|b| b.to_string()).unwrap_or_default(),
                    gap.map(|g| g.to_string()).unwrap_or_default(),
                    num(measure),
                    num(inv),
                    (measure >= inv).to_string(),
                    check.pass.to_string(),
                ]);
                l_values.push((eps, report.l));
            }
        } else {
            // an automorphism fixes the origin, so no uniform L(ε) exists;
            // report entry times seen along typical orbits instead
            w.warn(WARN_UNCERTIFIED);
            let mut eps_sorted = rc.epsilons.clone();
            eps_sorted.sort_by(|a, b| b.total_cmp(a));
            eps_sorted.dedup();
            let rec = EmpiricalRecurrence::measure(&map, &eps_sorted, rc.pairs, rc.horizon, cfg.seed)?;
            for &eps in &rc.epsilons {
                let l = rec.l(eps);
                csv.row(&[
                    num(eps),
                    l.to_string(),
                    "uncertified".into(),
                    String::new(),
                    String::new(),
                    num(lebesgue_ball_measure(map.dim(), eps)),
                    num(1.0 / l.max(1) as f64),
                    String::new(),
                    String::new(),
                ]);
                l_values.push((eps, l));
            }
        }
        w.write_csv("recurrence.csv", &csv)?;
        w.manifest.derived.l_values = l_values.clone();
        let monotone = l_values.iter().all(|(e1, l1)| l_values.iter().all(|(e2, l2)| !(e1 < e2) || l1 >= l2));
        w.mark("recurrence");
        Ok(RecurrenceSummary { certified, l_values, monotone, ball_bound_holds: certified.then_some(ball_ok) })
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeChangeSummary {
    pub trials: usize,
    pub max_cocycle_residual: f64,
    pub max_round_trip: f64,
    /// Largest `|τ(1)·c − 1|` over the constant clocks.
    pub max_constant_error: f64,
}

pub fn cmd_timechange(cfg: &ExperimentConfig, w: RunWriter) -> Result<TimeChangeSummary> {
    cfg.validate()?;
    run(w, |w| {
        let map = cfg.map()?;
        let flow = cfg.flow()?;
        let (label, phi) = choice_flow(cfg, &cfg.timechange.field, w)?;
        let clock = phi.clock();
        let tc = &cfg.timechange;
        let mut csv = Csv::new(&["trial", "s", "t", "cocycle_residual", "round_trip"]);
        let mut max_res = 0.0f64;
        let mut max_rt = 0.0f64;
        let mut residuals = Vec::with_capacity(tc.trials);
        for k in 0..tc.trials as u64 {
            let q = random_point(&map, cfg.seed, STREAM_TRIALS + k);
            let mut rng = stream_rng(cfg.seed, STREAM_TRIALS + (1 << 40) + k);
            let s = rng.gen::<f64>() * tc.max_time;
            let t = rng.gen::<f64>() * tc.max_time;
            let whole = clock.theta(&q, s + t)?;
            let first = clock.theta(&q, s)?;
            let second = clock.theta(&flow.advance(&q, s), t)?;
            let res = (whole - first - second).abs();
            let rt = (phi.tau(&q, clock.theta(&q, t)?)? - t).abs();
            max_res = max_res.max(res);
            max_rt = max_rt.max(rt);
            residuals.push(res);
            csv.row(&[k.to_string(), num(s), num(t), num(res), num(rt)]);
        }
        w.write_csv("cocycle.csv", &csv)?;
        // decade bins of log10(residual), with exact zeros counted apart
        let mut hist = Csv::new(&["log10_lower", "log10_upper", "count"]);
        let zeros = residuals.iter().filter(|r| **r == 0.0).count();
        hist.row(&["-inf".into(), "-inf".into(), zeros.to_string()]);
        for d in -20..0 {
            let c = residuals.iter().filter(|r| **r > 0.0 && r.log10().floor() as i32 == d).count();
            hist.row(&[d.to_string(), (d + 1).to_string(), c.to_string()]);
        }
        w.write_csv("cocycle_histogram.csv", &hist)?;

        let mut consts = Csv::new(&["c", "theta_1", "tau_1", "tau_1_times_c"]);
        let mut max_const = 0.0f64;
        let q = random_point(&map, cfg.seed, STREAM_TRIALS - 1);
        for &c in &tc.constants {
            let f = TimeChangedFlow::new(AdditiveClock::constant(flow.clone(), c)?, 1e-12, 1e6)?;
            let th = f.clock().theta(&q, 1.0)?;
            let ta = f.tau(&q, 1.0)?;
            max_const = max_const.max((ta * c - 1.0).abs());
            consts.row(&[num(c), num(th), num(ta), num(ta * c)]);
        }
        w.write_csv("constant_clocks.csv", &consts)?;
        w.mark(&format!("timechange_{label}"));
        Ok(TimeChangeSummary {
            trials: tc.trials,
            max_cocycle_residual: max_res,
            max_round_trip: max_rt,
            max_constant_error: max_const,
        })
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DichotomySummary {
    pub h_psi: f64,
    pub h_quadratic: f64,
    /// Flat-ladder estimates, one per floor.
    pub h_flat: Vec<f64>,
    pub flat_nonincreasing: bool,
    /// Expected return time per flat floor, `+∞` once diverged.
    pub gamma_flat: Vec<Estimate>,
    /// Quadratic expected return time at the lattice and at twice its density.
    pub gamma_quadratic: (f64, f64),
    /// Circle-base analogue of the quadratic field: total mass.
    pub mass_2d: Estimate,
    /// Mass of the quadratic time change at `mass_samples` and twice as many.
    pub mass_quadratic: (f64, f64),
    pub totoki: TotokiRecord,
    pub witnesses_monotone: usize,
}

/// Base points of a lattice with `side` points per axis, at cell centers.
fn lattice(dim: usize, side: usize) -> Vec<TorusPoint> {
    let total = side.pow(dim as u32);
    (0..total)
        .map(|mut k| {
            let mut c = vec![0.0; dim];
            for v in c.iter_mut() {
                *v = ((k % side) as f64 + 0.5) / side as f64;
                k /= side;
            }
            TorusPoint::new(c)
        })
        .collect()
}

fn mass_samples(map: &BaseMap, n: usize, seed: u64) -> Vec<SuspensionPoint> {
    (0..n as u64).map(|k| random_point(map, seed, STREAM_MASS + k)).collect()
}

pub fn cmd_dichotomy(cfg: &ExperimentConfig, w: RunWriter) -> Result<DichotomySummary> {
    cfg.validate()?;
    let map = cfg.map()?;
    if map.is_isometry() {
        return Err(Error::Config { field: "base_map".into(), message: "dichotomy needs a toral automorphism".into() });
    }
    run(w, |w| {
        w.warn(WARN_SPLIT_HYPOTHESES);
        w.warn(WARN_CHART);
        let flow = cfg.flow()?;
        let params = cfg.grid.params();
        let s = &cfg.samples;
        let profile = flat_profile(cfg, w)?;
        let quad = field_of(cfg, SpeedKind::QuadraticAtP)?;
        let flat = field_of(cfg, SpeedKind::FlatAtP { profile, floor: 0.0 })?;
        let mut csv = Csv::new(&["flow", "index", "floor", "mass", "entropy", "stderr", "dropped"]);
        w.write_csv("entropy.csv", &csv)?;

        let psi = unit_flow(&flow)?;
        let cloud = cfg.samples.sampler().suspension_samples(&map, s.cloud_size, cfg.seed, 0);
        let (_, e_psi) = entropy_estimate_flow(&psi, &cloud, &params, cfg.grid.time_step)?;
        csv.row(&[
            "psi".into(),
            "0".into(),
            num(1.0),
            num(1.0),
            num(e_psi.extrapolated),
            num(e_psi.stderr()),
            "0".into(),
        ]);
        w.write_csv("entropy.csv", &csv)?;
        w.mark("entropy_psi");

        let hat = TimeChangedFlow::for_speed(&quad);
        let hat_cloud = time_changed_cloud(&hat, s.cloud_size, cfg.seed)?;
        let (_, e_hat) = entropy_estimate_flow(&hat, &hat_cloud, &params, cfg.grid.time_step)?;
        let k_hat = radial_density_integral(&quad, 0.0)?;
        csv.row(&[
            "quadratic".into(),
            "0".into(),
            num(0.0),
            num(k_hat.as_f64()),
            num(e_hat.extrapolated),
            num(e_hat.stderr()),
            e_hat.dropped.to_string(),
        ]);
        w.write_csv("entropy.csv", &csv)?;
        if e_hat.dropped > 0 {
            w.warn(warn_excluded(e_hat.dropped, "quadratic"));
        }
        w.mark("entropy_quadratic");

        let mut h_flat = Vec::new();
        for (i, &floor) in cfg.flat.floors.iter().enumerate() {
            let f = flat.with_floor(floor)?;
            let k = radial_density_integral(&f, 0.0)?;
            let phi = TimeChangedFlow::for_speed(&f);
            let c = time_changed_cloud(&phi, s.cloud_size, cfg.seed)?;
            let (_, e) = entropy_estimate_flow(&phi, &c, &params, cfg.grid.time_step)?;
            if e.dropped > 0 {
                w.warn(warn_excluded(e.dropped, &format!("flat index {}", i + 1)));
            }
            csv.row(&[
                "flat".into(),
                (i + 1).to_string(),
                num(floor),
                num(k.as_f64()),
                num(e.extrapolated),
                num(e.stderr()),
                e.dropped.to_string(),
            ]);
            w.write_csv("entropy.csv", &csv)?;
            h_flat.push(e.extrapolated);
        }
        w.mark("entropy_flat");

        // expected return times over a lattice of base points
        let quadrature = Simpson::new(1e-10, DIVERGENCE_CAP);
        let base = lattice(map.dim(), s.gamma_lattice);
        let dense = lattice(map.dim(), 2 * s.gamma_lattice);
        let mut gcsv = Csv::new(&["field", "index", "floor", "samples", "expected_gamma", "diverged"]);
        let mut gamma_flat = Vec::new();
        for (i, &floor) in cfg.flat.floors.iter().enumerate() {
            let g = expected_gamma_trace(&flat.with_floor(floor)?, &base, &quadrature)?.mean;
            gcsv.row(&[
                "flat".into(),
                (i + 1).to_string(),
                num(floor),
                base.len().to_string(),
                num(g.as_f64()),
                g.is_diverged().to_string(),
            ]);
            gamma_flat.push(g);
        }
        let mut gq = [0.0; 2];
        for (j, pts) in [&base, &dense].into_iter().enumerate() {
            let g = expected_gamma_trace(&quad, pts, &quadrature)?.mean;
            gcsv.row(&[
                "quadratic".into(),
                "0".into(),
                num(0.0),
                pts.len().to_string(),
                num(g.as_f64()),
                g.is_diverged().to_string(),
            ]);
            gq[j] = g.as_f64();
        }
        w.write_csv("gamma.csv", &gcsv)?;

        // the same quadratic field over a circle base: the mass near p grows
        // like ln(1/cutoff)
        let circle = SuspensionFlow::new(BaseMap::golden_rotation());
        let p2 = SuspensionPoint::new(TorusPoint::new(vec![cfg.field.stopped_base[0]]), cfg.field.stopped_height);
        let quad2 = SpeedField::new(SpeedKind::QuadraticAtP, circle, p2, cfg.field.chart_radius)?;
        let mut c2 = Csv::new(&["cutoff", "mass"]);
        for j in 1..=12 {
            let cut = 10f64.powi(-j);
            c2.row(&[num(cut), num(radial_density_integral(&quad2, cut)?.as_f64())]);
        }
        let mass_2d = radial_density_integral(&quad2, 0.0)?;
        c2.row(&[num(0.0), num(mass_2d.as_f64())]);
        w.write_csv("mass_2d.csv", &c2)?;
        w.mark("gamma");

        // mass of the quadratic time change and the entropy-mass balance
        let ms = mass_samples(&map, 2 * s.mass_samples, cfg.seed);
        let k1 = pushforward_density(&quad, &ms[..s.mass_samples], |_| true)?.value().ok_or(Error::DivergedMeasure)?;
        let k2 = pushforward_density(&quad, &ms, |_| true)?.value().ok_or(Error::DivergedMeasure)?;
        let totoki = TotokiRecord::from_estimates(&e_hat, &e_psi, k1);
        let mut mcsv = Csv::new(&["samples", "mass"]);
        mcsv.row(&[s.mass_samples.to_string(), num(k1)]);
        mcsv.row(&[(2 * s.mass_samples).to_string(), num(k2)]);
        w.write_csv("mass_quadratic.csv", &mcsv)?;
        w.write_json("totoki.json", &totoki)?;
        w.mark("totoki");

        // orbit equivalence of the flat and quadratic time changes
        let phi_flat = TimeChangedFlow::for_speed(&flat);
        let mut wcsv = Csv::new(&["point", "s", "t", "psi_time", "distance"]);
        let mut monotone = 0;
        for k in 0..s.witness_points as u64 {
            let q = random_point(&map, cfg.seed, STREAM_WITNESS + k);
            let rows = orbit_equivalence_check(&phi_flat, &hat, &q, s.witness_horizon, s.witness_samples, 1e-6)?;
            if rows.windows(2).all(|r| r[1].t > r[0].t && r[1].psi_time >= r[0].psi_time) {
                monotone += 1;
            }
            for r in rows {
                wcsv.row(&[k.to_string(), num(r.s), num(r.t), num(r.psi_time), num(r.distance)]);
            }
        }
        w.write_csv("witness.csv", &wcsv)?;
        w.mark("witness");

        Ok(DichotomySummary {
            h_psi: e_psi.extrapolated,
            h_quadratic: e_hat.extrapolated,
            flat_nonincreasing: h_flat.windows(2).all(|v| v[1] <= v[0]),
            h_flat,
            gamma_flat,
            gamma_quadratic: (gq[0], gq[1]),
            mass_2d,
            mass_quadratic: (k1, k2),
            totoki,
            witnesses_monotone: monotone,
        })
    })
}

//! Acceptance checks. Runs every criterion in sequence, prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use cruise_core::channel::{self, BandConfig, LinkGeometry, PropagationConstants};
use cruise_core::config::{BandSpec, ExperimentConfig};
use cruise_core::pbvi::{self, Policy, StageReport};
use cruise_core::pomdp::{belief_update, PomdpModel};
use cruise_core::sim::{self, Agent, Environment, EvalOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Exp1;

struct Outcome {
    pass: bool,
    detail: String,
}

struct Solved {
    model: Arc<PomdpModel>,
    policy: Arc<Policy>,
    stages: Vec<StageReport>,
    elapsed: Duration,
}

/// Solves shared between criteria. Each criterion charges itself for the
/// solves it uses, whether or not they were already cached.
#[derive(Default)]
struct Ctx {
    solves: HashMap<(String, u64), Arc<Solved>>,
}

const BANDS: [(&str, Option<usize>); 4] = [("sm", None), ("f15", Some(0)), ("f39", Some(1)), ("f60", Some(2))];

impl Ctx {
    fn solved(&mut self, cfg: &ExperimentConfig, label: &str, channel: Option<usize>, p: f64) -> Arc<Solved> {
        let key = (label.to_string(), p.to_bits());
        if let Some(s) = self.solves.get(&key) {
            return s.clone();
        }
        let t = Instant::now();
        let channels = channel.map(|c| vec![c]);
        let model = cfg.build_model(p, channels.as_deref()).unwrap();
        let out = pbvi::solve_detailed(&model, &model.initial_belief(), &cfg.solver_config(), true);
        let s = Arc::new(Solved {
            model: Arc::new(model),
            policy: Arc::new(out.policy),
            stages: out.stages,
            elapsed: t.elapsed(),
        });
        self.solves.insert(key, s.clone());
        s
    }
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn gain_oracle_equivalence(_: &mut Ctx) -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0x6a1);
    let consts = PropagationConstants::default();
    let mut worst: f64 = 0.0;
    let mut tiny = 0;
    let cases = 10_000;
    for i in 0..cases {
        let f = rng.random_range(10e9..70e9);
        let lambda = common::C / f;
        let band = BandConfig {
            index: 0,
            frequency_hz: f,
            bandwidth_hz: 1e8,
            n_y: rng.random_range(1..=20),
            n_z: rng.random_range(1..=20),
            d_y_m: lambda * rng.random_range(0.3..0.7),
            d_z_m: lambda * rng.random_range(0.3..0.7),
            noise_variance_w: 1e-12,
        };
        let half = std::f64::consts::FRAC_PI_2 * 0.999;
        let theta = rng.random_range(-half..half);
        let phi = rng.random_range(-half..half);
        let (theta_hat, phi_hat) = match i % 4 {
            0 => (theta, phi),
            1 => {
                // nudge so that 0 < |Δψ| < 1e-8
                let dt = rng.random_range(1e-12..1e-9) * if rng.random() { 1.0 } else { -1.0 };
                (theta + dt, phi + rng.random_range(-1e-10..1e-10))
            }
            _ => (rng.random_range(-half..half), rng.random_range(-half..half)),
        };
        let (psi, _) = band.spatial_angles(theta, phi);
        let (psi_h, _) = band.spatial_angles(theta_hat, phi_hat);
        if (psi - psi_h).abs() < 1e-8 {
            tiny += 1;
        }
        let r = rng.random_range(5.0..200.0);
        let closed = channel::gain(
            &consts,
            &band,
            &LinkGeometry {
                r,
                theta,
                phi,
                theta_hat,
                phi_hat,
            },
        );
        let direct = common::direct_gain(&consts, &band, r, theta, phi, theta_hat, phi_hat);
        worst = worst.max(relative(closed, direct));
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: worst < 1e-9 && tiny > 0 && secs < 10.0,
        detail: format!("{cases} cases, {tiny} with |Δψ| < 1e-8, max rel err {worst:.2e}, {secs:.1} s"),
    }
}

fn observation_soundness(_: &mut Ctx) -> Outcome {
    let t = Instant::now();
    let cfg = ExperimentConfig::default();
    let model = cfg.build_model(0.5, None).unwrap();
    let mut worst_row: f64 = 0.0;
    for a in 0..model.num_actions() {
        for u in 0..model.num_cells() {
            let s: f64 = model.obs_row_for_cell(a, u).iter().sum();
            worst_row = worst_row.max((s - 1.0).abs());
        }
    }
    let thresholds = cfg.thresholds().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(0x0b5);
    let samples = 1_000_000u64;
    let mut outside = Vec::new();
    let mut checked = 0;
    for case in 0..20 {
        let sigma_sq = 10f64.powf(rng.random_range(-14.0..-11.0));
        let mean_snr_db = rng.random_range(-40.0..70.0);
        let g = sigma_sq * 10f64.powf(mean_snr_db / 10.0);
        let band = BandConfig {
            index: 0,
            frequency_hz: 1e10,
            bandwidth_hz: 1e8,
            n_y: 1,
            n_z: 1,
            d_y_m: 0.015,
            d_z_m: 0.015,
            noise_variance_w: sigma_sq,
        };
        let probs = channel::observation_probs(&band, g, &thresholds).unwrap();
        worst_row = worst_row.max((probs.iter().sum::<f64>() - 1.0).abs());
        let mut counts = vec![0u64; probs.len()];
        for _ in 0..samples {
            let e: f64 = rng.sample(Exp1);
            let snr = g / (sigma_sq * e);
            let bin = thresholds.iter().take_while(|&&th| th <= snr).count();
            counts[bin] += 1;
        }
        for (z, (&k, &p)) in counts.iter().zip(&probs).enumerate() {
            checked += 1;
            if !common::within_binomial_3sigma(k, samples, p) {
                outside.push(format!("case {case} bin {z}: {k} vs {:.1}", p * samples as f64));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: worst_row <= 1e-12 && outside.is_empty() && secs < 30.0,
        detail: format!(
            "max |row sum - 1| {worst_row:.1e}, {} of {checked} bins outside 3σ {:?}, {secs:.1} s",
            outside.len(),
            outside
        ),
    }
}

fn belief_simplex(_: &mut Ctx) -> Outcome {
    let cfg = ExperimentConfig::default();
    let model = cfg.build_model(0.5, None).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(0xbe1);
    let pick = |w: &mut dyn Iterator<Item = f64>, rng: &mut ChaCha20Rng| -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, x) in w.enumerate() {
            if x > 0.0 {
                acc += x;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    };
    let mut b = model.initial_belief();
    let mut s = pick(&mut b.as_slice().iter().copied(), &mut rng);
    let mut simplex = 0;
    let mut support = 0;
    let steps = 100_000;
    for _ in 0..steps {
        let a = rng.random_range(0..model.num_actions());
        let z = pick(&mut model.obs_row_for_cell(a, model.states.last_cell(s)).iter().copied(), &mut rng);
        let next = belief_update(&model, &b, a, z).unwrap();
        let v = next.as_slice();
        let sum: f64 = v.iter().sum();
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-12 {
            simplex += 1;
        }
        for (j, &q) in v.iter().enumerate() {
            if q > 0.0 {
                let reachable = b
                    .support()
                    .any(|(i, p)| p * model.obs(i, a, z) > 0.0 && model.states.shift_compatible(i, j) && model.transition.get(i, j) > 0.0);
                if !reachable {
                    support += 1;
                }
            }
        }
        s = pick(&mut (0..model.num_states()).map(|j| model.transition.get(s, j)), &mut rng);
        b = next;
    }
    Outcome {
        pass: simplex == 0 && support == 0,
        detail: format!("{steps} steps, {simplex} simplex violations, {support} support violations"),
    }
}

fn monotone_lower_bound(ctx: &mut Ctx) -> Outcome {
    let cfg = ExperimentConfig::default();
    let s = ctx.solved(&cfg, "sm", None, 0.5);
    let (m, p) = (&s.model, &s.policy);
    let mut decreases = 0;
    let mut worst: f64 = 0.0;
    let mut sweeps = 0;
    let mut check = |prev: f64, next: f64| {
        if next < prev - 1e-12 {
            decreases += 1;
            worst = worst.max(prev - next);
        }
    };
    for (k, stage) in s.stages.iter().enumerate() {
        for w in stage.value_history.windows(2) {
            sweeps += 1;
            for (a, b) in w[0].iter().zip(&w[1]) {
                check(*a, *b);
            }
        }
        // points carried into the next stage keep their values
        if let (Some(last), Some(next)) = (stage.value_history.last(), s.stages.get(k + 1).and_then(|n| n.value_history.first())) {
            for (a, b) in last.iter().zip(next) {
                check(*a, *b);
            }
        }
    }
    Outcome {
        pass: decreases == 0 && m.num_states() == 46 && m.num_actions() == 36 && m.num_observations() == 25,
        detail: format!(
            "{}x{}x{} model, {sweeps} sweeps over {} beliefs, {decreases} decreases (worst {worst:.2e})",
            m.num_states(),
            m.num_actions(),
            m.num_observations(),
            p.metadata.belief_count
        ),
    }
}

fn toy_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.scene.num_cells = 3;
    cfg.bands = vec![BandSpec {
        frequency_hz: 60e9,
        bandwidth_hz: 100e6,
    }];
    cfg.mobility.window = 1;
    cfg.solver.discount = 0.95;
    cfg
}

fn small_instance_optimality(_: &mut Ctx) -> Outcome {
    let t = Instant::now();
    let cfg = toy_config();
    let model = cfg.build_model(0.5, None).unwrap();
    let policy = pbvi::solve(&model, &model.initial_belief(), &cfg.solver_config());
    let horizon = 100;
    let grid = common::grid_value_iteration(&model, 50, horizon, model.initial_belief().as_slice());
    let (sim, se) = common::simulated_discounted_return(&model, &policy, 20_000, horizon, 0x70e);
    let gap = (grid - sim).abs() / grid.abs();
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: gap <= 0.02 && secs < 120.0,
        detail: format!(
            "grid VI {:.4e}, PBVI simulated {:.4e} ± {:.1e}, gap {:.2}%, {secs:.1} s",
            grid,
            sim,
            se,
            100.0 * gap
        ),
    }
}

fn perfect_info_ratio(cfg: &ExperimentConfig, hi: usize, lo: usize) -> (f64, f64, f64) {
    let env = Environment::from_config(cfg, 0.5).unwrap();
    let a = env.perfect_information_rate(hi).unwrap();
    let b = env.perfect_information_rate(lo).unwrap();
    (a, b, a / b - 1.0)
}

fn channel_ratio(_: &mut Ctx) -> Outcome {
    let t = Instant::now();
    let (r60, r39, x) = perfect_info_ratio(&ExperimentConfig::default(), 2, 1);
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: (0.09..=0.13).contains(&x) && secs < 1.0,
        detail: format!(
            "60 GHz {:.1} Mbps vs 39 GHz {:.1} Mbps: +{:.2}% (target 11 ± 2), {secs:.2} s",
            r60 / 1e6,
            r39 / 1e6,
            100.0 * x
        ),
    }
}

fn equal_bandwidth(_: &mut Ctx) -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.bands[0].bandwidth_hz = 100e6;
    let (r15, r39, x) = perfect_info_ratio(&cfg, 0, 1);
    Outcome {
        pass: (0.09..=0.13).contains(&x),
        detail: format!(
            "15 GHz at 100 MHz {:.1} Mbps vs 39 GHz {:.1} Mbps: +{:.2}% (target 11 ± 2)",
            r15 / 1e6,
            r39 / 1e6,
            100.0 * x
        ),
    }
}

fn agents_at(ctx: &mut Ctx, cfg: &ExperimentConfig, p: f64) -> (Vec<Agent>, Duration) {
    let mut agents = Vec::new();
    let mut solve_time = Duration::ZERO;
    for (label, ch) in BANDS {
        let s = ctx.solved(cfg, label, ch, p);
        solve_time += s.elapsed;
        agents.push(Agent::policy(label, s.model.clone(), s.policy.clone()));
    }
    (agents, solve_time)
}

fn random_walk_opts(cfg: &ExperimentConfig) -> EvalOptions {
    EvalOptions {
        num_trials: 500,
        seed: cfg.simulation.seed,
        confidence: 0.95,
        keep_traces: false,
        record_belief: false,
    }
}

fn dominance(ctx: &mut Ctx) -> Outcome {
    let cfg = ExperimentConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [0.35, 0.95] {
        let t = Instant::now();
        let (agents, solve_time) = agents_at(ctx, &cfg, p);
        let env = Environment::from_config(&cfg, p).unwrap();
        let ev = sim::monte_carlo(&env, &agents, 200, &random_walk_opts(&cfg)).unwrap();
        let secs = (t.elapsed() + solve_time).as_secs_f64();
        let sm = &ev.metrics[0];
        let mut line = format!("p={p}: sm {:.1}", sm.mean_rate_bps / 1e6);
        for m in &ev.metrics[1..] {
            let ok = sm.mean_rate_bps >= m.mean_rate_bps - m.ci_half_width;
            pass &= ok;
            line += &format!(", {} {:.1}±{:.1}{}", m.agent, m.mean_rate_bps / 1e6, m.ci_half_width / 1e6, if ok { "" } else { " (!)" });
        }
        pass &= secs < 600.0;
        parts.push(format!("{line} Mbps, {secs:.0} s"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn single_band_ordering(ctx: &mut Ctx) -> Outcome {
    let cfg = ExperimentConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [0.35, 0.95] {
        let (agents, _) = agents_at(ctx, &cfg, p);
        let env = Environment::from_config(&cfg, p).unwrap();
        let ev = sim::monte_carlo(&env, &agents[1..3], 200, &random_walk_opts(&cfg)).unwrap();
        let (f15, f39) = (&ev.metrics[0], &ev.metrics[1]);
        pass &= f39.mean_rate_bps >= f15.mean_rate_bps;
        parts.push(format!("p={p}: f39 {:.1} vs f15 {:.1} Mbps", f39.mean_rate_bps / 1e6, f15.mean_rate_bps / 1e6));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

/// Per-speed means, end-to-end relative drop, and whether the series
/// trends downward: negative least-squares slope and no rise between
/// neighbours larger than their combined CI half-widths.
fn speed_series(ctx: &mut Ctx, cfg: &ExperimentConfig, p: f64) -> (Vec<(f64, f64)>, f64, bool, Duration) {
    let s = ctx.solved(cfg, "sm", None, p);
    let env = Environment::from_config(cfg, p).unwrap();
    let agents = vec![Agent::policy("sm", s.model.clone(), s.policy.clone())];
    let opts = random_walk_opts(cfg);
    let mut pts = Vec::new();
    for &v in &cfg.simulation.speed_grid_kmh {
        let ev = sim::fixed_path_eval(&env, &agents, v, cfg.simulation.slot_s, cfg.simulation.max_fixed_path_slots, &opts).unwrap();
        pts.push((ev.metrics[0].mean_rate_bps, ev.metrics[0].ci_half_width));
    }
    let n = pts.len() as f64;
    let xs = &cfg.simulation.speed_grid_kmh;
    let mx = xs.iter().sum::<f64>() / n;
    let my = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let slope = xs.iter().zip(&pts).map(|(x, p)| (x - mx) * (p.0 - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let steady = pts.windows(2).all(|w| w[1].0 <= w[0].0 + w[0].1 + w[1].1);
    let first = pts[0].0;
    let last = pts[pts.len() - 1].0;
    (pts, (first - last) / first, slope < 0.0 && steady, s.elapsed)
}

fn robustness_trend(ctx: &mut Ctx) -> Outcome {
    let t = Instant::now();
    let cfg = ExperimentConfig::default();
    let (hi_pts, hi_drop, hi_trend, t1) = speed_series(ctx, &cfg, 0.95);
    let (lo_pts, lo_drop, _, t2) = speed_series(ctx, &cfg, 0.35);
    let secs = (t.elapsed() + t1 + t2).as_secs_f64();
    let fmt = |pts: &[(f64, f64)]| pts.iter().map(|p| format!("{:.0}", p.0 / 1e6)).collect::<Vec<_>>().join("/");
    Outcome {
        pass: hi_trend && (0.08..=0.16).contains(&hi_drop) && lo_drop < hi_drop && secs < 900.0,
        detail: format!(
            "p=0.95 drop {:.1}% [{}], p=0.35 drop {:.1}% [{}] Mbps, {secs:.0} s",
            100.0 * hi_drop,
            fmt(&hi_pts),
            100.0 * lo_drop,
            fmt(&lo_pts)
        ),
    }
}

fn utilization(ctx: &mut Ctx) -> Outcome {
    let cfg = ExperimentConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [0.5, 0.65, 0.95] {
        let s = ctx.solved(&cfg, "sm", None, p);
        let env = Environment::from_config(&cfg, p).unwrap();
        let agents = vec![Agent::policy("sm", s.model.clone(), s.policy.clone())];
        let ev = sim::monte_carlo(&env, &agents, 200, &random_walk_opts(&cfg)).unwrap();
        let u15 = ev.metrics[0].utilization[0];
        pass &= if p < 0.9 { (0.05..=0.30).contains(&u15) } else { u15 < 0.05 };
        parts.push(format!("p={p}: {:.1}%", 100.0 * u15));
    }
    Outcome {
        pass,
        detail: format!("15 GHz utilization {}", parts.join(", ")),
    }
}

type Check = fn(&mut Ctx) -> Outcome;

fn main() {
    let checks: [(&str, &str, Check); 11] = [
        ("1", "gain oracle equivalence", gain_oracle_equivalence),
        ("2", "observation model soundness", observation_soundness),
        ("3", "belief simplex and support", belief_simplex),
        ("4", "PBVI monotone lower bound", monotone_lower_bound),
        ("5", "small-instance optimality", small_instance_optimality),
        ("6", "perfect-information 60 vs 39 GHz", channel_ratio),
        ("7", "equal-bandwidth 15 vs 39 GHz", equal_bandwidth),
        ("8", "spectrum-mobility dominance", dominance),
        ("8*", "single-band ordering 39 >= 15 GHz", single_band_ordering),
        ("9", "robustness trend over speed", robustness_trend),
        ("10", "15 GHz utilization", utilization),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut ctx = Ctx::default();
    let mut failed = Vec::new();
    for (id, name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let res = panic::catch_unwind(AssertUnwindSafe(|| check(&mut ctx)));
        let (pass, detail) = match res {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("panicked: {}", e.downcast_ref::<String>().cloned().unwrap_or_default())),
        };
        println!("[{}] criterion {id}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}

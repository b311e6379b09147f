//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exact and property criteria (1-4, 9, 10) fail the process when violated.
//! The empirical training criteria (5-8) report PASS/FAIL but only fail the
//! process under `VHO_STRICT_ACCEPTANCE=1`.
//!
//! Scale knobs:
//! - `VHO_ACCEPTANCE_EPISODES` (default 150): training episodes per seed for 5-7.
//! - `VHO_ACCEPTANCE_SEEDS` (default 5): seeds for 5-7.
//! - `VHO_ACCEPTANCE_GRID_EPISODES` (default 8): episodes per grid cell for 8.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vho_core::agents::distributional::{categorical_project, Support};
use vho_core::agents::policy::{entropy, kl_categorical};
use vho_core::agents::replay::{Experience, PrioritizedBuffer};
use vho_core::agents::rollout::compute_advantages;
use vho_core::agents::sac::{sac_policy_loss, sac_value_target, soft_state_value};
use vho_core::agents::trpo::conjugate_gradient;
use vho_core::agents::rainbow::RainbowNet;
use vho_core::agents::{build_agent, AgentConfig, AgentKind, TrainPlan};
use vho_core::checkpoint::Checkpoint;
use vho_core::config::{load_config, RunConfig, RESOLVED_CONFIG_FILE};
use vho_core::env::OBS_DIM;
use vho_core::harness::session::{self, TrainedSeed};
use vho_core::harness::{
    compute_metrics, episodes_to_fraction, grid_search, robustness_eval, worker_count, RobustnessEntry, RunSpec,
    Trainer,
};
use vho_core::nn::{count_params, Activation, DenseNet, HeadSpec, Matrix};
use vho_core::{Scenario, SimConfig};

fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0).unwrap_or(default)
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Exact,
    Empirical,
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Suite {
    strict: bool,
    failures: Vec<String>,
}

impl Suite {
    fn run(&mut self, id: u32, name: &str, kind: Kind, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let scope = if kind == Kind::Empirical { " (empirical)" } else { "" };
        println!("{tag} [{id:>2}] {name}{scope}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
        if !o.pass && (kind == Kind::Exact || self.strict) {
            self.failures.push(format!("[{id}] {name}"));
        }
    }
}

// ---------------------------------------------------------------- 1

fn parameter_counts() -> Outcome {
    let plan = TrainPlan { total_steps: 4000 };
    let mut got = BTreeMap::new();
    for kind in AgentKind::ALL {
        let agent = build_agent(&AgentConfig::default_for(kind), 0, plan).expect("agent");
        got.insert(kind, agent.param_counts());
    }
    let analytic = [
        count_params(&[4, 64, 64, 8], HeadSpec::Plain) + count_params(&[4, 64, 64, 1], HeadSpec::Plain),
        count_params(&[4, 64, 8], HeadSpec::Plain) + count_params(&[4, 64, 1], HeadSpec::Plain),
    ];
    let ppo = got[&AgentKind::Ppo].optimized;
    let trpo = got[&AgentKind::Trpo].optimized;
    let sac = got[&AgentKind::Sac];
    let rainbow = got[&AgentKind::Rainbow].optimized;
    let dueling = count_params(&[4, 128], HeadSpec::Dueling { value: &[128, 128, 25], advantage: &[128, 128, 200] });
    let pass = ppo == 9545
        && trpo == 1225
        && sac.reported == 276_512
        && sac.optimized == 207_384
        && rainbow == 62_689
        && dueling == rainbow
        && analytic[0] == ppo
        && analytic[1] == trpo;
    outcome(
        pass,
        format!(
            "ppo {ppo}, trpo {trpo} (analytic {}), sac {} reported / {} optimized, rainbow {rainbow} (analytic {dueling})",
            analytic[1], sac.reported, sac.optimized
        ),
    )
}

// ---------------------------------------------------------------- 2

const FD_STEP: f64 = 1e-5;
const FD_SAMPLES: usize = 40;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

struct FdStats {
    max_rel: f64,
    checked: usize,
    kinks: usize,
}

/// Central differences on a sample of flat parameter coordinates. A
/// coordinate whose one-sided slopes disagree has straddled a ReLU kink and
/// is counted but not compared.
fn fd_check(
    params: Vec<f64>,
    analytic: &[f64],
    rng: &mut ChaCha8Rng,
    mut loss_at: impl FnMut(&[f64]) -> f64,
    stats: &mut FdStats,
) {
    let base = loss_at(&params);
    let n = params.len();
    for _ in 0..FD_SAMPLES.min(n) {
        let i = rng.random_range(0..n);
        let mut p = params.clone();
        p[i] = params[i] + FD_STEP;
        let up = loss_at(&p);
        p[i] = params[i] - FD_STEP;
        let down = loss_at(&p);
        let (fwd, bwd) = ((up - base) / FD_STEP, (base - down) / FD_STEP);
        if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-3) {
            stats.kinks += 1;
            continue;
        }
        stats.max_rel = stats.max_rel.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
        stats.checked += 1;
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn weighted_sum(out: &Matrix, c: &Matrix) -> f64 {
    out.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
}

fn check_dense(mut net: DenseNet, rng: &mut ChaCha8Rng, stats: &mut FdStats) {
    let x = random_matrix(3, net.input_size(), rng);
    let (out, tape) = net.forward(&x).unwrap();
    let c = random_matrix(out.rows(), out.cols(), rng);
    let (grads, _) = net.backward(&tape, &c).unwrap();
    let analytic = grads.to_flat();
    let params = net.flat_params();
    fd_check(params, &analytic, rng, |p| {
        net.set_flat_params(p).unwrap();
        weighted_sum(&net.forward(&x).unwrap().0, &c)
    }, stats);
}

fn check_dueling(mut net: RainbowNet, rng: &mut ChaCha8Rng, stats: &mut FdStats) {
    let x = random_matrix(2, OBS_DIM, rng);
    let (out, tape) = net.forward(&x).unwrap();
    let c = random_matrix(out.rows(), out.cols(), rng);
    let grads = net.backward(&tape, &c).unwrap();
    for k in 0..3 {
        let analytic = grads[k].to_flat();
        let params = net.nets()[k].flat_params();
        fd_check(params, &analytic, rng, |p| {
            net.nets_mut()[k].set_flat_params(p).unwrap();
            weighted_sum(&net.forward(&x).unwrap().0, &c)
        }, stats);
    }
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut stats = FdStats { max_rel: 0.0, checked: 0, kinks: 0 };
    let shapes: [&[usize]; 8] = [
        &[4, 64, 64, 8],
        &[4, 64, 64, 1],
        &[4, 32, 8],
        &[4, 32, 1],
        &[4, 64, 8],
        &[4, 256, 256, 8],
        &[4, 128],
        &[128, 128, 25],
    ];
    let mut nets = 0;
    for (s, sizes) in shapes.iter().enumerate() {
        for hidden in [Activation::Tanh, Activation::Relu] {
            let out = if s % 2 == 0 { Activation::Identity } else { Activation::Tanh };
            check_dense(DenseNet::new(sizes, hidden, out, rng.random()).unwrap(), &mut rng, &mut stats);
            nets += 1;
        }
    }
    for _ in 0..3 {
        let depth = rng.random_range(2..5);
        let sizes: Vec<usize> = (0..depth).map(|_| rng.random_range(1..24)).collect();
        let mut net = DenseNet::new(&sizes, Activation::Relu, Activation::Identity, rng.random()).unwrap();
        net.make_noisy(0.5);
        net.resample_noise(&mut rng);
        check_dense(net, &mut rng, &mut stats);
        nets += 1;
    }
    for (atoms, noisy) in [(25, Some(0.5)), (100, None), (5, Some(0.1))] {
        let mut net = RainbowNet::new(32, atoms, noisy, rng.random()).unwrap();
        net.resample_noise(&mut rng);
        check_dueling(net, &mut rng, &mut stats);
        nets += 1;
    }
    outcome(
        nets >= 20 && stats.max_rel < 1e-4 && stats.checked > 0,
        format!(
            "{nets} nets, {} coordinates, max relative error {:.2e} (tol 1e-4), {} kink crossings skipped",
            stats.checked, stats.max_rel, stats.kinks
        ),
    )
}

// ---------------------------------------------------------------- 3

/// Triangular-kernel projection: atom `i` receives `p_j·max(0, 1 − |T z_j − z_i|/Δ)`.
fn projection_oracle(next: &[f64], r: f64, gamma: f64, done: bool, s: &Support) -> Vec<f64> {
    let z = s.values();
    let delta = s.delta();
    let mut m = vec![0.0; z.len()];
    for (j, &p) in next.iter().enumerate() {
        let g = if done { 0.0 } else { gamma };
        let tz = (r + g * z[j]).max(s.v_min()).min(s.v_max());
        for (i, mi) in m.iter_mut().enumerate() {
            *mi += p * (1.0 - (tz - z[i]).abs() / delta).max(0.0);
        }
    }
    m
}

/// `A_t = Σ_k (γλ)^k δ_{t+k}` with every sum stopped at the first done.
fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if d[t] || t + 1 == n { 0.0 } else { v[t + 1] };
            r[t] + gamma * next - v[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for j in t..n {
                sum += (gamma * lambda).powi((j - t) as i32) * delta[j];
                if d[j] {
                    break;
                }
            }
            sum
        })
        .collect()
}

fn probs(logits: &[f64]) -> Vec<f64> {
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    logits.iter().map(|l| l.exp() / z).collect()
}

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn algorithmic_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut parts = Vec::new();
    let mut pass = true;

    let mut proj = 0.0f64;
    for trial in 0..200 {
        let atoms = [2, 5, 25, 51, 100][trial % 5];
        let (lo, hi) = if trial % 3 == 0 { (-1.0, 1.0) } else { (-6.0, 10.0) };
        let s = Support::new(atoms, lo, hi).unwrap();
        let next = probs(&(0..atoms).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>());
        let r = rng.random_range(-3.0..3.0);
        let gamma = rng.random_range(0.5..1.0);
        let done = trial % 7 == 0;
        proj = proj.max(max_abs_diff(&categorical_project(&next, r, gamma, done, &s), &projection_oracle(&next, r, gamma, done, &s)));
    }
    pass &= proj <= 1e-12;
    parts.push(format!("projection {proj:.1e}"));

    let mut gae = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..120);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.05)).collect();
        *d.last_mut().unwrap() = true;
        let (gamma, lambda) = (rng.random_range(0.8..1.0), rng.random_range(0.0..1.0));
        let (adv, ret) = compute_advantages(&r, &v, &d, gamma, lambda).unwrap();
        let oracle = gae_oracle(&r, &v, &d, gamma, lambda);
        gae = gae.max(max_abs_diff(&adv, &oracle));
        let oracle_ret: Vec<f64> = oracle.iter().zip(&v).map(|(a, b)| a + b).collect();
        gae = gae.max(max_abs_diff(&ret, &oracle_ret));
    }
    pass &= gae <= 1e-10;
    parts.push(format!("gae {gae:.1e}"));

    let mut sac = 0.0f64;
    for _ in 0..50 {
        let rows = rng.random_range(1..10);
        let alpha = rng.random_range(0.0..0.5);
        let logits = random_matrix(rows, 8, &mut rng);
        let mut q1 = random_matrix(rows, 8, &mut rng);
        let q2 = random_matrix(rows, 8, &mut rng);
        q1.data_mut().iter_mut().for_each(|q| *q *= 3.0);
        let (loss, grad) = sac_policy_loss(&logits, &q1, &q2, alpha);
        let mut loss_oracle = 0.0;
        for r in 0..rows {
            let p = probs(logits.row(r));
            let g: Vec<f64> = (0..8).map(|a| alpha * p[a].ln() - q1.get(r, a).min(q2.get(r, a))).collect();
            let ls: f64 = (0..8).map(|a| p[a] * g[a]).sum();
            loss_oracle += ls / rows as f64;
            for k in 0..8 {
                sac = sac.max((grad.get(r, k) - p[k] * (g[k] - ls) / rows as f64).abs());
            }
            let v: f64 = (0..8).map(|a| p[a] * (q1.get(r, a).min(q2.get(r, a)) - alpha * p[a].ln())).sum();
            sac = sac.max((soft_state_value(logits.row(r), q1.row(r), q2.row(r), alpha) - v).abs());
            let rew = rng.random_range(-1.0..1.0);
            sac = sac.max((sac_value_target(rew, false, 0.99, logits.row(r), q1.row(r), q2.row(r), alpha) - (rew + 0.99 * v)).abs());
            sac = sac.max((sac_value_target(rew, true, 0.99, logits.row(r), q1.row(r), q2.row(r), alpha) - rew).abs());
        }
        sac = sac.max((loss - loss_oracle).abs());
    }
    pass &= sac <= 1e-10;
    parts.push(format!("sac {sac:.1e}"));

    let mut cg = 0.0f64;
    for n in [2, 5, 10, 20] {
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }).collect())
            .collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let apply = |v: &[f64]| Ok(a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect());
        let x = conjugate_gradient(apply, &b, 10 * n, 1e-14).unwrap();
        cg = cg.max(max_abs_diff(&x, &dense_solve(a.clone(), b.clone())));
    }
    pass &= cg <= 1e-8;
    parts.push(format!("cg {cg:.1e}"));

    let alpha = 0.6;
    let priorities = [0.05, 0.3, 1.0, 2.5, 7.0, 0.0001];
    let mut buf = PrioritizedBuffer::new(8, alpha, 1e-6).unwrap();
    for (i, &p) in priorities.iter().enumerate() {
        let e = Experience { obs: [0.0; OBS_DIM], action: i, reward: 0.0, next_obs: [0.0; OBS_DIM], done: false };
        buf.push_with_priority(e, p);
    }
    let draws = 100_000;
    let mut counts = [0usize; 6];
    for _ in 0..draws / 1000 {
        for i in buf.sample(1000, 0.5, &mut rng).unwrap().indices {
            counts[i] += 1;
        }
    }
    let z: f64 = priorities.iter().map(|p| p.powf(alpha)).sum();
    let mut worst_sigma = 0.0f64;
    for (i, &p) in priorities.iter().enumerate() {
        let q = p.powf(alpha) / z;
        let sd = (draws as f64 * q * (1.0 - q)).sqrt().max(1e-9);
        worst_sigma = worst_sigma.max((counts[i] as f64 - draws as f64 * q).abs() / sd);
    }
    pass &= worst_sigma <= 3.0;
    parts.push(format!("per {worst_sigma:.2}σ"));

    let uniform = [0.125; 8];
    let one_hot = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let half = [0.5, 0.5];
    let skew = [0.25, 0.75];
    let kl_expected = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
    let closed = entropy(&uniform) == 8.0f64.ln()
        && entropy(&one_hot) == 0.0
        && entropy(&half) == LN_2
        && kl_categorical(&uniform, &uniform).0 == 0.0
        && kl_categorical(&half, &skew).0 == kl_expected;
    pass &= closed;
    parts.push(format!("kl/entropy {}", if closed { "exact" } else { "mismatch" }));

    outcome(pass, parts.join(", "))
}

// ---------------------------------------------------------------- 4

fn trpo_constraint() -> Outcome {
    let cfg = AgentConfig::default_for(AgentKind::Trpo);
    let AgentConfig::Trpo(trpo) = &cfg else { unreachable!() };
    let delta = trpo.max_kl;
    let spec = RunSpec { agent: cfg.clone(), sim: SimConfig::default(), scenario: Scenario::One, seed: 0, episodes: 50 };
    let mut trainer = Trainer::new(spec).expect("trainer");
    trainer.run().expect("training");
    let (mut accepted, mut max_kl, mut min_gain) = (0, 0.0f64, f64::INFINITY);
    let mut violations = 0;
    for r in trainer.history() {
        if r.diagnostics.get("accepted") == Some(&1.0) {
            accepted += 1;
            let kl = r.diagnostics["kl"];
            let gain = r.diagnostics["surrogate_delta"];
            max_kl = max_kl.max(kl);
            min_gain = min_gain.min(gain);
            if kl > delta || gain < 0.0 {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && accepted > 0,
        format!(
            "{accepted}/50 updates accepted, max KL {max_kl:.2e} (δ {delta}), min surrogate gain {min_gain:.2e}, {violations} violations"
        ),
    )
}

// ---------------------------------------------------------------- 5-7

struct AgentRuns {
    kind: AgentKind,
    seeds: Vec<TrainedSeed>,
}

impl AgentRuns {
    fn greedy_mean(&self, f: impl Fn(&vho_core::harness::Metrics) -> f64) -> Option<f64> {
        let v: Vec<f64> = self.seeds.iter().filter_map(|s| s.greedy.as_ref()).map(|(e, _)| f(&e.mean)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    fn failures(&self) -> usize {
        self.seeds.iter().filter(|s| s.outcome.failure.is_some()).count()
    }

    /// Mean over seeds; a seed that never reaches the threshold counts as
    /// one past its episode budget.
    fn episodes_to_90(&self) -> f64 {
        let v: Vec<f64> = self
            .seeds
            .iter()
            .map(|s| {
                let r = s.outcome.returns();
                episodes_to_fraction(&r, session::CONVERGENCE_FRACTION, session::CONVERGENCE_WINDOW)
                    .map_or(s.outcome.spec.episodes as f64 + 1.0, |e| e as f64)
            })
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn train_all(episodes: usize, seeds: usize) -> Vec<AgentRuns> {
    AgentKind::ALL
        .iter()
        .map(|&kind| {
            let mut cfg = session::with_agent_kind(RunConfig::default(), kind);
            cfg.episodes = episodes;
            cfg.seeds = (0..seeds as u64).collect();
            cfg.eval_episodes = 1;
            let start = Instant::now();
            let runs = session::train_seeds(&cfg, None).expect("training");
            println!("      trained {kind} ({seeds} seeds x {episodes} episodes) in {:.0}s", start.elapsed().as_secs_f64());
            AgentRuns { kind, seeds: runs }
        })
        .collect()
}

fn strategy_structure(runs: &[AgentRuns], episodes: usize) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for a in runs {
        let head = a.greedy_mean(|m| m.headlight_rate);
        let tail = a.greedy_mean(|m| m.taillight_rate);
        let nored = a.greedy_mean(|m| m.no_redundancy);
        let rel = a.greedy_mean(|m| m.reliability);
        let (Some(head), Some(tail), Some(nored), Some(rel)) = (head, tail, nored, rel) else {
            pass = false;
            parts.push(format!("{}: every seed failed", a.kind));
            continue;
        };
        let ok = head >= 85.0 && tail <= 2.0 && nored >= 95.0 && rel >= 90.0;
        pass &= ok;
        parts.push(format!(
            "{} head {head:.1}% tail {tail:.1}% no_red {nored:.1}% rel {rel:.1}%{}",
            a.kind,
            if a.failures() > 0 { format!(" ({} failed seeds)", a.failures()) } else { String::new() }
        ));
    }
    outcome(pass, format!("{episodes} episodes: {}", parts.join("; ")))
}

fn stability_ordering(runs: &[AgentRuns]) -> Outcome {
    let sw = |k: AgentKind| {
        runs.iter().find(|a| a.kind == k).and_then(|a| a.greedy_mean(|m| m.switch_count as f64)).unwrap_or(f64::NAN)
    };
    let (ppo, trpo, sac, rainbow) = (sw(AgentKind::Ppo), sw(AgentKind::Trpo), sw(AgentKind::Sac), sw(AgentKind::Rainbow));
    outcome(
        ppo <= trpo && trpo <= sac.max(rainbow),
        format!("mean switches ppo {ppo:.1} <= trpo {trpo:.1} <= max(sac {sac:.1}, rainbow {rainbow:.1})"),
    )
}

fn sample_complexity(runs: &[AgentRuns]) -> Outcome {
    let e = |k: AgentKind| runs.iter().find(|a| a.kind == k).map_or(f64::NAN, |a| a.episodes_to_90());
    let (ppo, trpo, sac, rainbow) = (e(AgentKind::Ppo), e(AgentKind::Trpo), e(AgentKind::Sac), e(AgentKind::Rainbow));
    let fast = sac.max(rainbow);
    outcome(
        fast <= ppo.min(trpo) && fast < 100.0,
        format!("mean episodes to 90% of final: sac {sac:.1}, rainbow {rainbow:.1} vs ppo {ppo:.1}, trpo {trpo:.1}"),
    )
}

// ---------------------------------------------------------------- 8

fn robustness(grid_episodes: usize) -> Outcome {
    let sim = SimConfig::default();
    let mut holds = 0;
    let mut parts = Vec::new();
    for kind in AgentKind::ALL {
        let start = Instant::now();
        let report = grid_search(&AgentConfig::default_for(kind), &sim, Scenario::One, &[0], grid_episodes, worker_count())
            .expect("grid search");
        let entries: Vec<RobustnessEntry> = (1..=2)
            .map(|rank| {
                let hit = report.best.iter().find(|(row, _)| row.rank == rank);
                RobustnessEntry {
                    agent: kind,
                    rank,
                    label: hit.map_or(String::new(), |(row, _)| row.label.clone()),
                    checkpoint: hit.map(|(_, c)| c.clone()),
                }
            })
            .collect();
        let rows = robustness_eval(&entries, &sim, 0, 1).expect("robustness");
        let (first, second) = (rows[0].reliability_scenario2, rows[1].reliability_scenario2);
        let ok = matches!((first, second), (Some(a), Some(b)) if b >= a);
        holds += ok as usize;
        let fmt = |r: Option<f64>| r.map_or("n/a".into(), |v| format!("{v:.2}%"));
        parts.push(format!("{kind} 1st {} 2nd {}", fmt(first), fmt(second)));
        println!("      grid {kind} ({} cells x {grid_episodes} episodes) in {:.0}s", report.rows.len(), start.elapsed().as_secs_f64());
    }
    outcome(holds >= 3, format!("2nd >= 1st on scenario 2 for {holds}/4 agents: {}", parts.join("; ")))
}

// ---------------------------------------------------------------- 9

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs every command into `dir` from `cfg`; the grid pair only on request.
fn run_commands(cfg: &RunConfig, dir: &Path, with_grid: bool) {
    let train = dir.join("train");
    session::run_train(cfg, &train, None, None).unwrap();
    let ckpt = Checkpoint::load(&session::final_checkpoint_path(&train, cfg.seeds[0])).unwrap();
    session::run_evaluate(cfg, &ckpt, &dir.join("evaluate")).unwrap();
    session::run_decision_map(cfg, &ckpt, &dir.join("map")).unwrap();
    session::run_channel_probe(cfg, &dir.join("probe")).unwrap();
    if !with_grid {
        return;
    }
    let mut grid_cfg = cfg.clone();
    grid_cfg.episodes = 1;
    grid_cfg.seeds = vec![cfg.seeds[0]];
    session::run_grid(&grid_cfg, &dir.join("grid")).unwrap();
    session::run_robustness(cfg, &[dir.join("grid")], &dir.join("robustness")).unwrap();
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in [AgentKind::Trpo, AgentKind::Rainbow] {
        let mut cfg = session::with_agent_kind(RunConfig::default(), kind);
        cfg.episodes = 2;
        cfg.seeds = vec![3, 4];
        cfg.decision_map.distance_bins = 10;
        cfg.decision_map.bearing_bins = 12;
        let first = tmp.path().join(format!("{kind}_a"));
        run_commands(&cfg, &first, kind == AgentKind::Trpo);
        let echoed = load_config(&first.join("train").join(RESOLVED_CONFIG_FILE)).unwrap();
        let second = tmp.path().join(format!("{kind}_b"));
        run_commands(&echoed, &second, kind == AgentKind::Trpo);
        let (a, b) = (files_under(&first), files_under(&second));
        let same = a == b && a.keys().any(|k| k.extension().is_some_and(|e| e == "csv"));
        pass &= same;
        parts.push(format!("{kind} rerun {} ({} files)", if same { "identical" } else { "differs" }, a.len()));
    }
    let mut resumed = 0;
    for kind in AgentKind::ALL {
        let spec = RunSpec { agent: AgentConfig::default_for(kind), sim: SimConfig::default(), scenario: Scenario::One, seed: 9, episodes: 3 };
        let mut full = Trainer::new(spec.clone()).unwrap();
        full.run().unwrap();
        let mut head = Trainer::new(spec.clone()).unwrap();
        head.run_until(1).unwrap();
        let ckpt = Checkpoint::from_bytes(&head.checkpoint().to_bytes()).unwrap();
        let mut tail = Trainer::resume(spec, &ckpt).unwrap();
        tail.run().unwrap();
        if full.history() == tail.history() && full.checkpoint().to_bytes() == tail.checkpoint().to_bytes() {
            resumed += 1;
        }
    }
    pass &= resumed == 4;
    parts.push(format!("resume == uninterrupted for {resumed}/4 agents"));
    outcome(pass, parts.join(", "))
}

// ---------------------------------------------------------------- 10

fn metric_fixtures() -> Outcome {
    let cases = common::metric_fixtures();
    let mut bad = Vec::new();
    for c in &cases {
        match compute_metrics(&c.steps) {
            Ok(m) if m == c.expected => {}
            _ => bad.push(c.name.clone()),
        }
    }
    outcome(bad.is_empty() && !cases.is_empty(), format!("{}/{} fixtures exact{}", cases.len() - bad.len(), cases.len(),
        if bad.is_empty() { String::new() } else { format!(", mismatched: {}", bad.join(", ")) }))
}

fn main() {
    let episodes = env_usize("VHO_ACCEPTANCE_EPISODES", 150);
    let seeds = env_usize("VHO_ACCEPTANCE_SEEDS", 5);
    let grid_episodes = env_usize("VHO_ACCEPTANCE_GRID_EPISODES", 8);
    let strict = std::env::var("VHO_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1");
    println!("acceptance: {episodes} episodes x {seeds} seeds, grid {grid_episodes} episodes/cell, strict={strict}");

    let mut suite = Suite { strict, failures: Vec::new() };
    suite.run(1, "parameter counts", Kind::Exact, parameter_counts);
    suite.run(2, "gradient correctness", Kind::Exact, gradient_check);
    suite.run(3, "algorithmic oracles", Kind::Exact, algorithmic_oracles);
    suite.run(4, "trpo trust region", Kind::Exact, trpo_constraint);
    suite.run(10, "metrics fixtures", Kind::Exact, metric_fixtures);
    suite.run(9, "determinism", Kind::Exact, determinism);

    let runs = catch_unwind(|| train_all(episodes, seeds));
    match &runs {
        Ok(runs) => {
            suite.run(5, "learned strategy structure", Kind::Empirical, || strategy_structure(runs, episodes));
            suite.run(6, "switch-count ordering", Kind::Empirical, || stability_ordering(runs));
            suite.run(7, "sample-complexity ordering", Kind::Empirical, || sample_complexity(runs));
        }
        Err(_) => {
            for (id, name) in [(5, "learned strategy structure"), (6, "switch-count ordering"), (7, "sample-complexity ordering")] {
                suite.run(id, name, Kind::Empirical, || outcome(false, "training panicked"));
            }
        }
    }
    suite.run(8, "robustness report", Kind::Empirical, || robustness(grid_episodes));

    if suite.failures.is_empty() {
        println!("acceptance: all enforced criteria passed");
    } else {
        println!("acceptance: failed {}", suite.failures.join(", "));
        std::process::exit(1);
    }
}

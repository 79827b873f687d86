//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use lace::baselines::{did_estimate, naive_estimate};
use lace::behavioral::{log_multinomial_pmf, qbr, BehaviorDist};
use lace::dataio::{ExperimentPanel, FeeVector, LabelMap};
use lace::estimator::{lace_estimate, normalize_log_weights, EstimatorConfig, PolicyData};
use lace::game_model::PayoffMatrix;
use lace::oracle::{consistency_check, ConsistencySettings, SyntheticScenario};
use lace::rng::{stream, Domain, StreamRng};
use lace::temporal::{
    expit_transform, logit_transform, normal_noise, sample_var1_path, TemporalParams,
};
use lace_cli::reproduce::{reproduce, Conventions, DatasetSnapshot, RunManifest};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
type Property = (&'static str, fn() -> Result<f64, String>, f64);

// Criterion 1
const SEEDS: u64 = 10;
const REQUIRED_WINS: usize = 9;
const MEDIAN_MSE_BOUND: f64 = 0.10;
const FIGURE_BUDGET: Duration = Duration::from_secs(120);
// Criterion 2
const Z_BOUND: f64 = 3.0;
const CONSISTENCY_BUDGET: Duration = Duration::from_secs(60);
// Criteria 3 and 4
const EXACT: f64 = 1e-12;
const N_RANDOM: usize = 10_000;
const AUTOCORR_TOL: f64 = 0.05;
const AR_LENGTH: usize = 10_000;

fn figure_reproduction() -> Outcome {
    let start = Instant::now();
    let dataset = DatasetSnapshot::load(None).map_err(|e| e.to_string())?;
    let mut wins = 0;
    let mut lace_mse = Vec::new();
    let mut rows = Vec::new();
    for seed in 1..=SEEDS {
        let manifest = RunManifest::new(
            dataset.clone(),
            seed,
            25,
            LabelMap::default(),
            Conventions::default(),
            EstimatorConfig::default(),
        );
        let mse = reproduce(&manifest).map_err(|e| e.to_string())?.mse;
        if mse.lace < mse.naive && mse.lace < mse.did {
            wins += 1;
        }
        lace_mse.push(mse.lace);
        rows.push(format!(
            "      seed {seed:>2}: lace {:.5}  naive {:.5}  did {:.5}",
            mse.lace, mse.naive, mse.did
        ));
    }
    lace_mse.sort_by(f64::total_cmp);
    let median = (lace_mse[4] + lace_mse[5]) / 2.0;
    let elapsed = start.elapsed();
    let summary = format!(
        "lace beats both baselines in {wins}/{SEEDS} seeds (need {REQUIRED_WINS}), \
         median lace mse {median:.5} (bound {MEDIAN_MSE_BOUND}), {:.1}s; published 0.045 / 0.185 / 0.361\n{}",
        elapsed.as_secs_f64(),
        rows.join("\n")
    );
    if wins >= REQUIRED_WINS && median <= MEDIAN_MSE_BOUND && elapsed <= FIGURE_BUDGET {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn oracle_consistency() -> Outcome {
    let start = Instant::now();
    let report = consistency_check(
        &SyntheticScenario::default(),
        &FeeVector::APPENDIX.0,
        ConsistencySettings::default(),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let summary = format!(
        "lace {:.5} ± {:.5}, oracle {:.5} ± {:.5}, z = {:.2} (bound {Z_BOUND}), min ESS {:.0}, {:.1}s",
        report.lace_mean,
        report.lace_std_error,
        report.oracle.estimate,
        report.oracle.std_error,
        report.z_score,
        report.min_effective_sample_size,
        elapsed.as_secs_f64()
    );
    if report.passed(Z_BOUND) && elapsed <= CONSISTENCY_BUDGET {
        Ok(summary)
    } else {
        Err(summary)
    }
}

/// Hand-typed revenue under the worked-example fee: `a2 + 2·a4 + a4' + a5'`,
/// per (table game, table period).
const HAND_REVENUE: [[f64; 4]; 2] = [
    [
        0.307 + 2.0 * 0.120 + 0.092 + 0.138,
        0.272 + 2.0 * 0.100 + 0.140 + 0.160,
        0.350 + 2.0 * 0.123 + 0.102 + 0.154,
        0.292 + 2.0 * 0.135 + 0.063 + 0.151,
    ],
    [
        0.367 + 2.0 * 0.143 + 0.140 + 0.168,
        0.347 + 2.0 * 0.110 + 0.108 + 0.131,
        0.313 + 2.0 * 0.100 + 0.110 + 0.133,
        0.270 + 2.0 * 0.105 + 0.107 + 0.139,
    ],
];

const PUBLISHED_NAIVE: f64 = -0.051;
const PUBLISHED_DID: f64 = -0.164;
const PUBLISHED_TRUTH: f64 = 0.054;

fn baseline_exactness() -> Outcome {
    let fee = FeeVector::APPENDIX;
    let mut lines = Vec::new();
    let mut worst: f64 = 0.0;
    for map in LabelMap::ALL {
        let (gt, gc) = match map {
            LabelMap::Game1Control => (1, 0),
            LabelMap::Game1Treatment => (0, 1),
        };
        let r = |g: usize, p: usize| HAND_REVENUE[g][p - 1];
        let hand_truth = r(gt, 4) - r(gc, 4);
        let hand_naive = r(gt, 3) - r(gc, 3);
        let hand_did = |pre: usize| (r(gt, 3) - r(gt, pre)) - (r(gc, 3) - r(gc, pre));

        let panel = ExperimentPanel::rapoport_boebel(20).with_label_map(map);
        let (p1, p0) = panel.fitting_slice();
        let naive = naive_estimate(&p1, &p0, &fee.0, 2).map_err(|e| e.to_string())?;
        let did0 = did_estimate(&p1, &p0, &fee.0, 2, 0).map_err(|e| e.to_string())?;
        let did1 = did_estimate(&p1, &p0, &fee.0, 2, 1).map_err(|e| e.to_string())?;
        let truth = panel.holdout_truth(&fee);
        for (a, b) in [
            (naive, hand_naive),
            (did0, hand_did(1)),
            (did1, hand_did(2)),
            (truth, hand_truth),
        ] {
            worst = worst.max((a - b).abs());
        }
        lines.push(format!(
            "      map {map}: naive {naive:+.3} (published {PUBLISHED_NAIVE:+.3}, off {:.3}) \
             did[pre=0] {did0:+.3} did[pre=1] {did1:+.3} (published {PUBLISHED_DID:+.3}, off {:.3} / {:.3}) \
             truth {truth:+.3} (published {PUBLISHED_TRUTH:+.3}, off {:.3})",
            (naive - PUBLISHED_NAIVE).abs(),
            (did0 - PUBLISHED_DID).abs(),
            (did1 - PUBLISHED_DID).abs(),
            (truth - PUBLISHED_TRUTH).abs()
        ));
    }
    let summary = format!(
        "largest deviation from hand values {worst:.1e} (bound {EXACT:e})\n{}",
        lines.join("\n")
    );
    if worst <= EXACT {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn rng(lane: u64) -> StreamRng {
    stream(2024, Domain::Validation, lane, 0)
}

fn check_qbr() -> Result<f64, String> {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..N_RANDOM {
        let u: Vec<f64> = (0..5).map(|_| r.random_range(-50.0..50.0)).collect();
        let precision = r.random_range(-20.0..20.0);
        let shift = r.random_range(-100.0..100.0);
        let p = qbr(&u, precision);
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(format!("qbr left the simplex at {u:?}, {precision}"));
        }
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
        let shifted: Vec<f64> = u.iter().map(|x| x + shift).collect();
        for (a, b) in p.iter().zip(qbr(&shifted, precision)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn check_round_trip() -> Result<f64, String> {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..N_RANDOM {
        let raw: [f64; 3] = std::array::from_fn(|_| r.random_range(1e-6..1.0));
        let total: f64 = raw.iter().sum();
        let beta = BehaviorDist::new(raw.map(|x| x / total)).map_err(|e| e.to_string())?;
        let back = expit_transform(logit_transform(&beta).map_err(|e| e.to_string())?);
        for (a, b) in beta.as_array().iter().zip(back.as_array()) {
            worst = worst.max((a - b).abs());
        }
        let w = [r.random_range(-20.0..20.0), r.random_range(-20.0..20.0)];
        let w_back = logit_transform(&expit_transform(w)).map_err(|e| e.to_string())?;
        for (a, b) in w.iter().zip(w_back) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Joint probability of each pair of per-period count vectors, summed over
/// every ordered sequence of `n1 + n2` individual draws.
fn enumerate_two_periods(probs: &[f64], n1: u32, n2: u32) -> HashMap<(Vec<u32>, Vec<u32>), f64> {
    let k = probs.len();
    let n = (n1 + n2) as usize;
    let mut out = HashMap::new();
    for code in 0..k.pow(n as u32) {
        let (mut c1, mut c2) = (vec![0u32; k], vec![0u32; k]);
        let mut p = 1.0;
        let mut c = code;
        for draw in 0..n {
            let a = c % k;
            c /= k;
            p *= probs[a];
            if draw < n1 as usize {
                c1[a] += 1;
            } else {
                c2[a] += 1;
            }
        }
        *out.entry((c1, c2)).or_insert(0.0) += p;
    }
    out
}

fn check_multinomial() -> Result<f64, String> {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for k in 1..=3usize {
        for n1 in 0..=4 {
            for n2 in 0..=4 {
                let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
                for ((c1, c2), p) in enumerate_two_periods(&probs, n1, n2) {
                    let closed =
                        (log_multinomial_pmf(&c1, &probs) + log_multinomial_pmf(&c2, &probs)).exp();
                    worst = worst.max((closed - p).abs());
                }
            }
        }
    }
    Ok(worst)
}

fn check_offset_invariance() -> Result<f64, String> {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let lw: Vec<f64> = (0..50).map(|_| r.random_range(-60.0..0.0)).collect();
        let c = r.random_range(-500.0..500.0);
        let shifted: Vec<f64> = lw.iter().map(|x| x + c).collect();
        let (w, _) = normalize_log_weights(&lw).ok_or("degenerate weights")?;
        let (ws, _) = normalize_log_weights(&shifted).ok_or("degenerate shifted weights")?;
        for (a, b) in w.iter().zip(&ws) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn check_antisymmetry() -> Result<f64, String> {
    let panel = ExperimentPanel::rapoport_boebel(20);
    let (p1, p0) = panel.fitting_slice();
    let g1 = PayoffMatrix::experiment_treatment();
    let g0 = PayoffMatrix::experiment_control();
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let cfg = EstimatorConfig {
            iterations: 200,
            seed,
            ..EstimatorConfig::default()
        };
        let fee: [f64; 10] = std::array::from_fn(|_| r.random_range(0.0..1.0));
        let neg = fee.map(|c| -c);
        let run = |a, b, f: &[f64; 10]| lace_estimate(a, b, f, &cfg).map(|e| e.ce_hat);
        let forward = run(PolicyData::new(&p1, &g1), PolicyData::new(&p0, &g0), &fee)
            .map_err(|e| e.to_string())?;
        let swapped = run(PolicyData::new(&p0, &g0), PolicyData::new(&p1, &g1), &fee)
            .map_err(|e| e.to_string())?;
        let negated = run(PolicyData::new(&p1, &g1), PolicyData::new(&p0, &g0), &neg)
            .map_err(|e| e.to_string())?;
        worst = worst
            .max((forward + swapped).abs())
            .max((forward + negated).abs());
    }
    Ok(worst)
}

fn check_autocorrelation() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (lane, rho) in [(6, 0.3), (7, 0.6), (8, 0.9)] {
        let mut r = rng(lane);
        let path = sample_var1_path(
            &TemporalParams([0.0, rho, 1.0]),
            &BehaviorDist::uniform(),
            AR_LENGTH,
            normal_noise(&mut r),
        );
        let w: Vec<f64> = path
            .betas()
            .iter()
            .map(|b| logit_transform(b).map(|w| w[1]))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var: f64 = w.iter().map(|x| (x - mean).powi(2)).sum();
        let cov: f64 = w.windows(2).map(|p| (p[0] - mean) * (p[1] - mean)).sum();
        worst = worst.max((cov / var - rho).abs());
    }
    Ok(worst)
}

fn numerical_properties() -> Outcome {
    let checks: [Property; 6] = [
        ("qbr simplex and shift invariance", check_qbr, EXACT),
        ("logit/expit round trip", check_round_trip, EXACT),
        ("multinomial enumeration", check_multinomial, EXACT),
        ("weight offset invariance", check_offset_invariance, EXACT),
        ("swap and fee antisymmetry", check_antisymmetry, EXACT),
        (
            "VAR(1) lag-1 autocorrelation",
            check_autocorrelation,
            AUTOCORR_TOL,
        ),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, check, bound) in checks {
        match check() {
            Ok(worst) => {
                let pass = worst <= bound;
                ok &= pass;
                let mark = if pass { "ok" } else { "FAILED" };
                lines.push(format!(
                    "      {mark:<6} {name}: worst {worst:.2e} (bound {bound:e})"
                ));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("      FAILED {name}: {e}"));
            }
        }
    }
    let summary = format!("six property families\n{}", lines.join("\n"));
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_lace"))
        .args(args)
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("lace {} exited with {status}", args.join(" ")))
    }
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>, String> {
    std::fs::read(dir.join(name)).map_err(|e| format!("{}: {e}", dir.join(name).display()))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dirs: Vec<_> = ["w1", "w4", "replay"]
        .iter()
        .map(|d| tmp.path().join(d))
        .collect();
    let s = |p: &Path| p.to_str().expect("utf-8 temp path").to_string();
    run_cli(&[
        "reproduce",
        "--seed",
        "11",
        "--workers",
        "1",
        "--out",
        &s(&dirs[0]),
    ])?;
    run_cli(&[
        "reproduce",
        "--seed",
        "11",
        "--workers",
        "4",
        "--out",
        &s(&dirs[1]),
    ])?;
    let manifest = s(&dirs[0].join("results.json"));
    run_cli(&[
        "reproduce",
        "--manifest",
        &manifest,
        "--workers",
        "3",
        "--out",
        &s(&dirs[2]),
    ])?;
    for name in ["results.json", "results.csv"] {
        let reference = read(&dirs[0], name)?;
        for dir in &dirs[1..] {
            if read(dir, name)? != reference {
                return Err(format!(
                    "{name} differs between {} and {}",
                    dirs[0].display(),
                    dir.display()
                ));
            }
        }
    }
    Ok("results.json and results.csv byte-identical across 1 worker, 4 workers, and a 3-worker manifest replay".into())
}

fn main() {
    let criteria: [Criterion; 5] = [
        ("holdout reproduction over 10 seeds", figure_reproduction),
        ("oracle consistency", oracle_consistency),
        ("baseline exactness", baseline_exactness),
        ("numerical property suite", numerical_properties),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let (mark, detail) = match criterion() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} [{name}]: {mark}: {detail}", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

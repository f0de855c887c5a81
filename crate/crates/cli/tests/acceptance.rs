//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use uowq_core::fisher::{analytic_fisher, empirical_fisher, gram_operator, DirectionMatrix};
use uowq_core::harness::verify::{
    composed_quantity_objective, derivative_probe, optimum_fidelity, VerificationData,
};
use uowq_core::harness::{
    brute_force_simplex, verify_theorem, EnsembleSpec, FamilySpec, SourceSpec, TheoremConfig,
    TheoremId,
};
use uowq_core::model::ModelFamily;
use uowq_core::optimizer::{single_source_weight, solve_simplex_qp, QpMatrix};
use uowq_core::rng;
use uowq_core::trainer::{
    generate_tasks, pretrain_sources, train_multi_source, train_multi_task, train_target_only,
    ToyProblem, ToySpec, ToyTasksSpec, TrainConfig,
};
use uowq_core::ParameterVector;

const SEED: u64 = 42;

// criterion 2
const FIDELITY_N0: [usize; 3] = [500, 2000, 8000];
const FIDELITY_TRIALS: usize = 4000;
const FIDELITY_RELATIVE: f64 = 0.15;
const SIGMAS: f64 = 3.0;
// criterion 3
const STRICT_DECREASE: f64 = 1e-12;
// criterion 4
const QP_INSTANCES: usize = 100;
const QP_GRID_STEP: f64 = 1e-3;
const QP_GRID_SLACK: f64 = 1e-6;
const SIMPLEX_TOL: f64 = 1e-10;
const DIAGONAL_TOL: f64 = 1e-8;
const QP_TIME_LIMIT_S: f64 = 30.0;
// criterion 5
const REDUCTION_TOL: f64 = 1e-10;
// criterion 10
const FISHER_SAMPLES: usize = 1_000_000;
const FISHER_RELATIVE: f64 = 0.05;
const GRAM_CASES: usize = 100;
const GRAM_TOL: f64 = 1e-10;
// criterion 11
const TRAIN_SEEDS: u64 = 20;
const TRAIN_LR: f64 = 1.0;
const TRAIN_EPOCHS: usize = 1000;
const MIN_ORDERED_SEEDS: usize = 18;

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn fmt_checks(v: &uowq_core::Verification) -> String {
    v.checks
        .iter()
        .map(|c| format!("{}={:.3e}{}{:.3e}", c.name, c.observed, c.relation, c.bound))
        .collect::<Vec<_>>()
        .join(", ")
}

fn theorem(id: TheoremId) -> uowq_core::Verification {
    verify_theorem(&TheoremConfig::default_for(id), SEED).expect("verification runs")
}

fn criterion_1() -> Outcome {
    let v = theorem(TheoremId::T1Weight);
    let VerificationData::WeightSweep {
        t, w_star, sweep, ..
    } = &v.data
    else {
        unreachable!()
    };
    let argmin = v
        .checks
        .iter()
        .find(|c| c.name == "mc_argmin_distance_in_steps")
        .unwrap();
    Outcome::new(
        argmin.passed,
        format!(
            "t={t:.5}, w*={w_star:.4}, MC argmin w={} ({:.2} steps, limit {})",
            sweep.points[sweep.mc_argmin].axis_value, argmin.observed, argmin.bound
        ),
    )
}

fn criterion_2() -> Outcome {
    let runs: Vec<_> = FIDELITY_N0
        .iter()
        .map(|&n0| {
            let ens = EnsembleSpec::single(FamilySpec::uniform_categorical(3), n0, 2.0, n0, 1)
                .build(SEED)
                .unwrap();
            optimum_fidelity(&ens, FIDELITY_TRIALS, rng::derive_seed(SEED, n0 as u64)).unwrap()
        })
        .collect();
    let mut passed = true;
    let mut parts = Vec::new();
    for r in &runs {
        let ok = (r.mc.mean - r.predicted).abs()
            <= SIGMAS * r.mc.std_error + FIDELITY_RELATIVE * r.predicted;
        passed &= ok;
        parts.push(format!(
            "N0={} gap={:.4}+-{:.4}",
            r.n0, r.relative_gap, r.relative_gap_se
        ));
    }
    for w in runs.windows(2) {
        let slack = SIGMAS * (w[0].relative_gap_se.powi(2) + w[1].relative_gap_se.powi(2)).sqrt();
        passed &= w[1].relative_gap <= w[0].relative_gap + slack;
    }
    Outcome::new(passed, parts.join("; "))
}

fn criterion_3() -> Outcome {
    let v = theorem(TheoremId::T1Quantity);
    let mut passed = v.passed;
    // analytic strictness across a family of grids
    let mut worst: f64 = f64::NEG_INFINITY;
    for &n0 in &[100.0, 1000.0, 10000.0] {
        for &t in &[0.0, 1e-4, 1e-3, 1e-2, 1e-1] {
            let values: Vec<f64> = (0..=10)
                .map(|k| composed_quantity_objective(n0, k as f64 * n0 / 5.0, t, 2))
                .collect();
            for w in values.windows(2) {
                worst = worst.max((w[1] - w[0]) / w[0]);
            }
        }
    }
    passed &= worst <= -STRICT_DECREASE;
    Outcome::new(
        passed,
        format!("{}; worst grid step {worst:.3e}", fmt_checks(&v)),
    )
}

/// How the literal closed-form derivative relates to the composed objective.
fn criterion_3_info() -> String {
    let (n0, n, t, d) = (1000.0, 400.0, 0.002, 2);
    let literal = -0.5 * (1.0 + n * t) / (n0 + n + n0 * n * t);
    let objective = composed_quantity_objective(n0, n, t, d);
    let probe = derivative_probe(n0, n, t, d);
    format!(
        "literal -(1+nt)/(2(N0+n+N0nt)) = {literal:.6e} equals -objective/d = {:.6e}; finite difference is {:.6e}, so the check uses -(d/2)/(N0+n+N0nt)^2",
        -objective / d as f64,
        probe.finite_difference
    )
}

fn random_psd(k: usize, r: &mut impl Rng) -> DMatrix<f64> {
    let rank = r.random_range(1..=k);
    let a = DMatrix::from_fn(rank, k, |_, _| r.random_range(-1.0..1.0));
    let diag = DMatrix::from_fn(k, k, |i, j| {
        if i == j && r.random_bool(0.5) {
            r.random_range(0.0..0.5)
        } else {
            0.0
        }
    });
    a.transpose() * a + diag
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let failures: usize = (0..QP_INSTANCES)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::seeded(rng::derive_seed_path(SEED, &[4, i as u64]));
            let k = 2 + i % 3;
            let m = random_psd(k, &mut r);
            let sol = solve_simplex_qp(&QpMatrix::new(m.clone()).unwrap()).unwrap();
            let (_, grid_min) = brute_force_simplex(&m, QP_GRID_STEP).unwrap();
            let a = DVector::from_column_slice(&sol.alpha);
            let objective = a.dot(&(&m * &a));
            let on_simplex = (sol.alpha.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
                && sol.alpha.iter().all(|&x| x >= -SIMPLEX_TOL);
            usize::from(!(objective <= grid_min + QP_GRID_SLACK && on_simplex))
        })
        .sum();
    let mut diag_err: f64 = 0.0;
    for i in 0..QP_INSTANCES {
        let mut r = rng::seeded(rng::derive_seed_path(SEED, &[5, i as u64]));
        let k = 2 + i % 7;
        let d: Vec<f64> = (0..k).map(|_| r.random_range(0.1..10.0)).collect();
        let sol = solve_simplex_qp(
            &QpMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(d.clone()))).unwrap(),
        )
        .unwrap();
        let z: f64 = d.iter().map(|x| 1.0 / x).sum();
        for (a, m) in sol.alpha.iter().zip(&d) {
            diag_err = diag_err.max((a - 1.0 / (m * z)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        failures == 0 && diag_err <= DIAGONAL_TOL && secs < QP_TIME_LIMIT_S,
        format!("{failures}/{QP_INSTANCES} grid failures, diagonal max error {diag_err:.2e}, {secs:.1}s (limit {QP_TIME_LIMIT_S}s)"),
    )
}

fn criterion_5() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let mut r = rng::seeded(rng::derive_seed_path(SEED, &[6, i]));
        let family = if i % 2 == 0 {
            FamilySpec::uniform_categorical(r.random_range(2..7))
        } else {
            FamilySpec::GaussianIso {
                mean: (0..r.random_range(1..6))
                    .map(|_| r.random_range(-1.0..1.0))
                    .collect(),
            }
        };
        let n0 = r.random_range(100..5000);
        let spec = EnsembleSpec {
            family,
            n0,
            sources: vec![SourceSpec {
                c: r.random_range(0.0..4.0),
                budget: r.random_range(50..10000),
                direction_seed: i,
            }],
        };
        let ens = spec.build(SEED).unwrap();
        let plan = ens.optimal_plan().unwrap();
        let closed =
            single_source_weight(ens.discrepancy(0).unwrap(), ens.sources[0].budget as f64);
        worst = worst.max((plan.weights[0] - closed).abs());
    }
    Outcome::new(
        worst <= REDUCTION_TOL,
        format!("max |w_plan - w_closed| = {worst:.2e} over 100 instances"),
    )
}

fn criterion_6() -> Outcome {
    let v = theorem(TheoremId::T2Weights);
    Outcome::new(v.passed, fmt_checks(&v))
}

fn criterion_7() -> Outcome {
    let v = theorem(TheoremId::L1Expectation);
    Outcome::new(v.passed, fmt_checks(&v))
}

fn criterion_8() -> Outcome {
    let v = theorem(TheoremId::L2Bridge);
    Outcome::new(v.passed, fmt_checks(&v))
}

fn criterion_9() -> Outcome {
    let v = theorem(TheoremId::P1Dim);
    Outcome::new(v.passed, fmt_checks(&v))
}

fn criterion_10() -> Outcome {
    let family = ModelFamily::categorical(4).unwrap();
    let theta = ParameterVector::new(vec![0.1, 0.2, 0.3]).unwrap();
    let xs = family
        .sample(&theta, FISHER_SAMPLES, rng::derive_seed(SEED, 10))
        .unwrap();
    let emp = empirical_fisher(&family, &theta, &xs).unwrap();
    let ana = analytic_fisher(&family, &theta).unwrap();
    let (e, a) = (emp.dense().unwrap(), ana.dense().unwrap());
    let fisher_err = e
        .iter()
        .zip(a.iter())
        .map(|(x, y)| ((x - y) / y).abs())
        .fold(0.0, f64::max);

    let gram_err = (0..GRAM_CASES as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::seeded(rng::derive_seed_path(SEED, &[11, i]));
            let m = r.random_range(2..=51);
            let family = ModelFamily::categorical(m).unwrap();
            let mut p: Vec<f64> = (0..m).map(|_| r.random_range(0.2..1.0)).collect();
            let z: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= z);
            let theta = ParameterVector::new(p[..m - 1].to_vec()).unwrap();
            let d = m - 1;
            let k = r.random_range(1..=4);
            let cols: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
                .collect();
            let dirs = DirectionMatrix::from_columns(&cols).unwrap();
            let xs = family
                .sample(&theta, 300, rng::derive_seed_path(SEED, &[12, i]))
                .unwrap();
            let dense = empirical_fisher(&family, &theta, &xs)
                .unwrap()
                .project(&dirs)
                .unwrap();
            let gram_op = gram_operator(&family, &theta, &xs, &dirs).unwrap();
            let gram = gram_op.project(&dirs).unwrap();
            let coef: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
            let c = DVector::from_vec(coef.clone());
            let scale = dense.abs().max().max(1.0);
            let entry_err = (&dense - &gram).abs().max() / scale;
            let form_err =
                (c.dot(&(&dense * &c)) - gram_op.quadratic_form(&coef).unwrap()).abs() / scale;
            entry_err.max(form_err)
        })
        .reduce(|| 0.0, f64::max);
    Outcome::new(
        fisher_err <= FISHER_RELATIVE && gram_err <= GRAM_TOL,
        format!("empirical vs analytic max relative {fisher_err:.2e}; gram vs dense max {gram_err:.2e} over {GRAM_CASES} cases"),
    )
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn criterion_11() -> Outcome {
    let cfg = TrainConfig {
        learning_rate: TRAIN_LR,
        epochs: TRAIN_EPOCHS,
        ..TrainConfig::default()
    };
    let single: Vec<(f64, bool)> = (0..TRAIN_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let toy = ToyProblem::generate(&ToySpec::default(), seed).unwrap();
            let params = pretrain_sources(&toy.family, &toy.sources).unwrap();
            let u = train_multi_source(
                &toy.family,
                &toy.target,
                &toy.sources,
                &params,
                &toy.holdout,
                &cfg,
            )
            .unwrap();
            let b = train_target_only(&toy.family, &toy.target, &toy.holdout, &cfg).unwrap();
            let w = u.final_weights();
            (
                b.final_holdout_nll().unwrap() - u.final_holdout_nll().unwrap(),
                w[0] > w[1],
            )
        })
        .collect();
    let diffs: Vec<f64> = single.iter().map(|x| x.0).collect();
    let ordered = single.iter().filter(|x| x.1).count();
    let (m, se) = mean_se(&diffs);

    let multi: Vec<(f64, f64)> = (0..TRAIN_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let (family, _, tasks) = generate_tasks(&ToyTasksSpec::default(), seed).unwrap();
            let joint = train_multi_task(&family, &tasks, &cfg).unwrap();
            let gain = |k: usize| {
                let b =
                    train_target_only(&family, &tasks[k].train, &tasks[k].holdout, &cfg).unwrap();
                b.final_holdout_nll().unwrap() - joint[k].final_holdout_nll().unwrap()
            };
            (gain(0), gain(1))
        })
        .collect();
    let (m1, se1) = mean_se(&multi.iter().map(|x| x.0).collect::<Vec<_>>());
    let (m2, se2) = mean_se(&multi.iter().map(|x| x.1).collect::<Vec<_>>());
    let passed =
        m > SIGMAS * se && ordered >= MIN_ORDERED_SEEDS && m1 > SIGMAS * se1 && m2 > SIGMAS * se2;
    Outcome::new(
        passed,
        format!(
            "NLL gain {m:.4}+-{se:.4}, relevant source weighted higher in {ordered}/{TRAIN_SEEDS}; multi-task gains {m1:.4}+-{se1:.4}, {m2:.4}+-{se2:.4}"
        ),
    )
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_cli(cmd: &str, config: &Path, out: &Path, threads: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_uowq"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", threads, "--gnuplot"])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn criterion_12() -> Outcome {
    let root = repo_root().join("configs");
    let tmp = tempfile::TempDir::new().unwrap();
    let runs = [
        ("weights", "weights.json"),
        ("weights", "weights_empirical.json"),
        ("simulate", "simulate.json"),
        ("sweep", "sweep.json"),
        ("train", "train.json"),
        ("train", "train_multitask.json"),
        ("verify", "verify.json"),
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (cmd, file) in runs {
        let outs: Vec<PathBuf> = ["1a", "1b", "4"]
            .iter()
            .map(|t| tmp.path().join(format!("{file}-{t}")))
            .collect();
        let threads = ["1", "1", "4"];
        if !outs
            .iter()
            .zip(threads)
            .all(|(o, t)| run_cli(cmd, &root.join(file), o, t))
        {
            mismatches.push(format!("{file}: run failed"));
            continue;
        }
        let mut names: Vec<_> = std::fs::read_dir(&outs[0])
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        for name in names.iter().filter(|n| *n != "timings.json") {
            files += 1;
            let first = std::fs::read(outs[0].join(name)).unwrap();
            for o in &outs[1..] {
                if std::fs::read(o.join(name)).ok().as_ref() != Some(&first) {
                    mismatches.push(format!("{file}/{}", name.to_string_lossy()));
                }
            }
        }
    }
    Outcome::new(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{files} output files byte-identical across reruns and --threads 1/4")
        } else {
            format!("differences: {}", mismatches.join(", "))
        },
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "optimal single-source weight", criterion_1),
        (2, "asymptotic formula fidelity", criterion_2),
        (3, "quantity optimality", criterion_3),
        (4, "simplex QP correctness", criterion_4),
        (5, "single-source reduction", criterion_5),
        (6, "multi-source optimality", criterion_6),
        (7, "weighted MLE expectation", criterion_7),
        (8, "MSE to KL bridge", criterion_8),
        (9, "dimension scaling", criterion_9),
        (10, "Fisher machinery", criterion_10),
        (11, "dynamic training", criterion_11),
        (12, "reproducibility", criterion_12),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let o = run();
        println!(
            "criterion {id:>2} {}: {name} | {} [{:.1}s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if id == 3 {
            println!("criterion  3 info: {}", criterion_3_info());
        }
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

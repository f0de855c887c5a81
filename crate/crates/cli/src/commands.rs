use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};
use uowq_core::fisher::projected_gram;
use uowq_core::harness::{
    generate_ensemble, linear_grid, sweep_quantity, sweep_weight, verify_theorem, SweepResult,
    TaskEnsemble, Verification, CSV_HEADER,
};
use uowq_core::kl::mc_expected_kl;
use uowq_core::optimizer::{optimal_plan, sub_budget_profile, QpMatrix, TransferPlan};
use uowq_core::trainer::{
    generate_tasks, pretrain_sources, train_multi_source, train_multi_task, train_target_only,
    ToyProblem, TrainTrace,
};
use uowq_core::{rng, Error, ParameterVector};

use crate::config::{
    FisherSource, PlanSpec, SimulateConfig, SourcesSpec, SweepConfig, TrainMode, TrainRunConfig,
    VerifyConfig, WeightsConfig,
};

/// A CSV table with a header row.
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub struct Outcome {
    pub results: Value,
    pub tables: Vec<Table>,
    /// Gnuplot script body, if the command has curves to plot.
    pub plot: Option<String>,
    /// `Some(false)` when an oracle verdict failed.
    pub verdict: Option<bool>,
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

pub fn weights(cfg: &WeightsConfig) -> Result<Outcome, Error> {
    let (family, theta0) = cfg.family.build()?;
    let ensemble = match &cfg.sources {
        SourcesSpec::Generated(specs) => {
            generate_ensemble(family, theta0, cfg.n0, specs, cfg.seed)?
        }
        SourcesSpec::Explicit(list) => {
            let sources = list
                .iter()
                .map(|s| Ok((ParameterVector::new(s.theta.clone())?, s.budget)))
                .collect::<Result<Vec<_>, Error>>()?;
            TaskEnsemble::from_parameters(family, theta0, cfg.n0, sources)?
        }
    };
    let d = ensemble.dimension();
    let gram = match cfg.fisher {
        FisherSource::Analytic => ensemble.gram()?,
        FisherSource::Empirical { samples } => {
            let mut r = rng::stream(cfg.seed, 0);
            let xs = family.sample_with(&ensemble.theta0, samples, &mut r)?;
            projected_gram(&family, &ensemble.theta0, &xs, &ensemble.directions()?)?
        }
    };
    let budgets = ensemble.budgets();
    let bf: Vec<f64> = budgets.iter().map(|&b| b as f64).collect();
    let qp = QpMatrix::from_gram(gram.clone(), &bf, d)?;
    let plan = optimal_plan(&qp, &budgets, ensemble.n0, d)?;
    let profile = match &cfg.profile_fractions {
        Some(f) => Some(sub_budget_profile(&gram, &budgets, ensemble.n0, d, f)?),
        None => None,
    };
    let rows = (0..budgets.len())
        .map(|i| {
            vec![
                i.to_string(),
                num(plan.alpha[i]),
                num(plan.weights[i]),
                plan.quantities[i].to_string(),
                num(ensemble.sources[i].c),
            ]
        })
        .collect();
    Ok(Outcome {
        results: json!({
            "plan": to_value(&plan),
            "n0": ensemble.n0,
            "d": d,
            "theta0": to_value(&ensemble.theta0),
            "source_thetas": ensemble.sources.iter().map(|s| to_value(&s.theta)).collect::<Vec<_>>(),
            "regime_constants": ensemble.regime_constants(),
            "qp_matrix": matrix_rows(qp.matrix()),
            "profile": profile.map(|p| to_value(&p)),
        }),
        tables: vec![Table {
            name: "plan.csv".into(),
            header: ["source", "alpha", "weight", "quantity", "c"]
                .map(String::from)
                .to_vec(),
            rows,
        }],
        plot: None,
        verdict: None,
    })
}

pub fn simulate(cfg: &SimulateConfig) -> Result<Outcome, Error> {
    if cfg.ensemble.is_none() && cfg.theorem.is_none() {
        return Err(Error::Argument(
            "simulate needs an `ensemble`, a `theorem`, or both".into(),
        ));
    }
    let mut results = serde_json::Map::new();
    let mut tables = Vec::new();
    if let Some(spec) = &cfg.ensemble {
        let ensemble = spec.build(cfg.seed)?;
        let mut rows = Vec::new();
        let mut entries = Vec::new();
        for (i, p) in cfg.plans.iter().enumerate() {
            let plan: TransferPlan = match p {
                PlanSpec::Optimal => ensemble.optimal_plan()?,
                PlanSpec::Explicit {
                    weights,
                    quantities,
                } => {
                    let q = quantities.clone().unwrap_or_else(|| ensemble.budgets());
                    TransferPlan::from_weights(
                        weights,
                        &q,
                        &ensemble.gram()?,
                        ensemble.n0,
                        ensemble.dimension(),
                    )?
                }
            };
            let mc = mc_expected_kl(
                &ensemble,
                &plan,
                cfg.trials,
                rng::derive_seed(cfg.seed, i as u64),
            )?;
            rows.push(vec![
                i.to_string(),
                num(plan.predicted_kl.total),
                num(mc.mean),
                num(mc.std_error),
            ]);
            entries.push(json!({"plan": to_value(&plan), "mc": to_value(&mc)}));
        }
        results.insert("ensemble".into(), to_value(&ensemble));
        results.insert("plans".into(), Value::Array(entries));
        tables.push(Table {
            name: "simulate.csv".into(),
            header: ["plan", "predicted", "mc_mean", "mc_stderr"]
                .map(String::from)
                .to_vec(),
            rows,
        });
    }
    let mut verdict = None;
    if let Some(th) = &cfg.theorem {
        let v = verify_theorem(th, cfg.seed)?;
        verdict = Some(v.passed);
        results.insert("verification".into(), to_value(&v));
    }
    Ok(Outcome {
        results: Value::Object(results),
        tables,
        plot: None,
        verdict,
    })
}

fn sweep_table(name: &str, r: &SweepResult) -> Table {
    Table {
        name: name.into(),
        header: CSV_HEADER.map(String::from).to_vec(),
        rows: r
            .csv_rows()
            .iter()
            .map(|row| row.iter().map(|v| num(*v)).collect())
            .collect(),
    }
}

fn sweep_plot(files: &[(&str, &str)]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset ylabel 'E[KL]'\n",
    );
    for (file, axis) in files {
        s.push_str(&format!(
            "set xlabel '{axis}'\nplot '{file}' using 1:2:3 with yerrorbars title 'Monte Carlo', '' using 1:4 with lines title 'predicted'\npause -1\n"
        ));
    }
    s
}

pub fn sweep(cfg: &SweepConfig) -> Result<Outcome, Error> {
    if cfg.weight.is_none() && cfg.quantity.is_none() {
        return Err(Error::Argument(
            "sweep needs a `weight` grid, a `quantity` grid, or both".into(),
        ));
    }
    let ensemble = cfg.ensemble.build(cfg.seed)?;
    let mut results = serde_json::Map::new();
    let mut tables = Vec::new();
    let mut plots = Vec::new();
    if let Some(g) = &cfg.weight {
        let grid = linear_grid(g.start, g.stop, g.step)?;
        let r = sweep_weight(
            &ensemble,
            cfg.source_index,
            &grid,
            cfg.trials,
            rng::derive_seed(cfg.seed, 1),
            cfg.seed_scheme,
        )?;
        tables.push(sweep_table("sweep_weight.csv", &r));
        plots.push(("sweep_weight.csv", "weight"));
        results.insert("weight".into(), to_value(&r));
    }
    if let Some(q) = &cfg.quantity {
        let r = sweep_quantity(
            &ensemble,
            cfg.source_index,
            &q.grid,
            q.rule,
            cfg.trials,
            rng::derive_seed(cfg.seed, 2),
            cfg.seed_scheme,
        )?;
        tables.push(sweep_table("sweep_quantity.csv", &r));
        plots.push(("sweep_quantity.csv", "quantity"));
        results.insert("quantity".into(), to_value(&r));
    }
    results.insert(
        "discrepancy".into(),
        json!(ensemble.discrepancy(cfg.source_index)?),
    );
    Ok(Outcome {
        results: Value::Object(results),
        tables,
        plot: Some(sweep_plot(&plots)),
        verdict: None,
    })
}

fn trace_table(name: String, trace: &TrainTrace) -> Table {
    let k = trace.records.first().map_or(0, |r| r.weights.len());
    let mut header = vec!["epoch".to_string(), "loss".to_string()];
    header.extend((1..=k).map(|i| format!("w_{i}")));
    header.extend(["grad_norm".to_string(), "holdout_metric".to_string()]);
    let rows = trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.epoch.to_string(), num(r.loss)];
            row.extend(r.weights.iter().map(|w| num(*w)));
            row.push(num(r.grad_norm));
            row.push(r.holdout_nll.map(num).unwrap_or_default());
            row
        })
        .collect();
    Table { name, header, rows }
}

fn trace_summary(t: &TrainTrace) -> Value {
    let last = t.records.last().expect("trace has epoch 0");
    json!({
        "epochs_run": last.epoch,
        "stop_reason": to_value(&t.stop_reason),
        "final_weights": last.weights,
        "final_loss": last.loss,
        "final_holdout_nll": last.holdout_nll,
        "final_holdout_accuracy": last.holdout_accuracy,
        "d": t.d,
        "final_theta": to_value(&t.final_theta),
    })
}

fn trace_plot(files: &[String]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'epoch'\n",
    );
    for f in files {
        s.push_str(&format!("set ylabel 'held-out NLL'\nplot '{f}' using 1:(column('holdout_metric')) with lines\npause -1\n"));
    }
    s
}

pub fn train(cfg: &TrainRunConfig) -> Result<Outcome, Error> {
    let mut results = serde_json::Map::new();
    let mut tables = Vec::new();
    match &cfg.mode {
        TrainMode::MultiSource { toy, baseline } => {
            let problem = ToyProblem::generate(toy, cfg.seed)?;
            let params = pretrain_sources(&problem.family, &problem.sources)?;
            let trace = train_multi_source(
                &problem.family,
                &problem.target,
                &problem.sources,
                &params,
                &problem.holdout,
                &cfg.train,
            )?;
            tables.push(trace_table("trace.csv".into(), &trace));
            results.insert("uowq".into(), trace_summary(&trace));
            if *baseline {
                let base = train_target_only(
                    &problem.family,
                    &problem.target,
                    &problem.holdout,
                    &cfg.train,
                )?;
                tables.push(trace_table("baseline_trace.csv".into(), &base));
                results.insert("target_only".into(), trace_summary(&base));
            }
            results.insert(
                "regime_constants".into(),
                json!(toy.sources.iter().map(|s| s.0).collect::<Vec<_>>()),
            );
        }
        TrainMode::MultiTask { toy, baseline } => {
            let (family, _, tasks) = generate_tasks(toy, cfg.seed)?;
            let traces = train_multi_task(&family, &tasks, &cfg.train)?;
            let mut summaries = Vec::new();
            for (k, t) in traces.iter().enumerate() {
                tables.push(trace_table(format!("trace_task{}.csv", k + 1), t));
                let mut s = trace_summary(t);
                if *baseline {
                    let base =
                        train_target_only(&family, &tasks[k].train, &tasks[k].holdout, &cfg.train)?;
                    s["baseline_holdout_nll"] = json!(base.final_holdout_nll());
                }
                summaries.push(s);
            }
            results.insert("tasks".into(), Value::Array(summaries));
        }
    }
    let files: Vec<String> = tables.iter().map(|t| t.name.clone()).collect();
    Ok(Outcome {
        results: Value::Object(results),
        tables,
        plot: Some(trace_plot(&files)),
        verdict: None,
    })
}

pub fn verify(cfg: &VerifyConfig) -> Result<Outcome, Error> {
    if cfg.theorems.is_empty() {
        return Err(Error::Argument("verify needs at least one theorem".into()));
    }
    let runs = cfg
        .theorems
        .iter()
        .map(|t| verify_theorem(t, cfg.seed))
        .collect::<Result<Vec<Verification>, Error>>()?;
    let passed = runs.iter().all(|v| v.passed);
    let rows = runs
        .iter()
        .flat_map(|v| {
            let id = to_value(&v.theorem)
                .as_str()
                .unwrap_or_default()
                .to_string();
            v.checks.iter().map(move |c| {
                vec![
                    id.clone(),
                    c.name.clone(),
                    c.passed.to_string(),
                    num(c.observed),
                    c.relation.to_string(),
                    num(c.bound),
                ]
            })
        })
        .collect();
    Ok(Outcome {
        results: json!({ "verifications": to_value(&runs) }),
        tables: vec![Table {
            name: "verify.csv".into(),
            header: [
                "theorem", "check", "passed", "observed", "relation", "bound",
            ]
            .map(String::from)
            .to_vec(),
            rows,
        }],
        plot: None,
        verdict: Some(passed),
    })
}

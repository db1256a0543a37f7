use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sdm_core::avg::{average_reward_and_bias, bellman_residual};
use sdm_core::bounds::{
    mle_tabular_model, random_instance, tabular_regularized_improvement, verify_bounds, BoundReport,
};
use sdm_core::data::{generate_dataset, read_dataset, write_dataset, CircleDataset, Dataset, DatasetKind};
use sdm_core::mdp::{stationary_distribution, MdpSpec, TabularMdp, TabularPolicy};
use sdm_core::random::{random_mdp, random_policy};
use sdm_gan::circle::near_circle_fraction;
use sdm_gan::env::{UniformPolicy, ACTION_DIM};
use sdm_gan::trainer::write_metrics_csv;
use sdm_gan::{
    behavior_clone_toy, evaluate_policy, generate_point_mass_dataset, train, train_with_model, Actor, Batch, Policy,
    PointMass, ReferenceReturns, ReturnStats,
};
use sdm_nn::DynamicsEnsemble;

use crate::error::{Error, Result};
use crate::manifest::{Run, RESULTS};
use crate::settings::{DataKind, EvalPolicy, ModelChoice};

fn seed_of(run: &Run) -> Result<u64> {
    run.seed.ok_or(Error::MissingSeed(run.command))
}

fn required<'a>(value: &'a str, key: &str) -> Result<&'a str> {
    if value.is_empty() {
        Err(Error::Config {
            key: key.to_string(),
            message: "a path is required".into(),
        })
    } else {
        Ok(value)
    }
}

fn load_mdp(run: &mut Run, path: &str) -> Result<TabularMdp> {
    run.input(path);
    Ok(TabularMdp::from_spec(&MdpSpec::read_json(path)?)?)
}

fn load_policy(run: &mut Run, path: &str) -> Result<TabularPolicy> {
    run.input(path);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: TabularPolicy = serde_json::from_str(&text)?;
    // re-validate: deserialisation alone does not check the rows
    Ok(TabularPolicy::from_flat(raw.n_states(), raw.n_actions(), raw.probs())?)
}

fn load_dataset(run: &mut Run, path: &str) -> Result<Dataset> {
    run.input(path);
    Ok(read_dataset(path)?)
}

/// The environment recorded in a point-mass dataset, else the configured one.
fn dataset_env(data: &Dataset, fallback: &PointMass) -> Result<PointMass> {
    match data.meta.notes.get("env") {
        Some(text) => Ok(serde_json::from_str(text)?),
        None => Ok(fallback.clone()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct DataSummary {
    kind: &'static str,
    n_transitions: usize,
    n_terminal: usize,
    mean_reward: f64,
}

fn summarize(data: &Dataset) -> DataSummary {
    let n = data.len().max(1) as f64;
    DataSummary {
        kind: data.kind().name(),
        n_transitions: data.len(),
        n_terminal: data.transitions.iter().filter(|t| t.done).count(),
        mean_reward: data.transitions.iter().map(|t| t.r).sum::<f64>() / n,
    }
}

pub fn gen_data(run: &mut Run) -> Result<()> {
    let seed = seed_of(run)?;
    let cfg = run.settings.gen_data.clone();
    let name = if cfg.gzip { "dataset.jsonl.gz" } else { "dataset.jsonl" };
    let data = match cfg.kind {
        DataKind::PointMass => generate_point_mass_dataset(&run.settings.env, cfg.n_transitions, seed)?,
        DataKind::Tabular => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mdp = if cfg.mdp.is_empty() {
                random_mdp(&mut rng, cfg.n_states, cfg.n_actions)
            } else {
                load_mdp(run, &cfg.mdp)?
            };
            let policy = if cfg.policy.is_empty() {
                random_policy(&mut rng, mdp.n_states(), mdp.n_actions())
            } else {
                load_policy(run, &cfg.policy)?
            };
            mdp.to_spec().write_json(run.output("mdp.json"))?;
            write_json(&run.output("policy.json"), &policy)?;
            generate_dataset(&mdp, &policy, cfg.n_transitions, seed)?
        }
    };
    write_dataset(run.output(name), &data)?;
    let summary = summarize(&data);
    println!("{} transitions ({} terminal) -> {}", summary.n_transitions, summary.n_terminal, run.path(name).display());
    run.write_results(&[&summary])?;
    run.write_reports(&[&data.meta])
}

#[derive(Serialize)]
struct SplitSummary {
    split: &'static str,
    n: usize,
    mean_radius: f64,
}

pub fn gen_circle(run: &mut Run) -> Result<()> {
    let seed = seed_of(run)?;
    let circle = CircleDataset::from_config(&run.settings.circle, seed)?;
    let (train, test) = circle.to_datasets();
    write_dataset(run.output("circle_train.jsonl"), &train)?;
    write_dataset(run.output("circle_test.jsonl"), &test)?;
    let summary = |split, pts: &[[f64; 2]]| SplitSummary {
        split,
        n: pts.len(),
        mean_radius: pts.iter().map(|p| p[0].hypot(p[1])).sum::<f64>() / pts.len().max(1) as f64,
    };
    let rows = [summary("train", &circle.train), summary("test", &circle.test)];
    println!("circle: {} train / {} test points", rows[0].n, rows[1].n);
    run.write_results(&rows)?;
    run.write_reports(&[&train.meta, &test.meta])
}

#[derive(Serialize)]
struct PairRow {
    s: usize,
    a: usize,
    d: f64,
    q: f64,
}

#[derive(Serialize)]
struct SolveReport {
    eta: f64,
    state_marginal: Vec<f64>,
    d: Vec<f64>,
    q: Vec<f64>,
    bellman_residual: f64,
}

pub fn solve(run: &mut Run) -> Result<()> {
    let cfg = run.settings.solve.clone();
    let mdp = load_mdp(run, required(&cfg.mdp, "solve.mdp")?)?;
    let policy = if cfg.policy.is_empty() {
        TabularPolicy::uniform(mdp.n_states(), mdp.n_actions())
    } else {
        load_policy(run, &cfg.policy)?
    };
    let d = stationary_distribution(&mdp, &policy)?;
    let dv = average_reward_and_bias(&mdp, &policy, mdp.reward_table())?;
    let residual = bellman_residual(&mdp, &policy, &dv, mdp.reward_table())?;
    let marginal = d.state_marginal();
    let fmt: Vec<String> = marginal.iter().map(|p| format!("{p:.10}")).collect();
    println!("state marginal: ({})", fmt.join(", "));
    println!("eta: {:.10}", dv.eta);
    let na = mdp.n_actions();
    let rows: Vec<PairRow> = (0..mdp.n_pairs())
        .map(|i| PairRow {
            s: i / na,
            a: i % na,
            d: d.probs()[i],
            q: dv.q[i],
        })
        .collect();
    run.write_results(&rows)?;
    run.write_reports(&[SolveReport {
        eta: dv.eta,
        state_marginal: marginal,
        d: d.probs().to_vec(),
        q: dv.q.clone(),
        bellman_residual: residual,
    }])
}

#[derive(Serialize)]
struct InstanceReport<'a> {
    instance: u64,
    n_states: usize,
    n_actions: usize,
    #[serde(flatten)]
    report: &'a BoundReport,
}

pub fn verify(run: &mut Run, workers: usize) -> Result<()> {
    let seed = seed_of(run)?;
    let cfg = run.settings.verify.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let results: Vec<Result<(u64, usize, usize, BoundReport)>> = pool.install(|| {
        (0..cfg.instances)
            .into_par_iter()
            .map(|i| {
                let inst = random_instance(seed, i, &cfg.instance)?;
                let r = verify_bounds(&inst.true_mdp, &inst.model_mdp, &inst.pi_b, &inst.pi, &inst.dict)?;
                Ok((i, inst.true_mdp.n_states(), inst.true_mdp.n_actions(), r))
            })
            .collect()
    });
    let results: Vec<_> = results.into_iter().collect::<Result<_>>()?;

    let path = run.output(RESULTS);
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["instance", "n_states", "n_actions"];
    header.extend(BoundReport::CSV_HEADER);
    w.write_record(&header)?;
    for (i, ns, na, r) in &results {
        let mut row = vec![i.to_string(), ns.to_string(), na.to_string()];
        row.extend(r.csv_record());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let reports: Vec<InstanceReport> = results
        .iter()
        .map(|(i, ns, na, r)| InstanceReport {
            instance: *i,
            n_states: *ns,
            n_actions: *na,
            report: r,
        })
        .collect();
    run.write_reports(&reports)?;

    let failed: Vec<String> = results
        .iter()
        .filter(|(_, _, _, r)| !r.holds.all())
        .map(|(i, _, _, r)| format!("instance {i} ({})", failing_flags(r).join(", ")))
        .collect();
    println!("{} of {} instances hold every checked step", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        Ok(())
    } else {
        for f in &failed {
            println!("violated: {f}");
        }
        Err(Error::CheckFailed(format!("{} instance(s) violate a bound step", failed.len())))
    }
}

fn failing_flags(r: &BoundReport) -> Vec<&'static str> {
    let h = &r.holds;
    [
        ("thm31_identity", h.thm31_identity),
        ("split", h.split),
        ("circ1_exchange", h.circ1_exchange),
        ("circ1_tv", h.circ1_tv),
        ("circ1_l1", h.circ1_l1),
        ("tv_pinsker", h.tv_pinsker),
        ("circ2_r_psi", h.circ2_r_psi),
        ("thm32", h.thm32),
        ("thm34", h.thm34),
    ]
    .into_iter()
    .filter(|(_, ok)| !ok)
    .map(|(name, _)| name)
    .collect()
}

#[derive(Serialize)]
struct TabularFitRow {
    n_states: usize,
    n_actions: usize,
    n_transitions: usize,
    unvisited_pairs: usize,
    smoothing: f64,
}

#[derive(Serialize)]
struct MemberRow {
    member: usize,
    validation_loss: f64,
    elite: bool,
}

pub fn fit_model(run: &mut Run) -> Result<()> {
    let cfg = run.settings.fit_model.clone();
    let data = load_dataset(run, required(&cfg.data, "fit_model.data")?)?;
    match data.kind() {
        DatasetKind::Tabular => {
            let model = mle_tabular_model(&data, cfg.smoothing)?;
            model.write_json(run.output("model.json"))?;
            let (ns, na) = (model.n_states, model.n_actions);
            let unvisited = model.counts.chunks(ns).filter(|row| row.iter().sum::<f64>() == 0.0).count();
            println!("tabular MLE: {ns} states, {na} actions, {unvisited} unvisited pairs");
            run.write_results(&[TabularFitRow {
                n_states: ns,
                n_actions: na,
                n_transitions: data.len(),
                unvisited_pairs: unvisited,
                smoothing: cfg.smoothing,
            }])?;
            run.write_reports(&[&model])
        }
        DatasetKind::Continuous => {
            let seed = seed_of(run)?;
            let batch = Batch::from_dataset(&data)?;
            let ens = DynamicsEnsemble::train(&batch.to_dynamics_data(), &run.settings.ensemble, seed)?;
            ens.save_json(run.output("ensemble.json"))?;
            let rows: Vec<MemberRow> = ens
                .validation_losses
                .iter()
                .enumerate()
                .map(|(m, l)| MemberRow {
                    member: m,
                    validation_loss: *l,
                    elite: ens.elites.contains(&m),
                })
                .collect();
            println!("ensemble: {} members, elites {:?}", rows.len(), ens.elites);
            run.write_results(&rows)?;
            run.write_reports(&[serde_json::json!({
                "elites": ens.elites,
                "validation_losses": ens.validation_losses,
                "config_hash": ens.config_hash,
            })])
        }
    }
}

#[derive(Serialize)]
struct TrainSummary {
    final_mean_return: f64,
    final_std_return: f64,
    final_normalized: f64,
    behavior_mean_return: f64,
    behavior_normalized: f64,
    random_return: f64,
    expert_return: f64,
    eval_seed: u64,
    skip_count: usize,
    actor_steps: usize,
}

pub fn train_cmd(run: &mut Run) -> Result<()> {
    let seed = seed_of(run)?;
    let cfg = run.settings.train.clone();
    let data = if cfg.data.is_empty() {
        generate_point_mass_dataset(&run.settings.env, run.settings.gen_data.n_transitions, seed)?
    } else {
        load_dataset(run, &cfg.data)?
    };
    if data.kind() == DatasetKind::Tabular {
        return train_tabular(run, &data);
    }
    let env = dataset_env(&data, &run.settings.env)?;
    let trainer = run.settings.trainer.clone();
    let outcome = match cfg.model {
        ModelChoice::Ensemble => {
            let (outcome, ens) = train(&data, &env, &trainer, &run.settings.ensemble, seed)?;
            ens.save_json(run.output("ensemble.json"))?;
            outcome
        }
        ModelChoice::Exact => train_with_model(&data, &env, &env, &trainer, seed)?,
    };
    outcome.actor.save_json(run.output("actor.json"))?;
    let path = run.output(RESULTS);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_metrics_csv(file, &outcome.metrics)?;

    let last = outcome.metrics.last().ok_or_else(|| Error::Invalid("trainer.epochs must be positive".into()))?;
    let episodes = trainer.eval_episodes;
    let refs = ReferenceReturns::measure(&env, episodes, outcome.final_eval_seed)?;
    let behavior = evaluate_policy(&env, &env.behavior(), episodes, outcome.final_eval_seed)?;
    let summary = TrainSummary {
        final_mean_return: last.mean_return,
        final_std_return: last.std_return,
        final_normalized: refs.normalize(last.mean_return),
        behavior_mean_return: behavior.mean,
        behavior_normalized: refs.normalize(behavior.mean),
        random_return: refs.random,
        expert_return: refs.expert,
        eval_seed: outcome.final_eval_seed,
        skip_count: outcome.skip_count,
        actor_steps: outcome.actor_log.len(),
    };
    println!(
        "final return {:.3} (normalized {:.3}); behavior {:.3} (normalized {:.3})",
        summary.final_mean_return, summary.final_normalized, summary.behavior_mean_return, summary.behavior_normalized
    );
    let mut reports: Vec<serde_json::Value> =
        outcome.metrics.iter().map(serde_json::to_value).collect::<std::result::Result<_, _>>()?;
    reports.push(serde_json::json!({ "summary": summary }));
    run.write_reports(&reports)
}

fn train_tabular(run: &mut Run, data: &Dataset) -> Result<()> {
    let cfg = run.settings.train.clone();
    let mdp = load_mdp(run, required(&cfg.mdp, "train.mdp")?)?;
    let out = tabular_regularized_improvement(&mdp, data, &cfg.improvement)?;
    write_json(&run.output("policy.json"), out.final_policy())?;
    let last = out.diagnostics.last().expect("initial diagnostics");
    println!("tabular improvement: {} steps, exact reward {:.6}", out.diagnostics.len() - 1, last.exact_reward);
    run.write_results(&out.diagnostics)?;
    run.write_reports(&out.diagnostics)
}

#[derive(Serialize)]
struct CloneRow {
    kind: &'static str,
    coverage: f64,
    near_circle: f64,
    final_disc_loss: f64,
    final_gen_loss: f64,
}

#[derive(Serialize)]
struct SampleRow {
    x: f64,
    y: f64,
}

pub fn clone_circle(run: &mut Run) -> Result<()> {
    let seed = seed_of(run)?;
    let circle = CircleDataset::from_config(&run.settings.circle, seed)?;
    let cfg = run.settings.clone_circle.clone();
    let clone = run.settings.clone.clone();
    let xs: Vec<f64> = circle.test.iter().map(|p| p[0]).collect();
    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        let out = behavior_clone_toy(&circle, kind, &clone, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let near = near_circle_fraction(&out.generator, &xs, circle.config.radius, cfg.near_circle_tol, 1, &mut rng)?;
        write_json(&run.output(&format!("generator_{}.json", kind.name())), &out.generator)?;
        let plot: Vec<f64> = xs.iter().flat_map(|x| std::iter::repeat(*x).take(cfg.plot_draws)).collect();
        let input = Array2::from_shape_vec((plot.len(), 1), plot.clone()).expect("one column");
        let y = out.generator.sample(input.view(), &mut rng)?;
        let samples: Vec<SampleRow> = plot.iter().zip(y.column(0)).map(|(x, y)| SampleRow { x: *x, y: *y }).collect();
        let path = run.output(&format!("samples_{}.csv", kind.name()));
        let mut w = csv::Writer::from_path(&path)?;
        for s in &samples {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        println!("{}: coverage {:.3}, near circle {:.3}", kind.name(), out.coverage, near);
        rows.push(CloneRow {
            kind: kind.name(),
            coverage: out.coverage,
            near_circle: near,
            final_disc_loss: out.final_disc_loss,
            final_gen_loss: out.final_gen_loss,
        });
    }
    run.write_results(&rows)?;
    run.write_reports(&rows)
}

#[derive(Serialize)]
struct EpisodeRow {
    episode: usize,
    ret: f64,
}

pub fn eval(run: &mut Run) -> Result<()> {
    let seed = seed_of(run)?;
    let cfg = run.settings.eval.clone();
    let env = run.settings.env.clone();
    let policy: Box<dyn Policy> = match cfg.policy {
        EvalPolicy::Actor => {
            let path = required(&cfg.actor, "eval.actor")?;
            run.input(path);
            Box::new(Actor::load_json(path)?)
        }
        EvalPolicy::Behavior => Box::new(env.behavior()),
        EvalPolicy::Expert => Box::new(env.expert()),
        EvalPolicy::Random => Box::new(UniformPolicy { dim: ACTION_DIM }),
    };
    let stats: ReturnStats = evaluate_policy(&env, policy.as_ref(), cfg.episodes, seed)?;
    let refs = ReferenceReturns::measure(&env, cfg.episodes, seed)?;
    println!("mean return {:.4} +- {:.4} (normalized {:.4})", stats.mean, stats.std, refs.normalize(stats.mean));
    let rows: Vec<EpisodeRow> = stats.returns.iter().enumerate().map(|(episode, r)| EpisodeRow { episode, ret: *r }).collect();
    run.write_results(&rows)?;
    run.write_reports(&[serde_json::json!({
        "mean": stats.mean,
        "std": stats.std,
        "normalized": refs.normalize(stats.mean),
        "random_return": refs.random,
        "expert_return": refs.expert,
    })])
}

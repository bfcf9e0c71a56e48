//! Demo runner: per-seed optimization loops over the bundled environments,
//! with JSONL step logs, a learning-curve CSV and a DOT dump of the final
//! epoch's trace.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use thiserror::Error;

use opto_core::propagate::try_gradients;
use opto_core::report::export_dot;
use opto_core::{Graph, NodeId, Value};
use opto_envs::battleship::{battleship_reset, run_episode, shot_graph};
use opto_envs::binmatch::{binmatch_evaluate, binmatch_generate};
use opto_envs::fig4::{fig4_build, FIG4_FEEDBACK};
use opto_envs::numopt::{numopt_feedback, numopt_generate};
use opto_optim::llmclient::{BackendConfig, ChatBackend, HttpBackend, ScriptedBackend};
use opto_optim::optoprime::OptimError;
use opto_optim::{adam_step, AdamState, Opro, OptoPrime, StepRecord};

/// The broken starting policy for the battleship demo: it indexes past the
/// end of the board, so the very first epoch ends in an exception node and
/// the optimizer has to repair the code from the error feedback.
pub const INITIAL_BATTLESHIP_POLICY: &str = "fn act(map, plan) { map[99] }";

pub const DEFAULT_SHIP_LENGTHS: [usize; 4] = [4, 3, 3, 2];
pub const DEFAULT_MISS_BUDGET: usize = 20;
pub const BATTLESHIP_EVAL_GAMES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Demo {
    Fig4,
    NumOpt,
    BinMatch,
    Battleship,
}

impl Demo {
    pub fn parse(name: &str) -> Option<Demo> {
        match name {
            "fig4" => Some(Demo::Fig4),
            "numopt" => Some(Demo::NumOpt),
            "binmatch" => Some(Demo::BinMatch),
            "battleship" => Some(Demo::Battleship),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    Scripted,
    Adam,
    Llm,
}

impl BackendChoice {
    pub fn parse(name: &str) -> Option<BackendChoice> {
        match name {
            "scripted" => Some(BackendChoice::Scripted),
            "adam" => Some(BackendChoice::Adam),
            "llm" => Some(BackendChoice::Llm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub demo: Demo,
    pub backend: BackendChoice,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub bits: usize,
    pub width: usize,
    pub height: usize,
    /// Trace-masked ablation (scripted numeric backend only).
    pub masked: bool,
    pub model: Option<String>,
    pub base_url: Option<String>,
}

impl RunConfig {
    pub fn new(demo: Demo, backend: BackendChoice) -> Self {
        RunConfig {
            demo,
            backend,
            steps: 30,
            seeds: vec![0],
            out_dir: None,
            bits: 8,
            width: 8,
            height: 8,
            masked: false,
            model: None,
            base_url: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::BackendUnavailable(inner) => CliError::Backend(inner.to_string()),
            other => CliError::Backend(other.to_string()),
        }
    }
}

/// One seed's trajectory.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    /// Per-iteration task metric, measured before each optimizer step.
    pub metrics: Vec<f64>,
    pub records: Vec<StepRecord>,
    /// Metric of the final parameters, measured after the last step.
    pub final_metric: f64,
    /// First iteration whose evaluation already met the goal, if any.
    pub success_iteration: Option<usize>,
    /// DOT text of the final epoch's trace.
    pub final_dot: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub runs: Vec<SeedRun>,
    pub mean_final: f64,
    pub stderr_final: f64,
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn make_backend(config: &RunConfig, seed: u64) -> Result<Box<dyn ChatBackend>, CliError> {
    match config.backend {
        BackendChoice::Scripted | BackendChoice::Adam => Ok(Box::new(ScriptedBackend::new(seed))),
        BackendChoice::Llm => {
            let mut backend_config = BackendConfig::from_env()
                .map_err(|e| CliError::Config(format!("llm backend: {e}")))?;
            if let Some(model) = &config.model {
                backend_config.model = model.clone();
            }
            if let Some(base_url) = &config.base_url {
                backend_config.base_url = base_url.trim_end_matches('/').to_string();
            }
            Ok(Box::new(HttpBackend::new(backend_config)))
        }
    }
}

fn validate(config: &RunConfig) -> Result<(), CliError> {
    if config.backend == BackendChoice::Adam && config.demo != Demo::NumOpt {
        return Err(CliError::Config(
            "the adam backend is only valid for the numopt demo".to_string(),
        ));
    }
    if config.steps == 0 {
        return Err(CliError::Config("steps must be positive".to_string()));
    }
    if config.seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".to_string()));
    }
    if config.demo == Demo::BinMatch && config.bits == 0 {
        return Err(CliError::Config("bits must be positive".to_string()));
    }
    Ok(())
}

/// Runs the configured demo over every seed, writes artifacts when an
/// output directory is set, and returns the per-seed trajectories.
pub fn run(config: &RunConfig) -> Result<RunSummary, CliError> {
    validate(config)?;
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let run = match config.demo {
            Demo::Fig4 => run_fig4(config, seed)?,
            Demo::NumOpt => run_numopt(config, seed)?,
            Demo::BinMatch => run_binmatch_graph_aware(config, seed)?,
            Demo::Battleship => run_battleship(config, seed)?,
        };
        runs.push(run);
    }
    let finals: Vec<f64> = runs.iter().map(|r| r.final_metric).collect();
    let (mean_final, stderr_final) = mean_and_stderr(&finals);
    let summary = RunSummary {
        runs,
        mean_final,
        stderr_final,
    };
    if let Some(dir) = &config.out_dir {
        write_artifacts(dir, &summary)?;
    }
    Ok(summary)
}

fn write_artifacts(dir: &PathBuf, summary: &RunSummary) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut steps = fs::File::create(dir.join("steps.jsonl"))?;
    for run in &summary.runs {
        for record in &run.records {
            writeln!(steps, "{}", record.to_json_line())?;
        }
    }
    // curve.csv columns: iteration, metric, seed (no header; exactly
    // steps x seeds data rows).
    let mut curve = fs::File::create(dir.join("curve.csv"))?;
    for run in &summary.runs {
        for (iteration, metric) in run.metrics.iter().enumerate() {
            writeln!(curve, "{},{},{}", iteration, metric, run.seed)?;
        }
    }
    fs::write(
        dir.join("graph.dot"),
        summary
            .runs
            .first()
            .map(|r| r.final_dot.as_str())
            .unwrap_or("digraph g { }\n"),
    )?;
    Ok(())
}

/// The worked example: maximize z = bar(x) * (bar(x) + 1) from x = -1.
pub fn run_fig4(config: &RunConfig, seed: u64) -> Result<SeedRun, CliError> {
    let backend = make_backend(config, seed)?;
    let mut optimizer = OptoPrime::new(backend);
    if config.masked {
        optimizer = optimizer.masked();
    }
    let mut x = -1.0;
    let mut metrics = Vec::new();
    let mut records = Vec::new();
    let mut final_dot = String::new();
    for iteration in 0..config.steps {
        let mut instance = fig4_build(x);
        metrics.push(instance.output_value());
        let mut record =
            optimizer.step(&mut instance.graph, &[instance.x], instance.z, FIG4_FEEDBACK)?;
        record.iteration = iteration as u64;
        record.seed = seed;
        record.metric = Some(instance.output_value());
        records.push(record);
        x = instance
            .graph
            .node(instance.x)
            .expect("x exists")
            .value
            .as_number()
            .expect("x numeric");
        final_dot = export_dot(&instance.graph, None);
    }
    let final_metric = fig4_build(x).output_value();
    Ok(SeedRun {
        seed,
        metrics,
        records,
        final_metric,
        success_iteration: None,
        final_dot,
    })
}

/// Synthetic numerical optimization of |y - y*|, by scripted sign feedback,
/// Adam over backward gradients, or a live model.
pub fn run_numopt(config: &RunConfig, seed: u64) -> Result<SeedRun, CliError> {
    let instance = numopt_generate(seed, 6);
    let mut x = instance.x0;
    let mut metrics = Vec::new();
    let mut records = Vec::new();
    let mut final_dot = String::new();
    let mut success_iteration = None;

    match config.backend {
        BackendChoice::Adam => {
            let mut state = AdamState::default();
            for iteration in 0..config.steps {
                let mut built = instance.build(x);
                let y = built.output_value();
                let loss = (y - instance.target).abs();
                metrics.push(loss);
                if success_iteration.is_none() && loss <= 1e-6 {
                    success_iteration = Some(iteration);
                }
                let gradients = try_gradients(&built.graph, built.y)
                    .ok_or_else(|| CliError::Backend("gradient pass failed".to_string()))?;
                let dy_dx = gradients.get(&built.x).copied().unwrap_or(0.0);
                // Gradient of the smooth surrogate (y - y*)^2 / 2; same
                // minimizer as |y - y*| but it lets Adam settle instead of
                // limit-cycling on a constant-magnitude sign gradient.
                let grads: BTreeMap<String, f64> =
                    [("x".to_string(), (y - instance.target) * dy_dx)].into();
                adam_step(&mut built.graph, &[built.x], &grads, &mut state)
                    .map_err(|e| CliError::Backend(e.to_string()))?;
                let mut record = StepRecord {
                    iteration: iteration as u64,
                    seed,
                    metric: Some(loss),
                    ..Default::default()
                };
                record.apply.applied.push("x".to_string());
                records.push(record);
                x = built
                    .graph
                    .node(built.x)
                    .expect("x exists")
                    .value
                    .as_number()
                    .expect("x numeric");
                final_dot = export_dot(&built.graph, None);
            }
        }
        _ => {
            let backend = make_backend(config, seed)?;
            let mut optimizer = OptoPrime::new(backend);
            if config.masked {
                optimizer = optimizer.masked();
            }
            for iteration in 0..config.steps {
                let mut built = instance.build(x);
                let y = built.output_value();
                let loss = (y - instance.target).abs();
                metrics.push(loss);
                if success_iteration.is_none() && loss <= 1e-6 {
                    success_iteration = Some(iteration);
                }
                let feedback = numopt_feedback(y, instance.target);
                let mut record = optimizer.step(&mut built.graph, &[built.x], built.y, &feedback)?;
                record.iteration = iteration as u64;
                record.seed = seed;
                record.metric = Some(loss);
                records.push(record);
                x = built
                    .graph
                    .node(built.x)
                    .expect("x exists")
                    .value
                    .as_number()
                    .expect("x numeric");
                final_dot = export_dot(&built.graph, None);
            }
        }
    }
    let final_metric = (instance.evaluate(x) - instance.target).abs();
    Ok(SeedRun {
        seed,
        metrics,
        records,
        final_metric,
        success_iteration,
        final_dot,
    })
}

fn bits_of(graph: &Graph, bit_nodes: &[NodeId]) -> Vec<bool> {
    bit_nodes
        .iter()
        .map(|&id| {
            graph
                .node(id)
                .expect("bit exists")
                .value
                .as_bool()
                .expect("bits are boolean")
        })
        .collect()
}

fn passed_fraction(failed_check: Option<usize>, k: usize) -> f64 {
    match failed_check {
        Some(n) => (n - 1) as f64 / k as f64,
        None => 1.0,
    }
}

/// Binary match with the trace-aware scripted proposer: each failing check
/// is traced to its bit parent, so success takes at most one step per
/// wrong bit.
pub fn run_binmatch_graph_aware(config: &RunConfig, seed: u64) -> Result<SeedRun, CliError> {
    let instance = binmatch_generate(config.bits, seed);
    let mut param = instance.random_bits(seed);
    let backend = make_backend(config, seed)?;
    let mut optimizer = OptoPrime::new(backend);
    let mut metrics = Vec::new();
    let mut records = Vec::new();
    let mut final_dot = String::new();
    let mut success_iteration = None;
    for iteration in 0..config.steps {
        let mut eval =
            binmatch_evaluate(&instance, &param).map_err(|e| CliError::Config(e.to_string()))?;
        let passed = passed_fraction(eval.failed_check, instance.k);
        metrics.push(passed);
        if eval.succeeded && success_iteration.is_none() {
            success_iteration = Some(iteration);
        }
        let feedback = eval.feedback.clone();
        let bits = eval.bits.clone();
        let mut record = optimizer.step(&mut eval.graph, &bits, eval.output, &feedback)?;
        record.iteration = iteration as u64;
        record.seed = seed;
        record.metric = Some(passed);
        records.push(record);
        param = bits_of(&eval.graph, &eval.bits);
        final_dot = export_dot(&eval.graph, None);
    }
    let final_eval =
        binmatch_evaluate(&instance, &param).map_err(|e| CliError::Config(e.to_string()))?;
    if final_eval.succeeded && success_iteration.is_none() {
        success_iteration = Some(config.steps);
    }
    Ok(SeedRun {
        seed,
        metrics,
        records,
        final_metric: passed_fraction(final_eval.failed_check, instance.k),
        success_iteration,
        final_dot,
    })
}

/// Binary match driven by the memory-only baseline: no trace, so the
/// proposer walks bit positions blindly from the best assignment seen.
pub fn run_binmatch_memory_only(config: &RunConfig, seed: u64) -> Result<SeedRun, CliError> {
    let instance = binmatch_generate(config.bits, seed);
    let mut param = instance.random_bits(seed);
    // One persistent parameter graph holds the trainable bits.
    let mut graph = Graph::new();
    let bits: Vec<NodeId> = (0..instance.k)
        .map(|i| {
            graph
                .create_node(
                    Value::Boolean(param[i]),
                    opto_core::NodeOptions::named(&format!("bit{i}")).trainable(),
                )
                .expect("fresh graph")
        })
        .collect();
    let backend = make_backend(config, seed)?;
    // Full history: the round-robin bit walk needs to see how many
    // proposals it has made, and a longer memory only helps the baseline.
    let mut opro = Opro::new(backend).with_memory_capacity(config.steps.max(10));
    let mut metrics = Vec::new();
    let mut records = Vec::new();
    let mut success_iteration = None;
    for iteration in 0..config.steps {
        let eval =
            binmatch_evaluate(&instance, &param).map_err(|e| CliError::Config(e.to_string()))?;
        let passed = passed_fraction(eval.failed_check, instance.k);
        metrics.push(passed);
        if eval.succeeded && success_iteration.is_none() {
            success_iteration = Some(iteration);
        }
        let mut record = opro.step(&mut graph, &bits, &eval.feedback)?;
        record.iteration = iteration as u64;
        record.seed = seed;
        record.metric = Some(passed);
        records.push(record);
        param = bits_of(&graph, &bits);
    }
    let final_eval =
        binmatch_evaluate(&instance, &param).map_err(|e| CliError::Config(e.to_string()))?;
    if final_eval.succeeded && success_iteration.is_none() {
        success_iteration = Some(config.steps);
    }
    Ok(SeedRun {
        seed,
        metrics,
        records,
        final_metric: passed_fraction(final_eval.failed_check, instance.k),
        success_iteration,
        final_dot: export_dot(&graph, None),
    })
}

pub fn battleship_eval_mean(policy_source: &str, config: &RunConfig, seed: u64) -> f64 {
    let Ok(policy) = opto_core::exprlang::parse(policy_source) else {
        return 0.0;
    };
    let mut total = 0.0;
    for game in 0..BATTLESHIP_EVAL_GAMES {
        let eval_seed = seed * 7919 + 1000 + game as u64;
        let Ok((mut board, _)) =
            battleship_reset(config.width, config.height, &DEFAULT_SHIP_LENGTHS, eval_seed)
        else {
            return 0.0;
        };
        let outcome = run_episode(&policy, &mut board, DEFAULT_MISS_BUDGET);
        total += outcome.reward;
    }
    total / BATTLESHIP_EVAL_GAMES as f64
}

/// Battleship: each iteration plays a training episode with the current
/// policy code, then asks the optimizer to rewrite the code from the
/// episode feedback (or from the execution error, when the policy crashes).
pub fn run_battleship(config: &RunConfig, seed: u64) -> Result<SeedRun, CliError> {
    let backend = make_backend(config, seed)?;
    let mut optimizer = OptoPrime::new(backend);
    let mut policy_source = INITIAL_BATTLESHIP_POLICY.to_string();
    let mut metrics = Vec::new();
    let mut records = Vec::new();
    let mut final_dot = String::new();
    for iteration in 0..config.steps {
        metrics.push(battleship_eval_mean(&policy_source, config, seed));

        let train_seed = seed * 31 + iteration as u64;
        let (mut board, _) =
            battleship_reset(config.width, config.height, &DEFAULT_SHIP_LENGTHS, train_seed)
                .map_err(|e| CliError::Config(e.to_string()))?;
        let policy =
            opto_core::exprlang::parse(&policy_source).expect("stored policies always parse");
        let outcome = run_episode(&policy, &mut board, DEFAULT_MISS_BUDGET);
        board
            .check_invariants()
            .map_err(|e| CliError::Backend(format!("environment invariant broken: {e}")))?;

        let feedback = match (&outcome.error, outcome.done) {
            (Some(error), _) => error.clone(),
            (None, true) => format!("You sank all the ships in {} turns.", outcome.shots_taken),
            (None, false) => format!(
                "Episode over: you hit {} of {} ship squares in {} turns.",
                board.hits(),
                board.ship_cell_count(),
                outcome.shots_taken
            ),
        };

        let shot =
            shot_graph(&board, &policy_source).map_err(|e| CliError::Backend(e.to_string()))?;
        let mut graph = shot.graph;
        let mut record = optimizer.step(&mut graph, &[shot.policy], shot.output, &feedback)?;
        record.iteration = iteration as u64;
        record.seed = seed;
        record.metric = Some(outcome.reward);
        records.push(record);
        policy_source = graph
            .node(shot.policy)
            .expect("policy exists")
            .value
            .as_code()
            .expect("policy is code")
            .to_string();
        final_dot = export_dot(&graph, None);
    }
    let final_metric = battleship_eval_mean(&policy_source, config, seed);
    Ok(SeedRun {
        seed,
        metrics,
        records,
        final_metric,
        success_iteration: None,
        final_dot,
    })
}

/// Renders the iteration-0 problem report for a demo; byte-stable across
/// runs.
pub fn dump_report(config: &RunConfig, seed: u64) -> Result<String, CliError> {
    use opto_core::propagate::{backward, MinimalSubgraphPropagator};
    use opto_core::report::render_report;
    use opto_optim::prompts::DEFAULT_INSTRUCTION;

    let report = match config.demo {
        Demo::Fig4 => {
            let mut instance = fig4_build(-1.0);
            let run = backward(
                &mut instance.graph,
                instance.z,
                FIG4_FEEDBACK,
                &MinimalSubgraphPropagator,
            )
            .map_err(|e| CliError::Backend(e.to_string()))?;
            let subgraph = run
                .subgraph_at(instance.x)
                .expect("x reaches z")
                .nodes
                .clone();
            render_report(
                &instance.graph,
                &subgraph,
                &[instance.x],
                instance.z,
                DEFAULT_INSTRUCTION,
                FIG4_FEEDBACK,
            )
            .map_err(|e| CliError::Backend(e.to_string()))?
        }
        Demo::NumOpt => {
            let instance = numopt_generate(seed, 6);
            let mut built = instance.build(instance.x0);
            let y = built.output_value();
            let feedback = numopt_feedback(y, instance.target);
            let run = backward(&mut built.graph, built.y, &feedback, &MinimalSubgraphPropagator)
                .map_err(|e| CliError::Backend(e.to_string()))?;
            let subgraph = run.subgraph_at(built.x).expect("x reaches y").nodes.clone();
            render_report(
                &built.graph,
                &subgraph,
                &[built.x],
                built.y,
                DEFAULT_INSTRUCTION,
                &feedback,
            )
            .map_err(|e| CliError::Backend(e.to_string()))?
        }
        Demo::BinMatch => {
            let instance = binmatch_generate(config.bits, seed);
            let param = instance.random_bits(seed);
            binmatch_report(&instance, &param)?
        }
        Demo::Battleship => {
            let (board, _) =
                battleship_reset(config.width, config.height, &DEFAULT_SHIP_LENGTHS, seed)
                    .map_err(|e| CliError::Config(e.to_string()))?;
            let shot = shot_graph(&board, INITIAL_BATTLESHIP_POLICY)
                .map_err(|e| CliError::Backend(e.to_string()))?;
            let feedback = shot
                .trapped
                .clone()
                .unwrap_or_else(|| "Episode not started.".to_string());
            let mut graph = shot.graph;
            let run = backward(&mut graph, shot.output, &feedback, &MinimalSubgraphPropagator)
                .map_err(|e| CliError::Backend(e.to_string()))?;
            let subgraph = run
                .subgraph_at(shot.policy)
                .expect("policy reaches output")
                .nodes
                .clone();
            render_report(
                &graph,
                &subgraph,
                &[shot.policy],
                shot.output,
                DEFAULT_INSTRUCTION,
                &feedback,
            )
            .map_err(|e| CliError::Backend(e.to_string()))?
        }
    };
    Ok(report)
}

/// The report for one binary-match evaluation of `param`.
pub fn binmatch_report(
    instance: &opto_envs::binmatch::BinMatchInstance,
    param: &[bool],
) -> Result<String, CliError> {
    use opto_core::propagate::{backward, MinimalSubgraphPropagator};
    use opto_core::report::render_report;
    use opto_optim::prompts::DEFAULT_INSTRUCTION;

    let mut eval =
        binmatch_evaluate(instance, param).map_err(|e| CliError::Config(e.to_string()))?;
    let feedback = eval.feedback.clone();
    let run = backward(&mut eval.graph, eval.output, &feedback, &MinimalSubgraphPropagator)
        .map_err(|e| CliError::Backend(e.to_string()))?;
    // Only the examined bits appear; merge their delivered subgraphs.
    let mut subgraph = opto_core::NodeSet::new();
    let mut reached = Vec::new();
    for &bit in &eval.bits {
        if let Some(tf) = run.subgraph_at(bit) {
            subgraph = subgraph.union(&tf.nodes);
            reached.push(bit);
        }
    }
    render_report(
        &eval.graph,
        &subgraph,
        &reached,
        eval.output,
        DEFAULT_INSTRUCTION,
        &feedback,
    )
    .map_err(|e| CliError::Backend(e.to_string()))
}

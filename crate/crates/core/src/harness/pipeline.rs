use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{ActionsConfig, RunConfig};
use super::evaluate::{evaluate, scores_from_csv, scores_to_csv, seeds, EpisodeResult, Flat};
use super::report::{report_from_scores, MilestoneReport};
use crate::agents::{
    train_choptree, train_craft_wooden, train_digstone, Acting, AgentKind, BcClassifier,
    ChopTreePolicy, CraftStonePolicy, CraftWoodenPolicy, DigStonePolicy, ExplorationSchedule,
    FlatBcPolicy, RandomSearchPolicy,
};
use crate::budget::FrameBudget;
use crate::codec::Codec;
use crate::demos::{self, extract_critical_steps, generate_demos, Dataset, PhaseFilter};
use crate::discretize::{
    build_action_table, critical_table, default_lambda, dp_cluster_fit, kmeans_fit,
    split_actions_by_inventory_change, DiscreteActionTable,
};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::scheduler::{
    compute_thresholds, label_dataset, train_scheduler, DivisionThresholds, HierarchicalPolicy,
    SchedulerModel,
};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
        }
    }

    pub fn render(self, r: &MilestoneReport) -> String {
        match self {
            ReportFormat::Markdown => r.to_markdown(),
            ReportFormat::Csv => r.to_csv(),
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Config(format!(
                "unknown report format `{s}` (expected markdown or csv)"
            ))),
        }
    }
}

/// Artifact directory layout: `demos/`, `models/`, `reports/`.
#[derive(Clone, Debug)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn file(&self, dir: &str, stem: &str, ext: &str) -> PathBuf {
        self.root
            .join(dir)
            .join(format!("{stem}-v{ARTIFACT_VERSION}.{ext}"))
    }

    pub fn demos(&self) -> PathBuf {
        self.file("demos", "demos", "bin")
    }

    pub fn actions(&self) -> PathBuf {
        self.file("models", "actions", "ckpt")
    }

    pub fn agent(&self, kind: AgentKind) -> PathBuf {
        self.file("models", kind.name(), "ckpt")
    }

    pub fn scheduler(&self) -> PathBuf {
        self.file("models", "scheduler", "ckpt")
    }

    pub fn baseline_model(&self) -> PathBuf {
        self.file("models", "baseline", "ckpt")
    }

    pub fn manifest(&self) -> PathBuf {
        self.file("models", "manifest", "json")
    }

    pub fn budget(&self) -> PathBuf {
        self.file("models", "budget", "json")
    }

    pub fn scores(&self) -> PathBuf {
        self.file("reports", "scores", "csv")
    }

    pub fn report(&self, f: ReportFormat) -> PathBuf {
        self.file("reports", "report", f.extension())
    }

    pub fn baseline_scores(&self) -> PathBuf {
        self.file("reports", "baseline-scores", "csv")
    }

    pub fn baseline_report(&self, f: ReportFormat) -> PathBuf {
        self.file("reports", "baseline-report", f.extension())
    }
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            stage: stage.to_string(),
        })
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn agent_stage(kind: AgentKind) -> String {
    format!("train-agent --kind {}", kind.name())
}

fn load_ckpt(path: &Path, stage: &str) -> Result<Checkpoint> {
    require(path, stage)?;
    Checkpoint::load(path)
}

fn meta_u64(ck: &Checkpoint, key: &str) -> Result<u64> {
    ck.meta
        .get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Format(format!("checkpoint metadata lacks `{key}`")))
}

fn meta_acting(ck: &Checkpoint) -> Result<Acting> {
    ck.meta
        .get("acting")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .ok_or_else(|| Error::Format("checkpoint metadata lacks `acting`".into()))
}

fn set_meta(ck: &mut Checkpoint, cfg: &RunConfig, extra: Value) {
    let mut m = json!({ "version": ARTIFACT_VERSION, "config_digest": cfg.digest() });
    if let (Some(o), Value::Object(e)) = (m.as_object_mut(), extra) {
        o.extend(e);
    }
    if let Some(nets) = ck.meta.get("networks").cloned() {
        m["networks"] = nets;
    }
    ck.meta = m;
}

/// Persisted training-frame tally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetState {
    pub cap: u64,
    pub used: u64,
}

pub fn load_budget(cfg: &RunConfig, ws: &Workspace) -> Result<BudgetState> {
    let path = ws.budget();
    if !path.is_file() {
        return Ok(BudgetState {
            cap: cfg.budget.cap,
            used: 0,
        });
    }
    let s: BudgetState = serde_json::from_slice(&fs::read(&path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(BudgetState {
        cap: cfg.budget.cap,
        used: s.used,
    })
}

fn save_budget(ws: &Workspace, b: BudgetState) -> Result<()> {
    write(
        &ws.budget(),
        serde_json::to_string_pretty(&b)
            .expect("serializes")
            .as_bytes(),
    )
}

/// Runs an offline trainer and fails if the frame tally moved.
fn offline<T>(
    cfg: &RunConfig,
    ws: &Workspace,
    what: &str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let before = load_budget(cfg, ws)?;
    let out = f()?;
    let after = load_budget(cfg, ws)?;
    if after != before {
        return Err(Error::Usage(format!(
            "{what} is an offline trainer but the frame budget moved from {} to {}",
            before.used, after.used
        )));
    }
    Ok(out)
}

pub fn gen_demos(cfg: &RunConfig, ws: &Workspace) -> Result<PathBuf> {
    let codec = Arc::new(Codec::for_craftworld(cfg.codec.seed)?);
    let ds = generate_demos(&cfg.env, codec, &cfg.demos)?;
    info!(
        "generated {} demonstrations with {} transitions",
        ds.trajectories.len(),
        ds.num_transitions()
    );
    let path = ws.demos();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    demos::save(&ds, &path)?;
    Ok(path)
}

pub fn load_demos(cfg: &RunConfig, ws: &Workspace) -> Result<Dataset> {
    let path = ws.demos();
    require(&path, "gen-demos")?;
    let ds = demos::load(&path)?;
    if let Some(m) = ds.env_mismatch(&cfg.env) {
        return Err(Error::Config(format!(
            "{}: {m}; rerun gen-demos",
            path.display()
        )));
    }
    if ds.codec.codebook.seed() != cfg.codec.seed {
        return Err(Error::Config(format!(
            "{} was encoded with codec seed {} but the config says {}; rerun gen-demos",
            path.display(),
            ds.codec.codebook.seed(),
            cfg.codec.seed
        )));
    }
    Ok(ds)
}

struct FittedTable {
    table: DiscreteActionTable,
    meta: Value,
}

fn fit_table(ds: &Dataset, a: &ActionsConfig, seed: u64) -> Result<FittedTable> {
    let (moves, changes) = split_actions_by_inventory_change(ds)?;
    let km_move = kmeans_fit(&moves, a.k_movement, a.max_iters, seed)?;
    let km_change = kmeans_fit(&changes, a.k_change, a.max_iters, seed.wrapping_add(1))?;
    let table = build_action_table(&km_move, &km_change);
    info!(
        "action table: {} entries (movement inertia {:.4}, change inertia {:.4})",
        table.len(),
        km_move.inertia,
        km_change.inertia
    );
    let meta = json!({
        "table_digest": hex::encode(table.digest()),
        "movement_points": moves.len(),
        "change_points": changes.len(),
        "movement_inertia": km_move.inertia,
        "change_inertia": km_change.inertia,
    });
    Ok(FittedTable { table, meta })
}

/// Fits the shared table over all demonstrated actions and a ChopTree table
/// over the actions preceding the first Plank.
pub fn fit_actions(cfg: &RunConfig, ws: &Workspace) -> Result<PathBuf> {
    let ds = load_demos(cfg, ws)?;
    offline(cfg, ws, "fit-actions", || {
        let a = &cfg.actions;
        let shared = fit_table(&ds, a, a.seed)?;
        let chop = fit_table(&ds.truncated_before_plank(), a, a.seed.wrapping_add(2))?;
        let mut ck = Checkpoint::default();
        shared.table.write_to(&mut ck, "table");
        chop.table.write_to(&mut ck, "choptree");
        set_meta(
            &mut ck,
            cfg,
            json!({ "shared": shared.meta, "choptree": chop.meta }),
        );
        let path = ws.actions();
        write(&path, &ck.to_bytes())?;
        Ok(path)
    })
}

pub fn load_table(ws: &Workspace) -> Result<DiscreteActionTable> {
    DiscreteActionTable::read_from(&load_ckpt(&ws.actions(), "fit-actions")?, "table")
}

pub fn load_choptree_table(ws: &Workspace) -> Result<DiscreteActionTable> {
    DiscreteActionTable::read_from(&load_ckpt(&ws.actions(), "fit-actions")?, "choptree")
}

pub fn train_scheduler_stage(cfg: &RunConfig, ws: &Workspace) -> Result<PathBuf> {
    let ds = load_demos(cfg, ws)?;
    offline(cfg, ws, "train-scheduler", || {
        let th = compute_thresholds(&ds)?;
        let (model, rep) = train_scheduler(&ds, &th, &cfg.scheduler)?;
        info!(
            "scheduler: thresholds ({}, {}), held-out accuracy {:?}",
            th.log_threshold, th.stone_threshold, rep.heldout_accuracy
        );
        let mut ck = Checkpoint::default();
        model.write_to(&mut ck, "scheduler");
        set_meta(
            &mut ck,
            cfg,
            json!({
                "thresholds": th,
                "pov_cells": model.pov_cells(),
                "report": rep,
            }),
        );
        let path = ws.scheduler();
        write(&path, &ck.to_bytes())?;
        Ok(path)
    })
}

pub fn load_scheduler(ws: &Workspace) -> Result<SchedulerModel> {
    let ck = load_ckpt(&ws.scheduler(), "train-scheduler")?;
    let th: DivisionThresholds = serde_json::from_value(ck.meta["thresholds"].clone())
        .map_err(|e| Error::Format(format!("scheduler thresholds: {e}")))?;
    SchedulerModel::read_from(&ck, "scheduler", th, meta_u64(&ck, "pov_cells")? as usize)
}

fn critical_clusters(
    cfg: &RunConfig,
    ds: &Dataset,
    labels: &[Vec<u8>],
    phase: u8,
) -> Result<(
    Vec<crate::demos::CriticalStep>,
    crate::discretize::DpClusterModel,
)> {
    let steps = extract_critical_steps(ds, Some(PhaseFilter { labels, phase }))?;
    if steps.is_empty() {
        return Err(Error::Degenerate(format!(
            "no critical actions in phase {phase}"
        )));
    }
    let actions: Vec<Vec<f64>> = steps.iter().map(|s| s.action.clone()).collect();
    let lambda = match cfg.actions.dp_lambda {
        Some(l) => l,
        None => default_lambda(&actions)?,
    };
    let dp = dp_cluster_fit(&actions, lambda)?;
    info!(
        "phase {phase}: {} critical actions in {} clusters",
        steps.len(),
        dp.len()
    );
    Ok((steps, dp))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub kind: AgentKind,
    pub path: PathBuf,
    pub frames_used: u64,
    pub details: Value,
}

pub fn train_agent(cfg: &RunConfig, ws: &Workspace, kind: AgentKind) -> Result<TrainSummary> {
    let ds = load_demos(cfg, ws)?;
    let table = load_table(ws)?;
    let path = ws.agent(kind);
    let mut ck = Checkpoint::default();
    let before = load_budget(cfg, ws)?;
    let details = match kind {
        AgentKind::ChopTree => {
            let th = compute_thresholds(&ds)?;
            let budget = Arc::new(FrameBudget::with_used(before.cap, before.used));
            let codec = Arc::new(ds.codec.clone());
            let chop_table = load_choptree_table(ws)?;
            let (policy, rep) = train_choptree(
                &cfg.env,
                codec,
                &ds,
                &chop_table,
                th.log_threshold,
                budget.clone(),
                &cfg.agent.choptree,
            )?;
            policy.write_to(&mut ck, "choptree");
            save_budget(
                ws,
                BudgetState {
                    cap: before.cap,
                    used: budget.used(),
                },
            )?;
            json!({ "acting": policy.acting, "log_target": th.log_threshold, "report": rep })
        }
        _ => offline(cfg, ws, kind.name(), || {
            train_offline(cfg, ws, kind, &ds, &table, &mut ck)
        })?,
    };
    set_meta(&mut ck, cfg, details.clone());
    write(&path, &ck.to_bytes())?;
    let after = load_budget(cfg, ws)?;
    Ok(TrainSummary {
        kind,
        path,
        frames_used: after.used - before.used,
        details,
    })
}

fn train_offline(
    cfg: &RunConfig,
    ws: &Workspace,
    kind: AgentKind,
    ds: &Dataset,
    table: &DiscreteActionTable,
    ck: &mut Checkpoint,
) -> Result<Value> {
    let th = compute_thresholds(ds)?;
    let labels = label_dataset(ds, &th);
    match kind {
        AgentKind::CraftWoodenPickaxe => {
            let (steps, dp) = critical_clusters(cfg, ds, &labels, kind.phase())?;
            let (train, held): (Vec<_>, Vec<_>) =
                steps.into_iter().enumerate().partition(|(i, _)| i % 5 != 4);
            let train: Vec<_> = train.into_iter().map(|(_, s)| s).collect();
            let held: Vec<_> = held.into_iter().map(|(_, s)| s).collect();
            let (policy, rep) = train_craft_wooden(&train, &held, &dp, &cfg.agent.craft_wooden)?;
            policy.classifier().write_to(ck, "craft-wooden/classifier");
            policy.table().write_to(ck, "craft-wooden/table");
            Ok(json!({ "clusters": dp.len(), "lambda": dp.lambda, "report": rep }))
        }
        AgentKind::DigStone => {
            let (policy, rep) =
                train_digstone(ds, &labels, kind.phase(), table, &cfg.agent.digstone)?;
            policy.write_to(ck, "digstone");
            Ok(json!({ "pov_cells": policy.pov_cells(), "report": rep }))
        }
        AgentKind::CraftStonePickaxe => {
            let (_, dp) = critical_clusters(cfg, ds, &labels, kind.phase())?;
            critical_table(&dp).write_to(ck, "craft-stone/table");
            Ok(json!({ "clusters": dp.len(), "lambda": dp.lambda }))
        }
        AgentKind::RandomSearch => {
            let dig = ws.agent(AgentKind::DigStone);
            require(&dig, &agent_stage(AgentKind::DigStone))?;
            cfg.agent.random_search.validate()?;
            Ok(json!({
                "schedule": cfg.agent.random_search,
                "digstone_sha256": file_digest(&dig)?,
            }))
        }
        AgentKind::ChopTree => unreachable!("online trainer"),
    }
}

use crate::agents::Policy as _;

pub fn load_policy(cfg: &RunConfig, ws: &Workspace) -> Result<HierarchicalPolicy> {
    let scheduler = load_scheduler(ws)?;
    let ck = |k| load_ckpt(&ws.agent(k), &agent_stage(k));
    let c = ck(AgentKind::ChopTree)?;
    let choptree = ChopTreePolicy::read_from(&c, "choptree", cfg.env.pov_size, meta_acting(&c)?)?;
    let c = ck(AgentKind::CraftWoodenPickaxe)?;
    let craft_wooden = CraftWoodenPolicy::new(
        BcClassifier::read_from(&c, "craft-wooden/classifier")?,
        DiscreteActionTable::read_from(&c, "craft-wooden/table")?,
    )?;
    let c = ck(AgentKind::DigStone)?;
    let digstone = DigStonePolicy::read_from(&c, "digstone", meta_u64(&c, "pov_cells")? as usize)?;
    let c = ck(AgentKind::CraftStonePickaxe)?;
    let craft_stone =
        CraftStonePolicy::new(DiscreteActionTable::read_from(&c, "craft-stone/table")?)?;
    let c = ck(AgentKind::RandomSearch)?;
    let schedule: ExplorationSchedule = serde_json::from_value(c.meta["schedule"].clone())
        .map_err(|e| Error::Format(format!("random-search schedule: {e}")))?;
    let random_search = RandomSearchPolicy::new(digstone.clone(), schedule)?;
    Ok(HierarchicalPolicy {
        scheduler,
        choptree,
        craft_wooden,
        digstone,
        craft_stone,
        random_search,
    })
}

fn write_manifest(cfg: &RunConfig, ws: &Workspace, policy: &HierarchicalPolicy) -> Result<()> {
    let mut agents = Vec::new();
    for k in AgentKind::ALL {
        let p = ws.agent(k);
        agents.push(json!({
            "kind": k,
            "file": p.file_name().map(|f| f.to_string_lossy().into_owned()),
            "sha256": file_digest(&p)?,
        }));
    }
    let th = policy.scheduler.thresholds;
    let m = json!({
        "version": ARTIFACT_VERSION,
        "config_digest": cfg.digest(),
        "action_table_digest": hex::encode(policy.choptree.table().digest()),
        "thresholds": th,
        "scheduler": {
            "sha256": file_digest(&ws.scheduler())?,
            "pov_cells": policy.scheduler.pov_cells(),
        },
        "random_search_schedule": policy.random_search.schedule(),
        "agents": agents,
    });
    write(
        &ws.manifest(),
        serde_json::to_string_pretty(&m)
            .expect("serializes")
            .as_bytes(),
    )
}

fn eval_codec(ws: &Workspace, cfg: &RunConfig) -> Result<Arc<Codec>> {
    let ds_path = ws.demos();
    require(&ds_path, "gen-demos")?;
    Ok(Arc::new(Codec::for_craftworld(cfg.codec.seed)?))
}

fn write_reports(
    results: &[EpisodeResult],
    scores: &Path,
    report: impl Fn(ReportFormat) -> PathBuf,
) -> Result<MilestoneReport> {
    write(scores, scores_to_csv(results).as_bytes())?;
    let s: Vec<f64> = results.iter().map(|r| r.score).collect();
    let rep = report_from_scores(&s)?;
    for f in [ReportFormat::Markdown, ReportFormat::Csv] {
        write(&report(f), f.render(&rep).as_bytes())?;
    }
    Ok(rep)
}

/// Evaluation steps are not charged to the training budget.
pub fn evaluate_stage(cfg: &RunConfig, ws: &Workspace) -> Result<MilestoneReport> {
    let policy = load_policy(cfg, ws)?;
    write_manifest(cfg, ws, &policy)?;
    let codec = eval_codec(ws, cfg)?;
    let results = evaluate(
        &policy,
        &cfg.env,
        codec,
        &seeds(cfg.eval.seed_base, cfg.eval.episodes),
    )?;
    let rep = write_reports(&results, &ws.scores(), |f| ws.report(f))?;
    info!(
        "evaluation: mean score {:.3}, rates {:?}",
        rep.mean_score, rep.rates
    );
    Ok(rep)
}

pub fn report_stage(ws: &Workspace, format: ReportFormat) -> Result<PathBuf> {
    let scores = ws.scores();
    require(&scores, "evaluate")?;
    let results = scores_from_csv(&fs::read_to_string(&scores)?)?;
    let s: Vec<f64> = results.iter().map(|r| r.score).collect();
    let rep = report_from_scores(&s)?;
    let path = ws.report(format);
    write(&path, format.render(&rep).as_bytes())?;
    Ok(path)
}

/// Flat classifier trained on the same demonstrations, evaluated on the same seeds.
pub fn baseline_stage(cfg: &RunConfig, ws: &Workspace) -> Result<MilestoneReport> {
    let ds = load_demos(cfg, ws)?;
    let table = load_table(ws)?;
    let (policy, rep) = offline(cfg, ws, "baseline", || {
        FlatBcPolicy::train(&ds, &table, &cfg.baseline)
    })?;
    let mut ck = Checkpoint::default();
    policy.classifier().write_to(&mut ck, "baseline/classifier");
    table.write_to(&mut ck, "baseline/table");
    set_meta(
        &mut ck,
        cfg,
        json!({ "pov_cells": policy.pov_cells(), "report": rep }),
    );
    write(&ws.baseline_model(), &ck.to_bytes())?;
    let codec = eval_codec(ws, cfg)?;
    let results = evaluate(
        &Flat(policy),
        &cfg.env,
        codec,
        &seeds(cfg.eval.seed_base, cfg.eval.episodes),
    )?;
    let rep = write_reports(&results, &ws.baseline_scores(), |f| ws.baseline_report(f))?;
    info!(
        "baseline: mean score {:.3}, rates {:?}",
        rep.mean_score, rep.rates
    );
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSummary {
    pub report: MilestoneReport,
    pub baseline: MilestoneReport,
    pub frames_used: u64,
    pub trained: Vec<TrainSummary>,
}

/// Every stage in dependency order, starting from a fresh budget.
pub fn run_pipeline(cfg: &RunConfig, ws: &Workspace) -> Result<PipelineSummary> {
    let budget = ws.budget();
    if budget.is_file() {
        fs::remove_file(&budget)?;
    }
    gen_demos(cfg, ws)?;
    fit_actions(cfg, ws)?;
    train_scheduler_stage(cfg, ws)?;
    let mut trained = Vec::new();
    for k in AgentKind::ALL {
        trained.push(train_agent(cfg, ws, k)?);
    }
    let report = evaluate_stage(cfg, ws)?;
    let baseline = baseline_stage(cfg, ws)?;
    Ok(PipelineSummary {
        report,
        baseline,
        frames_used: load_budget(cfg, ws)?.used,
        trained,
    })
}

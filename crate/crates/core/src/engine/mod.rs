//! Round-based training orchestration.
//!
//! One loop drives all four modes. Every round keeps a roster of `k` peer
//! models ("members") whose behavioral traces are compressed and appended
//! to the raw inputs; the round's main model is trained on that expanded
//! matrix and measured. Modes differ only in the roster (single model,
//! homogeneous set, heterogeneous set) and in which members get selected
//! per round.
//!
//! With a single member identical to the main template — the `re` mode,
//! and its `mvre(k=1)` equivalent — each round's main model is itself the
//! next round's trace source, so the lineage chains: round `i` consumes
//! the compressed behavior of the model trained at round `i-1`, all the
//! way back to the raw-data base model. With two or more members the
//! roster is retrained from scratch on the raw data every round with
//! fresh seeds, and the chain runs through the aggregated traces instead.
//!
//! # Seed discipline
//!
//! All randomness derives from `master_seed` through a fixed splitting
//! scheme (see [`crate::linalg::derive_seed`]):
//!
//! - `round_seed(i)   = derive_seed(master_seed, i)`
//! - member `j` at round `i` trains with `derive_seed(round_seed(i), j)`
//! - the main model at round `i` trains with
//!   `derive_seed(round_seed(i), u64::MAX)`
//! - a diverged main model is re-initialized with
//!   `derive_seed(previous_seed, RETRY_TAG + attempt)`
//!
//! Two runs with equal configurations therefore produce byte-identical
//! records regardless of thread count.

use crate::error::{Error, Result};
use crate::imt::{apply_rho, build_rho, extract_imt, AggregatorConfig, IMTBundle, RhoModel};
use crate::linalg::{derive_seed, Matrix, SeededRng};
use crate::metrics::{detect_glitch, mse, GlitchConfig};
use crate::nn::{predict, train, Family, ModelSpec, Scale, TrainConfig, TrainedModel};
use rayon::prelude::*;
use std::time::Instant;

const MAIN_STREAM_TAG: u64 = u64::MAX;
const RETRY_TAG: u64 = 0xF00D;
const MAX_TRAIN_ATTEMPTS: usize = 3;

/// Execution mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Single-lineage recurrent expansion.
    Re,
    /// Homogeneous multiverse.
    Mvre,
    /// Heterogeneous multiverse.
    Hmvre,
    /// Heterogeneous multiverse with scale diversity and per-round
    /// member selection.
    ScHmvre,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Re => "re",
            Mode::Mvre => "mvre",
            Mode::Hmvre => "hmvre",
            Mode::ScHmvre => "sc-hmvre",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "re" => Ok(Mode::Re),
            "mvre" => Ok(Mode::Mvre),
            "hmvre" => Ok(Mode::Hmvre),
            "sc-hmvre" => Ok(Mode::ScHmvre),
            other => Err(format!(
                "unknown mode {other:?} (expected re, mvre, hmvre or sc-hmvre)"
            )),
        }
    }
}

/// Architecture template, instantiated with a concrete input width each
/// round.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTemplate {
    pub family: Family,
    pub scale: Scale,
    /// Hidden widths; empty means the scale default.
    pub hidden: Vec<usize>,
}

impl ModelTemplate {
    pub fn new(family: Family, scale: Scale) -> Self {
        ModelTemplate {
            family,
            scale,
            hidden: Vec::new(),
        }
    }

    fn spec(&self, input_dim: usize, output_dim: usize, init_seed: u64) -> ModelSpec {
        let mut s = ModelSpec::new(self.family, self.scale, input_dim, init_seed);
        s.output_dim = output_dim;
        s.hidden_layers = self.hidden.clone();
        s
    }
}

/// One multiverse member: an architecture plus an optional training
/// override (used, for example, to study how a deliberately unstable
/// member is down-weighted).
#[derive(Debug, Clone, PartialEq)]
pub struct MemberSpec {
    pub template: ModelTemplate,
    pub train_override: Option<TrainConfig>,
}

impl MemberSpec {
    pub fn new(family: Family, scale: Scale) -> Self {
        MemberSpec {
            template: ModelTemplate::new(family, scale),
            train_override: None,
        }
    }
}

/// The member roster. Seeds are derived per round and member from the
/// master seed; see the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiverseConfig {
    pub members: Vec<MemberSpec>,
}

impl MultiverseConfig {
    pub fn new(members: Vec<MemberSpec>) -> Self {
        MultiverseConfig { members }
    }

    /// Single-member roster built from a template; the RE mode's roster.
    pub fn singleton(template: &ModelTemplate) -> Self {
        MultiverseConfig {
            members: vec![MemberSpec {
                template: template.clone(),
                train_override: None,
            }],
        }
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    fn distinct_families(&self) -> usize {
        let mut fams: Vec<Family> = self.members.iter().map(|m| m.template.family).collect();
        fams.sort_by_key(|f| f.to_string());
        fams.dedup();
        fams.len()
    }
}

/// Which members feed the main model each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionCriterion {
    /// The `budget` members with the smallest AULC, ties broken by index.
    LowestAulc,
    /// Every member.
    All,
    /// `budget` consecutive members starting at `((round-1)*budget) mod k`.
    RoundRobin,
}

impl std::fmt::Display for SelectionCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionCriterion::LowestAulc => "lowest-aulc",
            SelectionCriterion::All => "all",
            SelectionCriterion::RoundRobin => "round-robin",
        })
    }
}

impl std::str::FromStr for SelectionCriterion {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lowest-aulc" => Ok(SelectionCriterion::LowestAulc),
            "all" => Ok(SelectionCriterion::All),
            "round-robin" => Ok(SelectionCriterion::RoundRobin),
            other => Err(format!(
                "unknown selection criterion {other:?} (expected lowest-aulc, all or round-robin)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionPolicy {
    pub criterion: SelectionCriterion,
    pub budget: usize,
}

impl SelectionPolicy {
    pub fn all(k: usize) -> Self {
        SelectionPolicy {
            criterion: SelectionCriterion::All,
            budget: k,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.budget < 1 || self.budget > k {
            return Err(Error::contract(format!(
                "selection budget must be in [1, {k}], got {}",
                self.budget
            )));
        }
        Ok(())
    }
}

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct REConfig {
    pub rounds: usize,
    pub mode: Mode,
    pub train: TrainConfig,
    pub aggregator: AggregatorConfig,
    pub glitch: GlitchConfig,
    pub master_seed: u64,
    /// Halt as soon as a round is glitch-flagged or diverged.
    pub stop_on_glitch: bool,
    /// Main-model architecture template (members have their own).
    pub model: ModelTemplate,
    /// Evaluate on a held-out fifth of the rows (every fifth sample)
    /// instead of the full training set.
    pub holdout: bool,
}

impl REConfig {
    pub fn new(mode: Mode, rounds: usize, master_seed: u64) -> Self {
        REConfig {
            rounds,
            mode,
            train: TrainConfig::default(),
            aggregator: AggregatorConfig::default(),
            glitch: GlitchConfig::default(),
            master_seed,
            stop_on_glitch: false,
            model: ModelTemplate {
                family: Family::MlpTanh,
                scale: Scale::Medium,
                hidden: vec![32, 32],
            },
            holdout: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::contract("rounds must be >= 1"));
        }
        self.train.validate()?;
        self.aggregator.validate()?;
        self.glitch.validate()
    }
}

/// The previous round's member traces, consumed by the current round.
#[derive(Debug, Clone)]
pub struct MultiverseSnapshot {
    /// Round index the members were trained in (`i - 1` when consumed at
    /// round `i`).
    pub round: usize,
    pub bundles: Vec<IMTBundle>,
    pub aulcs: Vec<f64>,
}

/// Per-round ledger entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// 1-based round index.
    pub round: usize,
    /// Main-model MSE on the evaluation rows.
    pub mse: f64,
    pub aulc_main: f64,
    /// AULC of every member in the snapshot this round consumed.
    pub member_aulcs: Vec<f64>,
    /// Retained components per member; 0 for members not selected.
    pub retained: Vec<usize>,
    /// Fusion weight per member; 0 for members not selected.
    pub weights: Vec<f64>,
    /// Selected member ids, sorted ascending.
    pub selected: Vec<usize>,
    /// True on the round where the error series is first flagged as
    /// rising again.
    pub glitch: bool,
    /// True when main-model training diverged this round (recovered or
    /// not).
    pub diverged: bool,
    /// Appended columns beyond the raw input width.
    pub expanded_width: usize,
    /// Main-model loss curve for this round.
    pub loss_curve: Vec<f64>,
    pub wall_ms: u64,
}

/// Round-0 reference stats, one entry per member.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub member_mses: Vec<f64>,
    pub member_aulcs: Vec<f64>,
}

/// Everything a finished run hands back.
#[derive(Debug)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub final_model: TrainedModel,
    pub baseline: Baseline,
    /// Set when `stop_on_glitch` ended the run before `rounds`.
    pub halted_early: bool,
}

fn round_seed(master: u64, round: usize) -> u64 {
    derive_seed(master, round as u64)
}

fn member_seed(master: u64, round: usize, member: usize) -> u64 {
    derive_seed(round_seed(master, round), member as u64)
}

fn main_seed(master: u64, round: usize) -> u64 {
    derive_seed(round_seed(master, round), MAIN_STREAM_TAG)
}

/// Picks the member subset for a round; the result is sorted by member
/// index.
pub fn select_subset(
    snapshot: &MultiverseSnapshot,
    policy: &SelectionPolicy,
    round: usize,
) -> Vec<usize> {
    let k = snapshot.bundles.len();
    let mut ids: Vec<usize> = match policy.criterion {
        SelectionCriterion::All => (0..k).collect(),
        SelectionCriterion::LowestAulc => {
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| {
                snapshot.aulcs[a]
                    .total_cmp(&snapshot.aulcs[b])
                    .then(a.cmp(&b))
            });
            order.truncate(policy.budget);
            order
        }
        SelectionCriterion::RoundRobin => {
            let start = (round.saturating_sub(1) * policy.budget) % k;
            (0..policy.budget).map(|o| (start + o) % k).collect()
        }
    };
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Trains one member, tolerating divergence: an unstable member is kept
/// with its last finite state and its guard-padded (terrible) AULC so the
/// weighting can discount it.
fn train_member(
    member: &MemberSpec,
    x: &Matrix,
    y: &Matrix,
    base_train: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    let cfg = member.train_override.as_ref().unwrap_or(base_train);
    let spec = member.template.spec(x.cols(), y.cols(), seed);
    match train(&spec, x, y, cfg, &mut SeededRng::new(seed)) {
        Ok(m) => Ok(m),
        Err(Error::TrainingDiverged { last_good, .. }) => Ok(*last_good),
        Err(e) => Err(e),
    }
}

/// Trains the main model, re-initializing with fresh derived seeds on
/// divergence. Returns the model and whether any attempt diverged; if
/// every attempt diverges the last finite state is used so the run can
/// continue.
fn train_main(
    template: &ModelTemplate,
    x: &Matrix,
    y: &Matrix,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(TrainedModel, bool)> {
    let mut attempt_seed = seed;
    let mut last: Option<TrainedModel> = None;
    for attempt in 0..MAX_TRAIN_ATTEMPTS {
        let spec = template.spec(x.cols(), y.cols(), attempt_seed);
        match train(&spec, x, y, cfg, &mut SeededRng::new(attempt_seed)) {
            Ok(m) => return Ok((m, attempt > 0)),
            Err(Error::TrainingDiverged { last_good, .. }) => {
                last = Some(*last_good);
                attempt_seed = derive_seed(attempt_seed, RETRY_TAG + attempt as u64);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((last.expect("at least one attempt ran"), true))
}

struct Split {
    x_fit: Matrix,
    y_fit: Matrix,
    x_eval: Matrix,
    y_eval: Matrix,
    holdout: bool,
}

fn split_dataset(x: &Matrix, y: &Matrix, holdout: bool) -> Result<Split> {
    if !holdout {
        return Ok(Split {
            x_fit: x.clone(),
            y_fit: y.clone(),
            x_eval: x.clone(),
            y_eval: y.clone(),
            holdout,
        });
    }
    let eval_idx: Vec<usize> = (0..x.rows()).filter(|i| i % 5 == 4).collect();
    let fit_idx: Vec<usize> = (0..x.rows()).filter(|i| i % 5 != 4).collect();
    if eval_idx.is_empty() || fit_idx.is_empty() {
        return Err(Error::contract(
            "dataset too small for a holdout split (need >= 5 rows)",
        ));
    }
    Ok(Split {
        x_fit: x.take_rows(&fit_idx),
        y_fit: y.take_rows(&fit_idx),
        x_eval: x.take_rows(&eval_idx),
        y_eval: y.take_rows(&eval_idx),
        holdout,
    })
}

fn validate_mode(cfg: &REConfig, mv: &MultiverseConfig, policy: &SelectionPolicy) -> Result<()> {
    let k = mv.k();
    if k == 0 {
        return Err(Error::contract("multiverse needs at least one member"));
    }
    policy.validate(k)?;
    match cfg.mode {
        Mode::Re => {
            if k != 1 {
                return Err(Error::contract(format!(
                    "mode re runs a single lineage, got {k} members"
                )));
            }
        }
        Mode::Mvre => {
            if mv.distinct_families() != 1 {
                return Err(Error::contract(
                    "mode mvre requires all members to share one family",
                ));
            }
        }
        Mode::Hmvre | Mode::ScHmvre => {
            if mv.distinct_families() < 2 {
                return Err(Error::contract(format!(
                    "mode {} requires at least 2 distinct families",
                    cfg.mode
                )));
            }
        }
    }
    if cfg.mode != Mode::ScHmvre
        && (policy.criterion != SelectionCriterion::All || policy.budget != k)
    {
        return Err(Error::contract(format!(
            "mode {} always aggregates all members; budgeted selection needs sc-hmvre",
            cfg.mode
        )));
    }
    Ok(())
}

/// Retrains the full roster and harvests fresh bundles. Members are
/// independent and run in parallel; results are collected by member index
/// so the outcome does not depend on scheduling.
fn retrain_members(
    mv: &MultiverseConfig,
    split: &Split,
    cfg: &REConfig,
    round: usize,
) -> Result<(
    Vec<TrainedModel>,
    MultiverseSnapshot,
    Option<Vec<IMTBundle>>,
)> {
    let models: Vec<TrainedModel> = mv
        .members
        .par_iter()
        .enumerate()
        .map(|(j, member)| {
            train_member(
                member,
                &split.x_fit,
                &split.y_fit,
                &cfg.train,
                member_seed(cfg.master_seed, round, j),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let bundles: Vec<IMTBundle> = models
        .iter()
        .enumerate()
        .map(|(j, m)| extract_imt(j, m, &split.x_fit))
        .collect::<Result<Vec<_>>>()?;
    let eval_bundles = if split.holdout {
        Some(
            models
                .iter()
                .enumerate()
                .map(|(j, m)| extract_imt(j, m, &split.x_eval))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let aulcs = models.iter().map(|m| m.aulc).collect();
    Ok((
        models,
        MultiverseSnapshot {
            round,
            bundles,
            aulcs,
        },
        eval_bundles,
    ))
}

fn expanded_eval_matrix(
    rho: &RhoModel,
    selected: &[usize],
    snapshot_eval: &Option<Vec<IMTBundle>>,
    snapshot: &MultiverseSnapshot,
    split: &Split,
) -> Result<Matrix> {
    let bundles = match snapshot_eval {
        Some(eval) => eval,
        None => &snapshot.bundles,
    };
    let sel: Vec<&IMTBundle> = selected.iter().map(|&j| &bundles[j]).collect();
    apply_rho(rho, &sel, &split.x_eval)
}

/// Runs the configured number of rounds and returns the ledger, the final
/// main model and the round-0 baseline. `observer` fires after each
/// completed round.
pub fn execute(
    dataset: &crate::data::Dataset,
    cfg: &REConfig,
    mv: &MultiverseConfig,
    policy: &SelectionPolicy,
    mut observer: impl FnMut(&RunRecord),
) -> Result<RunOutcome> {
    cfg.validate()?;
    validate_mode(cfg, mv, policy)?;
    if dataset.is_empty() {
        return Err(Error::contract("dataset is empty"));
    }
    let split = split_dataset(&dataset.x, &dataset.y, cfg.holdout)?;
    let raw_dim = split.x_fit.cols();
    // single lineage: the round's main model doubles as the next round's
    // trace source instead of a separately retrained peer
    let chained = mv.k() == 1
        && mv.members[0].template == cfg.model
        && mv.members[0].train_override.is_none();

    // round 0: the base roster trained on raw data
    let (models0, mut snapshot, mut snapshot_eval) = retrain_members(mv, &split, cfg, 0)?;
    let baseline = Baseline {
        member_mses: models0
            .iter()
            .map(|m| {
                let preds = predict(&m.spec, &m.params, &split.x_eval)?;
                mse(&preds, &split.y_eval)
            })
            .collect::<Result<Vec<_>>>()?,
        member_aulcs: snapshot.aulcs.clone(),
    };

    let mut records: Vec<RunRecord> = Vec::with_capacity(cfg.rounds);
    let mut mse_series: Vec<f64> = Vec::with_capacity(cfg.rounds);
    let mut final_model: Option<TrainedModel> = None;
    let mut halted_early = false;

    for round in 1..=cfg.rounds {
        let t0 = Instant::now();
        let selected = select_subset(&snapshot, policy, round);
        let sel_bundles: Vec<&IMTBundle> = selected.iter().map(|&j| &snapshot.bundles[j]).collect();
        let rho = build_rho(&sel_bundles, &cfg.aggregator)?;
        let x_re = apply_rho(&rho, &sel_bundles, &split.x_fit)?;
        let expanded_width = x_re.cols() - raw_dim;

        let (model, diverged) = train_main(
            &cfg.model,
            &x_re,
            &split.y_fit,
            &cfg.train,
            main_seed(cfg.master_seed, round),
        )?;

        let x_eval = if split.holdout {
            expanded_eval_matrix(&rho, &selected, &snapshot_eval, &snapshot, &split)?
        } else {
            x_re.clone()
        };
        let preds = predict(&model.spec, &model.params, &x_eval)?;
        let round_mse = mse(&preds, &split.y_eval)?;
        mse_series.push(round_mse);
        let glitch_report = detect_glitch(&mse_series, &cfg.glitch);
        let glitch = glitch_report.first_flag_index == Some(mse_series.len() - 1);

        let mut retained = vec![0usize; mv.k()];
        let mut weights = vec![0.0f64; mv.k()];
        for ((&j, pca), &w) in selected.iter().zip(&rho.pcas).zip(&rho.weights) {
            retained[j] = pca.retained;
            weights[j] = w;
        }

        let record = RunRecord {
            round,
            mse: round_mse,
            aulc_main: model.aulc,
            member_aulcs: snapshot.aulcs.clone(),
            retained,
            weights,
            selected,
            glitch,
            diverged,
            expanded_width,
            loss_curve: model.loss_curve.clone(),
            wall_ms: t0.elapsed().as_millis() as u64,
        };
        observer(&record);
        records.push(record);

        if cfg.stop_on_glitch && (glitch || diverged) {
            final_model = Some(model);
            halted_early = round < cfg.rounds;
            break;
        }

        // trace source for the next round
        if chained {
            snapshot = MultiverseSnapshot {
                round,
                bundles: vec![extract_imt(0, &model, &x_re)?],
                aulcs: vec![model.aulc],
            };
            snapshot_eval = if split.holdout {
                Some(vec![extract_imt(0, &model, &x_eval)?])
            } else {
                None
            };
        } else {
            let (_, snap, snap_eval) = retrain_members(mv, &split, cfg, round)?;
            snapshot = snap;
            snapshot_eval = snap_eval;
        }
        final_model = Some(model);
    }

    Ok(RunOutcome {
        records,
        final_model: final_model.expect("rounds >= 1"),
        baseline,
        halted_early,
    })
}

/// Single-lineage recurrent expansion.
pub fn run_re(dataset: &crate::data::Dataset, cfg: &REConfig) -> Result<RunOutcome> {
    let mv = MultiverseConfig::singleton(&cfg.model);
    let policy = SelectionPolicy::all(1);
    execute(dataset, cfg, &mv, &policy, |_| {})
}

/// Homogeneous multiverse run.
pub fn run_mvre(
    dataset: &crate::data::Dataset,
    cfg: &REConfig,
    mv: &MultiverseConfig,
) -> Result<RunOutcome> {
    let policy = SelectionPolicy::all(mv.k());
    execute(dataset, cfg, mv, &policy, |_| {})
}

/// Heterogeneous multiverse run.
pub fn run_hmvre(
    dataset: &crate::data::Dataset,
    cfg: &REConfig,
    mv: &MultiverseConfig,
) -> Result<RunOutcome> {
    let policy = SelectionPolicy::all(mv.k());
    execute(dataset, cfg, mv, &policy, |_| {})
}

/// Selective, scale-diverse heterogeneous run.
pub fn run_schmvre(
    dataset: &crate::data::Dataset,
    cfg: &REConfig,
    mv: &MultiverseConfig,
    policy: &SelectionPolicy,
) -> Result<RunOutcome> {
    execute(dataset, cfg, mv, policy, |_| {})
}

//! Few-shot user identification: per-user splits, cell execution and the
//! experiment grid.
//!
//! For each evaluated user a binary classifier is trained on that user's first
//! registration windows against windows of other users, then scored on later
//! windows of the user and on windows of a disjoint set of other users.
//! Augmentation, when enabled, touches training windows only.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::augment::{AugmentationPlan, AugmentationSpec, Method};
use crate::embedding::Provider;
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::seed::{mix, rng_from};
use crate::signal::Signal;
use crate::svm::{self, compute_rates, Gamma, KernelKind, Standardizer, SvmConfig};

const TAG_SPLIT: u64 = 0x5350;
const TAG_AUGMENT: u64 = 0x4147;

/// Number of windows in each part of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train_pos: usize,
    pub test_pos: usize,
    pub train_neg: usize,
    pub test_neg: usize,
}

impl SplitSizes {
    pub const REFERENCE: SplitSizes = SplitSizes {
        train_pos: 20,
        test_pos: 100,
        train_neg: 100,
        test_neg: 100,
    };

    pub fn validate(&self) -> Result<()> {
        if self.train_pos == 0 || self.test_pos == 0 || self.train_neg == 0 || self.test_neg == 0 {
            return Err(Error::config(format!("split sizes must all be positive, got {self:?}")));
        }
        Ok(())
    }
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self::REFERENCE
    }
}

/// How the candidate negative users are divided into the training pool (A)
/// and the test pool (B).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolRule {
    /// Candidates other than the target, taken in order, alternate A, B, A, ...
    Alternating,
    /// First half of the remaining candidates to A, the rest to B.
    Halves,
}

impl PoolRule {
    pub fn name(self) -> &'static str {
        match self {
            PoolRule::Alternating => "alternating",
            PoolRule::Halves => "halves",
        }
    }

    pub fn parse(s: &str) -> Option<PoolRule> {
        match s {
            "alternating" => Some(PoolRule::Alternating),
            "halves" => Some(PoolRule::Halves),
            _ => None,
        }
    }
}

/// A pool rule together with the users it draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativePartition {
    pub rule: PoolRule,
    pub candidates: Vec<String>,
}

impl NegativePartition {
    pub fn new(rule: PoolRule, candidates: Vec<String>) -> Self {
        NegativePartition { rule, candidates }
    }

    /// Pools A and B for `target`; disjoint and never containing `target`.
    pub fn pools(&self, target: &str) -> (Vec<String>, Vec<String>) {
        let rest: Vec<&String> = self.candidates.iter().filter(|u| u.as_str() != target).collect();
        match self.rule {
            PoolRule::Alternating => {
                let a = rest.iter().step_by(2).map(|u| (*u).clone()).collect();
                let b = rest.iter().skip(1).step_by(2).map(|u| (*u).clone()).collect();
                (a, b)
            }
            PoolRule::Halves => {
                let mid = rest.len().div_ceil(2);
                (
                    rest[..mid].iter().map(|u| (*u).clone()).collect(),
                    rest[mid..].iter().map(|u| (*u).clone()).collect(),
                )
            }
        }
    }
}

/// The second half of the dataset's users, in dataset order.
pub fn reference_eval_users(dataset: &Dataset) -> Vec<String> {
    let users = dataset.users();
    users[users.len() / 2..].to_vec()
}

/// One user's train/test split, as indices into the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSplit {
    pub target_user: String,
    pub train_pos: Vec<usize>,
    pub train_neg: Vec<usize>,
    pub test_pos: Vec<usize>,
    pub test_neg: Vec<usize>,
    pub pool_a: Vec<String>,
    pub pool_b: Vec<String>,
}

impl FewShotSplit {
    fn users_of<'a>(dataset: &'a Dataset, idx: &[usize]) -> BTreeSet<&'a str> {
        idx.iter().map(|&i| dataset.sample(i).user_id.as_str()).collect()
    }

    /// Users that contributed training negatives.
    pub fn train_neg_users<'a>(&self, dataset: &'a Dataset) -> BTreeSet<&'a str> {
        Self::users_of(dataset, &self.train_neg)
    }

    pub fn test_neg_users<'a>(&self, dataset: &'a Dataset) -> BTreeSet<&'a str> {
        Self::users_of(dataset, &self.test_neg)
    }
}

/// Spreads `total` draws over pools with the given capacities as evenly as
/// possible; which pools get the remainder is random.
fn stratified_quotas<R: Rng + ?Sized>(total: usize, capacities: &[usize], rng: &mut R) -> Option<Vec<usize>> {
    if capacities.iter().sum::<usize>() < total {
        return None;
    }
    let mut order: Vec<usize> = (0..capacities.len()).collect();
    order.shuffle(rng);
    let mut quotas = vec![0; capacities.len()];
    let mut left = total;
    while left > 0 {
        for &p in &order {
            if left == 0 {
                break;
            }
            if quotas[p] < capacities[p] {
                quotas[p] += 1;
                left -= 1;
            }
        }
    }
    Some(quotas)
}

fn draw_negatives<R: Rng + ?Sized>(
    dataset: &Dataset,
    pool: &[String],
    total: usize,
    pool_name: &str,
    target: &str,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::config(format!(
            "negative pool {pool_name} for user {target} is empty; need more users"
        )));
    }
    let capacities: Vec<usize> = pool.iter().map(|u| dataset.user_samples(u).len()).collect();
    let available: usize = capacities.iter().sum();
    let quotas = stratified_quotas(total, &capacities, rng).ok_or_else(|| {
        Error::config(format!(
            "negative pool {pool_name} for user {target} has {available} samples from {} users, needs {total}",
            pool.len()
        ))
    })?;
    let mut out = Vec::with_capacity(total);
    for (user, &quota) in pool.iter().zip(&quotas) {
        let own = dataset.user_samples(user);
        let mut picked: Vec<usize> = rand::seq::index::sample(rng, own.len(), quota)
            .into_iter()
            .map(|k| own[k])
            .collect();
        picked.sort_unstable();
        out.extend(picked);
    }
    Ok(out)
}

/// Builds the split for `target_user`. Positives are the target's windows in
/// event order (training first); negatives are drawn without replacement,
/// spread evenly over the users of each pool.
pub fn build_split<R: Rng + ?Sized>(
    dataset: &Dataset,
    target_user: &str,
    partition: &NegativePartition,
    sizes: SplitSizes,
    rng: &mut R,
) -> Result<FewShotSplit> {
    sizes.validate()?;
    let own = dataset.user_samples(target_user);
    if own.is_empty() {
        return Err(Error::config(format!("user {target_user} is not in the dataset")));
    }
    let needed = sizes.train_pos + sizes.test_pos;
    if own.len() < needed {
        return Err(Error::config(format!(
            "user {target_user} has {} samples, needs ≥ {needed}",
            own.len()
        )));
    }
    let (pool_a, pool_b) = partition.pools(target_user);
    let train_neg = draw_negatives(dataset, &pool_a, sizes.train_neg, "A", target_user, rng)?;
    let test_neg = draw_negatives(dataset, &pool_b, sizes.test_neg, "B", target_user, rng)?;
    Ok(FewShotSplit {
        target_user: target_user.to_string(),
        train_pos: own[..sizes.train_pos].to_vec(),
        test_pos: own[sizes.train_pos..needed].to_vec(),
        train_neg,
        test_neg,
        pool_a,
        pool_b,
    })
}

/// Which scores the bias is balanced on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    /// The test scores themselves (an equal-error operating point).
    Evaluation,
    /// The training scores only.
    Training,
}

impl CalibrationMode {
    pub fn name(self) -> &'static str {
        match self {
            CalibrationMode::Evaluation => "evaluation",
            CalibrationMode::Training => "training",
        }
    }

    pub fn parse(s: &str) -> Option<CalibrationMode> {
        match s {
            "evaluation" => Some(CalibrationMode::Evaluation),
            "training" => Some(CalibrationMode::Training),
            _ => None,
        }
    }
}

/// Standardized feature matrices for one user and one augmentation setting,
/// shared by every (kernel, C) evaluated on it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedUser {
    pub train_features: Vec<Vec<f64>>,
    pub train_labels: Vec<i8>,
    pub test_features: Vec<Vec<f64>>,
    pub test_labels: Vec<i8>,
}

impl PreparedUser {
    /// Standardizes with statistics of the training features.
    pub fn from_features(
        train_features: Vec<Vec<f64>>,
        train_labels: Vec<i8>,
        test_features: Vec<Vec<f64>>,
        test_labels: Vec<i8>,
    ) -> Result<Self> {
        let scaler = Standardizer::fit(&train_features)?;
        Ok(PreparedUser {
            train_features: scaler.transform_all(&train_features)?,
            train_labels,
            test_features: scaler.transform_all(&test_features)?,
            test_labels,
        })
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.train_labels.iter().filter(|&&y| y > 0).count();
        (pos, self.train_labels.len() - pos)
    }
}

fn embed_class(
    dataset: &Dataset,
    idx: &[usize],
    plan: Option<&AugmentationPlan>,
    provider: &Provider,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for &i in idx {
        let s = dataset.sample(i);
        out.push(provider.embed(&s.user_id, s.event_index, &s.signal)?.vector);
    }
    if let Some(plan) = plan {
        let originals: Vec<Signal> = idx.iter().map(|&i| dataset.sample(i).signal.clone()).collect();
        for augmented in &plan.apply(&originals)?[originals.len()..] {
            out.push(crate::embedding::extract_statistical(augmented).vector);
        }
    }
    Ok(out)
}

/// Embeds a split, augmenting the training windows of each class when a plan
/// is given. Test windows are only read.
pub fn prepare(
    dataset: &Dataset,
    split: &FewShotSplit,
    plan: Option<&AugmentationPlan>,
    provider: &Provider,
) -> Result<PreparedUser> {
    if plan.is_some() && !provider.supports_augmentation() {
        return Err(Error::config(format!(
            "provider {} cannot embed augmented signals; augmentation needs the statistical provider",
            provider.name()
        )));
    }
    // independent streams for the two classes
    let pos_plan = plan.map(|p| p.reseeded(mix(p.base_seed(), 0, 1)));
    let neg_plan = plan.map(|p| p.reseeded(mix(p.base_seed(), 1, 1)));
    let pos = embed_class(dataset, &split.train_pos, pos_plan.as_ref(), provider)?;
    let neg = embed_class(dataset, &split.train_neg, neg_plan.as_ref(), provider)?;
    let mut train_labels = vec![1i8; pos.len()];
    train_labels.extend(std::iter::repeat_n(-1i8, neg.len()));
    let mut train = pos;
    train.extend(neg);

    let test_pos = embed_class(dataset, &split.test_pos, None, provider)?;
    let test_neg = embed_class(dataset, &split.test_neg, None, provider)?;
    let mut test_labels = vec![1i8; test_pos.len()];
    test_labels.extend(std::iter::repeat_n(-1i8, test_neg.len()));
    let mut test = test_pos;
    test.extend(test_neg);

    PreparedUser::from_features(train, train_labels, test, test_labels)
}

/// Metrics of one user in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct UserOutcome {
    pub accuracy: f64,
    pub far: f64,
    pub frr: f64,
    /// Whether calibration reached `|FAR - FRR| < 0.01` on its own data.
    pub balanced: bool,
    /// RBF width actually used.
    pub gamma: Option<f64>,
    /// Test scores before bias calibration.
    pub raw_scores: Vec<f64>,
    /// Test scores after calibration; accepted iff positive.
    pub scores: Vec<f64>,
}

/// Trains, calibrates and scores one prepared user.
pub fn evaluate(prepared: &PreparedUser, cfg: &SvmConfig, mode: CalibrationMode) -> Result<UserOutcome> {
    let model = svm::train(&prepared.train_features, &prepared.train_labels, cfg)?;
    let calibration = match mode {
        CalibrationMode::Evaluation => svm::calibrate_bias(&model, &prepared.test_features, &prepared.test_labels)?,
        CalibrationMode::Training => svm::calibrate_bias(&model, &prepared.train_features, &prepared.train_labels)?,
    };
    let raw_scores = svm::decision_scores(&model, &prepared.test_features)?;
    let scores = svm::decision_scores(&calibration.model, &prepared.test_features)?;
    let rates = compute_rates(&scores, &prepared.test_labels, 0.0)?;
    Ok(UserOutcome {
        accuracy: rates.accuracy,
        far: rates.rates.far,
        frr: rates.rates.frr,
        balanced: calibration.balance.within_one_percent,
        gamma: model.kernel.gamma(),
        raw_scores,
        scores,
    })
}

/// One user, one augmentation setting, one SVM configuration.
pub fn run_cell(
    dataset: &Dataset,
    split: &FewShotSplit,
    plan: Option<&AugmentationPlan>,
    provider: &Provider,
    cfg: &SvmConfig,
    mode: CalibrationMode,
) -> Result<UserOutcome> {
    evaluate(&prepare(dataset, split, plan, provider)?, cfg, mode)
}

/// Method families as grouped in reports; the two warp directions form one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Noise,
    Temporal,
    Intensity,
    Warp,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Noise, Family::Temporal, Family::Intensity, Family::Warp];

    pub fn of(method: Method) -> Family {
        match method {
            Method::RandomNoise => Family::Noise,
            Method::TemporalScaling => Family::Temporal,
            Method::IntensityScaling => Family::Intensity,
            Method::WarpLeftToRight | Method::WarpRightToLeft => Family::Warp,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Family::Noise => "noise",
            Family::Temporal => "temporal",
            Family::Intensity => "intensity",
            Family::Warp => "warp",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.key() == s)
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::Noise => "Random noise",
            Family::Temporal => "Temporal scaling",
            Family::Intensity => "Intensity scaling",
            Family::Warp => "Warping",
        }
    }
}

/// Kernel and C grid plus solver settings shared by all cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmGrid {
    pub kernels: Vec<KernelKind>,
    pub cs: Vec<f64>,
    pub gamma: Gamma,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SvmGrid {
    pub fn reference() -> Self {
        SvmGrid {
            kernels: vec![KernelKind::Linear, KernelKind::Rbf],
            cs: svm::C_GRID.to_vec(),
            gamma: Gamma::Auto,
            tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }

    /// Every configuration, kernels outermost.
    pub fn configs(&self) -> Vec<SvmConfig> {
        self.kernels
            .iter()
            .flat_map(|&k| {
                self.cs.iter().map(move |&c| SvmConfig {
                    kernel: k,
                    c,
                    gamma: self.gamma,
                    tolerance: self.tolerance,
                    max_iterations: self.max_iterations,
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::config("kernel grid is empty"));
        }
        if self.cs.is_empty() {
            return Err(Error::config("C grid is empty"));
        }
        for cfg in self.configs() {
            cfg.validate().map_err(|e| Error::config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn gamma_rule(&self) -> String {
        match self.gamma {
            Gamma::Auto => "auto: 1/(D*var) of standardized training features".into(),
            Gamma::Value(g) => format!("fixed: {g}"),
        }
    }
}

/// One augmentation swept on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentCell {
    pub spec: AugmentationSpec,
    pub ratio: f64,
}

/// A member of a combined augmentation.
#[derive(Debug, Clone, PartialEq)]
pub enum CombinedMember {
    Fixed(AugmentationSpec),
    /// The best-scoring value of this family among the independent cells at
    /// the same ratio.
    Best(Family),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedCell {
    pub label: String,
    pub members: Vec<CombinedMember>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub base_seed: u64,
    pub calibration: CalibrationMode,
    pub grid: SvmGrid,
    pub eval_users: Vec<String>,
    /// Users negatives are drawn from; `None` means the eval users.
    pub negative_candidates: Option<Vec<String>>,
    pub pool_rule: PoolRule,
    pub sizes: SplitSizes,
    pub independent: Vec<IndependentCell>,
    pub combined: Vec<CombinedCell>,
    /// Restricts ratios to 1 and 0.5 and sizes to the reference ones.
    pub reference_mode: bool,
}

impl ExperimentConfig {
    /// Baseline-only experiment with reference grids over `eval_users`.
    pub fn baseline(eval_users: Vec<String>, base_seed: u64) -> Self {
        ExperimentConfig {
            base_seed,
            calibration: CalibrationMode::Evaluation,
            grid: SvmGrid::reference(),
            eval_users,
            negative_candidates: None,
            pool_rule: PoolRule::Alternating,
            sizes: SplitSizes::REFERENCE,
            independent: Vec::new(),
            combined: Vec::new(),
            reference_mode: true,
        }
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        self.grid.validate()?;
        self.sizes.validate()?;
        let mut seen = BTreeSet::new();
        for u in self.eval_users.iter().chain(self.negative_candidates.iter().flatten()) {
            if dataset.user_samples(u).is_empty() {
                return Err(Error::config(format!("user {u} is not in the dataset")));
            }
        }
        for u in &self.eval_users {
            if !seen.insert(u) {
                return Err(Error::config(format!("evaluation user {u} listed twice")));
            }
        }
        let check_ratio = |r: f64| -> Result<()> {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::config(format!("ratio must be in (0, 1], got {r}")));
            }
            if self.reference_mode && r != 1.0 && r != 0.5 {
                return Err(Error::config(format!(
                    "reference mode allows ratios 1 and 0.5 only, got {r}"
                )));
            }
            Ok(())
        };
        if self.reference_mode && self.sizes != SplitSizes::REFERENCE {
            return Err(Error::config("reference mode uses split sizes 20/100/100/100"));
        }
        for cell in &self.independent {
            check_ratio(cell.ratio)?;
            cell.spec.validate().map_err(|e| Error::config(e.to_string()))?;
        }
        for cell in &self.combined {
            check_ratio(cell.ratio)?;
            if cell.members.is_empty() {
                return Err(Error::config(format!(
                    "combined augmentation {:?} has no members",
                    cell.label
                )));
            }
            for m in &cell.members {
                match m {
                    CombinedMember::Fixed(spec) => spec.validate().map_err(|e| Error::config(e.to_string()))?,
                    CombinedMember::Best(f) => {
                        let swept = self
                            .independent
                            .iter()
                            .any(|c| Family::of(c.spec.method) == *f && c.ratio == cell.ratio);
                        if !swept {
                            return Err(Error::config(format!(
                                "combined augmentation {:?} uses the best {} value at ratio {}, but that family is not swept at that ratio",
                                cell.label,
                                f.key(),
                                cell.ratio
                            )));
                        }
                    }
                }
            }
        }
        // checked last so that dataset-free validation can stop here
        if self.eval_users.is_empty() {
            return Err(Error::config("no evaluation users"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CellKind {
    Baseline,
    Independent,
    Combined,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Baseline => "baseline",
            CellKind::Independent => "independent",
            CellKind::Combined => "combined",
        }
    }
}

pub const BASELINE_LABEL: &str = "No augmentation";

#[derive(Debug, Clone, PartialEq)]
pub struct UserMetrics {
    pub user: String,
    pub accuracy: f64,
    pub far: f64,
    pub frr: f64,
    pub balanced: bool,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanMetrics {
    pub accuracy: f64,
    pub far: f64,
    pub frr: f64,
}

impl MeanMetrics {
    pub fn of(users: &[UserMetrics]) -> MeanMetrics {
        let n = users.len() as f64;
        MeanMetrics {
            accuracy: users.iter().map(|u| u.accuracy).sum::<f64>() / n,
            far: users.iter().map(|u| u.far).sum::<f64>() / n,
            frr: users.iter().map(|u| u.frr).sum::<f64>() / n,
        }
    }

    pub fn imbalance(&self) -> f64 {
        (self.far - self.frr).abs()
    }
}

/// Results of one grid cell over all evaluated users.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub kind: CellKind,
    /// Method family label, combined label, or the baseline label.
    pub method: String,
    /// Parameter values, `-` for the baseline.
    pub value: String,
    pub ratio: Option<f64>,
    pub kernel: KernelKind,
    pub c: f64,
    pub specs: Vec<AugmentationSpec>,
    pub per_user: Vec<UserMetrics>,
    pub mean: MeanMetrics,
    /// Best cell of its (kind, method, ratio) group.
    pub best: bool,
}

impl CellResult {
    pub fn coordinates(&self) -> String {
        cell_coordinates(&self.method, &self.value, self.ratio, self.kernel, self.c, None)
    }

    fn group(&self) -> (CellKind, &str, Option<u64>) {
        (self.kind, self.method.as_str(), self.ratio.map(f64::to_bits))
    }
}

fn cell_coordinates(
    method: &str,
    value: &str,
    ratio: Option<f64>,
    kernel: KernelKind,
    c: f64,
    user: Option<&str>,
) -> String {
    let ratio = ratio.map_or("-".to_string(), |r| r.to_string());
    let mut s = format!(
        "method={method}, value={value}, ratio={ratio}, kernel={}, C={c}",
        kernel.name()
    );
    if let Some(u) = user {
        s.push_str(&format!(", user={u}"));
    }
    s
}

/// Ranks cells: higher mean accuracy, then smaller `|FAR - FRR|`, then
/// smaller C. `Less` means `a` is better.
pub fn compare_cells(a: &CellResult, b: &CellResult) -> Ordering {
    b.mean
        .accuracy
        .total_cmp(&a.mean.accuracy)
        .then(a.mean.imbalance().total_cmp(&b.mean.imbalance()))
        .then(a.c.total_cmp(&b.c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMetadata {
    pub base_seed: u64,
    pub calibration: CalibrationMode,
    pub provider: String,
    pub gamma_rule: String,
    pub pool_rule: PoolRule,
    pub sizes: SplitSizes,
    pub eval_users: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    /// Baseline cells first, then independent, then combined, each in
    /// configuration order with kernels outermost.
    pub cells: Vec<CellResult>,
}

impl EvalReport {
    pub fn baseline_cells(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.kind == CellKind::Baseline)
    }

    pub fn best_cells(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.best)
    }

    pub fn best_baseline(&self) -> Option<&CellResult> {
        self.baseline_cells().find(|c| c.best)
    }
}

/// Marks the best cell in every (kind, method, ratio) group.
pub fn mark_best(cells: &mut [CellResult]) {
    for c in cells.iter_mut() {
        c.best = false;
    }
    let mut groups: Vec<(CellKind, String, Option<u64>)> = Vec::new();
    for c in cells.iter() {
        let g = c.group();
        if !groups.iter().any(|h| (h.0, h.1.as_str(), h.2) == g) {
            groups.push((g.0, g.1.to_string(), g.2));
        }
    }
    for (kind, method, ratio) in groups {
        let best = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.group() == (kind, method.as_str(), ratio))
            .min_by(|(_, a), (_, b)| compare_cells(a, b))
            .map(|(i, _)| i);
        if let Some(i) = best {
            cells[i].best = true;
        }
    }
}

struct AugmentationJob {
    kind: CellKind,
    method: String,
    value: String,
    specs: Vec<AugmentationSpec>,
    ratio: Option<f64>,
}

struct UserContext {
    user: String,
    split: FewShotSplit,
    plan_seed: u64,
}

fn run_jobs(
    dataset: &Dataset,
    provider: &Provider,
    cfg: &ExperimentConfig,
    users: &[UserContext],
    jobs: &[AugmentationJob],
) -> Result<Vec<CellResult>> {
    let configs = cfg.grid.configs();
    let tasks: Vec<(usize, usize)> = (0..jobs.len())
        .flat_map(|j| (0..users.len()).map(move |u| (j, u)))
        .collect();
    let outcomes: Vec<Vec<UserMetrics>> = tasks
        .par_iter()
        .map(|&(j, u)| {
            let job = &jobs[j];
            let ctx = &users[u];
            let tag = |svm: Option<&SvmConfig>, e: Error| {
                let (kernel, c) = svm.map_or((KernelKind::Linear, f64::NAN), |s| (s.kernel, s.c));
                let mut cell = cell_coordinates(&job.method, &job.value, job.ratio, kernel, c, Some(&ctx.user));
                if svm.is_none() {
                    cell = format!(
                        "method={}, value={}, user={} (preparation)",
                        job.method, job.value, ctx.user
                    );
                }
                Error::Cell {
                    cell,
                    source: Box::new(e),
                }
            };
            let plan = match job.ratio {
                Some(r) => Some(AugmentationPlan::new(job.specs.clone(), r, ctx.plan_seed).map_err(|e| tag(None, e))?),
                None => None,
            };
            let prepared = prepare(dataset, &ctx.split, plan.as_ref(), provider).map_err(|e| tag(None, e))?;
            configs
                .iter()
                .map(|svm| {
                    let o = evaluate(&prepared, svm, cfg.calibration).map_err(|e| tag(Some(svm), e))?;
                    Ok(UserMetrics {
                        user: ctx.user.clone(),
                        accuracy: o.accuracy,
                        far: o.far,
                        frr: o.frr,
                        balanced: o.balanced,
                        gamma: o.gamma,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::with_capacity(jobs.len() * configs.len());
    for (j, job) in jobs.iter().enumerate() {
        for (k, svm) in configs.iter().enumerate() {
            let per_user: Vec<UserMetrics> = (0..users.len())
                .map(|u| outcomes[j * users.len() + u][k].clone())
                .collect();
            cells.push(CellResult {
                kind: job.kind,
                method: job.method.clone(),
                value: job.value.clone(),
                ratio: job.ratio,
                kernel: svm.kernel,
                c: svm.c,
                specs: job.specs.clone(),
                mean: MeanMetrics::of(&per_user),
                per_user,
                best: false,
            });
        }
    }
    Ok(cells)
}

fn spec_values(specs: &[AugmentationSpec]) -> String {
    specs
        .iter()
        .map(AugmentationSpec::value_label)
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Best independent spec of `family` at `ratio`.
fn best_spec(cells: &[CellResult], family: Family, ratio: f64) -> Option<AugmentationSpec> {
    cells
        .iter()
        .filter(|c| {
            c.kind == CellKind::Independent && c.ratio == Some(ratio) && Family::of(c.specs[0].method) == family
        })
        .min_by(|a, b| compare_cells(a, b))
        .map(|c| c.specs[0])
}

/// The split of every evaluation user, in configuration order, exactly as
/// [`run_experiment`] uses them.
pub fn experiment_splits(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Vec<FewShotSplit>> {
    cfg.validate(dataset)?;
    let partition = NegativePartition::new(
        cfg.pool_rule,
        cfg.negative_candidates
            .clone()
            .unwrap_or_else(|| cfg.eval_users.clone()),
    );
    cfg.eval_users
        .iter()
        .map(|user| {
            let position = dataset.users().iter().position(|u| u == user).expect("validated") as u64;
            let mut rng = rng_from(mix(cfg.base_seed, position, TAG_SPLIT));
            build_split(dataset, user, &partition, cfg.sizes, &mut rng)
        })
        .collect()
}

/// Runs every configured cell for every evaluation user.
///
/// Splits depend only on the base seed and the user's position in the
/// dataset, so all cells of a user share one split. The result does not
/// depend on the number of worker threads.
pub fn run_experiment(cfg: &ExperimentConfig, dataset: &Dataset, provider: &Provider) -> Result<EvalReport> {
    cfg.validate(dataset)?;
    if (!cfg.independent.is_empty() || !cfg.combined.is_empty()) && !provider.supports_augmentation() {
        return Err(Error::config(format!(
            "provider {} cannot embed augmented signals; augmentation needs the statistical provider",
            provider.name()
        )));
    }
    let users: Vec<UserContext> = experiment_splits(cfg, dataset)?
        .into_iter()
        .map(|split| {
            let position = dataset
                .users()
                .iter()
                .position(|u| *u == split.target_user)
                .expect("validated") as u64;
            UserContext {
                user: split.target_user.clone(),
                split,
                plan_seed: mix(cfg.base_seed, position, TAG_AUGMENT),
            }
        })
        .collect();

    let mut jobs = vec![AugmentationJob {
        kind: CellKind::Baseline,
        method: BASELINE_LABEL.into(),
        value: "-".into(),
        specs: Vec::new(),
        ratio: None,
    }];
    for cell in &cfg.independent {
        jobs.push(AugmentationJob {
            kind: CellKind::Independent,
            method: Family::of(cell.spec.method).label().into(),
            value: cell.spec.value_label(),
            specs: vec![cell.spec],
            ratio: Some(cell.ratio),
        });
    }
    let mut cells = run_jobs(dataset, provider, cfg, &users, &jobs)?;

    if !cfg.combined.is_empty() {
        let mut combined_jobs = Vec::new();
        for cell in &cfg.combined {
            let specs = cell
                .members
                .iter()
                .map(|m| match m {
                    CombinedMember::Fixed(s) => *s,
                    CombinedMember::Best(f) => best_spec(&cells, *f, cell.ratio).expect("validated"),
                })
                .collect::<Vec<_>>();
            combined_jobs.push(AugmentationJob {
                kind: CellKind::Combined,
                method: cell.label.clone(),
                value: spec_values(&specs),
                specs,
                ratio: Some(cell.ratio),
            });
        }
        cells.extend(run_jobs(dataset, provider, cfg, &users, &combined_jobs)?);
    }
    mark_best(&mut cells);

    Ok(EvalReport {
        metadata: ReportMetadata {
            base_seed: cfg.base_seed,
            calibration: cfg.calibration,
            provider: provider.name(),
            gamma_rule: cfg.grid.gamma_rule(),
            pool_rule: cfg.pool_rule,
            sizes: cfg.sizes,
            eval_users: cfg.eval_users.clone(),
        },
        cells,
    })
}

impl fmt::Display for CellResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: acc {:.4} FAR {:.4} FRR {:.4}",
            self.coordinates(),
            self.mean.accuracy,
            self.mean.far,
            self.mean.frr
        )
    }
}

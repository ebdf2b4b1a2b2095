//! Staged training of one node: LR range test, head-only epochs with the
//! base frozen, then discriminative fine-tuning under SGDR. Also baseline
//! selection between transfer sources and best-accuracy snapshots.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datapipe::{augment, AugmentConfig, Image, NodeSample};
use crate::error::{Error, Result};
use crate::hierarchy::argmax2;
use crate::io::write_json;
use crate::nnet::{Group, Mode, Network, Tensor};
use crate::sched::{find_lr, GroupLrPolicy, LrFinderConfig, LrFinderResult, SgdrSchedule};
use crate::seed::component_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdrParams {
    pub eta_min: f64,
    /// Iterations in the first cycle; `None` means one epoch.
    pub cycle_len: Option<usize>,
    pub cycle_mult: f64,
}

impl Default for SgdrParams {
    fn default() -> Self {
        SgdrParams { eta_min: 0.0, cycle_len: None, cycle_mult: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub head_epochs: usize,
    pub fine_tune_epochs: usize,
    pub sgdr: SgdrParams,
    pub lr_finder: LrFinderConfig,
    /// Per-iteration augmentation of training images; `None` disables it.
    pub augment: Option<AugmentConfig>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10,
            head_epochs: 3,
            fine_tune_epochs: 57,
            sgdr: SgdrParams::default(),
            lr_finder: LrFinderConfig::default(),
            augment: Some(AugmentConfig::default()),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.sgdr.eta_min >= 0.0) || !(self.sgdr.cycle_mult >= 1.0) || self.sgdr.cycle_len == Some(0) {
            return Err(Error::Config("sgdr needs eta_min >= 0, cycle_len >= 1, cycle_mult >= 1".into()));
        }
        self.lr_finder.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(a) = &self.augment {
            a.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Head,
    FineTune,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    /// 1-based, counted across both stages.
    pub epoch: usize,
    /// 0-based, counted across both stages.
    pub iter: usize,
    pub stage: Stage,
    pub group_lrs: [f64; 3],
    pub train_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub net: Network,
    pub val_accuracy: f64,
    pub epoch: usize,
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub val_accuracy: f64,
    pub epoch: usize,
    pub tag: String,
}

impl Snapshot {
    pub fn meta(&self) -> SnapshotMeta {
        SnapshotMeta { val_accuracy: self.val_accuracy, epoch: self.epoch, tag: self.tag.clone() }
    }

    /// Network file at `path`, metadata next to it as `<stem>.meta.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.net.save(path)?;
        write_json(&meta_path(path), &self.meta())
    }
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

/// Keeps the first network to reach the highest accuracy seen.
#[derive(Clone, Debug, Default)]
pub struct SnapshotTracker {
    best: Option<Snapshot>,
}

impl SnapshotTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true when `acc` beats the current best strictly.
    pub fn offer(&mut self, net: &Network, val_accuracy: f64, epoch: usize, tag: &str) -> bool {
        if self.best.as_ref().is_some_and(|b| val_accuracy <= b.val_accuracy) {
            return false;
        }
        self.best = Some(Snapshot { net: net.clone(), val_accuracy, epoch, tag: tag.to_string() });
        true
    }

    pub fn best(&self) -> Option<&Snapshot> {
        self.best.as_ref()
    }

    pub fn into_best(self) -> Option<Snapshot> {
        self.best
    }
}

/// 1-based epoch of the first maximum.
pub fn snapshot_best(accuracies: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &a) in accuracies.iter().enumerate() {
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((i + 1, a));
        }
    }
    best.map(|(e, _)| e)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub tag: String,
    pub eta_max: f64,
    pub eta: f64,
    pub lr_curve: LrFinderResult,
    pub iterations: Vec<IterRecord>,
    pub epochs: Vec<EpochRecord>,
    pub best: Option<SnapshotMeta>,
}

impl TrainReport {
    pub fn best_accuracy(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.val_accuracy)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.val_accuracy)
    }

    /// First epoch whose validation accuracy is at least `threshold`.
    pub fn epochs_to_reach(&self, threshold: f64) -> Option<usize> {
        self.epochs.iter().find(|e| e.val_accuracy >= threshold).map(|e| e.epoch)
    }

    /// `epoch,iter,lr,train_loss` with the last-group rate.
    pub fn iterations_csv(&self) -> String {
        let mut s = String::from("epoch,iter,lr,train_loss\n");
        for r in &self.iterations {
            let _ = writeln!(s, "{},{},{:e},{:e}", r.epoch, r.iter, r.group_lrs[2], r.train_loss);
        }
        s
    }

    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("epoch,val_loss,val_acc\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{},{:e},{:e}", r.epoch, r.val_loss, r.val_accuracy);
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub final_net: Network,
    pub best: Option<Snapshot>,
}

impl TrainOutcome {
    /// Best snapshot's network, or the final one when no epoch ran.
    pub fn best_net(&self) -> &Network {
        self.best.as_ref().map_or(&self.final_net, |s| &s.net)
    }
}

/// Hooks into a training run. Both methods see the network after the update.
pub trait TrainObserver {
    fn on_iteration(&mut self, _net: &Network, _rec: &IterRecord) {}
    fn on_epoch(&mut self, _net: &Network, _rec: &EpochRecord) {}
}

impl TrainObserver for () {}

fn flatten(img: &Image) -> Vec<f64> {
    img.data().to_vec()
}

fn features(data: &[NodeSample]) -> (Vec<Vec<f64>>, Vec<usize>) {
    data.iter().map(|s| (flatten(&s.image), s.label)).unzip()
}

fn check_node_data(net: &Network, data: &[NodeSample], what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid(format!("{what} set is empty")));
    }
    for (i, s) in data.iter().enumerate() {
        if !s.image.data().iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("{what} sample {i} has a non-finite pixel")));
        }
        if s.label > 1 {
            return Err(Error::InvalidLabel { label: s.label, classes: 2 });
        }
        if s.image.len() != net.input_dim() {
            return Err(Error::Shape(format!(
                "{what} image has {} values but the network expects {}",
                s.image.len(),
                net.input_dim()
            )));
        }
    }
    Ok(())
}

/// Mean cross-entropy and argmax accuracy in eval mode.
pub fn evaluate(net: &Network, data: &[NodeSample]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let (x, y) = features(data);
    let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let batch = Tensor::from_rows(&rows)?;
    let mut eval = net.clone();
    eval.set_mode(Mode::Eval);
    let probs = eval.predict(&batch)?;
    let correct = (0..probs.rows())
        .filter(|&i| argmax2([probs.get(i, 0), probs.get(i, 1)]) == y[i])
        .count();
    let loss = eval.eval_loss(&batch, &y)?;
    Ok((loss, correct as f64 / y.len() as f64))
}

struct Run<'a, O: TrainObserver> {
    net: Network,
    train: &'a [NodeSample],
    val: &'a [NodeSample],
    cfg: &'a TrainConfig,
    tag: &'a str,
    shuffle_rng: crate::seed::Rng,
    dropout_rng: crate::seed::Rng,
    augment_rng: crate::seed::Rng,
    iter: usize,
    epoch: usize,
    iterations: Vec<IterRecord>,
    epochs: Vec<EpochRecord>,
    tracker: SnapshotTracker,
    observer: &'a mut O,
}

impl<O: TrainObserver> Run<'_, O> {
    fn batches(&mut self) -> Result<Vec<(Tensor, Vec<usize>)>> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        order
            .chunks(self.cfg.batch_size)
            .map(|chunk| {
                let mut rows = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    let img = &self.train[i].image;
                    rows.push(match &self.cfg.augment {
                        Some(a) => flatten(&augment(img, a, &mut self.augment_rng)?),
                        None => flatten(img),
                    });
                }
                let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                Ok((Tensor::from_rows(&refs)?, chunk.iter().map(|&i| self.train[i].label).collect()))
            })
            .collect()
    }

    fn epoch(&mut self, stage: Stage, mut lrs: impl FnMut() -> Result<[f64; 3]>) -> Result<()> {
        self.epoch += 1;
        self.net.set_mode(Mode::Train);
        let batches = self.batches()?;
        let mut total = 0.0;
        for (x, y) in &batches {
            let group_lrs = lrs()?;
            let at = format!("epoch {}, iteration {}", self.epoch, self.iter);
            let (loss, grads) = match self.net.loss_and_grads(x, y, &mut self.dropout_rng) {
                Ok(r) if r.0.is_finite() => r,
                Ok(_) => return Err(Error::Numeric(format!("non-finite training loss at {at}"))),
                Err(Error::Numeric(m)) => return Err(Error::Numeric(format!("{m} at {at}"))),
                Err(e) => return Err(e),
            };
            self.net.sgd_step(&grads, group_lrs)?;
            let rec = IterRecord { epoch: self.epoch, iter: self.iter, stage, group_lrs, train_loss: loss };
            self.observer.on_iteration(&self.net, &rec);
            self.iterations.push(rec);
            self.iter += 1;
            total += loss * y.len() as f64;
        }
        self.net.set_mode(Mode::Eval);
        let (val_loss, val_accuracy) = evaluate(&self.net, self.val)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss after epoch {}", self.epoch)));
        }
        let rec = EpochRecord { epoch: self.epoch, stage, train_loss: total / self.train.len() as f64, val_loss, val_accuracy };
        self.tracker.offer(&self.net, val_accuracy, self.epoch, self.tag);
        self.observer.on_epoch(&self.net, &rec);
        self.epochs.push(rec);
        Ok(())
    }
}

/// First step of a node run: re-initialize the head of a copy of `net`, then
/// run the range test on it with only the head trainable.
pub fn head_lr_find(net: &Network, train: &[NodeSample], cfg: &TrainConfig) -> Result<(Network, LrFinderResult)> {
    cfg.validate()?;
    check_node_data(net, train, "training")?;
    let mut net = net.clone();
    net.reinit_group(Group::Last, &mut component_rng(cfg.seed, "train/head-init"))?;
    let (x, y) = features(train);
    let res = find_lr(
        &net,
        &x,
        &y,
        cfg.batch_size,
        GroupLrPolicy::head_only(),
        &cfg.lr_finder,
        component_rng(cfg.seed, "train/lr-finder"),
    )?;
    Ok((net, res))
}

pub fn train_node(net: &Network, train: &[NodeSample], val: &[NodeSample], cfg: &TrainConfig, tag: &str) -> Result<TrainOutcome> {
    train_node_observed(net, train, val, cfg, tag, &mut ())
}

/// Full staged run on relabeled binary data. `net` is not modified; its head
/// (last group) is re-initialized on a copy before anything else happens.
pub fn train_node_observed<O: TrainObserver>(
    net: &Network,
    train: &[NodeSample],
    val: &[NodeSample],
    cfg: &TrainConfig,
    tag: &str,
    observer: &mut O,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_node_data(net, train, "training")?;
    check_node_data(net, val, "validation")?;

    let (net, lr_curve) = head_lr_find(net, train, cfg)?;
    let eta = lr_curve.eta;

    let mut run = Run {
        net,
        train,
        val,
        cfg,
        tag,
        shuffle_rng: component_rng(cfg.seed, "train/shuffle"),
        dropout_rng: component_rng(cfg.seed, "train/dropout"),
        augment_rng: component_rng(cfg.seed, "train/augment"),
        iter: 0,
        epoch: 0,
        iterations: Vec::new(),
        epochs: Vec::new(),
        tracker: SnapshotTracker::new(),
        observer,
    };

    let head = GroupLrPolicy::head_only().group_lrs(eta)?;
    for _ in 0..cfg.head_epochs {
        run.epoch(Stage::Head, || Ok(head))?;
    }

    let per_epoch = train.len().div_ceil(cfg.batch_size);
    let mut sgdr = SgdrSchedule::new(eta, cfg.sgdr.eta_min, cfg.sgdr.cycle_len.unwrap_or(per_epoch), cfg.sgdr.cycle_mult)?;
    let policy = GroupLrPolicy::default();
    for _ in 0..cfg.fine_tune_epochs {
        run.epoch(Stage::FineTune, || {
            let lrs = policy.group_lrs(sgdr.lr())?;
            sgdr = sgdr.advance();
            Ok(lrs)
        })?;
    }

    let best = run.tracker.into_best();
    let report = TrainReport {
        tag: tag.to_string(),
        eta_max: lr_curve.eta_max,
        eta,
        lr_curve,
        iterations: run.iterations,
        epochs: run.epochs,
        best: best.as_ref().map(Snapshot::meta),
    };
    Ok(TrainOutcome { report, final_net: run.net, best })
}

/// Index of the highest score; earlier entries win ties. Missing scores
/// rank below any present one.
pub fn select_by_accuracy(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, Option<f64>)> = None;
    for (i, &s) in scores.iter().enumerate() {
        let better = match best {
            None => true,
            Some((_, b)) => match (s, b) {
                (Some(a), Some(b)) => a > b,
                (Some(_), None) => true,
                _ => false,
            },
        };
        if better {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug)]
pub struct Selection {
    pub index: usize,
    pub tag: String,
    pub outcomes: Vec<TrainOutcome>,
}

impl Selection {
    pub fn chosen(&self) -> &TrainOutcome {
        &self.outcomes[self.index]
    }
}

/// Trains every candidate with the same config and seed, one thread each,
/// and keeps the one with the best snapshot accuracy.
pub fn select_best_baseline(
    candidates: &[(String, Network)],
    train: &[NodeSample],
    val: &[NodeSample],
    cfg: &TrainConfig,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::invalid("no baseline candidates"));
    }
    let results: Vec<Result<TrainOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = candidates
            .iter()
            .map(|(tag, net)| s.spawn(move || train_node(net, train, val, cfg, tag)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let scores: Vec<Option<f64>> = outcomes.iter().map(|o| o.report.best_accuracy()).collect();
    let index = select_by_accuracy(&scores).expect("non-empty");
    Ok(Selection { index, tag: candidates[index].0.clone(), outcomes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { epochs: 10, lr: 0.05, batch_size: 10, seed: 0 }
    }
}

/// Plain SGD on every group at a constant rate. Produces the generic
/// pretrained base used as a transfer source.
pub fn pretrain_generic(net: &Network, data: &[NodeSample], cfg: &PretrainConfig) -> Result<Network> {
    if cfg.batch_size == 0 || !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config("pretraining needs batch_size >= 1 and a positive finite lr".into()));
    }
    check_node_data(net, data, "pretraining")?;
    let mut net = net.clone();
    net.set_mode(Mode::Train);
    let mut shuffle = component_rng(cfg.seed, "pretrain/shuffle");
    let mut dropout = component_rng(cfg.seed, "pretrain/dropout");
    let (x, y) = features(data);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| x[i].as_slice()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grads) = net.loss_and_grads(&Tensor::from_rows(&rows)?, &labels, &mut dropout)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite pretraining loss in epoch {epoch}")));
            }
            net.sgd_step(&grads, [cfg.lr; 3])?;
        }
    }
    net.set_mode(Mode::Eval);
    Ok(net)
}

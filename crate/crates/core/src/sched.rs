//! Learning-rate machinery: the exponential LR range test, SGDR cosine
//! annealing with warm restarts, and discriminative per-group rates.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{Mode, Network, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrFinderConfig {
    pub start_lr: f64,
    pub end_lr: f64,
    pub num_iters: usize,
    pub smoothing_beta: f64,
    pub divergence_factor: f64,
    /// Leading points left out of the argmin and of the divergence test. The
    /// smoothed value there rests on only a few minibatches. The argmin falls
    /// back to the whole curve when the run ends before passing it.
    pub skip_start: usize,
}

impl Default for LrFinderConfig {
    fn default() -> Self {
        LrFinderConfig { start_lr: 1e-5, end_lr: 10.0, num_iters: 100, smoothing_beta: 0.98, divergence_factor: 4.0, skip_start: 10 }
    }
}

impl LrFinderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.start_lr > 0.0 && self.end_lr > self.start_lr && self.end_lr.is_finite()) {
            return Err(Error::invalid(format!(
                "LR finder needs 0 < start_lr < end_lr, got {} and {}",
                self.start_lr, self.end_lr
            )));
        }
        if self.num_iters < 2 {
            return Err(Error::invalid("LR finder needs num_iters >= 2"));
        }
        if !(0.0..1.0).contains(&self.smoothing_beta) {
            return Err(Error::invalid("smoothing_beta must lie in [0, 1)"));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::invalid("divergence_factor must exceed 1"));
        }
        Ok(())
    }
}

/// `start · (end/start)^(t/(num_iters−1))`, with both endpoints returned exactly.
pub fn lr_at_iter(cfg: &LrFinderConfig, t: usize) -> Result<f64> {
    cfg.validate()?;
    if t >= cfg.num_iters {
        return Err(Error::invalid(format!("iteration {t} outside 0..{}", cfg.num_iters)));
    }
    if t == 0 {
        return Ok(cfg.start_lr);
    }
    if t == cfg.num_iters - 1 {
        return Ok(cfg.end_lr);
    }
    let frac = t as f64 / (cfg.num_iters - 1) as f64;
    Ok(cfg.start_lr * (frac * (cfg.end_lr / cfg.start_lr).ln()).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iter: usize,
    pub lr: f64,
    pub raw_loss: f64,
    pub smoothed_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrFinderResult {
    pub curve: Vec<CurvePoint>,
    pub eta_max: f64,
    pub eta: f64,
}

impl LrFinderResult {
    /// `iter,lr,raw_loss,smoothed_loss`; floats in shortest round-trip scientific form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,lr,raw_loss,smoothed_loss\n");
        for p in &self.curve {
            let _ = writeln!(out, "{},{:e},{:e},{:e}", p.iter, p.lr, p.raw_loss, p.smoothed_loss);
        }
        out
    }
}

/// Something the range test can train: one update at the given rate,
/// returning the loss observed for that iteration.
pub trait LrProbe {
    fn step(&mut self, lr: f64) -> Result<f64>;
}

/// Exponential LR range test. Runs one update per iteration with a growing
/// rate, smooths the loss with a bias-corrected EMA and stops once the smoothed
/// loss exceeds `divergence_factor` times the best seen. `eta_max` is the rate
/// at the smoothed minimum (after `skip_start`) and `eta = eta_max / 10`.
pub fn run_lr_finder<P: LrProbe + ?Sized>(probe: &mut P, cfg: &LrFinderConfig) -> Result<LrFinderResult> {
    cfg.validate()?;
    let beta = cfg.smoothing_beta;
    let mut avg = 0.0;
    let mut best = f64::INFINITY;
    let mut curve = Vec::with_capacity(cfg.num_iters);
    for t in 0..cfg.num_iters {
        let lr = lr_at_iter(cfg, t)?;
        let raw = match probe.step(lr) {
            Ok(l) if l.is_finite() => l,
            Ok(l) if t == 0 => return Err(Error::Numeric(format!("LR finder loss {l} at first iteration"))),
            Err(e) if t == 0 => return Err(e),
            // a blow-up after the first iteration is divergence
            Ok(_) | Err(Error::Numeric(_)) => break,
            Err(e) => return Err(e),
        };
        avg = beta * avg + (1.0 - beta) * raw;
        let smoothed = avg / (1.0 - beta.powi(t as i32 + 1));
        curve.push(CurvePoint { iter: t, lr, raw_loss: raw, smoothed_loss: smoothed });
        if t >= cfg.skip_start {
            if smoothed > cfg.divergence_factor * best {
                break;
            }
            best = best.min(smoothed);
        }
    }
    if curve.len() < 2 {
        return Err(Error::InsufficientData(format!("LR finder recorded {} point(s)", curve.len())));
    }
    let tail = if curve.len() > cfg.skip_start { &curve[cfg.skip_start..] } else { &curve[..] };
    let min = tail
        .iter()
        .fold(&tail[0], |m, p| if p.smoothed_loss < m.smoothed_loss { p } else { m });
    let eta_max = min.lr;
    Ok(LrFinderResult { eta_max, eta: eta_max / 10.0, curve })
}

/// Range-test probe over a private copy of a network, cycling through
/// minibatches and applying `policy` to the probe rate.
pub struct NetworkProbe<'a, R: Rng> {
    net: Network,
    batches: &'a [(Tensor, Vec<usize>)],
    cursor: usize,
    policy: GroupLrPolicy,
    rng: R,
}

impl<'a, R: Rng> NetworkProbe<'a, R> {
    pub fn new(net: &Network, batches: &'a [(Tensor, Vec<usize>)], policy: GroupLrPolicy, rng: R) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::InsufficientData("LR finder needs at least one batch".into()));
        }
        let mut net = net.clone();
        net.set_mode(Mode::Train);
        Ok(NetworkProbe { net, batches, cursor: 0, policy, rng })
    }
}

impl<R: Rng> LrProbe for NetworkProbe<'_, R> {
    fn step(&mut self, lr: f64) -> Result<f64> {
        let (x, y) = &self.batches[self.cursor % self.batches.len()];
        self.cursor += 1;
        let (loss, grads) = self.net.loss_and_grads(x, y, &mut self.rng)?;
        self.net.sgd_step(&grads, self.policy.group_lrs(lr)?)?;
        Ok(loss)
    }
}

/// Range test on a network. The caller's network is only borrowed; the probe
/// trains a clone that is dropped afterwards. Batches are reshuffled whenever
/// the run wraps around the data.
pub fn find_lr<R: Rng>(
    net: &Network,
    x: &[Vec<f64>],
    y: &[usize],
    batch_size: usize,
    policy: GroupLrPolicy,
    cfg: &LrFinderConfig,
    mut rng: R,
) -> Result<LrFinderResult> {
    if x.is_empty() || x.len() != y.len() || batch_size == 0 {
        return Err(Error::InsufficientData("LR finder needs labelled samples and batch_size >= 1".into()));
    }
    let per_epoch = x.len().div_ceil(batch_size);
    let epochs = cfg.num_iters.div_ceil(per_epoch);
    let mut batches = Vec::with_capacity(epochs * per_epoch);
    let mut order: Vec<usize> = (0..x.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| x[i].as_slice()).collect();
            batches.push((Tensor::from_rows(&rows)?, chunk.iter().map(|&i| y[i]).collect()));
        }
    }
    let mut probe = NetworkProbe::new(net, &batches, policy, rng)?;
    run_lr_finder(&mut probe, cfg)
}

/// Cosine annealing with warm restarts, advanced once per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdrSchedule {
    eta_max: f64,
    eta_min: f64,
    cycle_len: usize,
    t_cur: usize,
    cycle_mult: f64,
}

impl SgdrSchedule {
    pub fn new(eta_max: f64, eta_min: f64, cycle_len: usize, cycle_mult: f64) -> Result<Self> {
        if !(eta_max > 0.0 && eta_max.is_finite()) || !(eta_min >= 0.0) || eta_min >= eta_max {
            return Err(Error::invalid(format!("SGDR needs 0 <= eta_min < eta_max, got {eta_min}, {eta_max}")));
        }
        if cycle_len == 0 {
            return Err(Error::invalid("SGDR cycle length must be >= 1"));
        }
        if !(cycle_mult >= 1.0 && cycle_mult.is_finite()) {
            return Err(Error::invalid("SGDR cycle_mult must be >= 1"));
        }
        Ok(SgdrSchedule { eta_max, eta_min, cycle_len, t_cur: 0, cycle_mult })
    }

    pub fn eta_max(&self) -> f64 {
        self.eta_max
    }

    pub fn eta_min(&self) -> f64 {
        self.eta_min
    }

    pub fn cycle_len(&self) -> usize {
        self.cycle_len
    }

    pub fn t_cur(&self) -> usize {
        self.t_cur
    }

    /// `η_min + ½(η_max − η_min)(1 + cos(π·t_cur/T_i))`; exactly `η_max` at a cycle start.
    pub fn lr(&self) -> f64 {
        if self.t_cur == 0 {
            return self.eta_max;
        }
        let phase = std::f64::consts::PI * self.t_cur as f64 / self.cycle_len as f64;
        self.eta_min + 0.5 * (self.eta_max - self.eta_min) * (1.0 + phase.cos())
    }

    /// Next iteration's schedule. Reaching the end of a cycle restarts at
    /// `t_cur = 0` with the cycle length scaled by `cycle_mult`.
    pub fn advance(&self) -> SgdrSchedule {
        let mut next = self.clone();
        next.t_cur += 1;
        if next.t_cur >= next.cycle_len {
            next.t_cur = 0;
            next.cycle_len = ((next.cycle_len as f64 * next.cycle_mult).round() as usize).max(1);
        }
        next
    }
}

pub fn sgdr_lr(s: &SgdrSchedule) -> f64 {
    s.lr()
}

pub fn sgdr_advance(s: &SgdrSchedule) -> SgdrSchedule {
    s.advance()
}

/// Per-group multipliers applied to the current base rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupLrPolicy {
    pub factors: [f64; 3],
}

impl Default for GroupLrPolicy {
    /// First layers frozen, middle layers at a fifth, last layers at full rate.
    fn default() -> Self {
        GroupLrPolicy { factors: [0.0, 0.2, 1.0] }
    }
}

impl GroupLrPolicy {
    /// Only the last group trains.
    pub fn head_only() -> Self {
        GroupLrPolicy { factors: [0.0, 0.0, 1.0] }
    }

    pub fn uniform() -> Self {
        GroupLrPolicy { factors: [1.0; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
            return Err(Error::invalid("group LR factors must be finite and non-negative"));
        }
        if self.factors[2] != 1.0 {
            return Err(Error::invalid("last-group LR factor must be 1"));
        }
        Ok(())
    }

    pub fn group_lrs(&self, eta: f64) -> Result<[f64; 3]> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("base learning rate {eta} must be finite and >= 0")));
        }
        Ok(self.factors.map(|f| f * eta))
    }
}

pub fn group_lrs(policy: &GroupLrPolicy, eta: f64) -> Result<[f64; 3]> {
    policy.group_lrs(eta)
}

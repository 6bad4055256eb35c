//! SGD with momentum and weight decay under a warm-restart cosine schedule.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{to_net_input, FoldSplit, NetInput, NoduleSample};
use crate::error::{invalid, Error, Result};
use crate::evalharness::{score_inputs, EvalConfig};
use crate::losses::{loss_graph, LossBreakdown, LossConfig};
use crate::metrics::mean;
use crate::model::{build_graph, Gradients, NetConfig, NetState, Param, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs per cosine cycle.
    pub restart_period: usize,
    pub seed: u64,
    /// Held-out evaluation cadence in epochs; 0 disables it.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_max: 1e-5,
            lr_min: 0.0,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 32,
            epochs: 200,
            restart_period: 50,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr_min >= 0.0 && self.lr_max > self.lr_min && self.lr_max.is_finite()) {
            return err("train.lr_max must exceed train.lr_min >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return err("train.momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return err("train.weight_decay must be non-negative");
        }
        if self.batch_size == 0 {
            return err("train.batch_size must be >= 1");
        }
        if self.restart_period == 0 {
            return err("train.restart_period must be >= 1");
        }
        Ok(())
    }
}

/// Cosine annealing from `lr_max` to `lr_min`, restarting every `restart_period` epochs.
pub fn sgdr_lr(epoch: usize, cfg: &TrainConfig) -> f64 {
    let p = cfg.restart_period as f64;
    let e = (epoch % cfg.restart_period) as f64;
    cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + (std::f64::consts::PI * e / p).cos())
}

/// Momentum buffers for `v ← μv + g + λθ; θ ← θ − lr·v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(params: &[Param]) -> Self {
        Self {
            velocity: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn update(&mut self, params: &mut [Param], grads: &Gradients, lr: f64, momentum: f64, weight_decay: f64) {
        for ((p, g), v) in params.iter_mut().zip(&grads.grads).zip(&mut self.velocity) {
            for ((theta, &gi), vi) in p.data.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = momentum * *vi + gi + weight_decay * *theta;
                *theta -= lr * *vi;
            }
        }
    }
}

/// Objective and parameter gradients for one sample.
pub fn loss_and_gradients(state: &NetState, input: &NetInput, loss: &LossConfig) -> Result<(LossBreakdown, Gradients)> {
    batch_gradients(state, std::slice::from_ref(input), loss)
}

/// Objective value for one sample without differentiation.
pub fn loss_value(state: &NetState, input: &NetInput, loss: &LossConfig) -> Result<LossBreakdown> {
    let mut t = Tape::new(state.params());
    let g = build_graph(&mut t, state, &input.image)?;
    Ok(loss_graph(&mut t, &g, input, loss)?.breakdown)
}

/// Batch-mean objective and gradients.
pub fn batch_gradients(state: &NetState, batch: &[NetInput], loss: &LossConfig) -> Result<(LossBreakdown, Gradients)> {
    if batch.is_empty() {
        return Err(invalid!("empty training batch"));
    }
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros_like(state.params());
    let mut acc = LossBreakdown {
        l_mcm: 0.0,
        phi_a: 0.0,
        phi_b: 0.0,
        total: 0.0,
    };
    for input in batch {
        let mut t = Tape::new(state.params());
        let g = build_graph(&mut t, state, &input.image)?;
        let lv = loss_graph(&mut t, &g, input, loss)?;
        t.backward_into(lv.total, 1.0 / n, &mut grads);
        let b = lv.breakdown;
        acc.l_mcm += b.l_mcm / n;
        acc.phi_a += b.phi_a / n;
        acc.phi_b += b.phi_b / n;
        acc.total += b.total / n;
    }
    if !grads.is_finite() {
        return Err(Error::NumericFault("non-finite parameter gradient".into()));
    }
    Ok((acc, grads))
}

/// One optimizer step on `batch` at learning rate `lr`; returns the pre-update loss.
pub fn train_step(
    state: &mut NetState,
    sgd: &mut Sgd,
    batch: &[NetInput],
    lr: f64,
    cfg: &TrainConfig,
    loss: &LossConfig,
) -> Result<LossBreakdown> {
    let (breakdown, grads) = batch_gradients(state, batch, loss)?;
    sgd.update(state.params_mut(), &grads, lr, cfg.momentum, cfg.weight_decay);
    state.check_finite()?;
    Ok(breakdown)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub dsc: f64,
    pub iou: f64,
    pub nsd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub held_out: Option<HeldOut>,
}

impl EpochRecord {
    /// `epoch lr loss dsc iou nsd`; metrics are `-` when not evaluated.
    pub fn log_line(&self) -> String {
        let metrics = match self.held_out {
            Some(h) => format!("{:.6} {:.6} {:.6}", h.dsc, h.iou, h.nsd),
            None => "- - -".to_string(),
        };
        format!("{} {:.6e} {:.9} {metrics}", self.epoch, self.lr, self.mean_loss)
    }
}

pub struct FitOutcome {
    pub final_state: NetState,
    /// Best held-out DSC state with its epoch, when a held-out fold exists.
    pub best: Option<(usize, f64, NetState)>,
    pub epochs: Vec<EpochRecord>,
    pub final_path: Option<PathBuf>,
    pub best_path: Option<PathBuf>,
}

/// Which samples to train on.
#[derive(Clone, Copy, Debug)]
pub enum TrainSet<'a> {
    /// Every sample; nothing is held out.
    All,
    /// Every fold except `fold`, which is evaluated each epoch.
    HoldOut { split: &'a FoldSplit, fold: usize },
}

pub struct FitSpec<'a> {
    pub net: &'a NetConfig,
    pub train: &'a TrainConfig,
    pub loss: &'a LossConfig,
    /// Scoring of the held-out fold.
    pub eval: &'a EvalConfig,
    /// Run directory receiving `checkpoints/<tag>/` and `logs/<tag>/`;
    /// nothing is written when absent.
    pub out_dir: Option<&'a Path>,
    pub tag: &'a str,
}

fn partition<'s>(samples: &'s [NoduleSample], set: TrainSet) -> Result<(Vec<&'s NoduleSample>, Vec<&'s NoduleSample>)> {
    match set {
        TrainSet::All => Ok((samples.iter().collect(), Vec::new())),
        TrainSet::HoldOut { split, fold } => {
            if fold >= split.k {
                return Err(invalid!("fold {fold} out of range (valid 0–{})", split.k - 1));
            }
            let mut train = Vec::new();
            let mut test = Vec::new();
            for s in samples {
                match split.fold_of(&s.sample_id) {
                    Some(f) if f == fold => test.push(s),
                    Some(_) => train.push(s),
                    None => return Err(invalid!("sample '{}' has no fold assignment", s.sample_id)),
                }
            }
            Ok((train, test))
        }
    }
}

fn open_log(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Trains from a seeded initialization, evaluating the held-out fold every
/// `eval_every` epochs with `X_S` binarized at 0.5.
pub fn fit(samples: &[NoduleSample], set: TrainSet, spec: &FitSpec) -> Result<FitOutcome> {
    spec.net.validate()?;
    spec.train.validate()?;
    spec.loss.validate()?;
    spec.eval.validate()?;
    let (train, test) = partition(samples, set)?;
    if train.is_empty() {
        return Err(invalid!("no training samples"));
    }
    let size = spec.net.input_size;
    let train_inputs = train
        .iter()
        .map(|s| to_net_input(s, size))
        .collect::<Result<Vec<_>>>()?;
    let test_inputs = test
        .iter()
        .map(|s| to_net_input(s, size))
        .collect::<Result<Vec<_>>>()?;

    let cfg = spec.train;
    let mut state = NetState::init(spec.net, cfg.seed)?;
    let mut sgd = Sgd::new(state.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e_ed0f_0bde);
    let mut order: Vec<usize> = (0..train_inputs.len()).collect();

    let mut logs = match spec.out_dir {
        Some(dir) => {
            let logs = dir.join("logs").join(spec.tag);
            Some((open_log(&logs.join("train.log"))?, open_log(&logs.join("loss.log"))?))
        }
        None => None,
    };
    let log_err = |dir: &Path, e: std::io::Error| Error::io(dir.join("logs").join(spec.tag), e);

    let mut best: Option<(usize, f64, NetState)> = None;
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = sgdr_lr(epoch, cfg);
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<NetInput> = chunk.iter().map(|&i| train_inputs[i].clone()).collect();
            let b = train_step(&mut state, &mut sgd, &batch, lr, cfg, spec.loss)?;
            if let (Some((_, loss_log)), Some(dir)) = (logs.as_mut(), spec.out_dir) {
                writeln!(loss_log, "{}", b.log_line(step)).map_err(|e| log_err(dir, e))?;
            }
            losses.push(b.total);
            step += 1;
        }
        let evaluate = !test_inputs.is_empty() && cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs);
        let held_out = if evaluate {
            let rows = score_inputs(&state, &test_inputs, &test, spec.eval.annotation, spec.eval.nsd_tolerance)?;
            let h = HeldOut {
                dsc: mean(&rows.iter().map(|r| r.dsc).collect::<Vec<_>>()),
                iou: mean(&rows.iter().map(|r| r.iou).collect::<Vec<_>>()),
                nsd: mean(&rows.iter().map(|r| r.nsd).collect::<Vec<_>>()),
            };
            if best.as_ref().is_none_or(|(_, d, _)| h.dsc > *d) {
                best = Some((epoch, h.dsc, state.clone()));
            }
            Some(h)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            lr,
            mean_loss: mean(&losses),
            held_out,
        };
        if let (Some((train_log, _)), Some(dir)) = (logs.as_mut(), spec.out_dir) {
            writeln!(train_log, "{}", record.log_line()).map_err(|e| log_err(dir, e))?;
        }
        records.push(record);
    }
    if let (Some((mut a, mut b)), Some(dir)) = (logs, spec.out_dir) {
        a.flush().map_err(|e| log_err(dir, e))?;
        b.flush().map_err(|e| log_err(dir, e))?;
    }

    let (mut final_path, mut best_path) = (None, None);
    if let Some(dir) = spec.out_dir {
        let ckpt = dir.join("checkpoints").join(spec.tag);
        let p = ckpt.join("final.json");
        state.save(&p)?;
        final_path = Some(p);
        if let Some((_, _, b)) = &best {
            let p = ckpt.join("best.json");
            b.save(&p)?;
            best_path = Some(p);
        }
    }
    Ok(FitOutcome {
        final_state: state,
        best,
        epochs: records,
        final_path,
        best_path,
    })
}

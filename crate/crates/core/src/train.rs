//! Loss, metrics, Adam and the full-batch training loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{AggregatorModel, PreparedModel};
use crate::error::{Error, Result};
use crate::graphdata::ScaledMolecule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    pub lr_decay_gamma: f64,
    #[serde(default = "default_beta")]
    pub beta1: f64,
    #[serde(default = "default_beta")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_smooth_l1_beta")]
    pub smooth_l1_beta: f64,
    pub seed: u64,
}

fn default_beta() -> f64 {
    0.9
}
fn default_eps() -> f64 {
    1e-8
}
fn default_smooth_l1_beta() -> f64 {
    1.0
}

impl TrainConfig {
    pub fn new(epochs: usize, initial_lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            initial_lr,
            lr_decay_gamma: 0.99,
            beta1: default_beta(),
            beta2: default_beta(),
            eps: default_eps(),
            smooth_l1_beta: default_smooth_l1_beta(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if !(self.lr_decay_gamma > 0.0 && self.lr_decay_gamma <= 1.0) {
            return bad("lr_decay_gamma must lie in (0, 1]");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0 && self.smooth_l1_beta > 0.0) {
            return bad("eps and smooth_l1_beta must be positive");
        }
        Ok(())
    }
}

pub fn smooth_l1(pred: f64, target: f64, beta: f64) -> f64 {
    let d = (pred - target).abs();
    if d < beta {
        0.5 * d * d / beta
    } else {
        d - 0.5 * beta
    }
}

/// Derivative of [`smooth_l1`] with respect to `pred`.
pub fn smooth_l1_grad(pred: f64, target: f64, beta: f64) -> f64 {
    let d = pred - target;
    if d.abs() < beta {
        d / beta
    } else {
        d.signum()
    }
}

pub fn r2_score(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            got: preds.len(),
        });
    }
    if targets.len() < 2 {
        return Err(Error::UndefinedScore(format!(
            "R² needs at least 2 samples, got {}",
            targets.len()
        )));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedScore("all targets are identical".into()));
    }
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    config.initial_lr * config.lr_decay_gamma.powi(epoch as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n_params: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn from_config(n_params: usize, config: &TrainConfig) -> Self {
        Self::new(n_params, config.beta1, config.beta2, config.eps)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {k} is {}", grads[k])));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grads[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grads[k] * grads[k];
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Loss and R² of one split; R² is `None` when undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub loss: f64,
    pub r2: Option<f64>,
}

/// Metrics of the parameters in effect at the start of an epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train: SplitMetrics,
    pub test: SplitMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: Vec<f64>,
    pub train: SplitMetrics,
    pub test: SplitMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub params: Vec<f64>,
    pub optimizer: Adam,
    pub history: Vec<EpochRecord>,
    /// Lowest test loss seen; earliest epoch wins ties.
    pub best: Option<Checkpoint>,
}

impl TrainState {
    pub fn best_train_loss(&self) -> Option<f64> {
        self.history.iter().map(|r| r.train.loss).reduce(f64::min)
    }
}

fn check_loss(loss: f64, mol: &ScaledMolecule) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("loss on molecule {}", mol.id)))
    }
}

fn metrics(preds: &[f64], set: &[ScaledMolecule], beta: f64) -> SplitMetrics {
    let targets: Vec<f64> = set.iter().map(|m| m.target).collect();
    let loss = preds.iter().zip(&targets).map(|(p, t)| smooth_l1(*p, *t, beta)).sum::<f64>()
        / set.len().max(1) as f64;
    SplitMetrics {
        loss,
        r2: r2_score(preds, &targets).ok(),
    }
}

/// Predictions for every molecule, in order.
pub fn predict(prepared: &PreparedModel<'_>, set: &[ScaledMolecule]) -> Result<Vec<f64>> {
    set.par_iter().map(|m| prepared.forward_molecule(m)).collect()
}

pub fn evaluate(model: &AggregatorModel, params: &[f64], set: &[ScaledMolecule], beta: f64) -> Result<SplitMetrics> {
    let prepared = model.prepare(params)?;
    let preds = predict(&prepared, set)?;
    for (p, m) in preds.iter().zip(set) {
        check_loss(smooth_l1(*p, m.target, beta), m)?;
    }
    Ok(metrics(&preds, set, beta))
}

/// Mean smooth-L1 over `set` and its gradient. Per-molecule terms run in
/// parallel and are reduced in molecule order, so results do not depend on
/// the thread count.
pub fn loss_and_grad(
    prepared: &PreparedModel<'_>,
    set: &[ScaledMolecule],
    beta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let terms: Vec<(f64, Vec<f64>)> = set
        .par_iter()
        .map(|m| {
            let (pred, grad) = prepared.forward_backward(m)?;
            check_loss(smooth_l1(pred, m.target, beta), m)?;
            Ok((pred, grad))
        })
        .collect::<Result<_>>()?;
    let n = set.len() as f64;
    let mut grad = vec![0.0; prepared.model().param_count()];
    let mut preds = Vec::with_capacity(set.len());
    for ((pred, g), m) in terms.into_iter().zip(set) {
        let scale = smooth_l1_grad(pred, m.target, beta) / n;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += scale * b);
        preds.push(pred);
    }
    Ok((preds, grad))
}

pub fn train_loop(
    model: &AggregatorModel,
    init: Vec<f64>,
    train_set: &[ScaledMolecule],
    test_set: &[ScaledMolecule],
    config: &TrainConfig,
) -> Result<TrainState> {
    train_loop_with(model, init, train_set, test_set, config, |_| {})
}

/// [`train_loop`] with a callback after each recorded epoch.
pub fn train_loop_with(
    model: &AggregatorModel,
    init: Vec<f64>,
    train_set: &[ScaledMolecule],
    test_set: &[ScaledMolecule],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainState> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyPartition {
            train: 0,
            test: test_set.len(),
        });
    }
    if init.len() != model.param_count() {
        return Err(Error::ParamCountMismatch {
            expected: model.param_count(),
            got: init.len(),
        });
    }
    let beta = config.smooth_l1_beta;
    let mut state = TrainState {
        optimizer: Adam::from_config(init.len(), config),
        params: init,
        history: Vec::with_capacity(config.epochs),
        best: None,
    };
    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch);
        let (train_preds, grad) = {
            let prepared = model.prepare(&state.params)?;
            loss_and_grad(&prepared, train_set, beta)?
        };
        let train = metrics(&train_preds, train_set, beta);
        let test = if test_set.is_empty() {
            SplitMetrics { loss: f64::NAN, r2: None }
        } else {
            evaluate(model, &state.params, test_set, beta)?
        };
        let improved = match &state.best {
            None => true,
            Some(b) => test.loss < b.test.loss || (b.test.loss.is_nan() && train.loss < b.train.loss),
        };
        if improved {
            state.best = Some(Checkpoint {
                epoch,
                params: state.params.clone(),
                train,
                test,
            });
        }
        let record = EpochRecord { epoch, lr, train, test };
        on_epoch(&record);
        state.history.push(record);
        state.optimizer.step(&mut state.params, &grad, lr)?;
    }
    Ok(state)
}

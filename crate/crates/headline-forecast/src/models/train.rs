//! Mini-batch training with adaptive moment estimation, model persistence,
//! and seeded random hyperparameter search scored by k-fold validation.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{kfold_split, DatasetVariant};
use crate::hash::derive_seed;
use crate::metrics;

use super::tape::Tensor;
use super::{forward, init_params, loss_and_grad, Batch, Mode, ModelSpec, ParameterSet};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// First/second-moment state per parameter tensor.
struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: usize,
    lr: f64,
}

impl Adam {
    fn new(params: &ParameterSet, lr: f64) -> Adam {
        Adam {
            m: params.iter().map(|(_, t)| Tensor::zeros(&t.dims)).collect(),
            v: params.iter().map(|(_, t)| Tensor::zeros(&t.dims)).collect(),
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut ParameterSet, grads: &[Tensor]) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for ((tensor, grad), (m, v)) in params
            .tensors_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..tensor.len() {
                let g = grad.data[i];
                m.data[i] = BETA1 * m.data[i] + (1.0 - BETA1) * g;
                v.data[i] = BETA2 * v.data[i] + (1.0 - BETA2) * g * g;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                tensor.data[i] -= self.lr * mhat / (vhat.sqrt() + EPSILON);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// A trained network: spec, final parameters, per-epoch history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: ParameterSet,
    pub history: Vec<EpochStats>,
}

/// Train on the variant's train split, or on an explicit (fit, validate)
/// row pair when doing cross-validation.
///
/// Runs every epoch of full mini-batch passes; per-epoch row order is
/// reshuffled when the variant allows shuffling, otherwise batches walk the
/// rows chronologically. Aborts with the epoch index when the loss turns
/// non-finite.
pub fn train(
    spec: &ModelSpec,
    variant: &DatasetVariant,
    fold: Option<(&[usize], &[usize])>,
) -> Result<TrainedModel> {
    spec.validate()?;
    let rows: Vec<usize> = match fold {
        Some((fit, _)) => fit.to_vec(),
        None => variant.splits.train.clone(),
    };
    let val_rows = fold.map(|(_, v)| v);
    if rows.is_empty() {
        return Err(Error::NoData("no training rows".into()));
    }
    if spec.batch_size > rows.len() {
        return Err(Error::Param(format!(
            "batch_size {} exceeds train size {}",
            spec.batch_size,
            rows.len()
        )));
    }

    let mut params = init_params(spec);
    let mut adam = Adam::new(&params, spec.learning_rate);
    let train_seed = derive_seed(spec.seed, "train");
    let mut history = Vec::with_capacity(spec.epochs);

    for epoch in 0..spec.epochs {
        let mut order = rows.clone();
        if variant.shuffle_train {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(train_seed, &format!("epoch{epoch}")));
            order.shuffle(&mut rng);
        }
        let mut loss_acc = 0.0;
        for (bi, chunk) in order.chunks(spec.batch_size).enumerate() {
            let (batch, targets) = Batch::from_variant(variant, chunk);
            let mode = Mode::Train {
                dropout_seed: derive_seed(train_seed, &format!("e{epoch}b{bi}")),
            };
            let (loss, grads) = loss_and_grad(spec, &params, &batch, &targets, mode)
                .map_err(|e| Error::Divergence {
                    epoch,
                    detail: e.to_string(),
                })?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: "non-finite training loss".into(),
                });
            }
            adam.update(&mut params, &grads);
            loss_acc += loss * chunk.len() as f64;
        }
        if !params.all_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: "non-finite parameters after update".into(),
            });
        }
        let val_loss = match val_rows {
            Some(rows) if !rows.is_empty() => {
                let (batch, targets) = Batch::from_variant(variant, rows);
                let preds = forward(spec, &params, &batch, Mode::Eval)?;
                Some(metrics::mse(&targets, &preds)?)
            }
            _ => None,
        };
        history.push(EpochStats {
            train_loss: loss_acc / rows.len() as f64,
            val_loss,
        });
    }

    Ok(TrainedModel {
        spec: spec.clone(),
        params,
        history,
    })
}

/// Deterministic inference-mode predictions.
pub fn predict(model: &TrainedModel, batch: &Batch) -> Result<Vec<f64>> {
    forward(&model.spec, &model.params, batch, Mode::Eval)
}

/// Predictions for a set of variant rows, paired with their targets.
pub fn predict_rows(
    model: &TrainedModel,
    variant: &DatasetVariant,
    rows: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (batch, targets) = Batch::from_variant(variant, rows);
    Ok((predict(model, &batch)?, targets))
}

// ---------------------------------------------------------------------------
// Model persistence: JSON header + raw little-endian weight blob.
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &[u8; 4] = b"HFTM";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    spec: ModelSpec,
    history: Vec<EpochStats>,
    shapes: Vec<(String, Vec<usize>)>,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = ModelHeader {
            spec: self.spec.clone(),
            history: self.history.clone(),
            shapes: self
                .params
                .iter()
                .map(|(n, t)| (n.clone(), t.dims.clone()))
                .collect(),
        };
        let header_bytes =
            serde_json::to_vec(&header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(MODEL_MAGIC)?;
        file.write_all(&MODEL_VERSION.to_le_bytes())?;
        file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        file.write_all(&header_bytes)?;
        let total: usize = self.params.iter().map(|(_, t)| t.len()).sum();
        file.write_all(&(total as u64).to_le_bytes())?;
        for (_, tensor) in self.params.iter() {
            for v in &tensor.data {
                file.write_all(&v.to_le_bytes())?;
            }
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                detail: "not a model file (bad magic)".into(),
            });
        }
        let mut word = [0u8; 4];
        file.read_exact(&mut word)?;
        if u32::from_le_bytes(word) != MODEL_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                detail: "unsupported model version".into(),
            });
        }
        let mut len8 = [0u8; 8];
        file.read_exact(&mut len8)?;
        let mut header_bytes = vec![0u8; u64::from_le_bytes(len8) as usize];
        file.read_exact(&mut header_bytes)?;
        let header: ModelHeader = serde_json::from_slice(&header_bytes).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("header: {e}"),
        })?;
        file.read_exact(&mut len8)?;
        let total = u64::from_le_bytes(len8) as usize;
        let mut blob = Vec::with_capacity(total);
        let mut f8 = [0u8; 8];
        for _ in 0..total {
            file.read_exact(&mut f8)?;
            blob.push(f64::from_le_bytes(f8));
        }
        let mut offset = 0;
        let mut entries = Vec::with_capacity(header.shapes.len());
        for (name, dims) in header.shapes {
            let n: usize = dims.iter().product();
            if offset + n > blob.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    detail: "weight blob shorter than declared shapes".into(),
                });
            }
            entries.push((name, Tensor::from_vec(&dims, blob[offset..offset + n].to_vec())));
            offset += n;
        }
        Ok(TrainedModel {
            spec: header.spec,
            history: header.history,
            params: ParameterSet::from_entries(entries),
        })
    }
}

// ---------------------------------------------------------------------------
// Random hyperparameter search
// ---------------------------------------------------------------------------

/// Ranges the random search draws from.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub hidden_dims: Vec<usize>,
    pub dropout_range: (f64, f64),
    /// Sampled log-uniformly.
    pub learning_rate_range: (f64, f64),
    pub batch_sizes: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            hidden_dims: vec![16, 32, 64, 128],
            dropout_range: (0.0, 0.5),
            learning_rate_range: (1e-4, 1e-2),
            batch_sizes: vec![16, 32, 64],
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub spec: ModelSpec,
    /// Mean validation loss over the folds; `None` when the trial failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: ModelSpec,
    pub best_score: f64,
    pub trials: Vec<TrialRecord>,
}

/// Seeded random search over {hidden_dim, dropout, learning rate, batch
/// size}; each trial is scored by the mean final validation loss over the
/// same k-fold partition of the train rows. Diverged trials are logged and
/// skipped; the call fails only when every trial failed.
pub fn hyperparameter_search(
    space: &SearchSpace,
    budget: usize,
    variant: &DatasetVariant,
    base: &ModelSpec,
    kfolds: usize,
    seed: u64,
) -> Result<SearchResult> {
    if budget < 1 {
        return Err(Error::Param("search budget must be >= 1".into()));
    }
    if space.hidden_dims.is_empty() || space.batch_sizes.is_empty() {
        return Err(Error::Param("empty search space axis".into()));
    }
    let folds = kfold_split(
        &variant.splits.train,
        kfolds,
        derive_seed(seed, "folds"),
        variant.transform,
    )?;
    let min_fit = folds.iter().map(|(fit, _)| fit.len()).min().unwrap_or(0);

    let mut trials = Vec::with_capacity(budget);
    for t in 0..budget {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("trial{t}")));
        let mut spec = base.clone();
        spec.hidden_dim = space.hidden_dims[rng.gen_range(0..space.hidden_dims.len())];
        spec.dropout_p = rng.gen_range(space.dropout_range.0..space.dropout_range.1.max(space.dropout_range.0 + f64::MIN_POSITIVE));
        let (lo, hi) = space.learning_rate_range;
        spec.learning_rate = (rng.gen_range(lo.ln()..=hi.ln())).exp();
        spec.batch_size = space.batch_sizes[rng.gen_range(0..space.batch_sizes.len())].min(min_fit);
        spec.seed = derive_seed(seed, &format!("trial{t}.init"));

        let mut fold_losses = Vec::with_capacity(folds.len());
        let mut error = None;
        for (fit, validate) in &folds {
            match train(&spec, variant, Some((fit, validate))) {
                Ok(model) => {
                    let last = model.history.last().and_then(|h| h.val_loss);
                    match last {
                        Some(v) if v.is_finite() => fold_losses.push(v),
                        _ => {
                            error = Some("missing or non-finite validation loss".to_string());
                            break;
                        }
                    }
                }
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        let score = if error.is_none() {
            Some(fold_losses.iter().sum::<f64>() / fold_losses.len() as f64)
        } else {
            None
        };
        trials.push(TrialRecord { spec, score, error });
    }

    let best = trials
        .iter()
        .filter_map(|t| t.score.map(|s| (s, t)))
        .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    match best {
        Some((score, record)) => Ok(SearchResult {
            best: record.spec.clone(),
            best_score: score,
            trials,
        }),
        None => {
            let log: Vec<String> = trials
                .iter()
                .enumerate()
                .map(|(i, t)| format!("trial {i}: {}", t.error.as_deref().unwrap_or("?")))
                .collect();
            Err(Error::Numeric(format!(
                "all {budget} search trials failed: {}",
                log.join("; ")
            )))
        }
    }
}

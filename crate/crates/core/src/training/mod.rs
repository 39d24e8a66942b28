//! Composite-loss training with Adam, mini-batching and checkpoints.

mod adam;
mod checkpoint;
mod loss;

use std::io::Write;

use rand::seq::SliceRandom;
use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, LOSS_TAIL, MAGIC};
pub use loss::{composite_loss, network_loss, Batch, LossBreakdown, LossWeights, Mode};

use crate::config::{ConfigError, DataSource, TrainRunConfig};
use crate::data::{self, DataError, LabeledPoint, SpaceTimeBox};
use crate::network::{Interval, Network, NetworkError};
use crate::physics::{BoundarySpec, PhysicsError};
use crate::rng;
use crate::sampling::{sample_boundary, sample_interior, BoundaryCounts, SamplePoint, SamplingError, SamplingPlan};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("{0} batch is empty but its loss weight is positive")]
    EmptyBatch(&'static str),
    #[error("loss weights must be finite and nonnegative")]
    InvalidWeights,
    #[error("shape mismatch: {params} parameters, {grads} gradients, {moments} moments")]
    ShapeMismatch {
        params: usize,
        grads: usize,
        moments: usize,
    },
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize, last_good: Box<Checkpoint> },
    #[error("checkpoint does not match the run configuration")]
    ResumeMismatch,
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const LABELED_STREAM: u64 = 5;
/// Epoch `e` shuffles with stream `EPOCH_STREAM_BASE + e`, clear of the
/// sampling streams.
const EPOCH_STREAM_BASE: u64 = 1 << 32;

/// Labeled, residual and boundary points of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSets {
    pub labeled: Vec<LabeledPoint>,
    pub residual: Vec<[f64; 4]>,
    pub boundary: Vec<SamplePoint>,
    pub spec: BoundarySpec,
}

/// `n` split as evenly as possible into `k` parts, larger parts first.
fn split_evenly(n: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..k).map(move |i| n / k + usize::from(i < n % k))
}

impl TrainingSets {
    /// Builds the sets of `run` deterministically from its seed.
    ///
    /// The labeled budget `n_labeled` is split into a data share and a
    /// `bc_fraction` share. With analytic Taylor-Green data the second share
    /// is labeled initial-condition points at `t_min`; with snapshot data it
    /// becomes boundary points (inlet, outlet, cylinder wall, periodic pairs,
    /// and uniform-flow initial points when the snapshots have no `t_min`
    /// slice).
    pub fn build(run: &TrainRunConfig) -> Result<Self, TrainingError> {
        run.validate()?;
        let domain = run.domain;
        let plan = SamplingPlan {
            seed: run.seed,
            ..run.sampling
        };
        let n_bc = (run.bc_fraction * plan.n_labeled as f64).round() as usize;
        let n_data = plan.n_labeled - n_bc;
        let mut g = rng::stream(run.seed, LABELED_STREAM);

        let (labeled, boundary) = match &run.data {
            DataSource::TaylorGreen => {
                let body = SpaceTimeBox {
                    x: domain.x,
                    y: domain.y,
                    t: domain.t,
                };
                let initial = SpaceTimeBox {
                    t: Interval::new(domain.t.lo, domain.t.lo),
                    ..body
                };
                let k = run.train_nus.len();
                let mut labeled = Vec::with_capacity(plan.n_labeled);
                for (bbox, n) in [(body, n_data), (initial, n_bc)] {
                    for (&nu, count) in run.train_nus.iter().zip(split_evenly(n, k)) {
                        labeled.extend(data::taylor_green_sample(&mut g, nu, count, bbox)?);
                    }
                }
                (labeled, Vec::new())
            }
            DataSource::Snapshots(path) => {
                let path = path
                    .as_deref()
                    .ok_or_else(|| ConfigError::Invalid("data.path is required".into()))?;
                let all = data::load_snapshots(path)?;
                let mut labeled = data::assemble_split(&all, &run.train_nus, &run.test_nus)?.train_points;
                if labeled.len() > n_data {
                    labeled.shuffle(&mut g);
                    labeled.truncate(n_data);
                }
                let has_initial_slice = labeled.iter().any(|p| (p.t - domain.t.lo).abs() <= 1e-12);
                let families = 3 + usize::from(domain.cylinder.is_some()) + usize::from(!has_initial_slice);
                let share = n_bc / families;
                let counts = BoundaryCounts {
                    inlet: share,
                    outlet: share,
                    cylinder: if domain.cylinder.is_some() { share } else { 0 },
                    periodic: share / 2,
                    initial: if has_initial_slice { 0 } else { share },
                };
                (labeled, sample_boundary(&domain, counts, run.seed)?)
            }
        };
        let residual = sample_interior(&domain, &plan)?.iter().map(|p| p.coords()).collect();
        Ok(Self {
            labeled,
            residual,
            boundary,
            spec: BoundarySpec::new(domain),
        })
    }

    /// Weights with the boundary term switched off when there are no
    /// boundary points.
    pub fn effective_weights(&self, weights: &LossWeights) -> LossWeights {
        LossWeights {
            w_bc: if self.boundary.is_empty() { 0.0 } else { weights.w_bc },
            ..*weights
        }
    }
}

/// Points evaluated per kernel call when scoring whole sets.
const EVAL_CHUNK: usize = 4096;

/// The composite loss over entire sets, evaluated in chunks.
pub fn full_loss(net: &Network, sets: &TrainingSets, weights: &LossWeights) -> Result<LossBreakdown, TrainingError> {
    let weights = sets.effective_weights(weights);
    // Each term alone, in nn mode so the other two may be empty.
    let only = |w_data, w_pde, w_bc| LossWeights {
        w_data,
        w_pde,
        w_bc,
        mode: Mode::Nn,
    };
    let mut sums = [0.0; 3];
    for chunk in sets.labeled.chunks(EVAL_CHUNK) {
        let b = Batch {
            labeled: chunk,
            ..Batch::default()
        };
        sums[0] += network_loss(net, &b, &sets.spec, &only(1.0, 0.0, 0.0), None)?.data * chunk.len() as f64;
    }
    for chunk in sets.residual.chunks(EVAL_CHUNK) {
        let b = Batch {
            residual: chunk,
            ..Batch::default()
        };
        sums[1] += network_loss(net, &b, &sets.spec, &only(0.0, 1.0, 0.0), None)?.pde * chunk.len() as f64;
    }
    for chunk in sets.boundary.chunks(EVAL_CHUNK) {
        let b = Batch {
            boundary: chunk,
            ..Batch::default()
        };
        sums[2] += network_loss(net, &b, &sets.spec, &only(0.0, 0.0, 1.0), None)?.bc * chunk.len() as f64;
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(LossBreakdown::assemble(
        &weights,
        mean(sums[0], sets.labeled.len()),
        mean(sums[1], sets.residual.len()),
        mean(sums[2], sets.boundary.len()),
    ))
}

/// Mean loss terms over the steps of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

pub fn write_metric_log<W: Write>(w: W, log: &[EpochLog]) -> Result<(), TrainingError> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(["epoch", "total", "data", "pde", "bc"])
        .map_err(DataError::from)?;
    for e in log {
        let l = e.loss;
        out.write_record([
            e.epoch.to_string(),
            format!("{:?}", l.total),
            format!("{:?}", l.data),
            format!("{:?}", l.pde),
            format!("{:?}", l.bc),
        ])
        .map_err(DataError::from)?;
    }
    out.flush()?;
    Ok(())
}

/// State visible to the per-epoch callback.
pub struct Progress<'a> {
    run: &'a TrainRunConfig,
    sets: &'a TrainingSets,
    network: &'a Network,
    adam: &'a AdamState,
    epoch: usize,
    tail: &'a [f64],
}

impl Progress<'_> {
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// A checkpoint of the current state, scoring the full sets.
    pub fn checkpoint(&self) -> Result<Checkpoint, TrainingError> {
        make_checkpoint(self.run, self.sets, self.network, self.adam, self.epoch, self.tail)
    }
}

fn make_checkpoint(
    run: &TrainRunConfig,
    sets: &TrainingSets,
    network: &Network,
    adam: &AdamState,
    epoch: usize,
    tail: &[f64],
) -> Result<Checkpoint, TrainingError> {
    let final_loss = full_loss(network, sets, &run.weights)?.total;
    Ok(Checkpoint {
        run: TrainRunConfig {
            epochs: epoch,
            output_dir: None,
            checkpoint_every: 0,
            sampling: SamplingPlan {
                seed: run.seed,
                ..run.sampling
            },
            ..run.clone()
        },
        network: network.clone(),
        adam: adam.clone(),
        final_loss,
        loss_tail: tail.to_vec(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

pub fn train(run: &TrainRunConfig, resume: Option<Checkpoint>) -> Result<TrainOutcome, TrainingError> {
    train_with(run, resume, |_, _| Ok(()))
}

/// Trains for `run.epochs` epochs, continuing from `resume` if given, and
/// calls `on_epoch` after every epoch.
///
/// Each epoch shuffles every set with its own seeded stream and splits it
/// into as many chunks as the largest set needs batches of
/// `optimizer.batch_size`; sets smaller than that cycle one point per step.
pub fn train_with<F>(
    run: &TrainRunConfig,
    resume: Option<Checkpoint>,
    mut on_epoch: F,
) -> Result<TrainOutcome, TrainingError>
where
    F: FnMut(&EpochLog, &Progress) -> Result<(), TrainingError>,
{
    let sets = TrainingSets::build(run)?;
    let weights = sets.effective_weights(&run.weights);

    let (mut network, mut adam, start, mut tail) = match resume {
        Some(c) => {
            let same = TrainRunConfig {
                epochs: c.run.epochs,
                ..run.clone()
            };
            if same.model_text() != c.run.model_text() {
                return Err(TrainingError::ResumeMismatch);
            }
            let start = c.epoch();
            (c.network, c.adam, start, c.loss_tail)
        }
        None => {
            let net = Network::initialized(run.network.clone(), run.domain.normalizer(), run.seed)?;
            let adam = AdamState::new(net.params.trainable().len(), &run.optimizer);
            (net, adam, 0, Vec::new())
        }
    };

    let sizes = [sets.labeled.len(), sets.residual.len(), sets.boundary.len()];
    let bs = run.optimizer.batch_size;
    let steps = sizes.iter().map(|n| n.div_ceil(bs)).max().unwrap_or(0).max(1);
    let mut grad = vec![0.0; network.params.trainable().len()];
    let mut log = Vec::with_capacity(run.epochs);
    let (mut labeled, mut residual, mut boundary) = (Vec::new(), Vec::new(), Vec::new());

    for epoch in start + 1..=start + run.epochs {
        let mut g = rng::stream(run.seed, EPOCH_STREAM_BASE + epoch as u64);
        let perms: Vec<Vec<usize>> = sizes
            .iter()
            .map(|&n| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut g);
                p
            })
            .collect();
        let chunk = |perm: &[usize], s: usize| -> Vec<usize> {
            let n = perm.len();
            if n == 0 {
                Vec::new()
            } else if n >= steps {
                perm[s * n / steps..(s + 1) * n / steps].to_vec()
            } else {
                vec![perm[s % n]]
            }
        };

        let before = (network.clone(), adam.clone());
        let mut sum = LossBreakdown::default();
        for s in 0..steps {
            labeled.clear();
            labeled.extend(chunk(&perms[0], s).into_iter().map(|i| sets.labeled[i]));
            residual.clear();
            residual.extend(chunk(&perms[1], s).into_iter().map(|i| sets.residual[i]));
            boundary.clear();
            boundary.extend(chunk(&perms[2], s).into_iter().map(|i| sets.boundary[i]));
            let batch = Batch {
                labeled: &labeled,
                residual: &residual,
                boundary: &boundary,
            };
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = network_loss(&network, &batch, &sets.spec, &weights, Some(&mut grad))?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                let last_good = make_checkpoint(run, &sets, &before.0, &before.1, epoch - 1, &tail)?;
                return Err(TrainingError::NonFiniteLoss {
                    epoch,
                    last_good: Box::new(last_good),
                });
            }
            adam_step(network.params.trainable_mut(), &grad, &mut adam)?;
            sum.total += loss.total;
            sum.data += loss.data;
            sum.pde += loss.pde;
            sum.bc += loss.bc;
        }
        let k = steps as f64;
        let entry = EpochLog {
            epoch,
            loss: LossBreakdown {
                total: sum.total / k,
                data: sum.data / k,
                pde: sum.pde / k,
                bc: sum.bc / k,
            },
        };
        tail.push(entry.loss.total);
        if tail.len() > LOSS_TAIL {
            tail.remove(0);
        }
        log.push(entry);
        let progress = Progress {
            run,
            sets: &sets,
            network: &network,
            adam: &adam,
            epoch,
            tail: &tail,
        };
        on_epoch(&entry, &progress)?;
    }

    let checkpoint = make_checkpoint(run, &sets, &network, &adam, start + run.epochs, &tail)?;
    Ok(TrainOutcome { checkpoint, log })
}

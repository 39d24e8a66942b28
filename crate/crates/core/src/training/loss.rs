use ndarray::Array2;

use crate::data::LabeledPoint;
use crate::network::{Channels, Network, JET_CHANNELS, OUTPUT_DIM};
use crate::physics::{
    boundary_residuals, residuals_from_jets, squared_residual_gradient, BoundarySpec, Condition, Derivatives,
    FieldJets, FlowField,
};
use crate::sampling::SamplePoint;

use super::TrainingError;

/// Whether the PDE residual term takes part in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Pinn,
    /// Plain regression: the PDE term is reported but never optimized.
    Nn,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pinn => "pinn",
            Mode::Nn => "nn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pinn" => Some(Mode::Pinn),
            "nn" => Some(Mode::Nn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_data: f64,
    pub w_pde: f64,
    pub w_bc: f64,
    pub mode: Mode,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_data: 1.0,
            w_pde: 1.0,
            w_bc: 1.0,
            mode: Mode::Pinn,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if [self.w_data, self.w_pde, self.w_bc]
            .iter()
            .all(|w| *w >= 0.0 && w.is_finite())
        {
            Ok(())
        } else {
            Err(TrainingError::InvalidWeights)
        }
    }

    /// The PDE weight that actually enters the objective.
    pub fn effective_pde(&self) -> f64 {
        match self.mode {
            Mode::Pinn => self.w_pde,
            Mode::Nn => 0.0,
        }
    }
}

/// Weighted loss terms. `total` sums the terms that enter the objective; in
/// `nn` mode `pde` is still reported, weighted by `w_pde`, but left out of
/// `total`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub data: f64,
    pub pde: f64,
    pub bc: f64,
}

impl LossBreakdown {
    pub(crate) fn assemble(weights: &LossWeights, data_mse: f64, pde_mse: f64, bc_mse: f64) -> Self {
        let data = weights.w_data * data_mse;
        let pde = weights.w_pde * pde_mse;
        let bc = weights.w_bc * bc_mse;
        let mut total = data + bc;
        if weights.effective_pde() > 0.0 {
            total += pde;
        }
        Self { total, data, pde, bc }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// One mini-batch of each kind of training point.
#[derive(Debug, Clone, Copy, Default)]
pub struct Batch<'a> {
    pub labeled: &'a [LabeledPoint],
    pub residual: &'a [[f64; 4]],
    pub boundary: &'a [SamplePoint],
}

fn check_batches(batch: &Batch, weights: &LossWeights) -> Result<(), TrainingError> {
    weights.validate()?;
    let empty = [
        ("labeled", batch.labeled.is_empty(), weights.w_data),
        ("residual", batch.residual.is_empty(), weights.effective_pde()),
        ("boundary", batch.boundary.is_empty(), weights.w_bc),
    ];
    match empty.iter().find(|(_, is_empty, w)| *is_empty && *w > 0.0) {
        Some((name, ..)) => Err(TrainingError::EmptyBatch(name)),
        None => Ok(()),
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `w_data·MSE(labels) + w_pde·mean(f² + g² + h²) + w_bc·mean(|boundary residual|²)`
/// for any field. The data and boundary MSEs average, over points, the sum of
/// squared component errors.
pub fn composite_loss<F: FlowField + ?Sized>(
    field: &F,
    batch: &Batch,
    spec: &BoundarySpec,
    weights: &LossWeights,
) -> Result<LossBreakdown, TrainingError> {
    check_batches(batch, weights)?;
    let coords: Vec<[f64; 4]> = batch.labeled.iter().map(|p| p.coords()).collect();
    let predicted = field.values_many(&coords)?;
    let data_sum: f64 = predicted
        .iter()
        .zip(batch.labeled)
        .map(|(out, p)| out.iter().zip(p.labels()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();

    let pde_sum: f64 = if batch.residual.is_empty() {
        0.0
    } else {
        let jets = field.jets_many(batch.residual)?;
        jets.iter()
            .zip(batch.residual)
            .map(|(j, q)| residuals_from_jets(j, q[3]).squared_norm())
            .sum()
    };

    let mut bc_sum = 0.0;
    for p in batch.boundary {
        bc_sum += boundary_residuals(field, spec, p)?.iter().map(|r| r * r).sum::<f64>();
    }

    Ok(LossBreakdown::assemble(
        weights,
        mean(data_sum, batch.labeled.len()),
        mean(pde_sum, batch.residual.len()),
        mean(bc_sum, batch.boundary.len()),
    ))
}

fn jets_at(out: &crate::network::BatchOutput, i: usize) -> FieldJets {
    let comp = |k: usize| Derivatives::from_channels(std::array::from_fn(|c| out.get(i, c, k)));
    FieldJets {
        u: comp(0),
        v: comp(1),
        p: comp(2),
    }
}

/// The composite loss of a network, and, if `grad` is given, its gradient
/// with respect to the trainable parameters accumulated into `grad`.
///
/// Terms whose weight is zero in the objective are evaluated for reporting
/// but never back-propagated.
pub fn network_loss(
    net: &Network,
    batch: &Batch,
    spec: &BoundarySpec,
    weights: &LossWeights,
    mut grad: Option<&mut [f64]>,
) -> Result<LossBreakdown, TrainingError> {
    check_batches(batch, weights)?;

    let data_mse = if batch.labeled.is_empty() {
        0.0
    } else {
        let n = batch.labeled.len();
        let coords: Vec<[f64; 4]> = batch.labeled.iter().map(|p| p.coords()).collect();
        let out = net.batch_forward(&coords, Channels::Values);
        let diff = out.outputs() - &Array2::from_shape_fn((n, OUTPUT_DIM), |(i, k)| batch.labeled[i].labels()[k]);
        let mse = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
        if let Some(g) = grad.as_deref_mut() {
            if weights.w_data > 0.0 {
                net.batch_backward(&out, &(diff * (2.0 * weights.w_data / n as f64)), g);
            }
        }
        mse
    };

    let pde_mse = if batch.residual.is_empty() {
        0.0
    } else {
        let n = batch.residual.len();
        let w = weights.effective_pde();
        let out = net.batch_forward(batch.residual, Channels::Jets);
        let mut upstream = Array2::zeros((n * JET_CHANNELS, OUTPUT_DIM));
        let mut sum = 0.0;
        for (i, q) in batch.residual.iter().enumerate() {
            let (value, d) = squared_residual_gradient(&jets_at(&out, i), q[3]);
            sum += value;
            for (k, channels) in d.iter().enumerate() {
                for (c, dv) in channels.iter().enumerate() {
                    upstream[[i * JET_CHANNELS + c, k]] = dv * w / n as f64;
                }
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            if w > 0.0 {
                net.batch_backward(&out, &upstream, g);
            }
        }
        sum / n as f64
    };

    let bc_mse = if batch.boundary.is_empty() {
        0.0
    } else {
        let n = batch.boundary.len();
        let conditions: Vec<Condition> = batch.boundary.iter().map(|p| spec.condition(p)).collect();
        let mut coords: Vec<[f64; 4]> = batch.boundary.iter().map(|p| p.coords()).collect();
        let mut partner = vec![usize::MAX; n];
        for (i, (p, c)) in batch.boundary.iter().zip(&conditions).enumerate() {
            if let Condition::Periodic { .. } = c {
                partner[i] = coords.len();
                coords.push(p.periodic_partner(&spec.domain).coords());
            }
        }
        let out = net.batch_forward(&coords, Channels::Values);
        let values = out.outputs();
        let mut upstream = Array2::zeros((coords.len(), OUTPUT_DIM));
        let scale = 2.0 * weights.w_bc / n as f64;
        let mut sum = 0.0;
        for (i, c) in conditions.iter().enumerate() {
            match *c {
                Condition::Dirichlet { components, target } => {
                    for &k in components {
                        let r = values[[i, k]] - target[k];
                        sum += r * r;
                        upstream[[i, k]] += scale * r;
                    }
                }
                Condition::Periodic { on_top } => {
                    let j = partner[i];
                    let sign = if on_top { 1.0 } else { -1.0 };
                    for k in 0..OUTPUT_DIM {
                        let r = sign * (values[[i, k]] - values[[j, k]]);
                        sum += r * r;
                        upstream[[i, k]] += scale * r * sign;
                        upstream[[j, k]] -= scale * r * sign;
                    }
                }
            }
        }
        if let Some(g) = grad {
            if weights.w_bc > 0.0 {
                net.batch_backward(&out, &upstream, g);
            }
        }
        sum / n as f64
    };

    Ok(LossBreakdown::assemble(weights, data_mse, pde_mse, bc_mse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{taylor_green_dataset, SpaceTimeBox};
    use crate::network::{Interval, NetworkConfig};
    use crate::physics::analytic::TaylorGreen;
    use crate::sampling::{sample_boundary, sample_interior, BoundaryCounts, DomainSpec, SamplingPlan};

    fn small_config() -> NetworkConfig {
        NetworkConfig {
            fourier_bins: 4,
            hidden_layers: 2,
            hidden_width: 6,
            ..NetworkConfig::default()
        }
    }

    struct Fixture {
        domain: DomainSpec,
        labeled: Vec<LabeledPoint>,
        residual: Vec<[f64; 4]>,
        boundary: Vec<SamplePoint>,
    }

    fn cylinder_fixture() -> Fixture {
        let domain = DomainSpec::default();
        let plan = SamplingPlan {
            n_residual: 12,
            seed: 5,
            ..SamplingPlan::default()
        };
        let residual = sample_interior(&domain, &plan)
            .unwrap()
            .iter()
            .map(|p| p.coords())
            .collect();
        let boundary = sample_boundary(&domain, BoundaryCounts::uniform(2), 5).unwrap();
        let labeled = sample_interior(&domain, &SamplingPlan { seed: 6, ..plan })
            .unwrap()
            .iter()
            .map(|p| LabeledPoint {
                x: p.x,
                y: p.y,
                t: p.t,
                nu: p.nu,
                u: p.x.sin(),
                v: p.y.cos(),
                p: 0.1 * p.t,
            })
            .collect();
        Fixture {
            domain,
            labeled,
            residual,
            boundary,
        }
    }

    #[test]
    fn mode_names() {
        assert_eq!(Mode::parse("nn"), Some(Mode::Nn));
        assert_eq!(Mode::parse(Mode::Pinn.name()), Some(Mode::Pinn));
        assert_eq!(Mode::parse("cnn"), None);
    }

    #[test]
    fn exact_labels_give_zero_loss() {
        let t = Interval::new(0.0, 1.0);
        let domain = DomainSpec::taylor_green(t, Interval::new(0.005, 0.02));
        let labeled = taylor_green_dataset(&[0.01], 50, SpaceTimeBox::periodic_cell(t), 1).unwrap();
        let weights = LossWeights {
            w_pde: 0.0,
            w_bc: 0.0,
            ..LossWeights::default()
        };
        let batch = Batch {
            labeled: &labeled,
            ..Batch::default()
        };
        let loss = composite_loss(&TaylorGreen, &batch, &BoundarySpec::new(domain), &weights).unwrap();
        assert_eq!(loss.total, 0.0);
    }

    #[test]
    fn analytic_field_has_no_pde_loss() {
        let t = Interval::new(0.0, 3.0);
        let domain = DomainSpec::taylor_green(t, Interval::new(0.002, 0.01));
        let plan = SamplingPlan {
            n_residual: 300,
            ..SamplingPlan::default()
        };
        let residual: Vec<[f64; 4]> = sample_interior(&domain, &plan)
            .unwrap()
            .iter()
            .map(|p| p.coords())
            .collect();
        let labeled = taylor_green_dataset(&[0.004], 20, SpaceTimeBox::periodic_cell(t), 2).unwrap();
        let batch = Batch {
            labeled: &labeled,
            residual: &residual,
            boundary: &[],
        };
        let weights = LossWeights {
            w_bc: 0.0,
            ..LossWeights::default()
        };
        let loss = composite_loss(&TaylorGreen, &batch, &BoundarySpec::new(domain), &weights).unwrap();
        assert!(loss.pde < 1e-9, "{loss:?}");
        assert!(loss.data < 1e-28);
    }

    #[test]
    fn weights_scale_their_own_component() {
        let f = cylinder_fixture();
        let net = Network::initialized(small_config(), f.domain.normalizer(), 3).unwrap();
        let spec = BoundarySpec::new(f.domain);
        let batch = Batch {
            labeled: &f.labeled,
            residual: &f.residual,
            boundary: &f.boundary,
        };
        let base = network_loss(&net, &batch, &spec, &LossWeights::default(), None).unwrap();
        let doubled = LossWeights {
            w_data: 2.0,
            ..LossWeights::default()
        };
        let twice = network_loss(&net, &batch, &spec, &doubled, None).unwrap();
        assert_eq!(twice.data, 2.0 * base.data);
        assert_eq!((twice.pde, twice.bc), (base.pde, base.bc));
    }

    #[test]
    fn kernel_loss_matches_generic_loss() {
        let f = cylinder_fixture();
        let net = Network::initialized(small_config(), f.domain.normalizer(), 4).unwrap();
        let spec = BoundarySpec::new(f.domain);
        let batch = Batch {
            labeled: &f.labeled,
            residual: &f.residual,
            boundary: &f.boundary,
        };
        let w = LossWeights {
            w_data: 0.7,
            w_pde: 1.3,
            w_bc: 2.1,
            mode: Mode::Pinn,
        };
        let fast = network_loss(&net, &batch, &spec, &w, None).unwrap();
        let generic = composite_loss(&net.as_field(), &batch, &spec, &w).unwrap();
        for (a, b) in [
            (fast.data, generic.data),
            (fast.pde, generic.pde),
            (fast.bc, generic.bc),
        ] {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn nn_mode_reports_but_ignores_pde() {
        let f = cylinder_fixture();
        let net = Network::initialized(small_config(), f.domain.normalizer(), 4).unwrap();
        let spec = BoundarySpec::new(f.domain);
        let batch = Batch {
            labeled: &f.labeled,
            residual: &f.residual,
            boundary: &f.boundary,
        };
        let nn = LossWeights {
            mode: Mode::Nn,
            ..LossWeights::default()
        };
        let loss = network_loss(&net, &batch, &spec, &nn, None).unwrap();
        assert!(loss.pde > 0.0);
        assert_eq!(loss.total, loss.data + loss.bc);
        let no_residual = Batch { residual: &[], ..batch };
        assert!(network_loss(&net, &no_residual, &spec, &nn, None).is_ok());
        assert!(matches!(
            network_loss(&net, &no_residual, &spec, &LossWeights::default(), None),
            Err(TrainingError::EmptyBatch("residual"))
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let f = cylinder_fixture();
        let mut net = Network::initialized(small_config(), f.domain.normalizer(), 8).unwrap();
        let spec = BoundarySpec::new(f.domain);
        let batch = Batch {
            labeled: &f.labeled,
            residual: &f.residual,
            boundary: &f.boundary,
        };
        let w = LossWeights::default();
        let n = net.params.trainable().len();
        let mut grad = vec![0.0; n];
        network_loss(&net, &batch, &spec, &w, Some(&mut grad)).unwrap();

        let mut g = crate::rng::generator(99);
        let h = 1e-6;
        for _ in 0..20 {
            let i = rand::Rng::random_range(&mut g, 0..n);
            let orig = net.params.trainable()[i];
            net.params.trainable_mut()[i] = orig + h;
            let up = network_loss(&net, &batch, &spec, &w, None).unwrap().total;
            net.params.trainable_mut()[i] = orig - h;
            let down = network_loss(&net, &batch, &spec, &w, None).unwrap().total;
            net.params.trainable_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = grad[i].abs().max(fd.abs()).max(1e-3);
            assert!((grad[i] - fd).abs() / denom < 1e-4, "param {i}: {} vs {fd}", grad[i]);
        }
    }
}

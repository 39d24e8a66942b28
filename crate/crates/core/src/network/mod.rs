//! Fourier-feature embedding followed by a tanh multilayer perceptron,
//! mapping `(x, y, t, ν)` to `(u, v, p)`.

mod kernel;

pub use kernel::{BatchCache, BatchOutput, Channels, JET_CHANNELS};

use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::autodiff::{Algebra, AutodiffError, VectorField};
use crate::rng;

pub const INPUT_DIM: usize = 4;
pub const OUTPUT_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("Reynolds number must be positive, got {0}")]
    NonPositiveReynolds(f64),
    #[error("network produced a non-finite output at {0:?}")]
    NonFiniteOutput([f64; 4]),
    #[error("expected {expected} parameters, got {found}")]
    ParameterCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        "tanh"
    }

    pub fn parse(s: &str) -> Option<Self> {
        (s == "tanh").then_some(Activation::Tanh)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub fourier_bins: usize,
    pub fourier_sigma: f64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            fourier_bins: 50,
            fourier_sigma: 1.0,
            hidden_layers: 7,
            hidden_width: 100,
            activation: Activation::Tanh,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.fourier_bins == 0 || self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(NetworkError::InvalidConfig(
                "fourier_bins, hidden_layers and hidden_width must be positive".into(),
            ));
        }
        if !(self.fourier_sigma > 0.0 && self.fourier_sigma.is_finite()) {
            return Err(NetworkError::InvalidConfig(format!(
                "fourier_sigma must be positive, got {}",
                self.fourier_sigma
            )));
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.fourier_bins
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.embedding_dim();
        for _ in 0..self.hidden_layers {
            shapes.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        shapes.push((fan_in, OUTPUT_DIM));
        shapes
    }

    pub fn trainable_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn fourier_len(&self) -> usize {
        self.fourier_bins * INPUT_DIM
    }
}

/// Offsets of one dense layer inside the flat trainable vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

/// Frozen Fourier matrix plus the trainable weights and biases.
///
/// Trainable scalars are stored flat in canonical order: layer by layer,
/// weights row-major (`fan_out × fan_in`) followed by biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    fourier: Vec<f64>,
    trainable: Vec<f64>,
    layout: Vec<LayerLayout>,
}

impl ModelParams {
    fn layout_for(config: &NetworkConfig) -> Vec<LayerLayout> {
        let mut offset = 0;
        config
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let layer = LayerLayout {
                    fan_in,
                    fan_out,
                    weights: offset,
                    biases: offset + fan_in * fan_out,
                };
                offset += fan_in * fan_out + fan_out;
                layer
            })
            .collect()
    }

    /// Rebuilds parameters from the Fourier matrix and the trainable vector.
    pub fn from_parts(config: &NetworkConfig, fourier: Vec<f64>, trainable: Vec<f64>) -> Result<Self, NetworkError> {
        config.validate()?;
        if fourier.len() != config.fourier_len() {
            return Err(NetworkError::ParameterCount {
                expected: config.fourier_len(),
                found: fourier.len(),
            });
        }
        if trainable.len() != config.trainable_count() {
            return Err(NetworkError::ParameterCount {
                expected: config.trainable_count(),
                found: trainable.len(),
            });
        }
        Ok(Self {
            fourier,
            trainable,
            layout: Self::layout_for(config),
        })
    }

    pub fn fourier(&self) -> &[f64] {
        &self.fourier
    }

    pub fn fourier_bins(&self) -> usize {
        self.fourier.len() / INPUT_DIM
    }

    pub fn trainable(&self) -> &[f64] {
        &self.trainable
    }

    pub fn trainable_mut(&mut self) -> &mut [f64] {
        &mut self.trainable
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = &self.layout[layer];
        &self.trainable[l.weights..l.biases]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let l = &self.layout[layer];
        &self.trainable[l.biases..l.biases + l.fan_out]
    }

    /// Fourier matrix followed by the trainable parameters.
    pub fn canonical(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.fourier.len() + self.trainable.len());
        out.extend_from_slice(&self.fourier);
        out.extend_from_slice(&self.trainable);
        out
    }
}

/// Gaussian Fourier matrix with standard deviation `fourier_sigma`,
/// Glorot-uniform weights and zero biases, all from the seeded generator.
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<ModelParams, NetworkError> {
    config.validate()?;
    let mut gen = rng::generator(seed);
    let normal = Normal::new(0.0, config.fourier_sigma).map_err(|e| NetworkError::InvalidConfig(e.to_string()))?;
    let fourier: Vec<f64> = (0..config.fourier_len()).map(|_| normal.sample(&mut gen)).collect();
    let layout = ModelParams::layout_for(config);
    let mut trainable = vec![0.0; config.trainable_count()];
    for l in &layout {
        let limit = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
        for w in &mut trainable[l.weights..l.biases] {
            *w = rng::uniform(&mut gen, -limit, limit);
        }
    }
    Ok(ModelParams {
        fourier,
        trainable,
        layout,
    })
}

/// Closed interval used by the affine input normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    /// Coefficients `(scale, shift)` of the map to `[-1, 1]`.
    fn affine(&self) -> (f64, f64) {
        let scale = 2.0 / (self.hi - self.lo);
        (scale, -1.0 - self.lo * scale)
    }
}

/// Affine maps of `x`, `y`, `t` and `ν = 1/Re` onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputNormalizer {
    pub x: Interval,
    pub y: Interval,
    pub t: Interval,
    pub nu: Interval,
}

impl InputNormalizer {
    fn intervals(&self) -> [Interval; 4] {
        [self.x, self.y, self.t, self.nu]
    }

    /// `(scale, shift)` per input so that `q = scale * raw + shift`.
    pub fn affine(&self) -> [(f64, f64); 4] {
        self.intervals().map(|i| i.affine())
    }

    /// Maps a raw `(x, y, t, Re)` tuple to network coordinates.
    pub fn normalize_input(&self, raw: [f64; 4]) -> Result<[f64; 4], NetworkError> {
        let re = raw[3];
        if re.is_nan() || re <= 0.0 {
            return Err(NetworkError::NonPositiveReynolds(re));
        }
        Ok(self.normalize_point([raw[0], raw[1], raw[2], 1.0 / re]))
    }

    /// Maps `(x, y, t, ν)` to network coordinates.
    pub fn normalize_point(&self, point: [f64; 4]) -> [f64; 4] {
        let a = self.affine();
        std::array::from_fn(|i| a[i].0 * point[i] + a[i].1)
    }

    /// Inverse of [`Self::normalize_input`], returning `(x, y, t, Re)`.
    pub fn denormalize(&self, q: [f64; 4]) -> [f64; 4] {
        let iv = self.intervals();
        let raw: [f64; 4] = std::array::from_fn(|i| iv[i].lo + (q[i] + 1.0) * 0.5 * iv[i].width());
        [raw[0], raw[1], raw[2], 1.0 / raw[3]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPrediction {
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

/// A configured network: architecture, input normalization and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub normalizer: InputNormalizer,
    pub params: ModelParams,
}

impl Network {
    pub fn new(config: NetworkConfig, normalizer: InputNormalizer, params: ModelParams) -> Result<Self, NetworkError> {
        config.validate()?;
        if params.fourier.len() != config.fourier_len() || params.trainable.len() != config.trainable_count() {
            return Err(NetworkError::ParameterCount {
                expected: config.fourier_len() + config.trainable_count(),
                found: params.fourier.len() + params.trainable.len(),
            });
        }
        Ok(Self {
            config,
            normalizer,
            params,
        })
    }

    pub fn initialized(config: NetworkConfig, normalizer: InputNormalizer, seed: u64) -> Result<Self, NetworkError> {
        let params = init_params(&config, seed)?;
        Self::new(config, normalizer, params)
    }

    /// `[sin(Bq); cos(Bq)]` for already-normalized coordinates `q`.
    pub fn embed(&self, q: [f64; 4]) -> Vec<f64> {
        embed(&self.params, q)
    }

    /// Evaluates `(u, v, p)` at `(x, y, t, ν)`.
    pub fn forward(&self, point: [f64; 4]) -> Result<FieldPrediction, NetworkError> {
        let out = self.forward_batch(&[point])?;
        Ok(out[0])
    }

    pub fn forward_batch(&self, points: &[[f64; 4]]) -> Result<Vec<FieldPrediction>, NetworkError> {
        let out = self.batch_forward(points, Channels::Values);
        let values = out.outputs();
        let mut result = Vec::with_capacity(points.len());
        for (i, point) in points.iter().enumerate() {
            let pred = FieldPrediction {
                u: values[[i, 0]],
                v: values[[i, 1]],
                p: values[[i, 2]],
            };
            if !(pred.u.is_finite() && pred.v.is_finite() && pred.p.is_finite()) {
                return Err(NetworkError::NonFiniteOutput(*point));
            }
            result.push(pred);
        }
        Ok(result)
    }

    /// The network as a [`VectorField`], with trainable parameters entering
    /// through [`Algebra::parameter`] in canonical order.
    pub fn as_field(&self) -> NetworkField<'_> {
        NetworkField(self)
    }
}

/// `[sin(Bq); cos(Bq)]`.
pub fn embed(params: &ModelParams, q: [f64; 4]) -> Vec<f64> {
    let bins = params.fourier_bins();
    let mut out = vec![0.0; 2 * bins];
    for k in 0..bins {
        let row = &params.fourier[k * INPUT_DIM..(k + 1) * INPUT_DIM];
        let e: f64 = row.iter().zip(&q).map(|(b, q)| b * q).sum();
        let (s, c) = e.sin_cos();
        out[k] = s;
        out[bins + k] = c;
    }
    out
}

/// Borrowed view of a [`Network`] evaluated through an [`Algebra`].
#[derive(Debug, Clone, Copy)]
pub struct NetworkField<'a>(&'a Network);

impl VectorField for NetworkField<'_> {
    fn eval<A: Algebra>(&self, alg: &mut A, point: &[A::Value; 4]) -> Result<[A::Value; 3], AutodiffError> {
        let net = self.0;
        let params = &net.params;
        let affine = net.normalizer.affine();
        let mut q = Vec::with_capacity(INPUT_DIM);
        for (p, (scale, shift)) in point.iter().zip(affine) {
            let scaled = alg.scale(p, scale)?;
            q.push(alg.offset(&scaled, shift)?);
        }
        let bins = params.fourier_bins();
        let mut sines = Vec::with_capacity(bins);
        let mut cosines = Vec::with_capacity(bins);
        for k in 0..bins {
            let row = &params.fourier[k * INPUT_DIM..(k + 1) * INPUT_DIM];
            let mut e = alg.scale(&q[0], row[0])?;
            for j in 1..INPUT_DIM {
                let term = alg.scale(&q[j], row[j])?;
                e = alg.add(&e, &term)?;
            }
            sines.push(alg.sin(&e)?);
            cosines.push(alg.cos(&e)?);
        }
        let mut activations = sines;
        activations.extend(cosines);

        let last = params.layout.len() - 1;
        for (index, layer) in params.layout.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.fan_out);
            for o in 0..layer.fan_out {
                let b = layer.biases + o;
                let mut z = alg.parameter(b, params.trainable[b])?;
                for (i, a) in activations.iter().enumerate() {
                    let w = layer.weights + o * layer.fan_in + i;
                    let weight = alg.parameter(w, params.trainable[w])?;
                    let term = alg.mul(&weight, a)?;
                    z = alg.add(&z, &term)?;
                }
                next.push(if index == last { z } else { alg.tanh(&z)? });
            }
            activations = next;
        }
        let mut it = activations.into_iter();
        let (u, v, p) = (it.next(), it.next(), it.next());
        Ok([u.expect("output u"), v.expect("output v"), p.expect("output p")])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Plain, VectorField};
    use std::f64::consts::FRAC_PI_2;

    fn cylinder_normalizer() -> InputNormalizer {
        InputNormalizer {
            x: Interval::new(-2.5, 7.5),
            y: Interval::new(-2.5, 2.5),
            t: Interval::new(0.0, 60.0),
            nu: Interval::new(0.002, 0.010),
        }
    }

    #[test]
    fn default_parameter_count() {
        let config = NetworkConfig::default();
        let counted = (100 * 100 + 100) + 6 * (100 * 100 + 100) + (3 * 100 + 3);
        assert_eq!(counted, 71_003);
        assert_eq!(config.trainable_count(), 71_003);
        assert_eq!(config.embedding_dim(), 100);
        let params = init_params(&config, 7).unwrap();
        assert_eq!(params.trainable().len(), 71_003);
        assert_eq!(params.weights(0).len(), 100 * 100);
        assert_eq!(params.weights(7).len(), 3 * 100);
    }

    #[test]
    fn init_is_deterministic() {
        let config = NetworkConfig::default();
        let a = init_params(&config, 7).unwrap();
        let b = init_params(&config, 7).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        let c = init_params(&config, 8).unwrap();
        assert_ne!(a.canonical(), c.canonical());
        assert!(a.biases(0).iter().all(|&b| b == 0.0));
        let limit = (6.0f64 / 200.0).sqrt();
        assert!(a.weights(1).iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn embedding_ranges() {
        let params = init_params(&NetworkConfig::default(), 1).unwrap();
        let e = embed(&params, [0.0; 4]);
        assert_eq!(e.len(), 100);
        assert!(e[..50].iter().all(|&v| v == 0.0));
        assert!(e[50..].iter().all(|&v| v == 1.0));
        let e = embed(&params, [0.3, -0.9, 0.1, 0.7]);
        assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));

        let config = NetworkConfig {
            fourier_bins: 1,
            ..NetworkConfig::default()
        };
        let params =
            ModelParams::from_parts(&config, vec![1.0, 0.0, 0.0, 0.0], vec![0.0; config.trainable_count()]).unwrap();
        let e = embed(&params, [FRAC_PI_2, 0.0, 0.0, 0.0]);
        assert_eq!(e[0], 1.0);
        assert!(e[1].abs() < 1e-12);
    }

    #[test]
    fn zero_output_layer_gives_zero_field() {
        let config = NetworkConfig {
            fourier_bins: 8,
            hidden_layers: 2,
            hidden_width: 16,
            ..NetworkConfig::default()
        };
        let mut params = init_params(&config, 3).unwrap();
        let out = params.layout()[2];
        params.trainable_mut()[out.weights..].iter_mut().for_each(|w| *w = 0.0);
        let net = Network::new(config, cylinder_normalizer(), params).unwrap();
        for point in [[1.0, 0.5, 3.0, 0.004], [-2.5, 2.5, 60.0, 0.01]] {
            let pred = net.forward(point).unwrap();
            assert_eq!((pred.u, pred.v, pred.p), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn forward_is_deterministic_and_finite_at_corner() {
        let config = NetworkConfig {
            fourier_bins: 16,
            hidden_layers: 3,
            hidden_width: 32,
            ..NetworkConfig::default()
        };
        let net = Network::initialized(config, cylinder_normalizer(), 11).unwrap();
        let corner = [-2.5, -2.5, 0.0, 0.002];
        let a = net.forward(corner).unwrap();
        let b = net.forward(corner).unwrap();
        assert_eq!(a.u.to_bits(), b.u.to_bits());
        assert_eq!(a.p.to_bits(), b.p.to_bits());
        assert!(a.u.is_finite() && a.v.is_finite() && a.p.is_finite());
    }

    #[test]
    fn batched_forward_matches_generic_path() {
        let config = NetworkConfig {
            fourier_bins: 6,
            hidden_layers: 2,
            hidden_width: 9,
            ..NetworkConfig::default()
        };
        let net = Network::initialized(config, cylinder_normalizer(), 5).unwrap();
        let point = [1.3, -0.7, 12.0, 0.006];
        let fast = net.forward(point).unwrap();
        let [u, v, p] = net.as_field().eval(&mut Plain, &point).unwrap();
        assert!((fast.u - u).abs() < 1e-14);
        assert!((fast.v - v).abs() < 1e-14);
        assert!((fast.p - p).abs() < 1e-14);
    }

    #[test]
    fn normalization_bounds_and_round_trip() {
        let n = cylinder_normalizer();
        let q = n.normalize_input([-2.5, 0.0, 0.0, 500.0]).unwrap();
        assert_eq!(q[0], -1.0);
        assert!((q[3] + 1.0).abs() < 1e-12);
        let q = n.normalize_input([7.5, 2.5, 60.0, 100.0]).unwrap();
        assert!(q.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert_eq!(
            n.normalize_input([0.0, 0.0, 0.0, 0.0]),
            Err(NetworkError::NonPositiveReynolds(0.0))
        );
        let raw = [3.1, -1.2, 17.5, 250.0];
        let back = n.denormalize(n.normalize_input(raw).unwrap());
        for (a, b) in raw.iter().zip(back) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

//! Batched evaluation of the network together with its input derivatives,
//! and the matching reverse pass over the trainable parameters.
//!
//! Each point occupies `C` consecutive rows of every activation matrix: the
//! value row alone for [`Channels::Values`], or the six rows
//! `[value, ∂x, ∂y, ∂t, ∂xx, ∂yy]` for [`Channels::Jets`]. Derivatives are
//! with respect to the raw (un-normalized) coordinates. Dense layers are
//! then plain matrix products over all rows, with the bias entering the
//! value rows only.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use super::{ModelParams, Network, INPUT_DIM, OUTPUT_DIM};

pub const JET_CHANNELS: usize = 6;

const VALUE: usize = 0;
const DX: usize = 1;
const DY: usize = 2;
const DT: usize = 3;
const DXX: usize = 4;
const DYY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Values,
    Jets,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Values => 1,
            Channels::Jets => JET_CHANNELS,
        }
    }
}

/// Intermediate activations kept for [`Network::batch_backward`].
#[derive(Debug, Clone)]
pub struct BatchCache {
    channels: Channels,
    points: usize,
    /// Input to each dense layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    /// `tanh` of the value rows of each hidden layer (`points × width`).
    tanh: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    outputs: Array2<f64>,
    cache: BatchCache,
}

impl BatchOutput {
    /// `(points · C) × 3` matrix of `(u, v, p)` channels.
    pub fn outputs(&self) -> &Array2<f64> {
        &self.outputs
    }

    pub fn channels(&self) -> Channels {
        self.cache.channels
    }

    pub fn points(&self) -> usize {
        self.cache.points
    }

    /// Output `component` (0 = u, 1 = v, 2 = p) on `channel` of `point`.
    pub fn get(&self, point: usize, channel: usize, component: usize) -> f64 {
        self.outputs[[point * self.cache.channels.count() + channel, component]]
    }
}

fn weights_view(params: &ModelParams, layer: usize) -> ArrayView2<'_, f64> {
    let l = params.layout[layer];
    ArrayView2::from_shape((l.fan_out, l.fan_in), params.weights(layer)).expect("layer shape")
}

fn biases_view(params: &ModelParams, layer: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(params.biases(layer))
}

impl Network {
    pub fn batch_forward(&self, points: &[[f64; 4]], channels: Channels) -> BatchOutput {
        let c = channels.count();
        let params = &self.params;
        let n = points.len();
        let mut a = self.embed_rows(points, channels);

        let hidden = params.layout.len() - 1;
        let mut inputs = Vec::with_capacity(hidden + 1);
        let mut pre = Vec::with_capacity(hidden);
        let mut tanh = Vec::with_capacity(hidden);
        for layer in 0..hidden {
            let mut z = a.dot(&weights_view(params, layer).t());
            {
                let mut value_rows = z.slice_mut(s![..;c, ..]);
                value_rows += &biases_view(params, layer);
            }
            let (next, t) = activate(&z, n, channels);
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
            tanh.push(t);
        }
        let mut outputs = a.dot(&weights_view(params, hidden).t());
        {
            let mut value_rows = outputs.slice_mut(s![..;c, ..]);
            value_rows += &biases_view(params, hidden);
        }
        inputs.push(a);
        BatchOutput {
            outputs,
            cache: BatchCache {
                channels,
                points: n,
                inputs,
                pre,
                tanh,
            },
        }
    }

    /// Accumulates into `grad` (canonical trainable order) the gradient of a
    /// scalar whose derivative with respect to `out.outputs()` is
    /// `grad_outputs`.
    pub fn batch_backward(&self, out: &BatchOutput, grad_outputs: &Array2<f64>, grad: &mut [f64]) {
        let params = &self.params;
        let cache = &out.cache;
        let c = cache.channels.count();
        assert_eq!(grad_outputs.dim(), (cache.points * c, OUTPUT_DIM));
        assert_eq!(grad.len(), params.trainable.len());

        let mut g = grad_outputs.to_owned();
        for layer in (0..params.layout.len()).rev() {
            let l = params.layout[layer];
            let dw = g.t().dot(&cache.inputs[layer]);
            let dw = dw.as_slice().expect("standard layout");
            for (acc, d) in grad[l.weights..l.biases].iter_mut().zip(dw) {
                *acc += d;
            }
            let db = g.slice(s![..;c, ..]).sum_axis(Axis(0));
            for (acc, d) in grad[l.biases..l.biases + l.fan_out].iter_mut().zip(db.iter()) {
                *acc += d;
            }
            if layer == 0 {
                break;
            }
            let da = g.dot(&weights_view(params, layer));
            g = activate_backward(
                da,
                &cache.pre[layer - 1],
                &cache.tanh[layer - 1],
                cache.points,
                cache.channels,
            );
        }
    }

    fn embed_rows(&self, points: &[[f64; 4]], channels: Channels) -> Array2<f64> {
        let c = channels.count();
        let params = &self.params;
        let bins = params.fourier_bins();
        let affine = self.normalizer.affine();
        let mut e = Array2::<f64>::zeros((points.len() * c, 2 * bins));
        for (p, point) in points.iter().enumerate() {
            let q: [f64; 4] = std::array::from_fn(|i| affine[i].0 * point[i] + affine[i].1);
            for k in 0..bins {
                let row = &params.fourier[k * INPUT_DIM..(k + 1) * INPUT_DIM];
                let arg: f64 = row.iter().zip(&q).map(|(b, q)| b * q).sum();
                let (sn, cs) = arg.sin_cos();
                let base = p * c;
                e[[base, k]] = sn;
                e[[base, bins + k]] = cs;
                if channels == Channels::Jets {
                    let ex = row[0] * affine[0].0;
                    let ey = row[1] * affine[1].0;
                    let et = row[2] * affine[2].0;
                    for (ch, d) in [(DX, ex), (DY, ey), (DT, et)] {
                        e[[base + ch, k]] = cs * d;
                        e[[base + ch, bins + k]] = -sn * d;
                    }
                    for (ch, d) in [(DXX, ex), (DYY, ey)] {
                        e[[base + ch, k]] = -sn * d * d;
                        e[[base + ch, bins + k]] = -cs * d * d;
                    }
                }
            }
        }
        e
    }
}

/// Applies `tanh` channel-wise, returning the activations and the `tanh` of
/// the value rows.
fn activate(z: &Array2<f64>, points: usize, channels: Channels) -> (Array2<f64>, Array2<f64>) {
    let width = z.ncols();
    let c = channels.count();
    let mut a = Array2::<f64>::zeros(z.raw_dim());
    let mut t = Array2::<f64>::zeros((points, width));
    let zs = z.as_slice().expect("standard layout");
    let out = a.as_slice_mut().expect("standard layout");
    let ts = t.as_slice_mut().expect("standard layout");
    for p in 0..points {
        let base = p * c * width;
        for j in 0..width {
            let s = zs[base + j].tanh();
            ts[p * width + j] = s;
            out[base + j] = s;
            if channels == Channels::Values {
                continue;
            }
            let s1 = 1.0 - s * s;
            let s2 = -2.0 * s * s1;
            let at = |ch: usize| base + ch * width + j;
            let (zx, zy) = (zs[at(DX)], zs[at(DY)]);
            out[at(DX)] = s1 * zx;
            out[at(DY)] = s1 * zy;
            out[at(DT)] = s1 * zs[at(DT)];
            out[at(DXX)] = s2 * zx * zx + s1 * zs[at(DXX)];
            out[at(DYY)] = s2 * zy * zy + s1 * zs[at(DYY)];
        }
    }
    (a, t)
}

/// Pulls activation gradients `ga` back through [`activate`].
fn activate_backward(
    mut ga: Array2<f64>,
    z: &Array2<f64>,
    t: &Array2<f64>,
    points: usize,
    channels: Channels,
) -> Array2<f64> {
    let width = z.ncols();
    let c = channels.count();
    let zs = z.as_slice().expect("standard layout");
    let ts = t.as_slice().expect("standard layout");
    let g = ga.as_slice_mut().expect("standard layout");
    for p in 0..points {
        let base = p * c * width;
        for j in 0..width {
            let s = ts[p * width + j];
            let s1 = 1.0 - s * s;
            if channels == Channels::Values {
                g[base + j] *= s1;
                continue;
            }
            let s2 = -2.0 * s * s1;
            let s3 = -2.0 * s1 * s1 - 2.0 * s * s2;
            let at = |ch: usize| base + ch * width + j;
            let (zx, zy, zt) = (zs[at(DX)], zs[at(DY)], zs[at(DT)]);
            let (gx, gy, gt, gxx, gyy) = (g[at(DX)], g[at(DY)], g[at(DT)], g[at(DXX)], g[at(DYY)]);
            let g0 = g[at(VALUE)];
            g[at(VALUE)] = g0 * s1
                + (gx * zx + gy * zy + gt * zt) * s2
                + gxx * (s3 * zx * zx + s2 * zs[at(DXX)])
                + gyy * (s3 * zy * zy + s2 * zs[at(DYY)]);
            g[at(DX)] = gx * s1 + 2.0 * gxx * s2 * zx;
            g[at(DY)] = gy * s1 + 2.0 * gyy * s2 * zy;
            g[at(DT)] = gt * s1;
            g[at(DXX)] = gxx * s1;
            g[at(DYY)] = gyy * s1;
        }
    }
    ga
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{directional_derivatives, Algebra, Component, ComputationRecord, Direction, VectorField};
    use crate::network::{InputNormalizer, Interval, NetworkConfig};

    fn small_network(seed: u64) -> Network {
        let config = NetworkConfig {
            fourier_bins: 5,
            fourier_sigma: 1.0,
            hidden_layers: 2,
            hidden_width: 7,
            ..NetworkConfig::default()
        };
        let normalizer = InputNormalizer {
            x: Interval::new(-2.5, 7.5),
            y: Interval::new(-2.5, 2.5),
            t: Interval::new(0.0, 10.0),
            nu: Interval::new(0.002, 0.01),
        };
        let mut net = Network::initialized(config, normalizer, seed).unwrap();
        // Nonzero biases so the bias path is exercised.
        for (i, b) in net.params.trainable_mut().iter_mut().enumerate() {
            if *b == 0.0 {
                *b = 0.05 * ((i % 7) as f64 - 3.0);
            }
        }
        net
    }

    #[test]
    fn jets_match_forward_mode() {
        let net = small_network(2);
        let points = [[0.7, -1.1, 3.0, 0.004], [5.0, 2.0, 9.0, 0.009]];
        let out = net.batch_forward(&points, Channels::Jets);
        for (p, point) in points.iter().enumerate() {
            for comp in 0..3 {
                let field = Component(net.as_field(), comp);
                for (dir, d1ch, d2ch) in [
                    (Direction::X, DX, Some(DXX)),
                    (Direction::Y, DY, Some(DYY)),
                    (Direction::T, DT, None),
                ] {
                    let (v, d1, d2) = directional_derivatives(&field, *point, dir).unwrap();
                    assert!((out.get(p, VALUE, comp) - v).abs() < 1e-13);
                    assert!((out.get(p, d1ch, comp) - d1).abs() < 1e-13);
                    if let Some(ch) = d2ch {
                        assert!((out.get(p, ch, comp) - d2).abs() < 1e-13);
                    }
                }
            }
        }
    }

    /// The reverse pass through every jet channel agrees with the tape.
    #[test]
    fn backward_matches_tape() {
        let net = small_network(4);
        let point = [1.5, 0.3, 4.0, 0.006];
        let weights: [[f64; 3]; JET_CHANNELS] = [
            [0.3, -0.2, 0.5],
            [1.1, 0.4, -0.7],
            [-0.6, 0.9, 0.2],
            [0.8, -1.3, 0.1],
            [0.25, 0.5, -0.4],
            [-0.9, 0.35, 0.6],
        ];
        let out = net.batch_forward(&[point], Channels::Jets);
        let mut grad_out = Array2::zeros((JET_CHANNELS, 3));
        for ch in 0..JET_CHANNELS {
            for comp in 0..3 {
                grad_out[[ch, comp]] = weights[ch][comp];
            }
        }
        let mut fast = vec![0.0; net.params.trainable().len()];
        net.batch_backward(&out, &grad_out, &mut fast);

        // Same scalar on the tape: three seeded passes, one per direction.
        let mut rec = ComputationRecord::new(net.params.trainable().len());
        let mut total = rec.constant(0.0);
        for (dir, d1ch, d2ch) in [(0, DX, Some(DXX)), (1, DY, Some(DYY)), (2, DT, None)] {
            let q: [_; 4] = std::array::from_fn(|i| {
                if i == dir {
                    rec.input(point[i], Some(1.0), Some(0.0))
                } else {
                    rec.input(point[i], None, None)
                }
            });
            let outs = net.as_field().eval(&mut rec, &q).unwrap();
            for (comp, o) in outs.iter().enumerate() {
                let t1 = rec.tangent_of(o).unwrap();
                let w1 = rec.scale(&t1, weights[d1ch][comp]).unwrap();
                total = rec.add(&total, &w1).unwrap();
                if let Some(ch) = d2ch {
                    let t2 = rec.second_tangent_of(o).unwrap();
                    let w2 = rec.scale(&t2, weights[ch][comp]).unwrap();
                    total = rec.add(&total, &w2).unwrap();
                }
                if dir == 0 {
                    let w0 = rec.scale(o, weights[VALUE][comp]).unwrap();
                    total = rec.add(&total, &w0).unwrap();
                }
            }
        }
        let slow = rec.backward(total.node_id()).unwrap();
        for (i, (a, b)) in fast.iter().zip(slow.as_slice()).enumerate() {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "param {i}: {a} vs {b}");
        }
    }

    #[test]
    fn value_channels_match_value_rows_of_jets() {
        let net = small_network(9);
        let points = [[0.1, 0.2, 0.3, 0.005], [-2.0, 1.0, 7.0, 0.003]];
        let values = net.batch_forward(&points, Channels::Values);
        let jets = net.batch_forward(&points, Channels::Jets);
        for p in 0..2 {
            for comp in 0..3 {
                assert!((values.get(p, 0, comp) - jets.get(p, VALUE, comp)).abs() < 1e-14);
            }
        }
    }
}

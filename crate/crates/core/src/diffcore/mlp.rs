//! Batched input jets for the MLP discrete Lagrangian.
//!
//! Each pair is pushed through the network as a bundle of channels: the
//! value, one tangent per input coordinate, and one second-order channel per
//! mixed pair `(q0_i, q1_j)`. Channels are stacked as row blocks
//! (`row = channel · batch + pair`) so every layer is one matrix product.
//!
//! For a hidden layer `h = σ(z)` the channels transform as
//!
//! ```text
//! h      = σ(z)
//! h_a    = σ'(z) z_a
//! h_ab   = σ''(z) z_a z_b + σ'(z) z_ab
//! ```
//!
//! and the reverse pass below is the exact adjoint of these maps.

use ndarray::{s, Array2, Axis};

use crate::diffcore::{Jet, JetAdjoint, ParametricJetField};
use crate::error::{Error, Result};
use crate::model::DiscreteLagrangianModel;

/// Channel layout for `n_q` configuration components.
#[derive(Clone, Debug)]
struct Channels {
    n_q: usize,
    /// Second-order channels as pairs of input coordinates.
    pairs: Vec<(usize, usize)>,
}

impl Channels {
    fn cross(n_q: usize) -> Self {
        let pairs = (0..n_q).flat_map(|i| (0..n_q).map(move |j| (i, n_q + j))).collect();
        Self { n_q, pairs }
    }

    fn n_inputs(&self) -> usize {
        2 * self.n_q
    }

    fn count(&self) -> usize {
        1 + self.n_inputs() + self.pairs.len()
    }

    fn tangent(&self, a: usize) -> usize {
        1 + a
    }

    fn pair(&self, p: usize) -> usize {
        1 + self.n_inputs() + p
    }
}

pub struct HiddenCache {
    h_in: Array2<f64>,
    z: Array2<f64>,
    s1: Array2<f64>,
    s2: Array2<f64>,
    s3: Array2<f64>,
}

pub struct MlpCache {
    batch: usize,
    hidden: Vec<HiddenCache>,
    last_h: Array2<f64>,
}

impl DiscreteLagrangianModel {
    fn hidden_forward(&self, ch: &Channels, batch: usize, z: &Array2<f64>) -> (Array2<f64>, [Array2<f64>; 3]) {
        let width = z.ncols();
        let act = self.activation();
        let zs = z.as_slice().expect("standard layout");
        let mut h = Array2::<f64>::zeros(z.raw_dim());
        let mut s1 = Array2::<f64>::zeros((batch, width));
        let mut s2 = Array2::<f64>::zeros((batch, width));
        let mut s3 = Array2::<f64>::zeros((batch, width));
        {
            let hs = h.as_slice_mut().expect("standard layout");
            let (d1, d2, d3) = (
                s1.as_slice_mut().expect("standard layout"),
                s2.as_slice_mut().expect("standard layout"),
                s3.as_slice_mut().expect("standard layout"),
            );
            for b in 0..batch {
                let base = b * width;
                for k in 0..width {
                    let (f, a1, a2, a3) = act.derivatives(zs[base + k]);
                    hs[base + k] = f;
                    d1[base + k] = a1;
                    d2[base + k] = a2;
                    d3[base + k] = a3;
                }
                for a in 0..ch.n_inputs() {
                    let row = (ch.tangent(a) * batch + b) * width;
                    for k in 0..width {
                        hs[row + k] = d1[base + k] * zs[row + k];
                    }
                }
                for (p, &(a, c)) in ch.pairs.iter().enumerate() {
                    let row = (ch.pair(p) * batch + b) * width;
                    let ra = (ch.tangent(a) * batch + b) * width;
                    let rc = (ch.tangent(c) * batch + b) * width;
                    for k in 0..width {
                        hs[row + k] = d2[base + k] * zs[ra + k] * zs[rc + k] + d1[base + k] * zs[row + k];
                    }
                }
            }
        }
        (h, [s1, s2, s3])
    }

    fn hidden_backward(&self, ch: &Channels, batch: usize, cache: &HiddenCache, gh: &Array2<f64>) -> Array2<f64> {
        let width = gh.ncols();
        let zs = cache.z.as_slice().expect("standard layout");
        let g = gh.as_slice().expect("standard layout");
        let (d1, d2, d3) = (
            cache.s1.as_slice().expect("standard layout"),
            cache.s2.as_slice().expect("standard layout"),
            cache.s3.as_slice().expect("standard layout"),
        );
        let mut gz = Array2::<f64>::zeros(gh.raw_dim());
        let out = gz.as_slice_mut().expect("standard layout");
        for b in 0..batch {
            let base = b * width;
            for k in 0..width {
                out[base + k] = d1[base + k] * g[base + k];
            }
            for a in 0..ch.n_inputs() {
                let ra = (ch.tangent(a) * batch + b) * width;
                for k in 0..width {
                    out[ra + k] = d1[base + k] * g[ra + k];
                    out[base + k] += d2[base + k] * zs[ra + k] * g[ra + k];
                }
            }
            for (p, &(a, c)) in ch.pairs.iter().enumerate() {
                let rp = (ch.pair(p) * batch + b) * width;
                let ra = (ch.tangent(a) * batch + b) * width;
                let rc = (ch.tangent(c) * batch + b) * width;
                for k in 0..width {
                    let gp = g[rp + k];
                    out[rp + k] = d1[base + k] * gp;
                    out[ra + k] += d2[base + k] * zs[rc + k] * gp;
                    out[rc + k] += d2[base + k] * zs[ra + k] * gp;
                    out[base + k] += (d3[base + k] * zs[ra + k] * zs[rc + k] + d2[base + k] * zs[rp + k]) * gp;
                }
            }
        }
        gz
    }
}

impl ParametricJetField for DiscreteLagrangianModel {
    type Cache = MlpCache;

    fn n_q(&self) -> usize {
        DiscreteLagrangianModel::n_q(self)
    }

    fn n_params(&self) -> usize {
        DiscreteLagrangianModel::n_params(self)
    }

    fn forward_jets(&self, inputs: &[f64]) -> Result<(Vec<Jet>, MlpCache)> {
        let n = DiscreteLagrangianModel::n_q(self);
        let ch = Channels::cross(n);
        let n_in = ch.n_inputs();
        if !inputs.len().is_multiple_of(n_in) {
            return Err(Error::DimensionMismatch { expected: n_in, got: inputs.len() % n_in });
        }
        let batch = inputs.len() / n_in;
        let rows = ch.count() * batch;

        let mut h = Array2::<f64>::zeros((rows, n_in));
        for b in 0..batch {
            for a in 0..n_in {
                h[[b, a]] = inputs[b * n_in + a];
                h[[ch.tangent(a) * batch + b, a]] = 1.0;
            }
        }

        let layers = self.layers();
        let (hidden_layers, output) = layers.split_at(layers.len() - 1);
        let mut hidden = Vec::with_capacity(hidden_layers.len());
        for layer in hidden_layers {
            let mut z = h.dot(&layer.weights.t());
            z.slice_mut(s![0..batch, ..]).outer_iter_mut().for_each(|mut row| row += &layer.biases);
            let (h_next, [s1, s2, s3]) = self.hidden_forward(&ch, batch, &z);
            hidden.push(HiddenCache { h_in: h, z, s1, s2, s3 });
            h = h_next;
        }
        let out_layer = &output[0];
        let out = h.dot(&out_layer.weights.row(0));
        let bias = out_layer.biases[0];

        let jets = (0..batch)
            .map(|b| {
                let at = |c: usize| out[c * batch + b];
                let mut jet = Jet::zeros(n);
                jet.value = at(0) + bias;
                for i in 0..n {
                    jet.d1[i] = at(ch.tangent(i));
                    jet.d2[i] = at(ch.tangent(n + i));
                }
                for p in 0..ch.pairs.len() {
                    jet.d2d1[p] = at(ch.pair(p));
                }
                jet
            })
            .collect();
        Ok((jets, MlpCache { batch, hidden, last_h: h }))
    }

    fn backward_jets(&self, cache: &MlpCache, adjoints: &[JetAdjoint]) -> Vec<f64> {
        let n = DiscreteLagrangianModel::n_q(self);
        let ch = Channels::cross(n);
        let batch = cache.batch;
        assert_eq!(adjoints.len(), batch, "one adjoint per pair");
        let rows = ch.count() * batch;

        let mut gout = ndarray::Array1::<f64>::zeros(rows);
        for (b, adj) in adjoints.iter().enumerate() {
            gout[b] = adj.value;
            for i in 0..n {
                gout[ch.tangent(i) * batch + b] = adj.d1[i];
                gout[ch.tangent(n + i) * batch + b] = adj.d2[i];
            }
            for p in 0..ch.pairs.len() {
                gout[ch.pair(p) * batch + b] = adj.d2d1[p];
            }
        }

        let layers = self.layers();
        let offsets: Vec<usize> = layers
            .iter()
            .scan(0, |off, l| {
                let start = *off;
                *off += l.weights.len() + l.biases.len();
                Some(start)
            })
            .collect();
        let mut grad = vec![0.0; DiscreteLagrangianModel::n_params(self)];

        let out_layer = layers.last().expect("non-empty");
        let off = *offsets.last().expect("non-empty");
        let gw = cache.last_h.t().dot(&gout);
        grad[off..off + gw.len()].copy_from_slice(gw.as_slice().expect("contiguous"));
        grad[off + gw.len()] = gout.slice(s![0..batch]).sum();

        let w_out = out_layer.weights.row(0);
        let mut gh = Array2::from_shape_fn((rows, w_out.len()), |(r, k)| gout[r] * w_out[k]);

        for (li, hc) in cache.hidden.iter().enumerate().rev() {
            let layer = &layers[li];
            let gz = self.hidden_backward(&ch, batch, hc, &gh);
            let gw = gz.t().dot(&hc.h_in);
            let off = offsets[li];
            let nw = layer.weights.len();
            for (dst, src) in grad[off..off + nw].iter_mut().zip(gw.iter()) {
                *dst = *src;
            }
            let gb = gz.slice(s![0..batch, ..]).sum_axis(Axis(0));
            for (dst, src) in grad[off + nw..off + nw + gb.len()].iter_mut().zip(gb.iter()) {
                *dst = *src;
            }
            if li > 0 {
                gh = gz.dot(&layer.weights);
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{eval_jet, param_grad};
    use crate::lagrangian::{jet_by_duals, DiscreteLagrangian};
    use crate::model::Activation;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-3)
    }

    fn model(act: Activation) -> DiscreteLagrangianModel {
        let mut m = DiscreteLagrangianModel::init(17, 2, 0.1, act, &[8, 8]).unwrap();
        // nonzero biases exercise the bias paths
        let p: Vec<f64> = m.params().iter().enumerate().map(|(i, x)| x + 0.05 * ((i as f64) * 0.7).sin()).collect();
        m.set_params(&p).unwrap();
        m
    }

    #[test]
    fn batched_jets_match_hyper_duals() {
        for act in [Activation::Tanh, Activation::Softplus] {
            let m = model(act);
            let (q0, q1) = ([0.3, -0.7], [0.5, 0.2]);
            let a = eval_jet(&m, &q0, &q1).unwrap();
            let b = jet_by_duals(&m, &q0, &q1).unwrap();
            assert!(close(a.value, b.value, 1e-13));
            for (x, y) in a.d1.iter().chain(&a.d2).chain(&a.d2d1).zip(b.d1.iter().chain(&b.d2).chain(&b.d2d1)) {
                assert!(close(*x, *y, 1e-12), "{act:?}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn batch_order_is_preserved() {
        let m = model(Activation::Tanh);
        let inputs: Vec<f64> = (0..150 * 4).map(|i| ((i as f64) * 0.37).sin()).collect();
        let (jets, _) = m.forward_jets(&inputs).unwrap();
        for (b, jet) in jets.iter().enumerate().step_by(37) {
            let x = &inputs[4 * b..4 * b + 4];
            assert!((jet.value - m.value(&x[..2], &x[2..]).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_model_parameter_gradient() {
        // no hidden layer: L_d = wᵀ(q0‖q1) + b
        let m = DiscreteLagrangianModel::init(1, 2, 0.1, Activation::Tanh, &[]).unwrap();
        let input = [1.0, 2.0, 3.0, 4.0];
        let g = param_grad(&m, &input, |_, _, v| Ok(v[0].value)).unwrap();
        assert_eq!(g.params.0, vec![1.0, 2.0, 3.0, 4.0, 1.0]);
    }

    /// Finite differences of a nonlinear objective of the jets (including the
    /// determinant of the mixed block) over every parameter.
    #[test]
    fn third_order_gradient_matches_finite_differences() {
        for act in [Activation::Tanh, Activation::Softplus] {
            let m = model(act);
            let inputs = [0.1, 0.4, 0.3, -0.2, 0.3, -0.2, 0.6, 0.1, -0.5, 0.0, 0.2, 0.9];
            let objective = |tape: &mut crate::diffcore::Tape, vars: &[crate::diffcore::JetVars]| {
                let mut parts = Vec::new();
                for v in vars {
                    let d = tape.det(&v.d2d1, 2);
                    parts.push(tape.square(d));
                    let s = tape.dot(&v.d1, &v.d2);
                    parts.push(tape.sigmoid(s));
                    parts.push(tape.scale(v.value, 0.3));
                }
                Ok(tape.sum(&parts))
            };
            let exact = param_grad(&m, &inputs, |t, _, v| objective(t, v)).unwrap();
            let value_at = |p: &[f64]| {
                let mut mm = m.clone();
                mm.set_params(p).unwrap();
                param_grad(&mm, &inputs, |t, _, v| objective(t, v)).unwrap().value
            };
            let p0 = m.params();
            let h = 1e-5;
            for i in 0..p0.len() {
                let mut a = p0.clone();
                a[i] += h;
                let mut b = p0.clone();
                b[i] -= h;
                let fd = (value_at(&a) - value_at(&b)) / (2.0 * h);
                let g = exact.params.0[i];
                assert!((g - fd).abs() <= 1e-5 * g.abs().max(fd.abs()) + 1e-8, "{act:?} param {i}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn chunked_gradient_is_deterministic() {
        let m = model(Activation::Tanh);
        let inputs: Vec<f64> = (0..300 * 4).map(|i| ((i as f64) * 0.11).cos()).collect();
        let run = || {
            param_grad(&m, &inputs, |t, _, v| {
                let s: Vec<_> = v.iter().map(|j| t.square(j.d2d1[1])).collect();
                Ok(t.sum(&s))
            })
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(a.params.0.iter().zip(&b.params.0).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

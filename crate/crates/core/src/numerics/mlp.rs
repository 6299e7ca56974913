//! Fully connected networks: tape-recorded forward for training and a chunked
//! tape-free forward for large evaluation batches.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::rng::RngStream;
use super::tensor::{matmul_raw, Activation, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::math;

/// Deepest stack of hidden layers accepted by [`Mlp::new`].
pub const MAX_HIDDEN_LAYERS: usize = 4;

/// Rows processed at once by [`Mlp::eval`].
const EVAL_CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `[in, out]`
    pub weight: Tensor,
    /// `[1, out]`
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden: Activation,
    output: Activation,
}

/// Tape handles for the parameters of one [`Mlp`].
#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub layers: Vec<(Var, Var)>,
}

impl Mlp {
    /// Random initialization: He-uniform for relu layers, Glorot-uniform
    /// otherwise, zero biases.
    pub fn new(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        output_act: Activation,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if hidden.len() > MAX_HIDDEN_LAYERS {
            return Err(Error::invalid(
                "hidden",
                format!("at most {MAX_HIDDEN_LAYERS} hidden layers, got {}", hidden.len()),
            ));
        }
        if input == 0 || output == 0 || hidden.contains(&0) {
            return Err(Error::invalid("hidden", "layer widths must be positive"));
        }
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(hidden);
        dims.push(output);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let act = if i == last { output_act } else { hidden_act };
                let bound = if act == Activation::Relu {
                    math::sqrt(6.0 / fan_in as f64)
                } else {
                    math::sqrt(6.0 / (fan_in + fan_out) as f64)
                };
                let data = (0..fan_in * fan_out)
                    .map(|_| (2.0 * rng.uniform() - 1.0) * bound)
                    .collect();
                Dense {
                    weight: Tensor::new(fan_in, fan_out, data).expect("sized by construction"),
                    bias: Tensor::zeros(1, fan_out),
                }
            })
            .collect();
        Ok(Self {
            layers,
            hidden: hidden_act,
            output: output_act,
        })
    }

    /// Builds a network from explicit layers, checking that widths chain.
    pub fn from_layers(layers: Vec<Dense>, hidden_act: Activation, output_act: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layers"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.rows() != 1 || l.bias.cols() != l.weight.cols() {
                return Err(Error::LayerDimension {
                    layer: i,
                    expected: l.weight.cols(),
                    found: l.bias.cols(),
                });
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(Error::LayerDimension {
                    layer: i,
                    expected: l.weight.rows(),
                    found: layers[i - 1].weight.cols(),
                });
            }
        }
        Ok(Self {
            layers,
            hidden: hidden_act,
            output: output_act,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter buffers in the order weight0, bias0, weight1, ...
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.data()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.data_mut()])
            .collect()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{prefix}.{i}.weight"), format!("{prefix}.{i}.bias")])
            .collect()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.len()).collect()
    }

    /// Places the parameters on `tape`, trainable or frozen.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
                } else {
                    (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                }
            })
            .collect();
        BoundMlp { layers }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &BoundMlp, x: Var) -> Result<Var> {
        mlp_forward(tape, &bound.layers, x, self.hidden, self.output)
    }

    /// Gradients gathered from `tape` in [`params`](Self::params) order; zeros
    /// where the loss did not depend on a parameter.
    pub fn grads(&self, tape: &Tape, bound: &BoundMlp) -> Vec<Vec<f64>> {
        bound
            .layers
            .iter()
            .zip(&self.layers)
            .flat_map(|(&(w, b), l)| {
                [
                    tape.grad(w).map_or_else(|| alloc::vec![0.0; l.weight.len()], <[f64]>::to_vec),
                    tape.grad(b).map_or_else(|| alloc::vec![0.0; l.bias.len()], <[f64]>::to_vec),
                ]
            })
            .collect()
    }

    /// Tape-free forward pass, processed in row chunks to bound memory.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_dim() {
            return Err(Error::LayerDimension {
                layer: 0,
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        let out_dim = self.output_dim();
        let mut out = Vec::with_capacity(x.rows() * out_dim);
        let mut start = 0;
        while start < x.rows() {
            let end = (start + EVAL_CHUNK).min(x.rows());
            let chunk = Tensor::new(end - start, x.cols(), x.data()[start * x.cols()..end * x.cols()].to_vec())?;
            let mut h = chunk;
            let last = self.layers.len() - 1;
            for (i, l) in self.layers.iter().enumerate() {
                let mut z = matmul_raw(&h, &l.weight);
                let m = z.cols();
                let act = if i == last { self.output } else { self.hidden };
                for (k, v) in z.data_mut().iter_mut().enumerate() {
                    *v = act.apply(*v + l.bias.data()[k % m]);
                }
                h = z;
            }
            out.extend_from_slice(h.data());
            start = end;
        }
        Tensor::new(x.rows(), out_dim, out)
    }
}

/// Records `act_L(... act_1(x W_1 + b_1) ...)` on the tape. Every layer but the
/// last uses `hidden`; the last uses `output`.
pub fn mlp_forward(
    tape: &mut Tape,
    layers: &[(Var, Var)],
    input: Var,
    hidden: Activation,
    output: Activation,
) -> Result<Var> {
    let mut h = input;
    for (i, &(w, b)) in layers.iter().enumerate() {
        let (in_w, w_rows, w_cols, b_shape) = (
            tape.value(h).cols(),
            tape.value(w).rows(),
            tape.value(w).cols(),
            tape.value(b).shape(),
        );
        if in_w != w_rows {
            return Err(Error::LayerDimension {
                layer: i,
                expected: w_rows,
                found: in_w,
            });
        }
        if b_shape != [1, w_cols] {
            return Err(Error::LayerDimension {
                layer: i,
                expected: w_cols,
                found: b_shape[1],
            });
        }
        let z = tape.matmul(h, w)?;
        let z = tape.add_row(z, b)?;
        let act = if i + 1 == layers.len() { output } else { hidden };
        h = tape.activation(z, act);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_network_gives_zero() {
        let layers = vec![
            Dense {
                weight: Tensor::zeros(2, 3),
                bias: Tensor::zeros(1, 3),
            },
            Dense {
                weight: Tensor::zeros(3, 1),
                bias: Tensor::zeros(1, 1),
            },
        ];
        let net = Mlp::from_layers(layers, Activation::Identity, Activation::Identity).unwrap();
        let x = Tensor::new(2, 2, vec![1.0, -4.0, 3.5, 2.0]).unwrap();
        assert!(net.eval(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input() {
        let layers = vec![Dense {
            weight: Tensor::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            bias: Tensor::zeros(1, 2),
        }];
        let net = Mlp::from_layers(layers, Activation::Identity, Activation::Identity).unwrap();
        let x = Tensor::new(1, 2, vec![1.0, 2.0]).unwrap();
        let mut tape = Tape::new();
        let b = net.bind(&mut tape, true);
        let xv = tape.constant(x.clone());
        let y = net.forward(&mut tape, &b, xv).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);
        assert_eq!(net.eval(&x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn mismatched_layers_name_the_layer() {
        let layers = vec![
            Dense {
                weight: Tensor::zeros(2, 3),
                bias: Tensor::zeros(1, 3),
            },
            Dense {
                weight: Tensor::zeros(4, 1),
                bias: Tensor::zeros(1, 1),
            },
        ];
        let err = Mlp::from_layers(layers, Activation::Relu, Activation::Identity).unwrap_err();
        assert_eq!(
            err,
            Error::LayerDimension {
                layer: 1,
                expected: 4,
                found: 3
            }
        );

        let mut tape = Tape::new();
        let w = tape.param(Tensor::zeros(3, 2));
        let b = tape.param(Tensor::zeros(1, 2));
        let x = tape.constant(Tensor::zeros(5, 2));
        let err = mlp_forward(&mut tape, &[(w, b)], x, Activation::Relu, Activation::Identity).unwrap_err();
        assert!(matches!(err, Error::LayerDimension { layer: 0, .. }));
    }

    #[test]
    fn too_deep_rejected() {
        let mut rng = RngStream::new(0);
        assert!(Mlp::new(1, &[4; 5], 1, Activation::Relu, Activation::Identity, &mut rng).is_err());
        assert!(Mlp::new(1, &[4; 4], 1, Activation::Relu, Activation::Identity, &mut rng).is_ok());
    }

    #[test]
    fn forward_matches_plain_loops() {
        let mut rng = RngStream::new(11);
        let net = Mlp::new(3, &[5], 2, Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = Tensor::new(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();

        let mut expect = vec![0.0; 8];
        let (l0, l1) = (&net.layers()[0], &net.layers()[1]);
        for r in 0..4 {
            let mut h = [0.0; 5];
            for j in 0..5 {
                let mut s = l0.bias.data()[j];
                for k in 0..3 {
                    s += x.at(r, k) * l0.weight.at(k, j);
                }
                h[j] = s.tanh();
            }
            for j in 0..2 {
                let mut s = l1.bias.data()[j];
                for k in 0..5 {
                    s += h[k] * l1.weight.at(k, j);
                }
                expect[r * 2 + j] = s;
            }
        }
        let mut tape = Tape::new();
        let b = net.bind(&mut tape, true);
        let xv = tape.constant(x.clone());
        let y = net.forward(&mut tape, &b, xv).unwrap();
        for (a, e) in tape.value(y).data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
        for (a, e) in net.eval(&x).unwrap().data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

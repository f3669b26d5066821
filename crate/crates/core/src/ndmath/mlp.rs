use super::{Matrix, Parameters, Rng};
use crate::error::{shape_err, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x * sigmoid(x)`.
#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Sinusoidal features of a scalar conditioning value (noise level or time).
///
/// Frequencies are geometrically spaced over `[0.5, 8]`, which resolves the ranges the
/// teachers feed in (`ln(sigma) / 4` and `t` in `[0, 1]`).
pub fn sinusoidal_embedding(value: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let frac = if half > 1 {
            i as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let w = 0.5 * 16f64.powf(frac);
        out.push((w * value).sin());
    }
    for i in 0..half {
        let frac = if half > 1 {
            i as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let w = 0.5 * 16f64.powf(frac);
        out.push((w * value).cos());
    }
    out.resize(dim, 0.0);
    out
}

/// One fully connected layer, `y = W x + b` with `W` of shape `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Feed-forward network: SiLU on hidden layers, identity on the output.
///
/// The first layer consumes `[input | embed]`, where the trailing `embed_dim` columns carry
/// a time or condition embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    embed_dim: usize,
}

/// Activations recorded by [`Mlp::forward_tape`] for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpTape {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    output: Matrix,
}

impl MlpTape {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn into_output(self) -> Matrix {
        self.output
    }
}

impl Mlp {
    /// He-initialised network. `widths` runs from the state input width to the output
    /// width; the embedding is added on top of `widths[0]` for the first layer.
    pub fn new(widths: &[usize], embed_dim: usize, rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2, "an Mlp needs at least one layer");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let fan_in = if l == 0 { w[0] + embed_dim } else { w[0] };
                let std = (2.0 / fan_in as f64).sqrt();
                let weight = Matrix::from_fn(w[1], fan_in, |_, _| std * rng.normal());
                Dense {
                    weight,
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        Mlp { layers, embed_dim }
    }

    pub fn from_layers(layers: Vec<Dense>, embed_dim: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(shape_err("Mlp::from_layers", "at least one layer", 0));
        }
        if layers[0].in_dim() < embed_dim {
            return Err(shape_err(
                "Mlp::from_layers",
                format!("first layer width >= embed_dim {embed_dim}"),
                layers[0].in_dim(),
            ));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(shape_err("Mlp bias", layer.out_dim(), layer.bias.len()));
            }
            if l > 0 && layers[l - 1].out_dim() != layer.in_dim() {
                return Err(shape_err(
                    "Mlp layer chain",
                    layers[l - 1].out_dim(),
                    layer.in_dim(),
                ));
            }
        }
        Ok(Mlp { layers, embed_dim })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Width of the state input, excluding the embedding.
    pub fn input_dim(&self) -> usize {
        self.in_width() - self.embed_dim
    }

    /// Width of the first layer, including the embedding.
    pub fn in_width(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Same architecture, all parameters zero (gradient accumulator).
    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
            embed_dim: self.embed_dim,
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.in_width() {
            return Err(shape_err("Mlp input width", self.in_width(), x.cols()));
        }
        Ok(())
    }

    fn affine(layer: &Dense, a: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(a.rows(), layer.out_dim());
        for i in 0..a.rows() {
            z.row_mut(i).copy_from_slice(&layer.bias);
        }
        super::matrix::gemm(1.0, a, false, &layer.weight, true, 1.0, &mut z);
        z
    }

    /// Batched forward pass; rows of `x` are `[input | embed]`.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut a = Self::affine(&self.layers[0], x);
        for l in 1..=last {
            a.data_mut().iter_mut().for_each(|v| *v = silu(*v));
            a = Self::affine(&self.layers[l], &a);
        }
        Ok(a)
    }

    /// Forward pass that keeps what [`Mlp::backward`] needs.
    pub fn forward_tape(&self, x: &Matrix) -> Result<MlpTape> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        inputs.push(x.clone());
        for l in 0..last {
            let z = Self::affine(&self.layers[l], &inputs[l]);
            let mut a = z.clone();
            a.data_mut().iter_mut().for_each(|v| *v = silu(*v));
            pre.push(z);
            inputs.push(a);
        }
        let output = Self::affine(&self.layers[last], &inputs[last]);
        Ok(MlpTape {
            inputs,
            pre,
            output,
        })
    }

    /// Reverse pass: accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the full first-layer input (state and embedding columns).
    pub fn backward(&self, tape: &MlpTape, grad_out: &Matrix, grads: &mut Mlp) -> Result<Matrix> {
        if grad_out.shape() != tape.output.shape() {
            return Err(shape_err(
                "Mlp::backward output gradient",
                format!("{:?}", tape.output.shape()),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let mut g = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let a = &tape.inputs[l];
            let gl = &mut grads.layers[l];
            super::matrix::gemm(1.0, &g, true, a, false, 1.0, &mut gl.weight);
            for (b, s) in gl.bias.iter_mut().zip(g.col_sums()) {
                *b += s;
            }
            let mut ga = Matrix::zeros(g.rows(), layer.in_dim());
            super::matrix::gemm(1.0, &g, false, &layer.weight, false, 0.0, &mut ga);
            if l > 0 {
                for (v, z) in ga.data_mut().iter_mut().zip(tape.pre[l - 1].data()) {
                    *v *= silu_grad(*z);
                }
            }
            g = ga;
        }
        Ok(g)
    }
}

impl Parameters for Mlp {
    fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|l| [format!("layers.{l}.weight"), format!("layers.{l}.bias")])
            .collect()
    }
}

fn single_row(net: &Mlp, input: &[f64], embed: &[f64]) -> Result<Matrix> {
    if input.len() + embed.len() != net.in_width() {
        return Err(shape_err(
            "mlp input + embed",
            net.in_width(),
            input.len() + embed.len(),
        ));
    }
    let mut row = input.to_vec();
    row.extend_from_slice(embed);
    Matrix::from_vec(1, row.len(), row)
}

/// Forward pass on a single sample.
pub fn mlp_forward(net: &Mlp, input: &[f64], embed: &[f64]) -> Result<Vec<f64>> {
    let x = single_row(net, input, embed)?;
    Ok(net.forward_batch(&x)?.into_vec())
}

/// Reverse pass on a single sample: parameter gradients and the gradient with respect to
/// `input` (the embedding part is dropped).
pub fn mlp_backward(
    net: &Mlp,
    input: &[f64],
    embed: &[f64],
    output_grad: &[f64],
) -> Result<(Mlp, Vec<f64>)> {
    let x = single_row(net, input, embed)?;
    let tape = net.forward_tape(&x)?;
    let g = Matrix::from_vec(1, output_grad.len(), output_grad.to_vec())?;
    let mut grads = net.zeros_like();
    let gx = net.backward(&tape, &g, &mut grads)?;
    Ok((grads, gx.data()[..input.len()].to_vec()))
}

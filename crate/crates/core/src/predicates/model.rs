use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelError;
use crate::graph::{NodeId, Precision, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Identity,
}

/// Output normalization of a predicate network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// One logit, truth `sigmoid(x)`.
    Sigmoid,
    /// `classes` logits, truth `softmax(z)_i` for a class argument `i`.
    Softmax { classes: usize },
}

/// Dense layer `y = act(x W + b)` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Architecture of a feed-forward predicate: `sizes[0]` inputs, hidden
/// layers with `elu`, a linear last layer, then the head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub sizes: Vec<usize>,
    pub head: Head,
}

impl ModelSpec {
    pub fn new(sizes: &[usize], head: Head) -> Self {
        ModelSpec {
            sizes: sizes.to_vec(),
            head,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateModel {
    pub name: String,
    pub layers: Vec<Layer>,
    pub head: Head,
}

/// Glorot-uniform weights and zero biases from a seeded ChaCha stream.
pub fn init_model(name: &str, spec: &ModelSpec, seed: u64) -> Result<PredicateModel, ModelError> {
    if spec.sizes.len() < 2 || spec.sizes.contains(&0) {
        return Err(ModelError::Dimensions(format!(
            "layer sizes {:?} need at least two positive entries",
            spec.sizes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.sizes.len() - 1;
    let layers = spec
        .sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
            Layer {
                weight: Tensor::matrix(fan_in, fan_out, data),
                bias: Tensor::zeros(&[fan_out]),
                activation: if i + 1 < n {
                    Activation::Elu
                } else {
                    Activation::Identity
                },
            }
        })
        .collect();
    PredicateModel::new(name, layers, spec.head)
}

impl PredicateModel {
    /// Validates layer chaining and the head width.
    pub fn new(name: &str, layers: Vec<Layer>, head: Head) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::Dimensions("model has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.rank() != 2 || l.bias.shape() != [l.out_dim()] {
                return Err(ModelError::Dimensions(format!(
                    "layer {i}: weight {:?} and bias {:?} do not conform",
                    l.weight.shape(),
                    l.bias.shape()
                )));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(ModelError::Dimensions(format!(
                    "layer {i} expects {} inputs but layer {} emits {}",
                    l.in_dim(),
                    i - 1,
                    layers[i - 1].out_dim()
                )));
            }
        }
        let out = layers.last().unwrap().out_dim();
        match head {
            Head::Sigmoid if out != 1 => {
                return Err(ModelError::Dimensions(format!(
                    "sigmoid head needs 1 output, last layer has {out}"
                )))
            }
            Head::Softmax { classes } if out != classes => {
                return Err(ModelError::Dimensions(format!(
                    "softmax head over {classes} classes, last layer has {out}"
                )))
            }
            _ => {}
        }
        Ok(PredicateModel {
            name: name.to_string(),
            layers,
            head,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn classes(&self) -> Option<usize> {
        match self.head {
            Head::Sigmoid => None,
            Head::Softmax { classes } => Some(classes),
        }
    }

    /// Parameter tensors in binding order: `w0, b0, w1, b1, ...`.
    pub fn parameters(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.numel() + l.bias.numel()).sum()
    }

    /// Registers the parameters on `tape` as trainable leaves.
    pub fn bind(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.parameters().into_iter().map(|t| tape.param(t)).collect()
    }

    /// Pre-activation outputs (`rows x out`) for a `rows x in` input node.
    pub fn logits(&self, tape: &mut Tape, params: &[NodeId], input: NodeId) -> Result<NodeId, ModelError> {
        if params.len() != 2 * self.layers.len() {
            return Err(ModelError::Binding {
                expected: 2 * self.layers.len(),
                got: params.len(),
            });
        }
        let in_shape = tape.shape(input).to_vec();
        if in_shape.len() != 2 || in_shape[1] != self.input_dim() {
            return Err(ModelError::Dimensions(format!(
                "model `{}` expects rows of width {}, got input {:?}",
                self.name,
                self.input_dim(),
                in_shape
            )));
        }
        let rows = in_shape[0];
        let mut h = input;
        for (l, pair) in self.layers.iter().zip(params.chunks(2)) {
            let z = tape.matmul(h, pair[0])?;
            let b = tape.broadcast(pair[1], &[rows, l.out_dim()], &[1])?;
            let z = tape.add(z, b)?;
            h = match l.activation {
                Activation::Elu => tape.elu(z),
                Activation::Identity => z,
            };
        }
        Ok(h)
    }

    /// Log-truths for each input row: `rows x 1` for a sigmoid head, or
    /// `rows x classes.len()` for a softmax head. Always uses the fused
    /// kernels, never `log(p)`.
    pub fn log_truth(
        &self,
        tape: &mut Tape,
        params: &[NodeId],
        input: NodeId,
        classes: Option<&[usize]>,
    ) -> Result<NodeId, ModelError> {
        let z = self.logits(tape, params, input)?;
        match (self.head, classes) {
            (Head::Sigmoid, None) => Ok(tape.log_sigmoid(z)),
            (Head::Softmax { classes: k }, Some(cs)) => {
                check_classes(cs, k)?;
                let ls = tape.log_softmax(z)?;
                Ok(tape.select(ls, 1, cs)?)
            }
            (Head::Sigmoid, Some(_)) => Err(ModelError::ClassIndex("sigmoid head takes no class index".into())),
            (Head::Softmax { .. }, None) => Err(ModelError::ClassIndex("softmax head requires a class index".into())),
        }
    }

    /// Log-truths of the negated predicate, same layout as [`log_truth`].
    ///
    /// Sigmoid: `log sigmoid(x) - x`. Softmax class `i`:
    /// `log softmax(z)_i + logsumexp_{j != i} z_j - z_i`, with the excluded
    /// log-sum-exp shifted by the maximum of the included logits.
    ///
    /// [`log_truth`]: PredicateModel::log_truth
    pub fn log_not_truth(
        &self,
        tape: &mut Tape,
        params: &[NodeId],
        input: NodeId,
        classes: Option<&[usize]>,
    ) -> Result<NodeId, ModelError> {
        let z = self.logits(tape, params, input)?;
        match (self.head, classes) {
            (Head::Sigmoid, None) => {
                let ls = tape.log_sigmoid(z);
                Ok(tape.sub(ls, z)?)
            }
            (Head::Softmax { classes: k }, Some(cs)) => {
                check_classes(cs, k)?;
                if k < 2 {
                    return Err(ModelError::ClassIndex(
                        "negation of a one-class softmax is undefined".into(),
                    ));
                }
                let rows = tape.shape(z)[0];
                let ls = tape.log_softmax(z)?;
                let mut cols = Vec::with_capacity(cs.len());
                for &i in cs {
                    let others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
                    let rest = tape.select(z, 1, &others)?;
                    let rest_lse = tape.logsumexp(rest, &[1], None)?;
                    let rest_lse = tape.reshape(rest_lse, &[rows, 1])?;
                    let ls_i = tape.select(ls, 1, &[i])?;
                    let z_i = tape.select(z, 1, &[i])?;
                    let sum = tape.add(ls_i, rest_lse)?;
                    cols.push(tape.sub(sum, z_i)?);
                }
                if cols.len() == 1 {
                    Ok(cols[0])
                } else {
                    Ok(tape.concat(&cols, 1)?)
                }
            }
            (Head::Sigmoid, Some(_)) => Err(ModelError::ClassIndex("sigmoid head takes no class index".into())),
            (Head::Softmax { .. }, None) => Err(ModelError::ClassIndex("softmax head requires a class index".into())),
        }
    }
}

fn check_classes(cs: &[usize], k: usize) -> Result<(), ModelError> {
    if let Some(&bad) = cs.iter().find(|&&c| c >= k) {
        return Err(ModelError::ClassIndex(format!(
            "class {bad} out of range for {k} classes"
        )));
    }
    Ok(())
}

fn eval_rows(
    model: &PredicateModel,
    inputs: &Tensor,
    class_index: Option<usize>,
    precision: Precision,
    negated: bool,
) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::with_precision(precision);
    let params = model.bind(&mut tape);
    let x = tape.constant(inputs.clone());
    let cls = class_index.map(|c| [c]);
    let out = if negated {
        model.log_not_truth(&mut tape, &params, x, cls.as_ref().map(|c| &c[..]))?
    } else {
        model.log_truth(&mut tape, &params, x, cls.as_ref().map(|c| &c[..]))?
    };
    Ok(tape.value(out).data().to_vec())
}

/// `log P(row)` for each row of `inputs` (`rows x input_dim`).
pub fn log_forward(
    model: &PredicateModel,
    inputs: &Tensor,
    class_index: Option<usize>,
) -> Result<Vec<f64>, ModelError> {
    eval_rows(model, inputs, class_index, Precision::F64, false)
}

/// `log(1 - P(row))` for each row of `inputs`, through the stable
/// log-negation kernels.
pub fn log_not_forward(
    model: &PredicateModel,
    inputs: &Tensor,
    class_index: Option<usize>,
) -> Result<Vec<f64>, ModelError> {
    eval_rows(model, inputs, class_index, Precision::F64, true)
}

/// [`log_forward`] / [`log_not_forward`] at a chosen precision.
pub fn log_forward_with(
    model: &PredicateModel,
    inputs: &Tensor,
    class_index: Option<usize>,
    precision: Precision,
    negated: bool,
) -> Result<Vec<f64>, ModelError> {
    eval_rows(model, inputs, class_index, precision, negated)
}

/// Cosine similarity `x . y / (|x| |y|)`.
pub fn cosine_predicate(x: &[f64], y: &[f64]) -> Result<f64, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::Dimensions(format!(
            "cosine of vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(ModelError::ZeroVector);
    }
    Ok(x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / (nx * ny))
}

//! Plain-text checkpoints. Floats are written with the shortest
//! representation that parses back to the same bits.

use std::fmt::Write as _;
use std::path::Path;

use super::model::{Activation, Head, Layer, PredicateModel};
use super::ModelError;
use crate::graph::Tensor;

const MAGIC: &str = "logltn-checkpoint 1";

pub fn checkpoint_to_string(models: &[&PredicateModel]) -> String {
    let mut s = String::new();
    s.push_str(MAGIC);
    s.push('\n');
    for m in models {
        let head = match m.head {
            Head::Sigmoid => "sigmoid".to_string(),
            Head::Softmax { classes } => format!("softmax {classes}"),
        };
        let _ = writeln!(s, "model {} {} layers {}", m.name, head, m.layers.len());
        for l in &m.layers {
            let act = match l.activation {
                Activation::Elu => "elu",
                Activation::Identity => "identity",
            };
            let _ = writeln!(s, "layer {} {} {}", l.in_dim(), l.out_dim(), act);
            write_row(&mut s, "w", l.weight.data());
            write_row(&mut s, "b", l.bias.data());
        }
    }
    s
}

fn write_row(s: &mut String, tag: &str, values: &[f64]) {
    s.push_str(tag);
    for v in values {
        let _ = write!(s, " {v}");
    }
    s.push('\n');
}

pub fn checkpoint_from_str(text: &str) -> Result<Vec<PredicateModel>, ModelError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let bad = |line: usize, msg: &str| ModelError::Checkpoint(format!("line {line}: {msg}"));
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        Some((n, _)) => return Err(bad(n, "missing checkpoint header")),
        None => return Err(ModelError::Checkpoint("empty checkpoint".into())),
    }
    let mut models = Vec::new();
    while let Some((n, line)) = lines.next() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        let (name, head, n_layers) = match tok.as_slice() {
            ["model", name, "sigmoid", "layers", k] => (*name, Head::Sigmoid, *k),
            ["model", name, "softmax", c, "layers", k] => (
                *name,
                Head::Softmax {
                    classes: c.parse().map_err(|_| bad(n, "bad class count"))?,
                },
                *k,
            ),
            _ => return Err(bad(n, "expected a model line")),
        };
        let n_layers: usize = n_layers.parse().map_err(|_| bad(n, "bad layer count"))?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (ln, line) = lines.next().ok_or_else(|| bad(n, "truncated model"))?;
            let tok: Vec<&str> = line.split_whitespace().collect();
            let (din, dout, act) = match tok.as_slice() {
                ["layer", i, o, act] => (
                    i.parse::<usize>().map_err(|_| bad(ln, "bad layer size"))?,
                    o.parse::<usize>().map_err(|_| bad(ln, "bad layer size"))?,
                    match *act {
                        "elu" => Activation::Elu,
                        "identity" => Activation::Identity,
                        _ => return Err(bad(ln, "unknown activation")),
                    },
                ),
                _ => return Err(bad(ln, "expected a layer line")),
            };
            let w = read_row(lines.next(), "w", din * dout, ln)?;
            let b = read_row(lines.next(), "b", dout, ln)?;
            layers.push(Layer {
                weight: Tensor::matrix(din, dout, w),
                bias: Tensor::vector(b),
                activation: act,
            });
        }
        models.push(PredicateModel::new(name, layers, head)?);
    }
    Ok(models)
}

fn read_row(line: Option<(usize, &str)>, tag: &str, len: usize, after: usize) -> Result<Vec<f64>, ModelError> {
    let (n, line) = line.ok_or_else(|| ModelError::Checkpoint(format!("line {after}: truncated layer")))?;
    let mut tok = line.split_whitespace();
    if tok.next() != Some(tag) {
        return Err(ModelError::Checkpoint(format!("line {n}: expected `{tag}` row")));
    }
    let vals = tok
        .map(|t| t.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ModelError::Checkpoint(format!("line {n}: {e}")))?;
    if vals.len() != len {
        return Err(ModelError::Checkpoint(format!(
            "line {n}: expected {len} values, found {}",
            vals.len()
        )));
    }
    Ok(vals)
}

pub fn save_checkpoint(path: &Path, models: &[&PredicateModel]) -> Result<(), ModelError> {
    std::fs::write(path, checkpoint_to_string(models)).map_err(|e| ModelError::Io(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<PredicateModel>, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(e.to_string()))?;
    checkpoint_from_str(&text)
}

//! Smooth aggregators, as plain functions on slices and as tape
//! compositions over masked axes.

use super::SemanticsError;
use crate::graph::{group_counts, logsumexp_slice, GraphError, NodeId, Tape, Tensor};

fn nonempty(x: &[f64], op: &'static str) -> Result<(), SemanticsError> {
    if x.is_empty() {
        Err(SemanticsError::Graph(GraphError::EmptyReduction { op }))
    } else {
        Ok(())
    }
}

/// LogMeanExp: `(1/a) log(mean(exp(a x)))`, shifted by the maximum.
pub fn lme(x: &[f64], alpha: f64) -> Result<f64, SemanticsError> {
    nonempty(x, "lme")?;
    let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
    Ok((logsumexp_slice(&scaled) - (x.len() as f64).ln()) / alpha)
}

/// Shifted LogSumExp with sharpness `alpha`.
pub fn lse(x: &[f64], alpha: f64) -> Result<f64, SemanticsError> {
    nonempty(x, "lse")?;
    let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
    Ok(logsumexp_slice(&scaled) / alpha)
}

/// Power mean `(mean x^p)^(1/p)`.
pub fn pmean(x: &[f64], p: f64) -> Result<f64, SemanticsError> {
    nonempty(x, "pmean")?;
    Ok((x.iter().map(|v| v.powf(p)).sum::<f64>() / x.len() as f64).powf(1.0 / p))
}

/// `1 - pmean(1 - x)`, a smooth minimum.
pub fn pmean_error(x: &[f64], p: f64) -> Result<f64, SemanticsError> {
    let comp: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
    Ok(1.0 - pmean(&comp, p)?)
}

/// Affine squeeze onto `[eps, 1 - eps]`, applied before explicit logs
/// and power means. Unlike a hard clamp it keeps gradients alive.
pub fn squeeze(tape: &mut Tape, x: NodeId, eps: f64) -> Result<NodeId, SemanticsError> {
    let scaled = tape.scalar_mul(x, 1.0 - 2.0 * eps);
    let shift = tape.constant(Tensor::full(tape.shape(x), eps));
    Ok(tape.add(scaled, shift)?)
}

/// `1 - x`.
pub fn complement(tape: &mut Tape, x: NodeId) -> Result<NodeId, SemanticsError> {
    let one = tape.constant(Tensor::full(tape.shape(x), 1.0));
    Ok(tape.sub(one, x)?)
}

pub fn lme_node(
    tape: &mut Tape,
    x: NodeId,
    axes: &[usize],
    mask: Option<&[bool]>,
    alpha: f64,
) -> Result<NodeId, SemanticsError> {
    let counts = group_counts(tape.shape(x), axes, mask)?;
    let l = lse_node(tape, x, axes, mask, alpha)?;
    let offset = counts.map(|c| -c.ln() / alpha);
    let offset = tape.constant(offset);
    Ok(tape.add(l, offset)?)
}

pub fn lse_node(
    tape: &mut Tape,
    x: NodeId,
    axes: &[usize],
    mask: Option<&[bool]>,
    alpha: f64,
) -> Result<NodeId, SemanticsError> {
    let s = tape.scalar_mul(x, alpha);
    let l = tape.logsumexp(s, axes, mask)?;
    Ok(tape.scalar_mul(l, 1.0 / alpha))
}

/// Power mean of squeezed inputs.
pub fn pmean_node(
    tape: &mut Tape,
    x: NodeId,
    axes: &[usize],
    mask: Option<&[bool]>,
    p: f64,
    eps: f64,
) -> Result<NodeId, SemanticsError> {
    let x = squeeze(tape, x, eps)?;
    let xp = tape.power(x, p);
    let m = tape.mean(xp, axes, mask)?;
    Ok(tape.power(m, 1.0 / p))
}

pub fn pmean_error_node(
    tape: &mut Tape,
    x: NodeId,
    axes: &[usize],
    mask: Option<&[bool]>,
    p: f64,
    eps: f64,
) -> Result<NodeId, SemanticsError> {
    let c = complement(tape, x)?;
    let m = pmean_node(tape, c, axes, mask, p, eps)?;
    complement(tape, m)
}

use super::{GraphError, NodeId, Tape, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Outcome of a central-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |numeric|)` over all entries.
    pub max_rel_error: f64,
    /// `(parameter, flat element)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences.
///
/// `f` receives a fresh tape and one parameter node per tensor in `point`
/// and returns the scalar root.
pub fn grad_check<F, E>(f: F, point: &[Tensor], eps: f64) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, E>,
    E: From<GraphError>,
{
    let eval = |pt: &[Tensor]| -> Result<(Tape, NodeId, Vec<NodeId>), E> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = pt.iter().map(|t| tape.param(t.clone())).collect();
        let root = f(&mut tape, &ids)?;
        Ok((tape, root, ids))
    };
    let (tape, root, ids) = eval(point)?;
    let grads = tape.backward(root)?;
    let analytic: Vec<Tensor> = ids
        .iter()
        .zip(point)
        .map(|(&id, t)| grads.get_or_zeros(id, t.shape()))
        .collect();

    let mut numeric = Vec::with_capacity(point.len());
    let mut max_rel_error = 0.0f64;
    let mut worst = None;
    let mut probe = point.to_vec();
    for (pi, t) in point.iter().enumerate() {
        let mut num = Tensor::zeros(t.shape());
        for e in 0..t.numel() {
            let orig = t.data()[e];
            probe[pi].data_mut()[e] = orig + eps;
            let (tp, rp, _) = eval(&probe)?;
            let plus = tp.value(rp).item();
            probe[pi].data_mut()[e] = orig - eps;
            let (tm, rm, _) = eval(&probe)?;
            let minus = tm.value(rm).item();
            probe[pi].data_mut()[e] = orig;
            let n = (plus - minus) / (2.0 * eps);
            num.data_mut()[e] = n;
            let a = analytic[pi].data()[e];
            let rel = (a - n).abs() / n.abs().max(1.0);
            if rel > max_rel_error || rel.is_nan() {
                max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                worst = Some((pi, e));
            }
        }
        numeric.push(num);
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst,
        analytic,
        numeric,
    })
}

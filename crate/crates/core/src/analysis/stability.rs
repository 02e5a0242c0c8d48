use crate::graph::{NodeId, Precision, Tape, Tensor};

/// Inputs of the standard table.
pub const STABILITY_INPUTS: [f64; 5] = [0.0, 10.0, 100.0, 1000.0, 10000.0];

/// Value and derivative of `log(1 - sigmoid(x))`, composed naively and
/// through the fused kernel `log_sigmoid(x) - x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    pub x: f64,
    pub naive_value: f64,
    pub naive_grad: f64,
    pub fused_value: f64,
    pub fused_grad: f64,
}

/// `log(1 - 1 / (1 + exp(-x)))` from primitives.
fn naive(t: &mut Tape, x: NodeId) -> NodeId {
    let nx = t.neg(x);
    let e = t.exp(nx);
    let one = t.constant(Tensor::scalar(1.0));
    let d = t.add(one, e).expect("scalars");
    let s = t.power(d, -1.0);
    let one = t.constant(Tensor::scalar(1.0));
    let c = t.sub(one, s).expect("scalars");
    t.log(c)
}

fn fused(t: &mut Tape, x: NodeId) -> NodeId {
    let ls = t.log_sigmoid(x);
    t.sub(ls, x).expect("scalars")
}

fn value_and_grad(x: f64, precision: Precision, build: fn(&mut Tape, NodeId) -> NodeId) -> (f64, f64) {
    let mut t = Tape::with_precision(precision);
    let p = t.param(Tensor::scalar(x));
    let y = build(&mut t, p);
    let g = t.backward(y).expect("scalar root");
    (t.value(y).item(), g.get_or_zeros(p, &[]).item())
}

/// Evaluates both formulations at each input. Non-finite results are
/// reported as they come out.
pub fn stability_table(inputs: &[f64], precision: Precision) -> Vec<StabilityRow> {
    inputs
        .iter()
        .map(|&x| {
            let (naive_value, naive_grad) = value_and_grad(x, precision, naive);
            let (fused_value, fused_grad) = value_and_grad(x, precision, fused);
            StabilityRow {
                x,
                naive_value,
                naive_grad,
                fused_value,
                fused_grad,
            }
        })
        .collect()
}

pub fn stability_csv(rows: &[StabilityRow]) -> String {
    let mut s = String::from("x,naive_value,naive_grad,fused_value,fused_grad\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.x, r.naive_value, r.naive_grad, r.fused_value, r.fused_grad
        ));
    }
    s
}

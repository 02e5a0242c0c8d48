use std::collections::BTreeMap;
use std::fmt::Write as _;

/// One optimization step as seen before the parameter update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub loss: f64,
    /// Knowledgebase satisfaction in `[0, 1]` (exp of log-sat in log space).
    pub sat: f64,
    pub alpha: f64,
    pub p: f64,
    pub formula_sat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub formula_names: Vec<String>,
    pub rows: Vec<StepRow>,
    /// Final metrics, written as `key=value` lines in key order.
    pub metrics: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn final_row(&self) -> Option<&StepRow> {
        self.rows.last()
    }

    pub fn set_metric(&mut self, key: &str, value: impl ToString) {
        self.metrics.insert(key.to_string(), value.to_string());
    }

    /// `step,loss,sat,alpha,p,sat_<name>...`, floats in shortest
    /// round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss,sat,alpha,p");
        for n in &self.formula_names {
            let _ = write!(s, ",sat_{n}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{},{}", r.step, r.loss, r.sat, r.alpha, r.p);
            for v in &r.formula_sat {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn metrics_text(&self) -> String {
        self.metrics.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ExperimentError;
use crate::formula::{parse_kb, Knowledgebase};
use crate::graph::{Tape, Tensor};
use crate::predicates::{init_model, Domain, GroundingEnv, Head, ModelSpec, PredicateGrounding, PredicateModel};
use crate::semantics::SemanticsConfig;
use crate::training::{adjusted_rand_index, train, RunRecord, TrainConfig};

/// Gaussian blobs for unsupervised clustering.
#[derive(Debug, Clone)]
pub struct ClusterOptions {
    pub points: usize,
    pub dim: usize,
    pub clusters: usize,
    /// Per-coordinate standard deviation of each blob.
    pub spread: f64,
    /// Blob centers are drawn uniformly from `[-box_half, box_half]^dim`.
    pub box_half: f64,
    /// Minimum distance between blob centers, in units of `spread`.
    pub min_separation: f64,
    /// Percentile of pairwise distances used as the closeness threshold.
    pub percentile: f64,
    pub hidden: Vec<usize>,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            points: 200,
            dim: 2,
            clusters: 5,
            spread: 1.0,
            box_half: 6.0,
            min_separation: 4.0,
            percentile: 2.5,
            hidden: vec![16, 16],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterTask {
    pub points: Tensor,
    pub labels: Vec<usize>,
    pub clusters: usize,
    pub threshold: f64,
    pub hidden: Vec<usize>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Linear-interpolated percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl ClusterTask {
    pub fn generate(opts: &ClusterOptions, seed: u64) -> Result<Self, ExperimentError> {
        if opts.clusters == 0 || opts.points < 2 * opts.clusters || opts.dim == 0 {
            return Err(ExperimentError::Data(format!(
                "need at least two points per cluster, got {} points for {} clusters",
                opts.points, opts.clusters
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let min_dist = opts.min_separation * opts.spread;
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(opts.clusters);
        let mut attempts = 0;
        while centers.len() < opts.clusters {
            attempts += 1;
            if attempts > 100_000 {
                return Err(ExperimentError::Data(format!(
                    "cannot place {} centers {min_dist} apart in the box",
                    opts.clusters
                )));
            }
            let c: Vec<f64> = (0..opts.dim)
                .map(|_| rng.random_range(-opts.box_half..=opts.box_half))
                .collect();
            if centers.iter().all(|o| distance(o, &c) >= min_dist) {
                centers.push(c);
            }
        }
        let noise = Normal::new(0.0, opts.spread).map_err(|e| ExperimentError::Data(e.to_string()))?;
        let mut labels: Vec<usize> = (0..opts.points).map(|i| i % opts.clusters).collect();
        labels.shuffle(&mut rng);
        let mut data = Vec::with_capacity(opts.points * opts.dim);
        for &l in &labels {
            for c in &centers[l] {
                data.push(c + noise.sample(&mut rng));
            }
        }
        let points = Tensor::matrix(opts.points, opts.dim, data);
        let threshold = Self::percentile_threshold(&points, opts.percentile);
        if threshold.is_nan() || threshold <= 0.0 {
            return Err(ExperimentError::Data("closeness threshold is not positive".into()));
        }
        Ok(ClusterTask {
            points,
            labels,
            clusters: opts.clusters,
            threshold,
            hidden: opts.hidden.clone(),
        })
    }

    /// Percentile of the euclidean distances over all unordered pairs.
    pub fn percentile_threshold(points: &Tensor, q: f64) -> f64 {
        let (n, d) = (points.shape()[0], points.shape()[1]);
        let x = points.data();
        let mut dists = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                dists.push(distance(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]));
            }
        }
        dists.sort_by(f64::total_cmp);
        percentile(&dists, q)
    }

    pub fn len(&self) -> usize {
        self.points.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major `n x n` mask of distinct pairs closer than the threshold.
    pub fn close_mask(&self) -> Vec<bool> {
        let (n, d) = (self.len(), self.points.shape()[1]);
        let x = self.points.data();
        let mut mask = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                mask[i * n + j] = i != j && distance(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]) < self.threshold;
            }
        }
        mask
    }

    pub fn to_csv(&self) -> String {
        let d = self.points.shape()[1];
        let mut s: String = (0..d).map(|k| format!("x{k},")).collect();
        s.push_str("label\n");
        for (i, l) in self.labels.iter().enumerate() {
            for v in &self.points.data()[i * d..(i + 1) * d] {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!("{l}\n"));
        }
        s
    }
}

pub const CLUSTER_KB: &str = "\
# every point belongs to some cluster
point_assigned: forall x (exists c C(x, c));
# every cluster holds some point
cluster_used: forall c (exists x C(x, c));
# close points share their cluster
close_pairs: forall (c, x, y | close) (C(x, c) -> C(y, c));
";

/// Knowledgebase and environment with a freshly initialized `C` model.
pub fn build_cluster_kb(task: &ClusterTask, model_seed: u64) -> Result<(Knowledgebase, GroundingEnv), ExperimentError> {
    let kb = parse_kb(CLUSTER_KB)?;
    let mut env = GroundingEnv::new();
    env.add_variable("x", Domain::Features(task.points.clone()))?;
    env.add_variable("y", Domain::Features(task.points.clone()))?;
    env.add_variable("c", Domain::Indices((0..task.clusters).collect()))?;
    let mask = task.close_mask();
    if !mask.iter().any(|&b| b) {
        return Err(ExperimentError::Data("closeness guard selects no pair".into()));
    }
    env.add_guard("close", &["x", "y"], mask)?;
    let mut sizes = vec![task.points.shape()[1]];
    sizes.extend(&task.hidden);
    sizes.push(task.clusters);
    let model = init_model(
        "C",
        &ModelSpec::new(&sizes, Head::Softmax { classes: task.clusters }),
        model_seed,
    )?;
    env.add_predicate("C", PredicateGrounding::Neural(model));
    Ok((kb, env))
}

/// Index of the largest logit per row.
pub fn argmax_rows(model: &PredicateModel, inputs: &Tensor) -> Result<Vec<usize>, ExperimentError> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape);
    let x = tape.constant(inputs.clone());
    let z = model.logits(&mut tape, &params, x)?;
    let k = tape.shape(z)[1];
    Ok(tape
        .value(z)
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0
        })
        .collect())
}

/// ARI of the hard cluster assignments against the generating labels.
pub fn evaluate_cluster(task: &ClusterTask, env: &GroundingEnv) -> Result<f64, ExperimentError> {
    let model = env
        .model("C")
        .ok_or_else(|| ExperimentError::Data("environment has no `C` model".into()))?;
    let pred = argmax_rows(model, &task.points)?;
    Ok(adjusted_rand_index(&pred, &task.labels)?)
}

/// Trains the clustering model and records the final ARI as `ari`.
pub fn run_cluster(task: &ClusterTask, sem: &SemanticsConfig, tc: &TrainConfig) -> Result<RunRecord, ExperimentError> {
    run_cluster_with(task, &parse_kb(CLUSTER_KB)?, sem, tc)
}

/// Like [`run_cluster`] with another knowledgebase over the same symbols.
pub fn run_cluster_with(
    task: &ClusterTask,
    kb: &Knowledgebase,
    sem: &SemanticsConfig,
    tc: &TrainConfig,
) -> Result<RunRecord, ExperimentError> {
    let (_, mut env) = build_cluster_kb(task, tc.seed)?;
    let mut record = train(kb, &mut env, sem, tc)?;
    let ari = evaluate_cluster(task, &env)?;
    record.set_metric("ari", ari);
    record.set_metric("semantics", sem.kind);
    record.set_metric("seed", tc.seed);
    record.set_metric("threshold", task.threshold);
    Ok(record)
}

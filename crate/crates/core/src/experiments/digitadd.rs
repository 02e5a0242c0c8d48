use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::cluster::argmax_rows;
use super::ExperimentError;
use crate::formula::{parse_kb, Knowledgebase};
use crate::graph::Tensor;
use crate::predicates::{init_model, Domain, GroundingEnv, Head, ModelSpec, PredicateGrounding};
use crate::semantics::SemanticsConfig;
use crate::training::{train_with, BatchFeeder, RunRecord, TrainConfig, TrainError};

pub const DIGITS: usize = 10;
pub const MAX_SUM: usize = 198;
/// Minibatch size when the training config leaves it unset.
pub const DEFAULT_BATCH: usize = 32;

/// Synthetic "digit images": one Gaussian cluster of features per digit.
#[derive(Debug, Clone)]
pub struct DigitAddOptions {
    pub dim: usize,
    pub sigma: f64,
    /// Minimum distance between class means, in units of `sigma`.
    pub min_separation: f64,
    pub train_samples: usize,
    pub test_digits: usize,
    pub test_samples: usize,
    /// Rescale every feature to zero mean and unit variance over the
    /// training images.
    pub standardize: bool,
    pub hidden: Vec<usize>,
}

impl Default for DigitAddOptions {
    fn default() -> Self {
        DigitAddOptions {
            dim: 8,
            sigma: 1.0,
            min_separation: 6.0,
            train_samples: 1024,
            test_digits: 1000,
            test_samples: 500,
            standardize: true,
            hidden: vec![100, 84],
        }
    }
}

/// Two two-digit numbers and their sum; the digits are hidden from
/// training.
#[derive(Debug, Clone, PartialEq)]
pub struct AddSample {
    /// Feature rows of `x1, x2, y1, y2`.
    pub images: [Vec<f64>; 4],
    pub digits: [usize; 4],
    pub sum: usize,
}

#[derive(Debug, Clone)]
pub struct DigitAddTask {
    pub centers: Tensor,
    pub sigma: f64,
    pub train: Vec<AddSample>,
    pub test_images: Tensor,
    pub test_labels: Vec<usize>,
    pub test_samples: Vec<AddSample>,
    pub hidden: Vec<usize>,
}

/// All `(d1, d2, d3, d4)` with `10 d1 + d2 + 10 d3 + d4 = n`.
pub fn valid_combos(n: usize) -> Result<Vec<[usize; 4]>, ExperimentError> {
    if n > MAX_SUM {
        return Err(ExperimentError::Data(format!("sum {n} outside [0, {MAX_SUM}]")));
    }
    let mut out = Vec::new();
    for d1 in 0..DIGITS {
        for d2 in 0..DIGITS {
            for d3 in 0..DIGITS {
                for d4 in 0..DIGITS {
                    if 10 * d1 + d2 + 10 * d3 + d4 == n {
                        out.push([d1, d2, d3, d4]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Guard mask over `(sample, d1, d2, d3, d4)` selecting each sample's
/// valid digit combinations.
pub fn sum_mask(sums: &[usize]) -> Result<Vec<bool>, ExperimentError> {
    let block = DIGITS.pow(4);
    let mut mask = vec![false; sums.len() * block];
    for (b, &n) in sums.iter().enumerate() {
        for [d1, d2, d3, d4] in valid_combos(n)? {
            mask[b * block + ((d1 * DIGITS + d2) * DIGITS + d3) * DIGITS + d4] = true;
        }
    }
    Ok(mask)
}

impl DigitAddTask {
    pub fn generate(opts: &DigitAddOptions, seed: u64) -> Result<Self, ExperimentError> {
        if opts.dim == 0 || opts.sigma.is_nan() || opts.sigma <= 0.0 {
            return Err(ExperimentError::Data(
                "feature dimension and sigma must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale =
            Normal::new(0.0, opts.min_separation * opts.sigma).map_err(|e| ExperimentError::Data(e.to_string()))?;
        // rejection sampling until every pair of means is far enough apart
        let centers = loop {
            let c: Vec<f64> = (0..DIGITS * opts.dim).map(|_| scale.sample(&mut rng)).collect();
            let ok = (0..DIGITS).all(|i| {
                (i + 1..DIGITS).all(|j| {
                    let d: f64 = (0..opts.dim)
                        .map(|k| (c[i * opts.dim + k] - c[j * opts.dim + k]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    d >= opts.min_separation * opts.sigma
                })
            });
            if ok {
                break Tensor::matrix(DIGITS, opts.dim, c);
            }
        };
        let mut task = DigitAddTask {
            centers,
            sigma: opts.sigma,
            train: Vec::new(),
            test_images: Tensor::zeros(&[0, opts.dim]),
            test_labels: Vec::new(),
            test_samples: Vec::new(),
            hidden: opts.hidden.clone(),
        };
        task.train = (0..opts.train_samples).map(|_| task.sample(&mut rng)).collect();
        task.test_samples = (0..opts.test_samples).map(|_| task.sample(&mut rng)).collect();
        let mut imgs = Vec::with_capacity(opts.test_digits * opts.dim);
        for _ in 0..opts.test_digits {
            let d = rng.random_range(0..DIGITS);
            imgs.extend(task.image(d, &mut rng));
            task.test_labels.push(d);
        }
        task.test_images = Tensor::matrix(opts.test_digits, opts.dim, imgs);
        if opts.standardize {
            task.standardize();
        }
        Ok(task)
    }

    /// Per-feature affine map to zero mean and unit variance over the
    /// training images, applied to every image and to the class means.
    fn standardize(&mut self) {
        let d = self.dim();
        let rows: Vec<&Vec<f64>> = self.train.iter().flat_map(|s| s.images.iter()).collect();
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let std: Vec<f64> = (0..d)
            .map(|k| {
                let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let fix = |row: &mut [f64]| {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - mean[k]) / std[k];
            }
        };
        for s in self.train.iter_mut().chain(self.test_samples.iter_mut()) {
            for img in s.images.iter_mut() {
                fix(img);
            }
        }
        for t in [&mut self.test_images, &mut self.centers] {
            let mut data = t.data().to_vec();
            data.chunks_mut(d).for_each(fix);
            *t = Tensor::new(t.shape().to_vec(), data).expect("shape is unchanged");
        }
    }

    pub fn dim(&self) -> usize {
        self.centers.shape()[1]
    }

    fn image(&self, digit: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dim();
        let noise = Normal::new(0.0, self.sigma).unwrap();
        self.centers.data()[digit * d..(digit + 1) * d]
            .iter()
            .map(|c| c + noise.sample(rng))
            .collect()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> AddSample {
        let digits = [0; 4].map(|_| rng.random_range(0..DIGITS));
        let images = digits.map(|d| self.image(d, rng));
        AddSample {
            images,
            digits,
            sum: 10 * digits[0] + digits[1] + 10 * digits[2] + digits[3],
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("split,sum,d1,d2,d3,d4\n");
        for (split, set) in [("train", &self.train), ("test", &self.test_samples)] {
            for a in set {
                s.push_str(&format!(
                    "{split},{},{},{},{},{}\n",
                    a.sum, a.digits[0], a.digits[1], a.digits[2], a.digits[3]
                ));
            }
        }
        s
    }
}

pub const DIGITADD_KB: &str = "\
addition: forall (x1, x2, y1, y2) (exists (d1, d2, d3, d4 | sum_ok)
    (digit(x1, d1) and digit(x2, d2) and digit(y1, d3) and digit(y2, d4)));
";

/// Replaces the image variables and the `sum_ok` guard with `batch`.
pub fn set_digitadd_batch(env: &mut GroundingEnv, batch: &[AddSample]) -> Result<(), ExperimentError> {
    if batch.is_empty() {
        return Err(ExperimentError::Data("empty digit-add batch".into()));
    }
    let d = batch[0].images[0].len();
    for name in ["x1", "x2", "y1", "y2"] {
        env.variables.remove(name);
    }
    for (k, name) in ["x1", "x2", "y1", "y2"].iter().enumerate() {
        let data: Vec<f64> = batch.iter().flat_map(|s| s.images[k].iter().copied()).collect();
        env.add_aligned_variable(name, Domain::Features(Tensor::matrix(batch.len(), d, data)), "sample")?;
    }
    let sums: Vec<usize> = batch.iter().map(|s| s.sum).collect();
    env.add_guard("sum_ok", &["x1", "d1", "d2", "d3", "d4"], sum_mask(&sums)?)?;
    Ok(())
}

/// Knowledgebase and environment for one batch, with a fresh `digit` model.
pub fn build_digitadd_kb(
    batch: &[AddSample],
    hidden: &[usize],
    model_seed: u64,
) -> Result<(Knowledgebase, GroundingEnv), ExperimentError> {
    let kb = parse_kb(DIGITADD_KB)?;
    let mut env = GroundingEnv::new();
    set_digit_vars(&mut env)?;
    set_digitadd_batch(&mut env, batch)?;
    let mut sizes = vec![batch.first().map_or(0, |s| s.images[0].len())];
    sizes.extend(hidden);
    sizes.push(DIGITS);
    let model = init_model(
        "digit",
        &ModelSpec::new(&sizes, Head::Softmax { classes: DIGITS }),
        model_seed,
    )?;
    env.add_predicate("digit", PredicateGrounding::Neural(model));
    Ok((kb, env))
}

fn set_digit_vars(env: &mut GroundingEnv) -> Result<(), ExperimentError> {
    for name in ["d1", "d2", "d3", "d4"] {
        env.add_variable(name, Domain::Indices((0..DIGITS).collect()))?;
    }
    Ok(())
}

/// Draws shuffled minibatches from the training samples, reshuffling
/// after each epoch.
pub struct DigitAddFeeder<'t> {
    samples: &'t [AddSample],
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl<'t> DigitAddFeeder<'t> {
    pub fn new(samples: &'t [AddSample], batch_size: usize, seed: u64) -> Self {
        DigitAddFeeder {
            samples,
            order: (0..samples.len()).collect(),
            cursor: samples.len(),
            batch_size: batch_size.min(samples.len()),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba7c),
        }
    }

    pub fn next_batch(&mut self) -> Vec<AddSample> {
        if self.cursor + self.batch_size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let idx = &self.order[self.cursor..self.cursor + self.batch_size];
        self.cursor += self.batch_size;
        idx.iter().map(|&i| self.samples[i].clone()).collect()
    }
}

impl BatchFeeder for DigitAddFeeder<'_> {
    fn feed(&mut self, env: &mut GroundingEnv, _step: usize) -> Result<(), TrainError> {
        let batch = self.next_batch();
        set_digitadd_batch(env, &batch).map_err(|e| TrainError::Data(e.to_string()))
    }
}

/// `(digit accuracy, sum accuracy)` on held-out data.
pub fn evaluate_digitadd(task: &DigitAddTask, env: &GroundingEnv) -> Result<(f64, f64), ExperimentError> {
    let model = env
        .model("digit")
        .ok_or_else(|| ExperimentError::Data("environment has no `digit` model".into()))?;
    let pred = argmax_rows(model, &task.test_images)?;
    let hits = pred.iter().zip(&task.test_labels).filter(|(p, t)| p == t).count();
    let digit_acc = hits as f64 / task.test_labels.len().max(1) as f64;
    let d = task.dim();
    let mut sum_hits = 0;
    let rows: Vec<f64> = task
        .test_samples
        .iter()
        .flat_map(|s| s.images.iter().flatten().copied())
        .collect();
    let all = argmax_rows(model, &Tensor::matrix(task.test_samples.len() * 4, d, rows))?;
    for (s, p) in task.test_samples.iter().zip(all.chunks(4)) {
        if 10 * p[0] + p[1] + 10 * p[2] + p[3] == s.sum {
            sum_hits += 1;
        }
    }
    let sum_acc = sum_hits as f64 / task.test_samples.len().max(1) as f64;
    Ok((digit_acc, sum_acc))
}

/// Trains the digit classifier from sums only. Metrics: `digit_accuracy`,
/// `sum_accuracy`.
pub fn run_digitadd(
    task: &DigitAddTask,
    sem: &SemanticsConfig,
    tc: &TrainConfig,
) -> Result<RunRecord, ExperimentError> {
    run_digitadd_with(task, &parse_kb(DIGITADD_KB)?, sem, tc)
}

/// The environment [`run_digitadd`] starts from: the first minibatch
/// and a fresh model.
pub fn initial_digitadd_env(task: &DigitAddTask, tc: &TrainConfig) -> Result<GroundingEnv, ExperimentError> {
    let mut feeder = DigitAddFeeder::new(&task.train, tc.batch_size.unwrap_or(DEFAULT_BATCH), tc.seed);
    let first = feeder.next_batch();
    Ok(build_digitadd_kb(&first, &task.hidden, tc.seed)?.1)
}

/// Like [`run_digitadd`] with another knowledgebase over the same symbols.
pub fn run_digitadd_with(
    task: &DigitAddTask,
    kb: &Knowledgebase,
    sem: &SemanticsConfig,
    tc: &TrainConfig,
) -> Result<RunRecord, ExperimentError> {
    let mut env = initial_digitadd_env(task, tc)?;
    // a fresh feeder, so step 0 sees the batch the environment was built on
    let mut feeder = DigitAddFeeder::new(&task.train, tc.batch_size.unwrap_or(DEFAULT_BATCH), tc.seed);
    let mut record = train_with(kb, &mut env, sem, tc, &mut feeder)?;
    let (digit_acc, sum_acc) = evaluate_digitadd(task, &env)?;
    record.set_metric("digit_accuracy", digit_acc);
    record.set_metric("sum_accuracy", sum_acc);
    record.set_metric("semantics", sem.kind);
    record.set_metric("seed", tc.seed);
    Ok(record)
}

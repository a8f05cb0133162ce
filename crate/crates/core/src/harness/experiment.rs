use std::path::Path;
use std::time::Instant;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::suite::{DomainSuite, DomainTag};
use crate::analysis::{cka, model_sharpness, CkaValue};
use crate::error::{Error, Result};
use crate::models::{accuracy, cross_entropy, perplexity, Batch, Checkpoint, Mlp, ParameterSet, PassCounter};
use crate::optim::{Algorithm, OptimizerState, StepReport};

/// RNG stream of minibatch sampling.
const BATCH_STREAM: u64 = 1;
/// RNG stream of input noise.
const NOISE_STREAM: u64 = 2;
/// RNG stream of sharpness random starts.
const SHARPNESS_STREAM: u64 = 3;

/// Largest trust-region size counted as "within the ASAM radius".
const D_REFERENCE_RADIUS: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub domain: String,
    pub tag: DomainTag,
    pub accuracy: f64,
    pub nll: f64,
    pub perplexity: f64,
}

/// Totals over every optimizer step of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub steps: usize,
    pub forwards: usize,
    pub backwards: usize,
    pub final_loss: Option<f64>,
    pub mean_d: Option<f64>,
    pub max_d: Option<f64>,
    /// Fraction of measured sizes `d ≤ 0.5`.
    pub d_within_reference: Option<f64>,
    pub degenerate_steps: usize,
}

impl StepSummary {
    fn record(&mut self, r: &StepReport, ds: &mut Vec<f64>) {
        self.steps += 1;
        self.forwards += r.forwards;
        self.backwards += r.backwards;
        self.final_loss = Some(r.loss);
        self.degenerate_steps += r.degenerate as usize;
        if let Some(d) = r.d {
            ds.push(d);
        }
    }

    fn finish(&mut self, ds: &[f64]) {
        if ds.is_empty() {
            return;
        }
        self.mean_d = Some(ds.iter().sum::<f64>() / ds.len() as f64);
        self.max_d = ds.iter().copied().reduce(f64::max);
        self.d_within_reference = Some(ds.iter().filter(|&&d| d <= D_REFERENCE_RADIUS).count() as f64 / ds.len() as f64);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub in_domain: f64,
    pub per_domain: IndexMap<String, f64>,
}

/// Similarity of each domain's features at initialization and after
/// training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CkaReport {
    pub per_domain: IndexMap<String, CkaValue>,
    pub zero_shot_mean: Option<f64>,
    pub zero_shot_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Step whose parameters were selected, counting from 0 = untrained.
    pub selected_step: usize,
    pub selected_val_loss: f64,
    pub domains: Vec<DomainMetrics>,
    pub steps: StepSummary,
    pub sharpness: SharpnessReport,
    pub cka: CkaReport,
    pub config: ExperimentConfig,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_s: f64,
}

impl RunResult {
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.algorithm, self.seed)
    }

    pub fn metric(&self, domain: &str) -> Option<&DomainMetrics> {
        self.domains.iter().find(|d| d.domain == domain)
    }

    /// Mean accuracy over the evaluation domains, excluding the training one.
    pub fn zero_shot_accuracy(&self) -> f64 {
        let zs: Vec<f64> = self.domains.iter().filter(|d| d.tag != DomainTag::Train).map(|d| d.accuracy).collect();
        zs.iter().sum::<f64>() / zs.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A run that stopped with an error; other runs are unaffected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutcome {
    /// Sorted by algorithm order in the config, then seed order.
    pub results: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
    pub checkpoints: Vec<Checkpoint>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn evaluate(model: &Mlp, params: &ParameterSet, batch: &Batch, name: &str, tag: DomainTag) -> Result<DomainMetrics> {
    let (dist, _) = model.forward(params, &batch.x, &PassCounter::new())?;
    let nll = cross_entropy(&dist, &batch.labels)?;
    Ok(DomainMetrics {
        domain: name.to_string(),
        tag,
        accuracy: accuracy(&dist, &batch.labels)?,
        nll,
        perplexity: perplexity(nll),
    })
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() == 1 {
        return (Some(m), Some(0.0));
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (Some(m), Some(var.sqrt()))
}

/// Parameters chosen by validation loss, with the trajectory that led there.
#[derive(Clone, Debug)]
pub struct Selection {
    pub init: ParameterSet,
    pub params: ParameterSet,
    pub step: usize,
    pub val_loss: f64,
    pub summary: StepSummary,
}

/// Trains on `train` and keeps the parameters with the lowest loss on `val`,
/// checked every `eval_every` steps and after the last one; the earliest
/// wins ties, and step 0 (no training) is a candidate.
pub fn train_and_select(
    config: &ExperimentConfig,
    model: &Mlp,
    train: &Batch,
    val: &Batch,
    algorithm: Algorithm,
    seed: u64,
) -> Result<Selection> {
    let init = model.init();
    let mut params = init.snapshot();
    let mut opt = OptimizerState::new(
        algorithm,
        config.hyperparams.clone(),
        config.schedule(),
        &params,
        stream(seed, NOISE_STREAM),
    )?;
    let mut batch_rng = stream(seed, BATCH_STREAM);
    let n = train.len();
    let val_loss = |p: &ParameterSet| -> Result<f64> {
        let loss = model.loss(p, &val.x, &val.labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("validation loss".into()));
        }
        Ok(loss)
    };
    let mut best = (val_loss(&params)?, 0usize, params.snapshot());
    let mut summary = StepSummary::default();
    let mut ds = Vec::new();
    for t in 0..config.steps {
        let rows: Vec<usize> = (0..config.batch_size).map(|_| batch_rng.random_range(0..n)).collect();
        let batch = train.select(&rows);
        let report = opt.step(model, &mut params, &batch)?;
        summary.record(&report, &mut ds);
        let done = t + 1;
        if done % config.eval_every == 0 || done == config.steps {
            let v = val_loss(&params)?;
            if v < best.0 {
                best = (v, done, params.snapshot());
            }
        }
    }
    summary.finish(&ds);
    let (val_loss, step, params) = best;
    Ok(Selection {
        init,
        params,
        step,
        val_loss,
        summary,
    })
}

/// Trains, selects and evaluates one `(algorithm, seed)` run. Evaluation
/// domains are read only after the checkpoint is chosen.
pub fn run_single(
    config: &ExperimentConfig,
    suite: &DomainSuite,
    algorithm: Algorithm,
    seed: u64,
) -> Result<(RunResult, Checkpoint)> {
    let start = Instant::now();
    let mut model_cfg = config.model.clone();
    model_cfg.seed = seed;
    let model = Mlp::new(model_cfg.clone())?;
    let Selection {
        init,
        params: selected,
        step: selected_step,
        val_loss: selected_val_loss,
        summary,
    } = train_and_select(config, &model, &suite.train, &suite.val, algorithm, seed)?;

    let domains = suite
        .domains
        .iter()
        .map(|d| evaluate(&model, &selected, &d.test, &d.name, d.tag))
        .collect::<Result<Vec<_>>>()?;

    let mut sharp_rng = stream(seed, SHARPNESS_STREAM);
    let mut per_domain_phi = IndexMap::new();
    for d in &suite.domains {
        let phi = model_sharpness(&model, &selected, &d.test, &config.sharpness, sharp_rng.random())?;
        per_domain_phi.insert(d.name.clone(), phi);
    }
    let sharpness = SharpnessReport {
        in_domain: per_domain_phi[0],
        per_domain: per_domain_phi,
    };

    let counter = PassCounter::new();
    let mut per_domain_cka = IndexMap::new();
    let mut zs_cka = Vec::new();
    for d in &suite.domains {
        let (_, before) = model.forward(&init, &d.test.x, &counter)?;
        let (_, after) = model.forward(&selected, &d.test.x, &counter)?;
        let value = cka(&before, &after)?;
        if let (DomainTag::Correlated | DomainTag::Anticorrelated, Some(v)) = (d.tag, value.value()) {
            zs_cka.push(v);
        }
        per_domain_cka.insert(d.name.clone(), value);
    }
    let (zero_shot_mean, zero_shot_std) = mean_std(&zs_cka);

    let result = RunResult {
        algorithm,
        seed,
        selected_step,
        selected_val_loss,
        domains,
        steps: summary,
        sharpness,
        cka: CkaReport {
            per_domain: per_domain_cka,
            zero_shot_mean,
            zero_shot_std,
        },
        config: config.clone(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok((result, Checkpoint::new(model_cfg, selected)))
}

/// Runs every `(algorithm, seed)` pair of `config`, in parallel on up to
/// `threads` workers (`None`: all cores). A failing run is reported in
/// `failures` and does not stop the others.
pub fn run_experiment(config: &ExperimentConfig, suite: &DomainSuite, threads: Option<usize>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let jobs: Vec<(Algorithm, u64)> = config
        .algorithms
        .iter()
        .flat_map(|&a| config.seeds.iter().map(move |&s| (a, s)))
        .collect();
    run_jobs(&jobs, threads, |a, s| run_single(config, suite, a, s))
}

/// Runs `job` for each pair, collecting successes and failures separately.
fn run_jobs<F>(jobs: &[(Algorithm, u64)], threads: Option<usize>, job: F) -> Result<ExperimentOutcome>
where
    F: Fn(Algorithm, u64) -> Result<(RunResult, Checkpoint)> + Sync,
{
    let work = || jobs.par_iter().map(|&(a, s)| (a, s, job(a, s))).collect::<Vec<_>>();
    let finished = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut outcome = ExperimentOutcome::default();
    for (algorithm, seed, res) in finished {
        match res {
            Ok((r, ck)) => {
                outcome.results.push(r);
                outcome.checkpoints.push(ck);
            }
            Err(e) => outcome.failures.push(RunFailure {
                algorithm,
                seed,
                message: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

/// Writes `<algorithm>_<seed>.json` and `<algorithm>_<seed>.ckpt.json` for
/// every run into `dir`.
pub fn write_outcome(outcome: &ExperimentOutcome, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for (r, ck) in outcome.results.iter().zip(&outcome.checkpoints) {
        let path = dir.join(format!("{}.json", r.file_stem()));
        super::write_atomic(&path, r.to_json()?.as_bytes())?;
        ck.save(&dir.join(format!("{}.ckpt.json", r.file_stem())))?;
        written.push(path);
    }
    Ok(written)
}

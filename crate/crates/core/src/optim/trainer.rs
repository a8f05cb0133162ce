use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamState, InnerOptimizer, SgdState};
use super::algorithm::{Algorithm, Hyperparams, PenaltyMethod};
use super::perturb::{asam_epsilon, fsam_epsilon, sam_epsilon, tram_epsilon, Perturbation};
use super::schedule::LrSchedule;
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::models::{cross_entropy_on_tape, Batch, GradMap, Mlp, ParameterSet, PassCounter};
use crate::trust_region::{
    estimate_d_theta, estimate_d_x, kl_on_tape, penalized_loss, DiagFisher, EmaState, NoiseSource,
    TrustRegionEstimate, TrustRegionKind,
};

/// What one optimizer step did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub lr: f64,
    /// Training loss at the pre-step parameters.
    pub loss: f64,
    /// Training loss where the descent gradient was taken.
    pub perturbed_loss: f64,
    /// Trust-region size or penalty divergence, when the method measures one.
    pub d: Option<f64>,
    pub epsilon_norm: f64,
    /// The ascent was skipped because its direction was undefined.
    pub degenerate: bool,
    pub forwards: usize,
    pub backwards: usize,
    pub wall_clock_s: f64,
}

struct Partial {
    loss: f64,
    perturbed_loss: f64,
    d: Option<f64>,
    epsilon_norm: f64,
    degenerate: bool,
}

impl Partial {
    fn plain(loss: f64) -> Self {
        Self {
            loss,
            perturbed_loss: loss,
            d: None,
            epsilon_norm: 0.0,
            degenerate: false,
        }
    }

    fn perturbed(loss: f64, perturbed_loss: f64, eps: &Perturbation, d: Option<f64>) -> Self {
        Self {
            loss,
            perturbed_loss,
            d,
            epsilon_norm: eps.norm(),
            degenerate: eps.degenerate,
        }
    }
}

/// Per-run state of one training method: inner optimizer, parameter
/// snapshots, EMA shadow and noise stream.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    algorithm: Algorithm,
    hp: Hyperparams,
    schedule: LrSchedule,
    inner: InnerOptimizer,
    theta_0: ParameterSet,
    theta_prev: ParameterSet,
    ema: Option<EmaState>,
    noise: Option<NoiseSource>,
    forced_d: Option<f64>,
    step: usize,
}

impl OptimizerState {
    /// `noise_rng` drives every input-noise draw of the run.
    pub fn new(
        algorithm: Algorithm,
        hp: Hyperparams,
        schedule: LrSchedule,
        params: &ParameterSet,
        noise_rng: ChaCha8Rng,
    ) -> Result<Self> {
        hp.validate(algorithm)?;
        schedule.validate()?;
        let inner = match algorithm {
            Algorithm::Sgd => InnerOptimizer::Sgd(SgdState::new(params, hp.momentum, hp.adam.weight_decay)?),
            _ => InnerOptimizer::Adam(AdamState::new(params, hp.adam)?),
        };
        let ema = match algorithm.penalty() {
            Some(PenaltyMethod::Mesa) => Some(EmaState::new(params, hp.ema_decay)?),
            _ => None,
        };
        let noise = if algorithm.uses_noise() {
            Some(NoiseSource::from_rng(hp.sigma, noise_rng)?)
        } else {
            None
        };
        Ok(Self {
            algorithm,
            hp,
            schedule,
            inner,
            theta_0: params.snapshot(),
            theta_prev: params.snapshot(),
            ema,
            noise,
            forced_d: None,
            step: 0,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn theta_0(&self) -> &ParameterSet {
        &self.theta_0
    }

    pub fn theta_prev(&self) -> &ParameterSet {
        &self.theta_prev
    }

    pub fn ema(&self) -> Option<&EmaState> {
        self.ema.as_ref()
    }

    /// Replaces every measured trust-region size by `d`. The measuring pass
    /// still runs.
    pub fn force_trust_region(&mut self, d: Option<f64>) {
        self.forced_d = d;
    }

    /// One step of the configured method. Fails if the forward/backward
    /// counts differ from the method's contract.
    pub fn step(&mut self, model: &Mlp, params: &mut ParameterSet, batch: &Batch) -> Result<StepReport> {
        let start = Instant::now();
        let counter = PassCounter::new();
        let lr = self.schedule.lr(self.step);
        let partial = match self.algorithm {
            Algorithm::Sgd | Algorithm::Adam => self.base_step(model, params, batch, lr, &counter)?,
            Algorithm::Sam | Algorithm::Asam | Algorithm::Fsam => {
                self.sam_family_step(model, params, batch, lr, &counter)?
            }
            Algorithm::Trpo | Algorithm::R3f | Algorithm::Mesa => {
                self.tr_regularized_step(model, params, batch, lr, &counter)?
            }
            Algorithm::AsamTrpo | Algorithm::AsamR3f | Algorithm::AsamMesa => {
                self.combined_step(model, params, batch, lr, &counter)?
            }
            Algorithm::TramThetaPrev | Algorithm::TramTheta0 | Algorithm::TramX => {
                self.tram_step(model, params, batch, lr, &counter)?
            }
            Algorithm::TramFisher => self.tram_fisher_step(model, params, batch, lr, &counter)?,
        };
        let observed = counter.counts();
        if observed != self.algorithm.pass_contract() {
            return Err(Error::PassContract {
                algorithm: self.algorithm.to_string(),
                expected: self.algorithm.pass_contract(),
                observed,
            });
        }
        if !(partial.loss.is_finite() && partial.perturbed_loss.is_finite() && params.is_finite()) {
            return Err(Error::NonFinite(format!("{} at step {}", self.algorithm, self.step)));
        }
        let report = StepReport {
            step: self.step,
            lr,
            loss: partial.loss,
            perturbed_loss: partial.perturbed_loss,
            d: partial.d,
            epsilon_norm: partial.epsilon_norm,
            degenerate: partial.degenerate,
            forwards: observed.0,
            backwards: observed.1,
            wall_clock_s: start.elapsed().as_secs_f64(),
        };
        self.step += 1;
        Ok(report)
    }

    fn descend(&mut self, params: &mut ParameterSet, grads: &GradMap, lr: f64) -> Result<()> {
        self.inner.step(params, grads, lr)
    }

    fn base_step(&mut self, model: &Mlp, params: &mut ParameterSet, batch: &Batch, lr: f64, counter: &PassCounter) -> Result<Partial> {
        let lg = model.loss_and_grad(params, &batch.x, &batch.labels, counter, false)?;
        self.descend(params, &lg.grads, lr)?;
        Ok(Partial::plain(lg.loss))
    }

    /// Gradient at `θ + ε`, evaluated on a copy so `θ` is untouched.
    fn perturbed_grad(
        model: &Mlp,
        params: &ParameterSet,
        eps: &Perturbation,
        batch: &Batch,
        counter: &PassCounter,
    ) -> Result<(f64, GradMap)> {
        let at = eps.apply(params)?;
        let lg = model.loss_and_grad(&at, &batch.x, &batch.labels, counter, false)?;
        Ok((lg.loss, lg.grads))
    }

    fn sam_family_step(
        &mut self,
        model: &Mlp,
        params: &mut ParameterSet,
        batch: &Batch,
        lr: f64,
        counter: &PassCounter,
    ) -> Result<Partial> {
        let fisher = self.algorithm == Algorithm::Fsam;
        let lg = model.loss_and_grad(params, &batch.x, &batch.labels, counter, fisher)?;
        let eps = match self.algorithm {
            Algorithm::Sam => sam_epsilon(&lg.grads, self.hp.rho_sam)?,
            Algorithm::Asam => asam_epsilon(params, &lg.grads, self.hp.rho_asam)?,
            _ => {
                let rows = lg.row_squares.clone().expect("row squares were requested");
                let f = DiagFisher::from_row_squares(rows, batch.len())?;
                fsam_epsilon(&lg.grads, &f, self.hp.fsam())?
            }
        };
        let (loss_eps, g) = Self::perturbed_grad(model, params, &eps, batch, counter)?;
        self.descend(params, &g, lr)?;
        Ok(Partial::perturbed(lg.loss, loss_eps, &eps, None))
    }

    fn measure(
        &mut self,
        model: &Mlp,
        params: &ParameterSet,
        batch: &Batch,
        clean: &crate::models::PredictiveDistribution,
        counter: &PassCounter,
    ) -> Result<TrustRegionEstimate> {
        let kind = self.algorithm.trust_region_kind().expect("trust-region method");
        let metric = self.hp.metric;
        let est = match kind {
            TrustRegionKind::InputNoise => {
                let noise = self.noise.as_mut().expect("noise stream");
                estimate_d_x(model, params, &batch.x, Some(clean), noise, metric, counter)?
            }
            TrustRegionKind::ThetaPrev | TrustRegionKind::Theta0 => {
                let reference = if kind == TrustRegionKind::ThetaPrev { &self.theta_prev } else { &self.theta_0 };
                let (p_ref, _) = model.forward(reference, &batch.x, counter)?;
                estimate_d_theta(&p_ref, clean, kind, metric)?
            }
        };
        match self.forced_d {
            Some(d) => TrustRegionEstimate::new(d, est.kind, est.metric),
            None => Ok(est),
        }
    }

    fn tram_step(&mut self, model: &Mlp, params: &mut ParameterSet, batch: &Batch, lr: f64, counter: &PassCounter) -> Result<Partial> {
        let lg = model.loss_and_grad(params, &batch.x, &batch.labels, counter, false)?;
        let est = self.measure(model, params, batch, &lg.dist, counter)?;
        let eps = tram_epsilon(params, &lg.grads, &est, self.hp.rho_cap)?;
        let (loss_eps, g) = Self::perturbed_grad(model, params, &eps, batch, counter)?;
        let before = params.snapshot();
        self.descend(params, &g, lr)?;
        self.theta_prev = before;
        Ok(Partial::perturbed(lg.loss, loss_eps, &eps, Some(est.d)))
    }

    /// The ascent gradient and the Fisher diagonal both come from one pass on
    /// `x + z`; the descent gradient is taken on clean inputs at `θ + ε`.
    fn tram_fisher_step(
        &mut self,
        model: &Mlp,
        params: &mut ParameterSet,
        batch: &Batch,
        lr: f64,
        counter: &PassCounter,
    ) -> Result<Partial> {
        let noisy = self.noise.as_mut().expect("noise stream").perturb(&batch.x);
        let lg = model.loss_and_grad(params, &noisy, &batch.labels, counter, true)?;
        let rows = lg.row_squares.clone().expect("row squares were requested");
        let f = DiagFisher::from_row_squares(rows, batch.len())?;
        let eps = fsam_epsilon(&lg.grads, &f, self.hp.fsam())?;
        let (loss_eps, g) = Self::perturbed_grad(model, params, &eps, batch, counter)?;
        self.descend(params, &g, lr)?;
        Ok(Partial::perturbed(lg.loss, loss_eps, &eps, None))
    }

    /// Cross-entropy plus the weighted divergence penalty at `at`, with one
    /// backward. Returns `(cross-entropy, divergence, gradient)`.
    fn penalized_grad(
        &mut self,
        model: &Mlp,
        at: &ParameterSet,
        batch: &Batch,
        counter: &PassCounter,
    ) -> Result<(f64, f64, GradMap)> {
        let method = self.algorithm.penalty().expect("penalty method");
        let direction = self.hp.metric.kl_direction().expect("validated KL metric");
        let reference = match method {
            PenaltyMethod::Trpo => Some(model.forward(&self.theta_prev, &batch.x, counter)?.0),
            PenaltyMethod::Mesa => {
                let shadow = self.ema.as_ref().expect("EMA state").shadow();
                Some(model.forward(shadow, &batch.x, counter)?.0)
            }
            PenaltyMethod::R3f => None,
        };
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, at, true)?;
        let x = tape.constant(batch.x.clone());
        let clean = model.record(&mut tape, &bound, x, counter)?;
        let ce = cross_entropy_on_tape(&mut tape, clean.log_probs, &batch.labels)?;
        let target = match reference {
            Some(p_ref) => tape.constant(p_ref.log_probs().clone()),
            None => {
                let noisy = self.noise.as_mut().expect("noise stream").perturb(&batch.x);
                let xn = tape.constant(noisy);
                model.record(&mut tape, &bound, xn, counter)?.log_probs
            }
        };
        let d = kl_on_tape(&mut tape, target, clean.log_probs, direction)?;
        let total = penalized_loss(&mut tape, ce, d, self.hp.lambda)?;
        let (ce_value, d_value) = (tape.value(ce).data()[0], tape.value(d).data()[0]);
        let g = counter.backward(tape, total)?;
        Ok((ce_value, d_value, bound.gradients(&g, at)?))
    }

    fn finish_penalty(&mut self, params: &mut ParameterSet, before: ParameterSet) -> Result<()> {
        self.theta_prev = before;
        if let Some(ema) = self.ema.as_mut() {
            ema.update(params)?;
        }
        Ok(())
    }

    fn tr_regularized_step(
        &mut self,
        model: &Mlp,
        params: &mut ParameterSet,
        batch: &Batch,
        lr: f64,
        counter: &PassCounter,
    ) -> Result<Partial> {
        let (ce, d, g) = self.penalized_grad(model, params, batch, counter)?;
        let before = params.snapshot();
        self.descend(params, &g, lr)?;
        self.finish_penalty(params, before)?;
        let mut p = Partial::plain(ce);
        p.d = Some(d);
        Ok(p)
    }

    /// ASAM ascent on the plain loss, then descent on the penalized loss at
    /// the perturbed point.
    fn combined_step(
        &mut self,
        model: &Mlp,
        params: &mut ParameterSet,
        batch: &Batch,
        lr: f64,
        counter: &PassCounter,
    ) -> Result<Partial> {
        let lg = model.loss_and_grad(params, &batch.x, &batch.labels, counter, false)?;
        let eps = asam_epsilon(params, &lg.grads, self.hp.rho_asam)?;
        let at = eps.apply(params)?;
        let (ce, d, g) = self.penalized_grad(model, &at, batch, counter)?;
        let before = params.snapshot();
        self.descend(params, &g, lr)?;
        self.finish_penalty(params, before)?;
        Ok(Partial::perturbed(lg.loss, ce, &eps, Some(d)))
    }
}

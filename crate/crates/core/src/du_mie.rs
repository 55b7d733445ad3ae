//! Dual mutual-information estimation over `(global state, joint action)`.
//!
//! [`MineEstimator`] scores a pair as the inner product of a state embedding
//! and an action embedding and is trained on the positive store with the
//! softplus lower-bound objective
//!
//! ```text
//! E_joint[-sp(-T(s, u))] - E_marginal[sp(T(s, u'))]
//! ```
//!
//! [`ClubEstimator`] fits a diagonal Gaussian `q(u | s)` on the negative store
//! and bounds the information from above with
//!
//! ```text
//! E_joint[log q(u | s)] - E_marginal[log q(u' | s)]
//! ```
//!
//! The shaped reward for a single transition is `alpha * i_mine - beta * i_club`
//! where each term is the per-sample integrand at `(s_t, u_t)` minus its
//! marginal term averaged over reference actions drawn from the matching store.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::du_pcb::{DuPcb, PairBatch, Placement};
use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus, Activation, AdamState, MlpSpec, ParamVector};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Log-variance range of the CLUB conditional.
pub const LOG_VAR_MIN: f64 = -5.0;
pub const LOG_VAR_MAX: f64 = 2.0;

fn check_batch(batch: &PairBatch, state_dim: usize, action_dim: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::NotReady("empty sample batch"));
    }
    if batch.states.ncols() != state_dim {
        return Err(Error::dims("state width", state_dim, batch.states.ncols()));
    }
    if batch.actions.ncols() != action_dim {
        return Err(Error::dims("action width", action_dim, batch.actions.ncols()));
    }
    if batch.actions.nrows() != batch.states.nrows() {
        return Err(Error::dims("pair count", batch.states.nrows(), batch.actions.nrows()));
    }
    Ok(())
}

fn rowwise_dot(a: &Array2<f64>, b: &Array2<f64>) -> Array1<f64> {
    Zip::from(a.rows()).and(b.rows()).map_collect(|x, y| x.dot(&y))
}

fn finite_or(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{what} = {value}")))
    }
}

#[derive(Debug, Clone)]
pub struct MineEstimator {
    state_spec: MlpSpec,
    action_spec: MlpSpec,
    state_params: ParamVector,
    action_params: ParamVector,
    state_adam: AdamState,
    action_adam: AdamState,
}

impl MineEstimator {
    /// Two `hidden`-unit LeakyReLU layers per encoder, linear `embed`-wide output.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        embed: usize,
        lr: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let state_spec = MlpSpec::new(
            vec![state_dim, hidden, hidden, embed],
            Activation::LeakyRelu,
            Activation::Identity,
        )?;
        let action_spec = MlpSpec::new(
            vec![action_dim, hidden, hidden, embed],
            Activation::LeakyRelu,
            Activation::Identity,
        )?;
        let state_params = state_spec.init(rng);
        let action_params = action_spec.init(rng);
        Ok(MineEstimator {
            state_adam: AdamState::new(state_params.len(), lr),
            action_adam: AdamState::new(action_params.len(), lr),
            state_spec,
            action_spec,
            state_params,
            action_params,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_spec.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_spec.input_dim()
    }

    pub fn state_encoder(&self) -> (&MlpSpec, &ParamVector) {
        (&self.state_spec, &self.state_params)
    }

    pub fn action_encoder(&self) -> (&MlpSpec, &ParamVector) {
        (&self.action_spec, &self.action_params)
    }

    pub fn state_params_mut(&mut self) -> &mut ParamVector {
        &mut self.state_params
    }

    pub fn action_params_mut(&mut self) -> &mut ParamVector {
        &mut self.action_params
    }

    pub fn param_count(&self) -> usize {
        self.state_params.len() + self.action_params.len()
    }

    /// State-encoder parameters followed by action-encoder parameters.
    pub fn parameters(&self) -> Vec<f64> {
        [self.state_params.values(), self.action_params.values()].concat()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::dims("mine parameters", self.param_count(), values.len()));
        }
        let (s, a) = values.split_at(self.state_params.len());
        self.state_params.values_mut().copy_from_slice(s);
        self.action_params.values_mut().copy_from_slice(a);
        Ok(())
    }

    /// `T(s, u)` for a single pair.
    pub fn score(&self, s: &[f64], u: &[f64]) -> Result<f64> {
        let es = self.state_spec.forward(&self.state_params, s)?;
        let eu = self.action_spec.forward(&self.action_params, u)?;
        Ok(es.iter().zip(&eu).map(|(a, b)| a * b).sum())
    }

    /// `T` for each row pair.
    pub fn scores(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>> {
        let es = self.state_spec.forward_batch(&self.state_params, states)?;
        let eu = self.action_spec.forward_batch(&self.action_params, actions)?;
        if es.output().nrows() != eu.output().nrows() {
            return Err(Error::dims("pair count", states.nrows(), actions.nrows()));
        }
        Ok(rowwise_dot(es.output(), eu.output()))
    }

    /// The softplus lower-bound objective; its negation is the training loss.
    pub fn estimate(&self, joint: &PairBatch, marginal: &PairBatch) -> Result<f64> {
        Ok(-self.loss(joint, marginal)?.0)
    }

    /// Donsker-Varadhan bound `E_joint[T] - log E_marginal[exp T]` evaluated
    /// with the current score network. At the optimum of the softplus
    /// objective `T` is the log density ratio, so this reads out the
    /// information in nats.
    pub fn dv_estimate(&self, joint: &PairBatch, marginal: &PairBatch) -> Result<f64> {
        check_batch(joint, self.state_dim(), self.action_dim())?;
        check_batch(marginal, self.state_dim(), self.action_dim())?;
        let tj = self.scores(joint.states.view(), joint.actions.view())?;
        let tm = self.scores(marginal.states.view(), marginal.actions.view())?;
        let max = tm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lme = max + (tm.iter().map(|t| (t - max).exp()).sum::<f64>() / tm.len() as f64).ln();
        finite_or(tj.mean().unwrap() - lme, "mine dv estimate")
    }

    /// Loss `E_joint[sp(-T)] + E_marginal[sp(T)]` and the kink pattern of
    /// both encoders on this batch.
    pub fn loss(&self, joint: &PairBatch, marginal: &PairBatch) -> Result<(f64, Vec<bool>)> {
        let fwd = self.forward_pairs(joint, marginal)?;
        let nj = joint.len();
        let loss = fwd.t.slice(s![..nj]).mapv(|t| softplus(-t)).mean().unwrap()
            + fwd.t.slice(s![nj..]).mapv(softplus).mean().unwrap();
        let mut kinks = fwd.state_trace.kink_pattern(&self.state_spec);
        kinks.extend(fwd.action_trace.kink_pattern(&self.action_spec));
        Ok((loss, kinks))
    }

    /// Loss and its gradient with respect to [`Self::parameters`].
    pub fn loss_and_grad(&self, joint: &PairBatch, marginal: &PairBatch) -> Result<(f64, Vec<f64>)> {
        let fwd = self.forward_pairs(joint, marginal)?;
        let nj = joint.len();
        let nm = marginal.len();
        let mut loss = 0.0;
        let dt: Array1<f64> = fwd
            .t
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                if i < nj {
                    loss += softplus(-t) / nj as f64;
                    -sigmoid(-t) / nj as f64
                } else {
                    loss += softplus(t) / nm as f64;
                    sigmoid(t) / nm as f64
                }
            })
            .collect();
        let es = fwd.state_trace.output();
        let eu = fwd.action_trace.output();
        let dcol = dt.insert_axis(Axis(1));
        let d_es = eu * &dcol;
        let d_eu = es * &dcol;
        let (gs, _) = self
            .state_spec
            .backward_batch(&self.state_params, &fwd.state_trace, d_es.view())?;
        let (ga, _) = self
            .action_spec
            .backward_batch(&self.action_params, &fwd.action_trace, d_eu.view())?;
        Ok((finite_or(loss, "mine loss")?, [gs, ga].concat()))
    }

    /// One Adam step on the loss; returns the pre-step loss.
    pub fn train_on(&mut self, joint: &PairBatch, marginal: &PairBatch) -> Result<f64> {
        let (loss, grad) = self.loss_and_grad(joint, marginal)?;
        let (gs, ga) = grad.split_at(self.state_params.len());
        self.state_adam.update(&mut self.state_params, gs)?;
        self.action_adam.update(&mut self.action_params, ga)?;
        Ok(loss)
    }

    fn forward_pairs(&self, joint: &PairBatch, marginal: &PairBatch) -> Result<PairForward> {
        check_batch(joint, self.state_dim(), self.action_dim())?;
        check_batch(marginal, self.state_dim(), self.action_dim())?;
        let states = concatenate(Axis(0), &[joint.states.view(), marginal.states.view()]).unwrap();
        let actions =
            concatenate(Axis(0), &[joint.actions.view(), marginal.actions.view()]).unwrap();
        let state_trace = self.state_spec.forward_batch(&self.state_params, states.view())?;
        let action_trace = self.action_spec.forward_batch(&self.action_params, actions.view())?;
        let t = rowwise_dot(state_trace.output(), action_trace.output());
        Ok(PairForward {
            state_trace,
            action_trace,
            t,
        })
    }

    /// Action embeddings of a reference batch, for per-sample marginal terms.
    pub fn embed_actions(&self, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self
            .action_spec
            .forward_batch(&self.action_params, actions)?
            .output()
            .clone())
    }

    /// Per-sample `-sp(-T(s_i, u_i)) - mean_k sp(T(s_i, u_k))`, with `u_k`
    /// given by their embeddings. Without references the marginal term is 0.
    pub fn pointwise(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        reference: Option<&Array2<f64>>,
    ) -> Result<Array1<f64>> {
        let es = self.state_spec.forward_batch(&self.state_params, states)?;
        let eu = self.action_spec.forward_batch(&self.action_params, actions)?;
        let es = es.output();
        let t = rowwise_dot(es, eu.output());
        let mut out = t.mapv(|t| -softplus(-t));
        if let Some(eref) = reference {
            if eref.nrows() > 0 {
                let cross = es.dot(&eref.t());
                let marginal = cross.mapv(softplus).mean_axis(Axis(1)).unwrap();
                out -= &marginal;
            }
        }
        Ok(out)
    }
}

struct PairForward {
    state_trace: crate::nn::Trace,
    action_trace: crate::nn::Trace,
    t: Array1<f64>,
}

/// Diagonal-Gaussian action predictor `q(u | s)`.
#[derive(Debug, Clone)]
pub struct ClubEstimator {
    spec: MlpSpec,
    params: ParamVector,
    adam: AdamState,
    action_dim: usize,
}

/// Mean and clamped log-variance predicted for a batch of states.
pub struct Conditional {
    pub mean: Array2<f64>,
    pub log_var: Array2<f64>,
    trace: crate::nn::Trace,
}

impl ClubEstimator {
    /// Two `hidden`-unit LeakyReLU layers over the state, then a linear layer
    /// producing the mean and log-variance heads side by side.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        lr: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let spec = MlpSpec::new(
            vec![state_dim, hidden, hidden, 2 * action_dim],
            Activation::LeakyRelu,
            Activation::Identity,
        )?;
        let params = spec.init(rng);
        Ok(ClubEstimator {
            adam: AdamState::new(params.len(), lr),
            spec,
            params,
            action_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn network(&self) -> (&MlpSpec, &ParamVector) {
        (&self.spec, &self.params)
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.params.values().to_vec()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::dims("club parameters", self.params.len(), values.len()));
        }
        self.params.values_mut().copy_from_slice(values);
        Ok(())
    }

    pub fn conditional(&self, states: ArrayView2<f64>) -> Result<Conditional> {
        let trace = self.spec.forward_batch(&self.params, states)?;
        let out = trace.output();
        let d = self.action_dim;
        let mean = out.slice(s![.., ..d]).to_owned();
        let log_var = out
            .slice(s![.., d..])
            .mapv(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX));
        Ok(Conditional {
            mean,
            log_var,
            trace,
        })
    }

    fn check_actions(&self, actions: &ArrayView2<f64>, rows: usize) -> Result<()> {
        if actions.ncols() != self.action_dim {
            return Err(Error::dims("action width", self.action_dim, actions.ncols()));
        }
        if actions.nrows() != rows {
            return Err(Error::dims("pair count", rows, actions.nrows()));
        }
        Ok(())
    }

    /// `log q(u_i | s_i)` for each row pair.
    pub fn log_likelihoods(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>> {
        let c = self.conditional(states)?;
        self.check_actions(&actions, states.nrows())?;
        Ok(gaussian_loglik(&c.mean, &c.log_var, actions))
    }

    pub fn loglik(&self, s: &[f64], u: &[f64]) -> Result<f64> {
        let sv = ArrayView2::from_shape((1, s.len()), s)
            .map_err(|_| Error::dims("state", self.state_dim(), s.len()))?;
        let uv = ArrayView2::from_shape((1, u.len()), u)
            .map_err(|_| Error::dims("action", self.action_dim, u.len()))?;
        Ok(self.log_likelihoods(sv, uv)?[0])
    }

    /// Upper-bound estimate: mean joint log-likelihood minus mean marginal
    /// log-likelihood.
    pub fn estimate(&self, joint: &PairBatch, marginal: &PairBatch) -> Result<f64> {
        check_batch(joint, self.state_dim(), self.action_dim)?;
        check_batch(marginal, self.state_dim(), self.action_dim)?;
        let lj = self.log_likelihoods(joint.states.view(), joint.actions.view())?;
        let lm = self.log_likelihoods(marginal.states.view(), marginal.actions.view())?;
        finite_or(lj.mean().unwrap() - lm.mean().unwrap(), "club estimate")
    }

    /// Negative mean joint log-likelihood, with the kink pattern of the
    /// network and the log-variance clamp.
    pub fn loss(&self, joint: &PairBatch) -> Result<(f64, Vec<bool>)> {
        check_batch(joint, self.state_dim(), self.action_dim)?;
        let c = self.conditional(joint.states.view())?;
        let ll = gaussian_loglik(&c.mean, &c.log_var, joint.actions.view());
        let mut kinks = c.trace.kink_pattern(&self.spec);
        let raw = c.trace.output().slice(s![.., self.action_dim..]).to_owned();
        kinks.extend(raw.iter().flat_map(|&v| [v < LOG_VAR_MIN, v > LOG_VAR_MAX]));
        Ok((-ll.mean().unwrap(), kinks))
    }

    pub fn loss_and_grad(&self, joint: &PairBatch) -> Result<(f64, Vec<f64>)> {
        check_batch(joint, self.state_dim(), self.action_dim)?;
        let c = self.conditional(joint.states.view())?;
        let ll = gaussian_loglik(&c.mean, &c.log_var, joint.actions.view());
        let n = joint.len() as f64;
        let d = self.action_dim;
        let raw = c.trace.output();
        let mut upstream = Array2::<f64>::zeros(raw.dim());
        for i in 0..joint.len() {
            for j in 0..d {
                let var = c.log_var[[i, j]].exp();
                let r = joint.actions[[i, j]] - c.mean[[i, j]];
                upstream[[i, j]] = -r / var / n;
                let lv_raw = raw[[i, d + j]];
                if lv_raw > LOG_VAR_MIN && lv_raw < LOG_VAR_MAX {
                    upstream[[i, d + j]] = (0.5 - 0.5 * r * r / var) / n;
                }
            }
        }
        let (grad, _) = self.spec.backward_batch(&self.params, &c.trace, upstream.view())?;
        Ok((finite_or(-ll.mean().unwrap(), "club loss")?, grad))
    }

    pub fn train_on(&mut self, joint: &PairBatch) -> Result<f64> {
        let (loss, grad) = self.loss_and_grad(joint)?;
        self.adam.update(&mut self.params, &grad)?;
        Ok(loss)
    }

    /// Per-sample `log q(u_i | s_i) - mean_k log q(u_k | s_i)`. The average
    /// over reference actions is taken in closed form from their first two
    /// moments. Without references the marginal term is 0.
    pub fn pointwise(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        reference: Option<&ActionMoments>,
    ) -> Result<Array1<f64>> {
        let c = self.conditional(states)?;
        self.check_actions(&actions, states.nrows())?;
        let mut out = gaussian_loglik(&c.mean, &c.log_var, actions);
        if let Some(m) = reference {
            for (i, o) in out.iter_mut().enumerate() {
                let mut marginal = 0.0;
                for j in 0..self.action_dim {
                    let mu = c.mean[[i, j]];
                    let lv = c.log_var[[i, j]];
                    let sq = m.second[j] - 2.0 * mu * m.first[j] + mu * mu;
                    marginal += -0.5 * LN_2PI - 0.5 * lv - 0.5 * sq / lv.exp();
                }
                *o -= marginal;
            }
        }
        Ok(out)
    }
}

fn gaussian_loglik(mean: &Array2<f64>, log_var: &Array2<f64>, actions: ArrayView2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(mean.nrows());
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..mean.ncols() {
            let lv = log_var[[i, j]];
            let r = actions[[i, j]] - mean[[i, j]];
            acc += -0.5 * LN_2PI - 0.5 * lv - 0.5 * r * r / lv.exp();
        }
        *o = acc;
    }
    out
}

/// Per-dimension first and second moments of a reference action batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMoments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl ActionMoments {
    pub fn of(actions: ArrayView2<f64>) -> Self {
        let n = actions.nrows().max(1) as f64;
        let first = actions.sum_axis(Axis(0)).mapv(|v| v / n).to_vec();
        let second = actions.mapv(|v| v * v).sum_axis(Axis(0)).mapv(|v| v / n).to_vec();
        ActionMoments { first, second }
    }
}

/// Per-transition mutual-information signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiSignal {
    pub i_mine: f64,
    pub i_club: f64,
    /// `alpha * i_mine - beta * i_club`.
    pub r_pmic: f64,
}

/// Marginal-term references drawn once per learner update.
#[derive(Debug, Clone, Default)]
pub struct MiReference {
    /// Action embeddings of a positive-store sample.
    pub mine: Option<Array2<f64>>,
    /// Action moments of a negative-store sample.
    pub club: Option<ActionMoments>,
}

impl MiReference {
    /// Draws `size` reference actions from each store that has data. An
    /// empty store or missing estimator leaves that side empty.
    pub fn draw<R: Rng + ?Sized>(
        mine: Option<&MineEstimator>,
        club: Option<&ClubEstimator>,
        pcb: &DuPcb,
        size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut reference = MiReference::default();
        if let Some(m) = mine {
            match pcb.sample_joint(Placement::Positive, size, rng) {
                Ok(b) => reference.mine = Some(m.embed_actions(b.actions.view())?),
                Err(Error::NotReady(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if club.is_some() {
            match pcb.sample_joint(Placement::Negative, size, rng) {
                Ok(b) => reference.club = Some(ActionMoments::of(b.actions.view())),
                Err(Error::NotReady(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(reference)
    }
}

/// Shaped rewards for a batch of `(s_t, u_t)` rows.
///
/// A term whose weight is zero, or whose estimator is absent, is not
/// evaluated and reported as 0.
pub fn pmic_rewards(
    mine: Option<&MineEstimator>,
    club: Option<&ClubEstimator>,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    alpha: f64,
    beta: f64,
    reference: &MiReference,
) -> Result<Vec<MiSignal>> {
    let n = states.nrows();
    let i_mine = match mine {
        Some(m) if alpha != 0.0 => m.pointwise(states, actions, reference.mine.as_ref())?,
        _ => Array1::zeros(n),
    };
    let i_club = match club {
        Some(c) if beta != 0.0 => c.pointwise(states, actions, reference.club.as_ref())?,
        _ => Array1::zeros(n),
    };
    (0..n)
        .map(|i| {
            let sig = MiSignal {
                i_mine: i_mine[i],
                i_club: i_club[i],
                r_pmic: alpha * i_mine[i] - beta * i_club[i],
            };
            finite_or(sig.r_pmic, "pmic reward").map(|_| sig)
        })
        .collect()
}

/// Shaped reward for a single transition.
pub fn pmic_reward(
    mine: Option<&MineEstimator>,
    club: Option<&ClubEstimator>,
    s: &[f64],
    u: &[f64],
    alpha: f64,
    beta: f64,
    reference: &MiReference,
) -> Result<MiSignal> {
    let sv = ArrayView2::from_shape((1, s.len()), s).unwrap();
    let uv = ArrayView2::from_shape((1, u.len()), u).unwrap();
    Ok(pmic_rewards(mine, club, sv, uv, alpha, beta, reference)?[0])
}

/// Losses and pre-step estimates from one estimator update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainOutcome {
    pub loss_mine: Option<f64>,
    pub loss_club: Option<f64>,
    pub mine_estimate: Option<f64>,
    pub club_estimate: Option<f64>,
}

/// One update of each present estimator: MINE on positive-store samples,
/// CLUB on negative-store samples. A side whose store is empty is skipped.
pub fn train_step<R: Rng + ?Sized>(
    mine: Option<&mut MineEstimator>,
    club: Option<&mut ClubEstimator>,
    pcb: &DuPcb,
    batch: usize,
    rng: &mut R,
) -> Result<TrainOutcome> {
    let mut out = TrainOutcome::default();
    if let Some(m) = mine {
        if let Ok(joint) = pcb.sample_joint(Placement::Positive, batch, rng) {
            let marginal = pcb.sample_marginal(Placement::Positive, batch, rng)?;
            let loss = m.train_on(&joint, &marginal)?;
            out.loss_mine = Some(loss);
            out.mine_estimate = Some(-loss);
        }
    }
    if let Some(c) = club {
        if let Ok(joint) = pcb.sample_joint(Placement::Negative, batch, rng) {
            let marginal = pcb.sample_marginal(Placement::Negative, batch, rng)?;
            out.club_estimate = Some(c.estimate(&joint, &marginal)?);
            out.loss_club = Some(c.train_on(&joint)?);
        }
    }
    Ok(out)
}

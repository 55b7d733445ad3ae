use std::io::{Read, Write};
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::du_mie::MiSignal;
use crate::env::{JointAction, Observation, Transition};
use crate::error::{Error, Result};
use crate::maddpg::replay::{ReplayBatch, ReplayShape};
use crate::nn::checkpoint::{read_adam, read_network, write_adam, write_network};
use crate::nn::{soft_update, Activation, AdamState, MlpSpec, ParamVector};

const ENSEMBLE_MAGIC: &[u8; 8] = b"PMICENS\x01";

/// Losses measured before each network's step.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateLosses {
    pub critic_loss: f64,
    pub actor_losses: Vec<f64>,
}

/// Per-agent deterministic actors, one centralized critic over
/// `(global state, joint action)`, and their target copies.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticEnsemble {
    shape: ReplayShape,
    actor_spec: MlpSpec,
    critic_spec: MlpSpec,
    actors: Vec<ParamVector>,
    target_actors: Vec<ParamVector>,
    critic: ParamVector,
    target_critic: ParamVector,
    actor_adam: Vec<AdamState>,
    critic_adam: AdamState,
}

impl ActorCriticEnsemble {
    pub fn new<R: Rng + ?Sized>(
        shape: ReplayShape,
        hidden: usize,
        critic_lr: f64,
        actor_lr: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let actor_spec = MlpSpec::new(
            vec![shape.obs_dim, hidden, hidden, shape.action_dim],
            Activation::Relu,
            Activation::Tanh,
        )?;
        let critic_spec = MlpSpec::new(
            vec![shape.state_dim + shape.joint_action_dim(), hidden, hidden, 1],
            Activation::Relu,
            Activation::Identity,
        )?;
        let actors: Vec<ParamVector> = (0..shape.num_agents).map(|_| actor_spec.init(rng)).collect();
        let critic = critic_spec.init(rng);
        Ok(ActorCriticEnsemble {
            shape,
            target_actors: actors.clone(),
            target_critic: critic.clone(),
            actor_adam: actors.iter().map(|p| AdamState::new(p.len(), actor_lr)).collect(),
            critic_adam: AdamState::new(critic.len(), critic_lr),
            actor_spec,
            critic_spec,
            actors,
            critic,
        })
    }

    pub fn shape(&self) -> ReplayShape {
        self.shape
    }

    pub fn actor_spec(&self) -> &MlpSpec {
        &self.actor_spec
    }

    pub fn critic_spec(&self) -> &MlpSpec {
        &self.critic_spec
    }

    pub fn actor(&self, agent: usize) -> &ParamVector {
        &self.actors[agent]
    }

    pub fn actor_mut(&mut self, agent: usize) -> &mut ParamVector {
        &mut self.actors[agent]
    }

    pub fn target_actor(&self, agent: usize) -> &ParamVector {
        &self.target_actors[agent]
    }

    pub fn target_actor_mut(&mut self, agent: usize) -> &mut ParamVector {
        &mut self.target_actors[agent]
    }

    pub fn critic(&self) -> &ParamVector {
        &self.critic
    }

    pub fn critic_mut(&mut self) -> &mut ParamVector {
        &mut self.critic
    }

    pub fn target_critic(&self) -> &ParamVector {
        &self.target_critic
    }

    pub fn target_critic_mut(&mut self) -> &mut ParamVector {
        &mut self.target_critic
    }

    /// Every parameter of every network, online then target, in a fixed order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in self.actors.iter().chain([&self.critic]) {
            out.extend_from_slice(p.values());
        }
        for p in self.target_actors.iter().chain([&self.target_critic]) {
            out.extend_from_slice(p.values());
        }
        out
    }

    /// Joint action rows from per-agent observation rows.
    pub fn joint_actions(&self, actors: &[ParamVector], obs: &[Array2<f64>]) -> Result<Array2<f64>> {
        if obs.len() != self.shape.num_agents {
            return Err(Error::dims("agent observations", self.shape.num_agents, obs.len()));
        }
        let outs = actors
            .iter()
            .zip(obs)
            .map(|(p, o)| Ok(self.actor_spec.forward_batch(p, o.view())?.output().clone()))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = outs.iter().map(|a| a.view()).collect();
        Ok(concatenate(Axis(1), &views).expect("equal row counts"))
    }

    /// Policy action for each agent plus `N(0, noise_scale^2)` per component,
    /// clamped to `[-1, 1]`. No randomness is drawn when `noise_scale` is 0.
    pub fn act<R: Rng + ?Sized>(
        &self,
        observations: &[Observation],
        noise_scale: f64,
        rng: &mut R,
    ) -> Result<JointAction> {
        if observations.len() != self.shape.num_agents {
            return Err(Error::dims("agent observations", self.shape.num_agents, observations.len()));
        }
        let mut joint = Vec::with_capacity(self.shape.joint_action_dim());
        for (p, o) in self.actors.iter().zip(observations) {
            joint.extend(self.actor_spec.forward(p, &o.0)?);
        }
        if noise_scale > 0.0 {
            for a in joint.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *a += noise_scale * z;
            }
        }
        Ok(JointAction::new(joint))
    }

    fn critic_input(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        if states.ncols() != self.shape.state_dim {
            return Err(Error::dims("critic state", self.shape.state_dim, states.ncols()));
        }
        if actions.ncols() != self.shape.joint_action_dim() {
            return Err(Error::dims("critic action", self.shape.joint_action_dim(), actions.ncols()));
        }
        concatenate(Axis(1), &[states, actions])
            .map_err(|_| Error::dims("critic rows", states.nrows(), actions.nrows()))
    }

    pub fn q_values(
        &self,
        critic: &ParamVector,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        let x = self.critic_input(states, actions)?;
        Ok(self
            .critic_spec
            .forward_batch(critic, x.view())?
            .output()
            .column(0)
            .to_owned())
    }

    /// `r + clip(r_pmic) + gamma * Q'(s', pi'(o'))`, dropping the bootstrap
    /// on terminal rows.
    pub fn critic_targets(
        &self,
        batch: &ReplayBatch,
        r_pmic: &[f64],
        gamma: f64,
        clip: f64,
    ) -> Result<Array1<f64>> {
        if r_pmic.len() != batch.len() {
            return Err(Error::dims("shaped rewards", batch.len(), r_pmic.len()));
        }
        let next_actions = self.joint_actions(&self.target_actors, &batch.next_obs)?;
        let next_q = self.q_values(&self.target_critic, batch.next_states.view(), next_actions.view())?;
        Ok(Array1::from_shape_fn(batch.len(), |i| {
            let bootstrap = if batch.terminals[i] { 0.0 } else { gamma * next_q[i] };
            batch.rewards[i] + r_pmic[i].clamp(-clip, clip) + bootstrap
        }))
    }

    pub fn critic_target(&self, t: &Transition, mi: &MiSignal, gamma: f64, clip: f64) -> Result<f64> {
        let batch = ReplayBatch::from_transitions(self.shape, std::slice::from_ref(t))?;
        Ok(self.critic_targets(&batch, &[mi.r_pmic], gamma, clip)?[0])
    }

    /// Mean squared error of the online critic against fixed targets.
    pub fn critic_loss(&self, batch: &ReplayBatch, targets: &Array1<f64>) -> Result<f64> {
        let q = self.q_values(&self.critic, batch.states.view(), batch.actions.view())?;
        Ok((&q - targets).mapv(|d| d * d).mean().unwrap_or(0.0))
    }

    /// `-mean Q(s, u)` with agent `agent`'s action replaced by its policy output.
    pub fn actor_loss(&self, agent: usize, batch: &ReplayBatch) -> Result<f64> {
        let actions = self.substitute_action(agent, batch)?.0;
        let q = self.q_values(&self.critic, batch.states.view(), actions.view())?;
        Ok(-q.mean().unwrap_or(0.0))
    }

    fn substitute_action(&self, agent: usize, batch: &ReplayBatch) -> Result<(Array2<f64>, crate::nn::Trace)> {
        let trace = self
            .actor_spec
            .forward_batch(&self.actors[agent], batch.obs[agent].view())?;
        let ad = self.shape.action_dim;
        let mut actions = batch.actions.clone();
        actions
            .slice_mut(s![.., agent * ad..(agent + 1) * ad])
            .assign(trace.output());
        Ok((actions, trace))
    }

    /// Critic loss and gradient against fixed targets.
    pub fn critic_loss_and_grad(&self, batch: &ReplayBatch, targets: &Array1<f64>) -> Result<(f64, Vec<f64>)> {
        let x = self.critic_input(batch.states.view(), batch.actions.view())?;
        let trace = self.critic_spec.forward_batch(&self.critic, x.view())?;
        let q = trace.output().column(0).to_owned();
        let n = batch.len() as f64;
        let diff = &q - targets;
        let loss = diff.mapv(|d| d * d).sum() / n;
        let upstream = diff.mapv(|d| 2.0 * d / n).insert_axis(Axis(1));
        let (grad, _) = self.critic_spec.backward_batch(&self.critic, &trace, upstream.view())?;
        Ok((loss, grad))
    }

    /// Actor loss and gradient with respect to agent `agent`'s actor.
    pub fn actor_loss_and_grad(&self, agent: usize, batch: &ReplayBatch) -> Result<(f64, Vec<f64>)> {
        let (actions, actor_trace) = self.substitute_action(agent, batch)?;
        let x = self.critic_input(batch.states.view(), actions.view())?;
        let trace = self.critic_spec.forward_batch(&self.critic, x.view())?;
        let n = batch.len() as f64;
        let loss = -trace.output().sum() / n;
        let upstream = Array2::from_elem((batch.len(), 1), -1.0 / n);
        let (_, d_input) = self.critic_spec.backward_batch(&self.critic, &trace, upstream.view())?;
        let ad = self.shape.action_dim;
        let start = self.shape.state_dim + agent * ad;
        let d_action = d_input.slice(s![.., start..start + ad]).to_owned();
        let (grad, _) = self
            .actor_spec
            .backward_batch(&self.actors[agent], &actor_trace, d_action.view())?;
        Ok((loss, grad))
    }

    /// One critic step, one step per actor, then soft target updates.
    pub fn update(
        &mut self,
        batch: &ReplayBatch,
        r_pmic: &[f64],
        gamma: f64,
        tau: f64,
        clip: f64,
    ) -> Result<UpdateLosses> {
        let targets = self.critic_targets(batch, r_pmic, gamma, clip)?;
        let (critic_loss, grad) = self.critic_loss_and_grad(batch, &targets)?;
        if !critic_loss.is_finite() {
            return Err(Error::NonFinite(format!("critic loss = {critic_loss}")));
        }
        self.critic_adam.update(&mut self.critic, &grad)?;

        let mut actor_losses = Vec::with_capacity(self.shape.num_agents);
        for agent in 0..self.shape.num_agents {
            let (loss, grad) = self.actor_loss_and_grad(agent, batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("actor {agent} loss = {loss}")));
            }
            self.actor_adam[agent].update(&mut self.actors[agent], &grad)?;
            actor_losses.push(loss);
        }
        self.soft_update_targets(tau)?;
        Ok(UpdateLosses {
            critic_loss,
            actor_losses,
        })
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        for (t, o) in self.target_actors.iter_mut().zip(&self.actors) {
            *t = soft_update(t, o, tau)?;
        }
        self.target_critic = soft_update(&self.target_critic, &self.critic, tau)?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(ENSEMBLE_MAGIC)?;
        let sh = self.shape;
        for v in [sh.state_dim, sh.obs_dim, sh.num_agents, sh.action_dim] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for i in 0..sh.num_agents {
            write_network(w, &self.actor_spec, &self.actors[i])?;
            write_network(w, &self.actor_spec, &self.target_actors[i])?;
            write_adam(w, &self.actor_adam[i])?;
        }
        write_network(w, &self.critic_spec, &self.critic)?;
        write_network(w, &self.critic_spec, &self.target_critic)?;
        write_adam(w, &self.critic_adam)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != ENSEMBLE_MAGIC {
            return Err(Error::Checkpoint("not an ensemble checkpoint".into()));
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *d = u64::from_le_bytes(b) as usize;
        }
        let shape = ReplayShape {
            state_dim: dims[0],
            obs_dim: dims[1],
            num_agents: dims[2],
            action_dim: dims[3],
        };
        let mut actors = Vec::new();
        let mut target_actors = Vec::new();
        let mut actor_adam = Vec::new();
        let mut actor_spec = None;
        for _ in 0..shape.num_agents {
            let (spec, p) = read_network(r)?;
            let (tspec, tp) = read_network(r)?;
            if spec != tspec {
                return Err(Error::Checkpoint("target actor spec differs".into()));
            }
            actors.push(p);
            target_actors.push(tp);
            actor_adam.push(read_adam(r)?);
            actor_spec = Some(spec);
        }
        let (critic_spec, critic) = read_network(r)?;
        let (tspec, target_critic) = read_network(r)?;
        if critic_spec != tspec {
            return Err(Error::Checkpoint("target critic spec differs".into()));
        }
        let critic_adam = read_adam(r)?;
        let actor_spec = actor_spec.ok_or_else(|| Error::Checkpoint("no agents".into()))?;
        if actor_spec.input_dim() != shape.obs_dim
            || actor_spec.output_dim() != shape.action_dim
            || critic_spec.input_dim() != shape.state_dim + shape.joint_action_dim()
        {
            return Err(Error::Checkpoint("network shapes disagree with header".into()));
        }
        Ok(ActorCriticEnsemble {
            shape,
            actor_spec,
            critic_spec,
            actors,
            target_actors,
            critic,
            target_critic,
            actor_adam,
            critic_adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

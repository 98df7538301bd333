//! Logged trajectories and sampling them from an MDP.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::mdp::{Policy, TabularMdp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    /// Behavior probability of the logged action, when it was recorded.
    pub propensity: Option<f64>,
}

impl Step {
    pub fn new(state: usize, action: usize, reward: f64) -> Self {
        Self {
            state,
            action,
            reward,
            propensity: None,
        }
    }
}

/// `(S_0, A_0, R_0, ..., S_T, A_T, R_T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>) -> Self {
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn discounted_return(&self, discount: f64) -> f64 {
        let mut total = 0.0;
        let mut weight = 1.0;
        for step in &self.steps {
            total += weight * step.reward;
            weight *= discount;
        }
        total
    }
}

/// I.i.d. trajectories of a common length.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedDataset {
    trajectories: Vec<Trajectory>,
    propensities_known: bool,
}

impl LoggedDataset {
    /// Validates uniform length and propensity ranges; `propensities_known` is derived.
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let first = trajectories.first().ok_or(OpeError::EmptyDataset)?;
        let expected = first.len();
        if expected == 0 {
            return Err(OpeError::invalid(
                "trajectories[0]",
                "trajectory has no steps",
            ));
        }
        for (i, t) in trajectories.iter().enumerate() {
            if t.len() != expected {
                return Err(OpeError::invalid(
                    format!("trajectories[{i}]"),
                    format!(
                        "ragged horizon: expected {expected} steps, found {}",
                        t.len()
                    ),
                ));
            }
            for (j, step) in t.steps.iter().enumerate() {
                if let Some(p) = step.propensity {
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(OpeError::invalid(
                            format!("trajectories[{i}].steps[{j}].propensity"),
                            format!("{p} is outside (0, 1]"),
                        ));
                    }
                }
                if !step.reward.is_finite() {
                    return Err(OpeError::invalid(
                        format!("trajectories[{i}].steps[{j}].reward"),
                        "reward is not finite",
                    ));
                }
            }
        }
        let propensities_known = trajectories
            .iter()
            .all(|t| t.steps.iter().all(|s| s.propensity.is_some()));
        Ok(Self {
            trajectories,
            propensities_known,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Index of the last step, `T`.
    pub fn horizon(&self) -> usize {
        self.trajectories[0].len() - 1
    }

    pub fn propensities_known(&self) -> bool {
        self.propensities_known
    }

    /// Borrowed view of the trajectories at `indices`.
    pub fn select<'a>(&'a self, indices: &'a [usize]) -> impl Iterator<Item = &'a Trajectory> + 'a {
        indices.iter().map(move |&i| &self.trajectories[i])
    }

    /// Errors if any state or action index falls outside the given dimensions.
    pub fn check_dims(&self, num_states: usize, num_actions: usize) -> Result<()> {
        for (i, t) in self.trajectories.iter().enumerate() {
            for (j, step) in t.steps.iter().enumerate() {
                if step.state >= num_states || step.action >= num_actions {
                    return Err(OpeError::DimensionMismatch(format!(
                        "trajectory {i} step {j} has (state {}, action {}) outside {num_states}x{num_actions}",
                        step.state, step.action
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Draws an index from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

pub fn sample_trajectory<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    rng: &mut R,
) -> Result<Trajectory> {
    policy.check_dims(mdp)?;
    Ok(sample_unchecked(mdp, policy, rng))
}

fn sample_unchecked<R: Rng + ?Sized>(mdp: &TabularMdp, policy: &Policy, rng: &mut R) -> Trajectory {
    let mut steps = Vec::with_capacity(mdp.horizon() + 1);
    let mut state = sample_index(mdp.initial_dist(), rng);
    for t in 0..=mdp.horizon() {
        let action = sample_index(policy.row(state), rng);
        let reward_spec = mdp.reward(state, action);
        let reward = reward_spec.support[sample_index(&reward_spec.probs, rng)];
        steps.push(Step {
            state,
            action,
            reward,
            propensity: Some(policy.prob(state, action)),
        });
        if t < mdp.horizon() {
            state = sample_index(mdp.transitions().row(state, action), rng);
        }
    }
    Trajectory::new(steps)
}

pub fn sample_dataset<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    n: usize,
    rng: &mut R,
) -> Result<LoggedDataset> {
    policy.check_dims(mdp)?;
    let trajectories = (0..n).map(|_| sample_unchecked(mdp, policy, rng)).collect();
    LoggedDataset::new(trajectories)
}

use super::{
    Agent, ChargeOutcome, DecisionBudget, Environment, EpisodeTrace, ExhaustionRule, Mode,
    Observation, StepRecord, StreamRng, Transition,
};
use crate::error::{Error, Result};

/// A single episode in progress, advanced one environment step at a time.
///
/// Training loops that interleave evaluation with learning drive this
/// directly; [`run_episode`] is the loop-to-completion form.
#[derive(Debug)]
pub struct Episode {
    observation: Observation,
    budget: Option<DecisionBudget>,
    max_steps: usize,
    exhaustion: ExhaustionRule,
    trace: EpisodeTrace,
    finished: bool,
}

impl Episode {
    pub fn begin<E, A>(
        env: &mut E,
        agent: &mut A,
        budget: Option<DecisionBudget>,
        max_steps: usize,
        rng: &mut StreamRng,
        mode: Mode,
    ) -> Result<Self>
    where
        E: Environment + ?Sized,
        A: Agent + ?Sized,
    {
        let observation = env.reset(rng);
        if observation.dim() != env.observation_dim() {
            return Err(Error::Dimension {
                expected: env.observation_dim(),
                actual: observation.dim(),
            });
        }
        agent.begin_episode(&observation, mode);
        let max_steps = max_steps.min(env.max_steps());
        let mut trace = EpisodeTrace::default();
        let finished = max_steps == 0;
        trace.truncated = finished;
        Ok(Episode {
            observation,
            budget,
            max_steps,
            exhaustion: env.exhaustion_rule(),
            trace,
            finished,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    pub fn budget(&self) -> Option<&DecisionBudget> {
        self.budget.as_ref()
    }

    pub fn trace(&self) -> &EpisodeTrace {
        &self.trace
    }

    pub fn into_trace(self) -> EpisodeTrace {
        self.trace
    }

    /// Executes one environment step.
    pub fn step<E, A>(&mut self, env: &mut E, agent: &mut A) -> Result<()>
    where
        E: Environment + ?Sized,
        A: Agent + ?Sized,
    {
        if self.finished {
            return Err(Error::contract("step called on a finished episode"));
        }
        let charged = agent.needs_decision();
        if charged {
            if let Some(budget) = self.budget.as_mut() {
                if budget.charge() == ChargeOutcome::Exhausted {
                    // Only reachable with a zero limit: later exhaustion is
                    // caught at the end of the preceding step.
                    self.trace.budget_exhausted = true;
                    self.trace.truncated = true;
                    self.finished = true;
                    return Ok(());
                }
            }
        }

        let decision = agent.act(&self.observation)?;
        env.action_spec().validate(&decision.action)?;
        let outcome = env.step(&decision.action)?;
        if outcome.observation.dim() != env.observation_dim() {
            return Err(Error::Dimension {
                expected: env.observation_dim(),
                actual: outcome.observation.dim(),
            });
        }

        let mut reward = outcome.reward;
        let mut done = outcome.terminated;
        let mut truncated = outcome.truncated && !done;
        if !done && !truncated {
            let exhausted = self.budget.is_some_and(|b| b.is_exhausted());
            if exhausted && agent.needs_decision() {
                reward += self.exhaustion.penalty;
                self.trace.budget_exhausted = true;
                if self.exhaustion.terminal {
                    done = true;
                } else {
                    truncated = true;
                }
            } else if self.trace.len() + 1 >= self.max_steps {
                truncated = true;
            }
        }

        let transition = Transition {
            state: std::mem::replace(&mut self.observation, outcome.observation.clone()),
            action: decision.action,
            reward,
            next_state: outcome.observation,
            done,
            truncated,
        };
        agent.observe(&transition)?;
        self.trace.steps.push(StepRecord {
            action: transition.action.values(),
            reward,
            decision_charged: charged,
            macs: decision.macs,
        });
        if done || truncated {
            self.trace.terminated = done && !self.trace.budget_exhausted;
            self.trace.truncated = truncated;
            self.finished = true;
        }
        Ok(())
    }
}

/// Runs one episode to completion.
///
/// Ends on a terminal state, on `max_steps` (capped by the environment's own
/// limit), or when the agent needs a decision and `budget` is exhausted.
pub fn run_episode<E, A>(
    env: &mut E,
    agent: &mut A,
    budget: Option<DecisionBudget>,
    max_steps: usize,
    rng: &mut StreamRng,
    mode: Mode,
) -> Result<EpisodeTrace>
where
    E: Environment + ?Sized,
    A: Agent + ?Sized,
{
    let mut episode = Episode::begin(env, agent, budget, max_steps, rng, mode)?;
    while !episode.is_finished() {
        episode.step(env, agent)?;
    }
    Ok(episode.into_trace())
}

/// Per-episode decision counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionBudget {
    limit: usize,
    used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeOutcome {
    Charged,
    Exhausted,
}

impl DecisionBudget {
    pub fn new(limit: usize) -> Self {
        DecisionBudget { limit, used: 0 }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn remaining(&self) -> usize {
        self.limit - self.used
    }

    pub fn is_exhausted(&self) -> bool {
        self.used >= self.limit
    }

    /// Spends one decision if any remain. `used` never exceeds `limit`.
    pub fn charge(&mut self) -> ChargeOutcome {
        if self.used < self.limit {
            self.used += 1;
            ChargeOutcome::Charged
        } else {
            ChargeOutcome::Exhausted
        }
    }
}

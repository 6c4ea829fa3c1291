//! Binary selection of one undiscovered neighbor through repeated estimates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::estimate::{estimate, Estimate, EstimateError, LabelRange};
use crate::ack::ceil_lg;
use crate::model::{ChannelModel, Label, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "label", rename_all = "snake_case")]
pub enum SelectOutcome {
    Found(Label),
    NoneLeft,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    /// Is anything left in `[1..cap] - X`?
    Full,
    /// Estimate over `[1..2^j]`.
    Doubling { j: u32 },
    /// `[a..b]` holds at least two undiscovered neighbors; estimate its lower half.
    Halving { a: u64, b: u64 },
}

/// Binary-Select driven one estimate at a time.
#[derive(Clone, Debug)]
pub struct BinarySelect {
    cap: u64,
    first_j: u32,
    step: Step,
    estimates: usize,
}

impl BinarySelect {
    /// `max_discovered` is the largest label in `X`.
    pub fn new(cap: u64, max_discovered: u64) -> Self {
        Self {
            cap,
            first_j: ceil_lg(max_discovered.max(1)),
            step: Step::Full,
            estimates: 0,
        }
    }

    /// Range of the next estimate.
    pub fn range(&self) -> LabelRange {
        match self.step {
            Step::Full => (1, self.cap),
            Step::Doubling { j } => (1, self.doubling_top(j)),
            Step::Halving { a, b } => (a, a + (b - a) / 2),
        }
    }

    pub fn estimates(&self) -> usize {
        self.estimates
    }

    fn doubling_top(&self, j: u32) -> u64 {
        if j >= 63 {
            self.cap
        } else {
            (1u64 << j).min(self.cap)
        }
    }

    fn halve(&mut self, a: u64, b: u64) -> Result<Option<SelectOutcome>, EstimateError> {
        if a >= b {
            return Err(EstimateError::JammerDetected);
        }
        self.step = Step::Halving { a, b };
        Ok(None)
    }

    /// Feeds the result of the estimate over [`Self::range`]; returns the
    /// outcome once the selection is over.
    pub fn feed(&mut self, e: Estimate) -> Result<Option<SelectOutcome>, EstimateError> {
        self.estimates += 1;
        if let Estimate::One(t) = e {
            return Ok(Some(SelectOutcome::Found(t)));
        }
        match (self.step, e) {
            (Step::Full, Estimate::Zero) => Ok(Some(SelectOutcome::NoneLeft)),
            (Step::Full, _) => {
                self.step = Step::Doubling { j: self.first_j };
                Ok(None)
            }
            (Step::Doubling { j }, Estimate::Zero) => {
                if self.doubling_top(j) >= self.cap {
                    return Ok(Some(SelectOutcome::NoneLeft));
                }
                self.step = Step::Doubling { j: j + 1 };
                Ok(None)
            }
            (Step::Doubling { j }, _) => self.halve(1, self.doubling_top(j)),
            (Step::Halving { a, b }, Estimate::Zero) => self.halve(a + (b - a) / 2 + 1, b),
            (Step::Halving { a, b }, _) => self.halve(a, a + (b - a) / 2),
        }
    }
}

/// Runs Binary-Select for `s` with helper `h` directly on a topology.
/// Returns the outcome and the number of estimates spent.
pub fn binary_select(
    topology: &Topology,
    channel: ChannelModel,
    s: Label,
    h: Label,
    x: &BTreeSet<Label>,
    cap: u64,
) -> Result<(SelectOutcome, usize), EstimateError> {
    let max = x.iter().next_back().map_or(s.0, |l| l.0.max(s.0));
    let mut sel = BinarySelect::new(cap, max);
    loop {
        let e = estimate(topology, channel, s, h, x, sel.range())?;
        if let Some(out) = sel.feed(e)? {
            return Ok((out, sel.estimates()));
        }
    }
}

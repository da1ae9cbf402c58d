//! Alternation between the prior objective and correspondence supervision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sds,
    Corr,
}

/// Correspondence iterations are the even `t` in `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(rename = "T")]
    pub total_iters: usize,
    pub t_start: usize,
    pub t_end: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            total_iters: 600,
            t_start: 100,
            t_end: 500,
        }
    }
}

impl Schedule {
    pub fn new(total_iters: usize, t_start: usize, t_end: usize) -> Result<Self> {
        let s = Self {
            total_iters,
            t_start,
            t_end,
        };
        s.validate()?;
        Ok(s)
    }

    /// 12000 iterations with correspondence supervision over [3000, 7000].
    pub fn long_run() -> Self {
        Self {
            total_iters: 12000,
            t_start: 3000,
            t_end: 7000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0 {
            return Err(Error::InvalidSchedule("T must be >= 1".into()));
        }
        if !(self.t_start <= self.t_end && self.t_end <= self.total_iters) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 <= t_start ({}) <= t_end ({}) <= T ({})",
                self.t_start, self.t_end, self.total_iters
            )));
        }
        Ok(())
    }

    pub fn mode(&self, t: usize) -> Result<Mode> {
        if t >= self.total_iters {
            return Err(Error::InvalidIteration {
                t,
                total: self.total_iters,
            });
        }
        Ok(if t >= self.t_start && t <= self.t_end && t.is_multiple_of(2) {
            Mode::Corr
        } else {
            Mode::Sds
        })
    }

    /// Number of correspondence iterations in `[0, T)`.
    pub fn corr_count(&self) -> usize {
        let hi = self.t_end.min(self.total_iters - 1);
        if self.t_start > hi {
            return 0;
        }
        let first = self.t_start.next_multiple_of(2);
        if first > hi {
            0
        } else {
            (hi - first) / 2 + 1
        }
    }
}

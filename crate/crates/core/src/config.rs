use serde::{Deserialize, Serialize};

use crate::error::ClockError;

/// Index of a process, `0..n`.
pub type ProcessId = usize;

/// Discretised physical time: `floor(pt / interval_us)`.
pub type Epoch = u64;

/// Largest supported process count; the presence bitmap is one machine word.
pub const MAX_PROCESSES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CounterMode {
    /// One counter per process.
    #[default]
    Full,
    /// A single scalar holding the sum of all counters.
    Sum,
}

impl std::str::FromStr for CounterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(CounterMode::Full),
            "sum" => Ok(CounterMode::Sum),
            other => Err(format!("unknown counter mode `{other}` (expected full or sum)")),
        }
    }
}

/// System parameters shared by every timestamp of one computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClockConfig {
    pub n: usize,
    /// Clock skew measured in epochs. Also the implicit offset of an absent entry.
    pub epsilon: u32,
    pub interval_us: u64,
    pub offset_bits: u32,
    pub counter_bits: u32,
    #[serde(default)]
    pub counter_mode: CounterMode,
}

/// Default counter lane width.
pub const DEFAULT_COUNTER_BITS: u32 = 8;

impl ClockConfig {
    /// Builds a config with the narrowest offset lanes that hold `0..=epsilon`
    /// and [`DEFAULT_COUNTER_BITS`]-bit counters.
    pub fn new(n: usize, epsilon: u32, interval_us: u64) -> Result<Self, ClockError> {
        let cfg = ClockConfig {
            n,
            epsilon,
            interval_us,
            offset_bits: min_offset_bits(epsilon),
            counter_bits: DEFAULT_COUNTER_BITS,
            counter_mode: CounterMode::Full,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_counter_mode(mut self, mode: CounterMode) -> Self {
        self.counter_mode = mode;
        self
    }

    pub fn with_offset_bits(mut self, bits: u32) -> Result<Self, ClockError> {
        self.offset_bits = bits;
        self.validate()?;
        Ok(self)
    }

    pub fn with_counter_bits(mut self, bits: u32) -> Result<Self, ClockError> {
        self.counter_bits = bits;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ClockError> {
        let bad = |msg: String| Err(ClockError::InvalidConfig(msg));
        if self.n == 0 || self.n > MAX_PROCESSES {
            return bad(format!("n = {} outside 1..={MAX_PROCESSES}", self.n));
        }
        if self.epsilon == 0 {
            return bad("epsilon must be at least 1".into());
        }
        if self.interval_us == 0 {
            return bad("interval_us must be at least 1".into());
        }
        let need = min_offset_bits(self.epsilon);
        if self.offset_bits < need || self.offset_bits > 32 {
            return bad(format!(
                "offset_bits = {} (need {need}..=32 for epsilon {})",
                self.offset_bits, self.epsilon
            ));
        }
        if self.counter_bits == 0 || self.counter_bits > 32 {
            return bad(format!("counter_bits = {} outside 1..=32", self.counter_bits));
        }
        Ok(())
    }

    /// Clock skew in microseconds, `epsilon * interval_us`.
    pub fn clockskew_us(&self) -> u64 {
        self.epsilon as u64 * self.interval_us
    }

    /// Largest value a counter lane can hold; counters saturate here.
    pub fn counter_max(&self) -> u32 {
        if self.counter_bits >= 32 {
            u32::MAX
        } else {
            (1u32 << self.counter_bits) - 1
        }
    }

    /// Mask with one bit per process.
    pub fn process_mask(&self) -> u64 {
        if self.n >= 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        }
    }
}

/// `ceil(log2(epsilon + 1))`, at least 1.
pub fn min_offset_bits(epsilon: u32) -> u32 {
    let v = epsilon as u64 + 1;
    let bits = 64 - (v - 1).leading_zeros();
    bits.max(1)
}

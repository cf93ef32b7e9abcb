use rand::Rng;

/// Node-local clock that drifts inside a bounded window ahead of simulator
/// time. Each read draws uniformly from `[max(prev, now), now + skew]`, so
/// readings never go backwards and any two clocks read at the same simulator
/// time differ by at most `skew`.
#[derive(Debug, Clone)]
pub struct NoisyClock {
    nt_us: u64,
    skew_us: u64,
}

impl NoisyClock {
    pub fn new(skew_us: u64) -> Self {
        NoisyClock { nt_us: 0, skew_us }
    }

    pub fn now(&self) -> u64 {
        self.nt_us
    }

    pub fn skew_us(&self) -> u64 {
        self.skew_us
    }

    pub fn read(&mut self, sim_time_us: u64, rng: &mut impl Rng) -> u64 {
        let lo = self.nt_us.max(sim_time_us);
        let hi = sim_time_us + self.skew_us;
        // A clock can only run ahead of the window if simulator time went
        // backwards, which the event loop never does.
        self.nt_us = if lo >= hi { lo } else { rng.gen_range(lo..=hi) };
        self.nt_us
    }
}

use serde::{Deserialize, Serialize};

/// A sparse map `pid -> u32` backed by a presence bitmap and a value vector
/// compacted in ascending pid order. Lookups are `O(1)` via popcount.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub(crate) struct SparseLanes {
    bitmap: u64,
    values: Vec<u32>,
}

impl SparseLanes {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn bitmap(&self) -> u64 {
        self.bitmap
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    fn rank(&self, pid: usize) -> usize {
        (self.bitmap & ((1u64 << pid) - 1)).count_ones() as usize
    }

    #[inline]
    pub fn contains(&self, pid: usize) -> bool {
        pid < 64 && self.bitmap & (1u64 << pid) != 0
    }

    #[inline]
    pub fn get(&self, pid: usize) -> Option<u32> {
        if self.contains(pid) {
            Some(self.values[self.rank(pid)])
        } else {
            None
        }
    }

    pub fn insert(&mut self, pid: usize, value: u32) {
        debug_assert!(pid < 64);
        let r = self.rank(pid);
        if self.contains(pid) {
            self.values[r] = value;
        } else {
            self.bitmap |= 1u64 << pid;
            self.values.insert(r, value);
        }
    }

    pub fn remove(&mut self, pid: usize) -> Option<u32> {
        if !self.contains(pid) {
            return None;
        }
        let r = self.rank(pid);
        self.bitmap &= !(1u64 << pid);
        Some(self.values.remove(r))
    }

    pub fn clear(&mut self) {
        self.bitmap = 0;
        self.values.clear();
    }

    /// Entries in ascending pid order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        crate::packed::SetBits::new(self.bitmap).zip(self.values.iter().copied())
    }

    /// Keeps entries for which `f` returns `Some`, replacing their value.
    pub fn retain_map(&mut self, mut f: impl FnMut(usize, u32) -> Option<u32>) {
        let mut bitmap = 0u64;
        let mut values = Vec::with_capacity(self.values.len());
        for (pid, v) in self.iter() {
            if let Some(nv) = f(pid, v) {
                bitmap |= 1u64 << pid;
                values.push(nv);
            }
        }
        self.bitmap = bitmap;
        self.values = values;
    }
}

impl FromIterator<(usize, u32)> for SparseLanes {
    fn from_iter<T: IntoIterator<Item = (usize, u32)>>(iter: T) -> Self {
        let mut lanes = SparseLanes::new();
        for (pid, v) in iter {
            lanes.insert(pid, v);
        }
        lanes
    }
}

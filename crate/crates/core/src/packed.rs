//! Word-level encoding of RepCl timestamps.
//!
//! Layout, in 32-bit words:
//!
//! ```text
//! word 0            mx (sum mode: counter sum in the high counter_bits bits when mx fits)
//! words 1..=B       presence bitmap, B = ceil(n / 32), low word first
//! next ceil(n*ob/32) offset lanes: lane k at bit k*ob of the concatenated words
//! next ceil(n*cb/32) counter lanes (full mode only), same scheme
//! [1 word]          counter sum, sum mode only when it did not fit in word 0
//! ```
//!
//! Lanes have a fixed position per process regardless of which bits are set,
//! so lane reads and writes are O(1). A cleared bitmap bit means the offset is
//! `epsilon` and the lane content is ignored.

use serde::{Deserialize, Serialize};

use crate::clock::RepClTimestamp;
use crate::config::{ClockConfig, CounterMode, ProcessId};
use crate::error::PackError;

pub const WORD_BITS: u32 = 32;

/// Returns `k` bits of `value` starting at bit `p`.
pub fn extract_bits(value: u64, k: u32, p: u32) -> Result<u64, PackError> {
    if k + p > 64 {
        return Err(PackError::BitRange { bits: k, pos: p, width: 64 });
    }
    if k == 0 {
        return Ok(0);
    }
    let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    Ok(mask & (value >> p))
}

/// Iterator over set-bit indices, lowest first. Each step strips the lowest
/// set bit, so the cost is proportional to the popcount.
#[derive(Debug, Clone, Copy)]
pub struct SetBits(u64);

impl SetBits {
    pub fn new(bitmap: u64) -> Self {
        SetBits(bitmap)
    }
}

impl Iterator for SetBits {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let index = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(index)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let c = self.0.count_ones() as usize;
        (c, Some(c))
    }
}

impl ExactSizeIterator for SetBits {}

pub fn iterate_set_bits(bitmap: u64) -> Vec<usize> {
    SetBits::new(bitmap).collect()
}

/// An encoded timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PackedTimestamp {
    pub words: Vec<u32>,
}

/// Word offsets of each section for a given config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub bitmap_words: usize,
    pub offset_words: usize,
    pub counter_words: usize,
}

impl Layout {
    pub fn for_config(config: &ClockConfig) -> Self {
        let lanes = |bits: u32| (config.n * bits as usize).div_ceil(WORD_BITS as usize);
        Layout {
            bitmap_words: config.n.div_ceil(WORD_BITS as usize),
            offset_words: lanes(config.offset_bits),
            counter_words: match config.counter_mode {
                CounterMode::Full => lanes(config.counter_bits),
                CounterMode::Sum => 0,
            },
        }
    }

    fn bitmap_start(&self) -> usize {
        1
    }

    fn offset_start(&self) -> usize {
        1 + self.bitmap_words
    }

    fn counter_start(&self) -> usize {
        self.offset_start() + self.offset_words
    }

    /// Size without a spilled counter-sum word.
    pub fn base_words(&self) -> usize {
        self.counter_start() + self.counter_words
    }
}

/// Encoded size in words. In sum mode `spilled_sum` adds the extra word used
/// when the sum cannot share word 0 with `mx`.
pub fn encoded_words(config: &ClockConfig, spilled_sum: bool) -> usize {
    Layout::for_config(config).base_words()
        + usize::from(config.counter_mode == CounterMode::Sum && spilled_sum)
}

fn read_lane(words: &[u32], start_bit: usize, bits: u32) -> u64 {
    let word = start_bit / 32;
    let shift = (start_bit % 32) as u32;
    let lo = words.get(word).copied().unwrap_or(0) as u64;
    let hi = words.get(word + 1).copied().unwrap_or(0) as u64;
    let window = lo | (hi << 32);
    extract_bits(window, bits, shift).expect("lane width <= 32")
}

fn write_lane(words: &mut [u32], start_bit: usize, bits: u32, value: u64) {
    let word = start_bit / 32;
    let shift = (start_bit % 32) as u32;
    let mask = ((1u64 << bits) - 1) << shift;
    let lo = words[word] as u64;
    let hi = words.get(word + 1).copied().unwrap_or(0) as u64;
    let window = ((lo | (hi << 32)) & !mask) | ((value << shift) & mask);
    words[word] = window as u32;
    if let Some(h) = words.get_mut(word + 1) {
        *h = (window >> 32) as u32;
    }
}

impl PackedTimestamp {
    fn check_len(&self, config: &ClockConfig) -> Result<Layout, PackError> {
        let layout = Layout::for_config(config);
        let base = layout.base_words();
        let ok = match config.counter_mode {
            CounterMode::Full => self.words.len() == base,
            CounterMode::Sum => self.words.len() == base || self.words.len() == base + 1,
        };
        if !ok {
            return Err(PackError::BadLength {
                got: self.words.len(),
                expected: base.to_string(),
            });
        }
        Ok(layout)
    }

    pub fn bitmap(&self, config: &ClockConfig) -> Result<u64, PackError> {
        let layout = self.check_len(config)?;
        let s = layout.bitmap_start();
        let lo = self.words[s] as u64;
        let hi = if layout.bitmap_words > 1 { self.words[s + 1] as u64 } else { 0 };
        Ok(lo | (hi << 32))
    }

    fn set_bitmap(&mut self, layout: &Layout, bitmap: u64) {
        let s = layout.bitmap_start();
        self.words[s] = bitmap as u32;
        if layout.bitmap_words > 1 {
            self.words[s + 1] = (bitmap >> 32) as u32;
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn check_index(index: usize, config: &ClockConfig) -> Result<(), PackError> {
    if index >= config.n {
        Err(PackError::IndexOutOfRange { index, n: config.n })
    } else {
        Ok(())
    }
}

/// Offset stored for process `index`; `epsilon` when the bitmap bit is clear.
pub fn get_offset_at_index(
    packed: &PackedTimestamp,
    index: usize,
    config: &ClockConfig,
) -> Result<u32, PackError> {
    check_index(index, config)?;
    let layout = packed.check_len(config)?;
    if packed.bitmap(config)? & (1u64 << index) == 0 {
        return Ok(config.epsilon);
    }
    let start = layout.offset_start();
    let bit = index * config.offset_bits as usize;
    Ok(read_lane(&packed.words[start..start + layout.offset_words], bit, config.offset_bits) as u32)
}

/// Writes `value` into lane `index` and sets its bitmap bit.
pub fn set_offset_at_index(
    packed: &PackedTimestamp,
    index: usize,
    value: u32,
    config: &ClockConfig,
) -> Result<PackedTimestamp, PackError> {
    check_index(index, config)?;
    let layout = packed.check_len(config)?;
    if config.offset_bits < 32 && value as u64 >= 1u64 << config.offset_bits {
        return Err(PackError::ValueOverflow { value: value as u64, bits: config.offset_bits });
    }
    let mut out = packed.clone();
    let start = layout.offset_start();
    write_lane(
        &mut out.words[start..start + layout.offset_words],
        index * config.offset_bits as usize,
        config.offset_bits,
        value as u64,
    );
    let bitmap = packed.bitmap(config)? | (1u64 << index);
    out.set_bitmap(&layout, bitmap);
    Ok(out)
}

/// Clears lane `index` and its bitmap bit.
pub fn remove_offset_at_index(
    packed: &PackedTimestamp,
    index: usize,
    config: &ClockConfig,
) -> Result<PackedTimestamp, PackError> {
    check_index(index, config)?;
    let layout = packed.check_len(config)?;
    let mut out = packed.clone();
    let start = layout.offset_start();
    write_lane(
        &mut out.words[start..start + layout.offset_words],
        index * config.offset_bits as usize,
        config.offset_bits,
        0,
    );
    let bitmap = packed.bitmap(config)? & !(1u64 << index);
    out.set_bitmap(&layout, bitmap);
    Ok(out)
}

/// Counter lane of process `index` (full mode).
pub fn get_counter_at_index(
    packed: &PackedTimestamp,
    index: usize,
    config: &ClockConfig,
) -> Result<u32, PackError> {
    check_index(index, config)?;
    let layout = packed.check_len(config)?;
    if config.counter_mode != CounterMode::Full {
        return Ok(0);
    }
    let start = layout.counter_start();
    let bit = index * config.counter_bits as usize;
    Ok(read_lane(&packed.words[start..start + layout.counter_words], bit, config.counter_bits) as u32)
}

fn sum_shift(config: &ClockConfig) -> u32 {
    WORD_BITS - config.counter_bits
}

/// Encodes `ts`. Counters must already fit their lanes.
pub fn encode_timestamp(
    ts: &RepClTimestamp,
    config: &ClockConfig,
) -> Result<PackedTimestamp, PackError> {
    ts.validate(config)?;
    if ts.mx() > u32::MAX as u64 {
        return Err(PackError::EncodingOverflow { field: "mx", value: ts.mx(), bits: 32 });
    }
    let layout = Layout::for_config(config);
    let mut words = vec![0u32; layout.base_words()];
    words[0] = ts.mx() as u32;

    let mut bitmap = 0u64;
    {
        let start = layout.offset_start();
        let lanes = &mut words[start..start + layout.offset_words];
        for (pid, off) in ts.offsets() {
            if config.offset_bits < 32 && off as u64 >= 1u64 << config.offset_bits {
                return Err(PackError::EncodingOverflow {
                    field: "offset",
                    value: off as u64,
                    bits: config.offset_bits,
                });
            }
            write_lane(lanes, pid * config.offset_bits as usize, config.offset_bits, off as u64);
            bitmap |= 1u64 << pid;
        }
    }
    let mut out = PackedTimestamp { words };
    out.set_bitmap(&layout, bitmap);

    let max = config.counter_max() as u64;
    match config.counter_mode {
        CounterMode::Full => {
            let start = layout.counter_start();
            let lanes = &mut out.words[start..start + layout.counter_words];
            for (pid, c) in ts.counters() {
                if c as u64 > max {
                    return Err(PackError::EncodingOverflow {
                        field: "counter",
                        value: c as u64,
                        bits: config.counter_bits,
                    });
                }
                write_lane(lanes, pid * config.counter_bits as usize, config.counter_bits, c as u64);
            }
        }
        CounterMode::Sum => {
            let sum = ts.counter_sum();
            if sum > max {
                return Err(PackError::EncodingOverflow {
                    field: "counter_sum",
                    value: sum,
                    bits: config.counter_bits,
                });
            }
            let shift = sum_shift(config);
            let fits_in_mx_word = config.counter_bits < WORD_BITS && ts.mx() < (1u64 << shift);
            if fits_in_mx_word {
                out.words[0] |= (sum as u32) << shift;
            } else {
                out.words.push(sum as u32);
            }
        }
    }
    Ok(out)
}

/// Decodes a timestamp owned by `owner`. Lanes whose bitmap bit is clear, or
/// whose value is `>= epsilon`, decode as absent.
pub fn decode_timestamp(
    packed: &PackedTimestamp,
    owner: ProcessId,
    config: &ClockConfig,
) -> Result<RepClTimestamp, PackError> {
    let layout = packed.check_len(config)?;
    let bitmap = packed.bitmap(config)?;
    if bitmap & !config.process_mask() != 0 {
        return Err(PackError::IndexOutOfRange {
            index: 63 - bitmap.leading_zeros() as usize,
            n: config.n,
        });
    }
    let spilled = packed.words.len() == layout.base_words() + 1;
    let mx = match config.counter_mode {
        CounterMode::Sum if !spilled => {
            let shift = sum_shift(config);
            (packed.words[0] as u64) & ((1u64 << shift) - 1)
        }
        _ => packed.words[0] as u64,
    };
    let ostart = layout.offset_start();
    let olanes = &packed.words[ostart..ostart + layout.offset_words];
    let offsets: Vec<(usize, u32)> = SetBits::new(bitmap)
        .map(|pid| {
            let v = read_lane(olanes, pid * config.offset_bits as usize, config.offset_bits);
            (pid, v as u32)
        })
        .collect();
    let ts = RepClTimestamp::from_offsets(owner, mx, offsets, config)?;
    let ts = match config.counter_mode {
        CounterMode::Full => {
            let cstart = layout.counter_start();
            let clanes = &packed.words[cstart..cstart + layout.counter_words];
            let counters: Vec<(usize, u32)> = (0..config.n)
                .map(|pid| {
                    let v = read_lane(clanes, pid * config.counter_bits as usize, config.counter_bits);
                    (pid, v as u32)
                })
                .collect();
            ts.with_counters(counters)?
        }
        CounterMode::Sum => {
            let sum = if spilled {
                *packed.words.last().expect("non-empty")
            } else if config.counter_bits < WORD_BITS {
                packed.words[0] >> sum_shift(config)
            } else {
                0
            };
            ts.with_counter_sum(sum)?
        }
    };
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn extract_examples() {
        assert_eq!(extract_bits(0b110110, 3, 1).unwrap(), 0b011);
        assert_eq!(extract_bits(0xdead_beef, 8, 0).unwrap(), 0xef);
        assert_eq!(extract_bits(0xF0, 4, 4).unwrap(), 0xF);
        assert_eq!(extract_bits(u64::MAX, 64, 0).unwrap(), u64::MAX);
        assert!(extract_bits(1, 60, 10).is_err());
    }

    #[test]
    fn set_bit_traversal() {
        assert!(iterate_set_bits(0).is_empty());
        assert_eq!(iterate_set_bits(0b1010), vec![1, 3]);
        assert_eq!(iterate_set_bits(u64::MAX), (0..64).collect::<Vec<_>>());
        assert_eq!(SetBits::new(0b1011).len(), 3);
    }

    /// mx = 50, processes 0 and 2 present, process 2 at offset 10 with counter 2,
    /// 4-bit offsets and 2-bit counters.
    fn figure_fixture() -> (ClockConfig, RepClTimestamp) {
        let c = ClockConfig::new(3, 15, 1).unwrap().with_counter_bits(2).unwrap();
        let ts = RepClTimestamp::from_offsets(0, 50, [(0, 0), (2, 10)], &c)
            .unwrap()
            .with_counters([(2, 2)])
            .unwrap();
        (c, ts)
    }

    #[test]
    fn figure_fixture_takes_four_words() {
        let (c, ts) = figure_fixture();
        let p = encode_timestamp(&ts, &c).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.words[0], 50);
        assert_eq!(p.bitmap(&c).unwrap(), 0b101);
        assert_eq!(get_offset_at_index(&p, 2, &c).unwrap(), 10);
        assert_eq!(get_offset_at_index(&p, 1, &c).unwrap(), 15);
        assert_eq!(get_counter_at_index(&p, 2, &c).unwrap(), 2);
        assert_eq!(decode_timestamp(&p, 0, &c).unwrap(), ts);
    }

    #[test]
    fn lane_setters() {
        let c = ClockConfig::new(10, 15, 1).unwrap();
        let (_, base) = figure_fixture();
        let _ = base;
        let p = encode_timestamp(&RepClTimestamp::fresh(3, 7, &c), &c).unwrap();
        assert_eq!(iterate_set_bits(p.bitmap(&c).unwrap()), vec![3]);
        let p2 = set_offset_at_index(&p, 5, 9, &c).unwrap();
        assert_eq!(get_offset_at_index(&p2, 5, &c).unwrap(), 9);
        assert_eq!(get_offset_at_index(&p2, 3, &c).unwrap(), 0);
        let p3 = remove_offset_at_index(&p2, 5, &c).unwrap();
        assert_eq!(get_offset_at_index(&p3, 5, &c).unwrap(), c.epsilon);
        assert_eq!(p3, p);
        assert!(set_offset_at_index(&p, 10, 1, &c).is_err());
        assert!(set_offset_at_index(&p, 1, 16, &c).is_err());
    }

    #[test]
    fn lanes_straddle_word_boundaries() {
        // 5-bit lanes: lane 6 covers bits 30..35.
        let c = ClockConfig::new(12, 20, 1).unwrap();
        assert_eq!(c.offset_bits, 5);
        let p = encode_timestamp(&RepClTimestamp::fresh(0, 1, &c), &c).unwrap();
        let p = set_offset_at_index(&p, 6, 19, &c).unwrap();
        let p = set_offset_at_index(&p, 7, 17, &c).unwrap();
        assert_eq!(get_offset_at_index(&p, 6, &c).unwrap(), 19);
        assert_eq!(get_offset_at_index(&p, 7, &c).unwrap(), 17);
        assert_eq!(get_offset_at_index(&p, 5, &c).unwrap(), c.epsilon);
    }

    #[test]
    fn size_formula() {
        for n in 1..=64 {
            for eps in [1u32, 5, 15, 100, 999] {
                let c = ClockConfig::new(n, eps, 1).unwrap();
                let p = encode_timestamp(&RepClTimestamp::fresh(0, 9, &c), &c).unwrap();
                let bitmap_words = if n > 32 { 2 } else { 1 };
                let expect = 1
                    + bitmap_words
                    + (n * c.offset_bits as usize).div_ceil(32)
                    + (n * c.counter_bits as usize).div_ceil(32);
                assert_eq!(p.len(), expect);
                assert_eq!(encoded_words(&c, false), expect);
            }
        }
    }

    #[test]
    fn sum_mode_placement() {
        let c = ClockConfig::new(5, 15, 1).unwrap().with_counter_mode(CounterMode::Sum);
        let small = RepClTimestamp::fresh(1, 62, &c).with_counter_sum(3).unwrap();
        let p = encode_timestamp(&small, &c).unwrap();
        assert_eq!(p.len(), encoded_words(&c, false));
        assert_eq!(decode_timestamp(&p, 1, &c).unwrap(), small);

        let big = RepClTimestamp::fresh(1, 1 << 30, &c).with_counter_sum(3).unwrap();
        let p = encode_timestamp(&big, &c).unwrap();
        assert_eq!(p.len(), encoded_words(&c, true));
        assert_eq!(decode_timestamp(&p, 1, &c).unwrap(), big);
    }

    #[test]
    fn overflow_is_reported() {
        let c = ClockConfig::new(2, 5, 1).unwrap().with_counter_bits(2).unwrap();
        let t = RepClTimestamp::fresh(0, 5, &c).with_counters([(0, 4)]).unwrap();
        assert!(matches!(encode_timestamp(&t, &c), Err(PackError::EncodingOverflow { .. })));
        let t = RepClTimestamp::fresh(0, 1 << 33, &c);
        assert!(encode_timestamp(&t, &c).is_err());
    }

    pub(crate) fn random_valid(rng: &mut impl Rng) -> (ClockConfig, RepClTimestamp) {
        let n = rng.gen_range(1..=64);
        let eps = rng.gen_range(1..=1000);
        let mode = if rng.gen_bool(0.5) { CounterMode::Full } else { CounterMode::Sum };
        let c = ClockConfig::new(n, eps, 1)
            .unwrap()
            .with_counter_bits(rng.gen_range(1..=16))
            .unwrap()
            .with_counter_mode(mode);
        let owner = rng.gen_range(0..n);
        let entries: Vec<(usize, u32)> = (0..n)
            .filter_map(|k| if rng.gen_bool(0.3) { Some((k, rng.gen_range(0..eps))) } else { None })
            .collect();
        let mx = if rng.gen_bool(0.1) { rng.gen_range(0..=u32::MAX as u64) } else { rng.gen_range(0..100_000) };
        let base = RepClTimestamp::from_offsets(owner, mx, entries, &c).unwrap();
        let ts = match mode {
            CounterMode::Full => base
                .with_counters((0..n).filter_map(|k| if rng.gen_bool(0.1) { Some((k, rng.gen_range(0..=c.counter_max()))) } else { None }))
                .unwrap(),
            CounterMode::Sum => base.with_counter_sum(rng.gen_range(0..=c.counter_max())).unwrap(),
        };
        (c, ts)
    }

    proptest! {
        #[test]
        fn round_trip(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (c, ts) = random_valid(&mut rng);
            let p = encode_timestamp(&ts, &c).unwrap();
            prop_assert_eq!(iterate_set_bits(p.bitmap(&c).unwrap()), ts.offsets().map(|(k, _)| k).collect::<Vec<_>>());
            prop_assert_eq!(decode_timestamp(&p, ts.owner(), &c).unwrap(), ts);
        }
    }
}

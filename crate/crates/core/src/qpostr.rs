//! Positional string encoding: a position register in uniform superposition,
//! entangled with a character register holding the character at that position.
//!
//! Qubits `0..n` hold the position, `n..n+m` the character, and a readout
//! circuit appends `m` output qubits. Register values are little-endian in
//! qubit order.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::sim::{Circuit, Control, GateOp, Polarity, StateVector};

/// Characters indexed by code. Code 0 is the padding character.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlphabetMap {
    slots: Vec<Option<char>>,
    lookup: BTreeMap<char, usize>,
}

pub(crate) fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

impl AlphabetMap {
    fn from_slots(slots: Vec<Option<char>>) -> Result<Self> {
        if slots.first().copied().flatten().is_none() {
            return Err(Error::Encoding("alphabet needs a padding character at code 0".into()));
        }
        let mut lookup = BTreeMap::new();
        for (code, c) in slots.iter().enumerate() {
            if let Some(c) = c {
                if lookup.insert(*c, code).is_some() {
                    return Err(Error::Encoding(format!("duplicate character {c:?} in alphabet")));
                }
            }
        }
        Ok(Self { slots, lookup })
    }

    /// Ordinal codes: `padding` is 0, `chars[i]` is `i + 1`.
    pub fn new(padding: char, chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let slots = std::iter::once(padding).chain(chars).map(Some).collect();
        Self::from_slots(slots)
    }

    /// Space-padded ordinal alphabet over the given characters.
    pub fn from_chars(chars: &str) -> Result<Self> {
        Self::new(' ', chars.chars())
    }

    /// Space plus `a..z`; 5 character bits.
    pub fn lowercase() -> Self {
        Self::new(' ', 'a'..='z').expect("static alphabet")
    }

    /// 7-bit mode: printable characters keep their ASCII code, space is padding.
    pub fn ascii7() -> Self {
        let mut slots = vec![None; 128];
        slots[0] = Some(' ');
        for b in 33u8..=126 {
            slots[b as usize] = Some(b as char);
        }
        Self::from_slots(slots).expect("static alphabet")
    }

    /// Sorted distinct non-space characters of `text`, space-padded.
    pub fn for_text(text: &str) -> Self {
        let set: BTreeSet<char> = text.chars().filter(|c| *c != ' ').collect();
        Self::new(' ', set).expect("distinct by construction")
    }

    /// `auto` (derived from `text`), `lower`, `ascii`, or an alphabet file
    /// body listing the non-padding characters (whitespace ignored).
    pub fn resolve(spec: &str, text: &str) -> Result<Self> {
        match spec {
            "auto" => Ok(Self::for_text(text)),
            "lower" => Ok(Self::lowercase()),
            "ascii" => Ok(Self::ascii7()),
            _ => Err(Error::Encoding(format!("unknown builtin alphabet {spec:?}"))),
        }
    }

    pub fn parse_file(contents: &str) -> Result<Self> {
        Self::new(' ', contents.chars().filter(|c| !c.is_whitespace()))
    }

    /// Number of code slots, including padding and unused codes.
    pub fn size(&self) -> usize {
        self.slots.len()
    }

    pub fn char_bits(&self) -> usize {
        ceil_log2(self.slots.len() as u64).max(1) as usize
    }

    pub fn padding(&self) -> char {
        self.slots[0].expect("checked at construction")
    }

    pub fn code(&self, c: char) -> Option<usize> {
        self.lookup.get(&c).copied()
    }

    pub fn char_at(&self, code: usize) -> Option<char> {
        self.slots.get(code).copied().flatten()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| self.code(c).ok_or_else(|| Error::Encoding(format!("character {c:?} not in alphabet"))))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QpostrLayout {
    pub pos_bits: usize,
    pub char_bits: usize,
    pub text_length: usize,
}

impl QpostrLayout {
    pub fn num_qubits(&self) -> usize {
        self.pos_bits + self.char_bits
    }

    pub fn positions(&self) -> usize {
        1 << self.pos_bits
    }

    pub fn char_qubit(&self, bit: usize) -> usize {
        self.pos_bits + bit
    }

    fn position_controls(&self, p: usize) -> Vec<Control> {
        (0..self.pos_bits)
            .map(|k| Control { qubit: k, polarity: Polarity::from_bit(p >> k & 1) })
            .collect()
    }
}

/// Encoding layout plus an output register of `char_bits` qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadoutLayout {
    pub base: QpostrLayout,
}

impl ReadoutLayout {
    pub fn num_qubits(&self) -> usize {
        self.base.num_qubits() + self.base.char_bits
    }

    pub fn output_qubit(&self, bit: usize) -> usize {
        self.base.num_qubits() + bit
    }
}

pub fn layout_for(text: &str, alphabet: &AlphabetMap) -> Result<QpostrLayout> {
    alphabet.encode(text)?;
    let len = text.chars().count();
    Ok(QpostrLayout {
        pos_bits: ceil_log2(len.max(2) as u64) as usize,
        char_bits: alphabet.char_bits(),
        text_length: len,
    })
}

pub fn build_encoding_circuit(text: &str, alphabet: &AlphabetMap) -> Result<Circuit> {
    let layout = layout_for(text, alphabet)?;
    let mut c = Circuit::new(layout.num_qubits())?;
    encode_into(&mut c, &layout, &alphabet.encode(text)?)?;
    Ok(c)
}

fn encode_into(c: &mut Circuit, layout: &QpostrLayout, codes: &[usize]) -> Result<()> {
    for q in 0..layout.pos_bits {
        c.push(GateOp::h(q))?;
    }
    for (p, &code) in codes.iter().enumerate() {
        for b in 0..layout.char_bits {
            if code >> b & 1 == 1 {
                c.push(GateOp::mcx(layout.position_controls(p), layout.char_qubit(b)))?;
            }
        }
    }
    Ok(())
}

/// `2^{-n/2} Σ_p |p⟩|c_p⟩`, built directly from the amplitudes.
pub fn expected_state(text: &str, alphabet: &AlphabetMap) -> Result<StateVector> {
    let layout = layout_for(text, alphabet)?;
    let codes = alphabet.encode(text)?;
    if layout.num_qubits() > crate::sim::MAX_WIDTH {
        return Err(Error::Capacity { width: layout.num_qubits(), max: crate::sim::MAX_WIDTH });
    }
    let amp = (layout.positions() as f64).powf(-0.5);
    let mut amps = vec![C64::new(0.0, 0.0); 1 << layout.num_qubits()];
    for p in 0..layout.positions() {
        let code = codes.get(p).copied().unwrap_or(0);
        amps[p | code << layout.pos_bits] = C64::new(amp, 0.0);
    }
    StateVector::from_amplitudes(amps)
}

pub fn build_readout_circuit(text: &str, alphabet: &AlphabetMap) -> Result<(Circuit, ReadoutLayout)> {
    let base = layout_for(text, alphabet)?;
    let layout = ReadoutLayout { base };
    let mut c = Circuit::new(layout.num_qubits())?;
    encode_into(&mut c, &base, &alphabet.encode(text)?)?;
    for p in 0..base.positions() {
        for b in 0..base.char_bits {
            let mut controls = base.position_controls(p);
            controls.push(Control::closed(base.char_qubit(b)));
            c.push(GateOp::mcx(controls, layout.output_qubit(b)))?;
        }
    }
    Ok((c, layout))
}

/// Per-position character counts.
pub type PositionHistogram = BTreeMap<usize, BTreeMap<char, u64>>;

/// Decode readout shots into a per-position histogram. Any disagreement
/// (output vs character register, two characters at one position, text
/// past the end) is a decoder error: it cannot occur in exact simulation.
pub fn decode_samples(
    samples: &[usize],
    layout: &ReadoutLayout,
    alphabet: &AlphabetMap,
) -> Result<PositionHistogram> {
    let base = layout.base;
    let (n, m) = (base.pos_bits, base.char_bits);
    let limit = 1usize << layout.num_qubits();
    let mask = (1usize << m) - 1;
    let mut hist = PositionHistogram::new();
    for &s in samples {
        if s >= limit {
            return Err(Error::Decode(format!("basis index {s} out of range for {} qubits", layout.num_qubits())));
        }
        let p = s & ((1 << n) - 1);
        let c = s >> n & mask;
        let o = s >> (n + m) & mask;
        if o != c {
            return Err(Error::Decode(format!("output {o} disagrees with character register {c} at position {p}")));
        }
        let ch = alphabet
            .char_at(o)
            .ok_or_else(|| Error::Decode(format!("code {o} has no character")))?;
        if p >= base.text_length && o != 0 {
            return Err(Error::Decode(format!("non-padding {ch:?} past end of text at position {p}")));
        }
        let slot = hist.entry(p).or_default();
        *slot.entry(ch).or_default() += 1;
        if slot.len() > 1 {
            return Err(Error::Decode(format!("conflicting characters at position {p}")));
        }
    }
    Ok(hist)
}

/// The padded string, if every position was observed.
pub fn reconstruct(hist: &PositionHistogram, layout: &ReadoutLayout) -> Option<String> {
    (0..layout.base.positions())
        .map(|p| hist.get(&p).and_then(|h| h.keys().next().copied()))
        .collect()
}

/// `(position bits, character bits, total)`. Each register gets at least
/// one qubit, matching the layouts actually built.
pub fn resource_estimate(char_positions: u64, alphabet_size: u64) -> (u32, u32, u32) {
    let n = ceil_log2(char_positions).max(1);
    let m = ceil_log2(alphabet_size).max(1);
    (n, m, n + m)
}

/// Smallest `s` with `(1 − (1 − 1/P)^s)^P ≥ confidence`.
pub fn shots_for_recovery(positions: u64, confidence: f64) -> Result<u64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence {confidence} not in (0, 1)")));
    }
    if positions == 0 {
        return Err(Error::InvalidArgument("positions must be at least 1".into()));
    }
    if positions == 1 {
        return Ok(1);
    }
    let p = positions as f64;
    let miss = (1.0 - 1.0 / p).ln();
    let covered = |s: u64| (p * (-(s as f64 * miss).exp_m1()).ln()).exp();
    // exponential search, then bisection
    let mut hi = 1u64;
    while covered(hi) < confidence {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if covered(mid) >= confidence {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

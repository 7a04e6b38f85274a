//! Behavior-derived state-sequence checkers.
//!
//! A checker watches a small projection of the design state (a "state
//! key" of up to 128 selected bits) and learns, from one fault-free run,
//! the set of consecutive key pairs that occur. At detection time any
//! pair outside the learned set flags a control-flow error at the cycle
//! where the unseen pair completed.
//!
//! The projection is configured by an observation [`Level`] (which
//! signals contribute) and a [`BitType`] (which bits of each signal
//! contribute). Learned tables serialize to a line-oriented text format
//! with a canonical ordering, so identical tables produce identical
//! files.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::signal::{BitVec, SignalClass, SignalKind, SignalRef};
use crate::sim::{CycleHook, Snapshot, Trace};

/// Which control signals feed the state key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    /// Control-class primary outputs of the design.
    PrimaryOutputs,
    /// Control-class outputs of internal submodules.
    SubmoduleOutputs,
    /// Control-class internal registers.
    Registers,
}

impl Level {
    /// Numeric code used in files and configs (1..=3).
    pub fn code(self) -> u8 {
        match self {
            Level::PrimaryOutputs => 1,
            Level::SubmoduleOutputs => 2,
            Level::Registers => 3,
        }
    }

    /// Parses the numeric code.
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Level::PrimaryOutputs),
            2 => Ok(Level::SubmoduleOutputs),
            3 => Ok(Level::Registers),
            other => Err(Error::Config(format!(
                "observation level must be 1, 2 or 3, got {other}"
            ))),
        }
    }

    fn matches(self, sig: &SignalRef) -> bool {
        if sig.class != SignalClass::Control {
            return false;
        }
        match self {
            Level::PrimaryOutputs => sig.kind == SignalKind::PrimaryOutput,
            Level::SubmoduleOutputs => sig.kind == SignalKind::SubmoduleOutput,
            Level::Registers => sig.kind == SignalKind::Register,
        }
    }
}

/// Which bits of each selected signal feed the state key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BitType {
    /// Every bit, most significant first.
    All,
    /// The most significant bit only.
    Msb,
    /// The most significant bit of the signal's used value range.
    UsedMsb,
    /// The least significant bit only.
    Lsb,
}

impl BitType {
    /// Numeric code used in files and configs (1..=4).
    pub fn code(self) -> u8 {
        match self {
            BitType::All => 1,
            BitType::Msb => 2,
            BitType::UsedMsb => 3,
            BitType::Lsb => 4,
        }
    }

    /// Parses the numeric code.
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(BitType::All),
            2 => Ok(BitType::Msb),
            3 => Ok(BitType::UsedMsb),
            4 => Ok(BitType::Lsb),
            other => Err(Error::Config(format!(
                "bit type must be 1, 2, 3 or 4, got {other}"
            ))),
        }
    }
}

/// Highest bit index that actually varies per signal path, for
/// [`BitType::UsedMsb`]. Designs that offer that bit type publish one
/// entry per control register.
pub type UsedMsbMap = std::collections::HashMap<String, u16>;

/// Selects the key bits for `level`/`bit_type` over `signals`.
///
/// Signals contribute in declaration order; within a signal, bits run
/// most significant to least significant. The result is the entry list
/// of a [`SequenceTable`].
pub fn select_bits(
    signals: &[SignalRef],
    level: Level,
    bit_type: BitType,
    used_msb: &UsedMsbMap,
) -> Result<Vec<(String, u16)>> {
    let mut entries = Vec::new();
    for sig in signals.iter().filter(|s| level.matches(s)) {
        match bit_type {
            BitType::All => {
                for bit in (0..sig.width).rev() {
                    entries.push((sig.path.clone(), bit));
                }
            }
            BitType::Msb => entries.push((sig.path.clone(), sig.width - 1)),
            BitType::Lsb => entries.push((sig.path.clone(), 0)),
            BitType::UsedMsb => {
                let bit = *used_msb.get(&sig.path).ok_or_else(|| {
                    Error::Config(format!(
                        "bit type 3 needs a used-range entry for {}",
                        sig.path
                    ))
                })?;
                if bit >= sig.width {
                    return Err(Error::Config(format!(
                        "used-range bit {bit} out of range for {} (width {})",
                        sig.path, sig.width
                    )));
                }
                entries.push((sig.path.clone(), bit));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::Config(format!(
            "no control signals at observation level {}",
            level.code()
        )));
    }
    if entries.len() > 128 {
        return Err(Error::Config(format!(
            "state key would need {} bits, the limit is 128",
            entries.len()
        )));
    }
    Ok(entries)
}

/// Outcome of one checker over one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeqVerdict {
    /// True when any check flagged the run.
    pub detected: bool,
    /// Cycle of the first unseen pair, if one occurred mid-run.
    pub detect_cycle: Option<u64>,
    /// True when only the end-state comparison flagged the run.
    pub via_final: bool,
}

/// A learned transition table: the pair set of one fault-free run plus
/// its final state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceTable {
    /// Identifier, used as the table's file stem and report column name.
    pub name: String,
    /// Observation level the entries were selected at.
    pub level: Level,
    /// Bit type the entries were selected at.
    pub bit_type: BitType,
    entries: Vec<(String, u16)>,
    pairs: HashSet<(Option<u128>, u128)>,
    end_state: Option<u128>,
}

impl SequenceTable {
    /// Learns a table from a key sequence (one key per cycle, first row
    /// first). The predecessor of the first key is a sentinel distinct
    /// from every real key.
    pub fn learn_from_keys(
        name: impl Into<String>,
        level: Level,
        bit_type: BitType,
        entries: Vec<(String, u16)>,
        keys: impl IntoIterator<Item = u128>,
    ) -> Result<Self> {
        validate_entries(&entries)?;
        let mut pairs = HashSet::new();
        let mut prev: Option<u128> = None;
        let mut last: Option<u128> = None;
        for key in keys {
            pairs.insert((prev, key));
            prev = Some(key);
            last = Some(key);
        }
        let end_state = last.ok_or_else(|| {
            Error::Config("cannot learn a sequence table from an empty run".into())
        })?;
        Ok(SequenceTable {
            name: name.into(),
            level,
            bit_type,
            entries,
            pairs,
            end_state: Some(end_state),
        })
    }

    /// Learns a table from a recorded fault-free trace.
    pub fn learn(
        name: impl Into<String>,
        level: Level,
        bit_type: BitType,
        entries: Vec<(String, u16)>,
        trace: &Trace,
    ) -> Result<Self> {
        let slots = resolve_entries(&entries, &trace.watched)?;
        let keys = trace.rows.iter().map(|row| key_of_row(&slots, row));
        Self::learn_from_keys(name, level, bit_type, entries, keys)
    }

    /// Key width in bits.
    pub fn width(&self) -> u16 {
        self.entries.len() as u16
    }

    /// The (path, bit) list that forms the key, most significant first.
    pub fn entries(&self) -> &[(String, u16)] {
        &self.entries
    }

    /// Number of learned pairs.
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// True when `(prev, next)` was seen during learning.
    pub fn contains(&self, prev: Option<u128>, next: u128) -> bool {
        self.pairs.contains(&(prev, next))
    }

    /// Final state of the learning run, when recorded.
    pub fn end_state(&self) -> Option<u128> {
        self.end_state
    }

    /// Checks a key sequence against the table. The first pair outside
    /// the table flags the run at that key's cycle; with `check_end`,
    /// a run that stays inside the table but ends in a different state
    /// is flagged by the final comparison alone.
    pub fn detect_keys(
        &self,
        keys: impl IntoIterator<Item = u128>,
        check_end: bool,
    ) -> Result<SeqVerdict> {
        let expected_end = self.require_end(check_end)?;
        let mut prev: Option<u128> = None;
        let mut last: Option<u128> = None;
        let mut fault_cycle: Option<u64> = None;
        for (row, key) in keys.into_iter().enumerate() {
            if fault_cycle.is_none() && !self.pairs.contains(&(prev, key)) {
                fault_cycle = Some(Trace::cycle_of_row(row));
            }
            prev = Some(key);
            last = Some(key);
        }
        Ok(close_verdict(fault_cycle, expected_end, last))
    }

    /// Checks a recorded trace against the table.
    pub fn detect(&self, trace: &Trace, check_end: bool) -> Result<SeqVerdict> {
        let slots = resolve_entries(&self.entries, &trace.watched)?;
        let keys = trace.rows.iter().map(|row| key_of_row(&slots, row));
        self.detect_keys(keys, check_end)
    }

    fn require_end(&self, check_end: bool) -> Result<Option<u128>> {
        if !check_end {
            return Ok(None);
        }
        match self.end_state {
            Some(end) => Ok(Some(end)),
            None => Err(Error::Config(format!(
                "table {} has no end state but the end check is enabled",
                self.name
            ))),
        }
    }
}

fn validate_entries(entries: &[(String, u16)]) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::Config("a sequence table needs at least one key bit".into()));
    }
    if entries.len() > 128 {
        return Err(Error::Config(format!(
            "state key would need {} bits, the limit is 128",
            entries.len()
        )));
    }
    Ok(())
}

/// Maps entry paths to watch-list slots, checking bit ranges.
fn resolve_entries(entries: &[(String, u16)], watched: &[SignalRef]) -> Result<Vec<(usize, u16)>> {
    entries
        .iter()
        .map(|(path, bit)| {
            let slot = watched
                .iter()
                .position(|s| &s.path == path)
                .ok_or_else(|| Error::Config(format!("key signal {path} is not watched")))?;
            let width = watched[slot].width;
            if *bit >= width {
                return Err(Error::Config(format!(
                    "key bit {bit} out of range for {path} (width {width})"
                )));
            }
            Ok((slot, *bit))
        })
        .collect()
}

/// Concatenates the selected bits of one row into a key, first entry
/// most significant.
fn key_of_row(slots: &[(usize, u16)], row: &[BitVec]) -> u128 {
    let mut key = 0u128;
    for &(slot, bit) in slots {
        let b = row[slot].bit(bit).expect("entry bits are validated at attach");
        key = (key << 1) | u128::from(b);
    }
    key
}

fn close_verdict(
    fault_cycle: Option<u64>,
    expected_end: Option<u128>,
    last: Option<u128>,
) -> SeqVerdict {
    let via_final = fault_cycle.is_none()
        && expected_end.is_some_and(|end| last != Some(end));
    SeqVerdict {
        detected: fault_cycle.is_some() || via_final,
        detect_cycle: fault_cycle,
        via_final,
    }
}

/// Online checker: one [`SequenceTable`] attached to a live run.
pub struct SeqMonitor<'a> {
    table: &'a SequenceTable,
    slots: Vec<(usize, u16)>,
    check_end: bool,
    prev: Option<u128>,
    last: Option<u128>,
    fault_cycle: Option<u64>,
}

impl<'a> SeqMonitor<'a> {
    /// Binds the table's key bits to positions in `watched`.
    pub fn attach(
        table: &'a SequenceTable,
        watched: &[SignalRef],
        check_end: bool,
    ) -> Result<Self> {
        table.require_end(check_end)?;
        let slots = resolve_entries(&table.entries, watched)?;
        Ok(SeqMonitor {
            table,
            slots,
            check_end,
            prev: None,
            last: None,
            fault_cycle: None,
        })
    }

    /// Cycle of the first unseen pair, if any so far.
    pub fn fault_cycle(&self) -> Option<u64> {
        self.fault_cycle
    }

    /// Closes the run and reports the verdict.
    pub fn finalize(&self) -> SeqVerdict {
        let expected_end = if self.check_end {
            self.table.end_state
        } else {
            None
        };
        close_verdict(self.fault_cycle, expected_end, self.last)
    }
}

impl CycleHook for SeqMonitor<'_> {
    fn on_reset(&mut self, _snap: &Snapshot<'_>) {
        // The learned sequence starts at the first executed cycle; the
        // reset state is not part of it.
        self.prev = None;
        self.last = None;
        self.fault_cycle = None;
    }

    fn on_cycle(&mut self, cycle: u64, snap: &Snapshot<'_>) {
        let mut key = 0u128;
        for &(slot, bit) in &self.slots {
            let b = snap
                .value(slot)
                .bit(bit)
                .expect("entry bits are validated at attach");
            key = (key << 1) | u128::from(b);
        }
        if self.fault_cycle.is_none() && !self.table.contains(self.prev, key) {
            self.fault_cycle = Some(cycle);
        }
        self.prev = Some(key);
        self.last = Some(key);
    }
}

impl fmt::Display for SequenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&write_seq_file(std::slice::from_ref(self)))
    }
}

/// Parses a sequence-table file. A file holds one or more tables, each
/// opened by a `seqtable` header line.
pub fn parse_seq_file(file: &str, text: &str) -> Result<Vec<SequenceTable>> {
    let mut tables: Vec<SequenceTable> = Vec::new();
    let mut current: Option<PartialTable> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let directive = words.next().expect("non-empty line has a first word");
        let err = |msg: String| Error::parse(file, lineno, msg);

        if directive == "seqtable" {
            if let Some(done) = current.take() {
                tables.push(done.finish(file, lineno)?);
            }
            current = Some(PartialTable::from_header(words, file, lineno)?);
            continue;
        }
        let table = current
            .as_mut()
            .ok_or_else(|| err(format!("{directive} before any seqtable header")))?;
        match directive {
            "entry" => {
                let path = words
                    .next()
                    .ok_or_else(|| err("entry needs a signal path".into()))?;
                let bit: u16 = words
                    .next()
                    .ok_or_else(|| err("entry needs a bit index".into()))?
                    .parse()
                    .map_err(|_| err("entry bit index must be an integer".into()))?;
                if words.next().is_some() {
                    return Err(err("trailing tokens after entry".into()));
                }
                table.entries.push((path.to_string(), bit));
            }
            "pair" => {
                let spec = words
                    .next()
                    .ok_or_else(|| err("pair needs a prev,next argument".into()))?;
                if words.next().is_some() {
                    return Err(err("trailing tokens after pair".into()));
                }
                let (prev_txt, next_txt) = spec
                    .split_once(',')
                    .ok_or_else(|| err("pair argument must be prev,next".into()))?;
                let prev = if prev_txt == "-" {
                    None
                } else {
                    Some(parse_key(prev_txt, table.width).map_err(err)?)
                };
                let next = parse_key(next_txt, table.width).map_err(err)?;
                if !table.pairs.insert((prev, next)) {
                    return Err(err(format!("duplicate pair {spec}")));
                }
            }
            other => return Err(err(format!("unknown directive {other}"))),
        }
    }
    if let Some(done) = current.take() {
        let last = text.lines().count();
        tables.push(done.finish(file, last)?);
    }
    if tables.is_empty() {
        return Err(Error::parse(file, 1, "no seqtable header found".to_string()));
    }
    Ok(tables)
}

struct PartialTable {
    name: String,
    level: Level,
    bit_type: BitType,
    width: u16,
    end_state: Option<u128>,
    entries: Vec<(String, u16)>,
    pairs: HashSet<(Option<u128>, u128)>,
}

impl PartialTable {
    fn from_header<'w>(
        words: impl Iterator<Item = &'w str>,
        file: &str,
        lineno: usize,
    ) -> Result<Self> {
        let err = |msg: String| Error::parse(file, lineno, msg);
        let mut name = None;
        let mut level = None;
        let mut bit_type = None;
        let mut width = None;
        let mut end_txt: Option<String> = None;
        for word in words {
            match word.split_once('=') {
                None if name.is_none() => name = Some(word.to_string()),
                None => return Err(err(format!("unexpected token {word}"))),
                Some(("level", v)) if level.is_none() => {
                    let code: u8 = v
                        .parse()
                        .map_err(|_| err("level must be an integer".into()))?;
                    level = Some(Level::from_code(code).map_err(|e| err(e.to_string()))?);
                }
                Some(("type", v)) if bit_type.is_none() => {
                    let code: u8 = v
                        .parse()
                        .map_err(|_| err("type must be an integer".into()))?;
                    bit_type = Some(BitType::from_code(code).map_err(|e| err(e.to_string()))?);
                }
                Some(("width", v)) if width.is_none() => {
                    width = Some(
                        v.parse::<u16>()
                            .map_err(|_| err("width must be an integer".into()))?,
                    );
                }
                Some(("end", v)) if end_txt.is_none() => end_txt = Some(v.to_string()),
                Some((k, _)) => return Err(err(format!("duplicate or unknown key {k}"))),
            }
        }
        let name = name.ok_or_else(|| err("seqtable needs a name".into()))?;
        let width = width.ok_or_else(|| err("seqtable needs width=".into()))?;
        if width == 0 || width > 128 {
            return Err(err(format!("width must be 1..=128, got {width}")));
        }
        let end_txt = end_txt.ok_or_else(|| err("seqtable needs end= (or end=-)".into()))?;
        let end_state = if end_txt == "-" {
            None
        } else {
            Some(parse_key(&end_txt, width).map_err(err)?)
        };
        Ok(PartialTable {
            name,
            level: level.ok_or_else(|| err("seqtable needs level=".into()))?,
            bit_type: bit_type.ok_or_else(|| err("seqtable needs type=".into()))?,
            width,
            end_state,
            entries: Vec::new(),
            pairs: HashSet::new(),
        })
    }

    fn finish(self, file: &str, lineno: usize) -> Result<SequenceTable> {
        let err = |msg: String| Error::parse(file, lineno, msg);
        if self.entries.len() != usize::from(self.width) {
            return Err(err(format!(
                "table {} declares width {} but lists {} entries",
                self.name,
                self.width,
                self.entries.len()
            )));
        }
        if self.pairs.is_empty() {
            return Err(err(format!("table {} has no pairs", self.name)));
        }
        Ok(SequenceTable {
            name: self.name,
            level: self.level,
            bit_type: self.bit_type,
            entries: self.entries,
            pairs: self.pairs,
            end_state: self.end_state,
        })
    }
}

fn parse_key(text: &str, width: u16) -> std::result::Result<u128, String> {
    let digits = text
        .strip_prefix("0x")
        .ok_or_else(|| format!("key {text} must start with 0x"))?;
    match BitVec::parse_hex(width, digits) {
        Ok(v) => Ok(v.value()),
        Err(e) => Err(e.to_string()),
    }
}

fn fmt_key(key: u128, width: u16) -> String {
    let v = BitVec::new(width, key).expect("learned keys fit the table width");
    format!("0x{}", v.to_hex())
}

/// Serializes tables in canonical form: header, entries in key order,
/// pairs sorted with the sentinel first. Reparsing the output yields the
/// input tables exactly.
pub fn write_seq_file(tables: &[SequenceTable]) -> String {
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let end = match t.end_state {
            Some(end) => fmt_key(end, t.width()),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "seqtable {} level={} type={} width={} end={}\n",
            t.name,
            t.level.code(),
            t.bit_type.code(),
            t.width(),
            end
        ));
        for (path, bit) in &t.entries {
            out.push_str(&format!("entry {path} {bit}\n"));
        }
        let mut pairs: Vec<_> = t.pairs.iter().copied().collect();
        pairs.sort();
        for (prev, next) in pairs {
            let prev_txt = match prev {
                Some(p) => fmt_key(p, t.width()),
                None => "-".to_string(),
            };
            out.push_str(&format!("pair {prev_txt},{}\n", fmt_key(next, t.width())));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run, RunOptions};
    use proptest::prelude::*;

    fn sig(path: &str, width: u16, kind: SignalKind) -> SignalRef {
        SignalRef::new(path, width, kind, SignalClass::Control)
    }

    fn table_from(keys: &[u128]) -> SequenceTable {
        SequenceTable::learn_from_keys(
            "t",
            Level::Registers,
            BitType::All,
            vec![("r".into(), 1), ("r".into(), 0)],
            keys.iter().copied(),
        )
        .unwrap()
    }

    #[test]
    fn learning_records_pairs_and_end_state() {
        // Keys A=0, B=1 over the run [A, A, B, A].
        let t = table_from(&[0, 0, 1, 0]);
        assert_eq!(t.pair_count(), 4);
        assert!(t.contains(None, 0));
        assert!(t.contains(Some(0), 0));
        assert!(t.contains(Some(0), 1));
        assert!(t.contains(Some(1), 0));
        assert!(!t.contains(Some(1), 1));
        assert_eq!(t.end_state(), Some(0));
    }

    #[test]
    fn learning_needs_at_least_one_cycle() {
        let r = SequenceTable::learn_from_keys(
            "t",
            Level::Registers,
            BitType::All,
            vec![("r".into(), 0)],
            std::iter::empty(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn detection_flags_first_unseen_pair() {
        // Table learned from [A, B, A]: pairs {(-,A),(A,B),(B,A)}, end A.
        let t = table_from(&[0, 1, 0]);
        // Run [A, B, B]: the pair (B,B) completes at cycle 3.
        let v = t.detect_keys([0, 1, 1], false).unwrap();
        assert!(v.detected);
        assert_eq!(v.detect_cycle, Some(3));
        assert!(!v.via_final);
    }

    #[test]
    fn detection_accepts_the_learning_run() {
        let t = table_from(&[0, 1, 0]);
        let v = t.detect_keys([0, 1, 0], true).unwrap();
        assert!(!v.detected);
        assert_eq!(v.detect_cycle, None);
        assert!(!v.via_final);
    }

    #[test]
    fn end_check_flags_clean_run_with_wrong_final_state() {
        // [A, B, A, B] stays inside the pair set learned from
        // [A, B, A] plus (A,B) -- but ends in B instead of A.
        let t = table_from(&[0, 1, 0, 1, 0]);
        let v = t.detect_keys([0, 1, 0, 1], true).unwrap();
        assert!(v.detected);
        assert_eq!(v.detect_cycle, None);
        assert!(v.via_final);

        // Without the end check the same run passes.
        let v = t.detect_keys([0, 1, 0, 1], false).unwrap();
        assert!(!v.detected);
    }

    #[test]
    fn mid_run_fault_suppresses_via_final() {
        let t = table_from(&[0, 1, 0]);
        // (B,B) is unseen and the run also ends off the learned end state.
        let v = t.detect_keys([0, 1, 1], true).unwrap();
        assert!(v.detected);
        assert_eq!(v.detect_cycle, Some(3));
        assert!(!v.via_final);
    }

    #[test]
    fn end_check_requires_an_end_state() {
        let mut t = table_from(&[0, 1, 0]);
        t.end_state = None;
        assert!(t.detect_keys([0, 1, 0], true).is_err());
        assert!(t.detect_keys([0, 1, 0], false).is_ok());
    }

    #[test]
    fn select_bits_orders_msb_first_in_declaration_order() {
        let signals = vec![
            sig("regs/a", 3, SignalKind::Register),
            sig("out/v", 1, SignalKind::PrimaryOutput),
            sig("regs/b", 2, SignalKind::Register),
            SignalRef::new("regs/data", 8, SignalKind::Register, SignalClass::Data),
        ];
        let used = UsedMsbMap::new();
        let all = select_bits(&signals, Level::Registers, BitType::All, &used).unwrap();
        assert_eq!(
            all,
            vec![
                ("regs/a".to_string(), 2),
                ("regs/a".to_string(), 1),
                ("regs/a".to_string(), 0),
                ("regs/b".to_string(), 1),
                ("regs/b".to_string(), 0),
            ]
        );
        let msb = select_bits(&signals, Level::Registers, BitType::Msb, &used).unwrap();
        assert_eq!(msb, vec![("regs/a".to_string(), 2), ("regs/b".to_string(), 1)]);
        let lsb = select_bits(&signals, Level::Registers, BitType::Lsb, &used).unwrap();
        assert_eq!(lsb, vec![("regs/a".to_string(), 0), ("regs/b".to_string(), 0)]);
        let outs = select_bits(&signals, Level::PrimaryOutputs, BitType::All, &used).unwrap();
        assert_eq!(outs, vec![("out/v".to_string(), 0)]);
    }

    #[test]
    fn used_msb_requires_a_complete_map() {
        let signals = vec![
            sig("regs/a", 4, SignalKind::Register),
            sig("regs/b", 4, SignalKind::Register),
        ];
        let mut used = UsedMsbMap::new();
        used.insert("regs/a".into(), 2);
        assert!(select_bits(&signals, Level::Registers, BitType::UsedMsb, &used).is_err());
        used.insert("regs/b".into(), 3);
        let got = select_bits(&signals, Level::Registers, BitType::UsedMsb, &used).unwrap();
        assert_eq!(got, vec![("regs/a".to_string(), 2), ("regs/b".to_string(), 3)]);
        used.insert("regs/b".into(), 4); // out of range
        assert!(select_bits(&signals, Level::Registers, BitType::UsedMsb, &used).is_err());
    }

    #[test]
    fn empty_selection_is_a_config_error() {
        let signals = vec![sig("regs/a", 4, SignalKind::Register)];
        assert!(select_bits(&signals, Level::SubmoduleOutputs, BitType::All, &UsedMsbMap::new()).is_err());
    }

    #[test]
    fn online_monitor_matches_offline_detection() {
        use crate::sim::{testutil::Counter, Design};
        let mut design = Counter::new(9);
        let watched: Vec<SignalRef> = design.signals().to_vec();
        let trace = run(&mut design, &watched, RunOptions::recorded(100), &mut []).unwrap();

        let entries = select_bits(&watched, Level::Registers, BitType::All, &UsedMsbMap::new()).unwrap();
        let table = SequenceTable::learn("cnt", Level::Registers, BitType::All, entries, &trace).unwrap();

        // Offline pass over the learning trace is clean.
        let off = table.detect(&trace, true).unwrap();
        assert!(!off.detected);

        // Online pass over a fresh identical run is clean too.
        let mut design = crate::sim::testutil::Counter::new(9);
        let mut mon = SeqMonitor::attach(&table, &watched, true).unwrap();
        {
            let mut hooks: Vec<&mut dyn CycleHook> = vec![&mut mon];
            run(&mut design, &watched, RunOptions::silent(100), &mut hooks).unwrap();
        }
        let on = mon.finalize();
        assert_eq!((on.detected, on.detect_cycle, on.via_final), (false, None, false));

        // A shorter run stops early: clean pairs, wrong end state.
        let mut design = crate::sim::testutil::Counter::new(5);
        let mut mon = SeqMonitor::attach(&table, &watched, true).unwrap();
        {
            let mut hooks: Vec<&mut dyn CycleHook> = vec![&mut mon];
            run(&mut design, &watched, RunOptions::silent(100), &mut hooks).unwrap();
        }
        let v = mon.finalize();
        assert!(v.detected);
        assert!(v.via_final);
    }

    #[test]
    fn detect_requires_watched_key_signals() {
        let t = table_from(&[0, 1, 0]);
        let trace = Trace {
            watched: vec![sig("other", 2, SignalKind::Register)],
            rows: vec![vec![BitVec::new(2, 0).unwrap()]],
            terminal_cycle: Some(1),
        };
        assert!(t.detect(&trace, false).is_err());
    }

    const SAMPLE: &str = "\
# two-bit walker
seqtable walk level=3 type=1 width=2 end=0x0
entry r 1
entry r 0
pair -,0x0
pair 0x0,0x1
pair 0x1,0x0
";

    #[test]
    fn parse_sample_file() {
        let tables = parse_seq_file("sample", SAMPLE).unwrap();
        assert_eq!(tables.len(), 1);
        let t = &tables[0];
        assert_eq!(t.name, "walk");
        assert_eq!(t.level, Level::Registers);
        assert_eq!(t.bit_type, BitType::All);
        assert_eq!(t.width(), 2);
        assert_eq!(t.end_state(), Some(0));
        assert_eq!(t.pair_count(), 3);
        assert!(t.contains(None, 0));
    }

    #[test]
    fn file_round_trip_is_exact() {
        let tables = parse_seq_file("sample", SAMPLE).unwrap();
        let text = write_seq_file(&tables);
        let back = parse_seq_file("round", &text).unwrap();
        assert_eq!(tables, back);
        assert_eq!(text, write_seq_file(&back));
    }

    #[test]
    fn parse_rejects_malformed_input() {
        let cases = [
            "entry r 0\n",                                              // before header
            "seqtable t level=3 type=1 width=1 end=0x0\npair -,0x0\n",  // entry count mismatch
            "seqtable t level=9 type=1 width=1 end=0x0\nentry r 0\npair -,0x0\n",
            "seqtable t level=3 type=0 width=1 end=0x0\nentry r 0\npair -,0x0\n",
            "seqtable t level=3 type=1 width=0 end=0x0\n",              // zero width
            "seqtable t level=3 type=1 width=1 end=0x0\nentry r 0\n",   // no pairs
            "seqtable t level=3 type=1 width=1 end=0x0\nentry r 0\npair 0x0\n",
            "seqtable t level=3 type=1 width=1 end=0x0\nentry r 0\npair -,0x0\npair -,0x0\n",
            "seqtable t level=3 type=1 width=1 end=0x0\nentry r 0\npair -,7\n",
            "seqtable t level=3 type=1 width=1 end=0x7\nentry r 0\npair -,0x0\n", // end too wide
            "seqtable t level=3 type=1 width=1\nentry r 0\npair -,0x0\n",         // missing end
            "seqtable level=3 type=1 width=1 end=0x0\nentry r 0\npair -,0x0\n",   // missing name
            "seqtable t level=3 type=1 width=1 end=0x0\nentry r 0\nbogus\n",
        ];
        for text in cases {
            assert!(parse_seq_file("case", text).is_err(), "expected failure for {text:?}");
        }
    }

    #[test]
    fn multiple_tables_per_file() {
        let two = format!("{SAMPLE}\nseqtable other level=1 type=2 width=1 end=-\nentry o 0\npair -,0x1\n");
        let tables = parse_seq_file("two", &two).unwrap();
        assert_eq!(tables.len(), 2);
        assert_eq!(tables[1].name, "other");
        assert_eq!(tables[1].end_state(), None);
        let text = write_seq_file(&tables);
        assert_eq!(parse_seq_file("round", &text).unwrap(), tables);
    }

    fn arb_keys(width: u16) -> impl Strategy<Value = Vec<u128>> {
        let max = if width == 128 { u128::MAX } else { (1u128 << width) - 1 };
        proptest::collection::vec(0..=max, 1..40)
    }

    proptest! {
        /// A table always accepts its own learning run, with or without
        /// the end check.
        #[test]
        fn learning_run_is_always_clean(keys in arb_keys(6)) {
            let entries: Vec<(String, u16)> = (0..6).rev().map(|b| ("r".to_string(), b)).collect();
            let t = SequenceTable::learn_from_keys("t", Level::Registers, BitType::All, entries, keys.iter().copied()).unwrap();
            let v = t.detect_keys(keys.iter().copied(), true).unwrap();
            prop_assert!(!v.detected);
        }

        /// Serialize -> parse is the identity.
        #[test]
        fn table_file_round_trip(keys in arb_keys(6)) {
            let entries: Vec<(String, u16)> = (0..6).rev().map(|b| ("regs/state".to_string(), b)).collect();
            let t = SequenceTable::learn_from_keys("rt", Level::Registers, BitType::All, entries, keys.iter().copied()).unwrap();
            let text = write_seq_file(std::slice::from_ref(&t));
            let back = parse_seq_file("round", &text).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(&back[0], &t);
        }

        /// Mutating one key mid-run to a value that breaks the incoming
        /// pair is caught at exactly that cycle.
        #[test]
        fn single_mutation_is_caught_at_its_cycle(keys in arb_keys(4), pos_seed in 0usize..1000, flip in 1u128..16) {
            let entries: Vec<(String, u16)> = (0..4).rev().map(|b| ("r".to_string(), b)).collect();
            let t = SequenceTable::learn_from_keys("t", Level::Registers, BitType::All, entries, keys.iter().copied()).unwrap();
            let pos = pos_seed % keys.len();
            let mut mutated = keys.clone();
            mutated[pos] ^= flip;
            let prev = if pos == 0 { None } else { Some(mutated[pos - 1]) };
            prop_assume!(!t.contains(prev, mutated[pos]));
            let v = t.detect_keys(mutated.iter().copied(), false).unwrap();
            prop_assert!(v.detected);
            prop_assert_eq!(v.detect_cycle, Some(Trace::cycle_of_row(pos)));
        }
    }
}

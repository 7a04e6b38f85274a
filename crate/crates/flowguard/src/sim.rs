//! Cycle-level simulation kernel.
//!
//! A [`Design`] is a deterministic synchronous machine: `reset` brings it to
//! its initial state and every `step` advances exactly one clock edge.
//! [`run`] drives a design for up to a budgeted number of cycles, hands every
//! post-edge [`Snapshot`] to the attached [`CycleHook`]s (this is how
//! monitors observe without perturbing anything) and optionally records a
//! [`Trace`]. [`run_golden`] additionally cross-checks the design's outputs
//! against an independent software reference.
//!
//! Cycle numbering: the reset state is "cycle 0" and is never a trace row;
//! the i-th executed step produces cycle `i` (1-based). A completed run's
//! terminal cycle therefore equals the number of cycles executed.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::signal::{BitVec, SignalClass, SignalKind, SignalRef};

/// Functional output of a run, as a flat sequence of emitted output units
/// (pixels, ciphertext blocks, delivered packets...). Two runs behaved
/// identically iff their records compare equal; a truncated record signals
/// an early abort.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OutputRecord {
    /// Output units in emission order, each in a design-defined canonical
    /// byte encoding.
    pub units: Vec<Vec<u8>>,
}

impl OutputRecord {
    /// True if this record has fewer units than `reference`.
    pub fn is_short_of(&self, reference: &OutputRecord) -> bool {
        self.units.len() < reference.units.len()
    }
}

/// Behavioral contract every simulated design implements.
///
/// Implementations must be bit-exact deterministic: identical construction,
/// reset and stimulus yield identical state forever. All values readable
/// through [`Design::read`] are post-edge values of the most recent step.
pub trait Design {
    /// All observable signals, in a fixed declaration order. Paths are
    /// unique within the design.
    fn signals(&self) -> &[SignalRef];

    /// Returns the design to its initial state (cycle 0).
    fn reset(&mut self);

    /// Advances exactly one clock cycle.
    fn step(&mut self);

    /// True once the design has reached its terminal state. Monotone in a
    /// fault-free run: once true it stays true.
    fn done(&self) -> bool;

    /// Post-edge value of `signals()[idx]`.
    fn read(&self, idx: usize) -> BitVec;

    /// Inverts one stored bit of a register signal, in place, modelling a
    /// single-event upset between clock edges.
    fn flip_register_bit(&mut self, idx: usize, bit: u16) -> Result<()>;

    /// Overrides (`Some`) or releases (`None`) a primary input. While
    /// forced, the design sees the override instead of its normal driver.
    fn force_input(&mut self, idx: usize, value: Option<BitVec>) -> Result<()>;

    /// Functional outputs emitted so far.
    fn output_record(&self) -> OutputRecord;

    /// Indices of control-class registers, the targets for register upsets.
    fn control_registers(&self) -> Vec<usize> {
        self.signals()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SignalKind::Register && s.class == SignalClass::Control)
            .map(|(i, _)| i)
            .collect()
    }

    /// Input signals targeted by input-perturbation faults. Defaults to
    /// every primary input; designs with a narrower fault surface (for
    /// example router port groups) override this.
    fn fault_inputs(&self) -> Vec<usize> {
        self.signals()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SignalKind::PrimaryInput)
            .map(|(i, _)| i)
            .collect()
    }

    /// Index of the signal with the given path.
    fn signal_index(&self, path: &str) -> Option<usize> {
        self.signals().iter().position(|s| s.path == path)
    }
}

/// One post-edge view of the watched signals. Values are aligned with the
/// watched signal list the run was started with.
pub struct Snapshot<'a> {
    refs: &'a [SignalRef],
    values: &'a [BitVec],
}

impl<'a> Snapshot<'a> {
    /// Builds a snapshot view over parallel slices.
    pub fn new(refs: &'a [SignalRef], values: &'a [BitVec]) -> Self {
        debug_assert_eq!(refs.len(), values.len());
        Snapshot { refs, values }
    }

    /// Watched signal descriptors.
    pub fn refs(&self) -> &[SignalRef] {
        self.refs
    }

    /// Value at watch-list position `slot`.
    pub fn value(&self, slot: usize) -> BitVec {
        self.values[slot]
    }

    /// Watch-list position of `path`, for hooks that pre-bind their signals.
    pub fn slot(&self, path: &str) -> Option<usize> {
        self.refs.iter().position(|s| s.path == path)
    }

    /// Value of the signal named `path`.
    pub fn get(&self, path: &str) -> Option<BitVec> {
        self.slot(path).map(|i| self.values[i])
    }
}

/// Observer invoked by the kernel once per simulated cycle. Hooks see
/// values but cannot influence the design; the kernel guarantees a run's
/// trace is identical with or without hooks attached.
pub trait CycleHook {
    /// Called once after reset with the cycle-0 state, before any step.
    fn on_reset(&mut self, snap: &Snapshot<'_>);

    /// Called once per executed cycle with the post-edge state.
    fn on_cycle(&mut self, cycle: u64, snap: &Snapshot<'_>);
}

/// Recorded per-cycle values of the watched signals. Row `i` holds cycle
/// `i + 1`; rows are contiguous and strictly increasing by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    /// Signals captured in each row, in capture order.
    pub watched: Vec<SignalRef>,
    /// One row per executed cycle.
    pub rows: Vec<Vec<BitVec>>,
    /// Cycle at which `done()` first held, if the run completed.
    pub terminal_cycle: Option<u64>,
}

impl Trace {
    /// Cycle number of row `row` (1-based cycles).
    pub fn cycle_of_row(row: usize) -> u64 {
        row as u64 + 1
    }

    /// Re-keys one row as a signal-name map.
    pub fn snapshot(&self, row: usize) -> Result<HashMap<SignalRef, BitVec>> {
        let values = self
            .rows
            .get(row)
            .ok_or_else(|| Error::Config(format!("trace row {row} out of range")))?;
        if values.len() != self.watched.len() {
            return Err(Error::Defect(format!(
                "trace row {row} has {} values for {} watched signals",
                values.len(),
                self.watched.len()
            )));
        }
        Ok(self
            .watched
            .iter()
            .cloned()
            .zip(values.iter().copied())
            .collect())
    }

    /// Writes the trace as CSV: header `cycle,<path>,...`, one row per
    /// cycle, values in lowercase hex.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        write!(out, "cycle")?;
        for sig in &self.watched {
            write!(out, ",{}", sig.path)?;
        }
        writeln!(out)?;
        for (i, row) in self.rows.iter().enumerate() {
            write!(out, "{}", Self::cycle_of_row(i))?;
            for v in row {
                write!(out, ",{}", v.to_hex())?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Controls one simulation run.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Maximum number of cycles to execute. Must be at least 1.
    pub budget: u64,
    /// Record per-cycle rows into the returned trace. Monitors run either
    /// way; campaigns disable recording to avoid pointless allocation.
    pub record: bool,
}

impl RunOptions {
    /// Recording run with the given budget.
    pub fn recorded(budget: u64) -> Self {
        RunOptions {
            budget,
            record: true,
        }
    }

    /// Non-recording run with the given budget.
    pub fn silent(budget: u64) -> Self {
        RunOptions {
            budget,
            record: false,
        }
    }
}

fn resolve_watch_list(design: &dyn Design, watched: &[SignalRef]) -> Result<Vec<usize>> {
    watched
        .iter()
        .map(|w| {
            let idx = design
                .signal_index(&w.path)
                .ok_or_else(|| Error::Config(format!("watched signal {} not in design", w.path)))?;
            let actual = &design.signals()[idx];
            if actual != w {
                return Err(Error::Config(format!(
                    "watched signal {} does not match design declaration {}",
                    w, actual
                )));
            }
            Ok(idx)
        })
        .collect()
}

/// Drives `design` from reset for at most `opts.budget` cycles, stopping
/// early when it reports done. Hooks observe every cycle; the trace records
/// rows only when `opts.record` is set.
pub fn run(
    design: &mut dyn Design,
    watched: &[SignalRef],
    opts: RunOptions,
    hooks: &mut [&mut dyn CycleHook],
) -> Result<Trace> {
    if opts.budget == 0 {
        return Err(Error::Config("cycle budget must be at least 1".into()));
    }
    let slots = resolve_watch_list(design, watched)?;
    let mut values = vec![BitVec::zero(1); slots.len()];

    design.reset();
    capture(design, &slots, &mut values);
    {
        let snap = Snapshot::new(watched, &values);
        for hook in hooks.iter_mut() {
            hook.on_reset(&snap);
        }
    }

    let mut rows = Vec::new();
    let mut terminal_cycle = None;
    for cycle in 1..=opts.budget {
        design.step();
        capture(design, &slots, &mut values);
        {
            let snap = Snapshot::new(watched, &values);
            for hook in hooks.iter_mut() {
                hook.on_cycle(cycle, &snap);
            }
        }
        if opts.record {
            rows.push(values.clone());
        }
        if design.done() {
            terminal_cycle = Some(cycle);
            break;
        }
    }

    Ok(Trace {
        watched: watched.to_vec(),
        rows,
        terminal_cycle,
    })
}

fn capture(design: &dyn Design, slots: &[usize], values: &mut [BitVec]) {
    for (v, &idx) in values.iter_mut().zip(slots) {
        *v = design.read(idx);
    }
}

/// A verified fault-free run: the recorded trace, its length and the
/// outputs, cross-checked against an independent reference.
#[derive(Debug, Clone)]
pub struct GoldenRun {
    /// Full recorded trace.
    pub trace: Trace,
    /// Terminal cycle == number of cycles executed.
    pub cycles: u64,
    /// Functional outputs, equal to the reference by construction.
    pub outputs: OutputRecord,
}

/// Runs `design` to completion and checks its outputs against `reference`
/// (the independently computed expected outputs). A design that fails to
/// finish within the budget or disagrees with the reference is defective.
pub fn run_golden(
    design: &mut dyn Design,
    watched: &[SignalRef],
    budget: u64,
    reference: &OutputRecord,
) -> Result<GoldenRun> {
    let trace = run(design, watched, RunOptions::recorded(budget), &mut [])?;
    let cycles = trace.terminal_cycle.ok_or_else(|| {
        Error::Defect(format!(
            "design did not reach its terminal state within {budget} cycles"
        ))
    })?;
    let outputs = design.output_record();
    if &outputs != reference {
        return Err(Error::Defect(format!(
            "fault-free outputs disagree with the software reference \
             ({} units emitted, {} expected)",
            outputs.units.len(),
            reference.units.len()
        )));
    }
    Ok(GoldenRun {
        trace,
        cycles,
        outputs,
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::signal::{SignalClass, SignalKind};

    /// Minimal synchronous design for kernel tests: a 4-bit counter that
    /// counts up to `limit` and then reports done. One control register,
    /// one forcible `hold` input, one wire mirroring the MSB.
    pub struct Counter {
        signals: Vec<SignalRef>,
        pub limit: u8,
        count: u8,
        hold_forced: Option<BitVec>,
        emitted: Vec<Vec<u8>>,
    }

    impl Counter {
        pub fn new(limit: u8) -> Self {
            Counter {
                signals: vec![
                    SignalRef::new("ctr/count", 4, SignalKind::Register, SignalClass::Control),
                    SignalRef::new("in/hold", 1, SignalKind::PrimaryInput, SignalClass::Control),
                    SignalRef::new("o/msb", 1, SignalKind::PrimaryOutput, SignalClass::Control),
                ],
                limit,
                count: 0,
                hold_forced: None,
                emitted: Vec::new(),
            }
        }
    }

    impl Design for Counter {
        fn signals(&self) -> &[SignalRef] {
            &self.signals
        }

        fn reset(&mut self) {
            self.count = 0;
            self.emitted.clear();
        }

        fn step(&mut self) {
            let hold = self.hold_forced.map(|v| v.value() == 1).unwrap_or(false);
            if !hold && self.count < self.limit {
                self.count += 1;
                self.emitted.push(vec![self.count]);
            }
        }

        fn done(&self) -> bool {
            self.count >= self.limit
        }

        fn read(&self, idx: usize) -> BitVec {
            match idx {
                0 => BitVec::new(4, self.count as u128).unwrap(),
                1 => self.hold_forced.unwrap_or(BitVec::zero(1)),
                2 => BitVec::new(1, (self.count >> 3) as u128).unwrap(),
                _ => unreachable!(),
            }
        }

        fn flip_register_bit(&mut self, idx: usize, bit: u16) -> Result<()> {
            if idx != 0 {
                return Err(Error::Defect("not a register".into()));
            }
            let v = BitVec::new(4, self.count as u128)?.with_bit_flipped(bit)?;
            self.count = v.value() as u8;
            Ok(())
        }

        fn force_input(&mut self, idx: usize, value: Option<BitVec>) -> Result<()> {
            if idx != 1 {
                return Err(Error::Defect("not an input".into()));
            }
            self.hold_forced = value;
            Ok(())
        }

        fn output_record(&self) -> OutputRecord {
            OutputRecord {
                units: self.emitted.clone(),
            }
        }
    }
}

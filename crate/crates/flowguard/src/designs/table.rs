//! Shared signal storage for the reference designs.
//!
//! Each design declares its signals once into a [`SignalTable`] and gets
//! back typed handles. The table owns the per-cycle storage and gives the
//! design a synchronous register model: writes go to a shadow column and
//! become visible only at [`SignalTable::commit`], so step logic always
//! reads pre-edge state no matter the evaluation order. It also carries
//! the fault surface: register bits can be flipped in place and inputs
//! can be overridden by the fault engine.

use crate::error::{Error, Result};
use crate::signal::{BitVec, SignalClass, SignalKind, SignalRef};

/// Handle to a register declared in a [`SignalTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reg(usize);

/// Handle to a primary input declared in a [`SignalTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct In(usize);

/// Handle to a combinational signal (wire or output) declared in a
/// [`SignalTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wire(usize);

enum Slot {
    Reg(usize),
    Input(usize),
    Wire(usize),
}

struct RegCell {
    cur: BitVec,
    nxt: Option<BitVec>,
    reset: BitVec,
}

struct InputCell {
    driven: BitVec,
    forced: Option<BitVec>,
}

/// Signal declarations plus their live values.
pub struct SignalTable {
    refs: Vec<SignalRef>,
    slots: Vec<Slot>,
    regs: Vec<RegCell>,
    inputs: Vec<InputCell>,
    wires: Vec<BitVec>,
}

impl SignalTable {
    pub fn new() -> Self {
        SignalTable {
            refs: Vec::new(),
            slots: Vec::new(),
            regs: Vec::new(),
            inputs: Vec::new(),
            wires: Vec::new(),
        }
    }

    fn declare(&mut self, path: &str, width: u16, kind: SignalKind, class: SignalClass) {
        assert!(
            self.refs.iter().all(|s| s.path != path),
            "duplicate signal path {path}"
        );
        self.refs.push(SignalRef::new(path, width, kind, class));
    }

    /// Declares a register with the given reset value.
    pub fn reg(&mut self, path: &str, width: u16, class: SignalClass, reset: u128) -> Reg {
        self.declare(path, width, SignalKind::Register, class);
        let value = BitVec::new(width, reset).expect("valid register declaration");
        self.regs.push(RegCell {
            cur: value,
            nxt: None,
            reset: value,
        });
        self.slots.push(Slot::Reg(self.regs.len() - 1));
        Reg(self.regs.len() - 1)
    }

    /// Declares a primary input, initially driven to zero.
    pub fn input(&mut self, path: &str, width: u16, class: SignalClass) -> In {
        self.declare(path, width, SignalKind::PrimaryInput, class);
        self.inputs.push(InputCell {
            driven: BitVec::zero(width),
            forced: None,
        });
        self.slots.push(Slot::Input(self.inputs.len() - 1));
        In(self.inputs.len() - 1)
    }

    /// Declares a combinational signal of the given kind (primary output,
    /// submodule output or internal wire).
    pub fn wire(&mut self, path: &str, width: u16, kind: SignalKind, class: SignalClass) -> Wire {
        assert!(
            matches!(
                kind,
                SignalKind::PrimaryOutput | SignalKind::SubmoduleOutput | SignalKind::Wire
            ),
            "wire kind must be combinational"
        );
        self.declare(path, width, kind, class);
        self.wires.push(BitVec::zero(width));
        self.slots.push(Slot::Wire(self.wires.len() - 1));
        Wire(self.wires.len() - 1)
    }

    /// All declared signals in declaration order.
    pub fn refs(&self) -> &[SignalRef] {
        &self.refs
    }

    /// Pre-edge value of a register.
    pub fn get(&self, r: Reg) -> BitVec {
        self.regs[r.0].cur
    }

    /// Pre-edge value of a register as a plain integer.
    pub fn val(&self, r: Reg) -> u128 {
        self.regs[r.0].cur.value()
    }

    /// Schedules a register update for the next edge.
    pub fn set(&mut self, r: Reg, value: u128) {
        let width = self.regs[r.0].cur.width();
        self.regs[r.0].nxt = Some(BitVec::new(width, value).expect("register value fits width"));
    }

    /// Drives a primary input for the coming cycle.
    pub fn drive(&mut self, i: In, value: u128) {
        let width = self.inputs[i.0].driven.width();
        self.inputs[i.0].driven = BitVec::new(width, value).expect("input value fits width");
    }

    /// Value the design sees on an input: the forced override when the
    /// fault engine holds one, the driven value otherwise.
    pub fn in_val(&self, i: In) -> u128 {
        let cell = &self.inputs[i.0];
        cell.forced.unwrap_or(cell.driven).value()
    }

    /// Sets a combinational signal's value for this cycle.
    pub fn put(&mut self, w: Wire, value: u128) {
        let width = self.wires[w.0].width();
        self.wires[w.0] = BitVec::new(width, value).expect("wire value fits width");
    }

    /// Current value of a combinational signal.
    pub fn wire_val(&self, w: Wire) -> u128 {
        self.wires[w.0].value()
    }

    /// Applies all scheduled register updates; unwritten registers hold.
    pub fn commit(&mut self) {
        for cell in &mut self.regs {
            if let Some(nxt) = cell.nxt.take() {
                cell.cur = nxt;
            }
        }
    }

    /// Restores every register to its reset value, clears forces, drives
    /// and wires.
    pub fn reset(&mut self) {
        for cell in &mut self.regs {
            cell.cur = cell.reset;
            cell.nxt = None;
        }
        for cell in &mut self.inputs {
            cell.driven = BitVec::zero(cell.driven.width());
            cell.forced = None;
        }
        for w in &mut self.wires {
            *w = BitVec::zero(w.width());
        }
    }

    /// Post-edge value of `refs()[idx]`, any kind.
    pub fn read(&self, idx: usize) -> BitVec {
        match self.slots[idx] {
            Slot::Reg(i) => self.regs[i].cur,
            Slot::Input(i) => {
                let cell = &self.inputs[i];
                cell.forced.unwrap_or(cell.driven)
            }
            Slot::Wire(i) => self.wires[i],
        }
    }

    /// Inverts one stored register bit in place.
    pub fn flip_register_bit(&mut self, idx: usize, bit: u16) -> Result<()> {
        let path = || self.refs[idx].path.clone();
        match self.slots.get(idx) {
            Some(Slot::Reg(i)) => {
                let flipped = self.regs[*i].cur.with_bit_flipped(bit)?;
                self.regs[*i].cur = flipped;
                Ok(())
            }
            Some(_) => Err(Error::Config(format!("{} is not a register", path()))),
            None => Err(Error::Config(format!("signal index {idx} out of range"))),
        }
    }

    /// Overrides or releases a primary input.
    pub fn force_input(&mut self, idx: usize, value: Option<BitVec>) -> Result<()> {
        let sref = self
            .refs
            .get(idx)
            .ok_or_else(|| Error::Config(format!("signal index {idx} out of range")))?
            .clone();
        match self.slots[idx] {
            Slot::Input(i) => {
                if let Some(v) = value {
                    if v.width() != sref.width {
                        return Err(Error::Config(format!(
                            "forced value width {} does not match {} (width {})",
                            v.width(),
                            sref.path,
                            sref.width
                        )));
                    }
                    self.inputs[i].forced = Some(v);
                } else {
                    self.inputs[i].forced = None;
                }
                Ok(())
            }
            _ => Err(Error::Config(format!("{} is not a primary input", sref.path))),
        }
    }
}

impl Default for SignalTable {
    fn default() -> Self {
        Self::new()
    }
}

//! Gaussian blur design: a 12x16 8-bit grayscale frame streamed in one
//! pixel per cycle, blurred with the 3x3 binomial kernel
//! `[[1,2,1],[2,4,2],[1,2,1]]` (divide by 16, round to nearest, replicate
//! borders), and streamed back out one pixel per cycle.
//!
//! The receive unit fills the frame store and reports row completion to
//! the core, which declares itself primed once two rows are buffered; the
//! send unit starts draining as soon as every input row needed for an
//! output pixel has arrived, so the output stream tails the input stream
//! by roughly two rows.

use super::table::{In, Reg, SignalTable, Wire};
use super::SelectorPreset;
use crate::seqcheck::{BitType, Level, UsedMsbMap};
use crate::signal::{SignalClass, SignalKind, SignalRef};
use crate::sim::{Design, OutputRecord};

pub const ROWS: usize = 12;
pub const COLS: usize = 16;

const KERNEL: [[u16; 3]; 3] = [[1, 2, 1], [2, 4, 2], [1, 2, 1]];

fn blur_at(image: &[[u8; COLS]; ROWS], y: usize, x: usize) -> u8 {
    let mut sum: u16 = 0;
    for (i, krow) in KERNEL.iter().enumerate() {
        for (j, &w) in krow.iter().enumerate() {
            // (y + i) - 1 is the neighbour row, clamped to the frame.
            let yy = (y + i).clamp(1, ROWS) - 1;
            let xx = (x + j).clamp(1, COLS) - 1;
            sum += w * u16::from(image[yy][xx]);
        }
    }
    ((sum + 8) >> 4) as u8
}

/// Reference output: one unit per row of the blurred frame.
pub fn oracle(image: &[[u8; COLS]; ROWS]) -> OutputRecord {
    let units = (0..ROWS)
        .map(|y| (0..COLS).map(|x| blur_at(image, y, x)).collect())
        .collect();
    OutputRecord { units }
}

pub struct GausDesign {
    t: SignalTable,
    // control registers
    rx: Reg,
    ry: Reg,
    r_active: Reg,
    fill: Reg,
    sx: Reg,
    sy: Reg,
    s_active: Reg,
    r_done: Reg,
    s_done: Reg,
    // inputs
    i_user: In,
    i_valid: In,
    i_last: In,
    i_data: In,
    o_ready: In,
    // outputs
    o_user: Wire,
    o_valid: Wire,
    o_last: Wire,
    i_ready: Wire,
    o_data: Wire,
    s_recv: Wire,
    s_core: Wire,
    s_send: Wire,

    image: [[u8; COLS]; ROWS],
    ram: [[u8; COLS]; ROWS],
    units: Vec<Vec<u8>>,
    beat: usize,
    cycle: u64,
}

impl GausDesign {
    pub fn new(image: [[u8; COLS]; ROWS]) -> Self {
        let mut t = SignalTable::new();
        let ctl = SignalClass::Control;
        let dat = SignalClass::Data;
        let rx = t.reg("recv/x", 4, ctl, 0);
        let ry = t.reg("recv/y", 4, ctl, 0);
        let r_active = t.reg("recv/active", 1, ctl, 0);
        let fill = t.reg("core/fill", 2, ctl, 0);
        let sx = t.reg("send/x", 4, ctl, 0);
        let sy = t.reg("send/y", 4, ctl, 0);
        let s_active = t.reg("send/active", 1, ctl, 0);
        let r_done = t.reg("recv/done", 1, ctl, 0);
        let s_done = t.reg("send/done", 1, ctl, 0);
        let i_user = t.input("in/user", 1, ctl);
        let i_valid = t.input("in/valid", 1, ctl);
        let i_last = t.input("in/last", 1, ctl);
        let i_data = t.input("in/data", 8, dat);
        let o_ready = t.input("out/ready", 1, ctl);
        let o_user = t.wire("out/user", 1, SignalKind::PrimaryOutput, ctl);
        let o_valid = t.wire("out/valid", 1, SignalKind::PrimaryOutput, ctl);
        let o_last = t.wire("out/last", 1, SignalKind::PrimaryOutput, ctl);
        let i_ready = t.wire("in/ready", 1, SignalKind::PrimaryOutput, ctl);
        let o_data = t.wire("out/data", 8, SignalKind::Wire, dat);
        let s_recv = t.wire("recv/busy", 1, SignalKind::SubmoduleOutput, ctl);
        let s_core = t.wire("core/primed", 1, SignalKind::SubmoduleOutput, ctl);
        let s_send = t.wire("send/busy", 1, SignalKind::SubmoduleOutput, ctl);
        let mut d = GausDesign {
            t,
            rx,
            ry,
            r_active,
            fill,
            sx,
            sy,
            s_active,
            r_done,
            s_done,
            i_user,
            i_valid,
            i_last,
            i_data,
            o_ready,
            o_user,
            o_valid,
            o_last,
            i_ready,
            o_data,
            s_recv,
            s_core,
            s_send,
            image,
            ram: [[0; COLS]; ROWS],
            units: vec![Vec::new(); ROWS],
            beat: 0,
            cycle: 0,
        };
        d.t.put(d.i_ready, 1);
        d
    }

    fn rows_complete(&self) -> usize {
        if self.t.val(self.r_done) != 0 {
            ROWS
        } else {
            self.t.val(self.ry) as usize
        }
    }
}

impl Design for GausDesign {
    fn signals(&self) -> &[SignalRef] {
        self.t.refs()
    }

    fn reset(&mut self) {
        self.t.reset();
        self.t.put(self.i_ready, 1);
        self.ram = [[0; COLS]; ROWS];
        self.units = vec![Vec::new(); ROWS];
        self.beat = 0;
        self.cycle = 0;
    }

    fn step(&mut self) {
        self.cycle += 1;
        // Stimulus driver: stream the frame row-major, one beat per cycle
        // while the design presents ready; the consumer is always ready.
        let upstream_ready = self.t.wire_val(self.i_ready) != 0;
        let streaming = self.beat < ROWS * COLS;
        let (y, x) = (self.beat / COLS, self.beat % COLS);
        self.t.drive(self.i_user, u128::from(streaming && self.beat == 0));
        self.t.drive(self.i_valid, u128::from(streaming));
        self.t.drive(self.i_last, u128::from(streaming && x == COLS - 1));
        self.t
            .drive(self.i_data, if streaming { u128::from(self.image[y][x]) } else { 0 });
        self.t.drive(self.o_ready, 1);
        if streaming && upstream_ready {
            self.beat += 1;
        }

        let user = self.t.in_val(self.i_user) != 0;
        let valid = self.t.in_val(self.i_valid) != 0;
        let data = self.t.in_val(self.i_data) as u8;
        let out_ready = self.t.in_val(self.o_ready) != 0;

        // Receive unit: store one pixel per accepted beat.
        let ready_pre = self.t.val(self.r_done) == 0;
        let active_pre = self.t.val(self.r_active) != 0;
        if valid && ready_pre && (active_pre || user) {
            let (ry, rx) = (self.t.val(self.ry) as usize, self.t.val(self.rx) as usize);
            self.ram[ry % ROWS][rx % COLS] = data;
            if !active_pre {
                self.t.set(self.r_active, 1);
            }
            if rx >= COLS - 1 {
                self.t.set(self.rx, 0);
                let fill = self.t.val(self.fill);
                self.t.set(self.fill, (fill + 1).min(2));
                if ry >= ROWS - 1 {
                    self.t.set(self.r_done, 1);
                    self.t.set(self.r_active, 0);
                } else {
                    self.t.set(self.ry, (ry + 1) as u128);
                }
            } else {
                self.t.set(self.rx, (rx + 1) as u128);
            }
        }

        // Send unit: emit a pixel once every contributing input row is in
        // the frame store.
        let mut emitted = None;
        let (sy, sx) = (self.t.val(self.sy) as usize, self.t.val(self.sx) as usize);
        let sending = self.t.val(self.s_done) == 0;
        let needed = (sy + 2).min(ROWS);
        if sending && out_ready && self.rows_complete() >= needed {
            let pixel = blur_at(&self.ram, sy.min(ROWS - 1), sx.min(COLS - 1));
            if sy < ROWS {
                self.units[sy].push(pixel);
            }
            emitted = Some(pixel);
            if self.t.val(self.s_active) == 0 {
                self.t.set(self.s_active, 1);
            }
            if sx >= COLS - 1 {
                self.t.set(self.sx, 0);
                if sy >= ROWS - 1 {
                    self.t.set(self.s_done, 1);
                    self.t.set(self.s_active, 0);
                } else {
                    self.t.set(self.sy, (sy + 1) as u128);
                }
            } else {
                self.t.set(self.sx, (sx + 1) as u128);
            }
        }
        self.t.commit();

        self.t.put(self.o_valid, u128::from(emitted.is_some()));
        self.t
            .put(self.o_user, u128::from(emitted.is_some() && sy == 0 && sx == 0));
        self.t
            .put(self.o_last, u128::from(emitted.is_some() && sx == COLS - 1));
        self.t.put(self.i_ready, u128::from(self.t.val(self.r_done) == 0));
        self.t.put(self.o_data, u128::from(emitted.unwrap_or(0)));
        self.t.put(self.s_recv, self.t.val(self.r_active));
        self.t.put(self.s_core, u128::from(self.t.val(self.fill) == 2));
        self.t.put(self.s_send, self.t.val(self.s_active));
    }

    fn done(&self) -> bool {
        self.t.val(self.r_done) != 0 && self.t.val(self.s_done) != 0
    }

    fn read(&self, idx: usize) -> crate::signal::BitVec {
        self.t.read(idx)
    }

    fn flip_register_bit(&mut self, idx: usize, bit: u16) -> crate::error::Result<()> {
        self.t.flip_register_bit(idx, bit)
    }

    fn force_input(
        &mut self,
        idx: usize,
        value: Option<crate::signal::BitVec>,
    ) -> crate::error::Result<()> {
        self.t.force_input(idx, value)
    }

    fn output_record(&self) -> OutputRecord {
        OutputRecord {
            units: self.units.clone(),
        }
    }
}

pub fn presets() -> Vec<SelectorPreset> {
    vec![
        SelectorPreset::new("l1-all", Level::PrimaryOutputs, BitType::All),
        SelectorPreset::new("l2-all", Level::SubmoduleOutputs, BitType::All),
        SelectorPreset::new("l3-all", Level::Registers, BitType::All),
    ]
}

pub fn used_msb() -> UsedMsbMap {
    [
        ("recv/x", 3),
        ("recv/y", 3),
        ("recv/active", 0),
        ("core/fill", 1),
        ("send/x", 3),
        ("send/y", 3),
        ("send/active", 0),
        ("recv/done", 0),
        ("send/done", 0),
    ]
    .into_iter()
    .map(|(p, b)| (p.to_string(), b))
    .collect()
}

/// Monitor nets for the control contract of this design.
pub const NETS: &str = "\
# gaus monitor nets

net gaus-frame
place p0
place p1
place p2
place p3
transition t.user
transition t.recv
transition t.sent
edge p0 -> t.user
edge t.user -> p1
edge p1 -> t.recv
edge t.recv -> p2
edge p2 -> t.sent
edge t.sent -> p3
init p0 1
final t.sent
event transition=t.user signal=in/user type=2 target=0x1
event transition=t.recv signal=recv/done type=2 target=0x1
event transition=t.sent signal=send/done type=2 target=0x1

net gaus-row-marks
place lo
place hi
transition t.rise
transition t.fall
edge lo -> t.rise
edge t.rise -> hi
edge hi -> t.fall
edge t.fall -> lo
init lo 1
final t.fall
event transition=t.rise signal=in/last type=2 target=0x1
event transition=t.fall signal=in/last type=2 target=0x0

net gaus-output-stream
place p0
place p1
place p2
place p3
transition t.von
transition t.uon
transition t.lastrow
edge p0 -> t.von
edge t.von -> p1
edge p1 -> t.uon
edge t.uon -> p2
edge p2 -> t.lastrow
edge t.lastrow -> p3
init p0 1
final t.lastrow
event transition=t.von signal=out/valid type=2 target=0x1
event transition=t.uon signal=out/user type=2 target=0x1
event transition=t.lastrow signal=out/last type=4 target=0x1 index=12
";

//! Convolution layer design: an 8x8 signed activation map convolved
//! with four 3x3 kernels (valid padding, 6x6 output per channel), ReLU
//! and 8-bit saturation on the way out.
//!
//! The controller loads the 36 kernel weights one per cycle, then for
//! every output pixel runs a nine-cycle multiply-accumulate window and a
//! one-cycle output handshake. Control inputs: `in/start` kicks off
//! processing, `in/pause` stalls any phase, `in/clear` aborts back to
//! idle, and `in/out_ready` gates pixel emission.

use super::table::{In, Reg, SignalTable, Wire};
use super::SelectorPreset;
use crate::seqcheck::{BitType, Level, UsedMsbMap};
use crate::signal::{SignalClass, SignalKind, SignalRef};
use crate::sim::{Design, OutputRecord};

const IDLE: u128 = 0;
const WLOAD: u128 = 1;
const WIN: u128 = 2;
const EMIT: u128 = 3;
const DONE: u128 = 4;

const CHANNELS: usize = 4;
const OUT_DIM: usize = 6;

/// Reference output: channel-major 6x6 maps of ReLU-saturated sums.
pub fn oracle(activations: &[[i8; 8]; 8], kernels: &[[[i8; 3]; 3]; 4]) -> OutputRecord {
    let mut units = Vec::with_capacity(CHANNELS);
    for kern in kernels {
        let mut unit = Vec::with_capacity(OUT_DIM * OUT_DIM);
        for r in 0..OUT_DIM {
            for c in 0..OUT_DIM {
                let mut acc: i32 = 0;
                for (i, krow) in kern.iter().enumerate() {
                    for (j, &w) in krow.iter().enumerate() {
                        acc += i32::from(activations[r + i][c + j]) * i32::from(w);
                    }
                }
                unit.push(relu_sat(acc));
            }
        }
        units.push(unit);
    }
    OutputRecord { units }
}

fn relu_sat(acc: i32) -> u8 {
    acc.clamp(0, 255) as u8
}

pub struct ConvDesign {
    t: SignalTable,
    // control registers
    state: Reg,
    busy: Reg,
    wchan: Reg,
    widx: Reg,
    k: Reg,
    row: Reg,
    col: Reg,
    chan: Reg,
    pending: Reg,
    count: Reg,
    // datapath
    acc: Reg,
    // inputs
    start: In,
    pause: In,
    clear: In,
    out_ready: In,
    // outputs and submodule strobes
    o_valid: Wire,
    o_busy: Wire,
    o_done: Wire,
    s_wload: Wire,
    s_winlast: Wire,
    s_emitting: Wire,
    o_pixel: Wire,

    activations: [[i8; 8]; 8],
    kernels: [[[i8; 3]; 3]; 4],
    weights: [[i8; 9]; 4],
    pixel: u8,
    units: Vec<Vec<u8>>,
    cycle: u64,
}

impl ConvDesign {
    pub fn new(activations: [[i8; 8]; 8], kernels: [[[i8; 3]; 3]; 4]) -> Self {
        let mut t = SignalTable::new();
        let ctl = SignalClass::Control;
        let dat = SignalClass::Data;
        let state = t.reg("ctl/state", 3, ctl, IDLE);
        let busy = t.reg("ctl/busy", 1, ctl, 0);
        let wchan = t.reg("wld/chan", 2, ctl, 0);
        let widx = t.reg("wld/idx", 4, ctl, 0);
        let k = t.reg("mac/k", 4, ctl, 0);
        let row = t.reg("pos/row", 3, ctl, 0);
        let col = t.reg("pos/col", 3, ctl, 0);
        let chan = t.reg("pos/chan", 2, ctl, 0);
        let pending = t.reg("out/pending", 1, ctl, 0);
        let count = t.reg("out/count", 6, ctl, 0);
        let acc = t.reg("mac/acc", 32, dat, 0);
        let start = t.input("in/start", 1, ctl);
        let pause = t.input("in/pause", 1, ctl);
        let clear = t.input("in/clear", 1, ctl);
        let out_ready = t.input("in/out_ready", 1, ctl);
        let o_valid = t.wire("out/valid", 1, SignalKind::PrimaryOutput, ctl);
        let o_busy = t.wire("out/busy", 1, SignalKind::PrimaryOutput, ctl);
        let o_done = t.wire("out/done", 1, SignalKind::PrimaryOutput, ctl);
        let s_wload = t.wire("wld/active", 1, SignalKind::SubmoduleOutput, ctl);
        let s_winlast = t.wire("mac/win_last", 1, SignalKind::SubmoduleOutput, ctl);
        let s_emitting = t.wire("out/emitting", 1, SignalKind::SubmoduleOutput, ctl);
        let o_pixel = t.wire("out/pixel", 8, SignalKind::Wire, dat);
        ConvDesign {
            t,
            state,
            busy,
            wchan,
            widx,
            k,
            row,
            col,
            chan,
            pending,
            count,
            acc,
            start,
            pause,
            clear,
            out_ready,
            o_valid,
            o_busy,
            o_done,
            s_wload,
            s_winlast,
            s_emitting,
            o_pixel,
            activations,
            kernels,
            weights: [[0; 9]; 4],
            pixel: 0,
            units: vec![Vec::new(); CHANNELS],
            cycle: 0,
        }
    }

    fn clear_control(&mut self) {
        let zeroed = [
            self.state,
            self.busy,
            self.wchan,
            self.widx,
            self.k,
            self.row,
            self.col,
            self.chan,
            self.pending,
            self.count,
        ];
        for r in zeroed {
            self.t.set(r, 0);
        }
        self.t.set(self.acc, 0);
    }

    fn advance_position(&mut self) {
        let t = &mut self.t;
        let (row, col, chan, cnt) =
            (t.val(self.row), t.val(self.col), t.val(self.chan), t.val(self.count));
        let (state, k, acc, pending) = (self.state, self.k, self.acc, self.pending);
        let resume = |t: &mut SignalTable| {
            t.set(state, WIN);
            t.set(k, 0);
            t.set(acc, 0);
            t.set(pending, 0);
        };
        if col < (OUT_DIM as u128 - 1) {
            t.set(self.col, col + 1);
            t.set(self.count, cnt + 1);
            resume(t);
        } else if row < (OUT_DIM as u128 - 1) {
            t.set(self.col, 0);
            t.set(self.row, row + 1);
            t.set(self.count, cnt + 1);
            resume(t);
        } else if chan < (CHANNELS as u128 - 1) {
            t.set(self.col, 0);
            t.set(self.row, 0);
            t.set(self.chan, chan + 1);
            t.set(self.count, 0);
            resume(t);
        } else {
            t.set(state, DONE);
            t.set(self.busy, 0);
            t.set(self.count, 0);
            t.set(pending, 0);
        }
    }
}

impl Design for ConvDesign {
    fn signals(&self) -> &[SignalRef] {
        self.t.refs()
    }

    fn reset(&mut self) {
        self.t.reset();
        self.weights = [[0; 9]; 4];
        self.pixel = 0;
        self.units = vec![Vec::new(); CHANNELS];
        self.cycle = 0;
    }

    fn step(&mut self) {
        self.cycle += 1;
        // Stimulus driver: a one-cycle start pulse, output side always
        // ready, no pauses or clears in the fault-free schedule.
        self.t.drive(self.start, u128::from(self.cycle == 1));
        self.t.drive(self.pause, 0);
        self.t.drive(self.clear, 0);
        self.t.drive(self.out_ready, 1);

        let start = self.t.in_val(self.start) != 0;
        let pause = self.t.in_val(self.pause) != 0;
        let clear = self.t.in_val(self.clear) != 0;
        let out_ready = self.t.in_val(self.out_ready) != 0;

        let state = self.t.val(self.state);
        let mut emitted = false;
        if clear && state != IDLE {
            self.clear_control();
        } else if !pause {
            match state {
                IDLE => {
                    if start {
                        self.t.set(self.state, WLOAD);
                        self.t.set(self.busy, 1);
                        self.t.set(self.wchan, 0);
                        self.t.set(self.widx, 0);
                    }
                }
                WLOAD => {
                    let c = (self.t.val(self.wchan) as usize) % CHANNELS;
                    let i = (self.t.val(self.widx) as usize) % 9;
                    self.weights[c][i] = self.kernels[c][i / 3][i % 3];
                    if self.t.val(self.widx) >= 8 {
                        if self.t.val(self.wchan) >= (CHANNELS as u128 - 1) {
                            self.t.set(self.state, WIN);
                            self.t.set(self.row, 0);
                            self.t.set(self.col, 0);
                            self.t.set(self.chan, 0);
                            self.t.set(self.k, 0);
                            self.t.set(self.acc, 0);
                        } else {
                            self.t.set(self.wchan, self.t.val(self.wchan) + 1);
                            self.t.set(self.widx, 0);
                        }
                    } else {
                        self.t.set(self.widx, self.t.val(self.widx) + 1);
                    }
                }
                WIN => {
                    let kk = self.t.val(self.k) as usize;
                    let r = self.t.val(self.row) as usize;
                    let c = self.t.val(self.col) as usize;
                    let ch = (self.t.val(self.chan) as usize) % CHANNELS;
                    // Address decode wraps like the hardware counters do,
                    // so corrupted indices read garbage instead of
                    // escaping the arrays.
                    let a = self.activations[(r + (kk % 9) / 3) % 8][(c + (kk % 9) % 3) % 8];
                    let w = self.weights[ch][kk % 9];
                    let acc = self.t.val(self.acc) as u32 as i32;
                    let acc_new = acc.wrapping_add(i32::from(a) * i32::from(w));
                    self.t.set(self.acc, acc_new as u32 as u128);
                    if kk >= 8 {
                        self.t.set(self.state, EMIT);
                        self.t.set(self.pending, 1);
                        self.pixel = relu_sat(acc_new);
                    } else {
                        self.t.set(self.k, (kk + 1) as u128);
                    }
                }
                EMIT if out_ready => {
                    let ch = (self.t.val(self.chan) as usize) % CHANNELS;
                    self.units[ch].push(self.pixel);
                    emitted = true;
                    self.advance_position();
                }
                _ => {} // stalled EMIT, DONE, and corrupted encodings hold
            }
        }
        self.t.commit();

        let post_state = self.t.val(self.state);
        self.t.put(self.o_valid, u128::from(emitted));
        self.t.put(self.o_busy, self.t.val(self.busy));
        self.t.put(self.o_done, u128::from(post_state == DONE));
        self.t.put(self.s_wload, u128::from(post_state == WLOAD));
        self.t.put(self.s_winlast, u128::from(self.t.val(self.k) == 8));
        self.t.put(self.s_emitting, self.t.val(self.pending));
        self.t.put(self.o_pixel, u128::from(self.pixel));
    }

    fn done(&self) -> bool {
        self.t.val(self.state) == DONE
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
        SelectorPreset::new("l2-msb", Level::SubmoduleOutputs, BitType::Msb),
        SelectorPreset::new("l3-all", Level::Registers, BitType::All),
        SelectorPreset::new("l3-msb", Level::Registers, BitType::Msb),
        SelectorPreset::new("l3-used", Level::Registers, BitType::UsedMsb),
        SelectorPreset::new("l3-lsb", Level::Registers, BitType::Lsb),
    ]
}

pub fn used_msb() -> UsedMsbMap {
    [
        ("ctl/state", 2),
        ("ctl/busy", 0),
        ("wld/chan", 1),
        ("wld/idx", 3),
        ("mac/k", 3),
        ("pos/row", 2),
        ("pos/col", 2),
        ("pos/chan", 1),
        ("out/pending", 0),
        ("out/count", 5),
    ]
    .into_iter()
    .map(|(p, b)| (p.to_string(), b))
    .collect()
}

/// Monitor nets for the control contract of this design.
pub const NETS: &str = "\
# conv monitor nets

net conv-start
place idle
place started
place running
transition t.start
transition t.busy
edge idle -> t.start
edge t.start -> started
edge started -> t.busy
edge t.busy -> running
init idle 1
final t.busy
event transition=t.start signal=in/start type=2 target=0x1
event transition=t.busy signal=ctl/busy type=2 target=0x1

net conv-weight-phase
place p0
place p1
place p2
transition t.enter
transition t.exit
edge p0 -> t.enter
edge t.enter -> p1
edge p1 -> t.exit
edge t.exit -> p2
init p0 1
final t.exit
event transition=t.enter signal=ctl/state type=2 target=0x1
event transition=t.exit signal=ctl/state type=4 target=0x2 index=1

net conv-weight-channels
place p0
place p1
place p2
place p3
transition t.c1
transition t.c2
transition t.c3
edge p0 -> t.c1
edge t.c1 -> p1
edge p1 -> t.c2
edge t.c2 -> p2
edge p2 -> t.c3
edge t.c3 -> p3
init p0 1
final t.c3
event transition=t.c1 signal=wld/chan type=2 target=0x1
event transition=t.c2 signal=wld/chan type=2 target=0x2
event transition=t.c3 signal=wld/chan type=2 target=0x3

net conv-row-advance
place p0
place p1
place p2
transition t.first
transition t.wrap
edge p0 -> t.first
edge t.first -> p1
edge p1 -> t.wrap
edge t.wrap -> p2
init p0 1
final t.wrap
event transition=t.first signal=pos/row type=3 index=1
event transition=t.wrap signal=pos/row type=4 target=0x0 index=1

net conv-col-cycle
place p0
place p1
place p2
transition t.first
transition t.nextrow
edge p0 -> t.first
edge t.first -> p1
edge p1 -> t.nextrow
edge t.nextrow -> p2
init p0 1
final t.nextrow
event transition=t.first signal=pos/col type=3 index=1
event transition=t.nextrow signal=pos/col type=3 index=7

net conv-channel-steps
place p0
place p1
place p2
place p3
transition t.c1
transition t.c2
transition t.c3
edge p0 -> t.c1
edge t.c1 -> p1
edge p1 -> t.c2
edge t.c2 -> p2
edge p2 -> t.c3
edge t.c3 -> p3
init p0 1
final t.c3
event transition=t.c1 signal=pos/chan type=2 target=0x1
event transition=t.c2 signal=pos/chan type=2 target=0x2
event transition=t.c3 signal=pos/chan type=2 target=0x3

net conv-mac-window
place p0
place p1
place p2
transition t.first
transition t.top
edge p0 -> t.first
edge t.first -> p1
edge p1 -> t.top
edge t.top -> p2
init p0 1
final t.top
event transition=t.first signal=mac/k type=3 index=1
event transition=t.top signal=mac/k type=4 target=0x8 index=1

net conv-emit-handshake
place lo
place hi
transition t.raise
transition t.drop
edge lo -> t.raise
edge t.raise -> hi
edge hi -> t.drop
edge t.drop -> lo
init lo 1
final t.drop
event transition=t.raise signal=out/pending type=2 target=0x1
event transition=t.drop signal=out/pending type=2 target=0x0

net conv-output-count
place p0
place p1
place p2
transition t.first
transition t.fill
edge p0 -> t.first
edge t.first -> p1
edge p1 -> t.fill
edge t.fill -> p2
init p0 1
final t.fill
event transition=t.first signal=out/count type=3 index=1
event transition=t.fill signal=out/count type=4 target=0x23 index=1

net conv-pause-guard
place run
place stopped
place dead
place sink
transition t.stop
transition t.pause
edge run -> t.stop
edge t.stop -> stopped
edge dead -> t.pause
edge t.pause -> sink
init run 1
final t.stop
event transition=t.stop signal=ctl/busy type=2 target=0x0
event transition=t.pause signal=in/pause type=2 target=0x1

net conv-clear-guard
place run
place stopped
place dead
place sink
transition t.finish
transition t.clear
edge run -> t.finish
edge t.finish -> stopped
edge dead -> t.clear
edge t.clear -> sink
init run 1
final t.finish
event transition=t.finish signal=out/done type=2 target=0x1
event transition=t.clear signal=in/clear type=2 target=0x1

net conv-start-once
place p0
place p1
place p2
transition t.rise
transition t.fall
edge p0 -> t.rise
edge t.rise -> p1
edge p1 -> t.fall
edge t.fall -> p2
init p0 1
final t.fall
event transition=t.rise signal=in/start type=2 target=0x1
event transition=t.fall signal=in/start type=2 target=0x0

net conv-completion
place p0
place p1
place p2
transition t.done
transition t.idle
edge p0 -> t.done
edge t.done -> p1
edge p1 -> t.idle
edge t.idle -> p2
init p0 1
final t.idle
event transition=t.done signal=ctl/state type=2 target=0x4
event transition=t.idle signal=ctl/busy type=2 target=0x0

net conv-compute-alternation
place win_turn
place emit_turn
transition t.towin
transition t.toemit
edge win_turn -> t.towin
edge t.towin -> emit_turn
edge emit_turn -> t.toemit
edge t.toemit -> win_turn
init win_turn 1
final t.toemit
event transition=t.towin signal=ctl/state type=2 target=0x2
event transition=t.toemit signal=ctl/state type=2 target=0x3
";

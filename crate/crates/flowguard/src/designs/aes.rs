//! AES-128 encryption design: a batch of plaintext blocks encrypted
//! under one key, one round per two cycles (substitute/shift, then
//! mix/add-round-key), with the round keys expanded ahead of time.
//!
//! The whole control state fits in nine bits across four registers: a
//! busy flag, the 4-bit round counter (0 selects the block-load cycle),
//! the phase bit inside a round, and a 3-bit completed-block counter.
//!
//! [`oracle`] is an independent implementation: it derives the
//! substitution box from inversion in GF(2^8) plus the affine map
//! instead of using the design's lookup table, and multiplies in the
//! field directly rather than through the design's fixed xtime network.

use super::table::{In, Reg, SignalTable, Wire};
use super::SelectorPreset;
use crate::error::{Error, Result};
use crate::seqcheck::{BitType, Level, UsedMsbMap};
use crate::signal::{SignalClass, SignalKind, SignalRef};
use crate::sim::{Design, OutputRecord};

/// The completed-block counter is three bits wide, so a batch is capped
/// at seven blocks.
pub const MAX_BLOCKS: usize = 7;

const ROUNDS: usize = 10;

#[rustfmt::skip]
const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

fn xtime(b: u8) -> u8 {
    (b << 1) ^ if b & 0x80 != 0 { 0x1b } else { 0 }
}

fn sub_bytes(s: &mut [u8; 16]) {
    for b in s.iter_mut() {
        *b = SBOX[*b as usize];
    }
}

fn shift_rows(s: &mut [u8; 16]) {
    let old = *s;
    for r in 0..4 {
        for c in 0..4 {
            s[r + 4 * c] = old[r + 4 * ((c + r) % 4)];
        }
    }
}

fn mix_columns(s: &mut [u8; 16]) {
    for c in 0..4 {
        let col = [s[4 * c], s[4 * c + 1], s[4 * c + 2], s[4 * c + 3]];
        let x = [xtime(col[0]), xtime(col[1]), xtime(col[2]), xtime(col[3])];
        s[4 * c] = x[0] ^ (col[1] ^ x[1]) ^ col[2] ^ col[3];
        s[4 * c + 1] = col[0] ^ x[1] ^ (col[2] ^ x[2]) ^ col[3];
        s[4 * c + 2] = col[0] ^ col[1] ^ x[2] ^ (col[3] ^ x[3]);
        s[4 * c + 3] = (col[0] ^ x[0]) ^ col[1] ^ col[2] ^ x[3];
    }
}

fn add_round_key(s: &mut [u8; 16], rk: &[u8; 16]) {
    for (b, k) in s.iter_mut().zip(rk) {
        *b ^= k;
    }
}

fn expand_key(key: &[u8; 16], sbox: &dyn Fn(u8) -> u8) -> [[u8; 16]; 11] {
    let mut w = [[0u8; 4]; 44];
    for (i, word) in w.iter_mut().take(4).enumerate() {
        word.copy_from_slice(&key[4 * i..4 * i + 4]);
    }
    let mut rcon: u8 = 1;
    for i in 4..44 {
        let mut t = w[i - 1];
        if i % 4 == 0 {
            t.rotate_left(1);
            for b in t.iter_mut() {
                *b = sbox(*b);
            }
            t[0] ^= rcon;
            rcon = xtime(rcon);
        }
        for j in 0..4 {
            w[i][j] = w[i - 4][j] ^ t[j];
        }
    }
    let mut rks = [[0u8; 16]; 11];
    for (r, rk) in rks.iter_mut().enumerate() {
        for c in 0..4 {
            rk[4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
        }
    }
    rks
}

mod reference {
    //! Field-arithmetic implementation used only by [`super::oracle`].

    /// Multiplication in GF(2^8) modulo x^8 + x^4 + x^3 + x + 1.
    fn gmul(mut a: u8, mut b: u8) -> u8 {
        let mut p = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                p ^= a;
            }
            let hi = a & 0x80 != 0;
            a <<= 1;
            if hi {
                a ^= 0x1b;
            }
            b >>= 1;
        }
        p
    }

    /// Inverse via Fermat: x^254 in a 255-element multiplicative group.
    fn ginv(x: u8) -> u8 {
        if x == 0 {
            return 0;
        }
        let mut acc = 1u8;
        let mut base = x;
        let mut e = 254u8;
        while e != 0 {
            if e & 1 != 0 {
                acc = gmul(acc, base);
            }
            base = gmul(base, base);
            e >>= 1;
        }
        acc
    }

    /// The substitution box derived from first principles.
    pub fn sbox(x: u8) -> u8 {
        let v = ginv(x);
        v ^ v.rotate_left(1) ^ v.rotate_left(2) ^ v.rotate_left(3) ^ v.rotate_left(4) ^ 0x63
    }

    pub fn sub_bytes(s: &mut [u8; 16]) {
        for b in s.iter_mut() {
            *b = sbox(*b);
        }
    }

    pub fn shift_rows(s: &mut [u8; 16]) {
        let old = *s;
        for r in 0..4 {
            for c in 0..4 {
                s[r + 4 * c] = old[r + 4 * ((c + r) % 4)];
            }
        }
    }

    pub fn mix_columns(s: &mut [u8; 16]) {
        for c in 0..4 {
            let col: [u8; 4] = s[4 * c..4 * c + 4].try_into().unwrap();
            for r in 0..4 {
                s[4 * c + r] = gmul(col[r % 4], 2)
                    ^ gmul(col[(r + 1) % 4], 3)
                    ^ col[(r + 2) % 4]
                    ^ col[(r + 3) % 4];
            }
        }
    }
}

/// Reference output: one unit per ciphertext block.
pub fn oracle(key: &[u8; 16], plaintexts: &[[u8; 16]]) -> OutputRecord {
    let rks = expand_key(key, &reference::sbox);
    let units = plaintexts
        .iter()
        .map(|pt| {
            let mut s = *pt;
            add_round_key(&mut s, &rks[0]);
            for (r, rk) in rks.iter().enumerate().skip(1) {
                reference::sub_bytes(&mut s);
                reference::shift_rows(&mut s);
                if r != ROUNDS {
                    reference::mix_columns(&mut s);
                }
                add_round_key(&mut s, rk);
            }
            s.to_vec()
        })
        .collect();
    OutputRecord { units }
}

pub struct AesDesign {
    t: SignalTable,
    busy: Reg,
    round: Reg,
    phase: Reg,
    ptctr: Reg,
    state: Reg,
    start: In,
    pt_valid: In,
    pt: In,
    o_busy: Wire,
    o_ctv: Wire,
    o_done: Wire,
    o_ct: Wire,
    s_keys: Wire,
    s_final: Wire,
    s_mix: Wire,

    key: [u8; 16],
    plaintexts: Vec<[u8; 16]>,
    rks: [[u8; 16]; 11],
    block: [u8; 16],
    units: Vec<Vec<u8>>,
    cycle: u64,
}

impl AesDesign {
    pub fn new(key: [u8; 16], plaintexts: Vec<[u8; 16]>) -> Result<Self> {
        if plaintexts.is_empty() || plaintexts.len() > MAX_BLOCKS {
            return Err(Error::Config(format!(
                "plaintext batch must hold 1..={MAX_BLOCKS} blocks, got {}",
                plaintexts.len()
            )));
        }
        let mut t = SignalTable::new();
        let ctl = SignalClass::Control;
        let dat = SignalClass::Data;
        let busy = t.reg("aes/busy", 1, ctl, 0);
        let round = t.reg("aes/round", 4, ctl, 0);
        let phase = t.reg("aes/phase", 1, ctl, 0);
        let ptctr = t.reg("aes/ptctr", 3, ctl, 0);
        let state = t.reg("aes/state", 128, dat, 0);
        let start = t.input("aes/start", 1, ctl);
        let pt_valid = t.input("aes/pt_valid", 1, ctl);
        let pt = t.input("aes/pt", 128, dat);
        let o_busy = t.wire("aes/busy_o", 1, SignalKind::PrimaryOutput, ctl);
        let o_ctv = t.wire("aes/ct_valid", 1, SignalKind::PrimaryOutput, ctl);
        let o_done = t.wire("aes/done_o", 1, SignalKind::PrimaryOutput, ctl);
        let o_ct = t.wire("aes/ct", 128, SignalKind::Wire, dat);
        let s_keys = t.wire("ks/ready", 1, SignalKind::SubmoduleOutput, ctl);
        let s_final = t.wire("rnd/final", 1, SignalKind::SubmoduleOutput, ctl);
        let s_mix = t.wire("dp/mix", 1, SignalKind::SubmoduleOutput, ctl);
        let units = vec![Vec::new(); plaintexts.len()];
        let mut d = AesDesign {
            t,
            busy,
            round,
            phase,
            ptctr,
            state,
            start,
            pt_valid,
            pt,
            o_busy,
            o_ctv,
            o_done,
            o_ct,
            s_keys,
            s_final,
            s_mix,
            key,
            plaintexts,
            rks: [[0; 16]; 11],
            block: [0; 16],
            units,
            cycle: 0,
        };
        d.prime();
        Ok(d)
    }

    /// Key expansion happens while reset is held.
    fn prime(&mut self) {
        self.rks = expand_key(&self.key, &|b| SBOX[b as usize]);
        self.t.put(self.s_keys, 1);
    }

    fn store_block(&mut self) {
        self.t.set(self.state, u128::from_be_bytes(self.block));
    }

    fn nblocks(&self) -> usize {
        self.plaintexts.len()
    }
}

impl Design for AesDesign {
    fn signals(&self) -> &[SignalRef] {
        self.t.refs()
    }

    fn reset(&mut self) {
        self.t.reset();
        self.block = [0; 16];
        self.units = vec![Vec::new(); self.nblocks()];
        self.cycle = 0;
        self.prime();
    }

    fn step(&mut self) {
        self.cycle += 1;
        // Stimulus driver: one start pulse with the batch marked valid,
        // and the plaintext bus holding the block the load stage reads next.
        let pending = self.plaintexts[self.t.val(self.ptctr) as usize % self.nblocks()];
        self.t.drive(self.start, u128::from(self.cycle == 1));
        self.t.drive(self.pt_valid, u128::from(self.cycle == 1));
        self.t.drive(self.pt, u128::from_be_bytes(pending));

        let start = self.t.in_val(self.start) != 0;
        let pt_valid = self.t.in_val(self.pt_valid) != 0;
        let busy = self.t.val(self.busy) != 0;
        let round = self.t.val(self.round) as usize;
        let phase = self.t.val(self.phase) != 0;
        let ptctr = self.t.val(self.ptctr) as usize;

        let mut emitted = false;
        if !busy {
            if start && pt_valid {
                self.t.set(self.busy, 1);
                self.t.set(self.round, 0);
                self.t.set(self.phase, 0);
            }
        } else if round == 0 {
            // Block-load cycle: latch the plaintext bus, then the initial
            // round-key addition.
            self.block = self.t.in_val(self.pt).to_be_bytes();
            add_round_key(&mut self.block, &self.rks[0]);
            self.store_block();
            self.t.set(self.round, 1);
            self.t.set(self.phase, 0);
        } else if !phase {
            sub_bytes(&mut self.block);
            shift_rows(&mut self.block);
            self.store_block();
            self.t.set(self.phase, 1);
        } else {
            // Corrupted round counters wrap at the key-schedule decoder.
            let rk = self.rks[round % 11];
            if round >= ROUNDS {
                add_round_key(&mut self.block, &rk);
                self.store_block();
                let slot = ptctr % self.nblocks();
                let block = self.block;
                self.units[slot].extend_from_slice(&block);
                emitted = true;
                let next = ptctr + 1;
                self.t.set(self.ptctr, (next & 0b111) as u128);
                if next >= self.nblocks() {
                    self.t.set(self.busy, 0);
                } else {
                    self.t.set(self.round, 0);
                }
                self.t.set(self.phase, 0);
            } else {
                mix_columns(&mut self.block);
                add_round_key(&mut self.block, &rk);
                self.store_block();
                self.t.set(self.round, (round + 1) as u128);
                self.t.set(self.phase, 0);
            }
        }
        self.t.commit();

        let done = self.t.val(self.busy) == 0 && self.t.val(self.ptctr) as usize >= self.nblocks();
        self.t.put(self.o_busy, self.t.val(self.busy));
        self.t.put(self.o_ctv, u128::from(emitted));
        self.t.put(self.o_done, u128::from(done));
        self.t.put(self.o_ct, u128::from_be_bytes(self.block));
        self.t.put(self.s_keys, 1);
        self.t.put(self.s_final, u128::from(self.t.val(self.round) as usize == ROUNDS));
        self.t.put(self.s_mix, self.t.val(self.phase));
    }

    fn done(&self) -> bool {
        self.t.val(self.busy) == 0 && self.t.val(self.ptctr) as usize >= self.nblocks()
    }

    fn read(&self, idx: usize) -> crate::signal::BitVec {
        self.t.read(idx)
    }

    fn flip_register_bit(&mut self, idx: usize, bit: u16) -> Result<()> {
        self.t.flip_register_bit(idx, bit)
    }

    fn force_input(&mut self, idx: usize, value: Option<crate::signal::BitVec>) -> Result<()> {
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
        SelectorPreset::new("l3-all", Level::Registers, BitType::All),
        SelectorPreset::new("l3-msb", Level::Registers, BitType::Msb),
    ]
}

pub fn used_msb() -> UsedMsbMap {
    [
        ("aes/busy", 0),
        ("aes/round", 3),
        ("aes/phase", 0),
        ("aes/ptctr", 2),
    ]
    .into_iter()
    .map(|(p, b)| (p.to_string(), b))
    .collect()
}

/// Monitor nets for the control contract of this design. The
/// block-count chain encodes the bundled five-block batch; configs with
/// a different batch size must supply their own net file.
pub const NETS: &str = "\
# aes monitor nets

net aes-block-count
place p0
place p1
place p2
place p3
place p4
place p5
transition t.b1
transition t.b2
transition t.b3
transition t.b4
transition t.b5
edge p0 -> t.b1
edge t.b1 -> p1
edge p1 -> t.b2
edge t.b2 -> p2
edge p2 -> t.b3
edge t.b3 -> p3
edge p3 -> t.b4
edge t.b4 -> p4
edge p4 -> t.b5
edge t.b5 -> p5
init p0 1
final t.b5
event transition=t.b1 signal=aes/ptctr type=2 target=0x1
event transition=t.b2 signal=aes/ptctr type=2 target=0x2
event transition=t.b3 signal=aes/ptctr type=2 target=0x3
event transition=t.b4 signal=aes/ptctr type=2 target=0x4
event transition=t.b5 signal=aes/ptctr type=2 target=0x5

net aes-startup
place p0
place p1
place p2
transition t.start
transition t.busy
edge p0 -> t.start
edge t.start -> p1
edge p1 -> t.busy
edge t.busy -> p2
init p0 1
final t.busy
event transition=t.start signal=aes/start type=2 target=0x1
event transition=t.busy signal=aes/busy type=2 target=0x1

net aes-phase-alternation
place lo
place hi
transition t.up
transition t.down
edge lo -> t.up
edge t.up -> hi
edge hi -> t.down
edge t.down -> lo
init lo 1
final t.down
event transition=t.up signal=aes/phase type=2 target=0x1
event transition=t.down signal=aes/phase type=2 target=0x0

net aes-round-span
place lo
place hi
transition t.begin
transition t.last
edge lo -> t.begin
edge t.begin -> hi
edge hi -> t.last
edge t.last -> lo
init lo 1
final t.last
event transition=t.begin signal=aes/round type=2 target=0x1
event transition=t.last signal=aes/round type=2 target=0xa

net aes-busy-envelope
place p0
place p1
place p2
transition t.on
transition t.off
edge p0 -> t.on
edge t.on -> p1
edge p1 -> t.off
edge t.off -> p2
init p0 1
final t.off
event transition=t.on signal=aes/busy type=2 target=0x1
event transition=t.off signal=aes/busy type=2 target=0x0

net aes-ct-strobe
place lo
place hi
transition t.rise
transition t.fall
edge lo -> t.rise
edge t.rise -> hi
edge hi -> t.fall
edge t.fall -> lo
init lo 1
final t.rise
event transition=t.rise signal=aes/ct_valid type=2 target=0x1
event transition=t.fall signal=aes/ct_valid type=2 target=0x0

net aes-pt-handshake
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
event transition=t.rise signal=aes/pt_valid type=2 target=0x1
event transition=t.fall signal=aes/pt_valid type=2 target=0x0
";

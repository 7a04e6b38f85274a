//! Network-on-chip scenario: a 4x4 mesh of 5-port wormhole routers in
//! which Router 2 multicasts eight 9-flit packets to six sinks while
//! three staggered unicasts cross the same fabric.
//!
//! Router identifiers are column-major (`id = col * 4 + row`). Each
//! router has west/south/east/north links plus a local port, a
//! four-entry FIFO with route computation per input unit, a crossbar,
//! and per-output-port grant state. Routing is dimension-ordered
//! (columns before rows); arbitration priority is fixed at local
//! injection, then west, south, east, north. A head flit carries the
//! 16-bit destination mask and may fan out to several ports at once;
//! its route stays locked for the body and tail flits behind it.
//! Flits alternate between the two virtual channels at injection, and
//! every link checks that alternation on delivery: a flit whose channel
//! bit does not match the expected toggle is dropped, which also rejects
//! duplicates after a corrupted acknowledge.
//!
//! Only Router 2 is observable: its injection, east and south input
//! units, its east/south output grants, and the link signals of the two
//! neighbor-facing ports (towards Routers 6 and 3). Those port inputs
//! are the design's fault-injection surface.

use super::table::{In, Reg, SignalTable, Wire};
use super::SelectorPreset;
use crate::error::{Error, Result};
use crate::seqcheck::{BitType, Level, UsedMsbMap};
use crate::signal::{BitVec, SignalClass, SignalKind, SignalRef};
use crate::sim::{Design, OutputRecord};

pub const MCAST_PACKETS: usize = 8;
pub const PAYLOADS_PER_PACKET: usize = 8;
pub const UNICAST_COUNT: usize = 3;
/// 64 multicast payloads followed by one payload per unicast.
pub const PAYLOAD_COUNT: usize = MCAST_PACKETS * PAYLOADS_PER_PACKET + UNICAST_COUNT;
/// Release cycles of the three unicasts, 64 cycles apart.
pub const DEFAULT_UNICAST_CYCLES: [u64; 3] = [160, 224, 288];

const GRID: usize = 4;
const N_ROUTERS: usize = GRID * GRID;
const DEPTH: usize = 4;
const PORTS: usize = 5;
const LOCAL: usize = 0;
const WEST: usize = 1;
const SOUTH: usize = 2;
const EAST: usize = 3;
const NORTH: usize = 4;
const SOURCE: usize = 2;
const SINKS: [usize; 6] = [6, 7, 10, 11, 14, 15];
const UNICAST_FROM: [usize; 3] = [6, 10, 14];
const UNICAST_TO: [usize; 3] = [7, 11, 15];

const HEAD: u8 = 0;
const TAIL: u8 = 2;

fn mcast_mask() -> u16 {
    SINKS.iter().fold(0, |m, &d| m | (1 << d))
}

fn neighbor(id: usize, port: usize) -> Option<usize> {
    let (col, row) = (id / GRID, id % GRID);
    match port {
        WEST => (col > 0).then(|| id - GRID),
        EAST => (col < GRID - 1).then(|| id + GRID),
        SOUTH => (row < GRID - 1).then(|| id + 1),
        NORTH => (row > 0).then(|| id - 1),
        _ => None,
    }
}

fn opposite(port: usize) -> usize {
    match port {
        WEST => EAST,
        EAST => WEST,
        SOUTH => NORTH,
        NORTH => SOUTH,
        p => p,
    }
}

/// Dimension-ordered route of a destination mask: per-port sub-masks
/// (head flits are re-addressed per branch) and the set of ports used.
fn route(my: usize, destmask: u16) -> ([u16; PORTS], u8) {
    let mut sub = [0u16; PORTS];
    let (mc, mr) = (my / GRID, my % GRID);
    for d in 0..N_ROUTERS {
        if destmask & (1 << d) == 0 {
            continue;
        }
        let (dc, dr) = (d / GRID, d % GRID);
        let port = if d == my {
            LOCAL
        } else if dc > mc {
            EAST
        } else if dc < mc {
            WEST
        } else if dr > mr {
            SOUTH
        } else {
            NORTH
        };
        sub[port] |= 1 << d;
    }
    let mut ports = 0u8;
    for (p, &m) in sub.iter().enumerate() {
        if m != 0 {
            ports |= 1 << p;
        }
    }
    (sub, ports)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Flit {
    kind: u8,
    data: u16,
    vch: bool,
}

impl Flit {
    fn line(self) -> u128 {
        (u128::from(self.kind & 3) << 16) | u128::from(self.data)
    }

    fn from_line(v: u128) -> Self {
        Flit {
            kind: ((v >> 16) & 3) as u8,
            data: v as u16,
            vch: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct InputUnit {
    ring: [Flit; DEPTH],
    wr: u8,
    rd: u8,
    lock: bool,
    mask: u8,
    pend: u8,
    expect: bool,
    inpkt: bool,
}

impl InputUnit {
    fn fill(&self) -> u8 {
        self.wr.wrapping_sub(self.rd) & 7
    }

    fn room(&self) -> bool {
        usize::from(self.fill()) < DEPTH
    }

    fn front(&self) -> Flit {
        self.ring[usize::from(self.rd) % DEPTH]
    }

    fn push(&mut self, flit: Flit) {
        self.ring[usize::from(self.wr) % DEPTH] = flit;
        self.wr = self.wr.wrapping_add(1) & 7;
        self.expect = !flit.vch;
        self.inpkt = flit.kind != TAIL;
    }

    fn pop(&mut self) {
        self.rd = self.rd.wrapping_add(1) & 7;
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct OutputUnit {
    busy: bool,
    src: u8,
}

#[derive(Debug, Clone, Default)]
struct Router {
    units: [InputUnit; PORTS],
    outs: [OutputUnit; PORTS],
    source: Vec<Flit>,
    src_pos: usize,
    release: u64,
    sent: u8,
    sink: Vec<u16>,
}

impl Router {
    fn quiescent(&self) -> bool {
        self.src_pos >= self.source.len()
            && self.units.iter().all(|u| u.fill() == 0 && u.pend == 0 && !u.lock)
            && self.outs.iter().all(|o| !o.busy)
    }
}

/// One in-flight transmission attempt of an input unit's front flit.
struct Attempt {
    unit: usize,
    flit: Flit,
    portset: u8,
    pending: u8,
    tried: u8,
    void: u8,
}

/// Outcome of a receiving unit's acceptance logic.
fn decide(unit: &InputUnit, flit: Flit, lck: bool) -> (bool, bool) {
    if !unit.room() {
        return (false, false);
    }
    if flit.kind == HEAD {
        if lck {
            (true, true)
        } else {
            (false, false)
        }
    } else if !lck || !unit.inpkt || flit.vch != unit.expect {
        // Acknowledged but dropped: an out-of-protocol payload flit is
        // lost rather than wedging the link.
        (true, false)
    } else {
        (true, true)
    }
}

fn mcast_flits(payloads: &[u16]) -> Vec<Flit> {
    let mut flits = Vec::with_capacity(MCAST_PACKETS * (PAYLOADS_PER_PACKET + 1));
    let mut idx = 0usize;
    for p in 0..MCAST_PACKETS {
        flits.push(Flit {
            kind: HEAD,
            data: mcast_mask(),
            vch: idx & 1 == 1,
        });
        idx += 1;
        for j in 0..PAYLOADS_PER_PACKET {
            flits.push(Flit {
                kind: if j == PAYLOADS_PER_PACKET - 1 { TAIL } else { 1 },
                data: payloads[p * PAYLOADS_PER_PACKET + j],
                vch: idx & 1 == 1,
            });
            idx += 1;
        }
    }
    flits
}

fn unicast_flits(dest: usize, payload: u16) -> Vec<Flit> {
    vec![
        Flit {
            kind: HEAD,
            data: 1 << dest,
            vch: false,
        },
        Flit {
            kind: TAIL,
            data: payload,
            vch: true,
        },
    ]
}

/// Reference output: per sink (in identifier order), the sorted multiset
/// of payloads it must eject, as big-endian byte pairs.
pub fn oracle(payloads: &[u16]) -> OutputRecord {
    let mcast = &payloads[..MCAST_PACKETS * PAYLOADS_PER_PACKET];
    let units = SINKS
        .iter()
        .map(|&sink| {
            let mut v = mcast.to_vec();
            if let Some(k) = UNICAST_TO.iter().position(|&d| d == sink) {
                v.push(payloads[MCAST_PACKETS * PAYLOADS_PER_PACKET + k]);
            }
            v.sort_unstable();
            v.iter().flat_map(|p| p.to_be_bytes()).collect()
        })
        .collect();
    OutputRecord { units }
}

struct UnitRegs {
    wr: Reg,
    rd: Reg,
    lock: Reg,
    mask: Reg,
    pend: Reg,
    vc: Reg,
    inpkt: Reg,
}

struct PortIn {
    valid: In,
    vch: In,
    lck: In,
    data: In,
}

struct PortOut {
    valid: Wire,
    vch: Wire,
    lck: Wire,
    data: Wire,
    ack_in: In,
    rdy_in: In,
}

pub struct NocScenario {
    t: SignalTable,
    inj: UnitRegs,
    e_unit: UnitRegs,
    s_unit: UnitRegs,
    inj_sent: Reg,
    eo_busy: Reg,
    eo_src: Reg,
    so_busy: Reg,
    so_src: Reg,
    e_in: PortIn,
    s_in: PortIn,
    e_out: PortOut,
    s_out: PortOut,
    e_ack: Wire,
    e_rdy: Wire,
    s_ack: Wire,
    s_rdy: Wire,
    inj_busy: Wire,
    inj_arr: [Wire; 2],
    e_arr: [Wire; 2],
    e_send: [Wire; 2],

    payloads: Vec<u16>,
    unicast_cycles: Vec<u64>,
    mesh: Vec<Router>,
    cycle: u64,
}

impl NocScenario {
    pub fn new(payloads: Vec<u16>, unicast_cycles: Vec<u64>) -> Result<Self> {
        if payloads.len() != PAYLOAD_COUNT {
            return Err(Error::Config(format!(
                "scenario needs exactly {PAYLOAD_COUNT} payloads, got {}",
                payloads.len()
            )));
        }
        if unicast_cycles.len() != UNICAST_COUNT {
            return Err(Error::Config(format!(
                "scenario needs exactly {UNICAST_COUNT} unicast release cycles, got {}",
                unicast_cycles.len()
            )));
        }
        let mut t = SignalTable::new();
        let ctl = SignalClass::Control;
        let unit_regs = |t: &mut SignalTable, pfx: &str| UnitRegs {
            wr: t.reg(&format!("{pfx}/wr"), 3, ctl, 0),
            rd: t.reg(&format!("{pfx}/rd"), 3, ctl, 0),
            lock: t.reg(&format!("{pfx}/lock"), 1, ctl, 0),
            mask: t.reg(&format!("{pfx}/mask"), 5, ctl, 0),
            pend: t.reg(&format!("{pfx}/pend"), 5, ctl, 0),
            vc: t.reg(&format!("{pfx}/vc"), 1, ctl, 0),
            inpkt: t.reg(&format!("{pfx}/inpkt"), 1, ctl, 0),
        };
        let inj = unit_regs(&mut t, "inj");
        let inj_sent = t.reg("inj/sent", 4, ctl, 0);
        let e_unit = unit_regs(&mut t, "e_in");
        let s_unit = unit_regs(&mut t, "s_in");
        let eo_busy = t.reg("e_out/busy", 1, ctl, 0);
        let eo_src = t.reg("e_out/src", 3, ctl, 0);
        let so_busy = t.reg("s_out/busy", 1, ctl, 0);
        let so_src = t.reg("s_out/src", 3, ctl, 0);

        let port_in = |t: &mut SignalTable, pfx: &str| PortIn {
            valid: t.input(&format!("{pfx}/valid"), 1, ctl),
            vch: t.input(&format!("{pfx}/vch"), 1, ctl),
            lck: t.input(&format!("{pfx}/lck"), 1, ctl),
            data: t.input(&format!("{pfx}/data"), 18, SignalClass::Data),
        };
        let port_out = |t: &mut SignalTable, pfx: &str| PortOut {
            valid: t.wire(&format!("{pfx}/valid"), 1, SignalKind::PrimaryOutput, ctl),
            vch: t.wire(&format!("{pfx}/vch"), 1, SignalKind::PrimaryOutput, ctl),
            lck: t.wire(&format!("{pfx}/lck"), 1, SignalKind::PrimaryOutput, ctl),
            data: t.wire(&format!("{pfx}/data"), 18, SignalKind::Wire, SignalClass::Data),
            ack_in: t.input(&format!("{pfx}/ack_in"), 1, ctl),
            rdy_in: t.input(&format!("{pfx}/rdy_in"), 1, ctl),
        };
        let e_in = port_in(&mut t, "e_in");
        let s_in = port_in(&mut t, "s_in");
        let e_out = port_out(&mut t, "e_out");
        let s_out = port_out(&mut t, "s_out");
        let e_ack = t.wire("e_in/ack", 1, SignalKind::PrimaryOutput, ctl);
        let e_rdy = t.wire("e_in/rdy", 1, SignalKind::PrimaryOutput, ctl);
        let s_ack = t.wire("s_in/ack", 1, SignalKind::PrimaryOutput, ctl);
        let s_rdy = t.wire("s_in/rdy", 1, SignalKind::PrimaryOutput, ctl);
        let inj_busy = t.wire("inj/busy", 1, SignalKind::SubmoduleOutput, ctl);
        let w = |t: &mut SignalTable, p: &str| t.wire(p, 1, SignalKind::SubmoduleOutput, ctl);
        let inj_arr = [w(&mut t, "inj_in/vc0_arr"), w(&mut t, "inj_in/vc1_arr")];
        let e_arr = [w(&mut t, "e_in/vc0_arr"), w(&mut t, "e_in/vc1_arr")];
        let e_send = [w(&mut t, "e_out/vc0_send"), w(&mut t, "e_out/vc1_send")];

        let mut d = NocScenario {
            t,
            inj,
            e_unit,
            s_unit,
            inj_sent,
            eo_busy,
            eo_src,
            so_busy,
            so_src,
            e_in,
            s_in,
            e_out,
            s_out,
            e_ack,
            e_rdy,
            s_ack,
            s_rdy,
            inj_busy,
            inj_arr,
            e_arr,
            e_send,
            payloads,
            unicast_cycles,
            mesh: Vec::new(),
            cycle: 0,
        };
        d.rebuild_mesh();
        d.init_wires();
        Ok(d)
    }

    fn rebuild_mesh(&mut self) {
        let mut mesh = vec![Router::default(); N_ROUTERS];
        mesh[SOURCE].source = mcast_flits(&self.payloads);
        mesh[SOURCE].release = 1;
        for k in 0..UNICAST_COUNT {
            let r = &mut mesh[UNICAST_FROM[k]];
            r.source = unicast_flits(UNICAST_TO[k], self.payloads[MCAST_PACKETS * PAYLOADS_PER_PACKET + k]);
            r.release = self.unicast_cycles[k];
        }
        self.mesh = mesh;
    }

    fn init_wires(&mut self) {
        self.t.put(self.e_rdy, 1);
        self.t.put(self.s_rdy, 1);
    }

    fn absorb_unit(t: &SignalTable, regs: &UnitRegs, unit: &mut InputUnit) {
        unit.wr = t.val(regs.wr) as u8;
        unit.rd = t.val(regs.rd) as u8;
        unit.lock = t.val(regs.lock) != 0;
        unit.mask = t.val(regs.mask) as u8;
        unit.pend = t.val(regs.pend) as u8;
        unit.expect = t.val(regs.vc) != 0;
        unit.inpkt = t.val(regs.inpkt) != 0;
    }

    fn writeback_unit(t: &mut SignalTable, regs: &UnitRegs, unit: &InputUnit) {
        t.set(regs.wr, u128::from(unit.wr));
        t.set(regs.rd, u128::from(unit.rd));
        t.set(regs.lock, u128::from(unit.lock));
        t.set(regs.mask, u128::from(unit.mask));
        t.set(regs.pend, u128::from(unit.pend));
        t.set(regs.vc, u128::from(unit.expect));
        t.set(regs.inpkt, u128::from(unit.inpkt));
    }

    /// Copies the observable Router 2 state out of the signal table, so
    /// injected register corruption feeds back into the model.
    fn absorb(&mut self) {
        let r2 = &mut self.mesh[SOURCE];
        Self::absorb_unit(&self.t, &self.inj, &mut r2.units[LOCAL]);
        Self::absorb_unit(&self.t, &self.e_unit, &mut r2.units[EAST]);
        Self::absorb_unit(&self.t, &self.s_unit, &mut r2.units[SOUTH]);
        r2.sent = self.t.val(self.inj_sent) as u8;
        r2.outs[EAST].busy = self.t.val(self.eo_busy) != 0;
        r2.outs[EAST].src = self.t.val(self.eo_src) as u8;
        r2.outs[SOUTH].busy = self.t.val(self.so_busy) != 0;
        r2.outs[SOUTH].src = self.t.val(self.so_src) as u8;
    }

    fn writeback(&mut self) {
        let r2 = &self.mesh[SOURCE];
        Self::writeback_unit(&mut self.t, &self.inj, &r2.units[LOCAL]);
        Self::writeback_unit(&mut self.t, &self.e_unit, &r2.units[EAST]);
        Self::writeback_unit(&mut self.t, &self.s_unit, &r2.units[SOUTH]);
        self.t.set(self.inj_sent, u128::from(r2.sent));
        self.t.set(self.eo_busy, u128::from(r2.outs[EAST].busy));
        self.t.set(self.eo_src, u128::from(r2.outs[EAST].src));
        self.t.set(self.so_busy, u128::from(r2.outs[SOUTH].busy));
        self.t.set(self.so_src, u128::from(r2.outs[SOUTH].src));
    }

    /// Reads a neighbor-facing port's effective input lines as a flit.
    fn effective_flit(&self, port: &PortIn) -> Option<(Flit, bool)> {
        if self.t.in_val(port.valid) == 0 {
            return None;
        }
        let mut flit = Flit::from_line(self.t.in_val(port.data));
        flit.vch = self.t.in_val(port.vch) != 0;
        Some((flit, self.t.in_val(port.lck) != 0))
    }

    fn drive_port_in(&mut self, port: usize, pres: Option<Flit>) {
        let p = match port {
            EAST => &self.e_in,
            _ => &self.s_in,
        };
        let (valid, vch, lck, data) = (p.valid, p.vch, p.lck, p.data);
        match pres {
            Some(f) => {
                self.t.drive(valid, 1);
                self.t.drive(vch, u128::from(f.vch));
                self.t.drive(lck, 1);
                self.t.drive(data, f.line());
            }
            None => {
                self.t.drive(valid, 0);
                self.t.drive(vch, 0);
                self.t.drive(lck, 0);
                self.t.drive(data, 0);
            }
        }
    }
}

impl Design for NocScenario {
    fn signals(&self) -> &[SignalRef] {
        self.t.refs()
    }

    fn reset(&mut self) {
        self.t.reset();
        self.rebuild_mesh();
        self.cycle = 0;
        self.init_wires();
    }

    fn step(&mut self) {
        self.cycle += 1;
        self.absorb();

        // Pre-edge buffer occupancy of every unit.
        let rooms: Vec<[bool; PORTS]> = self
            .mesh
            .iter()
            .map(|r| {
                let mut a = [false; PORTS];
                for (p, u) in r.units.iter().enumerate() {
                    a[p] = u.room();
                }
                a
            })
            .collect();

        // The neighbor-facing ready returns arrive before anything else.
        self.t.drive(self.e_out.rdy_in, u128::from(rooms[6][WEST]));
        self.t.drive(self.s_out.rdy_in, u128::from(rooms[3][NORTH]));

        // Arbitration and presentation, all from pre-edge state.
        let mut pres: Vec<[Option<Flit>; PORTS]> = vec![[None; PORTS]; N_ROUTERS];
        let mut attempts: Vec<Vec<Attempt>> = Vec::with_capacity(N_ROUTERS);
        for (r, router) in self.mesh.iter().enumerate() {
            let mut claims: [Option<usize>; PORTS] = [None; PORTS];
            for (p, out) in router.outs.iter().enumerate() {
                if out.busy {
                    claims[p] = Some(usize::from(out.src) % PORTS);
                }
            }
            let mut local = Vec::new();
            for (u, unit) in router.units.iter().enumerate() {
                if unit.fill() == 0 {
                    continue;
                }
                let flit = unit.front();
                let (sub, portset) = if flit.kind == HEAD && !unit.lock {
                    route(r, flit.data)
                } else {
                    ([flit.data; PORTS], unit.mask)
                };
                let pending = if unit.pend != 0 { unit.pend } else { portset };
                let mut tried = 0u8;
                let mut void = 0u8;
                for p in 0..PORTS {
                    if pending & (1 << p) == 0 {
                        continue;
                    }
                    if p == LOCAL {
                        if claims[LOCAL].is_none() || claims[LOCAL] == Some(u) {
                            claims[LOCAL] = Some(u);
                            tried |= 1;
                        }
                        continue;
                    }
                    let Some(nr) = neighbor(r, p) else {
                        // A corrupted mask pointing off the mesh edge
                        // delivers into the void.
                        void |= 1 << p;
                        continue;
                    };
                    if claims[p].is_some() && claims[p] != Some(u) {
                        continue;
                    }
                    claims[p] = Some(u);
                    let rdy = if r == SOURCE && p == EAST {
                        self.t.in_val(self.e_out.rdy_in) != 0
                    } else if r == SOURCE && p == SOUTH {
                        self.t.in_val(self.s_out.rdy_in) != 0
                    } else {
                        rooms[nr][opposite(p)]
                    };
                    if rdy {
                        let mut out = flit;
                        if flit.kind == HEAD {
                            out.data = sub[p];
                        }
                        pres[r][p] = Some(out);
                        tried |= 1 << p;
                    }
                }
                local.push(Attempt {
                    unit: u,
                    flit,
                    portset,
                    pending,
                    tried,
                    void,
                });
            }
            attempts.push(local);
        }

        // What Router 2 sees on its neighbor-facing inputs.
        self.drive_port_in(EAST, pres[6][WEST]);
        self.drive_port_in(SOUTH, pres[3][NORTH]);

        // Acceptance decisions, still from pre-edge receiver state.
        let mut real_ack = [[false; PORTS]; N_ROUTERS];
        let mut stores: Vec<(usize, usize, Flit)> = Vec::new();
        for r in 0..N_ROUTERS {
            for p in 1..PORTS {
                let Some(flit) = pres[r][p] else { continue };
                let nr = neighbor(r, p).expect("presented ports have neighbors");
                let nu = opposite(p);
                if nr == SOURCE && (nu == EAST || nu == SOUTH) {
                    continue; // judged through the forceable lines below
                }
                let (ack, store) = decide(&self.mesh[nr].units[nu], flit, true);
                real_ack[r][p] = ack;
                if store {
                    stores.push((nr, nu, flit));
                }
            }
        }
        let judge_r2 = |port_in: &PortIn, unit: &InputUnit, sender: (usize, usize)| {
            let mut ack = false;
            let mut stored: Option<Flit> = None;
            if let Some((flit, lck)) = self.effective_flit(port_in) {
                let (a, store) = decide(unit, flit, lck);
                ack = a;
                if store {
                    stored = Some(flit);
                }
            }
            (ack, stored, sender)
        };
        let (e_ack_val, e_store, _) = judge_r2(&self.e_in, &self.mesh[SOURCE].units[EAST], (6, WEST));
        let (s_ack_val, s_store, _) = judge_r2(&self.s_in, &self.mesh[SOURCE].units[SOUTH], (3, NORTH));
        real_ack[6][WEST] = e_ack_val && pres[6][WEST].is_some();
        real_ack[3][NORTH] = s_ack_val && pres[3][NORTH].is_some();
        if let Some(f) = e_store {
            stores.push((SOURCE, EAST, f));
        }
        if let Some(f) = s_store {
            stores.push((SOURCE, SOUTH, f));
        }

        // The acknowledge returns Router 2 samples for its own links.
        self.t
            .drive(self.e_out.ack_in, u128::from(real_ack[SOURCE][EAST]));
        self.t
            .drive(self.s_out.ack_in, u128::from(real_ack[SOURCE][SOUTH]));
        let eff_ack_east = self.t.in_val(self.e_out.ack_in) != 0;
        let eff_ack_south = self.t.in_val(self.s_out.ack_in) != 0;

        // Commit transmissions: release grants, advance FIFOs, eject.
        for (r, local) in attempts.iter().enumerate() {
            for a in local {
                let mut acked = a.void;
                if a.tried & 1 != 0 {
                    acked |= 1;
                    if a.flit.kind != HEAD {
                        self.mesh[r].sink.push(a.flit.data);
                    }
                }
                for (p, &ack) in real_ack[r].iter().enumerate().skip(1) {
                    if a.tried & (1 << p) == 0 {
                        continue;
                    }
                    let ok = if r == SOURCE && p == EAST {
                        eff_ack_east
                    } else if r == SOURCE && p == SOUTH {
                        eff_ack_south
                    } else {
                        ack
                    };
                    if ok {
                        acked |= 1 << p;
                    }
                }
                let router = &mut self.mesh[r];
                for p in 0..PORTS {
                    if acked & !a.void & (1 << p) == 0 {
                        continue;
                    }
                    if a.flit.kind == HEAD {
                        router.outs[p].busy = true;
                        router.outs[p].src = a.unit as u8;
                    } else if a.flit.kind == TAIL {
                        router.outs[p].busy = false;
                    }
                }
                let unit = &mut router.units[a.unit];
                let left = a.pending & !acked;
                if left == 0 {
                    unit.pop();
                    match a.flit.kind {
                        HEAD => {
                            unit.lock = true;
                            unit.mask = a.portset;
                        }
                        TAIL => {
                            unit.lock = false;
                            unit.mask = 0;
                        }
                        _ => {}
                    }
                    unit.pend = 0;
                    if a.flit.kind == TAIL && a.unit == LOCAL {
                        router.sent = router.sent.wrapping_add(1) & 0xf;
                    }
                } else {
                    unit.pend = left;
                }
            }
        }

        // Store accepted flits.
        let mut e_arrived: Option<bool> = None;
        for (r, u, flit) in stores {
            self.mesh[r].units[u].push(flit);
            if r == SOURCE && u == EAST {
                e_arrived = Some(flit.vch);
            }
        }

        // Local cores feed their injection FIFOs.
        let mut inj_arrived: Option<bool> = None;
        for (r, router) in self.mesh.iter_mut().enumerate() {
            if router.src_pos < router.source.len()
                && self.cycle >= router.release
                && rooms[r][LOCAL]
            {
                let flit = router.source[router.src_pos];
                router.units[LOCAL].push(flit);
                router.src_pos += 1;
                if r == SOURCE {
                    inj_arrived = Some(flit.vch);
                }
            }
        }

        self.writeback();
        self.t.commit();

        let east_pres = pres[SOURCE][EAST];
        let south_pres = pres[SOURCE][SOUTH];
        let put_port = |t: &mut SignalTable, out: &PortOut, pres: Option<Flit>| {
            t.put(out.valid, u128::from(pres.is_some()));
            t.put(out.vch, u128::from(pres.is_some_and(|f| f.vch)));
            t.put(out.lck, u128::from(pres.is_some()));
            t.put(out.data, pres.map_or(0, Flit::line));
        };
        put_port(&mut self.t, &self.e_out, east_pres);
        put_port(&mut self.t, &self.s_out, south_pres);
        self.t.put(self.e_ack, u128::from(e_ack_val));
        self.t.put(self.s_ack, u128::from(s_ack_val));
        let r2 = &self.mesh[SOURCE];
        self.t.put(self.e_rdy, u128::from(r2.units[EAST].room()));
        self.t.put(self.s_rdy, u128::from(r2.units[SOUTH].room()));
        self.t.put(
            self.inj_busy,
            u128::from(r2.src_pos < r2.source.len() || r2.units[LOCAL].fill() > 0),
        );
        for vc in 0..2 {
            self.t
                .put(self.inj_arr[vc], u128::from(inj_arrived == Some(vc == 1)));
            self.t
                .put(self.e_arr[vc], u128::from(e_arrived == Some(vc == 1)));
            let sent = east_pres.is_some_and(|f| f.vch == (vc == 1)) && eff_ack_east;
            self.t.put(self.e_send[vc], u128::from(sent));
        }
    }

    fn done(&self) -> bool {
        self.mesh.iter().all(Router::quiescent)
    }

    fn read(&self, idx: usize) -> BitVec {
        self.t.read(idx)
    }

    fn flip_register_bit(&mut self, idx: usize, bit: u16) -> Result<()> {
        self.t.flip_register_bit(idx, bit)
    }

    fn force_input(&mut self, idx: usize, value: Option<BitVec>) -> Result<()> {
        self.t.force_input(idx, value)
    }

    fn output_record(&self) -> OutputRecord {
        let units = SINKS
            .iter()
            .map(|&s| {
                let mut v = self.mesh[s].sink.clone();
                v.sort_unstable();
                v.iter().flat_map(|p| p.to_be_bytes()).collect()
            })
            .collect();
        OutputRecord { units }
    }

    fn fault_inputs(&self) -> Vec<usize> {
        let wanted = [
            "e_in/valid",
            "e_in/vch",
            "e_in/lck",
            "e_in/data",
            "e_out/ack_in",
            "e_out/rdy_in",
            "s_in/valid",
            "s_in/vch",
            "s_in/lck",
            "s_in/data",
            "s_out/ack_in",
            "s_out/rdy_in",
        ];
        wanted
            .iter()
            .map(|p| {
                self.t
                    .refs()
                    .iter()
                    .position(|s| s.path == *p)
                    .expect("port inputs are declared")
            })
            .collect()
    }
}

pub fn presets() -> Vec<SelectorPreset> {
    vec![SelectorPreset::new("l3-all", Level::Registers, BitType::All)]
}

pub fn used_msb() -> UsedMsbMap {
    [
        ("inj/wr", 2),
        ("inj/rd", 2),
        ("inj/lock", 0),
        ("inj/mask", 4),
        ("inj/pend", 4),
        ("inj/vc", 0),
        ("inj/inpkt", 0),
        ("inj/sent", 3),
        ("e_in/wr", 2),
        ("e_in/rd", 2),
        ("e_in/lock", 0),
        ("e_in/mask", 4),
        ("e_in/pend", 4),
        ("e_in/vc", 0),
        ("e_in/inpkt", 0),
        ("s_in/wr", 2),
        ("s_in/rd", 2),
        ("s_in/lock", 0),
        ("s_in/mask", 4),
        ("s_in/pend", 4),
        ("s_in/vc", 0),
        ("s_in/inpkt", 0),
        ("e_out/busy", 0),
        ("e_out/src", 2),
        ("s_out/busy", 0),
        ("s_out/src", 2),
    ]
    .into_iter()
    .map(|(p, b)| (p.to_string(), b))
    .collect()
}

/// Monitor nets for Router 2's control contract. None declares an
/// expected final transition: the scenario's natural end state is
/// quiescence, which the nets cannot distinguish from stalls, so only
/// in-run violations count.
pub const NETS: &str = "\
# router monitor nets

net noc-inj-envelope
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
event transition=t.on signal=inj/busy type=2 target=0x1
event transition=t.off signal=inj/busy type=2 target=0x0

net noc-inj-packets
place p0
place p1
place p2
place p3
transition t.c1
transition t.c4
transition t.c7
edge p0 -> t.c1
edge t.c1 -> p1
edge p1 -> t.c4
edge t.c4 -> p2
edge p2 -> t.c7
edge t.c7 -> p3
init p0 1
event transition=t.c1 signal=inj/sent type=2 target=0x1
event transition=t.c4 signal=inj/sent type=2 target=0x4
event transition=t.c7 signal=inj/sent type=2 target=0x7

net noc-e-stream
place p0
place p1
place p2
place p3
transition t.valid
transition t.lck
transition t.busy
edge p0 -> t.valid
edge t.valid -> p1
edge p1 -> t.lck
edge t.lck -> p2
edge p2 -> t.busy
edge t.busy -> p3
init p0 1
event transition=t.valid signal=e_out/valid type=4 target=0x1 index=1
event transition=t.lck signal=e_out/lck type=4 target=0x1 index=1
event transition=t.busy signal=e_out/busy type=4 target=0x1 index=1

net noc-e-phantom
place dead
place sink
transition t.any
edge dead -> t.any
edge t.any -> sink
event transition=t.any signal=e_in/valid type=2 target=0x1

net noc-s-phantom
place dead
place sink
transition t.any
edge dead -> t.any
edge t.any -> sink
event transition=t.any signal=s_in/valid type=2 target=0x1

net noc-grant-engage
place a
place b
transition t.bon
transition t.lon
edge a -> t.bon
edge t.bon -> b
edge b -> t.lon
edge t.lon -> a
init a 1
event transition=t.bon signal=e_out/busy type=2 target=0x1
event transition=t.lon signal=inj/lock type=2 target=0x1

net noc-grant-release
place a
place b
transition t.loff
transition t.boff
edge a -> t.loff
edge t.loff -> b
edge b -> t.boff
edge t.boff -> a
init a 1
event transition=t.loff signal=inj/lock type=2 target=0x0
event transition=t.boff signal=e_out/busy type=2 target=0x0

net noc-inj-fifo
place p0
place p1
place p2
transition t.wr
transition t.rd
edge p0 -> t.wr
edge t.wr -> p1
edge p1 -> t.rd
edge t.rd -> p2
init p0 1
event transition=t.wr signal=inj/wr type=3 index=1
event transition=t.rd signal=inj/rd type=3 index=1

net noc-flow-vc0
place a
place b
transition t.arr
transition t.snd
edge a -> t.arr
edge t.arr -> b
edge b -> t.snd
edge t.snd -> a
init a 1
event transition=t.arr signal=inj_in/vc0_arr type=2 target=0x1
event transition=t.snd signal=e_out/vc0_send type=2 target=0x1

net noc-flow-vc1
place a
place b
transition t.arr
transition t.snd
edge a -> t.arr
edge t.arr -> b
edge b -> t.snd
edge t.snd -> a
init a 1
event transition=t.arr signal=inj_in/vc1_arr type=2 target=0x1
event transition=t.snd signal=e_out/vc1_send type=2 target=0x1

net noc-e-phantom-vc0
place dead
place sink
transition t.arr
edge dead -> t.arr
edge t.arr -> sink
event transition=t.arr signal=e_in/vc0_arr type=2 target=0x1

net noc-e-phantom-vc1
place dead
place sink
transition t.arr
edge dead -> t.arr
edge t.arr -> sink
event transition=t.arr signal=e_in/vc1_arr type=2 target=0x1

net noc-s-return-guard
place dead
place sink
transition t.ack
edge dead -> t.ack
edge t.ack -> sink
event transition=t.ack signal=s_out/ack_in type=2 target=0x1

net noc-e-retry-guard
place dead
place sink
transition t.congest
edge dead -> t.congest
edge t.congest -> sink
event transition=t.congest signal=e_out/rdy_in type=2 target=0x0
";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{DesignId, MonitorBundle, Stimulus};
    use crate::petri::PnMonitor;
    use crate::seqcheck::SeqMonitor;
    use crate::sim::{run, run_golden, CycleHook, RunOptions};

    fn stim() -> (Vec<u16>, Vec<u64>) {
        match DesignId::Noc.default_stimulus(5) {
            Stimulus::Noc {
                payloads,
                unicast_cycles,
            } => (payloads, unicast_cycles),
            _ => unreachable!(),
        }
    }

    #[test]
    fn oracle_shape_matches_the_scenario() {
        let payloads: Vec<u16> = (0..PAYLOAD_COUNT as u16).collect();
        let out = oracle(&payloads);
        assert_eq!(out.units.len(), SINKS.len());
        // Pure multicast sinks carry 64 payloads, unicast targets 65.
        assert_eq!(out.units[0].len(), 64 * 2);
        assert_eq!(out.units[1].len(), 65 * 2);
        assert_eq!(out.units[2].len(), 64 * 2);
        assert_eq!(out.units[3].len(), 65 * 2);
        assert!(out.units[1].chunks(2).any(|c| c == [0, 64]));
    }

    #[test]
    fn routing_is_column_first() {
        let (sub, ports) = route(2, mcast_mask());
        // Every destination lies east of Router 2.
        assert_eq!(ports, 1 << EAST);
        assert_eq!(sub[EAST], mcast_mask());
        let (sub, ports) = route(6, mcast_mask());
        assert_eq!(ports, (1 << LOCAL) | (1 << EAST) | (1 << SOUTH));
        assert_eq!(sub[LOCAL], 1 << 6);
        assert_eq!(sub[SOUTH], 1 << 7);
        assert_eq!(sub[EAST], (1 << 10) | (1 << 11) | (1 << 14) | (1 << 15));
    }

    #[test]
    fn scenario_validates_its_shape() {
        assert!(NocScenario::new(vec![0; PAYLOAD_COUNT - 1], vec![1, 2, 3]).is_err());
        assert!(NocScenario::new(vec![0; PAYLOAD_COUNT], vec![1, 2]).is_err());
        assert!(NocScenario::new(vec![0; PAYLOAD_COUNT], vec![1, 2, 3]).is_ok());
    }

    #[test]
    fn golden_run_delivers_every_payload() {
        let (payloads, cycles) = stim();
        let mut design = NocScenario::new(payloads.clone(), cycles).unwrap();
        let watched: Vec<_> = design.signals().to_vec();
        let reference = oracle(&payloads);
        let golden = run_golden(&mut design, &watched, 2_000, &reference).unwrap();
        // The last unicast leaves at cycle 288, crosses one hop, and the
        // fabric drains two cycles later.
        assert_eq!(golden.cycles, 291);
    }

    #[test]
    fn golden_run_is_silent_for_every_bundled_monitor() {
        let (payloads, cycles) = stim();
        let mut design = NocScenario::new(payloads.clone(), cycles.clone()).unwrap();
        let watched: Vec<_> = design.signals().to_vec();
        let trace = run(&mut design, &watched, RunOptions::recorded(2_000), &mut []).unwrap();
        assert!(trace.terminal_cycle.is_some());

        let bundle = MonitorBundle::build(DesignId::Noc, &watched, &trace, None).unwrap();
        assert_eq!(bundle.nets.len(), 14);
        assert_eq!(bundle.tables.len(), 1);
        assert!(!bundle.check_end);

        let mut pn: Vec<PnMonitor<'_>> = bundle
            .nets
            .iter()
            .map(|n| PnMonitor::attach(n, &watched).unwrap())
            .collect();
        let mut seq: Vec<SeqMonitor<'_>> = bundle
            .tables
            .iter()
            .map(|t| SeqMonitor::attach(t, &watched, bundle.check_end).unwrap())
            .collect();
        {
            let mut hooks: Vec<&mut dyn CycleHook> = Vec::new();
            for m in &mut pn {
                hooks.push(m);
            }
            for m in &mut seq {
                hooks.push(m);
            }
            let mut design = NocScenario::new(payloads, cycles).unwrap();
            run(&mut design, &watched, RunOptions::silent(2_000), &mut hooks).unwrap();
        }
        for (m, net) in pn.iter().zip(&bundle.nets) {
            let v = m.finalize();
            assert!(!v.detected, "net {} flagged the golden run", net.net.name());
        }
        for (m, table) in seq.iter().zip(&bundle.tables) {
            let v = m.finalize();
            assert!(!v.detected, "table {} flagged the golden run", table.name);
        }
    }
}

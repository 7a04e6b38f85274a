//! Petri-net control-flow monitors.
//!
//! A [`PetriNet`] is an ordinary place/transition net: transitions are
//! enabled when every input place holds at least one token, and firing moves
//! one token along every arc. Monitoring binds signal-change *events* to
//! transitions: whenever a bound event occurs in the observed design, the
//! monitor fires the transition. An event whose transition is not enabled is
//! a control-flow violation and latches a fault. After the run, the last
//! fired transition can additionally be checked against an expected final
//! transition, which catches runs that died silently.
//!
//! Nets can be built in code or loaded from a plain-text definition file
//! (see [`parse_net_file`] for the grammar).

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::signal::{BitVec, SignalRef};
use crate::sim::{CycleHook, Snapshot};

/// Token counts per place, aligned with the owning net's place order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Marking(Vec<u32>);

impl Marking {
    /// Marking with the given token counts.
    pub fn new(tokens: Vec<u32>) -> Self {
        Marking(tokens)
    }

    /// Tokens currently in place `place`.
    pub fn tokens(&self, place: usize) -> u32 {
        self.0[place]
    }

    /// Token counts in place order.
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    /// Total number of tokens.
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&t| t as u64).sum()
    }
}

/// Direction of one arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArcDir {
    /// Place -> transition (consumes).
    In,
    /// Transition -> place (produces).
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Arc {
    place: usize,
    transition: usize,
    dir: ArcDir,
}

/// Raw, unvalidated net description, as produced by the parser or built by
/// hand before calling [`PetriNet::build`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NetSpec {
    /// Net name (token: letters, digits, `_`, `-`, `.`).
    pub name: String,
    /// Place names in declaration order.
    pub places: Vec<String>,
    /// Transition names in declaration order.
    pub transitions: Vec<String>,
    /// Arcs as `(from, to)` name pairs; each must connect a place and a
    /// transition (either direction).
    pub edges: Vec<(String, String)>,
    /// Nonzero initial token counts.
    pub initial: Vec<(String, u32)>,
    /// Expected final transition, if the net checks one.
    pub expected_final: Option<String>,
}

/// Validated place/transition net with an initial marking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PetriNet {
    name: String,
    places: Vec<String>,
    transitions: Vec<String>,
    arcs: Vec<Arc>,
    /// Per transition: input place indices (declaration order).
    inputs: Vec<Vec<usize>>,
    /// Per transition: output place indices (declaration order).
    outputs: Vec<Vec<usize>>,
    initial: Marking,
    expected_final: Option<usize>,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl PetriNet {
    /// Validates a [`NetSpec`] into a usable net.
    ///
    /// Rules: names are unique tokens (shared namespace for places and
    /// transitions, so arcs can be resolved by name); every arc connects a
    /// place and a transition; no duplicate arcs; every transition has at
    /// least one input and one output place.
    pub fn build(spec: NetSpec) -> Result<Self> {
        let fail = |msg: String| Err(Error::Config(format!("net {}: {msg}", spec.name)));
        if !valid_token(&spec.name) {
            return Err(Error::Config(format!("invalid net name {:?}", spec.name)));
        }
        if spec.places.is_empty() || spec.transitions.is_empty() {
            return fail("a net needs at least one place and one transition".into());
        }

        let mut names: HashMap<&str, (bool, usize)> = HashMap::new();
        for (i, p) in spec.places.iter().enumerate() {
            if !valid_token(p) {
                return fail(format!("invalid place name {p:?}"));
            }
            if names.insert(p, (true, i)).is_some() {
                return fail(format!("duplicate node name {p}"));
            }
        }
        for (i, t) in spec.transitions.iter().enumerate() {
            if !valid_token(t) {
                return fail(format!("invalid transition name {t:?}"));
            }
            if names.insert(t, (false, i)).is_some() {
                return fail(format!("duplicate node name {t}"));
            }
        }

        let mut arcs = Vec::with_capacity(spec.edges.len());
        for (from, to) in &spec.edges {
            let &(from_is_place, fi) = names
                .get(from.as_str())
                .ok_or_else(|| Error::Config(format!("net {}: unknown node {from}", spec.name)))?;
            let &(to_is_place, ti) = names
                .get(to.as_str())
                .ok_or_else(|| Error::Config(format!("net {}: unknown node {to}", spec.name)))?;
            let arc = match (from_is_place, to_is_place) {
                (true, false) => Arc {
                    place: fi,
                    transition: ti,
                    dir: ArcDir::In,
                },
                (false, true) => Arc {
                    place: ti,
                    transition: fi,
                    dir: ArcDir::Out,
                },
                _ => return fail(format!("edge {from} -> {to} does not connect a place and a transition")),
            };
            if arcs.contains(&arc) {
                return fail(format!("duplicate edge {from} -> {to}"));
            }
            arcs.push(arc);
        }

        let mut inputs = vec![Vec::new(); spec.transitions.len()];
        let mut outputs = vec![Vec::new(); spec.transitions.len()];
        for arc in &arcs {
            match arc.dir {
                ArcDir::In => inputs[arc.transition].push(arc.place),
                ArcDir::Out => outputs[arc.transition].push(arc.place),
            }
        }
        for (t, name) in spec.transitions.iter().enumerate() {
            if inputs[t].is_empty() {
                return fail(format!("transition {name} has no input place"));
            }
            if outputs[t].is_empty() {
                return fail(format!("transition {name} has no output place"));
            }
        }

        let mut tokens = vec![0u32; spec.places.len()];
        for (place, count) in &spec.initial {
            match names.get(place.as_str()) {
                Some(&(true, i)) => tokens[i] = *count,
                _ => return fail(format!("initial marking names unknown place {place}")),
            }
        }

        let expected_final = match &spec.expected_final {
            None => None,
            Some(t) => match names.get(t.as_str()) {
                Some(&(false, i)) => Some(i),
                _ => return fail(format!("expected final transition {t} does not exist")),
            },
        };

        Ok(PetriNet {
            name: spec.name,
            places: spec.places,
            transitions: spec.transitions,
            arcs,
            inputs,
            outputs,
            initial: Marking(tokens),
            expected_final,
        })
    }

    /// Net name.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of places.
    pub fn place_count(&self) -> usize {
        self.places.len()
    }

    /// Number of transitions.
    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    /// Place names in declaration order.
    pub fn places(&self) -> &[String] {
        &self.places
    }

    /// Transition names in declaration order.
    pub fn transitions(&self) -> &[String] {
        &self.transitions
    }

    /// Index of the named transition.
    pub fn transition_index(&self, name: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t == name)
    }

    /// Initial marking.
    pub fn initial(&self) -> &Marking {
        &self.initial
    }

    /// Expected final transition index, if checked.
    pub fn expected_final(&self) -> Option<usize> {
        self.expected_final
    }

    /// Input places of transition `t`.
    pub fn transition_inputs(&self, t: usize) -> &[usize] {
        &self.inputs[t]
    }

    /// Output places of transition `t`.
    pub fn transition_outputs(&self, t: usize) -> &[usize] {
        &self.outputs[t]
    }

    /// True if every input place of `t` holds at least one token.
    pub fn is_enabled(&self, m: &Marking, t: usize) -> bool {
        self.inputs[t].iter().all(|&p| m.0[p] >= 1)
    }

    /// Fires `t`: consumes one token per input place, produces one per
    /// output place. The argument marking is left untouched; firing a
    /// disabled transition is a contract violation.
    pub fn fire(&self, m: &Marking, t: usize) -> Result<Marking> {
        if !self.is_enabled(m, t) {
            return Err(Error::Defect(format!(
                "net {}: transition {} fired while disabled",
                self.name, self.transitions[t]
            )));
        }
        let mut next = m.clone();
        for &p in &self.inputs[t] {
            next.0[p] -= 1;
        }
        for &p in &self.outputs[t] {
            next.0[p] += 1;
        }
        Ok(next)
    }

    /// Reconstructs the raw spec (used by the serializer).
    pub fn to_spec(&self) -> NetSpec {
        NetSpec {
            name: self.name.clone(),
            places: self.places.clone(),
            transitions: self.transitions.clone(),
            edges: self
                .arcs
                .iter()
                .map(|a| match a.dir {
                    ArcDir::In => (
                        self.places[a.place].clone(),
                        self.transitions[a.transition].clone(),
                    ),
                    ArcDir::Out => (
                        self.transitions[a.transition].clone(),
                        self.places[a.place].clone(),
                    ),
                })
                .collect(),
            initial: self
                .places
                .iter()
                .zip(self.initial.0.iter())
                .filter(|(_, &t)| t > 0)
                .map(|(p, &t)| (p.clone(), t))
                .collect(),
            expected_final: self.expected_final.map(|t| self.transitions[t].clone()),
        }
    }

    /// Enumerates markings reachable from the initial marking by firing any
    /// enabled transition, breadth-first, up to `max_states` distinct
    /// markings. Errors if the bound is exceeded (possibly unbounded net).
    pub fn reachable_markings(&self, max_states: usize) -> Result<Vec<Marking>> {
        let mut seen = std::collections::HashSet::new();
        let mut queue = std::collections::VecDeque::new();
        let mut out = Vec::new();
        seen.insert(self.initial.clone());
        queue.push_back(self.initial.clone());
        while let Some(m) = queue.pop_front() {
            out.push(m.clone());
            for t in 0..self.transitions.len() {
                if self.is_enabled(&m, t) {
                    let next = self.fire(&m, t)?;
                    if seen.insert(next.clone()) {
                        if seen.len() > max_states {
                            return Err(Error::Config(format!(
                                "net {}: more than {max_states} reachable markings",
                                self.name
                            )));
                        }
                        queue.push_back(next);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// What constitutes an occurrence of a bound event, evaluated on the change
/// between the previous and current cycle value of the bound signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// Occurs on any value change.
    AnyChange,
    /// Occurs on a change to exactly this value.
    ChangeTo(BitVec),
    /// Occurs on the i-th change since reset (and only that one).
    NthChange(u32),
    /// Occurs on the i-th change to this value since reset.
    NthChangeTo(BitVec, u32),
}

impl EventKind {
    /// Numeric event type used by the file format and the area model.
    pub fn type_num(&self) -> u8 {
        match self {
            EventKind::AnyChange => 1,
            EventKind::ChangeTo(_) => 2,
            EventKind::NthChange(_) => 3,
            EventKind::NthChangeTo(..) => 4,
        }
    }

    fn target(&self) -> Option<BitVec> {
        match self {
            EventKind::ChangeTo(t) | EventKind::NthChangeTo(t, _) => Some(*t),
            _ => None,
        }
    }

    fn index(&self) -> Option<u32> {
        match self {
            EventKind::NthChange(i) | EventKind::NthChangeTo(_, i) => Some(*i),
            _ => None,
        }
    }
}

/// One event binding: when `kind` occurs on `signal`, fire `transition`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSpec {
    /// Observed signal.
    pub signal: SignalRef,
    /// Occurrence condition.
    pub kind: EventKind,
    /// Name of the transition to fire.
    pub transition: String,
}

/// A net together with its event bindings, ready to monitor a design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundNet {
    /// The validated net.
    pub net: PetriNet,
    /// Event bindings in declaration order (also evaluation order when
    /// several events occur in the same cycle).
    pub events: Vec<EventSpec>,
}

impl BoundNet {
    /// Validates event bindings against the net: the transition must exist,
    /// occurrence indices must be >= 1, and targets must fit the signal
    /// width. A net with no events cannot observe anything and is rejected.
    pub fn new(net: PetriNet, events: Vec<EventSpec>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::Config(format!(
                "net {}: no events bound to any transition",
                net.name()
            )));
        }
        for ev in &events {
            if net.transition_index(&ev.transition).is_none() {
                return Err(Error::Config(format!(
                    "net {}: event on {} names unknown transition {}",
                    net.name(),
                    ev.signal.path,
                    ev.transition
                )));
            }
            if let Some(t) = ev.kind.target() {
                if t.width() != ev.signal.width {
                    return Err(Error::Config(format!(
                        "net {}: event target width {} does not match signal {}",
                        net.name(),
                        t.width(),
                        ev.signal
                    )));
                }
            }
            if let Some(0) = ev.kind.index() {
                return Err(Error::Config(format!(
                    "net {}: occurrence index must be at least 1 on {}",
                    net.name(),
                    ev.signal.path
                )));
            }
        }
        Ok(BoundNet { net, events })
    }
}

/// Final verdict of one monitor after a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PnVerdict {
    /// Whether any violation was found, in-run or by the final check.
    pub detected: bool,
    /// Cycle of the first in-run violation, if any.
    pub detect_cycle: Option<u64>,
    /// True when the *only* evidence is the final-transition check.
    pub via_final: bool,
}

/// Online monitor state for one [`BoundNet`]. Implements [`CycleHook`], so
/// it can be attached to any kernel run; it never influences the design.
pub struct PnMonitor<'a> {
    bound: &'a BoundNet,
    /// Per event: watch-list slot of the bound signal.
    slots: Vec<usize>,
    /// Per event: index into `prev` (events on the same signal share one
    /// previous-value cell).
    prev_of: Vec<usize>,
    /// Per event: resolved transition index.
    trans_of: Vec<usize>,
    prev: Vec<BitVec>,
    counters: Vec<u32>,
    marking: Marking,
    last_fired: Option<usize>,
    fault_cycle: Option<u64>,
    primed: bool,
}

impl<'a> PnMonitor<'a> {
    /// Binds the monitor's signals to positions in `watched`, the signal
    /// list the run will be captured with.
    pub fn attach(bound: &'a BoundNet, watched: &[SignalRef]) -> Result<Self> {
        let mut slots = Vec::with_capacity(bound.events.len());
        let mut prev_of = Vec::with_capacity(bound.events.len());
        let mut trans_of = Vec::with_capacity(bound.events.len());
        let mut prev_slot_map: HashMap<usize, usize> = HashMap::new();
        for ev in &bound.events {
            let slot = watched
                .iter()
                .position(|s| s.path == ev.signal.path)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "net {}: signal {} is not in the watch list",
                        bound.net.name(),
                        ev.signal.path
                    ))
                })?;
            if watched[slot].width != ev.signal.width {
                return Err(Error::Config(format!(
                    "net {}: signal {} watched with width {}, bound with width {}",
                    bound.net.name(),
                    ev.signal.path,
                    watched[slot].width,
                    ev.signal.width
                )));
            }
            let n = prev_slot_map.len();
            let prev_idx = *prev_slot_map.entry(slot).or_insert(n);
            slots.push(slot);
            prev_of.push(prev_idx);
            trans_of.push(
                bound
                    .net
                    .transition_index(&ev.transition)
                    .expect("validated by BoundNet::new"),
            );
        }
        let distinct = prev_slot_map.len();
        Ok(PnMonitor {
            bound,
            slots,
            prev_of,
            trans_of,
            prev: vec![BitVec::zero(1); distinct],
            counters: vec![0; bound.events.len()],
            marking: bound.net.initial().clone(),
            last_fired: None,
            fault_cycle: None,
            primed: false,
        })
    }

    /// The monitored net.
    pub fn net(&self) -> &PetriNet {
        &self.bound.net
    }

    /// First in-run violation cycle, if any.
    pub fn fault_cycle(&self) -> Option<u64> {
        self.fault_cycle
    }

    /// Last transition fired, if any.
    pub fn last_fired(&self) -> Option<usize> {
        self.last_fired
    }

    /// Current marking (for inspection and tests).
    pub fn marking(&self) -> &Marking {
        &self.marking
    }

    /// Closes the run: applies the expected-final-transition check and
    /// reports the verdict. The final check only marks `via_final` when no
    /// in-run violation was already latched.
    pub fn finalize(&self) -> PnVerdict {
        let final_mismatch = match self.bound.net.expected_final() {
            Some(t) => self.last_fired != Some(t),
            None => false,
        };
        let via_final = self.fault_cycle.is_none() && final_mismatch;
        PnVerdict {
            detected: self.fault_cycle.is_some() || via_final,
            detect_cycle: self.fault_cycle,
            via_final,
        }
    }
}

impl CycleHook for PnMonitor<'_> {
    fn on_reset(&mut self, snap: &Snapshot<'_>) {
        // The reset-cycle value only primes change detection; it is not an
        // event even if it happens to equal an event target.
        for (ev_idx, &slot) in self.slots.iter().enumerate() {
            self.prev[self.prev_of[ev_idx]] = snap.value(slot);
        }
        self.counters.iter_mut().for_each(|c| *c = 0);
        self.marking = self.bound.net.initial().clone();
        self.last_fired = None;
        self.fault_cycle = None;
        self.primed = true;
    }

    fn on_cycle(&mut self, cycle: u64, snap: &Snapshot<'_>) {
        debug_assert!(self.primed, "on_cycle before on_reset");
        for (ev_idx, ev) in self.bound.events.iter().enumerate() {
            let cur = snap.value(self.slots[ev_idx]);
            let before = self.prev[self.prev_of[ev_idx]];
            let changed = cur != before;
            let occurred = match &ev.kind {
                EventKind::AnyChange => changed,
                EventKind::ChangeTo(target) => changed && cur == *target,
                EventKind::NthChange(i) => {
                    if changed {
                        self.counters[ev_idx] += 1;
                        self.counters[ev_idx] == *i
                    } else {
                        false
                    }
                }
                EventKind::NthChangeTo(target, i) => {
                    if changed && cur == *target {
                        self.counters[ev_idx] += 1;
                        self.counters[ev_idx] == *i
                    } else {
                        false
                    }
                }
            };
            if occurred {
                let t = self.trans_of[ev_idx];
                if self.bound.net.is_enabled(&self.marking, t) {
                    self.marking = self
                        .bound
                        .net
                        .fire(&self.marking, t)
                        .expect("enabled transition fires");
                    self.last_fired = Some(t);
                } else if self.fault_cycle.is_none() {
                    // Violation: latch the first one; the marking is left
                    // untouched and observation continues.
                    self.fault_cycle = Some(cycle);
                }
            }
        }
        // Previous values update once per cycle, after all events compared
        // against the same pre-cycle state.
        for (ev_idx, &slot) in self.slots.iter().enumerate() {
            self.prev[self.prev_of[ev_idx]] = snap.value(slot);
        }
    }
}

// ---------------------------------------------------------------------------
// Definition file format
// ---------------------------------------------------------------------------

/// Event binding as written in a definition file: the signal is referenced
/// by path only and resolved against a design at bind time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDef {
    /// Transition fired by the event.
    pub transition: String,
    /// Path of the observed signal.
    pub signal: String,
    /// Event type 1..=4.
    pub type_num: u8,
    /// Raw target value (types 2 and 4).
    pub target: Option<u128>,
    /// Occurrence index (types 3 and 4).
    pub index: Option<u32>,
}

/// One net block parsed from a definition file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedNet {
    /// Structural description.
    pub spec: NetSpec,
    /// Event bindings in file order.
    pub events: Vec<EventDef>,
}

/// Parses a net definition file.
///
/// Grammar (one directive per line, `#` starts a comment):
///
/// ```text
/// net <name>               start a net block
/// place <name>
/// transition <name>
/// edge <from> -> <to>
/// init <place> <count>
/// final <transition>
/// event transition=<t> signal=<path> type=<1..4> [target=0x<hex>] [index=<n>]
/// ```
pub fn parse_net_file(file: &str, text: &str) -> Result<Vec<ParsedNet>> {
    let mut nets: Vec<ParsedNet> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let directive = tokens.next().expect("nonempty line");
        let rest: Vec<&str> = tokens.collect();
        let fail = |msg: String| Err(Error::parse(file, lineno, msg));

        if directive == "net" {
            let [name] = rest.as_slice() else {
                return fail("expected: net <name>".into());
            };
            nets.push(ParsedNet {
                spec: NetSpec {
                    name: name.to_string(),
                    ..NetSpec::default()
                },
                events: Vec::new(),
            });
            continue;
        }

        let Some(current) = nets.last_mut() else {
            return fail(format!("directive {directive:?} before any net block"));
        };
        match directive {
            "place" => {
                let [name] = rest.as_slice() else {
                    return fail("expected: place <name>".into());
                };
                current.spec.places.push(name.to_string());
            }
            "transition" => {
                let [name] = rest.as_slice() else {
                    return fail("expected: transition <name>".into());
                };
                current.spec.transitions.push(name.to_string());
            }
            "edge" => {
                let [from, arrow, to] = rest.as_slice() else {
                    return fail("expected: edge <from> -> <to>".into());
                };
                if *arrow != "->" {
                    return fail(format!("expected -> between edge endpoints, got {arrow:?}"));
                }
                current.spec.edges.push((from.to_string(), to.to_string()));
            }
            "init" => {
                let [place, count] = rest.as_slice() else {
                    return fail("expected: init <place> <count>".into());
                };
                let count: u32 = count
                    .parse()
                    .map_err(|e| Error::parse(file, lineno, format!("bad token count: {e}")))?;
                current.spec.initial.push((place.to_string(), count));
            }
            "final" => {
                let [name] = rest.as_slice() else {
                    return fail("expected: final <transition>".into());
                };
                if current.spec.expected_final.is_some() {
                    return fail("final transition declared twice".into());
                }
                current.spec.expected_final = Some(name.to_string());
            }
            "event" => {
                let mut transition = None;
                let mut signal = None;
                let mut type_num = None;
                let mut target = None;
                let mut index = None;
                for kv in &rest {
                    let Some((key, value)) = kv.split_once('=') else {
                        return fail(format!("expected key=value, got {kv:?}"));
                    };
                    match key {
                        "transition" if transition.is_none() => {
                            transition = Some(value.to_string());
                        }
                        "signal" if signal.is_none() => signal = Some(value.to_string()),
                        "type" if type_num.is_none() => {
                            let t: u8 = value.parse().map_err(|e| {
                                Error::parse(file, lineno, format!("bad event type: {e}"))
                            })?;
                            if !(1..=4).contains(&t) {
                                return fail(format!("event type must be 1..4, got {t}"));
                            }
                            type_num = Some(t);
                        }
                        "target" if target.is_none() => {
                            let Some(hex) = value.strip_prefix("0x") else {
                                return fail(format!("target must be 0x-prefixed hex, got {value:?}"));
                            };
                            let v = u128::from_str_radix(hex, 16).map_err(|e| {
                                Error::parse(file, lineno, format!("bad target value: {e}"))
                            })?;
                            target = Some(v);
                        }
                        "index" if index.is_none() => {
                            let i: u32 = value.parse().map_err(|e| {
                                Error::parse(file, lineno, format!("bad occurrence index: {e}"))
                            })?;
                            index = Some(i);
                        }
                        "transition" | "signal" | "type" | "target" | "index" => {
                            return fail(format!("duplicate key {key}"));
                        }
                        _ => return fail(format!("unknown key {key}")),
                    }
                }
                let (Some(transition), Some(signal), Some(type_num)) =
                    (transition, signal, type_num)
                else {
                    return fail("event needs transition=, signal= and type=".into());
                };
                match type_num {
                    1 | 3 if target.is_some() => {
                        return fail(format!("event type {type_num} takes no target"));
                    }
                    2 | 4 if target.is_none() => {
                        return fail(format!("event type {type_num} requires target="));
                    }
                    _ => {}
                }
                match type_num {
                    1 | 2 if index.is_some() => {
                        return fail(format!("event type {type_num} takes no index"));
                    }
                    3 | 4 if index.is_none() => {
                        return fail(format!("event type {type_num} requires index="));
                    }
                    _ => {}
                }
                if index == Some(0) {
                    return fail("occurrence index must be at least 1".into());
                }
                current.events.push(EventDef {
                    transition,
                    signal,
                    type_num,
                    target,
                    index,
                });
            }
            other => return fail(format!("unknown directive {other:?}")),
        }
    }
    Ok(nets)
}

/// Serializes nets to the canonical definition-file form. Output parses back
/// to an identical structure.
pub fn write_net_file(nets: &[ParsedNet]) -> String {
    let mut out = String::new();
    for (i, pn) in nets.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "net {}", pn.spec.name);
        for p in &pn.spec.places {
            let _ = writeln!(out, "place {p}");
        }
        for t in &pn.spec.transitions {
            let _ = writeln!(out, "transition {t}");
        }
        for (from, to) in &pn.spec.edges {
            let _ = writeln!(out, "edge {from} -> {to}");
        }
        for (place, count) in &pn.spec.initial {
            let _ = writeln!(out, "init {place} {count}");
        }
        if let Some(t) = &pn.spec.expected_final {
            let _ = writeln!(out, "final {t}");
        }
        for ev in &pn.events {
            let _ = write!(
                out,
                "event transition={} signal={} type={}",
                ev.transition, ev.signal, ev.type_num
            );
            if let Some(t) = ev.target {
                let _ = write!(out, " target=0x{t:x}");
            }
            if let Some(i) = ev.index {
                let _ = write!(out, " index={i}");
            }
            out.push('\n');
        }
    }
    out
}

/// Resolves parsed event definitions against a design's signal table,
/// producing bindable [`EventSpec`]s.
pub fn bind_event_defs(defs: &[EventDef], signals: &[SignalRef]) -> Result<Vec<EventSpec>> {
    defs.iter()
        .map(|d| {
            let signal = signals
                .iter()
                .find(|s| s.path == d.signal)
                .ok_or_else(|| Error::Config(format!("event names unknown signal {}", d.signal)))?
                .clone();
            let target = d
                .target
                .map(|raw| {
                    if raw & !BitVec::mask(signal.width) != 0 {
                        return Err(Error::Config(format!(
                            "event target 0x{raw:x} does not fit signal {signal}"
                        )));
                    }
                    BitVec::new(signal.width, raw)
                })
                .transpose()?;
            let kind = match (d.type_num, target, d.index) {
                (1, None, None) => EventKind::AnyChange,
                (2, Some(t), None) => EventKind::ChangeTo(t),
                (3, None, Some(i)) => EventKind::NthChange(i),
                (4, Some(t), Some(i)) => EventKind::NthChangeTo(t, i),
                _ => {
                    return Err(Error::Config(format!(
                        "inconsistent event definition on {}",
                        d.signal
                    )))
                }
            };
            Ok(EventSpec {
                signal,
                kind,
                transition: d.transition.clone(),
            })
        })
        .collect()
}

/// Projects a [`BoundNet`] back into its file representation.
pub fn bound_net_to_parsed(bound: &BoundNet) -> ParsedNet {
    ParsedNet {
        spec: bound.net.to_spec(),
        events: bound
            .events
            .iter()
            .map(|ev| EventDef {
                transition: ev.transition.clone(),
                signal: ev.signal.path.clone(),
                type_num: ev.kind.type_num(),
                target: ev.kind.target().map(|t| t.value()),
                index: ev.kind.index(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{SignalClass, SignalKind};
    use proptest::prelude::*;

    /// Two places, one transition: token moves from `p.wait` to `p.done`.
    fn relay() -> PetriNet {
        PetriNet::build(NetSpec {
            name: "relay".into(),
            places: vec!["p.wait".into(), "p.done".into()],
            transitions: vec!["t.go".into()],
            edges: vec![
                ("p.wait".into(), "t.go".into()),
                ("t.go".into(), "p.done".into()),
            ],
            initial: vec![("p.wait".into(), 1)],
            expected_final: Some("t.go".into()),
        })
        .unwrap()
    }

    fn sig(path: &str, width: u16) -> SignalRef {
        SignalRef::new(path, width, SignalKind::Register, SignalClass::Control)
    }

    /// Drives a monitor with per-cycle values of a single set of signals.
    /// `series[0]` is the reset-cycle state; the rest are cycles 1, 2, ...
    fn drive<'a>(mon: &mut PnMonitor<'a>, refs: &[SignalRef], series: &[Vec<u128>]) {
        let to_values = |row: &Vec<u128>| -> Vec<BitVec> {
            row.iter()
                .zip(refs)
                .map(|(&v, r)| BitVec::new(r.width, v).unwrap())
                .collect()
        };
        let reset = to_values(&series[0]);
        mon.on_reset(&Snapshot::new(refs, &reset));
        for (i, row) in series[1..].iter().enumerate() {
            let values = to_values(row);
            mon.on_cycle(i as u64 + 1, &Snapshot::new(refs, &values));
        }
    }

    #[test]
    fn relay_semantics() {
        let net = relay();
        let m0 = net.initial().clone();
        assert_eq!(m0.as_slice(), &[1, 0]);
        assert!(net.is_enabled(&m0, 0));
        let m1 = net.fire(&m0, 0).unwrap();
        assert_eq!(m1.as_slice(), &[0, 1]);
        // Value semantics: the input marking is untouched.
        assert_eq!(m0.as_slice(), &[1, 0]);
        assert!(!net.is_enabled(&m1, 0));
        assert!(matches!(net.fire(&m1, 0), Err(Error::Defect(_))));
    }

    #[test]
    fn join_requires_all_inputs() {
        let net = PetriNet::build(NetSpec {
            name: "join".into(),
            places: vec!["a".into(), "b".into(), "c".into()],
            transitions: vec!["t".into()],
            edges: vec![
                ("a".into(), "t".into()),
                ("b".into(), "t".into()),
                ("t".into(), "c".into()),
            ],
            initial: vec![("a".into(), 1)],
            expected_final: None,
        })
        .unwrap();
        assert!(!net.is_enabled(net.initial(), 0));
        let m = Marking::new(vec![1, 1, 0]);
        assert!(net.is_enabled(&m, 0));
        assert_eq!(net.fire(&m, 0).unwrap().as_slice(), &[0, 0, 1]);
    }

    #[test]
    fn build_rejects_malformed_nets() {
        let base = || NetSpec {
            name: "n".into(),
            places: vec!["p".into(), "q".into()],
            transitions: vec!["t".into()],
            edges: vec![("p".into(), "t".into()), ("t".into(), "q".into())],
            initial: vec![],
            expected_final: None,
        };

        let mut place_place = base();
        place_place.edges.push(("p".into(), "q".into()));
        assert!(PetriNet::build(place_place).is_err());

        let mut unknown = base();
        unknown.edges.push(("zz".into(), "t".into()));
        assert!(PetriNet::build(unknown).is_err());

        let mut no_input = base();
        no_input.edges.remove(0);
        assert!(PetriNet::build(no_input).is_err());

        let mut no_output = base();
        no_output.edges.remove(1);
        assert!(PetriNet::build(no_output).is_err());

        let mut dup_edge = base();
        dup_edge.edges.push(("p".into(), "t".into()));
        assert!(PetriNet::build(dup_edge).is_err());

        let mut dup_name = base();
        dup_name.transitions.push("p".into());
        assert!(PetriNet::build(dup_name).is_err());

        let mut bad_final = base();
        bad_final.expected_final = Some("nope".into());
        assert!(PetriNet::build(bad_final).is_err());

        let mut bad_init = base();
        bad_init.initial.push(("t".into(), 1));
        assert!(PetriNet::build(bad_init).is_err());
    }

    #[test]
    fn monitor_fires_on_change_to_target() {
        let bound = BoundNet::new(
            relay(),
            vec![EventSpec {
                signal: sig("s", 4),
                kind: EventKind::ChangeTo(BitVec::new(4, 1).unwrap()),
                transition: "t.go".into(),
            }],
        )
        .unwrap();
        let refs = vec![sig("s", 4)];
        let mut mon = PnMonitor::attach(&bound, &refs).unwrap();
        drive(&mut mon, &refs, &[vec![0], vec![0], vec![1], vec![1]]);
        assert_eq!(mon.last_fired(), Some(0));
        assert_eq!(mon.fault_cycle(), None);
        let v = mon.finalize();
        assert!(!v.detected);
        assert!(!v.via_final);
    }

    #[test]
    fn reset_value_primes_without_event() {
        // Signal already holds the target at reset: a non-change must not
        // count as an occurrence, so the net never fires and the final
        // check reports the miss.
        let bound = BoundNet::new(
            relay(),
            vec![EventSpec {
                signal: sig("s", 4),
                kind: EventKind::ChangeTo(BitVec::new(4, 1).unwrap()),
                transition: "t.go".into(),
            }],
        )
        .unwrap();
        let refs = vec![sig("s", 4)];
        let mut mon = PnMonitor::attach(&bound, &refs).unwrap();
        drive(&mut mon, &refs, &[vec![1], vec![1], vec![1]]);
        assert_eq!(mon.last_fired(), None);
        let v = mon.finalize();
        assert!(v.detected);
        assert!(v.via_final);
        assert_eq!(v.detect_cycle, None);
    }

    #[test]
    fn second_occurrence_latches_fault_and_freezes_marking() {
        let bound = BoundNet::new(
            relay(),
            vec![EventSpec {
                signal: sig("s", 4),
                kind: EventKind::ChangeTo(BitVec::new(4, 1).unwrap()),
                transition: "t.go".into(),
            }],
        )
        .unwrap();
        let refs = vec![sig("s", 4)];
        let mut mon = PnMonitor::attach(&bound, &refs).unwrap();
        // Changes to 1 at cycles 1, 3 and 5; only the first finds t.go
        // enabled. The fault cycle stays at the second occurrence.
        drive(
            &mut mon,
            &refs,
            &[vec![0], vec![1], vec![0], vec![1], vec![0], vec![1]],
        );
        assert_eq!(mon.fault_cycle(), Some(3));
        assert_eq!(mon.marking().as_slice(), &[0, 1]);
        let v = mon.finalize();
        assert!(v.detected);
        assert!(!v.via_final, "in-run fault is not a final-check detection");
        assert_eq!(v.detect_cycle, Some(3));
    }

    #[test]
    fn nth_change_fires_exactly_once() {
        let bound = BoundNet::new(
            relay(),
            vec![EventSpec {
                signal: sig("s", 4),
                kind: EventKind::NthChange(2),
                transition: "t.go".into(),
            }],
        )
        .unwrap();
        let refs = vec![sig("s", 4)];
        let mut mon = PnMonitor::attach(&bound, &refs).unwrap();
        // Changes at cycles 1, 2, 4. Only the second is an occurrence; the
        // third change does not re-fire (counter passed the index).
        drive(
            &mut mon,
            &refs,
            &[vec![0], vec![1], vec![2], vec![2], vec![3]],
        );
        assert_eq!(mon.last_fired(), Some(0));
        assert_eq!(mon.fault_cycle(), None);
        assert!(!mon.finalize().detected);
    }

    #[test]
    fn nth_change_to_target_counts_only_target_changes() {
        let bound = BoundNet::new(
            relay(),
            vec![EventSpec {
                signal: sig("s", 1),
                kind: EventKind::NthChangeTo(BitVec::new(1, 1).unwrap(), 3),
                transition: "t.go".into(),
            }],
        )
        .unwrap();
        let refs = vec![sig("s", 1)];
        let mut mon = PnMonitor::attach(&bound, &refs).unwrap();
        // Changes to 1 at cycles 1, 3, 5 -> the event occurs at cycle 5.
        // After the second change to 1 nothing has fired yet.
        drive(&mut mon, &refs, &[vec![0], vec![1], vec![0], vec![1]]);
        assert_eq!(mon.last_fired(), None);
        drive_more(&mut mon, &refs, 4, &[vec![0], vec![1]]);
        assert_eq!(mon.last_fired(), Some(0));
        assert!(!mon.finalize().detected);
    }

    /// Continues an already-primed monitor from `start_cycle`.
    fn drive_more<'a>(
        mon: &mut PnMonitor<'a>,
        refs: &[SignalRef],
        start_cycle: u64,
        series: &[Vec<u128>],
    ) {
        for (i, row) in series.iter().enumerate() {
            let values: Vec<BitVec> = row
                .iter()
                .zip(refs)
                .map(|(&v, r)| BitVec::new(r.width, v).unwrap())
                .collect();
            mon.on_cycle(start_cycle + i as u64, &Snapshot::new(refs, &values));
        }
    }

    #[test]
    fn same_cycle_events_process_in_declaration_order() {
        let chain = |order_ab: bool| {
            let net = PetriNet::build(NetSpec {
                name: "chain".into(),
                places: vec!["p0".into(), "p1".into(), "p2".into()],
                transitions: vec!["t1".into(), "t2".into()],
                edges: vec![
                    ("p0".into(), "t1".into()),
                    ("t1".into(), "p1".into()),
                    ("p1".into(), "t2".into()),
                    ("t2".into(), "p2".into()),
                ],
                initial: vec![("p0".into(), 1)],
                expected_final: Some("t2".into()),
            })
            .unwrap();
            let ev_a = EventSpec {
                signal: sig("a", 1),
                kind: EventKind::ChangeTo(BitVec::new(1, 1).unwrap()),
                transition: "t1".into(),
            };
            let ev_b = EventSpec {
                signal: sig("b", 1),
                kind: EventKind::ChangeTo(BitVec::new(1, 1).unwrap()),
                transition: "t2".into(),
            };
            let events = if order_ab {
                vec![ev_a, ev_b]
            } else {
                vec![ev_b, ev_a]
            };
            BoundNet::new(net, events).unwrap()
        };

        let refs = vec![sig("a", 1), sig("b", 1)];
        // Both signals rise in the same cycle.
        let series = vec![vec![0, 0], vec![1, 1]];

        let good = chain(true);
        let mut mon = PnMonitor::attach(&good, &refs).unwrap();
        drive(&mut mon, &refs, &series);
        assert!(!mon.finalize().detected);

        // Declared in the opposite order, t2's event is evaluated first
        // while p1 is still empty: violation.
        let bad = chain(false);
        let mut mon = PnMonitor::attach(&bad, &refs).unwrap();
        drive(&mut mon, &refs, &series);
        let v = mon.finalize();
        assert!(v.detected);
        assert_eq!(v.detect_cycle, Some(1));
    }

    #[test]
    fn attach_rejects_unknown_or_mismatched_signals() {
        let bound = BoundNet::new(
            relay(),
            vec![EventSpec {
                signal: sig("s", 4),
                kind: EventKind::AnyChange,
                transition: "t.go".into(),
            }],
        )
        .unwrap();
        assert!(PnMonitor::attach(&bound, &[sig("other", 4)]).is_err());
        assert!(PnMonitor::attach(&bound, &[sig("s", 8)]).is_err());
    }

    #[test]
    fn bound_net_validation() {
        assert!(BoundNet::new(relay(), vec![]).is_err());
        let bad_transition = BoundNet::new(
            relay(),
            vec![EventSpec {
                signal: sig("s", 4),
                kind: EventKind::AnyChange,
                transition: "t.missing".into(),
            }],
        );
        assert!(bad_transition.is_err());
        let bad_target = BoundNet::new(
            relay(),
            vec![EventSpec {
                signal: sig("s", 4),
                kind: EventKind::ChangeTo(BitVec::new(8, 1).unwrap()),
                transition: "t.go".into(),
            }],
        );
        assert!(bad_target.is_err());
        let zero_index = BoundNet::new(
            relay(),
            vec![EventSpec {
                signal: sig("s", 4),
                kind: EventKind::NthChange(0),
                transition: "t.go".into(),
            }],
        );
        assert!(zero_index.is_err());
    }

    #[test]
    fn reachable_markings_of_relay() {
        let net = relay();
        let reachable = net.reachable_markings(100).unwrap();
        assert_eq!(reachable.len(), 2);
        assert!(reachable.iter().all(|m| m.total() == 1));
    }

    const SAMPLE_FILE: &str = "\
# two-stage handshake
net handshake
place p0
place p1
place p2
transition t.req
transition t.ack
edge p0 -> t.req
edge t.req -> p1
edge p1 -> t.ack
edge t.ack -> p2
init p0 1
final t.ack
event transition=t.req signal=bus/req type=2 target=0x1
event transition=t.ack signal=bus/ack type=4 target=0x1 index=2
";

    #[test]
    fn parse_and_build_sample_file() {
        let nets = parse_net_file("sample", SAMPLE_FILE).unwrap();
        assert_eq!(nets.len(), 1);
        let net = PetriNet::build(nets[0].spec.clone()).unwrap();
        assert_eq!(net.place_count(), 3);
        assert_eq!(net.transition_count(), 2);
        assert_eq!(net.expected_final(), Some(1));
        assert_eq!(nets[0].events.len(), 2);
        assert_eq!(nets[0].events[1].index, Some(2));
    }

    #[test]
    fn file_round_trip_is_stable() {
        let parsed = parse_net_file("sample", SAMPLE_FILE).unwrap();
        let written = write_net_file(&parsed);
        let reparsed = parse_net_file("rewritten", &written).unwrap();
        assert_eq!(parsed, reparsed);
        assert_eq!(written, write_net_file(&reparsed));
    }

    #[test]
    fn parse_rejects_malformed_input() {
        let cases = [
            "place p0\n",                                                  // before net
            "net n\nplace p0\nedge p0 t\n",                                // missing arrow
            "net n\nevent transition=t signal=s type=5\n",                 // bad type
            "net n\nevent transition=t signal=s type=2\n",                 // missing target
            "net n\nevent transition=t signal=s type=1 target=0x1\n",      // extra target
            "net n\nevent transition=t signal=s type=3\n",                 // missing index
            "net n\nevent transition=t signal=s type=3 index=0\n",         // zero index
            "net n\nevent transition=t signal=s type=2 target=1\n",        // no 0x prefix
            "net n\nevent transition=t signal=s type=2 target=0x1 bad=1\n",// unknown key
            "net n\nfinal t\nfinal t\n",                                   // duplicate final
            "net n\nbogus x\n",                                            // unknown directive
        ];
        for text in cases {
            let res = parse_net_file("case", text);
            assert!(res.is_err(), "expected parse failure for {text:?}");
        }
    }

    #[test]
    fn bind_event_defs_checks_signals_and_targets() {
        let signals = vec![sig("bus/req", 1), sig("bus/ack", 1)];
        let nets = parse_net_file("sample", SAMPLE_FILE).unwrap();
        let events = bind_event_defs(&nets[0].events, &signals).unwrap();
        assert_eq!(events[0].kind, EventKind::ChangeTo(BitVec::new(1, 1).unwrap()));

        let missing = bind_event_defs(&nets[0].events, &[sig("bus/req", 1)]);
        assert!(missing.is_err());

        let narrow = vec![sig("bus/req", 1), sig("bus/ack", 1)];
        let mut defs = nets[0].events.clone();
        defs[1].target = Some(0x7); // does not fit a 1-bit signal
        assert!(bind_event_defs(&defs, &narrow).is_err());
    }

    /// Strategy: a small random net as (places, transitions, arcs, tokens).
    fn arb_net() -> impl Strategy<Value = PetriNet> {
        (2usize..=5, 1usize..=4)
            .prop_flat_map(|(np, nt)| {
                let arcs = proptest::collection::vec(
                    (0..np, 0..nt, prop::bool::ANY),
                    1..=(np * nt).min(8),
                );
                let tokens = proptest::collection::vec(0u32..=2, np);
                (Just(np), Just(nt), arcs, tokens)
            })
            .prop_filter_map("net must validate", |(np, nt, arcs, tokens)| {
                let places: Vec<String> = (0..np).map(|i| format!("p{i}")).collect();
                let transitions: Vec<String> = (0..nt).map(|i| format!("t{i}")).collect();
                let mut edges: Vec<(String, String)> = Vec::new();
                // Guarantee every transition has one input and one output,
                // then sprinkle the random arcs on top.
                for t in 0..nt {
                    edges.push((places[t % np].clone(), transitions[t].clone()));
                    edges.push((transitions[t].clone(), places[(t + 1) % np].clone()));
                }
                for (p, t, into) in arcs {
                    let e = if into {
                        (places[p].clone(), transitions[t].clone())
                    } else {
                        (transitions[t].clone(), places[p].clone())
                    };
                    if !edges.contains(&e) {
                        edges.push(e);
                    }
                }
                let initial = places
                    .iter()
                    .zip(tokens.iter())
                    .filter(|(_, &c)| c > 0)
                    .map(|(p, &c)| (p.clone(), c))
                    .collect();
                PetriNet::build(NetSpec {
                    name: "rand".into(),
                    places,
                    transitions,
                    edges,
                    initial,
                    expected_final: None,
                })
                .ok()
            })
    }

    proptest! {
        /// Firing conserves tokens outside the fired transition's places and
        /// moves exactly one token along every arc.
        #[test]
        fn firing_token_accounting(net in arb_net(), picks in proptest::collection::vec(0usize..4, 0..12)) {
            let mut m = net.initial().clone();
            for pick in picks {
                let t = pick % net.transition_count();
                if !net.is_enabled(&m, t) {
                    prop_assert!(net.fire(&m, t).is_err());
                    continue;
                }
                let next = net.fire(&m, t).unwrap();
                let delta_total = next.total() as i64 - m.total() as i64;
                let expected = net.transition_outputs(t).len() as i64
                    - net.transition_inputs(t).len() as i64;
                prop_assert_eq!(delta_total, expected);
                for p in 0..net.place_count() {
                    let d = next.tokens(p) as i64 - m.tokens(p) as i64;
                    let ins = net.transition_inputs(t).iter().filter(|&&x| x == p).count() as i64;
                    let outs = net.transition_outputs(t).iter().filter(|&&x| x == p).count() as i64;
                    prop_assert_eq!(d, outs - ins);
                }
                m = next;
            }
        }

        /// Serialize -> parse is the identity on parsed nets.
        #[test]
        fn net_file_round_trip(net in arb_net()) {
            let parsed = ParsedNet {
                spec: net.to_spec(),
                events: vec![EventDef {
                    transition: net.transitions()[0].clone(),
                    signal: "x/y".into(),
                    type_num: 4,
                    target: Some(3),
                    index: Some(7),
                }],
            };
            let text = write_net_file(std::slice::from_ref(&parsed));
            let back = parse_net_file("round", &text).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(&back[0], &parsed);
        }
    }
}

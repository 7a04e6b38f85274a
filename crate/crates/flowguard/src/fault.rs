//! Fault injection engine and detection matrices.
//!
//! Two fault models are supported:
//!
//! * **Register upsets** ([`FaultSpec::RegisterFlip`]): one stored bit of
//!   one control register is inverted between two clock edges.
//! * **Input bursts** ([`FaultSpec::InputBurst`]): every fault-surface
//!   input of the design is overridden with seeded random values for a
//!   fixed window of consecutive cycles.
//!
//! A campaign replays the same stimulus once per fault, attaches a fresh
//! copy of every monitor, classifies the functional outcome against the
//! fault-free reference and records one [`InjectionRow`] per injection in
//! a [`DetectionMatrix`]. Campaigns are bit-deterministic: the same seed,
//! stimulus and monitor set produce a byte-identical matrix regardless of
//! how many worker threads carry the load.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{dup_area, petri_area, seq_area, AreaCoeffs};
use crate::designs::{DesignId, MonitorBundle, Stimulus};
use crate::error::{Error, Result};
use crate::petri::{bind_event_defs, BoundNet, ParsedNet, PetriNet, PnMonitor};
use crate::seqcheck::{SeqMonitor, SequenceTable};
use crate::sim::Trace;
use crate::signal::{BitVec, SignalRef};
use crate::sim::{CycleHook, Design, OutputRecord, RunOptions, Snapshot};

/// Version string recorded in matrix files.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The two fault models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultCase {
    /// Single control-register bit flip.
    RegisterUpset,
    /// Multi-cycle perturbation of the design's fault-surface inputs.
    InputBurst,
}

impl FaultCase {
    /// Numeric label used in files and reports.
    pub fn code(self) -> u8 {
        match self {
            FaultCase::RegisterUpset => 1,
            FaultCase::InputBurst => 2,
        }
    }

    /// Parses the numeric label.
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(FaultCase::RegisterUpset),
            2 => Ok(FaultCase::InputBurst),
            other => Err(Error::Config(format!(
                "unknown fault case {other}; expected 1 or 2"
            ))),
        }
    }
}

impl fmt::Display for FaultCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// One planned injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultSpec {
    /// Invert `bit` of the register at signal index `signal`, after the
    /// post-edge state of `cycle` has been observed (cycle 0 is the reset
    /// state, so the earliest flip perturbs the very first step).
    RegisterFlip { signal: usize, bit: u16, cycle: u64 },
    /// Force every fault-surface input to seeded random values during
    /// cycles `start_cycle + 1 ..= start_cycle + duration`.
    InputBurst { start_cycle: u64 },
}

impl FaultSpec {
    /// Fault model of this spec.
    pub fn case(&self) -> FaultCase {
        match self {
            FaultSpec::RegisterFlip { .. } => FaultCase::RegisterUpset,
            FaultSpec::InputBurst { .. } => FaultCase::InputBurst,
        }
    }

    /// Injection cycle (flip cycle or burst start).
    pub fn cycle(&self) -> u64 {
        match self {
            FaultSpec::RegisterFlip { cycle, .. } => *cycle,
            FaultSpec::InputBurst { start_cycle } => *start_cycle,
        }
    }
}

/// Plans `per_bit` register upsets for every bit of every control
/// register, each at an independent uniformly random cycle in
/// `0..golden_cycles`. Deterministic in `seed`.
pub fn enumerate_register_upsets(
    signals: &[SignalRef],
    control_registers: &[usize],
    golden_cycles: u64,
    per_bit: usize,
    seed: u64,
) -> Result<Vec<FaultSpec>> {
    if per_bit == 0 {
        return Err(Error::Config(
            "injections per register bit must be at least 1".into(),
        ));
    }
    if golden_cycles == 0 {
        return Err(Error::Config("fault-free run has zero cycles".into()));
    }
    if control_registers.is_empty() {
        return Err(Error::Config(
            "design exposes no control registers to upset".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5261_6e64_5570_7365);
    let mut specs = Vec::new();
    for &idx in control_registers {
        let width = signals
            .get(idx)
            .ok_or_else(|| Error::Config(format!("register index {idx} out of range")))?
            .width;
        for bit in 0..width {
            for _ in 0..per_bit {
                specs.push(FaultSpec::RegisterFlip {
                    signal: idx,
                    bit,
                    cycle: rng.gen_range(0..golden_cycles),
                });
            }
        }
    }
    Ok(specs)
}

/// Plans `count` input bursts with uniformly random start cycles in
/// `0..golden_cycles`. Deterministic in `seed`.
pub fn enumerate_input_bursts(
    golden_cycles: u64,
    count: usize,
    seed: u64,
) -> Result<Vec<FaultSpec>> {
    if count == 0 {
        return Err(Error::Config("input burst count must be at least 1".into()));
    }
    if golden_cycles == 0 {
        return Err(Error::Config("fault-free run has zero cycles".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x496e_7075_7442_7273);
    Ok((0..count)
        .map(|_| FaultSpec::InputBurst {
            start_cycle: rng.gen_range(0..golden_cycles),
        })
        .collect())
}

/// Functional outcome of one injected run, judged against the fault-free
/// reference outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputClass {
    /// Finished with bit-exact reference outputs.
    Correct,
    /// Finished with complete but wrong outputs (silent data corruption).
    Sdc,
    /// Finished having emitted fewer output units than the reference.
    Premature,
    /// Still running when the cycle budget ran out.
    Timeout,
}

impl OutputClass {
    /// Stable lowercase label used in files and reports.
    pub fn label(self) -> &'static str {
        match self {
            OutputClass::Correct => "correct",
            OutputClass::Sdc => "sdc",
            OutputClass::Premature => "premature",
            OutputClass::Timeout => "timeout",
        }
    }

    /// Parses [`OutputClass::label`] output.
    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "correct" => Ok(OutputClass::Correct),
            "sdc" => Ok(OutputClass::Sdc),
            "premature" => Ok(OutputClass::Premature),
            "timeout" => Ok(OutputClass::Timeout),
            other => Err(Error::Config(format!("unknown output class {other:?}"))),
        }
    }

    /// An observed error is any outcome other than bit-exact completion.
    pub fn is_observed_error(self) -> bool {
        !matches!(self, OutputClass::Correct)
    }
}

impl fmt::Display for OutputClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Classifies a finished (or aborted) run. Precedence: a run that never
/// reached its terminal state is a timeout regardless of outputs; a
/// truncated output stream beats a content comparison.
pub fn classify(
    completed: bool,
    outputs: &OutputRecord,
    reference: &OutputRecord,
) -> OutputClass {
    if !completed {
        OutputClass::Timeout
    } else if outputs.is_short_of(reference) {
        OutputClass::Premature
    } else if outputs == reference {
        OutputClass::Correct
    } else {
        OutputClass::Sdc
    }
}

/// Per-detector observation for one injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Detection {
    /// The detector flagged the run.
    pub flagged: bool,
    /// Cycle of the first in-run detection, if one happened.
    pub cycle: Option<u64>,
    /// The only evidence came from the end-of-run check.
    pub via_final: bool,
}

/// Kind of a detector column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Petri,
    Sequence,
    Duplication,
}

impl DetectorKind {
    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::Petri => "petri",
            DetectorKind::Sequence => "seq",
            DetectorKind::Duplication => "dup",
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "petri" => Ok(DetectorKind::Petri),
            "seq" => Ok(DetectorKind::Sequence),
            "dup" => Ok(DetectorKind::Duplication),
            other => Err(Error::Config(format!("unknown detector kind {other:?}"))),
        }
    }
}

/// One detector column of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorInfo {
    /// Unique column id: `pn_<net>`, `seq_<preset>` or `dup`.
    pub id: String,
    pub kind: DetectorKind,
    /// Estimated hardware cost in gate-equivalent units.
    pub area: f64,
}

/// One injection and everything observed about it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectionRow {
    /// Position in the campaign plan.
    pub id: usize,
    pub case: FaultCase,
    /// Flipped register path, or `inputs` for burst faults.
    pub target: String,
    /// Flipped bit index, or the burst window length.
    pub bit_or_window: u64,
    /// Injection cycle (flip cycle or burst start).
    pub cycle: u64,
    pub class: OutputClass,
    /// Cycles actually executed before completion or budget exhaustion.
    pub cycles_run: u64,
    /// One entry per matrix detector, in column order.
    pub detections: Vec<Detection>,
}

/// Campaign results: per-injection outcomes with per-detector verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMatrix {
    /// Version of the tool that produced the matrix.
    pub tool_version: String,
    /// Hex digest of the driving config file, or `-` when none was used.
    pub config_sha256: String,
    /// Campaign seed.
    pub seed: u64,
    pub detectors: Vec<DetectorInfo>,
    pub rows: Vec<InjectionRow>,
}

impl DetectionMatrix {
    /// Column index of the detector with the given id.
    pub fn detector_index(&self, id: &str) -> Option<usize> {
        self.detectors.iter().position(|d| d.id == id)
    }

    /// Column indices of all non-duplication detectors, the candidate set
    /// for subset selection.
    pub fn monitor_columns(&self) -> Vec<usize> {
        self.detectors
            .iter()
            .enumerate()
            .filter(|(_, d)| d.kind != DetectorKind::Duplication)
            .map(|(i, _)| i)
            .collect()
    }

    /// Serializes the matrix. The encoding is canonical: parsing and
    /// re-serializing reproduces the bytes exactly.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# tool_version={}", self.tool_version)?;
        writeln!(out, "# config_sha256={}", self.config_sha256)?;
        writeln!(out, "# seed={}", self.seed)?;
        for d in &self.detectors {
            writeln!(out, "# detector={},{},{}", d.id, d.kind.label(), d.area)?;
        }
        write!(out, "inj_id,case,target,bit_or_window,cycle,output_class,cycles_run")?;
        for d in &self.detectors {
            write!(out, ",det_{0}_flag,det_{0}_cycle,det_{0}_final", d.id)?;
        }
        writeln!(out)?;
        for row in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{},{}",
                row.id, row.case, row.target, row.bit_or_window, row.cycle, row.class,
                row.cycles_run
            )?;
            for det in &row.detections {
                write!(
                    out,
                    ",{},{},{}",
                    u8::from(det.flagged),
                    det.cycle.map(|c| c.to_string()).unwrap_or_default(),
                    u8::from(det.via_final)
                )?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// [`DetectionMatrix::write_csv`] into a string.
    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("matrix text is ascii")
    }
}

fn parse_meta<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.strip_prefix("# ")
        .and_then(|rest| rest.strip_prefix(key))
        .and_then(|rest| rest.strip_prefix('='))
}

/// Parses a matrix file produced by [`DetectionMatrix::write_csv`].
pub fn parse_matrix(file: &str, text: &str) -> Result<DetectionMatrix> {
    let mut tool_version = None;
    let mut config_sha256 = None;
    let mut seed = None;
    let mut detectors: Vec<DetectorInfo> = Vec::new();
    let mut header: Option<(usize, Vec<String>)> = None;
    let mut rows = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let line = format!("#{rest}");
            if let Some(v) = parse_meta(&line, "tool_version") {
                tool_version = Some(v.to_string());
            } else if let Some(v) = parse_meta(&line, "config_sha256") {
                config_sha256 = Some(v.to_string());
            } else if let Some(v) = parse_meta(&line, "seed") {
                seed = Some(v.parse::<u64>().map_err(|_| {
                    Error::parse(file, lineno, format!("bad seed {v:?}"))
                })?);
            } else if let Some(v) = parse_meta(&line, "detector") {
                let mut it = v.rsplitn(3, ',');
                let area_s = it.next().unwrap_or_default();
                let kind_s = it.next().ok_or_else(|| {
                    Error::parse(file, lineno, "detector meta needs id,kind,area".to_string())
                })?;
                let id = it.next().ok_or_else(|| {
                    Error::parse(file, lineno, "detector meta needs id,kind,area".to_string())
                })?;
                let area = area_s.parse::<f64>().map_err(|_| {
                    Error::parse(file, lineno, format!("bad detector area {area_s:?}"))
                })?;
                if !area.is_finite() || area < 0.0 {
                    return Err(Error::parse(
                        file,
                        lineno,
                        format!("detector area must be finite and non-negative, got {area}"),
                    ));
                }
                detectors.push(DetectorInfo {
                    id: id.to_string(),
                    kind: DetectorKind::from_label(kind_s)
                        .map_err(|e| Error::parse(file, lineno, e.to_string()))?,
                    area,
                });
            }
            // Unknown comment lines are ignored.
            continue;
        }
        if header.is_none() {
            let cols: Vec<String> = line.split(',').map(str::to_string).collect();
            let fixed = [
                "inj_id",
                "case",
                "target",
                "bit_or_window",
                "cycle",
                "output_class",
                "cycles_run",
            ];
            if cols.len() < fixed.len() || cols[..fixed.len()] != fixed {
                return Err(Error::parse(
                    file,
                    lineno,
                    "matrix header must start with the fixed injection columns".to_string(),
                ));
            }
            let det_cols = &cols[fixed.len()..];
            if det_cols.len() != detectors.len() * 3 {
                return Err(Error::parse(
                    file,
                    lineno,
                    format!(
                        "{} detector metadata lines but {} detector columns",
                        detectors.len(),
                        det_cols.len()
                    ),
                ));
            }
            for (d, cols) in detectors.iter().zip(det_cols.chunks(3)) {
                let want = [
                    format!("det_{}_flag", d.id),
                    format!("det_{}_cycle", d.id),
                    format!("det_{}_final", d.id),
                ];
                if cols != want {
                    return Err(Error::parse(
                        file,
                        lineno,
                        format!("detector columns for {} out of order", d.id),
                    ));
                }
            }
            header = Some((lineno, cols));
            continue;
        }

        let cells: Vec<&str> = line.split(',').collect();
        let expect = 7 + detectors.len() * 3;
        if cells.len() != expect {
            return Err(Error::parse(
                file,
                lineno,
                format!("row has {} cells, expected {expect}", cells.len()),
            ));
        }
        let num = |cell: &str, what: &str| -> Result<u64> {
            cell.parse::<u64>()
                .map_err(|_| Error::parse(file, lineno, format!("bad {what} {cell:?}")))
        };
        let id = num(cells[0], "inj_id")? as usize;
        if id != rows.len() {
            return Err(Error::parse(
                file,
                lineno,
                format!("inj_id {id} out of sequence (expected {})", rows.len()),
            ));
        }
        let case = FaultCase::from_code(num(cells[1], "case")? as u8)
            .map_err(|e| Error::parse(file, lineno, e.to_string()))?;
        let class = OutputClass::from_label(cells[5])
            .map_err(|e| Error::parse(file, lineno, e.to_string()))?;
        let mut detections = Vec::with_capacity(detectors.len());
        for chunk in cells[7..].chunks(3) {
            let flagged = match chunk[0] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::parse(file, lineno, format!("bad flag {other:?}")));
                }
            };
            let cycle = if chunk[1].is_empty() {
                None
            } else {
                Some(num(chunk[1], "detection cycle")?)
            };
            let via_final = match chunk[2] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::parse(file, lineno, format!("bad final flag {other:?}")));
                }
            };
            detections.push(Detection {
                flagged,
                cycle,
                via_final,
            });
        }
        rows.push(InjectionRow {
            id,
            case,
            target: cells[2].to_string(),
            bit_or_window: num(cells[3], "bit_or_window")?,
            cycle: num(cells[4], "cycle")?,
            class,
            cycles_run: num(cells[6], "cycles_run")?,
            detections,
        });
    }

    if header.is_none() {
        return Err(Error::parse(file, 1, "matrix has no header line".to_string()));
    }
    Ok(DetectionMatrix {
        tool_version: tool_version
            .ok_or_else(|| Error::parse(file, 1, "missing tool_version meta".to_string()))?,
        config_sha256: config_sha256
            .ok_or_else(|| Error::parse(file, 1, "missing config_sha256 meta".to_string()))?,
        seed: seed.ok_or_else(|| Error::parse(file, 1, "missing seed meta".to_string()))?,
        detectors,
        rows,
    })
}

/// Campaign-wide parameters.
#[derive(Debug, Clone)]
pub struct CampaignOptions {
    /// Seed for fault plans and burst values.
    pub seed: u64,
    /// Cycle budget per injected run, as a multiple of the fault-free
    /// run length. Must be at least 1.
    pub budget_multiplier: f64,
    /// Burst window length in cycles.
    pub duration: u64,
    /// Worker threads. Results are independent of this value.
    pub workers: usize,
    /// Restricts sequence checkers to the named presets.
    pub preset_filter: Option<Vec<String>>,
    /// Custom net definitions replacing the design's bundled set.
    pub net_defs: Option<Vec<ParsedNet>>,
    /// Pre-learned sequence tables, used instead of learning presets
    /// from the fault-free run.
    pub tables: Option<Vec<SequenceTable>>,
    /// Area coefficients recorded in the detector metadata.
    pub area: AreaCoeffs,
    /// Digest recorded in the matrix header.
    pub config_sha256: String,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        CampaignOptions {
            seed: 1,
            budget_multiplier: 2.0,
            duration: 10,
            workers: 1,
            preset_filter: None,
            net_defs: None,
            tables: None,
            area: AreaCoeffs::default(),
            config_sha256: "-".to_string(),
        }
    }
}

impl CampaignOptions {
    pub fn validate(&self) -> Result<()> {
        if !self.budget_multiplier.is_finite() || self.budget_multiplier < 1.0 {
            return Err(Error::Config(format!(
                "budget multiplier must be at least 1, got {}",
                self.budget_multiplier
            )));
        }
        if self.duration == 0 {
            return Err(Error::Config("burst duration must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        if self.tables.is_some() && self.preset_filter.is_some() {
            return Err(Error::Config(
                "pre-learned tables and a preset filter are mutually exclusive".into(),
            ));
        }
        Ok(())
    }
}

/// Builds the campaign's monitor set: the design's bundled nets and
/// presets by default, replaced by custom definitions or pre-learned
/// tables when the options carry them.
pub fn assemble_monitors(
    id: DesignId,
    watched: &[SignalRef],
    golden_trace: &Trace,
    opts: &CampaignOptions,
) -> Result<MonitorBundle> {
    // With pre-learned tables there is nothing to learn; an empty filter
    // skips the preset pass.
    let skip_learning: [String; 0] = [];
    let filter: Option<&[String]> = if opts.tables.is_some() {
        Some(&skip_learning)
    } else {
        opts.preset_filter.as_deref()
    };
    let mut bundle = MonitorBundle::build(id, watched, golden_trace, filter)?;
    if let Some(defs) = &opts.net_defs {
        bundle.nets = defs
            .iter()
            .map(|parsed| {
                let net = PetriNet::build(parsed.spec.clone())?;
                let events = bind_event_defs(&parsed.events, watched)?;
                BoundNet::new(net, events)
            })
            .collect::<Result<_>>()?;
    }
    if let Some(tables) = &opts.tables {
        // Attaching validates each table against the design's signals;
        // fail here rather than inside a worker.
        for table in tables {
            SeqMonitor::attach(table, watched, bundle.check_end)?;
        }
        bundle.tables = tables.clone();
    }
    Ok(bundle)
}

/// Everything a single injected run needs, shared read-only across
/// campaign workers.
struct CampaignContext<'a> {
    id: DesignId,
    stim: &'a Stimulus,
    watched: &'a [SignalRef],
    bundle: &'a MonitorBundle,
    reference: &'a OutputRecord,
    budget: u64,
    seed: u64,
    duration: u64,
}

fn burst_rng(seed: u64, injection: usize, cycle: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(injection as u64).to_le_bytes());
    key[16..24].copy_from_slice(&cycle.to_le_bytes());
    key[24..32].copy_from_slice(b"burstval");
    ChaCha8Rng::from_seed(key)
}

/// Replays the stimulus with one fault injected and fresh monitors
/// attached. `injection` indexes the campaign plan and keys the burst
/// value stream.
fn run_injection(
    ctx: &CampaignContext<'_>,
    injection: usize,
    spec: &FaultSpec,
) -> Result<InjectionRow> {
    let mut design = ctx.id.instantiate(ctx.stim)?;
    let mut pn: Vec<PnMonitor<'_>> = ctx
        .bundle
        .nets
        .iter()
        .map(|n| PnMonitor::attach(n, ctx.watched))
        .collect::<Result<_>>()?;
    let mut seq: Vec<SeqMonitor<'_>> = ctx
        .bundle
        .tables
        .iter()
        .map(|t| SeqMonitor::attach(t, ctx.watched, ctx.bundle.check_end))
        .collect::<Result<_>>()?;

    let fault_inputs = design.fault_inputs();
    let n = ctx.watched.len();
    let mut values = vec![BitVec::zero(1); n];
    let capture = |design: &dyn Design, values: &mut [BitVec]| {
        for (i, v) in values.iter_mut().enumerate() {
            *v = design.read(i);
        }
    };

    design.reset();
    capture(design.as_ref(), &mut values);
    {
        let snap = Snapshot::new(ctx.watched, &values);
        for m in &mut pn {
            m.on_reset(&snap);
        }
        for m in &mut seq {
            m.on_reset(&snap);
        }
    }

    let mut terminal = None;
    let mut cycles_run = 0;
    for cycle in 1..=ctx.budget {
        match *spec {
            FaultSpec::RegisterFlip {
                signal,
                bit,
                cycle: at,
            } => {
                if cycle == at + 1 {
                    design.flip_register_bit(signal, bit)?;
                }
            }
            FaultSpec::InputBurst { start_cycle } => {
                let first = start_cycle + 1;
                let last = start_cycle + ctx.duration;
                if cycle >= first && cycle <= last {
                    let mut rng = burst_rng(ctx.seed, injection, cycle);
                    for &idx in &fault_inputs {
                        let width = ctx.watched[idx].width;
                        design.force_input(idx, Some(BitVec::new(width, rng.gen())?))?;
                    }
                } else if cycle == last + 1 {
                    for &idx in &fault_inputs {
                        design.force_input(idx, None)?;
                    }
                }
            }
        }
        design.step();
        cycles_run = cycle;
        capture(design.as_ref(), &mut values);
        {
            let snap = Snapshot::new(ctx.watched, &values);
            for m in &mut pn {
                m.on_cycle(cycle, &snap);
            }
            for m in &mut seq {
                m.on_cycle(cycle, &snap);
            }
        }
        if design.done() {
            terminal = Some(cycle);
            break;
        }
    }

    let class = classify(terminal.is_some(), &design.output_record(), ctx.reference);

    let mut detections = Vec::with_capacity(pn.len() + seq.len() + 1);
    for m in &pn {
        let v = m.finalize();
        detections.push(Detection {
            flagged: v.detected,
            cycle: v.detect_cycle,
            via_final: v.via_final,
        });
    }
    for m in &seq {
        let v = m.finalize();
        detections.push(Detection {
            flagged: v.detected,
            cycle: v.detect_cycle,
            via_final: v.via_final,
        });
    }
    // Register duplication baseline: a flipped register copy mismatches
    // its shadow the moment the upset lands, while a perturbation that
    // arrives through the inputs corrupts both copies identically and is
    // invisible.
    detections.push(match spec {
        FaultSpec::RegisterFlip { cycle, .. } => Detection {
            flagged: true,
            cycle: Some(*cycle),
            via_final: false,
        },
        FaultSpec::InputBurst { .. } => Detection::default(),
    });

    let (target, bit_or_window) = match *spec {
        FaultSpec::RegisterFlip { signal, bit, .. } => {
            (ctx.watched[signal].path.clone(), u64::from(bit))
        }
        FaultSpec::InputBurst { .. } => ("inputs".to_string(), ctx.duration),
    };

    Ok(InjectionRow {
        id: injection,
        case: spec.case(),
        target,
        bit_or_window,
        cycle: spec.cycle(),
        class,
        cycles_run,
        detections,
    })
}

/// Runs a full injection campaign and assembles the detection matrix.
///
/// The fault-free run is executed first to learn sequence tables, verify
/// the design against its functional reference and size the per-run cycle
/// budget. Worker threads then replay one injection each; row order
/// follows the plan regardless of scheduling.
pub fn campaign(
    id: DesignId,
    stim: &Stimulus,
    specs: &[FaultSpec],
    opts: &CampaignOptions,
) -> Result<DetectionMatrix> {
    opts.validate()?;
    let mut design = id.instantiate(stim)?;
    let watched: Vec<SignalRef> = design.signals().to_vec();
    let reference = id.oracle(stim)?;
    let golden = crate::sim::run_golden(
        design.as_mut(),
        &watched,
        id.golden_budget(),
        &reference,
    )?;
    let bundle = assemble_monitors(id, &watched, &golden.trace, opts)?;

    let control_bits: u64 = design
        .control_registers()
        .iter()
        .map(|&i| u64::from(watched[i].width))
        .sum();
    let mut detectors = Vec::new();
    for net in &bundle.nets {
        detectors.push(DetectorInfo {
            id: format!("pn_{}", net.net.name()),
            kind: DetectorKind::Petri,
            area: petri_area(&opts.area, net)?,
        });
    }
    for table in &bundle.tables {
        detectors.push(DetectorInfo {
            id: format!("seq_{}", table.name),
            kind: DetectorKind::Sequence,
            area: seq_area(&opts.area, table)?,
        });
    }
    detectors.push(DetectorInfo {
        id: "dup".to_string(),
        kind: DetectorKind::Duplication,
        area: dup_area(&opts.area, control_bits)?,
    });

    let budget = (opts.budget_multiplier * golden.cycles as f64).ceil() as u64;
    let ctx = CampaignContext {
        id,
        stim,
        watched: &watched,
        bundle: &bundle,
        reference: &reference,
        budget,
        seed: opts.seed,
        duration: opts.duration,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let rows: Result<Vec<InjectionRow>> = pool.install(|| {
        specs
            .par_iter()
            .enumerate()
            .map(|(i, spec)| run_injection(&ctx, i, spec))
            .collect()
    });

    Ok(DetectionMatrix {
        tool_version: TOOL_VERSION.to_string(),
        config_sha256: opts.config_sha256.clone(),
        seed: opts.seed,
        detectors,
        rows: rows?,
    })
}

/// Convenience plan builder: upsets for every control-register bit and a
/// burst batch, per the configured counts. Returns the golden cycle count
/// alongside the plan, since both enumerations are sized by it. A count
/// of zero plans no injections of that case (an entirely empty plan is
/// legal and produces a header-only matrix).
pub fn plan_campaign(
    id: DesignId,
    stim: &Stimulus,
    case: Option<FaultCase>,
    per_bit: usize,
    burst_count: usize,
    seed: u64,
) -> Result<(Vec<FaultSpec>, u64)> {
    let mut design = id.instantiate(stim)?;
    let watched: Vec<SignalRef> = design.signals().to_vec();
    let reference = id.oracle(stim)?;
    let golden = crate::sim::run_golden(
        design.as_mut(),
        &watched,
        id.golden_budget(),
        &reference,
    )?;
    let mut specs = Vec::new();
    if case != Some(FaultCase::InputBurst) && per_bit > 0 {
        specs.extend(enumerate_register_upsets(
            &watched,
            &design.control_registers(),
            golden.cycles,
            per_bit,
            seed,
        )?);
    }
    if case != Some(FaultCase::RegisterUpset) && burst_count > 0 {
        specs.extend(enumerate_input_bursts(golden.cycles, burst_count, seed)?);
    }
    Ok((specs, golden.cycles))
}

/// Runs the design fault-free and returns the recorded golden run.
pub fn golden_run(id: DesignId, stim: &Stimulus) -> Result<crate::sim::GoldenRun> {
    let mut design = id.instantiate(stim)?;
    let watched: Vec<SignalRef> = design.signals().to_vec();
    let reference = id.oracle(stim)?;
    crate::sim::run_golden(design.as_mut(), &watched, id.golden_budget(), &reference)
}

// RunOptions is re-exported through sim; referenced here so the injection
// loop and the kernel stay in lockstep on budget semantics.
const _: fn(u64) -> RunOptions = RunOptions::silent;

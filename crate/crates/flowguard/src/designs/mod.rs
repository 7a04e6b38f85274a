//! Bundled reference designs.
//!
//! Four small synchronous designs exercise the monitors: a convolution
//! layer ([`conv`]), a streaming Gaussian blur ([`gaus`]), an AES-128
//! core ([`aes`]) and a 4x4 mesh network-on-chip scenario ([`noc`]).
//! Each design ships with a functional oracle, a family of Petri-net
//! monitor definitions and a set of state-key selector presets.

pub mod aes;
pub mod conv;
pub mod gaus;
pub mod noc;
pub mod table;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::petri::{bind_event_defs, parse_net_file, BoundNet, ParsedNet, PetriNet};
use crate::seqcheck::{select_bits, BitType, Level, SequenceTable, UsedMsbMap};
use crate::signal::SignalRef;
use crate::sim::{Design, OutputRecord, Trace};

/// Identifies one of the bundled designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignId {
    Conv,
    Gaus,
    Aes,
    Noc,
}

impl DesignId {
    pub const ALL: [DesignId; 4] = [DesignId::Conv, DesignId::Gaus, DesignId::Aes, DesignId::Noc];

    pub fn name(self) -> &'static str {
        match self {
            DesignId::Conv => "conv",
            DesignId::Gaus => "gaus",
            DesignId::Aes => "aes",
            DesignId::Noc => "noc",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "conv" => Ok(DesignId::Conv),
            "gaus" => Ok(DesignId::Gaus),
            "aes" => Ok(DesignId::Aes),
            "noc" => Ok(DesignId::Noc),
            other => Err(Error::Config(format!(
                "unknown design {other}; expected conv, gaus, aes or noc"
            ))),
        }
    }

    /// Deterministic stimulus derived from a seed.
    pub fn default_stimulus(self, seed: u64) -> Stimulus {
        let salt = self as u64;
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt);
        match self {
            DesignId::Conv => {
                let mut activations = [[0i8; 8]; 8];
                for row in &mut activations {
                    for v in row.iter_mut() {
                        *v = rng.gen();
                    }
                }
                let mut kernels = [[[0i8; 3]; 3]; 4];
                for k in &mut kernels {
                    for row in k.iter_mut() {
                        for v in row.iter_mut() {
                            *v = rng.gen();
                        }
                    }
                }
                Stimulus::Conv {
                    activations,
                    kernels,
                }
            }
            DesignId::Gaus => {
                let mut image = [[0u8; 16]; 12];
                for row in &mut image {
                    for v in row.iter_mut() {
                        *v = rng.gen();
                    }
                }
                Stimulus::Gaus { image }
            }
            DesignId::Aes => {
                // First block is the standard known-answer vector; the
                // rest are seeded.
                let key = [
                    0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, 0x09, 0x0a, 0x0b,
                    0x0c, 0x0d, 0x0e, 0x0f,
                ];
                let mut plaintexts = vec![[
                    0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb,
                    0xcc, 0xdd, 0xee, 0xff,
                ]];
                for _ in 0..4 {
                    let mut pt = [0u8; 16];
                    rng.fill(&mut pt);
                    plaintexts.push(pt);
                }
                Stimulus::Aes { key, plaintexts }
            }
            DesignId::Noc => {
                let payloads = (0..noc::PAYLOAD_COUNT).map(|_| rng.gen()).collect();
                Stimulus::Noc {
                    payloads,
                    unicast_cycles: noc::DEFAULT_UNICAST_CYCLES.to_vec(),
                }
            }
        }
    }

    /// Builds a fresh design instance for the given stimulus.
    pub fn instantiate(self, stim: &Stimulus) -> Result<Box<dyn Design>> {
        match (self, stim) {
            (DesignId::Conv, Stimulus::Conv { activations, kernels }) => {
                Ok(Box::new(conv::ConvDesign::new(*activations, *kernels)))
            }
            (DesignId::Gaus, Stimulus::Gaus { image }) => {
                Ok(Box::new(gaus::GausDesign::new(*image)))
            }
            (DesignId::Aes, Stimulus::Aes { key, plaintexts }) => {
                Ok(Box::new(aes::AesDesign::new(*key, plaintexts.clone())?))
            }
            (DesignId::Noc, Stimulus::Noc { payloads, unicast_cycles }) => Ok(Box::new(
                noc::NocScenario::new(payloads.clone(), unicast_cycles.clone())?,
            )),
            _ => Err(Error::Config(format!(
                "stimulus does not belong to design {}",
                self.name()
            ))),
        }
    }

    /// Reference output computed functionally, independent of the
    /// cycle-level model.
    pub fn oracle(self, stim: &Stimulus) -> Result<OutputRecord> {
        match (self, stim) {
            (DesignId::Conv, Stimulus::Conv { activations, kernels }) => {
                Ok(conv::oracle(activations, kernels))
            }
            (DesignId::Gaus, Stimulus::Gaus { image }) => Ok(gaus::oracle(image)),
            (DesignId::Aes, Stimulus::Aes { key, plaintexts }) => {
                Ok(aes::oracle(key, plaintexts))
            }
            (DesignId::Noc, Stimulus::Noc { payloads, .. }) => Ok(noc::oracle(payloads)),
            _ => Err(Error::Config(format!(
                "stimulus does not belong to design {}",
                self.name()
            ))),
        }
    }

    /// The bundled Petri-net monitor definitions.
    pub fn net_defs(self) -> Vec<ParsedNet> {
        let text = self.net_text();
        parse_net_file(self.name(), text).expect("bundled net definitions parse")
    }

    /// Raw text of the bundled net definitions.
    pub fn net_text(self) -> &'static str {
        match self {
            DesignId::Conv => conv::NETS,
            DesignId::Gaus => gaus::NETS,
            DesignId::Aes => aes::NETS,
            DesignId::Noc => noc::NETS,
        }
    }

    /// The bundled state-key selector presets.
    pub fn presets(self) -> Vec<SelectorPreset> {
        match self {
            DesignId::Conv => conv::presets(),
            DesignId::Gaus => gaus::presets(),
            DesignId::Aes => aes::presets(),
            DesignId::Noc => noc::presets(),
        }
    }

    /// Highest used bit per control register, for bit-selection type 3.
    pub fn used_msb(self) -> UsedMsbMap {
        match self {
            DesignId::Conv => conv::used_msb(),
            DesignId::Gaus => gaus::used_msb(),
            DesignId::Aes => aes::used_msb(),
            DesignId::Noc => noc::used_msb(),
        }
    }

    /// Whether sequence checkers compare the final state for this design.
    pub fn check_end(self) -> bool {
        !matches!(self, DesignId::Noc)
    }

    /// Generous cycle budget for fault-free runs.
    pub fn golden_budget(self) -> u64 {
        match self {
            DesignId::Conv => 4_000,
            DesignId::Gaus => 1_000,
            DesignId::Aes => 1_000,
            DesignId::Noc => 2_000,
        }
    }
}

impl std::fmt::Display for DesignId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Input data for one design run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stimulus {
    Conv {
        activations: [[i8; 8]; 8],
        kernels: [[[i8; 3]; 3]; 4],
    },
    Gaus {
        image: [[u8; 16]; 12],
    },
    Aes {
        key: [u8; 16],
        plaintexts: Vec<[u8; 16]>,
    },
    Noc {
        payloads: Vec<u16>,
        unicast_cycles: Vec<u64>,
    },
}

impl Stimulus {
    pub fn design(&self) -> DesignId {
        match self {
            Stimulus::Conv { .. } => DesignId::Conv,
            Stimulus::Gaus { .. } => DesignId::Gaus,
            Stimulus::Aes { .. } => DesignId::Aes,
            Stimulus::Noc { .. } => DesignId::Noc,
        }
    }
}

/// One state-key selector configuration bundled with a design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorPreset {
    pub name: String,
    pub level: Level,
    pub bit_type: BitType,
}

impl SelectorPreset {
    fn new(name: &str, level: Level, bit_type: BitType) -> Self {
        SelectorPreset {
            name: name.to_string(),
            level,
            bit_type,
        }
    }
}

/// The full monitor complement of one design: bound Petri nets plus
/// learned sequence tables.
pub struct MonitorBundle {
    pub nets: Vec<BoundNet>,
    pub tables: Vec<SequenceTable>,
    pub check_end: bool,
}

impl MonitorBundle {
    /// Binds the bundled nets to `signals` and learns one sequence table
    /// per preset from the golden trace. `preset_filter` restricts the
    /// presets by name when given.
    pub fn build(
        id: DesignId,
        signals: &[SignalRef],
        golden_trace: &Trace,
        preset_filter: Option<&[String]>,
    ) -> Result<Self> {
        let mut nets = Vec::new();
        for parsed in id.net_defs() {
            let net = PetriNet::build(parsed.spec)?;
            let events = bind_event_defs(&parsed.events, signals)?;
            nets.push(BoundNet::new(net, events)?);
        }
        let used = id.used_msb();
        let mut tables = Vec::new();
        for preset in id.presets() {
            if let Some(filter) = preset_filter {
                if !filter.iter().any(|n| n == &preset.name) {
                    continue;
                }
            }
            let entries = select_bits(signals, preset.level, preset.bit_type, &used)?;
            tables.push(SequenceTable::learn(
                preset.name.clone(),
                preset.level,
                preset.bit_type,
                entries,
                golden_trace,
            )?);
        }
        if let Some(filter) = preset_filter {
            if tables.len() != filter.len() {
                let known: Vec<String> =
                    id.presets().into_iter().map(|p| p.name).collect();
                return Err(Error::Config(format!(
                    "unknown preset in filter; known presets for {}: {}",
                    id.name(),
                    known.join(", ")
                )));
            }
        }
        Ok(MonitorBundle {
            nets,
            tables,
            check_end: id.check_end(),
        })
    }
}

fn split_csv_line(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn parse_hex_cell(file: &str, lineno: usize, cell: &str, digits: usize) -> Result<u64> {
    if cell.len() != digits {
        return Err(Error::parse(
            file,
            lineno,
            format!("expected {digits} hex digits, got {cell:?}"),
        ));
    }
    u64::from_str_radix(cell, 16)
        .map_err(|_| Error::parse(file, lineno, format!("bad hex value {cell:?}")))
}

/// Parses a stimulus file.
///
/// The format is a line-oriented CSV: a `design,<name>` line followed by
/// the design's data sections, one tagged line per row, with fixed-width
/// lowercase hex cells. `#` starts a comment.
pub fn parse_stimulus(file: &str, text: &str) -> Result<Stimulus> {
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if !line.is_empty() {
            lines.push((idx + 1, line));
        }
    }
    let Some(&(first_no, first)) = lines.first() else {
        return Err(Error::parse(file, 1, "empty stimulus file".to_string()));
    };
    let head = split_csv_line(first);
    if head.len() != 2 || head[0] != "design" {
        return Err(Error::parse(
            file,
            first_no,
            "stimulus must start with a design,<name> line".to_string(),
        ));
    }
    let id = DesignId::parse(head[1])?;
    let body = &lines[1..];

    // Collects the cells of `count` consecutive lines tagged `tag`, each
    // with `cells` hex cells of `digits` digits.
    let section = |rows: &mut std::slice::Iter<'_, (usize, &str)>,
                   tag: &str,
                   count: usize,
                   cells: usize,
                   digits: usize|
     -> Result<Vec<Vec<u64>>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let Some(&(lineno, line)) = rows.next() else {
                return Err(Error::parse(
                    file,
                    lines.last().map(|&(n, _)| n).unwrap_or(1),
                    format!("missing {tag} line ({count} expected)"),
                ));
            };
            let fields = split_csv_line(line);
            if fields.first() != Some(&tag) {
                return Err(Error::parse(
                    file,
                    lineno,
                    format!("expected a {tag} line, got {:?}", fields.first().unwrap_or(&"")),
                ));
            }
            if fields.len() != cells + 1 {
                return Err(Error::parse(
                    file,
                    lineno,
                    format!("{tag} line needs {cells} values, got {}", fields.len() - 1),
                ));
            }
            let mut row = Vec::with_capacity(cells);
            for cell in &fields[1..] {
                row.push(parse_hex_cell(file, lineno, cell, digits)?);
            }
            out.push(row);
        }
        Ok(out)
    };

    let mut rows = body.iter();
    let stim = match id {
        DesignId::Conv => {
            let act = section(&mut rows, "act", 8, 8, 2)?;
            let kern = section(&mut rows, "kern", 4, 9, 2)?;
            let mut activations = [[0i8; 8]; 8];
            for (r, row) in act.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    activations[r][c] = v as u8 as i8;
                }
            }
            let mut kernels = [[[0i8; 3]; 3]; 4];
            for (k, row) in kern.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    kernels[k][j / 3][j % 3] = v as u8 as i8;
                }
            }
            Stimulus::Conv {
                activations,
                kernels,
            }
        }
        DesignId::Gaus => {
            let img = section(&mut rows, "img", 12, 16, 2)?;
            let mut image = [[0u8; 16]; 12];
            for (r, row) in img.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    image[r][c] = v as u8;
                }
            }
            Stimulus::Gaus { image }
        }
        DesignId::Aes => {
            let key_row = section(&mut rows, "key", 1, 16, 2)?;
            let mut key = [0u8; 16];
            for (i, &v) in key_row[0].iter().enumerate() {
                key[i] = v as u8;
            }
            let mut plaintexts = Vec::new();
            let remaining: Vec<&(usize, &str)> = rows.clone().collect();
            let pt_rows = section(&mut rows, "pt", remaining.len(), 16, 2)?;
            for row in &pt_rows {
                let mut pt = [0u8; 16];
                for (i, &v) in row.iter().enumerate() {
                    pt[i] = v as u8;
                }
                plaintexts.push(pt);
            }
            if plaintexts.is_empty() || plaintexts.len() > aes::MAX_BLOCKS {
                return Err(Error::parse(
                    file,
                    first_no,
                    format!(
                        "aes stimulus needs 1..={} pt lines, got {}",
                        aes::MAX_BLOCKS,
                        plaintexts.len()
                    ),
                ));
            }
            Stimulus::Aes { key, plaintexts }
        }
        DesignId::Noc => {
            let mcast = section(&mut rows, "mcast", noc::MCAST_PACKETS, noc::PAYLOADS_PER_PACKET, 4)?;
            let ucast = section(&mut rows, "ucast", 1, noc::UNICAST_COUNT, 4)?;
            let ucyc = section(&mut rows, "ucycle", 1, noc::UNICAST_COUNT, 8)?;
            let mut payloads: Vec<u16> = Vec::new();
            for row in &mcast {
                payloads.extend(row.iter().map(|&v| v as u16));
            }
            payloads.extend(ucast[0].iter().map(|&v| v as u16));
            Stimulus::Noc {
                payloads,
                unicast_cycles: ucyc[0].clone(),
            }
        }
    };
    if let Some(&(lineno, line)) = rows.next() {
        return Err(Error::parse(
            file,
            lineno,
            format!("trailing content after stimulus data: {line:?}"),
        ));
    }
    Ok(stim)
}

/// Serializes a stimulus in the canonical file form. Reparsing the output
/// yields the input exactly.
pub fn write_stimulus(stim: &Stimulus) -> String {
    let mut out = String::new();
    out.push_str(&format!("design,{}\n", stim.design().name()));
    let mut line = |tag: &str, cells: &[u64], digits: usize| {
        out.push_str(tag);
        for &c in cells {
            out.push_str(&format!(",{c:0digits$x}"));
        }
        out.push('\n');
    };
    match stim {
        Stimulus::Conv {
            activations,
            kernels,
        } => {
            for row in activations {
                let cells: Vec<u64> = row.iter().map(|&v| v as u8 as u64).collect();
                line("act", &cells, 2);
            }
            for k in kernels {
                let cells: Vec<u64> = k
                    .iter()
                    .flat_map(|r| r.iter())
                    .map(|&v| v as u8 as u64)
                    .collect();
                line("kern", &cells, 2);
            }
        }
        Stimulus::Gaus { image } => {
            for row in image {
                let cells: Vec<u64> = row.iter().map(|&v| v as u64).collect();
                line("img", &cells, 2);
            }
        }
        Stimulus::Aes { key, plaintexts } => {
            let cells: Vec<u64> = key.iter().map(|&v| v as u64).collect();
            line("key", &cells, 2);
            for pt in plaintexts {
                let cells: Vec<u64> = pt.iter().map(|&v| v as u64).collect();
                line("pt", &cells, 2);
            }
        }
        Stimulus::Noc {
            payloads,
            unicast_cycles,
        } => {
            for p in 0..noc::MCAST_PACKETS {
                let cells: Vec<u64> = payloads
                    [p * noc::PAYLOADS_PER_PACKET..(p + 1) * noc::PAYLOADS_PER_PACKET]
                    .iter()
                    .map(|&v| v as u64)
                    .collect();
                line("mcast", &cells, 4);
            }
            let cells: Vec<u64> = payloads[noc::MCAST_PACKETS * noc::PAYLOADS_PER_PACKET..]
                .iter()
                .map(|&v| v as u64)
                .collect();
            line("ucast", &cells, 4);
            line("ucycle", unicast_cycles, 8);
        }
    }
    out
}

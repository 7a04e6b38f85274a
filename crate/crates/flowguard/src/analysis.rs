//! Detection-rate metrics, hardware-cost modeling and detector subset
//! selection over [`DetectionMatrix`] campaign results.
//!
//! Metrics follow a strict true-positive definition: a detection counts
//! only when the run actually produced an observed output error. Rows
//! flagged despite bit-exact outputs are tallied separately as benign
//! detections. Detections whose only evidence is an end-of-run check
//! carry no usable latency and are reported through the separate
//! `dr_to` rate.
//!
//! The cost model is an abstract linear gate-equivalent estimate (no
//! synthesis backend exists): token storage and firing logic for Petri
//! monitors, key registers plus match logic for sequence checkers, and
//! a per-bit cost for register duplication. Event counters (occurrence-
//! indexed events) cost three units against one for plain edge matches.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fault::{DetectionMatrix, OutputClass};
use crate::petri::BoundNet;
use crate::seqcheck::SequenceTable;

/// Linear cost-model coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaCoeffs {
    /// Cost per Petri-net place.
    pub place: f64,
    /// Cost per Petri-net transition.
    pub transition: f64,
    /// Cost per sequence-checker key bit.
    pub key_bit: f64,
    /// Cost per learned sequence pair.
    pub pair: f64,
    /// Cost per duplicated register bit.
    pub dup_bit: f64,
}

impl Default for AreaCoeffs {
    fn default() -> Self {
        AreaCoeffs {
            place: 1.0,
            transition: 1.0,
            key_bit: 2.0,
            pair: 0.25,
            dup_bit: 2.0,
        }
    }
}

impl AreaCoeffs {
    /// Rejects negative or non-finite coefficients.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("place", self.place),
            ("transition", self.transition),
            ("key_bit", self.key_bit),
            ("pair", self.pair),
            ("dup_bit", self.dup_bit),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "area coefficient {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Cost of one Petri-net monitor: places, transitions, and one unit per
/// plain change event or three per occurrence-counting event.
pub fn petri_area(coeffs: &AreaCoeffs, net: &BoundNet) -> Result<f64> {
    coeffs.validate()?;
    if net.events.is_empty() {
        return Err(Error::Config(format!(
            "net {} has no bound events to cost",
            net.net.name()
        )));
    }
    let events: f64 = net
        .events
        .iter()
        .map(|e| match e.kind.type_num() {
            1 | 2 => 1.0,
            _ => 3.0,
        })
        .sum();
    Ok(coeffs.place * net.net.places().len() as f64
        + coeffs.transition * net.net.transitions().len() as f64
        + events)
}

/// Cost of one sequence checker: key register bits plus stored pairs.
pub fn seq_area(coeffs: &AreaCoeffs, table: &SequenceTable) -> Result<f64> {
    coeffs.validate()?;
    Ok(coeffs.key_bit * f64::from(table.width()) + coeffs.pair * table.pair_count() as f64)
}

/// Cost of duplicating `control_bits` register bits.
pub fn dup_area(coeffs: &AreaCoeffs, control_bits: u64) -> Result<f64> {
    coeffs.validate()?;
    if control_bits == 0 {
        return Err(Error::Config(
            "duplication cost of a design with zero control bits".into(),
        ));
    }
    Ok(coeffs.dup_bit * control_bits as f64)
}

/// Detection statistics of one detector subset over one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Total injections in the matrix.
    pub n_injections: usize,
    /// Rows whose outputs deviated from the reference.
    pub n_oe: usize,
    /// Observed-error rows flagged by at least one subset detector.
    pub n_tp: usize,
    /// True positives whose every flagging detector only fired the
    /// end-of-run check.
    pub n_to: usize,
    /// Correct-output rows that were nevertheless flagged.
    pub n_benign: usize,
    /// `n_tp / n_oe`.
    pub dr: f64,
    /// `n_to / n_oe`.
    pub dr_to: f64,
    /// Mean cycles from injection to first in-run detection, over true
    /// positives with at least one in-run detection. Absent when every
    /// detection was end-of-run only.
    pub latency: Option<f64>,
}

/// Computes subset metrics. `columns` indexes `matrix.detectors`.
pub fn metrics(matrix: &DetectionMatrix, columns: &[usize]) -> Result<Metrics> {
    for &c in columns {
        if c >= matrix.detectors.len() {
            return Err(Error::Config(format!(
                "detector column {c} out of range ({} detectors)",
                matrix.detectors.len()
            )));
        }
    }
    let mut n_oe = 0usize;
    let mut n_tp = 0usize;
    let mut n_to = 0usize;
    let mut n_benign = 0usize;
    let mut latency_sum = 0.0f64;
    let mut latency_n = 0usize;

    for row in &matrix.rows {
        let flagged: Vec<usize> = columns
            .iter()
            .copied()
            .filter(|&c| row.detections[c].flagged)
            .collect();
        if row.class == OutputClass::Correct {
            if !flagged.is_empty() {
                n_benign += 1;
            }
            continue;
        }
        n_oe += 1;
        if flagged.is_empty() {
            continue;
        }
        n_tp += 1;
        if flagged.iter().all(|&c| row.detections[c].via_final) {
            n_to += 1;
            continue;
        }
        let first = flagged
            .iter()
            .filter_map(|&c| row.detections[c].cycle)
            .min()
            .ok_or_else(|| {
                Error::Defect(format!(
                    "injection {} has an in-run detection without a cycle",
                    row.id
                ))
            })?;
        latency_sum += first as f64 - row.cycle as f64;
        latency_n += 1;
    }

    if n_oe == 0 {
        return Err(Error::Undefined(
            "detection rate over zero observed errors".into(),
        ));
    }
    Ok(Metrics {
        n_injections: matrix.rows.len(),
        n_oe,
        n_tp,
        n_to,
        n_benign,
        dr: n_tp as f64 / n_oe as f64,
        dr_to: n_to as f64 / n_oe as f64,
        latency: (latency_n > 0).then(|| latency_sum / latency_n as f64),
    })
}

/// Subset-selection objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionMode {
    /// Maximize detection rate subject to a total-cost budget.
    MaxDr { budget: f64 },
    /// Minimize total cost subject to a detection-rate floor.
    MinArea { dr_target: f64 },
}

/// A chosen detector subset with its evaluated metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Chosen columns of `matrix.detectors`, ascending.
    pub columns: Vec<usize>,
    /// Detector ids of the chosen columns.
    pub ids: Vec<String>,
    /// Total cost of the subset.
    pub cost: f64,
    pub metrics: Metrics,
}

/// Result of a selection: either a subset or an infeasibility report.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionOutcome {
    Selected(Selection),
    /// No subset reaches the requested detection rate; reports the best
    /// attainable value (the full candidate set's rate).
    Infeasible { max_dr: f64 },
}

/// Observed-error rows compressed to distinct detection patterns over the
/// candidate columns. Subset evaluation then counts pattern groups
/// instead of rows.
struct Compressed {
    n_oe: u64,
    /// pattern bitmask over candidate positions -> row count.
    patterns: HashMap<u64, u64>,
}

fn compress(matrix: &DetectionMatrix, candidates: &[usize]) -> Compressed {
    let mut patterns: HashMap<u64, u64> = HashMap::new();
    let mut n_oe = 0;
    for row in &matrix.rows {
        if row.class == OutputClass::Correct {
            continue;
        }
        n_oe += 1;
        let mut mask = 0u64;
        for (pos, &c) in candidates.iter().enumerate() {
            if row.detections[c].flagged {
                mask |= 1 << pos;
            }
        }
        *patterns.entry(mask).or_insert(0) += 1;
    }
    Compressed { n_oe, patterns }
}

impl Compressed {
    /// True positives of the subset given as a candidate-position mask.
    fn n_tp(&self, subset: u64) -> u64 {
        self.patterns
            .iter()
            .filter(|(&mask, _)| mask & subset != 0)
            .map(|(_, &count)| count)
            .sum()
    }
}

/// Per-candidate precomputed facts used during search.
struct Candidate {
    column: usize,
    id: String,
    cost: f64,
}

/// Search bookkeeping: one evaluated subset.
#[derive(Clone, Copy)]
struct Evaluated {
    mask: u64,
    n_tp: u64,
    cost: f64,
}

/// Lexicographic comparison of two subsets by their candidate ids.
fn lex_ids(cands: &[Candidate], a: u64, b: u64) -> std::cmp::Ordering {
    let ids = |mask: u64| {
        let mut v: Vec<&str> = cands
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, c)| c.id.as_str())
            .collect();
        v.sort_unstable();
        v
    };
    ids(a).cmp(&ids(b))
}

/// `a` beats `b` under max-dr: more true positives, then cheaper, then
/// lexicographically smaller id set.
fn better_max_dr(cands: &[Candidate], a: Evaluated, b: Evaluated) -> bool {
    if a.n_tp != b.n_tp {
        return a.n_tp > b.n_tp;
    }
    if a.cost != b.cost {
        return a.cost < b.cost;
    }
    lex_ids(cands, a.mask, b.mask) == std::cmp::Ordering::Less
}

/// `a` beats `b` under min-area: cheaper, then more true positives, then
/// lexicographically smaller id set.
fn better_min_area(cands: &[Candidate], a: Evaluated, b: Evaluated) -> bool {
    if a.cost != b.cost {
        return a.cost < b.cost;
    }
    if a.n_tp != b.n_tp {
        return a.n_tp > b.n_tp;
    }
    lex_ids(cands, a.mask, b.mask) == std::cmp::Ordering::Less
}

fn subset_cost(cands: &[Candidate], mask: u64) -> f64 {
    // fold, not sum: the empty subset must cost +0.0, and the standard
    // float Sum starts from -0.0.
    cands
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .fold(0.0, |acc, (_, c)| acc + c.cost)
}

/// Feasibility for the min-area mode, with a tolerance absorbing float
/// dust in `target` (rates themselves are exact integer ratios).
fn meets_target(n_tp: u64, n_oe: u64, target: f64) -> bool {
    n_tp as f64 / n_oe as f64 + 1e-12 >= target
}

/// Exhaustively evaluates every subset of `cands` (at most 20) and keeps
/// the best per `mode`. Detection counts come from a sum-over-subsets
/// table so the sweep is linear in `2^n`, not in rows.
fn exhaustive(
    comp: &Compressed,
    cands: &[Candidate],
    mode: SelectionMode,
) -> Option<Evaluated> {
    let n = cands.len();
    debug_assert!(n <= 20);
    let full: u64 = if n == 64 { u64::MAX } else { (1 << n) - 1 };
    // undetected[x] = observed-error rows whose pattern is a subset of x;
    // a subset S misses exactly the rows whose pattern avoids S.
    let mut undetected = vec![0u64; 1 << n];
    for (&mask, &count) in &comp.patterns {
        undetected[mask as usize] += count;
    }
    for bit in 0..n {
        for x in 0..(1u64 << n) {
            if x & (1 << bit) != 0 {
                undetected[x as usize] += undetected[(x ^ (1 << bit)) as usize];
            }
        }
    }

    let mut best: Option<Evaluated> = None;
    for mask in 0..=full {
        let n_tp = comp.n_oe - undetected[(full ^ mask) as usize];
        let cost = subset_cost(cands, mask);
        let cand = Evaluated { mask, n_tp, cost };
        let ok = match mode {
            SelectionMode::MaxDr { budget } => cost <= budget,
            SelectionMode::MinArea { dr_target } => {
                meets_target(n_tp, comp.n_oe, dr_target)
            }
        };
        if !ok {
            continue;
        }
        let better = match (mode, best) {
            (_, None) => true,
            (SelectionMode::MaxDr { .. }, Some(b)) => better_max_dr(cands, cand, b),
            (SelectionMode::MinArea { .. }, Some(b)) => better_min_area(cands, cand, b),
        };
        if better {
            best = Some(cand);
        }
    }
    best
}

/// Greedy marginal-gain-per-cost construction for large candidate sets.
fn greedy(comp: &Compressed, cands: &[Candidate], mode: SelectionMode) -> Option<Evaluated> {
    let mut mask = 0u64;
    let mut cost = 0.0f64;
    let mut n_tp = 0u64;
    loop {
        let mut pick: Option<(usize, f64, u64)> = None;
        for (i, c) in cands.iter().enumerate() {
            if mask & (1 << i) != 0 {
                continue;
            }
            if let SelectionMode::MaxDr { budget } = mode {
                if cost + c.cost > budget {
                    continue;
                }
            }
            let gain = comp.n_tp(mask | (1 << i)) - n_tp;
            if gain == 0 {
                continue;
            }
            let ratio = if c.cost == 0.0 {
                f64::INFINITY
            } else {
                gain as f64 / c.cost
            };
            let better = match pick {
                None => true,
                Some((j, r, g)) => {
                    ratio > r
                        || (ratio == r && gain > g)
                        || (ratio == r && gain == g && cands[i].id < cands[j].id)
                }
            };
            if better {
                pick = Some((i, ratio, gain));
            }
        }
        let Some((i, _, gain)) = pick else { break };
        mask |= 1 << i;
        cost += cands[i].cost;
        n_tp += gain;
        if let SelectionMode::MinArea { dr_target } = mode {
            if meets_target(n_tp, comp.n_oe, dr_target) {
                break;
            }
        }
    }
    if let SelectionMode::MinArea { dr_target } = mode {
        if !meets_target(n_tp, comp.n_oe, dr_target) {
            return None;
        }
        // Backward pass: drop members that became redundant.
        let order: Vec<usize> = (0..cands.len()).filter(|&i| mask & (1 << i) != 0).collect();
        for i in order {
            let without = mask & !(1 << i);
            if without != 0 || meets_target(0, comp.n_oe, dr_target) {
                let tp = comp.n_tp(without);
                if meets_target(tp, comp.n_oe, dr_target) {
                    mask = without;
                    cost -= cands[i].cost;
                    n_tp = tp;
                }
            }
        }
    }
    Some(Evaluated { mask, n_tp, cost })
}

/// Restricts the search to the 20 candidates with the best standalone
/// detection-per-cost, then runs the exhaustive sweep over them.
fn refined(
    comp: &Compressed,
    cands: &[Candidate],
    mode: SelectionMode,
) -> Option<Evaluated> {
    let mut scored: Vec<(usize, f64, u64)> = cands
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let tp = comp.n_tp(1 << i);
            let ratio = if c.cost == 0.0 {
                if tp > 0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                tp as f64 / c.cost
            };
            (i, ratio, tp)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.2.cmp(&a.2))
            .then(cands[a.0].id.cmp(&cands[b.0].id))
    });
    let top: Vec<usize> = scored.iter().take(20).map(|&(i, _, _)| i).collect();

    // Re-compress over the restricted candidate list, then map the local
    // result back to the full candidate positions.
    let local: Vec<Candidate> = top
        .iter()
        .map(|&i| Candidate {
            column: cands[i].column,
            id: cands[i].id.clone(),
            cost: cands[i].cost,
        })
        .collect();
    let mut patterns: HashMap<u64, u64> = HashMap::new();
    for (&mask, &count) in &comp.patterns {
        let mut m = 0u64;
        for (pos, &i) in top.iter().enumerate() {
            if mask & (1 << i) != 0 {
                m |= 1 << pos;
            }
        }
        *patterns.entry(m).or_insert(0) += count;
    }
    let local_comp = Compressed {
        n_oe: comp.n_oe,
        patterns,
    };
    let found = exhaustive(&local_comp, &local, mode)?;
    let mut mask = 0u64;
    for (pos, &i) in top.iter().enumerate() {
        if found.mask & (1 << pos) != 0 {
            mask |= 1 << i;
        }
    }
    Some(Evaluated {
        mask,
        n_tp: found.n_tp,
        cost: found.cost,
    })
}

/// Selects a detector subset. Duplication columns are excluded from the
/// candidate pool: the baseline is compared against the monitors, not
/// mixed into them. Exhaustive and therefore optimal up to 20 candidates;
/// greedy with exhaustive refinement over the 20 best-scoring candidates
/// beyond that.
pub fn select_detectors(
    matrix: &DetectionMatrix,
    mode: SelectionMode,
) -> Result<SelectionOutcome> {
    match mode {
        SelectionMode::MaxDr { budget } => {
            if !budget.is_finite() && !budget.is_infinite() || budget.is_nan() || budget < 0.0 {
                return Err(Error::Config(format!(
                    "area budget must be non-negative, got {budget}"
                )));
            }
        }
        SelectionMode::MinArea { dr_target } => {
            if !dr_target.is_finite() || !(0.0..=1.0).contains(&dr_target) {
                return Err(Error::Config(format!(
                    "detection-rate target must lie in [0,1], got {dr_target}"
                )));
            }
        }
    }
    let columns = matrix.monitor_columns();
    if columns.is_empty() {
        return Err(Error::Config(
            "matrix has no monitor detectors to select from".into(),
        ));
    }
    if columns.len() > 64 {
        return Err(Error::Config(format!(
            "subset selection supports at most 64 detectors, got {}",
            columns.len()
        )));
    }
    let cands: Vec<Candidate> = columns
        .iter()
        .map(|&c| Candidate {
            column: c,
            id: matrix.detectors[c].id.clone(),
            cost: matrix.detectors[c].area,
        })
        .collect();
    let comp = compress(matrix, &columns);
    if comp.n_oe == 0 {
        return Err(Error::Undefined(
            "subset selection over zero observed errors".into(),
        ));
    }

    let best = if cands.len() <= 20 {
        exhaustive(&comp, &cands, mode)
    } else {
        let a = greedy(&comp, &cands, mode);
        let b = refined(&comp, &cands, mode);
        match (a, b) {
            (Some(a), Some(b)) => Some(match mode {
                SelectionMode::MaxDr { .. } => {
                    if better_max_dr(&cands, b, a) {
                        b
                    } else {
                        a
                    }
                }
                SelectionMode::MinArea { .. } => {
                    if better_min_area(&cands, b, a) {
                        b
                    } else {
                        a
                    }
                }
            }),
            (a, b) => a.or(b),
        }
    };

    let Some(found) = best else {
        let full: u64 = if cands.len() == 64 {
            u64::MAX
        } else {
            (1 << cands.len()) - 1
        };
        let max_dr = comp.n_tp(full) as f64 / comp.n_oe as f64;
        return Ok(SelectionOutcome::Infeasible { max_dr });
    };

    let chosen: Vec<usize> = cands
        .iter()
        .enumerate()
        .filter(|(i, _)| found.mask & (1 << i) != 0)
        .map(|(_, c)| c.column)
        .collect();
    let ids: Vec<String> = chosen
        .iter()
        .map(|&c| matrix.detectors[c].id.clone())
        .collect();
    let m = metrics(matrix, &chosen)?;
    Ok(SelectionOutcome::Selected(Selection {
        columns: chosen,
        ids,
        cost: found.cost,
        metrics: m,
    }))
}

/// One point of an area/detection trade-off sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub budget: f64,
    pub dr: f64,
    pub dr_to: f64,
    /// Ids of the subset realizing the point.
    pub ids: Vec<String>,
}

/// Sweeps `select_detectors` over ascending budgets. The returned
/// detection rates are non-decreasing: a budget that searches worse than
/// a smaller one (possible only in greedy mode) inherits the earlier
/// subset.
pub fn tradeoff_curve(matrix: &DetectionMatrix, budgets: &[f64]) -> Result<Vec<TradeoffPoint>> {
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("budgets must be sorted ascending".into()));
    }
    let mut points: Vec<TradeoffPoint> = Vec::with_capacity(budgets.len());
    let mut best: Option<TradeoffPoint> = None;
    for &budget in budgets {
        if !budget.is_finite() && !budget.is_infinite() || budget.is_nan() || budget < 0.0 {
            return Err(Error::Config(format!(
                "budgets must be non-negative, got {budget}"
            )));
        }
        let outcome = select_detectors(matrix, SelectionMode::MaxDr { budget })?;
        let SelectionOutcome::Selected(sel) = outcome else {
            unreachable!("max-dr selection always yields a subset");
        };
        let mut point = TradeoffPoint {
            budget,
            dr: sel.metrics.dr,
            dr_to: sel.metrics.dr_to,
            ids: sel.ids,
        };
        if let Some(prev) = &best {
            if prev.dr > point.dr {
                point.dr = prev.dr;
                point.dr_to = prev.dr_to;
                point.ids = prev.ids.clone();
            }
        }
        best = Some(point.clone());
        points.push(point);
    }
    Ok(points)
}

fn fmt_latency(latency: Option<f64>) -> String {
    latency.map(|l| l.to_string()).unwrap_or_default()
}

fn fmt_ids(ids: &[String]) -> String {
    if ids.is_empty() {
        "-".to_string()
    } else {
        ids.join("+")
    }
}

/// Writes the per-detector metrics report: one row per detector column,
/// then the union of all monitor (non-duplication) detectors as `all`.
pub fn write_metrics_report(matrix: &DetectionMatrix, mut out: impl Write) -> Result<()> {
    let mut rows: Vec<(String, f64, Vec<usize>)> = matrix
        .detectors
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.clone(), d.area, vec![i]))
        .collect();
    let union = matrix.monitor_columns();
    let union_cost = union
        .iter()
        .fold(0.0, |acc, &c| acc + matrix.detectors[c].area);
    rows.push(("all".to_string(), union_cost, union));

    writeln!(out, "subset,cost,dr,dr_to,latency,n_oe,n_tp")
        .map_err(|e| Error::io("<metrics report>", e))?;
    for (name, cost, columns) in rows {
        let m = metrics(matrix, &columns)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            name,
            cost,
            m.dr,
            m.dr_to,
            fmt_latency(m.latency),
            m.n_oe,
            m.n_tp
        )
        .map_err(|e| Error::io("<metrics report>", e))?;
    }
    Ok(())
}

/// Writes a trade-off sweep as CSV.
pub fn write_tradeoff_report(points: &[TradeoffPoint], mut out: impl Write) -> Result<()> {
    writeln!(out, "budget,dr,dr_to,subset").map_err(|e| Error::io("<tradeoff report>", e))?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.budget, p.dr, p.dr_to, fmt_ids(&p.ids))
            .map_err(|e| Error::io("<tradeoff report>", e))?;
    }
    Ok(())
}

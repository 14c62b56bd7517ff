//! Entity-level comparison of two or more systems: support-weighted group
//! means, winner counts, advantage rankings and system leaderboards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::labelspace::{CoarseGroup, EntityType};
use crate::scorer::MetricsReport;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("system {system} missing for entity {entity}")]
    MissingSystem { entity: String, system: String },
    #[error("group {0} has zero total support")]
    ZeroSupport(CoarseGroup),
    #[error("duplicate system {0}")]
    DuplicateSystem(String),
    #[error("duplicate entity {0}")]
    DuplicateEntity(String),
    #[error("no systems to compare")]
    Empty,
    #[error("unknown report format {0:?} (expected json, csv or markdown)")]
    UnknownFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityRow {
    pub entity: EntityType,
    pub group: CoarseGroup,
    pub support: u64,
    pub f1: BTreeMap<String, f64>,
}

impl EntityRow {
    pub fn f1_of(&self, system: &str) -> Result<f64, AnalysisError> {
        self.f1.get(system).copied().ok_or_else(|| AnalysisError::MissingSystem {
            entity: self.entity.to_string(),
            system: system.to_string(),
        })
    }
}

fn csv_error(row: usize, message: impl Into<String>) -> AnalysisError {
    AnalysisError::Csv {
        row,
        message: message.into(),
    }
}

fn parse_unit(row: usize, what: &str, text: &str) -> Result<f64, AnalysisError> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| csv_error(row, format!("{what} {text:?} is not a number")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(csv_error(row, format!("{what} {v} outside [0,1]")));
    }
    Ok(v)
}

/// Reads `entity,group,support,f1_<system>...` rows. Each `f1_` column
/// becomes a system named by the suffix.
pub fn read_entity_rows<R: Read>(reader: R) -> Result<Vec<EntityRow>, AnalysisError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers().map_err(|e| csv_error(0, e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_error(0, format!("missing column {name}")))
    };
    let (ei, gi, si) = (column("entity")?, column("group")?, column("support")?);
    let systems: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("f1_").map(|s| (i, s.to_string())))
        .collect();
    if systems.is_empty() {
        return Err(csv_error(0, "no f1_<system> columns"));
    }
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, record) in csv.records().enumerate() {
        let row = n + 1;
        let record = record.map_err(|e| csv_error(row, e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let entity = EntityType::new(field(ei)).map_err(|e| csv_error(row, e.to_string()))?;
        if !seen.insert(entity.clone()) {
            return Err(AnalysisError::DuplicateEntity(entity.to_string()));
        }
        let group = CoarseGroup::from_str(field(gi)).map_err(|e| csv_error(row, e.to_string()))?;
        let support = field(si)
            .parse()
            .map_err(|_| csv_error(row, format!("support {:?} is not a count", field(si))))?;
        let mut f1 = BTreeMap::new();
        for (i, system) in &systems {
            f1.insert(system.clone(), parse_unit(row, "f1", field(*i))?);
        }
        rows.push(EntityRow {
            entity,
            group,
            support,
            f1,
        });
    }
    Ok(rows)
}

pub fn load_entity_rows(path: &Path) -> Result<Vec<EntityRow>, AnalysisError> {
    let file = std::fs::File::open(path).map_err(|e| AnalysisError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_entity_rows(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Wins {
    pub a: u64,
    pub b: u64,
    pub ties: u64,
}

impl Wins {
    fn record(&mut self, fa: f64, fb: f64) {
        if fa > fb {
            self.a += 1;
        } else if fb > fa {
            self.b += 1;
        } else {
            self.ties += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupF1 {
    pub group: CoarseGroup,
    pub support: u64,
    pub f1: f64,
}

fn by_group(rows: &[EntityRow]) -> BTreeMap<CoarseGroup, Vec<&EntityRow>> {
    let mut groups: BTreeMap<CoarseGroup, Vec<&EntityRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(row.group).or_default().push(row);
    }
    groups
}

fn support_order<T>(items: &mut [T], key: impl Fn(&T) -> (u64, CoarseGroup)) {
    items.sort_by(|x, y| {
        let (sx, gx) = key(x);
        let (sy, gy) = key(y);
        sy.cmp(&sx).then_with(|| gx.as_str().cmp(gy.as_str()))
    });
}

/// Support-weighted mean F1 of `system` per coarse group, largest group first.
pub fn group_weighted_f1(rows: &[EntityRow], system: &str) -> Result<Vec<GroupF1>, AnalysisError> {
    let mut out = Vec::new();
    for (group, members) in by_group(rows) {
        let support: u64 = members.iter().map(|r| r.support).sum();
        if support == 0 {
            return Err(AnalysisError::ZeroSupport(group));
        }
        let mut weighted = 0.0;
        for r in &members {
            weighted += r.support as f64 * r.f1_of(system)?;
        }
        out.push(GroupF1 {
            group,
            support,
            f1: weighted / support as f64,
        });
    }
    support_order(&mut out, |g| (g.support, g.group));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinnerCounts {
    pub overall: Wins,
    pub per_group: BTreeMap<CoarseGroup, Wins>,
}

/// Strict per-entity comparison of two systems.
pub fn winner_counts(rows: &[EntityRow], a: &str, b: &str) -> Result<WinnerCounts, AnalysisError> {
    let mut overall = Wins::default();
    let mut per_group: BTreeMap<CoarseGroup, Wins> = BTreeMap::new();
    for row in rows {
        let (fa, fb) = (row.f1_of(a)?, row.f1_of(b)?);
        overall.record(fa, fb);
        per_group.entry(row.group).or_default().record(fa, fb);
    }
    Ok(WinnerCounts { overall, per_group })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub group: CoarseGroup,
    pub support: u64,
    pub f1_a: f64,
    pub f1_b: f64,
    /// `f1_a - f1_b`.
    pub delta: f64,
    pub wins: Wins,
}

/// The group comparison table of two systems, largest group first.
pub fn group_table(rows: &[EntityRow], a: &str, b: &str) -> Result<Vec<GroupRow>, AnalysisError> {
    let fa = group_weighted_f1(rows, a)?;
    let fb: BTreeMap<CoarseGroup, f64> = group_weighted_f1(rows, b)?.into_iter().map(|g| (g.group, g.f1)).collect();
    let wins = winner_counts(rows, a, b)?;
    Ok(fa
        .into_iter()
        .map(|g| GroupRow {
            group: g.group,
            support: g.support,
            f1_a: g.f1,
            f1_b: fb[&g.group],
            delta: g.f1 - fb[&g.group],
            wins: wins.per_group[&g.group],
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Favour {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Advantage {
    pub entity: EntityType,
    pub group: CoarseGroup,
    pub support: u64,
    pub f1_a: f64,
    pub f1_b: f64,
    /// Always `f1_a - f1_b`, whichever side is favoured.
    pub delta: f64,
}

/// Deltas are compared at 1e-9 so that values printed identically tie.
fn delta_key(delta: f64) -> i64 {
    (delta * 1e9).round() as i64
}

/// The `n` entities with the largest advantage for the favoured system.
/// Ties fall to larger support, then entity name.
pub fn top_advantage(
    rows: &[EntityRow],
    a: &str,
    b: &str,
    n: usize,
    favour: Favour,
) -> Result<Vec<Advantage>, AnalysisError> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let (fa, fb) = (row.f1_of(a)?, row.f1_of(b)?);
        out.push(Advantage {
            entity: row.entity.clone(),
            group: row.group,
            support: row.support,
            f1_a: fa,
            f1_b: fb,
            delta: fa - fb,
        });
    }
    let sign = match favour {
        Favour::A => 1,
        Favour::B => -1,
    };
    out.sort_by(|x, y| {
        (sign * delta_key(y.delta))
            .cmp(&(sign * delta_key(x.delta)))
            .then_with(|| y.support.cmp(&x.support))
            .then_with(|| x.entity.cmp(&y.entity))
    });
    out.truncate(n);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemEntry {
    pub name: String,
    pub category: String,
    /// Whether the system is an existing published comparator.
    pub published: bool,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SystemEntry {
    pub fn from_report(name: impl Into<String>, category: impl Into<String>, report: &MetricsReport) -> Self {
        Self {
            name: name.into(),
            category: category.into(),
            published: false,
            precision: report.micro.precision,
            recall: report.micro.recall,
            f1: report.micro.f1,
        }
    }
}

/// Reads `system,category,published,f1,precision,recall` rows.
pub fn read_system_table<R: Read>(reader: R) -> Result<Vec<SystemEntry>, AnalysisError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers().map_err(|e| csv_error(0, e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_error(0, format!("missing column {name}")))
    };
    let idx = [
        column("system")?,
        column("category")?,
        column("published")?,
        column("f1")?,
        column("precision")?,
        column("recall")?,
    ];
    let mut out = Vec::new();
    for (n, record) in csv.records().enumerate() {
        let row = n + 1;
        let record = record.map_err(|e| csv_error(row, e.to_string()))?;
        let field = |i: usize| record.get(idx[i]).unwrap_or("");
        let published = match field(2) {
            "true" => true,
            "false" => false,
            other => return Err(csv_error(row, format!("published {other:?} is not true/false"))),
        };
        out.push(SystemEntry {
            name: field(0).to_string(),
            category: field(1).to_string(),
            published,
            f1: parse_unit(row, "f1", field(3))?,
            precision: parse_unit(row, "precision", field(4))?,
            recall: parse_unit(row, "recall", field(5))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSummary {
    pub rank: usize,
    #[serde(flatten)]
    pub entry: SystemEntry,
    pub best_f1: bool,
    pub best_precision: bool,
    pub best_recall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub systems: Vec<SystemSummary>,
    /// Highest-F1 published system other than the leader.
    pub best_published: Option<String>,
    /// Leader F1 minus the best published F1.
    pub gap_to_best_published: Option<f64>,
}

/// Ranks systems by micro F1 (ties by name) and flags the best value of each metric.
pub fn compare_systems(entries: Vec<SystemEntry>) -> Result<Comparison, AnalysisError> {
    if entries.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut names = BTreeSet::new();
    for e in &entries {
        if !names.insert(e.name.as_str()) {
            return Err(AnalysisError::DuplicateSystem(e.name.clone()));
        }
    }
    let mut entries = entries;
    entries.sort_by(|x, y| y.f1.total_cmp(&x.f1).then_with(|| x.name.cmp(&y.name)));
    let max = |f: fn(&SystemEntry) -> f64| entries.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let (bf, bp, br) = (max(|e| e.f1), max(|e| e.precision), max(|e| e.recall));
    let leader_f1 = entries[0].f1;
    let best_published = entries.iter().skip(1).find(|e| e.published).cloned();
    let systems = entries
        .into_iter()
        .enumerate()
        .map(|(i, entry)| SystemSummary {
            rank: i + 1,
            best_f1: entry.f1 == bf,
            best_precision: entry.precision == bp,
            best_recall: entry.recall == br,
            entry,
        })
        .collect();
    Ok(Comparison {
        systems,
        gap_to_best_published: best_published.as_ref().map(|p| leader_f1 - p.f1),
        best_published: best_published.map(|p| p.name),
    })
}

/// Everything `analyze` computes for a pair of systems.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAnalysis {
    pub system_a: String,
    pub system_b: String,
    pub entities: usize,
    pub wins: Wins,
    pub groups: Vec<GroupRow>,
    pub top_a: Vec<Advantage>,
    pub top_b: Vec<Advantage>,
}

pub fn analyze_pair(rows: &[EntityRow], a: &str, b: &str, top_n: usize) -> Result<PairAnalysis, AnalysisError> {
    Ok(PairAnalysis {
        system_a: a.to_string(),
        system_b: b.to_string(),
        entities: rows.len(),
        wins: winner_counts(rows, a, b)?.overall,
        groups: group_table(rows, a, b)?,
        top_a: top_advantage(rows, a, b, top_n, Favour::A)?,
        top_b: top_advantage(rows, a, b, top_n, Favour::B)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = AnalysisError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(AnalysisError::UnknownFormat(other.to_string())),
        }
    }
}

impl ReportFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

/// Tables that can be serialized by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Tables {
    Pair(PairAnalysis),
    Systems(Comparison),
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Three decimals, halves rounded away from zero.
fn signed(x: f64) -> String {
    let magnitude = (x.abs() * 1000.0 + 1e-9).round() / 1000.0;
    format!("{}{magnitude:.3}", if x < 0.0 { "-" } else { "+" })
}

fn pair_csv(p: &PairAnalysis) -> String {
    let mut s = String::from("# groups\ngroup,support,f1_a,f1_b,delta,wins_a,wins_b\n");
    for g in &p.groups {
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.4},{:.4},{},{}",
            g.group, g.support, g.f1_a, g.f1_b, g.delta, g.wins.a, g.wins.b
        );
    }
    for (name, list) in [("top_a", &p.top_a), ("top_b", &p.top_b)] {
        let _ = writeln!(s, "# {name}\nentity,group,support,f1_a,f1_b,delta");
        for r in list {
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{:.4},{:.4}",
                r.entity, r.group, r.support, r.f1_a, r.f1_b, r.delta
            );
        }
    }
    s
}

fn advantage_md(s: &mut String, title: &str, p: &PairAnalysis, list: &[Advantage], favour: Favour) {
    let _ = writeln!(s, "\n## {title}\n");
    let _ = writeln!(s, "| Entity | Group | Supp. | {} | {} | Delta |", p.system_a, p.system_b);
    s.push_str("|---|---|---:|---:|---:|---:|\n");
    for r in list {
        let shown = match favour {
            Favour::A => r.delta,
            Favour::B => -r.delta,
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.4} | {:.4} | {} |",
            r.entity,
            r.group,
            thousands(r.support),
            r.f1_a,
            r.f1_b,
            signed(shown)
        );
    }
}

fn pair_markdown(p: &PairAnalysis) -> String {
    let mut s = format!("# {} vs {}\n\n", p.system_a, p.system_b);
    let _ = writeln!(
        s,
        "{} entity types: {} higher on {}, {} higher on {}, {} ties.",
        p.entities, p.system_a, p.wins.a, p.system_b, p.wins.b, p.wins.ties
    );
    let _ = writeln!(s, "\n## Coarse groups\n");
    let _ = writeln!(
        s,
        "| Group | Support | {} F1 | {} F1 | Delta | Wins {}/{} |",
        p.system_a, p.system_b, p.system_a, p.system_b
    );
    s.push_str("|---|---:|---:|---:|---:|---:|\n");
    for g in &p.groups {
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {:.4} | {} | {}/{} |",
            g.group,
            thousands(g.support),
            g.f1_a,
            g.f1_b,
            signed(g.delta),
            g.wins.a,
            g.wins.b
        );
    }
    advantage_md(&mut s, &format!("Largest {} advantage", p.system_a), p, &p.top_a, Favour::A);
    advantage_md(&mut s, &format!("Largest {} advantage", p.system_b), p, &p.top_b, Favour::B);
    s
}

fn systems_csv(c: &Comparison) -> String {
    let mut s = String::from("rank,system,category,published,f1,precision,recall,best_f1,best_precision,best_recall\n");
    for r in &c.systems {
        let e = &r.entry;
        let _ = writeln!(
            s,
            "{},{},{},{},{:.4},{:.4},{:.4},{},{},{}",
            r.rank, e.name, e.category, e.published, e.f1, e.precision, e.recall, r.best_f1, r.best_precision, r.best_recall
        );
    }
    s
}

fn systems_markdown(c: &Comparison) -> String {
    let bold = |x: f64, best: bool| {
        if best {
            format!("**{x:.4}**")
        } else {
            format!("{x:.4}")
        }
    };
    let mut s = String::from("| Rank | System | Category | F1 | P | R |\n|---:|---|---|---:|---:|---:|\n");
    for r in &c.systems {
        let e = &r.entry;
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            r.rank,
            e.name,
            e.category,
            bold(e.f1, r.best_f1),
            bold(e.precision, r.best_precision),
            bold(e.recall, r.best_recall)
        );
    }
    if let (Some(name), Some(gap)) = (&c.best_published, c.gap_to_best_published) {
        let _ = writeln!(s, "\nGap to best published system ({name}): {} F1", signed(gap));
    }
    s
}

/// Serializes tables deterministically.
pub fn render_report(tables: &Tables, format: ReportFormat) -> String {
    match (tables, format) {
        (t, ReportFormat::Json) => {
            let mut s = serde_json::to_string_pretty(t).expect("tables serialize");
            s.push('\n');
            s
        }
        (Tables::Pair(p), ReportFormat::Csv) => pair_csv(p),
        (Tables::Pair(p), ReportFormat::Markdown) => pair_markdown(p),
        (Tables::Systems(c), ReportFormat::Csv) => systems_csv(c),
        (Tables::Systems(c), ReportFormat::Markdown) => systems_markdown(c),
    }
}

/// Renders `tables` in `format` (a format name) and writes it to `out`.
pub fn emit_report(tables: &Tables, format: &str, out: &Path) -> Result<(), AnalysisError> {
    let format: ReportFormat = format.parse()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| AnalysisError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(out, render_report(tables, format)).map_err(|e| AnalysisError::Io {
        path: out.display().to_string(),
        source: e,
    })
}

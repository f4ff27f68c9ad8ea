//! Aggregate tables over audit output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::classify::{ConsistencyClass, ConsistencyRecord, FilterReason, PipelineCounts};
use crate::error::{Error, Result};
use crate::registry::{
    address_units, CountryCode, Family, Prefix, RegionMap, Registration, RirId, Status,
};
use crate::trie::DualStackTrie;

// ---------------------------------------------------------------------- ORO

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OroRow {
    pub prefix_count: usize,
    pub oro_prefix_count: usize,
    /// Registrations whose organization country is missing or unmapped.
    pub unknown_country_count: usize,
    pub address_units: f64,
    pub oro_address_units: f64,
}

impl OroRow {
    pub fn oro_prefix_fraction(&self) -> f64 {
        ratio(self.oro_prefix_count, self.prefix_count)
    }

    pub fn oro_unit_fraction(&self) -> f64 {
        if self.address_units > 0.0 {
            self.oro_address_units / self.address_units
        } else {
            0.0
        }
    }
}

/// Out-of-region owner statistics keyed by (family, registry).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OroStats {
    pub rows: BTreeMap<(Family, RirId), OroRow>,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Whether the organization lives outside the registering region; `None`
/// when its country is unknown.
pub fn is_oro(reg: &Registration, map: &RegionMap) -> Option<bool> {
    reg.rir_org(map).map(|org| org != reg.rir_reg)
}

/// Units of each stored prefix not covered by a more specific stored prefix.
fn own_units<V>(trie: &DualStackTrie<V>) -> BTreeMap<Prefix, f64> {
    let mut own: BTreeMap<Prefix, f64> = trie.iter().map(|(p, _)| (p, address_units(&p))).collect();
    for (p, _) in trie.iter() {
        let covering = trie.covering(&p);
        // covering is least specific first and ends with p itself.
        if covering.len() >= 2 {
            let parent = covering[covering.len() - 2].0;
            *own.get_mut(&parent).expect("stored") -= address_units(&p);
        }
    }
    own
}

/// Counts per registry. Address units count every address once, under the
/// most specific registration holding it.
pub fn oro_stats(regs: &[Registration], map: &RegionMap) -> OroStats {
    let mut stats = OroStats::default();
    let mut tries: BTreeMap<(Family, RirId), DualStackTrie<bool>> = BTreeMap::new();
    for reg in regs {
        let key = (reg.prefix.family(), reg.rir_reg);
        let row = stats.rows.entry(key).or_default();
        row.prefix_count += 1;
        let oro = is_oro(reg, map);
        match oro {
            Some(true) => row.oro_prefix_count += 1,
            Some(false) => {}
            None => row.unknown_country_count += 1,
        }
        tries
            .entry(key)
            .or_default()
            .insert(reg.prefix, oro == Some(true));
    }
    for (key, trie) in &tries {
        let row = stats.rows.get_mut(key).expect("row exists");
        for (prefix, units) in own_units(trie) {
            row.address_units += units;
            if *trie.get(&prefix).expect("stored") {
                row.oro_address_units += units;
            }
        }
    }
    stats
}

// ------------------------------------------------------------- distribution

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DistributionRow {
    pub family: Family,
    /// `None` for the all-registry row.
    pub rir: Option<RirId>,
    /// In [`ConsistencyClass::ALL`] order.
    pub counts: [usize; 5],
}

impl DistributionRow {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn fractions(&self) -> [f64; 5] {
        let total = self.total();
        self.counts.map(|c| ratio(c, total))
    }

    pub fn fraction(&self, class: ConsistencyClass) -> f64 {
        self.fractions()[class.index()]
    }
}

/// Class fractions per registry and family, with an aggregate row per
/// family. Rows with no classified record are left out.
pub fn distribution(records: &[ConsistencyRecord]) -> Vec<DistributionRow> {
    let mut rows = Vec::new();
    for family in [Family::V4, Family::V6] {
        let mut all = DistributionRow {
            family,
            rir: None,
            counts: [0; 5],
        };
        for rir in RirId::ALL {
            let mut row = DistributionRow {
                family,
                rir: Some(rir),
                counts: [0; 5],
            };
            for r in records
                .iter()
                .filter(|r| r.rir_reg == rir && r.prefix.family() == family)
            {
                if let Some(class) = r.class {
                    row.counts[class.index()] += 1;
                    all.counts[class.index()] += 1;
                }
            }
            if row.total() > 0 {
                rows.push(row);
            }
        }
        if all.total() > 0 {
            rows.push(all);
        }
    }
    rows
}

// ---------------------------------------------------------- characteristics

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Characteristics {
    /// class → counts in [`Status::ALL`] order.
    pub by_status: BTreeMap<ConsistencyClass, [usize; 3]>,
    /// class → last-updated year → count.
    pub by_year: BTreeMap<ConsistencyClass, BTreeMap<i32, usize>>,
    /// class → records whose registration has no usable date.
    pub undated: BTreeMap<ConsistencyClass, usize>,
    /// Classified records with no matching registration.
    pub unjoined: usize,
}

/// Class-by-status and class-by-year matrices, joined on prefix and
/// registry.
pub fn characteristics(records: &[ConsistencyRecord], regs: &[Registration]) -> Characteristics {
    let index: BTreeMap<(Prefix, RirId), &Registration> =
        regs.iter().map(|r| ((r.prefix, r.rir_reg), r)).collect();
    let mut out = Characteristics::default();
    for record in records {
        let Some(class) = record.class else { continue };
        let Some(reg) = index.get(&(record.prefix, record.rir_reg)) else {
            out.unjoined += 1;
            continue;
        };
        let status_idx = Status::ALL
            .iter()
            .position(|s| *s == reg.status)
            .expect("closed enum");
        out.by_status.entry(class).or_insert([0; 3])[status_idx] += 1;
        match reg.last_updated {
            Some(date) => {
                *out.by_year
                    .entry(class)
                    .or_default()
                    .entry(date.year())
                    .or_default() += 1
            }
            None => *out.undated.entry(class).or_default() += 1,
        }
    }
    out
}

// ------------------------------------------------------------------- geo DB

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoDbEntry {
    pub prefix: Prefix,
    pub country: CountryCode,
    pub provider: String,
}

/// Reads `prefix,country` CSV for one provider.
pub fn load_geodb(reader: impl std::io::Read, provider: &str) -> Result<Vec<GeoDbEntry>> {
    #[derive(Deserialize)]
    struct Row {
        prefix: String,
        country: String,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    for (idx, row) in rdr.deserialize::<Row>().enumerate() {
        let row =
            row.map_err(|e| Error::Config(format!("geodb {provider} row {}: {e}", idx + 1)))?;
        out.push(GeoDbEntry {
            prefix: crate::registry::parse_prefix(&row.prefix)?,
            country: row.country.parse()?,
            provider: provider.to_string(),
        });
    }
    Ok(out)
}

pub fn geodb_trie(entries: &[GeoDbEntry]) -> DualStackTrie<CountryCode> {
    entries.iter().map(|e| (e.prefix, e.country)).collect()
}

/// What counts as a provider agreeing with an inconsistency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionCriterion {
    /// Provider country maps to a registry other than the registering one.
    #[default]
    OutOfRegion,
    /// Additionally, that registry is among the feasible ones.
    SameRegion,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DetectionRow {
    pub provider: String,
    pub rir: RirId,
    pub inconsistent: usize,
    pub covered: usize,
    pub detected: usize,
}

impl DetectionRow {
    pub fn no_coverage(&self) -> usize {
        self.inconsistent - self.covered
    }

    pub fn fraction(&self) -> f64 {
        ratio(self.detected, self.covered)
    }
}

/// Address used for provider lookups: the first answering target, else the
/// prefix's network address.
fn lookup_addr(record: &ConsistencyRecord) -> IpAddr {
    record
        .targets
        .iter()
        .find(|t| t.class.is_some())
        .map(|t| t.target)
        .unwrap_or_else(|| record.prefix.network())
}

/// Per provider and registry, the share of RI/FI records the provider also
/// places outside the registering region.
pub fn geodb_detection(
    records: &[ConsistencyRecord],
    providers: &BTreeMap<String, DualStackTrie<CountryCode>>,
    map: &RegionMap,
    criterion: DetectionCriterion,
) -> Vec<DetectionRow> {
    let mut rows = Vec::new();
    for (name, trie) in providers {
        for rir in RirId::ALL {
            let mut row = DetectionRow {
                provider: name.clone(),
                rir,
                inconsistent: 0,
                covered: 0,
                detected: 0,
            };
            for r in records.iter().filter(|r| {
                r.rir_reg == rir && r.class.is_some_and(ConsistencyClass::is_inconsistent)
            }) {
                row.inconsistent += 1;
                let Some((_, country)) = trie.longest_match(&lookup_addr(r)) else {
                    continue;
                };
                row.covered += 1;
                let placed = map.rir_of(*country).ok();
                let hit = match criterion {
                    DetectionCriterion::OutOfRegion => placed.is_some_and(|p| p != r.rir_reg),
                    DetectionCriterion::SameRegion => {
                        placed.is_some_and(|p| p != r.rir_reg && r.rir_geo.contains(&p))
                    }
                };
                if hit {
                    row.detected += 1;
                }
            }
            if row.inconsistent > 0 {
                rows.push(row);
            }
        }
    }
    rows
}

// ------------------------------------------------------------------ leasing

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LeasingRow {
    pub rir: RirId,
    pub class: ConsistencyClass,
    pub total: usize,
    pub leased: usize,
}

impl LeasingRow {
    pub fn fraction(&self) -> f64 {
        ratio(self.leased, self.total)
    }
}

/// Share of RI and FI records whose prefix equals, contains, or lies inside
/// a leased prefix.
pub fn leasing_overlap(records: &[ConsistencyRecord], leased: &[Prefix]) -> Vec<LeasingRow> {
    let trie: DualStackTrie<()> = leased.iter().map(|p| (*p, ())).collect();
    let mut rows = Vec::new();
    for rir in RirId::ALL {
        for class in [ConsistencyClass::RI, ConsistencyClass::FI] {
            let matching: Vec<&ConsistencyRecord> = records
                .iter()
                .filter(|r| r.rir_reg == rir && r.class == Some(class))
                .collect();
            if matching.is_empty() {
                continue;
            }
            rows.push(LeasingRow {
                rir,
                class,
                total: matching.len(),
                leased: matching.iter().filter(|r| trie.overlaps(&r.prefix)).count(),
            });
        }
    }
    rows
}

// -------------------------------------------------------------------- flows

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FlowEdge {
    pub source_rir: RirId,
    pub dest_rir: RirId,
    pub count: usize,
}

/// Registering registry to organization registry, over all registrations
/// with a known organization region.
pub fn org_flows(regs: &[Registration], map: &RegionMap) -> Vec<FlowEdge> {
    let mut counts: BTreeMap<(RirId, RirId), usize> = BTreeMap::new();
    for reg in regs {
        if let Some(org) = reg.rir_org(map) {
            *counts.entry((reg.rir_reg, org)).or_default() += 1;
        }
    }
    edges(counts)
}

/// Registering registry to each feasible foreign registry, for RI and FI
/// records.
pub fn geo_flows(records: &[ConsistencyRecord]) -> Vec<FlowEdge> {
    let mut counts: BTreeMap<(RirId, RirId), usize> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.class.is_some_and(ConsistencyClass::is_inconsistent))
    {
        for dest in r.rir_geo.iter().filter(|d| **d != r.rir_reg) {
            *counts.entry((r.rir_reg, *dest)).or_default() += 1;
        }
    }
    edges(counts)
}

fn edges(counts: BTreeMap<(RirId, RirId), usize>) -> Vec<FlowEdge> {
    counts
        .into_iter()
        .map(|((source_rir, dest_rir), count)| FlowEdge {
            source_rir,
            dest_rir,
            count,
        })
        .collect()
}

// ------------------------------------------------------------------ writers

/// A table rendered both as CSV and as aligned text.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: &str, headers: &[&str]) -> Self {
        Table {
            title: title.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record(&self.headers).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{c:<w$}", w = widths[i]))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = format!("{}\n{}\n", self.title, line(&self.headers));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&line(&rule));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

fn rir_label(rir: Option<RirId>) -> String {
    rir.map_or_else(|| "ALL".to_string(), |r| r.as_str().to_string())
}

pub fn oro_table(stats: &OroStats) -> Table {
    let mut t = Table::new(
        "Out-of-region owners",
        &[
            "family",
            "rir",
            "prefixes",
            "oro_prefixes",
            "oro_prefix_pct",
            "unknown_country",
            "units",
            "oro_units",
            "oro_unit_pct",
        ],
    );
    for ((family, rir), row) in &stats.rows {
        t.push(vec![
            family.to_string(),
            rir.as_str().into(),
            row.prefix_count.to_string(),
            row.oro_prefix_count.to_string(),
            pct(row.oro_prefix_fraction()),
            row.unknown_country_count.to_string(),
            format!("{:.2}", row.address_units),
            format!("{:.2}", row.oro_address_units),
            pct(row.oro_unit_fraction()),
        ]);
    }
    t
}

pub fn distribution_table(rows: &[DistributionRow]) -> Table {
    let mut t = Table::new(
        "Consistency distribution (%)",
        &["family", "rir", "total", "FC", "OC", "OI", "RI", "FI"],
    );
    for row in rows {
        let mut cells = vec![
            row.family.to_string(),
            rir_label(row.rir),
            row.total().to_string(),
        ];
        cells.extend(row.fractions().iter().map(|f| pct(*f)));
        t.push(cells);
    }
    t
}

pub fn pipeline_table(counts: &PipelineCounts) -> Table {
    let mut t = Table::new("Filtering pipeline", &["stage", "removed", "remaining"]);
    let mut remaining = counts.candidates;
    t.push(vec!["candidates".into(), "".into(), remaining.to_string()]);
    for reason in FilterReason::ALL {
        let removed = counts.removed_by(reason);
        remaining -= removed;
        t.push(vec![
            reason.as_str().into(),
            removed.to_string(),
            remaining.to_string(),
        ]);
    }
    t
}

pub fn status_table(c: &Characteristics) -> Table {
    let mut headers = vec!["class"];
    headers.extend(Status::ALL.iter().map(|s| s.as_str()));
    let mut t = Table::new("Class by allocation status", &headers);
    for (class, counts) in &c.by_status {
        let mut cells = vec![class.to_string()];
        cells.extend(counts.iter().map(usize::to_string));
        t.push(cells);
    }
    t
}

pub fn year_table(c: &Characteristics) -> Table {
    let mut t = Table::new("Class by last-updated year", &["class", "year", "count"]);
    for (class, years) in &c.by_year {
        for (year, n) in years {
            t.push(vec![class.to_string(), year.to_string(), n.to_string()]);
        }
    }
    for (class, n) in &c.undated {
        t.push(vec![class.to_string(), "unknown".into(), n.to_string()]);
    }
    t
}

pub fn detection_table(rows: &[DetectionRow]) -> Table {
    let mut t = Table::new(
        "Geolocation database detection",
        &[
            "provider",
            "rir",
            "inconsistent",
            "covered",
            "detected",
            "detected_pct",
        ],
    );
    for r in rows {
        t.push(vec![
            r.provider.clone(),
            r.rir.as_str().into(),
            r.inconsistent.to_string(),
            r.covered.to_string(),
            r.detected.to_string(),
            pct(r.fraction()),
        ]);
    }
    t
}

pub fn leasing_table(rows: &[LeasingRow]) -> Table {
    let mut t = Table::new(
        "Leasing overlap",
        &["rir", "class", "total", "leased", "leased_pct"],
    );
    for r in rows {
        t.push(vec![
            r.rir.as_str().into(),
            r.class.to_string(),
            r.total.to_string(),
            r.leased.to_string(),
            pct(r.fraction()),
        ]);
    }
    t
}

pub fn flow_table(title: &str, edges: &[FlowEdge]) -> Table {
    let mut t = Table::new(title, &["source_rir", "dest_rir", "count"]);
    for e in edges {
        t.push(vec![
            e.source_rir.as_str().into(),
            e.dest_rir.as_str().into(),
            e.count.to_string(),
        ]);
    }
    t
}

/// Optional inputs for [`write_reports`].
#[derive(Default)]
pub struct ReportInputs<'a> {
    pub records: &'a [ConsistencyRecord],
    pub regs: Option<&'a [Registration]>,
    pub geodb: BTreeMap<String, DualStackTrie<CountryCode>>,
    pub leased: Option<Vec<Prefix>>,
    pub criterion: DetectionCriterion,
}

/// Writes one CSV per table plus `summary.txt`. Returns the written paths
/// and notices about skipped tables.
pub fn write_reports(
    dir: &Path,
    inputs: &ReportInputs<'_>,
    map: &RegionMap,
) -> Result<(Vec<PathBuf>, Vec<String>)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tables: Vec<(&str, Table)> = vec![
        (
            "pipeline",
            pipeline_table(&PipelineCounts::from_records(inputs.records)),
        ),
        (
            "distribution",
            distribution_table(&distribution(inputs.records)),
        ),
        (
            "flows_geo",
            flow_table(
                "Inconsistent flows (registry to feasible region)",
                &geo_flows(inputs.records),
            ),
        ),
    ];
    let mut notices = Vec::new();
    match inputs.regs {
        Some(regs) => {
            let c = characteristics(inputs.records, regs);
            tables.push(("oro", oro_table(&oro_stats(regs, map))));
            tables.push(("status", status_table(&c)));
            tables.push(("age", year_table(&c)));
            tables.push((
                "flows_org",
                flow_table("Registry to organization region", &org_flows(regs, map)),
            ));
        }
        None => notices
            .push("no registrations given: skipping ORO and characteristics tables".to_string()),
    }
    if inputs.geodb.is_empty() {
        notices.push("no geolocation databases given: skipping detection table".to_string());
    } else {
        let rows = geodb_detection(inputs.records, &inputs.geodb, map, inputs.criterion);
        tables.push(("geodb_detection", detection_table(&rows)));
    }
    match &inputs.leased {
        Some(leased) => tables.push((
            "leasing",
            leasing_table(&leasing_overlap(inputs.records, leased)),
        )),
        None => notices.push("no leased prefix list given: skipping leasing table".to_string()),
    }
    let mut written = Vec::new();
    let mut summary = String::new();
    for (name, table) in &tables {
        let path = dir.join(format!("{name}.csv"));
        std::fs::write(&path, table.to_csv()?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        let _ = writeln!(summary, "{}", table.to_text());
    }
    for n in &notices {
        let _ = writeln!(summary, "note: {n}");
    }
    let path = dir.join("summary.txt");
    std::fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok((written, notices))
}

pub fn read_prefix_list(path: &Path) -> Result<Vec<Prefix>> {
    crate::jsonl::read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            crate::registry::parse_prefix(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::parse_prefix;
    use std::collections::BTreeSet;

    fn p(s: &str) -> Prefix {
        parse_prefix(s).unwrap()
    }

    fn reg(prefix: &str, rir: RirId, cc: Option<&str>) -> Registration {
        let mut r = Registration::new(p(prefix), rir);
        r.org_country = cc.map(|c| c.parse().unwrap());
        r
    }

    fn record(prefix: &str, rir: RirId, class: ConsistencyClass) -> ConsistencyRecord {
        ConsistencyRecord {
            prefix: p(prefix),
            rir_reg: rir,
            rir_org: Some(rir),
            org_country: None,
            rir_geo: [rir].into_iter().collect(),
            class: Some(class),
            filter_reason: None,
            alignment: None,
            flags: BTreeSet::new(),
            targets: vec![],
        }
    }

    #[test]
    fn oro_examples() {
        let map = RegionMap::nro_snapshot();
        assert_eq!(
            is_oro(&reg("10.0.0.0/24", RirId::Arin, Some("BR")), &map),
            Some(true)
        );
        assert_eq!(
            is_oro(&reg("10.0.0.0/24", RirId::Ripe, Some("DE")), &map),
            Some(false)
        );
        assert_eq!(is_oro(&reg("10.0.0.0/24", RirId::Ripe, None), &map), None);
    }

    #[test]
    fn units_count_each_address_once() {
        let map = RegionMap::nro_snapshot();
        let regs = vec![
            reg("10.0.0.0/16", RirId::Arin, Some("US")),
            reg("10.0.1.0/24", RirId::Arin, Some("BR")),
            reg("10.0.1.128/25", RirId::Arin, Some("US")),
        ];
        let stats = oro_stats(&regs, &map);
        let row = &stats.rows[&(Family::V4, RirId::Arin)];
        assert_eq!(row.prefix_count, 3);
        assert_eq!(row.oro_prefix_count, 1);
        assert!((row.address_units - 256.0).abs() < 1e-9);
        assert!((row.oro_address_units - 0.5).abs() < 1e-9);
    }

    #[test]
    fn all_fc_distribution() {
        let records: Vec<_> = (0..4)
            .map(|i| record(&format!("10.{i}.0.0/16"), RirId::Ripe, ConsistencyClass::FC))
            .collect();
        for row in distribution(&records) {
            assert_eq!(row.fractions(), [1.0, 0.0, 0.0, 0.0, 0.0]);
        }
        assert!(distribution(&[]).is_empty());
    }

    #[test]
    fn characteristics_status_and_empty() {
        let regs = vec![
            {
                let mut r = reg("10.0.0.0/16", RirId::Arin, None);
                r.status = Status::Assigned;
                r.last_updated = chrono::NaiveDate::from_ymd_opt(2015, 3, 1);
                r
            },
            {
                let mut r = reg("10.1.0.0/16", RirId::Arin, None);
                r.status = Status::Assigned;
                r
            },
        ];
        let records = vec![
            record("10.0.0.0/16", RirId::Arin, ConsistencyClass::FC),
            record("10.1.0.0/16", RirId::Arin, ConsistencyClass::FC),
        ];
        let c = characteristics(&records, &regs);
        assert_eq!(c.by_status[&ConsistencyClass::FC], [0, 2, 0]);
        assert_eq!(c.by_year[&ConsistencyClass::FC][&2015], 1);
        assert_eq!(c.undated[&ConsistencyClass::FC], 1);
        assert_eq!(characteristics(&[], &[]), Characteristics::default());
    }

    #[test]
    fn detection_examples() {
        let map = RegionMap::nro_snapshot();
        let records = vec![record("10.0.0.0/16", RirId::Arin, ConsistencyClass::RI)];
        let jp: DualStackTrie<CountryCode> = [(p("10.0.0.0/8"), "JP".parse().unwrap())]
            .into_iter()
            .collect();
        let us: DualStackTrie<CountryCode> = [(p("10.0.0.0/8"), "US".parse().unwrap())]
            .into_iter()
            .collect();
        let providers = BTreeMap::from([("jp".to_string(), jp), ("us".to_string(), us)]);
        let rows = geodb_detection(&records, &providers, &map, DetectionCriterion::OutOfRegion);
        assert_eq!(rows[0].fraction(), 1.0);
        assert_eq!(rows[1].fraction(), 0.0);
        // JP is APNIC, which is not in the record's feasible set.
        let strict = geodb_detection(&records, &providers, &map, DetectionCriterion::SameRegion);
        assert_eq!(strict[0].detected, 0);
    }

    #[test]
    fn leasing_examples() {
        let records = vec![record("10.0.1.0/24", RirId::Arin, ConsistencyClass::FI)];
        assert_eq!(leasing_overlap(&records, &[p("10.0.0.0/20")])[0].leased, 1);
        assert_eq!(leasing_overlap(&records, &[])[0].fraction(), 0.0);
    }

    #[test]
    fn text_table_alignment() {
        let mut t = Table::new("T", &["a", "bbb"]);
        t.push(vec!["xxxx".into(), "y".into()]);
        assert_eq!(t.to_text(), "T\na     bbb\n----  ---\nxxxx  y\n");
        assert_eq!(t.to_csv().unwrap(), "a,bbb\nxxxx,y\n");
    }
}

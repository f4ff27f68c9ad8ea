//! Bulk WHOIS ingestion.
//!
//! Dumps are blank-line separated records of `key: value` lines. Key names
//! differ between registries, so every lookup goes through a [`Dialect`]
//! loaded from a TOML table (see `data/dialects.toml` for the grammar).
//!
//! Net records become one [`Registration`] per CIDR block of their range.
//! Organization records are collected separately and joined afterwards by
//! [`link_organizations`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read};
use std::net::{IpAddr, Ipv4Addr};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::registry::{range_to_cidrs, CountryCode, Prefix, RegFlag, Registration, RirId, Status};

//------------ Dialect -------------------------------------------------------

/// Key synonyms for one registry's dump format.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialect {
    pub net_start: Vec<String>,
    pub org_start: Vec<String>,
    pub range: Vec<String>,
    pub status: Vec<String>,
    pub org_ref: Vec<String>,
    pub country: Vec<String>,
    pub updated: Vec<String>,
    pub handles: Vec<String>,
    pub transfer: Vec<String>,
    pub org_id: Vec<String>,
    pub org_country: Vec<String>,
    pub org_name: Vec<String>,
    pub not_managed: Vec<String>,
}

/// Dialects for all registries.
#[derive(Clone, Debug)]
pub struct DialectTable {
    dialects: BTreeMap<RirId, Dialect>,
}

const DEFAULT_DIALECTS: &str = include_str!("../data/dialects.toml");

impl DialectTable {
    pub fn bundled() -> Self {
        Self::from_toml_str(DEFAULT_DIALECTS).expect("bundled dialects are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Dialect> =
            toml::from_str(text).map_err(|e| Error::InvalidDialect(e.to_string()))?;
        let mut dialects = BTreeMap::new();
        for (name, dialect) in raw {
            let rir: RirId = name.parse()?;
            if dialect.net_start.is_empty() || dialect.range.is_empty() {
                return Err(Error::InvalidDialect(format!(
                    "{rir}: net_start and range must not be empty"
                )));
            }
            dialects.insert(rir, dialect);
        }
        Ok(DialectTable { dialects })
    }

    pub fn get(&self, rir: RirId) -> Result<&Dialect> {
        self.dialects.get(&rir).ok_or(Error::UnknownDialect(rir))
    }
}

//------------ RawRecord -----------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordKind {
    Net,
    Organization,
    Other,
}

/// One record as it appeared in the dump.
#[derive(Clone, Debug)]
pub struct RawRecord {
    pub kind: RecordKind,
    /// Attributes in file order; keys kept verbatim.
    pub attributes: Vec<(String, String)>,
    pub source_rir: RirId,
    /// First and last line numbers (1-based) of the record.
    pub source_line_span: (usize, usize),
}

impl RawRecord {
    /// All values of any of `keys`, case-insensitively, in file order.
    pub fn values<'a>(&'a self, keys: &'a [String]) -> impl Iterator<Item = &'a str> + 'a {
        self.attributes
            .iter()
            .filter(move |(k, _)| keys.iter().any(|want| want.eq_ignore_ascii_case(k)))
            .map(|(_, v)| v.as_str())
    }

    /// First value of the highest-priority key present.
    pub fn first<'a>(&'a self, keys: &'a [String]) -> Option<&'a str> {
        keys.iter().find_map(|want| {
            self.attributes
                .iter()
                .find(|(k, _)| want.eq_ignore_ascii_case(k))
                .map(|(_, v)| v.as_str())
        })
    }
}

/// Splits dump text into raw records.
pub fn split_records(text: &str, rir: RirId, dialect: &Dialect) -> Vec<RawRecord> {
    let mut records = Vec::new();
    let mut attrs: Vec<(String, String)> = Vec::new();
    let mut start = 0;
    let mut last = 0;
    let mut flush = |attrs: &mut Vec<(String, String)>, start, last| {
        if attrs.is_empty() {
            return;
        }
        let first_key = &attrs[0].0;
        let kind = if dialect
            .net_start
            .iter()
            .any(|k| k.eq_ignore_ascii_case(first_key))
        {
            RecordKind::Net
        } else if dialect
            .org_start
            .iter()
            .any(|k| k.eq_ignore_ascii_case(first_key))
        {
            RecordKind::Organization
        } else {
            RecordKind::Other
        };
        records.push(RawRecord {
            kind,
            attributes: std::mem::take(attrs),
            source_rir: rir,
            source_line_span: (start, last),
        });
    };
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            flush(&mut attrs, start, last);
            continue;
        }
        if line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let continuation = line.starts_with(' ') || line.starts_with('\t') || line.starts_with('+');
        if continuation {
            if let Some((_, value)) = attrs.last_mut() {
                let extra = line.trim_start_matches('+').trim();
                if !extra.is_empty() {
                    if !value.is_empty() {
                        value.push(' ');
                    }
                    value.push_str(extra);
                }
                last = lineno;
            }
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        if attrs.is_empty() {
            start = lineno;
        }
        attrs.push((key.trim().to_string(), value.trim().to_string()));
        last = lineno;
    }
    flush(&mut attrs, start, last);
    records
}

//------------ Organization & report -----------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Organization {
    pub org_id: String,
    pub country: Option<CountryCode>,
    pub name: Option<String>,
}

/// Counters collected while ingesting one or more dumps.
///
/// Accounting identity over net records:
/// `records_read + extra_split_blocks == registrations_emitted +
/// duplicates_dropped + not_managed_skipped + malformed_skipped`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub records_read: usize,
    pub org_records_read: usize,
    pub registrations_emitted: usize,
    pub duplicates_dropped: usize,
    pub not_managed_skipped: usize,
    pub malformed_skipped: usize,
    /// Records whose range needed more than one prefix.
    pub non_cidr_ranges_split: usize,
    /// Blocks beyond the first produced by split records.
    pub extra_split_blocks: usize,
    pub circular_refs_dropped: usize,
    pub duplicate_orgs: usize,
    pub unresolved_orgs: usize,
    /// Raw status spelling → canonical status.
    pub status_variants_seen: BTreeMap<String, Status>,
}

impl IngestReport {
    pub fn accounts_balance(&self) -> bool {
        self.records_read + self.extra_split_blocks
            == self.registrations_emitted
                + self.duplicates_dropped
                + self.not_managed_skipped
                + self.malformed_skipped
    }

    pub fn merge(&mut self, other: &IngestReport) {
        self.records_read += other.records_read;
        self.org_records_read += other.org_records_read;
        self.registrations_emitted += other.registrations_emitted;
        self.duplicates_dropped += other.duplicates_dropped;
        self.not_managed_skipped += other.not_managed_skipped;
        self.malformed_skipped += other.malformed_skipped;
        self.non_cidr_ranges_split += other.non_cidr_ranges_split;
        self.extra_split_blocks += other.extra_split_blocks;
        self.circular_refs_dropped += other.circular_refs_dropped;
        self.duplicate_orgs += other.duplicate_orgs;
        self.unresolved_orgs += other.unresolved_orgs;
        for (k, v) in &other.status_variants_seen {
            self.status_variants_seen.insert(k.clone(), *v);
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct IngestOptions {
    /// Snapshot date; later update stamps are discarded and flagged.
    pub dataset_date: Option<NaiveDate>,
}

//------------ Field parsing -------------------------------------------------

/// Canonical status of a raw status or NetType string.
pub fn normalize_status(raw: &str) -> Status {
    let folded: String = raw
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect::<String>()
        .to_lowercase();
    if folded.contains("alloc") {
        Status::Allocated
    } else if folded.contains("assign") {
        Status::Assigned
    } else {
        if !folded.is_empty() && !folded.contains("legacy") {
            log::debug!("unrecognized status {raw:?}");
        }
        Status::LegacyOrUnknown
    }
}

/// Pads an abbreviated IPv4 network ("200.7.84" → "200.7.84.0").
fn expand_v4(text: &str) -> Option<Ipv4Addr> {
    let parts: Vec<&str> = text.split('.').collect();
    if parts.is_empty() || parts.len() > 4 {
        return None;
    }
    let mut octets = [0u8; 4];
    for (i, part) in parts.iter().enumerate() {
        octets[i] = part.parse().ok()?;
    }
    Some(Ipv4Addr::from(octets))
}

fn parse_cidr_lenient(text: &str) -> Option<Prefix> {
    let (addr, len) = text.trim().split_once('/')?;
    let len: u8 = len.trim().parse().ok()?;
    let addr: IpAddr = match addr.parse() {
        Ok(a) => a,
        Err(_) => IpAddr::V4(expand_v4(addr.trim())?),
    };
    Prefix::new(addr, len).ok()
}

/// Interprets a range attribute: "start - end", one or more CIDRs, or a
/// single address.
/// Blocks of a range value, plus the original bounds when it was a range.
type ParsedRange = (Vec<Prefix>, Option<(IpAddr, IpAddr)>);

fn parse_range(value: &str) -> Option<ParsedRange> {
    let value = value.trim();
    if let Some((a, b)) = value.split_once(" - ").or_else(|| {
        if value.contains('/') {
            None
        } else {
            value.split_once('-')
        }
    }) {
        let start: IpAddr = a.trim().parse().ok()?;
        let end: IpAddr = b.trim().parse().ok()?;
        let blocks = range_to_cidrs(start, end).ok()?;
        return Some((blocks, Some((start, end))));
    }
    if value.contains('/') {
        let blocks: Option<Vec<Prefix>> = value.split(',').map(parse_cidr_lenient).collect();
        let mut blocks = blocks?;
        blocks.sort();
        blocks.dedup();
        return Some((blocks, None));
    }
    let addr: IpAddr = value.parse().ok()?;
    Some((vec![Prefix::host(addr)], None))
}

/// Extracts a date from an update stamp, ignoring leading tokens such as
/// the e-mail address in RPSL `changed:` lines.
pub fn parse_date(value: &str) -> Option<NaiveDate> {
    value.split_whitespace().rev().find_map(|token| {
        let token = token.trim_matches(|c: char| !c.is_ascii_alphanumeric());
        if token.len() >= 10 {
            if let Ok(d) = NaiveDate::parse_from_str(&token[..10], "%Y-%m-%d") {
                return Some(d);
            }
        }
        if token.len() == 8 && token.bytes().all(|b| b.is_ascii_digit()) {
            return NaiveDate::parse_from_str(token, "%Y%m%d").ok();
        }
        None
    })
}

fn parse_country(value: &str) -> Option<CountryCode> {
    value.trim().to_ascii_uppercase().parse().ok()
}

fn transfer_target(value: &str) -> Option<RirId> {
    let lower = value.to_ascii_lowercase();
    let at = lower.find("transferred to")?;
    let rest = &value[at + "transferred to".len()..];
    let token = rest
        .split(|c: char| c.is_whitespace() || c == ',' || c == '.')
        .find(|t| !t.is_empty())?;
    token.parse().ok()
}

fn is_not_managed(record: &RawRecord, markers: &[String]) -> bool {
    record.attributes.iter().any(|(k, v)| {
        markers.iter().any(|m| {
            let m = m.to_ascii_lowercase();
            k.eq_ignore_ascii_case(&m) || v.to_ascii_lowercase().contains(&m)
        })
    })
}

//------------ Record interpretation -----------------------------------------

enum NetOutcome {
    Blocks {
        regs: Vec<Registration>,
        status_raw: Option<String>,
    },
    NotManaged,
    Malformed,
}

fn interpret_net(record: &RawRecord, dialect: &Dialect, options: &IngestOptions) -> NetOutcome {
    if is_not_managed(record, &dialect.not_managed) {
        return NetOutcome::NotManaged;
    }
    let Some(range) = record.first(&dialect.range) else {
        return NetOutcome::Malformed;
    };
    let Some((blocks, source_range)) = parse_range(range) else {
        return NetOutcome::Malformed;
    };
    if blocks.is_empty() {
        return NetOutcome::Malformed;
    }
    let status_raw = record.first(&dialect.status).map(str::to_string);
    let status = status_raw
        .as_deref()
        .map(normalize_status)
        .unwrap_or(Status::LegacyOrUnknown);
    let org_id = record
        .first(&dialect.org_ref)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let inline_country = record.first(&dialect.country).and_then(parse_country);
    let mut flags = BTreeSet::new();
    let mut last_updated = record.values(&dialect.updated).filter_map(parse_date).max();
    match (last_updated, options.dataset_date) {
        (None, _) => {
            flags.insert(RegFlag::MissingDate);
        }
        (Some(d), Some(limit)) if d > limit => {
            last_updated = None;
            flags.insert(RegFlag::FutureDate);
        }
        _ => {}
    }
    for handle in record.values(&dialect.handles) {
        let handle = handle.trim();
        if !handle.is_empty() {
            flags.insert(RegFlag::Handle(handle.to_string()));
        }
    }
    if blocks.len() > 1 {
        flags.insert(RegFlag::SplitRange);
    }
    let transfer_to = record.values(&dialect.transfer).find_map(transfer_target);
    let regs = blocks
        .into_iter()
        .map(|prefix| Registration {
            prefix,
            rir_reg: record.source_rir,
            org_country: inline_country,
            org_id: org_id.clone(),
            status,
            last_updated,
            flags: flags.clone(),
            source_range,
            transfer_to: transfer_to.filter(|t| *t != record.source_rir),
        })
        .collect();
    NetOutcome::Blocks { regs, status_raw }
}

fn interpret_org(record: &RawRecord, dialect: &Dialect) -> Option<Organization> {
    let org_id = record.first(&dialect.org_id)?.trim();
    if org_id.is_empty() {
        return None;
    }
    Some(Organization {
        org_id: org_id.to_string(),
        country: record.first(&dialect.org_country).and_then(parse_country),
        name: record
            .first(&dialect.org_name)
            .map(|s| s.trim().to_string()),
    })
}

/// Newer update wins; ties go to the larger org id.
fn newer(a: &Registration, b: &Registration) -> bool {
    (a.last_updated, &a.org_id) > (b.last_updated, &b.org_id)
}

/// Output of [`parse_bulk_whois`].
#[derive(Clone, Debug, Default)]
pub struct ParsedDump {
    pub registrations: Vec<Registration>,
    pub organizations: Vec<Organization>,
    pub report: IngestReport,
}

/// Parses one registry's bulk dump.
///
/// Input bytes are decoded as UTF-8 with lossy replacement. Malformed
/// records are counted and skipped.
pub fn parse_bulk_whois(
    mut stream: impl Read,
    rir: RirId,
    dialects: &DialectTable,
    options: &IngestOptions,
) -> Result<ParsedDump> {
    let dialect = dialects.get(rir)?;
    let mut bytes = Vec::new();
    stream
        .read_to_end(&mut bytes)
        .map_err(Error::UnreadableStream)?;
    let text = String::from_utf8_lossy(&bytes);
    let records = split_records(&text, rir, dialect);

    let outcomes: Vec<Option<NetOutcome>> = records
        .par_iter()
        .map(|r| (r.kind == RecordKind::Net).then(|| interpret_net(r, dialect, options)))
        .collect();

    let mut report = IngestReport::default();
    let mut by_prefix: BTreeMap<Prefix, Registration> = BTreeMap::new();
    let mut orgs: BTreeMap<String, Organization> = BTreeMap::new();

    for (record, outcome) in records.iter().zip(outcomes) {
        match record.kind {
            RecordKind::Organization => {
                report.org_records_read += 1;
                if let Some(org) = interpret_org(record, dialect) {
                    if orgs.insert(org.org_id.clone(), org).is_some() {
                        report.duplicate_orgs += 1;
                    }
                }
            }
            RecordKind::Other => {}
            RecordKind::Net => {
                report.records_read += 1;
                match outcome.expect("net outcome") {
                    NetOutcome::NotManaged => report.not_managed_skipped += 1,
                    NetOutcome::Malformed => report.malformed_skipped += 1,
                    NetOutcome::Blocks { regs, status_raw } => {
                        if let Some(raw) = status_raw {
                            report
                                .status_variants_seen
                                .insert(raw.clone(), normalize_status(&raw));
                        }
                        if regs.len() > 1 {
                            report.non_cidr_ranges_split += 1;
                            report.extra_split_blocks += regs.len() - 1;
                        }
                        for reg in regs {
                            match by_prefix.get_mut(&reg.prefix) {
                                None => {
                                    by_prefix.insert(reg.prefix, reg);
                                }
                                Some(existing) => {
                                    report.duplicates_dropped += 1;
                                    if newer(&reg, existing) {
                                        *existing = reg;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    report.registrations_emitted = by_prefix.len();
    Ok(ParsedDump {
        registrations: by_prefix.into_values().collect(),
        organizations: orgs.into_values().collect(),
        report,
    })
}

/// Reads the dialect-appropriate dump from a buffered reader.
pub fn parse_bulk_whois_reader(
    reader: Box<dyn BufRead>,
    rir: RirId,
    dialects: &DialectTable,
    options: &IngestOptions,
) -> Result<ParsedDump> {
    parse_bulk_whois(reader, rir, dialects, options)
}

/// Joins organization countries onto registrations.
///
/// The organization's country takes precedence; an inline country is used
/// only when the organization lookup yields nothing. Returns the number of
/// org ids that did not resolve.
pub fn link_organizations(regs: &mut [Registration], orgs: &[Organization]) -> usize {
    let index: HashMap<&str, &Organization> = orgs.iter().map(|o| (o.org_id.as_str(), o)).collect();
    let mut unresolved = 0;
    for reg in regs.iter_mut() {
        if let Some(org_id) = &reg.org_id {
            match index.get(org_id.as_str()) {
                Some(org) => {
                    if let Some(cc) = org.country {
                        reg.org_country = Some(cc);
                    }
                }
                None => {
                    unresolved += 1;
                    reg.flags.insert(RegFlag::UnresolvedOrg);
                }
            }
        }
        if reg.org_country.is_none() {
            reg.flags.insert(RegFlag::NoOrgCountry);
        }
    }
    unresolved
}

/// Removes inter-RIR transfer annotations.
///
/// A record in RIR A that says its block moved to B is dropped. If B in
/// turn says the same block moved to A, the block is removed from both.
/// Returns the number of blocks removed as circular references.
pub fn drop_circular_transfers(by_rir: &mut BTreeMap<RirId, Vec<Registration>>) -> usize {
    let marks: BTreeSet<(Prefix, RirId, RirId)> = by_rir
        .values()
        .flatten()
        .filter_map(|r| r.transfer_to.map(|to| (r.prefix, r.rir_reg, to)))
        .collect();
    let mut circular: BTreeSet<(Prefix, RirId)> = BTreeSet::new();
    let mut count = 0;
    for (prefix, from, to) in &marks {
        if marks.contains(&(*prefix, *to, *from)) && from < to {
            circular.insert((*prefix, *from));
            circular.insert((*prefix, *to));
            count += 1;
        }
    }
    for (rir, regs) in by_rir.iter_mut() {
        regs.retain(|r| r.transfer_to.is_none() && !circular.contains(&(r.prefix, *rir)));
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::parse_prefix;

    const ARIN_SAMPLE: &str = "\
NetHandle:      NET-104-148-63-0-1
OrgID:          C05266659
Parent:         NET-104-148-0-0-1
NetName:        WEB-OMEGA-DO-BRASIL
NetRange:       104.148.63.0 - 104.148.63.255
CIDR:           104.148.63.0/24
NetType:        Reassigned
RegDate:        2015-03-04
Updated:        2015-03-04

OrgID:          C05266659
OrgName:        Web Omega do Brasil
Country:        BR
Updated:        2015-03-04
";

    fn arin(text: &str) -> ParsedDump {
        parse_bulk_whois(
            text.as_bytes(),
            RirId::Arin,
            &DialectTable::bundled(),
            &IngestOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn arin_record_with_org() {
        let mut dump = arin(ARIN_SAMPLE);
        assert_eq!(dump.registrations.len(), 1);
        let reg = &dump.registrations[0];
        assert_eq!(reg.prefix, parse_prefix("104.148.63.0/24").unwrap());
        assert_eq!(reg.org_id.as_deref(), Some("C05266659"));
        assert_eq!(reg.status, Status::Assigned);
        assert_eq!(dump.organizations.len(), 1);
        let unresolved = link_organizations(&mut dump.registrations, &dump.organizations);
        assert_eq!(unresolved, 0);
        assert_eq!(
            dump.registrations[0].org_country,
            Some("BR".parse().unwrap())
        );
        assert!(dump.report.accounts_balance());
    }

    #[test]
    fn not_managed_is_skipped() {
        let text = "\
inetnum:        193.0.0.0 - 193.0.7.255
netname:        NON-RIPE-NCC-MANAGED-ADDRESS-BLOCK
remarks:        not-managed-by RIPE NCC
status:         ALLOCATED UNSPECIFIED
";
        let dump = parse_bulk_whois(
            text.as_bytes(),
            RirId::Ripe,
            &DialectTable::bundled(),
            &IngestOptions::default(),
        )
        .unwrap();
        assert!(dump.registrations.is_empty());
        assert_eq!(dump.report.not_managed_skipped, 1);
        assert!(dump.report.accounts_balance());
    }

    #[test]
    fn identical_duplicates_collapse() {
        let rec =
            "NetHandle: NET-1\nNetRange: 10.0.0.0 - 10.0.0.255\nOrgID: A\nUpdated: 2020-01-01\n";
        let dump = arin(&format!("{rec}\n{rec}"));
        assert_eq!(dump.registrations.len(), 1);
        assert_eq!(dump.report.duplicates_dropped, 1);
        assert!(dump.report.accounts_balance());
    }

    #[test]
    fn duplicate_keeps_newest_then_larger_org() {
        let a =
            "NetHandle: N1\nNetRange: 10.0.0.0 - 10.0.0.255\nOrgID: LINODE\nUpdated: 2019-01-01\n";
        let b =
            "NetHandle: N2\nNetRange: 10.0.0.0 - 10.0.0.255\nOrgID: AKAMAI\nUpdated: 2023-01-01\n";
        let dump = arin(&format!("{a}\n{b}"));
        assert_eq!(dump.registrations[0].org_id.as_deref(), Some("AKAMAI"));
        let c = "NetHandle: N3\nNetRange: 10.0.0.0 - 10.0.0.255\nOrgID: ZED\nUpdated: 2023-01-01\n";
        let dump = arin(&format!("{b}\n{c}\n{a}"));
        assert_eq!(dump.registrations[0].org_id.as_deref(), Some("ZED"));
        assert_eq!(dump.report.duplicates_dropped, 2);
    }

    #[test]
    fn status_spellings() {
        assert_eq!(normalize_status("ASSIGNEd NON-PORTABLE"), Status::Assigned);
        assert_eq!(normalize_status("ASSIGNED PA"), Status::Assigned);
        assert_eq!(normalize_status("assigned"), Status::Assigned);
        assert_eq!(normalize_status("ALLOCATED PORTABLE"), Status::Allocated);
        assert_eq!(normalize_status("Direct Allocation"), Status::Allocated);
        assert_eq!(normalize_status("Reallocated"), Status::Allocated);
        assert_eq!(normalize_status("LEGACY"), Status::LegacyOrUnknown);
        assert_eq!(normalize_status(""), Status::LegacyOrUnknown);
        assert_eq!(normalize_status("something odd"), Status::LegacyOrUnknown);
    }

    #[test]
    fn non_power_of_two_range_splits() {
        let dump = arin("NetHandle: N\nNetRange: 10.0.0.0 - 10.0.0.11\nNetType: Direct Allocation\nOrgID: X\nUpdated: 2021-05-06\n");
        assert_eq!(dump.registrations.len(), 2);
        assert_eq!(dump.report.non_cidr_ranges_split, 1);
        assert_eq!(dump.report.extra_split_blocks, 1);
        let first = &dump.registrations[0];
        for reg in &dump.registrations {
            assert_eq!(reg.status, first.status);
            assert_eq!(reg.org_id, first.org_id);
            assert_eq!(reg.last_updated, first.last_updated);
            assert!(reg.flags.contains(&RegFlag::SplitRange));
        }
        assert!(dump.report.accounts_balance());
    }

    #[test]
    fn lacnic_abbreviated_cidr_and_dates() {
        let text = "inetnum: 200.7.84/23\nstatus: assigned\nowner: Example\nownerid: BR-EXAM-LACNIC\ncountry: BR\nchanged: 20240102\n";
        let dump = parse_bulk_whois(
            text.as_bytes(),
            RirId::Lacnic,
            &DialectTable::bundled(),
            &IngestOptions::default(),
        )
        .unwrap();
        let reg = &dump.registrations[0];
        assert_eq!(reg.prefix, parse_prefix("200.7.84.0/23").unwrap());
        assert_eq!(reg.org_country, Some("BR".parse().unwrap()));
        assert_eq!(reg.last_updated, NaiveDate::from_ymd_opt(2024, 1, 2));
        assert!(reg.handles().any(|h| h == "BR-EXAM-LACNIC"));
    }

    #[test]
    fn date_formats() {
        assert_eq!(
            parse_date("2024-10-01T12:00:00Z"),
            NaiveDate::from_ymd_opt(2024, 10, 1)
        );
        assert_eq!(
            parse_date("hostmaster@afrinic.net 20050101"),
            NaiveDate::from_ymd_opt(2005, 1, 1)
        );
        assert_eq!(
            parse_date("2015-03-04"),
            NaiveDate::from_ymd_opt(2015, 3, 4)
        );
        assert_eq!(parse_date("never"), None);
    }

    #[test]
    fn malformed_records_are_counted() {
        let dump = arin("NetHandle: N\nNetRange: banana\n\nNetHandle: M\nNetName: no range\n\nNetHandle: Q\nNetRange: 10.0.0.9 - 10.0.0.1\n");
        assert_eq!(dump.report.records_read, 3);
        assert_eq!(dump.report.malformed_skipped, 3);
        assert!(dump.registrations.is_empty());
        assert!(dump.report.accounts_balance());
    }

    #[test]
    fn future_date_is_discarded() {
        let options = IngestOptions {
            dataset_date: NaiveDate::from_ymd_opt(2024, 10, 1),
        };
        let dump = parse_bulk_whois(
            "NetHandle: N\nNetRange: 10.0.0.0 - 10.0.0.255\nUpdated: 2030-01-01\n".as_bytes(),
            RirId::Arin,
            &DialectTable::bundled(),
            &options,
        )
        .unwrap();
        let reg = &dump.registrations[0];
        assert_eq!(reg.last_updated, None);
        assert!(reg.flags.contains(&RegFlag::FutureDate));
    }

    #[test]
    fn linking_rules() {
        let p = parse_prefix("10.0.0.0/24").unwrap();
        let mut inline = Registration::new(p, RirId::Ripe);
        inline.org_country = Some("FR".parse().unwrap());
        let mut dangling = Registration::new(p, RirId::Ripe);
        dangling.org_id = Some("X".into());
        let mut linked = Registration::new(p, RirId::Ripe);
        linked.org_id = Some("O".into());
        linked.org_country = Some("DE".parse().unwrap());
        let orgs = vec![Organization {
            org_id: "O".into(),
            country: Some("NL".parse().unwrap()),
            name: None,
        }];
        let mut regs = vec![inline, dangling, linked];
        assert_eq!(link_organizations(&mut regs, &orgs), 1);
        assert_eq!(regs[0].org_country, Some("FR".parse().unwrap()));
        assert_eq!(regs[1].org_country, None);
        assert!(regs[1].flags.contains(&RegFlag::UnresolvedOrg));
        assert!(regs[1].flags.contains(&RegFlag::NoOrgCountry));
        assert_eq!(regs[2].org_country, Some("NL".parse().unwrap()));
    }

    fn marked(prefix: &str, rir: RirId, to: Option<RirId>) -> Registration {
        let mut r = Registration::new(parse_prefix(prefix).unwrap(), rir);
        r.transfer_to = to;
        r
    }

    #[test]
    fn circular_transfers() {
        let mut by_rir = BTreeMap::new();
        by_rir.insert(
            RirId::Arin,
            vec![
                marked("10.0.0.0/16", RirId::Arin, Some(RirId::Ripe)),
                marked("10.1.0.0/16", RirId::Arin, Some(RirId::Ripe)),
                marked("10.2.0.0/16", RirId::Arin, None),
            ],
        );
        by_rir.insert(
            RirId::Ripe,
            vec![
                marked("10.0.0.0/16", RirId::Ripe, Some(RirId::Arin)),
                marked("10.1.0.0/16", RirId::Ripe, None),
            ],
        );
        let dropped = drop_circular_transfers(&mut by_rir);
        assert_eq!(dropped, 1);
        let arin: Vec<String> = by_rir[&RirId::Arin]
            .iter()
            .map(|r| r.prefix.to_string())
            .collect();
        let ripe: Vec<String> = by_rir[&RirId::Ripe]
            .iter()
            .map(|r| r.prefix.to_string())
            .collect();
        assert_eq!(arin, vec!["10.2.0.0/16"]);
        assert_eq!(ripe, vec!["10.1.0.0/16"]);
    }

    #[test]
    fn no_transfers_is_identity() {
        let mut by_rir = BTreeMap::new();
        by_rir.insert(RirId::Apnic, vec![marked("10.0.0.0/8", RirId::Apnic, None)]);
        let before = by_rir.clone();
        assert_eq!(drop_circular_transfers(&mut by_rir), 0);
        assert_eq!(by_rir, before);
    }

    #[test]
    fn transfer_annotation_parsing() {
        assert_eq!(
            transfer_target("Early Registrations, Transferred to RIPE NCC"),
            Some(RirId::Ripe)
        );
        assert_eq!(
            transfer_target("transferred to AfriNIC."),
            Some(RirId::Afrinic)
        );
        assert_eq!(transfer_target("nothing here"), None);
    }

    #[test]
    fn unknown_dialect() {
        let table = DialectTable::from_toml_str(
            "[ARIN]\nnet_start=[\"NetHandle\"]\norg_start=[]\nrange=[\"NetRange\"]\nstatus=[]\norg_ref=[]\ncountry=[]\nupdated=[]\nhandles=[]\ntransfer=[]\norg_id=[]\norg_country=[]\norg_name=[]\nnot_managed=[]\n",
        )
        .unwrap();
        assert!(matches!(
            parse_bulk_whois(
                "".as_bytes(),
                RirId::Ripe,
                &table,
                &IngestOptions::default()
            ),
            Err(Error::UnknownDialect(RirId::Ripe))
        ));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let mut text = String::new();
        for i in 0..500u32 {
            text.push_str(&format!(
                "NetHandle: N{i}\nNetRange: 10.{}.{}.0 - 10.{}.{}.{}\nOrgID: O{}\nUpdated: 2020-01-{:02}\n\n",
                i / 256, i % 256, i / 256, i % 256, 100 + i % 100, i % 7, 1 + i % 28
            ));
        }
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| arin(&text).registrations)
        };
        assert_eq!(run(1), run(4));
    }
}

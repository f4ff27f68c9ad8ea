//! Core registry types: prefixes, country codes, RIRs and the country to RIR
//! region map.
//!
//! Addresses of both families are carried as `u128` with IPv4 occupying the
//! low 32 bits. A [`Prefix`] is always canonical: every bit past the mask
//! length is zero.

use std::collections::BTreeMap;
use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

//------------ Family --------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    V4,
    V6,
}

impl Family {
    /// Address width in bits.
    pub const fn width(self) -> u8 {
        match self {
            Family::V4 => 32,
            Family::V6 => 128,
        }
    }

    pub fn of(addr: &IpAddr) -> Family {
        match addr {
            IpAddr::V4(_) => Family::V4,
            IpAddr::V6(_) => Family::V6,
        }
    }

    /// Largest representable address value.
    pub const fn max_raw(self) -> u128 {
        match self {
            Family::V4 => u32::MAX as u128,
            Family::V6 => u128::MAX,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::V4 => "IPv4",
            Family::V6 => "IPv6",
        })
    }
}

/// Splits an address into its family and raw integer value.
pub fn addr_to_raw(addr: IpAddr) -> (Family, u128) {
    match addr {
        IpAddr::V4(a) => (Family::V4, u32::from(a) as u128),
        IpAddr::V6(a) => (Family::V6, u128::from(a)),
    }
}

pub fn raw_to_addr(family: Family, raw: u128) -> IpAddr {
    match family {
        Family::V4 => IpAddr::V4(Ipv4Addr::from(raw as u32)),
        Family::V6 => IpAddr::V6(Ipv6Addr::from(raw)),
    }
}

/// Mask of the host bits for a prefix of `len` within `family`.
fn host_mask(family: Family, len: u8) -> u128 {
    let host_bits = u32::from(family.width() - len);
    if host_bits == 128 {
        u128::MAX
    } else {
        (1u128 << host_bits) - 1
    }
}

//------------ Prefix --------------------------------------------------------

/// A canonical address block.
///
/// Ordering is address order: family first, then network address, then
/// shorter masks before longer ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    family: Family,
    bits: u128,
    len: u8,
}

impl Prefix {
    /// Builds a prefix, rejecting set host bits and out-of-range lengths.
    pub fn new(addr: IpAddr, len: u8) -> Result<Self> {
        let (family, bits) = addr_to_raw(addr);
        Self::from_raw(family, bits, len).map_err(|reason| Error::MalformedPrefix {
            text: format!("{addr}/{len}"),
            reason,
        })
    }

    /// Builds a prefix, clearing any host bits.
    pub fn truncating(addr: IpAddr, len: u8) -> Result<Self> {
        let (family, bits) = addr_to_raw(addr);
        if len > family.width() {
            return Err(Error::MalformedPrefix {
                text: format!("{addr}/{len}"),
                reason: "length out of range",
            });
        }
        Ok(Prefix {
            family,
            bits: bits & !host_mask(family, len),
            len,
        })
    }

    pub(crate) fn from_raw(
        family: Family,
        bits: u128,
        len: u8,
    ) -> std::result::Result<Self, &'static str> {
        if len > family.width() {
            return Err("length out of range");
        }
        if bits > family.max_raw() {
            return Err("address out of range");
        }
        if bits & host_mask(family, len) != 0 {
            return Err("host bits set beyond mask");
        }
        Ok(Prefix { family, bits, len })
    }

    /// The full address space of a family.
    pub fn root(family: Family) -> Self {
        Prefix {
            family,
            bits: 0,
            len: 0,
        }
    }

    /// Single-address prefix (/32 or /128).
    pub fn host(addr: IpAddr) -> Self {
        let (family, bits) = addr_to_raw(addr);
        Prefix {
            family,
            bits,
            len: family.width(),
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    /// Whether this prefix has a zero-length mask.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Raw network address value.
    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn network(&self) -> IpAddr {
        raw_to_addr(self.family, self.bits)
    }

    pub fn first_raw(&self) -> u128 {
        self.bits
    }

    pub fn last_raw(&self) -> u128 {
        self.bits | host_mask(self.family, self.len)
    }

    pub fn last(&self) -> IpAddr {
        raw_to_addr(self.family, self.last_raw())
    }

    /// Bit `index` counted from the most significant bit of the address.
    pub fn bit(&self, index: u8) -> bool {
        bit_of(self.family, self.bits, index)
    }

    pub fn contains_addr(&self, addr: &IpAddr) -> bool {
        let (family, raw) = addr_to_raw(*addr);
        family == self.family && raw & !host_mask(family, self.len) == self.bits
    }

    /// True if `other` is equal to or more specific than `self`.
    pub fn contains(&self, other: &Prefix) -> bool {
        self.family == other.family
            && other.len >= self.len
            && other.bits & !host_mask(self.family, self.len) == self.bits
    }

    /// True if either prefix contains the other.
    pub fn overlaps(&self, other: &Prefix) -> bool {
        self.contains(other) || other.contains(self)
    }

    /// The enclosing prefix of the given shorter length.
    pub fn supernet(&self, len: u8) -> Prefix {
        debug_assert!(len <= self.len);
        Prefix {
            family: self.family,
            bits: self.bits & !host_mask(self.family, len),
            len,
        }
    }
}

pub(crate) fn bit_of(family: Family, raw: u128, index: u8) -> bool {
    let shift = u32::from(family.width() - 1 - index);
    (raw >> shift) & 1 == 1
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network(), self.len)
    }
}

impl FromStr for Prefix {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        parse_prefix(text)
    }
}

impl Serialize for Prefix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Prefix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses CIDR notation into a canonical prefix.
pub fn parse_prefix(text: &str) -> Result<Prefix> {
    let malformed = |reason| Error::MalformedPrefix {
        text: text.to_string(),
        reason,
    };
    let trimmed = text.trim();
    let (addr, len) = trimmed.split_once('/').ok_or(malformed("missing '/'"))?;
    let addr: IpAddr = addr.parse().map_err(|_| malformed("bad address"))?;
    if len.is_empty() || !len.bytes().all(|b| b.is_ascii_digit()) || len.len() > 3 {
        return Err(malformed("bad length"));
    }
    let len: u8 = len.parse().map_err(|_| malformed("bad length"))?;
    let (family, bits) = addr_to_raw(addr);
    Prefix::from_raw(family, bits, len).map_err(malformed)
}

/// Formats a prefix in CIDR notation.
pub fn format_prefix(prefix: &Prefix) -> String {
    prefix.to_string()
}

/// Minimal list of maximal canonical prefixes covering `[start, end]`.
pub fn range_to_cidrs(start: IpAddr, end: IpAddr) -> Result<Vec<Prefix>> {
    let (family, mut lo) = addr_to_raw(start);
    let (end_family, hi) = addr_to_raw(end);
    if family != end_family {
        return Err(Error::MixedFamily);
    }
    if lo > hi {
        return Err(Error::InvertedRange);
    }
    let width = family.width();
    let mut out = Vec::new();
    loop {
        // Largest block aligned at `lo`, shrunk until it fits below `hi`.
        let mut host_bits = (lo.trailing_zeros() as u8).min(width);
        while host_bits > 0 && lo | host_mask(family, width - host_bits) > hi {
            host_bits -= 1;
        }
        let block = Prefix {
            family,
            bits: lo,
            len: width - host_bits,
        };
        out.push(block);
        match block.last_raw().checked_add(1) {
            Some(next) if next <= hi => lo = next,
            _ => break,
        }
    }
    Ok(out)
}

/// Size of a prefix in /24 (IPv4) or /48 (IPv6) equivalents.
///
/// Every value is a power of two, so the `f64` is exact.
pub fn address_units(prefix: &Prefix) -> f64 {
    let unit_len = match prefix.family {
        Family::V4 => 24,
        Family::V6 => 48,
    };
    2f64.powi(unit_len - i32::from(prefix.len))
}

//------------ CountryCode ---------------------------------------------------

/// ISO 3166-1 alpha-2 code, uppercase.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn as_str(&self) -> &str {
        // Only ASCII uppercase letters are ever stored.
        std::str::from_utf8(&self.0).expect("ascii country code")
    }
}

impl FromStr for CountryCode {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bytes = text.as_bytes();
        if bytes.len() != 2 || !bytes.iter().all(u8::is_ascii_uppercase) {
            return Err(Error::InvalidCountryCode(text.to_string()));
        }
        Ok(CountryCode([bytes[0], bytes[1]]))
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CountryCode({})", self.as_str())
    }
}

impl Serialize for CountryCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CountryCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

//------------ RirId ---------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RirId {
    Arin,
    Ripe,
    Apnic,
    Lacnic,
    Afrinic,
}

impl RirId {
    pub const ALL: [RirId; 5] = [
        RirId::Arin,
        RirId::Ripe,
        RirId::Apnic,
        RirId::Lacnic,
        RirId::Afrinic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RirId::Arin => "ARIN",
            RirId::Ripe => "RIPE",
            RirId::Apnic => "APNIC",
            RirId::Lacnic => "LACNIC",
            RirId::Afrinic => "AFRINIC",
        }
    }

    /// Position in [`RirId::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RirId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RirId {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let norm: String = text
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        match norm.as_str() {
            "ARIN" => Ok(RirId::Arin),
            "RIPE" | "RIPENCC" => Ok(RirId::Ripe),
            "APNIC" => Ok(RirId::Apnic),
            "LACNIC" => Ok(RirId::Lacnic),
            "AFRINIC" => Ok(RirId::Afrinic),
            _ => Err(Error::UnknownRir(text.to_string())),
        }
    }
}

//------------ RegionMap -----------------------------------------------------

/// Country to RIR service-region mapping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMap {
    entries: BTreeMap<CountryCode, RirId>,
}

const NRO_SNAPSHOT: &str = include_str!("../data/region_map.csv");

/// Per-RIR country counts of the bundled snapshot, in [`RirId::ALL`] order.
pub const NRO_COUNTS: [usize; 5] = [29, 73, 54, 31, 57];

impl RegionMap {
    /// The bundled snapshot of the NRO service-region mapping.
    pub fn nro_snapshot() -> Self {
        Self::from_csv_str(NRO_SNAPSHOT).expect("bundled region map is valid")
    }

    /// Parses `country,rir` CSV text.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "country,rir" => {}
            _ => {
                return Err(Error::InvalidRegionMap(
                    "missing `country,rir` header".into(),
                ))
            }
        }
        let mut entries = BTreeMap::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |why: &str| Error::InvalidRegionMap(format!("line {}: {why}", idx + 1));
            let (cc, rir) = line
                .split_once(',')
                .ok_or_else(|| bad("expected two columns"))?;
            let cc: CountryCode = cc.trim().parse().map_err(|_| bad("bad country code"))?;
            let rir: RirId = rir.trim().parse().map_err(|_| bad("bad RIR"))?;
            if entries.insert(cc, rir).is_some() {
                return Err(bad("duplicate country"));
            }
        }
        Ok(RegionMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (CountryCode, RirId)>) -> Self {
        RegionMap {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn rir_of(&self, cc: CountryCode) -> Result<RirId> {
        self.entries
            .get(&cc)
            .copied()
            .ok_or(Error::UnknownCountry(cc))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count_for(&self, rir: RirId) -> usize {
        self.entries.values().filter(|r| **r == rir).count()
    }

    pub fn countries(&self) -> impl Iterator<Item = CountryCode> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CountryCode, RirId)> + '_ {
        self.entries.iter().map(|(c, r)| (*c, *r))
    }

    pub fn countries_of(&self, rir: RirId) -> impl Iterator<Item = CountryCode> + '_ {
        self.iter().filter(move |(_, r)| *r == rir).map(|(c, _)| c)
    }

    /// Checks the per-RIR totals against the NRO counts.
    pub fn validate_nro_counts(&self) -> Result<()> {
        for (rir, want) in RirId::ALL.iter().zip(NRO_COUNTS) {
            let got = self.count_for(*rir);
            if got != want {
                return Err(Error::InvalidRegionMap(format!(
                    "{rir} has {got} countries, expected {want}"
                )));
            }
        }
        Ok(())
    }
}

/// Looks up the RIR responsible for a country.
pub fn rir_of_country(cc: CountryCode, map: &RegionMap) -> Result<RirId> {
    map.rir_of(cc)
}

//------------ Registration --------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Allocated,
    Assigned,
    LegacyOrUnknown,
}

impl Status {
    pub const ALL: [Status; 3] = [Status::Allocated, Status::Assigned, Status::LegacyOrUnknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Allocated => "allocated",
            Status::Assigned => "assigned",
            Status::LegacyOrUnknown => "legacy-or-unknown",
        }
    }
}

/// Annotations carried alongside a registration.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RegFlag {
    /// Block came from a range that needed several prefixes.
    SplitRange,
    /// The record named an organization that is not in the dump.
    UnresolvedOrg,
    /// No organization or inline country could be determined.
    NoOrgCountry,
    /// The update date lay after the dataset date and was discarded.
    FutureDate,
    MissingDate,
    /// A maintainer or handle value, kept for NIR matching.
    Handle(String),
}

impl fmt::Display for RegFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegFlag::SplitRange => f.write_str("split-range"),
            RegFlag::UnresolvedOrg => f.write_str("unresolved-org"),
            RegFlag::NoOrgCountry => f.write_str("no-org-country"),
            RegFlag::FutureDate => f.write_str("future-date"),
            RegFlag::MissingDate => f.write_str("missing-date"),
            RegFlag::Handle(h) => write!(f, "handle:{h}"),
        }
    }
}

impl From<RegFlag> for String {
    fn from(flag: RegFlag) -> String {
        flag.to_string()
    }
}

impl TryFrom<String> for RegFlag {
    type Error = String;

    fn try_from(text: String) -> std::result::Result<Self, String> {
        Ok(match text.as_str() {
            "split-range" => RegFlag::SplitRange,
            "unresolved-org" => RegFlag::UnresolvedOrg,
            "no-org-country" => RegFlag::NoOrgCountry,
            "future-date" => RegFlag::FutureDate,
            "missing-date" => RegFlag::MissingDate,
            other => match other.strip_prefix("handle:") {
                Some(h) => RegFlag::Handle(h.to_string()),
                None => return Err(format!("unknown flag {other:?}")),
            },
        })
    }
}

/// One normalized WHOIS prefix registration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub prefix: Prefix,
    #[serde(rename = "rir")]
    pub rir_reg: RirId,
    pub org_country: Option<CountryCode>,
    pub org_id: Option<String>,
    pub status: Status,
    pub last_updated: Option<NaiveDate>,
    pub flags: std::collections::BTreeSet<RegFlag>,
    /// Original start/end when the record was written as a range.
    #[serde(skip)]
    pub source_range: Option<(IpAddr, IpAddr)>,
    /// RIR this record says the block was transferred to.
    #[serde(skip)]
    pub transfer_to: Option<RirId>,
}

impl Registration {
    pub fn new(prefix: Prefix, rir_reg: RirId) -> Self {
        Registration {
            prefix,
            rir_reg,
            org_country: None,
            org_id: None,
            status: Status::LegacyOrUnknown,
            last_updated: None,
            flags: Default::default(),
            source_range: None,
            transfer_to: None,
        }
    }

    /// Maintainer/handle values recorded for this registration.
    pub fn handles(&self) -> impl Iterator<Item = &str> {
        self.flags.iter().filter_map(|f| match f {
            RegFlag::Handle(h) => Some(h.as_str()),
            _ => None,
        })
    }

    /// RIR of the organization's country, if it is known and mapped.
    pub fn rir_org(&self, map: &RegionMap) -> Option<RirId> {
        self.org_country.and_then(|cc| map.rir_of(cc).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ip(s: &str) -> IpAddr {
        s.parse().unwrap()
    }

    fn cc(s: &str) -> CountryCode {
        s.parse().unwrap()
    }

    #[test]
    fn nro_snapshot_counts() {
        let map = RegionMap::nro_snapshot();
        assert_eq!(map.len(), 244);
        map.validate_nro_counts().unwrap();
        let total: usize = RirId::ALL.iter().map(|r| map.count_for(*r)).sum();
        assert_eq!(total, 244);
    }

    #[test]
    fn country_lookups() {
        let map = RegionMap::nro_snapshot();
        assert_eq!(rir_of_country(cc("BR"), &map).unwrap(), RirId::Lacnic);
        assert_eq!(rir_of_country(cc("MU"), &map).unwrap(), RirId::Afrinic);
        assert_eq!(rir_of_country(cc("US"), &map).unwrap(), RirId::Arin);
        assert!(matches!(
            rir_of_country(cc("ZZ"), &map),
            Err(Error::UnknownCountry(_))
        ));
    }

    #[test]
    fn country_code_validation() {
        assert!("de".parse::<CountryCode>().is_err());
        assert!("DEU".parse::<CountryCode>().is_err());
        assert!("D1".parse::<CountryCode>().is_err());
        assert_eq!(cc("DE").to_string(), "DE");
    }

    #[test]
    fn region_map_rejects_bad_csv() {
        assert!(RegionMap::from_csv_str("cc,rir\nDE,RIPE\n").is_err());
        assert!(RegionMap::from_csv_str("country,rir\nDE,RIPE\nDE,ARIN\n").is_err());
        assert!(RegionMap::from_csv_str("country,rir\nDE,IANA\n").is_err());
        let map = RegionMap::from_csv_str("country,rir\nDE,RIPE\n").unwrap();
        assert!(map.validate_nro_counts().is_err());
    }

    #[test]
    fn parse_prefix_examples() {
        let p = parse_prefix("104.148.63.0/24").unwrap();
        assert_eq!(p.family(), Family::V4);
        assert_eq!(p.len(), 24);
        let all = parse_prefix("0.0.0.0/0").unwrap();
        assert_eq!(all, Prefix::root(Family::V4));
        assert!(all.contains_addr(&ip("255.255.255.255")));
        assert!(matches!(
            parse_prefix("10.0.0.1/24"),
            Err(Error::MalformedPrefix { .. })
        ));
    }

    #[test]
    fn parse_prefix_rejects_garbage() {
        for bad in [
            "10.0.0.0",
            "10.0.0.0/33",
            "10.0.0.0/",
            "x/8",
            "::/129",
            "10.0.0.0/+8",
        ] {
            assert!(parse_prefix(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_prefix("2001:db8::/32").unwrap().len(), 32);
        assert_eq!(parse_prefix("10.0.0.1/32").unwrap().len(), 32);
        assert_eq!(parse_prefix("::1/128").unwrap().len(), 128);
    }

    #[test]
    fn range_examples() {
        assert_eq!(
            range_to_cidrs(ip("104.148.63.0"), ip("104.148.63.255")).unwrap(),
            vec![parse_prefix("104.148.63.0/24").unwrap()]
        );
        assert_eq!(
            range_to_cidrs(ip("10.0.0.0"), ip("10.0.0.0")).unwrap(),
            vec![parse_prefix("10.0.0.0/32").unwrap()]
        );
        assert_eq!(
            range_to_cidrs(ip("10.0.0.0"), ip("10.0.0.11")).unwrap(),
            vec![
                parse_prefix("10.0.0.0/29").unwrap(),
                parse_prefix("10.0.0.8/30").unwrap()
            ]
        );
    }

    #[test]
    fn range_errors_and_extremes() {
        assert!(matches!(
            range_to_cidrs(ip("10.0.0.2"), ip("10.0.0.1")),
            Err(Error::InvertedRange)
        ));
        assert!(matches!(
            range_to_cidrs(ip("10.0.0.0"), ip("::1")),
            Err(Error::MixedFamily)
        ));
        assert_eq!(
            range_to_cidrs(ip("0.0.0.0"), ip("255.255.255.255")).unwrap(),
            vec![Prefix::root(Family::V4)]
        );
        assert_eq!(
            range_to_cidrs(ip("::"), ip("ffff:ffff:ffff:ffff:ffff:ffff:ffff:ffff")).unwrap(),
            vec![Prefix::root(Family::V6)]
        );
        let tail = range_to_cidrs(ip("255.255.255.254"), ip("255.255.255.255")).unwrap();
        assert_eq!(tail, vec![parse_prefix("255.255.255.254/31").unwrap()]);
    }

    #[test]
    fn units() {
        assert_eq!(address_units(&parse_prefix("10.0.0.0/16").unwrap()), 256.0);
        assert_eq!(address_units(&parse_prefix("10.0.0.0/26").unwrap()), 0.25);
        assert_eq!(
            address_units(&parse_prefix("2001:db8::/32").unwrap()),
            65536.0
        );
    }

    #[test]
    fn containment() {
        let a = parse_prefix("10.0.0.0/8").unwrap();
        let b = parse_prefix("10.1.0.0/16").unwrap();
        assert!(a.contains(&b));
        assert!(!b.contains(&a));
        assert!(a.contains(&a));
        assert!(a.overlaps(&b) && b.overlaps(&a));
        assert!(!a.contains(&parse_prefix("::/0").unwrap()));
    }

    #[test]
    fn reg_flag_strings() {
        for flag in [
            RegFlag::SplitRange,
            RegFlag::UnresolvedOrg,
            RegFlag::Handle("MAINT-JPNIC".into()),
        ] {
            let text = flag.to_string();
            assert_eq!(RegFlag::try_from(text).unwrap(), flag);
        }
        assert!(RegFlag::try_from("bogus".to_string()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_v4_prefix() -> impl Strategy<Value = Prefix> {
            (any::<u32>(), 0u8..=32)
                .prop_map(|(a, l)| Prefix::truncating(IpAddr::V4(Ipv4Addr::from(a)), l).unwrap())
        }

        fn any_v6_prefix() -> impl Strategy<Value = Prefix> {
            (any::<u128>(), 0u8..=128)
                .prop_map(|(a, l)| Prefix::truncating(IpAddr::V6(Ipv6Addr::from(a)), l).unwrap())
        }

        proptest! {
            #[test]
            fn format_parse_identity(p in prop_oneof![any_v4_prefix(), any_v6_prefix()]) {
                prop_assert_eq!(parse_prefix(&format_prefix(&p)).unwrap(), p);
            }

            #[test]
            fn prefix_range_is_itself(p in prop_oneof![any_v4_prefix(), any_v6_prefix()]) {
                prop_assert_eq!(range_to_cidrs(p.network(), p.last()).unwrap(), vec![p]);
            }

            #[test]
            fn range_cover_is_exact(start in any::<u32>(), span in 0u32..=(1 << 16)) {
                let end = start.saturating_add(span);
                let blocks = range_to_cidrs(
                    IpAddr::V4(Ipv4Addr::from(start)),
                    IpAddr::V4(Ipv4Addr::from(end)),
                ).unwrap();
                // Contiguous, ordered, covering exactly [start, end].
                let mut cursor = start as u128;
                for b in &blocks {
                    prop_assert_eq!(b.first_raw(), cursor);
                    cursor = b.last_raw() + 1;
                }
                prop_assert_eq!(cursor, end as u128 + 1);
            }
        }
    }
}

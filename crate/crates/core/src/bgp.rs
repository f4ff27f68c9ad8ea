//! Alignment of registered prefixes with a BGP routing table snapshot.
//!
//! The RIB arrives as normalized text, one `<prefix> <origin_asn>` pair per
//! line. MRT decoding happens upstream of this crate.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{parse_prefix, Family, Prefix, Registration, RirId};
use crate::trie::{DualStackTrie, Frozen};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BgpRoute {
    pub prefix: Prefix,
    pub origin_asns: BTreeSet<u32>,
}

impl BgpRoute {
    pub fn is_moas(&self) -> bool {
        self.origin_asns.len() > 1
    }
}

pub type Rib = Frozen<DualStackTrie<BgpRoute>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Alignment {
    Subnet,
    Aligned,
    Supernet,
    #[serde(rename = "MixedAS")]
    MixedAs,
    Unadvertised,
}

impl Alignment {
    /// Table order.
    pub const ALL: [Alignment; 5] = [
        Alignment::Subnet,
        Alignment::Aligned,
        Alignment::Supernet,
        Alignment::MixedAs,
        Alignment::Unadvertised,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Alignment::Subnet => "Subnet",
            Alignment::Aligned => "Aligned",
            Alignment::Supernet => "Supernet",
            Alignment::MixedAs => "MixedAS",
            Alignment::Unadvertised => "Unadvertised",
        }
    }

    /// Whether prefixes of this class proceed to the geo audit.
    pub fn is_auditable(self) -> bool {
        matches!(self, Alignment::Aligned | Alignment::Subnet)
    }
}

impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RibLoadStats {
    pub lines: usize,
    pub routes: usize,
    pub malformed: usize,
    pub default_routes_dropped: usize,
}

fn parse_asn(text: &str) -> Option<u32> {
    let t = text.trim();
    let t = t
        .strip_prefix("AS")
        .or_else(|| t.strip_prefix("as"))
        .unwrap_or(t);
    t.parse().ok()
}

/// Loads `<prefix> <origin_asn>` lines into a frozen trie.
///
/// Repeated prefixes merge their origins. `#` starts a comment. Default
/// routes are dropped.
pub fn load_rib(stream: impl BufRead) -> Result<(Rib, RibLoadStats)> {
    let mut trie: DualStackTrie<BgpRoute> = DualStackTrie::new();
    let mut stats = RibLoadStats::default();
    for line in stream.lines() {
        let line = line.map_err(Error::UnreadableStream)?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        stats.lines += 1;
        let mut fields = content.split_whitespace();
        let parsed = match (fields.next(), fields.next(), fields.next()) {
            (Some(p), Some(a), None) => parse_prefix(p).ok().zip(parse_asn(a)),
            _ => None,
        };
        let Some((prefix, asn)) = parsed else {
            stats.malformed += 1;
            continue;
        };
        if prefix.is_empty() {
            stats.default_routes_dropped += 1;
            continue;
        }
        match trie.get_mut(&prefix) {
            Some(route) => {
                route.origin_asns.insert(asn);
            }
            None => {
                trie.insert(
                    prefix,
                    BgpRoute {
                        prefix,
                        origin_asns: BTreeSet::from([asn]),
                    },
                );
            }
        }
    }
    stats.routes = trie.len();
    Ok((trie.freeze(), stats))
}

/// Classifies a registered prefix against the routing table.
///
/// Precedence: exact route, then a covering route, then contained routes.
pub fn align(whois_prefix: &Prefix, rib: &DualStackTrie<BgpRoute>) -> Alignment {
    let covering = rib.covering(whois_prefix);
    if covering.iter().any(|(p, _)| p == whois_prefix) {
        return Alignment::Aligned;
    }
    if !covering.is_empty() {
        return Alignment::Subnet;
    }
    let contained = rib.enumerate_contained(whois_prefix);
    if contained.is_empty() {
        return Alignment::Unadvertised;
    }
    let origins: BTreeSet<u32> = contained
        .iter()
        .flat_map(|(_, r)| r.origin_asns.iter().copied())
        .collect();
    if origins.len() == 1 {
        Alignment::Supernet
    } else {
        Alignment::MixedAs
    }
}

/// True when the exact route for `prefix` has several origins.
pub fn exact_moas(prefix: &Prefix, rib: &DualStackTrie<BgpRoute>) -> bool {
    rib.get(prefix).is_some_and(BgpRoute::is_moas)
}

/// Counts of alignment classes for one (family, RIR) group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentRow {
    pub family: Family,
    /// `None` for the all-registry row.
    pub rir: Option<RirId>,
    pub counts: [usize; 5],
}

impl AlignmentRow {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Fractions in [`Alignment::ALL`] order.
    pub fn fractions(&self) -> [f64; 5] {
        let total = self.total() as f64;
        self.counts
            .map(|c| if total > 0.0 { c as f64 / total } else { 0.0 })
    }

    pub fn fraction(&self, class: Alignment) -> f64 {
        self.fractions()[class.index()]
    }
}

/// Per-RIR alignment distribution, per family, with an all-RIR row.
pub fn alignment_table(regs: &[Registration], rib: &DualStackTrie<BgpRoute>) -> Vec<AlignmentRow> {
    let mut rows = Vec::new();
    for family in [Family::V4, Family::V6] {
        let mut all = AlignmentRow {
            family,
            rir: None,
            counts: [0; 5],
        };
        for rir in RirId::ALL {
            let mut row = AlignmentRow {
                family,
                rir: Some(rir),
                counts: [0; 5],
            };
            for reg in regs
                .iter()
                .filter(|r| r.rir_reg == rir && r.prefix.family() == family)
            {
                let class = align(&reg.prefix, rib);
                row.counts[class.index()] += 1;
                all.counts[class.index()] += 1;
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

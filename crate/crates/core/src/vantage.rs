//! Vantage metadata, trust filtering and stable-set selection.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::jsonl::read_lines;
use crate::registry::{CountryCode, Prefix, RegionMap, RirId};

/// Size of each stable per-region and per-country set.
pub const STABLE_SET_SIZE: usize = 10;
/// Vantages drawn from each registry region per measurement.
pub const PER_RIR: usize = 3;
/// Vantages drawn from the organization's country per measurement.
pub const PER_COUNTRY: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VantageKind {
    Anchor,
    Probe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VantagePoint {
    pub id: String,
    pub kind: VantageKind,
    pub country: CountryCode,
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub asn: Option<u32>,
    #[serde(default = "default_connected")]
    pub connected: bool,
}

fn default_connected() -> bool {
    true
}

impl VantagePoint {
    pub fn location(&self) -> GeoPoint {
        GeoPoint::new(self.lat, self.lon)
    }
}

/// Loads `vantages.jsonl`, rejecting bad coordinates and repeated ids.
pub fn load_vantages(path: &Path) -> Result<Vec<VantagePoint>> {
    let all: Vec<VantagePoint> = crate::jsonl::read_jsonl(path)?;
    let mut seen = HashSet::new();
    for v in &all {
        if !v.location().is_valid() {
            return Err(Error::Config(format!(
                "vantage {} has invalid coordinates",
                v.id
            )));
        }
        if !seen.insert(v.id.as_str()) {
            return Err(Error::Config(format!("duplicate vantage id {}", v.id)));
        }
    }
    Ok(all)
}

pub fn load_bad_ids(path: &Path) -> Result<HashSet<String>> {
    Ok(read_lines(path)?.into_iter().map(|(_, l)| l).collect())
}

/// Per-country default coordinates from `country,lat,lon` CSV.
pub fn load_default_coords(reader: impl BufRead) -> Result<HashMap<CountryCode, Vec<GeoPoint>>> {
    let mut out: HashMap<CountryCode, Vec<GeoPoint>> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::UnreadableStream)?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (idx == 0 && line == "country,lat,lon") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cols[..] {
            [cc, lat, lon] => cc
                .parse::<CountryCode>()
                .ok()
                .zip(lat.parse::<f64>().ok().zip(lon.parse::<f64>().ok())),
            _ => None,
        };
        let (cc, (lat, lon)) = parsed
            .ok_or_else(|| Error::Config(format!("default coords line {}: {line:?}", idx + 1)))?;
        out.entry(cc).or_default().push(GeoPoint::new(lat, lon));
    }
    Ok(out)
}

/// Matching tolerance for default-coordinate detection, in degrees.
const COORD_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FilterStats {
    pub disconnected: usize,
    pub bad_listed: usize,
    pub default_coords: usize,
    pub kept: usize,
}

/// Drops disconnected vantages, listed bad ids, and vantages sitting on
/// their country's default coordinates.
pub fn filter_vantages(
    all: Vec<VantagePoint>,
    bad_ids: &HashSet<String>,
    default_coords: &HashMap<CountryCode, Vec<GeoPoint>>,
) -> (Vec<VantagePoint>, FilterStats) {
    let mut stats = FilterStats::default();
    let kept: Vec<VantagePoint> = all
        .into_iter()
        .filter(|v| {
            if !v.connected {
                stats.disconnected += 1;
                return false;
            }
            if bad_ids.contains(&v.id) {
                stats.bad_listed += 1;
                return false;
            }
            let on_default = default_coords.get(&v.country).is_some_and(|points| {
                points.iter().any(|p| {
                    (p.lat - v.lat).abs() < COORD_EPSILON && (p.lon - v.lon).abs() < COORD_EPSILON
                })
            });
            if on_default {
                stats.default_coords += 1;
                return false;
            }
            true
        })
        .collect();
    stats.kept = kept.len();
    (kept, stats)
}

/// Picks up to `limit` members: anchors before probes, then vantages adding
/// a not-yet-covered ASN, then id order.
fn pick_diverse(mut pool: Vec<&VantagePoint>, limit: usize) -> Vec<VantagePoint> {
    pool.sort_by(|a, b| a.kind.cmp(&b.kind).then_with(|| a.id.cmp(&b.id)));
    let mut chosen: Vec<VantagePoint> = Vec::new();
    let mut asns: BTreeSet<u32> = BTreeSet::new();
    while chosen.len() < limit && !pool.is_empty() {
        let best = pool
            .iter()
            .enumerate()
            .min_by_key(|(_, v)| {
                let fresh = v.asn.is_some_and(|a| !asns.contains(&a));
                (v.kind, !fresh, v.id.as_str())
            })
            .map(|(i, _)| i)
            .expect("non-empty pool");
        let v = pool.remove(best);
        if let Some(a) = v.asn {
            asns.insert(a);
        }
        chosen.push(v.clone());
    }
    chosen
}

/// Stable vantage sets per registry region and per country.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VantageSet {
    pub per_rir: BTreeMap<RirId, Vec<VantagePoint>>,
    pub per_country: BTreeMap<CountryCode, Vec<VantagePoint>>,
}

impl VantageSet {
    /// Every member, keyed by id.
    pub fn members(&self) -> BTreeMap<String, VantagePoint> {
        self.per_rir
            .values()
            .chain(self.per_country.values())
            .flatten()
            .map(|v| (v.id.clone(), v.clone()))
            .collect()
    }
}

pub fn select_stable_sets(filtered: &[VantagePoint], map: &RegionMap) -> VantageSet {
    let mut by_rir: BTreeMap<RirId, Vec<&VantagePoint>> = BTreeMap::new();
    let mut by_country: BTreeMap<CountryCode, Vec<&VantagePoint>> = BTreeMap::new();
    for v in filtered.iter().filter(|v| v.connected) {
        by_country.entry(v.country).or_default().push(v);
        match map.rir_of(v.country) {
            Ok(rir) => by_rir.entry(rir).or_default().push(v),
            Err(_) => log::warn!("vantage {} in unmapped country {}", v.id, v.country),
        }
    }
    VantageSet {
        per_rir: by_rir
            .into_iter()
            .map(|(k, pool)| (k, pick_diverse(pool, STABLE_SET_SIZE)))
            .collect(),
        per_country: by_country
            .into_iter()
            .map(|(k, pool)| (k, pick_diverse(pool, STABLE_SET_SIZE)))
            .collect(),
    }
}

/// FNV-1a over the prefix text; stable across platforms and releases.
pub fn prefix_hash(prefix: &Prefix) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in prefix.to_string().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// `count` consecutive members of the id-sorted pool, starting at an offset
/// derived from `key`.
fn rotate(pool: &[VantagePoint], count: usize, key: u64) -> Vec<&VantagePoint> {
    if pool.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<&VantagePoint> = pool.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let start = (key % sorted.len() as u64) as usize;
    (0..count.min(sorted.len()))
        .map(|i| sorted[(start + i) % sorted.len()])
        .collect()
}

/// Vantages chosen for one prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct VantagePlan {
    pub vantages: Vec<VantagePoint>,
    /// The organization's country had no usable vantage.
    pub no_in_country_vantage: bool,
}

impl VantagePlan {
    pub fn ids(&self) -> Vec<String> {
        self.vantages.iter().map(|v| v.id.clone()).collect()
    }
}

/// Three vantages per registry region plus five from the organization's
/// country, deduplicated by id.
///
/// Without an organization country the extra five come from the registering
/// registry's region pool and the plan is flagged.
pub fn plan_vantages(
    prefix: &Prefix,
    org_country: Option<CountryCode>,
    rir_reg: RirId,
    vset: &VantageSet,
) -> VantagePlan {
    let key = prefix_hash(prefix);
    let mut seen = HashSet::new();
    let mut vantages = Vec::new();
    let mut push = |v: &VantagePoint, out: &mut Vec<VantagePoint>| {
        if seen.insert(v.id.clone()) {
            out.push(v.clone());
        }
    };
    for rir in RirId::ALL {
        if let Some(pool) = vset.per_rir.get(&rir) {
            for v in rotate(pool, PER_RIR, key) {
                push(v, &mut vantages);
            }
        }
    }
    let country_pool = org_country.and_then(|cc| vset.per_country.get(&cc));
    let no_in_country_vantage = country_pool.is_none_or(Vec::is_empty);
    match country_pool {
        Some(pool) => {
            for v in rotate(pool, PER_COUNTRY, key) {
                push(v, &mut vantages);
            }
        }
        None if org_country.is_none() => {
            if let Some(pool) = vset.per_rir.get(&rir_reg) {
                for v in rotate(pool, PER_RIR + PER_COUNTRY, key)
                    .into_iter()
                    .skip(PER_RIR)
                {
                    push(v, &mut vantages);
                }
            }
        }
        None => {}
    }
    VantagePlan {
        vantages,
        no_in_country_vantage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::parse_prefix;

    fn cc(s: &str) -> CountryCode {
        s.parse().unwrap()
    }

    fn vp(id: &str, kind: VantageKind, country: &str, asn: Option<u32>) -> VantagePoint {
        VantagePoint {
            id: id.into(),
            kind,
            country: cc(country),
            lat: 10.0,
            lon: 10.0,
            asn,
            connected: true,
        }
    }

    #[test]
    fn filters() {
        let mut off = vp("off", VantageKind::Anchor, "DE", None);
        off.connected = false;
        let bad = vp("bad", VantageKind::Anchor, "DE", None);
        let mut centroid = vp("centroid", VantageKind::Probe, "DE", None);
        centroid.lat = 51.0;
        centroid.lon = 9.0;
        let clean = vp("clean", VantageKind::Anchor, "DE", None);
        let defaults = HashMap::from([(cc("DE"), vec![GeoPoint::new(51.0, 9.0)])]);
        let (kept, stats) = filter_vantages(
            vec![off, bad, centroid, clean],
            &HashSet::from(["bad".to_string()]),
            &defaults,
        );
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "clean");
        assert_eq!(
            stats,
            FilterStats {
                disconnected: 1,
                bad_listed: 1,
                default_coords: 1,
                kept: 1
            }
        );
    }

    #[test]
    fn anchors_then_fresh_asns() {
        let mut pool = vec![
            vp("a1", VantageKind::Anchor, "DE", Some(1)),
            vp("a2", VantageKind::Anchor, "DE", Some(2)),
            vp("a3", VantageKind::Anchor, "DE", Some(3)),
        ];
        for i in 0..20u32 {
            // Probes p00..p19 cycle through ASNs 1..=10.
            pool.push(vp(
                &format!("p{i:02}"),
                VantageKind::Probe,
                "DE",
                Some(1 + i % 10),
            ));
        }
        let set = select_stable_sets(&pool, &RegionMap::nro_snapshot());
        let de = &set.per_country[&cc("DE")];
        let ids: Vec<&str> = de.iter().map(|v| v.id.as_str()).collect();
        assert_eq!(
            ids,
            vec!["a1", "a2", "a3", "p03", "p04", "p05", "p06", "p07", "p08", "p09"]
        );
        let asns: BTreeSet<u32> = de.iter().filter_map(|v| v.asn).collect();
        assert_eq!(asns.len(), 10);
    }

    #[test]
    fn short_supply_and_tie_break() {
        let pool = vec![
            vp("z", VantageKind::Probe, "MU", Some(9)),
            vp("b", VantageKind::Probe, "MU", Some(9)),
        ];
        let set = select_stable_sets(&pool, &RegionMap::nro_snapshot());
        let mu = &set.per_country[&cc("MU")];
        assert_eq!(mu.len(), 2);
        assert_eq!(mu[0].id, "b");
        let one = pick_diverse(pool.iter().collect(), 1);
        assert_eq!(one[0].id, "b");
    }

    fn full_set() -> VantageSet {
        let mut pool = Vec::new();
        for (rir_cc, n) in [
            ("US", 10),
            ("FR", 10),
            ("JP", 10),
            ("BR", 10),
            ("ZA", 10),
            ("DE", 10),
        ] {
            for i in 0..n {
                pool.push(vp(
                    &format!("{rir_cc}{i}"),
                    VantageKind::Anchor,
                    rir_cc,
                    Some(i),
                ));
            }
        }
        select_stable_sets(&pool, &RegionMap::nro_snapshot())
    }

    #[test]
    fn twenty_vantage_plan() {
        let set = full_set();
        let plan = plan_vantages(
            &parse_prefix("10.0.0.0/24").unwrap(),
            Some(cc("DE")),
            RirId::Ripe,
            &set,
        );
        let german = plan
            .vantages
            .iter()
            .filter(|v| v.country == cc("DE"))
            .count();
        // RIPE pool draws from FR and DE, so overlap is possible; count the
        // unique ids and the in-country contribution.
        let ids: HashSet<String> = plan.ids().into_iter().collect();
        assert_eq!(ids.len(), plan.vantages.len());
        assert!(german >= 5);
        assert!(!plan.no_in_country_vantage);
        assert!(plan.vantages.len() <= 20 && plan.vantages.len() >= 17);
    }

    #[test]
    fn plan_without_country_vantages() {
        let set = full_set();
        let plan = plan_vantages(
            &parse_prefix("10.0.0.0/24").unwrap(),
            Some(cc("NP")),
            RirId::Apnic,
            &set,
        );
        assert_eq!(plan.vantages.len(), 15);
        assert!(plan.no_in_country_vantage);
    }

    #[test]
    fn overlapping_pools_deduplicate() {
        let mut pool = Vec::new();
        for (c, n) in [("US", 3), ("JP", 3), ("BR", 3), ("ZA", 3)] {
            for i in 0..n {
                pool.push(vp(&format!("{c}{i}"), VantageKind::Anchor, c, Some(i)));
            }
        }
        // RIPE region holds only German vantages, so the DE draw repeats one.
        for i in 0..3 {
            pool.push(vp(&format!("DE{i}"), VantageKind::Anchor, "DE", Some(i)));
        }
        let set = select_stable_sets(&pool, &RegionMap::nro_snapshot());
        let prefix = parse_prefix("10.0.0.0/24").unwrap();
        let plan = plan_vantages(&prefix, Some(cc("DE")), RirId::Ripe, &set);
        assert_eq!(plan.vantages.len(), 15);
        let mut pool4 = pool.clone();
        pool4.push(vp("DE3", VantageKind::Anchor, "DE", Some(3)));
        let set = select_stable_sets(&pool4, &RegionMap::nro_snapshot());
        let plan = plan_vantages(&prefix, Some(cc("DE")), RirId::Ripe, &set);
        // 12 from other regions, 3 of 4 Germans via RIPE, 4 Germans in-country.
        assert_eq!(plan.vantages.len(), 16);
    }

    #[test]
    fn plans_are_deterministic_and_members_of_set() {
        let set = full_set();
        let members = set.members();
        for i in 0..50u32 {
            let prefix = Prefix::new(std::net::IpAddr::V4((i << 12).into()), 20).unwrap();
            let a = plan_vantages(&prefix, Some(cc("US")), RirId::Arin, &set);
            let b = plan_vantages(&prefix, Some(cc("US")), RirId::Arin, &set);
            assert_eq!(a, b);
            assert!(a.vantages.iter().all(|v| members.contains_key(&v.id)));
        }
    }

    #[test]
    fn no_org_country_falls_back_to_region() {
        let set = full_set();
        let plan = plan_vantages(
            &parse_prefix("10.0.0.0/24").unwrap(),
            None,
            RirId::Arin,
            &set,
        );
        assert!(plan.no_in_country_vantage);
        assert_eq!(plan.vantages.len(), 20);
    }
}

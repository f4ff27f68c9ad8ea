//! Fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::{Path, PathBuf};

use geoaudit::classify::ConsistencyClass;
use geoaudit::geo::{GeoInferenceConfig, GeoPoint};
use geoaudit::registry::{CountryCode, Prefix, RegionMap, Registration, RirId, Status};
use geoaudit::vantage::{VantageKind, VantagePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Table restatement of the taxonomy, written without reference to the
/// library rule: columns are (same region, in registry region, in org region).
pub fn oracle_class(reg: RirId, org: RirId, geo: &BTreeSet<RirId>) -> ConsistencyClass {
    let same = reg == org;
    let in_reg = geo.contains(&reg);
    let in_org = geo.contains(&org);
    const TABLE: [(bool, bool, bool, ConsistencyClass); 8] = [
        (true, true, true, ConsistencyClass::FC),
        (true, false, false, ConsistencyClass::RI),
        (false, true, true, ConsistencyClass::OC),
        (false, false, true, ConsistencyClass::OC),
        (false, true, false, ConsistencyClass::OI),
        (false, false, false, ConsistencyClass::FI),
        // Unreachable when reg == org; listed so every key is present.
        (true, true, false, ConsistencyClass::FC),
        (true, false, true, ConsistencyClass::RI),
    ];
    TABLE
        .iter()
        .find(|(s, r, o, _)| *s == same && *r == in_reg && *o == in_org)
        .map(|row| row.3)
        .expect("table is total")
}

pub fn cc(s: &str) -> CountryCode {
    s.parse().unwrap()
}

pub fn p(s: &str) -> Prefix {
    s.parse().unwrap()
}

/// Vantage sites per region: (country, index into the bundled point list).
pub const SITES: [(RirId, [(&str, usize); 3]); 5] = [
    (RirId::Arin, [("US", 0), ("CA", 0), ("US", 1)]),
    (RirId::Ripe, [("DE", 0), ("FI", 0), ("GB", 0)]),
    (RirId::Apnic, [("AU", 0), ("CN", 0), ("IN", 0)]),
    (RirId::Lacnic, [("BR", 0), ("AR", 0), ("CL", 0)]),
    (RirId::Afrinic, [("ZA", 0), ("NG", 0), ("KE", 0)]),
];

pub struct Site {
    pub id: String,
    pub rir: RirId,
    pub country: CountryCode,
    pub point: GeoPoint,
}

pub fn sites() -> Vec<Site> {
    let geo = GeoInferenceConfig::bundled();
    let mut out = Vec::new();
    for (rir, list) in SITES {
        for (i, (country, idx)) in list.iter().enumerate() {
            out.push(Site {
                id: format!("{}-{i}", rir.as_str()),
                rir,
                country: cc(country),
                point: geo.country_geometry[&cc(country)][*idx],
            });
        }
    }
    out
}

pub fn site_vantages() -> Vec<VantagePoint> {
    sites()
        .into_iter()
        .enumerate()
        .map(|(i, s)| VantagePoint {
            id: s.id,
            kind: VantageKind::Anchor,
            country: s.country,
            lat: s.point.lat,
            lon: s.point.lon,
            asn: Some(64_000 + i as u32),
            connected: true,
        })
        .collect()
}

/// A synthetic world written to disk, with its planted truth.
pub struct SimWorld {
    pub dir: PathBuf,
    pub truth: BTreeMap<Prefix, ConsistencyClass>,
    pub true_region: BTreeMap<Prefix, RirId>,
    pub relocated: usize,
}

fn pick_other(rng: &mut ChaCha8Rng, not: &[RirId]) -> RirId {
    let pool: Vec<RirId> = RirId::ALL
        .into_iter()
        .filter(|r| !not.contains(r))
        .collect();
    pool[rng.gen_range(0..pool.len())]
}

fn write_lines(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Builds `n` prefixes spread over the five regions. About 30% carry a
/// planted class other than FC. Targets sit on a vantage site of their
/// true region.
pub fn write_sim_world(dir: &Path, n: usize, seed: u64) -> SimWorld {
    let map = RegionMap::nro_snapshot();
    let sites = sites();
    let site_countries: BTreeSet<CountryCode> = sites.iter().map(|s| s.country).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regs = Vec::new();
    let mut rib = String::new();
    let mut hit4 = String::new();
    let mut hit6 = String::new();
    let mut world = String::from("target,lat,lon\n");
    let mut truth = BTreeMap::new();
    let mut true_region = BTreeMap::new();
    let mut relocated = 0;
    for i in 0..n {
        let reg_rir = RirId::ALL[i % 5];
        let roll = rng.gen_range(0..100);
        let (org_rir, geo_rir) = if roll < 70 {
            (reg_rir, reg_rir)
        } else if roll < 78 {
            (reg_rir, pick_other(&mut rng, &[reg_rir]))
        } else if roll < 86 {
            let o = pick_other(&mut rng, &[reg_rir]);
            (o, o)
        } else if roll < 93 {
            (pick_other(&mut rng, &[reg_rir]), reg_rir)
        } else {
            let o = pick_other(&mut rng, &[reg_rir]);
            (o, pick_other(&mut rng, &[reg_rir, o]))
        };
        if geo_rir != reg_rir {
            relocated += 1;
        }
        let org_country = if rng.gen_bool(0.8) {
            let pool: Vec<&Site> = sites.iter().filter(|s| s.rir == org_rir).collect();
            pool[rng.gen_range(0..pool.len())].country
        } else {
            let pool: Vec<CountryCode> = map
                .countries_of(org_rir)
                .filter(|c| !site_countries.contains(c))
                .collect();
            pool[rng.gen_range(0..pool.len())]
        };
        let geo_sites: Vec<&Site> = sites.iter().filter(|s| s.rir == geo_rir).collect();
        let site = geo_sites[rng.gen_range(0..geo_sites.len())];

        let v6 = i % 10 == 9;
        let (prefix, targets): (Prefix, Vec<IpAddr>) = if v6 {
            let base = Ipv6Addr::new(0x2001, 0xdb8, i as u16, 0, 0, 0, 0, 0);
            let t1 = Ipv6Addr::new(0x2001, 0xdb8, i as u16, 0, 0, 0, 0, 1);
            (Prefix::new(base.into(), 48).unwrap(), vec![t1.into()])
        } else {
            let base = u32::from(Ipv4Addr::new(20, 0, 0, 0)) + ((i as u32) << 8);
            let mut ts = vec![IpAddr::V4((base + 1).into())];
            if i % 3 == 0 {
                ts.push(IpAddr::V4((base + 2).into()));
            }
            (Prefix::new(IpAddr::V4(base.into()), 24).unwrap(), ts)
        };
        let mut reg = Registration::new(prefix, reg_rir);
        reg.org_country = Some(org_country);
        reg.org_id = Some(format!("ORG-{i}"));
        reg.status = Status::ALL[i % 3];
        reg.last_updated = chrono::NaiveDate::from_ymd_opt(2005 + (i % 18) as i32, 1, 1);
        regs.push(reg);
        writeln!(rib, "{prefix} {}", 64_500 + i).unwrap();
        for t in &targets {
            if t.is_ipv4() {
                writeln!(hit4, "{t},100").unwrap();
            } else {
                writeln!(hit6, "{t}").unwrap();
            }
            writeln!(world, "{t},{},{}", site.point.lat, site.point.lon).unwrap();
        }
        let org_region = map.rir_of(org_country).unwrap();
        assert_eq!(org_region, org_rir);
        truth.insert(
            prefix,
            oracle_class(reg_rir, org_rir, &BTreeSet::from([geo_rir])),
        );
        true_region.insert(prefix, geo_rir);
    }
    geoaudit::jsonl::write_jsonl_file(&dir.join("registrations.jsonl"), &regs).unwrap();
    geoaudit::jsonl::write_jsonl_file(&dir.join("vantages.jsonl"), &site_vantages()).unwrap();
    write_lines(&dir.join("rib.txt"), &rib);
    write_lines(&dir.join("hitlist_v4.csv"), &hit4);
    write_lines(&dir.join("hitlist_v6.txt"), &hit6);
    write_lines(&dir.join("world.csv"), &world);
    SimWorld {
        dir: dir.to_path_buf(),
        truth,
        true_region,
        relocated,
    }
}

/// argv for `geoaudit audit` over a world written by [`write_sim_world`].
pub fn audit_argv(dir: &Path, out: &Path, extra: &[&str]) -> Vec<std::ffi::OsString> {
    let f = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let mut argv: Vec<String> = vec![
        "geoaudit".into(),
        "audit".into(),
        "--registrations".into(),
        f("registrations.jsonl"),
        "--rib".into(),
        f("rib.txt"),
        "--hitlist-v4".into(),
        f("hitlist_v4.csv"),
        "--hitlist-v6".into(),
        f("hitlist_v6.txt"),
        "--vantages".into(),
        f("vantages.jsonl"),
        "--out".into(),
        out.to_string_lossy().into_owned(),
    ];
    argv.extend(extra.iter().map(|s| s.to_string()));
    argv.into_iter().map(Into::into).collect()
}

pub fn read_records(path: &Path) -> Vec<geoaudit::classify::ConsistencyRecord> {
    geoaudit::jsonl::read_jsonl(path).unwrap()
}

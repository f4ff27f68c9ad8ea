//! Hitlist loading and target planning.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::net::IpAddr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{Family, Prefix, Registration};
use crate::trie::{DualStackTrie, Frozen};

/// Default hitlist score threshold.
pub const DEFAULT_MIN_SCORE: u8 = 99;

/// Most targets probed per prefix.
pub const MAX_TARGETS_PER_PREFIX: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HitlistEntry {
    pub addr: IpAddr,
    /// Responsiveness score; present exactly for IPv4 entries.
    pub score: Option<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HitlistStats {
    pub kept: usize,
    pub below_threshold: usize,
    pub malformed: usize,
}

/// Reads `<addr>[,score]` lines for one family.
///
/// IPv4 lines need a score in 0..=100 and are kept when it reaches
/// `min_score`. IPv6 lines carry only an address.
pub fn load_hitlist(
    stream: impl BufRead,
    family: Family,
    min_score: u8,
) -> Result<(Vec<HitlistEntry>, HitlistStats)> {
    let mut stats = HitlistStats::default();
    let mut out = Vec::new();
    for line in stream.lines() {
        let line = line.map_err(Error::UnreadableStream)?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let addr: Option<IpAddr> = parts.next().and_then(|a| a.trim().parse().ok());
        let score = parts.next().map(|s| s.trim().parse::<u8>());
        let extra = parts.next().is_some();
        let entry = match (addr, score, family) {
            (Some(a @ IpAddr::V4(_)), Some(Ok(s)), Family::V4) if s <= 100 && !extra => {
                Some(HitlistEntry {
                    addr: a,
                    score: Some(s),
                })
            }
            (Some(a @ IpAddr::V6(_)), None, Family::V6) => Some(HitlistEntry {
                addr: a,
                score: None,
            }),
            _ => None,
        };
        match entry {
            None => stats.malformed += 1,
            Some(e) if e.score.is_some_and(|s| s < min_score) => stats.below_threshold += 1,
            Some(e) => {
                stats.kept += 1;
                out.push(e);
            }
        }
    }
    Ok((out, stats))
}

/// Drops entries inside any aliased prefix. Returns the survivors and the
/// number removed.
pub fn exclude_aliased(
    entries: Vec<HitlistEntry>,
    aliased: &[Prefix],
) -> (Vec<HitlistEntry>, usize) {
    if aliased.is_empty() {
        return (entries, 0);
    }
    let trie: DualStackTrie<()> = aliased.iter().map(|p| (*p, ())).collect();
    let before = entries.len();
    let kept: Vec<HitlistEntry> = entries
        .into_iter()
        .filter(|e| trie.longest_match(&e.addr).is_none())
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Registrations indexed by prefix for longest-prefix matching.
///
/// When several registries hold the identical prefix, the most recently
/// updated record wins, then the lower registry in [`RirId`] order.
///
/// [`RirId`]: crate::registry::RirId
#[derive(Clone, Debug)]
pub struct RegistrationIndex {
    trie: Frozen<DualStackTrie<usize>>,
}

impl RegistrationIndex {
    pub fn build(regs: &[Registration]) -> Self {
        let mut trie: DualStackTrie<usize> = DualStackTrie::new();
        for (idx, reg) in regs.iter().enumerate() {
            match trie.get_mut(&reg.prefix) {
                None => {
                    trie.insert(reg.prefix, idx);
                }
                Some(current) => {
                    let cur = &regs[*current];
                    let key = |r: &Registration| (r.last_updated, std::cmp::Reverse(r.rir_reg));
                    if key(reg) > key(cur) {
                        *current = idx;
                    }
                }
            }
        }
        RegistrationIndex {
            trie: trie.freeze(),
        }
    }

    /// Index of the most specific registration containing `addr`.
    pub fn longest_match(&self, addr: &IpAddr) -> Option<(Prefix, usize)> {
        self.trie.longest_match(addr).map(|(p, i)| (p, *i))
    }

    pub fn get(&self, prefix: &Prefix) -> Option<usize> {
        self.trie.get(prefix).copied()
    }

    pub fn trie(&self) -> &DualStackTrie<usize> {
        &self.trie
    }
}

/// Targets selected for one registered prefix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetPlan {
    pub prefix: Prefix,
    pub targets: Vec<IpAddr>,
    /// Position of the registration in the slice the index was built from.
    pub registration: usize,
}

/// Assigns each entry to its most specific registration and keeps up to two
/// targets per prefix, lowest addresses first. Plans come out in prefix
/// order.
pub fn build_target_plans(index: &RegistrationIndex, entries: &[HitlistEntry]) -> Vec<TargetPlan> {
    let mut grouped: BTreeMap<Prefix, (usize, Vec<IpAddr>)> = BTreeMap::new();
    for entry in entries {
        if let Some((prefix, reg)) = index.longest_match(&entry.addr) {
            grouped
                .entry(prefix)
                .or_insert_with(|| (reg, Vec::new()))
                .1
                .push(entry.addr);
        }
    }
    grouped
        .into_iter()
        .map(|(prefix, (registration, mut targets))| {
            targets.sort();
            targets.dedup();
            targets.truncate(MAX_TARGETS_PER_PREFIX);
            TargetPlan {
                prefix,
                targets,
                registration,
            }
        })
        .collect()
}

/// Uniform sample without replacement of `round(fraction * n)` plans.
///
/// Plans are sorted before sampling, so the result depends only on the set
/// of plans and the seed.
pub fn sample_plans(
    mut plans: Vec<TargetPlan>,
    fraction: f64,
    seed: u64,
) -> Result<Vec<TargetPlan>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "sample fraction {fraction} outside [0, 1]"
        )));
    }
    plans.sort_by(|a, b| {
        a.prefix
            .cmp(&b.prefix)
            .then_with(|| a.targets.cmp(&b.targets))
    });
    let n = plans.len();
    let k = ((fraction * n as f64).round() as usize).min(n);
    if k == n {
        return Ok(plans);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    let mut slots: Vec<Option<TargetPlan>> = plans.into_iter().map(Some).collect();
    Ok(picked
        .into_iter()
        .map(|i| slots[i].take().expect("index sampled once"))
        .collect())
}

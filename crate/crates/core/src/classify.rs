//! Five-class consistency taxonomy and the audit filter pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bgp::{align, exact_moas, Alignment, BgpRoute};
use crate::error::{Error, Result};
use crate::geo::{infer_region, GeoInferenceConfig};
use crate::measure::MeasurementResult;
use crate::registry::{CountryCode, Prefix, RegionMap, Registration, RirId};
use crate::targets::TargetPlan;
use crate::trie::DualStackTrie;
use crate::vantage::VantagePoint;

#[allow(clippy::upper_case_acronyms)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConsistencyClass {
    /// Fully consistent.
    FC,
    /// Org consistent.
    OC,
    /// Org inconsistent.
    OI,
    /// Registry inconsistent.
    RI,
    /// Fully inconsistent.
    FI,
}

impl ConsistencyClass {
    pub const ALL: [ConsistencyClass; 5] = [
        ConsistencyClass::FC,
        ConsistencyClass::OC,
        ConsistencyClass::OI,
        ConsistencyClass::RI,
        ConsistencyClass::FI,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConsistencyClass::FC => "FC",
            ConsistencyClass::OC => "OC",
            ConsistencyClass::OI => "OI",
            ConsistencyClass::RI => "RI",
            ConsistencyClass::FI => "FI",
        }
    }

    /// RI or FI: the prefix sits outside the registering region.
    pub fn is_inconsistent(self) -> bool {
        matches!(self, ConsistencyClass::RI | ConsistencyClass::FI)
    }
}

impl fmt::Display for ConsistencyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tie-break when both the registry and the organization region are
/// feasible but differ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precedence {
    /// Report OC.
    #[default]
    OrgFirst,
    /// Report OI.
    RegistryFirst,
}

/// Classifies with the default OC-first precedence.
pub fn classify_one(
    rir_reg: RirId,
    rir_org: RirId,
    rir_geo: &BTreeSet<RirId>,
) -> Result<ConsistencyClass> {
    classify_with(rir_reg, rir_org, rir_geo, Precedence::OrgFirst)
}

pub fn classify_with(
    rir_reg: RirId,
    rir_org: RirId,
    rir_geo: &BTreeSet<RirId>,
    precedence: Precedence,
) -> Result<ConsistencyClass> {
    use ConsistencyClass::*;
    if rir_geo.is_empty() {
        return Err(Error::EmptyGeoSet);
    }
    let geo_reg = rir_geo.contains(&rir_reg);
    let geo_org = rir_geo.contains(&rir_org);
    Ok(if rir_reg == rir_org {
        if geo_reg {
            FC
        } else {
            RI
        }
    } else {
        match (geo_org, geo_reg, precedence) {
            (true, true, Precedence::RegistryFirst) => OI,
            (true, _, _) => OC,
            (false, true, _) => OI,
            (false, false, _) => FI,
        }
    })
}

/// Outcome of combining the per-target classes of one prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reconciled {
    Class(ConsistencyClass),
    Conflicting,
}

pub fn reconcile_targets(a: ConsistencyClass, b: Option<ConsistencyClass>) -> Reconciled {
    match b {
        Some(b) if b != a => Reconciled::Conflicting,
        _ => Reconciled::Class(a),
    }
}

/// Why a prefix left the pipeline before classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FilterReason {
    Unresponsive,
    Anycast,
    #[serde(rename = "NIR")]
    Nir,
    BgpSupernetOrMixed,
    Unadvertised,
    NoOrgCountry,
    Conflicting,
}

impl FilterReason {
    /// Pipeline order.
    pub const ALL: [FilterReason; 7] = [
        FilterReason::Unresponsive,
        FilterReason::Anycast,
        FilterReason::Nir,
        FilterReason::BgpSupernetOrMixed,
        FilterReason::Unadvertised,
        FilterReason::NoOrgCountry,
        FilterReason::Conflicting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterReason::Unresponsive => "Unresponsive",
            FilterReason::Anycast => "Anycast",
            FilterReason::Nir => "NIR",
            FilterReason::BgpSupernetOrMixed => "BgpSupernetOrMixed",
            FilterReason::Unadvertised => "Unadvertised",
            FilterReason::NoOrgCountry => "NoOrgCountry",
            FilterReason::Conflicting => "Conflicting",
        }
    }
}

impl fmt::Display for FilterReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inference for a single measured address.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetDetail {
    pub target: IpAddr,
    /// Absent when no vantage got a reply.
    pub min_vantage_id: Option<String>,
    pub min_rtt_ms: Option<f64>,
    pub radius_km: Option<f64>,
    pub rir_geo: BTreeSet<RirId>,
    pub class: Option<ConsistencyClass>,
}

/// One line of `audit.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    pub prefix: Prefix,
    pub rir_reg: RirId,
    pub rir_org: Option<RirId>,
    pub org_country: Option<CountryCode>,
    /// Union of the feasible registries of the responding targets.
    pub rir_geo: BTreeSet<RirId>,
    pub class: Option<ConsistencyClass>,
    pub filter_reason: Option<FilterReason>,
    pub alignment: Option<Alignment>,
    /// Free-form markers such as `no-org-country`.
    #[serde(default)]
    pub flags: BTreeSet<String>,
    pub targets: Vec<TargetDetail>,
}

impl ConsistencyRecord {
    /// The class-xor-filter invariant.
    pub fn is_well_formed(&self) -> bool {
        match (self.class, self.filter_reason) {
            (Some(_), None) => !self.rir_geo.is_empty(),
            (None, Some(_)) => true,
            _ => false,
        }
    }
}

pub const FLAG_NO_ORG_COUNTRY: &str = "no-org-country";
/// The exact route has more than one origin AS.
pub const FLAG_EXACT_MOAS: &str = "exact-moas";

/// Matches NIR markers, case-insensitively, against handles and org id.
pub fn is_nir(reg: &Registration, markers: &[String]) -> bool {
    if markers.is_empty() {
        return false;
    }
    let lowered: Vec<String> = markers.iter().map(|m| m.to_lowercase()).collect();
    reg.handles()
        .chain(reg.org_id.as_deref())
        .map(str::to_lowercase)
        .any(|h| {
            lowered
                .iter()
                .any(|m| !m.is_empty() && h.contains(m.as_str()))
        })
}

#[derive(Clone, Debug, Default)]
pub struct AuditConfig {
    pub precedence: Precedence,
    /// Remove prefixes without an organization country instead of
    /// classifying them against the registry only.
    pub exclude_no_org_country: bool,
}

/// Everything the pipeline reads.
pub struct AuditInputs<'a> {
    pub regs: &'a [Registration],
    pub rib: &'a DualStackTrie<BgpRoute>,
    pub anycast: &'a DualStackTrie<()>,
    pub nir_markers: &'a [String],
    pub plans: &'a [TargetPlan],
    pub results: &'a BTreeMap<IpAddr, Vec<MeasurementResult>>,
    pub vantages: &'a BTreeMap<String, VantagePoint>,
    pub region_map: &'a RegionMap,
    pub geo: &'a GeoInferenceConfig,
    /// Extra per-prefix flags from planning.
    pub plan_flags: &'a BTreeMap<Prefix, BTreeSet<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PipelineCounts {
    pub candidates: usize,
    pub removed: BTreeMap<FilterReason, usize>,
    pub classified: usize,
    pub by_class: BTreeMap<ConsistencyClass, usize>,
}

impl PipelineCounts {
    pub fn removed_by(&self, reason: FilterReason) -> usize {
        self.removed.get(&reason).copied().unwrap_or(0)
    }

    /// candidates = classified + all removals.
    pub fn balances(&self) -> bool {
        self.candidates == self.classified + self.removed.values().sum::<usize>()
    }

    pub fn from_records(records: &[ConsistencyRecord]) -> Self {
        let mut counts = PipelineCounts {
            candidates: records.len(),
            ..Default::default()
        };
        for r in records {
            if let Some(reason) = r.filter_reason {
                *counts.removed.entry(reason).or_default() += 1;
            }
            if let Some(class) = r.class {
                counts.classified += 1;
                *counts.by_class.entry(class).or_default() += 1;
            }
        }
        counts
    }
}

fn is_anycast(plan: &TargetPlan, anycast: &DualStackTrie<()>) -> bool {
    !anycast.covering(&plan.prefix).is_empty()
        || plan
            .targets
            .iter()
            .any(|t| anycast.longest_match(t).is_some())
}

fn target_detail(
    target: IpAddr,
    inputs: &AuditInputs<'_>,
    rir_reg: RirId,
    rir_org: RirId,
    precedence: Precedence,
) -> Result<TargetDetail> {
    let results = inputs
        .results
        .get(&target)
        .map(Vec::as_slice)
        .unwrap_or(&[]);
    match infer_region(results, inputs.vantages, inputs.geo, inputs.region_map) {
        Ok(region) => {
            let class = if region.rirs.is_empty() {
                None
            } else {
                Some(classify_with(rir_reg, rir_org, &region.rirs, precedence)?)
            };
            Ok(TargetDetail {
                target,
                min_vantage_id: Some(region.min_vantage_id),
                min_rtt_ms: Some(region.min_rtt_ms),
                radius_km: Some(region.radius_km),
                rir_geo: region.rirs,
                class,
            })
        }
        Err(Error::NoResponses) => Ok(TargetDetail {
            target,
            min_vantage_id: None,
            min_rtt_ms: None,
            radius_km: None,
            rir_geo: BTreeSet::new(),
            class: None,
        }),
        Err(e) => Err(e),
    }
}

fn audit_one(
    plan: &TargetPlan,
    inputs: &AuditInputs<'_>,
    config: &AuditConfig,
) -> Result<ConsistencyRecord> {
    let reg = inputs.regs.get(plan.registration).ok_or_else(|| {
        Error::Config(format!(
            "plan for {} names a missing registration",
            plan.prefix
        ))
    })?;
    let rir_org = reg.rir_org(inputs.region_map);
    let mut record = ConsistencyRecord {
        prefix: plan.prefix,
        rir_reg: reg.rir_reg,
        rir_org,
        org_country: reg.org_country,
        rir_geo: BTreeSet::new(),
        class: None,
        filter_reason: None,
        alignment: None,
        flags: inputs
            .plan_flags
            .get(&plan.prefix)
            .cloned()
            .unwrap_or_default(),
        targets: Vec::new(),
    };
    if rir_org.is_none() {
        record.flags.insert(FLAG_NO_ORG_COUNTRY.to_string());
    }
    // Without an org region the registry stands in for it, which reduces
    // the rule to FC or RI.
    let org_for_rule = rir_org.unwrap_or(reg.rir_reg);
    for target in &plan.targets {
        record.targets.push(target_detail(
            *target,
            inputs,
            reg.rir_reg,
            org_for_rule,
            config.precedence,
        )?);
    }
    let responding: Vec<&TargetDetail> = record
        .targets
        .iter()
        .filter(|t| t.class.is_some())
        .collect();
    let reason = if responding.is_empty() {
        Some(FilterReason::Unresponsive)
    } else if is_anycast(plan, inputs.anycast) {
        Some(FilterReason::Anycast)
    } else if is_nir(reg, inputs.nir_markers) {
        Some(FilterReason::Nir)
    } else {
        let alignment = align(&plan.prefix, inputs.rib);
        record.alignment = Some(alignment);
        if exact_moas(&plan.prefix, inputs.rib) {
            record.flags.insert(FLAG_EXACT_MOAS.to_string());
        }
        match alignment {
            Alignment::Supernet | Alignment::MixedAs => Some(FilterReason::BgpSupernetOrMixed),
            Alignment::Unadvertised => Some(FilterReason::Unadvertised),
            Alignment::Aligned | Alignment::Subnet => {
                if rir_org.is_none() && config.exclude_no_org_country {
                    Some(FilterReason::NoOrgCountry)
                } else {
                    None
                }
            }
        }
    };
    if let Some(reason) = reason {
        record.filter_reason = Some(reason);
        return Ok(record);
    }
    record.rir_geo = responding
        .iter()
        .flat_map(|t| t.rir_geo.iter().copied())
        .collect();
    let first = responding[0].class.expect("responding");
    match reconcile_targets(first, responding.get(1).and_then(|t| t.class)) {
        Reconciled::Class(c) => record.class = Some(c),
        Reconciled::Conflicting => record.filter_reason = Some(FilterReason::Conflicting),
    }
    Ok(record)
}

/// Runs every plan through the filters and the classifier. Records come
/// out sorted by prefix, one per plan.
pub fn audit_pipeline(
    inputs: &AuditInputs<'_>,
    config: &AuditConfig,
) -> Result<(Vec<ConsistencyRecord>, PipelineCounts)> {
    let mut records: Vec<ConsistencyRecord> = inputs
        .plans
        .par_iter()
        .map(|plan| audit_one(plan, inputs, config))
        .collect::<Result<_>>()?;
    records.sort_by_key(|a| a.prefix);
    let counts = PipelineCounts::from_records(&records);
    Ok((records, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ConsistencyClass::*;
    use RirId::*;

    fn set(rirs: &[RirId]) -> BTreeSet<RirId> {
        rirs.iter().copied().collect()
    }

    #[test]
    fn example_rows() {
        assert_eq!(classify_one(Arin, Arin, &set(&[Arin])).unwrap(), FC);
        assert_eq!(classify_one(Ripe, Arin, &set(&[Arin])).unwrap(), OC);
        assert_eq!(classify_one(Arin, Ripe, &set(&[Arin])).unwrap(), OI);
        assert_eq!(classify_one(Arin, Arin, &set(&[Ripe])).unwrap(), RI);
        assert_eq!(classify_one(Arin, Ripe, &set(&[Apnic])).unwrap(), FI);
        assert_eq!(classify_one(Ripe, Arin, &set(&[Arin, Ripe])).unwrap(), OC);
        assert_eq!(
            classify_with(Ripe, Arin, &set(&[Arin, Ripe]), Precedence::RegistryFirst).unwrap(),
            OI
        );
        assert!(matches!(
            classify_one(Arin, Arin, &set(&[])),
            Err(Error::EmptyGeoSet)
        ));
    }

    #[test]
    fn reconciliation() {
        assert_eq!(reconcile_targets(FC, Some(FC)), Reconciled::Class(FC));
        assert_eq!(reconcile_targets(FC, Some(RI)), Reconciled::Conflicting);
        assert_eq!(reconcile_targets(OC, None), Reconciled::Class(OC));
    }

    fn rir() -> impl Strategy<Value = RirId> {
        prop::sample::select(RirId::ALL.to_vec())
    }

    fn class() -> impl Strategy<Value = ConsistencyClass> {
        prop::sample::select(ConsistencyClass::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn universal_geo_never_inconsistent(reg in rir(), org in rir()) {
            let c = classify_one(reg, org, &RirId::ALL.into_iter().collect()).unwrap();
            prop_assert!(!c.is_inconsistent());
        }

        #[test]
        fn reconcile_symmetric(a in class(), b in class()) {
            prop_assert_eq!(reconcile_targets(a, Some(b)), reconcile_targets(b, Some(a)));
        }
    }

    #[test]
    fn nir_matching() {
        let mut reg =
            Registration::new(crate::registry::parse_prefix("1.0.0.0/24").unwrap(), Apnic);
        reg.flags
            .insert(crate::registry::RegFlag::Handle("MAINT-JP-JPNIC".into()));
        assert!(is_nir(&reg, &["jpnic".into()]));
        assert!(!is_nir(&reg, &["twnic".into()]));
        assert!(!is_nir(&reg, &[]));
        reg.flags.clear();
        reg.org_id = Some("ORG-KRNIC-1".into());
        assert!(is_nir(&reg, &["KRNIC".into()]));
    }
}

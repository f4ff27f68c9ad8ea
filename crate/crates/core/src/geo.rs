//! Speed-of-light feasibility: turning the fastest reply into a disc on
//! the globe and listing the countries and registries the disc reaches.
//!
//! Countries are represented by point sets (a centroid plus, for large
//! countries, a few extra points). A country counts as reachable when any
//! of its points lies within the disc.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::MeasurementResult;
use crate::registry::{CountryCode, RegionMap, RirId};
use crate::vantage::VantagePoint;

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Speed of light in vacuum, km/s.
pub const C_KM_PER_S: f64 = 299_792.458;

/// Propagation speed in fiber relative to vacuum.
pub const FIBER_FACTOR: f64 = 2.0 / 3.0;

/// Slack absorbing floating-point error when comparing a distance against a
/// radius derived from the same distance.
const DISTANCE_EPSILON_KM: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Great-circle distance on a spherical Earth.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

const BUNDLED_POINTS: &str = include_str!("../data/country_points.csv");

/// Parses `country,lat,lon` rows; a country may appear on many rows.
pub fn parse_country_points(text: &str) -> Result<BTreeMap<CountryCode, Vec<GeoPoint>>> {
    let mut out: BTreeMap<CountryCode, Vec<GeoPoint>> = BTreeMap::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "country,lat,lon" => {}
        _ => {
            return Err(Error::Config(
                "country points: missing `country,lat,lon` header".into(),
            ))
        }
    }
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Config(format!("country points line {}: {line:?}", idx + 1));
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let [cc, lat, lon] = cols[..] else {
            return Err(bad());
        };
        let cc: CountryCode = cc.parse().map_err(|_| bad())?;
        let point = GeoPoint::new(
            lat.parse().map_err(|_| bad())?,
            lon.parse().map_err(|_| bad())?,
        );
        if !point.is_valid() {
            return Err(bad());
        }
        out.entry(cc).or_default().push(point);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct GeoInferenceConfig {
    pub propagation_factor: f64,
    pub c_km_per_s: f64,
    pub country_geometry: BTreeMap<CountryCode, Vec<GeoPoint>>,
}

impl GeoInferenceConfig {
    /// Fiber factor with the bundled country points.
    pub fn bundled() -> Self {
        GeoInferenceConfig {
            propagation_factor: FIBER_FACTOR,
            c_km_per_s: C_KM_PER_S,
            country_geometry: parse_country_points(BUNDLED_POINTS).expect("bundled points valid"),
        }
    }

    pub fn with_geometry(country_geometry: BTreeMap<CountryCode, Vec<GeoPoint>>) -> Self {
        GeoInferenceConfig {
            propagation_factor: FIBER_FACTOR,
            c_km_per_s: C_KM_PER_S,
            country_geometry,
        }
    }

    pub fn load_points(path: &Path) -> Result<BTreeMap<CountryCode, Vec<GeoPoint>>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_country_points(&text)
    }

    pub fn with_factor(mut self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::Config(format!(
                "propagation factor {factor} outside (0, 1]"
            )));
        }
        self.propagation_factor = factor;
        Ok(self)
    }

    /// Checks that every mapped country has at least one point.
    pub fn validate(&self, map: &RegionMap) -> Result<()> {
        let missing: Vec<String> = map
            .countries()
            .filter(|cc| self.country_geometry.get(cc).is_none_or(Vec::is_empty))
            .map(|cc| cc.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "no representative points for {}",
                missing.join(", ")
            )))
        }
    }
}

/// Smallest reply across all samples of all vantages for one target; ties
/// go to the lower vantage id.
pub fn min_rtt(results: &[MeasurementResult]) -> Result<(String, f64)> {
    results
        .iter()
        .flat_map(|r| {
            r.rtts_ms
                .iter()
                .map(move |rtt| (r.vantage_id.as_str(), *rtt))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)))
        .map(|(id, rtt)| (id.to_string(), rtt))
        .ok_or(Error::NoResponses)
}

/// One-way distance light covers in half the round-trip time.
pub fn rtt_to_radius(rtt_ms: f64, config: &GeoInferenceConfig) -> Result<f64> {
    if rtt_ms < 0.0 || rtt_ms.is_nan() {
        return Err(Error::NegativeRtt(rtt_ms));
    }
    Ok(rtt_ms / 2.0 / 1000.0 * config.propagation_factor * config.c_km_per_s)
}

/// Countries with a representative point within `radius_km` of the
/// vantage. The vantage's own country is always included.
pub fn feasible_countries(
    vantage: &VantagePoint,
    radius_km: f64,
    config: &GeoInferenceConfig,
) -> BTreeSet<CountryCode> {
    let origin = vantage.location();
    let mut out: BTreeSet<CountryCode> = config
        .country_geometry
        .iter()
        .filter(|(_, points)| {
            points
                .iter()
                .any(|p| haversine_km(origin, *p) <= radius_km + DISTANCE_EPSILON_KM)
        })
        .map(|(cc, _)| *cc)
        .collect();
    out.insert(vantage.country);
    out
}

/// Registries responsible for any of `countries`, plus the codes that were
/// not in the map.
pub fn feasible_rirs(
    countries: &BTreeSet<CountryCode>,
    map: &RegionMap,
) -> (BTreeSet<RirId>, Vec<CountryCode>) {
    let mut rirs = BTreeSet::new();
    let mut unknown = Vec::new();
    for cc in countries {
        match map.rir_of(*cc) {
            Ok(rir) => {
                rirs.insert(rir);
            }
            Err(_) => unknown.push(*cc),
        }
    }
    (rirs, unknown)
}

/// Feasibility disc of one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    pub min_vantage_id: String,
    pub min_rtt_ms: f64,
    pub radius_km: f64,
    pub countries: BTreeSet<CountryCode>,
    pub rirs: BTreeSet<RirId>,
}

/// Runs the whole inference for one target's results.
pub fn infer_region(
    results: &[MeasurementResult],
    vantages: &BTreeMap<String, VantagePoint>,
    config: &GeoInferenceConfig,
    map: &RegionMap,
) -> Result<FeasibleRegion> {
    let (vantage_id, rtt) = min_rtt(results)?;
    let vantage = vantages
        .get(&vantage_id)
        .ok_or_else(|| Error::Config(format!("results reference unknown vantage {vantage_id}")))?;
    let radius_km = rtt_to_radius(rtt, config)?;
    let countries = feasible_countries(vantage, radius_km, config);
    let (rirs, unknown) = feasible_rirs(&countries, map);
    if !unknown.is_empty() {
        log::debug!("feasible set has unmapped countries {unknown:?}");
    }
    Ok(FeasibleRegion {
        min_vantage_id: vantage_id,
        min_rtt_ms: rtt,
        radius_km,
        countries,
        rirs,
    })
}

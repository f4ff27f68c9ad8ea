//! Measurement backends: archived replay, a geometric simulator, and an
//! HTTP client for a public measurement platform.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::net::IpAddr;
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geo::{haversine_km, GeoPoint, C_KM_PER_S, FIBER_FACTOR};
use crate::vantage::VantagePoint;

/// Echo requests per (vantage, target).
pub const PACKETS: usize = 3;

/// Environment variable holding the live platform API key.
pub const API_KEY_ENV: &str = "GEOAUDIT_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum MeasureError {
    #[error("measurement backend unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable { attempts: u32, reason: String },

    #[error("no archived result for vantage {vantage_id} and target {target}")]
    ReplayMiss { vantage_id: String, target: IpAddr },

    #[error("target {0} is not part of the synthetic world")]
    UnknownTarget(IpAddr),
}

impl MeasureError {
    /// Whether the campaign must stop rather than mark the target unresponsive.
    pub fn is_fatal(&self) -> bool {
        matches!(self, MeasureError::BackendUnavailable { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub vantage_id: String,
    pub target: IpAddr,
    /// Replies that came back; lost packets are simply absent.
    pub rtts_ms: Vec<f64>,
    #[serde(default)]
    pub timestamp: u64,
}

impl MeasurementResult {
    pub fn is_valid(&self) -> bool {
        self.rtts_ms.len() <= PACKETS && self.rtts_ms.iter().all(|r| r.is_finite() && *r >= 0.0)
    }
}

/// Anything that can ping one target from a set of vantages.
///
/// Returns one result per vantage, in vantage order. A vantage that got no
/// reply yields an empty `rtts_ms`.
pub trait MeasurementBackend: Sync {
    fn measure_target(
        &self,
        target: IpAddr,
        vantages: &[VantagePoint],
    ) -> std::result::Result<Vec<MeasurementResult>, MeasureError>;
}

/// Measures every target of a plan.
pub fn run_plan(
    targets: &[IpAddr],
    vantages: &[VantagePoint],
    backend: &dyn MeasurementBackend,
) -> std::result::Result<Vec<MeasurementResult>, MeasureError> {
    let mut out = Vec::with_capacity(targets.len() * vantages.len());
    for target in targets {
        out.extend(backend.measure_target(*target, vantages)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- simulator

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    /// Physical location of each simulated target.
    pub target_locations: BTreeMap<IpAddr, GeoPoint>,
    /// Targets that never answer.
    pub dropouts: std::collections::BTreeSet<IpAddr>,
    pub noise_ms: f64,
    pub propagation_factor: f64,
}

impl SyntheticWorld {
    pub fn new(noise_ms: f64, propagation_factor: f64) -> Result<Self> {
        if !(noise_ms >= 0.0 && noise_ms.is_finite()) {
            return Err(Error::Config(format!(
                "noise {noise_ms} must be a non-negative number"
            )));
        }
        if !(propagation_factor > 0.0 && propagation_factor <= 1.0) {
            return Err(Error::Config(format!(
                "propagation factor {propagation_factor} outside (0, 1]"
            )));
        }
        Ok(SyntheticWorld {
            target_locations: BTreeMap::new(),
            dropouts: Default::default(),
            noise_ms,
            propagation_factor,
        })
    }

    /// Reads `target,lat,lon[,responsive]` CSV. A `responsive` value of
    /// `false` or `0` puts the target in the dropout set.
    pub fn load_targets(&mut self, reader: impl std::io::Read) -> Result<()> {
        #[derive(Deserialize)]
        struct Row {
            target: IpAddr,
            lat: f64,
            lon: f64,
            #[serde(default)]
            responsive: Option<String>,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .comment(Some(b'#'))
            .from_reader(reader);
        for (idx, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Config(format!("world row {}: {e}", idx + 1)))?;
            let point = GeoPoint::new(row.lat, row.lon);
            if !point.is_valid() {
                return Err(Error::Config(format!(
                    "world row {}: bad coordinates",
                    idx + 1
                )));
            }
            self.target_locations.insert(row.target, point);
            if matches!(row.responsive.as_deref(), Some("false" | "0" | "no")) {
                self.dropouts.insert(row.target);
            }
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let reader = crate::jsonl::open_maybe_gzip(path)?;
        self.load_targets(reader).map_err(|e| match e {
            Error::Config(reason) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason,
            },
            other => other,
        })
    }

    /// Noise-free round trip between two points.
    pub fn base_rtt_ms(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        let c_km_per_ms = C_KM_PER_S / 1000.0;
        2.0 * haversine_km(a, b) / (self.propagation_factor * c_km_per_ms)
    }
}

impl Default for SyntheticWorld {
    fn default() -> Self {
        SyntheticWorld::new(0.0, FIBER_FACTOR).expect("valid defaults")
    }
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in *part {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Three samples of base RTT plus independent uniform noise in
/// `[0, noise_ms]`.
pub fn simulate_rtt(
    world: &SyntheticWorld,
    vantage: &VantagePoint,
    target: IpAddr,
    rng: &mut impl Rng,
) -> std::result::Result<Vec<f64>, MeasureError> {
    let location = world
        .target_locations
        .get(&target)
        .ok_or(MeasureError::UnknownTarget(target))?;
    if world.dropouts.contains(&target) {
        return Ok(Vec::new());
    }
    let base = world.base_rtt_ms(vantage.location(), *location);
    Ok((0..PACKETS)
        .map(|_| {
            if world.noise_ms > 0.0 {
                base + rng.gen_range(0.0..=world.noise_ms)
            } else {
                base
            }
        })
        .collect())
}

/// Simulator backend. Each (vantage, target) pair draws from its own RNG
/// stream derived from the seed, so results do not depend on scheduling.
#[derive(Clone, Debug)]
pub struct SimulatorBackend {
    pub world: SyntheticWorld,
    pub seed: u64,
    pub timestamp: u64,
}

impl SimulatorBackend {
    pub fn new(world: SyntheticWorld, seed: u64) -> Self {
        SimulatorBackend {
            world,
            seed,
            timestamp: 0,
        }
    }

    fn rng_for(&self, vantage_id: &str, target: IpAddr) -> ChaCha8Rng {
        let t = target.to_string();
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(&[vantage_id.as_bytes(), t.as_bytes()]))
    }
}

impl MeasurementBackend for SimulatorBackend {
    fn measure_target(
        &self,
        target: IpAddr,
        vantages: &[VantagePoint],
    ) -> std::result::Result<Vec<MeasurementResult>, MeasureError> {
        vantages
            .iter()
            .map(|v| {
                let mut rng = self.rng_for(&v.id, target);
                Ok(MeasurementResult {
                    vantage_id: v.id.clone(),
                    target,
                    rtts_ms: simulate_rtt(&self.world, v, target, &mut rng)?,
                    timestamp: self.timestamp,
                })
            })
            .collect()
    }
}

// ------------------------------------------------------------------- replay

/// Serves archived results. Strict: a missing pair is an error.
#[derive(Clone, Debug, Default)]
pub struct ReplayBackend {
    archive: HashMap<(String, IpAddr), MeasurementResult>,
}

impl ReplayBackend {
    pub fn from_results(results: impl IntoIterator<Item = MeasurementResult>) -> Self {
        ReplayBackend {
            archive: results
                .into_iter()
                .map(|r| ((r.vantage_id.clone(), r.target), r))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let results: Vec<MeasurementResult> = crate::jsonl::read_jsonl(path)?;
        if let Some(bad) = results.iter().position(|r| !r.is_valid()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: bad + 1,
                reason: "rtts must be at most three finite non-negative values".into(),
            });
        }
        Ok(Self::from_results(results))
    }

    pub fn len(&self) -> usize {
        self.archive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.archive.is_empty()
    }
}

impl MeasurementBackend for ReplayBackend {
    fn measure_target(
        &self,
        target: IpAddr,
        vantages: &[VantagePoint],
    ) -> std::result::Result<Vec<MeasurementResult>, MeasureError> {
        vantages
            .iter()
            .map(|v| {
                self.archive
                    .get(&(v.id.clone(), target))
                    .cloned()
                    .ok_or_else(|| MeasureError::ReplayMiss {
                        vantage_id: v.id.clone(),
                        target,
                    })
            })
            .collect()
    }
}

// --------------------------------------------------------------------- live

/// `<tool>-<YYYY-MM-DD>`.
pub fn measurement_tag(tool: &str, dataset_date: chrono::NaiveDate) -> String {
    format!("{tool}-{}", dataset_date.format("%Y-%m-%d"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Non-success HTTP status.
    Status(u16, String),
    /// Connection-level failure.
    Network(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Status(code, _) => *code == 429 || *code >= 500,
            TransportError::Network(_) => true,
        }
    }
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Status(code, body) => write!(f, "HTTP {code}: {body}"),
            TransportError::Network(msg) => f.write_str(msg),
        }
    }
}

/// Minimal JSON-over-HTTP surface the live backend needs.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &Value,
    ) -> std::result::Result<Value, TransportError>;
    fn get_json(&self, url: &str, api_key: &str) -> std::result::Result<Value, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        UreqTransport {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

fn ureq_result(
    r: std::result::Result<ureq::Response, ureq::Error>,
) -> std::result::Result<Value, TransportError> {
    match r {
        Ok(resp) => resp
            .into_json::<Value>()
            .map_err(|e| TransportError::Network(e.to_string())),
        Err(ureq::Error::Status(code, resp)) => Err(TransportError::Status(
            code,
            resp.into_string().unwrap_or_default(),
        )),
        Err(e) => Err(TransportError::Network(e.to_string())),
    }
}

impl HttpTransport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &Value,
    ) -> std::result::Result<Value, TransportError> {
        ureq_result(
            self.agent
                .post(url)
                .set("Authorization", &format!("Key {api_key}"))
                .send_json(body.clone()),
        )
    }

    fn get_json(&self, url: &str, api_key: &str) -> std::result::Result<Value, TransportError> {
        ureq_result(
            self.agent
                .get(url)
                .set("Authorization", &format!("Key {api_key}"))
                .call(),
        )
    }
}

/// Exponential back-off: `base * 2^attempt`, capped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Backoff {
    pub retries: u32,
    pub base: Duration,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            retries: 3,
            base: Duration::from_secs(2),
            cap: Duration::from_secs(60),
        }
    }
}

impl Backoff {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt);
        self.base.saturating_mul(factor).min(self.cap)
    }
}

pub type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

/// Client for a RIPE-Atlas-style v2 API. Vantage ids are probe ids.
pub struct LiveBackend {
    pub base_url: String,
    api_key: String,
    pub tag: String,
    pub backoff: Backoff,
    pub poll_interval: Duration,
    pub max_polls: u32,
    transport: Box<dyn HttpTransport>,
    sleeper: Sleeper,
}

impl LiveBackend {
    pub fn new(
        base_url: &str,
        api_key: String,
        tag: String,
        transport: Box<dyn HttpTransport>,
    ) -> Self {
        LiveBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            tag,
            backoff: Backoff::default(),
            poll_interval: Duration::from_secs(30),
            max_polls: 20,
            transport,
            sleeper: Box::new(std::thread::sleep),
        }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(base_url: &str, tag: String) -> std::result::Result<Self, MeasureError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| MeasureError::BackendUnavailable {
            attempts: 0,
            reason: format!("{API_KEY_ENV} is not set"),
        })?;
        Ok(Self::new(
            base_url,
            key,
            tag,
            Box::new(UreqTransport::new(Duration::from_secs(30))),
        ))
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    fn with_retries<T>(
        &self,
        mut call: impl FnMut() -> std::result::Result<T, TransportError>,
    ) -> std::result::Result<T, MeasureError> {
        let mut attempt = 0;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable() && attempt < self.backoff.retries => {
                    log::warn!("live backend: {e}; retrying");
                    (self.sleeper)(self.backoff.delay(attempt));
                    attempt += 1;
                }
                Err(e) => {
                    return Err(MeasureError::BackendUnavailable {
                        attempts: attempt + 1,
                        reason: e.to_string(),
                    })
                }
            }
        }
    }

    pub fn request_body(&self, target: IpAddr, vantages: &[VantagePoint]) -> Value {
        let ids: Vec<&str> = vantages.iter().map(|v| v.id.as_str()).collect();
        json!({
            "definitions": [{
                "target": target.to_string(),
                "af": if target.is_ipv4() { 4 } else { 6 },
                "type": "ping",
                "packets": PACKETS,
                "description": format!("{} {}", self.tag, target),
                "tags": [self.tag],
                "is_public": true,
            }],
            "probes": [{
                "type": "probes",
                "value": ids.join(","),
                "requested": ids.len(),
            }],
            "is_oneoff": true,
        })
    }

    fn create(
        &self,
        target: IpAddr,
        vantages: &[VantagePoint],
    ) -> std::result::Result<u64, MeasureError> {
        let url = format!("{}/api/v2/measurements/", self.base_url);
        let body = self.request_body(target, vantages);
        let resp = self.with_retries(|| self.transport.post_json(&url, &self.api_key, &body))?;
        resp["measurements"][0]
            .as_u64()
            .ok_or_else(|| MeasureError::BackendUnavailable {
                attempts: 1,
                reason: format!("unexpected create response: {resp}"),
            })
    }
}

/// Extracts `(probe id, rtts, timestamp)` from one result object.
fn parse_result_object(obj: &Value) -> Option<(String, Vec<f64>, u64)> {
    let id = match &obj["prb_id"] {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return None,
    };
    let rtts = obj["result"]
        .as_array()
        .map(|replies| {
            replies
                .iter()
                .filter_map(|r| r["rtt"].as_f64())
                .filter(|r| r.is_finite() && *r >= 0.0)
                .take(PACKETS)
                .collect()
        })
        .unwrap_or_default();
    Some((id, rtts, obj["timestamp"].as_u64().unwrap_or(0)))
}

impl MeasurementBackend for LiveBackend {
    fn measure_target(
        &self,
        target: IpAddr,
        vantages: &[VantagePoint],
    ) -> std::result::Result<Vec<MeasurementResult>, MeasureError> {
        let id = self.create(target, vantages)?;
        let url = format!("{}/api/v2/measurements/{id}/results/", self.base_url);
        let mut seen: BTreeMap<String, (Vec<f64>, u64)> = BTreeMap::new();
        for poll in 0..self.max_polls {
            if poll > 0 {
                (self.sleeper)(self.poll_interval);
            }
            let resp = self.with_retries(|| self.transport.get_json(&url, &self.api_key))?;
            for obj in resp.as_array().into_iter().flatten() {
                if let Some((probe, rtts, ts)) = parse_result_object(obj) {
                    seen.insert(probe, (rtts, ts));
                }
            }
            if vantages.iter().all(|v| seen.contains_key(&v.id)) {
                break;
            }
        }
        Ok(vantages
            .iter()
            .map(|v| {
                let (rtts_ms, timestamp) = seen.get(&v.id).cloned().unwrap_or_default();
                MeasurementResult {
                    vantage_id: v.id.clone(),
                    target,
                    rtts_ms,
                    timestamp,
                }
            })
            .collect())
    }
}

// ----------------------------------------------------------------- campaign

/// One target and the vantages assigned to it.
#[derive(Clone, Debug)]
pub struct TargetJob {
    pub target: IpAddr,
    pub vantages: Vec<VantagePoint>,
}

#[derive(Debug, Default)]
pub struct CampaignOutput {
    /// Sorted by target, then vantage id.
    pub results: Vec<MeasurementResult>,
    /// Targets whose measurement failed without stopping the campaign.
    pub failures: BTreeMap<IpAddr, String>,
}

/// Runs jobs on a pool of `concurrency` workers. Output is sorted, so it
/// does not depend on the worker count. A fatal backend error aborts.
pub fn run_campaign(
    jobs: &[TargetJob],
    backend: &dyn MeasurementBackend,
    concurrency: usize,
) -> Result<CampaignOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<(
        IpAddr,
        std::result::Result<Vec<MeasurementResult>, MeasureError>,
    )> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                (
                    job.target,
                    backend.measure_target(job.target, &job.vantages),
                )
            })
            .collect()
    });
    let mut out = CampaignOutput::default();
    for (target, outcome) in outcomes {
        match outcome {
            Ok(results) => out.results.extend(results),
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => {
                log::warn!("target {target}: {e}");
                out.failures.insert(target, e.to_string());
            }
        }
    }
    out.results.sort_by(|a, b| {
        a.target
            .cmp(&b.target)
            .then_with(|| a.vantage_id.cmp(&b.vantage_id))
    });
    Ok(out)
}

/// Groups results by target.
pub fn by_target(results: &[MeasurementResult]) -> BTreeMap<IpAddr, Vec<MeasurementResult>> {
    let mut out: BTreeMap<IpAddr, Vec<MeasurementResult>> = BTreeMap::new();
    for r in results {
        out.entry(r.target).or_default().push(r.clone());
    }
    out
}

/// Reads a results file from any buffered source.
pub fn read_results(reader: impl BufRead) -> Result<Vec<MeasurementResult>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(Error::UnreadableStream)?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

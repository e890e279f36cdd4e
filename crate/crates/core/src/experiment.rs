//! Experiment orchestration: trace source, engine, simulation loop, reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arsenal::{
    Arsenal, ArsenalConfig, SelectionPolicy, SelectionRecord, ShadowFilter, ShadowStats,
};
use crate::cache::{AccessOutcome, Cache, CacheConfig, CacheStats, PrefetchStats};
use crate::error::{Result, SimError};
use crate::metrics::{compute_metrics, default_component_costs, overhead, Metrics, OverheadReport};
use crate::prefetchers::{build_standalone, ComponentParams, Prefetcher};
use crate::trace::{generate, parse_trace, PatternSpec};
use crate::types::{AccessEvent, ComponentId, LineAddress, PaeContext};

/// Events generated for a pattern when no length is given.
pub const DEFAULT_LENGTH: u64 = 1_000_000;

/// Anything that turns activation events into prefetch requests.
pub trait PaeEngine {
    fn on_pae(&mut self, ctx: &PaeContext) -> Vec<(LineAddress, ComponentId)>;
}

impl<F: ShadowFilter> PaeEngine for Arsenal<F> {
    fn on_pae(&mut self, ctx: &PaeContext) -> Vec<(LineAddress, ComponentId)> {
        Arsenal::on_pae(self, ctx)
            .into_iter()
            .map(|r| (r.line, r.source))
            .collect()
    }
}

/// A single component wired straight to the prefetch queue.
pub struct Standalone<P>(pub P);

impl<P: Prefetcher> PaeEngine for Standalone<P> {
    fn on_pae(&mut self, ctx: &PaeContext) -> Vec<(LineAddress, ComponentId)> {
        let id = self.0.id();
        self.0.on_pae(ctx).into_iter().map(|l| (l, id)).collect()
    }
}

impl Prefetcher for Box<dyn Prefetcher> {
    fn id(&self) -> ComponentId {
        (**self).id()
    }

    fn on_pae(&mut self, ctx: &PaeContext) -> Vec<LineAddress> {
        (**self).on_pae(ctx)
    }

    fn end_phase(&mut self, score: u16) {
        (**self).end_phase(score)
    }
}

pub struct NoPrefetch;

impl PaeEngine for NoPrefetch {
    fn on_pae(&mut self, _ctx: &PaeContext) -> Vec<(LineAddress, ComponentId)> {
        Vec::new()
    }
}

/// One cache driven by one engine, advanced an event at a time.
pub struct Simulation<E> {
    cache: Cache,
    engine: E,
}

impl<E: PaeEngine> Simulation<E> {
    pub fn new(cfg: CacheConfig, engine: E) -> Result<Self> {
        Ok(Simulation {
            cache: Cache::new(cfg)?,
            engine,
        })
    }

    /// Fills due prefetches, serves the demand, and on an activation event
    /// hands the accepted requests to the prefetch queue.
    pub fn step(&mut self, event: &AccessEvent) -> AccessOutcome {
        self.cache.fill_due(event.seq);
        let outcome = self.cache.access(event);
        if outcome.is_pae {
            let ctx = PaeContext {
                pc: event.pc,
                line: outcome.line,
                seq: event.seq,
                outcome: outcome.kind,
            };
            for (line, source) in self.engine.on_pae(&ctx) {
                self.cache.enqueue_prefetch(line, source, event.seq);
            }
        }
        outcome
    }

    pub fn run(&mut self, events: &[AccessEvent]) {
        for e in events {
            self.step(e);
        }
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn engine(&self) -> &E {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut E {
        &mut self.engine
    }

    pub fn into_parts(self) -> (Cache, E) {
        (self.cache, self.engine)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EngineSpec {
    Arsenal {
        #[serde(default)]
        policy: SelectionPolicy,
    },
    Standalone {
        component: ComponentId,
        /// Overrides the component's aggressiveness knob.
        #[serde(default)]
        degree: Option<u32>,
    },
    #[serde(rename = "none")]
    NoPrefetch,
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec::Arsenal {
            policy: SelectionPolicy::TestCase2,
        }
    }
}

impl fmt::Display for EngineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineSpec::Arsenal {
                policy: SelectionPolicy::TestCase1,
            } => f.write_str("arsenal-tc1"),
            EngineSpec::Arsenal {
                policy: SelectionPolicy::TestCase2,
            } => f.write_str("arsenal-tc2"),
            EngineSpec::Standalone {
                component,
                degree: None,
            } => write!(f, "{component}"),
            EngineSpec::Standalone {
                component,
                degree: Some(d),
            } => write!(f, "{component}:d={d}"),
            EngineSpec::NoPrefetch => f.write_str("none"),
        }
    }
}

impl FromStr for EngineSpec {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arsenal-tc1" => Ok(EngineSpec::Arsenal {
                policy: SelectionPolicy::TestCase1,
            }),
            "arsenal-tc2" | "arsenal" => Ok(EngineSpec::Arsenal {
                policy: SelectionPolicy::TestCase2,
            }),
            "none" => Ok(EngineSpec::NoPrefetch),
            other => {
                let (name, degree) = match other.split_once(":d=") {
                    Some((n, d)) => {
                        let d = d
                            .parse()
                            .map_err(|_| SimError::config(format!("bad degree in `{other}`")))?;
                        (n, Some(d))
                    }
                    None => (other, None),
                };
                let component = name
                    .parse()
                    .map_err(|_| SimError::config(format!("unknown engine `{other}`")))?;
                Ok(EngineSpec::Standalone { component, degree })
            }
        }
    }
}

/// Where the accesses come from: a trace file or a synthetic pattern.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub pattern: Option<PatternSpec>,
    /// Accesses to generate from `pattern`.
    #[serde(default)]
    pub length: Option<u64>,
}

impl TraceConfig {
    pub fn from_file(path: impl Into<PathBuf>) -> Self {
        TraceConfig {
            file: Some(path.into()),
            ..Default::default()
        }
    }

    pub fn from_pattern(pattern: PatternSpec, length: u64) -> Self {
        TraceConfig {
            pattern: Some(pattern),
            length: Some(length),
            ..Default::default()
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.file, &self.pattern) {
            (Some(_), Some(_)) => Err(SimError::config(
                "trace takes either a file or a pattern, not both",
            )),
            (None, None) => Err(SimError::config("trace needs a file or a pattern")),
            (None, Some(p)) => p.validate(),
            (Some(_), None) => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match (&self.file, &self.pattern) {
            (Some(f), _) => f.display().to_string(),
            (None, Some(p)) => p.label(),
            (None, None) => String::new(),
        }
    }

    pub fn load(&self) -> Result<Vec<AccessEvent>> {
        self.validate()?;
        match (&self.file, &self.pattern) {
            (Some(path), _) => load_trace_file(path),
            (None, Some(p)) => generate(p, self.length.unwrap_or(DEFAULT_LENGTH)),
            (None, None) => unreachable!("validated above"),
        }
    }
}

pub fn load_trace_file(path: &Path) -> Result<Vec<AccessEvent>> {
    parse_trace(BufReader::new(File::open(path)?))
}

fn default_name() -> String {
    "experiment".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub trace: TraceConfig,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub engine: EngineSpec,
    #[serde(default)]
    pub arsenal: ArsenalConfig,
    #[serde(default)]
    pub components: ComponentParams,
    /// Replaces the pattern seed and the filter master seed when set.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Leading accesses excluded from the metrics.
    #[serde(default)]
    pub warmup: u64,
}

impl ExperimentConfig {
    pub fn new(trace: TraceConfig, engine: EngineSpec) -> Self {
        ExperimentConfig {
            name: default_name(),
            trace,
            cache: CacheConfig::default(),
            engine,
            arsenal: ArsenalConfig::default(),
            components: ComponentParams::default(),
            seed: None,
            warmup: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The config with `seed` folded into the pattern and filter seeds.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        if let Some(seed) = cfg.seed {
            if let Some(p) = cfg.trace.pattern.as_mut() {
                p.seed = seed;
            }
            cfg.arsenal.bloom_seed = seed;
        }
        if let EngineSpec::Arsenal { policy } = cfg.engine {
            cfg.arsenal.selection_policy = policy;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.trace.validate()?;
        self.cache.validate()?;
        self.arsenal.validate()?;
        if let EngineSpec::Standalone {
            component,
            degree: Some(d),
        } = self.engine
        {
            apply_degree(&mut self.components.clone(), component, d)?;
        }
        Ok(())
    }
}

fn apply_degree(params: &mut ComponentParams, component: ComponentId, degree: u32) -> Result<()> {
    if degree == 0 {
        return Err(SimError::config("degree must be positive"));
    }
    match component {
        ComponentId::NextLine => params.next_line.standalone_degree = degree,
        ComponentId::IpStride => params.ip_stride.degree = degree,
        ComponentId::Spp => params.spp.max_depth = degree,
        ComponentId::Mlop => params.mlop.levels = degree as usize,
        ComponentId::Tskid => {
            return Err(SimError::config("tskid has no degree setting"));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowEntry {
    pub component: ComponentId,
    #[serde(flatten)]
    pub stats: ShadowStats,
}

/// Bookkeeping identities checked at the end of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    pub in_flight_at_end: u64,
    /// requested = issued + dropped.
    pub requests_balanced: bool,
    /// issued = filled + late + in flight at end.
    pub issues_balanced: bool,
    /// accesses = hits + prefetch hits + late + misses.
    pub demands_balanced: bool,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.requests_balanced && self.issues_balanced && self.demands_balanced
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub name: String,
    pub trace: String,
    pub engine: String,
    pub events: u64,
    pub warmup: u64,
    pub cache: CacheConfig,
    pub demand: CacheStats,
    pub prefetch: PrefetchStats,
    pub per_source: BTreeMap<ComponentId, PrefetchStats>,
    pub conservation: Conservation,
    pub metrics: Metrics,
    pub shadow: Vec<ShadowEntry>,
    pub timeline: Vec<SelectionRecord>,
    pub overhead: Option<OverheadReport>,
}

/// Raw end-of-run state of one simulation.
pub struct RunOutput {
    pub demand: CacheStats,
    pub prefetch: PrefetchStats,
    pub per_source: BTreeMap<ComponentId, PrefetchStats>,
    pub conservation: Conservation,
    pub shadow: Vec<ShadowEntry>,
    pub timeline: Vec<SelectionRecord>,
}

fn demand_since(now: &CacheStats, then: &CacheStats) -> CacheStats {
    CacheStats {
        accesses: now.accesses - then.accesses,
        hits: now.hits - then.hits,
        prefetch_hits: now.prefetch_hits - then.prefetch_hits,
        late_prefetch_hits: now.late_prefetch_hits - then.late_prefetch_hits,
        misses: now.misses - then.misses,
    }
}

fn prefetch_since(now: &PrefetchStats, then: &PrefetchStats) -> PrefetchStats {
    PrefetchStats {
        requested: now.requested - then.requested,
        issued: now.issued - then.issued,
        dropped_resident: now.dropped_resident - then.dropped_resident,
        dropped_in_flight: now.dropped_in_flight - then.dropped_in_flight,
        dropped_queue_full: now.dropped_queue_full - then.dropped_queue_full,
        filled: now.filled - then.filled,
        late: now.late - then.late,
        useful: now.useful - then.useful,
        evicted_unused: now.evicted_unused - then.evicted_unused,
    }
}

fn conservation(cache: &Cache) -> Conservation {
    let p = cache.prefetch_stats();
    let d = cache.stats();
    let in_flight = cache.in_flight().len() as u64;
    Conservation {
        in_flight_at_end: in_flight,
        requests_balanced: p.requested == p.issued + p.dropped(),
        issues_balanced: p.issued == p.filled + p.late + in_flight,
        demands_balanced: d.accesses == d.total(),
    }
}

/// Runs `engine` over `events`, counting only accesses after `warmup`.
pub fn simulate<E: PaeEngine>(
    events: &[AccessEvent],
    cfg: &CacheConfig,
    engine: E,
    warmup: u64,
) -> Result<(RunOutput, E)> {
    let mut sim = Simulation::new(cfg.clone(), engine)?;
    let split = (warmup as usize).min(events.len());
    sim.run(&events[..split]);
    let d0 = *sim.cache().stats();
    let p0 = *sim.cache().prefetch_stats();
    let s0 = sim.cache().per_source_stats().clone();
    sim.run(&events[split..]);
    let cache = sim.cache();
    let per_source = cache
        .per_source_stats()
        .iter()
        .map(|(&id, s)| {
            let base = s0.get(&id).copied().unwrap_or_default();
            (id, prefetch_since(s, &base))
        })
        .collect();
    let out = RunOutput {
        demand: demand_since(cache.stats(), &d0),
        prefetch: prefetch_since(cache.prefetch_stats(), &p0),
        per_source,
        conservation: conservation(cache),
        shadow: Vec::new(),
        timeline: Vec::new(),
    };
    Ok((out, sim.into_parts().1))
}

/// Runs the engine described by a resolved config.
pub fn run_engine(
    events: &[AccessEvent],
    cfg: &ExperimentConfig,
    engine: &EngineSpec,
) -> Result<RunOutput> {
    let max_line = cfg.cache.max_line();
    match *engine {
        EngineSpec::NoPrefetch => Ok(simulate(events, &cfg.cache, NoPrefetch, cfg.warmup)?.0),
        EngineSpec::Standalone { component, degree } => {
            let mut params = cfg.components.clone();
            if let Some(d) = degree {
                apply_degree(&mut params, component, d)?;
            }
            let p = Standalone(build_standalone(component, &params, max_line));
            Ok(simulate(events, &cfg.cache, p, cfg.warmup)?.0)
        }
        EngineSpec::Arsenal { policy } => {
            let mut acfg = cfg.arsenal.clone();
            acfg.selection_policy = policy;
            let arsenal = Arsenal::new(acfg, &cfg.components, max_line)?;
            let (mut out, arsenal) = simulate(events, &cfg.cache, arsenal, cfg.warmup)?;
            out.shadow = arsenal
                .shadow_stats()
                .map(|(component, stats)| ShadowEntry { component, stats })
                .collect();
            out.timeline = arsenal.timeline().to_vec();
            Ok(out)
        }
    }
}

fn amat_of(out: &RunOutput, cache: &CacheConfig) -> Result<f64> {
    out.demand.amat(cache)
}

fn build_report(
    cfg: &ExperimentConfig,
    events: u64,
    out: RunOutput,
    baseline_amat: f64,
) -> Result<SimReport> {
    let metrics = compute_metrics(
        &out.demand,
        &out.prefetch,
        &out.per_source,
        &cfg.cache,
        baseline_amat,
    )?;
    let overhead = match cfg.engine {
        EngineSpec::Arsenal { policy } => {
            let roster = policy.roster();
            let bloom = cfg.arsenal.bloom_params(roster[0])?;
            Some(overhead(
                roster.len() as u32,
                &bloom,
                &default_component_costs(roster),
            )?)
        }
        _ => None,
    };
    Ok(SimReport {
        name: cfg.name.clone(),
        trace: cfg.trace.label(),
        engine: cfg.engine.to_string(),
        events,
        warmup: cfg.warmup,
        cache: cfg.cache.clone(),
        demand: out.demand,
        prefetch: out.prefetch,
        per_source: out.per_source,
        conservation: out.conservation,
        metrics,
        shadow: out.shadow,
        timeline: out.timeline,
        overhead,
    })
}

/// Runs one experiment plus the no-prefetch baseline on the same trace.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimReport> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let events = cfg.trace.load()?;
    run_on_events(&cfg, &events)
}

/// [`run_experiment`] on an already loaded trace. `cfg` must be resolved.
pub fn run_on_events(cfg: &ExperimentConfig, events: &[AccessEvent]) -> Result<SimReport> {
    let (out, baseline) = rayon::join(
        || run_engine(events, cfg, &cfg.engine),
        || match cfg.engine {
            EngineSpec::NoPrefetch => Ok(None),
            _ => run_engine(events, cfg, &EngineSpec::NoPrefetch).map(Some),
        },
    );
    let out = out?;
    let baseline_amat = match baseline? {
        Some(b) => amat_of(&b, &cfg.cache)?,
        None => amat_of(&out, &cfg.cache)?,
    };
    build_report(cfg, events.len() as u64, out, baseline_amat)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default)]
    pub policy: SelectionPolicy,
    pub traces: Vec<TraceConfig>,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub arsenal: ArsenalConfig,
    #[serde(default)]
    pub components: ComponentParams,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub warmup: u64,
}

impl CompareConfig {
    pub fn new(policy: SelectionPolicy, traces: Vec<TraceConfig>) -> Self {
        CompareConfig {
            policy,
            traces,
            cache: CacheConfig::default(),
            arsenal: ArsenalConfig::default(),
            components: ComponentParams::default(),
            seed: None,
            warmup: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Engines compared on every trace, baseline first.
    pub fn engines(&self) -> Vec<EngineSpec> {
        let mut out = vec![EngineSpec::NoPrefetch];
        out.extend(
            self.policy
                .roster()
                .iter()
                .map(|&component| EngineSpec::Standalone {
                    component,
                    degree: None,
                }),
        );
        out.push(EngineSpec::Arsenal {
            policy: self.policy,
        });
        out
    }

    fn experiment(&self, trace: &TraceConfig, engine: EngineSpec) -> ExperimentConfig {
        ExperimentConfig {
            name: trace.label(),
            trace: trace.clone(),
            cache: self.cache.clone(),
            engine,
            arsenal: self.arsenal.clone(),
            components: self.components.clone(),
            seed: self.seed,
            warmup: self.warmup,
        }
        .resolved()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineResult {
    pub engine: String,
    pub amat: f64,
    /// Baseline AMAT over this engine's AMAT.
    pub speedup_proxy: f64,
    /// `speedup_proxy - 1`.
    pub improvement: f64,
    pub coverage: f64,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceComparison {
    pub trace: String,
    pub events: u64,
    pub baseline_amat: f64,
    /// Baseline, each standalone component, then the meta-prefetcher.
    pub results: Vec<EngineResult>,
    /// Best standalone component on this trace.
    pub oracle: String,
    pub oracle_speedup: f64,
    pub selections: Vec<SelectionRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub engine: String,
    /// Geometric mean of the speedup proxy over all traces.
    pub geomean_speedup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub policy: SelectionPolicy,
    pub traces: Vec<TraceComparison>,
    pub summary: Vec<CompareSummary>,
}

impl CompareReport {
    pub fn result(&self, trace: usize, engine: &str) -> Option<&EngineResult> {
        self.traces
            .get(trace)?
            .results
            .iter()
            .find(|r| r.engine == engine)
    }
}

/// Every engine of the policy on every trace, run in parallel and joined in
/// (trace, engine) order.
pub fn compare(cfg: &CompareConfig) -> Result<CompareReport> {
    if cfg.traces.is_empty() {
        return Err(SimError::config("compare needs at least one trace"));
    }
    let engines = cfg.engines();
    let traces: Vec<(TraceConfig, Vec<AccessEvent>)> = cfg
        .traces
        .par_iter()
        .map(|t| {
            let exp = cfg.experiment(t, EngineSpec::NoPrefetch);
            exp.validate()?;
            Ok((exp.trace.clone(), exp.trace.load()?))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..traces.len())
        .flat_map(|t| (0..engines.len()).map(move |e| (t, e)))
        .collect();
    let outputs: Vec<RunOutput> = jobs
        .par_iter()
        .map(|&(t, e)| {
            let exp = cfg.experiment(&traces[t].0, engines[e].clone());
            run_engine(&traces[t].1, &exp, &engines[e])
        })
        .collect::<Result<_>>()?;

    let mut comparisons = Vec::with_capacity(traces.len());
    let mut outputs = outputs.into_iter();
    for (trace, events) in &traces {
        let runs: Vec<RunOutput> = outputs.by_ref().take(engines.len()).collect();
        let baseline_amat = amat_of(&runs[0], &cfg.cache)?;
        let mut results = Vec::with_capacity(runs.len());
        let mut selections = Vec::new();
        for (engine, out) in engines.iter().zip(runs) {
            let m = compute_metrics(
                &out.demand,
                &out.prefetch,
                &out.per_source,
                &cfg.cache,
                baseline_amat,
            )?;
            results.push(EngineResult {
                engine: engine.to_string(),
                amat: m.amat,
                speedup_proxy: m.speedup_proxy,
                improvement: m.speedup_proxy - 1.0,
                coverage: m.coverage,
                accuracy: m.accuracy,
            });
            if matches!(engine, EngineSpec::Arsenal { .. }) {
                selections = out.timeline;
            }
        }
        let best = results[1..results.len() - 1]
            .iter()
            .fold(None::<&EngineResult>, |best, r| match best {
                Some(b) if b.speedup_proxy >= r.speedup_proxy => Some(b),
                _ => Some(r),
            })
            .expect("roster is never empty");
        comparisons.push(TraceComparison {
            trace: trace.label(),
            events: events.len() as u64,
            baseline_amat,
            oracle: best.engine.clone(),
            oracle_speedup: best.speedup_proxy,
            results,
            selections,
        });
    }

    let mut summary: Vec<CompareSummary> = engines
        .iter()
        .enumerate()
        .map(|(i, e)| CompareSummary {
            engine: e.to_string(),
            geomean_speedup: geomean(comparisons.iter().map(|c| c.results[i].speedup_proxy)),
        })
        .collect();
    summary.push(CompareSummary {
        engine: "best-per-trace".to_string(),
        geomean_speedup: geomean(comparisons.iter().map(|c| c.oracle_speedup)),
    });
    Ok(CompareReport {
        policy: cfg.policy,
        traces: comparisons,
        summary,
    })
}

fn geomean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0u32), |(s, n), v| (s + v.ln(), n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).exp()
    }
}

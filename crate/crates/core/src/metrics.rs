//! Derived metrics, hardware-overhead accounting, and report serialization.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::arsenal::{EVAL_COUNTER_BITS, PREFETCH_COUNTER_BITS, SCORE_BITS};
use crate::bloom::BloomParams;
use crate::cache::{CacheConfig, CacheStats, PrefetchStats};
use crate::error::{Result, SimError};
use crate::experiment::{CompareReport, SimReport};
use crate::types::ComponentId;

pub const KB: f64 = 1024.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentMetrics {
    pub component: ComponentId,
    pub issued: u64,
    pub filled: u64,
    pub useful: u64,
    pub late: u64,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub amat: f64,
    pub baseline_amat: f64,
    /// `baseline_amat / amat`.
    pub speedup_proxy: f64,
    /// Useful prefetches over prefetches filled into the cache; `None` when
    /// nothing was filled.
    pub accuracy: Option<f64>,
    /// Useful prefetches over useful prefetches plus demand misses. Late
    /// prefetch hits count as misses.
    pub coverage: f64,
    /// Late prefetch hits over all prefetched lines that were demanded.
    pub late_rate: Option<f64>,
    pub per_component: Vec<ComponentMetrics>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn speedup_proxy(baseline_amat: f64, amat: f64) -> f64 {
    if amat > 0.0 {
        baseline_amat / amat
    } else {
        0.0
    }
}

pub fn compute_metrics(
    demand: &CacheStats,
    prefetch: &PrefetchStats,
    per_source: &BTreeMap<ComponentId, PrefetchStats>,
    cfg: &CacheConfig,
    baseline_amat: f64,
) -> Result<Metrics> {
    if demand.total() == 0 {
        return Err(SimError::EmptyStatistics);
    }
    let amat = demand.amat(cfg)?;
    let misses = demand.misses + demand.late_prefetch_hits;
    Ok(Metrics {
        amat,
        baseline_amat,
        speedup_proxy: speedup_proxy(baseline_amat, amat),
        accuracy: ratio(prefetch.useful, prefetch.filled),
        coverage: ratio(prefetch.useful, prefetch.useful + misses).unwrap_or(0.0),
        late_rate: ratio(prefetch.late, prefetch.late + prefetch.useful),
        per_component: per_source
            .iter()
            .map(|(&component, s)| ComponentMetrics {
                component,
                issued: s.issued,
                filled: s.filled,
                useful: s.useful,
                late: s.late,
                accuracy: ratio(s.useful, s.filled),
            })
            .collect(),
    })
}

/// Storage of one Bloom filter, itemized the way the reference
/// implementation lays it out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BloomOverhead {
    pub fpp_bits: u64,
    pub seed_bits: u64,
    pub inserted_count_bits: u64,
    pub projected_count_bits: u64,
    pub table_size_bits: u64,
    pub salt_count_bits: u64,
    pub bit_table_bits: u64,
    pub salt_table_bits: u64,
    pub total_bytes: f64,
}

impl BloomOverhead {
    pub const SALT_TABLE_ENTRIES: u64 = 135;
    pub const SALT_BITS: u64 = 32;

    pub fn new(params: &BloomParams) -> Self {
        let mut b = BloomOverhead {
            fpp_bits: 5,
            seed_bits: 32,
            inserted_count_bits: 11,
            projected_count_bits: 11,
            table_size_bits: 15,
            salt_count_bits: 3,
            bit_table_bits: params.bit_table_bytes() * 8,
            salt_table_bits: Self::SALT_TABLE_ENTRIES * Self::SALT_BITS,
            total_bytes: 0.0,
        };
        b.total_bytes =
            b.metadata_bits() as f64 / 8.0 + (b.bit_table_bits + b.salt_table_bits) as f64 / 8.0;
        b
    }

    pub fn metadata_bits(&self) -> u64 {
        self.fpp_bits
            + self.seed_bits
            + self.inserted_count_bits
            + self.projected_count_bits
            + self.table_size_bits
            + self.salt_count_bits
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentCost {
    pub name: String,
    pub kb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub components: u32,
    pub eval_counter_bits: u32,
    pub prefetch_counter_bits: u32,
    pub score_bits: u32,
    pub counter_bytes_per_component: f64,
    pub bloom: BloomOverhead,
    pub thresholds_bytes_per_component: f64,
    pub per_component_kb: f64,
    pub framework_kb: f64,
    pub component_costs: Vec<ComponentCost>,
    pub grand_total_kb: f64,
    pub notes: Vec<String>,
}

/// Storage budget of the framework for `n_components` plus the given
/// component prefetcher budgets (in KB of 1024 bytes).
pub fn overhead(
    n_components: u32,
    bloom: &BloomParams,
    component_costs: &[ComponentCost],
) -> Result<OverheadReport> {
    if n_components == 0 {
        return Err(SimError::config("overhead needs at least one component"));
    }
    let counter_bits = EVAL_COUNTER_BITS + PREFETCH_COUNTER_BITS + SCORE_BITS;
    let counter_bytes = counter_bits as f64 / 8.0;
    let bloom_overhead = BloomOverhead::new(bloom);
    let thresholds_bytes = 0.1 * KB;
    let per_component = counter_bytes + bloom_overhead.total_bytes + thresholds_bytes;
    let framework_kb = n_components as f64 * per_component / KB;
    let components_kb: f64 = component_costs.iter().map(|c| c.kb).sum();
    let notes = vec![
        format!(
            "arsenal counters: {counter_bits} bits x {n_components} = {} bytes ({:.4} KB); \
             the published per-component figure of 0.03 KB does not follow from this width",
            counter_bits * n_components / 8,
            (counter_bits * n_components) as f64 / 8.0 / KB
        ),
        format!(
            "bloom bit table: {} bits for n={} p={} (k={})",
            bloom_overhead.bit_table_bits,
            bloom.projected_capacity,
            bloom.target_fpp,
            bloom.hash_count
        ),
    ];
    Ok(OverheadReport {
        components: n_components,
        eval_counter_bits: EVAL_COUNTER_BITS,
        prefetch_counter_bits: PREFETCH_COUNTER_BITS,
        score_bits: SCORE_BITS,
        counter_bytes_per_component: counter_bytes,
        bloom: bloom_overhead,
        thresholds_bytes_per_component: thresholds_bytes,
        per_component_kb: per_component / KB,
        framework_kb,
        component_costs: component_costs.to_vec(),
        grand_total_kb: framework_kb + components_kb,
        notes,
    })
}

/// Published component budgets for the two rosters, in KB.
pub fn default_component_costs(roster: &[ComponentId]) -> Vec<ComponentCost> {
    roster
        .iter()
        .map(|&c| ComponentCost {
            name: c.name().to_string(),
            kb: match c {
                ComponentId::Tskid => 52.5,
                ComponentId::Mlop => 12.0,
                ComponentId::Spp => 5.73,
                ComponentId::IpStride => 5.47,
                ComponentId::NextLine => 0.0,
            },
        })
        .collect()
}

impl OverheadReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("components                 {}\n", self.components));
        s.push_str(&format!(
            "counters per component     {} + {} + {} bits = {:.1} B\n",
            self.eval_counter_bits,
            self.prefetch_counter_bits,
            self.score_bits,
            self.counter_bytes_per_component
        ));
        s.push_str(&format!(
            "bloom filter per component {:.1} B (metadata {} bits, bit table {} bits, salt table {} bits)\n",
            self.bloom.total_bytes,
            self.bloom.metadata_bits(),
            self.bloom.bit_table_bits,
            self.bloom.salt_table_bits
        ));
        s.push_str(&format!(
            "thresholds per component   {:.1} B\n",
            self.thresholds_bytes_per_component
        ));
        s.push_str(&format!(
            "per component              {:.2} KB\n",
            self.per_component_kb
        ));
        s.push_str(&format!(
            "framework                  {:.2} KB\n",
            self.framework_kb
        ));
        for c in &self.component_costs {
            s.push_str(&format!("{:<26} {:.2} KB\n", c.name, c.kb));
        }
        s.push_str(&format!(
            "total                      {:.2} KB\n",
            self.grand_total_kb
        ));
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(SimError::config(format!("unknown format `{other}`"))),
        }
    }
}

/// Column order of the CSV summary, one row per experiment.
pub const CSV_COLUMNS: [&str; 20] = [
    "experiment",
    "trace",
    "engine",
    "accesses",
    "hits",
    "prefetch_hits",
    "late_prefetch_hits",
    "misses",
    "prefetch_requested",
    "prefetch_issued",
    "prefetch_dropped",
    "prefetch_filled",
    "prefetch_useful",
    "amat",
    "baseline_amat",
    "speedup_proxy",
    "accuracy",
    "coverage",
    "late_rate",
    "selections",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(r: &SimReport) -> Vec<String> {
    vec![
        r.name.clone(),
        r.trace.clone(),
        r.engine.clone(),
        r.demand.accesses.to_string(),
        r.demand.hits.to_string(),
        r.demand.prefetch_hits.to_string(),
        r.demand.late_prefetch_hits.to_string(),
        r.demand.misses.to_string(),
        r.prefetch.requested.to_string(),
        r.prefetch.issued.to_string(),
        r.prefetch.dropped().to_string(),
        r.prefetch.filled.to_string(),
        r.prefetch.useful.to_string(),
        r.metrics.amat.to_string(),
        r.metrics.baseline_amat.to_string(),
        r.metrics.speedup_proxy.to_string(),
        opt(r.metrics.accuracy),
        r.metrics.coverage.to_string(),
        opt(r.metrics.late_rate),
        r.timeline.len().to_string(),
    ]
}

pub fn emit_reports(
    reports: &[SimReport],
    format: ReportFormat,
    mut sink: impl Write,
) -> Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, reports)?;
            writeln!(sink)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(CSV_COLUMNS)?;
            for r in reports {
                w.write_record(csv_row(r))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn emit_report(report: &SimReport, format: ReportFormat, mut sink: impl Write) -> Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, report)?;
            writeln!(sink)?;
            Ok(())
        }
        ReportFormat::Csv => emit_reports(std::slice::from_ref(report), format, sink),
    }
}

pub const COMPARE_CSV_COLUMNS: [&str; 7] = [
    "trace",
    "engine",
    "amat",
    "baseline_amat",
    "speedup_proxy",
    "coverage",
    "accuracy",
];

pub fn emit_compare(
    report: &CompareReport,
    format: ReportFormat,
    mut sink: impl Write,
) -> Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, report)?;
            writeln!(sink)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(COMPARE_CSV_COLUMNS)?;
            for t in &report.traces {
                for e in &t.results {
                    w.write_record([
                        t.trace.clone(),
                        e.engine.clone(),
                        e.amat.to_string(),
                        t.baseline_amat.to_string(),
                        e.speedup_proxy.to_string(),
                        e.coverage.to_string(),
                        opt(e.accuracy),
                    ])?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_examples() {
        let cfg = CacheConfig::default();
        let demand = CacheStats {
            accesses: 100,
            hits: 80,
            misses: 20,
            ..Default::default()
        };
        let m = compute_metrics(
            &demand,
            &PrefetchStats::default(),
            &BTreeMap::new(),
            &cfg,
            30.0,
        )
        .unwrap();
        assert_eq!(m.accuracy, None);
        assert_eq!(m.coverage, 0.0);

        let demand = CacheStats {
            accesses: 100,
            prefetch_hits: 80,
            misses: 20,
            ..Default::default()
        };
        let pf = PrefetchStats {
            filled: 100,
            useful: 80,
            ..Default::default()
        };
        let m = compute_metrics(&demand, &pf, &BTreeMap::new(), &cfg, 30.0).unwrap();
        assert_eq!(m.coverage, 0.8);
        assert_eq!(m.accuracy, Some(0.8));
        assert_eq!(speedup_proxy(30.0, 20.0), 1.5);
        assert!(compute_metrics(&CacheStats::default(), &pf, &BTreeMap::new(), &cfg, 1.0).is_err());
    }

    #[test]
    fn bloom_overhead_itemization() {
        let p = BloomParams::new(2000, 0.01, 0).unwrap();
        let b = BloomOverhead::new(&p);
        assert_eq!(b.metadata_bits(), 77);
        assert_eq!(b.bit_table_bits, 2397 * 8);
        assert!((b.total_bytes - 2946.625).abs() < 1e-9);
    }

    #[test]
    fn overhead_needs_components() {
        let p = BloomParams::new(2000, 0.01, 0).unwrap();
        assert!(overhead(0, &p, &[]).is_err());
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails or overruns its time budget.

use std::collections::HashSet;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use arsenal_sim::arsenal::{
    select_test_case_1, select_test_case_2, Arsenal, ArsenalConfig, PaeLogEntry, SelectionPolicy,
    ShadowFilter, Tc1Inputs, Tc2Inputs, SCORE_MAX,
};
use arsenal_sim::bloom::{derive_parameters, BloomFilter};
use arsenal_sim::cache::CacheConfig;
use arsenal_sim::experiment::{
    compare, run_on_events, simulate, CompareConfig, EngineSpec, ExperimentConfig, Simulation,
    Standalone, TraceConfig,
};
use arsenal_sim::metrics::{emit_compare, ReportFormat};
use arsenal_sim::prefetchers::{ComponentParams, Spp};
use arsenal_sim::trace::{generate, phased_boundaries, presets};
use arsenal_sim::{AccessEvent, ComponentId, LineAddress};

type Check = Result<String, String>;

/// Id, name, time budget, and check.
type Criterion = (u32, &'static str, Duration, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_out_of_scope() -> Check {
    Ok(
        "SPEC CPU 2017 improvement figures need ChampSim and SPEC traces; \
        replaced by the property and oracle checks below"
            .into(),
    )
}

fn c2_bloom_sizing() -> Check {
    let (m, k) = derive_parameters(2000, 0.01).map_err(|e| e.to_string())?;
    let bytes = m.div_ceil(8);
    let rel = (bytes as f64 - 2399.0).abs() / 2399.0;
    ensure(
        rel <= 0.01,
        format!("{bytes} B is {:.2}% off 2399 B", rel * 100.0),
    )?;
    ensure(k == 7, format!("k = {k}"))?;
    Ok(format!(
        "m = {m} bits ({bytes} B, {:.2}% off), k = {k}",
        rel * 100.0
    ))
}

fn c3_bloom_behaviour() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut false_negatives = 0;
    let mut filter = BloomFilter::with_capacity(2000, 0.01, 11).map_err(|e| e.to_string())?;
    let mut inserted = Vec::new();
    for trial in 0..100_000u64 {
        if trial % 2000 == 0 {
            filter.clear();
            inserted.clear();
        }
        let line = LineAddress(rng.gen());
        filter.insert(line);
        inserted.push(line);
        let probe = inserted[rng.gen_range(0..inserted.len())];
        if !filter.query(probe) {
            false_negatives += 1;
        }
    }
    ensure(
        false_negatives == 0,
        format!("{false_negatives} false negatives"),
    )?;

    let mut filter = BloomFilter::with_capacity(2000, 0.01, 12).map_err(|e| e.to_string())?;
    let mut members = HashSet::new();
    while members.len() < 2000 {
        let line: u64 = rng.gen();
        members.insert(line);
        filter.insert(LineAddress(line));
    }
    let mut probes = 0u64;
    let mut positives = 0u64;
    while probes < 200_000 {
        let line: u64 = rng.gen();
        if members.contains(&line) {
            continue;
        }
        probes += 1;
        positives += filter.query(LineAddress(line)) as u64;
    }
    let fpp = positives as f64 / probes as f64;
    ensure(fpp <= 0.02, format!("empirical fpp {fpp:.4}"))?;
    Ok(format!(
        "0 false negatives in 1e5 trials; fpp {fpp:.4} over {probes} negative probes"
    ))
}

fn c4_selection_tables() -> Check {
    let tc1 = |t: u16, m: u16, ta: u32, ma: u32, prev| {
        select_test_case_1(
            Tc1Inputs {
                tskid_score: t,
                mlop_score: m,
                tskid_attempts: ta,
                mlop_attempts: ma,
            },
            10_000,
            prev,
        )
    };
    let tc2 = |spp: u16, ip: u16, nl: u16| {
        select_test_case_2(
            Tc2Inputs {
                spp,
                ip_stride: ip,
                next_line: nl,
            },
            0,
            1500,
            true,
        )
    };
    use ComponentId::*;
    let rows = [
        ("tc1 {50,40}", tc1(50, 40, 0, 0, None), Some(Tskid)),
        (
            "tc1 {10,20} attempts {12000,500}",
            tc1(10, 20, 12_000, 500, None),
            Some(Tskid),
        ),
        (
            "tc1 equal scores and attempts",
            tc1(30, 30, 100, 100, None),
            Some(Mlop),
        ),
        (
            "tc1 attempts exactly 10000",
            tc1(10, 20, 10_000, 500, None),
            Some(Mlop),
        ),
        (
            "tc1 tie, attempts differ",
            tc1(30, 30, 100, 90, Some(Tskid)),
            Some(Tskid),
        ),
        ("tc2 {10,5,100}", tc2(10, 5, 100), Some(Spp)),
        ("tc2 {0,0,0}", tc2(0, 0, 0), None),
        ("tc2 {3,7,2000}", tc2(3, 7, 2000), Some(NextLine)),
        ("tc2 nl at 1500", tc2(3, 7, 1500), Some(IpStride)),
        ("tc2 nl at 1501", tc2(3, 7, 1501), Some(NextLine)),
        ("tc2 best at min score 0", tc2(0, 0, 0), None),
        ("tc2 best just above 0", tc2(1, 0, 0), Some(Spp)),
        ("tc2 spp/ip tie", tc2(9, 9, 9), Some(Spp)),
    ];
    for (name, got, want) in &rows {
        ensure(got == want, format!("{name}: got {got:?}, want {want:?}"))?;
    }
    Ok(format!("{} table rows match", rows.len()))
}

/// Random mixture of sequential runs, strided walks, and scattered reuse.
fn random_trace(seed: u64, len: usize) -> Vec<AccessEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len);
    let mut cursor = rng.gen_range(0..1u64 << 20);
    while out.len() < len {
        let run = rng.gen_range(8..64);
        let pc = 0x400 + 4 * rng.gen_range(0..16u64);
        let step: i64 = match rng.gen_range(0..4) {
            0 => 1,
            1 => rng.gen_range(2..9),
            2 => -rng.gen_range(1..5),
            _ => 0,
        };
        for _ in 0..run {
            if out.len() == len {
                break;
            }
            let line = if step == 0 {
                rng.gen_range(0..4096u64)
            } else {
                cursor = cursor.wrapping_add_signed(step);
                cursor
            };
            out.push(AccessEvent {
                pc,
                addr: line * 64 + rng.gen_range(0..64),
                is_write: rng.gen_bool(0.2),
                seq: out.len() as u64,
            });
        }
    }
    out
}

fn logged_run<F: ShadowFilter>(
    events: &[AccessEvent],
    mut arsenal: Arsenal<F>,
) -> Vec<PaeLogEntry> {
    arsenal.enable_log();
    let mut sim = Simulation::new(CacheConfig::default(), arsenal).expect("valid cache");
    sim.run(events);
    sim.engine_mut().take_log()
}

/// Exact scores recomputed from the log alone.
struct Oracle {
    sets: Vec<HashSet<u64>>,
    scores: Vec<u16>,
}

impl Oracle {
    fn new(n: usize) -> Self {
        Oracle {
            sets: vec![HashSet::new(); n],
            scores: vec![0; n],
        }
    }

    /// Scores the demand; returns exact membership per component.
    fn score(&mut self, line: LineAddress) -> Vec<bool> {
        let mut hits = Vec::new();
        for (set, score) in self.sets.iter().zip(self.scores.iter_mut()) {
            let hit = set.contains(&line.0);
            *score = if hit {
                (*score + 4).min(SCORE_MAX)
            } else {
                score.saturating_sub(1)
            };
            hits.push(hit);
        }
        hits
    }

    fn absorb(&mut self, entry: &PaeLogEntry) {
        for (set, cands) in self.sets.iter_mut().zip(&entry.candidates) {
            set.extend(cands.iter().map(|l| l.0));
        }
        if entry.phase_end {
            *self = Oracle::new(self.sets.len());
        }
    }
}

fn c5_oracle_scoring() -> Check {
    let mut paes = 0usize;
    let mut false_positives = 0usize;
    let mut upward = 0usize;
    for trial in 0..20u64 {
        let events = random_trace(500 + trial, 5000);
        let policy = if trial % 2 == 0 {
            SelectionPolicy::TestCase2
        } else {
            SelectionPolicy::TestCase1
        };
        let cfg = ArsenalConfig {
            selection_policy: policy,
            ..Default::default()
        };
        let params = ComponentParams::default();
        let max_line = CacheConfig::default().max_line();

        let log = logged_run(
            &events,
            Arsenal::exact(cfg.clone(), &params, max_line).unwrap(),
        );
        let mut oracle = Oracle::new(policy.roster().len());
        for e in &log {
            let exact = oracle.score(e.line);
            ensure(
                exact == e.probes && oracle.scores == e.scores,
                format!(
                    "trial {trial} seq {}: exact {:?} vs oracle {:?}",
                    e.seq, e.scores, oracle.scores
                ),
            )?;
            oracle.absorb(e);
        }
        paes += log.len();

        // Bloom runs: the default sizing plus an undersized filter that
        // produces false positives on purpose.
        for cap in [cfg.bf_est_cap, 64] {
            let bcfg = ArsenalConfig {
                bf_est_cap: cap,
                ..cfg.clone()
            };
            let log = logged_run(&events, Arsenal::new(bcfg, &params, max_line).unwrap());
            let mut oracle = Oracle::new(policy.roster().len());
            let mut fp_seen = vec![false; policy.roster().len()];
            for e in &log {
                let exact = oracle.score(e.line);
                for i in 0..exact.len() {
                    ensure(
                        !exact[i] || e.probes[i],
                        format!("trial {trial} seq {}: false negative", e.seq),
                    )?;
                    if e.probes[i] && !exact[i] {
                        fp_seen[i] = true;
                        false_positives += 1;
                    }
                    ensure(
                        e.scores[i] >= oracle.scores[i],
                        format!("trial {trial} seq {}: bloom score below exact", e.seq),
                    )?;
                    if e.scores[i] != oracle.scores[i] {
                        upward += 1;
                        ensure(
                            fp_seen[i],
                            format!(
                                "trial {trial} seq {}: divergence without a false positive",
                                e.seq
                            ),
                        )?;
                    }
                }
                if e.phase_end {
                    fp_seen.iter_mut().for_each(|f| *f = false);
                }
                oracle.absorb(e);
            }
        }
    }
    Ok(format!(
        "{paes} activation events match exactly; bloom runs saw {false_positives} false-positive probes, {upward} upward score deviations, none elsewhere"
    ))
}

const PHASED_LEN: u64 = 560_000;

fn phased_trace() -> (Vec<AccessEvent>, Vec<(u64, usize)>) {
    let spec = presets::phased_default(6);
    let events = generate(&spec, PHASED_LEN).expect("valid preset");
    (events, phased_boundaries(&spec, PHASED_LEN))
}

fn c6_adaptivity() -> Check {
    let (events, bounds) = phased_trace();
    let cfg = ExperimentConfig::new(
        TraceConfig::from_pattern(presets::phased_default(6), PHASED_LEN),
        EngineSpec::default(),
    )
    .resolved();
    let report = run_on_events(&cfg, &events).map_err(|e| e.to_string())?;
    let timeline = &report.timeline;
    let expected = |segment: usize| {
        if segment == 0 {
            ComponentId::IpStride
        } else {
            ComponentId::NextLine
        }
    };
    // [correct, total] post-warmup phases per segment kind.
    let mut tally = [[0usize; 2]; 2];
    let mut worst_switch = 0usize;
    for (b, &(start, seg)) in bounds.iter().enumerate() {
        let end = bounds.get(b + 1).map_or(PHASED_LEN, |n| n.0);
        let inside: Vec<_> = timeline
            .iter()
            .filter(|r| r.decided_at >= start && r.decided_at < end)
            .collect();
        let want = expected(seg);
        let first_hit = inside
            .iter()
            .position(|r| r.chosen == Some(want))
            .ok_or_else(|| format!("segment at {start}: {want} never selected"))?;
        if start > 0 {
            ensure(
                first_hit < 2,
                format!(
                    "segment at {start}: switched after {} phases",
                    first_hit + 1
                ),
            )?;
            worst_switch = worst_switch.max(first_hit + 1);
        }
        for r in inside.iter().skip(2) {
            tally[seg][1] += 1;
            tally[seg][0] += (r.chosen == Some(want)) as usize;
        }
    }
    let frac = |t: [usize; 2]| t[0] as f64 / t[1].max(1) as f64;
    let (stride, seq) = (frac(tally[0]), frac(tally[1]));
    ensure(
        stride >= 0.8 && seq >= 0.8,
        format!(
            "ip-stride in stride segments {stride:.3}, next-line in sequential segments {seq:.3}"
        ),
    )?;
    Ok(format!(
        "{} events, {} phases: ip-stride {:.1}% in stride segments, next-line {:.1}% in sequential segments, switch within {worst_switch} phase(s)",
        events.len(),
        timeline.len(),
        stride * 100.0,
        seq * 100.0
    ))
}

fn c7_versatility() -> Check {
    let traces = vec![
        TraceConfig::from_pattern(presets::phased_default(6), PHASED_LEN).named("phased"),
        TraceConfig::from_pattern(presets::sequential(7), 1_000_000).named("sequential"),
        TraceConfig::from_pattern(presets::per_pc_stride(8), 1_000_000).named("stride"),
    ];
    let report = compare(&CompareConfig::new(SelectionPolicy::TestCase2, traces))
        .map_err(|e| e.to_string())?;
    let improvement = |t: usize, e: &str| report.result(t, e).map_or(f64::NAN, |r| r.improvement);
    let components = ["spp", "ip-stride", "next-line"];
    let ars = improvement(0, "arsenal-tc2");
    let all: Vec<f64> = components.iter().map(|c| improvement(0, c)).collect();
    let best = all.iter().cloned().fold(f64::MIN, f64::max);
    let worst = all.iter().cloned().fold(f64::MAX, f64::min);
    ensure(
        ars >= 0.9 * best && ars > worst,
        format!("phased: arsenal {ars:.3}, best {best:.3}, worst {worst:.3}"),
    )?;
    let seq = improvement(1, "arsenal-tc2") / improvement(1, "next-line");
    let stride = improvement(2, "arsenal-tc2") / improvement(2, "ip-stride");
    ensure(
        seq >= 0.9,
        format!("sequential: arsenal at {seq:.3} of next-line"),
    )?;
    ensure(
        stride >= 0.9,
        format!("stride: arsenal at {stride:.3} of ip-stride"),
    )?;
    Ok(format!(
        "phased improvement {ars:.3} vs best {best:.3} / worst {worst:.3}; sequential {:.1}% of next-line; stride {:.1}% of ip-stride",
        seq * 100.0,
        stride * 100.0
    ))
}

fn c8_overhead_cli() -> Check {
    let out = Command::new(env!("CARGO_BIN_EXE_arsenal"))
        .args(["overhead", "--format", "json"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), String::from_utf8_lossy(&out.stderr))?;
    let reports: serde_json::Value =
        serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for (i, (fw, total)) in [(6.0, 70.5), (9.0, 20.2)].into_iter().enumerate() {
        let r = &reports[i];
        let n = r["components"].as_u64().unwrap_or(0);
        let got_fw = r["framework_kb"].as_f64().unwrap_or(f64::NAN);
        let got_total = r["grand_total_kb"].as_f64().unwrap_or(f64::NAN);
        ensure(
            (got_fw - fw).abs() <= 0.1 && (got_total - total).abs() <= 0.1,
            format!("N={n}: framework {got_fw:.3} KB, total {got_total:.3} KB"),
        )?;
        lines.push(format!(
            "N={n} framework {got_fw:.2} KB total {got_total:.2} KB"
        ));
    }
    Ok(lines.join("; "))
}

fn c9_determinism() -> Check {
    let cfg = CompareConfig {
        seed: Some(99),
        ..CompareConfig::new(
            SelectionPolicy::TestCase2,
            vec![
                TraceConfig::from_pattern(presets::phased_default(0), 280_000),
                TraceConfig::from_pattern(presets::random_working_set(0), 100_000),
                TraceConfig::from_pattern(presets::stride(192, 0), 100_000),
            ],
        )
    };
    let tc1 = CompareConfig {
        policy: SelectionPolicy::TestCase1,
        ..cfg.clone()
    };
    let emit = |c: &CompareConfig| -> Result<Vec<u8>, String> {
        let report = compare(c).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        emit_compare(&report, ReportFormat::Json, &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    for c in [&cfg, &tc1] {
        let (a, b) = (emit(c)?, emit(c)?);
        ensure(a == b, "two compare runs differ")?;
    }
    Ok("test-case 1 and 2 compare reports byte-identical across runs".into())
}

fn c10_component_sanity() -> Check {
    let cache = CacheConfig::default();
    let params = ComponentParams::default();
    let max_line = cache.max_line();

    let seq = generate(&presets::sequential(10), 1_000_000).map_err(|e| e.to_string())?;
    let nl = ExperimentConfig {
        warmup: 1000,
        ..ExperimentConfig::new(
            TraceConfig::from_pattern(presets::sequential(10), 1_000_000),
            EngineSpec::Standalone {
                component: ComponentId::NextLine,
                degree: Some(5),
            },
        )
    };
    let nl_cov = run_on_events(&nl.resolved(), &seq)
        .map_err(|e| e.to_string())?
        .metrics
        .coverage;
    ensure(nl_cov >= 0.9, format!("next-line coverage {nl_cov:.4}"))?;

    let stride = generate(&presets::per_pc_stride(10), 1_000_000).map_err(|e| e.to_string())?;
    let ip = ExperimentConfig::new(
        TraceConfig::from_pattern(presets::per_pc_stride(10), 1_000_000),
        EngineSpec::Standalone {
            component: ComponentId::IpStride,
            degree: Some(8),
        },
    );
    let ip_cov = run_on_events(&ip.resolved(), &stride)
        .map_err(|e| e.to_string())?
        .metrics
        .coverage;
    ensure(ip_cov >= 0.8, format!("ip-stride coverage {ip_cov:.4}"))?;

    let (phased, _) = phased_trace();
    let random = generate(&presets::random_working_set(10), 200_000).map_err(|e| e.to_string())?;
    let single = generate(&presets::stride(128, 10), 200_000).map_err(|e| e.to_string())?;
    let mut chains = 0;
    let mut deepest = 0;
    for events in [&seq, &stride, &phased, &random, &single] {
        let spp = Spp::new(params.spp.clone(), max_line);
        let (_, Standalone(spp)) =
            simulate(events, &cache, Standalone(spp), 0).map_err(|e| e.to_string())?;
        let s = spp.chain_stats();
        ensure(
            s.max_depth <= 8 && s.depth_limit_violations == 0 && s.confidence_increases == 0,
            format!("spp chain stats {s:?}"),
        )?;
        chains += s.chains;
        deepest = deepest.max(s.max_depth);
    }
    ensure(chains > 0, "spp never walked a chain")?;
    Ok(format!(
        "next-line coverage {nl_cov:.4}; ip-stride coverage {ip_cov:.4}; spp {chains} chains, max depth {deepest}, confidence never rose"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            1,
            "SPEC results out of scope",
            Duration::from_secs(1),
            c1_out_of_scope,
        ),
        (2, "bloom sizing", Duration::from_secs(1), c2_bloom_sizing),
        (
            3,
            "bloom behaviour",
            Duration::from_secs(10),
            c3_bloom_behaviour,
        ),
        (
            4,
            "selection tables",
            Duration::from_secs(1),
            c4_selection_tables,
        ),
        (
            5,
            "oracle scoring",
            Duration::from_secs(60),
            c5_oracle_scoring,
        ),
        (6, "adaptivity", Duration::from_secs(120), c6_adaptivity),
        (7, "versatility", Duration::from_secs(300), c7_versatility),
        (8, "overhead cli", Duration::from_secs(1), c8_overhead_cli),
        (9, "determinism", Duration::from_secs(120), c9_determinism),
        (
            10,
            "component sanity",
            Duration::from_secs(180),
            c10_component_sanity,
        ),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let t = Instant::now();
        let result = check();
        let elapsed = t.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => (
                "FAIL",
                format!("{d} (took {elapsed:.2?}, budget {budget:?})"),
            ),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {id:>2} [{name}] {status} in {elapsed:.2?}: {detail}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

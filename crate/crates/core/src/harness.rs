//! Seeded, repeated experiment sweeps over generated instances.
//!
//! Every `(ratio, repetition)` pair draws one instance from a child seed and
//! runs all selected strategies (and, for PB and DB, every threshold) on
//! that same instance, so comparisons between strategies are paired.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{Duration, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composition::{compose, CompositionError};
use crate::domain::{
    ConsumerId, DemandReward, EnergyRequest, EnergyService, Location, Mah, MicrocellDemand,
    ProviderId, RequestId, RewardModel, ServiceId, Strategy, TimeSlot,
};
use crate::metrics::{qoe, MetricsError, DEFAULT_ALPHA};
use crate::workload::{generate, GeneratorConfig, WorkloadError};

pub const DEFAULT_THRESHOLD_RATIO: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub ratios: Vec<f64>,
    /// PB and DB run once per threshold; the first one is the threshold
    /// shown in the per-ratio figures.
    pub thresholds: Vec<Mah>,
    pub repetitions: usize,
    pub alpha: f64,
    pub strategies: Vec<Strategy>,
    pub base: GeneratorConfig,
    pub master_seed: u64,
    /// Extra ratio evaluated for the threshold-sensitive strategies only.
    pub threshold_ratio: Option<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            ratios: (3..=18).map(|i| i as f64 * 0.05).collect(),
            thresholds: vec![10, 30, 50, 70, 90],
            repetitions: 100,
            alpha: DEFAULT_ALPHA,
            strategies: Strategy::ALL.to_vec(),
            base: GeneratorConfig::default(),
            master_seed: 0,
            threshold_ratio: Some(DEFAULT_THRESHOLD_RATIO),
        }
    }
}

impl SweepSpec {
    /// PB at a fixed ratio over the given thresholds.
    pub fn threshold_study(ratio: f64, thresholds: Vec<Mah>) -> Self {
        Self {
            ratios: vec![ratio],
            thresholds,
            strategies: vec![Strategy::PartialBased],
            threshold_ratio: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Spec(m.to_owned()));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.ratios.is_empty() {
            return bad("no ratios given");
        }
        if self.ratios.iter().chain(&self.threshold_ratio).any(|&r| !(r > 0.0 && r <= 1.0)) {
            return bad("ratios must lie in (0, 1]");
        }
        if self.strategies.is_empty() {
            return bad("no strategies selected");
        }
        if self.strategies.iter().any(|s| s.uses_threshold()) && self.thresholds.is_empty() {
            return bad("PB and DB need at least one threshold");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        self.base.validate().map_err(|e| HarnessError::Spec(e.to_string()))
    }

    /// Ratio points in evaluation order; the threshold ratio comes last
    /// unless it already is one of the sweep ratios.
    fn points(&self) -> Vec<(f64, bool)> {
        let mut points: Vec<(f64, bool)> = self.ratios.iter().map(|&r| (r, true)).collect();
        if let Some(t) = self.threshold_ratio {
            if !self.ratios.contains(&t) {
                points.push((t, false));
            }
        }
        points
    }

    /// `(strategy, threshold)` runs for one instance.
    fn runs(&self, full: bool) -> Vec<(Strategy, Option<Mah>)> {
        let mut runs = Vec::new();
        for &s in &self.strategies {
            if s.uses_threshold() {
                runs.extend(self.thresholds.iter().map(|&t| (s, Some(t))));
            } else if full {
                runs.push((s, None));
            }
        }
        runs
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sweep spec: {0}")]
    Spec(String),
    #[error("ratio {ratio}, repetition {repetition}, seed {seed}: {source}")]
    Run {
        ratio: f64,
        repetition: usize,
        seed: u64,
        #[source]
        source: RunError,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One strategy run on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub strategy: Strategy,
    pub ratio: f64,
    pub threshold: Option<Mah>,
    pub repetition: usize,
    pub seed: u64,
    pub sr: f64,
    pub fr: f64,
    pub qoe: f64,
    pub eu: f64,
    pub runtime_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub ratio: f64,
    pub threshold: Option<Mah>,
    pub mean_sr: f64,
    pub mean_fr: f64,
    pub mean_qoe: f64,
    pub mean_eu: f64,
    pub mean_runtime_ns: f64,
    pub std_qoe: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, strategy: Strategy, ratio: f64, threshold: Option<Mah>) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.ratio == ratio && r.threshold == threshold.filter(|_| strategy.uses_threshold()))
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|source| HarnessError::Io { path: PathBuf::from("<csv>"), source })?;
        Ok(())
    }
}

/// Counter-based child seed: a splitmix64 hash chain over the three inputs.
pub fn child_seed(master_seed: u64, ratio_index: usize, repetition: usize) -> u64 {
    let mut h = splitmix64(master_seed);
    h = splitmix64(h ^ ratio_index as u64);
    splitmix64(h ^ repetition as u64)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every `(ratio, repetition)` instance and returns the raw samples in
/// a fixed order: ratio point, repetition, strategy, threshold.
pub fn run_samples(spec: &SweepSpec) -> Result<Vec<Sample>, HarnessError> {
    spec.validate()?;
    let tasks: Vec<(usize, f64, bool, usize)> = spec
        .points()
        .into_iter()
        .enumerate()
        .flat_map(|(i, (ratio, full))| (0..spec.repetitions).map(move |rep| (i, ratio, full, rep)))
        .collect();

    let per_task: Vec<Vec<Sample>> = tasks
        .par_iter()
        .map(|&(ratio_index, ratio, full, repetition)| {
            let seed = child_seed(spec.master_seed, ratio_index, repetition);
            run_instance(spec, ratio, full, repetition, seed).map_err(|source| HarnessError::Run {
                ratio,
                repetition,
                seed,
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(per_task.into_iter().flatten().collect())
}

fn run_instance(
    spec: &SweepSpec,
    ratio: f64,
    full: bool,
    repetition: usize,
    seed: u64,
) -> Result<Vec<Sample>, RunError> {
    let config = GeneratorConfig {
        seed,
        service_to_request_ratio: ratio,
        ..spec.base.clone()
    };
    let (demand, services) = generate(&config)?;
    spec.runs(full)
        .into_iter()
        .map(|(strategy, threshold)| {
            let started = Instant::now();
            let result = compose(strategy, &demand, &services, threshold.unwrap_or(0))?;
            let runtime_ns = started.elapsed().as_nanos() as u64;
            let report = qoe(&demand, &services, &result, spec.alpha)?;
            Ok(Sample {
                strategy,
                ratio,
                threshold,
                repetition,
                seed,
                sr: report.weighted_sr(),
                fr: report.weighted_fr(),
                qoe: report.qoe,
                eu: report.energy_utilization,
                runtime_ns,
            })
        })
        .collect()
}

/// Means and standard deviations per `(strategy, ratio, threshold)`. Rows
/// follow the first appearance of each key in `samples`.
pub fn aggregate(samples: &[Sample]) -> SweepResult {
    let mut order = Vec::new();
    let mut groups: BTreeMap<(usize, usize, Option<Mah>), Vec<&Sample>> = BTreeMap::new();
    let mut ratio_ids: Vec<f64> = Vec::new();
    for s in samples {
        let ratio_id = match ratio_ids.iter().position(|&r| r == s.ratio) {
            Some(i) => i,
            None => {
                ratio_ids.push(s.ratio);
                ratio_ids.len() - 1
            }
        };
        let strategy_id = Strategy::ALL.iter().position(|&x| x == s.strategy).unwrap();
        let key = (ratio_id, strategy_id, s.threshold);
        groups.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        groups.get_mut(&key).unwrap().push(s);
    }

    let rows = order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let n = g.len() as f64;
            let mean = |f: fn(&Sample) -> f64| g.iter().map(|s| f(s)).sum::<f64>() / n;
            let mean_qoe = mean(|s| s.qoe);
            let std_qoe = if g.len() > 1 {
                (g.iter().map(|s| (s.qoe - mean_qoe).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SweepRow {
                strategy: g[0].strategy,
                ratio: g[0].ratio,
                threshold: g[0].threshold,
                mean_sr: mean(|s| s.sr),
                mean_fr: mean(|s| s.fr),
                mean_qoe,
                mean_eu: mean(|s| s.eu),
                mean_runtime_ns: mean(|s| s.runtime_ns as f64),
                std_qoe,
                repetitions: g.len(),
            }
        })
        .collect();
    SweepResult { rows }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, HarnessError> {
    Ok(aggregate(&run_samples(spec)?))
}

type Metric = fn(&SweepRow) -> f64;

pub const PLOT_FILES: [&str; 6] = [
    "fig_sr.csv",
    "fig_eu.csv",
    "fig_fr.csv",
    "fig_qoe.csv",
    "fig_threshold.csv",
    "fig_runtime.csv",
];

/// Writes the per-figure CSVs into `dir` and returns their paths.
///
/// The metric-vs-ratio files have one column per strategy; PB and DB use the
/// spec's first threshold. `fig_threshold.csv` lists the threshold-sensitive
/// rows at the threshold ratio (or the largest sweep ratio).
pub fn write_plot_data(dir: &Path, spec: &SweepSpec, result: &SweepResult) -> Result<Vec<PathBuf>, HarnessError> {
    let primary = spec.thresholds.first().copied();
    let metrics: [(&str, Metric); 5] = [
        ("fig_sr.csv", |r| r.mean_sr),
        ("fig_eu.csv", |r| r.mean_eu),
        ("fig_fr.csv", |r| r.mean_fr),
        ("fig_qoe.csv", |r| r.mean_qoe),
        ("fig_runtime.csv", |r| r.mean_runtime_ns),
    ];
    let mut paths = Vec::new();
    for (name, metric) in metrics {
        let path = dir.join(name);
        let mut w = csv::Writer::from_writer(create(&path)?);
        let mut header = vec!["ratio".to_owned()];
        header.extend(spec.strategies.iter().map(|s| s.label().to_owned()));
        w.write_record(&header)?;
        for &ratio in &spec.ratios {
            let mut record = vec![ratio.to_string()];
            for &s in &spec.strategies {
                let cell = result.row(s, ratio, primary).map(|r| metric(r).to_string());
                record.push(cell.unwrap_or_default());
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|source| HarnessError::Io { path: path.clone(), source })?;
        paths.push(path);
    }

    let study_ratio = spec
        .threshold_ratio
        .unwrap_or_else(|| spec.ratios.iter().copied().fold(f64::MIN, f64::max));
    let path = dir.join("fig_threshold.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["strategy", "ratio", "threshold", "mean_sr", "mean_fr", "mean_qoe", "mean_eu", "mean_runtime_ns"])?;
    for row in result.rows.iter().filter(|r| r.ratio == study_ratio && r.threshold.is_some()) {
        w.write_record([
            row.strategy.label().to_owned(),
            row.ratio.to_string(),
            row.threshold.unwrap().to_string(),
            row.mean_sr.to_string(),
            row.mean_fr.to_string(),
            row.mean_qoe.to_string(),
            row.mean_eu.to_string(),
            row.mean_runtime_ns.to_string(),
        ])?;
    }
    w.flush().map_err(|source| HarnessError::Io { path: path.clone(), source })?;
    paths.insert(4, path);
    Ok(paths)
}

fn create(path: &Path) -> Result<fs::File, HarnessError> {
    fs::File::create(path).map_err(|source| HarnessError::Io { path: path.to_owned(), source })
}

/// Fixed three-slot café scenario: 14 consumers asking for 3200 mAh in total
/// and four services offering 2300 mAh. Greedy serves 7 consumers in full
/// and delivers 1300 mAh.
pub fn reference_scenario() -> (MicrocellDemand, Vec<EnergyService>) {
    let start = Utc.with_ymd_and_hms(2021, 4, 8, 9, 0, 0).unwrap();
    let slot_requests: [&[Mah]; 3] = [
        &[300, 200, 200],
        &[450, 200, 150, 90, 90, 90],
        &[560, 150, 100, 310, 310],
    ];
    let offers: [(Mah, &[usize]); 4] = [(500, &[0]), (600, &[0, 1, 2]), (700, &[0]), (500, &[2])];

    let services: Vec<EnergyService> = offers
        .iter()
        .enumerate()
        .map(|(i, &(amount_mah, slots))| EnergyService {
            service_id: ServiceId(i as u32 + 1),
            provider_id: ProviderId(i as u32 + 1),
            amount_mah,
            candidate_slots: slots.to_vec(),
            location: Location { x: 2.0 * i as f64, y: 1.0 },
        })
        .collect();

    let mut next = 0u32;
    let slots = slot_requests
        .iter()
        .enumerate()
        .map(|(index, amounts)| {
            let requests = amounts
                .iter()
                .map(|&amount_mah| {
                    next += 1;
                    EnergyRequest {
                        request_id: RequestId(next),
                        consumer_id: ConsumerId(next),
                        amount_mah,
                        slot_index: index,
                        location: Location { x: next as f64, y: 3.0 },
                    }
                })
                .collect();
            let from = start + Duration::hours(index as i64);
            let mut slot = TimeSlot::new(index, from, from + Duration::hours(1), 0.0, requests);
            slot.reward = DemandReward.reward(slot.required_energy_mah, slot.consumer_count);
            slot
        })
        .collect();
    (MicrocellDemand::new(slots, &services), services)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::compose_greedy;
    use crate::metrics::pooled_blend;

    fn small_spec() -> SweepSpec {
        SweepSpec {
            ratios: vec![0.3, 0.9],
            thresholds: vec![10, 50],
            repetitions: 4,
            base: GeneratorConfig { num_requests: 40, ..GeneratorConfig::default() },
            master_seed: 11,
            ..SweepSpec::default()
        }
    }

    #[test]
    fn reference_scenario_aggregates() {
        let (d, s) = reference_scenario();
        assert_eq!(d.total_required_mah(), 3200);
        assert_eq!(s.iter().map(|s| s.amount_mah).sum::<Mah>(), 2300);
        assert_eq!(d.total_consumers(), 14);
        assert_eq!(d.slots.len(), 3);
        let res = compose_greedy(&d, &s).unwrap();
        let received = res.received_by_request();
        assert_eq!(received.values().filter(|&&v| v > 0).count(), 7);
        assert_eq!(res.total_granted_mah(), 1300);
        assert_eq!(pooled_blend(&d, &res, 0.5).unwrap(), 0.453125);
    }

    #[test]
    fn one_row_and_replay() {
        let spec = SweepSpec {
            ratios: vec![0.5],
            strategies: vec![Strategy::Greedy],
            repetitions: 1,
            threshold_ratio: None,
            ..small_spec()
        };
        let a = run_sweep(&spec).unwrap();
        let b = run_sweep(&spec).unwrap();
        assert_eq!(a.rows.len(), 1);
        let strip = |r: &SweepRow| SweepRow { mean_runtime_ns: 0.0, ..r.clone() };
        assert_eq!(strip(&a.rows[0]), strip(&b.rows[0]));
        assert_eq!(a.rows[0].threshold, None);
    }

    #[test]
    fn row_layout() {
        let spec = small_spec();
        let res = run_sweep(&spec).unwrap();
        // per sweep ratio: 2 thresholds x {PB, DB} + Greedy + MaxMin; threshold ratio: PB/DB only
        assert_eq!(res.rows.len(), 2 * 6 + 4);
        assert!(res.rows.iter().all(|r| r.repetitions == 4));
        assert!(res.row(Strategy::Greedy, 0.99, None).is_none());
        assert!(res.row(Strategy::DemandBased, 0.99, Some(50)).is_some());
        for r in &res.rows {
            for m in [r.mean_sr, r.mean_fr, r.mean_qoe, r.mean_eu] {
                assert!((0.0..=1.0).contains(&m));
            }
        }
    }

    #[test]
    fn strategies_share_instances() {
        let samples = run_samples(&small_spec()).unwrap();
        let mut seeds: BTreeMap<(u64, usize), Vec<u64>> = BTreeMap::new();
        for s in &samples {
            seeds.entry((s.ratio.to_bits(), s.repetition)).or_default().push(s.seed);
        }
        assert!(seeds.values().all(|v| v.windows(2).all(|w| w[0] == w[1])));
        let distinct: std::collections::HashSet<u64> = seeds.values().map(|v| v[0]).collect();
        assert_eq!(distinct.len(), seeds.len());
    }

    #[test]
    fn child_seeds_differ_by_each_input() {
        let base = child_seed(1, 2, 3);
        assert_ne!(base, child_seed(0, 2, 3));
        assert_ne!(base, child_seed(1, 3, 3));
        assert_ne!(base, child_seed(1, 2, 4));
        assert_ne!(child_seed(0, 1, 0), child_seed(0, 0, 1));
    }

    #[test]
    fn rejects_bad_specs() {
        for spec in [
            SweepSpec { repetitions: 0, ..small_spec() },
            SweepSpec { ratios: vec![0.0], ..small_spec() },
            SweepSpec { ratios: vec![1.2], ..small_spec() },
            SweepSpec { alpha: 2.0, ..small_spec() },
            SweepSpec { strategies: vec![], ..small_spec() },
        ] {
            assert!(matches!(run_sweep(&spec), Err(HarnessError::Spec(_))));
        }
    }

    #[test]
    fn plot_files_and_csv_columns() {
        let spec = small_spec();
        let res = run_sweep(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_plot_data(dir.path(), &spec, &res).unwrap();
        let names: Vec<_> = paths.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_owned()).collect();
        assert_eq!(names, PLOT_FILES);
        let qoe = fs::read_to_string(dir.path().join("fig_qoe.csv")).unwrap();
        assert_eq!(qoe.lines().next().unwrap(), "ratio,PB,DB,GREEDY,MAXMIN");
        assert_eq!(qoe.lines().count(), 3);
        let th = fs::read_to_string(dir.path().join("fig_threshold.csv")).unwrap();
        assert_eq!(th.lines().count(), 1 + 4);

        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "strategy,ratio,threshold,mean_sr,mean_fr,mean_qoe,mean_eu,mean_runtime_ns,std_qoe,repetitions"
        );
        assert!(text.lines().any(|l| l.starts_with("GREEDY,0.3,,")));
    }
}

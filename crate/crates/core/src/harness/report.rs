use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::events::{write_events_csv, Event};
use super::{HarnessError, Method};
use crate::history::{write_records_csv, EvalRecord, History, WorkerId};
use crate::space::ParamSpace;

/// Time split of one worker over `[0, t_wall]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorkerTimeline {
    pub busy: f64,
    pub overhead: f64,
    pub idle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activity {
    Busy,
    Overhead,
}

/// Collects per-worker activity intervals while a runner executes.
#[derive(Debug, Clone)]
pub(crate) struct TimelineBuilder {
    t_wall: f64,
    /// Index 0 is the manager.
    intervals: Vec<Vec<(f64, f64, Activity)>>,
}

impl TimelineBuilder {
    pub fn new(n_worker: usize, t_wall: f64) -> Self {
        Self { t_wall, intervals: vec![Vec::new(); n_worker + 1] }
    }

    pub fn busy(&mut self, worker: WorkerId, start: f64, end: f64) {
        self.intervals[worker as usize].push((start, end, Activity::Busy));
    }

    pub fn overhead(&mut self, worker: WorkerId, start: f64, end: f64) {
        if end > start {
            self.intervals[worker as usize].push((start, end, Activity::Overhead));
        }
    }

    /// Clips every interval to `[0, t_wall]`; idle time is the sum of gaps.
    fn timeline(&self, worker: usize) -> WorkerTimeline {
        let mut iv: Vec<(f64, f64, Activity)> = self.intervals[worker]
            .iter()
            .map(|&(s, e, a)| (s.clamp(0.0, self.t_wall), e.clamp(0.0, self.t_wall), a))
            .collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut t = WorkerTimeline::default();
        let mut cursor = 0.0;
        for (s, e, a) in iv {
            if s > cursor {
                t.idle += s - cursor;
            }
            let s = s.max(cursor);
            if e > s {
                match a {
                    Activity::Busy => t.busy += e - s,
                    Activity::Overhead => t.overhead += e - s,
                }
                cursor = e;
            }
        }
        t.idle += self.t_wall - cursor;
        t
    }

    pub fn worker_timelines(&self) -> Vec<WorkerTimeline> {
        (1..self.intervals.len()).map(|w| self.timeline(w)).collect()
    }

    pub fn manager_timeline(&self) -> WorkerTimeline {
        self.timeline(0)
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub method: Method,
    pub benchmark: String,
    pub dim: usize,
    pub n_worker: usize,
    pub t_wall: f64,
    pub seed: u64,
    /// `(t_end, best objective so far)` in the benchmark's minimization sign,
    /// one point per completed evaluation in completion order.
    pub trajectory: Vec<(f64, f64)>,
    pub n_evaluations: usize,
    pub u_eff: f64,
    pub per_worker_busy: Vec<f64>,
    pub timelines: Vec<WorkerTimeline>,
    pub manager: WorkerTimeline,
    /// `(fit start time, fit duration)`.
    pub fit_durations: Vec<(f64, f64)>,
    pub events: Vec<Event>,
    /// All records of the run, objectives in the maximization sign.
    pub records: Vec<EvalRecord>,
    /// Each worker's final local history; empty for centralized methods.
    pub final_histories: Vec<History>,
    pub event_log: Option<PathBuf>,
    pub space: Arc<ParamSpace>,
}

/// Shared fields of a finished run, handed over by a runner.
pub(crate) struct RunOutput {
    pub records: Vec<EvalRecord>,
    pub events: Vec<Event>,
    pub timelines: TimelineBuilder,
    pub fit_durations: Vec<(f64, f64)>,
    pub final_histories: Vec<History>,
}

impl ExperimentReport {
    pub(crate) fn assemble(cfg: &super::ExperimentConfig, space: Arc<ParamSpace>, out: RunOutput) -> Self {
        let mut records = out.records;
        records.sort_by(|a, b| a.t_end.total_cmp(&b.t_end).then(a.key().cmp(&b.key())));
        let trajectory = trajectory_of(&records);
        let timelines = out.timelines.worker_timelines();
        let busy: f64 = timelines.iter().map(|t| t.busy).sum();
        let u_eff = busy / (cfg.n_worker as f64 * cfg.t_wall);
        Self {
            method: cfg.method,
            benchmark: cfg.benchmark.name().to_string(),
            dim: cfg.benchmark.dim(),
            n_worker: cfg.n_worker,
            t_wall: cfg.t_wall,
            seed: cfg.seed,
            trajectory,
            n_evaluations: records.len(),
            u_eff,
            per_worker_busy: timelines.iter().map(|t| t.busy / cfg.t_wall).collect(),
            manager: out.timelines.manager_timeline(),
            timelines,
            fit_durations: out.fit_durations,
            events: out.events,
            records,
            final_histories: out.final_histories,
            event_log: None,
            space,
        }
    }

    /// Best (lowest) benchmark value found, if any evaluation completed.
    pub fn final_best(&self) -> Option<f64> {
        self.trajectory.last().map(|p| p.1)
    }

    /// Best value among evaluations finished by time `t`.
    pub fn best_at(&self, t: f64) -> Option<f64> {
        self.trajectory.iter().take_while(|p| p.0 <= t).last().map(|p| p.1)
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            method: self.method.name().to_string(),
            benchmark: self.benchmark.clone(),
            dim: self.dim,
            n_worker: self.n_worker,
            t_wall: self.t_wall,
            seed: self.seed,
            n_evaluations: self.n_evaluations,
            u_eff: self.u_eff,
            final_best: self.final_best(),
            trajectory: self.trajectory.clone(),
        }
    }

    /// Writes `report.csv`, `events.csv`, `history.csv` and `summary.txt`.
    pub fn write_dir(&mut self, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;

        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("report.csv"))?));
        w.write_record(["time", "best_objective"])?;
        for (t, best) in &self.trajectory {
            w.write_record([t.to_string(), best.to_string()])?;
        }
        w.flush()?;

        let events = dir.join("events.csv");
        write_events_csv(&self.events, BufWriter::new(File::create(&events)?))?;
        self.event_log = Some(events);

        write_records_csv(self.records.iter(), &self.space, BufWriter::new(File::create(dir.join("history.csv"))?))?;

        fs::write(dir.join("summary.txt"), self.summary_text())?;
        Ok(())
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let s_ = &mut s;
        let _ = writeln!(s_, "method={}", self.method);
        let _ = writeln!(s_, "benchmark={}", self.benchmark);
        let _ = writeln!(s_, "dim={}", self.dim);
        let _ = writeln!(s_, "n_worker={}", self.n_worker);
        let _ = writeln!(s_, "t_wall={}", self.t_wall);
        let _ = writeln!(s_, "seed={}", self.seed);
        let _ = writeln!(s_, "n_evaluations={}", self.n_evaluations);
        let _ = writeln!(s_, "u_eff={}", self.u_eff);
        let best = self.final_best().map_or_else(|| "nan".to_string(), |b| b.to_string());
        let _ = writeln!(s_, "final_best={best}");
        let busy: Vec<String> = self.per_worker_busy.iter().map(f64::to_string).collect();
        let _ = writeln!(s_, "per_worker_busy={}", busy.join(","));
        let _ = writeln!(s_, "n_fits={}", self.fit_durations.len());
        let _ = writeln!(s_, "total_fit_time={}", self.fit_durations.iter().map(|f| f.1).sum::<f64>() + 0.0);
        let _ = writeln!(s_, "manager_overhead={}", self.manager.overhead);
        s
    }
}

fn trajectory_of(sorted: &[EvalRecord]) -> Vec<(f64, f64)> {
    let mut best = f64::NEG_INFINITY;
    sorted
        .iter()
        .map(|r| {
            best = best.max(r.objective);
            (r.t_end, -best)
        })
        .collect()
}

/// The part of a report needed for comparisons; loadable from a report dir.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub method: String,
    pub benchmark: String,
    pub dim: usize,
    pub n_worker: usize,
    pub t_wall: f64,
    pub seed: u64,
    pub n_evaluations: usize,
    pub u_eff: f64,
    pub final_best: Option<f64>,
    pub trajectory: Vec<(f64, f64)>,
}

impl ReportSummary {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join("summary.txt"))?;
        let kv: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
        let get = |k: &str| {
            kv.get(k).copied().ok_or_else(|| HarnessError::Report(format!("{}: missing `{k}`", dir.display())))
        };
        let parse_err = |k: &str| HarnessError::Report(format!("{}: bad `{k}`", dir.display()));
        let num = |k: &str| -> Result<f64, HarnessError> { get(k)?.parse().map_err(|_| parse_err(k)) };
        let int = |k: &str| -> Result<u64, HarnessError> { get(k)?.parse().map_err(|_| parse_err(k)) };

        let mut trajectory = Vec::new();
        let mut r = csv::Reader::from_path(dir.join("report.csv"))?;
        for row in r.deserialize() {
            let (t, b): (f64, f64) = row?;
            trajectory.push((t, b));
        }
        let best = num("final_best")?;
        Ok(Self {
            method: get("method")?.to_string(),
            benchmark: get("benchmark")?.to_string(),
            dim: int("dim")? as usize,
            n_worker: int("n_worker")? as usize,
            t_wall: num("t_wall")?,
            seed: int("seed")?,
            n_evaluations: int("n_evaluations")? as usize,
            u_eff: num("u_eff")?,
            final_best: (!best.is_nan()).then_some(best),
            trajectory,
        })
    }

    /// First time the best-so-far reaches `threshold` or lower.
    pub fn time_to_threshold(&self, threshold: f64) -> Option<f64> {
        self.trajectory.iter().find(|p| p.1 <= threshold).map(|p| p.0)
    }
}

/// Mean and standard error over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
        };
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub benchmark: String,
    pub method: String,
    pub n_worker: usize,
    pub n_runs: usize,
    pub final_best: Stat,
    pub n_evaluations: Stat,
    pub u_eff: Stat,
    /// Mean over the runs that reached the threshold.
    pub time_to_threshold: Option<f64>,
    pub reached: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub threshold: Option<f64>,
    pub rows: Vec<ComparisonRow>,
}

/// Aggregates reports by (benchmark, method, workers). Rows are grouped by
/// benchmark and sorted by mean final best within each group.
pub fn compare(reports: &[ReportSummary], threshold: Option<f64>) -> Comparison {
    let mut groups: BTreeMap<(String, String, usize), Vec<&ReportSummary>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.benchmark.clone(), r.method.clone(), r.n_worker)).or_default().push(r);
    }
    let mut rows: Vec<ComparisonRow> = groups
        .into_iter()
        .map(|((benchmark, method, n_worker), rs)| {
            let bests: Vec<f64> = rs.iter().filter_map(|r| r.final_best).collect();
            let times: Vec<f64> = match threshold {
                Some(th) => rs.iter().filter_map(|r| r.time_to_threshold(th)).collect(),
                None => Vec::new(),
            };
            ComparisonRow {
                benchmark,
                method,
                n_worker,
                n_runs: rs.len(),
                final_best: Stat::of(&bests),
                n_evaluations: Stat::of(&rs.iter().map(|r| r.n_evaluations as f64).collect::<Vec<_>>()),
                u_eff: Stat::of(&rs.iter().map(|r| r.u_eff).collect::<Vec<_>>()),
                time_to_threshold: (!times.is_empty()).then(|| Stat::of(&times).mean),
                reached: times.len(),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.benchmark
            .cmp(&b.benchmark)
            .then(a.final_best.mean.total_cmp(&b.final_best.mean))
            .then(a.method.cmp(&b.method))
            .then(a.n_worker.cmp(&b.n_worker))
    });
    Comparison { threshold, rows }
}

const HEADER: [&str; 13] = [
    "benchmark",
    "method",
    "workers",
    "runs",
    "final_best",
    "final_best_se",
    "n_evaluations",
    "n_evaluations_se",
    "u_eff",
    "u_eff_se",
    "time_to_threshold",
    "reached",
    "threshold",
];

impl Comparison {
    fn cells(&self) -> Vec<Vec<String>> {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.benchmark.clone(),
                    r.method.clone(),
                    r.n_worker.to_string(),
                    r.n_runs.to_string(),
                    format!("{:.4}", r.final_best.mean),
                    format!("{:.4}", r.final_best.stderr),
                    format!("{:.1}", r.n_evaluations.mean),
                    format!("{:.1}", r.n_evaluations.stderr),
                    format!("{:.4}", r.u_eff.mean),
                    format!("{:.4}", r.u_eff.stderr),
                    opt(r.time_to_threshold),
                    r.reached.to_string(),
                    opt(self.threshold),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for row in self.cells() {
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    /// Fixed-width table; one blank line between benchmark groups.
    pub fn to_text(&self) -> String {
        let header = ["benchmark", "method", "workers", "runs", "final_best", "n_eval", "u_eff", "t_threshold"];
        let rows: Vec<Vec<String>> = self
            .cells()
            .into_iter()
            .map(|c| {
                vec![
                    c[0].clone(),
                    c[1].clone(),
                    c[2].clone(),
                    c[3].clone(),
                    format!("{} ± {}", c[4], c[5]),
                    format!("{} ± {}", c[6], c[7]),
                    format!("{} ± {}", c[8], c[9]),
                    c[10].clone(),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| rows.iter().map(|r| r[i].chars().count()).chain([header[i].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| -> String {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}", w = *w)).collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut out = line(&header.map(String::from));
        out.push('\n');
        let mut prev: Option<&str> = None;
        for (row, src) in rows.iter().zip(&self.rows) {
            if prev.is_some_and(|p| p != src.benchmark) {
                out.push('\n');
            }
            prev = Some(&src.benchmark);
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(method: &str, benchmark: &str, best: f64) -> ReportSummary {
        ReportSummary {
            method: method.to_string(),
            benchmark: benchmark.to_string(),
            dim: 5,
            n_worker: 4,
            t_wall: 100.0,
            seed: 0,
            n_evaluations: 10,
            u_eff: 0.9,
            final_best: Some(best),
            trajectory: vec![(10.0, best + 1.0), (50.0, best)],
        }
    }

    #[test]
    fn timeline_conserves_time_and_clips() {
        let mut b = TimelineBuilder::new(1, 10.0);
        b.busy(1, 0.0, 4.0);
        b.overhead(1, 4.0, 5.0);
        b.busy(1, 7.0, 12.0);
        let t = b.worker_timelines()[0];
        assert_eq!(t, WorkerTimeline { busy: 7.0, overhead: 1.0, idle: 2.0 });
    }

    #[test]
    fn single_report_is_one_row() {
        let c = compare(&[summary("adbo-qucb", "ackley", 3.0)], None);
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.to_csv().lines().count(), 2);
    }

    #[test]
    fn rows_sort_by_final_objective_within_benchmark() {
        let c = compare(
            &[
                summary("sdbo-bucb", "ackley", 5.0),
                summary("adbo-qucb", "ackley", 3.0),
                summary("rd-acbo", "levy", 1.0),
            ],
            Some(4.5),
        );
        let order: Vec<(&str, &str)> = c.rows.iter().map(|r| (r.benchmark.as_str(), r.method.as_str())).collect();
        assert_eq!(order, vec![("ackley", "adbo-qucb"), ("ackley", "sdbo-bucb"), ("levy", "rd-acbo")]);
        assert_eq!(c.rows[0].time_to_threshold, Some(10.0));
        assert_eq!(c.rows[1].time_to_threshold, None);
        let text = c.to_text();
        assert_eq!(text.lines().filter(|l| l.is_empty()).count(), 1);
    }

    #[test]
    fn seeds_aggregate_with_standard_error() {
        let mut a = summary("adbo-qucb", "ackley", 2.0);
        let mut b = a.clone();
        b.final_best = Some(4.0);
        a.seed = 1;
        let c = compare(&[a, b], None);
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0].final_best.mean, 3.0);
        assert!((c.rows[0].final_best.stderr - 1.0).abs() < 1e-12);
    }
}

//! Evaluation records and the per-worker history they accumulate in.

use std::collections::HashSet;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::space::{Config, FeatureMatrix, ParamSpace};

/// Worker rank. Ranks start at 1; rank 0 is reserved for a central manager.
pub type WorkerId = u32;

/// Number of objective-quantile bins used by [`History::undersample`].
pub const QUANTILE_BINS: usize = 5;

/// One completed black-box evaluation.
///
/// `objective` follows the maximization convention; minimization problems are
/// stored negated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub config: Config,
    pub objective: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub worker_id: WorkerId,
    pub seq: u64,
}

impl EvalRecord {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn key(&self) -> (WorkerId, u64) {
        (self.worker_id, self.seq)
    }
}

/// Append-only store of evaluation records, deduplicated by `(worker_id, seq)`.
#[derive(Debug, Clone, Default)]
pub struct History {
    records: Vec<EvalRecord>,
    keys: HashSet<(WorkerId, u64)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `record` unless a record with the same key is already present.
    /// Returns whether the record was inserted.
    pub fn push(&mut self, record: EvalRecord) -> bool {
        if !self.keys.insert(record.key()) {
            return false;
        }
        self.records.push(record);
        true
    }

    pub fn n_sample(&self) -> usize {
        self.records.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, worker_id: WorkerId, seq: u64) -> bool {
        self.keys.contains(&(worker_id, seq))
    }

    /// Records in insertion order.
    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EvalRecord> {
        self.records.iter()
    }

    pub fn max_objective(&self) -> Option<f64> {
        self.records.iter().map(|r| r.objective).max_by(f64::total_cmp)
    }

    /// Record with the largest objective; ties go to the earliest `t_end`,
    /// then to the lowest worker id.
    pub fn best(&self) -> Option<&EvalRecord> {
        self.records.iter().min_by(|a, b| {
            b.objective
                .total_cmp(&a.objective)
                .then(a.t_end.total_cmp(&b.t_end))
                .then(a.worker_id.cmp(&b.worker_id))
                .then(a.seq.cmp(&b.seq))
        })
    }

    /// Bounded training view of the history.
    ///
    /// With at most `n_max_sample` records everything is returned. Otherwise the
    /// records are split into five bins at the 20/40/60/80th objective
    /// percentiles (nearest rank) and `n_max_sample / 5` records are drawn with
    /// replacement from every non-empty bin.
    pub fn undersample<R: Rng + ?Sized>(&self, n_max_sample: usize, rng: &mut R) -> Vec<&EvalRecord> {
        debug_assert!(n_max_sample >= QUANTILE_BINS);
        let n = self.records.len();
        if n <= n_max_sample {
            return self.records.iter().collect();
        }
        let mut sorted: Vec<f64> = self.records.iter().map(|r| r.objective).collect();
        sorted.sort_by(f64::total_cmp);
        let cuts: Vec<f64> =
            (1..QUANTILE_BINS).map(|k| sorted[nearest_rank(k as f64 / QUANTILE_BINS as f64, n) - 1]).collect();

        let mut bins: Vec<Vec<usize>> = vec![Vec::new(); QUANTILE_BINS];
        for (i, r) in self.records.iter().enumerate() {
            let bin = cuts.iter().take_while(|&&c| r.objective > c).count();
            bins[bin].push(i);
        }

        let quota = n_max_sample / QUANTILE_BINS;
        let mut out = Vec::with_capacity(quota * QUANTILE_BINS);
        for bin in bins.iter().filter(|b| !b.is_empty()) {
            for _ in 0..quota {
                out.push(&self.records[bin[rng.random_range(0..bin.len())]]);
            }
        }
        out
    }

    /// Writes the history as CSV: `worker_id, seq, t_start, t_end, objective`
    /// followed by one column per dimension.
    pub fn write_csv<W: Write>(&self, space: &ParamSpace, out: W) -> csv::Result<()> {
        write_records_csv(self.records.iter(), space, out)
    }
}

impl Extend<EvalRecord> for History {
    fn extend<I: IntoIterator<Item = EvalRecord>>(&mut self, iter: I) {
        for r in iter {
            self.push(r);
        }
    }
}

impl FromIterator<EvalRecord> for History {
    fn from_iter<I: IntoIterator<Item = EvalRecord>>(iter: I) -> Self {
        let mut h = History::new();
        h.extend(iter);
        h
    }
}

/// 1-based nearest-rank index of percentile `p` among `n` sorted values.
fn nearest_rank(p: f64, n: usize) -> usize {
    ((p * n as f64).ceil() as usize).clamp(1, n)
}

pub(crate) fn write_records_csv<'a, W: Write>(
    records: impl Iterator<Item = &'a EvalRecord>,
    space: &ParamSpace,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["worker_id", "seq", "t_start", "t_end", "objective"];
    header.extend(space.dims().iter().map(|d| d.name()));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.worker_id.to_string(),
            r.seq.to_string(),
            r.t_start.to_string(),
            r.t_end.to_string(),
            r.objective.to_string(),
        ];
        row.extend(r.config.values.iter().enumerate().map(|(i, v)| space.render_value(i, v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Encodes records into a feature matrix and target vector for the surrogate.
pub fn training_set<'a>(
    space: &ParamSpace,
    records: impl IntoIterator<Item = &'a EvalRecord>,
) -> (FeatureMatrix, Vec<f64>) {
    let mut x = FeatureMatrix::with_width(space.n_dims());
    let mut y = Vec::new();
    for r in records {
        space.encode_into(&r.config, &mut x);
        y.push(r.objective);
    }
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(worker_id: WorkerId, seq: u64, objective: f64, t_end: f64) -> EvalRecord {
        EvalRecord { config: Config::reals(&[objective]), objective, t_start: t_end - 1.0, t_end, worker_id, seq }
    }

    #[test]
    fn push_is_idempotent_per_key() {
        let mut h = History::new();
        assert!(h.push(rec(1, 0, 1.0, 1.0)));
        assert_eq!(h.n_sample(), 1);
        assert!(!h.push(rec(1, 0, 1.0, 1.0)));
        assert_eq!(h.n_sample(), 1);
        assert!(h.push(rec(1, 1, 2.0, 2.0)));
        assert_eq!(h.n_sample(), 2);
    }

    #[test]
    fn best_prefers_objective_then_time_then_worker() {
        let mut h = History::new();
        assert!(h.best().is_none());
        h.push(rec(1, 0, 1.0, 5.0));
        h.push(rec(1, 1, 3.0, 9.0));
        assert_eq!(h.best().unwrap().objective, 3.0);

        let mut tie = History::new();
        tie.push(rec(2, 0, 3.0, 9.0));
        tie.push(rec(1, 0, 3.0, 9.0));
        assert_eq!(tie.best().unwrap().worker_id, 1);
    }

    #[test]
    fn undersample_below_cap_returns_everything() {
        let h: History = (0..100).map(|i| rec(1, i, i as f64, i as f64)).collect();
        let out = h.undersample(5000, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(out.len(), 100);
        assert!(out.iter().zip(h.records()).all(|(a, b)| std::ptr::eq(*a, b)));
    }

    #[test]
    fn undersample_distinct_objectives_fills_every_bin() {
        let h: History = (0..10_000).map(|i| rec(1, i, i as f64, 0.0)).collect();
        let out = h.undersample(5000, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out.len(), 5000);
        // Bins by construction: [0,1999], [2000,3999], ... each gets 1000 draws.
        for k in 0..5 {
            let lo = (k * 2000) as f64;
            let hi = lo + 1999.0;
            let count = out.iter().filter(|r| r.objective >= lo && r.objective <= hi).count();
            assert_eq!(count, 1000, "bin {k}");
        }
    }

    #[test]
    fn undersample_identical_objectives_use_one_bin() {
        // All cuts coincide, so the lowest bin holds every record and the
        // other four are empty: one quota of 5 / 5 = 1 draw.
        let h: History = (0..6).map(|i| rec(1, i, 4.2, 0.0)).collect();
        let out = h.undersample(5, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(out.len(), 1);
        assert!(out.iter().all(|r| r.objective == 4.2));

        let out = h.undersample(25, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn every_record_is_eventually_resampled() {
        let h: History = (0..100).map(|i| rec(1, i, (i % 37) as f64, 0.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = HashSet::new();
        for _ in 0..1000 {
            for r in h.undersample(50, &mut rng) {
                seen.insert(r.key());
            }
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn csv_dump_has_expected_columns() {
        let space = ParamSpace::uniform_box(&[(0.0, 10.0)]).unwrap();
        let h: History = (0..2).map(|i| rec(3, i, i as f64, 2.0)).collect();
        let mut buf = Vec::new();
        h.write_csv(&space, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "worker_id,seq,t_start,t_end,objective,x0");
        assert_eq!(lines.next().unwrap(), "3,0,1,2,0,0");
        assert_eq!(lines.count(), 1);
    }
}

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::config::AnchorMode;
use super::run::{Anchors, MetricsPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSeries {
    pub seed: u64,
    /// Scale this seed's curve was normalized with.
    pub anchors: Anchors,
    pub points: Vec<MetricsPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub n_prefs: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Learning curves of every seed of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    /// Uniform-random and optimal values of the environment.
    pub anchors: Anchors,
    #[serde(default)]
    pub anchor_mode: AnchorMode,
    pub target_gap: f64,
    pub seeds: Vec<SeedSeries>,
}

/// Mean and 95% Student-t half-width.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive dof").inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

/// First `n_prefs` at which `100 - normalized <= gap`.
fn first_within(points: impl IntoIterator<Item = (usize, f64)>, gap: f64) -> Option<usize> {
    points.into_iter().find(|&(_, v)| 100.0 - v <= gap).map(|(n, _)| n)
}

impl MetricsSeries {
    /// Mean curve over seeds, at the checkpoints all seeds share.
    pub fn summary(&self) -> Vec<SummaryPoint> {
        let Some(first) = self.seeds.first() else {
            return Vec::new();
        };
        first
            .points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let vals: Option<Vec<f64>> = self
                    .seeds
                    .iter()
                    .map(|s| s.points.get(i).filter(|q| q.n_prefs == p.n_prefs).map(|q| q.normalized_return))
                    .collect();
                let vals = vals?;
                let (mean, half) = mean_ci(&vals);
                Some(SummaryPoint { n_prefs: p.n_prefs, mean, ci_low: mean - half, ci_high: mean + half })
            })
            .collect()
    }

    /// Labels needed for the mean curve to come within the target gap.
    pub fn sample_complexity(&self) -> Option<usize> {
        first_within(self.summary().iter().map(|p| (p.n_prefs, p.mean)), self.target_gap)
    }

    pub fn per_seed_complexity(&self) -> Vec<Option<usize>> {
        self.seeds
            .iter()
            .map(|s| first_within(s.points.iter().map(|p| (p.n_prefs, p.normalized_return)), self.target_gap))
            .collect()
    }

    /// Mean and CI half-width of the per-seed complexities, counting seeds
    /// that never reach the target as `None`.
    pub fn per_seed_complexity_summary(&self) -> Option<(f64, f64)> {
        let reached: Option<Vec<f64>> = self.per_seed_complexity().into_iter().map(|c| c.map(|n| n as f64)).collect();
        reached.map(|v| mean_ci(&v))
    }

    pub fn final_mean(&self) -> f64 {
        self.summary().last().map_or(f64::NAN, |p| p.mean)
    }

    /// Mean normalized return at a given checkpoint.
    pub fn mean_at(&self, n_prefs: usize) -> Option<f64> {
        self.summary().into_iter().find(|p| p.n_prefs == n_prefs).map(|p| p.mean)
    }

    /// Rows `seed,n_prefs,raw_value,normalized_return`, preceded by `#`
    /// metadata lines holding one compact JSON object.
    pub fn to_csv(&self, metadata: &Value) -> String {
        let mut out = String::new();
        writeln!(out, "# {}", metadata).expect("string write");
        out.push_str("seed,n_prefs,raw_value,normalized_return\n");
        for s in &self.seeds {
            for p in &s.points {
                writeln!(out, "{},{},{},{}", s.seed, p.n_prefs, p.raw_value, p.normalized_return).expect("string write");
            }
        }
        out
    }

    pub fn summary_json(&self, metadata: &Value) -> Value {
        let (mean_seed, ci_seed) = self.per_seed_complexity_summary().unzip();
        json!({
            "metadata": metadata,
            "anchors": self.anchors,
            "anchor_mode": self.anchor_mode,
            "seed_anchors": self.seeds.iter().map(|s| s.anchors).collect::<Vec<_>>(),
            "target_gap": self.target_gap,
            "curve": self.summary(),
            "sample_complexity": self.sample_complexity(),
            "sample_complexity_display": complexity_label(self.sample_complexity()),
            "per_seed_sample_complexity": self.per_seed_complexity(),
            "per_seed_sample_complexity_mean": mean_seed,
            "per_seed_sample_complexity_ci": ci_seed,
            "final_mean_normalized_return": self.final_mean(),
        })
    }
}

/// `"12"`, or the unreached marker.
pub fn complexity_label(c: Option<usize>) -> String {
    c.map_or_else(|| "✗".to_string(), |n| n.to_string())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series(curves: &[&[f64]]) -> MetricsSeries {
        MetricsSeries {
            anchors: Anchors { v_min: 0.0, v_opt: 1.0 },
            anchor_mode: AnchorMode::Optimal,
            target_gap: 20.0,
            seeds: curves
                .iter()
                .enumerate()
                .map(|(k, c)| SeedSeries {
                    seed: k as u64,
                    anchors: Anchors { v_min: 0.0, v_opt: 1.0 },
                    points: c
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| MetricsPoint { n_prefs: 4 * i, raw_value: v / 100.0, normalized_return: v })
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn complexity_uses_the_mean_curve() {
        let s = series(&[&[0.0, 70.0, 90.0], &[0.0, 95.0, 95.0]]);
        // means 0, 82.5, 92.5
        assert_eq!(s.sample_complexity(), Some(4));
        assert_eq!(s.per_seed_complexity(), vec![Some(8), Some(4)]);
        let unreached = series(&[&[0.0, 10.0]]);
        assert_eq!(unreached.sample_complexity(), None);
        assert_eq!(complexity_label(None), "✗");
    }

    #[test]
    fn student_t_interval() {
        let (m, h) = mean_ci(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(m, 2.0);
        // t_{0.975, 2} = 4.302653, sd = 1, n = 3
        assert_abs_diff_eq!(h, 4.302_652_729_911_275 / 3f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn spearman_signs() {
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]), -1.0);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 5.0, 9.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]), 0.0);
    }

    #[test]
    fn csv_layout() {
        let s = series(&[&[0.0, 50.0]]);
        let csv = s.to_csv(&json!({"env": "star"}));
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# {"));
        assert_eq!(lines[1], "seed,n_prefs,raw_value,normalized_return");
        assert_eq!(lines[3], "0,4,0.5,50");
    }
}

use std::fmt::Write as _;

/// One line of the metrics trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub fold: usize,
    pub seed: u64,
    pub split: &'static str,
    pub loss: f64,
    pub accuracy: f64,
    pub pr_loss_sum: f64,
}

pub const CSV_HEADER: &str = "epoch,fold,seed,split,loss,accuracy,pr_loss_sum";

/// Renders rows as CSV with a header. Floats use the shortest exact
/// representation, so identical runs give byte-identical files.
pub fn to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch, r.fold, r.seed, r.split, r.loss, r.accuracy, r.pr_loss_sum
        );
    }
    out
}

/// Mean, population standard deviation and best value of a set of scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub best: f64,
    pub count: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(Summary {
        mean,
        std,
        best,
        count: values.len(),
    })
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:.2} (±{:.2})% best {:.2}%",
            100.0 * self.mean,
            100.0 * self.std,
            100.0 * self.best
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_uses_population_std() {
        let s = summarize(&[0.6, 0.7, 0.8]).unwrap();
        assert!((s.mean - 0.7).abs() < 1e-12);
        assert!((s.std - (0.02f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.best, 0.8);
        assert!(summarize(&[]).is_none());
        assert_eq!(s.to_string(), "70.00 (±8.16)% best 80.00%");
    }

    #[test]
    fn csv_layout() {
        let rows = [MetricRow {
            epoch: 1,
            fold: 0,
            seed: 3,
            split: "val",
            loss: 0.5,
            accuracy: 0.75,
            pr_loss_sum: 0.0,
        }];
        assert_eq!(to_csv(&rows), format!("{CSV_HEADER}\n1,0,3,val,0.5,0.75,0\n"));
    }
}

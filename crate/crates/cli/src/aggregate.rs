//! Summaries over repeated runs.
//!
//! `aggregate.csv` columns: `metric,mean,std,n`, one row per metric in a
//! fixed order. `std` is the sample standard deviation (0 for a single run).

use anyhow::Result;
use detach_rocket::RunReport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            std: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, std, n }
}

/// Relative accuracy change of the pruned model against the full model, in percent.
pub fn relative_change(report: &RunReport) -> Option<f64> {
    report
        .full_model
        .map(|f| (report.test_accuracy - f.test_accuracy) / f.test_accuracy * 100.0)
}

type Extractor = fn(&RunReport) -> Option<f64>;

const METRICS: &[(&str, Extractor)] = &[
    ("test_accuracy", |r| Some(r.test_accuracy)),
    ("train_accuracy", |r| Some(r.train_accuracy)),
    ("validation_accuracy", |r| r.validation_accuracy),
    ("full_test_accuracy", |r| {
        r.full_model.map(|f| f.test_accuracy)
    }),
    ("full_train_accuracy", |r| {
        r.full_model.map(|f| f.train_accuracy)
    }),
    ("relative_change_pct", relative_change),
    ("n_features_selected", |r| {
        Some(r.n_features_selected as f64)
    }),
    ("retained_fraction", |r| Some(r.retained_fraction)),
    ("q_c", |r| r.q_c),
    ("selected_step", |r| r.selected_step.map(|s| s as f64)),
    ("lambda_final", |r| Some(r.lambda_final)),
];

/// Metrics present in every report, summarized.
pub fn metric_table(reports: &[RunReport]) -> Vec<(&'static str, Summary)> {
    METRICS
        .iter()
        .filter_map(|(name, get)| {
            let values: Option<Vec<f64>> = reports.iter().map(get).collect();
            values
                .filter(|v| !v.is_empty())
                .map(|v| (*name, summarize(&v)))
        })
        .collect()
}

pub fn aggregate_csv(reports: &[RunReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "mean", "std", "n"])?;
    for (name, s) in metric_table(reports) {
        w.write_record([
            name,
            &s.mean.to_string(),
            &s.std.to_string(),
            &s.n.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

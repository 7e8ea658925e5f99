//! Sequential feature detachment.
//!
//! Starting from the full feature set, each step refits the ridge classifier
//! on the active features at a fixed λ, ranks them by coefficient magnitude
//! and detaches the least important `max(1, round(p·|S_t|))`. The λ is
//! chosen once by LOOCV on the full model.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Element, FeatureMatrix};
use crate::ridge::{self, RidgeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Detach the least important features.
    Sfd,
    /// Detach a uniformly random subset.
    Random,
    /// Detach the most important features.
    InverseSfd,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sfd" => Ok(Strategy::Sfd),
            "random" => Ok(Strategy::Random),
            "inverse_sfd" | "inverse-sfd" => Ok(Strategy::InverseSfd),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfdConfig {
    /// Fraction of active features detached per step.
    pub p: f64,
    /// Maximum number of detachment steps.
    pub max_steps: usize,
    pub strategy: Strategy,
    /// Only used by [`Strategy::Random`].
    pub seed: u64,
}

impl Default for SfdConfig {
    fn default() -> Self {
        SfdConfig {
            p: 0.05,
            max_steps: 150,
            strategy: Strategy::Sfd,
            seed: 0,
        }
    }
}

impl SfdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p = {} not in (0, 1)",
                self.p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningStep {
    pub active: Vec<usize>,
    pub retained_fraction: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub lambda: f64,
}

impl PruningStep {
    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Pruned fraction `1 - retained`.
    pub fn pruned_fraction(&self) -> f64 {
        1.0 - self.retained_fraction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningTrace {
    pub n_features: usize,
    pub config: SfdConfig,
    pub steps: Vec<PruningStep>,
}

impl PruningTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn has_validation(&self) -> bool {
        !self.steps.is_empty() && self.steps.iter().all(|s| s.validation_accuracy.is_some())
    }

    pub const CSV_HEADER: &'static str = "step,n_active,retained_fraction,lambda,train_acc,val_acc";

    /// One row per step; `val_acc` is empty when no evaluation set was supplied.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (t, s) in self.steps.iter().enumerate() {
            let val = s
                .validation_accuracy
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{t},{},{},{},{},{val}\n",
                s.n_active(),
                s.retained_fraction,
                s.lambda,
                s.train_accuracy
            ));
        }
        out
    }

    /// JSON document. Above `full_threshold` total ids, active sets are stored as
    /// the initial set plus the ids dropped at each step.
    pub fn to_json(&self, full_threshold: usize) -> Result<String> {
        let total: usize = self.steps.iter().map(|s| s.active.len()).sum();
        let doc = if total <= full_threshold {
            TraceDocument::from_trace(self, ActiveEncoding::Full)
        } else {
            TraceDocument::from_trace(self, ActiveEncoding::Delta)
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TraceDocument = serde_json::from_str(text)?;
        doc.into_trace()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ActiveEncoding {
    Full,
    Delta,
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    n_active: usize,
    retained_fraction: f64,
    lambda: f64,
    train_acc: f64,
    val_acc: Option<f64>,
    /// Full encoding: the active ids. Delta encoding: ids dropped relative to
    /// the previous step (the initial set for step 0).
    ids: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TraceDocument {
    n_features: usize,
    config: SfdConfig,
    encoding: ActiveEncoding,
    steps: Vec<StepRecord>,
}

impl TraceDocument {
    fn from_trace(trace: &PruningTrace, encoding: ActiveEncoding) -> Self {
        let steps = trace
            .steps
            .iter()
            .enumerate()
            .map(|(t, s)| {
                let ids = match (encoding, t) {
                    (ActiveEncoding::Full, _) | (ActiveEncoding::Delta, 0) => s.active.clone(),
                    (ActiveEncoding::Delta, _) => {
                        let kept: std::collections::HashSet<usize> =
                            s.active.iter().copied().collect();
                        trace.steps[t - 1]
                            .active
                            .iter()
                            .copied()
                            .filter(|id| !kept.contains(id))
                            .collect()
                    }
                };
                StepRecord {
                    n_active: s.n_active(),
                    retained_fraction: s.retained_fraction,
                    lambda: s.lambda,
                    train_acc: s.train_accuracy,
                    val_acc: s.validation_accuracy,
                    ids,
                }
            })
            .collect();
        TraceDocument {
            n_features: trace.n_features,
            config: trace.config,
            encoding,
            steps,
        }
    }

    fn into_trace(self) -> Result<PruningTrace> {
        let mut steps: Vec<PruningStep> = Vec::with_capacity(self.steps.len());
        for (t, rec) in self.steps.into_iter().enumerate() {
            let active = match (self.encoding, t) {
                (ActiveEncoding::Full, _) | (ActiveEncoding::Delta, 0) => rec.ids,
                (ActiveEncoding::Delta, _) => {
                    let dropped: std::collections::HashSet<usize> = rec.ids.into_iter().collect();
                    steps[t - 1]
                        .active
                        .iter()
                        .copied()
                        .filter(|id| !dropped.contains(id))
                        .collect()
                }
            };
            if active.len() != rec.n_active {
                return Err(Error::InvalidParameter(format!(
                    "trace step {t} declares {} active ids but decodes to {}",
                    rec.n_active,
                    active.len()
                )));
            }
            steps.push(PruningStep {
                active,
                retained_fraction: rec.retained_fraction,
                train_accuracy: rec.train_acc,
                validation_accuracy: rec.val_acc,
                lambda: rec.lambda,
            });
        }
        Ok(PruningTrace {
            n_features: self.n_features,
            config: self.config,
            steps,
        })
    }
}

/// Global feature ids ordered by ascending importance (ties → ascending id).
pub fn rank_features(model: &RidgeModel) -> Vec<usize> {
    let importances = model.importances();
    let order = ascending_order(&model.active_features, &importances);
    order
        .into_iter()
        .map(|j| model.active_features[j])
        .collect()
}

/// Positions into `ids`, sorted by importance then id.
fn ascending_order(ids: &[usize], importances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        importances[a]
            .total_cmp(&importances[b])
            .then(ids[a].cmp(&ids[b]))
    });
    order
}

/// `max(1, round(p·n))`, so that `|S_t|/F` tracks `(1 - p)^t`.
pub fn drop_count(n_active: usize, p: f64) -> usize {
    ((p * n_active as f64).round() as usize).max(1)
}

/// Removes the `drop_count` least important features, preserving the order of the rest.
pub fn detach_step(active: &[usize], importances: &[f64], p: f64) -> Result<Vec<usize>> {
    if active.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "cannot detach from {} active feature(s)",
            active.len()
        )));
    }
    if importances.len() != active.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} importances for {} features",
            importances.len(),
            active.len()
        )));
    }
    let n_drop = drop_count(active.len(), p).min(active.len() - 1);
    let order = ascending_order(active, importances);
    Ok(keep_except(active, &order[..n_drop]))
}

fn keep_except(active: &[usize], dropped_positions: &[usize]) -> Vec<usize> {
    let mut dropped = vec![false; active.len()];
    for &p in dropped_positions {
        dropped[p] = true;
    }
    active
        .iter()
        .zip(&dropped)
        .filter(|(_, &d)| !d)
        .map(|(&id, _)| id)
        .collect()
}

/// Active-set sizes visited by a run, starting with `n_features`.
pub fn retention_schedule(
    n_features: usize,
    p: f64,
    max_steps: usize,
    min_active: usize,
) -> Vec<usize> {
    let mut sizes = vec![n_features];
    let mut n = n_features;
    for _ in 0..max_steps {
        let next = n.saturating_sub(drop_count(n, p));
        if next < min_active.max(1) {
            break;
        }
        sizes.push(next);
        n = next;
    }
    sizes
}

/// Evaluation data for a run: features plus labels.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a, T: Element> {
    pub features: &'a FeatureMatrix<T>,
    pub labels: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct SfdOutcome {
    pub trace: PruningTrace,
    /// Step-0 model on every feature.
    pub full_model: RidgeModel,
    pub loocv: ridge::LoocvSelection,
}

/// Runs the detachment loop. `train` must already be normalized; `evaluation`
/// (if any) must live in the same normalized feature space.
pub fn run_sfd<T: Element>(
    train: Labeled<'_, T>,
    evaluation: Option<Labeled<'_, T>>,
    class_names: &[String],
    config: &SfdConfig,
) -> Result<SfdOutcome> {
    config.validate()?;
    let n_features = train.features.n_cols();
    if n_features == 0 {
        return Err(Error::InvalidParameter("no features to detach".into()));
    }
    if let Some(eval) = &evaluation {
        if eval.features.global_ids() != train.features.global_ids() {
            return Err(Error::DimensionMismatch(
                "evaluation features differ from training features".into(),
            ));
        }
    }
    let min_active = 2.max(class_names.len());
    let (full_model, loocv) = ridge::fit_loocv(train.features, train.labels, class_names)?;
    let lambda = loocv.lambda;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut steps = Vec::new();
    let mut model = full_model.clone();
    // column positions of the active set inside the training matrix
    let mut positions: Vec<usize> = (0..n_features).collect();
    for t in 0..=config.max_steps {
        if t > 0 {
            let train_sub = train.features.select_positions(&positions);
            model = ridge::fit(&train_sub, train.labels, class_names, lambda)?;
        }
        let evaluate = |m: &FeatureMatrix<T>, labels: &[usize]| -> Result<f64> {
            if positions.len() == m.n_cols() {
                model.accuracy(m, labels)
            } else {
                model.accuracy(&m.select_positions(&positions), labels)
            }
        };
        let train_accuracy = evaluate(train.features, train.labels)?;
        let validation_accuracy = evaluation
            .map(|e| evaluate(e.features, e.labels))
            .transpose()?;
        steps.push(PruningStep {
            active: model.active_features.clone(),
            retained_fraction: positions.len() as f64 / n_features as f64,
            train_accuracy,
            validation_accuracy,
            lambda,
        });

        if t == config.max_steps {
            break;
        }
        let n = positions.len();
        let n_drop = drop_count(n, config.p);
        if n < n_drop + min_active {
            break;
        }
        let dropped: Vec<usize> = match config.strategy {
            Strategy::Sfd => {
                let order = ascending_order(&model.active_features, &model.importances());
                order[..n_drop].to_vec()
            }
            Strategy::InverseSfd => {
                let order = ascending_order(&model.active_features, &model.importances());
                order[n - n_drop..].to_vec()
            }
            Strategy::Random => sample(&mut rng, n, n_drop).into_vec(),
        };
        positions = keep_except(&positions, &dropped);
    }
    Ok(SfdOutcome {
        trace: PruningTrace {
            n_features,
            config: *config,
            steps,
        },
        full_model,
        loocv,
    })
}

/// Step whose retained fraction is closest to `target` (ties → smaller fraction).
pub fn model_at_retention(trace: &PruningTrace, target: f64) -> usize {
    let fractions: Vec<f64> = trace.steps.iter().map(|s| s.retained_fraction).collect();
    closest_fraction(&fractions, target)
}

/// Number of steps after which a run with `config` is closest to `target` retention.
pub fn steps_to_retention(
    n_features: usize,
    n_classes: usize,
    config: &SfdConfig,
    target: f64,
) -> usize {
    let sizes = retention_schedule(n_features, config.p, config.max_steps, 2.max(n_classes));
    let fractions: Vec<f64> = sizes
        .iter()
        .map(|&n| n as f64 / n_features as f64)
        .collect();
    closest_fraction(&fractions, target)
}

fn closest_fraction(fractions: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (t, &r) in fractions.iter().enumerate().skip(1) {
        let d = (r - target).abs();
        let b = (fractions[best] - target).abs();
        if d < b || (d == b && r < fractions[best]) {
            best = t;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn model(coefficients: Vec<Vec<f64>>, ids: Vec<usize>) -> RidgeModel {
        let outputs = coefficients.len();
        RidgeModel {
            lambda: 1.0,
            intercepts: vec![0.0; outputs],
            coefficients,
            active_features: ids,
            class_names: if outputs == 1 {
                vec!["a".into(), "b".into()]
            } else {
                (0..outputs).map(|c| c.to_string()).collect()
            },
        }
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(
            rank_features(&model(vec![vec![0.5, -2.0, 0.1]], vec![0, 1, 2])),
            vec![2, 0, 1]
        );
        let m = model(vec![vec![0.1, 1.0], vec![-3.0, 0.5]], vec![0, 1]);
        assert_eq!(m.importances()[0], 3.0);
        let tie = model(vec![vec![1.0, 0.2, 1.0]], vec![7, 3, 4]);
        assert_eq!(rank_features(&tie), vec![3, 4, 7]);
    }

    #[test]
    fn detach_examples() {
        let ids: Vec<usize> = (0..20000).collect();
        let imp: Vec<f64> = (0..20000).map(|i| i as f64).collect();
        let kept = detach_step(&ids, &imp, 0.05).unwrap();
        assert_eq!(kept.len(), 19000);
        assert_eq!(kept[0], 1000);

        let ten: Vec<usize> = (0..10).collect();
        assert_eq!(detach_step(&ten, &[1.0; 10], 0.05).unwrap().len(), 9);

        assert_eq!(
            detach_step(&[10, 11, 12], &[5.0, 1.0, 3.0], 0.34).unwrap(),
            vec![10, 12]
        );
        assert!(detach_step(&[1], &[1.0], 0.5).is_err());
    }

    #[test]
    fn schedule_tracks_geometric_decay() {
        let sizes = retention_schedule(20000, 0.05, 150, 2);
        assert_eq!(sizes.len(), 151);
        assert_eq!(sizes[45], 1988);
        assert_eq!(sizes[150], 5);
        assert!(sizes[150] as f64 / 20000.0 <= 0.0005);
        assert!(sizes.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn retention_lookup() {
        let steps = [1.0, 0.5, 0.25, 0.1]
            .iter()
            .map(|&r| PruningStep {
                active: vec![],
                retained_fraction: r,
                train_accuracy: 1.0,
                validation_accuracy: None,
                lambda: 1.0,
            })
            .collect();
        let trace = PruningTrace {
            n_features: 4,
            config: SfdConfig::default(),
            steps,
        };
        assert_eq!(model_at_retention(&trace, 1.0), 0);
        assert_eq!(model_at_retention(&trace, 0.0001), 3);
        assert_eq!(model_at_retention(&trace, 0.375), 2);
        assert_eq!(model_at_retention(&trace, 0.3), 2);
    }

    #[test]
    fn steps_to_retention_matches_schedule() {
        let cfg = SfdConfig::default();
        assert_eq!(steps_to_retention(20000, 2, &cfg, 0.10), 45);
        assert_eq!(steps_to_retention(20000, 2, &cfg, 1.0), 0);
        assert_eq!(steps_to_retention(20000, 2, &cfg, 1e-6), 150);
        assert_eq!(
            steps_to_retention(200, 2, &cfg, 0.025),
            retention_schedule(200, 0.05, 150, 2)
                .iter()
                .position(|&n| n == 5)
                .unwrap()
        );
    }

    fn planted(n: usize, seed: u64) -> (FeatureMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| {
                let sign = if l == 1 { 1.0 } else { -1.0 };
                (0..40)
                    .map(|j| {
                        let noise: f64 = rng.random_range(-1.0..1.0);
                        if j < 3 {
                            sign + noise
                        } else {
                            noise
                        }
                    })
                    .collect()
            })
            .collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn run_sfd_trace_invariants() {
        let (x, y) = planted(80, 1);
        let (xv, yv) = planted(40, 2);
        let names = vec!["a".to_string(), "b".to_string()];
        let cfg = SfdConfig {
            max_steps: 150,
            ..SfdConfig::default()
        };
        let out = run_sfd(
            Labeled {
                features: &x,
                labels: &y,
            },
            Some(Labeled {
                features: &xv,
                labels: &yv,
            }),
            &names,
            &cfg,
        )
        .unwrap();
        let trace = &out.trace;
        assert_eq!(trace.steps[0].active.len(), 40);
        assert_eq!(trace.steps.last().unwrap().active.len(), 2);
        for w in trace.steps.windows(2) {
            assert_eq!(
                w[1].active.len(),
                w[0].active.len() - drop_count(w[0].active.len(), 0.05)
            );
            assert!(w[1].active.iter().all(|id| w[0].active.contains(id)));
            assert!(w[1].retained_fraction < w[0].retained_fraction);
        }
        assert!(trace.steps.iter().all(|s| s.lambda == out.loocv.lambda));
        // the three planted features survive to the end
        assert!(trace.steps.last().unwrap().active.iter().all(|&id| id < 3));
        assert!(trace.has_validation());

        let back = PruningTrace::from_json(&trace.to_json(0).unwrap()).unwrap();
        assert_eq!(&back, trace);
        let full = PruningTrace::from_json(&trace.to_json(usize::MAX).unwrap()).unwrap();
        assert_eq!(&full, trace);
        let csv = trace.to_csv();
        assert!(csv.starts_with(PruningTrace::CSV_HEADER));
        assert_eq!(csv.lines().count(), trace.len() + 1);
    }

    #[test]
    fn multiclass_stops_at_class_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let x = FeatureMatrix::<f64>::from_rows(&rows).unwrap();
        let y: Vec<usize> = (0..30).map(|i| i % 4).collect();
        let names: Vec<String> = (0..4).map(|c| c.to_string()).collect();
        let out = run_sfd(
            Labeled {
                features: &x,
                labels: &y,
            },
            None,
            &names,
            &SfdConfig::default(),
        )
        .unwrap();
        assert_eq!(out.trace.steps.last().unwrap().active.len(), 4);
        assert!(!out.trace.has_validation());
        assert!(out.trace.to_csv().lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn random_strategy_is_seeded() {
        let (x, y) = planted(60, 4);
        let names = vec!["a".to_string(), "b".to_string()];
        let cfg = SfdConfig {
            strategy: Strategy::Random,
            seed: 9,
            max_steps: 10,
            ..SfdConfig::default()
        };
        let run = |c: &SfdConfig| {
            run_sfd(
                Labeled {
                    features: &x,
                    labels: &y,
                },
                None,
                &names,
                c,
            )
            .unwrap()
            .trace
        };
        assert_eq!(run(&cfg), run(&cfg));
        assert_ne!(run(&cfg), run(&SfdConfig { seed: 10, ..cfg }));
    }

    #[test]
    fn strategy_parsing_and_config_validation() {
        assert_eq!(
            "inverse_sfd".parse::<Strategy>().unwrap(),
            Strategy::InverseSfd
        );
        assert!("nope".parse::<Strategy>().is_err());
        assert!(SfdConfig {
            p: 1.0,
            ..SfdConfig::default()
        }
        .validate()
        .is_err());
    }
}

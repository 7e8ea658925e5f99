//! Closed-form ridge classifier with an unpenalized intercept.
//!
//! Targets are `±1` (one output for two classes, one-vs-rest outputs
//! otherwise). Columns and targets are centered so the intercept drops out
//! of the penalty. The linear system is solved in whichever space is
//! smaller: the `N×N` Gram space when there are more features than
//! instances, the `F×F` feature space otherwise.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Element, FeatureMatrix};

/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub const LAMBDA_GRID_POINTS: usize = 20;

/// `LAMBDA_GRID_POINTS` values log-uniform on `[e^-10, e^10]`, ascending.
pub fn lambda_grid() -> Vec<f64> {
    let n = LAMBDA_GRID_POINTS;
    (0..n)
        .map(|i| (-10.0 + 20.0 * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    #[default]
    Auto,
    /// Factorize `Xc Xcᵀ + λI` (`N×N`).
    Gram,
    /// Factorize `XcᵀXc + λI` (`F×F`).
    Feature,
}

impl Solver {
    fn resolve(self, n: usize, f: usize) -> Solver {
        match self {
            Solver::Auto if f > n => Solver::Gram,
            Solver::Auto => Solver::Feature,
            s => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub lambda: f64,
    /// One entry per output (`1` for binary problems, `C` otherwise).
    pub intercepts: Vec<f64>,
    /// `coefficients[o][j]` weights active feature `j` for output `o`.
    pub coefficients: Vec<Vec<f64>>,
    /// Global feature ids, in coefficient order.
    pub active_features: Vec<usize>,
    pub class_names: Vec<String>,
}

impl RidgeModel {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.coefficients.len()
    }

    pub fn n_features(&self) -> usize {
        self.active_features.len()
    }

    /// Per-feature importance: `|θ_k|`, or `max_c |θ_kc|` for several outputs.
    pub fn importances(&self) -> Vec<f64> {
        (0..self.n_features())
            .map(|j| {
                self.coefficients
                    .iter()
                    .map(|row| row[j].abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: RidgeModel = serde_json::from_str(text)?;
        let outputs = n_outputs(model.n_classes());
        if model.class_names.len() < 2
            || model.coefficients.len() != outputs
            || model.intercepts.len() != outputs
            || model
                .coefficients
                .iter()
                .any(|r| r.len() != model.active_features.len())
            || model.lambda <= 0.0
        {
            return Err(Error::InvalidParameter(
                "inconsistent ridge model document".into(),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::features::write_atomic(path, self.to_json()?.as_bytes())
    }

    /// Raw decision scores, one row per instance and one column per output.
    pub fn decision_scores<T: Element>(&self, x: &FeatureMatrix<T>) -> Result<Vec<Vec<f64>>> {
        if x.n_cols() < self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} features, matrix has {} columns",
                self.n_features(),
                x.n_cols()
            )));
        }
        let positions = x.positions_of(&self.active_features)?;
        Ok((0..x.n_rows())
            .map(|r| {
                let row = x.row(r);
                self.coefficients
                    .iter()
                    .zip(&self.intercepts)
                    .map(|(theta, &b)| {
                        theta
                            .iter()
                            .zip(&positions)
                            .fold(b, |acc, (t, &p)| acc + t * row[p].to_f64())
                    })
                    .collect()
            })
            .collect())
    }

    pub fn predict<T: Element>(&self, x: &FeatureMatrix<T>) -> Result<Vec<usize>> {
        Ok(self.decision_scores(x)?.iter().map(|s| decide(s)).collect())
    }

    pub fn accuracy<T: Element>(&self, x: &FeatureMatrix<T>, labels: &[usize]) -> Result<f64> {
        if labels.len() != x.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                x.n_rows()
            )));
        }
        Ok(accuracy_of(&self.predict(x)?, labels))
    }
}

/// Fraction of exact matches.
pub fn accuracy_of(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Sign rule for one output (positive → class 1), argmax with lowest-id ties otherwise.
pub fn decide(scores: &[f64]) -> usize {
    if scores.len() == 1 {
        return usize::from(scores[0] > 0.0);
    }
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

fn n_outputs(n_classes: usize) -> usize {
    if n_classes == 2 {
        1
    } else {
        n_classes
    }
}

/// `±1` target matrix (`N × outputs`).
pub fn target_matrix(labels: &[usize], n_classes: usize) -> DMatrix<f64> {
    if n_classes == 2 {
        DMatrix::from_fn(
            labels.len(),
            1,
            |i, _| if labels[i] == 1 { 1.0 } else { -1.0 },
        )
    } else {
        DMatrix::from_fn(labels.len(), n_classes, |i, c| {
            if labels[i] == c {
                1.0
            } else {
                -1.0
            }
        })
    }
}

/// Centered design and targets.
struct Design {
    x: DMatrix<f64>,
    x_mean: Vec<f64>,
    y: DMatrix<f64>,
    y_mean: Vec<f64>,
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter().map(|c| c.sum() / n).collect()
}

fn center(m: &mut DMatrix<f64>, means: &[f64]) {
    for (mut col, &mu) in m.column_iter_mut().zip(means) {
        col.add_scalar_mut(-mu);
    }
}

fn validate(n: usize, labels: &[usize], class_names: &[String]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if class_names.len() < 2 {
        return Err(Error::TooFewClasses(class_names.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
        return Err(Error::InvalidParameter(format!("label {bad} out of range")));
    }
    Ok(())
}

fn build_design<T: Element>(
    x: &FeatureMatrix<T>,
    labels: &[usize],
    class_names: &[String],
) -> Result<Design> {
    validate(x.n_rows(), labels, class_names)?;
    design_from(x, target_matrix(labels, class_names.len()))
}

fn design_from<T: Element>(x: &FeatureMatrix<T>, mut y: DMatrix<f64>) -> Result<Design> {
    if x.n_rows() < 2 {
        return Err(Error::InvalidParameter(
            "ridge fit needs at least 2 rows".into(),
        ));
    }
    if x.n_cols() == 0 {
        return Err(Error::InvalidParameter(
            "ridge fit needs at least 1 feature".into(),
        ));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("feature matrix"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("targets"));
    }
    let mut xm = DMatrix::from_fn(x.n_rows(), x.n_cols(), |r, c| x.get(r, c).to_f64());
    let x_mean = column_means(&xm);
    center(&mut xm, &x_mean);
    let y_mean = column_means(&y);
    center(&mut y, &y_mean);
    Ok(Design {
        x: xm,
        x_mean,
        y,
        y_mean,
    })
}

/// `A Aᵀ`, computed in parallel column blocks when enabled.
fn outer_gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        const BLOCK: usize = 256;
        let n = a.nrows();
        if n > 2 * BLOCK {
            let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
            let blocks: Vec<DMatrix<f64>> = starts
                .par_iter()
                .map(|&s| {
                    let w = BLOCK.min(n - s);
                    a * a.rows(s, w).transpose()
                })
                .collect();
            let mut g = DMatrix::zeros(n, n);
            for (&s, b) in starts.iter().zip(&blocks) {
                g.columns_mut(s, b.ncols()).copy_from(b);
            }
            return g;
        }
    }
    a * a.transpose()
}

fn inner_gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.tr_mul(a)
}

/// Solves `(M + λI) Z = B` for symmetric PSD `M`.
fn solve_shifted(mut m: DMatrix<f64>, lambda: f64, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let original = m.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += lambda;
    }
    if let Some(chol) = Cholesky::new(m) {
        return Ok(chol.solve(b));
    }
    // Cholesky rejected the shifted system; go through the clamped spectrum instead.
    let eig = SymmetricEigen::new(original);
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let inv = eig
        .eigenvalues
        .map(|v| 1.0 / (if v < EIGEN_FLOOR * max { 0.0 } else { v } + lambda));
    let proj = eig.eigenvectors.tr_mul(b);
    let scaled = DMatrix::from_fn(proj.nrows(), proj.ncols(), |i, j| proj[(i, j)] * inv[i]);
    let z = &eig.eigenvectors * scaled;
    if z.iter().all(|v| v.is_finite()) {
        Ok(z)
    } else {
        Err(Error::Numerical("ridge system could not be solved".into()))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

fn coefficients_for(design: &Design, lambda: f64, solver: Solver) -> Result<DMatrix<f64>> {
    let (n, f) = design.x.shape();
    match solver.resolve(n, f) {
        Solver::Gram => {
            let dual = solve_shifted(outer_gram(&design.x), lambda, &design.y)?;
            Ok(design.x.tr_mul(&dual))
        }
        _ => {
            let rhs = design.x.tr_mul(&design.y);
            solve_shifted(inner_gram(&design.x), lambda, &rhs)
        }
    }
}

fn assemble(
    design: &Design,
    theta: DMatrix<f64>,
    lambda: f64,
    active_features: Vec<usize>,
    class_names: &[String],
) -> RidgeModel {
    let intercepts = (0..theta.ncols())
        .map(|o| {
            design.y_mean[o]
                - design
                    .x_mean
                    .iter()
                    .zip(theta.column(o).iter())
                    .map(|(m, t)| m * t)
                    .sum::<f64>()
        })
        .collect();
    let coefficients = theta
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    RidgeModel {
        lambda,
        intercepts,
        coefficients,
        active_features,
        class_names: class_names.to_vec(),
    }
}

/// Fits the ridge classifier at a fixed `lambda`, choosing the solver space by shape.
pub fn fit<T: Element>(
    x: &FeatureMatrix<T>,
    labels: &[usize],
    class_names: &[String],
    lambda: f64,
) -> Result<RidgeModel> {
    fit_with_solver(x, labels, class_names, lambda, Solver::Auto)
}

pub fn fit_with_solver<T: Element>(
    x: &FeatureMatrix<T>,
    labels: &[usize],
    class_names: &[String],
    lambda: f64,
    solver: Solver,
) -> Result<RidgeModel> {
    check_lambda(lambda)?;
    let design = build_design(x, labels, class_names)?;
    let theta = coefficients_for(&design, lambda, solver)?;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite ridge coefficients".into()));
    }
    Ok(assemble(
        &design,
        theta,
        lambda,
        x.global_ids(),
        class_names,
    ))
}

/// Intercepts and coefficients of a multi-output ridge regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub intercepts: Vec<f64>,
    /// `coefficients[o][j]`.
    pub coefficients: Vec<Vec<f64>>,
}

/// Ridge regression on arbitrary real targets (`targets[i][o]`), intercept unpenalized.
pub fn solve_ridge<T: Element>(
    x: &FeatureMatrix<T>,
    targets: &[Vec<f64>],
    lambda: f64,
    solver: Solver,
) -> Result<RidgeSolution> {
    check_lambda(lambda)?;
    let outputs = targets.first().map_or(0, Vec::len);
    if targets.len() != x.n_rows() || outputs == 0 || targets.iter().any(|t| t.len() != outputs) {
        return Err(Error::DimensionMismatch(format!(
            "targets must be {} rows of equal, non-zero width",
            x.n_rows()
        )));
    }
    let y = DMatrix::from_fn(targets.len(), outputs, |i, o| targets[i][o]);
    let design = design_from(x, y)?;
    let theta = coefficients_for(&design, lambda, solver)?;
    let model = assemble(&design, theta, lambda, Vec::new(), &[]);
    Ok(RidgeSolution {
        intercepts: model.intercepts,
        coefficients: model.coefficients,
    })
}

/// Eigen-decomposition of the centered design shared by every candidate λ.
struct Spectrum {
    /// Orthonormal left singular vectors (`N × r`).
    u: DMatrix<f64>,
    /// Squared singular values, clamped.
    eig: Vec<f64>,
    /// `Uᵀ Yc` (`r × outputs`).
    uty: DMatrix<f64>,
}

impl Spectrum {
    fn new(design: &Design) -> Result<Spectrum> {
        let (n, f) = design.x.shape();
        let (u, eig) = if n <= f {
            let e = SymmetricEigen::new(outer_gram(&design.x));
            let max = e.eigenvalues.iter().copied().fold(0.0, f64::max);
            if max <= 0.0 {
                return Err(Error::Numerical("design matrix is identically zero".into()));
            }
            let eig = e
                .eigenvalues
                .iter()
                .map(|&v| if v < EIGEN_FLOOR * max { 0.0 } else { v })
                .collect();
            (e.eigenvectors, eig)
        } else {
            let e = SymmetricEigen::new(inner_gram(&design.x));
            let max = e.eigenvalues.iter().copied().fold(0.0, f64::max);
            if max <= 0.0 {
                return Err(Error::Numerical("design matrix is identically zero".into()));
            }
            let keep: Vec<usize> = (0..f)
                .filter(|&j| e.eigenvalues[j] >= EIGEN_FLOOR * max)
                .collect();
            let mut u = DMatrix::zeros(n, keep.len());
            for (col, &j) in keep.iter().enumerate() {
                let v = e.eigenvectors.column(j);
                let scale = 1.0 / e.eigenvalues[j].sqrt();
                u.set_column(col, &((&design.x * v) * scale));
            }
            (u, keep.iter().map(|&j| e.eigenvalues[j]).collect())
        };
        let uty = u.tr_mul(&design.y);
        Ok(Spectrum { u, eig, uty })
    }

    /// Leave-one-out residuals `e_i / (1 - h_ii)` of the centered targets.
    fn loo_residuals(&self, design: &Design, lambda: f64) -> DMatrix<f64> {
        let n = design.x.nrows();
        let shrink: Vec<f64> = self.eig.iter().map(|&d| d / (d + lambda)).collect();
        let scaled = DMatrix::from_fn(self.uty.nrows(), self.uty.ncols(), |j, o| {
            self.uty[(j, o)] * shrink[j]
        });
        let fitted = &self.u * scaled;
        let mut out = &design.y - fitted;
        for i in 0..n {
            let leverage = 1.0 / n as f64
                + self
                    .u
                    .row(i)
                    .iter()
                    .zip(&shrink)
                    .map(|(u, s)| u * u * s)
                    .sum::<f64>();
            let denom = 1.0 - leverage;
            for o in 0..out.ncols() {
                out[(i, o)] /= denom;
            }
        }
        out
    }
}

fn loo_accuracy(design: &Design, residuals: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let predicted: Vec<usize> = (0..residuals.nrows())
        .map(|i| {
            let scores: Vec<f64> = (0..residuals.ncols())
                .map(|o| design.y[(i, o)] + design.y_mean[o] - residuals[(i, o)])
                .collect();
            decide(&scores)
        })
        .collect();
    accuracy_of(&predicted, labels)
}

/// Exact leave-one-out residuals (`N × outputs`) of the `±1` targets at `lambda`,
/// from a single decomposition.
pub fn loo_residuals<T: Element>(
    x: &FeatureMatrix<T>,
    labels: &[usize],
    class_names: &[String],
    lambda: f64,
) -> Result<Vec<Vec<f64>>> {
    check_lambda(lambda)?;
    let design = build_design(x, labels, class_names)?;
    let spectrum = Spectrum::new(&design)?;
    let r = spectrum.loo_residuals(&design, lambda);
    Ok(r.row_iter()
        .map(|row| row.iter().copied().collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvSelection {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub accuracies: Vec<f64>,
}

/// Picks λ from [`lambda_grid`] by leave-one-out classification accuracy (ties → smaller λ).
pub fn select_lambda_loocv<T: Element>(
    x: &FeatureMatrix<T>,
    labels: &[usize],
    class_names: &[String],
) -> Result<LoocvSelection> {
    select_lambda_loocv_on(x, labels, class_names, &lambda_grid())
}

pub fn select_lambda_loocv_on<T: Element>(
    x: &FeatureMatrix<T>,
    labels: &[usize],
    class_names: &[String],
    grid: &[f64],
) -> Result<LoocvSelection> {
    if x.n_rows() < 3 {
        return Err(Error::InvalidParameter(
            "LOOCV needs at least 3 rows".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    let design = build_design(x, labels, class_names)?;
    let spectrum = Spectrum::new(&design)?;
    let score =
        |&lambda: &f64| loo_accuracy(&design, &spectrum.loo_residuals(&design, lambda), labels);
    #[cfg(feature = "parallel")]
    let accuracies: Vec<f64> = {
        use rayon::prelude::*;
        grid.par_iter().map(score).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let accuracies: Vec<f64> = grid.iter().map(score).collect();

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut best = order[0];
    for &i in &order[1..] {
        if accuracies[i] > accuracies[best] {
            best = i;
        }
    }
    Ok(LoocvSelection {
        lambda: grid[best],
        grid: grid.to_vec(),
        accuracies,
    })
}

/// LOOCV λ selection followed by a fit at that λ.
pub fn fit_loocv<T: Element>(
    x: &FeatureMatrix<T>,
    labels: &[usize],
    class_names: &[String],
) -> Result<(RidgeModel, LoocvSelection)> {
    let selection = select_lambda_loocv(x, labels, class_names)?;
    let model = fit(x, labels, class_names, selection.lambda)?;
    Ok((model, selection))
}

/// Penalized least-squares objective summed over outputs:
/// `Σ_o ‖y_o − θ₀_o − Xθ_o‖² + λ‖θ_o‖²`.
pub fn ridge_objective<T: Element>(
    model: &RidgeModel,
    x: &FeatureMatrix<T>,
    labels: &[usize],
) -> Result<f64> {
    let scores = model.decision_scores(x)?;
    let y = target_matrix(labels, model.n_classes());
    let mut loss = 0.0;
    for (i, row) in scores.iter().enumerate() {
        for (o, s) in row.iter().enumerate() {
            loss += (y[(i, o)] - s).powi(2);
        }
    }
    let penalty: f64 = model.coefficients.iter().flatten().map(|t| t * t).sum();
    Ok(loss + model.lambda * penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binary() -> Vec<String> {
        vec!["neg".into(), "pos".into()]
    }

    fn random_problem(
        n: usize,
        f: usize,
        classes: usize,
        seed: u64,
    ) -> (FeatureMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..f).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        labels.rotate_left(rng.random_range(0..n));
        (FeatureMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 4.539_992_976_248_485e-5).abs() < 1e-18);
        assert!((g[19] - 22026.465794806718).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn one_feature_closed_form() {
        let x = FeatureMatrix::<f64>::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let m = fit(&x, &[1, 0], &binary(), 1.0).unwrap();
        assert!((m.coefficients[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(m.intercepts[0].abs() < 1e-15);
    }

    #[test]
    fn huge_lambda_predicts_majority() {
        let x = FeatureMatrix::<f64>::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![-4.0]])
            .unwrap();
        let m = fit(&x, &[1, 1, 1, 0], &binary(), 1e10).unwrap();
        assert!(m.coefficients[0][0].abs() < 1e-8);
        assert_eq!(m.predict(&x).unwrap(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn both_solver_spaces_agree() {
        for (n, f) in [(12, 5), (6, 15), (9, 9)] {
            let (x, y) = random_problem(n, f, 3, (n * f) as u64);
            let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
            let g = fit_with_solver(&x, &y, &names, 0.3, Solver::Gram).unwrap();
            let p = fit_with_solver(&x, &y, &names, 0.3, Solver::Feature).unwrap();
            for (a, b) in g
                .coefficients
                .iter()
                .flatten()
                .zip(p.coefficients.iter().flatten())
            {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in g.intercepts.iter().zip(&p.intercepts) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn decision_rules() {
        assert_eq!(decide(&[2.0]), 1);
        assert_eq!(decide(&[-0.5]), 0);
        assert_eq!(decide(&[0.0]), 0);
        assert_eq!(decide(&[0.1, 0.3, 0.3]), 1);
        let model = RidgeModel {
            lambda: 1.0,
            intercepts: vec![0.0],
            coefficients: vec![vec![1.0]],
            active_features: vec![0],
            class_names: binary(),
        };
        let x = FeatureMatrix::<f64>::from_rows(&[vec![2.0], vec![-1.0]]).unwrap();
        assert_eq!(model.predict(&x).unwrap(), vec![1, 0]);
        assert_eq!(model.accuracy(&x, &[1, 0]).unwrap(), 1.0);
        let wide = FeatureMatrix::<f64>::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let narrow_model = RidgeModel {
            active_features: vec![0, 1, 2],
            coefficients: vec![vec![1.0; 3]],
            ..model
        };
        assert!(narrow_model.predict(&wide).is_err());
    }

    #[test]
    fn invalid_inputs() {
        let x = FeatureMatrix::<f64>::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        assert!(fit(&x, &[1, 0], &binary(), 0.0).is_err());
        assert!(fit(&x, &[1, 0], &binary(), -1.0).is_err());
        let bad = FeatureMatrix::<f64>::from_rows(&[vec![f64::NAN], vec![-1.0]]).unwrap();
        assert_eq!(
            fit(&bad, &[1, 0], &binary(), 1.0).unwrap_err().kind(),
            crate::error::ErrorKind::Numerical
        );
        let zeros = FeatureMatrix::<f64>::from_rows(&[vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        assert!(select_lambda_loocv(&zeros, &[0, 1, 0], &binary()).is_err());
    }

    #[test]
    fn separable_data_selects_smallest_lambda() {
        // far enough apart that even the largest λ keeps every held-out point on its side
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                vec![if i < 5 {
                    -100.0 - i as f64
                } else {
                    100.0 + i as f64
                }]
            })
            .collect();
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let x = FeatureMatrix::<f64>::from_rows(&rows).unwrap();
        let sel = select_lambda_loocv(&x, &labels, &binary()).unwrap();
        assert!(sel.accuracies.iter().all(|&a| a == 1.0));
        assert_eq!(sel.lambda, lambda_grid()[0]);
    }

    #[test]
    fn model_json_round_trip() {
        let (x, y) = random_problem(10, 4, 2, 1);
        let m = fit(&x, &y, &binary(), 0.5).unwrap();
        assert_eq!(RidgeModel::from_json(&m.to_json().unwrap()).unwrap(), m);
        let mut doc: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        doc["lambda"] = (-1.0).into();
        assert!(RidgeModel::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn importances_use_max_abs_over_classes() {
        let m = RidgeModel {
            lambda: 1.0,
            intercepts: vec![0.0; 3],
            coefficients: vec![vec![0.1, 0.5], vec![-3.0, 0.2], vec![0.0, -0.4]],
            active_features: vec![0, 1],
            class_names: vec!["a".into(), "b".into(), "c".into()],
        };
        assert_eq!(m.importances(), vec![3.0, 0.5]);
    }
}

//! Marking, the solve-estimate-mark-refine loop and convergence rates.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::assembly::{solve, Solution};
use crate::estimator::{global_estimate, EstimatorReport};
use crate::mesh::{BcKind, Mesh};
use crate::model::PlateProblem;
use crate::oracle::{energy_error_from_center, max_deflection_point_load, DEFAULT_MAX_TERMS};
use crate::PlateError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkingParams {
    theta: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("theta must lie strictly between 0 and 1, got {0}")]
pub struct InvalidTheta(pub f64);

impl MarkingParams {
    pub fn new(theta: f64) -> Result<Self, InvalidTheta> {
        if theta > 0.0 && theta < 1.0 {
            Ok(Self { theta })
        } else {
            Err(InvalidTheta(theta))
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl Default for MarkingParams {
    fn default() -> Self {
        Self { theta: 0.5 }
    }
}

/// Elements with `eta_K >= theta * max eta`.
pub fn mark(eta_k: &[f64], theta: f64) -> BTreeSet<usize> {
    let max = eta_k.iter().copied().fold(0.0, f64::max);
    let threshold = theta * max;
    eta_k
        .iter()
        .enumerate()
        .filter(|&(_, &e)| e >= threshold)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Uniform,
    Adaptive,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub strategy: Strategy,
    pub marking: MarkingParams,
    /// Meshes with more degrees of freedom are not solved.
    pub max_dofs: usize,
    /// Optional cap on the number of solved meshes.
    pub max_steps: Option<usize>,
}

impl StudyConfig {
    pub fn new(strategy: Strategy, max_dofs: usize) -> Self {
        Self {
            strategy,
            marking: MarkingParams::default(),
            max_dofs,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    pub step: usize,
    pub ndofs: usize,
    pub nelems: usize,
    pub eta: f64,
    pub energy: Option<f64>,
}

/// Everything known about one solved mesh of a study.
pub struct StudyStep<'a> {
    pub record: ConvergenceRecord,
    pub problem: &'a PlateProblem,
    pub solution: &'a Solution,
    pub report: &'a EstimatorReport,
}

#[derive(Debug, Error)]
#[error("study aborted after {} records: {source}", partial.len())]
pub struct StudyError {
    pub partial: Vec<ConvergenceRecord>,
    #[source]
    pub source: PlateError,
}

/// Magnitude of the load when the problem is the centred point load on the
/// simply supported unit square, the one case with an exact energy error.
pub fn centered_point_load(problem: &PlateProblem) -> Option<f64> {
    let loads = &problem.loads;
    if !loads.distributed.iter().all(|d| d.value == 0.0) || loads.line_density() != 0.0 || loads.points.len() != 1 {
        return None;
    }
    let p = loads.points[0];
    if (p.at[0] - 0.5).abs() > 1e-12 || (p.at[1] - 0.5).abs() > 1e-12 {
        return None;
    }
    let (lo, hi) = problem.mesh.bounding_box();
    let unit = lo.iter().all(|v| v.abs() < 1e-12) && hi.iter().all(|v| (v - 1.0).abs() < 1e-12);
    let area: f64 = (0..problem.mesh.num_triangles()).map(|t| problem.mesh.area(t)).sum();
    let supported = problem
        .mesh
        .edges()
        .iter()
        .filter(|e| e.is_boundary())
        .all(|e| e.tag.bc() == Some(BcKind::SimplySupported));
    (unit && (area - 1.0).abs() < 1e-12 && supported).then_some(p.magnitude)
}

/// Runs a study, calling `on_step` after each mesh is solved and estimated.
pub fn run_study_with(
    problem: &PlateProblem,
    config: &StudyConfig,
    mut on_step: impl FnMut(&StudyStep),
) -> Result<Vec<ConvergenceRecord>, StudyError> {
    let mut records = Vec::new();
    let fail = |records: &mut Vec<ConvergenceRecord>, e: PlateError| StudyError {
        partial: std::mem::take(records),
        source: e,
    };
    let exact_center = match centered_point_load(problem) {
        Some(f0) => match max_deflection_point_load(f0, &problem.material, DEFAULT_MAX_TERMS) {
            Ok(v) => Some((f0, v.value)),
            Err(e) => return Err(fail(&mut records, e.into())),
        },
        None => None,
    };
    let mut current = problem.clone();
    loop {
        let step = records.len();
        let solution = solve(&current).map_err(|e| fail(&mut records, e.into()))?;
        let report = global_estimate(&solution, &current).map_err(|e| fail(&mut records, e.into()))?;
        let energy = match exact_center {
            Some((f0, exact)) => {
                let v = current.point_load_vertices()[0];
                let uh = solution.coefficients[solution.discretization.dofs.vertex(v)];
                Some(energy_error_from_center(f0, exact, uh).map_err(|e| fail(&mut records, e.into()))?)
            }
            None => None,
        };
        let record = ConvergenceRecord {
            step,
            ndofs: solution.discretization.dofs.len(),
            nelems: current.mesh.num_triangles(),
            eta: report.eta,
            energy,
        };
        on_step(&StudyStep {
            record,
            problem: &current,
            solution: &solution,
            report: &report,
        });
        records.push(record);
        if config.max_steps.is_some_and(|m| records.len() >= m) {
            break;
        }
        let next: Mesh = match config.strategy {
            Strategy::Uniform => current.mesh.refine_uniform_red(),
            Strategy::Adaptive => {
                let marked = mark(&report.eta_k, config.marking.theta());
                current
                    .mesh
                    .refine_marked(&marked)
                    .map_err(|e| fail(&mut records, e.into()))?
            }
        };
        if next.statistics().dofs > config.max_dofs {
            break;
        }
        current = current.with_mesh(next).map_err(|e| fail(&mut records, e.into()))?;
    }
    Ok(records)
}

pub fn run_study(problem: &PlateProblem, config: &StudyConfig) -> Result<Vec<ConvergenceRecord>, StudyError> {
    run_study_with(problem, config, |_| {})
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RateError {
    #[error("a rate needs at least two records, got {0}")]
    TooFewRecords(usize),
    #[error("the window must span at least one interval")]
    EmptyWindow,
}

/// Least-squares slope of `log y` against `log N` over the last `window`
/// intervals (clamped to the available records).
pub fn rate_of(points: &[(f64, f64)], window: usize) -> Result<f64, RateError> {
    if points.len() < 2 {
        return Err(RateError::TooFewRecords(points.len()));
    }
    if window == 0 {
        return Err(RateError::EmptyWindow);
    }
    let k = (window + 1).min(points.len());
    let tail = &points[points.len() - k..];
    let xs: Vec<f64> = tail.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Slope of `log eta` against `log N` over the last `window` intervals.
pub fn rate_estimate(records: &[ConvergenceRecord], window: usize) -> Result<f64, RateError> {
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.ndofs as f64, r.eta)).collect();
    rate_of(&pts, window)
}

/// Slope of the energy error, over records that carry one.
pub fn energy_rate(records: &[ConvergenceRecord], window: usize) -> Result<f64, RateError> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.energy.map(|e| (r.ndofs as f64, e)))
        .collect();
    rate_of(&pts, window)
}

/// Default window (last two intervals) and full-range slopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSummary {
    pub window: f64,
    pub full: f64,
}

pub const DEFAULT_WINDOW: usize = 2;

pub fn rate_summary(records: &[ConvergenceRecord]) -> Result<RateSummary, RateError> {
    Ok(RateSummary {
        window: rate_estimate(records, DEFAULT_WINDOW)?,
        full: rate_estimate(records, records.len().saturating_sub(1).max(1))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::BuiltinCase;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn rec(ndofs: usize, eta: f64) -> ConvergenceRecord {
        ConvergenceRecord {
            step: 0,
            ndofs,
            nelems: 0,
            eta,
            energy: None,
        }
    }

    #[test]
    fn mark_examples() {
        assert_eq!(mark(&[3.0, 2.0, 1.0], 0.5), BTreeSet::from([0, 1]));
        for theta in [0.01, 0.5, 0.99] {
            assert_eq!(mark(&[2.0; 4], theta).len(), 4);
        }
        assert_eq!(mark(&[1.0, 5.0, 4.9, 0.2], 0.99), BTreeSet::from([1]));
    }

    #[test]
    fn theta_bounds() {
        assert!(MarkingParams::new(0.0).is_err());
        assert!(MarkingParams::new(1.0).is_err());
        assert!(MarkingParams::new(1.5).is_err());
        assert_eq!(MarkingParams::new(0.3).unwrap().theta(), 0.3);
    }

    #[test]
    fn synthetic_rate() {
        let r: Vec<_> = [10usize, 40, 160, 640]
            .iter()
            .map(|&n| rec(n, (n as f64).powi(-2)))
            .collect();
        assert!((rate_estimate(&r, 2).unwrap() + 2.0).abs() < 1e-12);
        assert!((rate_estimate(&r, 10).unwrap() + 2.0).abs() < 1e-12);
        assert_eq!(rate_estimate(&r[..1], 2), Err(RateError::TooFewRecords(1)));
    }

    #[test]
    fn published_table_slopes() {
        let r = [rec(694, 0.2472), rec(2534, 0.1236)];
        assert!((rate_estimate(&r, 1).unwrap() + 0.535).abs() < 5e-3);
        let r = [rec(219, 0.112), rec(11286, 0.00491)];
        assert!((rate_estimate(&r, 1).unwrap() + 0.79).abs() < 5e-3);
    }

    #[test]
    fn stop_semantics() {
        let p = BuiltinCase::Point.problem();
        let r = run_study(&p, &StudyConfig::new(Strategy::Uniform, 100)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].ndofs, 70);
        let r = run_study(&p, &StudyConfig::new(Strategy::Uniform, 3000)).unwrap();
        let n: Vec<usize> = r.iter().map(|x| x.ndofs).collect();
        assert_eq!(n, vec![70, 206, 694, 2534]);
        assert!(r.iter().all(|x| x.energy.is_some()));
    }

    #[test]
    fn adaptive_monotone_and_marks_load_element() {
        let p = BuiltinCase::Point.problem();
        let mut first_marked = None;
        let r = run_study_with(&p, &StudyConfig::new(Strategy::Adaptive, 1500), |s| {
            if s.record.step == 0 {
                first_marked = Some(mark(&s.report.eta_k, 0.5));
            }
        })
        .unwrap();
        assert!(r.len() >= 3);
        for w in r.windows(2) {
            assert!(w[1].ndofs > w[0].ndofs);
            assert!(w[1].eta < w[0].eta);
        }
        let center = p.point_load_vertices()[0];
        let touching = p.mesh.triangles_at_vertex(center);
        let marked = first_marked.unwrap();
        assert!(touching.iter().any(|t| marked.contains(t)));
    }

    #[test]
    fn no_energy_for_other_cases() {
        let p = BuiltinCase::Square.problem();
        assert!(centered_point_load(&p).is_none());
        assert_eq!(centered_point_load(&BuiltinCase::Point.problem()), Some(1.0));
    }

    proptest! {
        #[test]
        fn mark_scale_invariant(eta in proptest::collection::vec(0.0f64..10.0, 1..40), scale in 1e-3f64..1e3, theta in 0.01f64..0.99) {
            let scaled: Vec<f64> = eta.iter().map(|e| e * scale).collect();
            prop_assert_eq!(mark(&eta, theta), mark(&scaled, theta));
        }

        #[test]
        fn mark_order_independent(eta in proptest::collection::vec(0.0f64..10.0, 1..40), theta in 0.01f64..0.99) {
            let rev: Vec<f64> = eta.iter().rev().copied().collect();
            let n = eta.len();
            let back: BTreeSet<usize> = mark(&rev, theta).into_iter().map(|i| n - 1 - i).collect();
            prop_assert_eq!(mark(&eta, theta), back);
        }

        #[test]
        fn mark_nonempty(eta in proptest::collection::vec(0.0f64..10.0, 1..40), theta in 0.01f64..0.99) {
            prop_assert!(!mark(&eta, theta).is_empty());
        }
    }
}

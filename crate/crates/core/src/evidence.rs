//! Subjective-logic opinions over a discrete action set and their
//! Dempster-Shafer combination.
//!
//! An [`EvidenceVector`] holds non-negative support for each of `K` actions.
//! It maps to a [`DirichletOpinion`] with concentration `α = e + 1`, strength
//! `S = Σα`, belief masses `b = e / S` and uncertainty `u = K / S`, so that
//! `u + Σb = 1`.
//!
//! Opinions combine with the reduced Dempster rule for singleton focal
//! elements plus the whole frame:
//!
//! ```text
//! C   = Σ_{k≠k'} b_i^k b_j^k'
//! b^k = (b_i^k b_j^k + b_i^k u_j + b_j^k u_i) / (1 - C)
//! u   = u_i u_j / (1 - C)
//! ```
//!
//! The rule is commutative and associative, and the vacuous opinion
//! (`b = 0`, `u = 1`) is its neutral element.

use std::fmt;

use thiserror::Error;

/// Tolerance used when validating `u + Σb = 1` on externally built opinions.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Default guard on `1 - C` below which two opinions are considered in total
/// conflict.
pub const DEFAULT_CONFLICT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvidenceError {
    #[error("evidence entry {index} is {value}; entries must be finite and non-negative")]
    InvalidEvidence { index: usize, value: f64 },
    #[error("action set must contain at least one action")]
    Empty,
    #[error("belief mass {index} is {value}; masses must be finite and non-negative")]
    InvalidBelief { index: usize, value: f64 },
    #[error("uncertainty mass {0} must be finite and strictly positive")]
    InvalidUncertainty(f64),
    #[error("masses sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("action counts differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("total conflict between opinions (1 - C = {margin:e})")]
    FusionConflict { margin: f64 },
    #[error("cannot combine an empty set of opinions")]
    NoOpinions,
}

/// Non-negative evidence supporting each action.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceVector(Vec<f64>);

impl EvidenceVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EvidenceError> {
        if values.is_empty() {
            return Err(EvidenceError::Empty);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(EvidenceError::InvalidEvidence { index, value });
        }
        Ok(Self(values))
    }

    /// Zero evidence for `k` actions; maps to the vacuous opinion.
    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl AsRef<[f64]> for EvidenceVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Belief masses over `K` actions plus an uncertainty mass on the whole
/// action set.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletOpinion {
    beliefs: Vec<f64>,
    uncertainty: f64,
}

impl DirichletOpinion {
    /// Builds an opinion from explicit masses, checking every invariant.
    pub fn new(beliefs: Vec<f64>, uncertainty: f64) -> Result<Self, EvidenceError> {
        if beliefs.is_empty() {
            return Err(EvidenceError::Empty);
        }
        if let Some((index, &value)) = beliefs
            .iter()
            .enumerate()
            .find(|(_, b)| !b.is_finite() || **b < 0.0)
        {
            return Err(EvidenceError::InvalidBelief { index, value });
        }
        if !uncertainty.is_finite() || uncertainty <= 0.0 {
            return Err(EvidenceError::InvalidUncertainty(uncertainty));
        }
        let total = uncertainty + beliefs.iter().sum::<f64>();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(EvidenceError::NotNormalized(total));
        }
        Ok(Self {
            beliefs,
            uncertainty,
        })
    }

    /// The opinion with no belief committed to any action.
    pub fn vacuous(k: usize) -> Self {
        Self {
            beliefs: vec![0.0; k],
            uncertainty: 1.0,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.beliefs.len()
    }

    pub fn beliefs(&self) -> &[f64] {
        &self.beliefs
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    /// Dirichlet strength `S = K / u`.
    pub fn strength(&self) -> f64 {
        self.num_actions() as f64 / self.uncertainty
    }

    /// Concentration parameters `α^k = b^k S + 1`.
    pub fn alphas(&self) -> Vec<f64> {
        let s = self.strength();
        self.beliefs.iter().map(|b| b * s + 1.0).collect()
    }

    pub fn is_vacuous(&self) -> bool {
        self.beliefs.iter().all(|&b| b == 0.0)
    }
}

impl fmt::Display for DirichletOpinion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b=[")?;
        for (k, b) in self.beliefs.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{b:.4}")?;
        }
        write!(f, "], u={:.4}", self.uncertainty)
    }
}

/// Maps evidence to its subjective-logic opinion.
pub fn opinion_from_evidence(evidence: &EvidenceVector) -> DirichletOpinion {
    let k = evidence.len() as f64;
    let strength = evidence.total() + k;
    DirichletOpinion {
        beliefs: evidence.values().iter().map(|e| e / strength).collect(),
        uncertainty: k / strength,
    }
}

/// Inverse of [`opinion_from_evidence`]: `S = K / u`, `e = b S`.
pub fn evidence_from_opinion(opinion: &DirichletOpinion) -> Result<EvidenceVector, EvidenceError> {
    if !(opinion.uncertainty > 0.0) || !opinion.uncertainty.is_finite() {
        return Err(EvidenceError::InvalidUncertainty(opinion.uncertainty));
    }
    let strength = opinion.strength();
    EvidenceVector::new(opinion.beliefs.iter().map(|b| b * strength).collect())
}

/// Degree of disagreement `C = Σ_{k≠k'} b_i^k b_j^k'`.
pub fn conflict(left: &DirichletOpinion, right: &DirichletOpinion) -> f64 {
    let right_total: f64 = right.beliefs.iter().sum();
    left.beliefs
        .iter()
        .zip(&right.beliefs)
        .map(|(bi, bj)| bi * (right_total - bj))
        .sum()
}

/// Combines two opinions with the default conflict guard.
pub fn combine_pair(
    left: &DirichletOpinion,
    right: &DirichletOpinion,
) -> Result<DirichletOpinion, EvidenceError> {
    combine_pair_with(left, right, DEFAULT_CONFLICT_EPSILON)
}

/// Combines two opinions; fails when `1 - C <= epsilon`.
pub fn combine_pair_with(
    left: &DirichletOpinion,
    right: &DirichletOpinion,
    epsilon: f64,
) -> Result<DirichletOpinion, EvidenceError> {
    if left.num_actions() != right.num_actions() {
        return Err(EvidenceError::DimensionMismatch {
            left: left.num_actions(),
            right: right.num_actions(),
        });
    }
    let margin = 1.0 - conflict(left, right);
    if margin <= epsilon {
        return Err(EvidenceError::FusionConflict { margin });
    }
    let (ui, uj) = (left.uncertainty, right.uncertainty);
    let beliefs = left
        .beliefs
        .iter()
        .zip(&right.beliefs)
        .map(|(bi, bj)| (bi * bj + bi * uj + bj * ui) / margin)
        .collect();
    Ok(DirichletOpinion {
        beliefs,
        uncertainty: ui * uj / margin,
    })
}

/// Left fold of [`combine_pair`] over a non-empty sequence.
pub fn combine_all<'a, I>(opinions: I) -> Result<DirichletOpinion, EvidenceError>
where
    I: IntoIterator<Item = &'a DirichletOpinion>,
{
    let mut iter = opinions.into_iter();
    let first = iter.next().ok_or(EvidenceError::NoOpinions)?;
    iter.try_fold(first.clone(), |acc, next| combine_pair(&acc, next))
}

/// Mean of the Dirichlet, `α^k / S = b^k + u / K`. Sums to one.
pub fn expected_action_values(opinion: &DirichletOpinion) -> Vec<f64> {
    let base = opinion.uncertainty / opinion.num_actions() as f64;
    opinion.beliefs.iter().map(|b| b + base).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ev(values: &[f64]) -> EvidenceVector {
        EvidenceVector::new(values.to_vec()).unwrap()
    }

    fn op(beliefs: &[f64], u: f64) -> DirichletOpinion {
        DirichletOpinion::new(beliefs.to_vec(), u).unwrap()
    }

    fn assert_opinion_eq(a: &DirichletOpinion, b: &DirichletOpinion, tol: f64) {
        assert_eq!(a.num_actions(), b.num_actions());
        for (x, y) in a.beliefs().iter().zip(b.beliefs()) {
            assert_abs_diff_eq!(x, y, epsilon = tol);
        }
        assert_abs_diff_eq!(a.uncertainty(), b.uncertainty(), epsilon = tol);
    }

    #[test]
    fn zero_evidence_is_vacuous() {
        let m = opinion_from_evidence(&EvidenceVector::zeros(4));
        assert_eq!(m.alphas(), vec![1.0; 4]);
        assert_eq!(m.beliefs(), &[0.0; 4]);
        assert_eq!(m.uncertainty(), 1.0);
        assert!(m.is_vacuous());
    }

    #[test]
    fn single_action_evidence() {
        let m = opinion_from_evidence(&ev(&[4.0, 0.0, 0.0, 0.0]));
        assert_abs_diff_eq!(m.strength(), 8.0, epsilon = 1e-12);
        assert_eq!(m.beliefs(), &[0.5, 0.0, 0.0, 0.0]);
        assert_eq!(m.uncertainty(), 0.5);
    }

    #[test]
    fn balanced_binary_evidence() {
        let m = opinion_from_evidence(&ev(&[2.0, 2.0]));
        assert_abs_diff_eq!(m.strength(), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.beliefs()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.beliefs()[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.uncertainty(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_evidence() {
        assert!(matches!(
            EvidenceVector::new(vec![1.0, -0.5]),
            Err(EvidenceError::InvalidEvidence { index: 1, .. })
        ));
        assert!(EvidenceVector::new(vec![f64::NAN]).is_err());
        assert!(EvidenceVector::new(vec![f64::INFINITY]).is_err());
        assert_eq!(EvidenceVector::new(vec![]), Err(EvidenceError::Empty));
    }

    #[test]
    fn evidence_back_from_opinion() {
        let e = evidence_from_opinion(&op(&[1.0 / 3.0, 1.0 / 3.0], 1.0 / 3.0)).unwrap();
        assert_abs_diff_eq!(e.values()[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values()[1], 2.0, epsilon = 1e-12);
        let m = opinion_from_evidence(&e);
        for a in m.alphas() {
            assert_abs_diff_eq!(a, 3.0, epsilon = 1e-12);
        }
        let zero = evidence_from_opinion(&DirichletOpinion::vacuous(4)).unwrap();
        assert_eq!(zero.values(), &[0.0; 4]);
    }

    #[test]
    fn zero_uncertainty_is_a_domain_error() {
        assert!(matches!(
            DirichletOpinion::new(vec![1.0, 0.0], 0.0),
            Err(EvidenceError::InvalidUncertainty(_))
        ));
        let forged = DirichletOpinion {
            beliefs: vec![1.0, 0.0],
            uncertainty: 0.0,
        };
        assert!(evidence_from_opinion(&forged).is_err());
    }

    #[test]
    fn opinion_validation() {
        assert!(matches!(
            DirichletOpinion::new(vec![0.5, 0.4], 0.5),
            Err(EvidenceError::NotNormalized(_))
        ));
        assert!(DirichletOpinion::new(vec![-0.1, 0.6], 0.5).is_err());
    }

    #[test]
    fn vacuous_is_neutral_exactly() {
        let m = op(&[0.2, 0.1, 0.4], 0.3);
        let v = DirichletOpinion::vacuous(3);
        assert_eq!(combine_pair(&m, &v).unwrap(), m);
        assert_eq!(combine_pair(&v, &m).unwrap(), m);
    }

    #[test]
    fn disagreeing_pair() {
        let a = op(&[0.5, 0.0], 0.5);
        let b = op(&[0.0, 0.5], 0.5);
        assert_abs_diff_eq!(conflict(&a, &b), 0.25, epsilon = 1e-15);
        let m = combine_pair(&a, &b).unwrap();
        assert_abs_diff_eq!(m.beliefs()[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.beliefs()[1], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.uncertainty(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn agreeing_pair_sharpens() {
        let a = op(&[0.5, 0.0], 0.5);
        let m = combine_pair(&a, &a).unwrap();
        assert_eq!(conflict(&a, &a), 0.0);
        assert_abs_diff_eq!(m.beliefs()[0], 0.75, epsilon = 1e-15);
        assert_eq!(m.beliefs()[1], 0.0);
        assert_abs_diff_eq!(m.uncertainty(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn total_conflict_is_reported() {
        // Two nearly dogmatic opinions on different actions.
        let a = op(&[1.0 - 1e-12, 0.0], 1e-12);
        let b = op(&[0.0, 1.0 - 1e-12], 1e-12);
        assert!(matches!(
            combine_pair(&a, &b),
            Err(EvidenceError::FusionConflict { .. })
        ));
        assert!(matches!(
            combine_all([&DirichletOpinion::vacuous(2), &a, &b]),
            Err(EvidenceError::FusionConflict { .. })
        ));
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let err = combine_pair(&DirichletOpinion::vacuous(2), &DirichletOpinion::vacuous(3));
        assert_eq!(err, Err(EvidenceError::DimensionMismatch { left: 2, right: 3 }));
    }

    #[test]
    fn fold_edge_cases() {
        let m = op(&[0.1, 0.6], 0.3);
        assert_eq!(combine_all([&m]).unwrap(), m);
        let v = DirichletOpinion::vacuous(2);
        assert_opinion_eq(&combine_all([&m, &v, &v]).unwrap(), &m, 1e-9);
        let none: [&DirichletOpinion; 0] = [];
        assert_eq!(combine_all(none), Err(EvidenceError::NoOpinions));
    }

    #[test]
    fn expected_values() {
        let p = expected_action_values(&DirichletOpinion::vacuous(4));
        assert_eq!(p, vec![0.25; 4]);
        let p = expected_action_values(&opinion_from_evidence(&ev(&[4.0, 0.0, 0.0, 0.0])));
        for (x, y) in p.iter().zip([0.625, 0.125, 0.125, 0.125]) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn certainty_dominates_vacuous_side() {
        let confident = op(&[1.0 - 1e-7, 0.0, 0.0], 1e-7);
        let m = combine_pair(&confident, &DirichletOpinion::vacuous(3)).unwrap();
        assert_opinion_eq(&m, &confident, 1e-5);
    }

    fn evidence_strategy() -> impl Strategy<Value = EvidenceVector> {
        (2usize..=8).prop_flat_map(|k| {
            prop::collection::vec(0.0f64..50.0, k).prop_map(|v| EvidenceVector::new(v).unwrap())
        })
    }

    fn evidence_pair() -> impl Strategy<Value = (EvidenceVector, EvidenceVector)> {
        (2usize..=8).prop_flat_map(|k| {
            let one = prop::collection::vec(0.0f64..50.0, k);
            (one.clone(), one).prop_map(|(a, b)| {
                (EvidenceVector::new(a).unwrap(), EvidenceVector::new(b).unwrap())
            })
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(e in evidence_strategy()) {
            let m = opinion_from_evidence(&e);
            let back = evidence_from_opinion(&m).unwrap();
            for (a, b) in e.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            let again = opinion_from_evidence(&back);
            for (a, b) in m.beliefs().iter().zip(again.beliefs()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn combination_commutes_and_normalizes((a, b) in evidence_pair()) {
            let (ma, mb) = (opinion_from_evidence(&a), opinion_from_evidence(&b));
            let ab = combine_pair(&ma, &mb).unwrap();
            let ba = combine_pair(&mb, &ma).unwrap();
            let total = ab.uncertainty() + ab.beliefs().iter().sum::<f64>();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            for (x, y) in ab.beliefs().iter().zip(ba.beliefs()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            prop_assert!((ab.uncertainty() - ba.uncertainty()).abs() <= 1e-9);
        }

        #[test]
        fn argmax_of_mean_matches_beliefs(e in evidence_strategy()) {
            let m = opinion_from_evidence(&e);
            let p = expected_action_values(&m);
            let argmax = |v: &[f64]| {
                v.iter().enumerate().fold(0, |best, (i, x)| if *x > v[best] { i } else { best })
            };
            prop_assert_eq!(argmax(&p), argmax(m.beliefs()));
        }
    }
}

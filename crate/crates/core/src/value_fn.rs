//! Scalar functionals of model output that get attributed across features.

use std::fmt;
use std::sync::Arc;

use crate::error::{ModelError, OsvError, Result};

pub type RawHook = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ValueFunctionSpec {
    /// `p(target) - p(contrast)`.
    ClassProbDiff { target: String, contrast: String },
    ClassProb { target: String },
    /// A user-supplied functional over the whole score vector.
    Raw { name: String, hook: RawHook },
}

impl fmt::Debug for ValueFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ClassProbDiff { target, contrast } => {
                write!(f, "ClassProbDiff({target}, {contrast})")
            }
            Self::ClassProb { target } => write!(f, "ClassProb({target})"),
            Self::Raw { name, .. } => write!(f, "Raw({name})"),
        }
    }
}

impl ValueFunctionSpec {
    pub fn prob_diff(target: impl Into<String>, contrast: impl Into<String>) -> Self {
        Self::ClassProbDiff {
            target: target.into(),
            contrast: contrast.into(),
        }
    }

    pub fn raw(name: impl Into<String>, hook: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::Raw {
            name: name.into(),
            hook: Arc::new(hook),
        }
    }

    /// Default for a model: second class minus first class. Only defined for
    /// two-class models; with more classes the caller has to choose.
    pub fn default_for(labels: &[String]) -> Result<Self> {
        match labels {
            [c0, c1] => Ok(Self::prob_diff(c1.clone(), c0.clone())),
            _ => Err(OsvError::Config(format!(
                "model has {} classes; pick target and contrast explicitly",
                labels.len()
            ))),
        }
    }

    pub fn resolve(&self, labels: &[String]) -> Result<ValueFunction> {
        let find = |name: &str| {
            labels.iter().position(|l| l == name).ok_or_else(|| {
                OsvError::Config(format!("class {name:?} is not one of {labels:?}"))
            })
        };
        let kind = match self {
            Self::ClassProbDiff { target, contrast } => Kind::Diff(find(target)?, find(contrast)?),
            Self::ClassProb { target } => Kind::Prob(find(target)?),
            Self::Raw { hook, .. } => Kind::Raw(hook.clone()),
        };
        Ok(ValueFunction {
            kind,
            classes: labels.len(),
        })
    }
}

#[derive(Clone)]
enum Kind {
    Diff(usize, usize),
    Prob(usize),
    Raw(RawHook),
}

/// A [`ValueFunctionSpec`] bound to a model's class order.
#[derive(Clone)]
pub struct ValueFunction {
    kind: Kind,
    classes: usize,
}

impl fmt::Debug for ValueFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::Diff(a, b) => format!("p[{a}] - p[{b}]"),
            Kind::Prob(a) => format!("p[{a}]"),
            Kind::Raw(_) => "raw".to_owned(),
        };
        f.debug_struct("ValueFunction")
            .field("kind", &kind)
            .field("classes", &self.classes)
            .finish()
    }
}

impl ValueFunction {
    pub fn eval(&self, scores: &[f64]) -> Result<f64, ModelError> {
        if scores.len() != self.classes {
            return Err(ModelError::BadScores(format!(
                "expected {} class scores, got {}",
                self.classes,
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(ModelError::BadScores(format!("non-finite score {bad}")));
        }
        let v = match &self.kind {
            Kind::Diff(a, b) => scores[*a] - scores[*b],
            Kind::Prob(a) => scores[*a],
            Kind::Raw(hook) => hook(scores),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ModelError::BadScores(format!("value functional returned {v}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<String> {
        vec!["neg".into(), "pos".into()]
    }

    #[test]
    fn default_is_second_minus_first() {
        let f = ValueFunctionSpec::default_for(&labels()).unwrap().resolve(&labels()).unwrap();
        assert_eq!(f.eval(&[0.25, 0.75]).unwrap(), 0.5);
    }

    #[test]
    fn unknown_class_rejected() {
        let spec = ValueFunctionSpec::prob_diff("pos", "neutral");
        assert!(matches!(spec.resolve(&labels()), Err(OsvError::Config(_))));
        let three: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        assert!(ValueFunctionSpec::default_for(&three).is_err());
    }

    #[test]
    fn non_finite_scores_rejected() {
        let f = ValueFunctionSpec::ClassProb { target: "pos".into() }
            .resolve(&labels())
            .unwrap();
        assert!(f.eval(&[0.1, f64::NAN]).is_err());
        assert!(f.eval(&[0.1]).is_err());
        // Raw functionals need not be probabilities.
        let raw = ValueFunctionSpec::raw("sum", |s| s.iter().sum())
            .resolve(&labels())
            .unwrap();
        assert_eq!(raw.eval(&[3.0, 4.0]).unwrap(), 7.0);
    }
}

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

type HClosure = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// The integrand `h(x, y)` whose target expectation is estimated.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HFunction {
    /// `h(x, y) = y`.
    Label,
    /// `h(x, y) = value`.
    Constant { value: f64 },
    /// `h(x, y) = (x^{(1)} + y)²`.
    FirstPlusLabelSquared,
    #[serde(skip)]
    Custom(HClosure),
}

impl HFunction {
    pub fn custom<F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        HFunction::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        match self {
            HFunction::Label => y,
            HFunction::Constant { value } => *value,
            HFunction::FirstPlusLabelSquared => (x[0] + y) * (x[0] + y),
            HFunction::Custom(f) => f(x, y),
        }
    }
}

impl fmt::Debug for HFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HFunction::Label => f.write_str("Label"),
            HFunction::Constant { value } => write!(f, "Constant({value})"),
            HFunction::FirstPlusLabelSquared => f.write_str("FirstPlusLabelSquared"),
            HFunction::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

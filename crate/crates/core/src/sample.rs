use crate::error::{Error, Result};
use crate::points::PointSet;

/// Source pairs `(X_i, Y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub covariates: PointSet,
    pub labels: Vec<f64>,
}

impl LabeledSample {
    pub fn new(covariates: PointSet, labels: Vec<f64>) -> Result<Self> {
        if covariates.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} covariates but {} labels",
                covariates.len(),
                labels.len()
            )));
        }
        if covariates.is_empty() {
            return Err(Error::Empty("labelled sample"));
        }
        if !labels.iter().chain(covariates.as_flat()).all(|v| v.is_finite()) {
            return Err(Error::invalid("sample contains non-finite values"));
        }
        Ok(Self { covariates, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }
}

/// Observational sample `(W_i, X_i, Y_i)` for treatment-effect estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct AteSample {
    pub covariates: PointSet,
    pub outcomes: Vec<f64>,
    pub treated: Vec<bool>,
}

impl AteSample {
    pub fn new(covariates: PointSet, outcomes: Vec<f64>, treated: Vec<bool>) -> Result<Self> {
        if covariates.len() != outcomes.len() || outcomes.len() != treated.len() {
            return Err(Error::invalid("covariates, outcomes and treatments differ in length"));
        }
        if !outcomes.iter().chain(covariates.as_flat()).all(|v| v.is_finite()) {
            return Err(Error::invalid("sample contains non-finite values"));
        }
        Ok(Self { covariates, outcomes, treated })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|&&w| w).count()
    }

    /// Indices of the units in arm `w`.
    pub fn arm(&self, w: bool) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.treated[i] == w).collect()
    }
}

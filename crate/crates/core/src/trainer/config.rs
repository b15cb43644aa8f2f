use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::calibration::CalibrationMethod;
use super::ridge::Solver;
use crate::error::{GateError, Result};
use crate::scalar::Scalar;

/// Per-class sample weights, written `w0:w1` (error class first) or `balanced`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ClassWeight {
    Ratio {
        w0: f64,
        w1: f64,
    },
    /// `n / (2 n_c)` computed on whatever data the ridge is fitted to.
    Balanced,
}

impl ClassWeight {
    pub const fn ratio(w0: f64, w1: f64) -> Self {
        ClassWeight::Ratio { w0, w1 }
    }

    /// The default search set: uniform, cost-informed 0.64 ratios in both
    /// directions, 2x ratios in both directions, and balanced.
    pub fn default_set() -> Vec<ClassWeight> {
        vec![
            Self::ratio(1.0, 1.0),
            Self::ratio(0.64, 1.0),
            Self::ratio(1.0, 0.64),
            Self::ratio(0.5, 1.0),
            Self::ratio(1.0, 0.5),
            Self::ratio(2.0, 1.0),
            ClassWeight::Balanced,
        ]
    }

    pub fn sample_weights<T: Scalar>(&self, z: &[bool]) -> Vec<T> {
        let (w0, w1) = match *self {
            ClassWeight::Ratio { w0, w1 } => (T::lit(w0), T::lit(w1)),
            ClassWeight::Balanced => {
                let n1 = z.iter().filter(|&&v| v).count();
                let n0 = z.len() - n1;
                let n = T::from_count(z.len());
                let two = T::lit(2.0);
                let w = |c: usize| {
                    if c == 0 {
                        T::one()
                    } else {
                        n / (two * T::from_count(c))
                    }
                };
                (w(n0), w(n1))
            }
        };
        z.iter().map(|&v| if v { w1 } else { w0 }).collect()
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ClassWeight::Ratio { w0, w1 }
                if !(w0 > 0.0 && w1 > 0.0 && w0.is_finite() && w1.is_finite()) =>
            {
                Err(GateError::InvalidInput(format!(
                    "class weights must be positive, got {w0}:{w1}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ClassWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassWeight::Ratio { w0, w1 } => write!(f, "{w0}:{w1}"),
            ClassWeight::Balanced => f.write_str("balanced"),
        }
    }
}

impl FromStr for ClassWeight {
    type Err = GateError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("balanced") {
            return Ok(ClassWeight::Balanced);
        }
        let bad =
            || GateError::InvalidInput(format!("class weight `{s}` is not `w0:w1` or `balanced`"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let w = ClassWeight::Ratio {
            w0: a.trim().parse().map_err(|_| bad())?,
            w1: b.trim().parse().map_err(|_| bad())?,
        };
        w.validate()?;
        Ok(w)
    }
}

impl TryFrom<String> for ClassWeight {
    type Error = GateError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ClassWeight> for String {
    fn from(w: ClassWeight) -> String {
        w.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub class_weight: ClassWeight,
    pub calibration: CalibrationMethod,
    #[serde(default = "default_solver")]
    pub solver: Solver,
}

fn default_solver() -> Solver {
    Solver::ClosedForm
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            tol: 1e-4,
            max_iter: 1000,
            class_weight: ClassWeight::ratio(1.0, 1.0),
            calibration: CalibrationMethod::Sigmoid,
            solver: Solver::ClosedForm,
        }
    }
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(GateError::InvalidInput(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 || self.max_iter == 0 {
            return Err(GateError::InvalidInput(
                "tol and max_iter must be positive".into(),
            ));
        }
        self.class_weight.validate()
    }
}

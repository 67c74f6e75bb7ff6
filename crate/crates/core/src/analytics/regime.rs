use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The critical preferential fraction separating the two phases.
pub const CRITICAL_R: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WidthFn {
    /// `w(t) = t^(1/2)`, for `r < 1/2`.
    SqrtT,
    /// `w(t) = t^r`, for `r > 1/2`.
    TPowR,
    /// `w(t) = (t ln t)^(1/2)`, at `r = 1/2`.
    SqrtTLogT,
}

/// How fast the transient toward the scaling form dies off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Transient {
    /// As `t^(-z)`.
    Power(f64),
    /// As `1 / ln t`.
    LogSlow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRegime {
    pub r: f64,
    pub alpha: f64,
    pub width_fn: WidthFn,
    pub transient: Transient,
}

impl ScalingRegime {
    /// Classifies `r` against exactly 1/2; there is no tolerance band.
    pub fn for_r(r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::invalid("r", format!("{r} is outside [0, 1]")));
        }
        Ok(if r < CRITICAL_R {
            Self {
                r,
                alpha: 0.5,
                width_fn: WidthFn::SqrtT,
                transient: Transient::Power(0.5),
            }
        } else if r > CRITICAL_R {
            Self {
                r,
                alpha: r,
                width_fn: WidthFn::TPowR,
                transient: Transient::Power(2.0 * r - 1.0),
            }
        } else {
            Self {
                r,
                alpha: 0.5,
                width_fn: WidthFn::SqrtTLogT,
                transient: Transient::LogSlow,
            }
        })
    }

    /// Width `w(t)` used to scale deviations from the mean `t/A`.
    pub fn width(&self, t: f64) -> Result<f64> {
        match self.width_fn {
            WidthFn::SqrtT => Ok(t.sqrt()),
            WidthFn::TPowR => Ok(t.powf(self.r)),
            WidthFn::SqrtTLogT => {
                if t < 2.0 {
                    return Err(Error::invalid("t", "logarithmic width needs t >= 2"));
                }
                Ok((t * t.ln()).sqrt())
            }
        }
    }
}

//! Scalar activations with derivatives, saturation metadata and point
//! reflection.
//!
//! A saturating activation has a finite limit on at least one side. The point
//! reflection `σ'(x) = -σ(-x)` keeps monotonicity and swaps the saturation
//! side, which is what lets sign-constrained and switch layers build
//! non-convex monotone functions out of convex activations such as ReLU.
//!
//! Exponential forms clamp their argument to `[-700, 700]` before calling
//! `exp`, so evaluation never overflows in 64-bit arithmetic.
//!
//! At kinks the derivative is the right-derivative (`relu'(0) = 1`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Clamp applied to arguments of `exp`.
pub const EXP_CLAMP: f64 = 700.0;

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationKind {
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "leaky_relu")]
    LeakyRelu,
    /// PReLU with a fixed slope; learning the slope is not supported.
    #[serde(rename = "prelu")]
    Prelu,
    #[serde(rename = "relu6")]
    Relu6,
    #[serde(rename = "elu")]
    Elu,
    #[serde(rename = "selu")]
    Selu,
    #[serde(rename = "celu")]
    Celu,
    #[serde(rename = "gelu")]
    Gelu,
    #[serde(rename = "silu")]
    Silu,
    #[serde(rename = "sigmoid")]
    Sigmoid,
    #[serde(rename = "tanh")]
    Tanh,
    #[serde(rename = "exp")]
    Exp,
    #[serde(rename = "softsign")]
    Softsign,
    #[serde(rename = "softplus")]
    Softplus,
    #[serde(rename = "logsigmoid")]
    LogSigmoid,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 15] = [
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Prelu,
        ActivationKind::Relu6,
        ActivationKind::Elu,
        ActivationKind::Selu,
        ActivationKind::Celu,
        ActivationKind::Gelu,
        ActivationKind::Silu,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Exp,
        ActivationKind::Softsign,
        ActivationKind::Softplus,
        ActivationKind::LogSigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Prelu => "prelu",
            ActivationKind::Relu6 => "relu6",
            ActivationKind::Elu => "elu",
            ActivationKind::Selu => "selu",
            ActivationKind::Celu => "celu",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Silu => "silu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Exp => "exp",
            ActivationKind::Softsign => "softsign",
            ActivationKind::Softplus => "softplus",
            ActivationKind::LogSigmoid => "logsigmoid",
        }
    }

    /// Default value of the slope/scale parameter for kinds that take one.
    pub fn default_alpha(self) -> Option<f64> {
        match self {
            ActivationKind::LeakyRelu => Some(0.01),
            ActivationKind::Prelu => Some(0.25),
            ActivationKind::Elu | ActivationKind::Celu => Some(1.0),
            _ => None,
        }
    }

    fn takes_alpha(self) -> bool {
        self.default_alpha().is_some()
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivationKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown activation `{s}`")))
    }
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn is_false(v: &bool) -> bool {
    !*v
}

/// A catalogued activation, optionally point-reflected and affinely rescaled.
///
/// Evaluates `scale * s(x) + offset` where `s` is the base function, or its
/// reflection `-base(-x)` when `reflected` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    #[serde(rename = "name")]
    pub kind: ActivationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub reflected: bool,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

/// Finite limits of an activation at `-∞` (left) and `+∞` (right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturationInfo {
    pub left: Option<f64>,
    pub right: Option<f64>,
}

impl SaturationInfo {
    pub fn saturates_left(&self) -> bool {
        self.left.is_some()
    }

    pub fn saturates_right(&self) -> bool {
        self.right.is_some()
    }
}

impl ActivationSpec {
    pub fn new(kind: ActivationKind) -> Self {
        Self {
            kind,
            alpha: kind.default_alpha(),
            reflected: false,
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn relu() -> Self {
        Self::new(ActivationKind::Relu)
    }

    pub fn sigmoid() -> Self {
        Self::new(ActivationKind::Sigmoid)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    /// The point reflection `x ↦ -σ(-x)`.
    pub fn reflect(self) -> Self {
        // -(a s(-x) + b) = a (-s(-x)) - b
        Self {
            reflected: !self.reflected,
            offset: 0.0 - self.offset,
            ..self
        }
    }

    /// Parses `name`, `name'` (reflected) or `name(alpha)` / `name(alpha)'`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (body, reflected) = match text.strip_suffix('\'') {
            Some(b) => (b, true),
            None => (text, false),
        };
        let (name, alpha) = match body.split_once('(') {
            Some((n, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Config(format!("malformed activation `{text}`")))?;
                let a: f64 = inner
                    .parse()
                    .map_err(|_| Error::Config(format!("bad activation parameter in `{text}`")))?;
                (n, Some(a))
            }
            None => (body, None),
        };
        let mut spec = Self::new(name.parse()?);
        if let Some(a) = alpha {
            spec.alpha = Some(a);
        }
        spec.reflected = reflected;
        spec.validate()?;
        Ok(spec)
    }

    fn alpha_value(&self) -> f64 {
        self.alpha
            .or(self.kind.default_alpha())
            .unwrap_or(0.0)
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_some() && !self.kind.takes_alpha() {
            return Err(Error::Config(format!("activation `{}` takes no parameter", self.kind)));
        }
        let alpha = self.alpha_value();
        if !alpha.is_finite() {
            return Err(Error::Config("activation parameter must be finite".into()));
        }
        if self.kind == ActivationKind::Celu && alpha <= 0.0 {
            return Err(Error::Constraint(format!("celu requires alpha > 0, got {alpha}")));
        }
        if !(self.scale.is_finite() && self.offset.is_finite()) || self.scale < 0.0 {
            return Err(Error::Constraint(format!(
                "activation rescale needs finite scale >= 0, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        let mut s = self.kind.name().to_string();
        if self.kind.takes_alpha() && self.alpha != self.kind.default_alpha() {
            s = format!("{s}({})", self.alpha_value());
        }
        if self.reflected {
            s.push('\'');
        }
        if self.scale != 1.0 || self.offset != 0.0 {
            s = format!("{}*{}{:+}", self.scale, s, self.offset);
        }
        s
    }

    /// `σ(x)`.
    pub fn eval<T: Scalar>(&self, x: T) -> T {
        let base = if self.reflected {
            -self.base_eval(-x)
        } else {
            self.base_eval(x)
        };
        if self.scale == 1.0 && self.offset == 0.0 {
            base
        } else {
            T::lit(self.scale) * base + T::lit(self.offset)
        }
    }

    /// `dσ/dx`, right-derivative at kinks of the unreflected function.
    pub fn derivative<T: Scalar>(&self, x: T) -> T {
        let d = if self.reflected {
            self.base_derivative(-x)
        } else {
            self.base_derivative(x)
        };
        if self.scale == 1.0 {
            d
        } else {
            T::lit(self.scale) * d
        }
    }

    /// Locations where the derivative jumps. Gradient checks stay clear of
    /// these.
    pub fn kinks(&self) -> Vec<f64> {
        let base: Vec<f64> = match self.kind {
            ActivationKind::Relu
            | ActivationKind::LeakyRelu
            | ActivationKind::Prelu
            | ActivationKind::Elu
            | ActivationKind::Selu => vec![0.0],
            ActivationKind::Relu6 => vec![0.0, 6.0],
            _ => vec![],
        };
        if self.reflected {
            base.into_iter().map(|k| -k).collect()
        } else {
            base
        }
    }

    /// Distance from `x` to the nearest kink (infinite for smooth kinds).
    pub fn kink_distance(&self, x: f64) -> f64 {
        self.kinks()
            .into_iter()
            .map(|k| (x - k).abs())
            .fold(f64::INFINITY, f64::min)
    }

    fn base_eval<T: Scalar>(&self, x: T) -> T {
        let zero = T::zero();
        let one = T::one();
        let alpha = T::lit(self.alpha_value());
        match self.kind {
            ActivationKind::Relu => x.max(zero),
            ActivationKind::LeakyRelu | ActivationKind::Prelu => {
                if x >= zero {
                    x
                } else {
                    alpha * x
                }
            }
            ActivationKind::Relu6 => x.max(zero).min(T::lit(6.0)),
            ActivationKind::Elu => {
                if x >= zero {
                    x
                } else {
                    alpha * (clamped_exp(x) - one)
                }
            }
            ActivationKind::Selu => {
                let l = T::lit(SELU_LAMBDA);
                if x >= zero {
                    l * x
                } else {
                    l * T::lit(SELU_ALPHA) * (clamped_exp(x) - one)
                }
            }
            ActivationKind::Celu => {
                if x >= zero {
                    x
                } else {
                    alpha * (clamped_exp(x / alpha) - one)
                }
            }
            ActivationKind::Gelu => {
                let xf = x.as_f64();
                T::lit(xf * normal_cdf(xf))
            }
            ActivationKind::Silu => x * sigmoid(x),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Exp => clamped_exp(x),
            ActivationKind::Softsign => x / (x.abs() + one),
            ActivationKind::Softplus => softplus(x),
            ActivationKind::LogSigmoid => -softplus(-x),
        }
    }

    fn base_derivative<T: Scalar>(&self, x: T) -> T {
        let zero = T::zero();
        let one = T::one();
        let alpha = T::lit(self.alpha_value());
        match self.kind {
            ActivationKind::Relu => {
                if x >= zero {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::LeakyRelu | ActivationKind::Prelu => {
                if x >= zero {
                    one
                } else {
                    alpha
                }
            }
            ActivationKind::Relu6 => {
                if x >= zero && x < T::lit(6.0) {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::Elu => {
                if x >= zero {
                    one
                } else {
                    alpha * clamped_exp(x)
                }
            }
            ActivationKind::Selu => {
                let l = T::lit(SELU_LAMBDA);
                if x >= zero {
                    l
                } else {
                    l * T::lit(SELU_ALPHA) * clamped_exp(x)
                }
            }
            ActivationKind::Celu => {
                if x >= zero {
                    one
                } else {
                    clamped_exp(x / alpha)
                }
            }
            ActivationKind::Gelu => {
                let xf = x.as_f64();
                T::lit(normal_cdf(xf) + xf * normal_pdf(xf))
            }
            ActivationKind::Silu => {
                let s = sigmoid(x);
                s * (one + x * (one - s))
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (one - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                one - t * t
            }
            ActivationKind::Exp => clamped_exp(x),
            ActivationKind::Softsign => {
                let d = x.abs() + one;
                one / (d * d)
            }
            ActivationKind::Softplus => sigmoid(x),
            ActivationKind::LogSigmoid => sigmoid(-x),
        }
    }

    fn base_saturation(&self) -> (Option<f64>, Option<f64>) {
        let alpha = self.alpha_value();
        match self.kind {
            ActivationKind::Relu => (Some(0.0), None),
            ActivationKind::LeakyRelu | ActivationKind::Prelu => {
                if alpha == 0.0 {
                    (Some(0.0), None)
                } else {
                    (None, None)
                }
            }
            ActivationKind::Relu6 => (Some(0.0), Some(6.0)),
            ActivationKind::Elu | ActivationKind::Celu => (Some(-alpha), None),
            ActivationKind::Selu => (Some(-SELU_LAMBDA * SELU_ALPHA), None),
            ActivationKind::Gelu | ActivationKind::Silu => (Some(0.0), None),
            ActivationKind::Sigmoid => (Some(0.0), Some(1.0)),
            ActivationKind::Tanh | ActivationKind::Softsign => (Some(-1.0), Some(1.0)),
            ActivationKind::Exp | ActivationKind::Softplus => (Some(0.0), None),
            ActivationKind::LogSigmoid => (None, Some(0.0)),
        }
    }

    /// Finite limits at ±∞. Reflection swaps the sides and negates the
    /// limits; rescaling maps each limit through `a·L + b`.
    pub fn saturation(&self) -> SaturationInfo {
        let (l, r) = self.base_saturation();
        let (l, r) = if self.reflected {
            (r.map(|v| -v), l.map(|v| -v))
        } else {
            (l, r)
        };
        if self.scale == 0.0 {
            return SaturationInfo {
                left: Some(self.offset),
                right: Some(self.offset),
            };
        }
        let map = |v: f64| self.scale * v + self.offset;
        SaturationInfo {
            left: l.map(map),
            right: r.map(map),
        }
    }

    /// Monotone non-decreasing over the whole real line.
    pub fn is_monotone(&self) -> bool {
        match self.kind {
            ActivationKind::Gelu | ActivationKind::Silu => false,
            ActivationKind::LeakyRelu
            | ActivationKind::Prelu
            | ActivationKind::Elu
            | ActivationKind::Celu => self.alpha_value() >= 0.0,
            _ => true,
        }
    }

    /// Convex over the whole real line. Reflection turns convex into
    /// concave, so a reflected spec is convex only when it is affine.
    pub fn is_convex(&self) -> bool {
        if self.scale == 0.0 {
            return true;
        }
        let alpha = self.alpha_value();
        let base = match self.kind {
            ActivationKind::Relu | ActivationKind::Exp | ActivationKind::Softplus => true,
            ActivationKind::LeakyRelu | ActivationKind::Prelu => alpha <= 1.0,
            ActivationKind::Elu => (0.0..=1.0).contains(&alpha),
            ActivationKind::Celu => alpha > 0.0,
            _ => false,
        };
        let affine = matches!(
            self.kind,
            ActivationKind::LeakyRelu | ActivationKind::Prelu
        ) && alpha == 1.0;
        if self.reflected {
            affine
        } else {
            base
        }
    }

    /// Monotone and saturating on at least one side.
    pub fn usable_for_switch(&self) -> bool {
        let sat = self.saturation();
        self.is_monotone() && (sat.saturates_left() || sat.saturates_right())
    }

    /// The activation `a·σ(x) + b`.
    pub fn rescale_equivalent(&self, a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Constraint(format!(
                "rescaling factor must be finite and >= 0, got {a}"
            )));
        }
        Ok(Self {
            scale: self.scale * a,
            offset: a * self.offset + b,
            ..*self
        })
    }
}

impl fmt::Display for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[inline]
fn clamped_exp<T: Scalar>(x: T) -> T {
    let c = T::lit(EXP_CLAMP);
    x.max(-c).min(c).exp()
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + clamped_exp(-x))
    } else {
        let e = clamped_exp(x);
        e / (one + e)
    }
}

#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + clamped_exp(-x.abs()).ln_1p()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

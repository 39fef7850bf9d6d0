//! Cross-entropy and the two de-focusing auxiliary losses.
//!
//! Every scalar loss is a function of the probability `p` assigned to the
//! target; gradients are taken with respect to the pre-sigmoid logit `x`,
//! using `dp/dx = p(1 - p)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[P_MIN, 1 - P_MIN]` before any logarithm.
pub const P_MIN: f64 = 1e-7;

#[inline]
pub fn clamp_p(p: f64) -> f64 {
    p.clamp(P_MIN, 1.0 - P_MIN)
}

/// `-ln p`
pub fn ce(p: f64) -> f64 {
    -clamp_p(p).ln()
}

pub fn ce_grad_logit(p: f64) -> f64 {
    clamp_p(p) - 1.0
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::arg("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// `-e^{αp} ln p`
pub fn defocus(p: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let p = clamp_p(p);
    Ok(-(alpha * p).exp() * p.ln())
}

/// `-e^{αp} (αp ln p + 1)(1 - p)`
pub fn defocus_grad_logit(p: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let p = clamp_p(p);
    Ok(-(alpha * p).exp() * (alpha * p * p.ln() + 1.0) * (1.0 - p))
}

/// `ln(1 - p)`
pub fn reverse(p: f64) -> f64 {
    (1.0 - clamp_p(p)).ln()
}

pub fn reverse_grad_logit(p: f64) -> f64 {
    -clamp_p(p)
}

/// `(1 - α)(-ln p) + α ln(1 - p)`
pub fn rce(p: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((1.0 - alpha) * ce(p) + alpha * reverse(p))
}

pub fn rce_grad_logit(p: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((1.0 - alpha) * ce_grad_logit(p) + alpha * reverse_grad_logit(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Defocus,
    Rce,
}

/// A scalar loss and its focus parameter (ignored for CE).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub alpha: f64,
}

impl LossSpec {
    pub const CE: LossSpec = LossSpec {
        kind: LossKind::Ce,
        alpha: 0.0,
    };

    pub fn new(kind: LossKind, alpha: f64) -> Result<Self> {
        let spec = Self { kind, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn defocus(alpha: f64) -> Result<Self> {
        Self::new(LossKind::Defocus, alpha)
    }

    pub fn rce(alpha: f64) -> Result<Self> {
        Self::new(LossKind::Rce, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LossKind::Ce => Ok(()),
            _ => check_alpha(self.alpha),
        }
    }

    pub fn value(&self, p: f64) -> f64 {
        match self.kind {
            LossKind::Ce => ce(p),
            LossKind::Defocus => -(self.alpha * clamp_p(p)).exp() * clamp_p(p).ln(),
            LossKind::Rce => (1.0 - self.alpha) * ce(p) + self.alpha * reverse(p),
        }
    }

    pub fn grad_logit(&self, p: f64) -> f64 {
        let a = self.alpha;
        match self.kind {
            LossKind::Ce => ce_grad_logit(p),
            LossKind::Defocus => {
                let p = clamp_p(p);
                -(a * p).exp() * (a * p * p.ln() + 1.0) * (1.0 - p)
            }
            LossKind::Rce => (1.0 - a) * ce_grad_logit(p) + a * reverse_grad_logit(p),
        }
    }
}

impl std::fmt::Display for LossSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            LossKind::Ce => write!(f, "ce"),
            LossKind::Defocus => write!(f, "defocus(alpha={})", self.alpha),
            LossKind::Rce => write!(f, "rce(alpha={})", self.alpha),
        }
    }
}

fn check_lengths(p: &[f64], y: &[f64]) -> Result<()> {
    if p.len() != y.len() || p.is_empty() {
        return Err(Error::shape(
            format!("{} soft labels", p.len()),
            format!("{}", y.len()),
        ));
    }
    Ok(())
}

/// Mean over classes of `y_c L(p_c) + (1 - y_c) L(1 - p_c)`.
pub fn multiclass_loss(p: &[f64], y: &[f64], spec: &LossSpec) -> Result<f64> {
    check_lengths(p, y)?;
    spec.validate()?;
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&pc, &yc)| yc * spec.value(pc) + (1.0 - yc) * spec.value(1.0 - pc))
        .sum();
    Ok(total / p.len() as f64)
}

/// [`multiclass_loss`] and its gradient with respect to each class logit.
///
/// The non-target term sees probability `q = 1 - p`, whose logit is `-x`,
/// so it contributes `-(1 - y) L'(q)`.
pub fn multiclass_loss_grad(p: &[f64], y: &[f64], spec: &LossSpec) -> Result<(f64, Vec<f64>)> {
    let loss = multiclass_loss(p, y, spec)?;
    let n = p.len() as f64;
    let grad = p
        .iter()
        .zip(y)
        .map(|(&pc, &yc)| (yc * spec.grad_logit(pc) - (1.0 - yc) * spec.grad_logit(1.0 - pc)) / n)
        .collect();
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub p: f64,
    pub loss: f64,
    pub dloss_dlogit: f64,
}

/// The evenly spaced grid `0.01, 0.02, …, 0.99`.
pub fn percent_grid() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

pub fn loss_curve(spec: &LossSpec, grid: &[f64]) -> Result<Vec<LossPoint>> {
    spec.validate()?;
    grid.iter()
        .map(|&p| {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::arg("grid", format!("{p} is outside (0, 1)")));
            }
            Ok(LossPoint {
                p,
                loss: spec.value(p),
                dloss_dlogit: spec.grad_logit(p),
            })
        })
        .collect()
}

/// Formats `v` rounded to 9 significant digits, in shortest form.
pub fn sig9(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    format!("{rounded}")
}

pub fn write_loss_curve_csv(points: &[LossPoint], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "p,loss,dloss_dlogit")?;
    for pt in points {
        writeln!(w, "{},{},{}", sig9(pt.p), sig9(pt.loss), sig9(pt.dloss_dlogit))?;
    }
    Ok(())
}

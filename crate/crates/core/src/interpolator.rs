//! Explicit construction of a non-negative-weight network with three hidden
//! layers that interpolates a finite monotone point set.
//!
//! Points are sorted by target. For every strictly ordered pair `(i, j)`
//! (`yᵢ < yⱼ`) the first layer holds a sharp unit on a half-space with
//! non-negative normal separating `xᵢ` from `xⱼ`. The second layer
//! intersects those half-spaces per point, the third turns the result into
//! level-set indicators and the output layer telescopes the target
//! differences. Saturation limits of each hidden activation are folded into
//! the following layer's bias so every hidden unit reads as `≈ 0` or `≈ γ`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::diff::{Matrix, Vector};
use crate::error::{Error, Result};
use crate::layer::{Layer, LayerParams, LayerSpec, Sign};
use crate::network::{FeatureAnnotation, Network};

/// Saturation sides required of the three hidden activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternation {
    /// Left, right, left saturating.
    MinusPlusMinus,
    /// Right, left, right saturating.
    PlusMinusPlus,
}

impl Alternation {
    /// Whether each layer's activation must saturate on the left.
    fn left_sides(self) -> [bool; 3] {
        match self {
            Alternation::MinusPlusMinus => [true, false, true],
            Alternation::PlusMinusPlus => [false, true, false],
        }
    }

    fn matches(self, acts: &[ActivationSpec; 3]) -> bool {
        self.left_sides().iter().zip(acts).all(|(&left, a)| {
            let s = a.saturation();
            a.is_monotone() && if left { s.saturates_left() } else { s.saturates_right() }
        })
    }

    /// The alternation an activation triple satisfies, preferring
    /// `MinusPlusMinus` when both do.
    pub fn infer(acts: &[ActivationSpec; 3]) -> Option<Self> {
        [Alternation::MinusPlusMinus, Alternation::PlusMinusPlus]
            .into_iter()
            .find(|a| a.matches(acts))
    }
}

/// Half-space `{x : αᵀ(x − β) > 0}` with `α ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl HalfSpace {
    /// `αᵀ(x − β)`.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(x.iter().zip(&self.beta))
            .fold(0.0, |acc, (a, (xv, bv))| acc + a * (xv - bv))
    }
}

/// A half-space with `xj` strictly inside and `xi` strictly outside.
///
/// `α` is the positive part of `xj − xi` scaled to unit 1-norm and `β` the
/// midpoint, so both points sit at distance `½‖p‖₂²/‖p‖₁` from the plane.
pub fn separating_halfspace(xi: &[f64], xj: &[f64]) -> Result<HalfSpace> {
    if xi.len() != xj.len() {
        return Err(Error::dim("separating_halfspace", xi.len(), xj.len()));
    }
    let p: Vec<f64> = xj.iter().zip(xi).map(|(a, b)| (a - b).max(0.0)).collect();
    let norm1: f64 = p.iter().sum();
    if !(norm1 > 0.0) {
        return Err(Error::Inconsistent {
            i: 0,
            j: 1,
            reason: "the larger target's input is componentwise <= the smaller one's".into(),
        });
    }
    Ok(HalfSpace {
        alpha: p.iter().map(|v| v / norm1).collect(),
        beta: xi.iter().zip(xj).map(|(a, b)| 0.5 * (a + b)).collect(),
    })
}

/// A finite monotone interpolation task.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationProblem {
    pub points: Vec<(Vec<f64>, f64)>,
    pub alternation: Alternation,
    pub activations: [ActivationSpec; 3],
    /// Initial sharpness; `None` picks `10 / (smallest margin)`.
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_doublings: usize,
}

impl InterpolationProblem {
    /// Problem with the alternation inferred from `activations`.
    pub fn new(points: Vec<(Vec<f64>, f64)>, activations: [ActivationSpec; 3]) -> Result<Self> {
        let alternation = Alternation::infer(&activations).ok_or_else(|| {
            Error::Constraint(format!(
                "activations ({}, {}, {}) do not alternate saturation sides",
                activations[0], activations[1], activations[2]
            ))
        })?;
        Ok(Self {
            points,
            alternation,
            activations,
            lambda: None,
            tol: 1e-6,
            max_doublings: 40,
        })
    }

    /// Default triple for an alternation: ReLU and its reflection.
    pub fn with_alternation(points: Vec<(Vec<f64>, f64)>, alternation: Alternation) -> Self {
        let (r, rr) = (ActivationSpec::relu(), ActivationSpec::relu().reflect());
        let activations = match alternation {
            Alternation::MinusPlusMinus => [r, rr, r],
            Alternation::PlusMinusPlus => [rr, r, rr],
        };
        Self {
            points,
            alternation,
            activations,
            lambda: None,
            tol: 1e-6,
            max_doublings: 40,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.points.first().map(|p| p.0.len()).unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Data("interpolation needs at least one point".into()));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::Data("points must have at least one coordinate".into()));
        }
        for (k, (x, y)) in self.points.iter().enumerate() {
            if x.len() != d {
                return Err(Error::dim("interpolation point", d, x.len()));
            }
            if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("point {k} is not finite")));
            }
        }
        if !self.alternation.matches(&self.activations) {
            return Err(Error::Constraint(format!(
                "activations ({}, {}, {}) do not match alternation {:?}",
                self.activations[0], self.activations[1], self.activations[2], self.alternation
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Result of [`build_with_report`].
#[derive(Debug, Clone)]
pub struct Interpolant {
    pub network: Network<f64>,
    pub lambda: f64,
    /// `g(xᵢ) − yᵢ` in the caller's point order.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Sorted points with the separating pairs precomputed.
struct Prepared {
    ys: Vec<f64>,
    /// `(i, j, halfspace)` over sorted indices with `ys[i] < ys[j]`.
    pairs: Vec<(usize, usize, HalfSpace)>,
    min_margin: f64,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

fn prepare(problem: &InterpolationProblem) -> Result<Prepared> {
    problem.validate()?;
    let pts = &problem.points;
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[a].1.total_cmp(&pts[b].1).then_with(|| lex_cmp(&pts[a].0, &pts[b].0)));
    let xs: Vec<Vec<f64>> = order.iter().map(|&k| pts[k].0.clone()).collect();
    let ys: Vec<f64> = order.iter().map(|&k| pts[k].1).collect();
    let n = xs.len();
    for i in 0..n {
        for j in i + 1..n {
            if ys[i] != ys[j] && xs[i] == xs[j] {
                return Err(Error::Inconsistent {
                    i: order[i],
                    j: order[j],
                    reason: "same input with different targets".into(),
                });
            }
        }
    }
    let mut pairs = Vec::new();
    let mut min_margin = f64::INFINITY;
    for j in 0..n {
        for i in 0..j {
            if ys[i] < ys[j] {
                let hs = separating_halfspace(&xs[i], &xs[j]).map_err(|_| Error::Inconsistent {
                    i: order[i],
                    j: order[j],
                    reason: format!(
                        "target {} < {} but the second input is componentwise <= the first",
                        ys[i], ys[j]
                    ),
                })?;
                min_margin = min_margin.min(hs.signed_distance(&xs[j]));
                pairs.push((i, j, hs));
            }
        }
    }
    Ok(Prepared {
        ys,
        pairs,
        min_margin,
    })
}

/// Solves `σ(b) = target` for a monotone `σ` by bracketing and bisection.
fn solve_bias(act: &ActivationSpec, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let mut grown = 0;
    while act.eval(lo) >= target || act.eval(hi) <= target {
        if act.eval(lo) >= target {
            lo *= 2.0;
        }
        if act.eval(hi) <= target {
            hi *= 2.0;
        }
        grown += 1;
        if grown > 1100 {
            return Err(Error::Numeric(format!(
                "activation `{act}` never reaches {target}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if act.eval(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Saturation value the layer is centered on, and the sign `γ` must take.
fn centering(act: &ActivationSpec, left: bool) -> (f64, f64) {
    let s = act.saturation();
    if left {
        (s.left.expect("validated"), 1.0)
    } else {
        (s.right.expect("validated"), -1.0)
    }
}

/// Bias `b` and realized `γ = σ(b) − L` for a unit that should output `γ`
/// when its weighted input is zero.
fn gamma_bias(act: &ActivationSpec, left: bool) -> Result<(f64, f64)> {
    let (limit, sign) = centering(act, left);
    let s = act.saturation();
    let other = if left { s.right } else { s.left };
    let magnitude = match other {
        Some(v) => 0.5 * (v - limit).abs(),
        None => 1.0,
    };
    if !(magnitude > 0.0) {
        return Err(Error::Constraint(format!("activation `{act}` is constant")));
    }
    let b = solve_bias(act, limit + sign * magnitude)?;
    let gamma = act.eval(b) - limit;
    if gamma == 0.0 || gamma.signum() != sign {
        return Err(Error::Numeric(format!("could not place bias for `{act}`")));
    }
    Ok((b, gamma))
}

fn assemble(problem: &InterpolationProblem, prep: &Prepared, lambda: f64) -> Result<Network<f64>> {
    let d = problem.dim();
    let n = prep.ys.len();
    let [a1, a2, a3] = problem.activations;
    let sides = problem.alternation.left_sides();
    let mpm = problem.alternation == Alternation::MinusPlusMinus;

    // Layer 1: one sharp unit per separated pair, or a single inert unit.
    let p = prep.pairs.len().max(1);
    let mut w1 = Matrix::zeros(p, d);
    let mut b1 = Vector::zeros(p);
    for (u, (_, _, hs)) in prep.pairs.iter().enumerate() {
        let mut dot = 0.0;
        for c in 0..d {
            w1.set(u, c, lambda * hs.alpha[c]);
            dot += hs.alpha[c] * hs.beta[c];
        }
        b1[u] = -lambda * dot;
    }
    let (l1, _) = centering(&a1, sides[0]);

    // Layer 2: unit i sums the pair units that mention point i.
    let (b2_base, _) = gamma_bias(&a2, sides[1])?;
    let mut w2 = Matrix::zeros(n, p);
    let mut b2 = Vector::from(vec![b2_base; n]);
    for (u, &(i, j, _)) in prep.pairs.iter().enumerate() {
        let owner = if mpm { i } else { j };
        w2.set(owner, u, lambda);
        b2[owner] -= lambda * l1;
    }
    let (l2, _) = centering(&a2, sides[1]);

    // Layer 3: unit i sums layer-2 units of points with smaller (mpm) or
    // larger (pmp) targets.
    let (b3_base, gamma3) = gamma_bias(&a3, sides[2])?;
    let mut w3 = Matrix::zeros(n, n);
    let mut b3 = Vector::from(vec![b3_base; n]);
    for i in 0..n {
        for j in 0..n {
            let include = if mpm { prep.ys[j] < prep.ys[i] } else { prep.ys[j] > prep.ys[i] };
            if include {
                w3.set(i, j, lambda);
                b3[i] -= lambda * l2;
            }
        }
    }
    let (l3, _) = centering(&a3, sides[2]);

    // Output: telescoping target differences.
    let mut w4 = Matrix::zeros(1, n);
    let bias = if mpm { prep.ys[0] } else { prep.ys[n - 1] };
    for i in 0..n {
        let diff = if mpm {
            if i == 0 {
                0.0
            } else {
                prep.ys[i] - prep.ys[i - 1]
            }
        } else if i + 1 == n {
            0.0
        } else {
            prep.ys[i] - prep.ys[i + 1]
        };
        w4.set(0, i, diff / gamma3);
    }
    let row_sum: f64 = w4.row(0).iter().sum();
    let b4 = Vector::from(vec![bias - row_sum * l3]);

    let layer = |spec: LayerSpec, w: Matrix<f64>, b: Vector<f64>| -> Result<Layer<f64>> {
        Layer::new(spec, LayerParams::new(w, b)?)
    };
    let nn = Sign::NonNegative;
    let layers = vec![
        layer(LayerSpec::constrained(d, p, nn, Some(a1)), w1, b1)?,
        layer(LayerSpec::constrained(p, n, nn, Some(a2)), w2, b2)?,
        layer(LayerSpec::constrained(n, n, nn, Some(a3)), w3, b3)?,
        layer(LayerSpec::constrained(n, 1, nn, None), w4, b4)?,
    ];
    Network::new(FeatureAnnotation::all_increasing(d), vec![], layers)
}

fn residuals(net: &Network<f64>, problem: &InterpolationProblem) -> Result<(Vec<f64>, f64)> {
    let mut res = Vec::with_capacity(problem.points.len());
    let mut worst = 0.0_f64;
    for (x, y) in &problem.points {
        let r = net.forward_scalar(x)? - y;
        worst = if r.is_finite() { worst.max(r.abs()) } else { f64::INFINITY };
        res.push(r);
    }
    Ok((res, worst))
}

/// Initial sharpness used by [`build`] when the problem does not set one.
fn initial_lambda(problem: &InterpolationProblem, prep: &Prepared) -> f64 {
    problem.lambda.unwrap_or_else(|| {
        if prep.min_margin.is_finite() {
            10.0 / prep.min_margin
        } else {
            10.0
        }
    })
}

/// Builds the interpolating network at a fixed sharpness.
pub fn build_at_lambda(problem: &InterpolationProblem, lambda: f64) -> Result<Interpolant> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("sharpness must be finite and > 0, got {lambda}")));
    }
    let prep = prepare(problem)?;
    let network = assemble(problem, &prep, lambda)?;
    let (residuals, max_residual) = residuals(&network, problem)?;
    Ok(Interpolant {
        network,
        lambda,
        residuals,
        max_residual,
    })
}

/// Maximum residual after each doubling of the sharpness, starting from the
/// initial value.
pub fn residual_schedule(problem: &InterpolationProblem, steps: usize) -> Result<Vec<(f64, f64)>> {
    let prep = prepare(problem)?;
    let mut lambda = initial_lambda(problem, &prep);
    let mut out = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        let net = assemble(problem, &prep, lambda)?;
        out.push((lambda, residuals(&net, problem)?.1));
        lambda *= 2.0;
    }
    Ok(out)
}

/// Builds an interpolant, doubling the sharpness until the residual
/// reaches `problem.tol`.
pub fn build_with_report(problem: &InterpolationProblem) -> Result<Interpolant> {
    let prep = prepare(problem)?;
    let mut lambda = initial_lambda(problem, &prep);
    let mut best = f64::INFINITY;
    for step in 0..=problem.max_doublings {
        let network = assemble(problem, &prep, lambda)?;
        let (res, worst) = residuals(&network, problem)?;
        if worst <= problem.tol {
            return Ok(Interpolant {
                network,
                lambda,
                residuals: res,
                max_residual: worst,
            });
        }
        best = best.min(worst);
        if step < problem.max_doublings {
            lambda *= 2.0;
        }
    }
    Err(Error::Convergence {
        residual: best,
        lambda,
        tol: problem.tol,
    })
}

/// Network interpolating the problem's points within `tol`.
pub fn build(problem: &InterpolationProblem) -> Result<Network<f64>> {
    Ok(build_with_report(problem)?.network)
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn relu_reflected(x: f64) -> f64 {
    x.min(0.0)
}

/// `ReLU(ReLU'(αx − ½) + 1)`, a ramp from 0 to 1 of width `1/α` centred at 0.
///
/// The mirrored form `ReLU'(ReLU(αx + ½) − 1)` traces the same ramp shifted
/// down by one; the two are checked against each other on every call.
pub fn heaviside_compose(alpha: f64, x: f64) -> f64 {
    let (first, second) = heaviside_forms(alpha, x);
    assert!(
        (first - (second + 1.0)).abs() <= 1e-12,
        "heaviside forms disagree at x={x}: {first} vs {second} + 1"
    );
    first
}

/// Both compositions, unshifted: `(ReLU(ReLU'(αx − ½) + 1), ReLU'(ReLU(αx + ½) − 1))`.
pub fn heaviside_forms(alpha: f64, x: f64) -> (f64, f64) {
    let t = alpha * x;
    (
        relu(relu_reflected(t - 0.5) + 1.0),
        relu_reflected(relu(t + 0.5) - 1.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfspace_examples() {
        let h = separating_halfspace(&[0.0], &[1.0]).unwrap();
        assert_eq!(h.alpha, vec![1.0]);
        assert_eq!(h.beta, vec![0.5]);
        assert_eq!(h.signed_distance(&[1.0]), 0.5);
        assert_eq!(h.signed_distance(&[0.0]), -0.5);

        let h = separating_halfspace(&[0.0, 0.0], &[1.0, -1.0]).unwrap();
        assert_eq!(h.alpha, vec![1.0, 0.0]);
        assert_eq!(h.beta, vec![0.5, -0.5]);
        assert_eq!(h.signed_distance(&[1.0, -1.0]), 0.5);

        assert!(matches!(
            separating_halfspace(&[1.0], &[0.0]),
            Err(Error::Inconsistent { .. })
        ));
    }

    #[test]
    fn anti_monotone_points_are_rejected() {
        let p = InterpolationProblem::with_alternation(
            vec![(vec![1.0], 0.0), (vec![0.0], 1.0)],
            Alternation::MinusPlusMinus,
        );
        assert!(matches!(build(&p), Err(Error::Inconsistent { i: 0, j: 1, .. })));
        let dup = InterpolationProblem::with_alternation(
            vec![(vec![1.0], 0.0), (vec![1.0], 1.0)],
            Alternation::PlusMinusPlus,
        );
        assert!(matches!(build(&dup), Err(Error::Inconsistent { .. })));
    }

    #[test]
    fn three_points_relu_reflected_triple() {
        let r = ActivationSpec::relu();
        let pts = vec![(vec![0.0], 0.0), (vec![1.0], 1.0), (vec![2.0], 4.0)];
        let p = InterpolationProblem::new(pts.clone(), [r.reflect(), r, r.reflect()]).unwrap();
        assert_eq!(p.alternation, Alternation::PlusMinusPlus);
        let net = build(&p).unwrap();
        for (x, y) in &pts {
            assert!((net.forward_scalar(x).unwrap() - y).abs() < 1e-6);
        }
        assert_eq!(net.layers()[0].spec.out_dim, 3);
        assert_eq!(net.layers()[1].spec.out_dim, 3);
    }

    #[test]
    fn single_point_and_ties() {
        for alt in [Alternation::MinusPlusMinus, Alternation::PlusMinusPlus] {
            let p = InterpolationProblem::with_alternation(vec![(vec![0.3, -2.0], 3.7)], alt);
            let net = build(&p).unwrap();
            assert!((net.forward_scalar(&[0.3, -2.0]).unwrap() - 3.7).abs() < 1e-12);

            let ties = vec![(vec![0.0], 1.0), (vec![5.0], 1.0), (vec![-3.0], 1.0), (vec![6.0], 2.0)];
            let net = build(&InterpolationProblem::with_alternation(ties.clone(), alt)).unwrap();
            for (x, y) in &ties {
                assert!((net.forward_scalar(x).unwrap() - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sigmoid_triple_converges() {
        let s = ActivationSpec::sigmoid();
        let pts = vec![(vec![0.0, 0.0], -1.0), (vec![1.0, 0.5], 0.5), (vec![2.0, 0.0], 2.0)];
        let mut p = InterpolationProblem::new(pts.clone(), [s, s, s]).unwrap();
        p.tol = 1e-4;
        let rep = build_with_report(&p).unwrap();
        assert!(rep.max_residual <= 1e-4);
    }

    #[test]
    fn mismatched_triple_is_rejected() {
        let r = ActivationSpec::relu();
        assert!(InterpolationProblem::new(vec![(vec![0.0], 0.0)], [r, r, r]).is_err());
    }

    #[test]
    fn heaviside_examples() {
        assert_eq!(heaviside_compose(1000.0, 0.01), 1.0);
        assert_eq!(heaviside_compose(1000.0, -0.01), 0.0);
        assert_eq!(heaviside_compose(1000.0, 0.0), 0.5);
    }
}

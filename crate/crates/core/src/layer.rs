//! The four layer forms and their backward passes.
//!
//! * `constrained_affine`: `σ(s·g(W)x + b)` with `g` = `|·|` or `(·)²` and
//!   `s = ±1`. Stored weights stay unconstrained; the sign constraint lives in
//!   the forward map.
//! * `free_affine`: plain `σ(Wx + b)` (or `Wx + b` without activation).
//! * `switch_pre`: `σ(W⁺x + b) − σ(W⁻x + b)` with a shared bias.
//! * `switch_post`: `W⁺σ(x) + W⁻σ(−x) + b`.
//!
//! `W⁺ = max(W, 0)` and `W⁻ = min(W, 0)`. A weight that is exactly zero routes
//! its gradient through the `W⁺` branch.
//!
//! A layer may reserve its trailing `free_inputs` columns for unconstrained
//! inputs (the output of a free subnetwork). Those columns always act as a
//! plain affine term, added inside the activation for `constrained_affine`
//! and `switch_pre` and outside it for `switch_post`.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::diff::{GradPair, Matrix, Vector};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    ConstrainedAffine,
    FreeAffine,
    SwitchPre,
    SwitchPost,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::ConstrainedAffine => "constrained_affine",
            LayerKind::FreeAffine => "free_affine",
            LayerKind::SwitchPre => "switch_pre",
            LayerKind::SwitchPost => "switch_post",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    #[default]
    NonNegative,
    NonPositive,
}

impl Sign {
    pub fn flipped(self) -> Self {
        match self {
            Sign::NonNegative => Sign::NonPositive,
            Sign::NonPositive => Sign::NonNegative,
        }
    }

    fn factor<T: Scalar>(self) -> T {
        match self {
            Sign::NonNegative => T::one(),
            Sign::NonPositive => -T::one(),
        }
    }
}

/// Map from raw storage to a non-negative magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reparam {
    #[default]
    Abs,
    Square,
}

impl Reparam {
    #[inline]
    pub fn apply<T: Scalar>(self, w: T) -> T {
        match self {
            Reparam::Abs => w.abs(),
            Reparam::Square => w * w,
        }
    }

    /// Derivative of the map; `|w|` uses `+1` at zero.
    #[inline]
    pub fn derivative<T: Scalar>(self, w: T) -> T {
        match self {
            Reparam::Abs => {
                if w >= T::zero() {
                    T::one()
                } else {
                    -T::one()
                }
            }
            Reparam::Square => T::lit(2.0) * w,
        }
    }
}

/// Structural description of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Used by `constrained_affine` only.
    pub sign: Sign,
    /// Used by `constrained_affine` only.
    pub reparam: Reparam,
    pub activation: Option<ActivationSpec>,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Trailing input columns that carry unconstrained weights.
    pub free_inputs: usize,
}

impl LayerSpec {
    pub fn constrained(
        in_dim: usize,
        out_dim: usize,
        sign: Sign,
        activation: Option<ActivationSpec>,
    ) -> Self {
        Self {
            kind: LayerKind::ConstrainedAffine,
            sign,
            reparam: Reparam::Abs,
            activation,
            in_dim,
            out_dim,
            free_inputs: 0,
        }
    }

    pub fn free(in_dim: usize, out_dim: usize, activation: Option<ActivationSpec>) -> Self {
        Self {
            kind: LayerKind::FreeAffine,
            sign: Sign::NonNegative,
            reparam: Reparam::Abs,
            activation,
            in_dim,
            out_dim,
            free_inputs: 0,
        }
    }

    pub fn switch_pre(in_dim: usize, out_dim: usize, activation: ActivationSpec) -> Self {
        Self {
            kind: LayerKind::SwitchPre,
            ..Self::free(in_dim, out_dim, Some(activation))
        }
    }

    pub fn switch_post(in_dim: usize, out_dim: usize, activation: ActivationSpec) -> Self {
        Self {
            kind: LayerKind::SwitchPost,
            ..Self::free(in_dim, out_dim, Some(activation))
        }
    }

    pub fn with_reparam(mut self, reparam: Reparam) -> Self {
        self.reparam = reparam;
        self
    }

    pub fn with_free_inputs(mut self, n: usize) -> Self {
        self.free_inputs = n;
        self
    }

    /// Number of leading input columns subject to the layer's constraint.
    #[inline]
    pub fn constrained_inputs(&self) -> usize {
        self.in_dim - self.free_inputs
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Config("layer dimensions must be > 0".into()));
        }
        if self.free_inputs > self.in_dim {
            return Err(Error::Config(format!(
                "free_inputs {} exceeds in_dim {}",
                self.free_inputs, self.in_dim
            )));
        }
        if let Some(act) = &self.activation {
            act.validate()?;
        }
        match self.kind {
            LayerKind::SwitchPre | LayerKind::SwitchPost => {
                let act = self.activation.ok_or_else(|| {
                    Error::Config(format!("{} layer needs an activation", self.kind.as_str()))
                })?;
                if !act.usable_for_switch() {
                    return Err(Error::Constraint(format!(
                        "activation `{act}` is not usable in a switch layer (needs monotone and saturating)"
                    )));
                }
            }
            LayerKind::ConstrainedAffine => {
                if let Some(act) = self.activation {
                    if !act.is_monotone() {
                        return Err(Error::Constraint(format!(
                            "constrained layer needs a monotone activation, got `{act}`"
                        )));
                    }
                }
            }
            LayerKind::FreeAffine => {}
        }
        Ok(())
    }
}

/// Raw weight matrix (`out_dim × in_dim`) and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub w: Matrix<T>,
    pub b: Vector<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            w: Matrix::zeros(out_dim, in_dim),
            b: Vector::zeros(out_dim),
        }
    }

    pub fn new(w: Matrix<T>, b: Vector<T>) -> Result<Self> {
        check_dim("bias length", w.rows(), b.len())?;
        Ok(Self { w, b })
    }
}

/// Elementwise positive and negative parts; `W⁺ + W⁻ = W` exactly.
pub fn split_signs<T: Scalar>(w: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    (w.map(|v| v.max(T::zero())), w.map(|v| v.min(T::zero())))
}

/// Intermediate values a backward pass needs.
#[derive(Debug, Clone)]
pub(crate) enum Cache<T> {
    /// Pre-activation of an affine form.
    Affine { z: Vec<T> },
    SwitchPre { zp: Vec<T>, zm: Vec<T> },
    /// `σ(x)` and `σ(−x)` on the constrained columns.
    SwitchPost { sp: Vec<T>, sm: Vec<T> },
}

#[inline]
fn act_eval<T: Scalar>(act: &Option<ActivationSpec>, z: T) -> T {
    match act {
        Some(a) => a.eval(z),
        None => z,
    }
}

#[inline]
fn act_deriv<T: Scalar>(act: &Option<ActivationSpec>, z: T) -> T {
    match act {
        Some(a) => a.derivative(z),
        None => T::one(),
    }
}

fn check_shapes<T: Scalar>(spec: &LayerSpec, params: &LayerParams<T>, x: &[T]) -> Result<()> {
    check_dim("layer weight rows", spec.out_dim, params.w.rows())?;
    check_dim("layer weight cols", spec.in_dim, params.w.cols())?;
    check_dim("layer bias", spec.out_dim, params.b.len())?;
    check_dim("layer input", spec.in_dim, x.len())
}

/// Forward pass of any layer form. Shapes must already be validated.
pub(crate) fn forward_raw<T: Scalar>(
    spec: &LayerSpec,
    params: &LayerParams<T>,
    x: &[T],
) -> (Vec<T>, Cache<T>) {
    let w = &params.w;
    let b = &params.b;
    let nc = spec.constrained_inputs();
    let zero = T::zero();
    match spec.kind {
        LayerKind::ConstrainedAffine | LayerKind::FreeAffine => {
            let constrained = spec.kind == LayerKind::ConstrainedAffine;
            let s: T = spec.sign.factor();
            let mut z = Vec::with_capacity(spec.out_dim);
            for r in 0..spec.out_dim {
                let row = w.row(r);
                let mut acc = zero;
                for c in 0..spec.in_dim {
                    let wv = if constrained && c < nc {
                        s * spec.reparam.apply(row[c])
                    } else {
                        row[c]
                    };
                    acc = acc + wv * x[c];
                }
                z.push(acc + b[r]);
            }
            let y = z.iter().map(|&v| act_eval(&spec.activation, v)).collect();
            (y, Cache::Affine { z })
        }
        LayerKind::SwitchPre => {
            let act = spec.activation.expect("validated switch layer");
            let mut zp = Vec::with_capacity(spec.out_dim);
            let mut zm = Vec::with_capacity(spec.out_dim);
            for r in 0..spec.out_dim {
                let row = w.row(r);
                let (mut ap, mut am, mut shared) = (zero, zero, b[r]);
                for c in 0..nc {
                    let wv = row[c];
                    if wv >= zero {
                        ap = ap + wv * x[c];
                    } else {
                        am = am + wv * x[c];
                    }
                }
                for c in nc..spec.in_dim {
                    shared = shared + row[c] * x[c];
                }
                zp.push(ap + shared);
                zm.push(am + shared);
            }
            let y = zp
                .iter()
                .zip(&zm)
                .map(|(&p, &m)| act.eval(p) - act.eval(m))
                .collect();
            (y, Cache::SwitchPre { zp, zm })
        }
        LayerKind::SwitchPost => {
            let act = spec.activation.expect("validated switch layer");
            let sp: Vec<T> = x[..nc].iter().map(|&v| act.eval(v)).collect();
            let sm: Vec<T> = x[..nc].iter().map(|&v| act.eval(-v)).collect();
            let mut y = Vec::with_capacity(spec.out_dim);
            for r in 0..spec.out_dim {
                let row = w.row(r);
                let mut acc = zero;
                for c in 0..nc {
                    let wv = row[c];
                    acc = acc + if wv >= zero { wv * sp[c] } else { wv * sm[c] };
                }
                for c in nc..spec.in_dim {
                    acc = acc + row[c] * x[c];
                }
                y.push(acc + b[r]);
            }
            (y, Cache::SwitchPost { sp, sm })
        }
    }
}

/// Backward pass of any layer form given the forward cache.
pub(crate) fn backward_raw<T: Scalar>(
    spec: &LayerSpec,
    params: &LayerParams<T>,
    x: &[T],
    cache: &Cache<T>,
    upstream: &[T],
) -> GradPair<T> {
    let mut g = GradPair::zeros(spec.out_dim, spec.in_dim);
    backward_into(
        spec,
        params,
        x,
        cache,
        upstream,
        g.dw.as_mut_slice(),
        &mut g.db,
        &mut g.dx,
    );
    g
}

/// Adds the parameter gradients into `dw` (row-major) and `db` and the input
/// gradient into `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_into<T: Scalar>(
    spec: &LayerSpec,
    params: &LayerParams<T>,
    x: &[T],
    cache: &Cache<T>,
    upstream: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: &mut [T],
) {
    let w = &params.w;
    let nc = spec.constrained_inputs();
    let n_in = spec.in_dim;
    let zero = T::zero();
    match (spec.kind, cache) {
        (LayerKind::ConstrainedAffine | LayerKind::FreeAffine, Cache::Affine { z }) => {
            let constrained = spec.kind == LayerKind::ConstrainedAffine;
            let s: T = spec.sign.factor();
            for r in 0..spec.out_dim {
                let dz = upstream[r] * act_deriv(&spec.activation, z[r]);
                db[r] = db[r] + dz;
                if dz == zero {
                    continue;
                }
                let row = w.row(r);
                for c in 0..spec.in_dim {
                    let (eff, deff) = if constrained && c < nc {
                        (
                            s * spec.reparam.apply(row[c]),
                            s * spec.reparam.derivative(row[c]),
                        )
                    } else {
                        (row[c], T::one())
                    };
                    dw[r * n_in + c] = dw[r * n_in + c] + dz * x[c] * deff;
                    dx[c] = dx[c] + eff * dz;
                }
            }
        }
        (LayerKind::SwitchPre, Cache::SwitchPre { zp, zm }) => {
            let act = spec.activation.expect("validated switch layer");
            for r in 0..spec.out_dim {
                let gp = upstream[r] * act.derivative(zp[r]);
                let gm = -upstream[r] * act.derivative(zm[r]);
                let shared = gp + gm;
                db[r] = db[r] + shared;
                let row = w.row(r);
                for c in 0..nc {
                    let wv = row[c];
                    let branch = if wv >= zero { gp } else { gm };
                    dw[r * n_in + c] = dw[r * n_in + c] + branch * x[c];
                    dx[c] = dx[c] + wv * branch;
                }
                for c in nc..spec.in_dim {
                    dw[r * n_in + c] = dw[r * n_in + c] + shared * x[c];
                    dx[c] = dx[c] + row[c] * shared;
                }
            }
        }
        (LayerKind::SwitchPost, Cache::SwitchPost { sp, sm }) => {
            let act = spec.activation.expect("validated switch layer");
            let dp: Vec<T> = x[..nc].iter().map(|&v| act.derivative(v)).collect();
            let dm: Vec<T> = x[..nc].iter().map(|&v| act.derivative(-v)).collect();
            for r in 0..spec.out_dim {
                let u = upstream[r];
                db[r] = db[r] + u;
                let row = w.row(r);
                for c in 0..nc {
                    let wv = row[c];
                    if wv >= zero {
                        dw[r * n_in + c] = dw[r * n_in + c] + u * sp[c];
                        dx[c] = dx[c] + u * wv * dp[c];
                    } else {
                        dw[r * n_in + c] = dw[r * n_in + c] + u * sm[c];
                        dx[c] = dx[c] - u * wv * dm[c];
                    }
                }
                for c in nc..spec.in_dim {
                    dw[r * n_in + c] = dw[r * n_in + c] + u * x[c];
                    dx[c] = dx[c] + row[c] * u;
                }
            }
        }
        _ => unreachable!("cache does not match layer kind"),
    }
}

/// A layer: structure plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub params: LayerParams<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(spec: LayerSpec, params: LayerParams<T>) -> Result<Self> {
        spec.validate()?;
        check_dim("layer weight rows", spec.out_dim, params.w.rows())?;
        check_dim("layer weight cols", spec.in_dim, params.w.cols())?;
        check_dim("layer bias", spec.out_dim, params.b.len())?;
        Ok(Self { spec, params })
    }

    /// Layer with zero weights and bias.
    pub fn zeros(spec: LayerSpec) -> Result<Self> {
        Self::new(spec, LayerParams::zeros(spec.out_dim, spec.in_dim))
    }

    pub fn forward(&self, x: &[T]) -> Result<Vector<T>> {
        check_dim("layer input", self.spec.in_dim, x.len())?;
        Ok(forward_raw(&self.spec, &self.params, x).0.into())
    }

    pub fn backward(&self, x: &[T], upstream: &[T]) -> Result<GradPair<T>> {
        check_dim("layer input", self.spec.in_dim, x.len())?;
        check_dim("layer upstream", self.spec.out_dim, upstream.len())?;
        let (_, cache) = forward_raw(&self.spec, &self.params, x);
        Ok(backward_raw(&self.spec, &self.params, x, &cache, upstream))
    }

    /// Weight matrix as the forward map actually applies it on the constrained
    /// columns (`s·g(W)` for constrained layers, `W` otherwise).
    pub fn effective_weights(&self) -> Matrix<T> {
        let nc = self.spec.constrained_inputs();
        let s: T = self.spec.sign.factor();
        let w = &self.params.w;
        match self.spec.kind {
            LayerKind::ConstrainedAffine => Matrix::from_fn(w.rows(), w.cols(), |r, c| {
                if c < nc {
                    s * self.spec.reparam.apply(w.get(r, c))
                } else {
                    w.get(r, c)
                }
            }),
            _ => w.clone(),
        }
    }
}

fn run<T: Scalar>(spec: LayerSpec, params: &LayerParams<T>, x: &[T]) -> Result<Vector<T>> {
    spec.validate()?;
    check_shapes(&spec, params, x)?;
    Ok(forward_raw(&spec, params, x).0.into())
}

fn run_backward<T: Scalar>(
    spec: LayerSpec,
    params: &LayerParams<T>,
    x: &[T],
    upstream: &[T],
) -> Result<GradPair<T>> {
    spec.validate()?;
    check_shapes(&spec, params, x)?;
    check_dim("layer upstream", spec.out_dim, upstream.len())?;
    let (_, cache) = forward_raw(&spec, params, x);
    Ok(backward_raw(&spec, params, x, &cache, upstream))
}

/// `σ(s·g(W)x + b)`, or the affine part alone when `activation` is `None`.
pub fn forward_constrained<T: Scalar>(
    params: &LayerParams<T>,
    x: &[T],
    sign: Sign,
    reparam: Reparam,
    activation: Option<ActivationSpec>,
) -> Result<Vector<T>> {
    let spec = LayerSpec::constrained(params.w.cols(), params.w.rows(), sign, activation)
        .with_reparam(reparam);
    run(spec, params, x)
}

/// `σ(Wx + b)` without any sign constraint.
pub fn forward_free<T: Scalar>(
    params: &LayerParams<T>,
    x: &[T],
    activation: Option<ActivationSpec>,
) -> Result<Vector<T>> {
    run(LayerSpec::free(params.w.cols(), params.w.rows(), activation), params, x)
}

/// `σ(W⁺x + b) − σ(W⁻x + b)`.
pub fn forward_switch_pre<T: Scalar>(
    params: &LayerParams<T>,
    x: &[T],
    activation: ActivationSpec,
) -> Result<Vector<T>> {
    run(LayerSpec::switch_pre(params.w.cols(), params.w.rows(), activation), params, x)
}

/// `W⁺σ(x) + W⁻σ(−x) + b`.
pub fn forward_switch_post<T: Scalar>(
    params: &LayerParams<T>,
    x: &[T],
    activation: ActivationSpec,
) -> Result<Vector<T>> {
    run(LayerSpec::switch_post(params.w.cols(), params.w.rows(), activation), params, x)
}

pub fn backward_constrained<T: Scalar>(
    params: &LayerParams<T>,
    x: &[T],
    upstream: &[T],
    sign: Sign,
    reparam: Reparam,
    activation: Option<ActivationSpec>,
) -> Result<GradPair<T>> {
    let spec = LayerSpec::constrained(params.w.cols(), params.w.rows(), sign, activation)
        .with_reparam(reparam);
    run_backward(spec, params, x, upstream)
}

pub fn backward_free<T: Scalar>(
    params: &LayerParams<T>,
    x: &[T],
    upstream: &[T],
    activation: Option<ActivationSpec>,
) -> Result<GradPair<T>> {
    run_backward(LayerSpec::free(params.w.cols(), params.w.rows(), activation), params, x, upstream)
}

pub fn backward_switch_pre<T: Scalar>(
    params: &LayerParams<T>,
    x: &[T],
    upstream: &[T],
    activation: ActivationSpec,
) -> Result<GradPair<T>> {
    let spec = LayerSpec::switch_pre(params.w.cols(), params.w.rows(), activation);
    run_backward(spec, params, x, upstream)
}

pub fn backward_switch_post<T: Scalar>(
    params: &LayerParams<T>,
    x: &[T],
    upstream: &[T],
    activation: ActivationSpec,
) -> Result<GradPair<T>> {
    let spec = LayerSpec::switch_post(params.w.cols(), params.w.rows(), activation);
    run_backward(spec, params, x, upstream)
}

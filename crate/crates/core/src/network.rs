//! Layer composition, feature annotations, the structural monotonicity
//! certificate, equivalence-preserving rewrites and the model document.
//!
//! Input routing: monotone features (increasing, or decreasing after
//! negation) form the leading block of the first monotone layer's input.
//! Free features pass through the optional free subnetwork and the result
//! fills the trailing `free_inputs` columns of that first layer.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::diff::{GradPair, Matrix, Vector};
use crate::error::{check_dim, Error, Result};
use crate::layer::{backward_into, backward_raw, forward_raw, Cache, Layer, LayerKind, LayerParams, LayerSpec, Reparam, Sign};
use crate::scalar::Scalar;

/// Current model document version.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
    Free,
}

/// Per-feature monotonicity requirement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureAnnotation(pub Vec<Direction>);

impl FeatureAnnotation {
    pub fn all_increasing(n: usize) -> Self {
        Self(vec![Direction::Increasing; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices of increasing and decreasing features, in input order.
    pub fn monotone_indices(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] != Direction::Free).collect()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] == Direction::Free).collect()
    }

    pub fn increasing_indices(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] == Direction::Increasing).collect()
    }

    pub fn decreasing_indices(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] == Direction::Decreasing).collect()
    }

    /// The annotation seen after decreasing features have been negated.
    pub fn as_increasing(&self) -> Self {
        Self(
            self.0
                .iter()
                .map(|d| match d {
                    Direction::Decreasing => Direction::Increasing,
                    other => *other,
                })
                .collect(),
        )
    }
}

/// Proof object returned by [`Network::certify_monotone`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Certificate {
    /// Non-positive constrained layers on the monotone path (always even).
    pub non_positive_layers: usize,
    /// Set when a `free_affine` layer sits on the monotone path; the
    /// certificate then holds only for the current parameter values.
    pub parameter_dependent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Certification {
    Certified(Certificate),
    Rejected { layer: Option<usize>, reason: String },
}

impl Certification {
    pub fn is_certified(&self) -> bool {
        matches!(self, Certification::Certified(_))
    }
}

/// Gradients for every layer plus the gradient with respect to the raw input.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrad<T> {
    pub free: Vec<GradPair<T>>,
    pub layers: Vec<GradPair<T>>,
    pub dx: Vector<T>,
}

impl<T: Scalar> NetworkGrad<T> {
    /// Adds the parameter gradients into `out`, laid out like
    /// [`Network::params_flat`].
    pub fn accumulate_flat(&self, out: &mut [T]) {
        let mut k = 0;
        for g in self.free.iter().chain(&self.layers) {
            for &v in g.dw.as_slice().iter().chain(g.db.iter()) {
                out[k] = out[k] + v;
                k += 1;
            }
        }
    }

    pub fn to_flat(&self) -> Vec<T> {
        let n = self
            .free
            .iter()
            .chain(&self.layers)
            .map(|g| g.db.len() * (g.dw.cols() + 1))
            .sum();
        let mut out = vec![T::zero(); n];
        self.accumulate_flat(&mut out);
        out
    }
}

/// Forward intermediate values kept for a backward pass.
pub(crate) struct Trace<T> {
    free_inputs: Vec<Vec<T>>,
    free_caches: Vec<Cache<T>>,
    inputs: Vec<Vec<T>>,
    caches: Vec<Cache<T>>,
    pub(crate) output: Vec<T>,
}

/// A monotone MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    annotation: FeatureAnnotation,
    free_subnet: Vec<Layer<T>>,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Assembles and validates a network. `free_subnet` may be empty.
    pub fn new(
        annotation: FeatureAnnotation,
        free_subnet: Vec<Layer<T>>,
        layers: Vec<Layer<T>>,
    ) -> Result<Self> {
        let net = Self {
            annotation,
            free_subnet,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Config("network needs at least one layer".into()))?;
        let n_mono = self.annotation.monotone_indices().len();
        let n_free = self.annotation.free_indices().len();
        for l in self.free_subnet.iter().chain(&self.layers) {
            l.spec.validate()?;
        }
        let tail = match self.free_subnet.first() {
            Some(f) => {
                if n_free == 0 {
                    return Err(Error::Config("free subnetwork given but no free features".into()));
                }
                check_dim("free subnetwork input", n_free, f.spec.in_dim)?;
                for l in &self.free_subnet {
                    if l.spec.kind != LayerKind::FreeAffine || l.spec.free_inputs != 0 {
                        return Err(Error::Config("free subnetwork must be plain free_affine layers".into()));
                    }
                }
                for pair in self.free_subnet.windows(2) {
                    check_dim("free subnetwork chaining", pair[0].spec.out_dim, pair[1].spec.in_dim)?;
                }
                self.free_subnet.last().map(|l| l.spec.out_dim).unwrap_or(0)
            }
            None => n_free,
        };
        check_dim("first layer free inputs", tail, first.spec.free_inputs)?;
        check_dim("first layer input", n_mono + tail, first.spec.in_dim)?;
        for (k, pair) in self.layers.windows(2).enumerate() {
            check_dim("layer chaining", pair[0].spec.out_dim, pair[1].spec.in_dim)?;
            if pair[1].spec.free_inputs != 0 {
                return Err(Error::Config(format!(
                    "layer {} has free inputs; only the first monotone layer may",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn annotation(&self) -> &FeatureAnnotation {
        &self.annotation
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn free_subnet(&self) -> &[Layer<T>] {
        &self.free_subnet
    }

    pub fn input_dim(&self) -> usize {
        self.annotation.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.spec.out_dim).unwrap_or(0)
    }

    /// Mutable access to one layer's parameters; the structure stays fixed.
    pub fn layer_params_mut(&mut self, k: usize) -> &mut LayerParams<T> {
        &mut self.layers[k].params
    }

    pub fn free_params_mut(&mut self, k: usize) -> &mut LayerParams<T> {
        &mut self.free_subnet[k].params
    }

    fn all_layers(&self) -> impl Iterator<Item = &Layer<T>> {
        self.free_subnet.iter().chain(&self.layers)
    }

    fn all_layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<T>> {
        self.free_subnet.iter_mut().chain(self.layers.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.all_layers()
            .map(|l| l.spec.out_dim * (l.spec.in_dim + 1))
            .sum()
    }

    /// All parameters: free subnetwork first, then each layer's `W`
    /// (row-major) followed by its `b`.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.all_layers() {
            out.extend_from_slice(l.params.w.as_slice());
            out.extend_from_slice(&l.params.b);
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[T]) -> Result<()> {
        check_dim("flat parameter vector", self.param_count(), values.len())?;
        let mut k = 0;
        for l in self.all_layers_mut() {
            for v in l.params.w.as_mut_slice().iter_mut().chain(l.params.b.iter_mut()) {
                *v = values[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Visits every layer's parameters together with its spec.
    pub fn for_each_params_mut(&mut self, mut f: impl FnMut(&LayerSpec, &mut LayerParams<T>)) {
        for l in self.all_layers_mut() {
            f(&l.spec, &mut l.params);
        }
    }

    pub(crate) fn trace(&self, x: &[T]) -> Result<Trace<T>> {
        check_dim("network input", self.input_dim(), x.len())?;
        let mut free_inputs = Vec::with_capacity(self.free_subnet.len());
        let mut free_caches = Vec::with_capacity(self.free_subnet.len());
        let mut u: Vec<T> = self.annotation.free_indices().iter().map(|&i| x[i]).collect();
        for l in &self.free_subnet {
            let (y, c) = forward_raw(&l.spec, &l.params, &u);
            free_inputs.push(std::mem::replace(&mut u, y));
            free_caches.push(c);
        }
        let mut h: Vec<T> = Vec::with_capacity(self.layers[0].spec.in_dim);
        for (i, d) in self.annotation.0.iter().enumerate() {
            match d {
                Direction::Increasing => h.push(x[i]),
                Direction::Decreasing => h.push(-x[i]),
                Direction::Free => {}
            }
        }
        h.extend_from_slice(&u);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (y, c) = forward_raw(&l.spec, &l.params, &h);
            inputs.push(std::mem::replace(&mut h, y));
            caches.push(c);
        }
        Ok(Trace {
            free_inputs,
            free_caches,
            inputs,
            caches,
            output: h,
        })
    }

    /// Network output on a raw input (decreasing features are negated here).
    pub fn forward(&self, x: &[T]) -> Result<Vector<T>> {
        Ok(self.trace(x)?.output.into())
    }

    /// First output component; convenient for scalar regressors.
    pub fn forward_scalar(&self, x: &[T]) -> Result<T> {
        Ok(self.trace(x)?.output[0])
    }

    pub(crate) fn backward_trace(&self, trace: &Trace<T>, upstream: &[T]) -> NetworkGrad<T> {
        let mut up = upstream.to_vec();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, l) in self.layers.iter().enumerate().rev() {
            let g = backward_raw(&l.spec, &l.params, &trace.inputs[k], &trace.caches[k], &up);
            up = g.dx.to_vec();
            layers.push(g);
        }
        layers.reverse();

        let mut dx = Vector::zeros(self.input_dim());
        let mut col = 0;
        for (i, d) in self.annotation.0.iter().enumerate() {
            match d {
                Direction::Increasing => {
                    dx[i] = up[col];
                    col += 1;
                }
                Direction::Decreasing => {
                    dx[i] = -up[col];
                    col += 1;
                }
                Direction::Free => {}
            }
        }
        let mut uf = up[col..].to_vec();
        let mut free = Vec::with_capacity(self.free_subnet.len());
        for (k, l) in self.free_subnet.iter().enumerate().rev() {
            let g = backward_raw(&l.spec, &l.params, &trace.free_inputs[k], &trace.free_caches[k], &uf);
            uf = g.dx.to_vec();
            free.push(g);
        }
        free.reverse();
        for (slot, i) in self.annotation.free_indices().into_iter().enumerate() {
            dx[i] = uf[slot];
        }
        NetworkGrad { free, layers, dx }
    }

    /// Adds the parameter gradient of `upstream · f(x)` into `flat`, laid out
    /// like [`Network::params_flat`].
    pub(crate) fn accumulate_grad(&self, trace: &Trace<T>, upstream: &[T], flat: &mut [T]) {
        let sizes: Vec<usize> = self
            .all_layers()
            .map(|l| l.spec.out_dim * (l.spec.in_dim + 1))
            .collect();
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        for s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        let nf = self.free_subnet.len();
        let mut up = upstream.to_vec();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let start = offsets[nf + k];
            let nw = l.spec.out_dim * l.spec.in_dim;
            let (dw, rest) = flat[start..start + sizes[nf + k]].split_at_mut(nw);
            let mut dx = vec![T::zero(); l.spec.in_dim];
            backward_into(&l.spec, &l.params, &trace.inputs[k], &trace.caches[k], &up, dw, rest, &mut dx);
            up = dx;
        }
        if nf == 0 {
            return;
        }
        let tail = self.layers[0].spec.free_inputs;
        let mut up = up[up.len() - tail..].to_vec();
        for (k, l) in self.free_subnet.iter().enumerate().rev() {
            let start = offsets[k];
            let nw = l.spec.out_dim * l.spec.in_dim;
            let (dw, rest) = flat[start..start + sizes[k]].split_at_mut(nw);
            let mut dx = vec![T::zero(); l.spec.in_dim];
            backward_into(&l.spec, &l.params, &trace.free_inputs[k], &trace.free_caches[k], &up, dw, rest, &mut dx);
            up = dx;
        }
    }

    /// Gradients of `upstream · f(x)` with respect to all parameters and to `x`.
    pub fn backward(&self, x: &[T], upstream: &[T]) -> Result<NetworkGrad<T>> {
        check_dim("network upstream", self.output_dim(), upstream.len())?;
        let trace = self.trace(x)?;
        Ok(self.backward_trace(&trace, upstream))
    }

    /// `∂f₀/∂x` at `x`.
    pub fn input_grad(&self, x: &[T]) -> Result<Vector<T>> {
        let mut up = vec![T::zero(); self.output_dim()];
        up[0] = T::one();
        Ok(self.backward(x, &up)?.dx)
    }

    /// Structural check that every annotated feature reaches the output
    /// through non-decreasing maps.
    pub fn certify_monotone(&self) -> Certification {
        let reject = |layer: Option<usize>, reason: String| Certification::Rejected { layer, reason };
        let mut non_positive = 0;
        let mut parameter_dependent = false;
        for (k, l) in self.layers.iter().enumerate() {
            let spec = &l.spec;
            if let Some(act) = spec.activation {
                if !act.is_monotone() {
                    return reject(Some(k), format!("activation `{act}` is not monotone"));
                }
            }
            match spec.kind {
                LayerKind::ConstrainedAffine => {
                    if spec.sign == Sign::NonPositive {
                        non_positive += 1;
                    }
                }
                LayerKind::SwitchPre | LayerKind::SwitchPost => {
                    let act = spec.activation.expect("validated");
                    if !act.usable_for_switch() {
                        return reject(Some(k), format!("activation `{act}` is not usable in a switch layer"));
                    }
                }
                LayerKind::FreeAffine => {
                    let nc = spec.constrained_inputs();
                    let w = &l.params.w;
                    let negative = (0..w.rows()).any(|r| w.row(r)[..nc].iter().any(|&v| !(v >= T::zero())));
                    if negative {
                        return reject(
                            Some(k),
                            "free_affine layer on the monotone path has negative weights".into(),
                        );
                    }
                    parameter_dependent = true;
                }
            }
        }
        if non_positive % 2 == 1 {
            return reject(
                None,
                format!("{non_positive} non-positive layers on the monotone path (odd count gives a non-increasing map)"),
            );
        }
        Certification::Certified(Certificate {
            non_positive_layers: non_positive,
            parameter_dependent,
        })
    }

    /// Turns the constrained pair `(k, k+1)` of equal sign into the opposite
    /// sign, reflecting layer `k`'s activation. The function is unchanged.
    pub fn flip_transform(&self, k: usize) -> Result<Self> {
        if k + 1 >= self.layers.len() {
            return Err(Error::Transform(format!(
                "flip needs layers {k} and {} but the network has {}",
                k + 1,
                self.layers.len()
            )));
        }
        let (a, b) = (&self.layers[k].spec, &self.layers[k + 1].spec);
        if a.kind != LayerKind::ConstrainedAffine || b.kind != LayerKind::ConstrainedAffine {
            return Err(Error::Transform(format!("layers {k} and {} must both be constrained_affine", k + 1)));
        }
        if a.sign != b.sign {
            return Err(Error::Transform(format!("layers {k} and {} have different signs", k + 1)));
        }
        let mut out = self.clone();
        {
            let l = &mut out.layers[k];
            let nc = l.spec.constrained_inputs();
            l.spec.sign = l.spec.sign.flipped();
            l.spec.activation = l.spec.activation.map(ActivationSpec::reflect);
            for v in l.params.b.iter_mut() {
                *v = -*v;
            }
            for r in 0..l.params.w.rows() {
                for c in nc..l.params.w.cols() {
                    let v = l.params.w.get(r, c);
                    l.params.w.set(r, c, -v);
                }
            }
        }
        out.layers[k + 1].spec.sign = b.sign.flipped();
        Ok(out)
    }

    /// Replaces layer `k`'s activation `σ` with `a·σ + b` and rewrites layer
    /// `k+1` so the network computes the same function.
    pub fn rescale_transform(&self, k: usize, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Transform(format!("rescale factor must be finite and > 0, got {a}")));
        }
        if k + 1 >= self.layers.len() {
            return Err(Error::Transform(format!("layer {k} has no successor to absorb the rescale")));
        }
        let act = self.layers[k]
            .spec
            .activation
            .ok_or_else(|| Error::Transform(format!("layer {k} has no activation")))?;
        let next = &self.layers[k + 1];
        let weight_scale = match (next.spec.kind, next.spec.reparam) {
            (LayerKind::ConstrainedAffine, Reparam::Abs) | (LayerKind::FreeAffine, _) => a,
            (LayerKind::ConstrainedAffine, Reparam::Square) => a.sqrt(),
            (kind, _) => {
                return Err(Error::Transform(format!(
                    "cannot absorb a rescale into a {} layer",
                    kind.as_str()
                )))
            }
        };
        let eff = next.effective_weights();
        let mut out = self.clone();
        out.layers[k].spec.activation = Some(act.rescale_equivalent(a, b)?);
        let inv_a = T::lit(a).recip();
        let shift = T::lit(b);
        let ws = T::lit(weight_scale);
        let l = &mut out.layers[k + 1];
        for r in 0..eff.rows() {
            let row_sum: T = eff.row(r).iter().fold(T::zero(), |acc, &v| acc + v);
            l.params.b[r] = l.params.b[r] - row_sum * inv_a * shift;
            for c in 0..eff.cols() {
                let v = l.params.w.get(r, c);
                l.params.w.set(r, c, v / ws);
            }
        }
        Ok(out)
    }

    /// Rewrites the output layer so the network computes `a·f(x) + c`.
    pub fn scale_output(&self, a: f64, c: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() || !c.is_finite() {
            return Err(Error::Transform(format!("output scale must be finite and > 0, got {a}")));
        }
        let mut out = self.clone();
        let last = out.layers.last_mut().expect("validated");
        let spec = last.spec;
        let mono_scale = match (spec.kind, spec.reparam) {
            (LayerKind::ConstrainedAffine, Reparam::Square) => a.sqrt(),
            (LayerKind::SwitchPre, _) => {
                return Err(Error::Transform("cannot rescale a switch_pre output layer".into()))
            }
            (LayerKind::ConstrainedAffine, _) | (LayerKind::FreeAffine, _) | (LayerKind::SwitchPost, _) => a,
        };
        if spec.activation.is_some() && spec.kind != LayerKind::SwitchPost {
            return Err(Error::Transform("output layer has an activation after its affine map".into()));
        }
        let nc = spec.constrained_inputs();
        let (ta, tm, tc) = (T::lit(a), T::lit(mono_scale), T::lit(c));
        for r in 0..spec.out_dim {
            for col in 0..spec.in_dim {
                let v = last.params.w.get(r, col);
                last.params.w.set(r, col, if col < nc { v * tm } else { v * ta });
            }
            last.params.b[r] = ta * last.params.b[r] + tc;
        }
        Ok(out)
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let conv = |l: &Layer<T>| Layer {
            spec: l.spec,
            params: LayerParams {
                w: l.params.w.cast(),
                b: l.params.b.cast(),
            },
        };
        Network {
            annotation: self.annotation.clone(),
            free_subnet: self.free_subnet.iter().map(conv).collect(),
            layers: self.layers.iter().map(conv).collect(),
        }
    }

    /// Serializes to the JSON model document.
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            version: MODEL_VERSION,
            annotation: self.annotation.clone(),
            layers: self.layers.iter().map(LayerDoc::from_layer).collect::<Result<_>>()?,
            free_subnet: if self.free_subnet.is_empty() {
                None
            } else {
                Some(self.free_subnet.iter().map(LayerDoc::from_layer).collect::<Result<_>>()?)
            },
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Numeric(e.to_string()))
    }

    /// Parses a JSON model document.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            version: u32,
        }
        let probe: Probe = serde_json::from_str(text).map_err(parse_error)?;
        if probe.version != MODEL_VERSION {
            return Err(Error::Version {
                found: probe.version,
                expected: MODEL_VERSION,
            });
        }
        let doc: ModelDoc = serde_json::from_str(text).map_err(parse_error)?;
        let layers = doc.layers.into_iter().map(LayerDoc::into_layer).collect::<Result<_>>()?;
        let free = doc
            .free_subnet
            .unwrap_or_default()
            .into_iter()
            .map(LayerDoc::into_layer)
            .collect::<Result<_>>()?;
        Self::new(doc.annotation, free, layers)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    version: u32,
    annotation: FeatureAnnotation,
    layers: Vec<LayerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    free_subnet: Option<Vec<LayerDoc>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sign: Option<Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reparam: Option<Reparam>,
    #[serde(default)]
    activation: Option<ActivationSpec>,
    in_dim: usize,
    out_dim: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    free_inputs: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
    b: Vec<f64>,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl LayerDoc {
    fn from_layer<T: Scalar>(l: &Layer<T>) -> Result<Self> {
        if !(l.params.w.is_finite() && l.params.b.is_finite()) {
            return Err(Error::Numeric("cannot serialize non-finite parameters".into()));
        }
        let constrained = l.spec.kind == LayerKind::ConstrainedAffine;
        Ok(Self {
            kind: l.spec.kind,
            sign: constrained.then_some(l.spec.sign),
            reparam: constrained.then_some(l.spec.reparam),
            activation: l.spec.activation,
            in_dim: l.spec.in_dim,
            out_dim: l.spec.out_dim,
            free_inputs: l.spec.free_inputs,
            w: l.params.w.as_slice().iter().map(|v| v.as_f64()).collect(),
            b: l.params.b.iter().map(|v| v.as_f64()).collect(),
        })
    }

    fn into_layer<T: Scalar>(self) -> Result<Layer<T>> {
        let spec = LayerSpec {
            kind: self.kind,
            sign: self.sign.unwrap_or_default(),
            reparam: self.reparam.unwrap_or_default(),
            activation: self.activation,
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            free_inputs: self.free_inputs,
        };
        let w = Matrix::from_vec(self.out_dim, self.in_dim, self.w.into_iter().map(T::lit).collect())?;
        let b = Vector::from(self.b.into_iter().map(T::lit).collect::<Vec<_>>());
        Layer::new(spec, LayerParams::new(w, b)?)
    }
}

/// Family of layer forms used for the monotone part of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    /// Plain MLP; no monotonicity guarantee.
    Unconstrained,
    /// Non-negative constrained layers.
    Constrained,
    SwitchPre,
    SwitchPost,
}

impl Parametrization {
    pub fn as_str(self) -> &'static str {
        match self {
            Parametrization::Unconstrained => "unconstrained",
            Parametrization::Constrained => "constrained",
            Parametrization::SwitchPre => "switch_pre",
            Parametrization::SwitchPost => "switch_post",
        }
    }
}

/// Shape of a network to be built with zero parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub parametrization: Parametrization,
    pub activation: ActivationSpec,
    pub reparam: Reparam,
    /// Widths of the monotone hidden layers.
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    /// Widths of the free subnetwork (empty: free features enter directly).
    pub free_hidden: Vec<usize>,
    pub free_activation: ActivationSpec,
}

impl Architecture {
    pub fn new(parametrization: Parametrization, activation: ActivationSpec, hidden: Vec<usize>) -> Self {
        Self {
            parametrization,
            activation,
            reparam: Reparam::Abs,
            hidden,
            out_dim: 1,
            free_hidden: Vec::new(),
            free_activation: activation,
        }
    }

    /// Builds a zero-parameter network for `annotation`.
    ///
    /// Hidden layers follow the parametrization. The output layer is a
    /// `switch_post` layer for post-switch networks, `free_affine` for the
    /// unconstrained family and a non-negative `constrained_affine` layer
    /// without activation otherwise.
    pub fn build<T: Scalar>(&self, annotation: &FeatureAnnotation) -> Result<Network<T>> {
        let n_mono = annotation.monotone_indices().len();
        let n_free = annotation.free_indices().len();
        let mut free = Vec::new();
        let mut prev = n_free;
        if n_free > 0 {
            for &w in &self.free_hidden {
                free.push(Layer::zeros(LayerSpec::free(prev, w, Some(self.free_activation)))?);
                prev = w;
            }
        }
        let tail = prev;
        let mut layers = Vec::new();
        let mut in_dim = n_mono + tail;
        let widths = self.hidden.iter().copied().chain(std::iter::once(self.out_dim));
        let n_layers = self.hidden.len() + 1;
        for (i, w) in widths.enumerate() {
            let last = i + 1 == n_layers;
            let act = self.activation;
            let spec = match (self.parametrization, last) {
                (Parametrization::Unconstrained, false) => LayerSpec::free(in_dim, w, Some(act)),
                (Parametrization::Unconstrained, true) => LayerSpec::free(in_dim, w, None),
                (Parametrization::Constrained, false) => LayerSpec::constrained(in_dim, w, Sign::NonNegative, Some(act)),
                (Parametrization::SwitchPre, false) => LayerSpec::switch_pre(in_dim, w, act),
                (Parametrization::SwitchPost, _) => LayerSpec::switch_post(in_dim, w, act),
                (Parametrization::Constrained | Parametrization::SwitchPre, true) => {
                    LayerSpec::constrained(in_dim, w, Sign::NonNegative, None)
                }
            };
            let spec = match spec.kind {
                LayerKind::ConstrainedAffine => spec.with_reparam(self.reparam),
                _ => spec,
            };
            let spec = if i == 0 { spec.with_free_inputs(tail) } else { spec };
            layers.push(Layer::zeros(spec)?);
            in_dim = w;
        }
        Network::new(annotation.clone(), free, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(spec: LayerSpec, w: &[Vec<f64>], b: &[f64]) -> Layer<f64> {
        Layer::new(
            spec,
            LayerParams::new(Matrix::from_rows(w).unwrap(), Vector::from(b.to_vec())).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_network() {
        let l = layer(LayerSpec::free(1, 1, None), &[vec![1.0]], &[0.0]);
        let net = Network::new(FeatureAnnotation::all_increasing(1), vec![], vec![l]).unwrap();
        assert_eq!(net.forward(&[-3.5]).unwrap()[0], -3.5);
    }

    #[test]
    fn non_positive_relu_hand_trace() {
        let relu = Some(ActivationSpec::relu());
        let l1 = layer(LayerSpec::constrained(1, 1, Sign::NonPositive, relu), &[vec![1.0]], &[0.0]);
        let l2 = layer(LayerSpec::constrained(1, 1, Sign::NonPositive, relu), &[vec![1.0]], &[0.0]);
        let net = Network::new(FeatureAnnotation::all_increasing(1), vec![], vec![l1, l2]).unwrap();
        // ReLU(-ReLU(-(-1))) = ReLU(-1) = 0
        assert_eq!(net.forward(&[-1.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn decreasing_features_are_negated() {
        let l = layer(LayerSpec::free(2, 1, None), &[vec![1.0, 10.0]], &[0.0]);
        let ann = FeatureAnnotation(vec![Direction::Decreasing, Direction::Increasing]);
        let net = Network::new(ann, vec![], vec![l]).unwrap();
        assert_eq!(net.forward(&[2.0, 1.0]).unwrap()[0], 8.0);
        assert_eq!(net.input_grad(&[2.0, 1.0]).unwrap().as_ref(), &[-1.0, 10.0]);
    }

    #[test]
    fn certification_examples() {
        let relu = ActivationSpec::relu();
        let ann = FeatureAnnotation::all_increasing(2);
        let mut arch = Architecture::new(Parametrization::SwitchPost, relu, vec![4, 4, 4]);
        let net: Network<f64> = arch.build(&ann).unwrap();
        assert_eq!(net.layers().len(), 4);
        assert!(net.certify_monotone().is_certified());

        arch.parametrization = Parametrization::Constrained;
        let net: Network<f64> = arch.build(&ann).unwrap();
        assert!(net.certify_monotone().is_certified());

        let np = |i, o, a| Layer::<f64>::zeros(LayerSpec::constrained(i, o, Sign::NonPositive, a)).unwrap();
        let out = Layer::zeros(LayerSpec::constrained(3, 1, Sign::NonNegative, None)).unwrap();
        let odd = Network::new(
            ann.clone(),
            vec![],
            vec![np(2, 3, Some(relu)), np(3, 3, Some(relu)), np(3, 3, Some(relu)), out.clone()],
        )
        .unwrap();
        assert!(!odd.certify_monotone().is_certified());
        let even = Network::new(ann.clone(), vec![], vec![np(2, 3, Some(relu)), np(3, 3, Some(relu)), out]).unwrap();
        assert!(even.certify_monotone().is_certified());

        let gelu = ActivationSpec::new(crate::activation::ActivationKind::Gelu);
        let g = layer(LayerSpec::free(2, 1, Some(gelu)), &[vec![1.0, 1.0]], &[0.0]);
        let net = Network::new(ann.clone(), vec![], vec![g]).unwrap();
        assert!(!net.certify_monotone().is_certified());

        let neg = layer(LayerSpec::free(2, 1, None), &[vec![1.0, -1.0]], &[0.0]);
        assert!(!Network::new(ann, vec![], vec![neg]).unwrap().certify_monotone().is_certified());
    }

    #[test]
    fn partial_monotone_wiring() {
        let ann = FeatureAnnotation(vec![Direction::Free, Direction::Increasing, Direction::Free]);
        let mut arch = Architecture::new(Parametrization::SwitchPost, ActivationSpec::relu(), vec![3]);
        arch.free_hidden = vec![4, 2];
        let net: Network<f64> = arch.build(&ann).unwrap();
        assert_eq!(net.free_subnet().len(), 2);
        assert_eq!(net.layers()[0].spec.in_dim, 3);
        assert_eq!(net.layers()[0].spec.free_inputs, 2);
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]).unwrap().len(), 1);

        arch.free_hidden.clear();
        let net: Network<f64> = arch.build(&ann).unwrap();
        assert_eq!(net.layers()[0].spec.free_inputs, 2);
    }

    #[test]
    fn flip_preconditions() {
        let relu = Some(ActivationSpec::relu());
        let a = Layer::<f64>::zeros(LayerSpec::constrained(1, 2, Sign::NonPositive, relu)).unwrap();
        let b = Layer::<f64>::zeros(LayerSpec::constrained(2, 1, Sign::NonNegative, None)).unwrap();
        let net = Network::new(FeatureAnnotation::all_increasing(1), vec![], vec![a, b]).unwrap();
        assert!(matches!(net.flip_transform(0), Err(Error::Transform(_))));
        assert!(matches!(net.flip_transform(1), Err(Error::Transform(_))));
    }

    #[test]
    fn document_errors() {
        let relu = ActivationSpec::relu();
        let arch = Architecture::new(Parametrization::SwitchPost, relu, vec![2]);
        let net: Network<f64> = arch.build(&FeatureAnnotation::all_increasing(1)).unwrap();
        let text = net.to_json().unwrap();
        assert_eq!(Network::<f64>::from_json(&text).unwrap(), net);

        let bad_kind = text.replacen("switch_post", "switch_sideways", 1);
        match Network::<f64>::from_json(&bad_kind) {
            Err(Error::Parse { message, line, .. }) => {
                assert!(message.contains("switch_sideways"));
                assert!(line > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_version = text.replacen("\"version\": 1", "\"version\": 7", 1);
        assert!(matches!(
            Network::<f64>::from_json(&bad_version),
            Err(Error::Version { found: 7, expected: 1 })
        ));
        assert!(matches!(Network::<f64>::from_json("{\"version\": 1,"), Err(Error::Parse { .. })));
    }
}

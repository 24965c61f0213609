//! Empirical checks on trained or constructed networks.
//!
//! These are sampling tests, not proofs: a certified network should always
//! come back clean, while an uncertified one may or may not.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::network::{Direction, Network};
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-9;
const CHUNK: usize = 1024;

/// Axis-aligned sampling box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    /// `[-5, 5]^dim`.
    pub fn standard(dim: usize) -> Self {
        Self::cube(dim, -5.0, 5.0)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        check_dim("domain box", dim, self.lo.len())?;
        check_dim("domain box", dim, self.hi.len())?;
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(Error::Config(format!("invalid box bounds [{l}, {h}]")));
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| if l == h { l } else { rng.gen_range(l..h) })
            .collect()
    }
}

/// The worst offending sample of a check.
///
/// For monotonicity fuzzing `fx`/`fx_prime` are the outputs at `x`/`x_prime`.
/// For the gradient check `x_prime` is `x` plus the unit step along the
/// offending feature and `fx_prime` the offending derivative. For the
/// convexity check `x`/`x_prime` are the endpoints, `fx` the value at the
/// midpoint and `fx_prime` the mean of the endpoint values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub fx: f64,
    pub fx_prime: f64,
    /// Amount by which the tolerance was exceeded.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub checked: usize,
    pub violations: usize,
    pub worst: Option<Violation>,
    pub tolerance: f64,
}

impl ViolationReport {
    fn empty(tolerance: f64) -> Self {
        Self {
            checked: 0,
            violations: 0,
            worst: None,
            tolerance,
        }
    }

    fn record(&mut self, v: Option<Violation>) {
        self.checked += 1;
        if let Some(v) = v {
            self.violations += 1;
            if self.worst.as_ref().map_or(true, |w| v.excess > w.excess) {
                self.worst = Some(v);
            }
        }
    }

    /// Combines two reports; ties on the worst case keep `self`'s.
    pub fn merge(mut self, other: Self) -> Self {
        self.checked += other.checked;
        self.violations += other.violations;
        if let Some(w) = other.worst {
            if self.worst.as_ref().map_or(true, |s| w.excess > s.excess) {
                self.worst = Some(w);
            }
        }
        self
    }

    pub fn is_clean(&self) -> bool {
        self.violations == 0
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64 + 1);
    rng
}

/// Runs `check` on `n` samples split into independently seeded chunks and
/// merges the chunk reports in order.
fn sampled<F>(n: usize, seed: u64, tol: f64, check: F) -> ViolationReport
where
    F: Fn(&mut ChaCha8Rng) -> Option<Violation> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let reports: Vec<ViolationReport> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let mut rep = ViolationReport::empty(tol);
            let count = CHUNK.min(n - c * CHUNK);
            for _ in 0..count {
                rep.record(check(&mut rng));
            }
            rep
        })
        .collect();
    reports
        .into_iter()
        .fold(ViolationReport::empty(tol), ViolationReport::merge)
}

fn eval<T: Scalar>(net: &Network<T>, x: &[f64]) -> Vec<f64> {
    let xt: Vec<T> = x.iter().map(|&v| T::lit(v)).collect();
    net.forward(&xt)
        .expect("dimensions checked")
        .iter()
        .map(|v| v.as_f64())
        .collect()
}

/// Samples ordered pairs `x ≤ x′` (along the annotation) and counts outputs
/// that drop by more than `tol`.
///
/// Each pair raises a random non-empty subset of the increasing features by
/// an amount in `(0, 1]` and lowers decreasing features likewise; free
/// features are left unchanged.
pub fn fuzz_monotone<T: Scalar>(
    net: &Network<T>,
    domain: &DomainBox,
    n_pairs: usize,
    tol: f64,
    seed: u64,
) -> Result<ViolationReport> {
    domain.validate(net.input_dim())?;
    let dirs = net.annotation().0.clone();
    let mono = net.annotation().monotone_indices();
    if mono.is_empty() {
        return Ok(ViolationReport {
            checked: n_pairs,
            ..ViolationReport::empty(tol)
        });
    }
    Ok(sampled(n_pairs, seed, tol, |rng| {
        let x = domain.sample(rng);
        let mut xp = x.clone();
        let forced = mono[rng.gen_range(0..mono.len())];
        for &i in &mono {
            if i == forced || rng.gen_bool(0.5) {
                let step = 1.0 - rng.gen::<f64>();
                xp[i] += if dirs[i] == Direction::Decreasing { -step } else { step };
            }
        }
        let (f0, f1) = (eval(net, &x), eval(net, &xp));
        let drop = f0
            .iter()
            .zip(&f1)
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max);
        (drop > tol || drop.is_nan()).then(|| Violation {
            excess: if drop.is_nan() { f64::INFINITY } else { drop - tol },
            fx: f0[0],
            fx_prime: f1[0],
            x,
            x_prime: xp,
        })
    }))
}

/// Samples points and flags input gradients of the first output with the
/// wrong sign on annotated features.
pub fn grad_sign_check<T: Scalar>(
    net: &Network<T>,
    domain: &DomainBox,
    n_points: usize,
    tol: f64,
    seed: u64,
) -> Result<ViolationReport> {
    domain.validate(net.input_dim())?;
    let dirs = net.annotation().0.clone();
    Ok(sampled(n_points, seed, tol, |rng| {
        let x = domain.sample(rng);
        let xt: Vec<T> = x.iter().map(|&v| T::lit(v)).collect();
        let g = net.input_grad(&xt).expect("dimensions checked");
        let mut worst: Option<(usize, f64)> = None;
        for (i, d) in dirs.iter().enumerate() {
            let gi = g[i].as_f64();
            let bad = match d {
                Direction::Increasing => -gi,
                Direction::Decreasing => gi,
                Direction::Free => continue,
            };
            if (bad > tol || gi.is_nan()) && worst.map_or(true, |(_, b)| bad > b) {
                worst = Some((i, if gi.is_nan() { f64::INFINITY } else { bad }));
            }
        }
        worst.map(|(i, bad)| {
            let mut xp = x.clone();
            xp[i] += 1.0;
            Violation {
                fx: eval(net, &x)[0],
                fx_prime: g[i].as_f64(),
                excess: bad - tol,
                x,
                x_prime: xp,
            }
        })
    }))
}

/// Flags pairs where the first output at the midpoint lies above the chord
/// by more than `tol`.
pub fn midpoint_convexity_check<T: Scalar>(
    net: &Network<T>,
    domain: &DomainBox,
    n_pairs: usize,
    tol: f64,
    seed: u64,
) -> Result<ViolationReport> {
    domain.validate(net.input_dim())?;
    Ok(sampled(n_pairs, seed, tol, |rng| {
        let a = domain.sample(rng);
        let b = domain.sample(rng);
        let m: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
        let fm = eval(net, &m)[0];
        let chord = 0.5 * (eval(net, &a)[0] + eval(net, &b)[0]);
        let gap = fm - chord;
        (gap > tol).then(|| Violation {
            x: a,
            x_prime: b,
            fx: fm,
            fx_prime: chord,
            excess: gap - tol,
        })
    }))
}

/// Largest absolute output difference between two networks over sampled
/// points.
pub fn equivalence_oracle<T: Scalar>(
    a: &Network<T>,
    b: &Network<T>,
    domain: &DomainBox,
    n_points: usize,
    seed: u64,
) -> Result<f64> {
    check_dim("equivalence input", a.input_dim(), b.input_dim())?;
    check_dim("equivalence output", a.output_dim(), b.output_dim())?;
    domain.validate(a.input_dim())?;
    let chunks = n_points.div_ceil(CHUNK);
    let worst = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let mut worst = 0.0_f64;
            for _ in 0..CHUNK.min(n_points - c * CHUNK) {
                let x = domain.sample(&mut rng);
                for (p, q) in eval(a, &x).iter().zip(eval(b, &x)) {
                    let d = (p - q).abs();
                    worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

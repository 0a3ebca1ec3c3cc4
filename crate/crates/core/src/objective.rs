//! Hinge-loss primal/dual objectives and the single-coordinate dual steps.
//!
//! Primal: `P(w) = λ/2 ‖w‖² + 1/N Σ l(yᵢ, xᵢᵀw)`.
//! Dual:   `D(α) = -λ/2 ‖A α‖² - 1/N Σ l*(-αᵢ)` with `A α = 1/(λN) Σ αᵢ xᵢ`.
//!
//! For the hinge loss `l(z) = max(0, 1 - y z)` the conjugate evaluated at
//! `-a` is `l*(-a) = -y a` when `y a ∈ [0, 1]` and `+∞` otherwise, so the dual
//! box is `y αᵢ ∈ [0, 1]`.

use serde::{Deserialize, Serialize};

use crate::data::SparseDataset;
use crate::error::{config, Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization<T> {
    lambda: T,
    n: usize,
}

impl<T: Scalar> Regularization<T> {
    pub fn new(lambda: T, n: usize) -> Result<Self> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(config("lambda must be positive and finite"));
        }
        if n == 0 {
            return Err(config("regularization needs at least one sample"));
        }
        Ok(Self { lambda, n })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `λ N`
    pub fn lambda_n(&self) -> T {
        self.lambda * T::from_count(self.n)
    }
}

pub fn hinge_loss<T: Scalar>(y: T, z: T) -> T {
    (T::one() - y * z).max(T::zero())
}

/// `l*(-a)` for the hinge loss with label `y`. Returns `+∞` outside the box
/// `y a ∈ [0, 1]` (with a few ulps of slack for accumulated rounding).
pub fn hinge_conjugate_neg<T: Scalar>(y: T, a: T) -> T {
    let ya = y * a;
    let tol = T::feasibility_tol();
    if ya < -tol || ya > T::one() + tol {
        T::infinity()
    } else {
        -ya
    }
}

/// Element of `∂l(z)`. At the kink `y z = 1` this returns `-y`.
pub fn hinge_subgradient<T: Scalar>(y: T, z: T) -> T {
    if y * z > T::one() {
        T::zero()
    } else {
        -y
    }
}

/// Dual target direction `u = -∂l(z)`: the dual point the coordinate moves
/// toward (`y` for violated margins, `0` otherwise).
pub fn dual_direction<T: Scalar>(y: T, z: T) -> T {
    -hinge_subgradient(y, z)
}

pub fn is_dual_feasible<T: Scalar>(y: T, a: T) -> bool {
    hinge_conjugate_neg(y, a).is_finite()
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension { expected, found });
    }
    Ok(())
}

/// `1/N Σ max(0, 1 - yᵢ xᵢᵀw)`
pub fn mean_hinge_loss<T: Scalar>(w: &[T], ds: &SparseDataset<T>) -> Result<T> {
    check_dims(ds.n_features(), w.len())?;
    let total: T = ds
        .samples()
        .iter()
        .zip(ds.labels())
        .map(|(x, &y)| hinge_loss(y, x.dot(w)))
        .sum();
    Ok(total / T::from_count(ds.n_samples().max(1)))
}

pub fn primal_objective<T: Scalar>(w: &[T], ds: &SparseDataset<T>, reg: &Regularization<T>) -> Result<T> {
    let loss = mean_hinge_loss(w, ds)?;
    let sq: T = w.iter().map(|&v| v * v).sum();
    Ok(reg.lambda() * sq / T::lit(2.0) + loss)
}

/// `w = 1/(λN) Σ αᵢ xᵢ`
pub fn dual_to_primal<T: Scalar>(alpha: &[T], ds: &SparseDataset<T>, reg: &Regularization<T>) -> Result<Vec<T>> {
    check_dims(ds.n_samples(), alpha.len())?;
    let mut w = vec![T::zero(); ds.n_features()];
    for (x, &a) in ds.samples().iter().zip(alpha) {
        if !a.is_zero() {
            x.axpy_into(a, &mut w);
        }
    }
    let scale = T::one() / reg.lambda_n();
    for v in &mut w {
        *v *= scale;
    }
    Ok(w)
}

/// Dual objective given a precomputed `w = A α`. Returns `-∞` when any
/// coordinate leaves the dual box.
pub fn dual_objective_with_primal<T: Scalar>(
    alpha: &[T],
    w_of_alpha: &[T],
    ds: &SparseDataset<T>,
    reg: &Regularization<T>,
) -> Result<T> {
    check_dims(ds.n_samples(), alpha.len())?;
    check_dims(ds.n_features(), w_of_alpha.len())?;
    let mut conj = T::zero();
    for (&a, &y) in alpha.iter().zip(ds.labels()) {
        let c = hinge_conjugate_neg(y, a);
        if c.is_infinite() {
            return Ok(T::neg_infinity());
        }
        conj += c;
    }
    let sq: T = w_of_alpha.iter().map(|&v| v * v).sum();
    Ok(-reg.lambda() * sq / T::lit(2.0) - conj / T::from_count(ds.n_samples()))
}

pub fn dual_objective<T: Scalar>(alpha: &[T], ds: &SparseDataset<T>, reg: &Regularization<T>) -> Result<T> {
    let w = dual_to_primal(alpha, ds, reg)?;
    dual_objective_with_primal(alpha, &w, ds, reg)
}

/// Variants of the closed-form coordinate maximizer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedFormOptions {
    /// Drop the label from the margin term: `λN(1 - xᵀw)` instead of
    /// `λN(1 - y xᵀw)`. Only equivalent when labels are folded into features.
    #[serde(default)]
    pub literal_margin: bool,
    /// Use the true `‖xᵢ‖²` in the quadratic term instead of its bound 1.
    #[serde(default)]
    pub exact_norm: bool,
}

/// Exact maximizer over `Δ` of
/// `-l*(-(α + Δ)) - Δ·ip - q Δ² / (2λN)`,
/// i.e. `Δ = y·clip₀¹(yα + λN(1 - y·ip)/q) - α`, where `q = 1` by default and
/// `q = ‖x‖²` with [`ClosedFormOptions::exact_norm`].
pub fn closed_form_dual_step<T: Scalar>(
    y: T,
    alpha_old: T,
    ip: T,
    reg: &Regularization<T>,
    x_norm_sq: T,
    opts: ClosedFormOptions,
) -> Result<T> {
    if !is_dual_feasible(y, alpha_old) {
        return Err(Error::Contract(format!(
            "dual coordinate {alpha_old} is outside the box for label {y}"
        )));
    }
    let ya = (y * alpha_old).max(T::zero()).min(T::one());
    let slope = if opts.literal_margin { T::one() - ip } else { T::one() - y * ip };
    let q = if opts.exact_norm { x_norm_sq } else { T::one() };
    let target = if q > T::zero() {
        ya + reg.lambda_n() * slope / q
    } else if slope > T::zero() {
        T::one()
    } else if slope < T::zero() {
        T::zero()
    } else {
        ya
    };
    let target = target.max(T::zero()).min(T::one());
    Ok(y * target - alpha_old)
}

/// Inputs of the line-searched dual step: the coordinate moves from `alpha`
/// toward `u` by `s·c·(u - alpha)`, `s ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchInput<T> {
    pub y: T,
    pub alpha: T,
    /// Dual target, normally [`dual_direction`] at the current margin.
    pub u: T,
    /// Current margin `xᵢᵀw`.
    pub margin: T,
    /// Client step scale `c_k ∈ (0, 1]`.
    pub c: T,
    /// Outer step size `γ_t ∈ (0, 1]`.
    pub gamma: T,
}

pub const GOLDEN_TOL: f64 = 1e-8;

impl<T: Scalar> LineSearchInput<T> {
    /// Local ascent objective at step fraction `s`:
    /// `-l*(-(α + s c γ d)) - s c γ (xᵀw) d - γ²/(2λ) (s c d)²`, `d = u - α`,
    /// shifted so the value at `s = 0` is zero.
    pub fn objective(&self, s: T, reg: &Regularization<T>) -> T {
        let d = self.u - self.alpha;
        let step = s * self.c * d;
        let conj_new = hinge_conjugate_neg(self.y, self.alpha + self.gamma * step);
        if conj_new.is_infinite() {
            return T::neg_infinity();
        }
        let conj_old = hinge_conjugate_neg(self.y, self.alpha);
        let base = if conj_old.is_finite() { conj_old } else { T::zero() };
        -(conj_new - base)
            - self.gamma * self.margin * step
            - self.gamma * self.gamma / (T::lit(2.0) * reg.lambda()) * step * step
    }
}

/// Golden-section search for the best `s ∈ [0, 1]`, refined to `|Δs| ≤ 1e-8`
/// and compared against both endpoints. Returns `(s, Δα)` with
/// `Δα = s·c·(u - α)`.
pub fn line_search_dual_step<T: Scalar>(input: &LineSearchInput<T>, reg: &Regularization<T>) -> (T, T) {
    let f = |s: T| input.objective(s, reg);
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let tol = T::lit(GOLDEN_TOL).max(T::epsilon().sqrt());
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = (lo + hi) / T::lit(2.0);
    let mut best = (T::zero(), f(T::zero()));
    for s in [mid, T::one()] {
        let v = f(s);
        if v > best.1 {
            best = (s, v);
        }
    }
    let s = best.0;
    (s, s * input.c * (input.u - input.alpha))
}

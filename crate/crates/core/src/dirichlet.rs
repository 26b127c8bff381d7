//! Dirichlet posteriors over label distributions.

use crate::error::{PllError, Result};
use crate::numeric::special::{
    digamma_unchecked, gamma_cdf, gamma_ln_sample_shape_grad, ln_gamma_unchecked, trigamma_unchecked,
};
use crate::numeric::{sample_gamma_ln, Matrix, RngState, Tape, Var};

/// Lower bound applied to every concentration after the positivity map.
pub const ALPHA_FLOOR: f64 = 1e-4;

/// Per-example concentration vectors, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alphas: Matrix,
}

impl DirichletParams {
    pub fn new(alphas: Matrix) -> Result<Self> {
        for &a in alphas.as_slice() {
            if !(a.is_finite() && a >= ALPHA_FLOOR) {
                return Err(PllError::Domain {
                    func: "DirichletParams",
                    value: a,
                });
            }
        }
        Ok(DirichletParams { alphas })
    }

    pub fn alphas(&self) -> &Matrix {
        &self.alphas
    }

    pub fn rows(&self) -> usize {
        self.alphas.rows()
    }

    pub fn classes(&self) -> usize {
        self.alphas.cols()
    }
}

/// Row-stochastic matrix of label distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistributionMatrix {
    dist: Matrix,
}

impl LabelDistributionMatrix {
    pub const ROW_SUM_TOL: f64 = 1e-9;

    pub fn new(dist: Matrix) -> Result<Self> {
        for (i, row) in dist.rows_iter().enumerate() {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(PllError::Validation(format!(
                    "label distribution row {i} has an entry outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > Self::ROW_SUM_TOL {
                return Err(PllError::Validation(format!(
                    "label distribution row {i} sums to {s}"
                )));
            }
        }
        Ok(LabelDistributionMatrix { dist })
    }

    pub fn one_hot(labels: &[usize], classes: usize) -> Result<Self> {
        let mut m = Matrix::zeros(labels.len(), classes);
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(PllError::Validation(format!("label {y} out of range in row {i}")));
            }
            m[(i, y)] = 1.0;
        }
        Ok(LabelDistributionMatrix { dist: m })
    }

    pub fn dist(&self) -> &Matrix {
        &self.dist
    }

    pub fn into_matrix(self) -> Matrix {
        self.dist
    }

    pub fn rows(&self) -> usize {
        self.dist.rows()
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.dist.argmax_rows()
    }
}

/// Symmetric prior `Dir(ε, …, ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletPrior {
    epsilon: f64,
}

impl Default for DirichletPrior {
    fn default() -> Self {
        DirichletPrior { epsilon: 0.01 }
    }
}

impl DirichletPrior {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(PllError::Domain {
                func: "DirichletPrior",
                value: epsilon,
            });
        }
        Ok(DirichletPrior { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

pub fn dirichlet_mean(params: &DirichletParams) -> LabelDistributionMatrix {
    LabelDistributionMatrix {
        dist: params.alphas.row_normalized(),
    }
}

/// A reparameterized draw and what its backward pass needs.
#[derive(Debug, Clone)]
pub struct DirichletSample {
    dist: LabelDistributionMatrix,
    ln_gammas: Matrix,
    /// `∂ ln g_ij / ∂ α_ij` along the implicit path.
    ln_gamma_grad: Matrix,
}

impl DirichletSample {
    pub fn dist(&self) -> &LabelDistributionMatrix {
        &self.dist
    }

    pub fn ln_gammas(&self) -> &Matrix {
        &self.ln_gammas
    }

    pub fn ln_gamma_grad(&self) -> &Matrix {
        &self.ln_gamma_grad
    }

    /// Gradient wrt α of `Σ upstream ∘ d`.
    pub fn backward(&self, upstream: &Matrix) -> Result<Matrix> {
        let d = self.dist.dist();
        if upstream.shape() != d.shape() {
            return Err(PllError::shape(
                "DirichletSample::backward",
                format!("{:?}", d.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        let mut out = Matrix::zeros(d.rows(), d.cols());
        for i in 0..d.rows() {
            let (di, gi) = (d.row(i), upstream.row(i));
            let dot: f64 = di.iter().zip(gi).map(|(a, b)| a * b).sum();
            let dl = self.ln_gamma_grad.row(i);
            for (k, o) in out.row_mut(i).iter_mut().enumerate() {
                *o = di[k] * (gi[k] - dot) * dl[k];
            }
        }
        Ok(out)
    }

    /// `∂d_ij/∂α_ik` for row `i`, as a c×c matrix indexed `(j, k)`.
    pub fn row_jacobian(&self, i: usize) -> Matrix {
        let d = self.dist.dist().row(i);
        let dl = self.ln_gamma_grad.row(i);
        let c = d.len();
        Matrix::from_fn(c, c, |j, k| {
            let kron = if j == k { 1.0 } else { 0.0 };
            d[j] * (kron - d[k]) * dl[k]
        })
    }
}

fn entry_rng(base: u64, i: usize, j: usize, c: usize) -> RngState {
    RngState::with_stream(base, (i * c + j) as u64)
}

fn draw_row(alpha: &[f64], rngs: &mut [RngState], ln_g: &mut [f64]) -> Result<()> {
    for ((&a, rng), out) in alpha.iter().zip(rngs.iter_mut()).zip(ln_g.iter_mut()) {
        let mut v = sample_gamma_ln(a, rng)?;
        if !v.is_finite() {
            v = sample_gamma_ln(a.max(ALPHA_FLOOR), rng)?;
        }
        if !v.is_finite() {
            return Err(PllError::NonFinite(format!("gamma draw for shape {a}")));
        }
        *out = v;
    }
    Ok(())
}

fn draw_ln_gammas(params: &DirichletParams, rng: &mut RngState) -> Result<Matrix> {
    let base = rng.next_u64();
    let (n, c) = params.alphas.shape();
    let mut ln_g = Matrix::zeros(n, c);
    for i in 0..n {
        let mut rngs: Vec<RngState> = (0..c).map(|j| entry_rng(base, i, j, c)).collect();
        draw_row(params.alphas.row(i), &mut rngs, ln_g.row_mut(i))?;
    }
    Ok(ln_g)
}

/// One draw per row; each entry uses its own stream split from `rng`.
pub fn sample_dirichlet(params: &DirichletParams, rng: &mut RngState) -> Result<LabelDistributionMatrix> {
    let ln_g = draw_ln_gammas(params, rng)?;
    Ok(LabelDistributionMatrix {
        dist: ln_g.softmax_rows(),
    })
}

pub fn sample_dirichlet_with_grad(
    params: &DirichletParams,
    rng: &mut RngState,
) -> Result<DirichletSample> {
    let ln_g = draw_ln_gammas(params, rng)?;
    with_grad(params, ln_g)
}

/// Average of `m` draws.
pub fn average_samples(
    params: &DirichletParams,
    m: usize,
    rng: &mut RngState,
) -> Result<LabelDistributionMatrix> {
    if m == 0 {
        return Err(PllError::Validation("sample count must be at least 1".into()));
    }
    let mut acc = Matrix::zeros(params.rows(), params.classes());
    for _ in 0..m {
        acc.add_assign(sample_dirichlet(params, rng)?.dist())?;
    }
    Ok(LabelDistributionMatrix {
        dist: acc.scale(1.0 / m as f64).row_normalized(),
    })
}

fn with_grad(params: &DirichletParams, ln_g: Matrix) -> Result<DirichletSample> {
    let grad = Matrix::from_fn(ln_g.rows(), ln_g.cols(), |i, j| {
        gamma_ln_sample_shape_grad(ln_g[(i, j)], params.alphas[(i, j)])
    });
    if !grad.is_finite() {
        return Err(PllError::NonFinite("implicit gamma gradient".into()));
    }
    Ok(DirichletSample {
        dist: LabelDistributionMatrix {
            dist: ln_g.softmax_rows(),
        },
        ln_gammas: ln_g,
        ln_gamma_grad: grad,
    })
}

/// `ln z` with `P(α, z) = u`, by bisection on `ln z`.
fn gamma_ln_quantile(u: f64, alpha: f64) -> Result<f64> {
    let cdf = |t: f64| gamma_cdf(t.exp(), alpha);
    let (mut lo, mut hi) = (-700.0, alpha.max(1.0).ln() + 60.0);
    if cdf(lo)? >= u {
        return Err(PllError::NonFinite(format!("gamma quantile of {u} underflows at shape {alpha}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid)? < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Inverse-CDF draw from supplied uniforms `u ∈ (0, 1)`, one per entry.
///
/// Slow, but every coordinate is a smooth function of α for fixed `u`, so
/// finite differences of this path check the implicit gradient exactly.
pub fn sample_with_uniforms(params: &DirichletParams, u: &Matrix) -> Result<DirichletSample> {
    if u.shape() != params.alphas.shape() {
        return Err(PllError::shape(
            "sample_with_uniforms",
            format!("{:?}", params.alphas.shape()),
            format!("{:?}", u.shape()),
        ));
    }
    let mut ln_g = Matrix::zeros(u.rows(), u.cols());
    for i in 0..u.rows() {
        for j in 0..u.cols() {
            ln_g[(i, j)] = gamma_ln_quantile(u[(i, j)], params.alphas[(i, j)])?;
        }
    }
    with_grad(params, ln_g)
}

fn record(tape: &mut Tape, alpha: Var, s: DirichletSample) -> Result<(Var, DirichletSample)> {
    let ln_g = tape.pointwise(alpha, s.ln_gammas.clone(), s.ln_gamma_grad.clone())?;
    let d = tape.softmax(ln_g);
    Ok((d, s))
}

/// Records a reparameterized sample of `Dir(alpha)` on the tape.
pub fn sample_on_tape(tape: &mut Tape, alpha: Var, rng: &mut RngState) -> Result<(Var, DirichletSample)> {
    let params = DirichletParams::new(tape.value(alpha).clone())?;
    let s = sample_dirichlet_with_grad(&params, rng)?;
    record(tape, alpha, s)
}

/// [`sample_on_tape`] along the inverse-CDF path of fixed uniforms.
pub fn sample_on_tape_with_uniforms(tape: &mut Tape, alpha: Var, u: &Matrix) -> Result<(Var, DirichletSample)> {
    let params = DirichletParams::new(tape.value(alpha).clone())?;
    let s = sample_with_uniforms(&params, u)?;
    record(tape, alpha, s)
}

fn kl_row(alpha: &[f64], eps: f64) -> f64 {
    let c = alpha.len() as f64;
    let s: f64 = alpha.iter().sum();
    let psi_s = digamma_unchecked(s);
    let mut v = ln_gamma_unchecked(s) - ln_gamma_unchecked(c * eps) + c * ln_gamma_unchecked(eps);
    for &a in alpha {
        v += -ln_gamma_unchecked(a) + (a - eps) * (digamma_unchecked(a) - psi_s);
    }
    v.max(0.0)
}

/// `KL(Dir(α_i) ‖ Dir(ε))` for every row.
pub fn kl_rows(params: &DirichletParams, prior: &DirichletPrior) -> Vec<f64> {
    params
        .alphas
        .rows_iter()
        .map(|r| kl_row(r, prior.epsilon))
        .collect()
}

/// Summed over rows.
pub fn kl_dirichlet_to_prior(params: &DirichletParams, prior: &DirichletPrior) -> f64 {
    kl_rows(params, prior).iter().sum()
}

/// Gradient of [`kl_dirichlet_to_prior`] wrt every α.
pub fn kl_gradient(params: &DirichletParams, prior: &DirichletPrior) -> Matrix {
    let a = &params.alphas;
    let eps = prior.epsilon;
    let c = a.cols() as f64;
    let mut g = Matrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let row = a.row(i);
        let s: f64 = row.iter().sum();
        let common = (s - c * eps) * trigamma_unchecked(s);
        for (o, &ak) in g.row_mut(i).iter_mut().zip(row) {
            *o = (ak - eps) * trigamma_unchecked(ak) - common;
        }
    }
    g
}

/// `scale · KL` recorded on the tape.
pub fn kl_on_tape(tape: &mut Tape, alpha: Var, prior: &DirichletPrior, scale: f64) -> Result<Var> {
    let params = DirichletParams::new(tape.value(alpha).clone())?;
    let value = scale * kl_dirichlet_to_prior(&params, prior);
    let local = kl_gradient(&params, prior).scale(scale);
    tape.reduce(alpha, value, local)
}

//! Training losses, in plain form and recorded on a tape.

use serde::{Deserialize, Serialize};

use crate::dirichlet::{DirichletParams, LabelDistributionMatrix};
use crate::error::{PllError, Result};
use crate::numeric::{digamma, sigmoid, trigamma, Matrix, Tape, Var};

/// Floor inside `ln d` for the compatibility loss.
pub const LOG_FLOOR: f64 = 1e-12;
const MASS_FLOOR: f64 = 1e-12;

fn check_same(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(PllError::shape(op, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

/// Renormalizes `scores` over each row's candidates; uniform when the mass vanishes.
fn renormalize_on_candidates(op: &'static str, scores: &Matrix, candidates: &Matrix) -> Result<Matrix> {
    check_same(op, scores, candidates)?;
    let mut out = Matrix::zeros(scores.rows(), scores.cols());
    for i in 0..scores.rows() {
        let (s, c) = (scores.row(i), candidates.row(i));
        let count = c.iter().filter(|&&v| v > 0.0).count();
        if count == 0 {
            return Err(PllError::Validation(format!("{op}: row {i} has an empty candidate set")));
        }
        let mass: f64 = s.iter().zip(c).filter(|(_, &ci)| ci > 0.0).map(|(v, _)| v).sum();
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            if c[j] > 0.0 {
                *o = if mass < MASS_FLOOR { 1.0 / count as f64 } else { s[j] / mass };
            }
        }
    }
    Ok(out)
}

/// `ζ_j(x_i) = f_j / Σ_{k∈S_i} f_k` on candidates, zero elsewhere.
pub fn candidate_confidence(preds: &Matrix, candidates: &Matrix) -> Result<Matrix> {
    renormalize_on_candidates("candidate_confidence", preds, candidates)
}

/// `−(1/n) Σ w ∘ ln p`.
fn weighted_cross_entropy(preds: &Matrix, weights: &Matrix) -> Result<f64> {
    check_same("weighted_cross_entropy", preds, weights)?;
    let n = preds.rows().max(1) as f64;
    let s: f64 = preds
        .as_slice()
        .iter()
        .zip(weights.as_slice())
        .filter(|(_, &w)| w != 0.0)
        .map(|(&p, &w)| -w * p.ln())
        .sum();
    Ok(s / n)
}

pub fn weighted_min_loss(preds: &Matrix, candidates: &Matrix) -> Result<f64> {
    let zeta = candidate_confidence(preds, candidates)?;
    weighted_cross_entropy(preds, &zeta)
}

/// Risk weights `d_ij / Σ_{k∈S_i} d_ik` on candidates.
pub fn risk_weights(candidates: &Matrix, d: &LabelDistributionMatrix) -> Result<Matrix> {
    renormalize_on_candidates("risk_weights", d.dist(), candidates)
}

pub fn risk_estimator(preds: &Matrix, candidates: &Matrix, d: &LabelDistributionMatrix) -> Result<f64> {
    let w = risk_weights(candidates, d)?;
    weighted_cross_entropy(preds, &w)
}

/// `−(1/n) Σ ζ ∘ ln max(d, 1e-12)`.
pub fn compatibility_loss(d: &LabelDistributionMatrix, zeta: &Matrix) -> Result<f64> {
    check_same("compatibility_loss", d.dist(), zeta)?;
    let n = zeta.rows().max(1) as f64;
    let s: f64 = d
        .dist()
        .as_slice()
        .iter()
        .zip(zeta.as_slice())
        .filter(|(_, &z)| z != 0.0)
        .map(|(&dv, &z)| -z * dv.max(LOG_FLOOR).ln())
        .sum();
    Ok(s / n)
}

/// Compatibility loss averaged over `d ~ Dir(α)`: `−(1/n) Σ ζ_j (ψ(α_j) − ψ(Σα))`.
pub fn expected_compatibility(params: &DirichletParams, zeta: &Matrix) -> Result<f64> {
    Ok(expected_compatibility_parts(params, zeta)?.0 / zeta.rows().max(1) as f64)
}

/// Sum of the expected loss and its gradient with respect to α.
fn expected_compatibility_parts(params: &DirichletParams, zeta: &Matrix) -> Result<(f64, Matrix)> {
    let a = params.alphas();
    check_same("expected_compatibility", a, zeta)?;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let s: f64 = a.row(i).iter().sum();
        let z_mass: f64 = zeta.row(i).iter().sum();
        let (psi_s, tri_s) = (digamma(s)?, trigamma(s)?);
        for (j, o) in grad.row_mut(i).iter_mut().enumerate() {
            let (aj, z) = (a[(i, j)], zeta[(i, j)]);
            if z != 0.0 {
                value -= z * (digamma(aj)? - psi_s);
                *o = -z * trigamma(aj)?;
            }
            *o += z_mass * tri_s;
        }
    }
    Ok((value, grad))
}

/// `scale · Σ` of the expected compatibility loss, as a function of α.
pub fn expected_compatibility_on_tape(tape: &mut Tape, alpha: Var, zeta: &Matrix, scale: f64) -> Result<Var> {
    let params = DirichletParams::new(tape.value(alpha).clone())?;
    let (value, grad) = expected_compatibility_parts(&params, zeta)?;
    tape.reduce(alpha, scale * value, grad.scale(scale))
}

/// Monte-Carlo log-likelihood estimate, split into its label and graph parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub label: f64,
    pub graph: f64,
}

impl Reconstruction {
    pub fn total(&self) -> f64 {
        self.label + self.graph
    }
}

/// Bernoulli log-likelihood of `logical` under `tau`, summed.
pub fn bernoulli_log_likelihood(logical: &Matrix, tau: &Matrix) -> Result<f64> {
    check_same("bernoulli_log_likelihood", logical, tau)?;
    let mut s = 0.0;
    for (&l, &t) in logical.as_slice().iter().zip(tau.as_slice()) {
        if !(t > 0.0 && t < 1.0) {
            return Err(PllError::Domain {
                func: "reconstruction_term(tau)",
                value: t,
            });
        }
        s += l * t.ln() + (1.0 - l) * (-t).ln_1p();
    }
    Ok(s)
}

/// `−‖A − σ(D Dᵀ)‖²_F`.
pub fn graph_log_likelihood(adjacency: &Matrix, d: &LabelDistributionMatrix) -> Result<f64> {
    let dd = d.dist().matmul_transpose_b(d.dist())?;
    check_same("graph_log_likelihood", adjacency, &dd)?;
    Ok(-adjacency
        .as_slice()
        .iter()
        .zip(dd.as_slice())
        .map(|(&a, &x)| (a - sigmoid(x)).powi(2))
        .sum::<f64>())
}

/// Average over `samples` of `(τ, d)` pairs.
pub fn reconstruction_term(
    logical: &Matrix,
    adjacency: &Matrix,
    samples: &[(Matrix, LabelDistributionMatrix)],
) -> Result<Reconstruction> {
    if samples.is_empty() {
        return Err(PllError::Validation("reconstruction needs at least one sample".into()));
    }
    let m = samples.len() as f64;
    let mut out = Reconstruction { label: 0.0, graph: 0.0 };
    for (tau, d) in samples {
        out.label += bernoulli_log_likelihood(logical, tau)? / m;
        out.graph += graph_log_likelihood(adjacency, d)? / m;
    }
    Ok(out)
}

/// `λ·compat − (recon − kl)`.
pub fn le_objective(kl: f64, recon: f64, compat: f64, lambda: f64) -> f64 {
    lambda * compat - (recon - kl)
}

/// `−scale · Σ w ∘ log_softmax(logits)`, with `w` held constant.
pub fn weighted_nll_on_tape(tape: &mut Tape, logits: Var, weights: &Matrix, scale: f64) -> Result<Var> {
    let lp = tape.log_softmax(logits);
    let w = tape.input(weights.clone());
    let p = tape.mul(lp, w)?;
    let s = tape.sum(p);
    Ok(tape.scale(s, -scale))
}

/// `−scale · Σ ζ ∘ ln max(d, 1e-12)`.
pub fn compatibility_on_tape(tape: &mut Tape, d: Var, zeta: &Matrix, scale: f64) -> Result<Var> {
    let ld = tape.log_floored(d, LOG_FLOOR);
    let z = tape.input(zeta.clone());
    let p = tape.mul(ld, z)?;
    let s = tape.sum(p);
    Ok(tape.scale(s, -scale))
}

/// Bernoulli log-likelihood from pre-sigmoid outputs `u`, via `ln σ(u) = −softplus(−u)`.
pub fn bernoulli_on_tape(tape: &mut Tape, u: Var, logical: &Matrix) -> Result<Var> {
    let neg = tape.scale(u, -1.0);
    let sp_neg = tape.softplus(neg);
    let sp_pos = tape.softplus(u);
    let l = tape.input(logical.clone());
    let not_l = tape.input(logical.map(|v| 1.0 - v));
    let a = tape.mul(sp_neg, l)?;
    let b = tape.mul(sp_pos, not_l)?;
    let ab = tape.add(a, b)?;
    let s = tape.sum(ab);
    Ok(tape.scale(s, -1.0))
}

/// `−‖A − σ(D Dᵀ)‖²_F`.
pub fn graph_on_tape(tape: &mut Tape, d: Var, adjacency: &Matrix) -> Result<Var> {
    let dd = tape.matmul_transpose_b(d, d)?;
    let s = tape.sigmoid(dd);
    let a = tape.input(adjacency.clone());
    let diff = tape.sub(a, s)?;
    let f = tape.frobenius_sq(diff);
    Ok(tape.scale(f, -1.0))
}

/// Per-step loss values; `total` is the combination the optimizer saw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub min_loss: f64,
    pub kl: f64,
    pub recon_label: f64,
    pub recon_graph: f64,
    pub compat: f64,
    pub risk: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "step,total,min_loss,kl,recon_label,recon_graph,compat,risk";

    /// `min_loss + risk + λ·compat + kl − recon_label − recon_graph`.
    pub fn combine(&self, lambda: f64) -> f64 {
        self.min_loss + self.risk + le_objective(self.kl, self.recon_label + self.recon_graph, self.compat, lambda)
    }

    pub fn with_total(mut self, lambda: f64) -> Self {
        self.total = self.combine(lambda);
        self
    }

    pub fn is_finite(&self) -> bool {
        [
            self.total,
            self.min_loss,
            self.kl,
            self.recon_label,
            self.recon_graph,
            self.compat,
            self.risk,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn csv_row(&self, step: usize) -> String {
        format!(
            "{step},{},{},{},{},{},{},{}",
            self.total, self.min_loss, self.kl, self.recon_label, self.recon_graph, self.compat, self.risk
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ldm(rows: &[&[f64]]) -> LabelDistributionMatrix {
        LabelDistributionMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn confidence_examples() {
        let f = Matrix::from_rows(&[[0.5, 0.3, 0.2]]).unwrap();
        let s = Matrix::from_rows(&[[1.0, 1.0, 0.0]]).unwrap();
        let z = candidate_confidence(&f, &s).unwrap();
        assert!((z[(0, 0)] - 0.625).abs() < 1e-15 && (z[(0, 1)] - 0.375).abs() < 1e-15);
        assert_eq!(z[(0, 2)], 0.0);
        let u = Matrix::filled(1, 4, 0.25);
        let s3 = Matrix::from_rows(&[[1.0, 0.0, 1.0, 1.0]]).unwrap();
        let z = candidate_confidence(&u, &s3).unwrap();
        assert_eq!(z.row(0), &[1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn confidence_underflow_falls_back_to_uniform() {
        let f = Matrix::from_rows(&[[0.0, 0.0, 1.0]]).unwrap();
        let s = Matrix::from_rows(&[[1.0, 1.0, 0.0]]).unwrap();
        assert_eq!(candidate_confidence(&f, &s).unwrap().row(0), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn empty_candidate_row_is_an_error() {
        let f = Matrix::filled(1, 2, 0.5);
        assert!(weighted_min_loss(&f, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn min_loss_examples() {
        let u = Matrix::filled(1, 2, 0.5);
        let both = Matrix::filled(1, 2, 1.0);
        assert!((weighted_min_loss(&u, &both).unwrap() - 2f64.ln()).abs() < 1e-15);
        let f = Matrix::from_rows(&[[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]]).unwrap();
        let single = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let ce = -(0.2f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((weighted_min_loss(&f, &single).unwrap() - ce).abs() < 1e-15);
        let sharp = Matrix::from_rows(&[[0.999, 0.0005, 0.0005]]).unwrap();
        let two = Matrix::from_rows(&[[1.0, 1.0, 0.0]]).unwrap();
        assert!((weighted_min_loss(&sharp, &two).unwrap() + 0.999f64.ln()).abs() < 1e-2);
    }

    #[test]
    fn reconstruction_example() {
        let l = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let tau = Matrix::from_rows(&[[0.7, 0.2]]).unwrap();
        let a = Matrix::identity(1);
        let d = ldm(&[&[0.9, 0.1]]);
        let r = reconstruction_term(&l, &a, &[(tau.clone(), d.clone())]).unwrap();
        let want = 0.7f64.ln() + 0.8f64.ln() - (1.0 - sigmoid(0.82)).powi(2);
        assert!((r.total() - want).abs() < 1e-12);
        assert!((r.total() + 0.6733).abs() < 1e-4);

        let d2 = ldm(&[&[0.4, 0.6]]);
        let tau2 = Matrix::from_rows(&[[0.55, 0.35]]).unwrap();
        let r2 = reconstruction_term(&l, &a, &[(tau2.clone(), d2.clone())]).unwrap();
        let both = reconstruction_term(&l, &a, &[(tau, d), (tau2, d2)]).unwrap();
        assert!((both.total() - 0.5 * (r.total() + r2.total())).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_rejects_tau_on_boundary() {
        let l = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let tau = Matrix::from_rows(&[[1.0, 0.2]]).unwrap();
        assert!(bernoulli_log_likelihood(&l, &tau).is_err());
    }

    #[test]
    fn compatibility_examples() {
        let z = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!((compatibility_loss(&ldm(&[&[0.5, 0.5]]), &z).unwrap() - 2f64.ln()).abs() < 1e-15);
        let zeta = Matrix::from_rows(&[[0.2, 0.3, 0.5, 0.0]]).unwrap();
        let d = ldm(&[&[0.2, 0.3, 0.5, 0.0]]);
        let entropy = -(0.2f64 * 0.2f64.ln() + 0.3 * 0.3f64.ln() + 0.5 * 0.5f64.ln());
        assert!((compatibility_loss(&d, &zeta).unwrap() - entropy).abs() < 1e-12);
        let half = Matrix::from_rows(&[[0.5, 0.5, 0.0, 0.0]]).unwrap();
        let a = compatibility_loss(&ldm(&[&[0.3, 0.3, 0.1, 0.3]]), &half).unwrap();
        let b = compatibility_loss(&ldm(&[&[0.3, 0.3, 0.35, 0.05]]), &half).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expected_compatibility_matches_sampling() {
        use crate::dirichlet::sample_dirichlet;
        use crate::numeric::RngState;
        let params = DirichletParams::new(Matrix::from_rows(&[[0.7, 2.0, 1.5, 0.3]]).unwrap()).unwrap();
        let zeta = Matrix::from_rows(&[[0.25, 0.75, 0.0, 0.0]]).unwrap();
        let exact = expected_compatibility(&params, &zeta).unwrap();
        let mut rng = RngState::new(11);
        let draws: Vec<f64> = (0..40_000)
            .map(|_| compatibility_loss(&sample_dirichlet(&params, &mut rng).unwrap(), &zeta).unwrap())
            .collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let se = (var / draws.len() as f64).sqrt();
        assert!((m - exact).abs() < 4.0 * se, "{m} vs {exact} (se {se})");
    }

    #[test]
    fn expected_compatibility_gradient() {
        use crate::numeric::{grad_check, ParamStore};
        let mut s = ParamStore::new();
        s.add("alpha", Matrix::from_rows(&[[0.4, 1.1, 3.0], [2.5, 0.05, 0.9]]).unwrap());
        let zeta = Matrix::from_rows(&[[0.6, 0.4, 0.0], [0.0, 0.1, 0.9]]).unwrap();
        let err = grad_check(&s, 1e-7, |t, p| {
            let a = t.param(p, 0);
            expected_compatibility_on_tape(t, a, &zeta, 0.5)
        })
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn le_objective_examples() {
        assert_eq!(le_objective(0.5, -1.0, 2.0, 1.0), 3.5);
        assert_eq!(le_objective(0.5, -1.0, 2.0, 0.0), -(-1.0 - 0.5));
        assert!((le_objective(0.75, -1.0, 2.0, 1.0) - 3.75).abs() < 1e-15);
    }

    #[test]
    fn risk_examples() {
        let f = Matrix::from_rows(&[[0.5, 0.25, 0.25]]).unwrap();
        let s = Matrix::from_rows(&[[1.0, 1.0, 0.0]]).unwrap();
        let r = risk_estimator(&f, &s, &ldm(&[&[0.6, 0.2, 0.2]])).unwrap();
        let want = 0.75 * 2f64.ln() + 0.25 * 4f64.ln();
        assert!((r - want).abs() < 1e-15);
        assert!((r - 0.8664).abs() < 1e-4);
        let single = Matrix::from_rows(&[[0.0, 1.0, 0.0]]).unwrap();
        let r1 = risk_estimator(&f, &single, &ldm(&[&[0.9, 0.05, 0.05]])).unwrap();
        assert!((r1 - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn tape_forms_match_plain() {
        let logits = Matrix::from_rows(&[[0.3, -0.2, 1.0], [2.0, 0.1, -1.0]]).unwrap();
        let preds = logits.softmax_rows();
        let s = Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]]).unwrap();
        let zeta = candidate_confidence(&preds, &s).unwrap();
        let mut t = Tape::new();
        let lv = t.input(logits.clone());
        let nll = weighted_nll_on_tape(&mut t, lv, &zeta, 0.5).unwrap();
        assert!((t.scalar(nll) - weighted_min_loss(&preds, &s).unwrap()).abs() < 1e-14);

        let d = ldm(&[&[0.2, 0.7, 0.1], &[0.5, 0.25, 0.25]]);
        let dv = t.input(d.dist().clone());
        let comp = compatibility_on_tape(&mut t, dv, &zeta, 0.5).unwrap();
        assert!((t.scalar(comp) - compatibility_loss(&d, &zeta).unwrap()).abs() < 1e-14);

        let u = Matrix::from_rows(&[[0.4, -2.0, 0.0], [5.0, -0.3, 1.2]]).unwrap();
        let uv = t.input(u.clone());
        let bl = bernoulli_on_tape(&mut t, uv, &s).unwrap();
        let plain = bernoulli_log_likelihood(&s, &u.map(sigmoid)).unwrap();
        assert!((t.scalar(bl) - plain).abs() < 1e-12);

        let a = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let g = graph_on_tape(&mut t, dv, &a).unwrap();
        assert!((t.scalar(g) - graph_log_likelihood(&a, &d).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn loss_report_combination() {
        let r = LossReport {
            kl: 0.5,
            recon_label: -0.25,
            recon_graph: -0.75,
            compat: 2.0,
            risk: 1.0,
            ..LossReport::default()
        }
        .with_total(2.0);
        assert!((r.total - (1.0 + 4.0 + 0.5 + 1.0)).abs() < 1e-12);
        assert_eq!(r.csv_row(3).split(',').count(), LossReport::CSV_HEADER.split(',').count());
    }
}

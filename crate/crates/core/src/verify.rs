//! Self-checks of the numerical core against independent references.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::dirichlet::{
    kl_dirichlet_to_prior, kl_on_tape, sample_with_uniforms, DirichletParams, DirichletPrior,
};
use crate::error::{PllError, Result};
use crate::graph::{build_knn_graph, AffinityGraph};
use crate::numeric::{grad_check, log_gamma, Matrix, ParamStore, RngState, Tape, Var};
use crate::objectives::{
    bernoulli_on_tape, compatibility_on_tape, expected_compatibility_on_tape, graph_on_tape,
    weighted_nll_on_tape,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Kl,
    ImplicitGrad,
    Losses,
    Graph,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Kl, Suite::ImplicitGrad, Suite::Losses, Suite::Graph];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Kl => "kl",
            Suite::ImplicitGrad => "implicit-grad",
            Suite::Losses => "losses",
            Suite::Graph => "graph",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = PllError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| PllError::Config(format!("unknown suite '{s}'")))
    }
}

/// One comparison; passes when `achieved < tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub suite: Suite,
    pub name: String,
    pub tolerance: f64,
    pub achieved: f64,
    pub passed: bool,
}

impl OracleResult {
    fn new(suite: Suite, name: impl Into<String>, tolerance: f64, achieved: f64) -> Self {
        OracleResult {
            suite,
            name: name.into(),
            tolerance,
            achieved,
            passed: achieved < tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random cases per suite.
    pub cases: usize,
    /// Monte-Carlo draws per KL case.
    pub kl_samples: usize,
    /// Deliberately corrupts the analytic side of this suite.
    pub fault: Option<Suite>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            cases: 20,
            kl_samples: 200_000,
            fault: None,
        }
    }
}

pub fn run(suites: &[Suite], opts: &VerifyOptions) -> Result<Vec<OracleResult>> {
    let mut out = Vec::new();
    for &s in suites {
        let faulty = opts.fault == Some(s);
        let mut rng = RngState::with_stream(opts.seed, 100 + s as u64);
        out.extend(match s {
            Suite::Kl => kl_suite(opts.cases, opts.kl_samples, faulty, &mut rng)?,
            Suite::ImplicitGrad => implicit_grad_suite(opts.cases, faulty, &mut rng)?,
            Suite::Losses => losses_suite(faulty, &mut rng)?,
            Suite::Graph => graph_suite(opts.cases, faulty, &mut rng)?,
        });
    }
    Ok(out)
}

/// Random Dirichlet parameters and prior for one KL case.
pub fn kl_case(rng: &mut RngState) -> (Vec<f64>, f64) {
    let c = [2, 5, 10][rng.below(3)];
    let alpha = (0..c).map(|_| rng.uniform_range(0.5, 5.0)).collect();
    (alpha, rng.uniform_range(0.05, 1.0))
}

fn ln_dirichlet_density(ln_d: &[f64], alpha: &[f64]) -> f64 {
    let s: f64 = alpha.iter().sum();
    let ln_b = alpha.iter().map(|&a| log_gamma(a).expect("positive shape")).sum::<f64>()
        - log_gamma(s).expect("positive shape");
    alpha.iter().zip(ln_d).map(|(&a, &l)| (a - 1.0) * l).sum::<f64>() - ln_b
}

/// Mean and standard error of `ln q(d) − ln p(d)` over draws of `q`, sampled with an independent Gamma generator.
pub fn kl_monte_carlo(alpha: &[f64], eps: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gammas: Vec<Gamma<f64>> = alpha.iter().map(|&a| Gamma::new(a, 1.0).expect("valid shape")).collect();
    let prior = vec![eps; alpha.len()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut ln_d = vec![0.0; alpha.len()];
    for _ in 0..draws {
        let g: Vec<f64> = gammas.iter().map(|d| d.sample(&mut rng)).collect();
        let ln_total = g.iter().sum::<f64>().ln();
        for (o, v) in ln_d.iter_mut().zip(&g) {
            *o = v.ln() - ln_total;
        }
        let x = ln_dirichlet_density(&ln_d, alpha) - ln_dirichlet_density(&ln_d, &prior);
        sum += x;
        sum_sq += x * x;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn kl_suite(cases: usize, draws: usize, faulty: bool, rng: &mut RngState) -> Result<Vec<OracleResult>> {
    (0..cases)
        .map(|i| {
            let (alpha, eps) = kl_case(rng);
            let params = DirichletParams::new(Matrix::row_vector(&alpha))?;
            let mut analytic = kl_dirichlet_to_prior(&params, &DirichletPrior::new(eps)?);
            if faulty {
                analytic += 0.05;
            }
            let (mc, se) = kl_monte_carlo(&alpha, eps, draws, rng.next_u64());
            Ok(OracleResult::new(
                Suite::Kl,
                format!("case {i} c={} eps={eps:.3}: standard errors", alpha.len()),
                3.0,
                (analytic - mc).abs() / se,
            ))
        })
        .collect()
}

/// Largest `|analytic − fd| / max(1, |fd|)` of `∂(w·d)/∂α` along fixed uniforms.
pub fn implicit_grad_error(alpha: &[f64], u: &[f64], w: &[f64], h: f64, faulty: bool) -> Result<f64> {
    let c = alpha.len();
    let um = Matrix::row_vector(u);
    let at = |a: &[f64]| -> Result<f64> {
        let s = sample_with_uniforms(&DirichletParams::new(Matrix::row_vector(a))?, &um)?;
        Ok(s.dist().dist().row(0).iter().zip(w).map(|(d, w)| d * w).sum())
    };
    let s = sample_with_uniforms(&DirichletParams::new(Matrix::row_vector(alpha))?, &um)?;
    let mut analytic = s.backward(&Matrix::row_vector(w))?;
    if faulty {
        analytic = analytic.scale(1.01);
    }
    let mut worst: f64 = 0.0;
    for k in 0..c {
        let step = h * alpha[k];
        let mut hi = alpha.to_vec();
        let mut lo = alpha.to_vec();
        hi[k] += step;
        lo[k] -= step;
        let fd = (at(&hi)? - at(&lo)?) / (2.0 * step);
        worst = worst.max((analytic[(0, k)] - fd).abs() / fd.abs().max(1.0));
    }
    Ok(worst)
}

fn implicit_grad_suite(cases: usize, faulty: bool, rng: &mut RngState) -> Result<Vec<OracleResult>> {
    (0..cases)
        .map(|i| {
            let c = 2 + rng.below(5);
            let alpha: Vec<f64> = (0..c).map(|_| rng.uniform_range(0.3, 5.0)).collect();
            let u: Vec<f64> = (0..c).map(|_| rng.uniform_range(0.05, 0.95)).collect();
            let w: Vec<f64> = (0..c).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let err = implicit_grad_error(&alpha, &u, &w, 1e-5, faulty)?;
            Ok(OracleResult::new(Suite::ImplicitGrad, format!("case {i} c={c}: relative error"), 1e-3, err))
        })
        .collect()
}

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut RngState) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(lo, hi))
}

fn random_candidates(n: usize, c: usize, rng: &mut RngState) -> Matrix {
    let mut m = Matrix::zeros(n, c);
    for i in 0..n {
        m[(i, rng.below(c))] = 1.0;
        for j in 0..c {
            if rng.bernoulli(0.4) {
                m[(i, j)] = 1.0;
            }
        }
    }
    m
}

type TapeLoss = Box<dyn Fn(&mut Tape, Var) -> Result<Var>>;

fn losses_suite(faulty: bool, rng: &mut RngState) -> Result<Vec<OracleResult>> {
    let n = 2 + rng.below(7);
    let c = 2 + rng.below(4);
    let cands = random_candidates(n, c, rng);
    let weights = random_matrix(n, c, 0.0, 1.0, rng).hadamard(&cands)?.row_normalized();
    let adjacency = Matrix::from_fn(n, n, |i, j| if i == j || rng.bernoulli(0.3) { 1.0 } else { 0.0 });
    let prior = DirichletPrior::new(rng.uniform_range(0.01, 1.0))?;
    let cases: Vec<(&str, Matrix, TapeLoss)> = vec![
        (
            "weighted_nll",
            random_matrix(n, c, -2.0, 2.0, rng),
            Box::new(move |t, x| weighted_nll_on_tape(t, x, &weights, 0.5)),
        ),
        (
            "compatibility",
            random_matrix(n, c, 0.05, 1.0, rng),
            Box::new({
                let zeta = random_matrix(n, c, 0.0, 1.0, rng).hadamard(&cands)?.row_normalized();
                move |t, x| {
                    let d = t.row_normalize(x);
                    compatibility_on_tape(t, d, &zeta, 0.5)
                }
            }),
        ),
        (
            "expected_compatibility",
            random_matrix(n, c, 0.2, 4.0, rng),
            Box::new({
                let zeta = random_matrix(n, c, 0.0, 1.0, rng).hadamard(&cands)?.row_normalized();
                move |t, x| expected_compatibility_on_tape(t, x, &zeta, 0.5)
            }),
        ),
        (
            "bernoulli",
            random_matrix(n, c, -3.0, 3.0, rng),
            Box::new({
                let l = cands.clone();
                move |t, x| bernoulli_on_tape(t, x, &l)
            }),
        ),
        (
            "graph",
            random_matrix(n, c, 0.05, 1.0, rng),
            Box::new(move |t, x| {
                let d = t.row_normalize(x);
                graph_on_tape(t, d, &adjacency)
            }),
        ),
        (
            "kl",
            random_matrix(n, c, 0.2, 4.0, rng),
            Box::new(move |t, x| kl_on_tape(t, x, &prior, 0.5)),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, x0, f)| {
            let mut store = ParamStore::new();
            store.add("x", x0);
            let err = if faulty {
                let g = crate::numeric::analytic_gradients(&store, &|t: &mut Tape, p: &ParamStore| {
                    let x = t.param(p, 0);
                    f(t, x)
                })?;
                let bumped: Vec<Matrix> = g.iter().map(|m| m.map(|v| v * 1.01 + 1e-3)).collect();
                crate::numeric::compare_gradients(&store, &bumped, 1e-6, |t, p| {
                    let x = t.param(p, 0);
                    f(t, x)
                })?
            } else {
                grad_check(&store, 1e-6, |t, p| {
                    let x = t.param(p, 0);
                    f(t, x)
                })?
            };
            Ok(OracleResult::new(Suite::Losses, format!("{name} n={n} c={c}: gradient error"), 1e-4, err))
        })
        .collect()
}

/// `D^{-1/2} A D^{-1/2}` with `a_ij = 1` iff `i` is among the `k` nearest of `j` or `i = j`, by sorting.
pub fn brute_force_normalized(x: &Matrix, k: usize) -> Matrix {
    let n = x.rows();
    let mut a = Matrix::identity(n);
    for j in 0..n {
        let mut order: Vec<(f64, usize)> = (0..n)
            .filter(|&i| i != j)
            .map(|i| {
                let d: f64 = x.row(i).iter().zip(x.row(j)).map(|(p, q)| (p - q).powi(2)).sum();
                (d, i)
            })
            .collect();
        order.sort_by(|p, q| p.partial_cmp(q).expect("finite distances"));
        for &(_, i) in order.iter().take(k) {
            a[(i, j)] = 1.0;
        }
    }
    let deg = a.row_sums();
    Matrix::from_fn(n, n, |i, j| a[(i, j)] / (deg[i] * deg[j]).sqrt())
}

fn graph_suite(cases: usize, faulty: bool, rng: &mut RngState) -> Result<Vec<OracleResult>> {
    (0..cases)
        .map(|i| {
            let n = 5 + rng.below(40);
            let k = 1 + rng.below(4.min(n - 1));
            let x = random_matrix(n, 3, -1.0, 1.0, rng);
            let g: AffinityGraph = build_knn_graph(&x, k)?;
            let mut got = g.normalized_dense();
            if faulty {
                got[(0, 0)] += 1e-6;
            }
            let want = brute_force_normalized(&x, k);
            Ok(OracleResult::new(
                Suite::Graph,
                format!("case {i} n={n} k={k}: max abs deviation"),
                1e-12,
                got.sub(&want)?.max_abs(),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(fault: Option<Suite>) -> VerifyOptions {
        VerifyOptions {
            cases: 4,
            kl_samples: 100_000,
            fault,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn suites_pass() {
        let r = run(&Suite::ALL, &quick(None)).unwrap();
        assert!(r.iter().all(|o| o.passed), "{r:#?}");
        assert!(Suite::ALL.iter().all(|s| r.iter().any(|o| o.suite == *s)));
    }

    #[test]
    fn faults_are_detected() {
        for s in Suite::ALL {
            let r = run(&[s], &quick(Some(s))).unwrap();
            assert!(r.iter().any(|o| !o.passed), "{s}");
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }
}

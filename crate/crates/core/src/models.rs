//! Predictive, inference and observation networks.

use std::io::{Read, Write};
use std::path::Path;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::dirichlet::{DirichletParams, LabelDistributionMatrix, ALPHA_FLOOR};
use crate::error::{PllError, Result};
use crate::graph::AffinityGraph;
use crate::numeric::{CsrMatrix, Matrix, ParamStore, RngState, Tape, Var};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    #[default]
    Linear,
    Mlp { hidden: Vec<usize> },
}

impl Architecture {
    fn widths(&self, inputs: usize, classes: usize) -> Vec<usize> {
        let mut w = vec![inputs];
        if let Architecture::Mlp { hidden } = self {
            w.extend(hidden);
        }
        w.push(classes);
        w
    }
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut RngState) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-bound, bound))
}

fn kaiming(fan_in: usize, fan_out: usize, rng: &mut RngState) -> Matrix {
    uniform_matrix(fan_in, fan_out, (6.0 / fan_in as f64).sqrt(), rng)
}

fn xavier(fan_in: usize, fan_out: usize, rng: &mut RngState) -> Matrix {
    uniform_matrix(fan_in, fan_out, (6.0 / (fan_in + fan_out) as f64).sqrt(), rng)
}

/// Stack of affine layers stored as `w{l}`, `b{l}` pairs; ReLU between layers.
fn add_stack(store: &mut ParamStore, prefix: &str, widths: &[usize], rng: Option<&mut RngState>) {
    let last = widths.len() - 2;
    let mut rng = rng;
    for l in 0..=last {
        let (fi, fo) = (widths[l], widths[l + 1]);
        let w = match rng.as_deref_mut() {
            Some(r) if l < last => kaiming(fi, fo, r),
            Some(r) => xavier(fi, fo, r),
            None => Matrix::zeros(fi, fo),
        };
        store.add(format!("{prefix}.w{l}"), w);
        store.add(format!("{prefix}.b{l}"), Matrix::zeros(1, fo));
    }
}

/// Returns (output pre-activation, input to the last layer).
fn stack_forward(tape: &mut Tape, store: &ParamStore, x: Var) -> Result<(Var, Var)> {
    let layers = store.len() / 2;
    let mut h = x;
    for l in 0..layers {
        let w = tape.param(store, 2 * l);
        let b = tape.param(store, 2 * l + 1);
        let z = tape.matmul(h, w)?;
        let z = tape.add_row(z, b)?;
        if l + 1 == layers {
            return Ok((z, h));
        }
        h = tape.relu(z);
    }
    unreachable!("stack has at least one layer")
}

fn stack_eval(store: &ParamStore, x: &Matrix) -> Result<(Matrix, Matrix)> {
    let layers = store.len() / 2;
    let mut h = x.clone();
    for l in 0..layers {
        let mut z = h.matmul(store.value(2 * l))?;
        let b = store.value(2 * l + 1).row(0).to_vec();
        for i in 0..z.rows() {
            for (o, bj) in z.row_mut(i).iter_mut().zip(&b) {
                *o += bj;
            }
        }
        if l + 1 == layers {
            return Ok((z, h));
        }
        h = z.map(|v| v.max(0.0));
    }
    unreachable!("stack has at least one layer")
}

fn check_cols(op: &'static str, x: &Matrix, want: usize) -> Result<()> {
    if x.cols() != want {
        return Err(PllError::shape(op, format!("{want} columns"), format!("{} columns", x.cols())));
    }
    Ok(())
}

/// Classifier `f(x; θ)` with softmax outputs.
#[derive(Debug, Clone)]
pub struct PredictiveModel {
    arch: Architecture,
    inputs: usize,
    classes: usize,
    params: ParamStore,
}

pub struct PredictiveOutput {
    pub logits: Var,
    /// Penultimate activations, or the input itself for a linear model.
    pub features: Var,
}

impl PredictiveModel {
    pub fn new(arch: Architecture, inputs: usize, classes: usize, rng: &mut RngState) -> Self {
        Self::build(arch, inputs, classes, Some(rng))
    }

    pub fn zeroed(arch: Architecture, inputs: usize, classes: usize) -> Self {
        Self::build(arch, inputs, classes, None)
    }

    fn build(arch: Architecture, inputs: usize, classes: usize, rng: Option<&mut RngState>) -> Self {
        let mut params = ParamStore::new();
        add_stack(&mut params, "theta", &arch.widths(inputs, classes), rng);
        PredictiveModel {
            arch,
            inputs,
            classes,
            params,
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_dim(&self) -> usize {
        match &self.arch {
            Architecture::Linear => self.inputs,
            Architecture::Mlp { hidden } => *hidden.last().unwrap_or(&self.inputs),
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<PredictiveOutput> {
        check_cols("PredictiveModel::forward", tape.value(x), self.inputs)?;
        let (logits, features) = stack_forward(tape, &self.params, x)?;
        Ok(PredictiveOutput { logits, features })
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        check_cols("PredictiveModel::logits", x, self.inputs)?;
        Ok(stack_eval(&self.params, x)?.0)
    }

    /// Softmax class probabilities, one row per example.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.logits(x)?.softmax_rows())
    }

    pub fn extract_features(&self, x: &Matrix) -> Result<Matrix> {
        check_cols("PredictiveModel::extract_features", x, self.inputs)?;
        Ok(stack_eval(&self.params, x)?.1)
    }
}

/// Two-layer GCN producing Dirichlet concentrations from `[Φ ‖ L]`.
#[derive(Debug, Clone)]
pub struct InferenceModel {
    inputs: usize,
    hidden: usize,
    classes: usize,
    params: ParamStore,
}

impl InferenceModel {
    pub const DEFAULT_HIDDEN: usize = 64;

    /// `feature_dim` is the width of Φ; the label block adds `classes` more inputs.
    pub fn new(feature_dim: usize, classes: usize, hidden: usize, rng: &mut RngState) -> Self {
        let inputs = feature_dim + classes;
        let mut params = ParamStore::new();
        params.add("w.gcn0", kaiming(inputs, hidden, rng));
        params.add("w.gcn1", xavier(hidden, classes, rng));
        InferenceModel {
            inputs,
            hidden,
            classes,
            params,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// α for `rows` from the full-set input `z = [Φ ‖ L]`.
    pub fn forward(&self, tape: &mut Tape, z: Var, adj: &Rc<CsrMatrix>, rows: Vec<usize>) -> Result<Var> {
        check_cols("InferenceModel::forward", tape.value(z), self.inputs)?;
        let w0 = tape.param(&self.params, 0);
        let w1 = tape.param(&self.params, 1);
        let zw = tape.matmul(z, w0)?;
        let h = tape.sparse_matmul(adj, zw)?;
        let h = tape.relu(h);
        let hw = tape.matmul(h, w1)?;
        let out = tape.sparse_matmul_rows(adj, hw, rows)?;
        let sp = tape.softplus(out);
        Ok(tape.add_scalar(sp, ALPHA_FLOOR))
    }

    pub fn infer_alphas(&self, logical: &Matrix, phi: &Matrix, graph: &AffinityGraph) -> Result<DirichletParams> {
        if logical.rows() != phi.rows() || graph.len() != phi.rows() {
            return Err(PllError::shape(
                "infer_alphas",
                format!("{} rows everywhere", phi.rows()),
                format!("logical {} / graph {}", logical.rows(), graph.len()),
            ));
        }
        let z = phi.concat_cols(logical)?;
        check_cols("infer_alphas", &z, self.inputs)?;
        let adj = graph.normalized();
        let h = adj.matmul_dense(&z.matmul(self.params.value(0))?)?.map(|v| v.max(0.0));
        let out = adj.matmul_dense(&h.matmul(self.params.value(1))?)?;
        DirichletParams::new(out.map(|v| crate::numeric::softplus(v) + ALPHA_FLOOR))
    }
}

/// Three-layer perceptron mapping a label distribution to Bernoulli probabilities.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    classes: usize,
    hidden: (usize, usize),
    params: ParamStore,
}

impl ObservationModel {
    pub const DEFAULT_HIDDEN: (usize, usize) = (64, 64);

    pub fn new(classes: usize, hidden: (usize, usize), rng: &mut RngState) -> Self {
        let mut params = ParamStore::new();
        add_stack(&mut params, "eta", &[classes, hidden.0, hidden.1, classes], Some(rng));
        ObservationModel {
            classes,
            hidden,
            params,
        }
    }

    pub fn zeroed(classes: usize, hidden: (usize, usize)) -> Self {
        let mut params = ParamStore::new();
        add_stack(&mut params, "eta", &[classes, hidden.0, hidden.1, classes], None);
        ObservationModel {
            classes,
            hidden,
            params,
        }
    }

    pub fn hidden(&self) -> (usize, usize) {
        self.hidden
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Pre-sigmoid outputs.
    pub fn forward_logits(&self, tape: &mut Tape, d: Var) -> Result<Var> {
        check_cols("ObservationModel::forward", tape.value(d), self.classes)?;
        Ok(stack_forward(tape, &self.params, d)?.0)
    }

    pub fn observe_tau(&self, d: &LabelDistributionMatrix) -> Result<Matrix> {
        check_cols("observe_tau", d.dist(), self.classes)?;
        Ok(stack_eval(&self.params, d.dist())?.0.map(crate::numeric::sigmoid))
    }
}

/// All three networks of one run.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub predictive: PredictiveModel,
    pub inference: InferenceModel,
    pub observation: ObservationModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Offset in f64 values from the start of the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub architecture: Architecture,
    pub inputs: usize,
    pub classes: usize,
    pub gcn_hidden: usize,
    pub observation_hidden: (usize, usize),
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
}

pub const MODELS_BIN: &str = "models.bin";
pub const MODELS_MANIFEST: &str = "models.json";

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| PllError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| PllError::io(&tmp, e))?;
        f.sync_all().map_err(|e| PllError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| PllError::io(path, e))
}

impl ModelBundle {
    pub fn new(
        arch: Architecture,
        inputs: usize,
        classes: usize,
        gcn_hidden: usize,
        observation_hidden: (usize, usize),
        rng: &mut RngState,
    ) -> Self {
        let predictive = PredictiveModel::new(arch, inputs, classes, rng);
        let inference = InferenceModel::new(predictive.feature_dim(), classes, gcn_hidden, rng);
        let observation = ObservationModel::new(classes, observation_hidden, rng);
        ModelBundle {
            predictive,
            inference,
            observation,
        }
    }

    fn stores(&self) -> [&ParamStore; 3] {
        [&self.predictive.params, &self.inference.params, &self.observation.params]
    }

    fn stores_mut(&mut self) -> [&mut ParamStore; 3] {
        [
            &mut self.predictive.params,
            &mut self.inference.params,
            &mut self.observation.params,
        ]
    }

    pub fn manifest(&self, seed: u64) -> Manifest {
        let mut tensors = Vec::new();
        let mut offset = 0;
        for store in self.stores() {
            for p in store.iter() {
                let (rows, cols) = p.value.shape();
                tensors.push(TensorEntry {
                    name: p.name.clone(),
                    rows,
                    cols,
                    offset,
                });
                offset += rows * cols;
            }
        }
        Manifest {
            architecture: self.predictive.arch.clone(),
            inputs: self.predictive.inputs,
            classes: self.predictive.classes,
            gcn_hidden: self.inference.hidden,
            observation_hidden: self.observation.hidden,
            seed,
            tensors,
        }
    }

    /// Writes `models.bin` (little-endian f64) and `models.json` into `dir`.
    pub fn save(&self, dir: &Path, seed: u64) -> Result<()> {
        let manifest = self.manifest(seed);
        let mut bytes = Vec::new();
        for store in self.stores() {
            for p in store.iter() {
                for v in p.value.as_slice() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        write_atomic(&dir.join(MODELS_BIN), &bytes)?;
        write_atomic(&dir.join(MODELS_MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<(Self, Manifest)> {
        let mpath = dir.join(MODELS_MANIFEST);
        let text = std::fs::read_to_string(&mpath).map_err(|e| PllError::io(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let bpath = dir.join(MODELS_BIN);
        let mut raw = Vec::new();
        std::fs::File::open(&bpath)
            .and_then(|mut f| f.read_to_end(&mut raw))
            .map_err(|e| PllError::io(&bpath, e))?;
        if raw.len() % 8 != 0 {
            return Err(PllError::Validation(format!("{} is not a whole number of f64", bpath.display())));
        }
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();

        let mut rng = RngState::new(0);
        let mut bundle = ModelBundle::new(
            manifest.architecture.clone(),
            manifest.inputs,
            manifest.classes,
            manifest.gcn_hidden,
            manifest.observation_hidden,
            &mut rng,
        );
        let mut entries = manifest.tensors.iter();
        for store in bundle.stores_mut() {
            for idx in 0..store.len() {
                let e = entries
                    .next()
                    .ok_or_else(|| PllError::Validation("manifest lists too few tensors".into()))?;
                let want = store.value(idx).shape();
                if e.name != store.name(idx) || (e.rows, e.cols) != want {
                    return Err(PllError::Validation(format!(
                        "tensor '{}' {}x{} does not match expected '{}' {:?}",
                        e.name,
                        e.rows,
                        e.cols,
                        store.name(idx),
                        want
                    )));
                }
                let end = e.offset + e.rows * e.cols;
                let slice = values
                    .get(e.offset..end)
                    .ok_or_else(|| PllError::Validation(format!("tensor '{}' runs past the blob", e.name)))?;
                *store.value_mut(idx) = Matrix::from_vec(e.rows, e.cols, slice.to_vec())?;
            }
        }
        if entries.next().is_some() {
            return Err(PllError::Validation("manifest lists too many tensors".into()));
        }
        Ok((bundle, manifest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_knn_graph;
    use crate::numeric::grad_check;

    fn x() -> Matrix {
        Matrix::from_fn(6, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 * 0.3 - 0.8)
    }

    #[test]
    fn zero_linear_predicts_uniform() {
        let m = PredictiveModel::zeroed(Architecture::Linear, 4, 5);
        for r in m.predict(&x()).unwrap().rows_iter() {
            for &v in r {
                assert!((v - 0.2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn predictions_on_simplex() {
        let m = PredictiveModel::new(Architecture::Mlp { hidden: vec![8, 5] }, 4, 3, &mut RngState::new(1));
        for r in m.predict(&x()).unwrap().rows_iter() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(m.predict(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn feature_extraction() {
        let lin = PredictiveModel::new(Architecture::Linear, 4, 3, &mut RngState::new(1));
        assert_eq!(lin.extract_features(&x()).unwrap(), x());
        let mlp = PredictiveModel::new(Architecture::Mlp { hidden: vec![8, 5] }, 4, 3, &mut RngState::new(1));
        let f = mlp.extract_features(&x()).unwrap();
        assert_eq!(f.cols(), 5);
        assert_eq!(mlp.feature_dim(), 5);
        assert!(f.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let m = PredictiveModel::new(Architecture::Mlp { hidden: vec![7] }, 4, 3, &mut RngState::new(9));
        let mut t = Tape::new();
        let xv = t.input(x());
        let out = m.forward(&mut t, xv).unwrap();
        assert!(t.value(out.logits).sub(&m.logits(&x()).unwrap()).unwrap().max_abs() < 1e-14);
        assert_eq!(t.value(out.features), &m.extract_features(&x()).unwrap());
    }

    #[test]
    fn cross_entropy_gradient_checks() {
        let m = PredictiveModel::new(Architecture::Mlp { hidden: vec![5] }, 4, 3, &mut RngState::new(3));
        let y = Matrix::from_fn(6, 3, |i, j| if i % 3 == j { 1.0 } else { 0.0 });
        let err = grad_check(m.params(), 1e-5, |t, p| {
            let xv = t.input(x());
            let logits = stack_forward(t, p, xv)?.0;
            let lp = t.log_softmax(logits);
            let yv = t.input(y.clone());
            let prod = t.mul(lp, yv)?;
            let s = t.sum(prod);
            Ok(t.scale(s, -1.0 / 6.0))
        })
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn gcn_with_zero_output_layer() {
        let mut rng = RngState::new(5);
        let mut inf = InferenceModel::new(4, 3, 16, &mut rng);
        inf.params_mut().value_mut(1).fill(0.0);
        let g = build_knn_graph(&x(), 2).unwrap();
        let logical = Matrix::from_fn(6, 3, |i, j| if (i + j) % 2 == 0 { 1.0 } else { 0.0 });
        let a = inf.infer_alphas(&logical, &x(), &g).unwrap();
        for &v in a.alphas().as_slice() {
            assert!((v - (2f64.ln() + ALPHA_FLOOR)).abs() < 1e-12);
        }
    }

    #[test]
    fn gcn_single_node_is_mlp() {
        let mut rng = RngState::new(6);
        let inf = InferenceModel::new(2, 3, 8, &mut rng);
        let phi = Matrix::from_rows(&[[0.4, -1.0]]).unwrap();
        let l = Matrix::from_rows(&[[1.0, 0.0, 1.0]]).unwrap();
        let g = build_knn_graph(&phi, 1).unwrap();
        let a = inf.infer_alphas(&l, &phi, &g).unwrap();
        let z = phi.concat_cols(&l).unwrap();
        let h = z.matmul(inf.params().value(0)).unwrap().map(|v| v.max(0.0));
        let o = h.matmul(inf.params().value(1)).unwrap();
        let want = o.map(|v| crate::numeric::softplus(v) + ALPHA_FLOOR);
        assert!(a.alphas().sub(&want).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn gcn_permutation_equivariant() {
        let mut rng = RngState::new(7);
        let inf = InferenceModel::new(4, 3, 8, &mut rng);
        let phi = Matrix::from_fn(5, 4, |i, j| ((i * 3 + j * 7) % 5) as f64 - 2.0 + 0.1 * i as f64);
        let l = Matrix::from_fn(5, 3, |i, j| if (i + 2 * j) % 3 != 0 { 1.0 } else { 0.0 });
        let g = build_knn_graph(&phi, 2).unwrap();
        let base = inf.infer_alphas(&l, &phi, &g).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let pa = g.adjacency_dense();
        let permuted_adj = Matrix::from_fn(5, 5, |a, b| pa[(perm[a], perm[b])]);
        let pg = AffinityGraph::from_adjacency(CsrMatrix::from_dense(&permuted_adj), 2);
        let out = inf
            .infer_alphas(&l.select_rows(&perm), &phi.select_rows(&perm), &pg)
            .unwrap();
        let want = base.alphas().select_rows(&perm);
        assert!(out.alphas().sub(&want).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn gcn_tape_matches_plain() {
        let mut rng = RngState::new(8);
        let inf = InferenceModel::new(4, 3, 8, &mut rng);
        let l = Matrix::from_fn(6, 3, |i, j| if (i + j) % 2 == 0 { 1.0 } else { 0.0 });
        let g = build_knn_graph(&x(), 2).unwrap();
        let plain = inf.infer_alphas(&l, &x(), &g).unwrap();
        let adj = Rc::new(g.normalized().clone());
        let mut t = Tape::new();
        let z = t.input(x().concat_cols(&l).unwrap());
        let a = inf.forward(&mut t, z, &adj, vec![4, 1]).unwrap();
        let want = plain.alphas().select_rows(&[4, 1]);
        assert!(t.value(a).sub(&want).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn observation_outputs() {
        let d = LabelDistributionMatrix::new(Matrix::from_rows(&[[0.2, 0.8, 0.0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]).unwrap())
            .unwrap();
        let z = ObservationModel::zeroed(3, (4, 4));
        assert!(z.observe_tau(&d).unwrap().as_slice().iter().all(|&v| v == 0.5));
        let o = ObservationModel::new(3, (16, 16), &mut RngState::new(2));
        assert!(o.observe_tau(&d).unwrap().as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn observation_gradient_checks() {
        let o = ObservationModel::new(3, (6, 5), &mut RngState::new(2));
        let d = Matrix::from_rows(&[[0.2, 0.8, 0.0], [0.3, 0.3, 0.4]]).unwrap();
        let err = grad_check(o.params(), 1e-5, |t, p| {
            let dv = t.input(d.clone());
            let u = stack_forward(t, p, dv)?.0;
            let tau = t.sigmoid(u);
            let lt = t.log(tau);
            Ok(t.sum(lt))
        })
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = RngState::new(11);
        let b = ModelBundle::new(Architecture::Mlp { hidden: vec![5] }, 4, 3, 8, (6, 6), &mut rng);
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path(), 42).unwrap();
        let (back, manifest) = ModelBundle::load(dir.path()).unwrap();
        assert_eq!(manifest.seed, 42);
        assert_eq!(back.predictive.predict(&x()).unwrap(), b.predictive.predict(&x()).unwrap());
        for (a, c) in back.observation.params().iter().zip(b.observation.params().iter()) {
            assert_eq!(a.value, c.value);
        }
    }
}

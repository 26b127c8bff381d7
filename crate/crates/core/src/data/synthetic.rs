//! Gaussian blob benchmarks.

use super::{PllDataset, SplitTag};
use crate::error::{PllError, Result};
use crate::numeric::{Matrix, RngState};

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub centers: Vec<Vec<f64>>,
    pub std: f64,
}

impl BlobSpec {
    /// Three well separated classes in the plane.
    pub fn separable() -> Self {
        BlobSpec {
            centers: vec![vec![0.0, 0.0], vec![8.0, 0.0], vec![0.0, 8.0]],
            std: 1.0,
        }
    }

    /// Classes 0 and 1 overlap; class 2 is far away.
    pub fn overlapping_pair() -> Self {
        BlobSpec {
            centers: vec![vec![0.0, 0.0], vec![1.5, 0.0], vec![8.0, 8.0]],
            std: 1.0,
        }
    }

    /// Six classes in 4-D: three close pairs, the pairs far from each other.
    pub fn paired() -> Self {
        let mut centers = Vec::new();
        for p in 0..3 {
            let mut a = vec![0.0; 4];
            a[p] = 6.0;
            let mut b = a.clone();
            b[3] = 1.6;
            centers.push(a);
            centers.push(b);
        }
        BlobSpec { centers, std: 1.0 }
    }

    /// `classes` unit-variance blobs evenly spaced on a circle; neighbours on the ring overlap.
    pub fn ring(classes: usize, radius: f64) -> Self {
        let centers = (0..classes)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / classes as f64;
                vec![radius * t.cos(), radius * t.sin()]
            })
            .collect();
        BlobSpec { centers, std: 1.0 }
    }

    pub fn classes(&self) -> usize {
        self.centers.len()
    }

    /// `n` examples with balanced classes, in shuffled order.
    pub fn sample(&self, n: usize, split: SplitTag, rng: &mut RngState) -> Result<PllDataset> {
        let c = self.classes();
        if c == 0 {
            return Err(PllError::Validation("blob spec has no centres".into()));
        }
        let q = self.centers[0].len();
        if self.centers.iter().any(|ct| ct.len() != q) {
            return Err(PllError::Validation("blob centres differ in dimension".into()));
        }
        let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        rng.shuffle(&mut labels);
        let mut x = Matrix::zeros(n, q);
        for (i, &y) in labels.iter().enumerate() {
            for (o, m) in x.row_mut(i).iter_mut().zip(&self.centers[y]) {
                *o = m + self.std * rng.normal();
            }
        }
        PllDataset::supervised(x, labels, c, split)
    }
}

/// Random `test_fraction` split of `data` into (train, test).
pub fn train_test_split(data: &PllDataset, test_fraction: f64, rng: &mut RngState) -> (PllDataset, PllDataset) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut idx);
    let n_test = ((data.len() as f64) * test_fraction).round() as usize;
    let (test, train) = idx.split_at(n_test);
    (
        data.subset(train).with_split(SplitTag::Train),
        data.subset(test).with_split(SplitTag::Test),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let s = BlobSpec::separable();
        let a = s.sample(300, SplitTag::Train, &mut RngState::new(1)).unwrap();
        let b = s.sample(300, SplitTag::Train, &mut RngState::new(1)).unwrap();
        assert_eq!(a, b);
        let counts = a.candidates().col_sums();
        assert_eq!(counts, vec![100.0, 100.0, 100.0]);
    }

    #[test]
    fn ring_geometry() {
        let r = BlobSpec::ring(6, 4.0);
        assert_eq!(r.classes(), 6);
        for (a, b) in r.centers.iter().zip(r.centers.iter().cycle().skip(1)) {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!((d - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn split_sizes() {
        let d = BlobSpec::paired().sample(100, SplitTag::Train, &mut RngState::new(2)).unwrap();
        let (tr, te) = train_test_split(&d, 0.25, &mut RngState::new(3));
        assert_eq!((tr.len(), te.len()), (75, 25));
        assert_eq!(te.split(), SplitTag::Test);
    }
}

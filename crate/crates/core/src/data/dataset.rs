use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix};
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

/// Labelled examples held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Matrix<T>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    /// Every class in `0..num_classes` must have at least one example.
    pub fn new(features: Matrix<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Error::check_len("dataset labels", features.rows(), labels.len())?;
        let mut counts = vec![0usize; num_classes];
        for &y in &labels {
            if y >= num_classes {
                return Err(Error::invalid(format!("label {y} out of range for {num_classes} classes")));
            }
            counts[y] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("class {c} has no examples")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Example indices grouped by class, ascending within each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.class_indices().iter().map(Vec::len).collect()
    }

    /// Gathers the given rows (duplicates allowed) into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch<T>> {
        let cols = self.num_features();
        let mut data = Vec::with_capacity(indices.len() * cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("example index {i} out of range")));
            }
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(Matrix::new(indices.len(), cols, data)?, labels, self.num_classes)
    }

    pub fn full_batch(&self) -> Result<Batch<T>> {
        Batch::new(self.features.clone(), self.labels.clone(), self.num_classes)
    }

    /// Writes `f0,...,f{F-1},label` with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.num_features()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (i, &y) in self.labels.iter().enumerate() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`Dataset::write_csv`]. The class count is
    /// `max(label) + 1` unless given.
    pub fn read_csv(path: &Path, num_classes: Option<usize>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let cols = header.len().saturating_sub(1);
        let header_ok = cols >= 1
            && header.get(cols) == Some("label")
            && (0..cols).all(|j| header.get(j) == Some(format!("f{j}").as_str()));
        if !header_ok {
            return Err(Error::Malformed(format!(
                "{}: expected header f0,...,f{{F-1}},label",
                path.display()
            )));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse_err = |what: &str| Error::Malformed(format!("{}: row {}: bad {what}", path.display(), line + 2));
            for j in 0..cols {
                let v: f64 = rec.get(j).and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("feature"))?;
                data.push(T::lit(v));
            }
            let y: usize = rec.get(cols).and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("label"))?;
            labels.push(y);
        }
        let n = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Dataset::new(Matrix::new(labels.len(), cols, data)?, labels, n)
    }
}

/// Parameters of the Gaussian-cluster classification task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub features: usize,
    pub per_class: usize,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    pub spread: f64,
}

fn default_test_per_class() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData<T> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
}

/// `classes` isotropic unit-variance Gaussian clusters whose means are random
/// unit vectors scaled by `spread`. Train and test examples come from the
/// same clusters.
pub fn make_synthetic<T: Scalar>(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData<T>> {
    if spec.classes < 2 || spec.features < 2 || spec.per_class < 10 || spec.test_per_class == 0 {
        return Err(Error::invalid(
            "synthetic data needs classes >= 2, features >= 2, per_class >= 10, test_per_class >= 1",
        ));
    }
    if !(spec.spread.is_finite() && spec.spread >= 0.0) {
        return Err(Error::invalid("spread must be finite and non-negative"));
    }
    let mut rng = rng_from_seed(seed);
    let f = spec.features;
    let mut means = Vec::with_capacity(spec.classes);
    for _ in 0..spec.classes {
        let mut v: Vec<f64> = (0..f).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.iter_mut().for_each(|x| *x *= spec.spread / norm);
        means.push(v);
    }
    let mut draw = |per_class: usize| -> Result<Dataset<T>> {
        let mut data = Vec::with_capacity(spec.classes * per_class * f);
        let mut labels = Vec::with_capacity(spec.classes * per_class);
        for (c, mean) in means.iter().enumerate() {
            for _ in 0..per_class {
                for &m in mean {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(T::lit(m + z));
                }
                labels.push(c);
            }
        }
        Dataset::new(Matrix::new(labels.len(), f, data)?, labels, spec.classes)
    };
    let train = draw(spec.per_class)?;
    let test = draw(spec.test_per_class)?;
    Ok(SyntheticData { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(classes: usize, spread: f64) -> SyntheticSpec {
        SyntheticSpec {
            classes,
            features: 16,
            per_class: 500,
            test_per_class: 200,
            spread,
        }
    }

    #[test]
    fn sizes_and_determinism() {
        let s = spec(3, 2.0);
        let a = make_synthetic::<f64>(&s, 4).unwrap();
        let b = make_synthetic::<f64>(&s, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 3 * 500);
        assert_eq!(a.test.len(), 3 * 200);
        assert_eq!(a.train.class_counts(), vec![500; 3]);
        assert_ne!(a, make_synthetic::<f64>(&s, 5).unwrap());
    }

    #[test]
    fn well_separated_pair_is_linearly_separable() {
        let data = make_synthetic::<f64>(&spec(2, 10.0), 1).unwrap();
        // Nearest-centroid classifier fitted on train.
        let f = data.train.num_features();
        let mut centroids = vec![vec![0.0; f]; 2];
        for (i, &y) in data.train.labels().iter().enumerate() {
            for (c, v) in centroids[y].iter_mut().zip(data.train.features().row(i)) {
                *c += v / 500.0;
            }
        }
        let dist = |x: &[f64], c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let correct = data
            .test
            .labels()
            .iter()
            .enumerate()
            .filter(|&(i, &y)| {
                let x = data.test.features().row(i);
                let pred = usize::from(dist(x, &centroids[1]) < dist(x, &centroids[0]));
                pred == y
            })
            .count();
        let acc = correct as f64 / data.test.len() as f64;
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let data = make_synthetic::<f64>(&SyntheticSpec { per_class: 10, test_per_class: 1, ..spec(3, 1.5) }, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        data.train.write_csv(&path).unwrap();
        let head = std::fs::read_to_string(&path).unwrap();
        assert!(head.starts_with("f0,f1,f2,"));
        assert!(head.lines().next().unwrap().ends_with(",f15,label"));
        let back = Dataset::<f64>::read_csv(&path, None).unwrap();
        assert_eq!(back, data.train);
    }

    #[test]
    fn rejects_empty_class_and_bad_label() {
        let m = Matrix::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(Dataset::<f64>::new(m.clone(), vec![0, 0], 2).is_err());
        assert!(Dataset::<f64>::new(m, vec![0, 3], 2).is_err());
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(make_synthetic::<f64>(&SyntheticSpec { classes: 1, ..spec(2, 1.0) }, 0).is_err());
        assert!(make_synthetic::<f64>(&SyntheticSpec { per_class: 9, ..spec(2, 1.0) }, 0).is_err());
    }
}

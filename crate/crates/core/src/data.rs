//! Dataset sources: Gaussian-mixture generators and CSV ingestion.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::scalar::Scalar;
use crate::types::{Example, Label};

/// Two class-conditional Gaussians in `d` dimensions plus a class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    /// Probability of label 1.
    pub prior_one: f64,
    pub means: [Vec<f64>; 2],
    /// Row-major `d x d` covariance matrices.
    pub covariances: [Vec<f64>; 2],
    /// Round every feature to a multiple of this step (creates ties).
    pub quantize: Option<f64>,
}

impl MixtureSpec {
    /// Spherical components with unit variance scaled by `sd`, means placed at
    /// `±separation / 2` along the all-ones diagonal direction.
    pub fn isotropic(dim: usize, separation: f64, sd: f64, prior_one: f64) -> Self {
        let offset = separation / 2.0 / (dim as f64).sqrt();
        let mut cov = vec![0.0; dim * dim];
        for i in 0..dim {
            cov[i * dim + i] = sd * sd;
        }
        Self {
            prior_one,
            means: [vec![-offset; dim], vec![offset; dim]],
            covariances: [cov.clone(), cov],
            quantize: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn validate(&self) -> Result<[DMatrix<f64>; 2]> {
        let d = self.dim();
        if d == 0 || self.means[1].len() != d {
            return Err(Error::InvalidArgument("mixture means must share a positive dimension".into()));
        }
        if !(0.0..=1.0).contains(&self.prior_one) {
            return Err(Error::InvalidArgument(format!("class prior {} outside [0, 1]", self.prior_one)));
        }
        if let Some(q) = self.quantize {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::InvalidArgument(format!("quantize step {q} must be positive")));
            }
        }
        let factor = |c: &Vec<f64>, which: usize| -> Result<DMatrix<f64>> {
            if c.len() != d * d || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidCovariance(format!("component {which} is not a finite {d}x{d} matrix")));
            }
            let m = DMatrix::from_row_slice(d, d, c);
            if (&m - m.transpose()).abs().max() > 1e-12 {
                return Err(Error::InvalidCovariance(format!("component {which} is not symmetric")));
            }
            m.cholesky()
                .map(|ch| ch.l())
                .ok_or_else(|| Error::InvalidCovariance(format!("component {which} is not positive definite")))
        };
        Ok([factor(&self.covariances[0], 0)?, factor(&self.covariances[1], 1)?])
    }
}

/// Generates `n` i.i.d. examples from the mixture.
pub fn generate_synthetic<T: Scalar>(spec: &MixtureSpec, n: usize, rng: &mut RandomSource) -> Result<Vec<Example<T>>> {
    let chol = spec.validate()?;
    let d = spec.dim();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let label = if rng.uniform() < spec.prior_one { Label::One } else { Label::Zero };
        let k = label.index();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.standard_normal()));
        let x = &chol[k] * z + DVector::from_column_slice(&spec.means[k]);
        let object = x
            .iter()
            .map(|&v| match spec.quantize {
                Some(q) => T::of((v / q).round() * q),
                None => T::of(v),
            })
            .collect();
        out.push(Example::new(object, label)?);
    }
    Ok(out)
}

/// Synthetic dataset description accepted on the command line:
/// comma-separated `key=value` pairs with keys `n`, `dim`, `sep`, `sd`,
/// `prior`, `quant`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSource {
    pub n: usize,
    pub mixture: MixtureSpec,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        Self {
            n: 2000,
            mixture: MixtureSpec::isotropic(2, 2.0, 1.0, 0.5),
        }
    }
}

impl FromStr for SyntheticSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mut n, mut dim, mut sep, mut sd, mut prior, mut quant) = (2000usize, 2usize, 2.0, 1.0, 0.5, 0.0);
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "default") {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("synthetic spec entry {part:?} is not key=value")))?;
            let bad = |_| Error::InvalidArgument(format!("bad value for {key}: {value:?}"));
            match key {
                "n" => n = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "dim" => dim = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "sep" => sep = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "sd" => sd = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "prior" => prior = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "quant" => quant = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                _ => return Err(Error::InvalidArgument(format!("unknown synthetic key {key:?}"))),
            }
        }
        let mut mixture = MixtureSpec::isotropic(dim, sep, sd, prior);
        if quant > 0.0 {
            mixture.quantize = Some(quant);
        }
        mixture.validate()?;
        Ok(Self { n, mixture })
    }
}

/// Examples loaded from a CSV file, with the raw label strings that map to
/// labels 0 and 1.
#[derive(Debug, Clone)]
pub struct CsvDataset<T> {
    pub examples: Vec<Example<T>>,
    pub feature_names: Vec<String>,
    pub label_names: [String; 2],
}

/// Loads a binary-label CSV file. Raw label values are mapped to 0 and 1 in
/// ascending lexicographic order; every other column is a real feature.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, label_column: &str) -> Result<CsvDataset<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

pub fn read_csv<T: Scalar, R: std::io::Read>(reader: R, label_column: &str) -> Result<CsvDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile);
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != label_idx).collect();

    let mut raw_labels = Vec::new();
    let mut objects = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row + 1;
        raw_labels.push(record.get(label_idx).unwrap_or("").trim().to_string());
        let mut object = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = record.get(c).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericFeature {
                column: headers[c].to_string(),
                row,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteCell {
                    column: headers[c].to_string(),
                    row,
                });
            }
            object.push(T::of(v));
        }
        objects.push(object);
    }
    if objects.is_empty() {
        return Err(Error::EmptyFile);
    }
    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    if distinct.len() != 2 {
        return Err(Error::LabelCardinality(distinct.len()));
    }
    let names: Vec<&str> = distinct.into_iter().collect();
    let examples = objects
        .into_iter()
        .zip(&raw_labels)
        .map(|(o, l)| Example::new(o, if l == names[0] { Label::Zero } else { Label::One }))
        .collect::<Result<Vec<_>>>()?;
    Ok(CsvDataset {
        examples,
        feature_names: feature_cols.iter().map(|&c| headers[c].to_string()).collect(),
        label_names: [names[0].to_string(), names[1].to_string()],
    })
}

/// Z-scores every feature in place using the whole dataset's mean and
/// population standard deviation. Constant features are only centred.
pub fn standardize<T: Scalar>(examples: &mut [Example<T>]) -> Result<()> {
    let Some(first) = examples.first() else { return Ok(()) };
    let d = first.dim();
    let n = T::of_count(examples.len());
    let mut mean = vec![T::zero(); d];
    for z in examples.iter() {
        for (m, &v) in mean.iter_mut().zip(z.object()) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = vec![T::zero(); d];
    for z in examples.iter() {
        for ((s, &v), &m) in var.iter_mut().zip(z.object()).zip(&mean) {
            *s = *s + (v - m) * (v - m);
        }
    }
    let sd: Vec<T> = var.into_iter().map(|s| (s / n).sqrt()).collect();
    for z in examples.iter_mut() {
        let object = z
            .object()
            .iter()
            .zip(&mean)
            .zip(&sd)
            .map(|((&v, &m), &s)| if s > T::zero() { (v - m) / s } else { v - m })
            .collect();
        *z = Example::new(object, z.label())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_examples_is_empty() {
        let mut rng = RandomSource::new(1, 0);
        let v: Vec<Example<f64>> = generate_synthetic(&MixtureSpec::isotropic(2, 2.0, 1.0, 0.5), 0, &mut rng).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let spec = MixtureSpec::isotropic(3, 2.0, 1.0, 0.5);
        let a: Vec<Example<f64>> = generate_synthetic(&spec, 10, &mut RandomSource::new(9, 3)).unwrap();
        let b: Vec<Example<f64>> = generate_synthetic(&spec, 10, &mut RandomSource::new(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_prior_gives_single_class() {
        let spec = MixtureSpec::isotropic(2, 2.0, 1.0, 1.0);
        let v: Vec<Example<f32>> = generate_synthetic(&spec, 100, &mut RandomSource::new(0, 0)).unwrap();
        assert!(v.iter().all(|z| z.label() == Label::One));
    }

    #[test]
    fn invalid_covariance_is_rejected() {
        let mut spec = MixtureSpec::isotropic(2, 2.0, 1.0, 0.5);
        spec.covariances[1] = vec![1.0, 2.0, 2.0, 1.0];
        let r: Result<Vec<Example<f64>>> = generate_synthetic(&spec, 5, &mut RandomSource::new(0, 0));
        assert!(matches!(r, Err(Error::InvalidCovariance(_))));
        spec.covariances[1] = vec![1.0, 0.5, 0.0, 1.0];
        let r: Result<Vec<Example<f64>>> = generate_synthetic(&spec, 5, &mut RandomSource::new(0, 0));
        assert!(matches!(r, Err(Error::InvalidCovariance(_))));
    }

    #[test]
    fn quantized_mixture_lands_on_lattice() {
        let src: SyntheticSource = "n=50,dim=2,quant=0.5".parse().unwrap();
        let v: Vec<Example<f64>> = generate_synthetic(&src.mixture, src.n, &mut RandomSource::new(0, 0)).unwrap();
        for z in &v {
            for &x in z.object() {
                assert_eq!((x * 2.0).fract(), 0.0);
            }
        }
        assert!("n=5,bogus=1".parse::<SyntheticSource>().is_err());
        assert!("prior=2".parse::<SyntheticSource>().is_err());
    }

    #[test]
    fn csv_labels_map_lexicographically() {
        let text = "a,b,target\n1,2,yes\n3,4,no\n5,6,yes\n";
        let ds: CsvDataset<f64> = read_csv(text.as_bytes(), "target").unwrap();
        assert_eq!(ds.label_names, ["no".to_string(), "yes".to_string()]);
        let labels: Vec<Label> = ds.examples.iter().map(|z| z.label()).collect();
        assert_eq!(labels, vec![Label::One, Label::Zero, Label::One]);
        assert_eq!(ds.examples[1].object(), &[3.0, 4.0]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn csv_errors_are_distinct() {
        let three = "x,y\n1,a\n2,b\n3,c\n";
        assert!(matches!(read_csv::<f64, _>(three.as_bytes(), "y"), Err(Error::LabelCardinality(3))));
        let nan = "x,y\nNaN,a\n2,b\n";
        assert!(matches!(read_csv::<f64, _>(nan.as_bytes(), "y"), Err(Error::NonFiniteCell { .. })));
        let word = "x,y\nfoo,a\n2,b\n";
        assert!(matches!(read_csv::<f64, _>(word.as_bytes(), "y"), Err(Error::NonNumericFeature { .. })));
        assert!(matches!(read_csv::<f64, _>("x,y\n1,a\n".as_bytes(), "z"), Err(Error::MissingColumn(_))));
        assert!(matches!(read_csv::<f64, _>("".as_bytes(), "y"), Err(Error::EmptyFile)));
        assert!(matches!(read_csv::<f64, _>("x,y\n".as_bytes(), "y"), Err(Error::EmptyFile)));
    }

    #[test]
    fn standardize_gives_zero_mean_unit_sd() {
        let mut v: Vec<Example<f64>> = generate_synthetic(&MixtureSpec::isotropic(2, 4.0, 3.0, 0.5), 200, &mut RandomSource::new(5, 0)).unwrap();
        standardize(&mut v).unwrap();
        for j in 0..2 {
            let m = v.iter().map(|z| z.object()[j]).sum::<f64>() / 200.0;
            let s = (v.iter().map(|z| (z.object()[j] - m).powi(2)).sum::<f64>() / 200.0).sqrt();
            assert!(m.abs() < 1e-12);
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

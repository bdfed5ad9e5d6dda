//! One-versus-rest linear SVM with per-feature standardization.
//!
//! Each binary problem is the L2-regularized hinge-loss SVM
//! `min 1/2 |w|^2 + C sum max(0, 1 - y_i (w.x_i + b))`, solved in the dual by
//! coordinate descent with a fixed epoch budget and a seeded visiting order.
//! The bias is learned as the weight of a constant feature.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Learned per-dimension mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let first = x.first().ok_or(Error::EmptyInput)?;
        let d = first.len();
        check_rectangular(x, d)?;
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Zero-variance dimensions map to 0.
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_rectangular(x, self.dim())?;
        Ok(x.iter().map(|r| self.transform_row(r)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Named in the error if the features contain NaN or infinities.
    pub feature_source: String,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 200,
            seed: 0,
            feature_source: "features".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Epochs actually run (the solver stops early once the projected
    /// gradient vanishes).
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvrSvmModel {
    /// Sorted distinct training labels; `models[k]` separates `classes[k]`.
    pub classes: Vec<usize>,
    pub models: Vec<BinaryModel>,
    pub c: f64,
    pub seed: u64,
    pub epochs: usize,
}

const PG_TOL: f64 = 1e-10;

pub fn fit(x: &[Vec<f64>], y: &[usize], params: &SvmParams) -> Result<OvrSvmModel> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", x.len()),
            got: format!("{}", y.len()),
        });
    }
    if !(params.c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "SVM C must be positive, got {}",
            params.c
        )));
    }
    let d = x[0].len();
    check_rectangular(x, d)?;
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            extractor: params.feature_source.clone(),
        });
    }
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }

    let sq_norms: Vec<f64> = x
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let models = classes
        .par_iter()
        .enumerate()
        .map(|(k, &label)| {
            let targets: Vec<f64> = y
                .iter()
                .map(|&l| if l == label { 1.0 } else { -1.0 })
                .collect();
            train_binary(x, &targets, &sq_norms, params, k as u64)
        })
        .collect();
    Ok(OvrSvmModel {
        classes,
        models,
        c: params.c,
        seed: params.seed,
        epochs: params.epochs,
    })
}

fn train_binary(
    x: &[Vec<f64>],
    targets: &[f64],
    sq_norms: &[f64],
    params: &SvmParams,
    stream: u64,
) -> BinaryModel {
    let d = x[0].len();
    let c = params.c;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut alpha = vec![0.0; x.len()];
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    let mut epochs_run = 0;
    for _ in 0..params.epochs {
        epochs_run += 1;
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let yi = targets[i];
            let xi = &x[i];
            let margin = xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let g = yi * margin - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > PG_TOL {
                let old = alpha[i];
                alpha[i] = (old - g / sq_norms[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * yi;
                for (wj, xj) in w.iter_mut().zip(xi) {
                    *wj += step * xj;
                }
                b += step;
            }
        }
        if pg_max - pg_min <= PG_TOL {
            break;
        }
    }
    BinaryModel {
        weights: w,
        bias: b,
        epochs_run,
    }
}

impl OvrSvmModel {
    pub fn dim(&self) -> usize {
        self.models.first().map_or(0, |m| m.weights.len())
    }

    /// Per-class decision values `w_k . x + b_k`.
    pub fn decision_scores(&self, row: &[f64]) -> Vec<f64> {
        self.models
            .iter()
            .map(|m| m.weights.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + m.bias)
            .collect()
    }

    /// Arg-max label per row; ties go to the lowest class index.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        check_rectangular(x, self.dim())?;
        Ok(x.iter()
            .map(|row| self.classes[argmax_first(&self.decision_scores(row))])
            .collect())
    }
}

pub fn predict(model: &OvrSvmModel, x: &[Vec<f64>]) -> Result<Vec<usize>> {
    model.predict(x)
}

/// Index of the largest value, the first one on ties.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = k;
        }
    }
    best
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} predictions", truth.len()),
            got: format!("{}", predicted.len()),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

fn check_rectangular(x: &[Vec<f64>], d: usize) -> Result<()> {
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: format!("{d} features per row"),
            got: format!("{}", row.len()),
        });
    }
    Ok(())
}

/// Standardizer plus SVM, trained and applied together.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub standardizer: Standardizer,
    pub model: OvrSvmModel,
}

const MODEL_MAGIC: &str = "ovr-linear-svm";
const MODEL_VERSION: u32 = 1;

impl TrainedClassifier {
    pub fn fit(x: &[Vec<f64>], y: &[usize], params: &SvmParams) -> Result<Self> {
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                extractor: params.feature_source.clone(),
            });
        }
        let standardizer = Standardizer::fit(x)?;
        let model = fit(&standardizer.transform(x)?, y, params)?;
        Ok(Self {
            standardizer,
            model,
        })
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        self.model.predict(&self.standardizer.transform(x)?)
    }

    /// Versioned line-oriented text format; floats use Rust's shortest
    /// round-trip representation so a reload is bit-identical.
    pub fn save<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let m = &self.model;
        writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}")?;
        writeln!(
            out,
            "classes {} dim {}",
            m.classes.len(),
            self.standardizer.dim()
        )?;
        writeln!(out, "c {} epochs {} seed {}", m.c, m.epochs, m.seed)?;
        writeln!(out, "mean {}", join(&self.standardizer.mean))?;
        writeln!(out, "std {}", join(&self.standardizer.std))?;
        for (label, bm) in m.classes.iter().zip(&m.models) {
            writeln!(
                out,
                "class {label} bias {} epochs_run {}",
                bm.bias, bm.epochs_run
            )?;
            writeln!(out, "w {}", join(&bm.weights))?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let bad = |message: String| Error::Format {
            what: "model file",
            message,
        };
        let lines: Vec<String> = input
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io("<model>", e))?;
        let mut it = lines
            .iter()
            .map(|l| l.split_whitespace().collect::<Vec<_>>());
        let mut next = |tag: &str| -> Result<Vec<&str>> {
            let fields = it
                .next()
                .ok_or_else(|| bad(format!("missing `{tag}` line")))?;
            if fields.first() != Some(&tag) {
                return Err(bad(format!("expected `{tag}`, found {:?}", fields.first())));
            }
            Ok(fields[1..].to_vec())
        };
        let num =
            |s: &str| -> Result<f64> { s.parse().map_err(|_| bad(format!("bad number `{s}`"))) };
        let int =
            |s: &str| -> Result<u64> { s.parse().map_err(|_| bad(format!("bad integer `{s}`"))) };

        let header = next(MODEL_MAGIC)?;
        if header != [MODEL_VERSION.to_string().as_str()] {
            return Err(bad(format!("unsupported version {header:?}")));
        }
        let shape = next("classes")?;
        if shape.len() != 3 || shape[1] != "dim" {
            return Err(bad("malformed shape line".into()));
        }
        let (k, d) = (int(shape[0])? as usize, int(shape[2])? as usize);
        let hyper = next("c")?;
        if hyper.len() != 5 {
            return Err(bad("malformed hyper-parameter line".into()));
        }
        let c = num(hyper[0])?;
        let epochs = int(hyper[2])? as usize;
        let seed = int(hyper[4])?;
        let vec_of = |fields: Vec<&str>| -> Result<Vec<f64>> {
            let v = fields.into_iter().map(num).collect::<Result<Vec<_>>>()?;
            if v.len() != d {
                return Err(bad(format!("expected {d} values, got {}", v.len())));
            }
            Ok(v)
        };
        let mean = vec_of(next("mean")?)?;
        let std = vec_of(next("std")?)?;
        let mut classes = Vec::with_capacity(k);
        let mut models = Vec::with_capacity(k);
        for _ in 0..k {
            let f = next("class")?;
            if f.len() != 5 {
                return Err(bad("malformed class line".into()));
            }
            classes.push(int(f[0])? as usize);
            let bias = num(f[2])?;
            let epochs_run = int(f[4])? as usize;
            let weights = vec_of(next("w")?)?;
            models.push(BinaryModel {
                weights,
                bias,
                epochs_run,
            });
        }
        Ok(Self {
            standardizer: Standardizer { mean, std },
            model: OvrSvmModel {
                classes,
                models,
                c,
                seed,
                epochs,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Vec<Vec<f64>>, Vec<usize>) {
        let x = vec![
            vec![0.0, 0.0],
            vec![0.5, 0.2],
            vec![0.1, 0.6],
            vec![5.0, 5.0],
            vec![5.5, 4.8],
            vec![4.7, 5.3],
        ];
        (x, vec![0, 0, 0, 1, 1, 1])
    }

    #[test]
    fn separable_set_is_fit_exactly() {
        let (x, y) = separable();
        let clf = TrainedClassifier::fit(&x, &y, &SvmParams::default()).unwrap();
        let pred = clf.predict(&x).unwrap();
        assert_eq!(pred, y);
        assert_eq!(accuracy(&pred, &y).unwrap(), 1.0);
    }

    #[test]
    fn single_class_and_nan_are_rejected() {
        let (x, _) = separable();
        assert!(matches!(
            fit(&x, &[3; 6], &SvmParams::default()),
            Err(Error::SingleClass)
        ));
        let mut bad = x.clone();
        bad[2][1] = f64::NAN;
        let params = SvmParams {
            feature_source: "haralick".into(),
            ..SvmParams::default()
        };
        match TrainedClassifier::fit(&bad, &[0, 0, 0, 1, 1, 1], &params) {
            Err(Error::NonFinite { extractor }) => assert_eq!(extractor, "haralick"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ties_go_to_the_lowest_class() {
        let model = OvrSvmModel {
            classes: vec![2, 5],
            models: vec![
                BinaryModel {
                    weights: vec![1.0],
                    bias: 0.0,
                    epochs_run: 0,
                },
                BinaryModel {
                    weights: vec![-1.0],
                    bias: 0.0,
                    epochs_run: 0,
                },
            ],
            c: 1.0,
            seed: 0,
            epochs: 0,
        };
        assert_eq!(model.predict(&[vec![0.0]]).unwrap(), vec![2]);
        assert_eq!(model.predict(&[vec![-1.0]]).unwrap(), vec![5]);
        assert!(model.predict(&[vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn accuracy_arithmetic() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        let truth = vec![0usize; 510];
        let mut pred = vec![0usize; 510];
        pred[433..].iter_mut().for_each(|p| *p = 1);
        assert!((accuracy(&pred, &truth).unwrap() - 433.0 / 510.0).abs() < 1e-15);
        assert!(matches!(accuracy(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn zero_variance_dimension_maps_to_zero() {
        let x = vec![vec![1.0, 7.0], vec![3.0, 7.0]];
        let s = Standardizer::fit(&x).unwrap();
        assert_eq!(s.transform_row(&[2.0, 7.0]), vec![0.0, 0.0]);
        assert_eq!(s.transform_row(&[3.0, 9.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let (x, y) = separable();
        let clf = TrainedClassifier::fit(&x, &y, &SvmParams::default()).unwrap();
        let mut buf = Vec::new();
        clf.save(&mut buf).unwrap();
        let back = TrainedClassifier::load(buf.as_slice()).unwrap();
        assert_eq!(back, clf);
        assert!(TrainedClassifier::load(&b"ovr-linear-svm 9\n"[..]).is_err());
    }
}

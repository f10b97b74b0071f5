//! Generative evaluation: FID and unbiased KID over image feature vectors.
//!
//! Features come from a deterministic built-in extractor (per-channel 8x8
//! average pooling followed by a seeded random projection) or from an
//! external JSON-lines import, so scores computed with a pretrained network
//! are a data swap away. Built-in features are not Inception features:
//! absolute values are comparable only within this artifact.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Pcg32};
use crate::tensor::ImageTensor;

/// Built-in feature dimension.
pub const FEATURE_DIM: usize = 64;
const POOL_GRID: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub vectors: Vec<Vec<f64>>,
    pub source: String,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }
}

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mu: Vec<f64>,
    /// Row-major `d x d`, symmetrized.
    pub sigma: Vec<Vec<f64>>,
}

/// Deterministic image features: adaptive 8x8 average pooling per channel,
/// flattened and projected to [`FEATURE_DIM`] by a seeded Gaussian matrix
/// with no bias (the zero image maps to the zero vector).
pub fn builtin_features(images: &[ImageTensor], seed: u64) -> Result<FeatureSet> {
    if images.is_empty() {
        return Err(Error::Invalid("feature extraction needs at least one image".into()));
    }
    let first = &images[0];
    for img in images {
        if !img.same_shape(first) {
            return Err(Error::Invalid("images must share one shape".into()));
        }
    }
    let pooled_dim = first.channels * POOL_GRID * POOL_GRID;
    let mut rng = Pcg32::new(derive_seed(seed, "feature-projection", pooled_dim as u64));
    let scale = 1.0 / (pooled_dim as f64).sqrt();
    let projection: Vec<f64> = (0..FEATURE_DIM * pooled_dim)
        .map(|_| rng.next_gaussian() * scale)
        .collect();

    let vectors = images
        .iter()
        .map(|img| {
            let pooled = pool_image(img);
            (0..FEATURE_DIM)
                .map(|o| {
                    pooled
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| projection[o * pooled_dim + i] * p)
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(FeatureSet { vectors, source: "builtin".into() })
}

/// Average pooling over an adaptive 8x8 grid, per channel.
fn pool_image(img: &ImageTensor) -> Vec<f64> {
    let mut out = Vec::with_capacity(img.channels * POOL_GRID * POOL_GRID);
    for c in 0..img.channels {
        for gy in 0..POOL_GRID {
            let y0 = gy * img.height / POOL_GRID;
            let y1 = ((gy + 1) * img.height / POOL_GRID).max(y0 + 1);
            for gx in 0..POOL_GRID {
                let x0 = gx * img.width / POOL_GRID;
                let x1 = ((gx + 1) * img.width / POOL_GRID).max(x0 + 1);
                let mut acc = 0.0;
                let mut n = 0usize;
                for y in y0..y1.min(img.height) {
                    for x in x0..x1.min(img.width) {
                        acc += img.at(c, y, x);
                        n += 1;
                    }
                }
                out.push(if n == 0 { 0.0 } else { acc / n as f64 });
            }
        }
    }
    out
}

/// Sample mean and unbiased covariance (denominator N-1), symmetrized.
pub fn feature_stats(fs: &FeatureSet) -> Result<FeatureStats> {
    let n = fs.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "covariance needs at least 2 vectors, got {n}"
        )));
    }
    let d = fs.dim();
    for v in &fs.vectors {
        if v.len() != d {
            return Err(Error::Invalid("feature vectors have mixed dimensions".into()));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("non-finite feature values".into()));
        }
    }
    let mut mu = vec![0.0; d];
    for v in &fs.vectors {
        for (m, x) in mu.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let mut sigma = vec![vec![0.0; d]; d];
    for v in &fs.vectors {
        for i in 0..d {
            let di = v[i] - mu[i];
            for j in i..d {
                sigma[i][j] += di * (v[j] - mu[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let val = sigma[i][j] / denom;
            sigma[i][j] = val;
            sigma[j][i] = val;
        }
    }
    Ok(FeatureStats { mu, sigma })
}

fn to_dmatrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    let d = m.len();
    DMatrix::from_fn(d, d, |i, j| m[i][j])
}

/// Symmetric positive-semidefinite square root via eigendecomposition;
/// negative eigenvalues (numerical noise) clamp to zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Frechet distance between two Gaussian fits:
/// `||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})`.
///
/// The cross term uses the stable form `Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2})`
/// and the result clamps at zero.
pub fn fid(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    let d = a.mu.len();
    if b.mu.len() != d {
        return Err(Error::Invalid(format!(
            "dimension mismatch: {d} vs {}",
            b.mu.len()
        )));
    }
    // The distance between a distribution and itself is zero by definition;
    // short-circuiting spares the eigen path its ~1e-15 noise.
    if a.mu == b.mu && a.sigma == b.sigma {
        return Ok(0.0);
    }
    let mean_term: f64 = a
        .mu
        .iter()
        .zip(&b.mu)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let sa = to_dmatrix(&a.sigma);
    let sb = to_dmatrix(&b.sigma);
    let sa_half = psd_sqrt(&sa);
    let inner = &sa_half * &sb * &sa_half;
    let cross = psd_sqrt(&inner).trace();
    let value = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite FID".into()));
    }
    Ok(value.max(0.0))
}

/// Polynomial kernel `(u . v / d + 1)^3`.
pub fn poly_kernel(u: &[f64], v: &[f64]) -> f64 {
    let d = u.len() as f64;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (dot / d + 1.0).powi(3)
}

/// Unbiased squared MMD with the cubic polynomial kernel: within-set sums
/// exclude the diagonal, the cross term spans all pairs.
pub fn kid(x: &FeatureSet, y: &FeatureSet) -> Result<f64> {
    let (m, n) = (x.len(), y.len());
    if m < 2 || n < 2 {
        return Err(Error::Invalid(format!(
            "KID needs at least 2 vectors per side, got {m} and {n}"
        )));
    }
    if x.dim() != y.dim() {
        return Err(Error::Invalid("feature dimensions differ".into()));
    }
    // Shifting every kernel value by a constant leaves the estimator
    // unchanged (the three means cancel it); anchoring at one cross value
    // makes degenerate repeated-vector sets evaluate to exactly zero.
    let anchor = poly_kernel(&x.vectors[0], &y.vectors[0]);
    let mut xx = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                xx += poly_kernel(&x.vectors[i], &x.vectors[j]) - anchor;
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                yy += poly_kernel(&y.vectors[i], &y.vectors[j]) - anchor;
            }
        }
    }
    let mut xy = 0.0;
    for i in 0..m {
        for j in 0..n {
            xy += poly_kernel(&x.vectors[i], &y.vectors[j]) - anchor;
        }
    }
    Ok(xx / (m * (m - 1)) as f64 + yy / (n * (n - 1)) as f64
        - 2.0 * xy / (m * n) as f64)
}

/// KID averaged over seeded random subsets, for parity with the common
/// subset protocol. Subset size caps at each side's length.
pub fn kid_subset_averaged(
    x: &FeatureSet,
    y: &FeatureSet,
    subsets: usize,
    subset_size: usize,
    seed: u64,
) -> Result<f64> {
    if subsets == 0 {
        return Err(Error::Invalid("need at least one subset".into()));
    }
    let mut rng = Pcg32::new(derive_seed(seed, "kid-subsets", 0));
    let mut total = 0.0;
    for _ in 0..subsets {
        let take = |fs: &FeatureSet, rng: &mut Pcg32| -> FeatureSet {
            let k = subset_size.min(fs.len());
            let idx = rng.choose_distinct(fs.len(), k);
            FeatureSet {
                vectors: idx.into_iter().map(|i| fs.vectors[i].clone()).collect(),
                source: fs.source.clone(),
            }
        };
        let xs = take(x, &mut rng);
        let ys = take(y, &mut rng);
        total += kid(&xs, &ys)?;
    }
    Ok(total / subsets as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricPair {
    pub fid: f64,
    pub kid: f64,
    pub n_real: usize,
    pub n_gen: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub overall: MetricPair,
    pub per_city: BTreeMap<String, MetricPair>,
    /// Cities present on only one side, skipped with a flag.
    pub skipped_cities: Vec<String>,
    /// True when both feature sets are exactly equal (fid is 0 by
    /// construction; kid is still the raw unbiased value).
    pub identical_sets: bool,
}

/// Groups feature ids by city: everything before the first underscore.
fn city_of(id: &str) -> String {
    id.split('_').next().unwrap_or("").to_string()
}

/// Computes overall and per-city FID/KID between two id-keyed feature maps.
pub fn evaluate_features(
    real: &BTreeMap<String, Vec<f64>>,
    generated: &BTreeMap<String, Vec<f64>>,
) -> Result<EvalReport> {
    if real.len() < 2 || generated.len() < 2 {
        return Err(Error::Invalid(
            "evaluation needs at least 2 images per side".into(),
        ));
    }
    let to_set = |m: &BTreeMap<String, Vec<f64>>, source: &str| FeatureSet {
        vectors: m.values().cloned().collect(),
        source: source.into(),
    };
    let real_set = to_set(real, "real");
    let gen_set = to_set(generated, "generated");
    let identical = real_set.vectors == gen_set.vectors;
    let overall = MetricPair {
        fid: fid(&feature_stats(&real_set)?, &feature_stats(&gen_set)?)?,
        kid: kid(&real_set, &gen_set)?,
        n_real: real_set.len(),
        n_gen: gen_set.len(),
    };

    let mut cities: BTreeMap<String, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = BTreeMap::new();
    for (id, v) in real {
        cities.entry(city_of(id)).or_default().0.push(v.clone());
    }
    for (id, v) in generated {
        cities.entry(city_of(id)).or_default().1.push(v.clone());
    }
    let mut per_city = BTreeMap::new();
    let mut skipped = Vec::new();
    for (city, (r, g)) in cities {
        if r.len() < 2 || g.len() < 2 {
            skipped.push(city);
            continue;
        }
        let rs = FeatureSet { vectors: r, source: "real".into() };
        let gs = FeatureSet { vectors: g, source: "generated".into() };
        per_city.insert(
            city,
            MetricPair {
                fid: fid(&feature_stats(&rs)?, &feature_stats(&gs)?)?,
                kid: kid(&rs, &gs)?,
                n_real: rs.len(),
                n_gen: gs.len(),
            },
        );
    }
    Ok(EvalReport {
        overall,
        per_city,
        skipped_cities: skipped,
        identical_sets: identical,
    })
}

#[derive(Serialize, Deserialize)]
struct FeatureLine {
    id: String,
    vec: Vec<f64>,
}

/// JSON-lines feature export: `{id, vec: [f64, ...]}` per line.
pub fn export_features(path: &Path, features: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (id, vec) in features {
        let line = serde_json::to_string(&FeatureLine { id: id.clone(), vec: vec.clone() })
            .map_err(|e| Error::Invalid(format!("serialize features: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn import_features(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FeatureLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        out.insert(rec.id, rec.vec);
    }
    Ok(out)
}

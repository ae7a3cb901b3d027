//! Synthetic data model: Zipf token statistics, quasi-orthogonal unit
//! embeddings, embedding matrices, population covariances, and bounded
//! output gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;
use crate::tensorio::{make_stream, DenseMatrix, RandomStream};

/// Configuration of one synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipfEnsemble {
    /// Vocabulary size.
    #[serde(rename = "V")]
    pub vocab: usize,
    /// Zipf decay exponent; must exceed 1.
    pub alpha: f64,
    /// Embedding dimension.
    pub d: usize,
    /// Number of sampled tokens (columns of the embedding matrix).
    #[serde(rename = "N")]
    pub samples: usize,
    pub seed: u64,
}

impl ZipfEnsemble {
    pub fn new(vocab: usize, alpha: f64, d: usize, samples: usize, seed: u64) -> Result<Self> {
        let ens = Self {
            vocab,
            alpha,
            d,
            samples,
            seed,
        };
        ens.validate()?;
        Ok(ens)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 1.0 {
            return Err(Error::Domain(format!(
                "Zipf exponent must exceed 1, got {}",
                self.alpha
            )));
        }
        if self.vocab < 2 {
            return Err(Error::Domain("vocabulary needs at least 2 tokens".into()));
        }
        if self.d < 1 || self.samples < 1 {
            return Err(Error::Domain(
                "embedding dimension and sample count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Unit embedding vectors (columns) together with their token probabilities.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    /// `d x V` matrix whose k-th column is the embedding of token k.
    pub vectors: DenseMatrix,
    /// Token probabilities, strictly decreasing, summing to 1.
    pub probs: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(vectors: DenseMatrix, probs: Vec<f64>) -> Result<Self> {
        if vectors.cols() != probs.len() {
            return Err(Error::Shape(format!(
                "{} embedding columns but {} probabilities",
                vectors.cols(),
                probs.len()
            )));
        }
        let sum = kahan_sum(probs.iter().copied());
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Data(format!("probabilities sum to {sum}, not 1")));
        }
        if probs.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Data(
                "probabilities must be strictly decreasing".into(),
            ));
        }
        for k in 0..vectors.cols() {
            let norm = kahan_sum(vectors.column(k).iter().map(|v| v * v)).sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::Data(format!(
                    "embedding column {k} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self { vectors, probs })
    }

    pub fn dim(&self) -> usize {
        self.vectors.rows()
    }

    pub fn vocab(&self) -> usize {
        self.vectors.cols()
    }
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Normalized Zipf probabilities `p_k = k^-alpha / H_V(alpha)`.
pub fn zipf_probabilities(vocab: usize, alpha: f64) -> Result<Vec<f64>> {
    if alpha <= 1.0 {
        return Err(Error::Domain(format!(
            "Zipf exponent must exceed 1, got {alpha}"
        )));
    }
    if vocab == 0 {
        return Err(Error::Domain("vocabulary must be nonempty".into()));
    }
    let weights: Vec<f64> = (1..=vocab).map(|k| (k as f64).powf(-alpha)).collect();
    let h = kahan_sum(weights.iter().copied());
    Ok(weights.into_iter().map(|w| w / h).collect())
}

/// Independent random unit embeddings: each column is a standard-normal
/// vector normalized to unit length.
///
/// Column signs are canonicalized (first nonzero component positive). Sign
/// flips leave every spectral quantity downstream unchanged — the Gram
/// magnitudes, the covariance, and all singular values — and pin down the
/// degenerate one-dimensional case to the constant +1.
pub fn random_unit_embeddings(vocab: usize, d: usize, rng: &mut RandomStream) -> DenseMatrix {
    assert!(vocab >= 1 && d >= 1);
    let mut entries = vec![0.0; d * vocab];
    let mut column = vec![0.0; d];
    for k in 0..vocab {
        loop {
            rng.fill_normal(&mut column);
            let norm = kahan_sum(column.iter().map(|v| v * v)).sqrt();
            if norm > 0.0 {
                let flip = column
                    .iter()
                    .find(|v| **v != 0.0)
                    .map_or(1.0, |v| v.signum());
                for (r, v) in column.iter().enumerate() {
                    entries[r * vocab + k] = v / norm * flip;
                }
                break;
            }
        }
    }
    DenseMatrix::from_vec_unchecked(d, vocab, entries)
}

/// Population covariance `Sigma = sum_k p_k v_k v_k^T` (symmetric PSD).
pub fn population_covariance(table: &EmbeddingTable) -> DenseMatrix {
    let d = table.dim();
    let v = table.vocab();
    // Sigma = (vectors * diag(p)) * vectors^T; scaling by p directly keeps
    // orthonormal tables exact.
    let mut scaled = vec![0.0; d * v];
    for r in 0..d {
        let row = table.vectors.row(r);
        for k in 0..v {
            scaled[r * v + k] = row[k] * table.probs[k];
        }
    }
    let m = DenseMatrix::from_vec_unchecked(d, v, scaled);
    let sigma = m.matmul(&table.vectors.transpose()).expect("shapes agree");
    // Force exact symmetry; gemm rounding may differ across the diagonal.
    let mut entries = sigma.entries().to_vec();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (entries[i * d + j] + entries[j * d + i]);
            entries[i * d + j] = avg;
            entries[j * d + i] = avg;
        }
    }
    DenseMatrix::from_vec_unchecked(d, d, entries)
}

/// I.i.d. token draws by inverse CDF over the cumulative probability vector.
/// Returned ids are 0-based ranks (rank k in the Zipf law is id k-1).
pub fn sample_tokens(probs: &[f64], n: usize, rng: &mut RandomStream) -> Vec<usize> {
    assert!(!probs.is_empty());
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cumulative.push(acc);
    }
    let last = probs.len() - 1;
    (0..n)
        .map(|_| {
            let u = rng.next_uniform();
            cumulative.partition_point(|c| *c <= u).min(last)
        })
        .collect()
}

/// Derived stream ids inside one ensemble.
const STREAM_EMBEDDINGS: u64 = 0;
const STREAM_TOKENS: u64 = 1;

/// Builds the embedding table for an ensemble (deterministic in the seed).
pub fn embedding_table(ens: &ZipfEnsemble) -> Result<EmbeddingTable> {
    ens.validate()?;
    let probs = zipf_probabilities(ens.vocab, ens.alpha)?;
    let mut rng = make_stream(ens.seed, STREAM_EMBEDDINGS);
    let vectors = random_unit_embeddings(ens.vocab, ens.d, &mut rng);
    EmbeddingTable::new(vectors, probs)
}

/// Builds the `d x N` embedding matrix `X`: column i is the embedding of the
/// i-th sampled token, so `(1/N) X X^T` estimates the population covariance.
pub fn build_embedding_matrix(ens: &ZipfEnsemble) -> Result<DenseMatrix> {
    let table = embedding_table(ens)?;
    let mut rng = make_stream(ens.seed, STREAM_TOKENS);
    let tokens = sample_tokens(&table.probs, ens.samples, &mut rng);
    Ok(embedding_matrix_from(&table, &tokens))
}

/// Assembles `X` from an explicit table and token id sequence.
pub fn embedding_matrix_from(table: &EmbeddingTable, tokens: &[usize]) -> DenseMatrix {
    let d = table.dim();
    let v = table.vocab();
    let n = tokens.len();
    assert!(n >= 1, "need at least one sampled token");
    let mut entries = vec![0.0; d * n];
    for r in 0..d {
        let row = table.vectors.row(r);
        for (i, &t) in tokens.iter().enumerate() {
            debug_assert!(t < v);
            entries[r * n + i] = row[t];
        }
    }
    DenseMatrix::from_vec_unchecked(d, n, entries)
}

/// Dense Gaussian matrix rescaled so its spectral norm equals `spec_norm`.
pub fn synthetic_output_gradient(
    n_rows: usize,
    n_cols: usize,
    spec_norm: f64,
    rng: &mut RandomStream,
) -> Result<DenseMatrix> {
    if spec_norm <= 0.0 {
        return Err(Error::Domain(format!(
            "target spectral norm must be positive, got {spec_norm}"
        )));
    }
    let mut entries = vec![0.0; n_rows * n_cols];
    rng.fill_normal(&mut entries);
    let g = DenseMatrix::from_vec_unchecked(n_rows, n_cols, entries);
    let sigma = spectral::singular_values(&g)?;
    let top = sigma[0];
    debug_assert!(top > 0.0);
    Ok(g.scale(spec_norm / top))
}

/// Weight gradient of a linear layer: the exact product `X * G`.
pub fn weight_gradient(x: &DenseMatrix, g: &DenseMatrix) -> Result<DenseMatrix> {
    x.matmul(g)
}

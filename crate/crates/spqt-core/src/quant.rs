//! Symmetric uniform quantizers: a global integer-level quantizer, a
//! block-wise variant, and a 4-bit E2M1-style grid quantizer with exact or
//! power-of-two block scales. Values stay in `f64` carriers; this is a
//! simulator of the arithmetic, not a bit-packer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::DenseMatrix;

/// Tie-breaking rule for `round(a/s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Ties to even; removes the systematic half-step bias.
    HalfEven,
    /// Ties away from zero.
    HalfAway,
}

impl Rounding {
    fn round(self, x: f64) -> f64 {
        match self {
            Rounding::HalfEven => x.round_ties_even(),
            Rounding::HalfAway => x.round(),
        }
    }
}

/// How per-block scales are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Full-precision scales.
    Exact,
    /// Scales rounded up to the nearest power of two (MXFP4-style).
    Pow2,
}

/// Quantizer family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Fixed explicit step everywhere.
    UniformStep,
    /// Integer grid `{-L..L}` scaled by `block_max / L`.
    IntLevels,
    /// The 4-bit E2M1 value grid scaled by `block_max / 6`.
    E2m1Grid,
}

/// Block layout: contiguous 1-D segments along each row, or one global block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSize {
    Global,
    Size(usize),
}

impl Serialize for BlockSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BlockSize::Global => s.serialize_str("global"),
            BlockSize::Size(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BlockSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) if n >= 1 => Ok(BlockSize::Size(n as usize)),
            Raw::Num(n) => Err(serde::de::Error::custom(format!(
                "block_size must be >= 1, got {n}"
            ))),
            Raw::Text(t) if t == "global" => Ok(BlockSize::Global),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "block_size must be a count or \"global\", got {t:?}"
            ))),
        }
    }
}

/// Full description of one quantizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub family: Family,
    /// Maximum integer level (int_levels only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
    /// Explicit step (uniform_step only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub block_size: BlockSize,
    pub rounding: Rounding,
    pub scale_mode: ScaleMode,
}

impl QuantScheme {
    /// Signed 4-bit integer quantizer: L = 7, one global scale.
    pub fn int4() -> Self {
        Self {
            family: Family::IntLevels,
            l: Some(7),
            step: None,
            block_size: BlockSize::Global,
            rounding: Rounding::HalfEven,
            scale_mode: ScaleMode::Exact,
        }
    }

    /// NVFP4-style: E2M1 grid, 16-element blocks, exact scales.
    pub fn nvfp4() -> Self {
        Self {
            family: Family::E2m1Grid,
            l: None,
            step: None,
            block_size: BlockSize::Size(16),
            rounding: Rounding::HalfEven,
            scale_mode: ScaleMode::Exact,
        }
    }

    /// MXFP4-style: E2M1 grid, 32-element blocks, power-of-two scales.
    pub fn mxfp4() -> Self {
        Self {
            family: Family::E2m1Grid,
            l: None,
            step: None,
            block_size: BlockSize::Size(32),
            rounding: Rounding::HalfEven,
            scale_mode: ScaleMode::Pow2,
        }
    }

    /// Fixed-step quantizer with one explicit step everywhere.
    pub fn uniform_step(step: f64) -> Self {
        Self {
            family: Family::UniformStep,
            l: None,
            step: Some(step),
            block_size: BlockSize::Global,
            rounding: Rounding::HalfEven,
            scale_mode: ScaleMode::Exact,
        }
    }

    pub fn int_levels(l: u32, block_size: BlockSize) -> Self {
        Self {
            family: Family::IntLevels,
            l: Some(l),
            step: None,
            block_size,
            rounding: Rounding::HalfEven,
            scale_mode: ScaleMode::Exact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            Family::IntLevels => {
                let l = self
                    .l
                    .ok_or_else(|| Error::Config("int_levels requires `l`".into()))?;
                if l < 1 {
                    return Err(Error::Config("int_levels requires l >= 1".into()));
                }
            }
            Family::UniformStep => {
                let s = self
                    .step
                    .ok_or_else(|| Error::Config("uniform_step requires `step`".into()))?;
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::Config(format!(
                        "uniform_step requires a positive finite step, got {s}"
                    )));
                }
            }
            Family::E2m1Grid => {}
        }
        if let BlockSize::Size(0) = self.block_size {
            return Err(Error::Config("block_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Moments and histogram of a quantization error matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    /// 51 bin edges spanning `[min, max]`.
    pub bin_edges: Vec<f64>,
    /// 50 bin counts summing to the element count.
    pub counts: Vec<u64>,
    /// Step the stats refer to (mean block step for block-wise schemes).
    pub step_used: f64,
}

/// Output of a quantization run.
#[derive(Debug, Clone)]
pub struct QuantResult {
    pub matrix: DenseMatrix,
    /// Per-block scales in block order (single entry for global schemes).
    pub scales: Vec<f64>,
    /// Number of all-zero blocks that were passed through with scale 0.
    pub degenerate_blocks: usize,
    family: Family,
}

/// Mean cell width of the E2M1 grid in scale units: 16 gaps spanning
/// [-6, 6] give 12/16. This is the step whose uniform error model
/// `Var = s^2/12` matches the grid's error variance.
const E2M1_MEAN_GAP: f64 = 0.75;

impl QuantResult {
    fn gap(&self, worst_case: bool) -> f64 {
        match self.family {
            Family::UniformStep | Family::IntLevels => 1.0,
            // Fine half of the grid has gap 0.5, coarse half gap 1.0.
            Family::E2m1Grid => {
                if worst_case {
                    1.0
                } else {
                    E2M1_MEAN_GAP
                }
            }
        }
    }

    /// Mean effective step over live blocks: the `s` of the uniform error
    /// model `Var(e) = s^2/12`.
    pub fn mean_step(&self) -> f64 {
        let live: Vec<f64> = self.scales.iter().copied().filter(|s| *s > 0.0).collect();
        if live.is_empty() {
            0.0
        } else {
            self.gap(false) * live.iter().sum::<f64>() / live.len() as f64
        }
    }

    /// Worst-case step across blocks: half of it bounds any single entry
    /// error almost surely, so it parameterizes tail bounds.
    pub fn max_step(&self) -> f64 {
        self.gap(true) * self.scales.iter().copied().fold(0.0, f64::max)
    }
}

/// One scalar through the symmetric uniform quantizer `s * round(a/s)`.
pub fn quantize_scalar(a: f64, s: f64, rounding: Rounding) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("step must be positive, got {s}")));
    }
    if !a.is_finite() {
        return Err(Error::Data(format!("cannot quantize non-finite value {a}")));
    }
    Ok(s * rounding.round(a / s))
}

/// Global uniform quantization to integer levels `-L..L` with
/// `s = max|A| / L`. An all-zero matrix passes through with step 0.
pub fn quantize_uniform(
    a: &DenseMatrix,
    levels: u32,
    rounding: Rounding,
) -> Result<(DenseMatrix, f64)> {
    if levels < 1 {
        return Err(Error::Domain("level count must be >= 1".into()));
    }
    let a_max = a.max_abs();
    if a_max == 0.0 {
        return Ok((a.clone(), 0.0));
    }
    let s = a_max / levels as f64;
    let entries = a
        .entries()
        .iter()
        .map(|&v| s * rounding.round(v / s))
        .collect();
    Ok((
        DenseMatrix::from_vec_unchecked(a.rows(), a.cols(), entries),
        s,
    ))
}

/// The 17-value signed E2M1 grid used by the 4-bit float simulator.
pub fn e2m1_grid() -> &'static [f64; 17] {
    &[
        -6.0, -5.0, -4.0, -3.0, -2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0,
        6.0,
    ]
}

/// Maximum magnitude representable on the E2M1 grid.
const E2M1_MAX: f64 = 6.0;

/// Nearest grid value to `x`. Ties go to the even grid index under
/// `HalfEven` (symmetric because the grid has odd length and is centered on
/// zero) and to the larger magnitude under `HalfAway`.
fn nearest_grid(x: f64, grid: &[f64], rounding: Rounding) -> f64 {
    let hi = grid.partition_point(|g| *g < x);
    if hi == 0 {
        return grid[0];
    }
    if hi == grid.len() {
        return grid[grid.len() - 1];
    }
    let lo = hi - 1;
    let d_lo = x - grid[lo];
    let d_hi = grid[hi] - x;
    if d_lo < d_hi {
        grid[lo]
    } else if d_hi < d_lo {
        grid[hi]
    } else {
        match rounding {
            Rounding::HalfEven => {
                if lo % 2 == 0 {
                    grid[lo]
                } else {
                    grid[hi]
                }
            }
            Rounding::HalfAway => {
                if grid[hi].abs() > grid[lo].abs() {
                    grid[hi]
                } else {
                    grid[lo]
                }
            }
        }
    }
}

/// Smallest power of two that is >= `s` (for `s > 0`).
fn pow2_round_up(s: f64) -> f64 {
    debug_assert!(s > 0.0 && s.is_finite());
    let mut p = (2f64).powi(s.log2().ceil() as i32);
    while p < s {
        p *= 2.0;
    }
    while p * 0.5 >= s {
        p *= 0.5;
    }
    p
}

/// Flat index ranges of the 1-D blocks for an `rows x cols` matrix.
fn block_ranges(rows: usize, cols: usize, block: BlockSize) -> Vec<std::ops::Range<usize>> {
    match block {
        BlockSize::Global => vec![0..rows * cols],
        BlockSize::Size(b) => {
            let mut out = Vec::with_capacity(rows * cols.div_ceil(b));
            for r in 0..rows {
                let row_start = r * cols;
                let mut c = 0;
                while c < cols {
                    let end = (c + b).min(cols);
                    out.push(row_start + c..row_start + end);
                    c = end;
                }
            }
            out
        }
    }
}

fn block_scale(family: Family, scheme: &QuantScheme, block_max: f64) -> f64 {
    let raw = match family {
        Family::UniformStep => scheme.step.expect("validated"),
        Family::IntLevels => block_max / f64::from(scheme.l.expect("validated")),
        Family::E2m1Grid => block_max / E2M1_MAX,
    };
    if raw == 0.0 {
        return 0.0;
    }
    match scheme.scale_mode {
        ScaleMode::Exact => raw,
        ScaleMode::Pow2 => pow2_round_up(raw),
    }
}

fn quantize_block(
    data: &mut [f64],
    scale: f64,
    family: Family,
    levels: u32,
    rounding: Rounding,
) {
    if scale == 0.0 {
        return;
    }
    match family {
        Family::UniformStep | Family::IntLevels => {
            let cap = f64::from(levels);
            for v in data {
                let mut q = rounding.round(*v / scale);
                if family == Family::IntLevels {
                    q = q.clamp(-cap, cap);
                }
                *v = scale * q;
            }
        }
        Family::E2m1Grid => {
            let grid = e2m1_grid();
            for v in data {
                *v = scale * nearest_grid(*v / scale, grid, rounding);
            }
        }
    }
}

/// Block-wise quantization with scales derived from each block's dynamic
/// range. All-zero blocks pass through unchanged with scale 0.
pub fn quantize_blockwise(a: &DenseMatrix, scheme: &QuantScheme) -> Result<QuantResult> {
    scheme.validate()?;
    let ranges = block_ranges(a.rows(), a.cols(), scheme.block_size);
    let mut entries = a.entries().to_vec();
    let mut scales = Vec::with_capacity(ranges.len());
    let mut degenerate = 0usize;
    let levels = scheme.l.unwrap_or(0);
    for range in ranges {
        let block = &mut entries[range];
        let block_max = block.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if block_max == 0.0 && scheme.family != Family::UniformStep {
            degenerate += 1;
            0.0
        } else {
            block_scale(scheme.family, scheme, block_max)
        };
        quantize_block(block, scale, scheme.family, levels, scheme.rounding);
        scales.push(scale);
    }
    Ok(QuantResult {
        matrix: DenseMatrix::from_vec_unchecked(a.rows(), a.cols(), entries),
        scales,
        degenerate_blocks: degenerate,
        family: scheme.family,
    })
}

/// Re-applies a quantizer with externally fixed per-block scales (the
/// "same scheme and scales" form of the idempotence contract).
pub fn quantize_with_scales(
    a: &DenseMatrix,
    scheme: &QuantScheme,
    scales: &[f64],
) -> Result<QuantResult> {
    scheme.validate()?;
    let ranges = block_ranges(a.rows(), a.cols(), scheme.block_size);
    if ranges.len() != scales.len() {
        return Err(Error::Shape(format!(
            "{} blocks but {} scales",
            ranges.len(),
            scales.len()
        )));
    }
    let mut entries = a.entries().to_vec();
    let levels = scheme.l.unwrap_or(0);
    for (range, &scale) in ranges.into_iter().zip(scales) {
        quantize_block(&mut entries[range], scale, scheme.family, levels, scheme.rounding);
    }
    Ok(QuantResult {
        matrix: DenseMatrix::from_vec_unchecked(a.rows(), a.cols(), entries),
        scales: scales.to_vec(),
        degenerate_blocks: scales.iter().filter(|s| **s == 0.0).count(),
        family: scheme.family,
    })
}

/// Quantization error matrix `E = A_tilde - A`.
pub fn error_matrix(a: &DenseMatrix, a_tilde: &DenseMatrix) -> Result<DenseMatrix> {
    a_tilde.sub(a)
}

/// Exact sample moments and a 50-bin histogram of the error entries.
pub fn error_stats(e: &DenseMatrix, step_used: f64) -> ErrorStats {
    let n = e.entries().len() as f64;
    let mean = e.entries().iter().sum::<f64>() / n;
    let variance = e.entries().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let min = e.entries().iter().copied().fold(f64::INFINITY, f64::min);
    let max = e.entries().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    const BINS: usize = 50;
    let span = max - min;
    let mut counts = vec![0u64; BINS];
    for v in e.entries() {
        let idx = if span == 0.0 {
            0
        } else {
            (((v - min) / span) * BINS as f64).floor().min(BINS as f64 - 1.0) as usize
        };
        counts[idx] += 1;
    }
    let bin_edges = (0..=BINS)
        .map(|i| min + span * i as f64 / BINS as f64)
        .collect();
    ErrorStats {
        mean,
        variance,
        min,
        max,
        bin_edges,
        counts,
        step_used,
    }
}

//! Group-wise integer quantization of trainable parameters.
//!
//! Each group of `g` consecutive parameters stores `n`-bit codes plus a scale `β`
//! and zero value `μ`: `θ_q = round((θ − μ)/β)·β + μ`, `β = (θ_max − θ_min)/(2ⁿ − 1)`,
//! `μ = θ_min`. Rounding is half-away-from-zero.

use half::f16;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

pub const MAX_BITS: u32 = 32;
const BLOB_MAGIC: &[u8; 4] = b"QPQ1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub bits: u32,
    pub group_size: usize,
    pub scale_bits: u32,
    pub kappa: f64,
    /// Per-group bit widths from the group ranges (zero bits prunes a group).
    pub adaptive: bool,
}

impl QuantConfig {
    pub fn uniform(bits: u32, group_size: usize) -> Self {
        Self {
            bits,
            group_size,
            scale_bits: 16,
            kappa: 0.0,
            adaptive: false,
        }
    }

    pub fn adaptive(bits: u32, group_size: usize, kappa: f64) -> Self {
        Self {
            adaptive: true,
            kappa,
            ..Self::uniform(bits, group_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 {
            return Err(Error::InvalidConfig("group size must be positive".into()));
        }
        if self.bits > MAX_BITS || (self.bits == 0 && !self.adaptive) {
            return Err(Error::InvalidConfig(format!(
                "{} bits: uniform quantization needs 1..={MAX_BITS} bits",
                self.bits
            )));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::InvalidConfig(format!("kappa {} must be ≥ 0", self.kappa)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedGroup<T> {
    pub bits: u32,
    pub codes: Vec<u32>,
    pub beta: T,
    pub mu: T,
    /// `θ_max − θ_min` of the original values.
    pub range: T,
    pub len: usize,
}

impl<T: Scalar> QuantizedGroup<T> {
    pub fn dequantize(&self) -> Vec<T> {
        if self.bits == 0 {
            return vec![self.mu; self.len];
        }
        self.codes.iter().map(|&c| T::of(c as f64) * self.beta + self.mu).collect()
    }

    pub fn is_pruned(&self) -> bool {
        self.bits == 0
    }
}

fn range_of<T: Scalar>(theta: &[T]) -> (T, T) {
    theta
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Quantizes one group to `bits` bits. `bits = 0` keeps only `μ` (a pruned group).
pub fn quantize_group<T: Scalar>(theta: &[T], bits: u32) -> Result<QuantizedGroup<T>> {
    if theta.is_empty() {
        return Err(Error::InvalidConfig("cannot quantize an empty group".into()));
    }
    if bits > MAX_BITS {
        return Err(Error::InvalidConfig(format!("{bits} bits exceeds {MAX_BITS}")));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite parameter in quantization group".into()));
    }
    let (lo, hi) = range_of(theta);
    let range = hi - lo;
    if bits == 0 {
        return Ok(QuantizedGroup {
            bits,
            codes: Vec::new(),
            beta: T::zero(),
            mu: lo,
            range,
            len: theta.len(),
        });
    }
    let levels = ((1u64 << bits) - 1) as f64;
    let beta = range / T::of(levels);
    let codes = if beta > T::zero() {
        theta
            .iter()
            .map(|&v| ((v - lo) / beta).as_f64().round().clamp(0.0, levels) as u32)
            .collect()
    } else {
        vec![0; theta.len()]
    };
    Ok(QuantizedGroup {
        bits,
        codes,
        beta,
        mu: lo,
        range,
        len: theta.len(),
    })
}

/// Quantizes a flat parameter vector group by group.
pub fn quantize<T: Scalar>(theta: &[T], cfg: &QuantConfig) -> Result<Vec<QuantizedGroup<T>>> {
    cfg.validate()?;
    let chunks: Vec<&[T]> = theta.chunks(cfg.group_size).collect();
    let bits = if cfg.adaptive {
        let ranges: Vec<f64> = chunks
            .iter()
            .map(|c| {
                let (lo, hi) = range_of(c);
                (hi - lo).as_f64()
            })
            .collect();
        adaptive_bit_load(&ranges, cfg.bits, cfg.kappa, MAX_BITS, BitLoadRule::Corrected)?
    } else {
        vec![cfg.bits; chunks.len()]
    };
    chunks.iter().zip(bits).map(|(c, b)| quantize_group(c, b)).collect()
}

pub fn dequantize<T: Scalar>(groups: &[QuantizedGroup<T>]) -> Vec<T> {
    groups.iter().flat_map(|g| g.dequantize()).collect()
}

/// Quantize-dequantize, the forward value used in quantization-aware training.
pub fn fake_quantize<T: Scalar>(theta: &[T], cfg: &QuantConfig) -> Result<Vec<T>> {
    Ok(dequantize(&quantize(theta, cfg)?))
}

/// Straight-through QAT: forward returns `θ_q`, backward passes the upstream gradient unchanged.
#[derive(Clone, Debug)]
pub struct QatOutput<T> {
    pub forward: Vec<T>,
}

impl<T: Scalar> QatOutput<T> {
    pub fn backward(&self, upstream: &[T]) -> Result<Vec<T>> {
        if upstream.len() != self.forward.len() {
            return Err(shape_err(format!("{} entries", self.forward.len()), upstream.len()));
        }
        Ok(upstream.to_vec())
    }
}

pub fn qat_forward_backward<T: Scalar>(theta: &[T], cfg: &QuantConfig) -> Result<QatOutput<T>> {
    Ok(QatOutput {
        forward: fake_quantize(theta, cfg)?,
    })
}

/// Storage cost per parameter, `n + 2·scale_bits/g` (β and μ shared by a group).
pub fn bits_per_param(bits: u32, group_size: usize, scale_bits: u32) -> Result<Ratio<u64>> {
    if group_size == 0 {
        return Err(Error::InvalidConfig("group size must be positive".into()));
    }
    Ok(Ratio::from_integer(bits as u64) + Ratio::new(2 * scale_bits as u64, group_size as u64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitLoadRule {
    /// `round(q + log₂(Δᵢ^κ / Δ̄))`: uniform at κ = 0 and for equal ranges.
    #[default]
    Corrected,
    /// `round(q · log₂(Δᵢ^κ / Δ̄))` exactly as printed.
    Verbatim,
}

/// Per-group bit widths from group ranges `Δᵢ`, with `Δ̄ = mean(Δᵢ^κ)`, clamped to `[0, max_bits]`.
pub fn adaptive_bit_load(
    ranges: &[f64],
    base_bits: u32,
    kappa: f64,
    max_bits: u32,
    rule: BitLoadRule,
) -> Result<Vec<u32>> {
    if !(kappa >= 0.0) {
        return Err(Error::InvalidConfig(format!("kappa {kappa} must be ≥ 0")));
    }
    if let Some(bad) = ranges.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::InvalidConfig(format!("group range {bad} must be ≥ 0")));
    }
    if ranges.is_empty() {
        return Ok(Vec::new());
    }
    let weights: Vec<f64> = ranges.iter().map(|d| d.powf(kappa)).collect();
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    let q = base_bits as f64;
    Ok(weights
        .iter()
        .map(|&w| {
            if w == 0.0 || mean == 0.0 {
                return 0;
            }
            let l = (w / mean).log2();
            let raw = match rule {
                BitLoadRule::Corrected => q + l,
                BitLoadRule::Verbatim => q * l,
            };
            raw.round().clamp(0.0, max_bits as f64) as u32
        })
        .collect())
}

/// Serializes groups as: magic `QPQ1`, mode (0 uniform, 1 adaptive), `n`, scale bits,
/// a reserved byte, `g` (u32), group count (u32), total length (u64); then per group
/// [bit width u8 when adaptive], `β` and `μ` as IEEE half floats, and codes packed
/// `n` bits each, LSB-first, little-endian.
pub fn to_blob<T: Scalar>(groups: &[QuantizedGroup<T>], cfg: &QuantConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    if cfg.scale_bits != 16 {
        return Err(Error::InvalidConfig("blobs store β and μ as 16-bit floats".into()));
    }
    let total: usize = groups.iter().map(|g| g.len).sum();
    let mut out = Vec::new();
    out.extend_from_slice(BLOB_MAGIC);
    out.push(u8::from(cfg.adaptive));
    out.push(cfg.bits as u8);
    out.push(cfg.scale_bits as u8);
    out.push(0);
    out.extend_from_slice(&(cfg.group_size as u32).to_le_bytes());
    out.extend_from_slice(&(groups.len() as u32).to_le_bytes());
    out.extend_from_slice(&(total as u64).to_le_bytes());
    for g in groups {
        if cfg.adaptive {
            out.push(g.bits as u8);
        } else if g.bits != cfg.bits {
            return Err(Error::Format(format!("group has {} bits in a {}-bit blob", g.bits, cfg.bits)));
        }
        out.extend_from_slice(&f16::from_f64(g.beta.as_f64()).to_le_bytes());
        out.extend_from_slice(&f16::from_f64(g.mu.as_f64()).to_le_bytes());
        out.extend(pack_codes(&g.codes, g.bits));
    }
    Ok(out)
}

pub fn from_blob<T: Scalar>(blob: &[u8]) -> Result<(QuantConfig, Vec<QuantizedGroup<T>>)> {
    let mut r = Reader { buf: blob, pos: 0 };
    if r.take(4)? != BLOB_MAGIC {
        return Err(Error::Format("bad quantized blob magic".into()));
    }
    let adaptive = r.u8()? == 1;
    let bits = r.u8()? as u32;
    let scale_bits = r.u8()? as u32;
    r.u8()?;
    let group_size = r.u32()? as usize;
    let count = r.u32()? as usize;
    let total = r.u64()? as usize;
    let cfg = QuantConfig {
        bits,
        group_size,
        scale_bits,
        kappa: 0.0,
        adaptive,
    };
    cfg.validate()?;
    let mut groups = Vec::with_capacity(count);
    let mut remaining = total;
    for _ in 0..count {
        let len = remaining.min(group_size);
        remaining -= len;
        let gbits = if adaptive { r.u8()? as u32 } else { bits };
        let beta = f16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")).to_f64();
        let mu = f16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")).to_f64();
        let nbytes = (len * gbits as usize).div_ceil(8);
        let codes = if gbits == 0 { Vec::new() } else { unpack_codes(r.take(nbytes)?, gbits, len) };
        groups.push(QuantizedGroup {
            bits: gbits,
            codes,
            beta: T::of(beta),
            mu: T::of(mu),
            range: T::of(beta * ((1u64 << gbits) - 1) as f64),
            len,
        });
    }
    if remaining != 0 || r.pos != blob.len() {
        return Err(Error::Format("quantized blob length does not match its header".into()));
    }
    Ok((cfg, groups))
}

fn pack_codes(codes: &[u32], bits: u32) -> Vec<u8> {
    let mut out = vec![0u8; (codes.len() * bits as usize).div_ceil(8)];
    for (i, &c) in codes.iter().enumerate() {
        for b in 0..bits as usize {
            if (c >> b) & 1 == 1 {
                let pos = i * bits as usize + b;
                out[pos / 8] |= 1 << (pos % 8);
            }
        }
    }
    out
}

fn unpack_codes(bytes: &[u8], bits: u32, len: usize) -> Vec<u32> {
    (0..len)
        .map(|i| {
            (0..bits as usize).fold(0u32, |acc, b| {
                let pos = i * bits as usize + b;
                acc | ((((bytes[pos / 8] >> (pos % 8)) & 1) as u32) << b)
            })
        })
        .collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated quantized blob".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

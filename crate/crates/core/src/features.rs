//! Sliding-window feature sequences with channel-wise z-normalization.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::OnlineSignature;
use crate::pathsig::{self, Point};
use crate::{Error, Result};

/// Channels whose population standard deviation falls below this are zeroed.
pub const MIN_CHANNEL_STD: f64 = 1e-12;

const MAGIC: &[u8; 4] = b"LNPS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Length-normalized signature levels `1..=m`.
    Lnps,
    /// Only level `m` of the length-normalized signature.
    LnpsLevel,
    /// Length-normalized rotation invariants up to level `m`.
    LnpsRi,
    /// Point-to-point displacement; ignores window and level.
    DeltaXy,
}

impl Variant {
    fn code(self) -> u32 {
        match self {
            Variant::Lnps => 0,
            Variant::LnpsLevel => 1,
            Variant::LnpsRi => 2,
            Variant::DeltaXy => 3,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            0 => Variant::Lnps,
            1 => Variant::LnpsLevel,
            2 => Variant::LnpsRi,
            3 => Variant::DeltaXy,
            other => return Err(Error::Format(format!("unknown variant code {other}"))),
        })
    }
}

/// Window `W = 2 * window_half + 1` points centred on each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub window_half: usize,
    pub level: usize,
    pub variant: Variant,
}

impl FeatureConfig {
    pub fn lnps(window_half: usize, level: usize) -> Self {
        FeatureConfig {
            window_half,
            level,
            variant: Variant::Lnps,
        }
    }

    pub fn window_size(&self) -> usize {
        2 * self.window_half + 1
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = match self.variant {
            Variant::Lnps | Variant::LnpsLevel => (1, pathsig::MAX_LEVEL),
            Variant::LnpsRi => (pathsig::RI_MIN_LEVEL, pathsig::RI_MAX_LEVEL),
            Variant::DeltaXy => return Ok(()),
        };
        if !(lo..=hi).contains(&self.level) {
            return Err(Error::InvalidArgument(format!(
                "level {} outside {lo}..={hi} for {:?}",
                self.level, self.variant
            )));
        }
        if self.window_half == 0 {
            return Err(Error::InvalidArgument("window half-width must be at least 1".into()));
        }
        Ok(())
    }

    /// Feature dimension `F` of every row.
    pub fn dim(&self) -> usize {
        match self.variant {
            Variant::Lnps => pathsig::signature_dim(self.level),
            Variant::LnpsLevel => 1 << self.level,
            Variant::LnpsRi => pathsig::rotation_invariant_dim(self.level),
            Variant::DeltaXy => 2,
        }
    }
}

/// `N` rows of dimension `F`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f64>,
    dim: usize,
    pub config: FeatureConfig,
    pub normalized: bool,
}

impl FeatureSequence {
    pub fn from_rows(rows: &[Vec<f64>], config: FeatureConfig) -> Result<Self> {
        let dim = rows.first().map_or(config.dim(), Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureSequence {
            data,
            dim,
            config,
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[c])
    }

    /// Writes the binary cache container.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [
            VERSION,
            self.len() as u32,
            self.dim as u32,
            self.config.window_half as u32,
            self.config.level as u32,
            self.config.variant.code(),
            u32::from(self.normalized),
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.data.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, expected LNPS".into()));
        }
        let mut header = [0u32; 7];
        for h in &mut header {
            let mut b = [0u8; 4];
            read_exact(&mut r, &mut b)?;
            *h = u32::from_le_bytes(b);
        }
        let [version, n, dim, window_half, level, variant, normalized] = header;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let config = FeatureConfig {
            window_half: window_half as usize,
            level: level as usize,
            variant: Variant::from_code(variant)?,
        };
        let count = (n as usize)
            .checked_mul(dim as usize)
            .ok_or_else(|| Error::Format("size overflow".into()))?;
        let mut data = Vec::with_capacity(count);
        let mut b = [0u8; 8];
        for _ in 0..count {
            read_exact(&mut r, &mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        Ok(FeatureSequence {
            data,
            dim: dim as usize,
            config,
            normalized: normalized != 0,
        })
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated container: {e}")))
}

/// Points of the window centred on `n` (0-based), truncated at both ends.
pub fn window_at(points: &[Point], n: usize, window_half: usize) -> Result<&[Point]> {
    if n >= points.len() {
        return Err(Error::InvalidArgument(format!(
            "window centre {n} outside a signature of {} points",
            points.len()
        )));
    }
    let lo = n.saturating_sub(window_half);
    let hi = (n + window_half).min(points.len() - 1);
    Ok(&points[lo..=hi])
}

fn window_row(window: &[Point], config: &FeatureConfig) -> Result<Vec<f64>> {
    if window.len() < 2 {
        return Ok(vec![0.0; config.dim()]);
    }
    Ok(match config.variant {
        Variant::Lnps => pathsig::lnps(window, config.level)?.values,
        Variant::LnpsLevel => pathsig::lnps(window, config.level)?.level(config.level).to_vec(),
        Variant::LnpsRi => pathsig::rotation_invariants(window, config.level)?.values,
        Variant::DeltaXy => unreachable!("delta_xy rows are not windowed"),
    })
}

/// One unnormalized feature row per point of `signature`.
pub fn extract(signature: &OnlineSignature, config: &FeatureConfig) -> Result<FeatureSequence> {
    config.validate()?;
    if signature.is_empty() {
        return Err(Error::InvalidArgument("empty signature".into()));
    }
    let points = signature.xy();
    let rows: Vec<Vec<f64>> = match config.variant {
        Variant::DeltaXy => std::iter::once(vec![0.0, 0.0])
            .chain(points.windows(2).map(|w| vec![w[1][0] - w[0][0], w[1][1] - w[0][1]]))
            .collect(),
        _ => (0..points.len())
            .map(|n| window_row(window_at(&points, n, config.window_half)?, config))
            .collect::<Result<_>>()?,
    };
    FeatureSequence::from_rows(&rows, *config)
}

/// Per-signature z-score of every channel (population standard deviation).
pub fn channel_znorm(seq: &FeatureSequence) -> FeatureSequence {
    let n = seq.len();
    let mut out = seq.clone();
    out.normalized = true;
    if n == 0 {
        return out;
    }
    for c in 0..seq.dim() {
        let mean = seq.channel(c).sum::<f64>() / n as f64;
        let var = seq.channel(c).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        for r in 0..n {
            let v = &mut out.data[r * seq.dim + c];
            *v = if std < MIN_CHANNEL_STD { 0.0 } else { (*v - mean) / std };
        }
    }
    out
}

/// `extract` followed by `channel_znorm`: the representation every verifier consumes.
pub fn featurize(signature: &OnlineSignature, config: &FeatureConfig) -> Result<FeatureSequence> {
    Ok(channel_znorm(&extract(signature, config)?))
}

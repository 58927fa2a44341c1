//! Truncated path signatures of 2-D polylines.
//!
//! A polyline is treated as the piecewise-linear path through its points. The
//! signature of one straight segment with displacement `d` is the truncated
//! tensor exponential (level `k` is `d^{⊗k} / k!`) and segments are joined with
//! the truncated tensor (Chen) product.
//!
//! Level `k` holds `2^k` coefficients in lexicographic word order over the
//! alphabet `{1, 2}` = `{x, y}`: level 2 is ordered `xx, xy, yx, yy`, where
//! `xy` is the iterated integral with the `x` increment taken first. The
//! constant level-0 term is implicit and never stored. This layout is part of
//! the feature cache format and must not change.

use std::ops::{Add, AddAssign, Div, Mul};

use num_complex::Complex64;

use crate::{Error, Result};

pub const MAX_LEVEL: usize = 6;
pub const RI_MIN_LEVEL: usize = 2;
pub const RI_MAX_LEVEL: usize = 4;

pub type Point = [f64; 2];

/// Number of stored coefficients for levels `1..=m`.
pub fn signature_dim(m: usize) -> usize {
    (1usize << (m + 1)) - 2
}

/// Arc length of the polyline; zero for a single point.
pub fn path_length(points: &[Point]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

trait Scalar:
    Copy + Default + Add<Output = Self> + AddAssign + Mul<Output = Self> + Mul<f64, Output = Self> + Div<f64, Output = Self>
{
}

impl Scalar for f64 {}
impl Scalar for Complex64 {}

/// `a ⊗ b` appended to `out`.
fn tensor_into<T: Scalar>(a: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(out.len(), a.len() * b.len());
    for (i, &ai) in a.iter().enumerate() {
        let row = &mut out[i * b.len()..(i + 1) * b.len()];
        for (o, &bj) in row.iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
}

fn zero_blocks<T: Scalar>(m: usize) -> Vec<Vec<T>> {
    (1..=m).map(|k| vec![T::default(); 1 << k]).collect()
}

/// Levels `1..=m` of the tensor exponential of a two-letter increment.
fn exp_blocks<T: Scalar>(step: [T; 2], m: usize) -> Vec<Vec<T>> {
    let mut blocks: Vec<Vec<T>> = Vec::with_capacity(m);
    blocks.push(step.to_vec());
    for k in 2..=m {
        let prev = &blocks[k - 2];
        let mut next = vec![T::default(); 1 << k];
        for (i, &p) in prev.iter().enumerate() {
            next[2 * i] = p * step[0] / k as f64;
            next[2 * i + 1] = p * step[1] / k as f64;
        }
        blocks.push(next);
    }
    blocks
}

/// Truncated Chen product `a ⊗ b` of two graded tensors with implicit unit.
fn chen<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> Vec<Vec<T>> {
    let m = a.len();
    let mut out = zero_blocks::<T>(m);
    for k in 1..=m {
        let dst = &mut out[k - 1];
        for (d, (&x, &y)) in dst.iter_mut().zip(a[k - 1].iter().zip(&b[k - 1])) {
            *d = x + y;
        }
        for j in 1..k {
            tensor_into(&a[j - 1], &b[k - j - 1], dst);
        }
    }
    out
}

/// In place `sig ← sig ⊗ exp(step)`. Levels are updated top-down so each
/// level reads the not-yet-updated lower levels.
fn extend<T: Scalar>(sig: &mut [Vec<T>], step: [T; 2]) {
    let m = sig.len();
    let e = exp_blocks(step, m);
    for k in (1..=m).rev() {
        let (lower, upper) = sig.split_at_mut(k - 1);
        let dst = &mut upper[0];
        for (d, &x) in dst.iter_mut().zip(&e[k - 1]) {
            *d += x;
        }
        for j in 1..k {
            tensor_into(&lower[j - 1], &e[k - j - 1], dst);
        }
    }
}

fn signature_of<T: Scalar>(steps: impl Iterator<Item = [T; 2]>, m: usize) -> Vec<Vec<T>> {
    let mut sig = zero_blocks::<T>(m);
    for step in steps {
        extend(&mut sig, step);
    }
    sig
}

fn check_level(m: usize, lo: usize, hi: usize) -> Result<()> {
    if m < lo || m > hi {
        return Err(Error::InvalidArgument(format!("level {m} outside {lo}..={hi}")));
    }
    Ok(())
}

fn check_points(points: &[Point]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a signature needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("path coordinate".into()));
    }
    Ok(())
}

/// Signature coefficients of levels `1..=level_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSignature {
    blocks: Vec<Vec<f64>>,
}

impl TensorSignature {
    /// Exact signature of one straight segment with displacement `delta`.
    pub fn segment(delta: Point, m: usize) -> Result<Self> {
        check_level(m, 1, MAX_LEVEL)?;
        Ok(TensorSignature {
            blocks: exp_blocks(delta, m),
        })
    }

    pub fn level_max(&self) -> usize {
        self.blocks.len()
    }

    /// Block `k` (1-based), `2^k` entries.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.blocks[k - 1]
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    /// Graded coefficients concatenated in level order.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.concat()
    }

    /// Chen product: the signature of `self`'s path followed by `other`'s.
    pub fn concat(&self, other: &TensorSignature) -> Result<TensorSignature> {
        if self.level_max() != other.level_max() {
            return Err(Error::DimensionMismatch {
                expected: self.level_max(),
                found: other.level_max(),
            });
        }
        Ok(TensorSignature {
            blocks: chen(&self.blocks, &other.blocks),
        })
    }
}

/// Signature of the piecewise-linear path through `points`, truncated at `m`.
pub fn truncated_signature(points: &[Point], m: usize) -> Result<TensorSignature> {
    check_level(m, 1, MAX_LEVEL)?;
    check_points(points)?;
    let steps = points.windows(2).map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]]);
    Ok(TensorSignature {
        blocks: signature_of(steps, m),
    })
}

/// Length-normalized signature: level `k` divided by `L^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LnpsVector {
    pub level_max: usize,
    /// Arc length of the source path.
    pub length: f64,
    pub values: Vec<f64>,
}

impl LnpsVector {
    pub fn level(&self, k: usize) -> &[f64] {
        let start = signature_dim(k - 1);
        &self.values[start..start + (1 << k)]
    }
}

/// Length-normalized path signature. A zero-length path maps to the zero vector.
pub fn lnps(points: &[Point], m: usize) -> Result<LnpsVector> {
    let sig = truncated_signature(points, m)?;
    let length = path_length(points);
    let mut values = Vec::with_capacity(signature_dim(m));
    if length > 0.0 {
        let mut scale = 1.0;
        for block in sig.blocks() {
            scale *= length;
            values.extend(block.iter().map(|v| v / scale));
        }
    } else {
        values.resize(signature_dim(m), 0.0);
    }
    Ok(LnpsVector {
        level_max: m,
        length,
        values,
    })
}

/// Letters of the complex alphabet: `dz` and `dz̄` with `z = x + iy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Letter {
    Z,
    ZBar,
}

/// How a complex iterated integral is reduced to a real invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reduction {
    Re,
    Im,
    Abs,
    /// `Re c_{z z̄}`: equals `S^{xx} + S^{yy}`.
    Trace,
    /// `-Im c_{z z̄} / 2`: equals `(S^{xy} - S^{yx}) / 2`, the signed (Lévy)
    /// area, positive for counterclockwise loops.
    SignedArea,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InvariantTerm {
    pub word: Vec<Letter>,
    pub reduction: Reduction,
}

impl InvariantTerm {
    pub fn level(&self) -> usize {
        self.word.len()
    }
}

/// Rotation-invariant features with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationInvariantVector {
    pub values: Vec<f64>,
    pub layout: Vec<InvariantTerm>,
}

impl RotationInvariantVector {
    pub fn get(&self, word: &[Letter], reduction: Reduction) -> Option<f64> {
        self.layout
            .iter()
            .position(|t| t.word == word && t.reduction == reduction)
            .map(|i| self.values[i])
    }
}

/// Layout of [`rotation_invariants`] for level `m`.
///
/// Words of each level are enumerated lexicographically (`Z < ZBar`), keeping
/// only words starting with `Z` since `c_{w̄} = conj(c_w)`. A word with `a`
/// letters `Z` and `b` letters `ZBar` picks up the phase `e^{i(a-b)θ}` under a
/// rotation by `θ`; balanced words emit real and imaginary parts, the others
/// their modulus. The level-2 balanced word emits trace and signed area.
pub fn rotation_invariant_layout(m: usize) -> Vec<InvariantTerm> {
    let mut layout = Vec::new();
    for k in 1..=m {
        for code in 0..(1usize << (k - 1)) {
            let word: Vec<Letter> = (0..k)
                .map(|pos| {
                    let bit = if pos == 0 { 0 } else { (code >> (k - 1 - pos)) & 1 };
                    if bit == 0 {
                        Letter::Z
                    } else {
                        Letter::ZBar
                    }
                })
                .collect();
            let zs = word.iter().filter(|&&l| l == Letter::Z).count();
            let reductions: &[Reduction] = if 2 * zs != k {
                &[Reduction::Abs]
            } else if k == 2 {
                &[Reduction::Trace, Reduction::SignedArea]
            } else {
                &[Reduction::Re, Reduction::Im]
            };
            for &reduction in reductions {
                layout.push(InvariantTerm {
                    word: word.clone(),
                    reduction,
                });
            }
        }
    }
    layout
}

pub fn rotation_invariant_dim(m: usize) -> usize {
    rotation_invariant_layout(m).len()
}

fn word_index(word: &[Letter]) -> usize {
    word.iter().fold(0, |acc, &l| 2 * acc + usize::from(l == Letter::ZBar))
}

/// Length-normalized rotation invariants up to level `m` (2..=4).
pub fn rotation_invariants(points: &[Point], m: usize) -> Result<RotationInvariantVector> {
    check_level(m, RI_MIN_LEVEL, RI_MAX_LEVEL)?;
    check_points(points)?;
    let layout = rotation_invariant_layout(m);
    let length = path_length(points);
    if length == 0.0 {
        return Ok(RotationInvariantVector {
            values: vec![0.0; layout.len()],
            layout,
        });
    }
    // Increments are pre-divided by L so level k comes out scaled by L^-k.
    let steps = points.windows(2).map(|w| {
        let dx = (w[1][0] - w[0][0]) / length;
        let dy = (w[1][1] - w[0][1]) / length;
        [Complex64::new(dx, dy), Complex64::new(dx, -dy)]
    });
    let sig = signature_of(steps, m);
    let values = layout
        .iter()
        .map(|term| {
            let c = sig[term.level() - 1][word_index(&term.word)];
            match term.reduction {
                Reduction::Re | Reduction::Trace => c.re,
                Reduction::Im => c.im,
                Reduction::Abs => c.norm(),
                Reduction::SignedArea => -c.im / 2.0,
            }
        })
        .collect();
    Ok(RotationInvariantVector { values, layout })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn lengths() {
        assert_eq!(path_length(&[[0.0, 0.0], [3.0, 4.0]]), 5.0);
        assert_eq!(path_length(&[[1.0, 1.0]]), 0.0);
        assert_eq!(path_length(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]), 2.0);
    }

    #[test]
    fn single_segment_levels() {
        let s = truncated_signature(&[[0.0, 0.0], [1.0, 2.0]], 2).unwrap();
        assert_eq!(s.level(1), &[1.0, 2.0]);
        assert_eq!(s.level(2), &[0.5, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn constant_path_is_zero() {
        let s = truncated_signature(&[[2.0, 3.0]; 5], 4).unwrap();
        assert!(s.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn right_then_up() {
        let s = truncated_signature(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], 2).unwrap();
        assert!(close(s.level(1), &[1.0, 1.0], 1e-15));
        assert!(close(s.level(2), &[0.5, 1.0, 0.0, 0.5], 1e-15));
        let chen = TensorSignature::segment([1.0, 0.0], 2)
            .unwrap()
            .concat(&TensorSignature::segment([0.0, 1.0], 2).unwrap())
            .unwrap();
        assert!(close(&chen.flatten(), &s.flatten(), 1e-15));
    }

    #[test]
    fn level_bounds() {
        let p = [[0.0, 0.0], [1.0, 1.0]];
        assert!(truncated_signature(&p, 0).is_err());
        assert!(truncated_signature(&p, 7).is_err());
        assert!(truncated_signature(&p[..1], 2).is_err());
        assert!(rotation_invariants(&p, 1).is_err());
        assert!(rotation_invariants(&p, 5).is_err());
        assert_eq!(truncated_signature(&p, 6).unwrap().flatten().len(), signature_dim(6));
    }

    #[test]
    fn lnps_examples() {
        let v = lnps(&[[0.0, 0.0], [3.0, 4.0]], 1).unwrap();
        assert!(close(&v.values, &[0.6, 0.8], 1e-15));
        let z = lnps(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]], 3).unwrap();
        assert_eq!(z.values, vec![0.0; signature_dim(3)]);
        assert_eq!(v.level(1), &[0.6, 0.8]);
    }

    #[test]
    fn invariant_layout_sizes() {
        assert_eq!(rotation_invariant_dim(2), 4);
        assert_eq!(rotation_invariant_dim(3), 8);
        assert_eq!(rotation_invariant_dim(4), 19);
        let layout = rotation_invariant_layout(2);
        assert!(layout.iter().any(|t| t.reduction == Reduction::SignedArea));
        assert!(layout.iter().any(|t| t.reduction == Reduction::Trace));
    }

    #[test]
    fn unit_square_area() {
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
        let ri = rotation_invariants(&square, 2).unwrap();
        let area = ri.get(&[Letter::Z, Letter::ZBar], Reduction::SignedArea).unwrap();
        assert!((area - 1.0 / 16.0).abs() < 1e-15, "{area}");
        // Closed loop: zero displacement, zero trace.
        let trace = ri.get(&[Letter::Z, Letter::ZBar], Reduction::Trace).unwrap();
        assert!(trace.abs() < 1e-15);

        let sig = truncated_signature(&square, 2).unwrap();
        let l2 = sig.level(2);
        assert!(((l2[1] - l2[2]) / 2.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn straight_segment_has_no_area() {
        let ri = rotation_invariants(&[[0.0, 0.0], [1.0, 1.0], [3.0, 3.0]], 2).unwrap();
        let area = ri.get(&[Letter::Z, Letter::ZBar], Reduction::SignedArea).unwrap();
        assert!(area.abs() < 1e-15);
    }

    #[test]
    fn trace_matches_real_signature() {
        let p = [[0.0, 0.0], [0.3, 1.2], [-0.7, 2.0], [0.1, -0.4]];
        let l = path_length(&p);
        let sig = truncated_signature(&p, 2).unwrap();
        let ri = rotation_invariants(&p, 2).unwrap();
        let trace = ri.get(&[Letter::Z, Letter::ZBar], Reduction::Trace).unwrap();
        let l2 = sig.level(2);
        assert!((trace - (l2[0] + l2[3]) / (l * l)).abs() < 1e-14);
    }
}

//! Raster types and the phase/phasor conversions every other module builds on.
//!
//! Pixel storage is `f32` row-major (the on-disk precision); arithmetic on
//! pixel values is done in `f64`.
//!
//! Wrapped phase lives in `(-π, π]`. Because `π` is not representable in
//! `f32`, the stored range is `(-PI_F32, PI_F32]`, where `PI_F32` is `π`
//! rounded to the nearest `f32` (slightly above `π`).

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// `π` rounded to `f32`; the upper bound of the stored phase range.
pub const PI_F32: f32 = std::f32::consts::PI;

/// Magnitude below which a phasor carries no usable phase.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Wraps a finite angle into `(-π, π]`.
pub fn wrap(angle: f64) -> Result<f64> {
    if !angle.is_finite() {
        return Err(Error::InvalidValue(format!("cannot wrap non-finite angle {angle}")));
    }
    Ok(wrap_angle(angle))
}

/// Infallible form of [`wrap`]; non-finite input propagates as NaN.
#[inline]
pub fn wrap_angle(angle: f64) -> f64 {
    let k = ((angle - PI) / TWO_PI).ceil();
    let wrapped = angle - TWO_PI * k;
    // guards the rounding edge where the subtraction lands on exactly -π
    if wrapped <= -PI {
        wrapped + TWO_PI
    } else {
        wrapped
    }
}

/// Wraps and narrows to the stored `f32` phase range.
///
/// Values already inside `(-PI_F32, PI_F32]` are returned unchanged, so this
/// is idempotent on stored phase.
#[inline]
pub fn store_phase(angle: f64) -> f32 {
    let narrow = angle as f32;
    if narrow > -PI_F32 && narrow <= PI_F32 && narrow as f64 == angle {
        return narrow;
    }
    let w = wrap_angle(angle) as f32;
    if w <= -PI_F32 {
        PI_F32
    } else {
        w
    }
}

/// Four-quadrant argument in `(-π, π]`, or `None` for a (near) zero phasor.
#[inline]
pub fn phasor_arg(re: f64, im: f64) -> Option<f64> {
    if re.hypot(im) <= DEGENERATE_EPS {
        return None;
    }
    let a = im.atan2(re);
    // atan2(-0.0, -1) is -π
    Some(if a <= -PI { PI } else { a })
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Shape(format!("empty raster {width}x{height}")));
    }
    if width * height != len {
        return Err(Error::Shape(format!(
            "data length {len} does not match {width}x{height}"
        )));
    }
    Ok(())
}

/// Wrapped phase image, radians in `(-π, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl PhaseImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > -PI_F32 && v <= PI_F32))
        {
            return Err(Error::InvalidValue(format!(
                "phase {v} at index {i} is outside (-pi, pi]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a phase image by evaluating `f(row, col)` and wrapping.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty phase image");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(store_phase(f(r, c)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, phase: f64) -> Self {
        Self::from_fn(width, height, |_, _| phase)
    }

    /// Wraps an unwrapped image pixel by pixel.
    pub fn from_unwrapped(u: &UnwrappedImage) -> Self {
        Self {
            width: u.width,
            height: u.height,
            data: u.data.iter().map(|&v| store_phase(v as f64)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col] as f64
    }
}

/// Unwrapped phase (simulator truth); no range restriction.
#[derive(Debug, Clone, PartialEq)]
pub struct UnwrappedImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl UnwrappedImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite unwrapped phase".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col] as f64
    }
}

/// Per-pixel coherence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl CoherenceMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidValue(format!(
                "coherence {v} is outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, gamma: f32) -> Result<Self> {
        Self::new(width, height, vec![gamma; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col] as f64
    }
}

/// Two planar channels of (real, imaginary) per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    width: usize,
    height: usize,
    re: Vec<f32>,
    im: Vec<f32>,
}

impl ComplexField {
    pub fn new(width: usize, height: usize, re: Vec<f32>, im: Vec<f32>) -> Result<Self> {
        check_dims(width, height, re.len())?;
        check_dims(width, height, im.len())?;
        Ok(Self {
            width,
            height,
            re,
            im,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn re(&self) -> &[f32] {
        &self.re
    }

    pub fn im(&self) -> &[f32] {
        &self.im
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> (f64, f64) {
        let i = row * self.width + col;
        (self.re[i] as f64, self.im[i] as f64)
    }
}

/// Square two-channel window around a pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    size: usize,
    re: Vec<f32>,
    im: Vec<f32>,
    center_zeroed: bool,
}

impl Patch {
    pub fn new(size: usize, re: Vec<f32>, im: Vec<f32>, center_zeroed: bool) -> Result<Self> {
        if size % 2 == 0 || size < 5 {
            return Err(Error::Shape(format!("patch size {size} must be odd and >= 5")));
        }
        if re.len() != size * size || im.len() != size * size {
            return Err(Error::Shape("patch channel length mismatch".into()));
        }
        let mut patch = Self {
            size,
            re,
            im,
            center_zeroed: false,
        };
        if center_zeroed {
            patch.zero_center();
        }
        Ok(patch)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn re(&self) -> &[f32] {
        &self.re
    }

    pub fn im(&self) -> &[f32] {
        &self.im
    }

    pub fn center_zeroed(&self) -> bool {
        self.center_zeroed
    }

    pub fn center_index(&self) -> usize {
        (self.size / 2) * self.size + self.size / 2
    }

    pub fn zero_center(&mut self) {
        let c = self.center_index();
        self.re[c] = 0.0;
        self.im[c] = 0.0;
        self.center_zeroed = true;
    }
}

/// `(cos θ, sin θ)` per pixel.
pub fn phase_to_phasor(p: &PhaseImage) -> ComplexField {
    let (re, im) = p
        .data
        .iter()
        .map(|&t| {
            let (s, c) = (t as f64).sin_cos();
            (c as f32, s as f32)
        })
        .unzip();
    ComplexField {
        width: p.width,
        height: p.height,
        re,
        im,
    }
}

/// Pixel-wise argument; fails on a zero phasor.
pub fn phasor_to_phase(c: &ComplexField) -> Result<PhaseImage> {
    let mut data = Vec::with_capacity(c.re.len());
    for (i, (&re, &im)) in c.re.iter().zip(&c.im).enumerate() {
        match phasor_arg(re as f64, im as f64) {
            Some(a) => data.push(store_phase(a)),
            None => {
                return Err(Error::DegeneratePhasor {
                    row: i / c.width,
                    col: i % c.width,
                })
            }
        }
    }
    Ok(PhaseImage {
        width: c.width,
        height: c.height,
        data,
    })
}

/// Pixel-wise argument with the zero-phasor fallback: phase 0 and a `true`
/// flag in the returned mask.
pub fn phasor_to_phase_lossy(c: &ComplexField) -> (PhaseImage, Vec<bool>) {
    let mut degenerate = vec![false; c.re.len()];
    let data = c
        .re
        .iter()
        .zip(&c.im)
        .zip(degenerate.iter_mut())
        .map(|((&re, &im), flag)| match phasor_arg(re as f64, im as f64) {
            Some(a) => store_phase(a),
            None => {
                *flag = true;
                0.0
            }
        })
        .collect();
    (
        PhaseImage {
            width: c.width,
            height: c.height,
            data,
        },
        degenerate,
    )
}

/// Copies the `size`×`size` window centred at `(row, col)`.
pub fn extract_patch(
    c: &ComplexField,
    row: usize,
    col: usize,
    size: usize,
    zero_center: bool,
) -> Result<Patch> {
    let half = size / 2;
    let fits = row >= half && col >= half && row + half < c.height && col + half < c.width;
    if !fits {
        return Err(Error::OutOfBounds {
            row,
            col,
            size,
            width: c.width,
            height: c.height,
        });
    }
    let mut re = Vec::with_capacity(size * size);
    let mut im = Vec::with_capacity(size * size);
    for r in row - half..=row + half {
        let start = r * c.width + col - half;
        re.extend_from_slice(&c.re[start..start + size]);
        im.extend_from_slice(&c.im[start..start + size]);
    }
    Patch::new(size, re, im, zero_center)
}

/// Mirror index into `0..n` without repeating the edge sample.
///
/// Valid for `-(n-1) <= i <= 2(n-1)`.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&r), "reflection out of range");
    r as usize
}

/// Reflect-pads both axes by `margin`.
pub fn pad_reflect(c: &ComplexField, margin: usize) -> Result<ComplexField> {
    if margin >= c.width.min(c.height) {
        return Err(Error::InvalidMargin {
            margin,
            width: c.width,
            height: c.height,
        });
    }
    Ok(pad_reflect_axes(c, margin, margin))
}

/// Reflect-pads rows by `row_margin` and columns by `col_margin`.
///
/// Each margin must be smaller than the extent of its axis (or zero).
pub fn pad_reflect_axes(c: &ComplexField, row_margin: usize, col_margin: usize) -> ComplexField {
    assert!(row_margin == 0 || row_margin < c.height);
    assert!(col_margin == 0 || col_margin < c.width);
    let width = c.width + 2 * col_margin;
    let height = c.height + 2 * row_margin;
    let mut re = Vec::with_capacity(width * height);
    let mut im = Vec::with_capacity(width * height);
    for r in 0..height {
        let sr = reflect_index(r as isize - row_margin as isize, c.height);
        for col in 0..width {
            let sc = reflect_index(col as isize - col_margin as isize, c.width);
            let i = sr * c.width + sc;
            re.push(c.re[i]);
            im.push(c.im[i]);
        }
    }
    ComplexField {
        width,
        height,
        re,
        im,
    }
}

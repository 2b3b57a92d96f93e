//! Classical baselines: Boxcar complex averaging and the Goldstein
//! patch-spectrum filter.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{
    pad_reflect, phasor_arg, store_phase, CoherenceMap, ComplexField, PhaseImage,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxcarConfig {
    /// Odd window side. A window of 1 passes the input phase through.
    pub window: usize,
}

impl Default for BoxcarConfig {
    fn default() -> Self {
        Self { window: 7 }
    }
}

/// Complex mean of the input phasors over a square window with reflected
/// borders. Phase is the mean's argument (0 where the mean vanishes) and
/// coherence its magnitude.
pub fn boxcar_filter(c: &ComplexField, cfg: &BoxcarConfig) -> Result<(PhaseImage, CoherenceMap)> {
    if cfg.window % 2 == 0 {
        return Err(Error::InvalidValue(format!(
            "boxcar window {} must be odd",
            cfg.window
        )));
    }
    let (w, h) = c.dims();
    let half = cfg.window / 2;
    if half >= w.min(h) {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            required: cfg.window,
        });
    }
    let padded = pad_reflect(c, half)?;
    let pw = padded.width();
    let norm = (cfg.window * cfg.window) as f64;

    let rows: Vec<Vec<(f32, f32)>> = (0..h)
        .into_par_iter()
        .map(|r| {
            (0..w)
                .map(|col| {
                    let (mut sr, mut si) = (0.0f64, 0.0f64);
                    for dr in 0..cfg.window {
                        let base = (r + dr) * pw + col;
                        for dc in 0..cfg.window {
                            sr += padded.re()[base + dc] as f64;
                            si += padded.im()[base + dc] as f64;
                        }
                    }
                    let (mr, mi) = (sr / norm, si / norm);
                    let phase = phasor_arg(mr, mi).map_or(0.0, store_phase);
                    let coh = mr.hypot(mi).clamp(0.0, 1.0) as f32;
                    (phase, coh)
                })
                .collect()
        })
        .collect();
    let (phase, coh): (Vec<f32>, Vec<f32>) = rows.into_iter().flatten().unzip();
    Ok((PhaseImage::new(w, h, phase)?, CoherenceMap::new(w, h, coh)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldsteinConfig {
    /// Patch side, a power of two.
    pub patch: usize,
    /// Overlap between neighbouring patches.
    pub overlap: usize,
    /// Spectral exponent in [0, 1].
    pub alpha: f64,
    /// Side of the mean kernel applied to the spectral magnitude (odd; 1 disables).
    pub smoothing: usize,
}

impl Default for GoldsteinConfig {
    fn default() -> Self {
        Self {
            patch: 32,
            overlap: 16,
            alpha: 0.5,
            smoothing: 3,
        }
    }
}

impl GoldsteinConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidValue(m));
        if !self.patch.is_power_of_two() || self.patch < 4 {
            return bad(format!("goldstein patch {} must be a power of two >= 4", self.patch));
        }
        if self.overlap >= self.patch {
            return bad(format!(
                "goldstein overlap {} must be below the patch size {}",
                self.overlap, self.patch
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("goldstein alpha {} must lie in [0, 1]", self.alpha));
        }
        if self.smoothing % 2 == 0 || self.smoothing > self.patch {
            return bad(format!("goldstein smoothing {} must be odd and <= patch", self.smoothing));
        }
        Ok(())
    }
}

/// Patch origins along one axis: a regular grid with the last patch clamped
/// flush to the far edge.
fn patch_starts(extent: usize, patch: usize, step: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..)
        .map(|k| k * step)
        .take_while(|&s| s + patch < extent)
        .collect();
    starts.push(extent - patch);
    starts.dedup();
    starts
}

/// Raised-cosine taper, strictly positive so every pixel has weight.
fn taper(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
            x.sin().powi(2)
        })
        .collect()
}

struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn apply(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let fft = if inverse { &self.inverse } else { &self.forward };
        for row in data.chunks_exact_mut(n) {
            fft.process(row);
        }
        let mut col = vec![Complex64::default(); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = data[r * n + c];
            }
            fft.process(&mut col);
            for r in 0..n {
                data[r * n + c] = col[r];
            }
        }
    }
}

fn filter_patch(
    fft: &Fft2,
    c: &ComplexField,
    top: usize,
    left: usize,
    cfg: &GoldsteinConfig,
) -> Vec<Complex64> {
    let n = cfg.patch;
    let mut z: Vec<Complex64> = (0..n * n)
        .map(|i| {
            let (re, im) = c.get(top + i / n, left + i % n);
            Complex64::new(re, im)
        })
        .collect();
    fft.apply(&mut z, false);

    let mag: Vec<f64> = z.iter().map(|v| v.norm()).collect();
    let half = (cfg.smoothing / 2) as isize;
    let ni = n as isize;
    let count = (cfg.smoothing * cfg.smoothing) as f64;
    let mut response: Vec<f64> = (0..n * n)
        .map(|i| {
            let (r, col) = ((i / n) as isize, (i % n) as isize);
            let mut s = 0.0;
            for dr in -half..=half {
                for dc in -half..=half {
                    let rr = (r + dr).rem_euclid(ni) as usize;
                    let cc = (col + dc).rem_euclid(ni) as usize;
                    s += mag[rr * n + cc];
                }
            }
            (s / count).powf(cfg.alpha)
        })
        .collect();
    let peak = response.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        response.iter_mut().for_each(|v| *v /= peak);
    }
    for (v, h) in z.iter_mut().zip(&response) {
        *v *= *h;
    }
    fft.apply(&mut z, true);
    let scale = 1.0 / (n * n) as f64;
    z.iter_mut().for_each(|v| *v *= scale);
    z
}

/// Goldstein filter: per overlapping patch, the spectrum is weighted by its
/// smoothed magnitude raised to `alpha`; patches are blended with a
/// normalised raised-cosine weight. Phase only.
pub fn goldstein_filter(c: &ComplexField, cfg: &GoldsteinConfig) -> Result<PhaseImage> {
    cfg.validate()?;
    let (w, h) = c.dims();
    if w < cfg.patch || h < cfg.patch {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            required: cfg.patch,
        });
    }
    let step = cfg.patch - cfg.overlap;
    let origins: Vec<(usize, usize)> = patch_starts(h, cfg.patch, step)
        .into_iter()
        .flat_map(|r| {
            patch_starts(w, cfg.patch, step)
                .into_iter()
                .map(move |col| (r, col))
        })
        .collect();

    let fft = Fft2::new(cfg.patch);
    let filtered: Vec<Vec<Complex64>> = origins
        .par_iter()
        .map(|&(top, left)| filter_patch(&fft, c, top, left, cfg))
        .collect();

    // fixed patch order keeps the blend run-to-run identical
    let win = taper(cfg.patch);
    let mut acc = vec![Complex64::default(); w * h];
    let mut weight = vec![0.0f64; w * h];
    for (&(top, left), z) in origins.iter().zip(&filtered) {
        for pr in 0..cfg.patch {
            for pc in 0..cfg.patch {
                let wt = win[pr] * win[pc];
                let i = (top + pr) * w + left + pc;
                acc[i] += z[pr * cfg.patch + pc] * wt;
                weight[i] += wt;
            }
        }
    }
    let data = acc
        .iter()
        .zip(&weight)
        .map(|(v, &wt)| {
            let m = v / wt;
            phasor_arg(m.re, m.im).map_or(0.0, store_phase)
        })
        .collect();
    PhaseImage::new(w, h, data)
}

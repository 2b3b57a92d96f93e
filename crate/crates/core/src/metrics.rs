//! Evaluation metrics: residues, residue reduction, phase and coherence RMSE,
//! and the phase cosine error.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{wrap_angle, CoherenceMap, PhaseImage, TWO_PI};

/// Residue charges of every 2×2 loop; `(height-1) × (width-1)` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidueMap {
    width: usize,
    height: usize,
    charges: Vec<i8>,
}

impl ResidueMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn charges(&self) -> &[i8] {
        &self.charges
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.charges[row * self.width + col]
    }
}

/// Wrapped curl around the loop anchored at `(r, c)`, in units of 2π.
#[inline]
fn loop_charge(p: &PhaseImage, r: usize, c: usize) -> i8 {
    let a = p.get(r, c);
    let b = p.get(r, c + 1);
    let d = p.get(r + 1, c + 1);
    let e = p.get(r + 1, c);
    let curl = wrap_angle(b - a) + wrap_angle(d - b) + wrap_angle(e - d) + wrap_angle(a - e);
    let k = (curl / TWO_PI).round();
    debug_assert!(
        (curl - k * TWO_PI).abs() < 1e-3 * TWO_PI,
        "wrapped curl {curl} is not a multiple of 2π"
    );
    k as i8
}

/// Charges of all 2×2 loops, traversed clockwise
/// `(r,c) → (r,c+1) → (r+1,c+1) → (r+1,c) → (r,c)`.
///
/// Charges are normally in {-1, 0, +1}; a loop whose four wrapped
/// differences are all exactly π (an exact 0/π checkerboard) sums to 4π
/// under the `(-π, π]` convention and is reported as +2.
pub fn residue_map(p: &PhaseImage) -> Result<ResidueMap> {
    let (w, h) = p.dims();
    if w < 2 || h < 2 {
        return Err(Error::Shape(format!(
            "residues need at least a 2x2 image, got {w}x{h}"
        )));
    }
    let mut charges = Vec::with_capacity((w - 1) * (h - 1));
    for r in 0..h - 1 {
        for c in 0..w - 1 {
            charges.push(loop_charge(p, r, c));
        }
    }
    Ok(ResidueMap {
        width: w - 1,
        height: h - 1,
        charges,
    })
}

pub fn count_residues(m: &ResidueMap) -> usize {
    m.charges.iter().filter(|&&q| q != 0).count()
}

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Residue reduction percentage relative to the noisy input.
pub fn rrp(noisy: &PhaseImage, filtered: &PhaseImage) -> Result<f64> {
    same_dims(noisy.dims(), filtered.dims())?;
    let before = count_residues(&residue_map(noisy)?);
    let after = count_residues(&residue_map(filtered)?);
    rrp_from_counts(before, after)
}

pub fn rrp_from_counts(before: usize, after: usize) -> Result<f64> {
    if before == 0 {
        return Err(Error::NoResiduesToReduce);
    }
    Ok(100.0 * (before as f64 - after as f64) / before as f64)
}

/// RMSE of the wrapped phase difference.
pub fn phase_rmse(truth: &PhaseImage, filtered: &PhaseImage) -> Result<f64> {
    same_dims(truth.dims(), filtered.dims())?;
    let sum: f64 = truth
        .data()
        .iter()
        .zip(filtered.data())
        .map(|(&t, &f)| wrap_angle(t as f64 - f as f64).powi(2))
        .sum();
    Ok((sum / truth.data().len() as f64).sqrt())
}

pub fn coherence_rmse(truth: &CoherenceMap, estimated: &CoherenceMap) -> Result<f64> {
    same_dims(truth.dims(), estimated.dims())?;
    let sum: f64 = truth
        .data()
        .iter()
        .zip(estimated.data())
        .map(|(&t, &e)| (t as f64 - e as f64).powi(2))
        .sum();
    Ok((sum / truth.data().len() as f64).sqrt())
}

/// Mean of `½(1 − cos arg(g·f̄))` over pixels.
pub fn phase_cosine_error(truth: &PhaseImage, filtered: &PhaseImage) -> Result<f64> {
    same_dims(truth.dims(), filtered.dims())?;
    let sum: f64 = truth
        .data()
        .iter()
        .zip(filtered.data())
        .map(|(&g, &f)| 0.5 * (1.0 - wrap_angle(g as f64 - f as f64).cos()))
        .sum();
    Ok(sum / truth.data().len() as f64)
}

/// Metrics for one filtered image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub phase_rmse: f64,
    /// `None` for phase-only methods.
    pub coherence_rmse: Option<f64>,
    pub rrp: f64,
    pub pce: f64,
    pub residues_before: usize,
    pub residues_after: usize,
    pub wall_time: f64,
}

pub struct EvalInputs<'a> {
    pub truth_phase: &'a PhaseImage,
    pub truth_coherence: &'a CoherenceMap,
    pub noisy_phase: &'a PhaseImage,
    pub filtered_phase: &'a PhaseImage,
    pub estimated_coherence: Option<&'a CoherenceMap>,
}

pub fn evaluate(inputs: &EvalInputs<'_>, wall_time: f64) -> Result<EvalReport> {
    let dims = inputs.truth_phase.dims();
    same_dims(dims, inputs.truth_coherence.dims())?;
    same_dims(dims, inputs.noisy_phase.dims())?;
    same_dims(dims, inputs.filtered_phase.dims())?;
    let residues_before = count_residues(&residue_map(inputs.noisy_phase)?);
    let residues_after = count_residues(&residue_map(inputs.filtered_phase)?);
    let coherence_rmse = inputs
        .estimated_coherence
        .map(|est| coherence_rmse(inputs.truth_coherence, est))
        .transpose()?;
    Ok(EvalReport {
        phase_rmse: phase_rmse(inputs.truth_phase, inputs.filtered_phase)?,
        coherence_rmse,
        rrp: rrp_from_counts(residues_before, residues_after)?,
        pce: phase_cosine_error(inputs.truth_phase, inputs.filtered_phase)?,
        residues_before,
        residues_after,
        wall_time,
    })
}

pub const CSV_HEADER: &str =
    "label,phase_rmse,coherence_rmse,rrp,pce,residues_before,residues_after,wall_time_s";

impl EvalReport {
    /// One CSV row in [`CSV_HEADER`] order; absent coherence is an empty field.
    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{:.6},{},{:.4},{:.6},{},{},{:.4}",
            self.phase_rmse,
            self.coherence_rmse
                .map(|v| format!("{v:.6}"))
                .unwrap_or_default(),
            self.rrp,
            self.pce,
            self.residues_before,
            self.residues_after,
            self.wall_time
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "phase RMSE      {:.4} rad", self.phase_rmse)?;
        match self.coherence_rmse {
            Some(v) => writeln!(f, "coherence RMSE  {v:.4}")?,
            None => writeln!(f, "coherence RMSE  N/A")?,
        }
        writeln!(
            f,
            "residue red. %  {:.2} ({} -> {})",
            self.rrp, self.residues_before, self.residues_after
        )?;
        writeln!(f, "cosine error    {:.5}", self.pce)?;
        write!(f, "time            {:.3} s", self.wall_time)
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}±{:.4}", self.mean, self.std)
    }
}

/// Per-metric mean ± std over a set of reports, laid out like a results table row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub phase_rmse: MeanStd,
    pub coherence_rmse: Option<MeanStd>,
    pub rrp: MeanStd,
    pub pce: MeanStd,
    pub wall_time: MeanStd,
}

impl Summary {
    pub fn of(reports: &[EvalReport]) -> Option<Self> {
        let col = |f: fn(&EvalReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
        let coh: Option<Vec<f64>> = reports.iter().map(|r| r.coherence_rmse).collect();
        Some(Self {
            count: reports.len(),
            phase_rmse: MeanStd::of(&col(|r| r.phase_rmse))?,
            coherence_rmse: coh.and_then(|c| MeanStd::of(&c)),
            rrp: MeanStd::of(&col(|r| r.rrp))?,
            pce: MeanStd::of(&col(|r| r.pce))?,
            wall_time: MeanStd::of(&col(|r| r.wall_time))?,
        })
    }

    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{},{},{},{},,,{}",
            self.phase_rmse,
            self.coherence_rmse
                .map(|m| m.to_string())
                .unwrap_or_default(),
            self.rrp,
            self.pce,
            self.wall_time
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn img(w: usize, h: usize, v: &[f64]) -> PhaseImage {
        PhaseImage::from_fn(w, h, |r, c| v[r * w + c])
    }

    #[test]
    fn residue_examples() {
        let flat = PhaseImage::constant(8, 6, 1.0);
        let m = residue_map(&flat).unwrap();
        assert_eq!((m.width(), m.height()), (7, 5));
        assert_eq!(count_residues(&m), 0);

        let ramp = PhaseImage::from_fn(30, 20, |r, c| 1.4 * c as f64 - 1.2 * r as f64);
        assert_eq!(count_residues(&residue_map(&ramp).unwrap()), 0);

        // clockwise diffs 0→π/2→π→3π/2(=-π/2)→0 are each +π/2
        let vortex = img(2, 2, &[0.0, PI / 2.0, 1.5 * PI, PI]);
        let m = residue_map(&vortex).unwrap();
        assert_eq!(m.charges(), &[1]);
        let q: f64 = [
            (PI / 2.0) - 0.0,
            PI - PI / 2.0,
            wrap_angle(-PI / 2.0 - PI),
            wrap_angle(0.0 + PI / 2.0),
        ]
        .iter()
        .sum();
        assert!((q - TWO_PI).abs() < 1e-12);

        let anti = img(2, 2, &[0.0, 1.5 * PI, PI / 2.0, PI]);
        assert_eq!(residue_map(&anti).unwrap().charges(), &[-1]);

        assert!(residue_map(&PhaseImage::constant(1, 5, 0.0)).is_err());
    }

    #[test]
    fn counting() {
        let zero = residue_map(&PhaseImage::constant(3, 3, 0.0)).unwrap();
        assert_eq!(count_residues(&zero), 0);
        let one = residue_map(&img(2, 2, &[0.0, PI / 2.0, 1.5 * PI, PI])).unwrap();
        assert_eq!(count_residues(&one), 1);
        // a +1 and a -1 side by side count as two
        let pair = img(3, 2, &[0.0, PI / 2.0, 0.0, 1.5 * PI, PI, 1.5 * PI]);
        let m = residue_map(&pair).unwrap();
        assert_eq!(m.charges(), &[1, -1]);
        assert_eq!(count_residues(&m), 2);
    }

    #[test]
    fn rrp_examples() {
        let noisy = img(3, 2, &[0.0, PI / 2.0, 0.0, 1.5 * PI, PI, 1.5 * PI]);
        assert_eq!(rrp(&noisy, &noisy).unwrap(), 0.0);
        assert_eq!(rrp(&noisy, &PhaseImage::constant(3, 2, 0.0)).unwrap(), 100.0);
        assert_eq!(rrp_from_counts(200, 1).unwrap(), 99.5);
        assert!(rrp_from_counts(10, 15).unwrap() < 0.0);
        let clean = PhaseImage::constant(3, 2, 0.0);
        assert!(matches!(rrp(&clean, &clean), Err(Error::NoResiduesToReduce)));
    }

    #[test]
    fn rmse_and_cosine_examples() {
        let t = PhaseImage::from_fn(10, 10, |r, c| 0.3 * r as f64 - 0.2 * c as f64);
        let shifted = |d: f64| PhaseImage::from_fn(10, 10, |r, c| 0.3 * r as f64 - 0.2 * c as f64 + d);
        assert_eq!(phase_rmse(&t, &t).unwrap(), 0.0);
        assert!((phase_rmse(&t, &shifted(PI / 2.0)).unwrap() - PI / 2.0).abs() < 1e-6);
        let zero = PhaseImage::constant(4, 4, 0.0);
        let alt = PhaseImage::from_fn(4, 4, |r, c| if (r + c) % 2 == 0 { 0.1 } else { -0.1 });
        assert!((phase_rmse(&zero, &alt).unwrap() - 0.1).abs() < 1e-7);

        assert_eq!(phase_cosine_error(&t, &t).unwrap(), 0.0);
        assert!((phase_cosine_error(&t, &shifted(PI)).unwrap() - 1.0).abs() < 1e-12);
        assert!((phase_cosine_error(&t, &shifted(PI / 2.0)).unwrap() - 0.5).abs() < 1e-6);

        let ones = CoherenceMap::constant(4, 4, 1.0).unwrap();
        let est = CoherenceMap::constant(4, 4, 0.8).unwrap();
        assert_eq!(coherence_rmse(&ones, &ones).unwrap(), 0.0);
        assert!((coherence_rmse(&ones, &est).unwrap() - 0.2).abs() < 1e-7);
        let mid = CoherenceMap::constant(4, 4, 0.5).unwrap();
        let pm = CoherenceMap::new(
            4,
            4,
            (0..16).map(|i| if i % 2 == 0 { 0.7 } else { 0.3 }).collect(),
        )
        .unwrap();
        assert!((coherence_rmse(&mid, &pm).unwrap() - 0.2).abs() < 1e-7);

        assert!(phase_rmse(&t, &zero).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let truth = PhaseImage::from_fn(16, 16, |r, c| 0.2 * r as f64 + 0.1 * c as f64);
        let noisy = crate::simulator::add_noise(&truth, &crate::simulator::NoiseSpec::uniform(0.5, 3))
            .unwrap();
        let gamma = CoherenceMap::constant(16, 16, 0.7).unwrap();
        let inputs = EvalInputs {
            truth_phase: &truth,
            truth_coherence: &gamma,
            noisy_phase: &noisy,
            filtered_phase: &truth,
            estimated_coherence: Some(&gamma),
        };
        let r = evaluate(&inputs, 0.0).unwrap();
        assert!(r.residues_before > 0);
        assert_eq!(r.rrp, 100.0);
        assert_eq!((r.phase_rmse, r.pce, r.coherence_rmse), (0.0, 0.0, Some(0.0)));

        let goldstein_style = EvalInputs {
            estimated_coherence: None,
            filtered_phase: &noisy,
            ..inputs
        };
        let r = evaluate(&goldstein_style, 1.5).unwrap();
        assert_eq!(r.coherence_rmse, None);
        assert_eq!(r.rrp, 0.0);
        assert_eq!(r.phase_rmse, phase_rmse(&truth, &noisy).unwrap());
        let row = r.csv_row("goldstein");
        assert_eq!(row.split(',').nth(2), Some(""));
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        assert!(r.to_string().contains("N/A"));
    }

    #[test]
    fn summary_statistics() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std, 1.0);
        assert!(MeanStd::of(&[]).is_none());
    }
}

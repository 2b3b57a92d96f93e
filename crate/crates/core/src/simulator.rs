//! Synthetic interferograms: clean truth scenes built from Gaussian bubbles,
//! roads and buildings, and coherence-calibrated Gaussian phase noise.
//!
//! Noise calibration follows the Gaussian phase model: for phase noise
//! `n ~ N(0, σ²)` the expected phasor is `E{e^{in}} = e^{-σ²/2}`, so a target
//! coherence γ maps to `σ = sqrt(-2 ln γ)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{self, Entry};
use crate::error::{Error, Result};
use crate::grid::{store_phase, CoherenceMap, PhaseImage, UnwrappedImage};
use crate::rng::rng_for;

/// Isotropic Gaussian surface `amplitude · exp(-d² / 2σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bubble {
    pub center: (f64, f64),
    pub sigma: f64,
    pub amplitude: f64,
}

/// Constant phase offset inside a straight band (a rotated rectangle around
/// the segment from `start` to `end`).
#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub half_width: f64,
    pub offset: f64,
}

/// Constant phase offset inside an axis-aligned rectangle, corners inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    pub top_left: (usize, usize),
    pub bottom_right: (usize, usize),
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub bubbles: Vec<Bubble>,
    pub roads: Vec<Road>,
    pub buildings: Vec<Building>,
    pub seed: u64,
}

/// Simulator outputs: the unwrapped truth, its wrapped form and the clean
/// scene's coherence (1 everywhere).
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub unwrapped: UnwrappedImage,
    pub wrapped: PhaseImage,
    pub coherence: CoherenceMap,
}

impl SceneSpec {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bubbles: Vec::new(),
            roads: Vec::new(),
            buildings: Vec::new(),
            seed: 0,
        }
    }

    /// A randomly populated scene, fully determined by `seed`.
    ///
    /// Bubble slopes stay below about 1 rad/pixel so the clean wrapped truth
    /// is resolvable; feature offsets stay below π individually.
    pub fn random(width: usize, height: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0x5ce7e]);
        let s = width.min(height) as f64;
        let point = |rng: &mut rand_chacha::ChaCha8Rng| {
            (
                rng.random_range(0.0..=(height - 1) as f64),
                rng.random_range(0.0..=(width - 1) as f64),
            )
        };
        let signed = |rng: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64| {
            let v = rng.random_range(lo..hi);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        };

        let bubbles = (0..rng.random_range(2..=5))
            .map(|_| {
                let sigma = rng.random_range(0.08 * s..0.2 * s).max(1.0);
                Bubble {
                    center: point(&mut rng),
                    sigma,
                    amplitude: signed(&mut rng, 0.3, 1.5) * sigma,
                }
            })
            .collect();
        let roads = (0..rng.random_range(0..=2))
            .map(|_| Road {
                start: point(&mut rng),
                end: point(&mut rng),
                half_width: rng.random_range(1.0..3.5),
                offset: signed(&mut rng, 0.5, 2.0),
            })
            .collect();
        let buildings = (0..rng.random_range(1..=4))
            .map(|_| {
                let bh = rng.random_range((0.03 * s).max(1.0)..(0.12 * s).max(2.0)) as usize;
                let bw = rng.random_range((0.03 * s).max(1.0)..(0.12 * s).max(2.0)) as usize;
                let r0 = rng.random_range(0..height.saturating_sub(bh).max(1));
                let c0 = rng.random_range(0..width.saturating_sub(bw).max(1));
                Building {
                    top_left: (r0, c0),
                    bottom_right: ((r0 + bh).min(height - 1), (c0 + bw).min(width - 1)),
                    offset: signed(&mut rng, 0.5, 2.5),
                }
            })
            .collect();
        Self {
            width,
            height,
            bubbles,
            roads,
            buildings,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("empty image {}x{}", self.width, self.height));
        }
        let (h, w) = ((self.height - 1) as f64, (self.width - 1) as f64);
        let inside = |(r, c): (f64, f64)| r >= 0.0 && c >= 0.0 && r <= h && c <= w;
        for (i, b) in self.bubbles.iter().enumerate() {
            if !inside(b.center) {
                return bad(format!("bubble {i} centre {:?} outside the image", b.center));
            }
            if !(b.sigma > 0.0) || !b.amplitude.is_finite() {
                return bad(format!("bubble {i} needs sigma > 0 and a finite amplitude"));
            }
        }
        for (i, r) in self.roads.iter().enumerate() {
            if !inside(r.start) || !inside(r.end) {
                return bad(format!("road {i} endpoints outside the image"));
            }
            if !(r.half_width >= 1.0) || !r.offset.is_finite() {
                return bad(format!("road {i} needs half_width >= 1 and a finite offset"));
            }
        }
        for (i, b) in self.buildings.iter().enumerate() {
            let (r0, c0) = b.top_left;
            let (r1, c1) = b.bottom_right;
            if r0 > r1 || c0 > c1 || r1 >= self.height || c1 >= self.width {
                return bad(format!("building {i} rectangle is inverted or outside the image"));
            }
            if !b.offset.is_finite() {
                return bad(format!("building {i} offset is not finite"));
            }
        }
        Ok(())
    }

    /// Parses the scene grammar:
    ///
    /// ```text
    /// width=256
    /// height=256
    /// seed=1
    /// bubble=row,col,sigma,amplitude
    /// road=row0,col0,row1,col1,half_width,offset
    /// building=row0,col0,row1,col1,offset
    /// ```
    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        let dim = |key: &str| -> Result<usize> {
            config::last(entries, key)
                .ok_or_else(|| Error::Config {
                    line: 0,
                    reason: format!("missing required key {key}"),
                })?
                .parse()
        };
        let mut spec = SceneSpec::empty(dim("width")?, dim("height")?);
        for e in entries {
            match e.key.as_str() {
                "width" | "height" => {}
                "seed" => spec.seed = e.parse()?,
                "bubble" => {
                    let v = e.floats(4)?;
                    spec.bubbles.push(Bubble {
                        center: (v[0], v[1]),
                        sigma: v[2],
                        amplitude: v[3],
                    });
                }
                "road" => {
                    let v = e.floats(6)?;
                    spec.roads.push(Road {
                        start: (v[0], v[1]),
                        end: (v[2], v[3]),
                        half_width: v[4],
                        offset: v[5],
                    });
                }
                "building" => {
                    let v = e.floats(5)?;
                    let idx = |x: f64| -> Result<usize> {
                        if x >= 0.0 && x.fract() == 0.0 {
                            Ok(x as usize)
                        } else {
                            Err(Error::Config {
                                line: e.line,
                                reason: format!("building corner {x} is not a pixel index"),
                            })
                        }
                    };
                    spec.buildings.push(Building {
                        top_left: (idx(v[0])?, idx(v[1])?),
                        bottom_right: (idx(v[2])?, idx(v[3])?),
                        offset: v[4],
                    });
                }
                other => {
                    return Err(Error::Config {
                        line: e.line,
                        reason: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        Ok(spec)
    }

    /// Serialises to the grammar accepted by [`SceneSpec::from_entries`].
    pub fn to_config(&self) -> String {
        let mut out = format!(
            "width={}\nheight={}\nseed={}\n",
            self.width, self.height, self.seed
        );
        for b in &self.bubbles {
            out += &format!(
                "bubble={},{},{},{}\n",
                b.center.0, b.center.1, b.sigma, b.amplitude
            );
        }
        for r in &self.roads {
            out += &format!(
                "road={},{},{},{},{},{}\n",
                r.start.0, r.start.1, r.end.0, r.end.1, r.half_width, r.offset
            );
        }
        for b in &self.buildings {
            out += &format!(
                "building={},{},{},{},{}\n",
                b.top_left.0, b.top_left.1, b.bottom_right.0, b.bottom_right.1, b.offset
            );
        }
        out
    }
}

impl Bubble {
    pub fn value(&self, row: f64, col: f64) -> f64 {
        let d2 = (row - self.center.0).powi(2) + (col - self.center.1).powi(2);
        self.amplitude * (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

impl Road {
    pub fn contains(&self, row: f64, col: f64) -> bool {
        let (dr, dc) = (self.end.0 - self.start.0, self.end.1 - self.start.1);
        let len = dr.hypot(dc);
        let (pr, pc) = (row - self.start.0, col - self.start.1);
        if len == 0.0 {
            return pr.hypot(pc) <= self.half_width;
        }
        let along = (pr * dr + pc * dc) / len;
        let across = (pr * dc - pc * dr) / len;
        (0.0..=len).contains(&along) && across.abs() <= self.half_width
    }
}

impl Building {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top_left.0..=self.bottom_right.0).contains(&row)
            && (self.top_left.1..=self.bottom_right.1).contains(&col)
    }
}

/// Renders the clean scene.
pub fn generate_truth(spec: &SceneSpec) -> Result<Truth> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut data = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let (rf, cf) = (r as f64, c as f64);
            let mut v: f64 = spec.bubbles.iter().map(|b| b.value(rf, cf)).sum();
            v += spec
                .roads
                .iter()
                .filter(|road| road.contains(rf, cf))
                .map(|road| road.offset)
                .sum::<f64>();
            v += spec
                .buildings
                .iter()
                .filter(|b| b.contains(r, c))
                .map(|b| b.offset)
                .sum::<f64>();
            data.push(v as f32);
        }
    }
    let unwrapped = UnwrappedImage::new(w, h, data)?;
    let wrapped = PhaseImage::from_unwrapped(&unwrapped);
    let coherence = CoherenceMap::constant(w, h, 1.0)?;
    Ok(Truth {
        unwrapped,
        wrapped,
        coherence,
    })
}

/// Phase-noise standard deviation that yields coherence `gamma`.
pub fn sigma_from_gamma(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidCoherence(gamma));
    }
    // -0.0 for γ = 1
    Ok((-2.0 * gamma.ln()).max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseMode {
    Uniform(f64),
    Map(CoherenceMap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn uniform(gamma: f64, seed: u64) -> Self {
        Self {
            mode: NoiseMode::Uniform(gamma),
            seed,
        }
    }

    pub fn map(gamma: CoherenceMap, seed: u64) -> Self {
        Self {
            mode: NoiseMode::Map(gamma),
            seed,
        }
    }

    /// The coherence the noise realises at each pixel; this is the reference
    /// map for coherence evaluation.
    pub fn truth_coherence(&self, width: usize, height: usize) -> Result<CoherenceMap> {
        match &self.mode {
            NoiseMode::Uniform(g) => {
                if !(0.0..=1.0).contains(g) {
                    return Err(Error::InvalidCoherence(*g));
                }
                CoherenceMap::constant(width, height, *g as f32)
            }
            NoiseMode::Map(m) => {
                if m.dims() != (width, height) {
                    return Err(Error::Shape("coherence map size differs from image".into()));
                }
                Ok(m.clone())
            }
        }
    }
}

/// Draw for pixel `index`; independent of every other pixel's draw.
#[inline]
fn pixel_normal(seed: u64, index: usize) -> f64 {
    rng_for(seed, &[index as u64]).sample(StandardNormal)
}

/// Adds zero-mean Gaussian phase noise calibrated per pixel to the requested
/// coherence, then wraps.
pub fn add_noise(truth: &PhaseImage, noise: &NoiseSpec) -> Result<PhaseImage> {
    let (w, h) = truth.dims();
    let sigma_at: Box<dyn Fn(usize) -> f64> = match &noise.mode {
        NoiseMode::Uniform(g) => {
            let s = sigma_from_gamma(*g)?;
            Box::new(move |_| s)
        }
        NoiseMode::Map(m) => {
            if m.dims() != (w, h) {
                return Err(Error::Shape(format!(
                    "coherence map is {}x{}, image is {w}x{h}",
                    m.width(),
                    m.height()
                )));
            }
            let sigmas = m
                .data()
                .iter()
                .map(|&g| sigma_from_gamma(g as f64))
                .collect::<Result<Vec<_>>>()?;
            Box::new(move |i| sigmas[i])
        }
    };
    let data = truth
        .data()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let s = sigma_at(i);
            if s == 0.0 {
                t
            } else {
                store_phase(t as f64 + s * pixel_normal(noise.seed, i))
            }
        })
        .collect();
    PhaseImage::new(w, h, data)
}

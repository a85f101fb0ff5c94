//! Synthetic bi-temporal scenes with known pond states.
//!
//! Elliptical ponds, each ringed by a sand halo, sit on a vegetation
//! background with scattered sand patches. Every pond has a state at both
//! dates; the second is drawn from a transition matrix over the first.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autolabel::change_map;
use crate::error::{Error, Result};
use crate::raster::{BandName, BiTemporalPair, ChangeClass, LabelRaster, PondState, Raster};

/// Reflectance in band order Red, Green, Blue, NIR, SWIR1, SWIR2.
pub type Signature = [f64; 6];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Signatures {
    pub vegetation: Signature,
    pub sand: Signature,
    pub active: Signature,
    pub transition: Signature,
    pub inactive: Signature,
}

impl Default for Signatures {
    fn default() -> Self {
        // Sediment-laden active water is redder than green (Ci < 0), inactive
        // water greener (Ci > 0.15); every water class has low SWIR1 so MNDWI > 0.
        // In RGB alone sand resembles active water and vegetation inactive water.
        Signatures {
            vegetation: [0.04, 0.08, 0.03, 0.35, 0.18, 0.08],
            sand: [0.22, 0.18, 0.10, 0.28, 0.32, 0.26],
            active: [0.20, 0.16, 0.09, 0.12, 0.04, 0.02],
            transition: [0.12, 0.13, 0.07, 0.08, 0.03, 0.015],
            inactive: [0.05, 0.09, 0.05, 0.07, 0.025, 0.01],
        }
    }
}

impl Signatures {
    fn all(&self) -> [(&'static str, &Signature); 5] {
        [
            ("vegetation", &self.vegetation),
            ("sand", &self.sand),
            ("active", &self.active),
            ("transition", &self.transition),
            ("inactive", &self.inactive),
        ]
    }

    /// Surface signature of a pond in the given state.
    pub fn for_state(&self, s: PondState) -> &Signature {
        match s {
            PondState::NoWater => &self.sand,
            PondState::Inactive => &self.inactive,
            PondState::Transition => &self.transition,
            PondState::Active => &self.active,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub ponds: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Width in pixels of the sand ring around each pond.
    pub halo: f64,
    pub sand_patches: usize,
    pub signatures: Signatures,
    pub noise_sigma: f64,
    /// Per-band gain and offset applied to the second date.
    pub gain: Signature,
    pub offset: Signature,
    /// State distribution at the first date, indexed by state code.
    pub initial_states: [f64; 4],
    /// `transitions[a][b]` is the probability of state `b` at t2 given `a` at t1.
    pub transitions: [[f64; 4]; 4],
    /// Redraw pond states until every change category occurs.
    pub require_all_changes: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 128,
            height: 128,
            ponds: 24,
            radius_min: 3.0,
            radius_max: 9.0,
            halo: 1.5,
            sand_patches: 6,
            signatures: Signatures::default(),
            noise_sigma: 0.02,
            gain: [1.1; 6],
            offset: [0.02; 6],
            initial_states: [0.15, 0.30, 0.20, 0.35],
            transitions: [
                [0.25, 0.25, 0.20, 0.30],
                [0.15, 0.05, 0.40, 0.40],
                [0.15, 0.40, 0.05, 0.40],
                [0.15, 0.40, 0.40, 0.05],
            ],
            require_all_changes: true,
            seed: 0,
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;
const STATE_REDRAWS: usize = 10_000;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.width == 0 || self.height == 0 {
            return bad("scene must be non-empty".into());
        }
        if !(self.radius_min > 0.0 && self.radius_min <= self.radius_max) {
            return bad(format!(
                "radius range {}..{} is invalid",
                self.radius_min, self.radius_max
            ));
        }
        if !(self.halo >= 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("halo and noise_sigma must be nonnegative".into());
        }
        if self.gain.iter().any(|&g| !(g > 0.0)) {
            return bad("gains must be positive".into());
        }
        let sigs = self.signatures.all();
        if sigs
            .iter()
            .flat_map(|(_, s)| s.iter())
            .any(|&v| !(v >= 0.0))
        {
            return bad("signatures must be nonnegative".into());
        }
        // Learnability: every pair of surfaces differs by 3σ in some band.
        for (i, (na, a)) in sigs.iter().enumerate() {
            for (nb, b) in &sigs[i + 1..] {
                let gap = a
                    .iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                if gap < 3.0 * self.noise_sigma {
                    return bad(format!(
                        "{na} and {nb} signatures are closer than 3 sigma in every band"
                    ));
                }
            }
        }
        check_distribution(&self.initial_states, "initial_states")?;
        for (i, row) in self.transitions.iter().enumerate() {
            check_distribution(row, &format!("transitions[{i}]"))?;
        }
        Ok(())
    }
}

fn check_distribution(p: &[f64; 4], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "{what} must be a probability distribution"
        )));
    }
    Ok(())
}

/// One placed pond.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pond {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub angle: f64,
    pub t1: PondState,
    pub t2: PondState,
}

impl Pond {
    /// Normalized elliptical radius of pixel centre `(x, y)` with the axes grown by `grow`.
    fn reach(&self, x: usize, y: usize, grow: f64) -> f64 {
        let (dx, dy) = (x as f64 - self.cx, y as f64 - self.cy);
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / (self.rx + grow);
        let v = (-dx * s + dy * c) / (self.ry + grow);
        u * u + v * v
    }
}

/// A generated region with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub pair: BiTemporalPair,
    pub states_t1: LabelRaster,
    pub states_t2: LabelRaster,
    pub change: LabelRaster,
    pub ponds: Vec<Pond>,
}

/// Generates a scene; identical configs give identical scenes.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthScene> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let n = w * h;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut sand = vec![false; n];
    for _ in 0..cfg.sand_patches {
        let patch = Pond {
            cx: rng.random_range(0.0..w as f64),
            cy: rng.random_range(0.0..h as f64),
            rx: rng.random_range(4.0..12.0),
            ry: rng.random_range(4.0..12.0),
            angle: rng.random_range(0.0..std::f64::consts::PI),
            t1: PondState::NoWater,
            t2: PondState::NoWater,
        };
        for (p, s) in sand.iter_mut().enumerate() {
            if patch.reach(p % w, p / w, 0.0) <= 1.0 {
                *s = true;
            }
        }
    }

    // Pond id per pixel (water), halo membership, and a one-pixel keep-out ring.
    let mut pond_of = vec![u32::MAX; n];
    let mut taken = vec![false; n];
    let mut ponds = Vec::with_capacity(cfg.ponds);
    let margin = cfg.radius_max + cfg.halo + 1.0;
    let mut attempts = 0;
    while ponds.len() < cfg.ponds {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS || 2.0 * margin >= w.min(h) as f64 {
            return Err(Error::PondPlacement {
                ponds: cfg.ponds,
                attempts: attempts - 1,
            });
        }
        let pond = Pond {
            cx: rng.random_range(margin..w as f64 - margin),
            cy: rng.random_range(margin..h as f64 - margin),
            rx: rng.random_range(cfg.radius_min..=cfg.radius_max),
            ry: rng.random_range(cfg.radius_min..=cfg.radius_max),
            angle: rng.random_range(0.0..std::f64::consts::PI),
            t1: PondState::NoWater,
            t2: PondState::NoWater,
        };
        let footprint: Vec<usize> = (0..n)
            .filter(|&p| pond.reach(p % w, p / w, cfg.halo + 1.0) <= 1.0)
            .collect();
        if footprint.iter().any(|&p| taken[p]) {
            continue;
        }
        let id = ponds.len() as u32;
        for &p in &footprint {
            taken[p] = true;
            let (x, y) = (p % w, p / w);
            if pond.reach(x, y, 0.0) <= 1.0 {
                pond_of[p] = id;
            } else if pond.reach(x, y, cfg.halo) <= 1.0 {
                sand[p] = true;
            }
        }
        ponds.push(pond);
    }
    // Ponds whose ellipse misses every pixel centre would vanish from the truth.
    let mut sizes = vec![0usize; ponds.len()];
    for &id in pond_of.iter().filter(|&&id| id != u32::MAX) {
        sizes[id as usize] += 1;
    }

    let initial = WeightedIndex::new(cfg.initial_states)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let rows = cfg
        .transitions
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| Error::InvalidParameter(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut redraws = 0;
    loop {
        for pond in &mut ponds {
            pond.t1 = PondState::ALL[initial.sample(&mut rng)];
            pond.t2 = PondState::ALL[rows[pond.t1.code() as usize].sample(&mut rng)];
        }
        if !cfg.require_all_changes || covers_all_changes(&ponds, &sizes) {
            break;
        }
        redraws += 1;
        if redraws >= STATE_REDRAWS {
            return Err(Error::InvalidParameter(
                "transition probabilities never produce every change category".into(),
            ));
        }
    }

    let state_at = |p: usize, second: bool| match pond_of[p] {
        u32::MAX => None,
        id => Some(if second {
            ponds[id as usize].t2
        } else {
            ponds[id as usize].t1
        }),
    };
    let truth = |second: bool| -> Result<LabelRaster> {
        let states: Vec<PondState> = (0..n)
            .map(|p| state_at(p, second).unwrap_or(PondState::NoWater))
            .collect();
        LabelRaster::from_states(w, h, &states)
    };
    let states_t1 = truth(false)?;
    let states_t2 = truth(true)?;
    let change = change_map(&states_t1, &states_t2)?;

    let noise =
        Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut render = |second: bool| -> Result<Raster> {
        let mut data = vec![0f32; 6 * n];
        for b in 0..6 {
            for p in 0..n {
                let sig = match state_at(p, second) {
                    Some(s) => cfg.signatures.for_state(s),
                    None if sand[p] => &cfg.signatures.sand,
                    None => &cfg.signatures.vegetation,
                };
                let mut v = sig[b];
                if cfg.noise_sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                if second {
                    v = cfg.gain[b] * v + cfg.offset[b];
                }
                data[b * n + p] = v as f32;
            }
        }
        Raster::new(w, h, BandName::SIX.to_vec(), data)
    };
    let t1 = render(false)?;
    let t2 = render(true)?;
    Ok(SynthScene {
        pair: BiTemporalPair::new(t1, t2, "t1", "t2")?,
        states_t1,
        states_t2,
        change,
        ponds,
    })
}

fn covers_all_changes(ponds: &[Pond], sizes: &[usize]) -> bool {
    let mut seen = [false; 4];
    for (pond, &size) in ponds.iter().zip(sizes) {
        if size > 0 {
            seen[crate::autolabel::change_between(pond.t1, pond.t2).code() as usize] = true;
        }
    }
    // No Change always occurs on the background.
    seen[ChangeClass::Decrease.code() as usize]
        && seen[ChangeClass::Increase.code() as usize]
        && seen[ChangeClass::WaterExistAbsence.code() as usize]
}

//! Planted-latent data generator.
//!
//! Users and items carry latent vectors `z ~ N(0, I)`. A pair interacts with
//! probability `sigmoid(a * z_u·z_v + b)`, and each entity's semantic vector
//! is a noisy linear image `W z + σ ε` of its latent. The latents are the
//! ground truth the semantic vectors are supposed to reveal.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::align::{Provenance, SemanticStore};
use crate::corpus::InteractionSet;
use crate::{Error, Result};

const STREAM_LATENT: u64 = 0;
const STREAM_MAP: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_EDGES: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub d_z: usize,
    pub d_s: usize,
    /// Expected fraction of user/item pairs that interact.
    pub density: f64,
    pub sigma_noise: f64,
    /// Multiplier `a` on the latent inner product; the offset `b` is
    /// calibrated to hit `density`.
    pub scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 300,
            n_items: 200,
            d_z: 8,
            d_s: 32,
            density: 0.02,
            sigma_noise: 0.5,
            scale: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 || self.d_z == 0 || self.d_s == 0 {
            return Err(Error::InvalidInput("synthetic counts and dimensions must be positive".into()));
        }
        if !(self.sigma_noise >= 0.0 && self.sigma_noise.is_finite()) {
            return Err(Error::InvalidInput(format!("noise level must be >= 0, got {}", self.sigma_noise)));
        }
        if !(self.density > 0.0 && self.density < 1.0) {
            return Err(Error::InvalidInput(format!("density must lie in (0, 1), got {}", self.density)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidInput(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }
}

/// The planted quantities behind a synthetic corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct Latents {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
    /// `d_s x d_z` map from latents to semantic space.
    pub map: Array2<f64>,
    pub scale: f64,
    pub bias: f64,
}

impl Latents {
    /// Interaction logits `a z_u·z_v + b` for every pair (`I x J`).
    pub fn logits(&self) -> Array2<f64> {
        let mut l = self.users.dot(&self.items.t()) * self.scale;
        l += self.bias;
        l
    }

    /// True interaction probabilities.
    pub fn probabilities(&self) -> Array2<f64> {
        self.logits().mapv(sigmoid)
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub interactions: InteractionSet,
    pub semantic: SemanticStore,
    pub latents: Latents,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Offset `b` such that the mean of `sigmoid(inner + b)` equals `density`.
pub fn calibrate_bias(inner: &Array2<f64>, density: f64) -> Result<f64> {
    let mean_at = |b: f64| inner.iter().map(|&x| sigmoid(x + b)).sum::<f64>() / inner.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    if !(mean_at(lo) < density && mean_at(hi) > density) {
        return Err(Error::Calibration(format!("density {density} is not reachable")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < density {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let b = 0.5 * (lo + hi);
    if (mean_at(b) - density).abs() > 1e-6 * density.max(1e-3) {
        return Err(Error::Calibration(format!(
            "bisection stalled at b = {b} with density {}",
            mean_at(b)
        )));
    }
    Ok(b)
}

fn draw_latents(cfg: &SynthConfig) -> Result<Latents> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, STREAM_LATENT);
    let users = normal_matrix(cfg.n_users, cfg.d_z, &mut rng);
    let items = normal_matrix(cfg.n_items, cfg.d_z, &mut rng);
    let map = normal_matrix(cfg.d_s, cfg.d_z, &mut stream(cfg.seed, STREAM_MAP)) / (cfg.d_s as f64).sqrt();
    let inner = users.dot(&items.t()) * cfg.scale;
    let bias = calibrate_bias(&inner, cfg.density)?;
    Ok(Latents {
        users,
        items,
        map,
        scale: cfg.scale,
        bias,
    })
}

fn semantic_vectors(lat: &Latents, sigma: f64, seed: u64) -> Result<SemanticStore> {
    let mut rng = stream(seed, STREAM_NOISE);
    let mut project = |z: &Array2<f64>| {
        let clean = z.dot(&lat.map.t());
        clean + normal_matrix(z.nrows(), lat.map.nrows(), &mut rng) * sigma
    };
    let users = project(&lat.users);
    let items = project(&lat.items);
    SemanticStore::new(
        users,
        items,
        Provenance {
            model: format!("synthetic(sigma={sigma})"),
            generated_at: String::new(),
        },
    )
}

fn draw_edges(lat: &Latents, rng: &mut ChaCha8Rng) -> Result<InteractionSet> {
    let probs = lat.probabilities();
    let mut pairs = Vec::new();
    for ((u, v), &p) in probs.indexed_iter() {
        if rng.gen::<f64>() < p {
            pairs.push((u as u32, v as u32));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Empty("synthetic corpus drew no interactions".into()));
    }
    Ok(InteractionSet::from_indices(lat.users.nrows(), lat.items.nrows(), &pairs))
}

/// One synthetic corpus. Every user and item keeps its id (`u<k>`, `i<k>`)
/// even without interactions.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    let latents = draw_latents(cfg)?;
    let interactions = draw_edges(&latents, &mut stream(cfg.seed, STREAM_EDGES))?;
    let semantic = semantic_vectors(&latents, cfg.sigma_noise, cfg.seed)?;
    Ok(SynthData {
        interactions,
        semantic,
        latents,
    })
}

/// Two corpora over the same entities and latents with independent
/// interaction draws: an earlier era for pre-training and a later era for
/// fine-tuning. The first era is drawn at `first_density`, the second at
/// `cfg.density`.
pub fn generate_eras(cfg: &SynthConfig, first_density: f64) -> Result<(InteractionSet, SynthData)> {
    let later = generate(cfg)?;
    let mut early_lat = later.latents.clone();
    let inner = early_lat.users.dot(&early_lat.items.t()) * cfg.scale;
    early_lat.bias = calibrate_bias(&inner, first_density)?;
    let mut rng = stream(cfg.seed, STREAM_EDGES);
    rng.set_stream(STREAM_EDGES + 100);
    let early = draw_edges(&early_lat, &mut rng)?;
    Ok((early, later))
}

/// `n` pairs of `d`-dimensional vectors whose coordinates are independent
/// bivariate normals with correlation `rho`.
#[derive(Clone, Debug)]
pub struct GaussianPairs {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    /// `-(d/2) ln(1 - rho^2)` nats.
    pub true_mi: f64,
}

pub fn gaussian_mi(d: usize, rho: f64) -> f64 {
    -(d as f64) / 2.0 * (1.0 - rho * rho).ln()
}

pub fn oracle_mi_gaussian_pairs(n: usize, d: usize, rho: f64, seed: u64) -> Result<GaussianPairs> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidInput(format!("|rho| must be < 1, got {rho}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(n, d, &mut rng);
    let eps = normal_matrix(n, d, &mut rng);
    let y = &x * rho + eps * (1.0 - rho * rho).sqrt();
    Ok(GaussianPairs {
        x,
        y,
        true_mi: gaussian_mi(d, rho),
    })
}

/// Pearson correlation pooled over every coordinate pair.
pub fn pooled_correlation(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let (xm, ym) = (x.mean_axis(Axis(0)).unwrap(), y.mean_axis(Axis(0)).unwrap());
    let (xc, yc) = (x - &xm, y - &ym);
    let cov: f64 = (&xc * &yc).sum();
    let vx: f64 = xc.mapv(|v| v * v).sum();
    let vy: f64 = yc.mapv(|v| v * v).sum();
    cov / (vx * vy).sqrt()
}

//! Random media `v`, inner parameters `zeta` and the frequencies
//! `omega_j = eps^-2 v_j + zeta_j`.
//!
//! Randomness comes from a counter-style ChaCha8 stream: the run seed keys
//! the generator and `(purpose, trial, site coordinates)` select the stream,
//! so any single value can be regenerated without replaying the others and a
//! larger box reproduces the values of a smaller one on shared sites.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, Site};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Media = 1,
    Inner = 2,
    State = 3,
    Phase = 4,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Uniform draw in `[0, 1)` keyed by `(seed, stream, trial, site)`.
pub fn keyed_uniform(seed: u64, stream: Stream, trial: u64, site: &Site) -> f64 {
    let mut h = splitmix64(stream as u64);
    h = splitmix64(h ^ trial);
    h = splitmix64(h ^ site.dim() as u64);
    for &c in site.coords() {
        h = splitmix64(h ^ (c as i64 as u64));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Random potential `v_j in [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Media {
    bx: BoxSpec,
    v: Vec<f64>,
}

impl Media {
    pub fn from_values(bx: BoxSpec, v: Vec<f64>) -> Result<Self> {
        if v.len() != bx.num_sites() {
            return Err(Error::InvalidInput("media length does not match the box".into()));
        }
        if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidInput(format!("media value {bad} outside [0, 1]")));
        }
        Ok(Media { bx, v })
    }

    pub fn constant(bx: BoxSpec, value: f64) -> Result<Self> {
        Self::from_values(bx, vec![value; bx.num_sites()])
    }

    pub fn box_spec(&self) -> BoxSpec {
        self.bx
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn get(&self, j: &Site) -> f64 {
        self.v[self.bx.index_of(j).expect("site outside the box")]
    }
}

/// Inner parameters with `zeta_j (1 + |j|_1)^{2 sigma} in [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerParams {
    bx: BoxSpec,
    zeta: Vec<f64>,
    sigma: f64,
}

impl InnerParams {
    pub fn from_values(bx: BoxSpec, zeta: Vec<f64>, sigma: f64) -> Result<Self> {
        if zeta.len() != bx.num_sites() {
            return Err(Error::InvalidInput("zeta length does not match the box".into()));
        }
        if sigma <= 0.0 {
            return Err(Error::InvalidInput("sigma must be positive".into()));
        }
        for (i, z) in zeta.iter().enumerate() {
            let j = bx.site(i);
            let scaled = z * envelope_inverse(&j, sigma);
            if !(0.0..=1.0).contains(&scaled) {
                return Err(Error::InvalidInput(format!(
                    "zeta at {j} violates the envelope: scaled value {scaled}"
                )));
            }
        }
        Ok(InnerParams { bx, zeta, sigma })
    }

    pub fn zeros(bx: BoxSpec, sigma: f64) -> Self {
        InnerParams {
            bx,
            zeta: vec![0.0; bx.num_sites()],
            sigma,
        }
    }

    pub fn box_spec(&self) -> BoxSpec {
        self.bx
    }

    pub fn values(&self) -> &[f64] {
        &self.zeta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn get(&self, j: &Site) -> f64 {
        self.zeta[self.bx.index_of(j).expect("site outside the box")]
    }
}

/// `(1 + |j|_1)^{2 sigma}`.
fn envelope_inverse(j: &Site, sigma: f64) -> f64 {
    (1.0 + j.l1() as f64).powf(2.0 * sigma)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyMap {
    bx: BoxSpec,
    omega: Vec<f64>,
    eps: f64,
}

impl FrequencyMap {
    /// Frequencies given directly (for tests and hand-built instances).
    pub fn from_values(bx: BoxSpec, omega: Vec<f64>, eps: f64) -> Result<Self> {
        if omega.len() != bx.num_sites() {
            return Err(Error::InvalidInput("omega length does not match the box".into()));
        }
        Ok(FrequencyMap { bx, omega, eps })
    }

    pub fn box_spec(&self) -> BoxSpec {
        self.bx
    }

    pub fn values(&self) -> &[f64] {
        &self.omega
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn get(&self, j: &Site) -> f64 {
        self.omega[self.bx.index_of(j).expect("site outside the box")]
    }
}

pub fn sample_media(seed: u64, bx: BoxSpec) -> Media {
    let v = bx
        .sites()
        .map(|j| keyed_uniform(seed, Stream::Media, 0, &j))
        .collect();
    Media { bx, v }
}

pub fn sample_inner(seed: u64, bx: BoxSpec, sigma: f64) -> InnerParams {
    sample_inner_trial(seed, bx, sigma, 0)
}

/// Draw number `trial` from the normalised product measure on the inner-parameter set.
pub fn sample_inner_trial(seed: u64, bx: BoxSpec, sigma: f64, trial: u64) -> InnerParams {
    let zeta = bx
        .sites()
        .map(|j| keyed_uniform(seed, Stream::Inner, trial, &j) / envelope_inverse(&j, sigma))
        .collect();
    InnerParams { bx, zeta, sigma }
}

pub fn frequencies(media: &Media, zeta: &InnerParams, eps: f64) -> Result<FrequencyMap> {
    if media.bx != zeta.bx {
        return Err(Error::InvalidInput("media and zeta live on different boxes".into()));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    let inv_eps2 = 1.0 / (eps * eps);
    let omega = media
        .v
        .iter()
        .zip(&zeta.zeta)
        .map(|(v, z)| inv_eps2 * v + z)
        .collect();
    Ok(FrequencyMap {
        bx: media.bx,
        omega,
        eps,
    })
}

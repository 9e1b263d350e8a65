//! Deterministic, splittable random streams.
//!
//! Every stream is keyed by a lineage `(master_seed, domain_tag, index)`.
//! The lineage is written verbatim into the 256-bit key of a ChaCha12
//! block cipher, so each lineage owns an independent counter-based stream
//! and no draw ever depends on scheduling order. Normal variates come from
//! the ziggurat sampler in `rand_distr`; [`RNG_ALGORITHM`] names the pair
//! and is echoed into every CSV header.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{ConeError, Result};

/// Frozen identifier of the generator and normal sampler.
pub const RNG_ALGORITHM: &str = "chacha12-ziggurat";

/// Domain tags used by the library. Callers may use any other value.
pub mod tags {
    pub const CONE_BUILD: u64 = 0x636f_6e65;
    pub const DETECTOR: u64 = 0x6465_7465;
    pub const KINEMATIC: u64 = 0x6b69_6e65;
    pub const PREIMAGE: u64 = 0x7072_6569;
    pub const ESCAPE: u64 = 0x6573_6361;
    pub const LOGISTIC: u64 = 0x6c6f_6769;
    pub const CONIC_PROGRAM: u64 = 0x636f_7072;
    pub const LOCAL_DM: u64 = 0x6c64_6d00;
    pub const SUPPORT_CONC: u64 = 0x7363_6f6e;
    pub const CLI: u64 = 0x636c_6900;
}

/// Identity of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lineage {
    pub master_seed: u64,
    pub domain_tag: u64,
    pub index: u64,
}

/// A counter-based random stream with a fixed lineage.
#[derive(Debug, Clone)]
pub struct RngStream {
    lineage: Lineage,
    inner: ChaCha12Rng,
}

/// Returns the stream identified by `(master_seed, domain_tag, index)`.
pub fn derive_stream(master_seed: u64, domain_tag: u64, index: u64) -> RngStream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain_tag.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(b"conelab\0");
    RngStream {
        lineage: Lineage {
            master_seed,
            domain_tag,
            index,
        },
        inner: ChaCha12Rng::from_seed(key),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn lineage(&self) -> Lineage {
        self.lineage
    }

    /// A sub-stream whose lineage depends only on this stream's lineage and
    /// `sub`, never on how many draws this stream has made.
    pub fn child(&self, sub: u64) -> RngStream {
        let tag = splitmix64(self.lineage.domain_tag ^ splitmix64(sub.wrapping_add(1)));
        derive_stream(self.lineage.master_seed, tag, self.lineage.index)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Fair sign, `+1.0` or `-1.0`.
    pub fn sign(&mut self) -> f64 {
        if self.inner.next_u32() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// `d` i.i.d. standard normal variates.
    pub fn gaussian_vector(&mut self, d: usize) -> Result<DVector<f64>> {
        if d == 0 {
            return Err(ConeError::invalid("d", "vector length must be positive"));
        }
        Ok(DVector::from_fn(d, |_, _| self.normal()))
    }

    /// An `m x n` matrix of i.i.d. standard normals. Entry `(i, j)` receives
    /// draw number `i * n + j` (row-major draw order).
    pub fn gaussian_matrix(&mut self, m: usize, n: usize) -> Result<DMatrix<f64>> {
        if m == 0 || n == 0 {
            return Err(ConeError::invalid(
                "shape",
                format!("matrix dimensions must be positive, got {m}x{n}"),
            ));
        }
        let draws: Vec<f64> = (0..m * n).map(|_| self.normal()).collect();
        Ok(DMatrix::from_row_slice(m, n, &draws))
    }

    /// Uniformly distributed unit vector in `R^d`.
    pub fn unit_vector(&mut self, d: usize) -> Result<DVector<f64>> {
        loop {
            let g = self.gaussian_vector(d)?;
            let norm = g.norm();
            if norm > 1e-12 {
                return Ok(g / norm);
            }
        }
    }
}

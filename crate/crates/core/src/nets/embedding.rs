use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::math::{cos, sin, TAU};

/// Random Fourier features of a scalar: `[sin(2 pi B s), cos(2 pi B s)]`.
///
/// The frequencies `B` are drawn once from `N(0, scale^2)` and never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierEmbedding {
    freqs: Vec<f64>,
}

impl FourierEmbedding {
    pub fn new(features: usize, scale: f64, rng: &mut dyn RngCore) -> Self {
        let freqs = (0..features)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
            .collect();
        Self { freqs }
    }

    pub fn from_frequencies(freqs: Vec<f64>) -> Self {
        Self { freqs }
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    pub fn features(&self) -> usize {
        self.freqs.len()
    }

    /// Output width, twice the number of frequencies.
    pub fn out_dim(&self) -> usize {
        2 * self.freqs.len()
    }

    /// Writes the embedding of `s` into `out[..out_dim()]`.
    pub fn embed_into(&self, s: f64, out: &mut [f64]) {
        let f = self.freqs.len();
        for (j, &b) in self.freqs.iter().enumerate() {
            let phase = TAU * b * s;
            out[j] = sin(phase);
            out[f + j] = cos(phase);
        }
    }

    pub fn embed(&self, s: f64) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.out_dim()];
        self.embed_into(s, &mut out);
        out
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic per-chain random stream.
///
/// `(seed, stream_id)` fully determines the sequence. Draws are counted at
/// the level of this API (one per normal, one per uniform).
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
            draws: 0,
        }
    }

    /// Independent child stream; depends only on `(seed, stream_id, child)`.
    pub fn fork(&self, child: u64) -> RngStream {
        RngStream::new(self.seed, stream_id_for(self.stream_id, child))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.draws += 1;
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.random::<f64>()
    }

    /// Uniform point of `B(0, δ)`: Gaussian direction, then radius `δ u^{1/n}`.
    #[inline]
    pub fn ball_step(&mut self, delta: f64, out: &mut [f64]) {
        let mut sq = 0.0;
        for v in out.iter_mut() {
            *v = self.normal();
            sq += *v * *v;
        }
        let u = self.uniform();
        let scale = if sq > 0.0 {
            delta * u.powf(1.0 / out.len() as f64) / sq.sqrt()
        } else {
            0.0
        };
        for v in out.iter_mut() {
            *v *= scale;
        }
    }

    pub fn unit_direction(&mut self, out: &mut [f64]) {
        loop {
            let mut sq = 0.0;
            for v in out.iter_mut() {
                *v = self.normal();
                sq += *v * *v;
            }
            if sq > 0.0 {
                let inv = 1.0 / sq.sqrt();
                out.iter_mut().for_each(|v| *v *= inv);
                return;
            }
        }
    }

    pub fn gaussian(&mut self, sigma: f64, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = sigma * self.normal();
        }
    }
}

/// Stable stream-id mix of `(stage, chain)`: SplitMix64 finalizer applied to
/// `stage ⊕ splitmix(chain + 1)`. Values are part of the reproducibility
/// contract and must not change.
pub fn stream_id_for(stage: u64, chain: u64) -> u64 {
    splitmix64(stage ^ splitmix64(chain.wrapping_add(1)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

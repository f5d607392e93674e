use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Seed plus named, independent ChaCha substreams.
///
/// Each name maps to its own ChaCha stream id under the same key, so draws on
/// one substream never shift another (env resets vs. exploration noise vs.
/// minibatch sampling).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str) -> StreamRng {
        let digest = Sha256::digest(name.as_bytes());
        let mut id = [0u8; 8];
        id.copy_from_slice(&digest[..8]);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::from_le_bytes(id));
        rng
    }

    pub fn env(&self) -> StreamRng {
        self.stream("env")
    }

    pub fn eval_env(&self) -> StreamRng {
        self.stream("eval-env")
    }

    /// Parameter initialisation and minibatch sampling for one agent component.
    pub fn agent(&self, component: &str) -> StreamRng {
        self.stream(&format!("agent/{component}"))
    }

    /// Action noise / epsilon-greedy draws for one agent component.
    pub fn exploration(&self, component: &str) -> StreamRng {
        self.stream(&format!("exploration/{component}"))
    }
}

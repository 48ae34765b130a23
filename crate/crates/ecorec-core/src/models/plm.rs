//! Pretrained language-model backends for text encoding.
//!
//! A backend maps a token list to a fixed-width vector. Real deployments
//! would wrap an external transformer here; the built-in stub is a
//! deterministic hash-based bag-of-words embedding so that pipelines,
//! invocation counting, and energy accounting can run hermetically. The stub
//! can also simulate per-call latency, which is what makes encoder-cost
//! comparisons observable in wall-clock time.

use std::time::Duration;

/// Maximum tokens a backend call consumes; longer titles are truncated.
pub const PLM_MAX_TOKENS: usize = 30;

pub trait PlmBackend: Send + Sync {
    /// Output width.
    fn dim(&self) -> usize;

    /// Encode one token sequence into a `dim()`-length vector.
    fn encode_text(&self, tokens: &[&str]) -> Vec<f64>;

    /// Stable name for logs and config hashes.
    fn name(&self) -> &str;
}

/// Hash bag-of-words embedding. Each token deterministically activates a few
/// coordinates (FNV-1a over the bytes, re-hashed per probe); the sequence
/// vector is the mean of token vectors, so it is order-invariant like a
/// pooled transformer output and identical across processes and runs.
pub struct StubPlm {
    dim: usize,
    seed: u64,
    sleep_per_encode: Duration,
    name: String,
}

const PROBES_PER_TOKEN: usize = 4;

impl StubPlm {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "plm dim must be positive");
        Self {
            dim,
            seed,
            sleep_per_encode: Duration::ZERO,
            name: format!("stub-plm-d{dim}-s{seed}"),
        }
    }

    /// Sleep this long inside every `encode_text` call. Zero disables it.
    pub fn with_sleep(mut self, sleep: Duration) -> Self {
        self.sleep_per_encode = sleep;
        self
    }

    fn fnv1a(&self, token: &str, probe: u64) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325 ^ self.seed.wrapping_mul(0x100000001b3);
        for &b in token.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= probe;
        h = h.wrapping_mul(0x100000001b3);
        // Final avalanche so nearby probes land far apart.
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51afd7ed558ccd);
        h ^= h >> 33;
        h
    }
}

impl PlmBackend for StubPlm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, tokens: &[&str]) -> Vec<f64> {
        if !self.sleep_per_encode.is_zero() {
            std::thread::sleep(self.sleep_per_encode);
        }
        let mut v = vec![0.0; self.dim];
        let used = &tokens[..tokens.len().min(PLM_MAX_TOKENS)];
        if used.is_empty() {
            return v;
        }
        for token in used {
            for probe in 0..PROBES_PER_TOKEN as u64 {
                let h = self.fnv1a(token, probe);
                let idx = (h % self.dim as u64) as usize;
                let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
                v[idx] += sign;
            }
        }
        let scale = 1.0 / (used.len() as f64 * (PROBES_PER_TOKEN as f64).sqrt());
        for x in v.iter_mut() {
            *x *= scale;
        }
        v
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    #[test]
    fn deterministic_across_instances() {
        let a = StubPlm::new(96, 7);
        let b = StubPlm::new(96, 7);
        let tokens = ["markets", "rally", "after", "rate", "cut"];
        assert_eq!(a.encode_text(&tokens), b.encode_text(&tokens));
    }

    #[test]
    fn seed_changes_the_embedding() {
        let a = StubPlm::new(96, 7);
        let b = StubPlm::new(96, 8);
        let tokens = ["markets", "rally"];
        assert_ne!(a.encode_text(&tokens), b.encode_text(&tokens));
    }

    #[test]
    fn different_texts_differ_and_empty_is_zero() {
        let plm = StubPlm::new(128, 1);
        let a = plm.encode_text(&["storm", "warning"]);
        let b = plm.encode_text(&["cup", "final"]);
        assert_ne!(a, b);
        assert!(plm.encode_text(&[]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn truncates_past_the_token_cap() {
        let plm = StubPlm::new(64, 3);
        let long: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let long_refs: Vec<&str> = long.iter().map(String::as_str).collect();
        let capped = plm.encode_text(&long_refs[..PLM_MAX_TOKENS]);
        assert_eq!(plm.encode_text(&long_refs), capped);
        // The tail tokens really are ignored, not just coincidentally zero.
        assert_ne!(plm.encode_text(&long_refs[..PLM_MAX_TOKENS - 1]), capped);
    }

    #[test]
    fn sleep_throttle_is_observable() {
        let fast = StubPlm::new(32, 1);
        let slow = StubPlm::new(32, 1).with_sleep(Duration::from_millis(5));
        let t0 = Instant::now();
        fast.encode_text(&["a"]);
        let fast_time = t0.elapsed();
        let t1 = Instant::now();
        slow.encode_text(&["a"]);
        let slow_time = t1.elapsed();
        assert!(slow_time >= Duration::from_millis(5));
        assert!(slow_time > fast_time);
    }
}

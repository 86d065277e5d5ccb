//! Feature-hashing text encoder and the pluggable encoder contract.

use super::{FusionError, Vector, GLM_DIM, IMAGE_DIM, TEXT_DIM};

/// Produces the three modality inputs of the fusion stack.
///
/// Implementations must be deterministic for a given configuration.
pub trait EncoderBackend: Send + Sync {
    /// Validates and wraps precomputed image features.
    fn encode_image(&self, features: &[f64]) -> Result<Vector, FusionError>;
    fn encode_text(&self, text: &str) -> Result<Vector, FusionError>;
    fn encode_glm(&self, text: &str) -> Result<Vector, FusionError>;
}

/// Lower-cased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn token_hash(token: &str, seed: u64) -> u64 {
    // FNV-1a over the token, keyed by the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ splitmix64(seed);
    for b in token.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

/// Signed feature hashing of the tokens of `text` into `dim` buckets,
/// L2-normalised.
///
/// When colliding signs cancel every bucket, unsigned counts are used
/// instead, so any text with a token encodes.
pub fn hash_text_encoder(text: &str, dim: usize, seed: u64) -> Result<Vector, FusionError> {
    if dim == 0 {
        return Err(FusionError::ZeroDim);
    }
    let hashed: Vec<(usize, u64)> = tokenize(text)
        .map(|tok| {
            let h = token_hash(&tok, seed);
            ((h % dim as u64) as usize, h)
        })
        .collect();
    if hashed.is_empty() {
        return Err(FusionError::EmptyText);
    }
    let mut v = vec![0.0f64; dim];
    for &(bucket, h) in &hashed {
        v[bucket] += if splitmix64(h) >> 63 == 0 { 1.0 } else { -1.0 };
    }
    let mut norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        for &(bucket, _) in &hashed {
            v[bucket] += 1.0;
        }
        norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Vector::new(v)
}

/// Desk-scale backend: image features are passed through, both text
/// channels use [`hash_text_encoder`] with distinct derived seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashBackend {
    pub seed: u64,
}

impl HashBackend {
    pub fn new(seed: u64) -> Self {
        HashBackend { seed }
    }

    fn glm_seed(&self) -> u64 {
        splitmix64(self.seed ^ 0x474c_4d5f_5345_4544)
    }
}

impl EncoderBackend for HashBackend {
    fn encode_image(&self, features: &[f64]) -> Result<Vector, FusionError> {
        if features.len() != IMAGE_DIM {
            return Err(FusionError::Dimension {
                stage: "image_features".into(),
                expected: IMAGE_DIM,
                found: features.len(),
            });
        }
        Vector::new(features.to_vec())
    }

    fn encode_text(&self, text: &str) -> Result<Vector, FusionError> {
        hash_text_encoder(text, TEXT_DIM, self.seed)
    }

    fn encode_glm(&self, text: &str) -> Result<Vector, FusionError> {
        hash_text_encoder(text, GLM_DIM, self.glm_seed())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic() {
        let a = hash_text_encoder("white reticular pattern", 1024, 7).unwrap();
        let b = hash_text_encoder("white reticular pattern", 1024, 7).unwrap();
        assert_eq!(a, b);
        let c = hash_text_encoder("white reticular pattern", 1024, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unit_norm() {
        for text in ["a", "white reticular pattern", "x y z x y z, bilateral!"] {
            for dim in [1024, 4096] {
                let v = hash_text_encoder(text, dim, 1).unwrap();
                assert!((v.norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_text_is_an_error() {
        assert!(matches!(
            hash_text_encoder("", 1024, 1),
            Err(FusionError::EmptyText)
        ));
        assert!(matches!(
            hash_text_encoder(" ,;. ", 1024, 1),
            Err(FusionError::EmptyText)
        ));
    }

    #[test]
    fn normalisation_ignores_case_and_punctuation() {
        let a = hash_text_encoder("White, RETICULAR pattern.", 1024, 3).unwrap();
        let b = hash_text_encoder("white reticular pattern", 1024, 3).unwrap();
        assert_eq!(a, b);
    }

    fn random_word(rng: &mut ChaCha8Rng, tag: char) -> String {
        let mut w: String = (0..8).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
        w.push(tag);
        w
    }

    #[test]
    fn disjoint_texts_are_nearly_orthogonal() {
        // 100 seeded pairs of ten-token texts with disjoint vocabularies.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..100u64 {
            let a: Vec<String> = (0..10).map(|_| random_word(&mut rng, 'a')).collect();
            let b: Vec<String> = (0..10).map(|_| random_word(&mut rng, 'b')).collect();
            let va = hash_text_encoder(&a.join(" "), 1024, trial).unwrap();
            let vb = hash_text_encoder(&b.join(" "), 1024, trial).unwrap();
            assert!(va.cosine(&vb).abs() < 0.2, "trial {trial}");
        }
    }

    #[test]
    fn cancelling_tokens_still_encode() {
        // In one bucket any two tokens of opposite sign cancel.
        let sign = |t: &str| hash_text_encoder(t, 1, 5).unwrap().as_slice()[0];
        let first = sign("t0");
        let other = (1..100)
            .map(|i| format!("t{i}"))
            .find(|t| sign(t) != first)
            .expect("both signs occur");
        let v = hash_text_encoder(&format!("t0 {other}"), 1, 5).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backend_checks_image_dim() {
        let b = HashBackend::new(1);
        assert!(b.encode_image(&vec![0.0; 1279]).is_err());
        assert_eq!(b.encode_image(&vec![0.0; 1280]).unwrap().dim(), 1280);
        assert_eq!(b.encode_text("x").unwrap().dim(), 1024);
        assert_eq!(b.encode_glm("x").unwrap().dim(), 4096);
    }
}

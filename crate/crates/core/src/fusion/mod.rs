//! Projection and fusion of image, text and language-model features into the
//! 1024-dimensional case embedding.
//!
//! The stack is purely affine:
//!
//! ```text
//! image(1280) --image_proj--> 1024 ┐
//!                                   ├ concat 2048 --clip_fusion--> 1024 ┐
//! text(1024)  --text_proj---> 1024 ┘                                    ├ concat 2048 --multimodal_fusion--> 1024
//! glm(4096)   --glm_proj----> 1024 ─────────────────────────────────────┘
//! ```

mod affine;
pub mod bundle;
mod collapsed;
mod encoder;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use affine::{apply_affine, AffineMap, Vector};
pub use bundle::{load_bundle, save_bundle, BundleError, Bundled, WeightBundle};
pub use collapsed::CollapsedFusion;
pub use encoder::{hash_text_encoder, tokenize, EncoderBackend, HashBackend};

pub const IMAGE_DIM: usize = 1280;
pub const TEXT_DIM: usize = 1024;
pub const GLM_DIM: usize = 4096;
pub const EMBED_DIM: usize = 1024;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("{stage}: expected dimension {expected}, got {found}")]
    Dimension {
        stage: String,
        expected: usize,
        found: usize,
    },
    #[error("affine map shape mismatch: {out_dim}x{in_dim} needs {} weights and {out_dim} biases, got {weights} and {bias}", in_dim * out_dim)]
    Shape {
        in_dim: usize,
        out_dim: usize,
        weights: usize,
        bias: usize,
    },
    #[error("dimensions must be positive")]
    ZeroDim,
    #[error("vector is empty")]
    EmptyVector,
    #[error("non-finite input value at index {index}")]
    NonFiniteInput { index: usize },
    #[error("non-finite weights")]
    NonFiniteWeights,
    #[error("{stage}: non-finite output (corrupt weights?)")]
    NonFiniteOutput { stage: String },
    #[error("text has no tokens")]
    EmptyText,
}

/// The five affine maps of the fusion stack.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub image_proj: AffineMap,
    pub text_proj: AffineMap,
    pub glm_proj: AffineMap,
    pub clip_fusion: AffineMap,
    pub multimodal_fusion: AffineMap,
}

/// Map names and their required `(in_dim, out_dim)`.
pub const FUSION_LAYOUT: [(&str, usize, usize); 5] = [
    ("image_proj", IMAGE_DIM, EMBED_DIM),
    ("text_proj", TEXT_DIM, EMBED_DIM),
    ("glm_proj", GLM_DIM, EMBED_DIM),
    ("clip_fusion", 2 * EMBED_DIM, EMBED_DIM),
    ("multimodal_fusion", 2 * EMBED_DIM, EMBED_DIM),
];

impl FusionWeights {
    pub fn new(
        image_proj: AffineMap,
        text_proj: AffineMap,
        glm_proj: AffineMap,
        clip_fusion: AffineMap,
        multimodal_fusion: AffineMap,
    ) -> Result<Self, FusionError> {
        let w = FusionWeights {
            image_proj,
            text_proj,
            glm_proj,
            clip_fusion,
            multimodal_fusion,
        };
        for ((name, i, o), m) in FUSION_LAYOUT.iter().zip(w.maps()) {
            if m.in_dim() != *i || m.out_dim() != *o {
                return Err(FusionError::Dimension {
                    stage: format!("{name} (in {} -> out {})", m.in_dim(), m.out_dim()),
                    expected: *i,
                    found: m.in_dim(),
                });
            }
        }
        Ok(w)
    }

    pub fn zeros() -> Self {
        let [a, b, c, d, e] = FUSION_LAYOUT.map(|(_, i, o)| AffineMap::zeros(i, o));
        FusionWeights {
            image_proj: a,
            text_proj: b,
            glm_proj: c,
            clip_fusion: d,
            multimodal_fusion: e,
        }
    }

    /// Uniform init on `[-1/sqrt(in), 1/sqrt(in)]`, zero bias.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [a, b, c, d, e] = FUSION_LAYOUT.map(|(_, i, o)| AffineMap::uniform(i, o, 1.0, &mut rng));
        FusionWeights {
            image_proj: a,
            text_proj: b,
            glm_proj: c,
            clip_fusion: d,
            multimodal_fusion: e,
        }
    }

    pub fn maps(&self) -> [&AffineMap; 5] {
        [
            &self.image_proj,
            &self.text_proj,
            &self.glm_proj,
            &self.clip_fusion,
            &self.multimodal_fusion,
        ]
    }

    pub fn maps_mut(&mut self) -> [&mut AffineMap; 5] {
        [
            &mut self.image_proj,
            &mut self.text_proj,
            &mut self.glm_proj,
            &mut self.clip_fusion,
            &mut self.multimodal_fusion,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.maps().iter().map(|m| m.param_count()).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FusionOptions {
    /// L2-normalise each projected vector before concatenation.
    pub normalize_projections: bool,
}

/// Every intermediate of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct FusionTrace {
    pub image: Vec<f64>,
    pub text: Vec<f64>,
    pub glm: Vec<f64>,
    /// `[image_proj ; text_proj]`, 2048.
    pub clip_in: Vec<f64>,
    /// `[clip_fused ; glm_proj]`, 2048.
    pub mm_in: Vec<f64>,
    pub output: Vec<f64>,
}

fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn check_finite(v: &[f64], stage: &str) -> Result<(), FusionError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(FusionError::NonFiniteOutput {
            stage: stage.to_string(),
        });
    }
    Ok(())
}

/// Runs the staged stack and keeps the intermediates.
pub fn fuse_case_traced(
    img: &Vector,
    txt: &Vector,
    glm: &Vector,
    w: &FusionWeights,
    opts: FusionOptions,
) -> Result<FusionTrace, FusionError> {
    img.expect_dim(IMAGE_DIM, "image input")?;
    txt.expect_dim(TEXT_DIM, "text input")?;
    glm.expect_dim(GLM_DIM, "glm input")?;

    let mut clip_in = vec![0.0; 2 * EMBED_DIM];
    let (ip, tp) = clip_in.split_at_mut(EMBED_DIM);
    w.image_proj.apply_into(img.as_slice(), ip);
    check_finite(ip, "image_proj")?;
    w.text_proj.apply_into(txt.as_slice(), tp);
    check_finite(tp, "text_proj")?;
    if opts.normalize_projections {
        l2_normalize(ip);
        l2_normalize(tp);
    }

    let mut mm_in = vec![0.0; 2 * EMBED_DIM];
    let (cf, gp) = mm_in.split_at_mut(EMBED_DIM);
    w.clip_fusion.apply_into(&clip_in, cf);
    check_finite(cf, "clip_fusion")?;
    w.glm_proj.apply_into(glm.as_slice(), gp);
    check_finite(gp, "glm_proj")?;
    if opts.normalize_projections {
        l2_normalize(cf);
        l2_normalize(gp);
    }

    let mut output = vec![0.0; EMBED_DIM];
    w.multimodal_fusion.apply_into(&mm_in, &mut output);
    check_finite(&output, "multimodal_fusion")?;

    Ok(FusionTrace {
        image: img.as_slice().to_vec(),
        text: txt.as_slice().to_vec(),
        glm: glm.as_slice().to_vec(),
        clip_in,
        mm_in,
        output,
    })
}

/// Fuses one case into the 1024-dimensional embedding.
pub fn fuse_case(img: &Vector, txt: &Vector, glm: &Vector, w: &FusionWeights) -> Result<Vector, FusionError> {
    fuse_case_with(img, txt, glm, w, FusionOptions::default())
}

pub fn fuse_case_with(
    img: &Vector,
    txt: &Vector,
    glm: &Vector,
    w: &FusionWeights,
    opts: FusionOptions,
) -> Result<Vector, FusionError> {
    let trace = fuse_case_traced(img, txt, glm, w, opts)?;
    Vector::new(trace.output)
}

/// Anything that turns the three modality vectors into a case embedding.
pub trait CaseFuser: Send + Sync {
    fn fuse(&self, img: &Vector, txt: &Vector, glm: &Vector) -> Result<Vector, FusionError>;
}

impl CaseFuser for FusionWeights {
    fn fuse(&self, img: &Vector, txt: &Vector, glm: &Vector) -> Result<Vector, FusionError> {
        fuse_case(img, txt, glm, self)
    }
}

/// Staged fusion with non-default options.
#[derive(Debug, Clone, Copy)]
pub struct ConfiguredFusion<'a> {
    pub weights: &'a FusionWeights,
    pub options: FusionOptions,
}

impl CaseFuser for ConfiguredFusion<'_> {
    fn fuse(&self, img: &Vector, txt: &Vector, glm: &Vector) -> Result<Vector, FusionError> {
        fuse_case_with(img, txt, glm, self.weights, self.options)
    }
}

/// Encodes a case with `backend` and fuses it with `fuser`.
pub fn embed_case(
    backend: &dyn EncoderBackend,
    fuser: &dyn CaseFuser,
    text: &str,
    image_features: &[f64],
) -> Result<Vector, FusionError> {
    let img = backend.encode_image(image_features)?;
    let txt = backend.encode_text(text)?;
    let glm = backend.encode_glm(text)?;
    fuser.fuse(&img, &txt, &glm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
        Vector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn with_random_bias(mut w: FusionWeights, rng: &mut ChaCha8Rng) -> FusionWeights {
        for m in w.maps_mut() {
            for b in m.bias_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        w
    }

    /// Performs each projection and concatenation as a separate step.
    fn staged_oracle(img: &Vector, txt: &Vector, glm: &Vector, w: &FusionWeights) -> Vec<f64> {
        let ip = apply_affine(&w.image_proj, img).unwrap().into_inner();
        let tp = apply_affine(&w.text_proj, txt).unwrap().into_inner();
        let mut cat1 = ip.clone();
        cat1.extend_from_slice(&tp);
        let cf = apply_affine(&w.clip_fusion, &Vector::new(cat1).unwrap())
            .unwrap()
            .into_inner();
        let gp = apply_affine(&w.glm_proj, glm).unwrap().into_inner();
        let mut cat2 = cf;
        cat2.extend_from_slice(&gp);
        apply_affine(&w.multimodal_fusion, &Vector::new(cat2).unwrap())
            .unwrap()
            .into_inner()
    }

    #[test]
    fn layout_matches_declared_dims() {
        let w = FusionWeights::zeros();
        let dims: Vec<_> = w.maps().iter().map(|m| (m.in_dim(), m.out_dim())).collect();
        assert_eq!(
            dims,
            vec![
                (1280, 1024),
                (1024, 1024),
                (4096, 1024),
                (2048, 1024),
                (2048, 1024)
            ]
        );
    }

    #[test]
    fn zero_weights_zero_output() {
        let w = FusionWeights::zeros();
        let out = fuse_case(
            &Vector::zeros(IMAGE_DIM),
            &Vector::zeros(TEXT_DIM),
            &Vector::zeros(GLM_DIM),
            &w,
        )
        .unwrap();
        assert_eq!(out, Vector::zeros(EMBED_DIM));
    }

    #[test]
    fn matches_staged_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let w = with_random_bias(FusionWeights::seeded(5), &mut rng);
        for _ in 0..3 {
            let img = random_vector(&mut rng, IMAGE_DIM);
            let txt = random_vector(&mut rng, TEXT_DIM);
            let glm = random_vector(&mut rng, GLM_DIM);
            let out = fuse_case(&img, &txt, &glm, &w).unwrap();
            assert_eq!(out.dim(), EMBED_DIM);
            for (a, b) in out.as_slice().iter().zip(staged_oracle(&img, &txt, &glm, &w)) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn stage_is_named_on_mismatch() {
        let w = FusionWeights::zeros();
        let err = fuse_case(
            &Vector::zeros(IMAGE_DIM),
            &Vector::zeros(TEXT_DIM),
            &Vector::zeros(4095),
            &w,
        )
        .unwrap_err();
        assert!(err.to_string().contains("glm input"), "{err}");
    }

    #[test]
    fn wrong_map_dims_rejected() {
        let w = FusionWeights::zeros();
        let err = FusionWeights::new(
            AffineMap::zeros(1280, 512),
            w.text_proj.clone(),
            w.glm_proj.clone(),
            w.clip_fusion.clone(),
            w.multimodal_fusion.clone(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("image_proj"));
    }

    #[test]
    fn normalisation_switch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = FusionWeights::seeded(2);
        let img = random_vector(&mut rng, IMAGE_DIM);
        let txt = random_vector(&mut rng, TEXT_DIM);
        let glm = random_vector(&mut rng, GLM_DIM);
        let plain = fuse_case(&img, &txt, &glm, &w).unwrap();
        let opts = FusionOptions {
            normalize_projections: true,
        };
        let normed = ConfiguredFusion {
            weights: &w,
            options: opts,
        }
        .fuse(&img, &txt, &glm)
        .unwrap();
        assert_eq!(normed.dim(), EMBED_DIM);
        assert_ne!(plain, normed);
    }
}

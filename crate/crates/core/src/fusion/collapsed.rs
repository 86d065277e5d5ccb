use nalgebra::{DMatrix, DVector};

use super::{CaseFuser, FusionError, FusionWeights, Vector, EMBED_DIM, GLM_DIM, IMAGE_DIM, TEXT_DIM};

/// The fusion stack folded into one affine map per modality.
///
/// Because every stage is affine, the embedding equals
/// `A_img x_img + A_txt x_txt + A_glm x_glm + c`. The folded matrices are
/// stored column-major so sparse hashed text vectors cost one column per
/// token. Results agree with the staged computation up to rounding.
#[derive(Debug, Clone)]
pub struct CollapsedFusion {
    image: DMatrix<f64>,
    text: DMatrix<f64>,
    glm: DMatrix<f64>,
    bias: Vec<f64>,
}

fn matrix(m: &super::AffineMap) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.out_dim(), m.in_dim(), m.weights())
}

impl CollapsedFusion {
    /// Folds `w`; only valid for the plain (un-normalised) stack.
    pub fn new(w: &FusionWeights) -> Self {
        let mm = matrix(&w.multimodal_fusion);
        let cf = matrix(&w.clip_fusion);
        let mm_left = mm.columns(0, EMBED_DIM);
        let mm_right = mm.columns(EMBED_DIM, EMBED_DIM);
        // multimodal_left * clip_fusion, 1024 x 2048
        let mc = mm_left * &cf;
        let image = mc.columns(0, EMBED_DIM) * matrix(&w.image_proj);
        let text = mc.columns(EMBED_DIM, EMBED_DIM) * matrix(&w.text_proj);
        let glm = mm_right * matrix(&w.glm_proj);

        let b_img = DVector::from_column_slice(w.image_proj.bias());
        let b_txt = DVector::from_column_slice(w.text_proj.bias());
        let b_glm = DVector::from_column_slice(w.glm_proj.bias());
        let b_cf = DVector::from_column_slice(w.clip_fusion.bias());
        let b_mm = DVector::from_column_slice(w.multimodal_fusion.bias());
        let clip_bias = cf.columns(0, EMBED_DIM) * b_img + cf.columns(EMBED_DIM, EMBED_DIM) * b_txt + b_cf;
        let bias = mm_left * clip_bias + mm_right * b_glm + b_mm;

        CollapsedFusion {
            image,
            text,
            glm,
            bias: bias.as_slice().to_vec(),
        }
    }

    fn accumulate(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(m.column(j).iter()) {
                *o += xj * a;
            }
        }
    }
}

impl CaseFuser for CollapsedFusion {
    fn fuse(&self, img: &Vector, txt: &Vector, glm: &Vector) -> Result<Vector, FusionError> {
        img.expect_dim(IMAGE_DIM, "image input")?;
        txt.expect_dim(TEXT_DIM, "text input")?;
        glm.expect_dim(GLM_DIM, "glm input")?;
        let mut out = self.bias.clone();
        Self::accumulate(&self.image, img.as_slice(), &mut out);
        Self::accumulate(&self.text, txt.as_slice(), &mut out);
        Self::accumulate(&self.glm, glm.as_slice(), &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::NonFiniteOutput {
                stage: "collapsed fusion".into(),
            });
        }
        Vector::new(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{fuse_case, hash_text_encoder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn agrees_with_staged_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut w = FusionWeights::seeded(21);
        for m in w.maps_mut() {
            for b in m.bias_mut() {
                *b = rng.random_range(-0.2..0.2);
            }
        }
        let collapsed = CollapsedFusion::new(&w);
        for k in 0..3 {
            let img = Vector::new((0..IMAGE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let txt = hash_text_encoder("white reticular pattern bilateral", TEXT_DIM, k).unwrap();
            let glm = hash_text_encoder("white reticular pattern bilateral", GLM_DIM, k + 9).unwrap();
            let a = fuse_case(&img, &txt, &glm, &w).unwrap();
            let b = collapsed.fuse(&img, &txt, &glm).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
        }
    }
}

//! Two-dimensional disease atlas from per-disease embeddings.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::taxonomy::{DiseaseId, Taxonomy, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Triangle,
    Square,
}

impl Shape {
    pub fn for_zone(zone: Zone) -> Self {
        match zone {
            Zone::Routine => Shape::Circle,
            Zone::Intermediate => Shape::Triangle,
            Zone::Complex => Shape::Square,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasPoint {
    pub disease_id: DiseaseId,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub zone: Zone,
    pub shape: Shape,
    /// Disease family; equal keys share a colour.
    pub family_color_key: String,
    /// `1 - mean top-1 confidence`, 1.0 when the disease had no evaluated
    /// cases.
    pub certainty_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasExport {
    pub points: Vec<AtlasPoint>,
    /// Fraction of total variance captured by each axis.
    pub explained_variance: [f64; 2],
}

/// Top-2 principal axes of the rows of `data`, as unit column vectors.
///
/// Each axis is signed so that its first nonzero loading is positive; a
/// missing axis (rank below 2) is returned as zeros.
pub fn principal_axes(data: &DMatrix<f64>) -> ([Vec<f64>; 2], [f64; 2]) {
    let (n, d) = data.shape();
    let mean = data.row_mean();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let total: f64 = centered.iter().map(|v| v * v).sum();
    let mut axes = [vec![0.0; d], vec![0.0; d]];
    let mut explained = [0.0; 2];
    if n == 0 || total <= 1e-24 {
        return (axes, explained);
    }
    // Eigenvectors of the n x n Gram matrix map to right singular vectors.
    let gram = &centered * centered.transpose();
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for (k, &i) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[i];
        if lambda <= total * 1e-12 {
            break;
        }
        let u = eig.eigenvectors.column(i);
        let v = centered.transpose() * u;
        let norm = v.norm();
        if norm == 0.0 {
            break;
        }
        let mut axis: Vec<f64> = v.iter().map(|x| x / norm).collect();
        if let Some(first) = axis.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                axis.iter_mut().for_each(|x| *x = -*x);
            }
        }
        axes[k] = axis;
        explained[k] = lambda / total;
    }
    (axes, explained)
}

/// Projects one embedding per disease onto the top-2 principal axes.
///
/// Points come out sorted by disease id. Fewer than 3 diseases is an
/// error; identical embeddings all land on the origin.
pub fn export_atlas(
    taxonomy: &Taxonomy,
    embeddings: &BTreeMap<DiseaseId, Vec<f64>>,
    mean_confidence: &BTreeMap<DiseaseId, f64>,
) -> Result<AtlasExport, EvalError> {
    if embeddings.len() < 3 {
        return Err(EvalError::AtlasTooSmall(embeddings.len()));
    }
    let dim = embeddings.values().next().map(Vec::len).unwrap_or(0);
    if dim == 0 {
        return Err(EvalError::AtlasDimension {
            expected: 1,
            found: 0,
        });
    }
    for v in embeddings.values() {
        if v.len() != dim {
            return Err(EvalError::AtlasDimension {
                expected: dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EvalError::NonFinite);
        }
    }
    for id in embeddings.keys() {
        taxonomy
            .get(*id)
            .ok_or_else(|| EvalError::UnknownDisease(*id, "atlas".into()))?;
    }
    let ids: Vec<DiseaseId> = embeddings.keys().copied().collect();
    let data = DMatrix::from_row_iterator(
        ids.len(),
        dim,
        ids.iter().flat_map(|id| embeddings[id].iter().copied()),
    );
    let (axes, explained) = principal_axes(&data);
    let mean = data.row_mean();

    let points = ids
        .iter()
        .enumerate()
        .map(|(r, id)| {
            let rec = taxonomy.get(*id).expect("ids checked above");
            let row = data.row(r) - &mean;
            let proj = |axis: &[f64]| row.iter().zip(axis).map(|(a, b)| a * b).sum::<f64>();
            let radius = mean_confidence
                .get(id)
                .map(|c| (1.0 - c).clamp(0.0, 1.0))
                .unwrap_or(1.0);
            AtlasPoint {
                disease_id: *id,
                name: rec.name.clone(),
                x: proj(&axes[0]),
                y: proj(&axes[1]),
                zone: rec.zone,
                shape: Shape::for_zone(rec.zone),
                family_color_key: rec.family.clone(),
                certainty_radius: radius,
            }
        })
        .collect();
    Ok(AtlasExport {
        points,
        explained_variance: explained,
    })
}

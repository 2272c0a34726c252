//! PCA alignment of node embeddings across a whole collection, and the
//! attribute channels built from continuous node attributes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{ContainerError, Record, TensorContainer};
use crate::embed::NodeEmbeddings;
use crate::graph::GraphDataset;
use crate::linalg::{symmetric_eigen, Matrix};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum CompressError {
    #[error("retained dimension must be even and positive, got {0}")]
    OddDimension(usize),
    #[error("cannot retain {d} components from {width}-dimensional data")]
    TooManyComponents { d: usize, width: usize },
    #[error("rank error: {rows} samples cannot support {d} components")]
    Rank { rows: usize, d: usize },
    #[error("vector width {found} does not match model width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("dataset has no node attributes")]
    MissingAttributes,
    #[error("no graphs selected for fitting")]
    NothingToFit,
}

/// Principal axes fitted on stacked node vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel<T> {
    pub mean: Vec<T>,
    /// `d x D`, rows are unit principal directions. The largest-magnitude
    /// entry of every row is positive.
    pub components: Matrix<T>,
    /// Sample variance along each component, non-increasing.
    pub explained_variance: Vec<T>,
}

/// Fits the top-`d` principal components of the rows of `data` (`M x D`)
/// from the eigendecomposition of the sample covariance.
pub fn pca_fit<T: Scalar>(data: &Matrix<T>, d: usize) -> Result<PcaModel<T>, CompressError> {
    let (m, width) = data.shape();
    if d == 0 || d % 2 == 1 {
        return Err(CompressError::OddDimension(d));
    }
    if d > width {
        return Err(CompressError::TooManyComponents { d, width });
    }
    if m < d {
        return Err(CompressError::Rank { rows: m, d });
    }

    let mut mean = vec![T::zero(); width];
    for i in 0..m {
        for (acc, &x) in mean.iter_mut().zip(data.row(i)) {
            *acc += x;
        }
    }
    let count = T::of(m as f64);
    mean.iter_mut().for_each(|x| *x /= count);

    let mut centered = data.clone();
    for i in 0..m {
        for (x, &mu) in centered.row_mut(i).iter_mut().zip(&mean) {
            *x -= mu;
        }
    }
    let denom = T::of(m.saturating_sub(1).max(1) as f64);
    let mut cov = centered.transpose().matmul(&centered);
    cov.as_mut_slice().iter_mut().for_each(|x| *x /= denom);
    // exact symmetry for the eigensolver
    for i in 0..width {
        for j in 0..i {
            let v = (cov[(i, j)] + cov[(j, i)]) / T::of(2.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = symmetric_eigen(&cov);
    let mut components = Matrix::zeros(d, width);
    for k in 0..d {
        let row = eig.vectors.row(k);
        let mut pivot = 0;
        for (j, x) in row.iter().enumerate() {
            if x.abs() > row[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if row[pivot] < T::zero() { -T::one() } else { T::one() };
        for (dst, &x) in components.row_mut(k).iter_mut().zip(row) {
            *dst = sign * x;
        }
    }
    let explained_variance = eig.values[..d].iter().map(|&v| v.max(T::zero())).collect();
    Ok(PcaModel { mean, components, explained_variance })
}

impl<T: Scalar> PcaModel<T> {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    /// Projection of one centered vector onto the components.
    pub fn transform_row(&self, x: &[T]) -> Result<Vec<T>, CompressError> {
        if x.len() != self.input_dim() {
            return Err(CompressError::WidthMismatch { expected: self.input_dim(), found: x.len() });
        }
        Ok((0..self.output_dim())
            .map(|k| {
                let mut acc = T::zero();
                for ((&xi, &mu), &c) in x.iter().zip(&self.mean).zip(self.components.row(k)) {
                    acc += (xi - mu) * c;
                }
                acc
            })
            .collect())
    }

    /// Row-wise [`PcaModel::transform_row`]; identical to it bit for bit.
    pub fn transform(&self, data: &Matrix<T>) -> Result<Matrix<T>, CompressError> {
        let mut out = Vec::with_capacity(data.rows() * self.output_dim());
        for i in 0..data.rows() {
            out.extend(self.transform_row(data.row(i))?);
        }
        Ok(Matrix::from_vec(data.rows(), self.output_dim(), out))
    }

    pub fn inverse_transform(&self, scores: &Matrix<T>) -> Result<Matrix<T>, CompressError> {
        if scores.cols() != self.output_dim() {
            return Err(CompressError::WidthMismatch { expected: self.output_dim(), found: scores.cols() });
        }
        let mut out = scores.matmul(&self.components);
        for i in 0..out.rows() {
            for (x, &mu) in out.row_mut(i).iter_mut().zip(&self.mean) {
                *x += mu;
            }
        }
        Ok(out)
    }

    pub fn to_container(&self) -> TensorContainer {
        let mut c = TensorContainer::new();
        c.push(Record::from_slice(0, "pca/mean", vec![self.mean.len()], &self.mean));
        c.push(Record::from_matrix(1, "pca/components", &self.components));
        c.push(Record::from_slice(
            2,
            "pca/explained_variance",
            vec![self.explained_variance.len()],
            &self.explained_variance,
        ));
        c
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self, ContainerError> {
        Ok(Self {
            mean: c.get("pca/mean")?.data.to_scalars(),
            components: c.get("pca/components")?.to_matrix()?,
            explained_variance: c.get("pca/explained_variance")?.data.to_scalars(),
        })
    }
}

/// Channel composition of an image: consecutive dimension pairs of the
/// embedding part first, then of the attribute part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub embedding_channels: usize,
    pub attribute_channels: usize,
}

impl ChannelLayout {
    pub fn total(&self) -> usize {
        self.embedding_channels + self.attribute_channels
    }

    pub fn width(&self) -> usize {
        2 * self.total()
    }
}

/// Compressed coordinates of one graph's nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedNodeVectors<T> {
    pub graph_id: usize,
    pub embedding: Matrix<T>,
    pub attributes: Option<Matrix<T>>,
}

impl<T: Scalar> CompressedNodeVectors<T> {
    pub fn node_count(&self) -> usize {
        self.embedding.rows()
    }

    pub fn layout(&self) -> ChannelLayout {
        ChannelLayout {
            embedding_channels: self.embedding.cols() / 2,
            attribute_channels: self.attributes.as_ref().map_or(0, |a| a.cols() / 2),
        }
    }

    pub fn width(&self) -> usize {
        self.embedding.cols() + self.attributes.as_ref().map_or(0, Matrix::cols)
    }

    /// Coordinate `dim` of `node` in the concatenated `[embedding | attributes]` vector.
    pub fn coordinate(&self, node: usize, dim: usize) -> T {
        let e = self.embedding.cols();
        if dim < e {
            self.embedding[(node, dim)]
        } else {
            self.attributes.as_ref().expect("attribute dimension without attributes")[(node, dim - e)]
        }
    }

    /// All coordinates, flattened.
    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.embedding.as_slice().iter().chain(self.attributes.iter().flat_map(|a| a.as_slice().iter())).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PcaScope {
    /// One model over all nodes of all fitting graphs.
    #[default]
    Global,
    /// Independent model per graph.
    PerGraph,
}

/// Per-graph compressed vectors plus the fitted global model, if any.
pub type Compressed<T> = (Vec<CompressedNodeVectors<T>>, Option<PcaModel<T>>);

/// Compresses every graph's embeddings to `d` dimensions. With
/// [`PcaScope::Global`] the model is fitted on the graphs listed in
/// `fit_on` (all graphs when `None`) and returned.
pub fn compress_embeddings<T: Scalar>(
    embeddings: &[NodeEmbeddings<T>],
    d: usize,
    scope: PcaScope,
    fit_on: Option<&[usize]>,
) -> Result<Compressed<T>, CompressError> {
    match scope {
        PcaScope::Global => {
            let all: Vec<usize> = (0..embeddings.len()).collect();
            let fit = fit_on.unwrap_or(&all);
            if fit.is_empty() {
                return Err(CompressError::NothingToFit);
            }
            let stacked = Matrix::vstack(fit.iter().map(|&i| &embeddings[i].matrix));
            let model = pca_fit(&stacked, d)?;
            let out = embeddings
                .iter()
                .map(|e| {
                    Ok(CompressedNodeVectors {
                        graph_id: e.graph_id,
                        embedding: model.transform(&e.matrix)?,
                        attributes: None,
                    })
                })
                .collect::<Result<Vec<_>, CompressError>>()?;
            Ok((out, Some(model)))
        }
        PcaScope::PerGraph => {
            let out = embeddings
                .iter()
                .map(|e| {
                    let model = pca_fit(&e.matrix, d)?;
                    Ok(CompressedNodeVectors {
                        graph_id: e.graph_id,
                        embedding: model.transform(&e.matrix)?,
                        attributes: None,
                    })
                })
                .collect::<Result<Vec<_>, CompressError>>()?;
            Ok((out, None))
        }
    }
}

/// Global `(min, max)` over all embedding coordinates of the selected graphs.
pub fn embedding_range<T: Scalar>(vectors: &[CompressedNodeVectors<T>], indices: Option<&[usize]>) -> (T, T) {
    let all: Vec<usize> = (0..vectors.len()).collect();
    let idx = indices.unwrap_or(&all);
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for &i in idx {
        for &x in vectors[i].embedding.as_slice() {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo, hi)
}

/// Attribute vectors compressed with PCA to `d_attr` dimensions (fitted on
/// the nodes of `fit_on`, all graphs when `None`), then mapped per dimension
/// by the affine transform taking that dimension's fitted min/max onto
/// `target`. A dimension with zero range maps to the middle of `target`.
pub fn prepare_attribute_channels<T: Scalar>(
    dataset: &GraphDataset,
    d_attr: usize,
    target: (T, T),
    fit_on: Option<&[usize]>,
) -> Result<Vec<Matrix<T>>, CompressError> {
    if !dataset.has_attributes() {
        return Err(CompressError::MissingAttributes);
    }
    let raw: Vec<Matrix<T>> = dataset
        .graphs
        .iter()
        .map(|g| {
            let a = g.attributes().expect("checked above");
            Matrix::from_vec(g.node_count(), a.width, a.values.iter().map(|&x| T::of(x)).collect())
        })
        .collect();
    let all: Vec<usize> = (0..raw.len()).collect();
    let fit = fit_on.unwrap_or(&all);
    if fit.is_empty() {
        return Err(CompressError::NothingToFit);
    }
    let model = pca_fit(&Matrix::vstack(fit.iter().map(|&i| &raw[i])), d_attr)?;
    let mut compressed = raw.iter().map(|m| model.transform(m)).collect::<Result<Vec<_>, _>>()?;

    let mut lo = vec![T::infinity(); d_attr];
    let mut hi = vec![T::neg_infinity(); d_attr];
    for &i in fit {
        let m = &compressed[i];
        for r in 0..m.rows() {
            for (k, &x) in m.row(r).iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
    }
    let (tlo, thi) = target;
    let mid = (tlo + thi) / T::of(2.0);
    for m in &mut compressed {
        for r in 0..m.rows() {
            for (k, x) in m.row_mut(r).iter_mut().enumerate() {
                let span = hi[k] - lo[k];
                *x = if span > T::zero() { tlo + (*x - lo[k]) / span * (thi - tlo) } else { mid };
            }
        }
    }
    Ok(compressed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_have_zero_variance() {
        let data = Matrix::from_rows(&vec![vec![1.0f64, 2.0, 3.0]; 5]);
        let model = pca_fit(&data, 2).unwrap();
        assert_eq!(model.explained_variance, vec![0.0, 0.0]);
    }

    #[test]
    fn mean_maps_to_origin_and_component_to_basis() {
        let data = Matrix::from_rows(&[vec![0.0f64, 0.0], vec![4.0, 1.0], vec![-2.0, 3.0], vec![1.0, -5.0]]);
        let model = pca_fit(&data, 2).unwrap();
        let z = model.transform_row(&model.mean).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let p: Vec<f64> = model.mean.iter().zip(model.components.row(0)).map(|(m, c)| m + c).collect();
        let e1 = model.transform_row(&p).unwrap();
        assert!((e1[0] - 1.0).abs() < 1e-12 && e1[1].abs() < 1e-12);
    }

    #[test]
    fn argument_errors() {
        let data = Matrix::<f64>::zeros(3, 4);
        assert_eq!(pca_fit(&data, 3).unwrap_err(), CompressError::OddDimension(3));
        assert_eq!(pca_fit(&data, 6).unwrap_err(), CompressError::TooManyComponents { d: 6, width: 4 });
        assert_eq!(pca_fit(&data, 4).unwrap_err(), CompressError::Rank { rows: 3, d: 4 });
        let model = pca_fit(&data, 2).unwrap();
        assert!(matches!(model.transform_row(&[0.0; 3]), Err(CompressError::WidthMismatch { .. })));
    }

    #[test]
    fn container_roundtrip() {
        let data = Matrix::from_fn(10, 4, |i, j| ((i * 7 + j * 3) as f64).sin());
        let model = pca_fit(&data, 2).unwrap();
        assert_eq!(PcaModel::<f64>::from_container(&model.to_container()).unwrap(), model);
    }
}

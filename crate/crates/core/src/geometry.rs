//! Point clouds, the Gaussian kernel graph, and local PCA tangent frames.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TbnnError};
use crate::linalg::{canonicalize_signs, complete_orthonormal, orthonormality_error};

/// Samples `x_1..x_n` in ambient `R^p`, stored row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
    params: Option<DMatrix<f64>>,
    labels: Option<Vec<i64>>,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(TbnnError::invalid("point cloud needs n >= 1 and p >= 1"));
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            let row = pos % points.nrows();
            return Err(TbnnError::invalid(format!("non-finite coordinate at point {row}")));
        }
        Ok(Self {
            points,
            params: None,
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(TbnnError::invalid("ragged point rows"));
        }
        Self::new(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
    }

    pub fn with_params(mut self, params: DMatrix<f64>) -> Result<Self> {
        if params.nrows() != self.len() {
            return Err(TbnnError::DimensionMismatch {
                context: "intrinsic parameters",
                expected: self.len(),
                found: params.nrows(),
            });
        }
        self.params = Some(params);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(TbnnError::DimensionMismatch {
                context: "labels",
                expected: self.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn params(&self) -> Option<&DMatrix<f64>> {
        self.params.as_ref()
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.points
            .row(i)
            .iter()
            .zip(self.points.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Writes `x1,...,xp[,param1,...,paramq][,label]` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let p = self.ambient_dim();
        let q = self.params.as_ref().map_or(0, |m| m.ncols());
        let mut header: Vec<String> = (1..=p).map(|k| format!("x{k}")).collect();
        header.extend((1..=q).map(|k| format!("param{k}")));
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.points.row(i).iter().map(|v| fmt17(*v)).collect();
            if let Some(params) = &self.params {
                rec.extend(params.row(i).iter().map(|v| fmt17(*v)));
            }
            if let Some(labels) = &self.labels {
                rec.push(labels[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let mut coord_cols = Vec::new();
        let mut param_cols = Vec::new();
        let mut label_col = None;
        for (idx, h) in headers.iter().enumerate() {
            let h = h.trim();
            if h == "label" {
                label_col = Some(idx);
            } else if let Some(k) = h.strip_prefix("param") {
                param_cols.push((parse_suffix(k, h)?, idx));
            } else if let Some(k) = h.strip_prefix('x') {
                coord_cols.push((parse_suffix(k, h)?, idx));
            } else {
                return Err(TbnnError::Parse {
                    line: 1,
                    message: format!("unexpected column `{h}`"),
                });
            }
        }
        if coord_cols.is_empty() {
            return Err(TbnnError::MissingColumn("x1".into()));
        }
        coord_cols.sort();
        param_cols.sort();
        let mut coords = Vec::new();
        let mut params = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let cell = |idx: usize| -> Result<f64> {
                rec.get(idx)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| TbnnError::Parse {
                        line,
                        message: format!("column {}: {e}", idx + 1),
                    })
            };
            coords.push(coord_cols.iter().map(|&(_, i)| cell(i)).collect::<Result<Vec<_>>>()?);
            params.push(param_cols.iter().map(|&(_, i)| cell(i)).collect::<Result<Vec<_>>>()?);
            if let Some(li) = label_col {
                let label = rec.get(li).unwrap_or("").trim();
                labels.push(label.parse::<i64>().map_err(|e| TbnnError::Parse {
                    line,
                    message: format!("label: {e}"),
                })?);
            }
        }
        if coords.is_empty() {
            return Err(TbnnError::EmptyFile);
        }
        let mut cloud = Self::from_rows(&coords)?;
        if !param_cols.is_empty() {
            let q = param_cols.len();
            cloud = cloud.with_params(DMatrix::from_fn(params.len(), q, |i, j| params[i][j]))?;
        }
        if label_col.is_some() {
            cloud = cloud.with_labels(labels)?;
        }
        Ok(cloud)
    }
}

fn parse_suffix(k: &str, header: &str) -> Result<usize> {
    k.parse::<usize>().map_err(|_| TbnnError::Parse {
        line: 1,
        message: format!("bad column name `{header}`"),
    })
}

pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Kernel graph with unit self-loops; each undirected edge is stored once with `i < j`.
#[derive(Clone, Debug)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    self_weights: Vec<f64>,
    eps_n: f64,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn from_edges(n: usize, edges: Vec<Edge>, self_weights: Vec<f64>, eps_n: f64) -> Result<Self> {
        if n == 0 {
            return Err(TbnnError::invalid("graph needs at least one node"));
        }
        if self_weights.len() != n {
            return Err(TbnnError::DimensionMismatch {
                context: "self weights",
                expected: n,
                found: self_weights.len(),
            });
        }
        if !(eps_n > 0.0) {
            return Err(TbnnError::invalid("eps_n must be positive"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            if e.i >= e.j || e.j >= n {
                return Err(TbnnError::invalid(format!("bad edge ({}, {})", e.i, e.j)));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(TbnnError::invalid(format!("edge ({}, {}) weight must be positive", e.i, e.j)));
            }
            adjacency[e.i].push((e.j, e.weight));
            adjacency[e.j].push((e.i, e.weight));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        let graph = Self {
            n,
            edges,
            self_weights,
            eps_n,
            adjacency,
        };
        if let Some(i) = graph.degrees().iter().position(|d| !(*d > 0.0)) {
            return Err(TbnnError::invalid(format!("node {i} has zero degree")));
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn self_weights(&self) -> &[f64] {
        &self.self_weights
    }

    pub fn eps_n(&self) -> f64 {
        self.eps_n
    }

    /// Neighbors of `i` (excluding itself) sorted by index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.self_weights[i];
        }
        self.adjacency[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map_or(0.0, |pos| self.adjacency[i][pos].1)
    }

    /// `deg(i) = Σ_j w_ij` including the self weight.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.self_weights[i] + self.adjacency[i].iter().map(|&(_, w)| w).sum::<f64>())
            .collect()
    }

    /// `ndeg(i) = Σ_j w_ij / (deg(i) deg(j))`.
    pub fn normalized_degrees(&self) -> Vec<f64> {
        let deg = self.degrees();
        (0..self.n)
            .map(|i| {
                let own = self.self_weights[i] / (deg[i] * deg[i]);
                own + self.adjacency[i]
                    .iter()
                    .map(|&(j, w)| w / (deg[i] * deg[j]))
                    .sum::<f64>()
            })
            .collect()
    }

    /// Dense weight matrix including the diagonal self weights.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let mut w = DMatrix::from_diagonal(&DVector::from_column_slice(&self.self_weights));
        for e in &self.edges {
            w[(e.i, e.j)] = e.weight;
            w[(e.j, e.i)] = e.weight;
        }
        w
    }
}

/// Gaussian kernel `exp(-‖x_i − x_j‖² / eps_n)` on pairs with `‖x_i − x_j‖² ≤ eps_n`.
pub fn kernel_weight(squared_distance: f64, eps_n: f64) -> f64 {
    (-squared_distance / eps_n).exp()
}

pub fn build_geometric_graph(cloud: &PointCloud, eps_n: f64) -> Result<WeightedGraph> {
    if !(eps_n > 0.0) || !eps_n.is_finite() {
        return Err(TbnnError::invalid("eps_n must be a positive finite scalar"));
    }
    let n = cloud.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = cloud.squared_distance(i, j);
            if d2 <= eps_n {
                edges.push(Edge {
                    i,
                    j,
                    weight: kernel_weight(d2, eps_n),
                });
            }
        }
    }
    WeightedGraph::from_edges(n, edges, vec![1.0; n], eps_n)
}

/// Local PCA weighting kernel on `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PcaKernel {
    /// `K(u) = 1 − u²`
    #[default]
    Epanechnikov,
    /// `K(u) = (1 − u²)²`
    Biweight,
}

impl PcaKernel {
    pub fn eval(self, u: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        match self {
            PcaKernel::Epanechnikov => 1.0 - u * u,
            PcaKernel::Biweight => (1.0 - u * u).powi(2),
        }
    }
}

impl std::str::FromStr for PcaKernel {
    type Err = TbnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(Self::Epanechnikov),
            "biweight" => Ok(Self::Biweight),
            other => Err(TbnnError::Config(format!("unknown PCA kernel `{other}`"))),
        }
    }
}

/// Full local PCA output: per-point left singular vectors and singular values of `B_i`.
#[derive(Clone, Debug)]
pub struct LocalPca {
    pub left_vectors: Vec<DMatrix<f64>>,
    pub singular_values: Vec<Vec<f64>>,
    /// Set when fewer than `p` singular directions were available at a point.
    pub rank_deficient: Vec<bool>,
    pub eps_pca: f64,
}

/// Per-node orthonormal frames `O_i` (p × d̂).
#[derive(Clone, Debug)]
pub struct TangentBasis {
    frames: Vec<DMatrix<f64>>,
    singular_values: Vec<Vec<f64>>,
    d_hat: usize,
    eps_pca: f64,
}

impl TangentBasis {
    pub fn from_frames(frames: Vec<DMatrix<f64>>, eps_pca: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| TbnnError::invalid("tangent basis needs at least one node"))?;
        let (p, d_hat) = first.shape();
        if d_hat == 0 || d_hat > p {
            return Err(TbnnError::invalid(format!("need 1 <= d_hat <= p, got d_hat={d_hat}, p={p}")));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.shape() != (p, d_hat) {
                return Err(TbnnError::invalid(format!("frame {i} has shape {:?}", f.shape())));
            }
            let err = orthonormality_error(f);
            if err > 1e-8 {
                return Err(TbnnError::invalid(format!(
                    "frame {i} is not orthonormal (deviation {err:e})"
                )));
            }
        }
        let n = frames.len();
        Ok(Self {
            frames,
            singular_values: vec![Vec::new(); n],
            d_hat,
            eps_pca,
        })
    }

    /// `n` copies of the first `d_hat` canonical directions of `R^p`.
    pub fn identity(n: usize, p: usize, d_hat: usize) -> Result<Self> {
        let frame = DMatrix::from_fn(p, d_hat, |r, c| if r == c { 1.0 } else { 0.0 });
        Self::from_frames(vec![frame; n], 0.0)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn d_hat(&self) -> usize {
        self.d_hat
    }

    pub fn ambient_dim(&self) -> usize {
        self.frames[0].nrows()
    }

    pub fn eps_pca(&self) -> f64 {
        self.eps_pca
    }

    pub fn frame(&self, i: usize) -> &DMatrix<f64> {
        &self.frames[i]
    }

    pub fn frames(&self) -> &[DMatrix<f64>] {
        &self.frames
    }

    pub fn singular_values(&self) -> &[Vec<f64>] {
        &self.singular_values
    }

    pub fn max_orthonormality_error(&self) -> f64 {
        self.frames.iter().map(orthonormality_error).fold(0.0, f64::max)
    }
}

pub fn local_pca(cloud: &PointCloud, eps_pca: f64, kernel: PcaKernel) -> Result<LocalPca> {
    if !(eps_pca > 0.0) || !eps_pca.is_finite() {
        return Err(TbnnError::invalid("eps_pca must be a positive finite scalar"));
    }
    let n = cloud.len();
    let p = cloud.ambient_dim();
    let radius = eps_pca.sqrt();
    let mut left_vectors = Vec::with_capacity(n);
    let mut singular_values = Vec::with_capacity(n);
    let mut rank_deficient = Vec::with_capacity(n);
    for i in 0..n {
        let xi = cloud.point(i);
        let mut cols = Vec::new();
        for j in 0..n {
            if j == i {
                continue;
            }
            let dist = cloud.squared_distance(i, j).sqrt();
            if dist > 0.0 && dist <= radius {
                let scale = kernel.eval(dist / radius).sqrt();
                cols.push((cloud.point(j) - &xi) * scale);
            }
        }
        if cols.is_empty() {
            return Err(TbnnError::EmptyNeighborhood { index: i });
        }
        let b = DMatrix::from_columns(&cols);
        let svd = b.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &c| svd.singular_values[c].total_cmp(&svd.singular_values[a]));
        let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
        let mut frame = DMatrix::from_columns(
            &order.iter().map(|&k| u.column(k).into_owned()).collect::<Vec<_>>(),
        );
        canonicalize_signs(&mut frame);
        rank_deficient.push(frame.ncols() < p);
        left_vectors.push(frame);
        singular_values.push(sv);
    }
    Ok(LocalPca {
        left_vectors,
        singular_values,
        rank_deficient,
        eps_pca,
    })
}

impl LocalPca {
    /// Keeps the leading `d_hat` directions at every node, completing missing ones.
    pub fn basis(&self, d_hat: usize) -> Result<TangentBasis> {
        let p = self.left_vectors[0].nrows();
        if d_hat == 0 || d_hat > p {
            return Err(TbnnError::invalid(format!("need 1 <= d_hat <= {p}, got {d_hat}")));
        }
        let frames = self
            .left_vectors
            .iter()
            .map(|u| {
                if u.ncols() >= d_hat {
                    u.columns(0, d_hat).into_owned()
                } else {
                    let mut full = complete_orthonormal(u, d_hat);
                    canonicalize_signs(&mut full);
                    full
                }
            })
            .collect();
        Ok(TangentBasis {
            frames,
            singular_values: self.singular_values.clone(),
            d_hat,
            eps_pca: self.eps_pca,
        })
    }

    pub fn estimated_basis(&self, gamma: f64, aggregate: DimAggregate) -> Result<TangentBasis> {
        self.basis(estimate_dimension(&self.singular_values, gamma, aggregate)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimAggregate {
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for DimAggregate {
    type Err = TbnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(Self::Median),
            "mean" => Ok(Self::Mean),
            other => Err(TbnnError::Config(format!("unknown dimension aggregate `{other}`"))),
        }
    }
}

/// Smallest `m` with `Σ_{j≤m} β_j / Σ_j β_j ≥ gamma`.
pub fn local_dimension(singular_values: &[f64], gamma: f64) -> Option<usize> {
    let total: f64 = singular_values.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut acc = 0.0;
    for (m, beta) in singular_values.iter().enumerate() {
        acc += beta;
        // small slack so that gamma = 1 is reachable despite summation roundoff
        if acc / total >= gamma - 1e-12 {
            return Some(m + 1);
        }
    }
    Some(singular_values.len())
}

pub fn estimate_dimension(singular_values: &[Vec<f64>], gamma: f64, aggregate: DimAggregate) -> Result<usize> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(TbnnError::invalid("gamma must lie in (0, 1]"));
    }
    if singular_values.is_empty() {
        return Err(TbnnError::invalid("no singular values supplied"));
    }
    let mut dims = Vec::with_capacity(singular_values.len());
    for (i, sv) in singular_values.iter().enumerate() {
        if sv.is_empty() || sv.iter().any(|b| *b < 0.0 || !b.is_finite()) {
            return Err(TbnnError::invalid(format!(
                "singular values at point {i} must be nonempty and nonnegative"
            )));
        }
        if sv.windows(2).any(|w| w[1] > w[0]) {
            return Err(TbnnError::invalid(format!("singular values at point {i} are not nonincreasing")));
        }
        dims.push(local_dimension(sv, gamma).ok_or(TbnnError::DegenerateNeighborhood { index: i })?);
    }
    let d = match aggregate {
        DimAggregate::Median => {
            dims.sort_unstable();
            let m = dims.len();
            if m % 2 == 1 {
                dims[m / 2] as f64
            } else {
                (dims[m / 2 - 1] + dims[m / 2]) as f64 / 2.0
            }
        }
        DimAggregate::Mean => dims.iter().sum::<usize>() as f64 / dims.len() as f64,
    };
    Ok((d.round() as usize).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cloud(rows: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn out_of_radius_pair_has_no_edge() {
        let eps = 0.5;
        let c = cloud(&[[0.0, 0.0, 0.0], [(2.0 * eps as f64).sqrt(), 0.0, 0.0]]);
        let g = build_geometric_graph(&c, eps).unwrap();
        assert!(g.edges().is_empty());
        assert_eq!(g.degrees(), vec![1.0, 1.0]);
    }

    #[test]
    fn coincident_points_get_unit_weight() {
        let c = cloud(&[[0.3, 0.1, 0.0], [0.3, 0.1, 0.0]]);
        let g = build_geometric_graph(&c, 0.5).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
    }

    #[test]
    fn boundary_pair_gets_inverse_e() {
        // 0.5 is exactly representable, so ‖x‖² == eps_n exactly
        let eps = 0.5;
        let c = cloud(&[[0.0, 0.0, 0.0], [0.5, 0.5, 0.0]]);
        let g = build_geometric_graph(&c, eps).unwrap();
        assert_relative_eq!(g.weight(0, 1), 0.36787944117144233, epsilon = 1e-15);
        assert_relative_eq!(g.weight(1, 0), g.weight(0, 1));
    }

    #[test]
    fn rejects_non_finite_points() {
        assert!(PointCloud::from_rows(&[vec![0.0, f64::NAN]]).is_err());
        assert!(build_geometric_graph(&cloud(&[[0.0, 0.0, 0.0]]), 0.0).is_err());
    }

    #[test]
    fn collinear_neighborhood_is_one_dimensional() {
        let c = cloud(&[[0.0, 0.0, 0.0], [0.1, 0.2, 0.3], [0.2, 0.4, 0.6]]);
        let pca = local_pca(&c, 1.0, PcaKernel::Epanechnikov).unwrap();
        let sv = &pca.singular_values[1];
        assert!(sv[1] / sv[0] < 1e-8);
        let dir = pca.left_vectors[1].column(0);
        let line = nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]).normalize();
        assert_relative_eq!(dir.dot(&line).abs(), 1.0, epsilon = 1e-12);
        assert!(pca.rank_deficient[1]);
    }

    #[test]
    fn flat_patch_recovers_plane() {
        let mut rows = Vec::new();
        for a in 0..5 {
            for b in 0..5 {
                rows.push([a as f64 * 0.1, b as f64 * 0.07 + a as f64 * 0.01, 0.0]);
            }
        }
        let c = cloud(&rows);
        let basis = local_pca(&c, 0.05, PcaKernel::Epanechnikov).unwrap().basis(2).unwrap();
        let ez = nalgebra::DVector::from_vec(vec![0.0, 0.0, 1.0]);
        for i in 0..c.len() {
            let o = basis.frame(i);
            let residual = &ez - o * (o.transpose() * &ez);
            assert!((residual.norm() - 1.0).abs() < 1e-10);
            assert!((o.transpose() * &ez).norm() < 1e-10);
        }
        assert!(basis.max_orthonormality_error() < 1e-10);
    }

    #[test]
    fn empty_neighborhood_names_the_point() {
        let c = cloud(&[[0.0, 0.0, 0.0], [0.01, 0.0, 0.0], [5.0, 5.0, 5.0]]);
        match local_pca(&c, 0.01, PcaKernel::Epanechnikov) {
            Err(TbnnError::EmptyNeighborhood { index }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn local_dimension_examples() {
        assert_eq!(local_dimension(&[3.0, 1e-12], 0.8), Some(1));
        assert_eq!(local_dimension(&[1.0, 1.0], 0.8), Some(2));
        assert_eq!(local_dimension(&[0.9, 0.5, 0.3, 0.1], 1.0), Some(4));
        assert_eq!(local_dimension(&[0.0, 0.0], 0.8), None);
    }

    #[test]
    fn dimension_aggregation() {
        let sv = vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.01, 0.0], vec![1.0, 1.0, 0.01]];
        assert_eq!(estimate_dimension(&sv, 0.9, DimAggregate::Median).unwrap(), 2);
        assert_eq!(estimate_dimension(&sv, 0.9, DimAggregate::Mean).unwrap(), 2);
        let zero = vec![vec![0.0, 0.0]];
        assert!(matches!(
            estimate_dimension(&zero, 0.9, DimAggregate::Median),
            Err(TbnnError::DegenerateNeighborhood { index: 0 })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let c = cloud(&[[0.1, 0.2, 0.3], [1.0 / 3.0, -2.5, 1e-17]])
            .with_params(DMatrix::from_row_slice(2, 1, &[0.5, 1.5]))
            .unwrap()
            .with_labels(vec![0, 1])
            .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,x3,param1,label"));
        assert_eq!(PointCloud::read_csv(buf.as_slice()).unwrap(), c);
    }
}

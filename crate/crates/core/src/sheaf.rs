//! Orthogonal cellular sheaf over the kernel graph, its normalized Laplacian,
//! and the sampling operator that turns embedded vector fields into sheaf signals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TbnnError};
use crate::geometry::{Edge, TangentBasis, WeightedGraph};
use crate::linalg::orthonormality_error;

const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Closest orthogonal matrix to `O_iᵀ O_j`.
#[derive(Clone, Debug)]
pub struct Transport {
    pub matrix: DMatrix<f64>,
    /// Smallest singular value of `O_iᵀ O_j`; near zero means nearly orthogonal tangent planes.
    pub min_singular_value: f64,
}

pub fn align_transport(o_i: &DMatrix<f64>, o_j: &DMatrix<f64>) -> Result<Transport> {
    if o_i.shape() != o_j.shape() {
        return Err(TbnnError::invalid(format!(
            "frame shapes differ: {:?} vs {:?}",
            o_i.shape(),
            o_j.shape()
        )));
    }
    for (name, o) in [("O_i", o_i), ("O_j", o_j)] {
        let err = orthonormality_error(o);
        if err > 1e-8 {
            return Err(TbnnError::invalid(format!("{name} is not orthonormal (deviation {err:e})")));
        }
    }
    let cross = o_i.transpose() * o_j;
    let svd = cross.svd(true, true);
    let min_singular_value = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if min_singular_value < 1e-12 {
        log::warn!("ill-conditioned transport: smallest singular value {min_singular_value:e}");
    }
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    Ok(Transport {
        matrix: u * v_t,
        min_singular_value,
    })
}

/// Graph + frames + per-edge transports (`transports[e]` is `O_ij` for `edges[e] = (i, j)`, `i < j`).
#[derive(Clone, Debug)]
pub struct SheafStructure {
    graph: WeightedGraph,
    basis: TangentBasis,
    transports: Vec<DMatrix<f64>>,
    degrees: Vec<f64>,
    normalized_degrees: Vec<f64>,
}

impl SheafStructure {
    pub fn new(graph: WeightedGraph, basis: TangentBasis) -> Result<Self> {
        check_sizes(&graph, &basis)?;
        let transports = graph
            .edges()
            .iter()
            .map(|e| align_transport(basis.frame(e.i), basis.frame(e.j)).map(|t| t.matrix))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(graph, basis, transports)
    }

    /// Builds a sheaf from precomputed transports, rejecting any that are not orthogonal.
    pub fn from_parts(graph: WeightedGraph, basis: TangentBasis, transports: Vec<DMatrix<f64>>) -> Result<Self> {
        check_sizes(&graph, &basis)?;
        if transports.len() != graph.edges().len() {
            return Err(TbnnError::DimensionMismatch {
                context: "transports per edge",
                expected: graph.edges().len(),
                found: transports.len(),
            });
        }
        let d = basis.d_hat();
        for (e, t) in graph.edges().iter().zip(&transports) {
            if t.shape() != (d, d) {
                return Err(TbnnError::invalid(format!("transport ({}, {}) has shape {:?}", e.i, e.j, t.shape())));
            }
            let deviation = orthonormality_error(t);
            if !(deviation < ORTHOGONALITY_TOL) {
                return Err(TbnnError::NonOrthogonalTransport {
                    i: e.i,
                    j: e.j,
                    deviation,
                });
            }
        }
        let degrees = graph.degrees();
        let normalized_degrees = graph.normalized_degrees();
        Ok(Self {
            graph,
            basis,
            transports,
            degrees,
            normalized_degrees,
        })
    }

    /// Identity frames and identity transports: the scalar operator replicated `d_hat` times.
    pub fn flat(graph: WeightedGraph, d_hat: usize) -> Result<Self> {
        let n = graph.node_count();
        let basis = TangentBasis::identity(n, d_hat, d_hat)?;
        let transports = vec![DMatrix::identity(d_hat, d_hat); graph.edges().len()];
        Self::from_parts(graph, basis, transports)
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn d_hat(&self) -> usize {
        self.basis.d_hat()
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn basis(&self) -> &TangentBasis {
        &self.basis
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn normalized_degrees(&self) -> &[f64] {
        &self.normalized_degrees
    }

    pub fn edge_transports(&self) -> impl Iterator<Item = (&Edge, &DMatrix<f64>)> {
        self.graph.edges().iter().zip(self.transports.iter())
    }

    /// `O_ij` for any ordered pair joined by an edge (or `i == j`).
    pub fn transport(&self, i: usize, j: usize) -> Option<DMatrix<f64>> {
        let d = self.d_hat();
        if i == j {
            return Some(DMatrix::identity(d, d));
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let pos = self.graph.edges().iter().position(|e| e.i == a && e.j == b)?;
        let t = &self.transports[pos];
        Some(if i < j { t.clone() } else { t.transpose() })
    }

    /// Worst `‖O_ijᵀO_ij − I‖_∞` and `‖O_ji − O_ijᵀ‖_∞` over all edges.
    pub fn transport_errors(&self) -> (f64, f64) {
        let mut orth = 0.0f64;
        let mut sym = 0.0f64;
        for (e, t) in self.edge_transports() {
            orth = orth.max(orthonormality_error(t));
            let back = self.transport(e.j, e.i).expect("edge exists");
            sym = sym.max(crate::linalg::max_abs_diff(&back, &t.transpose()));
        }
        (orth, sym)
    }

    /// The block matrix `S` with `S_ij = w_ij O_ij / (deg(i) deg(j))`.
    pub fn s_matrix(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let d = self.d_hat();
        let deg = &self.degrees;
        let mut s = DMatrix::zeros(n * d, n * d);
        for i in 0..n {
            let w = self.graph.self_weights()[i] / (deg[i] * deg[i]);
            for k in 0..d {
                s[(i * d + k, i * d + k)] = w;
            }
        }
        for (e, t) in self.edge_transports() {
            let scale = e.weight / (deg[e.i] * deg[e.j]);
            let block = t * scale;
            s.view_mut((e.i * d, e.j * d), (d, d)).copy_from(&block);
            s.view_mut((e.j * d, e.i * d), (d, d)).copy_from(&block.transpose());
        }
        s
    }

    pub fn laplacian(&self) -> SheafLaplacian {
        let n = self.node_count();
        let d = self.d_hat();
        let eps = self.graph.eps_n();
        let s = self.s_matrix();
        let ndeg = &self.normalized_degrees;
        let mut lap = DMatrix::zeros(n * d, n * d);
        let mut sym = DMatrix::zeros(n * d, n * d);
        for r in 0..n * d {
            let nr = ndeg[r / d];
            for c in 0..n * d {
                let nc = ndeg[c / d];
                let identity = if r == c { 1.0 } else { 0.0 };
                lap[(r, c)] = (s[(r, c)] / nr - identity) / eps;
                sym[(r, c)] = (s[(r, c)] / (nr.sqrt() * nc.sqrt()) - identity) / eps;
            }
        }
        SheafLaplacian {
            matrix: lap,
            symmetric: sym,
            eps_n: eps,
            n,
            d_hat: d,
            normalized_degrees: ndeg.clone(),
        }
    }

    pub fn to_artifact(&self) -> SheafArtifact {
        let d = self.d_hat();
        let p = self.basis.ambient_dim();
        SheafArtifact {
            version: SheafArtifact::VERSION,
            n: self.node_count(),
            ambient_dim: p,
            d_hat: d,
            eps_n: self.graph.eps_n(),
            eps_pca: self.basis.eps_pca(),
            bases: self.basis.frames().iter().map(row_major).collect(),
            self_weights: self.graph.self_weights().to_vec(),
            edges: self
                .edge_transports()
                .map(|(e, t)| EdgeArtifact {
                    i: e.i,
                    j: e.j,
                    weight: e.weight,
                    transport: row_major(t),
                })
                .collect(),
        }
    }

    pub fn from_artifact(a: &SheafArtifact) -> Result<Self> {
        if a.version != SheafArtifact::VERSION {
            return Err(TbnnError::invalid(format!("unsupported sheaf artifact version {}", a.version)));
        }
        let frames = a
            .bases
            .iter()
            .map(|v| from_row_major(a.ambient_dim, a.d_hat, v))
            .collect::<Result<Vec<_>>>()?;
        let basis = TangentBasis::from_frames(frames, a.eps_pca)?;
        let edges = a
            .edges
            .iter()
            .map(|e| Edge {
                i: e.i,
                j: e.j,
                weight: e.weight,
            })
            .collect();
        let graph = WeightedGraph::from_edges(a.n, edges, a.self_weights.clone(), a.eps_n)?;
        let transports = a
            .edges
            .iter()
            .map(|e| from_row_major(a.d_hat, a.d_hat, &e.transport))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(graph, basis, transports)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_artifact())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_artifact(&serde_json::from_str(text)?)
    }
}

fn check_sizes(graph: &WeightedGraph, basis: &TangentBasis) -> Result<()> {
    if graph.node_count() != basis.len() {
        return Err(TbnnError::DimensionMismatch {
            context: "graph nodes vs tangent frames",
            expected: graph.node_count(),
            found: basis.len(),
        });
    }
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(rows: usize, cols: usize, v: &[f64]) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(TbnnError::DimensionMismatch {
            context: "row-major matrix",
            expected: rows * cols,
            found: v.len(),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, v))
}

/// JSON form of a [`SheafStructure`]; the Laplacian is always rebuilt from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheafArtifact {
    pub version: u32,
    pub n: usize,
    pub ambient_dim: usize,
    pub d_hat: usize,
    pub eps_n: f64,
    pub eps_pca: f64,
    /// Row-major `p × d̂` frames.
    pub bases: Vec<Vec<f64>>,
    pub self_weights: Vec<f64>,
    pub edges: Vec<EdgeArtifact>,
}

impl SheafArtifact {
    pub const VERSION: u32 = 1;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeArtifact {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub transport: Vec<f64>,
}

/// `Δ_n = ε_n⁻¹ (D⁻¹S − I)` together with its symmetric similarity transform
/// `ε_n⁻¹ (D^{-1/2} S D^{-1/2} − I)`.
#[derive(Clone, Debug)]
pub struct SheafLaplacian {
    matrix: DMatrix<f64>,
    symmetric: DMatrix<f64>,
    eps_n: f64,
    n: usize,
    d_hat: usize,
    normalized_degrees: Vec<f64>,
}

impl SheafLaplacian {
    /// Wraps an arbitrary square operator (no similarity structure: node weights are all 1).
    pub fn from_dense(matrix: DMatrix<f64>, n: usize, d_hat: usize, eps_n: f64) -> Result<Self> {
        if matrix.nrows() != n * d_hat || matrix.ncols() != n * d_hat {
            return Err(TbnnError::DimensionMismatch {
                context: "dense operator",
                expected: n * d_hat,
                found: matrix.nrows(),
            });
        }
        Ok(Self {
            symmetric: crate::linalg::symmetrize(&matrix),
            matrix,
            eps_n,
            n,
            d_hat,
            normalized_degrees: vec![1.0; n],
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn symmetric_form(&self) -> &DMatrix<f64> {
        &self.symmetric
    }

    pub fn dim(&self) -> usize {
        self.n * self.d_hat
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn d_hat(&self) -> usize {
        self.d_hat
    }

    pub fn eps_n(&self) -> f64 {
        self.eps_n
    }

    pub fn normalized_degrees(&self) -> &[f64] {
        &self.normalized_degrees
    }

    /// Per-node weights `ndeg(i) / mean(ndeg)`: the metric in which eigenvectors are orthonormal.
    pub fn node_weights(&self) -> Vec<f64> {
        let mean = self.normalized_degrees.iter().sum::<f64>() / self.n as f64;
        self.normalized_degrees.iter().map(|v| v / mean).collect()
    }
}

pub fn assemble_sheaf_laplacian(graph: WeightedGraph, basis: TangentBasis) -> Result<(SheafStructure, SheafLaplacian)> {
    let sheaf = SheafStructure::new(graph, basis)?;
    let lap = sheaf.laplacian();
    Ok((sheaf, lap))
}

/// Sheaf signal in node-major layout: node `i` owns rows `i·d̂ .. (i+1)·d̂`; columns are features.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleSignal {
    values: DMatrix<f64>,
    n: usize,
    d_hat: usize,
}

impl BundleSignal {
    pub fn new(values: DMatrix<f64>, n: usize, d_hat: usize) -> Result<Self> {
        if values.nrows() != n * d_hat || values.ncols() == 0 {
            return Err(TbnnError::DimensionMismatch {
                context: "bundle signal rows",
                expected: n * d_hat,
                found: values.nrows(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TbnnError::invalid("bundle signal has non-finite entries"));
        }
        Ok(Self { values, n, d_hat })
    }

    pub fn from_vector(v: DVector<f64>, n: usize, d_hat: usize) -> Result<Self> {
        let len = v.len();
        Self::new(DMatrix::from_column_slice(len, 1, v.as_slice()), n, d_hat)
    }

    pub fn zeros(n: usize, d_hat: usize, features: usize) -> Self {
        Self {
            values: DMatrix::zeros(n * d_hat, features),
            n,
            d_hat,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn d_hat(&self) -> usize {
        self.d_hat
    }

    pub fn features(&self) -> usize {
        self.values.ncols()
    }

    /// Coefficients of node `i` for feature `f`.
    pub fn node(&self, i: usize, f: usize) -> DVector<f64> {
        self.values.column(f).rows(i * self.d_hat, self.d_hat).into_owned()
    }

    /// CSV with header `node,component,f1..fF`, one row per (node, component).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["node".to_string(), "component".into()];
        header.extend((1..=self.features()).map(|f| format!("f{f}")));
        w.write_record(&header)?;
        for r in 0..self.values.nrows() {
            let mut row = vec![(r / self.d_hat).to_string(), (r % self.d_hat).to_string()];
            row.extend(self.values.row(r).iter().map(|v| format!("{v:.16e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the [`BundleSignal::write_csv`] layout; rows may come in any order.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| TbnnError::MissingColumn(name.to_string()))
        };
        let (node_col, comp_col) = (col("node")?, col("component")?);
        let feature_cols: Vec<usize> = (1..)
            .map_while(|f| header.iter().position(|h| h.trim() == format!("f{f}")))
            .collect();
        if feature_cols.is_empty() {
            return Err(TbnnError::MissingColumn("f1".into()));
        }
        let mut entries = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = idx as u64 + 2;
            let parse = |c: usize| -> Result<&str> {
                rec.get(c).map(str::trim).ok_or(TbnnError::Parse {
                    line,
                    message: format!("missing column {}", c + 1),
                })
            };
            let int = |c: usize| -> Result<usize> {
                parse(c)?.parse().map_err(|_| TbnnError::Parse {
                    line,
                    message: format!("bad index in column {}", c + 1),
                })
            };
            let vals = feature_cols
                .iter()
                .map(|&c| {
                    parse(c)?.parse::<f64>().map_err(|_| TbnnError::Parse {
                        line,
                        message: format!("bad number in column {}", c + 1),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            entries.push((int(node_col)?, int(comp_col)?, vals));
        }
        if entries.is_empty() {
            return Err(TbnnError::EmptyFile);
        }
        let n = entries.iter().map(|e| e.0).max().unwrap_or(0) + 1;
        let d = entries.iter().map(|e| e.1).max().unwrap_or(0) + 1;
        if entries.len() != n * d {
            return Err(TbnnError::invalid(format!(
                "expected {} rows for {n} nodes × {d} components, found {}",
                n * d,
                entries.len()
            )));
        }
        let mut values = DMatrix::from_element(n * d, feature_cols.len(), f64::NAN);
        for (i, c, vals) in entries {
            for (f, v) in vals.into_iter().enumerate() {
                values[(i * d + c, f)] = v;
            }
        }
        Self::new(values, n, d)
    }

    fn same_layout(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.d_hat != other.d_hat || self.features() != other.features() {
            return Err(TbnnError::invalid(format!(
                "layout mismatch: (n={}, d={}, F={}) vs (n={}, d={}, F={})",
                self.n,
                self.d_hat,
                self.features(),
                other.n,
                other.d_hat,
                other.features()
            )));
        }
        Ok(())
    }
}

/// `f_n(x_i) = O_iᵀ dιF(x_i)`.
pub fn sample_signal(field: &DMatrix<f64>, basis: &TangentBasis) -> Result<BundleSignal> {
    let n = basis.len();
    let d = basis.d_hat();
    if field.nrows() != n {
        return Err(TbnnError::DimensionMismatch {
            context: "field rows vs basis nodes",
            expected: n,
            found: field.nrows(),
        });
    }
    if field.ncols() != basis.ambient_dim() {
        return Err(TbnnError::DimensionMismatch {
            context: "field columns vs ambient dimension",
            expected: basis.ambient_dim(),
            found: field.ncols(),
        });
    }
    let mut values = DMatrix::zeros(n * d, 1);
    for i in 0..n {
        let coeffs = basis.frame(i).transpose() * field.row(i).transpose();
        values.view_mut((i * d, 0), (d, 1)).copy_from(&coeffs);
    }
    BundleSignal::new(values, n, d)
}

/// Inverse direction of [`sample_signal`]: `O_i f_n(x_i)` per node (first feature).
pub fn embed_signal(signal: &BundleSignal, basis: &TangentBasis) -> Result<DMatrix<f64>> {
    if signal.node_count() != basis.len() || signal.d_hat() != basis.d_hat() {
        return Err(TbnnError::invalid("signal layout does not match basis"));
    }
    let p = basis.ambient_dim();
    let mut out = DMatrix::zeros(signal.node_count(), p);
    for i in 0..signal.node_count() {
        let v = basis.frame(i) * signal.node(i, 0);
        out.row_mut(i).copy_from(&v.transpose());
    }
    Ok(out)
}

/// `⟨f, g⟩ = (1/n) Σ_i f_n(x_i) · g_n(x_i)` (summed over features).
pub fn bundle_inner_product(f: &BundleSignal, g: &BundleSignal) -> Result<f64> {
    f.same_layout(g)?;
    Ok(f.values.dot(&g.values) / f.n as f64)
}

pub fn bundle_norm(f: &BundleSignal) -> f64 {
    bundle_inner_product(f, f).expect("same layout").sqrt()
}

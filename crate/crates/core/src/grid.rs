//! Tensor-product finite-difference discretization of box domains.
//!
//! A [`Grid`] carries the second-order central stencil of the negative
//! Dirichlet Laplacian on the interior nodes of a box (boundary values are
//! eliminated, i.e. implicitly zero), the rectangle-rule quadrature whose
//! node weight is the product of the spacings, conjugate-gradient Poisson
//! solves, and the Dirichlet eigenpairs of the stencil. The quadrature is
//! chosen so that discrete integration by parts against the stencil is
//! exact, which the identity checks in `analysis` rely on.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Nodal values on the interior nodes of a grid, in lexicographic node
/// order (last axis fastest). The boundary value is implicitly zero.
pub type Field = Vec<f64>;

/// Node count above which `dirichlet_eigenpairs` switches from the dense
/// symmetric solver to subspace iteration.
pub const DENSE_EIGEN_LIMIT: usize = 4096;

const CG_TOL: f64 = 1e-13;
const CG_MAX_ITERS: usize = 200_000;
const EIGEN_TOL: f64 = 1e-10;

/// A box domain (0,L_1) x ... x (0,L_d) with d in {1,2} and a per-axis
/// interior node count.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lengths: Vec<f64>,
    nodes: Vec<usize>,
}

impl Domain {
    pub fn new(lengths: &[f64], nodes: &[usize]) -> Result<Self> {
        let dim = lengths.len();
        if dim == 0 || dim > 2 {
            return Err(Error::Config(format!(
                "domain dimension must be 1 or 2, got {dim}"
            )));
        }
        if nodes.len() != dim {
            return Err(Error::Config(format!(
                "lengths ({dim}) and nodes ({}) must have one entry per axis",
                nodes.len()
            )));
        }
        for (a, &l) in lengths.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Config(format!("length of axis {a} must be positive, got {l}")));
            }
        }
        for (a, &n) in nodes.iter().enumerate() {
            if n < 3 {
                return Err(Error::Config(format!(
                    "axis {a} needs at least 3 interior nodes, got {n}"
                )));
            }
        }
        Ok(Domain { lengths: lengths.to_vec(), nodes: nodes.to_vec() })
    }

    /// 1D interval (0, length).
    pub fn interval(length: f64, n: usize) -> Result<Self> {
        Self::new(&[length], &[n])
    }

    /// 2D box (0, lx) x (0, ly).
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(&[lx, ly], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }
}

/// Uniform tensor grid over a [`Domain`]: spacings h_a = L_a/(n_a+1),
/// N = prod n_a interior nodes, and the uniform quadrature weight
/// prod h_a shared by every node.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: Domain,
    spacing: Vec<f64>,
    total: usize,
    weight: f64,
}

/// An eigenpair of the negative Dirichlet stencil Laplacian; the vector is
/// L2-normalized against the grid quadrature.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Field,
}

pub fn build_grid(domain: Domain) -> Grid {
    let spacing: Vec<f64> = domain
        .lengths
        .iter()
        .zip(&domain.nodes)
        .map(|(&l, &n)| l / (n as f64 + 1.0))
        .collect();
    let total = domain.nodes.iter().product();
    let weight = spacing.iter().product();
    Grid { domain, spacing, total, weight }
}

impl Grid {
    pub fn new(domain: Domain) -> Grid {
        build_grid(domain)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Total interior node count N.
    pub fn num_nodes(&self) -> usize {
        self.total
    }

    /// Per-axis spacing h_a = L_a/(n_a+1).
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Quadrature weight of a node (uniform rectangle rule, prod h_a).
    pub fn node_weight(&self) -> f64 {
        self.weight
    }

    /// Multi-index of a flat node index; the last axis varies fastest.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim() {
            1 => [idx, 0],
            _ => {
                let ny = self.domain.nodes[1];
                [idx / ny, idx % ny]
            }
        }
    }

    pub fn flat_index(&self, multi: [usize; 2]) -> usize {
        match self.dim() {
            1 => multi[0],
            _ => multi[0] * self.domain.nodes[1] + multi[1],
        }
    }

    /// Coordinates of an interior node; unused axes are zero.
    pub fn node_coords(&self, idx: usize) -> [f64; 2] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 2];
        for a in 0..self.dim() {
            x[a] = (m[a] as f64 + 1.0) * self.spacing[a];
        }
        x
    }

    pub fn zero_field(&self) -> Field {
        vec![0.0; self.total]
    }

    /// Sample a function of the node coordinates into a field.
    pub fn field_from_fn(&self, f: impl Fn(&[f64]) -> f64) -> Field {
        (0..self.total)
            .map(|i| {
                let x = self.node_coords(i);
                f(&x[..self.dim()])
            })
            .collect()
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.total {
            return Err(Error::Dimension { expected: self.total, got: f.len() });
        }
        Ok(())
    }

    /// Apply the negative Dirichlet Laplacian stencil, -Delta_h f.
    pub fn apply_neg_laplacian(&self, f: &Field) -> Result<Field> {
        self.check_len(f)?;
        let mut out = vec![0.0; self.total];
        match self.dim() {
            1 => {
                let n = self.total;
                let inv_h2 = 1.0 / (self.spacing[0] * self.spacing[0]);
                for i in 0..n {
                    let left = if i > 0 { f[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { f[i + 1] } else { 0.0 };
                    out[i] = (2.0 * f[i] - left - right) * inv_h2;
                }
            }
            _ => {
                let nx = self.domain.nodes[0];
                let ny = self.domain.nodes[1];
                let inv_hx2 = 1.0 / (self.spacing[0] * self.spacing[0]);
                let inv_hy2 = 1.0 / (self.spacing[1] * self.spacing[1]);
                for i in 0..nx {
                    for j in 0..ny {
                        let p = i * ny + j;
                        let xm = if i > 0 { f[p - ny] } else { 0.0 };
                        let xp = if i + 1 < nx { f[p + ny] } else { 0.0 };
                        let ym = if j > 0 { f[p - 1] } else { 0.0 };
                        let yp = if j + 1 < ny { f[p + 1] } else { 0.0 };
                        out[p] = (2.0 * f[p] - xm - xp) * inv_hx2
                            + (2.0 * f[p] - ym - yp) * inv_hy2;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Rectangle-rule quadrature: sum of weight * nodal value.
    pub fn integrate(&self, nodal: &[f64]) -> Result<f64> {
        self.check_len(nodal)?;
        Ok(self.weight * nodal.iter().sum::<f64>())
    }

    /// Weighted L2 inner product of two fields.
    pub fn l2_inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(self.weight * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn l2_norm_sq(&self, f: &[f64]) -> Result<f64> {
        self.l2_inner(f, f)
    }

    pub fn l2_norm(&self, f: &[f64]) -> Result<f64> {
        Ok(self.l2_norm_sq(f)?.sqrt())
    }

    /// Discrete H^1_0 seminorm squared, <f, -Delta_h f> in the grid
    /// quadrature; equals the discrete Dirichlet energy int |grad f|^2.
    pub fn h1_seminorm_sq(&self, f: &Field) -> Result<f64> {
        let af = self.apply_neg_laplacian(f)?;
        self.l2_inner(f, &af)
    }

    pub fn h1_norm(&self, f: &Field) -> Result<f64> {
        Ok(self.h1_seminorm_sq(f)?.max(0.0).sqrt())
    }

    /// Solve -Delta_h g = rhs by conjugate gradients to relative residual
    /// 1e-13 (the stencil is symmetric positive definite).
    pub fn solve_poisson(&self, rhs: &Field) -> Result<Field> {
        self.check_len(rhs)?;
        let b_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            return Ok(self.zero_field());
        }
        let mut x = vec![0.0; self.total];
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
        for iter in 0..CG_MAX_ITERS {
            let res = rs_old.sqrt();
            if res <= CG_TOL * b_norm {
                return Ok(x);
            }
            let ap = self.apply_neg_laplacian(&p)?;
            let p_ap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if p_ap <= 0.0 {
                return Err(Error::LinearSolve { iterations: iter, residual: res / b_norm });
            }
            let alpha = rs_old / p_ap;
            for i in 0..self.total {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rs_new / rs_old;
            for i in 0..self.total {
                p[i] = r[i] + beta * p[i];
            }
            rs_old = rs_new;
        }
        Err(Error::LinearSolve { iterations: CG_MAX_ITERS, residual: rs_old.sqrt() / b_norm })
    }

    /// Dense matrix of the negative Laplacian stencil (operator form,
    /// without quadrature weights).
    pub(crate) fn neg_laplacian_matrix(&self) -> DMatrix<f64> {
        let n = self.total;
        let mut a = DMatrix::<f64>::zeros(n, n);
        match self.dim() {
            1 => {
                let inv_h2 = 1.0 / (self.spacing[0] * self.spacing[0]);
                for i in 0..n {
                    a[(i, i)] = 2.0 * inv_h2;
                    if i > 0 {
                        a[(i, i - 1)] = -inv_h2;
                    }
                    if i + 1 < n {
                        a[(i, i + 1)] = -inv_h2;
                    }
                }
            }
            _ => {
                let nx = self.domain.nodes[0];
                let ny = self.domain.nodes[1];
                let inv_hx2 = 1.0 / (self.spacing[0] * self.spacing[0]);
                let inv_hy2 = 1.0 / (self.spacing[1] * self.spacing[1]);
                for i in 0..nx {
                    for j in 0..ny {
                        let p = i * ny + j;
                        a[(p, p)] = 2.0 * (inv_hx2 + inv_hy2);
                        if i > 0 {
                            a[(p, p - ny)] = -inv_hx2;
                        }
                        if i + 1 < nx {
                            a[(p, p + ny)] = -inv_hx2;
                        }
                        if j > 0 {
                            a[(p, p - 1)] = -inv_hy2;
                        }
                        if j + 1 < ny {
                            a[(p, p + 1)] = -inv_hy2;
                        }
                    }
                }
            }
        }
        a
    }

    /// The k smallest Dirichlet eigenpairs, values ascending, vectors
    /// L2-orthonormal. Dense symmetric solve up to [`DENSE_EIGEN_LIMIT`]
    /// nodes, subspace iteration above.
    pub fn dirichlet_eigenpairs(&self, k: usize) -> Result<Vec<EigenPair>> {
        self.eigenpairs_with_limit(k, DENSE_EIGEN_LIMIT)
    }

    /// Smallest k eigenvalues only (no vectors); cheaper than
    /// `dirichlet_eigenpairs` on large grids.
    pub fn dirichlet_eigenvalues(&self, k: usize) -> Result<Vec<f64>> {
        if k == 0 || k > self.total {
            return Err(Error::Config(format!(
                "requested {k} eigenvalues of a grid with {} nodes",
                self.total
            )));
        }
        if self.total <= DENSE_EIGEN_LIMIT {
            let mut vals: Vec<f64> =
                self.neg_laplacian_matrix().symmetric_eigenvalues().iter().cloned().collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.truncate(k);
            Ok(vals)
        } else {
            Ok(self
                .eigenpairs_with_limit(k, DENSE_EIGEN_LIMIT)?
                .into_iter()
                .map(|p| p.value)
                .collect())
        }
    }

    pub(crate) fn eigenpairs_with_limit(
        &self,
        k: usize,
        dense_limit: usize,
    ) -> Result<Vec<EigenPair>> {
        if k == 0 || k > self.total {
            return Err(Error::Config(format!(
                "requested {k} eigenpairs of a grid with {} nodes",
                self.total
            )));
        }
        let mut pairs = if self.total <= dense_limit {
            self.eigenpairs_dense(k)?
        } else {
            self.eigenpairs_subspace(k)?
        };
        for pair in &mut pairs {
            // L2-normalize and fix the sign on the largest-magnitude entry.
            let norm = self.l2_norm(&pair.vector)?;
            if norm == 0.0 {
                return Err(Error::Eigen("zero eigenvector".into()));
            }
            let mut dominant = 0usize;
            for (i, v) in pair.vector.iter().enumerate() {
                if v.abs() > pair.vector[dominant].abs() {
                    dominant = i;
                }
            }
            let scale = pair.vector[dominant].signum() / norm;
            for v in &mut pair.vector {
                *v *= scale;
            }
        }
        Ok(pairs)
    }

    fn eigenpairs_dense(&self, k: usize) -> Result<Vec<EigenPair>> {
        let a = self.neg_laplacian_matrix();
        let eig = nalgebra::linalg::SymmetricEigen::new(a);
        let mut order: Vec<usize> = (0..self.total).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        Ok(order[..k]
            .iter()
            .map(|&i| EigenPair {
                value: eig.eigenvalues[i],
                vector: eig.eigenvectors.column(i).iter().cloned().collect(),
            })
            .collect())
    }

    /// Inverse subspace iteration with Rayleigh-Ritz projection, using the
    /// Poisson solve as the inverse operator. Deterministic: the start
    /// block is drawn from a fixed-seed generator.
    fn eigenpairs_subspace(&self, k: usize) -> Result<Vec<EigenPair>> {
        let n = self.total;
        let m = (k + 8).min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0e16);
        let mut basis: Vec<Field> =
            (0..m).map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()).collect();
        self.orthonormalize(&mut basis)?;
        let max_rounds = 500;
        let mut prev: Vec<f64> = vec![f64::INFINITY; k];
        for _round in 0..max_rounds {
            for col in basis.iter_mut() {
                *col = self.solve_poisson(col)?;
            }
            self.orthonormalize(&mut basis)?;
            // Rayleigh-Ritz on the current subspace.
            let mut proj = DMatrix::<f64>::zeros(m, m);
            let applied: Vec<Field> =
                basis.iter().map(|c| self.apply_neg_laplacian(c)).collect::<Result<_>>()?;
            for i in 0..m {
                for j in 0..m {
                    proj[(i, j)] = self.l2_inner(&basis[i], &applied[j])?;
                }
            }
            proj = (proj.clone() + proj.transpose()) * 0.5;
            let eig = nalgebra::linalg::SymmetricEigen::new(proj);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
            let rotated: Vec<Field> = order
                .iter()
                .map(|&c| {
                    let mut v = vec![0.0; n];
                    for (b, col) in basis.iter().enumerate() {
                        let w = eig.eigenvectors[(b, c)];
                        for i in 0..n {
                            v[i] += w * col[i];
                        }
                    }
                    v
                })
                .collect();
            basis = rotated;
            let values: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c]).collect();
            let drift = values[..k]
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
                .fold(0.0f64, f64::max);
            prev = values[..k].to_vec();
            if drift <= EIGEN_TOL {
                return Ok(values[..k]
                    .iter()
                    .zip(basis)
                    .map(|(&value, vector)| EigenPair { value, vector })
                    .collect());
            }
        }
        Err(Error::Eigen(format!("subspace iteration did not settle within {max_rounds} rounds")))
    }

    /// Modified Gram-Schmidt in the weighted L2 inner product.
    fn orthonormalize(&self, basis: &mut Vec<Field>) -> Result<()> {
        let m = basis.len();
        for i in 0..m {
            for j in 0..i {
                let c = self.l2_inner(&basis[j], &basis[i])?;
                let (head, tail) = basis.split_at_mut(i);
                for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                    *a -= c * b;
                }
            }
            let norm = self.l2_norm(&basis[i])?;
            if norm < 1e-14 {
                return Err(Error::Eigen("rank-deficient subspace in orthonormalization".into()));
            }
            for v in &mut basis[i] {
                *v /= norm;
            }
        }
        Ok(())
    }
}

/// Closed-form eigenvalue of the 1D 3-point stencil: (2 - 2cos(j pi/(n+1)))/h^2.
pub fn stencil_eigenvalue_1d(length: f64, n: usize, j: usize) -> f64 {
    let h = length / (n as f64 + 1.0);
    let theta = j as f64 * std::f64::consts::PI / (n as f64 + 1.0);
    (2.0 - 2.0 * theta.cos()) / (h * h)
}

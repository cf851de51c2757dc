//! Gram matrices, design factors, and the parametric design families.
//!
//! The Gram matrix is the source of truth: every design family is built
//! symbolically from its parameters, and an explicit factor `X` with
//! `X'X = Sigma` is produced only on demand via [`factorize`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest eigenvalue allowed before a matrix is rejected as indefinite.
pub const PSD_TOL: f64 = 1e-12;

/// Eigenvalues below this (relative to the largest) count as zero for rank.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GramError {
    #[error("matrix is empty")]
    Empty,
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: entry ({i},{j}) = {a} but ({j},{i}) = {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eig}")]
    NotPsd { min_eig: f64 },
    #[error("requested {n} rows but the Gram matrix has rank {rank}")]
    RankError { n: usize, rank: usize },
    #[error("failed to parse matrix file: {0}")]
    Parse(String),
}

/// Violated admissibility constraint of a design family, named explicitly.
#[derive(Debug, Error)]
#[error("inadmissible {family} parameters: {constraint}")]
pub struct AdmissibilityError {
    pub family: &'static str,
    pub constraint: String,
}

fn inadmissible(family: &'static str, constraint: impl Into<String>) -> AdmissibilityError {
    AdmissibilityError {
        family,
        constraint: constraint.into(),
    }
}

/// A validated p x p symmetric positive semidefinite matrix with the
/// quadratic form `b' Sigma b` standing in for `|Xb|_2^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

impl GramMatrix {
    /// Validates symmetry and positive semidefiniteness (smallest eigenvalue
    /// at least `-PSD_TOL`).
    pub fn new(entries: DMatrix<f64>) -> Result<Self, GramError> {
        if entries.is_empty() {
            return Err(GramError::Empty);
        }
        if entries.nrows() != entries.ncols() {
            return Err(GramError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        let p = entries.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(GramError::NotSymmetric { i, j, a, b });
                }
            }
        }
        // Symmetrize round-off before the eigensolve.
        let sym = (&entries + entries.transpose()) * 0.5;
        let min_eig = sym
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(GramError::NotPsd { min_eig });
        }
        Ok(Self { entries: sym })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            entries: DMatrix::identity(p, p),
        }
    }

    pub fn p(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// `Sigma v`.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.entries * v
    }

    /// `v' Sigma v`, the squared design norm of the coefficient vector.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.mul_vec(v))
    }

    /// Eigenvalues sorted descending, tiny negatives clipped to zero.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut eigs: Vec<f64> = self
            .entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|&e| if (-PSD_TOL..0.0).contains(&e) { 0.0 } else { e })
            .collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eigs
    }

    /// Numerical rank at tolerance `RANK_TOL * max(1, lambda_max)`.
    pub fn rank(&self) -> usize {
        let eigs = self.eigenvalues();
        let cutoff = RANK_TOL * eigs.first().copied().unwrap_or(0.0).max(1.0);
        eigs.iter().filter(|&&e| e > cutoff).count()
    }

    /// Parses a headerless CSV matrix, one row per line.
    pub fn from_csv(text: &str) -> Result<Self, GramError> {
        let m = parse_csv_matrix(text)?;
        Self::new(m)
    }

    /// Serializes as headerless CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        matrix_to_csv(&self.entries)
    }
}

pub fn parse_csv_matrix(text: &str) -> Result<DMatrix<f64>, GramError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect();
        let row = row.map_err(|e| GramError::Parse(format!("line {}: {e}", lineno + 1)))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(GramError::Parse(format!(
                    "line {}: expected {} entries, got {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(GramError::Empty);
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.16e}", m[(i, j)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// An explicit n x p design whose Gram matrix reproduces a source
/// [`GramMatrix`] entrywise within 1e-10.
#[derive(Debug, Clone)]
pub struct DesignFactor {
    columns: DMatrix<f64>,
}

impl DesignFactor {
    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    pub fn p(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn gram(&self) -> GramMatrix {
        GramMatrix::new(self.columns.transpose() * &self.columns)
            .expect("factor Gram is symmetric PSD by construction")
    }

    /// `X v`.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.columns * v
    }

    /// `X' v`.
    pub fn tr_mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.columns.tr_mul(v)
    }

    pub fn max_column_norm(&self) -> f64 {
        (0..self.p())
            .map(|j| self.columns.column(j).norm())
            .fold(0.0, f64::max)
    }
}

/// Realizes `X` with `X'X = Sigma` through the eigendecomposition
/// `Sigma = Q D Q'`, taking `X = D^{1/2} Q'` on the leading `rank` rows and
/// padding with zero rows up to `n`.
///
/// Deterministic: eigenvalues are sorted descending and every eigenvector is
/// flipped so that its first entry of non-negligible magnitude is positive.
pub fn factorize(gram: &GramMatrix, n: Option<usize>) -> Result<DesignFactor, GramError> {
    let p = gram.p();
    let eig = gram.entries().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let cutoff = RANK_TOL * lambda_max.max(1.0);
    let rank = order
        .iter()
        .filter(|&&k| eig.eigenvalues[k] > cutoff)
        .count();
    let n = n.unwrap_or(rank);
    if n < rank {
        return Err(GramError::RankError { n, rank });
    }

    let mut x = DMatrix::zeros(n, p);
    for (row, &k) in order.iter().take(rank).enumerate() {
        let ev = eig.eigenvalues[k].max(0.0).sqrt();
        let col = eig.eigenvectors.column(k);
        let max_abs = col.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let sign = col
            .iter()
            .find(|v| v.abs() > 1e-9 * max_abs.max(1e-300))
            .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
            .unwrap_or(1.0);
        for j in 0..p {
            x[(row, j)] = sign * ev * col[j];
        }
    }
    Ok(DesignFactor { columns: x })
}

/// Outcome of the fairness check: unit-norm columns and no two columns equal
/// up to a scalar multiple.
#[derive(Debug, Clone, Serialize)]
pub struct FairnessVerdict {
    pub normalized: bool,
    pub no_aligned_columns: bool,
    /// First column failing normalization, if any (0-based).
    pub unnormalized_column: Option<usize>,
    /// First aligned pair, if any (0-based).
    pub aligned_pair: Option<(usize, usize)>,
}

impl FairnessVerdict {
    pub fn is_fair(&self) -> bool {
        self.normalized && self.no_aligned_columns
    }
}

/// Checks the fairness flags on the Gram scale: `Sigma_jj = 1` for all `j`
/// and `|Sigma_jk| < sqrt(Sigma_jj Sigma_kk)` for all `j != k`.
pub fn check_fair(gram: &GramMatrix) -> FairnessVerdict {
    let p = gram.p();
    let mut unnormalized = None;
    for j in 0..p {
        if (gram.entry(j, j) - 1.0).abs() > 1e-9 {
            unnormalized = Some(j);
            break;
        }
    }
    let mut aligned = None;
    'outer: for j in 0..p {
        for k in (j + 1)..p {
            let denom = (gram.entry(j, j) * gram.entry(k, k)).sqrt();
            if denom == 0.0 {
                continue;
            }
            if gram.entry(j, k).abs() >= denom * (1.0 - 1e-12) {
                aligned = Some((j, k));
                break 'outer;
            }
        }
    }
    FairnessVerdict {
        normalized: unnormalized.is_none(),
        no_aligned_columns: aligned.is_none(),
        unnormalized_column: unnormalized,
        aligned_pair: aligned,
    }
}

/// One block of the blockwise extension of the `GoodComp` design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodCompBlock {
    pub rho: f64,
    pub c: f64,
    pub tau2: f64,
}

/// Parametric description of a design family. `build_gram` turns a spec into
/// the exact Gram matrix implied by the family's construction.
///
/// Conventions shared by all families: an active pair `(X_j, X_k)` has inner
/// product `-rho` with `rho` in (0,1) and `varphi2 = 1 - rho`; constants `C`
/// scale a normalized parent/child combination; `tau2` is the squared norm of
/// an orthogonal remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params")]
pub enum DesignSpec {
    /// p = 2: the single active pair.
    TwoVar { rho: f64 },
    /// p = 2N: mutually orthogonal active pairs.
    PairBlocks { rhos: Vec<f64> },
    /// One active pair plus `m0` orthonormal inactive variables orthogonal
    /// to it.
    PairBlocksPlusOrthogonal { rho: f64, m0: usize },
    /// p = 3: inactive `X_3 = C (X_1 + X_2)/2 + U`.
    ParentChildSingle { rho: f64, c: f64 },
    /// p = 2 + m0: inactive `X_{2+k} = C_k (X_1 + X_2)/2 + U_k` with the
    /// remainders `U_k` mutually orthogonal.
    ParentChildMany { rho: f64, cs: Vec<f64> },
    /// p = 2N + 1: one inactive variable built from all N active pairs,
    /// `X_{2N+1} = C sum_j X_j / s0 + U`.
    ParentChildBlock2N { rhos: Vec<f64>, c: f64 },
    /// p = 4: `X_3 = C(X_1+X_2)/2 + U + V`, `X_4 = C(X_1+X_2)/2 + U - V`
    /// with `tau2 = U'U > 0`; positive compatibility constant.
    GoodComp { rho: f64, c: f64, tau2: f64 },
    /// `GoodComp` with `U = 0`: compatibility constant exactly zero.
    GoodLasso2 { rho: f64, c: f64 },
    /// `GoodLasso2` with `C = 1`: zero compatibility constant and a
    /// non-unique minimizer.
    GoodLasso3 { rho: f64 },
    /// p = 4N: N mutually orthogonal `GoodComp` blocks.
    BlockGoodComp2N { blocks: Vec<GoodCompBlock> },
    /// p = 4: the active variables are children of the inactive pair,
    /// `X_1 = X_3 gamma3 + X_4 gamma4 + V`, `X_2 = ... - V` with
    /// `gamma4 = 1 - gamma3`; compatibility constant zero.
    ChildParentGamma { theta: f64, gamma3: f64 },
    /// p = 4: `X_1 = C(X_3+X_4)/2 + V`, `X_2 = C(X_3+X_4)/2 - V`; the
    /// irrepresentable condition holds.
    ChildParentSym { theta: f64, c: f64 },
    /// p = 2 + m0: orthonormal inactive variables with
    /// `X_1 = C X_{-S0} gamma + V`, `X_2 = C X_{-S0} gamma - V`.
    ChildParentOrthoInactive { c: f64, gammas: Vec<f64> },
    /// A user-supplied Gram matrix; validated but not assumed fair.
    Custom { gram: Vec<Vec<f64>> },
}

impl DesignSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            DesignSpec::TwoVar { .. } => "TwoVar",
            DesignSpec::PairBlocks { .. } => "PairBlocks",
            DesignSpec::PairBlocksPlusOrthogonal { .. } => "PairBlocksPlusOrthogonal",
            DesignSpec::ParentChildSingle { .. } => "ParentChildSingle",
            DesignSpec::ParentChildMany { .. } => "ParentChildMany",
            DesignSpec::ParentChildBlock2N { .. } => "ParentChildBlock2N",
            DesignSpec::GoodComp { .. } => "GoodComp",
            DesignSpec::GoodLasso2 { .. } => "GoodLasso2",
            DesignSpec::GoodLasso3 { .. } => "GoodLasso3",
            DesignSpec::BlockGoodComp2N { .. } => "BlockGoodComp2N",
            DesignSpec::ChildParentGamma { .. } => "ChildParentGamma",
            DesignSpec::ChildParentSym { .. } => "ChildParentSym",
            DesignSpec::ChildParentOrthoInactive { .. } => "ChildParentOrthoInactive",
            DesignSpec::Custom { .. } => "Custom",
        }
    }

    /// Number of columns of the design.
    pub fn p(&self) -> usize {
        match self {
            DesignSpec::TwoVar { .. } => 2,
            DesignSpec::PairBlocks { rhos } => 2 * rhos.len(),
            DesignSpec::PairBlocksPlusOrthogonal { m0, .. } => 2 + m0,
            DesignSpec::ParentChildSingle { .. } => 3,
            DesignSpec::ParentChildMany { cs, .. } => 2 + cs.len(),
            DesignSpec::ParentChildBlock2N { rhos, .. } => 2 * rhos.len() + 1,
            DesignSpec::GoodComp { .. } | DesignSpec::GoodLasso2 { .. } => 4,
            DesignSpec::GoodLasso3 { .. } => 4,
            DesignSpec::BlockGoodComp2N { blocks } => 4 * blocks.len(),
            DesignSpec::ChildParentGamma { .. } | DesignSpec::ChildParentSym { .. } => 4,
            DesignSpec::ChildParentOrthoInactive { gammas, .. } => 2 + gammas.len(),
            DesignSpec::Custom { gram } => gram.len(),
        }
    }

    /// The active set the family's closed forms are stated for (0-based).
    /// `Custom` designs have no convention and return `None`.
    pub fn conventional_active_set(&self) -> Option<Vec<usize>> {
        match self {
            DesignSpec::TwoVar { .. }
            | DesignSpec::PairBlocksPlusOrthogonal { .. }
            | DesignSpec::ParentChildSingle { .. }
            | DesignSpec::ParentChildMany { .. }
            | DesignSpec::GoodComp { .. }
            | DesignSpec::GoodLasso2 { .. }
            | DesignSpec::GoodLasso3 { .. }
            | DesignSpec::ChildParentGamma { .. }
            | DesignSpec::ChildParentSym { .. }
            | DesignSpec::ChildParentOrthoInactive { .. } => Some(vec![0, 1]),
            DesignSpec::PairBlocks { rhos } => Some((0..2 * rhos.len()).collect()),
            DesignSpec::ParentChildBlock2N { rhos, .. } => Some((0..2 * rhos.len()).collect()),
            DesignSpec::BlockGoodComp2N { blocks } => Some((0..2 * blocks.len()).collect()),
            DesignSpec::Custom { .. } => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("design spec serializes")
    }
}

fn check_rho(family: &'static str, name: &str, rho: f64) -> Result<(), AdmissibilityError> {
    if !rho.is_finite() || rho <= 0.0 || rho >= 1.0 {
        return Err(inadmissible(
            family,
            format!("{name} = {rho} must lie in (0,1)"),
        ));
    }
    Ok(())
}

fn check_parent_constant(
    family: &'static str,
    name: &str,
    c: f64,
    varphi2: f64,
) -> Result<(), AdmissibilityError> {
    if !c.is_finite() || c <= 1.0 {
        return Err(inadmissible(family, format!("{name} = {c} must exceed 1")));
    }
    if c * c * varphi2 / 2.0 >= 1.0 {
        return Err(inadmissible(
            family,
            format!(
                "{name}^2 varphi^2 / 2 = {} must be < 1",
                c * c * varphi2 / 2.0
            ),
        ));
    }
    Ok(())
}

/// Builds the exact Gram matrix implied by the family construction, after
/// checking every admissibility constraint by name.
pub fn build_gram(spec: &DesignSpec) -> Result<GramMatrix, AdmissibilityError> {
    let m = match spec {
        DesignSpec::TwoVar { rho } => {
            check_rho("TwoVar", "rho", *rho)?;
            two_var_block(*rho)
        }
        DesignSpec::PairBlocks { rhos } => {
            if rhos.is_empty() {
                return Err(inadmissible("PairBlocks", "at least one block required"));
            }
            let p = 2 * rhos.len();
            let mut m = DMatrix::identity(p, p);
            for (k, &rho) in rhos.iter().enumerate() {
                check_rho("PairBlocks", &format!("rho_{}", k + 1), rho)?;
                m[(2 * k, 2 * k + 1)] = -rho;
                m[(2 * k + 1, 2 * k)] = -rho;
            }
            m
        }
        DesignSpec::PairBlocksPlusOrthogonal { rho, m0 } => {
            check_rho("PairBlocksPlusOrthogonal", "rho", *rho)?;
            if *m0 == 0 {
                return Err(inadmissible(
                    "PairBlocksPlusOrthogonal",
                    "m0 must be positive (use TwoVar for m0 = 0)",
                ));
            }
            let p = 2 + m0;
            let mut m = DMatrix::identity(p, p);
            m[(0, 1)] = -rho;
            m[(1, 0)] = -rho;
            m
        }
        DesignSpec::ParentChildSingle { rho, c } => {
            check_rho("ParentChildSingle", "rho", *rho)?;
            let varphi2 = 1.0 - rho;
            check_parent_constant("ParentChildSingle", "C", *c, varphi2)?;
            let q = c * varphi2 / 2.0;
            let mut m = DMatrix::identity(3, 3);
            m[(0, 1)] = -rho;
            m[(1, 0)] = -rho;
            for i in 0..2 {
                m[(i, 2)] = q;
                m[(2, i)] = q;
            }
            m
        }
        DesignSpec::ParentChildMany { rho, cs } => {
            check_rho("ParentChildMany", "rho", *rho)?;
            if cs.is_empty() {
                return Err(inadmissible(
                    "ParentChildMany",
                    "at least one child required",
                ));
            }
            let varphi2 = 1.0 - rho;
            for (k, &c) in cs.iter().enumerate() {
                check_parent_constant("ParentChildMany", &format!("C_{}", k + 1), c, varphi2)?;
            }
            let p = 2 + cs.len();
            let mut m = DMatrix::identity(p, p);
            m[(0, 1)] = -rho;
            m[(1, 0)] = -rho;
            for (a, &ca) in cs.iter().enumerate() {
                let q = ca * varphi2 / 2.0;
                for i in 0..2 {
                    m[(i, 2 + a)] = q;
                    m[(2 + a, i)] = q;
                }
                for (b, &cb) in cs.iter().enumerate().skip(a + 1) {
                    let cross = ca * cb * varphi2 / 2.0;
                    m[(2 + a, 2 + b)] = cross;
                    m[(2 + b, 2 + a)] = cross;
                }
            }
            m
        }
        DesignSpec::ParentChildBlock2N { rhos, c } => {
            if rhos.is_empty() {
                return Err(inadmissible(
                    "ParentChildBlock2N",
                    "at least one block required",
                ));
            }
            if !c.is_finite() || *c <= 1.0 {
                return Err(inadmissible(
                    "ParentChildBlock2N",
                    format!("C = {c} must exceed 1"),
                ));
            }
            let s0 = 2.0 * rhos.len() as f64;
            let mut shrink = 0.0;
            for (k, &rho) in rhos.iter().enumerate() {
                check_rho("ParentChildBlock2N", &format!("rho_{}", k + 1), rho)?;
                shrink += 2.0 * (1.0 - rho) / (s0 * s0);
            }
            if c * c * shrink >= 1.0 {
                return Err(inadmissible(
                    "ParentChildBlock2N",
                    format!(
                        "C^2 sum_k 2 varphi_k^2 / s0^2 = {} must be < 1",
                        c * c * shrink
                    ),
                ));
            }
            let p = 2 * rhos.len() + 1;
            let mut m = DMatrix::identity(p, p);
            for (k, &rho) in rhos.iter().enumerate() {
                m[(2 * k, 2 * k + 1)] = -rho;
                m[(2 * k + 1, 2 * k)] = -rho;
                let q = c * (1.0 - rho) / s0;
                for j in [2 * k, 2 * k + 1] {
                    m[(j, p - 1)] = q;
                    m[(p - 1, j)] = q;
                }
            }
            m
        }
        DesignSpec::GoodComp { rho, c, tau2 } => {
            check_rho("GoodComp", "rho", *rho)?;
            let varphi2 = 1.0 - rho;
            check_parent_constant("GoodComp", "C", *c, varphi2)?;
            let cap = 1.0 - c * c * varphi2 / 2.0;
            if !(*tau2 > 0.0 && *tau2 < cap) {
                return Err(inadmissible(
                    "GoodComp",
                    format!("tau2 = {tau2} must lie in (0, 1 - C^2 varphi^2/2) = (0, {cap})"),
                ));
            }
            good_comp_block(*rho, *c, *tau2)
        }
        DesignSpec::GoodLasso2 { rho, c } => {
            check_rho("GoodLasso2", "rho", *rho)?;
            let varphi2 = 1.0 - rho;
            check_parent_constant("GoodLasso2", "C", *c, varphi2)?;
            // tau2 = 0: the (3,4) entry degenerates to C^2 varphi^2 - 1.
            good_comp_block(*rho, *c, 0.0)
        }
        DesignSpec::GoodLasso3 { rho } => {
            check_rho("GoodLasso3", "rho", *rho)?;
            good_comp_block(*rho, 1.0, 0.0)
        }
        DesignSpec::BlockGoodComp2N { blocks } => {
            if blocks.is_empty() {
                return Err(inadmissible(
                    "BlockGoodComp2N",
                    "at least one block required",
                ));
            }
            let n_blocks = blocks.len();
            let p = 4 * n_blocks;
            let mut m = DMatrix::identity(p, p);
            for (k, blk) in blocks.iter().enumerate() {
                check_rho("BlockGoodComp2N", &format!("rho_{}", k + 1), blk.rho)?;
                let varphi2 = 1.0 - blk.rho;
                check_parent_constant("BlockGoodComp2N", &format!("C_{}", k + 1), blk.c, varphi2)?;
                let cap = 1.0 - blk.c * blk.c * varphi2 / 2.0;
                if !(blk.tau2 > 0.0 && blk.tau2 < cap) {
                    return Err(inadmissible(
                        "BlockGoodComp2N",
                        format!(
                            "tau2_{} = {} must lie in (0, 1 - C_{}^2 varphi_{}^2/2) = (0, {cap})",
                            k + 1,
                            blk.tau2,
                            k + 1,
                            k + 1
                        ),
                    ));
                }
                let sub = good_comp_block(blk.rho, blk.c, blk.tau2);
                let (a, i) = (2 * k, 2 * n_blocks + 2 * k);
                let idx = [a, a + 1, i, i + 1];
                for (r, &gi) in idx.iter().enumerate() {
                    for (s, &gj) in idx.iter().enumerate() {
                        m[(gi, gj)] = sub[(r, s)];
                    }
                }
            }
            m
        }
        DesignSpec::ChildParentGamma { theta, gamma3 } => {
            check_rho("ChildParentGamma", "theta", *theta)?;
            if !(*gamma3 > 0.5 && *gamma3 < 1.0) {
                return Err(inadmissible(
                    "ChildParentGamma",
                    format!("gamma3 = {gamma3} must lie in (1/2, 1)"),
                ));
            }
            let gamma4 = 1.0 - gamma3;
            let rho = -1.0 + 4.0 * gamma3 * gamma4 * (1.0 + theta);
            if !(rho > 0.0 && rho < 1.0) {
                return Err(inadmissible(
                    "ChildParentGamma",
                    format!(
                        "derived rho = -1 + 4 gamma3 gamma4 (1 + theta) = {rho} must lie in (0,1)"
                    ),
                ));
            }
            let r3 = gamma3 - gamma4 * theta;
            let r4 = gamma4 - gamma3 * theta;
            let mut m = DMatrix::identity(4, 4);
            m[(0, 1)] = -rho;
            m[(1, 0)] = -rho;
            m[(2, 3)] = -theta;
            m[(3, 2)] = -theta;
            for i in 0..2 {
                m[(i, 2)] = r3;
                m[(2, i)] = r3;
                m[(i, 3)] = r4;
                m[(3, i)] = r4;
            }
            m
        }
        DesignSpec::ChildParentSym { theta, c } => {
            check_rho("ChildParentSym", "theta", *theta)?;
            let psi2 = 1.0 - theta;
            if !c.is_finite() || *c <= 1.0 {
                return Err(inadmissible(
                    "ChildParentSym",
                    format!("C = {c} must exceed 1"),
                ));
            }
            if c * c * psi2 / 2.0 >= 1.0 {
                return Err(inadmissible(
                    "ChildParentSym",
                    format!("C^2 psi^2 / 2 = {} must be < 1", c * c * psi2 / 2.0),
                ));
            }
            let rho = 1.0 - c * c * psi2;
            if !(rho > 0.0 && rho < 1.0) {
                return Err(inadmissible(
                    "ChildParentSym",
                    format!("derived rho = 1 - C^2 psi^2 = {rho} must lie in (0,1)"),
                ));
            }
            let q = c * psi2 / 2.0;
            let mut m = DMatrix::identity(4, 4);
            m[(0, 1)] = -rho;
            m[(1, 0)] = -rho;
            m[(2, 3)] = -theta;
            m[(3, 2)] = -theta;
            for i in 0..2 {
                for j in 2..4 {
                    m[(i, j)] = q;
                    m[(j, i)] = q;
                }
            }
            m
        }
        DesignSpec::ChildParentOrthoInactive { c, gammas } => {
            if gammas.is_empty() {
                return Err(inadmissible(
                    "ChildParentOrthoInactive",
                    "at least one inactive variable required",
                ));
            }
            if !c.is_finite() || *c <= 1.0 {
                return Err(inadmissible(
                    "ChildParentOrthoInactive",
                    format!("C = {c} must exceed 1"),
                ));
            }
            let l1: f64 = gammas.iter().map(|g| g.abs()).sum();
            if (l1 - 1.0).abs() > 1e-12 {
                return Err(inadmissible(
                    "ChildParentOrthoInactive",
                    format!("|gamma|_1 = {l1} must equal 1"),
                ));
            }
            let l2sq: f64 = gammas.iter().map(|g| g * g).sum();
            if 2.0 * c * c * l2sq >= 1.0 {
                return Err(inadmissible(
                    "ChildParentOrthoInactive",
                    format!("2 C^2 |gamma|_2^2 = {} must be < 1", 2.0 * c * c * l2sq),
                ));
            }
            let linf = gammas.iter().map(|g| g.abs()).fold(0.0, f64::max);
            if linf > c * l2sq + 1e-12 {
                return Err(inadmissible(
                    "ChildParentOrthoInactive",
                    format!(
                        "|gamma|_inf = {linf} must be <= C |gamma|_2^2 = {}",
                        c * l2sq
                    ),
                ));
            }
            let rho = 1.0 - 2.0 * c * c * l2sq;
            let p = 2 + gammas.len();
            let mut m = DMatrix::identity(p, p);
            m[(0, 1)] = -rho;
            m[(1, 0)] = -rho;
            for (j, &g) in gammas.iter().enumerate() {
                for i in 0..2 {
                    m[(i, 2 + j)] = c * g;
                    m[(2 + j, i)] = c * g;
                }
            }
            m
        }
        DesignSpec::Custom { gram } => {
            let p = gram.len();
            if p == 0 || gram.iter().any(|r| r.len() != p) {
                return Err(inadmissible("Custom", "matrix must be square and nonempty"));
            }
            DMatrix::from_fn(p, p, |i, j| gram[i][j])
        }
    };
    GramMatrix::new(m).map_err(|e| {
        inadmissible(
            spec.family_name(),
            format!("construction failed validation: {e}"),
        )
    })
}

fn two_var_block(rho: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, -rho, -rho, 1.0])
}

/// The 4x4 Gram of one parent/child block: active pair with correlation
/// `-rho`, children `C (X_1+X_2)/2 + U +- V` with `U'U = tau2` and `V` sized
/// to normalize the columns. `tau2 = 0` yields the degenerate variants.
fn good_comp_block(rho: f64, c: f64, tau2: f64) -> DMatrix<f64> {
    let varphi2 = 1.0 - rho;
    let q = c * varphi2 / 2.0;
    let cross = c * c * varphi2 + 2.0 * tau2 - 1.0;
    let mut m = DMatrix::identity(4, 4);
    m[(0, 1)] = -rho;
    m[(1, 0)] = -rho;
    m[(2, 3)] = cross;
    m[(3, 2)] = cross;
    for i in 0..2 {
        for j in 2..4 {
            m[(i, j)] = q;
            m[(j, i)] = q;
        }
    }
    m
}

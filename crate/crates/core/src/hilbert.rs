//! Dense complex operators and quantum states on truncated Hilbert spaces.
//!
//! Everything here is an immutable value: builders return new matrices and
//! nothing is mutated through a shared reference.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Numerical tolerances for the state and operator invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Entrywise `|A - A†|` for an operator declared Hermitian.
    pub operator_hermitian: f64,
    pub ket_norm: f64,
    pub density_hermitian: f64,
    pub density_trace: f64,
    /// Smallest admissible eigenvalue is `-density_positivity`.
    pub density_positivity: f64,
    /// Imaginary residue discarded by [`state_fidelity`].
    pub fidelity_imag: f64,
}

pub const DEFAULT_TOLERANCES: Tolerances = Tolerances {
    operator_hermitian: 1e-12,
    ket_norm: 1e-10,
    density_hermitian: 1e-10,
    density_trace: 1e-8,
    density_positivity: 1e-8,
    fidelity_imag: 1e-10,
};

impl Default for Tolerances {
    fn default() -> Self {
        DEFAULT_TOLERANCES
    }
}

/// Square complex matrix acting on a truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    m: DMatrix<C64>,
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Operator {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Operator {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "operator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Operator { m })
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Operator {
            m: DMatrix::from_fn(dim, dim, f),
        }
    }

    /// Row-major construction, panics if `rows` is not square.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "rows must form a square");
        Operator::from_fn(n, |i, j| rows[i][j])
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let mut op = Operator::zeros(d.len());
        for (k, &x) in d.iter().enumerate() {
            op.m[(k, k)] = C64::new(x, 0.0);
        }
        op
    }

    /// `|a⟩⟨b|`.
    pub fn outer(a: &Ket, b: &Ket) -> Self {
        Operator {
            m: &a.v * b.v.adjoint(),
        }
    }

    pub fn projector(psi: &Ket) -> Self {
        Operator::outer(psi, psi)
    }

    /// `|i⟩⟨j|` in a space of dimension `dim`.
    pub fn transition(dim: usize, i: usize, j: usize) -> Self {
        let mut op = Operator::zeros(dim);
        op.m[(i, j)] = C64::new(1.0, 0.0);
        op
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Operator {
            m: self.m.adjoint(),
        }
    }

    pub fn kron(&self, other: &Operator) -> Self {
        Operator {
            m: self.m.kronecker(&other.m),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Operator { m: &self.m * c }
    }

    pub fn scale_re(&self, x: f64) -> Self {
        self.scale(C64::new(x, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        Operator {
            m: &self.m * &other.m - &other.m * &self.m,
        }
    }

    /// Largest entrywise `|A - A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.m, &self.m.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() < tol
    }

    /// Largest entrywise `|A†A - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        max_abs_diff(&(self.m.adjoint() * &self.m), &DMatrix::identity(n, n))
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        max_abs_diff(&self.m, &other.m)
    }

    pub fn apply(&self, psi: &Ket) -> Ket {
        Ket { v: &self.m * &psi.v }
    }

    /// Sub-block on the listed basis indices, in the listed order.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        Operator::from_fn(idx.len(), |i, j| self.m[(idx[i], idx[j])])
    }

    /// `⟨a|A|b⟩`.
    pub fn element(&self, a: &Ket, b: &Ket) -> C64 {
        a.v.dotc(&(&self.m * &b.v))
    }

    /// Eigenvalues in ascending order with their normalized eigenvectors.
    pub fn eigh(&self) -> Result<(Vec<f64>, Vec<Ket>)> {
        let defect = self.hermiticity_defect();
        let scale = self.m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if defect > 1e-10 * scale {
            return Err(Error::param(format!(
                "eigh needs a Hermitian operator (defect {defect:e})"
            )));
        }
        let herm = (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = order
            .iter()
            .map(|&k| Ket {
                v: eig.eigenvectors.column(k).into_owned(),
            })
            .collect();
        Ok((values, vectors))
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator { m: &self.m + &rhs.m }
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator { m: self.m + rhs.m }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator { m: &self.m - &rhs.m }
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator { m: self.m - rhs.m }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator { m: &self.m * &rhs.m }
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator { m: self.m * rhs.m }
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator { m: -self.m }
    }
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    a.kron(b)
}

pub fn adjoint(a: &Operator) -> Operator {
    a.adjoint()
}

/// State vector. Kets built by [`Ket::basis`] or [`Ket::normalized`] have unit
/// norm; [`Ket::new`] accepts anything so intermediate vectors can be formed.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    v: DVector<C64>,
}

impl Ket {
    pub fn new(amplitudes: Vec<C64>) -> Self {
        Ket {
            v: DVector::from_vec(amplitudes),
        }
    }

    pub fn from_vector(v: DVector<C64>) -> Self {
        Ket { v }
    }

    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        Ket::new(amplitudes).normalize()
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[k] = C64::new(1.0, 0.0);
        Ket { v }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.v
    }

    pub fn amplitude(&self, k: usize) -> C64 {
        self.v[k]
    }

    pub fn amplitudes(&self) -> Vec<C64> {
        self.v.iter().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::param("cannot normalize a zero or non-finite ket"));
        }
        Ok(Ket {
            v: &self.v / C64::new(n, 0.0),
        })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> C64 {
        self.v.dotc(&other.v)
    }

    pub fn kron(&self, other: &Ket) -> Self {
        Ket {
            v: self.v.kronecker(&other.v),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Ket { v: &self.v * c }
    }

    pub fn add(&self, other: &Ket) -> Self {
        Ket {
            v: &self.v + &other.v,
        }
    }

    pub fn sub(&self, other: &Ket) -> Self {
        Ket {
            v: &self.v - &other.v,
        }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn pure(psi: &Ket) -> Result<Self> {
        let psi = psi.normalize()?;
        Ok(DensityMatrix {
            m: &psi.v * psi.v.adjoint(),
        })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix {
            m: DMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0),
        }
    }

    /// Validates against [`DEFAULT_TOLERANCES`].
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        Self::from_matrix_with(m, &DEFAULT_TOLERANCES)
    }

    pub fn from_matrix_with(m: DMatrix<C64>, tol: &Tolerances) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        let rho = DensityMatrix { m };
        rho.check(tol).map_err(Error::Parameter)?;
        Ok(rho)
    }

    /// Skips validation; used by the integrator, which checks on its own schedule.
    pub fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        DensityMatrix { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.m, &self.m.adjoint())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Describes the first violated invariant, if any.
    pub fn check(&self, tol: &Tolerances) -> std::result::Result<(), String> {
        let h = self.hermiticity_defect();
        if !(h < tol.density_hermitian) {
            return Err(format!("hermiticity defect {h:e}"));
        }
        let tr = self.trace();
        if !((tr.re - 1.0).abs() < tol.density_trace) || tr.im.abs() > tol.density_trace {
            return Err(format!("trace {} {:+}i", tr.re, tr.im));
        }
        let lmin = self.min_eigenvalue();
        if !(lmin >= -tol.density_positivity) {
            return Err(format!("smallest eigenvalue {lmin:e}"));
        }
        Ok(())
    }

    pub fn population(&self, k: usize) -> f64 {
        self.m[(k, k)].re
    }

    pub fn expectation(&self, op: &Operator) -> C64 {
        (op.matrix() * &self.m).trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }

    pub fn kron(&self, other: &DensityMatrix) -> Self {
        DensityMatrix {
            m: self.m.kronecker(&other.m),
        }
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, u: &Operator) -> Self {
        DensityMatrix {
            m: u.matrix() * &self.m * u.matrix().adjoint(),
        }
    }
}

/// `⟨ψ|ρ|ψ⟩`, real part after asserting the imaginary residue is negligible.
pub fn state_fidelity(rho: &DensityMatrix, psi: &Ket) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::Dimension(format!(
            "state_fidelity: rho is {}-dim, psi is {}-dim",
            rho.dim(),
            psi.dim()
        )));
    }
    let z = psi.v.dotc(&(&rho.m * &psi.v));
    let scale = z.norm().max(1.0);
    if z.im.abs() > DEFAULT_TOLERANCES.fidelity_imag * scale {
        return Err(Error::Parameter(format!(
            "fidelity has imaginary residue {:e}; rho is not Hermitian",
            z.im
        )));
    }
    Ok(z.re)
}

/// Traces out every subsystem not listed in `keep`. Kept factors stay in
/// their original order.
pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: &[usize]) -> Result<DensityMatrix> {
    let total: usize = dims.iter().product();
    if total != rho.dim() || dims.is_empty() || dims.contains(&0) {
        return Err(Error::Dimension(format!(
            "subsystem dims {dims:?} do not multiply to {}",
            rho.dim()
        )));
    }
    let mut keep_mask = vec![false; dims.len()];
    for &k in keep {
        if k >= dims.len() || keep_mask[k] {
            return Err(Error::Dimension(format!("bad keep index set {keep:?}")));
        }
        keep_mask[k] = true;
    }
    let kept_dim: usize = (0..dims.len()).filter(|&k| keep_mask[k]).map(|k| dims[k]).product();
    let traced_dim = total / kept_dim;

    // Full index of (kept multi-index a, traced multi-index t).
    let full_index = |mut a: usize, mut t: usize| -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for k in (0..dims.len()).rev() {
            let digit = if keep_mask[k] {
                let d = a % dims[k];
                a /= dims[k];
                d
            } else {
                let d = t % dims[k];
                t /= dims[k];
                d
            };
            idx += digit * stride;
            stride *= dims[k];
        }
        idx
    };

    let mut out = DMatrix::<C64>::zeros(kept_dim, kept_dim);
    for a in 0..kept_dim {
        for b in 0..kept_dim {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..traced_dim {
                acc += rho.m[(full_index(a, t), full_index(b, t))];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityMatrix { m: out })
}

pub(crate) fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_op(dim: usize, seed: &[f64]) -> Operator {
        Operator::from_fn(dim, |i, j| {
            let k = 2 * (i * dim + j);
            c(seed[k % seed.len()], seed[(k + 1) % seed.len()])
        })
    }

    // Reference kron built from the index definition.
    fn kron_oracle(a: &Operator, b: &Operator) -> Operator {
        let (na, nb) = (a.dim(), b.dim());
        Operator::from_fn(na * nb, |i, j| a.get(i / nb, j / nb) * b.get(i % nb, j % nb))
    }

    #[test]
    fn kron_identities() {
        let i6 = kron(&Operator::identity(2), &Operator::identity(3));
        assert_eq!(i6, Operator::identity(6));

        let x = Operator::from_rows(&[vec![c(0., 0.), c(1., 0.)], vec![c(1., 0.), c(0., 0.)]]);
        let k00 = Ket::basis(2, 0).kron(&Ket::basis(2, 0));
        let out = kron(&x, &Operator::identity(2)).apply(&k00);
        let k10 = Ket::basis(2, 1).kron(&Ket::basis(2, 0));
        assert!((out.sub(&k10)).norm() < 1e-15);
    }

    #[test]
    fn eigh_sorted_and_orthonormal() {
        let h = Operator::from_rows(&[
            vec![c(2., 0.), c(0., 1.), c(0., 0.)],
            vec![c(0., -1.), c(2., 0.), c(0., 0.)],
            vec![c(0., 0.), c(0., 0.), c(-1., 0.)],
        ]);
        let (w, v) = h.eigh().unwrap();
        assert!((w[0] + 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12 && (w[2] - 3.0).abs() < 1e-12);
        for i in 0..3 {
            let hv = h.apply(&v[i]).sub(&v[i].scale(c(w[i], 0.)));
            assert!(hv.norm() < 1e-12);
            for j in 0..3 {
                let d = if i == j { 1.0 } else { 0.0 };
                assert!((v[i].inner(&v[j]) - d).norm() < 1e-12);
            }
        }
        assert!(Operator::transition(2, 0, 1).eigh().is_err());
    }

    #[test]
    fn fidelity_examples() {
        let f = Ket::basis(3, 2);
        let g = Ket::basis(3, 0);
        let rf = DensityMatrix::pure(&f).unwrap();
        assert!((state_fidelity(&rf, &f).unwrap() - 1.0).abs() < 1e-15);
        assert!(state_fidelity(&DensityMatrix::pure(&g).unwrap(), &f).unwrap().abs() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(2);
        let plus = Ket::normalized(vec![c(1., 0.), c(1., 0.)]).unwrap();
        assert!((state_fidelity(&mixed, &plus).unwrap() - 0.5).abs() < 1e-15);
        assert!(state_fidelity(&mixed, &f).is_err());
    }

    #[test]
    fn partial_trace_examples() {
        let a = DensityMatrix::pure(&Ket::normalized(vec![c(1., 0.), c(0., 1.)]).unwrap()).unwrap();
        let b = DensityMatrix::pure(&Ket::normalized(vec![c(1., 0.), c(2., 0.), c(0., -1.)]).unwrap()).unwrap();
        let ab = a.kron(&b);
        let ra = partial_trace(&ab, &[2, 3], &[0]).unwrap();
        assert!(max_abs_diff(ra.matrix(), a.matrix()) < 1e-14);
        let rb = partial_trace(&ab, &[2, 3], &[1]).unwrap();
        assert!(max_abs_diff(rb.matrix(), b.matrix()) < 1e-14);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = Ket::new(vec![c(s, 0.), c(0., 0.), c(0., 0.), c(s, 0.)]);
        let r = partial_trace(&DensityMatrix::pure(&bell).unwrap(), &[2, 2], &[0]).unwrap();
        assert!(max_abs_diff(r.matrix(), DensityMatrix::maximally_mixed(2).matrix()) < 1e-15);

        let whole = partial_trace(&ab, &[2, 3], &[0, 1]).unwrap();
        assert_eq!(whole, ab);
        assert!(partial_trace(&ab, &[2, 2], &[0]).is_err());
    }

    #[test]
    fn density_validation() {
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.2, 0.), c(-0.2, 0.)]));
        assert!(DensityMatrix::from_matrix(bad).is_err());
        let half = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.), c(0.5, 0.)]));
        assert!(DensityMatrix::from_matrix(half).is_ok());
    }

    fn arb_vals(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, n)
    }

    fn random_density(vals: &[f64], dim: usize) -> DensityMatrix {
        let a = random_op(dim, vals);
        let m = a.matrix() * a.matrix().adjoint();
        let tr = m.trace();
        DensityMatrix::from_matrix_unchecked(m / tr)
    }

    proptest! {
        #[test]
        fn kron_matches_index_definition(v in arb_vals(36)) {
            let a = random_op(3, &v);
            let b = random_op(2, &v[7..]);
            prop_assert!(kron(&a, &b).max_abs_diff(&kron_oracle(&a, &b)) < 1e-15);
        }

        #[test]
        fn kron_mixed_product_and_adjoint(v in arb_vals(40)) {
            let (a, b, cc, d) = (random_op(3, &v), random_op(3, &v[3..]), random_op(3, &v[11..]), random_op(3, &v[17..]));
            let lhs = &kron(&a, &b) * &kron(&cc, &d);
            let rhs = kron(&(&a * &cc), &(&b * &d));
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            let adj = kron(&a, &b).adjoint();
            prop_assert!(adj.max_abs_diff(&kron(&a.adjoint(), &b.adjoint())) < 1e-15);
        }

        #[test]
        fn kron_associative(v in arb_vals(30)) {
            let (a, b, cc) = (random_op(2, &v), random_op(3, &v[5..]), random_op(2, &v[13..]));
            let l = kron(&kron(&a, &b), &cc);
            let r = kron(&a, &kron(&b, &cc));
            prop_assert!(l.max_abs_diff(&r) < 1e-12);
        }

        #[test]
        fn adjoint_laws(v in arb_vals(40)) {
            let a = random_op(4, &v);
            let b = random_op(4, &v[9..]);
            prop_assert_eq!(a.adjoint().adjoint(), a.clone());
            let ab = (&a * &b).adjoint();
            prop_assert!(ab.max_abs_diff(&(&b.adjoint() * &a.adjoint())) < 1e-14);
        }

        #[test]
        fn fidelity_in_unit_interval(v in arb_vals(40), w in arb_vals(8)) {
            let rho = random_density(&v, 4);
            let psi = Ket::normalized((0..4).map(|k| c(w[2 * k], w[2 * k + 1] + 1e-3)).collect()).unwrap();
            let f = state_fidelity(&rho, &psi).unwrap();
            prop_assert!((-1e-10..=1.0 + 1e-10).contains(&f));
        }

        #[test]
        fn partial_trace_preserves_trace(v in arb_vals(60), keep in 0usize..3) {
            let rho = random_density(&v, 12);
            let red = partial_trace(&rho, &[2, 2, 3], &[keep]).unwrap();
            // brute-force trace over every index of the full space
            let mut full = C64::new(0.0, 0.0);
            for i in 0..12 { full += rho.matrix()[(i, i)]; }
            prop_assert!((red.trace() - full).norm() < 1e-12);
            prop_assert!(red.hermiticity_defect() < 1e-12);
        }
    }
}

//! Complex dense linear algebra and unitary transform kernel.
//!
//! Everything downstream (channel synthesis, the EVD-HBF solver, the link
//! simulator) goes through the contracts in this module: Hermitian
//! eigendecompositions with ascending eigenvalues, inversion with an explicit
//! singularity guard, and the unitary `1/sqrt(N)` DFT convention.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

/// Condition-number estimate above which [`inverse`] refuses to answer.
pub const SINGULARITY_CONDITION: f64 = 1e12;

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted ascending; column `i` of `eigenvectors` pairs with
/// `eigenvalues[i]`. The eigenvector matrix `Q` satisfies `Q^H Q = I` and
/// `M Q = Q diag(eigenvalues)` within the tolerances documented on
/// [`hermitian_eig`].
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

/// Eigendecomposition of `M`, symmetrized as `(M + M^H)/2` first to absorb
/// rounding drift. Eigenvalues come back ascending.
///
/// Errors with [`Error::Dimension`] on non-square input.
pub fn hermitian_eig(m: &CMat) -> Result<HermitianEig> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "hermitian_eig needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();

    // nalgebra makes no ordering promise; sort ascending with a stable
    // index tiebreak so repeated eigenvalues select deterministically.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Matrix inverse with a singularity guard.
///
/// Refuses (with [`Error::Singular`]) when LU elimination breaks down or the
/// 1-norm condition estimate `||M||_1 ||M^-1||_1` exceeds
/// [`SINGULARITY_CONDITION`].
pub fn inverse(m: &CMat) -> Result<CMat> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "inverse needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{}x{} matrix is not invertible", m.nrows(), m.ncols())))?;
    let cond = one_norm(m) * one_norm(&inv);
    if !cond.is_finite() || cond > SINGULARITY_CONDITION {
        return Err(Error::Singular(format!(
            "condition estimate {cond:.3e} exceeds {SINGULARITY_CONDITION:.1e}"
        )));
    }
    Ok(inv)
}

fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Unitary DFT of a block whose columns are the N time samples:
/// `out[:,k] = (1/sqrt(N)) sum_n in[:,n] e^{-j 2 pi n k / N}`.
pub fn unitary_dft(time_block: &CMat) -> Result<CMat> {
    dft_impl(time_block, -1.0)
}

/// Unitary inverse DFT, `out[:,n] = (1/sqrt(N)) sum_k in[:,k] e^{+j 2 pi n k / N}`.
pub fn unitary_idft(freq_block: &CMat) -> Result<CMat> {
    dft_impl(freq_block, 1.0)
}

fn dft_impl(block: &CMat, sign: f64) -> Result<CMat> {
    let n = block.ncols();
    if n == 0 {
        return Err(Error::Dimension("DFT of an empty block".into()));
    }
    let rows = block.nrows();
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = CMat::zeros(rows, n);
    for k in 0..n {
        for t in 0..n {
            let angle = sign * 2.0 * std::f64::consts::PI * (t as f64) * (k as f64) / (n as f64);
            let tw = Complex64::from_polar(scale, angle);
            for r in 0..rows {
                out[(r, k)] += block[(r, t)] * tw;
            }
        }
    }
    Ok(out)
}

/// Complex matrix with i.i.d. standard circularly-symmetric Gaussian entries
/// (unit variance per entry, split evenly between real and imaginary parts).
pub fn randn_cmat<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}

/// Random `m x n` para-unitary matrix (`R^H R = I_n`), built by
/// orthonormalizing a complex Gaussian matrix via QR.
///
/// Errors with [`Error::Dimension`] when `m < n`.
pub fn random_para_unitary<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<CMat> {
    if m < n {
        return Err(Error::Dimension(format!(
            "para-unitary matrix needs m >= n, got {m}x{n}"
        )));
    }
    if n == 0 {
        return Err(Error::Dimension("para-unitary matrix needs n >= 1".into()));
    }
    let g = randn_cmat(m, n, rng);
    Ok(g.qr().q())
}

/// `n x n` complex identity.
pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Frobenius norm squared, as a real number.
pub fn fro_norm_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Real part of the trace.
pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Random Hermitian positive-definite matrix, built as S^H S + eps I.
    fn random_hpd<R: Rng>(n: usize, eps: f64, rng: &mut R) -> CMat {
        let s = randn_cmat(n, n, rng);
        s.adjoint() * &s + identity(n).scale(eps)
    }

    #[test]
    fn eig_identity_2x2() {
        let e = hermitian_eig(&identity(2)).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_diagonal_sorts_ascending() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]));
        let e = hermitian_eig(&m).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-12);
        // eigenvalue 1 pairs with e2, eigenvalue 3 with e1
        assert!((e.eigenvectors[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((e.eigenvectors[(0, 1)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_non_square() {
        assert!(matches!(
            hermitian_eig(&CMat::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut r = rng(11);
        let g = randn_cmat(8, 8, &mut r);
        let m = (&g + g.adjoint()).scale(0.5);
        let e = hermitian_eig(&m).unwrap();
        let lam = CMat::from_fn(8, 8, |i, j| {
            if i == j {
                Complex64::new(e.eigenvalues[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let rec = &e.eigenvectors * lam * e.eigenvectors.adjoint();
        let rel = (&rec - &m).norm() / m.norm();
        assert!(rel < 1e-9, "reconstruction error {rel:.3e}");
    }

    #[test]
    fn eig_ordering_and_reconstruction_sweep() {
        // 100 random Hermitian matrices up to 32x32.
        let mut r = rng(12);
        for trial in 0..100 {
            let n = 1 + (trial % 32);
            let g = randn_cmat(n, n, &mut r);
            let m = (&g + g.adjoint()).scale(0.5);
            let e = hermitian_eig(&m).unwrap();
            for w in e.eigenvalues.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
            let qhq = e.eigenvectors.adjoint() * &e.eigenvectors;
            assert!((qhq - identity(n)).norm() < 1e-10);
            let lam = CMat::from_fn(n, n, |i, j| {
                if i == j {
                    Complex64::new(e.eigenvalues[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            let rec = &e.eigenvectors * lam * e.eigenvectors.adjoint();
            let rel = (&rec - &m).norm() / m.norm().max(1e-30);
            assert!(rel < 1e-9, "n={n} reconstruction error {rel:.3e}");
        }
    }

    #[test]
    fn inverse_identity_and_diagonal() {
        let inv = inverse(&identity(3)).unwrap();
        assert!((inv - identity(3)).norm() < 1e-14);

        let d = CMat::from_diagonal(&CVec::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(4.0, 0.0),
        ]));
        let inv = inverse(&d).unwrap();
        assert!((inv[(0, 0)] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((inv[(1, 1)] - Complex64::new(0.25, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn inverse_multiplies_back_to_identity() {
        let mut r = rng(13);
        let m = random_hpd(6, 0.5, &mut r);
        let inv = inverse(&m).unwrap();
        let err = (&m * inv - identity(6)).norm() / m.norm();
        assert!(err < 1e-9, "multiply-back error {err:.3e}");
    }

    #[test]
    fn inverse_rejects_singular() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        assert!(matches!(inverse(&m), Err(Error::Singular(_))));
        // nearly singular: condition ~1e16
        let mut m = identity(2);
        m[(1, 1)] = Complex64::new(1e-16, 0.0);
        assert!(matches!(inverse(&m), Err(Error::Singular(_))));
    }

    #[test]
    fn dft_single_tone_is_identity() {
        let x = CMat::from_fn(3, 1, |i, _| Complex64::new(i as f64, -1.0));
        let f = unitary_dft(&x).unwrap();
        assert!((f - x).norm() < 1e-15);
    }

    #[test]
    fn dft_constant_sequence_concentrates_at_dc() {
        let v = Complex64::new(0.3, -0.7);
        let x = CMat::from_fn(1, 4, |_, _| v);
        let f = unitary_dft(&x).unwrap();
        assert!((f[(0, 0)] - v.scale(2.0)).norm() < 1e-12);
        for k in 1..4 {
            assert!(f[(0, k)].norm() < 1e-12);
        }
        // and back: a single DC bin of value v spreads to v/2 in time
        let mut dc = CMat::zeros(1, 4);
        dc[(0, 0)] = v;
        let t = unitary_idft(&dc).unwrap();
        for n in 0..4 {
            assert!((t[(0, n)] - v.scale(0.5)).norm() < 1e-12);
        }
    }

    #[test]
    fn dft_round_trip_and_parseval() {
        let mut r = rng(14);
        let x = randn_cmat(3, 8, &mut r);
        let f = unitary_dft(&x).unwrap();
        let back = unitary_idft(&f).unwrap();
        assert!((&back - &x).norm() < 1e-12, "round trip");
        assert!(
            (fro_norm_sq(&f) - fro_norm_sq(&x)).abs() < 1e-12,
            "Parseval"
        );
    }

    #[test]
    fn dft_rejects_empty() {
        assert!(matches!(
            unitary_dft(&CMat::zeros(2, 0)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn para_unitary_square_and_tall() {
        let mut r = rng(15);
        let q = random_para_unitary(2, 2, &mut r).unwrap();
        assert!((q.adjoint() * &q - identity(2)).norm() < 1e-10);

        let q = random_para_unitary(4, 2, &mut r).unwrap();
        assert!((q.adjoint() * &q - identity(2)).norm() < 1e-10);
    }

    #[test]
    fn para_unitary_deterministic_and_checked() {
        let a = random_para_unitary(5, 3, &mut rng(42)).unwrap();
        let b = random_para_unitary(5, 3, &mut rng(42)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            random_para_unitary(2, 3, &mut rng(0)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn eigenvalue_domination_property() {
        // For HPD M and para-unitary R, the ascending eigenvalues mu of
        // (R^H M R)^-1 never exceed the ascending eigenvalues lambda of
        // R^H M^-1 R.
        let mut r = rng(16);
        for trial in 0..120 {
            let m_dim = 2 + (trial % 15); // up to 16
            let n_dim = 1 + (trial % (m_dim - 1));
            let m = random_hpd(m_dim, 1e-6, &mut r);
            let rq = random_para_unitary(m_dim, n_dim, &mut r).unwrap();

            let inner = rq.adjoint() * &m * &rq;
            let mu = hermitian_eig(&inverse(&inner).unwrap()).unwrap().eigenvalues;
            let outer = rq.adjoint() * inverse(&m).unwrap() * &rq;
            let lambda = hermitian_eig(&outer).unwrap().eigenvalues;

            for k in 0..n_dim {
                assert!(
                    mu[k] <= lambda[k] + 1e-9,
                    "trial {trial}: mu[{k}]={} > lambda[{k}]={}",
                    mu[k],
                    lambda[k]
                );
            }
        }
    }
}

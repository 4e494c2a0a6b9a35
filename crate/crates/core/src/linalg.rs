//! Dense complex linear algebra used by the operator and propagator layers:
//! a cyclic Jacobi eigensolver for Hermitian matrices and a
//! scaling-and-squaring matrix exponential.

use ndarray::{Array1, Array2, Axis};
use num_traits::{One, Zero};

use crate::scalar::{cis, re, Real, C};

/// Conjugate transpose.
pub fn dagger<T: Real>(m: &Array2<C<T>>) -> Array2<C<T>> {
    m.t().mapv(|z| z.conj())
}

pub fn identity<T: Real>(n: usize) -> Array2<C<T>> {
    Array2::from_diag_elem(n, C::one())
}

/// Largest entry modulus of `a - b`.
pub fn max_abs_diff<T: Real>(a: &Array2<C<T>>, b: &Array2<C<T>>) -> T {
    assert_eq!(a.dim(), b.dim(), "max_abs_diff: shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |m, (x, y)| m.max((*x - *y).norm()))
}

pub fn max_abs<T: Real>(a: &Array2<C<T>>) -> T {
    a.iter().fold(T::zero(), |m, z| m.max(z.norm()))
}

/// Kronecker product `a ⊗ b` (first factor most significant).
pub fn kron<T: Real>(a: &Array2<C<T>>, b: &Array2<C<T>>) -> Array2<C<T>> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x.is_zero() {
            continue;
        }
        for ((k, l), &y) in b.indexed_iter() {
            out[[i * br + k, j * bc + l]] = x * y;
        }
    }
    out
}

pub fn kron_vec<T: Real>(a: &Array1<C<T>>, b: &Array1<C<T>>) -> Array1<C<T>> {
    let mut out = Array1::zeros(a.len() * b.len());
    for (i, &x) in a.iter().enumerate() {
        for (k, &y) in b.iter().enumerate() {
            out[i * b.len() + k] = x * y;
        }
    }
    out
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T: Real> {
    /// Ascending eigenvalues.
    pub values: Vec<T>,
    /// Column `k` is the normalized eigenvector for `values[k]`.
    pub vectors: Array2<C<T>>,
}

impl<T: Real> HermitianEigen<T> {
    /// Reassembles `V f(Λ) V†` for a scalar function of the eigenvalues.
    pub fn map(&self, f: impl Fn(T) -> C<T>) -> Array2<C<T>> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let fk = f(lam);
            scaled.column_mut(k).mapv_inplace(|z| z * fk);
        }
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let mut acc = C::zero();
                for k in 0..n {
                    acc = acc + scaled[[i, k]] * self.vectors[[j, k]].conj();
                }
                out[[i, j]] = acc;
            }
        }
        out
    }
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
///
/// Only the Hermitian part of `a` is used. Each rotation first removes the
/// phase of the pivot `a_pq` and then applies the real symmetric rotation.
pub fn hermitian_eigen<T: Real>(a: &Array2<C<T>>) -> HermitianEigen<T> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "hermitian_eigen: matrix must be square");
    let half = T::of(0.5);
    let mut m = Array2::from_shape_fn((n, n), |(i, j)| (a[[i, j]] + a[[j, i]].conj()) * half);
    let mut v = identity::<T>(n);

    let scale = m.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
    let eps = T::epsilon();
    if scale > T::zero() {
        for _sweep in 0..100 {
            let off: T = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .fold(T::zero(), |s, (i, j)| s + m[[i, j]].norm_sqr())
                .sqrt();
            if off <= eps * scale * T::of(0.1) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[[p, q]];
                    let r = apq.norm();
                    if r <= eps * eps * scale {
                        m[[p, q]] = C::zero();
                        m[[q, p]] = C::zero();
                        continue;
                    }
                    rotate(&mut m, &mut v, p, q, r, apq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].re.partial_cmp(&m[[j, j]].re).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&k| m[[k, k]].re).collect();
    let vectors = v.select(Axis(1), &order);
    HermitianEigen { values, vectors }
}

fn rotate<T: Real>(m: &mut Array2<C<T>>, v: &mut Array2<C<T>>, p: usize, q: usize, r: T, apq: C<T>) {
    let n = m.nrows();
    let phase = cis(-apq.arg()); // e^{-iφ}
    let app = m[[p, p]].re;
    let aqq = m[[q, q]].re;
    let theta = (aqq - app) / (T::of(2.0) * r);
    let t = {
        let s = if theta >= T::zero() { T::one() } else { -T::one() };
        s / (theta.abs() + (theta * theta + T::one()).sqrt())
    };
    let cs = T::one() / (t * t + T::one()).sqrt();
    let sn = t * cs;
    // G = D·P with D = diag(1, e^{-iφ}) on (p, q).
    let g_pp = re(cs);
    let g_pq = re(sn);
    let g_qp = phase * (-sn);
    let g_qq = phase * cs;

    for i in 0..n {
        let mp = m[[i, p]];
        let mq = m[[i, q]];
        m[[i, p]] = mp * g_pp + mq * g_qp;
        m[[i, q]] = mp * g_pq + mq * g_qq;
        let vp = v[[i, p]];
        let vq = v[[i, q]];
        v[[i, p]] = vp * g_pp + vq * g_qp;
        v[[i, q]] = vp * g_pq + vq * g_qq;
    }
    for j in 0..n {
        let mp = m[[p, j]];
        let mq = m[[q, j]];
        m[[p, j]] = g_pp.conj() * mp + g_qp.conj() * mq;
        m[[q, j]] = g_pq.conj() * mp + g_qq.conj() * mq;
    }
    m[[p, q]] = C::zero();
    m[[q, p]] = C::zero();
    m[[p, p]] = re(m[[p, p]].re);
    m[[q, q]] = re(m[[q, q]].re);
}

/// `exp(-i H t)` for Hermitian `H`, through its eigendecomposition.
pub fn exp_hermitian<T: Real>(h: &Array2<C<T>>, t: T) -> Array2<C<T>> {
    hermitian_eigen(h).map(|lam| cis(-lam * t))
}

/// Matrix exponential of an arbitrary square complex matrix.
///
/// Scaling and squaring around a degree-18 Taylor polynomial; the scaled
/// matrix has 1-norm at most 1/2, where the truncation error is below f64
/// round-off.
pub fn expm<T: Real>(a: &Array2<C<T>>) -> Array2<C<T>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm: matrix must be square");
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().fold(T::zero(), |s, z| s + z.norm()))
        .fold(T::zero(), T::max);
    let mut squarings = 0u32;
    let mut scaled_norm = norm1;
    while scaled_norm > T::of(0.5) {
        scaled_norm = scaled_norm * T::of(0.5);
        squarings += 1;
    }
    let factor = re(T::of(2.0).powi(-(squarings as i32)));
    let x = a.mapv(|z| z * factor);

    let mut out = identity::<T>(n);
    let mut term = identity::<T>(n);
    for k in 1..=18 {
        term = term.dot(&x).mapv(|z| z / re(T::of_usize(k)));
        out = out + &term;
    }
    for _ in 0..squarings {
        out = out.dot(&out);
    }
    out
}

/// `‖U†U − I‖_max`.
pub fn unitarity_defect<T: Real>(u: &Array2<C<T>>) -> T {
    let prod = dagger(u).dot(u);
    max_abs_diff(&prod, &identity(u.nrows()))
}

/// `‖H − H†‖_max`.
pub fn hermiticity_defect<T: Real>(h: &Array2<C<T>>) -> T {
    max_abs_diff(h, &dagger(h))
}

pub fn commutator<T: Real>(a: &Array2<C<T>>, b: &Array2<C<T>>) -> Array2<C<T>> {
    a.dot(b) - b.dot(a)
}

pub fn inner<T: Real>(a: &Array1<C<T>>, b: &Array1<C<T>>) -> C<T> {
    a.iter().zip(b.iter()).fold(C::zero(), |s, (x, y)| s + x.conj() * *y)
}

pub fn norm<T: Real>(a: &Array1<C<T>>) -> T {
    a.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt()
}

pub fn trace<T: Real>(m: &Array2<C<T>>) -> C<T> {
    m.diag().iter().fold(C::zero(), |s, z| s + *z)
}

/// Builds `|a⟩⟨b|`.
pub fn outer<T: Real>(a: &Array1<C<T>>, b: &Array1<C<T>>) -> Array2<C<T>> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j].conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, seed: u64) -> Array2<C<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Array2::from_shape_fn((n, n), |_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        (&raw + &dagger(&raw)).mapv(|z| z * 0.5)
    }

    #[test]
    fn jacobi_reconstructs_random_hermitian() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (16, 4)] {
            let h = random_hermitian(n, seed);
            let eig = hermitian_eigen(&h);
            let rebuilt = eig.map(re);
            assert!(max_abs_diff(&rebuilt, &h) < 1e-12, "n = {n}");
            assert!(unitarity_defect(&eig.vectors) < 1e-12);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn jacobi_handles_degenerate_spectrum() {
        // Pauli-x ⊕ Pauli-x has eigenvalues {-1, -1, 1, 1}.
        let mut h = Array2::<C<f64>>::zeros((4, 4));
        h[[0, 1]] = C::one();
        h[[1, 0]] = C::one();
        h[[2, 3]] = C::one();
        h[[3, 2]] = C::one();
        let eig = hermitian_eigen(&h);
        let expected = [-1.0, -1.0, 1.0, 1.0];
        for (v, e) in eig.values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-14);
        }
    }

    #[test]
    fn expm_agrees_with_eigen_exponential() {
        let h = random_hermitian(6, 9);
        let t = 3.7;
        let via_eigen = exp_hermitian(&h, t);
        let via_taylor = expm(&h.mapv(|z| z * C::new(0.0, -t)));
        assert!(max_abs_diff(&via_eigen, &via_taylor) < 1e-12);
    }

    #[test]
    fn expm_of_nilpotent_is_finite_series() {
        let mut n = Array2::<C<f64>>::zeros((3, 3));
        n[[0, 1]] = C::new(2.0, 0.0);
        n[[1, 2]] = C::new(3.0, 0.0);
        let e = expm(&n);
        // I + N + N²/2 with N² = 6·E_{02}.
        assert!((e[[0, 2]] - C::new(3.0, 0.0)).norm() < 1e-13);
        assert!((e[[0, 1]] - C::new(2.0, 0.0)).norm() < 1e-13);
        assert!((e[[2, 2]] - C::one()).norm() < 1e-13);
    }

    #[test]
    fn kron_orders_first_factor_most_significant() {
        let a = Array2::from_shape_fn((2, 2), |(i, j)| C::new((2 * i + j) as f64, 0.0));
        let b = identity::<f64>(3);
        let k = kron(&a, &b);
        assert_eq!(k.dim(), (6, 6));
        assert_eq!(k[[3, 0]], C::new(2.0, 0.0));
        assert_eq!(k[[4, 1]], C::new(2.0, 0.0));
        assert_eq!(k[[0, 3]], C::new(1.0, 0.0));
    }
}

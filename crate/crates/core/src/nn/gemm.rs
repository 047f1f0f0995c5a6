//! Small dense matrix kernels used by the layer implementations.
//!
//! All loops have a fixed iteration order so results are bit-reproducible
//! run to run. The hot paths are register-blocked (4 output rows at a time,
//! 16/8-wide column strips) which the compiler turns into FMA vectors; the
//! remainders fall back to scalar axpy rows with the same fixed ordering.

use num_traits::Float;

const MR: usize = 4;

#[inline(always)]
fn micro_kernel<T: Float, const NR: usize>(
    k: usize,
    n: usize,
    j0: usize,
    a: [&[T]; MR],
    b: &[T],
    c: [&mut [T]; MR],
) {
    let mut acc = [[T::zero(); NR]; MR];
    for kk in 0..k {
        let brow: &[T; NR] = b[kk * n + j0..kk * n + j0 + NR].try_into().expect("strip");
        let x = [a[0][kk], a[1][kk], a[2][kk], a[3][kk]];
        for j in 0..NR {
            let bj = brow[j];
            for r in 0..MR {
                acc[r][j] = x[r].mul_add(bj, acc[r][j]);
            }
        }
    }
    for (r, c_row) in c.into_iter().enumerate() {
        c_row[j0..j0 + NR].copy_from_slice(&acc[r]);
    }
}

/// Scalar row: `c_row[j0..] = sum_k a_row[k] * b[k][j0..]`.
#[inline(always)]
fn scalar_row<T: Float>(k: usize, n: usize, j0: usize, a_row: &[T], b: &[T], c_row: &mut [T]) {
    let tail = &mut c_row[j0..];
    for v in tail.iter_mut() {
        *v = T::zero();
    }
    for (kk, &aik) in a_row.iter().enumerate().take(k) {
        let b_row = &b[kk * n + j0..(kk + 1) * n];
        for (cv, &bv) in tail.iter_mut().zip(b_row) {
            *cv = aik.mul_add(bv, *cv);
        }
    }
}

/// `c[M,N] = a[M,K] * b[K,N]`, overwriting `c`.
pub fn gemm<T: Float>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut i = 0;
    while i + MR <= m {
        let a_rows = [
            &a[i * k..(i + 1) * k],
            &a[(i + 1) * k..(i + 2) * k],
            &a[(i + 2) * k..(i + 3) * k],
            &a[(i + 3) * k..(i + 4) * k],
        ];
        let block = &mut c[i * n..(i + MR) * n];
        let (c0, rest) = block.split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        let mut j = 0;
        while j + 16 <= n {
            micro_kernel::<T, 16>(k, n, j, a_rows, b, [&mut *c0, &mut *c1, &mut *c2, &mut *c3]);
            j += 16;
        }
        while j + 8 <= n {
            micro_kernel::<T, 8>(k, n, j, a_rows, b, [&mut *c0, &mut *c1, &mut *c2, &mut *c3]);
            j += 8;
        }
        if j < n {
            for (r, c_row) in [&mut *c0, &mut *c1, &mut *c2, &mut *c3].into_iter().enumerate() {
                scalar_row(k, n, j, a_rows[r], b, c_row);
            }
        }
        i += MR;
    }
    while i < m {
        scalar_row(k, n, 0, &a[i * k..(i + 1) * k], b, &mut c[i * n..(i + 1) * n]);
        i += 1;
    }
}

/// `c[K,N] += a[M,K]^T * b[M,N]`, accumulating into `c`.
///
/// Iterates in `m`-major order (4 samples at a time): `a` and `b` rows are
/// read contiguously and `c` stays cache-resident for the layer sizes here.
pub fn gemm_at_accum<T: Float>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    let mut i = 0;
    while i + MR <= m {
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let a2 = &a[(i + 2) * k..(i + 3) * k];
        let a3 = &a[(i + 3) * k..(i + 4) * k];
        let b0 = &b[i * n..(i + 1) * n];
        let b1 = &b[(i + 1) * n..(i + 2) * n];
        let b2 = &b[(i + 2) * n..(i + 3) * n];
        let b3 = &b[(i + 3) * n..(i + 4) * n];
        for kk in 0..k {
            let c_row = &mut c[kk * n..(kk + 1) * n];
            let (x0, x1, x2, x3) = (a0[kk], a1[kk], a2[kk], a3[kk]);
            for j in 0..n {
                let mut acc = x0.mul_add(b0[j], c_row[j]);
                acc = x1.mul_add(b1[j], acc);
                acc = x2.mul_add(b2[j], acc);
                acc = x3.mul_add(b3[j], acc);
                c_row[j] = acc;
            }
        }
        i += MR;
    }
    while i < m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (kk, &aik) in a_row.iter().enumerate() {
            let c_row = &mut c[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = aik.mul_add(bv, *cv);
            }
        }
        i += 1;
    }
}

/// Transpose `src[M,N]` into `dst[N,M]`.
pub fn transpose<T: Float>(m: usize, n: usize, src: &[T], dst: &mut [T]) {
    debug_assert_eq!(src.len(), m * n);
    debug_assert_eq!(dst.len(), m * n);
    for i in 0..m {
        for j in 0..n {
            dst[j * m + i] = src[i * n + j];
        }
    }
}

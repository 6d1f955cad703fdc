// Row-major accumulate-into kernels. Each output row depends only on the
// matching input row and the summation order over `k` is fixed, so a row's
// result does not change with the number of rows in the batch.

use super::Real;

/// `c[m,n] += a[m,k] * b[k,n]`
pub(crate) fn gemm_nn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if n == 1 {
        for (i, cv) in c.iter_mut().enumerate() {
            *cv = *cv + dot(&a[i * k..(i + 1) * k], b);
        }
        return;
    }
    let mut rows = c.chunks_exact_mut(n).enumerate();
    // Four output rows share each pass over a row of `b`.
    while rows.len() >= 4 {
        let (i, r0) = rows.next().unwrap();
        let (_, r1) = rows.next().unwrap();
        let (_, r2) = rows.next().unwrap();
        let (_, r3) = rows.next().unwrap();
        for p in 0..k {
            let coef = [a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p], a[(i + 3) * k + p]];
            axpy4(coef, &b[p * n..(p + 1) * n], [&mut *r0, &mut *r1, &mut *r2, &mut *r3]);
        }
    }
    for (i, row) in rows {
        for p in 0..k {
            axpy(a[i * k + p], &b[p * n..(p + 1) * n], row);
        }
    }
}

/// `c[m,n] += a[m,k] * b[n,k]^T`
pub(crate) fn gemm_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if k == 1 {
        for (i, row) in c.chunks_exact_mut(n).enumerate() {
            axpy(a[i], b, row);
        }
        return;
    }
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] = c[i * n + j] + dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `c[m,n] += a[k,m]^T * b[k,n]`
pub(crate) fn gemm_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if n == 1 {
        for p in 0..k {
            axpy(b[p], &a[p * m..(p + 1) * m], c);
        }
        return;
    }
    let mut rows = c.chunks_exact_mut(n).enumerate();
    while rows.len() >= 4 {
        let (i, r0) = rows.next().unwrap();
        let (_, r1) = rows.next().unwrap();
        let (_, r2) = rows.next().unwrap();
        let (_, r3) = rows.next().unwrap();
        for p in 0..k {
            let at = &a[p * m + i..p * m + i + 4];
            axpy4([at[0], at[1], at[2], at[3]], &b[p * n..(p + 1) * n], [&mut *r0, &mut *r1, &mut *r2, &mut *r3]);
        }
    }
    for (i, row) in rows {
        for p in 0..k {
            axpy(a[p * m + i], &b[p * n..(p + 1) * n], row);
        }
    }
}

#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + alpha * xv;
    }
}

#[inline]
fn axpy4<T: Real>(alpha: [T; 4], x: &[T], y: [&mut [T]; 4]) {
    let [y0, y1, y2, y3] = y;
    let n = x.len();
    let (y0, y1, y2, y3) = (&mut y0[..n], &mut y1[..n], &mut y2[..n], &mut y3[..n]);
    for j in 0..n {
        let xv = x[j];
        y0[j] = y0[j] + alpha[0] * xv;
        y1[j] = y1[j] + alpha[1] * xv;
        y2[j] = y2[j] + alpha[2] * xv;
        y3[j] = y3[j] + alpha[3] * xv;
    }
}

/// Dot product with eight independent partial sums (vectorizes).
#[inline]
pub(crate) fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (xs, ys) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] = acc[l] + xs[l] * ys[l];
        }
    }
    let mut tail = T::zero();
    for (&a, &b) in xr.iter().zip(yr) {
        tail = tail + a * b;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(r: usize, c: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = x[i * c + j];
            }
        }
        t
    }

    #[test]
    fn kernels_agree_with_naive_product() {
        for (m, k, n) in [(5, 11, 7), (9, 3, 17), (1, 6, 4), (4, 1, 1), (6, 20, 1), (7, 1, 5), (1, 1, 1)] {
            let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
            let want = naive(m, k, n, &a, &b);

            let mut c = vec![0.0; m * n];
            gemm_nn(m, k, n, &a, &b, &mut c);
            let mut c2 = vec![0.0; m * n];
            gemm_nt(m, k, n, &a, &transpose(k, n, &b), &mut c2);
            let mut c3 = vec![0.0; m * n];
            gemm_tn(m, k, n, &transpose(m, k, &a), &b, &mut c3);
            for i in 0..m * n {
                assert!((c[i] - want[i]).abs() < 1e-12);
                assert!((c2[i] - want[i]).abs() < 1e-12);
                assert!((c3[i] - want[i]).abs() < 1e-12);
            }
        }
    }
}

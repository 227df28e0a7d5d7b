//! Dense kernels shared by the forward pass, backward pass and decoder.

use num_traits::Float;

pub trait Scalar: Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {
    /// `C = alpha·A·B + beta·C` on strided views.
    ///
    /// # Safety
    /// Every index touched through the pointers and strides must be in bounds.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn f64(self) -> f64;
    fn of(x: f64) -> Self;
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
    fn f64(self) -> f64 {
        self as f64
    }
    fn of(x: f64) -> f32 {
        x as f32
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
    fn f64(self) -> f64 {
        self
    }
    fn of(x: f64) -> f64 {
        x
    }
}

/// A strided matrix view: element `(i, j)` lives at `off + i·rs + j·cs`.
#[derive(Clone, Copy)]
pub struct View {
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn rows(off: usize, cols: usize) -> View {
        View { off, rs: cols, cs: 1 }
    }
    /// The transpose of a row-major block with `cols` columns.
    pub fn t(off: usize, cols: usize) -> View {
        View { off, rs: 1, cs: cols }
    }
    fn last(&self, r: usize, c: usize) -> usize {
        self.off + (r - 1) * self.rs + (c - 1) * self.cs
    }
}

/// Bounds-checked strided gemm: `C[m×n] = alpha·A[m×k]·B[k×n] + beta·C`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(m: usize, k: usize, n: usize, alpha: T, a: &[T], va: View, b: &[T], vb: View, beta: T, c: &mut [T], vc: View) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(vc.last(m, n) < c.len(), "gemm: C view out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let x = &mut c[vc.off + i * vc.rs + j * vc.cs];
                *x = if beta == T::zero() { T::zero() } else { beta * *x };
            }
        }
        return;
    }
    assert!(va.last(m, k) < a.len(), "gemm: A view out of bounds");
    assert!(vb.last(k, n) < b.len(), "gemm: B view out of bounds");
    // SAFETY: the three views were bounds-checked above; C does not alias A or B
    // because it is borrowed mutably.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(va.off),
            va.rs as isize,
            va.cs as isize,
            b.as_ptr().add(vb.off),
            vb.rs as isize,
            vb.cs as isize,
            beta,
            c.as_mut_ptr().add(vc.off),
            vc.rs as isize,
            vc.cs as isize,
        )
    }
}

/// `y[n×out] = x[n×in]·W[in×out] + b`.
pub fn linear<T: Scalar>(x: &[T], w: &[T], bias: &[T], n: usize, d_in: usize, d_out: usize, y: &mut [T]) {
    for row in y[..n * d_out].chunks_exact_mut(d_out) {
        row.copy_from_slice(bias);
    }
    gemm(n, d_in, d_out, T::one(), x, View::rows(0, d_in), w, View::rows(0, d_out), T::one(), y, View::rows(0, d_out));
}

/// Accumulate `dW += xᵀ·dy`, `db += Σ dy`, and `dx += dy·Wᵀ` if asked.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    n: usize,
    d_in: usize,
    d_out: usize,
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    gemm(d_in, n, d_out, T::one(), x, View::t(0, d_in), dy, View::rows(0, d_out), T::one(), dw, View::rows(0, d_out));
    for row in dy[..n * d_out].chunks_exact(d_out) {
        for (g, &v) in db.iter_mut().zip(row) {
            *g = *g + v;
        }
    }
    if let Some(dx) = dx {
        gemm(n, d_out, d_in, T::one(), dy, View::rows(0, d_out), w, View::t(0, d_out), T::one(), dx, View::rows(0, d_in));
    }
}

pub const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm; stores normalized rows and inverse std for backward.
pub fn layer_norm<T: Scalar>(x: &[T], g: &[T], b: &[T], d: usize, y: &mut [T], xhat: &mut [T], rstd: &mut [T]) {
    for (((xr, yr), hr), rs) in x
        .chunks_exact(d)
        .zip(y.chunks_exact_mut(d))
        .zip(xhat.chunks_exact_mut(d))
        .zip(rstd.iter_mut())
    {
        let mean = xr.iter().map(|v| v.f64()).sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        *rs = T::of(r);
        for j in 0..d {
            let h = T::of((xr[j].f64() - mean) * r);
            hr[j] = h;
            yr[j] = h * g[j] + b[j];
        }
    }
}

/// Layer-norm forward without the backward caches.
pub fn layer_norm_eval<T: Scalar>(x: &[T], g: &[T], b: &[T], d: usize, y: &mut [T]) {
    for (xr, yr) in x.chunks_exact(d).zip(y.chunks_exact_mut(d)) {
        let mean = xr.iter().map(|v| v.f64()).sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        for j in 0..d {
            yr[j] = T::of((xr[j].f64() - mean) * r) * g[j] + b[j];
        }
    }
}

/// Accumulate gain/bias gradients and add the input gradient into `dx`.
#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward<T: Scalar>(dy: &[T], xhat: &[T], rstd: &[T], g: &[T], d: usize, dg: &mut [T], db: &mut [T], dx: &mut [T]) {
    for (((dyr, hr), &rs), dxr) in dy
        .chunks_exact(d)
        .zip(xhat.chunks_exact(d))
        .zip(rstd.iter())
        .zip(dx.chunks_exact_mut(d))
    {
        let mut sum_dh = 0.0f64;
        let mut sum_dh_h = 0.0f64;
        for j in 0..d {
            dg[j] = dg[j] + dyr[j] * hr[j];
            db[j] = db[j] + dyr[j];
            let dh = (dyr[j] * g[j]).f64();
            sum_dh += dh;
            sum_dh_h += dh * hr[j].f64();
        }
        let (m1, m2) = (sum_dh / d as f64, sum_dh_h / d as f64);
        for j in 0..d {
            let dh = (dyr[j] * g[j]).f64();
            dxr[j] = dxr[j] + T::of(rs.f64() * (dh - m1 - hr[j].f64() * m2));
        }
    }
}

/// In-place softmax over the first `valid` entries of `row`; the rest become 0.
pub fn softmax_prefix<T: Scalar>(row: &mut [T], valid: usize) {
    let max = row[..valid].iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut z = 0.0f64;
    for v in row[..valid].iter_mut() {
        *v = (*v - max).exp();
        z += v.f64();
    }
    let inv = T::of(1.0 / z);
    for v in row[..valid].iter_mut() {
        *v = *v * inv;
    }
    for v in row[valid..].iter_mut() {
        *v = T::zero();
    }
}

/// `log_softmax` of one row, written into `out`.
pub fn log_softmax<T: Scalar>(row: &[T], out: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let z: f64 = row.iter().map(|&v| (v - max).f64().exp()).sum();
    let lse = max.f64() + z.ln();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = T::of(v.f64() - lse);
    }
}

/// Sinusoidal position table, `max_positions × d`.
pub fn sinusoid_table<T: Scalar>(max_positions: usize, d: usize) -> Vec<T> {
    let mut pe = vec![T::zero(); max_positions * d];
    for pos in 0..max_positions {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10_000f64.powf(2.0 * i as f64 / d as f64);
            pe[pos * d + 2 * i] = T::of(angle.sin());
            pe[pos * d + 2 * i + 1] = T::of(angle.cos());
        }
    }
    pe
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_and_transposes() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, 1.0, &a, View::rows(0, k), &b, View::rows(0, n), 0.0, &mut c, View::rows(0, n));
        let oracle = naive(&a, &b, m, k, n);
        assert!(c.iter().zip(&oracle).all(|(x, y)| (x - y).abs() < 1e-12));
        // (Bᵀ Aᵀ) = (AB)ᵀ via transposed views
        let mut ct = vec![0.0; n * m];
        gemm(n, k, m, 1.0, &b, View::t(0, n), &a, View::t(0, k), 0.0, &mut ct, View::rows(0, m));
        for i in 0..m {
            for j in 0..n {
                assert!((ct[j * m + i] - oracle[i * n + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_masks_tail() {
        let mut r = [1.0f64, 2.0, 3.0, 100.0];
        softmax_prefix(&mut r, 3);
        assert_eq!(r[3], 0.0);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut o = [0.0f64; 3];
        log_softmax(&[0.0, 0.0, 0.0], &mut o);
        assert!((o[0] + 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_backward_matches_finite_differences() {
        let d = 5;
        let x: Vec<f64> = vec![0.3, -1.2, 2.0, 0.7, -0.1];
        let g: Vec<f64> = vec![1.0, 0.5, -0.3, 2.0, 1.1];
        let b = vec![0.1; d];
        let w: Vec<f64> = vec![0.2, -0.4, 1.0, 0.3, -0.7];
        let f = |x: &[f64]| {
            let mut y = vec![0.0; d];
            layer_norm_eval(x, &g, &b, d, &mut y);
            y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let (mut y, mut h, mut r) = (vec![0.0; d], vec![0.0; d], vec![0.0; 1]);
        layer_norm(&x, &g, &b, d, &mut y, &mut h, &mut r);
        let (mut dg, mut db, mut dx) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        layer_norm_backward(&w, &h, &r, &g, d, &mut dg, &mut db, &mut dx);
        for i in 0..d {
            let mut p = x.clone();
            p[i] += 1e-6;
            let mut m = x.clone();
            m[i] -= 1e-6;
            let num = (f(&p) - f(&m)) / 2e-6;
            assert!((num - dx[i]).abs() < 1e-6, "{i}: {num} vs {}", dx[i]);
        }
    }
}

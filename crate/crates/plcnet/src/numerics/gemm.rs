//! Matrix product kernels.
//!
//! The generic path is a plain ikj loop the compiler autovectorizes. For f32
//! there are hand-tiled AVX2 and AVX-512 kernels (4 rows x 2 vectors of
//! accumulators) picked once per process by runtime feature detection; the
//! LSTM training loop spends nearly all of its time here. Set
//! `PLCNET_GEMM=scalar|avx2|avx512` to override the choice.

use std::sync::OnceLock;

use super::Scalar;

/// C[m x n] += A * B, row-major. With `a_trans` the A slice is stored
/// k x m and read as its transpose.
pub(crate) fn gemm_scalar<S: Scalar>(
    c: &mut [S],
    m: usize,
    n: usize,
    a: &[S],
    a_trans: bool,
    b: &[S],
    k: usize,
) {
    assert_eq!(c.len(), m * n, "gemm: C size");
    assert_eq!(a.len(), m * k, "gemm: A size");
    assert_eq!(b.len(), k * n, "gemm: B size");
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = if a_trans { a[p * m + i] } else { a[i * k + p] };
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + av * bv;
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kernel {
    Scalar,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

static KERNEL: OnceLock<Kernel> = OnceLock::new();

fn pick_kernel() -> Kernel {
    #[cfg(target_arch = "x86_64")]
    {
        let avx2 = is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma");
        let avx512 = is_x86_feature_detected!("avx512f");
        match std::env::var("PLCNET_GEMM").as_deref() {
            Ok("scalar") => return Kernel::Scalar,
            Ok("avx2") if avx2 => return Kernel::Avx2,
            Ok("avx512") if avx512 => return Kernel::Avx512,
            _ => {}
        }
        if avx512 {
            return Kernel::Avx512;
        }
        if avx2 {
            return Kernel::Avx2;
        }
    }
    Kernel::Scalar
}

pub(crate) fn gemm_f32(c: &mut [f32], m: usize, n: usize, a: &[f32], a_trans: bool, b: &[f32], k: usize) {
    assert_eq!(c.len(), m * n, "gemm: C size");
    assert_eq!(a.len(), m * k, "gemm: A size");
    assert_eq!(b.len(), k * n, "gemm: B size");
    match KERNEL.get_or_init(pick_kernel) {
        Kernel::Scalar => gemm_scalar(c, m, n, a, a_trans, b, k),
        #[cfg(target_arch = "x86_64")]
        Kernel::Avx2 => unsafe { x86::gemm_avx2(c, m, n, a, a_trans, b, k) },
        #[cfg(target_arch = "x86_64")]
        Kernel::Avx512 => unsafe { x86::gemm_avx512(c, m, n, a, a_trans, b, k) },
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    #[inline(always)]
    unsafe fn at(a: *const f32, a_trans: bool, m: usize, k: usize, i: usize, p: usize) -> f32 {
        if a_trans {
            *a.add(p * m + i)
        } else {
            *a.add(i * k + p)
        }
    }

    // Masked column-tail loads/stores so ragged n never falls back to scalar
    // dots. Dead lanes load as zero and are never stored.
    #[target_feature(enable = "avx2")]
    #[inline]
    unsafe fn mask_avx2(rem: usize) -> __m256i {
        let idx = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
        _mm256_cmpgt_epi32(_mm256_set1_epi32(rem as i32), idx)
    }

    #[target_feature(enable = "avx2")]
    #[inline]
    unsafe fn maskload_avx2(p: *const f32, mk: __m256i) -> __m256 {
        _mm256_maskload_ps(p, mk)
    }

    #[target_feature(enable = "avx2")]
    #[inline]
    unsafe fn maskstore_avx2(p: *mut f32, mk: __m256i, v: __m256) {
        _mm256_maskstore_ps(p, mk, v)
    }

    #[target_feature(enable = "avx512f")]
    #[inline]
    unsafe fn mask_avx512(rem: usize) -> __mmask16 {
        ((1u32 << rem) - 1) as __mmask16
    }

    #[target_feature(enable = "avx512f")]
    #[inline]
    unsafe fn maskload_avx512(p: *const f32, mk: __mmask16) -> __m512 {
        _mm512_maskz_loadu_ps(mk, p)
    }

    #[target_feature(enable = "avx512f")]
    #[inline]
    unsafe fn maskstore_avx512(p: *mut f32, mk: __mmask16, v: __m512) {
        _mm512_mask_storeu_ps(p, mk, v)
    }

    macro_rules! gemm_kernel {
        ($name:ident, $feat:literal, $vec:ty, $lanes:expr, $load:ident, $store:ident, $set1:ident, $fma:ident, $mkmask:ident, $maskload:ident, $maskstore:ident) => {
            #[target_feature(enable = $feat)]
            pub(super) unsafe fn $name(
                c: &mut [f32],
                m: usize,
                n: usize,
                a: &[f32],
                a_trans: bool,
                b: &[f32],
                k: usize,
            ) {
                const W: usize = $lanes;
                let cp = c.as_mut_ptr();
                let ap = a.as_ptr();
                let bp = b.as_ptr();

                let mut i = 0;
                // 4-row blocks, 2-vector column tiles: 8 live accumulators.
                while i + 4 <= m {
                    let mut j = 0;
                    while j + 2 * W <= n {
                        let mut c00 = $load(cp.add(i * n + j));
                        let mut c01 = $load(cp.add(i * n + j + W));
                        let mut c10 = $load(cp.add((i + 1) * n + j));
                        let mut c11 = $load(cp.add((i + 1) * n + j + W));
                        let mut c20 = $load(cp.add((i + 2) * n + j));
                        let mut c21 = $load(cp.add((i + 2) * n + j + W));
                        let mut c30 = $load(cp.add((i + 3) * n + j));
                        let mut c31 = $load(cp.add((i + 3) * n + j + W));
                        for p in 0..k {
                            let b0 = $load(bp.add(p * n + j));
                            let b1 = $load(bp.add(p * n + j + W));
                            let a0 = $set1(at(ap, a_trans, m, k, i, p));
                            c00 = $fma(a0, b0, c00);
                            c01 = $fma(a0, b1, c01);
                            let a1 = $set1(at(ap, a_trans, m, k, i + 1, p));
                            c10 = $fma(a1, b0, c10);
                            c11 = $fma(a1, b1, c11);
                            let a2 = $set1(at(ap, a_trans, m, k, i + 2, p));
                            c20 = $fma(a2, b0, c20);
                            c21 = $fma(a2, b1, c21);
                            let a3 = $set1(at(ap, a_trans, m, k, i + 3, p));
                            c30 = $fma(a3, b0, c30);
                            c31 = $fma(a3, b1, c31);
                        }
                        $store(cp.add(i * n + j), c00);
                        $store(cp.add(i * n + j + W), c01);
                        $store(cp.add((i + 1) * n + j), c10);
                        $store(cp.add((i + 1) * n + j + W), c11);
                        $store(cp.add((i + 2) * n + j), c20);
                        $store(cp.add((i + 2) * n + j + W), c21);
                        $store(cp.add((i + 3) * n + j), c30);
                        $store(cp.add((i + 3) * n + j + W), c31);
                        j += 2 * W;
                    }
                    while j + W <= n {
                        let mut c0 = $load(cp.add(i * n + j));
                        let mut c1 = $load(cp.add((i + 1) * n + j));
                        let mut c2 = $load(cp.add((i + 2) * n + j));
                        let mut c3 = $load(cp.add((i + 3) * n + j));
                        for p in 0..k {
                            let b0 = $load(bp.add(p * n + j));
                            c0 = $fma($set1(at(ap, a_trans, m, k, i, p)), b0, c0);
                            c1 = $fma($set1(at(ap, a_trans, m, k, i + 1, p)), b0, c1);
                            c2 = $fma($set1(at(ap, a_trans, m, k, i + 2, p)), b0, c2);
                            c3 = $fma($set1(at(ap, a_trans, m, k, i + 3, p)), b0, c3);
                        }
                        $store(cp.add(i * n + j), c0);
                        $store(cp.add((i + 1) * n + j), c1);
                        $store(cp.add((i + 2) * n + j), c2);
                        $store(cp.add((i + 3) * n + j), c3);
                        j += W;
                    }
                    if j < n {
                        let mk = $mkmask(n - j);
                        let mut c0 = $maskload(cp.add(i * n + j), mk);
                        let mut c1 = $maskload(cp.add((i + 1) * n + j), mk);
                        let mut c2 = $maskload(cp.add((i + 2) * n + j), mk);
                        let mut c3 = $maskload(cp.add((i + 3) * n + j), mk);
                        for p in 0..k {
                            let b0 = $maskload(bp.add(p * n + j), mk);
                            c0 = $fma($set1(at(ap, a_trans, m, k, i, p)), b0, c0);
                            c1 = $fma($set1(at(ap, a_trans, m, k, i + 1, p)), b0, c1);
                            c2 = $fma($set1(at(ap, a_trans, m, k, i + 2, p)), b0, c2);
                            c3 = $fma($set1(at(ap, a_trans, m, k, i + 3, p)), b0, c3);
                        }
                        $maskstore(cp.add(i * n + j), mk, c0);
                        $maskstore(cp.add((i + 1) * n + j), mk, c1);
                        $maskstore(cp.add((i + 2) * n + j), mk, c2);
                        $maskstore(cp.add((i + 3) * n + j), mk, c3);
                    }
                    i += 4;
                }
                // Leftover rows, one at a time.
                while i < m {
                    let mut j = 0;
                    while j + 2 * W <= n {
                        let mut c0 = $load(cp.add(i * n + j));
                        let mut c1 = $load(cp.add(i * n + j + W));
                        for p in 0..k {
                            let a0 = $set1(at(ap, a_trans, m, k, i, p));
                            c0 = $fma(a0, $load(bp.add(p * n + j)), c0);
                            c1 = $fma(a0, $load(bp.add(p * n + j + W)), c1);
                        }
                        $store(cp.add(i * n + j), c0);
                        $store(cp.add(i * n + j + W), c1);
                        j += 2 * W;
                    }
                    while j + W <= n {
                        let mut c0 = $load(cp.add(i * n + j));
                        for p in 0..k {
                            c0 = $fma($set1(at(ap, a_trans, m, k, i, p)), $load(bp.add(p * n + j)), c0);
                        }
                        $store(cp.add(i * n + j), c0);
                        j += W;
                    }
                    if j < n {
                        let mk = $mkmask(n - j);
                        let mut c0 = $maskload(cp.add(i * n + j), mk);
                        for p in 0..k {
                            let b0 = $maskload(bp.add(p * n + j), mk);
                            c0 = $fma($set1(at(ap, a_trans, m, k, i, p)), b0, c0);
                        }
                        $maskstore(cp.add(i * n + j), mk, c0);
                    }
                    i += 1;
                }
            }
        };
    }

    gemm_kernel!(gemm_avx2, "avx2,fma", __m256, 8, _mm256_loadu_ps, _mm256_storeu_ps, _mm256_set1_ps, _mm256_fmadd_ps, mask_avx2, maskload_avx2, maskstore_avx2);
    gemm_kernel!(gemm_avx512, "avx512f", __m512, 16, _mm512_loadu_ps, _mm512_storeu_ps, _mm512_set1_ps, _mm512_fmadd_ps, mask_avx512, maskload_avx512, maskstore_avx512);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn random_case(rng: &mut SeededRng, m: usize, n: usize, k: usize) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
        let a: Vec<f32> = (0..m * k).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        let b: Vec<f32> = (0..k * n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        let c: Vec<f32> = (0..m * n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        (a, b, c)
    }

    fn reference_f64(c0: &[f32], m: usize, n: usize, a: &[f32], a_trans: bool, b: &[f32], k: usize) -> Vec<f64> {
        let mut c: Vec<f64> = c0.iter().map(|&x| x as f64).collect();
        for i in 0..m {
            for p in 0..k {
                let av = if a_trans { a[p * m + i] } else { a[i * k + p] } as f64;
                for j in 0..n {
                    c[i * n + j] += av * b[p * n + j] as f64;
                }
            }
        }
        c
    }

    fn check_all_kernels(m: usize, n: usize, k: usize, a_trans: bool, rng: &mut SeededRng) {
        let (a, b, c0) = random_case(rng, m, n, k);
        let want = reference_f64(&c0, m, n, &a, a_trans, &b, k);

        let mut runs: Vec<(&str, Vec<f32>)> = Vec::new();
        let mut c = c0.clone();
        gemm_scalar(&mut c, m, n, &a, a_trans, &b, k);
        runs.push(("scalar", c));

        #[cfg(target_arch = "x86_64")]
        {
            if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
                let mut c = c0.clone();
                unsafe { x86::gemm_avx2(&mut c, m, n, &a, a_trans, &b, k) };
                runs.push(("avx2", c));
            }
            if is_x86_feature_detected!("avx512f") {
                let mut c = c0.clone();
                unsafe { x86::gemm_avx512(&mut c, m, n, &a, a_trans, &b, k) };
                runs.push(("avx512", c));
            }
        }

        let scale = (k as f64).max(1.0);
        for (name, got) in &runs {
            for (idx, (&g, &w)) in got.iter().zip(&want).enumerate() {
                let err = (g as f64 - w).abs();
                assert!(
                    err <= 1e-5 * scale,
                    "{name} kernel, shape {m}x{n}x{k} trans={a_trans}, index {idx}: got {g}, want {w}"
                );
            }
        }
    }

    #[test]
    fn kernels_match_f64_reference_across_shapes() {
        let mut rng = SeededRng::new(7);
        // Tile-boundary shapes: multiples of the vector widths plus ragged tails.
        for &(m, n, k) in &[
            (1, 1, 1),
            (1, 7, 3),
            (2, 16, 5),
            (3, 17, 9),
            (4, 32, 8),
            (4, 33, 8),
            (5, 31, 13),
            (7, 40, 21),
            (8, 48, 16),
            (80, 320, 80),
            (13, 95, 37),
        ] {
            check_all_kernels(m, n, k, false, &mut rng);
            check_all_kernels(m, n, k, true, &mut rng);
        }
    }

    #[test]
    fn dispatch_is_deterministic() {
        let mut rng = SeededRng::new(9);
        let (a, b, c0) = random_case(&mut rng, 13, 37, 29);
        let mut c1 = c0.clone();
        let mut c2 = c0;
        gemm_f32(&mut c1, 13, 37, &a, false, &b, 29);
        gemm_f32(&mut c2, 13, 37, &a, false, &b, 29);
        assert_eq!(c1, c2, "same inputs must produce identical bits");
    }

    /// Throughput probe, not a correctness test. Run with
    /// `cargo test -p plcnet --release bench_gemm -- --ignored --nocapture`.
    #[test]
    #[ignore]
    fn bench_gemm_kernels() {
        let mut rng = SeededRng::new(1);
        let (m, n, k) = (80, 320, 80);
        let (a, b, mut c) = random_case(&mut rng, m, n, k);
        let flops = (2 * m * n * k) as f64;
        for _ in 0..3 {
            gemm_f32(&mut c, m, n, &a, false, &b, k);
        }
        let reps = 2000;
        let t0 = std::time::Instant::now();
        for _ in 0..reps {
            gemm_f32(&mut c, m, n, &a, false, &b, k);
        }
        let dt = t0.elapsed().as_secs_f64();
        println!("gemm {}x{}x{}: {:.2} GFLOP/s", m, n, k, flops * reps as f64 / dt / 1e9);
        assert!(c.iter().all(|x| x.is_finite()));
    }
}

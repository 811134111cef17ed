//! Oracles for the per-layer updates: every closed form is checked against
//! a dense spatial-domain normal-equation solve and a local perturbation test.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::imaging::Kernel;
use crate::math::sqrt;
use crate::spectral::{circ_conv, embed_centered, embed_kernel, fft2, RealPlane};

type Matrix = Vec<Vec<f64>>;

fn random_plane(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> RealPlane {
    RealPlane::from_fn(h, w, |_, _| rng.random_range(lo..hi))
}

/// Matrix of `v ↦ p ⊛ v` (circular convolution) on the flattened grid.
fn circulant(p: &RealPlane) -> Matrix {
    let (h, w) = p.dims();
    let n = h * w;
    let mut m = vec![vec![0.0; n]; n];
    for r in 0..h {
        for c in 0..w {
            for sr in 0..h {
                for sc in 0..w {
                    m[r * w + c][sr * w + sc] = p.get_wrapped(r as isize - sr as isize, c as isize - sc as isize);
                }
            }
        }
    }
    m
}

fn transpose(a: &Matrix) -> Matrix {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect()
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] != 0.0 {
                for j in 0..n {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    out
}

fn matvec(a: &Matrix, v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

fn add_scaled(a: &mut Matrix, b: &Matrix, s: f64) {
    for (ra, rb) in a.iter_mut().zip(b) {
        for (x, y) in ra.iter_mut().zip(rb) {
            *x += s * y;
        }
    }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Matrix, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn identity(n: usize) -> Matrix {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = sqrt(v.iter().map(|x| x * x).sum());
    v.into_iter().map(|x| x / norm).collect()
}

/// Checks that no ±1e-4 step along 10 random directions lowers `objective`.
fn assert_local_minimum(rng: &mut ChaCha8Rng, point: &[f64], objective: impl Fn(&[f64]) -> f64) {
    let base = objective(point);
    for _ in 0..10 {
        let d = random_unit(rng, point.len());
        for sign in [-1.0, 1.0] {
            let moved: Vec<f64> = point.iter().zip(&d).map(|(p, q)| p + sign * 1e-4 * q).collect();
            assert!(objective(&moved) >= base - 1e-10, "perturbation decreased the objective");
        }
    }
}

fn random_kernel_plane(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RealPlane {
    let raw: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let k = Kernel::new(3, raw.iter().map(|v| v / total).collect()).unwrap();
    embed_kernel(&k, h, w).unwrap()
}

#[test]
fn g_update_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y = random_plane(&mut rng, 8, 8, -1.0, 1.0);
    let z = random_plane(&mut rng, 8, 8, -1.0, 1.0);
    let delta = fft2(&RealPlane::impulse(8, 8));
    let g = g_update(&fft2(&y), &z, &delta, 1.0, 0.0).unwrap();
    assert!(max_abs_diff(g.as_slice(), y.as_slice()) < 1e-14);
    let g = g_update(&fft2(&y), &z, &delta, 1.0, 1.0).unwrap();
    let mean: Vec<f64> = y.as_slice().iter().zip(z.as_slice()).map(|(a, b)| (a + b) / 2.0).collect();
    assert!(max_abs_diff(g.as_slice(), &mean) < 1e-14);
    assert!(g_update(&fft2(&y), &z, &delta, 0.0, 0.0).is_err());
    let zero_spec = fft2(&RealPlane::zeros(8, 8));
    assert!(matches!(
        g_update(&fft2(&y), &z, &zero_spec, 1.0, 0.0),
        Err(crate::Error::SingularDenominator { .. })
    ));
}

#[test]
fn g_update_matches_dense_solve_and_is_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let y = random_plane(&mut rng, 8, 8, -1.0, 1.0);
        let z = random_plane(&mut rng, 8, 8, -1.0, 1.0);
        let k = random_kernel_plane(&mut rng, 8, 8);
        let b = rng.random_range(0.1..2.0);
        let lam = rng.random_range(0.01..1.0);
        let g = g_update(&fft2(&y), &z, &fft2(&k), b, lam).unwrap();

        // (b KᵀK + λ I) g = b Kᵀ y + λ z
        let km = circulant(&k);
        let kt = transpose(&km);
        let mut a = matmul(&kt, &km);
        for row in a.iter_mut() {
            for v in row.iter_mut() {
                *v *= b;
            }
        }
        add_scaled(&mut a, &identity(64), lam);
        let rhs: Vec<f64> = matvec(&kt, y.as_slice())
            .iter()
            .zip(z.as_slice())
            .map(|(ky, zv)| b * ky + lam * zv)
            .collect();
        let expected = solve(a, rhs);
        assert!(max_abs_diff(g.as_slice(), &expected) < 1e-10);

        let objective = |v: &[f64]| {
            let kv = matvec(&km, v);
            0.5 * b * sq_dist(y.as_slice(), &kv) + 0.5 * lam * sq_dist(v, z.as_slice())
        };
        assert_local_minimum(&mut rng, g.as_slice(), objective);
    }
}

#[test]
fn z_update_is_soft_thresholding() {
    let g = RealPlane::new(1, 3, vec![1.2, -0.3, -2.0]).unwrap();
    let z = z_update(&g, 0.5).unwrap();
    assert!((z.as_slice()[0] - 0.7).abs() < 1e-15);
    assert_eq!(z.as_slice()[1], 0.0);
    assert_eq!(z.as_slice()[2], -1.5);
    assert_eq!(z_update(&g, 0.0).unwrap(), g);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = random_plane(&mut rng, 8, 8, -2.0, 2.0);
    let z = z_update(&g, 0.6).unwrap();
    for (zv, gv) in z.as_slice().iter().zip(g.as_slice()) {
        let expected = if gv.abs() > 0.6 { gv.signum() * (gv.abs() - 0.6) } else { 0.0 };
        assert_eq!(*zv, expected);
    }
    assert!(z_update(&g, -1.0).is_err());
}

#[test]
fn k_update_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y = random_plane(&mut rng, 8, 8, 0.0, 1.0);
    let ys = fft2(&y);
    let k = k_update(&[ys.clone()], &[ys.clone()], 1e-9).unwrap();
    assert!(max_abs_diff(k.as_slice(), RealPlane::impulse(8, 8).as_slice()) < 1e-6);
    let k = k_update(&[ys.clone()], &[ys.clone()], 0.5).unwrap();
    for v in fft2(&k).as_slice() {
        assert!(v.norm() <= 1.0 + 1e-12);
    }
    let zero = fft2(&RealPlane::zeros(8, 8));
    let k = k_update(&[zero.clone(), zero], &[ys.clone(), ys], 1.0).unwrap();
    assert!(k.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn k_update_matches_dense_solve_and_is_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let zs: Vec<RealPlane> = (0..2).map(|_| random_plane(&mut rng, 8, 8, -1.0, 1.0)).collect();
        let ys: Vec<RealPlane> = (0..2).map(|_| random_plane(&mut rng, 8, 8, -1.0, 1.0)).collect();
        let eps = rng.random_range(0.05..1.0);
        let k = k_update(
            &zs.iter().map(fft2).collect::<Vec<_>>(),
            &ys.iter().map(fft2).collect::<Vec<_>>(),
            eps,
        )
        .unwrap();

        // (Σ ZᵢᵀZᵢ + εI) k = Σ Zᵢᵀ yᵢ
        let mut a = identity(64);
        for row in a.iter_mut() {
            for v in row.iter_mut() {
                *v *= eps;
            }
        }
        let mut rhs = vec![0.0; 64];
        let mats: Vec<Matrix> = zs.iter().map(circulant).collect();
        for (zm, y) in mats.iter().zip(&ys) {
            let zt = transpose(zm);
            add_scaled(&mut a, &matmul(&zt, zm), 1.0);
            for (r, v) in rhs.iter_mut().zip(matvec(&zt, y.as_slice())) {
                *r += v;
            }
        }
        let expected = solve(a, rhs);
        assert!(max_abs_diff(k.as_slice(), &expected) < 1e-10);

        let objective = |v: &[f64]| {
            let mut total = 0.5 * eps * v.iter().map(|x| x * x).sum::<f64>();
            for (zm, y) in mats.iter().zip(&ys) {
                total += 0.5 * sq_dist(y.as_slice(), &matvec(zm, v));
            }
            total
        };
        assert_local_minimum(&mut rng, k.as_slice(), objective);
    }
}

#[test]
fn k_project_cases() {
    let p = RealPlane::new(1, 3, vec![-1.0, 3.0, 1.0]).unwrap();
    assert_eq!(k_project(&p).as_slice(), &[0.0, 0.75, 0.25]);
    let q = RealPlane::new(1, 4, vec![0.125, 0.5, 0.25, 0.125]).unwrap();
    assert_eq!(k_project(&q), q);
    let neg = RealPlane::filled(4, 4, -0.3);
    assert_eq!(k_project(&neg), RealPlane::impulse(4, 4));
}

fn random_bank(rng: &mut ChaCha8Rng, channels: usize, size: usize) -> Vec<RealPlane> {
    (0..channels).map(|_| random_plane(rng, size, size, -1.0, 1.0)).collect()
}

#[test]
fn reconstruct_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_plane(&mut rng, 8, 8, 0.0, 1.0);
    let bank = random_bank(&mut rng, 3, 3);
    let features = apply_filter_bank(&x, &bank).unwrap();
    let delta = RealPlane::impulse(8, 8);
    let got = reconstruct(&x, &delta, &features, &bank, &[20.0, 5.0, 1.0]).unwrap();
    assert!(max_abs_diff(got.as_slice(), x.as_slice()) < 1e-12);
    let y = random_plane(&mut rng, 8, 8, 0.0, 1.0);
    let got = reconstruct(&y, &delta, &features, &bank, &[0.0; 3]).unwrap();
    assert!(max_abs_diff(got.as_slice(), y.as_slice()) < 1e-14);
}

#[test]
fn reconstruct_matches_dense_solve_and_is_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let y = random_plane(&mut rng, 8, 8, 0.0, 1.0);
        let k = random_kernel_plane(&mut rng, 8, 8);
        let bank = random_bank(&mut rng, 2, 3);
        let gs: Vec<RealPlane> = (0..2).map(|_| random_plane(&mut rng, 8, 8, -1.0, 1.0)).collect();
        let eta = [rng.random_range(0.1..5.0), rng.random_range(0.1..5.0)];
        let x = reconstruct(&y, &k, &gs, &bank, &eta).unwrap();

        // (KᵀK + Σ ηᵢ FᵢᵀFᵢ) x = Kᵀy + Σ ηᵢ Fᵢᵀgᵢ
        let km = circulant(&k);
        let kt = transpose(&km);
        let mut a = matmul(&kt, &km);
        let mut rhs = matvec(&kt, y.as_slice());
        let fms: Vec<Matrix> = bank.iter().map(|f| circulant(&embed_centered(f, 8, 8).unwrap())).collect();
        for ((fm, g), &e) in fms.iter().zip(&gs).zip(&eta) {
            let ft = transpose(fm);
            add_scaled(&mut a, &matmul(&ft, fm), e);
            for (r, v) in rhs.iter_mut().zip(matvec(&ft, g.as_slice())) {
                *r += e * v;
            }
        }
        let expected = solve(a, rhs);
        assert!(max_abs_diff(x.as_slice(), &expected) < 1e-10);

        let objective = |v: &[f64]| {
            let mut total = 0.5 * sq_dist(y.as_slice(), &matvec(&km, v));
            for ((fm, g), &e) in fms.iter().zip(&gs).zip(&eta) {
                total += 0.5 * e * sq_dist(&matvec(fm, v), g.as_slice());
            }
            total
        };
        assert_local_minimum(&mut rng, x.as_slice(), objective);
    }
}

pub(crate) fn random_params(rng: &mut ChaCha8Rng, layers: usize, channels: usize, support: usize) -> ModelParams {
    let mut filters = FilterWeights::zeros(layers, channels);
    for v in filters.base.iter_mut().chain(filters.mixing.iter_mut()) {
        *v = rng.random_range(-0.5..0.5);
    }
    let mut lp = LayerParams::uniform(layers, channels, 0.0, 0.0, 0.0, rng.random_range(0.1..2.0));
    for v in lp.threshold.iter_mut() {
        *v = rng.random_range(0.0..0.3);
    }
    for v in lp.lambda.iter_mut() {
        *v = rng.random_range(0.01..1.0);
    }
    for v in lp.eta.iter_mut() {
        *v = rng.random_range(0.0..20.0);
    }
    ModelParams {
        filters,
        layer_params: lp,
        support,
        restrict_support: rng.random_bool(0.3),
    }
}

#[test]
fn forward_keeps_kernel_on_simplex_and_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let params = random_params(&mut rng, 3, 2, 5);
        let y = random_plane(&mut rng, 16, 16, 0.0, 1.0);
        let out = forward(&y, &params).unwrap();
        for trace in &out.state.layers {
            let k = &trace.kernel;
            assert!(k.as_slice().iter().all(|&v| v >= 0.0));
            assert!((k.sum() - 1.0).abs() < 1e-12);
            for p in trace.g.iter().chain(&trace.z) {
                assert!(p.is_finite());
            }
        }
        assert!(out.image.is_finite());
        assert_eq!(out.kernel.size(), 5);
        assert_eq!(out.features.len(), 2);
    }
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = random_params(&mut rng, 2, 3, 5);
    let y = random_plane(&mut rng, 12, 10, 0.0, 1.0);
    let a = forward(&y, &params).unwrap();
    let b = forward(&y, &params).unwrap();
    assert_eq!(a.image, b.image);
    assert_eq!(a.kernel, b.kernel);
}

#[test]
fn restricted_support_confines_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut params = random_params(&mut rng, 2, 2, 3);
    params.restrict_support = true;
    let y = random_plane(&mut rng, 16, 16, 0.0, 1.0);
    let out = forward(&y, &params).unwrap();
    let plane = &out.state.kernel_plane;
    for r in 0..16 {
        for c in 0..16 {
            let inside = (r <= 1 || r >= 15) && (c <= 1 || c >= 15);
            if !inside {
                assert_eq!(plane.get(r, c), 0.0);
            }
        }
    }
}

#[test]
fn tv_preset_runs_with_blur() {
    let x = crate::kernelgen::synthetic_scene(32, 32, 4);
    let k = crate::kernelgen::linear_motion_kernel(0.4, 5.0, 9).unwrap();
    let y = circ_conv(&x, &embed_kernel(&k, 32, 32).unwrap()).unwrap();
    let mut preset = TvPreset::prewitt(9);
    preset.layers = 5;
    let out = preset.network().run(&y).unwrap();
    assert_eq!(out.state.layers.len(), 5);
    assert!(out.image.is_finite());
}

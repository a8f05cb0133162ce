use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tram::analysis::{
    cka, epsilon_sharpness, ks_two_sample, linear_fit, pearson, wilcoxon_signed_rank, CkaValue, SharpnessConfig,
};
use tram::autodiff::Tensor;
use tram::models::{FeatureMatrix, ParameterSet};

fn matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn features(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows).unwrap()
}

fn cka_of(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    cka(&features(a), &features(b)).unwrap().value().unwrap()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect())
        .collect()
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Orthogonal matrix from Gram–Schmidt on random columns.
fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for v in matrix(n, n, rng) {
        let mut v = v;
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(c) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|x| x / norm).collect());
    }
    transpose(&cols)
}

/// `‖YᵀHX‖²_F / (‖XᵀHX‖_F ‖YᵀHY‖_F)` with the centering matrix
/// `H = I − 11ᵀ/n` built explicitly.
fn cka_with_centering_matrix(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let h: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(i == j) - 1.0 / n as f64).collect())
        .collect();
    let frob2 = |m: &[Vec<f64>]| m.iter().flatten().map(|v| v * v).sum::<f64>();
    let cross = |a: &[Vec<f64>], b: &[Vec<f64>]| matmul(&matmul(&transpose(a), &h), b);
    frob2(&cross(y, x)) / (frob2(&cross(x, x)).sqrt() * frob2(&cross(y, y)).sqrt())
}

#[test]
fn cka_properties_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let x = matrix(32, 8, &mut rng);
        let y = matrix(32, 8, &mut rng);
        assert!((cka_of(&x, &x) - 1.0).abs() < 1e-9);
        let q = orthogonal(8, &mut rng);
        assert!((cka_of(&x, &matmul(&x, &q)) - 1.0).abs() < 1e-9);
        let c: f64 = rng.random_range(0.01..100.0);
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| c * v).collect()).collect();
        assert!((cka_of(&x, &scaled) - 1.0).abs() < 1e-9);
        let v = cka_of(&x, &y);
        assert!((0.0..=1.0 + 1e-9).contains(&v));
        assert!((v - cka_of(&y, &x)).abs() < 1e-12);
    }
}

#[test]
fn cka_agrees_with_the_centering_matrix_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let x = matrix(8, 3, &mut rng);
        let y = matrix(8, 3, &mut rng);
        assert!((cka_of(&x, &y) - cka_with_centering_matrix(&x, &y)).abs() < 1e-12);
    }
}

#[test]
fn constant_features_have_no_cka() {
    let x = vec![vec![1.0, 2.0]; 5];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let y = matrix(5, 2, &mut rng);
    assert_eq!(cka(&features(&x), &features(&y)).unwrap(), CkaValue::Undefined);
}

/// Two-sided Student-t p-value for three degrees of freedom from its
/// closed-form distribution function.
fn t3_two_sided(t: f64) -> f64 {
    let u = t.abs() / 3f64.sqrt();
    let cdf = 0.5 + (u / (1.0 + u * u) + u.atan()) / std::f64::consts::PI;
    2.0 * (1.0 - cdf)
}

#[test]
fn pearson_on_a_five_point_fixture() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let ys = [2.0, 1.0, 4.0, 3.0, 7.0];
    let c = pearson(&xs, &ys).unwrap();
    // Deviations: x = (−2, −1, 0, 1, 2), y = (−1.4, −2.4, 0.6, −0.4, 3.6);
    // Σxy = 12, Σx² = 10, Σy² = 21.2.
    let r = 12.0 / (10.0f64 * 21.2).sqrt();
    assert!((c.r - r).abs() < 1e-12);
    let t = r * (3.0 / (1.0 - r * r)).sqrt();
    assert!((c.p_value - t3_two_sided(t)).abs() < 1e-10);
}

proptest! {
    #[test]
    fn pearson_symmetry_and_affine_invariance(
        pts in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 3..30),
        a in 0.1..10.0f64,
        b in -5.0..5.0f64,
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        if let Ok(c) = pearson(&xs, &ys) {
            let swapped = pearson(&ys, &xs).unwrap();
            prop_assert!((c.r - swapped.r).abs() < 1e-12);
            let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            prop_assert!((pearson(&mapped, &ys).unwrap().r - c.r).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_fit_solves_the_normal_equations(
        pts in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 2..30),
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        // [sxx sx; sx n] [slope; intercept] = [sxy; sy] by Cramer's rule.
        let det = sxx * n - sx * sx;
        prop_assume!(det.abs() > 1e-6 * sxx.max(1.0) * n);
        let (slope, intercept) = linear_fit(&xs, &ys).unwrap();
        prop_assert!((slope - (sxy * n - sx * sy) / det).abs() < 1e-8 * slope.abs().max(1.0));
        prop_assert!((intercept - (sxx * sy - sx * sxy) / det).abs() < 1e-8 * intercept.abs().max(1.0));
    }
}

/// Two-sided p-value by enumerating every sign assignment.
fn wilcoxon_by_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let rank = |i: usize| {
        let less = abs.iter().filter(|&&v| v < abs[i]).count() as f64;
        let equal = abs.iter().filter(|&&v| v == abs[i]).count() as f64;
        less + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = (0..n).map(rank).collect();
    let observed: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let (mut low, mut high) = (0u32, 0u32);
    for mask in 0u32..(1 << n) {
        let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        low += u32::from(w <= observed + 1e-9);
        high += u32::from(w >= observed - 1e-9);
    }
    (2.0 * low.min(high) as f64 / (1u64 << n) as f64).min(1.0)
}

#[test]
fn wilcoxon_matches_sign_enumeration() {
    let a = [0.71, 0.69, 0.75, 0.80, 0.66, 0.73, 0.70, 0.78, 0.74, 0.72];
    let fixtures: [[f64; 10]; 3] = [
        [0.70, 0.70, 0.71, 0.74, 0.69, 0.70, 0.73, 0.75, 0.70, 0.73],
        [0.60, 0.58, 0.66, 0.70, 0.55, 0.61, 0.62, 0.69, 0.64, 0.60],
        // Tied absolute differences and one zero.
        [0.70, 0.68, 0.75, 0.79, 0.67, 0.72, 0.71, 0.77, 0.75, 0.71],
    ];
    for b in fixtures {
        let got = wilcoxon_signed_rank(&a, &b).unwrap();
        let expected = wilcoxon_by_enumeration(&a, &b);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }
    let separated = wilcoxon_signed_rank(&a, &fixtures[1]).unwrap();
    assert!(separated < 0.01);
}

/// Two-sided KS p-value by enumerating every split of the pooled sample.
fn ks_by_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let observed = ks_two_sample(a, b).unwrap().statistic;
    let (mut extreme, mut total) = (0u32, 0u32);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let (x, y) = split_by_mask(mask, &pooled);
        total += 1;
        extreme += u32::from(ks_two_sample(&x, &y).unwrap().statistic >= observed - 1e-12);
    }
    extreme as f64 / total as f64
}

fn split_by_mask(mask: u32, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, &v) in values.iter().enumerate() {
        if mask >> i & 1 == 1 {
            x.push(v);
        } else {
            y.push(v);
        }
    }
    (x, y)
}

#[test]
fn ks_matches_split_enumeration() {
    let a = [0.12, 0.55, 0.31, 0.97];
    for b in [[0.40, 0.05, 0.83, 0.62, 0.29], [0.61, 0.72, 0.99, 0.85, 0.66], [0.01, 0.02, 0.03, 0.04, 0.05]] {
        let got = ks_two_sample(&a, &b).unwrap().p_value;
        let expected = ks_by_enumeration(&a, &b);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }
}

fn quadratic(curvature: f64) -> impl FnMut(&ParameterSet) -> tram::Result<(f64, ParameterSet)> {
    move |p: &ParameterSet| Ok((0.5 * curvature * p.global_norm_sq(), p.map(|v| curvature * v)))
}

fn at(values: &[f64]) -> ParameterSet {
    let mut p = ParameterSet::new();
    p.insert("w", Tensor::vector(values.to_vec()));
    p
}

#[test]
fn sharper_curvature_gives_larger_sharpness() {
    let cfg = SharpnessConfig {
        epsilon: 0.05,
        lr: 0.5,
        ..SharpnessConfig::default()
    };
    let theta = at(&[0.3, -0.2, 0.5]);
    let mut last = 0.0;
    for h in [0.5, 1.0, 2.0, 4.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = epsilon_sharpness(&theta, quadratic(h), &cfg, &mut rng, |_| {}).unwrap();
        assert!(phi > last, "curvature {h}: {phi} <= {last}");
        last = phi;
    }
}

#[test]
fn loss_offset_only_moves_the_normalizer() {
    let cfg = SharpnessConfig {
        epsilon: 0.05,
        lr: 0.5,
        ..SharpnessConfig::default()
    };
    let theta = at(&[0.3, -0.2]);
    let c = 2.5;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phi = epsilon_sharpness(&theta, quadratic(1.0), &cfg, &mut rng, |_| {}).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut shifted = quadratic(1.0);
    let phi_c = epsilon_sharpness(&theta, |p| shifted(p).map(|(l, g)| (l + c, g)), &cfg, &mut rng, |_| {}).unwrap();
    // Re-evaluate: both ascents visit the same points, so the loss gap is
    // shared and only the denominator differs.
    let base = 0.5 * theta.global_norm_sq();
    let gap = phi * (1.0 + base) / 100.0;
    assert!((phi_c - 100.0 * gap / (1.0 + base + c)).abs() < 1e-12);
}

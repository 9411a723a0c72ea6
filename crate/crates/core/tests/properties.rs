use proptest::prelude::*;

use xdiff_core::entropy::{relative_entropy, EntropyDensity, EntropyEval, GluedEntropy};
use xdiff_core::grid::{cutoff_eval, mean_on_cylinder, parabolic_distance, weighted_mean, ParabolicCylinder, SpaceTimeGrid, Trajectory};
use xdiff_core::linalg::Matrix;
use xdiff_core::model::{hb_matrix, ms_effective_a, ms_matrix, CrossDiffusion, Model};
use xdiff_core::probe::{caccioppoli_ratio, mean_square_deviation, poincare_ratio, reverse_holder_ratio, singular_candidates, tilt_excess, ProbeConfig};
use xdiff_core::verify::{coercivity_margin, Subspace};

fn simplex_point(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|r| r / s).collect()
}

fn symmetric(n: usize, raw: &[f64]) -> Matrix {
    let mut d = Matrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            d[(i, j)] = raw[k];
            d[(j, i)] = raw[k];
            k += 1;
        }
    }
    d
}

fn field(seed: &[f64]) -> Trajectory {
    let grid = SpaceTimeGrid::new(1, &[1.0], 32, 0.01, 0.0, 21, 2).unwrap();
    Trajectory::from_fn(grid, |x, t, o| {
        o[0] = seed[0] + seed[1] * (3.0 * x[0]).sin() + seed[2] * t;
        o[1] = seed[3] * x[0] * x[0] - seed[4] * t * x[0];
    })
    .unwrap()
}

fn shifted(traj: &Trajectory, c: f64, scale: f64) -> Trajectory {
    let v = traj.values().iter().map(|u| scale * u + c).collect();
    Trajectory::new(traj.grid().clone(), v).unwrap()
}

fn boltzmann_pair() -> impl Strategy<Value = (f64, f64, f64)> {
    (3i32..=8, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(j, u, v)| (2f64.powi(-j), u, v))
}

proptest! {
    #[test]
    fn cutoff_is_radially_nonincreasing(r in 0.01..1.0f64, a in 0.0..3.0f64, b in 0.0..3.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(cutoff_eval(&[0.0], r, &[hi * r]) <= cutoff_eval(&[0.0], r, &[lo * r]));
        let h = 1e-7 * r;
        let slope = (cutoff_eval(&[0.0], r, &[lo * r]) - cutoff_eval(&[0.0], r, &[lo * r + h])) / h;
        prop_assert!(slope <= 2.0 / r + 1e-6);
    }

    #[test]
    fn parabolic_distance_triangle(p in prop::array::uniform3(prop::array::uniform3(-2.0..2.0f64))) {
        let d = |a: &[f64; 3], b: &[f64; 3]| parabolic_distance(&a[..2], a[2], &b[..2], b[2]);
        prop_assert!(d(&p[0], &p[2]) <= d(&p[0], &p[1]) + d(&p[1], &p[2]) + 1e-12);
    }

    #[test]
    fn means_are_linear_and_exact_on_constants(seed in prop::array::uniform5(-1.0..1.0f64), c in -5.0..5.0f64, s in 0.1..3.0f64) {
        let traj = field(&seed);
        let other = shifted(&traj, c, s);
        let cyl = ParabolicCylinder::new([0.5, 0.0], 0.1, 0.2).unwrap();
        let m = mean_on_cylinder(&traj, &cyl).unwrap();
        let mo = mean_on_cylinder(&other, &cyl).unwrap();
        let w = weighted_mean(&traj, &cyl.center, 0.2, 5).unwrap();
        let wo = weighted_mean(&other, &cyl.center, 0.2, 5).unwrap();
        for i in 0..2 {
            prop_assert!((mo[i] - (s * m[i] + c)).abs() < 1e-12 * (1.0 + mo[i].abs()));
            prop_assert!((wo[i] - (s * w[i] + c)).abs() < 1e-12 * (1.0 + wo[i].abs()));
        }
        let flat = shifted(&traj, c, 0.0);
        prop_assert_eq!(mean_on_cylinder(&flat, &cyl).unwrap(), vec![c, c]);
        prop_assert_eq!(weighted_mean(&flat, &cyl.center, 0.2, 3).unwrap(), vec![c, c]);
    }

    #[test]
    fn glued_relative_entropy_sandwich((eps, u, v) in boltzmann_pair()) {
        let g = GluedEntropy::new(EntropyDensity::boltzmann(&[1.0]).unwrap(), eps).unwrap();
        let rel = relative_entropy(&g, &[u], &[v]).unwrap();
        let q = 0.5 * (u - v) * (u - v);
        prop_assert!(rel >= 0.0);
        prop_assert!(rel >= g.lambda_prime() * q * (1.0 - 1e-9) - 1e-14);
        prop_assert!(rel <= g.big_lambda_prime() * q * (1.0 + 1e-9) + 1e-14);
    }

    #[test]
    fn glued_tail_matches_base(j in 3i32..=8, t in 0.0..1.0f64) {
        let eps = 2f64.powi(-j);
        let base = EntropyDensity::boltzmann(&[1.0]).unwrap();
        let g = GluedEntropy::new(base.clone(), eps).unwrap();
        let y = 2.0 * eps + t * (1.0 - 2.0 * eps);
        let mut hb = [0.0];
        let mut hg = [0.0];
        base.hessian_diag(&[y], &mut hb).unwrap();
        g.hessian_diag(&[y], &mut hg).unwrap();
        prop_assert!((hb[0] - hg[0]).abs() <= 1e-14 * hb[0]);
    }

    #[test]
    fn margin_ignores_antisymmetric_part(a in prop::collection::vec(-2.0..2.0f64, 9), s in prop::collection::vec(-5.0..5.0f64, 3), h in prop::array::uniform3(0.2..4.0f64)) {
        let a = Matrix::from_rows(&[&a[0..3], &a[3..6], &a[6..9]]);
        let skew = Matrix::from_rows(&[[0.0, s[0], s[1]], [-s[0], 0.0, s[2]], [-s[1], -s[2], 0.0]]);
        // diag(h)·(A + diag(h)⁻¹ S) differs from diag(h)·A by S
        let mut hinv_s = skew.clone();
        hinv_s.scale_rows(&[1.0 / h[0], 1.0 / h[1], 1.0 / h[2]]);
        let mut shifted_a = a.clone();
        shifted_a.add_scaled(&hinv_s, 1.0);
        for sub in [Subspace::full(3), Subspace::zero_sum(3)] {
            let m0 = coercivity_margin(&h, &a, &sub).unwrap();
            let m1 = coercivity_margin(&h, &shifted_a, &sub).unwrap();
            prop_assert!((m0 - m1).abs() <= 1e-12 * (1.0 + m0.abs()));
        }
    }

    #[test]
    fn zero_sum_margin_ignores_rank_one_ones(a in prop::collection::vec(-2.0..2.0f64, 9), delta in -10.0..10.0f64) {
        let a = Matrix::from_rows(&[&a[0..3], &a[3..6], &a[6..9]]);
        let mut b = a.clone();
        b.add_scaled(&Matrix::from_rows(&[[1.0; 3]; 3]), delta);
        let h = [1.0; 3];
        let sub = Subspace::zero_sum(3);
        let m0 = coercivity_margin(&h, &a, &sub).unwrap();
        let m1 = coercivity_margin(&h, &b, &sub).unwrap();
        prop_assert!((m0 - m1).abs() <= 1e-12 * (1.0 + m0.abs() + delta.abs()));
    }

    #[test]
    fn ms_columns_sum_to_zero(n in 2usize..=5, raw in prop::collection::vec(0.1..5.0f64, 10), y in prop::collection::vec(0.05..1.0f64, 5)) {
        let d = symmetric(n, &raw);
        let y = simplex_point(&y[..n]);
        let m = ms_matrix(&d, &y).unwrap();
        for j in 0..n {
            let s: f64 = (0..n).map(|i| m[(i, j)]).sum();
            prop_assert!(s.abs() <= 1e-14 * (1.0 + m.norm_1()));
        }
    }

    #[test]
    fn ms_effective_inverts_on_zero_sum(n in 2usize..=5, raw in prop::collection::vec(0.2..5.0f64, 10), y in prop::collection::vec(0.05..1.0f64, 5), r in prop::collection::vec(-1.0..1.0f64, 5)) {
        let d = symmetric(n, &raw);
        let y = simplex_point(&y[..n]);
        let mean = r[..n].iter().sum::<f64>() / n as f64;
        let rho: Vec<f64> = r[..n].iter().map(|v| v - mean).collect();
        let a = ms_effective_a(&d, &y).unwrap();
        let back = ms_matrix(&d, &y).unwrap().mul_vec(&a.mul_vec(&rho));
        for i in 0..n {
            prop_assert!((back[i] - rho[i]).abs() <= 1e-10 * (1.0 + rho[i].abs()));
        }
    }

    #[test]
    fn hb_is_ms_with_reciprocal_rates(n in 2usize..=5, raw in prop::collection::vec(0.1..5.0f64, 10), y in prop::collection::vec(0.0..1.0f64, 5)) {
        let k = symmetric(n, &raw);
        let mut d = k.clone();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d[(i, j)] = 1.0 / k[(i, j)];
                }
            }
        }
        let y = &y[..n];
        prop_assert!(hb_matrix(&k, y).unwrap().max_abs_diff(&ms_matrix(&d, y).unwrap()) <= 1e-14 * (1.0 + hb_matrix(&k, y).unwrap().norm_1()));
    }

    #[test]
    fn model_matrices_are_lipschitz(y in prop::array::uniform2(0.05..0.95f64), dy in prop::array::uniform2(-0.01..0.01f64)) {
        let z = [y[0] + dy[0], y[1] + dy[1]];
        let dist = (dy[0] * dy[0] + dy[1] * dy[1]).sqrt();
        let models = [
            (Model::skt([[1.0; 3]; 2], [[0.0; 3]; 2], &[1.0, 1.0]).unwrap(), 3.0),
            (Model::semiconductor(1.0, 1.0, &[1.0, 1.0]).unwrap(), 4.0),
            (Model::pks(1.0, 1.0, 1.0, &[1.0, 1.0]).unwrap(), 1.0),
        ];
        for (model, lip) in models {
            let mut a = Matrix::zeros(2, 2);
            let mut b = Matrix::zeros(2, 2);
            model.diffusion(&y, &mut a).unwrap();
            model.diffusion(&z, &mut b).unwrap();
            prop_assert!(a.max_abs_diff(&b) <= lip * dist + 1e-15, "{}", model.name());
        }
    }

    #[test]
    fn excess_is_shift_invariant_and_quadratic(seed in prop::array::uniform5(-1.0..1.0f64), c in -5.0..5.0f64, lambda in -3.0..3.0f64) {
        let traj = field(&seed);
        let cyl = ParabolicCylinder::new([0.5, 0.0], 0.1, 0.2).unwrap();
        let phi = tilt_excess(&traj, &cyl).unwrap();
        let phi_shift = tilt_excess(&shifted(&traj, c, 1.0), &cyl).unwrap();
        let phi_scale = tilt_excess(&shifted(&traj, 0.0, lambda), &cyl).unwrap();
        prop_assert!((phi_shift - phi).abs() <= 1e-9 * phi + 1e-13 * (1.0 + c * c));
        prop_assert!((phi_scale - lambda * lambda * phi).abs() <= 1e-12 * (1.0 + phi_scale));
    }

    #[test]
    fn mean_minimizes_square_deviation(seed in prop::array::uniform5(-1.0..1.0f64), b in prop::collection::vec(prop::array::uniform2(-2.0..2.0f64), 10)) {
        let traj = field(&seed);
        let cyl = ParabolicCylinder::new([0.5, 0.0], 0.1, 0.2).unwrap();
        let phi = tilt_excess(&traj, &cyl).unwrap();
        for b in b {
            prop_assert!(phi <= mean_square_deviation(&traj, &cyl, &b).unwrap() + 1e-14);
        }
    }

    #[test]
    fn ratios_are_shift_invariant(seed in prop::array::uniform5(-1.0..1.0f64), c in -3.0..3.0f64) {
        let traj = field(&seed);
        let other = shifted(&traj, c, 1.0);
        let model = Model::heat(2);
        let cyl = ParabolicCylinder::new([0.5, 0.0], 0.2, 0.1).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * (1.0 + a.abs());
        prop_assert!(close(caccioppoli_ratio(&traj, &model, &cyl).unwrap().ratio, caccioppoli_ratio(&other, &model, &cyl).unwrap().ratio));
        prop_assert!(close(poincare_ratio(&traj, &model, &cyl).unwrap().ratio, poincare_ratio(&other, &model, &cyl).unwrap().ratio));
        prop_assert!(close(reverse_holder_ratio(&traj, &cyl, 2.5).unwrap(), reverse_holder_ratio(&other, &cyl, 2.5).unwrap()));
    }

    #[test]
    fn raising_thresholds_never_adds_candidates(seed in prop::array::uniform5(-1.0..1.0f64), e0 in 1e-6..1.0f64, e1 in 1e-6..1.0f64, f0 in 1.0..10.0f64, f1 in 1.0..10.0f64) {
        let traj = field(&seed);
        let centers: Vec<_> = (8..=24).map(|i| [(i as f64 + 0.5) / 32.0, 0.0]).collect();
        let mut cfg = ProbeConfig::new(vec![0.2, 0.1, 0.05]).unwrap();
        cfg.eps0 = e0;
        cfg.eps1 = e1;
        let low = singular_candidates(&traj, &cfg, &centers, 0.1).unwrap();
        cfg.eps0 = e0 * f0;
        cfg.eps1 = e1 * f1;
        let high = singular_candidates(&traj, &cfg, &centers, 0.1).unwrap();
        for (l, h) in low.iter().zip(&high) {
            prop_assert!(l.flagged || !h.flagged);
        }
    }
}

#[test]
fn relative_entropy_is_nonnegative_on_models() {
    let mut runner = proptest::test_runner::TestRunner::default();
    let skt = EntropyDensity::skt(2.0, 0.5, &[1.0, 1.0]).unwrap();
    let pks = EntropyDensity::pks(1.0, 1.0, &[1.0, 1.0]).unwrap();
    runner
        .run(&(prop::array::uniform2(0.01..1.0f64), prop::array::uniform2(0.01..1.0f64)), |(u, v)| {
            prop_assert!(relative_entropy(&skt, &u, &v).unwrap() >= 0.0);
            prop_assert!(relative_entropy(&pks, &u, &v).unwrap() >= 0.0);
            Ok(())
        })
        .unwrap();
}

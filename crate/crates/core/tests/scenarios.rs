use core::f64::consts::PI;

use xdiff_core::entropy::{EntropyDensity, GluedEntropy};
use xdiff_core::linalg::Matrix;
use xdiff_core::model::{CrossDiffusion, Model};
use xdiff_core::solver::{simulate, Mesh, RunSpec, SolverConfig};
use xdiff_core::verify::{certify_glued, glue_ladder, glue_search, margin_at, sample_certify, Subspace};
use xdiff_core::Error;

fn models() -> Vec<Model> {
    vec![
        Model::skt([[1.0; 3]; 2], [[0.0; 3]; 2], &[1.0, 1.0]).unwrap(),
        Model::semiconductor(2.0, 0.5, &[1.0, 1.0]).unwrap(),
        Model::hopf_burger(Matrix::from_rows(&[[0.0, 1.0, 3.0], [1.0, 0.0, 0.5], [3.0, 0.5, 0.0]])).unwrap(),
        Model::maxwell_stefan(Matrix::from_rows(&[[0.0, 1.0, 0.2], [1.0, 0.0, 4.0], [0.2, 4.0, 0.0]])).unwrap(),
    ]
}

#[test]
fn semiconductor_margin_is_nonnegative_everywhere() {
    for (mu1, mu2) in [(1.0, 1.0), (0.1, 10.0), (5.0, 0.2)] {
        let model = Model::semiconductor(mu1, mu2, &[1.0, 1.0]).unwrap();
        let base = EntropyDensity::boltzmann(&[1.0, 1.0]).unwrap();
        let report = sample_certify(&model, &base, &Subspace::full(2), 24, 0.05).unwrap();
        assert!(report.min_margin >= 0.0, "{mu1} {mu2}: {}", report.min_margin);
        for eps in [0.25, 1.0 / 64.0] {
            let glued = GluedEntropy::new(base.clone(), eps).unwrap();
            for y in [[0.0, 0.0], [1.0, 0.0], [0.3, 1.0], [1.0, 1.0]] {
                assert!(margin_at(&model, &glued, &Subspace::full(2), &y).unwrap() >= 0.0);
            }
        }
    }
}

#[test]
fn smaller_gluing_parameters_keep_the_margin() {
    let target = 0.05;
    for model in models() {
        let base = model.entropy().unwrap();
        let sub = Subspace::for_model(&model);
        let (eps, _) = glue_search(&model, &base, target, &sub, 16).unwrap();
        for smaller in glue_ladder(model.upper()).into_iter().filter(|&e| e < eps).take(3) {
            let glued = GluedEntropy::new(base.clone(), smaller).unwrap();
            let r = certify_glued(&model, &glued, &sub, 16, target).unwrap();
            assert!(r.min_margin >= target - 0.01, "{} at ε = {smaller}: {}", model.name(), r.min_margin);
        }
    }
}

#[test]
fn anti_diffusion_fails_with_last_accepted_state() {
    let model = Model::constant(Matrix::from_diagonal(&[-1.0, -1.0]), &[1.0, 1.0]).unwrap();
    let base = model.entropy().unwrap();
    assert!(matches!(
        glue_search(&model, &base, 0.05, &Subspace::full(2), 8),
        Err(Error::NoAdmissibleEpsilon { best_margin, .. }) if best_margin < 0.0
    ));
    let mesh = Mesh::new(1, &[1.0], 16).unwrap();
    let initial = mesh.sample(2, |x, o| {
        o[0] = 0.5 + 0.1 * (PI * x[0]).cos();
        o[1] = 0.5;
    });
    let spec = RunSpec { t_start: 0.0, steps: 1000, save_every: 1 };
    let failure = simulate(&model, &mesh, &initial, SolverConfig::with_dt(1e-3), spec, None).unwrap_err();
    assert!(failure.step > 1);
    assert_eq!(failure.state.len(), 32);
    assert!(failure.state.chunks(2).all(|s| model.admissible(s, 1e-12)));
}

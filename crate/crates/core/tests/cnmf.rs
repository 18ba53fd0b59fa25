use doa_cnmf::array::{build_direction_grid, init_doa_kernels, ArrayGeometry, DoaKernelSet};
use doa_cnmf::cnmf::{is_cost, predict_scm, solve_riccati, FactorizationState, FreeParams, SpatialWeights};
use doa_cnmf::priors::{SourceFactors, SpectralModel};
use doa_cnmf::scm::ScmTensor;
use nalgebra::{Complex, DMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat = DMatrix<Complex<f64>>;

fn to_matrix(a: &[Complex64], m: usize) -> Mat {
    DMatrix::from_row_slice(m, m, a)
}

fn flatten(a: &Mat) -> Vec<Complex64> {
    a.transpose().iter().copied().collect()
}

/// `A^p` for Hermitian PSD `A` through its eigendecomposition.
fn hermitian_power(a: &Mat, p: f64) -> Mat {
    let eig = a.clone().symmetric_eigen();
    let d = Mat::from_diagonal(&eig.eigenvalues.map(|l| Complex::new(l.max(0.0).powf(p), 0.0)));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

fn random_hpd(rng: &mut ChaCha8Rng, m: usize, rank: usize, floor: f64) -> Mat {
    let b = Mat::from_fn(m, rank, |_, _| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    &b * b.adjoint() + Mat::identity(m, m) * Complex::new(floor, 0.0)
}

#[test]
fn riccati_matches_closed_form_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..60 {
        let m = 2 + trial % 3;
        let c = random_hpd(&mut rng, m, m, 0.1);
        let d = random_hpd(&mut rng, m, 1 + trial % m, 0.0);
        let ch = hermitian_power(&c, 0.5);
        let ci = hermitian_power(&c, -0.5);
        let oracle = &ci * hermitian_power(&(&ch * &d * &ch), 0.5) * &ci;
        let w = to_matrix(&solve_riccati(&flatten(&c), &flatten(&d), m).unwrap(), m);
        let residual = (&w * &c * &w - &d).norm() / d.norm();
        assert!(residual < 1e-10, "trial {trial}: residual {residual}");
        // a rank-deficient D puts sqrt(eps) noise into either square root
        let err = (&w - &oracle).norm() / oracle.norm();
        assert!(err < 1e-6, "trial {trial}: relative error {err}");
    }
}

fn random_observed(rng: &mut ChaCha8Rng, m: usize, f: usize, t: usize) -> ScmTensor {
    let mut data = Vec::with_capacity(f * t * m * m);
    for _ in 0..f * t {
        data.extend(flatten(&random_hpd(rng, m, 1, 0.0)));
    }
    ScmTensor::from_blocks(data, m, f, t).unwrap()
}

fn pair_kernels(bins: usize, directions: usize) -> DoaKernelSet {
    let grid = build_direction_grid(directions).unwrap();
    init_doa_kernels(&ArrayGeometry::pair(0.1), &grid, bins, 2 * (bins - 1), 16000.0).unwrap()
}

fn random_model(rng: &mut ChaCha8Rng, f: usize, t: usize, k: usize, s: usize) -> SpectralModel {
    let sources = (0..s)
        .map(|_| SourceFactors {
            bases: (0..f * k).map(|_| rng.random_range(0.1..1.0)).collect(),
            gains: (0..k * t).map(|_| rng.random_range(0.1..1.0)).collect(),
        })
        .collect();
    SpectralModel::new(f, t, k, sources).unwrap()
}

fn assert_monotone(history: &[f64]) {
    for w in history.windows(2) {
        assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "cost rose from {} to {}", w[0], w[1]);
    }
}

#[test]
fn step_one_cost_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (f, t, s, o) = (9, 12, 2, 6);
    let observed = random_observed(&mut rng, 2, f, t);
    let spectra: Vec<f64> = (0..s * f * t).map(|_| rng.random_range(0.1..2.0)).collect();
    let mut state = FactorizationState::with_fixed_spectra(
        observed,
        pair_kernels(f, o),
        SpatialWeights::uniform(s, o),
        spectra,
        FreeParams::SPATIAL,
        1e-3,
    )
    .unwrap();
    state.run(25).unwrap();
    assert_eq!(state.cost_history.len(), 26);
    assert_monotone(&state.cost_history);
    assert!(state.cost_history[25] < state.cost_history[0]);
}

#[test]
fn joint_updates_never_increase_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (f, t, s, o, k) = (9, 10, 2, 4, 3);
    let observed = random_observed(&mut rng, 2, f, t);
    let model = random_model(&mut rng, f, t, k, s);
    let mut state = FactorizationState::with_model(
        observed,
        pair_kernels(f, o),
        SpatialWeights::uniform(s, o),
        model,
        FreeParams::ALL,
        1e-3,
    )
    .unwrap();
    state.run(20).unwrap();
    assert_monotone(&state.cost_history);
}

#[test]
fn exact_model_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (f, t, s, o, k) = (5, 6, 2, 4, 2);
    let kernels = pair_kernels(f, o);
    let weights = SpatialWeights::from_vec((0..s * o).map(|_| rng.random_range(0.2..1.0)).collect(), s, o).unwrap();
    let model = random_model(&mut rng, f, t, k, s);
    let probe = FactorizationState::with_model(
        ScmTensor::from_blocks(vec![Complex64::new(1.0, 0.0); 4 * f * t], 2, f, t).unwrap(),
        kernels.clone(),
        weights.clone(),
        model.clone(),
        FreeParams::ALL,
        1e-3,
    )
    .unwrap();
    let observed = predict_scm(&probe);

    let mut state =
        FactorizationState::with_model(observed.clone(), kernels.clone(), weights.clone(), model.clone(), FreeParams::ALL, 1e-3)
            .unwrap();
    assert!(state.cost().abs() < 1e-9);
    assert!(is_cost(&observed, &predict_scm(&state), 1e-3).unwrap().abs() < 1e-9);
    state.iterate().unwrap();
    for (a, b) in state.weights.as_slice().iter().zip(weights.as_slice()) {
        assert!((a - b).abs() <= 1e-9 * b, "{a} vs {b}");
    }
    for (a, b) in state.kernels.as_slice().iter().zip(kernels.as_slice()) {
        assert!((a - b).norm() <= 1e-7);
    }
    let after = state.model.as_ref().unwrap();
    for s in 0..2 {
        for (a, b) in after.source(s).bases.iter().zip(&model.source(s).bases) {
            assert!((a - b).abs() <= 1e-7 * b);
        }
    }
}

#[test]
fn single_channel_updates_match_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (f, t, s, o, k) = (4, 7, 2, 3, 2);
    let x: Vec<f64> = (0..f * t).map(|_| rng.random_range(0.1..3.0)).collect();
    let observed =
        ScmTensor::from_blocks(x.iter().map(|v| Complex64::new(*v, 0.0)).collect(), 1, f, t).unwrap();
    let w: Vec<f64> = (0..f * o).map(|_| rng.random_range(0.5..1.5)).collect();
    let kernels = DoaKernelSet::from_blocks(w.iter().map(|v| Complex64::new(*v, 0.0)).collect(), 1, f, o).unwrap();
    let z0: Vec<f64> = (0..s * o).map(|_| rng.random_range(0.1..1.0)).collect();
    let model = random_model(&mut rng, f, t, k, s);
    let y: Vec<Vec<f64>> = (0..s).map(|s| model.reconstruct(s)).collect();

    let xhat = |z: &[f64], y: &[Vec<f64>]| -> Vec<f64> {
        (0..f * t)
            .map(|ft| {
                let fi = ft / t;
                (0..s)
                    .map(|si| (0..o).map(|oi| z[si * o + oi] * w[fi * o + oi]).sum::<f64>() * y[si][ft])
                    .sum()
            })
            .collect()
    };

    // spatial weights
    let xh = xhat(&z0, &y);
    let mut z_expected = z0.clone();
    for si in 0..s {
        for oi in 0..o {
            let (mut num, mut den) = (0.0, 0.0);
            for ft in 0..f * t {
                let c = y[si][ft] * w[(ft / t) * o + oi];
                num += c * x[ft] / (xh[ft] * xh[ft]);
                den += c / xh[ft];
            }
            z_expected[si * o + oi] *= (num / den).sqrt();
        }
    }
    let mut state = FactorizationState::with_model(
        observed.clone(),
        kernels.clone(),
        SpatialWeights::from_vec(z0.clone(), s, o).unwrap(),
        model.clone(),
        FreeParams::ALL,
        0.0,
    )
    .unwrap();
    state.update_spatial_weights().unwrap();
    for (a, b) in state.weights.as_slice().iter().zip(&z_expected) {
        assert!((a - b).abs() <= 1e-10 * b);
    }

    // bases, from the original parameters
    let h: Vec<f64> = (0..s * f)
        .map(|i| {
            let (si, fi) = (i / f, i % f);
            (0..o).map(|oi| z0[si * o + oi] * w[fi * o + oi]).sum()
        })
        .collect();
    let mut b_expected: Vec<Vec<f64>> = (0..s).map(|si| model.source(si).bases.clone()).collect();
    for si in 0..s {
        let src = model.source(si);
        for fi in 0..f {
            for ki in 0..k {
                let (mut num, mut den) = (0.0, 0.0);
                for ti in 0..t {
                    let ft = fi * t + ti;
                    let g = src.gains[ki * t + ti];
                    num += g * h[si * f + fi] * x[ft] / (xh[ft] * xh[ft]);
                    den += g * h[si * f + fi] / xh[ft];
                }
                b_expected[si][fi * k + ki] *= (num / den).sqrt();
            }
        }
    }
    let mut state = FactorizationState::with_model(
        observed,
        kernels,
        SpatialWeights::from_vec(z0, s, o).unwrap(),
        model,
        FreeParams::ALL,
        0.0,
    )
    .unwrap();
    state.update_bases().unwrap();
    for si in 0..s {
        for (a, b) in state.model.as_ref().unwrap().source(si).bases.iter().zip(&b_expected[si]) {
            assert!((a - b).abs() <= 1e-10 * b);
        }
    }
}

#[test]
fn cost_is_nonnegative_and_zero_only_at_the_observation() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = random_observed(&mut rng, 3, 4, 5);
    let y = random_observed(&mut rng, 3, 4, 5);
    assert!(is_cost(&x, &x, 1e-4).unwrap().abs() < 1e-9);
    assert!(is_cost(&x, &y, 1e-4).unwrap() > 0.0);
    // M = 1: sum x'/xh' - ln(x'/xh') - 1
    let a = ScmTensor::from_blocks(vec![Complex64::new(2.0, 0.0)], 1, 1, 1).unwrap();
    let b = ScmTensor::from_blocks(vec![Complex64::new(0.5, 0.0)], 1, 1, 1).unwrap();
    let expected = 4.0 - 4f64.ln() - 1.0;
    assert!((is_cost(&a, &b, 0.0).unwrap() - expected).abs() < 1e-14);
}

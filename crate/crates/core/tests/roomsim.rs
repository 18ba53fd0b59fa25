use std::f64::consts::PI;

use doa_cnmf::roomsim::{count_images, render_images, render_mixture, simulate_rir, AbsorptionModel, RoomSpec, SceneSource, SceneSpec};
use doa_cnmf::signal::AudioClip;
use doa_cnmf::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn anechoic() -> RoomSpec {
    RoomSpec {
        t60: 0.0,
        ..RoomSpec::reference()
    }
}

fn centroid(h: &[f64], around: usize, half: usize) -> f64 {
    let lo = around.saturating_sub(half);
    let hi = (around + half).min(h.len());
    let mass: f64 = h[lo..hi].iter().sum();
    (lo..hi).map(|n| n as f64 * h[n]).sum::<f64>() / mass
}

fn peak(h: &[f64]) -> usize {
    (0..h.len()).max_by(|&a, &b| h[a].abs().total_cmp(&h[b].abs())).unwrap()
}

#[test]
fn anechoic_pulse_at_three_meters() {
    let rate = 44100.0;
    let h = simulate_rir(&anechoic(), [2.0, 4.0, 1.5], [5.0, 4.0, 1.5], rate).unwrap();
    let h = h.channel(0);
    let delay = 3.0 / 343.0 * rate;
    assert!((delay - 385.7).abs() < 0.1);
    assert!((peak(h) as f64 - delay).abs() <= 1.0);
    assert!((centroid(h, peak(h), 8) - delay).abs() < 0.05);
    let mass: f64 = h.iter().sum();
    assert!((mass - 1.0 / (12.0 * PI)).abs() < 1e-2 / (12.0 * PI));
}

#[test]
fn image_counts_grow_with_order() {
    let (src, mic) = ([2.0, 3.0, 1.0], [4.0, 6.0, 1.2]);
    let count = |order| {
        let room = RoomSpec {
            max_image_order: Some(order),
            ..RoomSpec::reference()
        };
        count_images(&room, src, mic, 16000.0).unwrap()
    };
    assert_eq!(count(0), 1);
    assert_eq!(count(1), 7);
    // lattice points with |u| + |v| + |w| <= 2
    assert_eq!(count(2), 25);
}

#[test]
fn first_arrival_is_never_early() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let room = RoomSpec {
        t60: 0.2,
        ..RoomSpec::reference()
    };
    let rate = 16000.0;
    for _ in 0..5 {
        let p = |rng: &mut ChaCha8Rng| -> [f64; 3] { [rng.random_range(0.5..6.5), rng.random_range(0.5..11.5), rng.random_range(0.5..2.5)] };
        let (src, mic) = (p(&mut rng), p(&mut rng));
        let direct = ((src[0] - mic[0]).powi(2) + (src[1] - mic[1]).powi(2) + (src[2] - mic[2]).powi(2)).sqrt();
        let h = simulate_rir(&room, src, mic, rate).unwrap();
        let first = h.channel(0).iter().position(|v| v.abs() > 1e-6).unwrap();
        // the interpolator spreads 8 taps ahead of the true arrival
        assert!(first as f64 >= direct / 343.0 * rate - 8.0);
    }
}

#[test]
fn endfire_interchannel_delay() {
    let rate = 16000.0;
    let room = anechoic();
    // array axis along x, source on the axis
    let mics = [[3.0, 6.0, 1.5], [4.0, 6.0, 1.5]];
    let src = [2.0, 6.0, 1.5];
    let h: Vec<Vec<f64>> = mics.iter().map(|m| simulate_rir(&room, src, *m, rate).unwrap().into_channels().remove(0)).collect();
    let lag = centroid(&h[1], peak(&h[1]), 8) - centroid(&h[0], peak(&h[0]), 8);
    assert!((lag - rate / 343.0).abs() < 0.05, "lag {lag}");
}

fn naive_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in h.iter().enumerate() {
            y[i + j] += a * b;
        }
    }
    y
}

#[test]
fn rendering_matches_direct_convolution_and_sums_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let dry: Vec<AudioClip> = (0..3)
        .map(|_| AudioClip::mono((0..700).map(|_| rng.random_range(-1.0..1.0)).collect(), 8000.0).unwrap())
        .collect();
    let rirs: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|_| {
            (0..2)
                .map(|_| {
                    let mut h = vec![0.0; 300];
                    for _ in 0..6 {
                        h[rng.random_range(0..300)] = rng.random_range(-1.0..1.0);
                    }
                    h
                })
                .collect()
        })
        .collect();
    let out = render_images(&dry, &rirs).unwrap();
    assert_eq!(out.mixture.len(), 999);
    for (s, img) in out.images.iter().enumerate() {
        for m in 0..2 {
            let expected = naive_convolve(dry[s].channel(0), &rirs[s][m]);
            for (a, b) in img.channel(m).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
    for m in 0..2 {
        for n in 0..999 {
            let sum = out.images[0].channel(m)[n] + out.images[1].channel(m)[n] + out.images[2].channel(m)[n];
            assert_eq!(out.mixture.channel(m)[n], sum);
        }
    }
}

#[test]
fn calibration_shortens_the_decay_relative_to_sabine() {
    for t60 in [0.3, 0.65] {
        let sabine = RoomSpec {
            t60,
            absorption_model: AbsorptionModel::Sabine,
            ..RoomSpec::reference()
        };
        let calibrated = RoomSpec {
            absorption_model: AbsorptionModel::Calibrated,
            ..sabine.clone()
        };
        let (bs, bc) = (sabine.reflection(), calibrated.reflection());
        assert!(bc > 0.0 && bc < bs, "t60 {t60}: calibrated {bc}, sabine {bs}");
    }
    let beta = |t60| RoomSpec { t60, ..RoomSpec::reference() }.reflection();
    assert!(beta(0.2) < beta(0.4) && beta(0.4) < beta(0.8));
    assert_eq!(anechoic().reflection(), 0.0);
}

#[test]
fn geometry_errors() {
    let room = RoomSpec::reference();
    for (src, mic) in [([-1.0, 1.0, 1.0], [1.0, 1.0, 1.0]), ([1.0, 1.0, 1.0], [1.0, 1.0, 3.0]), ([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])] {
        assert!(matches!(simulate_rir(&room, src, mic, 16000.0), Err(Error::Geometry(_))));
    }
    let scene = SceneSpec {
        sources: vec![SceneSource {
            position: [8.0, 1.0, 1.0],
            signal: AudioClip::mono(vec![1.0], 16000.0).unwrap(),
        }],
        mics: vec![[1.0, 1.0, 1.0]],
    };
    assert!(matches!(render_mixture(&scene, &room), Err(Error::Geometry(_))));
}

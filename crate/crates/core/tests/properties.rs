use std::f64::consts::{PI, TAU};

use osc_conn::calibration::{linear_fit, sweep_coupling, Case, CaseSet};
use osc_conn::dynamics::*;
use osc_conn::encoding::*;
use osc_conn::harness::{convolve, ConvMode};
use osc_conn::stats::spearman;
use proptest::prelude::*;

fn signal() -> impl Strategy<Value = f64> {
    -1.0f64..=1.0
}

fn patch() -> impl Strategy<Value = [f64; 25]> {
    prop::array::uniform25(signal())
}

fn kernel(values: [f64; 25]) -> Kernel25 {
    Kernel25::from_values(values, 0.0, 0.0, 1.0).unwrap()
}

proptest! {
    #[test]
    fn gray_round_trip(g in 0i64..=255) {
        let s = gray_to_signal(g).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(signal_to_gray(s) as i64, g);
        // evenly spaced levels
        if g < 255 {
            let next = gray_to_signal(g + 1).unwrap();
            prop_assert!((next - s - 2.0 / 255.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encoding_is_symmetric(a in patch(), b in patch()) {
        let fa = Fragment25::new(a).unwrap();
        let fb = Fragment25::new(b).unwrap();
        prop_assert_eq!(
            encode_differences(&fa, &kernel(b)),
            encode_differences(&fb, &kernel(a))
        );
    }

    #[test]
    fn zero_codes_iff_close(a in patch(), d in prop::array::uniform25(-0.2f64..=0.2)) {
        let mut b = a;
        for (x, dx) in b.iter_mut().zip(&d) {
            *x = (*x + dx).clamp(-1.0, 1.0);
        }
        let codes = encode_differences(&Fragment25::new(a).unwrap(), &kernel(b));
        let close = a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 0.05);
        prop_assert_eq!(codes.is_zero(), close);
    }

    #[test]
    fn dot_is_commutative_and_bounded(a in patch(), b in patch()) {
        let ab = ideal_dot(&Fragment25::new(a).unwrap(), &kernel(b));
        let ba = ideal_dot(&Fragment25::new(b).unwrap(), &kernel(a));
        prop_assert_eq!(ab, ba);
        prop_assert!(ab.abs() <= 25.0);
    }

    #[test]
    fn gabor_full_turn(theta in -720.0f64..720.0, k in 0.0f64..3.0, sigma in 0.3f64..4.0) {
        let a = gabor_kernel(theta, k, sigma).unwrap();
        let b = gabor_kernel(theta + 360.0, k, sigma).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert!(a.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn frequencies_follow_codes(codes in prop::array::uniform25(0u8..=20), stages in prop::sample::select(vec![3u32, 5, 7])) {
        let calib = FreqCalib::preset(stages).unwrap();
        let cv = CodeVector::new(codes).unwrap();
        let f = codes_to_frequencies(&cv, &calib);
        for (c, fr) in codes.iter().zip(&f) {
            prop_assert_eq!(*fr, calib.f0 + calib.slope * *c as f64);
        }
    }

    #[test]
    fn fit_recovers_lines(
        xs in prop::collection::vec(-50.0f64..50.0, 3..40),
        a in -10.0f64..10.0,
        b in -10.0f64..10.0,
    ) {
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
        prop_assume!(a.abs() > 1e-3);
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        prop_assert!((fit.slope - a).abs() < 1e-9);
        prop_assert!((fit.intercept - b).abs() < 1e-9);
        prop_assert!((fit.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn r2_affine_invariant(
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..30),
        a in prop::sample::select(vec![-3.0, -0.5, 0.25, 2.0, 7.0]),
        b in -4.0f64..4.0,
    ) {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-2));
        prop_assume!(ys.iter().any(|&y| (y - ys[0]).abs() > 1e-2));
        let base = linear_fit(&xs, &ys).unwrap().r2;
        let xt: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let yt: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
        prop_assert!((linear_fit(&xt, &ys).unwrap().r2 - base).abs() < 1e-9);
        prop_assert!((linear_fit(&xs, &yt).unwrap().r2 - base).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn order_parameter_bounded(phases in prop::collection::vec(-100.0f64..100.0, 1..60)) {
        let r = order_parameter(&phases);
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn wrap_lands_in_range(theta in -1e6f64..1e6) {
        let w = wrap_phase(theta);
        prop_assert!((0.0..TAU).contains(&w));
        let turns = (theta - w) / TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-6);
    }

    #[test]
    fn ideal_convolution_is_linear(
        a in prop::collection::vec(0u8..=255, 64),
        b in prop::collection::vec(0u8..=255, 64),
        kv in patch(),
        alpha in -1.0f64..1.0,
    ) {
        // keep the combination inside the signal range
        let beta = (1.0 - alpha.abs()) * 0.999;
        let sa: Vec<f64> = a.iter().map(|&g| gray_to_signal(g as i64).unwrap()).collect();
        let sb: Vec<f64> = b.iter().map(|&g| gray_to_signal(g as i64).unwrap()).collect();
        let ia = GrayImage::new(8, 8, a).unwrap();
        let ib = GrayImage::new(8, 8, b).unwrap();
        let kern = kernel(kv);
        let calib = FreqCalib::preset(3).unwrap();
        let cfg = SimConfig::default();
        let ma = convolve(&ia, &kern, ConvMode::Ideal, &calib, 0.0, &cfg, 1).unwrap();
        let mb = convolve(&ib, &kern, ConvMode::Ideal, &calib, 0.0, &cfg, 1).unwrap();
        // the combined map computed straight from signal-space fragments
        for r in 0..4 {
            for c in 0..4 {
                let mut dot = 0.0;
                for i in 0..5 {
                    for j in 0..5 {
                        let idx = (r + i) * 8 + c + j;
                        dot += (alpha * sa[idx] + beta * sb[idx]) * kv[i * 5 + j];
                    }
                }
                let want = alpha * ma.get(r, c) + beta * mb.get(r, c);
                prop_assert!((dot - want).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn common_frequency_offset_leaves_coherence(
        seed in any::<u64>(),
        offset in 0.5f64..20.0,
        k in 0.2f64..5.0,
    ) {
        let phases = init_phases(seed, InitMode::UniformRandom, 5, N_ACTIVE).unwrap();
        let omegas: Vec<f64> = (0..N_ACTIVE).map(|i| 10.0 + 0.2 * i as f64).collect();
        let shifted: Vec<f64> = omegas.iter().map(|w| w + offset).collect();
        let cfg = SimConfig { t_end: 8.2, ..SimConfig::default() };
        let a = integrate(&ArrayState::new(phases.clone(), omegas, k).unwrap(), &cfg, 50).unwrap();
        let b = integrate(&ArrayState::new(phases, shifted, k).unwrap(), &cfg, 50).unwrap();
        for (x, y) in a.r.iter().zip(&b.r) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn common_phase_shift_leaves_envelope(seed in any::<u64>(), shift in 0.0f64..TAU, k in 0.2f64..5.0) {
        let phases = init_phases(seed, InitMode::UniformRandom, 7, N_ACTIVE).unwrap();
        let moved: Vec<f64> = phases.iter().map(|p| wrap_phase(p + shift)).collect();
        let omegas: Vec<f64> = (0..N_ACTIVE).map(|i| 11.0 + 0.1 * i as f64).collect();
        let cfg = SimConfig::default();
        let a = integrate(&ArrayState::new(phases, omegas.clone(), k).unwrap(), &cfg, 25).unwrap();
        let b = integrate(&ArrayState::new(moved, omegas, k).unwrap(), &cfg, 25).unwrap();
        for (x, y) in a.r.iter().zip(&b.r) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn traces_stay_in_bounds(
        fv in patch(),
        kv in patch(),
        k in 0.0f64..20.0,
        seed in any::<u64>(),
        stages in prop::sample::select(vec![3u32, 5, 7]),
        quantized in any::<bool>(),
    ) {
        let cfg = SimConfig {
            seed,
            init_mode: if quantized { InitMode::IcQuantized } else { InitMode::UniformRandom },
            ..SimConfig::default()
        };
        let calib = FreqCalib::preset(stages).unwrap();
        let (res, trace) = run_inference_traced(
            &Fragment25::new(fv).unwrap(), &kernel(kv), &calib, k, &cfg, 20,
        ).unwrap();
        prop_assert!(res.dom >= 0.0 && res.dom <= cfg.amplitude);
        prop_assert!((0.0..=1.0).contains(&res.r_final));
        for i in 0..trace.len() {
            prop_assert!((0.0..=1.0).contains(&trace.r[i]));
            prop_assert!(trace.v_avg[i].abs() <= cfg.amplitude + 1e-12);
            prop_assert!(trace.v_pd[i] >= 0.0);
            if trace.times[i] < cfg.t_del {
                prop_assert_eq!(trace.v_pd[i], 0.0);
            }
        }
    }
}

#[test]
fn blend_toward_kernel_narrows_codes() {
    let bank = default_filter_bank();
    let mut rng_state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for kern in &bank {
        let noise: Vec<f64> = (0..25).map(|_| next()).collect();
        let mut dots = Vec::new();
        let mut means = Vec::new();
        for step in 0..=10 {
            let alpha = step as f64 / 10.0;
            let vals: Vec<f64> = kern
                .values()
                .iter()
                .zip(&noise)
                .map(|(k, n)| alpha * k + (1.0 - alpha) * n)
                .collect();
            let f = Fragment25::from_slice(&vals).unwrap();
            dots.push(ideal_dot(&f, kern));
            means.push(encode_differences(&f, kern).mean());
        }
        assert!(spearman(&dots, &means) <= -0.9, "kernel theta={} k={}", kern.theta_deg, kern.k);
    }
}

#[test]
fn two_oscillator_locking_law() {
    // locked iff |Δω| ≤ K; beat frequency measured over the last half of a 200/K run
    for k in [0.5, 2.0] {
        for ratio in [0.5, 0.8, 0.95, 1.05, 1.2, 2.0] {
            let dw = ratio * k;
            let omegas = vec![5.0, 5.0 + dw];
            let state = ArrayState::new(vec![0.3, 2.0], omegas, k).unwrap();
            let t_end = 200.0 / k;
            let dt = t_end / 40_000.0;
            let cfg = SimConfig { dt: dt.min(0.01), t_end, t_del: t_end, t_int: 0.0, ..SimConfig::default() };
            let mut unwrapped = [0.3, 2.0];
            let mut prev = [0.3, 2.0];
            let mut mark = None;
            simulate(&state, &cfg, t_end, |_, t, phases, _| {
                for i in 0..2 {
                    let mut d = phases[i] - prev[i];
                    if d < -PI {
                        d += TAU;
                    } else if d > PI {
                        d -= TAU;
                    }
                    unwrapped[i] += d;
                    prev[i] = phases[i];
                }
                if mark.is_none() && t >= 0.5 * t_end {
                    mark = Some((t, unwrapped[1] - unwrapped[0]));
                }
                true
            })
            .unwrap();
            let (t_mark, d_mark) = mark.unwrap();
            let beat = ((unwrapped[1] - unwrapped[0] - d_mark) / (t_end - t_mark)).abs();
            let locked = beat < 0.01 * dw;
            if ratio < 0.95 {
                assert!(locked, "K={k} ratio={ratio} beat={beat}");
            } else if ratio > 1.05 {
                assert!(!locked, "K={k} ratio={ratio} beat={beat}");
            }
        }
    }
}

#[test]
fn sweep_ignores_duplicate_grid_points() {
    let bank = default_filter_bank();
    let cases = CaseSet::new(vec![
        Case::new(Fragment25::from(&bank[0]), bank[0]),
        Case::new(Fragment25::filled(-1.0).unwrap(), bank[0]),
        Case::new(Fragment25::from(&bank[1]), bank[2]),
    ])
    .unwrap();
    let calib = FreqCalib::preset(7).unwrap();
    let cfg = SimConfig { seed: 3, ..SimConfig::default() };
    let a = sweep_coupling(&cases, &[0.1, 1.0, 10.0], &calib, &cfg, 2).unwrap();
    let b = sweep_coupling(&cases, &[0.1, 0.1, 1.0, 1.0, 10.0, 10.0], &calib, &cfg, 2).unwrap();
    assert_eq!(a.best_k, b.best_k);
    assert_eq!(b.entries.len(), 6);
}

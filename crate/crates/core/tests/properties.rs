use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use roomsparse_core::channel_est::{fit_log_gains, rt60_sabine};
use roomsparse_core::eval::{orthogonality_ratio, sir};
use roomsparse_core::forward::{coherence, convolve};
use roomsparse_core::linalg::{nnls, CMat, C64};
use roomsparse_core::recovery::structure::{stack_cells, unstack_cells};
use roomsparse_core::scene::{enumerate_images, MicArray, Point, RoomSpec};
use roomsparse_core::stft::{analyze, synthesize, StftConfig, Window};

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn cmat(rows: usize, cols: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols)
        .prop_map(move |v| CMat::from_iterator(rows, cols, v.into_iter().map(|(a, b)| C64::new(a, b))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stft_round_trip_interior(x in signal(1500), frame in prop::sample::select(vec![64usize, 128, 256])) {
        let cfg = StftConfig::new(frame, frame / 2, frame, Window::Hann, 8000.0).unwrap();
        let y = synthesize(&analyze(&x, &cfg).unwrap()).unwrap();
        for n in frame..x.len() - frame {
            prop_assert!((y[0][n] - x[n]).abs() < 1e-9);
        }
    }

    #[test]
    fn images_are_attenuated_and_exterior(
        sx in 0.1f64..0.9, sy in 0.1f64..0.9, sz in 0.1f64..0.9,
        refl in 0.0f64..1.0, order in 0i32..4,
    ) {
        let room = RoomSpec::shoebox([5.0, 4.0, 3.0], refl).unwrap();
        let src = Point::new(5.0 * sx, 4.0 * sy, 3.0 * sz);
        let images = enumerate_images(&room, &src, order, None).unwrap();
        prop_assert_eq!(images.direct().order, 0);
        prop_assert!((images.direct().position - src).norm() < 1e-12);
        for img in images.iter().skip(1) {
            prop_assert!(img.gain <= 1.0 + 1e-12);
            prop_assert!(img.order as i32 <= order);
            prop_assert_eq!(img.reflection_counts.iter().sum::<u32>(), img.order);
            prop_assert!(!room.contains_strictly(&img.position));
        }
    }

    #[test]
    fn coherence_is_bounded_and_scale_free(phi in cmat(6, 5), scale in 0.1f64..10.0) {
        prop_assume!(phi.column_iter().all(|c| c.norm() > 1e-6));
        let a = coherence(&phi).unwrap();
        prop_assert!((0.0..=1.0).contains(&a.mu));
        let mut scaled = phi.clone();
        scaled.column_mut(2).scale_mut(scale);
        let b = coherence(&scaled).unwrap();
        prop_assert!((a.mu - b.mu).abs() < 1e-9);
    }

    #[test]
    fn sir_ignores_estimate_gain(t in signal(200), i in signal(200), w in -1.0f64..1.0, g in 0.05f64..20.0) {
        prop_assume!(t.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let est: Vec<f64> = t.iter().zip(&i).map(|(a, b)| a + w * b).collect();
        let scaled: Vec<f64> = est.iter().map(|v| v * g).collect();
        let a = sir(&est, &t, &[&i]).unwrap();
        let b = sir(&scaled, &t, &[&i]).unwrap();
        prop_assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn orthogonality_ratio_in_unit_interval(x in cmat(3, 12)) {
        prop_assume!(x.norm() > 1e-6);
        let r = orthogonality_ratio(&x).unwrap();
        prop_assert!(r > 0.0 && r <= 1.0 + 1e-12);
    }

    #[test]
    fn convolution_commutes(a in signal(50), b in signal(70)) {
        let ab = convolve(&a, &b);
        let ba = convolve(&b, &a);
        prop_assert_eq!(ab.len(), 119);
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let direct: f64 = (0..50).map(|k| a[k] * b[60 - k]).sum();
        prop_assert!((ab[60] - direct).abs() < 1e-9);
    }

    #[test]
    fn log_gain_fit_recovers_coefficients(c in prop::array::uniform6(0.1f64..1.0)) {
        let mut rows = Vec::new();
        for s in 0..6 {
            for k in 1..=2u32 {
                let mut counts = [0u32; 6];
                counts[s] = k;
                counts[(s + 1) % 6] = 1;
                let g = c[s].powi(k as i32) * c[(s + 1) % 6];
                rows.push((counts, g));
            }
        }
        let (est, unobserved) = fit_log_gains(&rows);
        prop_assert!(unobserved.is_empty());
        for s in 0..6 {
            prop_assert!((est[s] - c[s]).abs() < 1e-9);
        }
    }

    #[test]
    fn sabine_grows_with_reflection(lo in 0.05f64..0.9, step in 0.01f64..0.09) {
        let a = rt60_sabine(&RoomSpec::shoebox([6.0, 5.0, 3.0], lo).unwrap()).unwrap();
        let b = rt60_sabine(&RoomSpec::shoebox([6.0, 5.0, 3.0], lo + step).unwrap()).unwrap();
        prop_assert!(b > a);
    }

    #[test]
    fn nnls_is_feasible_and_stationary(v in prop::collection::vec(-1.0f64..1.0, 8 * 4 + 8)) {
        let a = DMatrix::from_column_slice(8, 4, &v[..32]);
        let b = DVector::from_column_slice(&v[32..]);
        let x = nnls(&a, &b);
        prop_assert!(x.iter().all(|&xi| xi >= 0.0));
        let grad = a.transpose() * (&b - &a * &x);
        for k in 0..4 {
            prop_assert!(grad[k] <= 1e-8);
            if x[k] > 0.0 {
                prop_assert!(grad[k].abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn stacking_round_trips(coeffs in prop::collection::vec(cmat(5, 1), 3)) {
        let back = unstack_cells(&stack_cells(&coeffs), 5, 3);
        prop_assert_eq!(back, coeffs);
    }

    #[test]
    fn circular_array_is_centred(r in 0.02f64..0.5, n in 2usize..16) {
        let c = Point::new(2.0, 1.5, 1.2);
        let arr = MicArray::circular(c, r, n).unwrap();
        prop_assert_eq!(arr.len(), n);
        prop_assert!((arr.centroid() - c).norm() < 1e-9);
        for p in arr.positions() {
            prop_assert!(((p - c).norm() - r).abs() < 1e-9);
        }
    }
}

use proptest::prelude::*;

use prbm::dtn::{build_m, build_q, spreading_operator};
use prbm::geometry::{LatticeDomain, Polyline, Tag};
use prbm::halfspace::{absorption_probability_disk, eta, harmonic_density_halfspace, spread_kernel_t, stopping_time_cdf};
use prbm::lsa::coarse_grain;
use prbm::quadrature::QuadratureConfig;
use prbm::spectral::{disk_spread_density, disk_spreading_kernel, effective_impedance, SeriesConfig};
use prbm::walkers::{AbsorptionRecord, Binning, Fate, JumpParams, MeasureHistogram};

fn spectrum_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((0.0f64..50.0, 0.0f64..1.0), 1..12).prop_map(|v| v.into_iter().unzip())
}

fn record_strategy() -> impl Strategy<Value = AbsorptionRecord> {
    (0u8..3, -2.0f64..2.0, 0u64..200).prop_map(|(kind, x, n)| AbsorptionRecord {
        fate: match kind {
            0 => Fate::AbsorbedOnWorking { point: [x, 0.0, 0.0], element: None },
            1 => Fate::AbsorbedOnSource,
            _ => Fate::Censored,
        },
        n_reflections: n,
        n_hits: n + 1,
        local_time_proxy: 0.0,
        steps: n + 1,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn impedance_is_increasing_and_concave((mu, f) in spectrum_strategy(), l in 0.001f64..100.0) {
        let z = |x: f64| effective_impedance(&mu, &f, x, 1.0).unwrap();
        let h = l * 1e-3;
        let (a, b, c) = (z(l - h), z(l), z(l + h));
        prop_assert!(b >= a - 1e-12 && c >= b - 1e-12);
        prop_assert!(a + c - 2.0 * b <= 1e-9 * b.abs().max(1e-300));
        // bounded by the pure-access limit Lambda sum F / D
        prop_assert!(b <= l * f.iter().sum::<f64>() * (1.0 + 1e-12));
    }

    #[test]
    fn epsilon_is_a_probability_and_grows_with_lambda(a in 1e-4f64..1.0, l1 in 0.0f64..10.0, dl in 0.0f64..10.0) {
        let e1 = JumpParams::new(a, l1).unwrap().epsilon();
        let e2 = JumpParams::new(a, l1 + dl).unwrap().epsilon();
        prop_assert!((0.0..1.0).contains(&e1));
        prop_assert!(e2 >= e1);
    }

    #[test]
    fn absorption_probability_monotone(r in 0.01f64..5.0, dr in 0.0f64..1.0, d in 2usize..4) {
        let c = QuadratureConfig::default();
        let p1 = absorption_probability_disk(r, 1.0, d, &c).unwrap();
        let p2 = absorption_probability_disk(r + dr, 1.0, d, &c).unwrap();
        prop_assert!((0.0..=1.0).contains(&p1));
        prop_assert!(p2 >= p1 - 1e-12);
    }

    #[test]
    fn stopping_time_cdf_monotone(t in 1e-6f64..1e4, k in 1.0f64..3.0, l in 0.1f64..5.0) {
        let f1 = stopping_time_cdf(t, l).unwrap();
        let f2 = stopping_time_cdf(t * k, l).unwrap();
        prop_assert!((0.0..=1.0).contains(&f1));
        prop_assert!(f2 >= f1 - 1e-15);
    }

    #[test]
    fn spread_kernel_is_eta_times_poisson(s in 0.01f64..50.0, l in 0.05f64..5.0, d in 2usize..4) {
        let c = QuadratureConfig::default();
        let sv: Vec<f64> = if d == 2 { vec![s] } else { vec![s, 0.0] };
        let mut x = vec![0.0; d];
        x[d - 1] = l;
        let t = spread_kernel_t(&sv, l, d, &c).unwrap();
        let w = harmonic_density_halfspace(&x, &sv).unwrap();
        let e = eta(s / l, d, &c).unwrap();
        prop_assert!((t / (e * w) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disk_densities_are_nonnegative(r in 0.0f64..0.95, th in -10.0f64..10.0, l in 0.0f64..20.0) {
        prop_assert!(disk_spread_density(r, th, l, &SeriesConfig::default()).unwrap() >= 0.0);
    }

    #[test]
    fn spreading_kernel_symmetric(t1 in -7.0f64..7.0, t2 in -7.0f64..7.0, l in 0.05f64..5.0) {
        prop_assume!(((t1 - t2).rem_euclid(2.0 * std::f64::consts::PI)).min((t2 - t1).rem_euclid(2.0 * std::f64::consts::PI)) > 1e-6);
        let c = SeriesConfig::default();
        let a = disk_spreading_kernel(t1, t2, l, &c).unwrap();
        let b = disk_spreading_kernel(t2, t1, l, &c).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn histogram_partition_and_merge(recs in prop::collection::vec(record_strategy(), 0..200), split in 0usize..200) {
        let binning = Binning::Lateral { lo: -1.0, hi: 1.0, bins: 4 };
        let split = split.min(recs.len());
        let mut whole = MeasureHistogram::empty(binning.clone());
        let (mut left, mut right) = (MeasureHistogram::empty(binning.clone()), MeasureHistogram::empty(binning));
        for (i, r) in recs.iter().enumerate() {
            whole.record(r);
            if i < split { left.record(r) } else { right.record(r) }
        }
        prop_assert!(whole.partition_holds());
        prop_assert_eq!(whole.total, recs.len() as u64);
        prop_assert_eq!(right.merge(left), whole);
    }

    #[test]
    fn coarse_graining_shortens_and_stays_on_curve(
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30),
        frac in 0.01f64..0.9,
    ) {
        let curve = Polyline::new(pts.iter().map(|&(x, y)| [x, y]).collect()).unwrap();
        let lambda = curve.length() * frac;
        prop_assume!(lambda > 1e-6);
        let c = coarse_grain(&curve, lambda).unwrap();
        prop_assert!(c.length() <= curve.length() * (1.0 + 1e-12));
        for p in &c.points {
            prop_assert!(curve.distance(*p).0 < 1e-9);
        }
        prop_assert!((c.points.len() as f64 - 1.0 - 1.0 / frac).abs() <= 1.0 + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_boxes_keep_operator_invariants(
        nx in 2usize..9,
        ny in 2usize..9,
        tags in prop::collection::vec(prop::bool::ANY, 4),
        l in 0.0f64..10.0,
    ) {
        let t = |b: bool| if b { Tag::Source } else { Tag::Working };
        let mut faces = [(t(tags[0]), t(tags[1])), (t(tags[2]), t(tags[3]))];
        if tags.iter().all(|&b| b) {
            faces[0].0 = Tag::Working;
        }
        let dom = LatticeDomain::boxed(&[nx, ny], 1.0 / 8.0, &faces).unwrap();
        let q = build_q(&dom).unwrap();
        prop_assert!(q.max_asymmetry() < 1e-12);
        prop_assert!(q.min_entry() >= 0.0);
        for s in q.row_sums() {
            if q.has_source {
                prop_assert!(s < 1.0);
            } else {
                prop_assert!((s - 1.0).abs() < 1e-10);
            }
        }
        let op = build_m(&q);
        let tm = spreading_operator(&op, l).unwrap();
        let n = op.len();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| tm[(i, j)]).sum();
            // T 1 <= 1 componentwise, with equality when no source drains the walk
            prop_assert!(row <= 1.0 + 1e-10);
            if !q.has_source {
                prop_assert!((row - 1.0).abs() < 1e-9);
            }
        }
    }
}

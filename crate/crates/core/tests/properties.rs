use proptest::prelude::*;

use segopt::functionals::{
    make_bhattacharyya, make_kl, make_l2_bins, make_moments, make_volume, MomentTarget,
};
use segopt::grid::{bin_counts, io, linear_sum, signed_distance, Histogram, Image, Labeling, ScalarField};
use segopt::level_set::dirac;
use segopt::maxflow::{CutSide, FlowNetwork};
use segopt::trust_region::{approximate_energy, solve_subproblem, CroftonStencil};
use segopt::{Energy, EvalCounter, LengthConvention, Term};

fn mask_strategy(max: usize) -> impl Strategy<Value = Labeling> {
    (2..=max, 2..=max).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<bool>(), w * h)
            .prop_map(move |m| Labeling::from_vec(w, h, m).unwrap())
    })
}

fn gray_image(w: usize, h: usize, data: &[u8]) -> Image {
    Image::new(w, h, 1, data.iter().map(|&v| v as f64).collect()).unwrap()
}

fn distribution(weights: &[f64]) -> Histogram {
    let total: f64 = weights.iter().sum();
    Histogram::new(weights.len(), 1, weights.iter().map(|w| w / total).collect(), true).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_sum_is_additive_over_disjoint_masks(
        s in mask_strategy(12),
        seed in proptest::collection::vec(-5.0f64..5.0, 144),
        split in any::<u64>(),
    ) {
        let (w, h) = s.dims();
        let f = ScalarField::from_fn(w, h, |x, y| seed[(y * w + x) % seed.len()]);
        let a = Labeling::from_fn(w, h, |x, y| s.get(x, y) && (x + y + split as usize).is_multiple_of(2));
        let b = Labeling::from_fn(w, h, |x, y| s.get(x, y) && !a.get(x, y));
        let total = linear_sum(&f, &s).unwrap();
        let parts = linear_sum(&f, &a).unwrap() + linear_sum(&f, &b).unwrap();
        prop_assert!((total - parts).abs() <= 1e-9 * (1.0 + total.abs()));
    }

    #[test]
    fn bin_counts_sum_to_the_area(
        s in mask_strategy(12),
        pixels in proptest::collection::vec(any::<u8>(), 144),
        bins in 1usize..40,
    ) {
        let (w, h) = s.dims();
        let img = gray_image(w, h, &pixels[..w * h]);
        let hist = bin_counts(&img, &s, bins).unwrap();
        prop_assert_eq!(hist.total(0), s.area() as f64);
    }

    #[test]
    fn signed_distance_changes_sign_across_the_boundary(s in mask_strategy(14)) {
        let sd = signed_distance(&s);
        prop_assume!(!sd.degenerate);
        let (w, h) = s.dims();
        for y in 0..h {
            for x in 0..w {
                let v = sd.field.get(x, y);
                prop_assert_eq!(v < 0.0, s.get(x, y));
                prop_assert!(v.abs() >= 0.5);
                for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                    if nx < w && ny < h {
                        let n = sd.field.get(nx, ny);
                        prop_assert!((v - n).abs() <= 1.0 + 1e-12);
                        if s.get(x, y) != s.get(nx, ny) {
                            prop_assert!(v.abs() == 0.5 && n.abs() == 0.5);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn crofton_length_is_complement_symmetric(s in mask_strategy(10)) {
        let st = CroftonStencil::default();
        let (w, h) = s.dims();
        let c = Labeling::from_fn(w, h, |x, y| !s.get(x, y));
        prop_assert!((st.length(&s) - st.length(&c)).abs() <= 1e-9);
    }

    #[test]
    fn mask_and_field_round_trip(s in mask_strategy(16), vals in proptest::collection::vec(-1e6f64..1e6, 256)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        io::save_mask(&path, &s).unwrap();
        prop_assert_eq!(io::load_mask(&path).unwrap(), s.clone());
        let (w, h) = s.dims();
        let f = ScalarField::from_fn(w, h, |x, y| vals[(y * w + x) % vals.len()]);
        prop_assert_eq!(io::decode_field(&io::encode_field(&f)).unwrap(), f);
    }

    #[test]
    fn dirac_is_even(t in -3.0f64..3.0, eps in 0.1f64..4.0) {
        prop_assert_eq!(dirac(t, eps), dirac(-t, eps));
        prop_assert!(dirac(t, eps) >= 0.0);
    }

    #[test]
    fn max_flow_equals_the_cost_of_its_cut(
        n in 2usize..12,
        edges in proptest::collection::vec((0usize..12, 0usize..12, 0.0f64..5.0, 0.0f64..5.0), 0..30),
        terms in proptest::collection::vec((0.0f64..5.0, 0.0f64..5.0), 12),
    ) {
        let mut g = FlowNetwork::new();
        g.add_node_batch(n);
        for (u, (s, t)) in terms.iter().take(n).enumerate() {
            g.add_terminal(u, *s, *t).unwrap();
        }
        for &(u, v, c, r) in &edges {
            if u < n && v < n && u != v {
                g.add_edge(u, v, c, r).unwrap();
            }
        }
        let flow = g.max_flow();
        let side: Vec<bool> = (0..n).map(|u| g.cut_side(u).unwrap() == CutSide::Source).collect();
        prop_assert!((flow - g.cut_cost(&side)).abs() <= 1e-9 * (1.0 + flow));
    }

    #[test]
    fn max_flow_is_monotone_in_capacity(
        n in 2usize..10,
        edges in proptest::collection::vec((0usize..10, 0usize..10, 0.0f64..5.0), 1..25),
        terms in proptest::collection::vec((0.0f64..5.0, 0.0f64..5.0), 10),
        bump in 0.0f64..3.0,
        which in any::<prop::sample::Index>(),
    ) {
        let build = |extra: f64| {
            let mut g = FlowNetwork::new();
            g.add_node_batch(n);
            for (u, (s, t)) in terms.iter().take(n).enumerate() {
                g.add_terminal(u, *s, *t).unwrap();
            }
            let k = which.index(edges.len());
            for (i, &(u, v, c)) in edges.iter().enumerate() {
                if u < n && v < n && u != v {
                    let c = if i == k { c + extra } else { c };
                    g.add_edge(u, v, c, 0.0).unwrap();
                }
            }
            g.max_flow()
        };
        prop_assert!(build(bump) >= build(0.0) - 1e-9);
    }

    #[test]
    fn subproblem_never_loses_to_the_current_mask(
        s in mask_strategy(8),
        u in proptest::collection::vec(-2.0f64..2.0, 64),
        len in 0.0f64..2.0,
        dist in 0.0f64..2.0,
    ) {
        prop_assume!(!s.is_degenerate());
        let (w, h) = s.dims();
        let field = ScalarField::from_fn(w, h, |x, y| u[(y * w + x) % u.len()]);
        let st = CroftonStencil::default();
        let out = solve_subproblem(&field, len, &st, &s, dist).unwrap();
        let d = signed_distance(&s).field;
        let moved: f64 = (0..w * h).filter(|&p| out.at(p) != s.at(p)).map(|p| d.as_slice()[p].abs()).sum();
        let obj_out = approximate_energy(&field, len, &st, &out).unwrap() + dist * moved;
        let obj_cur = approximate_energy(&field, len, &st, &s).unwrap();
        prop_assert!(obj_out <= obj_cur + 1e-9);
    }

    #[test]
    fn regional_values_are_nonnegative(
        s in mask_strategy(10),
        pixels in proptest::collection::vec(any::<u8>(), 100),
        weights in proptest::collection::vec(0.01f64..1.0, 4),
        v0 in 1.0f64..200.0,
        m in -5.0f64..5.0,
    ) {
        let (w, h) = s.dims();
        let img = gray_image(w, h, &pixels[..w * h]);
        let q = distribution(&weights);
        let counts = Histogram::new(4, 1, weights.iter().map(|w| w * 50.0).collect(), false).unwrap();
        let models = [
            make_volume(v0).unwrap(),
            make_moments(vec![MomentTarget { p: 1, q: 0, value: m }, MomentTarget { p: 0, q: 2, value: -m }]).unwrap(),
            make_l2_bins(counts).unwrap(),
            make_kl(q.clone()).unwrap(),
            make_bhattacharyya(q).unwrap(),
        ];
        for model in &models {
            let v = model.value(&img, &s).unwrap();
            prop_assert!(v >= 0.0 && v.is_finite(), "{} gave {}", model.name(), v);
        }
    }

    #[test]
    fn energy_counts_one_evaluation_per_report(s in mask_strategy(10), calls in 1usize..6) {
        let (w, h) = s.dims();
        let img = Image::constant(w, h, 0.0).unwrap();
        let e = Energy::new(
            vec![Term::Regional { model: make_volume(10.0).unwrap(), weight: 1.0 }, Term::Length { weight: 0.5 }],
            LengthConvention::Crofton,
        ).unwrap();
        let counter = EvalCounter::default();
        for _ in 0..calls {
            e.report(&img, &s, &counter).unwrap();
        }
        prop_assert_eq!(counter.get(), calls as u64);
    }
}

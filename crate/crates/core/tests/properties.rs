use candle_core::{DType, Device, Tensor};
use proptest::prelude::*;

use mst_core::imaging::{dilate_subsample, sample_mask, Plane};
use mst_core::losses::{balanced_l1, encoder_generator_loss, LossWeights};
use mst_core::model::{compose_sketch_tensor, DiscOutput, SketchTensor};
use mst_core::wireframe::{
    lsm_decisions, lsm_filter, lsm_indicator, rasterize_lines, sap_score, threshold_wireframe,
    LineSegment, MaskBitmap, Wireframe,
};

const SIDE: usize = 32;

fn coord() -> impl Strategy<Value = f64> {
    0.0..(SIDE as f64 - 1.0)
}

fn segment() -> impl Strategy<Value = LineSegment> {
    (coord(), coord(), coord(), coord(), 0.0..=1.0f64)
        .prop_filter("non-degenerate", |(a, b, c, d, _)| (a - c).abs() + (b - d).abs() > 0.5)
        .prop_map(|(a, b, c, d, s)| LineSegment::from_coords(a, b, c, d, s).unwrap())
}

fn wireframe(max: usize) -> impl Strategy<Value = Wireframe> {
    prop::collection::vec(segment(), 0..max).prop_map(|l| Wireframe::new(SIDE, SIDE, l).unwrap())
}

fn mask() -> impl Strategy<Value = MaskBitmap> {
    prop::collection::vec(any::<bool>(), SIDE * SIDE)
        .prop_map(|bits| MaskBitmap::from_fn(SIDE, SIDE, |r, c| bits[r * SIDE + c]))
}

fn tensor(data: Vec<f64>, shape: &[usize]) -> Tensor {
    Tensor::from_vec(data, shape, &Device::Cpu).unwrap()
}

fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indicator_follows_endpoint_membership(line in segment(), mask in mask(), m in 0.0..=1.0f64) {
        let a = mask.contains_point(line.a().x, line.a().y).unwrap();
        let b = mask.contains_point(line.b().x, line.b().y).unwrap();
        let want = match (a, b) {
            (true, true) => 1.0,
            (false, false) => 0.0,
            _ => m,
        };
        prop_assert_eq!(lsm_indicator(&line, &mask, m).unwrap(), want);
    }

    #[test]
    fn lsm_extremes_are_deterministic(wf in wireframe(12), mask in mask(), seed in any::<u64>()) {
        let keep0 = lsm_decisions(&wf, &mask, 0.0, seed).unwrap();
        let keep1 = lsm_decisions(&wf, &mask, 1.0, seed).unwrap();
        for (i, l) in wf.lines().iter().enumerate() {
            let p = lsm_indicator(l, &mask, 0.5).unwrap();
            // Fully masked lines always go; untouched lines always stay.
            prop_assert_eq!(keep0[i], p < 1.0);
            prop_assert_eq!(keep1[i], p == 0.0);
        }
    }

    #[test]
    fn lsm_filter_keeps_lines_verbatim(wf in wireframe(12), mask in mask(), m in 0.0..=1.0f64, seed in any::<u64>()) {
        let keep = lsm_decisions(&wf, &mask, m, seed).unwrap();
        prop_assert_eq!(&keep, &lsm_decisions(&wf, &mask, m, seed).unwrap());
        let kept = lsm_filter(&wf, &mask, m, seed).unwrap();
        let expected: Vec<LineSegment> = wf.lines().iter().zip(&keep).filter(|(_, k)| **k).map(|(l, _)| *l).collect();
        prop_assert_eq!(kept.lines(), &expected[..]);
    }

    #[test]
    fn thresholds_compose(wf in wireframe(12), a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let twice = threshold_wireframe(&threshold_wireframe(&wf, a).unwrap(), b).unwrap();
        prop_assert_eq!(twice, threshold_wireframe(&wf, a.max(b)).unwrap());
    }

    #[test]
    fn adding_lines_never_darkens_the_raster(wf in wireframe(6), extra in segment()) {
        let base = rasterize_lines(&wf, SIDE, SIDE).unwrap();
        let mut lines = wf.lines().to_vec();
        lines.push(extra);
        let more = rasterize_lines(&Wireframe::new(SIDE, SIDE, lines).unwrap(), SIDE, SIDE).unwrap();
        for (x, y) in base.plane().data().iter().zip(more.plane().data()) {
            prop_assert!(y >= x);
            prop_assert!((0.0..=1.0).contains(y));
        }
    }

    #[test]
    fn sap_ignores_input_order_and_grows_with_threshold(gt in wireframe(6), preds in wireframe(8), rot in 0usize..8) {
        prop_assume!(!gt.is_empty());
        let mut scores: Vec<f64> = preds.lines().iter().map(|l| l.score()).collect();
        scores.sort_by(f64::total_cmp);
        prop_assume!(scores.windows(2).all(|w| w[0] != w[1]));
        let mut shuffled = preds.lines().to_vec();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
        }
        let g = vec![("x".to_string(), gt)];
        let p = vec![("x".to_string(), preds)];
        let q = vec![("x".to_string(), Wireframe::new(SIDE, SIDE, shuffled).unwrap())];
        let mut last = 0.0;
        for t in [5.0, 10.0, 15.0] {
            let s = sap_score(&p, &g, t).unwrap();
            prop_assert_eq!(s, sap_score(&q, &g, t).unwrap());
            prop_assert!((0.0..=100.0).contains(&s));
            prop_assert!(s >= last);
            last = s;
        }
    }

    #[test]
    fn sampled_masks_are_binary_and_reproducible(seed in any::<u64>()) {
        let (kind, m) = sample_mask(seed, SIDE, SIDE).unwrap();
        let (kind2, m2) = sample_mask(seed, SIDE, SIDE).unwrap();
        prop_assert_eq!(kind, kind2);
        prop_assert_eq!(&m, &m2);
        prop_assert!(m.bits().iter().all(|&b| b <= 1));
        let back = MaskBitmap::read_png(&m.to_png_bytes().unwrap()[..]).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn pyramid_level_is_block_maximum(bits in prop::collection::vec(0.0..=1.0f32, 16 * 16)) {
        let src = Plane::from_vec(16, 16, bits).unwrap();
        let half = dilate_subsample(&src).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let m = [src.get(2 * r, 2 * c), src.get(2 * r, 2 * c + 1), src.get(2 * r + 1, 2 * c), src.get(2 * r + 1, 2 * c + 1)]
                    .into_iter()
                    .fold(0.0f32, f32::max);
                prop_assert_eq!(half.get(r, c), m);
            }
        }
        prop_assert!(half.count_above(0.0) * 4 >= src.count_above(0.0));
    }

    #[test]
    fn balanced_l1_is_symmetric_in_the_mask(
        pred in prop::collection::vec(-1.0..1.0f64, 2 * 36),
        target in prop::collection::vec(-1.0..1.0f64, 2 * 36),
        holes in prop::collection::vec(any::<bool>(), 36),
        c in 0.01..2.0f64,
    ) {
        prop_assume!(holes.iter().any(|&h| h) && holes.iter().any(|&h| !h));
        let p = tensor(pred, &[1, 2, 6, 6]);
        let t = tensor(target, &[1, 2, 6, 6]);
        let m = tensor(holes.iter().map(|&h| h as u8 as f64).collect(), &[1, 1, 6, 6]);
        let inv = (1.0 - &m).unwrap();
        let a = scalar(&balanced_l1(&p, &t, &m).unwrap());
        let b = scalar(&balanced_l1(&p, &t, &inv).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
        let shifted = (&t + c).unwrap();
        prop_assert!((scalar(&balanced_l1(&shifted, &t, &m).unwrap()) - 2.0 * c).abs() < 1e-12);
        prop_assert_eq!(scalar(&balanced_l1(&t, &t, &m).unwrap()), 0.0);
    }

    #[test]
    fn loss_weights_scale_weighted_terms(k in 0.0..10.0f64, vals in prop::collection::vec(-3.0..3.0f64, 8)) {
        let out = |v: f64| DiscOutput {
            logits: tensor(vec![v; 4], &[1, 1, 2, 2]),
            features: vec![tensor(vec![v; 4], &[1, 1, 2, 2]), tensor(vec![v; 4], &[1, 1, 2, 2])],
        };
        let rec: Vec<(Tensor, Tensor)> = (0..3)
            .map(|i| (tensor(vec![vals[i]; 3], &[1, 3, 1, 1]), tensor(vec![vals[i + 3]; 3], &[1, 3, 1, 1])))
            .collect();
        let w = LossWeights::default();
        let total = |w: &LossWeights| {
            let l = encoder_generator_loss(&out(vals[6]), &out(vals[7]), &out(0.0), &out(1.0), &rec, w).unwrap();
            let rec_term = l.values().unwrap().into_iter().find(|(n, _)| *n == "enc_rec").unwrap().1;
            scalar(&l.total) - rec_term
        };
        let base = total(&w);
        prop_assert!((total(&w.scaled(k)) - k * base).abs() <= 1e-9 * (1.0 + base.abs() * k));
    }

    #[test]
    fn sketch_identity_holds_bitwise(l in prop::collection::vec(0.0..=1.0f32, 64), e in prop::collection::vec(0.0..=1.0f32, 64)) {
        let lt = Tensor::from_vec(l, (1, 1, 8, 8), &Device::Cpu).unwrap();
        let et = Tensor::from_vec(e, (1, 1, 8, 8), &Device::Cpu).unwrap();
        let s = compose_sketch_tensor(&lt, &et).unwrap();
        prop_assert!(SketchTensor::from_tensor(&s, 0).unwrap().identity_holds());
    }
}

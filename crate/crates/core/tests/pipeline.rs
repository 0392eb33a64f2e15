mod common;

use std::collections::VecDeque;

use candle_core::{DType, Device, Tensor};

use common::tiny_config;
use mst_core::imaging::{gen_blob_mask, gen_irregular_mask, sample_mask, CannyConfig, Image, MaskKind};
use mst_core::model::{EncoderInput, ModelConfig, MstModel};
use mst_core::nn::{Mode, ParamStore, PdsBlock, PdsSpec};
use mst_core::pipeline::*;
use mst_core::wireframe::{rasterize_lines, LineSegment, Wireframe};
use mst_core::MaskBitmap;

/// Number of 4-connected components of set pixels.
fn components(m: &MaskBitmap) -> usize {
    let (h, w) = m.dims();
    let mut seen = vec![false; h * w];
    let mut count = 0;
    for start in 0..h * w {
        if seen[start] || !m.get(start / w, start % w) {
            continue;
        }
        count += 1;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            let mut push = |rr: usize, cc: usize| {
                let j = rr * w + cc;
                if !seen[j] && m.get(rr, cc) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                push(r - 1, c);
            }
            if r + 1 < h {
                push(r + 1, c);
            }
            if c > 0 {
                push(r, c - 1);
            }
            if c + 1 < w {
                push(r, c + 1);
            }
        }
    }
    count
}

#[test]
fn irregular_coverage_is_calibrated() {
    let mean = (0..1000u64).map(|s| gen_irregular_mask(s, 256, 256).coverage()).sum::<f64>() / 1000.0;
    assert!((0.10..=0.45).contains(&mean), "mean coverage {mean}");
}

#[test]
fn mask_families_are_balanced() {
    let n = 10_000u64;
    let irregular = (0..n)
        .filter(|&s| sample_mask(s, 32, 32).unwrap().0 == MaskKind::Irregular)
        .count();
    let frac = irregular as f64 / n as f64;
    assert!((frac - 0.5).abs() <= 0.02, "irregular fraction {frac}");
}

#[test]
fn blobs_are_one_or_two_regions_in_band() {
    for seed in 0..200 {
        let m = gen_blob_mask(seed, 64, 64).unwrap();
        assert!((0.05..=0.40).contains(&m.coverage()));
        let k = components(&m);
        assert!((1..=2).contains(&k), "seed {seed}: {k} components");
    }
}

#[test]
fn synthetic_scenes_have_visible_lines() {
    for s in synthetic_samples(40, 64, 2).unwrap().iter().chain(&synthetic_samples(4, 256, 2).unwrap()) {
        let (h, w) = s.image.dims();
        let raster = rasterize_lines(&s.wireframe, h, w).unwrap();
        let occupied = raster.plane().count_above(0.0) as f64 / (h * w) as f64;
        assert!(occupied >= 0.01, "{}: {occupied}", s.id);
        assert!(s.wireframe.lines().iter().all(|l| l.score() >= PLANTED_SCORE.0));
    }
}

#[test]
fn corpus_round_trip_and_wireframe_cache() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = make_synthetic_corpus(dir.path(), 5, 64, 9).unwrap();
    let opened = Corpus::open(dir.path()).unwrap();
    assert_eq!(opened.manifest(), corpus.manifest());
    let samples = opened.samples().unwrap();
    for (s, e) in samples.iter().zip(&opened.manifest().entries) {
        assert_eq!(image_digest(&s.image), e.image_sha256);
        assert_eq!(s.mask.coverage(), e.mask_coverage);
    }

    let oracle = OracleDetector::new(samples.iter().map(|s| (s.image.clone(), s.wireframe.clone())).collect());
    let first = precompute_wireframes(&opened, &oracle, Thresholds::default()).unwrap();
    assert_eq!((first.computed, first.cached), (5, 0));
    let second = precompute_wireframes(&opened, &oracle, Thresholds::default()).unwrap();
    assert_eq!((second.computed, second.cached), (0, 5));

    let canny = CannyConfig::default();
    let cached = training_scenes_from_cache(&opened, 0.95, &canny).unwrap();
    let direct = training_scenes(&samples, 0.95, &canny).unwrap();
    for (a, b) in cached.iter().zip(&direct) {
        assert_eq!(a.wireframe, b.wireframe);
    }
    assert!(training_scenes_from_cache(&opened, 0.9, &canny).is_err());
}

fn tiny_model() -> MstModel {
    MstModel::new(tiny_config(), DType::F32, 1).unwrap()
}

#[test]
fn empty_mask_is_an_exact_no_op() {
    let model = tiny_model();
    let s = &synthetic_samples(1, 32, 4).unwrap()[0];
    let det = FixedDetector(s.wireframe.clone());
    for mode in [InferenceMode::Inpaint, InferenceMode::Removal] {
        let out = run_inference(&model, &s.image, &MaskBitmap::empty(32, 32), mode, &det, &InferenceOptions::default()).unwrap();
        assert_eq!(out.output, s.image.to_unit());
        assert!(out.sketch.identity_holds());
    }
}

#[test]
fn inference_is_deterministic_at_odd_sizes() {
    let model = tiny_model();
    let image = Image::from_fn(30, 26, |r, c| [r as f32 / 30.0, c as f32 / 26.0, 0.5]);
    let mask = MaskBitmap::from_fn(30, 26, |r, c| (8..20).contains(&r) && (5..15).contains(&c));
    let det = NullDetector;
    let opts = InferenceOptions::default();
    let a = run_inference(&model, &image, &mask, InferenceMode::Inpaint, &det, &opts).unwrap();
    let b = run_inference(&model, &image, &mask, InferenceMode::Inpaint, &det, &opts).unwrap();
    assert_eq!(a.output, b.output);
    assert_eq!(a.sketch, b.sketch);
    assert_eq!(a.output.dims(), (30, 26));
    for r in 0..30 {
        for c in 0..26 {
            if !mask.get(r, c) {
                assert_eq!(a.output.pixel(r, c), image.pixel(r, c));
            }
        }
    }
}

/// Left half of a 32x32 frame is the hole; lines fully inside, crossing, and outside.
fn three_lines() -> (Wireframe, MaskBitmap) {
    let l = |x1, y1, x2, y2| LineSegment::from_coords(x1, y1, x2, y2, 1.0).unwrap();
    let wf = Wireframe::new(32, 32, vec![l(2.0, 4.0, 10.0, 4.0), l(4.0, 20.0, 28.0, 20.0), l(20.0, 2.0, 28.0, 12.0)]).unwrap();
    (wf, MaskBitmap::from_fn(32, 32, |_, c| c < 16))
}

#[test]
fn removal_keeps_crossing_lines_and_inpainting_drops_them() {
    let model = tiny_model();
    let (wf, mask) = three_lines();
    let image = Image::filled(32, 32, [0.3, 0.4, 0.5]);
    let det = FixedDetector(wf);
    let opts = InferenceOptions::default();
    let kept = |mode| {
        let out = run_inference(&model, &image, &mask, mode, &det, &opts).unwrap();
        out.decisions.iter().map(|d| d.kept).collect::<Vec<_>>()
    };
    assert_eq!(kept(InferenceMode::Removal), vec![false, true, true]);
    assert_eq!(kept(InferenceMode::Inpaint), vec![false, false, true]);

    let forced = InferenceOptions {
        line_overrides: vec![(0, true), (2, false)],
        ..InferenceOptions::default()
    };
    let out = run_inference(&model, &image, &mask, InferenceMode::Removal, &det, &forced).unwrap();
    let flags: Vec<(bool, bool)> = out.decisions.iter().map(|d| (d.kept, d.overridden)).collect();
    assert_eq!(flags, vec![(true, true), (true, false), (false, true)]);
    let bad = InferenceOptions {
        line_overrides: vec![(3, true)],
        ..InferenceOptions::default()
    };
    assert!(run_inference(&model, &image, &mask, InferenceMode::Removal, &det, &bad).is_err());
}

#[test]
fn pds_chain_contract_at_full_resolution() {
    let cfg = ModelConfig {
        image_size: 256,
        ..ModelConfig::smoke()
    };
    let model = MstModel::new(cfg, DType::F32, 3).unwrap();
    let dev = Device::Cpu;
    let image = Tensor::randn(0f32, 0.5, (1, 3, 256, 256), &dev).unwrap().clamp(-1f32, 1f32).unwrap();
    let zeros = Tensor::zeros((1, 1, 256, 256), DType::F32, &dev).unwrap();
    let out = model
        .encoder
        .forward(&EncoderInput { image: &image, mask: &zeros, lines: &zeros, edges: &zeros }, Mode::Eval)
        .unwrap();
    let in_open = |t: &Tensor, lo: f32, hi: f32| {
        let v: Vec<f32> = t.flatten_all().unwrap().to_vec1().unwrap();
        v.iter().all(|&x| x > lo && x < hi)
    };
    for (scale, side) in out.scales.iter().zip([64, 128, 256]) {
        assert_eq!(scale.o_l.dims(), &[1, 1, side, side]);
        assert_eq!(scale.o_e.dims(), &[1, 1, side, side]);
        assert_eq!(scale.o_im.dims(), &[1, 3, side, side]);
        assert!(in_open(&scale.o_l, 0.0, 1.0) && in_open(&scale.o_e, 0.0, 1.0));
        assert!(in_open(&scale.o_im, -1.0, 1.0));
    }
    assert_eq!(out.sketch.dims(), &[1, 3, 256, 256]);

    // Pinning the attention map to zero makes the blended embedding the line embedding.
    let store = ParamStore::new(DType::F32, 8);
    let block = PdsBlock::new(&store, PdsSpec { in_ch: 4, ch: 6, next_ch: Some(4) }).unwrap();
    let x = Tensor::randn(0f32, 1.0, (1, 4, 64, 64), &dev).unwrap();
    let free = block.forward(&x, Mode::Eval).unwrap();
    assert!(in_open(&free.attention, 0.0, 1.0));
    let head = block.attention_head();
    head.weight().set(&head.weight().as_tensor().zeros_like().unwrap()).unwrap();
    let bias = head.bias().unwrap();
    bias.set(&(bias.as_tensor().ones_like().unwrap() * -1e4).unwrap()).unwrap();
    let pinned = block.forward(&x, Mode::Eval).unwrap();
    let v = |t: &Tensor| t.flatten_all().unwrap().to_vec1::<f32>().unwrap();
    assert!(v(&pinned.attention).iter().all(|&a| a == 0.0));
    assert_eq!(v(&pinned.e_le_prime), v(&pinned.e_l));
    assert_eq!(pinned.x_next.unwrap().dims(), &[1, 4, 128, 128]);
}

#[test]
fn half_of_crossing_lines_survive_at_one_half() {
    // 1000 lines on a 64x64 frame, each with exactly one endpoint in the left-half hole.
    let lines: Vec<LineSegment> = (0..1000)
        .map(|i| LineSegment::from_coords(5.0 + (i % 20) as f64, (i % 60) as f64, 40.0 + (i % 20) as f64, ((i + 7) % 60) as f64, 1.0).unwrap())
        .collect();
    let wf = Wireframe::new(64, 64, lines).unwrap();
    let mask = MaskBitmap::from_fn(64, 64, |_, c| c < 32);
    let keep = mst_core::wireframe::lsm_decisions(&wf, &mask, 0.5, 2024).unwrap();
    let frac = keep.iter().filter(|&&k| k).count() as f64 / 1000.0;
    // Three standard deviations of a binomial(1000, 0.5) proportion is about 0.047.
    assert!((frac - 0.5).abs() <= 0.05, "retained {frac}");
}

use sidu_core::maskgen::{apply_mask, binarize, generate_masked_set, upsample_bilinear};
use sidu_core::model::{Conv2d, Dense, Layer};
use sidu_core::sidu::{combine_weights, compose_saliency, similarity_differences, uniqueness};
use sidu_core::{sidu, Classifier, MaskConfig, ModelSpec, SiduConfig, Tensor};

fn ramp(size: usize) -> Tensor {
    let data = (0..size * size).map(|i| i as f64 / (size * size) as f64).collect();
    Tensor::new(vec![1, size, size], data).unwrap()
}

/// Conv over a 5x5 ramp with a known kernel, then a head that ignores it.
fn ramp_model(weights: Vec<f64>, bias: f64, maps: usize) -> ModelSpec {
    let mut w = Vec::new();
    for _ in 0..maps {
        w.extend_from_slice(&weights);
    }
    ModelSpec::new(
        [1, 5, 5],
        vec![
            Layer::Conv2d(Conv2d::same(1, maps, 3, w, vec![bias; maps])),
            Layer::GlobalAvgPool,
            Layer::Dense(Dense {
                inputs: maps,
                outputs: 2,
                weights: (0..2 * maps).map(|i| if i < maps { 1.0 } else { -1.0 }).collect(),
                bias: vec![0.0, 0.0],
            }),
            Layer::Softmax,
        ],
        None,
    )
    .unwrap()
}

#[test]
fn convolution_matches_hand_computed_table() {
    // Ramp value at (x, y) is (5y + x) / 25; kernel sums the 4-neighbourhood minus 4x center.
    let kernel = vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];
    let model = ramp_model(kernel, 0.0, 1);
    let features = model.infer(&ramp(5)).unwrap().features;
    #[rustfmt::skip]
    let expected = [
        6.0, 4.0, 3.0, 2.0, -4.0,
        -4.0, 0.0, 0.0, 0.0, -10.0,
        -9.0, 0.0, 0.0, 0.0, -15.0,
        -14.0, 0.0, 0.0, 0.0, -20.0,
        -44.0, -26.0, -27.0, -28.0, -54.0,
    ];
    for (a, e) in features.map(0).iter().zip(expected) {
        assert!((a - e / 25.0).abs() < 1e-12, "{a} vs {}", e / 25.0);
    }
}

#[test]
fn batch_scores_equal_sequential_bitwise() {
    let model = sidu_core::demo::planted_patch_model(7);
    let images: Vec<Tensor> = sidu_core::demo::demo_corpus(7, 6).into_iter().map(|d| d.image).collect();
    let batch = model.infer_scores_batch(&images).unwrap();
    for (img, b) in images.iter().zip(&batch) {
        let seq = model.infer(img).unwrap().scores;
        assert_eq!(seq.probs(), b.probs());
    }
}

#[test]
fn pipeline_equals_manual_composition() {
    let model = sidu_core::demo::planted_patch_model(3);
    let image = sidu_core::demo::demo_corpus(3, 1).remove(0).image;
    let cfg = SiduConfig::default();
    let out = sidu::explain(&model, &image, &cfg).unwrap();

    let original = model.infer(&image).unwrap();
    let f = &original.features;
    let mut masks = Vec::new();
    let mut scores = Vec::new();
    for i in 0..f.count() {
        let b = binarize(f.map(i), f.map_width(), f.map_height(), 0.5).unwrap();
        let m = upsample_bilinear(&b, 32, 32).unwrap();
        scores.push(model.infer(&apply_mask(&image, &m).unwrap()).unwrap().scores);
        masks.push(m);
    }
    let sd = similarity_differences(&original.scores, &scores, 0.25).unwrap();
    let u = uniqueness(&scores);
    let w = combine_weights(&sd, &u).unwrap();
    let manual = compose_saliency(&w, &masks, original.scores.argmax()).unwrap();
    assert_eq!(out.saliency.values(), manual.values());
    assert_eq!(out.weights.w, w);
    assert_eq!(out.saliency.class_id, original.scores.argmax());
}

#[test]
fn dead_feature_map_gives_black_masked_image() {
    // Bias -10 keeps every activation below tau.
    let model = ramp_model(vec![0.0; 9], -10.0, 2);
    let set = generate_masked_set(&model, &ramp(5), &MaskConfig::default()).unwrap();
    assert_eq!(set.masks.len(), 2);
    for m in &set.masked {
        assert!(m.pixels.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn identical_feature_maps_give_zero_saliency() {
    let kernel = vec![0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0];
    let model = ramp_model(kernel, 0.0, 4);
    let out = sidu::explain(&model, &ramp(5), &SiduConfig::default()).unwrap();
    assert!(out.weights.u.iter().all(|&u| u == 0.0));
    assert!(out.saliency.values().iter().all(|&v| v == 0.0));
}

#[test]
fn explanation_is_deterministic() {
    let model = sidu_core::demo::planted_patch_model(5);
    let image = sidu_core::demo::demo_corpus(5, 1).remove(0).image;
    let a = sidu::explain(&model, &image, &SiduConfig::default()).unwrap();
    let b = sidu::explain(&model, &image, &SiduConfig::default()).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.saliency.values()), bits(b.saliency.values()));
}

#[test]
fn planted_top_left_patch_is_localized() {
    use rand::SeedableRng;
    use sidu_core::demo::{planted_patch_model, render_patch_image, PatchBox, PATCH_SIZE};
    let model = planted_patch_model(1);
    let patch = PatchBox { x: 0, y: 0, width: PATCH_SIZE, height: PATCH_SIZE };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let image = render_patch_image(&mut rng, 0, patch);
    let out = sidu::explain(&model, &image, &SiduConfig::default()).unwrap();
    assert_eq!(out.saliency.class_id, 0);
    let frac = out.saliency.mass_fraction(|x, y| patch.contains(x, y));
    assert!(frac > 0.5, "mass inside patch {frac}");
}

#[test]
fn invalid_configuration_is_rejected() {
    let model = ramp_model(vec![1.0; 9], 0.0, 1);
    assert!(sidu::explain(&model, &ramp(5), &SiduConfig::with_sigma(-1.0)).is_err());
    let wrong = Tensor::zeros(vec![1, 4, 4]);
    assert!(sidu::explain(&model, &wrong, &SiduConfig::default()).is_err());
}

use hstl_core::models::{build_model, frozen_layers, mlp_transfer_surgery, transfer_surgery, ModelVariant, VariantKind};
use hstl_core::nn::{
    backward, checkpoint_to_bytes, forward, init_params, softmax_cross_entropy, softmax_rows, Mode, ModelSpec, Params,
    Tensor,
};
use hstl_core::prep::{extract_patches, fit_pca, flatten_patches, split_indices, PatchSet, PcaOptions, SplitSpec};
use hstl_core::rng::Pcg32;
use hstl_core::scene::{encode_ppm, generate_synthetic_scene, Cube, LabelMap, Scene, SynthSpec};
use hstl_core::train::{argmax, evaluate, train, TrainConfig};
use proptest::prelude::*;

fn scene_strategy() -> impl Strategy<Value = Scene> {
    (1usize..6, 1usize..6, 1usize..5, 1usize..5).prop_flat_map(|(r, c, b, k)| {
        (
            prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO, r * c * b),
            prop::collection::vec(0..=k as u16, r * c),
        )
            .prop_map(move |(data, labels)| {
                let names = (1..=k).map(|i| format!("c{i}")).collect();
                Scene::new("prop", Cube::new(r, c, b, data).unwrap(), LabelMap::new(r, c, labels).unwrap(), names)
                    .unwrap()
            })
    })
}

fn synth(seed: u64) -> SynthSpec {
    SynthSpec { rows: 16, cols: 16, bands: 8, n_classes: 3, blob_count: 6, noise_sigma: 0.05, seed }
}

fn random_cube(rng: &mut Pcg32, rows: usize, cols: usize, bands: usize) -> Cube {
    // Correlated bands so the spectrum has a clear ordering of variances.
    let mut data = Vec::with_capacity(rows * cols * bands);
    for _ in 0..rows * cols {
        let z: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        for b in 0..bands {
            let v = z[0] * (b as f64 + 1.0) + z[1] * 0.5 + z[2] * (b % 2) as f64 + 0.01 * rng.normal();
            data.push(v as f32);
        }
    }
    Cube::new(rows, cols, bands, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scene_bytes_round_trip(s in scene_strategy()) {
        let bytes = s.to_bytes().unwrap();
        let back = Scene::from_bytes(&bytes).unwrap();
        let bits = |c: &Cube| c.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.cube), bits(&s.cube));
        prop_assert_eq!(&back.labels, &s.labels);
        prop_assert_eq!(&back.class_names, &s.class_names);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn class_table_matches_label_census(s in scene_strategy()) {
        let table = s.class_table();
        for (c, entry) in table.classes.iter().enumerate() {
            let count = s.labels.data.iter().filter(|&&l| usize::from(l) == c + 1).count();
            prop_assert_eq!(entry.sample_count, count);
        }
        prop_assert_eq!(table.total(), s.labels.labeled_count());
    }

    #[test]
    fn ppm_payload_is_three_bytes_per_pixel(s in scene_strategy()) {
        let ppm = encode_ppm(&s.labels);
        let header = format!("P6\n{} {}\n255\n", s.cols(), s.rows());
        prop_assert!(ppm.starts_with(header.as_bytes()));
        prop_assert_eq!(ppm.len() - header.len(), 3 * s.rows() * s.cols());
    }

    #[test]
    fn synthetic_scenes_are_deterministic(seed in any::<u64>()) {
        let a = generate_synthetic_scene(&synth(seed)).unwrap().to_bytes().unwrap();
        let b = generate_synthetic_scene(&synth(seed)).unwrap().to_bytes().unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn patch_census_equals_labeled_pixels(s in scene_strategy(), half in 0usize..4) {
        let p = extract_patches(&s.cube, &s.labels, 2 * half + 1, s.n_classes()).unwrap();
        prop_assert_eq!(p.len(), s.labels.labeled_count());
        prop_assert_eq!(p.y.len(), p.len());
    }

    #[test]
    fn split_is_a_partition(
        y in prop::collection::vec(1u16..5, 8..200),
        f in 0.2f64..0.8,
        seed in any::<u64>(),
        stratified in any::<bool>(),
    ) {
        let spec = SplitSpec { train_fraction: f, seed, stratified };
        if let Ok((train, test)) = split_indices(&y, &spec) {
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
            if !stratified {
                prop_assert_eq!(train.len(), (f * y.len() as f64).floor() as usize);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(v in prop::collection::vec(-30.0f64..30.0, 1..40), k in 1usize..8) {
        let n = v.len() / k;
        prop_assume!(n > 0);
        let x = Tensor::<f64>::from_f64(&[n, k], &v[..n * k]).unwrap();
        for row in softmax_rows(&x).data().chunks(k) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let x32 = Tensor::<f32>::from_f64(&[n, k], &v[..n * k]).unwrap();
        for row in softmax_rows(&x32).data().chunks(k) {
            prop_assert!((row.iter().map(|&p| f64::from(p)).sum::<f64>() - 1.0).abs() < 1e-5);
        }
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let out = softmax_cross_entropy(&x, &labels).unwrap();
        for row in out.dlogits.data().chunks(k) {
            prop_assert!(row.iter().sum::<f64>().abs() < 1e-6);
        }
    }

    #[test]
    fn argmax_picks_first_maximum(v in prop::collection::vec(-3i32..3, 1..10)) {
        let row: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(argmax(&row), row.iter().position(|&x| x == m).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pca_variance_order_and_reconstruction(seed in any::<u64>(), bands in 3usize..8) {
        let mut rng = Pcg32::seeded(seed);
        let cube = random_cube(&mut rng, 6, 7, bands);
        let pca = fit_pca(&cube, bands, PcaOptions::default()).unwrap();
        let n = cube.pixel_count();
        let comps: Vec<Vec<f64>> = (0..bands).map(|k| pca.component(k)).collect();
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|p| {
                let px = &cube.data[p * bands..(p + 1) * bands];
                comps
                    .iter()
                    .map(|v| px.iter().zip(&pca.band_means).zip(v).map(|((&x, m), w)| (f64::from(x) - m) * w).sum())
                    .collect()
            })
            .collect();
        let variance = |k: usize| {
            let mean = scores.iter().map(|s| s[k]).sum::<f64>() / n as f64;
            scores.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        };
        for k in 1..bands {
            prop_assert!(variance(k) <= variance(k - 1) * (1.0 + 1e-9) + 1e-12);
        }
        let error = |c: usize| {
            let mut total = 0.0;
            for (p, s) in scores.iter().enumerate() {
                for (b, m) in pca.band_means.iter().enumerate() {
                    let rec = m + (0..c).map(|k| s[k] * comps[k][b]).sum::<f64>();
                    total += (f64::from(cube.data[p * bands + b]) - rec).powi(2);
                }
            }
            total / (n * bands) as f64
        };
        for c in 0..bands {
            prop_assert!(error(c + 1) <= error(c) + 1e-9);
        }
        prop_assert!(error(bands) < 1e-9);
    }
}

fn tiny_set(seed: u64, window: usize) -> (PatchSet, PatchSet) {
    let scene = generate_synthetic_scene(&synth(seed)).unwrap();
    let pca = fit_pca(&scene.cube, 4, PcaOptions::default()).unwrap();
    let reduced = hstl_core::prep::apply_pca(&scene.cube, &pca).unwrap();
    let p = flatten_patches(extract_patches(&reduced, &scene.labels, window, 3).unwrap());
    hstl_core::prep::split_train_test(&p, &SplitSpec { train_fraction: 0.5, seed, stratified: false }).unwrap()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 16, ..TrainConfig::default() }
}

#[test]
fn training_is_deterministic_and_finite() {
    let (tr, _) = tiny_set(3, 3);
    let spec = build_model(&ModelVariant::new(VariantKind::Mlp2, 3, 4, 3)).unwrap();
    let run = || {
        let mut p = init_params::<f32>(&spec, 1).unwrap();
        let h = train(&spec, &mut p, &tr, &cfg(3)).unwrap();
        (h.losses(), checkpoint_to_bytes(&spec, &p).unwrap())
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    assert!(a.iter().all(|l| l.is_finite()));
}

#[test]
fn rebuild_gives_identical_params() {
    for kind in [VariantKind::Mlp2, VariantKind::Mlp3, VariantKind::Cnn] {
        let spec = build_model(&ModelVariant::new(kind, 3, 13, 4)).unwrap();
        let a = checkpoint_to_bytes(&spec, &init_params::<f32>(&spec, 7).unwrap()).unwrap();
        let spec2 = build_model(&ModelVariant::new(kind, 3, 13, 4)).unwrap();
        let b = checkpoint_to_bytes(&spec2, &init_params::<f32>(&spec2, 7).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}

fn trunk_bits(spec: &ModelSpec, params: &Params<f32>, trunk: &[usize]) -> Vec<Vec<u32>> {
    trunk
        .iter()
        .flat_map(|&i| params.layers[i].tensors().into_iter().map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect()))
        .chain(std::iter::once(vec![spec.layers.len() as u32]))
        .collect()
}

#[test]
fn surgery_and_head_training_keep_the_trunk() {
    let (tr, te) = tiny_set(5, 3);
    let spec = build_model(&ModelVariant::new(VariantKind::Mlp2, 3, 4, 3)).unwrap();
    let mut params = init_params::<f32>(&spec, 2).unwrap();
    train(&spec, &mut params, &tr, &cfg(2)).unwrap();

    let surgery = mlp_transfer_surgery(VariantKind::Mlp2, &spec, 3, 9).unwrap();
    let (new_spec, mut new_params) = transfer_surgery((&spec, &params), &surgery).unwrap();
    let trunk = frozen_layers(&new_spec);
    assert!(!trunk.is_empty());
    let head: usize = new_spec.layers.iter().filter(|l| !l.frozen).map(|l| l.spec.param_count()).sum();
    assert_eq!(new_spec.count_params().trainable, head);
    assert_eq!(trunk_bits(&new_spec, &new_params, &trunk), trunk_bits(&new_spec, &params, &trunk));

    // Activations entering the head on a fixed input, before and after training.
    let junction = *trunk.last().unwrap() + 2;
    let x = hstl_core::train::batch_tensor::<f32>(&te, &(0..8).collect::<Vec<_>>()).unwrap();
    let probe = |p: &Params<f32>| forward(&new_spec, p, &x, Mode::Infer, &mut Pcg32::seeded(0)).unwrap();
    let before = probe(&new_params).layer_input(junction).clone();
    let losses = train(&new_spec, &mut new_params, &tr, &cfg(3)).unwrap().losses();
    assert!(losses.iter().all(|l| l.is_finite()));
    let after = probe(&new_params).layer_input(junction).clone();
    assert_eq!(trunk_bits(&new_spec, &new_params, &trunk), trunk_bits(&new_spec, &params, &trunk));
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&before), bits(&after));
}

#[test]
fn frozen_tensors_survive_many_steps() {
    let (tr, _) = tiny_set(8, 1);
    let mut spec = build_model(&ModelVariant::new(VariantKind::Mlp3, 1, 4, 3)).unwrap();
    for l in &mut spec.layers[..6] {
        l.frozen = true;
    }
    let params0 = init_params::<f32>(&spec, 4).unwrap();
    let mut params = params0.clone();
    let trunk = frozen_layers(&spec);
    train(&spec, &mut params, &tr, &cfg(4)).unwrap();
    assert_eq!(trunk_bits(&spec, &params, &trunk), trunk_bits(&spec, &params0, &trunk));
    assert_ne!(params.layers[spec.layers.len() - 2], params0.layers[spec.layers.len() - 2]);

    // The backward pass never reports a gradient for a frozen layer.
    let x = hstl_core::train::batch_tensor::<f32>(&tr, &[0, 1, 2, 3]).unwrap();
    let trace = forward(&spec, &params, &x, Mode::Train, &mut Pcg32::seeded(1)).unwrap();
    let labels: Vec<usize> = tr.targets()[..4].to_vec();
    let g = backward(&spec, &params, &trace, &labels).unwrap();
    assert!(trunk.iter().all(|&i| g.layers[i].is_none()));
}

#[test]
fn accuracy_ignores_sample_order() {
    let (tr, te) = tiny_set(6, 3);
    let spec = build_model(&ModelVariant::new(VariantKind::Mlp2, 3, 4, 3)).unwrap();
    let mut params = init_params::<f32>(&spec, 3).unwrap();
    train(&spec, &mut params, &tr, &cfg(1)).unwrap();
    let base = evaluate(&spec, &params, &te).unwrap();
    let mut rng = Pcg32::seeded(11);
    for _ in 0..5 {
        let mut order: Vec<usize> = (0..te.len()).collect();
        rng.shuffle(&mut order);
        let m = evaluate(&spec, &params, &te.subset(&order)).unwrap();
        assert_eq!(m.overall_accuracy, base.overall_accuracy);
        assert_eq!(m.average_accuracy, base.average_accuracy);
        assert_eq!(m.confusion, base.confusion);
    }
}

#[test]
fn overfit_map_reproduces_ground_truth() {
    let scene = generate_synthetic_scene(&SynthSpec { noise_sigma: 0.0, ..synth(21) }).unwrap();
    let pca = fit_pca(&scene.cube, 4, PcaOptions::default()).unwrap();
    let reduced = hstl_core::prep::apply_pca(&scene.cube, &pca).unwrap();
    let all = flatten_patches(extract_patches(&reduced, &scene.labels, 3, 3).unwrap());
    let spec = build_model(&ModelVariant::new(VariantKind::Mlp2, 3, 4, 3)).unwrap();
    let mut params = init_params::<f32>(&spec, 5).unwrap();
    train(&spec, &mut params, &all, &cfg(30)).unwrap();
    let map = hstl_core::train::predict_map(&spec, &params, &scene, &pca, 3, true).unwrap();
    assert_eq!(map, scene.labels);
}

use proptest::prelude::*;
use rand::{Rng, RngCore};

use sodbench_core::attacks::{train_patch, PatchTrainSpec};
use sodbench_core::dataset::Sample;
use sodbench_core::eval::{dataset_score, max_fbeta, threshold, FBetaConfig, StdMode};
use sodbench_core::imagekit::{load_image, save_image, BinaryMask, Image, RngStream, SaliencyMap};
use sodbench_core::models::gp::{GpModel, GpProgram};
use sodbench_core::models::{HeuristicModel, LinearToyModel, SodModel};
use sodbench_core::noise::{salt_pepper_noise, SaltPepperMode};

const PROGRAMS: [&str; 6] = [
    "gray",
    "(div red (sub green green))",
    "(sq (sq (sq (mul gray gray))))",
    "(norm (sobel (blur smooth-blue)))",
    "(abs (sub gray (blur gray)))",
    "(erode (dilate (div (sq red) (add blue smooth-gray))))",
];

fn image_strategy() -> impl Strategy<Value = Image> {
    (1usize..7, 1usize..7).prop_flat_map(|(h, w)| {
        let value = prop_oneof![Just(0.0), Just(255.0), 0.0f64..=255.0];
        proptest::collection::vec(value, h * w * 3).prop_map(move |d| Image::new(h, w, d).unwrap())
    })
}

fn models_for(img: &Image, seed: u64) -> Vec<Box<dyn SodModel>> {
    let (h, w) = img.dims();
    let mut rng = RngStream::new(seed);
    let weights = (0..h * w * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut models: Vec<Box<dyn SodModel>> = vec![
        Box::new(LinearToyModel::new(h, w, weights, rng.random_range(-50.0..50.0)).unwrap()),
        Box::new(HeuristicModel::default()),
    ];
    for p in PROGRAMS {
        models.push(Box::new(GpModel::new("gp", p.parse::<GpProgram>().unwrap())));
    }
    models
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_stay_in_unit_interval(img in image_strategy(), seed in any::<u64>()) {
        for m in models_for(&img, seed) {
            let map = m.predict(&img).unwrap();
            prop_assert_eq!(map.dims(), img.dims());
            prop_assert!(map.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn max_fbeta_is_one_iff_some_threshold_reproduces_truth(
        map in proptest::collection::vec(0.0f64..1.0, 16),
        truth in proptest::collection::vec(any::<bool>(), 16),
        m in 1usize..40,
    ) {
        prop_assume!(truth.iter().any(|&g| g));
        let map = SaliencyMap::new(4, 4, map).unwrap();
        let truth = BinaryMask::new(4, 4, truth).unwrap();
        let cfg = FBetaConfig { beta_squared: 0.3, thresholds: m };
        let f = max_fbeta(&map, &truth, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        let exact = (1..=m).any(|k| map.threshold(threshold(k, m)) == truth);
        prop_assert_eq!(f == 1.0, exact);
    }

    #[test]
    fn dataset_score_ignores_order(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = RngStream::new(seed);
        let data: Vec<Sample> = (0..n)
            .map(|i| {
                let img = Image::from_fn(5, 5, |_, _, _| rng.random_range(0.0..=255.0));
                let cy = rng.random_range(0..5);
                Sample::new(format!("s{i}"), img, BinaryMask::from_fn(5, 5, |y, _| y == cy))
            })
            .collect();
        let mut shuffled = data.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let model = HeuristicModel::default();
        let cfg = FBetaConfig::default();
        let a = dataset_score(&model, &data, &cfg, StdMode::Population).unwrap();
        let b = dataset_score(&model, &shuffled, &cfg, StdMode::Population).unwrap();
        prop_assert_eq!(a.mean, b.mean);
        prop_assert_eq!(a.std, b.std);
        prop_assert_eq!(a.scored, b.scored);
    }

    #[test]
    fn salt_pepper_only_writes_extremes(seed in any::<u64>(), density in 0.0f64..=1.0) {
        let img = Image::from_fn(6, 6, |y, x, c| (y * 40 + x * 7 + c) as f64 + 0.25);
        for mode in [SaltPepperMode::PerChannel, SaltPepperMode::Luma] {
            let out = salt_pepper_noise(&img, density, mode, &mut RngStream::new(seed)).unwrap();
            for (o, i) in out.data().iter().zip(img.data()) {
                prop_assert!(o == i || *o == 0.0 || *o == 255.0);
            }
        }
    }

    #[test]
    fn byte_images_survive_save_and_load(data in proptest::collection::vec(0u8..=255, 4 * 3 * 3), ext in prop_oneof![Just("png"), Just("ppm")]) {
        let img = Image::new(4, 3, data.into_iter().map(f64::from).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("x.{ext}"));
        save_image(&img, &path).unwrap();
        prop_assert_eq!(load_image(&path).unwrap(), img);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trained_patches_stay_in_range(seed in any::<u64>(), side in 1usize..5, step in 1.0f64..120.0) {
        let mut rng = RngStream::new(seed);
        let weights = (0..8 * 8 * 3).map(|_| rng.random_range(-0.05..0.05)).collect();
        let model = LinearToyModel::new(8, 8, weights, 0.0).unwrap();
        let img = Image::from_fn(8, 8, |_, _, _| rng.random_range(0.0..=255.0));
        let data = [Sample::new("a", img, BinaryMask::from_fn(8, 8, |y, x| y < 4 && x < 4))];
        let spec = PatchTrainSpec { iterations: 6, step_size: step, placements_per_step: 2, eval_placements: 2, seed, fixed_placement: None };
        let out = train_patch(&data, &model, &spec, side).unwrap();
        prop_assert!(out.patch.data().iter().all(|v| (0.0..=255.0).contains(v)));
    }
}

#[test]
fn equal_seeds_give_equal_million_samples() {
    let mut a = RngStream::new(0xDEAD_BEEF);
    let mut b = RngStream::new(0xDEAD_BEEF);
    for _ in 0..1_000_000 {
        assert_eq!(a.next_u64(), b.next_u64());
    }
}

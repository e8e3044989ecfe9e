use proptest::prelude::*;
use proptest::sample::subsequence;
use qrlab::cnn::softmax;
use qrlab::datagen::{plan_record, record_from_seed, synthesize, PayloadSpec};
use qrlab::degrade::{inversion_budget, invert_modules, random_distortion, ruled_surface, Noise};
use qrlab::qr::matrix::{decode_format, read_format_copies};
use qrlab::qr::{decode_image, decode_matrix, encode_matrix, render, select_version, EcLevel, QrSpec};
use qrlab::raster::{gaussian_blur, otsu_threshold, resize, warp, DisplacementField, Image};
use qrlab::rs::{rs_decode, rs_encode, RsBlock};

fn ec_level() -> impl Strategy<Value = EcLevel> {
    prop::sample::select(EcLevel::ALL.to_vec())
}

fn ascii_text(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(0x20u8..0x7f, 1..=max).prop_map(|b| String::from_utf8(b).unwrap())
}

fn unit_image() -> impl Strategy<Value = Image<f64>> {
    (4usize..24, 4usize..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h).prop_map(move |px| Image::from_pixels(w, h, px).unwrap())
    })
}

fn in_unit_range(img: &Image<f64>) -> bool {
    img.pixels().iter().all(|v| (0.0..=1.0).contains(v))
}

fn small_matrix() -> impl Strategy<Value = qrlab::qr::ModuleMatrix> {
    (ascii_text(12), ec_level()).prop_map(|(t, ec)| encode_matrix(&QrSpec::new(&t, ec)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rs_corrects_up_to_capacity(
        (data, ecc, errors) in (1usize..=60, 1usize..=15).prop_flat_map(|(k, half)| {
            let n = k + 2 * half;
            (
                prop::collection::vec(any::<u8>(), k),
                Just(2 * half),
                subsequence((0..n).collect::<Vec<_>>(), 0..=half)
                    .prop_flat_map(|pos| {
                        let m = pos.len();
                        (Just(pos), prop::collection::vec(1u8..=255, m))
                    }),
            )
        })
    ) {
        let block = rs_encode(&data, ecc).unwrap();
        let mut cw = block.codeword();
        let (pos, mag) = errors;
        for (&p, &e) in pos.iter().zip(&mag) {
            cw[p] ^= e;
        }
        let (fixed, count) = rs_decode(&RsBlock::from_codeword(&cw, ecc)).unwrap();
        prop_assert_eq!(fixed, data);
        prop_assert_eq!(count, pos.len());
    }

    #[test]
    fn encoding_is_deterministic_and_format_reads_back(text in ascii_text(40), ec in ec_level(), mask in 0u8..8) {
        let spec = QrSpec::new(&text, ec).with_mask(mask);
        let a = encode_matrix(&spec).unwrap();
        prop_assert_eq!(&a, &encode_matrix(&spec).unwrap());
        prop_assert_eq!(decode_format(read_format_copies(&a)), Some((ec, mask)));
        prop_assert_eq!(decode_matrix(&a).unwrap(), text.into_bytes());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn render_then_decode_is_identity(
        text in ascii_text(30),
        ec in ec_level(),
        extra in 0u8..10,
        scale in prop::sample::select(vec![1usize, 4, 8]),
        quiet in prop::sample::select(vec![0usize, 4]),
    ) {
        let min = select_version(text.len(), ec).unwrap();
        let version = (min + extra).min(10);
        let m = encode_matrix(&QrSpec::new(&text, ec).with_version(version)).unwrap();
        prop_assert_eq!(m.version(), version);
        let img: Image<f64> = render(&m, scale, quiet);
        prop_assert_eq!(decode_image(&img).unwrap(), text.into_bytes());
    }

    #[test]
    fn successful_decodes_are_never_wrong(text in ascii_text(20), ec in ec_level(), pct in 0.0f64..6.0, seed in any::<u64>()) {
        let m = encode_matrix(&QrSpec::new(&text, ec)).unwrap();
        let img: Image<f64> = render(&invert_modules(&m, pct, seed), 1, 0);
        if let Ok(bytes) = decode_image(&img) {
            prop_assert_eq!(bytes, text.into_bytes());
        }
    }

    #[test]
    fn inversion_flips_exactly_the_budget(m in small_matrix(), pct in 0.0f64..=100.0, seed in any::<u64>()) {
        let flipped = invert_modules(&m, pct, seed);
        prop_assert_eq!(m.hamming(&flipped), inversion_budget(m.side(), pct));
        prop_assert_eq!(&flipped, &invert_modules(&m, pct, seed));
    }

    #[test]
    fn nonzero_inversion_depends_on_seed(m in small_matrix(), pct in 5.0f64..=95.0, seed in any::<u64>()) {
        prop_assert_ne!(invert_modules(&m, pct, seed), invert_modules(&m, pct, seed ^ 1));
    }

    #[test]
    fn warps_stay_in_unit_range(img in unit_image(), sigma in 0.0f64..10.0, maxdelta in 0.0f64..8.0, mag in 0.0f64..40.0, seed in any::<u64>()) {
        let d = random_distortion(&img, sigma, maxdelta, seed);
        prop_assert!(in_unit_range(&d));
        prop_assert_eq!(&d, &random_distortion(&img, sigma, maxdelta, seed));
        let r = ruled_surface(&img, mag, seed);
        prop_assert!(in_unit_range(&r));
        prop_assert_eq!(&r, &ruled_surface(&img, mag, seed));
    }

    #[test]
    fn raster_ops_stay_in_unit_range(img in unit_image(), sigma in 0.1f64..5.0, dx in -5.0f64..5.0, dy in -5.0f64..5.0, w in 1usize..40, h in 1usize..40) {
        prop_assert!(in_unit_range(&gaussian_blur(&img, sigma)));
        let field = DisplacementField::constant(img.width(), img.height(), dx, dy);
        prop_assert!(in_unit_range(&warp(&img, &field).unwrap()));
        prop_assert!(in_unit_range(&resize(&img, w, h)));
    }

    #[test]
    fn otsu_ignores_pixel_positions(img in unit_image(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut px = img.pixels().to_vec();
        px.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let shuffled = Image::from_pixels(img.width(), img.height(), px).unwrap();
        prop_assert_eq!(otsu_threshold(&img).ok(), otsu_threshold(&shuffled).ok());
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-15.0f64..15.0, 2..8), shift in -50.0f64..50.0) {
        let p = softmax(&z);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let moved: Vec<f64> = z.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(softmax(&moved)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn records_regenerate_from_their_seed(
        class in 0u8..2,
        ec in ec_level(),
        noise in prop::sample::select(vec![Noise::inversion(7.0), Noise::rdist(3.0), Noise::ruled(20.0), Noise::FgBgSelection]),
        item in 0usize..1000,
        master in any::<u64>(),
    ) {
        let spec = PayloadSpec::health_first();
        let rec = plan_record(&spec, class, ec, 0, noise, item, master);
        let again = record_from_seed(&spec, class, ec, noise, rec.seed, rec.image_path.clone());
        prop_assert_eq!(&again, &rec);
        prop_assert_eq!(synthesize(&rec).unwrap(), synthesize(&again).unwrap());
    }
}

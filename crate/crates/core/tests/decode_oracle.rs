mod common;

use common::{max_rel_err, naive_forward, random_input, random_model};
use modsplit::analysis::grouping::{groups_for_width, GroupingMap};
use modsplit::decoder::{decode, keep_plan, repair, retained_kernel_set, Genome};
use modsplit::engine::Forward;
use modsplit::store::{count_flops, count_kernels, presets, Model};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEQUENTIAL: &str = "classes = 4\ninput = 2x10x10\nlayers:\n\
    conv out=12 kernel=3 pad=1\n\
    conv out=16 kernel=3 pad=1\n\
    maxpool window=2 stride=2\n\
    conv out=20 kernel=3 pad=1\n\
    conv out=16 kernel=3 pad=0\n\
    flatten\nfc out=10\nfc out=4\n";

fn shuffled_grouping(model: &Model, seed: u64) -> GroupingMap {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GroupingMap::from_orders(
        &model.plan,
        &model.spec.residual_pairs,
        model.num_classes(),
        groups_for_width,
        |_, conv| {
            let mut o: Vec<usize> = (0..model.plan.convs[conv].out_channels).collect();
            o.shuffle(&mut rng);
            o
        },
    )
    .unwrap()
}

fn random_genome(grouping: &GroupingMap, rng: &mut ChaCha8Rng) -> Genome {
    let keep = rng.gen_range(0.1..0.9);
    let bits = (0..grouping.total_bits()).map(|_| rng.gen_bool(keep)).collect();
    let class = rng.gen_range(0..grouping.num_classes());
    repair(&Genome::new(bits, class), grouping)
}

#[test]
fn sequential_decode_equals_zero_mask() {
    let model = random_model(SEQUENTIAL, 1);
    assert!(model.total_kernels() <= 64);
    let grouping = shuffled_grouping(&model, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let genome = random_genome(&grouping, &mut rng);
        let art = decode(&model, &grouping, &genome, true).unwrap();
        let mask = keep_plan(&grouping, &genome).unwrap().to_mask(&model.conv_widths());
        for _ in 0..5 {
            let x = random_input(&model, &mut rng);
            let small = art.model.forward(&x).unwrap();
            let masked = Forward::new(&model).with_mask(&mask).logits(&x).unwrap();
            let masked64: Vec<f64> = masked.data().iter().map(|&v| v as f64).collect();
            let err = max_rel_err(small.data(), &masked64);
            assert!(err < 1e-5, "{genome:?}: {err}");
        }
    }
}

#[test]
fn residual_decode_equals_loop_nest() {
    let model = random_model(&presets::rescnn_desk_text(3), 4);
    let grouping = shuffled_grouping(&model, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let genome = random_genome(&grouping, &mut rng);
        let art = decode(&model, &grouping, &genome, true).unwrap();
        let x = random_input(&model, &mut rng);
        let err = max_rel_err(art.model.forward(&x).unwrap().data(), &naive_forward(&art.model, x.data()));
        assert!(err < 1e-5, "{genome:?}: {err}");
        for &(s, d) in &art.model.spec.residual_pairs {
            assert_eq!(art.model.plan.convs[s].out_channels, art.model.plan.convs[d].out_channels);
        }
    }
}

#[test]
fn decode_leaves_parent_untouched_and_is_deterministic() {
    let model = random_model(SEQUENTIAL, 8);
    let before = model.clone();
    let grouping = shuffled_grouping(&model, 9);
    let genome = random_genome(&grouping, &mut ChaCha8Rng::seed_from_u64(1));
    let a = decode(&model, &grouping, &genome, true).unwrap();
    let b = decode(&model, &grouping, &genome, true).unwrap();
    assert_eq!(a, b);
    assert_eq!(model, before);
    assert_eq!(a.parent_fingerprint, model.fingerprint());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fewer_groups_never_grow_the_module(seed in any::<u64>()) {
        let model = random_model(&presets::rescnn_desk_text(3), 11);
        let grouping = shuffled_grouping(&model, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let big = random_genome(&grouping, &mut rng);
        let mut small = big.clone();
        for b in small.bits.iter_mut() {
            if *b && rng.gen_bool(0.3) {
                *b = false;
            }
        }
        prop_assume!(small.first_empty_segment(&grouping).is_none());
        let a = decode(&model, &grouping, &big, false).unwrap();
        let b = decode(&model, &grouping, &small, false).unwrap();
        prop_assert!(count_kernels(&b.model.spec) <= count_kernels(&a.model.spec));
        prop_assert!(count_flops(&b.model.spec).unwrap() <= count_flops(&a.model.spec).unwrap());
        prop_assert_eq!(b.retained.len(), count_kernels(&b.model.spec));
        prop_assert_eq!(&retained_kernel_set(&grouping, &small).unwrap(), &b.retained);
    }

    #[test]
    fn repaired_genomes_always_decode(seed in any::<u64>()) {
        let model = random_model(SEQUENTIAL, 13);
        let grouping = shuffled_grouping(&model, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits = (0..grouping.total_bits()).map(|_| rng.gen_bool(0.05)).collect();
        let g = repair(&Genome::new(bits, 0), &grouping);
        prop_assert!(decode(&model, &grouping, &g, false).is_ok());
    }
}

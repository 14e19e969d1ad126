mod common;

use common::{max_rel_err, naive_forward, random_input, random_model};
use modsplit::store::presets;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PADDED: &str = "classes = 5\ninput = 2x9x9\nlayers:\n\
    conv out=6 kernel=3 stride=2 pad=1\n\
    conv out=6 kernel=3 stride=1 pad=1\n\
    maxpool window=2 stride=1\n\
    conv out=4 kernel=2 stride=1 pad=0\n\
    flatten\nfc out=7\nfc out=5\nresidual:\n0 -> 1\n";

#[test]
fn engine_matches_loop_nest() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let texts = [
        PADDED.to_string(),
        presets::simcnn_desk_text(4),
        presets::rescnn_desk_text(3),
        presets::simple_desk_text(2),
    ];
    for (i, text) in texts.iter().enumerate() {
        let model = random_model(text, i as u64);
        for _ in 0..5 {
            let x = random_input(&model, &mut rng);
            let fast = model.forward(&x).unwrap();
            let slow = naive_forward(&model, x.data());
            let err = max_rel_err(fast.data(), &slow);
            assert!(err < 1e-5, "model {i}: relative error {err}");
        }
    }
}

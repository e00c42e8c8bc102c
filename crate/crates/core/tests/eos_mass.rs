use beamlab::augment::{msr, MsrConfig, OutputSize};
use beamlab::corpus::{build_vocabulary, generate_synthetic, LengthLaw, Side, SynthConfig, EOS};
use beamlab::model::{train_with_vocab, DecoderState, ModelConfig, TransducerModel};

/// Mean p(EOS) at target positions `lo..=hi` along the gold prefixes of
/// test pairs longer than `hi`.
fn mean_eos_mass(model: &TransducerModel, pairs: &[beamlab::corpus::SentencePair], lo: usize, hi: usize) -> f64 {
    let (mut sum, mut n) = (0.0, 0);
    for pair in pairs.iter().filter(|p| p.target.len() > hi) {
        let y = model.target_vocab.encode(&pair.target);
        let mut state = DecoderState::initial(model, model.encode_source(&pair.source));
        for (t, &tok) in y.iter().enumerate().take(hi) {
            if t + 1 >= lo {
                sum += model.next_distribution(&state).prob(EOS);
                n += 1;
            }
            state.advance(tok);
        }
    }
    assert!(n > 0);
    sum / n as f64
}

#[test]
fn msr_lowers_eos_mass_past_training_lengths() {
    let splits = generate_synthetic(&SynthConfig {
        train_size: 1000,
        dev_size: 1,
        test_size: 200,
        length_law: LengthLaw::Uniform { lo: 5, hi: 10 },
        test_length_law: Some(LengthLaw::Uniform { lo: 21, hi: 30 }),
        seed: 6,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = ModelConfig {
        lambda: 0.9,
        ..ModelConfig::default()
    };
    let sv = build_vocabulary(&splits.train, Side::Source, 1);
    let tv = build_vocabulary(&splits.train, Side::Target, 1);
    let base = train_with_vocab(&splits.train, &cfg, sv.clone(), tv.clone()).unwrap();
    let aug = msr(
        &splits.train,
        &MsrConfig {
            max_sentences: 4,
            size: OutputSize::Multiplier(5.0),
            seed: 3,
        },
    )
    .unwrap();
    let boosted = train_with_vocab(&aug.corpus, &cfg, sv, tv).unwrap();
    let before = mean_eos_mass(&base, splits.test.pairs(), 10, 20);
    let after = mean_eos_mass(&boosted, splits.test.pairs(), 10, 20);
    assert!(after < before, "EOS mass {before} -> {after}");
}

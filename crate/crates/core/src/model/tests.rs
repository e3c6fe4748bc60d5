use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ctc::FlagSpace;
use crate::diffcore::{GradCheckOptions, Graph, Tensor};
use crate::notation::{
    Accidental, Clef, Duration, Note, PitchToken, RhythmToken, ScoreEvent, StaffSymbol, Step, SymbolicScore,
};

/// 16-pixel-high encoder small enough for finite differences.
fn tiny(kind: DecoderKind) -> ModelConfig {
    ModelConfig {
        decoder: kind,
        encoder: EncoderConfig {
            input_height: 16,
            filters: vec![2, 3, 3, 4],
            projection: 5,
            lstm_hidden: 3,
            lstm_layers: 2,
            ..EncoderConfig::default()
        },
        flag_staff_latent: 3,
        flag_note_latent: 4,
        rnn_hidden: 3,
    }
}

fn noise(rng: &mut impl Rng, h: usize, w: usize) -> Tensor {
    Tensor::new(vec![1, h, w], (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

fn slices(model: &Model, image: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let x = g.input(image.clone());
    let s = encode(&mut g, model.params(), &model.config().encoder, x).unwrap();
    g.value(s).clone()
}

#[test]
fn width_is_downsampled_by_four() {
    let model = Model::new(tiny(DecoderKind::Baseline), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = slices(&model, &noise(&mut rng, 16, 64));
    assert_eq!(s.shape(), [16, 6]);
    assert!(s.all_finite());
    let cfg = &model.config().encoder;
    assert_eq!((cfg.height_factor(), cfg.width_factor()), (16, 4));
    let mut prev = 0;
    for w in 4..80 {
        let n = cfg.slices(w);
        assert_eq!(n, w.div_ceil(4));
        assert!(n >= prev);
        prev = n;
    }
    assert_eq!(slices(&model, &noise(&mut rng, 16, 37)).shape()[0], 10);
    let mut g = Graph::new();
    let narrow = g.input(noise(&mut rng, 16, 3));
    assert!(matches!(
        encode(&mut g, model.params(), cfg, narrow),
        Err(ModelError::TooNarrow { width: 3, min: 4 })
    ));
    let tall = g.input(noise(&mut rng, 32, 8));
    assert!(matches!(encode(&mut g, model.params(), cfg, tall), Err(ModelError::InputShape { .. })));
}

#[test]
fn first_slice_sees_the_last_column() {
    let model = Model::new(tiny(DecoderKind::Baseline), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = noise(&mut rng, 16, 64);
    let mut b = a.clone();
    for y in 0..16 {
        b.data_mut()[y * 64 + 63] += 0.5;
    }
    let (sa, sb) = (slices(&model, &a), slices(&model, &b));
    let diff: f64 = sa.row(0).iter().zip(sb.row(0)).map(|(x, y)| (x - y).abs()).sum();
    assert!(diff > 1e-9, "first slice unchanged ({diff})");
}

#[test]
fn different_images_give_different_encodings() {
    let model = Model::new(tiny(DecoderKind::Baseline), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let encs: Vec<Tensor> = (0..5).map(|_| slices(&model, &noise(&mut rng, 16, 32))).collect();
    for i in 0..encs.len() {
        for j in i + 1..encs.len() {
            let d: f64 = encs[i].data().iter().zip(encs[j].data()).map(|(a, b)| (a - b).abs()).sum();
            assert!(d > 1e-6);
        }
    }
}

#[test]
fn parameter_counts_follow_the_config() {
    for kind in DecoderKind::ALL {
        for cfg in [tiny(kind), ModelConfig::desk(kind), ModelConfig::new(kind)] {
            let stored = Model::new(cfg.clone(), 0).unwrap().params().num_elements();
            assert_eq!(stored, cfg.param_count(), "{kind}");
        }
    }
    // hand count of the tiny baseline:
    // convs 2*9+2, 3*2*9+3, 3*3*9+3, 4*3*9+4 = 20+57+84+112 = 273
    // projection (4*1+1)*5 = 25
    // lstm layer 0: 2*(5+3+1)*12 = 216, layer 1: 2*(6+3+1)*12 = 240
    // heads (6+1)*256 + (6+1)*66 = 2254
    assert_eq!(tiny(DecoderKind::Baseline).param_count(), 273 + 25 + 216 + 240 + 2254);
    // full encoder: convs 320+18496+73856+295168, projection from
    // 256 channels * 8 rows = 2048 features, (2048+1)*512,
    // lstm 2*(512+256+1)*1024 twice
    assert_eq!(EncoderConfig::default().param_count(), 387840 + 1049088 + 2 * 1574912);
}

#[test]
fn baseline_rows_normalize() {
    let model = Model::new(tiny(DecoderKind::Baseline), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = Graph::new();
    let Outputs::Baseline { pitch, rhythm } = model.forward(&mut g, &noise(&mut rng, 16, 40)).unwrap() else {
        panic!("wrong head")
    };
    for v in [pitch, rhythm] {
        assert_eq!(g.value(v).shape()[0], 10);
        let sm = g.softmax(v).unwrap();
        let t = g.value(sm);
        for r in 0..t.shape()[0] {
            assert!((t.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn flag_head_dimensions() {
    let model = Model::new(tiny(DecoderKind::Flag), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g = Graph::new();
    let Outputs::Flag { staff, rhythm, accidental } = model.forward(&mut g, &noise(&mut rng, 16, 24)).unwrap() else {
        panic!("wrong head")
    };
    let s = FlagSpace::FULL;
    assert_eq!(g.value(staff).shape(), [6, s.staff_bits]);
    assert_eq!(g.value(rhythm).shape(), [6, s.rows * s.rhythm_classes]);
    assert_eq!(g.value(accidental).shape(), [6, s.rows * s.accidental_classes]);
    let sig = g.sigmoid(staff);
    assert!(g.value(sig).data().iter().all(|&p| p > 0.0 && p < 1.0));
    let z = g.input(Tensor::zeros(&[2, 3]));
    let z = g.sigmoid(z);
    assert!(g.value(z).data().iter().all(|&p| p == 0.5));
}

fn rnn_steps(model: &Model, image: &Tensor) -> Vec<Tensor> {
    let mut g = Graph::new();
    let Outputs::Rnn { pitch, rhythm } = model.forward(&mut g, image).unwrap() else {
        panic!("wrong head")
    };
    assert_eq!((pitch.len(), rhythm.len()), (10, 10));
    pitch.iter().map(|v| g.value(*v).clone()).collect()
}

#[test]
fn rnn_steps_share_a_classifier_and_a_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let image = noise(&mut rng, 16, 32);
    let mut model = Model::new(tiny(DecoderKind::Rnn), 6).unwrap();
    let base = rnn_steps(&model, &image);
    // step 1 never reads the recurrent weights; later steps do
    model.params_mut().get_mut("dec.cell.w").unwrap().data_mut()[0] += 0.7;
    let moved = rnn_steps(&model, &image);
    assert_eq!(base[0], moved[0]);
    for k in 1..10 {
        assert_ne!(base[k], moved[k], "step {k}");
    }
    model.params_mut().get_mut("dec.cell.w").unwrap().data_mut().fill(0.0);
    let flat = rnn_steps(&model, &image);
    for k in 1..10 {
        assert_eq!(flat[k], flat[0]);
    }
}

fn tiny_score() -> SymbolicScore {
    let q = RhythmToken::plain(Duration::Quarter);
    let note = |s: Step, o: u8, v: u8| {
        Note::pitched(Clef::G2, PitchToken::note(s, o, Accidental::None).unwrap(), q, v).unwrap()
    };
    SymbolicScore::new(vec![
        ScoreEvent::Staff(StaffSymbol::Clef(Clef::G2)),
        ScoreEvent::notes(vec![note(Step::E, 4, 1), note(Step::C, 5, 0)]),
        ScoreEvent::Staff(StaffSymbol::Barline),
    ])
}

/// Finite-difference settings for whole-model checks. Losses reach the
/// thousands for the flag decoder, so entries smaller than the rounding scale
/// of the loss are compared absolutely.
fn model_check_options(seed: u64) -> GradCheckOptions {
    GradCheckOptions {
        step: 1e-4,
        max_entries_per_param: 6,
        roundoff_ulps: 10.0,
        seed,
        ..GradCheckOptions::default()
    }
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for kind in DecoderKind::ALL {
        let targets = Targets::from_score(kind, &tiny_score()).unwrap();
        let mut usable = 0;
        // a point where some tensor could only be probed across a leaky-ReLU
        // or max-pool switch has no finite-difference oracle; move on
        for seed in 0..20 {
            let model = Model::new(tiny(kind), seed).unwrap();
            let image = noise(&mut ChaCha8Rng::seed_from_u64(100 + seed), 16, 64);
            let report = model.grad_check(&image, &targets, &model_check_options(seed)).unwrap();
            if report.params.iter().any(|p| p.checked == 0) {
                continue;
            }
            assert!(report.passed(), "{kind} seed {seed}: {:?}", report.failures());
            usable += 1;
            if usable == 5 {
                break;
            }
        }
        assert_eq!(usable, 5, "{kind}: too few points away from kinks");
    }
}

#[test]
fn mismatched_targets_are_rejected() {
    let model = Model::new(tiny(DecoderKind::Flag), 0).unwrap();
    let mut g = Graph::new();
    let out = model.forward(&mut g, &Tensor::zeros(&[1, 16, 16])).unwrap();
    let t = Targets::from_score(DecoderKind::Baseline, &tiny_score()).unwrap();
    assert!(matches!(
        Model::loss(&mut g, &out, &t),
        Err(ModelError::KindMismatch {
            outputs: DecoderKind::Flag,
            targets: DecoderKind::Baseline
        })
    ));
}

#[test]
fn checkpoint_round_trip() {
    let model = Model::new(tiny(DecoderKind::Rnn), 9).unwrap();
    let mut buf = Vec::new();
    model.to_checkpoint().write_to(&mut buf).unwrap();
    let ck = crate::diffcore::Checkpoint::read_from(&mut buf.as_slice()).unwrap();
    let back = Model::from_checkpoint(&ck).unwrap();
    assert_eq!(back.config(), model.config());
    assert_eq!(back.params().as_map(), model.params().as_map());
    let mut wrong = ck.clone();
    wrong.tensors.remove("dec.cell.wx");
    assert!(Model::from_checkpoint(&wrong).is_err());
}

#[test]
fn one_hot_outputs_transcribe_exactly() {
    use crate::codecs::encode_advance;
    use crate::notation::{VocabKind, Vocabulary};
    let score = tiny_score();
    let want = encode_advance(&score);
    // baseline: a lattice peaked on each target with blanks between
    let lattice = |kind: VocabKind, ids: &[usize]| {
        let v = Vocabulary::new(kind).size();
        let mut data = vec![0.0; 2 * ids.len() * v];
        for (i, &k) in ids.iter().enumerate() {
            data[2 * i * v + k] = 9.0;
            data[(2 * i + 1) * v] = 9.0;
        }
        Tensor::new(vec![2 * ids.len(), v], data).unwrap()
    };
    let Targets::Baseline(t) = Targets::from_score(DecoderKind::Baseline, &score).unwrap() else {
        unreachable!()
    };
    let mut g = Graph::new();
    let pitch = g.input(lattice(VocabKind::AdvancePitch, &t.pitch));
    let rhythm = g.input(lattice(VocabKind::AdvanceRhythm, &t.rhythm));
    let tr = Model::transcribe(&g, &Outputs::Baseline { pitch, rhythm }).unwrap();
    assert_eq!((tr.pitch, tr.rhythm), (want.pitch.clone(), want.rhythm.clone()));

    let Targets::Rnn(streams) = Targets::from_score(DecoderKind::Rnn, &score).unwrap() else {
        unreachable!()
    };
    let mut g = Graph::new();
    let pitch = streams.iter().map(|s| g.input(lattice(VocabKind::MultiSeqPitch, &s.pitch))).collect();
    let rhythm = streams.iter().map(|s| g.input(lattice(VocabKind::MultiSeqRhythm, &s.rhythm))).collect();
    let tr = Model::transcribe(&g, &Outputs::Rnn { pitch, rhythm }).unwrap();
    assert_eq!((tr.pitch, tr.rhythm), (want.pitch.clone(), want.rhythm.clone()));

    let Targets::Flag(symbols) = Targets::from_score(DecoderKind::Flag, &score).unwrap() else {
        unreachable!()
    };
    let s = FlagSpace::FULL;
    let frames = 2 * symbols.len();
    let mut staff = vec![-9.0; frames * s.staff_bits];
    let mut rh = vec![0.0; frames * s.rows * s.rhythm_classes];
    let mut acc = vec![0.0; frames * s.rows * s.accidental_classes];
    for t in 0..frames {
        let sym = if t % 2 == 0 { symbols[t / 2].clone() } else { crate::ctc::FlagSymbol::blank(&s) };
        for (i, &on) in sym.bits.iter().enumerate() {
            staff[t * s.staff_bits + i] = if on { 9.0 } else { -9.0 };
        }
        for (r, &(rc, ac)) in sym.rows.iter().enumerate() {
            rh[(t * s.rows + r) * s.rhythm_classes + rc] = 9.0;
            acc[(t * s.rows + r) * s.accidental_classes + ac] = 9.0;
        }
    }
    let mut g = Graph::new();
    let staff = g.input(Tensor::new(vec![frames, s.staff_bits], staff).unwrap());
    let rhythm = g.input(Tensor::new(vec![frames, s.rows * s.rhythm_classes], rh).unwrap());
    let accidental = g.input(Tensor::new(vec![frames, s.rows * s.accidental_classes], acc).unwrap());
    let tr = Model::transcribe(&g, &Outputs::Flag { staff, rhythm, accidental }).unwrap();
    assert_eq!((tr.pitch, tr.rhythm), (want.pitch, want.rhythm));
}

#[test]
fn min_frames_counts_separating_blanks_in_every_stream() {
    use crate::ctc::{FlagSymbol, SequenceTargets};
    let seq = |p: &[usize], r: &[usize]| SequenceTargets {
        pitch: p.to_vec(),
        rhythm: r.to_vec(),
    };
    assert_eq!(Targets::Baseline(seq(&[1, 1, 2], &[3, 4])).min_frames(), 4);
    assert_eq!(Targets::Rnn(vec![seq(&[1], &[1]), seq(&[2, 2, 2], &[5])]).min_frames(), 5);
    let sp = FlagSpace::FULL;
    let mut a = FlagSymbol::blank(&sp);
    a.bits[0] = true;
    let mut b = FlagSymbol::blank(&sp);
    b.bits[1] = true;
    assert_eq!(Targets::Flag(vec![a.clone(), a.clone(), b]).min_frames(), 4);
}

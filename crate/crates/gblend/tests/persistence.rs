use gblend::checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
use gblend::config::RunConfig;
use gblend::trace::{decode_trace, encode_trace, TraceFile};
use gblend::GblendError;
use gblend_core::blend::{BlendWeights, LossTrace};
use gblend_core::model::{Model, ModelConfig, SequenceBatch, SequenceView};
use gblend_core::rng::Rng;
use gblend_core::signal::{RawEpoch, TfImage, EPOCH_SAMPLES, FREQ_BINS, TIME_FRAMES};
use gblend_core::train::Mode;
use proptest::prelude::*;

fn small_config() -> ModelConfig {
    ModelConfig { seq_len: 2, scale: 0.0625, channels: 2, ..ModelConfig::default() }
}

fn batch(seed: u64, c: usize) -> SequenceBatch {
    let mut rng = Rng::seeded(seed);
    let raw: Vec<Vec<RawEpoch>> = (0..2)
        .map(|_| (0..2).map(|_| RawEpoch::unlabeled((0..EPOCH_SAMPLES * c).map(|_| rng.normal()).collect(), c).unwrap()).collect())
        .collect();
    let tf: Vec<Vec<TfImage>> = (0..2)
        .map(|_| (0..2).map(|_| TfImage::new((0..FREQ_BINS * TIME_FRAMES * c).map(|_| rng.normal()).collect(), c).unwrap()).collect())
        .collect();
    let labels: Vec<Vec<u8>> = (0..2).map(|_| vec![rng.below(5) as u8, rng.below(5) as u8]).collect();
    let views: Vec<SequenceView> = (0..2).map(|i| SequenceView { raw: &raw[i], tf: &tf[i], labels: &labels[i] }).collect();
    SequenceBatch::assemble(&views).unwrap()
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = Model::new(small_config(), 11).unwrap();
    let bytes = encode_checkpoint(&model);
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back.config(), model.config());
    for ((n1, a), (n2, b)) in model.params().iter().zip(back.params().iter()) {
        assert_eq!(n1, n2);
        assert_eq!(a.shape(), b.shape());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{n1}");
    }
    assert_eq!(encode_checkpoint(&back), bytes);

    let b = batch(3, 2);
    let (p, q) = (model.predict(&b).unwrap(), back.predict(&b).unwrap());
    for (x, y) in [(&p.y1, &q.y1), (&p.y2, &q.y2), (&p.ystar, &q.ystar)] {
        assert!(x.data().iter().zip(y.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn checkpoint_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.gbck");
    let model = Model::new(small_config(), 2).unwrap();
    save_checkpoint(&path, &model).unwrap();
    assert_eq!(encode_checkpoint(&load_checkpoint(&path).unwrap()), encode_checkpoint(&model));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let bytes = encode_checkpoint(&Model::new(small_config(), 1).unwrap());
    let fails = |b: &[u8], needle: &str| match decode_checkpoint(b) {
        Err(GblendError::Format { msg, .. }) => assert!(msg.contains(needle), "{msg:?} lacks {needle:?}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("accepted a corrupt checkpoint"),
    };
    fails(&bytes[..bytes.len() - 3], "truncated");
    fails(&[bytes.as_slice(), &[0]].concat(), "trailing");
    let mut b = bytes.clone();
    b[0] = b'X';
    fails(&b, "magic");
    let mut b = bytes.clone();
    b[8] = 9;
    fails(&b, "version");

    let name = b"raw/conv0";
    let at = bytes.windows(name.len()).position(|w| w == name).unwrap();
    let mut b = bytes.clone();
    b[at] = b'q';
    fails(&b, "expected \"raw/conv0");
}

fn random_trace(rng: &mut Rng, n: usize) -> TraceFile {
    let mut trace = LossTrace::new();
    for i in 0..n {
        let l = |rng: &mut Rng| [0, 1, 2].map(|_| rng.uniform() * 3.0);
        let (tr, va) = (l(rng), l(rng));
        trace.record(i * 7, tr, va).unwrap();
        trace.weights.push(BlendWeights::normalized([rng.uniform(), rng.uniform(), rng.uniform() + 1e-3]).unwrap());
    }
    TraceFile { scheduler: "blend_v2".into(), window: 5, trace }
}

#[test]
fn trace_text_layout() {
    let t = random_trace(&mut Rng::seeded(0), 2);
    let text = encode_trace(&t);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# scheduler=blend_v2 window=5");
    assert_eq!(lines[1], "step\tbranch\ttrain_loss\tvalid_loss\tweight");
    assert_eq!(lines.len(), 2 + 6);
    assert!(lines[2].starts_with("0\traw\t"));
    assert!(lines[6].starts_with("7\ttf\t"));
    assert!(lines[7].starts_with("7\tjoint\t"));
}

#[test]
fn malformed_traces_are_rejected() {
    let text = encode_trace(&random_trace(&mut Rng::seeded(1), 3));
    let edit = |f: &dyn Fn(&mut Vec<String>)| {
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        f(&mut lines);
        decode_trace(&lines.join("\n"))
    };
    assert!(edit(&|l| l.truncate(l.len() - 1)).is_err());
    assert!(edit(&|l| l[0] = "# window=5".into()).is_err());
    assert!(edit(&|l| l[1] = "step\tbranch\tloss".into()).is_err());
    assert!(edit(&|l| l[3] = l[3].replace("\ttf\t", "\tjoint\t")).is_err());
    assert!(edit(&|l| l[4] = l[4].replacen('0', "x", 1)).is_err());
    assert!(edit(&|l| l[8] = l[8].replacen("14", "0", 1)).is_err());
    assert!(edit(&|_| {}).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn traces_round_trip_exactly(seed in any::<u64>(), n in 0usize..30) {
        let t = random_trace(&mut Rng::seeded(seed), n);
        let back = decode_trace(&encode_trace(&t)).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn configs_round_trip(seed in any::<u64>(), steps in 0usize..5000, lr in 1e-6f64..1.0, scale in 0.01f64..2.0,
                          mode in 0usize..5, small in any::<bool>(), pinned in any::<bool>()) {
        let mut c = RunConfig::preset(if small { "small_data" } else { "asymmetric_overfit" }, seed).unwrap();
        let t = &mut c.experiment.train;
        t.steps = steps;
        t.adam.lr = lr;
        t.model.scale = scale;
        t.mode = Mode::ALL[mode];
        if pinned && t.mode.is_blend() {
            t.pinned_weights = Some(BlendWeights([0.2, 0.3, 0.5]));
        }
        let back = RunConfig::parse(&c.render()).unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn config_keys() {
    let c = RunConfig::parse("mode = tf_only\n\n# comment\nsteps = 12\nseed = 4\npreset = small_data\n").unwrap();
    assert_eq!(c.preset, "small_data");
    assert_eq!(c.train().mode, Mode::TfOnly);
    assert_eq!(c.train().steps, 12);
    assert_eq!((c.train().seed, c.experiment.spec.seed), (4, 4));
    let c = RunConfig::parse("data_seed = 9\nseed = 4\nconv_filters = 1,2,3,4,5,6,7,8,9\n").unwrap();
    assert_eq!((c.train().seed, c.experiment.spec.seed), (4, 9));
    assert_eq!(c.train().model.conv_filters, (1..=9).collect::<Vec<_>>());
    assert_eq!(RunConfig::parse("").unwrap(), RunConfig::preset("asymmetric_overfit", 0).unwrap());

    let line_of = |text: &str| match RunConfig::parse(text) {
        Err(GblendError::Config { line, .. }) => line,
        other => panic!("expected a config error, got {other:?}"),
    };
    assert_eq!(line_of("steps = 3\nfrobnicate = 1\n"), 2);
    assert_eq!(line_of("steps = three\n"), 1);
    assert_eq!(line_of("steps = 3\nsteps = 4\n"), 2);
    assert_eq!(line_of("just words\n"), 1);
    assert_eq!(line_of("mode = blend_v3\n"), 1);
    assert_eq!(line_of("\npreset = huge\n"), 2);
    assert_eq!(line_of("pinned_weights = 1,0\n"), 1);
    assert!(matches!(RunConfig::parse("window = 1\n"), Err(GblendError::Core(_))));
    assert!(matches!(RunConfig::parse("stay = 1.5\n"), Err(GblendError::Core(_))));
}

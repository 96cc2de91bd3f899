//! Acceptance checks, one line per criterion. Criteria 5 and 6 train the
//! desk-scale presets over five seeds and take several minutes.

use std::io::Write as _;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gblend::checkpoint::{decode_checkpoint, encode_checkpoint};
use gblend::replay::{max_deviation, replay_both};
use gblend::run::score;
use gblend::runner::{run_jobs, worker_count};
use gblend::trace::{decode_trace, encode_trace, TraceFile};
use gblend_core::blend::{weights_v1, weights_v2, BlendWeights, LossTrace, V2State};
use gblend_core::metrics::evaluate_metrics;
use gblend_core::model::{branch_losses, Dropout, Model, ModelConfig, SequenceBatch, SequenceView};
use gblend_core::presets::Experiment;
use gblend_core::rng::Rng;
use gblend_core::signal::{hamming, stft_log, RawEpoch, TfImage, EPOCH_SAMPLES, FREQ_BINS, TIME_FRAMES};
use gblend_core::tensor::gradcheck::{self, random_instances};
use gblend_core::train::{train, EvalHead, Mode, PreparedSubject, TrainConfig, TrainOutcome};

const OP_TOL: f64 = 1e-4;
const E2E_TOL: f64 = 1e-3;
const DFT_TOL: f64 = 1e-9;
const SCHED_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-12;
const ACC_SLACK: f64 = 0.005;
const RUNTIME_BUDGET: Duration = Duration::from_secs(15 * 60);
const REPLAY_TOL: f64 = 1e-12;
const RATIO_MIN: f64 = 10.0;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

type Check = (bool, String);

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

// ---------------------------------------------------------------- 1

fn tiny_model() -> ModelConfig {
    ModelConfig {
        seq_len: 2,
        conv_filters: vec![1; 9],
        filterbank: 2,
        epoch_hidden: 3,
        attention: 2,
        raw_hidden: 2,
        tf_hidden: 2,
        ..ModelConfig::default()
    }
}

fn random_batch(rng: &mut Rng, channels: usize, seq_len: usize, batch: usize) -> SequenceBatch {
    let store: Vec<(Vec<RawEpoch>, Vec<TfImage>, Vec<u8>)> = (0..batch)
        .map(|_| {
            let raw: Vec<RawEpoch> = (0..seq_len)
                .map(|_| RawEpoch::unlabeled((0..EPOCH_SAMPLES * channels).map(|_| rng.normal()).collect(), channels).unwrap())
                .collect();
            let tf = raw
                .iter()
                .map(|e| TfImage::new(stft_log(e).unwrap().values().iter().map(|v| v * 0.3).collect(), channels).unwrap())
                .collect();
            (raw, tf, (0..seq_len).map(|_| rng.below(5) as u8).collect())
        })
        .collect();
    let views: Vec<SequenceView> = store.iter().map(|(r, t, l)| SequenceView { raw: r, tf: t, labels: l }).collect();
    SequenceBatch::assemble(&views).unwrap()
}

fn e2e_check(model: &Model, batch: &SequenceBatch, w: [f64; 3], seed: u64, wrt: Option<&[usize]>) -> gradcheck::GradCheck {
    gradcheck::check(
        |tape, vars| {
            let f = model.forward(tape, vars, batch, &mut Dropout::off(), &mut Dropout::off())?;
            let ls = branch_losses(tape, &f, &batch.labels)?;
            let mut total = tape.scale(ls[0], w[0])?;
            for k in 1..3 {
                let term = tape.scale(ls[k], w[k])?;
                total = tape.add(total, term)?;
            }
            Ok(total)
        },
        model.params().tensors(),
        1e-6,
        seed,
        wrt,
    )
    .unwrap()
}

fn gradients() -> Check {
    let mut rng = Rng::seeded(1);
    let mut op_worst: f64 = 0.0;
    let mut op_cases = 0;
    for round in 0..100 {
        for (name, kind, inputs) in random_instances(&mut rng) {
            let r = gradcheck::check(|t, v| t.apply(&kind, v), &inputs, 1e-5, round, None).unwrap_or_else(|e| panic!("{name}: {e}"));
            op_worst = op_worst.max(r.max_rel_error);
            op_cases += 1;
        }
    }

    let params = Model::new(tiny_model(), 0).unwrap().params().count();
    let mut e2e_worst: f64 = 0.0;
    let mut coords = 0;
    for i in 0..100u64 {
        let (channels, size) = (1 + rng.below(2), 1 + rng.below(2));
        let model = Model::new(ModelConfig { channels, ..tiny_model() }, 1000 + i).unwrap();
        let batch = random_batch(&mut rng, channels, 2, size);
        let w = BlendWeights::normalized([rng.uniform(), rng.uniform(), rng.uniform() + 1e-3]).unwrap().0;
        let tensor = [rng.below(model.params().len())];
        let r = e2e_check(&model, &batch, w, i, Some(&tensor));
        e2e_worst = e2e_worst.max(r.max_rel_error);
        coords += r.checked;
    }
    let model = Model::new(tiny_model(), 7).unwrap();
    let full = e2e_check(&model, &random_batch(&mut rng, 1, 2, 2), [0.5, 0.3, 0.2], 7, None);
    e2e_worst = e2e_worst.max(full.max_rel_error);
    coords += full.checked;

    (
        op_worst <= OP_TOL && e2e_worst <= E2E_TOL && params < 2000 && full.checked == params,
        format!(
            "{op_cases} op instances, max rel err {op_worst:.1e} (tol {OP_TOL:.0e}); end-to-end on a {params}-parameter model: \
             100 random instances plus one full pass, {coords} coordinates, max rel err {e2e_worst:.1e} (tol {E2E_TOL:.0e})"
        ),
    )
}

// ---------------------------------------------------------------- 2

fn direct_log_spectrum(signal: &[f64], window: &[f64]) -> Vec<f64> {
    (0..FREQ_BINS)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, (&x, &w)) in signal.iter().zip(window).enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * n) as f64 / 256.0;
                re += x * w * a.cos();
                im += x * w * a.sin();
            }
            (re.hypot(im) + 1e-12).ln()
        })
        .collect()
}

fn preprocessing() -> Check {
    let mut rng = Rng::seeded(2);
    let mut shapes_ok = true;
    let mut worst: f64 = 0.0;
    let window: Vec<f64> = (0..200).map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / 199.0).cos()).collect();
    let window_err = hamming(200).iter().zip(&window).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    for i in 0..12 {
        let c = 1 + i % 3;
        let e = RawEpoch::unlabeled((0..EPOCH_SAMPLES * c).map(|_| rng.uniform_range(-50.0, 50.0)).collect(), c).unwrap();
        let img = stft_log(&e).unwrap();
        shapes_ok &= img.shape() == (129, 29, c) && (FREQ_BINS, TIME_FRAMES) == (129, 29);
        for ch in 0..c {
            let sig: Vec<f64> = e.channel(ch).collect();
            for t in 0..29 {
                let want = direct_log_spectrum(&sig[t * 100..t * 100 + 200], &window);
                for (f, w) in want.iter().enumerate() {
                    worst = worst.max((img.get(f, t, ch) - w).abs());
                }
            }
        }
    }
    let tone: Vec<f64> = (0..EPOCH_SAMPLES).map(|n| (2.0 * std::f64::consts::PI * 10.0 * n as f64 / 100.0).sin()).collect();
    let img = stft_log(&RawEpoch::unlabeled(tone, 1).unwrap()).unwrap();
    let expected_bin = (10.0 * 256.0 / 100.0f64).round() as usize;
    let peaks: Vec<usize> = (0..29)
        .map(|t| (0..FREQ_BINS).max_by(|&a, &b| img.get(a, t, 0).total_cmp(&img.get(b, t, 0))).unwrap())
        .collect();
    let peak_ok = peaks.iter().all(|&p| p == expected_bin);
    (
        shapes_ok && peak_ok && worst <= DFT_TOL && window_err < 1e-15,
        format!(
            "shapes 129x29xC for C=1..3: {shapes_ok}; 10 Hz tone peaks at bin {expected_bin} in every frame: {peak_ok}; \
             direct-DFT max abs err {worst:.1e} over 12 epochs (tol {DFT_TOL:.0e})"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn v1_by_hand(t: &LossTrace) -> [f64; 3] {
    let n = t.len() - 1;
    let raw: Vec<f64> = (0..3)
        .map(|k| {
            let g = t.valid[k][0] - t.valid[k][n];
            let o = (t.valid[k][n] - t.train[k][n]) - (t.valid[k][0] - t.train[k][0]);
            (if g > 1e-8 { g } else { 1e-8 }) / (if o * o > 1e-16 { o * o } else { 1e-16 })
        })
        .collect();
    let z: f64 = raw.iter().sum();
    [raw[0] / z, raw[1] / z, raw[2] / z]
}

fn tangent_by_hand(v: &[f64], w: usize) -> f64 {
    let smooth: Vec<f64> = (0..v.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            v[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect();
    let seg = &smooth[smooth.len() - w..];
    let xm = (w - 1) as f64 / 2.0;
    let ym = seg.iter().sum::<f64>() / w as f64;
    let num: f64 = seg.iter().enumerate().map(|(i, y)| (i as f64 - xm) * (y - ym)).sum();
    let den: f64 = (0..w).map(|i| (i as f64 - xm).powi(2)).sum();
    num / den
}

#[derive(Default)]
struct V2ByHand {
    reference: Option<[(f64, f64); 3]>,
    updates: usize,
    clamps: usize,
}

impl V2ByHand {
    fn step(&mut self, t: &LossTrace, w: usize) -> [f64; 3] {
        if t.len() < w {
            return [1.0 / 3.0; 3];
        }
        let cur: [(f64, f64); 3] = std::array::from_fn(|k| (tangent_by_hand(&t.train[k], w), tangent_by_hand(&t.valid[k], w)));
        let r = self.reference.get_or_insert(cur);
        let mut raw = [0.0; 3];
        for k in 0..3 {
            let g = (cur[k].1 - r[k].1).abs();
            let o = (cur[k].1 - cur[k].0) - (r[k].1 - r[k].0);
            if g <= 1e-8 || o * o <= 1e-16 {
                self.clamps += 1;
            }
            raw[k] = (if g > 1e-8 { g } else { 1e-8 }) / (if o * o > 1e-16 { o * o } else { 1e-16 });
            if r[k].1 > cur[k].1 {
                r[k] = cur[k];
                self.updates += 1;
            }
        }
        let z: f64 = raw.iter().sum();
        raw.map(|x| x / z)
    }
}

fn scripted_trace(script: usize, len: usize, rng: &mut Rng) -> LossTrace {
    let mut t = LossTrace::new();
    for n in 0..len {
        let x = n as f64;
        let curves: [(f64, f64); 3] = match script {
            0 => [(1.6 - 0.02 * x, 1.6 - 0.015 * x), (1.6 - 0.03 * x, 1.6 - 0.01 * x), (1.5, 1.5)],
            1 => std::array::from_fn(|k| {
                let turn = 8.0 + 6.0 * k as f64;
                let tr = 1.6 * (-0.05 * x).exp();
                let va = if x < turn { 1.6 - 0.03 * x } else { 1.6 - 0.03 * turn + 0.02 * (x - turn) };
                (tr, va)
            }),
            _ => std::array::from_fn(|_| (1.6 - 0.01 * x + 0.05 * rng.normal(), 1.6 - 0.008 * x + 0.05 * rng.normal())),
        };
        let tr = curves.map(|c| c.0.max(0.0));
        let va = curves.map(|c| c.1.max(0.0));
        t.record(n * 5, tr, va).unwrap();
    }
    t
}

fn scheduler_oracles() -> Check {
    let mut rng = Rng::seeded(3);
    let mut worst: f64 = 0.0;
    let (mut warmup_ok, mut updates, mut clamps, mut cases) = (true, 0, 0, 0);
    for script in 0..3 {
        for &w in &[2usize, 5, 20] {
            let trace = scripted_trace(script, 60, &mut rng);
            let mut state = V2State::new(w).unwrap();
            let mut hand = V2ByHand::default();
            for n in 1..=trace.len() {
                let prefix = trace.prefix(n);
                let v1 = weights_v1(&prefix);
                let v2 = weights_v2(&prefix, &mut state).unwrap();
                let (h1, h2) = (v1_by_hand(&prefix), hand.step(&prefix, w));
                for k in 0..3 {
                    worst = worst.max((v1.0[k] - h1[k]).abs()).max((v2.0[k] - h2[k]).abs());
                }
                if n < w {
                    warmup_ok &= v2 == BlendWeights::EQUAL;
                }
                cases += 1;
            }
            updates += hand.updates;
            clamps += hand.clamps;
        }
    }
    (
        worst <= SCHED_TOL && warmup_ok && updates > 0 && clamps > 0,
        format!(
            "{cases} scheduler steps on scripted traces, max |Δw| {worst:.1e} (tol {SCHED_TOL:.0e}); warm-up equal: {warmup_ok}; \
             reference updates {updates}; clamped measures {clamps}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn metrics_by_definition(p: &[usize], t: &[usize]) -> [f64; 5] {
    let n = t.len() as f64;
    let count = |f: &dyn Fn(usize, usize) -> bool| p.iter().zip(t).filter(|(&a, &b)| f(a, b)).count() as f64;
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let acc = count(&|a, b| a == b) / n;
    let (mut f1, mut sens, mut spec, mut pe) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..5 {
        let tp = count(&|a, b| a == k && b == k);
        let fp = count(&|a, b| a == k && b != k);
        let fn_ = count(&|a, b| a != k && b == k);
        let tn = n - tp - fp - fn_;
        let (prec, rec) = (div(tp, tp + fp), div(tp, tp + fn_));
        f1 += div(2.0 * prec * rec, prec + rec);
        sens += rec;
        spec += div(tn, tn + fp);
        pe += (tp + fn_) / n * ((tp + fp) / n);
    }
    let kappa = if pe == 1.0 { 1.0 } else { (acc - pe) / (1.0 - pe) };
    [acc, f1 / 5.0, kappa, sens / 5.0, spec / 5.0]
}

fn metric_oracles() -> Check {
    let mut rng = Rng::seeded(4);
    let mut worst: f64 = 0.0;
    let instances = 1000;
    for _ in 0..instances {
        let n = 1 + rng.below(300);
        let classes = 1 + rng.below(5);
        let truth: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
        let hit = rng.uniform();
        let pred: Vec<usize> = truth.iter().map(|&t| if rng.uniform() < hit { t } else { rng.below(5) }).collect();
        let got = evaluate_metrics(&pred, &truth).unwrap().summary().values();
        let want = metrics_by_definition(&pred, &truth);
        for (a, b) in got.iter().zip(want) {
            worst = worst.max((a - b).abs());
        }
    }
    let labels: Vec<usize> = (0..200).map(|i| i % 5).collect();
    let perfect = evaluate_metrics(&labels, &labels).unwrap().summary().values();
    let chance = evaluate_metrics(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap();
    let anchors = perfect == [1.0; 5] && chance.kappa == 0.0 && chance.accuracy == 0.5;
    (
        worst <= METRIC_TOL && anchors,
        format!("{instances} random instances, max abs err {worst:.1e} (tol {METRIC_TOL:.0e}); perfect -> all 1 and 2-class chance -> kappa 0 exactly: {anchors}"),
    )
}

// ---------------------------------------------------------------- 5, 6

fn runs_for(make: fn(u64) -> Experiment, modes: &'static [Mode]) -> Vec<(u64, Vec<TrainOutcome>)> {
    run_jobs(SEEDS.len(), worker_count(), |i| {
        let e = make(SEEDS[i]);
        let data = e.data().unwrap();
        let split = e.split().unwrap();
        let out = modes.iter().map(|&m| train(&e.config(m), &data, &split).unwrap()).collect();
        (SEEDS[i], out)
    })
}

fn central_claim() -> Check {
    const MODES: [Mode; 4] = [Mode::RawOnly, Mode::TfOnly, Mode::NaiveFusion, Mode::BlendV2];
    let start = Instant::now();
    let runs = runs_for(Experiment::asymmetric_overfit, &MODES);
    let elapsed = start.elapsed();
    let col = |i: usize, f: fn(&TrainOutcome) -> f64| -> Vec<f64> { runs.iter().map(|(_, o)| f(&o[i])).collect() };
    let loss = |o: &TrainOutcome| o.final_valid_loss();
    let acc = |o: &TrainOutcome| o.test.accuracy();
    let (raw, tf, naive, v2) = (col(0, loss), col(1, loss), col(2, loss), col(3, loss));
    let (naive_acc, v2_acc) = (col(2, acc), col(3, acc));
    let m = [&raw, &tf, &naive, &v2].map(|v| median(v.clone()));
    let (ma_naive, ma_v2) = (median(naive_acc.clone()), median(v2_acc.clone()));
    let loss_ok = m[3] <= m[2] && m[3] <= m[0].min(m[1]);
    let acc_ok = ma_v2 >= ma_naive - ACC_SLACK;
    let time_ok = elapsed <= RUNTIME_BUDGET;
    (
        loss_ok && acc_ok && time_ok,
        format!(
            "median final valid loss: blend_v2 {:.4}, naive_fusion {:.4}, raw_only {:.4}, tf_only {:.4}; \
             median test acc blend_v2 {ma_v2:.4} vs naive_fusion {ma_naive:.4} (slack {ACC_SLACK}); {:.0} s for 20 runs (budget {} s)\n    \
             per seed valid loss v2 {} naive {} raw {} tf {}\n    per seed test acc v2 {} naive {}",
            m[3],
            m[2],
            m[0],
            m[1],
            elapsed.as_secs_f64(),
            RUNTIME_BUDGET.as_secs(),
            fmt(&v2),
            fmt(&naive),
            fmt(&raw),
            fmt(&tf),
            fmt(&v2_acc),
            fmt(&naive_acc)
        ),
    )
}

/// Sample standard deviation of `w_k(n) − w_k(n−1)`, averaged over the
/// three branches.
fn step_sd(weights: &[BlendWeights]) -> f64 {
    (0..3)
        .map(|k| {
            let d: Vec<f64> = weights.windows(2).map(|p| p[1].0[k] - p[0].0[k]).collect();
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt()
        })
        .sum::<f64>()
        / 3.0
}

fn stability() -> Check {
    const MODES: [Mode; 2] = [Mode::BlendV1, Mode::BlendV2];
    let runs = runs_for(Experiment::small_data, &MODES);
    let v1: Vec<f64> = runs.iter().map(|(_, o)| step_sd(&o[0].trace.weights)).collect();
    let v2: Vec<f64> = runs.iter().map(|(_, o)| step_sd(&o[1].trace.weights)).collect();
    let (m1, m2) = (median(v1.clone()), median(v2.clone()));
    (
        m2 <= m1,
        format!("median step-to-step weight sd: blend_v2 {m2:.4} vs blend_v1 {m1:.4}; per seed v2 {} v1 {}", fmt(&v2), fmt(&v1)),
    )
}

// ---------------------------------------------------------------- 7, 8

fn quick(seed: u64) -> (Vec<PreparedSubject>, Experiment) {
    let mut e = Experiment::small_data(seed);
    e.spec.n_subjects = 7;
    e.spec.epochs_per_subject = 10;
    (e.n_train, e.n_valid) = (4, 2);
    e.train.steps = 16;
    e.train.eval_every = 2;
    e.train.window = 3;
    (e.data().unwrap(), e)
}

fn run_quick(e: &Experiment, data: &[PreparedSubject], cfg: TrainConfig) -> TrainOutcome {
    train(&cfg, data, &e.split().unwrap()).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn pinned_consistency() -> Check {
    let (data, e) = quick(5);
    let pinned = |w: [f64; 3]| run_quick(&e, &data, TrainConfig { pinned_weights: Some(BlendWeights(w)), ..e.config(Mode::BlendV2) });
    let naive = run_quick(&e, &data, e.config(Mode::NaiveFusion));
    let raw = run_quick(&e, &data, e.config(Mode::RawOnly));
    let tf = run_quick(&e, &data, e.config(Mode::TfOnly));
    let joint = pinned([0.0, 0.0, 1.0]);
    let p_raw = pinned([1.0, 0.0, 0.0]);
    let p_tf = pinned([0.0, 1.0, 0.0]);
    let same = |a: &TrainOutcome, b: &TrainOutcome, ks: &[usize]| {
        ks.iter().all(|&k| bits(&a.trace.train[k]) == bits(&b.trace.train[k]) && bits(&a.trace.valid[k]) == bits(&b.trace.valid[k]))
    };
    let joint_ok = same(&joint, &naive, &[0, 1, 2]);
    let raw_ok = same(&p_raw, &raw, &[0]);
    let tf_ok = same(&p_tf, &tf, &[1]);
    let evals = naive.trace.len();
    (
        joint_ok && raw_ok && tf_ok && evals > 2,
        format!(
            "{evals} evaluations compared bitwise: (0,0,1) vs naive_fusion all branches {joint_ok}; \
             (1,0,0) vs raw_only raw branch {raw_ok}; (0,1,0) vs tf_only tf branch {tf_ok}"
        ),
    )
}

fn determinism_and_persistence() -> Check {
    let (data, e) = quick(6);
    let a = run_quick(&e, &data, e.config(Mode::BlendV2));
    let b = run_quick(&e, &data, e.config(Mode::BlendV2));
    let (_, e2) = quick(6);
    let c = run_quick(&e2, &e2.data().unwrap(), e2.config(Mode::BlendV2));
    let identical = |x: &TrainOutcome, y: &TrainOutcome| {
        (0..3).all(|k| bits(&x.trace.train[k]) == bits(&y.trace.train[k]) && bits(&x.trace.valid[k]) == bits(&y.trace.valid[k]))
            && x.trace.weights == y.trace.weights
            && x.test == y.test
            && encode_checkpoint(&x.model) == encode_checkpoint(&y.model)
    };
    let repeat_ok = identical(&a, &b) && identical(&a, &c);

    let bytes = encode_checkpoint(&a.model);
    let loaded = decode_checkpoint(&bytes).unwrap();
    let params_ok = a.model.params().iter().zip(loaded.params().iter()).all(|((n1, x), (n2, y))| n1 == n2 && bits(x.data()) == bits(y.data()));
    let split = e.split().unwrap();
    let head = EvalHead::for_mode(Mode::BlendV2, false);
    let before = score(&a.model, &a.stats, &data, &split.test, head, 8).unwrap();
    let after = score(&loaded, &a.stats, &data, &split.test, head, 8).unwrap();
    let eval_ok = before == after && bits(&before.losses) == bits(&after.losses) && before == a.test;
    let ckpt_ok = params_ok && encode_checkpoint(&loaded) == bytes && eval_ok;

    let mut replay_dev: f64 = 0.0;
    let mut adaptive_evals = 0;
    for mode in [Mode::BlendV1, Mode::BlendV2] {
        let run = if mode == Mode::BlendV2 { a.clone() } else { run_quick(&e, &data, e.config(mode)) };
        let file = TraceFile { scheduler: mode.name().into(), window: e.train.window, trace: run.trace.clone() };
        let back = decode_trace(&encode_trace(&file)).unwrap();
        let r = replay_both(&back, back.window).unwrap();
        let replayed = if mode == Mode::BlendV1 { &r.v1 } else { &r.v2 };
        replay_dev = replay_dev.max(max_deviation(replayed, &run.trace.weights));
        adaptive_evals += run.trace.weights.iter().filter(|w| **w != BlendWeights::EQUAL).count();
    }
    let replay_ok = replay_dev <= REPLAY_TOL && adaptive_evals > 0;
    (
        repeat_ok && ckpt_ok && replay_ok,
        format!(
            "repeated seeded runs bit-identical: {repeat_ok}; checkpoint round trip bit-exact incl. evaluation: {ckpt_ok}; \
             replay of exported blend_v1/blend_v2 traces max |Δw| {replay_dev:.1e} (tol {REPLAY_TOL:.0e}) over {adaptive_evals} non-uniform weights"
        ),
    )
}

// ---------------------------------------------------------------- 9

fn footprint() -> Check {
    let m = Model::new(ModelConfig::default(), 0).unwrap();
    let (raw, tf) = (m.raw_param_count(), m.tf_param_count());
    let ratio = raw as f64 / tf as f64;
    (ratio > RATIO_MIN, format!("raw stream {raw} parameters, time-frequency stream {tf}: ratio {ratio:.1} (bound > {RATIO_MIN})"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("gradient correctness", gradients),
        ("preprocessing exactness", preprocessing),
        ("scheduler oracle equivalence", scheduler_oracles),
        ("metric oracle equivalence", metric_oracles),
        ("desk-scale central claim", central_claim),
        ("scheduler stability ordering", stability),
        ("fixed-weight consistency", pinned_consistency),
        ("determinism and persistence", determinism_and_persistence),
        ("architecture footprint", footprint),
    ];
    let mut lines = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = f();
        let line = format!(
            "criterion {} [{}] {name} ({:.1} s): {detail}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        std::io::stdout().flush().ok();
        lines.push((pass, i + 1, *name));
    }
    let failed: Vec<String> = lines.iter().filter(|l| !l.0).map(|l| format!("{} ({})", l.1, l.2)).collect();
    println!("\nacceptance: {} of {} criteria pass", lines.len() - failed.len(), lines.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}

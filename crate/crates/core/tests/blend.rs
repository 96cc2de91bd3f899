use gblend_core::blend::{
    fit_line_slope, moving_average, raw_weight, replay, weighted_total_loss, weights_v1, weights_v1_for, weights_v2,
    BlendWeights, Branch, LossTrace, Scheduler, V2State, EPS_WEIGHT,
};
use gblend_core::rng::Rng;
use gblend_core::tensor::{Tape, Tensor};
use proptest::prelude::*;

fn trace_from(train: [Vec<f64>; 3], valid: [Vec<f64>; 3]) -> LossTrace {
    let mut t = LossTrace::new();
    for n in 0..train[0].len() {
        t.record(n * 10, [0, 1, 2].map(|k| train[k][n]), [0, 1, 2].map(|k| valid[k][n])).unwrap();
    }
    t
}

fn noisy_trace(rng: &mut Rng, len: usize) -> LossTrace {
    let mut train: [Vec<f64>; 3] = Default::default();
    let mut valid: [Vec<f64>; 3] = Default::default();
    for k in 0..3 {
        let (a, b, turn) = (rng.uniform_range(0.001, 0.02), rng.uniform_range(-0.01, 0.02), rng.below(len));
        for n in 0..len {
            let tn = 1.6 - a * n as f64 + 0.02 * rng.normal();
            let vn = if n < turn { 1.6 - a * 0.8 * n as f64 } else { 1.6 - a * 0.8 * turn as f64 + b * (n - turn) as f64 };
            train[k].push(tn.max(0.0));
            valid[k].push((vn + 0.02 * rng.normal()).max(0.0));
        }
    }
    trace_from(train, valid)
}

// Independent line fit: normal-equation form.
fn oracle_slope(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let (mut sx, mut sy, mut sxy, mut sxx) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in v.iter().enumerate() {
        let x = i as f64;
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn oracle_smooth(v: &[f64], w: usize) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            v[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

fn oracle_tangent(v: &[f64], w: usize) -> f64 {
    let s = oracle_smooth(v, w);
    let seg = &s[s.len() - w..];
    let xm = (w - 1) as f64 / 2.0;
    let ym = seg.iter().sum::<f64>() / w as f64;
    let num: f64 = seg.iter().enumerate().map(|(i, y)| (i as f64 - xm) * (y - ym)).sum();
    let den: f64 = (0..w).map(|i| (i as f64 - xm) * (i as f64 - xm)).sum();
    num / den
}

/// Step-by-step execution of the tangent procedure for one branch set.
struct Oracle {
    w: usize,
    reference: Option<Vec<(usize, f64, f64)>>,
    updates: usize,
    clamped: usize,
}

impl Oracle {
    fn step(&mut self, trace: &LossTrace) -> [f64; 3] {
        let n = trace.len();
        if n < self.w {
            return [1.0 / 3.0; 3];
        }
        let cur: Vec<(usize, f64, f64)> = (0..3)
            .map(|k| (n - 1, oracle_tangent(&trace.train[k], self.w), oracle_tangent(&trace.valid[k], self.w)))
            .collect();
        if self.reference.is_none() {
            self.reference = Some(cur.clone());
        }
        let r = self.reference.as_mut().unwrap();
        let mut raw = [0.0; 3];
        for k in 0..3 {
            let g = cur[k].2 - r[k].2;
            let o = (cur[k].2 - cur[k].1) - (r[k].2 - r[k].1);
            let num = if g.abs() > 1e-8 { g.abs() } else { 1e-8 };
            let den = if o * o > 1e-16 { o * o } else { 1e-16 };
            if g.abs() <= 1e-8 || o * o <= 1e-16 {
                self.clamped += 1;
            }
            raw[k] = num / den;
            if r[k].2 > cur[k].2 {
                r[k] = cur[k];
                self.updates += 1;
            }
        }
        let z = raw[0] + raw[1] + raw[2];
        raw.map(|x| x / z)
    }
}

#[test]
fn line_fit_anchors() {
    let w = 20;
    let v: Vec<f64> = (0..w).map(|i| 1.0 - 0.01 * i as f64).collect();
    assert!((fit_line_slope(&v).unwrap() + 0.01).abs() < 1e-12);
    assert_eq!(fit_line_slope(&[0.7; 9]).unwrap(), 0.0);
    assert!(fit_line_slope(&[1.0]).is_err());
    assert!(fit_line_slope(&[]).is_err());
}

#[test]
fn line_fit_matches_closed_form() {
    let mut rng = Rng::seeded(1);
    for _ in 0..1000 {
        let n = 2 + rng.below(40);
        let v: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.0, 3.0)).collect();
        let xm = (n - 1) as f64 / 2.0;
        let vm = v.iter().sum::<f64>() / n as f64;
        let num: f64 = v.iter().enumerate().map(|(i, y)| (i as f64 - xm) * (y - vm)).sum();
        let den: f64 = (0..n).map(|i| (i as f64 - xm).powi(2)).sum();
        assert!((fit_line_slope(&v).unwrap() - num / den).abs() < 1e-12);
        assert!((fit_line_slope(&v).unwrap() - oracle_slope(&v)).abs() < 1e-12);
    }
}

#[test]
fn moving_average_matches_oracle() {
    let mut rng = Rng::seeded(2);
    for _ in 0..200 {
        let n = 1 + rng.below(50);
        let w = 1 + rng.below(12);
        let v: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        for (a, b) in moving_average(&v, w).iter().zip(oracle_smooth(&v, w)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn v1_hand_example() {
    let a = (vec![1.0, 0.4], vec![1.0, 0.5]);
    let b = (vec![1.0, 0.6], vec![1.0, 0.9]);
    let w = weights_v1_for(&[(&a.0, &a.1), (&b.0, &b.1)]);
    let (ra, rb) = (0.5 / (0.1f64 * 0.1), 0.1 / (0.3f64 * 0.3));
    assert!((w[0] - ra / (ra + rb)).abs() < 1e-12);
    assert!((w[1] - rb / (ra + rb)).abs() < 1e-12);
    assert!((w[0] - 0.978).abs() < 5e-4 && (w[1] - 0.022).abs() < 5e-4);
}

#[test]
fn v1_identical_traces_are_equal() {
    let t = vec![1.5, 1.2, 0.9, 0.7];
    let v = vec![1.5, 1.3, 1.2, 1.15];
    let w = weights_v1_for(&[(&t, &v), (&t, &v)]);
    assert_eq!(w, vec![0.5, 0.5]);
    let trace = trace_from([t.clone(), t.clone(), t.clone()], [v.clone(), v.clone(), v.clone()]);
    assert_eq!(weights_v1(&trace), BlendWeights([1.0 / 3.0; 3]));
}

#[test]
fn v1_negative_generalization_hits_the_floor() {
    let t = vec![1.0, 0.8];
    let rising = vec![1.0, 1.2];
    let falling = vec![1.0, 0.9];
    let w = weights_v1_for(&[(&t, &rising), (&t, &falling)]);
    let r0 = EPS_WEIGHT / 0.4f64.powi(2);
    let r1 = 0.1 / 0.1f64.powi(2);
    assert!((w[0] - r0 / (r0 + r1)).abs() < 1e-15);
    assert_eq!(raw_weight(-0.3, 0.4), r0);
    assert_eq!(raw_weight(0.0, 0.0), EPS_WEIGHT / (EPS_WEIGHT * EPS_WEIGHT));
}

#[test]
fn v1_without_evaluations_is_equal() {
    assert_eq!(weights_v1(&LossTrace::new()), BlendWeights::EQUAL);
}

#[test]
fn v1_matches_hand_evaluation_on_traces() {
    let mut rng = Rng::seeded(4);
    for _ in 0..200 {
        let len = 2 + rng.below(30);
        let trace = noisy_trace(&mut rng, len);
        let w = weights_v1(&trace);
        let n = trace.len() - 1;
        let raw: Vec<f64> = (0..3)
            .map(|k| {
                let (t, v) = (&trace.train[k], &trace.valid[k]);
                let g = v[0] - v[n];
                let o = (v[n] - t[n]) - (v[0] - t[0]);
                (if g > 1e-8 { g } else { 1e-8 }) / (if o * o > 1e-16 { o * o } else { 1e-16 })
            })
            .collect();
        let z: f64 = raw.iter().sum();
        for k in 0..3 {
            assert!((w.0[k] - raw[k] / z).abs() < 1e-12);
        }
    }
}

#[test]
fn v2_warm_up_is_exactly_equal() {
    let mut rng = Rng::seeded(5);
    let trace = noisy_trace(&mut rng, 30);
    let mut state = V2State::new(8).unwrap();
    for n in 1..8 {
        assert_eq!(weights_v2(&trace.prefix(n), &mut state).unwrap(), BlendWeights::EQUAL);
    }
    assert!(state.branches.is_none());
    assert!(V2State::new(1).is_err());
}

#[test]
fn v2_matches_scripted_procedure() {
    let mut rng = Rng::seeded(6);
    let (mut updates, mut clamped) = (0, 0);
    for _ in 0..100 {
        let w = 2 + rng.below(10);
        let len = w + rng.below(60);
        let trace = noisy_trace(&mut rng, len);
        let mut state = V2State::new(w).unwrap();
        let mut oracle = Oracle { w, reference: None, updates: 0, clamped: 0 };
        for n in 1..=trace.len() {
            let p = trace.prefix(n);
            let got = weights_v2(&p, &mut state).unwrap();
            let want = oracle.step(&p);
            for k in 0..3 {
                assert!((got.0[k] - want[k]).abs() < 1e-12, "n={n} k={k}: {} vs {}", got.0[k], want[k]);
            }
            if let (Some(s), Some(r)) = (&state.branches, &oracle.reference) {
                for k in 0..3 {
                    assert_eq!(s[k].n0, r[k].0);
                }
            }
        }
        updates += oracle.updates;
        clamped += oracle.clamped;
    }
    assert!(updates > 0 && clamped > 0);
}

#[test]
fn v2_prefers_the_branch_that_keeps_generalizing() {
    let len = 101;
    let train: Vec<f64> = (0..len).map(|n| 1.5 - 0.012 * n as f64).collect();
    let a: Vec<f64> = (0..len).map(|n| if n <= 50 { 1.5 - 0.01 * n as f64 } else { 1.0 + 0.01 * (n - 50) as f64 }).collect();
    let b: Vec<f64> = (0..len).map(|n| 1.5 - 0.005 * n as f64).collect();
    let joint: Vec<f64> = (0..len).map(|n| 1.5 - 0.008 * n as f64).collect();
    let trace = trace_from([train.clone(), train.clone(), train], [a, b, joint]);
    let w = 5;
    let mut state = V2State::new(w).unwrap();
    let mut oracle = Oracle { w, reference: None, updates: 0, clamped: 0 };
    for n in 1..=len {
        let p = trace.prefix(n);
        let got = weights_v2(&p, &mut state).unwrap();
        let want = oracle.step(&p);
        for k in 0..3 {
            assert!((got.0[k] - want[k]).abs() < 1e-12);
        }
        let last = n - 1;
        if last > 50 {
            assert!(got.0[1] > got.0[0], "eval {last}: {:?}", got);
        }
    }
}

#[test]
fn replay_reproduces_scheduler_output() {
    let mut rng = Rng::seeded(9);
    let mut trace = noisy_trace(&mut rng, 40);
    for sched in [Scheduler::V1, Scheduler::V2(V2State::new(6).unwrap())] {
        let mut live = sched.clone();
        trace.weights = (1..=trace.len()).map(|n| live.update(&trace.prefix(n)).unwrap()).collect();
        let again = replay(&trace, sched).unwrap();
        assert_eq!(again, trace.weights);
    }
}

#[test]
fn trace_rejects_bad_losses() {
    let mut t = LossTrace::new();
    assert!(t.record(0, [1.0, f64::NAN, 1.0], [1.0; 3]).is_err());
    assert!(t.record(0, [1.0; 3], [-0.1, 1.0, 1.0]).is_err());
    t.record(5, [1.0; 3], [1.0; 3]).unwrap();
    assert!(t.record(5, [1.0; 3], [1.0; 3]).is_err());
    assert_eq!(Branch::from_name("joint"), Some(Branch::Joint));
}

#[test]
fn weighted_loss_routes_gradients() {
    let mut tape = Tape::new();
    let p = [0.7, 1.1, 2.3].map(|v| tape.param(Tensor::scalar(v)).unwrap());
    let ls = p.map(|v| tape.mul(v, v).unwrap());
    let total = weighted_total_loss(&mut tape, ls, BlendWeights([1.0, 0.0, 0.0])).unwrap();
    assert_eq!(tape.value(total).data(), tape.value(ls[0]).data());
    let g = tape.backward(total).unwrap();
    assert_eq!(g.get_or_zeros(p[0]), vec![1.4]);
    assert_eq!(g.get_or_zeros(p[1]), vec![0.0]);
    assert_eq!(g.get_or_zeros(p[2]), vec![0.0]);

    let mut tape = Tape::new();
    let c = [0, 1, 2].map(|_| tape.param(Tensor::scalar(0.9)).unwrap());
    let total = weighted_total_loss(&mut tape, c, BlendWeights::EQUAL).unwrap();
    assert!((tape.value(total).data()[0] - 0.9).abs() < 1e-15);
}

#[test]
fn v1_weight_grows_with_generalization() {
    let t = vec![1.0, 0.7];
    let other = vec![1.0, 0.85];
    let mut prev = 0.0;
    for step in 1..20 {
        // valid drops by g while the gap change stays at 0.1
        let g = 0.01 * step as f64;
        let v = vec![1.0, 1.0 - g];
        let tt = vec![1.0, 1.0 - g - 0.1];
        let w = weights_v1_for(&[(&tt, &v), (&t, &other)]);
        assert!(w[0] > prev);
        prev = w[0];
    }
}

fn permute(trace: &LossTrace, perm: [usize; 3]) -> LossTrace {
    trace_from(perm.map(|k| trace.train[k].clone()), perm.map(|k| trace.valid[k].clone()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn line_fit_scale_equivariant(v in prop::collection::vec(-5.0f64..5.0, 2..30), c in -10.0f64..10.0) {
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let a = fit_line_slope(&scaled).unwrap();
        let b = c * fit_line_slope(&v).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
    }

    #[test]
    fn weights_are_normalized_and_symmetric(seed in 0u64..10_000, w in 2usize..10, len in 1usize..50, p in 0usize..6) {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let perm = perms[p];
        let mut rng = Rng::seeded(seed);
        let trace = noisy_trace(&mut rng, len);
        let swapped = permute(&trace, perm);
        let mut s = V2State::new(w).unwrap();
        let mut sp = V2State::new(w).unwrap();
        let mut last_ref: Option<[f64; 3]> = None;
        for n in 1..=len {
            let a = weights_v2(&trace.prefix(n), &mut s).unwrap();
            let b = weights_v2(&swapped.prefix(n), &mut sp).unwrap();
            let v1a = weights_v1(&trace.prefix(n));
            let v1b = weights_v1(&swapped.prefix(n));
            for x in [a, v1a] {
                prop_assert!((x.0.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(x.0.iter().all(|&q| q >= 0.0));
            }
            for k in 0..3 {
                prop_assert!((b.0[k] - a.0[perm[k]]).abs() <= 1e-12);
                prop_assert!((v1b.0[k] - v1a.0[perm[k]]).abs() <= 1e-12);
            }
            if n < w {
                prop_assert_eq!(a, BlendWeights::EQUAL);
            }
            if let Some(r) = &s.branches {
                let now = [r[0].tan_valid, r[1].tan_valid, r[2].tan_valid];
                if let Some(prev) = last_ref {
                    for k in 0..3 {
                        prop_assert!(now[k] <= prev[k]);
                    }
                }
                last_ref = Some(now);
            }
        }
    }
}

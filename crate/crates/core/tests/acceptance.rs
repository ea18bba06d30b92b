//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits non-zero if any failed.
//!
//! `cargo test -p bep-core --test acceptance`

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use bep_core::bep::backproject;
use bep_core::bits::{dot_pm1, gated_matvec_transpose, matvec_pm1, outer_pm1};
use bep_core::checkpoint::Checkpoint;
use bep_core::data::PrototypeTaskConfig;
use bep_core::frames::{search_frame, search_frame_traced, FrameSearchConfig};
use bep_core::layer::Layer;
use bep_core::oracle::{
    check_local_correctness, exhaustive_argmax_gated, naive_dot, naive_gated_transpose,
    naive_matvec, naive_outer, relaxation_integrality_check, DenseSign,
};
use bep_core::run::{self, DataConfig, RunConfig, BEST_CHECKPOINT, FINAL_CHECKPOINT, METRICS_FILE};
use bep_core::{
    evaluate, BinaryDataset, BitVector, GateVector, Hyperparams, Model, ModelKind, Network,
    PackedBitMatrix, PrototypeFrame, RnnDims, RnnModel, TrainState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

// negated so that NaN fails the check
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const SIZES: [usize; 15] = [1, 2, 3, 4, 5, 6, 7, 8, 63, 64, 65, 127, 128, 129, 300];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dense(m: &PackedBitMatrix) -> DenseSign {
    let data = (0..m.rows())
        .flat_map(|i| (0..m.cols()).map(move |j| m.get_pm1(i, j)))
        .collect();
    DenseSign::new(m.rows(), m.cols(), data)
}

fn random_gate(n: usize, r: &mut ChaCha8Rng) -> (GateVector, Vec<u8>) {
    let bools: Vec<bool> = (0..n).map(|_| r.random_bool(0.6)).collect();
    let raw = bools.iter().map(|&b| b as u8).collect();
    (GateVector::from_bools(&bools), raw)
}

fn widen_rows<S: bep_core::scalar::Stability>(l: &Layer<S>) -> Vec<i64> {
    l.hidden().iter().map(|h| h.widen()).collect()
}

// ---------------------------------------------------------------------------

fn c1_kernels() -> Outcome {
    let start = Instant::now();
    let per_size = 1000usize.div_ceil(SIZES.len());
    let mut r = rng(1);
    let mut counts = [0usize; 4];
    for &n in &SIZES {
        for _ in 0..per_size {
            let m = SIZES[r.random_range(0..SIZES.len())];

            let a = BitVector::random(n, &mut r);
            let b = BitVector::random(n, &mut r);
            let got = dot_pm1(&a, &b).map_err(|e| e.to_string())? as i64;
            ensure!(
                got == naive_dot(&a.to_pm1(), &b.to_pm1()),
                "dot mismatch at n={n}"
            );
            counts[0] += 1;

            let w = PackedBitMatrix::random(m, n, &mut r);
            let got: Vec<i64> = matvec_pm1(&w, &a)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|&x| x as i64)
                .collect();
            ensure!(
                got == naive_matvec(&dense(&w), &a.to_pm1()),
                "matvec mismatch at {m}×{n}"
            );
            counts[1] += 1;

            let (gate, g) = random_gate(m, &mut r);
            let bm = BitVector::random(m, &mut r);
            let got: Vec<i64> = gated_matvec_transpose(&w, &gate, &bm)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|&x| x as i64)
                .collect();
            ensure!(
                got == naive_gated_transpose(&dense(&w), &g, &bm.to_pm1()),
                "gated transpose mismatch at {m}×{n}"
            );
            counts[2] += 1;

            let u = BitVector::random(m, &mut r);
            ensure!(
                dense(&outer_pm1(&u, &a)) == naive_outer(&u.to_pm1(), &a.to_pm1()),
                "outer mismatch at {m}×{n}"
            );
            counts[3] += 1;
        }
    }
    let t = start.elapsed();
    ensure!(
        counts.iter().all(|&c| c >= 1000),
        "too few instances {counts:?}"
    );
    ensure!(t < Duration::from_secs(30), "took {t:?}");
    Ok(format!("{counts:?} instances, 0 mismatches, {t:.2?}"))
}

fn c2_backproject_exact() -> Outcome {
    let mut r = rng(2);
    let mut unique = 0;
    for i in 0..500 {
        let k_a = r.random_range(1..=12);
        let k_b = r.random_range(1..=16);
        let w = PackedBitMatrix::random(k_b, k_a, &mut r);
        let (gate, g) = random_gate(k_b, &mut r);
        let b = BitVector::random(k_b, &mut r);
        let got = backproject(&w, &gate, &b)
            .map_err(|e| e.to_string())?
            .to_pm1();
        let dw = dense(&w);
        let best = exhaustive_argmax_gated(&dw, &g, &b.to_pm1()).map_err(|e| e.to_string())?;
        ensure!(best.contains(&got), "instance {i}: result not a maximiser");
        if naive_gated_transpose(&dw, &g, &b.to_pm1())
            .iter()
            .all(|&v| v != 0)
        {
            ensure!(
                best.maximizers.len() == 1,
                "instance {i}: expected a unique maximiser"
            );
            ensure!(
                best.maximizers[0] == got,
                "instance {i}: unique maximiser differs"
            );
            unique += 1;
        }
    }
    Ok(format!(
        "500 instances, {unique} with a unique maximiser, 0 failures"
    ))
}

fn c3_integrality() -> Outcome {
    let mut r = rng(3);
    for i in 0..200 {
        let k_a = r.random_range(1..=4);
        let k_b = r.random_range(1..=6);
        let w = PackedBitMatrix::random(k_b, k_a, &mut r);
        let (_, g) = random_gate(k_b, &mut r);
        let b = BitVector::random(k_b, &mut r);
        let ok = relaxation_integrality_check(&dense(&w), &g, &b.to_pm1(), 10)
            .map_err(|e| e.to_string())?;
        ensure!(ok, "instance {i} ({k_b}×{k_a}) failed");
    }
    Ok("200 instances at grid step 0.1, 0 failures".into())
}

fn c4_exact_increment() -> Outcome {
    let mut r = rng(4);
    let mut checked = 0usize;
    let mut samples = 0usize;
    while samples < 500 {
        let k0 = SIZES[r.random_range(0..SIZES.len())].max(2);
        let k1 = [4, 8, 16][r.random_range(0..3)];
        let k2 = [4, 8, 16][r.random_range(0..3)];
        let frame = PrototypeFrame::random(3, k2, &mut r).map_err(|e| e.to_string())?;
        let hyper = Hyperparams {
            gamma0: vec![r.random_range(1..=2)],
            nu: 1.0,
            r: 1.0,
            bits: 32,
            ..Hyperparams::default()
        };
        let mut net = Network::<i64>::new(k0, &[k1, k2], frame, hyper, r.random())
            .map_err(|e| e.to_string())?;
        let x = BitVector::random(k0, &mut r);
        let class = r.random_range(0..3);
        let trace = net.forward(&x).map_err(|e| e.to_string())?;
        let th = net.thresholds().map_err(|e| e.to_string())?;
        let upd = net
            .sample_update(&trace, class, &th, &[1, 1])
            .map_err(|e| e.to_string())?;
        if upd.masks.iter().all(|m| m.is_empty()) {
            continue;
        }
        let before: Vec<Vec<i64>> = net.layers().iter().map(widen_rows).collect();
        let stats = net.apply_updates(&[(&x, &trace, &upd)]);
        ensure!(
            stats.iter().all(|s| s.saturated == 0),
            "unexpected saturation"
        );
        for (l, layer) in net.layers().iter().enumerate() {
            let after = widen_rows(layer);
            let input = if l == 0 {
                x.to_pm1()
            } else {
                trace.act[l - 1].to_pm1()
            };
            let k = layer.fan_in();
            for j in 0..layer.fan_out() {
                let (b, a) = (&before[l][j * k..(j + 1) * k], &after[j * k..(j + 1) * k]);
                if upd.masks[l].selects(j) {
                    let want = upd.targets[l].get_pm1(j);
                    check_local_correctness(b, a, &input, want)
                        .map_err(|v| format!("layer {l} row {j}: {v:?}"))?;
                    checked += 1;
                } else {
                    ensure!(a == b, "unselected row {j} of layer {l} changed");
                }
            }
        }
        samples += 1;
    }
    Ok(format!(
        "{samples} updates, {checked} selected rows, gain exactly 2K and steps of ±2"
    ))
}

/// Dense `Σ_μ M ⊙ (a* aᵀ)` for one matrix.
fn oracle_delta(rows: usize, cols: usize, terms: &[(Vec<bool>, Vec<i8>, Vec<i8>)]) -> Vec<i64> {
    let mut d = vec![0i64; rows * cols];
    for (mask, want, input) in terms {
        let outer = naive_outer(want, input);
        for j in 0..rows {
            if mask[j] {
                for i in 0..cols {
                    d[j * cols + i] += outer.at(j, i) as i64;
                }
            }
        }
    }
    d
}

fn mask_bools(m: &bep_core::layer::RowMask) -> Vec<bool> {
    (0..m.len()).map(|j| m.selects(j)).collect()
}

fn c5_aggregation() -> Outcome {
    let mut r = rng(5);
    for trial in 0..20 {
        // feedforward batch
        let (k0, k1, k2) = (37, 32, 24);
        let frame = PrototypeFrame::random(4, k2, &mut r).map_err(|e| e.to_string())?;
        let hyper = Hyperparams {
            gamma0: vec![4],
            r: 1.0,
            nu: 0.2,
            bits: 32,
            ..Hyperparams::default()
        };
        let net =
            Network::<i64>::new(k0, &[k1, k2], frame, hyper, trial).map_err(|e| e.to_string())?;
        let th = net.thresholds().map_err(|e| e.to_string())?;
        let xs: Vec<BitVector> = (0..12).map(|_| BitVector::random(k0, &mut r)).collect();
        let traces: Vec<_> = xs.iter().map(|x| net.forward(x).unwrap()).collect();
        let upds: Vec<_> = traces
            .iter()
            .map(|t| {
                net.sample_update(t, r.random_range(0..4), &th, &[4, 4])
                    .unwrap()
            })
            .collect();
        let batch: Vec<_> = xs
            .iter()
            .zip(&traces)
            .zip(&upds)
            .map(|((x, t), u)| (x, t, u))
            .collect();
        let mut agg = net.clone();
        agg.apply_updates(&batch);
        for (l, layer) in net.layers().iter().enumerate() {
            let terms: Vec<_> = batch
                .iter()
                .map(|(x, t, u)| {
                    let input = if l == 0 {
                        x.to_pm1()
                    } else {
                        t.act[l - 1].to_pm1()
                    };
                    (mask_bools(&u.masks[l]), u.targets[l].to_pm1(), input)
                })
                .collect();
            let d = oracle_delta(layer.fan_out(), layer.fan_in(), &terms);
            let want: Vec<i64> = widen_rows(layer)
                .iter()
                .zip(&d)
                .map(|(h, d)| h + 2 * d)
                .collect();
            ensure!(
                widen_rows(&agg.layers()[l]) == want,
                "trial {trial}: layer {l} differs from per-sample sum"
            );
        }

        // recurrent batch: both orders of masking and time summation
        let dims = RnnDims {
            input: 11,
            state: 24,
            output: 16,
        };
        let frame = PrototypeFrame::random(3, dims.output, &mut r).map_err(|e| e.to_string())?;
        let hyper = Hyperparams {
            gamma0: vec![4],
            r: 1.0,
            nu: 0.3,
            bits: 32,
            horizon: Some(r.random_range(1..=5)),
            ..Hyperparams::default()
        };
        let rnn = RnnModel::<i64>::new(dims, frame, hyper, trial).map_err(|e| e.to_string())?;
        let th = rnn.thresholds().map_err(|e| e.to_string())?;
        let seqs: Vec<Vec<BitVector>> = (0..8)
            .map(|_| {
                (0..5)
                    .map(|_| BitVector::random(dims.input, &mut r))
                    .collect()
            })
            .collect();
        let traces: Vec<_> = seqs.iter().map(|s| rnn.forward(s).unwrap()).collect();
        let upds: Vec<_> = traces
            .iter()
            .map(|t| {
                rnn.sample_update(t, r.random_range(0..3), &th, &[4, 4])
                    .unwrap()
            })
            .collect();
        let batch: Vec<_> = seqs
            .iter()
            .zip(&traces)
            .zip(&upds)
            .map(|((s, t), u)| (s.as_slice(), t, u))
            .collect();
        let mut agg = rnn.clone();
        agg.apply_updates(&batch);

        let mut per_step_x = Vec::new();
        let mut per_step_s = Vec::new();
        let mut summed_x = vec![0i64; dims.state * dims.input];
        let mut summed_s = vec![0i64; dims.state * dims.state];
        let mut out_terms = Vec::new();
        for (s, t, u) in &batch {
            let mask = mask_bools(&u.state_mask);
            let mut inner_x = vec![0i64; dims.state * dims.input];
            let mut inner_s = vec![0i64; dims.state * dims.state];
            for (k, want) in u.targets.states.iter().enumerate() {
                let step = u.targets.first + k;
                let prev = if step == 0 {
                    rnn.s0().to_pm1()
                } else {
                    t.states[step - 1].to_pm1()
                };
                per_step_x.push((mask.clone(), want.to_pm1(), s[step].to_pm1()));
                per_step_s.push((mask.clone(), want.to_pm1(), prev.clone()));
                let all = vec![true; dims.state];
                for (acc, d) in [
                    (
                        &mut inner_x,
                        oracle_delta(
                            dims.state,
                            dims.input,
                            &[(all.clone(), want.to_pm1(), s[step].to_pm1())],
                        ),
                    ),
                    (
                        &mut inner_s,
                        oracle_delta(dims.state, dims.state, &[(all, want.to_pm1(), prev)]),
                    ),
                ] {
                    acc.iter_mut().zip(d).for_each(|(a, v)| *a += v);
                }
            }
            // mask applied after the time sum
            for (summed, inner, cols) in [
                (&mut summed_x, &inner_x, dims.input),
                (&mut summed_s, &inner_s, dims.state),
            ] {
                for j in 0..dims.state {
                    if mask[j] {
                        for i in 0..cols {
                            summed[j * cols + i] += inner[j * cols + i];
                        }
                    }
                }
            }
            out_terms.push((
                mask_bools(&u.output_mask),
                u.targets.output.to_pm1(),
                t.states.last().unwrap().to_pm1(),
            ));
        }
        let stepwise_x = oracle_delta(dims.state, dims.input, &per_step_x);
        let stepwise_s = oracle_delta(dims.state, dims.state, &per_step_s);
        ensure!(
            stepwise_x == summed_x && stepwise_s == summed_s,
            "trial {trial}: masking does not commute"
        );
        let checks = [
            (rnn.input_layer(), agg.input_layer(), stepwise_x, 2),
            (rnn.recurrent_layer(), agg.recurrent_layer(), stepwise_s, 2),
            (
                rnn.output_layer(),
                agg.output_layer(),
                oracle_delta(dims.output, dims.state, &out_terms),
                1,
            ),
        ];
        for (name, (before, after, d, step)) in ["H_xs", "H_ss", "H_sy"].iter().zip(checks) {
            let want: Vec<i64> = widen_rows(before)
                .iter()
                .zip(&d)
                .map(|(h, d)| h + step * d)
                .collect();
            ensure!(
                widen_rows(after) == want,
                "trial {trial}: {name} differs from per-sample sum"
            );
        }
    }
    Ok("20 feedforward and 20 recurrent batches exact; masking commutes with time sums".into())
}

fn c6_frame() -> Outcome {
    let start = Instant::now();
    let s = search_frame_traced(&FrameSearchConfig::with_defaults(10, 256, 0))
        .map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let off = s.frame.off_diagonal();
    let (lo, hi) = (*off.iter().min().unwrap(), *off.iter().max().unwrap());
    ensure!(hi <= -2, "off-diagonal max {hi} > -2");
    ensure!(hi - lo <= 8, "band {} > 8", hi - lo);
    let mut prev = s.initial_cost;
    for &c in &s.cost_trace {
        ensure!(c <= prev, "cost rose from {prev} to {c}");
        prev = c;
    }
    ensure!(t < Duration::from_secs(10), "took {t:?}");
    Ok(format!(
        "off-diagonals in [{lo}, {hi}], band {}, {} accepted flips, {t:.2?}",
        hi - lo,
        s.accepted
    ))
}

fn mlp_task(seed: u64, flip_p: f64) -> RunConfig {
    RunConfig {
        kind: ModelKind::Mlp,
        layers: vec![256, 256],
        seed,
        hyper: Hyperparams {
            r: 0.5,
            p_r: 0.5,
            nu: 0.05,
            gamma0: vec![16],
            epochs: 30,
            ..Hyperparams::default()
        },
        data: DataConfig::Prototypes(PrototypeTaskConfig {
            n_train: 2000,
            n_test: 500,
            input_dim: 200,
            classes: 10,
            flip_p,
            steps: 1,
            seed,
        }),
        ..RunConfig::default()
    }
}

/// Runs on a single worker thread, as on one laptop core.
fn one_core<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn c7_mlp() -> Outcome {
    let mut accs = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 0..3 {
        let start = Instant::now();
        let s = one_core(|| run::cmd_train(&mlp_task(seed, 0.2))).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        accs.push(s.final_test.accuracy());
    }
    let mean = accs.iter().sum::<f64>() / 3.0;
    let detail = format!("test {accs:.4?}, mean {mean:.4}, slowest run {slowest:.1?}");
    ensure!(mean >= 0.95, "mean below 0.95: {detail}");
    ensure!(
        accs.iter().all(|&a| a >= 0.90),
        "a seed fell below 0.90: {detail}"
    );
    ensure!(
        slowest < Duration::from_secs(120),
        "over two minutes: {detail}"
    );
    Ok(detail)
}

fn c8_flip_bounds() -> Outcome {
    let clean = run::cmd_train(&mlp_task(0, 0.0))
        .map_err(|e| e.to_string())?
        .final_test
        .accuracy();
    let noise = run::cmd_train(&mlp_task(0, 0.5))
        .map_err(|e| e.to_string())?
        .final_test
        .accuracy();
    let detail = format!("flip 0 → {clean:.4}, flip 0.5 → {noise:.4}");
    ensure!(clean == 1.0, "{detail}");
    ensure!((0.05..=0.15).contains(&noise), "{detail}");
    Ok(detail)
}

fn rnn_task(seed: u64, n_train: usize, epochs: usize, batch_size: usize, nu: f64) -> RunConfig {
    RunConfig {
        kind: ModelKind::Rnn,
        layers: vec![256],
        output_dim: Some(256),
        seed,
        hyper: Hyperparams {
            nu,
            gamma0: vec![16],
            epochs,
            batch_size,
            ..Hyperparams::default()
        },
        data: DataConfig::Prototypes(PrototypeTaskConfig {
            n_train,
            n_test: 500,
            input_dim: 64,
            classes: 5,
            flip_p: 0.15,
            steps: 8,
            seed,
        }),
        ..RunConfig::default()
    }
}

/// Trains a one-step recurrent model next to the feedforward network
/// `[a; s0] → [W_xs | W_ss] → W_sy` and checks they stay bit-identical.
fn t1_equivalence() -> Outcome {
    let (k_x, k_s, k_y, classes) = (40, 64, 32, 4);
    let mut r = rng(9);
    let frame = search_frame(&FrameSearchConfig::with_defaults(classes, k_y, 9))
        .map_err(|e| e.to_string())?;
    let hyper = Hyperparams {
        p_r: 0.0,
        gamma0: vec![8],
        batch_size: 10,
        ..Hyperparams::default()
    };
    let dims = RnnDims {
        input: k_x,
        state: k_s,
        output: k_y,
    };
    let mut rnn =
        RnnModel::<i16>::new(dims, frame.clone(), hyper.clone(), 9).map_err(|e| e.to_string())?;
    let l1 = rnn
        .input_layer()
        .hconcat(rnn.recurrent_layer())
        .map_err(|e| e.to_string())?;
    let mut mlp = Network::from_parts(vec![l1, rnn.output_layer().clone()], frame, hyper)
        .map_err(|e| e.to_string())?;
    ensure!(
        mlp.layers()[1].step() == 1,
        "output matrix must keep its unit step"
    );

    let protos: Vec<BitVector> = (0..classes)
        .map(|_| BitVector::random(k_x, &mut r))
        .collect();
    let mut seqs = Vec::new();
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..200 {
        let c = r.random_range(0..classes);
        let mut x = protos[c].clone();
        for i in 0..k_x {
            if r.random_bool(0.2) {
                x.flip(i);
            }
        }
        flat.push(vec![x.concat(rnn.s0())]);
        seqs.push(vec![x]);
        labels.push(c);
    }
    let rnn_data = BinaryDataset::new(seqs, labels.clone(), classes).map_err(|e| e.to_string())?;
    let mlp_data = BinaryDataset::new(flat, labels, classes).map_err(|e| e.to_string())?;
    let mut rs = TrainState::new(&rnn, 5).map_err(|e| e.to_string())?;
    let mut ms = TrainState::new(&mlp, 5).map_err(|e| e.to_string())?;
    let mut updates = 0;
    for epoch in 1..=8 {
        let a = bep_core::train_epoch(&mut rnn, &rnn_data, &mut rs).map_err(|e| e.to_string())?;
        let b = bep_core::train_epoch(&mut mlp, &mlp_data, &mut ms).map_err(|e| e.to_string())?;
        rs.record_accuracy(a.train_correct, a.samples);
        ms.record_accuracy(b.train_correct, b.samples);
        let joined = rnn
            .input_layer()
            .hconcat(rnn.recurrent_layer())
            .map_err(|e| e.to_string())?;
        ensure!(
            joined.hidden() == mlp.layers()[0].hidden(),
            "epoch {epoch}: state weights diverged"
        );
        ensure!(
            rnn.output_layer().hidden() == mlp.layers()[1].hidden(),
            "epoch {epoch}: output weights diverged"
        );
        ensure!(
            a.train_correct == b.train_correct,
            "epoch {epoch}: accuracy diverged"
        );
        for i in 0..rnn_data.len() {
            let lr = rnn
                .forward(rnn_data.sample(i).0)
                .map_err(|e| e.to_string())?
                .logits;
            let lm = mlp
                .forward(&mlp_data.sample(i).0[0])
                .map_err(|e| e.to_string())?
                .logits;
            ensure!(lr == lm, "epoch {epoch}: logits of sample {i} differ");
        }
        updates += a.updates.iter().sum::<u64>();
    }
    ensure!(updates > 0, "no updates happened");
    Ok(format!("8 epochs bit-identical ({updates} row updates)"))
}

fn c9_rnn() -> Outcome {
    let mut accs = Vec::new();
    for seed in 0..3 {
        let s = run::cmd_train(&rnn_task(seed, 1000, 30, 0, 0.05)).map_err(|e| e.to_string())?;
        accs.push(s.final_test.accuracy());
    }
    let t1 = t1_equivalence()?;
    let detail = format!("test {accs:.4?}; T=1: {t1}");
    ensure!(accs.iter().all(|&a| a >= 0.90), "{detail}");
    Ok(detail)
}

fn c10_gating() -> Outcome {
    let nus = [0.0, 0.01, 0.05, 0.25, 1.0];
    let mut means = Vec::new();
    for &nu in &nus {
        let mut sum = 0.0;
        for seed in 0..3 {
            let mut cfg = rnn_task(seed, 50, 5, 5, nu);
            cfg.hyper.horizon = Some(8);
            sum += run::cmd_train(&cfg)
                .map_err(|e| e.to_string())?
                .final_test
                .accuracy();
        }
        means.push(100.0 * sum / 3.0);
    }
    let table: Vec<String> = nus
        .iter()
        .zip(&means)
        .map(|(n, m)| format!("ν={n}: {m:.1}%"))
        .collect();
    let interior = means[1].max(means[2]).max(means[3]);
    let edge = means[0].max(means[4]);
    let detail = format!(
        "{} | interior−endpoint gap {:.2} points",
        table.join(", "),
        interior - edge
    );
    ensure!(interior - edge >= 1.0, "{detail}");
    Ok(detail)
}

fn small_mlp(out: &Path, seed: u64) -> RunConfig {
    RunConfig {
        layers: vec![64, 32],
        seed,
        out_dir: Some(out.to_path_buf()),
        validation_fraction: 0.2,
        hyper: Hyperparams {
            epochs: 6,
            gamma0: vec![4],
            ..Hyperparams::default()
        },
        data: DataConfig::Prototypes(PrototypeTaskConfig {
            n_train: 400,
            n_test: 100,
            input_dim: 50,
            classes: 4,
            flip_p: 0.25,
            steps: 1,
            seed,
        }),
        ..RunConfig::default()
    }
}

fn small_rnn(out: &Path, seed: u64) -> RunConfig {
    RunConfig {
        kind: ModelKind::Rnn,
        layers: vec![48],
        output_dim: Some(32),
        validation_fraction: 0.25,
        data: DataConfig::Prototypes(PrototypeTaskConfig {
            n_train: 240,
            n_test: 60,
            input_dim: 20,
            classes: 3,
            flip_p: 0.2,
            steps: 4,
            seed,
        }),
        ..small_mlp(out, seed)
    }
}

fn c11_determinism() -> Outcome {
    let files = [METRICS_FILE, BEST_CHECKPOINT, FINAL_CHECKPOINT];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (name, make) in [
        ("mlp", small_mlp as fn(&Path, u64) -> RunConfig),
        ("rnn", small_rnn),
    ] {
        let mut outputs = Vec::new();
        for threads in [1, 4, 4] {
            let out = dir
                .path()
                .join(format!("{name}-{threads}-{}", outputs.len()));
            let cfg = make(&out, 7);
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run::cmd_train(&cfg))
                .map_err(|e| e.to_string())?;
            let bytes: Vec<Vec<u8>> = files
                .iter()
                .map(|f| std::fs::read(out.join(f)).unwrap())
                .collect();
            outputs.push(bytes);
        }
        for (k, f) in files.iter().enumerate() {
            ensure!(
                outputs.iter().all(|o| o[k] == outputs[0][k]),
                "{name}: {f} differs across runs or thread counts"
            );
        }
    }
    let audited = float_audit()?;
    Ok(format!(
        "metrics and checkpoints byte-identical at 1 and 4 threads; {audited}"
    ))
}

/// Scans the weight-update path for floating-point types.
fn float_audit() -> Outcome {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let whole = [
        "bits.rs",
        "layer.rs",
        "bep/backward.rs",
        "bep/update.rs",
        "beptt.rs",
    ];
    let mut scanned = Vec::new();
    for f in whole {
        let text = std::fs::read_to_string(src.join(f)).map_err(|e| e.to_string())?;
        scan_floats(f, &text)?;
        scanned.push(f.to_string());
    }
    let net = std::fs::read_to_string(src.join("bep/mod.rs")).map_err(|e| e.to_string())?;
    let begin = net
        .find("impl<S: Stability> Network<S>")
        .ok_or("Network impl not found")?;
    let body = &net[begin..];
    let end = body.find("\n}\n").ok_or("Network impl end not found")?;
    scan_floats("bep/mod.rs Network impl", &body[..end])?;
    scanned.push("Network impl".into());
    Ok(format!("no float types in {}", scanned.join(", ")))
}

fn scan_floats(name: &str, text: &str) -> std::result::Result<(), String> {
    let code = text.split("#[cfg(test)]").next().unwrap_or("");
    for (n, line) in code.lines().enumerate() {
        let line = line.split("//").next().unwrap_or("");
        for tok in line.split(|c: char| !(c.is_alphanumeric() || c == '_')) {
            if matches!(tok, "f32" | "f64" | "Float") {
                return Err(format!(
                    "{name}:{}: float type {tok:?} on the update path",
                    n + 1
                ));
            }
        }
    }
    Ok(())
}

fn roundtrip_dir<S: bep_core::scalar::Stability>(cfg: &RunConfig) -> Outcome {
    let out = cfg.out_dir.as_ref().unwrap();
    let s = run::cmd_train(cfg).map_err(|e| e.to_string())?;
    let path = out.join(BEST_CHECKPOINT);
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let ck = Checkpoint::<S>::from_bytes(&bytes).map_err(|e| e.to_string())?;
    let again = out.join("resaved.ckpt");
    ck.save(&again).map_err(|e| e.to_string())?;
    ensure!(
        std::fs::read(&again).unwrap() == bytes,
        "save→load→save changed bytes"
    );

    let log = std::fs::read_to_string(out.join(METRICS_FILE)).map_err(|e| e.to_string())?;
    let (best_c, best_t, best_epoch) = s.best_validation;
    let rec: run::EpochRecord = log
        .lines()
        .map(|l| serde_json::from_str::<run::EpochRecord>(l).unwrap())
        .find(|r| r.epoch == best_epoch)
        .ok_or("best epoch missing from log")?;
    ensure!(
        (rec.validation_correct, rec.validation_total) == (best_c, best_t),
        "log and summary disagree"
    );
    let data = run::prepare(cfg, ck.encoder.as_ref()).map_err(|e| e.to_string())?;
    let val = data.validation.as_ref().ok_or("no validation split")?;
    let rep = match &ck.model {
        Model::Mlp(m) => evaluate(m, val),
        Model::Rnn(m) => evaluate(m, val),
    }
    .map_err(|e| e.to_string())?;
    ensure!(
        (rep.correct, rep.total) == (best_c, best_t),
        "reloaded model scores {}/{}, log says {best_c}/{best_t}",
        rep.correct,
        rep.total
    );
    let via_cli =
        run::cmd_eval(&path, cfg, run::SplitName::Validation).map_err(|e| e.to_string())?;
    ensure!(
        via_cli.correct == best_c,
        "eval command disagrees with the log"
    );
    Ok(format!("{best_c}/{best_t} at epoch {best_epoch}"))
}

fn c12_checkpoint() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = roundtrip_dir::<i16>(&small_mlp(&dir.path().join("mlp"), 3))?;
    let mut cfg = small_rnn(&dir.path().join("rnn"), 4);
    cfg.hyper.bits = 8;
    let b = roundtrip_dir::<i8>(&cfg)?;
    Ok(format!(
        "byte-identical resave; validation reproduced (mlp {a}, rnn {b})"
    ))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("C1 packed kernels match naive oracles", c1_kernels),
        (
            "C2 back-projection is an exact gated argmax",
            c2_backproject_exact,
        ),
        (
            "C3 relaxed objective has an integral optimum",
            c3_integrality,
        ),
        ("C4 exact alignment increment", c4_exact_increment),
        ("C5 batch aggregation semantics", c5_aggregation),
        ("C6 prototype frame quality", c6_frame),
        ("C7 feedforward learning on noisy prototypes", c7_mlp),
        ("C8 flip-probability bounds", c8_flip_bounds),
        ("C9 recurrent learning and one-step equivalence", c9_rnn),
        ("C10 interior gating optimum", c10_gating),
        ("C11 determinism and integer-only updates", c11_determinism),
        ("C12 checkpoint round trip", c12_checkpoint),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f) in criteria {
        let id = name.split_whitespace().next().unwrap();
        if !filter.is_empty() && !filter.iter().any(|x| x.eq_ignore_ascii_case(id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {name} [{t:.1?}]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} [{t:.1?}]: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

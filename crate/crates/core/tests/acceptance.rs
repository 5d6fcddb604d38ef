//! Acceptance suite. Prints one line per criterion and exits nonzero if
//! any fails. Pass criterion numbers as arguments to run a subset.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bidir_adapt::evalkit::{normalized_rank, EvalRecord};
use bidir_adapt::experiments::{
    desk_model_config, run_domain_shift, run_taxonomy, DomainShiftConfig, DomainShiftReport, TaxonomyConfig,
};
use bidir_adapt::gradcheck::{model_gradcheck, GradCheckOptions, LossProbe};
use bidir_adapt::model::{AttentionMode, ForwardOutput, ModelConfig, Transformer};
use bidir_adapt::objectives::{infonce_loss, mlm_loss, mntp_loss, ContrastiveConfig, MaskOutcome};
use bidir_adapt::tensor::{DType, Tensor};
use bidir_adapt::trainkit::Variant;
use bidir_adapt::vocab::{self, BOS};
use bidir_adapt::weightops::{
    compose, layer_similarity, merge_pair, Checkpoint, FormatError, HeadSource, MergeRecipe, StoredTensor,
    TensorData, ATTENTION_PARTS, MLP_PARTS,
};

// Pinned tolerances.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(60);
const GRAD_COORDS_PER_TENSOR: usize = 128;
const LOSS_TOL: f64 = 1e-6;
const CAUSAL_TRIALS: usize = 1000;
const BIDIR_MIN_SHARE: f64 = 0.99;
/// Complement symmetry, in ulps of the larger input magnitude.
const COMPLEMENT_ULPS: f64 = 4.0;
const SIMILARITY_TOL: f64 = 1e-9;
const SIMILARITY_SCALES: [f64; 5] = [0.05, 0.2, 0.5, 1.0, 3.0];
const TAXONOMY_MIN_GAIN: f64 = 0.10;
const TAXONOMY_TIME_LIMIT: Duration = Duration::from_secs(600);
const SHIFT_MIN_DROP: f64 = 0.10;
const SHIFT_MIN_RECOVERY: f64 = 0.5;
const SHIFT_MIN_RETENTION: f64 = 0.9;
const RANK_TOL: f64 = 1e-12;
const FUZZ_ROUNDS: usize = 1000;
const COMPOSE_TOL: f64 = 1e-6;

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

// 1 ──────────────────────────────────────────────────────────────────────

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let model = Transformer::<f64>::new(ModelConfig::desk(), 42).unwrap();
    let opts = GradCheckOptions {
        tolerance: GRAD_REL_TOL,
        max_coords_per_tensor: Some(GRAD_COORDS_PER_TENSOR),
        seed: 42,
        ..GradCheckOptions::default()
    };
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    let mut all = true;
    for loss in LossProbe::ALL {
        let r = model_gradcheck(&model, loss, 12, opts).unwrap();
        all &= r.passed && r.max_rel_error < GRAD_REL_TOL;
        worst = worst.max(r.max_rel_error);
        parts.push(format!("{} {:.2e} over {} coords", loss.name(), r.max_rel_error, r.coords_checked));
    }
    let elapsed = start.elapsed();
    check(
        all && elapsed < GRAD_TIME_LIMIT,
        format!("{}; worst {worst:.2e} < {GRAD_REL_TOL:e}; {elapsed:.1?}", parts.join(", ")),
    )
}

// 2 ──────────────────────────────────────────────────────────────────────

fn output(logits: Tensor<f64>) -> ForwardOutput<f64> {
    let t = logits.shape()[0];
    ForwardOutput {
        hidden_states: vec![],
        final_hidden: Tensor::zeros([t, 1]),
        logits,
        mode: AttentionMode::Bidirectional,
    }
}

/// Direct `−Σ log softmax(row)[target]` with a max shift.
fn nll_oracle(logits: &[f64], v: usize, pairs: &[(usize, usize)]) -> f64 {
    pairs
        .iter()
        .map(|&(r, t)| {
            let row = &logits[r * v..(r + 1) * v];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            lse - row[t]
        })
        .sum()
}

fn loss_oracles() -> Outcome {
    let v = vocab::DEFAULT_VOCAB;
    let ln_v = (v as f64).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..50 {
        let t = rng.random_range(3..20);
        let tokens: Vec<usize> = std::iter::once(BOS).chain((1..t).map(|_| rng.random_range(0..256))).collect();
        let positions: Vec<usize> = (1..t).filter(|_| rng.random_bool(0.4)).collect();
        let m = positions.len() as f64;
        let outcome = MaskOutcome::from_positions(tokens.clone(), positions.clone()).unwrap();
        let uniform = output(Tensor::zeros([t, v]));
        for loss in [mlm_loss(&uniform, &outcome).unwrap(), mntp_loss(&uniform, &outcome).unwrap()] {
            worst = worst.max((loss.sum - m * ln_v).abs());
        }
        let data: Vec<f64> = (0..t * v).map(|_| rng.random_range(-4.0..4.0)).collect();
        let random = output(Tensor::new([t, v], data.clone()).unwrap());
        let mlm_pairs: Vec<_> = positions.iter().map(|&i| (i, tokens[i])).collect();
        let mntp_pairs: Vec<_> = positions.iter().map(|&i| (i - 1, tokens[i])).collect();
        worst = worst.max((mlm_loss(&random, &outcome).unwrap().sum - nll_oracle(&data, v, &mlm_pairs)).abs());
        worst = worst.max((mntp_loss(&random, &outcome).unwrap().sum - nll_oracle(&data, v, &mntp_pairs)).abs());
    }
    ok &= worst < LOSS_TOL;

    let cfg = ContrastiveConfig::default();
    let e = vec![0.3, -1.2, 0.7, 2.0];
    let mut nce_worst = 0.0f64;
    for n in 0..=7 {
        let loss = infonce_loss(&e, &e, &vec![e.clone(); n], &cfg).unwrap();
        nce_worst = nce_worst.max((loss - (1.0 + n as f64).ln()).abs());
    }
    ok &= nce_worst < LOSS_TOL;

    // Row i−1 is confident in x_i; row i is confident in something else.
    let x: Vec<usize> = vec![BOS, 17, 99, 3, 250, 42];
    let mut logits = Tensor::<f64>::zeros([x.len(), v]);
    for i in 1..x.len() {
        logits.data_mut()[(i - 1) * v + x[i]] = 60.0;
    }
    let shifted = output(logits);
    let outcome = MaskOutcome::from_positions(x.clone(), (1..x.len()).collect()).unwrap();
    let mntp = mntp_loss(&shifted, &outcome).unwrap().sum;
    let mlm = mlm_loss(&shifted, &outcome).unwrap().sum;
    ok &= mntp < LOSS_TOL && mlm >= ln_v / 2.0;

    check(
        ok,
        format!(
            "masked max err {worst:.1e}; infonce max err {nce_worst:.1e}; shift case mntp {mntp:.1e}, mlm {mlm:.2} ≥ {:.2}",
            ln_v / 2.0
        ),
    )
}

// 3 ──────────────────────────────────────────────────────────────────────

fn rows_equal_bitwise(a: &Tensor<f32>, b: &Tensor<f32>, rows: usize) -> bool {
    (0..rows).all(|r| {
        let (x, y) = (a.row(r).unwrap(), b.row(r).unwrap());
        x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
    })
}

fn prefix_unchanged(a: &ForwardOutput<f32>, b: &ForwardOutput<f32>, rows: usize) -> bool {
    a.hidden_states
        .iter()
        .zip(&b.hidden_states)
        .chain(std::iter::once((&a.final_hidden, &b.final_hidden)))
        .chain(std::iter::once((&a.logits, &b.logits)))
        .all(|(x, y)| rows_equal_bitwise(x, y, rows))
}

fn causality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut causal_ok, mut bidir_changed) = (0, 0);
    for trial in 0..CAUSAL_TRIALS {
        let model = Transformer::<f32>::new(ModelConfig::tiny(), 1000 + trial as u64).unwrap();
        let t = rng.random_range(3..=16);
        let tokens: Vec<usize> = std::iter::once(BOS).chain((1..t).map(|_| rng.random_range(0..256))).collect();
        let p = rng.random_range(1..t);
        let mut perturbed = tokens.clone();
        perturbed[p] = (tokens[p] + rng.random_range(1..256)) % 256;
        let run = |mode| (model.forward(&tokens, mode).unwrap(), model.forward(&perturbed, mode).unwrap());
        let (a, b) = run(AttentionMode::Causal);
        causal_ok += prefix_unchanged(&a, &b, p) as usize;
        let (a, b) = run(AttentionMode::Bidirectional);
        bidir_changed += !prefix_unchanged(&a, &b, p) as usize;
    }
    let share = bidir_changed as f64 / CAUSAL_TRIALS as f64;
    check(
        causal_ok == CAUSAL_TRIALS && share >= BIDIR_MIN_SHARE,
        format!("causal prefix identical in {causal_ok}/{CAUSAL_TRIALS}; bidirectional changed in {share:.3} ≥ {BIDIR_MIN_SHARE}"),
    )
}

// 4 ──────────────────────────────────────────────────────────────────────

fn f64_checkpoint(seed: u64) -> Checkpoint {
    Checkpoint::from_model(&Transformer::<f64>::new(ModelConfig::tiny(), seed).unwrap())
}

fn single(value: f64) -> Checkpoint {
    let mut c = Checkpoint::new();
    c.insert("backbone.w", StoredTensor::from_f64(vec![1], &[value], DType::F64).unwrap())
        .unwrap();
    c
}

/// Largest `|x − y|` in units of `ε·max(|a|, |b|)` over matching elements.
fn complement_error(x: &Checkpoint, y: &Checkpoint, a: &Checkpoint, b: &Checkpoint) -> f64 {
    let mut worst = 0.0f64;
    for (name, t) in x.tensors() {
        let (u, va, vb) = (y.get(name).unwrap().values_f64(), a.get(name).unwrap().values_f64(), b.get(name).unwrap().values_f64());
        for (i, v) in t.values_f64().into_iter().enumerate() {
            let scale = va[i].abs().max(vb[i].abs());
            if v != u[i] {
                worst = worst.max((v - u[i]).abs() / (f64::EPSILON * scale));
            }
        }
    }
    worst
}

fn merge_algebra() -> Outcome {
    let (a, b) = (f64_checkpoint(1), f64_checkpoint(2));
    let endpoints = merge_pair(&a, &b, 0.0).unwrap().bit_eq(&a) && merge_pair(&a, &b, 1.0).unwrap().bit_eq(&b);
    let mut complement = 0.0f64;
    let mut idempotent = true;
    for r in [0.1, 0.25, 0.3, 0.5, 0.7, 0.9] {
        let (x, y) = (merge_pair(&a, &b, r).unwrap(), merge_pair(&b, &a, 1.0 - r).unwrap());
        complement = complement.max(complement_error(&x, &y, &a, &b));
        idempotent &= merge_pair(&a, &a, r).unwrap().bit_eq(&a);
    }
    let example = merge_pair(&single(2.0), &single(4.0), 0.3).unwrap().get("backbone.w").unwrap().values_f64()[0];
    check(
        endpoints && complement <= COMPLEMENT_ULPS && idempotent && example == 2.6,
        format!(
            "endpoints bit-exact {endpoints}; complement within {complement:.2} ulp (≤ {COMPLEMENT_ULPS}); idempotent {idempotent}; (2.0, 4.0, 0.3) → {example}"
        ),
    )
}

// 5 ──────────────────────────────────────────────────────────────────────

fn similarity() -> Outcome {
    let a = f64_checkpoint(5);
    let identity = layer_similarity(&a, &a).unwrap();
    let ones = identity.layers.iter().all(|l| l.cosine == 1.0 && l.attention == 1.0 && l.mlp == 1.0)
        && identity.mean == 1.0;

    // Per tensor, a random direction with its component along the tensor
    // removed, scaled to the tensor's norm.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut directions: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (name, t) in a.tensors() {
        let x = t.values_f64();
        let mut d: Vec<f64> = x.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let proj = d.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() / x.iter().map(|q| q * q).sum::<f64>();
        d.iter_mut().zip(&x).for_each(|(p, q)| *p -= proj * q);
        let scale = (x.iter().map(|q| q * q).sum::<f64>() / d.iter().map(|p| p * p).sum::<f64>()).sqrt();
        directions.insert(name.clone(), d.into_iter().map(|p| p * scale).collect());
    }
    let layers = identity.layers.len();
    let mut curves = vec![Vec::new(); layers];
    let mut oracle_err = 0.0f64;
    for s in SIMILARITY_SCALES {
        let mut b = Checkpoint::new();
        b.metadata = a.metadata.clone();
        for (name, t) in a.tensors() {
            let v: Vec<f64> = t.values_f64().iter().zip(&directions[name]).map(|(x, d)| x + s * d).collect();
            b.insert(name.clone(), StoredTensor::from_f64(t.shape().to_vec(), &v, DType::F64).unwrap())
                .unwrap();
        }
        let rep = layer_similarity(&a, &b).unwrap();
        for (l, row) in rep.layers.iter().enumerate() {
            curves[l].push(row.cosine);
            // Each tensor moves orthogonally by s times its own norm.
            oracle_err = oracle_err.max((row.cosine - 1.0 / (1.0 + s * s).sqrt()).abs());
        }
    }
    let decreasing = curves.iter().all(|c| c.windows(2).all(|w| w[1] < w[0]));
    let shown: Vec<String> = curves[0].iter().map(|c| format!("{c:.4}")).collect();
    let parts_listed = ATTENTION_PARTS.len() + MLP_PARTS.len();
    check(
        ones && decreasing && oracle_err < SIMILARITY_TOL,
        format!(
            "identity all ones {ones}; layer 0 cosine over scales [{}] strictly decreasing {decreasing}; closed-form err {oracle_err:.1e}; {layers} layers × {parts_listed} parts",
            shown.join(", ")
        ),
    )
}

// 6 ──────────────────────────────────────────────────────────────────────

fn taxonomy() -> Outcome {
    let report = run_taxonomy(&TaxonomyConfig::default()).unwrap();
    let gain = report.mntp_gain();
    let (bi_con, bi_mntp) = (report.scores(Variant::BiContrastive), report.scores(Variant::BiMntp));
    let ranks: Vec<(Variant, f64)> = [Variant::BiMntp, Variant::BiContrastive, Variant::BiMntpContrastive]
        .into_iter()
        .map(|v| (v, report.mean_rank(v)))
        .collect();
    let combined = ranks[2].1;
    let a = gain >= TAXONOMY_MIN_GAIN;
    let b = bi_con.retrieval_accuracy > bi_mntp.retrieval_accuracy;
    let c = combined <= ranks[0].1 && combined <= ranks[1].1;
    let time_ok = report.elapsed < TAXONOMY_TIME_LIMIT;
    for s in &report.variants {
        println!(
            "    {:24} probe loss {:.4}  retrieval acc {:.3}  ndcg@10 {:.3}  mean rank {:.3}",
            s.variant,
            s.probe_loss,
            s.retrieval_accuracy,
            s.retrieval_ndcg,
            report.ranks.mean_rank(&s.variant).unwrap()
        );
    }
    check(
        a && b && c && time_ok,
        format!(
            "(a) mntp gain {gain:.3} ≥ {TAXONOMY_MIN_GAIN} {a}; (b) retrieval {:.3} > {:.3} {b}; (c) rank {combined:.3} ≤ min({:.3}, {:.3}) {c}; {:.0?}",
            bi_con.retrieval_accuracy,
            bi_mntp.retrieval_accuracy,
            ranks[0].1,
            ranks[1].1,
            report.elapsed
        ),
    )
}

// 7, 8 ───────────────────────────────────────────────────────────────────

fn domain_shift() -> &'static DomainShiftReport {
    static REPORT: OnceLock<DomainShiftReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let r = run_domain_shift(&DomainShiftConfig::default()).unwrap();
        let show = |name: &str, s: &bidir_adapt::experiments::DomainScores| {
            println!(
                "    {name:8} A ndcg {:.3} acc {:.3} | B ndcg {:.3} acc {:.3}",
                s.a.ndcg, s.a.accuracy, s.b.ndcg, s.b.accuracy
            )
        };
        show("pre", &r.pre);
        show("adapted", &r.adapted);
        show("merged", &r.merged);
        for arm in &r.mixture {
            show(&format!("rho {}", arm.ratio), &arm.scores);
        }
        r
    })
}

fn forgetting_and_merge() -> Outcome {
    let r = domain_shift();
    let (drop, recovery, retention) = (r.drop(), r.recovery(), r.retention());
    check(
        drop >= SHIFT_MIN_DROP && recovery >= SHIFT_MIN_RECOVERY && retention >= SHIFT_MIN_RETENTION,
        format!(
            "A ndcg@10 drop {drop:.3} ≥ {SHIFT_MIN_DROP} after {} steps; merge recovers {recovery:.3} ≥ {SHIFT_MIN_RECOVERY}; keeps {retention:.3} ≥ {SHIFT_MIN_RETENTION} of the B gain",
            r.adapt_steps
        ),
    )
}

fn mixture_retention() -> Outcome {
    let r = domain_shift();
    let (pure, mixed) = (r.arm(0.0).unwrap().retention(&r.pre), r.arm(0.2).unwrap().retention(&r.pre));
    check(
        mixed > pure,
        format!("A retention with rho 0.2 {mixed:.3} > rho 0 {pure:.3} at {} steps", r.adapt_steps),
    )
}

// 9 ──────────────────────────────────────────────────────────────────────

fn records(grid: &[(&str, Vec<f64>)]) -> Vec<EvalRecord> {
    grid.iter()
        .flat_map(|(t, v)| v.iter().enumerate().map(move |(m, s)| EvalRecord::new(*t, format!("m{m}"), *s)))
        .collect()
}

fn rank_exactness() -> Outcome {
    let mut err = 0.0f64;
    let t = normalized_rank(&records(&[("t", vec![0.9, 0.5, 0.1])])).unwrap();
    err = err.max(t.ranks[0].iter().zip([0.0, 1.0, 2.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

    // Four models, three tasks, worked by hand:
    // t1 (80, 60, 70, 40): span 40, ranks 3·(0, 20, 10, 40)/40 = (0, 1.5, 0.75, 3)
    // t2 (0.2, 0.6, 0.6, 0.4): span 0.4, ranks 3·(0.4, 0, 0, 0.2)/0.4 = (3, 0, 0, 1.5)
    // t3 (−1, −3, −2, −5): span 4, ranks 3·(0, 2, 1, 4)/4 = (0, 1.5, 0.75, 3)
    // means (1, 1, 0.5, 2.5)
    let t = normalized_rank(&records(&[
        ("t1", vec![80.0, 60.0, 70.0, 40.0]),
        ("t2", vec![0.2, 0.6, 0.6, 0.4]),
        ("t3", vec![-1.0, -3.0, -2.0, -5.0]),
    ]))
    .unwrap();
    let expected = [[0.0, 1.5, 0.75, 3.0], [3.0, 0.0, 0.0, 1.5], [0.0, 1.5, 0.75, 3.0]];
    for (row, want) in t.ranks.iter().zip(expected) {
        err = err.max(row.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    err = err.max(t.mean.iter().zip([1.0, 1.0, 0.5, 2.5]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut affine_err = 0.0f64;
    for _ in 0..500 {
        let (tasks, models) = (rng.random_range(1..6), rng.random_range(2..7));
        let grid: Vec<(String, Vec<f64>)> = (0..tasks)
            .map(|i| (format!("t{i}"), (0..models).map(|_| rng.random_range(-5.0..5.0)).collect()))
            .collect();
        let scaled: Vec<(String, Vec<f64>)> = grid
            .iter()
            .map(|(t, v)| {
                let (k, c) = (rng.random_range(0.01..50.0), rng.random_range(-100.0..100.0));
                (t.clone(), v.iter().map(|x| k * x + c).collect())
            })
            .collect();
        let borrow = |g: &[(String, Vec<f64>)]| -> Vec<EvalRecord> {
            records(&g.iter().map(|(t, v)| (t.as_str(), v.clone())).collect::<Vec<_>>())
        };
        let (x, y) = (normalized_rank(&borrow(&grid)).unwrap(), normalized_rank(&borrow(&scaled)).unwrap());
        for (p, q) in x.mean.iter().zip(&y.mean) {
            affine_err = affine_err.max((p - q).abs());
        }
    }
    check(
        err < RANK_TOL && affine_err < 1e-9,
        format!("hand tables max err {err:.1e} < {RANK_TOL:e}; affine rescaling max mean-rank change {affine_err:.1e}"),
    )
}

// 10 ─────────────────────────────────────────────────────────────────────

fn random_name(rng: &mut ChaCha8Rng, i: usize) -> String {
    let part = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.random_range(1..6);
        (0..n)
            .map(|_| b"abcxyz0189_"[rng.random_range(0..11)] as char)
            .collect()
    };
    if rng.random_bool(0.7) {
        format!("backbone.{}{i}.{}", part(rng), part(rng))
    } else {
        format!("head.{}.{}{i}", part(rng), part(rng))
    }
}

fn random_checkpoint(rng: &mut ChaCha8Rng) -> Checkpoint {
    let mut c = Checkpoint::new();
    for i in 0..rng.random_range(0..6) {
        let rank = rng.random_range(0..4);
        let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(0..5)).collect();
        let n: usize = shape.iter().product();
        let data = if rng.random_bool(0.5) {
            TensorData::F32((0..n).map(|_| f32::from_bits(rng.random())).collect())
        } else {
            TensorData::F64((0..n).map(|_| f64::from_bits(rng.random())).collect())
        };
        c.insert(random_name(rng, i), StoredTensor::new(shape, data).unwrap()).unwrap();
    }
    for _ in 0..rng.random_range(0..4) {
        let key: String = (0..rng.random_range(1..8)).map(|_| rng.random_range('a'..='z')).collect();
        let value: String = (0..rng.random_range(0..12))
            .map(|_| ['x', 'é', '"', '\\', '\n', '∑', '7', ' '][rng.random_range(0..8)])
            .collect();
        c.metadata.insert(key, value);
    }
    c
}

fn raw(header: &str, payload: &[u8]) -> Vec<u8> {
    let mut out = b"BDLM\x01".to_vec();
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(payload);
    out
}

fn corrupted_cases() -> Vec<(&'static str, Vec<u8>, &'static str)> {
    let mut good = Checkpoint::new();
    good.insert("backbone.w", StoredTensor::from_f64(vec![2], &[1.0, 2.0], DType::F32).unwrap())
        .unwrap();
    let good = good.to_bytes();
    let e = r#""dtype":"F32","shape":[2]"#;
    let p8 = [0u8; 8];
    let mut bad_len = raw("{}", &[]);
    bad_len[5..13].copy_from_slice(&1000u64.to_le_bytes());
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let mut bad_version = good.clone();
    bad_version[4] = 2;
    vec![
        ("empty file", vec![], "truncated"),
        ("three bytes", b"BDL".to_vec(), "truncated"),
        ("wrong magic", bad_magic, "magic"),
        ("unknown version", bad_version, "version"),
        ("no header length", b"BDLM\x01\x00\x00".to_vec(), "truncated"),
        ("header longer than file", bad_len, "truncated"),
        ("payload cut short", good[..good.len() - 1].to_vec(), "offsets"),
        ("header not UTF-8", [&b"BDLM\x01"[..], &1u64.to_le_bytes(), &[0xff]].concat(), "header"),
        ("header not JSON", raw("{not json", &[]), "header"),
        ("header not an object", raw("[1,2]", &[]), "header"),
        ("entry lacks offsets", raw(&format!(r#"{{"backbone.w":{{{e}}}}}"#), &p8), "header"),
        ("entry has unknown field", raw(&format!(r#"{{"backbone.w":{{{e},"data_offsets":[0,8],"x":1}}}}"#), &p8), "header"),
        ("name outside namespaces", raw(&format!(r#"{{"weights.w":{{{e},"data_offsets":[0,8]}}}}"#), &p8), "name"),
        ("head without modality", raw(&format!(r#"{{"head.w":{{{e},"data_offsets":[0,8]}}}}"#), &p8), "name"),
        (
            "duplicate tensor",
            raw(&format!(r#"{{"backbone.w":{{{e},"data_offsets":[0,8]}},"backbone.w":{{{e},"data_offsets":[0,8]}}}}"#), &p8),
            "duplicate",
        ),
        ("unknown dtype", raw(r#"{"backbone.w":{"dtype":"F16","shape":[2],"data_offsets":[0,8]}}"#, &p8), "dtype"),
        ("shape disagrees with span", raw(r#"{"backbone.w":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}}"#, &p8), "shape"),
        ("offsets past payload", raw(&format!(r#"{{"backbone.w":{{{e},"data_offsets":[4,12]}}}}"#), &p8), "offsets"),
        ("offsets reversed", raw(&format!(r#"{{"backbone.w":{{{e},"data_offsets":[8,0]}}}}"#), &p8), "offsets"),
        (
            "overlapping tensors",
            raw(&format!(r#"{{"backbone.a":{{{e},"data_offsets":[0,8]}},"backbone.b":{{{e},"data_offsets":[4,12]}}}}"#), &[0u8; 12]),
            "overlap",
        ),
        ("gap before tensor", raw(&format!(r#"{{"backbone.w":{{{e},"data_offsets":[4,12]}}}}"#), &[0u8; 12]), "gap"),
        ("trailing bytes", raw(&format!(r#"{{"backbone.w":{{{e},"data_offsets":[0,8]}}}}"#), &[0u8; 11]), "trailing"),
        ("metadata not a string map", raw(r#"{"__metadata__":{"k":1}}"#, &[]), "metadata"),
        ("metadata twice", raw(r#"{"__metadata__":{},"__metadata__":{}}"#, &[]), "duplicate"),
    ]
}

fn checkpoint_format() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut exact = 0;
    for _ in 0..FUZZ_ROUNDS {
        let c = random_checkpoint(&mut rng);
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        exact += (back.bit_eq(&c) && back.metadata == c.metadata && back.to_bytes() == bytes) as usize;
    }
    let cases = corrupted_cases();
    let mut misses = Vec::new();
    for (what, bytes, kind) in &cases {
        match Checkpoint::from_bytes(bytes) {
            Err(e) if e.kind() == *kind => {}
            Err(e) => misses.push(format!("{what}: got {} ({e})", e.kind())),
            Ok(_) => misses.push(format!("{what}: accepted")),
        }
    }
    let io = Checkpoint::load(std::path::Path::new("/nonexistent/x.ckpt"));
    if !matches!(io, Err(FormatError::Io { .. })) {
        misses.push("missing file: not an io error".into());
    }
    check(
        exact == FUZZ_ROUNDS && misses.is_empty() && cases.len() >= 20,
        format!(
            "{exact}/{FUZZ_ROUNDS} round trips bit-exact; {}/{} corrupted files rejected with the expected category{}",
            cases.len() + 1 - misses.len(),
            cases.len() + 1,
            if misses.is_empty() { String::new() } else { format!(" ({})", misses.join("; ")) }
        ),
    )
}

// 11 ─────────────────────────────────────────────────────────────────────

fn head_checkpoint(modality: &str, backbone_seed: u64, rng: &mut ChaCha8Rng) -> Checkpoint {
    let mut c = Checkpoint::from_model(&Transformer::<f32>::new(desk_model_config(), backbone_seed).unwrap());
    for (part, shape) in [("proj", vec![16, 64]), ("bias", vec![64])] {
        let n = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        c.insert(format!("head.{modality}.{part}"), StoredTensor::from_f64(shape, &v, DType::F32).unwrap())
            .unwrap();
    }
    c
}

fn composition() -> Outcome {
    let backbones: Vec<Checkpoint> = (0..3)
        .map(|s| Checkpoint::from_model(&Transformer::<f32>::new(desk_model_config(), 100 + s).unwrap()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let heads: Vec<HeadSource> = [("vision", 200), ("speech", 201)]
        .into_iter()
        .map(|(m, seed)| HeadSource {
            checkpoint: head_checkpoint(m, seed, &mut rng),
            modality: m.into(),
            label: format!("{m}-specialist"),
        })
        .collect();
    let omni = compose(&MergeRecipe::equal(backbones.clone()), &heads).unwrap();

    let mut mean_err = 0.0f64;
    let mut backbone_count = 0;
    for (name, t) in omni.tensors().iter().filter(|(n, _)| n.starts_with("backbone.")) {
        backbone_count += 1;
        let inputs: Vec<Vec<f64>> = backbones.iter().map(|b| b.get(name).unwrap().values_f64()).collect();
        for (i, got) in t.values_f64().into_iter().enumerate() {
            let mean = inputs.iter().map(|v| v[i]).sum::<f64>() / 3.0;
            mean_err = mean_err.max((got - mean).abs());
        }
    }
    let heads_exact = heads.iter().all(|h| {
        h.checkpoint
            .tensors()
            .iter()
            .filter(|(n, _)| n.starts_with("head."))
            .all(|(n, t)| omni.get(n).is_some_and(|o| o.bit_eq(t)))
    });
    let head_count = omni.names().filter(|n| n.starts_with("head.")).count();
    let model = omni.to_model::<f32>().unwrap();
    let out = model.forward(&vocab::encode("compose the backbones", 40), AttentionMode::Bidirectional).unwrap();
    let finite = out.final_hidden.data().iter().all(|x| x.is_finite());
    check(
        mean_err < COMPOSE_TOL && backbone_count == backbones[0].len() && heads_exact && head_count == 4 && finite,
        format!(
            "{backbone_count} backbone tensors within {mean_err:.1e} of the mean; {head_count} head tensors bit-identical {heads_exact}; forward finite {finite}"
        ),
    )
}

// ────────────────────────────────────────────────────────────────────────

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient fidelity", gradient_fidelity),
        ("loss oracles", loss_oracles),
        ("causality", causality),
        ("merge algebra", merge_algebra),
        ("similarity diagnostics", similarity),
        ("taxonomy", taxonomy),
        ("forgetting and merge recovery", forgetting_and_merge),
        ("mixture retention", mixture_retention),
        ("rank aggregation", rank_exactness),
        ("checkpoint format", checkpoint_format),
        ("composition", composition),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            check(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {n:>2} {name:30} {} [{:.1?}] {}",
            if outcome.passed { "PASS" } else { "FAIL" },
            start.elapsed(),
            outcome.detail
        );
        if !outcome.passed {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

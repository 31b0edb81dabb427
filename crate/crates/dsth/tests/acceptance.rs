//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured value next to its threshold. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::time::Instant;

use common::{convergence_bench, random_feasible_codes, retrieval_bench, Bench};
use dsth::anchors::build_anchor_model;
use dsth::dataset::{synthesize_dataset, SynthParams};
use dsth::eval::average_precision;
use dsth::index::{pack, PackedCodeIndex};
use dsth::matrix::Matrix;
use dsth::optim::{BinaryCodes, DsthConfig, DsthOptimizer, Variant};
use dsth::rng::{gaussian_matrix, rng_for};
use rand::Rng;

/// 1. Constraint suite: uncorrelation, balance, and exact ±1 discreteness
///    hold after every Z-update of a full fit, for L in {8, 16, 32}.
#[test]
fn acceptance_01_constraint_suite() {
    let start = Instant::now();
    let bench = Bench {
        n_classes: 4,
        per_class: 64,
        d_x: 32,
        d_y: 16,
        noise: 0.4,
        consistency: 1.0,
        n_query: 0,
        n_train: 0,
        anchors_k: 32,
        anchors_s: 5,
        code_length: 16,
    };
    let data = bench.dataset(42);
    let n = data.len() as f64;
    let anchors = build_anchor_model(&data.visual, 32, 5, None, 25, 43).unwrap();
    for &l in &[8usize, 16, 32] {
        let cfg = DsthConfig::<f64> {
            code_length: l,
            seed: 44,
            ..DsthConfig::default()
        };
        let opt = DsthOptimizer::new(&data.visual, &data.text, &anchors, &cfg).unwrap();
        let out = opt.fit().unwrap();
        assert!(!out.trace.records.is_empty());
        for r in &out.trace.records {
            assert!(
                r.uncorrelation_defect <= 1e-6 * n,
                "L={l} iter {}: uncorrelation defect {}",
                r.iter,
                r.uncorrelation_defect
            );
            assert!(
                r.balance_defect <= 1e-6 * n.sqrt(),
                "L={l} iter {}: balance defect {}",
                r.iter,
                r.balance_defect
            );
            assert!(r.discrete_exact, "L={l} iter {}: B not exactly ±1", r.iter);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "constraint suite took {elapsed:.1}s");
    println!("PASS  1. constraint suite: all Z-updates feasible for L in {{8,16,32}} at N=256 ({elapsed:.1}s < 30s)");
}

/// 2. Theorem-1 dominance: each Z-update attains at least the trace value of
///    1000 random feasible matrices, every iteration.
#[test]
fn acceptance_02_theorem1_dominance() {
    let (l, n) = (8usize, 64usize);
    let data = synthesize_dataset::<f64>(&SynthParams {
        n_classes: 4,
        per_class: 16,
        d_x: 16,
        d_y: 8,
        noise: 0.4,
        cross_modal_consistency: 1.0,
        seed: 50,
    })
    .unwrap();
    let anchors = build_anchor_model(&data.visual, 8, 3, None, 25, 51).unwrap();
    let cfg = DsthConfig::<f64> {
        code_length: l,
        seed: 52,
        ..DsthConfig::default()
    };
    let opt = DsthOptimizer::new(&data.visual, &data.text, &anchors, &cfg).unwrap();

    // 1000 feasible matrices, built by the same orthonormal construction.
    let mut feasible = Vec::with_capacity(1000);
    let mut seed = 0u64;
    while feasible.len() < 1000 {
        if let Some(z) = random_feasible_codes(l, n, 9000 + seed) {
            feasible.push(z);
        }
        seed += 1;
    }

    let mut st = opt.initialize_state().unwrap();
    let mut worst_margin = f64::INFINITY;
    for _ in 0..8 {
        opt.update_auxiliary(&mut st);
        opt.update_bases(&mut st).unwrap();
        opt.update_codes_b(&mut st).unwrap();
        let c = opt.z_subproblem_matrix(&st).unwrap();
        opt.update_codes_z(&mut st).unwrap();
        let attained = st.relaxed.frob_dot(&c);
        for z_rand in &feasible {
            let margin = attained - z_rand.frob_dot(&c);
            worst_margin = worst_margin.min(margin);
            assert!(margin >= -1e-6, "dominance violated by {margin}");
        }
        opt.update_multipliers(&mut st);
        st.iter += 1;
    }
    println!("PASS  2. theorem-1 dominance: 8 iterations x 1000 feasible points, worst margin {worst_margin:.3e} >= -1e-6");
}

/// 3. Closed-form oracles: slack/basis updates are stationary points of
///    their subproblems (central differences), and the discrete update matches
///    per-entry exhaustive search, on 100 random small instances.
#[test]
fn acceptance_03_closed_form_oracles() {
    let mut instances = 0;
    for seed in 0..100u64 {
        let mut rng = rng_for(30_000 + seed);
        let d_x = rng.random_range(3..=8);
        let d_y = rng.random_range(2..=8);
        let n = rng.random_range(6..=16);
        let l = rng.random_range(2..=3.min(d_x).min(n));
        let x: Matrix<f64> = gaussian_matrix(d_x, n, &mut rng);
        let y: Matrix<f64> = gaussian_matrix(d_y, n, &mut rng);
        let anchors = build_anchor_model(&x, 3.min(n), 2, None, 20, seed).unwrap();
        let cfg = DsthConfig::<f64> {
            code_length: l,
            seed: 31_000 + seed,
            ..DsthConfig::default()
        };
        let opt = DsthOptimizer::new(&x, &y, &anchors, &cfg).unwrap();
        let mut st = opt.initialize_state().unwrap();
        st.penalty = 0.1 + rng.random_range(0.0..4.0);
        st.visual_mult = gaussian_matrix(d_x, n, &mut rng);
        st.text_mult = gaussian_matrix(d_y, n, &mut rng);
        st.code_mult = gaussian_matrix(l, n, &mut rng);
        st.visual_slack = gaussian_matrix(d_x, n, &mut rng);
        st.text_slack = gaussian_matrix(d_y, n, &mut rng);
        let mu = st.penalty;

        // Slack updates: ‖A‖² + (μ/2)‖M − A + E/μ‖² is stationary.
        opt.update_auxiliary(&mut st);
        {
            let m = x.sub(&st.visual_basis.mul(&st.relaxed));
            let f = |a: &Matrix<f64>| {
                let an = a.frob_norm();
                let mut r = m.sub(a);
                r.add_scaled(&st.visual_mult, 1.0 / mu);
                let rn = r.frob_norm();
                an * an + 0.5 * mu * rn * rn
            };
            assert_stationary(&st.visual_slack, f, "A_x", seed);
            let my = y.sub(&st.text_transfer.mul(&st.relaxed));
            let g = |a: &Matrix<f64>| {
                let an = a.frob_norm();
                let mut r = my.sub(a);
                r.add_scaled(&st.text_mult, 1.0 / mu);
                let rn = r.frob_norm();
                an * an + 0.5 * mu * rn * rn
            };
            assert_stationary(&st.text_slack, g, "A_y", seed);
        }

        // Basis updates: ‖X − UZ − A + E/μ‖² is stationary.
        opt.update_bases(&mut st).unwrap();
        {
            let mut mx = x.sub(&st.visual_slack);
            mx.add_scaled(&st.visual_mult, 1.0 / mu);
            let z = st.relaxed.clone();
            let f = |u: &Matrix<f64>| {
                let r = mx.sub(&u.mul(&z)).frob_norm();
                r * r
            };
            assert_stationary(&st.visual_basis, f, "U", seed);
            let mut my = y.sub(&st.text_slack);
            my.add_scaled(&st.text_mult, 1.0 / mu);
            let g = |w: &Matrix<f64>| {
                let r = my.sub(&w.mul(&z)).frob_norm();
                r * r
            };
            assert_stationary(&st.text_transfer, g, "W", seed);
        }

        // Discrete update: entry-wise exhaustive sign search, exact match.
        opt.update_codes_b(&mut st).unwrap();
        {
            let lap = anchors.apply_laplacian(&st.relaxed).unwrap();
            for row in 0..l {
                for colf in 0..n {
                    let cost = |b: f64| {
                        let r = st.relaxed.at(row, colf) - b + st.code_mult.at(row, colf) / mu;
                        cfg.alpha * lap.at(row, colf) * b + 0.5 * mu * r * r
                    };
                    let best = if cost(1.0) <= cost(-1.0) { 1.0 } else { -1.0 };
                    assert_eq!(
                        st.discrete.at(row, colf),
                        best,
                        "B mismatch at ({row},{colf}), instance {seed}"
                    );
                }
            }
        }
        instances += 1;
    }
    assert!(instances >= 100);
    println!("PASS  3. closed-form oracles: A_x/A_y/U/W stationary and B exhaustive-exact on {instances} instances");
}

fn assert_stationary(at: &Matrix<f64>, f: impl Fn(&Matrix<f64>) -> f64, what: &str, seed: u64) {
    let base = f(at);
    let step = 1e-6;
    let mut grad_norm2 = 0.0;
    for r in 0..at.rows() {
        for c in 0..at.cols() {
            let mut plus = at.clone();
            plus.set(r, c, plus.at(r, c) + step);
            let mut minus = at.clone();
            minus.set(r, c, minus.at(r, c) - step);
            let g = (f(&plus) - f(&minus)) / (2.0 * step);
            grad_norm2 += g * g;
        }
    }
    let bound = 1e-5 * (1.0 + base.abs());
    assert!(
        grad_norm2.sqrt() <= bound,
        "{what} gradient {} > {bound} (instance {seed})",
        grad_norm2.sqrt()
    );
}

/// 4. Anchor-graph equivalence: the implicit Laplacian product matches dense
///    assembly, and the implied affinity is row-stochastic.
#[test]
fn acceptance_04_anchor_graph_equivalence() {
    let mut worst_rel = 0.0f64;
    let mut worst_row = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = rng_for(40_000 + seed);
        let n = rng.random_range(20..=200);
        let k = rng.random_range(2..=16);
        let s = rng.random_range(1..=k);
        let d = rng.random_range(2..=6);
        let x: Matrix<f64> = gaussian_matrix(d, n, &mut rng);
        let model = build_anchor_model(&x, k, s, None, 25, seed).unwrap();
        model.validate().unwrap();

        let m: Matrix<f64> = gaussian_matrix(4, n, &mut rng);
        let fast = model.apply_laplacian(&m).unwrap();
        let dense = model.dense_affinity();
        let slow = m.sub(&m.mul(&dense));
        let rel = fast.sub(&slow).frob_norm() / slow.frob_norm().max(1.0);
        worst_rel = worst_rel.max(rel);
        assert!(rel <= 1e-8, "instance {seed}: relative error {rel}");

        for srow in dense.row_sums() {
            worst_row = worst_row.max((srow - 1.0).abs());
            assert!((srow - 1.0).abs() <= 1e-8, "row sum {srow}");
        }
    }
    println!("PASS  4. anchor-graph equivalence: dense-assembly error {worst_rel:.2e} <= 1e-8, row-sum defect {worst_row:.2e} <= 1e-8");
}

/// 5. Convergence shape over the 50-iteration horizon: the objective at the
///    discrete codes drops at least 50% from the initial state and its relative
///    change over the final five iterations is below 1e-3.
#[test]
fn acceptance_05_convergence_shape() {
    let bench = convergence_bench();
    let mut min_drop = f64::INFINITY;
    let mut max_flat = 0.0f64;
    for seed in 0..5u64 {
        let data = bench.dataset(500 + seed);
        let anchors = build_anchor_model(
            &data.visual,
            bench.anchors_k,
            bench.anchors_s,
            None,
            25,
            600 + seed,
        )
        .unwrap();
        let cfg = DsthConfig::<f64> {
            code_length: bench.code_length,
            max_iter: 50,
            rel_tol: 0.0, // examine the full horizon
            seed: 700 + seed,
            ..DsthConfig::default()
        };
        let opt = DsthOptimizer::new(&data.visual, &data.text, &anchors, &cfg).unwrap();
        let out = opt.fit().unwrap();
        let objs: Vec<f64> = out.trace.records.iter().map(|r| r.objective).collect();
        assert_eq!(objs.len(), 50);
        let drop = 1.0 - objs.last().unwrap() / out.initial_objective;
        let tail = &objs[45..];
        let hi = tail.iter().cloned().fold(f64::MIN, f64::max);
        let lo = tail.iter().cloned().fold(f64::MAX, f64::min);
        let flat = (hi - lo) / hi.abs().max(1.0);
        min_drop = min_drop.min(drop);
        max_flat = max_flat.max(flat);
        assert!(drop >= 0.5, "seed {seed}: objective dropped only {drop:.3}");
        assert!(
            flat < 1e-3,
            "seed {seed}: final-5 relative change {flat:.2e}"
        );
    }
    println!("PASS  5. convergence shape: drop >= {min_drop:.3} (>= 0.5), final-5 change <= {max_flat:.2e} (< 1e-3) on 5 seeds");
}

/// 6. Semantic-transfer direction: with clean text and noisy visuals, the
///    full optimizer beats the visual-only ablation by at least 0.02 mAP@100,
///    averaged over 5 seeds.
#[test]
fn acceptance_06_semantic_transfer_direction() {
    let bench = retrieval_bench();
    let seeds: Vec<u64> = (0..5).map(|s| 1000 + s).collect();
    let full: f64 = seeds
        .iter()
        .map(|&s| bench.map_at(s, Variant::Full, 100))
        .sum::<f64>()
        / 5.0;
    let visual: f64 = seeds
        .iter()
        .map(|&s| bench.map_at(s, Variant::VisualOnly, 100))
        .sum::<f64>()
        / 5.0;
    assert!(
        (0.5..=0.85).contains(&visual),
        "benchmark miscalibrated: visual-only mAP {visual:.4} outside [0.5, 0.85]"
    );
    assert!(
        full - visual >= 0.02,
        "transfer gap {:.4} < 0.02 (full {full:.4}, visual {visual:.4})",
        full - visual
    );
    println!("PASS  6. semantic transfer: full {full:.4} vs visual-only {visual:.4} (gap {:+.4} >= 0.02)", full - visual);
}

/// 7. Discreteness direction: the full optimizer is no worse than
///    relax-and-round beyond 0.01 mAP@100, averaged over 5 seeds.
#[test]
fn acceptance_07_discreteness_direction() {
    let bench = retrieval_bench();
    let seeds: Vec<u64> = (0..5).map(|s| 1000 + s).collect();
    let full: f64 = seeds
        .iter()
        .map(|&s| bench.map_at(s, Variant::Full, 100))
        .sum::<f64>()
        / 5.0;
    let relaxed: f64 = seeds
        .iter()
        .map(|&s| bench.map_at(s, Variant::RelaxedRounding, 100))
        .sum::<f64>()
        / 5.0;
    assert!(
        full >= relaxed - 0.01,
        "full {full:.4} fell more than 0.01 below relaxed {relaxed:.4}"
    );
    println!(
        "PASS  7. discreteness: full {full:.4} vs relaxed+rounded {relaxed:.4} (>= relaxed - 0.01)"
    );
}

/// 8. Retrieval correctness: packed top-k equals a bit-counting oracle with
///    the same tie rule on 10,000+ random trials across L in {16, 64, 128}.
#[test]
fn acceptance_08_retrieval_correctness() {
    let mut trials = 0usize;
    for &l in &[16usize, 64, 128] {
        let mut rng = rng_for(80_000 + l as u64);
        for _ in 0..12 {
            let n = rng.random_range(200..=330);
            let cols: Vec<Vec<u8>> = (0..n)
                .map(|_| (0..l).map(|_| rng.random_range(0..2u8)).collect())
                .collect();
            // Non-contiguous ids exercise the tie rule.
            let ids: Vec<u64> = (0..n as u64).map(|i| i * 13 + 5).collect();
            let signs =
                Matrix::<f64>::from_fn(l, n, |r, c| if cols[c][r] == 1 { 1.0 } else { -1.0 });
            let index = PackedCodeIndex::build(&BinaryCodes::from_signs(&signs), &ids).unwrap();
            for _ in 0..280 {
                let qbits: Vec<u8> = (0..l).map(|_| rng.random_range(0..2u8)).collect();
                let k = rng.random_range(1..=n);
                let got = index.search_topk(&pack(&qbits), k).unwrap();

                let mut expect: Vec<(u32, u64)> = cols
                    .iter()
                    .zip(&ids)
                    .map(|(c, &id)| {
                        let d: u32 = c.iter().zip(&qbits).map(|(&x, &y)| (x ^ y) as u32).sum();
                        (d, id)
                    })
                    .collect();
                expect.sort_unstable();
                let expect: Vec<(u64, u32)> =
                    expect.into_iter().take(k).map(|(d, id)| (id, d)).collect();
                assert_eq!(got, expect, "L={l}");
                trials += 1;
            }
        }
    }
    assert!(trials >= 10_000);
    println!("PASS  8. retrieval correctness: {trials} trials across L in {{16,64,128}}, zero mismatches");
}

/// 9. Metric correctness: AP matches an independent implementation exactly
///    on every 5-item relevance pattern, and the worked example scores 5/6.
#[test]
fn acceptance_09_metric_correctness() {
    fn ap_oracle(relevance: &[bool], depth: usize) -> f64 {
        let window = &relevance[..depth.min(relevance.len())];
        let nr = window.iter().filter(|&&r| r).count();
        if nr == 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for r in 1..=window.len() {
            if window[r - 1] {
                total += window[..r].iter().filter(|&&x| x).count() as f64 / r as f64;
            }
        }
        total / nr as f64
    }

    for mask in 0u32..32 {
        let relevance: Vec<bool> = (0..5).map(|i| mask & (1 << i) != 0).collect();
        let ranked: Vec<u64> = (0..5).collect();
        for depth in 1..=5 {
            let got = average_precision(&ranked, |id| relevance[id as usize], depth);
            let expect = ap_oracle(&relevance, depth);
            assert_eq!(got, expect, "pattern {mask:05b} depth {depth}");
        }
    }
    let worked = average_precision(&[0u64, 1, 2], |id| id == 0 || id == 2, 3);
    assert!((worked - 5.0 / 6.0).abs() < 1e-15);
    println!("PASS  9. metric correctness: all 32 patterns exact, worked example = 5/6");
}

/// 10. Linear scaling: log-log slope of training wall-clock against N over
///     {1k, 2k, 4k, 8k} synthetic samples stays at or below 1.3.
#[test]
fn acceptance_10_linear_scaling() {
    let start = Instant::now();
    let sizes = [1024usize, 2048, 4096, 8192];
    let mut points = Vec::new();
    for &n in &sizes {
        let data = synthesize_dataset::<f64>(&SynthParams {
            n_classes: 8,
            per_class: n / 8,
            d_x: 32,
            d_y: 16,
            noise: 0.5,
            cross_modal_consistency: 1.0,
            seed: 100 + n as u64,
        })
        .unwrap();
        // Fixed work per sample: capped k-means sweeps and a fixed
        // iteration budget (no data-dependent early stop). Two runs per
        // size, keeping the faster one, to damp scheduler noise.
        let mut secs = f64::INFINITY;
        for _ in 0..2 {
            let t0 = Instant::now();
            let anchors = build_anchor_model(&data.visual, 64, 5, None, 10, 7).unwrap();
            let cfg = DsthConfig::<f64> {
                code_length: 16,
                max_iter: 15,
                rel_tol: 0.0,
                seed: 8,
                ..DsthConfig::default()
            };
            let opt = DsthOptimizer::new(&data.visual, &data.text, &anchors, &cfg).unwrap();
            let fit = opt.fit().unwrap();
            let _hash =
                dsth::hash::learn_projection(&data.visual, &fit.codes.to_signs::<f64>(), 1e2)
                    .unwrap();
            secs = secs.min(t0.elapsed().as_secs_f64());
        }
        points.push((n, secs));
    }
    // Least-squares slope in log-log space.
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, t)| t.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    let total = start.elapsed().as_secs_f64();
    assert!(total < 300.0, "scaling suite took {total:.0}s");
    assert!(
        slope <= 1.3,
        "wall-clock slope {slope:.3} exceeds 1.3; timings {points:?}"
    );
    println!("PASS 10. linear scaling: log-log slope {slope:.3} <= 1.3 over N in {{1k,2k,4k,8k}} ({total:.0}s < 300s), timings {points:?}");
}

/// 11. End-to-end sanity: the trivially separable dataset retrieves at
///     mAP@100 >= 0.95 through the full pipeline.
#[test]
fn acceptance_11_end_to_end_sanity() {
    let bench = Bench {
        n_classes: 3,
        per_class: 100,
        d_x: 32,
        d_y: 16,
        noise: 0.0,
        consistency: 1.0,
        n_query: 50,
        n_train: 200,
        anchors_k: 32,
        anchors_s: 5,
        code_length: 16,
    };
    let map = bench.map_at(11, Variant::Full, 100);
    assert!(map >= 0.95, "end-to-end mAP@100 = {map:.4} < 0.95");
    println!("PASS 11. end-to-end sanity: zero-noise 3-class mAP@100 = {map:.4} >= 0.95");
}

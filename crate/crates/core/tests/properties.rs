//! Property tests over the public API of every module.

mod common;

use proptest::prelude::*;

use common::tiny_dit;
use stylegraft::curriculum::*;
use stylegraft::dit::{patchify, rope_encode, unpatchify, Dit, DitInputs, Init};
use stylegraft::flow::{fm_loss, integrate, interpolate, velocity_target, FlowBatch};
use stylegraft::image::Image;
use stylegraft::lora::LoraAdapter;
use stylegraft::metrics::*;
use stylegraft::nn::Scope;
use stylegraft::rng::Rng;
use stylegraft::tensor::{Graph, Params, Tensor};
use stylegraft::video::{gen_clips, motion_filter, VideoConfig};
use stylegraft::world::*;

fn inputs(seed: u64) -> [Tensor<f64>; 3] {
    let mut rng = Rng::new(seed);
    [0.0; 3].map(|_| Tensor::randn(&[8, 8, 3], 1.0, &mut rng))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..9, scale in 0.1f64..50.0) {
        let x = Tensor::<f64>::randn(&[rows, cols], scale, &mut Rng::new(seed));
        let mut g = Graph::new();
        let v = g.constant(x);
        let s = g.softmax(v, 1).unwrap();
        for row in g.value(s).data().chunks(cols) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn matmul_with_identity_is_exact(seed in any::<u64>(), m in 1usize..7, n in 1usize..7) {
        let mut rng = Rng::new(seed);
        let data: Vec<f64> = (0..m * n).map(|_| rng.below(2001) as f64 - 1000.0).collect();
        let a = Tensor::new(vec![m, n], data).unwrap();
        prop_assert_eq!(a.matmul(&Tensor::eye(n)).unwrap(), a);
    }

    #[test]
    fn rope_scores_depend_on_offsets_only(seed in any::<u64>()) {
        let axes = [4, 6, 6];
        let d: usize = axes.iter().sum();
        let mut rng = Rng::new(seed);
        let qk = Tensor::<f64>::randn(&[2, d], 1.0, &mut rng);
        let score = |pi: &[i64], pj: &[i64]| {
            let y = rope_encode(&qk, &[pi.to_vec(), pj.to_vec()], axes, 100.0).unwrap();
            dot(&y.data()[..d], &y.data()[d..])
        };
        for axis in 0..3 {
            let mut pi: Vec<i64> = (0..3).map(|_| rng.below(17) as i64).collect();
            let mut pj: Vec<i64> = (0..3).map(|_| rng.below(17) as i64).collect();
            let before = score(&pi, &pj);
            let delta = rng.below(41) as i64 - 20;
            pi[axis] += delta;
            pj[axis] += delta;
            prop_assert!((score(&pi, &pj) - before).abs() <= 1e-9);
        }
    }

    #[test]
    fn patchify_round_trips(seed in any::<u64>(), gh in 1usize..4, gw in 1usize..4, p in 1usize..5) {
        let img = Tensor::<f64>::randn(&[gh * p, gw * p, 3], 1.0, &mut Rng::new(seed));
        let tokens = patchify(&img, p).unwrap();
        prop_assert_eq!(tokens.shape(), &[gh * gw, p * p * 3]);
        prop_assert_eq!(unpatchify(&tokens, gh * p, gw * p, p).unwrap(), img);
    }

    #[test]
    fn interpolant_is_the_straight_path(seed in any::<u64>(), t in 0.0f64..=1.0) {
        let mut rng = Rng::new(seed);
        let x0 = Tensor::<f64>::randn(&[4, 3], 1.0, &mut rng);
        let x1 = Tensor::<f64>::randn(&[4, 3], 1.0, &mut rng);
        let xt = interpolate(&x0, &x1, t).unwrap();
        let v = velocity_target(&x0, &x1).unwrap();
        for i in 0..12 {
            let expect = (1.0 - t) * x0.data()[i] + t * x1.data()[i];
            prop_assert!((xt.data()[i] - expect).abs() <= 1e-12);
            prop_assert!((x0.data()[i] + t * v.data()[i] - xt.data()[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn flow_loss_is_non_negative_and_zero_on_target(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let x0 = Tensor::<f64>::randn(&[3, 2], 1.0, &mut rng);
        let batch = FlowBatch::draw(x0, None, &mut rng).unwrap();
        let mut g = Graph::new();
        let exact = g.constant(batch.target());
        let off = g.constant(Tensor::randn(&[3, 2], 1.0, &mut rng));
        let zero = fm_loss(&mut g, exact, &batch).unwrap();
        let other = fm_loss(&mut g, off, &batch).unwrap();
        prop_assert_eq!(g.value(zero).item(), 0.0);
        prop_assert!(g.value(other).item() > 0.0);
    }

    #[test]
    fn cpc_without_cutoff_is_the_content_score(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let desc = SceneDescriptor::random(&mut rng);
        let other = SceneDescriptor::random(&mut rng);
        let style = StyleParams::generate(seed, rng.below(40) as u32);
        let result = apply_style(&style, &render(&desc, 32, 32));
        let reference = render(&other, 32, 32);
        prop_assert_eq!(cpc_at(&result, &reference, &desc, -1.0), content_score(&result, &desc));
    }

    #[test]
    fn style_similarity_is_symmetric_with_unit_diagonal(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let a = apply_style(&StyleParams::generate(seed, 1), &render(&SceneDescriptor::random(&mut rng), 32, 32));
        let b = apply_style(&StyleParams::generate(seed, 2), &render(&SceneDescriptor::random(&mut rng), 32, 32));
        prop_assert_eq!(style_similarity(&a, &b), style_similarity(&b, &a));
        prop_assert!((style_similarity(&a, &a) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cpc_range_is_the_mean_of_its_terms(sim in -1.0f64..=1.0, content in 0.0f64..=1.0) {
        let terms: Vec<f64> = (3..=9).map(|k| cpc_from_scores(sim, content, k as f64 / 10.0)).collect();
        let mean = terms.iter().sum::<f64>() / terms.len() as f64;
        let got = cpc_range_from_scores(sim, content, CPC_LO, CPC_HI, CPC_STEP).unwrap();
        prop_assert!((got - mean).abs() <= 1e-12);
    }

    #[test]
    fn report_aggregate_ignores_pair_order(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = Rng::new(seed);
        let records: Vec<PairRecord> = (0..n)
            .map(|i| {
                let sim = rng.uniform_range(-1.0, 1.0);
                let content = rng.uniform_range(0.0, 1.0);
                PairRecord {
                    style_index: i,
                    content_index: i,
                    style_id: i as u32,
                    style_sim: Some(sim),
                    content_score: Some(content),
                    cpc: vec![],
                    cpc_at_05: Some(cpc_from_scores(sim, content, 0.5)),
                    cpc_range: Some(cpc_range_from_scores(sim, content, CPC_LO, CPC_HI, CPC_STEP).unwrap()),
                    error: if rng.bernoulli(0.2) { Some("boom".into()) } else { None },
                }
            })
            .collect();
        let mut shuffled = records.clone();
        for i in (1..n).rev() {
            shuffled.swap(i, rng.below(i + 1));
        }
        let a = EvalReport::from_records(records).aggregate;
        let b = EvalReport::from_records(shuffled).aggregate;
        prop_assert_eq!((a.pairs, a.scored, a.failed), (b.pairs, b.scored, b.failed));
        for (x, y) in [(a.style_sim, b.style_sim), (a.content_score, b.content_score), (a.cpc_at_05, b.cpc_at_05), (a.cpc_range, b.cpc_range)] {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn d2_weight_order_follows_consistency(seed in any::<u64>(), gamma in 0.1f64..8.0) {
        let world = WorldConfig { seed, size: 16, per_style_clean: 3, per_style_synth: 1, per_style_heldout: 1, val_per_style: 0, n_clean_styles: 4, ..WorldConfig::default() };
        let corpus = build_corpus(&world, &world.split()).unwrap();
        let d2 = build_d2(&corpus.clean, gamma).unwrap();
        let pairs: Vec<(f64, f64)> = d2.entries.iter().zip(&d2.weights).map(|(e, &w)| (corpus.clean[e.index].consistency_weight, w)).collect();
        for &(ca, wa) in &pairs {
            for &(cb, wb) in &pairs {
                if ca > cb {
                    prop_assert!(wa > wb);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn lora_merge_matches_runtime_and_unmerges(seed in any::<u64>()) {
        let dit = Dit::new(tiny_dit()).unwrap();
        let mut rng = Rng::new(seed);
        let base: Params<f32> = dit.init(Init::Random, &mut rng);
        let mut adapter = LoraAdapter::attach(&base, &dit.cfg.adapter_targets(), 2, 2.0, &mut rng).unwrap();
        for (_, t) in adapter.params.iter_mut() {
            let shape = t.shape().to_vec();
            *t = Tensor::randn(&shape, 0.05, &mut rng);
        }
        let merged = adapter.merge(&base).unwrap();
        prop_assert!(adapter.unmerge(&merged).unwrap().max_abs_diff(&base) <= 1e-6);
        for k in 0..10u64 {
            let [noisy, content, style] = inputs(seed ^ k).map(|t| t.cast::<f32>());
            let inp = DitInputs { noisy: &noisy, content: &content, style: &style, prompt_id: 1, t: 0.1 * k as f64 };
            let runtime = dit.predict(&base, Some(&adapter), inp).unwrap();
            let folded = dit.predict(&merged, None, inp).unwrap();
            prop_assert!(runtime.max_abs_diff(&folded) <= 1e-5);
        }
    }

    #[test]
    fn fresh_adapter_is_a_no_op(seed in any::<u64>()) {
        let dit = Dit::new(tiny_dit()).unwrap();
        let mut rng = Rng::new(seed);
        let base: Params<f64> = dit.init(Init::Random, &mut rng);
        let adapter = LoraAdapter::attach(&base, &dit.cfg.adapter_targets(), 4, 4.0, &mut rng).unwrap();
        let [noisy, content, style] = inputs(seed);
        let inp = DitInputs { noisy: &noisy, content: &content, style: &style, prompt_id: 0, t: 0.5 };
        prop_assert_eq!(dit.predict(&base, Some(&adapter), inp).unwrap(), dit.predict(&base, None, inp).unwrap());
    }

    #[test]
    fn dit_attention_rows_sum_to_one(seed in any::<u64>()) {
        let dit = Dit::new(tiny_dit()).unwrap();
        let params: Params<f64> = dit.init(Init::Random, &mut Rng::new(seed));
        let [noisy, content, style] = inputs(seed);
        let mut g = Graph::new();
        let mut scope = Scope::new(&mut g, &params);
        let out = dit.forward(&mut scope, DitInputs { noisy: &noisy, content: &content, style: &style, prompt_id: 1, t: 0.3 }).unwrap();
        let n = out.layout.len();
        prop_assert_eq!(out.attention.len(), dit.cfg.depth);
        for a in &out.attention {
            for row in scope.g.value(*a).data().chunks(n) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn dit_is_deterministic_and_tells_references_apart(seed in any::<u64>()) {
        let dit = Dit::new(tiny_dit()).unwrap();
        let params: Params<f64> = dit.init(Init::Random, &mut Rng::new(seed));
        let [noisy, content, style] = inputs(seed);
        let inp = DitInputs { noisy: &noisy, content: &content, style: &style, prompt_id: 1, t: 0.6 };
        let a = dit.predict(&params, None, inp).unwrap();
        prop_assert_eq!(&a, &dit.predict(&params, None, inp).unwrap());
        let swapped = dit.predict(&params, None, DitInputs { content: &style, style: &content, ..inp }).unwrap();
        prop_assert!(a.max_abs_diff(&swapped) > 1e-6);
    }

    #[test]
    fn motion_filter_is_idempotent(seed in any::<u64>(), speed in 0.0f64..2.0, tau in 0.9f64..0.9999) {
        let cfg = VideoConfig::default();
        let (once, _) = motion_filter(gen_clips(seed, 6, &cfg, speed), tau).unwrap();
        let ids: Vec<String> = once.iter().map(|c| c.id.clone()).collect();
        let (twice, report) = motion_filter(once, tau).unwrap();
        prop_assert!(report.discarded.is_empty());
        prop_assert_eq!(twice.iter().map(|c| c.id.clone()).collect::<Vec<_>>(), ids);
    }
}

#[test]
fn euler_is_step_count_invariant_on_straight_paths() {
    let mut rng = Rng::new(5);
    let x0 = Tensor::<f64>::randn(&[6], 1.0, &mut rng);
    let x1 = Tensor::<f64>::randn(&[6], 1.0, &mut rng);
    let v = velocity_target(&x0, &x1).unwrap();
    let field = |_: &Tensor<f64>, _: f64| Ok(v.clone());
    for steps in [1, 3, 4, 20, 57] {
        assert!(integrate(&field, x1.clone(), steps).unwrap().max_abs_diff(&x0) <= 1e-6);
    }
}

#[test]
fn d3_provenance_frequency_converges_to_rho() {
    let world = WorldConfig { seed: 3, size: 16, per_style_clean: 2, per_style_synth: 2, per_style_heldout: 1, val_per_style: 0, ..WorldConfig::default() };
    let corpus = build_corpus(&world, &world.split()).unwrap();
    let d2 = build_d2(&corpus.clean, 4.0).unwrap();
    let n = 20_000;
    for rho in [0.1, 0.25, 0.4] {
        let d3 = build_d3(&d2, &corpus.synthetic, rho).unwrap();
        let mut rng = Rng::new(11);
        let synth = (0..n)
            .filter(|_| provenance_of(&corpus, d3.sample(&mut rng)) == Provenance::Synthetic)
            .count() as f64;
        let sigma = (n as f64 * rho * (1.0 - rho)).sqrt();
        assert!((synth - n as f64 * rho).abs() <= 3.0 * sigma, "rho {rho}: {synth} of {n}");
    }
}

/// Each sampled triplet is paired with the reference of one other style drawn
/// at random; the target must sit at least as close to its own reference.
#[test]
fn clean_targets_match_their_own_style_best() {
    let world = WorldConfig { seed: 9, per_style_clean: 10, per_style_synth: 1, per_style_heldout: 1, val_per_style: 0, ..WorldConfig::default() };
    let corpus = build_corpus(&world, &world.split()).unwrap();
    let refs: Vec<(u32, &Image)> = corpus.clean.iter().filter(|t| t.id.ends_with("-000")).map(|t| (t.style_id, &t.style_ref)).collect();
    let triplets = spread(&corpus.clean, 100);
    let mut rng = Rng::new(10);
    let exact = triplets
        .iter()
        .filter(|t| {
            let others: Vec<&Image> = refs.iter().filter(|(s, _)| *s != t.style_id).map(|(_, r)| *r).collect();
            let other = others[rng.below(others.len())];
            style_similarity(&t.target, &t.style_ref) >= style_similarity(&t.target, other)
        })
        .count();
    assert!(exact * 100 >= 95 * triplets.len(), "{exact}/{} triplets prefer their own style", triplets.len());
}

#[test]
fn noisy_content_scores_below_clean_content() {
    let mut rng = Rng::new(21);
    let (mut clean, mut noisy) = (Vec::new(), Vec::new());
    for i in 0..100 {
        let desc = SceneDescriptor::random(&mut rng);
        let img = render(&desc, 64, 64);
        clean.push(content_score(&img, &desc));
        noisy.push(content_score(&destylize_noisify(&img, &desc, 3.0, 0.3, i), &desc));
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (c, n) = (median(&mut clean), median(&mut noisy));
    assert!(n < c, "noisy median {n} vs clean {c}");
}

mod common;

use common::*;
use mvmc::model::{assemble_prediction, objective, regularizer, select_block};
use mvmc::{LatentBlocks, LossKind, ModelSpec, MultiViewProblem, Variant, ViewData};
use proptest::prelude::*;
use rand::Rng;

fn random_blocks(seed: u64, dims: &[usize], n: usize, scale: f64) -> LatentBlocks {
    let mut r = rng(seed);
    let total: usize = dims.iter().sum();
    LatentBlocks {
        x0: Some(gaussian(&mut r, total, n, scale)),
        xk: Some(dims.iter().map(|&d| gaussian(&mut r, d, n, scale)).collect()),
        sk: Some(dims.iter().map(|&d| gaussian(&mut r, d, n, scale)).collect()),
    }
}

fn mixed_problem(seed: u64) -> MultiViewProblem {
    let mut r = rng(seed);
    let n = 6;
    let mut sq = Vec::new();
    let mut lg = Vec::new();
    for j in 0..n {
        for i in 0..4 {
            if r.random_bool(0.7) {
                sq.push((i, j, r.random_range(-2.0..2.0)));
            }
        }
        for i in 0..3 {
            if r.random_bool(0.7) {
                lg.push((i, j, if r.random_bool(0.5) { 1.0 } else { -1.0 }));
            }
        }
    }
    MultiViewProblem::new(
        n,
        vec![
            ViewData::new(4, sq, LossKind::Squared).with_weight(1.5),
            ViewData::new(3, lg, LossKind::Logistic).with_weight(0.7),
        ],
    )
    .unwrap()
}

#[test]
fn jlr_objective_matches_term_by_term_sum() {
    let problem = mixed_problem(31);
    let spec = ModelSpec {
        shared: true,
        specific: true,
        robust: true,
        lambda0: 0.7,
        lambda_k: vec![1.3, 0.4],
        alpha_k: vec![0.2, 0.9],
    };
    let blocks = random_blocks(32, &[4, 3], 6, 0.8);
    let x0 = blocks.x0.as_ref().unwrap();
    let xk = blocks.xk.as_ref().unwrap();
    let sk = blocks.sk.as_ref().unwrap();

    let mut expected = spec.lambda0 * nuclear_norm_eig(x0);
    let mut offset = 0;
    for (k, view) in problem.views.iter().enumerate() {
        expected += spec.lambda_k[k] * nuclear_norm_eig(&xk[k]);
        expected += spec.alpha_k[k] * sk[k].iter().map(|v| v.abs()).sum::<f64>();
        for &(i, j, y) in &view.entries {
            let x = x0[(offset + i, j)] + xk[k][(i, j)] + sk[k][(i, j)];
            let l = match view.loss {
                LossKind::Squared => 0.5 * (x - y) * (x - y),
                LossKind::Logistic => (1.0 + (-x * y).exp()).ln(),
            };
            expected += view.weight * l;
        }
        offset += view.d;
    }
    let got = objective(&problem, &spec, &blocks).unwrap();
    assert!(rel_diff(got, expected) < 1e-9, "{got} vs {expected}");
}

#[test]
fn inactive_blocks_do_not_contribute() {
    let problem = mixed_problem(33);
    let blocks = random_blocks(34, &[4, 3], 6, 1.0);
    let dims = problem.dims();
    let i00 = ModelSpec::from_variant(Variant::I00, 2, 1.0, 1.0, 1.0);
    let j00 = ModelSpec::from_variant(Variant::J00, 2, 1.0, 1.0, 1.0);
    for k in 0..2 {
        assert_eq!(assemble_prediction(&blocks, &i00, &dims, k).unwrap(), blocks.xk.as_ref().unwrap()[k]);
        assert_eq!(
            assemble_prediction(&blocks, &j00, &dims, k).unwrap(),
            select_block(blocks.x0.as_ref().unwrap(), k, &dims).unwrap()
        );
    }
    let xk_only = blocks.xk.iter().flatten().map(nuclear_norm_eig).sum::<f64>();
    assert!(rel_diff(regularizer(&i00, &blocks), xk_only) < 1e-9);
}

#[test]
fn richer_variants_nest_simpler_ones() {
    // a point of a simpler model, embedded with zero extra blocks, has the same objective
    let problem = mixed_problem(35);
    let dims = problem.dims();
    let simple = random_blocks(36, &dims, 6, 0.5);
    let jl0 = ModelSpec::from_variant(Variant::JL0, 2, 0.8, 0.6, 0.3);
    let jlr = ModelSpec::from_variant(Variant::JLR, 2, 0.8, 0.6, 0.3);
    let embedded = LatentBlocks {
        sk: Some(dims.iter().map(|&d| mvmc::Matrix::zeros(d, 6)).collect()),
        ..simple.clone()
    };
    let a = objective(&problem, &jl0, &simple).unwrap();
    let b = objective(&problem, &jlr, &embedded).unwrap();
    assert!(rel_diff(a, b) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn objective_is_convex(sa in 0u64..1000, sb in 1000u64..2000, t in 0.0f64..1.0, variant in 0usize..6) {
        let problem = mixed_problem(37);
        let dims = problem.dims();
        let spec = ModelSpec::from_variant(Variant::ALL[variant], 2, 0.9, 0.5, 0.4);
        let a = random_blocks(sa, &dims, 6, 1.5);
        let b = random_blocks(sb, &dims, 6, 1.5);
        let mix = |x: &mvmc::Matrix, y: &mvmc::Matrix| x * t + y * (1.0 - t);
        let m = LatentBlocks {
            x0: Some(mix(a.x0.as_ref().unwrap(), b.x0.as_ref().unwrap())),
            xk: Some(a.xk.as_ref().unwrap().iter().zip(b.xk.as_ref().unwrap()).map(|(x, y)| mix(x, y)).collect()),
            sk: Some(a.sk.as_ref().unwrap().iter().zip(b.sk.as_ref().unwrap()).map(|(x, y)| mix(x, y)).collect()),
        };
        let fa = objective(&problem, &spec, &a).unwrap();
        let fb = objective(&problem, &spec, &b).unwrap();
        let fm = objective(&problem, &spec, &m).unwrap();
        prop_assert!(fm <= t * fa + (1.0 - t) * fb + 1e-9 * (1.0 + fa.abs() + fb.abs()));
    }

    #[test]
    fn objective_is_nonnegative(seed in 0u64..1000, variant in 0usize..6) {
        let problem = mixed_problem(38);
        let spec = ModelSpec::from_variant(Variant::ALL[variant], 2, 0.9, 0.5, 0.4);
        let blocks = random_blocks(seed, &problem.dims(), 6, 2.0);
        prop_assert!(objective(&problem, &spec, &blocks).unwrap() >= 0.0);
    }
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use loha::autodiff::{adam_step, AdamConfig, AdamState, Tape};
use loha::graph::{generate_sbm, SbmSpec};
use loha::model::{loss_reunion, loss_separation, SeparationTerms};
use loha::signals::{neighbor_difference, spectral_trend, Composition, TrendVariant};
use loha::spectral::{
    cheb_propagate, gamma_values, interp_weights, interp_weights_values, sliding_positions,
    FilterParams, Orientation, View,
};
use loha::trainer::{
    composite_row, linear_probe, make_splits, pretrain, ProbeConfig, TrainConfig,
};
use loha::{Graph, Matrix};

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 0..4 * n),
            prop::collection::vec(-2.0..2.0f64, n * 3),
        )
            .prop_map(|(n, edges, feats)| {
                let x = Matrix::from_vec(n, 3, feats).unwrap();
                Graph::from_edges(&edges, x, None).unwrap().0
            })
    })
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operators_are_bitwise_symmetric(g in graph_strategy(30)) {
        prop_assert!(g.normalized_adjacency().is_symmetric());
        prop_assert!(g.normalized_laplacian().is_symmetric());
    }

    #[test]
    fn laplacian_annihilates_sqrt_degree(g in graph_strategy(30)) {
        let v = Matrix::from_fn(g.num_nodes(), 1, |i, _| (g.degree(i) as f64).sqrt());
        let out = g.normalized_laplacian().apply(&v).unwrap();
        prop_assert!(out.max_abs() <= 1e-12);
    }

    #[test]
    fn laplacian_is_positive_semidefinite(g in graph_strategy(30), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = g.normalized_laplacian();
        for _ in 0..100 {
            let x = random_matrix(&mut rng, g.num_nodes(), 1);
            let q = x.frobenius_dot(&l.apply(&x).unwrap());
            prop_assert!(q >= -1e-12);
        }
    }

    #[test]
    fn homophily_ignores_label_names(g in graph_strategy(25), seed in any::<u64>()) {
        prop_assume!(g.num_edges() > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..g.num_nodes()).map(|_| rng.random_range(0..4)).collect();
        let renamed: Vec<usize> = labels.iter().map(|&l| [2, 0, 3, 1][l]).collect();
        let a = g.with_labels(Some(labels)).unwrap().edge_homophily().unwrap();
        let b = g.with_labels(Some(renamed)).unwrap().edge_homophily().unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sliding_positions_stay_ordered(delta in prop::num::f64::ANY, order in 1usize..40) {
        prop_assume!(!delta.is_nan());
        let pos = sliding_positions(delta, order);
        prop_assert!(pos.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn neighbor_difference_is_linear(g in graph_strategy(20), a in -5i32..5, b in -5i32..5, seed in any::<u64>()) {
        // small integers keep every intermediate exact
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = g.num_nodes();
        let y1 = Matrix::from_fn(n, 2, |_, _| rng.random_range(-8..8) as f64);
        let y2 = Matrix::from_fn(n, 2, |_, _| rng.random_range(-8..8) as f64);
        let (a, b) = (a as f64, b as f64);
        let lhs = neighbor_difference(&g, &y1.zip_map(&y2, |p, q| a * p + b * q)).unwrap();
        let d1 = neighbor_difference(&g, &y1).unwrap();
        let d2 = neighbor_difference(&g, &y2).unwrap();
        prop_assert_eq!(lhs, d1.zip_map(&d2, |p, q| a * p + b * q));
    }

    #[test]
    fn trend_is_permutation_equivariant(g in graph_strategy(20), seed in any::<u64>()) {
        let n = g.num_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pg = g.permute(&perm).unwrap();
        let t = spectral_trend(&g, g.features(), TrendVariant::Full).unwrap();
        let pt = spectral_trend(&pg, pg.features(), TrendVariant::Full).unwrap();
        let expect = t.values.select_rows(&perm);
        prop_assert!(pt.values.zip_map(&expect, |a, b| (a - b).abs()).max_abs() <= 1e-12);
    }

    #[test]
    fn losses_invariant_under_rotation(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 3;
        let (zf, zl, zh, c) = (
            random_matrix(&mut rng, n, d),
            random_matrix(&mut rng, n, d),
            random_matrix(&mut rng, n, d),
            random_matrix(&mut rng, n, d),
        );
        // rotation about a random axis
        let theta: f64 = rng.random_range(0.0..6.0);
        let (s, co) = theta.sin_cos();
        let rot = Matrix::from_rows(&[vec![co, -s, 0.0], vec![s, co, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let eval = |m: [&Matrix; 4]| {
            let mut t = Tape::new();
            let v: Vec<_> = m.iter().map(|x| t.constant((*x).clone())).collect();
            let (l, h) = loss_separation(&mut t, v[0], v[1], v[2], 0.5, SeparationTerms::default()).unwrap();
            let sf = loss_reunion(&mut t, v[0], v[3], 0.5).unwrap();
            [t.value(l).item(), t.value(h).item(), t.value(sf).item()]
        };
        let base = eval([&zf, &zl, &zh, &c]);
        let r = |m: &Matrix| m.matmul(&rot).unwrap();
        let rotated = eval([&r(&zf), &r(&zl), &r(&zh), &r(&c)]);
        for (a, b) in base.iter().zip(rotated) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn positive_in_denominator_changes_loss(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tape::new();
        let zf = t.constant(random_matrix(&mut rng, 5, 3));
        let zl = t.constant(random_matrix(&mut rng, 5, 3));
        let zh = t.constant(random_matrix(&mut rng, 5, 3));
        let (a, _) = loss_separation(&mut t, zf, zl, zh, 0.5, SeparationTerms::default()).unwrap();
        let with = SeparationTerms { cross_view: true, positive: true };
        let (b, _) = loss_separation(&mut t, zf, zl, zh, 0.5, with).unwrap();
        prop_assert!(t.value(b).item() > t.value(a).item());
    }

    #[test]
    fn tape_replay_is_deterministic(seed in any::<u64>()) {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = Tape::new();
            let a = t.param(random_matrix(&mut rng, 4, 3));
            let b = t.param(random_matrix(&mut rng, 3, 2));
            let m = t.matmul(a, b).unwrap();
            let e = t.tanh(m).unwrap();
            let n = t.l2_row_normalize(e).unwrap();
            let s = t.sum(n).unwrap();
            let g = t.backward(s).unwrap();
            (t.value(s).clone(), g.get(a), g.get(b))
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn gradient_of_disjoint_sum_is_sum_of_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xa = random_matrix(&mut rng, 3, 3);
        let xb = random_matrix(&mut rng, 3, 3);
        let f = |t: &mut Tape, a, b| {
            let ea = t.exp(a).unwrap();
            let sa = t.sum(ea).unwrap();
            let cb = t.cos(b).unwrap();
            let sb = t.mean(cb).unwrap();
            (sa, sb)
        };
        let mut t = Tape::new();
        let (a, b) = (t.param(xa.clone()), t.param(xb.clone()));
        let (sa, sb) = f(&mut t, a, b);
        let total = t.add(sa, sb).unwrap();
        let g = t.backward(total).unwrap();
        let ga = t.backward(sa).unwrap();
        let gb = t.backward(sb).unwrap();
        prop_assert_eq!(g.get(a), ga.get(a));
        prop_assert_eq!(g.get(b), gb.get(b));
    }

    #[test]
    fn propagation_gradient_wrt_gamma(g in graph_strategy(12), seed in any::<u64>(), order in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = std::sync::Arc::new(g.propagation_operator(2.0).unwrap());
        let gamma0 = random_matrix(&mut rng, order + 1, 1);
        let weight = random_matrix(&mut rng, g.num_nodes(), 3);
        let eval = |gamma: &Matrix, grad: bool| {
            let mut t = Tape::new();
            let gv = t.param(gamma.clone());
            let w = interp_weights(&mut t, gv).unwrap();
            let x = t.constant(g.features().clone());
            let y = cheb_propagate(&mut t, &op, x, w).unwrap();
            let wv = t.constant(weight.clone());
            let p = t.mul(y, wv).unwrap();
            let s = t.sum(p).unwrap();
            let value = t.value(s).item();
            (value, grad.then(|| t.backward(s).unwrap().get(gv)))
        };
        let (_, grad) = eval(&gamma0, true);
        let grad = grad.unwrap();
        let h = 1e-6;
        for j in 0..=order {
            let mut p = gamma0.clone();
            p.as_mut_slice()[j] += h;
            let mut m = gamma0.clone();
            m.as_mut_slice()[j] -= h;
            let num = (eval(&p, false).0 - eval(&m, false).0) / (2.0 * h);
            let a = grad.as_slice()[j];
            prop_assert!((a - num).abs() <= 1e-4 * a.abs().max(num.abs()) + 1e-8, "{} vs {}", a, num);
        }
    }

    #[test]
    fn splits_partition_nodes(n in 5usize..300, seed in any::<u64>()) {
        for s in make_splits(n, seed, 3).unwrap() {
            prop_assert_eq!(s.train.len(), n * 6 / 10);
            prop_assert_eq!(s.val.len(), n * 2 / 10);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn probe_ignores_column_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let z = Matrix::from_fn(60, 5, |r, c| labels[r] as f64 * (c as f64 - 2.0) + rng.random_range(-2.0..2.0));
        let perm = [3, 0, 4, 1, 2];
        let zp = Matrix::from_fn(60, 5, |r, c| z[(r, perm[c])]);
        let splits = make_splits(60, seed, 3).unwrap();
        let a = linear_probe(&z, &labels, &splits, &ProbeConfig::default()).unwrap();
        let b = linear_probe(&zp, &labels, &splits, &ProbeConfig::default()).unwrap();
        prop_assert_eq!(a.accuracies, b.accuracies);
    }
}

fn small_sbm(seed: u64) -> Graph {
    generate_sbm(&SbmSpec {
        nodes: 40,
        classes: 2,
        p_in: 0.1,
        p_out: 0.2,
        feature_noise: 1.0,
        seed,
    })
    .unwrap()
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        order: 3,
        hidden: 8,
        epochs: 6,
        lr: 1e-2,
        ..TrainConfig::default()
    }
}

#[test]
fn pretraining_is_label_blind() {
    let g = small_sbm(1);
    let base = pretrain(&g, &quick_config()).unwrap();
    let mut shuffled = g.labels().unwrap().to_vec();
    shuffled.reverse();
    for variant in [g.with_labels(None).unwrap(), g.with_labels(Some(shuffled)).unwrap()] {
        let out = pretrain(&variant, &quick_config()).unwrap();
        assert_eq!(out.embeddings, base.embeddings);
        assert_eq!(out.history, base.history);
    }
}

#[test]
fn early_stopping_keeps_best_loss() {
    let g = small_sbm(2);
    for patience in [1, 2, 5] {
        let cfg = TrainConfig {
            patience,
            epochs: 30,
            lr: 0.3,
            ..quick_config()
        };
        let out = pretrain(&g, &cfg).unwrap();
        let best = out.best_epoch.unwrap();
        for h in &out.history {
            assert!(out.history[best].total <= h.total);
        }
    }
}

#[test]
fn reunion_step_decreases_reunion_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut params = vec![random_matrix(&mut rng, 6, 4)];
    let c = random_matrix(&mut rng, 6, 4);
    let loss = |p: &Matrix| {
        let mut t = Tape::new();
        let z = t.param(p.clone());
        let cv = t.constant(c.clone());
        let l = loss_reunion(&mut t, z, cv, 0.5).unwrap();
        let g = t.backward(l).unwrap().get(z);
        (t.value(l).item(), g)
    };
    let (before, grad) = loss(&params[0]);
    let mut state = AdamState::new(&params, AdamConfig::default());
    adam_step(&mut params, &[grad], &mut state).unwrap();
    assert!(loss(&params[0]).0 < before);
}

#[test]
fn subtraction_composite_is_more_stable() {
    let g = generate_sbm(&SbmSpec {
        nodes: 30,
        classes: 3,
        p_in: 0.3,
        p_out: 0.1,
        feature_noise: 0.0,
        seed: 4,
    })
    .unwrap();
    let order = 10;
    let w = |view| {
        interp_weights_values(&gamma_values(&FilterParams::init(view), view, Orientation::Corrected, order).unwrap())
            .unwrap()
    };
    let (low, high) = (w(View::Low), w(View::High));
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let draws: Vec<Matrix> = (0..200).map(|_| random_matrix(&mut rng, 30, 1)).collect();
    for node in 0..30 {
        if g.degree(node) == 0 {
            continue;
        }
        let std = |comp| {
            let row = composite_row(&g, &low, &high, comp, node, 2.0).unwrap();
            let vals: Vec<f64> = draws
                .iter()
                .map(|x| row.iter().zip(x.as_slice()).map(|(r, v)| r * v).sum::<f64>().abs())
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
        };
        assert!(std(Composition::Subtract) <= std(Composition::Add), "node {node}");
    }
}

use std::sync::OnceLock;

use causal_combine::alignment::{
    das_train, dii_forward, iia, iia_on, orthonormalize, principal_rotation, AlignmentSpec, DasConfig, Rotation,
    RotationInit,
};
use causal_combine::datagen::{arithmetic_ranges, enumerate_inputs, gen_counterfactual, InputEnumeration};
use causal_combine::evalgraph::{build_eval_graph, graph_iia};
use causal_combine::net::{train_net, NetConfig, SiteId, TinyNet};
use causal_combine::scm::Value;
use causal_combine::task::TaskKind;
use causal_combine::zoo::{build_zoo_model, ZooModelId};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn boolean_net() -> &'static TinyNet {
    static NET: OnceLock<TinyNet> = OnceLock::new();
    NET.get_or_init(|| {
        train_net(TaskKind::Boolean, &NetConfig::default_for(TaskKind::Boolean), 0)
            .unwrap()
            .0
    })
}

fn arithmetic_net() -> &'static TinyNet {
    static NET: OnceLock<TinyNet> = OnceLock::new();
    NET.get_or_init(|| {
        train_net(TaskKind::Arithmetic, &NetConfig::default_for(TaskKind::Arithmetic), 0)
            .unwrap()
            .0
    })
}

fn ordered_pairs(e: &InputEnumeration, distinct: bool) -> Vec<(Vec<Value>, Vec<Value>)> {
    let mut out = Vec::new();
    for b in e.inputs() {
        for s in e.inputs() {
            if !distinct || b != s {
                out.push((b.clone(), s.clone()));
            }
        }
    }
    out
}

fn random_orthogonal(k: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Array2::from_shape_fn((k, k), |_| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&mut q).unwrap();
    q
}

#[test]
fn trained_arithmetic_net_adds() {
    let net = arithmetic_net();
    let e = enumerate_inputs(TaskKind::Arithmetic, None).unwrap();
    assert_eq!(net.evaluate(&e).unwrap().0, 1.0);
    assert_eq!(
        net.predict(&[Value::Int(4), Value::Int(2), Value::Int(8)]),
        Value::Int(14)
    );
}

#[test]
fn dii_is_invariant_to_rotations_within_the_subspace() {
    let net = boolean_net();
    let e = enumerate_inputs(TaskKind::Boolean, None).unwrap();
    let id = ZooModelId::parse(TaskKind::Boolean, "M_Q").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (seed, k) in [(1u64, 1usize), (2, 7), (3, 32)] {
        let r = Rotation::random(net.width(), k, seed).unwrap();
        let rq = r.right_multiply(&random_orthogonal(k, seed + 10)).unwrap();
        let a = AlignmentSpec::new(id, SiteId(2), r);
        let b = AlignmentSpec::new(id, SiteId(2), rq);
        for _ in 0..20 {
            let base = e.get(rng.gen_range(0..64)).unwrap();
            let src = e.get(rng.gen_range(0..64)).unwrap();
            let la = dii_forward(net, base, src, &a).unwrap();
            let lb = dii_forward(net, base, src, &b).unwrap();
            let diff = (&la - &lb).mapv(f64::abs).fold(0.0f64, |m, &x| m.max(x));
            assert!(diff <= 1e-9, "k {k}: {diff}");
        }
    }
}

#[test]
fn iia_of_a_union_is_the_weighted_mean() {
    let net = boolean_net();
    let id = ZooModelId::parse(TaskKind::Boolean, "M_V").unwrap();
    let m = build_zoo_model(TaskKind::Boolean, id).unwrap();
    let spec = AlignmentSpec::new(id, SiteId(1), Rotation::random(net.width(), 16, 8).unwrap());
    let data = gen_counterfactual(TaskKind::Boolean, &m, 300, 4).unwrap();
    let (a, b) = data.split_at(110);
    let whole = iia_on(net, &spec, &data).unwrap();
    let mean = (110.0 * iia_on(net, &spec, a).unwrap() + 190.0 * iia_on(net, &spec, b).unwrap()) / 300.0;
    assert!((whole - mean).abs() < 1e-12);
    assert!((0.0..=1.0).contains(&whole));
}

#[test]
fn boolean_graph_matches_pairwise_iia() {
    let net = boolean_net();
    let e = enumerate_inputs(TaskKind::Boolean, None).unwrap();
    for name in ["M_Q", "M_B", "M_O"] {
        let id = ZooModelId::parse(TaskKind::Boolean, name).unwrap();
        let m = build_zoo_model(TaskKind::Boolean, id).unwrap();
        let spec = AlignmentSpec::new(id, SiteId(2), principal_rotation(net, SiteId(2), 32, &e).unwrap());
        let (g, nodes) = build_eval_graph(net, &m, &spec, &e, None).unwrap();
        assert_eq!(nodes, (0..64).collect::<Vec<_>>());
        let direct = iia(net, &m, &spec, &ordered_pairs(&e, true)).unwrap();
        assert!((graph_iia(&g, None) - direct).abs() < 1e-12, "{name}");
    }
}

#[test]
fn restricted_arithmetic_graph_matches_pairwise_iia() {
    let net = arithmetic_net();
    let full = enumerate_inputs(TaskKind::Arithmetic, None).unwrap();
    let e = enumerate_inputs(TaskKind::Arithmetic, Some(arithmetic_ranges(&[1, 2]))).unwrap();
    for name in ["M_XY", "M_XYZ"] {
        let id = ZooModelId::parse(TaskKind::Arithmetic, name).unwrap();
        let m = build_zoo_model(TaskKind::Arithmetic, id).unwrap();
        let spec = AlignmentSpec::new(id, SiteId(1), principal_rotation(net, SiteId(1), 32, &full).unwrap());
        let (g, _) = build_eval_graph(net, &m, &spec, &e, None).unwrap();
        assert_eq!(g.len(), 8);
        let direct = iia(net, &m, &spec, &ordered_pairs(&e, true)).unwrap();
        assert_eq!(graph_iia(&g, None), direct, "{name}");
    }
}

#[test]
fn sampled_graphs_cover_the_requested_inputs() {
    let net = boolean_net();
    let e = enumerate_inputs(TaskKind::Boolean, None).unwrap();
    let id = ZooModelId::parse(TaskKind::Boolean, "M_X").unwrap();
    let m = build_zoo_model(TaskKind::Boolean, id).unwrap();
    let spec = AlignmentSpec::new(id, SiteId(1), Rotation::random(net.width(), 8, 3).unwrap());
    let (g, nodes) = build_eval_graph(net, &m, &spec, &e, Some((20, 9))).unwrap();
    assert_eq!(g.len(), 20);
    assert!(nodes.windows(2).all(|w| w[0] < w[1]));
    let (again, nodes2) = build_eval_graph(net, &m, &spec, &e, Some((20, 9))).unwrap();
    assert_eq!((again, nodes2), (g, nodes));
}

#[test]
fn principal_rotation_is_orthonormal_and_ordered() {
    let net = boolean_net();
    let e = enumerate_inputs(TaskKind::Boolean, None).unwrap();
    for site in net.sites() {
        let r = principal_rotation(net, site, 10, &e).unwrap();
        assert_eq!((r.n(), r.k()), (64, 10));
        assert!(r.orthonormality_error() <= 1e-10);
        let tokens = net.tokens(e.inputs());
        let h = net.site_batch(&tokens, site).unwrap();
        let mean = h.mean_axis(ndarray::Axis(0)).unwrap();
        let centered = &h - &mean;
        let var: Vec<f64> = (0..10)
            .map(|j| centered.dot(&r.matrix().column(j)).mapv(|x| x * x).sum())
            .collect();
        assert!(var.windows(2).all(|w| w[0] >= w[1] - 1e-9), "{var:?}");
    }
}

#[test]
fn training_beats_a_random_start() {
    let net = boolean_net();
    let id = ZooModelId::parse(TaskKind::Boolean, "M_Q").unwrap();
    let m = build_zoo_model(TaskKind::Boolean, id).unwrap();
    let train = gen_counterfactual(TaskKind::Boolean, &m, 4096, 1).unwrap();
    let held = gen_counterfactual(TaskKind::Boolean, &m, 1000, 2).unwrap();
    let cfg = DasConfig {
        init: RotationInit::Random,
        ..DasConfig::default_for(TaskKind::Boolean)
    };
    let start = AlignmentSpec::new(id, SiteId(1), Rotation::random(net.width(), 32, 77).unwrap());
    let (trained, report) = das_train(net, id, SiteId(1), 32, &train, &cfg, 77).unwrap();
    assert!(report.max_orthonormality_error <= 1e-8);
    assert!(iia_on(net, &trained, &held).unwrap() + 0.02 >= iia_on(net, &start, &held).unwrap());
}

use super::*;
use crate::autograd::{Graph, Mode, ParamStore};
use crate::tensor::{Shape, Tensor};

fn zero_learnables(store: &mut ParamStore<f32>, prefix: &str) {
    for v in store.iter_mut() {
        if v.name.starts_with(prefix) && matches!(v.role, crate::Role::Weight | crate::Role::Bias) {
            v.value.fill(0.0);
        }
    }
}

#[test]
fn residual_unit_shapes() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(0);
    let mut pb = ParamBuilder::new(&mut store, &mut rng);
    let keep = ResidualUnit::new(&mut pb, "a", ResidualUnitSpec::new(32, 8, 1), ShortcutPolicy::OnShapeChange).unwrap();
    let down = ResidualUnit::new(&mut pb, "b", ResidualUnitSpec::new(32, 16, 2), ShortcutPolicy::OnShapeChange).unwrap();
    assert!(keep.shortcut.is_none());
    assert!(down.shortcut.is_some());
    assert_eq!(keep.output_shape(Shape::new(1, 320, 320, 32)).unwrap(), Shape::new(1, 320, 320, 32));
    assert_eq!(down.output_shape(Shape::new(1, 320, 320, 32)).unwrap(), Shape::new(1, 160, 160, 64));
    assert!(keep.output_shape(Shape::new(1, 8, 8, 16)).is_err());
}

#[test]
fn always_policy_projects_every_unit() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(0);
    let mut pb = ParamBuilder::new(&mut store, &mut rng);
    let g = ResGroup::new(&mut pb, "g", 32, 8, 1, ShortcutPolicy::Always).unwrap();
    assert!(g.units.iter().all(|u| u.shortcut.is_some()));
}

#[test]
fn forward_shape_matches_inference() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(1);
    let group = {
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        ResGroup::new(&mut pb, "g", 8, 4, 2, ShortcutPolicy::OnShapeChange).unwrap()
    };
    let input = Shape::new(2, 9, 7, 8);
    let mut g = Graph::new();
    let x = g.input(Tensor::from_fn(input, |i| (i as f32 * 0.37).sin()));
    let y = group.forward(&mut g, &store, x, Mode::Train).unwrap();
    assert_eq!(g.shape(y), group.output_shape(input).unwrap());
    assert_eq!(g.shape(y), Shape::new(2, 5, 4, 16));
}

#[test]
fn zero_branch_identity_unit_is_exact_identity() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(2);
    let unit = {
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        ResidualUnit::new(&mut pb, "u", ResidualUnitSpec::new(16, 4, 1), ShortcutPolicy::OnShapeChange).unwrap()
    };
    zero_learnables(&mut store, "u.restore");
    let input = Tensor::from_fn(Shape::new(2, 5, 5, 16), |i| (i as f32 * 0.71).cos() * 3.0);
    for mode in [Mode::Train, Mode::Eval] {
        let mut g = Graph::new();
        let x = g.input(input.clone());
        let y = unit.forward(&mut g, &store, x, mode).unwrap();
        assert_eq!(g.value(y).data(), input.data());
    }
}

#[test]
fn residual_rejects_wrong_channels() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(0);
    let unit = {
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        ResidualUnit::new(&mut pb, "u", ResidualUnitSpec::new(16, 4, 1), ShortcutPolicy::Always).unwrap()
    };
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(Shape::new(1, 4, 4, 8)));
    assert!(matches!(unit.forward(&mut g, &store, x, Mode::Eval), Err(crate::Error::Shape(_))));
}

#[test]
fn aspp_concatenates_five_branches() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(0);
    let aspp = {
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        Aspp::new(&mut pb, "aspp", 128).unwrap()
    };
    assert_eq!(aspp.branches.len(), 5);
    assert_eq!(aspp.param_count(), 151_712);
    assert_eq!(
        aspp.output_shape(Shape::new(1, 80, 80, 128)).unwrap(),
        Shape::new(1, 80, 80, 160)
    );
}

#[test]
fn aspp_branches_keep_spatial_size_on_small_input() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(0);
    let aspp = {
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        Aspp::new(&mut pb, "aspp", 4).unwrap()
    };
    let mut g = Graph::new();
    let x = g.input(Tensor::from_fn(Shape::new(1, 6, 5, 4), |i| i as f32 * 0.01));
    let y = aspp.forward(&mut g, &store, x).unwrap();
    assert_eq!(g.shape(y), Shape::new(1, 6, 5, 160));
}

#[test]
fn aspp_zero_weights_give_zero_output() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(0);
    let aspp = {
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        Aspp::new(&mut pb, "aspp", 4).unwrap()
    };
    zero_learnables(&mut store, "aspp");
    let mut g = Graph::new();
    let x = g.input(Tensor::from_fn(Shape::new(1, 6, 6, 4), |i| i as f32));
    let y = aspp.forward(&mut g, &store, x).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn stream_trace_matches_architecture_table() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(0);
    let body = {
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        StreamBody::new(&mut pb, "s", 3).unwrap()
    };
    let dims: Vec<(usize, usize, usize)> = body
        .trace(Shape::new(1, 320, 320, 3))
        .unwrap()
        .into_iter()
        .map(|(_, s)| (s.h, s.w, s.c))
        .collect();
    assert_eq!(
        dims,
        vec![
            (318, 318, 16),
            (106, 106, 16),
            (104, 104, 32),
            (34, 34, 32),
            (32, 32, 64),
            (10, 10, 64),
            (8, 8, 128),
            (1, 1, 128),
            (1, 1, 64),
            (1, 1, 64),
        ]
    );
}

#[test]
fn stream_body_zero_weights_give_zero_features_and_is_deterministic() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(4);
    let body = {
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        StreamBody::new(&mut pb, "s", 1).unwrap()
    };
    let input = Tensor::from_fn(Shape::new(1, 128, 128, 1), |i| ((i * 7919) % 13) as f32 / 13.0);
    let run = |store: &ParamStore<f32>| {
        let mut g = Graph::new();
        let x = g.input(input.clone());
        let y = body.forward(&mut g, store, x, BodyDropout::default(), Mode::Eval).unwrap();
        g.value(y).clone()
    };
    let a = run(&store);
    assert_eq!(a.shape(), Shape::vector(1, 64));
    assert_eq!(a.data(), run(&store).data());
    zero_learnables(&mut store, "s");
    assert!(run(&store).data().iter().all(|&v| v == 0.0));
}

#[test]
fn stream_body_rejects_wrong_channel_count() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = init_rng(0);
    let body = {
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        StreamBody::new(&mut pb, "s", 1).unwrap()
    };
    assert!(matches!(body.trace(Shape::new(1, 320, 320, 3)), Err(crate::Error::Shape(_))));
}

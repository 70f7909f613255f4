//! Finite-difference checks for every differentiable primitive, shared by the
//! gradient test target and the acceptance run.

use hgrnet_core::nn::{init_rng, ParamBuilder};
use hgrnet_core::ops::ConvSpec;
use hgrnet_core::{Mode, ParamStore, Result, Role, Shape, Tensor};
use rand::Rng;

use super::{check_gradients, check_store, random_away_from_zero, random_tensor, rng, GradReport};

/// Outcome for one primitive across all its configurations.
pub struct PrimitiveResult {
    pub name: &'static str,
    pub configs: usize,
    pub max_rel_error: f64,
    pub checked: usize,
}

fn collect(name: &'static str, reports: Vec<Result<GradReport>>) -> PrimitiveResult {
    let mut out = PrimitiveResult {
        name,
        configs: 0,
        max_rel_error: 0.0,
        checked: 0,
    };
    for r in reports {
        let r = r.unwrap_or_else(|e| panic!("{name}: {e}"));
        out.configs += 1;
        out.max_rel_error = out.max_rel_error.max(r.max_rel_error);
        out.checked += r.checked;
    }
    out
}

fn conv_case(seed: u64, input: Shape, k: usize, cout: usize, spec: ConvSpec, bias: bool) -> Result<GradReport> {
    let mut r = rng(seed);
    let mut inputs = vec![
        random_tensor(&mut r, input, 1.0),
        random_tensor(&mut r, Shape::new(k, k, input.c, cout), 0.5),
    ];
    if bias {
        inputs.push(random_tensor(&mut r, Shape::vector(1, cout), 0.5));
    }
    check_gradients(&inputs, seed, |g, n| g.conv2d(n[0], n[1], n.get(2).copied(), spec))
}

pub fn conv2d() -> PrimitiveResult {
    let same = ConvSpec::same();
    let valid = ConvSpec::valid();
    collect(
        "conv2d",
        vec![
            conv_case(1, Shape::new(2, 5, 5, 2), 3, 3, same, true),
            conv_case(2, Shape::new(1, 6, 7, 3), 3, 2, valid, false),
            conv_case(3, Shape::new(2, 7, 7, 2), 3, 2, same.with_stride(2), true),
            conv_case(4, Shape::new(1, 8, 8, 3), 1, 4, valid.with_stride(2), true),
            conv_case(5, Shape::new(1, 20, 20, 1), 3, 2, same.with_dilation(18), true),
            conv_case(6, Shape::new(1, 9, 9, 2), 3, 2, same.with_dilation(3), true),
        ],
    )
}

fn unary(
    seed: u64,
    input: Tensor<f64>,
    f: impl Fn(&mut hgrnet_core::Graph<f64>, hgrnet_core::NodeId) -> Result<hgrnet_core::NodeId>,
) -> Result<GradReport> {
    check_gradients(&[input], seed, |g, n| f(g, n[0]))
}

pub fn max_pool() -> PrimitiveResult {
    let cases = [
        (Shape::new(1, 6, 6, 2), 3, 3),
        (Shape::new(2, 7, 7, 1), 3, 2),
        (Shape::new(1, 4, 4, 3), 2, 2),
        (Shape::new(1, 9, 10, 2), 3, 3),
        (Shape::new(2, 5, 5, 1), 2, 1),
    ];
    collect(
        "max_pool",
        cases
            .iter()
            .enumerate()
            .map(|(i, &(s, size, stride))| {
                let x = random_away_from_zero(&mut rng(10 + i as u64), s);
                unary(10 + i as u64, x, |g, x| g.max_pool2d(x, size, stride))
            })
            .collect(),
    )
}

fn shapes() -> [Shape; 5] {
    [
        Shape::new(1, 3, 3, 2),
        Shape::new(2, 4, 2, 3),
        Shape::new(3, 1, 1, 5),
        Shape::new(1, 5, 5, 1),
        Shape::new(2, 2, 3, 4),
    ]
}

pub fn elementwise() -> Vec<PrimitiveResult> {
    let run = |name: &'static str, base: u64, kink: bool, f: fn(&mut hgrnet_core::Graph<f64>, hgrnet_core::NodeId) -> Result<hgrnet_core::NodeId>| {
        collect(
            name,
            shapes()
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let seed = base + i as u64;
                    let mut r = rng(seed);
                    let x = if kink { random_away_from_zero(&mut r, s) } else { random_tensor(&mut r, s, 3.0) };
                    unary(seed, x, f)
                })
                .collect(),
        )
    };
    vec![
        run("global_avg_pool", 20, false, |g, x| g.global_avg_pool(x)),
        run("relu", 30, true, |g, x| g.relu(x)),
        run("sigmoid", 40, false, |g, x| g.sigmoid(x)),
        run("upsample_x2", 50, false, |g, x| g.bilinear_upsample(x, 2)),
        run("upsample_x4", 60, false, |g, x| g.bilinear_upsample(x, 4)),
        run("sum", 70, false, |g, x| g.sum(x)),
    ]
}

pub fn softmax() -> PrimitiveResult {
    collect(
        "softmax",
        [(1, 2), (2, 4), (3, 10), (4, 3), (1, 64)]
            .iter()
            .enumerate()
            .map(|(i, &(n, c))| {
                let seed = 80 + i as u64;
                let x = random_tensor(&mut rng(seed), Shape::vector(n, c), 4.0);
                unary(seed, x, |g, x| g.softmax(x))
            })
            .collect(),
    )
}

pub fn dense() -> PrimitiveResult {
    collect(
        "dense",
        [(1, 3, 2), (2, 5, 4), (4, 8, 3), (3, 1, 6), (2, 16, 10)]
            .iter()
            .enumerate()
            .map(|(i, &(n, din, dout))| {
                let seed = 90 + i as u64;
                let mut r = rng(seed);
                let inputs = [
                    random_tensor(&mut r, Shape::vector(n, din), 1.0),
                    random_tensor(&mut r, Shape::new(1, 1, din, dout), 1.0),
                    random_tensor(&mut r, Shape::vector(1, dout), 1.0),
                ];
                check_gradients(&inputs, seed, |g, v| g.dense(v[0], v[1], v[2]))
            })
            .collect(),
    )
}

pub fn dropout() -> PrimitiveResult {
    collect(
        "dropout",
        shapes()
            .iter()
            .zip([0.1, 0.3, 0.45, 0.5, 0.75])
            .enumerate()
            .map(|(i, (&s, rate))| {
                let seed = 100 + i as u64;
                let x = random_tensor(&mut rng(seed), s, 2.0);
                unary(seed, x, move |g, x| g.dropout(x, rate, Mode::Train))
            })
            .collect(),
    )
}

pub fn concat_and_add() -> Vec<PrimitiveResult> {
    let concat = (0..5)
        .map(|i| {
            let seed = 110 + i as u64;
            let mut r = rng(seed);
            let (n, h, w) = (1 + i % 2, 2 + i % 3, 3);
            let inputs: Vec<_> = (0..2 + i % 3)
                .map(|j| random_tensor(&mut r, Shape::new(n, h, w, 1 + (i + j) % 4), 1.0))
                .collect();
            check_gradients(&inputs, seed, |g, v| g.concat_channels(v))
        })
        .collect();
    let add = shapes()
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let seed = 120 + i as u64;
            let mut r = rng(seed);
            let inputs = [random_tensor(&mut r, s, 1.0), random_tensor(&mut r, s, 1.0)];
            check_gradients(&inputs, seed, |g, v| g.add(v[0], v[1]))
        })
        .collect();
    vec![collect("concat", concat), collect("add", add)]
}

fn bn_case(seed: u64, s: Shape, mode: Mode, relu: bool) -> Result<GradReport> {
    let mut store = ParamStore::<f64>::new();
    let mut init = init_rng(seed);
    let bn = ParamBuilder::new(&mut store, &mut init).batch_norm("bn", s.c)?;
    let mut r = rng(seed);
    let x = store.add("x", random_tensor(&mut r, s, 2.0), Role::Weight)?;
    for (id, lo, hi) in [(bn.gamma, 0.5, 1.5), (bn.beta, -0.5, 0.5), (bn.running_mean, -0.3, 0.3), (bn.running_var, 0.5, 2.0)] {
        store.get_mut(id).value = Tensor::from_fn(Shape::vector(1, s.c), |_| r.random_range(lo..hi));
    }
    store.get_mut(bn.updates).value = Tensor::scalar(1.0);
    let check = [x, bn.gamma, bn.beta];
    check_store(&mut store, &check, seed, move |g, st| {
        let xn = g.param(st, x);
        if relu {
            g.bn_relu(st, xn, &bn, mode)
        } else {
            g.batch_norm(st, xn, &bn, mode)
        }
    })
}

pub fn batch_norm() -> Vec<PrimitiveResult> {
    let bn_shapes = [
        Shape::new(2, 3, 3, 2),
        Shape::new(4, 1, 1, 3),
        Shape::new(1, 4, 4, 1),
        Shape::new(3, 2, 2, 4),
        Shape::new(2, 5, 3, 2),
    ];
    let run = |base: u64, mode: Mode, relu: bool| {
        bn_shapes
            .iter()
            .enumerate()
            .map(|(i, &s)| bn_case(base + i as u64, s, mode, relu))
            .collect::<Vec<_>>()
    };
    vec![
        collect("batch_norm_train", run(130, Mode::Train, false)),
        collect("batch_norm_eval", run(140, Mode::Eval, false)),
        collect("bn_relu_train", run(150, Mode::Train, true)),
        collect("bn_relu_eval", run(160, Mode::Eval, true)),
    ]
}

pub fn losses() -> Vec<PrimitiveResult> {
    let bce = shapes()
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let seed = 170 + i as u64;
            let mut r = rng(seed);
            let p = Tensor::from_fn(s, |_| r.random_range(0.05..0.95));
            let y = Tensor::from_fn(s, |_| if r.random::<bool>() { 1.0 } else { 0.0 });
            check_gradients(&[p], seed, move |g, v| g.bce_loss(v[0], y.clone()))
        })
        .collect();
    let ce = [(1, 2), (2, 4), (3, 10), (4, 3), (2, 6)]
        .iter()
        .enumerate()
        .map(|(i, &(n, c))| {
            let seed = 180 + i as u64;
            let mut r = rng(seed);
            let p = Tensor::from_fn(Shape::vector(n, c), |_| r.random_range(0.05..0.95));
            let mut y = Tensor::zeros(Shape::vector(n, c));
            for item in 0..n {
                y.item_mut(item)[r.random_range(0..c)] = 1.0;
            }
            check_gradients(&[p], seed, move |g, v| g.categorical_ce_loss(v[0], y.clone()))
        })
        .collect();
    vec![collect("bce", bce), collect("categorical_ce", ce)]
}

pub fn all() -> Vec<PrimitiveResult> {
    let mut out = vec![conv2d(), max_pool(), softmax(), dense(), dropout()];
    out.extend(elementwise());
    out.extend(concat_and_add());
    out.extend(batch_norm());
    out.extend(losses());
    out
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texgan_tensor::{
    finite_diff_gradient, max_relative_error, ConvGeometry, Graph, Tensor, TensorError, Var,
};

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-6;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Reduces an arbitrary-shape output to a scalar with a fixed random projection.
fn project(g: &Graph<f64>, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.shape(y);
    let r = g.constant(random(&mut rng, &shape, -1.0, 1.0));
    let p = g.mul(y, r).unwrap();
    g.sum(p).unwrap()
}

/// Compares `backward` against central differences for every input.
fn check<F>(inputs: &[Tensor<f64>], build: F)
where
    F: Fn(&Graph<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor<f64>]| -> f64 {
        let g = Graph::new();
        let vars: Vec<Var> = vals
            .iter()
            .enumerate()
            .map(|(i, t)| g.variable(&format!("x{i}"), t.clone()))
            .collect();
        let y = build(&g, &vars);
        let s = project(&g, y, 99);
        g.value(s).item()
    };
    let g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| g.variable(&format!("x{i}"), t.clone()))
        .collect();
    let y = build(&g, &vars);
    let s = project(&g, y, 99);
    let grads = g.backward(s, &vars).unwrap();
    for (k, grad) in grads.iter().enumerate() {
        let fd = finite_diff_gradient(
            |t| {
                let mut vals = inputs.to_vec();
                vals[k] = t.clone();
                eval(&vals)
            },
            &inputs[k],
            EPS,
        );
        let err = max_relative_error(grad.data(), fd.data(), 1e-8);
        assert!(err < TOL, "input {k}: relative error {err}");
    }
}

#[test]
fn elementwise_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        let a = random(&mut rng, &[2, 3], -1.0, 1.0);
        let b = random(&mut rng, &[2, 3], -1.0, 1.0);
        let pos = random(&mut rng, &[2, 3], 0.5, 2.0);
        let s = random(&mut rng, &[], -1.0, 1.0);
        check(&[a.clone(), b.clone()], |g, x| g.add(x[0], x[1]).unwrap());
        check(&[a.clone(), b.clone()], |g, x| g.sub(x[0], x[1]).unwrap());
        check(&[a.clone(), b.clone()], |g, x| g.mul(x[0], x[1]).unwrap());
        check(&[a.clone()], |g, x| g.scale(x[0], -2.5).unwrap());
        check(&[a.clone()], |g, x| g.shift(x[0], 0.7).unwrap());
        check(&[a.clone(), s.clone()], |g, x| g.mul_scalar(x[0], x[1]).unwrap());
        check(&[a.clone(), s.clone()], |g, x| g.add_scalar(x[0], x[1]).unwrap());
        check(&[a.clone()], |g, x| g.square(x[0]).unwrap());
        check(&[pos.clone()], |g, x| g.sqrt(x[0]).unwrap());
        check(&[pos.clone()], |g, x| g.recip(x[0]).unwrap());
        check(&[a.clone()], |g, x| g.exp(x[0]).unwrap());
        check(&[a.clone()], |g, x| g.relu(x[0]).unwrap());
        check(&[a.clone()], |g, x| g.leaky_relu(x[0], 0.2).unwrap());
        check(&[a.clone(), b.clone()], |g, x| {
            let c = g.detach(x[1]);
            g.leaky_relu_grad(x[0], c, 0.2).unwrap()
        });
    }
}

#[test]
fn reductions_and_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&mut rng, &[3, 4], -1.0, 1.0);
    let v = random(&mut rng, &[3], -1.0, 1.0);
    let s = random(&mut rng, &[], -1.0, 1.0);
    check(&[a.clone()], |g, x| g.sum(x[0]).unwrap());
    check(&[a.clone()], |g, x| g.mean(x[0]).unwrap());
    check(&[s.clone()], |g, x| g.broadcast(x[0], &[2, 2]).unwrap());
    check(&[a.clone()], |g, x| g.sum_rows(x[0]).unwrap());
    check(&[v.clone()], |g, x| g.expand_rows(x[0], 5).unwrap());
    check(&[a.clone()], |g, x| g.reshape(x[0], &[2, 6]).unwrap());
    check(&[a.clone()], |g, x| g.transpose(x[0]).unwrap());
    check(&[a.clone()], |g, x| g.norm(x[0], 1e-12).unwrap());
    check(&[a.clone()], |g, x| g.row_norms(x[0], 1e-12).unwrap());
    let b = random(&mut rng, &[4, 2], -1.0, 1.0);
    check(&[a.clone(), b], |g, x| g.matmul(x[0], x[1]).unwrap());
}

#[test]
fn image_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut rng, &[2, 3, 6, 6], -1.0, 1.0);
    for geom in [
        ConvGeometry { kernel: 3, stride: 1, pad: 1 },
        ConvGeometry { kernel: 3, stride: 2, pad: 1 },
        ConvGeometry { kernel: 1, stride: 1, pad: 0 },
    ] {
        let w = random(&mut rng, &[2, 3, geom.kernel, geom.kernel], -1.0, 1.0);
        check(&[x.clone(), w.clone()], |g, v| g.conv2d(v[0], v[1], geom).unwrap());
        let ho = texgan_tensor::conv2d_output_size(6, geom).unwrap();
        let gy = random(&mut rng, &[2, 2, ho, ho], -1.0, 1.0);
        check(&[gy.clone(), w.clone()], |g, v| {
            g.conv2d_input_grad(v[0], v[1], geom, (6, 6)).unwrap()
        });
        check(&[x.clone(), gy], |g, v| g.conv2d_weight_grad(v[0], v[1], geom).unwrap());
    }
    let b = random(&mut rng, &[3], -1.0, 1.0);
    check(&[x.clone(), b], |g, v| g.bias_add(v[0], v[1]).unwrap());
    check(&[x.clone()], |g, v| g.channel_sum(v[0]).unwrap());
    check(&[x.clone()], |g, v| g.avg_pool2(v[0]).unwrap());
    check(&[x.clone()], |g, v| g.upsample2(v[0]).unwrap());
    check(&[x.clone()], |g, v| g.spatial_mean(v[0]).unwrap());
    check(&[x.clone()], |g, v| g.slice_channels(v[0], 1, 1).unwrap());
    let y = random(&mut rng, &[2, 1, 6, 6], -1.0, 1.0);
    check(&[x, y], |g, v| g.concat(&[v[0], v[1]]).unwrap());
}

#[test]
fn composite_conv_relu_mean_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, &[2, 1, 8, 8], -1.0, 1.0);
    let w1 = random(&mut rng, &[3, 1, 3, 3], -0.5, 0.5);
    let w2 = random(&mut rng, &[2, 3, 3, 3], -0.5, 0.5);
    let geom = ConvGeometry { kernel: 3, stride: 1, pad: 1 };
    check(&[x, w1, w2], |g, v| {
        let h = g.conv2d(v[0], v[1], geom).unwrap();
        let h = g.relu(h).unwrap();
        let h = g.conv2d(h, v[2], geom).unwrap();
        let h = g.leaky_relu(h, 0.2).unwrap();
        g.mean(h).unwrap()
    });
}

#[test]
fn square_gradient_is_analytic() {
    let g = Graph::<f64>::new();
    let x = g.variable("x", Tensor::scalar(3.0));
    let y = g.square(x).unwrap();
    assert_eq!(g.backward(y, &[x]).unwrap()[0].item(), 6.0);
}

#[test]
fn sum_gradient_is_all_ones() {
    let g = Graph::<f64>::new();
    let x = g.variable("x", Tensor::zeros(&[2, 3, 4]));
    let y = g.sum(x).unwrap();
    let grad = &g.backward(y, &[x]).unwrap()[0];
    assert_eq!(grad.shape(), &[2, 3, 4]);
    assert!(grad.data().iter().all(|&v| v == 1.0));
}

#[test]
fn unused_and_constant_nodes_get_zero_gradients() {
    let g = Graph::<f64>::new();
    let x = g.variable("x", Tensor::ones(&[2]));
    let unused = g.variable("u", Tensor::ones(&[3]));
    let c = g.constant(Tensor::ones(&[2]));
    let p = g.mul(x, c).unwrap();
    let y = g.sum(p).unwrap();
    let grads = g.backward(y, &[x, unused, c]).unwrap();
    assert_eq!(grads[0].data(), &[1.0, 1.0]);
    assert_eq!(grads[1].data(), &[0.0; 3]);
    assert_eq!(grads[2].data(), &[0.0; 2]);
}

#[test]
fn backward_errors() {
    let g = Graph::<f64>::new();
    let x = g.variable("x", Tensor::ones(&[2]));
    let y = g.square(x).unwrap();
    assert!(matches!(g.backward(y, &[x]), Err(TensorError::NonScalarOutput(_))));
    let other = Graph::<f64>::new();
    let z = other.variable("z", Tensor::scalar(1.0));
    let s = g.sum(y).unwrap();
    assert!(matches!(g.backward(s, &[z]), Err(TensorError::ForeignNode(_))));
}

#[test]
fn linearity_of_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xv = random(&mut rng, &[4], -1.0, 1.0);
    let (a, b) = (1.7, -0.3);
    let grad_of = |which: u8| -> Vec<f64> {
        let g = Graph::<f64>::new();
        let x = g.variable("x", xv.clone());
        let f = {
            let e = g.exp(x).unwrap();
            g.sum(e).unwrap()
        };
        let h = {
            let q = g.square(x).unwrap();
            let q = g.mul(q, x).unwrap();
            g.sum(q).unwrap()
        };
        let out = match which {
            0 => f,
            1 => h,
            _ => {
                let fa = g.scale(f, a).unwrap();
                let hb = g.scale(h, b).unwrap();
                g.add(fa, hb).unwrap()
            }
        };
        g.backward(out, &[x]).unwrap()[0].to_vec()
    };
    let (gf, gh, gc) = (grad_of(0), grad_of(1), grad_of(2));
    for i in 0..4 {
        assert!((gc[i] - (a * gf[i] + b * gh[i])).abs() < 1e-12);
    }
}

#[test]
fn evaluation_is_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = Graph::<f32>::new();
        let x = g.input("x", random(&mut rng, &[2, 2, 8, 8], -1.0, 1.0).cast());
        let w = g.variable("w", random(&mut rng, &[3, 2, 3, 3], -1.0, 1.0).cast());
        let geom = ConvGeometry { kernel: 3, stride: 1, pad: 1 };
        let y = g.conv2d(x, w, geom).unwrap();
        let y = g.leaky_relu(y, 0.2).unwrap();
        let s = g.mean(y).unwrap();
        (g.value(s), g.backward(s, &[w]).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn averaging_conv_of_ramp_matches_nested_loops() {
    let ramp: Vec<f64> = (0..25).map(|i| (i % 5) as f64 + 5.0 * (i / 5) as f64).collect();
    let g = Graph::<f64>::new();
    let x = g.input("x", Tensor::new(vec![1, 1, 5, 5], ramp.clone()).unwrap());
    let w = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0 / 9.0));
    let y = g.conv2d(x, w, ConvGeometry { kernel: 3, stride: 1, pad: 1 }).unwrap();
    let got = g.value(y);
    for i in 0..5i32 {
        for j in 0..5i32 {
            let mut acc = 0.0;
            for di in -1..=1 {
                for dj in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if (0..5).contains(&a) && (0..5).contains(&b) {
                        acc += ramp[(a * 5 + b) as usize] / 9.0;
                    }
                }
            }
            assert!((got.data()[(i * 5 + j) as usize] - acc).abs() < 1e-12);
        }
    }
}

// ---- second order ----------------------------------------------------------

#[test]
fn gradient_of_linear_map_is_constant_weight() {
    let w = Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
    for xv in [[1.0, 2.0, 3.0], [-7.0, 0.0, 0.25]] {
        let g = Graph::<f64>::with_higher_order();
        let x = g.variable("x", Tensor::new(vec![1, 3], xv.to_vec()).unwrap());
        let wv = g.variable("w", w.clone());
        let p = g.mul(wv, x).unwrap();
        let d = g.sum(p).unwrap();
        let grad = g.input_gradient_node(d, x).unwrap();
        assert_eq!(g.value(grad).data(), w.data());
    }
}

#[test]
fn gradient_of_quadratic_form_is_two_a_x() {
    let a = Tensor::new(vec![3, 3], vec![2.0, 0.5, -1.0, 0.5, 1.0, 0.3, -1.0, 0.3, 4.0]).unwrap();
    let xv = Tensor::new(vec![3, 1], vec![0.7, -1.2, 0.4]).unwrap();
    let g = Graph::<f64>::with_higher_order();
    let x = g.variable("x", xv.clone());
    let av = g.constant(a.clone());
    let ax = g.matmul(av, x).unwrap();
    let p = g.mul(x, ax).unwrap();
    let d = g.sum(p).unwrap();
    let grad = g.value(g.input_gradient_node(d, x).unwrap());
    for i in 0..3 {
        let want: f64 = 2.0 * (0..3).map(|j| a.data()[i * 3 + j] * xv.data()[j]).sum::<f64>();
        assert!((grad.data()[i] - want).abs() < 1e-12);
    }
}

#[test]
fn penalty_of_linear_critic_differentiates_through_gradient() {
    let penalty = |w: &Tensor<f64>| -> (f64, Vec<f64>) {
        let g = Graph::<f64>::with_higher_order();
        let x = g.variable("x", Tensor::new(vec![1, 3], vec![0.3, -0.2, 0.9]).unwrap());
        let wv = g.variable("w", w.clone());
        let p = g.mul(wv, x).unwrap();
        let d = g.sum(p).unwrap();
        let grad = g.input_gradient_node(d, x).unwrap();
        let n = g.norm(grad, 0.0).unwrap();
        let n = g.shift(n, -1.0).unwrap();
        let pen = g.square(n).unwrap();
        let gw = g.backward(pen, &[wv]).unwrap().remove(0);
        (g.value(pen).item(), gw.to_vec())
    };
    let w = Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
    let (value, grad) = penalty(&w);
    let norm = (0.25f64 + 1.0 + 4.0).sqrt();
    assert!((value - (norm - 1.0).powi(2)).abs() < 1e-12);
    let fd = finite_diff_gradient(|t| penalty(t).0, &w, 1e-6);
    assert!(max_relative_error(&grad, fd.data(), 1e-8) < 1e-6);
}

#[test]
fn second_order_through_conv_and_leaky_relu() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x0 = random(&mut rng, &[2, 1, 6, 6], -1.0, 1.0);
    let w1 = random(&mut rng, &[3, 1, 3, 3], -0.5, 0.5);
    let w2 = random(&mut rng, &[1, 3, 3, 3], -0.5, 0.5);
    let geom = ConvGeometry { kernel: 3, stride: 2, pad: 1 };
    let objective = |w1: &Tensor<f64>, w2: &Tensor<f64>| -> (f64, Vec<Tensor<f64>>) {
        let g = Graph::<f64>::with_higher_order();
        let x = g.variable("x", x0.clone());
        let a = g.variable("w1", w1.clone());
        let b = g.variable("w2", w2.clone());
        let h = g.conv2d(x, a, geom).unwrap();
        let h = g.leaky_relu(h, 0.2).unwrap();
        let h = g.conv2d(h, b, geom).unwrap();
        let h = g.square(h).unwrap();
        let d = g.sum(h).unwrap();
        let gx = g.input_gradient_node(d, x).unwrap();
        let norms = g.row_norms(gx, 1e-12).unwrap();
        let norms = g.shift(norms, -1.0).unwrap();
        let sq = g.square(norms).unwrap();
        let pen = g.mean(sq).unwrap();
        (g.value(pen).item(), g.backward(pen, &[a, b]).unwrap())
    };
    let (_, grads) = objective(&w1, &w2);
    let fd1 = finite_diff_gradient(|t| objective(t, &w2).0, &w1, EPS);
    let fd2 = finite_diff_gradient(|t| objective(&w1, t).0, &w2, EPS);
    assert!(max_relative_error(grads[0].data(), fd1.data(), 1e-8) < TOL);
    assert!(max_relative_error(grads[1].data(), fd2.data(), 1e-8) < TOL);
}

#[test]
fn grad_nodes_requires_higher_order_graph() {
    let g = Graph::<f64>::new();
    let x = g.variable("x", Tensor::scalar(1.0));
    let y = g.square(x).unwrap();
    assert_eq!(g.input_gradient_node(y, x), Err(TensorError::HigherOrderDisabled));
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn linear_critic_gradient_independent_of_point(
            w in proptest::collection::vec(-2.0f64..2.0, 4),
            x in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let g = Graph::<f64>::with_higher_order();
            let xv = g.variable("x", Tensor::new(vec![4], x).unwrap());
            let wv = g.constant(Tensor::new(vec![4], w.clone()).unwrap());
            let p = g.mul(wv, xv).unwrap();
            let d = g.sum(p).unwrap();
            let grad = g.input_gradient_node(d, xv).unwrap();
            prop_assert_eq!(g.value(grad).to_vec(), w);
        }
    }
}

//! Central finite-difference checks (h = 1e-5) of every differentiable
//! layer, the loss and a whole network, on at least 20 random instances each.
//!
//! The error of one instance is the norm-wise relative error
//! `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` per gradient tensor.
//! Instances whose inputs sit within 1e-3 of a ReLU kink or a max-pool tie
//! are redrawn, since the derivative is undefined there.

use bsf_core::nn::loss::{loss_and_grad, softmax, softmax_backward};
use bsf_core::nn::{Activation, ActivationLayer, Conv2d, Dense, Dropout, Flatten, Layer, MaxPool};
use bsf_core::{Mode, Network, RngStream, Tensor};

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;
const INSTANCES: usize = 20;
const MARGIN: f64 = 1e-3;

fn rel_error(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn random(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| 2.0 * rng.next_f64() - 1.0).collect()).unwrap()
}

/// `Σ r ⊙ layer(x)` with a fixed forward stream, so dropout masks repeat.
fn objective(layer: &Layer, x: &Tensor, r: &Tensor, seed: u64) -> f64 {
    let mut l = layer.clone();
    let y = l.forward(x, Mode::Train, &mut RngStream::new(seed, 99)).unwrap();
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn numeric(mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(H) - f(-H)) / (2.0 * H)
}

/// Checks input and parameter gradients of one layer instance; returns the worst error.
fn check_instance(layer: &Layer, x: &Tensor, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 7);
    let mut l = layer.clone();
    let y = l.forward(x, Mode::Train, &mut RngStream::new(seed, 99)).unwrap();
    let r = random(y.shape(), &mut rng);
    let dx = l.backward(&r, true).unwrap().unwrap();

    let mut worst: f64 = 0.0;
    let num_dx: Vec<f64> = (0..x.len())
        .map(|i| {
            numeric(|h| {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                objective(layer, &xp, &r, seed)
            })
        })
        .collect();
    worst = worst.max(rel_error(dx.data(), &num_dx));

    for (p, param) in l.params().iter().enumerate() {
        let num: Vec<f64> = (0..param.value.len())
            .map(|j| {
                numeric(|h| {
                    let mut lp = layer.clone();
                    lp.params_mut()[p].value.data_mut()[j] += h;
                    objective(&lp, x, &r, seed)
                })
            })
            .collect();
        worst = worst.max(rel_error(param.grad.data(), &num));
    }
    worst
}

/// Draws instances until `INSTANCES` pass the `smooth` margin test and
/// asserts each one's gradient error.
fn run_suite(
    name: &str,
    mut make: impl FnMut(&mut RngStream) -> (Layer, Tensor),
    smooth: impl Fn(&Layer, &Tensor) -> bool,
) {
    let mut checked = 0;
    let mut seed = 0;
    while checked < INSTANCES {
        seed += 1;
        assert!(seed < 500, "{name}: too many non-smooth instances");
        let mut rng = RngStream::new(seed, 0);
        let (layer, x) = make(&mut rng);
        if !smooth(&layer, &x) {
            continue;
        }
        let err = check_instance(&layer, &x, seed);
        assert!(err <= TOL, "{name} instance {seed}: relative error {err:e}");
        checked += 1;
    }
}

fn preactivations(layer: &Layer, x: &Tensor) -> Vec<f64> {
    let mut linear = layer.clone();
    match &mut linear {
        Layer::Dense(d) => d.activation = Activation::Identity,
        Layer::Conv2d(c) => c.activation = Activation::Identity,
        _ => return x.data().to_vec(),
    }
    linear
        .forward(x, Mode::Eval, &mut RngStream::new(0, 0))
        .unwrap()
        .into_data()
}

fn away_from_kinks(layer: &Layer, x: &Tensor) -> bool {
    preactivations(layer, x).iter().all(|z| z.abs() > MARGIN)
}

fn activations() -> [Activation; 3] {
    [Activation::Identity, Activation::Relu, Activation::Tanh]
}

#[test]
fn dense_layers() {
    for act in activations() {
        run_suite(
            &format!("dense {act:?}"),
            |rng| {
                let (b, i, o) = (1 + rng.below(4), 1 + rng.below(5), 1 + rng.below(5));
                (Layer::Dense(Dense::new(i, o, act, rng)), random(&[b, i], rng))
            },
            away_from_kinks,
        );
    }
}

#[test]
fn dense_with_nonzero_bias() {
    run_suite(
        "dense bias",
        |rng| {
            let mut d = Dense::new(3, 4, Activation::Tanh, rng);
            d.bias.value = random(&[4], rng);
            (Layer::Dense(d), random(&[2, 3], rng))
        },
        away_from_kinks,
    );
}

#[test]
fn conv_layers() {
    for act in activations() {
        run_suite(
            &format!("conv {act:?}"),
            |rng| {
                let (b, c, k) = (1 + rng.below(2), 1 + rng.below(2), 1 + rng.below(3));
                let (h, w) = (3 + rng.below(4), 3 + rng.below(4));
                let mut conv = Conv2d::new(c, k, act, rng);
                conv.bias.value = random(&[k], rng);
                (Layer::Conv2d(conv), random(&[b, c, h, w], rng))
            },
            away_from_kinks,
        );
    }
}

#[test]
fn conv_single_channel_two_kernels_on_6x6() {
    run_suite(
        "conv 1x1x6x6",
        |rng| (Layer::Conv2d(Conv2d::new(1, 2, Activation::Relu, rng)), random(&[1, 1, 6, 6], rng)),
        away_from_kinks,
    );
}

#[test]
fn activation_layers() {
    for act in [Activation::Relu, Activation::Tanh] {
        run_suite(
            &format!("activation {act:?}"),
            |rng| {
                let (b, n) = (1 + rng.below(4), 1 + rng.below(6));
                (Layer::Activation(ActivationLayer::new(act)), random(&[b, n], rng))
            },
            away_from_kinks,
        );
    }
}

#[test]
fn max_pool() {
    let no_ties = |_: &Layer, x: &Tensor| {
        let s = x.shape();
        let (h, w) = (s[2], s[3]);
        x.data().chunks(h * w).all(|plane| {
            (0..h / 2).all(|i| {
                (0..w / 2).all(|j| {
                    let mut win = [
                        plane[2 * i * w + 2 * j],
                        plane[2 * i * w + 2 * j + 1],
                        plane[(2 * i + 1) * w + 2 * j],
                        plane[(2 * i + 1) * w + 2 * j + 1],
                    ];
                    win.sort_by(f64::total_cmp);
                    win[3] - win[2] > MARGIN
                })
            })
        })
    };
    run_suite(
        "max pool",
        |rng| {
            let (b, c) = (1 + rng.below(2), 1 + rng.below(3));
            let (h, w) = (2 + rng.below(5), 2 + rng.below(5));
            (Layer::MaxPool(MaxPool::new(2)), random(&[b, c, h, w], rng))
        },
        no_ties,
    );
}

#[test]
fn flatten_and_dropout() {
    run_suite(
        "flatten",
        |rng| (Layer::Flatten(Flatten::default()), random(&[2, 2, 3, 3], rng)),
        |_, _| true,
    );
    run_suite(
        "dropout",
        |rng| {
            let p = 0.1 + 0.8 * rng.next_f64();
            (Layer::Dropout(Dropout::new(p).unwrap()), random(&[3, 5], rng))
        },
        |_, _| true,
    );
}

#[test]
fn cross_entropy_wrt_probabilities() {
    for seed in 0..INSTANCES as u64 {
        let mut rng = RngStream::new(seed, 1);
        let (b, n) = (1 + rng.below(4), 2 + rng.below(4));
        let probs = Tensor::new(vec![b, n], (0..b * n).map(|_| 0.01 + 0.98 * rng.next_f64()).collect()).unwrap();
        let mut onehot = Tensor::zeros(&[b, n]);
        for i in 0..b {
            onehot.data_mut()[i * n + rng.below(n)] = 1.0;
        }
        let (_, grad) = loss_and_grad(&probs, &onehot).unwrap();
        let num: Vec<f64> = (0..b * n)
            .map(|i| {
                numeric(|h| {
                    let mut p = probs.clone();
                    p.data_mut()[i] += h;
                    loss_and_grad(&p, &onehot).unwrap().0
                })
            })
            .collect();
        let err = rel_error(grad.data(), &num);
        assert!(err <= TOL, "loss instance {seed}: {err:e}");
    }
}

#[test]
fn softmax_cross_entropy_wrt_logits() {
    for seed in 0..INSTANCES as u64 {
        let mut rng = RngStream::new(seed, 2);
        let (b, n) = (1 + rng.below(4), 2 + rng.below(4));
        let logits = random(&[b, n], &mut rng).scale(3.0);
        let mut onehot = Tensor::zeros(&[b, n]);
        for i in 0..b {
            onehot.data_mut()[i * n + rng.below(n)] = 1.0;
        }
        let f = |z: &Tensor| loss_and_grad(&softmax(z), &onehot).unwrap().0;
        let probs = softmax(&logits);
        let (_, dprobs) = loss_and_grad(&probs, &onehot).unwrap();
        let dz = softmax_backward(&probs, &dprobs);
        let num: Vec<f64> = (0..b * n)
            .map(|i| {
                numeric(|h| {
                    let mut z = logits.clone();
                    z.data_mut()[i] += h;
                    f(&z)
                })
            })
            .collect();
        let err = rel_error(dz.data(), &num);
        assert!(err <= TOL, "softmax instance {seed}: {err:e}");
    }
}

#[test]
fn whole_network_parameter_gradients() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < INSTANCES {
        seed += 1;
        let mut rng = RngStream::new(seed, 3);
        let d = 2 + rng.below(3);
        let h = 2 + rng.below(4);
        let n = 2 + rng.below(3);
        let b = 1 + rng.below(4);
        let mut net = Network::new(
            vec![d],
            vec![
                Layer::Dense(Dense::new(d, h, Activation::Tanh, &mut rng)),
                Layer::Dense(Dense::new(h, h, Activation::Relu, &mut rng)),
                Layer::Dense(Dense::new(h, n, Activation::Identity, &mut rng)),
            ],
        )
        .unwrap();
        let x = random(&[b, d], &mut rng);
        let mut onehot = Tensor::zeros(&[b, n]);
        for i in 0..b {
            onehot.data_mut()[i * n + rng.below(n)] = 1.0;
        }
        // Skip instances with a ReLU pre-activation near zero.
        let mut probe = net.clone();
        let h1 = probe.layers_mut()[0].forward(&x, Mode::Eval, &mut rng).unwrap();
        if !away_from_kinks(&net.layers()[1], &h1) {
            continue;
        }
        let loss = |net: &Network| {
            let mut net = net.clone();
            let p = net.forward(&x, Mode::Train, &mut RngStream::new(0, 0)).unwrap();
            loss_and_grad(&p, &onehot).unwrap().0
        };
        let p = net.forward(&x, Mode::Train, &mut RngStream::new(0, 0)).unwrap();
        let (_, dprobs) = loss_and_grad(&p, &onehot).unwrap();
        net.backward(&dprobs).unwrap();
        let analytic: Vec<Tensor> = net.gradients().into_iter().cloned().collect();
        for (k, grad) in analytic.iter().enumerate() {
            let num: Vec<f64> = (0..grad.len())
                .map(|j| {
                    numeric(|h| {
                        let mut q = net.clone();
                        q.params_mut().nth(k).unwrap().value.data_mut()[j] += h;
                        loss(&q)
                    })
                })
                .collect();
            let err = rel_error(grad.data(), &num);
            assert!(err <= TOL, "network instance {seed}, parameter {k}: {err:e}");
        }
        checked += 1;
    }
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rkan_core::autodiff::{Jet, Tape};
use rkan_core::experiments::gradient_suite;
use rkan_core::gradcheck::{check_network, FD_STEP};
use rkan_core::jacobi::{jacobi_values, softplus_inverse};
use rkan_core::layers::*;
use rkan_core::mapping::MappingKind;
use rkan_core::Tensor;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn run(layer: Layer, x: &Tensor) -> Tensor {
    Network::new(vec![layer], NetworkMode::Kan).unwrap().predict(x).unwrap()
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize, r: f64) -> Tensor {
    Tensor::new(vec![n, d], (0..n * d).map(|_| rng.random_range(-r..r)).collect()).unwrap()
}

#[test]
fn every_parameter_matches_finite_differences() {
    for (kind, mode, r) in gradient_suite(17).unwrap() {
        assert!(r.missing.is_empty(), "{kind} {mode}: no gradient for {:?}", r.missing);
        assert!(r.max_rel_err < 1e-5, "{kind} {mode}: {r:?}");
    }
}

#[test]
fn jacobi_activation_degree_six_gradients() {
    let net = NetworkConfig::new(LayerKind::JacobiRKan, 6, vec![1, 4, 1])
        .build(2)
        .unwrap();
    let x = random_batch(&mut ChaCha8Rng::seed_from_u64(0), 6, 1, 3.0);
    assert!(net.predict(&x).unwrap().all_finite());
    let r = check_network(&net, &x, FD_STEP).unwrap();
    assert!(r.passes(1e-5), "{r:?}");
}

#[test]
fn pade_with_unit_denominator_reduces_to_polynomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut l = PadeRKanLayer::init(1, 1, 5, 3, MappingKind::Identity, Squash::Tanh, &mut rng).unwrap();
    l.alpha_raw = Tensor::scalar(0.3);
    l.beta_raw = Tensor::scalar(-0.4);
    let (a, b) = (0.3, (-0.4f64).exp_m1());
    let x = random_batch(&mut rng, 100, 1, 4.0);
    let y = run(Layer::Pade(l.clone()), &x);
    for (xi, yi) in x.data().iter().zip(y.data()) {
        let j = jacobi_values(5, a, b, xi.tanh()).unwrap();
        let poly: f64 = j.iter().zip(l.num_coeffs.data()).map(|(p, c)| p * c).sum();
        assert!((yi - poly).abs() <= 1e-12 * poly.abs(), "{yi} vs {poly}");
    }
}

#[test]
fn permuting_inputs_with_their_coefficients_is_invisible() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_batch(&mut rng, 7, 3, 2.0);
    let perm = [2usize, 0, 1];
    let xp = Tensor::new(
        vec![7, 3],
        (0..7)
            .flat_map(|i| perm.iter().map(move |&q| (i, q)))
            .map(|(i, q)| x.data()[i * 3 + q])
            .collect(),
    )
    .unwrap();

    let permute = |t: &Tensor, slices: usize, inner: usize| -> Tensor {
        // t viewed as [slices, 3, inner]; new slot q holds old perm[q]
        let mut out = Vec::with_capacity(t.len());
        for s in 0..slices {
            for &q in &perm {
                out.extend_from_slice(&t.data()[(s * 3 + q) * inner..(s * 3 + q + 1) * inner]);
            }
        }
        Tensor::new(t.shape().to_vec(), out).unwrap()
    };

    let mut j = JacobiRKanLayer::init(3, 2, 4, MappingKind::InfLog, Squash::Identity, &mut rng).unwrap();
    j.iota_raw = Tensor::scalar(0.7);
    let mut jp = j.clone();
    jp.edge_coeffs = permute(&j.edge_coeffs, 2, 5);
    let (a, b) = (run(Layer::Jacobi(j), &x), run(Layer::Jacobi(jp), &xp));
    a.data()
        .iter()
        .zip(b.data())
        .for_each(|(u, v)| assert!((u - v).abs() < 1e-12));

    let mut p = PadeRKanLayer::init(3, 2, 3, 2, MappingKind::Identity, Squash::Tanh, &mut rng).unwrap();
    p.den_coeffs = random_batch(&mut rng, 3, 3, 1.0);
    p.psi = random_batch(&mut rng, 2, 3, 1.0);
    let mut pp = p.clone();
    pp.num_coeffs = permute(&p.num_coeffs, 2, 4);
    pp.den_coeffs = permute(&p.den_coeffs, 1, 3);
    pp.psi = permute(&p.psi, 2, 1);
    let (a, b) = (run(Layer::Pade(p), &x), run(Layer::Pade(pp), &xp));
    a.data()
        .iter()
        .zip(b.data())
        .for_each(|(u, v)| assert!((u - v).abs() < 1e-12));
}

#[test]
fn unit_order_fractional_layer_is_the_affine_sigmoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut frac = PadeRKanLayer::init(2, 2, 4, 2, MappingKind::Fractional, Squash::Sigmoid, &mut rng).unwrap();
    frac.den_coeffs = Tensor::new(vec![2, 3], vec![1.0, 0.2, -0.1, 0.9, -0.3, 0.25]).unwrap();
    assert!((softplus_inverse(1.0) - frac.gamma_raw.data()[0]).abs() == 0.0);
    let plain = PadeRKanLayer {
        mapping: MappingKind::Identity,
        squash: Squash::Identity,
        ..frac.clone()
    };
    let x = random_batch(&mut rng, 20, 2, 5.0);
    let s = x.map(|v| 2.0 * sigmoid(v) - 1.0);
    let (a, b) = (run(Layer::Pade(frac), &x), run(Layer::Pade(plain), &s));
    a.data()
        .iter()
        .zip(b.data())
        .for_each(|(u, v)| assert!((u - v).abs() < 1e-12, "{u} vs {v}"));
}

#[test]
fn fresh_layers_are_tame() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = random_batch(&mut rng, 50, 3, 10.0);
    for kind in LayerKind::RATIONAL {
        let cfg = NetworkConfig {
            mode: NetworkMode::Kan,
            ..NetworkConfig::new(kind, 4, vec![3, 2])
        };
        let y = cfg.build(1).unwrap().predict(&x).unwrap();
        assert!(y.data().iter().all(|v| v.is_finite() && v.abs() < 10.0), "{kind}");
    }
}

#[test]
fn nets_differentiate_with_respect_to_inputs() {
    // a trained-looking net: random but fixed parameters
    let net = NetworkConfig::new(LayerKind::JacobiRKan, 4, vec![1, 6, 1])
        .build(3)
        .unwrap();
    let xs = [-2.0, -0.4, 0.3, 1.7];
    let x = Tensor::column(&xs);
    let d2 = rkan_core::autodiff::input_derivative(&net, &x, 2, 0).unwrap();
    let h = 1e-4;
    for (i, &x0) in xs.iter().enumerate() {
        let f = |v: f64| net.predict(&Tensor::column(&[v])).unwrap().data()[0];
        let fd = (f(x0 + h) - 2.0 * f(x0) + f(x0 - h)) / (h * h);
        let e = (d2.data()[i] - fd).abs() / fd.abs().max(1e-3);
        assert!(e < 1e-4, "x={x0}: {} vs {fd}", d2.data()[i]);
    }
}

#[test]
fn first_input_derivative_equals_backward() {
    let net = NetworkConfig {
        mode: NetworkMode::Kan,
        ..NetworkConfig::new(LayerKind::PadeRKan, 3, vec![1, 3, 1])
    }
    .build(5)
    .unwrap();
    let x = Tensor::column(&[-1.5, -0.2, 0.0, 0.8, 2.4]);
    let d1 = rkan_core::autodiff::input_derivative(&net, &x, 1, 0).unwrap();
    let mut t = Tape::new();
    let xv = t.param(x.clone());
    let xj = Jet::constant(xv);
    let y = rkan_core::autodiff::JetFn::eval(&net, &mut t, &xj).unwrap();
    let s = t.sum(y.value);
    let g = t.backward(s).unwrap().wrt(xv);
    for (a, b) in d1.data().iter().zip(g.data()) {
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }
}

fn guarded(n: f64, d: f64) -> (f64, f64, f64) {
    let mut t = Tape::new();
    let nv = t.param(Tensor::scalar(n));
    let dv = t.param(Tensor::scalar(d));
    let r = guarded_ratio(&mut t, &Jet::constant(nv), &Jet::constant(dv), PADE_EPSILON).unwrap();
    let g = t.backward(r.value).unwrap();
    (t.value(r.value).data()[0], g.wrt(nv).data()[0], g.wrt(dv).data()[0])
}

#[test]
fn guard_vanishes_on_the_pole() {
    let (r, dn, dd) = guarded(3.0, 0.0);
    assert_eq!(r, 0.0);
    assert_eq!(dn, 0.0);
    assert!(dd.is_finite());
}

proptest! {
    #[test]
    fn guard_is_finite_everywhere(n in -1e6f64..1e6, d in prop_oneof![Just(0.0), -1e-6f64..1e-6, -1e3f64..1e3]) {
        let (r, dn, dd) = guarded(n, d);
        prop_assert!(r.is_finite() && dn.is_finite() && dd.is_finite());
        let s = guarded_ratio_f64(n, d, PADE_EPSILON);
        prop_assert!((r - s).abs() <= 1e-14 * s.abs());
        if d.abs() > 1e-3 {
            prop_assert!((r - n / d).abs() <= 1e-12 * (n / d).abs() + 1e-300);
        }
    }

    #[test]
    fn jacobi_layer_is_linear_in_its_coefficients(seed in 0u64..1000, s in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = JacobiRKanLayer::init(2, 2, 3, MappingKind::InfAlg, Squash::Identity, &mut rng).unwrap();
        let x = random_batch(&mut rng, 4, 2, 5.0);
        let mut scaled = l.clone();
        scaled.edge_coeffs = l.edge_coeffs.map(|c| c * s);
        let (a, b) = (run(Layer::Jacobi(l), &x), run(Layer::Jacobi(scaled), &x));
        for (u, v) in a.data().iter().zip(b.data()) {
            prop_assert!((u * s - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }
}

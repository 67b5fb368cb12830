//! The `selftest` command: gradient checks for every differentiable path
//! plus the core protocol invariants, designed to finish in seconds.

use rand::Rng;

use crate::data::{dirichlet_partition, make_prototype, Dataset};
use crate::error::{Error, Result};
use crate::models::{diversity_loss, Classifier, ClassifierArch, Generator, GeneratorArch};
use crate::numerics::{
    dense_infer, gradient_check, kl_divergence, softmax, softmax_cross_entropy, Activation,
    OptimizerKind, OptimizerState, Tensor,
};
use crate::rng::derive_rng;

const TOLERANCE: f64 = 1e-4;

fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = rng.gen_range(-1.0..1.0);
    }
    t
}

fn check(name: &str, ok: bool, detail: String) -> Result<()> {
    if ok {
        println!("ok       {name}");
        Ok(())
    } else {
        println!("FAILED   {name}: {detail}");
        Err(Error::InvalidConfig(format!("selftest failed: {name}: {detail}")))
    }
}

fn mlp_gradient_check() -> Result<()> {
    let arch = ClassifierArch {
        input_dim: 4,
        feature_widths: vec![6, 5],
        num_classes: 3,
        hidden_activation: Activation::Relu,
    };
    let clf = Classifier::init(&arch, &mut derive_rng(1, &[11]));
    let x = random_tensor(&[4, 4], &mut derive_rng(1, &[12]));
    let labels = [0usize, 1, 2, 1];
    let (_, logits, mut tape) = clf.forward_train(&x)?;
    let (_, dlogits, _) = softmax_cross_entropy(&logits, &labels)?;
    let grads = clf.backward(&mut tape, &dlogits)?;

    let params: Vec<Tensor> = clf.tensors().into_iter().cloned().collect();
    let analytic: Vec<Tensor> = grads.tensors().into_iter().cloned().collect();
    let report = gradient_check(
        |ts: &[Tensor]| {
            let mut m = clf.clone();
            m.set_tensors(ts).unwrap();
            let (_, logits, _) = m.classify(&x).unwrap();
            softmax_cross_entropy(&logits, &labels).unwrap().0
        },
        &params,
        &analytic,
        1e-5,
    );
    check(
        "mlp softmax-ce gradients",
        report.max_rel_err <= TOLERANCE,
        format!("max rel err {}", report.max_rel_err),
    )
}

fn generator_gradient_check() -> Result<()> {
    let arch = GeneratorArch {
        noise_dim: 3,
        num_classes: 3,
        hidden_dim: 6,
        latent_dim: 4,
        leaky_slope: 0.2,
    };
    let gen = Generator::init(&arch, &mut derive_rng(2, &[13]));
    let readout = crate::numerics::DenseLayer::glorot(
        4,
        3,
        Activation::Identity,
        &mut derive_rng(2, &[14]),
    );
    let labels = [0usize, 1, 2, 0];

    let (z, eps, mut tape) = gen.forward_train(&labels, &mut derive_rng(2, &[15]))?;
    let logits = dense_infer(&readout, &z)?;
    let (_, dlogits, _) = softmax_cross_entropy(&logits, &labels)?;
    let mut dz = dlogits.matmul_bt(&readout.weights)?;
    let (_, div_dz) = diversity_loss(&z, &eps, &labels)?;
    dz.add_scaled(&div_dz, 1.0)?;
    let grads = gen.backward(&mut tape, &dz)?;

    let params: Vec<Tensor> = gen.tensors().into_iter().cloned().collect();
    let analytic: Vec<Tensor> = grads.tensors().into_iter().cloned().collect();
    let report = gradient_check(
        |ts: &[Tensor]| {
            let mut g = gen.clone();
            g.set_tensors(ts).unwrap();
            let (z, eps) = g.generate(&labels, &mut derive_rng(2, &[15])).unwrap();
            let logits = dense_infer(&readout, &z).unwrap();
            softmax_cross_entropy(&logits, &labels).unwrap().0
                + diversity_loss(&z, &eps, &labels).unwrap().0
        },
        &params,
        &analytic,
        1e-5,
    );
    check(
        "generator + diversity gradients",
        report.max_rel_err <= TOLERANCE,
        format!("max rel err {}", report.max_rel_err),
    )
}

fn kl_gradient_check() -> Result<()> {
    let mut rng = derive_rng(3, &[16]);
    let p = softmax(&random_tensor(&[3, 4], &mut rng));
    let s = random_tensor(&[3, 4], &mut rng);
    let (_, grad) = kl_divergence(&p, &softmax(&s))?;
    let report = gradient_check(
        |ts: &[Tensor]| kl_divergence(&p, &softmax(&ts[0])).unwrap().0,
        &[s.clone()],
        &[grad],
        1e-5,
    );
    check(
        "kl-divergence gradients",
        report.max_rel_err <= TOLERANCE,
        format!("max rel err {}", report.max_rel_err),
    )
}

fn softmax_invariants() -> Result<()> {
    let mut rng = derive_rng(4, &[17]);
    let logits = random_tensor(&[8, 10], &mut rng);
    let probs = softmax(&logits);
    let mut ok = true;
    let mut detail = String::new();
    for r in 0..8 {
        let sum: f64 = probs.row(r).iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            ok = false;
            detail = format!("row {r} sums to {sum}");
        }
    }
    // Shift invariance.
    let mut shifted = logits.clone();
    for r in 0..8 {
        for v in shifted.row_mut(r) {
            *v += 123.456;
        }
    }
    let probs2 = softmax(&shifted);
    for (a, b) in probs.data().iter().zip(probs2.data()) {
        if (a - b).abs() > 1e-12 {
            ok = false;
            detail = format!("shift changed probs by {}", (a - b).abs());
        }
    }
    check("softmax normalization + shift invariance", ok, detail)
}

fn optimizer_fixed_point() -> Result<()> {
    let mut p = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5])?;
    let g = Tensor::zeros(&[3]);
    let before = p.clone();
    let mut sgd = OptimizerState::new(OptimizerKind::Sgd { lr: 0.1 }, &[&p]);
    sgd.step(&mut [&mut p], &[&g])?;
    let mut adam = OptimizerState::new(OptimizerKind::adam(0.1), &[&p]);
    adam.step(&mut [&mut p], &[&g])?;
    check(
        "optimizer zero-gradient fixed point",
        p.bit_eq(&before),
        "parameters moved under zero gradient".to_string(),
    )
}

fn partition_determinism() -> Result<()> {
    let labels: Vec<usize> = (0..300).map(|i| (i * 13) % 5).collect();
    let ds = Dataset::new(Tensor::zeros(&[300, 1]), labels, 5)?;
    let a = dirichlet_partition(&ds, 6, 0.2, 77)?;
    let b = dirichlet_partition(&ds, 6, 0.2, 77)?;
    let ok = a.clients() == b.clients() && a.total_assigned() == 300;
    check(
        "dirichlet partition determinism + coverage",
        ok,
        "partition differs across identical calls".to_string(),
    )
}

fn prototype_sanity() -> Result<()> {
    let task = make_prototype(5, 50)?;
    let ok = task.train.len() == 150
        && task.partition.total_assigned() == 150
        && task.test.feature_dim() == 2;
    check(
        "prototype construction",
        ok,
        "unexpected prototype shape".to_string(),
    )
}

/// Run all checks; error on the first failure.
pub fn run_selftest() -> Result<()> {
    mlp_gradient_check()?;
    generator_gradient_check()?;
    kl_gradient_check()?;
    softmax_invariants()?;
    optimizer_fixed_point()?;
    partition_determinism()?;
    prototype_sanity()?;
    println!("selftest: all checks passed");
    Ok(())
}

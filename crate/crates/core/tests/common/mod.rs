#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use weakkam_core::lagrangian::{LagrangianSpec, Potential};
use weakkam_core::torus::{GridScalarField, GridSpec, TorusPoint, Vector};

/// The four built-in families with `V(x) = cos 2 pi x`.
pub fn families() -> Vec<LagrangianSpec> {
    let v = || Potential::single_cosine(1.0);
    vec![
        LagrangianSpec::mechanical(v()),
        LagrangianSpec::kinked(0.5, v()).unwrap(),
        LagrangianSpec::anisotropic(vec![0.3], v()).unwrap(),
        LagrangianSpec::piecewise_power(v()),
    ]
}

pub fn pendulum() -> LagrangianSpec {
    LagrangianSpec::mechanical(Potential::single_cosine(1.0))
}

/// Random Lipschitz field on a 1-d grid: a few Fourier modes plus a
/// closed random walk.
pub fn random_field(rng: &mut ChaCha8Rng, n: usize) -> GridScalarField {
    let g = GridSpec::new(1, n).unwrap();
    let modes: Vec<(f64, f64)> = (1..=4)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let rough = rng.random_range(0.0..0.05);
    let mut steps: Vec<f64> = (0..n).map(|_| rng.random_range(-rough..rough)).collect();
    let mean = steps.iter().sum::<f64>() / n as f64;
    steps.iter_mut().for_each(|s| *s -= mean);
    let mut walk = Vec::with_capacity(n);
    let mut acc = 0.0;
    for s in &steps {
        walk.push(acc);
        acc += s;
    }
    let offset = rng.random_range(-2.0..2.0);
    let values = (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            let smooth: f64 = modes
                .iter()
                .enumerate()
                .map(|(m, (a, t))| a / (m + 1) as f64 * (2.0 * PI * (m + 1) as f64 * x + t).cos())
                .sum();
            offset + smooth + walk[i]
        })
        .collect();
    GridScalarField::new(g, values).unwrap()
}

pub fn point(rng: &mut ChaCha8Rng) -> TorusPoint {
    TorusPoint::wrap(&[rng.random::<f64>()]).unwrap()
}

pub fn offset(rng: &mut ChaCha8Rng, max: f64) -> Vector {
    Vector::new(&[rng.random_range(-max..=max)]).unwrap()
}

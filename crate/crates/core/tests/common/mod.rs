#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use sarme::design::{assemble_omega, MeasurementErrorSpec, ObservedDesign};
use sarme::estimator::SarParams;
use sarme::simgen::{generate_sar_outcome, stream_rng, SimRng};
use sarme::weights::{build_row_normalized, SpatialWeights};

pub struct Instance {
    pub y: DVector<f64>,
    pub weights: SpatialWeights<f64>,
    pub design: ObservedDesign<f64>,
    pub me: MeasurementErrorSpec<f64>,
    pub truth: SarParams<f64>,
}

pub fn rng(seed: u64) -> SimRng {
    stream_rng(seed, 0)
}

pub fn normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Erdős–Rényi style graph with edge probability `p`; symmetric unless
/// `directed`.
pub fn random_graph(n: usize, p: f64, directed: bool, rng: &mut SimRng) -> SpatialWeights<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j || (!directed && j < i) {
                continue;
            }
            if rng.random::<f64>() < p {
                a[(i, j)] = 1.0;
                if !directed {
                    a[(j, i)] = 1.0;
                }
            }
        }
    }
    build_row_normalized(a).unwrap()
}

/// A SAR instance with `d1` error-prone columns, heteroskedastic known
/// `Δᵢ`, and random parameters.
pub fn instance(n: usize, d1: usize, d2: usize, directed: bool, seed: u64) -> Instance {
    let mut r = rng(seed);
    let weights = random_graph(n, 0.1, directed, &mut r);
    let p = d1 + d2;
    let x = DMatrix::from_fn(n, p, |_, _| normal(&mut r));
    let mut xt = x.clone();
    let mut deltas = Vec::with_capacity(n);
    for i in 0..n {
        let scale = 0.1 + 0.2 * r.random::<f64>();
        let b = DMatrix::from_fn(d1, d1, |_, _| normal(&mut r) * 0.3);
        let delta = (&b * b.transpose() + DMatrix::identity(d1, d1)) * scale;
        if d1 > 0 {
            let f = delta.clone().cholesky().unwrap().l();
            let e = &f * DVector::from_fn(d1, |_, _| normal(&mut r));
            for c in 0..d1 {
                xt[(i, c)] += e[c];
            }
        }
        deltas.push(delta);
    }
    let delta = DVector::from_fn(p, |_, _| 0.5 + r.random::<f64>());
    let rho = -0.3 + 0.9 * r.random::<f64>();
    let sigma2 = 0.5 + r.random::<f64>();
    let truth = SarParams::new(delta, rho, sigma2);
    let y = generate_sar_outcome(&weights, &x, &truth, &mut r).unwrap();
    let me = assemble_omega(deltas, d2).unwrap();
    let design = ObservedDesign::with_default_names(xt, d1).unwrap();
    Instance {
        y,
        weights,
        design,
        me,
        truth,
    }
}

/// Largest relative discrepancy, with `floor` guarding near-zero entries.
pub fn max_rel(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

mod common;

use bcprox::accel::{accel_init, accel_step, fbe_gradient_scaled, fbe_scaled, QMetric, QuadraticProblem};
use bcprox::prox::ProxAtom;
use bcprox::smooth::QuadraticBlock;
use bcprox::structured::SeparableG;
use bcprox::{BlockStructure, BlockVector, Problem, SmoothBlock, Stepsize};
use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn quadratic_instance(
    r: &mut ChaCha8Rng,
    n: usize,
    dim: usize,
    mu: f64,
    convex_g: bool,
) -> (QuadraticProblem, Stepsize) {
    let dims = vec![dim; n];
    let blocks: Vec<QuadraticBlock> = (0..n).map(|_| random_quadratic(r, dim, mu)).collect();
    let gammas: Vec<f64> = blocks
        .iter()
        .map(|b| r.random_range(0.1..0.95) * n as f64 / b.lipschitz())
        .collect();
    let step = Stepsize::new(gammas).unwrap();
    let g = random_g(r, &dims, convex_g, &step);
    (Problem::new(blocks, g).unwrap(), step)
}

/// Independent dense implementation for separable `lambda ||.||_1`.
struct Dense {
    h: Vec<DMatrix<f64>>,
    q: Vec<DVector<f64>>,
    gammas: Vec<f64>,
    lambda: f64,
    half: Vec<DMatrix<f64>>,
    inv_half: Vec<DMatrix<f64>>,
}

impl Dense {
    fn new(h: Vec<DMatrix<f64>>, q: Vec<DVector<f64>>, gammas: Vec<f64>, lambda: f64) -> Self {
        let n = h.len() as f64;
        let (mut half, mut inv_half) = (Vec::new(), Vec::new());
        for (hi, g) in h.iter().zip(&gammas) {
            let d = hi.nrows();
            let qi = DMatrix::identity(d, d) / *g - hi / n;
            let e = SymmetricEigen::new(qi);
            let s = e.eigenvalues.map(f64::sqrt);
            half.push(&e.eigenvectors * DMatrix::from_diagonal(&s) * e.eigenvectors.transpose());
            inv_half.push(&e.eigenvectors * DMatrix::from_diagonal(&s.map(|v| 1.0 / v)) * e.eigenvectors.transpose());
        }
        Self {
            h,
            q,
            gammas,
            lambda,
            half,
            inv_half,
        }
    }

    fn t(&self, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let n = self.h.len() as f64;
        x.iter()
            .enumerate()
            .map(|(i, xi)| {
                let u = xi - (&self.h[i] * xi + &self.q[i]) * (self.gammas[i] / n);
                let t = self.gammas[i] * self.lambda;
                u.map(|v| v.signum() * (v.abs() - t).max(0.0))
            })
            .collect()
    }

    fn unscale(&self, xt: &[DVector<f64>]) -> Vec<DVector<f64>> {
        xt.iter().enumerate().map(|(i, v)| &self.inv_half[i] * v).collect()
    }

    fn scale(&self, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
        x.iter().enumerate().map(|(i, v)| &self.half[i] * v).collect()
    }
}

fn flat(v: &[DVector<f64>]) -> Vec<f64> {
    v.iter().flat_map(|b| b.iter().copied()).collect()
}

#[test]
fn matches_scaled_transcription() {
    for case in 0..10u64 {
        let mut r = rng(600 + case);
        let n = r.random_range(1..=4);
        let dim = r.random_range(1..=3);
        let mu = if case % 2 == 0 { 0.0 } else { 0.3 };
        let blocks: Vec<QuadraticBlock> = (0..n).map(|_| random_quadratic(&mut r, dim, mu)).collect();
        let gammas: Vec<f64> = blocks
            .iter()
            .map(|b| r.random_range(0.2..0.95) * n as f64 / b.lipschitz())
            .collect();
        let lambda = 0.3;
        let dense = Dense::new(
            blocks.iter().map(|b| b.hessian().clone()).collect(),
            blocks.iter().map(|b| b.linear().clone()).collect(),
            gammas.clone(),
            lambda,
        );
        let p = Problem::new(blocks, Box::new(SeparableG::new(ProxAtom::L1 { lambda }).unwrap())).unwrap();
        let step = Stepsize::new(gammas.clone()).unwrap();
        let structure = BlockStructure::uniform(n, dim).unwrap();
        let x0 = random_point(&mut r, &structure, 2.0);
        let mut st = accel_init(&p, x0.clone(), &step).unwrap();

        let nf = n as f64;
        let sigma = (0..n)
            .map(|i| gammas[i] * SymmetricEigen::new(dense.h[i].clone()).eigenvalues.min())
            .fold(f64::INFINITY, f64::min)
            / nf;
        let sigma = sigma.max(0.0);
        assert!(
            (sigma - st.sigma).abs() <= 1e-10,
            "case {case}: sigma {sigma} vs {}",
            st.sigma
        );
        // Exact zero decides the schedule; near-zero eigenvalues must agree with the library.
        let sigma = if st.sigma == 0.0 { 0.0 } else { st.sigma };
        let (mut tau, mut eta) = if sigma == 0.0 {
            (f64::NAN, 1.0 / (nf * nf))
        } else {
            let tau = 2.0 / (1.0 + (1.0 + 4.0 * nf * nf / sigma).sqrt());
            (tau, 1.0 / (tau * nf * nf))
        };
        let blocks0: Vec<DVector<f64>> = x0.blocks().map(DVector::from_column_slice).collect();
        let mut xt = dense.scale(&blocks0);
        let mut wt = xt.clone();

        let mut sampler = rng(700 + case);
        for k in 0..200 {
            let i = sampler.random_range(0..n);
            let x = dense.unscale(&xt);
            let z = dense.t(&x);
            let gi = &dense.half[i] * (&x[i] - &z[i]);
            let mut yt = xt.clone();
            yt[i] -= &gi;
            let es = eta * sigma;
            for j in 0..n {
                let kick = if j == i {
                    gi.clone() * (nf * eta)
                } else {
                    DVector::zeros(dim)
                };
                wt[j] = (&wt[j] + &xt[j] * es - kick) / (1.0 + es);
            }
            if sigma == 0.0 {
                eta = (k as f64 + 3.0) / (2.0 * nf * nf);
                tau = 2.0 / (k as f64 + 3.0);
            }
            for j in 0..n {
                xt[j] = &wt[j] * tau + &yt[j] * (1.0 - tau);
            }
            accel_step(&p, &mut st, i).unwrap();

            let tol = 1e-9 * (1.0 + st.x.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())));
            for (a, b) in flat(&dense.unscale(&xt)).iter().zip(st.x.as_slice()) {
                assert!((a - b).abs() <= tol, "case {case} k {k}: x {a} vs {b}");
            }
            for (a, b) in flat(&dense.unscale(&yt)).iter().zip(st.y.as_slice()) {
                assert!((a - b).abs() <= tol, "case {case} k {k}: y {a} vs {b}");
            }
            for (a, b) in flat(&dense.unscale(&wt)).iter().zip(st.w.as_slice()) {
                assert!((a - b).abs() <= tol, "case {case} k {k}: w {a} vs {b}");
            }
        }
    }
}

#[test]
fn first_step_by_hand() {
    // N = 2, n_i = 1, H = (1, 1), q = 0, gamma = (1, 1), g = 0.5 |.|, x0 = (2, -1), i = 0
    let blocks = vec![QuadraticBlock::isotropic(1.0, vec![0.0]).unwrap(); 2];
    let p = Problem::new(blocks, Box::new(SeparableG::new(ProxAtom::L1 { lambda: 0.5 }).unwrap())).unwrap();
    let step = Stepsize::uniform(2, 1.0).unwrap();
    let mut st = accel_init(&p, BlockVector::from_blocks(&[[2.0], [-1.0]]).unwrap(), &step).unwrap();

    let sigma = 0.5;
    let tau = 2.0 / (1.0 + 33.0f64.sqrt());
    let eta = 1.0 / (tau * 4.0);
    let (x0, r0) = ([2.0, -1.0], [1.0, -0.5]);
    let soft = |u: f64| u.signum() * (u.abs() - 0.5).max(0.0);
    let z0 = [soft(x0[0] - r0[0]), soft(x0[1] - r0[1])];
    assert_eq!(z0, [0.5, 0.0]);
    assert_eq!(st.z.as_slice(), &z0);

    let y1 = [z0[0], x0[1]];
    let d = 0.5 * z0[0] - r0[0];
    let es = eta * sigma;
    let v1 = [
        (r0[0] + es * r0[0] + 2.0 * eta * d) / (1.0 + es),
        (r0[1] + es * r0[1]) / (1.0 + es),
    ];
    let w1 = [
        (x0[0] + es * x0[0] + 2.0 * eta * (z0[0] - x0[0])) / (1.0 + es),
        (x0[1] + es * x0[1]) / (1.0 + es),
    ];
    let x1 = [tau * w1[0] + (1.0 - tau) * y1[0], tau * w1[1] + (1.0 - tau) * y1[1]];
    let r1 = [
        tau * v1[0] + (1.0 - tau) * (r0[0] + d),
        tau * v1[1] + (1.0 - tau) * r0[1],
    ];
    let z1 = [soft(x1[0] - r1[0]), soft(x1[1] - r1[1])];

    accel_step(&p, &mut st, 0).unwrap();
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-14);
    assert!(close(st.y.as_slice(), &y1));
    assert!(close(st.v.as_slice(), &v1));
    assert!(close(st.w.as_slice(), &w1));
    assert!(close(st.x.as_slice(), &x1));
    assert!(close(st.r.as_slice(), &r1));
    assert!(close(st.z.as_slice(), &z1));
}

#[test]
fn scalar_gradient_case_converges() {
    let p = Problem::new(
        vec![QuadraticBlock::isotropic(1.0, vec![0.0]).unwrap()],
        Box::new(SeparableG::zero()),
    )
    .unwrap();
    let step = Stepsize::uniform(1, 0.5).unwrap();
    let mut st = accel_init(&p, BlockVector::from_blocks(&[[1.0]]).unwrap(), &step).unwrap();
    let mut values = vec![0.5];
    for _ in 0..300 {
        accel_step(&p, &mut st, 0).unwrap();
        values.push(0.5 * st.y.as_slice()[0].powi(2));
    }
    assert!(values[300] < 1e-20);
    for w in values.chunks(50).collect::<Vec<_>>().windows(2) {
        let mean = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
        assert!(mean(w[1]) <= mean(w[0]));
    }
}

#[test]
fn scaled_gradient_matches_finite_differences() {
    let mut r = rng(800);
    for case in 0..100 {
        let n = r.random_range(1..=4);
        let dim = r.random_range(1..=3);
        let (p, step) = quadratic_instance(&mut r, n, dim, 0.0, true);
        let q = QMetric::new(&p, &step).unwrap();
        let xt = random_point(&mut r, &p.structure, 2.0);
        let g = fbe_gradient_scaled(&p, &xt, &step, &q).unwrap();
        let h = 1e-6;
        for j in 0..xt.len() {
            let mut a = xt.clone();
            let mut b = xt.clone();
            a.as_mut_slice()[j] += h;
            b.as_mut_slice()[j] -= h;
            let fd = (fbe_scaled(&p, &a, &step, &q).unwrap() - fbe_scaled(&p, &b, &step, &q).unwrap()) / (2.0 * h);
            let gj = g.as_slice()[j];
            assert!((fd - gj).abs() <= 1e-5 * (1.0 + gj.abs()), "case {case}: {fd} vs {gj}");
        }
    }
}

#[test]
fn scaled_envelope_is_convex_and_one_smooth() {
    let mut r = rng(801);
    for case in 0..1000 {
        let n = r.random_range(1..=4);
        let dim = r.random_range(1..=3);
        let strongly = case % 2 == 1;
        let (p, step) = quadratic_instance(&mut r, n, dim, if strongly { 0.2 } else { 0.0 }, true);
        let q = QMetric::new(&p, &step).unwrap();
        let a = random_point(&mut r, &p.structure, 3.0);
        let b = random_point(&mut r, &p.structure, 3.0);
        let ga = fbe_gradient_scaled(&p, &a, &step, &q).unwrap();
        let gb = fbe_gradient_scaled(&p, &b, &step, &q).unwrap();
        let d = a.sub(&b);
        let inner = ga.sub(&gb).dot(&d);
        let dd = d.dot(&d);
        let tol = 1e-9 * (1.0 + dd);
        assert!(inner >= -tol, "case {case}: {inner}");
        assert!(inner <= dd + tol, "case {case}: {inner} > {dd}");
        if strongly {
            let sigma = bcprox::accel::accel_sigma(&p, &step);
            assert!(sigma > 0.0);
            assert!(inner >= sigma * dd - tol, "case {case}: {inner} < {sigma} {dd}");
        }
    }
}

#[test]
fn gradient_vanishes_at_the_minimizer() {
    let blocks = vec![
        QuadraticBlock::isotropic(1.0, vec![0.0]).unwrap(),
        QuadraticBlock::isotropic(2.0, vec![0.0]).unwrap(),
    ];
    let p = Problem::new(blocks, Box::new(SeparableG::new(ProxAtom::L1 { lambda: 1.0 }).unwrap())).unwrap();
    let step = Stepsize::default_for(&p).unwrap();
    let q = QMetric::new(&p, &step).unwrap();
    let zero = BlockVector::from_blocks(&[[0.0], [0.0]]).unwrap();
    assert_eq!(fbe_gradient_scaled(&p, &zero, &step, &q).unwrap(), zero);
}

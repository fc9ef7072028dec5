use bcprox::bc::{solve_bc, BcSolverConfig};
use bcprox::prox::ProxAtom;
use bcprox::sampling::SamplerSpec;
use bcprox::smooth::QuadraticBlock;
use bcprox::structured::SeparableG;
use bcprox::{BlockVector, Problem, Stepsize};

fn main() {
    let blocks = vec![
        QuadraticBlock::isotropic(1.0, vec![1.0]).unwrap(),
        QuadraticBlock::isotropic(3.0, vec![-2.0]).unwrap(),
    ];
    let g = SeparableG::new(ProxAtom::L1 { lambda: 0.1 }).unwrap();
    let p = Problem::new(blocks, Box::new(g)).unwrap();
    let step = Stepsize::default_for(&p).unwrap(); // 0.95 N / L_i
    let x0 = BlockVector::from_blocks(&[[0.0], [0.0]]).unwrap();
    let cfg = BcSolverConfig::new(step, SamplerSpec::uniform(2, 42), 500);
    let out = solve_bc(&p, x0, &cfg).unwrap();
    println!("phi = {}, residual = {}", out.report.fbe, out.report.residual);
}

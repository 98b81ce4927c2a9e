//! Fixtures shared by the benchmarks.

use gas_core::network::{init_mlp_seeded, layer_sizes};
use gas_core::rng::stage_rng;
use gas_core::{BoxDomain, MlpParams, PdeProblem, PointSet};

pub struct Fixture {
    pub params: MlpParams,
    pub problem: PdeProblem,
    pub interior: PointSet,
    pub boundary: PointSet,
}

/// Six hidden layers of `width`, with uniform interior and boundary batches.
pub fn fixture(problem: PdeProblem, width: usize, n_interior: usize, n_boundary: usize) -> Fixture {
    let dim = problem.dim;
    let params = init_mlp_seeded(&layer_sizes(dim, width, 6), 1).unwrap();
    let mut rng = stage_rng(2, "bench");
    let dom = BoxDomain::new(dim);
    Fixture {
        interior: dom.sample_interior(n_interior, &mut rng),
        boundary: dom.sample_boundary(n_boundary, &mut rng),
        params,
        problem,
    }
}

//! Helpers shared by the integration suites.

use proxrestart::data_io::synth_lasso;
use proxrestart::problems::{elastic_lasso_problem, CompositeProblem};
use proxrestart::solvers::{compute_reference, TraceRecord};

/// Strongly convex synthetic instance with a high-accuracy reference
/// attached.
pub fn elastic_instance(seed: u64, n: usize, m: usize, l1: f64, l2: f64) -> CompositeProblem {
    let (design, _) = synth_lasso(n, m, 0.7, 3.0, seed).expect("valid synth parameters");
    let mut problem = elastic_lasso_problem(design, l1, l2).expect("valid instance");
    let reference = compute_reference(&problem, 400_000, 1e-13).expect("reference converges");
    problem.set_reference(reference).expect("matching dimension");
    problem
}

/// The restart Lyapunov measure read off a trace row:
/// `Δ = ((1−θ0)/θ0²)·gap + dist²/(2θ0²)`.
pub fn delta_from_record(record: &TraceRecord, theta0: f64) -> f64 {
    let gap = record.gap.expect("trace rows carry a gap when a reference is set");
    let dist = record
        .dist_v
        .expect("trace rows carry a distance when a reference is set");
    let t2 = theta0 * theta0;
    (1.0 - theta0) / t2 * gap + dist * dist / (2.0 * t2)
}

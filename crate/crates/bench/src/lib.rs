//! Fixtures shared by the benchmarks.

use sgfv_core::scenario::{load_scenario_str, Problem};

/// PN-junction problem on an `n x n` unit-square mesh, starting from flat densities.
pub fn pn_problem(n: usize) -> Problem {
    let g = 1.618_033_988_749_895_f64;
    let text = format!(
        r#"
[mesh]
nx = {n}
ny = {n}

[physics]
lambda = 1.0
doping = "pn(0.5, 1, -1)"
recombination = "srh(1, 1)"
m_cap = {g:?}

[boundary.left]
faces = ["x0"]
kind = "dirichlet"
n = {g:?}

[boundary.right]
faces = ["x1"]
kind = "dirichlet"
n = {inv:?}

[boundary.insulated]
faces = ["y0", "y1"]
kind = "neumann"

[initial]
n0 = "constant(1)"
p0 = "constant(1)"

[time]
dt = 0.1
n_steps = 1
"#,
        inv = 1.0 / g
    );
    load_scenario_str(&text)
        .and_then(|s| s.prepare())
        .expect("benchmark scenario is valid")
}

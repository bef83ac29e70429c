//! Named workloads shared by the benchmarks.

use edicr_core::{fixtures, generate_rovers, Instance, RoverParams};

/// Fixtures plus rover instances of increasing size, smallest first.
pub fn workloads() -> Vec<(&'static str, Instance)> {
    let rover = |n_agents, sites, horizon, n_rho, n_tau| {
        generate_rovers(&RoverParams {
            n_agents,
            sites,
            horizon,
            n_rho,
            n_tau,
            seed: 1,
            ..RoverParams::default()
        })
        .expect("bench parameters are valid")
    };
    vec![
        ("tiny2", fixtures::tiny2()),
        ("tiny3x3", fixtures::tiny3x3()),
        ("rovers2_s3_t3", rover(2, 3, 3, 2, 2)),
        ("rovers2_s4_t3", rover(2, 4, 3, 2, 2)),
        ("rovers2_s3_t4", rover(2, 3, 4, 3, 3)),
        ("rovers3_s3_t3", rover(3, 3, 3, 2, 2)),
    ]
}

/// Two-agent workloads only.
pub fn two_agent() -> Vec<(&'static str, Instance)> {
    workloads().into_iter().filter(|(_, i)| i.num_agents() == 2).collect()
}

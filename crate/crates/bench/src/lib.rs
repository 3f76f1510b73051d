//! Fixtures shared by the benchmarks: a generated workload laid out on a
//! cluster, ready to execute.

use bgp_core::workload::{generate, SelectivityProfile, ShapeRequest, WorkloadSpec};
use bgp_core::{BaseKey, Cluster, Dataset, Query, Result};

pub struct Fixture {
    pub name: String,
    pub cluster: Cluster,
    pub dataset: Dataset,
    pub query: Query,
}

impl Fixture {
    pub fn new(spec: &WorkloadSpec, m: usize) -> Result<Self> {
        let w = generate(spec)?;
        let cluster = Cluster::new(m)?;
        let dataset = cluster.load_partitioned(w.triples, BaseKey::Subject);
        Ok(Fixture { name: w.name, cluster, dataset, query: w.query })
    }

    pub fn triples(&self) -> u64 {
        self.dataset.len()
    }
}

/// Star, chain and snowflake workloads of a few thousand triples each.
pub fn standard_fixtures(m: usize) -> Result<Vec<Fixture>> {
    let specs = [
        WorkloadSpec::new(ShapeRequest::Star, 10, 500),
        WorkloadSpec::new(ShapeRequest::Chain, 6, 40).with_profile(SelectivityProfile::AlternatingFrequentRare),
        WorkloadSpec::new(ShapeRequest::Chain, 8, 200).with_profile(SelectivityProfile::FrontLoadedLarge),
        WorkloadSpec::new(ShapeRequest::Snowflake, 5, 300),
    ];
    specs.iter().map(|s| Fixture::new(s, m)).collect()
}

pub mod collect;
pub mod eval;
pub mod gen;
pub mod report;
pub mod train;

use anyhow::{bail, Context, Result};
use std::path::Path;

use drivelab::bench::{Suite, SUITE_SCHEMA_VERSION};
use drivelab::sim::generate_town;
use drivelab::world::MapSpec;

/// Loads a suite file and rebuilds its town from the recorded seed.
pub fn load_suite(path: &Path) -> Result<(Suite, MapSpec)> {
    let suite: Suite = drivelab::io::read_json(path)
        .with_context(|| format!("reading suite {}", path.display()))?;
    if suite.schema_version != SUITE_SCHEMA_VERSION {
        bail!(
            "suite {} has schema version {}, expected {SUITE_SCHEMA_VERSION}",
            path.display(),
            suite.schema_version
        );
    }
    let town = generate_town(suite.town_seed, suite.town_size);
    Ok((suite, town))
}

/// Parses a comma-separated seed list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .with_context(|| format!("bad seed `{s}`"))
        })
        .collect()
}

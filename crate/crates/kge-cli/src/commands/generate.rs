//! `kge generate`: synthetic graph -> edges.tsv + schema.txt + communities.tsv.

use kge_core::synth::{generate_synthetic, SyntheticConfig, SyntheticEdgeSpec, TailPattern};
use kge_core::{Error, Result};

use crate::args::{log_info, CliArgs};
use crate::config::ConfigFile;
use crate::manifest::RunManifest;

pub fn parse_synthetic_config(cfg: &mut ConfigFile, seed_override: Option<u64>) -> Result<(SyntheticConfig, u64)> {
    let mut entities = Vec::new();
    for line in cfg.get_all("entity") {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Config(format!(
                "key `entity` expects `<name> <count>`, got `{line}`"
            )));
        }
        let count: usize = fields[1]
            .parse()
            .map_err(|_| Error::Config(format!("bad entity count in `{line}`")))?;
        entities.push((fields[0].to_string(), count));
    }
    let mut edges = Vec::new();
    for line in cfg.get_all("edge") {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 && fields.len() != 5 {
            return Err(Error::Config(format!(
                "key `edge` expects `<head> <activity> <tail> <count> [community|head-groups]`, got `{line}`"
            )));
        }
        let count: usize = fields[3]
            .parse()
            .map_err(|_| Error::Config(format!("bad edge count in `{line}`")))?;
        let pattern = match fields.get(4) {
            None => TailPattern::Community,
            Some(p) => TailPattern::parse(p)
                .ok_or_else(|| Error::Config(format!("bad edge pattern `{p}` in `{line}`")))?,
        };
        edges.push(SyntheticEdgeSpec {
            head: fields[0].to_string(),
            activity: fields[1].to_string(),
            tail: fields[2].to_string(),
            count,
            pattern,
        });
    }
    let config = SyntheticConfig {
        entities,
        communities: cfg.parse_or("communities", 10)?,
        subcommunities: cfg.parse_or("subcommunities", 1)?,
        p_in: cfg.parse_or("p_in", 0.95)?,
        p_out: cfg.parse_or("p_out", 0.05)?,
        p_sub: cfg.parse_or("p_sub", 0.0)?,
        head_group_size: cfg.parse_or("head_group_size", 10)?,
        edges,
    };
    let seed = match seed_override {
        Some(s) => {
            cfg.get("seed");
            s
        }
        None => cfg.parse_or("seed", 0)?,
    };
    Ok((config, seed))
}

pub fn run(args: &CliArgs) -> Result<()> {
    let config_path = args.require_config()?;
    let out = args.require_out()?;
    let mut cfg = ConfigFile::load(config_path)?;
    let (synth_cfg, seed) = parse_synthetic_config(&mut cfg, args.seed)?;
    cfg.finish()?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display(), e))?;
    let graph = generate_synthetic(&synth_cfg, seed)?;
    let edges_path = out.join("edges.tsv");
    let schema_path = out.join("schema.txt");
    let communities_path = out.join("communities.tsv");
    graph.store.save_edges(&edges_path)?;
    graph.store.schema().save(&schema_path)?;
    graph.communities.save(&communities_path, &graph.store)?;

    // Self-check: the written edge file holds exactly the configured volume.
    let expected: usize = synth_cfg.edges.iter().map(|e| e.count).sum();
    let written = std::fs::read_to_string(&edges_path)
        .map_err(|e| Error::io(edges_path.display(), e))?
        .lines()
        .count();
    if written != expected {
        return Err(Error::Config(format!(
            "self-check failed: wrote {written} edges, config asked for {expected}"
        )));
    }

    let mut manifest = RunManifest::new("generate", args.deterministic);
    manifest.config_file(config_path)?;
    manifest.field("seed", seed);
    manifest.field("output.edges", edges_path.display());
    manifest.field("output.schema", schema_path.display());
    manifest.field("output.communities", communities_path.display());
    manifest.field("edges_written", written);
    manifest.write(out)?;
    log_info(&format!(
        "generated {written} edges over {} entity types into {}",
        synth_cfg.entities.len(),
        out.display()
    ));
    Ok(())
}

//! Flag parsing shared by all subcommands.

use kge_core::{Error, Result};
use std::path::PathBuf;

#[derive(Debug, Default)]
pub struct CliArgs {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub seed: Option<u64>,
    pub deterministic: bool,
    pub checkpoints: Vec<PathBuf>,
    pub eval_edges: Option<PathBuf>,
    pub mode: Option<String>,
    pub anchor_space: bool,
    pub compare: bool,
}

impl CliArgs {
    pub fn parse(args: &[String]) -> Result<CliArgs> {
        let mut out = CliArgs::default();
        let mut it = args.iter();
        let value = |flag: &str, it: &mut std::slice::Iter<String>| -> Result<String> {
            it.next()
                .cloned()
                .ok_or_else(|| Error::Config(format!("flag {flag} needs a value")))
        };
        while let Some(arg) = it.next() {
            match arg.as_str() {
                "--config" => out.config = Some(value(arg, &mut it)?.into()),
                "--out" => out.out = Some(value(arg, &mut it)?.into()),
                "--graph" => out.graph = Some(value(arg, &mut it)?.into()),
                "--seed" => {
                    let v = value(arg, &mut it)?;
                    out.seed = Some(v.parse().map_err(|_| {
                        Error::Config(format!("--seed expects an integer, got `{v}`"))
                    })?);
                }
                "--deterministic" => out.deterministic = true,
                "--checkpoint" => out.checkpoints.push(value(arg, &mut it)?.into()),
                "--eval-edges" => out.eval_edges = Some(value(arg, &mut it)?.into()),
                "--mode" => out.mode = Some(value(arg, &mut it)?),
                "--anchor-space" => out.anchor_space = true,
                "--compare" => out.compare = true,
                other => {
                    return Err(Error::Config(format!("unknown flag `{other}`")));
                }
            }
        }
        Ok(out)
    }

    pub fn require_config(&self) -> Result<&PathBuf> {
        self.config
            .as_ref()
            .ok_or_else(|| Error::Config("missing --config".into()))
    }

    pub fn require_out(&self) -> Result<&PathBuf> {
        self.out
            .as_ref()
            .ok_or_else(|| Error::Config("missing --out".into()))
    }

    pub fn require_graph(&self) -> Result<&PathBuf> {
        self.graph
            .as_ref()
            .ok_or_else(|| Error::Config("missing --graph".into()))
    }

    pub fn require_checkpoint(&self) -> Result<&PathBuf> {
        self.checkpoints
            .first()
            .ok_or_else(|| Error::Config("missing --checkpoint".into()))
    }
}

/// Log-verbosity from the environment; the only env var the tool reads.
pub fn verbosity() -> u8 {
    match std::env::var("KGE_LOG").as_deref() {
        Ok("quiet") => 0,
        Ok("debug") => 2,
        _ => 1,
    }
}

pub fn log_info(msg: &str) {
    if verbosity() >= 1 {
        eprintln!("[kge] {msg}");
    }
}

pub fn log_debug(msg: &str) {
    if verbosity() >= 2 {
        eprintln!("[kge:debug] {msg}");
    }
}

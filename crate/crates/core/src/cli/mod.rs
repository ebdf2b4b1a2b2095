//! Command-line interface. `main_entry` parses arguments, runs one
//! subcommand and maps failures to exit codes with a single
//! `error code=<code>: <message>` line on stderr.

pub mod config;
pub mod pipeline;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::{NetConfig, PerNode, RunConfig};
use pipeline::{
    evaluate_tree, generate_samples, generic_base, prepare, read_image, report_table, train_hierarchy, transfer,
    write_hierarchy, write_outcome, Prepared,
};

use crate::datapipe::store::write_dataset;
use crate::error::{exit, Error, Result};
use crate::hierarchy::{NodeId, TreeManifest, VersionEntry};
use crate::io::{write_atomic, write_json};
use crate::nnet::Network;
use crate::train::{head_lr_find, train_node};

#[derive(Debug, Parser)]
#[command(name = "hierlearn", version, about = "Hierarchical binary-tree classifier training engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn parse_node(s: &str) -> std::result::Result<NodeId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset and write it to disk.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the LR range test for one node and write the loss curve.
    LrFind {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_node)]
        node: NodeId,
    },
    /// Staged training of a single node.
    TrainNode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_node)]
        node: NodeId,
        /// Network file whose base is transferred instead of the generic one.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Train all three nodes and write a tree manifest.
    TrainHierarchy {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a tree on the validation split of a dataset.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory; defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add a network version to one node of a manifest.
    Ensemble {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        add: PathBuf,
        #[arg(long, value_parser = parse_node)]
        node: NodeId,
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
    },
    /// Classify one image file.
    Predict {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Print the four leaf probabilities instead of the label.
        #[arg(long)]
        soft: bool,
    },
}

/// Parses `args` (program name first) and runs the subcommand, writing
/// human output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string().trim().to_string()))?;
    execute(cli.command, out)
}

/// Process entry point: returns the exit status.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return exit::OK;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error code=usage: {first}");
            return exit::CONFIG;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli.command, &mut lock) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            e.exit_code()
        }
    }
}

pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("error code={}: {msg}", e.code())
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| Error::io("<stdout>", e))
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::GenData { config, out: dir } => gen_data(&RunConfig::load(&config)?, &dir, out),
        Command::LrFind { config, node } => lr_find(&RunConfig::load(&config)?, node, out),
        Command::TrainNode { config, node, from } => train_one(&RunConfig::load(&config)?, node, from.as_deref(), out),
        Command::TrainHierarchy { config } => {
            let cfg = RunConfig::load(&config)?;
            let data = prepare(&cfg)?;
            let run = train_hierarchy(&cfg, &data)?;
            let manifest = write_hierarchy(&cfg, &run)?;
            for (id, acc, tag) in [
                (NodeId::Carci, run.carci.report.best_accuracy(), pipeline::GENERIC_TAG),
                (NodeId::NorBe, run.norbe.chosen().report.best_accuracy(), run.norbe.tag.as_str()),
                (NodeId::InvIs, run.invis.chosen().report.best_accuracy(), run.invis.tag.as_str()),
            ] {
                say(out, format!("{id}\tsource={tag}\tbest_val_acc={}", acc.map_or("-".into(), |a| format!("{a:.6}"))))?;
            }
            say(out, format!("manifest\t{}", manifest.display()))
        }
        Command::Eval { manifest, data, out: dir } => eval(&manifest, &data, dir.as_deref(), out),
        Command::Ensemble { manifest, add, node, weight } => ensemble(&manifest, &add, node, weight, out),
        Command::Predict { manifest, input, soft } => predict(&manifest, &input, soft, out),
    }
}

fn gen_data(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let samples = generate_samples(cfg)?;
    let manifest = write_dataset(dir, &cfg.dataset, cfg.auxiliary.as_ref(), &samples)?;
    for (class, n) in &manifest.counts {
        say(out, format!("{class}\t{n}"))?;
    }
    Ok(())
}

fn lr_find(cfg: &RunConfig, node: NodeId, out: &mut dyn Write) -> Result<()> {
    let data = prepare(cfg)?;
    let (train, _) = data.node_sets(node);
    let net = transfer(cfg, &generic_base(cfg)?, &format!("{node}/{}", pipeline::GENERIC_TAG))?;
    let (_, res) = head_lr_find(&net, &train, cfg.train.get(node))?;
    let path = cfg.output_dir.join(format!("lr_find_{node}.csv"));
    write_atomic(&path, res.to_csv().as_bytes())?;
    say(out, format!("eta_max\t{:e}", res.eta_max))?;
    say(out, format!("eta\t{:e}", res.eta))?;
    say(out, format!("curve\t{}", path.display()))
}

fn train_one(cfg: &RunConfig, node: NodeId, from: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let data = prepare(cfg)?;
    let (train, val) = data.node_sets(node);
    let (source, tag) = match from {
        Some(p) => (Network::load(p)?, "from"),
        None => (generic_base(cfg)?, pipeline::GENERIC_TAG),
    };
    let net = transfer(cfg, &source, &format!("{node}/{tag}"))?;
    let outcome = train_node(&net, &train, &val, cfg.train.get(node), tag)?;
    let dir = cfg.output_dir.join(node.name());
    write_outcome(&dir, &outcome)?;
    let r = &outcome.report;
    say(out, format!("eta\t{:e}", r.eta))?;
    say(out, format!("epochs\t{}", r.epochs.len()))?;
    if let Some(b) = &r.best {
        say(out, format!("best_val_acc\t{:.6}\tepoch\t{}", b.val_accuracy, b.epoch))?;
    }
    say(out, format!("output\t{}", dir.display()))
}

fn manifest_dir(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn eval(manifest_path: &Path, data_dir: &Path, out_dir: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let manifest = TreeManifest::load(manifest_path)?;
    let base = manifest_dir(manifest_path);
    let tree = manifest.build_tree(base)?;
    let (_, samples) = crate::datapipe::store::read_dataset(data_dir)?;
    let data = Prepared::new(samples, &manifest.preprocess, &manifest.split)?;
    let report = evaluate_tree(&tree, &data)?;
    let table = report_table(&report)?;
    let dir = out_dir.unwrap_or(base);
    write_atomic(&dir.join("confusion.csv"), report.confusion.to_csv().as_bytes())?;
    write_atomic(&dir.join("table.csv"), table.to_csv().as_bytes())?;
    write_json(&dir.join("eval.json"), &report)?;
    write!(out, "{}", table.render()).map_err(|e| Error::io("<stdout>", e))?;
    say(out, format!("accuracy\t{:.6}", report.accuracy))?;
    say(out, format!("soft_accuracy\t{:.6}", report.soft_accuracy))?;
    say(out, format!("samples\t{}", report.samples))
}

fn ensemble(manifest_path: &Path, add: &Path, node: NodeId, weight: f64, out: &mut dyn Write) -> Result<()> {
    let mut manifest = TreeManifest::load(manifest_path)?;
    let base = manifest_dir(manifest_path);
    let tree = manifest.build_tree(base)?;
    let net = Network::load(add)?;
    let mut ens = tree.node(node).clone();
    ens.push(crate::hierarchy::Version { net, weight })?;
    let rel = add
        .canonicalize()
        .ok()
        .zip(base.canonicalize().ok())
        .and_then(|(a, b)| a.strip_prefix(&b).ok().map(Path::to_path_buf))
        .unwrap_or_else(|| add.to_path_buf());
    manifest.node_mut(node).versions.push(VersionEntry { path: rel, weight });
    manifest.save(manifest_path)?;
    say(out, format!("{node}\tversions\t{}", manifest.node(node).versions.len()))
}

fn predict(manifest_path: &Path, input: &Path, soft: bool, out: &mut dyn Write) -> Result<()> {
    let manifest = TreeManifest::load(manifest_path)?;
    let tree = manifest.build_tree(manifest_dir(manifest_path))?;
    let img = manifest.preprocess.network_input(&read_image(input)?)?;
    if img.len() != tree.carci.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} values after preprocessing, the tree expects {}",
            img.len(),
            tree.carci.input_dim()
        )));
    }
    if soft {
        let dist = tree.predict_soft(img.data())?;
        for leaf in crate::hierarchy::LeafLabel::ALL {
            say(out, format!("{}\t{:.6}", leaf.name(), dist.get(leaf)))?;
        }
        Ok(())
    } else {
        say(out, tree.predict_hard(img.data())?.name())
    }
}

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relcoh::hierarchy::{labels_from_text, HierarchyTree};
use relcoh::pipeline::{
    read_partition, run_pipeline, run_staged, RunConfig, Stage, CONFIG_FILE, DOMAIN_MESH_FILE, IMAGE_MESH_FILE,
    LABELS_X_FILE, LABELS_Y_FILE, SUMMARY_FILE, TREE_FILE,
};
use relcoh::render::{render, Format, RenderSpec};
use relcoh::sampling::{advise, estimate_lipschitz};
use relcoh::verify::verify_bundle;
use relcoh::{Error, Result};

/// Hierarchical relatively coherent set pairs from trajectory data.
#[derive(Parser)]
#[command(name = "relcoh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write a complete bundle.
    Run(Common),
    /// Seed and advect points; writes the ensemble.
    Advect(Common),
    /// Build partitions and the transition matrix, reusing the ensemble.
    Matrix(Common),
    /// Grow the hierarchy, reusing the ensemble and matrix.
    Tree(Common),
    /// Draw the leaf labels of a bundle.
    Render(RenderArgs),
    /// Print sample-density advice for the configured flow and mesh.
    Advise(Common),
    /// Check the invariants of a written bundle.
    Verify(VerifyArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum tree depth (for `render`: the colouring depth).
    #[arg(long)]
    depth: Option<usize>,
    /// Coherence threshold.
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bundle directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0: all cores). Output does not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    common: Common,
    /// Bundle to draw; defaults to the configured output directory.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Draw the image-side labels instead of the domain-side ones.
    #[arg(long)]
    image_side: bool,
    #[arg(long, default_value = "svg")]
    format: String,
    /// Pixels along the longer side.
    #[arg(long, default_value_t = 800)]
    side: usize,
    /// Hue offset for the palette; defaults to the configured value.
    #[arg(long)]
    palette_seed: Option<u64>,
    /// Output file; defaults to `labels_d<depth>.<format>` in the bundle.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Bundle to check; defaults to the configured output directory.
    #[arg(long)]
    bundle: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let path = self.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()).at("config"))?;
        let mut cfg = RunConfig::load(path).map_err(|e| e.at("config"))?;
        if let Some(d) = self.depth {
            cfg.run.max_depth = d;
        }
        if let Some(r) = self.rho0 {
            cfg.run.rho0 = r;
        }
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.run.out = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.run.workers = w;
        }
        cfg.validate().map_err(|e| e.at("config"))?;
        Ok(cfg)
    }

    /// Bundle directory from `--bundle`, `--out` or the configuration.
    fn bundle(&self, explicit: &Option<PathBuf>) -> Result<PathBuf> {
        if let Some(b) = explicit.as_ref().or(self.out.as_ref()) {
            return Ok(b.clone());
        }
        if self.config.is_some() {
            let cfg = self.config()?;
            if !cfg.run.out.as_os_str().is_empty() {
                return Ok(cfg.run.out);
            }
        }
        Err(Error::Config("no bundle given (use --bundle, --out or run.out in --config)".into()).at("config"))
    }
}

fn print_summary(dir: &Path) {
    if let Ok(text) = std::fs::read_to_string(dir.join(SUMMARY_FILE)) {
        print!("{text}");
    }
}

fn staged(c: &Common, stage: Stage) -> Result<ExitCode> {
    let cfg = c.config()?;
    let log = run_staged(&cfg, stage)?;
    for r in &log.reused {
        println!("reused {r}");
    }
    for r in &log.computed {
        println!("computed {r}");
    }
    if stage == Stage::Tree {
        print_summary(&cfg.run.out);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_render(a: &RenderArgs) -> Result<ExitCode> {
    let dir = a.common.bundle(&a.bundle)?;
    let load = || -> Result<_> {
        let tree = HierarchyTree::load(&dir.join(TREE_FILE))?;
        let (mesh_file, label_file) =
            if a.image_side { (IMAGE_MESH_FILE, LABELS_Y_FILE) } else { (DOMAIN_MESH_FILE, LABELS_X_FILE) };
        let partition = read_partition(&dir.join(mesh_file))?;
        let path = dir.join(label_file);
        let labels = labels_from_text(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
        let palette = match a.palette_seed {
            Some(p) => p,
            None => RunConfig::load(&dir.join(CONFIG_FILE)).map(|c| c.run.palette_seed).unwrap_or(0),
        };
        Ok((tree, partition, labels, palette))
    };
    let (tree, partition, labels, palette_seed) = load().map_err(|e| e.at("render"))?;
    let format: Format = a.format.parse().map_err(|e: Error| e.at("render"))?;
    let depth = a.common.depth.unwrap_or_else(|| tree.depth());
    let spec = RenderSpec { side: a.side, depth, palette_seed, format };
    let bytes = render(&partition, &labels, tree.depth(), &spec).map_err(|e| e.at("render"))?;
    let output = a.output.clone().unwrap_or_else(|| dir.join(format!("labels_d{depth}.{}", a.format)));
    std::fs::write(&output, bytes).map_err(|e| Error::io(&output, e).at("render"))?;
    println!("wrote {}", output.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_advise(c: &Common) -> Result<ExitCode> {
    let cfg = c.config()?;
    let spec = cfg.flow_spec().map_err(|e| e.at("config"))?;
    let mesh = cfg.domain.mesh().map_err(|e| e.at("config"))?;
    let (dx, dy) = mesh.spacing();
    let q = dx.min(dy);
    let rect = cfg.domain.rect().map_err(|e| e.at("config"))?;
    let raw = estimate_lipschitz(&spec, rect, cfg.advice.lipschitz_samples, cfg.run.seed).map_err(|e| e.at("advise"))?;
    let m = raw * cfg.advice.safety_factor;
    println!("lipschitz_estimate = {raw:?}");
    println!("safety_factor = {:?}", cfg.advice.safety_factor);
    println!("epsilon = {:?}", q * (-m * spec.tau).exp());
    let advice = advise(q, m, spec.tau, mesh.len() as u64).map_err(|e| e.at("advise"))?;
    print!("{}", advice.report());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: &VerifyArgs) -> Result<ExitCode> {
    let dir = a.common.bundle(&a.bundle)?;
    let report = verify_bundle(&dir).map_err(|e| e.at("verify"))?;
    print!("{}", report.to_text());
    Ok(if report.is_ok() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.config()?;
            let dir = run_pipeline(&cfg)?;
            print_summary(&dir);
            println!("bundle = {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Advect(c) => staged(&c, Stage::Advect),
        Command::Matrix(c) => staged(&c, Stage::Matrix),
        Command::Tree(c) => staged(&c, Stage::Tree),
        Command::Render(a) => cmd_render(&a),
        Command::Advise(c) => cmd_advise(&c),
        Command::Verify(a) => cmd_verify(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            let _ = std::io::stdout().flush();
            eprintln!("relcoh: {e}");
            ExitCode::FAILURE
        }
    }
}

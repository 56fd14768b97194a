//! Run configuration, the end-to-end run, and bundle persistence.
//!
//! A run seeds points, advects them, builds the domain and image
//! partitions, counts the transition matrix and grows the tree. The bundle
//! directory holds one file per artifact:
//!
//! | file | content |
//! |------|---------|
//! | `config.toml` | the run configuration (without `out` and `workers`) |
//! | `summary.txt` | `key = value` run summary |
//! | `ensemble.bin` | initial and final points, exit flags |
//! | `domain_mesh.txt`, `image_mesh.txt` | partition headers |
//! | `matrix.txt`, `outflow.txt` | transition matrix triplets and outflow |
//! | `tree.txt` | the hierarchy |
//! | `labels_x.txt`, `labels_y.txt` | leaf label per domain / image cell |
//!
//! A full run writes into `<out>.partial` and renames it into place only
//! after every file is written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{advect, seed_uniform, units_per_day, FlowKind, FlowModel, FlowSpec, GriddedField, RossbyParams, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::hierarchy::{assign_labels, build_tree, labels_to_text, HierarchyTree};
use crate::mesh::{Partition, Rect, TriMesh};
use crate::transfer::{build_matrix, TransitionMatrix};
use crate::Point;

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const ENSEMBLE_FILE: &str = "ensemble.bin";
pub const DOMAIN_MESH_FILE: &str = "domain_mesh.txt";
pub const IMAGE_MESH_FILE: &str = "image_mesh.txt";
pub const MATRIX_FILE: &str = "matrix.txt";
pub const OUTFLOW_FILE: &str = "outflow.txt";
pub const TREE_FILE: &str = "tree.txt";
pub const LABELS_X_FILE: &str = "labels_x.txt";
pub const LABELS_Y_FILE: &str = "labels_y.txt";

const ENSEMBLE_MAGIC: &[u8; 8] = b"RELCOHE1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub flow: FlowSection,
    pub domain: GridSection,
    /// Present for open systems: the image window is partitioned separately
    /// and only cells reached by final points are active.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<GridSection>,
    pub run: RunSection,
    #[serde(default)]
    pub advice: AdviceSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub kind: String,
    #[serde(default)]
    pub t0: f64,
    /// Epoch length in the flow's time unit (iterations for the standard map).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Epoch length in days, converted with the flow's time unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_days: Option<f64>,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Velocity file for gridded flows, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// `[xmin, xmax, ymin, ymax]`.
    pub rect: [f64; 4],
    /// `[nx, ny]`; the mesh has `2·nx·ny` triangles.
    pub cells: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_min_mass")]
    pub min_mass: f64,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: usize,
    #[serde(default, skip_serializing)]
    pub out: PathBuf,
    #[serde(default)]
    pub palette_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdviceSection {
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    #[serde(default = "default_lipschitz_samples")]
    pub lipschitz_samples: usize,
}

impl Default for AdviceSection {
    fn default() -> Self {
        AdviceSection { safety_factor: default_safety(), lipschitz_samples: default_lipschitz_samples() }
    }
}

fn default_step() -> f64 {
    0.01
}
fn default_rho0() -> f64 {
    0.9
}
fn default_max_depth() -> usize {
    4
}
fn default_min_mass() -> f64 {
    0.05
}
fn default_safety() -> f64 {
    crate::sampling::DEFAULT_SAFETY_FACTOR
}
fn default_lipschitz_samples() -> usize {
    10_000
}

impl GridSection {
    pub fn rect(&self) -> Result<Rect> {
        let [a, b, c, d] = self.rect;
        Rect::new(a, b, c, d)
    }

    pub fn mesh(&self) -> Result<TriMesh> {
        TriMesh::build_uniform(self.rect()?, self.cells[0], self.cells[1])
    }
}

impl RunConfig {
    /// Parses TOML. A relative `field` path is resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(f) = &cfg.flow.field {
            if f.is_relative() {
                cfg.flow.field = Some(base_dir.join(f));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kind(&self) -> Result<FlowKind> {
        self.flow.kind.parse()
    }

    pub fn is_open(&self) -> bool {
        self.image.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        let r = &self.run;
        if r.n_points == 0 {
            return Err(Error::Config("run.n_points must be positive".into()));
        }
        if !(r.rho0 > 0.0 && r.rho0 < 1.0) {
            return Err(Error::Config(format!("run.rho0 must lie in (0, 1), got {}", r.rho0)));
        }
        if r.max_depth == 0 {
            return Err(Error::Config("run.max_depth must be at least 1".into()));
        }
        if !(r.min_mass > 0.0 && r.min_mass < 0.5) {
            return Err(Error::Config(format!("run.min_mass must lie in (0, 0.5), got {}", r.min_mass)));
        }
        if !(self.advice.safety_factor >= 1.0) || self.advice.lipschitz_samples == 0 {
            return Err(Error::Config("advice.safety_factor must be >= 1 and lipschitz_samples positive".into()));
        }
        for (name, g) in [("domain", Some(&self.domain)), ("image", self.image.as_ref())] {
            if let Some(g) = g {
                g.rect().map_err(|e| Error::Config(format!("{name}.rect: {e}")))?;
                if g.cells[0] == 0 || g.cells[1] == 0 {
                    return Err(Error::Config(format!("{name}.cells must be positive")));
                }
            }
        }
        match (self.flow.tau, self.flow.tau_days) {
            (Some(_), Some(_)) => return Err(Error::Config("give flow.tau or flow.tau_days, not both".into())),
            (None, None) => return Err(Error::Config("flow.tau (or flow.tau_days) is required".into())),
            (None, Some(_)) if matches!(kind, FlowKind::DoubleGyre | FlowKind::StandardMap) => {
                return Err(Error::Config(format!("flow.tau_days has no meaning for {kind}")));
            }
            _ => {}
        }
        if kind == FlowKind::StandardMap {
            let d = self.domain.rect;
            if d[0] < 0.0 || d[1] > 1.0 || d[2] < 0.0 || d[3] > 1.0 {
                return Err(Error::Config("standard-map domains live on the unit torus [0, 1]²".into()));
            }
        }
        if kind == FlowKind::Gridded && self.flow.field.is_none() {
            return Err(Error::Config("gridded flows need flow.field".into()));
        }
        Ok(())
    }

    /// Builds the flow, loading the velocity file for gridded flows.
    pub fn flow_spec(&self) -> Result<FlowSpec> {
        let kind = self.kind()?;
        let field = match (&self.flow.field, kind) {
            (Some(path), FlowKind::Gridded) => Some(Arc::new(GriddedField::load(path)?)),
            _ => None,
        };
        let mut params = self.flow.params.clone();
        if kind == FlowKind::Rossby {
            for (k, v) in RossbyParams::reference().to_params() {
                params.entry(k).or_insert(v);
            }
        }
        let tau = match (self.flow.tau, self.flow.tau_days) {
            (Some(t), _) => t,
            (None, Some(days)) => {
                let unit = match (&field, kind) {
                    (Some(f), _) => f.time_unit().to_string(),
                    (None, FlowKind::Rossby) => "seconds".to_string(),
                    _ => return Err(Error::Config(format!("flow.tau_days has no meaning for {kind}"))),
                };
                days * units_per_day(&unit)?
            }
            (None, None) => return Err(Error::Config("flow.tau is required".into())),
        };
        FlowSpec::from_params(kind, &params, field, self.flow.t0, tau, self.flow.step)
    }
}

/// Everything a run produces, in memory.
#[derive(Clone, Debug)]
pub struct RunOutputs {
    pub ensemble: TrajectoryEnsemble,
    pub domain: Partition,
    pub image: Partition,
    pub matrix: TransitionMatrix,
    pub tree: HierarchyTree,
    pub labels_x: Vec<Option<String>>,
    pub labels_y: Vec<Option<String>>,
}

/// Initial points: uniform on the domain, restricted to water for gridded
/// flows (rejection sampling from one seeded stream).
pub fn seed_points(cfg: &RunConfig, spec: &FlowSpec) -> Result<Vec<Point>> {
    let rect = cfg.domain.rect()?;
    let n = cfg.run.n_points;
    let FlowModel::Gridded(field) = &spec.model else {
        return Ok(seed_uniform(rect, n, cfg.run.seed));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut pts = Vec::with_capacity(n);
    let limit = n.saturating_mul(1000).max(1_000_000);
    for _ in 0..limit {
        if pts.len() == n {
            break;
        }
        let p = [rect.xmin + rng.random::<f64>() * rect.width(), rect.ymin + rng.random::<f64>() * rect.height()];
        if field.is_wet(p) {
            pts.push(p);
        }
    }
    if pts.len() < n {
        return Err(Error::Config("domain has too little water to seed the requested points".into()));
    }
    Ok(pts)
}

pub fn stage_advect(cfg: &RunConfig) -> Result<TrajectoryEnsemble> {
    let spec = cfg.flow_spec().map_err(|e| e.at("config"))?;
    let pts = seed_points(cfg, &spec).map_err(|e| e.at("seed"))?;
    advect(&spec, &pts, cfg.run.seed).map_err(|e| e.at("advect"))
}

/// Domain partition (cells holding initial points) and image partition
/// (the same partition for closed systems; cells holding non-exited final
/// points for open ones).
pub fn stage_partitions(cfg: &RunConfig, ens: &TrajectoryEnsemble) -> Result<(Partition, Partition)> {
    let run = || -> Result<(Partition, Partition)> {
        let mesh = Arc::new(cfg.domain.mesh()?);
        let domain = Partition::uniform(mesh.clone(), &mesh.occupancy_mask(&ens.initial))?;
        let image = match &cfg.image {
            None => domain.clone(),
            Some(g) => {
                let img = Arc::new(g.mesh()?);
                let landed: Vec<Point> =
                    ens.final_points.iter().zip(&ens.exited).filter(|(_, &e)| !e).map(|(p, _)| *p).collect();
                Partition::uniform(img.clone(), &img.occupancy_mask(&landed))?
            }
        };
        Ok((domain, image))
    };
    run().map_err(|e| e.at("partition"))
}

pub fn stage_matrix(ens: &TrajectoryEnsemble, domain: &Partition, image: &Partition) -> Result<TransitionMatrix> {
    build_matrix(ens, domain, image).map_err(|e| e.at("matrix"))
}

pub fn stage_tree(cfg: &RunConfig, matrix: &TransitionMatrix, domain: &Partition) -> Result<HierarchyTree> {
    let r = &cfg.run;
    build_tree(matrix, domain.weights(), r.rho0, r.max_depth, r.min_mass, r.seed).map_err(|e| e.at("tree"))
}

/// All stages in memory, in the calling thread pool.
pub fn execute(cfg: &RunConfig) -> Result<RunOutputs> {
    cfg.validate().map_err(|e| e.at("config"))?;
    let ensemble = stage_advect(cfg)?;
    let (domain, image) = stage_partitions(cfg, &ensemble)?;
    let matrix = stage_matrix(&ensemble, &domain, &image)?;
    let tree = stage_tree(cfg, &matrix, &domain)?;
    let (labels_x, labels_y) = assign_labels(&tree, matrix.n_rows(), matrix.n_cols());
    Ok(RunOutputs { ensemble, domain, image, matrix, tree, labels_x, labels_y })
}

/// Runs `f` in a pool of `workers` threads (0: every core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Full run: executes every stage and writes the bundle to `cfg.run.out`,
/// replacing any previous bundle there. Nothing is left behind on failure.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PathBuf> {
    if cfg.run.out.as_os_str().is_empty() {
        return Err(Error::Config("run.out (or --out) is required".into()).at("config"));
    }
    let out = with_workers(cfg.run.workers, || execute(cfg))??;
    let dest = cfg.run.out.clone();
    let partial = partial_path(&dest);
    let written = (|| -> Result<()> {
        if partial.exists() {
            std::fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
        }
        std::fs::create_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
        write_bundle(&partial, cfg, &out)?;
        if dest.exists() {
            std::fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
        }
        std::fs::rename(&partial, &dest).map_err(|e| Error::io(&dest, e))
    })();
    if let Err(e) = written {
        let _ = std::fs::remove_dir_all(&partial);
        return Err(e.at("write"));
    }
    Ok(dest)
}

fn partial_path(dest: &Path) -> PathBuf {
    let mut s = dest.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// The stages a staged subcommand can stop after.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Advect,
    Matrix,
    Tree,
}

/// What a staged run did with each artifact group.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StagedRun {
    pub reused: Vec<&'static str>,
    pub computed: Vec<&'static str>,
}

/// Runs the pipeline up to `upto` inside the bundle at `cfg.run.out`.
///
/// Existing artifacts are reused when the bundle's recorded configuration
/// agrees with `cfg` on every input they depend on; anything downstream of a
/// recomputed stage is deleted before new files are written.
pub fn run_staged(cfg: &RunConfig, upto: Stage) -> Result<StagedRun> {
    cfg.validate().map_err(|e| e.at("config"))?;
    let dir = cfg.run.out.clone();
    if dir.as_os_str().is_empty() {
        return Err(Error::Config("run.out (or --out) is required".into()).at("config"));
    }
    with_workers(cfg.run.workers, || staged_in(cfg, &dir, upto))?
}

fn staged_in(cfg: &RunConfig, dir: &Path, upto: Stage) -> Result<StagedRun> {
    let io = |e| Error::io(dir, e);
    std::fs::create_dir_all(dir).map_err(io).map_err(|e| e.at("write"))?;
    let prev = RunConfig::load(&dir.join(CONFIG_FILE)).ok();
    let mut log = StagedRun::default();
    let exists = |names: &[&str]| names.iter().all(|n| dir.join(n).is_file());
    let remove = |names: &[&str]| {
        for n in names {
            let _ = std::fs::remove_file(dir.join(n));
        }
    };
    const MATRIX_FILES: [&str; 4] = [MATRIX_FILE, OUTFLOW_FILE, DOMAIN_MESH_FILE, IMAGE_MESH_FILE];
    const TREE_FILES: [&str; 4] = [TREE_FILE, LABELS_X_FILE, LABELS_Y_FILE, SUMMARY_FILE];

    let same_points = prev.as_ref().is_some_and(|p| {
        p.flow == cfg.flow && p.domain == cfg.domain && p.run.n_points == cfg.run.n_points && p.run.seed == cfg.run.seed
    });
    let ensemble = if same_points && exists(&[ENSEMBLE_FILE]) {
        log.reused.push("ensemble");
        read_ensemble(&dir.join(ENSEMBLE_FILE)).map_err(|e| e.at("advect"))?
    } else {
        remove(&MATRIX_FILES);
        remove(&TREE_FILES);
        let ens = stage_advect(cfg)?;
        write_ensemble(&dir.join(ENSEMBLE_FILE), &ens).map_err(|e| e.at("write"))?;
        log.computed.push("ensemble");
        ens
    };
    write_file(&dir.join(CONFIG_FILE), &cfg.to_toml()).map_err(|e| e.at("write"))?;
    if upto == Stage::Advect {
        return Ok(log);
    }

    let same_matrix = same_points && prev.as_ref().is_some_and(|p| p.image == cfg.image) && log.computed.is_empty();
    let (domain, image, matrix) = if same_matrix && exists(&MATRIX_FILES) {
        log.reused.push("matrix");
        let load = || -> Result<_> {
            Ok((
                read_partition(&dir.join(DOMAIN_MESH_FILE))?,
                read_partition(&dir.join(IMAGE_MESH_FILE))?,
                TransitionMatrix::load(&dir.join(MATRIX_FILE), &dir.join(OUTFLOW_FILE))?,
            ))
        };
        load().map_err(|e| e.at("matrix"))?
    } else {
        remove(&TREE_FILES);
        let (domain, image) = stage_partitions(cfg, &ensemble)?;
        let matrix = stage_matrix(&ensemble, &domain, &image)?;
        let write = || -> Result<()> {
            write_file(&dir.join(DOMAIN_MESH_FILE), &domain.to_header())?;
            write_file(&dir.join(IMAGE_MESH_FILE), &image.to_header())?;
            matrix.save(&dir.join(MATRIX_FILE), &dir.join(OUTFLOW_FILE))
        };
        write().map_err(|e| e.at("write"))?;
        log.computed.push("matrix");
        (domain, image, matrix)
    };
    if upto == Stage::Matrix {
        return Ok(log);
    }

    let tree = stage_tree(cfg, &matrix, &domain)?;
    let (labels_x, labels_y) = assign_labels(&tree, matrix.n_rows(), matrix.n_cols());
    let out = RunOutputs { ensemble, domain, image, matrix, tree, labels_x, labels_y };
    let write = || -> Result<()> {
        out.tree.save(&dir.join(TREE_FILE))?;
        write_file(&dir.join(LABELS_X_FILE), &labels_to_text(&out.labels_x))?;
        write_file(&dir.join(LABELS_Y_FILE), &labels_to_text(&out.labels_y))?;
        write_file(&dir.join(SUMMARY_FILE), &summary(cfg, &out))
    };
    write().map_err(|e| e.at("write"))?;
    log.computed.push("tree");
    Ok(log)
}

/// Writes every artifact of `out` into `dir`.
pub fn write_bundle(dir: &Path, cfg: &RunConfig, out: &RunOutputs) -> Result<()> {
    write_file(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    write_ensemble(&dir.join(ENSEMBLE_FILE), &out.ensemble)?;
    write_file(&dir.join(DOMAIN_MESH_FILE), &out.domain.to_header())?;
    write_file(&dir.join(IMAGE_MESH_FILE), &out.image.to_header())?;
    out.matrix.save(&dir.join(MATRIX_FILE), &dir.join(OUTFLOW_FILE))?;
    out.tree.save(&dir.join(TREE_FILE))?;
    write_file(&dir.join(LABELS_X_FILE), &labels_to_text(&out.labels_x))?;
    write_file(&dir.join(LABELS_Y_FILE), &labels_to_text(&out.labels_y))?;
    write_file(&dir.join(SUMMARY_FILE), &summary(cfg, out))
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `key = value` lines describing a run.
pub fn summary(cfg: &RunConfig, out: &RunOutputs) -> String {
    let m = &out.matrix;
    let w = out.domain.weights();
    let occupied = (0..m.n_rows()).filter(|&i| m.is_occupied(i)).count();
    let outflow_mass: f64 = (0..m.n_rows()).map(|i| w[i] * m.outflow()[i]).sum();
    let defect = (0..m.n_rows())
        .filter(|&i| m.is_occupied(i))
        .map(|i| (m.row_sum(i) + m.outflow()[i] - 1.0).abs())
        .fold(0.0, f64::max);
    let mut s = String::new();
    let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
    kv("flow", cfg.flow.kind.clone());
    kv("system", if cfg.is_open() { "open" } else { "closed" }.into());
    kv("n_points", out.ensemble.len().to_string());
    kv("exited", out.ensemble.exited_count().to_string());
    kv("domain_triangles", out.domain.len().to_string());
    kv("domain_active", out.domain.active_indices().len().to_string());
    kv("image_triangles", out.image.len().to_string());
    kv("image_active", out.image.active_indices().len().to_string());
    kv("matrix_nnz", m.nnz().to_string());
    kv("occupied_rows", occupied.to_string());
    kv("empty_rows", (m.n_rows() - occupied).to_string());
    kv("outflow_mass", format!("{outflow_mass:?}"));
    kv("max_row_defect", format!("{defect:?}"));
    let root = &out.tree.root;
    kv("root_status", root.status.to_string());
    if let [a, b] = root.children.as_slice() {
        kv("root_rho_1", format!("{:?}", a.rho.unwrap_or(f64::NAN)));
        kv("root_rho_2", format!("{:?}", b.rho.unwrap_or(f64::NAN)));
        kv("root_mass_1", format!("{:?}", a.mass));
        kv("root_mass_2", format!("{:?}", b.mass));
    }
    if let Some(r) = root.rho_star {
        kv("root_rho_star", format!("{r:?}"));
    }
    kv("tree_depth", out.tree.depth().to_string());
    kv("leaves", out.tree.leaves().len().to_string());
    s
}

/// Binary ensemble: magic, `n`, `t0`, `tau`, `seed`, then `n` records of
/// little-endian `x0 y0 x1 y1`, then `n` exit-flag bytes.
pub fn write_ensemble(path: &Path, ens: &TrajectoryEnsemble) -> Result<()> {
    let n = ens.len();
    let mut buf = Vec::with_capacity(40 + 33 * n);
    buf.extend_from_slice(ENSEMBLE_MAGIC);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&ens.t0.to_le_bytes());
    buf.extend_from_slice(&ens.tau.to_le_bytes());
    buf.extend_from_slice(&ens.seed.to_le_bytes());
    for (a, b) in ens.initial.iter().zip(&ens.final_points) {
        for v in [a[0], a[1], b[0], b[1]] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf.extend(ens.exited.iter().map(|&e| e as u8));
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_ensemble(path: &Path) -> Result<TrajectoryEnsemble> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::parse(path, 0, msg);
    if buf.len() < 40 || &buf[..8] != ENSEMBLE_MAGIC {
        return Err(bad("not an ensemble file"));
    }
    let word = |k: usize| -> [u8; 8] { buf[k..k + 8].try_into().unwrap() };
    let n = u64::from_le_bytes(word(8)) as usize;
    let t0 = f64::from_le_bytes(word(16));
    let tau = f64::from_le_bytes(word(24));
    let seed = u64::from_le_bytes(word(32));
    let expected = n.checked_mul(33).and_then(|b| b.checked_add(40)).ok_or_else(|| bad("length overflow"))?;
    if buf.len() != expected {
        return Err(bad("truncated ensemble file"));
    }
    let mut initial = Vec::with_capacity(n);
    let mut final_points = Vec::with_capacity(n);
    for k in 0..n {
        let base = 40 + 32 * k;
        let f = |o: usize| f64::from_le_bytes(word(base + 8 * o));
        initial.push([f(0), f(1)]);
        final_points.push([f(2), f(3)]);
    }
    let exited = buf[40 + 32 * n..].iter().map(|&b| b != 0).collect();
    Ok(TrajectoryEnsemble { initial, final_points, exited, t0, tau, seed })
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Partition::from_header(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GYRE: &str = r#"
[flow]
kind = "double-gyre"
tau = 2.0
step = 0.05
params = { A = 0.25, epsilon = 0.25, omega = 6.283185307179586 }

[domain]
rect = [0.0, 2.0, 0.0, 1.0]
cells = [8, 4]

[run]
n_points = 4000
seed = 3
max_depth = 2
out = "unused"
"#;

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = RunConfig::from_toml(GYRE, Path::new(".")).unwrap();
        assert_eq!(cfg.run.rho0, 0.9);
        assert_eq!(cfg.run.min_mass, 0.05);
        let back = RunConfig::from_toml(&cfg.to_toml(), Path::new(".")).unwrap();
        let mut expect = cfg.clone();
        expect.run.out = PathBuf::new();
        assert_eq!(back, expect);
    }

    #[test]
    fn config_rejections() {
        let zero = GYRE.replace("n_points = 4000", "n_points = 0");
        assert!(matches!(RunConfig::from_toml(&zero, Path::new(".")), Err(Error::Config(_))));
        let rho = GYRE.replace("max_depth = 2", "max_depth = 2\nrho0 = 1.5");
        assert!(RunConfig::from_toml(&rho, Path::new(".")).is_err());
        let unknown = GYRE.replace("seed = 3", "seed = 3\ncolour = 1");
        assert!(RunConfig::from_toml(&unknown, Path::new(".")).is_err());
        let missing = GYRE.replace("A = 0.25, ", "");
        let cfg = RunConfig::from_toml(&missing, Path::new(".")).unwrap();
        assert!(matches!(cfg.flow_spec(), Err(Error::FlowSpec(_))));
    }

    #[test]
    fn rossby_defaults_fill_missing_params() {
        let text = r#"
[flow]
kind = "rossby"
tau_days = 10.0
step = 3600.0
params = { U0 = 50.0 }
[domain]
rect = [0.0, 2.0e7, -2.5e6, 2.5e6]
cells = [4, 2]
[run]
n_points = 10
"#;
        let cfg = RunConfig::from_toml(text, Path::new(".")).unwrap();
        let spec = cfg.flow_spec().unwrap();
        assert_eq!(spec.tau, 864_000.0);
        let FlowModel::Rossby(r) = spec.model else { panic!() };
        assert_eq!(r.u0, 50.0);
        assert_eq!(r.a2, RossbyParams::reference().a2);
    }

    #[test]
    fn ensemble_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ENSEMBLE_FILE);
        let ens = TrajectoryEnsemble {
            initial: vec![[0.1, 0.2], [f64::MIN_POSITIVE, 1.0 / 3.0]],
            final_points: vec![[1.5, -0.0], [2.0, 7.25]],
            exited: vec![false, true],
            t0: 0.5,
            tau: 10.0,
            seed: 99,
        };
        write_ensemble(&path, &ens).unwrap();
        let back = read_ensemble(&path).unwrap();
        assert_eq!(back.initial, ens.initial);
        assert_eq!(back.final_points, ens.final_points);
        assert_eq!(back.exited, ens.exited);
        assert_eq!((back.t0, back.tau, back.seed), (0.5, 10.0, 99));
        std::fs::write(&path, b"garbage").unwrap();
        assert!(read_ensemble(&path).is_err());
    }

    #[test]
    fn failing_run_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bundle");
        // A gridded flow whose field file does not exist fails at config.
        let text = format!(
            "[flow]\nkind = \"gridded\"\ntau = 1.0\nfield = \"missing.txt\"\n[domain]\nrect = [0.0, 1.0, 0.0, 1.0]\ncells = [2, 2]\n[run]\nn_points = 10\nout = {:?}\n",
            out
        );
        let cfg = RunConfig::from_toml(&text, dir.path()).unwrap();
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "config", .. }), "{err}");
        assert!(!out.exists());
        assert!(!partial_path(&out).exists());
    }
}

//! Command-line front end. Every subcommand writes its outputs plus one
//! `manifest.json` into the output directory.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::curveset::{load_curves, save_curves, CurveSet, Format};
use crate::discovery::{
    self, evaluate, evaluate_occurrences, read_occurrences_csv, search, write_occurrences_csv, CandidateMotif,
    DiscoveredMotif, DiscoveryParams, GridSpec, MergeParams, RadiusRule, SelectParams,
};
use crate::dissimilarity::DistanceParams;
use crate::error::Error;
use crate::probkma::{self, ProbKmaParams, ProbKmaState};
use crate::silhouette::{self, silhouette_of_state};
use crate::simgen::{generate, preset, Preset, ScenarioSpec, TruthLayout};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
#[error("{msg}")]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, msg: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        use std::io::ErrorKind;
        let code = match &e {
            Error::InvalidParameter(_)
            | Error::Parse(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Empty
            | Error::NonUniformGrid { .. }
            | Error::DimensionMismatch { .. }
            | Error::NoAdmissibleWindow { .. } => EXIT_USAGE,
            Error::Io(io) if matches!(io.kind(), ErrorKind::NotFound | ErrorKind::InvalidData) => EXIT_USAGE,
            _ => EXIT_INTERNAL,
        };
        CliError { code, msg: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "funmotif", version, about = "Functional motif discovery with probabilistic K-mean and local alignment")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads for the parallel parts (results do not depend on it)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON object of flag values, e.g. {"alpha": 1, "K": [2, 3]}; command-line flags win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate curves with planted motifs from a preset or a scenario file
    Generate(GenerateArgs),
    /// Fit probKMA once
    Probkma(ProbkmaArgs),
    /// Full discovery: grid of runs, prune, merge, search, select
    Discover(DiscoverArgs),
    /// Search occurrences of given motifs along the curves
    Search(SearchArgs),
    /// Score found occurrences against a ground-truth layout
    Evaluate(EvaluateArgs),
    /// Silhouette table of a fitted probKMA state
    Silhouette(SilhouetteArgs),
}

const SUBCOMMANDS: [&str; 6] = ["generate", "probkma", "discover", "search", "evaluate", "silhouette"];

#[derive(Args, Debug, Serialize)]
pub struct GenerateArgs {
    /// scenario1, scenario2, comp_a, comp_b, comp_c or comp_d
    #[arg(long, default_value = "scenario1")]
    pub preset: String,
    /// Scenario JSON file; replaces --preset
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Curve length (scenarios only)
    #[arg(long, default_value_t = 200)]
    pub l: usize,
    /// Noise SD on motif coefficients
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(short, long)]
    pub out: PathBuf,
}

/// Distance and fitting controls shared by the probKMA-based commands.
#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    /// Weight of the derivative term in d_alpha
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Fuzzifier
    #[arg(long, default_value_t = probkma::DEFAULT_M)]
    pub m: f64,
    /// Stopping tolerance on the Bhattacharyya distance
    #[arg(long, default_value_t = probkma::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = probkma::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Minimum share of jointly observed points for a shift to be admissible
    #[arg(long, default_value_t = crate::dissimilarity::DEFAULT_OVERLAP_FLOOR)]
    pub overlap_floor: f64,
    /// Gaps up to this many points are interpolated before fitting
    #[arg(long, default_value_t = 0)]
    pub max_gap: usize,
}

impl FitArgs {
    fn dist(&self, d: usize) -> CliResult<DistanceParams> {
        let p = DistanceParams::new(self.alpha, vec![1.0; d], self.overlap_floor)?;
        Ok(p)
    }

    fn params(&self, k: usize, c_min: Vec<usize>, c_max: usize, d: usize, seed: u64) -> CliResult<ProbKmaParams> {
        let mut p = ProbKmaParams::new(k, c_min.first().copied().unwrap_or(0), c_max, self.dist(d)?);
        p.c_min = c_min;
        p.m = self.m;
        p.tol = self.tol;
        p.max_iter = self.max_iter;
        p.seed = seed;
        Ok(p)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ProbkmaArgs {
    /// Curves file: long CSV (curve_id,t,v1..vd) or JSON
    #[arg(short, long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(short, long)]
    pub out: PathBuf,
    /// Number of clusters
    #[arg(long = "K", default_value_t = 2)]
    pub k: usize,
    /// Initial center length in points: one value, or one per cluster
    #[arg(long, value_delimiter = ',', default_values_t = [60], action = ArgAction::Set)]
    pub c: Vec<usize>,
    /// Maximum center length in points
    #[arg(long, default_value_t = 70)]
    pub c_max: usize,
    /// Random initialisations; the one with the lowest final objective is kept
    #[arg(long, default_value_t = 1)]
    pub n_init: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusKind {
    /// Member/non-member nearest-neighbour boundary
    Knn,
    /// Mean plus a multiple of the SD of member distances
    MeanSd,
}

#[derive(Args, Debug, Serialize)]
pub struct DiscoverArgs {
    /// Curves file: long CSV (curve_id,t,v1..vd) or JSON
    #[arg(short, long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(short, long)]
    pub out: PathBuf,
    /// Numbers of clusters in the grid
    #[arg(long = "K", value_delimiter = ',', default_values_t = [2, 3], action = ArgAction::Set)]
    pub k: Vec<usize>,
    /// Initial center lengths in the grid, in points
    #[arg(long, value_delimiter = ',', default_values_t = [40, 50, 60], action = ArgAction::Set)]
    pub c: Vec<usize>,
    #[arg(long, default_value_t = 70)]
    pub c_max: usize,
    /// Random initialisations per (K, c)
    #[arg(long, default_value_t = 20)]
    pub n_init: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Candidates need at least this cluster silhouette
    #[arg(long, default_value_t = discovery::DEFAULT_MIN_SILHOUETTE)]
    pub min_silhouette: f64,
    /// Candidates need at least this many member portions
    #[arg(long, default_value_t = discovery::DEFAULT_MIN_SUPPORT)]
    pub min_support: usize,
    /// Quantile of candidate-to-member distances giving R_all
    #[arg(long, default_value_t = 0.25)]
    pub r_all_quantile: f64,
    /// Dendrogram cut at this multiple of R_all
    #[arg(long, default_value_t = 2.0)]
    pub cut_factor: f64,
    /// Longest/shortest center ratio above which a group keeps one motif per length stratum
    #[arg(long, default_value_t = 1.5)]
    pub length_split_ratio: f64,
    #[arg(long, value_enum, default_value_t = RadiusKind::Knn)]
    pub radius_rule: RadiusKind,
    /// Neighbours in the knn radius vote
    #[arg(long, default_value_t = 3)]
    pub knn_k: usize,
    /// Member share needed in the knn radius vote
    #[arg(long, default_value_t = 0.5)]
    pub knn_votes: f64,
    /// SD multiple for the mean-sd radius
    #[arg(long, default_value_t = 2.0)]
    pub radius_sd: f64,
    /// Occurrences on one curve may overlap by at most (1 - this) of the motif length
    #[arg(long, default_value_t = discovery::DEFAULT_MIN_SEPARATION_FRAC)]
    pub min_separation: f64,
    /// Motifs with fewer occurrences are dropped
    #[arg(long, default_value_t = discovery::DEFAULT_MIN_SUPPORT)]
    pub min_frequency: usize,
    /// Share of the shorter length two occurrences must overlap to coincide
    #[arg(long, default_value_t = 0.2)]
    pub dedup_overlap: f64,
    /// A motif whose occurrences coincide with a better motif's beyond this share is dropped
    #[arg(long, default_value_t = 0.5)]
    pub dedup_share: f64,
}

impl DiscoverArgs {
    fn params(&self, d: usize) -> CliResult<DiscoveryParams> {
        let base = self.fit.params(1, vec![self.c.first().copied().unwrap_or(0)], self.c_max, d, self.seed)?;
        let grid = GridSpec {
            k_values: self.k.clone(),
            c_values: self.c.clone(),
            n_init: self.n_init,
            base,
            master_seed: self.seed,
        };
        let mut p = DiscoveryParams::new(grid);
        p.min_silhouette = self.min_silhouette;
        p.min_support = self.min_support;
        p.merge = MergeParams {
            r_all_quantile: self.r_all_quantile,
            cut_factor: self.cut_factor,
            length_split_ratio: self.length_split_ratio,
            radius: match self.radius_rule {
                RadiusKind::Knn => RadiusRule::Knn { k: self.knn_k, votes: self.knn_votes },
                RadiusKind::MeanSd => RadiusRule::MeanSd { sd_factor: self.radius_sd },
            },
        };
        p.min_separation_frac = self.min_separation;
        p.select = SelectParams {
            min_frequency: self.min_frequency,
            overlap_frac: self.dedup_overlap,
            max_shared: self.dedup_share,
        };
        Ok(p)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SearchArgs {
    /// motifs.json written by `discover`
    #[arg(long)]
    pub motifs: PathBuf,
    /// Curves file: long CSV (curve_id,t,v1..vd) or JSON
    #[arg(short, long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(short, long)]
    pub out: PathBuf,
    /// Multiplies every motif radius
    #[arg(long, default_value_t = 1.0)]
    pub radius_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub max_gap: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    /// Occurrences CSV
    #[arg(long)]
    pub found: PathBuf,
    /// truth.json written by `generate`
    #[arg(long)]
    pub truth: PathBuf,
    /// motifs.json, for center distances and lengths
    #[arg(long)]
    pub motifs: Option<PathBuf>,
    /// probKMA state, for the classification error against truth labels
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Output directory
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SilhouetteArgs {
    /// state.json written by `probkma`
    #[arg(long)]
    pub state: PathBuf,
    /// Curves file: long CSV (curve_id,t,v1..vd) or JSON
    #[arg(short, long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = crate::dissimilarity::DEFAULT_OVERLAP_FLOOR)]
    pub overlap_floor: f64,
    #[arg(long, default_value_t = 0)]
    pub max_gap: usize,
}

/// Contents of `motifs.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotifsFile {
    pub dist: DistanceParams,
    pub min_separation_frac: f64,
    pub r_all: Option<f64>,
    pub motifs: Vec<DiscoveredMotif>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub params: Value,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every output file except the manifest.
    pub outputs: BTreeMap<String, String>,
    pub summary: Value,
    /// Wall-clock seconds per stage; the only non-reproducible field.
    pub timings: BTreeMap<String, f64>,
}

pub const MANIFEST: &str = "manifest.json";

fn digest(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(Error::from)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Recorder {
    command: &'static str,
    seed: Option<u64>,
    params: Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    summary: Value,
    timings: BTreeMap<String, f64>,
    clock: Instant,
}

impl Recorder {
    fn new(command: &'static str, seed: Option<u64>, params: Value) -> Self {
        Recorder {
            command,
            seed,
            params,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            summary: Value::Null,
            timings: BTreeMap::new(),
            clock: Instant::now(),
        }
    }

    fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.insert(path.display().to_string(), digest(path)?);
        Ok(())
    }

    fn lap(&mut self, stage: &str) {
        self.timings.insert(stage.to_string(), self.clock.elapsed().as_secs_f64());
        self.clock = Instant::now();
    }

    fn finish(self, dir: &Path) -> CliResult<()> {
        let mut outputs = BTreeMap::new();
        for p in &self.outputs {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            outputs.insert(name, digest(p)?);
        }
        let m = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.to_string(),
            seed: self.seed,
            params: self.params,
            inputs: self.inputs,
            outputs,
            summary: self.summary,
            timings: self.timings,
        };
        write_json(&dir.join(MANIFEST), &m)
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    let f = fs::File::create(path).map_err(|e| CliError { code: EXIT_INTERNAL, msg: format!("{}: {e}", path.display()) })?;
    serde_json::to_writer_pretty(BufWriter::new(f), v).map_err(|e| CliError { code: EXIT_INTERNAL, msg: e.to_string() })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError { code: EXIT_INTERNAL, msg: format!("{}: {e}", dir.display()) })
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError { code: EXIT_INTERNAL, msg: format!("{}: {e}", path.display()) })
}

fn load_input(path: &Path, max_gap: usize) -> CliResult<CurveSet> {
    let cs = load_curves(path, Format::from_path(path)).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(cs.preprocess(max_gap))
}

fn params_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let mut rec;
    let spec: ScenarioSpec = match &a.spec {
        Some(path) => {
            let s: ScenarioSpec = read_json(path)?;
            rec = Recorder::new("generate", Some(s.seed), Value::Null);
            rec.input(path)?;
            s
        }
        None => {
            let p = Preset::from_name(&a.preset, a.l, a.sigma)?;
            rec = Recorder::new("generate", Some(a.seed), Value::Null);
            preset(p, a.seed)?
        }
    };
    rec.params = json!({ "args": params_value(a), "scenario": params_value(&spec) });
    let (cs, truth) = generate(&spec)?;
    rec.lap("generate");
    out_dir(&a.out)?;
    let curves = a.out.join("curves.csv");
    let truth_path = a.out.join("truth.json");
    save_curves(&cs, &curves, Format::CsvLong)?;
    truth.save(&truth_path)?;
    rec.outputs = vec![curves, truth_path];
    rec.summary = json!({ "n_curves": cs.len(), "n_occurrences": truth.occurrences.len() });
    rec.lap("write");
    rec.finish(&a.out)
}

fn cmd_probkma(a: &ProbkmaArgs) -> CliResult<()> {
    let mut rec = Recorder::new("probkma", Some(a.seed), Value::Null);
    let cs = load_input(&a.input, a.fit.max_gap)?;
    rec.input(&a.input)?;
    let c_min = match a.c.len() {
        1 => vec![a.c[0]; a.k],
        n if n == a.k => a.c.clone(),
        n => return Err(CliError::usage(format!("--c has {n} values for K = {}", a.k))),
    };
    let p = a.fit.params(a.k, c_min, a.c_max, cs.dim(), a.seed)?;
    rec.params = json!({ "args": params_value(a), "probkma": params_value(&p) });
    rec.lap("load");
    let st = probkma::run_best_of(&cs, &p, a.n_init)?;
    rec.lap("fit");
    out_dir(&a.out)?;
    let path = a.out.join("state.json");
    write_json(&path, &st)?;
    rec.outputs = vec![path];
    rec.summary = json!({
        "iterations": st.iter,
        "converged": st.converged,
        "objective": st.objective_trace.last(),
        "lengths": st.lengths(),
    });
    rec.finish(&a.out)
}

fn write_candidates_csv(path: &Path, cands: &[CandidateMotif], min_sil: f64, min_support: usize) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| CliError { code: EXIT_INTERNAL, msg: e.to_string() };
    w.write_record(["k", "c", "init", "cluster", "length", "support", "silhouette", "kept"]).map_err(io)?;
    for c in cands {
        let kept = c.support >= min_support && c.silhouette.is_some_and(|s| s >= min_sil);
        w.write_record([
            c.provenance.k.to_string(),
            c.provenance.c.to_string(),
            c.provenance.init.to_string(),
            c.provenance.cluster.to_string(),
            c.center.len().to_string(),
            c.support.to_string(),
            c.silhouette.map_or_else(|| "NA".to_string(), |s| s.to_string()),
            kept.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| io(e.into()))
}

fn cmd_discover(a: &DiscoverArgs) -> CliResult<()> {
    let mut rec = Recorder::new("discover", Some(a.seed), Value::Null);
    let cs = load_input(&a.input, a.fit.max_gap)?;
    rec.input(&a.input)?;
    let p = a.params(cs.dim())?;
    p.grid.validate(&cs)?;
    rec.params = json!({ "args": params_value(a), "discovery": params_value(&p) });
    rec.lap("load");
    let grid = discovery::run_grid(&cs, &p.grid)?;
    rec.lap("grid");
    let candidates = grid.candidates.clone();
    let res = discovery::postprocess(&cs, grid, &p)?;
    rec.lap("postprocess");
    out_dir(&a.out)?;
    let motifs_path = a.out.join("motifs.json");
    let occ_path = a.out.join("occurrences.csv");
    let sil_path = a.out.join("silhouette.csv");
    let file = MotifsFile {
        dist: p.grid.base.dist.clone(),
        min_separation_frac: p.min_separation_frac,
        r_all: res.r_all,
        motifs: res.motifs.clone(),
    };
    write_json(&motifs_path, &file)?;
    write_occurrences_csv(&res.motifs, create(&occ_path)?)?;
    write_candidates_csv(&sil_path, &candidates, p.min_silhouette, p.min_support)?;
    rec.outputs = vec![motifs_path, occ_path, sil_path];
    rec.summary = json!({
        "n_runs": res.n_runs,
        "n_failed_runs": res.failures.len(),
        "n_candidates": res.n_candidates,
        "n_pruned": res.n_pruned,
        "n_merged": res.n_merged,
        "n_motifs": res.motifs.len(),
        "r_all": res.r_all,
        "motifs": res.motifs.iter().map(|m| json!({
            "id": m.id,
            "length": m.center.len(),
            "radius": m.radius,
            "occurrences": m.occurrences.len(),
        })).collect::<Vec<_>>(),
    });
    rec.lap("write");
    rec.finish(&a.out)
}

fn cmd_search(a: &SearchArgs) -> CliResult<()> {
    if !(a.radius_scale >= 0.0 && a.radius_scale.is_finite()) {
        return Err(CliError::usage(format!("--radius-scale must be a finite non-negative number, got {}", a.radius_scale)));
    }
    let mut rec = Recorder::new("search", None, params_value(a));
    let mut file: MotifsFile = read_json(&a.motifs)?;
    rec.input(&a.motifs)?;
    let cs = load_input(&a.input, a.max_gap)?;
    rec.input(&a.input)?;
    for m in file.motifs.iter_mut() {
        m.radius *= a.radius_scale;
    }
    rec.lap("load");
    let found = search(&cs, file.motifs, &file.dist, file.min_separation_frac);
    rec.lap("search");
    out_dir(&a.out)?;
    let path = a.out.join("occurrences.csv");
    write_occurrences_csv(&found, create(&path)?)?;
    rec.outputs = vec![path];
    rec.summary = json!({
        "occurrences": found.iter().map(|m| json!({ "motif_id": m.id, "count": m.occurrences.len() })).collect::<Vec<_>>(),
    });
    rec.finish(&a.out)
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let mut rec = Recorder::new("evaluate", None, params_value(a));
    let truth = TruthLayout::load(&a.truth).map_err(|e| CliError::usage(format!("{}: {e}", a.truth.display())))?;
    rec.input(&a.truth)?;
    let occs = read_occurrences_csv(&a.found, None).map_err(|e| CliError::usage(format!("{}: {e}", a.found.display())))?;
    rec.input(&a.found)?;
    let mut report = match &a.motifs {
        Some(path) => {
            let file: MotifsFile = read_json(path)?;
            rec.input(path)?;
            let index: HashMap<&str, usize> = truth
                .occurrences
                .iter()
                .map(|o| (o.curve_id.as_str(), o.curve_index))
                .collect();
            let mut motifs = file.motifs;
            for m in motifs.iter_mut() {
                m.occurrences = occs
                    .iter()
                    .filter(|o| o.motif_id == m.id)
                    .map(|o| {
                        let mut o = o.clone();
                        o.curve_index = index.get(o.curve_id.as_str()).copied().unwrap_or(usize::MAX);
                        o
                    })
                    .collect();
            }
            evaluate(&motifs, &truth, &file.dist)
        }
        None => evaluate_occurrences(&occs, &BTreeMap::new(), &truth),
    };
    if let Some(path) = &a.state {
        let st: ProbKmaState = read_json(path)?;
        rec.input(path)?;
        report = report.with_classification(&truth, &st.hard_assignment());
    }
    rec.lap("evaluate");
    let dir = &a.out;
    out_dir(dir)?;
    let path = dir.join("evaluation.json");
    write_json(&path, &report)?;
    rec.outputs = vec![path];
    rec.summary = json!({ "n_motifs": report.motifs.len(), "classification_error": report.classification_error });
    rec.finish(dir)
}

fn cmd_silhouette(a: &SilhouetteArgs) -> CliResult<()> {
    let mut rec = Recorder::new("silhouette", None, params_value(a));
    let st: ProbKmaState = read_json(&a.state)?;
    rec.input(&a.state)?;
    let cs = load_input(&a.input, a.max_gap)?;
    rec.input(&a.input)?;
    if st.n() != cs.len() {
        return Err(CliError::usage(format!("state has {} curves, input has {}", st.n(), cs.len())));
    }
    let dist = DistanceParams::new(a.alpha, vec![1.0; cs.dim()], a.overlap_floor)?;
    let report = silhouette_of_state(&cs, &st, &dist)?;
    rec.lap("silhouette");
    let dir = &a.out;
    out_dir(dir)?;
    let path = dir.join("silhouette.csv");
    silhouette::write_csv(&report, create(&path)?)?;
    rec.outputs = vec![path];
    rec.summary = json!({ "cluster_avg": report.cluster_avg, "overall": report.overall });
    rec.finish(dir)
}

/// Moves `--config FILE` out of `args` and splices its entries in as flags
/// right after the subcommand name, so that flags given explicitly (later on
/// the line) override them.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let path = it.next().ok_or_else(|| CliError::usage("--config needs a file"))?;
            config = Some(PathBuf::from(path));
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let obj: serde_json::Map<String, Value> = read_json(&path)?;
    let mut flags: Vec<OsString> = Vec::new();
    for (key, v) in obj {
        let key = key.trim_start_matches('-').replace('_', "-");
        let flag = format!("--{key}");
        let scalar = |v: &Value| -> CliResult<String> {
            match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                Value::Bool(b) => Ok(b.to_string()),
                other => Err(CliError::usage(format!("config entry '{key}' has unsupported value {other}"))),
            }
        };
        match &v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => flags.push(flag.into()),
            Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<CliResult<Vec<_>>>()?.join(",");
                flags.push(flag.into());
                flags.push(joined.into());
            }
            other => {
                flags.push(flag.into());
                flags.push(scalar(other)?.into());
            }
        }
    }
    let at = rest
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .ok_or_else(|| CliError::usage("--config given without a subcommand"))?;
    rest.splice(at + 1..at + 1, flags);
    Ok(rest)
}

fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Probkma(a) => cmd_probkma(a),
        Command::Discover(a) => cmd_discover(a),
        Command::Search(a) => cmd_search(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Silhouette(a) => cmd_silhouette(a),
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let outcome = expand_config(args).and_then(|args| {
        let cli = match Cli::try_parse_from(args) {
            Ok(cli) => cli,
            Err(e) => {
                let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
                let _ = e.print();
                return Err(CliError { code, msg: String::new() });
            }
        };
        match cli.threads {
            Some(0) => Err(CliError::usage("--threads must be at least 1")),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError { code: EXIT_INTERNAL, msg: e.to_string() })?
                .install(|| execute(&cli)),
            None => execute(&cli),
        }
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if !e.msg.is_empty() {
                eprintln!("error: {}", e.msg);
            }
            e.code
        }
    }
}

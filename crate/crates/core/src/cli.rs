//! The `hri-interface` command line.
//!
//! Exit codes: 0 success, 2 invalid config or input file, 3 optimizer
//! diagnostic, 4 failure writing outputs.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::config::{self, RunConfig};
use crate::error::Error;
use crate::functionals::CostBreakdown;
use crate::interface::OperatorAction;
use crate::obschannel::{bits_required, expected_preserved_info, pnm, select_transform, ImageFrame};
use crate::optimizer::{solve, ProblemConfig, Solution};
use crate::props::{completeness_check, map_reports};
use crate::simulator::{replay_actions, run_session, ChannelFeed, OperatorScript};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "HRI_INTERFACE_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "hri-interface", version, about = "Optimal operator-to-robot interface maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize the interface matrix and operator actions.
    Optimize(Common),
    /// Run a scripted session or replay optimizer output.
    Simulate(Common),
    /// Tabulate preserved information and bandwidth-driven transform choices.
    ChannelEval(Common),
    /// Check the design principles for an interface map.
    Props(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = "hri-out")]
    out: PathBuf,
    /// Overrides `rng_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoProgress { .. } => EXIT_SOLVER,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Optimize(c) => load(c).and_then(|cfg| optimize(&cfg, c)),
        Command::Simulate(c) => load(c).and_then(|cfg| simulate(&cfg, c)),
        Command::ChannelEval(c) => load(c).and_then(|cfg| channel_eval(&cfg, c)),
        Command::Props(c) => load(c).and_then(|cfg| props(&cfg, c)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn load(c: &Common) -> CliResult<RunConfig> {
    let text = fs::read_to_string(&c.config)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", c.config.display())))?;
    let mut cfg = config::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", c.config.display())))?;
    if let Some(s) = c.seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

fn input_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("{}: {e}", path.display()))
}

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| input_error(path, e))
}

fn read_image(path: &Path) -> CliResult<ImageFrame> {
    pnm::read(path).map_err(|e| match e {
        Error::Format(m) => CliError::config(m),
        e => input_error(path, e),
    })
}

struct Outputs<'a> {
    dir: &'a Path,
}

impl<'a> Outputs<'a> {
    fn create(dir: &'a Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError {
            code: EXIT_IO,
            message: format!("cannot create {}: {e}", dir.display()),
        })?;
        Ok(Self { dir })
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError {
            code: EXIT_IO,
            message: format!("cannot write {}: {e}", path.display()),
        })
    }
}

fn csv_string<S: Serialize>(rows: &[S], header: &[&str]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

/// `G` as two whitespace-separated rows.
pub fn format_g(g: &Matrix2<f64>) -> String {
    format!("{} {}\n{} {}\n", g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)])
}

pub fn parse_g(text: &str) -> crate::Result<Matrix2<f64>> {
    let v: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("bad matrix entry: {e}")))?;
    if v.len() != 4 {
        return Err(Error::InvalidArgument(format!("matrix needs 4 entries, found {}", v.len())));
    }
    Ok(Matrix2::new(v[0], v[1], v[2], v[3]))
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    a_head: Option<f64>,
    a_body: Option<f64>,
    v: Option<f64>,
    w: Option<f64>,
    x: f64,
    y: f64,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct ActionRow {
    knot: usize,
    t_start: f64,
    a_head: f64,
    a_body: f64,
}

#[derive(Serialize)]
struct CostFile {
    total: f64,
    g: [[f64; 2]; 2],
    final_state: [f64; 3],
    weighted: CostBreakdown,
    terms: CostBreakdown,
    restarts: Vec<RestartRow>,
}

#[derive(Serialize)]
struct RestartRow {
    index: usize,
    initial_cost: f64,
    best_cost: f64,
    evals: usize,
}

fn write_solution(out: &Outputs, cfg: &ProblemConfig, sol: &Solution) -> CliResult<()> {
    out.write("g.txt", format_g(&sol.g))?;

    let tr = &sol.trajectory;
    let rows: Vec<TrajectoryRow> = (0..tr.len())
        .map(|k| {
            let (a, u) = (tr.actions.get(k), tr.controls.get(k));
            let s = tr.states[k];
            TrajectoryRow {
                t: tr.times[k],
                a_head: a.map(|a| a.a_head),
                a_body: a.map(|a| a.a_body),
                v: u.map(|u| u.v),
                w: u.map(|u| u.w),
                x: s.x_pos,
                y: s.y_pos,
                theta: s.theta,
            }
        })
        .collect();
    out.write("trajectory.csv", csv_string(&rows, &[]))?;

    let knot_dt = cfg.horizon / sol.actions.len() as f64;
    let knots: Vec<ActionRow> = sol
        .actions
        .iter()
        .enumerate()
        .map(|(k, a)| ActionRow {
            knot: k,
            t_start: k as f64 * knot_dt,
            a_head: a.a_head,
            a_body: a.a_body,
        })
        .collect();
    out.write("actions.csv", csv_string(&knots, &[]))?;

    let f = tr.final_state();
    let g = sol.g;
    let cost = CostFile {
        total: sol.cost,
        g: [[g[(0, 0)], g[(0, 1)]], [g[(1, 0)], g[(1, 1)]]],
        final_state: [f.x_pos, f.y_pos, f.theta],
        weighted: sol.report.weighted,
        terms: sol.report.terms,
        restarts: sol
            .restarts
            .iter()
            .map(|r| RestartRow {
                index: r.index,
                initial_cost: r.initial_cost,
                best_cost: r.best_cost,
                evals: r.evals,
            })
            .collect(),
    };
    let text = toml::to_string(&cost).map_err(|e| CliError {
        code: EXIT_IO,
        message: format!("cannot serialize cost report: {e}"),
    })?;
    out.write("cost.toml", text)
}

fn optimize(cfg: &RunConfig, c: &Common) -> CliResult<()> {
    let problem = cfg.problem_config()?;
    let out = Outputs::create(&c.out)?;
    match solve(&problem) {
        Ok(sol) => {
            write_solution(&out, &problem, &sol)?;
            let g = sol.g;
            println!(
                "cost {:.6}  G = [[{:.4}, {:.4}], [{:.4}, {:.4}]]",
                sol.cost,
                g[(0, 0)],
                g[(0, 1)],
                g[(1, 0)],
                g[(1, 1)]
            );
            Ok(())
        }
        Err(Error::NoProgress {
            restarts,
            best_cost,
            best,
        }) => {
            write_solution(&out, &problem, &best)?;
            Err(CliError {
                code: EXIT_SOLVER,
                message: format!(
                    "optimizer made no progress on any of {restarts} restarts (best cost {best_cost}); best attempt written"
                ),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn simulate(cfg: &RunConfig, c: &Common) -> CliResult<()> {
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::config("missing [simulate] table"))?;
    let log = match (&sim.script, &sim.replay) {
        (Some(_), Some(_)) => return Err(CliError::config("[simulate] set either script or replay, not both")),
        (None, None) => return Err(CliError::config("[simulate] needs script or replay")),
        (None, Some(r)) => {
            let problem = cfg.problem_config()?;
            let gp = config::resolve(&c.config, &r.g);
            let g = parse_g(&read_input(&gp)?).map_err(|e| input_error(&gp, e))?;
            let ap = config::resolve(&c.config, &r.actions);
            let text = read_input(&ap)?;
            let mut rdr = csv::Reader::from_reader(text.as_bytes());
            let actions = rdr
                .deserialize::<ActionRow>()
                .map(|r| r.map(|r| OperatorAction::new(r.a_head, r.a_body)))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| input_error(&ap, e))?;
            if actions.len() != problem.knots {
                return Err(input_error(
                    &ap,
                    format!("{} knots, but [problem] has {}", actions.len(), problem.knots),
                ));
            }
            replay_actions(&problem, &g, &actions)?
        }
        (Some(s), None) => {
            let path = config::resolve(&c.config, s);
            let text = read_input(&path)?;
            let script = OperatorScript::from_csv(text.as_bytes()).map_err(|e| input_error(&path, e))?;
            let map = cfg.interface_map()?;
            let feed = match &sim.channel {
                None => None,
                Some(f) => Some(ChannelFeed {
                    candidates: config::candidates(&f.candidates, "simulate.channel")?,
                    budget: config::budget(&f.budget, "simulate.channel")?,
                    frames: f
                        .frames
                        .iter()
                        .map(|p| read_image(&config::resolve(&c.config, p)))
                        .collect::<CliResult<_>>()?,
                    every: f.every,
                    bins: f.bins,
                }),
            };
            run_session(&script, &map, &sim.smoother, &sim.options(), feed.as_ref())?
        }
    };
    let out = Outputs::create(&c.out)?;
    out.write("session.jsonl", log.to_json_lines())?;
    out.write("session.csv", log.to_csv())?;
    let f = log.final_state();
    println!(
        "{} ticks, final state ({:.6}, {:.6}, {:.6})",
        log.records.len(),
        f.x_pos,
        f.y_pos,
        f.theta
    );
    Ok(())
}

#[derive(Serialize)]
struct ChannelRow {
    transform: String,
    bits_required: f64,
    expected_preserved_info: f64,
}

#[derive(Serialize)]
struct SelectionRow {
    frame: usize,
    t: f64,
    image: String,
    transform: String,
    bits: u64,
    budget: u64,
    mi: f64,
    over_budget: bool,
}

fn channel_eval(cfg: &RunConfig, c: &Common) -> CliResult<()> {
    let ch = cfg
        .channel
        .as_ref()
        .ok_or_else(|| CliError::config("missing [channel] table"))?;
    if ch.corpus.is_empty() {
        return Err(CliError::config("[channel] corpus must not be empty"));
    }
    let candidates = config::candidates(&ch.candidates, "channel")?;
    let budget = config::budget(&ch.budget, "channel")?;
    let paths: Vec<PathBuf> = ch.corpus.iter().map(|p| config::resolve(&c.config, p)).collect();
    let corpus = paths.iter().map(|p| read_image(p)).collect::<CliResult<Vec<_>>>()?;

    let mut table = Vec::with_capacity(candidates.len());
    for h in &candidates {
        let mut bits = 0u64;
        for y in &corpus {
            bits += bits_required(&h.apply(y)?);
        }
        table.push(ChannelRow {
            transform: h.to_string(),
            bits_required: bits as f64 / corpus.len() as f64,
            expected_preserved_info: expected_preserved_info(h, &corpus, ch.bins)?,
        });
    }

    let mut picks = Vec::with_capacity(ch.frame_times.len());
    for (k, &t) in ch.frame_times.iter().enumerate() {
        let i = k % corpus.len();
        let frame = corpus[i].clone().with_timestamp(t);
        let s = select_transform(&candidates, &frame, &budget, t, ch.bins)?;
        picks.push(SelectionRow {
            frame: k,
            t,
            image: ch.corpus[i].display().to_string(),
            transform: s.spec.to_string(),
            bits: s.bits,
            budget: s.budget,
            mi: s.mi,
            over_budget: s.over_budget,
        });
    }

    let out = Outputs::create(&c.out)?;
    out.write(
        "channel.csv",
        csv_string(&table, &["transform", "bits_required", "expected_preserved_info"]),
    )?;
    out.write(
        "selections.csv",
        csv_string(
            &picks,
            &["frame", "t", "image", "transform", "bits", "budget", "mi", "over_budget"],
        ),
    )?;
    let mut summary = String::new();
    for r in &table {
        let _ = writeln!(
            summary,
            "{:<24} {:>12} bits  {:.4} bits preserved",
            r.transform, r.bits_required, r.expected_preserved_info
        );
    }
    print!("{summary}");
    Ok(())
}

fn props(cfg: &RunConfig, c: &Common) -> CliResult<()> {
    let p = cfg.props.as_ref().ok_or_else(|| CliError::config("missing [props] table"))?;
    let axes = p.axes()?;
    let map = cfg.interface_map()?;
    let ops = cfg.bounds.operator()?;
    let mut reports = map_reports(&map, &ops, &axes, p.samples, cfg.rng_seed, p.tolerance)
        .map_err(|e| CliError::config(format!("[props] {e}")))?;
    if let Some(cp) = &p.completeness {
        let robot = cfg.bounds.robot()?;
        let r = completeness_check(&map, &ops, &robot, cp.pairs, cp.horizon, &cp.grid, cfg.rng_seed)
            .map_err(|e| CliError::config(format!("[props.completeness] {e}")))?;
        reports.push(r);
    }
    let out = Outputs::create(&c.out)?;
    out.write(
        "props.csv",
        csv_string(&reports, &["principle", "detail", "passed", "statistic", "threshold", "samples"]),
    )?;
    let mut json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    json.push('\n');
    out.write("props.json", json)?;
    let width = reports.iter().map(|r| r.detail.len()).max().unwrap_or(0);
    for r in &reports {
        println!(
            "{:<13} {:<width$} {}  statistic {:e} (threshold {:e})",
            serde_json::to_value(r.principle).expect("enum").as_str().unwrap_or(""),
            r.detail,
            if r.passed { "pass" } else { "FAIL" },
            r.statistic,
            r.threshold
        );
    }
    Ok(())
}

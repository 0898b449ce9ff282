use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bfp::gradcheck::{self, CheckResult};
use bfp::harness::store::{self, METRICS_FILE};
use bfp::harness::{evaluate, train_toy, EvalReport, MetricsReport, ToyConfig};
use bfp::labels::{class_fraction, generate_boundary_labels, read_pgm, write_pgm, LabelMap};
use bfp::scan::{
    count_steps, render_mask, run_bench, BenchRow, DagDirection, ProbeGate, ProbeSetup,
    TABLE_UAG_LOOPS,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_IO: u8 = 3;

/// Boundary-aware feature propagation: labels, scans, toy training.
#[derive(Debug, Parser)]
#[command(name = "bfp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Relabel pixels near a class boundary as the extra boundary class.
    GenLabels(GenLabels),
    /// Time the DAG and UAG scan suites.
    Bench(Bench),
    /// Print which input pixels influence a probe pixel.
    Influence(Influence),
    /// Train the toy model on synthetic scenes.
    TrainToy(TrainToy),
    /// Evaluate a trained model directory on a scene directory.
    Eval(Eval),
    /// Finite-difference checks of every backward pass.
    Gradcheck(Gradcheck),
}

#[derive(Debug, Args, Serialize)]
struct GenLabels {
    /// Input label map (binary PGM).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pixels strictly closer than this to a different label become boundary.
    #[arg(long, default_value_t = 9.0)]
    radius: f64,
    #[arg(long, default_value_t = 255)]
    ignore: u16,
    /// Number of classes; one past the largest label when omitted.
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct Bench {
    /// Feature-map sizes as WxH, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "60x45,120x90", value_parser = parse_size)]
    sizes: Vec<(usize, usize)>,
    #[arg(long, default_value_t = 32)]
    channels: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Timed repetitions; the fastest is reported.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Family {
    Uag,
    Dag,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DirArg {
    Se,
    Sw,
    Ne,
    Nw,
    All,
}

impl DirArg {
    fn directions(self) -> Vec<DagDirection> {
        match self {
            DirArg::Se => vec![DagDirection::SE],
            DirArg::Sw => vec![DagDirection::SW],
            DirArg::Ne => vec![DagDirection::NE],
            DirArg::Nw => vec![DagDirection::NW],
            DirArg::All => DagDirection::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct Influence {
    /// Grid size as HxW.
    #[arg(long, default_value = "8x8", value_parser = parse_size)]
    size: (usize, usize),
    /// Probe pixel as row,col.
    #[arg(long, default_value = "0,0", value_parser = parse_probe)]
    probe: (usize, usize),
    #[arg(long, value_enum, default_value_t = Family::Both)]
    variant: Family,
    #[arg(long, value_enum, default_value_t = DirArg::All)]
    direction: DirArg,
    #[arg(long, value_enum, default_value_t = GateArg::Open)]
    gate: GateArg,
    /// Compare the two families at every probe, not just --probe.
    #[arg(long)]
    all_probes: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GateArg {
    Open,
    Closed,
}

#[derive(Debug, Args)]
struct TrainToy {
    /// JSON config; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured step count.
    #[arg(long)]
    steps: Option<usize>,
    /// Overrides the configured model seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args, Serialize)]
struct Eval {
    #[arg(long)]
    model: PathBuf,
    /// Scene directory; `<model>/eval` when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// A metrics.json or eval report the result must reproduce exactly.
    #[arg(long)]
    expect: Option<PathBuf>,
    /// Where to write the eval report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("which").required(true).args(["all", "op"])))]
struct Gradcheck {
    /// Run every check.
    #[arg(long)]
    all: bool,
    /// Run one named check.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(gradcheck::CHECKS))]
    op: Option<String>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Verify(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Verify(_) => EXIT_VERIFY,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Verify(m) | Failure::Io(m) => m,
        }
    }
}

impl From<bfp::Error> for Failure {
    fn from(e: bfp::Error) -> Self {
        match e {
            bfp::Error::Io(_) | bfp::Error::Json(_) | bfp::Error::Format { .. } => {
                Failure::Io(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected AxB, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    if a == 0 || b == 0 {
        return Err(format!("{s:?}: extents must be positive"));
    }
    Ok((a, b))
}

fn parse_probe(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected row,col, got {s:?}"))?;
    Ok((
        a.trim().parse().map_err(|e| format!("{s:?}: {e}"))?,
        b.trim().parse().map_err(|e| format!("{s:?}: {e}"))?,
    ))
}

fn print_config<T: Serialize>(value: &T) -> Result<(), Failure> {
    let json = serde_json::to_string(value).map_err(|e| Failure::Io(e.to_string()))?;
    println!("config: {json}");
    Ok(())
}

fn with_threads<R: Send>(n: usize, f: impl FnOnce() -> R + Send) -> Result<R, Failure> {
    if n == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        if n > 1 {
            eprintln!("warning: built without the parallel feature, running on one thread");
        }
        Ok(f())
    }
}

fn gen_labels(a: &GenLabels) -> Result<(), Failure> {
    print_config(a)?;
    let file = fs::File::open(&a.input).map_err(io_err(&a.input))?;
    let pgm = read_pgm(&mut BufReader::new(file))?;
    let labels = LabelMap::from_pgm(&pgm, a.classes, a.ignore)?;
    let out = generate_boundary_labels(&labels, a.radius)?;
    let file = fs::File::create(&a.out).map_err(io_err(&a.out))?;
    let mut w = BufWriter::new(file);
    write_pgm(&mut w, &out.to_pgm())?;
    w.flush().map_err(io_err(&a.out))?;
    let fraction = class_fraction(&out, labels.num_classes() as u16);
    println!(
        "boundary class {}: fraction {fraction:.6}",
        labels.num_classes()
    );
    Ok(())
}

fn bench(a: &Bench) -> Result<(), Failure> {
    print_config(a)?;
    let mut header = vec![format!(
        "# uag steps = 2H + 4W; the published table lists {} for 60x45 and {} for 120x90",
        TABLE_UAG_LOOPS[0].3, TABLE_UAG_LOOPS[1].3
    )];
    for &(w, h, dag, uag) in &TABLE_UAG_LOOPS {
        let t = count_steps(h, w)?;
        header.push(format!(
            "# {w}x{h}: dag {} (published {dag}), uag {} (published {uag})",
            t.dag_total, t.uag_total
        ));
    }
    let rows = with_threads(a.threads, || {
        run_bench(&a.sizes, a.channels, a.reps, a.seed)
    })??;
    for (w, h) in &a.sizes {
        let t = count_steps(*h, *w)?;
        let pick = |v: &str| {
            rows.iter()
                .find(|r| r.resolution == format!("{w}x{h}") && r.variant.to_string() == v)
        };
        if let (Some(d), Some(u)) = (pick("dag"), pick("uag")) {
            if d.sequential_steps != t.dag_total || u.sequential_steps != t.uag_total {
                return Err(Failure::Verify(format!(
                    "{w}x{h}: recorded steps disagree with count_steps"
                )));
            }
            println!(
                "{w}x{h}: uag {:.2}x faster than dag",
                d.wall_clock_ms / u.wall_clock_ms
            );
        }
    }
    let mut csv = header.join("\n") + "\n" + BenchRow::CSV_HEADER + "\n";
    for r in &rows {
        csv += &r.to_csv();
        csv.push('\n');
    }
    match &a.out {
        Some(p) => fs::write(p, csv).map_err(io_err(p))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn influence(a: &Influence) -> Result<(), Failure> {
    print_config(a)?;
    let (h, w) = a.size;
    if a.probe.0 >= h || a.probe.1 >= w {
        return Err(Failure::Usage(format!(
            "probe {:?} outside {h}x{w}",
            a.probe
        )));
    }
    let gate = match a.gate {
        GateArg::Open => ProbeGate::Open,
        GateArg::Closed => ProbeGate::Closed,
    };
    let setup = ProbeSetup::new(h, w, gate, a.seed)?;
    let mut differ = false;
    for dir in a.direction.directions() {
        let uag = matches!(a.variant, Family::Uag | Family::Both)
            .then(|| setup.uag_mask(dir, a.probe))
            .transpose()?;
        let dag = matches!(a.variant, Family::Dag | Family::Both)
            .then(|| setup.dag_mask(dir, a.probe))
            .transpose()?;
        for (name, mask) in [("uag", &uag), ("dag", &dag)] {
            if let Some(m) = mask {
                println!(
                    "{dir:?} {name} probe {:?}: {} pixels",
                    a.probe,
                    m.iter().filter(|&&b| b).count()
                );
                print!("{}", render_mask(m, w));
            }
        }
        if let (Some(u), Some(d)) = (&uag, &dag) {
            let same = if a.all_probes {
                setup.uag_masks(dir)? == setup.dag_masks(dir)?
            } else {
                u == d
            };
            println!("{dir:?}: {}", if same { "EQUAL" } else { "DIFFER" });
            differ |= !same;
        }
    }
    if differ {
        return Err(Failure::Verify("influence masks differ".into()));
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<ToyConfig, Failure> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn train_toy_cmd(a: &TrainToy) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => ToyConfig::default(),
    };
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.model.seed = s;
    }
    print_config(&cfg)?;
    let t0 = Instant::now();
    let (model, report, log) = with_threads(a.threads, || train_toy(&cfg))??;
    eprintln!(
        "trained {} steps in {:.1}s",
        cfg.train.steps,
        t0.elapsed().as_secs_f64()
    );

    store::save_model(&a.out, &cfg, &model)?;
    store::write_json(&a.out.join(METRICS_FILE), &report)?;
    let mut csv = String::from("step,total,segmentation,boundary,lr\n");
    for i in 0..log.total.len() {
        csv += &format!(
            "{i},{},{},{},{}\n",
            log.total[i], log.segmentation[i], log.boundary[i], log.lr[i]
        );
    }
    let curve = a.out.join("loss_curve.csv");
    fs::write(&curve, csv).map_err(io_err(&curve))?;
    let d = &cfg.data;
    let scenes =
        bfp::harness::synth_dataset(d.eval_seed, d.eval_count, d.size, cfg.model.num_classes)?;
    store::save_scenes(&a.out.join("eval"), &scenes)?;
    print_summary(&report);
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

fn print_summary(r: &MetricsReport) {
    println!(
        "variant {} seed {} steps {}: loss {} -> {}, mIoU {}, boundary confidence {} on / {} off, beta {:.4}",
        r.variant,
        r.seed,
        r.steps,
        fmt_opt(r.initial_smoothed_loss),
        fmt_opt(r.final_smoothed_loss),
        fmt_opt(r.eval.miou),
        fmt_opt(r.train_boundary_confidence.on_boundary),
        fmt_opt(r.train_boundary_confidence.off_boundary),
        r.beta,
    );
    let bands: Vec<String> = r
        .eval
        .trimap
        .iter()
        .map(|b| format!("{}: {}", b.band, fmt_opt(b.miou)))
        .collect();
    println!("trimap mIoU {}", bands.join(", "));
}

fn read_expected(path: &Path) -> Result<EvalReport, Failure> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if let Ok(m) = serde_json::from_str::<MetricsReport>(&text) {
        return Ok(m.eval);
    }
    serde_json::from_str(&text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn eval(a: &Eval) -> Result<(), Failure> {
    print_config(a)?;
    let (cfg, model) = store::load_model(&a.model)?;
    let data = a.data.clone().unwrap_or_else(|| a.model.join("eval"));
    let scenes = store::load_scenes(&data, cfg.model.num_classes, cfg.model.ignore)?;
    let report = with_threads(a.threads, || {
        evaluate(&model, &scenes, &cfg.train.trimap_bands)
    })??;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Io(e.to_string()))?;
    println!("{json}");
    if let Some(p) = &a.out {
        store::write_json(p, &report)?;
    }
    if let Some(p) = &a.expect {
        if read_expected(p)? != report {
            return Err(Failure::Verify(format!(
                "report differs from {}",
                p.display()
            )));
        }
        println!("matches {}", p.display());
    }
    Ok(())
}

fn print_checks(results: &[CheckResult]) {
    println!(
        "{:<24} {:>12} {:>10} {:>6}  result",
        "check", "max rel err", "tolerance", "seeds"
    );
    for r in results {
        println!(
            "{:<24} {:>12.3e} {:>10.0e} {:>6}  {}",
            r.name,
            r.max_rel_error,
            r.tolerance,
            r.seeds,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
}

fn gradcheck_cmd(a: &Gradcheck) -> Result<(), Failure> {
    print_config(a)?;
    let t0 = Instant::now();
    let results = match &a.op {
        Some(op) => vec![gradcheck::check(op)?],
        None => gradcheck::check_all()?,
    };
    print_checks(&results);
    println!(
        "{} checks in {:.2}s",
        results.len(),
        t0.elapsed().as_secs_f64()
    );
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(Failure::Verify(format!("failed: {}", failed.join(", "))));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::GenLabels(a) => gen_labels(a),
        Command::Bench(a) => bench(a),
        Command::Influence(a) => influence(a),
        Command::TrainToy(a) => train_toy_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

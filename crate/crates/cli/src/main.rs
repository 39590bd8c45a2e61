use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use omm_core::adversary::{
    no_recourse_sequences, oblivious_lb_sequence, random_bits, recourse_one_sequence, run_adaptive, LaaksoGraph, Nesting,
};
use omm_core::decomp::Center;
use omm_core::hst::{OnlineHst, Variant as TreeVariant};
use omm_core::hst_matching::{check_hp_inward, check_inward, HeavyPathInward, Inward, TreeMatcher};
use omm_core::l2::L2Embedding;
use omm_core::light_matching::{LightMatching, TreeStrategy};
use omm_core::line_matching::{check_edges, parse_dump, LineMatching};
use omm_core::metric::{format_matrix, parse_matrix, parse_points_csv, DistanceOracle, Metric, Mode, PointId};
use omm_core::nets::PointStream;
use omm_core::oracles::{mst_cost, mwpm_bruteforce, mwpm_line, BRUTEFORCE_CAP};
use omm_core::pipeline::{make_matcher, rows_to_csv, run_rows, Algo, BenchRow, Capped, OnlineMatcher, OptMode, MAX_CAP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "omm", version, about = "Online metric embeddings and low-recourse matchings")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Input file; `-` or absent reads stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check the triangle inequality on input and run structure checkers as the command proceeds.
    #[arg(long)]
    verify: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// `id,x1,...,xd` per line.
    Csv,
    /// Lower-triangular distances, one row per point.
    Matrix,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Doubling,
    Euclidean,
}

impl From<Variant> for TreeVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Doubling => TreeVariant::Doubling,
            Variant::Euclidean => TreeVariant::Euclidean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Inward,
    Hp,
    Light,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Inward => Algo::Inward,
            AlgoArg::Hp => Algo::Hp,
            AlgoArg::Light => Algo::Light,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OptArg {
    Skip,
    Exact,
    Line,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Mwpm,
    Mst,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    /// Eight line points that defeat one deletion per pair.
    RecourseOne,
    /// Nested multiples chosen against a capped light matcher.
    Adaptive,
    /// Nested multiples fixed by random bits.
    Oblivious,
    /// Series-parallel graph with one diamond refined per level.
    Laakso,
    /// Shifted far pairs that defeat matching in arrival order.
    NoRecourse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Grid,
    Uniform,
    Line,
    Laakso,
}

#[derive(Subcommand)]
enum Cmd {
    /// Embed the input into an online tree and print it.
    EmbedHst {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Variant::Doubling)]
        variant: Variant,
    },
    /// Embed the input into Euclidean space; rows are `point_id,coordinates`.
    EmbedL2 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 64)]
        budget: u64,
        /// Print worst and mean stretch to stderr.
        #[arg(long)]
        report_distortion: bool,
    },
    /// Print `point_id,center_id` for one scale of the decomposition.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        scale: i32,
        #[arg(long, value_enum, default_value_t = Variant::Doubling)]
        variant: Variant,
    },
    /// Run an online matcher over the input, one CSV row per arriving pair.
    Match {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        algo: AlgoArg,
        #[arg(long, value_enum, default_value_t = Variant::Doubling)]
        variant: Variant,
        /// Delete at most this many edges per pair.
        #[arg(long)]
        cap: Option<u32>,
        #[arg(long, value_enum, default_value_t = OptArg::Exact)]
        opt: OptArg,
        /// Also write the per-step rows here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Exact minimum-weight perfect matching or spanning tree cost.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        what: What,
    },
    /// Emit a hard input sequence.
    LowerboundGen {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 2)]
        r: u32,
        #[arg(long, default_value_t = 8000)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ratio parameter of the recourse-one sequence.
        #[arg(long, default_value_t = 5.0)]
        k: f64,
        #[arg(long, default_value_t = 0.04)]
        eps: f64,
        /// Far-pair offset of the no-recourse sequence.
        #[arg(long, default_value_t = 1e6)]
        w: f64,
        /// Levels of the Laakso graph.
        #[arg(long, default_value_t = 4)]
        levels: u32,
    },
    /// Sweep an instance family and emit per-step rows for every seed.
    Bench {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long, value_enum)]
        algo: AlgoArg,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        cap: Option<u32>,
        #[arg(long, value_enum, default_value_t = Variant::Doubling)]
        variant: Variant,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every structure checker on an instance, or check a line-matching dump.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

fn read_input(c: &Common) -> Result<String> {
    match &c.input {
        Some(p) if p.as_os_str() != "-" => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        _ => {
            let mut s = String::new();
            std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)?;
            Ok(s)
        }
    }
}

fn load(c: &Common) -> Result<DistanceOracle> {
    let text = read_input(c)?;
    let mut o = match c.format {
        Format::Csv => parse_points_csv(&text)?,
        Format::Matrix => parse_matrix(&text)?,
    };
    if c.verify {
        o.verify_triangles()?;
        o.set_verify(true);
    }
    Ok(o)
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn center_label(c: Center) -> String {
    match c {
        Center::Point(p) => p.0.to_string(),
        Center::OriginBall => "origin".into(),
        Center::Carved(id) => format!("carved-{id}"),
        Center::Singleton(p) => format!("single-{}", p.0),
    }
}

fn opt_mode(o: OptArg) -> OptMode {
    match o {
        OptArg::Skip => OptMode::Skip,
        OptArg::Exact => OptMode::Exact,
        OptArg::Line => OptMode::Line,
    }
}

fn matcher(algo: AlgoArg, mode: Mode, variant: Variant, seed: u64, cap: Option<u32>) -> Result<Box<dyn OnlineMatcher>> {
    let inner = make_matcher(algo.into(), mode, variant.into(), seed);
    Ok(match cap {
        Some(c) if c > MAX_CAP => bail!("cap {c} exceeds {MAX_CAP}"),
        Some(c) => Box::new(Capped::new(inner, c)),
        None => inner,
    })
}

fn line_points_csv(xs: &[f64]) -> String {
    let mut s = String::from("id,x\n");
    for (i, x) in xs.iter().enumerate() {
        s.push_str(&format!("{},{x}\n", i + 1));
    }
    s
}

fn family(f: Family, n: usize, seed: u64) -> DistanceOracle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match f {
        Family::Grid => {
            let side = (n as f64).sqrt().ceil() as usize;
            let mut cells: Vec<(usize, usize)> = (0..side * side).map(|k| (k % side, k / side)).collect();
            rand::seq::SliceRandom::shuffle(&mut cells[..], &mut rng);
            let pts: Vec<Vec<f64>> = cells[..n].iter().map(|&(x, y)| vec![x as f64, y as f64]).collect();
            DistanceOracle::from_points(2, &pts).expect("grid points")
        }
        Family::Uniform => {
            let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
            DistanceOracle::from_points(2, &pts).expect("uniform points")
        }
        Family::Line => {
            let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1e3)]).collect();
            DistanceOracle::from_points(1, &pts).expect("line points")
        }
        Family::Laakso => {
            let levels = ((n.max(6) - 2) / 4) as u32;
            LaaksoGraph::build(levels, &mut rng).oracle()
        }
    }
}

fn require_even(o: &DistanceOracle) -> Result<()> {
    if o.len() % 2 == 1 {
        bail!("points arrive in pairs; the input has an odd count ({})", o.len());
    }
    Ok(())
}

/// Runs every checker that applies to a point instance; returns one line per check.
fn verify_instance(o: &DistanceOracle, seed: u64) -> Result<Vec<String>> {
    let mut report = Vec::new();
    o.verify_triangles()?;
    report.push(format!("metric: {} points, triangle inequality holds", o.len()));
    let variants: &[TreeVariant] = match o.mode() {
        Mode::Euclidean { .. } => &[TreeVariant::Doubling, TreeVariant::Euclidean],
        Mode::Matrix => &[TreeVariant::Doubling],
    };
    for &v in variants {
        let mut h = OnlineHst::new(o.empty_like(), v, seed, 0);
        let mut inw = Inward::new(&h.tree);
        let mut hp = HeavyPathInward::new(&h.tree);
        let mut active = HashSet::new();
        for p in o.ids() {
            h.append(o.payload_of(p))?;
            let x = p.idx() as u32;
            inw.insert(&h.tree, x);
            hp.insert(&h.tree, x);
            active.insert(x);
            if x % 2 == 1 {
                inw.end_step();
                hp.end_step();
            }
            h.tree.check().map_err(|e| anyhow::anyhow!("tree ({v:?}): {e}"))?;
            check_inward(&h.tree, &active, &inw.matching().edges()).map_err(|e| anyhow::anyhow!("inward ({v:?}): {e}"))?;
            check_hp_inward(&h.tree, &active, &hp.matching().edges())
                .map_err(|e| anyhow::anyhow!("heavy-path inward ({v:?}): {e}"))?;
        }
        for a in 0..o.len() {
            for b in 0..a {
                let du = h.tree.hst_distance(PointId::from_idx(a), PointId::from_idx(b))?;
                if du < o.dist(a, b) {
                    bail!("tree ({v:?}) contracts pair ({}, {})", a + 1, b + 1);
                }
            }
        }
        report.push(format!("tree ({v:?}): structure, domination, inward and heavy-path inward matchings hold"));
    }
    let mut light = LightMatching::new(TreeStrategy::Greedy);
    for x in 0..o.len() as u32 {
        light.insert(o, x);
        light.check(o).map_err(|e| anyhow::anyhow!("light matching: {e}"))?;
    }
    report.push("light matching: tour, path and matching agree".into());
    let mut lm = LineMatching::new();
    let mut root = None;
    // Points enter in order of distance from the first point.
    for i in 0..o.len() {
        let pos = (0..i).filter(|&q| o.dist(0, q) < o.dist(0, i)).count();
        let h = lm.insert_point(root, pos, i as u32)?;
        lm.check(h)?;
        root = Some(h);
    }
    report.push("line matching: invariants hold after every insertion".into());
    Ok(report)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::EmbedHst { common, variant } => {
            let o = load(&common)?;
            let h = OnlineHst::embed(&o, variant.into(), common.seed, 0);
            if common.verify {
                h.tree.check().map_err(anyhow::Error::msg)?;
            }
            write_out(&common.out, &h.tree.export())
        }
        Cmd::EmbedL2 { common, budget, report_distortion } => {
            let o = load(&common)?;
            let e = L2Embedding::new(PointStream::new(o), common.seed, budget)?;
            let dim = e.vectors().iter().map(Vec::len).max().unwrap_or(0);
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["point_id".to_string()];
            header.extend((1..=dim).map(|k| format!("y{k}")));
            w.write_record(&header)?;
            for (i, y) in e.vectors().iter().enumerate() {
                let mut rec = vec![(i + 1).to_string()];
                rec.extend((0..dim).map(|k| y.get(k).copied().unwrap_or(0.0).to_string()));
                w.write_record(&rec)?;
            }
            if report_distortion {
                let r = e.distortion();
                eprintln!("worst {} mean_stretch {} max_stretch {} min_stretch {}", r.worst, r.mean_stretch, r.max_stretch, r.min_stretch);
            }
            write_out(&common.out, &String::from_utf8(w.into_inner()?)?)
        }
        Cmd::Decompose { common, scale, variant } => {
            let o = load(&common)?;
            let mut h = OnlineHst::embed(&o, variant.into(), common.seed, 0);
            let mut s = String::from("point_id,center_id\n");
            for x in 0..o.len() as u32 {
                s.push_str(&format!("{},{}\n", x + 1, center_label(h.cluster_key(x, scale))));
            }
            write_out(&common.out, &s)
        }
        Cmd::Match { common, algo, variant, cap, opt, log } => {
            let o = load(&common)?;
            require_even(&o)?;
            let mut m = matcher(algo, o.mode(), variant, common.seed, cap)?;
            let rows = run_rows(m.as_mut(), &o, opt_mode(opt), common.seed)?;
            if common.verify {
                if let Some(c) = cap {
                    if let Some(r) = rows.iter().find(|r| r.deletions > c) {
                        bail!("step {} deleted {} edges, cap {c}", r.step, r.deletions);
                    }
                }
                verify_instance(&o, common.seed)?;
            }
            let text = rows_to_csv(&rows);
            if let Some(p) = log {
                fs::write(&p, &text).with_context(|| format!("writing {}", p.display()))?;
            }
            write_out(&common.out, &text)
        }
        Cmd::Oracle { common, what } => {
            let o = load(&common)?;
            let idx: Vec<usize> = (0..o.len()).collect();
            let text = match what {
                What::Mst => format!("mst,{}\n", mst_cost(&o, &idx)),
                What::Mwpm => {
                    require_even(&o)?;
                    let res = match o.mode() {
                        Mode::Euclidean { dim: 1 } if o.len() > BRUTEFORCE_CAP => {
                            let xs: Vec<f64> = o.ids().map(|p| o.coords(p).expect("coordinates")[0]).collect();
                            mwpm_line(&xs)?
                        }
                        _ => mwpm_bruteforce(&o, &idx)?,
                    };
                    let mut s = format!("mwpm,{}\n", res.cost);
                    for (a, b) in res.matching {
                        s.push_str(&format!("{},{}\n", a + 1, b + 1));
                    }
                    s
                }
            };
            write_out(&common.out, &text)
        }
        Cmd::LowerboundGen { kind, r, n, seed, out, k, eps, w, levels } => {
            let text = match kind {
                Kind::RecourseOne => line_points_csv(&recourse_one_sequence(k, eps)?),
                Kind::NoRecourse => {
                    let (a, b) = no_recourse_sequences(n, w, eps, 1.0);
                    let mut s = String::from("sequence,id,x\n");
                    for (tag, seq) in [("a", &a), ("b", &b)] {
                        for (i, x) in seq.iter().enumerate() {
                            s.push_str(&format!("{tag},{},{x}\n", i + 1));
                        }
                    }
                    s
                }
                Kind::Oblivious => {
                    let nest = Nesting::new(r, n)?;
                    let bits = random_bits(nest.k.saturating_sub(1) as usize, &mut ChaCha8Rng::seed_from_u64(seed));
                    line_points_csv(&oblivious_lb_sequence(r, n, &bits)?)
                }
                Kind::Adaptive => {
                    let mut m = matcher(AlgoArg::Light, Mode::Euclidean { dim: 1 }, Variant::Doubling, seed, Some(r))?;
                    let rep = run_adaptive(m.as_mut(), r, n)?;
                    for c in &rep.certificates {
                        eprintln!(
                            "round {} {:?}: witness {} threshold {} {}",
                            c.round,
                            c.case,
                            c.witness,
                            c.threshold,
                            if c.holds { "holds" } else { "FAILS" }
                        );
                    }
                    eprintln!("final weight {} floor {} diameter {}", rep.final_weight, rep.weight_floor, rep.diameter);
                    let o = m.oracle();
                    let xs: Vec<f64> = o.ids().map(|p| o.coords(p).expect("coordinates")[0]).collect();
                    line_points_csv(&xs)
                }
                Kind::Laakso => format_matrix(&LaaksoGraph::build(levels, &mut ChaCha8Rng::seed_from_u64(seed)).oracle()),
            };
            write_out(&out, &text)
        }
        Cmd::Bench { family: fam, algo, n, seeds, seed, cap, variant, out } => {
            let mut rows: Vec<BenchRow> = Vec::new();
            for s in seed..seed + seeds {
                let o = family(fam, n, s);
                let n_even = o.len() - o.len() % 2;
                let src = match o.mode() {
                    Mode::Euclidean { dim } => {
                        let pts: Vec<Vec<f64>> =
                            o.ids().take(n_even).map(|p| o.coords(p).expect("coordinates").to_vec()).collect();
                        DistanceOracle::from_points(dim, &pts)?
                    }
                    Mode::Matrix => DistanceOracle::from_metric(&Prefix(&o, n_even)),
                };
                let opt = match (src.mode(), n_even <= BRUTEFORCE_CAP) {
                    (Mode::Euclidean { dim: 1 }, _) => OptMode::Line,
                    (_, true) => OptMode::Exact,
                    _ => OptMode::Skip,
                };
                let mut m = matcher(algo, src.mode(), variant, s, cap)?;
                rows.extend(run_rows(m.as_mut(), &src, opt, s)?);
            }
            write_out(&out, &rows_to_csv(&rows))
        }
        Cmd::Verify { common } => {
            let text = read_input(&common)?;
            if text.trim_start().starts_with("# m=") {
                let (m, edges) = parse_dump(&text).map_err(anyhow::Error::msg)?;
                check_edges(m, &edges, true)?;
                write_out(&common.out, &format!("line matching dump: {m} points, {} edges, invariants hold\n", edges.len()))
            } else {
                let o = match common.format {
                    Format::Csv => parse_points_csv(&text)?,
                    Format::Matrix => parse_matrix(&text)?,
                };
                let report = verify_instance(&o, common.seed)?;
                write_out(&common.out, &(report.join("\n") + "\n"))
            }
        }
    }
}

/// The first `n` points of a metric.
struct Prefix<'a>(&'a DistanceOracle, usize);

impl Metric for Prefix<'_> {
    fn len(&self) -> usize {
        self.1
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        self.0.dist(a, b)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

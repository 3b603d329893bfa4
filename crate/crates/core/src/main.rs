use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;

use stacklab::harness::experiment::{ExperimentParams, RuleRef};
use stacklab::harness::report::{emit_reports_json, BuildReport, TranslateReport};
use stacklab::harness::{
    emit_report, parse_experiment, run_batch, run_experiment, Experiment, Format, HarnessError, Mode, Report,
};
use stacklab::ratio::parse_ratio;
use stacklab::{Cell, ExponentVector, Rectangle, Rule, PAPER_PRESET};

#[derive(Parser)]
#[command(name = "stacklab", version, about = "Exact experiments with rank-one cutting and stacking")]
struct Cli {
    /// Rule preset name or path to a JSON rule file.
    #[arg(long, global = true, default_value = PAPER_PRESET)]
    rule: String,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Heights, widths, measures and stacking layouts of C_1..C_n.
    Build {
        #[arg(long, default_value_t = 5)]
        stage: u32,
    },
    /// Image of a union of levels under T^m (negative m resolves preimages).
    Translate {
        #[arg(long = "cell", value_parser = parse_cell, required = true)]
        cells: Vec<Cell>,
        #[arg(long, allow_hyphen_values = true)]
        power: i64,
        #[arg(long, default_value_t = 16)]
        depth: u32,
    },
    /// Pieces of T^{l h_n + extra} L in the leftmost subcolumn.
    Crescent {
        #[arg(long, value_parser = parse_cell)]
        cell: Cell,
        #[arg(long, default_value_t = 1)]
        ell: u64,
        #[arg(long, default_value_t = 0)]
        extra: u64,
        #[arg(long)]
        depth: Option<u32>,
    },
    /// Fractions of (1 - delta)-full sub-rectangles at each stage up to --stage.
    DoubleApprox {
        #[arg(long, value_parser = parse_rect)]
        rect: Rectangle,
        #[arg(long = "a", value_parser = parse_rect, required = true)]
        a: Vec<Rectangle>,
        #[arg(long)]
        stage: u32,
        #[arg(long, value_parser = parse_rational)]
        delta: BigRational,
        #[arg(long, value_parser = parse_rational)]
        tau: Option<BigRational>,
    },
    /// Witness recipe for T^{k_1} x ... x T^{k_r}, or a brute-force minimal H.
    Witness(WitnessArgs),
    /// Compare the symbolic engine with explicit interval tables.
    OracleCheck {
        #[arg(long, default_value_t = 4)]
        stage: u32,
        #[arg(long, default_value_t = 20)]
        m_max: u64,
    },
    /// Draw C_n with highlighted cells.
    Render {
        #[arg(long)]
        stage: u32,
        #[arg(long = "highlight", value_parser = parse_cell)]
        highlight: Vec<Cell>,
        /// Highlight the crescent of this level.
        #[arg(long, value_parser = parse_cell)]
        crescent: Option<Cell>,
        #[arg(long, default_value_t = 1)]
        ell: u64,
    },
    /// Run experiment files; several files run concurrently.
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct WitnessArgs {
    /// Comma-separated nonzero exponents.
    #[arg(long, value_parser = parse_exponents, allow_hyphen_values = true)]
    k: ExponentVector,
    #[arg(long = "a", value_parser = parse_rect, required = true)]
    a: Vec<Rectangle>,
    #[arg(long = "b", value_parser = parse_rect, required = true)]
    b: Vec<Rectangle>,
    #[arg(long)]
    minimal: bool,
    #[arg(long, default_value_t = 64)]
    h_max: u64,
    /// Extra stages the approximation search may use.
    #[arg(long)]
    depth: Option<u32>,
}

fn parse_cell(s: &str) -> Result<Cell, String> {
    let (n, j) = s
        .split_once(',')
        .ok_or_else(|| format!("expected n,j but got {s:?}"))?;
    let n: u32 = n.trim().parse().map_err(|e| format!("stage: {e}"))?;
    let j: num_bigint::BigUint = j.trim().parse().map_err(|e| format!("index: {e}"))?;
    Ok(Cell::new(n, j))
}

/// Cells `n,j` joined by `x`, e.g. `2,0x2,1`.
fn parse_rect(s: &str) -> Result<Rectangle, String> {
    s.split(['x', ';'])
        .map(parse_cell)
        .collect::<Result<Vec<_>, _>>()
        .map(Rectangle)
}

fn parse_rational(s: &str) -> Result<BigRational, String> {
    parse_ratio(s).map_err(|e| e.to_string())
}

fn parse_exponents(s: &str) -> Result<ExponentVector, String> {
    let k = s
        .split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    ExponentVector::new(k).map_err(|e| e.to_string())
}

fn load_rule(arg: &str) -> Result<RuleRef, HarnessError> {
    if arg == PAPER_PRESET {
        return Ok(RuleRef::Preset(arg.to_string()));
    }
    let text = std::fs::read_to_string(arg)
        .map_err(|e| HarnessError::Config(format!("cannot read rule file {arg}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn format_of(out: OutFormat) -> Format {
    match out {
        OutFormat::Json => Format::Json,
        OutFormat::Csv => Format::Csv,
        OutFormat::Text => Format::Text,
    }
}

fn experiment(rule: RuleRef, mode: Mode) -> Experiment {
    Experiment {
        rule,
        mode,
        exponents: None,
        a: Vec::new(),
        b: Vec::new(),
        target: None,
        params: ExperimentParams::default(),
    }
}

fn run(cli: Cli) -> Result<Vec<Report>, HarnessError> {
    let rule_ref = load_rule(&cli.rule)?;
    let rule = || rule_ref.resolve();
    let report = match cli.command {
        Command::Build { stage } => Report::Build(BuildReport::new(&rule()?, stage)?),
        Command::Translate { cells, power, depth } => {
            let rule: Rule = rule()?;
            let source = rule.try_cell_set(cells)?;
            Report::Translate(TranslateReport::new(&rule, source, power, depth))
        }
        Command::Crescent { cell, ell, extra, depth } => {
            let mut x = experiment(rule_ref, Mode::Crescent);
            x.target = Some(Rectangle(vec![cell]));
            x.params.ell = Some(ell);
            x.params.extra = Some(extra);
            x.params.depth = depth;
            run_experiment(&x)?
        }
        Command::DoubleApprox { rect, a, stage, delta, tau } => {
            let mut x = experiment(rule_ref, Mode::DoubleApprox);
            x.target = Some(rect);
            x.a = a;
            x.params.stage = Some(stage);
            x.params.delta = Some(delta);
            x.params.tau = tau;
            run_experiment(&x)?
        }
        Command::Witness(w) => {
            let mode = if w.minimal { Mode::MinimalWitness } else { Mode::WitnessRecipe };
            let mut x = experiment(rule_ref, mode);
            x.exponents = Some(w.k);
            x.a = w.a;
            x.b = w.b;
            x.params.h_max = Some(w.h_max);
            x.params.depth = w.depth;
            run_experiment(&x)?
        }
        Command::OracleCheck { stage, m_max } => {
            let mut x = experiment(rule_ref, Mode::OracleCheck);
            x.params.stage = Some(stage);
            x.params.m_max = Some(m_max);
            run_experiment(&x)?
        }
        Command::Render { stage, highlight, crescent, ell } => {
            let rule = rule()?;
            let mut sets = Vec::new();
            if !highlight.is_empty() {
                sets.push(("cells".to_string(), rule.try_cell_set(highlight)?));
            }
            if let Some(source) = crescent {
                rule.check_cell(&source)?;
                let c = rule.crescent(&source, ell, 0, source.stage + ell as u32 + 4)?;
                let pieces = rule.cell_set(c.pieces.into_iter().flat_map(|p| p.cells));
                sets.push((format!("crescent {source}"), pieces));
            }
            Report::Render(rule.render_tower(stage, &sets)?)
        }
        Command::Run { files } => {
            let mut xs = Vec::with_capacity(files.len());
            for f in &files {
                let text = std::fs::read_to_string(f)
                    .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", f.display())))?;
                xs.push(parse_experiment(&text)?);
            }
            return run_batch(&xs).into_iter().collect();
        }
    };
    Ok(vec![report])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = format_of(cli.out);
    let reports = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let text = match (format, reports.as_slice()) {
        (Format::Json, [one]) => emit_report(one, format),
        (Format::Json, many) => Ok(emit_reports_json(many)),
        (_, many) => many
            .iter()
            .map(|r| emit_report(r, format))
            .collect::<Result<Vec<_>, _>>()
            .map(|parts| parts.concat()),
    };
    match text {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    }
    if reports.iter().all(Report::passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

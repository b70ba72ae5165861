//! Command-line front end: verify, kernel dump, attack, bench, gen-fixture.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kernelverify::bench::{rows_to_csv, run_bench, BenchError, BenchmarkManifest};
use kernelverify::encode::{build_augmented, separate_convolution};
use kernelverify::fixture::{gen_fixture, FixtureArch, FixtureMode, FixtureSpec, ImageStyle};
use kernelverify::jsonfmt::kernel_dump;
use kernelverify::kernel::{BlurAngle, KernelFamily, KernelSpec};
use kernelverify::network::{load_network, save_network};
use kernelverify::verify::{attack, PropertyFile, VerifyError};
use kernelverify::{Method, VerdictStatus, VerifyConfig};

const EX_USAGE: u8 = 64;
const EX_DATAERR: u8 = 65;
const EX_NOINPUT: u8 = 66;
const EX_IOERR: u8 = 74;

#[derive(Parser)]
#[command(
    name = "kernelverify",
    version,
    about = "Certify or refute network robustness against parameterised convolutional perturbations",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide one verification query.
    Verify(VerifyArgs),
    /// Kernel inspection.
    Kernel {
        #[command(subcommand)]
        command: KernelCommand,
    },
    /// Run only the sampling attack over the full strength domain.
    Attack(AttackArgs),
    /// Sweep a benchmark manifest and emit a CSV.
    Bench(BenchArgs),
    /// Generate a deterministic network + property fixture.
    GenFixture(GenFixtureArgs),
}

#[derive(Subcommand)]
enum KernelCommand {
    /// Print a parameterised kernel (or its evaluation at a given z) as JSON.
    Dump(KernelDumpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Param,
    Baseline,
}

impl From<MethodArg> for Method {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Param => Method::Param,
            MethodArg::Baseline => Method::Baseline,
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Network JSON file.
    #[arg(long)]
    network: PathBuf,
    /// Property JSON file.
    #[arg(long)]
    property: PathBuf,
    /// Verification method.
    #[arg(long, value_enum, default_value = "param")]
    method: MethodArg,
    /// Per-query timeout in seconds (overrides the property file).
    #[arg(long)]
    timeout: Option<f64>,
    /// Worker threads for branch-and-bound waves.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Also write the verdict JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Permit even kernel sizes.
    #[arg(long)]
    allow_even: bool,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    property: PathBuf,
    /// Maximum forward evaluations.
    #[arg(long, default_value_t = 1000)]
    budget: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    allow_even: bool,
}

#[derive(Args)]
struct KernelDumpArgs {
    /// box-blur, sharpen or motion-blur.
    #[arg(long)]
    family: String,
    #[arg(long)]
    size: usize,
    /// Blur angle in degrees (motion-blur only).
    #[arg(long)]
    angle: Option<u32>,
    /// Evaluate the kernel at this strength instead of dumping A and B.
    #[arg(long)]
    z: Option<f64>,
    #[arg(long)]
    allow_even: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    allow_even: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Random,
    Flip,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Dense,
    Conv,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Smooth,
    HighContrast,
}

#[derive(Args)]
struct GenFixtureArgs {
    /// RNG seed; the KERNELVERIFY_SEED environment variable overrides this.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    mode: ModeArg,
    /// Directory receiving network.json and property.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Input shape as channels,height,width.
    #[arg(long, default_value = "1,8,8")]
    input_shape: String,
    /// Hidden layer widths, comma separated (empty for a linear model).
    #[arg(long, default_value = "16")]
    hidden: String,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, value_enum, default_value = "dense")]
    arch: ArchArg,
    #[arg(long, value_enum, default_value = "smooth")]
    image_style: StyleArg,
    /// Draw the image-facing layer from a low-frequency spatial basis.
    #[arg(long)]
    smooth_first_layer: bool,
    /// Shrink the clean-image logit gap to this value (random mode).
    #[arg(long)]
    margin: Option<f64>,
    /// Strength at which the class flips (flip mode).
    #[arg(long, default_value_t = 0.5)]
    flip_at: f64,
    #[arg(long, default_value = "box-blur")]
    family: String,
    #[arg(long, default_value_t = 3)]
    size: usize,
    #[arg(long)]
    angle: Option<u32>,
    /// Upper strength bound recorded in the property.
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    #[arg(long, default_value_t = 60.0)]
    timeout_s: f64,
    #[arg(long, default_value = "fixture")]
    name: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // keep clap's rendering but use the conventional usage exit code;
            // --help and --version print to stdout and are not usage errors
            let is_usage_error = err.use_stderr();
            let _ = err.print();
            return if is_usage_error {
                ExitCode::from(EX_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

#[derive(Debug)]
struct CliError {
    message: String,
    code: u8,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        self.code
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EX_DATAERR,
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(err: VerifyError) -> Self {
        let code = match &err {
            VerifyError::Io { source, .. } => io_code(source),
            VerifyError::Network(net) => return CliError::from_network(net, &err),
            _ => EX_DATAERR,
        };
        Self {
            message: err.to_string(),
            code,
        }
    }
}

impl From<kernelverify::network::NetworkError> for CliError {
    fn from(err: kernelverify::network::NetworkError) -> Self {
        CliError::from_network(&err, &err)
    }
}

impl From<BenchError> for CliError {
    fn from(err: BenchError) -> Self {
        let code = match &err {
            BenchError::Io { source, .. } => io_code(source),
            BenchError::Network(net) => return CliError::from_network(net, &err),
            BenchError::Verify(v) => return CliError::from(clone_message(v)),
            _ => EX_DATAERR,
        };
        Self {
            message: err.to_string(),
            code,
        }
    }
}

fn clone_message(err: &VerifyError) -> VerifyError {
    // VerifyError is not Clone; re-wrap the rendered message with the same
    // classification for exit-code purposes.
    match err {
        VerifyError::Io { path, source } => VerifyError::Io {
            path: path.clone(),
            source: std::io::Error::new(source.kind(), source.to_string()),
        },
        other => VerifyError::Parse {
            path: String::new(),
            message: other.to_string(),
        },
    }
}

impl CliError {
    fn from_network(
        net: &kernelverify::network::NetworkError,
        rendered: &dyn std::fmt::Display,
    ) -> Self {
        let code = match net {
            kernelverify::network::NetworkError::Io { source, .. } => io_code(source),
            _ => EX_DATAERR,
        };
        Self {
            message: rendered.to_string(),
            code,
        }
    }
}

fn io_code(err: &std::io::Error) -> u8 {
    if err.kind() == std::io::ErrorKind::NotFound {
        EX_NOINPUT
    } else {
        EX_IOERR
    }
}

fn write_output(path: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    if let Some(path) = path {
        std::fs::write(path, content).map_err(|e| CliError {
            message: format!("cannot write {}: {e}", path.display()),
            code: EX_IOERR,
        })?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Kernel {
            command: KernelCommand::Dump(args),
        } => cmd_kernel_dump(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Bench(args) => cmd_bench(args),
        Command::GenFixture(args) => cmd_gen_fixture(args),
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, CliError> {
    let network = load_network(&args.network)?;
    let property = PropertyFile::load(&args.property)?;
    let query = property.into_query(
        network,
        args.method.into(),
        args.timeout.map(Duration::from_secs_f64),
    )?;
    let config = VerifyConfig {
        workers: args.workers.max(1),
        allow_even: args.allow_even,
        ..VerifyConfig::default()
    };
    let verdict = kernelverify::verify(&query, &config)?;
    let json = verdict.to_json();
    println!("{json}");
    write_output(&args.out, &json)?;
    Ok(match verdict.status {
        VerdictStatus::Safe => ExitCode::from(0),
        VerdictStatus::Unsafe => ExitCode::from(1),
        VerdictStatus::Undecided => ExitCode::from(2),
    })
}

fn cmd_kernel_dump(args: KernelDumpArgs) -> Result<ExitCode, CliError> {
    let family = parse_family_args(&args.family, args.angle)?;
    let spec = KernelSpec {
        family,
        size: args.size,
    };
    let kernel = spec.build(args.allow_even).map_err(|e| CliError::data(e.to_string()))?;
    let json = kernel_dump(&kernel, args.z);
    println!("{json}");
    write_output(&args.out, &json)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_attack(args: AttackArgs) -> Result<ExitCode, CliError> {
    let network = load_network(&args.network)?;
    let property = PropertyFile::load(&args.property)?;
    let query = property.into_query(network, Method::Param, None)?;
    let kernel = query
        .kernel
        .build(args.allow_even)
        .map_err(|e| CliError::data(e.to_string()))?;
    let encoded = separate_convolution(&query.image, &kernel)
        .map_err(|e| CliError::data(e.to_string()))?;
    let aug = build_augmented(&query.network, &encoded)
        .map_err(|e| CliError::data(e.to_string()))?;
    let witness = attack(&aug, &query.domain, query.label, args.budget.max(2))?;
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "witness": witness,
        "evaluations_budget": args.budget.max(2),
    }))
    .expect("json encoding cannot fail");
    println!("{json}");
    write_output(&args.out, &json)?;
    Ok(if witness.is_some() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, CliError> {
    let (manifest, base_dir) = BenchmarkManifest::load(&args.manifest)?;
    let config = VerifyConfig {
        workers: args.workers.max(1),
        allow_even: args.allow_even,
        ..VerifyConfig::default()
    };
    let rows = run_bench(&manifest, &base_dir, &config)?;
    let csv = rows_to_csv(&rows);
    match &args.out {
        Some(_) => write_output(&args.out, &csv)?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_family_args(family: &str, angle: Option<u32>) -> Result<KernelFamily, CliError> {
    match family {
        "box-blur" => Ok(KernelFamily::BoxBlur),
        "sharpen" => Ok(KernelFamily::Sharpen),
        "motion-blur" => {
            let angle = BlurAngle::from_degrees(angle.unwrap_or(0))
                .map_err(|e| CliError::data(e.to_string()))?;
            Ok(KernelFamily::MotionBlur(angle))
        }
        other => Err(CliError::data(format!(
            "unknown kernel family {other:?} (expected box-blur, sharpen or motion-blur)"
        ))),
    }
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| CliError::data(format!("invalid {what}: {text:?}")))
        })
        .collect()
}

fn cmd_gen_fixture(args: GenFixtureArgs) -> Result<ExitCode, CliError> {
    let seed = match std::env::var("KERNELVERIFY_SEED") {
        Ok(text) => text
            .parse::<u64>()
            .map_err(|_| CliError::data(format!("KERNELVERIFY_SEED is not a u64: {text:?}")))?,
        Err(_) => args.seed,
    };
    let shape = parse_usize_list(&args.input_shape, "input shape")?;
    if shape.len() != 3 || shape.contains(&0) {
        return Err(CliError::data(format!(
            "input shape must be three positive extents, got {:?}",
            args.input_shape
        )));
    }
    let family = parse_family_args(&args.family, args.angle)?;
    let spec = FixtureSpec {
        name: args.name.clone(),
        input_shape: (shape[0], shape[1], shape[2]),
        hidden: parse_usize_list(&args.hidden, "hidden widths")?,
        classes: args.classes.max(2),
        mode: match args.mode {
            ModeArg::Random => FixtureMode::Random,
            ModeArg::Flip => FixtureMode::FlipAt(args.flip_at),
        },
        arch: match args.arch {
            ArchArg::Dense => FixtureArch::Dense,
            ArchArg::Conv => FixtureArch::Conv,
        },
        image_style: match args.image_style {
            StyleArg::Smooth => ImageStyle::Smooth,
            StyleArg::HighContrast => ImageStyle::HighContrast,
        },
        smooth_first_layer: args.smooth_first_layer,
        margin: args.margin,
        kernel: KernelSpec {
            family,
            size: args.size,
        },
        strength: args.strength,
        timeout_s: args.timeout_s,
    };
    let fixture = gen_fixture(seed, &spec).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError {
        message: format!("cannot create {}: {e}", args.out_dir.display()),
        code: EX_IOERR,
    })?;
    let net_path = args.out_dir.join("network.json");
    let prop_path = args.out_dir.join("property.json");
    save_network(&fixture.network, &net_path)?;
    fixture.property.save(&prop_path)?;
    println!("{}", net_path.display());
    println!("{}", prop_path.display());
    Ok(ExitCode::SUCCESS)
}

//! `nmsim`: command-line front end of the neuron-machine simulator.

mod dump;
mod inputs;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use nm_core::fuzz::{check_case, fuzz_case, FuzzFailure};
use nm_core::gen::random_image_u8;
use nm_core::hw::HwConfig;
use nm_core::image::{encode_pnm, encode_raw};
use nm_core::memory::{symbolic_stream, trace};
use nm_core::model::{validate_model, CnnModel};
use nm_core::numeric::NumericProfile;
use nm_core::oracle::infer_ref;
use nm_core::report::{predict_report, run_report, RunReport};
use nm_core::sot::{compile_sot, execute_with, save_sot, ExecOptions, Fault, HnProbe, ReceptorProbe, SotProgram};
use nm_core::tensor::FeatureMapTensor;
use nm_core::weights::{save_weights, WeightStore};

use dump::{parse_probe, parse_range, ReceptorRow, RECEPTOR_HEADER};

#[derive(Parser, Debug)]
#[command(name = "nmsim", version, about = "Cycle-accurate neuron-machine CNN accelerator simulator")]
struct Cli {
    /// Hardware configuration JSON (defaults to the 256-multiplier reference system).
    #[arg(long, global = true)]
    hw: Option<PathBuf>,

    /// Numeric profile: `int8`, `wide`, or a profile JSON file.
    #[arg(long, global = true)]
    profile: Option<String>,

    /// Format of what is printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run images through the cycle-accurate executor.
    Simulate {
        /// Model JSON, or `builtin:ssd300`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Input image (NMI1 raw or PGM/PPM); repeat for a batch.
        #[arg(long, required = true)]
        image: Vec<PathBuf>,
        /// Write the JSON run report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the per-layer CSV table here.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Resource cost table for the composition rate.
        #[arg(long)]
        resources: Option<PathBuf>,
        /// Also run the reference convolution and compare every layer.
        #[arg(long)]
        compare_oracle: bool,
    },
    /// Static cycle prediction; needs no weights or image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Random models checked against the reference convolution.
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: u64,
        /// Where a failing case is written.
        #[arg(long, default_value = "nmsim-repro")]
        repro_dir: PathBuf,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Per-cycle receptor trace: input, registers, positions, masked output.
    DumpReceptor {
        /// `layer,start..end` (cycles relative to the masking epoch), or
        /// `start..end` with --symbolic.
        #[arg(allow_hyphen_values = true)]
        probe: String,
        /// Trace a symbolic `WxH` map sequence instead of a model layer.
        #[arg(long)]
        symbolic: Option<String>,
        /// Maps in the symbolic sequence.
        #[arg(long, default_value_t = 2)]
        maps: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        lane: usize,
        #[command(flatten)]
        run: RunInputs,
    },
    /// Per-cycle products, tree sum and accumulator of one hardware neuron.
    DumpHn {
        /// `layer,hn,start..end`.
        #[arg(allow_hyphen_values = true)]
        probe: String,
        #[command(flatten)]
        run: RunInputs,
    },
    /// Write seeded random weights and an 8-bit image for a model.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        weights_out: PathBuf,
        /// `.pgm`/`.ppm` selects PNM, anything else the raw NMI1 format.
        #[arg(long)]
        image_out: PathBuf,
    },
    /// Compile a model into a binary SOT program.
    Compile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct RunInputs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    image: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FaultArg {
    MaskOffByOne,
}

/// An invariant violation found at run time (exit status 3).
#[derive(Debug)]
struct Internal(String);

impl fmt::Display for Internal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Internal {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Internal>().is_some() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<nm_core::Error>() {
            if e.is_internal() {
                return 3;
            }
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Ctx {
    hw: HwConfig,
    profile: NumericProfile,
    format: Format,
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        hw: inputs::hw(cli.hw.as_deref())?,
        profile: inputs::profile(cli.profile.as_deref())?,
        format: cli.format,
    };
    match cli.command {
        Command::Simulate {
            model,
            weights,
            image,
            report,
            table,
            resources,
            compare_oracle,
        } => simulate(&ctx, &model, &weights, &image, report.as_deref(), table.as_deref(), resources.as_deref(), compare_oracle),
        Command::Predict { model, table } => predict(&ctx, &model, table.as_deref()),
        Command::Fuzz {
            seed,
            count,
            repro_dir,
            inject_fault,
        } => fuzz(&ctx, seed, count, &repro_dir, inject_fault.map(|_| Fault::MaskOffByOne)),
        Command::DumpReceptor {
            probe,
            symbolic,
            maps,
            k,
            lane,
            run,
        } => match symbolic {
            Some(dims) => dump_symbolic(&ctx, &probe, &dims, maps, k),
            None => dump_receptor(&ctx, &probe, lane, &run),
        },
        Command::DumpHn { probe, run } => dump_hn(&ctx, &probe, &run),
        Command::Generate {
            model,
            seed,
            weights_out,
            image_out,
        } => generate(&ctx, &model, seed, &weights_out, &image_out),
        Command::Compile { model, out } => {
            let model = inputs::model(&model)?;
            let program = compile_sot(&model, &ctx.hw)?;
            output::write_file(&out, &save_sot(&program))?;
            eprintln!("{} rows written to {}", program.len(), out.display());
            Ok(())
        }
    }
}

/// Maps `f` over `0..n`, in parallel unless `NM_SIM_THREADS=0`; results keep
/// index order.
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    match std::env::var("NM_SIM_THREADS").ok().map(|v| v.trim().parse::<usize>()) {
        Some(Ok(0)) => Ok((0..n).map(f).collect()),
        Some(Ok(threads)) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
            Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
        }
        Some(Err(_)) => bail!("NM_SIM_THREADS must be a non-negative integer"),
        None => Ok((0..n).into_par_iter().map(f).collect()),
    }
}

/// Model, compiled program and diagnostics check shared by the run commands.
fn prepare(ctx: &Ctx, model_path: &Path) -> Result<(CnnModel, SotProgram)> {
    let model = inputs::model(model_path)?;
    let program = compile_sot(&model, &ctx.hw)?;
    let diags = validate_model(&model, &ctx.profile);
    if !diags.is_empty() {
        let list: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        bail!("model fails validation:\n  {}", list.join("\n  "));
    }
    Ok((model, program))
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    image: &'a str,
    total_cycles: u64,
    r_u: f64,
    r_c: Option<f64>,
    eff_arch: Option<f64>,
    fps: f64,
    bit_exact: Option<bool>,
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    ctx: &Ctx,
    model_path: &Path,
    weights_path: &Path,
    images: &[PathBuf],
    report: Option<&Path>,
    table: Option<&Path>,
    resources: Option<&Path>,
    compare_oracle: bool,
) -> Result<()> {
    let (model, program) = prepare(ctx, model_path)?;
    let weights = inputs::weights(weights_path, &model, &ctx.profile)?;
    let tensors = images.iter().map(|p| inputs::image(p)).collect::<Result<Vec<_>>>()?;
    let resources = inputs::resources(resources)?;

    let reports = par_map(images.len(), |i| -> Result<RunReport> {
        let out = execute_with(&program, &weights, &tensors[i], &ctx.hw, &ctx.profile, ExecOptions::default())?;
        let exact = if compare_oracle {
            let (refs, _) = infer_ref(&model, &weights, &tensors[i], &ctx.profile)?;
            Some(out.outputs.iter().zip(&refs).map(|(a, b)| a == b).collect::<Vec<_>>())
        } else {
            None
        };
        let name = images[i].display().to_string();
        Ok(run_report(&model.name, &name, &out.stats, Some(&resources), exact.as_deref())?)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let json = if reports.len() == 1 {
        output::json_string(&reports[0])?
    } else {
        output::json_string(&reports)?
    };
    if let Some(path) = report {
        output::write_file(path, json.as_bytes())?;
    }
    if let Some(path) = table {
        output::write_file(path, output::csv_string(&reports[0].per_layer)?.as_bytes())?;
    }
    match ctx.format {
        Format::Json => output::stdout(&json)?,
        Format::Csv => {
            let rows: Vec<SummaryRow> = reports
                .iter()
                .map(|r| SummaryRow {
                    image: &r.image,
                    total_cycles: r.total_cycles,
                    r_u: r.r_u,
                    r_c: r.r_c,
                    eff_arch: r.eff_arch,
                    fps: r.fps,
                    bit_exact: r.bit_exact,
                })
                .collect();
            output::stdout(&output::csv_string(&rows)?)?;
        }
    }
    if let Some(bad) = reports.iter().find(|r| r.bit_exact == Some(false)) {
        let layers: Vec<String> = bad
            .per_layer
            .iter()
            .filter(|l| l.bit_exact == Some(false))
            .map(|l| l.layer.to_string())
            .collect();
        return Err(Internal(format!(
            "{}: layers {} differ from the reference convolution",
            bad.image,
            layers.join(",")
        ))
        .into());
    }
    Ok(())
}

fn predict(ctx: &Ctx, model_path: &Path, table: Option<&Path>) -> Result<()> {
    let model = inputs::model(model_path)?;
    let program = compile_sot(&model, &ctx.hw)?;
    let report = predict_report(&model, &program, &ctx.hw);
    let csv = output::csv_string(&report.layers)?;
    if let Some(path) = table {
        output::write_file(path, csv.as_bytes())?;
    }
    match ctx.format {
        Format::Csv => output::stdout(&csv)?,
        Format::Json => output::stdout(&output::json_string(&report)?)?,
    }
    eprintln!("total cycles {}, {:.2} fps", report.total_cycles, report.fps);
    Ok(())
}

fn tensor_json(t: &FeatureMapTensor) -> serde_json::Value {
    serde_json::json!({ "c": t.channels(), "w": t.width(), "h": t.height(), "data": t.data() })
}

fn write_repro(dir: &Path, failure: &FuzzFailure) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let case = &failure.case;
    output::write_file(&dir.join("model.json"), case.model.to_json().as_bytes())?;
    output::write_file(&dir.join("profile.json"), output::json_string(&case.profile)?.as_bytes())?;
    output::write_file(&dir.join("weights.nmw"), &save_weights(&case.weights, &case.profile))?;
    output::write_file(&dir.join("image.json"), output::json_string(&tensor_json(&case.image))?.as_bytes())?;
    let note = format!("seed {}\ncase {}\n{}\n", case.seed, case.index, failure.message);
    output::write_file(&dir.join("failure.txt"), note.as_bytes())
}

fn fuzz(ctx: &Ctx, seed: u64, count: u64, repro_dir: &Path, fault: Option<Fault>) -> Result<()> {
    let results = par_map(count as usize, |i| {
        let case = fuzz_case(seed, i as u64);
        check_case(&case, &ctx.hw, fault).map_err(|message| Box::new(FuzzFailure { case, message }))
    })?;
    if let Some(failure) = results.into_iter().find_map(Result::err) {
        write_repro(repro_dir, &failure)?;
        return Err(Internal(format!(
            "case {} of seed {}: {} (repro in {})",
            failure.case.index,
            seed,
            failure.message,
            repro_dir.display()
        ))
        .into());
    }
    eprintln!("{} cases bit-exact", count);
    Ok(())
}

fn emit_records(ctx: &Ctx, header: &[&str], rows: Vec<Vec<String>>, json: &impl Serialize) -> Result<()> {
    match ctx.format {
        Format::Csv => output::stdout(&output::csv_records(header, &rows)?),
        Format::Json => output::stdout(&output::json_string(json)?),
    }
}

fn dump_symbolic(ctx: &Ctx, probe: &str, dims: &str, maps: usize, k: usize) -> Result<()> {
    let (w, h) = dims
        .split_once('x')
        .and_then(|(w, h)| Some((w.parse::<usize>().ok()?, h.parse::<usize>().ok()?)))
        .filter(|&(w, h)| w > 0 && h > 0)
        .with_context(|| format!("--symbolic expects WxH, got {:?}", dims))?;
    if k.is_multiple_of(2) {
        bail!("filter size k={} must be odd", k);
    }
    let range = match probe.rsplit_once(',') {
        Some((_, r)) => parse_range(r)?,
        None => parse_range(probe)?,
    };
    let rows: Vec<ReceptorRow> = trace(k, w, h, symbolic_stream(maps, w, h), range)
        .iter()
        .map(|r| ReceptorRow::new(r.t, r.input.to_string(), &r.registers, r.positions.as_deref(), r.output.as_deref()))
        .collect();
    emit_records(ctx, &RECEPTOR_HEADER, rows.iter().map(ReceptorRow::record).collect(), &rows)
}

struct Loaded {
    model: CnnModel,
    program: SotProgram,
    weights: WeightStore,
    image: FeatureMapTensor,
}

fn load_run(ctx: &Ctx, run: &RunInputs) -> Result<Loaded> {
    let (Some(m), Some(w), Some(i)) = (&run.model, &run.weights, &run.image) else {
        bail!("--model, --weights and --image are required");
    };
    let (model, program) = prepare(ctx, m)?;
    let weights = inputs::weights(w, &model, &ctx.profile)?;
    let image = inputs::image(i)?;
    Ok(Loaded {
        model,
        program,
        weights,
        image,
    })
}

fn check_layer(model: &CnnModel, layer: usize) -> Result<()> {
    if layer == 0 || layer > model.len() {
        bail!("layer {} is not in the model (1..={})", layer, model.len());
    }
    Ok(())
}

fn dump_receptor(ctx: &Ctx, probe: &str, lane: usize, run: &RunInputs) -> Result<()> {
    let (nums, cycles) = parse_probe(probe, 1)?;
    let l = load_run(ctx, run)?;
    check_layer(&l.model, nums[0])?;
    let row = &l.program.rows[nums[0] - 1];
    let options = ExecOptions {
        receptor_probe: Some(ReceptorProbe {
            layer: nums[0],
            lane,
            cycles,
        }),
        ..ExecOptions::default()
    };
    let out = execute_with(&l.program, &l.weights, &l.image, &ctx.hw, &ctx.profile, options)?;
    let half = (row.k / 2) as isize;
    let s = row.stride as isize;
    let rows: Vec<ReceptorRow> = out
        .receptor_trace
        .iter()
        .map(|r| {
            let positions: Option<Vec<(isize, isize)>> = r.x.zip(r.y).map(|(x, y)| {
                (-half..=half)
                    .flat_map(|dy| (-half..=half).map(move |dx| (s * x as isize + dx, s * y as isize + dy)))
                    .collect()
            });
            let input = r.input.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
            ReceptorRow::new(r.t, input, &r.registers, positions.as_deref(), r.output.as_deref())
        })
        .collect();
    emit_records(ctx, &RECEPTOR_HEADER, rows.iter().map(ReceptorRow::record).collect(), &rows)
}

fn dump_hn(ctx: &Ctx, probe: &str, run: &RunInputs) -> Result<()> {
    let (nums, cycles) = parse_probe(probe, 2)?;
    let l = load_run(ctx, run)?;
    check_layer(&l.model, nums[0])?;
    let options = ExecOptions {
        hn_probe: Some(HnProbe {
            layer: nums[0],
            hn: nums[1],
            cycles,
        }),
        ..ExecOptions::default()
    };
    let out = execute_with(&l.program, &l.weights, &l.image, &ctx.hw, &ctx.profile, options)?;
    let header = ["t", "pass", "pos", "weight_addr", "products", "tree_sum", "accumulator", "output"];
    let rows = out
        .hn_trace
        .iter()
        .map(|r| {
            vec![
                r.t.to_string(),
                r.pass.to_string(),
                r.pos.to_string(),
                r.weight_addr.to_string(),
                r.products.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" "),
                r.tree_sum.to_string(),
                r.accumulator.to_string(),
                r.output.map_or(String::new(), |v| v.to_string()),
            ]
        })
        .collect();
    emit_records(ctx, &header, rows, &out.hn_trace)
}

fn generate(ctx: &Ctx, model_path: &Path, seed: u64, weights_out: &Path, image_out: &Path) -> Result<()> {
    let model = inputs::model(model_path)?;
    model.check()?;
    let weights = WeightStore::random(&model, &ctx.profile, seed);
    output::write_file(weights_out, &save_weights(&weights, &ctx.profile))?;
    let image = random_image_u8(&model, seed.wrapping_add(1));
    let pnm = matches!(
        image_out.extension().and_then(|e| e.to_str()),
        Some("pgm" | "ppm" | "pnm")
    );
    let bytes = if pnm { encode_pnm(&image)? } else { encode_raw(&image)? };
    output::write_file(image_out, &bytes)
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use mabc::adapt::DownsampleFactor;
use mabc::eval::{
    bd_rate, measure, read_rd_curve, report, write_frame_log, write_frame_psnr, write_rd_csv, write_report_csv, RdRow,
    ReportEntry,
};
use mabc::frame::VideoSequence;
use mabc::gop::{decode_sequence, encode_sequence, CodingFlags, EncodeOutput, EncoderSettings, FrameType};
use mabc::residual::QualityPreset;
use mabc::y4m::{read_y4m, write_y4m};

#[derive(Parser)]
#[command(name = "mabc", version, about = "Motion-adaptive hierarchical B-frame codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a Y4M file into a .mabc stream.
    Encode(EncodeArgs),
    /// Decode a .mabc stream into a Y4M file.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Encode and decode at several presets and write an RD curve CSV.
    Rdsweep(SweepArgs),
    /// BD-rate of one or more RD curves against an anchor curve.
    Bdrate(BdrateArgs),
    /// PSNR and bpp of a decoded sequence against its source.
    Metrics(MetricsArgs),
}

#[derive(Args, Clone)]
struct CodingArgs {
    /// GOP size (power of two, 2 to 64).
    #[arg(long, default_value_t = 16)]
    gop: usize,
    #[arg(long)]
    no_adaptive_downsampling: bool,
    #[arg(long)]
    no_flow_prediction: bool,
    #[arg(long)]
    no_refinement: bool,
    /// Use this factor for every B frame; implies --no-adaptive-downsampling.
    #[arg(long, value_parser = ["1", "2", "4", "8"])]
    fixed_d: Option<String>,
    /// Worker threads; never changes the output.
    #[arg(long)]
    threads: Option<usize>,
}

impl CodingArgs {
    fn settings(&self, quality: u8) -> Result<EncoderSettings> {
        let fixed = self.fixed_d.as_deref().map(|v| DownsampleFactor::from_value(v.parse().expect("validated by clap")));
        Ok(EncoderSettings {
            preset: QualityPreset::new(quality)?,
            gop_size: self.gop,
            flags: CodingFlags {
                adaptive_downsampling: !self.no_adaptive_downsampling && fixed.is_none(),
                flow_prediction: !self.no_flow_prediction,
                refinement: !self.no_refinement,
            },
            fixed_d: fixed.transpose()?.unwrap_or(DownsampleFactor::ONE),
            threads: self.threads,
            ..Default::default()
        })
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Quality preset, 0 (best) to 3.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=3))]
    quality: u8,
    /// Write the per-frame log as CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[command(flatten)]
    coding: CodingArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    /// RD curve CSV to write.
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated presets, at least two.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3", value_parser = clap::value_parser!(u8).range(0..=3))]
    qualities: Vec<u8>,
    /// Curve label; defaults to the input file stem.
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    coding: CodingArgs,
}

#[derive(Args)]
struct BdrateArgs {
    #[arg(long)]
    anchor: PathBuf,
    /// Test curve CSV; repeat to compare several configurations.
    #[arg(long, required = true)]
    test: Vec<PathBuf>,
    /// Also write a BD-rate table (one column per test curve) to this CSV.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Sequence name used in the table.
    #[arg(long, default_value = "sequence")]
    sequence: String,
}

#[derive(Args)]
struct MetricsArgs {
    /// Source Y4M.
    #[arg(long)]
    reference: PathBuf,
    /// Decoded Y4M.
    #[arg(long)]
    decoded: PathBuf,
    /// Stream whose size gives the rate.
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Write per-frame PSNR rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn read_sequence(path: &Path) -> Result<VideoSequence> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_y4m(BufReader::new(f)).with_context(|| format!("cannot read {}", path.display()))
}

fn write_sequence(path: &Path, seq: &VideoSequence) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    write_y4m(seq, &mut w)?;
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn print_frames(out: &EncodeOutput) {
    println!("{:>5} {:>4} {:>2} {:>2} {:>9} {:>7}", "frame", "type", "i", "d", "bits", "psnr");
    for s in &out.stats {
        let i = if s.frame_type == FrameType::B { s.ref_distance.to_string() } else { "-".into() };
        let d = s.factor.map_or("-".into(), |d| d.value().to_string());
        println!(
            "{:>5} {:>4} {:>2} {:>2} {:>9} {:>7.3}",
            s.display_index,
            s.frame_type.as_str(),
            i,
            d,
            s.bits,
            s.psnr.combined
        );
    }
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let seq = read_sequence(&args.input)?;
    let settings = args.coding.settings(args.quality)?;
    let out = encode_sequence(&seq, &settings)?;
    std::fs::write(&args.output, &out.bitstream).with_context(|| format!("cannot write {}", args.output.display()))?;
    print_frames(&out);
    let psnr = out.stats.iter().map(|s| s.psnr.combined).sum::<f64>() / out.stats.len() as f64;
    println!(
        "total: {} frames, {} bits, {:.4} bpp, {psnr:.3} dB",
        out.stats.len(),
        out.total_bits(),
        out.bpp()
    );
    if let Some(path) = &args.stats {
        let mut w = create(path)?;
        write_frame_log(&out.stats, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_decode(input: &Path, output: &Path) -> Result<()> {
    let data = std::fs::read(input).with_context(|| format!("cannot read {}", input.display()))?;
    let seq = decode_sequence(&data)?;
    write_sequence(output, &seq)?;
    info!("decoded {} frames of {}x{}", seq.len(), seq.width, seq.height);
    Ok(())
}

fn cmd_rdsweep(args: &SweepArgs) -> Result<()> {
    if args.qualities.len() < 2 {
        bail!("rdsweep needs at least two qualities");
    }
    let seq = read_sequence(&args.input)?;
    let label = args.label.clone().unwrap_or_else(|| {
        args.input.file_stem().map_or("sequence".into(), |s| s.to_string_lossy().into_owned())
    });
    let mut rows = Vec::new();
    for &q in &args.qualities {
        let out = encode_sequence(&seq, &args.coding.settings(q)?)?;
        let decoded = decode_sequence(&out.bitstream)?;
        let m = measure(&seq, &decoded, out.total_bits())?;
        let mean = |f: fn(&mabc::eval::FramePsnrRow) -> f64| m.frames.iter().map(f).sum::<f64>() / m.frames.len() as f64;
        let row = RdRow {
            label: label.clone(),
            quality: q,
            bits: m.bits,
            bpp: m.point.bpp,
            psnr_y: mean(|r| r.psnr_y),
            psnr_u: mean(|r| r.psnr_u),
            psnr_v: mean(|r| r.psnr_v),
            psnr: m.point.psnr,
        };
        println!("q{q}: {} bits, {:.4} bpp, {:.3} dB", row.bits, row.bpp, row.psnr);
        rows.push(row);
    }
    let mut w = create(&args.output)?;
    write_rd_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn load_curve(path: &Path) -> Result<mabc::eval::RdCurve> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_rd_curve(BufReader::new(f)).with_context(|| format!("cannot read {}", path.display()))
}

fn cmd_bdrate(args: &BdrateArgs) -> Result<()> {
    let anchor = load_curve(&args.anchor)?;
    let tests = args.test.iter().map(|p| load_curve(p)).collect::<Result<Vec<_>>>()?;
    for (path, t) in args.test.iter().zip(&tests) {
        let v = bd_rate(&anchor, t).with_context(|| format!("BD-rate of {}", path.display()))?;
        if tests.len() == 1 {
            println!("{v:.4}");
        } else {
            println!("{}: {v:.4}", path.display());
        }
    }
    if let Some(out) = &args.report {
        let name = |p: &Path| p.file_stem().map_or("curve".into(), |s| s.to_string_lossy().into_owned());
        let mut entries = vec![ReportEntry { sequence: args.sequence.clone(), config: "anchor".into(), curve: anchor }];
        let configs: Vec<String> = args.test.iter().map(|p| name(p)).collect();
        for (c, t) in configs.iter().zip(tests) {
            entries.push(ReportEntry { sequence: args.sequence.clone(), config: c.clone(), curve: t });
        }
        let mut w = create(out)?;
        write_report_csv(&report(&entries, "anchor", &configs), &configs, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let reference = read_sequence(&args.reference)?;
    let decoded = read_sequence(&args.decoded)?;
    let bits = match &args.stream {
        Some(p) => std::fs::metadata(p).with_context(|| format!("cannot stat {}", p.display()))?.len() * 8,
        None => 0,
    };
    let m = measure(&reference, &decoded, bits)?;
    for r in &m.frames {
        println!("frame {:>4}: Y {:.3} U {:.3} V {:.3} combined {:.3}", r.frame, r.psnr_y, r.psnr_u, r.psnr_v, r.psnr);
    }
    if args.stream.is_some() {
        println!("mean: {:.3} dB, {:.4} bpp", m.point.psnr, m.point.bpp);
    } else {
        println!("mean: {:.3} dB", m.point.psnr);
    }
    if let Some(path) = &args.csv {
        let mut w = create(path)?;
        write_frame_psnr(&m.frames, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Encode(a) => cmd_encode(a),
        Command::Decode { input, output } => cmd_decode(input, output),
        Command::Rdsweep(a) => cmd_rdsweep(a),
        Command::Bdrate(a) => cmd_bdrate(a),
        Command::Metrics(a) => cmd_metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mabc::eval::{read_rd_rows, write_rd_csv, RdRow};
use mabc::gop::encode_sequence;
use mabc::synth::pan_sequence;
use mabc::y4m::{parse_y4m, to_y4m_bytes};
use tempfile::TempDir;

fn mabc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mabc")).args(args).output().expect("run mabc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    dir: TempDir,
    input: PathBuf,
}

fn work() -> Work {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.y4m");
    std::fs::write(&input, to_y4m_bytes(&pan_sequence(64, 48, 9, 3, 5)).unwrap()).unwrap();
    Work { dir, input }
}

impl Work {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden").join(name)
}

#[test]
fn encode_decode_round_trip_matches_reconstruction() {
    let w = work();
    let (stream, out, stats) = (w.path("a.mabc"), w.path("a.y4m"), w.path("stats.csv"));
    let o = mabc(&["encode", "--input", s(&w.input), "--output", s(&stream), "--quality", "1", "--gop", "8", "--stats", s(&stats)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("total: 9 frames") && l.contains("bpp")), "{text}");

    let o = mabc(&["decode", "--input", s(&stream), "--output", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let seq = parse_y4m(&std::fs::read(&w.input).unwrap()).unwrap();
    let settings = mabc::gop::EncoderSettings {
        preset: mabc::residual::QualityPreset::new(1).unwrap(),
        gop_size: 8,
        ..Default::default()
    };
    let expected = encode_sequence(&seq, &settings).unwrap();
    assert_eq!(std::fs::read(&stream).unwrap(), expected.bitstream);
    assert_eq!(parse_y4m(&std::fs::read(&out).unwrap()).unwrap(), expected.reconstruction);

    let log = std::fs::read_to_string(&stats).unwrap();
    assert!(log.starts_with("frame,type,i,d,bits,psnr_y,psnr_u,psnr_v,psnr\n"), "{log}");
    assert_eq!(log.lines().count(), 10);
}

#[test]
fn no_flow_prediction_marks_d_absent() {
    let w = work();
    let o = mabc(&["encode", "--input", s(&w.input), "--output", s(&w.path("a.mabc")), "--gop", "8", "--no-flow-prediction"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let b_rows: Vec<&str> = text.lines().filter(|l| l.split_whitespace().nth(1) == Some("B")).collect();
    assert_eq!(b_rows.len(), 7);
    assert!(b_rows.iter().all(|l| l.split_whitespace().nth(3) == Some("-")), "{text}");
}

#[test]
fn fixed_d_validation() {
    let w = work();
    let out = w.path("a.mabc");
    let o = mabc(&["encode", "--input", s(&w.input), "--output", s(&out), "--gop", "8", "--fixed-d", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let b_rows: Vec<&str> = text.lines().filter(|l| l.split_whitespace().nth(1) == Some("B")).collect();
    assert!(b_rows.iter().all(|l| l.split_whitespace().nth(3) == Some("2")), "{text}");

    // 48 rows cannot hold a 16-pixel block at d = 4
    let o = mabc(&["encode", "--input", s(&w.input), "--output", s(&out), "--fixed-d", "4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not admissible"), "{}", stderr(&o));

    let o = mabc(&["encode", "--input", s(&w.input), "--output", s(&out), "--fixed-d", "3"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn usage_and_runtime_exit_codes() {
    let w = work();
    assert_eq!(mabc(&["encode", "--input", s(&w.input)]).status.code(), Some(2));
    assert_eq!(mabc(&["frobnicate"]).status.code(), Some(2));
    let o = mabc(&["decode", "--input", s(&w.path("missing.mabc")), "--output", s(&w.path("x.y4m"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "));
}

#[test]
fn truncated_stream_reports_frame() {
    let w = work();
    let stream = w.path("a.mabc");
    assert!(mabc(&["encode", "--input", s(&w.input), "--output", s(&stream), "--gop", "8"]).status.success());
    let data = std::fs::read(&stream).unwrap();
    let cut = w.path("cut.mabc");
    std::fs::write(&cut, &data[..data.len() - 40]).unwrap();
    let o = mabc(&["decode", "--input", s(&cut), "--output", s(&w.path("x.y4m"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("truncated at frame "), "{}", stderr(&o));
}

#[test]
fn golden_stream_decodes_to_golden_y4m() {
    let w = work();
    let out = w.path("g.y4m");
    let o = mabc(&["decode", "--input", s(&golden("pan48x40.mabc")), "--output", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(out).unwrap(), std::fs::read(golden("pan48x40.y4m")).unwrap());
}

#[test]
fn rdsweep_writes_one_row_per_quality() {
    let w = work();
    let csv = w.path("rd.csv");
    let o = mabc(&["rdsweep", "--input", s(&w.input), "--output", s(&csv), "--gop", "8", "--label", "pan", "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_rd_rows(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.label == "pan"));
    assert_eq!(rows.iter().map(|r| r.quality).collect::<Vec<_>>(), [0, 1, 2, 3]);

    let o = mabc(&["rdsweep", "--input", s(&w.input), "--output", s(&csv), "--qualities", "2"]);
    assert_eq!(o.status.code(), Some(1));
}

fn write_curve(path: &Path, scale: f64) {
    let rows: Vec<RdRow> = [(0.1, 30.0), (0.2, 33.0), (0.4, 36.0), (0.8, 39.0)]
        .iter()
        .enumerate()
        .map(|(q, &(bpp, psnr))| RdRow {
            label: "c".into(),
            quality: q as u8,
            bits: 0,
            bpp: bpp * scale,
            psnr_y: psnr,
            psnr_u: psnr,
            psnr_v: psnr,
            psnr,
        })
        .collect();
    write_rd_csv(&rows, std::fs::File::create(path).unwrap()).unwrap();
}

#[test]
fn bdrate_identical_doubled_and_report() {
    let w = work();
    let (a, d, n) = (w.path("anchor.csv"), w.path("doubled.csv"), w.path("cheaper.csv"));
    write_curve(&a, 1.0);
    write_curve(&d, 2.0);
    write_curve(&n, 0.9);
    let o = mabc(&["bdrate", "--anchor", s(&a), "--test", s(&a)]);
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 0.0);
    let o = mabc(&["bdrate", "--anchor", s(&a), "--test", s(&d)]);
    assert!((stdout(&o).trim().parse::<f64>().unwrap() - 100.0).abs() < 0.1);

    let table = w.path("table.csv");
    let o = mabc(&["bdrate", "--anchor", s(&a), "--test", s(&d), "--test", s(&n), "--report", s(&table), "--sequence", "seq"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, ["sequence,doubled,cheaper", "seq,100.0000,-10.0000", "Average,100.0000,-10.0000"]);
}

#[test]
fn metrics_prints_psnr_and_rate() {
    let w = work();
    let (stream, out, csv) = (w.path("a.mabc"), w.path("a.y4m"), w.path("m.csv"));
    assert!(mabc(&["encode", "--input", s(&w.input), "--output", s(&stream), "--gop", "8"]).status.success());
    assert!(mabc(&["decode", "--input", s(&stream), "--output", s(&out)]).status.success());
    let o = mabc(&["metrics", "--reference", s(&w.input), "--decoded", s(&out), "--stream", s(&stream), "--csv", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let bits = std::fs::metadata(&stream).unwrap().len() * 8;
    let bpp = bits as f64 / (64.0 * 48.0 * 9.0);
    assert!(text.contains(&format!("{bpp:.4} bpp")), "{text}");
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 10);

    let o = mabc(&["metrics", "--reference", s(&w.input), "--decoded", s(&w.input)]);
    assert!(stdout(&o).contains("mean: 99.000 dB"));
}

#[test]
fn thread_count_does_not_change_stream() {
    let w = work();
    let (a, b) = (w.path("a.mabc"), w.path("b.mabc"));
    assert!(mabc(&["encode", "--input", s(&w.input), "--output", s(&a), "--threads", "1"]).status.success());
    assert!(mabc(&["encode", "--input", s(&w.input), "--output", s(&b), "--threads", "4"]).status.success());
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

//! End-to-end tests of the command line surface: real files in, reports out.

mod common;

use std::fs;
use std::path::Path;

use common::{column, parse_csv, run_cli};
use tempfile::TempDir;

fn write_file(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Single-view FS trace text at 24 fps.
fn fs_trace(sizes: &[i64], gop: u64) -> String {
    let mut s = format!(
        "#!video=clip\n#!representation=FS\n#!views=1\n#!frames={}\n#!fps=24\n#!gop={gop}\n#!pattern=B1\n",
        sizes.len()
    );
    for (i, size) in sizes.iter().enumerate() {
        s.push_str(&format!("{},1,P,{size}\n", i + 1));
    }
    s
}

/// Two-view MV trace text at 24 fps, optionally with a QP tag and per-frame PSNR.
fn mv_trace(views: &[Vec<i64>; 2], qp: Option<u32>, psnr: Option<f64>) -> String {
    let mut s = format!(
        "#!video=clip\n#!representation=MV\n#!views=2\n#!frames={}\n#!fps=24\n#!gop=16\n#!pattern=B1\n",
        views[0].len()
    );
    if let Some(qp) = qp {
        s.push_str(&format!("#!qp={qp}\n"));
    }
    for (vi, sizes) in views.iter().enumerate() {
        for (mi, size) in sizes.iter().enumerate() {
            match psnr {
                Some(p) => s.push_str(&format!("{},{},P,{size},{p}\n", mi + 1, vi + 1)),
                None => s.push_str(&format!("{},{},P,{size}\n", mi + 1, vi + 1)),
            }
        }
    }
    s
}

#[test]
fn stats_view_row_matches_hand_values() {
    let dir = TempDir::new().unwrap();
    let path = write_file(&dir, "t.trace", &fs_trace(&[1000, 2000, 3000], 3));
    let (code, out, err) = run_cli(&["mvtraffic", "stats", &path, "--view", "1"]);
    assert_eq!(code, 0, "stderr: {err}");

    let (header, rows) = parse_csv(&out);
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(row[column(&header, "shaping")], "view1");
    assert_eq!(row[column(&header, "unit")], "bytes/frame");
    assert_eq!(row[column(&header, "mean")], "2000");
    assert_eq!(row[column(&header, "variance")], "1000000");
    assert_eq!(row[column(&header, "cov")], "0.5");
    assert_eq!(row[column(&header, "mean_bitrate_bps")], "384000");
    assert_eq!(row[column(&header, "samples")], "3");
}

#[test]
fn stats_default_rows_cover_views_merged_sequential_and_combined() {
    let dir = TempDir::new().unwrap();
    let views = [vec![1000, 2000, 3000], vec![500, 1000, 1500]];
    let path = write_file(&dir, "t.trace", &mv_trace(&views, None, None));
    let (code, out, _) = run_cli(&["mvtraffic", "stats", &path]);
    assert_eq!(code, 0);

    let (header, rows) = parse_csv(&out);
    let labels: Vec<&str> =
        rows.iter().map(|r| r[column(&header, "shaping")].as_str()).collect();
    assert_eq!(labels, ["view1", "view2", "merged", "S", "C"]);

    let merged = &rows[2];
    assert_eq!(merged[column(&header, "mean")], "1500");
    assert_eq!(merged[column(&header, "mean_bitrate_bps")], "576000");
    // merged is a location summary only
    assert_eq!(merged[column(&header, "variance")], "");
}

#[test]
fn stats_smooth_appends_the_demand_row() {
    let dir = TempDir::new().unwrap();
    let path = write_file(&dir, "t.trace", &fs_trace(&[100, 300, 200, 400], 2));
    // Bytes [100,300,200,400] -> bits [800,2400,1600,3200]; GoP pairs level
    // to [1600,1600,2400,2400].
    let (code, out, _) = run_cli(&["mvtraffic", "stats", &path, "--smooth"]);
    assert_eq!(code, 0);
    let (header, rows) = parse_csv(&out);
    assert_eq!(rows.len(), 1, "--smooth alone selects only the smoothed row");
    assert_eq!(rows[0][column(&header, "shaping")], "smooth2");
    assert_eq!(rows[0][column(&header, "unit")], "bits/period");
    assert_eq!(rows[0][column(&header, "mean")], "2000");

    // explicit G overrides the trace GoP
    let (code, out, _) = run_cli(&["mvtraffic", "stats", &path, "--smooth", "4"]);
    assert_eq!(code, 0);
    let (header, rows) = parse_csv(&out);
    assert_eq!(rows[0][column(&header, "shaping")], "smooth4");
    assert_eq!(rows[0][column(&header, "mean")], "2000");
}

#[test]
fn curves_emit_rd_then_vd_with_labels() {
    let dir = TempDir::new().unwrap();
    let low = write_file(
        &dir,
        "qp40.trace",
        &mv_trace(&[vec![400, 600], vec![300, 500]], Some(40), Some(32.0)),
    );
    let high = write_file(
        &dir,
        "qp28.trace",
        &mv_trace(&[vec![1000, 2000], vec![800, 1200]], Some(28), Some(38.5)),
    );
    let (code, out, err) = run_cli(&["mvtraffic", "curves", &low, &high]);
    assert_eq!(code, 0, "stderr: {err}");

    let (header, rows) = parse_csv(&out);
    assert_eq!(rows.len(), 4);
    let kind = column(&header, "kind");
    let label = column(&header, "label");
    assert_eq!(rows[0][kind], "RD");
    assert_eq!(rows[1][kind], "RD");
    assert_eq!(rows[2][kind], "VD");
    assert_eq!(rows[3][kind], "VD");
    // ascending PSNR within each kind
    assert_eq!(rows[0][label], "clip MV qp40 C");
    assert_eq!(rows[1][label], "clip MV qp28 C");
    assert_eq!(rows[0][column(&header, "cov")], "");
    assert_eq!(rows[2][column(&header, "avg_bitrate_bps")], "");
}

#[test]
fn mux_loss_reproduces_the_hand_scenario() {
    let dir = TempDir::new().unwrap();
    // 125 and 375 bytes -> demand [1000, 3000] bits; C = 96 kb/s at 24 fps
    // gives a 4000-bit budget; the exact loss probability is 0.125.
    let path = write_file(&dir, "t.trace", &fs_trace(&[125, 375], 1));
    let (code, out, err) = run_cli(&[
        "mvtraffic", "mux", "loss", &path, "--J", "2", "--C", "96000", "--seed", "11",
        "--max-reps", "200000",
    ]);
    assert_eq!(code, 0, "stderr: {err}");

    let (header, rows) = parse_csv(&out);
    let row = &rows[0];
    assert_eq!(row[column(&header, "j")], "2");
    assert_eq!(row[column(&header, "budget_bits")], "4000");
    let p_hat: f64 = row[column(&header, "p_hat")].parse().unwrap();
    let ci: f64 = row[column(&header, "ci_half_width")].parse().unwrap();
    assert!(ci > 0.0);
    assert!(
        (p_hat - 0.125).abs() <= 2.0 * ci,
        "p_hat {p_hat} not near 0.125 (ci {ci})"
    );
}

#[test]
fn mux_cmin_and_jmax_match_closed_forms() {
    let dir = TempDir::new().unwrap();
    // Constant 750 bytes/frame = 6000 bits/period at 24 fps.
    let path = write_file(&dir, "t.trace", &fs_trace(&[750, 750, 750, 750], 1));

    // At epsilon 1e-5 no budget below the 18000-bit peak is tolerable
    // (each period would lose at least 1/18000 of the offered load), so
    // C_min is exactly 3 * 6000 * 24 = 432000 bit/s.
    let (code, out, err) = run_cli(&[
        "mvtraffic", "mux", "cmin", &path, "--J", "3", "--epsilon", "1e-5", "--runs", "300",
        "--sims", "1000", "--seed", "1",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let (header, rows) = parse_csv(&out);
    let row = &rows[0];
    assert_eq!(row[column(&header, "c_min_bps")], "432000");
    assert_eq!(row[column(&header, "zero_loss")], "true");
    let infeasible: f64 = row[column(&header, "bracket_infeasible_bps")].parse().unwrap();
    assert!(infeasible < 432_000.0);

    let (code, out, err) = run_cli(&[
        "mvtraffic", "mux", "jmax", &path, "--C", "1000000", "--epsilon", "1e-4", "--runs",
        "30", "--sims", "1000", "--seed", "1",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let (header, rows) = parse_csv(&out);
    assert_eq!(rows[0][column(&header, "j_max")], "6");
    assert_eq!(rows[0][column(&header, "link_rate_bps")], "1000000");
}

#[test]
fn synth_is_deterministic_and_loadable() {
    let dir = TempDir::new().unwrap();
    let spec = write_file(
        &dir,
        "spec.toml",
        r#"
name = "synthclip"
views = 2
frames = 48
fps = 24.0
gop = 16
pattern = "B1"
inter_view_scale = 0.8

[sizes.i]
location = 20000.0
dispersion = 0.3

[sizes.p]
location = 8000.0
dispersion = 0.4

[sizes.b]
location = 3000.0
dispersion = 0.5
"#,
    );
    let out_a = dir.path().join("a.trace");
    let out_b = dir.path().join("b.trace");
    let (code, _, err) = run_cli(&[
        "mvtraffic", "synth", "--spec", &spec, "--seed", "7", "-o",
        out_a.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let (code, _, _) = run_cli(&[
        "mvtraffic", "synth", "--spec", &spec, "--seed", "7", "-o",
        out_b.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let a = fs::read(&out_a).unwrap();
    assert_eq!(a, fs::read(&out_b).unwrap());

    // stdout output is the same trace
    let (code, stdout, _) = run_cli(&["mvtraffic", "synth", "--spec", &spec, "--seed", "7"]);
    assert_eq!(code, 0);
    assert_eq!(stdout.as_bytes(), a.as_slice());

    // and it parses, validates, and analyzes cleanly
    let (code, out, err) = run_cli(&["mvtraffic", "stats", out_a.to_str().unwrap()]);
    assert_eq!(code, 0, "stderr: {err}");
    let (header, rows) = parse_csv(&out);
    assert_eq!(rows.len(), 5); // view1, view2, merged, S, C
    assert_eq!(rows[0][column(&header, "samples")], "48");
}

#[test]
fn json_format_emits_typed_objects() {
    let dir = TempDir::new().unwrap();
    let path = write_file(&dir, "t.trace", &fs_trace(&[1000, 2000, 3000], 3));
    let (code, out, _) =
        run_cli(&["mvtraffic", "stats", &path, "--view", "1", "--format", "json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["shaping"], "view1");
    assert_eq!(rows[0]["mean"], 2000.0);
    assert_eq!(rows[0]["samples"], 3);
}

#[test]
fn human_flag_scales_rate_columns_to_mbps() {
    let dir = TempDir::new().unwrap();
    let path = write_file(&dir, "t.trace", &fs_trace(&[1000, 2000, 3000], 3));
    let (code, out, _) = run_cli(&["mvtraffic", "stats", &path, "--view", "1", "--human"]);
    assert_eq!(code, 0);
    let (header, rows) = parse_csv(&out);
    assert_eq!(rows[0][column(&header, "mean_bitrate_mbps")], "0.384");
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let dir = TempDir::new().unwrap();
    let good = write_file(&dir, "good.trace", &fs_trace(&[125, 375], 1));

    // usage errors: exit 2
    let (code, _, _) = run_cli(&["mvtraffic", "stats", &good, "--bogus"]);
    assert_eq!(code, 2);
    let (code, _, err) = run_cli(&[
        "mvtraffic", "mux", "loss", &good, "--J", "2", "--C", "96000", "--shaping", "S",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("cannot be multiplexed"), "{err}");
    let (code, _, _) = run_cli(&[
        "mvtraffic", "mux", "loss", &good, "--J", "2", "--C", "96000", "--shaping", "view1",
    ]);
    assert_eq!(code, 2);

    // data errors: exit 1, with the problem named on stderr
    let (code, _, err) = run_cli(&["mvtraffic", "stats", dir.path().join("missing.trace").to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("cannot open"), "{err}");

    // header claims MV but stores one view: parses, fails validation
    let bad = fs_trace(&[125, 375], 1).replace("#!representation=FS", "#!representation=MV");
    let bad = write_file(&dir, "bad.trace", &bad);
    let (code, _, err) = run_cli(&["mvtraffic", "stats", &bad]);
    assert_eq!(code, 1);
    assert!(err.contains("invalid trace"), "{err}");

    // malformed data row: parse error names the line
    let broken = write_file(&dir, "broken.trace", &fs_trace(&[125, 375], 1).replace("2,1,P,375", "2,1,P"));
    let (code, _, err) = run_cli(&["mvtraffic", "stats", &broken]);
    assert_eq!(code, 1);
    assert!(err.contains("line"), "{err}");

    // smoothing window longer than the trace: data error
    let (code, _, err) = run_cli(&["mvtraffic", "stats", &good, "--smooth", "5"]);
    assert_eq!(code, 1);
    assert!(!err.is_empty());

    // searches with zero streams fail cleanly
    let (code, _, err) = run_cli(&[
        "mvtraffic", "mux", "cmin", &good, "--J", "0", "--epsilon", "1e-2", "--runs", "3",
        "--sims", "100",
    ]);
    assert_eq!(code, 1);
    assert!(!err.is_empty());

    // a replication budget too small for epsilon is a usage error
    let (code, _, err) = run_cli(&[
        "mvtraffic", "mux", "cmin", &good, "--J", "2", "--epsilon", "1e-9", "--runs", "1",
        "--sims", "10",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("epsilon"), "{err}");
}

#[test]
fn env_seed_applies_when_the_flag_is_absent() {
    let dir = TempDir::new().unwrap();
    let spec = write_file(
        &dir,
        "spec.toml",
        "views = 1\nframes = 8\nfps = 24.0\ngop = 4\npattern = \"B1\"\nrepresentation = \"FS\"\n[sizes.i]\nlocation = 9000.0\ndispersion = 0.2\n[sizes.p]\nlocation = 4000.0\ndispersion = 0.2\n[sizes.b]\nlocation = 1500.0\ndispersion = 0.2\n",
    );
    let (code, flagged, _) = run_cli(&["mvtraffic", "synth", "--spec", &spec, "--seed", "123"]);
    assert_eq!(code, 0);

    std::env::set_var(mvtraffic::cli::SEED_ENV, "123");
    let (code, from_env, _) = run_cli(&["mvtraffic", "synth", "--spec", &spec]);
    assert_eq!(code, 0);
    assert_eq!(from_env, flagged);

    std::env::set_var(mvtraffic::cli::SEED_ENV, "not-a-number");
    let (code, _, err) = run_cli(&["mvtraffic", "synth", "--spec", &spec]);
    assert_eq!(code, 2);
    assert!(err.contains(mvtraffic::cli::SEED_ENV), "{err}");
    std::env::remove_var(mvtraffic::cli::SEED_ENV);
}

#[test]
fn reports_are_byte_identical_across_invocations() {
    let dir = TempDir::new().unwrap();
    let path = write_file(&dir, "t.trace", &fs_trace(&[125, 375, 250, 125], 2));
    let args = [
        "mvtraffic", "mux", "loss", &path, "--J", "3", "--C", "120000", "--seed", "5",
        "--max-reps", "20000",
    ];
    let (c1, o1, _) = run_cli(&args);
    let (c2, o2, _) = run_cli(&args);
    assert_eq!(c1, 0);
    assert_eq!(c2, 0);
    assert_eq!(o1, o2);
}

#[test]
fn trace_paths_may_be_relative_or_absolute() {
    // guards against accidental cwd assumptions in path handling
    let dir = TempDir::new().unwrap();
    let abs = write_file(&dir, "t.trace", &fs_trace(&[1000, 2000], 1));
    assert!(Path::new(&abs).is_absolute());
    let (code, _, _) = run_cli(&["mvtraffic", "stats", &abs]);
    assert_eq!(code, 0);
}

//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! verdict lines are always printed; exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cdnerr::cluster::{
    adjusted_rand_index, grid_search_kmodes, huang_init, kmeans_fit, kmeans_run, kmeanspp_init, kmodes_fit,
    kmodes_run, CategoricalMatrix, KMeansParams, KModesInit, KModesParams,
};
use cdnerr::features::chi_square_statistic;
use cdnerr::ingest::{RecordStream, Schema, StreamOptions};
use cdnerr::log_model::{classify_status, is_error, Field, StatusClass};
use cdnerr::synth::{generate, generate_files, planted_spec, read_truth, SynthSpec, PLANTED_FIELDS};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_cdnerr");

// Pinned tolerances.
const CHI2_REL_TOL: f64 = 1e-9;
const CHI2_INDEPENDENCE_MAX: f64 = 1e-9;
const WCSS_TOL: f64 = 1e-9;
const ARI_MIN: f64 = 0.90;
const ARI_ORACLE_TOL: f64 = 1e-12;
const PEAK_RSS_MAX_BYTES: u64 = 256 * 1024 * 1024;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cdnerr(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("spawn cdnerr")
}

fn cdnerr_ok(args: &[&str]) -> Result<std::process::Output, String> {
    let out = cdnerr(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "cdnerr {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp paths")
}

// 1 ------------------------------------------------------------------------

fn taxonomy() -> Outcome {
    let expected = |code: i64| match code / 100 {
        1 => StatusClass::Informational,
        2 => StatusClass::Success,
        3 => StatusClass::Redirect,
        4 => StatusClass::ClientError,
        _ => StatusClass::ServerError,
    };
    for code in 100..=599i64 {
        let class = classify_status(code).map_err(|e| e.to_string())?;
        ensure(class == expected(code), || format!("{code} classified as {class:?}"))?;
        ensure(is_error(code) == Ok(code >= 400), || format!("is_error({code}) wrong"))?;
    }
    for code in [0, 99, 600, 999, -1] {
        ensure(classify_status(code).is_err(), || format!("{code} accepted"))?;
    }
    Ok("500 codes, 5 groups, out-of-range rejected".into())
}

// 2 ------------------------------------------------------------------------

fn host_threshold(tmp: &Path) -> Outcome {
    let mut text = String::from("seed = 2\ntotal_lines = 3000\nerror_rate = 1.0\n");
    for n in [999u64, 1000, 1001] {
        text.push_str(&format!(
            "[[hosts]]\nhost = \"h{n}\"\nservice = \"web\"\nweight = {}\n\
             [[hosts.clusters]]\nsize_fraction = 1\nstatus_code_mix = {{ \"404\" = 1 }}\n",
            n as f64 / 3000.0
        ));
    }
    let spec = SynthSpec::from_toml(&text).map_err(|e| e.to_string())?;
    let log = tmp.join("threshold.tsv");
    let summary = generate_files(&spec, &log, None).map_err(|e| e.to_string())?;
    let sizes: Vec<u64> = summary.lines_per_host.values().copied().collect();
    ensure(sizes == [1000, 1001, 999], || format!("generated host sizes {sizes:?}"))?;

    let out = tmp.join("threshold-out");
    cdnerr_ok(&["ingest", "--input", s(&log), "--out", s(&out)])?;
    let stats = read_json(&out.join("ingest_stats.json"))?;
    let kept: Vec<&str> = stats["retained"].as_array().unwrap().iter().map(|h| h["host"].as_str().unwrap()).collect();
    let excluded: Vec<&str> =
        stats["excluded"].as_array().unwrap().iter().map(|h| h["host"].as_str().unwrap()).collect();
    ensure(kept == ["h1001"], || format!("retained {kept:?}"))?;
    ensure(excluded == ["h1000", "h999"], || format!("excluded {excluded:?}"))?;
    Ok("retained [h1001], excluded [h1000, h999]".into())
}

// 3 ------------------------------------------------------------------------

fn chi_square_direct(table: &[Vec<f64>]) -> f64 {
    let rows = table.len();
    let cols = table[0].len();
    let total: f64 = table.iter().flatten().sum();
    let mut stat = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let r: f64 = table[i].iter().sum();
            let c: f64 = (0..rows).map(|k| table[k][j]).sum();
            let e = r * c / total;
            stat += (table[i][j] - e) * (table[i][j] - e) / e;
        }
    }
    stat
}

fn chi_square_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_rel: f64 = 0.0;
    let mut worst_indep: f64 = 0.0;
    for _ in 0..50 {
        let classes = rng.gen_range(2..=4);
        let cats = rng.gen_range(2..=6);
        let table: Vec<Vec<f64>> =
            (0..classes).map(|_| (0..cats).map(|_| rng.gen_range(1..60) as f64).collect()).collect();
        let got = chi_square_statistic(&table);
        let want = chi_square_direct(&table);
        let rel = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
        worst_rel = worst_rel.max(rel);
        ensure(rel <= CHI2_REL_TOL, || format!("{table:?}: {got} vs {want}"))?;

        // Rank-one tables have expected counts equal to the observed ones.
        let r: Vec<f64> = (0..classes).map(|_| rng.gen_range(1..20) as f64).collect();
        let c: Vec<f64> = (0..cats).map(|_| rng.gen_range(1..20) as f64).collect();
        let indep: Vec<Vec<f64>> = r.iter().map(|a| c.iter().map(|b| a * b).collect()).collect();
        let v = chi_square_statistic(&indep);
        worst_indep = worst_indep.max(v);
        ensure(v < CHI2_INDEPENDENCE_MAX, || format!("independent table scored {v}"))?;
    }
    Ok(format!("50 tables, worst rel err {worst_rel:.1e}, worst independent {worst_indep:.1e}"))
}

// 4 ------------------------------------------------------------------------

fn best_split<T>(n: usize, cost: impl Fn(&[usize]) -> T) -> T
where
    T: PartialOrd + std::ops::Add<Output = T> + Copy,
{
    let mut best: Option<T> = None;
    for mask in 1u32..(1 << n) - 1 {
        let (a, b): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| mask & (1 << i) != 0);
        let c = cost(&a) + cost(&b);
        if best.is_none_or(|x| c < x) {
            best = Some(c);
        }
    }
    best.expect("n >= 2")
}

fn small_optimality() -> Outcome {
    let mut huang_hits = 0;
    for inst in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + inst);
        let n = rng.gen_range(3..=8);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]).collect();
        let sse = |ix: &[usize]| {
            let m = ix.len() as f64;
            (0..2)
                .map(|d| {
                    let mean = ix.iter().map(|&i| pts[i][d]).sum::<f64>() / m;
                    ix.iter().map(|&i| (pts[i][d] - mean).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
        };
        let opt = best_split(n, sse);
        let data = Array2::from_shape_fn((n, 2), |(i, d)| pts[i][d]);
        let params = KMeansParams { n_clusters: 2, n_init: 50, random_state: inst, ..KMeansParams::default() };
        let model = kmeans_fit(data.view(), &params).map_err(|e| e.to_string())?;
        ensure((model.cost - opt).abs() <= WCSS_TOL * opt.max(1.0), || {
            format!("k-means instance {inst}: {} vs optimum {opt}", model.cost)
        })?;

        let rows: Vec<Vec<String>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(0..3).to_string()).collect()).collect();
        let mismatch = |ix: &[usize]| {
            (0..3)
                .map(|a| {
                    let mut counts: HashMap<&str, u64> = HashMap::new();
                    for &i in ix {
                        *counts.entry(rows[i][a].as_str()).or_default() += 1;
                    }
                    ix.len() as u64 - counts.values().max().unwrap()
                })
                .sum::<u64>()
        };
        let opt = best_split(n, mismatch) as f64;
        let cat = CategoricalMatrix::from_rows(vec!["a".into(), "b".into(), "c".into()], &rows).map_err(|e| e.to_string())?;
        let params = KModesParams { n_clusters: 2, n_init: 50, random_state: inst, ..KModesParams::default() };
        if kmodes_fit(&cat, &params).map_err(|e| e.to_string())?.cost == opt {
            huang_hits += 1;
        }
        let random = KModesParams { init: KModesInit::Random, ..params };
        let model = kmodes_fit(&cat, &random).map_err(|e| e.to_string())?;
        ensure(model.cost == opt, || format!("k-modes instance {inst}: {} vs optimum {opt}", model.cost))?;
    }
    Ok(format!("30/30 k-means (k-means++), 30/30 k-modes (random init); huang init {huang_hits}/30"))
}

// 5 ------------------------------------------------------------------------

fn monotonicity() -> Outcome {
    let mut violations = 0;
    let mut iterations = 0;
    for ds in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + ds);
        let data = Array2::from_shape_fn((500, 10), |_| rng.gen_range(-1.0..1.0));
        let init = kmeanspp_init(data.view(), 6, &mut rng).map_err(|e| e.to_string())?;
        let run = kmeans_run(data.view(), init, 300).map_err(|e| e.to_string())?;
        iterations += run.history.len();
        violations += run.history.windows(2).filter(|w| w[1] > w[0]).count();

        let rows: Vec<Vec<String>> = (0..500).map(|_| (0..10).map(|_| rng.gen_range(0..5).to_string()).collect()).collect();
        let cat = CategoricalMatrix::from_rows((0..10).map(|a| format!("a{a}")).collect(), &rows).map_err(|e| e.to_string())?;
        let (modes, _) = huang_init(&cat, 8, &mut rng).map_err(|e| e.to_string())?;
        let run = kmodes_run(&cat, modes, 100).map_err(|e| e.to_string())?;
        iterations += run.history.len();
        violations += run.history.windows(2).filter(|w| w[1] > w[0]).count();
    }
    ensure(violations == 0, || format!("{violations} cost increases"))?;
    Ok(format!("200 runs, {iterations} recorded costs, 0 increases"))
}

// 6 ------------------------------------------------------------------------

/// Pair-counting ARI from the contingency table.
fn ari_oracle(a: &[u32], b: &[u32]) -> f64 {
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut cells: HashMap<(u32, u32), u64> = HashMap::new();
    let mut ra: HashMap<u32, u64> = HashMap::new();
    let mut rb: HashMap<u32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(a.len() as u64);
    (index - expected) / ((sa + sb) / 2.0 - expected)
}

fn planted_recovery() -> Outcome {
    let spec = planted_spec(20_000, 6, 0.8, 11);
    let mut log = Vec::new();
    let mut truth = Vec::new();
    generate(&spec, &mut log, Some(&mut truth)).map_err(|e| e.to_string())?;
    let truth: Vec<u32> = read_truth(truth.as_slice()).map_err(|e| e.to_string())?.iter().map(|r| r.cluster).collect();
    let records = RecordStream::new(log.as_slice(), Schema::default(), StreamOptions::default())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    ensure(records.len() == 20_000 && truth.len() == 20_000, || format!("{} records", records.len()))?;

    let data = CategoricalMatrix::from_records(&records, &PLANTED_FIELDS);
    let model = kmodes_fit(&data, &KModesParams { n_clusters: 6, ..KModesParams::default() }).map_err(|e| e.to_string())?;
    let ari = adjusted_rand_index(&model.labels, &truth).map_err(|e| e.to_string())?;
    let oracle = ari_oracle(&model.labels, &truth);
    ensure((ari - oracle).abs() <= ARI_ORACLE_TOL, || format!("ARI {ari} but pair counting gives {oracle}"))?;
    ensure(ari >= ARI_MIN, || format!("ARI {ari:.4} < {ARI_MIN}"))?;

    let grid = grid_search_kmodes(&data, 2, 12, &KModesParams::default()).map_err(|e| e.to_string())?;
    let best = grid.rows.iter().find(|r| r.k == grid.best_k).and_then(|r| r.silhouette).unwrap_or(f64::NAN);
    ensure(grid.best_k == 6, || format!("grid picked k={} (silhouette {best:.4})", grid.best_k))?;
    Ok(format!("k=6 ARI {ari:.4}; grid 2..12 picks k=6 (silhouette {best:.4})"))
}

// 7 ------------------------------------------------------------------------

fn status_csv(path: &Path) -> Result<Vec<(u16, u64)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    ensure(lines.next() == Some("statuscode,count"), || format!("{}: bad header", path.display()))?;
    lines
        .map(|l| {
            let (c, n) = l.split_once(',').ok_or_else(|| format!("bad row {l:?}"))?;
            Ok((c.parse().map_err(|_| format!("bad code {c:?}"))?, n.parse().map_err(|_| format!("bad count {n:?}"))?))
        })
        .collect()
}

fn presets(tmp: &Path) -> Outcome {
    let cases: [(&str, &str, &[(u16, u64)]); 2] = [
        ("host7_crawler", "host7", &[(400, 20272), (412, 11078), (503, 129), (403, 12)]),
        ("host3_web_forbidden", "host3", &[(403, 1197), (405, 40)]),
    ];
    let mut notes = Vec::new();
    for (name, host, want) in cases {
        let log = tmp.join(format!("{name}.tsv"));
        let out = tmp.join(format!("{name}-run"));
        cdnerr_ok(&["synth", "--preset", name, "--out", s(&log)])?;
        cdnerr_ok(&["run", "--input", s(&log), "--out", s(&out)])?;
        for algo in ["kmeans", "kmodes"] {
            let got = status_csv(&out.join("hosts").join(host).join(algo).join("report").join("status_codes.csv"))?;
            let mut want_sorted = want.to_vec();
            want_sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            ensure(got == want_sorted, || format!("{name} {algo}: {got:?}"))?;
        }
        notes.push(format!("{host} {want:?}"));
    }
    Ok(notes.join("; "))
}

// 8 ------------------------------------------------------------------------

fn parameter_fidelity() -> Outcome {
    let out = cdnerr_ok(&["run", "--dry-run"])?;
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let km = &cfg["cluster"]["kmeans"];
    let kmo = &cfg["cluster"]["kmodes"];
    let want_km = serde_json::json!({
        "n_clusters": 6, "init": "k-means++", "max_iter": 300, "n_init": 10, "random_state": 0
    });
    ensure(*km == want_km, || format!("k-means params {km}"))?;
    ensure(kmo["n_clusters"] == 8 && kmo["init"] == "huang" && kmo["n_init"] == 5, || format!("k-modes params {kmo}"))?;
    ensure(cfg["cluster"]["grid"].is_null(), || "grid search enabled by default".into())?;
    ensure(cfg["ingest"]["min_host_count"] == 1000, || "host threshold differs".into())?;
    let out = cdnerr_ok(&["cluster", "--algo", "kmodes", "--records", "x.tsv", "--out", "unused", "--dry-run"])?;
    let c: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    ensure(c["params"]["n_clusters"] == 8 && c["params"]["init"] == "huang", || format!("cluster dry run {c}"))?;
    ensure(!Path::new("unused").exists(), || "dry run created its output directory".into())?;
    Ok(format!("kmeans {km}; kmodes {kmo}"))
}

// 9 ------------------------------------------------------------------------

const SCALE_SPEC: &str = r#"
seed = 9
total_lines = 10000000
error_rate = 0.01

[[hosts]]
host = "edge-live"
service = "live_tv"
weight = 0.5
background.protocol = { "HTTP/1.1" = 0.7, "HTTP/2.0" = 0.3 }
background.contenttype = { "video/mp2t" = 0.8, "application/vnd.apple.mpegurl" = 0.2 }
background.path = { many = 5000, prefix = "/live/channel/segment_" }
background.devicefamily = { many = 300, prefix = "device-" }
background.uafamily = { many = 40, prefix = "ua-" }
background.osfamily = { many = 12, prefix = "os-" }
background.livechannel = { many = 200, prefix = "channel-" }
background.contentlength = { range = [1000, 3000000] }
background.timetoserv = { range = [0, 2] }
background.hit = { hit = 0.85, miss = 0.15 }
[[hosts.clusters]]
size_fraction = 0.7
status_code_mix = { "502" = 0.9, "503" = 0.1 }
attributes.path = { many = 100, prefix = "/live/channel/segment_" }
[[hosts.clusters]]
size_fraction = 0.3
status_code_mix = { "404" = 1 }

[[hosts]]
host = "edge-vod"
service = "vod"
weight = 0.3
background.protocol = { "HTTP/1.1" = 1 }
background.path = { many = 20000, prefix = "/vod/asset/" }
background.uid = { many = 100000, prefix = "user-" }
background.contentlength = { range = [1000, 30000000] }
background.cachename = { many = 30, prefix = "cache-" }
[[hosts.clusters]]
size_fraction = 1
status_code_mix = { "403" = 0.5, "416" = 0.5 }

[[hosts]]
host = "edge-web"
service = "web"
weight = 0.2
background.path = { many = 800, prefix = "/site/page-" }
background.uafamily = { Chrome = 0.6, Firefox = 0.3, Safari = 0.1 }
[[hosts.clusters]]
size_fraction = 1
status_code_mix = { "404" = 0.8, "500" = 0.2 }
"#;

#[derive(Default, PartialEq, Debug)]
struct Counts {
    lines: u64,
    errors: u64,
    per_host: BTreeMap<String, u64>,
}

/// Independent single pass: split each data line on TAB and read the
/// status and host columns directly.
fn reference_counts(path: &Path) -> Result<Counts, String> {
    let status_col = Field::StatusCode.index();
    let host_col = Field::Host.index();
    let reader = BufReader::with_capacity(1 << 20, fs::File::open(path).map_err(|e| e.to_string())?);
    let mut c = Counts::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if i == 0 {
            continue;
        }
        c.lines += 1;
        let cols: Vec<&str> = line.split('\t').collect();
        let status: u16 = cols[status_col].parse().map_err(|_| format!("line {i}: bad status"))?;
        if status >= 400 {
            c.errors += 1;
            *c.per_host.entry(cols[host_col].to_string()).or_default() += 1;
        }
    }
    Ok(c)
}

/// Run a child to completion and return its exit code and peak RSS in
/// bytes.
fn run_measured(args: &[&str]) -> Result<(i32, u64), String> {
    let child = Command::new(BIN).args(args).stdout(std::process::Stdio::null()).spawn().map_err(|e| e.to_string())?;
    let pid = child.id() as libc::pid_t;
    let mut status = 0;
    // SAFETY: rusage is plain data; wait4 writes into the two locals.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let rc = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
    ensure(rc == pid, || format!("wait4 returned {rc}"))?;
    let code = if libc::WIFEXITED(status) { libc::WEXITSTATUS(status) } else { -1 };
    // ru_maxrss is in kilobytes on Linux.
    Ok((code, usage.ru_maxrss as u64 * 1024))
}

fn streaming_scale(tmp: &Path) -> Outcome {
    let spec = SynthSpec::from_toml(SCALE_SPEC).map_err(|e| e.to_string())?;
    let log = tmp.join("scale.tsv");
    let t = Instant::now();
    let summary = generate_files(&spec, &log, None).map_err(|e| e.to_string())?;
    let gen_time = t.elapsed();
    let size = fs::metadata(&log).map_err(|e| e.to_string())?.len();

    let out = tmp.join("scale-out");
    let t = Instant::now();
    let (code, rss) = run_measured(&["ingest", "--input", s(&log), "--out", s(&out)])?;
    let ingest_time = t.elapsed();
    ensure(code == 0, || format!("ingest exited {code}"))?;

    let reference = reference_counts(&log)?;
    let stats = read_json(&out.join("ingest_stats.json"))?;
    let st = &stats["stats"];
    let got = Counts {
        lines: st["total_lines"].as_u64().unwrap_or(0),
        errors: st["error_lines"].as_u64().unwrap_or(0),
        per_host: serde_json::from_value(st["per_host_counts"].clone()).map_err(|e| e.to_string())?,
    };
    fs::remove_file(&log).ok();
    ensure(got == reference, || format!("ingest {got:?} vs reference {reference:?}"))?;
    ensure(st["parsed"].as_u64() == Some(reference.lines) && st["rejected"] == 0, || format!("stats {st}"))?;
    ensure(reference.lines == summary.lines && reference.errors == summary.error_lines, || {
        "reference disagrees with the generator".into()
    })?;
    ensure(rss < PEAK_RSS_MAX_BYTES, || format!("peak RSS {} MiB", rss >> 20))?;
    Ok(format!(
        "{} lines, {:.2} GB, {} errors; peak RSS {} MiB; generate {:.0?}, ingest {:.0?}",
        reference.lines,
        size as f64 / 1e9,
        reference.errors,
        rss >> 20,
        gen_time,
        ingest_time
    ))
}

// 10 -----------------------------------------------------------------------

fn tree_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(tmp: &Path) -> Outcome {
    let mut inputs = Vec::new();
    for name in ["host1_overload", "host3_web_forbidden"] {
        let log = tmp.join(format!("det-{name}.tsv"));
        cdnerr_ok(&["synth", "--preset", name, "--seed", "5", "--out", s(&log)])?;
        inputs.push(log);
    }
    let mut trees = Vec::new();
    for (i, threads) in ["1", "1", "8", "8"].iter().enumerate() {
        let out = tmp.join(format!("det-run{i}"));
        let mut args = vec!["--threads", threads, "run", "--seed", "5", "--out", s(&out), "--input"];
        args.extend(inputs.iter().map(|p| s(p)));
        cdnerr_ok(&args)?;
        trees.push(tree_files(&out));
    }
    let base = &trees[0];
    ensure(base.contains_key(Path::new("manifest.json")), || "no manifest".into())?;
    for (i, t) in trees.iter().enumerate().skip(1) {
        ensure(t.keys().eq(base.keys()), || format!("run {i} wrote a different file set"))?;
        for (path, bytes) in base {
            ensure(t[path] == *bytes, || format!("run {i}: {} differs", path.display()))?;
        }
    }
    let manifest: serde_json::Value = serde_json::from_slice(&base[Path::new("manifest.json")]).unwrap();
    let listed = manifest["artifacts"].as_array().map_or(0, Vec::len);
    ensure(listed + 1 == base.len(), || format!("manifest lists {listed} of {} files", base.len() - 1))?;
    Ok(format!("4 runs (threads 1,1,8,8), {} files byte-identical", base.len()))
}

// ---------------------------------------------------------------------------

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(u32, &str, Duration, Check)> = vec![
        (1, "error taxonomy", Duration::from_secs(1), Box::new(taxonomy)),
        (2, "host threshold", Duration::from_secs(1), Box::new(|| host_threshold(dir))),
        (3, "chi-square oracle", Duration::from_secs(5), Box::new(chi_square_oracle)),
        (4, "small-instance optimality", Duration::from_secs(30), Box::new(small_optimality)),
        (5, "objective monotonicity", Duration::from_secs(60), Box::new(monotonicity)),
        (6, "planted-cluster recovery", Duration::from_secs(300), Box::new(planted_recovery)),
        (7, "preset status histograms", Duration::from_secs(120), Box::new(|| presets(dir))),
        (8, "default parameter fidelity", Duration::from_secs(1), Box::new(parameter_fidelity)),
        (9, "streaming scale", Duration::from_secs(600), Box::new(|| streaming_scale(dir))),
        (10, "determinism", Duration::from_secs(600), Box::new(|| determinism(dir))),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    let mut stdout = std::io::stdout();
    for (id, name, limit, check) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check())).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let elapsed = t.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {limit:?} limit")),
            Err(e) => (false, e),
        };
        failed += !ok as u32;
        let verdict = if ok { "PASS" } else { "FAIL" };
        let _ = writeln!(stdout, "criterion {id:>2} {verdict} {name} [{elapsed:.2?} / {limit:?}]: {detail}");
        let _ = stdout.flush();
    }
    if failed > 0 {
        let _ = writeln!(stdout, "{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

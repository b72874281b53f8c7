use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dap-planner"));
    c.env_clear().env("PATH", std::env::var_os("PATH").unwrap_or_default());
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn write_nodes(dir: &Path, rows: &[&str]) -> String {
    let path = dir.join("nodes.csv");
    fs::write(&path, format!("id,kind,x,y,height,indoor\n{}\n", rows.join("\n"))).unwrap();
    path.to_str().unwrap().to_string()
}

/// All traffic classes silenced.
const ZERO_TRAFFIC: [&str; 12] = [
    "--set",
    "traffic.mr_periodic.arrival_interval=inf",
    "--set",
    "traffic.mr_request.arrival_interval=inf",
    "--set",
    "traffic.mr_response.arrival_interval=inf",
    "--set",
    "traffic.power_quality.arrival_interval=inf",
    "--set",
    "traffic.remote_control.arrival_interval=inf",
    "--set",
    "traffic.alert.arrival_interval=inf",
];

fn star(dir: &Path, n: usize) -> String {
    let mut rows = vec!["1000,pole,0,0,,".to_string()];
    for k in 0..n {
        let a = k as f64 * std::f64::consts::TAU / n as f64;
        rows.push(format!("{},sm,{},{},,", k + 1, 120.0 * a.cos(), 120.0 * a.sin()));
    }
    let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
    write_nodes(dir, &refs)
}

fn data_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect()
}

#[test]
fn generate_is_reproducible_and_matches_rural_density() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        let o = run(&["generate", "--profile", "rural", "--sms", "47", "--poles", "43", "--seed", "1", "--out", d.path().to_str().unwrap(), "-q"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["scenario.csv", "planner.conf"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(a.path().join("scenario.csv")).unwrap();
    assert!(text.starts_with("# dap-planner "));
    assert!(text.lines().next().unwrap().contains("seed=1 config="));
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().filter(|r| r[1] == "sm").count(), 47);
    assert_eq!(rows.iter().filter(|r| r[1] == "pole").count(), 43);
    // 47 meters at 23.5 per km² occupy a 2 km² square.
    let side = 2.0f64.sqrt() * 1000.0;
    for r in &rows {
        let (x, y): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!((0.0..=side).contains(&x) && (0.0..=side).contains(&y));
    }
}

#[test]
fn missing_sms_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    let o = run(&["generate", "--profile", "rural", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--sms"));
}

#[test]
fn single_meter_plan() {
    let d = TempDir::new().unwrap();
    let nodes = write_nodes(d.path(), &["1,sm,50,0,,", "2,pole,0,0,,"]);
    let o = run(&["plan", "--scenario", &nodes, "--out", d.path().to_str().unwrap(), "--check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(d.path().join("summary.txt")).unwrap();
    assert!(summary.contains("\ndaps: 1 "), "{summary}");
    assert!(summary.contains("\nmax hops: 1\n"), "{summary}");
    assert_eq!(String::from_utf8_lossy(&o.stdout), summary);
}

#[test]
fn chain_outputs_are_well_formed() {
    let d = TempDir::new().unwrap();
    let rows: Vec<String> =
        std::iter::once("100,pole,0,0,,".to_string()).chain((1..=6).map(|k| format!("{k},sm,{},0,,", 300 * k))).collect();
    let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
    let nodes = write_nodes(d.path(), &refs);
    let out = d.path().join("out");
    let o = run(&["plan", "--scenario", &nodes, "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    for f in fs::read_dir(&out).unwrap() {
        let f = f.unwrap().path();
        let text = fs::read_to_string(&f).unwrap();
        let ok = text.starts_with("# dap-planner 0.1.0 seed=4 config=") || text.contains("\"header\": \"dap-planner 0.1.0 seed=4 config=");
        assert!(ok, "{} lacks the header", f.display());
    }
    let hops = fs::read_to_string(out.join("hops_cdf.csv")).unwrap();
    assert_eq!(hops.lines().nth(1), Some("hops,cdf"));
    let rows = data_rows(&hops);
    assert_eq!(rows.len(), 6);
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0] && w[1][1] >= w[0][1]);
    }
    assert_eq!(rows.last().unwrap()[1], 1.0);
    for f in ["connections_cdf.csv", "queue_delay_cdf.csv"] {
        let rows = data_rows(&fs::read_to_string(out.join(f)).unwrap());
        assert!(!rows.is_empty());
        for w in rows.windows(2) {
            assert!(w[1][0] > w[0][0], "{f}");
            for c in 1..w[0].len() {
                assert!(w[1][c] >= w[0][c] && (0.0..=1.0).contains(&w[1][c]), "{f}");
            }
        }
        assert!(rows.last().unwrap()[1..].iter().all(|&c| c == 1.0), "{f}");
    }
    let sol: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["max_hops"], 6);
    let geo: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solution.geojson")).unwrap()).unwrap();
    assert_eq!(geo["type"], "FeatureCollection");
    // Seven nodes and six uplinks.
    assert_eq!(geo["features"].as_array().unwrap().len(), 13);
}

#[test]
fn unconnected_meter_exits_three() {
    let d = TempDir::new().unwrap();
    let nodes = write_nodes(d.path(), &["1,sm,50,0,,", "2,sm,5000,0,,", "3,pole,0,0,,"]);
    let o = run(&["plan", "--scenario", &nodes, "--out", d.path().to_str().unwrap(), "-q"]);
    assert_eq!(code(&o), 3);
    let sol: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["unconnected"], serde_json::json!([2]));
}

#[test]
fn infeasible_radio_budget_exits_four() {
    let d = TempDir::new().unwrap();
    let nodes = write_nodes(d.path(), &["1,sm,50,0,,", "2,pole,0,0,,"]);
    let o = run(&["plan", "--scenario", &nodes, "--out", d.path().to_str().unwrap(), "--set", "radio.tx_power_dbm=-80"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("radio budget infeasible"));
}

#[test]
fn zero_traffic_validates_with_zero_gaps() {
    let d = TempDir::new().unwrap();
    let nodes = star(d.path(), 6);
    let mut args = vec!["validate", "--scenario", &nodes, "--out", d.path().to_str().unwrap(), "-q"];
    args.extend(ZERO_TRAFFIC);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(d.path().join("validation.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 6 * 6);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!((f[3], f[6], f[7]), ("1", "0", "false"), "{r}");
    }
}

#[test]
fn small_star_validates_and_corruption_is_caught() {
    let d = TempDir::new().unwrap();
    let nodes = star(d.path(), 8);
    let dir = d.path().to_str().unwrap();
    let sim = ["--set", "sim.duration=20000", "--seed", "3"];
    let mut args = vec!["plan", "--scenario", &nodes, "--out", dir, "-q"];
    args.extend(sim);
    assert_eq!(code(&run(&args)), 0);
    let solution = p(d.path(), "solution.json");
    let mut args = vec!["validate", "--scenario", &nodes, "--solution", &solution, "--out", dir, "-q", "--samples"];
    args.extend(sim);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", fs::read_to_string(d.path().join("validation_summary.txt")).unwrap_or_default());
    let samples = fs::read_to_string(d.path().join("des_samples.csv")).unwrap();
    assert_eq!(samples.lines().nth(1), Some("packet_id,src,class,gen_t,del_t,hops,lost"));
    assert!(samples.lines().count() > 100);

    args.extend(["--corrupt-analytic", "0.2"]);
    let o = run(&args);
    assert_eq!(code(&o), 5);
    let summary = fs::read_to_string(d.path().join("validation_summary.txt")).unwrap();
    assert!(summary.contains("result: fail"));
}

#[test]
fn report_regenerates_plan_outputs() {
    let d = TempDir::new().unwrap();
    let g = d.path().join("g");
    let o = run(&["generate", "--sms", "120", "--poles", "30", "--seed", "2", "--out", g.to_str().unwrap(), "-q"]);
    assert_eq!(code(&o), 0);
    let scenario = p(&g, "scenario.csv");
    let plan_dir = d.path().join("plan");
    let rep_dir = d.path().join("rep");
    let o = run(&["plan", "--scenario", &scenario, "--seed", "2", "--out", plan_dir.to_str().unwrap(), "-q"]);
    assert!(matches!(code(&o), 0 | 3));
    let sol = p(&plan_dir, "solution.json");
    let o = run(&["report", "--scenario", &scenario, "--solution", &sol, "--seed", "2", "--out", rep_dir.to_str().unwrap(), "-q"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["solution.json", "solution.geojson", "hops_cdf.csv", "connections_cdf.csv", "queue_delay_cdf.csv", "summary.txt"] {
        assert_eq!(fs::read(plan_dir.join(f)).unwrap(), fs::read(rep_dir.join(f)).unwrap(), "{f}");
    }
    // A different configuration routes differently and is refused.
    let o = run(&["report", "--scenario", &scenario, "--solution", &sol, "--set", "sm_range=40", "--out", rep_dir.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn exact_single_meter_ratio_is_one() {
    let d = TempDir::new().unwrap();
    let nodes = write_nodes(d.path(), &["1,sm,50,0,,", "2,pole,0,0,,", "3,pole,400,0,,"]);
    let o = run(&["exact", "--scenario", &nodes, "--out", d.path().to_str().unwrap(), "-q"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(d.path().join("exact.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(&row[3..7], &["1", "1", "optimal", "1"]);
}

#[test]
fn exact_refuses_oversize_instances() {
    let d = TempDir::new().unwrap();
    let o = run(&["exact", "--sms", "30", "--poles", "25", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("refused") && err.contains("20 poles"), "{err}");
}

#[test]
fn exact_sweep_reports_median() {
    let d = TempDir::new().unwrap();
    let o = run(&["exact", "--sweep", "3", "--sms", "25", "--poles", "10", "--area", "6", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("median ratio"));
    let text = fs::read_to_string(d.path().join("exact.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn environment_overrides_config() {
    let d = TempDir::new().unwrap();
    let o = bin()
        .env("DAP_RELIABILITY", "0.95")
        .env("DAP_MAC__CAP_SLOTS", "12")
        .args(["generate", "--sms", "5", "--poles", "2", "--out", d.path().to_str().unwrap(), "-q"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let conf = fs::read_to_string(d.path().join("planner.conf")).unwrap();
    assert!(conf.contains("\nreliability = 0.95\n"));
    assert!(conf.contains("\nmac.cap_slots = 12\n"));

    let o = bin().env("DAP_NO_SUCH_KEY", "1").args(["keys"]).output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn keys_lists_documented_keys() {
    let o = run(&["keys"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("mac.backoff_windows") && text.contains("DAP_"));
}

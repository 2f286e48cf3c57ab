use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn spa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spa")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(o));
}

const SMALL: &str = r#"
[grid]
n_s = 7
spacing = 1.0
n_t = 4

[trend]
a0 = 0.5
a1 = -0.1

[model]
family = "exponential_separable"
sigma2 = 0.1
phi_s = 3.0
phi_t = 1.0
"#;

fn table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_ok(&spa(&["--config", s(&cfg), "--seed", "7", "--out", s(out), "simulate"]));
    }
    let names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2, "{names:?}");
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap());
    }
    let rows = table(&a.join("replicate_0000.csv"));
    assert_eq!(rows[0], ["x", "y", "t", "value"]);
    assert_eq!(rows.len(), 1 + 7 * 7 * 4);
    let manifest = table(&a.join("manifest.csv"));
    assert_eq!(manifest[1][..3], ["replicate_0000.csv", "7", "0"]);
}

#[test]
fn seeds_and_streams_change_the_draws() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let out = dir.path().join("o");
    assert_ok(&spa(&["--config", s(&cfg), "--out", s(&out), "--jobs", "2", "simulate", "--replicates", "3"]));
    let r0 = fs::read(out.join("replicate_0000.csv")).unwrap();
    let r1 = fs::read(out.join("replicate_0001.csv")).unwrap();
    assert_ne!(r0, r1);
    assert_eq!(table(&out.join("manifest.csv")).len(), 4);
}

#[test]
fn invalid_model_exits_with_config_code() {
    let dir = TempDir::new().unwrap();
    let bad = SMALL.replace("sigma2 = 0.1", "sigma2 = -0.1").replace("phi_t = 1.0", "phi_t = 0.0");
    let cfg = write_config(dir.path(), "bad.toml", &bad);
    let o = spa(&["--config", s(&cfg), "--out", s(dir.path()), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("spa-error: config:"), "{err}");
    assert!(err.contains("sigma2") && err.contains("phi_t"), "{err}");
}

#[test]
fn missing_sections_and_bad_keys_exit_with_config_code() {
    let dir = TempDir::new().unwrap();
    let o = spa(&["--out", s(dir.path()), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(dir.path(), "typo.toml", "[fit]\nfamly = \"iacocesare\"\n");
    let o = spa(&["--config", s(&cfg), "--out", s(dir.path()), "fit"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("famly"));
}

#[test]
fn monte_carlo_scenarios_parse_with_both_slopes() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (name, slope) in [("exponential_negative_slope.toml", "-0.1"), ("exponential_positive_slope.toml", "0.1")] {
        let text = fs::read_to_string(root.join(name)).unwrap();
        let v: toml::Value = toml::from_str(&text).unwrap();
        assert_eq!(v["grid"]["n_s"].as_integer(), Some(20));
        assert_eq!(v["grid"]["n_t"].as_integer(), Some(10));
        assert_eq!(v["trend"]["a1"].as_float().unwrap().to_string(), slope);
        assert_eq!(v["model"]["phi_s"].as_float(), Some(6.676));
        assert_eq!(v["simulate"]["replicates"].as_integer(), Some(500));
    }
}

#[test]
fn monte_carlo_scenario_simulates_one_replicate() {
    let dir = TempDir::new().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/exponential_negative_slope.toml");
    let o = spa(&["--config", s(&cfg), "--out", s(dir.path()), "simulate", "--replicates", "1"]);
    assert_ok(&o);
    let rows = table(&dir.path().join("replicate_0000.csv"));
    assert_eq!(rows.len(), 1 + 4000);
    assert_eq!(rows[4000][..3], ["20", "20", "10"]);
}

fn simulate_and_fit(dir: &Path, replicates: &str) -> PathBuf {
    let cfg = write_config(dir, "run.toml", SMALL);
    let sims = dir.join("sims");
    assert_ok(&spa(&["--config", s(&cfg), "--out", s(&sims), "simulate", "--replicates", replicates]));
    let fits = dir.join("fits");
    assert_ok(&spa(&["--config", s(&cfg), "--out", s(&fits), "fit", "--input", s(&sims)]));
    fits
}

#[test]
fn fit_emits_replicate_summary() {
    let dir = TempDir::new().unwrap();
    let fits = simulate_and_fit(dir.path(), "3");
    let summary = table(&fits.join("fit_summary.csv"));
    assert_eq!(summary[0], ["statistic", "a0", "a1", "phi_s", "phi_t", "sigma2", "percent_valid"]);
    let labels: Vec<&str> = summary[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels, ["true", "mean", "sd"]);
    assert_eq!(summary[1][1..6], ["0.500", "-0.100", "3.000", "1.000", "0.100"]);
    assert_eq!(table(&fits.join("fits.csv")).len(), 4);
    assert!(fits.join("fit_replicate_0002.csv").is_file());
}

#[test]
fn fit_empty_directory_is_an_error() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = spa(&["--out", s(dir.path()), "fit", "--input", s(&empty)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no field files"), "{}", stderr(&o));
}

#[test]
fn pa_curves_from_a_fit_are_monotone() {
    let dir = TempDir::new().unwrap();
    let fits = simulate_and_fit(dir.path(), "1");
    let cfg = write_config(
        dir.path(),
        "pa.toml",
        &format!(
            "[pa]\nfit = \"{}\"\nc = [0.2, 0.5]\nh = {{ from = 0, to = 6, step = 0.5 }}\nu = [0, 1, 2]\n",
            s(&fits.join("fit_replicate_0000.csv"))
        ),
    );
    let out = dir.path().join("pa");
    assert_ok(&spa(&["--config", s(&cfg), "--out", s(&out), "pa"]));
    let rows = table(&out.join("pa_curve.csv"));
    assert_eq!(rows[0], ["u", "c", "h", "psi", "sd"]);
    assert_eq!(rows.len(), 1 + 3 * 2 * 13);
    for w in rows[1..].windows(2) {
        if w[0][0] == w[1][0] && w[0][1] == w[1][1] {
            let (a, b): (f64, f64) = (w[0][3].parse().unwrap(), w[1][3].parse().unwrap());
            assert!(b <= a + 1e-12);
        }
    }
    for u in ["0", "1", "2"] {
        let svg = fs::read_to_string(out.join(format!("pa_u{u}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }
}

#[test]
fn pa_rejects_empty_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "pa.toml", &format!("{SMALL}\n[pa]\nh = []\n"));
    let o = spa(&["--config", s(&cfg), "--out", s(dir.path()), "pa"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pa_wave_model_is_not_monotone() {
    let dir = TempDir::new().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/sensitivity_wave.toml");
    let o = spa(&["--config", s(&cfg), "--out", s(dir.path()), "pa"]);
    assert_ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("increases"));
}

#[test]
fn test_at_null_value_has_unit_p_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "t.toml",
        "[test]\npsi_hat = 0.9\nsd = 0.05\npsi0 = 0.9\nalternative = \"two_sided\"\n",
    );
    assert_ok(&spa(&["--config", s(&cfg), "--out", s(dir.path()), "test"]));
    let rows = table(&dir.path().join("pa_test.csv"));
    assert_eq!(rows[0], ["psi_hat", "sd", "psi0", "z", "p_value", "alternative", "level", "reject"]);
    assert_eq!(rows[1][4], "1");
    assert_eq!(rows[1][7], "false");
}

#[test]
fn test_from_fit_defaults_to_less() {
    let dir = TempDir::new().unwrap();
    let fits = simulate_and_fit(dir.path(), "1");
    let cfg = write_config(
        dir.path(),
        "t.toml",
        &format!("[test]\nfit = \"{}\"\nc = 0.5\nh = 1.0\n", s(&fits.join("fit_replicate_0000.csv"))),
    );
    let o = spa(&["--config", s(&cfg), "--out", s(dir.path()), "test"]);
    assert_ok(&o);
    let rows = table(&dir.path().join("pa_test.csv"));
    assert_eq!(rows[1][2], "0.95");
    assert_eq!(rows[1][5], "less");
}

#[test]
fn test_rejects_psi0_above_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "t.toml", "[test]\npsi_hat = 0.9\nsd = 0.05\npsi0 = 1.2\n");
    let o = spa(&["--config", s(&cfg), "--out", s(dir.path()), "test"]);
    assert_eq!(o.status.code(), Some(2));
}

fn save_png(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
    image::RgbImage::from_fn(w, h, |x, y| image::Rgb(f(x, y))).save(path).unwrap();
}

#[test]
fn gcc_single_image_round_trip() {
    let dir = TempDir::new().unwrap();
    let imgs = dir.path().join("imgs");
    fs::create_dir(&imgs).unwrap();
    save_png(&imgs.join("site_2010_07_15_120000.png"), 4, 2, |x, _| if x < 2 { [0, 255, 0] } else { [10, 10, 10] });
    let cfg = write_config(dir.path(), "g.toml", "[gcc]\ninput_dir = \"imgs\"\nwindow = 2\n");
    let out = dir.path().join("out");
    let o = spa(&["--config", s(&cfg), "--out", s(&out), "gcc"]);
    assert_ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("2 x 1 pixels"));
    let rows = table(&out.join("gcc_field.csv"));
    assert_eq!(rows[0], ["x", "y", "t", "value"]);
    assert_eq!(rows.len(), 3);
    let v: Vec<f64> = rows[1..].iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(v, [1.0, 1.0 / 3.0]);
}

#[test]
fn gcc_stacks_dated_images_by_year() {
    let dir = TempDir::new().unwrap();
    let imgs = dir.path().join("imgs");
    fs::create_dir(&imgs).unwrap();
    for year in [2008, 2010, 2009] {
        save_png(&imgs.join(format!("forest_{year}_08_01.png")), 30, 45, |x, y| [(x * 3) as u8, 120, (y * 2) as u8]);
    }
    let cfg = write_config(dir.path(), "g.toml", "[gcc]\ninput_dir = \"imgs\"\nclip = [0, 0, 30, 30]\n");
    let out = dir.path().join("out");
    assert_ok(&spa(&["--config", s(&cfg), "--out", s(&out), "gcc"]));
    let rows = table(&out.join("gcc_field.csv"));
    assert_eq!(rows.len(), 1 + 4 * 3);
    let images = table(&out.join("gcc_images.csv"));
    let t: Vec<&str> = images[1..].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(t, ["1", "2", "3"]);
}

#[test]
fn gcc_missing_directory_names_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "g.toml", "[gcc]\ninput_dir = \"nowhere\"\n");
    let o = spa(&["--config", s(&cfg), "--out", s(dir.path()), "gcc"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere"));
}

#[test]
fn variogram_of_constant_field_is_zero() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("x,y,t,value\n");
    for t in 1..=3 {
        for y in 1..=4 {
            for x in 1..=4 {
                text.push_str(&format!("{x},{y},{t},2.5\n"));
            }
        }
    }
    let field = write_config(dir.path(), "const.csv", &text);
    let o = spa(&["--out", s(dir.path()), "variogram", "--input", s(&field)]);
    assert_ok(&o);
    let rows = table(&dir.path().join("variogram.csv"));
    assert_eq!(rows[0], ["h", "u", "semivariance", "count"]);
    assert!(rows.len() > 1);
    for r in &rows[1..] {
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn variogram_simulation_is_reproducible_with_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "v.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_ok(&spa(&["--config", s(&cfg), "--seed", "3", "--out", s(out), "variogram"]));
    }
    for n in ["residuals.csv", "variogram.csv", "trend.csv", "variogram_spatial.svg"] {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
}

//! Subcommand implementations. Each writes its tables into the output
//! directory and returns a short human-readable report.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rayon::ThreadPool;
use spa_core::agreement::{
    pa_curve, pa_test, write_curve, z_test, PaModel, PaTestResult, MONOTONE_REMARK,
};
use spa_core::covariance::{validate_model, validate_st_model, CovarianceModel, SpatioTemporalModel};
use spa_core::estimation::{
    detrend_field, empirical_variogram, fit, site_extent, summarize, FitResult, VariogramBins,
};
use spa_core::imagery::{self, GccRaster, RgbRaster};
use spa_core::randomfield::{BivariateSimulator, FieldSample, GridSpec, StObservation, StSimulator};

use crate::config::{GccOrder, ModelSpec, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::output::{ensure_dir, list_files, read_field, stem, write_atomic, write_text};
use crate::plot::{Plot, Series, Style};

pub const DEFAULT_SEED: u64 = 1;
pub const MANIFEST: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str = "file,seed,stream,jitter";
pub const FITS_FILE: &str = "fits.csv";
pub const SUMMARY_FILE: &str = "fit_summary.csv";
pub const CURVE_FILE: &str = "pa_curve.csv";
pub const TEST_FILE: &str = "pa_test.csv";
pub const TEST_HEADER: &str = "psi_hat,sd,psi0,z,p_value,alternative,level,reject";
pub const GCC_FIELD_FILE: &str = "gcc_field.csv";
pub const GCC_IMAGES_FILE: &str = "gcc_images.csv";
pub const GCC_IMAGES_HEADER: &str = "file,t,width,height,mean_gcc,missing";
pub const VARIOGRAM_FILE: &str = "variogram.csv";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const TREND_FILE: &str = "trend.csv";

/// Resolved global settings shared by every subcommand.
pub struct Run {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub pool: ThreadPool,
}

impl Run {
    pub fn new(cfg: RunConfig, seed: Option<u64>, jobs: Option<usize>, out: Option<PathBuf>) -> CliResult<Self> {
        let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
        let jobs = jobs.or(cfg.jobs).unwrap_or(0);
        let out = out.or_else(|| cfg.out.as_ref().map(|p| cfg.resolve(p))).unwrap_or_else(|| PathBuf::from("."));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))?;
        ensure_dir(&out)?;
        Ok(Self { cfg, seed, out, pool })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn input(&self, given: Option<PathBuf>, configured: &Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
        let p = given
            .or_else(|| configured.as_ref().map(|p| self.cfg.resolve(p)))
            .ok_or_else(|| CliError::config(format!("no input given; set {key} or pass --input")))?;
        if !p.exists() {
            return Err(CliError::config(format!("input not found: {}", p.display())));
        }
        Ok(p)
    }
}

fn require_grid(cfg: &RunConfig) -> CliResult<GridSpec> {
    let g = cfg.grid.ok_or_else(|| CliError::config("a [grid] section is required"))?;
    g.check()?;
    Ok(g)
}

fn check_st(model: &SpatioTemporalModel) -> CliResult<()> {
    validate_st_model(model).into_result()?;
    Ok(())
}

fn check_bivariate(model: &CovarianceModel) -> CliResult<()> {
    validate_model(model).into_result()?;
    Ok(())
}

fn write_svg(path: &Path, plot: &Plot) -> CliResult<()> {
    write_text(path, &plot.render())
}

/// Draw `replicates` fields with streams `0..replicates` of one seed.
pub fn simulate(run: &Run, replicates: Option<usize>) -> CliResult<String> {
    let model = run.cfg.require_model()?;
    let grid = require_grid(&run.cfg)?;
    let n = replicates.unwrap_or(run.cfg.simulate.replicates);
    if n == 0 {
        return Err(CliError::config("replicate count must be positive"));
    }
    let seed = run.seed;
    let (draw, jitter): (Box<dyn Fn(u64) -> FieldSample + Sync>, f64) = match model {
        ModelSpec::SpatioTemporal(m) => {
            check_st(&m)?;
            let sim = StSimulator::new(grid, m)?;
            let trend = run.cfg.trend_or_zero();
            let j = sim.jitter();
            (Box::new(move |k| sim.sample(&trend, seed, k)), j)
        }
        ModelSpec::Bivariate(m) => {
            check_bivariate(&m)?;
            let sim = BivariateSimulator::new(grid, m)?;
            let [mx, my] = run.cfg.simulate.means;
            let j = sim.jitter();
            (Box::new(move |k| sim.sample((mx, my), seed, k)), j)
        }
    };
    let width = (n - 1).to_string().len().max(4);
    let names: Vec<String> = (0..n).map(|k| format!("replicate_{k:0width$}.csv")).collect();
    run.pool.install(|| {
        names.par_iter().enumerate().try_for_each(|(k, name)| {
            let sample = draw(k as u64);
            write_atomic(&run.path(name), |w| Ok(sample.write_table(w)?))
        })
    })?;
    write_atomic(&run.path(MANIFEST), |w| {
        writeln!(w, "{MANIFEST_HEADER}")?;
        for (k, name) in names.iter().enumerate() {
            writeln!(w, "{name},{seed},{k},{jitter:e}")?;
        }
        Ok(())
    })?;
    let mut report = format!("simulated {n} replicate(s) on {} points, seed {seed}", grid.n_points());
    if jitter > 0.0 {
        report.push_str(&format!("\nwarning: covariance needed diagonal jitter {jitter:e}"));
    }
    Ok(report)
}

/// Field files named by a manifest, or every table in a directory.
fn field_inputs(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let manifest = path.join(MANIFEST);
    let files = if manifest.is_file() {
        let text = std::fs::read_to_string(&manifest).context(manifest.display())?;
        text.lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| path.join(l.split(',').next().unwrap_or_default()))
            .collect()
    } else {
        list_files(path, &["csv"])?
    };
    if files.is_empty() {
        return Err(CliError::config(format!("no field files in {}", path.display())));
    }
    Ok(files)
}

fn truth_vector(run: &Run, fit: &FitResult) -> CliResult<Option<Vec<f64>>> {
    let names = fit.param_names();
    let truth = match (&run.cfg.fit.truth, run.cfg.model()?) {
        (Some(t), _) => Some(t.clone()),
        (None, Some(ModelSpec::SpatioTemporal(m))) if m.family() == fit.family => {
            let trend = run.cfg.trend_or_zero();
            let mut t = vec![trend.a0, trend.a1];
            t.extend(m.params());
            Some(t)
        }
        _ => None,
    };
    if let Some(t) = &truth {
        if t.len() != names.len() {
            return Err(CliError::config(format!(
                "[fit].truth has {} values but the model has {} parameters ({})",
                t.len(),
                names.len(),
                names.join(", ")
            )));
        }
    }
    Ok(truth)
}

/// Fit every input field and summarize the replicates.
pub fn fit_fields(run: &Run, input: Option<PathBuf>) -> CliResult<String> {
    let input = run.input(input, &run.cfg.fit.input, "[fit].input")?;
    let files = field_inputs(&input)?;
    let family = run.cfg.fit.family()?;
    let config = run.cfg.fit.pairwise();
    let fits: Vec<FitResult> = run.pool.install(|| {
        files
            .par_iter()
            .map(|path| {
                let sample = read_field(path)?;
                let obs = sample.st_observations().context(path.display())?;
                fit(obs, family, &config).context(path.display())
            })
            .collect::<CliResult<_>>()
    })?;
    for (path, f) in files.iter().zip(&fits) {
        write_atomic(&run.path(&format!("fit_{}.csv", stem(path))), |w| Ok(f.write_table(w)?))?;
    }
    let names = fits[0].param_names();
    write_atomic(&run.path(FITS_FILE), |w| {
        writeln!(w, "file,{},loglik,pseudo_aic,valid,converged,evaluations", names.join(","))?;
        for (path, f) in files.iter().zip(&fits) {
            let theta: Vec<String> = f.theta().iter().map(|x| x.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                stem(path),
                theta.join(","),
                f.loglik,
                f.pseudo_aic,
                f.valid,
                f.converged,
                f.evaluations
            )?;
        }
        Ok(())
    })?;
    let summary = summarize(&fits)?;
    let truth = truth_vector(run, &fits[0])?;
    let mut table = Vec::new();
    summary.write_table(truth.as_deref(), &mut table)?;
    write_atomic(&run.path(SUMMARY_FILE), |w| Ok(w.write_all(&table)?))?;
    let mut report = format!(
        "fitted {} field(s) with the {} likelihood; {} valid\n{}",
        summary.n_fits,
        config.likelihood.name(),
        summary.n_valid,
        String::from_utf8_lossy(&table).trim_end()
    );
    let warned = fits.iter().filter(|f| !f.warnings.is_empty()).count();
    if warned > 0 {
        report.push_str(&format!("\nwarning: {warned} fit(s) reported warnings; see the fit_*.csv tables"));
    }
    Ok(report)
}

fn read_fit(run: &Run, path: &Path) -> CliResult<FitResult> {
    let path = run.cfg.resolve(path);
    let file = std::fs::File::open(&path).context(path.display())?;
    FitResult::read_table(BufReader::new(file)).context(path.display())
}

/// Model to evaluate from the `[model]`/`[trend]` sections.
fn configured_pa_model(cfg: &RunConfig, mu_d: f64) -> CliResult<PaModel> {
    Ok(match cfg.require_model()? {
        ModelSpec::SpatioTemporal(model) => {
            check_st(&model)?;
            PaModel::SpatioTemporal { model, trend: cfg.trend_or_zero() }
        }
        ModelSpec::Bivariate(model) => {
            check_bivariate(&model)?;
            PaModel::Spatial { model, mu_d }
        }
    })
}

fn label(x: f64) -> String {
    format!("{x}").replace('-', "m")
}

/// Agreement curves over the configured grids, one plot per time lag.
pub fn pa(run: &Run) -> CliResult<String> {
    let sec = &run.cfg.pa;
    let (model, uncertainty, mut notes) = match &sec.fit {
        Some(p) => {
            let f = read_fit(run, p)?;
            let unc = f.uncertainty();
            let notes = if unc.is_none() {
                vec!["warning: the fit has no parameter covariance; sd column left empty".to_string()]
            } else {
                Vec::new()
            };
            (f.pa_model(), unc, notes)
        }
        None => (configured_pa_model(&run.cfg, sec.mu_d)?, None, Vec::new()),
    };
    let cs = sec.c.expand("[pa].c")?;
    let hs = sec.h.expand("[pa].h")?;
    let us = match model {
        PaModel::Spatial { .. } => vec![0.0],
        PaModel::SpatioTemporal { .. } => sec.u.expand("[pa].u")?,
    };
    let rows = pa_curve(&model, &cs, &hs, &us, uncertainty.as_ref())?;
    write_atomic(&run.path(CURVE_FILE), |w| Ok(write_curve(&rows, w)?))?;
    for &u in &us {
        let series = cs
            .iter()
            .map(|&c| Series {
                label: format!("c = {c}"),
                points: rows.iter().filter(|r| r.u == u && r.c == c).map(|r| (r.h, r.psi)).collect(),
                style: Style::Line,
            })
            .collect();
        let title = match model {
            PaModel::Spatial { .. } => "Probability of agreement".to_string(),
            PaModel::SpatioTemporal { .. } => format!("Probability of agreement, u = {u}"),
        };
        let plot = Plot { title, x_label: "h".into(), y_label: "psi".into(), series, y_range: Some((0.0, 1.0)) };
        write_svg(&run.path(&format!("pa_u{}.svg", label(u))), &plot)?;
    }
    let increasing = rows.windows(2).any(|w| w[0].u == w[1].u && w[0].c == w[1].c && w[1].psi > w[0].psi + 1e-12);
    if increasing {
        notes.push("note: psi increases with h somewhere on the grid".to_string());
    }
    notes.insert(0, format!("wrote {} curve rows and {} plot(s)", rows.len(), us.len()));
    Ok(notes.join("\n"))
}

/// One-sided or two-sided test of `H0: psi = psi0`.
pub fn test(run: &Run) -> CliResult<String> {
    let sec = &run.cfg.test;
    if !(sec.level > 0.0 && sec.level < 1.0) {
        return Err(CliError::config(format!("[test].level must lie in (0, 1), got {}", sec.level)));
    }
    let result: PaTestResult = match (sec.psi_hat, sec.sd, &sec.fit) {
        (Some(psi_hat), Some(sd), _) => z_test(psi_hat, sd * sd, sec.psi0, sec.alternative)?,
        (Some(_), None, _) | (None, Some(_), _) => {
            return Err(CliError::config("[test].psi_hat and [test].sd must be given together"))
        }
        (None, None, Some(p)) => {
            let f = read_fit(run, p)?;
            let unc = f
                .uncertainty()
                .ok_or_else(|| CliError::numerical("the fit has no parameter covariance"))?;
            let est = f.pa_model().estimate(sec.c, sec.h, sec.u, &unc)?;
            pa_test(&est, sec.psi0, sec.alternative)?
        }
        (None, None, None) => {
            return Err(CliError::config("set [test].fit, or [test].psi_hat and [test].sd"))
        }
    };
    let reject = result.rejects(sec.level);
    let line = format!(
        "{},{},{},{},{},{},{},{}",
        result.psi_hat,
        result.sd,
        result.psi0,
        result.z,
        result.p_value,
        result.alternative.name(),
        sec.level,
        reject
    );
    write_text(&run.path(TEST_FILE), &format!("{TEST_HEADER}\n{line}\n"))?;
    Ok(format!(
        "psi_hat = {:.6} (sd {:.6}), psi0 = {}, z = {:.4}, p = {:.4} ({}): {}\n{MONOTONE_REMARK}",
        result.psi_hat,
        result.sd,
        result.psi0,
        result.z,
        result.p_value,
        result.alternative.name(),
        if reject { "reject" } else { "do not reject" }
    ))
}

fn decode_image(path: &Path) -> CliResult<RgbRaster> {
    let ext = path.extension().map(|e| e.to_string_lossy().to_lowercase()).unwrap_or_default();
    if ext == "ppm" {
        let file = std::fs::File::open(path).context(path.display())?;
        return imagery::read_ppm(BufReader::new(file)).context(path.display());
    }
    let img = image::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?.to_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| p.0).collect();
    RgbRaster::new(w as usize, h as usize, pixels).context(path.display())
}

/// Image stack to G_cc field: clip, downscale, convert, stack.
pub fn gcc(run: &Run) -> CliResult<String> {
    let sec = &run.cfg.gcc;
    let dir = sec
        .input_dir
        .as_ref()
        .map(|p| run.cfg.resolve(p))
        .ok_or_else(|| CliError::config("[gcc].input_dir is required"))?;
    if !dir.is_dir() {
        return Err(CliError::config(format!("image directory not found: {}", dir.display())));
    }
    let files = list_files(&dir, &["png", "jpg", "jpeg", "ppm"])?;
    if files.is_empty() {
        return Err(CliError::config(format!("no images in {}", dir.display())));
    }
    let years: Vec<Option<i64>> = files.iter().map(|p| imagery::parse_date_stem(&stem(p)).map(|d| d.0)).collect();
    let dated = years.iter().all(Option::is_some);
    if !dated && years.iter().any(Option::is_some) {
        return Err(CliError::config("either every image name or none must carry a date"));
    }
    let rasters: Vec<GccRaster> = run.pool.install(|| {
        files
            .par_iter()
            .zip(&years)
            .map(|(path, year)| {
                let mut rgb = decode_image(path)?;
                if let Some([x0, y0, w, h]) = sec.clip {
                    rgb = imagery::clip(&rgb, x0, y0, w, h).context(path.display())?;
                }
                let mut g = match sec.order {
                    GccOrder::DownscaleFirst => {
                        imagery::gcc(&imagery::downscale_block_mean(&rgb, sec.window).context(path.display())?)
                    }
                    GccOrder::GccFirst => imagery::gcc(&rgb).downscale_mean(sec.window).context(path.display())?,
                };
                g.timestamp = *year;
                Ok(g)
            })
            .collect::<CliResult<_>>()
    })?;
    let field = imagery::to_field(&rasters)?;
    write_atomic(&run.path(GCC_FIELD_FILE), |w| Ok(field.sample.write_table(w)?))?;
    let times: Vec<f64> = match dated {
        true => years.iter().map(|y| (y.unwrap_or(0) - field.timestamps[0] + 1) as f64).collect(),
        false => (1..=files.len()).map(|k| k as f64).collect(),
    };
    let means: Vec<f64> = rasters
        .iter()
        .map(|r| {
            let v: Vec<f64> = r.values().iter().flatten().copied().collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    write_atomic(&run.path(GCC_IMAGES_FILE), |w| {
        writeln!(w, "{GCC_IMAGES_HEADER}")?;
        for (((path, r), t), m) in files.iter().zip(&rasters).zip(&times).zip(&means) {
            let name = path.file_name().unwrap_or_default().to_string_lossy();
            writeln!(w, "{name},{t},{},{},{m},{}", r.width(), r.height(), r.missing())?;
        }
        Ok(())
    })?;
    let plot = Plot {
        title: "Mean G_cc per image".into(),
        x_label: "t".into(),
        y_label: "G_cc".into(),
        series: vec![Series {
            label: "mean".into(),
            points: times.iter().copied().zip(means.iter().copied()).collect(),
            style: Style::Points,
        }],
        y_range: None,
    };
    write_svg(&run.path("gcc_mean.svg"), &plot)?;
    let mut report = format!(
        "{} image(s) -> {} x {} pixels (width x height), {} field rows",
        files.len(),
        field.width,
        field.height,
        field.sample.len()
    );
    if field.dropped > 0 {
        report.push_str(&format!("\nwarning: dropped {} pixel(s) with R + G + B = 0", field.dropped));
    }
    Ok(report)
}

fn variogram_field(run: &Run, input: Option<PathBuf>) -> CliResult<Vec<StObservation>> {
    let sec = &run.cfg.variogram;
    if input.is_some() || sec.input.is_some() {
        let path = run.input(input, &sec.input, "[variogram].input")?;
        return Ok(read_field(&path)?.st_observations().context(path.display())?.to_vec());
    }
    match run.cfg.model()? {
        Some(ModelSpec::SpatioTemporal(m)) => {
            check_st(&m)?;
            let sim = StSimulator::new(require_grid(&run.cfg)?, m)?;
            Ok(sim.sample(&run.cfg.trend_or_zero(), run.seed, 0).st_observations()?.to_vec())
        }
        _ => Err(CliError::config(
            "set [variogram].input, or a spatiotemporal [model] and [grid] to simulate from",
        )),
    }
}

/// Detrend a field and tabulate its empirical variogram.
pub fn variogram(run: &Run, input: Option<PathBuf>) -> CliResult<String> {
    let sec = &run.cfg.variogram;
    let obs = variogram_field(run, input)?;
    let (trend, obs) = if sec.detrend {
        let (trend, residuals) = detrend_field(&obs)?;
        write_text(&run.path(TREND_FILE), &format!("a0,a1\n{},{}\n", trend.a0, trend.a1))?;
        let sample = FieldSample::spatiotemporal(residuals);
        write_atomic(&run.path(RESIDUALS_FILE), |w| Ok(sample.write_table(w)?))?;
        (Some(trend), sample.st_observations()?.to_vec())
    } else {
        (None, obs)
    };
    let h_max = sec.h_max.unwrap_or_else(|| 0.5 * site_extent(&obs));
    let bins = VariogramBins { h_width: sec.h_width, h_max, u_max: sec.u_max };
    let est = empirical_variogram(&obs, &bins)?;
    write_atomic(&run.path(VARIOGRAM_FILE), |w| Ok(est.write_table(w)?))?;

    let st_model = match run.cfg.model()? {
        Some(ModelSpec::SpatioTemporal(m)) => Some(m),
        _ => None,
    };
    let model_curve = |points: Vec<(f64, f64)>| -> CliResult<Option<Series>> {
        let Some(m) = st_model else { return Ok(None) };
        let pts = points
            .into_iter()
            .map(|(h, u)| Ok((if u == 0.0 { h } else { u }, m.sigma2() * (1.0 - m.correlation(h, u)?))))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(Some(Series { label: "model".into(), points: pts, style: Style::Line }))
    };
    let spatial = est.spatial_marginal();
    let mut series = vec![Series {
        label: "empirical".into(),
        points: spatial.iter().map(|b| (b.h, b.semivariance)).collect(),
        style: Style::Points,
    }];
    let steps = 100;
    series.extend(model_curve((0..=steps).map(|k| (h_max * k as f64 / steps as f64, 0.0)).collect())?);
    let plot = Plot {
        title: "Spatial variogram (u = 0)".into(),
        x_label: "h".into(),
        y_label: "semivariance".into(),
        series,
        y_range: None,
    };
    write_svg(&run.path("variogram_spatial.svg"), &plot)?;
    let temporal = est.temporal_marginal();
    let mut series = vec![Series {
        label: "empirical".into(),
        points: temporal.iter().map(|b| (b.u, b.semivariance)).collect(),
        style: Style::Points,
    }];
    series.extend(model_curve((0..=steps).map(|k| (0.0, sec.u_max * k as f64 / steps as f64)).collect())?);
    let plot = Plot {
        title: "Temporal variogram (h = 0)".into(),
        x_label: "u".into(),
        y_label: "semivariance".into(),
        series,
        y_range: None,
    };
    write_svg(&run.path("variogram_temporal.svg"), &plot)?;
    let mut report = format!("{} variogram bins from {} observations", est.bins.len(), obs.len());
    if let Some(t) = trend {
        report.push_str(&format!("\ntrend: a0 = {:.6}, a1 = {:.6}", t.a0, t.a1));
    }
    Ok(report)
}

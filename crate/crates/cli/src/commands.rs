use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use mapclean::config::{Config, Method};
use mapclean::dataset::{load_dataset, save_dataset, FRAMES_DIR, GT_FILE};
use mapclean::erasor::run_erasor;
use mapclean::metrics::EvalReport;
use mapclean::octomap::run_octomap;
use mapclean::pcd::{save_pcd, PcdEncoding};
use mapclean::removert::run_removert;
use mapclean::synth::{preset as builtin_preset, simulate_dataset, SceneSpec};
use mapclean::{LabelMask, Point3, Pose};

use crate::manifest::{
    dataset_sha256, read_json, sha256_hex, write_json, DatasetManifest, RunManifest, DATASET_MANIFEST, RUN_MANIFEST,
};

pub const STATIC_MAP: &str = "static_map.pcd";
pub const LABEL_MASK: &str = "label_mask.bin";
pub const TIMINGS: &str = "timings.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const FN_HIST: &str = "fn_hist.csv";

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
fn prepare_out_dir(dir: &Path, force: bool, owned: &[&str]) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if non_empty {
            ensure!(force, "{} is not empty; pass --force to overwrite", dir.display());
            for name in owned {
                let p = dir.join(name);
                if p.is_dir() {
                    fs::remove_dir_all(&p)?;
                } else if p.exists() {
                    fs::remove_file(&p)?;
                }
            }
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn synth(preset: Option<&str>, spec_path: Option<&Path>, out: &Path, seed: Option<u64>, force: bool) -> Result<()> {
    let mut spec: SceneSpec = match (preset, spec_path) {
        (Some(name), _) => builtin_preset(name)?,
        (None, Some(p)) => read_json(p)?,
        (None, None) => bail!("either --preset or --spec is required"),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dataset = simulate_dataset(&spec)?;
    prepare_out_dir(out, force, &[FRAMES_DIR, GT_FILE, DATASET_MANIFEST])?;
    save_dataset(out, &dataset, PcdEncoding::Binary)?;
    write_json(
        &out.join(DATASET_MANIFEST),
        &DatasetManifest {
            preset: preset.map(str::to_string),
            seed: spec.seed,
            spec,
        },
    )?;
    info!(
        "wrote {} frames and {} ground-truth points",
        dataset.frames.len(),
        dataset.gt.as_ref().map_or(0, |g| g.len())
    );
    println!("{}", out.display());
    Ok(())
}

pub fn run(
    method: Method,
    dataset: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    force: bool,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Config::from_toml_str(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => Config::default(),
    };
    if let Some(s) = seed {
        cfg.octomap.ground.seed = s;
    }
    execute(method, dataset, &cfg, out, force)
}

pub fn rerun(manifest_path: &Path, out: &Path, force: bool) -> Result<()> {
    let m: RunManifest = read_json(manifest_path)?;
    ensure!(
        sha256_hex(m.config.as_bytes()) == m.config_sha256,
        "{}: recorded config does not match its hash",
        manifest_path.display()
    );
    let digest = dataset_sha256(&m.dataset)?;
    ensure!(
        digest == m.dataset_sha256,
        "dataset {} changed since the recorded run",
        m.dataset.display()
    );
    let cfg = Config::from_toml_str(&m.config)?;
    execute(m.method, &m.dataset, &cfg, out, force)
}

fn execute(method: Method, dataset_dir: &Path, cfg: &Config, out: &Path, force: bool) -> Result<()> {
    let dataset_digest = dataset_sha256(dataset_dir)?;
    let dataset = load_dataset(dataset_dir)?;
    ensure!(!dataset.frames.is_empty(), "{} has no frames", dataset_dir.display());
    if method.needs_raw_map() && dataset.gt.is_none() {
        bail!("{method} needs the raw map; {} has no {GT_FILE}", dataset_dir.display());
    }
    // The mask refers to the ground-truth cloud when present, else to the accumulated scans.
    let reference: Vec<Point3> = match &dataset.gt {
        Some(gt) => gt.points().to_vec(),
        None => dataset.accumulated_points(),
    };

    let (static_map, mask, seconds): (Vec<Point3>, LabelMask, Vec<f64>) = match method.octomap_variant() {
        Some(variant) => {
            let r = run_octomap(&dataset.frames, variant, &cfg.octomap_config())?;
            if r.removed_outliers > 0 {
                info!("filter removed {} outlier points", r.removed_outliers);
            }
            (r.static_cloud(), r.label_mask(&reference), r.frame_seconds)
        }
        None => {
            let r = match method {
                Method::Removert => {
                    let r = run_removert(&dataset.frames, &reference, &cfg.removert)?;
                    (r.mask, r.frame_seconds)
                }
                _ => {
                    let r = run_erasor(&dataset.frames, &reference, &cfg.erasor)?;
                    (r.mask, r.frame_seconds)
                }
            };
            let kept = reference
                .iter()
                .zip(r.0.verdicts())
                .filter(|(_, l)| !l.is_dynamic())
                .map(|(p, _)| *p)
                .collect();
            (kept, r.0, r.1)
        }
    };

    prepare_out_dir(out, force, &[STATIC_MAP, LABEL_MASK, TIMINGS, RUN_MANIFEST])?;
    save_pcd(out.join(STATIC_MAP), &static_map, None, &Pose::identity(), PcdEncoding::Binary)?;
    fs::write(out.join(LABEL_MASK), mask.to_bytes())?;
    let mut t = String::from("frame_index,seconds\n");
    for (f, s) in dataset.frames.iter().zip(&seconds) {
        t += &format!("{},{s}\n", f.index);
    }
    fs::write(out.join(TIMINGS), t)?;
    let config = cfg.to_toml_string();
    let dataset_path = fs::canonicalize(dataset_dir).unwrap_or_else(|_| dataset_dir.to_path_buf());
    write_json(
        &out.join(RUN_MANIFEST),
        &RunManifest {
            method,
            config_sha256: sha256_hex(config.as_bytes()),
            seed: cfg.octomap.ground.seed,
            dataset: dataset_path,
            dataset_sha256: dataset_digest,
            config,
            parameter_count: Config::parameter_count(method),
        },
    )?;
    info!(
        "{method}: {} of {} points dynamic, {} static map points",
        mask.dynamic_count(),
        mask.len(),
        static_map.len()
    );
    println!("{}", out.display());
    Ok(())
}

fn read_timings(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let s = l.split(',').nth(1).context("timings row lacks a seconds column")?;
            s.trim().parse::<f64>().with_context(|| format!("bad seconds value `{s}`"))
        })
        .collect()
}

pub fn eval(dataset_dir: &Path, run_dir: &Path, out: Option<&Path>) -> Result<()> {
    let out = out.unwrap_or(run_dir);
    let m: RunManifest = read_json(&run_dir.join(RUN_MANIFEST))?;
    let mask_path = run_dir.join(LABEL_MASK);
    ensure!(mask_path.exists(), "{} is missing", mask_path.display());
    let mask = LabelMask::from_bytes(&fs::read(&mask_path)?)?;
    let dataset = load_dataset(dataset_dir)?;
    let gt = dataset
        .gt
        .with_context(|| format!("{} has no {GT_FILE}", dataset_dir.display()))?;
    if dataset_sha256(dataset_dir)? != m.dataset_sha256 {
        warn!("dataset differs from the one recorded in the run manifest");
    }
    let seconds = read_timings(&run_dir.join(TIMINGS)).unwrap_or_else(|e| {
        warn!("no runtime statistics: {e:#}");
        Vec::new()
    });
    let report = EvalReport::build(m.method.name(), &gt, mask.verdicts(), &seconds)?;

    fs::create_dir_all(out)?;
    write_json(&out.join(REPORT_JSON), &report)?;
    fs::write(out.join(REPORT_CSV), format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()))?;
    let mut hist = Vec::new();
    report.write_histogram_csv(&mut hist)?;
    fs::write(out.join(FN_HIST), hist)?;
    info!("{}: SA {:.2} DA {:.2} AA {:.2}", report.method, report.sa, report.da, report.aa);
    for name in [REPORT_JSON, REPORT_CSV, FN_HIST] {
        println!("{}", out.join(name).display());
    }
    Ok(())
}

pub const COMPARE_HEADER: &str = "method,SA,DA,AA,runtime_mean_s,runtime_std_s,parameters,run";

pub fn compare(runs: &[PathBuf]) -> Result<()> {
    let mut digest: Option<String> = None;
    let mut rows = Vec::with_capacity(runs.len());
    for dir in runs {
        let m: RunManifest = read_json(&dir.join(RUN_MANIFEST))?;
        match &digest {
            None => digest = Some(m.dataset_sha256.clone()),
            Some(d) if *d != m.dataset_sha256 => {
                bail!("{} was run on a different dataset than {}", dir.display(), runs[0].display())
            }
            _ => {}
        }
        let r: EvalReport = read_json(&dir.join(REPORT_JSON)).context("run `eval` first")?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        rows.push(format!(
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.sa,
            r.da,
            r.aa,
            opt(r.runtime.map(|t| t.mean_s)),
            opt(r.runtime.map(|t| t.std_s)),
            Config::parameter_count(m.method),
            dir.display()
        ));
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{COMPARE_HEADER}")?;
    for r in rows {
        writeln!(stdout, "{r}")?;
    }
    Ok(())
}

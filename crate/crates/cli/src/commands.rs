//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use heavywalk::exact_engine::{
    default_box, green_exact, nstep_distribution, tail_prob_exact, ConvMethod, LatticeBox,
    StepSchedule,
};
use heavywalk::mc_engine::{green_mc, rescaled_samples, tail_prob_mc, RescaleMethod};
use heavywalk::numerics::stats::ks_distance;
use heavywalk::scaling::{Regime, ScalingSchedule};
use heavywalk::stable_limit::{
    srt_constant_cauchy, srt_constant_centered, srt_constant_mean, StableDensityModel,
    StableMarginal,
};
use heavywalk::tail_models::{parse_law, Family, LatticeLaw};
use heavywalk::theorem_bench::{
    check_away, check_fuknagaev, check_lld, check_llt, check_srt, AwaySettings, AwayTheorem,
    BoundCheckReport, ConvergenceReport, GreenMethod, LldMode, LldSettings, SrtRegime,
    SrtSettings, TailBoundSettings, TailMethod, TailPoint,
};
use heavywalk::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;

/// Result of one invocation.
pub struct Outcome {
    pub summary: String,
    /// `Some(pass)` for checks; `Some(None)` is inconclusive.
    pub verdict: Option<Option<bool>>,
}

impl Outcome {
    fn done(summary: String) -> Self {
        Outcome {
            summary,
            verdict: None,
        }
    }
}

/// Longest CSV dump of an n-step field.
const CSV_CELLS: usize = 1 << 20;

/// Default Monte Carlo step cap.
const DEFAULT_N_CAP: u64 = 1 << 20;

pub const THEOREMS: &[&str] = &[
    "llt",
    "lld-general",
    "lld-local",
    "lld-balanced",
    "fuk-nagaev",
    "srt-centered",
    "srt-centered-marginal",
    "srt-drift",
    "srt-cauchy",
    "away-transversal",
    "away-offset",
    "away-refinement",
];

pub fn run(command: &str, cfg: &Config) -> Result<Outcome> {
    match command {
        "pmf" => pmf(cfg),
        "scaling" => scaling(cfg),
        "nstep" => nstep(cfg),
        "green" => green(cfg),
        "green-mc" => green_mc_cmd(cfg),
        "tailprob" => tailprob(cfg),
        "rescale" => rescale(cfg),
        "stable-density" => stable_density(cfg),
        "srt-constant" => srt_constant(cfg),
        "check" => check(cfg),
        other => Err(Error::Parse(format!("unknown subcommand '{other}'"))),
    }
}

fn law(cfg: &Config) -> Result<(LatticeLaw, ScalingSchedule)> {
    let law = parse_law(cfg.require("law.spec")?, cfg.base_dir())?;
    let schedule = ScalingSchedule::new(Arc::new(law.clone()));
    Ok((law, schedule))
}

fn seed(cfg: &Config) -> Result<u64> {
    cfg.num("method.seed")?.ok_or_else(|| {
        Error::Parse("randomized runs need an explicit --seed (config key 'method.seed')".into())
    })
}

fn conv(cfg: &Config) -> Result<ConvMethod> {
    Ok(match cfg.choice("method.conv", &["naive", "fft", "auto"])? {
        Some("naive") => ConvMethod::Naive,
        Some("fft") => ConvMethod::Fft,
        _ => ConvMethod::Auto,
    })
}

fn is_mc(cfg: &Config) -> Result<bool> {
    Ok(cfg.choice("method.kind", &["exact", "mc"])? == Some("mc"))
}

fn walks(cfg: &Config) -> Result<u64> {
    cfg.num("method.walks")?
        .ok_or_else(|| Error::Parse("Monte Carlo runs need --walks (config key 'method.walks')".into()))
}

fn targets(cfg: &Config, d: usize) -> Result<Vec<Vec<i64>>> {
    let targets = match cfg.vectors::<i64>("grid.targets")? {
        Some(t) => t,
        None => {
            let ray: Vec<f64> = cfg.list("grid.ray")?.ok_or_else(|| {
                Error::Parse("missing --targets (or 'grid.ray' with 'grid.radii')".into())
            })?;
            let radii: Vec<f64> = cfg.list("grid.radii")?.ok_or_else(|| {
                Error::Parse("'grid.ray' needs 'grid.radii'".into())
            })?;
            radii
                .iter()
                .map(|r| ray.iter().map(|c| (r * c).round() as i64).collect())
                .collect()
        }
    };
    if let Some(x) = targets.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::Parse("empty target list".into()));
    }
    Ok(targets)
}

fn green_method(cfg: &Config) -> Result<GreenMethod> {
    Ok(if is_mc(cfg)? {
        GreenMethod::Mc {
            walks: walks(cfg)?,
            seed: seed(cfg)?,
            n_cap: cfg.num("method.n_cap")?.unwrap_or(DEFAULT_N_CAP),
        }
    } else {
        GreenMethod::Exact {
            n_max: cfg.num("grid.n_max")?,
            conv: conv(cfg)?,
        }
    })
}

fn out_dir(cfg: &Config) -> Result<PathBuf> {
    let dir = std::env::var_os("HEAVYWALK_OUT")
        .map(PathBuf::from)
        .or_else(|| cfg.get("output.dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn artifact(cfg: &Config, command: &str, ext: &str) -> Result<PathBuf> {
    let stem = cfg.get("output.name").unwrap_or(command);
    Ok(out_dir(cfg)?.join(format!("{stem}.{ext}")))
}

fn write_json(cfg: &Config, command: &str, result: impl Serialize) -> Result<PathBuf> {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let doc = json!({
        "command": command,
        "timestamp": timestamp,
        "config": cfg.entries(),
        "result": serde_json::to_value(result).map_err(|e| Error::Parse(e.to_string()))?,
    });
    let path = artifact(cfg, command, "json")?;
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w)?;
    Ok(path)
}

fn csv_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn pmf(cfg: &Config) -> Result<Outcome> {
    let (law, _) = law(cfg)?;
    let d = law.dim();
    let points: Vec<Vec<i64>> = if cfg.get("grid.targets").is_some() {
        targets(cfg, d)?
    } else {
        let bbox = grid_box(cfg)?
            .ok_or_else(|| Error::Parse("pmf needs --targets or --lower/--upper".into()))?;
        (0..bbox.volume()).map(|j| bbox.point(j)).collect()
    };
    let path = artifact(cfg, "pmf", "csv")?;
    let mut w = csv_writer(&path)?;
    let header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    writeln!(w, "{},p", header.join(","))?;
    let mut total = 0.0;
    for x in &points {
        let p = law.pmf(x)?;
        total += p;
        let cells: Vec<String> = x.iter().map(i64::to_string).collect();
        writeln!(w, "{},{p:e}", cells.join(","))?;
    }
    w.flush()?;
    Ok(Outcome::done(format!(
        "pmf: {} points, mass {total:.6e} -> {}",
        points.len(),
        path.display()
    )))
}

fn n_grid(cfg: &Config) -> Result<Vec<u64>> {
    match cfg.list("grid.n_grid")? {
        Some(g) => Ok(g),
        None => cfg
            .num("grid.n")?
            .map(|n| vec![n])
            .ok_or_else(|| Error::Parse("missing --n-grid (config key 'grid.n_grid')".into())),
    }
}

fn scaling(cfg: &Config) -> Result<Outcome> {
    let (law, s) = law(cfg)?;
    let d = law.dim();
    let grid = n_grid(cfg)?;
    let path = artifact(cfg, "scaling", "csv")?;
    let mut w = csv_writer(&path)?;
    let a: Vec<String> = (1..=d).map(|k| format!("a{k}")).collect();
    let b: Vec<String> = (1..=d).map(|k| format!("b{k}")).collect();
    writeln!(w, "n,{},{}", a.join(","), b.join(","))?;
    for &n in &grid {
        let mut row = vec![n.to_string()];
        for i in 0..d {
            row.push(format!("{:e}", s.a_n(i, n as f64)?));
        }
        for i in 0..d {
            row.push(format!("{:e}", s.b_n(i, n as f64)?));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(Outcome::done(format!(
        "scaling: {} step counts -> {}",
        grid.len(),
        path.display()
    )))
}

fn grid_box(cfg: &Config) -> Result<Option<LatticeBox>> {
    match (cfg.list("grid.lower")?, cfg.list("grid.upper")?) {
        (Some(lo), Some(hi)) => Ok(Some(LatticeBox::new(lo, hi)?)),
        (None, None) => Ok(None),
        _ => Err(Error::Parse("give both --lower and --upper".into())),
    }
}

fn nstep(cfg: &Config) -> Result<Outcome> {
    let (law, s) = law(cfg)?;
    let n: usize = cfg
        .num("grid.n")?
        .ok_or_else(|| Error::Parse("missing --n (config key 'grid.n')".into()))?;
    let bbox = match grid_box(cfg)? {
        Some(b) => b,
        None => {
            // b_n +- 4 a_n on each axis
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for i in 0..law.dim() {
                let (a, b) = (s.a_n(i, n as f64)?, s.b_n(i, n as f64)?);
                lo.push((b - 4.0 * a).floor() as i64);
                hi.push((b + 4.0 * a).ceil() as i64);
            }
            LatticeBox::new(lo, hi)?
        }
    };
    let schedule = match cfg.choice("method.schedule", &["linear", "binary"])? {
        Some("binary") => StepSchedule::Binary,
        _ => StepSchedule::Linear,
    };
    let field = nstep_distribution(&law, n, &bbox, schedule, conv(cfg)?)?;
    let path = match cfg.choice("output.format", &["binary", "csv"])? {
        Some("csv") => {
            if bbox.volume() > CSV_CELLS {
                return Err(Error::Resource(format!(
                    "CSV export is limited to {CSV_CELLS} cells; use --format binary"
                )));
            }
            let path = artifact(cfg, "nstep", "csv")?;
            let mut w = csv_writer(&path)?;
            field.write_csv(&mut w)?;
            w.flush()?;
            path
        }
        _ => {
            let path = artifact(cfg, "nstep", "bin")?;
            let mut w = csv_writer(&path)?;
            field.write_binary(&mut w)?;
            w.flush()?;
            path
        }
    };
    Ok(Outcome::done(format!(
        "nstep: n = {n}, mass in box {:.12}, dropped {:.3e} -> {}",
        field.total(),
        field.dropped_mass(),
        path.display()
    )))
}

fn default_n_max(law: &LatticeLaw, s: &ScalingSchedule, targets: &[Vec<i64>]) -> Result<usize> {
    if law.is_renewal() {
        // no visits after min_i x_i steps
        return Ok(targets
            .iter()
            .map(|x| *x.iter().min().unwrap_or(&1))
            .max()
            .unwrap_or(1)
            .max(1) as usize);
    }
    let mut n0: f64 = 1.0;
    for x in targets {
        n0 = n0.max(s.typical_n(x)?.n0);
    }
    Ok((2.5 * n0).ceil() as usize + 64)
}

fn green(cfg: &Config) -> Result<Outcome> {
    let (law, s) = law(cfg)?;
    let targets = targets(cfg, law.dim())?;
    let n_max = match cfg.num("grid.n_max")? {
        Some(n) => n,
        None => default_n_max(&law, &s, &targets)?,
    };
    let bbox = match grid_box(cfg)? {
        Some(b) => b,
        None => default_box(&law, &s, &targets, n_max)?,
    };
    let report = green_exact(&law, &s, &targets, n_max, &bbox, conv(cfg)?)?;
    let path = write_json(
        cfg,
        "green",
        json!({
            "n_max": n_max,
            "steps": report.steps,
            "dropped_mass": report.dropped_mass,
            "values": report.values,
        }),
    )?;
    let shown: Vec<String> = report
        .values
        .iter()
        .take(4)
        .map(|v| format!("G({}) = {} (remainder {:.1e})", join(&v.x), v.value, v.remainder))
        .collect();
    Ok(Outcome::done(format!(
        "green: {}{} -> {}",
        shown.join("; "),
        if report.values.len() > 4 { "; ..." } else { "" },
        path.display()
    )))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn green_mc_cmd(cfg: &Config) -> Result<Outcome> {
    let (law, _) = law(cfg)?;
    let targets = targets(cfg, law.dim())?;
    let seed = seed(cfg)?;
    let n_cap = cfg.num("method.n_cap")?.unwrap_or(DEFAULT_N_CAP);
    let stats = green_mc(&law, &targets, walks(cfg)?, n_cap, seed)?;
    let estimates: Vec<Value> = (0..targets.len())
        .map(|t| json!({ "x": targets[t], "estimate": stats.estimate(t) }))
        .collect();
    let path = write_json(
        cfg,
        "green-mc",
        json!({ "estimates": estimates, "stats": stats }),
    )?;
    let first = stats.estimate(0);
    Ok(Outcome::done(format!(
        "green-mc: G({}) = {:.6e} +- {:.1e} from {} walks ({} capped), seed {seed} -> {}",
        join(&targets[0]),
        first.value,
        first.sigma,
        stats.walks,
        stats.capped,
        path.display()
    )))
}

fn tailprob(cfg: &Config) -> Result<Outcome> {
    let (law, s) = law(cfg)?;
    let i: usize = cfg.num("grid.coordinate")?.unwrap_or(0);
    let n: u64 = cfg
        .num("grid.n")?
        .ok_or_else(|| Error::Parse("missing --n (config key 'grid.n')".into()))?;
    let levels: Vec<f64> = cfg
        .list("grid.levels")?
        .ok_or_else(|| Error::Parse("missing --levels (config key 'grid.levels')".into()))?;
    let cap: Option<f64> = cfg.num("grid.cap")?;
    let (result, seeds) = if is_mc(cfg)? {
        let seed = seed(cfg)?;
        let est = tail_prob_mc(&law, &s, i, n, &levels, cap, walks(cfg)?, seed)?;
        (serde_json::to_value(est), vec![seed])
    } else {
        let cap = cap.map(|c| c.floor() as i64);
        let vals = tail_prob_exact(&law, &s, i, n as usize, &levels, cap, conv(cfg)?)?;
        (serde_json::to_value(vals), vec![])
    };
    let result = result.map_err(|e| Error::Parse(e.to_string()))?;
    let path = write_json(
        cfg,
        "tailprob",
        json!({ "coordinate": i, "n": n, "cap": cap, "seeds": seeds, "values": result }),
    )?;
    Ok(Outcome::done(format!(
        "tailprob: {} levels at n = {n} -> {}",
        levels.len(),
        path.display()
    )))
}

fn rescale(cfg: &Config) -> Result<Outcome> {
    let (law, s) = law(cfg)?;
    let n: u64 = cfg
        .num("grid.n")?
        .ok_or_else(|| Error::Parse("missing --n (config key 'grid.n')".into()))?;
    let count: usize = cfg.num("method.samples")?.unwrap_or(100_000);
    let seed = seed(cfg)?;
    let method = match cfg.choice("method.rescale", &["walk", "exact-marginal"])? {
        Some("exact-marginal") => RescaleMethod::ExactMarginal,
        _ => RescaleMethod::Walk,
    };
    let samples = rescaled_samples(&law, &s, n, count, seed, method)?;
    let d = law.dim();
    let path = artifact(cfg, "rescale", "csv")?;
    let mut w = csv_writer(&path)?;
    let header: Vec<String> = (1..=d).map(|k| format!("z{k}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for z in &samples {
        let cells: Vec<String> = z.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    // distance to the limit marginals, where they are known
    let mut ks = Vec::new();
    if matches!(law.family(), Family::IndependentProduct(_)) {
        for i in 0..d {
            let limit = StableMarginal::for_coordinate(&law, i)?;
            let mut col: Vec<f64> = samples.iter().map(|z| z[i]).collect();
            ks.push(ks_distance(&mut col, |z| limit.cdf(z).unwrap_or(f64::NAN)));
        }
    }
    let json_path = write_json(
        cfg,
        "rescale",
        json!({ "n": n, "samples": count, "seed": seed, "method": method, "csv": path, "ks_to_limit": ks }),
    )?;
    Ok(Outcome::done(format!(
        "rescale: {count} samples at n = {n}, seed {seed}, KS to limit {:?} -> {}",
        ks,
        json_path.display()
    )))
}

fn stable_density(cfg: &Config) -> Result<Outcome> {
    let (law, _) = law(cfg)?;
    let model = StableDensityModel::product_for_law(&law)?;
    let d = law.dim();
    if d > 2 {
        return Err(Error::Resource("density grids are limited to d <= 2".into()));
    }
    let lo: f64 = cfg.num("grid.z_lower")?.unwrap_or(-5.0);
    let hi: f64 = cfg.num("grid.z_upper")?.unwrap_or(5.0);
    let m: usize = cfg.num("grid.z_points")?.unwrap_or(101);
    if !(hi > lo) || m < 2 {
        return Err(Error::Parse("density grid needs z_lower < z_upper and z_points >= 2".into()));
    }
    let axis: Vec<f64> = (0..m)
        .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
        .collect();
    let path = artifact(cfg, "stable-density", "csv")?;
    let mut w = csv_writer(&path)?;
    let header: Vec<String> = (1..=d).map(|k| format!("z{k}")).collect();
    writeln!(w, "{},g", header.join(","))?;
    let mut z = vec![0.0; d];
    for j in 0..m.pow(d as u32) {
        let mut r = j;
        for c in (0..d).rev() {
            z[c] = axis[r % m];
            r /= m;
        }
        writeln!(w, "{},{:e}", join(&z), model.density(&z)?)?;
    }
    w.flush()?;
    Ok(Outcome::done(format!(
        "stable-density: {}^{d} grid on [{lo}, {hi}] -> {}",
        m,
        path.display()
    )))
}

fn srt_constant(cfg: &Config) -> Result<Outcome> {
    let (law, s) = law(cfg)?;
    let model = StableDensityModel::product_for_law(&law)?;
    let geometry = match cfg.get("grid.targets") {
        Some(_) => Some(s.typical_n(&targets(cfg, law.dim())?[0])?),
        None => None,
    };
    let regime = match cfg.choice("check.regime", &["centered", "drift", "cauchy"])? {
        Some("centered") => Regime::Centered,
        Some("drift") => Regime::Drift,
        Some(_) => Regime::CauchyDrift,
        None => geometry
            .as_ref()
            .map(|g| g.regime)
            .ok_or_else(|| Error::Parse("give --targets or --set check.regime=...".into()))?,
    };
    let t: Vec<f64> = match cfg.list("grid.t")? {
        Some(t) => t,
        None => geometry
            .as_ref()
            .map(|g| g.t.clone())
            .ok_or_else(|| Error::Parse("missing --t (config key 'grid.t')".into()))?,
    };
    let direction = |from_geometry: fn(&heavywalk::scaling::FavoriteGeometry) -> Vec<f64>| {
        match cfg.list("grid.kappa")? {
            Some(k) => Ok(k),
            None => geometry.as_ref().map(from_geometry).ok_or_else(|| {
                Error::Parse("missing line direction (config key 'grid.kappa')".into())
            }),
        }
    };
    let (name, quad) = match regime {
        Regime::Centered => ("centered", srt_constant_centered(&model, &t, &law.alphas())?),
        Regime::Drift => ("drift", srt_constant_mean(&model, &t, &direction(|g| g.kappa.clone())?)?),
        Regime::CauchyDrift => (
            "cauchy",
            srt_constant_cauchy(&model, &t, &direction(|g| g.kappa_tilde.clone())?)?,
        ),
    };
    let path = write_json(
        cfg,
        "srt-constant",
        json!({ "regime": name, "t": t, "constant": quad.value, "error": quad.error }),
    )?;
    Ok(Outcome::done(format!(
        "srt-constant: {name} C = {:.10e} (error {:.1e}) -> {}",
        quad.value,
        quad.error,
        path.display()
    )))
}

fn check(cfg: &Config) -> Result<Outcome> {
    let theorem = cfg
        .choice("check.theorem", THEOREMS)?
        .ok_or_else(|| Error::Parse(format!("missing --theorem, one of {}", THEOREMS.join(", "))))?;
    let (law, s) = law(cfg)?;
    let d = law.dim();
    let report: Report = match theorem {
        "llt" => {
            let window = cfg.num("grid.window")?.unwrap_or(4.0);
            Report::Convergence(check_llt(&law, &s, &n_grid(cfg)?, window, None)?)
        }
        "lld-general" | "lld-local" | "lld-balanced" => {
            let mode = match theorem {
                "lld-general" => LldMode::General,
                "lld-local" => LldMode::Local,
                _ => LldMode::Balanced,
            };
            let points: Vec<Vec<f64>> = cfg
                .vectors("grid.points")?
                .ok_or_else(|| Error::Parse("missing 'grid.points'".into()))?;
            let mut settings = LldSettings::default();
            if let Some(g) = cfg.num("check.max_growth")? {
                settings.max_growth = g;
            }
            Report::Bound(check_lld(&law, &s, mode, &n_grid(cfg)?, &points, settings)?)
        }
        "fuk-nagaev" => {
            let i = cfg.num("grid.coordinate")?.unwrap_or(0);
            let xs: Vec<f64> = cfg
                .list("grid.x_scales")?
                .ok_or_else(|| Error::Parse("missing 'grid.x_scales'".into()))?;
            let ys = cfg.optional_list("grid.y_fracs")?.unwrap_or(vec![None]);
            let points: Vec<TailPoint> = xs
                .iter()
                .flat_map(|&x| ys.iter().map(move |&y| TailPoint { x_scale: x, y_frac: y }))
                .collect();
            let method = if is_mc(cfg)? {
                TailMethod::Mc {
                    walks: walks(cfg)?,
                    seed: seed(cfg)?,
                }
            } else {
                TailMethod::Exact { conv: conv(cfg)? }
            };
            let mut settings = TailBoundSettings::default();
            if let Some(g) = cfg.num("check.max_growth")? {
                settings.max_growth = g;
            }
            if let Some(e) = cfg.num("check.epsilon")? {
                settings.epsilon = e;
            }
            Report::Bound(check_fuknagaev(&law, &s, i, &n_grid(cfg)?, &points, method, settings)?)
        }
        srt if srt.starts_with("srt-") => {
            let regime = match srt {
                "srt-centered" => SrtRegime::Centered,
                "srt-centered-marginal" => SrtRegime::CenteredMarginal,
                "srt-drift" => SrtRegime::Drift,
                _ => SrtRegime::CauchyDrift,
            };
            let t: Vec<f64> = cfg.list("grid.t")?.unwrap_or(vec![0.0; d]);
            let model = match cfg.choice("check.model", &["auto", "product"])? {
                Some("product") => Some(StableDensityModel::product_for_law(&law)?),
                _ => None,
            };
            let settings = SrtSettings::default();
            let mut r = check_srt(
                &law,
                &s,
                regime,
                &targets(cfg, d)?,
                &t,
                green_method(cfg)?,
                model.as_ref(),
                settings,
            )?;
            if let Some(tol) = cfg.num::<f64>("check.tol")? {
                use heavywalk::theorem_bench::Criterion;
                if let Criterion::TowardOne { .. } = r.criterion {
                    r.criterion = Criterion::TowardOne { tol: Some(tol) };
                    r.recompute();
                }
            }
            Report::Convergence(r)
        }
        away => {
            let which = match away {
                "away-transversal" => AwayTheorem::Transversal,
                "away-offset" => AwayTheorem::DriftOffset,
                _ => AwayTheorem::RenewalRefinement,
            };
            let mut settings = AwaySettings::default();
            if let Some(delta) = cfg.num("check.delta")? {
                settings.delta = delta;
            }
            if let Some(tol) = cfg.num("check.tol")? {
                settings.tol = tol;
            }
            Report::Convergence(check_away(
                &law,
                &s,
                which,
                &targets(cfg, d)?,
                green_method(cfg)?,
                settings,
            )?)
        }
    };
    let path = write_json(cfg, "check", &report)?;
    let pass = report.pass();
    Ok(Outcome {
        summary: format!(
            "check {theorem}: {} ({}) -> {}",
            verdict_word(pass),
            report.headline(),
            path.display()
        ),
        verdict: Some(pass),
    })
}

fn verdict_word(pass: Option<bool>) -> &'static str {
    match pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "INCONCLUSIVE",
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum Report {
    Bound(BoundCheckReport),
    Convergence(ConvergenceReport),
}

impl Report {
    fn pass(&self) -> Option<bool> {
        match self {
            Report::Bound(r) => r.pass,
            Report::Convergence(r) => r.pass,
        }
    }

    fn headline(&self) -> String {
        match self {
            Report::Bound(r) => format!(
                "C = {:.4e}, growth {}",
                r.fitted_constant,
                r.growth.map_or("n/a".into(), |g| format!("{g:.3}"))
            ),
            Report::Convergence(r) => format!(
                "last ratio {}, slope {}",
                r.ratios.last().map_or("n/a".into(), |v| format!("{v:.4}")),
                r.slope.map_or("n/a".into(), |v| format!("{v:.3}"))
            ),
        }
    }

    fn consistent(&self) -> bool {
        match self {
            Report::Bound(r) => r.is_consistent(),
            Report::Convergence(r) => r.is_consistent(),
        }
    }
}

/// Re-derives the verdict of a stored `check` report from its grid.
pub fn verify_report(path: &Path) -> Result<Outcome> {
    let text = fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let result = doc.get("result").cloned().unwrap_or(doc);
    let is_bound = result
        .get("grid")
        .and_then(|g| g.get(0))
        .is_some_and(|p| p.get("bound").is_some());
    let parse_err = |e: serde_json::Error| Error::Parse(format!("{}: {e}", path.display()));
    let report = if is_bound {
        Report::Bound(serde_json::from_value(result).map_err(parse_err)?)
    } else {
        Report::Convergence(serde_json::from_value(result).map_err(parse_err)?)
    };
    let consistent = report.consistent();
    let pass = report.pass();
    Ok(Outcome {
        summary: format!(
            "verify-report: stored verdict {} is {} with the stored grid",
            verdict_word(pass),
            if consistent { "consistent" } else { "INCONSISTENT" }
        ),
        verdict: Some(if consistent { pass } else { Some(false) }),
    })
}

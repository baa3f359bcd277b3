use anyhow::Context;
use caustica_core::canrel::ModelVariant;
use caustica_core::fiocalc::{normal_operator_derivation, parse_rational, NormalMode};
use caustica_core::pipeline::{
    compose_verify, default_perturbations, marine_verify, model_verify, Check, MarineVerifyOptions, ModelVerifyOptions,
};
use caustica_core::raytrace::{
    bicharacteristic_flow, fold_caustic_scan, spreading_zero_near, CausticKind, FanSpec, FlowOptions, MarineWindow,
};
use caustica_core::singularity::normal_forms::{conjugate, NormalForm};
use caustica_core::singularity::{classify, sample_at};
use caustica_core::smallmath::{Poly, PolyMap, RealVector, SmoothMap, DEFAULT_RANK_TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, SchemaError};
use crate::output::{print_checks, require, Cell, Csv, Output};

/// Settings shared by every subcommand after merging flags over the config.
pub struct Ctx {
    pub cfg: Config,
    pub seed: u64,
    pub tol: Option<f64>,
    pub out_dir: std::path::PathBuf,
}

impl Ctx {
    fn output(&self, command: &str) -> anyhow::Result<Output> {
        Output::new(&self.out_dir, command, &self.cfg, self.seed)
    }
}

/// Spreading-oracle step and search window around a scanned fold.
const ORACLE_STEP: f64 = 0.005;
const ORACLE_WINDOW: f64 = 0.05;

#[derive(Serialize)]
struct RaySummary {
    ray: usize,
    takeoff: [f64; 3],
    stop: String,
    steps: usize,
    states: usize,
    max_hamiltonian_defect: f64,
}

pub fn trace(ctx: &Ctx) -> anyhow::Result<()> {
    let model = ctx.cfg.model()?;
    let sec = ctx.cfg.trace.clone().unwrap_or_default();
    let source = sec.source.unwrap_or([0.0, 0.3, 0.0]);
    let duration = sec.duration.unwrap_or(6.0);
    let directions = match (&sec.directions, &sec.fan) {
        (Some(_), Some(_)) => return Err(SchemaError("trace: give either directions or fan, not both".into()).into()),
        (Some(d), None) => d.clone(),
        (None, Some(f)) => f.spec("trace.fan", duration)?.directions(),
        (None, None) => {
            FanSpec { axis: [0.0, -0.3, 2.0], max_angle: 0.25, n_polar: 2, n_azimuth: 6, t_max: duration }.directions()
        }
    };
    let opts = FlowOptions { tol: ctx.tol.unwrap_or(1e-10), ..FlowOptions::default() };
    let rays = directions
        .par_iter()
        .map(|d| bicharacteristic_flow(&model, &source, d, duration, &opts))
        .collect::<Result<Vec<_>, _>>()?;

    let mut csv = Csv::new(&["ray", "t", "x1", "x2", "x3", "xi1", "xi2", "xi3"]);
    let mut summary = Vec::with_capacity(rays.len());
    for (i, (tr, d)) in rays.iter().zip(&directions).enumerate() {
        for s in &tr.states {
            let mut row = vec![Cell::I(i), Cell::F(s.t)];
            row.extend(s.x.iter().chain(&s.xi).map(|v| Cell::F(*v)));
            csv.row(&row);
        }
        summary.push(RaySummary {
            ray: i,
            takeoff: *d,
            stop: format!("{:?}", tr.stop),
            steps: tr.steps,
            states: tr.states.len(),
            max_hamiltonian_defect: tr.max_hamiltonian_defect,
        });
    }
    let worst = summary.iter().map(|r| r.max_hamiltonian_defect).fold(0.0, f64::max);
    let checks = vec![Check::at_most("rays.hamiltonian", worst, 1e-8)];
    let out = ctx.output("trace")?;
    let csv_path = out.csv("trace.csv", &csv)?;
    let json_path = out.report("trace.json", &checks, &summary)?;
    println!("{} rays traced for t = {duration}", rays.len());
    print_checks(&checks);
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    require(&checks)
}

#[derive(Serialize)]
struct CausticSummary {
    points: usize,
    folds: usize,
    degenerate: usize,
    oracle_max_distance: f64,
}

pub fn caustics(ctx: &Ctx) -> anyhow::Result<()> {
    let model = ctx.cfg.model()?;
    let window = MarineWindow::standard_lens();
    let sec = ctx.cfg.caustics.clone().unwrap_or_default();
    let source = sec.source.unwrap_or([window.s1, window.s2, 0.0]);
    let mut grid = window.scan;
    if let Some(v) = sec.x1 {
        grid.x1 = v;
    }
    if let Some(v) = sec.x2 {
        grid.x2 = v;
    }
    if let Some(p) = sec.p3 {
        if !(p.0 < p.1 && p.1 < 1.0 && p.0 > -1.0 && p.2 >= 2) {
            return Err(SchemaError("caustics.p3: need -1 < lo < hi < 1 and count ≥ 2".into()).into());
        }
        grid.p3 = p;
    }
    if let Some([lo, hi]) = sec.depth {
        grid.depth = (lo, hi);
    }
    if let Some(t) = sec.fold_tol {
        grid.fold_tol = t;
    }
    if let Some(f) = &sec.fan {
        grid.fan = f.spec("caustics.fan", grid.fan.t_max)?;
    }
    let oracle_tol = ctx.tol.unwrap_or(1e-4);
    let points = fold_caustic_scan(&model, &source, &grid)?;
    let oracle: Vec<Option<f64>> = points
        .par_iter()
        .map(|c| {
            (c.kind == CausticKind::Fold).then(|| {
                spreading_zero_near(&model, &source, &c.takeoff, c.t_inc, ORACLE_WINDOW, ORACLE_STEP).map_or(
                    f64::INFINITY,
                    |z| (0..3).map(|k| (z.x[k] - c.x[k]).powi(2)).sum::<f64>().sqrt(),
                )
            })
        })
        .collect();

    let mut csv = Csv::new(&["x1", "x2", "x3", "s1", "p3", "t_inc", "f_p3", "f_p3p3", "verdict", "oracle_distance"]);
    for (c, o) in points.iter().zip(&oracle) {
        let mut row: Vec<Cell> = c.x.iter().map(|v| Cell::F(*v)).collect();
        row.extend([c.s1, c.p3, c.t_inc, c.f_p3, c.f_p3p3].map(Cell::F));
        row.push(Cell::S(format!("{:?}", c.kind)));
        row.push(o.map_or(Cell::S(String::new()), Cell::F));
        csv.row(&row);
    }
    let folds = oracle.iter().filter(|o| o.is_some()).count();
    let summary = CausticSummary {
        points: points.len(),
        folds,
        degenerate: points.len() - folds,
        oracle_max_distance: oracle.iter().flatten().copied().fold(0.0, f64::max),
    };
    // an empty window would otherwise pass the oracle check vacuously
    let checks = vec![
        Check::at_least("caustics.folds", folds as f64, 1.0),
        Check::at_most("caustics.oracle_distance", summary.oracle_max_distance, oracle_tol),
    ];
    let out = ctx.output("caustics")?;
    let csv_path = out.csv("caustics.csv", &csv)?;
    let json_path = out.report("caustics.json", &checks, &summary)?;
    println!("{} caustic points: {} Fold, {} Degenerate", summary.points, summary.folds, summary.degenerate);
    print_checks(&checks);
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    require(&checks)
}

pub fn marine_check(ctx: &Ctx) -> anyhow::Result<()> {
    let mut opts = MarineVerifyOptions::standard_lens();
    opts.model = ctx.cfg.model()?;
    opts.seed = ctx.seed;
    if let Some(m) = &ctx.cfg.marine {
        if let Some([a, b]) = m.tau {
            opts.tau = (a, b);
        }
        if let Some(v) = m.oracle_tol {
            opts.oracle_tol = v;
        }
        if let Some(v) = m.min_samples {
            opts.min_samples = v;
        }
        if let Some(v) = m.off_samples {
            opts.off_samples = v;
        }
        if let Some(v) = m.conservation_tol {
            opts.conservation_tol = v;
        }
    }
    if let Some(t) = ctx.tol {
        opts.oracle_tol = t;
    }
    let report = marine_verify(&opts)?;
    let out = ctx.output("marine-check")?;
    let path = out.report("marine_check.json", &report.checks, &report)?;
    println!(
        "{} folds in the scan, {} critical points, {} rays traced",
        report.folds, report.marine.critical_points, report.rays_traced
    );
    print_checks(&report.checks);
    println!("wrote {}", path.display());
    require(&report.checks)
}

/// `poly:` components separated by `;`, each a sum of `coef*x1*x2^2` terms.
fn parse_poly_map(spec: &str) -> anyhow::Result<PolyMap> {
    let comps: Vec<&str> = spec.split(';').map(str::trim).collect();
    let dim = comps
        .iter()
        .flat_map(|c| c.split(|ch: char| !ch.is_ascii_alphanumeric()))
        .filter_map(|tok| tok.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()))
        .max()
        .context("no variables x1, x2, … in the map")?;
    let names: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut out = Vec::new();
    for comp in comps {
        let mut p = Poly::zero(dim);
        // split before each minus sign that is not part of an exponent
        let mut spaced = String::new();
        let mut prev = ' ';
        for ch in comp.chars().filter(|c| !c.is_whitespace()) {
            if ch == '-' && !matches!(prev, 'e' | 'E' | '^') {
                spaced.push('+');
            }
            spaced.push(ch);
            prev = ch;
        }
        for term in spaced.split('+').filter(|t| !t.is_empty()) {
            let (sign, body) = match term.strip_prefix('-') {
                Some(b) => (-1.0, b),
                None => (1.0, term),
            };
            let mut coef = sign;
            let mut vars = Vec::new();
            for f in body.split('*') {
                match f.parse::<f64>() {
                    Ok(v) => coef *= v,
                    Err(_) => vars.push(f),
                }
            }
            let e = Poly::parse_monomial(&vars.join("*"), &refs)?;
            p = p.add(&Poly::monomial(e, coef));
        }
        out.push(p);
    }
    Ok(PolyMap::new(out))
}

#[derive(Serialize)]
struct ClassifyReport {
    map: String,
    point: Vec<f64>,
    corank: usize,
    verdict: caustica_core::singularity::SingularityVerdict,
}

pub fn classify_map(ctx: &Ctx, spec: &str, at: Option<&str>, expect: Option<&str>) -> anyhow::Result<()> {
    let map = if let Some(name) = spec.strip_prefix("normal-form:") {
        NormalForm::from_name(name)?.map()
    } else if let Some(name) = spec.strip_prefix("conjugate:") {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        conjugate(NormalForm::from_name(name)?, 0.1, &mut rng)?
    } else if let Some(body) = spec.strip_prefix("poly:") {
        parse_poly_map(body)?
    } else {
        anyhow::bail!("map spec must start with normal-form:, conjugate: or poly:");
    };
    let point: Vec<f64> = match at {
        Some(s) => s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().context("bad --at")?,
        None => vec![0.0; map.dim_in()],
    };
    anyhow::ensure!(point.len() == map.dim_in(), "--at has {} coordinates, map takes {}", point.len(), map.dim_in());
    let sample = sample_at(&map, &RealVector::from_vec(point.clone()), DEFAULT_RANK_TOL)?;
    let verdict = classify(&map, &sample)?;
    let kind = format!("{:?}", verdict.kind);
    let checks: Vec<Check> = expect
        .map(|e| Check::flag("classify.expected", e == kind, format!("expected {e}, got {kind}")))
        .into_iter()
        .collect();
    let report = ClassifyReport { map: spec.into(), point, corank: sample.corank, verdict };
    let out = ctx.output("classify")?;
    out.report("classify.json", &checks, &report)?;
    println!("{kind}");
    if let Some(r) = &report.verdict.reason {
        println!("reason: {r}");
    }
    require(&checks)
}

pub fn model_verify_cmd(ctx: &Ctx, n: Option<usize>, variant: Option<&str>, samples: Option<usize>) -> anyhow::Result<()> {
    let sec = ctx.cfg.model_verify.clone().unwrap_or_default();
    let n = n.or(sec.n).unwrap_or(3);
    if n < 3 {
        return Err(SchemaError(format!("model_verify.n: must be at least 3, got {n}")).into());
    }
    let vname = variant.map(str::to_string).or(sec.variant).unwrap_or_else(|| "hyperbolic".into());
    let variant = ModelVariant::from_name(&vname).map_err(|e| SchemaError(format!("model_verify.variant: {e}")))?;
    let mut opts = ModelVerifyOptions::new(n, variant);
    opts.seed = ctx.seed;
    opts.samples = samples.or(sec.samples).unwrap_or(opts.samples);
    opts.tol = ctx.tol.unwrap_or(opts.tol);
    opts.cloud_size = sec.cloud_size.unwrap_or(opts.cloud_size);
    opts.min_fcc_samples = sec.min_fcc_samples.unwrap_or(opts.min_fcc_samples);
    if let Some(r) = sec.locus_resolution {
        if r.len() != 2 * n - 1 {
            return Err(SchemaError(format!("model_verify.locus_resolution: needs {} entries", 2 * n - 1)).into());
        }
        opts.locus_resolution = Some(r);
    }
    let report = model_verify(&opts)?;
    let out = ctx.output("model-verify")?;
    let path = out.report("model_verify.json", &report.checks, &report)?;
    println!(
        "n = {n}, {}: {} composed points, max residual {:.3e}",
        variant.name(),
        report.containment.composed_points,
        report.containment.max_residual
    );
    print_checks(&report.checks);
    println!("wrote {}", path.display());
    require(&report.checks)
}

pub fn compose_verify_cmd(ctx: &Ctx) -> anyhow::Result<()> {
    let sec = ctx.cfg.compose_verify.clone().unwrap_or_default();
    let specs = match &sec.member {
        Some(ms) => ms.iter().enumerate().map(|(i, m)| m.spec(i)).collect::<anyhow::Result<Vec<_>>>()?,
        None => default_perturbations(),
    };
    let fold_tol = ctx.tol.or(sec.fold_tol).unwrap_or(1e-5);
    let legs = sec.composed_legs.unwrap_or(40);
    let report = compose_verify(&specs, ctx.seed, fold_tol, legs)?;
    let checks: Vec<Check> = report
        .members
        .iter()
        .flat_map(|m| m.checks.iter().map(move |c| Check { name: format!("{}/{}", m.name, c.name), ..c.clone() }))
        .collect();
    let out = ctx.output("compose-verify")?;
    let path = out.report("compose_verify.json", &checks, &report)?;
    for m in &report.members {
        let ok = m.checks.iter().all(|c| c.pass);
        println!(
            "{} {:<14} fcc samples {:>4}, composed {:>4} ({} on C̃)",
            if ok { "pass" } else { "FAIL" },
            m.name,
            m.fcc_samples,
            m.composed_points,
            m.composed_tilde
        );
    }
    print_checks(&checks.iter().filter(|c| !c.pass).cloned().collect::<Vec<_>>());
    println!("wrote {}", path.display());
    require(&checks)
}

pub fn orders(ctx: &Ctx, mu: &str, mode: &str, n: i64) -> anyhow::Result<()> {
    let mu = parse_rational(mu)?;
    let mode = match mode {
        "fcc" | "folded-cross-cap" => NormalMode::FoldedCrossCap,
        "single-source" => NormalMode::SingleSource,
        other => anyhow::bail!("unknown mode '{other}' (fcc, single-source)"),
    };
    let d = normal_operator_derivation(mu, mode, n)?;
    let checks = vec![Check::flag("orders.cross_check", d.cross_check, "symbol-valued route disagrees")];
    let out = ctx.output("orders")?;
    out.report("orders.json", &checks, &d)?;
    println!("{}", d.summary);
    println!("operator order μ = {}, kernel order m = {}", d.operator_order, d.kernel_order);
    for s in &d.steps {
        println!("  {}: {}", s.rule, s.result);
    }
    for note in &d.notes {
        println!("  note: {note}");
    }
    require(&checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_specs_parse() {
        let m = parse_poly_map("x1; x1*x2; x2^2").unwrap();
        assert_eq!((m.dim_in(), m.dim_out()), (2, 3));
        let m = parse_poly_map("x1; x2^2 - 0.5*x3^2 + 2").unwrap();
        let v = m.eval(&RealVector::from_vec(vec![1.0, 2.0, 2.0])).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 4.0]);
        assert!(parse_poly_map("a + b").is_err());
    }
}

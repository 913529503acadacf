//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

#[path = "../../core/tests/common/oracle.rs"]
#[allow(dead_code)]
mod oracle;
#[path = "../../core/tests/common/invariants.rs"]
#[allow(dead_code)]
mod invariants;

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use boxfront_core::bounds::{new_lower_bounds, new_upper_bounds};
use boxfront_core::boxalgo::{self, payoff_table, RunConfig};
use boxfront_core::domain::{AssetUniverse, BoundOp, ModelSpec, Objective, ObjectiveBound, PortfolioWeights, SolvencyCalibration};
use boxfront_core::ingest::{load_model_files, load_weights, ModelPaths, Source};
use boxfront_core::objectives::{
    aggregate_risks, constant_risk_adjust, l1_distance, market_risk, net_risk, solvency_ratio,
};
use boxfront_core::problem::PortfolioProblem;
use boxfront_core::scalarization::{build_single, build_weighted_sum, BuildOptions};
use boxfront_core::solver::{solve, Multistart, SolverConfig, Status};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

type Outcome = Result<String, String>;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn bundled_paths() -> ModelPaths {
    ModelPaths {
        assets: data("table1_assets.csv"),
        correlation: Some(data("synthetic_correlation.csv")),
        calibration: Some(data("synthetic_calibration.toml")),
        reference: Some(data("table2_reference.csv")),
        constraints: None,
    }
}

fn bundled() -> ModelSpec {
    load_model_files(&bundled_paths()).unwrap().spec
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(1.0)
}

fn within(limit: Duration, t: Instant) -> Result<(), String> {
    let e = t.elapsed();
    ensure(e < limit, || format!("took {e:?}, limit {limit:?}"))
}

fn simplex_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn payoff_extremes() -> Outcome {
    let t = Instant::now();
    let spec = bundled();
    let p = PortfolioProblem::new(&spec).map_err(|e| e.to_string())?;
    let (_, u0, points) = payoff_table(&p, &RunConfig::default(), &Multistart, &mut ()).map_err(|e| e.to_string())?;
    let names = &spec.universe.names;
    let pe = names.iter().position(|n| n == "Private Equity").unwrap();
    let cash = names.iter().position(|n| n == "Cash").unwrap();
    let ret = -points[0].f[0];
    ensure(rel_close(ret, 0.085, 1e-6), || format!("max return {ret}"))?;
    ensure((points[0].x[pe] - 1.0).abs() <= 1e-6, || format!("max-return weights {:?}", points[0].x))?;
    let vol = points[1].f[1];
    ensure(rel_close(vol, 0.0, 1e-6), || format!("min volatility {vol}"))?;
    ensure((points[1].x[cash] - 1.0).abs() <= 1e-6, || format!("min-volatility weights {:?}", points[1].x))?;
    let worst_return = -u0[0];
    ensure(rel_close(worst_return, 0.0, 1e-6), || format!("min-return payoff value {worst_return}"))?;
    within(Duration::from_secs(5), t)?;
    Ok(format!("return {:.2}%, volatility {:.2}%, worst return {:.2}%", ret * 100.0, vol * 100.0, worst_return * 100.0))
}

fn distance_values() -> Outcome {
    let spec = bundled();
    let pe = spec.universe.index_of("Private Equity").unwrap();
    let d_pe = l1_distance(PortfolioWeights::unit(13, pe).as_slice(), spec.reference.as_slice());
    ensure((d_pe - 1.9976).abs() <= 1e-4, || format!("distance to Private Equity {d_pe}"))?;
    let src = Source::read(&data("table2_solvency_optimal.csv")).map_err(|e| e.to_string())?;
    let opt = load_weights(&src, &spec.universe.names).map_err(|e| e.to_string())?;
    let d_opt = l1_distance(opt.as_slice(), spec.reference.as_slice());
    ensure((d_opt - 1.115).abs() <= 5e-4, || format!("distance to solvency optimum {d_opt}"))?;
    Ok(format!("{:.2}% and {:.2}%", d_pe * 100.0, d_opt * 100.0))
}

fn bound_oracle() -> Outcome {
    let t = Instant::now();
    let mut checked = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = 2 + (seed % 3) as usize;
        let len = rng.random_range(1..=12);
        let lattice = seed % 2 == 0;
        let points: Vec<Vec<f64>> = (0..len)
            .map(|_| {
                (0..m)
                    .map(|_| if lattice { rng.random_range(1..10) as f64 / 10.0 } else { rng.random_range(0.01..0.99) })
                    .collect()
            })
            .collect();
        let top = vec![1.0; m];
        let bottom = vec![0.0; m];
        let mut u = vec![top.clone()];
        let mut l = vec![bottom.clone()];
        for k in 0..points.len() {
            u = new_upper_bounds(&u, &points[k]);
            l = new_lower_bounds(&l, &points[k]);
            let prefix = &points[..=k];
            ensure(oracle::sorted_set(&u) == oracle::sorted_set(&oracle::lub_brute(prefix, &top)), || {
                format!("seed {seed}: upper bounds differ after {prefix:?}")
            })?;
            ensure(oracle::sorted_set(&l) == oracle::sorted_set(&oracle::llb_brute(prefix, &bottom)), || {
                format!("seed {seed}: lower bounds differ after {prefix:?}")
            })?;
            checked += 1;
        }
    }
    within(Duration::from_secs(10), t)?;
    Ok(format!("200 sequences, {checked} prefixes"))
}

fn seeded_runs() -> Result<Vec<(u64, usize, boxalgo::RepresentationArchive)>, String> {
    let spec = bundled();
    (0..50u64)
        .map(|seed| {
            let maxit = [5, 10, 20][seed as usize % 3];
            let cfg = RunConfig { maxit, solver: SolverConfig { seed, ..SolverConfig::default() }, ..RunConfig::default() };
            boxalgo::run(&spec, &cfg).map(|a| (seed, maxit, a)).map_err(|e| format!("seed {seed}: {e}"))
        })
        .collect()
}

fn archive_nondominance(runs: &[(u64, usize, boxalgo::RepresentationArchive)], t: Instant) -> Outcome {
    let mut records = 0;
    for (seed, maxit, a) in runs {
        invariants::nondominated(a, 1e-9).map_err(|e| format!("seed {seed} maxit {maxit}: {e}"))?;
        invariants::inside_origin(a).map_err(|e| format!("seed {seed} maxit {maxit}: {e}"))?;
        records += a.records.len();
    }
    within(Duration::from_secs(300), t)?;
    Ok(format!("{} runs, {records} records, {:.1?}", runs.len(), t.elapsed()))
}

fn monotone_refinement(runs: &[(u64, usize, boxalgo::RepresentationArchive)]) -> Outcome {
    let mut steps = 0;
    for (seed, maxit, a) in runs {
        invariants::monotone_edges(a).map_err(|e| format!("seed {seed} maxit {maxit}: {e}"))?;
        steps += a.min_edges().len();
    }
    Ok(format!("{steps} selected boxes"))
}

fn coverage() -> Outcome {
    let a = boxalgo::run(&bundled(), &RunConfig::default()).map_err(|e| e.to_string())?;
    let n = a.intermediate().count();
    ensure(n == 10, || format!("{n} intermediate records"))?;
    for (k, range) in a.ranges().iter().enumerate() {
        let mid = 0.5 * (range.min + range.max);
        let vals: Vec<f64> = a.intermediate().map(|r| r.objectives.values[k]).collect();
        ensure(vals.iter().any(|v| *v < mid) && vals.iter().any(|v| *v > mid), || {
            format!("{}: {vals:?} around {mid}", range.objective.name())
        })?;
    }
    Ok("10 records straddle every midpoint".into())
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("a{i}")).collect()
}

fn solver_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut worst_analytic: f64 = 0.0;
    for _ in 0..100 {
        let (s1, s2) = (rng.random_range(0.02..0.5), rng.random_range(0.02..0.5));
        let mu = vec![rng.random_range(0.0..0.1), rng.random_range(0.0..0.1)];
        let spec = ModelSpec::new(
            AssetUniverse::uncorrelated(names(2), mu, vec![s1, s2]),
            PortfolioWeights::new(vec![0.5, 0.5]).unwrap(),
            None,
        );
        let p = PortfolioProblem::new(&spec).map_err(|e| e.to_string())?;
        let r = solve(&build_single(&p, 1, BuildOptions::default()), &SolverConfig::default());
        ensure(r.status == Status::Optimal, || format!("status {:?}", r.status))?;
        let w1 = s2 * s2 / (s1 * s1 + s2 * s2);
        let err = (r.x.unwrap()[0] - w1).abs();
        worst_analytic = worst_analytic.max(err);
        ensure(err <= 1e-6, || format!("sigma ({s1}, {s2}): w1 error {err}"))?;
    }
    let mut worst_grid: f64 = 0.0;
    for trial in 0..12 {
        let n = 2 + trial % 2;
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.1)).collect();
        let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.3)).collect();
        let mut rho = vec![vec![0.0; n]; n];
        for i in 0..n {
            rho[i][i] = 1.0;
            for j in 0..i {
                let c = rng.random_range(-0.4..0.4);
                rho[i][j] = c;
                rho[j][i] = c;
            }
        }
        let reference = simplex_point(&mut rng, n);
        let spec = ModelSpec::new(
            AssetUniverse { names: names(n), mu: mu.clone(), sigma: sigma.clone(), rho: rho.clone() },
            PortfolioWeights::new(reference.clone()).unwrap(),
            None,
        );
        let lambda = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..0.2)];
        let value = |w: &[f64]| {
            let ret: f64 = w.iter().zip(&mu).map(|(a, b)| a * b).sum();
            let dist: f64 = w.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum();
            -lambda[0] * ret + lambda[1] * oracle::volatility(w, &sigma, &rho) + lambda[2] * dist
        };
        let p = PortfolioProblem::new(&spec).map_err(|e| e.to_string())?;
        let r = solve(&build_weighted_sum(&p, &lambda, BuildOptions::default()), &SolverConfig::default());
        ensure(r.status == Status::Optimal, || format!("trial {trial}: status {:?}", r.status))?;
        let got = value(&r.x.unwrap());
        let best = oracle::simplex_grid(n, 1000).iter().map(|w| value(w)).fold(f64::INFINITY, f64::min);
        worst_grid = worst_grid.max((got - best).abs());
        ensure((got - best).abs() <= 1e-3, || format!("trial {trial}: solver {got}, grid {best}"))?;
    }
    Ok(format!("analytic error {worst_analytic:.1e}, grid gap {worst_grid:.1e}"))
}

fn solvency_composition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100_000 {
        let x3: f64 = rng.random_range(-10.0..10.0);
        let x4: f64 = rng.random_range(-10.0..10.0);
        let r = x3 * x3 + 1.5 * x3 * x4 + x4 * x4;
        ensure(r >= -1e-9, || format!("radicand {r} at ({x3}, {x4})"))?;
    }
    for _ in 0..20_000 {
        let cal = SolvencyCalibration::constant(1, rng.random_range(0.0..1.0), 1.0, 0.0, 0.0, 0.0);
        let x: [f64; 5] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        let mr = market_risk(&x, &cal);
        ensure(mr >= cal.c1, || format!("market risk {mr} below c1 {}", cal.c1))?;
    }
    let spec = bundled();
    let cal = spec.solvency.as_ref().unwrap();
    let chain = oracle::Chain {
        a: cal.sensitivities.clone(),
        b: cal.offsets.clone(),
        c: [cal.c1, cal.c2, cal.c3, cal.c4, cal.c5],
    };
    for _ in 0..100 {
        let w = simplex_point(&mut rng, 13);
        let chained = constant_risk_adjust(market_risk(&aggregate_risks(&net_risk(&w, cal).unwrap()), cal), cal);
        let direct = solvency_ratio(&w, cal).unwrap();
        ensure(chained.to_bits() == direct.to_bits(), || format!("{chained} vs {direct}"))?;
        let independent = chain.solvency(&w);
        ensure((direct - independent).abs() <= 1e-10 * (1.0 + independent.abs()), || {
            format!("{direct} vs oracle {independent}")
        })?;
    }
    Ok("1e5 radicands, 2e4 market risks, 100 portfolios".into())
}

fn restricted_run() -> Outcome {
    let spec = bundled();
    let bounds = [
        ObjectiveBound::new(Objective::Return, BoundOp::AtLeast, 0.0183),
        ObjectiveBound::new(Objective::Volatility, BoundOp::AtMost, 0.0427),
        ObjectiveBound::new(Objective::Distance, BoundOp::AtMost, 0.5),
    ];
    let a = boxalgo::restrict_and_rerun(&spec, &bounds, &RunConfig::default()).map_err(|e| e.to_string())?;
    let ret = a.range(Objective::Return).unwrap();
    let dist = a.range(Objective::Distance).unwrap();
    ensure(ret.min >= 0.0183 - 1e-8, || format!("return range {ret:?}"))?;
    ensure(dist.max <= 0.5 + 1e-8, || format!("distance range {dist:?}"))?;
    let bad = [ObjectiveBound::new(Objective::Return, BoundOp::AtLeast, 0.09)];
    match boxalgo::restrict_and_rerun(&spec, &bad, &RunConfig::default()) {
        Err(e) if e.is_infeasible() => {}
        other => return Err(format!("return >= 9%: {other:?}")),
    }
    Ok(format!(
        "return [{:.2}%, {:.2}%], distance [{:.2}%, {:.2}%]; 9% infeasible",
        ret.min * 100.0,
        ret.max * 100.0,
        dist.min * 100.0,
        dist.max * 100.0
    ))
}

async fn service_artifact() -> Result<Vec<u8>, String> {
    let app = boxfront_service::router(boxfront_service::AppState::new(1, None));
    let read = |n: &str| std::fs::read_to_string(data(n)).unwrap();
    let upload = serde_json::json!({
        "assets_csv": read("table1_assets.csv"),
        "correlation_csv": read("synthetic_correlation.csv"),
        "calibration_toml": read("synthetic_calibration.toml"),
        "reference_csv": read("table2_reference.csv"),
    });
    let call = |method: &str, uri: String, body: Option<serde_json::Value>| {
        let app = app.clone();
        let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
        let body = body.map_or_else(Body::empty, |v| Body::from(v.to_string()));
        async move {
            let resp = app.oneshot(req.body(body).unwrap()).await.unwrap();
            let status = resp.status();
            (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
        }
    };
    let json = |b: &[u8]| serde_json::from_slice::<serde_json::Value>(b).unwrap();
    let (s, b) = call("POST", "/models".into(), Some(upload)).await;
    ensure(s == StatusCode::CREATED, || format!("upload: {s}"))?;
    let model = json(&b)["id"].as_str().unwrap().to_string();
    let (s, b) = call("POST", format!("/models/{model}/runs"), Some(serde_json::json!({}))).await;
    ensure(s == StatusCode::ACCEPTED, || format!("run: {s}"))?;
    let run = json(&b)["id"].as_str().unwrap().to_string();
    for _ in 0..1200 {
        let (_, b) = call("GET", format!("/runs/{run}"), None).await;
        match json(&b)["state"].as_str() {
            Some("done") => {
                let (s, body) = call("GET", format!("/runs/{run}/archive"), None).await;
                ensure(s == StatusCode::OK, || format!("archive: {s}"))?;
                return Ok(body);
            }
            Some("failed") => return Err(format!("service run failed: {}", String::from_utf8_lossy(&b))),
            _ => tokio::time::sleep(Duration::from_millis(100)).await,
        }
    }
    Err("service run did not finish".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cli_run = |name: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let paths = bundled_paths();
        let status = Command::new(env!("CARGO_BIN_EXE_boxfront"))
            .env("RUST_LOG", "error")
            .arg("optimize")
            .arg("--assets")
            .arg(&paths.assets)
            .arg("--correlation")
            .arg(paths.correlation.unwrap())
            .arg("--calibration")
            .arg(paths.calibration.unwrap())
            .arg("--reference")
            .arg(paths.reference.unwrap())
            .args(["--format", "json", "--out"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("cli exited with {status}"))?;
        std::fs::read(&out).map_err(|e| e.to_string())
    };
    let first = cli_run("a.json")?;
    let second = cli_run("b.json")?;
    ensure(first == second, || "two CLI runs differ".into())?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| e.to_string())?;
    let service = rt.block_on(service_artifact())?;
    ensure(first == service, || {
        let at = first.iter().zip(&service).position(|(a, b)| a != b).unwrap_or(first.len().min(service.len()));
        format!("CLI and service artifacts differ at byte {at} (lengths {} and {})", first.len(), service.len())
    })?;
    Ok(format!("{} identical bytes from CLI twice and service", first.len()))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        match f() {
            Ok(detail) => println!("PASS  {name:<28} {detail} ({:.2?})", t.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<28} {why} ({:.2?})", t.elapsed());
            }
        }
    };
    report("payoff extremes", &payoff_extremes);
    report("distance values", &distance_values);
    report("bound-update oracle", &bound_oracle);
    let t = Instant::now();
    let runs = seeded_runs();
    report("archive nondominance", &|| archive_nondominance(runs.as_ref().map_err(|e| e.clone())?, t));
    report("monotone refinement", &|| monotone_refinement(runs.as_ref().map_err(|e| e.clone())?));
    report("coverage at budget 10", &coverage);
    report("solver sanity", &solver_sanity);
    report("solvency composition", &solvency_composition);
    report("restricted run", &restricted_run);
    report("end-to-end determinism", &determinism);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

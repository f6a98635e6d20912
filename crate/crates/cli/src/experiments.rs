use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use volac_core::domain::{DomainError, GridDomain};
use volac_core::fieldsolver::{
    box_bounds_check, gradient_flow, newton_refine, Field, FieldError, FlowOptions, NewtonOptions, RecordSidecar,
    SolutionRecord,
};
use volac_core::multiplicity::{
    admissible, enumerate, photography, radial_for, sublevel_m, sublevel_m_star, EnumerateOptions, MultiplicityError,
    SeedSpec,
};
use volac_core::potential::PotentialError;
use volac_core::radial::{
    extract_multiplier, gamma_threshold, minimize_radial, pohozaev_residual, radius_bounds, support_radius,
    sweep_entry, threshold_from_entries, write_sweep_csv, RadialError, RadialGrid, RadialOptions, SweepOptions,
};
use volac_core::spectral::{
    annotate, index_range_check, linearized_spectrum, morse_count_check, morse_relation_check, SpectralError,
};
use volac_core::{certify, Potential, PotentialCertificate};

use crate::config::{ExperimentConfig, Kind};
use crate::{Outputs, RunError};

const DEFAULT_RADIAL_H: f64 = 0.02;

pub(crate) fn dispatch(cfg: &ExperimentConfig, workers: usize, out: &mut Outputs) -> Result<(), RunError> {
    match cfg.kind {
        Kind::ValidatePotential => validate_potential(cfg, out),
        Kind::Radial => radial(cfg, out),
        Kind::RadialSweep => radial_sweep(cfg, workers, out),
        Kind::Solve => solve(cfg, out),
        Kind::Multiplicity => multiplicity(cfg, workers, out),
        Kind::Spectrum => spectrum(cfg, out),
        Kind::MorseCheck => morse_check(cfg, out),
    }
}

fn potential_err(e: PotentialError) -> RunError {
    RunError::Input(format!("potential: {e}"))
}

fn domain_err(e: DomainError) -> RunError {
    match e {
        DomainError::Io(e) => RunError::Io(e),
        e => RunError::Input(format!("domain: {e}")),
    }
}

fn radial_err(e: RadialError) -> RunError {
    match e {
        RadialError::InvalidInput(m) => RunError::Input(m),
        RadialError::Io(e) => RunError::Io(e),
        e => RunError::Numerical(e.to_string()),
    }
}

fn field_err(e: FieldError) -> RunError {
    match e {
        FieldError::InvalidInput(m) | FieldError::Format(m) => RunError::Input(m),
        FieldError::Io(e) => RunError::Io(e),
        FieldError::Json(e) => RunError::Input(e.to_string()),
        e => RunError::Numerical(e.to_string()),
    }
}

fn multiplicity_err(e: MultiplicityError) -> RunError {
    match e {
        MultiplicityError::Radial(e) => radial_err(e),
        MultiplicityError::Field(e) => field_err(e),
        e => RunError::Input(e.to_string()),
    }
}

fn spectral_err(e: SpectralError) -> RunError {
    match e {
        SpectralError::EigSolverStall { .. } => RunError::Numerical(e.to_string()),
        e => RunError::Input(e.to_string()),
    }
}

fn load_potential(cfg: &ExperimentConfig) -> Result<(Potential, PotentialCertificate), RunError> {
    let spec = cfg.potential.as_deref().ok_or_else(|| RunError::Input("potential missing".into()))?;
    let p = Potential::from_spec(spec, cfg.base_dir.as_deref()).map_err(potential_err)?;
    let cert = certify(&p).map_err(potential_err)?;
    Ok((p, cert))
}

fn load_domain(cfg: &ExperimentConfig) -> Result<Arc<GridDomain>, RunError> {
    let spec = cfg.domain.as_deref().ok_or_else(|| RunError::Input("domain missing".into()))?;
    Ok(Arc::new(GridDomain::from_spec(spec).map_err(domain_err)?))
}

fn target(cfg: &ExperimentConfig, rel: &str) -> PathBuf {
    cfg.output.join(rel)
}

fn write_json<T: Serialize + ?Sized>(cfg: &ExperimentConfig, out: &mut Outputs, rel: &str, v: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| RunError::Input(e.to_string()))?;
    std::fs::write(target(cfg, rel), text + "\n")?;
    out.files.push(rel.into());
    Ok(())
}

fn write_mask(cfg: &ExperimentConfig, out: &mut Outputs, d: &GridDomain) -> Result<(), RunError> {
    d.write_mask_csv(&target(cfg, "mask.csv")).map_err(domain_err)?;
    out.files.push("mask.csv".into());
    Ok(())
}

fn radial_options(cfg: &ExperimentConfig) -> RadialOptions {
    let mut o = RadialOptions::default();
    o.tol = cfg.radial.tol;
    if let Some(m) = cfg.radial.max_iter {
        o.max_iter = m;
    }
    o
}

fn validate_potential(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let (p, cert) = load_potential(cfg)?;
    for f in cert.axiom_flags.iter().filter(|f| f.passed == Some(false)) {
        out.failures.push(format!("axiom {:?} fails near s = {:?}", f.axiom, f.violation_at));
    }
    write_json(
        cfg,
        out,
        "certificate.json",
        &json!({ "potential": p.describe(), "certificate": cert, "all_passed": cert.all_passed() }),
    )?;
    let (lo, hi) = p.sample_range();
    let n = 400;
    let mut text = String::from("s,W,dW,d2W\n");
    for i in 0..=n {
        let s = lo + (hi - lo) * i as f64 / n as f64;
        text.push_str(&format!("{s:.12e},{:.12e},{:.12e},{:.12e}\n", p.eval(s), p.deriv(s), p.deriv2(s)));
    }
    std::fs::write(target(cfg, "potential.csv"), text)?;
    out.files.push("potential.csv".into());
    Ok(())
}

fn radial(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let (p, cert) = load_potential(cfg)?;
    let gamma = cfg.radial.gamma.expect("validated");
    let dim = cfg.radial.dim.unwrap_or(2);
    let h = cfg.radial.h.unwrap_or(DEFAULT_RADIAL_H);
    let grid = RadialGrid::for_gamma(&cert, dim, gamma, h).map_err(radial_err)?;
    let prof = minimize_radial(&p, &cert, gamma, &grid, &radial_options(cfg)).map_err(radial_err)?;
    prof.save(&target(cfg, "profile.csv"), &target(cfg, "profile.json")).map_err(radial_err)?;
    out.files.push("profile.csv".into());
    out.files.push("profile.json".into());
    let b = radius_bounds(&cert, dim);
    let r = support_radius(&prof, 1e-8).radius;
    let (lower, upper) = (b.lower(gamma, dim), b.upper(gamma, dim));
    let poh = pohozaev_residual(&prof, &p);
    let report = json!({
        "gamma": gamma,
        "dim": dim,
        "h": h,
        "energy": prof.energy,
        "lambda": prof.lambda,
        "mass": prof.mass,
        "support_radius": r,
        "bounds": { "lower": lower, "upper": upper, "within": r >= lower && r <= upper },
        "pohozaev": poh,
        "pohozaev_relative": poh.relative(),
        "multiplier": extract_multiplier(&prof, &p).ok(),
        "diagnostics": prof.diagnostics,
    });
    write_json(cfg, out, "report.json", &report)
}

fn radial_sweep(cfg: &ExperimentConfig, workers: usize, out: &mut Outputs) -> Result<(), RunError> {
    use rayon::prelude::*;
    let (p, cert) = load_potential(cfg)?;
    let gammas = cfg.radial.gammas.clone().expect("validated");
    let dim = cfg.radial.dim.unwrap_or(2);
    let h = cfg.radial.h.unwrap_or(DEFAULT_RADIAL_H);
    let opts = radial_options(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Input(e.to_string()))?;
    let entries: Vec<_> =
        pool.install(|| gammas.par_iter().map(|&g| sweep_entry(&p, &cert, dim, g, h, &opts).0).collect());
    for e in &entries {
        if let Some(err) = &e.error {
            out.failures.push(format!("gamma {}: {err}", e.gamma));
        }
    }
    write_sweep_csv(&entries, &target(cfg, "sweep.csv")).map_err(radial_err)?;
    out.files.push("sweep.csv".into());
    let threshold = threshold_from_entries(&entries).ok();
    write_json(
        cfg,
        out,
        "sweep.json",
        &json!({ "dim": dim, "h": h, "gamma_threshold": threshold, "entries": entries }),
    )
}

fn initial_field(
    cfg: &ExperimentConfig,
    d: &Arc<GridDomain>,
    p: &Potential,
    cert: &PotentialCertificate,
    volume: f64,
    eps: f64,
) -> Result<Field, RunError> {
    let init = cfg.solver.init.as_deref().unwrap_or("plateau");
    let mut f = if init == "plateau" {
        Field::from_fn(d.clone(), |_, _| 1.0)
    } else if init == "noise" {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let vals = (0..d.n_interior()).map(|_| rng.random::<f64>()).collect();
        Field::new(d.clone(), vals).map_err(field_err)?
    } else if let Some(xy) = init.strip_prefix("photography:") {
        let c: Vec<f64> = xy
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| RunError::Input(format!("solver.init: bad centre `{xy}`")))?;
        if c.len() != 2 {
            return Err(RunError::Input(format!("solver.init: expected x,y, got `{xy}`")));
        }
        let h = cfg.multiplicity.radial_h.or(cfg.radial.h).unwrap_or(DEFAULT_RADIAL_H);
        let prof = radial_for(p, cert, d.dim(), volume, eps, h).map_err(multiplicity_err)?;
        photography(d, &prof, (c[0], c[1]), eps).map_err(multiplicity_err)?
    } else if let Some(file) = init.strip_prefix("file:") {
        Field::read_csv(d.clone(), &cfg.resolve(Path::new(file))).map_err(field_err)?
    } else {
        return Err(RunError::Input(format!("solver.init: unknown initialiser `{init}`")));
    };
    f.scale_to_volume(volume).map_err(field_err)?;
    Ok(f)
}

fn save_record(
    cfg: &ExperimentConfig,
    out: &mut Outputs,
    stem: &str,
    rec: &SolutionRecord,
    extra: Vec<(&str, Value)>,
) -> Result<(), RunError> {
    let csv = format!("{stem}.csv");
    rec.field.write_csv(&target(cfg, &csv)).map_err(field_err)?;
    out.files.push(csv.into());
    let mut side = serde_json::to_value(rec.sidecar()).map_err(|e| RunError::Input(e.to_string()))?;
    if let Value::Object(m) = &mut side {
        for (k, v) in extra {
            m.insert(k.to_string(), v);
        }
    }
    write_json(cfg, out, &format!("{stem}.json"), &side)
}

fn solve(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let (p, cert) = load_potential(cfg)?;
    let d = load_domain(cfg)?;
    let (volume, eps) = (cfg.volume.expect("validated"), cfg.eps.expect("validated"));
    write_mask(cfg, out, &d)?;
    let init = initial_field(cfg, &d, &p, &cert, volume, eps)?;
    let newton = cfg.solver.newton.unwrap_or(true);
    let mut flow = FlowOptions::default();
    // With Newton to finish, the flow only has to reach its basin.
    flow.tol = cfg.solver.tol.or(if newton { Some(1e-6) } else { None });
    if let Some(m) = cfg.solver.max_iter {
        flow.max_iter = m;
    }
    let (mut rec, stalled) = match gradient_flow(&init, &p, volume, eps, &flow) {
        Ok(r) => (r, None),
        Err(FieldError::NonConvergence(last)) => {
            let msg = format!(
                "gradient flow stopped after {} iterations at residual {:e}",
                last.iterations, last.residual_inf
            );
            (*last, Some(msg))
        }
        Err(e) => return Err(field_err(e)),
    };
    if newton {
        match newton_refine(&rec, &p, eps, &NewtonOptions::default()) {
            Ok(mut r) => {
                if let Some(m) = &stalled {
                    r.diagnostics.warnings.push(format!("{m}; refined by Newton"));
                }
                rec = r;
            }
            Err(e) if stalled.is_none() => rec.diagnostics.warnings.push(format!("newton: {e}")),
            Err(e) => {
                let msg = format!("{}; newton: {e}", stalled.unwrap_or_default());
                save_record(cfg, out, "solution", &rec, vec![("potential", json!(p.describe()))])?;
                return Err(RunError::Numerical(msg));
            }
        }
    } else if let Some(msg) = stalled {
        save_record(cfg, out, "solution", &rec, vec![("potential", json!(p.describe()))])?;
        return Err(RunError::Numerical(msg));
    }
    let k = cfg.solver.spectrum_k.unwrap_or(0);
    let spec = if k > 0 {
        let s = linearized_spectrum(&rec, &p, eps, k).map_err(spectral_err)?;
        annotate(&mut rec, &s);
        Some(s)
    } else {
        None
    };
    let bounds = box_bounds_check(&rec, &p, &cert);
    save_record(
        cfg,
        out,
        "solution",
        &rec,
        vec![
            ("potential", json!(p.describe())),
            ("bounds", json!(bounds)),
            ("spectrum", json!(spec)),
        ],
    )
}

fn multiplicity(cfg: &ExperimentConfig, workers: usize, out: &mut Outputs) -> Result<(), RunError> {
    let (p, cert) = load_potential(cfg)?;
    let d = load_domain(cfg)?;
    let (volume, eps) = (cfg.volume.expect("validated"), cfg.eps.expect("validated"));
    let ms = &cfg.multiplicity;
    let dim = d.dim();
    let rh = ms.radial_h.unwrap_or(DEFAULT_RADIAL_H);
    write_mask(cfg, out, &d)?;
    let topo = d.topology().map_err(domain_err)?;
    let gamma0 = match ms.gamma0 {
        Some(g) => g,
        None => {
            let sweep = SweepOptions {
                h: rh,
                ..SweepOptions::default()
            };
            gamma_threshold(&p, &cert, dim, &sweep).map_err(radial_err)?.gamma_threshold
        }
    };
    let profile = radial_for(&p, &cert, dim, volume, eps, rh).map_err(multiplicity_err)?;
    let params = admissible(&d, &cert, gamma0, &profile, volume, eps).map_err(multiplicity_err)?;
    if !params.admissible {
        out.failures.push(format!(
            "(V, eps) = ({volume}, {eps}) lies outside the admissible box (V1 = {}, eps1 = {})",
            params.v1, params.eps1
        ));
    }
    let m = sublevel_m(&profile, eps);
    let m_star = sublevel_m_star(&p, &cert, dim, d.r_deform, eps, volume, rh).map_err(multiplicity_err)?;
    let seeds = SeedSpec {
        pitch: ms.seed_pitch,
        points: ms.seed_points.clone(),
        two_bump: ms.two_bump.unwrap_or(false),
    };
    let opts = EnumerateOptions {
        spectrum_k: ms.spectrum_k.unwrap_or(6),
        workers,
        ..EnumerateOptions::default()
    };
    let cat = enumerate(&d, &p, &cert, &params, &profile, &seeds, &opts).map_err(multiplicity_err)?;
    std::fs::create_dir_all(target(cfg, "records"))?;
    let mut rows = Vec::new();
    for (i, (rec, spec)) in cat.records.iter().zip(&cat.spectra).enumerate() {
        let stem = format!("records/record_{i:03}");
        save_record(cfg, out, &stem, rec, vec![("spectrum", json!(spec))])?;
        let in_outer = rec.barycenter.map(|b| d.in_outer(b.0, b.1));
        rows.push(json!({
            "file": format!("{stem}.csv"),
            "energy": rec.energy,
            "lambda": rec.lambda,
            "residual_inf": rec.residual_inf,
            "barycenter": rec.barycenter,
            "below_c": rec.energy <= cat.c_level,
            "in_outer": in_outer,
            "morse_index": rec.morse_index,
            "nondegenerate": rec.nondegenerate,
        }));
    }
    for s in cat.seeds.iter().filter(|s| s.error.is_some()) {
        out.failures.push(format!("seed {:?}: {}", s.seed, s.error.as_deref().unwrap_or("")));
    }
    let below: Vec<_> = cat.below_c().cloned().collect();
    let morse = morse_verdict(&below, &topo);
    let indices: Vec<String> = below.iter().map(|r| r.morse_index.map_or("?".into(), |m| m.to_string())).collect();
    let catalog = json!({
        "params": params,
        "m": m,
        "m_star": m_star,
        "topology": topo,
        "dedup_tolerance": cat.dedup_tolerance,
        "c_level": cat.c_level,
        "distinct_below_c": cat.distinct_below_c,
        "distinct_total": cat.distinct_total,
        "count": morse_count_check(cat.distinct_below_c, cat.distinct_total - cat.distinct_below_c, &topo),
        "index_range": index_range_check(&below, dim),
        "morse": morse,
        "records": rows,
        "seeds": cat.seeds,
    });
    write_json(cfg, out, "catalog.json", &catalog)?;
    let summary = format!(
        "domain,cat,P1,distinct_below_c,distinct_total,morse_indices\n{},{},{},{},{},{}\n",
        d.family(),
        topo.cat,
        topo.p1,
        cat.distinct_below_c,
        cat.distinct_total,
        indices.join(";")
    );
    std::fs::write(target(cfg, "summary.csv"), summary)?;
    out.files.push("summary.csv".into());
    Ok(())
}

/// Morse relation over nondegenerate records; skipped otherwise.
fn morse_verdict(records: &[SolutionRecord], topo: &volac_core::domain::TopologyInfo) -> Value {
    let mut idx = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match (r.morse_index, r.nondegenerate) {
            (Some(m), Some(true)) => idx.push(m),
            _ => return json!({ "skipped": format!("record {i} is degenerate or has no spectrum") }),
        }
    }
    json!(morse_relation_check(&idx, topo))
}

fn spectrum(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let (p, _) = load_potential(cfg)?;
    let json_path = cfg.resolve(cfg.spectrum.solution.as_ref().expect("validated"));
    let text = std::fs::read_to_string(&json_path)?;
    let mut side: Value = serde_json::from_str(&text).map_err(|e| RunError::Input(format!("{}: {e}", json_path.display())))?;
    let sc: RecordSidecar =
        serde_json::from_value(side.clone()).map_err(|e| RunError::Input(format!("{}: {e}", json_path.display())))?;
    let d = Arc::new(GridDomain::new(sc.shape.clone(), sc.h, Some(sc.r_deform)).map_err(domain_err)?);
    let csv_path = json_path.with_extension("csv");
    let mut rec = SolutionRecord::load(d, &csv_path, &json_path).map_err(field_err)?;
    let k = cfg.spectrum.k.unwrap_or(6);
    let s = linearized_spectrum(&rec, &p, sc.eps, k).map_err(spectral_err)?;
    annotate(&mut rec, &s);
    write_json(cfg, out, "spectrum.json", &s)?;
    if let Value::Object(m) = &mut side {
        m.insert("morse_index".into(), json!(rec.morse_index));
        m.insert("nondegenerate".into(), json!(rec.nondegenerate));
        m.insert("spectrum".into(), json!(s));
    }
    write_json(cfg, out, "solution.json", &side)
}

fn morse_check(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let d = load_domain(cfg)?;
    let topo = d.topology().map_err(domain_err)?;
    let report = if let Some(idx) = &cfg.morse.indices {
        json!({ "source": "indices", "indices": idx, "topology": topo, "verdict": morse_relation_check(idx, &topo) })
    } else {
        let path = cfg.resolve(cfg.morse.catalog.as_ref().expect("validated"));
        let cat: Value = serde_json::from_str(&std::fs::read_to_string(&path)?)
            .map_err(|e| RunError::Input(format!("{}: {e}", path.display())))?;
        let rows = cat["records"]
            .as_array()
            .ok_or_else(|| RunError::Input(format!("{}: no records", path.display())))?;
        let mut idx = Vec::new();
        let mut skipped = None;
        for (i, r) in rows.iter().filter(|r| r["below_c"] == json!(true)).enumerate() {
            match (r["morse_index"].as_u64(), r["nondegenerate"].as_bool()) {
                (Some(m), Some(true)) => idx.push(m as usize),
                _ => {
                    skipped = Some(format!("record {i} is degenerate or has no spectrum"));
                    break;
                }
            }
        }
        match skipped {
            Some(reason) => json!({ "source": "catalog", "topology": topo, "verdict": { "skipped": reason } }),
            None => json!({
                "source": "catalog",
                "indices": idx,
                "topology": topo,
                "verdict": morse_relation_check(&idx, &topo),
            }),
        }
    };
    write_json(cfg, out, "morse.json", &report)
}

//! Subcommand implementations.

use crate::config::Loaded;
use crate::csvio::{fmt_f64, CsvDoc};
use expreg_core::optimizer::{
    exponent_rate_curve, single_receiver_exponent, EtaQuery, Receiver,
};
use expreg_core::oracle::{brute_force_eta, GridSpec, DEFAULT_ENUM_CAP};
use expreg_core::regions::{
    certify_frontier, expected_common_region, expected_full_region, maxrate_region,
    no_rate_sharing_region, region_inclusion, resolve_log_base, BaseResolution,
    BaseResolutionTarget, ParetoFrontier, RegionError, Witness,
};
use expreg_core::sim::{estimate_exponent, simulate, SimOutcome, SlopeEstimate};
use expreg_core::{instances, LogBase};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("incompatible mode: {0}")]
    Mode(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("internal invariant failure: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Mode(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

fn map_region_err(e: RegionError) -> CliError {
    CliError::Input(e.to_string())
}

/// Resolve the working log base, empirically when the config says "auto".
pub fn resolve_base(loaded: &Loaded) -> Result<(LogBase, Option<BaseResolution>), CliError> {
    if let Some(b) = loaded.log_base {
        return Ok((b, None));
    }
    let Some(sec) = &loaded.raw.base_resolution else {
        // No target to resolve against; bits is the documented default.
        return Ok((LogBase::Bits, None));
    };
    let receiver = Receiver::from_number(sec.receiver)
        .ok_or_else(|| CliError::Input(format!("receiver {} (1|2)", sec.receiver)))?;
    let res = resolve_log_base(
        &loaded.joint,
        &BaseResolutionTarget {
            receiver,
            rate: sec.rate,
            expected: sec.expected,
            rel_window: sec.rel_window,
        },
        &loaded.settings,
    )
    .map_err(map_region_err)?;
    Ok((res.chosen, Some(res)))
}

fn push_base_meta(doc: &mut CsvDoc, loaded: &Loaded, base: LogBase, res: &Option<BaseResolution>) {
    doc.push_meta("log_base", base.name());
    if let Some(r) = res {
        doc.push_meta("log_base_resolution", if r.ambiguous { "ambiguous" } else { "definite" });
        doc.push_meta("log_base_value_bits", fmt_f64(r.value_bits));
        doc.push_meta("log_base_value_nats", fmt_f64(r.value_nats));
    }
    doc.push_meta("seed", loaded.settings.seed);
    doc.push_meta("restarts", loaded.settings.restarts);
}

// ---------------------------------------------------------------------------
// eta
// ---------------------------------------------------------------------------

pub fn cmd_eta(loaded: &Loaded, receiver: usize, mut rates: Vec<f64>) -> Result<CsvDoc, CliError> {
    let receiver = Receiver::from_number(receiver)
        .ok_or_else(|| CliError::Input(format!("receiver {receiver} (1|2)")))?;
    if rates.is_empty() {
        return Err(CliError::Input("at least one --rate is required".into()));
    }
    rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (base, res) = resolve_base(loaded)?;
    let curve = exponent_rate_curve(&loaded.joint, receiver, &rates, base, &loaded.settings)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut doc = CsvDoc::new(&[
        "rate",
        "eta",
        "rate_used",
        "other_side",
        "converged",
        "witness_digest",
    ]);
    for (rate, r) in &curve {
        let digest = {
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for &v in r.witness.channel().as_slice() {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
            h
        };
        doc.push_row(vec![
            fmt_f64(*rate),
            fmt_f64(r.value),
            fmt_f64(r.rate_used),
            fmt_f64(r.other_side),
            r.converged.to_string(),
            format!("{digest:016x}"),
        ]);
    }
    doc.push_meta("command", "eta");
    doc.push_meta("receiver", receiver.number());
    push_base_meta(&mut doc, loaded, base, &res);
    Ok(doc)
}

// ---------------------------------------------------------------------------
// region
// ---------------------------------------------------------------------------

pub const REGION_HEADER: &[&str] = &[
    "theta1",
    "theta2",
    "lambda",
    "sweep_rate",
    "budget",
    "rate_used_common",
    "rate_used_ind1",
    "rate_used_ind2",
    "sigma0",
    "sigma1",
    "sigma2",
    "split1",
    "split2",
    "converged",
    "witness_digest",
];

fn witness_row(p: &expreg_core::regions::FrontierPoint) -> Vec<String> {
    let w = &p.witness;
    let blank = String::new();
    let lambda;
    let mut sweep = blank.clone();
    let budget;
    let mut rates = [blank.clone(), blank.clone(), blank.clone()];
    let mut sigma = [blank.clone(), blank.clone(), blank.clone()];
    let mut splits = [blank.clone(), blank.clone()];
    match w {
        Witness::Single { lambda: l, sweep_rate, budget: b, rate_used, .. } => {
            lambda = fmt_f64(*l);
            if let Some(g) = sweep_rate {
                sweep = fmt_f64(*g);
            }
            budget = fmt_f64(*b);
            rates[0] = fmt_f64(*rate_used);
        }
        Witness::Layered { lambda: l, rates: r, rates_used, .. } => {
            lambda = fmt_f64(*l);
            budget = fmt_f64(r[0]);
            for k in 0..3 {
                rates[k] = fmt_f64(rates_used[k]);
            }
        }
        Witness::Branch { lambda: l, sigma: s, splits: sp, rates: r, rates_used, .. } => {
            lambda = fmt_f64(*l);
            budget = fmt_f64(r[0]);
            for k in 0..3 {
                rates[k] = fmt_f64(rates_used[k]);
            }
            let sa = s.as_array();
            for k in 0..3 {
                sigma[k] = fmt_f64(sa[k]);
            }
            splits = [fmt_f64(sp[0]), fmt_f64(sp[1])];
        }
    }
    vec![
        fmt_f64(p.theta1),
        fmt_f64(p.theta2),
        lambda,
        sweep,
        budget,
        rates[0].clone(),
        rates[1].clone(),
        rates[2].clone(),
        sigma[0].clone(),
        sigma[1].clone(),
        sigma[2].clone(),
        splits[0].clone(),
        splits[1].clone(),
        w.converged().to_string(),
        format!("{:016x}", w.digest()),
    ]
}

pub fn compute_region(
    loaded: &Loaded,
    which: &str,
    base: LogBase,
) -> Result<ParetoFrontier, CliError> {
    let common_only = loaded.rates.r1 == 0.0 && loaded.rates.r2 == 0.0;
    let frontier = match which {
        "maxrate" => {
            maxrate_region(&loaded.joint, loaded.rates, &loaded.grids.lambda, base, &loaded.settings)
                .map_err(map_region_err)?
        }
        "expected-common" => {
            if !common_only {
                return Err(CliError::Mode(
                    "expected-common requires r1 = r2 = 0".into(),
                ));
            }
            expected_common_region(
                &loaded.joint,
                loaded.rates.r0,
                loaded.errors,
                &loaded.grids,
                base,
                &loaded.settings,
                &[],
            )
            .map_err(map_region_err)?
        }
        "no-rate-sharing" => {
            if !common_only {
                return Err(CliError::Mode(
                    "no-rate-sharing requires r1 = r2 = 0".into(),
                ));
            }
            no_rate_sharing_region(
                &loaded.joint,
                loaded.rates.r0,
                loaded.errors,
                &loaded.grids.lambda,
                base,
                &loaded.settings,
                &[],
            )
            .map_err(map_region_err)?
        }
        "expected-full" => expected_full_region(
            &loaded.joint,
            loaded.rates,
            loaded.errors,
            &loaded.grids,
            base,
            &loaded.settings,
            &[],
        )
        .map_err(map_region_err)?,
        other => {
            return Err(CliError::Input(format!(
                "region '{other}' (maxrate|expected-common|no-rate-sharing|expected-full)"
            )))
        }
    };
    // Every emitted frontier is re-checked by plain probability arithmetic.
    certify_frontier(&loaded.joint, base, &frontier, 1e-9)
        .map_err(CliError::Internal)?;
    Ok(frontier)
}

pub fn cmd_region(loaded: &Loaded, which: &str) -> Result<CsvDoc, CliError> {
    let (base, res) = resolve_base(loaded)?;
    let frontier = compute_region(loaded, which, base)?;
    let mut doc = CsvDoc::new(REGION_HEADER);
    for p in frontier.points() {
        doc.push_row(witness_row(p));
    }
    doc.push_meta("command", "region");
    doc.push_meta("which", which);
    doc.push_meta("r0", fmt_f64(loaded.rates.r0));
    doc.push_meta("r1", fmt_f64(loaded.rates.r1));
    doc.push_meta("r2", fmt_f64(loaded.rates.r2));
    doc.push_meta("eps1", fmt_f64(loaded.errors.eps1));
    doc.push_meta("eps2", fmt_f64(loaded.errors.eps2));
    doc.push_meta("points", frontier.len());
    push_base_meta(&mut doc, loaded, base, &res);
    Ok(doc)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn outcome_rows(doc: &mut CsvDoc, out: &SimOutcome) {
    for i in 0..2 {
        let (a, ase) = out.alpha[i].map_or((String::new(), String::new()), |e| {
            (fmt_f64(e.mean), fmt_f64(e.std_err))
        });
        let (b, bse) = out.beta[i].map_or((String::new(), String::new()), |e| {
            (fmt_f64(e.mean), fmt_f64(e.std_err))
        });
        doc.push_row(vec![
            out.n.to_string(),
            (i + 1).to_string(),
            a,
            ase,
            b,
            bse,
            out.mean_len_h0[0].map_or(String::new(), fmt_f64),
            out.mean_len_h0[1].map_or(String::new(), fmt_f64),
            out.mean_len_h0[2].map_or(String::new(), fmt_f64),
            out.trials_h0.to_string(),
            out.trials_h1.to_string(),
            out.length_accounting_ok.to_string(),
        ]);
    }
}

fn outcome_json(out: &SimOutcome) -> serde_json::Value {
    let est = |e: &Option<expreg_core::sim::Estimate>| {
        e.map_or(serde_json::Value::Null, |e| {
            serde_json::json!({"mean": e.mean, "std_err": e.std_err, "hits": e.hits, "trials": e.trials})
        })
    };
    serde_json::json!({
        "n": out.n,
        "seed": out.seed,
        "alpha": [est(&out.alpha[0]), est(&out.alpha[1])],
        "beta": [est(&out.beta[0]), est(&out.beta[1])],
        "mean_len_h0": out.mean_len_h0,
        "length_accounting_ok": out.length_accounting_ok,
        "not_found": out.not_found,
        "label_counts": out.label_counts,
        "trials_h0": out.trials_h0,
        "trials_h1": out.trials_h1,
    })
}

pub fn cmd_simulate(loaded: &Loaded) -> Result<(CsvDoc, serde_json::Value), CliError> {
    let (base, res) = resolve_base(loaded)?;
    let mut doc = CsvDoc::new(&[
        "n",
        "receiver",
        "alpha",
        "alpha_se",
        "beta",
        "beta_se",
        "mean_len_m0",
        "mean_len_m1",
        "mean_len_m2",
        "trials_h0",
        "trials_h1",
        "length_accounting_ok",
    ]);
    let mut summary = serde_json::Map::new();
    summary.insert("log_base".into(), base.name().into());
    summary.insert("seed".into(), loaded.settings.seed.into());

    if let Some(family) = &loaded.raw.sim_family {
        let configs: Vec<_> = family
            .iter()
            .map(|s| loaded.scheme_config(s, base))
            .collect::<Result<_, _>>()
            .map_err(CliError::Input)?;
        let outcomes: Vec<SimOutcome> = configs
            .iter()
            .map(|c| simulate(&loaded.joint, c))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Input(e.to_string()))?;
        for out in &outcomes {
            outcome_rows(&mut doc, out);
        }
        let fits = estimate_exponent(&loaded.joint, &configs)
            .map_err(|e| CliError::Input(e.to_string()))?;
        let fit_json: Vec<serde_json::Value> = fits
            .iter()
            .map(|f| match f {
                SlopeEstimate::Slope { value, std_err, points } => serde_json::json!({
                    "kind": "slope", "value": value, "std_err": std_err,
                    "points": points.iter().map(|(n, b)| serde_json::json!([n, b])).collect::<Vec<_>>(),
                }),
                SlopeEstimate::LowerBoundOnly { n, bound } => {
                    serde_json::json!({"kind": "lower_bound", "n": n, "bound": bound})
                }
            })
            .collect();
        summary.insert("exponent_fit".into(), fit_json.into());
        summary.insert(
            "outcomes".into(),
            outcomes.iter().map(outcome_json).collect::<Vec<_>>().into(),
        );
        summary.insert(
            "length_accounting_ok".into(),
            outcomes.iter().all(|o| o.length_accounting_ok).into(),
        );
    } else {
        let Some(sim) = &loaded.raw.sim else {
            return Err(CliError::Mode("config has no sim section".into()));
        };
        let cfg = loaded.scheme_config(sim, base).map_err(CliError::Input)?;
        let out = simulate(&loaded.joint, &cfg).map_err(|e| CliError::Input(e.to_string()))?;
        outcome_rows(&mut doc, &out);
        summary.insert("outcomes".into(), vec![outcome_json(&out)].into());
        summary.insert("length_accounting_ok".into(), out.length_accounting_ok.into());
    }
    doc.push_meta("command", "simulate");
    push_base_meta(&mut doc, loaded, base, &res);
    Ok((doc, serde_json::Value::Object(summary)))
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

pub fn cmd_validate(loaded: &Loaded) -> Result<String, CliError> {
    use std::fmt::Write as _;
    let (base, res) = resolve_base(loaded)?;
    let mut report = String::new();
    let pass = |line: &str, ok: bool, out: &mut String| {
        let _ = writeln!(out, "{} {}", if ok { "PASS" } else { "FAIL" }, line);
        ok
    };
    let _ = writeln!(report, "validation report (log base: {})", base.name());
    if let Some(r) = &res {
        let _ = writeln!(
            report,
            "  base resolution: chosen={} ambiguous={} value_bits={:.8e} value_nats={:.8e}",
            base.name(),
            r.ambiguous,
            r.value_bits,
            r.value_nats
        );
    }

    // Oracle-vs-optimizer on the configured instance, when enumerable.
    let (ny0, _, _) = loaded.joint.dims();
    let grid = match ny0 {
        2 => GridSpec::new(0.05, 2, 4).ok(),
        3 => GridSpec::new(0.1, 3, 3).ok(),
        _ => None,
    };
    if let Some(grid) = grid {
        let rate = if loaded.rates.r0 > 0.0 { loaded.rates.r0 } else { 0.1 };
        let oracle = brute_force_eta(
            &loaded.joint,
            Receiver::One,
            rate,
            &grid,
            base,
            DEFAULT_ENUM_CAP,
        )
        .map_err(|e| CliError::Input(e.to_string()))?;
        let opt = single_receiver_exponent(
            &loaded.joint,
            EtaQuery { receiver: Receiver::One, rate },
            base,
            &loaded.settings,
        )
        .map_err(|e| CliError::Input(e.to_string()))?;
        pass(
            &format!(
                "optimizer >= grid oracle on the configured instance \
                 (optimizer {:.6e}, oracle {:.6e}, rate {rate})",
                opt.value, oracle
            ),
            opt.value + 1e-9 >= oracle,
            &mut report,
        );
    } else {
        let _ = writeln!(report, "SKIP oracle comparison (|Y0| too large to enumerate)");
    }

    // Paired runs on random binary instances.
    {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(loaded.settings.seed ^ 0xBEEF);
        let grid = GridSpec::new(0.05, 2, 4).map_err(|e| CliError::Internal(e.to_string()))?;
        let mut dominated = 0;
        let mut close = 0;
        let trials = 5;
        for _ in 0..trials {
            let j = instances::random_joint(2, 2, 2, &mut rng);
            let rate = 0.05 + 0.3 * rand::Rng::random::<f64>(&mut rng);
            let oracle =
                brute_force_eta(&j, Receiver::Two, rate, &grid, base, DEFAULT_ENUM_CAP)
                    .map_err(|e| CliError::Internal(e.to_string()))?;
            let opt = single_receiver_exponent(
                &j,
                EtaQuery { receiver: Receiver::Two, rate },
                base,
                &loaded.settings,
            )
            .map_err(|e| CliError::Internal(e.to_string()))?;
            if opt.value + 1e-9 >= oracle {
                dominated += 1;
            }
            if opt.value - oracle <= 0.02 {
                close += 1;
            }
        }
        pass(
            &format!("optimizer dominates the grid oracle on {dominated}/{trials} random binary instances"),
            dominated == trials,
            &mut report,
        );
        pass(
            &format!("oracle-optimizer gap <= 0.02 on {close}/{trials} random binary instances"),
            close == trials,
            &mut report,
        );
    }

    // CSV round trip: emitted documents re-parse into identical values.
    {
        let doc = cmd_eta(loaded, 1, vec![0.0, loaded.rates.r0.max(0.05)])?;
        let text = doc.render();
        let back = crate::csvio::CsvDoc::parse(&text).map_err(CliError::Internal)?;
        let ok = back == doc
            && back
                .rows
                .iter()
                .all(|r| crate::csvio::parse_f64(&r[1]).is_ok());
        pass("emitted CSV re-parses to identical values", ok, &mut report);
    }

    // Region inclusion chain.
    if loaded.rates.r1 == 0.0 && loaded.rates.r2 == 0.0 {
        let fix = compute_region(loaded, "maxrate", base)?;
        let seeds = fix.seed_channels();
        let nrs = no_rate_sharing_region(
            &loaded.joint,
            loaded.rates.r0,
            loaded.errors,
            &loaded.grids.lambda,
            base,
            &loaded.settings,
            &seeds,
        )
        .map_err(map_region_err)?;
        let mut seeds2 = seeds.clone();
        seeds2.extend(nrs.seed_channels());
        let star = expected_common_region(
            &loaded.joint,
            loaded.rates.r0,
            loaded.errors,
            &loaded.grids,
            base,
            &loaded.settings,
            &seeds2,
        )
        .map_err(map_region_err)?;
        pass(
            "maxrate region within no-rate-sharing region (slack 1e-6)",
            region_inclusion(&fix, &nrs, 1e-6),
            &mut report,
        );
        pass(
            "no-rate-sharing region within expected-common region (slack 1e-6)",
            region_inclusion(&nrs, &star, 1e-6),
            &mut report,
        );
        for (name, f) in [("maxrate", &fix), ("no-rate-sharing", &nrs), ("expected-common", &star)]
        {
            pass(
                &format!("{name} frontier witnesses certify"),
                certify_frontier(&loaded.joint, base, f, 1e-9).is_ok(),
                &mut report,
            );
        }
    } else {
        let fix = compute_region(loaded, "maxrate", base)?;
        pass(
            "maxrate frontier witnesses certify",
            certify_frontier(&loaded.joint, base, &fix, 1e-9).is_ok(),
            &mut report,
        );
    }
    Ok(report)
}

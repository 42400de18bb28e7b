//! One runner per experiment kind.

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transinfo::diffusion::{
    c_rho, check_nonexplosion, discretize, gaussian_shift_density, lip_poisson_ratio, normalize, CRhoVariant,
    NonExplosion, Rho,
};
use transinfo::feynman_kac::{best_w1i, best_w2i, lsi_ratio_scan};
use transinfo::lyapunov::{certify_h, drift_info_bound_check, mminf_lyapunov, verify_thm51, LyapunovCertificate};
use transinfo::markov::oscillation;
use transinfo::sample::{random_density, random_probability, random_sparse_density};
use transinfo::simulate::{
    deviation_estimate, sample_time_average, stationary_mean, EnsembleConfig, LedgerRow, Model as SimModel,
    Observable, Verdict,
};
use transinfo::trivial_metric::{ckp_extremal_two_point, ckp_gap, hellinger_check, jump_spectrum, rho, rho_sup_scan};
use transinfo::{
    alpha_infconv, fisher_information, spectral_gap, tensor_subadditivity_check, w1, w2, CostMatrix, DMatrix,
    Density, MetricMatrix, RateFunction, ReversibleChain,
};

use crate::models::{Loaded, Model};
use crate::report::{Report, Table};
use crate::spec::*;

pub fn run(plan: &Plan) -> Result<Report> {
    let mut rep = Report::new(&plan.name, plan.kind.as_str(), plan.seed);
    if let Some(m) = &plan.model {
        rep.put("model", &m.label);
    }
    let model = plan.model.as_ref();
    match &plan.params {
        Params::VerifyTci(p) => verify_tci(&mut rep, model.expect("validated"), p, plan.seed)?,
        Params::BestConstant(p) => best_constant(&mut rep, model.expect("validated"), p, plan.seed)?,
        Params::CkpScan(p) => ckp_scan(&mut rep, p, plan.seed)?,
        Params::RhoScan(p) => rho_scan(&mut rep, p),
        Params::Diffusion(p) => diffusion(&mut rep, model.expect("validated"), p)?,
        Params::Lyapunov(p) => lyapunov(&mut rep, model.expect("validated"), p, plan.seed)?,
        Params::Simulate(p) => simulate(&mut rep, model.expect("validated"), p, plan.seed)?,
        Params::Tensorize(p) => tensorize(&mut rep, model.expect("validated"), p, plan.seed)?,
    }
    Ok(rep)
}

fn metric(model: &Model, spec: &Option<MetricSpec>, n: usize) -> Result<MetricMatrix> {
    Ok(match spec {
        None => model.default_metric(n)?,
        Some(MetricSpec::Named(s)) if s == "trivial" => MetricMatrix::trivial(n),
        Some(MetricSpec::Named(s)) if s == "line" => match model.positions() {
            Some(x) => MetricMatrix::line(&x)?,
            None => MetricMatrix::line(&(0..n).map(|i| i as f64).collect::<Vec<_>>())?,
        },
        Some(MetricSpec::Named(s)) => bail!("unknown metric `{s}` (trivial, line or {{\"matrix\": ...}})"),
        Some(MetricSpec::Matrix { matrix }) => {
            if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                bail!("metric must be {n} x {n}");
            }
            MetricMatrix::new(DMatrix::from_fn(n, n, |i, j| matrix[i][j]))?
        }
    })
}

fn densities(rng: &mut ChaCha8Rng, mu: &[f64], n: usize) -> Vec<Density> {
    (0..n).map(|k| if k % 4 == 3 { random_sparse_density(rng, mu) } else { random_density(rng, mu) }).collect()
}

fn verify_tci(rep: &mut Report, model: &Model, p: &VerifyTciParams, seed: u64) -> Result<()> {
    let chain = model.chain()?;
    let d = metric(model, &p.metric, chain.n())?;
    let alpha = match &p.alpha {
        Some(a) => a.clone(),
        None => {
            let best = if p.cost == CostKind::W1 { best_w1i(&chain, &d) } else { best_w2i(&chain, &d) };
            if best.diverged || !best.c_dual.is_finite() {
                bail!("no finite constant for the default rate function; pass `alpha` explicitly");
            }
            rep.value("c", best.c_dual);
            RateFunction::quadratic(best.c_dual)?
        }
    };
    rep.put("alpha", &alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = chain.mu();
    let mut worst = f64::NEG_INFINITY;
    let mut rows = Vec::new();
    for (k, f) in densities(&mut rng, mu, p.n_densities).iter().enumerate() {
        let nu = f.measure(mu);
        let t = if p.cost == CostKind::W1 { w1(&d, &nu, mu)? } else { w2(&d, &nu, mu)? };
        let info = fisher_information(&chain, f);
        let excess = alpha.eval(t) - info;
        worst = worst.max(excess / info.max(1.0));
        rows.push(vec![k as f64, t, alpha.eval(t), info]);
    }
    rep.table = Some(Table { header: vec!["sample".into(), "cost".into(), "alpha_cost".into(), "information".into()], rows });
    rep.value("max_relative_excess", worst);
    rep.at_most("alpha(W) <= I", worst, p.tol);
    Ok(())
}

fn best_constant(rep: &mut Report, model: &Model, p: &BestConstantParams, seed: u64) -> Result<()> {
    let chain = model.chain()?;
    let d = metric(model, &p.metric, chain.n())?;
    let gap = spectral_gap(&chain)?;
    rep.value("c_P", gap.c_p);
    rep.value("spectral_gap", gap.gap);
    if let Some(e) = p.expect_c_p {
        rep.at_most("|c_P - expected|", (gap.c_p - e).abs(), p.tol);
    }
    let r1 = best_w1i(&chain, &d);
    rep.value("w1i_c_dual", r1.c_dual);
    rep.value("w1i_c_primal", r1.c_primal);
    rep.at_most("W1I primal - dual", r1.c_primal - r1.c_dual, 1e-3);
    if p.w2 {
        let r2 = best_w2i(&chain, &d);
        rep.value("w2i_c_dual", r2.c_dual);
        rep.value("w2i_c_primal", r2.c_primal);
        rep.put("w2i_diverged", r2.diverged);
        rep.table = Some(Table {
            header: vec!["epsilon".into(), "w2i_ratio".into()],
            rows: r2.probe.iter().map(|&(e, r)| vec![e, r]).collect(),
        });
        if !r2.diverged && r2.c_dual.is_finite() {
            // a finite W2I constant c forces Poincare with 4 c^2
            rep.at_most("c_P / (4 c_W2I^2)", gap.c_p / (4.0 * r2.c_dual * r2.c_dual), 1.0 + 1e-6);
        }
    }
    if p.lsi_samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dens = densities(&mut rng, chain.mu(), p.lsi_samples.max(100));
        rep.value("lsi_ratio_lower", lsi_ratio_scan(&chain, &dens)?);
    }
    Ok(())
}

fn ckp_scan(rep: &mut Report, p: &CkpScanParams, seed: u64) -> Result<()> {
    if p.max_states < 2 {
        bail!("max_states must be at least 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_h = 0.0f64;
    for k in 0..p.n_samples {
        let n = rng.random_range(2..=p.max_states);
        let mu = random_probability(&mut rng, n);
        let f = if k % 4 == 0 { random_sparse_density(&mut rng, &mu) } else { random_density(&mut rng, &mu) };
        let (tv2, fv) = ckp_gap(&mu, &f);
        worst = worst.max(tv2 - fv);
        let (_, h, var) = hellinger_check(&mu, &f);
        worst_h = worst_h.max((h - var).abs());
    }
    let mut rows = Vec::new();
    let mut worst_eq = 0.0f64;
    for &q in &p.extremal_p {
        let (mu, f) = ckp_extremal_two_point(q)?;
        let (tv2, fv) = ckp_gap(&mu, &f);
        worst_eq = worst_eq.max((tv2 - fv).abs());
        rows.push(vec![q, tv2, fv]);
    }
    rep.table = Some(Table { header: vec!["p".into(), "tv_squared".into(), "four_var_sqrt_f".into()], rows });
    rep.value("max_tv2_minus_4var", worst);
    rep.at_most("TV^2 - 4 Var(sqrt f)", worst, 1e-12);
    rep.at_most("extremal equality gap", worst_eq, 1e-10);
    rep.at_most("Hellinger bound - Var(sqrt f)", worst_h, 1e-12);
    Ok(())
}

fn rho_scan(rep: &mut Report, p: &RhoScanParams) {
    let grid: Vec<f64> = (1..=p.p_points).map(|k| 0.005 + 0.99 * (k - 1) as f64 / (p.p_points.max(2) - 1) as f64).collect();
    let mut rows = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_eq = 0.0f64;
    for &l in &p.lambdas {
        let (sup, arg) = rho_sup_scan(l, &grid);
        worst = worst.max(sup - rho(l));
        if l.abs() < 1.0 {
            worst_eq = worst_eq.max((jump_spectrum((1.0 - l) / 2.0, l).growth - l * l).abs());
        }
        rows.push(vec![l, rho(l), sup, arg]);
    }
    rep.table = Some(Table { header: vec!["lambda".into(), "rho".into(), "sup_growth".into(), "argmax_p".into()], rows });
    rep.at_most("sup growth - rho", worst, 1e-10);
    rep.at_most("growth on lambda = 1 - 2p minus lambda^2", worst_eq, 1e-10);
}

fn diffusion(rep: &mut Report, model: &Model, p: &DiffusionParams) -> Result<()> {
    let (spec, grid, gauss_m) = match &model.loaded {
        Loaded::Diffusion { spec, grid, .. } => (spec, grid, None),
        Loaded::GaussShift { spec, grid, m } => (spec, grid, Some(*m)),
        Loaded::Beta(ex) => (&ex.spec, &ex.grid, None),
        _ => bail!("diffusion experiments need a diffusion model"),
    };
    let norm = normalize(spec, grid)?;
    rep.value("log_z", norm.log_z);
    rep.value("truncation_mass", norm.truncation_mass);
    let chain = discretize(spec, grid)?;
    let c_p = spectral_gap(&chain)?.c_p;
    rep.value("c_P", c_p);
    let mut rows = Vec::new();
    for (i, &kind) in p.rhos.iter().enumerate() {
        let r = match kind {
            RhoKind::Identity => Rho::Identity,
            RhoKind::TanhWarp => Rho::TanhWarp(p.tanh_eps),
            RhoKind::Intrinsic => Rho::Intrinsic,
        };
        let c = c_rho(spec, &r, grid, CRhoVariant::Corrected)?;
        let lit = c_rho(spec, &r, grid, CRhoVariant::Literal)?;
        let ratio = lip_poisson_ratio(spec, grid, &r, &[])?;
        rep.at_most(&format!("Poisson ratio - C(rho) [{kind:?}]"), ratio - c, 1e-3);
        rep.at_most(&format!("c_P / C(rho) - 1 [{kind:?}]"), c_p / c - 1.0, p.c_p_margin);
        rows.push(vec![i as f64, c, lit, ratio]);
    }
    rep.table = Some(Table {
        header: vec!["rho_index".into(), "c_rho".into(), "c_rho_literal".into(), "poisson_ratio".into()],
        rows,
    });
    if let Some(cut) = p.cutoff {
        let ne = check_nonexplosion(spec, cut)?;
        rep.put("nonexplosion", &ne);
        rep.flag("scale integrals diverge at both ends", ne.verdict == NonExplosion::Divergent);
    }
    if let Some(m) = gauss_m {
        let f = gaussian_shift_density(grid.nodes(), chain.mu(), m)?;
        let info = fisher_information(&chain, &f);
        let dist = w1(&MetricMatrix::line(grid.nodes())?, &f.measure(chain.mu()), chain.mu())?;
        rep.value("fisher_information", info);
        rep.value("w1", dist);
        rep.at_most("|I / (m^2/4) - 1|", (info / (0.25 * m * m) - 1.0).abs(), 0.01);
        rep.at_most("|W1 / |m| - 1|", (dist / m.abs() - 1.0).abs(), 0.01);
    }
    Ok(())
}

fn lyapunov(rep: &mut Report, model: &Model, p: &LyapunovParams, seed: u64) -> Result<()> {
    let (chain, cert): (ReversibleChain, Option<LyapunovCertificate>) = match &model.loaded {
        Loaded::Mminf { chain, lambda_rate } => {
            let c = p.c.unwrap_or(std::f64::consts::LN_2);
            (chain.clone(), Some(mminf_lyapunov(chain, *lambda_rate, c)?))
        }
        Loaded::Beta(ex) => {
            rep.value("b_continuum", ex.b_continuum);
            (ex.chain.clone(), Some(ex.certificate.clone()))
        }
        _ => {
            let chain = model.chain()?;
            let u = p.u.clone().context("lyapunov on a plain chain needs `u`")?;
            let cert = match (&p.phi, p.b) {
                (Some(phi), Some(b)) => Some(certify_h(&chain, &u, phi, b, &[])?),
                _ => None,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dens = densities(&mut rng, chain.mu(), p.n_densities);
            let slack = drift_info_bound_check(&chain, &u, &dens)?;
            rep.at_least("I - <-LU/U, nu>", slack, -1e-10);
            (chain, cert)
        }
    };
    let Some(cert) = cert else { return Ok(()) };
    rep.value("b", cert.b);
    rep.value("max_violation", cert.max_violation);
    rep.put("excluded", &cert.excluded);
    rep.flag("condition (H) certified", cert.certified);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dens = densities(&mut rng, chain.mu(), p.n_densities);
    let slack = drift_info_bound_check(&chain, &cert.u, &dens)?;
    rep.at_least("I - <-LU/U, nu>", slack, -1e-10);
    if cert.certified {
        let mu_phi: f64 = chain.mu().iter().zip(&cert.phi).map(|(m, f)| m * f).sum();
        rep.at_least("b - mu(phi)", cert.b - mu_phi, -1e-10);
        let r = verify_thm51(&chain, &cert, &dens)?;
        rep.value("c_P", r.c_p);
        rep.value("phi_l2", r.phi_l2);
        rep.value("min_slack", r.min_slack);
        rep.table = Some(Table {
            header: vec!["sample".into(), "lhs1".into(), "bound_a".into(), "lhs2".into(), "bound_b".into()],
            rows: r.rows.iter().map(|w| vec![w.sample as f64, w.lhs1, w.bound_a, w.lhs2, w.bound_b]).collect(),
        });
        rep.at_least("weighted TV bound slack", r.min_slack, -1e-8);
    }
    Ok(())
}

fn simulate(rep: &mut Report, model: &Model, p: &SimulateParams, seed: u64) -> Result<()> {
    let sim_model = match &model.loaded {
        Loaded::Diffusion { ou: true, .. } => SimModel::Ou { dim: 1 },
        Loaded::Diffusion { spec, .. } => SimModel::Diffusion(spec.clone()),
        Loaded::Beta(ex) => SimModel::Diffusion(ex.spec.clone()),
        _ => SimModel::Chain(model.chain()?),
    };
    let alpha = match (&p.bound, &sim_model) {
        (BoundSpec::Hoeffding, SimModel::Chain(chain)) => {
            let Observable::State { values } = &p.observable else { bail!("Hoeffding bound needs a state observable") };
            let c_p = spectral_gap(chain)?.c_p;
            rep.value("c_P", c_p);
            RateFunction::quadratic(c_p.sqrt() * oscillation(values) / 2.0)?
        }
        (BoundSpec::Hoeffding, _) => bail!("Hoeffding bound needs a chain model"),
        (BoundSpec::LipschitzGauss { c, lip }, _) => RateFunction::quadratic(c * lip)?,
        (BoundSpec::Rate { alpha }, _) => alpha.clone(),
    };
    let mut config = EnsembleConfig::new(sim_model, p.t, p.n_paths, seed);
    config.initial = p.initial.clone();
    config.sde_step = p.sde_step;
    config.exact_ou = p.exact_ou;
    config.validate()?;
    let samples = sample_time_average(&config, &p.observable)?;
    let m = stationary_mean(&config.model, &p.observable)?;
    let norm = config.initial_l2_norm();
    rep.value("stationary_mean", m);
    rep.value("initial_l2_norm", norm);
    let u_label = serde_json::to_string(&p.observable)?;
    let mut rows = Vec::new();
    for &r in &p.radii {
        if !(r > 0.0) {
            bail!("radii must be positive");
        }
        let hits = samples.iter().filter(|&&s| s >= m + r).count();
        let bound = norm * (-p.t * alpha.eval(r)).exp();
        let est = deviation_estimate(hits, samples.len(), bound, !norm.is_finite());
        rep.flag(&format!("r = {r}: not bound_violated ({})", est.verdict.as_str()), est.verdict != Verdict::BoundViolated);
        rows.push(vec![r, est.p_hat, est.ci_low, est.ci_high, est.bound_value]);
        rep.ledger.push(LedgerRow::new(&model.label, &u_label, p.t, r, seed, &est));
    }
    rep.table = Some(Table {
        header: vec!["r".into(), "p_hat".into(), "ci_low".into(), "ci_high".into(), "bound".into()],
        rows,
    });
    if p.dump_samples {
        rep.samples = Some(vec![samples]);
    }
    Ok(())
}

fn tensorize(rep: &mut Report, model: &Model, p: &TensorizeParams, seed: u64) -> Result<()> {
    let Loaded::Product { factors } = &model.loaded else { bail!("tensorize needs a product model") };
    let product = model.chain()?;
    let refs: Vec<&ReversibleChain> = factors.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let costs: Vec<CostMatrix> =
        factors.iter().map(|c| CostMatrix::from_metric(&transinfo::sample::random_metric(&mut rng, c.n()))).collect();
    let mus: Vec<&[f64]> = factors.iter().map(|c| c.mu()).collect();
    let mut worst_add = 0.0f64;
    let mut worst_sub = f64::NEG_INFINITY;
    for f in densities(&mut rng, product.mu(), p.n_densities) {
        let (l, r) = transinfo::transport::fisher_additivity_check(&refs, &f)?;
        worst_add = worst_add.max((l - r).abs());
        let (l, r) = tensor_subadditivity_check(&costs, &mus, &f)?;
        worst_sub = worst_sub.max(l - r);
    }
    let alpha = RateFunction::quadratic(p.alpha_c)?;
    let mut worst_inf = 0.0f64;
    let mut rows = Vec::new();
    for k in 0..p.r_points {
        let r = 0.05 * k as f64;
        let v = alpha_infconv(&[alpha.clone(), alpha.clone()], r);
        worst_inf = worst_inf.max((v - 2.0 * alpha.eval(r / 2.0)).abs());
        rows.push(vec![r, v]);
    }
    rep.table = Some(Table { header: vec!["r".into(), "infconv".into()], rows });
    rep.at_most("Fisher additivity error", worst_add, 1e-8);
    rep.at_most("transport subadditivity excess", worst_sub, 1e-9);
    rep.at_most("inf-convolution error", worst_inf, 1e-10);
    Ok(())
}

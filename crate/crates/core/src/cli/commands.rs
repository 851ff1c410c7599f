use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use crate::asymptotics::{asym_constants, asym_mse_beta, h_opt};
use crate::criteria::{CriterionValue, OracleTruth};
use crate::error::Error;
use crate::estimators::{imputation_tau, Dataset, LogisticPropensity};
use crate::methods::{MethodRegistry, NoiseSource, SelectionContext, Surface};
use crate::selector::Selection;
use crate::simulation::{generate, run_campaign, Campaign, CampaignConfig, DesignSpec};

use super::config::{CommandKind, RunConfig};
use super::input::read_dataset;
use super::output::{io_error, num, opt, sink, write_csv};
use super::{CliError, CliResult};

pub fn execute(cfg: &RunConfig) -> CliResult<()> {
    match cfg.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(cfg))
        }
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> CliResult<()> {
    match cfg.command {
        CommandKind::Fit => fit(cfg),
        CommandKind::Criteria => criteria(cfg),
        CommandKind::Simulate => simulate(cfg),
        CommandKind::Asymptotics => asymptotics(cfg),
    }
}

fn design(cfg: &RunConfig) -> CliResult<DesignSpec> {
    let id = cfg.design.ok_or_else(|| CliError::Config("--design is required".into()))?;
    Ok(DesignSpec::new(id)?.damped(cfg.damp_propensity))
}

/// Observed data, or a sample from a design together with its truth.
struct Source {
    data: Dataset,
    truth: Option<OracleTruth>,
}

impl Source {
    fn load(cfg: &RunConfig) -> CliResult<Self> {
        if let Some(path) = &cfg.input {
            return Ok(Source { data: read_dataset(path)?, truth: None });
        }
        let model = design(cfg)?;
        let sigma2 = model.design_sigma2();
        let data = generate(&model, cfg.n, sigma2, cfg.seed)?;
        Ok(Source { data, truth: Some(model.truth(sigma2)) })
    }

    fn context(&self, cfg: &RunConfig, needs_propensity: bool) -> CliResult<SelectionContext<'_>> {
        let grid = cfg.grid_for(self.data.len())?;
        let ctx = SelectionContext::new(&self.data, cfg.kernel, grid.clone(), grid);
        if let Some(truth) = &self.truth {
            return Ok(ctx.with_truth(truth));
        }
        let ctx = ctx.with_noise(if cfg.pooled_variance { NoiseSource::Pooled } else { NoiseSource::Estimated });
        if !needs_propensity {
            return Ok(ctx);
        }
        let model = LogisticPropensity::fit(self.data.x(), self.data.z())?;
        log::info!("logistic propensity: intercept {} slope {}", model.intercept, model.slope);
        Ok(ctx.with_propensity(Arc::new(move |x| model.predict(x))))
    }
}

fn fit(cfg: &RunConfig) -> CliResult<()> {
    let registry = MethodRegistry::builtin();
    let methods = registry.resolve(&cfg.methods)?;
    let source = Source::load(cfg)?;
    let ctx = source.context(cfg, methods.iter().any(|m| m.name() == "inr"))?;
    let mut rows = Vec::with_capacity(methods.len());
    for m in &methods {
        let out = m.select(&ctx)?;
        let est = imputation_tau(&source.data, cfg.kernel, out.h1, out.h0)?;
        rows.push(vec![
            m.label().to_string(),
            num(out.h1.value()),
            num(out.h0.value()),
            num(est.tau_hat),
            num(ctx.sigma2(1)?),
            num(ctx.sigma2(0)?),
        ]);
    }
    write_csv(sink(cfg.out.as_deref())?, &["method", "h1", "h0", "tau_hat", "sigma2_hat_1", "sigma2_hat_0"], rows)
}

fn value_fields(v: Option<&CriterionValue>) -> [String; 4] {
    match v {
        Some(v) => [opt(v.variance), opt(v.bias_sq), num(v.total), "ok".into()],
        None => [String::new(), String::new(), String::new(), "infeasible".into()],
    }
}

fn group_rows<'a>(label: &str, group: u8, sel: &'a Selection) -> impl Iterator<Item = Vec<String>> + 'a {
    let label = label.to_string();
    sel.surface.iter().enumerate().map(move |(i, v)| {
        let mut row = vec![label.clone(), group.to_string(), num(sel.grid.values()[i])];
        row.extend(value_fields(v.as_ref()));
        row.push(u8::from(i == sel.argmin).to_string());
        row
    })
}

fn criteria(cfg: &RunConfig) -> CliResult<()> {
    let registry = MethodRegistry::builtin();
    let method = registry.resolve(&cfg.methods)?[0];
    let source = Source::load(cfg)?;
    let ctx = source.context(cfg, method.name() == "inr")?;
    let outcome = method.select(&ctx)?;
    let out = sink(cfg.out.as_deref())?;
    let label = method.label();
    match &outcome.surface {
        Surface::PerGroup { treated, control } => {
            let mut rows: Vec<Vec<String>> = Vec::new();
            for g in cfg.group.map_or(vec![1, 0], |g| vec![g]) {
                let sel = if g == 1 { treated } else { control };
                rows.extend(group_rows(label, g, sel));
            }
            write_csv(out, &["criterion", "group", "h", "variance", "bias_sq", "total", "status", "selected"], rows)
        }
        Surface::Joint(sel) => {
            let (a1, a0) = sel.argmin;
            let n0 = sel.grid0.len();
            let rows = sel.surface.iter().enumerate().map(|(k, v)| {
                let (i1, i0) = (k / n0, k % n0);
                let mut row = vec![label.to_string(), num(sel.grid1.values()[i1]), num(sel.grid0.values()[i0])];
                row.extend(value_fields(v.as_ref()));
                row.push(u8::from((i1, i0) == (a1, a0)).to_string());
                row
            });
            write_csv(out, &["criterion", "h1", "h0", "variance", "bias_sq", "total", "status", "selected"], rows)
        }
    }
}

fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let model = design(cfg)?;
    let mut config = CampaignConfig::new(model, cfg.n, cfg.replicates, cfg.seed, cfg.methods.clone());
    config.kernel = cfg.kernel;
    config.grid = Some(cfg.grid_for(cfg.n)?);
    let campaign = run_campaign(&config, &MethodRegistry::builtin())?;

    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    write_replicates(&campaign, &dir)?;
    write_summary(&campaign, &dir)?;
    print_table(cfg, &campaign).map_err(|e| CliError::Input(format!("stdout: {e}")))
}

fn write_replicates(c: &Campaign, dir: &std::path::Path) -> CliResult<()> {
    let path = dir.join("replicates.csv");
    let rows = c.records.iter().map(|r| {
        vec![
            r.replicate.to_string(),
            r.seed.to_string(),
            r.redraws.to_string(),
            r.method.to_string(),
            num(r.h1),
            num(r.h0),
            num(r.tau_hat),
            num(r.tau_ols),
            num(r.tau_true),
            num(r.tau_cv),
        ]
    });
    write_csv(
        sink(Some(&path))?,
        &["replicate", "seed", "redraws", "method", "h1", "h0", "tau_hat", "tau_ols", "tau_true", "tau_cv"],
        rows,
    )
}

fn write_summary(c: &Campaign, dir: &std::path::Path) -> CliResult<()> {
    let path = dir.join("summary.csv");
    let best = c.table.comparison.best;
    let rows = c.table.rows.iter().enumerate().map(|(i, r)| {
        vec![
            r.method.to_string(),
            r.replicates.to_string(),
            num(r.mse),
            num(r.bias),
            num(r.variance),
            num(r.mse_raw),
            num(r.variance_raw),
            opt(r.correlation),
            num(r.mean_h1),
            num(r.mean_h0),
            if i == best { opt(c.table.comparison.p_value) } else { String::new() },
            r.stars.to_string(),
        ]
    });
    write_csv(
        sink(Some(&path))?,
        &[
            "method", "replicates", "mse", "bias", "variance", "mse_raw", "variance_raw", "correlation", "mean_h1",
            "mean_h0", "p_value", "stars",
        ],
        rows,
    )
}

fn print_table(cfg: &RunConfig, c: &Campaign) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "design {} n={} replicates={} tau={:.4} sigma2={:.4} redraws={}",
        cfg.design.unwrap_or_default(),
        cfg.n,
        cfg.replicates,
        c.tau_true,
        c.sigma2,
        c.total_redraws
    )?;
    writeln!(out, "{:<8} {:>10} {:>10} {:>10} {:>8} {:>8} {:>6}", "method", "mse", "bias", "variance", "h1", "h0", "")?;
    for r in &c.table.rows {
        writeln!(
            out,
            "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>8.4} {:>8.4} {:>6}",
            r.method, r.mse, r.bias, r.variance, r.mean_h1, r.mean_h0, r.stars
        )?;
    }
    Ok(())
}

fn asymptotics(cfg: &RunConfig) -> CliResult<()> {
    let model = design(cfg)?;
    let sigma2 = model.design_sigma2();
    let n = cfg.n as f64;
    let mut rows = Vec::new();
    for j in [1u8, 0] {
        let c = asym_constants(&model.asymptotic_inputs(j, sigma2), cfg.kernel, j)?;
        let (h, mse, status) = match h_opt(c.b1, c.v2, n) {
            Ok(h) => (Some(h), Some(asym_mse_beta(&c, h, n)), "ok".to_string()),
            Err(Error::BiasConstantVanishes) => (None, None, "no interior optimum".to_string()),
            Err(e) => return Err(e.into()),
        };
        rows.push(vec![
            model.id.to_string(),
            j.to_string(),
            cfg.n.to_string(),
            cfg.kernel.name().to_string(),
            num(sigma2),
            num(c.b1),
            num(c.v1),
            num(c.v2),
            num(c.v3),
            opt(h),
            opt(mse),
            status,
        ]);
    }
    write_csv(
        sink(cfg.out.as_deref())?,
        &["design", "group", "n", "kernel", "sigma2", "b1", "v1", "v2", "v3", "h_opt", "asym_mse", "status"],
        rows,
    )
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use sampnum_core::concentration::{certify_nodes, monte_carlo_certify, smallest_n};
use sampnum_core::density::SamplingDensity;
use sampnum_core::io;
use sampnum_core::leastsq::{build_matrix, RecoveryOperator};
use sampnum_core::pipeline::{fit_rate, run_recovery_experiment, RecoveryMethod};
use sampnum_core::spectrum::enumerate_spectrum;
use sampnum_core::weaver::{
    barrier_greedy_subsample, brute_force_partition, constant_budget, gamma_product,
    recursive_halving, remark_constant_chain, Criterion, FiniteFrame, SubsampleMethod,
    SubsampleResult,
};

use crate::{
    CertifyArgs, ConstantsArgs, Method, RateArgs, RecoverArgs, SampleArgs, SpectrumArgs,
    SubsampleArgs,
};

/// Malformed input that clap cannot see, reported with the usage status.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A subsample that was computed but does not meet its criterion.
#[derive(Debug, thiserror::Error)]
#[error("subsample does not meet its certification criterion")]
pub struct Uncertified;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn emit_json(path: Option<&PathBuf>, value: &impl Serialize) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_sigma_file(path: &Path) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split([',', ' ', '\t']))
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("{}: {t:?} is not a number", path.display())))
        })
        .collect()
}

fn node_count(m: usize, n: Option<usize>) -> Result<usize> {
    Ok(match n {
        Some(n) => n,
        None => smallest_n(m, 40.0)?,
    })
}

pub fn spectrum(a: &SpectrumArgs) -> Result<()> {
    let model = a.model.build()?;
    let basis = enumerate_spectrum(&model, a.count)?;
    let w = sink(a.out.as_ref())?;
    io::write_spectrum_csv(w, &basis)?;
    Ok(())
}

pub fn sample(a: &SampleArgs) -> Result<()> {
    let model = a.model.build()?;
    let basis = enumerate_spectrum(&model, a.m.saturating_sub(1).max(1))?;
    let density = SamplingDensity::new(&basis, a.m)?;
    let n = node_count(a.m, a.n)?;
    let nodes = density.draw_nodes(n, a.seed)?;
    io::write_nodes_csv(sink(a.out.as_ref())?, &nodes)?;
    if let Some(path) = &a.matrix_out {
        let matrix = build_matrix(&basis, &nodes, a.m, !a.unweighted)?;
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        io::write_frame_csv(BufWriter::new(file), &matrix.entries)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CertifyReport {
    m: usize,
    n: usize,
    r: f64,
    trials: usize,
    seed: u64,
    spectral_n: f64,
    condition_ok: bool,
    failures: usize,
    failure_rate: f64,
    /// `2 / n^(r-1)`, the failure probability the condition guarantees.
    failure_bound: f64,
    eigen_min: f64,
    eigen_max: f64,
}

pub fn certify(a: &CertifyArgs) -> Result<()> {
    let model = a.model.build()?;
    let basis = enumerate_spectrum(&model, a.m.saturating_sub(1).max(1))?;
    let density = SamplingDensity::new(&basis, a.m)?;
    let n = node_count(a.m, a.n)?;
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let certs = if a.trials == 1 {
        let nodes = density.draw_nodes_stream(n, a.seed, 0)?;
        vec![certify_nodes(&basis, &nodes, a.m, a.r)?]
    } else {
        monte_carlo_certify(&density, n, a.r, a.trials, a.seed)?
    };
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_writer(sink(Some(path))?);
        w.write_record(["trial", "eigen_min", "eigen_max", "passed"])?;
        for (t, c) in certs.iter().enumerate() {
            w.write_record([
                t.to_string(),
                c.eigen_min.to_string(),
                c.eigen_max.to_string(),
                c.passed.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let failures = certs.iter().filter(|c| !c.passed).count();
    let report = CertifyReport {
        m: a.m,
        n,
        r: a.r,
        trials: a.trials,
        seed: a.seed,
        spectral_n: basis.spectral_function_n(a.m)?,
        condition_ok: certs[0].condition_ok,
        failures,
        failure_rate: failures as f64 / a.trials as f64,
        failure_bound: 2.0 / (n as f64).powf(a.r - 1.0),
        eigen_min: certs
            .iter()
            .map(|c| c.eigen_min)
            .fold(f64::INFINITY, f64::min),
        eigen_max: certs.iter().map(|c| c.eigen_max).fold(0.0, f64::max),
    };
    emit_json(None, &report)
}

#[derive(Serialize)]
struct SubsampleReport<'a> {
    method: Method,
    n: usize,
    m: usize,
    #[serde(rename = "J")]
    indices: &'a [usize],
    size: usize,
    certification: Certification,
    #[serde(skip_serializing_if = "Option::is_none")]
    partition: Option<PartitionBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    halving_steps: Option<usize>,
}

#[derive(Serialize)]
struct Certification {
    certified: bool,
    lambda_min: f64,
    lambda_max: f64,
    criterion: Criterion,
}

#[derive(Serialize)]
struct PartitionBlock {
    first: Vec<usize>,
    second: Vec<usize>,
    first_bounds: (f64, f64),
    second_bounds: (f64, f64),
    lower: f64,
    upper: f64,
    feasible: bool,
}

pub fn subsample(a: &SubsampleArgs) -> Result<()> {
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let matrix = io::read_frame_csv(file)?;
    let frame = FiniteFrame::from_matrix(&matrix)?;
    let (n, m) = (frame.len(), frame.dim());
    let mut partition = None;
    let mut halving_steps = None;
    let result: SubsampleResult = match a.method {
        Method::Brute => {
            let p = brute_force_partition(&frame)?;
            let result = SubsampleResult::certify(
                &frame,
                p.smaller_class().to_vec(),
                SubsampleMethod::BruteForcePartition,
                Criterion::Window {
                    lower: p.bounds.lower,
                    upper: p.bounds.upper,
                },
            );
            partition = Some(PartitionBlock {
                first: p.first.clone(),
                second: p.second.clone(),
                first_bounds: p.first_bounds,
                second_bounds: p.second_bounds,
                lower: p.bounds.lower,
                upper: p.bounds.upper,
                feasible: p.feasible,
            });
            result
        }
        Method::Halving => {
            let (lo, hi) = frame.frame_bounds();
            let k1 =
                a.k1.unwrap_or_else(|| frame.norm_bound() * n as f64 / m as f64);
            let run =
                recursive_halving(&frame, k1, a.k2.unwrap_or(lo), a.k3.unwrap_or(hi), a.seed)?;
            halving_steps = Some(run.steps.len());
            run.result
        }
        Method::Greedy => {
            if a.k1.is_some() || a.k2.is_some() || a.k3.is_some() {
                // The size budget still applies when given explicitly.
                let (lo, hi) = frame.frame_bounds();
                let k1 = a.k1.unwrap_or(frame.norm_bound() * n as f64 / m as f64);
                constant_budget(
                    k1,
                    a.k2.unwrap_or(lo),
                    a.k3.unwrap_or(hi),
                    n as f64 / m as f64,
                )?;
            }
            let target = a.target.unwrap_or(4 * m).min(n);
            barrier_greedy_subsample(&frame, target)?
        }
    };
    let report = SubsampleReport {
        method: a.method,
        n,
        m,
        indices: &result.indices,
        size: result.len(),
        certification: Certification {
            certified: result.certified,
            lambda_min: result.achieved_bounds.0,
            lambda_max: result.achieved_bounds.1,
            criterion: result.criterion,
        },
        partition,
        halving_steps,
    };
    emit_json(a.out.as_ref(), &report)?;
    if !result.certified {
        return Err(Uncertified.into());
    }
    Ok(())
}

/// Parses `k:re[:im]` terms separated by commas.
fn parse_function(spec: &str) -> Result<Vec<(usize, Complex64)>> {
    let mut terms = Vec::new();
    for term in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = term.split(':').collect();
        let bad = || {
            usage(format!(
                "bad function term {term:?}; expected k:re or k:re:im"
            ))
        };
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let k: usize = parts[0].parse().map_err(|_| bad())?;
        let re: f64 = parts[1].parse().map_err(|_| bad())?;
        let im: f64 = match parts.get(2) {
            Some(p) => p.parse().map_err(|_| bad())?,
            None => 0.0,
        };
        if k == 0 {
            return Err(usage("eigenfunction indices start at 1"));
        }
        terms.push((k, Complex64::new(re, im)));
    }
    if terms.is_empty() {
        return Err(usage("empty --function"));
    }
    Ok(terms)
}

#[derive(Serialize)]
struct RecoverSummary {
    n: usize,
    residual: f64,
    coefficient_error: f64,
    tau_min: f64,
    tau_max: f64,
}

pub fn recover(a: &RecoverArgs) -> Result<()> {
    let terms = parse_function(&a.function)?;
    let model = a.model.build()?;
    let highest = terms.iter().map(|t| t.0).max().unwrap();
    let basis = enumerate_spectrum(&model, highest.max(a.m.saturating_sub(1)).max(1))?;
    if basis.count() < highest {
        return Err(usage(format!(
            "the model has only {} eigenfunctions, --function uses {highest}",
            basis.count()
        )));
    }
    let density = SamplingDensity::new(&basis, a.m)?;
    let n = node_count(a.m, a.n)?;
    let nodes = density.draw_nodes(n, a.seed)?;
    let samples: Vec<Complex64> = (0..n)
        .map(|i| {
            terms
                .iter()
                .map(|&(k, c)| c * basis.eval(k - 1, nodes.node(i)))
                .sum()
        })
        .collect();
    let matrix = build_matrix(&basis, &nodes, a.m, true)?;
    let op = RecoveryOperator::new(&matrix)?;
    let coef = op.apply(&samples)?;
    let residual = op.residual(&matrix, &samples, &coef);

    let mut target = vec![Complex64::new(0.0, 0.0); coef.len()];
    for &(k, c) in &terms {
        if k < a.m {
            target[k - 1] += c;
        }
    }
    let mut w = csv::Writer::from_writer(sink(a.out.as_ref())?);
    w.write_record(["k", "label", "re", "im", "target_re", "target_im"])?;
    let mut err2 = 0.0;
    for (j, c) in coef.iter().enumerate() {
        err2 += (c - target[j]).norm_sqr();
        w.write_record([
            (j + 1).to_string(),
            basis.labels[j].to_string(),
            c.re.to_string(),
            c.im.to_string(),
            target[j].re.to_string(),
            target[j].im.to_string(),
        ])?;
    }
    w.flush()?;
    let summary = RecoverSummary {
        n,
        residual,
        coefficient_error: err2.sqrt(),
        tau_min: op.tau().0,
        tau_max: op.tau().1,
    };
    eprintln!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

pub fn rate(a: &RateArgs) -> Result<()> {
    let model = a.model.build()?;
    let method: RecoveryMethod = a.method.parse()?;
    if method == RecoveryMethod::Given {
        return Err(usage(
            "rate draws its own nodes; use --method random or subsample",
        ));
    }
    if a.m_grid.is_empty() || a.trials == 0 {
        return Err(usage("--m-grid and --trials must be non-empty"));
    }
    let jobs: Vec<(usize, u64)> = a
        .m_grid
        .iter()
        .flat_map(|&m| (0..a.trials).map(move |t| (m, a.seed.wrapping_add(t))))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(m, seed)| run_recovery_experiment(&model, m, method, a.r, seed))
        .collect::<sampnum_core::Result<Vec<_>>>()?;
    io::write_reports_csv(sink(a.out.as_ref())?, &reports)?;

    let (s, d) = match &a.model.model {
        crate::Family::Torus => (a.model.s, a.model.d),
        crate::Family::Legendre => (0.0, 1),
    };
    match fit_rate(&reports, s, d) {
        Ok(fit) => eprintln!(
            "{}",
            serde_json::to_string(&serde_json::json!({
                "slope": fit.slope,
                "intercept": fit.intercept,
                "rms": fit.rms,
                "log_power_fit": fit.log_power_fit,
                "sigma_log_power": fit.sigma_log_power,
                "bound_log_power": fit.bound_log_power,
            }))?
        ),
        Err(e) => eprintln!("no rate fit: {e}"),
    }
    Ok(())
}

pub fn constants(a: &ConstantsArgs) -> Result<()> {
    let chain = remark_constant_chain()?;
    let gamma = gamma_product(1e-10)?;
    if a.json {
        return emit_json(
            None,
            &serde_json::json!({ "chain": chain, "gamma_product": gamma }),
        );
    }
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{:<24} {:>22}  {:<28} ok",
        "constant", "value", "required"
    )?;
    for e in &chain.entries {
        let range = if e.lower == e.upper {
            format!("= {}", e.lower)
        } else if e.upper.is_infinite() {
            format!(">= {}", e.lower)
        } else {
            format!("[{}, {}]", e.lower, e.upper)
        };
        writeln!(
            out,
            "{:<24} {:>22}  {:<28} {}",
            e.name,
            e.value,
            range,
            if e.holds() { "yes" } else { "NO" }
        )?;
    }
    writeln!(
        out,
        "gamma product: {} (upper {}, remainder {:.3e}, {} factors)",
        gamma.value,
        gamma.upper,
        gamma.remainder,
        gamma.partials.len()
    )?;
    writeln!(
        out,
        "C = {:.4e} <= 1.5e6, c = {:.4e} >= 3.8e-5, threshold m >= {}",
        chain.big_c, chain.small_c, chain.threshold
    )?;
    if !chain.all_hold() {
        bail!("constant chain check failed");
    }
    Ok(())
}

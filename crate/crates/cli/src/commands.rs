//! Subcommand implementations. Each writes its artifacts to the output
//! directory and returns a verification report.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mzw_core::hilbert::{make_skew_generator, Generator, GeneratorSpec};
use mzw_core::mori::MoriModel;
use mzw_core::par::Exec;
use mzw_core::phase::{
    expectation, oscillator_mori_kernel, oscillator_trajectories, unboundedness_ratio, PhaseObservable,
    QuadratureGrid,
};
use mzw_core::series::{ScalarSeries, TimeGrid};
use mzw_core::sim::{
    acf_band_check, acf_two_sample_test, coarse_grained_ensemble, derive_seed, empirical_acf, realization_rng,
    EmpiricalAcf, Method,
};
use mzw_core::spectral::{
    certifiable_power, is_slow, memory_coupling_norm, orthogonal_equals_full_on_fast, projected_generator_bound,
    slow_subspace,
};
use mzw_core::volterra::{acf_from_kernel, kernel_from_acf, AcfInput, STATIONARITY_TOL};
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::json;

use crate::args::{Cli, Command, Demo, GeneratorArgs, MethodArg};
use crate::io::{self, check_grid_flags, read_series, write, write_ensemble, write_series, Format};
use crate::report::{ReportBuilder, Tolerances, VerificationReport};

const MZLAB_DT: f64 = 1e-3;
const MZLAB_STEPS: usize = 5000;
const OSC_DT: f64 = 0.05;
const OSC_STEPS: usize = 100;

/// Relative round-trip tolerance per `dt^2` for `kernel` and `acf`.
const ROUNDTRIP_PER_DT2: f64 = 100.0;

/// Tag mixed into the master seed for a random observable.
const Z_SEED_TAG: u64 = 0x7a;

/// Runs a parsed command line and writes `report.json` next to its artifacts.
pub fn run(cli: &Cli) -> Result<VerificationReport> {
    let g = &cli.global;
    let tolerances = Tolerances { overrides: g.tol.iter().cloned().collect(), strict: g.strict };
    let ctx = Ctx { out: &g.out, format: g.format, seed: g.seed, dt: g.dt, steps: g.steps, tolerances: &tolerances };
    let (name, mut b) = match &cli.command {
        Command::Kernel { acf } => ("kernel", cmd_kernel(&ctx, acf)?),
        Command::Acf { kernel, c0 } => ("acf", cmd_acf(&ctx, kernel, *c0)?),
        Command::Simulate { acf, method, samples } => ("simulate", cmd_simulate(&ctx, acf, *method, *samples)?),
        Command::Mzlab { generator, z } => ("mzlab", cmd_mzlab(&ctx, generator, z)?),
        Command::Split { generator, omega } => ("split", cmd_split(&ctx, generator, *omega)?),
        Command::Oscillator { demo, n_max, samples, nodes } => {
            ("oscillator", cmd_oscillator(&ctx, *demo, *n_max, *samples, *nodes)?)
        }
        Command::Ingest { input, columns } => ("ingest", cmd_ingest(&ctx, input, columns)?),
    };
    b.detail("artifacts_format", g.format);
    let config = json!({
        "command": name,
        "arguments": format!("{:?}", cli.command),
        "seed": g.seed,
        "dt": g.dt,
        "steps": g.steps,
        "tolerances": tolerances,
        "format": g.format,
    });
    let report = b.finish(config);
    write(&g.out, "report.json", serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(report)
}

struct Ctx<'a> {
    out: &'a Path,
    format: Format,
    seed: u64,
    dt: Option<f64>,
    steps: Option<usize>,
    tolerances: &'a Tolerances,
}

impl<'a> Ctx<'a> {
    fn builder(&self, name: &str) -> ReportBuilder<'a> {
        ReportBuilder::new(name, self.tolerances)
    }

    fn grid_or(&self, dt: f64, steps: usize) -> Result<TimeGrid> {
        Ok(TimeGrid::new(self.dt.unwrap_or(dt), self.steps.unwrap_or(steps))?)
    }

    fn read_series_checked(&self, path: &Path) -> Result<ScalarSeries> {
        let s = read_series(path)?;
        check_grid_flags(s.grid(), self.dt, self.steps, &path.display().to_string())?;
        Ok(s)
    }
}

fn rel_max_dev(a: &ScalarSeries, b: &ScalarSeries) -> Result<f64> {
    let scale = b.max_abs();
    let dev = a.max_abs_diff(b)?;
    Ok(if scale > 0.0 { dev / scale } else { dev })
}

fn cmd_kernel<'a>(ctx: &Ctx<'a>, path: &Path) -> Result<ReportBuilder<'a>> {
    let c = ctx.read_series_checked(path)?;
    let extraction = kernel_from_acf(&AcfInput::Sampled(c.clone())).with_context(|| format!("{}", path.display()))?;
    let kernel = extraction.kernel;
    let dt = c.grid().dt();
    let back = acf_from_kernel(&kernel, c[0])?;
    write_series(ctx.out, "kernel", &kernel, ctx.format)?;
    let mut b = ctx.builder("kernel");
    let dc0 = mzw_core::volterra::differentiate_series(&c, 1)?[0];
    b.check("acf_stationarity", "stationary autocorrelation has C'(0) = 0", dc0.abs() * dt / c[0].abs(), STATIONARITY_TOL);
    b.check("roundtrip", "kernel and autocorrelation determine each other", rel_max_dev(&back, &c)?, ROUNDTRIP_PER_DT2 * dt * dt);
    b.detail("warnings", &extraction.warnings);
    b.detail("kernel_at_zero", kernel[0]);
    b.detail("roundtrip_max_deviation", back.max_abs_diff(&c)?);
    Ok(b)
}

fn cmd_acf<'a>(ctx: &Ctx<'a>, path: &Path, c0: f64) -> Result<ReportBuilder<'a>> {
    if !(c0.is_finite() && c0 != 0.0) {
        bail!("--c0 must be finite and nonzero, got {c0}");
    }
    let k = ctx.read_series_checked(path)?;
    let c = acf_from_kernel(&k, c0)?;
    let dt = k.grid().dt();
    write_series(ctx.out, "acf", &c, ctx.format)?;
    let back = kernel_from_acf(&AcfInput::Sampled(c.clone()))?.kernel;
    let mut b = ctx.builder("acf");
    b.check("roundtrip", "kernel and autocorrelation determine each other", rel_max_dev(&back, &k)?, ROUNDTRIP_PER_DT2 * dt * dt);
    b.detail("roundtrip_max_deviation", back.max_abs_diff(&k)?);
    Ok(b)
}

fn cmd_simulate<'a>(ctx: &Ctx<'a>, path: &Path, method: MethodArg, samples: usize) -> Result<ReportBuilder<'a>> {
    let c = ctx.read_series_checked(path)?;
    let methods = match method {
        MethodArg::Gle => vec![Method::Gle],
        MethodArg::Direct => vec![Method::Direct],
        MethodArg::Spectral => vec![Method::Spectral],
        MethodArg::All => vec![Method::Gle, Method::Direct, Method::Spectral],
    };
    let dt = c.grid().dt();
    let mut b = ctx.builder("simulate");
    let mut estimates: Vec<(Method, EmpiricalAcf)> = Vec::new();
    for m in methods {
        let seed = derive_seed(ctx.seed, m.seed_tag());
        let ens = coarse_grained_ensemble(&c, samples, seed, m)?;
        let est = empirical_acf(&ens)?;
        write_ensemble(ctx.out, &format!("ensemble_{}", m.name()), &ens, ctx.format)?;
        write(ctx.out, &format!("acf_{}.csv", m.name()), io::acf_csv(&est).as_bytes())?;
        let band = acf_band_check(&est, &c, 3.0, 0.0)?;
        b.check(&format!("acf_band_{}", m.name()), "sampled paths reproduce the prescribed autocorrelation", band.max_score, 3.0);
        b.detail(&format!("seed_{}", m.name()), seed);
        estimates.push((m, est));
    }
    let find = |m: Method| estimates.iter().find(|e| e.0 == m).map(|e| &e.1);
    if let (Some(g), Some(d)) = (find(Method::Gle), find(Method::Direct)) {
        let slack = 5.0 * dt * dt;
        let worst = (0..c.len())
            .map(|k| {
                let se = (g.standard_error[k].powi(2) + d.standard_error[k].powi(2)).sqrt();
                let excess = ((g.acf[k] - d.acf[k]).abs() - slack).max(0.0);
                if excess == 0.0 {
                    0.0
                } else {
                    excess / se
                }
            })
            .fold(0.0, f64::max);
        b.check("equivalence_gle_direct", "coarse-grained GLE and direct sampling give the same law", worst, 3.0);
    }
    if let (Some(s), Some(d)) = (find(Method::Spectral), find(Method::Direct)) {
        let test = acf_two_sample_test(s, d, 0.01)?;
        b.check("two_sample_spectral_direct", "independent Fourier coefficients give the same law", test.max_z, test.critical);
    }
    b.detail("samples", samples);
    Ok(b)
}

fn load_generator(ctx: &Ctx, args: &GeneratorArgs) -> Result<Generator> {
    let src = &args.source;
    let g = if let Some(path) = &src.generator {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Generator::from_json(&text).with_context(|| format!("{}", path.display()))?
    } else if let Some(n) = src.random {
        make_skew_generator(&GeneratorSpec::Dense { dim: n, seed: ctx.seed })?
    } else if let Some(f) = &src.frequencies {
        make_skew_generator(&GeneratorSpec::Frequencies { frequencies: f.clone(), dim: args.dim, seed: ctx.seed })?
    } else {
        bail!("one of --generator, --random, --frequencies is required");
    };
    if src.generator.is_none() {
        write(ctx.out, "generator.json", g.to_json()?.as_bytes())?;
    }
    Ok(g)
}

/// `eK`, `random`, or comma-separated components.
pub fn parse_observable(spec: &str, dim: usize, seed: u64) -> Result<DVector<f64>> {
    let spec = spec.trim();
    if spec == "random" {
        let mut rng = realization_rng(derive_seed(seed, Z_SEED_TAG), 0);
        let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        return Ok(&v / v.norm());
    }
    if let Some(k) = spec.strip_prefix('e').and_then(|k| k.parse::<usize>().ok()) {
        if k == 0 || k > dim {
            bail!("observable {spec} is out of range for dimension {dim}");
        }
        let mut v = DVector::zeros(dim);
        v[k - 1] = 1.0;
        return Ok(v);
    }
    let comps: Vec<f64> = spec
        .split(',')
        .map(|c| c.trim().parse::<f64>().with_context(|| format!("invalid observable component {c:?}")))
        .collect::<Result<_>>()?;
    if comps.len() != dim {
        bail!("observable has {} components, generator has dimension {dim}", comps.len());
    }
    Ok(DVector::from_vec(comps))
}

/// `log2(coarse / fine)`, or exactly 2 when both errors sit at rounding level.
fn observed_order(coarse: f64, fine: f64, floor: f64) -> f64 {
    if coarse <= floor && fine <= floor {
        2.0
    } else {
        (coarse / fine).log2()
    }
}

fn cmd_mzlab<'a>(ctx: &Ctx<'a>, args: &GeneratorArgs, z_spec: &str) -> Result<ReportBuilder<'a>> {
    let l = load_generator(ctx, args)?;
    let z = parse_observable(z_spec, l.dim(), ctx.seed)?;
    let model = MoriModel::new(&l, &z)?;
    let grid = ctx.grid_or(MZLAB_DT, MZLAB_STEPS)?;
    let fine = grid.refined();
    let exec = Exec::default();
    let z_norm = model.z_norm_sq().sqrt();

    let dec = model.decompose(&grid, exec)?;
    let dec_fine = model.decompose(&fine, exec)?;
    let residual = model.residual(&dec, exec)?;
    let residual_fine = model.residual(&dec_fine, exec)?;
    let volterra = model.kernel_via_volterra(&grid, exec)?;
    let volterra_fine = model.kernel_via_volterra(&fine, exec)?;
    let k0 = dec.kernel[0].abs();
    let kscale = if k0 > 0.0 { k0 } else { 1.0 };
    let uniq = dec.kernel.max_abs_diff(&volterra)? / kscale;
    let uniq_fine = dec_fine.kernel.max_abs_diff(&volterra_fine)? / kscale;
    let res = residual.max_abs() / z_norm;
    let res_fine = residual_fine.max_abs() / z_norm;

    let mut b = ctx.builder("mzlab");
    b.check("gle_residual", "GLE identity for the Mori decomposition", res, 1e-4);
    b.check("gle_order", "GLE identity for the Mori decomposition", (observed_order(res, res_fine, 1e-13) - 2.0).abs(), 0.2);
    b.check("fdt", "second fluctuation-dissipation theorem", dec.fdt_defect(), 1e-10);
    b.check("orthogonality", "fluctuating forces orthogonal to z", dec.orthogonality_defect(), 1e-10);
    b.check("stationarity", "fluctuating forces stationary", dec.stationarity_defect(exec), 1e-10);
    b.check("volterra_uniqueness", "kernel fixed by the projection-free Volterra equation", uniq, 1e-4);
    b.check(
        "volterra_order",
        "kernel fixed by the projection-free Volterra equation",
        (observed_order(uniq, uniq_fine, 1e-13) - 2.0).abs(),
        0.2,
    );
    b.detail("dim", l.dim());
    b.detail("omega", model.omega());
    b.detail("kernel_at_zero", dec.kernel[0]);
    b.detail("frequencies", l.spectrum().frequencies());
    b.detail("grid", json!({"dt": grid.dt(), "n_steps": grid.n_steps()}));

    write_series(ctx.out, "kernel", &dec.kernel, ctx.format)?;
    write_series(ctx.out, "kernel_volterra", &volterra, ctx.format)?;
    write_series(ctx.out, "residual", &residual, ctx.format)?;
    write_series(ctx.out, "eta_norms", &ScalarSeries::new(grid, dec.eta_norms())?, ctx.format)?;
    write(ctx.out, "mori.json", serde_json::to_string_pretty(&dec.export(Some(&residual)))?.as_bytes())?;
    Ok(b)
}

#[derive(Serialize)]
struct Certificate {
    vector: String,
    slow: bool,
    first_failure: Option<usize>,
    worst_ratio: f64,
}

fn cmd_split<'a>(ctx: &Ctx<'a>, args: &GeneratorArgs, omega: f64) -> Result<ReportBuilder<'a>> {
    let l = load_generator(ctx, args)?;
    let sub = slow_subspace(&l, omega)?;
    let bound = projected_generator_bound(&l, omega)?;
    let coupling = memory_coupling_norm(&sub.projector(), &l)?;
    let l_norm = l.space().operator_norm(l.matrix());

    let power = certifiable_power(&l, omega);
    let mut certificates = Vec::new();
    let mut slow_failures = 0usize;
    let mut fast_passes = 0usize;
    for (label, vectors, expect_slow) in [("slow", &sub.basis, true), ("fast", &sub.complement_basis, false)] {
        for (i, v) in vectors.iter().enumerate() {
            let cert = is_slow(v, &l, omega, power)?;
            if cert.slow != expect_slow {
                if expect_slow {
                    slow_failures += 1;
                } else {
                    fast_passes += 1;
                }
            }
            certificates.push(Certificate {
                vector: format!("{label}[{i}]"),
                slow: cert.slow,
                first_failure: cert.first_failure,
                worst_ratio: cert.worst_ratio,
            });
        }
    }
    let mut reduction = 0.0_f64;
    for x in &sub.complement_basis {
        for t in [0.1, 1.0, 10.0] {
            reduction = reduction.max(orthogonal_equals_full_on_fast(&l, omega, x, t)?);
        }
    }

    let mut b = ctx.builder("split");
    b.check("projected_bound", "P_w L is bounded by w", (bound - omega) / omega, 1e-10);
    b.check(
        "memory_coupling",
        "memory coupling vanishes on the slow subspace",
        if l_norm > 0.0 { coupling / l_norm } else { coupling },
        1e-10,
    );
    b.check("fast_reduction", "orthogonal dynamics equals full dynamics on the fast subspace", reduction, 1e-9);
    b.check("slow_certificates", "slow vectors satisfy the power bound", slow_failures as f64, 0.0);
    b.check("fast_certificates", "fast vectors violate the power bound", fast_passes as f64, 0.0);
    let summary = json!({
        "omega": omega,
        "slow_dim": sub.dim(),
        "bound": bound,
        "coupling_norm": coupling,
        "certificates": certificates,
    });
    write(ctx.out, "split.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    b.detail("slow_dim", sub.dim());
    b.detail("bound", bound);
    b.detail("coupling_norm", coupling);
    b.detail("certificates", &certificates);
    b.detail("certificate_power", power);
    Ok(b)
}

fn cmd_oscillator<'a>(ctx: &Ctx<'a>, demo: Demo, n_max: u32, samples: usize, nodes: usize) -> Result<ReportBuilder<'a>> {
    let mut b = ctx.builder("oscillator");
    match demo {
        Demo::Unboundedness => {
            let grid = QuadratureGrid::new(nodes)?;
            let norm = expectation(&PhaseObservable::constant(1.0), &grid)?;
            b.check("normalization", "Gaussian expectation by quadrature", (norm - 1.0).abs(), 1e-12);
            let mut csv = String::from("n,ratio,norm_sq\n");
            let mut prev = f64::NEG_INFINITY;
            let mut non_increasing = 0usize;
            for n in 0..=n_max {
                let ratio = unboundedness_ratio(n, &grid)?;
                let x = PhaseObservable::x_n(n);
                let shifted = grid.clone().with_shift_q(2.0 * n as f64);
                let norm_sq = expectation(&x.product(&x), &shifted)?;
                b.check(&format!("unboundedness_n{n}"), "|L P_Z x_n| = n", (ratio - n as f64).abs(), 1e-8);
                b.check(&format!("x_n_norm_n{n}"), "|x_n| = 1", (norm_sq - 1.0).abs(), 1e-10);
                if ratio <= prev {
                    non_increasing += 1;
                }
                prev = ratio;
                csv.push_str(&format!("{n},{ratio:.16e},{norm_sq:.16e}\n"));
            }
            b.check("monotone_growth", "P_Z L is unbounded", non_increasing as f64, 0.0);
            write(ctx.out, "unboundedness.csv", csv.as_bytes())?;
        }
        Demo::Acf => {
            let grid = ctx.grid_or(OSC_DT, OSC_STEPS)?;
            let ens = oscillator_trajectories(samples, grid, derive_seed(ctx.seed, 0x05c))?;
            let est = empirical_acf(&ens)?;
            let cos = ScalarSeries::from_fn(grid, f64::cos)?;
            let band = acf_band_check(&est, &cos, 3.0, 0.0)?;
            let kernel = oscillator_mori_kernel(grid)?;
            let dt = grid.dt();
            let kdev = kernel.values().iter().map(|k| (k + 1.0).abs()).fold(0.0, f64::max);
            b.check("acf_band", "exact flow reproduces C(t) = cos t", band.max_score, 3.0);
            b.check("kernel_minus_one", "oscillator memory kernel is -1", kdev / (dt * dt), 5.0);
            write(ctx.out, "acf.csv", io::acf_csv(&est).as_bytes())?;
            write_series(ctx.out, "kernel", &kernel, ctx.format)?;
            b.detail("samples", samples);
        }
    }
    Ok(b)
}

fn cmd_ingest<'a>(ctx: &Ctx<'a>, path: &Path, columns: &io::ColumnSpec) -> Result<ReportBuilder<'a>> {
    let ens = io::ingest_trajectory(path, columns, ctx.seed)?;
    check_grid_flags(ens.grid(), ctx.dt, ctx.steps, &path.display().to_string())?;
    let est = empirical_acf(&ens)?;
    write(ctx.out, "acf.csv", io::acf_csv(&est).as_bytes())?;
    let mut b = ctx.builder("ingest");
    b.detail("rows", ens.rows());
    b.detail("grid", json!({"dt": ens.grid().dt(), "n_steps": ens.grid().n_steps()}));
    Ok(b)
}

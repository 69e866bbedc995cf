//! The five subcommands: dataset simulation, density-matrix reconstruction,
//! observable estimation, exact gamma scans, and failure-mode reports.
//!
//! Progress and human-readable summaries go to stdout/stderr; the data lands
//! in report files under the output directory.

use std::path::PathBuf;

use num_complex::Complex64 as C64;
use serde::Serialize;

use qht::adapt::{
    estimate_b, gamma_scan as exact_gamma_scan, optimize_from_dataset, Mode, OptimizationResult,
    OptimizeOptions,
};
use qht::homodyne::{generate_dataset, io as dataset_io, HomodyneDataset, PhaseStrategy};
use qht::kernels::{KernelExpr, KernelTarget};
use qht::nullfns::{FamilyKind, NullFamily};
use qht::states::StateSpec;
use qht::stats::{kernel_histogram, noise_ratio, tomo_average, EstimateReport};

use crate::config::{target_label, ExperimentConfig};
use crate::report::{opt_num, write_json, Cell, Format, Table};
use crate::CliError;

/// Everything a command needs besides its own config sections.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub out_dir: PathBuf,
    pub format: Format,
    /// --seed override, if any.
    pub seed_override: Option<u64>,
}

impl Context {
    fn seed(&self) -> Result<u64, CliError> {
        self.seed_override
            .or(self.cfg.seed)
            .ok_or_else(|| CliError::Config("seed required (config `seed` or --seed)".into()))
    }

    fn strategy(&self) -> Result<PhaseStrategy, CliError> {
        self.cfg
            .phases
            .ok_or_else(|| CliError::Config("`phases` required for this command".into()))
    }

    fn sampling(&self) -> Result<(u32, u32), CliError> {
        let blocks = self
            .cfg
            .blocks
            .ok_or_else(|| CliError::Config("`blocks` required for this command".into()))?;
        let per = self.cfg.samples_per_block.ok_or_else(|| {
            CliError::Config("`samples_per_block` required for this command".into())
        })?;
        Ok((blocks, per))
    }

    fn dataset(&self, state: &StateSpec) -> Result<HomodyneDataset, CliError> {
        let (blocks, per) = self.sampling()?;
        let seed = self.seed()?;
        let ds = generate_dataset(state, self.strategy()?, blocks, per, seed)?;
        eprintln!(
            "dataset: {} samples ({blocks} blocks x {per}), seed {seed}",
            ds.len()
        );
        Ok(ds)
    }
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let state = ctx.cfg.state()?;
    let ds = ctx.dataset(&state)?;
    let path = ctx.out_dir.join("dataset.csv");
    dataset_io::save(&ds, &path)?;
    println!("wrote {} ({} samples)", path.display(), ds.len());
    println!("wrote {}", dataset_io::sidecar_path(&path).display());
    Ok(())
}

// ---------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------

/// Per-element fit record for the reconstruction meta sidecar.
#[derive(Serialize)]
struct FitNote {
    n: usize,
    m: usize,
    mode: Mode,
    requested_members: usize,
    used_members: usize,
    dropped_members: usize,
    gamma: f64,
    delta2: f64,
    variance_base: f64,
    condition_estimate: f64,
    residual: f64,
    mu: Vec<[f64; 2]>,
    nu: Vec<[f64; 2]>,
    /// Present when adaptation failed and the base kernel was kept.
    #[serde(skip_serializing_if = "Option::is_none")]
    fallback: Option<String>,
}

fn interleave(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

impl FitNote {
    fn from_result(n: usize, m: usize, res: &OptimizationResult) -> Self {
        FitNote {
            n,
            m,
            mode: res.mode,
            requested_members: res.requested_members,
            used_members: res.used_members,
            dropped_members: res.dropped_members,
            gamma: res.gamma,
            delta2: res.delta2,
            variance_base: res.variance_base,
            condition_estimate: res.condition_estimate,
            residual: res.residual,
            mu: interleave(&res.mu),
            nu: interleave(&res.nu),
            fallback: None,
        }
    }

    fn fallback(n: usize, m: usize, mode: Mode, requested: usize, why: String) -> Self {
        FitNote {
            n,
            m,
            mode,
            requested_members: requested,
            used_members: 0,
            dropped_members: requested,
            gamma: 0.0,
            delta2: 0.0,
            variance_base: 0.0,
            condition_estimate: 0.0,
            residual: 0.0,
            mu: Vec::new(),
            nu: Vec::new(),
            fallback: Some(why),
        }
    }
}

/// Base and optimized estimates for one target on one dataset. When the fit
/// fails numerically the optimized side falls back to the base kernel (the
/// adapt layer has already shed what it could by then) and the failure is
/// recorded instead of aborting the run.
struct TargetRun {
    base: EstimateReport,
    opt: EstimateReport,
    kernel_opt: KernelExpr,
    note: FitNote,
}

fn run_target(
    ctx: &Context,
    ds: &HomodyneDataset,
    target: KernelTarget,
    members: usize,
) -> Result<TargetRun, CliError> {
    let (n, m) = match target {
        KernelTarget::Moment { n, m } | KernelTarget::MatrixElement { n, m } => (n, m),
        _ => (0, 0),
    };
    let base_kernel = KernelExpr::base(target)?;
    let base = tomo_average(ds, &base_kernel)?;
    let mode = ctx.cfg.mode.resolve(target);
    let opts = OptimizeOptions {
        mode,
        split_fit: ctx.cfg.split_fit,
        keep_all_members: ctx.cfg.keep_all_members,
    };
    let family = NullFamily::new(ctx.cfg.family.kind, members)?;
    match optimize_from_dataset(ds, target, &family, &opts) {
        Ok(res) => {
            if res.dropped_members > 0 {
                eprintln!(
                    "{}: conditioning guard kept {} of {} members",
                    target_label(target),
                    res.used_members,
                    res.requested_members
                );
            }
            let kernel_opt = res.kernel()?;
            let opt = tomo_average(ds, &kernel_opt)?;
            let note = FitNote::from_result(n, m, &res);
            Ok(TargetRun {
                base,
                opt,
                kernel_opt,
                note,
            })
        }
        // A numerically unsalvageable fit keeps the base kernel; config
        // errors still abort.
        Err(e) => {
            let cli: CliError = e.into();
            if let CliError::Numerical(why) = cli {
                eprintln!(
                    "{}: adaptation failed ({why}); keeping base kernel",
                    target_label(target)
                );
                let opt = base.clone();
                Ok(TargetRun {
                    base,
                    opt,
                    kernel_opt: base_kernel,
                    note: FitNote::fallback(n, m, mode, members, why),
                })
            } else {
                Err(cli)
            }
        }
    }
}

pub fn reconstruct(ctx: &Context) -> Result<(), CliError> {
    let state = ctx.cfg.state()?;
    let ds = ctx.dataset(&state)?;
    let members = ctx.cfg.members(true);
    let mut table = Table::new(&[
        "n", "m", "re_base", "im_base", "err_base", "re_opt", "im_opt", "err_opt", "gamma",
    ]);
    let mut notes = Vec::new();
    for (n, m) in ctx.cfg.reconstruct.elements() {
        let target = KernelTarget::MatrixElement { n, m };
        let run = run_target(ctx, &ds, target, members)?;
        println!(
            "rho({n},{m}): base {:+.5} {:+.5}i (err {:.2e}) -> opt {:+.5} {:+.5}i (err {:.2e}), gamma {:.3}",
            run.base.mean.re,
            run.base.mean.im,
            run.base.std_error.unwrap_or(f64::NAN),
            run.opt.mean.re,
            run.opt.mean.im,
            run.opt.std_error.unwrap_or(f64::NAN),
            run.note.gamma,
        );
        table.push(vec![
            Cell::Int(n as i64),
            Cell::Int(m as i64),
            Cell::Num(run.base.mean.re),
            Cell::Num(run.base.mean.im),
            opt_num(run.base.std_error),
            Cell::Num(run.opt.mean.re),
            Cell::Num(run.opt.mean.im),
            opt_num(run.opt.std_error),
            Cell::Num(run.note.gamma),
        ]);
        notes.push(run.note);
    }
    let path = table.write(&ctx.out_dir, "reconstruction", ctx.format)?;
    let meta = write_json(&notes, &ctx.out_dir, "reconstruction.meta.json")?;
    println!("wrote {}", path.display());
    println!("wrote {}", meta.display());
    Ok(())
}

// ---------------------------------------------------------------------
// observe
// ---------------------------------------------------------------------

pub fn observe(ctx: &Context) -> Result<(), CliError> {
    let state = ctx.cfg.state()?;
    let ds = ctx.dataset(&state)?;
    let members = ctx.cfg.members(false);
    let targets: Vec<KernelTarget> = match &ctx.cfg.targets {
        Some(list) => list.iter().map(|t| t.to_target()).collect(),
        None => vec![
            KernelTarget::Intensity,
            KernelTarget::Quadrature,
            KernelTarget::Amplitude,
        ],
    };
    let mut table = Table::new(&[
        "target",
        "re_base",
        "im_base",
        "err_base",
        "delta_base",
        "re_opt",
        "im_opt",
        "err_opt",
        "delta_opt",
        "gamma",
    ]);
    let mut runs = Vec::new();
    for &target in &targets {
        let run = run_target(ctx, &ds, target, members)?;
        // The noise ratio delta compares kernel noise to the intrinsic
        // quantum noise of a direct measurement; it is defined only for the
        // three field observables.
        let deltas = match target.intrinsic_noise(&state) {
            Ok(intrinsic) => Some((
                noise_ratio(run.base.variance, intrinsic)?,
                noise_ratio(run.opt.variance, intrinsic)?,
            )),
            Err(_) => None,
        };
        println!(
            "{}: base {:+.5} {:+.5}i (err {:.2e}) -> opt {:+.5} {:+.5}i (err {:.2e}), gamma {:.3}{}",
            target_label(target),
            run.base.mean.re,
            run.base.mean.im,
            run.base.std_error.unwrap_or(f64::NAN),
            run.opt.mean.re,
            run.opt.mean.im,
            run.opt.std_error.unwrap_or(f64::NAN),
            run.note.gamma,
            match deltas {
                Some((db, d)) => format!(", delta {db:.3} -> {d:.3}"),
                None => String::new(),
            },
        );
        table.push(vec![
            Cell::Text(target_label(target)),
            Cell::Num(run.base.mean.re),
            Cell::Num(run.base.mean.im),
            opt_num(run.base.std_error),
            opt_num(deltas.map(|d| d.0)),
            Cell::Num(run.opt.mean.re),
            Cell::Num(run.opt.mean.im),
            opt_num(run.opt.std_error),
            opt_num(deltas.map(|d| d.1)),
            Cell::Num(run.note.gamma),
        ]);
        runs.push((target, run));
    }
    let path = table.write(&ctx.out_dir, "observables", ctx.format)?;
    println!("wrote {}", path.display());
    let notes: Vec<&FitNote> = runs.iter().map(|(_, run)| &run.note).collect();
    let meta = write_json(&notes, &ctx.out_dir, "observables.meta.json")?;
    println!("wrote {}", meta.display());

    if let Some(hist_cfg) = &ctx.cfg.histogram {
        let target = hist_cfg
            .target
            .map(|t| t.to_target())
            .unwrap_or(targets[0]);
        let run = match runs.iter().find(|(t, _)| *t == target) {
            Some((_, run)) => run,
            None => {
                return Err(CliError::Config(
                    "histogram target must be one of the observe targets".into(),
                ))
            }
        };
        let range = hist_cfg.range()?;
        let base_kernel = KernelExpr::base(target)?;
        for (kernel, stem) in [(&base_kernel, "histogram_base"), (&run.kernel_opt, "histogram_opt")] {
            let hist = kernel_histogram(&ds, kernel, hist_cfg.bins, range)?;
            let mut t = Table::new(&["bin_left", "bin_right", "count"]);
            for (i, count) in hist.counts.iter().enumerate() {
                t.push(vec![
                    Cell::Num(hist.edges[i]),
                    Cell::Num(hist.edges[i + 1]),
                    Cell::Int(*count as i64),
                ]);
            }
            let path = t.write(&ctx.out_dir, stem, ctx.format)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// gamma-scan
// ---------------------------------------------------------------------

pub fn gamma_scan(ctx: &Context) -> Result<(), CliError> {
    let state = ctx.cfg.state()?;
    let sc = &ctx.cfg.scan;
    let kind = ctx.cfg.family.kind;

    let mut members_table = Table::new(&["n", "members", "gamma"]);
    for n in 0..=sc.diag_max {
        let target = KernelTarget::MatrixElement { n, m: n };
        let gs = exact_gamma_scan(&state, target, kind, sc.m_max, ctx.cfg.mode.resolve(target))?;
        for (members, gamma) in gs.gamma.iter().enumerate() {
            members_table.push(vec![
                Cell::Int(n as i64),
                Cell::Int(members as i64),
                Cell::Num(*gamma),
            ]);
        }
        println!(
            "rho({n},{n}): gamma({}) = {:.4}, usable members {}",
            sc.m_max,
            gs.gamma.last().unwrap(),
            gs.usable_members
        );
    }
    let path = members_table.write(&ctx.out_dir, "gamma_members", ctx.format)?;
    println!("wrote {}", path.display());

    let mut surface = Table::new(&["n", "m", "gamma"]);
    for n in 0..=sc.surface_nmax {
        for m in 0..=sc.surface_nmax {
            let target = KernelTarget::MatrixElement { n, m };
            let gs = exact_gamma_scan(
                &state,
                target,
                kind,
                sc.surface_members,
                ctx.cfg.mode.resolve(target),
            )?;
            surface.push(vec![
                Cell::Int(n as i64),
                Cell::Int(m as i64),
                Cell::Num(*gs.gamma.last().unwrap()),
            ]);
        }
    }
    let path = surface.write(&ctx.out_dir, "gamma_surface", ctx.format)?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------
// pathology
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct OverfitReport {
    members_small: usize,
    members_large: usize,
    fit_blocks: u32,
    holdout_blocks: u32,
    /// Worst held-out error (distance of the estimate from the true value
    /// on the blocks excluded from the fit) across the reported elements.
    max_err_small: f64,
    max_err_large: f64,
    inflation: f64,
    inflated: bool,
    /// Members the conditioning guard keeps at the large count when it is
    /// allowed to act (rho_00 fit).
    guarded_used_members: usize,
}

#[derive(Serialize)]
struct GridBiasReport {
    target: String,
    grid_p: u32,
    grid_offset_sigmas: f64,
    random_offset_sigmas: f64,
    /// Fitted variance reduction claimed for the pure-phase function F_0 on
    /// exact-grid data.
    f0_claimed_gamma: f64,
    /// What actually changes when F_0 is added there: the estimate shift
    /// and the block-error shift. Both vanish under complete sweeps.
    f0_mean_shift: f64,
    f0_block_error_shift: f64,
}

#[derive(Serialize)]
struct PathologySummary {
    overfit: OverfitReport,
    grid_bias: GridBiasReport,
}

/// Held-out error of a kernel fitted on the first half of the blocks.
fn holdout_error(
    ds: &HomodyneDataset,
    hold: &HomodyneDataset,
    target: KernelTarget,
    kind: FamilyKind,
    members: usize,
    truth: C64,
) -> Result<(f64, OptimizationResult), CliError> {
    // keep_all_members reproduces the raw oversized fit; the conditioning
    // guard would otherwise shed the redundant members and blunt the demo.
    let opts = OptimizeOptions {
        mode: Mode::Real,
        split_fit: true,
        keep_all_members: true,
    };
    let family = NullFamily::new(kind, members)?;
    let res = optimize_from_dataset(ds, target, &family, &opts)?;
    let rep = tomo_average(hold, &res.kernel()?)?;
    Ok(((rep.mean - truth).norm(), res))
}

fn overfit_report(ctx: &Context, state: &StateSpec) -> Result<(OverfitReport, Table), CliError> {
    let ds = ctx.dataset(state)?;
    let blocks = ds.blocks();
    if blocks < 2 {
        return Err(CliError::Config(
            "pathology needs at least two blocks (fit half, hold out half)".into(),
        ));
    }
    let hold = ds.subset_blocks(blocks / 2, blocks)?;
    let kind = ctx.cfg.family.kind;
    let m_small = ctx.cfg.members(true);
    let m_large = ctx.cfg.pathology.members_large;

    let mut table = Table::new(&["n", "m", "err_base", "err_small", "err_large"]);
    let mut max_small = 0.0f64;
    let mut max_large = 0.0f64;
    let mut guarded_used = m_large;
    for n in 0..=ctx.cfg.pathology.nmax {
        let target = KernelTarget::MatrixElement { n, m: n };
        let truth = target.truth(state)?;
        let base = tomo_average(&hold, &KernelExpr::base(target)?)?;
        let err_base = (base.mean - truth).norm();
        let (err_small, _) = holdout_error(&ds, &hold, target, kind, m_small, truth)?;
        let (err_large, _) = holdout_error(&ds, &hold, target, kind, m_large, truth)?;
        max_small = max_small.max(err_small);
        max_large = max_large.max(err_large);
        if n == 0 {
            // Reference: what the guard would have kept of the large fit.
            let opts = OptimizeOptions {
                mode: Mode::Real,
                split_fit: true,
                keep_all_members: false,
            };
            let family = NullFamily::new(kind, m_large)?;
            guarded_used = optimize_from_dataset(&ds, target, &family, &opts)
                .map(|r| r.used_members)
                .unwrap_or(0);
        }
        println!(
            "rho({n},{n}): held-out error base {err_base:.2e}, M={m_small} {err_small:.2e}, M={m_large} {err_large:.2e}"
        );
        table.push(vec![
            Cell::Int(n as i64),
            Cell::Int(n as i64),
            Cell::Num(err_base),
            Cell::Num(err_small),
            Cell::Num(err_large),
        ]);
    }
    let report = OverfitReport {
        members_small: m_small,
        members_large: m_large,
        fit_blocks: blocks / 2,
        holdout_blocks: blocks - blocks / 2,
        max_err_small: max_small,
        max_err_large: max_large,
        inflation: max_large / max_small,
        inflated: max_large > max_small,
        guarded_used_members: guarded_used,
    };
    println!(
        "overfit: max held-out error {:.2e} (M={}) vs {:.2e} (M={}) -> inflation {:.1}x; guard would keep {} members",
        report.max_err_large,
        m_large,
        report.max_err_small,
        m_small,
        report.inflation,
        report.guarded_used_members,
    );
    Ok((report, table))
}

fn grid_bias_report(ctx: &Context, state: &StateSpec) -> Result<(GridBiasReport, Table), CliError> {
    let (blocks, per) = ctx.sampling()?;
    let seed = ctx.seed()?;
    let target = ctx.cfg.pathology.bias_target.to_target();
    let truth = target.truth(state)?;
    let p = ctx.cfg.pathology.bias_grid_p;
    let base = KernelExpr::base(target)?;

    let mut table = Table::new(&[
        "target", "phases", "re", "im", "err", "truth_re", "truth_im", "offset", "sigmas",
    ]);
    let mut sigmas = [0.0f64; 2];
    for (i, (label, strategy)) in [
        (format!("grid_{p}"), PhaseStrategy::Grid { p }),
        ("random".to_string(), PhaseStrategy::Random),
    ]
    .into_iter()
    .enumerate()
    {
        let ds = generate_dataset(state, strategy, blocks, per, seed)?;
        let rep = tomo_average(&ds, &base)?;
        let offset = (rep.mean - truth).norm();
        let err = rep.std_error.unwrap_or(f64::NAN);
        sigmas[i] = offset / err;
        println!(
            "{} on {label}: estimate {:+.5} {:+.5}i, truth {:+.5} {:+.5}i, offset {:.3} ({:.1} sigma)",
            target_label(target),
            rep.mean.re,
            rep.mean.im,
            truth.re,
            truth.im,
            offset,
            sigmas[i],
        );
        table.push(vec![
            Cell::Text(target_label(target)),
            Cell::Text(label),
            Cell::Num(rep.mean.re),
            Cell::Num(rep.mean.im),
            Cell::Num(err),
            Cell::Num(truth.re),
            Cell::Num(truth.im),
            Cell::Num(offset),
            Cell::Num(sigmas[i]),
        ]);
    }

    // Second half of the demo: on exact equally spaced phases the
    // pure-phase function F_0 = e^{2i phi} sums to zero over every complete
    // sweep, so adding it to a phase-independent kernel moves neither the
    // estimate nor the block error, no matter what variance reduction the
    // fit claims for it.
    let grid = match ctx.strategy()? {
        g @ PhaseStrategy::Grid { .. } => g,
        _ => PhaseStrategy::Grid { p: 25 },
    };
    let ds_grid = generate_dataset(state, grid, blocks, per, seed)?;
    let family = NullFamily::new(FamilyKind::TypeI, 1)?;
    let opts = OptimizeOptions::default();
    let res = optimize_from_dataset(&ds_grid, KernelTarget::Intensity, &family, &opts)?;
    let plain = KernelExpr::base(KernelTarget::Intensity)?;
    let with_f0 = res.kernel()?;
    let rep_plain = tomo_average(&ds_grid, &plain)?;
    let rep_f0 = tomo_average(&ds_grid, &with_f0)?;
    let mean_shift = (rep_f0.mean - rep_plain.mean).norm();
    let err_shift = match (rep_f0.std_error, rep_plain.std_error) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::NAN,
    };
    let b0 = estimate_b(&ds_grid, KernelTarget::Intensity, &family)?[0];
    println!(
        "F_0 on {grid:?}: claimed gamma {:.3} (|b_0| {:.3}), realized mean shift {mean_shift:.1e}, block error shift {err_shift:.1e}",
        res.gamma,
        b0.norm(),
    );

    let report = GridBiasReport {
        target: target_label(target),
        grid_p: p,
        grid_offset_sigmas: sigmas[0],
        random_offset_sigmas: sigmas[1],
        f0_claimed_gamma: res.gamma,
        f0_mean_shift: mean_shift,
        f0_block_error_shift: err_shift,
    };
    Ok((report, table))
}

pub fn pathology(ctx: &Context) -> Result<(), CliError> {
    let state = ctx.cfg.state()?;
    let (overfit, overfit_table) = overfit_report(ctx, &state)?;
    let (grid_bias, bias_table) = grid_bias_report(ctx, &state)?;
    let path = overfit_table.write(&ctx.out_dir, "overfit", ctx.format)?;
    println!("wrote {}", path.display());
    let path = bias_table.write(&ctx.out_dir, "grid_bias", ctx.format)?;
    println!("wrote {}", path.display());
    let summary = PathologySummary { overfit, grid_bias };
    let path = write_json(&summary, &ctx.out_dir, "pathology.json")?;
    println!("wrote {}", path.display());
    Ok(())
}

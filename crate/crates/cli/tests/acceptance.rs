//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Run with `cargo test -p windcorr-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use windcorr_cli::{run_pipeline, RunConfig, RunOptions};
use windcorr_core::cleaning::{clean_power, NaLabel, ShutdownFill, Thresholds};
use windcorr_core::correlation::{
    center, correlation, covariance, eigen, panel_correlation, reduce, reduced_correlation,
    sliding_correlations, svd,
};
use windcorr_core::direction::{
    angular_difference, bin_average, circular_mean, front_line, window_direction, BinInput,
};
use windcorr_core::simulator::{simulate, DirectionEpisode, SimulationConfig};
use windcorr_core::{
    DirectionBins, Error, FarmLayout, GridSpec, Observable, SignalPanel, WindowMode, WindowSpec,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("T{i:02}")).collect()
}

fn panel_of(x: DMatrix<f64>, step: i64) -> SignalPanel {
    SignalPanel::complete(
        ids(x.nrows()),
        Utc.with_ymd_and_hms(2017, 2, 1, 0, 0, 0).unwrap(),
        step,
        x,
        Observable::ActivePower,
    )
    .unwrap()
}

/// Rows share a common factor of random strength plus idiosyncratic noise,
/// with a per-row offset and scale.
fn factor_panel(r: &mut ChaCha8Rng, n: usize, t: usize) -> DMatrix<f64> {
    let common: Vec<f64> = (0..t).map(|_| normal(r)).collect();
    let load: Vec<f64> = (0..n).map(|_| r.random_range(0.0..2.0)).collect();
    let offset: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
    let scale: Vec<f64> = (0..n).map(|_| r.random_range(0.5..3.0)).collect();
    DMatrix::from_fn(n, t, |i, j| {
        offset[i] + scale[i] * (load[i] * common[j] + normal(r))
    })
}

fn sorted_desc(v: &DVector<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = v.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

// 1 ------------------------------------------------------------------------

fn estimator_correctness() -> Verdict {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = r.random_range(1..=6);
        let t = r.random_range(2..=12);
        let x = DMatrix::from_fn(n, t, |_, _| 3.0 * normal(&mut r) + 1.0);
        let p = panel_of(x.clone(), 600);
        let cov = covariance(&center(&p).unwrap());
        let cor = correlation(&cov).unwrap();
        // naive double loop
        let mean: Vec<f64> = (0..n)
            .map(|i| (0..t).map(|k| x[(i, k)]).sum::<f64>() / t as f64)
            .collect();
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..t {
                    s += (x[(i, k)] - mean[i]) * (x[(j, k)] - mean[j]);
                }
                let c = s / t as f64;
                worst = worst.max((c - cov.entries[(i, j)]).abs());
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut sij = 0.0;
                let mut sii = 0.0;
                let mut sjj = 0.0;
                for k in 0..t {
                    let (a, b) = (x[(i, k)] - mean[i], x[(j, k)] - mean[j]);
                    sij += a * b;
                    sii += a * a;
                    sjj += b * b;
                }
                let rho = if i == j {
                    1.0
                } else {
                    sij / (sii * sjj).sqrt()
                };
                worst = worst.max((rho - cor.entries[(i, j)]).abs());
            }
        }
    }
    verdict(
        worst <= 1e-12,
        format!("max deviation from double-loop oracle {worst:.2e} (tol 1e-12)"),
    )
}

// 2 ------------------------------------------------------------------------

fn matrix_invariants() -> Verdict {
    let mut r = rng(2);
    let (mut emitted, mut skipped) = (0, 0);
    let mut worst = [0.0f64; 3];
    let mut min_eig_ratio = f64::INFINITY;
    for k in 0..1000 {
        let n = r.random_range(2..=30);
        let t = r.random_range(2..=200);
        let p = panel_of(factor_panel(&mut r, n, t), 10);
        let mode = match k % 3 {
            0 => WindowMode::Raw,
            1 => WindowMode::Reduced { drop: vec![1] },
            _ => WindowMode::Deviation,
        };
        let out = sliding_correlations(&p, WindowSpec::new(10 * t as i64, 10), &mode).unwrap();
        for o in out {
            let Ok(c) = o.result else {
                skipped += 1;
                continue;
            };
            emitted += 1;
            let m = &c.entries;
            worst[0] = worst[0].max((m - m.transpose()).amax());
            worst[1] = worst[1].max((m.diagonal().add_scalar(-1.0)).amax());
            worst[2] = worst[2].max((m.trace() - n as f64).abs());
            let sym = (m + m.transpose()) * 0.5;
            let lmin = SymmetricEigen::new(sym).eigenvalues.min();
            min_eig_ratio = min_eig_ratio.min(lmin / n as f64);
        }
    }
    let pass = worst[0] <= 1e-10 && worst[1] <= 1e-10 && worst[2] <= 1e-8 && min_eig_ratio >= -1e-8;
    verdict(
        pass,
        format!(
            "{emitted} matrices ({skipped} constant-series placeholders): asym {:.1e}, diag {:.1e}, trace {:.1e}, min λ/N {:.1e}",
            worst[0], worst[1], worst[2], min_eig_ratio
        ),
    )
}

// 3 ------------------------------------------------------------------------

fn svd_fidelity() -> Verdict {
    let mut r = rng(3);
    let (mut rec, mut spec) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = r.random_range(2..=30);
        let t = r.random_range(2..=200);
        let m = center(&panel_of(factor_panel(&mut r, n, t), 10)).unwrap();
        let f = svd(&m);
        let norm = m.values.norm();
        if norm > 0.0 {
            rec = rec.max((f.reconstruct() - &m.values).norm() / norm);
        }
        let cov = &m.values * m.values.transpose() / t as f64;
        let lam = sorted_desc(&SymmetricEigen::new(cov).eigenvalues);
        for (k, s) in f.singular_values.iter().enumerate() {
            spec = spec.max((s * s / t as f64 - lam[k]).abs());
        }
    }
    verdict(
        rec < 1e-10 && spec <= 1e-8,
        format!(
            "relative reconstruction error {rec:.1e} (tol 1e-10), |s²/T − λ| {spec:.1e} (tol 1e-8)"
        ),
    )
}

// 4 ------------------------------------------------------------------------

fn reduced_rank_oracle() -> Verdict {
    let mut r = rng(4);
    let (mut proj, mut lam) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = r.random_range(3..=20);
        let t = r.random_range(n + 1..=150);
        let m = center(&panel_of(factor_panel(&mut r, n, t), 10)).unwrap();
        let reduced = reduce(&m, &svd(&m), &[1]).unwrap();
        // projector from the top eigenvector of M Mᵀ
        let gram = &m.values * m.values.transpose();
        let e = SymmetricEigen::new(gram.clone());
        let top = e.eigenvalues.imax();
        let u = e.eigenvectors.column(top).into_owned();
        let p = DMatrix::identity(n, n) - &u * u.transpose();
        let oracle = p * &m.values;
        proj = proj.max((&reduced.values - oracle).amax());
        let before = sorted_desc(&SymmetricEigen::new(gram / t as f64).eigenvalues);
        let after_cov = &reduced.values * reduced.values.transpose() / t as f64;
        let after = sorted_desc(&SymmetricEigen::new(after_cov).eigenvalues);
        lam = lam.max((after[0] - before[1]).abs());
    }
    verdict(
        proj <= 1e-9 && lam <= 1e-8,
        format!(
            "max |reduce − (I − u₁u₁ᵀ)M| {proj:.1e} (tol 1e-9), |λ₁' − λ₂| {lam:.1e} (tol 1e-8)"
        ),
    )
}

// 5 ------------------------------------------------------------------------

/// Panel whose sample correlation is exactly `rho` off the diagonal:
/// `M = √T · L · Qᵀ` with `L Lᵀ = R` and `Q` orthonormal columns orthogonal
/// to the constant vector.
fn constant_correlation_panel(n: usize, t: usize, rho: f64, seed: u64) -> SignalPanel {
    let mut r = rng(seed);
    let mut z = DMatrix::from_fn(t, n, |_, _| normal(&mut r));
    for mut col in z.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let q = z.qr().q();
    let corr = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho });
    let l = corr.cholesky().expect("positive definite").l();
    let m = l * q.transpose() * (t as f64).sqrt();
    let x = DMatrix::from_fn(n, t, |i, j| 1500.0 + 20.0 * i as f64 + 600.0 * m[(i, j)]);
    panel_of(x, 600)
}

fn collectivity_anchor() -> Verdict {
    let p = constant_correlation_panel(30, 72, 0.793, 5);
    let c = panel_correlation(&p).unwrap();
    let lambda1 = eigen(&c.entries).unwrap().eigenvalues[0];
    let reduced = reduced_correlation(&p, &[1]).unwrap();
    let after = reduced.mean_abs_off_diagonal();
    verdict(
        (lambda1 - 24.0).abs() <= 0.01 && after < 0.05,
        format!(
            "λ₁ = {lambda1:.4} (target 24.0 ± 0.01); mean |C_ij| {:.4} → {after:.4} after dropping s₁ (target < 0.05)",
            c.mean_abs_off_diagonal()
        ),
    )
}

// 6 ------------------------------------------------------------------------

fn rank_deficiency() -> Verdict {
    let mut r = rng(6);
    let mut fewest = usize::MAX;
    for _ in 0..5 {
        let p = panel_of(factor_panel(&mut r, 100, 60), 600);
        let c = panel_correlation(&p).unwrap();
        let e = eigen(&c.entries).unwrap();
        let zeros = e.eigenvalues.iter().filter(|l| l.abs() < 1e-10).count();
        fewest = fewest.min(zeros);
    }
    verdict(
        fewest >= 41,
        format!("fewest zero eigenvalues over 5 panels (N = 100, T = 60): {fewest} (need ≥ 41)"),
    )
}

// 7 ------------------------------------------------------------------------

fn riffgat() -> FarmLayout {
    FarmLayout::grid(&GridSpec::riffgat_like()).unwrap()
}

fn window_length_trend() -> Verdict {
    let lengths = [1800i64, 3600, 6 * 3600, 12 * 3600, 24 * 3600];
    let mut sums = [0.0f64; 5];
    let mut counts = [0usize; 5];
    for seed in 0..20 {
        let mut cfg = SimulationConfig::new(riffgat(), 700 + seed);
        cfg.step_s = 60;
        cfg.duration_s = 4 * 86_400;
        cfg.wind.mean_speed = 8.0;
        cfg.wind.speed_volatility = 1.2;
        cfg.wind.reversion_time_s = 8.0 * 3600.0;
        cfg.noise.power_std_kw = 300.0;
        let out = simulate(&cfg).unwrap();
        for (k, &len) in lengths.iter().enumerate() {
            let w = sliding_correlations(&out.power, WindowSpec::new(len, len), &WindowMode::Raw)
                .unwrap();
            for o in w {
                if let Ok(c) = o.result {
                    sums[k] += c.mean_off_diagonal();
                    counts[k] += 1;
                }
            }
        }
    }
    let means: Vec<f64> = sums.iter().zip(counts).map(|(s, c)| s / c as f64).collect();
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        monotone,
        format!(
            "mean off-diagonal correlation for 30m/1h/6h/12h/24h: {}",
            means
                .iter()
                .map(|m| format!("{m:.3}"))
                .collect::<Vec<_>>()
                .join(" / ")
        ),
    )
}

// 8 ------------------------------------------------------------------------

fn directional_structure() -> Verdict {
    let layout = riffgat();
    let bins = DirectionBins::for_layout(&layout);
    let episode = 6 * 3600;
    let mut cfg = SimulationConfig::new(layout.clone(), 8);
    cfg.step_s = 10;
    cfg.duration_s = 8 * episode;
    cfg.wind.mean_speed = 8.0;
    cfg.wind.speed_volatility = 1.0;
    cfg.wind.reversion_time_s = 3.0 * 3600.0;
    cfg.wind.direction_volatility = 1.0;
    cfg.wind.gust_std = 0.8;
    cfg.wind.gust_time_s = 60.0;
    cfg.wake.added_turbulence = 1.0;
    cfg.wind.episodes = (0..8)
        .map(|k| DirectionEpisode {
            start_s: k * episode,
            bearing_deg: bins.center(k as usize),
        })
        .collect();
    let out = simulate(&cfg).unwrap();
    let spec = WindowSpec::new(1800, 1800);
    let windows =
        sliding_correlations(&out.power, spec, &WindowMode::Reduced { drop: vec![1] }).unwrap();
    let inputs: Vec<BinInput> = windows
        .into_iter()
        .filter_map(|o| {
            let dir = window_direction(&out.wind_direction, o.start_step, o.len_steps).ok()?;
            Some(BinInput {
                matrix: o.result.ok()?,
                direction: Some(dir.mean_deg),
                mean_speed: None,
            })
        })
        .collect();
    let binned = bin_average(&inputs, bins).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for b in binned
        .per_bin
        .iter()
        .filter(|b| ["N", "E", "S", "W"].contains(&b.label))
    {
        let Some(m) = &b.mean else {
            pass = false;
            parts.push(format!("{}: empty", b.label));
            continue;
        };
        let front: Vec<usize> = front_line(&layout, b.center_deg)
            .iter()
            .map(|id| layout.index_of(id).unwrap())
            .collect();
        let rest: Vec<usize> = (0..layout.len()).filter(|i| !front.contains(i)).collect();
        let ff = m.mean_between(&front, &front).unwrap();
        let fr = m.mean_between(&front, &rest).unwrap();
        pass &= b.windows >= 10 && ff - fr >= 0.1;
        parts.push(format!(
            "{} ({} win) {ff:.2} vs {fr:.2}",
            b.label, b.windows
        ));
    }
    verdict(
        pass,
        format!(
            "front-front vs front-rest, reduced mode: {}",
            parts.join("; ")
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn classification_recovery() -> Verdict {
    let mut recall_f = Vec::new();
    let mut recall_s = Vec::new();
    let mut identity = true;
    for seed in 0..10 {
        let mut cfg = SimulationConfig::new(riffgat(), 900 + seed);
        cfg.step_s = 600;
        cfg.duration_s = 14 * 86_400;
        cfg.injections.random_failures = 4;
        cfg.injections.failure_duration_s = [2 * 86_400, 4 * 86_400];
        cfg.injections.random_lulls = 4;
        cfg.injections.lull_duration_s = [2 * 3600, 6 * 3600];
        cfg.injections.random_na_prob = 0.002;
        let sim = simulate(&cfg).unwrap();
        let c = clean_power(
            &sim.power,
            &sim.wind_speed,
            &Thresholds::default(),
            ShutdownFill::LastValue,
        )
        .unwrap();
        let (mut f_hit, mut f_all, mut s_hit, mut s_all) = (0, 0, 0, 0);
        for (truth, got) in sim.truth.labels.iter().zip(c.labels.labels.iter()) {
            match truth {
                NaLabel::Failure => {
                    f_all += 1;
                    f_hit += usize::from(*got == NaLabel::Failure);
                }
                NaLabel::Shutdown => {
                    s_all += 1;
                    s_hit += usize::from(*got == NaLabel::Shutdown);
                }
                _ => {}
            }
        }
        if f_all > 0 {
            recall_f.push(f_hit as f64 / f_all as f64);
        }
        if s_all > 0 {
            recall_s.push(s_hit as f64 / s_all as f64);
        }
        let labelled = c.labels.count(NaLabel::Failure)
            + c.labels.count(NaLabel::Shutdown)
            + c.labels.count(NaLabel::Unassigned);
        let r = &c.report;
        identity &= labelled == r.missing_raw + r.failure_overrides
            && r.classified_failure + r.failure_overrides + r.classified_shutdown + r.unassigned
                == r.missing_raw + r.failure_overrides
            && r.is_consistent();
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (rf, rs) = (mean(&recall_f), mean(&recall_s));
    verdict(
        rf >= 0.9 && rs >= 0.9 && identity && recall_f.len() == 10 && recall_s.len() == 10,
        format!(
            "failure recall {:.1}%, shutdown recall {:.1}% over 10 seeds; partition identity {}",
            100.0 * rf,
            100.0 * rs,
            if identity { "exact" } else { "VIOLATED" }
        ),
    )
}

// 10 -----------------------------------------------------------------------

const SIM_TOML: &str = r#"
duration_s = 172800
step_s = 60
seed = 10

[layout.grid]
rows = 3
per_row = 10
row_spacing_m = 600.0
turbine_spacing_m = 550.0
rotor_diameter_m = 120.0

[wind]
mean_speed = 8.0
episodes = [
  { start_s = 0, bearing_deg = 0.0 },
  { start_s = 21600, bearing_deg = 45.0 },
  { start_s = 43200, bearing_deg = 90.0 },
  { start_s = 64800, bearing_deg = 135.0 },
  { start_s = 86400, bearing_deg = 180.0 },
  { start_s = 108000, bearing_deg = 225.0 },
  { start_s = 129600, bearing_deg = 270.0 },
  { start_s = 151200, bearing_deg = 315.0 },
]

[injections]
random_failures = 2
failure_duration_s = [21600, 43200]
random_lulls = 1
random_na_prob = 0.001
"#;

const RUN_TOML: &str = r#"
output_dir = "out"
eigen = true

[inputs]
simulate = "sim.toml"

[thresholds]
shutdown_farm_min = 20

[window]
length = "1h"
stride = "1h"
mode = "reduced"
drop = [1]

[bins]
"#;

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    windcorr_cli::output::list_files(dir)
        .unwrap()
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(dir.join(&p)).unwrap();
            (p, bytes)
        })
        .collect()
}

fn determinism() -> Verdict {
    let run = |root: &Path| {
        std::fs::write(root.join("sim.toml"), SIM_TOML).unwrap();
        std::fs::write(root.join("run.toml"), RUN_TOML).unwrap();
        let (cfg, base) = RunConfig::load(&root.join("run.toml")).unwrap();
        let s = run_pipeline(&cfg, &base, &RunOptions::default()).unwrap();
        (s, snapshot(&root.join("out")))
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (sa, fa) = run(a.path());
    let (_, fb) = run(b.path());
    let has_manifest = fa.iter().any(|(p, _)| p == "manifest.json");
    let identical = fa == fb;
    verdict(
        identical && has_manifest && sa.bins_filled == Some(8),
        format!(
            "{} artifacts from two runs {}; {} windows, {} direction bins filled",
            fa.len(),
            if identical {
                "byte-identical (manifest included)"
            } else {
                "DIFFER"
            },
            sa.windows,
            sa.bins_filled.unwrap_or(0)
        ),
    )
}

// 11 -----------------------------------------------------------------------

fn circular_statistics() -> Verdict {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    let mut degenerate = 0;
    for _ in 0..1000 {
        let k = r.random_range(1..=50);
        let centre = r.random_range(0.0..360.0);
        let spread = r.random_range(1.0..60.0);
        let angles: Vec<f64> = (0..k).map(|_| centre + spread * normal(&mut r)).collect();
        let delta = r.random_range(-720.0..720.0);
        let shifted: Vec<f64> = angles.iter().map(|a| a + delta).collect();
        match (circular_mean(&angles, None), circular_mean(&shifted, None)) {
            (Ok(m), Ok(s)) => {
                worst = worst.max(angular_difference(s.mean_deg, m.mean_deg + delta).abs())
            }
            _ => degenerate += 1,
        }
    }
    let mut antipodal = 0;
    for _ in 0..100 {
        let a = r.random_range(0.0..360.0);
        antipodal += usize::from(matches!(
            circular_mean(&[a, a + 180.0], None),
            Err(Error::DegenerateMean(_))
        ));
    }
    verdict(
        worst < 1e-9 && antipodal == 100,
        format!(
            "max rotation error {worst:.1e}° over 1000 sets ({degenerate} degenerate skipped); antipodal pairs flagged {antipodal}/100"
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict, Option<Duration>);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (
            "estimator correctness",
            estimator_correctness,
            Some(Duration::from_secs(5)),
        ),
        ("matrix invariants", matrix_invariants, None),
        ("SVD fidelity", svd_fidelity, None),
        ("reduced-rank oracle", reduced_rank_oracle, None),
        ("collectivity anchor", collectivity_anchor, None),
        (
            "rank deficiency",
            rank_deficiency,
            Some(Duration::from_secs(10)),
        ),
        ("window-length trend", window_length_trend, None),
        (
            "directional structure",
            directional_structure,
            Some(Duration::from_secs(120)),
        ),
        ("classification recovery", classification_recovery, None),
        ("determinism", determinism, None),
        ("circular statistics", circular_statistics, None),
    ];
    let mut failed = 0;
    for (k, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took <= l);
        let pass = v.pass && in_time;
        failed += usize::from(!pass);
        let budget = limit
            .map(|l| format!(" / limit {}s", l.as_secs()))
            .unwrap_or_default();
        println!(
            "[{}] {:>2}. {name}: {} ({:.2}s{budget})",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            v.detail,
            took.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

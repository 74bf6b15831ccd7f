//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always print and so the
//! process can install a counting allocator for the memory check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::alloc::{GlobalAlloc, Layout, System};
use std::fs;
use std::panic;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use segunc::config::RunConfig;
use segunc::flag::FlagPolicy;
use segunc::manifest::load_manifest;
use segunc::pipeline::{cmd_analyze, cmd_correlate, cmd_synth, correlate};
use segunc::report::{read_reports_csv, write_reports_csv};
use segunc::volume::{read_mask, read_volume, write_mask, write_volume, DataType};
use segunc_core::preprocess::{
    compute_stats, preprocess_liver, preprocess_tumor, resample, tumor_intensities, window, zscore, Interpolation,
    LiverRecipe, NormalizationStats, TumorRecipe, WindowSpec,
};
use segunc_core::stats::{average_ranks, t_test_p_value};
use segunc_core::synth::{
    default_noise_grid, make_cohort, make_phantom, simulate_samples, CohortSpec, NoiseSpec, PhantomSpec, Shape,
};
use segunc_core::uncertainty::{mean_probability, uncertainty_map};
use segunc_core::{
    binarize, bounding_box, correlation_table, dice, spearman, AnalysisOptions, BinaryMask, CaseAnalysis, CaseReport,
    Dims, EntropyVariant, IndexBox, Measure, SampleSet, Spacing, VoxelGrid,
};
use support::{between, oracle, random_set, unit};

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within_time(start: Instant, limit: Duration, what: &str) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took < limit, "{what} took {took:.2?}, limit {limit:?}");
    Ok(took)
}

fn grid(values: &[f64]) -> VoxelGrid {
    VoxelGrid::new(Dims::new(values.len(), 1, 1).unwrap(), Spacing::unit(), values.to_vec()).unwrap()
}

fn set_of(rows: &[&[f64]]) -> SampleSet {
    SampleSet::new("w", rows.iter().map(|r| grid(r)).collect()).unwrap()
}

fn mask_of(n: usize, on: &[usize]) -> BinaryMask {
    BinaryMask::from_fn(Dims::new(n, 1, 1).unwrap(), Spacing::unit(), |i| on.contains(&i)).unwrap()
}

fn analyze(set: &SampleSet, gt: Option<&BinaryMask>) -> CaseReport {
    CaseAnalysis::compute(set, gt, &AnalysisOptions::default())
        .unwrap()
        .report
}

// 1. identical binary samples: CV 0, D_pw 1, U(x) 0, dice 1 vs equal GT, exactly.
fn trivial_suite() -> Result<String, String> {
    let start = Instant::now();
    for (side, seed) in [(1, 0), (4, 1), (9, 2), (16, 3)] {
        let dims = Dims::cube(side).unwrap();
        let gt = BinaryMask::from_fn(dims, Spacing::unit(), |i| (i * 2654435761 + seed) % 7 < 3).unwrap();
        for n in [2, 3, 10] {
            let set = SampleSet::new("t", vec![gt.to_grid(); n]).unwrap();
            let a = CaseAnalysis::compute(&set, Some(&gt), &AnalysisOptions::default()).unwrap();
            ensure!(a.report.cv == 0.0, "cv {}", a.report.cv);
            ensure!(a.report.d_pw == 1.0, "d_pw {}", a.report.d_pw);
            ensure!(a.report.dice == Some(1.0), "dice {:?}", a.report.dice);
            ensure!(
                a.uncertainty.grid().data().iter().all(|&u| u == 0.0),
                "U(x) not all zero"
            );
            ensure!(a.consensus == gt, "consensus differs from GT");
        }
    }
    let took = within_time(start, Duration::from_secs(1), "trivial suite")?;
    Ok(format!("exact on 12 sets, {took:.2?}"))
}

// 2. 200 random sets vs the brute-force oracle, 1e-9 (mask bit-exact).
fn oracle_equivalence() -> Result<String, String> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for k in 0..200u64 {
        let n = [2, 3, 5, 10][(k % 4) as usize];
        let (set, raw) = random_set(0xACCE_5500 + k, 8, n);
        let a = CaseAnalysis::compute(&set, None, &AnalysisOptions::default()).unwrap();
        let mask: Vec<bool> = a.consensus.iter().collect();
        ensure!(mask == oracle::consensus(&raw, 0.5), "set {k}: consensus mask differs");
        let mut diffs = vec![
            (a.report.cv - oracle::cv(&raw, 0.5)).abs(),
            (a.report.d_pw - oracle::d_pw(&raw, 0.5)).abs(),
        ];
        match (a.report.u_labelled, oracle::u_labelled(&raw, 0.5)) {
            (Some(x), Some(y)) => diffs.push((x - y).abs()),
            (None, None) => {}
            (x, y) => return Err(format!("set {k}: u_labelled {x:?} vs oracle {y:?}")),
        }
        let u = oracle::u(&raw);
        diffs.extend(a.uncertainty.grid().data().iter().zip(&u).map(|(x, y)| (x - y).abs()));
        let max = diffs.into_iter().fold(0.0, f64::max);
        ensure!(max <= 1e-9, "set {k}: deviation {max:e}");
        worst = worst.max(max);
    }
    let took = within_time(start, Duration::from_secs(30), "oracle suite")?;
    Ok(format!("200 sets, max deviation {worst:.1e}, {took:.2?}"))
}

// 3. worked values, including every derived example of the measure contract.
fn worked_values() -> Result<String, String> {
    let mut checked = 0;
    let mut check = |ok: bool, what: &str| -> Result<(), String> {
        checked += 1;
        if ok {
            Ok(())
        } else {
            Err(format!("worked value failed: {what}"))
        }
    };

    // CV({90, 100, 110}) = (200/3) / 101
    let volumes = [90usize, 100, 110];
    let set = SampleSet::new(
        "cv",
        volumes
            .iter()
            .map(|&v| {
                VoxelGrid::from_fn(Dims::new(11, 10, 1).unwrap(), Spacing::unit(), |x, y, _| {
                    if x + 11 * y < v {
                        1.0
                    } else {
                        0.0
                    }
                })
                .unwrap()
            })
            .collect(),
    )
    .unwrap();
    check(
        (analyze(&set, None).cv - (200.0 / 3.0) / 101.0).abs() <= 1e-12,
        "CV {90,100,110}",
    )?;
    // U(x) = 0.5 ln 2 for constant p = 0.5
    let half = set_of(&[&[0.5; 4], &[0.5; 4], &[0.5; 4]]);
    let u = uncertainty_map(&half, EntropyVariant::AsPrinted);
    check(
        u.grid().data().iter().all(|&v| (v - 0.5 * 2f64.ln()).abs() <= 1e-12),
        "U(0.5)",
    )?;
    check(
        spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap().rho == -0.5,
        "spearman -0.5",
    )?;

    // grid helpers
    let a = mask_of(8, &[0, 1, 2, 3]);
    let b = mask_of(8, &[2, 3, 4, 5]);
    check(dice(&a, &b).unwrap() == 0.5, "dice 2*2/(4+4)")?;
    let scattered = BinaryMask::from_coords(
        Dims::cube(4).unwrap(),
        Spacing::unit(),
        &[[0, 0, 0], [3, 1, 2], [1, 3, 3]],
    )
    .unwrap();
    check(scattered.count() == 3, "count 3")?;
    let corners =
        BinaryMask::from_coords(Dims::new(6, 3, 4).unwrap(), Spacing::unit(), &[[0, 0, 0], [5, 1, 2]]).unwrap();
    check(
        bounding_box(&corners).unwrap() == IndexBox::new([0, 0, 0], [5, 1, 2]).unwrap(),
        "bbox",
    )?;
    let g4 = VoxelGrid::from_fn(Dims::cube(4).unwrap(), Spacing::unit(), |x, y, z| {
        (x + 4 * y + 16 * z) as f64
    })
    .unwrap();
    let cropped = g4.crop(&IndexBox::new([1, 1, 1], [2, 2, 2]).unwrap()).unwrap();
    let interior: Vec<f64> = [21.0, 22.0, 25.0, 26.0, 37.0, 38.0, 41.0, 42.0].to_vec();
    check(
        cropped.dims() == Dims::cube(2).unwrap() && cropped.data() == interior,
        "crop interior",
    )?;
    check(
        binarize(&grid(&[0.5]), 0.5).unwrap().count() == 1,
        "p = t is foreground",
    )?;

    // volume io: int16, slope 2, intercept -10, stored 5 -> 0
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path().join("s.nii");
    write_volume(&grid(&[5.0]), &p, DataType::Int16, None).map_err(|e| e.to_string())?;
    let mut bytes = fs::read(&p).map_err(|e| e.to_string())?;
    bytes[112..116].copy_from_slice(&2.0f32.to_le_bytes());
    bytes[116..120].copy_from_slice(&(-10.0f32).to_le_bytes());
    fs::write(&p, bytes).map_err(|e| e.to_string())?;
    check(
        read_volume(&p).map_err(|e| e.to_string())?.grid.data() == [0.0],
        "slope/intercept",
    )?;

    // preprocessing
    let stats = NormalizationStats::new(40.0, 10.0, "w").unwrap();
    check(zscore(&grid(&[60.0]), &stats).data() == [2.0], "zscore (60-40)/10")?;
    let s = compute_stats(&[grid(&[0.0, 2.0])]).unwrap();
    check(s.mean() == 1.0 && s.std() == 1.0, "stats {0,2}")?;
    let s = compute_stats(&[grid(&[1.0, 1.0, 1.0, 5.0])]).unwrap();
    check(
        s.mean() == 2.0 && (s.std() - 3f64.sqrt()).abs() < 1e-15,
        "stats {1,1,1,5}",
    )?;
    let up = resample(
        &grid(&[0.0, 1.0]),
        Dims::new(3, 1, 1).unwrap(),
        Interpolation::Trilinear,
    )
    .unwrap();
    check(up.data() == [0.0, 0.5, 1.0], "resample [0,1] -> 3")?;
    let cold = VoxelGrid::filled(Dims::cube(3).unwrap(), Spacing::unit(), -500.0).unwrap();
    let liver = preprocess_liver(
        &cold,
        &LiverRecipe {
            stats: stats.clone(),
            ..LiverRecipe::default()
        },
    )
    .unwrap();
    check(
        liver.data().iter().all(|&v| v == (-120.0 - 40.0) / 10.0),
        "liver constant output",
    )?;

    // aggregation and measures
    let m = mean_probability(&set_of(&[&[0.2], &[0.4], &[0.9]]));
    check((m.data()[0] - 0.5).abs() < 1e-15, "mean 0.2 0.4 0.9")?;
    let split: Vec<Vec<f64>> = (0..10).map(|i| vec![if i < 5 { 1.0 } else { 0.0 }]).collect();
    let split = SampleSet::new("s", split.iter().map(|r| grid(r)).collect()).unwrap();
    check(analyze(&split, None).consensus_voxels == 1, "5 of 10 votes -> true")?;
    let pair = set_of(&[&[1., 1., 1., 1., 0., 0.], &[0., 0., 1., 1., 1., 1.]]);
    check(analyze(&pair, None).d_pw == 0.5, "D_pw single pair")?;
    let three = set_of(&[
        &[1., 1., 1., 1., 0., 0., 0., 0.],
        &[1., 1., 1., 1., 0., 0., 0., 0.],
        &[0., 0., 0., 0., 1., 1., 1., 1.],
    ]);
    check(
        (analyze(&three, None).d_pw - 1.0 / 3.0).abs() < 1e-15,
        "D_pw three samples",
    )?;
    let row: &[f64] = &[0.9, 0.6, 0.2];
    let constant = set_of(&[row; 4]);
    let want = (-0.9 * 0.9f64.ln() - 0.6 * 0.6f64.ln()) / 2.0;
    let got = analyze(&constant, None).u_labelled.unwrap();
    check(
        (got - want).abs() < 1e-15 && (got - 0.200_659_9).abs() < 5e-8,
        "U_labelled two voxels",
    )?;

    // statistics
    let tie = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    check(
        average_ranks(&[1.0, 2.0, 2.0, 4.0]) == [1.0, 2.5, 2.5, 4.0],
        "average ranks",
    )?;
    // exact: sxy = 9/2, sxx = 9/2, syy = 5, so rho = sqrt(9/10)
    check((tie.rho - 0.9f64.sqrt()).abs() < 1e-15, "tied rho")?;
    let reports = [
        report("a", 0.3, 0.9, Some(0.10), 0.80),
        report("b", 0.1, 0.7, Some(0.30), 0.90),
        report("c", 0.2, 0.8, Some(0.20), 0.70),
    ];
    let table = correlation_table(&reports).unwrap();
    // dice ranks (2,3,1); cv ranks (3,1,2) -> -0.5; d_pw ranks (3,1,2) -> -0.5; u ranks (1,3,2) -> 0.5
    let want = [(Measure::Cv, -0.5), (Measure::DPw, -0.5), (Measure::ULabelled, 0.5)];
    check(
        table
            .iter()
            .zip(want)
            .all(|(r, (m, rho))| r.measure == m && r.rho == rho),
        "3 hand reports",
    )?;

    // synthetic generator
    let soft = NoiseSpec {
        boundary_sigma: 0.0,
        flip_rate: 0.0,
        prob_softness: 2.0,
    };
    let ball = PhantomSpec {
        dims: Dims::cube(20).unwrap(),
        shape: Shape::Sphere {
            center: [9.5, 9.5, 9.5],
            radius: 5.0,
        },
        seed: 3,
    };
    check(
        analyze(&simulate_samples(&ball, &soft, 4, "s").unwrap(), None).d_pw == 1.0,
        "soft identical D_pw",
    )?;
    let big = PhantomSpec {
        dims: Dims::cube(24).unwrap(),
        shape: Shape::Sphere {
            center: [11.5, 11.5, 11.5],
            radius: 8.0,
        },
        seed: 0,
    };
    let analytic = 4.0 / 3.0 * std::f64::consts::PI * 512.0;
    let count = make_phantom(&big).unwrap().count() as f64;
    check((count - analytic).abs() / analytic <= 0.15, "sphere volume")?;
    let single = CohortSpec {
        n_cases: 3,
        noise_grid: vec![default_noise_grid()[2]],
        dims: Dims::cube(48).unwrap(),
        ..CohortSpec::default()
    };
    let dices: Vec<f64> = make_cohort(&single)
        .unwrap()
        .iter()
        .map(|c| segunc_core::synth::consensus_dice(c, 0.5).unwrap())
        .collect();
    let spread = dices.iter().cloned().fold(0.0, f64::max) - dices.iter().cloned().fold(1.0, f64::min);
    check(spread < 0.1, "single-level cohort spread")?;
    let sigmas = [0.0, 0.5, 1.0, 2.0, 4.0];
    let means: Vec<f64> = sigmas
        .iter()
        .map(|&sigma| {
            let noise = NoiseSpec {
                boundary_sigma: sigma,
                flip_rate: 0.0,
                prob_softness: 0.5,
            };
            let total: f64 = (0..30)
                .map(|seed| {
                    let spec = PhantomSpec {
                        dims: Dims::cube(24).unwrap(),
                        shape: Shape::Sphere {
                            center: [11.5, 11.5, 11.5],
                            radius: 6.0,
                        },
                        seed,
                    };
                    analyze(&simulate_samples(&spec, &noise, 5, "s").unwrap(), None).d_pw
                })
                .sum();
            total / 30.0
        })
        .collect();
    check(means.windows(2).all(|w| w[1] < w[0]), "D_pw falls with boundary noise")?;

    // randomized 8^3 case vs the naive reference
    let mut rng = <rand_chacha::ChaCha8Rng as rand_core::SeedableRng>::seed_from_u64(0x8C0BE);
    let raw: Vec<Vec<f64>> = (0..10).map(|_| (0..512).map(|_| unit(&mut rng)).collect()).collect();
    let cube = SampleSet::new(
        "cube",
        raw.iter()
            .map(|r| VoxelGrid::new(Dims::cube(8).unwrap(), Spacing::unit(), r.clone()).unwrap())
            .collect(),
    )
    .unwrap();
    let u = uncertainty_map(&cube, EntropyVariant::AsPrinted);
    let reference = oracle::u(&raw);
    check(
        u.grid()
            .data()
            .iter()
            .zip(&reference)
            .all(|(a, b)| (a - b).abs() <= 1e-12),
        "8^3 voxelwise U",
    )?;

    // flag and correlate through the CLI stages
    let mut cohort: Vec<CaseReport> = (0..5)
        .map(|i| {
            report(
                &format!("c{i}"),
                0.05 * i as f64,
                0.95 - 0.01 * i as f64,
                Some(0.01 * (5 - i) as f64),
                0.6 + 0.07 * i as f64,
            )
        })
        .collect();
    cohort[3].d_pw = 0.5;
    let policy = FlagPolicy::parse("[[rule]]\nmeasure = \"d_pw\"\ncomparator = \"below\"\ncutoff = 0.9\n").unwrap();
    let flagged = policy.apply(&cohort);
    check(
        flagged.len() == 1 && flagged[0].0 == "c3",
        "d_pw below 0.9 flags the 0.5 case",
    )?;
    cohort[1].u_labelled = None;
    let flagged = policy.apply(&cohort);
    check(
        flagged
            .iter()
            .any(|(id, why)| id == "c1" && why.iter().any(|w| w == "undefined-measure")),
        "undefined-measure",
    )?;
    cohort[1].u_labelled = Some(0.3);
    let csv = dir.path().join("five.csv");
    write_reports_csv(&csv, &cohort).map_err(|e| e.to_string())?;
    let table = correlate(&csv).map_err(|e| e.to_string())?;
    let dice_col: Vec<f64> = cohort.iter().map(|r| r.dice.unwrap()).collect();
    let direct = Measure::ALL.iter().all(|&m| {
        let xs: Vec<f64> = cohort.iter().map(|r| m.value(r).unwrap()).collect();
        let s = spearman(&xs, &dice_col).unwrap();
        table
            .iter()
            .any(|r| r.measure == m && r.rho == s.rho && r.p_value == s.p_value)
    });
    check(direct && table.len() == 3, "5-row correlate equals spearman")?;
    Ok(format!("{checked} worked values"))
}

fn report(id: &str, cv: f64, d_pw: f64, u: Option<f64>, dice: f64) -> CaseReport {
    CaseReport {
        case_id: id.into(),
        n_samples: 10,
        cv,
        d_pw,
        u_labelled: u,
        consensus_voxels: 1,
        dice: Some(dice),
        threshold: 0.5,
    }
}

// 4. default 55-case cohort through synth, analyze and correlate.
fn correlation_structure() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let cfg = RunConfig::default();
    let start = Instant::now();
    cmd_synth(&cfg, &d.join("cohort")).map_err(|e| e.to_string())?;
    let manifest = d.join("cohort/manifest.toml");
    let s = cmd_analyze(&manifest, &cfg, &d.join("run1"), false).map_err(|e| e.to_string())?;
    ensure!(s.failures.is_empty(), "analysis failures: {:?}", s.failures);
    cmd_correlate(&d.join("run1/reports.csv"), &d.join("corr.csv")).map_err(|e| e.to_string())?;
    let took = within_time(start, Duration::from_secs(60), "synth + analyze + correlate")?;

    ensure!(
        load_manifest(&manifest).map_err(|e| e.to_string())?.len() == 55,
        "manifest case count"
    );
    let reports = read_reports_csv(d.join("run1/reports.csv")).map_err(|e| e.to_string())?;
    ensure!(reports.reports.len() == 55, "{} report rows", reports.reports.len());
    let dice: Vec<f64> = reports.reports.iter().filter_map(|r| r.dice).collect();
    let range = dice.iter().cloned().fold(0.0, f64::max) - dice.iter().cloned().fold(1.0, f64::min);
    ensure!(dice.len() == 55 && range >= 0.4, "dice range {range}");
    let text = fs::read_to_string(d.join("corr.csv")).map_err(|e| e.to_string())?;
    let mut rho = [0.0; 3];
    for (i, line) in text.lines().skip(1).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let (r, p): (f64, f64) = (cells[1].parse().unwrap(), cells[2].parse().unwrap());
        ensure!(p < 0.01, "{} p-value {p}", cells[0]);
        rho[i] = r;
    }
    ensure!(rho[0] < 0.0 && rho[1] > 0.0 && rho[2] < 0.0, "sign pattern {rho:?}");
    ensure!(rho[1].abs() >= 0.5, "|rho(d_pw)| = {}", rho[1].abs());

    cmd_analyze(&manifest, &cfg, &d.join("run2"), false).map_err(|e| e.to_string())?;
    for f in ["reports.csv", "reports.jsonl", "failures.csv"] {
        let same = fs::read(d.join("run1").join(f)).ok() == fs::read(d.join("run2").join(f)).ok();
        ensure!(same, "rerun changed {f}");
    }
    Ok(format!(
        "rho cv {:.3}, d_pw {:.3}, u_labelled {:.3}; rerun identical; {took:.1?}",
        rho[0], rho[1], rho[2]
    ))
}

// 5. p-values vs a numerical-integration oracle; rank invariance.
fn statistics() -> Result<String, String> {
    let mut worst = 0.0f64;
    for (n, rho) in [(10, 0.5), (20, 0.3), (55, 0.77)] {
        let diff = (t_test_p_value(rho, n) - oracle::t_test_p(rho, n)).abs();
        ensure!(diff < 1e-6, "p-value at n={n}, rho={rho} off by {diff:e}");
        worst = worst.max(diff);
    }
    let mut rng = <rand_chacha::ChaCha8Rng as rand_core::SeedableRng>::seed_from_u64(55);
    for case in 0..100 {
        let n = between(&mut rng, 3, 60);
        // a coarse grid of values so ties occur
        let x: Vec<f64> = (0..n).map(|_| (unit(&mut rng) * 20.0).floor() - 10.0).collect();
        let y: Vec<f64> = (0..n).map(|_| unit(&mut rng) * 4.0 - 2.0).collect();
        let base = match spearman(&x, &y) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let transforms: [fn(f64) -> f64; 3] = [f64::exp, |v| 3.0 * v + 7.0, |v| v * v * v];
        for f in transforms {
            let tx: Vec<f64> = x.iter().map(|&v| f(v)).collect();
            let ty: Vec<f64> = y.iter().map(|&v| f(v)).collect();
            ensure!(average_ranks(&tx) == average_ranks(&x), "case {case}: ranks changed");
            let s = spearman(&tx, &ty).map_err(|e| e.to_string())?;
            ensure!(
                s.rho == base.rho && s.p_value == base.p_value,
                "case {case}: rho changed"
            );
        }
    }
    Ok(format!("max p-value deviation {worst:.1e}; 100 transform cases exact"))
}

// 6. preprocessing output shapes, fill, windows, idempotence and z-score.
fn preprocessing() -> Result<String, String> {
    let spacing = Spacing::new(0.7, 0.7, 5.0).unwrap();
    for (i, dims) in [Dims::new(40, 36, 12), Dims::new(7, 9, 3), Dims::new(64, 64, 20)]
        .into_iter()
        .enumerate()
    {
        let dims = dims.unwrap();
        let ct = VoxelGrid::from_fn(dims, spacing, |x, y, z| {
            ((x * 131 + y * 71 + z * 29 + i) % 1500) as f64 - 700.0
        })
        .unwrap();
        let out = preprocess_liver(&ct, &LiverRecipe::default()).unwrap();
        ensure!(out.dims() == Dims::cube(256).unwrap(), "liver output {}", out.dims());
    }

    let dims = Dims::new(48, 40, 16).unwrap();
    let ct = VoxelGrid::from_fn(dims, spacing, |x, y, z| {
        ((x * 37 + y * 11 + z * 53) % 900) as f64 - 400.0
    })
    .unwrap();
    let mask = BinaryMask::from_fn(dims, spacing, |i| {
        let [x, y, z] = dims.coords(i);
        let d = |v: usize, c: f64, r: f64| ((v as f64 - c) / r).powi(2);
        d(x, 24.0, 15.0) + d(y, 20.0, 12.0) + d(z, 8.0, 5.0) <= 1.0
    })
    .unwrap();
    let recipe = TumorRecipe::default();
    let filled = tumor_intensities(&ct, &mask, &recipe).unwrap();
    let bbox = bounding_box(&mask).unwrap();
    let inner = mask.crop(&bbox).unwrap();
    for (i, &v) in filled.data().iter().enumerate() {
        if inner.get(i) {
            ensure!((-30.0..=200.0).contains(&v), "liver voxel {v} outside the window");
        } else {
            ensure!(v == -50.0, "outside voxel {v}, expected -50");
        }
    }
    let tumor = preprocess_tumor(&ct, &mask, &recipe).unwrap();
    ensure!(
        tumor.dims() == Dims::new(284, 256, 133).unwrap(),
        "tumor output {}",
        tumor.dims()
    );

    let w = WindowSpec::SOFT_TISSUE;
    let once = window(&ct, &w);
    ensure!(window(&once, &w) == once, "window is not idempotent");
    let (lo, hi) = once.min_max();
    ensure!(lo >= -120.0 && hi <= 240.0, "window range {lo}..{hi}");

    let stats = compute_stats(std::slice::from_ref(&once)).unwrap();
    let z = zscore(&once, &stats);
    let after = compute_stats(std::slice::from_ref(&z)).unwrap();
    ensure!(
        after.mean().abs() < 1e-6 && (after.std() - 1.0).abs() < 1e-6,
        "zscore gives {} / {}",
        after.mean(),
        after.std()
    );
    Ok("liver 256^3 x3, tumor 284x256x133, fill -50, windows, z-score".into())
}

// 7. 50 randomized write/read round trips.
fn io_round_trips() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand_core::SeedableRng>::seed_from_u64(7);
    for k in 0..50 {
        let dims = Dims::new(
            between(&mut rng, 1, 16),
            between(&mut rng, 1, 16),
            between(&mut rng, 1, 16),
        )
        .unwrap();
        let spacing = Spacing::new(0.5 + unit(&mut rng), 0.5 + unit(&mut rng), 1.0 + 4.0 * unit(&mut rng)).unwrap();
        let ext = ["nii", "nii.gz", "raw"][k % 3];
        let n = dims.len();
        let floats: Vec<f64> = (0..n).map(|_| ((unit(&mut rng) - 0.5) * 1e4) as f32 as f64).collect();
        let ints: Vec<f64> = (0..n).map(|_| between(&mut rng, 0, 65535) as f64 - 32768.0).collect();
        let bits: Vec<f64> = (0..n).map(|_| (unit(&mut rng) < 0.3) as u8 as f64).collect();
        for (data, dt) in [
            (floats, DataType::Float32),
            (ints, DataType::Int16),
            (bits, DataType::Uint8),
        ] {
            let g = VoxelGrid::new(dims, spacing, data).unwrap();
            let p = dir.path().join(format!("v{k}_{}.{ext}", dt.name()));
            write_volume(&g, &p, dt, None).map_err(|e| e.to_string())?;
            let back = read_volume(&p).map_err(|e| e.to_string())?.grid;
            ensure!(back.data() == g.data(), "volume {k} {}: values differ", dt.name());
            ensure!(back.dims() == dims, "volume {k}: dims differ");
            if ext == "raw" {
                ensure!(back.spacing() == spacing, "volume {k}: spacing differs");
            }
        }
        let m = BinaryMask::from_fn(dims, spacing, |i| (i * 7 + k) % 5 == 0).unwrap();
        let p = dir.path().join(format!("m{k}.{ext}"));
        write_mask(&m, &p, None).map_err(|e| e.to_string())?;
        ensure!(
            read_mask(&p).map_err(|e| e.to_string())?.words() == m.words(),
            "mask {k} differs"
        );
    }
    Ok("50 volumes x float32/int16/uint8 + masks over .nii, .nii.gz, .raw".into())
}

// 8. one 256^3 case with N = 10: time and peak heap.
fn performance() -> Result<String, String> {
    let dims = Dims::cube(256).unwrap();
    let samples: Vec<VoxelGrid> = (0..10)
        .map(|i| {
            let r = 70.0 + 2.0 * i as f64;
            VoxelGrid::from_fn(dims, Spacing::unit(), |x, y, z| {
                let d = ((x as f64 - 127.5).powi(2) + (y as f64 - 127.5).powi(2) + (z as f64 - 127.5).powi(2)).sqrt();
                (0.5 + (r - d) / 8.0).clamp(0.0, 1.0)
            })
            .unwrap()
        })
        .collect();
    let set = SampleSet::new("big", samples).unwrap();
    let gt = binarize(&set.samples()[0], 0.5).unwrap();
    let budget = 4 * 10 * dims.len() * 4;

    let baseline = LIVE.load(Ordering::Relaxed);
    PEAK.store(baseline, Ordering::Relaxed);
    let start = Instant::now();
    let a = CaseAnalysis::compute(&set, Some(&gt), &AnalysisOptions::default()).unwrap();
    let took = within_time(start, Duration::from_secs(10), "256^3 analysis")?;
    let peak = PEAK.load(Ordering::Relaxed);
    ensure!(
        peak < budget,
        "peak heap {} MB over budget {} MB",
        peak >> 20,
        budget >> 20
    );
    ensure!(
        a.report.u_labelled.is_some() && a.report.d_pw < 1.0,
        "unexpected report {:?}",
        a.report
    );
    Ok(format!(
        "{took:.2?}, peak heap {} MB of {} MB budget (samples {} MB)",
        peak >> 20,
        budget >> 20,
        baseline >> 20
    ))
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("formula fidelity, trivial suite", trivial_suite),
        ("oracle equivalence", oracle_equivalence),
        ("worked values", worked_values),
        ("correlation structure, default cohort", correlation_structure),
        ("statistics validation", statistics),
        ("preprocessing contract", preprocessing),
        ("I/O round trips", io_round_trips),
        ("performance, 256^3 x 10", performance),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let outcome = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {id} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

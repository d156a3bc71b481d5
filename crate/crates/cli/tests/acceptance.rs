//! Acceptance criteria A1 to A8, one pass/fail line each.
//!
//! Runs without the libtest harness so the summary lines always reach the
//! output. Positional arguments such as `A3 A7` select a subset.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mudec_cli::config::ModelKind;
use mudec_cli::pipeline::{self, DecompReport, RunDirs, METRICS_TXT};
use mudec_cli::{mdc, PipelineConfig, Precision};
use mudec_core::decomp::{drive_at_source_rate, neural_drive, DriveKernel, SpikeTrainSet, SpikeUnit};
use mudec_core::dsp::{butterworth_sections, notch_section, FilterKind, SosFilter};
use mudec_core::models::{Model, ModelConfig, SnnConfig, TcnConfig};
use mudec_core::selfcheck::{self, CheckResult};
use mudec_core::tensor::{array3, lif_closed_form_first_spike, Graph, LifParams, Real};
use mudec_core::train::{pearson_r, rmse, EvalReport};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < budget_s as f64, || {
        format!("took {:.0} s, budget {budget_s} s", elapsed.as_secs_f64())
    })
}

// ------------------------------------------------------------------ A1

fn a1() -> Outcome {
    let start = Instant::now();
    let mut results: Vec<CheckResult> = selfcheck::check_ops(20, 101).map_err(|e| e.to_string())?;
    results.push(selfcheck::check_lif_chain(20, 102).map_err(|e| e.to_string())?);
    results.push(selfcheck::check_tcn(20, 103).map_err(|e| e.to_string())?);
    let (snn_down, snn_front) = selfcheck::check_snn(20, 104).map_err(|e| e.to_string())?;
    results.extend([snn_down, snn_front]);
    let elapsed = start.elapsed();
    for r in &results {
        ensure(r.instances >= 20 && r.passed(), || {
            format!("{}: {} instances, max rel err {:.2e} > {:.0e}", r.name, r.instances, r.max_error, r.tolerance)
        })?;
    }
    within_budget(elapsed, 120)?;
    let worst = results.iter().map(|r| r.max_error / r.tolerance).fold(0.0, f64::max);
    Ok(format!(
        "{} checks x 20 instances, worst error/tolerance {:.2} ({:.1} s)",
        results.len(),
        worst,
        elapsed.as_secs_f64()
    ))
}

// ------------------------------------------------------------------ A2

fn model_prefix_stable<S: Real>(cfg: &ModelConfig, rng: &mut ChaCha8Rng, probes: usize) -> Result<(), String> {
    let model = Model::<S>::build(cfg, 17).map_err(|e| e.to_string())?;
    let (f, t) = (cfg.in_features(), 300);
    let x = Array3::from_shape_fn((1, t, f), |_| rng.random_range(-2.0..2.0));
    let base = model.predict_batch(&x).map_err(|e| e.to_string())?;
    for _ in 0..probes {
        let p = rng.random_range(0..t);
        let mut y = x.clone();
        y[[0, p, rng.random_range(0..f)]] += rng.random_range(0.5..3.0);
        let out = model.predict_batch(&y).map_err(|e| e.to_string())?;
        for j in 0..p {
            ensure(out[[0, j]].to_bits() == base[[0, j]].to_bits(), || {
                format!("{} output {j} changed after perturbing t={p}", cfg.name())
            })?;
        }
    }
    Ok(())
}

fn drive_prefix_stable(rng: &mut ChaCha8Rng, probes: usize) -> Result<(), String> {
    let (fs, n) = (2048.0, 4 * 2048);
    let groups = vec!["a".to_string(), "b".to_string()];
    let units: Vec<SpikeUnit> = (0..4)
        .map(|u| {
            let mut idx: Vec<usize> = (0..60).map(|_| rng.random_range(1..n)).collect();
            idx.sort_unstable();
            idx.dedup();
            SpikeUnit { group: Some(groups[u % 2].clone()), ..SpikeUnit::new(format!("mu{u}"), idx) }
        })
        .collect();
    let set = SpikeTrainSet::new(fs, n, units).map_err(|e| e.to_string())?;
    let kernel = DriveKernel::default();
    let base_native = drive_at_source_rate(&set, &kernel).map_err(|e| e.to_string())?;
    let base = neural_drive(&set, &kernel, 200.0, &groups).map_err(|e| e.to_string())?;
    for _ in 0..probes {
        let p = rng.random_range(1..n);
        let mut perturbed = set.clone();
        let u = rng.random_range(0..perturbed.units.len());
        let idx = &mut perturbed.units[u].indices;
        match idx.binary_search(&p) {
            Ok(k) => {
                idx.remove(k);
            }
            Err(k) => idx.insert(k, p),
        }
        let native = drive_at_source_rate(&perturbed, &kernel).map_err(|e| e.to_string())?;
        for c in 0..native.nrows() {
            for j in 0..p {
                ensure(native[[c, j]].to_bits() == base_native[[c, j]].to_bits(), || {
                    format!("source-rate drive {c}:{j} changed after spike edit at {p}")
                })?;
            }
        }
        let out = neural_drive(&perturbed, &kernel, 200.0, &groups).map_err(|e| e.to_string())?;
        for (a, b) in [(&out.unit_drives, &base.unit_drives), (&out.group_drives, &base.group_drives)] {
            for j in (0..a.n_samples()).take_while(|&j| (j as f64) * fs / 200.0 < p as f64) {
                for c in 0..a.n_channels() {
                    ensure(a.data()[[c, j]].to_bits() == b.data()[[c, j]].to_bits(), || {
                        format!("200 Hz drive {c}:{j} changed after spike edit at source sample {p}")
                    })?;
                }
            }
        }
    }
    Ok(())
}

fn a2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let probes = 12;
    let tcn = ModelConfig::Tcn(TcnConfig::default());
    let snn = ModelConfig::Snn(SnnConfig::default());
    for cfg in [&tcn, &snn] {
        model_prefix_stable::<f32>(cfg, &mut rng, probes)?;
        model_prefix_stable::<f64>(cfg, &mut rng, probes)?;
    }
    drive_prefix_stable(&mut rng, probes)?;
    let elapsed = start.elapsed();
    within_budget(elapsed, 60)?;
    Ok(format!(
        "TCN, SNN (f32 and f64) and neural drive bit-identical before {probes} random probes each ({:.1} s)",
        elapsed.as_secs_f64()
    ))
}

// ------------------------------------------------------------------ A3 / A4

fn seed_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.set_seed(seed);
    cfg
}

fn scratch() -> PathBuf {
    tempfile::tempdir().expect("tempdir").keep()
}

/// Synthesis and decomposition of one seed, shared between A3 and A4.
struct Decomposed {
    root: PathBuf,
    report: DecompReport,
    elapsed: Duration,
}

fn decompose_seed(seed: u64) -> Result<Decomposed, String> {
    let start = Instant::now();
    let root = scratch();
    let dirs = RunDirs::under(&root);
    let cfg = seed_config(seed);
    pipeline::synth(&cfg, &dirs.data, 1).map_err(|e| e.to_string())?;
    let report = pipeline::decompose(&cfg, &dirs.data, &dirs.decomp, 1).map_err(|e| e.to_string())?;
    Ok(Decomposed { root, report, elapsed: start.elapsed() })
}

const A3_SEED: u64 = 1;

fn a3(shared: &mut Option<Decomposed>) -> Outcome {
    let d = decompose_seed(A3_SEED)?;
    let recovered = d.report.recovered_units(pipeline::ROA_RECOVERED);
    let line = format!(
        "{recovered}/8 units with held-out RoA > 90% (±2.5 ms), {} retained ({:.1} s)",
        d.report.units.len(),
        d.elapsed.as_secs_f64()
    );
    let elapsed = d.elapsed;
    *shared = Some(d);
    ensure(recovered >= 6, || line.clone())?;
    within_budget(elapsed, 300)?;
    Ok(line)
}

struct SeedResult {
    seed: u64,
    tcn: EvalReport,
    snn: EvalReport,
}

impl SeedResult {
    fn passed(&self) -> bool {
        self.tcn.mean_rmse_pct_mvf < 10.0 && self.tcn.mean_pearson_r > 0.90 && self.snn.mean_pearson_r > 0.80
    }

    fn describe(&self) -> String {
        format!(
            "seed {}: TCN {} SNN {} {}",
            self.seed,
            self.tcn.summary(),
            self.snn.summary(),
            if self.passed() { "ok" } else { "miss" }
        )
    }
}

fn train_seed(seed: u64, d: &Decomposed, precision: Precision) -> Result<SeedResult, String> {
    let dirs = RunDirs::under(&d.root);
    let mut cfg = seed_config(seed);
    pipeline::dataset(&cfg, &dirs.data, &dirs.decomp, &dirs.dataset).map_err(|e| e.to_string())?;
    let mut eval = BTreeMap::new();
    for kind in [ModelKind::Tcn, ModelKind::Snn] {
        cfg.model.kind = kind;
        let out = d.root.join(format!("train_{kind:?}").to_lowercase());
        let report = pipeline::train(&cfg, &dirs.dataset, &out, precision).map_err(|e| e.to_string())?;
        eprintln!(
            "  seed {seed} {kind:?}: best epoch {} of {}, test {}",
            report.fit.best_epoch,
            report.fit.epochs.len(),
            report.test.summary()
        );
        eval.insert(format!("{kind:?}"), report.test);
    }
    Ok(SeedResult { seed, tcn: eval.remove("Tcn").unwrap(), snn: eval.remove("Snn").unwrap() })
}

const A4_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const A4_REQUIRED: usize = 4;

fn a4(shared: Option<Decomposed>) -> Outcome {
    let precision = Precision::from_env().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut spent = Duration::ZERO;
    let mut results = Vec::new();
    let mut shared = shared;
    for seed in A4_SEEDS {
        let passes = results.iter().filter(|r: &&SeedResult| r.passed()).count();
        let misses = results.len() - passes;
        if passes >= A4_REQUIRED || misses > A4_SEEDS.len() - A4_REQUIRED {
            break;
        }
        let d = match shared.take() {
            Some(d) if seed == A3_SEED => {
                spent += d.elapsed;
                d
            }
            _ => decompose_seed(seed)?,
        };
        let r = train_seed(seed, &d, precision)?;
        eprintln!("  {}", r.describe());
        results.push(r);
    }
    let elapsed = start.elapsed() + spent;
    let passes = results.iter().filter(|r| r.passed()).count();
    let summary = results.iter().map(SeedResult::describe).collect::<Vec<_>>().join("; ");
    let line = format!("{passes}/{} seeds meet the targets [{summary}] ({:.0} s)", results.len(), elapsed.as_secs_f64());
    ensure(passes >= A4_REQUIRED, || line.clone())?;
    within_budget(elapsed, 1800)?;
    Ok(line)
}

// ------------------------------------------------------------------ A5

/// Conv weight and bias count.
fn conv(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k + cout
}

fn a5() -> Outcome {
    let tcn = TcnConfig::default();
    let snn = SnnConfig::default();

    let rf_oracle = 1 + (tcn.kernel - 1) * (1 + 2 * tcn.dilations.iter().sum::<usize>());
    ensure(rf_oracle == 1017 && tcn.receptive_field() == 1017, || {
        format!("receptive field {} (oracle {rf_oracle}), expected 1017", tcn.receptive_field())
    })?;

    // Stem, six blocks of two convs plus a LayerNorm gain and shift, 1×1 head.
    let (f, c, k) = (2, 64, 9);
    let tcn_hand = conv(f, c, k) + 6 * (2 * conv(c, c, k) + 2 * c) + conv(c, 1, 1);
    // Two front-end convs, scalar readout coefficient, 1×1 head.
    let snn_hand = conv(f, c, k) + conv(c, c, k) + 1 + conv(c, 1, 1);
    ensure(tcn_hand == 445_185 && snn_hand == 38_210, || format!("hand counts {tcn_hand}, {snn_hand}"))?;
    let tcn_built = Model::<f64>::build(&ModelConfig::Tcn(tcn.clone()), 0).map_err(|e| e.to_string())?;
    let snn_built = Model::<f64>::build(&ModelConfig::Snn(snn.clone()), 0).map_err(|e| e.to_string())?;
    for (name, hand, formula, built) in [
        ("tcn", tcn_hand, tcn.param_count(), tcn_built.params().count()),
        ("snn", snn_hand, snn.param_count(), snn_built.params().count()),
    ] {
        ensure(hand == formula && hand == built, || {
            format!("{name} parameters: hand {hand}, formula {formula}, built {built}")
        })?;
    }

    let p = LifParams::default();
    let first_spike = |i: f64| -> Result<Option<usize>, String> {
        let mut g = Graph::<f64>::new();
        let x = g.constant(array3((1, 1, 200), vec![i; 200]));
        let s = g.lif(x, p).map_err(|e| e.to_string())?;
        Ok(g.value(s).iter().position(|&v| v == 1.0).map(|t| t + 1))
    };
    for (i, expected) in [(0.2, Some(7)), (0.05, None)] {
        let simulated = first_spike(i)?;
        let closed = lif_closed_form_first_spike(i, &p);
        ensure(simulated == expected && closed == expected, || {
            format!("LIF I={i}: simulated {simulated:?}, closed form {closed:?}, expected {expected:?}")
        })?;
    }
    Ok(format!(
        "RF 1017; parameters TCN {tcn_hand}, SNN {snn_hand}; LIF first spike t=7 at I=0.2, none at I=0.05"
    ))
}

// ------------------------------------------------------------------ A6

fn a6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_r: f64 = 0.0;
    let mut worst_offset: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(3..400);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let a = rng.random_range(0.01..100.0);
        let b = rng.random_range(-100.0..100.0);
        let z: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let r = pearson_r(&y, &z).map_err(|e| e.to_string())?.r;
        worst_r = worst_r.max((r - 1.0).abs());
        let shifted: Vec<f64> = y.iter().map(|v| v + b).collect();
        let e = rmse(&shifted, &y).map_err(|e| e.to_string())?;
        worst_offset = worst_offset.max((e - b.abs()).abs() / b.abs().max(1.0));
    }
    ensure(worst_r < 1e-12, || format!("|r(y, ay+b) - 1| up to {worst_r:.1e}"))?;
    ensure(worst_offset < 1e-12, || format!("offset RMSE off by {worst_offset:.1e}"))?;

    // Worked by hand: errors (0, 0, 2) give RMSE √(4/3); deviations
    // (-1, 0, 1) and (-5/3, -2/3, 7/3) give r = 4 / √(2 · 78/9) = 12/√156.
    let (pred, target) = ([1.0, 2.0, 3.0], [1.0, 2.0, 5.0]);
    let e = rmse(&pred, &target).map_err(|e| e.to_string())?;
    let r = pearson_r(&pred, &target).map_err(|e| e.to_string())?.r;
    let (e_hand, r_hand) = ((4.0f64 / 3.0).sqrt(), 12.0 / 156.0f64.sqrt());
    ensure((e - e_hand).abs() <= 4.0 * f64::EPSILON && (r - r_hand).abs() <= 4.0 * f64::EPSILON, || {
        format!("hand case: RMSE {e} vs {e_hand}, r {r} vs {r_hand}")
    })?;
    let perfect = rmse(&target, &target).map_err(|e| e.to_string())?;
    ensure(perfect == 0.0, || format!("RMSE of identical traces {perfect}"))?;
    Ok(format!(
        "affine r = 1 within {worst_r:.0e}, offset RMSE = |b| within {worst_offset:.0e}, hand cases exact to 4 ulp"
    ))
}

// ------------------------------------------------------------------ A7

/// Stored CRC of every MDC1 file below `root`, keyed by relative path.
fn crc_table(root: &Path) -> BTreeMap<String, u32> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("readable run dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "mdc") {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, mdc::stored_crc(&path).expect("valid container"));
            }
        }
    }
    out
}

fn a7() -> Outcome {
    let start = Instant::now();
    let mut cfg = PipelineConfig::from_toml("seed = 9\n[data]\ntrial_duration_s = 8.0\n[train]\nmax_epochs = 3\n")
        .map_err(|e| e.to_string())?;
    cfg.model.tcn.width = 16;
    let mut tables = Vec::new();
    for jobs in [1, 2] {
        let root = scratch();
        pipeline::run_all(&cfg, &root, jobs, Precision::F32).map_err(|e| e.to_string())?;
        let train = RunDirs::under(&root).train;
        let metrics = std::fs::read_to_string(train.join(METRICS_TXT)).map_err(|e| e.to_string())?;
        let ckpt = std::fs::read(train.join(pipeline::CHECKPOINT)).map_err(|e| e.to_string())?;
        tables.push((metrics, ckpt, crc_table(&root)));
    }
    let (a, b) = (&tables[0], &tables[1]);
    ensure(a.0 == b.0, || format!("metric tables differ:\n{}\n{}", a.0, b.0))?;
    ensure(a.1 == b.1, || "checkpoints differ".into())?;
    ensure(a.2 == b.2, || {
        let diff: Vec<_> = a.2.iter().filter(|(k, v)| b.2.get(*k) != Some(v)).map(|(k, _)| k.clone()).collect();
        format!("CRC mismatch in {diff:?}")
    })?;
    let mean = a.0.lines().find(|l| l.starts_with("mean")).unwrap_or("").split_whitespace().collect::<Vec<_>>().join(" ");
    Ok(format!(
        "two runs agree: metrics ({mean}), checkpoint bytes, {} MDC1 CRCs ({:.1} s)",
        a.2.len(),
        start.elapsed().as_secs_f64()
    ))
}

// ------------------------------------------------------------------ A8

/// Bilinear-transformed Butterworth magnitude, `|H|² = 1 / (1 + (Ω/Ωc)^{±2n})`
/// with prewarped `Ω = tan(πf/fs)`.
fn butterworth_oracle_db(kind: FilterKind, order: usize, fc: f64, f: f64, fs: f64) -> f64 {
    let ratio = (PI * f / fs).tan() / (PI * fc / fs).tan();
    let x = match kind {
        FilterKind::Lowpass => ratio,
        FilterKind::Highpass => 1.0 / ratio,
    };
    -10.0 * (1.0 + x.powi(2 * order as i32)).log10()
}

/// Steady-state gain of `filter` on a unit sinusoid, dB.
fn measured_gain_db(filter: &SosFilter, f: f64, fs: f64) -> f64 {
    let n = (4.0 * fs) as usize;
    let mut x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
    filter.apply_in_place(&mut x);
    let tail = &x[n / 2..];
    let rms = (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt();
    20.0 * (rms * 2f64.sqrt()).log10()
}

fn a8() -> Outcome {
    let fs = 2048.0;
    // Notch: the analytic zero pair sits on the unit circle at f0.
    let notch = SosFilter::new(vec![notch_section(60.0, 35.0, fs).map_err(|e| e.to_string())?]).map_err(|e| e.to_string())?;
    let notch_db = notch.gain_db(60.0, fs);
    let notch_measured = measured_gain_db(&notch, 60.0, fs);
    ensure(notch_db <= -40.0 && notch_measured <= -40.0, || {
        format!("notch at 60 Hz: response {notch_db:.1} dB, measured {notch_measured:.1} dB")
    })?;

    let hp = butterworth_sections(FilterKind::Highpass, 6, 20.0, fs).map_err(|e| e.to_string())?;
    let lp = butterworth_sections(FilterKind::Lowpass, 4, 10.0, fs).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for i in 1..200 {
        let f = i as f64 * 5.0;
        for (filter, kind, order, fc) in [(&hp, FilterKind::Highpass, 6, 20.0), (&lp, FilterKind::Lowpass, 4, 10.0)] {
            let oracle = butterworth_oracle_db(kind, order, fc, f, fs);
            if oracle > -200.0 {
                worst = worst.max((filter.gain_db(f, fs) - oracle).abs());
            }
        }
    }
    ensure(worst < 1e-6, || format!("designed response deviates from the analytic oracle by {worst:.1e} dB"))?;

    // Half-power frequency of the designed high-pass, by bisection.
    let half_power = -10.0 * 2f64.log10();
    let (mut lo, mut hi) = (10.0, 40.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if hp.gain_db(mid, fs) < half_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let f3 = 0.5 * (lo + hi);
    ensure((f3 - 20.0).abs() <= 0.02 * 20.0, || format!("high-pass -3 dB point at {f3:.3} Hz"))?;

    let lp100 = lp.gain_db(100.0, fs);
    let lp100_measured = measured_gain_db(&lp, 100.0, fs);
    ensure(lp100 <= -60.0 && lp100_measured <= -60.0, || {
        format!("low-pass at 100 Hz: response {lp100:.1} dB, measured {lp100_measured:.1} dB")
    })?;
    Ok(format!(
        "notch {notch_db:.0} dB at 60 Hz; HP -3 dB at {f3:.3} Hz; LP {lp100:.1} dB at 100 Hz; oracle match {worst:.0e} dB"
    ))
}

// ------------------------------------------------------------------ driver

fn run_guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let selected: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.len() == 2 && a.starts_with('A'))
        .collect();
    let wanted = |id: &str| selected.is_empty() || selected.iter().any(|s| s == id);

    let mut shared = None;
    let mut outcomes: Vec<(&str, &str, Outcome)> = Vec::new();
    let mut record = |id: &'static str, title: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if wanted(id) {
            let o = run_guarded(f);
            let line = match &o {
                Ok(msg) => format!("{id} PASS {title}: {msg}"),
                Err(msg) => format!("{id} FAIL {title}: {msg}"),
            };
            println!("{line}");
            outcomes.push((id, title, o));
        }
    };
    record("A1", "gradient checks", &mut a1);
    record("A2", "causality", &mut a2);
    record("A3", "decomposition recovery", &mut || a3(&mut shared));
    record("A4", "end-to-end decoding", &mut || a4(shared.take()));
    record("A5", "architecture arithmetic", &mut a5);
    record("A6", "metric identities", &mut a6);
    record("A7", "determinism", &mut a7);
    record("A8", "DSP responses", &mut a8);

    println!("\nacceptance summary");
    for (id, title, o) in &outcomes {
        println!("{id} {} {title}", if o.is_ok() { "PASS" } else { "FAIL" });
    }
    if outcomes.iter().any(|(_, _, o)| o.is_err()) {
        std::process::exit(1);
    }
}

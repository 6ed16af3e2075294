//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::Path;
use std::process::Command;

use flowopt::dataset::{build_dataset, dataset_pso_config, default_schedules, Role};
use flowopt::ep::{run_ep, standard_cauchy, EpConfig, Mutation};
use flowopt::mlp::{train, MlpModel, TrainConfig};
use flowopt::search::{is_stagnant, rng_from_seed};
use flowopt::{
    delay_msec, kkt_optimal_flow, mean_link_utilization, run_trials, FlowVector, Method,
    NetworkTopology, SearchObjective, TerminationRule, TrialSummary,
};
use rand::Rng;

/// Gradients smaller than this are compared absolutely: central differences
/// with h = 1e-5 on an O(1) loss carry about 1e-11 of round-off.
const FD_NOISE_FLOOR: f64 = 1e-6;

const SEEDS: usize = 10;
const HEADLINE_LOAD: f64 = 0.60 * 916.0;

/// Load, printed delay, printed M.L.U and rounded optimal flows.
const REFERENCE_ROWS: [(f64, f64, f64, [f64; 13]); 10] = [
    (
        275.0,
        17.0,
        0.2408,
        [
            11., 11., 40., 11., 11., 114., 11., 11., 11., 11., 11., 11., 11.,
        ],
    ),
    (
        335.0,
        19.4,
        0.3107,
        [
            15., 15., 46., 15., 15., 123., 16., 15., 15., 15., 15., 15., 15.,
        ],
    ),
    (
        395.0,
        22.2,
        0.3822,
        [
            20., 19., 51., 20., 19., 131., 19., 20., 19., 19., 19., 19., 19.,
        ],
    ),
    (
        455.0,
        25.5,
        0.4531,
        [
            23., 23., 57., 24., 24., 139., 24., 24., 24., 23., 24., 23., 23.,
        ],
    ),
    (
        515.0,
        29.6,
        0.5255,
        [
            28., 27., 62., 28., 28., 146., 28., 28., 28., 28., 28., 28., 28.,
        ],
    ),
    (
        575.0,
        35.2,
        0.5954,
        [
            32., 32., 68., 32., 32., 155., 32., 32., 32., 32., 32., 32., 32.,
        ],
    ),
    (
        635.0,
        43.1,
        0.6663,
        [
            36., 36., 74., 36., 36., 163., 37., 37., 36., 36., 36., 36., 36.,
        ],
    ),
    (
        695.0,
        55.1,
        0.7378,
        [
            41., 41., 79., 40., 40., 171., 40., 40., 41., 40., 41., 40., 41.,
        ],
    ),
    (
        755.0,
        76.1,
        0.8097,
        [
            44., 45., 85., 45., 45., 178., 45., 45., 44., 44., 44., 45., 45.,
        ],
    ),
    (
        815.0,
        121.8,
        0.8812,
        [
            49., 49., 90., 49., 49., 186., 49., 49., 49., 49., 49., 49., 49.,
        ],
    ),
];

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

fn net() -> NetworkTopology {
    NetworkTopology::reference_network()
}

fn oracle_delay(load: f64) -> f64 {
    let t = net();
    delay_msec(&t, &kkt_optimal_flow(&t, load).unwrap()).unwrap()
}

fn delay_formula() -> Verdict {
    let t = net();
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for (load, delay, mlu, flows) in REFERENCE_ROWS {
        let f = FlowVector::new(flows.to_vec());
        let d = delay_msec(&t, &f).unwrap();
        let m = mean_link_utilization(&t, &f).unwrap();
        worst = worst.max((d - delay).abs());
        if (d - delay).abs() > 0.2 || (m - mlu).abs() > 0.002 {
            bad.push(format!(
                "{load}: delay {d:.3} vs {delay}, mlu {m:.4} vs {mlu} (flows sum {})",
                f.total()
            ));
        }
    }
    if bad.is_empty() {
        verdict(true, format!("all 10 rows, worst delay gap {worst:.3} ms"))
    } else {
        verdict(
            false,
            format!("{}/10 rows off: {}", bad.len(), bad.join("; ")),
        )
    }
}

fn oracle_agreement() -> Verdict {
    let t = net();
    let mut worst: f64 = 0.0;
    for (load, _, _, flows) in REFERENCE_ROWS
        .iter()
        .filter(|r| r.0 == 275.0 || r.0 == 515.0)
    {
        let f = kkt_optimal_flow(&t, *load).unwrap();
        for (a, b) in f.flows().iter().zip(flows) {
            worst = worst.max((a.round() - b).abs());
        }
    }
    verdict(
        worst <= 1.0,
        format!("largest rounded gap {worst} kbps at loads 275, 515"),
    )
}

fn trials(method: Method) -> TrialSummary {
    let obj = SearchObjective::new(net(), HEADLINE_LOAD).unwrap();
    run_trials(&method, &obj, SEEDS, 1).unwrap()
}

fn headline(chi: &TrialSummary, plain: &TrialSummary) -> Verdict {
    let in_band = (32.4..=33.1).contains(&chi.mean_delay_msec);
    let faster = chi.mean_generations < plain.mean_generations;
    let capped = chi.mean_generations <= 300.0;
    verdict(
        in_band && faster && capped && chi.failures() == 0,
        format!(
            "pso-chi mean delay {:.3} ms, mean gens {:.1} vs pso {:.1}",
            chi.mean_delay_msec, chi.mean_generations, plain.mean_generations
        ),
    )
}

fn ranking(s: &[(Method, TrialSummary)]) -> Verdict {
    let mean = |m: Method| s.iter().find(|(k, _)| *k == m).unwrap().1.mean_delay_msec;
    let slack = 0.5;
    let chain = [
        mean(Method::PsoChi),
        mean(Method::Pso),
        mean(Method::EpHybrid),
        mean(Method::EpGauss).min(mean(Method::EpCauchy)),
    ];
    let ok = chain.windows(2).all(|w| w[0] <= w[1] + slack);
    let listing = s
        .iter()
        .map(|(m, t)| format!("{m} {:.3}", t.mean_delay_msec))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(ok, listing)
}

fn ep_convergence() -> Verdict {
    let obj = SearchObjective::new(net(), HEADLINE_LOAD).unwrap();
    let best = oracle_delay(HEADLINE_LOAD);
    let mut ok = true;
    let mut parts = Vec::new();
    for variant in [Mutation::Gaussian, Mutation::Cauchy, Mutation::Hybrid] {
        let mut cfg = EpConfig::standard(variant);
        cfg.termination.max_generations = 1000;
        let hits = (1..=SEEDS as u64)
            .filter(|&seed| {
                let r = run_ep(&cfg, &obj, seed).unwrap();
                r.generations <= 1000 && (r.best_delay_msec - best) / best <= 0.05
            })
            .count();
        ok &= hits >= 8;
        parts.push(format!("{variant} {hits}/10"));
    }
    verdict(ok, parts.join(", "))
}

fn gradient_check() -> Verdict {
    let t = net();
    let mut rng = rng_from_seed(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = MlpModel::random(&t, 7, (-0.5, 0.5), &mut rng);
        let x: f64 = rng.gen_range(0.0..1.0);
        let target: Vec<f64> = (0..13).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g = m.gradient(x, &target);
        let analytic: Vec<f64> = g
            .hidden
            .iter()
            .flat_map(|h| h.iter().copied())
            .chain(g.output.iter().flat_map(|o| o.iter().copied()))
            .collect();
        let h = 1e-5;
        for (i, a) in analytic.iter().enumerate() {
            let mut plus = m.clone();
            *plus.weights_mut().nth(i).unwrap() += h;
            let mut minus = m.clone();
            *minus.weights_mut().nth(i).unwrap() -= h;
            let n = (plus.loss(x, &target) - minus.loss(x, &target)) / (2.0 * h);
            let scale = a.abs().max(n.abs()).max(FD_NOISE_FLOOR);
            worst = worst.max((a - n).abs() / scale);
        }
    }
    verdict(worst <= 1e-5, format!("worst relative error {worst:.2e}"))
}

fn predictor_quality() -> Verdict {
    let t = net();
    let (train_loads, test_loads) = default_schedules(&t).unwrap();
    let cfg = dataset_pso_config();
    let train_set = build_dataset(&t, &train_loads, &cfg, 1, Role::Training).unwrap();
    let test_set = build_dataset(&t, &test_loads, &cfg, 11, Role::Test).unwrap();
    let model = train(
        &t,
        &train_set.samples(),
        &TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap()
    .model;
    let mut within = 0;
    let mut mlu_err = 0.0;
    for r in &test_set.rows {
        let p = FlowVector::new(model.forward(r.load_kbps));
        let d = delay_msec(&t, &p).unwrap();
        let m = mean_link_utilization(&t, &p).unwrap();
        if ((d - r.delay_msec) / r.delay_msec).abs() <= 0.10 {
            within += 1;
        }
        mlu_err += (m - r.mlu).abs();
    }
    let mlu_err = mlu_err / test_set.len() as f64;
    verdict(
        within >= 8 && mlu_err <= 0.03,
        format!("{within}/10 test delays within 10%, mean |mlu error| {mlu_err:.4}"),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_flowopt"))
        .arg("--out")
        .arg(dir)
        .args(["--seed", "3"])
        .args(args)
        .env_remove("FLOWOPT_SEED")
        .output()
        .expect("spawn flowopt");
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let steps: [&[&str]; 6] = [
        &["optimize", "--load-fraction", "0.6", "--method", "pso-chi"],
        &["compare", "--load-fraction", "0.6", "--trials", "3"],
        &["gen-dataset", "--paper-rounding"],
        &["train", "--epochs", "2000"],
        &["predict", "--load", "500"],
        &["eval"],
    ];
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut stdout = Vec::new();
        let mut files = Vec::new();
        for args in steps {
            stdout.push(run_cli(dir.path(), args));
            files.push(snapshot(dir.path()));
        }
        (stdout, files)
    };
    let (a, b) = (run(), run());
    let differing: Vec<&str> = steps
        .iter()
        .enumerate()
        .filter(|(i, _)| a.0[*i] != b.0[*i] || a.1[*i] != b.1[*i])
        .map(|(_, s)| s[0])
        .collect();
    let files = a.1.last().map_or(0, |f| f.len());
    if differing.is_empty() {
        verdict(
            true,
            format!("6 subcommands, {files} output files identical"),
        )
    } else {
        verdict(
            false,
            format!("outputs differ for {}", differing.join(", ")),
        )
    }
}

fn property_suites() -> Verdict {
    let mut failed = Vec::new();
    let mut rng = rng_from_seed(9);

    // Best-so-far never increases.
    let obj = SearchObjective::new(net(), 450.0).unwrap();
    for m in Method::SEARCH {
        let r = m.run(&obj, 2).unwrap();
        if r.trace
            .windows(2)
            .any(|w| w[1].best_fitness > w[0].best_fitness)
        {
            failed.push(format!("monotone best ({m})"));
        }
    }

    // Clamping is idempotent.
    for _ in 0..1000 {
        let raw: Vec<f64> = (0..13).map(|_| rng.gen_range(-100.0..300.0)).collect();
        let once = obj.clamped(&raw);
        if obj.clamped(&once) != once {
            failed.push("clamp idempotence".into());
            break;
        }
    }

    // Stagnation fires only after a full window of small changes.
    let rule = TerminationRule::default();
    let flat = vec![1.0; 21];
    let short = vec![1.0; 20];
    let mut moved = flat.clone();
    moved[1] = 1.0 + 1e-7;
    if !is_stagnant(&flat, &rule) || is_stagnant(&short, &rule) || is_stagnant(&moved, &rule) {
        failed.push("stagnation rule".into());
    }

    // Cauchy tails.
    let n = 1_000_000;
    let mut abs: Vec<f64> = (0..n).map(|_| standard_cauchy(&mut rng).abs()).collect();
    let tail = abs.iter().filter(|&&c| c > 10.0).count() as f64 / n as f64;
    let expected = 1.0 - 2.0 * 10f64.atan() / std::f64::consts::PI;
    let (_, median, _) = abs.select_nth_unstable_by(n / 2, |a, b| a.total_cmp(b));
    if (tail - expected).abs() > 0.002 || (*median - 1.0).abs() > 0.02 {
        failed.push(format!("cauchy tails ({tail:.4}, median {median:.4})"));
    }

    // Marginal delays equalize on active links.
    for _ in 0..200 {
        let caps: Vec<f64> = (0..rng.gen_range(2..12))
            .map(|_| rng.gen_range(10.0..300.0))
            .collect();
        let t = NetworkTopology::from_capacities(&caps).unwrap();
        let f = kkt_optimal_flow(&t, rng.gen_range(0.02..0.97) * t.total_capacity()).unwrap();
        let marg: Vec<f64> = f
            .flows()
            .iter()
            .zip(&caps)
            .filter(|(f, _)| **f > 0.0)
            .map(|(f, c)| c / (c - f).powi(2))
            .collect();
        let max = marg.iter().cloned().fold(f64::MIN, f64::max);
        let min = marg.iter().cloned().fold(f64::MAX, f64::min);
        if (max - min) / max > 1e-6 {
            failed.push("marginal equalization".into());
            break;
        }
    }

    if failed.is_empty() {
        verdict(
            true,
            "monotone best, clamping, stagnation, cauchy tails, marginal equalization",
        )
    } else {
        verdict(false, failed.join(", "))
    }
}

fn main() {
    let summaries: Vec<(Method, TrialSummary)> =
        Method::SEARCH.iter().map(|&m| (m, trials(m))).collect();
    let get = |m: Method| &summaries.iter().find(|(k, _)| *k == m).unwrap().1;

    let results = [
        ("delay formula on reference rows", delay_formula()),
        ("oracle matches reference flows", oracle_agreement()),
        (
            "pso-chi headline run",
            headline(get(Method::PsoChi), get(Method::Pso)),
        ),
        ("method ranking", ranking(&summaries)),
        ("ep convergence", ep_convergence()),
        ("backprop gradient check", gradient_check()),
        ("predictor quality", predictor_quality()),
        ("cli determinism", determinism()),
        ("property suites", property_suites()),
    ];
    let mut passed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{}] {name}: {}", i + 1, v.detail);
        passed += v.pass as usize;
    }
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

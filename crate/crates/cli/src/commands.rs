use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use flowopt::dataset::{
    build_dataset, check_disjoint, dataset_pso_config, default_schedules, read_dataset,
    write_dataset, write_dataset_rounded_to, Dataset, Role,
};
use flowopt::mlp::{load_model, save_model, train, MlpModel, TrainConfig};
use flowopt::search::write_trace_csv;
use flowopt::{
    delay_msec, mean_link_utilization, parse_topology, run_trials, FlowVector, Method,
    NetworkTopology, SearchObjective,
};

use crate::exit::Failure;
use crate::{ensure_dir, Cli, Command, LoadArg};

type Outcome = Result<(), Failure>;

pub fn run(cli: &Cli) -> Outcome {
    let topology = load_topology(cli)?;
    ensure_dir(&cli.out)?;
    match &cli.command {
        Command::Optimize { load, method } => optimize(cli, &topology, load, *method),
        Command::Compare {
            load,
            trials,
            method,
        } => compare(cli, &topology, load, *trials, method),
        Command::GenDataset { rounded } => gen_dataset(cli, &topology, *rounded),
        Command::Train {
            dataset,
            model,
            epochs,
            lr,
            momentum,
            hidden,
        } => {
            let config = TrainConfig {
                hidden: *hidden,
                learning_rate: *lr,
                momentum: *momentum,
                max_epochs: *epochs,
                seed: cli.seed,
                ..TrainConfig::default()
            };
            cmd_train(
                &topology,
                &cli.or_out(dataset, "train.csv"),
                &cli.or_out(model, "model.txt"),
                &cli.out_path("learning_curve.csv"),
                &config,
            )
        }
        Command::Predict {
            load,
            model,
            renormalize,
        } => predict(
            cli,
            &topology,
            load,
            &cli.or_out(model, "model.txt"),
            *renormalize,
        ),
        Command::Eval { model, dataset } => eval(
            cli,
            &topology,
            &cli.or_out(model, "model.txt"),
            &cli.or_out(dataset, "test.csv"),
        ),
    }
}

fn load_topology(cli: &Cli) -> Result<NetworkTopology, Failure> {
    match &cli.topology {
        None => Ok(NetworkTopology::reference_network()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok(parse_topology(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
    }
}

fn resolve_load(topology: &NetworkTopology, arg: &LoadArg) -> Result<f64, Failure> {
    let total = topology.total_capacity();
    let load = match (arg.load, arg.load_fraction) {
        (Some(l), None) => l,
        (None, Some(f)) => f * total,
        _ => {
            return Err(Failure::usage(anyhow!(
                "give exactly one of --load, --load-fraction"
            )))
        }
    };
    if !(load > 0.0 && load < total) {
        return Err(Failure::input(anyhow!(
            "load {load} kbps is outside (0, {total}) for this topology"
        )));
    }
    Ok(load)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn flow_header(prefix: &str, n: usize) -> String {
    join((1..=n).map(|j| format!("{prefix}{j}")))
}

fn optimize(cli: &Cli, topology: &NetworkTopology, load: &LoadArg, method: Method) -> Outcome {
    let load = resolve_load(topology, load)?;
    let obj = SearchObjective::new(topology.clone(), load)?;
    let result = method.run(&obj, cli.seed)?;
    let mlu = mean_link_utilization(topology, &result.best_flow)?;
    if !result.converged {
        log::warn!("{method} stopped at the generation limit without stagnating");
    }

    let mut w = create(&cli.out_path("result.csv"))?;
    writeln!(
        w,
        "method,load,seed,delay_msec,mlu,generations,converged,residual,fitness,time_sec,{}",
        flow_header("f", topology.link_count())
    )?;
    let time = if cli.timing {
        result.wall_time_sec().to_string()
    } else {
        String::new()
    };
    writeln!(
        w,
        "{method},{load},{},{},{mlu},{},{},{},{},{time},{}",
        cli.seed,
        result.best_delay_msec,
        result.generations,
        result.converged,
        result.constraint_residual,
        result.best_fitness,
        join(result.best_flow.flows())
    )?;
    w.flush()?;
    let mut t = create(&cli.out_path("trace.csv"))?;
    write_trace_csv(&mut t, &result.trace)?;
    t.flush()?;

    outln!("method      {method}");
    outln!("load        {load} kbps");
    outln!("delay       {:.4} msec", result.best_delay_msec);
    outln!("mlu         {mlu:.4}");
    outln!("generations {}", result.generations);
    outln!(
        "flows       {}",
        result
            .best_flow
            .flows()
            .iter()
            .map(|f| format!("{f:.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}

fn compare(
    cli: &Cli,
    topology: &NetworkTopology,
    load: &LoadArg,
    trials: usize,
    methods: &[Method],
) -> Outcome {
    let load = resolve_load(topology, load)?;
    if trials < 1 {
        return Err(Failure::usage(anyhow!("--trials must be at least 1")));
    }
    let methods: Vec<Method> = if methods.is_empty() {
        Method::SEARCH.to_vec()
    } else {
        methods.to_vec()
    };
    let obj = SearchObjective::new(topology.clone(), load)?;
    let mut w = create(&cli.out_path("compare.csv"))?;
    writeln!(w, "method,trial,generations,time_sec,delay_msec,residual")?;
    outln!(
        "{:<10} {:>10} {:>12} {:>8}",
        "method",
        "mean gens",
        "mean delay",
        "failed"
    );
    let mut failed = 0;
    for m in methods {
        let summary = run_trials(&m, &obj, trials, cli.seed)?;
        summary.write_rows(&mut w, &format!("{m},"), cli.timing)?;
        outln!(
            "{:<10} {:>10.1} {:>12.4} {:>8}",
            m.name(),
            summary.mean_generations,
            summary.mean_delay_msec,
            summary.failures()
        );
        failed += summary.failures();
    }
    w.flush()?;
    if failed > 0 {
        return Err(Failure::numerical(anyhow!("{failed} trial(s) failed")));
    }
    Ok(())
}

fn gen_dataset(cli: &Cli, topology: &NetworkTopology, rounded: bool) -> Outcome {
    let (train_loads, test_loads) = default_schedules(topology)?;
    let config = dataset_pso_config();
    let train_set = build_dataset(topology, &train_loads, &config, cli.seed, Role::Training)?;
    let test_seed = cli.seed.wrapping_add(train_loads.len() as u64);
    let test_set = build_dataset(topology, &test_loads, &config, test_seed, Role::Test)?;
    check_disjoint(&train_set, &test_set)?;

    let links = topology.link_count();
    for (ds, name) in [(&train_set, "train"), (&test_set, "test")] {
        write_dataset(ds, links, cli.out_path(&format!("{name}.csv")))?;
        if rounded {
            let mut w = create(&cli.out_path(&format!("{name}_rounded.csv")))?;
            write_dataset_rounded_to(ds, links, &mut w)?;
            w.flush()?;
        }
        outln!("{name}: {} rows", ds.len());
        for r in &ds.rows {
            outln!(
                "  {:>6.0} {:>8.2} {:.4} {:>5}",
                r.load_kbps,
                r.delay_msec,
                r.mlu,
                r.generations
            );
        }
    }
    let flagged: Vec<f64> = [&train_set, &test_set]
        .iter()
        .flat_map(|ds| ds.flagged.iter().map(|&i| ds.rows[i].load_kbps))
        .collect();
    if !flagged.is_empty() {
        return Err(Failure::numerical(anyhow!(
            "optimizer did not converge at loads {flagged:?}"
        )));
    }
    Ok(())
}

fn read_checked(path: &Path, role: Role, topology: &NetworkTopology) -> Result<Dataset, Failure> {
    let ds = read_dataset(path, role).with_context(|| format!("reading {}", path.display()))?;
    ds.check_topology(topology)
        .with_context(|| format!("{} does not match the topology", path.display()))?;
    Ok(ds)
}

fn load_checked(path: &Path, topology: &NetworkTopology) -> Result<MlpModel, Failure> {
    let model = load_model(path).with_context(|| format!("reading {}", path.display()))?;
    model
        .check_topology(topology)
        .with_context(|| format!("{} does not match the topology", path.display()))?;
    Ok(model)
}

fn cmd_train(
    topology: &NetworkTopology,
    dataset: &Path,
    model_path: &Path,
    curve_path: &Path,
    config: &TrainConfig,
) -> Outcome {
    let ds = read_checked(dataset, Role::Training, topology)?;
    let outcome = train(topology, &ds.samples(), config)?;
    save_model(&outcome.model, model_path)
        .with_context(|| format!("writing {}", model_path.display()))?;
    let mut w = create(curve_path)?;
    writeln!(w, "epoch,mse")?;
    writeln!(w, "0,{}", outcome.initial_mse)?;
    for (i, mse) in outcome.epoch_mse.iter().enumerate() {
        writeln!(w, "{},{mse}", i + 1)?;
    }
    w.flush()?;
    outln!(
        "trained on {} rows for {} epochs: mse {:.6} -> {:.6}",
        ds.len(),
        config.max_epochs,
        outcome.initial_mse,
        outcome.epoch_mse.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn predict(
    cli: &Cli,
    topology: &NetworkTopology,
    load: &LoadArg,
    model_path: &Path,
    renormalize: bool,
) -> Outcome {
    let load = resolve_load(topology, load)?;
    let model = load_checked(model_path, topology)?;
    let flows = FlowVector::new(model.predict(load, renormalize));
    let delay = delay_msec(topology, &flows)?;
    let mlu = mean_link_utilization(topology, &flows)?;
    let mut w = create(&cli.out_path("prediction.csv"))?;
    writeln!(
        w,
        "load,delay_msec,mlu,flow_sum,{}",
        flow_header("f", topology.link_count())
    )?;
    writeln!(
        w,
        "{load},{delay},{mlu},{},{}",
        flows.total(),
        join(flows.flows())
    )?;
    w.flush()?;
    outln!("load  {load} kbps");
    outln!("delay {delay:.4} msec");
    outln!("mlu   {mlu:.4}");
    outln!("sum   {:.2} kbps", flows.total());
    outln!(
        "flows {}",
        flows
            .flows()
            .iter()
            .map(|f| format!("{f:.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}

fn eval(cli: &Cli, topology: &NetworkTopology, model_path: &Path, dataset: &Path) -> Outcome {
    let model = load_checked(model_path, topology)?;
    let ds = read_checked(dataset, Role::Test, topology)?;
    let n = topology.link_count();

    let mut table = create(&cli.out_path("eval.csv"))?;
    writeln!(
        table,
        "load,optimal_delay_msec,predicted_delay_msec,delay_rel_error,optimal_mlu,predicted_mlu,mlu_abs_error,flow_sum,{}",
        flow_header("f", n)
    )?;
    let mut delay_plot = create(&cli.out_path("plot_delay.csv"))?;
    writeln!(delay_plot, "load,optimal,predicted")?;
    let mut mlu_plot = create(&cli.out_path("plot_mlu.csv"))?;
    writeln!(mlu_plot, "load,optimal,predicted")?;

    let mut within = 0;
    let mut mlu_err = 0.0;
    outln!(
        "{:>6} {:>10} {:>10} {:>8} {:>8}",
        "load",
        "opt delay",
        "pred delay",
        "opt mlu",
        "pred mlu"
    );
    for r in &ds.rows {
        let optimal = FlowVector::new(r.flows.clone());
        let opt_delay = delay_msec(topology, &optimal)?;
        let opt_mlu = mean_link_utilization(topology, &optimal)?;
        let predicted = FlowVector::new(model.forward(r.load_kbps));
        let pred_delay = delay_msec(topology, &predicted)?;
        let pred_mlu = mean_link_utilization(topology, &predicted)?;
        let rel = (pred_delay - opt_delay) / opt_delay;
        let abs_mlu = (pred_mlu - opt_mlu).abs();
        if rel.abs() <= 0.1 {
            within += 1;
        }
        mlu_err += abs_mlu;
        writeln!(
            table,
            "{},{opt_delay},{pred_delay},{rel},{opt_mlu},{pred_mlu},{abs_mlu},{},{}",
            r.load_kbps,
            predicted.total(),
            join(predicted.flows())
        )?;
        writeln!(delay_plot, "{},{opt_delay},{pred_delay}", r.load_kbps)?;
        writeln!(mlu_plot, "{},{opt_mlu},{pred_mlu}", r.load_kbps)?;
        outln!(
            "{:>6.0} {:>10.2} {:>10.2} {:>8.4} {:>8.4}",
            r.load_kbps,
            opt_delay,
            pred_delay,
            opt_mlu,
            pred_mlu
        );
    }
    table.flush()?;
    delay_plot.flush()?;
    mlu_plot.flush()?;
    if !ds.is_empty() {
        outln!(
            "delay within 10%: {within}/{}   mean |mlu error|: {:.4}",
            ds.len(),
            mlu_err / ds.len() as f64
        );
    }
    Ok(())
}

use std::time::Instant;

use anyhow::Result;
use nnreach::closed_loop::{random_simulations, reach_nncs, verify, Flowpipe, LoadedRun, RunConfig, SafetySpec, Verdict};
use nnreach::reach_nn::{reach_mlp, simulate, uniform_partition_mlp, ReachNnResult, ReachOptions};
use nnreach::{Error, IntervalBox, MlpNetwork};
use serde_json::json;

use crate::cli::{Common, LoopArgs, NnArgs, SimulateArgs, VerifyArgs};
use crate::output::{box_fields, indexed_bounds_header, interval_fields, named_bounds_header, num, OutDir};

pub const EXIT_OK: u8 = 0;
pub const EXIT_UNKNOWN: u8 = 1;

fn manifest(command: &str, common: &Common, inputs: serde_json::Value, parameters: serde_json::Value) -> serde_json::Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": inputs,
        "out": common.out.display().to_string(),
        "parameters": parameters,
    })
}

struct NnRun {
    net: MlpNetwork,
    input: IntervalBox,
    opts: ReachOptions,
}

fn load_nn(a: &NnArgs) -> Result<NnRun> {
    let net = MlpNetwork::load(&a.net)?;
    let input: IntervalBox = a.input.parse()?;
    if input.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            found: input.dim(),
        }
        .into());
    }
    let opts = ReachOptions {
        tolerance: a.eps,
        n_sims: a.sims,
        seed: a.seed,
        threads: a.common.threads.unwrap_or(1),
    };
    if !(opts.tolerance > 0.0 && opts.tolerance.is_finite()) {
        return Err(Error::InvalidTolerance(opts.tolerance).into());
    }
    if opts.threads == 0 {
        return Err(Error::InvalidArgument("--threads must be at least 1".into()).into());
    }
    Ok(NnRun { net, input, opts })
}

fn nn_manifest(command: &str, a: &NnArgs, run: &NnRun) -> serde_json::Value {
    manifest(
        command,
        &a.common,
        json!({ "net": a.net.display().to_string() }),
        json!({
            "input": run.input,
            "eps": run.opts.tolerance,
            "sims": run.opts.n_sims,
            "seed": run.opts.seed,
            "threads": run.opts.threads,
        }),
    )
}

fn write_boxes(out: &OutDir, name: &str, boxes: &[IntervalBox], dim: usize) -> Result<()> {
    out.csv(name, &indexed_bounds_header(dim), boxes.iter().map(box_fields))
}

fn nn_stats(r: &ReachNnResult) -> serde_json::Value {
    json!({
        "interval_count": r.stats.interval_count,
        "bisection_count": r.stats.bisection_count,
        "hull": r.hull,
        "envelope": r.envelope,
    })
}

pub fn reach_nn(a: &NnArgs) -> Result<u8> {
    let run = load_nn(a)?;
    let res = reach_mlp(&run.net, &run.input, &run.opts)?;
    let sims = simulate(&run.net, &run.input, run.opts.n_sims, run.opts.seed)?;

    let out = OutDir::create(&a.common.out)?;
    let m = run.net.output_dim();
    write_boxes(&out, "boxes.csv", &res.boxes, m)?;
    write_boxes(&out, "hull.csv", std::slice::from_ref(&res.hull), m)?;
    let header: Vec<String> = (1..=m).map(|i| format!("y_{i}")).collect();
    out.csv("sims.csv", &header, sims.iter().map(|p| p.iter().map(|&v| num(v)).collect()))?;
    out.json("stats.json", &nn_stats(&res))?;
    out.json("manifest.json", &nn_manifest("reach-nn", a, &run))?;
    if a.common.timing {
        out.json("timing.json", &json!({ "elapsed_seconds": res.stats.elapsed_seconds }))?;
    }
    println!(
        "reach-nn: {} intervals, {} bisections, hull {} ({:.3} s)",
        res.stats.interval_count, res.stats.bisection_count, res.hull, res.stats.elapsed_seconds
    );
    Ok(EXIT_OK)
}

pub fn compare_partition(a: &NnArgs) -> Result<u8> {
    let run = load_nn(a)?;
    let guided = reach_mlp(&run.net, &run.input, &run.opts)?;
    let uniform = uniform_partition_mlp(&run.net, &run.input, run.opts.tolerance, run.opts.threads)?;
    let ratio = guided.stats.interval_count as f64 / uniform.stats.interval_count as f64;
    let time_ratio = guided.stats.elapsed_seconds / uniform.stats.elapsed_seconds;

    let out = OutDir::create(&a.common.out)?;
    let m = run.net.output_dim();
    write_boxes(&out, "guided_boxes.csv", &guided.boxes, m)?;
    write_boxes(&out, "uniform_boxes.csv", &uniform.boxes, m)?;
    out.json(
        "stats.json",
        &json!({
            "guided": nn_stats(&guided),
            "uniform": {
                "interval_count": uniform.stats.interval_count,
                "hull": uniform.hull,
            },
            "ratio_intervals": ratio,
            "hulls_equal": guided.hull == uniform.hull,
        }),
    )?;
    out.json("manifest.json", &nn_manifest("compare-partition", a, &run))?;
    if a.common.timing {
        out.json(
            "timing.json",
            &json!({
                "guided_seconds": guided.stats.elapsed_seconds,
                "uniform_seconds": uniform.stats.elapsed_seconds,
                "ratio_elapsed": time_ratio,
            }),
        )?;
    }
    println!(
        "compare-partition: {} vs {} intervals (ratio {:.4}), {:.3} s vs {:.3} s (ratio {:.4})",
        guided.stats.interval_count,
        uniform.stats.interval_count,
        ratio,
        guided.stats.elapsed_seconds,
        uniform.stats.elapsed_seconds,
        time_ratio
    );
    Ok(EXIT_OK)
}

/// Reads the run file, applies flag overrides and loads everything.
fn load_run(a: &LoopArgs) -> Result<LoadedRun> {
    let mut cfg = RunConfig::read(&a.config)?;
    if let Some(p) = &a.model {
        cfg.model = p.clone();
    }
    if let Some(p) = &a.net {
        cfg.network = p.clone();
    }
    if let Some(x0) = &a.input {
        cfg.x0 = x0.parse()?;
    }
    let c = &mut cfg.closed_loop;
    if let Some(v) = a.eps {
        c.epsilon = v;
    }
    if let Some(v) = a.sims {
        c.n_sims = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.substeps {
        c.substeps = v;
    }
    if let Some(v) = a.common.threads {
        c.threads = v;
    }
    if c.threads == 0 {
        return Err(Error::InvalidArgument("--threads must be at least 1".into()).into());
    }
    Ok(cfg.into_loaded()?)
}

fn loop_manifest(command: &str, a: &LoopArgs, run: &LoadedRun, extra: serde_json::Value) -> serde_json::Value {
    let c = &run.config;
    let mut params = json!({
        "x0": c.x0,
        "config": c.closed_loop,
        "spec": c.spec,
    });
    if let (Some(obj), Some(more)) = (params.as_object_mut(), extra.as_object()) {
        for (k, v) in more {
            obj.insert(k.clone(), v.clone());
        }
    }
    manifest(
        command,
        &a.common,
        json!({
            "config": a.config.display().to_string(),
            "model": c.model.display().to_string(),
            "net": c.network.display().to_string(),
        }),
        params,
    )
}

fn write_flowpipe(out: &OutDir, run: &LoadedRun, fp: &Flowpipe) -> Result<()> {
    let plant = &run.plant;
    let mut header = vec!["t_lo".to_string(), "t_hi".to_string()];
    header.extend(named_bounds_header(plant.state_vars()));
    out.csv(
        "flowpipe.csv",
        &header,
        fp.segments.iter().map(|s| {
            let mut row = vec![num(s.t_lo), num(s.t_hi)];
            row.extend(box_fields(&s.states));
            row
        }),
    )?;

    let output_names: Vec<String> = plant.outputs().iter().map(|(n, _)| n.clone()).collect();
    let mut header = vec!["t_k".to_string()];
    header.extend(named_bounds_header(&output_names));
    header.extend(named_bounds_header(&run.config.closed_loop.control_outputs));
    header.push("controller_boxes".into());
    out.csv(
        "outputs.csv",
        &header,
        fp.steps.iter().map(|s| {
            let mut row = vec![num(s.t_k)];
            for name in &output_names {
                row.extend(interval_fields(&s.outputs[name]));
            }
            row.extend(box_fields(&s.control_hull));
            row.push(s.controller_box_count.to_string());
            row
        }),
    )
}

fn per_step(fp: &Flowpipe) -> serde_json::Value {
    fp.steps
        .iter()
        .map(|s| {
            json!({
                "t_k": s.t_k,
                "outputs": s.outputs,
                "control_hull": s.control_hull,
                "controller_box_count": s.controller_box_count,
            })
        })
        .collect()
}

fn run_loop(command: &str, a: &LoopArgs, run: &LoadedRun, spec: Option<&SafetySpec>) -> Result<u8> {
    let start = Instant::now();
    let c = &run.config;
    let fp = reach_nncs(&run.plant, &run.net, &c.x0, &c.closed_loop)?;
    let steps = fp.steps.len();
    let segments = fp.segments.len();
    let out = OutDir::create(&a.common.out)?;
    write_flowpipe(&out, run, &fp)?;
    let steps_json = per_step(&fp);
    let final_state = fp.final_state.clone();

    let (verdict, violation) = match spec {
        Some(spec) => {
            let rep = verify(fp, spec, &run.plant)?;
            (Some(rep.verdict), rep.first_violation)
        }
        None => (None, None),
    };
    let elapsed = start.elapsed().as_secs_f64();
    out.json(
        "report.json",
        &json!({
            "verdict": verdict,
            "first_violation": violation,
            "steps": steps,
            "segments": segments,
            "final_state": final_state,
            "per_step": steps_json,
        }),
    )?;
    out.json("manifest.json", &loop_manifest(command, a, run, json!({ "spec": spec })))?;
    if a.common.timing {
        out.json("timing.json", &json!({ "elapsed_seconds": elapsed }))?;
    }
    let verdict_text = match verdict {
        Some(Verdict::Safe) => "Safe".to_string(),
        Some(Verdict::Unknown) => {
            let v = violation.as_ref().expect("unknown verdict carries a violation");
            format!("Unknown (constraint {} on [{}, {}])", v.constraint, v.t_lo, v.t_hi)
        }
        None => "not checked".to_string(),
    };
    println!("{command}: {steps} steps, {segments} segments, verdict {verdict_text} ({elapsed:.3} s)");
    Ok(match verdict {
        Some(Verdict::Unknown) => EXIT_UNKNOWN,
        _ => EXIT_OK,
    })
}

pub fn reach_nncs_cmd(a: &LoopArgs) -> Result<u8> {
    let run = load_run(a)?;
    let spec = run.config.spec.clone();
    run_loop("reach-nncs", a, &run, spec.as_ref())
}

pub fn verify_cmd(a: &VerifyArgs) -> Result<u8> {
    let run = load_run(&a.run)?;
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let spec: SafetySpec = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            spec.check_names(&run.plant)?;
            spec
        }
        None => run
            .config
            .spec
            .clone()
            .ok_or_else(|| Error::Validation("no safety specification: add `spec` to the configuration or pass --spec".into()))?,
    };
    run_loop("verify", &a.run, &run, Some(&spec))
}

pub fn simulate_cmd(a: &SimulateArgs) -> Result<u8> {
    let run = load_run(&a.run)?;
    let c = &run.config;
    let seed = c.closed_loop.seed;
    let trajs = random_simulations(&run.plant, &run.net, &c.x0, &c.closed_loop, a.count, seed, a.refine)?;
    let out = OutDir::create(&a.run.common.out)?;
    let mut header = vec!["trajectory".to_string(), "t".to_string()];
    header.extend(run.plant.state_vars().iter().cloned());
    out.csv(
        "trajectories.csv",
        &header,
        trajs.iter().enumerate().flat_map(|(i, tr)| {
            tr.times.iter().zip(&tr.states).map(move |(t, x)| {
                let mut row = vec![i.to_string(), num(*t)];
                row.extend(x.iter().map(|&v| num(v)));
                row
            })
        }),
    )?;
    out.json(
        "manifest.json",
        &loop_manifest("simulate", &a.run, &run, json!({ "count": a.count, "refine": a.refine })),
    )?;
    println!(
        "simulate: {} trajectories x {} points",
        trajs.len(),
        trajs.first().map_or(0, |t| t.times.len())
    );
    Ok(EXIT_OK)
}

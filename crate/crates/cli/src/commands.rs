use anyhow::anyhow;
use cbc_core::barriers::softmin_compose;
use cbc_core::control::regulation_residual;
use cbc_core::corridor::{
    bc_full, bc_full_from_evals, bc_lor, bc_uni, spectral_norm, trust_region_contains, write_corridor_log,
};
use cbc_core::geom::{clip_corridor_2d, sample_corridor, write_polygons, Aabb, Corridor, CorridorKind, Polygon};
use cbc_core::nalgebra::{DVector, Vector2};
use cbc_core::pathfollow::{
    explore, follow_path, segment_min_barrier, write_path, BarrierSource, ExploreConfig, FollowOptions, FollowRun,
    Path, PathError,
};
use cbc_core::sim::{
    run_closed_loop, write_trajectory_csv, ControlLaw, FixedGoal, SimConfig, SimError, System, Trajectory,
};
use cbc_core::world::{load_world, save_world};
use cbc_core::{BarrierFamily, CorridorParams, ExploreError, LinearPlant, UnicyclePose};
use serde_json::json;

use crate::emit::{Emitter, Kind};
use crate::scenario::{Scenario, SourceSpec, SystemKind};
use crate::Failure;

/// Result of a command that ran to completion.
pub enum Status {
    Ok,
    /// A runtime safety or liveness failure, already logged to disk.
    Violation(String),
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn io(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn planar_box(b: [f64; 4]) -> Aabb {
    Aabb::new(DVector::from_vec(vec![b[0], b[1]]), DVector::from_vec(vec![b[2], b[3]])).expect("validated bbox")
}

fn planar_state(s: &Scenario) -> Result<DVector<f64>, Failure> {
    if s.barrier_dim() != 2 {
        return Err(invalid(anyhow!("this command needs a planar scene")));
    }
    Ok(match s.system.kind {
        SystemKind::FullyActuated => s.state(),
        SystemKind::Unicycle => s.state().rows(0, 2).into_owned(),
        SystemKind::DoubleIntegrator => return Err(invalid(anyhow!("use the lor command for the double integrator"))),
    })
}

fn obstacle_rows(s: &Scenario) -> Vec<Vec<String>> {
    s.obstacles
        .iter()
        .map(|o| {
            vec![
                fmt(o.q[0]),
                fmt(o.q[1]),
                fmt(o.r.unwrap_or(s.barrier.r)),
                fmt(o.p.unwrap_or(s.barrier.p)),
            ]
        })
        .collect()
}

pub fn corridor(s: &Scenario, out: &mut Emitter) -> Result<Status, Failure> {
    let spec = s
        .corridor
        .as_ref()
        .ok_or_else(|| invalid(anyhow!("scenario has no [corridor] table")))?;
    let x = planar_state(s)?;
    let bbox = planar_box(spec.bbox);
    let base = s.params().map_err(invalid)?;
    let p_values = if spec.p_values.is_empty() {
        vec![s.barrier.p]
    } else {
        spec.p_values.clone()
    };
    let mut rows = Vec::new();
    for &p in &p_values {
        let fam = s.family(Some(p)).map_err(invalid)?;
        for &ratio in &spec.alpha_ratios {
            let params = CorridorParams::new(base.kappa, ratio * base.kappa, base.epsilon).map_err(invalid)?;
            let c = bc_full(&fam, &x, params).map_err(invalid)?;
            let poly = clip_corridor_2d(&c, &bbox).map_err(io)?;
            let stem = format!("grid/p{p}_ar{ratio}");
            out.write(
                &format!("{stem}.poly"),
                Kind::Polygons,
                &write_polygons(std::slice::from_ref(&poly)),
            )
            .map_err(io)?;
            out.write(&format!("{stem}.log"), Kind::CorridorLog, &write_corridor_log(&[c]))
                .map_err(io)?;
            let mut extra = String::new();
            if s.system.kind == SystemKind::Unicycle {
                let uni = bc_uni(&fam, &x, s.system.state[2], params).map_err(invalid)?;
                let upoly = clip_corridor_2d(&uni, &bbox).map_err(io)?;
                out.write(
                    &format!("{stem}_uni.poly"),
                    Kind::Polygons,
                    &write_polygons(std::slice::from_ref(&upoly)),
                )
                .map_err(io)?;
                extra = fmt(upoly.signed_area());
            }
            rows.push(vec![
                fmt(p),
                fmt(ratio),
                fmt(params.kappa),
                fmt(params.alpha_rate),
                poly.vertices.len().to_string(),
                fmt(poly.signed_area()),
                extra,
            ]);
        }
    }
    out.table(
        "grid.csv",
        &["p", "alpha_ratio", "kappa", "alpha", "vertices", "area", "uni_area"],
        &rows,
    )
    .map_err(io)?;
    out.table("obstacles.csv", &["qx", "qy", "r", "p"], &obstacle_rows(s))
        .map_err(io)?;

    let mut soft = Vec::new();
    if !spec.lambdas.is_empty() {
        let fam = s.base_family(None).map_err(invalid)?;
        if fam.len() < 2 {
            return Err(invalid(anyhow!("the soft-min sweep needs at least two barriers")));
        }
        let exact = bc_full(&fam, &x, base).map_err(invalid)?;
        out.write(
            "softmin/exact.poly",
            Kind::Polygons,
            &write_polygons(&[clip_corridor_2d(&exact, &bbox).map_err(io)?]),
        )
        .map_err(io)?;
        let true_min = fam.min_value(&x).map_err(invalid)?;
        let mut rows = Vec::new();
        for &lambda in &spec.lambdas {
            let mut one = BarrierFamily::empty();
            one.push(softmin_compose(&fam, lambda).map_err(invalid)?);
            let sm = one.min_value(&x).map_err(invalid)?;
            let c = bc_full(&one, &x, base).map_err(invalid)?;
            out.write(
                &format!("softmin/l{lambda}.poly"),
                Kind::Polygons,
                &write_polygons(&[clip_corridor_2d(&c, &bbox).map_err(io)?]),
            )
            .map_err(io)?;
            out.write(
                &format!("softmin/l{lambda}.log"),
                Kind::CorridorLog,
                &write_corridor_log(std::slice::from_ref(&c)),
            )
            .map_err(io)?;
            let members = sample_corridor(&c, &bbox, spec.samples, s.seed).unwrap_or_default();
            let mut unsafe_count = 0;
            let mut witness: Option<(DVector<f64>, f64)> = None;
            for g in &members {
                let h = fam.min_value(g).map_err(io)?;
                if h < 0.0 {
                    unsafe_count += 1;
                    if witness.as_ref().is_none_or(|w| h < w.1) {
                        witness = Some((g.clone(), h));
                    }
                }
            }
            let (wx, wy, wh) = match &witness {
                Some((g, h)) => (fmt(g[0]), fmt(g[1]), fmt(*h)),
                None => (String::new(), String::new(), String::new()),
            };
            soft.push(json!({
                "lambda": lambda,
                "softmin_at_state": sm,
                "true_min_at_state": true_min,
                "abs_error": (sm - true_min).abs(),
                "unsafe_members": unsafe_count,
                "witness": witness.as_ref().map(|(g, h)| json!({"g": [g[0], g[1]], "true_min": h})),
            }));
            rows.push(vec![
                fmt(lambda),
                fmt(sm),
                fmt(true_min),
                fmt((sm - true_min).abs()),
                members.len().to_string(),
                unsafe_count.to_string(),
                wx,
                wy,
                wh,
            ]);
        }
        out.table(
            "softmin.csv",
            &[
                "lambda",
                "softmin_at_state",
                "true_min_at_state",
                "abs_error",
                "samples",
                "unsafe_samples",
                "witness_x",
                "witness_y",
                "witness_true_min",
            ],
            &rows,
        )
        .map_err(io)?;
    }
    out.json(
        "summary.json",
        &json!({
            "command": "corridor",
            "scenario": s.name,
            "state": [x[0], x[1]],
            "panels": p_values.len() * spec.alpha_ratios.len(),
            "softmin": soft,
        }),
    )
    .map_err(io)?;
    Ok(Status::Ok)
}

fn follow_system(s: &Scenario) -> Result<System, Failure> {
    match s.system.kind {
        SystemKind::FullyActuated if s.system.state.len() == 2 => Ok(System::FullyActuated { dim: 2 }),
        SystemKind::Unicycle => Ok(System::Unicycle),
        _ => Err(invalid(anyhow!(
            "follow needs a planar fully actuated or unicycle system"
        ))),
    }
}

fn corridor_dumps(
    traj: &Trajectory,
    system: &System,
    fam: &BarrierFamily,
    params: CorridorParams,
    every: usize,
    half_width: f64,
) -> Result<Vec<Polygon>, Failure> {
    let mut polys = Vec::new();
    for s in traj.samples.iter().step_by(every) {
        let bx = system.barrier_state(&s.state);
        let c = bc_full_from_evals(&fam.evals(&bx).map_err(io)?, &bx, params);
        polys.push(clip_corridor_2d(&c, &Aabb::centered(&bx, half_width).map_err(io)?).map_err(io)?);
    }
    Ok(polys)
}

/// Partial trajectory and reason of a failed follow run.
fn split_follow(r: Result<FollowRun, PathError>) -> Result<(Trajectory, Option<String>, bool), Failure> {
    match r {
        Ok(run) => Ok((run.trajectory, None, run.reached)),
        Err(PathError::GoalLost { sample, trajectory }) => {
            Ok((*trajectory, Some(format!("goal lost at sample {sample}")), false))
        }
        Err(PathError::Sim(SimError::ViolationDetected {
            sample,
            barrier,
            value,
            trajectory,
        })) => Ok((
            *trajectory,
            Some(format!("barrier {barrier} reached {value:e} at sample {sample}")),
            false,
        )),
        Err(e @ (PathError::UnsafePath { .. } | PathError::NoInitialGoal | PathError::TooFewSamples(_))) => {
            Err(invalid(e))
        }
        Err(e) => Err(Failure::Runtime(e.into())),
    }
}

fn s_star_monotone(traj: &Trajectory) -> bool {
    let s: Vec<f64> = traj.samples.iter().filter_map(|x| x.s_star).collect();
    s.windows(2).all(|w| w[1] >= w[0])
}

pub fn follow(s: &Scenario, out: &mut Emitter) -> Result<Status, Failure> {
    let spec = s
        .follow
        .as_ref()
        .ok_or_else(|| invalid(anyhow!("scenario has no [follow] table")))?;
    let system = follow_system(s)?;
    let fam = s.family(None).map_err(invalid)?;
    let params = s.params().map_err(invalid)?;
    let path = Path::new(spec.path.iter().map(|p| Vector2::new(p[0], p[1])).collect()).map_err(invalid)?;
    let opts = FollowOptions {
        dt: s.sim.dt,
        t_max: s.sim.duration,
        goal_tol: spec.goal_tol,
        n_samples: spec.n_samples,
        resolution: spec.resolution,
        kappa_w: s.control.kappa_w,
        sample_and_hold: s.sim.sample_and_hold,
    };
    let x0 = s.state();
    out.write("path.txt", Kind::Path, &write_path(&path)).map_err(io)?;
    out.table("obstacles.csv", &["qx", "qy", "r", "p"], &obstacle_rows(s))
        .map_err(io)?;

    let (traj, failure, reached) = split_follow(follow_path(&system, &path, &fam, params, &x0, &opts))?;
    out.write("trajectory.csv", Kind::Trajectory, &write_trajectory_csv(&traj))
        .map_err(io)?;
    let polys = corridor_dumps(&traj, &system, &fam, params, spec.corridor_every, spec.view_half_width)?;
    out.write("corridors.poly", Kind::Polygons, &write_polygons(&polys))
        .map_err(io)?;
    let last = traj.last().map(|l| system.barrier_state(&l.state));
    let end = path.end();
    let mut summary = json!({
        "command": "follow",
        "scenario": s.name,
        "system": system.name(),
        "kappa": params.kappa,
        "alpha": params.alpha_rate,
        "epsilon": params.epsilon,
        "reached": reached,
        "failure": failure,
        "samples": traj.samples.len(),
        "min_barrier": traj.min_barrier(),
        "s_star_monotone": s_star_monotone(&traj),
        "final_error": last.map(|b| (Vector2::new(b[0], b[1]) - end).norm()),
    });

    if let Some(ratio) = spec.compare_alpha_ratio {
        let cparams = CorridorParams::new(params.kappa, ratio * params.kappa, params.epsilon).map_err(invalid)?;
        let result = follow_path(&system, &path, &fam, cparams, &x0, &opts);
        let (ctraj, cfail, creached) = match split_follow(result) {
            Ok(t) => t,
            Err(Failure::Validation(e) | Failure::Runtime(e)) => (Trajectory::default(), Some(e.to_string()), false),
        };
        let mut unsafe_rows = Vec::new();
        let mut prev: Option<DVector<f64>> = None;
        for sample in &ctraj.samples {
            if sample.goal.iter().any(|v| !v.is_finite()) || prev.as_ref() == Some(&sample.goal) {
                continue;
            }
            prev = Some(sample.goal.clone());
            let bx = system.barrier_state(&sample.state);
            let m = segment_min_barrier(&fam, &bx, &sample.goal, 101).map_err(io)?;
            if m < 0.0 {
                unsafe_rows.push(vec![
                    fmt(sample.t),
                    fmt(bx[0]),
                    fmt(bx[1]),
                    fmt(sample.goal[0]),
                    fmt(sample.goal[1]),
                    fmt(m),
                ]);
            }
        }
        out.write(
            "compare/trajectory.csv",
            Kind::Trajectory,
            &write_trajectory_csv(&ctraj),
        )
        .map_err(io)?;
        let cpolys = corridor_dumps(
            &ctraj,
            &system,
            &fam,
            cparams,
            spec.corridor_every,
            spec.view_half_width,
        )?;
        out.write("compare/corridors.poly", Kind::Polygons, &write_polygons(&cpolys))
            .map_err(io)?;
        out.table(
            "compare/unsafe_goals.csv",
            &["t", "x1", "x2", "g1", "g2", "segment_min_barrier"],
            &unsafe_rows,
        )
        .map_err(io)?;
        summary["compare"] = json!({
            "alpha": cparams.alpha_rate,
            "reached": creached,
            "failure": cfail,
            "samples": ctraj.samples.len(),
            "min_barrier": if ctraj.samples.is_empty() { None } else { Some(ctraj.min_barrier()) },
            "unsafe_goal_count": unsafe_rows.len(),
        });
    }
    out.json("summary.json", &summary).map_err(io)?;
    Ok(match failure {
        Some(f) => Status::Violation(f),
        None => Status::Ok,
    })
}

pub fn explore_cmd(s: &Scenario, out: &mut Emitter) -> Result<Status, Failure> {
    let spec = s
        .explore
        .as_ref()
        .ok_or_else(|| invalid(anyhow!("scenario has no [explore] table")))?;
    let world_path = s.resolve(&spec.world);
    let text =
        std::fs::read_to_string(&world_path).map_err(|e| invalid(anyhow!("reading {}: {e}", world_path.display())))?;
    let truth = load_world(&text).map_err(invalid)?;
    let cfg = ExploreConfig {
        beams: spec.beams,
        max_range: spec.max_range,
        radius: spec.radius,
        power: spec.power,
        params: s.params().map_err(invalid)?,
        kappa_w: s.control.kappa_w,
        dt: s.sim.dt,
        rescan_period: spec.rescan_period,
        cycle_time_max: spec.cycle_time_max,
        max_cycles: spec.max_cycles,
        source: match spec.source {
            SourceSpec::Sensor => BarrierSource::Sensor,
            SourceSpec::Map => BarrierSource::Map,
        },
        planner_weight: spec.planner_weight,
        goal_tol: spec.goal_tol,
        view_half_width: spec.view_half_width,
        stuck_cycles: 3,
    };
    let start = UnicyclePose::new(spec.start[0], spec.start[1], spec.start[2]);
    let log = match explore(&truth, &start, &cfg) {
        Ok(log) => log,
        Err(
            e @ (ExploreError::InvalidConfig(_)
            | ExploreError::StartUnsafe { .. }
            | ExploreError::World(_)
            | ExploreError::Barrier(_)),
        ) => return Err(invalid(e)),
        Err(e) => {
            out.json(
                "summary.json",
                &json!({"command": "explore", "scenario": s.name, "failure": e.to_string()}),
            )
            .map_err(io)?;
            return Ok(Status::Violation(e.to_string()));
        }
    };
    out.write("truth.world", Kind::World, &save_world(&truth)).map_err(io)?;
    let mut cycles = Vec::new();
    for c in &log.cycles {
        let dir = format!("cycle_{:03}", c.index);
        out.write(&format!("{dir}/map.world"), Kind::World, &save_world(&c.map))
            .map_err(io)?;
        out.write(&format!("{dir}/path.txt"), Kind::Path, &write_path(&c.path))
            .map_err(io)?;
        out.write(
            &format!("{dir}/corridors.poly"),
            Kind::Polygons,
            &write_polygons(&c.corridors),
        )
        .map_err(io)?;
        out.write(
            &format!("{dir}/trajectory.csv"),
            Kind::Trajectory,
            &write_trajectory_csv(&c.trajectory),
        )
        .map_err(io)?;
        cycles.push(json!({
            "index": c.index,
            "frontier": [c.frontier.0, c.frontier.1],
            "frontier_clearance": c.frontier_clearance,
            "path_length": c.path.length(),
            "newly_known": c.newly_known,
            "end": c.end.as_str(),
            "samples": c.trajectory.samples.len(),
        }));
    }
    out.write("final_map.world", Kind::World, &save_world(&log.final_map))
        .map_err(io)?;
    let sm = &log.summary;
    out.json(
        "summary.json",
        &json!({
            "command": "explore",
            "scenario": s.name,
            "cycles": sm.cycles,
            "coverage": sm.coverage,
            "reachable_free": sm.reachable_free,
            "known_reachable": sm.known_reachable,
            "min_barrier": sm.min_barrier,
            "min_true_clearance": sm.min_true_clearance,
            "sim_time": sm.sim_time,
            "wall_time_s": sm.wall_time_s,
            "cycle_log": cycles,
        }),
    )
    .map_err(io)?;
    Ok(Status::Ok)
}

pub fn lor(s: &Scenario, out: &mut Emitter) -> Result<Status, Failure> {
    let spec = s
        .lor
        .as_ref()
        .ok_or_else(|| invalid(anyhow!("scenario has no [lor] table")))?;
    if s.system.kind != SystemKind::DoubleIntegrator {
        return Err(invalid(anyhow!("lor needs system.kind = \"double_integrator\"")));
    }
    let plant = LinearPlant::double_integrator(s.system.k[0], s.system.k[1]).map_err(invalid)?;
    let fam = s.family(None).map_err(invalid)?;
    let params = s.params().map_err(invalid)?;
    let x = s.state();
    let lor = bc_lor(&fam, &x, &plant, params).map_err(invalid)?;
    let residual = regulation_residual(&plant.a, &plant.b, &plant.c, &plant.x_map, &plant.u_map);
    let lnorm = spectral_norm(&plant.closed_loop());
    let ybox = Aabb::new(
        DVector::from_vec(spec.y_lo.clone()),
        DVector::from_vec(spec.y_hi.clone()),
    )
    .map_err(invalid)?;
    let whole = Corridor::whole_space(DVector::zeros(1), CorridorKind::Lor, params);
    let candidates = sample_corridor(&whole, &ybox, spec.samples, s.seed).map_err(io)?;
    let cfg = SimConfig {
        system: System::Linear(plant.clone()),
        law: ControlLaw::OutputRegulation,
        params,
        dt: s.sim.dt,
        duration: s.sim.duration,
        sample_and_hold: s.sim.sample_and_hold,
    };
    let mut rows = Vec::new();
    let mut accepted = 0;
    let mut written = 0;
    let mut min_h = f64::INFINITY;
    let mut failures = Vec::new();
    for (i, y) in candidates.iter().enumerate() {
        let in_tr = trust_region_contains(&fam, &x, &plant, params.alpha_rate, y).map_err(invalid)?;
        let in_lor = lor.contains(y);
        let mut run_min = String::new();
        let mut final_err = String::new();
        if in_tr {
            accepted += 1;
            if spec.simulate {
                let traj = match run_closed_loop(&cfg, &fam, &x, &mut FixedGoal(y.clone())) {
                    Ok(t) => t,
                    Err(SimError::ViolationDetected { trajectory, value, .. }) => {
                        failures.push(format!("candidate {i}: barrier reached {value:e}"));
                        *trajectory
                    }
                    Err(e) => return Err(io(e)),
                };
                let m = traj.min_barrier();
                min_h = min_h.min(m);
                run_min = fmt(m);
                if let Some(l) = traj.last() {
                    final_err = fmt(((&plant.c * &l.state)[0] - y[0]).abs());
                }
                if written < spec.max_trajectories {
                    out.write(
                        &format!("runs/y{i:03}.csv"),
                        Kind::Trajectory,
                        &write_trajectory_csv(&traj),
                    )
                    .map_err(io)?;
                    written += 1;
                }
            }
        }
        rows.push(vec![
            i.to_string(),
            fmt(y[0]),
            in_tr.to_string(),
            in_lor.to_string(),
            run_min,
            final_err,
        ]);
    }
    out.table(
        "candidates.csv",
        &[
            "index",
            "y1",
            "in_trust_region",
            "in_lor",
            "min_barrier",
            "final_output_error",
        ],
        &rows,
    )
    .map_err(io)?;
    out.write("lor.log", Kind::CorridorLog, &write_corridor_log(&[lor]))
        .map_err(io)?;
    out.json(
        "summary.json",
        &json!({
            "command": "lor",
            "scenario": s.name,
            "closed_loop_norm": lnorm,
            "regulation_residual": residual,
            "candidates": candidates.len(),
            "trust_region_accepted": accepted,
            "min_barrier": if min_h.is_finite() { Some(min_h) } else { None },
            "failures": failures,
        }),
    )
    .map_err(io)?;
    Ok(if failures.is_empty() {
        Status::Ok
    } else {
        Status::Violation(failures.join("; "))
    })
}

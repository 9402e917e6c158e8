use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::{
    ArtifactWriter, AuditArgs, CliError, Command, CommonArgs, CounterexampleArgs, ExperimentConfig, GenArgs, GenKind,
    LearnArgs, OracleArgs, RunOutcome, SourceArgs, UcArgs, EXIT_ANCHOR_MISMATCH, EXIT_INFEASIBLE, EXIT_OK,
};
use crate::instances::{
    appendix_a_instance, appendix_b_instance, load_instance, random_instance, to_text, Instance, LossKind,
    RandomInstanceConfig,
};
use crate::losses::{FProperTransform, LossFunction};
use crate::model::{rng, Predictor};
use crate::multigroup::{build_family, multigroup_learn, schedule_params, uc_estimate, MultiGroupError, MultiGroupParams, Schedule};
use crate::oi::{audit_oi, OiLearnerConfig, TrainingSource};
use crate::oracle::{best_in_class, feasible_multipac, SlackRow};

// Stream tags under the root seed.
const TAG_GENERATE: u64 = 0;
const TAG_LEARN: u64 = 1;
const TAG_AUDIT: u64 = 2;
const TAG_UC: u64 = 3;

#[derive(Debug, Serialize)]
struct RunRecord {
    command: String,
    rng: &'static str,
    seed: u64,
    instance: String,
    pass: bool,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_clock_seconds: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    details: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<Schedule>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    slack: Vec<SlackRow>,
}

struct Run {
    writer: ArtifactWriter,
    record: RunRecord,
    started: Instant,
    summary: Vec<String>,
}

impl Run {
    fn start(command: &str, common: &CommonArgs, instance: String) -> Result<Self, CliError> {
        let writer = ArtifactWriter::new(&common.out, !common.no_header_timestamp)?;
        let record = RunRecord {
            command: command.into(),
            rng: rng::RNG_ALGORITHM,
            seed: common.seed,
            instance,
            pass: false,
            exit_code: EXIT_OK,
            generated: writer.timestamp().map(str::to_string),
            wall_clock_seconds: None,
            details: BTreeMap::new(),
            schedule: None,
            slack: Vec::new(),
        };
        Ok(Self {
            writer,
            record,
            started: Instant::now(),
            summary: Vec::new(),
        })
    }

    fn detail(&mut self, key: &str, value: impl ToString) {
        self.record.details.insert(key.into(), value.to_string());
    }

    fn finish(mut self, pass: bool, exit_code: i32) -> Result<RunOutcome, CliError> {
        self.record.pass = pass;
        self.record.exit_code = exit_code;
        if self.record.generated.is_some() {
            self.record.wall_clock_seconds = Some(self.started.elapsed().as_secs_f64());
        }
        self.writer.toml("run_record.toml", &self.record)?;
        self.summary.push(format!(
            "{}: {} (exit {exit_code})",
            self.record.command,
            if pass { "pass" } else { "fail" }
        ));
        Ok(RunOutcome {
            exit_code,
            artifacts: self.writer.into_written(),
            summary: self.summary,
        })
    }
}

fn check_open(name: &str, v: f64) -> Result<(), CliError> {
    if !(v > 0.0 && v < 1.0) {
        return Err(CliError::Config(format!("--{name} = {v} must lie in (0, 1)")));
    }
    Ok(())
}

fn run_error(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Execute one configured subcommand.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    match &config.command {
        Command::Learn(args) => learn(args),
        Command::Audit(args) => audit(args),
        Command::Oracle(args) => oracle(args),
        Command::Gen(args) => gen(args),
        Command::UcTest(args) => uc_test(args),
        Command::Counterexample(args) => counterexample(args),
    }
}

fn resolve_instance(source: &SourceArgs, seed: u64) -> Result<(Instance, String), CliError> {
    if let Some(path) = &source.instance {
        return Ok((load_instance(path)?, path.display().to_string()));
    }
    let kind = source
        .gen
        .ok_or_else(|| CliError::Config("either --instance or --gen is required".into()))?;
    let inst = match kind {
        GenKind::FprUc => appendix_a_instance(source.n)?,
        GenKind::IfAccuracy => appendix_b_instance(source.a, source.b)?,
        GenKind::Random => {
            let loss = LossKind::from_name(&source.loss)
                .ok_or_else(|| CliError::Config(format!("unknown loss kind `{}`", source.loss)))?;
            check_open("min-group-mass", source.min_group_mass)?;
            let config = RandomInstanceConfig {
                n: source.n,
                num_groups: source.groups,
                num_hypotheses: source.hypotheses,
                min_group_mass: source.min_group_mass,
                loss,
                include_bayes: source.include_bayes,
                calibration_width: source.lambda,
                ..RandomInstanceConfig::default()
            };
            random_instance(rng::derive_seed(seed, TAG_GENERATE), &config)?
        }
    };
    let label = match kind {
        GenKind::FprUc => format!("gen:fpr-uc n={}", source.n),
        GenKind::IfAccuracy => format!("gen:if-accuracy a={} b={}", source.a, source.b),
        GenKind::Random => format!("gen:random n={} loss={}", source.n, source.loss),
    };
    Ok((inst, label))
}

fn transform_for(loss: &Arc<LossFunction>, grid: f64) -> Result<Arc<FProperTransform>, CliError> {
    match FProperTransform::closed_form(loss) {
        Some(f) => Ok(Arc::new(f)),
        None => Ok(Arc::new(FProperTransform::derived(Arc::clone(loss), grid).map_err(|e| CliError::Config(e.to_string()))?)),
    }
}

fn learn(args: &LearnArgs) -> Result<RunOutcome, CliError> {
    for (name, v) in [("eps", args.eps), ("delta", args.delta), ("gamma", args.gamma)] {
        check_open(name, v)?;
    }
    let (inst, label) = resolve_instance(&args.source, args.common.seed)?;
    let transform = transform_for(&inst.loss, args.grid)?;
    let mut run = Run::start("learn", &args.common, label)?;
    run.detail("transform", transform.name());
    run.detail("loss", inst.loss.as_ref());
    let params = MultiGroupParams {
        epsilon: args.eps,
        delta: args.delta,
        gamma: args.gamma,
    };
    let schedule = schedule_params(&inst.loss, params, inst.hypotheses.len()).map_err(|e| CliError::Config(e.to_string()))?;
    run.record.schedule = Some(schedule);
    let outcome = multigroup_learn(
        &inst.loss,
        &transform,
        params,
        &inst.hypotheses,
        &inst.groups,
        TrainingSource::Planted(&inst.distribution),
        rng::derive_seed(args.common.seed, TAG_LEARN),
        &OiLearnerConfig::default(),
    );
    let (result, pass, exit_code) = match outcome {
        Ok(r) => (r, true, EXIT_OK),
        Err(MultiGroupError::SlackViolation { witness, result }) => {
            run.detail("witness_groups", witness.join(" "));
            (*result, false, EXIT_INFEASIBLE)
        }
        Err(MultiGroupError::BudgetExhausted {
            witness,
            samples_consumed,
        }) => {
            run.detail("witness_distinguishers", witness.join(" "));
            run.detail("samples_consumed", samples_consumed);
            run.summary.push(format!("learner out of budget; failing: {}", witness.join(", ")));
            return run.finish(false, EXIT_INFEASIBLE);
        }
        Err(e) => return Err(run_error(e)),
    };
    run.detail("samples_consumed", result.samples_consumed);
    run.detail("budget", format!("{:.6e}", result.oi.budget));
    run.detail("learner_path", result.oi.path.as_str());
    run.detail("oi_rounds", result.oi.rounds);
    run.detail("family_size", result.family_size);
    let names = inst.domain().names();
    #[derive(Serialize)]
    struct PredictorRow<'a> {
        point: &'a str,
        underlying: f64,
        prediction: f64,
    }
    let rows: Vec<PredictorRow<'_>> = names
        .iter()
        .enumerate()
        .map(|(i, point)| PredictorRow {
            point,
            underlying: result.underlying.get(i),
            prediction: result.predictor.get(i),
        })
        .collect();
    run.writer.csv_rows("predictor.csv", &rows)?;
    if let Some(report) = &result.slack {
        run.writer.csv("slack.csv", |buf| report.write_csv(buf))?;
        run.record.slack = report.rows.clone();
        run.summary.push(format!("max slack {:.6} against eps {}", report.max_slack, report.epsilon));
    }
    if let Some(report) = &result.oi.report {
        run.writer.csv("oi_report.csv", |buf| report.write_csv(buf))?;
    }
    run.finish(pass, exit_code)
}

fn resolve_predictor(spec: &str, inst: &Instance) -> Result<Predictor, CliError> {
    let n = inst.len();
    if spec == "bayes" {
        return Predictor::new(inst.distribution.label_probs().to_vec()).map_err(run_error);
    }
    if let Some(v) = spec.strip_prefix("const:") {
        let v: f64 = v.parse().map_err(|_| CliError::Config(format!("bad constant `{v}`")))?;
        return Predictor::constant(n, v).map_err(|e| CliError::Config(e.to_string()));
    }
    inst.hypotheses
        .by_name(spec)
        .map(|h| h.predictor.clone())
        .ok_or_else(|| CliError::Config(format!("no predictor named `{spec}`")))
}

fn audit(args: &AuditArgs) -> Result<RunOutcome, CliError> {
    for (name, v) in [("eps", args.eps), ("delta", args.delta), ("gamma", args.gamma), ("audit-delta", args.audit_delta)] {
        check_open(name, v)?;
    }
    let (inst, label) = resolve_instance(&args.source, args.common.seed)?;
    let p = resolve_predictor(&args.predictor, &inst)?;
    let transform = transform_for(&inst.loss, args.grid)?;
    let params = MultiGroupParams {
        epsilon: args.eps,
        delta: args.delta,
        gamma: args.gamma,
    };
    let schedule = schedule_params(&inst.loss, params, inst.hypotheses.len()).map_err(|e| CliError::Config(e.to_string()))?;
    let tau = args.tau.unwrap_or(schedule.tau);
    check_open("tau", tau)?;
    let family = build_family(&inst.loss, &transform, &inst.hypotheses, &inst.groups, schedule.alpha, schedule.k)
        .map_err(run_error)?;
    let mut run = Run::start("audit", &args.common, label)?;
    run.record.schedule = Some(schedule);
    run.detail("predictor", &args.predictor);
    run.detail("tau", tau);
    run.detail("audit_delta", args.audit_delta);
    let report = audit_oi(
        &p,
        &family,
        &inst.distribution,
        tau,
        args.audit_delta,
        rng::derive_seed(args.common.seed, TAG_AUDIT),
    )
    .map_err(run_error)?;
    run.detail("trials", report.trials);
    run.detail("max_gap", report.max_gap);
    run.writer.csv("oi_report.csv", |buf| report.write_csv(buf))?;
    run.summary.push(format!("max gap {:.6} against tau/2 = {}", report.max_gap, tau / 2.0));
    run.finish(report.pass, EXIT_OK)
}

fn oracle(args: &OracleArgs) -> Result<RunOutcome, CliError> {
    if args.eps.is_nan() || args.eps < 0.0 {
        return Err(CliError::Config(format!("--eps = {} must be non-negative", args.eps)));
    }
    let (inst, label) = resolve_instance(&args.source, args.common.seed)?;
    let mut run = Run::start("oracle", &args.common, label)?;
    let verdict = feasible_multipac(
        &inst.loss,
        &inst.distribution,
        &inst.hypotheses,
        &inst.groups,
        args.eps,
        args.grid,
        args.binary,
    )
    .map_err(|e| match e {
        crate::oracle::OracleError::SearchSpaceTooLarge { .. } | crate::oracle::OracleError::InvalidParameter(_) => {
            CliError::Config(e.to_string())
        }
        other => run_error(other),
    })?;
    run.detail("epsilon", args.eps);
    run.detail("grid", verdict.resolution.map_or_else(|| "binary".into(), |r| r.to_string()));
    run.detail("feasible", verdict.feasible);
    run.detail("min_worst_slack", verdict.min_worst_slack);
    run.detail("search_space", verdict.search_space);
    run.detail("candidates_evaluated", verdict.candidates_evaluated);
    run.writer.csv("verdict.csv", |buf| verdict.write_csv(buf))?;
    run.summary.push(format!(
        "{} at eps {} (smallest worst-group slack {:.6})",
        if verdict.feasible { "feasible" } else { "infeasible" },
        args.eps,
        verdict.min_worst_slack
    ));
    let code = if verdict.feasible { EXIT_OK } else { EXIT_INFEASIBLE };
    run.finish(verdict.feasible, code)
}

fn gen(args: &GenArgs) -> Result<RunOutcome, CliError> {
    let (inst, label) = resolve_instance(&args.source, args.common.seed)?;
    let mut run = Run::start("gen", &args.common, label)?;
    let path = run.writer.text("instance.txt", &to_text(&inst))?;
    run.summary.push(format!("wrote {}", path.display()));
    run.finish(true, EXIT_OK)
}

fn uc_test(args: &UcArgs) -> Result<RunOutcome, CliError> {
    if args.reps == 0 || args.m_values.contains(&0) {
        return Err(CliError::Config("--reps and every --m-values entry must be positive".into()));
    }
    let (inst, label) = resolve_instance(&args.source, args.common.seed)?;
    let mut run = Run::start("uc-test", &args.common, label)?;
    run.detail("loss", inst.loss.as_ref());
    run.detail("reps", args.reps);
    #[derive(Serialize)]
    struct Row {
        m: usize,
        reps: usize,
        mean: f64,
        q50: f64,
        q90: f64,
        q99: f64,
        max: f64,
        frac_at_most_eps: f64,
        frac_at_least_one: f64,
    }
    let mut rows = Vec::new();
    for (i, &m) in args.m_values.iter().enumerate() {
        let seed = rng::derive_seed(rng::derive_seed(args.common.seed, TAG_UC), i as u64);
        let s = uc_estimate(&inst.loss, &inst.hypotheses, &inst.distribution, m, args.reps, seed).map_err(run_error)?;
        let q = s.quantiles();
        rows.push(Row {
            m,
            reps: args.reps,
            mean: q.mean,
            q50: q.q50,
            q90: q.q90,
            q99: q.q99,
            max: q.max,
            frac_at_most_eps: s.fraction_at_most(args.eps),
            frac_at_least_one: s.fraction_at_least(1.0),
        });
    }
    run.writer.csv_rows("uc.csv", &rows)?;
    run.finish(true, EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
struct Anchor {
    construction: &'static str,
    quantity: String,
    expected: f64,
    observed: f64,
    tolerance: f64,
    pass: bool,
}

fn anchor(construction: &'static str, quantity: impl Into<String>, expected: f64, observed: f64, tolerance: f64) -> Anchor {
    Anchor {
        construction,
        quantity: quantity.into(),
        expected,
        observed,
        tolerance,
        pass: (expected - observed).abs() <= tolerance,
    }
}

fn counterexample(args: &CounterexampleArgs) -> Result<RunOutcome, CliError> {
    let mut anchors = Vec::new();

    // fairness vs accuracy
    let (a, b) = (args.a, args.b);
    let inst = appendix_b_instance(a, b)?;
    let d = &inst.distribution;
    let s = d.restrict(&inst.groups.get(0).group).map_err(run_error)?;
    let t = d.restrict(&inst.groups.get(1).group).map_err(run_error)?;
    let best_s = best_in_class(&inst.loss, &s, &inst.hypotheses).map_err(run_error)?;
    let best_t = best_in_class(&inst.loss, &t, &inst.hypotheses).map_err(run_error)?;
    anchors.push(anchor("if-accuracy", "best loss on S", b / 9.0, best_s.value, 1e-12));
    anchors.push(anchor("if-accuracy", "best loss on T", 0.0, best_t.value, 1e-12));
    let ones = &inst.hypotheses.get(1).predictor;
    let next_s = inst.loss.loss(&s, ones).map_err(run_error)?;
    anchors.push(anchor("if-accuracy", "loss of h1 on S", 8.0 * b / 9.0, next_s, 1e-12));
    let reference = (7.0 * b / 9.0).min(0.5);
    let exact = feasible_multipac(&inst.loss, d, &inst.hypotheses, &inst.groups, 0.0, 1.0, true).map_err(run_error)?;
    anchors.push(anchor(
        "if-accuracy",
        "infeasibility threshold on the binary grid",
        reference,
        exact.min_worst_slack,
        1e-9,
    ));
    let probe = 0.9 * reference;
    let below = feasible_multipac(&inst.loss, d, &inst.hypotheses, &inst.groups, probe, 1.0, true).map_err(run_error)?;
    anchors.push(anchor(
        "if-accuracy",
        format!("feasible at eps={probe}"),
        0.0,
        f64::from(u8::from(below.feasible)),
        0.0,
    ));

    // false positive rate
    let inst = appendix_a_instance(args.n)?;
    let one = &inst.hypotheses.get(0).predictor;
    let fpr = inst.loss.loss(&inst.distribution, one).map_err(run_error)?;
    anchors.push(anchor("fpr-uc", "FPR of h=1", 1.0, fpr, 0.0));
    let seed = rng::derive_seed(args.common.seed, TAG_UC);
    let summary = uc_estimate(&inst.loss, &inst.hypotheses, &inst.distribution, args.m, args.reps, seed).map_err(run_error)?;
    let miss = (1.0 - 1.0 / args.n as f64).powi(args.m as i32);
    anchors.push(anchor(
        "fpr-uc",
        format!("fraction with deviation 1 at m={}", args.m),
        miss,
        summary.fraction_at_least(1.0),
        0.01,
    ));
    let squared = LossFunction::squared();
    let m_sq = squared.uc_sample_bound(0.1, 0.1, inst.hypotheses.len()).map_err(run_error)? as usize;
    let sq = uc_estimate(&squared, &inst.hypotheses, &inst.distribution, m_sq, args.reps, rng::derive_seed(seed, 1))
        .map_err(run_error)?;
    let frac = sq.fraction_at_most(0.1);
    anchors.push(Anchor {
        construction: "fpr-uc",
        quantity: format!("squared loss: fraction with deviation <= 0.1 at m={m_sq}"),
        expected: 0.9,
        observed: frac,
        tolerance: 0.0,
        pass: frac >= 0.9,
    });

    let all_pass = anchors.iter().all(|x| x.pass);
    let mut run = Run::start("counterexample", &args.common, format!("if-accuracy a={a} b={b}; fpr-uc n={}", args.n))?;
    run.writer.csv_rows("anchors.csv", &anchors)?;
    for x in &anchors {
        run.summary.push(format!(
            "[{}] {}: {} expected {:.6} observed {:.6}",
            if x.pass { "ok" } else { "MISMATCH" },
            x.construction,
            x.quantity,
            x.expected,
            x.observed
        ));
    }
    run.detail("anchors_passed", anchors.iter().filter(|x| x.pass).count());
    run.detail("anchors_total", anchors.len());
    let code = if all_pass { EXIT_OK } else { EXIT_ANCHOR_MISMATCH };
    run.finish(all_pass, code)
}

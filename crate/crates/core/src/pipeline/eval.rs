//! Evaluation over several seeds.

use serde_json::Value;

use crate::data::{drop_pieces, Task};
use crate::geometry::Pose;
use crate::metrics::{score_instance, EvalReport};
use crate::pipeline::config::{EvalConfig, RunConfig};
use crate::pipeline::model::Model;
use crate::pipeline::solve::solve;
use crate::{Error, Result};

fn instance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

/// Scores `solver` on every task once per seed. With `eval.missing > 0`
/// each (seed, task) pair first loses that fraction of its pieces.
pub fn evaluate_with(
    tasks: &[Task],
    eval: &EvalConfig,
    mut solver: impl FnMut(&Task, u64) -> Result<Vec<Pose>>,
) -> Result<EvalReport> {
    if eval.seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(eval.seeds.len());
    for &seed in &eval.seeds {
        let mut metrics = Vec::with_capacity(tasks.len());
        for (i, task) in tasks.iter().enumerate() {
            let s = instance_seed(seed, i);
            let reduced;
            let task = if eval.missing > 0.0 {
                reduced = drop_pieces(task, eval.missing, s ^ 0xd409)?;
                &reduced
            } else {
                task
            };
            if task.is_empty() {
                continue;
            }
            let pred = solver(task, s)?;
            metrics.push(score_instance(&task.gt, &pred, task.clouds(), task.lattice, eval.pa_threshold)?);
        }
        runs.push((seed, metrics));
    }
    Ok(EvalReport::from_runs(&runs, eval.pa_threshold))
}

pub fn evaluate(model: &Model, tasks: &[Task], cfg: &RunConfig) -> Result<EvalReport> {
    for t in tasks {
        model.check_task(t)?;
    }
    evaluate_with(tasks, &cfg.eval, |task, seed| solve(model, task, cfg, seed))
}

/// Field types of the report JSON, checked by [`validate_report`].
pub const REPORT_SCHEMA: &[(&str, &str)] = &[
    ("chamfer_convention", "string"),
    ("part_accuracy_threshold", "number"),
    ("seeds", "array"),
    ("instances", "number"),
    ("evaluated_pieces", "number"),
    ("rmse_rotation_deg", "summary"),
    ("rmse_translation", "summary"),
    ("rmse_translation_e2", "summary"),
    ("part_accuracy", "summary?"),
    ("direct_comparison", "summary?"),
    ("collisions", "number"),
    ("per_instance", "array"),
];

fn type_ok(v: Option<&Value>, kind: &str) -> bool {
    let summary = |v: &Value| {
        v.as_object().is_some_and(|o| o.len() == 2 && o.get("mean").is_some_and(Value::is_number) && o.get("std").is_some_and(Value::is_number))
    };
    match (kind, v) {
        (k, None) => k.ends_with('?'),
        ("string", Some(v)) => v.is_string(),
        ("number", Some(v)) => v.is_number(),
        ("array", Some(v)) => v.is_array(),
        (_, Some(v)) => summary(v),
    }
}

/// Checks a report against [`REPORT_SCHEMA`], including every per-instance
/// entry.
pub fn validate_report(v: &Value) -> Result<()> {
    let obj = v.as_object().ok_or_else(|| Error::Serde("report is not an object".into()))?;
    for (key, kind) in REPORT_SCHEMA {
        if !type_ok(obj.get(*key), kind) {
            return Err(Error::Serde(format!("report field `{key}` is not a {kind}")));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !REPORT_SCHEMA.iter().any(|(s, _)| s == k)) {
        return Err(Error::Serde(format!("unexpected report field `{extra}`")));
    }
    for inst in obj["per_instance"].as_array().unwrap() {
        let ok = inst["rmse_rotation_deg"].is_number()
            && inst["rmse_translation"].is_number()
            && inst["pieces"].as_array().is_some_and(|p| {
                p.iter().all(|r| r["piece"].is_u64() && r["rotation_error_deg"].is_number() && r["translation_error"].is_number())
            });
        if !ok {
            return Err(Error::Serde("malformed per-instance entry".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_tasks, GenerateConfig, TaskKind};

    #[test]
    fn ground_truth_scores_perfectly() {
        let puzzles = generate_tasks(&GenerateConfig { count: 6, image_size: 24, ..Default::default() }).unwrap();
        let frags = generate_tasks(&GenerateConfig { task: TaskKind::Frag3d, count: 3, ..Default::default() }).unwrap();
        let eval = EvalConfig::default();
        let r = evaluate_with(&puzzles, &eval, |t, _| Ok(t.gt.clone())).unwrap();
        assert_eq!(r.direct_comparison.unwrap().mean, 1.0);
        assert!(r.rmse_rotation_deg.mean < 1e-6 && r.rmse_translation.mean == 0.0);
        let r = evaluate_with(&frags, &eval, |t, _| Ok(t.gt.clone())).unwrap();
        assert_eq!(r.part_accuracy.unwrap().mean, 1.0);
        assert!(r.rmse_rotation_deg.mean < 1e-6);
        validate_report(&serde_json::to_value(&r).unwrap()).unwrap();
    }

    #[test]
    fn missing_pieces_shrink_the_denominator() {
        let puzzles = generate_tasks(&GenerateConfig { count: 3, image_size: 40, grid_sizes: vec![10], ..Default::default() }).unwrap();
        let full = evaluate_with(&puzzles, &EvalConfig { seeds: vec![0], ..Default::default() }, |t, _| Ok(t.gt.clone())).unwrap();
        let eval = EvalConfig { seeds: vec![0], missing: 0.3, ..Default::default() };
        let part = evaluate_with(&puzzles, &eval, |t, _| Ok(t.gt.clone())).unwrap();
        assert_eq!(full.evaluated_pieces, 300);
        assert_eq!(part.evaluated_pieces, 210);
    }

    #[test]
    fn schema_rejects_malformed_reports() {
        let puzzles = generate_tasks(&GenerateConfig { count: 2, image_size: 16, grid_sizes: vec![2], ..Default::default() }).unwrap();
        let r = evaluate_with(&puzzles, &EvalConfig::default(), |t, _| Ok(t.init.clone())).unwrap();
        let mut v = serde_json::to_value(&r).unwrap();
        validate_report(&v).unwrap();
        v["rmse_translation"] = Value::from(3);
        assert!(validate_report(&v).is_err());
        let mut v = serde_json::to_value(&r).unwrap();
        v.as_object_mut().unwrap().insert("extra".into(), Value::Null);
        assert!(validate_report(&v).is_err());
    }
}

//! The shipped JSON schemas must describe what the pipeline actually writes.
//! The checker below covers the keywords the schemas use: type, enum,
//! required, properties, additionalProperties, items, minItems, minLength,
//! minimum/maximum, anyOf/oneOf and local `$ref`s.

use std::fs;
use std::path::{Path, PathBuf};

use partitur_core::fixtures::demo;
use partitur_core::pipeline::{full_pipeline, RunOptions, RunStatus};
use serde_json::Value;

const SCHEMAS: [(&str, &str); 6] = [
    ("validation_report", "00_validation.json"),
    ("transition_map", "02_transition_map.json"),
    ("curation_plan", "04_curation_plan.json"),
    ("storyboard", "07_storyboard.json"),
    ("content_report", "08_content_report.json"),
    ("quality_metrics", "10_quality.json"),
];

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn load(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap())
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn resolve<'a>(root: &'a Value, schema: &'a Value) -> &'a Value {
    match schema.get("$ref").and_then(Value::as_str) {
        Some(r) => {
            let ptr = r.strip_prefix('#').expect("local ref");
            resolve(
                root,
                root.pointer(ptr)
                    .unwrap_or_else(|| panic!("dangling ref {r}")),
            )
        }
        None => schema,
    }
}

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "integer" => v.is_u64() || v.is_i64(),
        "number" => v.is_number(),
        other => panic!("unsupported type {other}"),
    }
}

fn check(root: &Value, schema: &Value, v: &Value, path: &str, errors: &mut Vec<String>) {
    let s = resolve(root, schema);
    if let Some(ty) = s.get("type").and_then(Value::as_str) {
        if !type_matches(ty, v) {
            errors.push(format!("{path}: expected {ty}, got {v}"));
            return;
        }
    }
    if let Some(options) = s.get("enum").and_then(Value::as_array) {
        if !options.contains(v) {
            errors.push(format!("{path}: {v} not in {options:?}"));
        }
    }
    for key in ["anyOf", "oneOf"] {
        if let Some(branches) = s.get(key).and_then(Value::as_array) {
            let ok = branches
                .iter()
                .filter(|b| {
                    let mut e = Vec::new();
                    check(root, b, v, path, &mut e);
                    e.is_empty()
                })
                .count();
            if ok == 0 || (key == "oneOf" && ok > 1) {
                errors.push(format!("{path}: {ok} {key} branches match"));
            }
        }
    }
    if let (Some(min), Some(n)) = (s.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if n < min {
            errors.push(format!("{path}: {n} < {min}"));
        }
    }
    if let (Some(max), Some(n)) = (s.get("maximum").and_then(Value::as_f64), v.as_f64()) {
        if n > max {
            errors.push(format!("{path}: {n} > {max}"));
        }
    }
    if let (Some(min), Some(text)) = (s.get("minLength").and_then(Value::as_u64), v.as_str()) {
        if (text.chars().count() as u64) < min {
            errors.push(format!("{path}: shorter than {min}"));
        }
    }
    if let Some(items) = v.as_array() {
        if let Some(min) = s.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min {
                errors.push(format!("{path}: fewer than {min} items"));
            }
        }
        if let Some(item_schema) = s.get("items") {
            for (i, item) in items.iter().enumerate() {
                check(root, item_schema, item, &format!("{path}[{i}]"), errors);
            }
        }
    }
    if let Some(obj) = v.as_object() {
        let props = s.get("properties").and_then(Value::as_object);
        for key in s
            .get("required")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
        {
            let key = key.as_str().unwrap();
            if !obj.contains_key(key) {
                errors.push(format!("{path}: missing {key}"));
            }
        }
        for (key, value) in obj {
            let child = format!("{path}.{key}");
            match (
                props.and_then(|p| p.get(key)),
                s.get("additionalProperties"),
            ) {
                (Some(p), _) => check(root, p, value, &child, errors),
                (None, Some(Value::Bool(false))) => errors.push(format!("{child}: not allowed")),
                (None, Some(extra @ Value::Object(_))) => check(root, extra, value, &child, errors),
                (None, _) => {}
            }
        }
    }
}

fn violations(schema: &Value, v: &Value) -> Vec<String> {
    let mut errors = Vec::new();
    check(schema, schema, v, "$", &mut errors);
    errors
}

#[test]
fn every_schema_is_well_formed() {
    for (kind, _) in SCHEMAS {
        let s = load(&schema_dir().join(format!("{kind}.schema.json")));
        assert_eq!(
            s["$schema"], "https://json-schema.org/draft/2020-12/schema",
            "{kind}"
        );
        assert_eq!(s["type"], "object", "{kind}");
        let props = s["properties"].as_object().unwrap();
        for req in s["required"].as_array().unwrap() {
            assert!(props.contains_key(req.as_str().unwrap()), "{kind}: {req}");
        }
    }
}

#[test]
fn fixture_artifacts_conform_and_drift_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let fx = demo::write_fixture(dir.path()).unwrap();
    let opts = RunOptions {
        mock: true,
        ..RunOptions::default()
    };
    let result = full_pipeline(dir.path(), demo::PRESENTATION_ID, &opts).unwrap();
    assert_eq!(result.status, RunStatus::Complete, "{:?}", result.failure);

    for (kind, file) in SCHEMAS {
        let schema = load(&schema_dir().join(format!("{kind}.schema.json")));
        let mut artifact = load(&fx.root.join("out/artifacts").join(file));
        if kind == "quality_metrics" {
            artifact = artifact["metrics"].take();
        }
        let errors = violations(&schema, &artifact);
        assert!(errors.is_empty(), "{kind}: {errors:#?}");

        // Every serialized field is declared, so an added or renamed field fails here.
        let mut drifted = artifact.clone();
        drifted
            .as_object_mut()
            .unwrap()
            .insert("unexpected".into(), Value::Null);
        assert!(
            !violations(&schema, &drifted).is_empty(),
            "{kind} accepts unknown fields"
        );
        for req in schema["required"].as_array().unwrap() {
            let mut missing = artifact.clone();
            missing
                .as_object_mut()
                .unwrap()
                .remove(req.as_str().unwrap());
            assert!(
                !violations(&schema, &missing).is_empty(),
                "{kind} accepts missing {req}"
            );
        }
    }
}

#[test]
fn checker_rejects_out_of_range_values() {
    let schema = load(&schema_dir().join("quality_metrics.schema.json"));
    let ok = serde_json::json!({
        "content_completeness": 0.5, "academic_rigor": "high", "technical_precision": null,
        "narrative_coherence": 1.0, "evaluator_id": "reviewer",
    });
    assert!(violations(&schema, &ok).is_empty());
    let mut bad = ok.clone();
    bad["content_completeness"] = 1.5.into();
    assert!(!violations(&schema, &bad).is_empty());
    let mut bad = ok;
    bad["academic_rigor"] = "extreme".into();
    assert!(!violations(&schema, &bad).is_empty());
}

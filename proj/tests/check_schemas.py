#!/usr/bin/env python3
"""Validate sample payloads emitted by schema_samples against schemas/v1."""

import argparse
import copy
import json
import pathlib
import subprocess
import sys

from jsonschema import Draft202012Validator
from referencing import Registry, Resource

# Schemas that only appear embedded in other payloads.
EMBEDDED_ONLY = {
    "common", "proposal", "clinician_feedback", "safety_report", "preference_signal", "category_scores",
    "cycle_context", "trace_entry", "violation", "constraint", "abnormality", "cycle_evidence",
    "patient_state", "ventilator_settings", "waveform_segment",
}


def load(schema_dir):
    schemas = {}
    for path in sorted(schema_dir.glob("*.json")):
        schemas[path.stem] = json.loads(path.read_text())
    registry = Registry().with_resources(
        (s["$id"], Resource.from_contents(s)) for s in schemas.values())
    return schemas, registry


def validator(schemas, registry, name):
    return Draft202012Validator(schemas[name], registry=registry)


def negatives(schemas, registry, samples):
    """Mutations each schema must reject."""
    failures = []

    def expect_invalid(name, instance, what):
        if validator(schemas, registry, name).is_valid(instance):
            failures.append(f"{name}: accepted {what}")

    for name, instances in samples.items():
        inst = instances[0]
        if not isinstance(inst, dict):
            continue
        bad = copy.deepcopy(inst)
        bad["unexpected_field"] = 1
        if name != "dataset_load_request":
            expect_invalid(name, bad, "an unknown field")
        required = schemas[name].get("required", [])
        if required:
            bad = copy.deepcopy(inst)
            del bad[required[0]]
            expect_invalid(name, bad, f"missing {required[0]}")

    first = samples["pending_review"][0]
    p = copy.deepcopy(first["proposal"])
    p["setting_updates"] = {"peep": 1, "fio2": 30, "pressure_support": 5, "resp_rate_set": 12}
    expect_invalid("proposal", p, "four setting updates")
    p = copy.deepcopy(first["proposal"])
    p["setting_updates"] = {}
    p.pop("mode_change", None)
    expect_invalid("proposal", p, "an empty action")
    p["setting_updates"] = {"tidal_volume": 400}
    expect_invalid("proposal", p, "an unknown parameter")
    expect_invalid("clinician_feedback", {"decision": "reject", "disputed_parameters": [], "rationale": ""},
                   "a rejection without a reason")
    expect_invalid("safety_report", {"verdict": "fail", "violations": [], "warnings": []}, "fail without violations")
    expect_invalid("safety_report", {"verdict": "pass", "violations": [{"check_id": "bounds"}], "warnings": []},
                   "pass with violations")
    expect_invalid("constraint", {"kind": "max_step", "param": "fio2", "value": 0}, "a zero max step")
    expect_invalid("constraint", {"kind": "forbid_mode"}, "forbid_mode without a mode")
    expect_invalid("waveform_cues", {"quality": "good", "asynchrony_patterns": ["none", "sawtooth"],
                                     "suspicious_events": [], "observed_state": "", "uncertainty": 0.1},
                   "none combined with a pattern")
    expect_invalid("patient_state", {"timestamp": 0, "spo2": 101}, "spo2 above 100")
    expect_invalid("patient_state", {"spo2": 90}, "a missing timestamp")
    expect_invalid("abnormality", {"code": "hypoxemia", "severity": "mild", "evidence": ["labs.lactate"]},
                   "an evidence ref outside state, settings and cues")
    env = copy.deepcopy(samples["envelope"][0])
    env["content_hash"] = "XYZ"
    expect_invalid("envelope", env, "a malformed hash")
    env = copy.deepcopy(samples["envelope"][0])
    env["payload"] = {"note": 3}
    expect_invalid("envelope", env, "a payload that does not match its kind")
    rec = copy.deepcopy(next(r for r in samples["cycle_record"] if r["status"] == "accepted"))
    del rec["accepted_settings"]
    expect_invalid("cycle_record", rec, "an accepted cycle without settings")
    expect_invalid("dataset_load_request", {"path": "/x", "content": ""}, "both path and content")
    return failures


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--schemas", required=True, type=pathlib.Path)
    ap.add_argument("--samples", required=True, help="sample emitter executable")
    args = ap.parse_args()

    schemas, registry = load(args.schemas)
    errors = []
    for name, s in schemas.items():
        try:
            Draft202012Validator.check_schema(s)
        except Exception as e:  # noqa: BLE001
            errors.append(f"{name}: invalid schema: {e}")
        if s.get("$id", "").rsplit("/", 1)[-1] != f"{name}.json":
            errors.append(f"{name}: $id does not match file name")

    out = subprocess.run([args.samples], check=True, capture_output=True, text=True).stdout
    samples = {}
    for line in out.splitlines():
        rec = json.loads(line)
        samples.setdefault(rec["schema"], []).append(rec["instance"])

    validators = {}
    for name, instances in samples.items():
        if name not in schemas:
            errors.append(f"{name}: emitted but no schema file")
            continue
        v = validators.setdefault(name, validator(schemas, registry, name))
        for i, inst in enumerate(instances):
            for err in v.iter_errors(inst):
                errors.append(f"{name}[{i}] at /{'/'.join(map(str, err.absolute_path))}: {err.message[:300]}")
                break

    unexercised = set(schemas) - set(samples) - EMBEDDED_ONLY
    for name in sorted(unexercised):
        errors.append(f"{name}: schema has no emitted sample")

    if not errors:
        errors.extend(negatives(schemas, registry, samples))

    total = sum(len(v) for v in samples.values())
    if errors:
        for e in errors[:50]:
            print("FAIL", e)
        print(f"{len(errors)} problem(s)")
        return 1
    print(f"{total} samples across {len(samples)} schemas valid; {len(schemas)} schema files checked")
    return 0


if __name__ == "__main__":
    sys.exit(main())

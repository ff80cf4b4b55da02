"""Runs the CLI for every method and validates results.json against the schema."""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

cli, schema_path = sys.argv[1], sys.argv[2]
schema = json.loads(pathlib.Path(schema_path).read_text())
jsonschema.Draft202012Validator.check_schema(schema)

with tempfile.TemporaryDirectory() as tmp:
    for scenario, method in [("pose", "heuristic"), ("shape", "pf"), ("env", "ours")]:
        out = pathlib.Path(tmp) / f"{scenario}_{method}"
        config = pathlib.Path(tmp) / f"{scenario}_{method}.yaml"
        config.write_text(
            f"scenario: {scenario}\nmethod: {method}\ncases: 2\nparticles: 3\n"
            "estimator: {max_iterations: 3}\nscenario_settings: {T: 10, start_height: 0.01}\n"
        )
        subprocess.run([cli, "run", "-c", str(config), "-o", str(out)], check=True)
        doc = json.loads((out / "results.json").read_text())
        jsonschema.validate(doc, schema)
        # emit round trip
        again = pathlib.Path(tmp) / f"{scenario}_{method}_again"
        subprocess.run([cli, "emit", "-i", str(out / "results.json"), "-o", str(again),
                        "-f", "json"], check=True)
        assert (again / "results.json").read_bytes() == (out / "results.json").read_bytes()
        bad = dict(doc, schema_version=2)
        try:
            jsonschema.validate(bad, schema)
        except jsonschema.ValidationError:
            pass
        else:
            sys.exit("schema accepted a wrong version")
        print(f"{scenario} {method}: valid")

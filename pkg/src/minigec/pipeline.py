"""Recipe runner: an ordered list of CLI invocations with one consolidated
manifest.

Recipe file (YAML):

    workspace: runs/demo          # optional; {workspace} expands in args
    stages:
      - name: corpus              # optional label
        argv: [noise, synth, --in, clean.txt, --out, "{workspace}/pairs.tsv"]
      - argv: "vocab train --in {workspace}/pairs.tsv --out {workspace}/vocab.txt"

Stages run in order and the pipeline stops at the first nonzero exit.
"""

from __future__ import annotations

import json
import shlex
import time
from pathlib import Path

import yaml


def _stage_argv(stage, workspace: str) -> list[str]:
    if isinstance(stage, dict):
        argv = stage.get("argv", [])
    else:
        argv = stage
    if isinstance(argv, str):
        argv = shlex.split(argv)
    return [str(a).replace("{workspace}", workspace) for a in argv]


def run_recipe(recipe_path: str | Path, workspace: str | None = None) -> tuple[int, Path | None]:
    """Execute the stages; return (exit status, manifest path). A failing
    stage short-circuits the rest and its index is recorded."""
    from .cli import main as cli_main, VERSION

    recipe_path = Path(recipe_path)
    if not recipe_path.exists():
        raise FileNotFoundError(str(recipe_path))
    recipe = yaml.safe_load(recipe_path.read_text(encoding="utf-8")) or {}
    if isinstance(recipe, list):  # bare list of stages is accepted too
        recipe = {"stages": recipe}
    stages = recipe.get("stages", [])
    ws = workspace or recipe.get("workspace") or str(recipe_path.parent)
    Path(ws).mkdir(parents=True, exist_ok=True)

    records = []
    status = 0
    started = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    for index, stage in enumerate(stages):
        argv = _stage_argv(stage, ws)
        name = stage.get("name") if isinstance(stage, dict) else None
        code = cli_main(argv)
        records.append({"index": index, "name": name or " ".join(argv[:2]),
                        "argv": argv, "status": code})
        if code != 0:
            print(f"pipeline: stage {index} failed with status {code}")
            status = code
            break

    manifest_path = None
    if stages:
        manifest = {
            "recipe": str(recipe_path),
            "workspace": ws,
            "stages": records,
            "status": status,
            "toolkit_version": VERSION,
            "started_at": started,
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        }
        manifest_path = Path(ws) / "pipeline-manifest.json"
        manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return status, manifest_path

import json
import os
import subprocess
from pathlib import Path

import pytest

BIN = os.environ.get("RELAGENT_BIN", "relagent")
FIXTURES = Path(os.environ.get("RELAGENT_FIXTURES", Path(__file__).resolve().parents[1] / "fixtures"))


def relagent(*args, cwd=None):
    return subprocess.run([BIN, "--log-level", "warn", *map(str, args)], capture_output=True, text=True, cwd=cwd)


@pytest.fixture
def fixtures():
    return FIXTURES


def write_config(path, architecture, dataset, roles, script, output, extra=""):
    """Scripted run config with every role bound to a placeholder model."""
    script_path = path.with_suffix(".json")
    script_path.write_text(json.dumps(script))
    lines = [
        f'architecture = "{architecture}"',
        f'dataset = "{dataset}"',
        f'data_dir = "{FIXTURES / dataset}"',
        f'output_dir = "{output}"',
        f'scripted = "{script_path}"',
        extra,
    ]
    for role in roles:
        lines += [f"[roles.{role}]", f'model_id = "{role}-model"']
    path.write_text("\n".join(lines) + "\n")
    return path

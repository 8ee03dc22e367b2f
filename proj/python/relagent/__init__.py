"""Python front end for the relagent relation classification harness."""

import json
from os import PathLike

from . import _relagent
from ._relagent import RelagentError, builtin_labels, f1_from_counts, nearest, parse_critique

__all__ = [
    "RelagentError",
    "builtin_labels",
    "dataset_summary",
    "f1_from_counts",
    "nearest",
    "parse_critique",
    "parse_label",
    "run",
    "score",
]


def _labels_arg(labels):
    return labels if isinstance(labels, str) else json.dumps(labels)


def parse_label(raw: str, labels) -> str:
    """Canonical label in `raw`; `labels` is a dataset name or a label-set dict."""
    return _relagent.parse_label(raw, _labels_arg(labels))


def score(predictions, golds, labels, exclude_no_relation=False) -> dict:
    """Macro/micro F1. `predictions` maps instance id to a label or None (an error record)."""
    records = []
    for instance_id, label in predictions.items():
        record = {"instance_id": instance_id, "architecture": "zero_shot", "attempts_used": 1, "transcript_ref": ""}
        record.update({"predicted_label": label} if label is not None else {"error": "no label"})
        records.append(record)
    return json.loads(_relagent.score_json(json.dumps(records), dict(golds), _labels_arg(labels),
                                           exclude_no_relation))


def dataset_summary(dataset: str, data_dir: str | PathLike) -> dict:
    return json.loads(_relagent.dataset_summary_json(dataset, str(data_dir)))


def run(config_path: str | PathLike, output_dir: str | PathLike | None = None, limit: int | None = None) -> dict:
    """Runs a TOML config and returns the report with run statistics."""
    return json.loads(_relagent.run_json(str(config_path), None if output_dir is None else str(output_dir), limit))

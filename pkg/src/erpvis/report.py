"""Report rendering: delimited tables, JSON documents, and figures.

Evaluation reports serialize to JSON; comparison tables additionally render
as aligned plain text and CSV. The same payloads can be drawn as figures
(accuracy bars, loss curves, confusion heatmaps) written as PNG files
alongside the delimited output.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import FormatError

CSV_COLUMNS = ("protocol", "label_kind", "framework", "accuracy", "improvement")

# Stripped so PNG bytes depend only on the plotted payload.
_PNG_METADATA = {"Software": None}


def _pct(x) -> str:
    return f"{100.0 * x:.2f}%" if x is not None else ""


def comparison_to_csv(payload: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in payload["rows"]:
        writer.writerow([
            row["protocol"], row["label_kind"], row["framework"],
            f"{row['accuracy']:.6f}",
            "" if row.get("improvement") is None else f"{row['improvement']:.6f}",
        ])
    return buf.getvalue()


def comparison_to_text(payload: dict) -> str:
    headers = ("Protocol", "Labels", "Framework", "Accuracy", "Improvement")
    body = [
        (row["protocol"], row["label_kind"], row["framework"],
         _pct(row["accuracy"]), _pct(row.get("improvement")))
        for row in payload["rows"]
    ]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h)
              for i, h in enumerate(headers)]
    lines = []
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines.append(fmt.format(*headers))
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append(fmt.format(*r))
    reference = payload.get("reference") or {}
    if reference:
        lines.append("")
        lines.append("Reference accuracies from the original 10-subject recordings:")
        for protocol, kinds in sorted(reference.items()):
            for label_kind, accs in sorted(kinds.items()):
                entries = ", ".join(f"{name} {_pct(v)}" for name, v in sorted(accs.items()))
                lines.append(f"  {protocol} / {label_kind}: {entries}")
    return "\n".join(lines) + "\n"


def eval_report_to_text(payload: dict) -> str:
    lines = [
        f"protocol:  {payload['protocol']}"
        + (f" (subject {payload['subject_id']})" if payload.get("subject_id") is not None else ""),
        f"labels:    {payload['label_kind']}",
        f"accuracy:  {_pct(payload['accuracy'])}",
        f"n_train:   {payload['n_train']}",
        f"n_test:    {payload['n_test']}",
        "confusion (rows = true class):",
    ]
    confusion = np.asarray(payload["confusion"])
    width = max(len(str(int(v))) for v in confusion.ravel()) if confusion.size else 1
    for row in confusion:
        lines.append("  " + " ".join(f"{int(v):>{width}}" for v in row))
    return "\n".join(lines) + "\n"


def eval_report_to_csv(payload: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerow([
        payload["protocol"] if payload.get("subject_id") is None
        else f"within_subject:{payload['subject_id']}",
        payload["label_kind"], "model", f"{payload['accuracy']:.6f}", "",
    ])
    return buf.getvalue()


def payload_kind(payload: dict) -> str:
    if payload.get("kind") == "comparison":
        return "comparison"
    if "confusion" in payload:
        return "eval_report"
    raise FormatError("report payload is neither a comparison nor an evaluation report")


def render_table(payload: dict, fmt: str) -> str:
    kind = payload_kind(payload)
    if fmt == "json":
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        return comparison_to_csv(payload) if kind == "comparison" else eval_report_to_csv(payload)
    if fmt == "text":
        return comparison_to_text(payload) if kind == "comparison" else eval_report_to_text(payload)
    raise FormatError(f"unknown output format {fmt!r}")


def _save(fig, path: Path):
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def _fig_comparison_bars(payload: dict, path: Path):
    rows = [r for r in payload["rows"] if not r["protocol"].startswith("within_subject:")
            or r["protocol"] == "within_subject:mean"]
    label_kinds = sorted({r["label_kind"] for r in rows})
    frameworks = sorted({r["framework"] for r in rows})
    protocols = sorted({r["protocol"] for r in rows})
    fig, axes = plt.subplots(1, len(protocols), figsize=(5.5 * len(protocols), 4.0), squeeze=False)
    for ax, protocol in zip(axes[0], protocols):
        x = np.arange(len(label_kinds))
        width = 0.8 / len(frameworks)
        for j, fw in enumerate(frameworks):
            accs = []
            for lk in label_kinds:
                match = [r for r in rows if r["protocol"] == protocol
                         and r["label_kind"] == lk and r["framework"] == fw]
                accs.append(100.0 * match[0]["accuracy"] if match else 0.0)
            ax.bar(x + (j - (len(frameworks) - 1) / 2) * width, accs, width, label=fw)
        ax.set_xticks(x)
        ax.set_xticklabels(label_kinds)
        ax.set_ylabel("accuracy [%]")
        ax.set_title(protocol)
        ax.legend()
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def _fig_loss_curves(curves: dict, path: Path):
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    for name in sorted(curves):
        ax.plot(range(1, len(curves[name]) + 1), curves[name], label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.grid(alpha=0.3)
    if len(curves) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def _fig_confusion(payload: dict, path: Path):
    confusion = np.asarray(payload["confusion"], dtype=np.float64)
    share = confusion / np.maximum(confusion.sum(axis=1, keepdims=True), 1)
    fig, ax = plt.subplots(figsize=(5.0, 4.4))
    im = ax.imshow(share, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    title = payload["protocol"]
    if payload.get("subject_id") is not None:
        title += f" subject {payload['subject_id']}"
    ax.set_title(f"{title}, {payload['label_kind']} ({_pct(payload['accuracy'])})")
    fig.colorbar(im, ax=ax, label="row share")
    if confusion.shape[0] <= 12:
        for i in range(confusion.shape[0]):
            for j in range(confusion.shape[1]):
                ax.text(j, i, int(confusion[i, j]), ha="center", va="center",
                        color="white" if share[i, j] < 0.5 else "black", fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def save_figures(payload: dict, out_dir) -> list:
    """Render the payload's figures into out_dir; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    kind = payload_kind(payload)
    if kind == "comparison":
        bars = out_dir / "accuracy_comparison.png"
        _fig_comparison_bars(payload, bars)
        written.append(bars)
        if payload.get("loss_curves"):
            losses = out_dir / "loss_curves.png"
            _fig_loss_curves(payload["loss_curves"], losses)
            written.append(losses)
        for rep in payload.get("reports", []):
            if rep["protocol"] == "cross_subject":
                name = f"confusion_{rep['label_kind']}_{rep['config'].get('train', {}).get('input_kind', 'erp')}.png"
                fig_path = out_dir / name
                _fig_confusion(rep, fig_path)
                written.append(fig_path)
    else:
        fig_path = out_dir / "confusion.png"
        _fig_confusion(payload, fig_path)
        written.append(fig_path)
    return written

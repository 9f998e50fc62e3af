"""Optional figure rendering for reports (headless matplotlib).

Three figures, each skipped when the records carry nothing to draw: win
rates per row, pooled attack density per row, and attacked-step count as a
function of lambda across OPT/oracle-reg rows.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _label(record) -> str:
    return f"{record.method} {record.parameter}".strip()


def _lambda_of(record) -> float | None:
    prefix = "lambda="
    if record.method in ("OPT", "oracle-reg") and \
            record.parameter.startswith(prefix):
        return float(record.parameter[len(prefix):])
    return None


def render_figures(records, out_dir) -> list[Path]:
    """Write PNGs next to the report; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = list(records)
    written: list[Path] = []

    with_wins = [r for r in records if r.aggregate and
                 r.aggregate.win_rate is not None]
    if with_wins:
        fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(with_wins)), 3.2))
        ax.bar(range(len(with_wins)),
               [r.aggregate.win_rate for r in with_wins], color="#31688e")
        ax.set_xticks(range(len(with_wins)))
        ax.set_xticklabels([_label(r) for r in with_wins],
                           rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("win rate (median-3)")
        ax.set_ylim(0, 1)
        fig.tight_layout()
        path = out / "win_rates.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    with_attacks = [r for r in records if r.aggregate and
                    r.aggregate.attacked_steps and r.aggregate.total_steps > 0]
    if with_attacks:
        fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(with_attacks)), 3.2))
        density = [sum(r.aggregate.attacked_steps)
                   / (len(r.aggregate.attacked_steps) * r.aggregate.total_steps)
                   for r in with_attacks]
        ax.bar(range(len(with_attacks)), density, color="#35b779")
        ax.set_xticks(range(len(with_attacks)))
        ax.set_xticklabels([_label(r) for r in with_attacks],
                           rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("attacked / total steps")
        fig.tight_layout()
        path = out / "attack_density.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    sweep = sorted(
        ((lam, r) for r in records
         if r.aggregate and (lam := _lambda_of(r)) is not None),
        key=lambda pair: pair[0])
    if len(sweep) >= 2:
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.plot([lam for lam, _ in sweep],
                [sum(r.aggregate.attacked_steps) for _, r in sweep],
                marker="o", color="#443983")
        ax.set_xlabel("lambda")
        ax.set_ylabel("mean attacked steps")
        fig.tight_layout()
        path = out / "sparsity_lambda.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    return written

"""Delimited outputs and the figures rendered next to them."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

EVAL_COLUMNS = [
    "dataset", "image", "setting", "seed",
    "bpp", "psnr_db", "encode_s", "decode_ms", "status",
]


@dataclass
class EvalRecord:
    dataset: str
    image: str
    setting: int
    seed: int
    bpp: float | None = None
    psnr_db: float | None = None
    encode_s: float | None = None
    decode_ms: float | None = None
    status: str = "ok"

    def row(self):
        fmt = lambda v, spec: "" if v is None else format(v, spec)
        return [
            self.dataset, self.image, self.setting, self.seed,
            fmt(self.bpp, ".6f"), fmt(self.psnr_db, ".4f"),
            fmt(self.encode_s, ".3f"), fmt(self.decode_ms, ".3f"), self.status,
        ]


def sort_records(records):
    return sorted(records, key=lambda r: (r.image, r.setting, r.seed))


def write_eval_csv(records, path) -> None:
    """Records sorted by (image, setting, seed); header row always present."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(EVAL_COLUMNS)
        for r in sort_records(records):
            writer.writerow(r.row())


def read_eval_csv(path):
    records = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            records.append(
                EvalRecord(
                    dataset=row["dataset"],
                    image=row["image"],
                    setting=int(row["setting"]),
                    seed=int(row["seed"]),
                    bpp=float(row["bpp"]) if row["bpp"] else None,
                    psnr_db=float(row["psnr_db"]) if row["psnr_db"] else None,
                    encode_s=float(row["encode_s"]) if row["encode_s"] else None,
                    decode_ms=float(row["decode_ms"]) if row["decode_ms"] else None,
                    status=row["status"],
                )
            )
    return records


def write_rd_datafile(records, path) -> None:
    """Gnuplot-friendly rate-distortion points, one index block per setting."""
    ok = [r for r in sort_records(records) if r.status == "ok"]
    settings = sorted({r.setting for r in ok})
    with open(path, "w") as f:
        f.write("# rate-distortion points: bpp psnr_db  (blocks indexed by setting)\n")
        for i, s in enumerate(settings):
            if i:
                f.write("\n\n")
            f.write(f"# setting {s}\n")
            for r in sorted((r for r in ok if r.setting == s), key=lambda r: r.bpp):
                f.write(f"{r.bpp:.6f} {r.psnr_db:.4f}\n")


def rd_figure(records, path, title="Rate-distortion") -> None:
    ok = [r for r in sort_records(records) if r.status == "ok"]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for s in sorted({r.setting for r in ok}):
        pts = sorted(((r.bpp, r.psnr_db) for r in ok if r.setting == s))
        if not pts:
            continue
        xs, ys = zip(*pts)
        ax.plot(xs, ys, "o-", label=f"setting {s}")
    ax.set_xlabel("bpp")
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if ok:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def convergence_figure(reports_by_seed, path, title="Seed convergence") -> None:
    """PSNR-vs-step curves, one line per seed."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for seed in sorted(reports_by_seed):
        points = reports_by_seed[seed].points
        ax.plot([p.step for p in points], [p.psnr_db for p in points], label=f"seed {seed}")
    ax.set_xlabel("step")
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def ablation_figure(labels, bpps, psnrs, path, title="Ablation") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    bars = ax.bar(labels, psnrs, color=["#3b6ea5", "#a55b3b"])
    for bar, bpp in zip(bars, bpps):
        ax.annotate(
            f"{bpp:.3f} bpp",
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center", va="bottom", fontsize=9,
        )
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def bd_rate(anchor_bpp, anchor_psnr, test_bpp, test_psnr) -> float:
    """Average bitrate change of test vs anchor in percent (negative = smaller).

    Fits log-rate as a polynomial in PSNR (cubic when four or more points
    are available) and integrates the gap over the overlapping PSNR range.
    """
    anchor_bpp = np.asarray(anchor_bpp, dtype=float)
    anchor_psnr = np.asarray(anchor_psnr, dtype=float)
    test_bpp = np.asarray(test_bpp, dtype=float)
    test_psnr = np.asarray(test_psnr, dtype=float)
    if anchor_bpp.size < 2 or test_bpp.size < 2:
        raise ValueError("need at least two rate-distortion points per curve")
    lo = max(anchor_psnr.min(), test_psnr.min())
    hi = min(anchor_psnr.max(), test_psnr.max())
    if hi <= lo:
        raise ValueError("rate-distortion curves do not overlap in PSNR")

    def avg_log_rate(psnr_pts, bpp_pts):
        deg = min(3, psnr_pts.size - 1)
        poly = np.polyfit(psnr_pts, np.log10(bpp_pts), deg)
        integ = np.polyint(poly)
        return (np.polyval(integ, hi) - np.polyval(integ, lo)) / (hi - lo)

    gap = avg_log_rate(test_psnr, test_bpp) - avg_log_rate(anchor_psnr, anchor_bpp)
    return float((10.0**gap - 1.0) * 100.0)

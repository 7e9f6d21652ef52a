"""The six performance metrics over on-mask pixels of a prediction/truth pair.

RIE  sum|pred - truth| / sum|truth|
ICC  Pearson correlation of the pixel vectors
DC   Dice coefficient on non-background supports after rounding both
     images to 2 decimals; the intersection counts pixels whose rounded
     values agree
RMSE sqrt(mean (truth - pred)^2)
MAE  mean |truth - pred|
RLE  ||pred - truth||_2 / ||truth||_2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phantom import PixelImage

BACKGROUND = 1.0


@dataclass(frozen=True)
class MetricReport:
    rie: float
    icc: float
    dc: float
    rmse: float
    mae: float
    rle: float
    n_pixels: int
    icc_degenerate: bool = False

    def as_dict(self) -> dict:
        return {"rie": self.rie, "icc": self.icc, "dc": self.dc,
                "rmse": self.rmse, "mae": self.mae, "rle": self.rle}


def evaluate(pred: PixelImage, truth: PixelImage) -> MetricReport:
    """Compute all six metrics over the common on-mask pixels."""
    if pred.grid.shape != truth.grid.shape or not np.array_equal(pred.mask, truth.mask):
        raise ValueError("prediction and truth masks differ")
    p = pred.grid[pred.mask].astype(float)
    t = truth.grid[truth.mask].astype(float)
    n = p.size
    if not np.any(t):
        raise ValueError("truth is identically zero on the mask")

    diff = p - t
    rie = float(np.sum(np.abs(diff)) / np.sum(np.abs(t)))
    rle = float(np.linalg.norm(diff) / np.linalg.norm(t))
    rmse = float(np.sqrt(np.mean(diff ** 2)))
    mae = float(np.mean(np.abs(diff)))

    pc = p - p.mean()
    tc = t - t.mean()
    sp = np.sqrt(np.sum(pc ** 2))
    st = np.sqrt(np.sum(tc ** 2))
    degenerate = sp == 0.0 or st == 0.0
    icc = 0.0 if degenerate else float(np.sum(pc * tc) / (sp * st))

    rp = np.round(p, 2)
    rt = np.round(t, 2)
    bg = round(BACKGROUND, 2)
    X = rt != bg
    Y = rp != bg
    matched = int(np.sum(X & Y & (rt == rp)))
    total = int(X.sum() + Y.sum())
    dc = 1.0 if total == 0 else 2.0 * matched / total

    return MetricReport(rie=rie, icc=icc, dc=dc, rmse=rmse, mae=mae, rle=rle,
                        n_pixels=n, icc_degenerate=degenerate)


CSV_HEADER = "sample,method,delta,rie,icc,dc,rmse,mae,rle"


def csv_row(sample: str, method: str, delta: float, report_dict: dict) -> str:
    vals = ",".join(f"{report_dict[k]:.17g}"
                    for k in ("rie", "icc", "dc", "rmse", "mae", "rle"))
    return f"{sample},{method},{delta:.17g},{vals}"


def write_report_csv(path, rows: list[str]) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")

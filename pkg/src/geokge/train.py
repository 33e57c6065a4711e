"""Stochastic training loops and the finite-difference gradient checker.

Both objectives alternate their two component losses one mini-batch at a
time (equivalent in expectation to the summed objective, cheaper per step)
and optimize every parameter with Adam. Runs are deterministic given the
seed: all sampling comes from one numpy generator and torch is pinned to a
single thread while training.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import NonFiniteLoss
from .kg import FWD, INV, GeoKG, KGSplit
from .losses import LOSSES, KGItem, LPItem, SSLItem
from .model import Model
from .sampler import QAExample, SSLDataset, config_hash


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 1.0
    lr: float = 0.01
    batch_size: int = 32
    steps: int = 1000
    neg_size: int = 10
    nbr_sizes: tuple[int, ...] = (1, 2, 3)
    seed: int = 0
    checkpoint_every: int = 0  # 0: only the final checkpoint
    include_kg: bool | None = None  # None: decided by the model mode
    log_every: int = 50
    reproducible: bool = True

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.batch_size < 1 or self.steps < 1 or self.neg_size < 1:
            raise ValueError("sizes must be positive")

    def to_json(self) -> dict:
        return {
            "margin": self.margin,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "steps": self.steps,
            "neg_size": self.neg_size,
            "nbr_sizes": list(self.nbr_sizes),
            "seed": self.seed,
            "include_kg": self.include_kg,
        }

    @staticmethod
    def from_json(obj: dict) -> "TrainConfig":
        known = {k: v for k, v in obj.items() if k in TrainConfig.__dataclass_fields__}
        if "nbr_sizes" in known:
            known["nbr_sizes"] = tuple(known["nbr_sizes"])
        return TrainConfig(**known)


@dataclass
class History:
    rows: list[dict] = field(default_factory=list)

    def add(self, step: int, total: float, component: str, wall_ms: float):
        self.rows.append(
            {
                "step": step,
                "loss_total": total,
                "loss_component": component,
                "wall_ms": wall_ms,
            }
        )

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(
                f, fieldnames=["step", "loss_total", "loss_component", "wall_ms"]
            )
            w.writeheader()
            w.writerows(self.rows)

    def losses(self, component: str | None = None) -> list[float]:
        return [
            r["loss_total"]
            for r in self.rows
            if component is None or r["loss_component"] == component
        ]


class _TypeMatchedNegatives:
    """Uniform negatives of the same type, excluding the positive."""

    def __init__(self, kg: GeoKG):
        self.by_type: dict[str, list[str]] = {}
        for e in sorted(kg.entities):
            self.by_type.setdefault(kg.entities[e], []).append(e)

    def draw(self, positive: str, etype: str, size: int, rng) -> tuple[str, ...]:
        pool = self.by_type[etype]
        out: list[str] = []
        # rejection is cheap: the pool is much larger than `size` in practice
        limit = 20 * size + 10
        for _ in range(limit):
            cand = pool[rng.integers(len(pool))]
            if cand != positive and cand not in out:
                out.append(cand)
                if len(out) == size:
                    break
        if not out:
            raise NonFiniteLoss(f"no type-matched negatives for {positive}")
        return tuple(out)


def _kg_batch(
    kg: GeoKG, negs: _TypeMatchedNegatives, cfg: TrainConfig, rng
) -> list[KGItem]:
    pool = sorted({e for h, _, t in kg.triples for e in (h, t)})
    items = []
    for _ in range(cfg.batch_size):
        e = pool[rng.integers(len(pool))]
        nbrs = sorted(kg.neighborhood(e))
        n = int(cfg.nbr_sizes[rng.integers(len(cfg.nbr_sizes))])
        n = min(n, len(nbrs))
        picks = rng.choice(len(nbrs), size=n, replace=False)
        items.append(
            KGItem(
                entity=e,
                neighbors=tuple(nbrs[i] for i in sorted(picks)),
                negatives=negs.draw(e, kg.entities[e], cfg.neg_size, rng),
            )
        )
    return items


def _qa_batch(examples: list[QAExample], cfg: TrainConfig, rng) -> list[QAExample]:
    idx = rng.integers(len(examples), size=cfg.batch_size)
    return [examples[i] for i in idx]


def _lp_batch(
    kg: GeoKG, negs: _TypeMatchedNegatives, cfg: TrainConfig, rng
) -> list[LPItem]:
    items = []
    for _ in range(cfg.batch_size):
        h, r, t = kg.triples[rng.integers(len(kg.triples))]
        items.append(
            LPItem(
                head=h,
                rel=r,
                tail=t,
                neg_tails=negs.draw(t, kg.entities[t], cfg.neg_size, rng),
                neg_heads=negs.draw(h, kg.entities[h], cfg.neg_size, rng),
            )
        )
    return items


def _ssl_batch(
    kg: GeoKG, ds: SSLDataset, negs: _TypeMatchedNegatives, cfg: TrainConfig, rng
) -> list[SSLItem]:
    tasks: list[SSLItem] = []
    n_fwd = len(ds.forward)
    total = n_fwd + len(ds.backward)
    if total == 0:
        raise ValueError("SSL dataset has no triples")
    for _ in range(cfg.batch_size):
        i = int(rng.integers(total))
        if i < n_fwd:
            h, r, t = ds.forward[i]
            tasks.append(
                SSLItem(
                    subject=h,
                    rel=r,
                    direction=FWD,
                    target=t,
                    negatives=negs.draw(t, kg.entities[t], cfg.neg_size, rng),
                )
            )
        else:
            h, r, t = ds.backward[i - n_fwd]
            tasks.append(
                SSLItem(
                    subject=t,
                    rel=r,
                    direction=INV,
                    target=h,
                    negatives=negs.draw(h, kg.entities[h], cfg.neg_size, rng),
                )
            )
    return tasks


def _run(
    model: Model,
    cfg: TrainConfig,
    phases: list[tuple[str, callable]],
    checkpoint_dir: str | Path | None,
) -> History:
    if cfg.reproducible:
        torch.set_num_threads(1)
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(0.9, 0.999))
    history = History()
    model.config_hash = config_hash({**cfg.to_json(), **model.config.to_json()})
    for step in range(1, cfg.steps + 1):
        name, build = phases[(step - 1) % len(phases)]
        batch = build(rng)
        t0 = time.perf_counter()
        opt.zero_grad()
        loss = LOSSES[name](model, batch, cfg.margin, rng)
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"step {step}: {name} loss = {loss.item()}")
        loss.backward()
        opt.step()
        history.add(step, float(loss.item()), name, (time.perf_counter() - t0) * 1e3)
        if (
            checkpoint_dir
            and cfg.checkpoint_every
            and step % cfg.checkpoint_every == 0
        ):
            from .checkpoint import save_checkpoint

            save_checkpoint(model, Path(checkpoint_dir) / f"step{step:06d}.ckpt")
    return history


def train_qa(
    model: Model,
    split: KGSplit,
    qa_train: list[QAExample],
    cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> History:
    """Alternate neighborhood-reconstruction and query-answer mini-batches."""
    if not qa_train:
        raise ValueError("empty QA training set")
    kg = split.train
    negs = _TypeMatchedNegatives(kg)
    include_kg = (
        cfg.include_kg if cfg.include_kg is not None else model.config.uses_kg_objective
    )
    phases: list[tuple[str, callable]] = []
    if include_kg:
        phases.append(("kg", lambda rng: _kg_batch(kg, negs, cfg, rng)))
    phases.append(("qa", lambda rng: _qa_batch(qa_train, cfg, rng)))
    return _run(model, cfg, phases, checkpoint_dir)


def train_ssl(
    model: Model,
    split: KGSplit,
    ssl_train: SSLDataset,
    cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> History:
    """Alternate link-prediction and coordinate-lifting mini-batches."""
    kg = split.train
    negs = _TypeMatchedNegatives(kg)
    phases = [
        ("lp", lambda rng: _lp_batch(kg, negs, cfg, rng)),
        ("ssl", lambda rng: _ssl_batch(kg, ssl_train, negs, cfg, rng)),
    ]
    history = _run(model, cfg, phases, checkpoint_dir)
    model.liftable_relations = ssl_train.relations
    return history


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(
    model: Model,
    loss_kind: str,
    batch,
    epsilon: float = 1e-5,
    margin: float = 1.0,
    rng_seed: int = 0,
    _corrupt_scale: float = 1.0,
) -> float:
    """Worst relative error between autograd and central differences.

    The model is upcast to float64; every entry of every parameter is
    perturbed. Footprint draws are replayed identically on each evaluation
    by reseeding the generator. Relative error uses |a - n| / (|a| + |n|)
    with a small absolute floor so flat regions compare as exact.
    `_corrupt_scale` multiplies the analytic gradient; values != 1 exist only
    to verify that the checker itself detects wrong gradients.
    """
    loss_fn = LOSSES[loss_kind]
    m = model.astype(torch.float64)

    def evaluate() -> torch.Tensor:
        return loss_fn(m, batch, margin, np.random.default_rng(rng_seed))

    loss = evaluate()
    for p in m.parameters():
        if p.grad is not None:
            p.grad = None
    loss.backward()

    worst = 0.0
    for name, p in m.params.items():
        analytic = (
            p.grad.detach().clone()
            if p.grad is not None
            else torch.zeros_like(p)
        ) * _corrupt_scale
        flat = p.detach().reshape(-1)
        grad_flat = analytic.reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + epsilon
            f_plus = evaluate().item()
            with torch.no_grad():
                flat[i] = orig - epsilon
            f_minus = evaluate().item()
            with torch.no_grad():
                flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * epsilon)
            a = grad_flat[i].item()
            denom = abs(a) + abs(numeric)
            if denom < 1e-7:
                continue
            rel = abs(a - numeric) / denom
            worst = max(worst, rel)
    return worst


def make_probe_batch(
    model: Model, split: KGSplit, loss_kind: str, size: int, seed: int
):
    """Small batches for gradient checking, drawn from the training graph."""
    rng = np.random.default_rng(seed)
    cfg = TrainConfig(batch_size=size, neg_size=3, seed=seed)
    kg = split.train
    negs = _TypeMatchedNegatives(kg)
    if loss_kind == "kg":
        return _kg_batch(kg, negs, cfg, rng)
    if loss_kind == "lp":
        return _lp_batch(kg, negs, cfg, rng)
    if loss_kind == "ssl":
        from .sampler import build_ssl_dataset

        ds = build_ssl_dataset(kg.triples, kg)
        return _ssl_batch(kg, ds, negs, cfg, rng)
    raise ValueError(f"no probe builder for {loss_kind!r}")

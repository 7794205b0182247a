"""Batch evaluation of packing policies over datasets, and report rendering."""

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from multiprocessing import get_context
from typing import List, Optional

import numpy as np

from .attacker import Attacker, attack_episode
from .instances import Dataset, dumps, select_attacked
from .policies import Packer, run_episode

CSV_HEADER = ("policy", "attacker", "N_B", "beta", "uti", "std", "num")


class ModeMismatch(ValueError):
    pass


@dataclass
class EvalReport:
    """Per-instance results plus Uti (mean %), Std (population std, % points) and Num."""

    policy: str
    attacker: str
    nb: int
    beta: float
    utilizations: List[float] = field(default_factory=list)
    counts: List[int] = field(default_factory=list)
    attacked: List[bool] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    fingerprint: str = ""

    @property
    def uti(self) -> float:
        return float(np.mean(self.utilizations) * 100.0) if self.utilizations else 0.0

    @property
    def std(self) -> float:
        return float(np.std(self.utilizations) * 100.0) if self.utilizations else 0.0

    @property
    def num(self) -> float:
        return float(np.mean(self.counts)) if self.counts else 0.0

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "attacker": self.attacker,
            "N_B": self.nb,
            "beta": self.beta,
            "fingerprint": self.fingerprint,
            "Uti": self.uti,
            "Std": self.std,
            "Num": self.num,
            "instances": [
                {"index": i, "seed": s, "utilization": u, "count": c, "attacked": a}
                for i, (s, u, c, a) in enumerate(zip(self.seeds, self.utilizations, self.counts, self.attacked))
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        inst = d.get("instances", [])
        return cls(
            policy=d["policy"],
            attacker=d["attacker"],
            nb=int(d["N_B"]),
            beta=float(d["beta"]),
            utilizations=[float(r["utilization"]) for r in inst],
            counts=[int(r["count"]) for r in inst],
            attacked=[bool(r["attacked"]) for r in inst],
            seeds=[int(r["seed"]) for r in inst],
            fingerprint=d.get("fingerprint", ""),
        )


def fingerprint(packer: Packer, dataset: Dataset, attacker: Optional[Attacker], nb: int, beta: float) -> str:
    """Digest of everything that determines a report; the thread count is excluded."""
    cfg = {
        "policy": packer.policy.kind,
        "container": list(packer.container.dims),
        "mode": packer.container.mode,
        "tau": packer.tau,
        "n_l": packer.n_l,
        "full_lines": packer.full_lines,
        "attacker": None
        if attacker is None
        else {
            "kind": attacker.kind,
            "horizon": attacker.horizon,
            "width": attacker.width,
            "depth": attacker.depth,
            "rollout_depth": attacker.rollout_depth,
        },
        "nb": nb,
        "beta": beta,
        "data": hashlib.sha256(dumps(dataset).encode()).hexdigest(),
    }
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _run_one(job):
    packer, attacker, items, nb, attack = job
    if attack:
        res = attack_episode(attacker, items, packer, nb)
    else:
        res = run_episode(packer, items, nb=nb)
    return res.utilization, res.count


def evaluate(
    packer: Packer,
    dataset: Dataset,
    attacker: Optional[Attacker] = None,
    nb: int = 1,
    beta: float = 100.0,
    threads: int = 1,
) -> EvalReport:
    """Run ``packer`` over every instance in index order.

    Without an attacker the stored sequences are packed as they are. With
    one, a seeded ``beta``% of instances are attacked live and the rest run
    nominally.
    """
    c = packer.container
    for inst in dataset:
        if inst.mode != c.mode or tuple(float(v) for v in inst.container) != tuple(float(v) for v in c.dims):
            raise ModeMismatch(
                f"instance {inst.mode} {tuple(inst.container)} does not match packer {c.mode} {c.dims}"
            )
    if attacker is None:
        chosen = set()
        beta = dataset.beta
    else:
        chosen = set(select_attacked(len(dataset), beta, dataset.spec.seed))
    jobs = [(packer, attacker, inst.items, nb, i in chosen) for i, inst in enumerate(dataset)]
    threads = max(1, int(threads or 1))
    if threads == 1 or len(jobs) < 2:
        results = [_run_one(j) for j in jobs]
    else:
        with get_context("fork" if hasattr(os, "fork") else "spawn").Pool(min(threads, len(jobs))) as pool:
            results = pool.map(_run_one, jobs, chunksize=1)
    return EvalReport(
        policy=packer.policy.kind,
        attacker="none" if attacker is None else attacker.label,
        nb=int(nb),
        beta=float(beta),
        utilizations=[float(u) for u, _ in results],
        counts=[int(n) for _, n in results],
        attacked=[bool(i in chosen or inst.attacked) for i, inst in enumerate(dataset)],
        seeds=[inst.seed for inst in dataset],
        fingerprint=fingerprint(packer, dataset, attacker, nb, beta),
    )


def report(rep: EvalReport, fmt: str = "csv") -> bytes:
    """Render a report as CSV (one row per instance) or JSON."""
    if fmt == "json":
        return (json.dumps(rep.to_dict(), indent=2) + "\n").encode()
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    std = repr(rep.std)
    for u, n in zip(rep.utilizations, rep.counts):
        w.writerow([rep.policy, rep.attacker, rep.nb, repr(rep.beta), repr(u * 100.0), std, n])
    return buf.getvalue().encode()

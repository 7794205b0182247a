"""Command line entry point: gen, pack, attack, eval, mdp, report."""

import argparse
import json
import os
import sys

import numpy as np

from . import robust_mdp as rm
from .attacker import Attacker
from .geometry import DEFAULT_TAU
from .harness import EvalReport, evaluate, report
from .instances import InstanceSpec, generate, load, dumps, mixture
from .policies import POLICY_KINDS, Packer, PackingPolicy, run_episode

DEFAULTS = {
    "seed": 0,
    "threads": os.cpu_count() or 1,
    "mode": "discrete",
    "nb": 1,
    "alpha": 1.0,
    "rho": 0.1,
    "rho_w": 0.1,
    "beta": 100.0,
    "policy": "DBL",
    "attacker": "none",
    "tau": DEFAULT_TAU,
    "instances": 200,
    "items": 150,
    "horizon": None,
    "width": 3,
    "depth": 2,
    "rollout_depth": None,
    "format": "json",
    "count": 20,
}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="JSON file of option defaults; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--mode", choices=("discrete", "continuous"))
    p.add_argument("--nb", type=int, help="observable window size N_B")
    p.add_argument("--alpha", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--rho-w", dest="rho_w", type=float)
    p.add_argument("--beta", type=float, help="percent of instances to attack")
    p.add_argument("--policy", choices=POLICY_KINDS)
    p.add_argument("--attacker", choices=("none", "Greedy", "Beam", "Exhaustive"))
    p.add_argument("--tau", type=float, help="minimum supported base fraction")
    p.add_argument("--horizon", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--rollout-depth", dest="rollout_depth", type=int)
    p.add_argument("--out", help="output file (default stdout)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="robustpack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen", parents=[common], help="generate a seeded dataset (JSONL)")
    g.add_argument("--instances", type=int, default=argparse.SUPPRESS)
    g.add_argument("--items", type=int, default=argparse.SUPPRESS)
    for name in ("pack", "attack"):
        p = sub.add_parser(name, parents=[common], help=f"{name} one instance and print its trace")
        p.add_argument("--data", required=True)
        p.add_argument("--index", type=int, default=0)
    e = sub.add_parser("eval", parents=[common], help="evaluate a policy over a dataset")
    e.add_argument("--data", help="dataset file; generated from --seed when omitted")
    e.add_argument("--instances", type=int, default=argparse.SUPPRESS)
    e.add_argument("--items", type=int, default=argparse.SUPPRESS)
    e.add_argument("--mixture", action="store_true", help="reorder beta%% of instances first, then pack them nominally")
    e.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
    m = sub.add_parser("mdp", parents=[common], help="run the robust-MDP property suites")
    m.add_argument("--suite", choices=("contraction", "duality", "bound", "ar2l"), default="contraction")
    m.add_argument("--count", type=int, default=argparse.SUPPRESS)
    r = sub.add_parser("report", parents=[common], help="convert a JSON evaluation report")
    r.add_argument("--input", required=True)
    r.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
    return parser


def resolve(ns: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    cfg_path = getattr(ns, "config", None)
    if cfg_path:
        with open(cfg_path, encoding="utf-8") as fh:
            cfg = json.load(fh)
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        opts.update(cfg)
    opts.update({k: v for k, v in vars(ns).items() if k != "config"})
    return opts


def _emit(data: bytes, out):
    if out:
        with open(out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _packer(o, container) -> Packer:
    return Packer(PackingPolicy(o["policy"]), container, tau=o["tau"])


def _attacker(o):
    if o["attacker"] == "none":
        return None
    return Attacker(o["attacker"], horizon=o["horizon"], width=o["width"], depth=o["depth"], rollout_depth=o["rollout_depth"])


def _trace(res) -> dict:
    return {
        "utilization": res.utilization,
        "count": res.count,
        "actions": res.actions,
        "order": [list(it.dims) for it in res.order],
        "placements": [{"item": list(p.item.dims), "anchor": list(p.anchor)} for p in res.placements],
    }


def _dataset(o):
    if o.get("data"):
        return load(o["data"])
    spec = InstanceSpec(mode=o["mode"], n_items=o["items"], n_instances=o["instances"], seed=o["seed"])
    return generate(spec)


def _mdp_suite(o) -> dict:
    rng = np.random.default_rng(o["seed"])
    cfg = rm.RobustConfig(alpha=o["alpha"], rho=o["rho"], rho_w=o["rho_w"])
    rows = []
    for k in range(o["count"]):
        S, A = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        gamma = float(rng.choice([0.8, 0.9, 0.95]))
        mdp = rm.random_mdp(rng, S, A, gamma)
        pi = rng.dirichlet(np.ones(A), size=S)
        Pw = rm.worst_case_kernel(mdp, pi, cfg.rho_w)
        rho_prime = max(cfg.rho_prime, cfg.alpha * rm.model_discrepancy(mdp.P, Pw))
        if o["suite"] == "contraction":
            V1, V2 = rng.normal(size=S) * 5, rng.normal(size=S) * 5
            row = {"gamma": gamma}
            for form in ("direct", "dual"):
                T1 = rm.adjustable_bellman(mdp, V1, pi, Pw, cfg.alpha, rho_prime, form)
                T2 = rm.adjustable_bellman(mdp, V2, pi, Pw, cfg.alpha, rho_prime, form)
                row[f"ratio_{form}"] = float(np.abs(T1 - T2).max() / np.abs(V1 - V2).max())
            vf = rm.fixed_point(mdp, pi, rm.RobustConfig(cfg.alpha, rho_prime / (1 + cfg.alpha), cfg.rho_w), Pw=Pw, method="kernel")
            row["iterations"] = vf.iterations
        elif o["suite"] == "duality":
            s, a = int(rng.integers(S)), int(rng.integers(A))
            V = rng.normal(size=S)
            d, _ = rm.inner_sup_direct(V, mdp.P[s, a], Pw[s, a], cfg.alpha, rho_prime)
            u, _ = rm.inner_sup_dual(V, mdp.P[s, a], Pw[s, a], cfg.alpha, rho_prime / (1 + cfg.alpha))
            row = {"direct": d, "dual": u, "gap": abs(d - u)}
        elif o["suite"] == "bound":
            Pm = rm.mixture_kernel(mdp, rng.normal(size=S), Pw, cfg.alpha, rho_prime)
            chk = rm.return_bound_check(mdp, pi, mdp.P, Pw, Pm, cfg.alpha)
            row = {"lhs": chk.lhs, "rhs": chk.rhs, "holds": chk.holds}
        else:
            res = rm.ar2l_policy_iteration(mdp, rm.RobustConfig(cfg.alpha, rho_prime / (1 + cfg.alpha), cfg.rho_w))
            row = {"policy": res.policy.tolist(), "objective": res.objective, "iterations": res.iterations, "cycle": res.cycle_detected}
        row.update({"states": S, "actions": A})
        rows.append(row)
    return {"suite": o["suite"], "seed": o["seed"], "alpha": cfg.alpha, "rho": cfg.rho, "rho_w": cfg.rho_w, "results": rows}


def run(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    o = resolve(ns)
    cmd = o["command"]
    if cmd == "gen":
        spec = InstanceSpec(mode=o["mode"], n_items=o["items"], n_instances=o["instances"], seed=o["seed"])
        _emit(dumps(generate(spec)).encode(), o.get("out"))
    elif cmd in ("pack", "attack"):
        ds = load(o["data"])
        inst = ds[o["index"]]
        packer = _packer(o, inst.make_container())
        atk = _attacker(o) if cmd == "attack" else None
        if cmd == "attack" and atk is None:
            raise ValueError("attack needs --attacker")
        res = run_episode(packer, inst.items, nb=o["nb"], attacker=atk)
        _emit((json.dumps(_trace(res)) + "\n").encode(), o.get("out"))
    elif cmd == "eval":
        ds = _dataset(o)
        packer = _packer(o, ds.spec.make_container())
        atk = _attacker(o)
        if o.get("mixture"):
            if atk is None:
                raise ValueError("--mixture needs --attacker")
            ds = mixture(ds, o["beta"], atk, packer, o["nb"])
            atk = None
        rep = evaluate(packer, ds, atk, nb=o["nb"], beta=o["beta"], threads=o["threads"])
        _emit(report(rep, o["format"]), o.get("out"))
    elif cmd == "mdp":
        _emit((json.dumps(_mdp_suite(o), indent=2) + "\n").encode(), o.get("out"))
    elif cmd == "report":
        with open(o["input"], encoding="utf-8") as fh:
            rep = EvalReport.from_dict(json.load(fh))
        fmt = o["format"] if "format" in vars(ns) else "csv"
        _emit(report(rep, fmt), o.get("out"))
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except SystemExit:
        raise
    except Exception as exc:  # report every failure as JSON on stderr
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2 if isinstance(exc, UsageError) else 1


if __name__ == "__main__":
    sys.exit(main())

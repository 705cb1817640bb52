"""Test suites: concrete launch cases, validators, generators, JSON form.

A suite is stored in an abstract, kernel-independent form (sequences as
strings, grids as row-major integer lists).  ``build_suite`` encodes it for
one particular kernel of the family, computing the ground truth from the
reference oracles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..simtvm import DEFAULT_BUDGET, DEFAULT_COST_MODEL, CostModel, LaunchConfig, launch
from .grid import DiffusionRate, diffusion_reference, pad_grid
from .kernels import FAMILY, load_kernel
from .sw import ALPHABET, ScoringParams, encode, sw_reference

SUITE_FORMAT = 1


@dataclass(frozen=True)
class Check:
    buffer: str
    index: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class Validator:
    """``exact``: checked cells must match bit for bit.

    ``stochastic``: for each compared buffer, the per-cell sample mean and
    variance over the replicate seeds must match the ground-truth replicates:
    ``|dmean| <= mean_tol * max(1, |mean|)`` and
    ``|dvar| <= var_tol * max(1, var)``.
    """
    mode: str = "exact"
    mean_tol: float = 0.0
    var_tol: float = 0.0

    def __post_init__(self):
        if self.mode not in ("exact", "stochastic"):
            raise ValueError(f"unknown validator mode {self.mode!r}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "mean_tol": self.mean_tol, "var_tol": self.var_tol}


@dataclass
class TestCase:
    name: str
    launch: LaunchConfig
    args: dict
    inputs: dict
    checks: tuple = ()
    seeds: tuple = (0,)
    # stochastic ground truth: buffer -> (index, samples[R, k])
    truth: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class


@dataclass
class TestSuite:
    name: str
    kernel: str
    validator: Validator
    fitness: list
    heldout: list
    spec: dict

    __test__ = False

    def cases(self, partition: str = "fitness") -> list:
        if partition == "fitness":
            return self.fitness
        if partition == "heldout":
            return self.heldout
        if partition == "all":
            return self.fitness + self.heldout
        raise ValueError(partition)

    def to_dict(self) -> dict:
        return dict(self.spec, format=SUITE_FORMAT, name=self.name, kernel=self.kernel,
                    validator=self.validator.to_dict())

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())


@dataclass
class CaseResult:
    passed: bool
    cycles: float
    reason: str = ""
    max_warp_cycles: int = 0
    results: list = field(default_factory=list)


def run_case(program, case: TestCase, validator: Validator,
             cost_model: CostModel = DEFAULT_COST_MODEL, cycle_budget: int = DEFAULT_BUDGET,
             keep_results: bool = False) -> CaseResult:
    """Launch ``program`` on every replicate seed of ``case`` and validate."""
    results = []
    for seed in case.seeds:
        res = launch(program, case.launch, case.inputs, case.args, seed, cycle_budget, cost_model)
        if not res.completed:
            reason = res.status if res.fault is None else f"fault:{res.fault.kind}@{res.fault.inst_id}"
            return CaseResult(False, float("nan"), reason, res.max_warp_cycles)
        results.append(res)
    cycles = float(np.mean([r.cycles for r in results]))
    max_wc = max(r.max_warp_cycles for r in results)
    reason = validate(validator, case, results)
    return CaseResult(reason is None, cycles, reason or "", max_wc, results if keep_results else [])


def validate(validator: Validator, case: TestCase, results: list) -> Optional[str]:
    """None when the outputs are acceptable, else a short mismatch reason."""
    if validator.mode == "exact":
        for res in results:
            for chk in case.checks:
                out = res.outputs.get(chk.buffer)
                if out is None or len(chk.index) and int(chk.index.max()) >= len(out):
                    return f"mismatch:@{chk.buffer} missing or too small"
                got = out[chk.index]
                if not np.array_equal(got, chk.values):
                    bad = int(np.flatnonzero(got != chk.values)[0])
                    return (f"mismatch:@{chk.buffer}[{int(chk.index[bad])}] "
                            f"got {int(got[bad])} want {int(chk.values[bad])}")
        return None
    for buf, (index, truth) in case.truth.items():
        got = np.array([r.outputs[buf][index] for r in results], dtype=np.float64)
        return_reason = compare_replicates(got, truth, validator.mean_tol, validator.var_tol)
        if return_reason is not None:
            return f"{return_reason} in @{buf}"
    return None


def compare_replicates(got: np.ndarray, truth: np.ndarray, mean_tol: float, var_tol: float) -> Optional[str]:
    got = np.asarray(got, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if got.shape[1:] != truth.shape[1:] or len(got) < 2 or len(truth) < 2:
        return "replicate shape mismatch"
    m_got, m_true = got.mean(axis=0), truth.mean(axis=0)
    v_got, v_true = got.var(axis=0, ddof=1), truth.var(axis=0, ddof=1)
    dm = np.abs(m_got - m_true) - mean_tol * np.maximum(1.0, np.abs(m_true))
    if (dm > 1e-12).any():
        k = int(np.argmax(dm))
        return f"mean mismatch at cell {k}: {m_got[k]:.3f} vs {m_true[k]:.3f}"
    dv = np.abs(v_got - v_true) - var_tol * np.maximum(1.0, v_true)
    if (dv > 1e-12).any():
        k = int(np.argmax(dv))
        return f"variance mismatch at cell {k}: {v_got[k]:.3f} vs {v_true[k]:.3f}"
    return None


def _threads(n: int, warp: int = 32) -> int:
    return max(warp, -(-n // warp) * warp)


# -- Smith-Waterman ---------------------------------------------------------

def sw_case(name: str, a: str, b: str, params: ScoringParams = ScoringParams()) -> TestCase:
    n, m = len(a), len(b)
    if m > 256 or n > 256:
        raise ValueError("sequences longer than 256 do not fit the kernel buffers")
    H, best, _ = sw_reference(a, b, params)
    checks = (Check("H", np.arange((n + 1) * (m + 1)), H.ravel().astype(np.int32)),
              Check("best", np.array([0]), np.array([best], dtype=np.int32)))
    return TestCase(name, LaunchConfig(1, _threads(m)),
                    dict(n=n, m=m, match=params.match, mismatch=params.mismatch, gap=params.gap),
                    {"A": encode(a), "B": encode(b)}, checks)


def random_sequence(rng: np.random.Generator, length: int) -> str:
    return "".join(ALPHABET[k] for k in rng.integers(0, 4, length))


def _pairs(rng, count, lengths):
    lo, hi = lengths
    out = []
    for _ in range(count):
        la, lb = rng.integers(lo, hi + 1, 2)
        out.append({"a": random_sequence(rng, int(la)), "b": random_sequence(rng, int(lb))})
    return out


def gen_sw_suite(n_pairs: int = 64, lengths=(16, 64), seed: int = 0, heldout_pairs: int = 16,
                 heldout_lengths=(128, 256), params: ScoringParams = ScoringParams(),
                 kernel: str = "sw_naive") -> TestSuite:
    if heldout_lengths[0] <= lengths[1] and heldout_pairs:
        raise ValueError("held-out sequences must be longer than fitness sequences")
    rng = np.random.default_rng(seed)
    spec = {
        "family": "sw",
        "params": {"match": params.match, "mismatch": params.mismatch, "gap": params.gap},
        "generator": {"n_pairs": n_pairs, "lengths": list(lengths), "seed": seed,
                      "heldout_pairs": heldout_pairs, "heldout_lengths": list(heldout_lengths)},
        "fitness": _pairs(rng, n_pairs, lengths),
        "heldout": _pairs(rng, heldout_pairs, heldout_lengths),
    }
    return build_suite(spec, kernel, name=f"sw-{seed}")


# -- grids ------------------------------------------------------------------

def diffusion_case(name: str, grid: np.ndarray, steps: int, rate: DiffusionRate, kernel: str) -> TestCase:
    grid = np.asarray(grid, dtype=np.int64)
    h, w = grid.shape
    if w * h > 4096 or w * h == 0:
        raise ValueError("grids must have between 1 and 4096 cells")
    want = diffusion_reference(grid, steps, rate).astype(np.int32)
    args = dict(w=w, h=h, steps=steps, rnum=rate.num, rshift=rate.shift)
    if kernel == "grid_diffusion_padded":
        padded = pad_grid(grid)
        index = (np.arange(h)[:, None] + 1) * (w + 2) + (np.arange(w)[None, :] + 1)
        inputs = {"G": padded.ravel()}
        checks = (Check("G", index.ravel(), want.ravel()),)
    else:
        inputs = {"G": grid.ravel()}
        checks = (Check("G", np.arange(w * h), want.ravel()),)
    return TestCase(name, LaunchConfig(1, _threads(w * h)), args, inputs, checks)


def random_grid(rng, width, height, margin=0, high=4096) -> np.ndarray:
    """Random concentrations, zero within ``margin`` cells of the border."""
    g = np.zeros((height, width), dtype=np.int64)
    if width > 2 * margin and height > 2 * margin:
        inner = g[margin:height - margin, margin:width - margin]
        inner[:] = rng.integers(0, high, inner.shape)
    return g


def random_agents(rng, width, height, density=0.2) -> np.ndarray:
    """Occupancy grid with agent ids 1..k placed on distinct cells."""
    cells = width * height
    k = max(1, int(round(density * cells)))
    where = rng.choice(cells, size=min(k, cells), replace=False)
    occ = np.zeros(cells, dtype=np.int64)
    occ[np.sort(where)] = np.arange(1, len(where) + 1)
    return occ.reshape(height, width)


def tcell_case(name: str, occ: np.ndarray, steps: int, seeds, kernel: str = "tcell_walk",
               reference: str = "tcell_walk") -> TestCase:
    occ = np.asarray(occ, dtype=np.int64)
    h, w = occ.shape
    if w * h > 4096:
        raise ValueError("grids must have at most 4096 cells")
    case = TestCase(name, LaunchConfig(1, _threads(w * h)), dict(w=w, h=h, steps=steps),
                    {"occ": occ.ravel()}, (), tuple(int(s) for s in seeds))
    # ground truth: replicate runs of the unmodified walk at the same seeds
    ref = load_kernel(reference)
    index = np.arange(w * h)
    samples = []
    for s in case.seeds:
        res = launch(ref, case.launch, case.inputs, case.args, s)
        if not res.completed:
            raise RuntimeError(f"reference walk did not complete: {res.status}")
        samples.append(res.outputs["visits"][index])
    case.truth = {"visits": (index, np.array(samples, dtype=np.int64))}
    return case


def gen_grid_suite(dims=(16, 16), steps: int = 8, seeds=(0, 1, 2, 3), replicates: int = 5,
                   heldout_dims=(64, 64), kernel: str = "grid_diffusion_padded",
                   rate: DiffusionRate = DiffusionRate(), margin: Optional[int] = None,
                   density: float = 0.2, mean_tol: float = 0.1, var_tol: float = 0.25) -> TestSuite:
    """Grid suite for the diffusion kernels (exact) or the T-cell walk (stochastic).

    Diffusion fitness grids keep a zero margin of ``steps + 1`` cells by
    default, so no mass reaches the border during the run; the held-out grid
    is larger and filled to the edge.
    """
    w, h = dims
    hw, hh = heldout_dims
    if hw * hh <= w * h:
        raise ValueError("held-out grid must be larger than the fitness grids")
    family = FAMILY[kernel]
    spec = {"family": family, "steps": steps,
            "generator": {"dims": [w, h], "seeds": list(seeds), "heldout_dims": [hw, hh]}}
    fitness, heldout = [], []
    if family == "diffusion":
        mg = steps + 1 if margin is None else margin
        spec["rate"] = {"num": rate.num, "shift": rate.shift}
        spec["generator"]["margin"] = mg
        for s in seeds:
            g = random_grid(np.random.default_rng(s), w, h, mg)
            fitness.append({"width": w, "height": h, "grid": g.ravel().tolist()})
        g = random_grid(np.random.default_rng(10_000 + seeds[0] if seeds else 10_000), hw, hh, 0)
        heldout.append({"width": hw, "height": hh, "grid": g.ravel().tolist()})
    elif family == "tcell":
        spec["replicates"] = [int(r) for r in range(1, replicates + 1)]
        spec["generator"]["density"] = density
        for s in seeds:
            g = random_agents(np.random.default_rng(s), w, h, density)
            fitness.append({"width": w, "height": h, "grid": g.ravel().tolist()})
        g = random_agents(np.random.default_rng(10_000 + (seeds[0] if seeds else 0)), hw, hh, density)
        heldout.append({"width": hw, "height": hh, "grid": g.ravel().tolist()})
        spec["validator"] = Validator("stochastic", mean_tol, var_tol).to_dict()
    else:
        raise ValueError(f"{kernel} is not a grid kernel")
    spec["fitness"], spec["heldout"] = fitness, heldout
    return build_suite(spec, kernel, name=f"{family}-{w}x{h}")


# -- abstract form <-> concrete cases --------------------------------------

def build_suite(spec: dict, kernel: Optional[str] = None, name: Optional[str] = None) -> TestSuite:
    """Encode an abstract suite description for ``kernel``."""
    spec = {k: v for k, v in spec.items() if k not in ("format", "name", "kernel", "validator")
            or (k == "validator" and spec.get("family") == "tcell")}
    family = spec["family"]
    kernel = kernel or {"sw": "sw_naive", "diffusion": "grid_diffusion_padded",
                        "tcell": "tcell_walk"}[family]
    if FAMILY.get(kernel) != family:
        raise ValueError(f"kernel {kernel} cannot run a {family} suite")
    name = name or f"{family}-suite"

    def grid_of(entry):
        return np.asarray(entry["grid"], dtype=np.int64).reshape(entry["height"], entry["width"])

    if family == "sw":
        params = ScoringParams(**spec["params"])
        validator = Validator("exact")
        make = lambda tag, k, e: sw_case(f"{tag}{k}", e["a"], e["b"], params)
    elif family == "diffusion":
        rate = DiffusionRate(**spec["rate"])
        validator = Validator("exact")
        make = lambda tag, k, e: diffusion_case(f"{tag}{k}", grid_of(e), spec["steps"], rate, kernel)
    else:
        validator = Validator(**spec.get("validator", {"mode": "stochastic"}))
        seeds = spec["replicates"]
        make = lambda tag, k, e: tcell_case(f"{tag}{k}", grid_of(e), spec["steps"], seeds, kernel)
    fitness = [make("fit", k, e) for k, e in enumerate(spec["fitness"])]
    heldout = [make("heldout", k, e) for k, e in enumerate(spec["heldout"])]
    return TestSuite(name, kernel, validator, fitness, heldout, spec)


def load_suite(path, kernel: Optional[str] = None) -> TestSuite:
    with open(path) as fh:
        data = json.load(fh)
    return build_suite(data, kernel or data.get("kernel"), data.get("name"))

"""Scenario runner: ``sclab <kind> --scenario file.json``.

A scenario is a JSON document naming one pipeline (``kind``) and its inputs.
Running it produces a report with one row per checked identity; the process
exit code is 0 when every row passes, 1 when some row fails and 2 for input
errors.
"""

from __future__ import annotations

import os

_threads = os.environ.get("SCLAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import csv  # noqa: E402
import io  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from dataclasses import dataclass, field  # noqa: E402
from pathlib import Path  # noqa: E402
from typing import Any, Callable  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from . import connlab as C  # noqa: E402
from . import induction as I  # noqa: E402
from . import jets as J  # noqa: E402
from . import reduction as Rd  # noqa: E402
from . import twistor as T  # noqa: E402
from . import wkb as W  # noqa: E402

SCHEMA_VERSION = 1
KINDS = ("connection-check", "reduce", "induce", "roundtrip", "twistor", "wkb", "koszul")
EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

DEFAULT_TOL = {
    "connection-check": 1e-9,
    "reduce": 1e-7,
    "induce": 1e-7,
    "roundtrip": 1e-7,
    "twistor": 1e-9,
    "wkb": 1e-10,
    "koszul": 1e-12,
}

# check name -> the identity it verifies
REGISTRY = {
    "omega_antisymmetry": "antisymmetry of the symplectic form",
    "omega_closed": "closedness of the symplectic form",
    "torsion": "torsion-free condition",
    "nabla_omega": "parallel symplectic form",
    "curvature_antisymmetry": "curvature antisymmetric in its last pair",
    "bianchi": "first Bianchi identity",
    "ricci_symmetry": "symmetry of the Ricci tensor",
    "second_trace": "second curvature trace equals -2 Ricci",
    "decomposition": "splitting R = E + W",
    "w_ricci_trace": "Ricci trace of W vanishes",
    "w_norm": "Ricci-type condition W = 0",
    "preferred": "cyclic covariant derivative of Ricci vanishes",
    "ricci_type_rebuild": "curvature rebuilt from the Ricci endomorphism",
    "cert_rho": "reduced Ricci endomorphism from A",
    "cert_U": "reduced vector field U from A^2",
    "cert_f": "reduced function f from A^2 and A",
    "K_constant": "constancy of the Ricci-type invariant K",
    "torsion_P": "torsion-free induced connection",
    "nabla_mu": "induced connection preserves the induced form",
    "ricci_P": "Ricci-flat induced connection",
    "curvature_P_lower": "induced connection is curved for a non-Ricci-type base",
    "curvature_P_flat": "induced connection is flat for a Ricci-type base",
    "closed_form_blocks": "closed-form curvature blocks of the induced connection",
    "closed_form_ricci": "closed-form Ricci tensor of the induced connection",
    "zero_blocks": "vanishing curvature blocks along the S direction",
    "reducible": "conformal and symplectic vector fields for reduction",
    "gamma_recovery": "induce then reduce recovers the base connection",
    "omega_recovery": "induce then reduce recovers the base form",
    "defect_ricci_type": "Ricci-type curvature satisfies the twistor integrability condition",
    "defect_w": "a nonzero W violates the twistor integrability condition",
    "uniqueness_rank": "no symmetric 3-tensor is killed by every j",
    "torsion_corrected": "torsion correction yields a torsion-free connection",
    "torsion_corrected_omega": "torsion correction keeps the form parallel",
    "sym_involution": "symmetries are involutions",
    "sym_fixed": "s_x fixes x",
    "sym_unit_det": "symmetries preserve the area form",
    "sym_composition": "s_{s_x y} = s_x s_y s_x",
    "admissibility": "S(x, y, z) = -S(x, s_x y, z)",
    "antisymmetry": "total antisymmetry of the phase",
    "invariance": "invariance of the phase under the symmetries",
    "fixed_point": "fixed point of s_x s_y s_z",
    "jac_vs_pfamily": "square root of Jac_Phi matches the strongly closed amplitude",
    "jac_ratio": "raw square root of Jac_Phi over the amplitude equals the flat value",
    "jac_l_independence": "Jac_Phi depends on a-coordinates only",
    "cocycle_flat": "flat phase is a cocycle",
    "cocycle_curved": "curved phase is not a cocycle",
    "assoc_flat": "geometric associativity of the flat kernel via s_g",
    "assoc_curved": "no symmetry s_g makes the curved kernel geometrically associative",
    "expansion_slope": "first-order expansion uv + (theta/2i){u, v}",
    "quad_margin": "quadrature error at least 10x below the expansion residual",
    "koszul_identity": "a s + s a = (p + q) Id",
    "koszul_a2": "a^2 = 0",
    "koszul_s2": "s^2 = 0",
}


class ScenarioError(ValueError):
    """Malformed scenario; the message names the offending field."""


# ---------------------------------------------------------------------------
# report model


@dataclass
class Check:
    name: str
    measured: float
    threshold: float
    comparison: str = "<"  # "<": measured < threshold passes; ">": measured > threshold passes

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.measured):
            return False
        return self.measured < self.threshold if self.comparison == "<" else self.measured > self.threshold

    @property
    def identity(self) -> str:
        base = self.name.split("[")[0]
        return REGISTRY[base]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": _num(self.measured),
            "threshold": self.threshold,
            "comparison": self.comparison,
            "pass": self.passed,
            "identity": self.identity,
        }


def _num(x: float):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


@dataclass
class Report:
    kind: str
    scenario: dict
    seed: int
    checks: list[Check]
    series: list[dict] = field(default_factory=list)
    timing: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [f"{c.name}: {c.identity} (measured {c.measured:.3g}, needs {c.comparison} {c.threshold:g})" for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "version": __version__,
            "kind": self.kind,
            "seed": self.seed,
            "scenario": self.scenario,
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
        }
        if self.series:
            out["series"] = self.series
        if self.timing is not None:
            out["timing_seconds"] = self.timing
        return out


# ---------------------------------------------------------------------------
# scenario parsing


@dataclass
class Scenario:
    kind: str
    data: dict
    seed: int = 0
    tolerance: float | None = None

    @property
    def tol(self) -> float:
        return self.tolerance if self.tolerance is not None else DEFAULT_TOL[self.kind]

    def to_json(self) -> dict:
        out = dict(self.data)
        out.update({"schema_version": SCHEMA_VERSION, "kind": self.kind, "seed": self.seed})
        if self.tolerance is not None:
            out["tolerance"] = self.tolerance
        return out


_BINOPS = {"add": J.Add, "sub": J.Sub, "mul": J.Mul, "div": J.Div}


def parse_expr(obj, path: str = "$") -> J.Expr:
    """Expression tree from JSON: numbers, ``{"var": i}``, ``{"const": c}``,
    ``{"op": name, "args": [...]}`` and ``{"fn": name, "arg": ...}``."""
    if isinstance(obj, bool):
        raise ScenarioError(f"{path}: booleans are not expressions")
    if isinstance(obj, (int, float)):
        return J.Const(float(obj))
    if not isinstance(obj, dict):
        raise ScenarioError(f"{path}: expected a number or an expression object")
    if "const" in obj:
        return J.Const(float(obj["const"]))
    if "var" in obj:
        i = obj["var"]
        if not isinstance(i, int) or i < 0:
            raise ScenarioError(f"{path}.var: expected a non-negative integer")
        return J.Var(i)
    if "fn" in obj:
        name = obj["fn"]
        if name not in J.FUNCTIONS:
            raise ScenarioError(f"{path}.fn: unknown function {name!r} (known: {', '.join(sorted(J.FUNCTIONS))})")
        return J.Func(name, parse_expr(obj.get("arg"), f"{path}.arg"))
    if "op" in obj:
        op = obj["op"]
        args = obj.get("args")
        if not isinstance(args, list):
            raise ScenarioError(f"{path}.args: expected a list")
        parsed = [parse_expr(a, f"{path}.args[{i}]") for i, a in enumerate(args)]
        if op in _BINOPS:
            if len(parsed) != 2:
                raise ScenarioError(f"{path}: {op} takes two arguments")
            return _BINOPS[op](*parsed)
        if op == "neg" and len(parsed) == 1:
            return J.Neg(parsed[0])
        if op == "pow" and len(parsed) == 1:
            return J.Pow(parsed[0], float(obj.get("exponent", 1.0)))
        raise ScenarioError(f"{path}.op: unknown operator {op!r}")
    raise ScenarioError(f"{path}: unrecognised expression object with keys {sorted(obj)}")


def _array(obj, path: str, shape: tuple[int, ...], exprs: bool):
    arr = np.asarray(obj, dtype=object)
    if arr.shape != shape:
        raise ScenarioError(f"{path}: expected shape {shape}, got {arr.shape}")
    flat = []
    for idx in np.ndindex(*shape):
        p = path + "".join(f"[{i}]" for i in idx)
        flat.append(parse_expr(arr[idx], p) if exprs else _float(arr[idx], p))
    out = np.empty(len(flat), dtype=object)
    out[:] = flat
    out = out.reshape(shape)
    return out if exprs else out.astype(float)


def _float(v, path) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{path}: expected a number")
    return float(v)


def _int(d: dict, key: str, default=None, lo: int = 0) -> int:
    v = d.get(key, default)
    if v is None:
        raise ScenarioError(f"$.{key}: required field missing")
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ScenarioError(f"$.{key}: expected an integer >= {lo}")
    return v


def _num_field(d: dict, key: str, default=None, positive: bool = True) -> float:
    v = d.get(key, default)
    if v is None:
        raise ScenarioError(f"$.{key}: required field missing")
    v = _float(v, f"$.{key}")
    if positive and not v > 0:
        raise ScenarioError(f"$.{key}: expected a positive number")
    return v


def _validate_base(base, path: str) -> None:
    if not isinstance(base, dict) or "type" not in base:
        raise ScenarioError(f"{path}: expected an object with a 'type'")
    t = base["type"]
    if t == "cubic":
        if not isinstance(base.get("n"), int) or base["n"] < 1:
            raise ScenarioError(f"{path}.n: expected an integer >= 1")
    elif t == "reduced":
        _validate_A(base.get("A"), f"{path}.A")
    elif t == "fields":
        d = base.get("dimension")
        if not isinstance(d, int) or d < 2 or d % 2:
            raise ScenarioError(f"{path}.dimension: expected an even integer >= 2")
        _array(base.get("omega"), f"{path}.omega", (d, d), True)
        _array(base.get("connection"), f"{path}.connection", (d, d, d), True)
    else:
        raise ScenarioError(f"{path}.type: unknown base type {t!r}")


def _validate_A(A, path: str) -> None:
    if isinstance(A, dict):
        for key in ("rho", "u", "f"):
            if key not in A:
                raise ScenarioError(f"{path}.{key}: required field missing")
        rho = np.asarray(A["rho"], float)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] % 2:
            raise ScenarioError(f"{path}.rho: expected an even square matrix")
        sp_res = Rd.sp_residual(rho, C.standard_omega(rho.shape[0]))
        if sp_res > 1e-10 * max(1.0, float(np.max(np.abs(rho)))):
            raise ScenarioError(f"{path}.rho: violates sp(2n) membership (residual {sp_res:.3g})")
        return
    if A == "J0" or (isinstance(A, dict) and "J0" in A):
        return
    if isinstance(A, str) and A.startswith("J0:"):
        return
    arr = np.asarray(A, dtype=float) if isinstance(A, list) else None
    if arr is None or arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ScenarioError(f"{path}: expected a square matrix, 'J0:<N>' or a model object")
    try:
        Rd.SpElement(arr)
    except Rd.NotInSpError as e:
        raise ScenarioError(f"{path}: violates sp(Omega') membership: {e}") from None


def _validate(kind: str, d: dict) -> None:
    if kind == "connection-check":
        dim = _int(d, "dimension", lo=2)
        if dim % 2:
            raise ScenarioError("$.dimension: symplectic charts are even-dimensional")
        if d.get("omega", "standard") != "standard":
            _array(d["omega"], "$.omega", (dim, dim), True)
        if d.get("connection") is not None:
            _array(d["connection"], "$.connection", (dim, dim, dim), True)
        _int(d, "points", 20, lo=1)
        _num_field(d, "box", 0.5)
    elif kind == "reduce":
        _validate_A(d.get("A"), "$.A")
        if d.get("x0") is not None:
            _array(d["x0"], "$.x0", (len(d["x0"]),), False)
        _int(d, "points", 20, lo=1)
        _num_field(d, "radius", 0.2)
    elif kind in ("induce", "roundtrip"):
        _validate_base(d.get("base"), "$.base")
        if d.get("spec", "ricci-flat") not in ("ricci-flat", "zero"):
            raise ScenarioError("$.spec: expected 'ricci-flat' or 'zero'")
        if d.get("expect") not in (None, "curved", "flat"):
            raise ScenarioError("$.expect: expected 'curved' or 'flat'")
        _int(d, "points", 5, lo=1)
    elif kind == "twistor":
        dim = _int(d, "dimension", 4, lo=2)
        if dim % 2:
            raise ScenarioError("$.dimension: expected an even integer")
        _int(d, "points", 10, lo=1)
        _int(d, "j_samples", 50, lo=1)
        ranks = d.get("ranks", [2, 4])
        if not isinstance(ranks, list) or any(not isinstance(r, int) or r < 2 or r % 2 for r in ranks):
            raise ScenarioError("$.ranks: expected a list of even integers")
    elif kind == "wkb":
        _int(d, "samples", 1000, lo=1)
        _int(d, "triples", 100, lo=1)
        _num_field(d, "box", 1.0)
        thetas = d.get("thetas", [])
        if not isinstance(thetas, list) or any(isinstance(t, bool) or not isinstance(t, (int, float)) or t <= 0 for t in thetas):
            raise ScenarioError("$.thetas: expected a list of positive numbers")
        if thetas and len(thetas) < 2:
            raise ScenarioError("$.thetas: a slope needs at least two values")
        for i, p in enumerate(d.get("pairs", [])):
            for key in ("u", "v", "x"):
                want = 2 if key == "x" else 3
                if not isinstance(p, dict) or not isinstance(p.get(key), list) or len(p[key]) != want:
                    raise ScenarioError(f"$.pairs[{i}].{key}: expected a list of {want} numbers")
            for key in ("u", "v"):
                if not p[key][2] > 0:
                    raise ScenarioError(f"$.pairs[{i}].{key}: width must be positive")
    elif kind == "koszul":
        dims = d.get("dimensions", [2, 4])
        if not isinstance(dims, list) or any(not isinstance(x, int) or x < 1 for x in dims):
            raise ScenarioError("$.dimensions: expected a list of positive integers")
        _int(d, "max_degree", 4, lo=1)


def parse_scenario(obj: Any) -> Scenario:
    if not isinstance(obj, dict):
        raise ScenarioError("$: scenario must be a JSON object")
    version = obj.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"$.schema_version: unsupported version {version!r}")
    kind = obj.get("kind")
    if kind not in KINDS:
        raise ScenarioError(f"$.kind: expected one of {', '.join(KINDS)}")
    seed = obj.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("$.seed: expected a non-negative integer")
    tol = obj.get("tolerance")
    if tol is not None:
        tol = _num_field(obj, "tolerance")
    data = {k: v for k, v in obj.items() if k not in ("schema_version", "kind", "seed", "tolerance")}
    _validate(kind, data)
    return Scenario(kind, data, seed, tol)


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    return parse_scenario(obj)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_json(), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# shared helpers


def _omega_field(spec, dim: int) -> C.SymplecticFormField:
    if spec is None or spec == "standard":
        return C.SymplecticFormField.standard(dim)
    return C.SymplecticFormField(dim, C._from_exprs(_array(spec, "$.omega", (dim, dim), True)))


def _connection_field(spec, dim: int) -> C.ConnectionField:
    if spec is None:
        return C.ConnectionField.flat(dim)
    return C.ConnectionField(dim, C._from_exprs(_array(spec, "$.connection", (dim, dim, dim), True)))


def _curvature_rows(cps: list[C.CurvaturePoint], tol: float, prefix: str = "") -> list[Check]:
    keys = {
        "antisymmetry": "curvature_antisymmetry",
        "bianchi": "bianchi",
        "ricci_symmetry": "ricci_symmetry",
        "second_trace": "second_trace",
        "decomposition": "decomposition",
        "w_ricci_trace": "w_ricci_trace",
    }
    worst = {v: 0.0 for v in keys.values()}
    for cp in cps:
        ids = cp.identities()
        scale = max(1.0, float(np.max(np.abs(cp.R))))
        for k, v in keys.items():
            worst[v] = max(worst[v], ids[k] / scale)
    return [Check(f"{name}{prefix}", val, tol) for name, val in worst.items()]


def _box_points(rng, count: int, dim: int, box: float) -> list[np.ndarray]:
    return [rng.uniform(-box, box, dim) for _ in range(count)]


def _sp_A(spec, rng) -> tuple[Rd.SpElement, bool]:
    """``(A, is_model)`` from a scenario field."""
    if isinstance(spec, dict):
        return Rd.a_tilde(spec["rho"], spec["u"], float(spec["f"])), True
    if isinstance(spec, str):
        N = int(spec.split(":")[1]) if ":" in spec else 4
        return Rd.SpElement.complex_structure(N), False
    return Rd.SpElement(np.asarray(spec, float)), False


def _base_point(A: Rd.SpElement, rng) -> np.ndarray:
    candidates = list(np.eye(A.N)) + [rng.standard_normal(A.N) for _ in range(50)]
    for v in candidates:
        h = float(v @ A.Omega @ A.A @ v)
        if h > 1e-3:
            return v / math.sqrt(h)
    raise ScenarioError("$.A: no point with Omega'(x, Ax) > 0 found; pass x0")


def _chart(d: dict, rng) -> Rd.SigmaChart:
    A, is_model = _sp_A(d["A"], rng)
    radius = float(d.get("radius", 0.2))
    if is_model and d.get("x0") is None:
        return Rd.model_chart(A, radius)
    x0 = np.asarray(d["x0"], float) if d.get("x0") is not None else _base_point(A, rng)
    return Rd.build_chart(A, x0, radius)


def _chart_points(rng, count: int, dim: int, radius: float) -> list[np.ndarray]:
    out = []
    while len(out) < count:
        y = rng.uniform(-radius, radius, dim)
        if np.linalg.norm(y) <= 0.8 * radius:
            out.append(y)
    return out


# ---------------------------------------------------------------------------
# runners


def _run_connection_check(sc: Scenario, rng) -> tuple[list[Check], list]:
    d = sc.data
    dim = d["dimension"]
    tol = sc.tol
    omega = _omega_field(d.get("omega", "standard"), dim)
    nabla0 = _connection_field(d.get("connection"), dim)
    pts = _box_points(rng, d.get("points", 20), dim, d.get("box", 0.5))
    chk = omega.check(pts, tol)
    rows = [Check("omega_antisymmetry", chk["antisymmetry"], tol), Check("omega_closed", chk["closedness"], tol)]
    nabla = C.symplectize(nabla0, omega) if d.get("symplectize", True) else nabla0
    tor = nab = 0.0
    cps = []
    for x in pts:
        tor = max(tor, float(np.max(np.abs(C.torsion(nabla, x)))))
        nab = max(nab, float(np.max(np.abs(C.nabla_omega(nabla, omega, x)))))
        cps.append(C.curvature(nabla, omega, x))
    rows += [Check("torsion", tor, tol), Check("nabla_omega", nab, tol)]
    rows += _curvature_rows(cps, max(tol, 1e-8))
    return rows, []


def _run_reduce(sc: Scenario, rng) -> tuple[list[Check], list]:
    d = sc.data
    tol = sc.tol
    cert_tol = float(d.get("certification_tolerance", 1e-6))
    chart = _chart(d, rng)
    nabla = Rd.reduced_connection(chart)
    omega = Rd.reduced_form_field(chart)
    pts = _chart_points(rng, d.get("points", 20), chart.dim, chart.radius)
    wn = pref = rebuild = 0.0
    cps = []
    for y in pts:
        cp = C.curvature(nabla, omega, y)
        cps.append(cp)
        wn = max(wn, cp.w_norm())
        pref = max(pref, float(np.max(np.abs(C.preferred_residual(nabla, omega, y)))))
        rebuild = max(rebuild, float(np.max(np.abs(C.ricci_type_curvature(cp.rho, cp.omega) - cp.R))))
    rows = [Check("w_norm", wn, tol), Check("preferred", pref, tol), Check("ricci_type_rebuild", rebuild, tol)]
    rows += _curvature_rows(cps, 1e-8)
    try:
        data, rep = C.ricci_type_invariants(nabla, omega, pts, tol=max(tol, C.DEFAULT_W_TOL), k_tol=cert_tol)
    except (C.NotRicciTypeError, C.InconsistencyError) as e:
        rows.append(Check("K_constant", math.inf, cert_tol))
        print(f"reduce: {type(e).__name__}: {e}", file=sys.stderr)
        return rows, []
    dev = {"rho": 0.0, "U": 0.0, "f": 0.0}
    for y, dd in zip(pts, data):
        ref = Rd.formula_data(chart, y)
        dev["rho"] = max(dev["rho"], float(np.max(np.abs(dd.rho - ref["rho"]))))
        dev["U"] = max(dev["U"], float(np.max(np.abs(dd.U - ref["U"]))))
        dev["f"] = max(dev["f"], abs(dd.f - ref["f"]))
    rows += [Check(f"cert_{k}", v, cert_tol) for k, v in dev.items()]
    rows.append(Check("K_constant", rep["K_spread"], cert_tol))
    return rows, []


def _base(spec: dict, rng):
    """``(omega, nabla, lam, sample)`` for an induction base; ``sample`` draws base points."""
    t = spec["type"]
    if t == "cubic":
        n = spec["n"]
        omega, nabla = I.cubic_base(n, rng, float(spec.get("scale", 0.3)))
        lam = I.linear_potential(C.standard_omega(2 * n))
        box = float(spec.get("box", 0.3))
        return omega, nabla, lam, lambda r, k: _box_points(r, k, 2 * n, box)
    if t == "reduced":
        chart = _chart(spec, rng)
        omega = Rd.reduced_form_field(chart)
        nabla = Rd.reduced_connection(chart)
        lam = I.homotopy_potential(omega)
        return omega, nabla, lam, lambda r, k: _chart_points(r, k, chart.dim, 0.5 * chart.radius)
    dim = spec["dimension"]
    omega = _omega_field(spec["omega"], dim)
    nabla = _connection_field(spec["connection"], dim)
    lam = I.homotopy_potential(omega)
    box = float(spec.get("box", 0.3))
    return omega, nabla, lam, lambda r, k: _box_points(r, k, dim, box)


def _induce_setup(sc: Scenario, rng):
    d = sc.data
    omega, nabla, lam, sample = _base(d["base"], rng)
    q = I.ContactQuadrupleData(omega, lam)
    spec = I.ricci_flat_choice(nabla, omega) if d.get("spec", "ricci-flat") == "ricci-flat" else I.InducedConnectionSpec.zero(omega.dim)
    return omega, nabla, q, spec, sample


def _run_induce(sc: Scenario, rng) -> tuple[list[Check], list]:
    d = sc.data
    tol = sc.tol
    omega, nabla, q, spec, sample = _induce_setup(sc, rng)
    GP = I.induced_connection(nabla, spec, q)
    mu = q.mu_field()
    ms = sample(rng, d.get("points", 5))
    pts = [np.concatenate([m, rng.uniform(-0.3, 0.3, 2)]) for m in ms]
    tor = nab = ric = rmax = 0.0
    cps = []
    for p in pts:
        tor = max(tor, float(np.max(np.abs(C.torsion(GP, p)))))
        nab = max(nab, float(np.max(np.abs(C.nabla_omega(GP, mu, p)))))
        cp = C.curvature(GP, mu, p)
        cps.append(cp)
        ric = max(ric, float(np.max(np.abs(cp.r))))
        rmax = max(rmax, float(np.max(np.abs(cp.R))))
    rows = [Check("torsion_P", tor, tol), Check("nabla_mu", nab, tol)]
    if isinstance(spec, I.RicciFlatSpec):
        rows.append(Check("ricci_P", ric, tol))
    expect = d.get("expect")
    if expect == "curved":
        rows.append(Check("curvature_P_lower", rmax, float(d.get("curvature_floor", 1e-2)), ">"))
    elif expect == "flat":
        rows.append(Check("curvature_P_flat", rmax, float(d.get("flat_tolerance", 1e-6))))
    rows += _curvature_rows(cps, 1e-8)
    nclosed = int(d.get("closed_form_points", 1))
    blocks = ric_dev = zero = 0.0
    for p in pts[:nclosed]:
        cmp = I.compare_closed_form(nabla, spec, q, p, d.get("reading", "derived"))
        blocks = max(blocks, *(cmp[k] for k in ("R_XX_X", "R_XX_E", "R_XE_E", "R_XE_X")))
        ric_dev = max(ric_dev, cmp["ricci"])
        zero = max(zero, cmp["zero_blocks"])
    if nclosed:
        rows += [
            Check("closed_form_blocks", blocks, float(d.get("closed_form_tolerance", 1e-6))),
            Check("closed_form_ricci", ric_dev, float(d.get("closed_form_tolerance", 1e-6))),
            Check("zero_blocks", zero, 1e-9),
        ]
    return rows, []


def _run_roundtrip(sc: Scenario, rng) -> tuple[list[Check], list]:
    d = sc.data
    tol = sc.tol
    omega, nabla, q, spec, sample = _induce_setup(sc, rng)
    GP = I.induced_connection(nabla, spec, q)
    ms = sample(rng, d.get("points", 50))
    pp = [np.concatenate([m, [0.0, 0.0]]) for m in ms[:3]]
    red = I.check_reducible(GP, q, pp, tol=1.0)  # residuals reported below, not raised
    wM, GM = I.reduce_back(GP, q)
    gdev = wdev = 0.0
    for m in ms:
        gdev = max(gdev, float(np.max(np.abs(GM.at(m) - nabla.at(m)))))
        wdev = max(wdev, float(np.max(np.abs(wM.at(m) - omega.at(m)))))
    return [
        Check("reducible", max(red.values()), 1e-9),
        Check("gamma_recovery", gdev, tol),
        Check("omega_recovery", wdev, tol),
    ], []


def _random_omega(rng, dim: int) -> np.ndarray:
    G = np.eye(dim) + 0.3 * rng.standard_normal((dim, dim))
    return G.T @ C.standard_omega(dim) @ G


def _run_twistor(sc: Scenario, rng) -> tuple[list[Check], list]:
    d = sc.data
    dim = d.get("dimension", 4)
    tol = sc.tol
    npts, nj = d.get("points", 10), d.get("j_samples", 50)
    e_def = w_def = 0.0
    for _ in range(npts):
        w = _random_omega(rng, dim)
        R_e = T.random_ricci_type_curvature(w, rng)
        R_w = T.random_w_curvature(w, rng, float(d.get("w_norm", 1.0)))
        for _ in range(nj):
            j = T.random_compatible_j(w, rng)
            e_def = max(e_def, T.integrability_defect(R_e, j))
            w_def = max(w_def, T.integrability_defect(R_w, j))
    rows = [Check("defect_ricci_type", e_def, tol), Check("defect_w", w_def, float(d.get("w_floor", 1e-3)), ">")]
    for rd in d.get("ranks", [2, 4]):
        info = T.uniqueness_rank(rd, 2 * math.comb(rd + 2, 3), seed=int(rng.integers(2**31)))
        rows.append(Check(f"uniqueness_rank[{rd}]", abs(info["rank"] - info["expected"]), 0.5))
    w0 = C.standard_omega(dim)
    omega = C.SymplecticFormField.constant(dim, w0)
    nab = T.almost_symplectic_example(w0, rng)
    fixed = T.torsion_correct(nab, omega)
    pts = _box_points(rng, 3, dim, 0.5)
    tor = max(float(np.max(np.abs(C.torsion(fixed, x)))) for x in pts)
    nw = max(float(np.max(np.abs(C.nabla_omega(fixed, omega, x)))) for x in pts)
    rows += [Check("torsion_corrected", tor, 1e-12), Check("torsion_corrected_omega", nw, 1e-12)]
    return rows, []


def _run_wkb(sc: Scenario, rng) -> tuple[list[Check], list]:
    d = sc.data
    tol = sc.tol
    ns, nt = d.get("samples", 1000), d.get("triples", 100)
    box = float(d.get("box", 1.0))
    P = W.random_points(rng, 4 * ns, box, box)
    quads = [P[4 * i : 4 * i + 4] for i in range(ns)]
    law = W.symmetry_law_residuals([q[:3] for q in quads])
    rows = [
        Check("sym_involution", law["involution"], tol),
        Check("sym_fixed", law["fixed"], tol),
        Check("sym_unit_det", law["unit_det"], tol),
        Check("sym_composition", law["composition"], tol),
    ]
    adm = W.check_admissible(W.CURVED, quads)
    rows += [Check(k, v, tol) for k, v in adm.items()]
    trip = quads[:nt]
    fp = dev = lind = 0.0
    ratios = []
    flat_jac = W.flat_jacobian()
    for x, y, z, w in trip:
        X = W.triple_fixed_point(x, y, z)
        fp = max(fp, W.fixed_point_residual(x, y, z, X))
        pf = W.amplitude("Pfamily", x, y, z, W.sqrt_cosh)
        dev = max(dev, abs(W.amplitude("JacSqrt", x, y, z) - pf) / pf)
        raw = W.jac_phi(x, y, z)
        ratios.append(math.sqrt(raw) / pf)
        shifted = W.jac_phi((x.a, x.l + w.l), (y.a, y.l - w.a), (z.a, z.l + 1.0))
        lind = max(lind, abs(shifted - raw) / raw)
    ratios = np.array(ratios)
    rows += [
        Check("fixed_point", fp, tol),
        Check("jac_vs_pfamily", dev, 1e-6),
        Check("jac_ratio", float(np.max(np.abs(ratios - math.sqrt(flat_jac)))) / math.sqrt(flat_jac), 1e-6),
        Check("jac_l_independence", lind, 1e-9),
    ]
    nq = int(d.get("quads", 20))
    flat_def = W.cocycle_defect(W.FLAT, quads[:nq])
    curved_def = W.cocycle_defect(W.CURVED, quads[:nq])
    rows += [Check("cocycle_flat", flat_def, 1e-12), Check("cocycle_curved", curved_def, 1e-3, ">")]
    small = W.random_points(rng, 4, 1.0, 1.0)
    ts = W.random_points(rng, 100, 2.0, 2.0)
    bary = W.find_barycentre(W.FLAT, small, W.random_points(rng, 2, 1.0, 1.0), check_ts=ts)
    rows.append(Check("assoc_flat", bary.residual if bary.found else math.inf, 1e-8))
    starts = [p.as_array() for p in W.random_points(rng, int(d.get("barycentre_starts", 8)), 2.0, 2.0)]
    _, best = W.best_associativity_residual(W.CURVED, small, ts[:30], starts)
    rows.append(Check("assoc_curved", best, 1e-3, ">"))
    series = []
    thetas = d.get("thetas", [])
    target = float(d.get("quad_target", 1e-7))
    for i, pair in enumerate(d.get("pairs", [])):
        u, v = W.GaussianBump(*pair["u"]), W.GaussianBump(*pair["v"])
        x = W.PhasePoint(*pair["x"])
        res, slope = W.expansion_sweep(u.field(), v.field(), x, thetas, u.box(), v.box(), target=target)
        margin = max(r.quad_error / r.residual for r in res)
        rows += [Check(f"expansion_slope[{i}]", slope, 1.8, ">"), Check(f"quad_margin[{i}]", margin, 0.1)]
        series += [{"pair": i, "theta": r.theta, "residual": r.residual, "quad_error": r.quad_error} for r in res]
    return rows, series


def _run_koszul(sc: Scenario, rng) -> tuple[list[Check], list]:
    d = sc.data
    tol = sc.tol
    rows = []
    for dim in d.get("dimensions", [2, 4]):
        ident = a2 = s2 = 0.0
        for total in range(1, d.get("max_degree", 4) + 1):
            for q in range(total + 1):
                p = total - q
                t = C.KoszulElement.random(q, p, dim, rng)
                lhs = np.zeros_like(t.t)
                if q >= 1:
                    lhs = lhs + C.koszul_a(C.koszul_s(t)).t
                if p >= 1:
                    lhs = lhs + C.koszul_s(C.koszul_a(t)).t
                scale = max(1.0, float(np.max(np.abs(t.t))))
                ident = max(ident, float(np.max(np.abs(lhs - total * t.t))) / scale)
                if p >= 2:
                    a2 = max(a2, float(np.max(np.abs(C.koszul_a(C.koszul_a(t)).t))) / scale)
                if q >= 2:
                    s2 = max(s2, float(np.max(np.abs(C.koszul_s(C.koszul_s(t)).t))) / scale)
        rows += [Check(f"koszul_identity[{dim}]", ident, tol), Check(f"koszul_a2[{dim}]", a2, tol), Check(f"koszul_s2[{dim}]", s2, tol)]
    return rows, []


RUNNERS: dict[str, Callable] = {
    "connection-check": _run_connection_check,
    "reduce": _run_reduce,
    "induce": _run_induce,
    "roundtrip": _run_roundtrip,
    "twistor": _run_twistor,
    "wkb": _run_wkb,
    "koszul": _run_koszul,
}


def run(scenario: Scenario, timing: bool = False) -> Report:
    rng = np.random.default_rng(scenario.seed)
    t0 = time.perf_counter()
    checks, series = RUNNERS[scenario.kind](scenario, rng)
    elapsed = time.perf_counter() - t0
    return Report(scenario.kind, scenario.to_json(), scenario.seed, checks, series, elapsed if timing else None)


def emit(report: Report, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "seed", "name", "measured", "comparison", "threshold", "pass", "identity"])
        for c in report.checks:
            w.writerow([report.kind, report.seed, c.name, repr(float(c.measured)), c.comparison, repr(float(c.threshold)), int(c.passed), c.identity])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sclab", description="Run a symplectic-connection scenario and report its checks.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--tol", type=float, help="override the scenario base tolerance")
    p.add_argument("--figures", metavar="DIR", help="also render PNG figures into DIR (needs matplotlib)")
    p.add_argument("--timing", action="store_true", help="include wall-clock time in the report")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        if sc.kind != args.kind:
            raise ScenarioError(f"$.kind: scenario is {sc.kind!r} but {args.kind!r} was requested")
        if args.seed is not None:
            if args.seed < 0:
                raise ScenarioError("--seed: expected a non-negative integer")
            sc.seed = args.seed
        if args.tol is not None:
            if not args.tol > 0:
                raise ScenarioError("--tol: expected a positive number")
            sc.tolerance = args.tol
    except (OSError, ScenarioError) as e:
        print(f"sclab: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = run(sc, timing=args.timing)
    except ValueError as e:
        print(f"sclab: {sc.kind} scenario {args.scenario}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # module errors surface verbatim with context
        print(f"sclab: {sc.kind} scenario {args.scenario}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL
    text = emit(report, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.figures:
        try:
            from .figures import render
        except ImportError as e:
            print(f"sclab: --figures needs matplotlib (the 'figures' extra): {e}", file=sys.stderr)
            return EXIT_INPUT
        for path in render(report, args.figures):
            print(f"figure: {path}", file=sys.stderr)
    for line in report.failures():
        print(f"FAIL {line}", file=sys.stderr)
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Problem-file loading with field-level diagnostics."""
from __future__ import annotations

import json
from pathlib import Path

from .mechanics import PusherContact, SupportModel
from .nlp import AssembleOptions, PushProblem, Weights
from .se2 import ConfigError, PlanarPose, PolygonObject

SCENARIO_DIR = Path(__file__).resolve().parent / "scenarios"
DEFAULT_T = 2.0


def read_json(path) -> dict:
    """Parse a JSON file; syntax errors report the byte offset."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read file ({exc.strerror})") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: invalid UTF-8 at byte offset {exc.start}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ConfigError(f"{path}: malformed JSON at byte offset {offset} ({exc.msg})") from None


def _pose(d: dict, key: str) -> PlanarPose:
    if key not in d:
        raise ConfigError(f"{key}: missing field")
    v = d[key]
    if isinstance(v, dict):
        v = [v.get("x"), v.get("y"), v.get("theta", 0.0)]
    try:
        x, y, th = (float(c) for c in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected [x, y, theta] in meters and radians") from None
    return PlanarPose(x, y, th)


def _sub(base: Path, ref, what: str, loader):
    if isinstance(ref, dict):
        return loader.from_dict(ref)
    if not isinstance(ref, str):
        raise ConfigError(f"{what}: expected a file path or an inline object")
    p = Path(ref)
    if not p.is_absolute():
        p = base / p
    try:
        return loader.from_dict(read_json(p))
    except ConfigError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def problem_from_dict(d: dict, base: Path | str = ".") -> tuple[PushProblem, AssembleOptions]:
    base = Path(base)
    if not isinstance(d, dict):
        raise ConfigError("problem: top level must be a JSON object")
    for key in ("object", "pushers", "support"):
        if key not in d:
            raise ConfigError(f"{key}: missing field")
    obj = _sub(base, d["object"], "object", PolygonObject)
    if not isinstance(d["pushers"], list) or not d["pushers"]:
        raise ConfigError("pushers: expected a non-empty list")
    pushers = [_sub(base, p, f"pushers[{i}]", PusherContact) for i, p in enumerate(d["pushers"])]
    support = _sub(base, d["support"], "support", SupportModel)
    opts = d.get("options", {}) or {}
    if not isinstance(opts, dict):
        raise ConfigError("options: expected an object")
    unknown = set(opts) - {"direct_transcription", "free_time", "use_kl"}
    if unknown:
        raise ConfigError(f"options.{sorted(unknown)[0]}: unknown option")
    T = d.get("T", DEFAULT_T)
    free_time = bool(opts.get("free_time", True))
    if T == "free":
        T, free_time = DEFAULT_T, True
    try:
        T = float(T)
    except (TypeError, ValueError):
        raise ConfigError("T: expected seconds or \"free\"") from None
    aopts = AssembleOptions(
        direct_transcription=bool(opts.get("direct_transcription", True)),
        free_time=free_time,
        use_kl=bool(opts.get("use_kl", False)),
    )
    w = d.get("weights", {}) or {}
    if not isinstance(w, dict):
        raise ConfigError("weights: expected an object")
    bad = set(w) - set(Weights.__dataclass_fields__)
    if bad:
        raise ConfigError(f"weights.{sorted(bad)[0]}: unknown weight")
    N = d.get("N", 3)
    if not isinstance(N, int) or isinstance(N, bool):
        raise ConfigError("N: need an integer >= 2")
    try:
        eps = float(d.get("epsilon", 1e-4))
    except (TypeError, ValueError):
        raise ConfigError("epsilon: expected a number") from None
    problem = PushProblem(
        object=obj,
        pushers=pushers,
        support=support,
        start=_pose(d, "start"),
        goal=_pose(d, "goal"),
        N=N,
        T=T,
        weights=Weights(**w),
        epsilon=eps,
        name=str(d.get("name", obj.name)),
    )
    return problem, aopts


def load_problem(path) -> tuple[PushProblem, AssembleOptions]:
    path = Path(path)
    return problem_from_dict(read_json(path), path.parent)


def scenario_problem(name: str) -> tuple[PushProblem, AssembleOptions]:
    """Shipped goal scenario for `square`, `T` or `L`."""
    return load_problem(SCENARIO_DIR / "problems" / f"{name}_goal.json")

"""End-to-end run: τ₁, pole-free lines, δ₀, tracking, localization, decay, Fredholm.

A :class:`RunConfig` is a JSON-compatible tree with sections ``medium``,
``spectral``, ``path``, ``quadrature`` and ``output``.  :func:`run_pipeline`
executes the stages in order, records each one exactly once and skips every
stage after the first failure.  Output files are written atomically and are
bit-identical across runs with the same configuration.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .a_family import DecayTable, a_decay_sweep, fredholm_scan
from .cell_operator import sigma_min_scan
from .errors import ConfigError, GapCollapse, StripResError
from .medium import MediumSpec, convolution_matrix, free_medium, sup_norm_eps0
from .pole_tracker import (
    BasisPolicy,
    PathSpec,
    PoleRecord,
    Trajectory,
    auto_path,
    classify_and_delta0,
    companion_matrix,
    cyl_dist,
    in_Z,
    pencil_eigs,
    replay_reverse,
    riesz_singular_values,
    track_poles,
)
from .symbol import RectContour, select_tau1

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
STAGES = (
    "validate",
    "select_tau1",
    "pole_free_lines",
    "z0_search",
    "track",
    "localization",
    "a_decay",
    "fredholm",
)
LINE_MARGIN = 1e-6
REVERSE_TOL = 1e-6
MATCH_TOL = 1e-4
SLOPE_WINDOW = (-1.3, -0.7)
BOUNDED_RATIO = 2.0
SIGMA_FLOOR = 0.5

__all__ = [
    "RunConfig",
    "RunReport",
    "StageResult",
    "run_pipeline",
    "free_pole_count",
    "write_csv",
    "read_csv",
    "write_json",
    "STAGES",
]


@dataclass
class RunConfig:
    """Parameters of one run.

    ``ells`` are in units of ``2π``; the sweep heights are
    ``Im k2 = π/2 + 2π·ell``.  ``tau1 = None`` selects ``τ₁`` automatically.
    ``waypoints = None`` builds the default path: ``Γ(0)`` on the real axis,
    across to ``Re = π``, then straight up.
    """

    medium: MediumSpec = field(default_factory=free_medium)
    lam: float = -1.0
    theta: float = np.pi / 2
    delta: float = np.pi / 8
    tau1: Optional[float] = None
    n1_margin: int = 3
    n2_margin: int = 4
    track_n1_margin: int = 2
    track_n2_margin: int = 2
    waypoints: Optional[list] = None
    max_step: Optional[float] = None
    re_k2: float = np.pi
    ells: tuple = (4, 5, 6, 7, 8, 9, 10, 11, 12)
    z0_samples: int = 8
    q_line: int = 64
    q_circle: int = 32
    q_nodes: int = 64
    scan_samples: int = 64
    core_pad: int = 25
    tail_extent: int = 2000
    out_dir: str = "out"
    threads: int = 1

    def __post_init__(self):
        self.ells = tuple(self.ells)

    def validate(self) -> None:
        """Raise :class:`ConfigError` on any violated constraint."""
        if not (0.0 < self.theta < np.pi):
            raise ConfigError(f"theta must lie in (0, π), got {self.theta}")
        bound = min(np.pi / 4, np.pi - self.theta)
        if not (0.0 < self.delta < bound):
            raise ConfigError(f"delta must satisfy 0 < delta < min(π/4, π - theta) = {bound:.6g}, got {self.delta}")
        if not np.isfinite(self.lam):
            raise ConfigError("lambda must be finite")
        if self.tau1 is not None:
            n = self.tau1 / TWO_PI
            if n < 1 - 1e-12 or abs(n - round(n)) > 1e-9:
                raise ConfigError(f"tau1 must be a positive multiple of 2π, got {self.tau1}")
        if not self.ells:
            raise ConfigError("ells must be nonempty")
        if any(e <= 0 for e in self.ells) or any(b <= a for a, b in zip(self.ells, self.ells[1:])):
            raise ConfigError("ells must be positive and strictly ascending")
        if not in_Z(complex(self.re_k2, 1.0), self.theta, self.delta):
            raise ConfigError(f"re_k2={self.re_k2} is outside the vertical band of Z")
        if self.waypoints is not None:
            try:
                PathSpec([complex(*w) if not isinstance(w, complex) else w for w in self.waypoints], self.theta, self.delta)
            except (StripResError, ValueError, TypeError) as exc:
                raise ConfigError(f"invalid waypoints: {exc}") from exc
        for name in ("q_line", "q_circle", "scan_samples", "z0_samples", "threads"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.q_nodes < 8 or self.q_nodes % 4:
            raise ConfigError("q_nodes must be a multiple of 4 and at least 8")
        if self.scan_samples < 16:
            raise ConfigError("scan_samples must be at least 16")
        if self.z0_samples < 8:
            raise ConfigError("z0_samples must be at least 8")
        for name in ("n1_margin", "n2_margin", "track_n1_margin", "track_n2_margin", "core_pad"):
            if int(getattr(self, name)) < 0:
                raise ConfigError(f"{name} must be nonnegative")

    @property
    def heights(self) -> list:
        return [np.pi / 2 + TWO_PI * e for e in self.ells]

    def to_dict(self) -> dict:
        return {
            "medium": self.medium.to_dict(),
            "spectral": {
                "lambda": self.lam,
                "theta": self.theta,
                "delta": self.delta,
                "tau1": self.tau1,
                "basis": {
                    "n1_margin": self.n1_margin,
                    "n2_margin": self.n2_margin,
                    "track_n1_margin": self.track_n1_margin,
                    "track_n2_margin": self.track_n2_margin,
                },
            },
            "path": {
                "waypoints": None if self.waypoints is None else [[complex(w).real, complex(w).imag] for w in self.waypoints],
                "max_step": self.max_step,
                "re_k2": self.re_k2,
                "ells": list(self.ells),
                "z0_samples": self.z0_samples,
            },
            "quadrature": {
                "q_line": self.q_line,
                "q_circle": self.q_circle,
                "q_nodes": self.q_nodes,
                "scan_samples": self.scan_samples,
                "core_pad": self.core_pad,
                "tail_extent": self.tail_extent,
            },
            "output": {"dir": self.out_dir, "threads": self.threads},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config root must be an object")
        known = {"medium", "spectral", "path", "quadrature", "output"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config sections: {sorted(extra)}")
        try:
            kw: dict = {}
            if "medium" in d:
                kw["medium"] = MediumSpec.from_dict(d["medium"])
            sp = d.get("spectral", {})
            for key, name in (("lambda", "lam"), ("theta", "theta"), ("delta", "delta")):
                if key in sp:
                    kw[name] = float(sp[key])
            if sp.get("tau1") is not None:
                kw["tau1"] = float(sp["tau1"])
            for key, val in sp.get("basis", {}).items():
                if key not in ("n1_margin", "n2_margin", "track_n1_margin", "track_n2_margin"):
                    raise ConfigError(f"unknown basis key {key!r}")
                kw[key] = int(val)
            pa = d.get("path", {})
            wp = pa.get("waypoints")
            if wp is not None and wp != "auto":
                kw["waypoints"] = [complex(float(w[0]), float(w[1])) for w in wp]
            if pa.get("max_step") is not None:
                kw["max_step"] = float(pa["max_step"])
            if "re_k2" in pa:
                kw["re_k2"] = float(pa["re_k2"])
            if "ells" in pa:
                kw["ells"] = tuple(float(e) for e in pa["ells"])
            if "z0_samples" in pa:
                kw["z0_samples"] = int(pa["z0_samples"])
            for key, val in d.get("quadrature", {}).items():
                if key not in ("q_line", "q_circle", "q_nodes", "scan_samples", "core_pad", "tail_extent"):
                    raise ConfigError(f"unknown quadrature key {key!r}")
                kw[key] = int(val)
            out = d.get("output", {})
            if "dir" in out:
                kw["out_dir"] = str(out["dir"])
            if "threads" in out:
                kw["threads"] = int(out["threads"])
        except (TypeError, ValueError, KeyError, IndexError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed config: {exc}") from exc
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def track_policy(self, tau1: float) -> BasisPolicy:
        return BasisPolicy(tau1, self.track_n1_margin, self.track_n2_margin)

    def decay_policy(self, tau1: float) -> BasisPolicy:
        return BasisPolicy(tau1, self.n1_margin, self.n2_margin)


@dataclass
class StageResult:
    name: str
    status: str = "skipped"
    metrics: dict = field(default_factory=dict)
    message: str = ""


@dataclass
class RunReport:
    tau1: Optional[float] = None
    delta0: Optional[float] = None
    M_empirical: Optional[float] = None
    C_empirical: Optional[float] = None
    N: Optional[int] = None
    N_plus: Optional[int] = None
    N_minus: Optional[int] = None
    stages: list = field(default_factory=lambda: [StageResult(n) for n in STAGES])
    artifacts: dict = field(default_factory=dict)

    def stage(self, name: str) -> StageResult:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        """No stage failed and at least one ran."""
        return any(s.status == "passed" for s in self.stages) and not any(s.status == "failed" for s in self.stages)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, rows: list, columns: list) -> Path:
    """Write ``rows`` (dicts) atomically; floats carry 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    path = Path(path)
    _atomic_write(path, buf.getvalue())
    return path


def read_csv(path, types: dict) -> list:
    """Parse a CSV written by :func:`write_csv`; ``types`` maps column to a
    converter (columns absent from ``types`` stay strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: types.get(k, str)(v) for k, v in r.items()} for r in rows]


def write_json(path, obj) -> Path:
    path = Path(path)
    _atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def free_pole_count(k2: complex, lam: float, eps_value: float, tau1: float, m2_half: int = 64) -> int:
    """Number of poles of ``T(·, k2)`` in ``D`` for a constant medium.

    For ``ε₀ = c`` the poles are ``k1 = -m1 ± i·sqrt((m2 + k2)² - λc)``; the
    ``m1`` shift disappears modulo ``2π``, so each ``m2`` contributes the
    distinct roots with ``|Im| < τ₁``.
    """
    count = 0
    for n2 in range(-m2_half, m2_half + 1):
        r = np.sqrt(complex((TWO_PI * n2 + k2) ** 2 - lam * eps_value))
        roots = {complex(np.round(1j * r, 12)), complex(np.round(-1j * r, 12))}
        count += sum(1 for z in roots if abs(z.imag) < tau1)
    return count


TRAJECTORY_COLUMNS = ["step", "re_k2", "im_k2", "pole_index", "re_k1", "im_k1", "klass", "tail_mass", "flags"]
DECAY_COLUMNS = ["ell", "re_k2", "norm2", "neumann_bound"]
FREDHOLM_COLUMNS = ["re_k2", "im_k2", "sigma_min", "conclusion"]
LOCALIZATION_COLUMNS = ["im_k2", "mu", "sign", "m2", "rank", "sigma1", "has_qplus"]


def _z0_windows(theta: float, delta: float, n: int) -> list:
    """Candidate windows in ``(θ, π - δ/2)``: the whole interval, then halves."""
    lo, hi = theta, np.pi - delta / 2
    mid = 0.5 * (lo + hi)
    out = []
    for a, b in ((lo, hi), (lo, mid), (mid, hi)):
        xs = np.linspace(a, b, n + 2)[1:-1]
        out.append((a, b, xs))
    return out


def _z0_search(cfg: RunConfig, tau1: float, policy: BasisPolicy):
    last = None
    for a, b, xs in _z0_windows(cfg.theta, cfg.delta, cfg.z0_samples):
        try:
            samples = [pencil_eigs(x, cfg.lam, cfg.medium, policy.basis_for(x), tau1) for x in xs]
            g0 = 0.5 * (np.pi + cfg.theta)
            if not (a < g0 < b):
                g0 = 0.5 * (a + b)
            start = pencil_eigs(g0, cfg.lam, cfg.medium, policy.basis_for(g0), tau1)
            delta0, classified = classify_and_delta0(samples, start)
            return (a, b), g0, delta0, classified
        except GapCollapse as exc:
            last = exc
            log.info("Z0 window (%.4f, %.4f) rejected: %s", a, b, exc)
    raise GapCollapse(f"no Z0 window with a clean gap: {last}")


def _at_height(traj: Trajectory, cfg: RunConfig, tau1: float, height: float) -> list:
    """Tracked records at ``re_k2 + i·height``, probing sideways if the ascent was offset."""
    step = traj.nearest_accepted(height)
    if step is None or abs(step.k2.imag - height) > 1e-9:
        raise StripResError(f"tracked path never reached Im k2 = {height}")
    target = complex(cfg.re_k2, height)
    if abs(step.k2 - target) < 1e-12:
        return step.records
    probe = PathSpec([step.k2, target], cfg.theta, cfg.delta, max_step=cfg.max_step or min(0.25, cfg.delta))
    sub = track_poles(probe, cfg.lam, cfg.medium, cfg.track_policy(tau1), tau1, step.records, allow_offset=False)
    return sub.final


def _match_fresh(tracked: list, fresh: list) -> tuple[list, float]:
    """Re-identify tracked records among poles computed on a larger basis."""
    out, worst = [], 0.0
    pool = list(fresh)
    for r in tracked:
        if not pool:
            raise StripResError("fewer poles on the decay basis than tracked")
        d = [float(cyl_dist(r.k1, p.k1)) for p in pool]
        j = int(np.argmin(d))
        worst = max(worst, d[j])
        out.append(replace(pool.pop(j), klass=r.klass, index=r.index))
    return out, worst


def _localize(cfg: RunConfig, tau1: float, k2: complex, basis, qplus: list) -> tuple[list, dict]:
    """Riesz ranks of every ``Γ±_{m2}`` for ``μ ∈ {0, λ/2, λ}``."""
    conv = convolution_matrix(cfg.medium, "eps0", basis)
    contours = RectContour.all_for(cfg.delta, tau1)
    owners = {id(c): [p for p in qplus if c.contains(p.k1)] for c in contours}
    rows, ok, bad = [], True, []
    for p in qplus:
        inside = [c for c in contours if c.contains(p.k1)]
        if len(inside) != 1:
            ok = False
            bad.append(f"pole {p.index} lies in {len(inside)} contours")
    for mu in (0.0, cfg.lam / 2, cfg.lam):
        raw = np.linalg.eigvals(companion_matrix(k2, mu, basis, conv))
        for c in contours:
            s = riesz_singular_values(c, k2, mu, cfg.medium, basis, cfg.q_nodes, raw_eigs=raw, conv=conv)
            rank = int(np.sum(s > 0.5))
            has = bool(owners[id(c)])
            if rank >= 2 or (has and rank != 1):
                ok = False
                bad.append(f"mu={mu} contour ({c.sign},{c.m2 / TWO_PI:g}) rank {rank}")
            rows.append(
                {
                    "im_k2": k2.imag,
                    "mu": mu,
                    "sign": c.sign,
                    "m2": c.m2,
                    "rank": rank,
                    "sigma1": float(s[0]) if len(s) else 0.0,
                    "has_qplus": has,
                }
            )
    return rows, {"ok": ok, "problems": bad}


def run_pipeline(cfg: RunConfig, write: bool = True, until: Optional[str] = None) -> RunReport:
    """Execute the stages in order; the first failure marks the rest skipped.

    ``until`` names the last stage to run; later ones stay ``skipped``.
    """
    if until is not None and until not in STAGES:
        raise ValueError(f"unknown stage {until!r}")
    last = STAGES.index(until) if until is not None else len(STAGES) - 1
    rep = RunReport()
    state: dict = {}

    def run(name, fn):
        st = rep.stage(name)
        if STAGES.index(name) > last or any(s.status == "failed" for s in rep.stages):
            return False
        try:
            ok, metrics, msg = fn()
        except StripResError as exc:
            ok, metrics, msg = False, {"error": type(exc).__name__}, str(exc)
        st.status = "passed" if ok else "failed"
        st.metrics = metrics
        st.message = msg
        log.info("stage %s: %s %s", name, st.status, msg)
        return ok

    def s_validate():
        cfg.validate()
        return True, {}, ""

    def s_tau1():
        sup = sup_norm_eps0(cfg.medium)
        auto = select_tau1(cfg.lam, sup, cfg.theta)
        tau1 = auto if cfg.tau1 is None else float(cfg.tau1)
        state["tau1"] = tau1
        rep.tau1 = tau1
        ok = tau1 >= auto - 1e-12
        return ok, {"tau1": tau1, "tau1_auto": auto, "eps0_sup": sup}, "" if ok else "tau1 below the selected value"

    def s_lines():
        tau1 = state["tau1"]
        pol = cfg.track_policy(tau1)
        g0 = 0.5 * (np.pi + cfg.theta)
        k2s = [complex(g0, 0.0), complex(cfg.re_k2, 0.0)] + [complex(cfg.re_k2, h) for h in cfg.heights]
        worst = np.inf
        for k2 in k2s:
            b = pol.basis_for(k2)
            for h in (tau1, -tau1):
                worst = min(worst, sigma_min_scan(h, k2, cfg.lam, cfg.medium, b, cfg.scan_samples))
        ok = worst > LINE_MARGIN
        return ok, {"min_sigma": worst, "points": len(k2s)}, "" if ok else f"sigma_min {worst:.3e} on Im k1 = ±tau1"

    def s_z0():
        tau1 = state["tau1"]
        window, g0, delta0, recs = _z0_search(cfg, tau1, cfg.track_policy(tau1))
        state.update(g0=g0, delta0=delta0, start=recs)
        rep.delta0 = delta0
        rep.N = len(recs)
        rep.N_plus = sum(r.klass == "up" for r in recs)
        rep.N_minus = sum(r.klass == "down" for r in recs)
        metrics = {"window": list(window), "gamma0": g0, "delta0": delta0, "N_real": sum(r.klass == "real" for r in recs)}
        ok = True
        msg = ""
        if cfg.medium.is_free:
            oracle = free_pole_count(g0, cfg.lam, cfg.medium.eps0_background, tau1)
            metrics["N_oracle"] = oracle
            ok = oracle == len(recs)
            msg = "" if ok else f"N={len(recs)} but the free oracle gives {oracle}"
        return ok, metrics, msg

    def s_track():
        tau1 = state["tau1"]
        pol = cfg.track_policy(tau1)
        top = max(cfg.heights)
        if cfg.waypoints is None:
            path = auto_path(cfg.theta, cfg.delta, top, cfg.heights, cfg.max_step, start=state["g0"])
        else:
            path = PathSpec(cfg.waypoints, cfg.theta, cfg.delta, cfg.max_step or min(0.25, cfg.delta))
        traj = track_poles(path, cfg.lam, cfg.medium, pol, tau1, state["start"])
        _, err = replay_reverse(traj, cfg.lam, cfg.medium, pol, tau1, cfg.theta, cfg.delta)
        counts = sorted(set(traj.counts()))
        state["traj"] = traj
        flagged = sum(1 for s in traj.steps if s.flags)
        ok = counts == [rep.N] and err <= REVERSE_TOL
        metrics = {
            "steps": len(traj.steps),
            "flagged_steps": flagged,
            "offsets": [[complex(k).real, complex(k).imag, o] for k, o in traj.offsets],
            "counts": counts,
            "reverse_error": err,
        }
        msg = "" if ok else f"counts {counts}, reverse error {err:.3e}"
        return ok, metrics, msg

    def s_localize():
        tau1 = state["tau1"]
        pol = cfg.decay_policy(tau1)
        rows, per, certified, worst_match = [], [], [], 0.0
        qplus_at: dict = {}
        for ell, h in zip(cfg.ells, cfg.heights):
            k2 = complex(cfg.re_k2, h)
            basis = pol.basis_for(k2)
            tracked = _at_height(state["traj"], cfg, tau1, h)
            fresh = pencil_eigs(k2, cfg.lam, cfg.medium, basis, tau1)
            matched, d = _match_fresh(tracked, fresh)
            worst_match = max(worst_match, d)
            qplus = [r for r in matched if r.klass == "up"]
            qplus_at[round(h, 12)] = (qplus, fresh)
            r, info = _localize(cfg, tau1, k2, basis, qplus)
            rows.extend(r)
            per.append({"ell": ell, **info})
            certified.append(info["ok"])
        state["qplus_at"] = qplus_at
        state["localization_rows"] = rows
        # Smallest sweep height from which every higher height certifies.
        m_emp = None
        for i in range(len(certified) - 1, -1, -1):
            if not certified[i]:
                break
            m_emp = TWO_PI * cfg.ells[i]
        rep.M_empirical = m_emp
        ok = all(certified) and worst_match <= MATCH_TOL
        problems = [p for x in per for p in x["problems"]]
        msg = "" if ok else "; ".join(problems[:5]) or f"pole re-identification off by {worst_match:.3e}"
        return ok, {"heights": len(per), "match_error": worst_match, "problems": problems}, msg

    def s_decay():
        tau1 = state["tau1"]

        def provider(k2, basis):
            return state["qplus_at"][round(k2.imag, 12)]

        table = a_decay_sweep(
            cfg.re_k2,
            [TWO_PI * e for e in cfg.ells],
            cfg.lam,
            cfg.medium,
            cfg.decay_policy(tau1),
            tau1,
            provider,
            cfg.q_line,
            cfg.q_circle,
            cfg.core_pad,
            cfg.tail_extent,
            cfg.threads,
        )
        state["decay"] = table
        rep.C_empirical = table.c_empirical
        ratio = table.bounded_ratio()
        metrics = {"slope_fit": table.slope_fit, "bounded_ratio": ratio, "C_empirical": table.c_empirical}
        if len(cfg.ells) < 2:
            return True, metrics, "single height: slope not fitted"
        ok = SLOPE_WINDOW[0] <= table.slope_fit <= SLOPE_WINDOW[1] and ratio <= BOUNDED_RATIO
        return ok, metrics, "" if ok else f"slope {table.slope_fit:.3f}, ratio {ratio:.3f}"

    def s_fredholm():
        table: DecayTable = state["decay"]
        reports = fredholm_scan(table.families, cfg.lam, cfg.medium)
        state["fredholm"] = reports
        knee = len(reports) // 2
        tail = reports[knee:]
        ok = all(r.neumann_bound < 1 and r.sigma_min_IlAe >= SIGMA_FLOOR for r in tail)
        metrics = {
            "knee_ell": table.ells[knee],
            "min_sigma_past_knee": min(r.sigma_min_IlAe for r in tail),
            "max_neumann_past_knee": max(r.neumann_bound for r in tail),
            "conclusions": [r.conclusion for r in reports],
        }
        return ok, metrics, "" if ok else "Fredholm certificate fails past the knee"

    for name, fn in zip(
        STAGES, (s_validate, s_tau1, s_lines, s_z0, s_track, s_localize, s_decay, s_fredholm)
    ):
        try:
            run(name, fn)
        except ConfigError as exc:
            st = rep.stage(name)
            st.status, st.message = "failed", str(exc)

    if write:
        _write_outputs(cfg, rep, state)
    return rep


def _write_outputs(cfg: RunConfig, rep: RunReport, state: dict) -> None:
    out = Path(cfg.out_dir)
    if "traj" in state:
        rep.artifacts["trajectory"] = str(write_csv(out / "trajectory.csv", state["traj"].rows(), TRAJECTORY_COLUMNS))
    if "localization_rows" in state:
        rep.artifacts["localization"] = str(
            write_csv(out / "localization.csv", state["localization_rows"], LOCALIZATION_COLUMNS)
        )
    if "decay" in state:
        rep.artifacts["decay"] = str(write_csv(out / "decay.csv", state["decay"].rows(), DECAY_COLUMNS))
    if "fredholm" in state:
        rows = [
            {
                "re_k2": r.k2.real,
                "im_k2": r.k2.imag,
                "sigma_min": r.sigma_min_IlAe,
                "conclusion": r.conclusion,
            }
            for r in state["fredholm"]
        ]
        rep.artifacts["fredholm"] = str(write_csv(out / "fredholm.csv", rows, FREDHOLM_COLUMNS))
    rep.artifacts["report"] = str(out / "report.json")
    write_json(out / "report.json", {"config": cfg.to_dict(), "report": rep.to_dict()})

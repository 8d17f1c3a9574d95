"""INI experiment files.

Sections ``[distribution]``, ``[schedule]``, ``[target]``, ``[experiment]``,
plus optional ``[rates]`` and ``[liminf]``.  Numbers may be written as
fractions (``1/6``); vectors are comma or space separated; matrices separate
rows with ``;``.  Every validation error is reported as ConfigError naming the
section and key.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass
from fractions import Fraction

from recurlab.errors import ConfigError, RecurLabError
from recurlab.estimators import Form
from recurlab.replication import ExperimentConfig, Resolved
from recurlab.schedule import ScheduleSpec
from recurlab.hits import TargetSpec

_FORM_MODE = {"T1Lattice": "lattice", "T2aWindow": "window", "T2bWindow": "window",
              "T3Box": "box", "C3Weighted": "box"}


@dataclass(frozen=True)
class LiminfSpec:
    gamma: float
    n_max: int
    replicas: int
    bound: float | None = None
    milestones: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        d = {"gamma": self.gamma, "n_max": self.n_max, "replicas": self.replicas,
             "milestones": list(self.milestones)}
        if self.bound is not None:
            d["bound"] = self.bound
        return d


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    rate_counts: tuple[int, ...] = ()
    liminf: LiminfSpec | None = None
    rate_alpha: float | None = None   # rate exponent override, needed for T3Box

    def canonical(self) -> dict:
        d = {"experiment": self.experiment.to_dict()}
        if self.rate_counts:
            d["rates"] = {"counts": list(self.rate_counts)}
            if self.rate_alpha is not None:
                d["rates"]["alpha"] = self.rate_alpha
        if self.liminf is not None:
            d["liminf"] = self.liminf.to_dict()
        return d


# -- value parsing ------------------------------------------------------------------------

def _num(text: str, where: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}", where) from None


def _int(text: str, where: str) -> int:
    v = _num(text, where)
    if not v.is_integer():
        raise ConfigError(f"not an integer: {text!r}", where)
    return int(v)


def _vec(text: str, where: str) -> list[float]:
    parts = text.replace(",", " ").split()
    if not parts:
        raise ConfigError("empty vector", where)
    return [_num(p, where) for p in parts]


def _mat(text: str, where: str) -> list[list[float]]:
    return [_vec(row, where) for row in text.split(";") if row.strip()]


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        if v and isinstance(v[0], (list, tuple)):
            return "; ".join(_fmt(r) for r in v)
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# -- sections -----------------------------------------------------------------------------

def _distribution(sec) -> dict:
    w = lambda k: f"distribution.{k}"
    if "family" not in sec:
        raise ConfigError("missing key", w("family"))
    fam = sec["family"].strip()
    d = {"family": fam}
    if fam in ("simple", "uniform"):
        d["dimension"] = _int(sec.get("dimension", "1"), w("dimension"))
        if fam == "uniform":
            d["half_width"] = _num(sec.get("half_width", "1"), w("half_width"))
    elif fam == "gaussian":
        d["covariance"] = _mat(_need(sec, "covariance", "distribution"), w("covariance"))
    elif fam == "atoms":
        d["basis"] = _mat(_need(sec, "basis", "distribution"), w("basis"))
        d["offset"] = _vec(_need(sec, "offset", "distribution"), w("offset"))
        d["atoms"] = _mat(_need(sec, "atoms", "distribution"), w("atoms"))
        d["probs"] = _vec(_need(sec, "probs", "distribution"), w("probs"))
    elif fam == "mixture":
        d["centers"] = _mat(_need(sec, "centers", "distribution"), w("centers"))
        d["half_widths"] = _vec(_need(sec, "half_widths", "distribution"), w("half_widths"))
        d["weights"] = _vec(_need(sec, "weights", "distribution"), w("weights"))
    else:
        raise ConfigError(f"unknown family {fam!r} (simple, atoms, uniform, gaussian, mixture)",
                          w("family"))
    return d


def _need(sec, key, name):
    if key not in sec:
        raise ConfigError("missing key", f"{name}.{key}")
    return sec[key]


def _schedule(sec) -> ScheduleSpec:
    w = lambda k: f"schedule.{k}"
    kind = _need(sec, "kind", "schedule").strip()
    kw = {"kind": kind, "start_index": _int(sec.get("start_index", "2"), w("start_index")),
          "parity": sec.get("parity", "none").strip()}
    if "count" in sec:
        kw["count"] = _int(sec["count"], w("count"))
    if "beta" in sec:
        kw["beta"] = _num(sec["beta"], w("beta"))
    if "ratio" in sec:
        kw["ratio"] = _num(sec["ratio"], w("ratio"))
    if "terms" in sec:
        kw["explicit_terms"] = tuple(_int(str(t), w("terms")) for t in _vec(sec["terms"], w("terms")))
    try:
        return ScheduleSpec(**kw)
    except (RecurLabError, ValueError) as exc:
        raise ConfigError(str(exc), "schedule") from None


def _target(sec) -> tuple[Form, TargetSpec]:
    w = lambda k: f"target.{k}"
    form_s = _need(sec, "form", "target").strip()
    if form_s not in _FORM_MODE:
        raise ConfigError(f"unknown form {form_s!r} ({', '.join(_FORM_MODE)})", w("form"))
    kw = {"a": tuple(_vec(_need(sec, "a", "target"), w("a"))),
          "mode": sec.get("mode", _FORM_MODE[form_s]).strip()}
    for key in ("alpha", "eps", "N", "grid_step"):
        if key in sec:
            kw[key] = _num(sec[key], w(key))
    if "points" in sec:
        kw["points"] = tuple(tuple(p) for p in _mat(sec["points"], w("points")))
    try:
        return Form(form_s), TargetSpec(**kw)
    except (RecurLabError, ValueError) as exc:
        key = "alpha" if "alpha" in str(exc) else ("eps" if "eps" in str(exc) else "")
        raise ConfigError(str(exc), w(key) if key else "target") from None


def parse_config_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    for s in ("distribution", "schedule", "target", "experiment"):
        if not cp.has_section(s):
            raise ConfigError("missing section", s)
    dist = _distribution(cp["distribution"])
    sched = _schedule(cp["schedule"])
    form, target = _target(cp["target"])
    ex = cp["experiment"]
    w = lambda k: f"experiment.{k}"
    kw = dict(dist=dist, schedule=sched, target=target, form=form,
              replicas=_int(_need(ex, "replicas", "experiment"), w("replicas")),
              master_seed=_int(_need(ex, "master_seed", "experiment"), w("master_seed")))
    if "epsilon_grid" in ex:
        kw["epsilon_grid"] = tuple(_vec(ex["epsilon_grid"], w("epsilon_grid")))
    if "c_be" in ex:
        kw["c_be"] = _num(ex["c_be"], w("c_be"))
    try:
        exp = ExperimentConfig(**kw)
        Resolved(exp)  # surfaces distribution and dimension errors now, not in a worker
    except ConfigError:
        raise
    except (RecurLabError, ValueError) as exc:
        raise ConfigError(str(exc), "experiment") from None
    counts, rate_alpha = (), None
    if cp.has_section("rates"):
        counts = tuple(_int(str(c), "rates.counts") for c in _vec(_need(cp["rates"], "counts", "rates"),
                                                                  "rates.counts"))
        if "alpha" in cp["rates"]:
            rate_alpha = _num(cp["rates"]["alpha"], "rates.alpha")
    liminf = None
    if cp.has_section("liminf"):
        li = cp["liminf"]
        wl = lambda k: f"liminf.{k}"
        liminf = LiminfSpec(
            gamma=_num(_need(li, "gamma", "liminf"), wl("gamma")),
            n_max=_int(_need(li, "n_max", "liminf"), wl("n_max")),
            replicas=_int(li.get("replicas", "1"), wl("replicas")),
            bound=_num(li["bound"], wl("bound")) if "bound" in li else None,
            milestones=tuple(int(m) for m in _vec(li["milestones"], wl("milestones")))
            if "milestones" in li else ())
        if liminf.n_max < 1 or liminf.replicas < 1:
            raise ConfigError("n_max and replicas must be >= 1", "liminf")
    return RunConfig(exp, counts, liminf, rate_alpha)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config_text(text)


def to_ini(rc: RunConfig) -> str:
    """Serialize back to INI; parsing the result gives the same canonical form."""
    e = rc.experiment
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["distribution"] = {k: _fmt(v) for k, v in e.dist.items()}
    sd = e.schedule.to_dict()
    if "explicit_terms" in sd:
        sd["terms"] = sd.pop("explicit_terms")
    cp["schedule"] = {k: _fmt(v) for k, v in sd.items()}
    td = e.target.to_dict()
    cp["target"] = {"form": e.form.value, **{k: _fmt(v) for k, v in td.items()}}
    ex = {"replicas": str(e.replicas), "master_seed": str(e.master_seed),
          "epsilon_grid": _fmt(list(e.epsilon_grid))}
    if e.c_be is not None:
        ex["c_be"] = _fmt(e.c_be)
    cp["experiment"] = ex
    if rc.rate_counts:
        cp["rates"] = {"counts": _fmt(list(rc.rate_counts))}
        if rc.rate_alpha is not None:
            cp["rates"]["alpha"] = _fmt(rc.rate_alpha)
    if rc.liminf is not None:
        cp["liminf"] = {k: _fmt(v) for k, v in rc.liminf.to_dict().items() if v != []}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()

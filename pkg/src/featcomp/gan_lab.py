"""Exact discrete model of discriminator / generator feature incentives.

Features are finite random variables with one distribution under the data
(``y = 1``) and one under the generator (``y = 0``); the class prior is fixed
at 1/2, so ``H(y) = 1`` bit. Feature indices in the public API are 1-based to
match the usual ``f_1 .. f_n`` notation. Motivations are in bits, the value
function ``V(D, G)`` in nats.
"""

from __future__ import annotations

import configparser
import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .info_core import JointPMF, conditional_entropy, conditional_mutual_information, mutual_information, sel

TOL = 1e-9
PMF_TOL = 1e-12
LOG4 = math.log(4.0)

STRICT_ALTERNATION = "strict-alternation"
D_LEADS = "D-leads-by-l"
G_CATCHUP = "G-catchup-until-confusion"
POLICIES = (STRICT_ALTERNATION, D_LEADS, G_CATCHUP)


class ScenarioError(ValueError):
    """Malformed scenario or request."""


class ConfusionBroken(ScenarioError):
    """The discriminator is not confused on the features the caller assumed."""


class PreconditionError(ScenarioError):
    """A lead / incentive computation was requested outside its assumptions."""


def _pmf(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ScenarioError(f"{what}: expected a non-empty 1-d pmf")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)) or abs(arr.sum() - 1.0) > PMF_TOL:
        raise ScenarioError(f"{what}: not a valid pmf (sum={arr.sum()!r})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    p_real: np.ndarray
    p_gen: np.ndarray

    def __post_init__(self):
        real = _pmf(self.p_real, f"{self.name}.p_real")
        gen = _pmf(self.p_gen, f"{self.name}.p_gen")
        if real.size != gen.size:
            raise ScenarioError(f"{self.name}: p_real and p_gen alphabets differ")
        object.__setattr__(self, "p_real", real)
        object.__setattr__(self, "p_gen", gen)

    @property
    def size(self) -> int:
        return self.p_real.size

    def matched(self) -> bool:
        return bool(np.allclose(self.p_real, self.p_gen, rtol=0, atol=PMF_TOL))


def _product(pmfs: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(())
    for p in pmfs:
        out = np.multiply.outer(out, p)
    return out


@dataclass(frozen=True)
class GanScenario:
    """Features plus how many of them each player has learned.

    With ``joint_real`` / ``joint_gen`` left as ``None`` the features are
    independent given the class; otherwise the arrays give the full
    class-conditional joints and the per-feature pmfs must be their marginals.
    """

    features: tuple[FeatureSpec, ...]
    learned_by_d: int = 0
    learned_by_g: int = 0
    joint_real: Optional[np.ndarray] = field(default=None, compare=False)
    joint_gen: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        feats = tuple(self.features)
        object.__setattr__(self, "features", feats)
        if not feats:
            raise ScenarioError("scenario needs at least one feature")
        names = [f.name for f in feats]
        if len(set(names)) != len(names):
            raise ScenarioError("feature names must be unique")
        if not 0 <= self.learned_by_g <= self.learned_by_d <= len(feats):
            raise ScenarioError("need 0 <= learned_by_g <= learned_by_d <= feature count")
        if (self.joint_real is None) != (self.joint_gen is None):
            raise ScenarioError("give both explicit joints or neither")
        if self.joint_real is not None:
            shape = tuple(f.size for f in feats)
            for attr, side in (("joint_real", "p_real"), ("joint_gen", "p_gen")):
                j = np.asarray(getattr(self, attr), dtype=np.float64)
                if j.shape != shape:
                    raise ScenarioError(f"{attr} has shape {j.shape}, features imply {shape}")
                if np.any(j < 0) or abs(j.sum() - 1.0) > PMF_TOL:
                    raise ScenarioError(f"{attr} is not a valid pmf")
                for i, f in enumerate(feats):
                    axes = tuple(a for a in range(len(shape)) if a != i)
                    if not np.allclose(j.sum(axis=axes), getattr(f, side), rtol=0, atol=1e-9):
                        raise ScenarioError(f"{attr} marginal for {f.name} disagrees with {side}")
                j.setflags(write=False)
                object.__setattr__(self, attr, j)

    @classmethod
    def from_joints(cls, names: Sequence[str], joint_real, joint_gen, **kw) -> "GanScenario":
        jr = np.asarray(joint_real, dtype=np.float64)
        jg = np.asarray(joint_gen, dtype=np.float64)
        feats = []
        for i, name in enumerate(names):
            axes = tuple(a for a in range(jr.ndim) if a != i)
            feats.append(FeatureSpec(name, jr.sum(axis=axes), jg.sum(axis=axes)))
        return cls(tuple(feats), joint_real=jr, joint_gen=jg, **kw)

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def explicit(self) -> bool:
        return self.joint_real is not None

    def real_joint(self) -> np.ndarray:
        return self.joint_real if self.explicit else _product([f.p_real for f in self.features])

    def gen_joint(self) -> np.ndarray:
        return self.joint_gen if self.explicit else _product([f.p_gen for f in self.features])

    def drop(self, positions: Sequence[int]) -> "GanScenario":
        """Scenario without the given 0-based feature positions (marginalized out)."""
        drop = set(positions)
        keep = [i for i in range(self.n) if i not in drop]
        if not keep:
            raise ScenarioError("cannot drop every feature")
        feats = tuple(self.features[i] for i in keep)
        nd = sum(1 for i in drop if i < self.learned_by_d)
        ng = sum(1 for i in drop if i < self.learned_by_g)
        if not self.explicit:
            return GanScenario(feats, self.learned_by_d - nd, self.learned_by_g - ng)
        axes = tuple(sorted(drop))
        return GanScenario(
            feats,
            self.learned_by_d - nd,
            self.learned_by_g - ng,
            self.joint_real.sum(axis=axes),
            self.joint_gen.sum(axis=axes),
        )


def match_feature(s: GanScenario, k: int) -> GanScenario:
    """The generator learns feature ``k``: its distribution on f_1..f_k becomes the real one.

    Independent features simply swap in ``p_real``. For explicit joints the
    real law of the prefix f_1..f_k is grafted under the generator's own
    conditional for the remaining coordinates.
    """
    _check_index(s, k)
    if not s.explicit:
        feats = list(s.features)
        feats[k - 1] = replace(feats[k - 1], p_gen=feats[k - 1].p_real)
        return replace(s, features=tuple(feats))
    shape = s.joint_gen.shape
    head = shape[:k]
    real_head = s.joint_real.reshape(*head, -1).sum(axis=-1)
    gen = s.joint_gen.reshape(*head, -1)
    gen_head = gen.sum(axis=-1, keepdims=True)
    gen_tail_marginal = gen.reshape(-1, gen.shape[-1]).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(gen_head > 0, gen / np.where(gen_head > 0, gen_head, 1.0), gen_tail_marginal)
    new_gen = (real_head[..., None] * cond).reshape(shape)
    return GanScenario.from_joints([f.name for f in s.features], s.joint_real, new_gen,
                                   learned_by_d=s.learned_by_d, learned_by_g=s.learned_by_g)


def match_prefix(s: GanScenario, upto: int) -> GanScenario:
    for k in range(1, upto + 1):
        s = match_feature(s, k)
    return s


def _check_index(s: GanScenario, k: int) -> None:
    if not 1 <= k <= s.n:
        raise ScenarioError(f"feature index {k} outside 1..{s.n}")


def scenario_joint(s: GanScenario) -> JointPMF:
    """Joint over (y, f_1, ..., f_n) with y = 1 for data and y = 0 for the generator."""
    table = np.stack([0.5 * s.gen_joint(), 0.5 * s.real_joint()])
    variables = [("y", 2)] + [(f.name, f.size) for f in s.features]
    return JointPMF(variables, table)


def _H_y_given(p: JointPMF, features: Sequence[int]) -> float:
    # joint axis i holds feature f_i; axis 0 is y
    return conditional_entropy(p, sel(0), sel(list(features)))


def confusion_check(s: GanScenario, upto: int) -> tuple[bool, float]:
    """Whether the optimal D on f_1..f_upto is at chance, and H(y | f_1..f_upto)."""
    if not 0 <= upto <= s.n:
        raise ScenarioError(f"upto={upto} outside 0..{s.n}")
    h = _H_y_given(scenario_joint(s), range(1, upto + 1))
    return abs(h - 1.0) <= TOL, h


def value_function(s: GanScenario, upto: int) -> float:
    """V(D*, G) in nats for the optimal discriminator restricted to f_1..f_upto.

    Loss sign convention: ``-E_data log D - E_gen log(1 - D)``; equals log 4
    exactly when D is confused and is smaller otherwise.
    """
    if not 0 <= upto <= s.n:
        raise ScenarioError(f"upto={upto} outside 0..{s.n}")
    axes = tuple(range(upto, s.n))
    real = s.real_joint().sum(axis=axes).ravel() if axes else s.real_joint().ravel()
    gen = s.gen_joint().sum(axis=axes).ravel() if axes else s.gen_joint().ravel()
    v = 0.0
    for pr, pg in zip(real, gen):
        tot = pr + pg
        if pr > 0:
            v -= pr * math.log(pr / tot)
        if pg > 0:
            v -= pg * math.log(pg / tot)
    return float(v)


@dataclass(frozen=True)
class Motivation:
    exact: float
    lower_bound: float


def discriminator_motivation(s: GanScenario, k: int) -> Motivation:
    """Information D gains from f_k while confused on f_1..f_{k-1}.

    ``exact`` is I(y; f_k | f_1..f_{k-1}) = 1 - H(y | f_1..f_k);
    ``lower_bound`` is 1 - H(y | f_k), which ignores the earlier features.
    """
    _check_index(s, k)
    p = scenario_joint(s)
    confused, h_prev = confusion_check(s, k - 1)
    if not confused:
        raise ConfusionBroken(
            f"D is not confused on f_1..f_{k - 1} (H={h_prev:.6f} bits); use lead_motivation"
        )
    exact = conditional_mutual_information(p, sel(0), sel(k), sel(range(1, k)))
    via_entropy = 1.0 - _H_y_given(p, range(1, k + 1))
    if abs(exact - via_entropy) > TOL:
        raise RuntimeError(f"motivation identity failed: {exact!r} vs {via_entropy!r}")
    # H(y) is exactly 1 bit, so 1 - H(y | f_k) = I(y; f_k)
    lower = mutual_information(p, sel(0), sel(k))
    return Motivation(exact, lower)


def competition_free_check(s: GanScenario, k: int, max_prefix: int = 12) -> bool:
    """True iff the lower bound for f_k survives removal of any subset of f_1..f_{k-1}."""
    base = discriminator_motivation(s, k).lower_bound
    prefix = range(k - 1)
    if len(prefix) > max_prefix:
        raise ScenarioError(f"prefix of {len(prefix)} features exceeds max_prefix={max_prefix}")
    for r in range(1, len(prefix) + 1):
        for removed in itertools.combinations(prefix, r):
            reduced = s.drop(removed)
            new_k = k - len(removed)
            if not confusion_check(reduced, new_k - 1)[0]:
                continue
            if abs(discriminator_motivation(reduced, new_k).lower_bound - base) > TOL:
                return False
    return True


def _lead_preconditions(s: GanScenario, k: int, l: int, need_next: bool) -> JointPMF:
    if k < 1 or l < 1:
        raise PreconditionError("need k >= 1 and l >= 1")
    last = k + l if need_next else k + l - 1
    if last > s.n:
        raise PreconditionError(f"scenario has {s.n} features, need f_{last}")
    if s.learned_by_d < k + l - 1:
        raise PreconditionError(f"D must have learned f_1..f_{k + l - 1} (has {s.learned_by_d})")
    if s.learned_by_g > k - 1:
        raise PreconditionError(f"G must know at most f_1..f_{k - 1} (has {s.learned_by_g})")
    confused, h_prev = confusion_check(s, k - 1)
    if not confused:
        raise PreconditionError(f"D is not confused on f_1..f_{k - 1} (H={h_prev:.6f})")
    p = scenario_joint(s)
    h_lead = _H_y_given(p, range(k, k + l))
    if not h_lead < 1.0 - TOL:
        raise PreconditionError(
            f"no lead: H(y | f_{k}..f_{k + l - 1}) = {h_lead:.12f} is not below 1 bit"
        )
    return p


def _prefix_irrelevant(p: JointPMF, k: int, upto: int) -> bool:
    # H(y | f_1..f_upto) == H(y | f_k..f_upto)
    return abs(_H_y_given(p, range(1, upto + 1)) - _H_y_given(p, range(k, upto + 1))) <= TOL


def lead_motivation(s: GanScenario, k: int, l: int) -> float:
    """D's motivation for f_{k+l} while it leads G by features f_k..f_{k+l-1}.

    Returns I(y; f_{k+l} | f_1..f_{k+l-1}) after checking it against
    H(y | f_k..f_{k+l-1}) - H(y | f_k..f_{k+l}).
    """
    p = _lead_preconditions(s, k, l, need_next=True)
    direct = conditional_mutual_information(p, sel(0), sel(k + l), sel(range(1, k + l)))
    via_lead = _H_y_given(p, range(k, k + l)) - _H_y_given(p, range(k, k + l + 1))
    if abs(direct - via_lead) > TOL:
        raise PreconditionError(
            "confused prefix f_1..f_{k-1} still carries information jointly with the lead features; "
            f"paths disagree ({direct!r} vs {via_lead!r})"
        )
    return direct


def generator_incentive(s: GanScenario, k: int, l: int) -> tuple[float, float]:
    """(incentive, bound) for G matching f_k while D leads on f_k..f_{k+l-1}.

    incentive = H_{f_k matched}(y | f_1..f_{k+l-1}) - H(y | f_1..f_{k+l-1});
    bound = I(y; f_k..f_{k+l-1}).
    """
    p = _lead_preconditions(s, k, l, need_next=False)
    upto = k + l - 1
    if not _prefix_irrelevant(p, k, upto):
        raise PreconditionError("confused prefix is not irrelevant given the lead features")
    before = _H_y_given(p, range(1, upto + 1))
    after = _H_y_given(scenario_joint(match_feature(s, k)), range(1, upto + 1))
    incentive = after - before
    bound = mutual_information(p, sel(0), sel(range(k, upto + 1)))
    if incentive > bound + TOL:
        raise RuntimeError(f"generator incentive {incentive!r} exceeds bound {bound!r}")
    return incentive, bound


def d_motivation_sum(s: GanScenario, k: int, l: int) -> tuple[float, float]:
    """(sum of D's incremental motivations over f_k..f_{k+l-1}, I(y; f_k..f_{k+l-1}))."""
    if s.learned_by_g > k - 1 or k + l - 1 > s.n:
        raise PreconditionError("need G at most at f_{k-1} and f_{k+l-1} present")
    if not confusion_check(s, k - 1)[0]:
        raise PreconditionError(f"D is not confused on f_1..f_{k - 1}")
    p = scenario_joint(s)
    total = sum(
        conditional_mutual_information(p, sel(0), sel(j), sel(range(1, j))) for j in range(k, k + l)
    )
    return total, mutual_information(p, sel(0), sel(range(k, k + l)))


# -- balancing simulation ---------------------------------------------------

@dataclass(frozen=True)
class BalanceStep:
    actor: str  # "D" or "G"
    feature: int
    motivation_bits: float
    v_nats: float
    # D steps: motivation D would have if G had matched everything D knew
    confused_motivation: Optional[float] = None


@dataclass(frozen=True)
class BalanceTrace:
    policy: str
    initial_v: float
    steps: tuple[BalanceStep, ...]
    final: GanScenario

    def to_csv(self) -> str:
        lines = ["step,actor,feature,motivation_bits,V_nats"]
        for i, st in enumerate(self.steps, 1):
            lines.append(f"{i},{st.actor},{st.feature},{st.motivation_bits!r},{st.v_nats!r}")
        return "\n".join(lines) + "\n"

    @property
    def final_v(self) -> float:
        return self.steps[-1].v_nats if self.steps else self.initial_v


def _d_step(s: GanScenario) -> tuple[GanScenario, BalanceStep]:
    d, nxt = s.learned_by_d, s.learned_by_d + 1
    p = scenario_joint(s)
    m = conditional_mutual_information(p, sel(0), sel(nxt), sel(range(1, nxt)))
    pc = scenario_joint(match_prefix(s, d))
    mc = conditional_mutual_information(pc, sel(0), sel(nxt), sel(range(1, nxt)))
    s = replace(s, learned_by_d=nxt)
    return s, BalanceStep("D", nxt, float(m), value_function(s, nxt), float(mc))


def _g_step(s: GanScenario) -> tuple[GanScenario, BalanceStep]:
    d, nxt = s.learned_by_d, s.learned_by_g + 1
    before = _H_y_given(scenario_joint(s), range(1, d + 1))
    s = replace(match_feature(s, nxt), learned_by_g=nxt)
    after = _H_y_given(scenario_joint(s), range(1, d + 1))
    return s, BalanceStep("G", nxt, float(max(after - before, 0.0)), value_function(s, d))


def simulate_balancing(s: GanScenario, policy: str, lead: int = 2, max_steps: int = 10_000) -> BalanceTrace:
    """Grant features one at a time to D or G according to ``policy``.

    * strict-alternation: D, G, D, G, ... (a player with nothing to learn skips)
    * D-leads-by-l: D learns until it is ``lead`` features ahead, then the
      players alternate keeping that lead until D runs out of features
    * G-catchup-until-confusion: G learns consecutively until it has matched
      every feature D knows
    """
    if policy not in POLICIES:
        raise ScenarioError(f"unknown policy {policy!r}; choose from {POLICIES}")
    if policy == D_LEADS and lead < 1:
        raise ScenarioError("lead must be >= 1")
    d_can = lambda st: st.learned_by_d < st.n  # noqa: E731
    g_can = lambda st: st.learned_by_g < st.learned_by_d  # noqa: E731
    if (policy == D_LEADS and not d_can(s)) or (policy == STRICT_ALTERNATION and not (d_can(s) or g_can(s))):
        raise ScenarioError("policy cannot progress: no features left to learn")

    # G is assumed to already reproduce the real law of what it has learned
    s = match_prefix(s, s.learned_by_g)
    initial_v = value_function(s, s.learned_by_d)
    steps: list[BalanceStep] = []
    turn = "D"
    while len(steps) < max_steps:
        if policy == G_CATCHUP:
            if not g_can(s):
                break
            s, step = _g_step(s)
        elif policy == D_LEADS:
            if not d_can(s):
                break
            if s.learned_by_d - s.learned_by_g < lead:
                s, step = _d_step(s)
            else:
                s, step = _g_step(s)
        else:
            if not (d_can(s) or g_can(s)):
                break
            if (turn == "D" and d_can(s)) or not g_can(s):
                s, step = _d_step(s)
                turn = "G"
            else:
                s, step = _g_step(s)
                turn = "D"
        steps.append(step)
    return BalanceTrace(policy, initial_v, tuple(steps), s)


# -- text config -----------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _flag(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ScenarioError(f"bad boolean {text!r}")


FEATURE_KEYS = {"alphabet", "p_real", "p_gen", "learned_d", "learned_g"}


def loads_scenario(text: str) -> GanScenario:
    """Parse a scenario config.

    One ``[feature:<name>]`` section per feature, in order, with keys
    ``alphabet``, ``p_real``, ``p_gen`` and optional ``learned_d`` /
    ``learned_g`` flags. Learned flags must form prefixes.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"unparseable scenario: {exc}") from exc
    feats, ld, lg = [], [], []
    for section in cp.sections():
        if section == "scenario":
            continue
        if not section.startswith("feature:"):
            raise ScenarioError(f"unknown section [{section}]")
        body = cp[section]
        unknown = set(body) - FEATURE_KEYS
        if unknown:
            raise ScenarioError(f"[{section}] unknown keys {sorted(unknown)}")
        name = section.split(":", 1)[1].strip()
        try:
            size = int(body["alphabet"])
            spec = FeatureSpec(name, _floats(body["p_real"]), _floats(body["p_gen"]))
        except KeyError as exc:
            raise ScenarioError(f"[{section}] missing key {exc}") from exc
        if spec.size != size:
            raise ScenarioError(f"[{section}] alphabet {size} but pmf has {spec.size} entries")
        feats.append(spec)
        ld.append(_flag(body.get("learned_d", "no")))
        lg.append(_flag(body.get("learned_g", "no")))
    for flags, who in ((ld, "learned_d"), (lg, "learned_g")):
        if any(b and not a for a, b in zip(flags, flags[1:])):
            raise ScenarioError(f"{who} flags must mark a prefix of the features")
    return GanScenario(tuple(feats), sum(ld), sum(lg))


def load_scenario(path) -> GanScenario:
    return loads_scenario(Path(path).read_text())


def dumps_scenario(s: GanScenario) -> str:
    if s.explicit:
        raise ScenarioError("text configs only describe class-conditionally independent features")
    out = []
    for i, f in enumerate(s.features):
        out.append(f"[feature:{f.name}]")
        out.append(f"alphabet = {f.size}")
        out.append("p_real = " + ", ".join(repr(float(v)) for v in f.p_real))
        out.append("p_gen = " + ", ".join(repr(float(v)) for v in f.p_gen))
        out.append(f"learned_d = {'yes' if i < s.learned_by_d else 'no'}")
        out.append(f"learned_g = {'yes' if i < s.learned_by_g else 'no'}")
        out.append("")
    return "\n".join(out)

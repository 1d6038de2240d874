"""Line-oriented ``key = value`` experiment configuration.

Blank lines and lines starting with ``#`` are ignored.  Demand offsets are
arithmetic expressions in the stage index ``h`` (and ``H``, ``K``), e.g.
``env.demand.offset_rule = (10 - h) / 2``; ``grid.max`` may use ``H`` and
``K``.  Agents are listed on one line:

    agents = fql, hql(radius_mode=experiment), aggql(agg_step=1), qlucb

:func:`emit_config` writes every key explicitly, so
``parse_config_text(emit_config(cfg)) == cfg``.
"""

from __future__ import annotations

import ast
import hashlib
import math
import operator
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .envs import ActionGrid, CostParams, DemandModel, EnvSpec, amortize_costs


class ConfigError(ValueError):
    """Malformed, missing, duplicate or unknown configuration entries."""


class ValidationError(ValueError):
    """A well-formed configuration that describes an impossible experiment."""


# --------------------------------------------------------------------------
# safe arithmetic expressions

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"sqrt": math.sqrt, "log": math.log, "min": min, "max": max, "abs": abs}


def eval_expression(text: str, **variables: float) -> float:
    """Evaluate an arithmetic expression over numbers and the given names."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in variables:
            return float(variables[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and not node.keywords):
            return float(_FUNCS[node.func.id](*(ev(a) for a in node.args)))
        raise ConfigError(f"unsupported element in expression {text!r}")

    return ev(tree)


# --------------------------------------------------------------------------
# agents

AGENT_PARAMS = {
    "fql": {"tie": str},
    "hql": {"radius_mode": str, "side": str},
    "qlucb": {"bonus_scale": float},
    "aggql": {"agg_step": float, "bonus_scale": float},
}
AGENT_LABELS = {"fql": "FQL", "hql": "HQL", "qlucb": "QL-UCB", "aggql": "AggQL"}
_ITEM = re.compile(r"^\s*([A-Za-z_][\w-]*)\s*(?:\((.*)\))?\s*$")


@dataclass(frozen=True)
class AgentConfig:
    kind: str
    params: tuple = ()

    @property
    def label(self) -> str:
        return AGENT_LABELS[self.kind]

    def kwargs(self) -> dict:
        return dict(self.params)

    def render(self) -> str:
        if not self.params:
            return self.kind
        inner = ", ".join(f"{k}={_render_value(v)}" for k, v in self.params)
        return f"{self.kind}({inner})"


def _render_value(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _split_top_level(text: str) -> list[str]:
    items, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            items.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    items.append("".join(cur))
    return items


def parse_agents(text: str) -> tuple[AgentConfig, ...]:
    out = []
    for item in _split_top_level(text):
        m = _ITEM.match(item)
        if not m:
            raise ConfigError(f"cannot parse agent entry {item.strip()!r}")
        kind = m.group(1).lower()
        if kind not in AGENT_PARAMS:
            raise ConfigError(f"unknown agent {kind!r}; choose from {sorted(AGENT_PARAMS)}")
        params = {}
        if m.group(2) and m.group(2).strip():
            for pair in m.group(2).split(","):
                if "=" not in pair:
                    raise ConfigError(f"agent parameter {pair.strip()!r} is not name=value")
                name, value = (s.strip() for s in pair.split("=", 1))
                if name not in AGENT_PARAMS[kind]:
                    raise ConfigError(f"agent {kind} has no parameter {name!r}")
                if name in params:
                    raise ConfigError(f"agent {kind} repeats parameter {name!r}")
                try:
                    params[name] = AGENT_PARAMS[kind][name](value)
                except ValueError:
                    raise ConfigError(f"bad value {value!r} for {kind}.{name}") from None
        out.append(AgentConfig(kind, tuple(sorted(params.items()))))
    labels = [a.label for a in out]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"each agent kind may appear once, got {', '.join(labels)}")
    return tuple(out)


# --------------------------------------------------------------------------
# experiment configuration

DEFAULT_FEEDBACK = {
    "backlogged": "full",
    "lost-sales": "lower-one-sided",
    "auction": "higher-one-sided",
    "lower-bound": "full",
}


@dataclass(frozen=True)
class ExperimentConfig:
    env_kind: str
    H: int
    K: int
    grid_max: str
    grid_step: float
    agents: tuple
    feedback: str = ""
    n_bidders: int = 3
    o: float = 0.0
    b: float = 0.0
    p: float = 0.0
    c: float = 0.0
    salvage: float = 0.0
    demand_kind: str = "uniform"
    offset_rule: str = "0"
    width: float = 1.0
    low_rule: str = "0.1*h + 1"
    high_rule: str = "0.1*h + 2"
    p_low: str = "0.5 + 1/sqrt(K)"
    reps: int = 300
    base_seed: int = 0
    workers: int = 1
    x1: float = 0.0
    out_dir: str = "out"
    _spec: EnvSpec | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.grid_max, str):
            object.__setattr__(self, "grid_max", repr(float(self.grid_max)))
        if not self.feedback:
            object.__setattr__(self, "feedback", DEFAULT_FEEDBACK.get(self.env_kind, "full"))
        for name in ("H", "K", "reps", "workers"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.base_seed < 2**64:
            raise ValidationError(f"base_seed must be a 64-bit unsigned integer, got {self.base_seed}")
        if not self.agents:
            raise ValidationError("at least one agent is required")
        try:
            spec = self._build_spec()
            self._check_agents(spec)
            if self.x1 < 0 and self.env_kind == "lost-sales":
                raise ValueError("lost-sales inventory cannot start negative")
        except (ValueError, RuntimeError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(str(exc)) from exc
        object.__setattr__(self, "_spec", spec)

    @property
    def T(self) -> int:
        return self.H * self.K

    @property
    def spec(self) -> EnvSpec:
        return self._spec

    def _build_spec(self) -> EnvSpec:
        H, K = self.H, self.K
        costs = CostParams(self.o, self.b, self.p, self.c, self.salvage)
        if costs.has_purchase_cost():
            if self.env_kind == "auction":
                raise ValueError("purchase costs do not apply to auctions")
            costs = amortize_costs(costs, H, self.env_kind)
        if self.demand_kind == "uniform":
            offsets = [eval_expression(self.offset_rule, h=h, H=H, K=K) for h in range(1, H + 1)]
            demand = DemandModel.uniform(offsets, self.width)
        elif self.demand_kind == "two-point":
            low = [eval_expression(self.low_rule, h=h, H=H, K=K) for h in range(1, H + 1)]
            high = [eval_expression(self.high_rule, h=h, H=H, K=K) for h in range(1, H + 1)]
            demand = DemandModel.two_point(low, high, eval_expression(self.p_low, H=H, K=K))
        else:
            raise ValueError(f"demand kind must be 'uniform' or 'two-point', got {self.demand_kind!r}")
        grid = ActionGrid(eval_expression(self.grid_max, H=H, K=K), self.grid_step)
        return EnvSpec(self.env_kind, H, grid, demand, costs, self.feedback, self.n_bidders)

    def _check_agents(self, spec: EnvSpec) -> None:
        from .agents import make_agent

        for agent in self.agents:
            make_agent(agent.kind, spec, self.K, **agent.kwargs())

    def with_overrides(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes) if changes else self

    def digest(self) -> str:
        """Hash of every setting that can change the results (not workers or output paths)."""
        neutral = replace(self, workers=1, out_dir="out")
        return hashlib.sha256(emit_config(neutral).encode()).hexdigest()[:16]


# key -> (field, type, required)
KEYS = {
    "env.kind": ("env_kind", str, True),
    "env.H": ("H", int, True),
    "env.K": ("K", int, True),
    "env.feedback": ("feedback", str, False),
    "env.n_bidders": ("n_bidders", int, False),
    "env.costs.o": ("o", float, False),
    "env.costs.b": ("b", float, False),
    "env.costs.p": ("p", float, False),
    "env.costs.c": ("c", float, False),
    "env.costs.salvage": ("salvage", float, False),
    "env.demand.kind": ("demand_kind", str, False),
    "env.demand.offset_rule": ("offset_rule", str, False),
    "env.demand.width": ("width", float, False),
    "env.demand.low_rule": ("low_rule", str, False),
    "env.demand.high_rule": ("high_rule", str, False),
    "env.demand.p_low": ("p_low", str, False),
    "grid.max": ("grid_max", str, True),
    "grid.step": ("grid_step", float, True),
    "agents": ("agents", parse_agents, True),
    "run.reps": ("reps", int, False),
    "run.base_seed": ("base_seed", int, False),
    "run.parallel_workers": ("workers", int, False),
    "run.x1": ("x1", float, False),
    "out.dir": ("out_dir", str, False),
}


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict[str, object] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        name, conv, _ = KEYS[key]
        try:
            values[name] = conv(value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: {key} expects {conv.__name__}, got {value!r}") from None
    missing = [k for k, (_, _, req) in KEYS.items() if req and k not in seen]
    if missing:
        raise ConfigError(f"{source}: missing required keys: {', '.join(missing)}")
    return ExperimentConfig(**values)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), source=str(path))


def emit_config(config: ExperimentConfig) -> str:
    by_field = {f.name: f for f in fields(config)}
    lines = []
    for key, (name, _, _) in KEYS.items():
        value = getattr(config, name)
        if name == "agents":
            text = ", ".join(a.render() for a in value)
        elif by_field[name].type in ("float", float):
            text = repr(float(value))
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"

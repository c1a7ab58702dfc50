"""Closed-loop evaluation: scripted agent, infraction ledger, RC/IS/DS scoring.

The agent knows the route map (where stop lines and sign posts are) but not
light phases or sign types; those reach it only through notice messages.
"""
from __future__ import annotations

import bisect
import math
import random
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .messages import DEFAULT_TEMPLATES, MessageTemplates, NoticeMessage
from .pipeline import PipelineConfig, TLSAssist
from .sim import (
    TRACKS,
    Camera,
    EgoTrace,
    NoiseModel,
    Scenario,
    ScenarioParams,
    corrupt,
    derive_seed,
    generate_scenario,
    ground_truth_frame,
    tick_rng,
)
from .types import SPEED_LIMIT_KMH, LightClass, LightState, SignClass

INFRACTIONS = ("red_light", "stop_sign", "speeding", "route_deviation", "timeout")
PENALIZED = ("red_light", "stop_sign", "speeding")
DEFAULT_PENALTIES = {"red_light": 0.7, "stop_sign": 0.8, "speeding": 0.8}

_UNUSED_RNG = random.Random(0)


@dataclass(frozen=True)
class AgentPolicy:
    cruise_speed: float = 10.0  # m/s
    accel: float = 2.0
    comfort_decel: float = 3.0
    max_decel: float = 6.0
    reaction_latency: int = 1  # ticks between notice and action
    red_stop_margin: float = 2.0  # stop line distance before the crossing
    sign_stop_margin: float = 1.0
    stop_hold: float = 0.5  # s halted at a stop sign
    halt_speed: float = 0.05
    initial_speed: float = 0.0

    def __post_init__(self) -> None:
        if self.cruise_speed <= 0 or self.accel <= 0 or self.comfort_decel <= 0:
            raise ValueError("cruise_speed, accel and comfort_decel must be positive")
        if self.max_decel < self.comfort_decel:
            raise ValueError("max_decel must be >= comfort_decel")
        if self.reaction_latency < 0:
            raise ValueError("reaction_latency must be >= 0")


class ScriptedAgent:
    """Message-following driver.

    Red: stop at the next stop line if physically possible. Yellow: stop only
    if it can be done at comfortable deceleration. Stop sign: halt at the next
    sign post for ``stop_hold`` seconds. Speed limits are lowered on sight and
    raised only once the sign is passed. With no notice it drives at cruise.
    """

    def __init__(self, policy: AgentPolicy, scenario: Scenario, templates: MessageTemplates = DEFAULT_TEMPLATES):
        self.p = policy
        self.templates = templates
        self.crossings = [e.position for e in scenario.intersections]
        self.sign_posts = [e.position for e in scenario.signs]
        self.limit: float | None = None
        self.pending_raise: tuple[float, float] | None = None
        self.pending_stops: set[float] = set()
        self.served: set[float] = set()
        self.hold = 0.0
        self.committed: float | None = None
        self._queue: deque[NoticeMessage | None] = deque(maxlen=policy.reaction_latency + 1)

    def _next(self, positions: list[float], pos: float) -> float | None:
        i = bisect.bisect_right(positions, pos)
        return positions[i] if i < len(positions) else None

    def act(self, notice: NoticeMessage | None, pos: float, v: float, dt: float) -> float:
        p = self.p
        self._queue.append(notice)
        seen = self._queue[0] if len(self._queue) == self._queue.maxlen else None
        if seen is not None:
            light, sign = self.templates.interpret(seen.light_part, seen.sign_part)
        else:
            light, sign = LightState.NO_DETECTION, SignClass.OFF

        post = self._next(self.sign_posts, pos)
        if post is not None and post not in self.served:
            if sign is SignClass.STOP:
                if post in self.pending_stops or v * v <= 2 * p.max_decel * (post - p.sign_stop_margin - pos):
                    self.pending_stops.add(post)
            elif sign in SPEED_LIMIT_KMH:
                lim = SPEED_LIMIT_KMH[sign] / 3.6
                if self.limit is None or lim <= self.limit:
                    self.limit = lim
                    self.pending_raise = None
                else:
                    self.pending_raise = (post, lim)
        if self.pending_raise is not None and pos >= self.pending_raise[0]:
            self.limit = self.pending_raise[1]
            self.pending_raise = None

        target = p.cruise_speed if self.limit is None else min(p.cruise_speed, self.limit)
        cap = math.inf

        def feasible(d: float, decel: float) -> bool:
            # second clause: the line is reachable in one tick without exceeding decel
            return d >= 0 and (v * v <= 2 * decel * d + 1e-9 or v - decel * dt <= d / dt)

        def stop_at(d: float) -> None:
            nonlocal target, cap
            d = max(d, 0.0)
            target = min(target, math.sqrt(2 * p.comfort_decel * d))
            cap = min(cap, d / dt)

        crossing = self._next(self.crossings, pos)
        if self.committed is not None and self.committed != crossing:
            self.committed = None
        if crossing is not None:
            d = crossing - p.red_stop_margin - pos
            if light is LightState.RED or light is LightState.YELLOW:
                decel = p.max_decel if light is LightState.RED else p.comfort_decel
                if self.committed == crossing or feasible(d, decel):
                    # once braking for a light the decision holds until it changes
                    self.committed = crossing
                    stop_at(d)
            else:
                self.committed = None

        for s in sorted(self.pending_stops):
            line = s - p.sign_stop_margin
            if pos > s:
                self.pending_stops.discard(s)
                continue
            if v <= p.halt_speed and line - pos <= 1e-6:
                self.hold += dt
                if self.hold >= p.stop_hold - 1e-9:
                    self.pending_stops.discard(s)
                    self.served.add(s)
                    self.hold = 0.0
                    continue
            stop_at(line - pos)
            break

        a = (target - v) / dt
        a = max(-p.max_decel, min(p.accel, a))
        v_new = max(0.0, v + a * dt)
        return min(v_new, cap)


@dataclass
class InfractionLedger:
    red_light: int = 0
    stop_sign: int = 0
    speeding: int = 0
    route_deviation: int = 0
    timeout: int = 0

    def as_dict(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in INFRACTIONS}


def infraction_score(ledger: InfractionLedger, penalties: Mapping[str, float] = DEFAULT_PENALTIES) -> float:
    is_ = 1.0
    for kind in PENALIZED:
        n = getattr(ledger, kind)
        if n and kind in penalties:
            is_ *= penalties[kind] ** n
    return is_


def score(
    ledger: InfractionLedger, rc: float, penalties: Mapping[str, float] = DEFAULT_PENALTIES
) -> tuple[float, float, float]:
    """Return (RC, IS, DS) with RC and DS in percent and IS in (0, 1]."""
    is_ = infraction_score(ledger, penalties)
    return rc, is_, rc * is_


@dataclass
class RouteReport:
    rc: float
    is_: float
    ds: float
    ledger: InfractionLedger
    termination: str  # completed | timeout | route_deviation
    track: str = ""
    route: int = 0
    repetition: int = 0
    route_length: float = 0.0
    ticks: int = 0
    trace: EgoTrace | None = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "track": self.track,
            "route": self.route,
            "repetition": self.repetition,
            "route_length": self.route_length,
            "ticks": self.ticks,
            "rc": self.rc,
            "is": self.is_,
            "ds": self.ds,
            "termination": self.termination,
            "infractions": self.ledger.as_dict(),
        }


@dataclass(frozen=True)
class HarnessConfig:
    dt: float = 0.1
    speed_tolerance: float = 0.10  # fraction over the limit
    speed_grace: float = 1.0  # s over the limit before it counts
    stop_zone: float = 10.0  # m before a stop sign where a halt counts
    timeout_speed: float = 2.0  # m/s; budget = length / timeout_speed + slack
    timeout_slack: float = 30.0
    count_speeding: bool = True
    penalties: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_PENALTIES))

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.timeout_speed <= 0:
            raise ValueError("dt and timeout_speed must be positive")
        if self.speed_tolerance < 0 or self.speed_grace < 0 or self.stop_zone < 0 or self.timeout_slack < 0:
            raise ValueError("tolerances, grace, stop zone and slack must be >= 0")
        for k, c in self.penalties.items():
            if k not in PENALIZED:
                raise ValueError(f"unknown penalty {k!r}")
            if not 0.0 < c <= 1.0:
                raise ValueError(f"penalty {k}={c} outside (0, 1]")

    def tick_budget(self, route_length: float) -> int:
        return math.ceil((route_length / self.timeout_speed + self.timeout_slack) / self.dt)


def _limit_at(limits: list[tuple[float, float]], pos: float) -> float | None:
    lim = None
    for p, v in limits:
        if p > pos:
            break
        lim = v
    return lim


def run_route(
    s: Scenario,
    nm: NoiseModel,
    cfg: PipelineConfig | None,
    policy: AgentPolicy | None = None,
    noise_seed: int = 0,
    harness: HarnessConfig | None = None,
    camera: Camera | None = None,
    max_ticks: int | None = None,
    keep_trace: bool = False,
) -> RouteReport:
    """Drive one route closed-loop. ``cfg=None`` runs the agent without notices."""
    policy = policy or AgentPolicy()
    h = harness or HarnessConfig()
    cam = camera or Camera()
    dt = h.dt
    templates = cfg.templates if cfg is not None else DEFAULT_TEMPLATES
    assist = TLSAssist(cfg) if cfg is not None else None
    agent = ScriptedAgent(policy, s, templates)
    ledger = InfractionLedger()
    trace = EgoTrace(dt) if keep_trace else None

    crossings = [(e.position, e.schedule) for e in s.intersections]
    stop_posts = [e.position for e in s.signs if e.sign is SignClass.STOP]
    limits = [(e.position, SPEED_LIMIT_KMH[e.sign] / 3.6) for e in s.signs if e.sign in SPEED_LIMIT_KMH]
    halted: set[float] = set()
    over_time = 0.0
    over_counted = False

    draw = not nm.is_identity
    tick_gen = random.Random()
    budget = h.tick_budget(s.route_length) if max_ticks is None else max_ticks
    pos, v = 0.0, policy.initial_speed
    termination = "timeout"
    tick = 0
    for tick in range(budget):
        t = tick * dt
        notice = None
        if assist is not None:
            gt = ground_truth_frame(s, pos, t, cam, tick)
            rng = tick_rng(noise_seed, tick, tick_gen) if draw and gt.detections else _UNUSED_RNG
            _, notice = assist.step(corrupt(gt, nm, rng, cam))
        v_new = agent.act(notice, pos, v, dt)
        new_pos = pos + v_new * dt
        t_next = (tick + 1) * dt

        if s.lateral_fault_at is not None and pos < s.lateral_fault_at <= new_pos:
            pos, v = s.lateral_fault_at, v_new
            ledger.route_deviation += 1
            termination = "route_deviation"
            if trace is not None:
                trace.append(pos, v)
            break

        for c, sched in crossings:
            if pos < c <= new_pos and sched.state_at(t_next) is LightClass.RED:
                ledger.red_light += 1
        for sp in stop_posts:
            if pos < sp <= new_pos and sp not in halted:
                ledger.stop_sign += 1
        if v_new <= policy.halt_speed:
            for sp in stop_posts:
                if sp - h.stop_zone <= new_pos <= sp:
                    halted.add(sp)

        lim = _limit_at(limits, new_pos)
        if h.count_speeding and lim is not None and v_new > lim * (1 + h.speed_tolerance):
            over_time += dt
            if over_time > h.speed_grace + 1e-9 and not over_counted:
                ledger.speeding += 1
                over_counted = True
        else:
            over_time, over_counted = 0.0, False

        pos, v = new_pos, v_new
        if trace is not None:
            trace.append(min(pos, s.route_length), v)
        if pos >= s.route_length:
            termination = "completed"
            break
    else:
        ledger.timeout += 1

    rc = 100.0 * min(pos, s.route_length) / s.route_length
    rc, is_, ds = score(ledger, rc, h.penalties)
    return RouteReport(rc, is_, ds, ledger, termination, s.track, route_length=s.route_length, ticks=tick + 1, trace=trace)


# --- benchmark ------------------------------------------------------------

METRICS = ("ds", "rc", "is", *INFRACTIONS)


def _mean(values: Sequence[float]) -> float:
    # fsum is correctly rounded, hence independent of summation order
    return math.fsum(values) / len(values) if values else 0.0


@dataclass
class ConfigRow:
    name: str
    per_track: dict[str, dict[str, float]]
    overall: dict[str, float]
    routes: list[RouteReport] = field(default_factory=list, repr=False)


@dataclass
class BenchmarkReport:
    rows: list[ConfigRow]
    tracks: tuple[str, ...]
    repetitions: int
    routes_per_track: int
    master_seed: int

    def row(self, name: str) -> ConfigRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def as_dict(self, include_routes: bool = True) -> dict:
        out = {
            "master_seed": self.master_seed,
            "tracks": list(self.tracks),
            "routes_per_track": self.routes_per_track,
            "repetitions": self.repetitions,
            "rows": [],
        }
        for r in self.rows:
            row = {"name": r.name, "per_track": r.per_track, "overall": r.overall}
            if include_routes:
                row["routes"] = [x.as_dict() for x in r.routes]
            out["rows"].append(row)
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> BenchmarkReport:
        rows = [ConfigRow(r["name"], r["per_track"], r["overall"]) for r in d["rows"]]
        return cls(rows, tuple(d["tracks"]), d["repetitions"], d["routes_per_track"], d["master_seed"])


def summarize(routes: Sequence[RouteReport]) -> dict[str, float]:
    out = {
        "ds": _mean([r.ds for r in routes]),
        "rc": _mean([r.rc for r in routes]),
        "is": _mean([r.is_ for r in routes]),
    }
    for k in INFRACTIONS:
        out[k] = _mean([getattr(r.ledger, k) for r in routes])
    out["routes"] = len(routes)
    return out


@dataclass(frozen=True)
class _Task:
    config_name: str
    cfg: PipelineConfig | None
    track: str
    route: int
    repetition: int
    scenario_seed: int
    noise_seed: int


@dataclass(frozen=True)
class BenchSettings:
    noise: NoiseModel = field(default_factory=NoiseModel)
    policy: AgentPolicy = field(default_factory=AgentPolicy)
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    camera: Camera = field(default_factory=Camera)


def _run_task(task: _Task, settings: BenchSettings) -> RouteReport:
    s = generate_scenario(task.track, task.scenario_seed, settings.scenario)
    rep = run_route(s, settings.noise, task.cfg, settings.policy, task.noise_seed, settings.harness, settings.camera)
    rep.route, rep.repetition = task.route, task.repetition
    return rep


def route_seeds(master_seed: int, track: str, route: int, repetition: int) -> tuple[int, int]:
    """Scenario seed (shared by repetitions) and noise seed (per repetition).

    Both are independent of the configuration, so every configuration sees
    the same routes and the same detector noise draws.
    """
    scen = derive_seed(master_seed, "route", track, route) % (2**31)
    noise = derive_seed(master_seed, "noise", track, route, repetition) % (2**31)
    return scen, noise


def run_benchmark(
    tracks: Sequence[str],
    configs: Mapping[str, PipelineConfig | None],
    routes_per_track: int,
    repetitions: int = 3,
    master_seed: int = 0,
    settings: BenchSettings | None = None,
    jobs: int = 1,
) -> BenchmarkReport:
    settings = settings or BenchSettings()
    for t in tracks:
        if t not in TRACKS:
            raise ValueError(f"unknown track {t!r}")
    tasks = []
    for name, cfg in configs.items():
        for track in tracks:
            for i in range(routes_per_track):
                for rep in range(repetitions):
                    scen, noise = route_seeds(master_seed, track, i, rep)
                    tasks.append(_Task(name, cfg, track, i, rep, scen, noise))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks, [settings] * len(tasks), chunksize=4))
    else:
        results = [_run_task(t, settings) for t in tasks]

    rows = []
    for name in configs:
        mine = [(t, r) for t, r in zip(tasks, results) if t.config_name == name]
        per_track = {tr: summarize([r for t, r in mine if t.track == tr]) for tr in tracks}
        rows.append(ConfigRow(name, per_track, summarize([r for _, r in mine]), [r for _, r in mine]))
    return BenchmarkReport(rows, tuple(tracks), repetitions, routes_per_track, master_seed)


# --- comparison & rendering ----------------------------------------------


class ShapeMismatchError(ValueError):
    pass


def percent_change(a: float, b: float) -> float | None:
    if a == 0:
        return None
    return (b - a) / a * 100.0


def format_delta(a: float, b: float, digits: int = 2) -> str:
    """Table-style cell: new value with the relative change, e.g. ``5.11 (-13%)``."""
    pct = percent_change(a, b)
    if pct is None:
        return f"{b:.{digits}f} ({b - a:+.{digits}f})"
    return f"{b:.{digits}f} ({pct:+.0f}%)"


@dataclass
class DeltaEntry:
    row: str
    scope: str  # track name or "overall"
    metric: str
    a: float
    b: float

    @property
    def delta(self) -> float:
        return self.b - self.a

    @property
    def percent(self) -> float | None:
        return percent_change(self.a, self.b)

    def as_dict(self) -> dict:
        return {
            "row": self.row,
            "scope": self.scope,
            "metric": self.metric,
            "a": self.a,
            "b": self.b,
            "delta": self.delta,
            "percent": self.percent,
        }


def compare(a: BenchmarkReport, b: BenchmarkReport) -> list[DeltaEntry]:
    names_a = [r.name for r in a.rows]
    names_b = [r.name for r in b.rows]
    if names_a != names_b or a.tracks != b.tracks:
        raise ShapeMismatchError(f"report shapes differ: {names_a}/{a.tracks} vs {names_b}/{b.tracks}")
    out = []
    for ra, rb in zip(a.rows, b.rows):
        for scope in (*a.tracks, "overall"):
            sa = ra.overall if scope == "overall" else ra.per_track[scope]
            sb = rb.overall if scope == "overall" else rb.per_track[scope]
            for m in METRICS:
                out.append(DeltaEntry(ra.name, scope, m, sa[m], sb[m]))
    return out


def render_delta_table(entries: Sequence[DeltaEntry], metrics: Sequence[str] = METRICS) -> str:
    lines = [f"{'Row':<16}{'Scope':<10}" + "".join(f"{m:>18}" for m in metrics)]
    keyed: dict[tuple[str, str], dict[str, DeltaEntry]] = {}
    for e in entries:
        keyed.setdefault((e.row, e.scope), {})[e.metric] = e
    for (row, scope), cells in keyed.items():
        lines.append(
            f"{row:<16}{scope:<10}"
            + "".join(f"{format_delta(cells[m].a, cells[m].b):>18}" for m in metrics if m in cells)
        )
    return "\n".join(lines) + "\n"


def render_score_table(report: BenchmarkReport, title: str) -> str:
    """DS/RC/IS per track plus overall, one line per configuration."""
    scopes = [*report.tracks, "overall"]
    head1 = f"{'':<20}" + "".join(f"{s.capitalize():^24}" for s in scopes)
    head2 = f"{'Config':<20}" + "".join(f"{'DS':>8}{'RC':>8}{'IS':>8}" for _ in scopes)
    lines = [title, head1, head2]
    for r in report.rows:
        cells = ""
        for s in scopes:
            m = r.overall if s == "overall" else r.per_track[s]
            cells += f"{m['ds']:>8.2f}{m['rc']:>8.2f}{m['is']:>8.2f}"
        lines.append(f"{r.name:<20}{cells}")
    return "\n".join(lines) + "\n"


_IV_COLUMNS = (
    ("red_light", "Red Light"),
    ("stop_sign", "Stop Sign"),
    ("route_deviation", "Route Dev."),
    ("timeout", "Timeouts"),
    ("speeding", "Speeding"),
)


def render_infraction_table(report: BenchmarkReport, title: str) -> str:
    """Mean infractions per route, later rows annotated relative to the first row."""
    lines = [title, f"{'Method':<20}" + "".join(f"{label:>16}" for _, label in _IV_COLUMNS)]
    base = report.rows[0].overall if report.rows else {}
    for i, r in enumerate(report.rows):
        cells = ""
        for key, _ in _IV_COLUMNS:
            val = r.overall[key]
            cells += f"{val:>16.2f}" if i == 0 else f"{format_delta(base[key], val):>16}"
        lines.append(f"{r.name:<20}{cells}")
    return "\n".join(lines) + "\n"

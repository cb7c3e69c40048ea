"""Episode orchestration.

An agent backend proposes one tool call at a time from the query, the tool
manifest and the call history. The runner validates each call against the
manifest, dispatches it to the tool layer, logs the result as a JSON line
and judges the world at the end.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Protocol, Sequence, Union

import jsonschema
import numpy as np

from .affordance import RemoteAffordanceBackend, SimAffordanceBackend
from .errors import BackendError, InvalidParameter, InvariantViolation, ProtocolError
from .remote import JsonHttpClient, RemoteConfig
from .semantics import (MockEmbeddingProvider, MockRelevanceClassifier, RemoteEmbeddingProvider,
                        RemoteRelevanceClassifier)
from .sim import NoiseConfig, SceneSpec, SimWorld, TaskSpec, check_references, generate_scene, judge
from .skills import MockGraspProposer, SimMotionChecker
from .tools import RETRY_LIMIT, Backends, ToolLayer, ToolConfig, ToolOutput, manifest

DEFAULT_BUDGET = 40
BACKEND_URL_ENV = "ASP_BACKEND_URL"


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"tool": self.tool, "args": dict(self.args)}


@dataclass(frozen=True)
class Finish:
    answer: str = ""


Step = Union[ToolCall, Finish]


class AgentBackend(Protocol):
    def next_step(self, query: str, manifest: list[dict], history: list[dict]) -> Step: ...


# scripted policies ------------------------------------------------------

@dataclass(frozen=True)
class Ref:
    """Placeholder for a key grounded earlier in the episode.

    ``name`` is either a retrieval query (keys from its latest result) or the
    name given to a :class:`Select` step.
    """

    name: str
    index: int = 0


@dataclass(frozen=True)
class Select:
    """Query a spatial tool for every key under ``among`` and keep the extreme.

    ``tool`` is ``size_of``, ``distance_to`` or ``distance_between`` (the
    latter against ``other``); ``mode`` is ``max`` or ``min``.
    """

    name: str
    among: str
    tool: str
    mode: str = "max"
    other: Ref | None = None

    def __post_init__(self):
        if self.mode not in ("max", "min"):
            raise InvalidParameter(f"mode must be 'max' or 'min', got {self.mode!r}")
        if self.tool not in ("size_of", "distance_to", "distance_between"):
            raise InvalidParameter(f"cannot select by {self.tool!r}")
        if self.tool == "distance_between" and self.other is None:
            raise InvalidParameter("distance_between selection needs 'other'")


PlanStep = Union[ToolCall, Select]
RULES = ("reground", "retry")


class ScriptedPolicy:
    """Replays a fixed plan, reacting to failures through optional rules.

    ``retry`` re-issues a failed step up to ``max_attempts`` times (stopping
    early on a retry-limit refusal). ``reground`` replays every grounding
    step seen so far (retrievals and selections) after a failure that
    invalidated the map, so refs point at fresh keys before the retry.
    Without rules a failure ends the episode when ``stop_on_failure`` is set
    and is ignored otherwise.
    """

    def __init__(self, plan: Sequence[PlanStep], rules: Iterable[str] = RULES,
                 max_attempts: int = 3, stop_on_failure: bool = True):
        if not plan:
            raise InvalidParameter("plan must not be empty")
        self.plan = list(plan)
        self.rules = frozenset(rules)
        unknown = self.rules - set(RULES)
        if unknown:
            raise InvalidParameter(f"unknown rules: {sorted(unknown)}")
        self.max_attempts = max_attempts
        self.stop_on_failure = stop_on_failure
        self.refs: dict[str, list[str]] = {}
        self.pc = 0
        self.attempts: Counter = Counter()
        self._queue: deque[int] = deque()
        self._pending: tuple | None = None
        self._select: dict | None = None
        self._finish: Finish | None = None
        self.answer = "plan complete"

    @classmethod
    def from_calls(cls, calls: Sequence[ToolCall], answer: str = "plan complete"
                   ) -> "ScriptedPolicy":
        """Plain replay: every call issued once, failures ignored."""
        policy = cls(list(calls), rules=(), stop_on_failure=False)
        policy.answer = answer
        return policy

    @classmethod
    def from_log(cls, log: "EpisodeLog") -> "ScriptedPolicy":
        return cls.from_calls([ToolCall(r["tool"], r["args"]) for r in log.calls],
                              log.summary.get("answer", ""))

    # stepping -------------------------------------------------------------

    def next_step(self, query: str, manifest: list[dict], history: list[dict]) -> Step:
        if self._pending is not None:
            last = history[-1] if history else {"success": False, "feedback": "no result"}
            pending, self._pending = self._pending, None
            self._observe(pending, last)
        while self._finish is None:
            if self._select is not None:
                call = self._select_call()
                if call is not None:
                    return call
                continue
            if self._queue:
                idx, tag = self._queue.popleft(), "ground"
            elif self.pc < len(self.plan):
                idx, tag = self.pc, "step"
            else:
                return Finish(self.answer)
            step = self.plan[idx]
            if isinstance(step, Select):
                self._start_select(step, idx, tag)
                continue
            call = self._resolve(step)
            if call is None:
                break
            self._pending = (tag, idx, call)
            return call
        return self._finish

    def _resolve(self, step: ToolCall) -> ToolCall | None:
        args = {}
        for k, v in step.args.items():
            if isinstance(v, Ref):
                keys = self.refs.get(v.name, [])
                if not -len(keys) <= v.index < len(keys):
                    self._finish = Finish(f"nothing grounded for {v.name!r}")
                    return None
                v = keys[v.index]
            args[k] = v
        return ToolCall(step.tool, args)

    def _observe(self, pending: tuple, result: dict) -> None:
        kind = pending[0]
        if kind == "select":
            sel = self._select
            if result.get("success"):
                sel["values"].append((result["output"], pending[1]))
            return
        _, idx, call = pending
        ok = bool(result.get("success"))
        if call.tool == "object_retrieval" and ok:
            self.refs[call.args["query"]] = list(result.get("extra", {}).get("keys", []))
        if kind == "ground":
            return
        if ok:
            self.pc += 1
            return
        feedback = result.get("feedback", "")
        if "retry" not in self.rules:
            if self.stop_on_failure:
                self._finish = Finish(f"gave up after failure: {feedback}")
            else:
                self.pc += 1
            return
        self.attempts[idx] += 1
        if self.attempts[idx] >= self.max_attempts or RETRY_LIMIT in feedback:
            self._finish = Finish(f"gave up after {self.attempts[idx]} attempts: {feedback}")
            return
        if "reground" in self.rules and result.get("extra", {}).get("remapped"):
            self._queue.extend(i for i in range(idx) if self._grounds(self.plan[i]))

    @staticmethod
    def _grounds(step: PlanStep) -> bool:
        return isinstance(step, Select) or step.tool == "object_retrieval"

    def _start_select(self, step: Select, idx: int, tag: str) -> None:
        other = None
        if step.other is not None:
            keys = self.refs.get(step.other.name, [])
            if not -len(keys) <= step.other.index < len(keys):
                self._finish = Finish(f"nothing grounded for {step.other.name!r}")
                return
            other = keys[step.other.index]
        self._select = {"step": step, "idx": idx, "tag": tag, "other": other,
                        "todo": list(self.refs.get(step.among, [])), "values": []}
        if len(self._select["todo"]) == 1:
            self._select["values"].append((0.0, self._select["todo"].pop()))

    def _select_call(self) -> ToolCall | None:
        sel = self._select
        step: Select = sel["step"]
        if sel["todo"]:
            key = sel["todo"].pop(0)
            args = {"a": key}
            if step.tool == "distance_between":
                args["b"] = sel["other"]
            call = ToolCall(step.tool, args)
            self._pending = ("select", key)
            return call
        self._select = None
        vals = sel["values"]
        if not vals:
            self.refs[step.name] = []
        else:
            pick = max if step.mode == "max" else min
            # first key wins ties
            best = pick(range(len(vals)), key=lambda i: (vals[i][0], -i if step.mode == "max"
                                                         else i))
            self.refs[step.name] = [vals[best][1]]
        if sel["tag"] == "step":
            self.pc += 1
        return None


def _retrieve(query: str) -> ToolCall:
    return ToolCall("object_retrieval", {"query": query})


def _interact(ref: Ref, action: str) -> ToolCall:
    return ToolCall("interact", {"obj": ref, "action": action})


def _go_to(ref: Ref, action: str) -> ToolCall:
    return ToolCall("go_to", {"obj": ref, "action": action})


def default_plan(task: TaskSpec, mode: str) -> list[PlanStep]:
    """Hand-written plan for each shipped task family."""
    h = task.hints
    fam = task.family
    mobile = mode == "mobile"

    def reach_and(ref: Ref, action: str) -> list[PlanStep]:
        return ([_go_to(ref, action)] if mobile else []) + [_interact(ref, action)]

    if fam in ("pick", "press", "remove", "open", "handle_pick", "mobile_open"):
        q = h["query"]
        return [_retrieve(q), *reach_and(Ref(q), h["action"])]
    if fam == "pick_larger":
        q = h["query"]
        mode_ = "max" if h.get("relation", "larger") == "larger" else "min"
        return [_retrieve(q), Select("chosen", q, "size_of", mode_),
                *reach_and(Ref("chosen"), h["action"])]
    if fam == "pick_place":
        return [_retrieve(h["item_query"]), *reach_and(Ref(h["item_query"]), h["pick_action"]),
                _retrieve(h["container_query"]),
                *reach_and(Ref(h["container_query"]), h["place_action"])]
    if fam == "double_pick":
        plan: list[PlanStep] = []
        for item in h["items"]:
            plan += [_retrieve(item), *reach_and(Ref(item), h["pick_action"]),
                     _retrieve(h["container_query"]),
                     *reach_and(Ref(h["container_query"]), h["drop_action"])]
        return plan
    if fam == "spatial_near":
        return [_retrieve(h["target_query"]), _retrieve(h["anchor_query"]),
                Select("chosen", h["target_query"], "distance_between", "min",
                       Ref(h["anchor_query"])),
                *reach_and(Ref("chosen"), h["pick_action"]),
                _retrieve(h["container_query"]),
                *reach_and(Ref(h["container_query"]), h["drop_action"])]
    raise InvalidParameter(f"no default plan for task family {fam!r}")


# external backend -------------------------------------------------------

class ExternalBackend:
    """Asks an HTTP service for the next step.

    Request: ``{"query", "manifest", "history"}``. Reply: ``{"tool", "args"}``
    for a call or ``{"finish": answer}`` to stop.
    """

    def __init__(self, config: RemoteConfig):
        self.client = JsonHttpClient(config)

    @classmethod
    def from_env(cls, timeout: float = 30.0) -> "ExternalBackend":
        url = os.environ.get(BACKEND_URL_ENV)
        if not url:
            raise InvalidParameter(f"set {BACKEND_URL_ENV} to the agent endpoint")
        return cls(RemoteConfig(url, timeout=timeout))

    def next_step(self, query: str, manifest: list[dict], history: list[dict]) -> Step:
        try:
            reply = self.client.post({"query": query, "manifest": manifest, "history": history})
        except BackendError as err:
            raise ProtocolError(str(err)) from err
        if "finish" in reply:
            return Finish(str(reply["finish"]))
        if "tool" not in reply:
            raise ProtocolError("reply has neither 'tool' nor 'finish'")
        if not isinstance(reply["tool"], str):
            raise ProtocolError("'tool' must be a string")
        args = reply.get("args", {})
        if not isinstance(args, dict):
            raise ProtocolError("'args' must be an object")
        return ToolCall(reply["tool"], args)


def validate_call(call: Any, tools: list[dict]) -> None:
    """Raise ProtocolError unless ``call`` names a manifest tool with valid arguments."""
    if isinstance(call, Finish):
        return
    if not isinstance(call, ToolCall):
        raise ProtocolError(f"expected a tool call or finish, got {type(call).__name__}")
    spec = next((t for t in tools if t["name"] == call.tool), None)
    if spec is None:
        names = ", ".join(t["name"] for t in tools)
        raise ProtocolError(f"unknown tool {call.tool!r}; available tools: {names}")
    try:
        jsonschema.validate(call.args, spec["parameters"])
    except jsonschema.ValidationError as err:
        raise ProtocolError(f"invalid arguments for {call.tool}: {err.message}") from err


# episodes ---------------------------------------------------------------

def jsonable(value):
    """Recursively convert numpy containers and scalars to plain JSON types."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    return value


def _dumps(record: dict) -> str:
    return json.dumps(jsonable(record), sort_keys=True, separators=(",", ":"))


@dataclass
class EpisodeConfig:
    no_aff: bool = False
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int | None = None
    budget: int = DEFAULT_BUDGET
    embed_url: str | None = None
    classify_url: str | None = None
    affordance_url: str | None = None

    def __post_init__(self):
        if self.budget < 1:
            raise InvalidParameter("budget must be at least 1")


def make_backends(cfg: EpisodeConfig, seed: int) -> Backends:
    embedder = (RemoteEmbeddingProvider(RemoteConfig(cfg.embed_url)) if cfg.embed_url
                else MockEmbeddingProvider())
    classifier = (RemoteRelevanceClassifier(RemoteConfig(cfg.classify_url)) if cfg.classify_url
                  else MockRelevanceClassifier())
    if cfg.affordance_url:
        aff = RemoteAffordanceBackend(RemoteConfig(cfg.affordance_url))
    else:
        aff = SimAffordanceBackend(cfg.noise.aff_jitter, cfg.noise.wrong_part_prob, seed)
    return Backends(embedder, classifier, aff, MockGraspProposer(), SimMotionChecker())


@dataclass
class EpisodeLog:
    records: list[dict] = field(default_factory=list)

    @property
    def header(self) -> dict:
        return self.records[0]

    @property
    def calls(self) -> list[dict]:
        return [r for r in self.records if r["type"] == "call"]

    @property
    def summary(self) -> dict:
        return self.records[-1]

    @property
    def score(self) -> float:
        return self.summary["score"]

    def to_jsonl(self) -> str:
        return "".join(_dumps(r) + "\n" for r in self.records)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])

    @classmethod
    def read(cls, path) -> "EpisodeLog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read())


def scene_digest(spec: SceneSpec) -> str:
    return hashlib.sha256(spec.dumps().encode("utf-8")).hexdigest()


def _history_entry(call: ToolCall, out: ToolOutput) -> dict:
    return jsonable({"tool": call.tool, "args": call.args, "success": out.success,
                     "feedback": out.feedback_msg, "output": out.output_json(),
                     "extra": out.extra})


def run_episode(spec: SceneSpec, backend: AgentBackend, cfg: EpisodeConfig | None = None,
                query: str | None = None, layer: ToolLayer | None = None) -> EpisodeLog:
    """Run one tool-calling episode to completion and return its log."""
    cfg = cfg or EpisodeConfig()
    seed = spec.seed if cfg.seed is None else cfg.seed
    query = query or spec.task.query
    if layer is None:
        world = SimWorld(spec, cfg.noise, seed)
        check_references(world, spec.task)
        layer = ToolLayer(world, make_backends(cfg, seed),
                          ToolConfig(mode=spec.mode, no_aff=cfg.no_aff))
    world = layer.world
    tools = manifest(spec.mode)
    log = EpisodeLog([{
        "type": "episode", "template": spec.template, "scene_seed": spec.seed, "seed": seed,
        "scene_sha256": scene_digest(spec), "mode": spec.mode, "no_aff": cfg.no_aff,
        "noise": asdict(cfg.noise), "budget": cfg.budget, "query": query}])
    history: list[dict] = []
    outcome, answer, errors_in_row = "budget", "", 0
    for step in range(cfg.budget):
        try:
            action = backend.next_step(query, tools, history)
            validate_call(action, tools)
        except ProtocolError as err:
            errors_in_row += 1
            msg = f"protocol error: {err}"
            log.records.append({"type": "protocol_error", "step": step, "error": msg})
            history.append({"protocol_error": msg, "success": False, "feedback": msg})
            if errors_in_row >= 2:
                outcome = "aborted"
                break
            continue
        errors_in_row = 0
        if isinstance(action, Finish):
            outcome, answer = "finished", action.answer
            break
        out = layer.call(action.tool, action.args)
        bad = layer.state.violations()
        if bad:
            raise InvariantViolation(f"after {action.tool}: {'; '.join(bad)}")
        entry = _history_entry(action, out)
        history.append(entry)
        record = {"type": "call", "step": step, "tool": action.tool, "args": entry["args"],
                  "success": out.success, "feedback": out.feedback_msg,
                  "output": entry["output"], "state_after": layer.state.to_json(),
                  "world_digest": world.digest()}
        if "skill" in out.extra:
            record["skill"] = out.extra["skill"]
        log.records.append(record)
    retries = {f"{skill}:{key}": n for (skill, key), n in sorted(layer.failures.items())}
    log.records.append({
        "type": "summary", "outcome": outcome, "answer": answer,
        "score": float(judge(world, spec.task)),
        "steps": sum(1 for r in log.records if r["type"] in ("call", "protocol_error")),
        "remaps": layer.remaps, "retries": retries,
        "final_state": layer.state.to_json(), "world_digest": world.digest()})
    return log


def scripted_episode(spec: SceneSpec, cfg: EpisodeConfig | None = None,
                     rules: Iterable[str] = RULES) -> EpisodeLog:
    return run_episode(spec, ScriptedPolicy(default_plan(spec.task, spec.mode), rules), cfg)


def replay(log: EpisodeLog, spec: SceneSpec | None = None) -> EpisodeLog:
    """Re-run the calls of ``log`` on the same scene and configuration."""
    h = log.header
    if spec is None:
        spec = generate_scene(h["template"], h["scene_seed"])
    if scene_digest(spec) != h["scene_sha256"]:
        raise InvalidParameter("scene does not match the one recorded in the log")
    cfg = EpisodeConfig(no_aff=h["no_aff"], noise=NoiseConfig(**h["noise"]), seed=h["seed"],
                        budget=h["budget"])
    return run_episode(spec, ScriptedPolicy.from_log(log), cfg, query=h["query"])


# batches ----------------------------------------------------------------

@dataclass(frozen=True)
class SuiteEntry:
    template: str
    seeds: tuple[int, ...]
    no_aff: bool = False
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    label: str = ""

    @property
    def name(self) -> str:
        base = self.label or self.template
        return f"{base} (no-aff)" if self.no_aff and not self.label else base


def load_suite(doc: dict) -> list[SuiteEntry]:
    """Parse ``{"seeds": N | [..], "tasks": [{"template", "no_aff"?, "noise"?, "label"?, "seeds"?}]}``."""
    def seeds_of(v) -> tuple[int, ...]:
        return tuple(range(v)) if isinstance(v, int) else tuple(int(s) for s in v)

    default = doc.get("seeds", 10)
    out = []
    for t in doc.get("tasks", []):
        out.append(SuiteEntry(t["template"], seeds_of(t.get("seeds", default)),
                              bool(t.get("no_aff", False)), NoiseConfig(**t.get("noise", {})),
                              t.get("label", "")))
    if not out:
        raise InvalidParameter("suite has no tasks")
    return out


def _batch_job(job: tuple[str, int, bool, dict, int]) -> float:
    template, seed, no_aff, noise, budget = job
    spec = generate_scene(template, seed)
    cfg = EpisodeConfig(no_aff=no_aff, noise=NoiseConfig(**noise), budget=budget)
    return scripted_episode(spec, cfg).score


def run_batch(entries: Sequence[SuiteEntry], workers: int = 1,
              budget: int = DEFAULT_BUDGET) -> list[dict]:
    """Mean scripted-agent score per suite entry; episodes run in parallel."""
    jobs = [(e.template, s, e.no_aff, asdict(e.noise), budget) for e in entries for s in e.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(_batch_job, jobs))
    else:
        scores = [_batch_job(j) for j in jobs]
    rows, i = [], 0
    for e in entries:
        chunk = scores[i:i + len(e.seeds)]
        i += len(e.seeds)
        rows.append({"task": e.name, "template": e.template, "no_aff": e.no_aff,
                     "n": len(chunk), "mean": float(np.mean(chunk)), "scores": chunk})
    return rows


def format_table(rows: list[dict]) -> str:
    width = max([len("task")] + [len(r["task"]) for r in rows])
    lines = [f"{'task':<{width}}  {'n':>3}  {'mean':>6}"]
    lines += [f"{r['task']:<{width}}  {r['n']:>3}  {r['mean']:>6.3f}" for r in rows]
    return "\n".join(lines)


def approach_hint(task: TaskSpec) -> tuple[str, str]:
    """(query, action) of the first object the default plan drives to."""
    h = task.hints
    if "query" in h:
        return h["query"], h["action"]
    if "items" in h:
        return h["items"][0], h["pick_action"]
    if "target_query" in h:
        return h["target_query"], h["pick_action"]
    return h["item_query"], h["pick_action"]

"""Scenario files and the runner that executes them.

A scenario is a line-oriented text file with three sections:

    [network]
    home = E17E329C
    timeout = 10
    node = 3 s0 alive retry_interval=5 max_retries=2
    node = 14 s2 failed
    node = 15 s2 alive synced

    [medium]
    propagation_delay = 0.01

    [timeline]
    at 0  dos spoof=14 duration=100 interval=1 desync=6:20
    at 10 trigger node=3 payload=31
    run_until 900

Scenarios are data: the same file with the same seed reproduces the same
trace byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import attack
from .crypto import CtrDrbg, Prng, derive_keys, span_entropy
from .medium import Medium, MediumConfig
from .nodes import (
    Controller,
    Device,
    NodeSpec,
    NodeStatus,
    SecurityClass,
    SpanState,
    validate_timeout,
    DEFAULT_NONCE_TIMEOUT,
    DEFAULT_QUEUE_CAPACITY,
    DEFAULT_ENCAP_RETRY_INTERVAL,
    DEFAULT_ENCAP_MAX_RETRIES,
)
from .sniff import Trace
from .wire import CONTROLLER_NODE_ID, MAX_NODE_ID

DEFAULT_NETWORK_KEY = bytes.fromhex("0f1e2d3c4b5a69788796a5b4c3d2e1f0")

TIMELINE_VERBS = ("dos", "dos_all", "desync", "trigger", "fail_node")


class ScenarioError(Exception):
    def __init__(self, message: str, source: str = "", line_no: int | None = None):
        self.source = source
        self.line_no = line_no
        where = f"{source}:{line_no}: " if line_no is not None else ""
        super().__init__(f"{where}{message}")


@dataclass
class NodeConfig:
    id: int
    security: SecurityClass
    status: NodeStatus = NodeStatus.ALIVE
    responds_to_nonce_get: bool = True
    synced: bool = False
    request_retry_interval: float | None = None
    request_max_retries: int = 0
    encap_retry_interval: float = DEFAULT_ENCAP_RETRY_INTERVAL
    encap_max_retries: int = DEFAULT_ENCAP_MAX_RETRIES


@dataclass
class TimelineAction:
    at: float
    verb: str
    args: dict[str, str] = field(default_factory=dict)


@dataclass
class Scenario:
    name: str = "scenario"
    home: int = 0xE17E329C
    timeout: float = DEFAULT_NONCE_TIMEOUT
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    network_key: bytes = DEFAULT_NETWORK_KEY
    nodes: list[NodeConfig] = field(default_factory=list)
    medium: MediumConfig = field(default_factory=MediumConfig)
    actions: list[TimelineAction] = field(default_factory=list)
    run_until: float = 100.0

    def validate(self) -> "Scenario":
        validate_timeout(self.timeout)
        seen = set()
        for node in self.nodes:
            if node.id in seen:
                raise ScenarioError(f"duplicate node id {node.id}", self.name)
            if node.id == CONTROLLER_NODE_ID:
                raise ScenarioError("node id 1 is the gateway itself", self.name)
            seen.add(node.id)
        node_ids = seen
        for action in self.actions:
            if action.verb not in TIMELINE_VERBS:
                raise ScenarioError(f"unknown timeline verb {action.verb!r}", self.name)
            target = action.args.get("node")
            if action.verb in ("trigger", "fail_node") and int(target) not in node_ids:
                raise ScenarioError(
                    f"timeline refers to unknown node {target}", self.name
                )
        return self


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "yes", "1", "on"):
        return True
    if text.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_node_line(value: str, err) -> NodeConfig:
    parts = value.split()
    if len(parts) < 3:
        raise err("node needs at least: <id> <s0|s2> <alive|failed>")
    try:
        node_id = int(parts[0])
    except ValueError:
        raise err(f"bad node id {parts[0]!r}") from None
    if not 2 <= node_id <= MAX_NODE_ID:
        raise err(f"node id must be within 2..{MAX_NODE_ID}, got {node_id}")
    try:
        security = SecurityClass(parts[1].lower())
    except ValueError:
        raise err(f"security class must be s0 or s2, got {parts[1]!r}") from None
    try:
        status = NodeStatus(parts[2].lower())
    except ValueError:
        raise err(f"status must be alive or failed, got {parts[2]!r}") from None
    node = NodeConfig(id=node_id, security=security, status=status)
    for extra in parts[3:]:
        key, _, val = extra.partition("=")
        try:
            if key == "synced":
                node.synced = _parse_bool(val) if val else True
            elif key == "responds_to_nonce_get":
                node.responds_to_nonce_get = _parse_bool(val)
            elif key == "retry_interval":
                node.request_retry_interval = float(val)
            elif key == "max_retries":
                node.request_max_retries = int(val)
            elif key == "encap_retry_interval":
                node.encap_retry_interval = float(val)
            elif key == "encap_max_retries":
                node.encap_max_retries = int(val)
            else:
                raise err(f"unknown node option {key!r}")
        except ValueError:
            raise err(f"bad value for node option {key!r}: {val!r}") from None
    if node.synced and node.security is not SecurityClass.S2:
        raise err("only s2 nodes can start synced")
    return node


def loads_scenario(text: str, name: str = "scenario") -> Scenario:
    """Parse scenario text; diagnostics carry the offending line number."""
    scenario = Scenario(name=name)
    section = None
    saw_run_until = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue

        def err(message: str) -> ScenarioError:
            return ScenarioError(message, name, line_no)

        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("network", "medium", "timeline"):
                raise err(f"unknown section [{section}]")
            continue
        if section is None:
            raise err("content before the first section header")

        if section == "timeline":
            parts = line.split(None, 2)
            if parts[0] == "run_until":
                if len(parts) != 2:
                    raise err("run_until takes exactly one time")
                try:
                    scenario.run_until = float(parts[1])
                except ValueError:
                    raise err(f"bad run_until time {parts[1]!r}") from None
                saw_run_until = True
                continue
            if parts[0] != "at" or len(parts) < 3:
                raise err("timeline lines look like: at <time> <verb> [key=value ...]")
            try:
                at = float(parts[1])
            except ValueError:
                raise err(f"bad action time {parts[1]!r}") from None
            verb, *rest = parts[2].split(None, 1)
            if verb not in TIMELINE_VERBS:
                raise err(f"unknown timeline verb {verb!r}")
            args = {}
            for token in (rest[0].split() if rest else []):
                key, sep, val = token.partition("=")
                if not sep:
                    raise err(f"action arguments look like key=value, got {token!r}")
                args[key] = val
            scenario.actions.append(TimelineAction(at=at, verb=verb, args=args))
            continue

        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep:
            raise err(f"expected key = value, got {line!r}")
        try:
            if section == "network":
                if key == "home":
                    scenario.home = int(value, 16)
                elif key == "timeout":
                    scenario.timeout = float(value)
                    try:
                        validate_timeout(scenario.timeout)
                    except ValueError as exc:
                        raise err(str(exc)) from None
                elif key == "queue_capacity":
                    scenario.queue_capacity = int(value)
                elif key == "network_key":
                    scenario.network_key = bytes.fromhex(value)
                    if len(scenario.network_key) != 16:
                        raise err("network key must be 16 bytes of hex")
                elif key == "node":
                    scenario.nodes.append(_parse_node_line(value, err))
                else:
                    raise err(f"unknown network key {key!r}")
            elif section == "medium":
                if key == "propagation_delay":
                    scenario.medium.propagation_delay = float(value)
                elif key == "loss_probability":
                    scenario.medium.loss_probability = float(value)
                elif key == "crc_probability":
                    scenario.medium.crc_corruption_probability = float(value)
                else:
                    raise err(f"unknown medium key {key!r}")
        except ScenarioError:
            raise
        except ValueError as exc:
            raise err(f"bad value for {key!r}: {exc}") from None

    if not saw_run_until:
        raise ScenarioError("timeline needs a run_until line", name)
    try:
        MediumConfig(
            propagation_delay=scenario.medium.propagation_delay,
            loss_probability=scenario.medium.loss_probability,
            crc_corruption_probability=scenario.medium.crc_corruption_probability,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc), name) from None
    return scenario.validate()


def load_scenario(path) -> Scenario:
    """Load and validate a scenario file; bundled names work too."""
    path = Path(path)
    if not path.exists():
        bundled = bundled_scenario_path(path.stem)
        if bundled is not None:
            path = bundled
        else:
            raise ScenarioError(f"no such scenario file: {path}")
    return loads_scenario(path.read_text(encoding="utf-8"), name=path.stem)


def bundled_scenario_path(name: str) -> Path | None:
    candidate = resources.files("zwsim") / "scenarios" / f"{name}.scn"
    with resources.as_file(candidate) as concrete:
        return concrete if concrete.exists() else None


def bundled_scenarios() -> list[str]:
    folder = resources.files("zwsim") / "scenarios"
    return sorted(p.name[: -len(".scn")] for p in folder.iterdir()
                  if p.name.endswith(".scn"))


@dataclass
class Simulation:
    scenario: Scenario
    seed: int
    medium: Medium
    controller: Controller
    devices: dict[int, Device]
    attacker: attack.Attacker

    @property
    def trace(self) -> Trace:
        return self.medium.trace


def _parse_range(text: str) -> range:
    lo, _, hi = text.partition(":")
    return range(int(lo), int(hi))


def build_simulation(scenario: Scenario, seed: int) -> Simulation:
    """Assemble nodes, medium, and timeline into a ready-to-run simulation."""
    scenario.validate()
    master = Prng(seed)
    controller_prng = Prng(master.next_u64())
    device_prngs = {node.id: Prng(master.next_u64())
                    for node in sorted(scenario.nodes, key=lambda n: n.id)}
    medium_prng = Prng(master.next_u64())

    keys = derive_keys(scenario.network_key)
    specs = [
        NodeSpec(
            id=node.id,
            security=node.security,
            status=node.status,
            responds_to_nonce_get=node.responds_to_nonce_get,
        )
        for node in scenario.nodes
    ]
    controller = Controller(
        home=scenario.home,
        keys=keys,
        prng=controller_prng,
        included=specs,
        timeout=scenario.timeout,
        queue_capacity=scenario.queue_capacity,
    )
    medium = Medium(scenario.medium, medium_prng)
    medium.register(controller)

    devices: dict[int, Device] = {}
    for node, spec in zip(sorted(scenario.nodes, key=lambda n: n.id),
                          sorted(specs, key=lambda s: s.id)):
        device = Device(
            spec=spec,
            home=scenario.home,
            keys=keys,
            prng=device_prngs[node.id],
            request_retry_interval=node.request_retry_interval,
            request_max_retries=node.request_max_retries,
            encap_retry_interval=node.encap_retry_interval,
            encap_max_retries=node.encap_max_retries,
        )
        devices[node.id] = device
        medium.register(device)
        if node.synced:
            # pre-established synchronization from earlier traffic
            entropy = span_entropy(device.prng.take(16), controller.prng.take(16))
            device.span.drbg = CtrDrbg.instantiate(entropy)
            controller.span_table[node.id] = SpanState(drbg=CtrDrbg.instantiate(entropy))

    attacker = attack.Attacker(medium=medium, home=scenario.home)
    _schedule_timeline(scenario, medium, devices, attacker)
    return Simulation(
        scenario=scenario,
        seed=seed,
        medium=medium,
        controller=controller,
        devices=devices,
        attacker=attacker,
    )


def _schedule_timeline(scenario, medium, devices, attacker) -> None:
    for action in scenario.actions:
        args = action.args
        if action.verb == "trigger":
            medium.schedule_trigger(
                action.at, int(args["node"]), bytes.fromhex(args.get("payload", "00"))
            )
        elif action.verb == "fail_node":
            device = devices[int(args["node"])]

            def flip(d=device):
                d.spec.status = NodeStatus.FAILED

            medium.schedule(action.at, flip)
        elif action.verb == "dos":
            attack.schedule_flood(
                attacker,
                spoofed_src=int(args["spoof"]),
                start=action.at,
                duration=float(args.get("duration", 100)),
                interval=float(args.get("interval", 1)),
                count=int(args["count"]) if "count" in args else None,
                desync_range=_parse_range(args["desync"]) if "desync" in args else None,
                desync_after_iteration=int(args.get("desync_after", 1)),
            )
        elif action.verb == "dos_all":
            attack.schedule_flood_all(
                attacker,
                ids=sorted(devices),
                start=action.at,
                duration=float(args.get("duration", 100)),
                interval=float(args.get("interval", 1)),
            )
        elif action.verb == "desync":
            attack.schedule_desync(attacker, action.at, _parse_range(args["range"]))


@dataclass
class RunResult:
    simulation: Simulation
    report: dict


def run_scenario(scenario: Scenario, seed: int) -> RunResult:
    """Execute the timeline and summarize the run.

    Frame and blocking numbers are derived from the trace so the report is
    recomputable from the exported CSV; only queue depth, drain time, and
    trigger counts come from runner-side instrumentation.
    """
    from .report import report_from_trace

    sim = build_simulation(scenario, seed)
    counters = sim.medium.run_until(scenario.run_until)
    controller = sim.controller
    trace_numbers = report_from_trace(sim.trace.records, scenario.run_until)

    attacker_times = sim.attacker.send_times
    backlog_drain = 0.0
    if attacker_times:
        attack_end = attacker_times[-1]
        drain_end = next(
            (t for t in controller.idle_transitions if t >= attack_end), None
        )
        backlog_drain = (drain_end - attack_end) if drain_end is not None else (
            scenario.run_until - attack_end
        )

    delivered_by_node: dict[int, int] = {}
    for _, src, _ in controller.delivered_events:
        delivered_by_node[src] = delivered_by_node.get(src, 0) + 1

    report = {
        "scenario": scenario.name,
        "seed": seed,
        "events_triggered": counters.events_triggered,
        **trace_numbers,
        "delivered_by_node": ",".join(
            f"{node}:{count}" for node, count in sorted(delivered_by_node.items())
        ),
        "backlog_drain_seconds": round(backlog_drain, 3),
        "max_queue_len": controller.max_queue_len,
        "run_until": scenario.run_until,
    }
    return RunResult(simulation=sim, report=report)

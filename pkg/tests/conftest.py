import sys

import pytest

from cmplab.config import NetworkSpec, RunSpec, ScenarioConfig, DemandSpec, ControllerSpec
from cmplab.network import Link, Movement, Network, Node, Phase


def chain_network(lengths=(300.0, 300.0, 300.0), sat=0.5, lanes=1):
    """Links L0 -> N0 -> L1 -> N1 -> ... -> L{k}; one single-movement phase per node."""
    links, movements, phases, nodes = [], [], [], []
    k = len(lengths)
    for i, L in enumerate(lengths):
        to = f"N{i}" if i < k - 1 else None
        frm = f"N{i - 1}" if i > 0 else None
        links.append(Link(f"L{i}", to, L, lanes, from_node=frm))
    for i in range(k - 1):
        mid = f"L{i}>L{i + 1}"
        movements.append(Movement(mid, f"L{i}", f"L{i + 1}", 1.0, sat, turn="through"))
        phases.append(Phase(f"N{i}", 0, (mid,)))
        nodes.append(Node(f"N{i}"))
    return Network.from_parts(nodes, links, movements, phases)


def cross_network(sat=0.5, length=100.0):
    """One node, two conflicting approaches a, b each feeding its own exit."""
    links = [Link("a", "N", length, 1), Link("b", "N", length, 1),
             Link("ax", None, length, 1, from_node="N"), Link("bx", None, length, 1, from_node="N")]
    mv = [Movement("a>ax", "a", "ax", 1.0, sat), Movement("b>bx", "b", "bx", 1.0, sat)]
    ph = [Phase("N", 0, ("a>ax",)), Phase("N", 1, ("b>bx",))]
    return Network.from_parts([Node("N", (("a>ax", "b>bx"),))], links, mv, ph)


def scenario_from(network: Network, rates, **run) -> ScenarioConfig:
    spec = NetworkSpec(tuple(network.nodes.values()), tuple(network.links.values()),
                       tuple(network.movements.values()),
                       tuple(p for nid in sorted(network.phases) for p in network.phases[nid]))
    return ScenarioConfig(spec, DemandSpec(dict(rates), {}), ControllerSpec("qmp"), RunSpec(**run))


@pytest.fixture
def chain():
    return chain_network()


@pytest.fixture
def cross():
    return cross_network()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        terminalreporter.write_line(mod.RESULTS.get(n, f"CRITERION {n:2d}: NOT RUN - deselected or raised before a verdict"))

"""Shared fixtures: small topologies and policies used across the suite."""

from pathlib import Path

import pytest

from difcnet.netcl import compile_program, parse
from difcnet.topology import topology_from_dict

REPO_ROOT = Path(__file__).resolve().parents[1]
SCENARIO_DIR = REPO_ROOT / "scenarios"
TOPOLOGY_DIR = SCENARIO_DIR / "topologies"
POLICY_DIR = SCENARIO_DIR / "policies"


def make_lan(name="lan"):
    """One access switch behind a gateway; three hosts on the access side."""
    return topology_from_dict(
        {
            "name": name,
            "switches": ["S1", "S2"],
            "links": [["S1", "S2"]],
            "hosts": [
                {"name": "A", "ip": "10.5.2.11", "switch": "S2"},
                {"name": "B", "ip": "10.5.2.12", "switch": "S2"},
                {"name": "C", "ip": "10.5.2.20", "switch": "S2"},
            ],
            "external": {"name": "external", "ip": "203.0.113.10", "gateway": "S1"},
            "groups": {"Clients": ["A", "B"]},
        }
    )


def make_split(name="split"):
    """Hosts spread over two access switches, so source and destination
    enforcement points differ."""
    return topology_from_dict(
        {
            "name": name,
            "switches": ["S1", "S2", "S3"],
            "links": [["S1", "S2"], ["S1", "S3"]],
            "hosts": [
                {"name": "A", "ip": "10.6.2.11", "switch": "S2"},
                {"name": "B", "ip": "10.6.3.11", "switch": "S3"},
                {"name": "C", "ip": "10.6.3.20", "switch": "S3"},
            ],
            "external": {"name": "external", "ip": "203.0.113.10", "gateway": "S1"},
        }
    )


LAN_POLICY = """\
label_host(ip=A, label={TA})
label_host(ip=B, label={TB})
if match(pkt_label contains TA && dst_ip==C) then allow
if match(src_ip==B && dst_ip==C) then drop
if match(dst_ip==A) then allow
if match(dst_ip==B) then allow
"""


@pytest.fixture
def lan():
    return make_lan()


@pytest.fixture
def lan_compiled(lan):
    return compile_program(parse(LAN_POLICY), lan)


@pytest.fixture
def split():
    return make_split()

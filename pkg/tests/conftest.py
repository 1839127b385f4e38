import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from zwsim.crypto import Prng, derive_keys
from zwsim.medium import Medium, MediumConfig
from zwsim.nodes import Controller, Device, NodeSpec, SecurityClass


@pytest.fixture
def keys():
    return derive_keys(bytes(range(16)))


def make_network(
    keys,
    node_specs,
    timeout=10.0,
    queue_capacity=64,
    medium_config=None,
    home=0xE17E329C,
    seed=99,
    device_kwargs=None,
):
    """Small hand-wired network: controller, devices, shared medium."""
    master = Prng(seed)
    controller = Controller(
        home=home,
        keys=keys,
        prng=Prng(master.next_u64()),
        included=node_specs,
        timeout=timeout,
        queue_capacity=queue_capacity,
    )
    medium = Medium(medium_config or MediumConfig(), Prng(master.next_u64()))
    medium.register(controller)
    devices = {}
    for spec in node_specs:
        device = Device(
            spec=spec,
            home=home,
            keys=keys,
            prng=Prng(master.next_u64()),
            **(device_kwargs or {}),
        )
        devices[spec.id] = device
        medium.register(device)
    return medium, controller, devices

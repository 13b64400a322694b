"""Shared fixtures: the small worked instances used across the market and oracle tests."""
import os
from datetime import timedelta

import pytest
from hypothesis import Verbosity, settings

from mecsim.market import Cloud, DemandProfile, Station, Topology
from mecsim.offload import DeviceProfile, LinkConfig, VmCatalog
from mecsim.taskgraph import chain

# HYPOTHESIS_PROFILE=ci relaxes deadlines on slow runners
settings.register_profile("ci", deadline=timedelta(milliseconds=2000))
settings.register_profile("dev", max_examples=10)
settings.register_profile("debug", max_examples=10, verbosity=Verbosity.verbose)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


def single_cell(subchannels: int, capacity_hz: float, users) -> Topology:
    """One station feeding one cloud, every user attached to it."""
    return Topology(
        stations=(Station(id=0, subchannels=subchannels, bandwidth_hz=1e6),),
        clouds=(Cloud(id=0, capacity_hz=capacity_hz),),
        station_cloud={0: 0},
        associations={n: (0, 0) for n in users},
    )


@pytest.fixture
def three_users():
    """M=2, B=10e9, three unit-occupancy bids claiming 10, 6 and 4."""
    catalog = VmCatalog((5e9,))
    demands = [
        DemandProfile(user=1, q=1, s=1, claimed=10.0, true_value=10.0),
        DemandProfile(user=2, q=1, s=1, claimed=6.0, true_value=6.0),
        DemandProfile(user=3, q=1, s=1, claimed=4.0, true_value=4.0),
    ]
    return demands, single_cell(2, 10e9, [1, 2, 3]), catalog


@pytest.fixture
def adversarial():
    """One large high-gamma bid blocks two smaller bids worth more together."""
    catalog = VmCatalog((50e9, 60e9))
    demands = [
        DemandProfile(user=1, q=6, s=2, claimed=6.0, true_value=6.0),
        DemandProfile(user=2, q=5, s=1, claimed=4.8, true_value=4.8),
        DemandProfile(user=3, q=5, s=1, claimed=4.8, true_value=4.8),
    ]
    return demands, single_cell(10, 100e9, [1, 2, 3]), catalog


@pytest.fixture
def device():
    # d = 100 m, alpha = 4
    return DeviceProfile(cpu_hz=0.5e9, tx_power_w=0.1, channel_gain=1e-8, noise_w=1e-13)


@pytest.fixture
def link():
    return LinkConfig(subchannels=1, bandwidth_hz=1e6, station_subchannels=15, cloud_capacity_hz=50e9)


@pytest.fixture
def two_chain():
    return chain([1e9, 1e6], [1e6])

"""Shared fixtures and the acceptance-summary hook.

Unit tests needing a full end-to-end run use small scenarios built by
the make_scenario factory: short duration, servo exclusion off, drift
off, so a run finishes in well under a second while every slot class
still collects counts.
"""

from __future__ import annotations

import pytest

from tbqkd import (
    ChannelModel,
    ClockConfig,
    DetectorModel,
    InterferometerModel,
    ProtocolParams,
    ScenarioConfig,
    SourceConfig,
)

# Populated by test_acceptance.py, echoed at the end of the run so the
# per-criterion verdict lines survive pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


def small_scenario(**overrides) -> ScenarioConfig:
    base = ScenarioConfig(
        params=ProtocolParams(),
        clock=ClockConfig(f_ref=57e6, f_out=684e6),
        source=SourceConfig(extinction_ratio_db=16.8, im1_transmission_x=0.5),
        channel=ChannelModel(loss_db=3.0),
        detector=DetectorModel(efficiency=0.10, dark_prob_per_ns=1e-6),
        interferometer=InterferometerModel(
            delay=1.462e-9, visibility=0.98, drift_sigma=0.0
        ),
        p_z_receiver=0.5,
        duration=0.5,
        seed=11,
        fringe_block_x_symbols=2000,
        servo_bursts_per_event=0,
    )
    return base.replace(**overrides) if overrides else base


@pytest.fixture
def make_scenario():
    return small_scenario


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

"""Access to the packaged empirical calibration constants.

Every constant in calibration.json is an observed extreme over a seeded
random ensemble times a stated safety margin, never a theoretical value;
the seeds, grids, and margins are stored next to the numbers so any
entry can be regenerated with ``python -m l0spline._calibrate``.
"""

import json
from importlib import resources

__all__ = ["load_calibration"]


def load_calibration() -> dict:
    with resources.files("l0spline").joinpath("calibration.json").open(
            encoding="utf-8") as fh:
        return json.load(fh)

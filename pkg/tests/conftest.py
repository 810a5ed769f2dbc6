import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


def pickup_cfg(seed: int, bearing_deg: float = 0.0, standoff: float = 2.0, **extra) -> dict:
    """Scenario override: robot `standoff` meters from the default tag,
    facing it, approaching `bearing_deg` off the tag normal."""
    th = math.radians(bearing_deg)
    cfg = {
        "name": f"pickup-s{seed}-b{bearing_deg:g}",
        "seed": seed,
        "duration_s": 90.0,
        "robot": {"x": 2.0 - standoff * math.cos(th), "y": standoff * math.sin(th),
                  "heading": -th, "height": 0.55, "lean": 0.0},
    }
    cfg.update(extra)
    return cfg

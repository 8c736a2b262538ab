#!/usr/bin/env python3
"""Smoke test for the gnsim_py extension module.

Expects the library to exist already (`cargo build -p gnsim-py`, debug or
release). Copies it into a temp dir under the importable name, then checks
timer math, setup listing, scenario loading/override/validation, and that a
tiny cell run is deterministic.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]

SMOKE_SCN = """\
name = smoke
out_dir = smoke-out
end_time_s = 5
mobility.kind = static_cluster
mobility.vehicle_count = 12
mobility.pitch_m = 50
setups = s-fot-plus
seeds = 1
denm.count = 2
denm.rate_hz = 1
denm.start_s = 1
denm.area = circle:100,50,120
"""


def find_library() -> Path:
    names = ("libgnsim_py.so", "libgnsim_py.dylib", "gnsim_py.dll")
    hits = [
        p
        for profile in ("release", "debug")
        for n in names
        if (p := ROOT / "target" / profile / n).exists()
    ]
    if not hits:
        sys.exit("bindings not built; run: cargo build -p gnsim-py")
    return max(hits, key=lambda p: p.stat().st_mtime)


def main() -> None:
    tmp = Path(tempfile.mkdtemp(prefix="gnsim-smoke-"))
    shutil.copy(find_library(), tmp / "gnsim_py.so")
    sys.path.insert(0, str(tmp))
    import gnsim_py

    # timer math
    assert math.isclose(gnsim_py.cbf_timer_ms(0.0), 100.0)
    assert math.isclose(gnsim_py.cbf_timer_ms(1000.0), 1.0)
    assert math.isclose(gnsim_py.cbf_timer_ms(500.0), 50.5)
    assert math.isclose(gnsim_py.cbf_timer_ms(2000.0), 1.0), "clamps past dist_max"
    t, slot = gnsim_py.scbf_timer_ms(1500.0)
    assert slot == 1 and 100.0 < t <= 200.0, (t, slot)
    t0, slot0 = gnsim_py.scbf_timer_ms(250.0)
    assert slot0 == 0 and math.isclose(t0, gnsim_py.cbf_timer_ms(250.0))

    # geometry helpers
    assert math.isclose(gnsim_py.distance((0, 0), (3, 4)), 5.0)
    assert math.isclose(gnsim_py.progress_toward((0, 0), (500, 0), (1000, 0)), 500.0)
    assert gnsim_py.progress_toward((0, 0), (-100, 0), (1000, 0)) < 0

    assert gnsim_py.list_setups() == ["etsi-cbf", "greedy-cbf", "s-fot-plus", "greedy-plus"]

    # scenario loading, overrides, error paths
    scn = tmp / "smoke.scn"
    scn.write_text(SMOKE_SCN)
    sc = gnsim_py.Scenario(str(scn))
    sc.validate()
    ids = sc.cell_ids()
    assert len(ids) == 1 and ids[0].startswith("s-fot-plus") and ids[0].endswith("-s1"), ids
    for bad in (lambda: gnsim_py.Scenario(str(tmp / "missing.scn")),
                lambda: sc.set("no.such.key", "1")):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    # a tiny run is sane and bit-deterministic
    r1 = sc.run_cell(ids[0])
    r2 = sc.run_cell(ids[0])
    assert r1 == r2, "re-run must be identical"
    assert r1["messages"] == 2
    assert r1["delivered_any_fraction"] == 1.0
    assert r1["pdr_mean"] > 0.9, r1["pdr_mean"]
    assert r1["total_data_tx"] >= 2

    print("smoke_test: all checks passed")


if __name__ == "__main__":
    main()

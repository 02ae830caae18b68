"""Smoke test for the blitzsim_py extension module.

Build and install with `maturin develop -m crates/python/Cargo.toml`, or
point BLITZSIM_PY_PATH at a directory holding a built blitzsim_py.so.
"""

import os
import sys

if os.environ.get("BLITZSIM_PY_PATH"):
    sys.path.insert(0, os.environ["BLITZSIM_PY_PATH"])

import blitzsim_py as bz


def check_hint():
    h = bz.Hint("dsl", 50_000, min_rtt_us=50_000)
    data = h.encode()
    assert isinstance(data, bytes) and len(data) == 11, data
    assert bz.Hint.decode(data) == h
    assert bz.Hint("lte", 32_000).min_rtt_us is None
    try:
        bz.Hint.decode(b"\x07")
    except ValueError:
        pass
    else:
        raise AssertionError("truncated hint decoded")
    try:
        bz.Hint("satellite", 1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown technology accepted")


def check_window():
    # 50 Mbit/s over 50 ms is 312500 bytes.
    assert bz.bdp_bytes(50_000, 50_000) == 312_500
    assert bz.bdp_bytes(50_000, 50_000, 1.5) == 468_750
    cwnd, mode = bz.blitzstart_window(bz.Hint("dsl", 50_000), 50_000)
    assert (cwnd, mode) == (312_500, "avoidance"), (cwnd, mode)
    cwnd, mode = bz.blitzstart_window(bz.Hint("dsl", 0), 50_000)
    assert mode == "slow_start"


def check_runs():
    names = [s.name for s in bz.Scenario.presets()]
    assert names == ["DSL-slow", "DSL-fast", "3G", "LTE"], names
    sc = bz.Scenario("DSL-fast")
    assert sc.bdp_bytes == 312_500
    sc.short_flow_bytes = "70K"
    assert sc.short_flow_start_ms == 30_000.0
    base = sc.run_reps(3)
    sc.variant = "blitz:1.0"
    blitz = sc.run_reps(3)
    assert [r.seed for r in base] == [r.seed for r in blitz]
    assert all(r.fct_ms is not None and not r.timeout for r in base + blitz)
    again = sc.run(1)
    assert again.fct_ms == blitz[1].fct_ms and again.lost_pkts == blitz[1].lost_pkts
    stats = bz.compare(blitz, base)
    assert stats["n"] == 3
    assert stats["mean_fct_factor"] > 1.0, stats
    print(f"DSL-fast 70K blitz:1.0 vs baseline: fct x{stats['mean_fct_factor']:.2f}")
    try:
        sc.variant = "blitz:-1"
    except ValueError:
        pass
    else:
        raise AssertionError("negative factor accepted")

    custom = bz.Scenario.from_config("name = lab\nrtt_ms = 20\nbottleneck_kbps = 10000\nbuffer_pkts = 20\n")
    assert custom.rtt_ms == 20.0 and custom.access_tech == "unknown"


def main():
    check_hint()
    check_window()
    check_runs()
    print("smoke test passed")


if __name__ == "__main__":
    main()

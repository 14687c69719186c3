"""Smoke test for the raychan_py extension module.

Uses an installed module if there is one (``maturin develop -m
crates/python/Cargo.toml``), otherwise the library cargo left in
target/{release,debug}.
"""

import cmath
import importlib.util
import json
import math
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    try:
        import raychan_py

        return raychan_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libraychan_py.so"
        if lib.exists():
            spec = importlib.util.spec_from_file_location("raychan_py", lib)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("raychan_py not found; run `cargo build -p raychan-py` first")


rc = load_module()


def check(name, cond):
    print(f"{'PASS' if cond else 'FAIL'} {name}")
    return cond


def main():
    ok = True

    free = rc.Scene.free_space()
    ch = rc.compute_channel(free, (0.0, 0.0, 0.0), (10.0, 0.0, 0.0))
    ok &= check("free-space 10 m is 66.427 dB", abs(ch["path_loss"] - 66.427) < 1e-3)
    ok &= check("delay is d/c", abs(ch["delay"] - 10.0 / rc.SPEED_OF_LIGHT) < 1e-15)
    ok &= check("cfr has 64 subcarriers", len(ch["cfr"]) == 64)

    ground = rc.Scene.from_triangles(
        [("ground", 15.0, 0.005)],
        [
            ((-100, -100, 0), (100, -100, 0), (100, 100, 0), 0),
            ((-100, -100, 0), (100, 100, 0), (-100, 100, 0), 0),
        ],
    )
    paths = rc.trace_paths(ground, (0, 0, 1), (10, 0, 1), 1)
    ok &= check("ground scene has LOS and one bounce", len(paths) == 2)
    ok &= check("bounce length is sqrt(104)", abs(paths[1]["length"] - math.sqrt(104)) < 1e-12)

    ok &= check("coherence time at 1 m/s, 5 GHz", abs(rc.coherence_ttl(1.0, 5e9) - 10.74e-3) < 1e-5)
    ok &= check("stationary coherence is infinite", math.isinf(rc.coherence_ttl(0.0, 5e9)))
    r = rc.fresnel_coefficient(1.0, 4.0, 0.0, 5e9)
    ok &= check("normal-incidence Fresnel is -1/3", cmath.isclose(r, -1 / 3, abs_tol=1e-15))

    cache = rc.ChannelCache()
    cache.insert(1, 2, 70.0, 1e-8, 0.0, 0.01)
    ok &= check("reverse lookup hits", cache.lookup(2, 1, 0.005) == (70.0, 1e-8))
    ok &= check("expired record misses", cache.lookup(1, 2, 0.01) is None)
    ok &= check("stats count one hit", cache.stats()["hits"] == 1)

    scene = rc.Scene.load(str(ROOT / "scenes" / "two_rooms" / "two_rooms.xml"))
    ok &= check("two_rooms loads", scene.num_triangles == 18)

    cfg = json.loads((ROOT / "scenarios" / "two_rooms_static.json").read_text())
    cfg["duration"] = 1.0
    out = rc.run_scenario(json.dumps(cfg), str(ROOT / "scenarios"))
    ok &= check("scenario ran", out["packets"] == 200 and out["packets_csv"].startswith("packet_id,"))

    try:
        rc.RadioParams(fft_size=0)
        ok &= check("bad radio params raise", False)
    except ValueError:
        ok &= check("bad radio params raise", True)

    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

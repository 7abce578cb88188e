"""Smoke test for the graspkit_py extension.

Uses an installed graspkit_py when importable; otherwise builds the
extension with cargo and loads it from a temporary directory.

    python3 python/smoke_test.py
"""

import importlib
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module(workdir: Path):
    try:
        return importlib.import_module("graspkit_py")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "graspkit-py", "--features", "extension-module"],
        cwd=REPO,
        check=True,
    )
    suffix = {"darwin": "dylib", "win32": "dll"}.get(sys.platform, "so")
    prefix = "" if sys.platform == "win32" else "lib"
    built = REPO / "target" / "release" / f"{prefix}graspkit_py.{suffix}"
    ext = "pyd" if sys.platform == "win32" else "so"
    shutil.copy(built, workdir / f"graspkit_py.{ext}")
    sys.path.insert(0, str(workdir))
    return importlib.import_module("graspkit_py")


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        gk = load_module(tmp)

        root = tmp / "ds"
        gk.synth_dataset(str(root), scenes=3, seed=7)
        scene = root / "scene0000"

        aff = gk.scene_affordances(str(scene), top=10)
        assert len(aff["ranked"]) == 10, aff
        scores = [p["affordance"] for p in aff["ranked"]]
        assert scores == sorted(scores, reverse=True), scores
        assert {p["type"] for p in aff["ranked"]} <= {"suction", "grasp"}
        print(f"affordance: {aff['suction_count']} suction, {aff['grasp_count']} grasp proposals")

        table = gk.evaluate(str(root), split="all")
        assert table["scenes"] == 3
        assert 0.0 <= table["suction"]["top1"] <= 1.0
        print(f"evaluate: suction top-1 {table['suction']['top1']:.2f}, grasp top-1 {table['grasp']['top1']:.2f}")

        mask = gk.read_mask(str(scene / "000.suction.png"))
        assert {v for row in mask for v in row} <= {0, 128, 255}
        gk.write_mask(str(tmp / "copy.png"), mask)
        assert gk.read_mask(str(tmp / "copy.png")) == mask

        grasps = gk.read_grasps(str(scene / "grasps.json"))
        assert all(set(g) == {"row", "col", "angle_rad", "polarity"} for g in grasps)
        g = grasps[0]
        assert gk.grasp_matches(g["row"], g["col"], g["angle_rad"], g["row"], g["col"], g["angle_rad"])
        assert not gk.grasp_matches(g["row"] + 5, g["col"], g["angle_rad"], g["row"], g["col"], g["angle_rad"])

        summary, log = gk.stow_episode(objects=5, seed=3, time_limit=300.0, source="box")
        again = gk.stow_episode(objects=5, seed=3, time_limit=300.0, source="box")
        assert log == again[1]
        lines = log.splitlines()
        assert json.loads(lines[0])["type"] == "header"
        print(f"stow: picked {summary['picked']} in {summary['attempts']} attempts, {len(lines)} log lines")

        rows = gk.recognition_benchmark(seed=0, cases=100)
        assert [r["method"] for r in rows][:2] == ["N-net", "K-net"]
        print("recognition: " + ", ".join(f"{r['method']} {100 * r['mixed']:.1f}" for r in rows))

        for call in (
            lambda: gk.scene_affordances(str(tmp / "missing")),
            lambda: gk.read_mask(str(tmp / "missing.png")),
        ):
            try:
                call()
            except FileNotFoundError:
                pass
            else:
                raise AssertionError("expected FileNotFoundError")
        try:
            gk.evaluate(str(root), method="deep")
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

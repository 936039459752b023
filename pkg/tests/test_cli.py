import json
import subprocess
import sys

import numpy as np
import pytest

from nxflow import genmask, read_flo, read_mask_png, write_flo, write_image
from nxflow.cli import main

from conftest import make_edge_fixture


@pytest.fixture()
def scene(tmp_path):
    image, gt = make_edge_fixture(32)
    img_path = tmp_path / "image.png"
    write_image(img_path, np.rint(image * 255).astype(np.uint8))
    flow_path = tmp_path / "gt.flo"
    write_flo(flow_path, gt)
    return img_path, flow_path, gt


def run(args):
    return main([str(a) for a in args])


class TestGenmask:
    def test_writes_exact_density_mask(self, tmp_path, capsys):
        out = tmp_path / "mask.png"
        code = run(["genmask", "--width", 64, "--height", 32, "--density",
                    "0.25", "--seed", 5, "--out", out])
        assert code == 0
        mask = read_mask_png(out)
        assert mask.shape == (32, 64)
        assert int(mask.sum()) == int(0.25 * 64 * 32)
        assert np.array_equal(mask, genmask(64, 32, 0.25, 5))


class TestInpaint:
    def test_full_density_roundtrips_flow_bytes(self, scene, tmp_path, capsys):
        img_path, flow_path, _ = scene
        out = tmp_path / "out.flo"
        code = run(["inpaint", "--image", img_path, "--flow", flow_path,
                    "--out", out, "--levels", 2, "--lam", "0.02"])
        assert code == 0
        assert out.read_bytes() == flow_path.read_bytes()

    def test_density_run_prints_epe_and_writes_viz(self, scene, tmp_path, capsys):
        img_path, flow_path, gt = scene
        out = tmp_path / "out.flo"
        viz = tmp_path / "viz.png"
        code = run(["inpaint", "--image", img_path, "--flow", flow_path,
                    "--density", "0.2", "--seed", 1, "--out", out,
                    "--viz", viz, "--gt", flow_path, "--levels", 2,
                    "--lam", "0.02"])
        assert code == 0
        assert out.exists() and viz.exists()
        line = capsys.readouterr().out.strip()
        assert line.startswith("epe=")
        assert float(line.split("=")[1]) < 0.5

    def test_deterministic_output_bytes(self, scene, tmp_path, capsys):
        img_path, flow_path, _ = scene
        a = tmp_path / "a.flo"
        b = tmp_path / "b.flo"
        flags = ["--image", img_path, "--flow", flow_path, "--density", "0.1",
                 "--seed", 3, "--levels", 2, "--lam", "0.02"]
        assert run(["inpaint", *flags, "--out", a]) == 0
        assert run(["inpaint", *flags, "--out", b]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_zfield_is_usage_error(self, scene, tmp_path, capsys):
        img_path, flow_path, _ = scene
        code = run(["inpaint", "--image", img_path, "--flow", flow_path,
                    "--mode", "zfield", "--out", tmp_path / "o.flo"])
        assert code == 1

    def test_corrupt_flow_is_format_error(self, scene, tmp_path, capsys):
        img_path, _, _ = scene
        bad = tmp_path / "bad.flo"
        bad.write_bytes(b"not a flow file at all")
        code = run(["inpaint", "--image", img_path, "--flow", bad,
                    "--out", tmp_path / "o.flo"])
        assert code == 2

    def test_kitti_flow_input_with_density_subsampling(self, tmp_path, capsys):
        from nxflow import write_kitti_png
        image, gt = make_edge_fixture(32)
        img_path = tmp_path / "image.png"
        write_image(img_path, np.rint(image * 255).astype(np.uint8))
        gt_q = np.round(gt * 64) / 64  # representable in the 16-bit encoding
        valid = np.ones((32, 32), dtype=bool)
        valid[:4] = False
        kitti_path = tmp_path / "sparse.png"
        write_kitti_png(kitti_path, gt_q * valid[:, :, None], valid)
        out = tmp_path / "out.flo"
        code = run(["inpaint", "--image", img_path, "--flow", kitti_path,
                    "--density", "0.2", "--seed", 1, "--levels", 2,
                    "--lam", "0.02", "--out", out])
        assert code == 0
        dense = read_flo(out)
        assert dense.shape == (32, 32, 2)
        assert np.all(np.isfinite(dense))

    def test_zfield_mode_runs(self, scene, tmp_path, capsys):
        from nxflow import write_zfield
        img_path, flow_path, _ = scene
        zs = [np.zeros((32, 32, 5)), np.zeros((16, 16, 5))]
        for z in zs:
            z[:, :, 3] = 1.0
        zpath = tmp_path / "z.nxzf"
        write_zfield(zpath, zs)
        out = tmp_path / "o.flo"
        code = run(["inpaint", "--image", img_path, "--flow", flow_path,
                    "--density", "0.2", "--seed", 2, "--mode", "zfield",
                    "--zfield", zpath, "--levels", 2, "--out", out])
        assert code == 0
        assert read_flo(out).shape == (32, 32, 2)


class TestEval:
    def test_pair_mode(self, scene, tmp_path, capsys):
        _, flow_path, gt = scene
        est = tmp_path / "est.flo"
        write_flo(est, gt + 0.25)
        code = run(["eval", "--est", est, "--gt", flow_path])
        assert code == 0
        out = capsys.readouterr().out
        assert "epe=" in out and "fl=" in out
        epe_val = float(out.split()[0].split("=")[1])
        assert epe_val == pytest.approx(0.25 * np.sqrt(2), rel=1e-6)

    def test_sweep_writes_deterministic_csv(self, scene, tmp_path, capsys):
        img_path, flow_path, _ = scene
        csv1 = tmp_path / "r1.csv"
        csv2 = tmp_path / "r2.csv"
        flags = ["eval", "--image", img_path, "--gt-flow", flow_path,
                 "--densities", "0.1,0.3", "--seeds", "1,2", "--levels", 2,
                 "--lam", "0.02", "--tol", "1e-4"]
        assert run([*flags, "--csv", csv1]) == 0
        assert run([*flags, "--csv", csv2]) == 0
        assert csv1.read_bytes() == csv2.read_bytes()
        lines = csv1.read_text().strip().split("\n")
        assert lines[0] == "density,seed,epe,fl,n_pixels,scope"
        assert len(lines) == 5

    def test_pair_mode_needs_both_files(self, tmp_path, capsys):
        assert run(["eval", "--est", tmp_path / "x.flo"]) == 1

    def test_heldout_scope(self, scene, tmp_path, capsys):
        from nxflow import write_mask_png
        _, flow_path, gt = scene
        est = tmp_path / "est.flo"
        bad = gt.copy()
        bad[0, 0] += (3.0, 4.0)  # only one pixel wrong
        write_flo(est, bad)
        held = np.zeros((32, 32), dtype=bool)
        held[0, 0] = True
        held_path = tmp_path / "held.png"
        write_mask_png(held_path, held)
        code = run(["eval", "--est", est, "--gt", flow_path,
                    "--scope", "heldout", "--heldout-mask", held_path])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("epe=5.0 ")
        assert "n_pixels=1" in out

    def test_unknown_scope_requires_mask(self, scene, tmp_path, capsys):
        _, flow_path, _ = scene
        est = tmp_path / "est.flo"
        write_flo(est, read_flo(flow_path))
        assert run(["eval", "--est", est, "--gt", flow_path,
                    "--scope", "unknown"]) == 1

    def test_kitti_gt_scores_valid_pixels_only(self, tmp_path, capsys):
        from nxflow import write_kitti_png
        gt = np.zeros((8, 8, 2))
        gt[:, :, 0] = 2.0
        valid = np.zeros((8, 8), dtype=bool)
        valid[:4] = True
        gt_path = tmp_path / "gt.png"
        write_kitti_png(gt_path, gt * valid[:, :, None], valid)
        est = tmp_path / "est.flo"
        est_flow = np.zeros((8, 8, 2))
        est_flow[:, :, 0] = 2.5  # error 0.5 on valid rows
        write_flo(est, est_flow)
        code = run(["eval", "--est", est, "--gt", gt_path])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("epe=0.5 ")
        assert "n_pixels=32" in out


class TestFlowviz:
    def test_writes_png(self, scene, tmp_path, capsys):
        _, flow_path, _ = scene
        out = tmp_path / "viz.png"
        assert run(["flowviz", "--flow", flow_path, "--out", out]) == 0
        from nxflow import read_image
        img = read_image(out)
        assert img.shape == (32, 32, 3)


class TestGridsearch:
    def test_small_grid(self, scene, tmp_path, capsys):
        img_path, flow_path, _ = scene
        csv = tmp_path / "grid.csv"
        code = run(["gridsearch", "--image", img_path, "--gt-flow", flow_path,
                    "--density", "0.1", "--seeds", "1", "--lambda-min", "1e-3",
                    "--lambda-max", "1e-2", "--lambda-steps", 2,
                    "--alpha-min", "0.1", "--alpha-max", "0.4",
                    "--alpha-steps", 2, "--levels", 2, "--search-tol", "1e-3",
                    "--csv", csv])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("lambda=")
        assert len(csv.read_text().strip().split("\n")) == 5


class TestSelfcheck:
    def test_all_pass_with_jsonl(self, capsys):
        code = run(["selfcheck"])
        assert code == 0
        out = capsys.readouterr().out.strip().split("\n")
        human = [l for l in out if l.startswith("[")]
        jsonl = [l for l in out if l.startswith("{")]
        assert len(human) == 5 and len(jsonl) == 5
        for line in jsonl:
            rec = json.loads(line)
            assert rec["passed"] is True
            assert set(rec) == {"check", "passed", "max_error", "threshold"}

    def test_injected_large_tau_fails_stability(self, capsys):
        code = run(["selfcheck", "stability", "--tau", "10"])
        assert code == 3
        out = capsys.readouterr().out
        assert "[FAIL] stability" in out

    def test_subset_selection(self, capsys):
        code = run(["selfcheck", "equivalence", "adjoint"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 2


def test_full_workflow_chain(tmp_path, capsys):
    # genmask -> inpaint with the mask file -> flowviz -> eval on the unknowns
    image, gt = make_edge_fixture(32)
    img_path = tmp_path / "image.png"
    write_image(img_path, np.rint(image * 255).astype(np.uint8))
    gt_path = tmp_path / "gt.flo"
    write_flo(gt_path, gt)

    mask_path = tmp_path / "mask.png"
    assert run(["genmask", "--width", 32, "--height", 32, "--density", "0.15",
                "--seed", 4, "--out", mask_path]) == 0
    out_path = tmp_path / "dense.flo"
    viz_path = tmp_path / "dense.png"
    assert run(["inpaint", "--image", img_path, "--flow", gt_path,
                "--mask", mask_path, "--levels", 2, "--lam", "0.02",
                "--out", out_path, "--viz", viz_path]) == 0
    assert run(["flowviz", "--flow", out_path, "--out", tmp_path / "v2.png"]) == 0
    capsys.readouterr()
    assert run(["eval", "--est", out_path, "--gt", gt_path,
                "--scope", "unknown", "--mask", mask_path]) == 0
    out = capsys.readouterr().out
    assert out.startswith("epe=")
    assert "scope=unknown" in out
    assert float(out.split()[0].split("=")[1]) < 0.5


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "nxflow.cli", "genmask", "--width", "8",
         "--height", "8", "--density", "0.5", "--seed", "1",
         "--out", str(tmp_path / "m.png")],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "known=32" in proc.stdout

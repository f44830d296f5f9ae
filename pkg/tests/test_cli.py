import hashlib
import os
import sys

import numpy as np
import pytest

from synthbrain import Volume, read_nifti, write_nifti
from synthbrain.cli import main
from synthbrain.priors import parse_config, save_config

from conftest import sphere_label_map


def _checksums(directory):
    out = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as fh:
            out[name] = hashlib.sha256(fh.read()).hexdigest()
    return out


@pytest.fixture
def label_file(tmp_path):
    path = tmp_path / "labels.nii.gz"
    write_nifti(path, sphere_label_map(24))
    return str(path)


def test_generate_is_deterministic(tmp_path, label_file):
    out1 = tmp_path / "gen1"
    out2 = tmp_path / "gen2"
    for out in (out1, out2):
        code = main(["generate", "--labels", label_file, "--n", "2",
                     "--seed", "7", "--out", str(out)])
        assert code == 0
    assert _checksums(out1) == _checksums(out2)
    names = set(os.listdir(out1))
    assert {"0_image.nii.gz", "0_target.nii.gz", "0_meta.txt",
            "1_image.nii.gz", "1_target.nii.gz", "1_meta.txt"} == names


def test_generate_worker_count_invariance(tmp_path, label_file):
    seq = tmp_path / "seq"
    par = tmp_path / "par"
    assert main(["generate", "--labels", label_file, "--n", "4", "--seed", "3",
                 "--out", str(seq), "--workers", "1"]) == 0
    assert main(["generate", "--labels", label_file, "--n", "4", "--seed", "3",
                 "--out", str(par), "--workers", "4"]) == 0
    assert _checksums(seq) == _checksums(par)


def test_generate_s2_emits_conditioning(tmp_path, label_file):
    out = tmp_path / "s2"
    assert main(["generate", "--labels", label_file, "--n", "1", "--for", "s2",
                 "--seed", "1", "--out", str(out)]) == 0
    assert (out / "0_cond.nii.gz").exists()
    cond = read_nifti(out / "0_cond.nii.gz")
    assert np.abs(cond.data.sum(axis=0) - 1).max() < 1e-4


def test_degrade_cli(tmp_path, label_file):
    image = tmp_path / "img.nii.gz"
    rng = np.random.default_rng(0)
    write_nifti(image, Volume(rng.random((24, 24, 24)), (1, 1, 1)))
    out = tmp_path / "deg"
    assert main(["degrade", "--image", str(image), "--labels", label_file,
                 "--seed", "5", "--out", str(out)]) == 0
    assert (out / "degraded.nii.gz").exists()
    assert (out / "labels.nii.gz").exists()


def test_group_and_volumes_and_evaluate(tmp_path, label_file, capsys):
    grouped = tmp_path / "grouped.nii.gz"
    assert main(["group", "--in", label_file, "--out", str(grouped)]) == 0
    vol = read_nifti(grouped)
    assert vol.labels() <= {0, 1, 2, 3, 4}

    assert main(["evaluate", "--pred", str(grouped), "--gt", str(grouped)]) == 0
    out = capsys.readouterr().out
    assert "mean_dice=1.000000" in out

    csv_path = tmp_path / "vols.csv"
    assert main(["volumes", "--in", str(grouped), "--out", str(csv_path)]) == 0
    text = csv_path.read_text()
    assert text.startswith("label,name,volume_mm3")


def test_segment_variant_role_rules(tmp_path, label_file):
    grouped = tmp_path / "grouped.nii.gz"
    main(["group", "--in", label_file, "--out", str(grouped)])
    image = tmp_path / "img.nii.gz"
    write_nifti(image, Volume(np.zeros((24, 24, 24)), (1, 1, 1)))

    copy_cmd = (f"{sys.executable} -c "
                "'import shutil,sys; shutil.copy(sys.argv[1], sys.argv[2])' "
                "{input} {output}")
    # synthseg_plus without --d-cmd is a usage error (exit 1)
    code = main(["segment", "--variant", "synthseg_plus", "--in", str(image),
                 "--out", str(tmp_path / "seg.nii.gz"),
                 "--s1-cmd", copy_cmd, "--s2-cmd", copy_cmd])
    assert code == 1
    # cascade needs no --d-cmd; missing --s2-cmd is a usage error
    code = main(["segment", "--variant", "cascade", "--in", str(image),
                 "--out", str(tmp_path / "seg.nii.gz"), "--s1-cmd", copy_cmd])
    assert code == 1


def test_segment_runs_external_pipeline(tmp_path):
    # oracle-style external predictors backed by stored soft maps
    from synthbrain.labels import TISSUE_CLASS_IDS, default_taxonomy, to_soft
    from conftest import tissue_phantom

    tax = default_taxonomy()
    gt = tissue_phantom(16, radii=(4, 6, 8))
    tissues = to_soft(gt, TISSUE_CLASS_IDS)
    tissue_map = tmp_path / "tissues.nii.gz"
    write_nifti(tissue_map, tissues)
    final_lut = np.zeros(5, dtype=np.int32)
    final_lut[1], final_lut[2], final_lut[3] = 101, 102, 103
    final_gt = Volume(final_lut[gt.data], (1, 1, 1), "label")
    s2_map = tmp_path / "final.nii.gz"
    write_nifti(s2_map, to_soft(final_gt, tax.predicted_values))
    image = tmp_path / "img.nii.gz"
    write_nifti(image, Volume(gt.data / 4.0, (1, 1, 1)))

    def serve(stored, extra):
        return (f"{sys.executable} -c "
                "'import shutil,sys; shutil.copy(sys.argv[1], sys.argv[2])' "
                f"{stored} {{output}} {extra}")

    out = tmp_path / "seg.nii.gz"
    inter = tmp_path / "intermediates"
    code = main(["segment", "--variant", "cascade", "--in", str(image),
                 "--out", str(out),
                 "--s1-cmd", serve(tissue_map, "{input}"),
                 "--s2-cmd", serve(s2_map, "{input} {cond}"),
                 "--intermediates", str(inter)])
    assert code == 0
    final = read_nifti(out)
    assert final.dims == (16, 16, 16)
    np.testing.assert_array_equal(final.data, final_gt.data)
    assert (inter / "S1.nii.gz").exists()
    assert (inter / "S2.nii.gz").exists()


def test_segment_propagates_predictor_failure(tmp_path):
    image = tmp_path / "img.nii.gz"
    write_nifti(image, Volume(np.zeros((8, 8, 8)), (1, 1, 1)))
    boom = f"{sys.executable} -c 'import sys; sys.exit(2)' {{input}} {{output}}"
    code = main(["segment", "--variant", "synthseg", "--in", str(image),
                 "--out", str(tmp_path / "seg.nii.gz"), "--s-cmd", boom])
    assert code == 2


def test_fit_ageing_cli(tmp_path):
    rng = np.random.default_rng(0)
    n = 160
    ages = np.sort(rng.uniform(20, 90, n))
    ages[0], ages[-1] = 20.0, 90.0
    rows = ["subject,age,gender,sp_x,sp_y,sp_z,region,volume_mm3"]
    for i, a in enumerate(ages):
        sp = rng.uniform(0.5, 6.0, 3)
        g = int(rng.integers(0, 2))
        v = 4000 - 12 * (a - 20) + 30 * sp[0] - 10 * sp[1] + 5 * sp[2] + 80 * g
        rows.append(f"s{i},{a},{g},{sp[0]},{sp[1]},{sp[2]},102,{v}")
    csv_path = tmp_path / "vols.csv"
    csv_path.write_text("\n".join(rows) + "\n")
    prefix = tmp_path / "fit"
    code = main(["fit-ageing", "--csv", str(csv_path), "--region", "102",
                 "--lambda", "auto", "--out-prefix", str(prefix)])
    assert code == 0
    assert (tmp_path / "fit_coeffs.csv").exists()
    trajectory = (tmp_path / "fit_trajectory.csv").read_text().splitlines()
    assert trajectory[0] == "age,volume_gender0,volume_gender1"
    assert len(trajectory) == 201
    # fit-ageing on a missing region is a runtime error
    assert main(["fit-ageing", "--csv", str(csv_path), "--region", "999",
                 "--out-prefix", str(prefix)]) == 2


def test_usage_errors_and_help(tmp_path, capsys):
    assert main(["generate", "--bogus-flag"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err.lower()
    assert main(["--help"]) == 0
    assert main(["no-such-command"]) == 1


def test_runtime_error_exit_code(tmp_path):
    assert main(["evaluate", "--pred", "/nonexistent.nii", "--gt",
                 "/nonexistent.nii"]) == 2


def test_config_round_trip(tmp_path):
    path = tmp_path / "conf.txt"
    path.write_text("rotation=-5,5\nsigma_e=0,3\naxis_prob=0.25\n")
    config = parse_config(path)
    save_config(config, tmp_path / "conf2.txt")
    again = parse_config(tmp_path / "conf2.txt")
    assert config == again
    save_config(again, tmp_path / "conf3.txt")
    assert (tmp_path / "conf2.txt").read_text() == (tmp_path / "conf3.txt").read_text()


def test_generate_with_overrides(tmp_path, label_file):
    out = tmp_path / "gen"
    code = main(["generate", "--labels", label_file, "--n", "1", "--seed", "2",
                 "--out", str(out), "--override", "r_sp=1,2",
                 "--override", "sigma_e=0,0"])
    assert code == 0
    meta = (out / "0_meta.txt").read_text()
    assert "sigma_e=0.0" in meta

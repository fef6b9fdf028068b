import itertools
import json

import numpy as np
import pytest

from spillover import (
    DataValidationError,
    SimpleRandom,
    constant_spillover_model,
    dataset_from_matrices,
    load_dataset,
    save_dataset,
    simulate_dataset,
)
from spillover.cli import main
from spillover.io import text_table, write_coverage_csv


def write_csv(path, text):
    path.write_text(text.strip() + "\n", encoding="utf-8")
    return path


class TestLoadDataset:
    def test_three_row_single_group(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,treatment,outcome\n" "a,1,1.0\n" "a,0,0.0\n" "a,0,0.5",
        )
        ds = load_dataset(path)
        assert ds.n_groups == 1
        assert ds.size_summary() == {3: 1}

    def test_size_summary_mixed(self, tmp_path):
        rows = ["g1,1,1"] * 3 + ["g2,0,1"] * 3 + ["g3,1,0"] * 4
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,treatment,outcome\n" + "\n".join(rows),
        )
        assert load_dataset(path).size_summary() == {3: 2, 4: 1}

    def test_varying_saturation_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,treatment,outcome,saturation\n" "a,1,1.0,1\n" "a,0,0.0,0",
        )
        with pytest.raises(DataValidationError) as err:
            load_dataset(path)
        assert "saturation" in str(err.value)

    def test_non_binary_treatment_names_row(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,treatment,outcome\n" "a,1,1.0\n" "a,2,0.0",
        )
        with pytest.raises(DataValidationError) as err:
            load_dataset(path)
        assert "row 2" in str(err.value)
        assert "treatment" in str(err.value)

    def test_missing_outcome_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,treatment,outcome\n" "a,1,\n" "a,0,0.0",
        )
        with pytest.raises(DataValidationError) as err:
            load_dataset(path)
        assert "row 1" in str(err.value)

    def test_unknown_column_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,treatment,outcome,extra\n" "a,1,1.0,9",
        )
        with pytest.raises(DataValidationError):
            load_dataset(path)

    def test_group_size_guard(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,treatment,outcome,group_size\n"
            "a,1,1.0,3\n" "a,0,0.0,3\n" "a,0,0.5,3\n" "b,1,1.0,3\n" "b,0,0.2,3",
        )
        with pytest.raises(DataValidationError) as err:
            load_dataset(path)
        assert "group_size" in str(err.value)

    def test_reference_ids_resolved(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,unit_id,treatment,outcome,reference_ids\n"
            "a,u1,1,1.0,u2\n" "a,u2,0,0.0,u1;u3\n" "a,u3,1,0.5,",
        )
        ds = load_dataset(path)
        assert ds.reference_sets[0] == (1,)
        assert ds.reference_sets[1] == (0, 2)
        assert ds.reference_sets[2] == ()

    def test_unknown_reference_id_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,unit_id,treatment,outcome,reference_ids\n"
            "a,u1,1,1.0,zz\n" "a,u2,0,0.0,",
        )
        with pytest.raises(DataValidationError):
            load_dataset(path)

    def test_rank_must_be_permutation(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,treatment,outcome,neighbor_rank\n" "a,1,1.0,1\n" "a,0,0.0,3",
        )
        with pytest.raises(DataValidationError):
            load_dataset(path)


class TestTextHelpers:
    def test_table_alignment_deterministic(self):
        table = text_table(["a", "b"], [[1, 2.0], ["xx", None]])
        assert table == text_table(["a", "b"], [[1, 2.0], ["xx", None]])
        assert "NA" in table

    def test_coverage_csv_header(self, tmp_path):
        path = tmp_path / "c.csv"
        write_coverage_csv(
            [{"n": 2, "mechanism": "sr:p=0.5", "ci_kind": "normal", "coverage": 0.95}], path
        )
        lines = path.read_text().splitlines()
        assert lines[0] == "n,mechanism,ci_kind,coverage"
        assert lines[1] == "2,sr:p=0.5,normal,0.95"


@pytest.fixture
def fixture_csv(tmp_path):
    ds = simulate_dataset(
        SimpleRandom(0.5), constant_spillover_model(), n=2, n_groups=3000, seed=99
    )
    path = tmp_path / "sim.csv"
    save_dataset(ds, path)
    return path


class TestEstimateCommand:
    def test_simulated_fixture_recovers_effects(self, fixture_csv, tmp_path, capsys):
        out = tmp_path / "results"
        code = main(["estimate", str(fixture_csv), "--out", str(out)])
        assert code == 0
        capsys.readouterr()
        payload = json.loads((out / "estimate.json").read_text())
        effects = payload["strata"][0]["effects"]
        est = effects["spillover[0,2]"]["estimate"]
        se = effects["spillover[0,2]"]["se"]
        assert abs(est - 0.12) < 3 * se
        est1 = effects["spillover[1,2]"]["estimate"]
        se1 = effects["spillover[1,2]"]["se"]
        assert abs(est1 - 0.0) < 3 * se1

    def test_output_bytes_are_deterministic(self, fixture_csv, tmp_path, capsys):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["estimate", str(fixture_csv), "--out", str(out1)]) == 0
        first_stdout = capsys.readouterr().out
        assert main(["estimate", str(fixture_csv), "--out", str(out2)]) == 0
        second_stdout = capsys.readouterr().out
        assert (out1 / "estimate.json").read_bytes() == (out2 / "estimate.json").read_bytes()
        assert first_stdout.replace(str(out1), "") == second_stdout.replace(str(out2), "")

    def test_bootstrap_columns_present(self, fixture_csv, capsys):
        assert main(["estimate", str(fixture_csv), "--bootstrap", "50", "--seed", "4"]) == 0
        out = capsys.readouterr().out
        assert "boot_lower" in out

    def test_pp_flag_requires_saturation(self, fixture_csv, capsys):
        code = main(["estimate", str(fixture_csv), "--pp"])
        assert code == 2
        assert "saturation" in capsys.readouterr().err

    def test_undefined_everywhere_exit_code(self, tmp_path, capsys):
        # a single group with nobody treated: no contrast is estimable
        path = write_csv(
            tmp_path / "d.csv",
            "group_id,treatment,outcome\n" "a,0,1.0\n" "a,0,0.0\n" "a,0,0.5",
        )
        assert main(["estimate", str(path)]) == 3

    def test_n1_saturated_equals_exchangeable(self, tmp_path, capsys):
        rng = np.random.default_rng(5)
        D = rng.integers(0, 2, size=(40, 2))
        ds = dataset_from_matrices(D, rng.random((40, 2)), with_rank=True)
        path = tmp_path / "n1.csv"
        save_dataset(ds, path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["estimate", str(path), "--mode", "exchangeable", "--out", str(out_a)]) == 0
        assert main(["estimate", str(path), "--mode", "saturated", "--out", str(out_b)]) == 0
        cells_a = json.loads((out_a / "estimate.json").read_text())["strata"][0]["cells"]
        cells_b = json.loads((out_b / "estimate.json").read_text())["strata"][0]["cells"]
        stats_a = sorted((v["count"], v["mean"]) for v in cells_a.values())
        stats_b = sorted((v["count"], v["mean"]) for v in cells_b.values())
        assert stats_a == stats_b

    def test_policy_size_fe(self, tmp_path, capsys):
        rng = np.random.default_rng(6)
        rows = []
        for i in range(50):
            rows += [(f"t{i}", int(rng.random() < 0.5)) for _ in range(3)]
        for i in range(50):
            rows += [(f"f{i}", int(rng.random() < 0.5)) for _ in range(4)]
        path = write_csv(
            tmp_path / "m.csv",
            "group_id,treatment,outcome\n"
            + "\n".join(f"{g},{d},{rng.random():.3f}" for g, d in rows),
        )
        assert main(["estimate", str(path), "--policy", "size-fe"]) == 0
        assert "size_effect[3]" in capsys.readouterr().out


class TestDesignCommand:
    def test_large_groups_rank_fixed_margins_first(self, tmp_path, capsys):
        out = tmp_path / "design"
        code = main(["design", "--n", "11", "--G", "300", "sr:p=0.5", "2srfm", "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "design.json").read_text())
        assert payload["entries"][0]["mechanism"] == "2srfm"

    def test_small_groups_rank_bernoulli_first(self, capsys):
        assert main(["design", "--n", "2", "--G", "300", "sr:p=0.5", "2srfm"]) == 0
        out = capsys.readouterr().out
        first = [line for line in out.splitlines() if line.startswith("1 ")]
        assert first and "sr:p=0.5" in first[0]

    def test_cluster_warns_about_unidentified_cells(self, capsys):
        assert main(["design", "--n", "3", "--G", "100", "cluster:p=0.5"]) == 0
        assert "cannot identify" in capsys.readouterr().out

    def test_unknown_mechanism_usage_error(self, capsys):
        code = main(["design", "--n", "2", "--G", "100", "bogus:p=1"])
        assert code == 1
        assert "grammar" in capsys.readouterr().err


class TestSimulateCommand:
    def test_smoke_config_single_replication(self, tmp_path, capsys):
        cfg = tmp_path / "smoke.cfg"
        cfg.write_text(
            json.dumps(
                {
                    "G": 40,
                    "n": 2,
                    "mechanisms": ["sr:p=0.5"],
                    "replications": 1,
                    "ci_kinds": ["normal"],
                    "seed": 1,
                }
            )
        )
        out = tmp_path / "sim"
        assert main(["simulate", str(cfg), "--out", str(out)]) == 0
        studies = json.loads((out / "study.json").read_text())
        assert len(studies) == 1
        assert studies[0]["replications"] == 1
        lines = (out / "coverage.csv").read_text().splitlines()
        assert lines[0] == "n,mechanism,ci_kind,coverage"

    def test_bundled_preset_resolves(self, tmp_path, capsys):
        # the preset file is found by name; run a tiny override via seed flag
        from spillover.cli import _resolve_config_path
        from pathlib import Path

        resolved = _resolve_config_path(Path("table3.cfg"))
        assert resolved.exists()
        payload = json.loads(resolved.read_text())
        assert payload["mechanisms"] == ["sr:p=0.5", "2srfm"]
        assert payload["n"] == [2, 5, 8, 11]
        resolved_fig = _resolve_config_path(Path("figure1.cfg"))
        assert json.loads(resolved_fig.read_text())["G"] == 600

    def test_grid_output_shape(self, tmp_path, capsys):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text(
            json.dumps(
                {
                    "G": 50,
                    "n": [1, 2],
                    "mechanisms": ["sr:p=0.5", "2srfm"],
                    "replications": 5,
                    "bootstrap": {"B": 20},
                    "ci_kinds": ["normal", "bootstrap"],
                    "seed": 3,
                }
            )
        )
        out = tmp_path / "sim"
        assert main(["simulate", str(cfg), "--out", str(out)]) == 0
        lines = (out / "coverage.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 2 * 2
        studies = json.loads((out / "study.json").read_text())
        assert len(studies) == 4

    def test_missing_config_usage_error(self, capsys):
        assert main(["simulate", "nope.cfg"]) == 1

    def test_deterministic_outputs(self, tmp_path, capsys):
        cfg = tmp_path / "det.cfg"
        cfg.write_text(
            json.dumps(
                {"G": 30, "n": 2, "mechanisms": ["2srfm"], "replications": 4,
                 "ci_kinds": ["normal"], "seed": 11}
            )
        )
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert main(["simulate", str(cfg), "--out", str(out1)]) == 0
        assert main(["simulate", str(cfg), "--out", str(out2)]) == 0
        assert (out1 / "study.json").read_bytes() == (out2 / "study.json").read_bytes()
        assert (out1 / "coverage.csv").read_bytes() == (out2 / "coverage.csv").read_bytes()


class TestExchangeabilityCommand:
    def test_symmetric_data_p_value_one(self, tmp_path, capsys):
        vectors = np.array(list(itertools.product((0, 1), repeat=3)))
        D = np.vstack([vectors, vectors])
        Y = np.vstack([np.zeros_like(vectors), np.ones_like(vectors)]).astype(float)
        ds = dataset_from_matrices(D, Y, with_rank=True)
        path = tmp_path / "sym.csv"
        save_dataset(ds, path)
        assert main(["test-exchangeability", str(path)]) == 0
        out = capsys.readouterr().out
        assert "p-value 1" in out

    def test_rank_required(self, fixture_csv, tmp_path, capsys):
        ds = load_dataset(fixture_csv)
        stripped = dataset_from_matrices(
            ds.treatment.reshape(-1, 3), ds.outcome.reshape(-1, 3), with_rank=False
        )
        path = tmp_path / "norank.csv"
        save_dataset(stripped, path)
        assert main(["test-exchangeability", str(path)]) == 2

    def test_n1_not_testable(self, tmp_path, capsys):
        rng = np.random.default_rng(5)
        D = rng.integers(0, 2, size=(30, 2))
        ds = dataset_from_matrices(D, rng.random((30, 2)), with_rank=True)
        path = tmp_path / "n1.csv"
        save_dataset(ds, path)
        assert main(["test-exchangeability", str(path)]) == 0
        assert "not testable" in capsys.readouterr().out


class TestUsage:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 1

    def test_version_flag(self, capsys):
        assert main(["--version"]) == 0
        assert "spillover" in capsys.readouterr().out

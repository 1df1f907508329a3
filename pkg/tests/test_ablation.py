import pytest
import torch

from avtse.ablation import AblationScale, EXPECTED_RANKINGS, run_ablation


@pytest.fixture(scope="module")
def micro_scale():
    # smallest scale that exercises the full pipeline
    return AblationScale(
        train_count=6,
        eval_count=3,
        val_count=2,
        train_duration_s=0.3,
        eval_duration_s=0.3,
        epochs=2,
        validate_every=1,
        finetune_epochs=1,
        batch_size=3,
        seeds=(0,),
        scenarios=("S", "S_N"),
        d=8,
        d_audio=16,
        d_visual=12,
        k=8,
        r=1,
        recurrent_hidden=6,
        win=64,
        hop=32,
    )


@pytest.fixture(scope="module")
def table(micro_scale):
    return run_ablation("TABLE_V", scale=micro_scale)


class TestTableV:
    def test_emits_expected_rows(self, table):
        assert {r.label for r in table.rows} == {"AV_DPRNN", "S1", "S2", "S3", "S4", "SEANET"}

    def test_expected_ranking_attached(self, table):
        assert table.expected_ranking == EXPECTED_RANKINGS["TABLE_V"]
        assert isinstance(table.ordering_reproduced, bool)

    def test_params_monotone_with_structure(self, table):
        assert table.row("AV_DPRNN").params < table.row("SEANET").params
        assert table.row("S1").params == table.row("SEANET").params

    def test_render_and_dict(self, table):
        text = table.render_text()
        assert "SEANET" in text and "expected ranking" in text
        d = table.to_dict()
        assert len(d["rows"]) == 6 and d["suite"] == "TABLE_V"

    def test_same_seed_rerun_is_bit_identical(self, table, micro_scale):
        again = run_ablation("TABLE_V", scale=micro_scale)
        assert again.to_dict() == table.to_dict()


class TestOtherSuites:
    def test_beta_sweep_labels_zero_as_equivalent_weighting(self, micro_scale):
        table = run_ablation("BETA_SWEEP", scale=micro_scale)
        labels = [r.label for r in table.rows]
        assert any("beta=0.0" in lbl and "AV_DPRNN-equivalent" in lbl for lbl in labels)
        assert len(labels) == 5

    def test_mm_variants_fine_tune_from_base(self, micro_scale):
        table = run_ablation("MM_VARIANTS", scale=micro_scale)
        assert {r.label for r in table.rows} == {"SEANET", "F", "P", "A"}
        base = table.row("SEANET").params
        for mm in ("F", "P", "A"):
            assert table.row(mm).params > base

    def test_scenarios_suite_has_variant_scenario_rows(self, micro_scale):
        table = run_ablation("SCENARIOS", scale=micro_scale)
        labels = {r.label for r in table.rows}
        assert labels == {
            f"{v}/{s}" for v in ("AV_DPRNN", "SEANET") for s in ("S", "S_N")
        }

    def test_unknown_suite_rejected(self, micro_scale):
        with pytest.raises(ValueError, match="suite"):
            run_ablation("TABLE_VI", scale=micro_scale)

    def test_out_dir_artifacts(self, micro_scale, tmp_path):
        run_ablation("BETA_SWEEP", scale=micro_scale, out_dir=tmp_path)
        assert (tmp_path / "BETA_SWEEP.json").exists()
        assert (tmp_path / "BETA_SWEEP.txt").exists()

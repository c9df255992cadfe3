import pytest
from pydantic import ValidationError

from fsilab.config import Settings
from fsilab.models.geometry import DimMode
from fsilab.models.run_config import DEFAULT_SEED, DENSE_THRESHOLD, ExperimentKind, OutputFormat, RunConfig


def write(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text)
    return path


def test_defaults():
    config = RunConfig()
    assert config.geometry.dim_mode == DimMode.ANALOGUE2D
    assert config.geometry.n == 8
    assert config.physics.rho == 0.0
    assert config.experiment.kind == ExperimentKind.VALIDATE
    assert config.output.formats == [OutputFormat.JSON, OutputFormat.CSV]


def test_from_toml(tmp_path):
    path = write(
        tmp_path,
        """
[geometry]
dim_mode = "box3d"
n = 4

[physics]
rho = 0.5

[experiment]
kind = "lqr"
seed = 11

[experiment.control]
kind = "boundary_normal"
policy = "omega"
""",
    )
    config = RunConfig.from_toml(path)
    assert config.geometry.to_geometry().dim_mode == DimMode.BOX3D
    assert config.physics.rho == 0.5
    assert config.experiment.seed == 11
    assert config.experiment.control.policy.value == "omega"


@pytest.mark.parametrize(
    "text, field",
    [
        ("[physics]\nrho = -1.0\n", "rho"),
        ("[geometry]\nn = 1\n", "n"),
        ("[experiment]\nfit_window = [0.8, 0.2]\n", "fit_window"),
        ("[experiment]\neigen_k = \"some\"\n", "eigen_k"),
        ("[experiment]\ndt = 0.0\n", "dt"),
        ("[experiment]\nkind = \"train\"\n", "kind"),
        ("[experiment]\ndense_threshold = 0\n", "dense_threshold"),
    ],
)
def test_invalid_configs_rejected(tmp_path, text, field):
    with pytest.raises(ValidationError) as info:
        RunConfig.from_toml(write(tmp_path, text))
    assert field in str(info.value)


def test_numerical_knobs_come_from_toml(tmp_path):
    config = RunConfig.from_toml(write(tmp_path, "[experiment]\ndense_threshold = 40\nseed = 5\n"))
    assert config.experiment.dense_threshold == 40
    assert config.experiment.seed == 5
    assert RunConfig().experiment.seed == DEFAULT_SEED
    assert RunConfig().experiment.dense_threshold == DENSE_THRESHOLD


def test_environment_overrides_only_output_and_workers(monkeypatch, tmp_path):
    monkeypatch.setenv("FSILAB_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    monkeypatch.setenv("FSILAB_MAX_WORKERS", "3")
    monkeypatch.setenv("FSILAB_DENSE_THRESHOLD", "7")
    monkeypatch.setenv("FSILAB_DEFAULT_SEED", "7")
    monkeypatch.setenv("FSILAB_LOG_LEVEL", "DEBUG")
    loaded = Settings()
    assert loaded.output_dir == tmp_path / "elsewhere"
    assert loaded.max_workers == 3
    assert set(Settings.model_fields) == {"output_dir", "max_workers"}
    assert RunConfig().experiment.dense_threshold == DENSE_THRESHOLD
    assert RunConfig().experiment.seed == DEFAULT_SEED

import logging
import math
from pathlib import Path

import pytest

from ckn_lab.ckn_lab import EXIT_FAILED, EXIT_PASS, EXIT_USAGE, list_experiments, main, run
from ckn_lab.core.inequality_lab import RatioSample
from ckn_lab.errors import InvalidConfig, UnknownExperiment
from ckn_lab.experiments import inequalities
from ckn_lab.experiments.config import load_config, parse_config
from ckn_lab.experiments.golden import compare_golden, freeze_or_compare, golden_path, read_golden
from ckn_lab.experiments.registry import EXPERIMENTS, get_experiment
from ckn_lab.experiments.reports import ReportWriter, fmt
from ckn_lab.experiments.solver import observed_orders, order_check

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def _write_config(tmp_path: Path, name: str, lines: list[str]) -> Path:
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.mark.parametrize(
    "text, key",
    [
        ("experiment=doubling\nparams.N=three", "params.N"),
        ("experiment=doubling\nparams.a=nan", "params.a"),
        ("experiment=doubling\ncolour=blue", "colour"),
        ("params.N=3", "experiment"),
        ("experiment=doubling\ngrid.kind=hex", "grid.kind"),
        ("experiment=doubling\ngrid.spacing=cubic", "grid.spacing"),
        ("experiment=doubling\ngrid.n_cells=1", "grid.n_cells"),
        ("experiment=doubling\ngrid.r_min=2", "grid.r_max"),
        ("experiment=doubling\nsolver.tol=0", "solver.tol"),
        ("experiment=doubling\ntrials=0", "trials"),
        ("experiment=doubling\njust words", "just words"),
    ],
)
def test_parse_config_names_the_offending_key(text, key):
    with pytest.raises(InvalidConfig) as info:
        parse_config(text)
    assert info.value.key == key
    assert info.value.code == "invalid_config"


def test_parse_config_values_and_defaults(tmp_path):
    config = parse_config(
        "# header comment\nexperiment=ckn_suite  # trailing\nseed=5\nparams.a=0.25\noutput.dir=out\n",
        tmp_path,
    )
    assert config.experiment == "ckn_suite"
    assert config.seed == 5
    assert config.a == 0.25
    assert config.N == 3
    assert math.isinf(config.s)
    assert config.output_dir == tmp_path / "out"
    absolute = parse_config(f"experiment=ckn_suite\noutput.dir={tmp_path / 'abs'}", Path("/elsewhere"))
    assert absolute.output_dir == tmp_path / "abs"


def test_config_params_and_grid_errors():
    with pytest.raises(InvalidConfig) as info:
        parse_config("experiment=x\nparams.a=0.5").weight_params()
    assert info.value.key == "params"
    with pytest.raises(InvalidConfig) as info:
        parse_config("experiment=x\nparams.N=4\ngrid.kind=box").grid()
    assert info.value.key == "params.N"
    with pytest.raises(InvalidConfig) as info:
        parse_config("experiment=x\ngrid.spacing=geometric").grid()
    assert info.value.key == "grid"
    assert parse_config("experiment=x\ngrid.kind=box\ngrid.n_cells=4").grid().cells == (4, 4, 4)


def test_manifest_line():
    config = parse_config("experiment=doubling\nseed=3\nparams.a=0.25")
    assert config.manifest() == (
        "# manifest experiment=doubling N=3 a=0.25 b=0.0 s=inf grid=radial n_cells=128 "
        "levels=4 r_min=0.0 r_max=1.0 solver_tol=1e-10 seed=3"
    )


def test_load_config_missing_file(tmp_path):
    with pytest.raises(InvalidConfig) as info:
        load_config(tmp_path / "absent.cfg")
    assert info.value.key == "path"


def test_example_configs_parse():
    names = {e.name for e in EXPERIMENTS}
    paths = sorted(CONFIG_DIR.glob("*.cfg"))
    assert len(paths) == len(names)
    for path in paths:
        config = load_config(path)
        experiment = get_experiment(config.experiment)
        assert experiment.name == path.stem
        assert not experiment.randomized or config.seed is not None


@pytest.mark.parametrize(
    "value, text",
    [(True, "true"), (False, "false"), (None, "none"), (math.inf, "inf"), (-math.inf, "-inf"), (0.1, "0.1"), (1.0 / 3.0, "0.333333333333"), (7, "7")],
)
def test_fmt(value, text):
    assert fmt(value) == text


def test_report_writer_heads_files_with_the_manifest(tmp_path):
    config = parse_config("experiment=doubling\nseed=1\noutput.dir=reports", tmp_path)
    writer = ReportWriter(config)
    table = writer.table("t.csv", ["x", "ok"], [(0.5, True), (math.inf, False)])
    summary = writer.summary("s.txt", {"max": 2.0, "pass": True})
    assert table.read_text().splitlines() == [config.manifest(), "x,ok", "0.5,true", "inf,false"]
    assert summary.read_text().splitlines() == [config.manifest(), "max: 2", "pass: true"]
    assert writer.written == [table, summary]


def test_list_experiments():
    listing = list_experiments().splitlines()
    assert len(listing) == len(EXPERIMENTS) == 14
    assert listing[0].startswith("measure_identities")
    assert [line.split()[0] for line in listing] == [e.name for e in EXPERIMENTS]
    doubling = next(line for line in listing if line.startswith("doubling "))
    assert doubling.endswith("[seeded]")
    with pytest.raises(UnknownExperiment):
        get_experiment("nope")


def test_run_rejects_missing_seed(tmp_path, caplog):
    path = _write_config(tmp_path, "doubling.cfg", ["experiment=doubling", "output.dir=out"])
    with caplog.at_level(logging.ERROR, logger="experiment"):
        assert run(str(path)) == EXIT_USAGE
    assert "seed" in caplog.text
    assert not (tmp_path / "out").exists()


def test_run_rejects_unknown_experiment_and_missing_file(tmp_path):
    path = _write_config(tmp_path, "bad.cfg", ["experiment=warp_drive"])
    assert run(str(path)) == EXIT_USAGE
    assert run(str(tmp_path / "absent.cfg")) == EXIT_USAGE


def test_run_config_error_inside_an_experiment(tmp_path):
    path = _write_config(
        tmp_path,
        "hr.cfg",
        ["experiment=harmonic_replacement", "seed=1", "grid.r_min=0.5", "output.dir=out"],
    )
    assert run(str(path)) == EXIT_USAGE


def test_run_measure_identities(tmp_path):
    path = _write_config(tmp_path, "m.cfg", ["experiment=measure_identities", "output.dir=out"])
    assert run(str(path)) == EXIT_PASS
    lines = (tmp_path / "out" / "measure_report.csv").read_text().splitlines()
    assert lines[0].startswith("# manifest experiment=measure_identities ")
    assert lines[1] == "check,N,a,radius,computed,expected,rel_error,pass"
    assert all(line.endswith(",true") for line in lines[2:])


def test_seeded_reports_are_byte_identical(tmp_path):
    outputs = []
    for run_dir in ("first", "second"):
        path = _write_config(
            tmp_path,
            f"{run_dir}.cfg",
            ["experiment=exponent_algebra", "seed=3", "trials=200", f"output.dir={run_dir}"],
        )
        assert run(str(path)) == EXIT_PASS
        outputs.append((tmp_path / run_dir / "exponent_report.csv").read_bytes())
    assert outputs[0] == outputs[1]
    assert b"identity_defect[200]" in outputs[0]


def test_main_exit_codes(tmp_path, capsys):
    assert main(["list"]) == EXIT_PASS
    assert "lemma_a2_property" in capsys.readouterr().out
    assert main(["launch"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["--help"]) == EXIT_PASS
    path = _write_config(tmp_path, "e.cfg", ["experiment=exponent_algebra", "trials=50", "output.dir=out"])
    assert main(["run", str(path)]) == EXIT_PASS
    assert EXIT_FAILED == 2


def test_golden_dir_resolves_against_the_config_file(tmp_path):
    path = _write_config(tmp_path, "g.cfg", ["experiment=ckn_suite", "seed=1", "golden.dir=golden"])
    config = load_config(path)
    assert config.golden_dir == tmp_path / "golden"
    assert golden_path(config) == tmp_path / "golden" / "ckn_suite.csv"
    assert golden_path(parse_config("experiment=ckn_suite")) is None


def test_compare_golden_reports_each_difference():
    reference = {"c": "1.5", "branch": "unit", "ok": "true", "gone": "2"}
    assert compare_golden(reference, {"c": 1.5 * (1 + 1e-9), "branch": "unit", "ok": True, "gone": 2}, 1e-6) == []
    mismatches = compare_golden(reference, {"c": 1.6, "branch": "harmonic_exponent", "ok": False, "new": 1.0}, 1e-6)
    assert mismatches == [
        "c=1.6 recorded 1.5",
        "branch=harmonic_exponent recorded unit",
        "ok=false recorded true",
        "new not recorded",
        "gone no longer produced",
    ]


def test_failed_run_never_freezes_a_record(tmp_path):
    config = parse_config("experiment=ckn_suite\nseed=1\ngolden.dir=golden", tmp_path)
    check = freeze_or_compare(config, {"empirical_constant": 3.0}, 0.02, verified=False)
    assert not check.passed
    assert check.status == "mismatch"
    assert not golden_path(config).exists()
    check = freeze_or_compare(config, {"empirical_constant": 3.0}, 0.02, verified=True)
    assert check.status == "recorded"
    assert read_golden(golden_path(config)) == {"empirical_constant": "3"}
    assert golden_path(config).read_text().splitlines()[0] == config.manifest()
    assert freeze_or_compare(config, {"empirical_constant": 3.05}, 0.02, verified=True).status == "matched"
    assert freeze_or_compare(config, {"empirical_constant": 3.1}, 0.02, verified=True).status == "mismatch"


def test_unreadable_golden_record_is_a_config_error(tmp_path):
    config = parse_config("experiment=ckn_suite\nseed=1\ngolden.dir=golden", tmp_path)
    golden_path(config).parent.mkdir()
    golden_path(config).write_text("empirical_constant;3\n")
    with pytest.raises(InvalidConfig) as info:
        read_golden(golden_path(config))
    assert info.value.key == "golden.dir"


@pytest.fixture
def fixed_ckn_suite(monkeypatch):
    def fake(params, grid, seed, count=50):
        samples = [RatioSample.of(float(k), 4.0, f"field{k}") for k in range(1, 5)]
        return samples, 1.0

    monkeypatch.setattr(inequalities, "ckn_suite", fake)


def _summary(path: Path) -> dict[str, str]:
    return dict(line.split(": ", 1) for line in path.read_text().splitlines()[1:])


def test_ckn_suite_freezes_then_checks_its_constant(tmp_path, fixed_ckn_suite):
    path = _write_config(tmp_path, "ckn.cfg", ["experiment=ckn_suite", "seed=5", "params.a=0.2", "params.b=0.5", "output.dir=out", "golden.dir=golden"])
    record = tmp_path / "golden" / "ckn_suite.csv"

    assert run(str(path)) == EXIT_PASS
    assert read_golden(record) == {"empirical_constant": "1"}
    assert _summary(tmp_path / "out" / "ckn_summary.txt")["golden"] == "recorded"

    assert run(str(path)) == EXIT_PASS
    assert _summary(tmp_path / "out" / "ckn_summary.txt")["golden"] == "matched"

    lines = record.read_text().splitlines()
    record.write_text("\n".join(lines[:2] + ["empirical_constant,0.5"]) + "\n")
    assert run(str(path)) == EXIT_FAILED
    summary = _summary(tmp_path / "out" / "ckn_summary.txt")
    assert summary["golden"] == "mismatch"
    assert summary["frozen_constant"] == "0.5"
    assert summary["violations"] == "4"
    assert summary["pass"] == "false"


def test_ckn_suite_without_golden_dir(tmp_path, fixed_ckn_suite):
    path = _write_config(tmp_path, "ckn.cfg", ["experiment=ckn_suite", "seed=5", "params.a=0.2", "params.b=0.5", "output.dir=out"])
    assert run(str(path)) == EXIT_PASS
    assert _summary(tmp_path / "out" / "ckn_summary.txt")["golden"] == "off"
    assert not (tmp_path / "golden").exists()


def test_order_check():
    def check(errors):
        return order_check(errors, observed_orders(errors))

    assert check([4e-4, 1e-4, 2.5e-5, 6.25e-6])
    assert not check([4e-4, 2e-4, 1e-4, 5e-5])
    assert not check([4e-2, 1e-2, 2.5e-3])
    assert check([3e-13, 5e-13, 8e-13])
    assert not check([1e-4, 1e-5])

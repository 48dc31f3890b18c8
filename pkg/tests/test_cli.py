import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from bifurcata import cli
from bifurcata.errors import ConfigError, ConfigSyntaxError, InvariantViolationError
from bifurcata.models import Classification

PITCHFORK = """
problem:
  kind: polynomial
  name: pitchfork
  terms:
    - [[0], [2, 0], 0.5]
    - [[1], [2, 0], -0.5]
    - [[0], [0, 2], 0.5]
    - [[0], [4, 0], 0.25]
lambda_range: [0.0, 2.0]
steps: 200
"""


def write_config(path, text, **outputs):
    lines = [text]
    if outputs:
        lines.append('outputs:')
        lines.extend(f'  {key}: {value}' for key, value in outputs.items())
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


def read_csv(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


@pytest.fixture(autouse=True)
def testing_env(monkeypatch):
    monkeypatch.setenv('BIFURCATA_ENV', 'testing')


def test_parse_defaults():
    config = cli.parse_config(PITCHFORK)

    assert config.problem.kind == 'polynomial'
    assert config.lambda_range == (0.0, 2.0)
    assert config.steps == 200
    assert config.lambda_star is None
    assert config.tolerances == cli.Tolerances()
    assert config.outputs.verbosity == 0
    assert config.settings_overrides() == {}


def test_parse_builtin_and_bvp():
    builtin = cli.parse_config('problem: {kind: builtin, name: transcritical}\nlambda_range: [0, 2]\n')
    bvp = cli.parse_config(
        'problem: {kind: bvp, m: 8, W_coeffs: [0, 0, 0.5], G_coeffs: [0, 0, 0.5, 0, -0.25]}\n'
        'lambda_range: [5, 15]\n'
    )

    assert cli.build_family(builtin.problem).name == 'transcritical'
    assert cli.build_family(bvp.problem).dim_state == 8


def test_degenerate_range():
    with pytest.raises(ConfigError, match='degenerate') as info:
        cli.parse_config(PITCHFORK.replace('[0.0, 2.0]', '[1.0, 1.0]'))

    assert info.value.field == 'lambda_range'


def test_reversed_range():
    with pytest.raises(ConfigError) as info:
        cli.parse_config(PITCHFORK.replace('[0.0, 2.0]', '[2.0, 0.0]'))

    assert info.value.field == 'lambda_range'


def test_negative_tolerance():
    with pytest.raises(ConfigError) as info:
        cli.parse_config(PITCHFORK + 'tolerances:\n  eps_null: -1.0e-8\n')

    assert info.value.field == 'tolerances.eps_null'


def test_string_float_tolerance():
    config = cli.parse_config(PITCHFORK + 'tolerances:\n  eps_null: 1e-8\n')

    assert config.tolerances.eps_null == 1e-8
    assert config.settings_overrides() == {'null_tol': 1e-8}


def test_syntax_error_has_position():
    with pytest.raises(ConfigSyntaxError) as info:
        cli.parse_config('problem:\n  kind: [builtin\nlambda_range: [0, 2]\n')

    assert info.value.line is not None
    assert info.value.column is not None
    assert 'line' in str(info.value)


def test_unknown_keys():
    with pytest.raises(ConfigError) as info:
        cli.parse_config(PITCHFORK + 'outputs:\n  plot: out.png\n')
    assert info.value.field == 'outputs.plot'

    with pytest.raises(ConfigError) as info:
        cli.parse_config(PITCHFORK + 'seed: 3\n')
    assert info.value.field == 'seed'


def test_multiparameter_needs_lambda_star():
    with pytest.raises(ConfigError) as info:
        cli.parse_config('problem: {kind: builtin, name: two_parameter}\nlambda_range: [0, 2]\n')
    assert info.value.field == 'lambda_star'

    with pytest.raises(ConfigError) as info:
        cli.parse_config('problem: {kind: builtin, name: two_parameter}\nlambda_star: [1, 1, 1]\n')
    assert info.value.field == 'lambda_star'


def test_missing_range_without_lambda_star():
    with pytest.raises(ConfigError) as info:
        cli.parse_config('problem: {kind: builtin, name: pitchfork}\n')

    assert info.value.field == 'lambda_range'


def test_invalid_problem():
    with pytest.raises(ConfigError) as info:
        cli.parse_config('problem: {kind: builtin, name: saddle_node}\nlambda_range: [0, 2]\n')
    assert info.value.field == 'problem'

    with pytest.raises(ConfigError) as info:
        cli.parse_config(PITCHFORK.replace('[[0], [2, 0], 0.5]', '[[0], [1, 0], 0.5]'))
    assert info.value.field == 'problem'


def test_config_round_trip():
    texts = [
        PITCHFORK + 'tolerances:\n  eps_null: 1.0e-9\nclassification:\n  m: 4\n  rho: 0.5\n',
        'problem: {kind: builtin, name: two_parameter}\nlambda_star: [1, 1]\n',
        'problem: {kind: bvp, m: 6, W_coeffs: [0, 0, 0.5], G_coeffs: [0, 0, 0.5, 0, -0.25]}\n'
        'lambda_range: [5, 15]\nsteps: 120\noutputs: {report: out/bvp.json, verbosity: 1}\n',
    ]

    for text in texts:
        config = cli.parse_config(text)
        assert cli.parse_config(cli.serialize_config(config)) == config


def test_run_pitchfork(tmp_path):
    # branches on the right are +-sqrt(lam - 1)
    # -------------------------------------------------------------------------
    tol = 1e-8
    path = write_config(tmp_path / 'pitchfork.yaml', PITCHFORK,
                        report=tmp_path / 'out' / 'report.json', csv_dir=tmp_path / 'out')

    status = cli.main(['--config', str(path)])

    assert status == cli.EXIT_OK
    report = json.loads((tmp_path / 'out' / 'report.json').read_text())
    assert report['schema'] == cli.REPORT_SCHEMA
    assert len(report['findings']) == 1
    finding = report['findings'][0]
    assert finding['alternative'] == Classification.ONE_SIDED_TWO
    assert finding['lambda_star'][0] == pytest.approx(1.0, abs=1e-12)

    rows = read_csv(tmp_path / 'out' / 'branches_1.csv')
    assert rows[0] == ['lambda', 'branch_id', 'z_1', 'lifted_norm']
    assert len(rows) > 1
    for row in rows[1:]:
        lam, z = float(row[0]), float(row[2])
        assert lam > 1.0
        assert abs(abs(z) - np.sqrt(lam - 1.0)) < tol

    trajectory = read_csv(tmp_path / 'out' / 'trajectory.csv')
    assert trajectory[0] == ['lambda', 'eig_1', 'eig_2']
    assert len(trajectory) == 202
    assert (tmp_path / 'out' / 'crossing_1.csv').exists()


def test_zero_findings_still_writes_outputs(tmp_path):
    path = write_config(tmp_path / 'empty.yaml', PITCHFORK.replace('[0.0, 2.0]', '[2.0, 3.0]'),
                        report=tmp_path / 'out' / 'report.json', csv_dir=tmp_path / 'out')

    status = cli.main(['--config', str(path)])

    assert status == cli.EXIT_OK
    report = json.loads((tmp_path / 'out' / 'report.json').read_text())
    assert report['findings'] == []
    assert sorted(p.name for p in (tmp_path / 'out').iterdir()) == ['report.json', 'trajectory.csv']
    rows = read_csv(tmp_path / 'out' / 'trajectory.csv')
    assert all(len(row) == 3 for row in rows)


def test_malformed_config_writes_nothing(tmp_path):
    path = write_config(tmp_path / 'bad.yaml', PITCHFORK.replace('[0.0, 2.0]', '[1.0, 1.0]'),
                        report=tmp_path / 'out' / 'report.json', csv_dir=tmp_path / 'out')

    status = cli.main(['--config', str(path)])

    assert status == cli.EXIT_CONFIG
    assert not (tmp_path / 'out').exists()


def test_missing_config_file(tmp_path):
    assert cli.main(['--config', str(tmp_path / 'absent.yaml')]) == cli.EXIT_CONFIG


def test_report_is_deterministic(tmp_path):
    config = cli.parse_config(PITCHFORK)

    first, _ = cli.run(config)
    second, _ = cli.run(config)

    assert first.to_json(include_timing=False) == second.to_json(include_timing=False)
    assert cli.render_csv(first) == cli.render_csv(second)


def test_emit_csv(tmp_path):
    report, status = cli.run(cli.parse_config(PITCHFORK))

    written = cli.emit_csv(report, tmp_path / 'csv')

    assert status == cli.EXIT_OK
    assert [p.name for p in written] == ['branches_1.csv', 'crossing_1.csv', 'trajectory.csv']
    for target in written:
        assert target.read_text(encoding='utf-8') == cli.render_csv(report)[target.name]
    assert not list((tmp_path / 'csv').glob('*.tmp'))


def test_failed_rename_leaves_no_outputs(tmp_path, monkeypatch):
    report, _ = cli.run(cli.parse_config(PITCHFORK))
    real_replace = cli.os.replace
    calls = []

    def flaky_replace(source, target):
        calls.append(target)
        if len(calls) == 2:
            raise OSError('disk full')
        real_replace(source, target)

    monkeypatch.setattr(cli.os, 'replace', flaky_replace)

    with pytest.raises(OSError):
        cli.emit_csv(report, tmp_path / 'csv')

    assert len(calls) == 2
    assert list((tmp_path / 'csv').iterdir()) == []


def test_unwritable_output(tmp_path):
    blocker = tmp_path / 'blocker'
    blocker.write_text('not a directory')
    config = cli.parse_config(PITCHFORK)
    config = replace(config, outputs=cli.Outputs(report=str(tmp_path / 'ok' / 'report.json'),
                                                 csv_dir=str(blocker / 'csv')))

    report, status = cli.run(config)

    assert status == cli.EXIT_INVARIANT
    assert report is not None
    assert not (tmp_path / 'ok' / 'report.json').exists()


def test_invariant_violation_exit(monkeypatch):
    def violate(self, *args, **kwargs):
        raise InvariantViolationError('nullity 0 with a positive criterion')

    monkeypatch.setattr(cli.DetectorService, 'analyze', violate)

    report, status = cli.run(cli.parse_config(PITCHFORK))

    assert report is None
    assert status == cli.EXIT_INVARIANT


def test_command_line_overrides(tmp_path):
    path = write_config(tmp_path / 'pitchfork.yaml', PITCHFORK.replace('[0.0, 2.0]', '[2.0, 3.0]'))

    status = cli.main(['--config', str(path), '--report', str(tmp_path / 'r.json'), '--jobs', '2'])

    assert status == cli.EXIT_OK
    assert json.loads((tmp_path / 'r.json').read_text())['findings'] == []
    assert cli.main(['--config', str(path), '--jobs', '0']) == cli.EXIT_CONFIG

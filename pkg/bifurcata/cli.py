"""
Batch front door: read an analysis config, run the detector and write the
JSON report plus plot-ready CSV files.

Usage:
  python bifurcate.py --config problems/pitchfork.yaml [--report PATH]
                      [--csv-dir DIR] [--jobs K] [--verbose]

Exit status: 0 on success (also with zero findings), 2 on an invariant
violation or output failure, 3 on a config error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from bifurcata import TOOL_NAME, __version__, create_settings
from bifurcata.errors import (
    BifurcataError,
    ConfigError,
    ConfigSyntaxError,
    InvalidSpecError,
    InvariantViolationError,
)
from bifurcata.models import Settings
from bifurcata.services.detector import DetectorService, collect_warnings, eigenvalue_trajectory
from bifurcata.services.families import builtin_family, make_bvp_family, make_polynomial_family

logger = logging.getLogger(__name__)

REPORT_SCHEMA = 'bifurcata.report/1'
EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_CONFIG = 3

PROBLEM_KINDS = ('polynomial', 'bvp', 'builtin')
TOP_LEVEL_KEYS = ('problem', 'lambda_range', 'steps', 'lambda_star', 'tolerances', 'classification', 'outputs')


# ----------------------------- Config records -----------------------------

@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    name: str
    description: str = ''
    dim_state: int | None = None
    dim_param: int | None = None
    terms: tuple = ()
    m: int | None = None
    w_coeffs: tuple = ()
    g_coeffs: tuple = ()

    def to_dict(self):
        data = {'kind': self.kind, 'name': self.name}
        if self.description:
            data['description'] = self.description
        if self.kind == 'polynomial':
            if self.dim_state is not None:
                data['dim_state'] = self.dim_state
            if self.dim_param is not None:
                data['dim_param'] = self.dim_param
            data['terms'] = [[list(lam), list(u), coeff] for lam, u, coeff in self.terms]
        elif self.kind == 'bvp':
            data['m'] = self.m
            data['W_coeffs'] = list(self.w_coeffs)
            data['G_coeffs'] = list(self.g_coeffs)
        return data


@dataclass(frozen=True)
class Tolerances:
    eps_null: float | None = None
    tau_psi: float | None = None
    eps_track: float | None = None

    def to_dict(self):
        return {key: value for key, value in (
            ('eps_null', self.eps_null), ('tau_psi', self.tau_psi), ('eps_track', self.eps_track),
        ) if value is not None}


@dataclass(frozen=True)
class ClassificationConfig:
    delta: float | None = None
    rho: float | None = None
    m: int | None = None

    def to_dict(self):
        data = {}
        if self.m is not None:
            data['m'] = self.m
        if self.delta is not None:
            data['delta'] = self.delta
        if self.rho is not None:
            data['rho'] = self.rho
        return data


@dataclass(frozen=True)
class Outputs:
    report: str | None = None
    csv_dir: str | None = None
    verbosity: int = 0

    def to_dict(self):
        data = {'verbosity': self.verbosity}
        if self.report is not None:
            data['report'] = self.report
        if self.csv_dir is not None:
            data['csv_dir'] = self.csv_dir
        return data


@dataclass(frozen=True)
class AnalysisConfig:
    problem: ProblemSpec
    lambda_range: tuple | None = None
    steps: int = 200
    lambda_star: tuple | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    classification: ClassificationConfig = field(default_factory=ClassificationConfig)
    outputs: Outputs = field(default_factory=Outputs)

    def to_dict(self):
        data = {'problem': self.problem.to_dict()}
        if self.lambda_range is not None:
            data['lambda_range'] = list(self.lambda_range)
        data['steps'] = self.steps
        if self.lambda_star is not None:
            data['lambda_star'] = list(self.lambda_star)
        data['tolerances'] = self.tolerances.to_dict()
        data['classification'] = self.classification.to_dict()
        data['outputs'] = self.outputs.to_dict()
        return data

    def settings_overrides(self) -> dict:
        """Settings fields replaced by this config"""
        overrides = {}
        for key, value in (
            ('grid_m', self.classification.m),
            ('null_tol', self.tolerances.eps_null),
            ('psi_tol', self.tolerances.tau_psi),
            ('track_tol', self.tolerances.eps_track),
            ('delta', self.classification.delta),
            ('rho', self.classification.rho),
        ):
            if value is not None:
                overrides[key] = value
        return overrides


@dataclass
class AnalysisReport:
    config: AnalysisConfig
    findings: list
    warnings: list
    elapsed_seconds: float = 0.0
    trajectory: tuple | None = None
    tool: str = TOOL_NAME
    version: str = __version__

    def to_dict(self, include_timing=True):
        data = {
            'schema': REPORT_SCHEMA,
            'tool': self.tool,
            'version': self.version,
            'config': self.config.to_dict(),
            'findings': [finding.to_dict() for finding in self.findings],
            'warnings': list(self.warnings),
        }
        if include_timing:
            data['timing'] = {'elapsed_seconds': self.elapsed_seconds}
        return data

    def to_json(self, include_timing=True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True, allow_nan=False) + '\n'


# ----------------------------- Parsing -----------------------------

def _number(value, name: str, positive=False) -> float:
    # YAML 1.1 reads "1e-8" as a string
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be a number, got {value!r}", field=name)
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}", field=name)
    if not np.isfinite(number):
        raise ConfigError(f"{name} must be finite", field=name)
    if positive and not number > 0:
        raise ConfigError(f"{name} must be positive, got {number}", field=name)
    return number


def _integer(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}", field=name)
    if value < minimum:
        raise ConfigError(f"{name} must be at least {minimum}, got {value}", field=name)
    return value


def _mapping(value, name: str, allowed: tuple) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a mapping", field=name)
    unknown = sorted(set(value) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {name}.{unknown[0]}", field=f"{name}.{unknown[0]}")
    return value


def _vector(value, name: str) -> tuple:
    if isinstance(value, (int, float, str)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{name} must be a number or a list of numbers", field=name)
    return tuple(_number(item, name) for item in value)


def _parse_problem(data) -> ProblemSpec:
    data = _mapping(data, 'problem', (
        'kind', 'name', 'description', 'dim_state', 'dim_param', 'terms', 'm', 'W_coeffs', 'G_coeffs'))
    if not data:
        raise ConfigError("problem is required", field='problem')
    kind = data.get('kind')
    if kind not in PROBLEM_KINDS:
        raise ConfigError(f"problem.kind must be one of {', '.join(PROBLEM_KINDS)}, got {kind!r}", field='problem.kind')
    name = str(data.get('name', kind))
    description = str(data.get('description', ''))

    if kind == 'builtin':
        return ProblemSpec(kind=kind, name=name, description=description)
    if kind == 'bvp':
        return ProblemSpec(
            kind=kind,
            name=name,
            description=description,
            m=_integer(data.get('m'), 'problem.m', 2),
            w_coeffs=_vector(data.get('W_coeffs'), 'problem.W_coeffs'),
            g_coeffs=_vector(data.get('G_coeffs'), 'problem.G_coeffs'),
        )

    terms = data.get('terms')
    if not isinstance(terms, list) or not terms:
        raise ConfigError("problem.terms must be a non-empty list", field='problem.terms')
    parsed = []
    for position, term in enumerate(terms):
        label = f'problem.terms[{position}]'
        if not isinstance(term, list) or len(term) != 3:
            raise ConfigError(f"{label} must be [lambda_powers, u_powers, coefficient]", field=label)
        lam_powers, u_powers, coeff = term
        lam_powers = lam_powers if isinstance(lam_powers, list) else [lam_powers]
        u_powers = u_powers if isinstance(u_powers, list) else [u_powers]
        parsed.append((
            tuple(_integer(p, label, 0) for p in lam_powers),
            tuple(_integer(p, label, 0) for p in u_powers),
            _number(coeff, label),
        ))
    dim_state = data.get('dim_state')
    dim_param = data.get('dim_param')
    return ProblemSpec(
        kind=kind,
        name=name,
        description=description,
        dim_state=None if dim_state is None else _integer(dim_state, 'problem.dim_state', 1),
        dim_param=None if dim_param is None else _integer(dim_param, 'problem.dim_param', 1),
        terms=tuple(parsed),
    )


def build_family(problem: ProblemSpec):
    """
    Potential family described by a problem spec.

    Raises:
        InvalidSpecError: If the spec cannot define a valid family
    """
    if problem.kind == 'builtin':
        return builtin_family(problem.name)
    if problem.kind == 'bvp':
        return make_bvp_family(problem.m, list(problem.w_coeffs), list(problem.g_coeffs),
                               name=problem.name, description=problem.description)
    return make_polynomial_family(list(problem.terms), problem.dim_state, problem.dim_param,
                                  name=problem.name, description=problem.description)


def parse_config(text: str) -> AnalysisConfig:
    """
    Parse and validate an analysis config.

    Raises:
        ConfigSyntaxError: If the text is not well-formed YAML (with line and column)
        ConfigError: If a field is missing or invalid (naming the field)
    """
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        problem = getattr(e, 'problem', None) or str(e)
        if mark is not None:
            raise ConfigSyntaxError(f"malformed config: {problem}", line=mark.line + 1, column=mark.column + 1)
        raise ConfigSyntaxError(f"malformed config: {problem}")
    if not isinstance(document, dict):
        raise ConfigError("config must be a mapping")
    unknown = sorted(set(document) - set(TOP_LEVEL_KEYS))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]}", field=unknown[0])

    problem = _parse_problem(document.get('problem'))

    lambda_range = document.get('lambda_range')
    if lambda_range is not None:
        if not isinstance(lambda_range, list) or len(lambda_range) != 2:
            raise ConfigError("lambda_range must be [a, b]", field='lambda_range')
        a, b = (_number(value, 'lambda_range') for value in lambda_range)
        if a == b:
            raise ConfigError("lambda_range degenerate", field='lambda_range')
        if a > b:
            raise ConfigError(f"lambda_range reversed: {a} > {b}", field='lambda_range')
        lambda_range = (a, b)

    steps = _integer(document.get('steps', 200), 'steps', 2)
    lambda_star = document.get('lambda_star')
    if lambda_star is not None:
        lambda_star = _vector(lambda_star, 'lambda_star')

    tolerances = _mapping(document.get('tolerances'), 'tolerances', ('eps_null', 'tau_psi', 'eps_track'))
    tolerances = Tolerances(**{
        key: _number(value, f'tolerances.{key}', positive=True)
        for key, value in tolerances.items() if value is not None
    })

    classification = _mapping(document.get('classification'), 'classification', ('delta', 'rho', 'm'))
    classification = ClassificationConfig(
        delta=None if classification.get('delta') is None else _number(classification['delta'], 'classification.delta', True),
        rho=None if classification.get('rho') is None else _number(classification['rho'], 'classification.rho', True),
        m=None if classification.get('m') is None else _integer(classification['m'], 'classification.m', 1),
    )

    outputs = _mapping(document.get('outputs'), 'outputs', ('report', 'csv_dir', 'verbosity'))
    outputs = Outputs(
        report=None if outputs.get('report') is None else str(outputs['report']),
        csv_dir=None if outputs.get('csv_dir') is None else str(outputs['csv_dir']),
        verbosity=_integer(outputs.get('verbosity', 0), 'outputs.verbosity', 0),
    )

    try:
        family = build_family(problem)
    except InvalidSpecError as e:
        raise ConfigError(f"invalid problem: {str(e)}", field='problem')
    if lambda_star is not None and len(lambda_star) != family.dim_param:
        raise ConfigError(
            f"lambda_star has {len(lambda_star)} components, the family has {family.dim_param}", field='lambda_star')
    if lambda_star is None:
        if family.dim_param != 1:
            raise ConfigError("multiparameter problems need lambda_star", field='lambda_star')
        if lambda_range is None:
            raise ConfigError("lambda_range is required without lambda_star", field='lambda_range')

    return AnalysisConfig(
        problem=problem,
        lambda_range=lambda_range,
        steps=steps,
        lambda_star=lambda_star,
        tolerances=tolerances,
        classification=classification,
        outputs=outputs,
    )


def serialize_config(config: AnalysisConfig) -> str:
    """YAML text that parse_config reads back to an equal config"""
    return yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None)


# ----------------------------- Output -----------------------------

def _fmt(value) -> str:
    return '%.17g' % value


def _csv_text(header: list, rows: list) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def render_csv(report: AnalysisReport) -> dict:
    """
    CSV texts keyed by file name.

    trajectory.csv holds lambda and the eigenvalues of B_lam(0); branches_<i>.csv
    the nontrivial reduced critical points of finding i; crossing_<i>.csv the
    tracked 0-group at the crossing samples.
    """
    files = {}
    if report.trajectory is not None:
        grid, values = report.trajectory
        header = ['lambda'] + [f'eig_{k + 1}' for k in range(values.shape[1])]
        files['trajectory.csv'] = _csv_text(
            header, [[_fmt(lam)] + [_fmt(value) for value in row] for lam, row in zip(grid, values)])

    for index, finding in enumerate(report.findings, start=1):
        dim_param = len(finding.lam_star)
        lam_header = ['lambda'] if dim_param == 1 else [f'lambda_{j + 1}' for j in range(dim_param)]
        rows = []
        dim_kernel = finding.nullity
        for sample in finding.branches:
            dim_kernel = sample.points.shape[1]
            for branch_id, (point, norm) in enumerate(zip(sample.points, sample.lifted_norms)):
                rows.append([_fmt(value) for value in sample.lam] + [str(branch_id)]
                            + [_fmt(value) for value in point] + [_fmt(norm)])
        header = lam_header + ['branch_id'] + [f'z_{k + 1}' for k in range(dim_kernel)] + ['lifted_norm']
        files[f'branches_{index}.csv'] = _csv_text(header, rows)

        crossing = finding.criteria.get('thm3_5')
        samples = crossing.detail.get('samples') if crossing is not None else None
        if samples:
            width = max(len(sample['eig0']) for sample in samples)
            header = ['lambda', 'r'] + [f'eig0_{k + 1}' for k in range(width)]
            rows = [
                [_fmt(sample['lambda']), str(sample['r'])]
                + [_fmt(value) for value in sample['eig0']] + [''] * (width - len(sample['eig0']))
                for sample in samples
            ]
            files[f'crossing_{index}.csv'] = _csv_text(header, rows)
    return files


def _write_atomic(files: list):
    """
    Write (path, text) pairs through temp files in each target directory.

    Every temp file is written before the first rename. A failed rename
    removes the files already placed and the remaining temp files, so a
    failure leaves no partial output at the final paths.
    """
    temps = []
    try:
        for path, text in files:
            path.parent.mkdir(parents=True, exist_ok=True)
            handle, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
            temps.append(temp_name)
            with os.fdopen(handle, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
    except BaseException:
        for temp_name in temps:
            if os.path.exists(temp_name):
                os.unlink(temp_name)
        raise
    placed = []
    try:
        for (path, _), temp_name in zip(files, temps):
            os.replace(temp_name, path)
            placed.append(path)
    except OSError:
        for temp_name in temps[len(placed):]:
            if os.path.exists(temp_name):
                os.unlink(temp_name)
        for path in placed:
            path.unlink(missing_ok=True)
        raise


def emit_csv(report: AnalysisReport, path):
    """
    Write the CSV files of a report into a directory.

    Returns:
        list: written paths in name order

    Raises:
        OSError: If the directory is not writable
    """
    directory = Path(path)
    files = [(directory / name, text) for name, text in sorted(render_csv(report).items())]
    _write_atomic(files)
    written = [target for target, _ in files]
    logger.info(f"Wrote {len(written)} CSV file(s) to {directory}")
    return written


# ----------------------------- Run -----------------------------

def run(config: AnalysisConfig, settings: Settings | None = None):
    """
    Sweep, evaluate criteria, classify and write every configured output.

    Returns:
        tuple: (AnalysisReport or None, exit status)
    """
    started = time.perf_counter()
    settings = replace(settings or Settings(), **config.settings_overrides())
    try:
        family = build_family(config.problem)
    except InvalidSpecError as e:
        logger.error(f"Invalid problem: {str(e)}")
        return None, EXIT_CONFIG

    service = DetectorService(settings)
    try:
        findings = service.analyze(family, config.lambda_range, config.steps, config.lambda_star)
        trajectory = None
        if config.lambda_range is not None:
            trajectory = eigenvalue_trajectory(family, config.lambda_range, config.steps, config.lambda_star)
    except InvariantViolationError as e:
        logger.error(f"Invariant violation: {str(e)}")
        return None, EXIT_INVARIANT
    except BifurcataError as e:
        logger.error(f"Analysis failed: {str(e)}")
        return None, EXIT_INVARIANT

    report = AnalysisReport(
        config=config,
        findings=findings,
        warnings=collect_warnings(findings),
        elapsed_seconds=time.perf_counter() - started,
        trajectory=trajectory,
    )

    # Stage every text before touching the final paths
    staged = []
    if config.outputs.report is not None:
        staged.append((Path(config.outputs.report), report.to_json()))
    if config.outputs.csv_dir is not None:
        directory = Path(config.outputs.csv_dir)
        staged.extend((directory / name, text) for name, text in sorted(render_csv(report).items()))
    try:
        _write_atomic(staged)
    except OSError as e:
        logger.error(f"Could not write outputs: {str(e)}")
        return report, EXIT_INVARIANT

    logger.info(f"{family.name}: {len(findings)} finding(s) in {report.elapsed_seconds:.2f}s")
    return report, EXIT_OK


def _configure_logging(verbosity: int):
    logger_root = logging.getLogger(TOOL_NAME)
    logger_root.setLevel(logging.DEBUG if verbosity > 1 else logging.INFO)
    if not logger_root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
        logger_root.addHandler(handler)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="Detect and classify bifurcations of potential families")
    parser.add_argument('--config', required=True, help="analysis config (YAML)")
    parser.add_argument('--report', help="JSON report path (overrides outputs.report)")
    parser.add_argument('--csv-dir', help="CSV directory (overrides outputs.csv_dir)")
    parser.add_argument('--jobs', type=int, help="worker threads for per-candidate analysis")
    parser.add_argument('--verbose', action='count', default=0, help="log progress (twice for debug)")
    args = parser.parse_args(argv)

    try:
        config = parse_config(Path(args.config).read_text(encoding='utf-8'))
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs is not None and args.jobs < 1:
        print("config error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG

    outputs = replace(
        config.outputs,
        report=args.report if args.report is not None else config.outputs.report,
        csv_dir=args.csv_dir if args.csv_dir is not None else config.outputs.csv_dir,
        verbosity=max(config.outputs.verbosity, args.verbose),
    )
    config = replace(config, outputs=outputs)
    if outputs.verbosity:
        _configure_logging(outputs.verbosity)

    settings = create_settings()
    if args.jobs is not None:
        settings = replace(settings, jobs=args.jobs)

    report, status = run(config, settings)
    if report is not None:
        for finding in report.findings:
            lam = ', '.join(f'{value:.10g}' for value in finding.lam_star)
            print(f"lambda* = ({lam})  nullity {finding.nullity}  {finding.alternative}")
        for warning in report.warnings:
            print(f"warning: {warning}", file=sys.stderr)
    return status


if __name__ == '__main__':
    sys.exit(main())
